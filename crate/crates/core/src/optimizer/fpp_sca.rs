use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::barrier::{solve_convex_subproblem, BarrierOptions, ConvexProblem, ConvexQuadratic};
use super::qcqp::{assemble_qcqp, QcqpProblem};
use super::split::split_indefinite;
use crate::analytic::{Policy, Scheme};
use crate::channel::LinkProbabilities;
use crate::error::{Error, Result};

/// Optimiser knobs, serialised under the scenario's `optimizer` block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Stop once `‖y_{k+1} − y_k‖∞` drops below this.
    pub tolerance: f64,
    pub max_iters: usize,
    pub slack_penalty: f64,
    pub oracle_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iters: 100, slack_penalty: 1e4, oracle_step: 0.02 }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iters == 0 || !(self.slack_penalty > 0.0) {
            return Err(Error::Config("optimizer tolerance, max_iters and slack_penalty must be positive".into()));
        }
        if !(self.oracle_step > 0.0 && self.oracle_step <= 0.5) {
            return Err(Error::Config(format!("oracle_step {} outside (0, 0.5]", self.oracle_step)));
        }
        Ok(())
    }
}

/// Initial action fill levels tried by [`optimize`]; slow SCA progress from one
/// end of the action box is common.
const START_FILLS: [f64; 3] = [0.0, 0.5, 1.0];

/// Fraction of the way from the previous iterate to the interior start at
/// which each subproblem begins.
const WARM_START_SHRINK: f64 = 0.01;

/// Slacks below this count as zero.
pub const SLACK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    /// Zero slack but the iterate was still moving at `max_iters`.
    IterationLimit,
    /// Slacks never reached zero.
    Infeasible,
    /// Closed-form answer, no iterations needed.
    ClosedForm,
    /// A convex subproblem could not be solved.
    Failed,
}

impl SolverStatus {
    pub fn is_success(self) -> bool {
        !matches!(self, SolverStatus::Infeasible | SolverStatus::Failed)
    }

    pub fn label(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::IterationLimit => "iteration_limit",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::ClosedForm => "closed_form",
            SolverStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaIterate {
    /// `objective · z` of the subproblem solution (without slack penalty).
    pub objective: f64,
    pub max_slack: f64,
    pub step: f64,
    pub kkt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaDiagnostics {
    pub status: SolverStatus,
    pub iterations: usize,
    pub history: Vec<ScaIterate>,
    /// `min_i (λ_s^i(β) − λ_i)` from substituting the QCQP point.
    pub substitution_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizedPolicy {
    pub policy: Policy<f64>,
    /// `min(μ_i, μ_{u_i})` at the returned actions.
    pub lambda_s: Vec<f64>,
    /// `Σ x_i λ_s^i`
    pub objective: f64,
    pub diagnostics: ScaDiagnostics,
}

/// FPP-SCA state: the eigensplit of every nontrivial quadratic constraint.
#[derive(Debug, Clone)]
pub struct ScaState {
    pub y: DVector<f64>,
    pub split: Vec<(usize, DMatrix<f64>, DMatrix<f64>)>,
    pub iteration: usize,
    pub history: Vec<ScaIterate>,
}

impl ScaState {
    pub fn new(problem: &QcqpProblem) -> Result<Self> {
        let split = problem
            .relay
            .iter()
            .enumerate()
            .filter(|(_, q)| !q.is_trivial())
            .map(|(i, q)| split_indefinite(&q.a).map(|(p, n)| (i, p, n)))
            .collect::<Result<_>>()?;
        Ok(Self { y: DVector::zeros(problem.dim()), split, iteration: 0, history: Vec::new() })
    }
}

/// Interior start shared by every subproblem.
fn interior_start(problem: &QcqpProblem) -> DVector<f64> {
    let m = problem.num_sources();
    let nb = problem.action_dim();
    let mut z = DVector::zeros(problem.dim());
    for k in 0..nb {
        if problem.upper[k] > 0.0 {
            z[k] = 0.25 / m as f64;
        }
    }
    let beta: Vec<f64> = z.iter().take(nb).copied().collect();
    for i in 0..m {
        if problem.upper[nb + i] > 0.0 {
            z[nb + i] = 0.5 * problem.rates.sources[i].mu.eval(&beta);
        }
    }
    z
}

/// Throughput variables whose service rate cannot be made positive are pinned to zero.
fn pin_dead_sources(problem: &mut QcqpProblem) {
    let start = interior_start(problem);
    let nb = problem.action_dim();
    for i in 0..problem.num_sources() {
        if problem.upper[nb + i] > 0.0 && !(start[nb + i] > 1e-12) {
            problem.upper[nb + i] = 0.0;
        }
    }
}

fn convexified(problem: &QcqpProblem, state: &ScaState, penalty: f64) -> (ConvexProblem, DVector<f64>) {
    let n = problem.dim();
    let ns = state.split.len();
    let total = n + ns;
    let mut cost = DVector::zeros(total);
    cost.rows_mut(0, n).copy_from(&problem.objective);
    cost.rows_mut(n, ns).fill(penalty);
    let mut lower: Vec<f64> = problem.lower.iter().copied().collect();
    let mut upper: Vec<f64> = problem.upper.iter().copied().collect();
    lower.extend(std::iter::repeat(0.0).take(ns));
    upper.extend(std::iter::repeat(f64::INFINITY).take(ns));
    let pad = |v: &DVector<f64>| {
        let mut out = DVector::zeros(total);
        out.rows_mut(0, n).copy_from(v);
        out
    };
    let linear = problem.row_sums.iter().chain(&problem.service).map(|c| (pad(&c.a), c.b)).collect();
    let y = &state.y;
    let quadratic = state
        .split
        .iter()
        .enumerate()
        .map(|(s, (i, plus, minus))| {
            let q = &problem.relay[*i];
            let mut p = DMatrix::zeros(total, total);
            p.view_mut((0, 0), (n, n)).copy_from(plus);
            let mut lin = pad(&(&q.c + minus * y * 2.0));
            lin[n + s] = -1.0;
            let r = q.d - (y.transpose() * minus * y)[(0, 0)];
            ConvexQuadratic { p, q: lin, r }
        })
        .collect::<Vec<_>>();
    let mut start = DVector::zeros(total);
    // previous iterate pulled slightly towards a strictly interior point
    let z0 = y + (interior_start(problem) - y) * WARM_START_SHRINK;
    start.rows_mut(0, n).copy_from(&z0);
    for (s, c) in quadratic.iter().enumerate() {
        let val = (z0.transpose() * c.p.view((0, 0), (n, n)) * &z0)[(0, 0)] + c.q.rows(0, n).dot(&z0) + c.r;
        start[n + s] = val.max(0.0) + 1.0;
    }
    (ConvexProblem { cost, quadratic, linear, lower, upper }, start)
}

/// Runs the feasible-point-pursuit successive convex approximation from `y₀ = 0`.
pub fn fpp_sca(problem: &QcqpProblem, opts: &OptimizerOptions) -> Result<OptimizedPolicy> {
    fpp_sca_from(problem, opts, 0.0)
}

/// As [`fpp_sca`], starting with every free action entry at `fill / M`.
pub fn fpp_sca_from(problem: &QcqpProblem, opts: &OptimizerOptions, fill: f64) -> Result<OptimizedPolicy> {
    opts.validate()?;
    let mut problem = problem.clone();
    pin_dead_sources(&mut problem);
    let mut state = ScaState::new(&problem)?;
    let m = problem.num_sources();
    for k in 0..problem.action_dim() {
        if problem.upper[k] > 0.0 {
            state.y[k] = (fill / m as f64).min(problem.upper[k]);
        }
    }
    let n = problem.dim();
    let barrier = BarrierOptions::default();
    let mut status = SolverStatus::IterationLimit;
    let mut z = state.y.clone();
    let mut max_slack = f64::INFINITY;
    while state.iteration < opts.max_iters {
        let (cvx, start) = convexified(&problem, &state, opts.slack_penalty);
        let sol = solve_convex_subproblem(&cvx, &start, &barrier)
            .map_err(|e| Error::Solver(format!("subproblem {}: {e}", state.iteration + 1)))?;
        z = sol.x.rows(0, n).into_owned();
        max_slack = sol.x.rows(n, state.split.len()).iter().fold(0.0f64, |a, &s| a.max(s));
        let step = (&z - &state.y).amax();
        state.history.push(ScaIterate {
            objective: problem.objective.dot(&z),
            max_slack,
            step,
            kkt: sol.residuals.max(),
        });
        state.y = z.clone();
        state.iteration += 1;
        if step < opts.tolerance {
            status = SolverStatus::Converged;
            break;
        }
    }
    if max_slack >= SLACK_TOL {
        status = SolverStatus::Infeasible;
    }
    finish(&problem, &z, status, state.iteration, state.history)
}

/// Cleans the action block of `z` into a valid policy and re-evaluates the rates.
fn finish(
    problem: &QcqpProblem,
    z: &DVector<f64>,
    status: SolverStatus,
    iterations: usize,
    history: Vec<ScaIterate>,
) -> Result<OptimizedPolicy> {
    let m = problem.num_sources();
    let nb = problem.action_dim();
    let mut action: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| z[i * m + j].clamp(0.0, 1.0)).collect()).collect();
    for row in &mut action {
        let s: f64 = row.iter().sum();
        if s > 1.0 {
            row.iter_mut().for_each(|x| *x /= s);
        }
    }
    let flat: Vec<f64> = action.iter().flatten().copied().collect();
    let lambda_s = problem.rates.all_lambda_s(&flat);
    let substitution_slack =
        (0..m).map(|i| lambda_s[i] - z[nb + i]).fold(f64::INFINITY, f64::min);
    let objective = lambda_s.iter().zip(&problem.weights).map(|(l, x)| l * x).sum();
    let policy = Policy::new(problem.rates.scheme, action, problem.rates.w.clone())?;
    Ok(OptimizedPolicy {
        policy,
        lambda_s,
        objective,
        diagnostics: ScaDiagnostics { status, iterations, history, substitution_slack },
    })
}

/// Maximises `Σ x_i λ_s^i` over the action matrix for a fixed `w`.
///
/// CCMA has no free actions and is answered in closed form.
pub fn optimize(
    scheme: Scheme,
    links: &LinkProbabilities<f64>,
    w: &[f64],
    weights: &[f64],
    opts: &OptimizerOptions,
) -> Result<OptimizedPolicy> {
    let problem = assemble_qcqp(scheme, links, w, weights)?;
    if scheme == Scheme::Ccma {
        let policy = Policy::ccma(links, w.to_vec())?;
        let zero = vec![0.0; problem.action_dim()];
        let lambda_s = problem.rates.all_lambda_s(&zero);
        let objective = lambda_s.iter().zip(weights).map(|(l, x)| l * x).sum();
        return Ok(OptimizedPolicy {
            policy,
            lambda_s,
            objective,
            diagnostics: ScaDiagnostics {
                status: SolverStatus::ClosedForm,
                iterations: 0,
                history: Vec::new(),
                substitution_slack: 0.0,
            },
        });
    }
    let mut best: Option<OptimizedPolicy> = None;
    for fill in START_FILLS {
        let run = fpp_sca_from(&problem, opts, fill)?;
        let better = match &best {
            None => true,
            Some(b) => {
                let (ok, b_ok) = (run.diagnostics.status.is_success(), b.diagnostics.status.is_success());
                (ok && !b_ok) || (ok == b_ok && run.objective > b.objective + 1e-12)
            }
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}
