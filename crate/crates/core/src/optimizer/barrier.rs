//! Log-barrier interior-point method for small dense problems
//!
//! ```text
//! minimise    cost'x
//! subject to  x'P_k x + q_k'x + r_k ≤ 0    (P_k ⪰ 0)
//!             a_l'x ≤ b_l
//!             lower ≤ x ≤ upper
//! ```
//!
//! Coordinates with `lower == upper` are eliminated before the barrier runs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ConvexQuadratic {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvexProblem {
    pub cost: DVector<f64>,
    pub quadratic: Vec<ConvexQuadratic>,
    pub linear: Vec<(DVector<f64>, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierOptions {
    /// Stop once the duality-gap bound `m/t` falls below this.
    pub gap: f64,
    pub t0: f64,
    pub growth: f64,
    pub max_newton: usize,
    /// Bound on the scaled KKT residual accepted as converged.
    pub kkt_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { gap: 1e-6, t0: 1.0, growth: 10.0, max_newton: 200, kkt_tol: 1e-7 }
    }
}

/// Residuals of the KKT system at the returned point, with multipliers
/// `u_k = 1/(t·(−g_k))`. Stationarity is divided by `max(1, ‖cost‖∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    /// Residuals within `kkt_tol`.
    pub converged: bool,
    pub newton_steps: usize,
}

enum Cons {
    Lin { a: DVector<f64>, b: f64 },
    Quad { p: DMatrix<f64>, q: DVector<f64>, r: f64 },
}

impl Cons {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Cons::Lin { a, b } => a.dot(x) - b,
            Cons::Quad { p, q, r } => (x.transpose() * p * x)[(0, 0)] + q.dot(x) + r,
        }
    }

    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Cons::Lin { a, .. } => a.clone(),
            Cons::Quad { p, q, .. } => p * x * 2.0 + q,
        }
    }
}

struct Reduced {
    cost: DVector<f64>,
    cons: Vec<Cons>,
}

/// Substitutes fixed coordinates and turns finite bounds into linear rows.
/// Rows left constant by the substitution are dropped when satisfied.
fn reduce(pb: &ConvexProblem, free: &[usize], fixed: &DVector<f64>) -> Result<Reduced> {
    let nf = free.len();
    let pick = |v: &DVector<f64>| DVector::from_iterator(nf, free.iter().map(|&k| v[k]));
    let mut cons = Vec::new();
    let push_lin = |a: DVector<f64>, b: f64, cons: &mut Vec<Cons>| {
        if a.iter().any(|&x| x != 0.0) {
            cons.push(Cons::Lin { a, b });
            Ok(())
        } else if b >= 0.0 {
            Ok(())
        } else {
            Err(Error::Solver(format!("constant constraint violated by {:e}", -b)))
        }
    };
    for c in &pb.quadratic {
        let pf = DMatrix::from_fn(nf, nf, |i, j| c.p[(free[i], free[j])]);
        let cross = &c.p * fixed * 2.0;
        let q = pick(&c.q) + pick(&cross);
        let r = c.r + c.q.dot(fixed) + (fixed.transpose() * &c.p * fixed)[(0, 0)];
        if pf.iter().all(|&x| x == 0.0) {
            push_lin(q, -r, &mut cons)?;
        } else {
            cons.push(Cons::Quad { p: pf, q, r });
        }
    }
    for (a, b) in &pb.linear {
        push_lin(pick(a), b - a.dot(fixed), &mut cons)?;
    }
    for (i, &k) in free.iter().enumerate() {
        if pb.lower[k].is_finite() {
            let mut a = DVector::zeros(nf);
            a[i] = -1.0;
            cons.push(Cons::Lin { a, b: -pb.lower[k] });
        }
        if pb.upper[k].is_finite() {
            let mut a = DVector::zeros(nf);
            a[i] = 1.0;
            cons.push(Cons::Lin { a, b: pb.upper[k] });
        }
    }
    Ok(Reduced { cost: pick(&pb.cost), cons })
}

fn barrier_value(red: &Reduced, x: &DVector<f64>, t: f64) -> Option<f64> {
    let mut v = t * red.cost.dot(x);
    for c in &red.cons {
        let g = c.value(x);
        if !(g < 0.0) {
            return None;
        }
        v -= (-g).ln();
    }
    Some(v)
}

fn barrier_derivatives(red: &Reduced, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let nf = x.len();
    let mut grad = DVector::zeros(nf);
    let mut hess = DMatrix::zeros(nf, nf);
    for c in &red.cons {
        let g = c.value(x);
        let dg = c.grad(x);
        grad += &dg / (-g);
        hess.ger(1.0 / (g * g), &dg, &dg, 1.0);
        if let Cons::Quad { p, .. } = c {
            hess += p * (2.0 / -g);
        }
    }
    (grad, hess)
}

/// Barrier weight whose centring condition the start point best satisfies,
/// so a start near the optimum is not pulled back to the analytic centre.
fn initial_weight(red: &Reduced, x: &DVector<f64>) -> f64 {
    if red.cost.amax() == 0.0 {
        return 1.0;
    }
    let (gb, h) = barrier_derivatives(red, x);
    let (Some(hc), Some(hg)) = (solve_newton(&h, &red.cost), solve_newton(&h, &gb)) else {
        return 1.0;
    };
    let t = -red.cost.dot(&hg) / red.cost.dot(&hc);
    if t.is_finite() { t } else { 1.0 }
}

fn solve_newton(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let n = h.nrows();
    let jitter = 1e-12 * h.diagonal().amax().max(1.0);
    let reg = h + DMatrix::identity(n, n) * jitter;
    reg.clone().cholesky().map(|ch| ch.solve(rhs)).or_else(|| reg.lu().solve(rhs))
}

/// Minimises the problem starting from a strictly feasible `start`.
pub fn solve_convex_subproblem(pb: &ConvexProblem, start: &DVector<f64>, opts: &BarrierOptions) -> Result<ConvexSolution> {
    let n = pb.cost.len();
    if start.len() != n || pb.lower.len() != n || pb.upper.len() != n {
        return Err(Error::Solver("dimension mismatch in convex subproblem".into()));
    }
    let free: Vec<usize> = (0..n).filter(|&k| pb.upper[k] > pb.lower[k]).collect();
    let mut fixed = DVector::zeros(n);
    for k in (0..n).filter(|k| !free.contains(k)) {
        fixed[k] = pb.lower[k];
    }
    let red = reduce(pb, &free, &fixed)?;
    let mut x = DVector::from_iterator(free.len(), free.iter().map(|&k| start[k]));
    if let Some((k, g)) = red.cons.iter().map(|c| c.value(&x)).enumerate().find(|(_, g)| !(*g < 0.0)) {
        return Err(Error::Solver(format!("start point not strictly feasible (constraint {k}: {g:e})")));
    }
    let m = red.cons.len().max(1) as f64;
    let nf = free.len();
    let mut t = opts.t0.max(initial_weight(&red, &x));
    let mut steps = 0usize;
    if nf > 0 {
        loop {
            for _ in 0..opts.max_newton {
                let (gb, hess) = barrier_derivatives(&red, &x);
                let grad = &red.cost * t + gb;
                let Some(dx) = solve_newton(&hess, &(-&grad)) else {
                    return Err(Error::Solver("singular Newton system".into()));
                };
                let decrement = -grad.dot(&dx);
                steps += 1;
                if !(decrement > 1e-16) || dx.amax() < 1e-15 * (1.0 + x.amax()) {
                    break;
                }
                // inside the quadratic-convergence zone a full step is taken; the
                // barrier value itself is too large to resolve the decrease there
                let pure = decrement < 0.0625;
                let phi = if pure { 0.0 } else { barrier_value(&red, &x, t).expect("iterate stays interior") };
                let mut s = 1.0;
                let mut moved = false;
                while s > 1e-16 {
                    let trial = &x + &dx * s;
                    if let Some(v) = barrier_value(&red, &trial, t) {
                        if pure || v <= phi - 0.25 * s * decrement {
                            x = trial;
                            moved = true;
                            break;
                        }
                    }
                    s *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if m / t < opts.gap && 1.0 / t < 0.5 * opts.kkt_tol {
                break;
            }
            t *= opts.growth;
        }
    }
    let mut full = fixed.clone();
    for (i, &k) in free.iter().enumerate() {
        full[k] = x[i];
    }
    let residuals = kkt_residuals(&red, &x, t);
    if !residuals.max().is_finite() {
        return Err(Error::Solver("non-finite KKT residuals".into()));
    }
    Ok(ConvexSolution {
        objective: pb.cost.dot(&full),
        x: full,
        converged: residuals.max() <= opts.kkt_tol,
        residuals,
        newton_steps: steps,
    })
}

fn kkt_residuals(red: &Reduced, x: &DVector<f64>, t: f64) -> KktResiduals {
    let mut stat = red.cost.clone();
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for c in &red.cons {
        let g = c.value(x);
        primal = primal.max(g);
        let u = 1.0 / (t * -g);
        stat += c.grad(x) * u;
        comp = comp.max((u * g).abs());
    }
    let scale = red.cost.amax().max(1.0);
    KktResiduals { stationarity: stat.amax() / scale, primal: primal.max(0.0), dual: 0.0, complementarity: comp }
}

impl ConvexProblem {
    /// Largest constraint value at `x`, bounds included.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let q = self.quadratic.iter().map(|c| (x.transpose() * &c.p * x)[(0, 0)] + c.q.dot(x) + c.r);
        let l = self.linear.iter().map(|(a, b)| a.dot(x) - b);
        let bx = (0..x.len()).flat_map(|k| [self.lower[k] - x[k], x[k] - self.upper[k]]);
        q.chain(l).chain(bx).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_lp_vertex() {
        // max x + 2y  s.t. x + y ≤ 1, 0 ≤ x, y ≤ 0.8  →  (0.2, 0.8)
        let pb = ConvexProblem {
            cost: DVector::from_vec(vec![-1.0, -2.0]),
            quadratic: vec![],
            linear: vec![(DVector::from_vec(vec![1.0, 1.0]), 1.0)],
            lower: vec![0.0, 0.0],
            upper: vec![0.8, 0.8],
        };
        let sol = solve_convex_subproblem(&pb, &DVector::from_vec(vec![0.1, 0.1]), &BarrierOptions::default()).unwrap();
        assert!((sol.x[0] - 0.2).abs() < 1e-6 && (sol.x[1] - 0.8).abs() < 1e-6, "{}", sol.x);
        assert!(sol.residuals.max() <= 1e-7, "{:?}", sol.residuals);
        assert!(pb.max_violation(&sol.x) <= 1e-7);
    }

    #[test]
    fn disc_constraint() {
        // min x  s.t. x² + y² ≤ 1  →  (−1, 0)
        let pb = ConvexProblem {
            cost: DVector::from_vec(vec![1.0, 0.0]),
            quadratic: vec![ConvexQuadratic { p: DMatrix::identity(2, 2), q: DVector::zeros(2), r: -1.0 }],
            linear: vec![],
            lower: vec![f64::NEG_INFINITY; 2],
            upper: vec![f64::INFINITY; 2],
        };
        let sol = solve_convex_subproblem(&pb, &DVector::from_vec(vec![0.3, 0.2]), &BarrierOptions::default()).unwrap();
        assert!((sol.x[0] + 1.0).abs() < 1e-7 && sol.x[1].abs() < 1e-4, "{}", sol.x);
        assert!(sol.residuals.max() <= 1e-7, "{:?}", sol.residuals);
    }

    #[test]
    fn fixed_coordinates_are_eliminated() {
        let pb = ConvexProblem {
            cost: DVector::from_vec(vec![-1.0, -1.0]),
            quadratic: vec![],
            linear: vec![(DVector::from_vec(vec![1.0, 1.0]), 1.0)],
            lower: vec![0.0, 0.3],
            upper: vec![1.0, 0.3],
        };
        let sol = solve_convex_subproblem(&pb, &DVector::from_vec(vec![0.1, 0.3]), &BarrierOptions::default()).unwrap();
        assert_eq!(sol.x[1], 0.3);
        assert!((sol.x[0] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let pb = ConvexProblem {
            cost: DVector::from_vec(vec![1.0]),
            quadratic: vec![],
            linear: vec![],
            lower: vec![0.0],
            upper: vec![1.0],
        };
        assert!(solve_convex_subproblem(&pb, &DVector::from_vec(vec![1.0]), &BarrierOptions::default()).is_err());
    }
}
