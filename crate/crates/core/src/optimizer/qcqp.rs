//! Affine rate kernel and the standard-form throughput QCQP.
//!
//! For a fixed time-share vector every rate that enters `λ_s^i` is affine in
//! the stacked action vector `β` (row-major `M × M`). The kernel keeps those
//! affine maps so the grid oracle and the QCQP assembly read the same numbers.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::analytic::{Policy, Scheme};
use crate::channel::LinkProbabilities;
use crate::error::{Error, Result};

/// `c0 + coef · β`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Affine {
    pub c0: f64,
    pub coef: Vec<f64>,
}

impl Affine {
    fn zero(n: usize) -> Self {
        Self { c0: 0.0, coef: vec![0.0; n] }
    }

    #[inline]
    pub fn eval(&self, beta: &[f64]) -> f64 {
        self.c0 + self.coef.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineSource {
    /// `μ_i(β)`
    pub mu: Affine,
    /// `(num_i(β), den_i(β))` of the relay bound; `None` when never relayed.
    pub relay: Option<(Affine, Affine)>,
}

impl AffineSource {
    #[inline]
    pub fn lambda_s(&self, beta: &[f64]) -> f64 {
        let mu = self.mu.eval(beta);
        match &self.relay {
            Some((num, den)) => {
                let d = den.eval(beta);
                if d > 0.0 {
                    mu.min(num.eval(beta) / d * mu)
                } else {
                    mu
                }
            }
            None => mu,
        }
    }
}

/// Affine rate maps of every source for one `(scheme, links, w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineRates {
    pub scheme: Scheme,
    pub num_sources: usize,
    pub w: Vec<f64>,
    pub sources: Vec<AffineSource>,
}

impl AffineRates {
    pub fn new(scheme: Scheme, links: &LinkProbabilities<f64>, w: &[f64]) -> Result<Self> {
        let m = links.num_sources();
        if w.len() != m {
            return Err(Error::InvalidPolicy(format!("w has {} entries, channel has {m} sources", w.len())));
        }
        // validates w
        let policy = Policy::idle_only(scheme, links, w.to_vec())?;
        let eff = scheme.effective_links(links);
        let n = m * m;
        let idx = |i: usize, j: usize| i * m + j;
        let f_rd = eff.f_rd();
        let sources = (0..m)
            .map(|i| {
                let (f_sd, t_i, g_sd, g_rd) = (eff.f_sd(i), eff.relay_only(i), eff.g_sd(i), eff.g_rd(i));
                if !policy.helps(i) {
                    return AffineSource { mu: Affine { c0: w[i] * f_sd, coef: vec![0.0; n] }, relay: None };
                }
                let mut mu = Affine { c0: w[i] * (f_sd + t_i), coef: vec![0.0; n] };
                let mut num = Affine::zero(n);
                let mut den = Affine { c0: w[i] * t_i, coef: vec![0.0; n] };
                if scheme.has_actions() {
                    for q in 0..m {
                        mu.coef[idx(i, q)] = w[i] * (g_sd - f_sd - t_i);
                        den.coef[idx(i, q)] = -w[i] * t_i;
                    }
                    for j in (0..m).filter(|&j| j != i) {
                        num.coef[idx(j, i)] = w[j] * eff.g_rd(j);
                    }
                }
                if scheme.is_decision_based() {
                    num.coef[idx(i, i)] = w[i] * f_rd;
                    den.coef[idx(i, i)] += w[i] * (f_rd - g_rd);
                } else {
                    num.c0 = w[i] * f_rd;
                    den.c0 += w[i] * f_rd;
                    den.coef[idx(i, i)] -= w[i] * g_rd;
                }
                AffineSource { mu, relay: Some((num, den)) }
            })
            .collect();
        Ok(Self { scheme, num_sources: m, w: w.to_vec(), sources })
    }

    #[inline]
    pub fn lambda_s(&self, i: usize, beta: &[f64]) -> f64 {
        self.sources[i].lambda_s(beta)
    }

    /// `Σ x_i λ_s^i(β)`
    #[inline]
    pub fn weighted(&self, weights: &[f64], beta: &[f64]) -> f64 {
        self.sources.iter().zip(weights).map(|(s, x)| x * s.lambda_s(beta)).sum()
    }

    pub fn all_lambda_s(&self, beta: &[f64]) -> Vec<f64> {
        self.sources.iter().map(|s| s.lambda_s(beta)).collect()
    }

    /// Whether row `i` of the action matrix affects any rate.
    pub fn row_active(&self, i: usize) -> bool {
        self.scheme.has_actions() && self.w[i] > 0.0
    }
}

/// `z'Az + c'z + d ≤ 0`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl QuadraticConstraint {
    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.a * z)[(0, 0)] + self.c.dot(z) + self.d
    }

    pub fn is_trivial(&self) -> bool {
        self.d == 0.0 && self.c.iter().all(|&x| x == 0.0) && self.a.iter().all(|&x| x == 0.0)
    }
}

/// `a'z ≤ b`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl LinearConstraint {
    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        self.a.dot(z) - self.b
    }
}

/// Weighted-throughput maximisation in standard form over `z = [β, λ_s]`,
/// written as minimisation of `objective · z`.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub rates: AffineRates,
    pub weights: Vec<f64>,
    pub objective: DVector<f64>,
    /// Row sums `b_i'z ≤ 1`.
    pub row_sums: Vec<LinearConstraint>,
    /// `λ_s^i ≤ μ_i(β)` as `v_i'z ≤ u_i`.
    pub service: Vec<LinearConstraint>,
    /// `λ_s^i · den_i(β) − num_i(β) μ_i(β) ≤ 0`.
    pub relay: Vec<QuadraticConstraint>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QcqpProblem {
    pub fn num_sources(&self) -> usize {
        self.rates.num_sources
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn action_dim(&self) -> usize {
        self.num_sources() * self.num_sources()
    }

    pub fn lambda_index(&self, i: usize) -> usize {
        self.action_dim() + i
    }

    /// Stacks an action matrix and throughput vector into `z`.
    pub fn stack(&self, action: &[Vec<f64>], lambda: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), action.iter().flatten().chain(lambda).copied())
    }

    /// Largest constraint violation at `z` (negative when strictly feasible).
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let lin = self.row_sums.iter().chain(&self.service).map(|c| c.eval(z));
        let quad = self.relay.iter().map(|c| c.eval(z));
        let boxes = (0..self.dim()).flat_map(|k| [self.lower[k] - z[k], z[k] - self.upper[k]]);
        lin.chain(quad).chain(boxes).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds the QCQP for one time-share vector and weight vector.
pub fn assemble_qcqp(
    scheme: Scheme,
    links: &LinkProbabilities<f64>,
    w: &[f64],
    weights: &[f64],
) -> Result<QcqpProblem> {
    let rates = AffineRates::new(scheme, links, w)?;
    let m = rates.num_sources;
    if weights.len() != m || weights.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Config(format!("need {m} nonnegative finite weights")));
    }
    let nb = m * m;
    let n = nb + m;
    let mut objective = DVector::zeros(n);
    for i in 0..m {
        objective[nb + i] = -weights[i];
    }
    let lower = DVector::zeros(n);
    let mut upper = DVector::from_element(n, 1.0);
    for i in 0..m {
        if !rates.row_active(i) {
            for j in 0..m {
                upper[i * m + j] = 0.0;
            }
        }
        if rates.w[i] <= 0.0 {
            upper[nb + i] = 0.0;
        }
    }
    let row_sums = (0..m)
        .map(|i| {
            let mut a = DVector::zeros(n);
            for j in 0..m {
                a[i * m + j] = 1.0;
            }
            LinearConstraint { a, b: 1.0 }
        })
        .collect();
    let service = rates
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut a = DVector::zeros(n);
            for k in 0..nb {
                a[k] = -s.mu.coef[k];
            }
            a[nb + i] = 1.0;
            LinearConstraint { a, b: s.mu.c0 }
        })
        .collect();
    let relay = rates
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| match &s.relay {
            None => QuadraticConstraint { a: DMatrix::zeros(n, n), c: DVector::zeros(n), d: 0.0 },
            Some((num, den)) => {
                let mut a = DMatrix::zeros(n, n);
                let mut c = DVector::zeros(n);
                let li = nb + i;
                for k in 0..nb {
                    a[(li, k)] = 0.5 * den.coef[k];
                    a[(k, li)] = 0.5 * den.coef[k];
                    for l in 0..nb {
                        a[(k, l)] = -0.5 * (num.coef[k] * s.mu.coef[l] + s.mu.coef[k] * num.coef[l]);
                    }
                    c[k] = -num.c0 * s.mu.coef[k] - s.mu.c0 * num.coef[k];
                }
                c[li] = den.c0;
                QuadraticConstraint { a, c, d: -num.c0 * s.mu.c0 }
            }
        })
        .collect();
    Ok(QcqpProblem { rates, weights: weights.to_vec(), objective, row_sums, service, relay, lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::throughput_bounds;

    fn links() -> LinkProbabilities<f64> {
        LinkProbabilities::from_parts(&[0.3, 0.8], &[0.9, 0.7], 0.6, &[0.2, 0.7], &[0.4, 0.65]).unwrap()
    }

    fn actions() -> Vec<Vec<f64>> {
        vec![vec![0.2, 0.35], vec![0.15, 0.4]]
    }

    #[test]
    fn kernel_matches_analytic() {
        for scheme in Scheme::ALL {
            let l = links();
            let w = [0.35, 0.65];
            let rates = AffineRates::new(scheme, &l, &w).unwrap();
            let a = if scheme.has_actions() { actions() } else { vec![vec![0.0; 2]; 2] };
            let policy = if scheme == Scheme::Ccma {
                Policy::ccma(&l, w.to_vec()).unwrap()
            } else {
                Policy::new(scheme, a.clone(), w.to_vec()).unwrap()
            };
            let b = throughput_bounds(&policy, &l).unwrap();
            let flat: Vec<f64> = a.iter().flatten().copied().collect();
            for i in 0..2 {
                assert!((rates.sources[i].mu.eval(&flat) - b[i].mu).abs() < 1e-15, "{scheme}");
                assert!((rates.lambda_s(i, &flat) - b[i].lambda_s()).abs() < 1e-14, "{scheme}");
            }
        }
    }

    #[test]
    fn single_source_dimensions() {
        let l = LinkProbabilities::from_parts(&[0.3], &[0.9], 0.6, &[0.2], &[0.4]).unwrap();
        let p = assemble_qcqp(Scheme::Sbc, &l, &[1.0], &[1.0]).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.relay.len(), 1);
        assert_eq!(p.row_sums.len() + p.service.len() + p.relay.len(), 3);
    }

    #[test]
    fn analytic_points_are_feasible() {
        for scheme in [Scheme::Sbc, Scheme::Dbc, Scheme::CmDbc] {
            let l = links();
            let w = [0.35, 0.65];
            let p = assemble_qcqp(scheme, &l, &w, &[1.0, 1.0]).unwrap();
            let policy = Policy::new(scheme, actions(), w.to_vec()).unwrap();
            let lam: Vec<f64> = throughput_bounds(&policy, &l).unwrap().iter().map(|b| b.lambda_s()).collect();
            let z = p.stack(&actions(), &lam);
            assert!(p.max_violation(&z) <= 1e-9, "{scheme}: {}", p.max_violation(&z));
            // pushing throughput past the bound violates something
            let over: Vec<f64> = lam.iter().map(|x| x + 1e-3).collect();
            assert!(p.max_violation(&p.stack(&actions(), &over)) > 0.0);
        }
    }

    #[test]
    fn quadratic_matrices_symmetric() {
        let p = assemble_qcqp(Scheme::Dbc, &links(), &[0.5, 0.5], &[1.0, 2.0]).unwrap();
        for q in &p.relay {
            assert_eq!(q.a, q.a.transpose());
        }
        assert_eq!(p.objective[4], -1.0);
        assert_eq!(p.objective[5], -2.0);
    }

    #[test]
    fn zero_share_fixes_row_and_throughput() {
        let p = assemble_qcqp(Scheme::Sbc, &links(), &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p.upper.as_slice(), &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
