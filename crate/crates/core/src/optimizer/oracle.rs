//! Exhaustive grid searches over the action matrix (and, for the constrained
//! problems, the time share) of one or two sources.

use rayon::prelude::*;
use serde::Serialize;

use super::qcqp::AffineRates;
use crate::analytic::{Policy, Scheme};
use crate::channel::LinkProbabilities;
use crate::error::{Error, Result};

/// Coarsest step the oracle accepts.
pub const MAX_ORACLE_STEP: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub action: Vec<Vec<f64>>,
    pub lambda_s: Vec<f64>,
    pub objective: f64,
    pub evaluations: usize,
}

/// Number of intervals of a grid with the given step over `[0, 1]`.
pub fn grid_divisions(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("grid step {step} outside (0, 1]")));
    }
    let n = (1.0 / step).round();
    if ((n * step) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step {step} does not divide [0, 1]")));
    }
    Ok(n as usize)
}

#[inline]
fn level(k: usize, n: usize) -> f64 {
    k as f64 / n as f64
}

/// Maximises `Σ x_i λ_s^i` over every action matrix on the grid with row sums
/// at most one. Ties keep the lexicographically smallest matrix.
pub fn grid_oracle(
    scheme: Scheme,
    links: &LinkProbabilities<f64>,
    w: &[f64],
    weights: &[f64],
    step: f64,
) -> Result<OracleResult> {
    let m = links.num_sources();
    if m > 2 {
        return Err(Error::Unsupported(format!("grid oracle supports at most 2 sources, got {m}")));
    }
    if step > MAX_ORACLE_STEP + 1e-12 {
        return Err(Error::Config(format!("oracle step {step} coarser than {MAX_ORACLE_STEP}")));
    }
    if weights.len() != m {
        return Err(Error::Config(format!("need {m} weights")));
    }
    let n = grid_divisions(step)?;
    let rates = AffineRates::new(scheme, links, w)?;
    let finish = |flat: Vec<f64>, evaluations: usize| {
        let lambda_s = rates.all_lambda_s(&flat);
        OracleResult {
            objective: rates.weighted(weights, &flat),
            lambda_s,
            action: flat.chunks(m).map(<[f64]>::to_vec).collect(),
            evaluations,
        }
    };
    if !scheme.has_actions() {
        return Ok(finish(vec![0.0; m * m], 1));
    }
    if m == 1 {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for k in 0..=n {
            let v = rates.weighted(weights, &[level(k, n)]);
            if v > best.0 {
                best = (v, k);
            }
        }
        return Ok(finish(vec![level(best.1, n)], n + 1));
    }
    // lexicographic order over (β11, β12, β21, β22); the outer level is split across threads
    let per_outer: Vec<(f64, [usize; 4], usize)> = (0..=n)
        .into_par_iter()
        .map(|a| {
            let mut best = (f64::NEG_INFINITY, [0usize; 4], 0usize);
            let mut beta = [level(a, n), 0.0, 0.0, 0.0];
            for b in 0..=(n - a) {
                beta[1] = level(b, n);
                for c in 0..=n {
                    beta[2] = level(c, n);
                    for d in 0..=(n - c) {
                        beta[3] = level(d, n);
                        best.2 += 1;
                        let v = rates.weighted(weights, &beta);
                        if v > best.0 {
                            best.0 = v;
                            best.1 = [a, b, c, d];
                        }
                    }
                }
            }
            best
        })
        .collect();
    let evaluations = per_outer.iter().map(|b| b.2).sum();
    let mut best = per_outer[0];
    for cand in &per_outer[1..] {
        if cand.0 > best.0 {
            best = *cand;
        }
    }
    Ok(finish(best.1.iter().map(|&k| level(k, n)).collect(), evaluations))
}

/// Grid of a constrained two-source search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchGrid {
    pub w_step: f64,
    pub action_step: f64,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self { w_step: 0.01, action_step: 0.02 }
    }
}

/// `λ_s^{source} ≥ min`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ThroughputFloor {
    pub source: usize,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedOptimum {
    pub policy: Policy<f64>,
    pub lambda_s: Vec<f64>,
}

/// Slack allowed when comparing a throughput with its floor.
pub const FLOOR_TOL: f64 = 1e-12;

/// Inner loop of the two-source searches.
///
/// For `M = 2` the source `j` under a floor depends on `(w, β_jj, β_jk, β_kj)`
/// and the target `k` on `(w, β_kk, β_kj, β_jk)`. So for each `(w, β_jk, β_kj)`
/// the floor is met iff some `β_jj` meets it, and the target is then optimised
/// over `β_kk` alone.
pub(crate) struct PairSearch {
    pub j: usize,
    pub k: usize,
    pub n: usize,
    pub nw: usize,
}

impl PairSearch {
    pub fn new(links: &LinkProbabilities<f64>, target: usize, floor: &ThroughputFloor, grid: &SearchGrid) -> Result<Self> {
        if links.num_sources() != 2 {
            return Err(Error::Unsupported("constrained search needs exactly 2 sources".into()));
        }
        if target > 1 || floor.source > 1 || target == floor.source {
            return Err(Error::Config("target and floor must name the two different sources".into()));
        }
        Ok(Self {
            j: floor.source,
            k: target,
            n: grid_divisions(grid.action_step)?,
            nw: grid_divisions(grid.w_step)?,
        })
    }

    pub fn w(&self, iw: usize) -> Vec<f64> {
        let w1 = level(iw, self.nw);
        vec![w1, 1.0 - w1]
    }

    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * 2 + c
    }

    /// Best `β_jj` index meeting the floor for fixed `β_jk`, `β_kj`, if any.
    pub fn floor_action(&self, rates: &AffineRates, floor: f64, ajk: usize, akj: usize) -> Option<usize> {
        let mut beta = [0.0; 4];
        beta[self.idx(self.j, self.k)] = level(ajk, self.n);
        beta[self.idx(self.k, self.j)] = level(akj, self.n);
        let mut best: Option<(f64, usize)> = None;
        for ajj in 0..=(self.n - ajk) {
            beta[self.idx(self.j, self.j)] = level(ajj, self.n);
            let v = rates.lambda_s(self.j, &beta);
            if best.map_or(true, |b| v > b.0) {
                best = Some((v, ajj));
            }
        }
        best.filter(|b| b.0 >= floor - FLOOR_TOL).map(|b| b.1)
    }

    pub fn matrix(&self, ajj: usize, ajk: usize, akj: usize, akk: usize) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; 2]; 2];
        a[self.j][self.j] = level(ajj, self.n);
        a[self.j][self.k] = level(ajk, self.n);
        a[self.k][self.j] = level(akj, self.n);
        a[self.k][self.k] = level(akk, self.n);
        a
    }
}

/// Maximum `λ_s^{target}` over `(w, action matrix)` subject to a throughput floor
/// on the other source. Returns `None` when no grid point meets the floor.
pub fn constrained_max_throughput(
    scheme: Scheme,
    links: &LinkProbabilities<f64>,
    target: usize,
    floor: &ThroughputFloor,
    grid: &SearchGrid,
) -> Result<Option<ConstrainedOptimum>> {
    let ps = PairSearch::new(links, target, floor, grid)?;
    let per_w: Vec<Option<(f64, Vec<f64>, [usize; 4])>> = (0..=ps.nw)
        .into_par_iter()
        .map(|iw| -> Result<_> {
            let w = ps.w(iw);
            let rates = AffineRates::new(scheme, links, &w)?;
            let n = if scheme.has_actions() { ps.n } else { 0 };
            let mut best: Option<(f64, Vec<f64>, [usize; 4])> = None;
            for ajk in 0..=n {
                for akj in 0..=n {
                    let Some(ajj) = (if scheme.has_actions() {
                        ps.floor_action(&rates, floor.min, ajk, akj)
                    } else {
                        (rates.lambda_s(ps.j, &[0.0; 4]) >= floor.min - FLOOR_TOL).then_some(0)
                    }) else {
                        continue;
                    };
                    for akk in 0..=(n - akj) {
                        let a = ps.matrix(ajj, ajk, akj, akk);
                        let flat = [a[0][0], a[0][1], a[1][0], a[1][1]];
                        let v = rates.lambda_s(ps.k, &flat);
                        if best.as_ref().map_or(true, |b| v > b.0) {
                            best = Some((v, w.clone(), [ajj, ajk, akj, akk]));
                        }
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, Vec<f64>, [usize; 4])> = None;
    for cand in per_w.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| cand.0 > b.0) {
            best = Some(cand);
        }
    }
    let Some((_, w, [ajj, ajk, akj, akk])) = best else {
        return Ok(None);
    };
    let action = if scheme.has_actions() { ps.matrix(ajj, ajk, akj, akk) } else { vec![vec![0.0; 2]; 2] };
    let policy = match scheme {
        Scheme::Ccma => Policy::ccma(links, w.clone())?,
        _ => Policy::new(scheme, action.clone(), w.clone())?,
    };
    let rates = AffineRates::new(scheme, links, &w)?;
    let lambda_s = rates.all_lambda_s(&action.concat());
    Ok(Some(ConstrainedOptimum { policy, lambda_s }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::single_user_sbc_optimum;

    #[test]
    fn refuses_three_sources() {
        let l = LinkProbabilities::from_parts(&[0.3; 3], &[0.9; 3], 0.6, &[0.2; 3], &[0.4; 3]).unwrap();
        assert!(matches!(grid_oracle(Scheme::Sbc, &l, &[0.3, 0.3, 0.4], &[1.0; 3], 0.02), Err(Error::Unsupported(_))));
    }

    #[test]
    fn refuses_coarse_step() {
        let l = LinkProbabilities::from_parts(&[0.3], &[0.9], 0.6, &[0.2], &[0.4]).unwrap();
        assert!(grid_oracle(Scheme::Sbc, &l, &[1.0], &[1.0], 0.05).is_err());
        assert!(grid_divisions(0.03).is_err());
    }

    #[test]
    fn single_source_scan_matches_closed_form() {
        let l = LinkProbabilities::from_parts(&[0.3], &[0.9], 0.6, &[0.2], &[0.4]).unwrap();
        let o = grid_oracle(Scheme::Sbc, &l, &[1.0], &[1.0], 0.01).unwrap();
        let s = single_user_sbc_optimum(&l).unwrap();
        assert!(s.condition_holds);
        assert!((o.action[0][0] - s.optimal_action).abs() <= 0.01);
        assert!(o.objective <= s.lambda_star + 1e-12);
        assert!(o.objective >= s.lambda_star - 0.01);
    }

    #[test]
    fn zero_corner_reproduces_ccma_for_helped_sources() {
        // f_rd beats both direct links so CCMA helps everyone
        let l = LinkProbabilities::from_parts(&[0.3, 0.4], &[0.9, 0.7], 0.6, &[0.2, 0.3], &[0.4, 0.5]).unwrap();
        let w = [0.5, 0.5];
        let sbc = AffineRates::new(Scheme::Sbc, &l, &w).unwrap();
        let ccma = grid_oracle(Scheme::Ccma, &l, &w, &[1.0, 1.0], 0.02).unwrap();
        assert_eq!(sbc.all_lambda_s(&[0.0; 4]), ccma.lambda_s);
    }
}
