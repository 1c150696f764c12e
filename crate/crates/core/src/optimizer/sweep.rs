//! Sweeps over time shares and weights, the planar hull of the resulting
//! throughput points, and the delay-minimising policy search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fpp_sca::{optimize, OptimizerOptions, SolverStatus};
use super::oracle::{grid_oracle, PairSearch, SearchGrid, ThroughputFloor};
use super::qcqp::AffineRates;
use crate::analytic::{predict_delay, DelayPrediction, DemandVector, Policy, Scheme, SourceDelay};
use crate::channel::LinkProbabilities;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSweepConfig {
    pub w_grid: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default)]
    pub options: OptimizerOptions,
}

/// `w₁ ∈ {0, 0.1, …, 1}` for two sources.
pub fn default_w_grid() -> Vec<Vec<f64>> {
    (0..=10).map(|k| k as f64 / 10.0).map(|w1| vec![w1, 1.0 - w1]).collect()
}

/// Normalised `(x₁, x₂)` with `x₁/x₂` on `points` log-spaced ratios over
/// `[10^-decades, 10^decades]`, followed by the two axis corners.
pub fn log_ratio_weights(points: usize, decades: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..points)
        .map(|k| {
            let e = if points == 1 { 0.0 } else { -decades + 2.0 * decades * k as f64 / (points - 1) as f64 };
            let r = 10f64.powf(e);
            vec![r / (1.0 + r), 1.0 / (1.0 + r)]
        })
        .collect();
    out.push(vec![1.0, 0.0]);
    out.push(vec![0.0, 1.0]);
    out
}

impl RegionSweepConfig {
    pub fn default_two_source() -> Self {
        Self { w_grid: default_w_grid(), weights: log_ratio_weights(21, 3.0), oracle: false, options: OptimizerOptions::default() }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.w_grid.is_empty() || self.weights.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        let unit = |v: &Vec<f64>| v.len() == m && v.iter().all(|x| (0.0..=1.0).contains(x));
        if !self.w_grid.iter().all(unit) || !self.weights.iter().all(unit) {
            return Err(Error::Config(format!("sweep grid entries must be length-{m} vectors in [0, 1]")));
        }
        self.options.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub w: Vec<f64>,
    pub weights: Vec<f64>,
    pub action: Vec<Vec<f64>>,
    pub lambda_s: Vec<f64>,
    pub objective: f64,
    pub status: SolverStatus,
    pub oracle_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSweep {
    pub scheme: Scheme,
    pub points: Vec<SweepPoint>,
    /// Counter-clockwise hull of the throughput points (two sources only).
    pub hull: Option<Vec<[f64; 2]>>,
}

/// Optimises every `(w, weights)` pair and collects the throughput points.
pub fn region_sweep(scheme: Scheme, links: &LinkProbabilities<f64>, config: &RegionSweepConfig) -> Result<RegionSweep> {
    let m = links.num_sources();
    config.validate(m)?;
    let jobs: Vec<(&Vec<f64>, &Vec<f64>)> =
        config.w_grid.iter().flat_map(|w| config.weights.iter().map(move |x| (w, x))).collect();
    let points = jobs
        .par_iter()
        .map(|&(w, x)| -> Result<SweepPoint> {
            let oracle_objective = if config.oracle && m <= 2 {
                Some(grid_oracle(scheme, links, w, x, config.options.oracle_step)?.objective)
            } else {
                None
            };
            Ok(match optimize(scheme, links, w, x, &config.options) {
                Ok(r) => SweepPoint {
                    w: w.clone(),
                    weights: x.clone(),
                    action: r.policy.actions().to_vec(),
                    lambda_s: r.lambda_s,
                    objective: r.objective,
                    status: r.diagnostics.status,
                    oracle_objective,
                },
                Err(Error::Solver(_)) => SweepPoint {
                    w: w.clone(),
                    weights: x.clone(),
                    action: vec![vec![0.0; m]; m],
                    lambda_s: vec![0.0; m],
                    objective: 0.0,
                    status: SolverStatus::Failed,
                    oracle_objective,
                },
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hull = (m == 2).then(|| {
        let pts: Vec<[f64; 2]> =
            points.iter().filter(|p| p.status.is_success()).map(|p| [p.lambda_s[0], p.lambda_s[1]]).collect();
        convex_hull(&pts)
    });
    Ok(RegionSweep { scheme, points, hull })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` lies in the counter-clockwise polygon `hull`, up to `tol`.
pub fn hull_contains(hull: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (hull[0][0] - p[0]).abs() <= tol && (hull[0][1] - p[1]).abs() <= tol,
        n => (0..n).all(|k| {
            let a = hull[k];
            let b = hull[(k + 1) % n];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt().max(f64::MIN_POSITIVE);
            cross(a, b, p) / len >= -tol
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayPoint {
    pub demand: f64,
    pub feasible: bool,
    pub policy: Option<Policy<f64>>,
    /// Mean delay of the target source.
    pub delay: Option<f64>,
    pub prediction: Option<DelayPrediction<f64>>,
}

/// Minimum predicted delay of `target` at each demand while the other source
/// keeps a throughput floor, searched over `(w, action matrix)` on a grid.
pub fn min_delay_search(
    scheme: Scheme,
    links: &LinkProbabilities<f64>,
    target: usize,
    floor: &ThroughputFloor,
    demands: &[f64],
    grid: &SearchGrid,
) -> Result<Vec<DelayPoint>> {
    let ps = PairSearch::new(links, target, floor, grid)?;
    let demand_vectors = demands
        .iter()
        .map(|&d| {
            let mut v = vec![0.0; 2];
            v[ps.j] = floor.min;
            v[ps.k] = d;
            DemandVector::new(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = if scheme.has_actions() { ps.n } else { 0 };
    type Best = Option<(f64, Policy<f64>)>;
    let per_w: Vec<Vec<Best>> = (0..=ps.nw)
        .into_par_iter()
        .map(|iw| -> Result<Vec<Best>> {
            let w = ps.w(iw);
            let rates = AffineRates::new(scheme, links, &w)?;
            let mut candidates = Vec::new();
            for ajk in 0..=n {
                for akj in 0..=n {
                    let ajj = if scheme.has_actions() {
                        ps.floor_action(&rates, floor.min, ajk, akj)
                    } else {
                        (rates.lambda_s(ps.j, &[0.0; 4]) >= floor.min - super::oracle::FLOOR_TOL).then_some(0)
                    };
                    if let Some(ajj) = ajj {
                        for akk in 0..=(n - akj) {
                            let policy = match scheme {
                                Scheme::Ccma => Policy::ccma(links, w.clone())?,
                                _ => Policy::new(scheme, ps.matrix(ajj, ajk, akj, akk), w.clone())?,
                            };
                            candidates.push(policy);
                        }
                    }
                }
            }
            demand_vectors
                .iter()
                .map(|dv| {
                    let mut best: Best = None;
                    for p in &candidates {
                        let pred = predict_delay(p, links, dv)?;
                        if let SourceDelay::Finite { total, .. } = pred.sources[ps.k] {
                            if best.as_ref().map_or(true, |b| total < b.0) {
                                best = Some((total, p.clone()));
                            }
                        }
                    }
                    Ok(best)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    demands
        .iter()
        .zip(&demand_vectors)
        .enumerate()
        .map(|(d, (&demand, dv))| {
            let mut best: Best = None;
            for cand in per_w.iter().filter_map(|v| v[d].as_ref()) {
                if best.as_ref().map_or(true, |b| cand.0 < b.0) {
                    best = Some(cand.clone());
                }
            }
            Ok(match best {
                Some((delay, policy)) => DelayPoint {
                    demand,
                    feasible: true,
                    prediction: Some(predict_delay(&policy, links, dv)?),
                    policy: Some(policy),
                    delay: Some(delay),
                },
                None => DelayPoint { demand, feasible: false, policy: None, delay: None, prediction: None },
            })
        })
        .collect()
}
