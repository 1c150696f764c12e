//! Closed-form service and arrival rates of the dominant system, stability
//! bounds, approximate delays, and the single-source optima.
//!
//! In the dominant system every other source is saturated and an empty relay
//! queue chosen for transmission sends a dummy packet. Under that construction
//! source `i` leaves its queue at rate `μ_i`, feeds relay queue `r_i` at
//! `λ_{r_i}` and that queue is drained at `μ_{r_i}`. Loynes' criterion then
//! gives the maximum stable throughput `min(μ_i, μ_{u_i})`.

use serde::{Deserialize, Serialize};

use crate::channel::LinkProbabilities;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute slack tolerated on probability and time-share sums.
pub const SUM_TOL: f64 = 1e-9;

/// Relay behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Relay senses the slot owner's queue; transmits in idle slots, and with
    /// probability `β_ij` interferes with a packet from `Q_{r_j}` in busy slots.
    #[serde(rename = "SBC")]
    Sbc,
    /// Relay transmits from `Q_{r_j}` with probability `α_ij` regardless of the owner's queue.
    #[serde(rename = "DBC")]
    Dbc,
    /// Idle-slot-only relaying that helps only sources whose direct link is weaker than `r-d`.
    #[serde(rename = "CCMA")]
    Ccma,
    /// DBC with every two-transmitter slot treated as a collision.
    #[serde(rename = "CM-DBC")]
    CmDbc,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Sbc, Scheme::Dbc, Scheme::Ccma, Scheme::CmDbc];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Sbc => "SBC",
            Scheme::Dbc => "DBC",
            Scheme::Ccma => "CCMA",
            Scheme::CmDbc => "CM-DBC",
        }
    }

    /// Whether the relay decides without looking at the owner's queue.
    pub fn is_decision_based(self) -> bool {
        matches!(self, Scheme::Dbc | Scheme::CmDbc)
    }

    /// Whether the action matrix is a decision variable.
    pub fn has_actions(self) -> bool {
        !matches!(self, Scheme::Ccma)
    }

    /// Probabilities the scheme's formulas actually see.
    pub fn effective_links<T: Scalar>(self, links: &LinkProbabilities<T>) -> LinkProbabilities<T> {
        match self {
            Scheme::CmDbc => links.without_mpr(),
            _ => links.clone(),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SBC" => Ok(Scheme::Sbc),
            "DBC" => Ok(Scheme::Dbc),
            "CCMA" => Ok(Scheme::Ccma),
            "CM-DBC" | "CMDBC" => Ok(Scheme::CmDbc),
            _ => Err(Error::Config(format!("unknown scheme `{s}`"))),
        }
    }
}

/// Relay action probabilities and TDMA time shares.
///
/// `action[i][j]` is the probability that, in a slot owned by `s_i`, the relay
/// transmits a packet from `Q_{r_j}` (`β_ij` for SBC, `α_ij` for DBC).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy<T> {
    scheme: Scheme,
    action: Vec<Vec<T>>,
    w: Vec<T>,
    helping: Option<Vec<bool>>,
}

impl<T: Scalar> Policy<T> {
    pub fn new(scheme: Scheme, action: Vec<Vec<T>>, w: Vec<T>) -> Result<Self> {
        if scheme == Scheme::Ccma {
            return Err(Error::InvalidPolicy("CCMA policies are built with Policy::ccma".into()));
        }
        let p = Self { scheme, action, w, helping: None };
        p.validate()?;
        Ok(p)
    }

    /// CCMA: no interference, relaying only for sources with `f_rd > f_{s_i d}`.
    pub fn ccma(links: &LinkProbabilities<T>, w: Vec<T>) -> Result<Self> {
        let m = w.len();
        let helping = (0..m.min(links.num_sources())).map(|i| links.f_rd() > links.f_sd(i)).collect();
        let p = Self { scheme: Scheme::Ccma, action: vec![vec![T::zero(); m]; m], w, helping: Some(helping) };
        p.validate()?;
        Ok(p)
    }

    /// All-zero action matrix.
    pub fn idle_only(scheme: Scheme, links: &LinkProbabilities<T>, w: Vec<T>) -> Result<Self> {
        match scheme {
            Scheme::Ccma => Self::ccma(links, w),
            _ => {
                let m = w.len();
                Self::new(scheme, vec![vec![T::zero(); m]; m], w)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.w.len();
        if m == 0 {
            return Err(Error::InvalidPolicy("empty time-share vector".into()));
        }
        if self.action.len() != m || self.action.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidPolicy(format!("action matrix must be {m}x{m}")));
        }
        let tol = T::lit(SUM_TOL);
        let unit = |x: T| x >= T::zero() && x <= T::one();
        for (i, row) in self.action.iter().enumerate() {
            if !row.iter().copied().all(unit) {
                return Err(Error::InvalidPolicy(format!("row {} has an entry outside [0, 1]", i + 1)));
            }
            let s: T = row.iter().copied().sum();
            if s > T::one() + tol {
                return Err(Error::InvalidPolicy(format!("row {} sums to {s} > 1", i + 1)));
            }
        }
        if !self.w.iter().copied().all(unit) {
            return Err(Error::InvalidPolicy("time shares must lie in [0, 1]".into()));
        }
        let total: T = self.w.iter().copied().sum();
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidPolicy(format!("time shares sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn num_sources(&self) -> usize {
        self.w.len()
    }

    pub fn action(&self, i: usize, j: usize) -> T {
        self.action[i][j]
    }

    pub fn actions(&self) -> &[Vec<T>] {
        &self.action
    }

    pub fn w(&self) -> &[T] {
        &self.w
    }

    /// Probability that the relay transmits during a busy slot of `s_i`.
    pub fn row_sum(&self, i: usize) -> T {
        self.action[i].iter().copied().sum()
    }

    /// Whether the relay ever stores packets of `s_i`.
    pub fn helps(&self, i: usize) -> bool {
        self.helping.as_ref().map_or(true, |h| h[i])
    }

    pub fn helping_mask(&self) -> Option<&[bool]> {
        self.helping.as_deref()
    }
}

/// Per-source Bernoulli arrival rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandVector<T>(Vec<T>);

impl<T: Scalar> DemandVector<T> {
    pub fn new(rates: Vec<T>) -> Result<Self> {
        if let Some(bad) = rates.iter().find(|&&l| !(l >= T::zero() && l < T::one())) {
            return Err(Error::InvalidDemand(format!("arrival rate {bad} outside [0, 1)")));
        }
        Ok(Self(rates))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![T::zero(); m])
    }

    pub fn rates(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `μ_i` and `μ_{u_i}` of one source for a fixed policy. `μ_{u_i}` is `+∞`
/// when the relay queue of `s_i` can never be the binding constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputBounds<T> {
    pub mu: T,
    pub mu_u: T,
}

impl<T: Scalar> ThroughputBounds<T> {
    pub fn lambda_s(&self) -> T {
        self.mu.min(self.mu_u)
    }
}

/// Rates of one source and its relay queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceRates<T> {
    pub mu: T,
    pub lambda_r: T,
    pub mu_r: T,
    pub mu_u: T,
    pub lambda_s: T,
    /// `λ_i / μ_i` clamped to `[0, 1]`.
    pub busy: T,
    pub source_stable: bool,
    pub relay_stable: bool,
}

impl<T> SourceRates<T> {
    pub fn stable(&self) -> bool {
        self.source_stable && self.relay_stable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityEvaluation<T> {
    pub scheme: Scheme,
    pub sources: Vec<SourceRates<T>>,
}

impl<T: Scalar> StabilityEvaluation<T> {
    pub fn lambda_s(&self) -> Vec<T> {
        self.sources.iter().map(|s| s.lambda_s).collect()
    }

    pub fn stable(&self) -> bool {
        self.sources.iter().all(SourceRates::stable)
    }
}

/// Numerator and denominator of `μ_{u_i} = num/den · μ_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayBoundParts<T> {
    pub num: T,
    pub den: T,
}

fn check_dims<T: Scalar>(policy: &Policy<T>, links: &LinkProbabilities<T>) -> Result<()> {
    if policy.num_sources() != links.num_sources() {
        return Err(Error::InvalidPolicy(format!(
            "policy has {} sources, channel has {}",
            policy.num_sources(),
            links.num_sources()
        )));
    }
    Ok(())
}

/// `μ_i` of source `i`. `links` must already be the scheme's effective links.
pub fn source_service_rate<T: Scalar>(policy: &Policy<T>, links: &LinkProbabilities<T>, i: usize) -> T {
    let w = policy.w()[i];
    let f_sd = links.f_sd(i);
    if !policy.helps(i) {
        return w * f_sd;
    }
    let s = policy.row_sum(i);
    w * (s * links.g_sd(i) + (T::one() - s) * (f_sd + links.relay_only(i)))
}

/// Parts of the relay-queue bound, or `None` when the source is never relayed.
pub fn relay_bound_parts<T: Scalar>(
    policy: &Policy<T>,
    links: &LinkProbabilities<T>,
    i: usize,
) -> Option<RelayBoundParts<T>> {
    if !policy.helps(i) {
        return None;
    }
    let w = policy.w();
    let s = policy.row_sum(i);
    let a_ii = policy.action(i, i);
    let t_i = links.relay_only(i);
    let f_rd = links.f_rd();
    let g_rd_i = links.g_rd(i);
    let cross: T = (0..policy.num_sources())
        .filter(|&j| j != i)
        .map(|j| w[j] * policy.action(j, i) * links.g_rd(j))
        .sum();
    let (num, den) = if policy.scheme().is_decision_based() {
        (w[i] * a_ii * f_rd + cross, w[i] * ((T::one() - s) * t_i + a_ii * f_rd - a_ii * g_rd_i))
    } else {
        (w[i] * f_rd + cross, w[i] * ((T::one() - s) * t_i + f_rd - a_ii * g_rd_i))
    };
    Some(RelayBoundParts { num, den })
}

/// `μ_{u_i}` from its parts: `+∞` when the denominator is not positive.
pub fn relay_bound<T: Scalar>(parts: Option<RelayBoundParts<T>>, mu: T) -> T {
    match parts {
        Some(RelayBoundParts { num, den }) if den > T::zero() => num / den * mu,
        _ => T::infinity(),
    }
}

/// Demand-independent bounds `(μ_i, μ_{u_i})` of every source.
pub fn throughput_bounds<T: Scalar>(
    policy: &Policy<T>,
    links: &LinkProbabilities<T>,
) -> Result<Vec<ThroughputBounds<T>>> {
    check_dims(policy, links)?;
    let eff = policy.scheme().effective_links(links);
    Ok((0..policy.num_sources())
        .map(|i| {
            let mu = source_service_rate(policy, &eff, i);
            ThroughputBounds { mu, mu_u: relay_bound(relay_bound_parts(policy, &eff, i), mu) }
        })
        .collect())
}

/// Service, arrival and stability figures of every queue for a fixed policy and demand.
pub fn evaluate_rates<T: Scalar>(
    policy: &Policy<T>,
    links: &LinkProbabilities<T>,
    demand: &DemandVector<T>,
) -> Result<StabilityEvaluation<T>> {
    check_dims(policy, links)?;
    if demand.len() != policy.num_sources() {
        return Err(Error::InvalidDemand(format!(
            "demand has {} entries, policy has {} sources",
            demand.len(),
            policy.num_sources()
        )));
    }
    let eff = policy.scheme().effective_links(links);
    let m = policy.num_sources();
    let sources = (0..m)
        .map(|i| {
            let lambda = demand.rates()[i];
            let mu = source_service_rate(policy, &eff, i);
            let mu_u = relay_bound(relay_bound_parts(policy, &eff, i), mu);
            let busy = busy_fraction(lambda, mu);
            let (lambda_r, mu_r) = relay_queue_rates(policy, &eff, i, busy);
            let relay_stable = lambda_r == T::zero() || lambda_r < mu_r;
            SourceRates {
                mu,
                lambda_r,
                mu_r,
                mu_u,
                lambda_s: mu.min(mu_u),
                busy,
                source_stable: lambda < mu,
                relay_stable,
            }
        })
        .collect();
    Ok(StabilityEvaluation { scheme: policy.scheme(), sources })
}

fn busy_fraction<T: Scalar>(lambda: T, mu: T) -> T {
    if lambda <= T::zero() {
        T::zero()
    } else if mu <= T::zero() {
        T::one()
    } else {
        (lambda / mu).min(T::one())
    }
}

/// `(λ_{r_i}, μ_{r_i})` given the probability that `Q_{s_i}` is non-empty.
fn relay_queue_rates<T: Scalar>(policy: &Policy<T>, links: &LinkProbabilities<T>, i: usize, busy: T) -> (T, T) {
    if !policy.helps(i) {
        return (T::zero(), T::zero());
    }
    let w = policy.w();
    let s = policy.row_sum(i);
    let a_ii = policy.action(i, i);
    let f_rd = links.f_rd();
    let lambda_r = w[i] * links.relay_only(i) * busy * (T::one() - s);
    let cross: T = (0..policy.num_sources())
        .filter(|&j| j != i)
        .map(|j| w[j] * policy.action(j, i) * links.g_rd(j))
        .sum();
    let idle = T::one() - busy;
    let own = if policy.scheme().is_decision_based() {
        a_ii * (f_rd * idle + links.g_rd(i) * busy)
    } else {
        idle * f_rd + busy * a_ii * links.g_rd(i)
    };
    (lambda_r, w[i] * own + cross)
}

/// Delay figures of one source, or the reason none exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SourceDelay<T> {
    Finite {
        /// Probability a departing packet was delivered directly (`ε_i` or `τ_i`).
        direct: T,
        n_source: T,
        n_relay: T,
        t_source: T,
        t_relay: T,
        /// End-to-end mean delay in slots.
        total: T,
    },
    Unstable,
}

impl<T: Scalar> SourceDelay<T> {
    pub fn total(&self) -> Option<T> {
        match self {
            SourceDelay::Finite { total, .. } => Some(*total),
            SourceDelay::Unstable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayPrediction<T> {
    pub sources: Vec<SourceDelay<T>>,
}

/// Probability that a packet leaving `Q_{s_i}` was decoded by the destination.
pub fn direct_delivery_prob<T: Scalar>(policy: &Policy<T>, links: &LinkProbabilities<T>, i: usize, mu: T) -> T {
    if !policy.helps(i) {
        return T::one();
    }
    if mu <= T::zero() {
        return T::zero();
    }
    let s = policy.row_sum(i);
    let w = policy.w()[i];
    w * ((T::one() - s) * links.f_sd(i) + s * links.g_sd(i)) / mu
}

/// Mean end-to-end delay per source, treating both queues as discrete-time M/M/1.
///
/// `D_i = (1 − λ_i)/(μ_i − λ_i) + (1 − ε_i)(1 − λ_{r_i})/(μ_{r_i} − λ_{r_i})`.
pub fn predict_delay<T: Scalar>(
    policy: &Policy<T>,
    links: &LinkProbabilities<T>,
    demand: &DemandVector<T>,
) -> Result<DelayPrediction<T>> {
    let eval = evaluate_rates(policy, links, demand)?;
    let eff = policy.scheme().effective_links(links);
    let sources = eval
        .sources
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let lambda = demand.rates()[i];
            if !(lambda < r.mu) {
                return SourceDelay::Unstable;
            }
            let direct = direct_delivery_prob(policy, &eff, i, r.mu);
            let t_source = (T::one() - lambda) / (r.mu - lambda);
            let relayed = T::one() - direct;
            let t_relay = if r.lambda_r < r.mu_r {
                (T::one() - r.lambda_r) / (r.mu_r - r.lambda_r)
            } else if relayed <= T::zero() {
                T::zero()
            } else {
                return SourceDelay::Unstable;
            };
            SourceDelay::Finite {
                direct,
                n_source: lambda * t_source,
                n_relay: r.lambda_r * t_relay,
                t_source,
                t_relay,
                total: t_source + relayed * t_relay,
            }
        })
        .collect();
    Ok(DelayPrediction { sources })
}

/// Optimum of the single-source problem (`M = 1`, `w₁ = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleUserResult<T> {
    /// `(1 − f_{s₁d}) f_{s₁r}`
    pub t1: T,
    /// `β₁₁*` or `α₁₁*`
    pub optimal_action: T,
    pub lambda_star: T,
    /// Whether the closed form applies; otherwise the values come from a dense scan.
    pub condition_holds: bool,
}

/// The quantities entering the equal-throughput condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Bounds<T> {
    /// `f_{rd} − g_{rd}^{s₁}`
    pub lhs: T,
    /// Bound under which `μ_{u₁}` of SBC increases in `β₁₁`.
    pub sbc_bound: T,
    /// Bound under which the DBC intersection lies on the rising side of `μ_{u₁}`;
    /// `+∞` when its denominator vanishes.
    pub dbc_bound: T,
    /// The DBC bound divided by zero.
    pub degenerate: bool,
}

impl<T: Scalar> Theorem1Bounds<T> {
    pub fn sbc_holds(&self) -> bool {
        self.lhs <= self.sbc_bound
    }

    pub fn dbc_holds(&self) -> bool {
        self.lhs <= self.dbc_bound
    }

    pub fn holds(&self) -> bool {
        self.sbc_holds() && self.dbc_holds()
    }
}

fn single_source(links: &LinkProbabilities<impl Scalar>) -> Result<()> {
    if links.num_sources() != 1 {
        return Err(Error::Unsupported(format!(
            "single-source optimum needs M = 1, got {}",
            links.num_sources()
        )));
    }
    Ok(())
}

pub fn theorem1_bounds<T: Scalar>(links: &LinkProbabilities<T>) -> Result<Theorem1Bounds<T>> {
    single_source(links)?;
    let f_sd = links.f_sd(0);
    let f_rd = links.f_rd();
    let g_rd = links.g_rd(0);
    let g_sd = links.g_sd(0);
    let t1 = links.relay_only(0);
    let sbc_bound = g_sd * (t1 + f_rd) / (t1 + f_sd);
    let den = t1 * (f_sd + t1 - g_sd);
    let (dbc_bound, degenerate) = if den == T::zero() {
        (T::infinity(), true)
    } else {
        let sum = t1 + g_rd;
        (sum * sum * (f_sd + t1) / den - (t1 + g_rd + g_rd), false)
    };
    Ok(Theorem1Bounds { lhs: f_rd - g_rd, sbc_bound, dbc_bound, degenerate })
}

/// Whether SBC and DBC reach the same single-source maximum stable throughput.
pub fn theorem1_condition<T: Scalar>(links: &LinkProbabilities<T>) -> Result<bool> {
    Ok(theorem1_bounds(links)?.holds())
}

/// Closed-form intersection `T₁/(T₁ + g_{rd}^{s₁})` and its throughput.
fn intersection<T: Scalar>(links: &LinkProbabilities<T>) -> (T, T, T) {
    let t1 = links.relay_only(0);
    let denom = t1 + links.g_rd(0);
    let action = if denom > T::zero() { t1 / denom } else { T::zero() };
    let lambda = (T::one() - action) * (links.f_sd(0) + t1) + action * links.g_sd(0);
    (t1, action, lambda)
}

/// Points of the fallback scan over the single action probability.
const SINGLE_USER_SCAN: usize = 100_000;

fn scan_single<T: Scalar>(scheme: Scheme, links: &LinkProbabilities<T>) -> (T, T) {
    let mut best = (T::zero(), T::neg_infinity());
    for k in 0..=SINGLE_USER_SCAN {
        let a = T::lit(k as f64 / SINGLE_USER_SCAN as f64);
        let policy = Policy { scheme, action: vec![vec![a]], w: vec![T::one()], helping: None };
        let mu = source_service_rate(&policy, links, 0);
        let lam = mu.min(relay_bound(relay_bound_parts(&policy, links, 0), mu));
        if lam > best.1 {
            best = (a, lam);
        }
    }
    best
}

fn single_user<T: Scalar>(scheme: Scheme, links: &LinkProbabilities<T>, holds: bool) -> SingleUserResult<T> {
    let (t1, action, lambda) = intersection(links);
    if holds {
        SingleUserResult { t1, optimal_action: action, lambda_star: lambda, condition_holds: true }
    } else {
        let (a, lam) = scan_single(scheme, links);
        SingleUserResult { t1, optimal_action: a, lambda_star: lam, condition_holds: false }
    }
}

/// Best `β₁₁` for a lone source. Closed form when `μ_{u₁}` rises in `β₁₁`.
pub fn single_user_sbc_optimum<T: Scalar>(links: &LinkProbabilities<T>) -> Result<SingleUserResult<T>> {
    let holds = theorem1_bounds(links)?.sbc_holds();
    Ok(single_user(Scheme::Sbc, links, holds))
}

/// Best `α₁₁` for a lone source. Closed form when the intersection of `μ₁`
/// and `μ_{u₁}` lies where `μ_{u₁}` still rises.
pub fn single_user_dbc_optimum<T: Scalar>(links: &LinkProbabilities<T>) -> Result<SingleUserResult<T>> {
    let holds = theorem1_bounds(links)?.dbc_holds();
    Ok(single_user(Scheme::Dbc, links, holds))
}
