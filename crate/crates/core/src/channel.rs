//! Link success probabilities under Rayleigh block fading.
//!
//! Every link `(m, n)` has an exponentially distributed power gain with mean
//! `ρ²_{m,n}`. A single transmission succeeds when its SNR clears
//! `η = (2^R − 1)/P`. With one interferer the receiver either decodes both
//! packets jointly (rate pair inside the two-user capacity region) or decodes
//! the desired packet treating the interferer as noise.
//!
//! Fading coefficients are never materialised; only their induced
//! probabilities are computed, once per scenario, into [`LinkProbabilities`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum sample count accepted by [`mc_estimate_g`].
pub const MIN_MC_SAMPLES: usize = 10_000;

/// Relative gap under which `γ₁` and `γ₂` are treated as equal in [`joint_decode_prob`].
pub const EQUAL_RATE_REL_TOL: f64 = 1e-9;

/// A node of the network. Sources are zero-based internally and print as `s1..sM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Source(usize),
    Relay,
    Destination,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Source(i) => write!(f, "s{}", i + 1),
            Node::Relay => f.write_str("r"),
            Node::Destination => f.write_str("d"),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(Node::Relay),
            "d" => Ok(Node::Destination),
            _ => {
                let idx = s
                    .strip_prefix('s')
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::Config(format!("unknown node `{s}`")))?;
                Ok(Node::Source(idx - 1))
            }
        }
    }
}

/// Fixed transmit power and spectral rate shared by all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhyParams<T> {
    pub power: T,
    pub rate: T,
}

impl<T: Scalar> PhyParams<T> {
    pub fn new(power: T, rate: T) -> Result<Self> {
        if !(power > T::zero() && power.is_finite()) {
            return Err(Error::Config(format!("power must be positive, got {power}")));
        }
        if !(rate > T::zero() && rate.is_finite()) {
            return Err(Error::Config(format!("rate must be positive, got {rate}")));
        }
        Ok(Self { power, rate })
    }

    /// Single-packet SNR threshold `(2^R − 1)/P`.
    pub fn eta(&self) -> T {
        (T::lit(2.0).powf(self.rate) - T::one()) / self.power
    }

    /// Sum-rate threshold `(2^{2R} − 1)/P` for decoding two packets jointly.
    pub fn eta_sum(&self) -> T {
        (T::lit(2.0).powf(self.rate + self.rate) - T::one()) / self.power
    }
}

/// Mean fading power `ρ²_{m,n}` per link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVariances<T> {
    num_sources: usize,
    links: BTreeMap<(Node, Node), T>,
}

impl<T: Scalar> ChannelVariances<T> {
    /// Builds the standard topology: every source reaches relay and destination,
    /// and the relay reaches the destination.
    pub fn new(source_dest: &[T], source_relay: &[T], relay_dest: T) -> Result<Self> {
        if source_dest.is_empty() || source_dest.len() != source_relay.len() {
            return Err(Error::Config(format!(
                "need matching non-empty source lists, got {} to d and {} to r",
                source_dest.len(),
                source_relay.len()
            )));
        }
        let mut links = BTreeMap::new();
        for (i, (&sd, &sr)) in source_dest.iter().zip(source_relay).enumerate() {
            links.insert((Node::Source(i), Node::Destination), sd);
            links.insert((Node::Source(i), Node::Relay), sr);
        }
        links.insert((Node::Relay, Node::Destination), relay_dest);
        Self::from_links(source_dest.len(), links)
    }

    fn from_links(num_sources: usize, links: BTreeMap<(Node, Node), T>) -> Result<Self> {
        for (&(tx, rx), &var) in &links {
            if !(var > T::zero() && var.is_finite()) {
                return Err(Error::Config(format!("variance of {tx}-{rx} must be positive, got {var}")));
            }
        }
        let out = Self { num_sources, links };
        for i in 0..num_sources {
            out.get(Node::Source(i), Node::Destination)?;
            out.get(Node::Source(i), Node::Relay)?;
        }
        out.get(Node::Relay, Node::Destination)?;
        Ok(out)
    }

    /// Parses `"<tx>-<rx>"` keyed variances. The source count is the number of
    /// distinct `s*` transmitters, which must be contiguous from `s1`.
    pub fn from_keyed<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, T)>,
    {
        let mut links = BTreeMap::new();
        let mut max_source = 0usize;
        for (key, var) in entries {
            let (tx, rx) = parse_link_key(key)?;
            if let Node::Source(i) = tx {
                max_source = max_source.max(i + 1);
            }
            if links.insert((tx, rx), var).is_some() {
                return Err(Error::Config(format!("duplicate variance key `{key}`")));
            }
        }
        if max_source == 0 {
            return Err(Error::Config("no source links in variance map".into()));
        }
        Self::from_links(max_source, links)
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn get(&self, tx: Node, rx: Node) -> Result<T> {
        self.links
            .get(&(tx, rx))
            .copied()
            .ok_or_else(|| Error::MissingLink(format!("{tx}-{rx}")))
    }

    /// Iterates `("<tx>-<rx>", ρ²)` pairs in a stable order.
    pub fn keyed(&self) -> impl Iterator<Item = (String, T)> + '_ {
        self.links.iter().map(|(&(tx, rx), &v)| (format!("{tx}-{rx}"), v))
    }
}

fn parse_link_key(key: &str) -> Result<(Node, Node)> {
    let bad = || Error::Config(format!("malformed variance key `{key}`"));
    let (tx, rx) = key.split_once('-').ok_or_else(bad)?;
    let tx: Node = tx.parse().map_err(|_| bad())?;
    let rx: Node = rx.parse().map_err(|_| bad())?;
    match (tx, rx) {
        (Node::Destination, _) | (_, Node::Source(_)) => Err(bad()),
        (Node::Relay, Node::Relay) => Err(bad()),
        _ => Ok((tx, rx)),
    }
}

/// Thresholds and exponential rates for one (desired, interferer) pair at a receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicIntegrationParams<T> {
    /// `(2^R − 1)/P`
    pub eta: T,
    /// `(2^{2R} − 1)/P`
    pub eta_sum: T,
    /// `1/ρ²` of the desired link
    pub gamma_desired: T,
    /// `1/ρ²` of the interfering link
    pub gamma_interferer: T,
}

impl<T: Scalar> SicIntegrationParams<T> {
    pub fn new(eta: T, eta_sum: T, gamma_desired: T, gamma_interferer: T) -> Result<Self> {
        if !(eta > T::zero() && eta < eta_sum) {
            return Err(Error::Config(format!("need 0 < eta < eta_sum, got {eta}, {eta_sum}")));
        }
        if !(gamma_desired > T::zero() && gamma_interferer > T::zero()) {
            return Err(Error::Config("exponential rates must be positive".into()));
        }
        Ok(Self { eta, eta_sum, gamma_desired, gamma_interferer })
    }

    pub fn for_link(phy: &PhyParams<T>, desired_var: T, interferer_var: T) -> Result<Self> {
        Self::new(phy.eta(), phy.eta_sum(), desired_var.recip(), interferer_var.recip())
    }
}

/// Interference-free success probability `exp(−(2^R − 1)/(P ρ²))`.
pub fn outage_free_prob<T: Scalar>(phy: &PhyParams<T>, variance: T) -> T {
    (-phy.eta() / variance).exp()
}

/// `f_{mn}` for a configured link.
pub fn success_prob<T: Scalar>(tx: Node, rx: Node, phy: &PhyParams<T>, var: &ChannelVariances<T>) -> Result<T> {
    Ok(outage_free_prob(phy, var.get(tx, rx)?))
}

/// Probability of decoding the desired packet while treating the interferer as noise:
/// `γ₂ e^{−ηγ₁} / (γ₂ + P γ₁ η)`.
pub fn treat_as_noise_prob<T: Scalar>(p: &SicIntegrationParams<T>, power: T) -> T {
    let g1 = p.gamma_desired;
    let g2 = p.gamma_interferer;
    g2 * (-p.eta * g1).exp() / (g2 + power * g1 * p.eta)
}

/// Probability that both packets are decodable:
/// `P{X > η, Y > η, X + Y > η₁}` for independent `X ~ Exp(γ₁)`, `Y ~ Exp(γ₂)`.
///
/// When `η₁ ≤ 2η` the sum constraint is implied by the two tails. Otherwise the
/// region splits at `x = η₁ − η`; the band `η ≤ x ≤ η₁ − η` integrates to
/// `γ₁ (e^{−γ₁η − γ₂(η₁−η)} − e^{−γ₁(η₁−η) − γ₂η}) / (γ₁ − γ₂)`, evaluated
/// through `expm1` so it stays accurate as `γ₁ → γ₂`, where it tends to
/// `γ₁ e^{−γ₂η₁} (η₁ − 2η)`.
pub fn joint_decode_prob<T: Scalar>(p: &SicIntegrationParams<T>) -> T {
    let (g1, g2) = (p.gamma_desired, p.gamma_interferer);
    let (eta, eta_sum) = (p.eta, p.eta_sum);
    let two_eta = eta + eta;
    if eta_sum <= two_eta {
        return (-(g1 + g2) * eta).exp();
    }
    let width = eta_sum - two_eta;
    let tail = (-g1 * (eta_sum - eta) - g2 * eta).exp();
    let diff = g1 - g2;
    let band = if diff.abs() < T::lit(EQUAL_RATE_REL_TOL) * g1.max(g2) {
        g1 * (-g2 * eta_sum).exp() * width
    } else {
        // e^a − e^b with both exponents non-positive
        let a = -g1 * eta - g2 * (eta_sum - eta);
        let b = -g1 * (eta_sum - eta) - g2 * eta;
        let gap = if a >= b { a.exp() * -(b - a).exp_m1() } else { -(b.exp() * -(a - b).exp_m1()) };
        g1 * gap / diff
    };
    band + tail
}

/// The three interference probabilities of one (transmitter, receiver, interferer) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterferenceProbs<T> {
    /// Both packets decoded.
    pub joint: T,
    /// Desired packet decoded treating the interferer as noise.
    pub treat_as_noise: T,
    /// `v + (1 − v) h`.
    pub success: T,
}

/// `g_{mn}^I = v + (1 − v) h`.
pub fn compose_g<T: Scalar>(joint: T, treat_as_noise: T) -> T {
    joint + (T::one() - joint) * treat_as_noise
}

pub fn interference_success_prob<T: Scalar>(
    tx: Node,
    rx: Node,
    interferer: Node,
    phy: &PhyParams<T>,
    var: &ChannelVariances<T>,
) -> Result<InterferenceProbs<T>> {
    if tx == rx || tx == interferer || rx == interferer {
        return Err(Error::Config(format!("nodes must be distinct, got {tx}, {rx}, {interferer}")));
    }
    let params = SicIntegrationParams::for_link(phy, var.get(tx, rx)?, var.get(interferer, rx)?)?;
    let joint = joint_decode_prob(&params);
    let treat_as_noise = treat_as_noise_prob(&params, phy.power);
    Ok(InterferenceProbs { joint, treat_as_noise, success: compose_g(joint, treat_as_noise) })
}

/// Cached success probabilities of one scenario.
///
/// Transmitters are indexed `0..M` for sources and `M` for the relay; receivers
/// are `0` for the relay and `1` for the destination. Entries for impossible
/// combinations hold NaN and are never exposed by the accessors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkProbabilities<T> {
    num_sources: usize,
    f: Vec<T>,
    g: Vec<T>,
    joint: Option<Vec<T>>,
    treat_as_noise: Option<Vec<T>>,
}

impl<T: Scalar> LinkProbabilities<T> {
    /// Evaluates `f` for every link and `v`, `h`, `g` for every valid triple.
    pub fn compute(phy: &PhyParams<T>, var: &ChannelVariances<T>) -> Result<Self> {
        let m = var.num_sources();
        let mut out = Self::blank(m);
        let mut joint = vec![T::nan(); out.g.len()];
        let mut tan = vec![T::nan(); out.g.len()];
        let txs: Vec<Node> = (0..m).map(Node::Source).chain([Node::Relay]).collect();
        for &tx in &txs {
            for rx in [Node::Relay, Node::Destination] {
                if tx == rx {
                    continue;
                }
                let fi = out.f_index(tx, rx);
                out.f[fi] = success_prob(tx, rx, phy, var)?;
                for &intf in &txs {
                    if intf == tx || intf == rx {
                        continue;
                    }
                    let k = out.g_index(tx, rx, intf);
                    let p = interference_success_prob(tx, rx, intf, phy, var)?;
                    out.g[k] = p.success;
                    joint[k] = p.joint;
                    tan[k] = p.treat_as_noise;
                }
            }
        }
        out.joint = Some(joint);
        out.treat_as_noise = Some(tan);
        Ok(out)
    }

    /// Builds probabilities directly from the quantities the rate formulas use.
    /// `g_sd[i]` is `g_{s_i d}^r` and `g_rd[i]` is `g_{rd}^{s_i}`.
    pub fn from_parts(f_sd: &[T], f_sr: &[T], f_rd: T, g_sd: &[T], g_rd: &[T]) -> Result<Self> {
        let m = f_sd.len();
        if m == 0 || [f_sr.len(), g_sd.len(), g_rd.len()].iter().any(|&l| l != m) {
            return Err(Error::Config("probability lists must share one non-zero length".into()));
        }
        let in_unit = |x: T| x >= T::zero() && x <= T::one();
        let all = f_sd.iter().chain(f_sr).chain(g_sd).chain(g_rd).chain([&f_rd]);
        if !all.copied().all(in_unit) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        let mut out = Self::blank(m);
        for i in 0..m {
            let s = Node::Source(i);
            let fi = out.f_index(s, Node::Destination);
            out.f[fi] = f_sd[i];
            let fi = out.f_index(s, Node::Relay);
            out.f[fi] = f_sr[i];
            let gi = out.g_index(s, Node::Destination, Node::Relay);
            out.g[gi] = g_sd[i];
            let gi = out.g_index(Node::Relay, Node::Destination, s);
            out.g[gi] = g_rd[i];
        }
        let fi = out.f_index(Node::Relay, Node::Destination);
        out.f[fi] = f_rd;
        Ok(out)
    }

    fn blank(m: usize) -> Self {
        let tx = m + 1;
        Self {
            num_sources: m,
            f: vec![T::nan(); tx * 2],
            g: vec![T::nan(); tx * 2 * tx],
            joint: None,
            treat_as_noise: None,
        }
    }

    fn tx_index(&self, n: Node) -> usize {
        match n {
            Node::Source(i) => {
                assert!(i < self.num_sources, "source s{} out of range", i + 1);
                i
            }
            Node::Relay => self.num_sources,
            Node::Destination => panic!("destination never transmits"),
        }
    }

    fn rx_index(n: Node) -> usize {
        match n {
            Node::Relay => 0,
            Node::Destination => 1,
            Node::Source(_) => panic!("sources never receive"),
        }
    }

    fn f_index(&self, tx: Node, rx: Node) -> usize {
        self.tx_index(tx) * 2 + Self::rx_index(rx)
    }

    fn g_index(&self, tx: Node, rx: Node, intf: Node) -> usize {
        (self.tx_index(tx) * 2 + Self::rx_index(rx)) * (self.num_sources + 1) + self.tx_index(intf)
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    /// `f_{mn}`. Panics on a link that does not exist in the topology.
    pub fn f(&self, tx: Node, rx: Node) -> T {
        let v = self.f[self.f_index(tx, rx)];
        assert!(!v.is_nan(), "no probability for link {tx}-{rx}");
        v
    }

    /// `g_{mn}^I`. Panics when the triple was never populated.
    pub fn g(&self, tx: Node, rx: Node, interferer: Node) -> T {
        let v = self.g[self.g_index(tx, rx, interferer)];
        assert!(!v.is_nan(), "no probability for {tx}-{rx} under {interferer}");
        v
    }

    /// `v_{mn}^I`, available when computed from a channel model.
    pub fn joint(&self, tx: Node, rx: Node, interferer: Node) -> Option<T> {
        let k = self.g_index(tx, rx, interferer);
        self.joint.as_ref().map(|v| v[k]).filter(|x| !x.is_nan())
    }

    /// `h_{mn}^I`, available when computed from a channel model.
    pub fn treat_as_noise(&self, tx: Node, rx: Node, interferer: Node) -> Option<T> {
        let k = self.g_index(tx, rx, interferer);
        self.treat_as_noise.as_ref().map(|v| v[k]).filter(|x| !x.is_nan())
    }

    pub fn f_sd(&self, i: usize) -> T {
        self.f(Node::Source(i), Node::Destination)
    }

    pub fn f_sr(&self, i: usize) -> T {
        self.f(Node::Source(i), Node::Relay)
    }

    pub fn f_rd(&self) -> T {
        self.f(Node::Relay, Node::Destination)
    }

    /// `g_{s_i d}^r`: source packet at the destination while the relay transmits.
    pub fn g_sd(&self, i: usize) -> T {
        self.g(Node::Source(i), Node::Destination, Node::Relay)
    }

    /// `g_{rd}^{s_i}`: relay packet at the destination while `s_i` transmits.
    pub fn g_rd(&self, i: usize) -> T {
        self.g(Node::Relay, Node::Destination, Node::Source(i))
    }

    /// `(1 − f_{s_i d}) f_{s_i r}`: relay-only reception probability.
    pub fn relay_only(&self, i: usize) -> T {
        (T::one() - self.f_sd(i)) * self.f_sr(i)
    }

    /// Collision model: every two-transmitter slot fails.
    pub fn without_mpr(&self) -> Self {
        let zero = |xs: &[T]| xs.iter().map(|&x| if x.is_nan() { x } else { T::zero() }).collect::<Vec<_>>();
        Self {
            num_sources: self.num_sources,
            f: self.f.clone(),
            g: zero(&self.g),
            joint: self.joint.as_deref().map(zero),
            treat_as_noise: self.treat_as_noise.as_deref().map(zero),
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> LinkProbabilities<U> {
        let conv = |xs: &[T]| xs.iter().map(|&x| U::lit(x.to_f64_lossy())).collect::<Vec<_>>();
        LinkProbabilities {
            num_sources: self.num_sources,
            f: conv(&self.f),
            g: conv(&self.g),
            joint: self.joint.as_deref().map(conv),
            treat_as_noise: self.treat_as_noise.as_deref().map(conv),
        }
    }
}

/// Monte Carlo estimate of an interference success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    /// Fraction of draws where the desired packet is decoded by either route.
    pub estimate: f64,
    pub standard_error: f64,
    /// Fraction of draws inside the joint-decoding region.
    pub joint: f64,
    pub joint_standard_error: f64,
    /// Fraction of draws decodable treating the interferer as noise.
    pub treat_as_noise: f64,
    pub treat_as_noise_standard_error: f64,
    pub samples: usize,
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Samples `(|h_{m,n}|², |h_{I,n}|²)` and counts successes of the desired packet.
///
/// A draw succeeds when it lies in the joint-decoding region
/// `{x > η, y > η, x + y > η₁}` or when `log₂(1 + Px/(Py + 1)) > R`.
pub fn mc_estimate_g(
    tx: Node,
    rx: Node,
    interferer: Node,
    phy: &PhyParams<f64>,
    var: &ChannelVariances<f64>,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::Config(format!("need at least {MIN_MC_SAMPLES} samples, got {samples}")));
    }
    if tx == rx || tx == interferer || rx == interferer {
        return Err(Error::Config(format!("nodes must be distinct, got {tx}, {rx}, {interferer}")));
    }
    let desired = Exp::new(var.get(tx, rx)?.recip()).map_err(|e| Error::Config(e.to_string()))?;
    let intf = Exp::new(var.get(interferer, rx)?.recip()).map_err(|e| Error::Config(e.to_string()))?;
    let (eta, eta_sum, power) = (phy.eta(), phy.eta_sum(), phy.power);
    let sinr_threshold = 2f64.powf(phy.rate) - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut joint_hits, mut tan_hits) = (0usize, 0usize, 0usize);
    for _ in 0..samples {
        let x: f64 = desired.sample(&mut rng);
        let y: f64 = intf.sample(&mut rng);
        let joint = x > eta && y > eta && x + y > eta_sum;
        let tan = power * x / (power * y + 1.0) > sinr_threshold;
        hits += usize::from(joint || tan);
        joint_hits += usize::from(joint);
        tan_hits += usize::from(tan);
    }
    let n = samples as f64;
    let (p, pj, pt) = (hits as f64 / n, joint_hits as f64 / n, tan_hits as f64 / n);
    Ok(McEstimate {
        estimate: p,
        standard_error: binomial_se(p, samples),
        joint: pj,
        joint_standard_error: binomial_se(pj, samples),
        treat_as_noise: pt,
        treat_as_noise_standard_error: binomial_se(pt, samples),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phy() -> PhyParams<f64> {
        PhyParams::new(10.0, 1.0).unwrap()
    }

    fn two_link(desired: f64, interferer: f64) -> ChannelVariances<f64> {
        ChannelVariances::new(&[desired, interferer], &[0.5, 0.5], 0.5).unwrap()
    }

    #[test]
    fn f_matches_hand_values() {
        let p = phy();
        assert!((outage_free_prob(&p, 0.02) - 0.006_737_946_999_085_467).abs() < 1e-15);
        assert!((outage_free_prob(&p, 0.84) - 0.887_765_525_206_577_9).abs() < 1e-14);
    }

    #[test]
    fn f_tends_to_one_at_zero_rate() {
        let p = PhyParams::new(10.0f64, 1e-12).unwrap();
        assert!((outage_free_prob(&p, 0.02) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn h_matches_quadrature() {
        // mpmath quadrature of ∫ γ₂e^{−γ₂y} e^{−γ₁η(Py+1)} dy
        let p = SicIntegrationParams::new(0.1, 0.3, 1.25, 1.0 / 0.97).unwrap();
        assert!((treat_as_noise_prob(&p, 10.0f64) - 0.398_868_656_535_410_35).abs() < 1e-14);
    }

    #[test]
    fn h_limits() {
        let weak = SicIntegrationParams::new(0.1f64, 0.3, 1.25, 1e12).unwrap();
        assert!((treat_as_noise_prob(&weak, 10.0) - (-0.125f64).exp()).abs() < 1e-9);
        let strong = SicIntegrationParams::new(0.1, 0.3, 1.25, 1e-12).unwrap();
        assert!(treat_as_noise_prob(&strong, 10.0) < 1e-10);
    }

    #[test]
    fn v_matches_quadrature() {
        // mpmath quadrature of the region integral, 30 digits
        let cases = [
            ((0.1, 0.3, 1.0, 1.0), 0.814_900_042_749_889_7),
            ((0.1, 0.3, 1.25, 1.0 / 0.97), 0.791_294_952_774_201_4),
            ((0.1, 0.3, 50.0, 1.0 / 0.03), 2.248_562_372_339_165_5e-5),
            ((0.3, 0.5, 2.0, 3.0), 0.223_130_160_148_429_83),
            ((0.1, 1.5, 0.7, 4.0), 0.304_212_335_316_895_1),
        ];
        for ((eta, eta_sum, g1, g2), want) in cases {
            let p = SicIntegrationParams::new(eta, eta_sum, g1, g2).unwrap();
            let got: f64 = joint_decode_prob(&p);
            assert!(((got - want) / want).abs() < 1e-12, "{eta} {eta_sum} {g1} {g2}: {got} vs {want}");
        }
    }

    #[test]
    fn v_degenerate_region() {
        let p = SicIntegrationParams::new(0.3, 0.5, 2.0, 3.0).unwrap();
        assert_eq!(joint_decode_prob(&p), (-1.5f64).exp());
    }

    #[test]
    fn v_continuous_across_equal_rates() {
        let at = |g2: f64| joint_decode_prob(&SicIntegrationParams::new(0.1, 0.3, 1.7, g2).unwrap());
        let base = at(1.7);
        for g2 in [1.7 * (1.0 - 1e-6), 1.7 * (1.0 + 1e-6), 1.7 * (1.0 + 1e-10)] {
            assert!(((at(g2) - base) / base).abs() < 1e-4);
        }
    }

    #[test]
    fn g_composition_identities() {
        assert_eq!(compose_g(0.0, 0.0), 0.0);
        assert_eq!(compose_g(1.0, 0.3), 1.0);
        assert_eq!(compose_g(0.0, 0.4), 0.4);
    }

    #[test]
    fn g_for_reference_link() {
        let var = ChannelVariances::new(&[0.8], &[0.5], 0.97).unwrap();
        let p = interference_success_prob(Node::Source(0), Node::Destination, Node::Relay, &phy(), &var).unwrap();
        // v, h from quadrature; composed by hand
        assert!((p.joint - 0.791_294_952_774_201_4).abs() < 1e-12);
        assert!((p.treat_as_noise - 0.398_868_656_535_410_35).abs() < 1e-12);
        assert!((p.success - 0.874_540_854_573_315_1).abs() < 1e-12);
    }

    #[test]
    fn missing_link_is_config_error() {
        let var = ChannelVariances::from_keyed([("s1-d", 0.5), ("r-d", 0.5)]);
        assert!(matches!(var, Err(Error::MissingLink(_))));
    }

    #[test]
    fn keyed_parsing() {
        let var = ChannelVariances::from_keyed([
            ("s1-d", 0.02),
            ("s2-d", 0.84),
            ("s1-r", 0.97),
            ("s2-r", 0.93),
            ("r-d", 0.03),
        ])
        .unwrap();
        assert_eq!(var.num_sources(), 2);
        assert_eq!(var.get(Node::Source(1), Node::Relay).unwrap(), 0.93);
        for bad in ["s1d", "x-d", "s0-d", "d-r", "r-r", "s1-s2"] {
            let err = ChannelVariances::from_keyed([(bad, 0.5)]).unwrap_err();
            assert!(err.to_string().contains(bad), "{err}");
        }
    }

    #[test]
    fn link_table_accessors_and_collision_model() {
        let var = ChannelVariances::new(&[0.02, 0.84], &[0.97, 0.93], 0.03).unwrap();
        let links = LinkProbabilities::compute(&phy(), &var).unwrap();
        assert!((links.f_sd(0) - (-5f64).exp()).abs() < 1e-15);
        assert!(links.g_sd(1) <= links.f_sd(1));
        let cm = links.without_mpr();
        assert_eq!(cm.g_rd(0), 0.0);
        assert_eq!(cm.f_rd(), links.f_rd());
        let f32_links: LinkProbabilities<f32> = links.cast();
        assert!((f32_links.g_sd(1) as f64 - links.g_sd(1)).abs() < 1e-6);
    }

    #[test]
    fn mc_refuses_small_sample_and_is_deterministic() {
        let var = two_link(0.8, 0.97);
        let s = Node::Source(0);
        let i = Node::Source(1);
        assert!(mc_estimate_g(s, Node::Destination, i, &phy(), &var, 100, 1).is_err());
        let a = mc_estimate_g(s, Node::Destination, i, &phy(), &var, 20_000, 7).unwrap();
        let b = mc_estimate_g(s, Node::Destination, i, &phy(), &var, 20_000, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mc_vanishing_interference_recovers_f() {
        let var = two_link(0.8, 1e-9);
        let est = mc_estimate_g(Node::Source(0), Node::Destination, Node::Source(1), &phy(), &var, 200_000, 3).unwrap();
        let f = outage_free_prob(&phy(), 0.8);
        assert!((est.estimate - f).abs() <= 3.0 * est.standard_error);
    }
}
