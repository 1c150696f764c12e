//! Slot-level simulation of the source, relay and destination queues.
//!
//! Each slot: the owner is drawn with probability `w_i`, Bernoulli arrivals
//! join every source queue, the relay picks its action, and reception
//! outcomes are drawn independently from their marginal probabilities.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{DemandVector, Policy, Scheme};
use crate::channel::LinkProbabilities;
use crate::error::{Error, Result};

pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const DEFAULT_WARMUP: u64 = 100_000;
/// Blocks used for queue trajectories and batch means. A multiple of 3.
pub const DEFAULT_BLOCKS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub policy: Policy<f64>,
    pub demand: DemandVector<f64>,
    pub links: LinkProbabilities<f64>,
    pub horizon: u64,
    pub seed: u64,
    /// Relay sends a dummy whenever the queue it picked is empty.
    pub dominant_mode: bool,
    /// Sources whose queue is topped up with a dummy packet whenever it empties.
    pub saturated: Vec<usize>,
    pub warmup: u64,
    pub blocks: usize,
}

impl SimConfig {
    pub fn new(policy: Policy<f64>, demand: DemandVector<f64>, links: LinkProbabilities<f64>, seed: u64) -> Self {
        Self {
            policy,
            demand,
            links,
            horizon: DEFAULT_HORIZON,
            seed,
            dominant_mode: false,
            saturated: Vec::new(),
            warmup: DEFAULT_WARMUP,
            blocks: DEFAULT_BLOCKS,
        }
    }

    /// Dominant system as seen by `probe`: every other source saturated.
    pub fn dominant_for(mut self, probe: usize) -> Self {
        self.dominant_mode = true;
        self.saturated = (0..self.policy.num_sources()).filter(|&j| j != probe).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.policy.num_sources();
        if self.links.num_sources() != m || self.demand.len() != m {
            return Err(Error::Config(format!(
                "policy has {m} sources, channel {}, demand {}",
                self.links.num_sources(),
                self.demand.len()
            )));
        }
        if self.horizon <= self.warmup {
            return Err(Error::Config(format!("horizon {} must exceed warmup {}", self.horizon, self.warmup)));
        }
        if self.blocks == 0 || self.blocks as u64 > self.horizon - self.warmup {
            return Err(Error::Config("block count must be in [1, horizon - warmup]".into()));
        }
        if let Some(&s) = self.saturated.iter().find(|&&s| s >= m) {
            return Err(Error::Config(format!("saturated source {} out of range", s + 1)));
        }
        Ok(())
    }
}

/// Relay actions taken in slots owned by one source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub listen: u64,
    /// Owner idle, relay transmitted from the owner's relay queue.
    pub transmit_idle: u64,
    /// Owner busy, relay transmitted from `Q_{r_j}`; indexed by `j`.
    pub interfere: Vec<u64>,
    /// Relay neither listened nor transmitted.
    pub silent: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub arrival_rate: f64,
    /// Packets (dummies included) leaving the source queue per slot.
    pub departure_rate: f64,
    /// Real packets reaching the destination per slot.
    pub delivery_rate: f64,
    pub mean_source_queue: f64,
    pub mean_relay_queue: f64,
    pub mean_delay: Option<f64>,
    /// Standard error of `mean_delay` from batch means.
    pub delay_stderr: Option<f64>,
    pub delivered: u64,
    pub delay_histogram: BTreeMap<u64, u64>,
    pub owner_slots: u64,
    /// Owned slots in which the source queue was non-empty.
    pub busy_slots: u64,
    pub actions: ActionCounts,
    /// Per-block mean lengths of `Q_{s_i}` and `Q_{r_i}`.
    pub source_trajectory: Vec<f64>,
    pub relay_trajectory: Vec<f64>,
    /// Per-block fraction of slots with `Q_{s_i}` (resp. `Q_{r_i}`) empty.
    pub source_idle: Vec<f64>,
    pub relay_idle: Vec<f64>,
}

/// Whole-run counts of real packets, warmup included.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub arrivals: Vec<u64>,
    pub delivered: Vec<u64>,
    pub queued: Vec<u64>,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        (0..self.arrivals.len()).all(|i| self.arrivals[i] == self.delivered[i] + self.queued[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub seed: u64,
    pub horizon: u64,
    pub warmup: u64,
    pub dominant_mode: bool,
    pub sources: Vec<SourceStats>,
    /// Dummy transmissions by the relay.
    pub relay_dummies: u64,
    /// Dummy packets injected into saturated source queues.
    pub source_dummies: u64,
    /// Slots in which the relay both transmitted and received. Always zero.
    pub half_duplex_violations: u64,
    pub conservation: Conservation,
}

impl SimStats {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// `delay_slots,count` rows for source `i`.
    pub fn delay_histogram_csv(&self, i: usize) -> String {
        let mut out = String::from("delay_slots,count\n");
        for (d, c) in &self.sources[i].delay_histogram {
            out.push_str(&format!("{d},{c}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    arrival: u64,
    dummy: bool,
}

/// What the relay does in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RelayMove {
    Listen,
    Send { queue: usize, dummy: bool },
    Silent,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    links: LinkProbabilities<f64>,
    rng: ChaCha8Rng,
    src: Vec<VecDeque<Packet>>,
    relay: Vec<VecDeque<Packet>>,
    stats: SimStats,
    departures: Vec<u64>,
    deliveries: Vec<u64>,
    arrivals: Vec<u64>,
    src_len_sum: Vec<f64>,
    relay_len_sum: Vec<f64>,
    block_src: Vec<Vec<f64>>,
    block_relay: Vec<Vec<f64>>,
    block_src_idle: Vec<Vec<f64>>,
    block_relay_idle: Vec<Vec<f64>>,
    block_delay: Vec<Vec<(f64, u64)>>,
    delay_sum: Vec<f64>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let m = cfg.policy.num_sources();
        let zeros = vec![0.0; m];
        Self {
            cfg,
            links: cfg.policy.scheme().effective_links(&cfg.links),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            src: vec![VecDeque::new(); m],
            relay: vec![VecDeque::new(); m],
            stats: SimStats {
                seed: cfg.seed,
                horizon: cfg.horizon,
                warmup: cfg.warmup,
                dominant_mode: cfg.dominant_mode,
                sources: (0..m)
                    .map(|_| SourceStats {
                        actions: ActionCounts { interfere: vec![0; m], ..Default::default() },
                        ..Default::default()
                    })
                    .collect(),
                relay_dummies: 0,
                source_dummies: 0,
                half_duplex_violations: 0,
                conservation: Conservation { arrivals: vec![0; m], delivered: vec![0; m], queued: vec![0; m] },
            },
            departures: vec![0; m],
            deliveries: vec![0; m],
            arrivals: vec![0; m],
            src_len_sum: zeros.clone(),
            relay_len_sum: zeros,
            block_src: vec![vec![0.0; cfg.blocks]; m],
            block_relay: vec![vec![0.0; cfg.blocks]; m],
            block_src_idle: vec![vec![0.0; cfg.blocks]; m],
            block_relay_idle: vec![vec![0.0; cfg.blocks]; m],
            block_delay: vec![vec![(0.0, 0); cfg.blocks]; m],
            delay_sum: vec![0.0; m],
        }
    }

    fn owner(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let w = self.cfg.policy.w();
        let mut acc = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc {
                return i;
            }
        }
        // rounding in Σw: fall back to the last source with a positive share
        w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
    }

    fn relay_move(&mut self, owner: usize, busy: bool) -> RelayMove {
        let p = &self.cfg.policy;
        let m = p.num_sources();
        let dominant = self.cfg.dominant_mode;
        let pick = |rng: &mut ChaCha8Rng| -> Option<usize> {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for j in 0..m {
                acc += p.action(owner, j);
                if u < acc {
                    return Some(j);
                }
            }
            None
        };
        let sensing = !p.scheme().is_decision_based();
        let choice = if sensing && !busy { Some(owner) } else { pick(&mut self.rng) };
        match choice {
            Some(q) if !self.relay[q].is_empty() => RelayMove::Send { queue: q, dummy: false },
            Some(q) if dominant => RelayMove::Send { queue: q, dummy: true },
            // empty queue in the real system: an idle-slot relay stays silent,
            // otherwise it listens instead
            Some(_) if sensing && !busy => RelayMove::Silent,
            _ if busy => RelayMove::Listen,
            _ => RelayMove::Silent,
        }
    }

    fn deliver(&mut self, source: usize, pkt: Packet, t: u64, measured: bool, block: usize) {
        if pkt.dummy {
            return;
        }
        self.stats.conservation.delivered[source] += 1;
        if measured {
            let d = t - pkt.arrival + 1;
            self.deliveries[source] += 1;
            self.delay_sum[source] += d as f64;
            *self.stats.sources[source].delay_histogram.entry(d).or_insert(0) += 1;
            let b = &mut self.block_delay[source][block];
            b.0 += d as f64;
            b.1 += 1;
        }
    }

    fn run(mut self) -> SimStats {
        let cfg = self.cfg;
        let m = cfg.policy.num_sources();
        let measured_slots = cfg.horizon - cfg.warmup;
        let block_len = measured_slots / cfg.blocks as u64;
        let mut saturated = vec![false; m];
        for &s in &cfg.saturated {
            saturated[s] = true;
        }
        for t in 0..cfg.horizon {
            let measured = t >= cfg.warmup;
            let block = if measured { (((t - cfg.warmup) / block_len) as usize).min(cfg.blocks - 1) } else { 0 };
            let owner = self.owner();
            for i in 0..m {
                let lam = cfg.demand.rates()[i];
                if lam > 0.0 && self.rng.random::<f64>() < lam {
                    self.src[i].push_back(Packet { arrival: t, dummy: false });
                    self.stats.conservation.arrivals[i] += 1;
                    if measured {
                        self.arrivals[i] += 1;
                    }
                }
                if saturated[i] && self.src[i].is_empty() {
                    self.src[i].push_back(Packet { arrival: t, dummy: true });
                    self.stats.source_dummies += 1;
                }
            }
            let busy = !self.src[owner].is_empty();
            let mv = self.relay_move(owner, busy);
            if measured {
                let s = &mut self.stats.sources[owner];
                s.owner_slots += 1;
                s.busy_slots += busy as u64;
                match mv {
                    RelayMove::Listen => s.actions.listen += 1,
                    RelayMove::Send { queue, .. } if busy => s.actions.interfere[queue] += 1,
                    RelayMove::Send { .. } => s.actions.transmit_idle += 1,
                    RelayMove::Silent => s.actions.silent += 1,
                }
            }
            let relay_sends = matches!(mv, RelayMove::Send { .. });
            let mut relay_received = false;
            if let RelayMove::Send { dummy: true, .. } = mv {
                self.stats.relay_dummies += 1;
            }
            let (p_src, p_relay) = if relay_sends && busy {
                (self.links.g_sd(owner), self.links.g_rd(owner))
            } else {
                (self.links.f_sd(owner), self.links.f_rd())
            };
            if busy {
                let at_dest = self.rng.random::<f64>() < p_src;
                if at_dest {
                    let pkt = self.src[owner].pop_front().expect("busy queue");
                    self.deliver(owner, pkt, t, measured, block);
                    if measured {
                        self.departures[owner] += 1;
                    }
                } else if mv == RelayMove::Listen && self.rng.random::<f64>() < self.links.f_sr(owner) {
                    relay_received = true;
                    if cfg.policy.helps(owner) {
                        let pkt = self.src[owner].pop_front().expect("busy queue");
                        self.relay[owner].push_back(pkt);
                        if measured {
                            self.departures[owner] += 1;
                        }
                    }
                }
            }
            if let RelayMove::Send { queue, dummy } = mv {
                if self.rng.random::<f64>() < p_relay && !dummy {
                    let pkt = self.relay[queue].pop_front().expect("non-empty relay queue");
                    self.deliver(queue, pkt, t, measured, block);
                }
            }
            if relay_sends && relay_received {
                self.stats.half_duplex_violations += 1;
            }
            if measured {
                for i in 0..m {
                    let (ls, lr) = (self.src[i].len() as f64, self.relay[i].len() as f64);
                    self.src_len_sum[i] += ls;
                    self.relay_len_sum[i] += lr;
                    self.block_src[i][block] += ls;
                    self.block_relay[i][block] += lr;
                    self.block_src_idle[i][block] += f64::from(u8::from(ls == 0.0));
                    self.block_relay_idle[i][block] += f64::from(u8::from(lr == 0.0));
                }
            }
        }
        self.finish(measured_slots, block_len)
    }

    fn finish(mut self, measured_slots: u64, block_len: u64) -> SimStats {
        let n = measured_slots as f64;
        let blocks = self.cfg.blocks;
        let last_len = (measured_slots - block_len * (blocks as u64 - 1)) as f64;
        let block_size = |b: usize| if b + 1 == blocks { last_len } else { block_len as f64 };
        for i in 0..self.src.len() {
            let real = |q: &VecDeque<Packet>| q.iter().filter(|p| !p.dummy).count() as u64;
            self.stats.conservation.queued[i] = real(&self.src[i]) + real(&self.relay[i]);
            let s = &mut self.stats.sources[i];
            s.arrival_rate = self.arrivals[i] as f64 / n;
            s.departure_rate = self.departures[i] as f64 / n;
            s.delivery_rate = self.deliveries[i] as f64 / n;
            s.delivered = self.deliveries[i];
            s.mean_source_queue = self.src_len_sum[i] / n;
            s.mean_relay_queue = self.relay_len_sum[i] / n;
            s.source_trajectory = (0..blocks).map(|b| self.block_src[i][b] / block_size(b)).collect();
            s.relay_trajectory = (0..blocks).map(|b| self.block_relay[i][b] / block_size(b)).collect();
            s.source_idle = (0..blocks).map(|b| self.block_src_idle[i][b] / block_size(b)).collect();
            s.relay_idle = (0..blocks).map(|b| self.block_relay_idle[i][b] / block_size(b)).collect();
            if self.deliveries[i] > 0 {
                s.mean_delay = Some(self.delay_sum[i] / self.deliveries[i] as f64);
                s.delay_stderr = batch_stderr(&self.block_delay[i]);
            }
        }
        self.stats
    }
}

/// Standard error of the mean from per-batch `(sum, count)` pairs.
fn batch_stderr(batches: &[(f64, u64)]) -> Option<f64> {
    let means: Vec<f64> = batches.iter().filter(|b| b.1 > 0).map(|b| b.0 / b.1 as f64).collect();
    let k = means.len();
    if k < 2 {
        return None;
    }
    let mean = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Some((var / k as f64).sqrt())
}

/// Runs one simulation. Identical configs give identical statistics.
pub fn simulate(config: &SimConfig) -> Result<SimStats> {
    config.validate()?;
    if config.policy.scheme() == Scheme::Ccma && config.policy.helping_mask().is_none() {
        return Err(Error::InvalidPolicy("CCMA policy without helping mask".into()));
    }
    Ok(Sim::new(config).run())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueVerdict {
    Bounded,
    Growing,
}

/// Idle fraction below which a queue counts as growing.
pub const IDLE_FLOOR: f64 = 0.002;

/// A queue grows when it was almost never empty over the second half of the
/// window. A stable queue stays idle for about one minus its utilisation.
pub fn classify_queue(idle: &[f64]) -> QueueVerdict {
    let half = &idle[idle.len() / 2..];
    if half.is_empty() {
        return QueueVerdict::Bounded;
    }
    if half.iter().sum::<f64>() / (half.len() as f64) < IDLE_FLOOR {
        QueueVerdict::Growing
    } else {
        QueueVerdict::Bounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeVerdict {
    pub factor: f64,
    pub demand: Vec<f64>,
    pub source_queues: Vec<QueueVerdict>,
    pub relay_queues: Vec<QueueVerdict>,
}

impl ProbeVerdict {
    /// Queues of saturated sources are excluded.
    pub fn all_bounded(&self, saturated: &[usize]) -> bool {
        (0..self.source_queues.len())
            .filter(|i| !saturated.contains(i))
            .all(|i| self.source_queues[i] == QueueVerdict::Bounded && self.relay_queues[i] == QueueVerdict::Bounded)
    }
}

fn verdicts(stats: &SimStats) -> (Vec<QueueVerdict>, Vec<QueueVerdict>) {
    (
        stats.sources.iter().map(|s| classify_queue(&s.source_idle)).collect(),
        stats.sources.iter().map(|s| classify_queue(&s.relay_idle)).collect(),
    )
}

/// Simulates `factor · boundary` for every factor and classifies each queue.
/// Growth is judged from an empty system, so the warmup is dropped. Demands
/// are capped just below one packet per slot.
pub fn stability_probe(base: &SimConfig, boundary: &[f64], factors: &[f64]) -> Result<Vec<ProbeVerdict>> {
    use rayon::prelude::*;
    factors
        .par_iter()
        .map(|&factor| {
            let demand: Vec<f64> = boundary.iter().map(|&b| (factor * b).clamp(0.0, 1.0 - 1e-9)).collect();
            let mut cfg = base.clone();
            cfg.demand = DemandVector::new(demand.clone())?;
            cfg.warmup = 0;
            let stats = simulate(&cfg)?;
            let (source_queues, relay_queues) = verdicts(&stats);
            Ok(ProbeVerdict { factor, demand, source_queues, relay_queues })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayMeasurement {
    pub demand: Vec<f64>,
    /// `None` for a source whose queues grew or that delivered nothing.
    pub mean_delay: Vec<Option<f64>>,
    pub stderr: Vec<Option<f64>>,
    pub stable: Vec<bool>,
}

/// Empirical mean end-to-end delay at every demand vector of the grid.
pub fn delay_measurement(base: &SimConfig, grid: &[Vec<f64>]) -> Result<Vec<DelayMeasurement>> {
    use rayon::prelude::*;
    grid.par_iter()
        .map(|demand| {
            let mut cfg = base.clone();
            cfg.demand = DemandVector::new(demand.clone())?;
            let stats = simulate(&cfg)?;
            let (sq, rq) = verdicts(&stats);
            let stable: Vec<bool> =
                (0..sq.len()).map(|i| sq[i] == QueueVerdict::Bounded && rq[i] == QueueVerdict::Bounded).collect();
            Ok(DelayMeasurement {
                demand: demand.clone(),
                mean_delay: stats.sources.iter().zip(&stable).map(|(s, &ok)| if ok { s.mean_delay } else { None }).collect(),
                stderr: stats.sources.iter().zip(&stable).map(|(s, &ok)| if ok { s.delay_stderr } else { None }).collect(),
                stable,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perfect_single() -> (Policy<f64>, LinkProbabilities<f64>) {
        let links = LinkProbabilities::from_parts(&[1.0], &[0.5], 0.9, &[0.8], &[0.7]).unwrap();
        (Policy::new(Scheme::Sbc, vec![vec![0.0]], vec![1.0]).unwrap(), links)
    }

    #[test]
    fn no_traffic_no_departures() {
        let (p, l) = perfect_single();
        let mut cfg = SimConfig::new(p, DemandVector::zeros(1), l, 1);
        cfg.horizon = 20_000;
        cfg.warmup = 1_000;
        let s = simulate(&cfg).unwrap();
        assert_eq!(s.sources[0].departure_rate, 0.0);
        assert_eq!(s.sources[0].mean_source_queue, 0.0);
        assert!(s.conservation.holds());
    }

    #[test]
    fn perfect_channel_delay_is_one_slot() {
        let (p, l) = perfect_single();
        let mut cfg = SimConfig::new(p, DemandVector::new(vec![0.5]).unwrap(), l, 7);
        cfg.horizon = 50_000;
        cfg.warmup = 1_000;
        let s = simulate(&cfg).unwrap();
        assert_eq!(s.sources[0].mean_delay, Some(1.0));
        assert_eq!(s.sources[0].delay_histogram.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn seed_determinism() {
        let links = LinkProbabilities::from_parts(&[0.3, 0.6], &[0.8, 0.7], 0.9, &[0.2, 0.4], &[0.5, 0.6]).unwrap();
        let p = Policy::new(Scheme::Dbc, vec![vec![0.2, 0.3], vec![0.1, 0.4]], vec![0.4, 0.6]).unwrap();
        let mut cfg = SimConfig::new(p, DemandVector::new(vec![0.1, 0.2]).unwrap(), links, 42);
        cfg.horizon = 30_000;
        cfg.warmup = 3_000;
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 43;
        assert_ne!(a, simulate(&cfg).unwrap());
    }

    #[test]
    fn classifier_reads_idle_fraction() {
        let mut draining: Vec<f64> = vec![0.0; 15];
        draining.extend([0.05; 15]);
        let mut filling: Vec<f64> = vec![0.05; 15];
        filling.extend([0.0; 15]);
        assert_eq!(classify_queue(&draining), QueueVerdict::Bounded);
        assert_eq!(classify_queue(&filling), QueueVerdict::Growing);
        assert_eq!(classify_queue(&[1.0; 30]), QueueVerdict::Bounded);
    }

    #[test]
    fn rejects_bad_windows() {
        let (p, l) = perfect_single();
        let mut cfg = SimConfig::new(p, DemandVector::zeros(1), l, 1);
        cfg.warmup = cfg.horizon;
        assert!(simulate(&cfg).is_err());
    }
}
