//! `run` and `oracle-check` on scenario files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use relaystab_core::analytic::{evaluate_rates, predict_delay};
use relaystab_core::optimizer::{grid_oracle, optimize, region_sweep, OptimizedPolicy, RegionSweep, SolverStatus};
use relaystab_core::simulator::{simulate, SimConfig, SimStats};
use relaystab_core::{DemandVector, Policy};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{header, indexed, num, opt_num, sha256_hex, to_value, write_summary, OutputDir, RunReport, SummaryInput};
use crate::scenario::{parse, resolve, Resolved, SimSpec};

/// Oracle ratio below which `oracle-check` reports a solver failure.
pub const ORACLE_RATIO_MIN: f64 = 0.99;

pub fn load(path: &Path) -> CliResult<(Resolved, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Validation(format!("{} is not UTF-8", path.display())))?;
    let scenario = parse(&text, &path.display().to_string())?;
    Ok((resolve(scenario)?, bytes))
}

pub(crate) fn region_table(sweep: &RegionSweep, m: usize, with_oracle: bool) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head = indexed("w", m);
    head.extend(indexed("x", m));
    head.extend(indexed("lambda_s", m));
    head.extend(header(&["objective", "solver_status"]));
    if with_oracle {
        head.push("oracle_objective".into());
    }
    let rows = sweep
        .points
        .iter()
        .map(|p| {
            let mut r: Vec<String> = p.w.iter().chain(&p.weights).chain(&p.lambda_s).copied().map(num).collect();
            r.push(num(p.objective));
            r.push(p.status.label().into());
            if with_oracle {
                r.push(opt_num(p.oracle_objective));
            }
            r
        })
        .collect();
    (head, rows)
}

pub(crate) fn hull_table(sweep: &RegionSweep) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = sweep.hull.iter().flatten().map(|p| vec![num(p[0]), num(p[1])]).collect();
    (header(&["lambda_s_1", "lambda_s_2"]), rows)
}

pub(crate) fn sweep_failures(sweep: &RegionSweep) -> usize {
    sweep.points.iter().filter(|p| !p.status.is_success()).count()
}

fn sim_config(spec: &SimSpec, policy: &Policy<f64>, demand: DemandVector<f64>, r: &Resolved) -> SimConfig {
    let mut cfg = SimConfig::new(policy.clone(), demand, r.links.clone(), spec.seed);
    cfg.horizon = spec.horizon;
    cfg.warmup = spec.warmup;
    cfg.blocks = spec.blocks;
    cfg.dominant_mode = spec.dominant_mode;
    cfg.saturated = spec.saturated.iter().map(|s| s - 1).collect();
    cfg
}

fn write_sim(out: &mut OutputDir, stats: &SimStats) -> CliResult<()> {
    out.json("sim_stats.json", stats)?;
    for i in 0..stats.sources.len() {
        out.text(&format!("delay_histogram_s{}.csv", i + 1), &stats.delay_histogram_csv(i))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluation<'a> {
    policy: &'a Policy<f64>,
    demand: &'a [f64],
    stability: relaystab_core::StabilityEvaluation<f64>,
    delay: relaystab_core::analytic::DelayPrediction<f64>,
}

/// Runs everything a scenario asks for and writes it under `out_dir`.
pub fn run_scenario(path: &Path, out_dir: &Path) -> CliResult<RunReport> {
    let started = Instant::now();
    let (r, bytes) = load(path)?;
    let mut out = OutputDir::create(out_dir)?;
    let sc = &r.scenario;
    let m = r.num_sources();
    let mut failures = 0;
    let mut results = serde_json::Map::new();

    let policy = match r.fixed_policy()? {
        Some(p) => p,
        None => {
            let o = sc.optimize.as_ref().expect("resolve checked policy/optimize");
            let opt: OptimizedPolicy = optimize(sc.scheme, &r.links, &o.w, &o.weights, &sc.optimizer)?;
            let oracle = if o.oracle { Some(grid_oracle(sc.scheme, &r.links, &o.w, &o.weights, sc.optimizer.oracle_step)?) } else { None };
            if !opt.diagnostics.status.is_success() {
                failures += 1;
            }
            let mut head = indexed("w", m);
            head.extend(indexed("x", m));
            head.extend(indexed("lambda_s", m));
            head.extend(header(&["objective", "solver_status"]));
            let mut row: Vec<String> = o.w.iter().chain(&o.weights).chain(&opt.lambda_s).copied().map(num).collect();
            row.push(num(opt.objective));
            row.push(opt.diagnostics.status.label().into());
            if let Some(or) = &oracle {
                head.push("oracle_objective".into());
                row.push(num(or.objective));
            }
            out.csv("optimizer.csv", &head, &[row])?;
            let hist: Vec<Vec<String>> = opt
                .diagnostics
                .history
                .iter()
                .enumerate()
                .map(|(k, h)| vec![(k + 1).to_string(), num(h.objective), num(h.max_slack), num(h.step), num(h.kkt)])
                .collect();
            out.csv("optimizer_history.csv", &header(&["iteration", "objective", "max_slack", "step", "kkt"]), &hist)?;
            results.insert(
                "optimizer".into(),
                json!({
                    "status": opt.diagnostics.status,
                    "iterations": opt.diagnostics.iterations,
                    "objective": opt.objective,
                    "lambda_s": opt.lambda_s,
                    "action": opt.policy.actions(),
                    "oracle": oracle.as_ref().map(|o| json!({"objective": o.objective, "action": o.action})),
                }),
            );
            opt.policy
        }
    };

    let demand = r.demand()?;
    let eval = Evaluation {
        policy: &policy,
        demand: demand.rates(),
        stability: evaluate_rates(&policy, &r.links, &demand)?,
        delay: predict_delay(&policy, &r.links, &demand)?,
    };
    out.json("evaluation.json", &eval)?;

    if let Some(cfg) = r.region_config() {
        let sweep = region_sweep(sc.scheme, &r.links, &cfg)?;
        failures += sweep_failures(&sweep);
        let (h, rows) = region_table(&sweep, m, cfg.oracle);
        out.csv("region_points.csv", &h, &rows)?;
        if sweep.hull.is_some() {
            let (h, rows) = hull_table(&sweep);
            out.csv("region_hull.csv", &h, &rows)?;
        }
        results.insert("region_points".into(), json!(sweep.points.len()));
    }

    if let Some(grid) = &sc.sweeps.demand_grid {
        let mut head = indexed("lambda", m);
        head.extend(indexed("predicted_delay", m));
        if sc.sim.is_some() {
            head.extend(indexed("simulated_delay", m));
            head.extend(indexed("simulated_stderr", m));
        }
        let mut rows = Vec::new();
        for (k, d) in grid.iter().enumerate() {
            let dv = DemandVector::new(d.clone())?;
            let pred = predict_delay(&policy, &r.links, &dv)?;
            let mut row: Vec<String> = d.iter().copied().map(num).collect();
            row.extend(pred.sources.iter().map(|s| opt_num(s.total())));
            if let Some(spec) = &sc.sim {
                let mut cfg = sim_config(spec, &policy, dv, &r);
                cfg.seed = spec.seed.wrapping_add(k as u64);
                let stats = simulate(&cfg)?;
                row.extend(stats.sources.iter().map(|s| opt_num(s.mean_delay)));
                row.extend(stats.sources.iter().map(|s| opt_num(s.delay_stderr)));
            }
            rows.push(row);
        }
        out.csv("delay_curve.csv", &head, &rows)?;
    } else if let Some(spec) = &sc.sim {
        let stats = simulate(&sim_config(spec, &policy, demand.clone(), &r))?;
        write_sim(&mut out, &stats)?;
    }

    write_summary(
        &mut out,
        SummaryInput {
            command: "run".into(),
            name: sc.name.clone(),
            seed: sc.sim.as_ref().map_or(0, |s| s.seed),
            hash: sha256_hex(&bytes),
            started,
            solver_failures: failures,
            notes: Vec::new(),
            resolved: to_value(sc),
            results: serde_json::Value::Object(results),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub w: Vec<f64>,
    pub weights: Vec<f64>,
    pub fpp_objective: Option<f64>,
    pub oracle_objective: f64,
    pub ratio: Option<f64>,
    pub status: SolverStatus,
}

impl OracleRow {
    pub fn ok(&self) -> bool {
        self.status.is_success() && self.ratio.is_some_and(|r| r >= ORACLE_RATIO_MIN)
    }
}

/// FPP-SCA against the grid oracle at the scenario's optimisation point and
/// every point of its region grid.
pub fn oracle_check(path: &Path) -> CliResult<Vec<OracleRow>> {
    let (r, _) = load(path)?;
    let sc = &r.scenario;
    if r.num_sources() > 2 {
        return Err(CliError::Validation(format!("grid oracle supports at most 2 sources, scenario has {}", r.num_sources())));
    }
    let mut jobs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    if let Some(o) = &sc.optimize {
        jobs.push((o.w.clone(), o.weights.clone()));
    }
    if let Some(cfg) = r.region_config() {
        for w in &cfg.w_grid {
            for x in &cfg.weights {
                jobs.push((w.clone(), x.clone()));
            }
        }
    }
    if jobs.is_empty() {
        return Err(CliError::Validation("oracle-check needs an `optimize` block or a region sweep".into()));
    }
    jobs.into_iter()
        .map(|(w, x)| {
            let oracle = grid_oracle(sc.scheme, &r.links, &w, &x, sc.optimizer.oracle_step)?;
            let (fpp, status) = match optimize(sc.scheme, &r.links, &w, &x, &sc.optimizer) {
                Ok(o) => (Some(o.objective), o.diagnostics.status),
                Err(relaystab_core::Error::Solver(_)) => (None, SolverStatus::Failed),
                Err(e) => return Err(e.into()),
            };
            let ratio = fpp.map(|f| if oracle.objective > 0.0 { f / oracle.objective } else { 1.0 });
            Ok(OracleRow { w, weights: x, fpp_objective: fpp, oracle_objective: oracle.objective, ratio, status })
        })
        .collect()
}
