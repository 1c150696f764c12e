use relaystab_core::analytic::{predict_delay, throughput_bounds};
use relaystab_core::simulator::{simulate, SimConfig};
use relaystab_core::{ChannelVariances, DemandVector, LinkProbabilities, PhyParams, Policy, Scheme};

fn case3() -> LinkProbabilities<f64> {
    let phy = PhyParams::new(10.0, 1.0).unwrap();
    LinkProbabilities::compute(&phy, &ChannelVariances::new(&[0.75, 0.8], &[0.63, 0.73], 0.85).unwrap()).unwrap()
}

fn policy(scheme: Scheme, l: &LinkProbabilities<f64>) -> Policy<f64> {
    match scheme {
        Scheme::Ccma => Policy::ccma(l, vec![0.5, 0.5]).unwrap(),
        _ => Policy::new(scheme, vec![vec![0.3, 0.1], vec![0.2, 0.3]], vec![0.5, 0.5]).unwrap(),
    }
}

fn config(scheme: Scheme, demand: [f64; 2], seed: u64) -> SimConfig {
    let l = case3();
    let mut cfg = SimConfig::new(policy(scheme, &l), DemandVector::new(demand.to_vec()).unwrap(), l, seed);
    cfg.horizon = 200_000;
    cfg.warmup = 20_000;
    cfg
}

#[test]
fn packets_are_conserved_and_half_duplex_holds() {
    for scheme in Scheme::ALL {
        for dominant in [false, true] {
            let mut cfg = config(scheme, [0.1, 0.15], 3);
            cfg.dominant_mode = dominant;
            let s = simulate(&cfg).unwrap();
            assert!(s.conservation.holds(), "{scheme}");
            assert_eq!(s.half_duplex_violations, 0);
        }
    }
}

#[test]
fn same_seed_same_stats() {
    let cfg = config(Scheme::Sbc, [0.1, 0.1], 11);
    assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    let mut other = cfg.clone();
    other.seed = 12;
    assert_ne!(simulate(&cfg).unwrap().sources[0].delivered, simulate(&other).unwrap().sources[0].delivered);
}

#[test]
fn busy_slot_actions_follow_policy() {
    // with both sources saturated every owned slot is busy
    for scheme in [Scheme::Sbc, Scheme::Dbc] {
        let mut cfg = config(scheme, [0.0, 0.0], 5);
        cfg.saturated = vec![0, 1];
        cfg.dominant_mode = true;
        let s = simulate(&cfg).unwrap();
        let action = cfg.policy.actions();
        for (i, st) in s.sources.iter().enumerate() {
            let n = st.busy_slots as f64;
            for (j, &a) in action[i].iter().enumerate() {
                let freq = st.actions.interfere[j] as f64 / n;
                let se = (a * (1.0 - a) / n).sqrt();
                assert!((freq - a).abs() <= 3.0 * se + 1e-12, "{scheme} s{i} r{j}: {freq} vs {a}");
            }
        }
    }
}

#[test]
fn real_system_is_no_worse_than_dominant() {
    for scheme in [Scheme::Sbc, Scheme::Dbc] {
        let mut real = config(scheme, [0.15, 0.2], 21);
        real.horizon = 400_000;
        let mut dom = real.clone();
        dom.dominant_mode = true;
        let (r, d) = (simulate(&real).unwrap(), simulate(&dom).unwrap());
        for i in 0..2 {
            let (rd, dd) = (r.sources[i].mean_delay.unwrap(), d.sources[i].mean_delay.unwrap());
            assert!(rd <= dd * 1.05, "{scheme} s{i}: real {rd} dominant {dd}");
        }
    }
}

#[test]
fn light_load_delay_matches_prediction() {
    let l = case3();
    let p = policy(Scheme::Sbc, &l);
    let mu = throughput_bounds(&p, &l).unwrap();
    let demand = DemandVector::new(vec![0.3 * mu[0].lambda_s(), 0.0]).unwrap();
    let pred = predict_delay(&p, &l, &demand).unwrap().sources[0].total().unwrap();
    let mut cfg = SimConfig::new(p, demand, l, 9).dominant_for(0);
    cfg.horizon = 500_000;
    let s = simulate(&cfg).unwrap();
    let (sim, se) = (s.sources[0].mean_delay.unwrap(), s.sources[0].delay_stderr.unwrap());
    assert!((sim - pred).abs() <= 4.0 * se + 0.02 * pred, "{sim} ± {se} vs {pred}");
}
