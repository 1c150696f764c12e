use proptest::prelude::*;
use relaystab_core::analytic::{
    evaluate_rates, predict_delay, single_user_dbc_optimum, single_user_sbc_optimum, theorem1_condition, throughput_bounds,
};
use relaystab_core::{ChannelVariances, DemandVector, LinkProbabilities, PhyParams, Policy, Scheme};

fn case(sd: [f64; 2], sr: [f64; 2], rd: f64) -> LinkProbabilities<f64> {
    let phy = PhyParams::new(10.0, 1.0).unwrap();
    LinkProbabilities::compute(&phy, &ChannelVariances::new(&sd, &sr, rd).unwrap()).unwrap()
}

#[test]
fn delay_grows_with_load() {
    let l = case([0.75, 0.8], [0.63, 0.73], 0.85);
    for scheme in [Scheme::Sbc, Scheme::Dbc, Scheme::CmDbc] {
        let p = Policy::new(scheme, vec![vec![0.3, 0.1], vec![0.2, 0.3]], vec![0.5, 0.5]).unwrap();
        let cap = throughput_bounds(&p, &l).unwrap()[1].lambda_s();
        let mut last = 0.0;
        for k in 1..10 {
            let d = DemandVector::new(vec![0.0, cap * k as f64 / 10.0]).unwrap();
            let delay = predict_delay(&p, &l, &d).unwrap().sources[1].total().unwrap();
            assert!(delay > last, "{scheme} {k}");
            last = delay;
        }
        let over = DemandVector::new(vec![0.0, cap * 1.01]).unwrap();
        assert!(predict_delay(&p, &l, &over).unwrap().sources[1].total().is_none());
        assert!(!evaluate_rates(&p, &l, &over).unwrap().sources[1].source_stable
            || !evaluate_rates(&p, &l, &over).unwrap().sources[1].relay_stable);
    }
}

#[test]
fn ccma_is_sbc_without_interference_when_relay_helps_everyone() {
    let l = case([0.8, 0.08], [0.85, 0.9], 0.97);
    for w1 in [0.2, 0.5, 0.8] {
        let w = vec![w1, 1.0 - w1];
        let ccma = throughput_bounds(&Policy::ccma(&l, w.clone()).unwrap(), &l).unwrap();
        let sbc = throughput_bounds(&Policy::idle_only(Scheme::Sbc, &l, w).unwrap(), &l).unwrap();
        for i in 0..2 {
            assert!((ccma[i].lambda_s() - sbc[i].lambda_s()).abs() < 1e-12, "w1 {w1} s{}", i + 1);
        }
    }
}

proptest! {
    #[test]
    fn single_user_schemes_agree_when_relay_helps(
        sd in 0.01f64..1.0, sr in 0.05f64..1.0, rd in 0.01f64..1.0,
    ) {
        let phy = PhyParams::new(10.0, 1.0).unwrap();
        let l = LinkProbabilities::compute(&phy, &ChannelVariances::new(&[sd], &[sr], rd).unwrap()).unwrap();
        let (s, d) = (single_user_sbc_optimum(&l).unwrap(), single_user_dbc_optimum(&l).unwrap());
        if theorem1_condition(&l).unwrap() {
            prop_assert!((s.lambda_star - d.lambda_star).abs() < 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&s.lambda_star) && (0.0..=1.0).contains(&d.lambda_star));
    }
}
