use proptest::prelude::*;
use relaystab_core::channel::{interference_success_prob, joint_decode_prob, outage_free_prob, SicIntegrationParams};
use relaystab_core::{ChannelVariances, LinkProbabilities, Node, PhyParams};

fn links(sd: [f64; 2], sr: [f64; 2], rd: f64, power: f64, rate: f64) -> LinkProbabilities<f64> {
    let phy = PhyParams::new(power, rate).unwrap();
    LinkProbabilities::compute(&phy, &ChannelVariances::new(&sd, &sr, rd).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn probabilities_are_probabilities(
        sd in prop::array::uniform2(0.01f64..1.0),
        sr in prop::array::uniform2(0.01f64..1.0),
        rd in 0.01f64..1.0,
        power in 1.0f64..30.0,
        rate in 0.25f64..4.0,
    ) {
        let l = links(sd, sr, rd, power, rate);
        for i in 0..2 {
            for p in [l.f_sd(i), l.f_sr(i), l.g_sd(i), l.g_rd(i), l.f_rd()] {
                prop_assert!((0.0..=1.0).contains(&p), "{p}");
            }
        }
    }

    #[test]
    fn outage_free_grows_with_variance(a in 0.01f64..1.0, b in 0.01f64..1.0, rate in 0.25f64..4.0) {
        let phy = PhyParams::new(10.0, rate).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(outage_free_prob(&phy, lo) <= outage_free_prob(&phy, hi));
    }

    #[test]
    fn g_composes_joint_and_treat_as_noise(desired in 0.05f64..1.0, intf in 0.05f64..1.0, rate in 0.25f64..3.0) {
        let phy = PhyParams::new(10.0, rate).unwrap();
        let var = ChannelVariances::new(&[desired], &[0.5], intf).unwrap();
        let g = interference_success_prob(Node::Source(0), Node::Destination, Node::Relay, &phy, &var).unwrap();
        prop_assert!((g.success - (g.joint + (1.0 - g.joint) * g.treat_as_noise)).abs() < 1e-12);
        prop_assert!(g.joint >= -1e-15 && g.treat_as_noise >= -1e-15);
    }

    #[test]
    fn joint_decode_is_continuous_across_equal_snr(g1 in 0.3f64..5.0, eta in 0.05f64..1.0) {
        let at = |g2: f64| joint_decode_prob(&SicIntegrationParams::new(eta, 3.0 * eta, g1, g2).unwrap());
        let base = at(g1);
        prop_assert!((at(g1 * (1.0 + 1e-9)) - base).abs() <= 1e-6 * base.max(1e-12));
        prop_assert!((at(g1 * (1.0 - 1e-9)) - base).abs() <= 1e-6 * base.max(1e-12));
    }
}

#[test]
fn f32_tracks_f64() {
    let phy = PhyParams::new(10.0f32, 1.0).unwrap();
    let var = ChannelVariances::new(&[0.8f32, 0.08], &[0.85, 0.9], 0.97).unwrap();
    let single = LinkProbabilities::compute(&phy, &var).unwrap();
    let double = links([0.8, 0.08], [0.85, 0.9], 0.97, 10.0, 1.0);
    for i in 0..2 {
        assert!((f64::from(single.g_sd(i)) - double.g_sd(i)).abs() < 1e-4);
        assert!((f64::from(single.f_sr(i)) - double.f_sr(i)).abs() < 1e-5);
    }
}

#[test]
fn bad_variances_are_rejected() {
    assert!(ChannelVariances::new(&[0.5], &[-0.1], 0.5).is_err());
    assert!(ChannelVariances::new(&[0.5, 0.2], &[0.1], 0.5).is_err());
    assert!(PhyParams::new(0.0, 1.0).is_err());
}
