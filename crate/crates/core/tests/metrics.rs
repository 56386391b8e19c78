mod common;

use common::{oracle_l2p, oracle_l2q, oracle_npss, oracle_npss_channels};
use keyloom_core::eval::{l2p, l2q, npss, npss_channels};
use keyloom_core::verify::{random_clip, random_skeleton};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn metrics_match_scalar_loop_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let j = rng.random_range(1..=6);
        let n = rng.random_range(4..=20);
        let sk = random_skeleton(&mut rng, j);
        let truth = random_clip(&mut rng, &sk, n).unwrap();
        let pred = random_clip(&mut rng, &sk, n).unwrap();
        worst = worst
            .max((l2p(&pred, &truth).unwrap() - oracle_l2p(&pred, &truth)).abs())
            .max((l2q(&pred, &truth).unwrap() - oracle_l2q(&pred, &truth)).abs())
            .max((npss(&pred, &truth).unwrap() - oracle_npss(&pred, &truth)).abs());
    }
    assert!(worst < 1e-10, "worst deviation {worst:e}");
}

#[test]
fn npss_matches_literal_oracle_on_sinusoids() {
    let wave = |cycles: f64| -> Vec<f64> {
        (0..32).map(|t| (2.0 * std::f64::consts::PI * cycles * t as f64 / 32.0).sin()).collect()
    };
    let (pred, truth) = (vec![wave(2.0)], vec![wave(1.0)]);
    let got = npss_channels(&pred, &truth).unwrap();
    assert!((got - oracle_npss_channels(&pred, &truth)).abs() < 1e-10);
}

fn channels(n: usize, c: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn npss_matches_oracle_and_ignores_offsets(
        (p, t) in (4usize..24, 1usize..5).prop_flat_map(|(n, c)| (channels(n, c), channels(n, c))),
        shift in -10.0f64..10.0,
    ) {
        let got = npss_channels(&p, &t).unwrap();
        prop_assert!(got >= 0.0);
        prop_assert!((got - oracle_npss_channels(&p, &t)).abs() < 1e-10);
        let shifted: Vec<Vec<f64>> = p.iter().map(|c| c.iter().map(|x| x + shift).collect()).collect();
        prop_assert!((npss_channels(&shifted, &t).unwrap() - got).abs() < 1e-9);
        prop_assert!(npss_channels(&t, &t).unwrap() == 0.0);
    }

    #[test]
    fn l2p_is_translation_covariant(seed in any::<u64>(), v in prop::array::uniform3(-50.0f64..50.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sk = random_skeleton(&mut rng, 4);
        let truth = random_clip(&mut rng, &sk, 6).unwrap();
        let pred = random_clip(&mut rng, &sk, 6).unwrap();
        let shift = |c: &keyloom_core::MotionClip| {
            let mut c = c.clone();
            for r in &mut c.root_positions {
                for k in 0..3 {
                    r[k] += v[k];
                }
            }
            c
        };
        let base = l2p(&pred, &truth).unwrap();
        prop_assert!((l2p(&shift(&pred), &shift(&truth)).unwrap() - base).abs() < 1e-9);
        prop_assert!(base >= 0.0 && l2q(&pred, &truth).unwrap() >= 0.0);
        prop_assert!(l2p(&truth, &truth).unwrap() == 0.0);
    }
}
