//! Property tests for the measure/solver invariants, run on both fixture
//! models over randomized barrier pairs.

use proptest::prelude::*;

use refract_core::barrier::{grad_lambda, lambda_ab, lambda_via_stationary, BarrierPair};
use refract_core::diffusion::{pi, PiIndex, RewardModel, ScaleSpeedCache};
use refract_core::models::{
    gbm_model, power_reward, verhulst_pearl_model, GbmParams, PowerReward, VerhulstPearlParams,
};

fn vp() -> (ScaleSpeedCache, RewardModel) {
    let model =
        verhulst_pearl_model(VerhulstPearlParams::new(1.0, 1.0, 0.5).unwrap(), 1e3).unwrap();
    let reward = power_reward(PowerReward::new(1.0, 0.5).unwrap(), 0.5, 1.5).unwrap();
    (ScaleSpeedCache::new(model), reward)
}

fn gbm() -> (ScaleSpeedCache, RewardModel) {
    let model = gbm_model(GbmParams::new(-0.5, 1.0).unwrap(), 1e3, false).unwrap();
    let reward = power_reward(PowerReward::new(1.0, 0.5).unwrap(), 1.0, 2.0).unwrap();
    (ScaleSpeedCache::new(model), reward)
}

fn both() -> [(ScaleSpeedCache, RewardModel); 2] {
    [vp(), gbm()]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..Default::default() })]

    #[test]
    fn measure_additivity_and_positivity(a in 0.2f64..2.0, g1 in 0.05f64..1.0, g2 in 0.05f64..1.0) {
        for (cache, _) in both() {
            let b = a + g1;
            let c = b + g2;
            let m_ab = cache.speed_measure(a, b).unwrap();
            let m_bc = cache.speed_measure(b, c).unwrap();
            let m_ac = cache.speed_measure(a, c).unwrap();
            prop_assert!(m_ab > 0.0 && m_bc > 0.0);
            prop_assert!((m_ac - m_ab - m_bc).abs() <= 1e-11,
                "additivity defect {:.3e}", (m_ac - m_ab - m_bc).abs());
        }
    }

    #[test]
    fn boundary_term_identity(a in 0.2f64..1.5, gap in 0.05f64..1.5) {
        // int_a^b mu m dx = 1/(2 s(b)) - 1/(2 s(a))
        for (cache, _) in both() {
            let b = a + gap;
            let model = cache.model().clone();
            let lhs = cache
                .integrate_speed_weighted(|x| model.drift(x), a, b)
                .unwrap();
            let rhs = 0.5 / cache.scale_density(b).unwrap() - 0.5 / cache.scale_density(a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11, "identity defect {:.3e}", (lhs - rhs).abs());
        }
    }

    #[test]
    fn lambda_routes_agree(a in 0.1f64..1.5, gap in 0.05f64..1.5) {
        for (cache, reward) in both() {
            let pair = BarrierPair::new(a, a + gap).unwrap();
            let l1 = lambda_ab(&cache, &reward, &pair).unwrap();
            let l2 = lambda_via_stationary(&cache, &reward, &pair).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-12 * (1.0 + l1.abs()));
        }
    }

    #[test]
    fn gradient_sign_tracks_pi_gap(a in 0.1f64..1.2, gap in 0.1f64..1.5) {
        // d lambda / d a has the sign of lambda - pi2(a)
        for (cache, reward) in both() {
            let pair = BarrierPair::new(a, a + gap).unwrap();
            let lam = lambda_ab(&cache, &reward, &pair).unwrap();
            let (da, db) = grad_lambda(&cache, &reward, &pair).unwrap();
            let model = cache.model();
            let gap_a = lam - pi(&reward, model, PiIndex::Two, a);
            let gap_b = pi(&reward, model, PiIndex::One, a + gap) - lam;
            if gap_a.abs() > 1e-12 {
                prop_assert_eq!(da.signum(), gap_a.signum());
            }
            if gap_b.abs() > 1e-12 {
                prop_assert_eq!(db.signum(), gap_b.signum());
            }
        }
    }

    #[test]
    fn scale_derivative_identity(x in 0.3f64..2.5) {
        // d/dx [1 / (2 s(x))] = mu(x) m(x)
        for (cache, _) in both() {
            let h = 1e-6 * x.max(1.0);
            let f = |y: f64| 0.5 / cache.scale_density(y).unwrap();
            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
            let model = cache.model();
            let exact = model.drift(x) * cache.speed_density(x).unwrap();
            prop_assert!(
                (fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                "fd {fd} vs {exact}"
            );
        }
    }
}

#[test]
fn base_point_normalization_is_exact() {
    for (cache, _) in both() {
        assert_eq!(cache.scale_density(1.0).unwrap(), 1.0);
    }
}

#[test]
fn ell_has_exactly_one_sign_change() {
    use refract_core::barrier::ell;
    use refract_core::diffusion::check_assumptions;
    for (cache, reward) in both() {
        let shape = check_assumptions(&cache, &reward, 512).unwrap();
        // sample the admissible range; the upper end differs per case but
        // xhat2 bounds both
        let a_max = shape.xhat2;
        let mut values = Vec::new();
        for k in 1..=32 {
            let a = a_max * k as f64 / 33.0;
            if let Ok(v) = ell(&cache, &reward, a, &shape) {
                values.push(v);
            }
        }
        let changes = values.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        assert_eq!(changes, 1, "{values:?}");
        // and strictly decreasing along the way
        for w in values.windows(2) {
            assert!(w[1] < w[0]);
        }
    }
}

#[test]
fn b_of_a_inverts_through_pi1() {
    use refract_core::barrier::b_of_a;
    use refract_core::diffusion::check_assumptions;
    for (cache, reward) in both() {
        let shape = check_assumptions(&cache, &reward, 512).unwrap();
        let model = cache.model();
        for k in 1..=16 {
            let a = shape.xhat2 * k as f64 / 20.0;
            let Ok(b) = b_of_a(&cache, &reward, a, &shape) else {
                continue;
            };
            let defect =
                (pi(&reward, model, PiIndex::One, b) - pi(&reward, model, PiIndex::Two, a)).abs();
            assert!(defect <= 1e-9, "a={a}: defect {defect:.3e}");
        }
    }
}
