//! Fixture values frozen from independent oracles (dense-grid scans,
//! symbolic antiderivatives, an independent shooting implementation, and a
//! closed-form discounted construction), recorded before this crate was
//! built, plus in-test brute-force oracles where they are cheap enough to
//! recompute.

use refract_core::barrier::{b_of_a, lambda_ab, solve_barriers, BarrierPair, SolveOpts};
use refract_core::diffusion::{check_assumptions, pi, PiIndex, RewardModel, ScaleSpeedCache};
use refract_core::discounted::solve_discounted;
use refract_core::hjb::{build_hjb, verify_hjb, GridSpec, TolSpec};
use refract_core::models::{
    gbm_model, power_reward, verhulst_pearl_model, GbmParams, PowerReward, VerhulstPearlParams,
};
use refract_core::sim::{simulate_one_sided, Barriers, SimConfig};

// Verhulst-Pearl fixture (mu=1, gamma=1, sigma=0.5, h=sqrt, c1=0.5, c2=1.5)
const VP_XHAT1: f64 = 1.0; // exact: pi1'(1) = 0.5 + 0.5 - 1
const VP_XHAT2: f64 = 0.699303890907608;
const VP_B0: f64 = 2.314596212276752;
const VP_A_STAR: f64 = 0.351260505882;
const VP_B_STAR: f64 = 1.328278066488;
const VP_LAMBDA_STAR: f64 = 0.934487187103;
const VP_LAMBDA_05_15: f64 = 0.923077270068649;
const VP_M_05_15: f64 = 3.453070406973940;
const VP_HM_05_15: f64 = 3.230053874302515;

// GBM fixture (mu=-0.5, sigma=1, h=sqrt, c1=1, c2=2)
const GBM_A_STAR: f64 = 0.113723399281;
const GBM_B_STAR: f64 = 3.040253125060;
const GBM_LAMBDA_STAR: f64 = 0.223505601964;

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

#[test]
fn vp_shape_matches_frozen_grid_scan() {
    let (cache, reward) = vp();
    let shape = check_assumptions(&cache, &reward, 2048).unwrap();
    assert!((shape.xhat1 - VP_XHAT1).abs() < 1e-6, "xhat1 {}", shape.xhat1);
    assert!((shape.xhat2 - VP_XHAT2).abs() < 1e-6, "xhat2 {}", shape.xhat2);
    assert!((shape.b0 - VP_B0).abs() < 1e-9, "b0 {}", shape.b0);
    assert!(shape.flags.all(), "{:?}", shape.violations);
}

#[test]
fn vp_shape_matches_in_test_dense_scan() {
    // independent oracle: brute scan of pi1/pi2 at 1e-5 resolution
    let (cache, reward) = vp();
    let model = cache.model();
    let mut best1 = (f64::NEG_INFINITY, 0.0);
    let mut best2 = (f64::NEG_INFINITY, 0.0);
    let mut x = 1e-5;
    while x < 5.0 {
        let p1 = pi(&reward, model, PiIndex::One, x);
        let p2 = pi(&reward, model, PiIndex::Two, x);
        if p1 > best1.0 {
            best1 = (p1, x);
        }
        if p2 > best2.0 {
            best2 = (p2, x);
        }
        x += 1e-5;
    }
    let shape = check_assumptions(&cache, &reward, 2048).unwrap();
    assert!((shape.xhat1 - best1.1).abs() < 1e-5);
    assert!((shape.xhat2 - best2.1).abs() < 1e-5);
}

#[test]
fn vp_quadrature_matches_symbolic_oracle() {
    let (cache, reward) = vp();
    let m = cache.speed_measure(0.5, 1.5).unwrap();
    assert!((m - VP_M_05_15).abs() < 1e-9 * VP_M_05_15, "M {m}");
    let hm = cache
        .integrate_speed_weighted(|x| reward.h(x), 0.5, 1.5)
        .unwrap();
    assert!((hm - VP_HM_05_15).abs() < 1e-9 * VP_HM_05_15, "hm {hm}");
    let lam = lambda_ab(&cache, &reward, &BarrierPair::new(0.5, 1.5).unwrap()).unwrap();
    assert!(
        (lam - VP_LAMBDA_05_15).abs() < 1e-10 * (1.0 + VP_LAMBDA_05_15),
        "lambda {lam}"
    );
}

#[test]
fn vp_solution_matches_frozen_optimum() {
    let (cache, reward) = vp();
    let shape = check_assumptions(&cache, &reward, 2048).unwrap();
    let sol = solve_barriers(&cache, &reward, &shape, &SolveOpts::default()).unwrap();
    assert!((sol.pair.a() - VP_A_STAR).abs() < 1e-6, "a* {}", sol.pair.a());
    assert!((sol.pair.b() - VP_B_STAR).abs() < 1e-6, "b* {}", sol.pair.b());
    assert!(
        (sol.lambda_star - VP_LAMBDA_STAR).abs() < 1e-9,
        "lambda* {}",
        sol.lambda_star
    );
    // b_of_a maps the frozen a* to the frozen b*
    let b = b_of_a(&cache, &reward, VP_A_STAR, &shape).unwrap();
    assert!((b - VP_B_STAR).abs() < 1e-6, "b_of_a {b}");
}

#[test]
fn gbm_solution_matches_frozen_optimum_and_coarse_grid() {
    let (cache, reward) = gbm();
    let shape = check_assumptions(&cache, &reward, 2048).unwrap();
    let sol = solve_barriers(&cache, &reward, &shape, &SolveOpts::default()).unwrap();
    assert!((sol.pair.a() - GBM_A_STAR).abs() < 1e-6, "a* {}", sol.pair.a());
    assert!((sol.pair.b() - GBM_B_STAR).abs() < 1e-6, "b* {}", sol.pair.b());
    assert!(
        (sol.lambda_star - GBM_LAMBDA_STAR).abs() < 1e-9,
        "lambda* {}",
        sol.lambda_star
    );
    // coarse in-test brute force: the table never beats the solver and its
    // argmax lands within one cell
    let a_grid: Vec<f64> = (1..=60).map(|i| 0.005 * i as f64).collect(); // up to 0.3
    let b_grid: Vec<f64> = (0..=60).map(|i| 1.0 + 0.05 * i as f64).collect(); // up to 4
    let table = refract_core::barrier::sweep(&cache, &reward, &a_grid, &b_grid).unwrap();
    let mut best = f64::NEG_INFINITY;
    for row in &table.lambda_table {
        for &v in row {
            if !v.is_nan() && v > best {
                best = v;
            }
        }
    }
    assert!(sol.lambda_star >= best - 1e-9);
    assert!((table.argmax.a() - sol.pair.a()).abs() <= 0.005 + 1e-12);
    assert!((table.argmax.b() - sol.pair.b()).abs() <= 0.05 + 1e-12);
}

#[test]
fn vp_discounted_matches_independent_shooting() {
    // anchors from an independent shooting implementation (different
    // integrator and event logic)
    let (cache, reward) = vp();
    let cases = [
        (0.2, 0.284561321, 1.179399118),
        (0.05, 0.333474850, 1.288839057),
        (0.02, 0.344053175, 1.312337014),
    ];
    let mut hint = 0.35;
    for (r, a_ref, b_ref) in cases {
        let sol = solve_discounted(&cache, &reward, r, Some(hint), None).unwrap();
        assert!(
            (sol.a_r - a_ref).abs() < 1e-3,
            "r={r}: a_r {} vs {a_ref}",
            sol.a_r
        );
        assert!(
            (sol.b_r - b_ref).abs() < 1e-3,
            "r={r}: b_r {} vs {b_ref}",
            sol.b_r
        );
        hint = sol.a_r;
    }
}

#[test]
fn gbm_hjb_certificate_also_passes() {
    let (cache, reward) = gbm();
    let shape = check_assumptions(&cache, &reward, 2048).unwrap();
    let sol = solve_barriers(&cache, &reward, &shape, &SolveOpts::default()).unwrap();
    let grid = build_hjb(&cache, &reward, &sol, &GridSpec::default()).unwrap();
    let report = verify_hjb(&cache, &reward, &grid, &TolSpec::default()).unwrap();
    assert!(report.passed, "{report:?}");
    assert!(report.max_interior_residual <= 1e-6);
}

#[test]
fn one_sided_probe_matches_stationary_oracle() {
    // exploratory zero-drift GBM: reflect at `a`, truncate at the cap; the
    // stationary density on [a, cap] is m / M[a, cap], so the h-average and
    // the lower local-time rate have quadrature oracles.
    let cap = 50.0;
    let model = gbm_model(GbmParams::new(0.0, 1.0).unwrap(), cap, true).unwrap();
    let reward = power_reward(PowerReward::new(1.0, 0.5).unwrap(), 1.0, 2.0).unwrap();
    let cache = ScaleSpeedCache::new(model.clone());
    for (a, seed) in [(1.0, 51u64), (2.0, 52u64)] {
        let cfg = SimConfig {
            model: model.clone(),
            reward: reward.clone(),
            barriers: Barriers::OneSided { lower: a },
            x0: a * 1.5,
            dt: 5e-4,
            horizon: 4000.0,
            burn_in_fraction: 0.1,
            n_batches: 20,
            seed,
            thin_every: 0,
        };
        let est = simulate_one_sided(&cfg).unwrap();
        let m_ab = cache.speed_measure(a, cap).unwrap();
        let h_mean = cache
            .integrate_speed_weighted(|x| reward.h(x), a, cap)
            .unwrap()
            / m_ab;
        let rate_pred = 1.0 / (2.0 * m_ab * cache.scale_density(a).unwrap());
        let reward_pred = h_mean - reward.c2() * rate_pred;
        // O(sqrt dt) bias on the local-time rate; 3 SE plus a bias allowance
        let rate_dev = (est.rate_la - rate_pred).abs();
        assert!(
            rate_dev <= 3.0 * est.rate_la_se + 0.05 * rate_pred,
            "a={a}: rate_la {} vs {rate_pred} (3SE {})",
            est.rate_la,
            3.0 * est.rate_la_se
        );
        let dev = (est.mean_reward_rate - reward_pred).abs();
        assert!(
            dev <= 3.0 * est.std_error + 0.05 * reward_pred.abs(),
            "a={a}: reward {} vs {reward_pred} (3SE {})",
            est.mean_reward_rate,
            3.0 * est.std_error
        );
    }
}
