//! Candidate value gradient and potential from the optimal barriers, plus a
//! pointwise verification of the ergodic HJB variational inequality
//! `max{ Lu + h - lambda*, u' - c2, c1 - u' } = 0`.
//!
//! On `[a*, b*]` the potential is
//! `u(x) = c1 x + int_{a*}^x 2 s(v) k(v) dv` with
//! `k(v) = int_v^{b*} (pi1(y) - lambda*) m(y) dy`; outside it extends
//! linearly with slopes `c2` (below) and `c1` (above). Derivative samples
//! come from the defining formulas (`u' = c1 + 2 s k` and the interior ODE
//! `u'' = (2/sigma^2)(lambda* - h - mu u')`), never from differencing `u`.
//! Verification instead measures how consistently those samples fit
//! together on the grid, which is exactly the quadrature/grid error of the
//! construction.

use crate::barrier::{BarrierPair, BarrierSolution};
use crate::diffusion::{pi, PiIndex, RewardModel, ScaleSpeedCache};
use crate::error::{Error, Result};
use crate::quad;

/// Grid request for the HJB certificate. Defaults cover `[a*/2, 2 b*]` with
/// 2001 points; the barriers are always exact knots.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_lo: None,
            x_hi: None,
            n: 2001,
        }
    }
}

/// Grid samples of the candidate potential and its derivatives.
#[derive(Debug, Clone)]
pub struct HjbGridSolution {
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub lambda_star: f64,
    pub pair: BarrierPair,
    /// Index of a* and b* in `xs`.
    pub knots: (usize, usize),
}

/// Verification tolerances. The interior tolerance scales with the grid:
/// `interior_coeff * dx^2`, calibrated so the zero-drift closed-form case
/// passes with an order of magnitude to spare.
#[derive(Debug, Clone, Copy)]
pub struct TolSpec {
    pub interior_coeff: f64,
    pub exterior_tol: f64,
    pub gradient_tol: f64,
    pub pasting_tol: f64,
}

impl Default for TolSpec {
    fn default() -> Self {
        Self {
            interior_coeff: 1.0,
            exterior_tol: 1e-8,
            gradient_tol: 1e-8,
            pasting_tol: 1e-6,
        }
    }
}

/// Violation summary for the four HJB families.
#[derive(Debug, Clone)]
pub struct HjbReport {
    /// max |Lu + h - lambda*| strictly inside (a*, b*).
    pub max_interior_residual: f64,
    /// max positive part of Lu + h - lambda* outside [a*, b*].
    pub max_exterior_violation: f64,
    /// Count and worst magnitude of gradient-band violations.
    pub gradient_violations: (usize, f64),
    /// (u'(a*)-c2, u'(b*)-c1, u''(a*), u''(b*)) by the interior formulas.
    pub pasting: [f64; 4],
    pub passed: bool,
    /// The interior tolerance that was applied (coeff * dx^2).
    pub interior_tol: f64,
}

fn segment(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let h = (hi - lo) / cells as f64;
    let mut v: Vec<f64> = (0..cells).map(|i| lo + i as f64 * h).collect();
    v.push(hi);
    v
}

/// Build the certificate grid and samples from a barrier solution.
pub fn build_hjb(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    solution: &BarrierSolution,
    grid: &GridSpec,
) -> Result<HjbGridSolution> {
    let pair = solution.pair;
    let (a, b) = (pair.a(), pair.b());
    let lambda = solution.lambda_star;
    let res_tol = 1e-6 * (1.0 + lambda.abs());
    if solution.foc_residuals.0.abs() > res_tol || solution.foc_residuals.1.abs() > res_tol {
        return Err(Error::InvalidArgument(format!(
            "barrier solution residuals {:?} too large to certify",
            solution.foc_residuals
        )));
    }
    let x_lo = grid.x_lo.unwrap_or(a / 2.0);
    let x_hi = grid
        .x_hi
        .unwrap_or(2.0 * b)
        .min(cache.model().domain_cap());
    if !(x_lo > 0.0 && x_lo <= a && x_hi >= b) {
        return Err(Error::InvalidArgument(format!(
            "hjb grid [{x_lo}, {x_hi}] must contain the barriers [{a}, {b}]"
        )));
    }
    if grid.n < 101 {
        return Err(Error::InvalidArgument(format!(
            "hjb grid needs at least 101 points, got {}",
            grid.n
        )));
    }

    // Allocate cells per segment proportionally, two minimum, barriers exact.
    let total_cells = grid.n - 1;
    let lens = [a - x_lo, b - a, x_hi - b];
    let total_len: f64 = lens.iter().sum();
    let mut cells = [0usize; 3];
    for i in 0..2 {
        cells[i] = (((lens[i] / total_len) * total_cells as f64).round() as usize).max(2);
    }
    cells[2] = total_cells
        .saturating_sub(cells[0] + cells[1])
        .max(2);
    let mut xs = segment(x_lo, a, cells[0]);
    xs.pop();
    xs.extend(segment(a, b, cells[1]));
    xs.pop();
    xs.extend(segment(b, x_hi, cells[2]));
    let ja = cells[0];
    let jb = cells[0] + cells[1];
    debug_assert_eq!(xs[ja], a);
    debug_assert_eq!(xs[jb], b);

    let model = cache.model();
    let opts = *cache.opts();
    let integrand = |y: f64| -> Result<f64> {
        Ok((pi(reward, model, PiIndex::One, y) - lambda) * cache.speed_density(y)?)
    };

    // k on the interior knots, accumulated right-to-left from k(b*) = 0.
    let mut k = vec![0.0; xs.len()];
    for i in (ja..jb).rev() {
        let cell = quad::integrate(&integrand, xs[i], xs[i + 1], &opts)?;
        k[i] = k[i + 1] + cell;
    }

    // Gradient samples: exact constants outside and at the knots, the
    // defining formula strictly inside.
    let mut u1 = vec![0.0; xs.len()];
    let mut u2 = vec![0.0; xs.len()];
    for (i, &x) in xs.iter().enumerate() {
        if i <= ja {
            u1[i] = reward.c2();
        } else if i >= jb {
            u1[i] = reward.c1();
        } else {
            u1[i] = reward.c1() + 2.0 * cache.scale_density(x)? * k[i];
            let sig = model.vol(x);
            u2[i] = (2.0 / (sig * sig)) * (lambda - reward.h(x) - model.drift(x) * u1[i]);
        }
    }

    // Potential: u(a*) = c1 a*, linear outside, cell-by-cell quadrature of
    // the gradient inside (with k carried to the quadrature nodes).
    let mut u = vec![0.0; xs.len()];
    u[ja] = reward.c1() * a;
    for i in (0..ja).rev() {
        u[i] = u[i + 1] - reward.c2() * (xs[i + 1] - xs[i]);
    }
    for i in ja..jb {
        let k_right = k[i + 1];
        let x_right = xs[i + 1];
        let grad = |v: f64| -> Result<f64> {
            let tail = quad::panel(&integrand, v, x_right)?;
            Ok(reward.c1() + 2.0 * cache.scale_density(v)? * (k_right + tail))
        };
        let cell = quad::panel(&grad, xs[i], x_right)?;
        u[i + 1] = u[i] + cell;
    }
    for i in jb + 1..xs.len() {
        u[i] = u[i - 1] + reward.c1() * (xs[i] - xs[i - 1]);
    }

    Ok(HjbGridSolution {
        xs,
        u,
        u1,
        u2,
        lambda_star: lambda,
        pair,
        knots: (ja, jb),
    })
}

/// Interior gradient value at a knot by the defining formula (the stored
/// sample at the knot itself is the exterior constant).
fn interior_u1_at(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    sol: &HjbGridSolution,
    knot: usize,
    k_at_knot: f64,
) -> Result<f64> {
    let x = sol.xs[knot];
    Ok(reward.c1() + 2.0 * cache.scale_density(x)? * k_at_knot)
}

/// Recompute k at the two knots from the stored gradient; k(b*) = 0 by
/// construction, and at a* the first strictly-interior sample carries it.
fn k_profile(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    sol: &HjbGridSolution,
) -> Result<(f64, f64)> {
    let ja = sol.knots.0;
    let model = cache.model();
    let lambda = sol.lambda_star;
    let opts = *cache.opts();
    let integrand = |y: f64| -> Result<f64> {
        Ok((pi(reward, model, PiIndex::One, y) - lambda) * cache.speed_density(y)?)
    };
    // k(a*) = k(first interior) + cell integral back to a*
    let k_first = (sol.u1[ja + 1] - reward.c1()) / (2.0 * cache.scale_density(sol.xs[ja + 1])?);
    let cell = quad::integrate(&integrand, sol.xs[ja], sol.xs[ja + 1], &opts)?;
    Ok((k_first + cell, 0.0))
}

/// Signed `Lu + h - lambda*` profile across all grid points: the grid-error
/// residual strictly inside, and the one-sided slack `pi_i - lambda*`
/// outside and at the knots.
pub fn residual_profile(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    sol: &HjbGridSolution,
) -> Vec<f64> {
    let (ja, jb) = sol.knots;
    let model = cache.model();
    let n = sol.xs.len();
    let mut res = vec![0.0; n];
    for i in 0..n {
        let x = sol.xs[i];
        if i > ja && i < jb {
            res[i] = interior_residual(cache, reward, sol, i);
        } else {
            let which = if i <= ja { PiIndex::Two } else { PiIndex::One };
            res[i] = pi(reward, model, which, x) - sol.lambda_star;
        }
    }
    res
}

/// `Lu + h - lambda*` at interior index `i`, with u'' taken as the slope of
/// the stored gradient samples (five-point stencil where available, biased
/// three-point next to the barriers; stencils never touch the knots, whose
/// stored values are the exterior constants).
fn interior_residual(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    sol: &HjbGridSolution,
    i: usize,
) -> f64 {
    let (ja, jb) = sol.knots;
    let xs = &sol.xs;
    let u1 = &sol.u1;
    let h = xs[i + 1] - xs[i]; // interior segment is uniform
    let lo = ja + 1;
    let hi = jb - 1;
    // fourth-order stencils throughout, biased near the barriers so the
    // samples never include the knots
    let d1 = if hi - lo < 4 {
        // segment too thin for the stencils; fall back to the stored sample
        sol.u2[i]
    } else if i >= lo + 2 && i + 2 <= hi {
        (u1[i - 2] - 8.0 * u1[i - 1] + 8.0 * u1[i + 1] - u1[i + 2]) / (12.0 * h)
    } else if i == lo {
        (-25.0 * u1[i] + 48.0 * u1[i + 1] - 36.0 * u1[i + 2] + 16.0 * u1[i + 3]
            - 3.0 * u1[i + 4])
            / (12.0 * h)
    } else if i == lo + 1 {
        (-3.0 * u1[i - 1] - 10.0 * u1[i] + 18.0 * u1[i + 1] - 6.0 * u1[i + 2] + u1[i + 3])
            / (12.0 * h)
    } else if i == hi {
        (25.0 * u1[i] - 48.0 * u1[i - 1] + 36.0 * u1[i - 2] - 16.0 * u1[i - 3]
            + 3.0 * u1[i - 4])
            / (12.0 * h)
    } else {
        (3.0 * u1[i + 1] + 10.0 * u1[i] - 18.0 * u1[i - 1] + 6.0 * u1[i - 2] - u1[i - 3])
            / (12.0 * h)
    };
    let x = xs[i];
    let model = cache.model();
    let sig = model.vol(x);
    0.5 * sig * sig * d1 + model.drift(x) * u1[i] + reward.h(x) - sol.lambda_star
}

/// Evaluate the four violation families and decide the certificate.
pub fn verify_hjb(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    sol: &HjbGridSolution,
    tol: &TolSpec,
) -> Result<HjbReport> {
    let (ja, jb) = sol.knots;
    let model = cache.model();

    let mut max_interior: f64 = 0.0;
    for i in ja + 1..jb {
        max_interior = max_interior.max(interior_residual(cache, reward, sol, i).abs());
    }

    let mut max_exterior: f64 = 0.0;
    for i in (0..=ja).chain(jb..sol.xs.len()) {
        let which = if i <= ja { PiIndex::Two } else { PiIndex::One };
        let slack = pi(reward, model, which, sol.xs[i]) - sol.lambda_star;
        max_exterior = max_exterior.max(slack);
    }

    let mut grad_count = 0usize;
    let mut grad_worst: f64 = 0.0;
    for &g in &sol.u1 {
        let v = (g - reward.c2()).max(reward.c1() - g);
        if v > tol.gradient_tol {
            grad_count += 1;
        }
        grad_worst = grad_worst.max(v.max(0.0));
    }

    let (k_a, k_b) = k_profile(cache, reward, sol)?;
    let u1_a = interior_u1_at(cache, reward, sol, ja, k_a)?;
    let u1_b = interior_u1_at(cache, reward, sol, jb, k_b)?;
    let sig_a = model.vol(sol.xs[ja]);
    let sig_b = model.vol(sol.xs[jb]);
    let u2_a = (2.0 / (sig_a * sig_a))
        * (sol.lambda_star - reward.h(sol.xs[ja]) - model.drift(sol.xs[ja]) * u1_a);
    let u2_b = (2.0 / (sig_b * sig_b))
        * (sol.lambda_star - reward.h(sol.xs[jb]) - model.drift(sol.xs[jb]) * u1_b);
    let pasting = [
        u1_a - reward.c2(),
        u1_b - reward.c1(),
        u2_a,
        u2_b,
    ];

    let dx = sol.xs[ja + 1] - sol.xs[ja];
    let interior_tol = tol.interior_coeff * dx * dx;
    let passed = max_interior <= interior_tol
        && max_exterior <= tol.exterior_tol
        && grad_worst <= tol.gradient_tol
        && pasting.iter().all(|p| p.abs() <= tol.pasting_tol);

    Ok(HjbReport {
        max_interior_residual: max_interior,
        max_exterior_violation: max_exterior,
        gradient_violations: (grad_count, grad_worst),
        pasting,
        passed,
        interior_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{solve_barriers, SolveOpts};
    use crate::diffusion::{check_assumptions, ScaleSpeedCache};
    use crate::models;

    fn vp() -> (ScaleSpeedCache, crate::diffusion::RewardModel, BarrierSolution) {
        let model = models::verhulst_pearl_model(
            models::VerhulstPearlParams::new(1.0, 1.0, 0.5).unwrap(),
            1e3,
        )
        .unwrap();
        let reward =
            models::power_reward(models::PowerReward::new(1.0, 0.5).unwrap(), 0.5, 1.5).unwrap();
        let cache = ScaleSpeedCache::new(model);
        let shape = check_assumptions(&cache, &reward, 512).unwrap();
        let sol = solve_barriers(&cache, &reward, &shape, &SolveOpts::default()).unwrap();
        (cache, reward, sol)
    }

    #[test]
    fn gradient_hits_both_boundary_slopes() {
        let (cache, reward, sol) = vp();
        let grid = build_hjb(&cache, &reward, &sol, &GridSpec::default()).unwrap();
        let (ja, jb) = grid.knots;
        // exact boundary constants at and outside the knots
        assert_eq!(grid.u1[ja], reward.c2());
        assert_eq!(grid.u1[jb], reward.c1());
        assert_eq!(grid.u1[0], reward.c2());
        assert_eq!(*grid.u1.last().unwrap(), reward.c1());
        // k(b*) = 0 means the interior limit at b* is exactly c1
        let report = verify_hjb(&cache, &reward, &grid, &TolSpec::default()).unwrap();
        assert!(report.pasting[1].abs() < 1e-12, "{:?}", report.pasting);
        // u'(a*) hits c2 to quadrature accuracy
        assert!(report.pasting[0].abs() < 1e-7, "{:?}", report.pasting);
        // second derivative vanishes at both barriers
        assert!(report.pasting[2].abs() < 1e-6, "{:?}", report.pasting);
        assert!(report.pasting[3].abs() < 1e-6, "{:?}", report.pasting);
    }

    #[test]
    fn interior_residual_small_and_certificate_passes() {
        let (cache, reward, sol) = vp();
        let grid = build_hjb(&cache, &reward, &sol, &GridSpec::default()).unwrap();
        let report = verify_hjb(&cache, &reward, &grid, &TolSpec::default()).unwrap();
        assert!(
            report.max_interior_residual <= 1e-6,
            "interior residual {}",
            report.max_interior_residual
        );
        assert!(
            report.max_exterior_violation <= 1e-8,
            "exterior {}",
            report.max_exterior_violation
        );
        assert_eq!(report.gradient_violations.0, 0);
        assert!(report.passed);
    }

    #[test]
    fn potential_is_increasing_and_bounded_below_at_left_end() {
        let (cache, reward, sol) = vp();
        let grid = build_hjb(&cache, &reward, &sol, &GridSpec::default()).unwrap();
        let mut min = f64::INFINITY;
        for w in grid.u.windows(2) {
            assert!(w[1] > w[0], "u not strictly increasing");
        }
        for &v in &grid.u {
            min = min.min(v);
        }
        assert_eq!(min, grid.u[0]);
    }

    #[test]
    fn auxiliary_k_nonneg_and_rho_nonpos() {
        let (cache, reward, sol) = vp();
        let grid = build_hjb(&cache, &reward, &sol, &GridSpec::default()).unwrap();
        let (ja, jb) = grid.knots;
        for i in ja + 1..jb {
            let s = cache.scale_density(grid.xs[i]).unwrap();
            let k = (grid.u1[i] - reward.c1()) / (2.0 * s);
            assert!(k >= -1e-12, "k < 0 at {}", grid.xs[i]);
            let rho = k + (reward.c1() - reward.c2()) / (2.0 * s);
            assert!(rho <= 1e-12, "rho > 0 at {}", grid.xs[i]);
        }
    }

    #[test]
    fn refinement_shrinks_interior_residual() {
        let (cache, reward, sol) = vp();
        let coarse = build_hjb(
            &cache,
            &reward,
            &sol,
            &GridSpec {
                n: 1001,
                ..Default::default()
            },
        )
        .unwrap();
        let fine = build_hjb(
            &cache,
            &reward,
            &sol,
            &GridSpec {
                n: 2001,
                ..Default::default()
            },
        )
        .unwrap();
        let rc = verify_hjb(&cache, &reward, &coarse, &TolSpec::default()).unwrap();
        let rf = verify_hjb(&cache, &reward, &fine, &TolSpec::default()).unwrap();
        assert!(
            rf.max_interior_residual <= rc.max_interior_residual / 2.0,
            "coarse {} fine {}",
            rc.max_interior_residual,
            rf.max_interior_residual
        );
    }

    #[test]
    fn unconverged_solution_is_rejected() {
        let (cache, reward, mut sol) = vp();
        sol.foc_residuals = (1e-2, 0.0);
        assert!(build_hjb(&cache, &reward, &sol, &GridSpec::default()).is_err());
    }

    #[test]
    fn grid_must_contain_barriers() {
        let (cache, reward, sol) = vp();
        let bad = GridSpec {
            x_lo: Some(sol.pair.b()),
            x_hi: None,
            n: 2001,
        };
        assert!(build_hjb(&cache, &reward, &sol, &bad).is_err());
    }

    #[test]
    fn exterior_slack_is_pi_minus_lambda() {
        let (cache, reward, sol) = vp();
        let grid = build_hjb(&cache, &reward, &sol, &GridSpec::default()).unwrap();
        let prof = residual_profile(&cache, &reward, &grid);
        let model = cache.model();
        let i = grid.knots.1 + 3;
        let expect = pi(&reward, model, PiIndex::One, grid.xs[i]) - grid.lambda_star;
        assert_eq!(prof[i], expect);
        assert!(expect <= 0.0);
    }
}
