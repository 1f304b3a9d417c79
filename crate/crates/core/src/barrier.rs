//! Long-run average reward of an (a, b)-reflection policy and the solver for
//! the optimal pair.
//!
//! The reward of reflecting on `[a, b]` is
//!
//! ```text
//! lambda(a, b) = ( c1/s(b) - c2/s(a) + 2 int_a^b h m ) / ( 2 M[a, b] )
//! ```
//!
//! whose partials reduce to `m(a)/M (lambda - pi2(a))` and
//! `m(b)/M (pi1(b) - lambda)`, so the optimum is characterized by
//! `lambda* = pi1(b*) = pi2(a*)`. The solver walks that structure: it pairs
//! each lower barrier `a` with the unique `b_a` on the decreasing branch of
//! pi1 with `pi1(b_a) = pi2(a)`, and bisects the strictly decreasing profit
//! function `ell(a)` whose root is `a*`.

use crate::diffusion::{pi, PiIndex, RewardModel, ScaleSpeedCache, ShapeReport};
use crate::error::{Error, Result};
use crate::roots;

/// A candidate pair of reflection barriers `0 < a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierPair {
    a: f64,
    b: f64,
}

impl BarrierPair {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && 0.0 < a && a < b) {
            return Err(Error::InvalidArgument(format!(
                "barrier pair must satisfy 0 < a < b, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Which side of the peak-ordering dichotomy the solver ran under.
///
/// `CaseI`: the pi2 peak value reaches pi1's peak value, so the admissible
/// lower barriers stop at `y1` with `pi2(y1) = pi1(xhat1)`. `CaseII`: the pi2
/// peak stays below, and the admissible range runs to the pi2 peak itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    CaseI,
    CaseII,
}

impl std::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaseTag::CaseI => write!(f, "case-i"),
            CaseTag::CaseII => write!(f, "case-ii"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    EllBisection,
    NewtonPolish,
    Both,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMethod::EllBisection => write!(f, "ell-bisection"),
            SolveMethod::NewtonPolish => write!(f, "newton-polish"),
            SolveMethod::Both => write!(f, "both"),
        }
    }
}

/// Solver options. `x_tol` is the bisection bracket width on the lower
/// barrier; `force` skips the assumption gate (recorded in diagnostics).
#[derive(Debug, Clone, Copy)]
pub struct SolveOpts {
    pub x_tol: f64,
    pub newton_polish: bool,
    pub max_newton_steps: u32,
    pub force: bool,
}

impl Default for SolveOpts {
    fn default() -> Self {
        Self {
            x_tol: 1e-10,
            newton_polish: true,
            max_newton_steps: 10,
            force: false,
        }
    }
}

/// The optimizer with its first-order-condition residuals and diagnostics.
#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub pair: BarrierPair,
    pub lambda_star: f64,
    /// (R1, R2) of the integral first-order conditions.
    pub foc_residuals: (f64, f64),
    pub grad_at_solution: (f64, f64),
    pub iterations: u32,
    pub method: SolveMethod,
    pub case_tag: CaseTag,
    pub diagnostics: Vec<String>,
}

/// Dense table of lambda over barrier grids; entries with `a >= b` are NaN.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub a_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    /// Row-major: `lambda_table[i][j] = lambda(a_grid[i], b_grid[j])`.
    pub lambda_table: Vec<Vec<f64>>,
    pub argmax: BarrierPair,
}

fn check_pair(cache: &ScaleSpeedCache, pair: &BarrierPair) -> Result<()> {
    let cap = cache.model().domain_cap();
    if pair.b > cap {
        return Err(Error::OutOfRange {
            what: "b",
            lo: pair.a,
            hi: cap,
            got: pair.b,
        });
    }
    Ok(())
}

/// `lambda(a, b)`: long-run average reward of the (a, b)-reflection policy.
pub fn lambda_ab(cache: &ScaleSpeedCache, reward: &RewardModel, pair: &BarrierPair) -> Result<f64> {
    check_pair(cache, pair)?;
    let (a, b) = (pair.a, pair.b);
    let m_ab = cache.speed_measure(a, b)?;
    let hm = cache.integrate_speed_weighted(|x| reward.h(x), a, b)?;
    let s_a = cache.scale_density(a)?;
    let s_b = cache.scale_density(b)?;
    Ok((reward.c1() / s_b - reward.c2() / s_a + 2.0 * hm) / (2.0 * m_ab))
}

/// The same reward assembled from the stationary density `m / M[a, b]` plus
/// the boundary local-time rates; algebraically identical to [`lambda_ab`].
pub fn lambda_via_stationary(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    pair: &BarrierPair,
) -> Result<f64> {
    check_pair(cache, pair)?;
    let (a, b) = (pair.a, pair.b);
    let m_ab = cache.speed_measure(a, b)?;
    let h_mean = cache.integrate_speed_weighted(|x| reward.h(x), a, b)? / m_ab;
    let s_a = cache.scale_density(a)?;
    let s_b = cache.scale_density(b)?;
    Ok(h_mean + reward.c1() / (2.0 * m_ab * s_b) - reward.c2() / (2.0 * m_ab * s_a))
}

/// `(d lambda / d a, d lambda / d b)` in closed form.
pub fn grad_lambda(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    pair: &BarrierPair,
) -> Result<(f64, f64)> {
    check_pair(cache, pair)?;
    let (a, b) = (pair.a, pair.b);
    let lam = lambda_ab(cache, reward, pair)?;
    let m_ab = cache.speed_measure(a, b)?;
    let model = cache.model();
    let da = cache.speed_density(a)? / m_ab * (lam - pi(reward, model, PiIndex::Two, a));
    let db = cache.speed_density(b)? / m_ab * (pi(reward, model, PiIndex::One, b) - lam);
    Ok((da, db))
}

/// Integral first-order-condition residuals:
/// `R1 = int_a^b (pi2(x) - pi2(a)) m dx + (c1 - c2) / (2 s(b))`,
/// `R2 = int_a^b (pi1(x) - pi1(b)) m dx + (c1 - c2) / (2 s(a))`.
/// Both vanish exactly at the optimal pair.
pub fn foc_residuals(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    pair: &BarrierPair,
) -> Result<(f64, f64)> {
    check_pair(cache, pair)?;
    let (a, b) = (pair.a, pair.b);
    let model = cache.model();
    let dc = reward.c1() - reward.c2();
    let pi2_a = pi(reward, model, PiIndex::Two, a);
    let pi1_b = pi(reward, model, PiIndex::One, b);
    let r1 = cache
        .integrate_speed_weighted(|x| pi(reward, model, PiIndex::Two, x) - pi2_a, a, b)?
        + dc / (2.0 * cache.scale_density(b)?);
    let r2 = cache
        .integrate_speed_weighted(|x| pi(reward, model, PiIndex::One, x) - pi1_b, a, b)?
        + dc / (2.0 * cache.scale_density(a)?);
    Ok((r1, r2))
}

/// Upper end of the admissible lower-barrier range for the active case:
/// `y1` (CaseI) or `xhat2` (CaseII). Ties resolve to CaseI.
fn case_and_a_max(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    shape: &ShapeReport,
) -> Result<(CaseTag, f64)> {
    let model = cache.model();
    let p1_peak = pi(reward, model, PiIndex::One, shape.xhat1);
    let p2_peak = pi(reward, model, PiIndex::Two, shape.xhat2);
    let tie_tol = 1e-12 * (1.0 + p1_peak.abs());
    if p2_peak >= p1_peak - tie_tol {
        // pi2 reaches pi1's crest before its own peak
        let y1 = roots::bisect(
            &|y| Ok(pi(reward, model, PiIndex::Two, y) - p1_peak),
            1e-300,
            shape.xhat2,
            1e-14 * shape.xhat2,
        )?;
        Ok((CaseTag::CaseI, y1))
    } else {
        Ok((CaseTag::CaseII, shape.xhat2))
    }
}

/// The matching upper barrier: the unique `b_a` on the decreasing branch of
/// pi1 with `pi1(b_a) = pi2(a)`.
pub fn b_of_a(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    a: f64,
    shape: &ShapeReport,
) -> Result<f64> {
    let model = cache.model();
    let (_, a_max) = case_and_a_max(cache, reward, shape)?;
    if !(a > 0.0 && a <= a_max * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange {
            what: "a",
            lo: 0.0,
            hi: a_max,
            got: a,
        });
    }
    let target = pi(reward, model, PiIndex::Two, a);
    let p1 = |x: f64| pi(reward, model, PiIndex::One, x) - target;
    // At the branch endpoint (a = y1) the target equals the pi1 peak and the
    // bracket start sits at rounding noise; clamp to the peak itself.
    let start = p1(shape.xhat1);
    if start <= 0.0 {
        if start.abs() <= 1e-9 * (1.0 + target.abs()) {
            return Ok(shape.xhat1);
        }
        return Err(Error::OutOfRange {
            what: "a",
            lo: 0.0,
            hi: shape.xhat1,
            got: a,
        });
    }
    // pi1 decreases from its peak through b0 (where it is 0) toward the cap;
    // a positive target brackets inside [xhat1, b0].
    let hi = if target >= 0.0 {
        shape.b0.min(model.domain_cap())
    } else {
        model.domain_cap()
    };
    if p1(hi) > 0.0 {
        return Err(Error::BarrierAtCap {
            a,
            cap: model.domain_cap(),
        });
    }
    roots::bisect(&|x| Ok(p1(x)), shape.xhat1, hi, 1e-12 * (1.0 + hi))
}

/// The barrier profit function
/// `ell(a) = int_a^{b_a} h m - pi1(b_a) M[a, b_a] + c1/(2 s(b_a)) - c2/(2 s(a))`,
/// strictly decreasing on the admissible range with `ell(a*) = 0`.
pub fn ell(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    a: f64,
    shape: &ShapeReport,
) -> Result<f64> {
    let b_a = b_of_a(cache, reward, a, shape)?;
    let model = cache.model();
    let hm = cache.integrate_speed_weighted(|x| reward.h(x), a, b_a)?;
    let m_ab = cache.speed_measure(a, b_a)?;
    let pi1_b = pi(reward, model, PiIndex::One, b_a);
    Ok(hm - pi1_b * m_ab + reward.c1() / (2.0 * cache.scale_density(b_a)?)
        - reward.c2() / (2.0 * cache.scale_density(a)?))
}

fn central_diff<F: Fn(f64) -> f64>(f: &F, x: f64) -> f64 {
    let h = 1e-6 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Solve for the optimal pair: case selection, bracketed bisection of
/// `ell`, then damped Newton polish on the integral first-order conditions.
pub fn solve_barriers(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    shape: &ShapeReport,
    opts: &SolveOpts,
) -> Result<BarrierSolution> {
    let mut diagnostics = Vec::new();
    if !shape.flags.solver_ready() {
        if opts.force {
            diagnostics.push(
                "shape assumptions not verified; proceeding under force \
                 (solution may not be unique)"
                    .to_string(),
            );
        } else {
            return Err(Error::AssumptionsFailed(format!(
                "origin_anchored = {}, pi_unimodal = {}, small_barrier_profit = {}",
                shape.flags.origin_anchored,
                shape.flags.pi_unimodal,
                shape.flags.small_barrier_profit
            )));
        }
    }
    let (case_tag, a_max) = case_and_a_max(cache, reward, shape)?;

    // Bracket the root of ell: negative at a_max, walk down by halving until
    // positive. Quadrature failure near 0 falls back to the trend rule.
    let ell_at = |a: f64| ell(cache, reward, a, shape);
    let mut hi = a_max;
    let mut f_hi = ell_at(hi)?;
    let mut iterations = 1u32;
    if f_hi > 0.0 {
        return Err(Error::NoBarrierRoot {
            lo: hi,
            hi,
            f_lo: f_hi,
            f_hi,
        });
    }
    let mut lo = hi;
    let mut f_lo = f_hi;
    let mut trend: Vec<f64> = vec![f_hi];
    let bracket = loop {
        let next = lo * 0.5;
        match ell_at(next) {
            Ok(v) => {
                iterations += 1;
                trend.push(v);
                if v > 0.0 {
                    break Some((next, v, lo, f_lo));
                }
                hi = lo;
                f_hi = f_lo;
                lo = next;
                f_lo = v;
                if iterations > 60 {
                    break None;
                }
            }
            Err(_) => {
                // s(a) or the integral left working precision; accept the
                // bracket only if the probes were trending up, else report.
                let n = trend.len();
                let rising = n >= 3 && trend[n - 1] > trend[n - 2] && trend[n - 2] > trend[n - 3];
                if rising {
                    diagnostics.push(format!(
                        "ell probe left working precision below a = {next:e} \
                         while still negative; no root"
                    ));
                }
                break None;
            }
        }
    };
    let (b_lo, f_blo, b_hi, f_bhi) = bracket.ok_or(Error::NoBarrierRoot {
        lo,
        hi,
        f_lo,
        f_hi,
    })?;
    let _ = (f_blo, f_bhi);
    let mut a_star = roots::bisect(&|a| ell_at(a), b_lo, b_hi, opts.x_tol)?;
    let mut b_star = b_of_a(cache, reward, a_star, shape)?;
    let mut method = SolveMethod::EllBisection;

    // Damped Newton on the FOC system, using the closed-form Jacobian
    // structure with finite-difference pi' entries.
    if opts.newton_polish {
        let model = cache.model();
        let mut a = a_star;
        let mut b = b_star;
        let pair0 = BarrierPair::new(a, b)?;
        let (mut r1, mut r2) = foc_residuals(cache, reward, &pair0)?;
        let mut improved = false;
        for _ in 0..opts.max_newton_steps {
            let norm0 = r1.abs().max(r2.abs());
            if norm0 < 1e-14 {
                break;
            }
            let m_ab = cache.speed_measure(a, b)?;
            let m_a = cache.speed_density(a)?;
            let m_b = cache.speed_density(b)?;
            let gap = pi(reward, model, PiIndex::One, b) - pi(reward, model, PiIndex::Two, a);
            let dpi2_a = central_diff(&|x| pi(reward, model, PiIndex::Two, x), a);
            let dpi1_b = central_diff(&|x| pi(reward, model, PiIndex::One, x), b);
            let j11 = -dpi2_a * m_ab;
            let j12 = m_b * gap;
            let j21 = m_a * gap;
            let j22 = -dpi1_b * m_ab;
            let det = j11 * j22 - j12 * j21;
            if det.abs() < 1e-300 {
                diagnostics.push("newton: singular jacobian, keeping bisection result".into());
                break;
            }
            let mut da = -(j22 * r1 - j12 * r2) / det;
            let mut db = -(-j21 * r1 + j11 * r2) / det;
            // halve the step until both residual components shrink
            let mut accepted = false;
            for _ in 0..20 {
                let (na, nb) = (a + da, b + db);
                if na > 0.0 && nb > na {
                    if let Ok(pair) = BarrierPair::new(na, nb) {
                        if let Ok((n1, n2)) = foc_residuals(cache, reward, &pair) {
                            if n1.abs() <= r1.abs() && n2.abs() <= r2.abs() {
                                a = na;
                                b = nb;
                                r1 = n1;
                                r2 = n2;
                                accepted = true;
                                improved = true;
                                break;
                            }
                        }
                    }
                }
                da *= 0.5;
                db *= 0.5;
            }
            iterations += 1;
            if !accepted {
                diagnostics.push("newton: no step reduced both residuals; stopping".into());
                break;
            }
        }
        if improved {
            a_star = a;
            b_star = b;
            method = SolveMethod::Both;
        }
    }

    let pair = BarrierPair::new(a_star, b_star)?;
    let lambda_star = lambda_ab(cache, reward, &pair)?;
    let foc = foc_residuals(cache, reward, &pair)?;
    let grad = grad_lambda(cache, reward, &pair)?;
    Ok(BarrierSolution {
        pair,
        lambda_star,
        foc_residuals: foc,
        grad_at_solution: grad,
        iterations,
        method,
        case_tag,
        diagnostics,
    })
}

/// Fill the lambda table over sorted grids. Entries with `a >= b` stay NaN.
pub fn sweep(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    a_grid: &[f64],
    b_grid: &[f64],
) -> Result<SweepResult> {
    for g in [a_grid, b_grid] {
        if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) || g[0] <= 0.0 {
            return Err(Error::InvalidArgument(
                "sweep grids must be sorted, positive and duplicate-free".into(),
            ));
        }
        if *g.last().unwrap() > cache.model().domain_cap() {
            return Err(Error::OutOfRange {
                what: "grid point",
                lo: 0.0,
                hi: cache.model().domain_cap(),
                got: *g.last().unwrap(),
            });
        }
    }
    let mut table = vec![vec![f64::NAN; b_grid.len()]; a_grid.len()];
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for (i, &a) in a_grid.iter().enumerate() {
        for (j, &b) in b_grid.iter().enumerate() {
            if a >= b {
                continue;
            }
            let lam = lambda_ab(cache, reward, &BarrierPair::new(a, b)?)?;
            table[i][j] = lam;
            if lam > best.0 {
                best = (lam, i, j);
            }
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "sweep grids contain no pair with a < b".into(),
        ));
    }
    Ok(SweepResult {
        a_grid: a_grid.to_vec(),
        b_grid: b_grid.to_vec(),
        lambda_table: table,
        argmax: BarrierPair::new(a_grid[best.1], b_grid[best.2])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{check_assumptions, DiffusionModel, RewardModel};
    use crate::error::Error;
    use crate::models;
    use std::sync::Arc;

    fn bm_cache() -> ScaleSpeedCache {
        ScaleSpeedCache::new(
            DiffusionModel::new("bm", vec![], Arc::new(|_| 0.0), Arc::new(|_| 1.0), 1e3).unwrap(),
        )
    }

    fn vp_fixture() -> (ScaleSpeedCache, RewardModel) {
        let model = models::verhulst_pearl_model(
            models::VerhulstPearlParams::new(1.0, 1.0, 0.5).unwrap(),
            1e3,
        )
        .unwrap();
        let reward =
            models::power_reward(models::PowerReward::new(1.0, 0.5).unwrap(), 0.5, 1.5).unwrap();
        (ScaleSpeedCache::new(model), reward)
    }

    fn gbm_fixture() -> (ScaleSpeedCache, RewardModel) {
        let model =
            models::gbm_model(models::GbmParams::new(-0.5, 1.0).unwrap(), 1e3, false).unwrap();
        let reward =
            models::power_reward(models::PowerReward::new(1.0, 0.5).unwrap(), 1.0, 2.0).unwrap();
        (ScaleSpeedCache::new(model), reward)
    }

    #[test]
    fn lambda_brownian_hand_computed() {
        // s = m = 1: lambda = (c1 - c2) / (2 (b - a)) with h = 0
        let cache = bm_cache();
        let reward = RewardModel::new(Arc::new(|_| 0.0), 1.0, 2.0).unwrap();
        let pair = BarrierPair::new(1.0, 2.0).unwrap();
        let lam = lambda_ab(&cache, &reward, &pair).unwrap();
        assert!((lam + 0.5).abs() < 1e-12, "got {lam}");
    }

    #[test]
    fn lambda_gbm_oracle_fixture() {
        let (cache, reward) = gbm_fixture();
        let pair = BarrierPair::new(0.5, 2.0).unwrap();
        let lam = lambda_ab(&cache, &reward, &pair).unwrap();
        assert!(
            (lam - (-0.053378227856741)).abs() < 1e-11,
            "lambda = {lam}"
        );
    }

    #[test]
    fn stationary_route_matches_direct_route() {
        let (cache, reward) = vp_fixture();
        for &(a, b) in &[(0.2, 0.9), (0.5, 1.5), (0.05, 3.0)] {
            let pair = BarrierPair::new(a, b).unwrap();
            let l1 = lambda_ab(&cache, &reward, &pair).unwrap();
            let l2 = lambda_via_stationary(&cache, &reward, &pair).unwrap();
            assert!((l1 - l2).abs() <= 1e-12 * (1.0 + l1.abs()));
        }
    }

    #[test]
    fn stationary_route_uniform_case() {
        // mu = 0, sigma = 1, h = 1: pi uniform, lambda = 1 + (c1-c2)/(2(b-a))
        let cache = bm_cache();
        let reward = RewardModel::new(Arc::new(|_| 1.0), 1.0, 1.5).unwrap();
        let pair = BarrierPair::new(1.0, 2.0).unwrap();
        let lam = lambda_via_stationary(&cache, &reward, &pair).unwrap();
        assert!((lam - (1.0 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn gradient_brownian_hand_computed() {
        // h = 0: d lambda/da = lambda / (b - a)
        let cache = bm_cache();
        let reward = RewardModel::new(Arc::new(|_| 0.0), 1.0, 2.0).unwrap();
        let pair = BarrierPair::new(1.0, 2.0).unwrap();
        let lam = lambda_ab(&cache, &reward, &pair).unwrap();
        let (da, _) = grad_lambda(&cache, &reward, &pair).unwrap();
        assert!((da - lam / 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (cache, reward) = vp_fixture();
        let pairs = [(0.3, 1.2), (0.5, 1.0), (0.2, 2.0), (0.7, 1.4)];
        for &(a, b) in &pairs {
            let pair = BarrierPair::new(a, b).unwrap();
            let (ga, gb) = grad_lambda(&cache, &reward, &pair).unwrap();
            let h_a = 1e-6 * a.max(1.0);
            let h_b = 1e-6 * b.max(1.0);
            let fda = (lambda_ab(&cache, &reward, &BarrierPair::new(a + h_a, b).unwrap()).unwrap()
                - lambda_ab(&cache, &reward, &BarrierPair::new(a - h_a, b).unwrap()).unwrap())
                / (2.0 * h_a);
            let fdb = (lambda_ab(&cache, &reward, &BarrierPair::new(a, b + h_b).unwrap()).unwrap()
                - lambda_ab(&cache, &reward, &BarrierPair::new(a, b - h_b).unwrap()).unwrap())
                / (2.0 * h_b);
            assert!((ga - fda).abs() <= 1e-5 * (1.0 + ga.abs()), "{ga} vs {fda}");
            assert!((gb - fdb).abs() <= 1e-5 * (1.0 + gb.abs()), "{gb} vs {fdb}");
        }
    }

    #[test]
    fn foc_near_degenerate_interval() {
        // a -> b: R1 ~ (c1 - c2) / (2 s(b)) < 0
        let (cache, reward) = vp_fixture();
        let b = 1.5;
        let pair = BarrierPair::new(b - 1e-7, b).unwrap();
        let (r1, _) = foc_residuals(&cache, &reward, &pair).unwrap();
        let s_b = cache.scale_density(b).unwrap();
        let expect = (reward.c1() - reward.c2()) / (2.0 * s_b);
        assert!((r1 - expect).abs() < 1e-6, "{r1} vs {expect}");
        assert!(r1 < 0.0);
    }

    #[test]
    fn foc_zero_iff_lambda_matches_pi() {
        // sign/zero equivalence of the residual forms on random pairs
        let (cache, reward) = vp_fixture();
        let model = cache.model().clone();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = rng.gen_range(0.1..0.9);
            let b = a + rng.gen_range(0.1..1.5);
            let pair = BarrierPair::new(a, b).unwrap();
            let (r1, r2) = foc_residuals(&cache, &reward, &pair).unwrap();
            let lam = lambda_ab(&cache, &reward, &pair).unwrap();
            let m_ab = cache.speed_measure(a, b).unwrap();
            // R1 = (lambda - pi2(a)) * ... sign test via the algebraic link:
            // R1 = M (lambda - pi2(a)) - hold: verify numerically
            let alt1 = m_ab * (lam - pi(&reward, &model, PiIndex::Two, a));
            let alt2 = m_ab * (lam - pi(&reward, &model, PiIndex::One, b));
            assert!(
                (r1 - alt1).abs() <= 1e-9 * (1.0 + alt1.abs()),
                "{r1} vs {alt1}"
            );
            assert!(
                (r2 - alt2).abs() <= 1e-9 * (1.0 + alt2.abs()),
                "{r2} vs {alt2}"
            );
        }
    }

    #[test]
    fn b_of_a_branch_endpoints() {
        let (cache, reward) = vp_fixture();
        let shape = check_assumptions(&cache, &reward, 512).unwrap();
        // At a = y1 (pi2(a) = pi1 peak) the matching barrier is xhat1 itself.
        let y1 = 0.407007512459952; // frozen oracle value
        let b = b_of_a(&cache, &reward, y1, &shape).unwrap();
        assert!((b - shape.xhat1).abs() < 1e-6, "b = {b}");
        // Tiny a: pi2(a) ~ 0 and b_a approaches b0.
        let b_near0 = b_of_a(&cache, &reward, 1e-10, &shape).unwrap();
        assert!((b_near0 - shape.b0).abs() < 1e-4, "b = {b_near0}");
    }

    #[test]
    fn ell_signs_and_monotonicity() {
        let (cache, reward) = vp_fixture();
        let shape = check_assumptions(&cache, &reward, 512).unwrap();
        let y1 = 0.407007512459952;
        // right endpoint of the admissible range: negative
        assert!(ell(&cache, &reward, y1, &shape).unwrap() < 0.0);
        // strictly decreasing on sampled points
        let mut prev = f64::INFINITY;
        for k in 1..=32 {
            let a = y1 * k as f64 / 33.0;
            let v = ell(&cache, &reward, a, &shape).unwrap();
            assert!(v < prev, "ell not decreasing at a = {a}");
            prev = v;
        }
        // root at the frozen a*
        let at_root = ell(&cache, &reward, 0.351260505882, &shape).unwrap();
        assert!(at_root.abs() < 1e-7, "ell(a*) = {at_root}");
    }

    #[test]
    fn solve_vp_matches_grid_oracle() {
        let (cache, reward) = vp_fixture();
        let shape = check_assumptions(&cache, &reward, 512).unwrap();
        let sol = solve_barriers(&cache, &reward, &shape, &SolveOpts::default()).unwrap();
        // frozen independent grid-search oracle values
        assert!(
            (sol.pair.a() - 0.351260505882).abs() < 1e-3,
            "a* = {}",
            sol.pair.a()
        );
        assert!(
            (sol.pair.b() - 1.328278066488).abs() < 1e-3,
            "b* = {}",
            sol.pair.b()
        );
        let rel = (sol.lambda_star - 0.934487187103).abs() / 0.934487187103;
        assert!(rel < 1e-6, "lambda* = {}", sol.lambda_star);
        assert_eq!(sol.case_tag, CaseTag::CaseI);
        // post-solve identities: lambda* = pi1(b*) = pi2(a*)
        let model = cache.model();
        let p1 = pi(&reward, model, PiIndex::One, sol.pair.b());
        let p2 = pi(&reward, model, PiIndex::Two, sol.pair.a());
        let scale = 1.0 + sol.lambda_star.abs();
        assert!((sol.lambda_star - p1).abs() <= 1e-8 * scale);
        assert!((sol.lambda_star - p2).abs() <= 1e-8 * scale);
        // residual tolerance from the acceptance contract
        let m_ab = cache.speed_measure(sol.pair.a(), sol.pair.b()).unwrap();
        let tol = 1e-8 * scale * m_ab;
        assert!(sol.foc_residuals.0.abs() <= tol);
        assert!(sol.foc_residuals.1.abs() <= tol);
        // gradient vanishes
        assert!(sol.grad_at_solution.0.abs() < 1e-7);
        assert!(sol.grad_at_solution.1.abs() < 1e-7);
    }

    #[test]
    fn solve_gbm_matches_grid_oracle() {
        let (cache, reward) = gbm_fixture();
        let shape = check_assumptions(&cache, &reward, 512).unwrap();
        let sol = solve_barriers(&cache, &reward, &shape, &SolveOpts::default()).unwrap();
        assert!(
            (sol.pair.a() - 0.113723399281).abs() < 1e-3,
            "a* = {}",
            sol.pair.a()
        );
        assert!(
            (sol.pair.b() - 3.040253125060).abs() < 1e-3,
            "b* = {}",
            sol.pair.b()
        );
        let rel = (sol.lambda_star - 0.223505601964).abs() / 0.223505601964;
        assert!(rel < 1e-6, "lambda* = {}", sol.lambda_star);
        assert_eq!(sol.case_tag, CaseTag::CaseII);
    }

    #[test]
    fn solve_requires_assumptions_or_force() {
        // mu=0, h=0 fails the shape assumptions; without force this errors.
        let cache = bm_cache();
        let reward = RewardModel::new(Arc::new(|_| 0.0), 1.0, 2.0).unwrap();
        let shape = check_assumptions(&cache, &reward, 128).unwrap();
        assert!(matches!(
            solve_barriers(&cache, &reward, &shape, &SolveOpts::default()),
            Err(Error::AssumptionsFailed(_))
        ));
    }

    #[test]
    fn sweep_shapes_and_argmax() {
        let (cache, reward) = vp_fixture();
        // 2x2 grid with one valid pair
        let r = sweep(&cache, &reward, &[1.0, 2.0], &[0.5, 1.5]).unwrap();
        assert!(r.lambda_table[0][0].is_nan()); // a=1 >= b=0.5
        assert!(!r.lambda_table[0][1].is_nan()); // (1, 1.5)
        assert!(r.lambda_table[1][0].is_nan());
        assert!(r.lambda_table[1][1].is_nan()); // a=2 >= b=1.5
        assert_eq!(r.argmax.a(), 1.0);
        assert_eq!(r.argmax.b(), 1.5);
        // entries reproduce pointwise evaluation
        let direct = lambda_ab(&cache, &reward, &BarrierPair::new(1.0, 1.5).unwrap()).unwrap();
        assert_eq!(r.lambda_table[0][1], direct);
    }

    #[test]
    fn sweep_negative_for_zero_reward() {
        let cache = bm_cache();
        let reward = RewardModel::new(Arc::new(|_| 0.0), 1.0, 2.0).unwrap();
        let r = sweep(&cache, &reward, &[0.5, 1.0, 1.5], &[2.0, 3.0]).unwrap();
        for row in &r.lambda_table {
            for &v in row {
                if !v.is_nan() {
                    assert!(v < 0.0);
                }
            }
        }
    }

    #[test]
    fn matching_barrier_beyond_cap_is_an_error() {
        // domain cap below the pi1 level set: the matching upper barrier
        // cannot be bracketed and the error says to raise the cap
        let model =
            models::gbm_model(models::GbmParams::new(-0.5, 1.0).unwrap(), 2.0, false).unwrap();
        let reward =
            models::power_reward(models::PowerReward::new(1.0, 0.5).unwrap(), 1.0, 2.0).unwrap();
        let cache = ScaleSpeedCache::new(model);
        let shape = ShapeReport {
            xhat1: 1.0,
            xhat2: 0.25,
            b0: f64::NAN,
            flags: Default::default(),
            violations: vec![],
        };
        match b_of_a(&cache, &reward, 0.25, &shape) {
            Err(Error::BarrierAtCap { .. }) => {}
            other => panic!("expected BarrierAtCap, got {other:?}"),
        }
    }

    #[test]
    fn force_overrides_the_assumption_gate() {
        // a peaks-only shape report leaves the gate flags unverified; force
        // proceeds and records a diagnostic
        let (cache, reward) = vp_fixture();
        let shape =
            crate::diffusion::find_peaks_and_b0(&reward, cache.model(), 100.0).unwrap();
        assert!(!shape.flags.solver_ready());
        let opts = SolveOpts {
            force: true,
            ..Default::default()
        };
        let sol = solve_barriers(&cache, &reward, &shape, &opts).unwrap();
        assert!((sol.lambda_star - 0.934487187103).abs() < 1e-9);
        assert!(sol.diagnostics.iter().any(|d| d.contains("force")));
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        let (cache, reward) = vp_fixture();
        assert!(sweep(&cache, &reward, &[1.0, 0.5], &[2.0]).is_err());
    }
}
