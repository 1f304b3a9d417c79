//! Discounted free-boundary solver by ODE shooting, and the vanishing
//! discount sweep.
//!
//! For a discount rate `r`, the value `V_r` satisfies
//! `r V = (sigma^2/2) V'' + mu V' + h` between the barriers with
//! `V'(a_r) = c2, V''(a_r) = 0` and `V'(b_r) = c1, V''(b_r) = 0`; the value
//! itself pastes as `r V(a_r) = pi2(a_r)` and `r V(b_r) = pi1(b_r)`. The
//! shooter launches from a trial lower barrier `a` with
//! `V(a) = pi2(a)/r, V'(a) = c2` (which makes `V''(a) = 0` an identity) and
//! integrates until the gradient either crosses `c1` or bottoms out above
//! it. The pasting at the upper barrier is *tangential*: `V'` touches `c1`
//! exactly where `V''` vanishes. The solver therefore bisects the sign of the
//! interior gradient minimum against `c1`, which is linear in `a`, rather
//! than the crossing residual, which has square-root behavior.

use crate::barrier::BarrierSolution;
use crate::diffusion::{pi, PiIndex, RewardModel, ScaleSpeedCache};
use crate::error::{Error, Result};
use crate::ode::{integrate_dense, Control, DenseStep, Rk45Opts, State2};

/// Integrator and event-location tolerances for the shooter.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub step_floor: f64,
    /// Bisection tolerance (in x) for locating events inside a step.
    pub event_x_tol: f64,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            step_floor: 1e-8,
            event_x_tol: 1e-12,
        }
    }
}

/// State of the shot trajectory at its terminal event.
#[derive(Debug, Clone, Copy)]
pub struct ShootState {
    pub x: f64,
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
}

/// Terminal condition of a shot.
#[derive(Debug, Clone, Copy)]
pub enum ShootOutcome {
    /// The gradient crossed `c1` transversally (trial barrier too low).
    Crossed(ShootState),
    /// The gradient bottomed out above `c1` (trial barrier too high).
    MinAboveBand(ShootState),
    /// The gradient left the band upward before dipping.
    InvalidBranch(ShootState),
    /// Reached the domain cap without any event.
    NoCrossing(ShootState),
}

/// Discounted solution with grid samples on `[a_r, b_r]`.
///
/// Outside the barriers the value extends linearly: slope `c2` below `a_r`,
/// `c1` above `b_r`.
#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    pub r: f64,
    pub a_r: f64,
    pub b_r: f64,
    pub xs: Vec<f64>,
    pub v: Vec<f64>,
    pub v1: Vec<f64>,
    /// |r V(b_r) - pi1(b_r)| at the accepted trajectory's terminal point.
    pub shoot_residual: f64,
    pub c1: f64,
    pub c2: f64,
}

impl DiscountedSolution {
    /// Value at any `x > 0`: cubic Hermite inside the barriers, linear
    /// extension outside.
    pub fn v_at(&self, x: f64) -> f64 {
        if x <= self.a_r {
            return self.v[0] - self.c2 * (self.a_r - x);
        }
        if x >= self.b_r {
            return self.v[self.v.len() - 1] + self.c1 * (x - self.b_r);
        }
        let j = match self
            .xs
            .binary_search_by(|p| p.partial_cmp(&x).unwrap())
        {
            Ok(j) => return self.v[j],
            Err(j) => j - 1,
        };
        let h = self.xs[j + 1] - self.xs[j];
        let t = (x - self.xs[j]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.v[j]
            + h * (t3 - 2.0 * t2 + t) * self.v1[j]
            + (-2.0 * t3 + 3.0 * t2) * self.v[j + 1]
            + h * (t3 - t2) * self.v1[j + 1]
    }

    /// Value of the limit at 0+ implied by the linear extension.
    pub fn v_at_zero(&self) -> f64 {
        self.v[0] - self.c2 * self.a_r
    }
}

struct Shooter<'a> {
    cache: &'a ScaleSpeedCache,
    reward: &'a RewardModel,
    r: f64,
}

impl<'a> Shooter<'a> {
    fn rhs(&self, x: f64, y: &State2) -> Result<State2> {
        let model = self.cache.model();
        let sig = model.vol(x);
        if !(sig > 0.0) {
            return Err(Error::DegenerateVolatility { x });
        }
        let v2 =
            (2.0 / (sig * sig)) * (self.r * y[0] - model.drift(x) * y[1] - self.reward.h(x));
        if !v2.is_finite() {
            return Err(Error::NonFiniteIntegrand { x });
        }
        Ok([y[1], v2])
    }

    fn v2_of(&self, x: f64, y: &State2) -> f64 {
        self.rhs(x, y).map(|f| f[1]).unwrap_or(f64::NAN)
    }

    /// Bisect a scalar event function of the Hermite state inside a step.
    fn locate<G>(&self, step: &DenseStep, g: G, x_tol: f64) -> (f64, State2)
    where
        G: Fn(f64, &State2) -> f64,
    {
        let (mut lo, mut hi) = (step.x0, step.x1);
        let y_lo = step.eval(lo);
        let mut g_lo = g(lo, &y_lo);
        while hi - lo > x_tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let y_mid = step.eval(mid);
            let g_mid = g(mid, &y_mid);
            if g_mid == 0.0 {
                return (mid, y_mid);
            }
            if g_mid * g_lo < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                g_lo = g_mid;
            }
        }
        let x = 0.5 * (lo + hi);
        (x, step.eval(x))
    }
}

/// Integrate the discounted smooth-pasting ODE from trial lower barrier `a`
/// until the gradient crosses `c1`, bottoms out, exits the band upward, or
/// reaches the domain cap.
pub fn shoot(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    r: f64,
    a: f64,
    opts: &IntegratorOpts,
) -> Result<ShootOutcome> {
    shoot_with(cache, reward, r, a, opts, |_| {}).map(|(o, _)| o)
}

/// Like [`shoot`], but streams accepted dense steps to `collect` and also
/// returns the number of steps taken.
fn shoot_with<C>(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    r: f64,
    a: f64,
    opts: &IntegratorOpts,
    mut collect: C,
) -> Result<(ShootOutcome, u64)>
where
    C: FnMut(&DenseStep),
{
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "discount rate must be positive, got {r}"
        )));
    }
    if !(a > 0.0 && a < cache.model().domain_cap()) {
        return Err(Error::OutOfRange {
            what: "a",
            lo: 0.0,
            hi: cache.model().domain_cap(),
            got: a,
        });
    }
    let shooter = Shooter { cache, reward, r };
    let model = cache.model();
    let c1 = reward.c1();
    let c2 = reward.c2();
    let v0 = pi(reward, model, PiIndex::Two, a) / r;
    let rk = Rk45Opts {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        h_min: opts.step_floor,
        h_init: 1e-6 * (1.0 + a),
        h_max: 0.05 * (1.0 + a),
        max_steps: 5_000_000,
    };
    let cap = model.domain_cap();
    let mut outcome: Option<ShootOutcome> = None;
    let mut armed = false; // becomes true once V'' has gone strictly negative
    let mut nsteps = 0u64;
    let res = integrate_dense(
        &|x, y| shooter.rhs(x, y),
        a,
        [v0, c2],
        cap,
        &rk,
        |step| {
            nsteps += 1;
            let v2_end = shooter.v2_of(step.x1, &step.y1);
            // 1) transversal crossing of c1 from above
            if step.y0[1] > c1 && step.y1[1] <= c1 {
                let (x, y) = shooter.locate(step, |_, y| y[1] - c1, opts.event_x_tol);
                outcome = Some(ShootOutcome::Crossed(ShootState {
                    x,
                    v: y[0],
                    v1: y[1],
                    v2: shooter.v2_of(x, &y),
                }));
                return Control::Stop;
            }
            // 2) gradient minimum: V'' upcrossing after having been negative
            if armed {
                let v2_start = shooter.v2_of(step.x0, &step.y0);
                if v2_start < 0.0 && v2_end >= 0.0 {
                    let (x, y) = shooter.locate(
                        step,
                        |x, y| shooter.v2_of(x, y),
                        opts.event_x_tol,
                    );
                    let state = ShootState {
                        x,
                        v: y[0],
                        v1: y[1],
                        v2: shooter.v2_of(x, &y),
                    };
                    outcome = Some(if y[1] <= c1 {
                        // the dip bottomed below the band but the endpoint
                        // check missed the crossing; treat as crossed at the
                        // minimum
                        ShootOutcome::Crossed(state)
                    } else {
                        ShootOutcome::MinAboveBand(state)
                    });
                    return Control::Stop;
                }
            } else if v2_end < 0.0 {
                armed = true;
            }
            // 3) upward band exit before any dip
            if !armed && step.y1[1] > c2 * (1.0 + 1e-12) {
                let (x, y) = shooter.locate(step, |_, y| y[1] - c2, opts.event_x_tol);
                outcome = Some(ShootOutcome::InvalidBranch(ShootState {
                    x,
                    v: y[0],
                    v1: y[1],
                    v2: shooter.v2_of(x, &y),
                }));
                return Control::Stop;
            }
            collect(step);
            Control::Continue
        },
    );
    match res {
        Ok((x_end, y_end)) => Ok((
            outcome.unwrap_or(ShootOutcome::NoCrossing(ShootState {
                x: x_end,
                v: y_end[0],
                v1: y_end[1],
                v2: shooter.v2_of(x_end, &y_end),
            })),
            nsteps,
        )),
        Err(e) => Err(e),
    }
}

fn is_low_side(outcome: &ShootOutcome) -> bool {
    matches!(outcome, ShootOutcome::Crossed(_))
}

/// Solve the discounted free boundary for rate `r` by bisecting the trial
/// lower barrier between the crossing and bottoming regimes.
///
/// `bracket_hint` seeds the probe (the ergodic `a*` is a good hint);
/// `sanity` bounds `(K1, K2)` reject runaway barriers.
pub fn solve_discounted(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    r: f64,
    bracket_hint: Option<f64>,
    sanity: Option<(f64, f64)>,
) -> Result<DiscountedSolution> {
    let opts = IntegratorOpts::default();
    let cap = cache.model().domain_cap();
    let hint = bracket_hint.unwrap_or(0.1 * cap.min(10.0));

    // Establish the bracket: `lo` shoots into a crossing, `hi` bottoms out.
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut probes = Vec::new();
    let mut x = hint;
    for _ in 0..80 {
        let out = shoot(cache, reward, r, x, &opts)?;
        probes.push((x, is_low_side(&out)));
        if is_low_side(&out) {
            lo = Some(x);
            if hi.is_some() {
                break;
            }
            x *= 1.25;
        } else {
            hi = Some(x);
            if lo.is_some() {
                break;
            }
            x *= 0.8;
        }
        if !(x > 1e-12 && x < cap) {
            break;
        }
    }
    let (mut a_crossed, mut a_other) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        _ => {
            return Err(Error::NoShootBracket {
                hint,
                detail: probes
                    .iter()
                    .map(|(x, low)| {
                        format!("a={x:.6e}:{}", if *low { "crossed" } else { "above" })
                    })
                    .collect::<Vec<_>>()
                    .join(", "),
            })
        }
    };
    // bisect on the predicate itself, so either orientation of the two
    // regimes converges to the boundary
    for _ in 0..100 {
        if (a_crossed - a_other).abs() <= 1e-13 * (1.0 + a_other.abs()) {
            break;
        }
        let mid = 0.5 * (a_crossed + a_other);
        if mid == a_crossed || mid == a_other {
            break;
        }
        let out = shoot(cache, reward, r, mid, &opts)?;
        if is_low_side(&out) {
            a_crossed = mid;
        } else {
            a_other = mid;
        }
    }

    // Accept the bottoming-side trajectory: at the gradient minimum the ODE
    // gives r V - pi1 = mu (V' - c1), so the pasting residual inherits the
    // bracket tightness linearly.
    let a_r = a_other;
    let mut steps: Vec<DenseStep> = Vec::new();
    let (outcome, _) = shoot_with(cache, reward, r, a_r, &opts, |s| steps.push(*s))?;
    let state = match outcome {
        ShootOutcome::MinAboveBand(s) | ShootOutcome::Crossed(s) => s,
        ShootOutcome::InvalidBranch(s) => {
            return Err(Error::ShootFailure {
                a: a_r,
                kind: "gradient left the band upward",
                x: s.x,
                v: s.v,
                v1: s.v1,
            })
        }
        ShootOutcome::NoCrossing(s) => {
            return Err(Error::ShootFailure {
                a: a_r,
                kind: "no gradient crossing before the domain cap",
                x: s.x,
                v: s.v,
                v1: s.v1,
            })
        }
    };
    let b_r = state.x;
    let model = cache.model();
    let shoot_residual = (r * state.v - pi(reward, model, PiIndex::One, b_r)).abs();
    let (k1, k2) = sanity.unwrap_or((1e-9, cap));
    if !(k1 <= a_r && a_r < b_r && b_r <= k2) {
        return Err(Error::BarrierBounds {
            a_r,
            b_r,
            lo: k1,
            hi: k2,
        });
    }

    // Sample the trajectory on a uniform grid via the dense steps.
    let n = 1001usize;
    let mut xs = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut v1 = Vec::with_capacity(n);
    let mut si = 0usize;
    for i in 0..n {
        let x = a_r + (b_r - a_r) * i as f64 / (n - 1) as f64;
        while si + 1 < steps.len() && steps[si].x1 < x {
            si += 1;
        }
        let y = if steps.is_empty() {
            [state.v, state.v1]
        } else if steps[si].x1 < x {
            [state.v, state.v1]
        } else {
            steps[si].eval(x)
        };
        xs.push(x);
        v.push(y[0]);
        v1.push(y[1]);
    }
    // pin the terminal sample to the located event state
    *v.last_mut().unwrap() = state.v;
    *v1.last_mut().unwrap() = state.v1;

    Ok(DiscountedSolution {
        r,
        a_r,
        b_r,
        xs,
        v,
        v1,
        shoot_residual,
        c1: reward.c1(),
        c2: reward.c2(),
    })
}

/// One row of the vanishing-discount sweep.
#[derive(Debug, Clone)]
pub enum AbelianRow {
    Solved {
        r: f64,
        a_r: f64,
        b_r: f64,
        rv_at_x: f64,
        dev_lambda: f64,
        dev_a: f64,
        dev_b: f64,
    },
    Failed {
        r: f64,
        reason: String,
    },
}

/// Sweep result; failures are recorded rows, not aborts.
#[derive(Debug, Clone)]
pub struct AbelianTable {
    pub x_eval: f64,
    pub rows: Vec<AbelianRow>,
}

/// Solve the discounted problem along a decreasing sequence of rates and
/// tabulate `r V_r(x_eval)` against the ergodic solution. Warm-starts each
/// solve from the previous lower barrier, so the sweep is sequential.
pub fn abelian_sweep(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    rs: &[f64],
    x_eval: f64,
    barrier_solution: &BarrierSolution,
) -> Result<AbelianTable> {
    if rs.is_empty() || rs.windows(2).any(|w| w[0] <= w[1]) || rs[rs.len() - 1] <= 0.0 {
        return Err(Error::InvalidArgument(
            "rs must be a decreasing sequence of positive rates".into(),
        ));
    }
    let a_star = barrier_solution.pair.a();
    let b_star = barrier_solution.pair.b();
    let lambda_star = barrier_solution.lambda_star;
    let mut hint = a_star;
    let mut rows = Vec::with_capacity(rs.len());
    for &r in rs {
        match solve_discounted(cache, reward, r, Some(hint), None) {
            Ok(sol) => {
                hint = sol.a_r;
                let rv = r * sol.v_at(x_eval);
                rows.push(AbelianRow::Solved {
                    r,
                    a_r: sol.a_r,
                    b_r: sol.b_r,
                    rv_at_x: rv,
                    dev_lambda: (rv - lambda_star).abs(),
                    dev_a: (sol.a_r - a_star).abs(),
                    dev_b: (sol.b_r - b_star).abs(),
                });
            }
            Err(e) => rows.push(AbelianRow::Failed {
                r,
                reason: e.to_string(),
            }),
        }
    }
    Ok(AbelianTable { x_eval, rows })
}
