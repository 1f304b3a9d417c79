//! One-dimensional diffusion primitives: drift/volatility models, the reward
//! structure, scale and speed densities and measures, and the reward-shape
//! functions pi1, pi2 with their critical points.
//!
//! Conventions: the scale density is normalized at the base point 1,
//! `s(x) = exp(-int_1^x 2 mu / sigma^2)`, the speed density is
//! `m(x) = 1 / (sigma^2(x) s(x))`, and all integrals are adaptive
//! Gauss-Kronrod to the cache tolerances.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts};
use crate::roots;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A one-dimensional diffusion `dX = mu(X) dt + sigma(X) dW` on (0, cap].
///
/// The boundary classification at 0 and infinity (entrance/natural) is the
/// caller's responsibility; nothing here checks it.
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    params: Vec<(String, f64)>,
    drift: RealFn,
    vol: RealFn,
    domain_cap: f64,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("domain_cap", &self.domain_cap)
            .finish()
    }
}

/// Default search/domain bound when none is configured.
pub const DEFAULT_DOMAIN_CAP: f64 = 1e3;

impl DiffusionModel {
    pub fn new(
        name: impl Into<String>,
        params: Vec<(String, f64)>,
        drift: RealFn,
        vol: RealFn,
        domain_cap: f64,
    ) -> Result<Self> {
        if !(domain_cap.is_finite() && domain_cap > 0.0) {
            return Err(Error::Construction {
                field: "domain_cap",
                reason: format!("must be a positive real, got {domain_cap}"),
            });
        }
        Ok(Self {
            name: name.into(),
            params,
            drift,
            vol,
            domain_cap,
        })
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn vol(&self, x: f64) -> f64 {
        (self.vol)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn domain_cap(&self) -> f64 {
        self.domain_cap
    }
}

/// Running reward `h` plus the marginal harvest reward `c1` and marginal
/// injection cost `c2`, with `0 < c1 < c2`.
#[derive(Clone)]
pub struct RewardModel {
    h: RealFn,
    c1: f64,
    c2: f64,
}

impl fmt::Debug for RewardModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewardModel")
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .finish()
    }
}

impl RewardModel {
    pub fn new(h: RealFn, c1: f64, c2: f64) -> Result<Self> {
        if !(c1.is_finite() && c1 > 0.0) {
            return Err(Error::Construction {
                field: "c1",
                reason: format!("must be a positive real, got {c1}"),
            });
        }
        if !(c2.is_finite() && c2 > c1) {
            return Err(Error::Construction {
                field: "c2",
                reason: format!("must exceed c1 = {c1}, got {c2}"),
            });
        }
        Ok(Self { h, c1, c2 })
    }

    pub fn h(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }
}

/// Selector for the two reward-shape functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiIndex {
    One,
    Two,
}

/// `pi_i(x) = h(x) + c_i mu(x)`: the stationary reward margin when the state
/// is pinned at `x` by reflection on the harvest (i=1) or injection (i=2)
/// side.
pub fn pi(reward: &RewardModel, model: &DiffusionModel, which: PiIndex, x: f64) -> f64 {
    let c = match which {
        PiIndex::One => reward.c1,
        PiIndex::Two => reward.c2,
    };
    reward.h(x) + c * model.drift(x)
}

fn quantize(x: f64) -> u64 {
    // Mask the low 12 mantissa bits: ~1e-12 relative resolution for the memo
    // key, so re-queries with bit-identical endpoints hit the cache while
    // nearby-but-distinct endpoints stay within the quadrature tolerance.
    x.to_bits() & !0xFFF
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    LogScale,
    SpeedMeasure,
    ScaleMeasure,
}

/// Scale/speed evaluator with memoized cumulative integrals.
///
/// Shareable across threads (the memo is mutex-protected); concurrent reads
/// return the same values as sequential ones because every entry is a
/// deterministic quadrature result keyed by its endpoints.
pub struct ScaleSpeedCache {
    model: DiffusionModel,
    base_point: f64,
    opts: QuadOpts,
    memo: Mutex<HashMap<(Kind, u64, u64), f64>>,
}

impl Clone for ScaleSpeedCache {
    fn clone(&self) -> Self {
        Self {
            model: self.model.clone(),
            base_point: self.base_point,
            opts: self.opts,
            memo: Mutex::new(self.memo.lock().unwrap().clone()),
        }
    }
}

impl fmt::Debug for ScaleSpeedCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScaleSpeedCache")
            .field("model", &self.model)
            .field("base_point", &self.base_point)
            .field("opts", &self.opts)
            .finish()
    }
}

impl ScaleSpeedCache {
    pub fn new(model: DiffusionModel) -> Self {
        Self::with_opts(model, QuadOpts::default())
    }

    pub fn with_opts(model: DiffusionModel, opts: QuadOpts) -> Self {
        Self {
            model,
            base_point: 1.0,
            opts,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn opts(&self) -> &QuadOpts {
        &self.opts
    }

    pub fn base_point(&self) -> f64 {
        self.base_point
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if !(x > 0.0 && x <= self.model.domain_cap) {
            return Err(Error::OutOfRange {
                what: "x",
                lo: 0.0,
                hi: self.model.domain_cap,
                got: x,
            });
        }
        Ok(())
    }

    /// `2 mu / sigma^2` with degeneracy and finiteness checks.
    fn log_scale_slope(&self, y: f64) -> Result<f64> {
        let sig = self.model.vol(y);
        if !(sig > 0.0) {
            return Err(Error::DegenerateVolatility { x: y });
        }
        let mu = self.model.drift(y);
        let v = 2.0 * mu / (sig * sig);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { x: y });
        }
        Ok(v)
    }

    fn memoized<F>(&self, kind: Kind, lo: f64, hi: f64, compute: F) -> Result<f64>
    where
        F: FnOnce() -> Result<f64>,
    {
        let key = (kind, quantize(lo), quantize(hi));
        if let Some(&v) = self.memo.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let v = compute()?;
        self.memo.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Signed cumulative integral of `2 mu / sigma^2` from the base point.
    fn log_scale_integral(&self, x: f64) -> Result<f64> {
        let base = self.base_point;
        if x == base {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if x > base {
            (base, x, 1.0)
        } else {
            (x, base, -1.0)
        };
        let v = self.memoized(Kind::LogScale, lo, hi, || {
            quad::integrate(&|y| self.log_scale_slope(y), lo, hi, &self.opts)
        })?;
        Ok(sign * v)
    }

    /// Scale density `s(x) = exp(-int_1^x 2 mu / sigma^2 dy)`.
    pub fn scale_density(&self, x: f64) -> Result<f64> {
        self.check_point(x)?;
        Ok((-self.log_scale_integral(x)?).exp())
    }

    /// Speed density `m(x) = 1 / (sigma^2(x) s(x))`.
    pub fn speed_density(&self, x: f64) -> Result<f64> {
        self.check_point(x)?;
        let sig = self.model.vol(x);
        if !(sig > 0.0) {
            return Err(Error::DegenerateVolatility { x });
        }
        Ok(self.log_scale_integral(x)?.exp() / (sig * sig))
    }

    fn check_interval(&self, a: f64, b: f64) -> Result<()> {
        if a > b {
            return Err(Error::InvalidArgument(format!(
                "reversed interval endpoints [{a}, {b}]"
            )));
        }
        self.check_point(a)?;
        self.check_point(b)
    }

    /// Speed measure `M[a, b] = int_a^b m(x) dx`.
    pub fn speed_measure(&self, a: f64, b: f64) -> Result<f64> {
        self.check_interval(a, b)?;
        self.memoized(Kind::SpeedMeasure, a, b, || {
            quad::integrate(&|x| self.speed_density(x), a, b, &self.opts)
        })
    }

    /// Scale measure `S[a, b] = int_a^b s(x) dx`.
    pub fn scale_measure(&self, a: f64, b: f64) -> Result<f64> {
        self.check_interval(a, b)?;
        self.memoized(Kind::ScaleMeasure, a, b, || {
            quad::integrate(&|x| self.scale_density(x), a, b, &self.opts)
        })
    }

    /// `int_a^b f(x) m(x) dx` by adaptive quadrature (not memoized: `f` is
    /// caller state).
    pub fn integrate_speed_weighted<F>(&self, f: F, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        self.check_interval(a, b)?;
        quad::integrate(&|x| Ok(f(x) * self.speed_density(x)?), a, b, &self.opts)
    }

    /// General adaptive integral with the cache tolerances.
    pub fn integrate<F>(&self, f: F, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        quad::integrate(&|x| Ok(f(x)), a, b, &self.opts)
    }
}

/// Right limit at 0 by probing a decreasing sequence; used when the model is
/// singular at the origin.
pub fn eval_at_zero<F>(f: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let direct = f(0.0);
    if direct.is_finite() {
        return direct;
    }
    let mut prev = f64::NAN;
    let mut x = 1e-6;
    for _ in 0..12 {
        let v = f(x);
        if v.is_finite() && prev.is_finite() && (v - prev).abs() <= 1e-9 * (1.0 + v.abs()) {
            return v;
        }
        prev = v;
        x *= 0.5;
    }
    prev
}

/// Named assumption checks, false until verified.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssumptionFlags {
    /// pi2 tends to a nonpositive value at the origin.
    pub pi2_nonpositive_at_origin: bool,
    /// pi1 is negative at the far end of the domain.
    pub pi1_negative_tail: bool,
    /// Some pair a < b yields a positive long-run reward lambda(a, b).
    pub positive_lambda_pair: bool,
    /// h(0) = 0, mu(0) = 0 and h is strictly increasing.
    pub origin_anchored: bool,
    /// pi1 and pi2 are unimodal on the scan grid and pi1 has a root b0.
    pub pi_unimodal: bool,
    /// The small-barrier profit probe stays positive as a decreases to 0.
    pub small_barrier_profit: bool,
    /// h is concave, nondecreasing, h(0) = 0.
    pub h_concave_increasing: bool,
    /// sup_x {h(x) - z x} is attained in the interior for sampled z > 0.
    pub finite_legendre: bool,
    /// h(x)/x grows as x decreases to 0.
    pub inada_at_zero: bool,
}

impl AssumptionFlags {
    /// The flags the barrier solver requires (shape conditions).
    pub fn solver_ready(&self) -> bool {
        self.origin_anchored && self.pi_unimodal && self.small_barrier_profit
    }

    pub fn all(&self) -> bool {
        self.solver_ready()
            && self.pi2_nonpositive_at_origin
            && self.pi1_negative_tail
            && self.positive_lambda_pair
            && self.h_concave_increasing
            && self.finite_legendre
            && self.inada_at_zero
    }
}

/// A recorded check failure: which check, where, and the offending value.
#[derive(Debug, Clone)]
pub struct Violation {
    pub check: &'static str,
    pub witness_x: f64,
    pub value: f64,
}

/// Critical points of the reward-shape functions plus assumption flags.
#[derive(Debug, Clone)]
pub struct ShapeReport {
    /// Argmax of pi1.
    pub xhat1: f64,
    /// Argmax of pi2.
    pub xhat2: f64,
    /// Root of pi1 above xhat1 (NaN when looked for and absent).
    pub b0: f64,
    pub flags: AssumptionFlags,
    pub violations: Vec<Violation>,
}

const SCAN_POINTS: usize = 2048;
const PEAK_X_TOL: f64 = 1e-12;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (ll, lh) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (ll + (lh - ll) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Scan for the peak of `f` on a log grid, refine by golden section, and
/// record unimodality violations (sign changes of the discrete slope beyond
/// the single crest).
fn scan_peak<F>(
    f: &F,
    grid: &[f64],
    check: &'static str,
    violations: &mut Vec<Violation>,
) -> (f64, bool)
where
    F: Fn(f64) -> f64,
{
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut i_max = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v > vals[i_max] {
            i_max = i;
        }
    }
    let mut unimodal = true;
    // rising before the crest, falling after; tolerate flat-at-noise steps
    for i in 1..vals.len() {
        let d = vals[i] - vals[i - 1];
        let noise = 1e-13 * (1.0 + vals[i].abs());
        if i <= i_max && d < -noise || i > i_max && d > noise {
            unimodal = false;
            violations.push(Violation {
                check,
                witness_x: grid[i],
                value: d,
            });
        }
    }
    let lo = grid[i_max.saturating_sub(1)];
    let hi = grid[(i_max + 1).min(grid.len() - 1)];
    (roots::golden_max(f, lo, hi, PEAK_X_TOL), unimodal)
}

/// Locate the peaks of pi1 and pi2 by a log-spaced scan seeding golden-section
/// refinement, and b0 (the root of pi1 right of its peak) by bisection.
///
/// Unimodality is verified on the scan grid, not assumed; violations are
/// recorded in the report.
pub fn find_peaks_and_b0(
    reward: &RewardModel,
    model: &DiffusionModel,
    search_cap: f64,
) -> Result<ShapeReport> {
    if !(search_cap > 0.0 && search_cap <= model.domain_cap()) {
        return Err(Error::OutOfRange {
            what: "search_cap",
            lo: 0.0,
            hi: model.domain_cap(),
            got: search_cap,
        });
    }
    let grid = log_grid((search_cap * 1e-9).max(1e-12), search_cap, SCAN_POINTS);
    let mut violations = Vec::new();
    let p1 = |x: f64| pi(reward, model, PiIndex::One, x);
    let p2 = |x: f64| pi(reward, model, PiIndex::Two, x);
    let (xhat1, uni1) = scan_peak(&p1, &grid, "pi1 unimodality", &mut violations);
    let (xhat2, uni2) = scan_peak(&p2, &grid, "pi2 unimodality", &mut violations);

    if p1(search_cap) >= 0.0 {
        return Err(Error::B0NotFound {
            from: xhat1,
            cap: search_cap,
        });
    }
    let b0 = roots::bisect(&|x| Ok(p1(x)), xhat1, search_cap, PEAK_X_TOL)?;

    let mut flags = AssumptionFlags::default();
    flags.pi_unimodal = uni1 && uni2 && xhat2 < xhat1;
    if uni1 && uni2 && xhat2 >= xhat1 {
        violations.push(Violation {
            check: "peak ordering xhat2 < xhat1",
            witness_x: xhat2,
            value: xhat2 - xhat1,
        });
    }
    Ok(ShapeReport {
        xhat1,
        xhat2,
        b0,
        flags,
        violations,
    })
}

/// Evaluate every assumption numerically on a log-spaced grid over
/// (0, domain_cap]. Failures are reported as flags with witnesses, never as
/// errors.
pub fn check_assumptions(
    cache: &ScaleSpeedCache,
    reward: &RewardModel,
    grid_size: usize,
) -> Result<ShapeReport> {
    if grid_size < 100 {
        return Err(Error::InvalidArgument(format!(
            "grid_size must be at least 100, got {grid_size}"
        )));
    }
    let model = cache.model();
    let cap = model.domain_cap();
    let grid = log_grid((cap * 1e-9).max(1e-12), cap, grid_size);
    let p1 = |x: f64| pi(reward, model, PiIndex::One, x);
    let p2 = |x: f64| pi(reward, model, PiIndex::Two, x);

    let mut report = match find_peaks_and_b0(reward, model, cap) {
        Ok(r) => r,
        Err(e) => {
            // peaks unusable: report with NaNs and the failure recorded
            let mut r = ShapeReport {
                xhat1: f64::NAN,
                xhat2: f64::NAN,
                b0: f64::NAN,
                flags: AssumptionFlags::default(),
                violations: Vec::new(),
            };
            r.violations.push(Violation {
                check: "peak search",
                witness_x: f64::NAN,
                value: f64::NAN,
            });
            let _ = e;
            r
        }
    };
    let flags = &mut report.flags;
    let violations = &mut report.violations;

    // Small-x sign of pi2: the limit at the origin, not the grid values
    // (pi2 may approach 0 from above).
    {
        let limit = eval_at_zero(p2);
        flags.pi2_nonpositive_at_origin = limit <= 1e-9;
        if !flags.pi2_nonpositive_at_origin {
            violations.push(Violation {
                check: "pi2 nonpositive at origin",
                witness_x: 0.0,
                value: limit,
            });
        }
    }

    // Tail sign of pi1: negative and still heading down at the cap.
    {
        let n = grid.len();
        let tail_ok = p1(grid[n - 1]) < 0.0 && p1(grid[n - 1]) <= p1(grid[n - 4]);
        flags.pi1_negative_tail = tail_ok;
        if !tail_ok {
            violations.push(Violation {
                check: "pi1 negative tail",
                witness_x: grid[n - 1],
                value: p1(grid[n - 1]),
            });
        }
    }

    // Existence of a pair with positive lambda, probed on a coarse grid.
    {
        let coarse = log_grid((cap * 1e-6).max(1e-9), cap, 14);
        let mut found = None;
        'outer: for (i, &a) in coarse.iter().enumerate() {
            for &b in &coarse[i + 1..] {
                let probe = (|| -> Result<f64> {
                    let hm = cache.integrate_speed_weighted(|x| reward.h(x), a, b)?;
                    Ok(hm + reward.c1() / (2.0 * cache.scale_density(b)?)
                        - reward.c2() / (2.0 * cache.scale_density(a)?))
                })();
                if let Ok(v) = probe {
                    if v > 0.0 {
                        found = Some((a, b, v));
                        break 'outer;
                    }
                }
            }
        }
        flags.positive_lambda_pair = found.is_some();
        if found.is_none() {
            violations.push(Violation {
                check: "positive lambda pair exists",
                witness_x: f64::NAN,
                value: f64::NAN,
            });
        }
    }

    // Origin anchoring: h(0+) = 0, mu(0+) = 0, h strictly increasing.
    {
        let h0 = eval_at_zero(|x| reward.h(x));
        let mu0 = eval_at_zero(|x| model.drift(x));
        let mut increasing = true;
        let mut witness = (f64::NAN, 0.0);
        for w in grid.windows(2) {
            let d = reward.h(w[1]) - reward.h(w[0]);
            if d <= 0.0 {
                increasing = false;
                witness = (w[1], d);
                break;
            }
        }
        flags.origin_anchored = h0.abs() <= 1e-9 && mu0.abs() <= 1e-9 && increasing;
        if h0.abs() > 1e-9 {
            violations.push(Violation {
                check: "h vanishes at origin",
                witness_x: 0.0,
                value: h0,
            });
        }
        if mu0.abs() > 1e-9 {
            violations.push(Violation {
                check: "drift vanishes at origin",
                witness_x: 0.0,
                value: mu0,
            });
        }
        if !increasing {
            violations.push(Violation {
                check: "h strictly increasing",
                witness_x: witness.0,
                value: witness.1,
            });
        }
    }

    // Small-barrier profit probe at a = b0-scaled powers of two. The limit
    // condition is a liminf; finitely many probes witness it, they do not
    // prove it.
    if report.b0.is_finite() {
        let b0 = report.b0;
        let p1_b0 = p1(b0);
        let start = (0.5f64).min(b0 * 0.5);
        let mut tail = Vec::new();
        for k in 1..=20u32 {
            let a = start * (0.5f64).powi(k as i32 - 1);
            let val = (|| -> Result<f64> {
                let integral =
                    cache.integrate_speed_weighted(|x| p1(x) - p1_b0, a, b0)?;
                let s_a = cache.scale_density(a)?;
                Ok(integral + (reward.c1() - reward.c2()) / (2.0 * s_a))
            })();
            match val {
                Ok(v) if v.is_finite() => tail.push((a, v)),
                _ => break,
            }
        }
        let ok = tail.len() >= 3 && tail.iter().rev().take(3).all(|&(_, v)| v > 0.0);
        flags.small_barrier_profit = ok;
        if !ok {
            let w = tail.last().copied().unwrap_or((f64::NAN, f64::NAN));
            violations.push(Violation {
                check: "small-barrier profit positive",
                witness_x: w.0,
                value: w.1,
            });
        }
    }

    // Concavity and monotonicity of h via divided differences.
    {
        let h0 = eval_at_zero(|x| reward.h(x));
        let mut ok = h0.abs() <= 1e-9;
        let mut prev_slope = f64::INFINITY;
        for w in grid.windows(2) {
            let slope = (reward.h(w[1]) - reward.h(w[0])) / (w[1] - w[0]);
            if slope < -1e-12 || slope > prev_slope + 1e-10 * (1.0 + slope.abs()) {
                ok = false;
                violations.push(Violation {
                    check: "h concave nondecreasing",
                    witness_x: w[1],
                    value: slope - prev_slope,
                });
                break;
            }
            prev_slope = slope;
        }
        flags.h_concave_increasing = ok;
    }

    // Finite Legendre transform: the sup of h(x) - z x must be attained in
    // the interior of the grid for each sampled z.
    {
        // sampled so that a concave h with Inada slope keeps its maximizer
        // inside the grid (smaller z pushes the argmax beyond the cap)
        let zs = [0.1, 0.5, 1.0, 10.0, 100.0];
        let mut ok = true;
        for &z in &zs {
            let (i_max, _) = grid
                .iter()
                .enumerate()
                .map(|(i, &x)| (i, reward.h(x) - z * x))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if i_max + 1 == grid.len() {
                ok = false;
                violations.push(Violation {
                    check: "finite legendre transform",
                    witness_x: grid[i_max],
                    value: z,
                });
                break;
            }
        }
        flags.finite_legendre = ok;
    }

    // Inada at 0: h(x)/x must grow as x decreases near the bottom of the grid.
    {
        let x_lo = grid[0];
        let x_ref = grid
            .iter()
            .copied()
            .find(|&x| x >= 16.0 * x_lo)
            .unwrap_or(grid[grid.len() / 2]);
        let r_lo = reward.h(x_lo) / x_lo;
        let r_ref = reward.h(x_ref) / x_ref;
        flags.inada_at_zero = r_lo > 1.5 * r_ref && r_lo.is_finite();
        if !flags.inada_at_zero {
            violations.push(Violation {
                check: "inada ratio grows at 0",
                witness_x: x_lo,
                value: r_lo,
            });
        }
    }

    Ok(report)
}
