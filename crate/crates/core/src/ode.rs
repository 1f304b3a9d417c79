//! Adaptive Dormand-Prince 4(5) stepping for two-dimensional systems, with
//! cubic-Hermite dense output for in-step event location.

use crate::error::{Error, Result};

pub type State2 = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct Rk45Opts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    /// Step-size floor; underflow is a reported failure, not a silent stall.
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: u64,
}

impl Default for Rk45Opts {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_init: 1e-4,
            h_min: 1e-8,
            h_max: 0.1,
            max_steps: 2_000_000,
        }
    }
}

// Dormand-Prince coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &State2, h: f64, terms: &[(f64, &State2)]) -> State2 {
    let mut out = *y;
    for i in 0..2 {
        let mut acc = 0.0;
        for &(c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// One accepted step of the integration, with endpoint slopes for Hermite
/// interpolation.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep {
    pub x0: f64,
    pub x1: f64,
    pub y0: State2,
    pub y1: State2,
    pub f0: State2,
    pub f1: State2,
}

impl DenseStep {
    /// Cubic Hermite evaluation of the state at `x` within the step.
    pub fn eval(&self, x: f64) -> State2 {
        let h = self.x1 - self.x0;
        let t = ((x - self.x0) / h).clamp(0.0, 1.0);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] =
                h00 * self.y0[i] + h * h10 * self.f0[i] + h01 * self.y1[i] + h * h11 * self.f1[i];
        }
        out
    }
}

/// Whether the driver should keep integrating after a step.
pub enum Control {
    Continue,
    Stop,
}

/// Integrate from `x0` to `x_end`, handing every accepted step (with dense
/// data) to `on_step`; the callback can stop the run early.
pub fn integrate_dense<F, C>(
    f: &F,
    x0: f64,
    y0: State2,
    x_end: f64,
    opts: &Rk45Opts,
    mut on_step: C,
) -> Result<(f64, State2)>
where
    F: Fn(f64, &State2) -> Result<State2>,
    C: FnMut(&DenseStep) -> Control,
{
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y)?;
    let mut h = opts.h_init.min(x_end - x0).max(opts.h_min);
    let mut steps = 0u64;
    while x < x_end {
        if steps >= opts.max_steps {
            return Err(Error::InvalidArgument(format!(
                "ODE step budget exhausted at x = {x}"
            )));
        }
        steps += 1;
        h = h.min(x_end - x).min(opts.h_max);
        let k2 = f(x + A21 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = f(x + 0.3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(
            x + 0.8 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        )?;
        let k5 = f(
            x + 8.0 / 9.0 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = f(
            x + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        )?;
        let y1 = axpy(
            &y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(x + h, &y1)?;
        let mut err_norm = 0.0f64;
        for i in 0..2 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y1[i].abs());
            err_norm += (e / scale) * (e / scale);
        }
        err_norm = (err_norm / 2.0).sqrt();
        if err_norm <= 1.0 {
            let step = DenseStep {
                x0: x,
                x1: x + h,
                y0: y,
                y1,
                f0: k1,
                f1: k7,
            };
            x += h;
            y = y1;
            k1 = k7; // first-same-as-last
            if let Control::Stop = on_step(&step) {
                return Ok((x, y));
            }
        }
        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        let h_new = h * factor;
        if h_new < opts.h_min {
            if err_norm > 1.0 {
                return Err(Error::StepFloor {
                    x,
                    floor: opts.h_min,
                });
            }
            h = opts.h_min;
        } else {
            h = h_new;
        }
    }
    Ok((x, y))
}
