//! Built-in parametric families: geometric Brownian motion, the
//! Verhulst-Pearl logistic diffusion, and power running rewards, each with
//! the closed forms that serve as oracles for the quadrature path.

use std::sync::Arc;

use crate::diffusion::{DiffusionModel, RewardModel, DEFAULT_DOMAIN_CAP};
use crate::error::{Error, Result};

/// Geometric Brownian motion `dX = mu X dt + sigma X dW`.
///
/// The solver path requires `mu < 0`: with `mu > 0` the long-run average
/// reward is unbounded (wait-and-harvest policies grow like `exp(mu t)`),
/// and `mu = 0` breaks the negative-tail condition on pi1. Exploratory
/// construction is allowed for the one-sided simulation probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Construction {
                field: "sigma",
                reason: format!("must be a positive real, got {sigma}"),
            });
        }
        if !mu.is_finite() {
            return Err(Error::Construction {
                field: "mu",
                reason: "must be finite".into(),
            });
        }
        Ok(Self { mu, sigma })
    }

    /// The scale exponent `alpha = 2 mu / sigma^2`; `s(x) = x^-alpha`.
    pub fn alpha(&self) -> f64 {
        2.0 * self.mu / (self.sigma * self.sigma)
    }
}

/// Verhulst-Pearl logistic diffusion
/// `dX = mu X (1 - gamma X) dt + sigma X dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerhulstPearlParams {
    /// Per-capita growth rate.
    pub mu: f64,
    /// Inverse carrying capacity.
    pub gamma: f64,
    pub sigma: f64,
}

impl VerhulstPearlParams {
    pub fn new(mu: f64, gamma: f64, sigma: f64) -> Result<Self> {
        for (field, v) in [("mu", mu), ("gamma", gamma), ("sigma", sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Construction {
                    field: match field {
                        "mu" => "mu",
                        "gamma" => "gamma",
                        _ => "sigma",
                    },
                    reason: format!("must be a positive real, got {v}"),
                });
            }
        }
        Ok(Self { mu, gamma, sigma })
    }

    pub fn alpha(&self) -> f64 {
        2.0 * self.mu / (self.sigma * self.sigma)
    }
}

/// Power running reward `h(x) = kappa x^p`, `0 < p < 1` (strictly concave,
/// Inada at 0, finite Legendre transform).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReward {
    pub kappa: f64,
    pub p: f64,
}

impl PowerReward {
    pub fn new(kappa: f64, p: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Construction {
                field: "kappa",
                reason: format!("must be a positive real, got {kappa}"),
            });
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Construction {
                field: "p",
                reason: format!("must lie in (0, 1), got {p}"),
            });
        }
        Ok(Self { kappa, p })
    }

    pub fn h(&self, x: f64) -> f64 {
        self.kappa * x.powf(self.p)
    }

    /// `Phi_h(z) = sup_x {h(x) - z x}` in closed form: the maximizer is
    /// `x* = (kappa p / z)^(1/(1-p))` and
    /// `Phi = kappa (1-p) p^(p/(1-p)) (kappa/z)^(p/(1-p))`.
    pub fn legendre_transform(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "legendre transform needs z > 0 (the supremum is infinite otherwise), got {z}"
            )));
        }
        let q = self.p / (1.0 - self.p);
        Ok(self.kappa * (1.0 - self.p) * self.p.powf(q) * (self.kappa / z).powf(q))
    }

    /// Maximizer of `h(x) - z x`.
    pub fn legendre_argmax(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "legendre argmax needs z > 0, got {z}"
            )));
        }
        Ok((self.kappa * self.p / z).powf(1.0 / (1.0 - self.p)))
    }
}

/// GBM closed forms for scale/speed quantities and lambda(a, b).
#[derive(Debug, Clone, Copy)]
pub struct GbmClosedForms {
    pub s_a: f64,
    pub s_b: f64,
    pub speed_measure: f64,
    pub h_m_integral: f64,
    pub lambda: f64,
}

/// Threshold below which an exponent is treated as the logarithmic branch of
/// the power antiderivative.
const LOG_BRANCH_EPS: f64 = 1e-8;

/// `int_a^b x^(e-1) dx`, switching to the log branch when `e` is within the
/// documented threshold of 0.
fn power_integral(e: f64, a: f64, b: f64) -> f64 {
    if e.abs() < LOG_BRANCH_EPS {
        (b / a).ln()
    } else {
        (b.powf(e) - a.powf(e)) / e
    }
}

/// Closed-form `s(a)`, `s(b)`, `M[a,b]`, `int h m`, and `lambda(a,b)` for GBM
/// with a power reward; the oracle against the quadrature path.
pub fn gbm_closed_forms(
    params: &GbmParams,
    h: &PowerReward,
    c1: f64,
    c2: f64,
    a: f64,
    b: f64,
) -> Result<GbmClosedForms> {
    if !(a > 0.0 && b > a) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < a < b, got a = {a}, b = {b}"
        )));
    }
    let alpha = params.alpha();
    let sig2 = params.sigma * params.sigma;
    let s_a = a.powf(-alpha);
    let s_b = b.powf(-alpha);
    // m(x) = x^(alpha-2) / sigma^2
    let speed_measure = power_integral(alpha - 1.0, a, b) / sig2;
    // h(x) m(x) = kappa x^(p+alpha-2) / sigma^2
    let h_m_integral = h.kappa * power_integral(h.p + alpha - 1.0, a, b) / sig2;
    let lambda = (c1 / s_b - c2 / s_a + 2.0 * h_m_integral) / (2.0 * speed_measure);
    Ok(GbmClosedForms {
        s_a,
        s_b,
        speed_measure,
        h_m_integral,
        lambda,
    })
}

/// Validated GBM model. `mu >= 0` requires `exploratory` (reachable only by
/// the one-sided simulation probe).
pub fn gbm_model(params: GbmParams, domain_cap: f64, exploratory: bool) -> Result<DiffusionModel> {
    if params.mu >= 0.0 && !exploratory {
        return Err(Error::Construction {
            field: "mu",
            reason: format!(
                "gbm drift must be negative for the solver (mu >= 0 makes the \
                 long-run average reward unbounded or the tail condition fail); \
                 got {}. Set exploratory to construct anyway.",
                params.mu
            ),
        });
    }
    let GbmParams { mu, sigma } = params;
    DiffusionModel::new(
        "gbm",
        vec![("mu".into(), mu), ("sigma".into(), sigma)],
        Arc::new(move |x: f64| mu * x),
        Arc::new(move |x: f64| sigma * x),
        domain_cap,
    )
}

/// Validated Verhulst-Pearl model.
pub fn verhulst_pearl_model(
    params: VerhulstPearlParams,
    domain_cap: f64,
) -> Result<DiffusionModel> {
    let VerhulstPearlParams { mu, gamma, sigma } = params;
    DiffusionModel::new(
        "verhulst_pearl",
        vec![
            ("mu".into(), mu),
            ("gamma".into(), gamma),
            ("sigma".into(), sigma),
        ],
        Arc::new(move |x: f64| mu * x * (1.0 - gamma * x)),
        Arc::new(move |x: f64| sigma * x),
        domain_cap,
    )
}

/// Power-reward model with marginal rates.
pub fn power_reward(params: PowerReward, c1: f64, c2: f64) -> Result<RewardModel> {
    RewardModel::new(Arc::new(move |x: f64| params.h(x)), c1, c2)
}

fn get_param(params: &[(String, f64)], key: &str) -> Result<f64> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|&(_, v)| v)
        .ok_or(Error::Construction {
            field: "params",
            reason: format!("missing parameter `{key}`"),
        })
}

/// Construct a model by registry name: `gbm` (mu, sigma) or
/// `verhulst_pearl` (mu, gamma, sigma).
pub fn make_model(
    name: &str,
    params: &[(String, f64)],
    domain_cap: Option<f64>,
    exploratory: bool,
) -> Result<DiffusionModel> {
    let cap = domain_cap.unwrap_or(DEFAULT_DOMAIN_CAP);
    match name {
        "gbm" => {
            let p = GbmParams::new(get_param(params, "mu")?, get_param(params, "sigma")?)?;
            gbm_model(p, cap, exploratory)
        }
        "verhulst_pearl" => {
            let p = VerhulstPearlParams::new(
                get_param(params, "mu")?,
                get_param(params, "gamma")?,
                get_param(params, "sigma")?,
            )?;
            verhulst_pearl_model(p, cap)
        }
        other => Err(Error::Construction {
            field: "name",
            reason: format!("unknown model `{other}` (known: gbm, verhulst_pearl)"),
        }),
    }
}

/// Construct a reward by registry name: `power` (kappa, p).
pub fn make_reward(name: &str, params: &[(String, f64)], c1: f64, c2: f64) -> Result<RewardModel> {
    match name {
        "power" => {
            let p = PowerReward::new(get_param(params, "kappa")?, get_param(params, "p")?)?;
            power_reward(p, c1, c2)
        }
        other => Err(Error::Construction {
            field: "name",
            reason: format!("unknown reward `{other}` (known: power)"),
        }),
    }
}
