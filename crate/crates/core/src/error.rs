//! Error type shared by the solver, simulator and shooting modules.

/// Errors produced by the numerical routines.
///
/// Every variant carries enough state to diagnose the failure without
/// re-running: the offending point, the achieved estimate, or the probe
/// values at the bracket ends.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("non-finite integrand value at x = {x:e}")]
    NonFiniteIntegrand { x: f64 },

    #[error(
        "quadrature on [{lo:e}, {hi:e}] stopped at error {achieved:e} \
         (requested {requested:e}); estimate {estimate:e}"
    )]
    QuadratureTolerance {
        lo: f64,
        hi: f64,
        estimate: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("volatility vanishes at x = {x:e}")]
    DegenerateVolatility { x: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {got:e} outside the admissible range ({lo:e}, {hi:e}]")]
    OutOfRange {
        what: &'static str,
        lo: f64,
        hi: f64,
        got: f64,
    },

    #[error(
        "pi1 has no sign change on [{from:e}, {cap:e}]: the tail condition \
         fails numerically, b0 not found"
    )]
    B0NotFound { from: f64, cap: f64 },

    #[error(
        "barrier profit function has no sign change: ell({lo:e}) = {f_lo:e}, \
         ell({hi:e}) = {f_hi:e}; the small-barrier limit condition fails at \
         working precision"
    )]
    NoBarrierRoot {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error(
        "matching barrier b for a = {a:e} exceeds the domain cap {cap:e}; \
         raise the domain cap"
    )]
    BarrierAtCap { a: f64, cap: f64 },

    #[error("model construction rejected: field `{field}`: {reason}")]
    Construction { field: &'static str, reason: String },

    #[error("numerical blow-up at step {step}: state = {state:e}")]
    NumericalBlowup { step: u64, state: f64 },

    #[error(
        "shooting from a = {a:e} failed: {kind}; state (x, V, V') = \
         ({x:e}, {v:e}, {v1:e})"
    )]
    ShootFailure {
        a: f64,
        kind: &'static str,
        x: f64,
        v: f64,
        v1: f64,
    },

    #[error(
        "no bracket for the discounted free boundary near a = {hint:e}; \
         probe outcomes: {detail}"
    )]
    NoShootBracket { hint: f64, detail: String },

    #[error("ODE step size underflowed the floor {floor:e} at x = {x:e}")]
    StepFloor { x: f64, floor: f64 },

    #[error(
        "discounted barriers (a_r, b_r) = ({a_r:e}, {b_r:e}) violate the \
         sanity bounds [{lo:e}, {hi:e}]"
    )]
    BarrierBounds {
        a_r: f64,
        b_r: f64,
        lo: f64,
        hi: f64,
    },

    #[error("assumption check failed: {0}; rerun with force to override")]
    AssumptionsFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
