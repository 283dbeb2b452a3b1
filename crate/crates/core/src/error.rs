use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("quadrature did not converge: estimated relative error {achieved:.3e} > {requested:.3e} after {subdivisions} subdivisions")]
    Quadrature {
        achieved: f64,
        requested: f64,
        subdivisions: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid event tree: {0}")]
    Tree(String),

    #[error("arbitrage detected (no equivalent martingale measure): {0}")]
    Arbitrage(String),

    #[error("infeasible: initial wealth {x} is below -L(E) = {min_wealth}; the value function is -infinity there")]
    Infeasible { x: f64, min_wealth: f64 },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("simulation horizon exhausted on {exhausted} of {total} paths (limit {limit_fraction})")]
    HorizonExhausted {
        exhausted: usize,
        total: usize,
        limit_fraction: f64,
    },

    #[error("clock calibration failed: {0}")]
    Calibration(String),

    #[error("arbitrage gate: alpha = {alpha} <= theta^2/2 = {half_theta_sq}; the deflator exp(-theta B - theta^2 t/2) fails Novikov on [0, tau_1], so the market is not arbitrage-free on the stochastic interval")]
    NoArbitrageGate { alpha: f64, half_theta_sq: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Error {
    Error::Domain { op, msg: msg.into() }
}
