//! Explicit log-utility strategy in the market whose clock is the local time
//! of an OU index at zero, simulated by Monte Carlo.
//!
//! Each path carries the index `R`, the index noise `W`, the stock noise
//! `B = rho W + sqrt(1 - rho^2) B'`, the stock `S`, the clock `kappa`, the
//! dual process `Z`, and the wealth `X` of one or more strategies driven by
//! the same noise (common random numbers).

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou_clock::{
    mean_and_se, path_rng, ClockEstimator, McReport, HORIZON_MULTIPLE, MAX_EXHAUSTED_FRACTION, SQRT_2PI,
};
use crate::specfun::{laplace_exponent, nu_bound, NuTable, NuVariant, OuParams, SpecEvalConfig};

/// Checkpoints for `E[M_t]`, in units of `sqrt(2 pi) = E[tau_1]`.
pub const CHECKPOINT_MULTIPLES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

const GL5_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    #[serde(default = "one")]
    pub s0: f64,
}

fn one() -> f64 {
    1.0
}

impl MarketParams {
    pub fn new(mu: f64, sigma: f64, rho: f64, s0: f64) -> Result<Self> {
        let m = Self { mu, sigma, rho, s0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::Config(format!("mu must be finite, got {}", self.mu)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::Config(format!("s0 must be positive, got {}", self.s0)));
        }
        Ok(())
    }

    /// Market price of risk `mu / sigma`.
    pub fn theta(&self) -> f64 {
        self.mu / self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoArbReport {
    pub ok: bool,
    pub alpha: f64,
    pub half_theta_sq: f64,
    /// `psi(-theta^2/2)`; `None` when the exponent is undefined there.
    pub psi_at_minus_half_theta_sq: Option<f64>,
    /// `E[exp(theta^2 tau_1 / 2)] = exp(-psi(-theta^2/2))`.
    pub novikov: Option<f64>,
}

/// No arbitrage on `[0, tau_1]` holds when `alpha > theta^2/2`.
pub fn noarb_check(market: &MarketParams, ou: &OuParams) -> NoArbReport {
    let h = 0.5 * market.theta().powi(2);
    let ok = ou.alpha > h;
    let psi = if ok { laplace_exponent(-h, ou).ok() } else { None };
    NoArbReport {
        ok,
        alpha: ou.alpha,
        half_theta_sq: h,
        psi_at_minus_half_theta_sq: psi,
        novikov: psi.map(|p| (-p).exp()),
    }
}

/// `E[int_0^{tau_1} e^{-beta t} dkappa_t] = (1 - e^{-psi(beta)}) / psi(beta)`.
pub fn discounted_clock_mass(beta: f64, ou: &OuParams) -> Result<f64> {
    let psi = laplace_exponent(beta, ou)?;
    Ok(-(-psi).exp_m1() / psi)
}

/// Initial dual value `y` with `x y = E[int e^{-beta t} dkappa]`.
pub fn calibrate_y(x: f64, beta: f64, ou: &OuParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Config(format!("x must be positive, got {x}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    Ok(discounted_clock_mass(beta, ou)? / x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsumptionRule {
    /// `c = X psi(beta) / (1 - e^{-(1-kappa) psi(beta)})`.
    Derived,
    /// `c = X (1 - e^{-psi(beta)}) / (1 - e^{-(1-kappa) psi(beta)})`.
    Alternate,
}

impl ConsumptionRule {
    pub const ALL: [ConsumptionRule; 2] = [ConsumptionRule::Derived, ConsumptionRule::Alternate];

    pub fn name(self) -> &'static str {
        match self {
            ConsumptionRule::Derived => "derived",
            ConsumptionRule::Alternate => "alternate",
        }
    }

    /// Consumption intensity relative to the derived rule.
    fn multiplier(self, psi: f64) -> f64 {
        match self {
            ConsumptionRule::Derived => 1.0,
            ConsumptionRule::Alternate => -(-psi).exp_m1() / psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuChoice {
    Derived,
    Alternate,
    Zero,
}

impl NuChoice {
    pub fn name(self) -> &'static str {
        match self {
            NuChoice::Derived => "derived",
            NuChoice::Alternate => "alternate",
            NuChoice::Zero => "zero",
        }
    }

    pub fn variant(self) -> Option<NuVariant> {
        match self {
            NuChoice::Derived => Some(NuVariant::Derived),
            NuChoice::Alternate => Some(NuVariant::Alternate),
            NuChoice::Zero => None,
        }
    }
}

impl From<NuVariant> for NuChoice {
    fn from(v: NuVariant) -> Self {
        match v {
            NuVariant::Derived => NuChoice::Derived,
            NuVariant::Alternate => NuChoice::Alternate,
        }
    }
}

/// A feedback strategy: `nu` enters the portfolio through `theta + rho nu`
/// and the dual process; consumption follows `rule` scaled by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub nu: NuChoice,
    pub consumption: ConsumptionRule,
    pub scale: f64,
}

impl Strategy {
    pub fn new(nu: NuChoice, consumption: ConsumptionRule) -> Self {
        Self {
            nu,
            consumption,
            scale: 1.0,
        }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn label(&self) -> String {
        if self.scale == 1.0 {
            format!("nu={},c={}", self.nu.name(), self.consumption.name())
        } else {
            format!("nu={},c={}x{}", self.nu.name(), self.consumption.name(), self.scale)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub x: f64,
    pub market: MarketParams,
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Clock normalisation: `kappa = norm_const * (raw local time)`.
    pub norm_const: f64,
    pub estimator: ClockEstimator,
    /// Bias allowance in units of `sqrt(dt)`.
    pub bias_factor: f64,
}

impl SimConfig {
    pub fn ou(&self) -> Result<OuParams> {
        OuParams::new(self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        let ou = self.ou()?;
        if !(self.x > 0.0) {
            return Err(Error::Config(format!("x must be positive, got {}", self.x)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.dt > 0.0 && self.dt < 0.1) {
            return Err(Error::Config(format!("dt must lie in (0, 0.1), got {}", self.dt)));
        }
        if self.n_paths < 2 {
            return Err(Error::Config("n_paths must be at least 2".into()));
        }
        if !(self.norm_const > 0.0) {
            return Err(Error::Config(format!(
                "norm_const must be positive, got {}",
                self.norm_const
            )));
        }
        self.estimator.validate()?;
        let gate = noarb_check(&self.market, &ou);
        if !gate.ok {
            return Err(Error::NoArbitrageGate {
                alpha: gate.alpha,
                half_theta_sq: gate.half_theta_sq,
            });
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        HORIZON_MULTIPLE * SQRT_2PI
    }

    pub fn checkpoints(&self) -> [f64; 5] {
        CHECKPOINT_MULTIPLES.map(|m| m * SQRT_2PI)
    }

    pub fn bias_budget(&self) -> f64 {
        self.bias_factor * self.dt.sqrt()
    }
}

/// Everything about one strategy on one path that the summaries need.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub x_tau: f64,
    pub utility: f64,
    /// `X Z + sum e^{-beta t} dkappa` at each checkpoint.
    pub m: [f64; 5],
    /// `X Z + sum Z c dkappa` at each checkpoint.
    pub m_literal: [f64; 5],
    pub x: [f64; 5],
    pub z: [f64; 5],
    pub min_z: f64,
    pub nu_sup: f64,
}

/// A path's common quantities plus the per-strategy outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// `None` when the path was discarded for exceeding the horizon.
    pub tau1: Option<f64>,
    pub outcomes: Vec<PathOutcome>,
}

/// Full time series of one strategy along one path.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct StrategyPath {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub kappa: Vec<f64>,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    /// Consumption density at the end of each step (0 off the clock support).
    pub c: Vec<f64>,
    pub pi: Vec<f64>,
    pub m: Vec<f64>,
    pub tau1: Option<f64>,
}

struct StrategyState {
    table: Option<NuTable>,
    rate: f64,
    x: f64,
    log_z: f64,
    consumed_disc: f64,
    consumed_z: f64,
    utility: f64,
    out: PathOutcome,
}

/// Precomputed per-run constants.
struct Engine {
    theta: f64,
    rho: f64,
    rho_bar: f64,
    sigma: f64,
    mu: f64,
    beta: f64,
    psi: f64,
    y: f64,
    x0: f64,
    dt: f64,
    decay: f64,
    sd_r: f64,
    w_on_r: f64,
    sd_w_cond: f64,
    norm_const: f64,
    estimator: ClockEstimator,
    horizon: f64,
    checkpoints: [f64; 5],
    s0: f64,
}

impl Engine {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let ou = cfg.ou()?;
        let a = cfg.alpha;
        let dt = cfg.dt;
        let var_r = -(-2.0 * a * dt).exp_m1() / (2.0 * a);
        let cov = -(-a * dt).exp_m1() / a;
        Ok(Self {
            theta: cfg.market.theta(),
            rho: cfg.market.rho,
            rho_bar: (1.0 - cfg.market.rho * cfg.market.rho).sqrt(),
            sigma: cfg.market.sigma,
            mu: cfg.market.mu,
            beta: cfg.beta,
            psi: laplace_exponent(cfg.beta, &ou)?,
            y: calibrate_y(cfg.x, cfg.beta, &ou)?,
            x0: cfg.x,
            dt,
            decay: (-a * dt).exp(),
            sd_r: var_r.sqrt(),
            w_on_r: cov / var_r,
            sd_w_cond: (dt - cov * cov / var_r).max(0.0).sqrt(),
            norm_const: cfg.norm_const,
            estimator: cfg.estimator,
            horizon: cfg.horizon(),
            checkpoints: cfg.checkpoints(),
            s0: cfg.market.s0,
        })
    }

    fn state(&self, strategy: &Strategy, tables: &[(NuVariant, NuTable)]) -> StrategyState {
        let table = strategy
            .nu
            .variant()
            .and_then(|v| tables.iter().find(|(w, _)| *w == v).map(|(_, t)| t.clone()));
        StrategyState {
            table,
            rate: strategy.scale * strategy.consumption.multiplier(self.psi),
            x: self.x0,
            log_z: self.y.ln(),
            consumed_disc: 0.0,
            consumed_z: 0.0,
            utility: 0.0,
            out: PathOutcome {
                x_tau: f64::NAN,
                utility: 0.0,
                m: [0.0; 5],
                m_literal: [0.0; 5],
                x: [0.0; 5],
                z: [0.0; 5],
                min_z: self.y,
                nu_sup: 0.0,
            },
        }
    }

    /// `int log c dk` over a clock increment `[k0, k1]` for wealth `xb` before
    /// consumption, where within the increment wealth follows
    /// `X(k) = xb (E(1-k)/E(1-k0))^rate`, `E(u) = e^{u psi} - 1`, and
    /// `c = rate psi X / (1 - e^{-(1-k) psi})`.
    fn log_consumption_integral(&self, xb: f64, rate: f64, k0: f64, k1: f64) -> f64 {
        let psi = self.psi;
        let (u0, u1) = (1.0 - k0, 1.0 - k1);
        let len = u0 - u1;
        let log_e = |u: f64| (u * psi).exp_m1().ln();
        let mut out = len * ((rate * psi * xb).ln() - rate * log_e(u0)) + 0.5 * psi * (u0 * u0 - u1 * u1);
        if rate != 1.0 {
            // int log E(u) du = int log(u psi) du + int log(E(u)/(u psi)) du
            let xlogx = |u: f64| if u > 0.0 { u * (u * psi).ln() - u } else { 0.0 };
            let smooth = |u: f64| {
                let v = u * psi;
                if v < 1e-8 {
                    0.5 * v
                } else {
                    (v.exp_m1() / v).ln()
                }
            };
            let (mid, half) = (0.5 * (u0 + u1), 0.5 * len);
            let gl: f64 = GL5_NODES
                .iter()
                .zip(GL5_WEIGHTS)
                .map(|(n, w)| w * smooth(mid + half * n))
                .sum::<f64>()
                * half;
            out += (rate - 1.0) * (xlogx(u0) - xlogx(u1) + gl);
        }
        out
    }

    /// Runs one path for all strategies; `record` collects the full series of
    /// strategy `0`.
    fn run_path(
        &self,
        strategies: &[Strategy],
        tables: &[(NuVariant, NuTable)],
        rng: &mut ChaCha8Rng,
        mut record: Option<&mut StrategyPath>,
    ) -> PathResult {
        let mut states: Vec<StrategyState> = strategies.iter().map(|s| self.state(s, tables)).collect();
        let (mut r, mut kappa, mut s, mut t) = (0.0f64, 0.0f64, self.s0, 0.0f64);
        let mut next_cp = 0;
        let n_max = (self.horizon / self.dt).ceil() as usize;
        let drift_s = (self.mu - 0.5 * self.sigma * self.sigma) * self.dt;
        let sqdt = self.dt.sqrt();
        if let Some(rec) = record.as_deref_mut() {
            let st = &states[0];
            rec.t.push(0.0);
            rec.s.push(s);
            rec.r.push(r);
            rec.kappa.push(0.0);
            rec.z.push(st.log_z.exp());
            rec.x.push(st.x);
            rec.c.push(0.0);
            let nu = st.table.as_ref().map_or(0.0, |tb| tb.eval(r));
            rec.pi.push(st.x * (self.theta + self.rho * nu) / (self.sigma * s));
            rec.m.push(st.x * st.log_z.exp());
        }
        let mut tau1 = None;
        for step in 1..=n_max {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let z3: f64 = StandardNormal.sample(rng);
            let eps_r = self.sd_r * z1;
            let dw = self.w_on_r * eps_r + self.sd_w_cond * z2;
            let db = self.rho * dw + self.rho_bar * sqdt * z3;
            let r_new = r * self.decay + eps_r;
            let t_new = step as f64 * self.dt;
            s *= (drift_s + self.sigma * db).exp();
            let raw = self.estimator.increment(r, r_new, self.dt);
            let k_new = (kappa + self.norm_const * raw).min(1.0);
            let t_mid = t + 0.5 * self.dt;
            let disc = (-self.beta * t_mid).exp();
            let mut c_rec = 0.0;
            for (i, st) in states.iter_mut().enumerate() {
                let nu = st.table.as_ref().map_or(0.0, |tb| tb.eval(r));
                let a = self.theta + self.rho * nu;
                st.out.nu_sup = st.out.nu_sup.max(nu.abs());
                st.log_z += nu * dw - a * db - 0.5 * (nu * nu + a * a - 2.0 * self.rho * nu * a) * self.dt;
                st.x *= (a * self.theta * self.dt - 0.5 * a * a * self.dt + a * db).exp();
                let z = st.log_z.exp();
                st.out.min_z = st.out.min_z.min(z);
                if k_new > kappa {
                    let xb = st.x;
                    let ratio = if k_new >= 1.0 {
                        0.0
                    } else {
                        ((1.0 - k_new) * self.psi).exp_m1() / ((1.0 - kappa) * self.psi).exp_m1()
                    };
                    st.x = xb * ratio.powf(st.rate);
                    st.utility += disc * self.log_consumption_integral(xb, st.rate, kappa, k_new);
                    st.consumed_disc += disc * (k_new - kappa);
                    st.consumed_z += z * (xb - st.x);
                    if i == 0 {
                        c_rec = (xb - st.x) / (k_new - kappa);
                    }
                }
            }
            r = r_new;
            kappa = k_new;
            t = t_new;
            while next_cp < 5 && t >= self.checkpoints[next_cp] {
                for st in states.iter_mut() {
                    snapshot(st, next_cp);
                }
                next_cp += 1;
            }
            if let Some(rec) = record.as_deref_mut() {
                let st = &states[0];
                let z = st.log_z.exp();
                let nu = st.table.as_ref().map_or(0.0, |tb| tb.eval(r));
                rec.t.push(t);
                rec.s.push(s);
                rec.r.push(r);
                rec.kappa.push(kappa);
                rec.z.push(z);
                rec.x.push(st.x);
                rec.c.push(c_rec);
                rec.pi.push(st.x * (self.theta + self.rho * nu) / (self.sigma * s));
                rec.m.push(st.x * z + st.consumed_disc);
            }
            if kappa >= 1.0 {
                tau1 = Some(t);
                break;
            }
        }
        while next_cp < 5 {
            for st in states.iter_mut() {
                snapshot(st, next_cp);
            }
            next_cp += 1;
        }
        if let Some(rec) = record {
            rec.tau1 = tau1;
        }
        PathResult {
            tau1,
            outcomes: states
                .into_iter()
                .map(|mut st| {
                    st.out.x_tau = st.x;
                    st.out.utility = st.utility;
                    st.out
                })
                .collect(),
        }
    }
}

fn snapshot(st: &mut StrategyState, i: usize) {
    let z = st.log_z.exp();
    st.out.m[i] = st.x * z + st.consumed_disc;
    st.out.m_literal[i] = st.x * z + st.consumed_z;
    st.out.x[i] = st.x;
    st.out.z[i] = z;
}

fn nu_tables(cfg: &SimConfig, strategies: &[Strategy]) -> Result<Vec<(NuVariant, NuTable)>> {
    let ou = cfg.ou()?;
    let mut out: Vec<(NuVariant, NuTable)> = Vec::new();
    for s in strategies {
        if let Some(v) = s.nu.variant() {
            if !out.iter().any(|(w, _)| *w == v) {
                out.push((v, NuTable::new(cfg.beta, ou, v, SpecEvalConfig::default())?));
            }
        }
    }
    Ok(out)
}

/// Simulates all `strategies` on the same `n_paths` noise paths.
pub fn simulate_paths(cfg: &SimConfig, strategies: &[Strategy]) -> Result<Vec<PathResult>> {
    if strategies.is_empty() {
        return Err(Error::Config("no strategies to simulate".into()));
    }
    for s in strategies {
        if !(s.scale > 0.0) {
            return Err(Error::Config(format!(
                "consumption scale must be positive, got {}",
                s.scale
            )));
        }
    }
    let engine = Engine::new(cfg)?;
    let tables = nu_tables(cfg, strategies)?;
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, 7, p as u64);
            engine.run_path(strategies, &tables, &mut rng, None)
        })
        .collect())
}

/// Full time series of path `path_index` under `strategy`, on the same noise
/// as `simulate_paths` uses for that index.
pub fn simulate_strategy_path(cfg: &SimConfig, strategy: Strategy, path_index: u64) -> Result<StrategyPath> {
    let engine = Engine::new(cfg)?;
    let tables = nu_tables(cfg, &[strategy])?;
    let mut rng = path_rng(cfg.seed, 7, path_index);
    let mut rec = StrategyPath::default();
    engine.run_path(&[strategy], &tables, &mut rng, Some(&mut rec));
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub m_mean: f64,
    pub m_se: f64,
    pub m_literal_mean: f64,
    pub m_literal_se: f64,
    pub x_mean: f64,
    pub z_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub label: String,
    pub n_paths: usize,
    pub discarded: usize,
    pub y: f64,
    pub target_m: f64,
    pub terminal_wealth: McReport,
    pub utility: f64,
    pub utility_se: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// `|E[M_t] - x y| <= 3 SE` at every checkpoint.
    pub flat: bool,
    pub saturated: bool,
    pub nu_sup: f64,
    pub nu_bound: Option<f64>,
    pub min_z: f64,
}

impl StrategySummary {
    pub fn passes(&self) -> bool {
        self.flat && self.saturated
    }
}

fn kept<'a>(paths: &'a [PathResult], i: usize) -> impl Iterator<Item = &'a PathOutcome> + 'a {
    paths.iter().filter(|p| p.tau1.is_some()).map(move |p| &p.outcomes[i])
}

fn check_discarded(paths: &[PathResult]) -> Result<usize> {
    let discarded = paths.iter().filter(|p| p.tau1.is_none()).count();
    if discarded as f64 > MAX_EXHAUSTED_FRACTION * paths.len() as f64 {
        return Err(Error::HorizonExhausted {
            exhausted: discarded,
            total: paths.len(),
            limit_fraction: MAX_EXHAUSTED_FRACTION,
        });
    }
    Ok(discarded)
}

pub fn summarize(cfg: &SimConfig, strategies: &[Strategy], paths: &[PathResult]) -> Result<Vec<StrategySummary>> {
    let discarded = check_discarded(paths)?;
    let ou = cfg.ou()?;
    let y = calibrate_y(cfg.x, cfg.beta, &ou)?;
    let target_m = cfg.x * y;
    let times = cfg.checkpoints();
    strategies
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let col = |f: &dyn Fn(&PathOutcome) -> f64| kept(paths, i).map(f).collect::<Vec<f64>>();
            let x_tau = col(&|o| o.x_tau);
            let terminal_wealth = McReport::new("terminal_wealth", 0.0, 0.0, &x_tau, 0.0, cfg.bias_budget());
            let (utility, utility_se) = mean_and_se(&col(&|o| o.utility));
            let checkpoints: Vec<Checkpoint> = (0..5)
                .map(|k| {
                    let (m_mean, m_se) = mean_and_se(&col(&|o| o.m[k]));
                    let (m_literal_mean, m_literal_se) = mean_and_se(&col(&|o| o.m_literal[k]));
                    Checkpoint {
                        t: times[k],
                        m_mean,
                        m_se,
                        m_literal_mean,
                        m_literal_se,
                        x_mean: mean_and_se(&col(&|o| o.x[k])).0,
                        z_mean: mean_and_se(&col(&|o| o.z[k])).0,
                    }
                })
                .collect();
            let flat = checkpoints.iter().all(|c| (c.m_mean - target_m).abs() <= 3.0 * c.m_se);
            let nu_bound = match s.nu.variant() {
                Some(v) => Some(nu_bound(cfg.beta, &ou, v, &SpecEvalConfig::default())?),
                None => None,
            };
            Ok(StrategySummary {
                strategy: *s,
                label: s.label(),
                n_paths: paths.len() - discarded,
                discarded,
                y,
                target_m,
                saturated: terminal_wealth.pass,
                terminal_wealth,
                utility,
                utility_se,
                checkpoints,
                flat,
                nu_sup: col(&|o| o.nu_sup).into_iter().fold(0.0, f64::max),
                nu_bound,
                min_z: col(&|o| o.min_z).into_iter().fold(f64::INFINITY, f64::min),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub summaries: Vec<StrategySummary>,
    pub noarb: NoArbReport,
    /// Monte Carlo `E[exp(theta^2 tau_1 / 2)]` against its closed form.
    pub novikov_mc: Option<McReport>,
    pub mean_tau1: f64,
}

/// Simulates `strategies` and summarises each.
pub fn simulate_optimal(cfg: &SimConfig, strategies: &[Strategy]) -> Result<SimulationReport> {
    let paths = simulate_paths(cfg, strategies)?;
    let summaries = summarize(cfg, strategies, &paths)?;
    let ou = cfg.ou()?;
    let noarb = noarb_check(&cfg.market, &ou);
    let taus: Vec<f64> = paths.iter().filter_map(|p| p.tau1).collect();
    let h = 0.5 * cfg.market.theta().powi(2);
    let novikov_mc = noarb.novikov.map(|target| {
        let samples: Vec<f64> = taus.iter().map(|t| (h * t).exp()).collect();
        McReport::new("novikov", -h, 1.0, &samples, target, cfg.bias_budget())
    });
    Ok(SimulationReport {
        summaries,
        noarb,
        novikov_mc,
        mean_tau1: mean_and_se(&taus).0,
    })
}

/// All four (nu, consumption) pairs.
pub fn variant_pairs() -> Vec<Strategy> {
    let mut out = Vec::new();
    for v in NuVariant::ALL {
        for c in ConsumptionRule::ALL {
            out.push(Strategy::new(v.into(), c));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrimination {
    pub summaries: Vec<StrategySummary>,
    /// The unique pair passing both saturation and flatness, if exactly one does.
    pub winner: Option<Strategy>,
    pub n_passing: usize,
}

/// Runs the four variant pairs on common noise and keeps the one that is
/// both budget-saturating and keeps `E[M_t]` flat.
pub fn discriminate(cfg: &SimConfig) -> Result<Discrimination> {
    let pairs = variant_pairs();
    let report = simulate_optimal(cfg, &pairs)?;
    let passing: Vec<&StrategySummary> = report.summaries.iter().filter(|s| s.passes()).collect();
    let winner = (passing.len() == 1).then(|| passing[0].strategy);
    Ok(Discrimination {
        n_passing: passing.len(),
        winner,
        summaries: report.summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceRow {
    pub label: String,
    pub strategy: Strategy,
    pub utility: f64,
    pub utility_se: f64,
    /// Optimal minus this strategy, path by path.
    pub diff: f64,
    pub diff_se: f64,
    /// `diff > 3 diff_se`.
    pub strictly_dominated: bool,
    /// `diff >= -3 diff_se`.
    pub not_better: bool,
    pub bankrupt_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dominance {
    pub optimal: Strategy,
    pub optimal_utility: f64,
    pub optimal_se: f64,
    pub rows: Vec<DominanceRow>,
}

/// The default perturbations of `optimal`: `nu = 0`, consumption scaled by
/// 0.8 and 1.25, and the other `nu` variant.
pub fn default_perturbations(optimal: Strategy) -> Vec<Strategy> {
    let other = match optimal.nu {
        NuChoice::Derived => NuChoice::Alternate,
        NuChoice::Alternate | NuChoice::Zero => NuChoice::Derived,
    };
    vec![
        Strategy {
            nu: NuChoice::Zero,
            ..optimal
        },
        optimal.scaled(optimal.scale * 0.8),
        optimal.scaled(optimal.scale * 1.25),
        Strategy { nu: other, ..optimal },
    ]
}

/// Compares achieved utility of `optimal` with each perturbation on common
/// random numbers.
pub fn dominance_test(cfg: &SimConfig, optimal: Strategy, perturbations: &[Strategy]) -> Result<Dominance> {
    let mut all = vec![optimal];
    all.extend_from_slice(perturbations);
    let paths = simulate_paths(cfg, &all)?;
    check_discarded(&paths)?;
    let opt: Vec<f64> = kept(&paths, 0).map(|o| o.utility).collect();
    let (ou_mean, ou_se) = mean_and_se(&opt);
    let rows = perturbations
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let u: Vec<f64> = kept(&paths, k + 1).map(|o| o.utility).collect();
            let d: Vec<f64> = opt.iter().zip(&u).map(|(a, b)| a - b).collect();
            let (mean, se) = mean_and_se(&u);
            let (diff, diff_se) = mean_and_se(&d);
            let bankrupt = kept(&paths, k + 1)
                .filter(|o| !(o.x.iter().all(|x| *x >= 0.0) && o.utility.is_finite()))
                .count();
            DominanceRow {
                label: s.label(),
                strategy: *s,
                utility: mean,
                utility_se: se,
                diff,
                diff_se,
                strictly_dominated: diff > 3.0 * diff_se,
                not_better: diff >= -3.0 * diff_se,
                bankrupt_fraction: bankrupt as f64 / u.len() as f64,
            }
        })
        .collect();
    Ok(Dominance {
        optimal,
        optimal_utility: ou_mean,
        optimal_se: ou_se,
        rows,
    })
}

/// Upper bound on `u(x) - x` for the log problem: `(theta + (theta^2 + 1) E[tau_1]) / 2`.
pub fn utility_bound(theta: f64) -> f64 {
    0.5 * (theta + (theta * theta + 1.0) * SQRT_2PI)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub utility: f64,
    pub utility_se: f64,
    pub x: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks the achieved utility of `strategy` against the bound.
pub fn utility_bound_check(cfg: &SimConfig, strategy: Strategy) -> Result<BoundCheck> {
    let paths = simulate_paths(cfg, &[strategy])?;
    check_discarded(&paths)?;
    let u: Vec<f64> = kept(&paths, 0).map(|o| o.utility).collect();
    let (utility, utility_se) = mean_and_se(&u);
    let bound = utility_bound(cfg.market.theta());
    Ok(BoundCheck {
        utility,
        utility_se,
        x: cfg.x,
        bound,
        pass: utility - cfg.x <= bound + 3.0 * utility_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SimConfig {
        SimConfig {
            x: 1.0,
            market: MarketParams::new(0.1, 0.3, 0.7, 1.0).unwrap(),
            alpha: 1.0,
            beta: 1.0,
            dt: 1e-3,
            n_paths: 10,
            seed: 1,
            norm_const: std::f64::consts::FRAC_1_SQRT_2,
            estimator: ClockEstimator::Tanaka,
            bias_factor: 1.0,
        }
    }

    #[test]
    fn log_consumption_integral_matches_quadrature() {
        let e = Engine::new(&cfg()).unwrap();
        for &rate in &[1.0, 0.5, 0.8, 1.25] {
            for &(k0, k1) in &[(0.1, 0.13), (0.9, 1.0), (0.0, 0.5), (0.995, 1.0)] {
                let got = e.log_consumption_integral(2.0, rate, k0, k1);
                let psi = e.psi;
                let big_e = |k: f64| ((1.0 - k) * psi).exp_m1();
                let f = |k: f64| {
                    let x = 2.0 * (big_e(k) / big_e(k0)).powf(rate);
                    (rate * psi * x / (-(-(1.0 - k) * psi).exp_m1())).ln()
                };
                let want = crate::quad::integrate(f, k0, k1, 1e-12, 1e-14, 4000).unwrap().value;
                assert!((got - want).abs() < 1e-9, "rate {rate} [{k0},{k1}]: {got} vs {want}");
            }
        }
    }

    #[test]
    fn y_limits() {
        let ou = OuParams::new(1.0).unwrap();
        let y = calibrate_y(1.0, 1e-9, &ou).unwrap();
        assert!((y - 1.0).abs() < 1e-6);
        assert!(calibrate_y(0.0, 1.0, &ou).is_err());
    }

    #[test]
    fn gate_refuses() {
        let mut c = cfg();
        c.alpha = 0.4;
        c.market = MarketParams::new(0.3, 0.3, 0.0, 1.0).unwrap();
        assert!(matches!(
            simulate_paths(&c, &variant_pairs()),
            Err(Error::NoArbitrageGate { .. })
        ));
    }
}
