//! Closed-form special functions for the OU local-time clock: Gamma, the
//! Hermite function of negative order, the inverse-local-time Laplace
//! exponent, the zero-hitting transform, the conditional beta-potential and
//! the feedback drift of the optimal dual process.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{domain, Error, Result};
use crate::quad;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Mean-reversion rate of `dR = -alpha R dt + dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuParams {
    pub alpha: f64,
}

impl OuParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(domain("OuParams", format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

/// Quadrature settings for the Hermite integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecEvalConfig {
    pub quad_rel_tol: f64,
    pub quad_max_subdiv: usize,
}

impl Default for SpecEvalConfig {
    fn default() -> Self {
        Self {
            quad_rel_tol: 1e-10,
            quad_max_subdiv: 2048,
        }
    }
}

impl SpecEvalConfig {
    pub fn new(quad_rel_tol: f64, quad_max_subdiv: usize) -> Result<Self> {
        let cfg = Self {
            quad_rel_tol,
            quad_max_subdiv,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quad_rel_tol > 0.0 && self.quad_rel_tol < 1e-4) {
            return Err(Error::Config(format!(
                "quad_rel_tol must lie in (0, 1e-4), got {}",
                self.quad_rel_tol
            )));
        }
        if self.quad_max_subdiv < 16 {
            return Err(Error::Config(format!(
                "quad_max_subdiv must be at least 16, got {}",
                self.quad_max_subdiv
            )));
        }
        Ok(())
    }
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Gamma function; poles at the non-positive integers are domain errors.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !x.is_finite() || is_pole(x) {
        return Err(domain("gamma_fn", format!("pole or non-finite input {x}")));
    }
    Ok(gamma(x))
}

/// Hermite function of negative order,
/// `H_xi(x) = 1/(2 Gamma(-xi)) * int_0^inf exp(-s - 2 x sqrt(s)) s^(-xi/2 - 1) ds`.
///
/// The substitution `s = u^p` with `p = k / a`, `a = -xi/2` and
/// `k = max(1, ceil(2a))` turns the weight `s^(a-1) ds` into `p u^(k-1) du`,
/// which is smooth at the origin for every order (`p = 2` at `xi = -1`).
pub fn hermite_h(xi: f64, x: f64, cfg: &SpecEvalConfig) -> Result<f64> {
    if !(xi < 0.0 && xi.is_finite()) {
        return Err(domain("hermite_h", format!("order must be negative, got {xi}")));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(domain("hermite_h", format!("argument must be >= 0, got {x}")));
    }
    let a = -0.5 * xi;
    let k = (2.0 * a).ceil().max(1.0);
    let p = k / a;
    let s_max = 2.0 * a + 70.0;
    let u_max = s_max.powf(1.0 / p);
    let integrand = |u: f64| {
        if u <= 0.0 {
            return if k == 1.0 { p } else { 0.0 };
        }
        let s = u.powf(p);
        let half = u.powf(0.5 * p);
        p * (-s - 2.0 * x * half).exp() * u.powf(k - 1.0)
    };
    let r = quad::integrate(integrand, 0.0, u_max, cfg.quad_rel_tol, 0.0, cfg.quad_max_subdiv)?;
    let ln_norm = std::f64::consts::LN_2 + ln_gamma(-xi);
    Ok((r.value.ln() - ln_norm).exp())
}

/// `d/dx H_xi(x) = 2 xi H_{xi-1}(x)`.
pub fn hermite_h_dx(xi: f64, x: f64, cfg: &SpecEvalConfig) -> Result<f64> {
    Ok(2.0 * xi * hermite_h(xi - 1.0, x, cfg)?)
}

/// Laplace exponent of the inverse local time at zero,
/// `E[exp(-lambda tau_s)] = exp(-s psi(lambda))`.
pub fn laplace_exponent(lambda: f64, params: &OuParams) -> Result<f64> {
    let alpha = params.alpha;
    if !(lambda > -alpha) || !lambda.is_finite() {
        return Err(domain(
            "laplace_exponent",
            format!("lambda = {lambda} <= -alpha = {}; the transform is infinite", -alpha),
        ));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let a = lambda / alpha;
    if a > 100.0 {
        let ln = alpha.ln() + (1.0 + a) * std::f64::consts::LN_2 + 2.0 * ln_gamma(0.5 + 0.5 * a)
            - SQRT_2PI.ln()
            - ln_gamma(a);
        return Ok(ln.exp());
    }
    let g = gamma(0.5 + 0.5 * a);
    Ok(alpha * 2f64.powf(1.0 + a) * g * g / (SQRT_2PI * gamma(a)))
}

fn hitting_prefactor(a: f64) -> f64 {
    // 2^a Gamma((1+a)/2) / Gamma(1/2)
    (a * std::f64::consts::LN_2 + ln_gamma(0.5 * (1.0 + a)) - SQRT_PI.ln()).exp()
}

fn check_hitting_args(op: &'static str, lambda: f64, r: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(op, format!("lambda must be positive, got {lambda}")));
    }
    if !r.is_finite() {
        return Err(domain(op, format!("non-finite start {r}")));
    }
    Ok(())
}

/// Zero-hitting transform `E[exp(-lambda T_0) | R_0 = r]` of the OU index.
///
/// Solves `1/2 f'' - alpha r f' = lambda f` with `f(0) = 1`, decaying at
/// infinity: `f(r) = 2^a Gamma((1+a)/2)/Gamma(1/2) * H_{-a}(sqrt(alpha) |r|)`
/// with `a = lambda/alpha`. At `alpha = 1/2` the Hermite argument is `|r|/sqrt 2`.
pub fn hitting_transform(lambda: f64, r: f64, params: &OuParams, cfg: &SpecEvalConfig) -> Result<f64> {
    check_hitting_args("hitting_transform", lambda, r)?;
    let a = lambda / params.alpha;
    Ok(hitting_prefactor(a) * hermite_h(-a, params.alpha.sqrt() * r.abs(), cfg)?)
}

/// The same prefactor with the Hermite argument fixed at `|r|/sqrt 2` for
/// every alpha. Agrees with [`hitting_transform`] only at `alpha = 1/2`; kept
/// so the two scalings can be compared against simulation.
pub fn hitting_transform_fixed_scale(lambda: f64, r: f64, params: &OuParams, cfg: &SpecEvalConfig) -> Result<f64> {
    check_hitting_args("hitting_transform_fixed_scale", lambda, r)?;
    let a = lambda / params.alpha;
    Ok(hitting_prefactor(a) * hermite_h(-a, r.abs() / std::f64::consts::SQRT_2, cfg)?)
}

/// `d/dr j(lambda, r)` for `r >= 0` (one-sided at zero).
pub fn hitting_transform_dr(lambda: f64, r: f64, params: &OuParams, cfg: &SpecEvalConfig) -> Result<f64> {
    check_hitting_args("hitting_transform_dr", lambda, r)?;
    if r < 0.0 {
        return Err(domain("hitting_transform_dr", format!("r must be >= 0, got {r}")));
    }
    let a = lambda / params.alpha;
    let sa = params.alpha.sqrt();
    Ok(hitting_prefactor(a) * sa * hermite_h_dx(-a, sa * r, cfg)?)
}

/// Forward-looking part of the conditional beta-potential of the clock:
/// `g(t, r, k) = exp(-beta t) j(beta, |r|) (1 - exp(-(1-k) psi(beta))) / psi(beta)`.
pub fn beta_potential(t: f64, r: f64, k: f64, beta: f64, params: &OuParams, cfg: &SpecEvalConfig) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(domain("beta_potential", format!("beta must be positive, got {beta}")));
    }
    if !(0.0..=1.0).contains(&k) {
        return Err(domain(
            "beta_potential",
            format!("clock value must lie in [0,1], got {k}"),
        ));
    }
    let psi = laplace_exponent(beta, params)?;
    let remaining = -(-(1.0 - k) * psi).exp_m1() / psi;
    if remaining == 0.0 {
        return Ok(0.0);
    }
    Ok((-beta * t).exp() * hitting_transform(beta, r, params, cfg)? * remaining)
}

/// Which closed form to use for the feedback drift of the dual process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuVariant {
    /// `nu(r) = sgn(r) d_r j(beta,|r|) / j(beta,|r|)`.
    Derived,
    /// `nu(r) = -sgn(r) h(|r|/sqrt 2)` with
    /// `h(z) = -(2 beta/alpha) H_{-beta/alpha-1}(z) / H_{-beta/alpha}(z)`:
    /// opposite sign, factor 2 and a fixed `1/sqrt 2` argument scale.
    Alternate,
}

impl NuVariant {
    pub const ALL: [NuVariant; 2] = [NuVariant::Derived, NuVariant::Alternate];

    pub fn name(self) -> &'static str {
        match self {
            NuVariant::Derived => "derived",
            NuVariant::Alternate => "alternate",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            NuVariant::Derived => NuVariant::Alternate,
            NuVariant::Alternate => NuVariant::Derived,
        }
    }

    /// Hermite argument scale and signed multiplier of the ratio
    /// `H_{xi-1}(z)/H_xi(z)`, so that `nu(r) = sgn(r) * mult * ratio(scale |r|)`.
    fn scale_and_multiplier(self, beta: f64, params: &OuParams) -> (f64, f64) {
        let b = beta / params.alpha;
        match self {
            NuVariant::Derived => {
                let sa = params.alpha.sqrt();
                (sa, -2.0 * sa * b)
            }
            NuVariant::Alternate => (std::f64::consts::FRAC_1_SQRT_2, 2.0 * b),
        }
    }
}

/// Feedback drift `nu(r)` of the optimal dual process for log utility with
/// impatience `beta`. Exactly odd in `r`; zero at `r = 0`.
pub fn nu_feedback(r: f64, beta: f64, params: &OuParams, variant: NuVariant, cfg: &SpecEvalConfig) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(domain("nu_feedback", format!("beta must be positive, got {beta}")));
    }
    if !r.is_finite() {
        return Err(domain("nu_feedback", format!("non-finite r {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(r.signum() * nu_magnitude(r.abs(), beta, params, variant, cfg)?)
}

/// `nu(0+)`, the signed one-sided value of `nu_feedback` at zero.
fn nu_magnitude(abs_r: f64, beta: f64, params: &OuParams, variant: NuVariant, cfg: &SpecEvalConfig) -> Result<f64> {
    let (scale, mult) = variant.scale_and_multiplier(beta, params);
    let xi = -beta / params.alpha;
    let z = scale * abs_r;
    Ok(mult * hermite_h(xi - 1.0, z, cfg)? / hermite_h(xi, z, cfg)?)
}

/// Supremum of `|nu|` over a grid of `|r|` in `[0+, 12/sqrt(alpha)]`
/// (the ratio `H_{xi-1}/H_xi` is largest at the origin).
pub fn nu_bound(beta: f64, params: &OuParams, variant: NuVariant, cfg: &SpecEvalConfig) -> Result<f64> {
    let r_max = 12.0 / params.alpha.sqrt();
    let mut sup: f64 = 0.0;
    for i in 0..=240 {
        let r = r_max * i as f64 / 240.0;
        sup = sup.max(nu_magnitude(r, beta, params, variant, cfg)?.abs());
    }
    Ok(sup)
}

/// Tabulated `nu` for Monte Carlo use: cubic Hermite interpolation of the
/// magnitude on a uniform `|r|` grid with exact slopes from the Hermite
/// derivative identity. Outside the grid the function falls back to
/// quadrature.
#[derive(Debug, Clone)]
pub struct NuTable {
    pub beta: f64,
    pub params: OuParams,
    pub variant: NuVariant,
    cfg: SpecEvalConfig,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl NuTable {
    pub fn new(beta: f64, params: OuParams, variant: NuVariant, cfg: SpecEvalConfig) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(domain("NuTable", format!("beta must be positive, got {beta}")));
        }
        let (scale, mult) = variant.scale_and_multiplier(beta, &params);
        let xi = -beta / params.alpha;
        let r_max = 10.0 / params.alpha.sqrt().min(1.0);
        let n = (r_max / 0.01).ceil() as usize;
        let step = r_max / n as f64;
        let mut values = Vec::with_capacity(n + 1);
        let mut slopes = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let z = scale * step * i as f64;
            let h0 = hermite_h(xi, z, &cfg)?;
            let h1 = hermite_h(xi - 1.0, z, &cfg)?;
            let h2 = hermite_h(xi - 2.0, z, &cfg)?;
            let ratio = h1 / h0;
            // d/dz (h1/h0) = (2(xi-1) h2 h0 - 2 xi h1^2) / h0^2
            let d_ratio = (2.0 * (xi - 1.0) * h2 * h0 - 2.0 * xi * h1 * h1) / (h0 * h0);
            values.push(mult * ratio);
            slopes.push(mult * scale * d_ratio);
        }
        Ok(Self {
            beta,
            params,
            variant,
            cfg,
            step,
            values,
            slopes,
        })
    }

    pub fn r_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    /// Largest tabulated `|nu|`.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let abs_r = r.abs();
        let pos = abs_r / self.step;
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return nu_magnitude(abs_r, self.beta, &self.params, self.variant, &self.cfg)
                .map(|m| r.signum() * m)
                .unwrap_or(0.0);
        }
        let t = pos - i as f64;
        let h = self.step;
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let mag =
            (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1;
        r.signum() * mag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SpecEvalConfig {
        SpecEvalConfig::default()
    }

    #[test]
    fn gamma_known_values() {
        assert!((gamma_fn(0.5).unwrap() - SQRT_PI).abs() < 1e-14);
        assert!((gamma_fn(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((gamma_fn(4.0).unwrap() - 6.0).abs() < 1e-12);
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-3.0).is_err());
        assert!(gamma_fn(-0.5).is_ok());
    }

    #[test]
    fn hermite_at_zero_reduces_to_gamma_ratio() {
        assert!((hermite_h(-1.0, 0.0, &cfg()).unwrap() - 0.5 * SQRT_PI).abs() < 1e-12);
        assert!((hermite_h(-2.0, 0.0, &cfg()).unwrap() - 0.5).abs() < 1e-12);
        let want = gamma(0.75) / (2.0 * gamma(1.5));
        assert!((hermite_h(-1.5, 0.0, &cfg()).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn hermite_rejects_bad_inputs() {
        assert!(hermite_h(0.0, 1.0, &cfg()).is_err());
        assert!(hermite_h(0.5, 1.0, &cfg()).is_err());
        assert!(hermite_h(-1.0, -0.1, &cfg()).is_err());
    }

    #[test]
    fn hermite_derivative_at_zero() {
        assert!((hermite_h_dx(-1.0, 0.0, &cfg()).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_basic_values() {
        let p = OuParams::new(1.0).unwrap();
        assert_eq!(laplace_exponent(0.0, &p).unwrap(), 0.0);
        for alpha in [0.5, 1.0, 2.0] {
            let p = OuParams::new(alpha).unwrap();
            let want = 4.0 * alpha / SQRT_2PI;
            assert!((laplace_exponent(alpha, &p).unwrap() - want).abs() < 1e-12 * want);
        }
        assert!(laplace_exponent(-1.0, &p).is_err());
        assert!(laplace_exponent(-0.5, &p).unwrap() < 0.0);
    }

    #[test]
    fn psi_large_argument_switches_to_logs_continuously() {
        let p = OuParams::new(1.0).unwrap();
        let below = laplace_exponent(100.0 - 1e-9, &p).unwrap();
        let above = laplace_exponent(100.0 + 1e-9, &p).unwrap();
        assert!((below - above).abs() < 1e-8 * below);
    }

    #[test]
    fn beta_potential_edges() {
        let p = OuParams::new(1.0).unwrap();
        assert_eq!(beta_potential(0.3, 0.2, 1.0, 1.0, &p, &cfg()).unwrap(), 0.0);
        let psi = laplace_exponent(1.0, &p).unwrap();
        let g = beta_potential(0.0, 0.0, 0.0, 1.0, &p, &cfg()).unwrap();
        assert!((g - (1.0 - (-psi).exp()) / psi).abs() < 1e-10);
        assert!(beta_potential(0.0, 0.0, 1.5, 1.0, &p, &cfg()).is_err());
    }

    #[test]
    fn nu_is_zero_at_origin_and_odd() {
        let p = OuParams::new(1.0).unwrap();
        for v in NuVariant::ALL {
            assert_eq!(nu_feedback(0.0, 1.0, &p, v, &cfg()).unwrap(), 0.0);
            let a = nu_feedback(0.7, 1.0, &p, v, &cfg()).unwrap();
            let b = nu_feedback(-0.7, 1.0, &p, v, &cfg()).unwrap();
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn nu_table_matches_direct_evaluation() {
        let p = OuParams::new(1.0).unwrap();
        for v in NuVariant::ALL {
            let table = NuTable::new(1.0, p, v, cfg()).unwrap();
            for r in [-3.3, -0.51, -0.004, 0.013, 0.25, 1.777, 4.2, 12.5] {
                let direct = nu_feedback(r, 1.0, &p, v, &cfg()).unwrap();
                assert!((table.eval(r) - direct).abs() < 1e-8, "{v:?} r={r}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(SpecEvalConfig::new(1e-3, 100).is_err());
        assert!(SpecEvalConfig::new(1e-8, 8).is_err());
        assert!(SpecEvalConfig::new(1e-8, 16).is_ok());
    }
}
