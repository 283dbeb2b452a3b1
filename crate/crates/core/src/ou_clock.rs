//! Ornstein-Uhlenbeck index, its local time at zero used as the clock, the
//! inverse local time, and Monte Carlo checks of the closed-form transforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specfun::{hitting_transform, laplace_exponent, OuParams, SpecEvalConfig};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Horizon multiple of `sqrt(2 pi) s` used when targeting `tau_s`.
pub const HORIZON_MULTIPLE: f64 = 8.0;

/// Largest tolerated fraction of paths that exhaust the horizon.
pub const MAX_EXHAUSTED_FRACTION: f64 = 1e-3;

/// Independent, reproducible generator for path `path` of experiment `purpose`.
pub fn path_rng(seed: u64, purpose: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    rng.set_stream(path);
    rng
}

/// Exact one-step transition of the OU index.
#[derive(Debug, Clone, Copy)]
pub struct OuStepper {
    pub decay: f64,
    pub sd: f64,
}

impl OuStepper {
    pub fn new(params: &OuParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain("simulate_ou", format!("dt must be positive, got {dt}")));
        }
        let a = params.alpha;
        Ok(Self {
            decay: (-a * dt).exp(),
            sd: (-(-2.0 * a * dt).exp_m1() / (2.0 * a)).sqrt(),
        })
    }

    #[inline]
    pub fn step(&self, r: f64, z: f64) -> f64 {
        r * self.decay + self.sd * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuPath {
    pub dt: f64,
    pub r: Vec<f64>,
    pub seed: u64,
}

pub fn simulate_ou(params: &OuParams, r0: f64, dt: f64, horizon: f64, seed: u64) -> Result<OuPath> {
    if !(horizon > 0.0) {
        return Err(domain(
            "simulate_ou",
            format!("horizon must be positive, got {horizon}"),
        ));
    }
    if !r0.is_finite() {
        return Err(domain("simulate_ou", format!("non-finite start {r0}")));
    }
    let stepper = OuStepper::new(params, dt)?;
    let n = (horizon / dt).ceil() as usize;
    let mut rng = path_rng(seed, 0, 0);
    let mut r = Vec::with_capacity(n + 1);
    r.push(r0);
    let mut cur = r0;
    for _ in 0..n {
        cur = stepper.step(cur, StandardNormal.sample(&mut rng));
        r.push(cur);
    }
    Ok(OuPath { dt, r, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClockEstimator {
    /// Discretised Tanaka formula; increments are `2|R_{n+1}|` on a sign change.
    Tanaka,
    /// Occupation density of `(-eps, eps)` divided by `2 eps`.
    Occupation { eps: f64 },
}

impl ClockEstimator {
    /// The occupation estimator with the default level width `sqrt(dt)`.
    /// Wider bands delay the read-off of `tau_s` by O(eps) in clock level.
    pub fn occupation_default(dt: f64) -> Self {
        ClockEstimator::Occupation { eps: dt.sqrt() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClockEstimator::Occupation { eps } if !(*eps > 0.0) => {
                Err(domain("local_time", format!("eps must be positive, got {eps}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClockEstimator::Tanaka => "tanaka",
            ClockEstimator::Occupation { .. } => "occupation",
        }
    }

    /// Unnormalised local-time increment over one step `r0 -> r1`.
    #[inline]
    pub fn increment(&self, r0: f64, r1: f64, dt: f64) -> f64 {
        match *self {
            ClockEstimator::Tanaka => {
                let sgn = if r0 > 0.0 {
                    1.0
                } else if r0 < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (r1.abs() - r0.abs() - sgn * (r1 - r0)).max(0.0)
            }
            ClockEstimator::Occupation { eps } => {
                if r0.abs() < eps {
                    dt / (2.0 * eps)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockPath {
    pub kappa: Vec<f64>,
    pub dt: f64,
    pub estimator: ClockEstimator,
    pub norm_const: f64,
}

/// Normalised clock along a simulated path.
pub fn local_time(path: &OuPath, estimator: ClockEstimator, norm_const: f64) -> Result<ClockPath> {
    estimator.validate()?;
    if !(norm_const > 0.0) {
        return Err(domain(
            "local_time",
            format!("norm_const must be positive, got {norm_const}"),
        ));
    }
    let mut kappa = Vec::with_capacity(path.r.len());
    kappa.push(0.0);
    let mut k = 0.0;
    for w in path.r.windows(2) {
        k += norm_const * estimator.increment(w[0], w[1], path.dt);
        kappa.push(k);
    }
    Ok(ClockPath {
        kappa,
        dt: path.dt,
        estimator,
        norm_const,
    })
}

/// First grid time with `kappa > s`; `None` if the simulated horizon ends first.
pub fn inverse_local_time(clock: &ClockPath, s: f64) -> Result<Option<f64>> {
    if !(s >= 0.0) {
        return Err(domain("inverse_local_time", format!("level must be >= 0, got {s}")));
    }
    let i = clock.kappa.partition_point(|&k| k <= s);
    Ok((i < clock.kappa.len()).then_some(i as f64 * clock.dt))
}

/// First grid time at which the index from `r0` has changed sign (or hit 0).
pub fn first_hitting_time(params: &OuParams, r0: f64, dt: f64, horizon: f64, seed: u64) -> Result<Option<f64>> {
    let mut rng = path_rng(seed, 0, 0);
    hitting_time_with(&OuStepper::new(params, dt)?, r0, dt, horizon, &mut rng)
}

fn hitting_time_with(stepper: &OuStepper, r0: f64, dt: f64, horizon: f64, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
    if r0 == 0.0 || !r0.is_finite() {
        return Err(domain(
            "first_hitting_time",
            format!("start must be non-zero, got {r0}"),
        ));
    }
    let n = (horizon / dt).ceil() as usize;
    let mut r = r0;
    for i in 1..=n {
        r = stepper.step(r, StandardNormal.sample(rng));
        if r == 0.0 || (r > 0.0) != (r0 > 0.0) {
            return Ok(Some(i as f64 * dt));
        }
    }
    Ok(None)
}

/// Monte Carlo estimate against a closed-form target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub label: String,
    pub lambda: f64,
    /// Clock level `s` or start `r0`, depending on the label.
    pub point: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub target: f64,
    pub bias_budget: f64,
    pub pass: bool,
}

impl McReport {
    pub fn new(label: &str, lambda: f64, point: f64, samples: &[f64], target: f64, bias_budget: f64) -> Self {
        let (estimate, std_error) = mean_and_se(samples);
        Self::from_moments(
            label,
            lambda,
            point,
            estimate,
            std_error,
            samples.len(),
            target,
            bias_budget,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_moments(
        label: &str,
        lambda: f64,
        point: f64,
        estimate: f64,
        std_error: f64,
        n_paths: usize,
        target: f64,
        bias_budget: f64,
    ) -> Self {
        Self {
            label: label.to_string(),
            lambda,
            point,
            estimate,
            std_error,
            n_paths,
            target,
            bias_budget,
            pass: (estimate - target).abs() <= 3.0 * std_error + bias_budget,
        }
    }
}

/// Sample mean and its standard error, summed in index order.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Times at which the raw (unnormalised) local time increases, with the
/// level reached; enough to read off `tau_s` for any normalisation.
#[derive(Debug, Clone, Default)]
pub struct Crossings {
    pub times: Vec<f64>,
    pub levels: Vec<f64>,
    pub horizon: f64,
}

impl Crossings {
    /// `inf{t : raw > level}`, or `None` past the horizon.
    pub fn first_above(&self, level: f64) -> Option<f64> {
        let i = self.levels.partition_point(|&l| l <= level);
        self.times.get(i).copied()
    }
}

/// Simulates from 0 until the raw clock exceeds `max_level` or the horizon ends.
pub fn simulate_crossings(
    stepper: &OuStepper,
    estimator: ClockEstimator,
    dt: f64,
    max_level: f64,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Crossings {
    let n = (horizon / dt).ceil() as usize;
    let mut out = Crossings {
        horizon,
        ..Default::default()
    };
    let mut r = 0.0;
    let mut level = 0.0;
    for i in 1..=n {
        let next = stepper.step(r, StandardNormal.sample(rng));
        let inc = estimator.increment(r, next, dt);
        r = next;
        if inc > 0.0 {
            level += inc;
            out.times.push(i as f64 * dt);
            out.levels.push(level);
            if level > max_level {
                break;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn crossing_ensemble(
    params: &OuParams,
    estimator: ClockEstimator,
    dt: f64,
    max_level: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    purpose: u64,
) -> Result<Vec<Crossings>> {
    estimator.validate()?;
    let stepper = OuStepper::new(params, dt)?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, purpose, p as u64);
            simulate_crossings(&stepper, estimator, dt, max_level, horizon, &mut rng)
        })
        .collect())
}

/// `E[exp(-lambda tau_s)]` samples under normalisation `c`; exhausted paths give 0.
fn laplace_samples(paths: &[Crossings], c: f64, s: f64, lambda: f64) -> Vec<f64> {
    paths
        .iter()
        .map(|p| p.first_above(s / c).map_or(0.0, |t| (-lambda * t).exp()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub lambda_grid: Vec<f64>,
    pub n_paths: usize,
    /// Paths for the coarse pass over the wide bracket.
    pub n_paths_coarse: usize,
    pub dt: f64,
    pub seed: u64,
    pub estimator: ClockEstimator,
    /// Wide bracket for the normalisation constant.
    pub bracket: (f64, f64),
}

impl CalibrationConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64, estimator: ClockEstimator) -> Self {
        Self {
            lambda_grid: vec![0.5, 1.0, 2.0],
            n_paths,
            n_paths_coarse: (n_paths / 10).clamp(500, 5000),
            dt,
            seed,
            estimator,
            bracket: (0.25, 4.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub norm_const: f64,
    pub objective: f64,
    pub coarse_norm_const: f64,
    pub exhausted: usize,
    pub n_paths: usize,
}

fn calibration_objective(paths: &[Crossings], c: f64, lambdas: &[f64], psis: &[f64]) -> f64 {
    lambdas
        .iter()
        .zip(psis)
        .map(|(&l, &psi)| {
            let (m, _) = mean_and_se(&laplace_samples(paths, c, 1.0, l));
            let d = m.max(1e-300).ln() + psi;
            d * d
        })
        .sum()
}

fn minimize_on_bracket(paths: &[Crossings], lo: f64, hi: f64, lambdas: &[f64], psis: &[f64]) -> (f64, f64, bool) {
    let (a, b) = (lo.ln(), hi.ln());
    let n = 64;
    let grid: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = grid
        .iter()
        .map(|&u| calibration_objective(paths, u.exp(), lambdas, psis))
        .collect();
    let best = (0..=n).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let at_edge = best == 0 || best == n;
    let (l, r) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let (u, f) = crate::optim::brent_min(
        |u| calibration_objective(paths, u.exp(), lambdas, psis),
        l,
        r,
        1e-7,
        200,
    );
    if f <= vals[best] {
        (u.exp(), f, at_edge)
    } else {
        (grid[best].exp(), vals[best], at_edge)
    }
}

/// Finds the clock normalisation matching the simulated inverse local time
/// to `exp(-psi(lambda))` at `s = 1`: a coarse pass over the wide bracket,
/// then a fine pass within a factor 1.5 of the coarse optimum.
pub fn calibrate_clock(params: &OuParams, cfg: &CalibrationConfig) -> Result<Calibration> {
    if cfg.lambda_grid.is_empty() || cfg.lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Config("lambda_grid must be non-empty and positive".into()));
    }
    let (lo, hi) = cfg.bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Config(format!("invalid bracket ({lo}, {hi})")));
    }
    let psis: Vec<f64> = cfg
        .lambda_grid
        .iter()
        .map(|&l| laplace_exponent(l, params))
        .collect::<Result<_>>()?;

    let horizon = |c_min: f64| HORIZON_MULTIPLE * SQRT_2PI / c_min.min(1.0);
    let coarse = crossing_ensemble(
        params,
        cfg.estimator,
        cfg.dt,
        1.0 / lo,
        horizon(lo),
        cfg.n_paths_coarse,
        cfg.seed,
        1,
    )?;
    let (c0, _, edge) = minimize_on_bracket(&coarse, lo, hi, &cfg.lambda_grid, &psis);
    if edge {
        return Err(Error::Calibration(format!(
            "objective minimised at the bracket edge (c = {c0:.4}); widen the bracket"
        )));
    }
    drop(coarse);
    let (flo, fhi) = ((c0 / 1.5).max(lo), (c0 * 1.5).min(hi));
    let fine = crossing_ensemble(
        params,
        cfg.estimator,
        cfg.dt,
        1.0 / flo,
        horizon(flo),
        cfg.n_paths,
        cfg.seed,
        2,
    )?;
    let (c, obj, edge) = minimize_on_bracket(&fine, flo, fhi, &cfg.lambda_grid, &psis);
    if edge {
        return Err(Error::Calibration(format!(
            "fine pass minimised at its bracket edge (c = {c:.4})"
        )));
    }
    let exhausted = fine.iter().filter(|p| p.first_above(1.0 / c).is_none()).count();
    check_exhausted(exhausted, fine.len())?;
    Ok(Calibration {
        norm_const: c,
        objective: obj,
        coarse_norm_const: c0,
        exhausted,
        n_paths: fine.len(),
    })
}

fn check_exhausted(exhausted: usize, total: usize) -> Result<()> {
    if exhausted as f64 > MAX_EXHAUSTED_FRACTION * total as f64 {
        return Err(Error::HorizonExhausted {
            exhausted,
            total,
            limit_fraction: MAX_EXHAUSTED_FRACTION,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceConfig {
    pub lambda_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub r0_grid: Vec<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub estimator: ClockEstimator,
    pub norm_const: f64,
    /// Bias allowance in units of `sqrt(dt)`.
    pub bias_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceValidation {
    pub reports: Vec<McReport>,
    /// `E[tau_1]` against `sqrt(2 pi)`; its bias budget is 2% of the target.
    /// Absent when `s_grid` is empty and only hitting times were simulated.
    pub mean_tau1: Option<McReport>,
    pub exhausted: usize,
}

/// Compares simulated `E[exp(-lambda tau_s)]` with `exp(-s psi(lambda))`
/// and simulated `E[exp(-lambda T_0) | R_0 = r0]` with `j(lambda, r0)`.
pub fn validate_laplace(params: &OuParams, cfg: &LaplaceConfig) -> Result<LaplaceValidation> {
    if !(cfg.norm_const > 0.0) {
        return Err(Error::Config("norm_const must be positive".into()));
    }
    let bias = cfg.bias_factor * cfg.dt.sqrt();
    let s_max = cfg.s_grid.iter().cloned().fold(1.0, f64::max);
    let horizon = HORIZON_MULTIPLE * SQRT_2PI * s_max;
    let mut exhausted = 0;
    let mut reports = Vec::new();
    let mut mean_tau1 = None;
    if !cfg.s_grid.is_empty() {
        // Only first passages are kept: the full crossing record of a large
        // ensemble at fine steps runs to gigabytes.
        cfg.estimator.validate()?;
        let stepper = OuStepper::new(params, cfg.dt)?;
        let levels: Vec<f64> = std::iter::once(1.0)
            .chain(cfg.s_grid.iter().copied())
            .map(|s| s / cfg.norm_const)
            .collect();
        let passages: Vec<Vec<Option<f64>>> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(cfg.seed, 3, p as u64);
                let c = simulate_crossings(
                    &stepper,
                    cfg.estimator,
                    cfg.dt,
                    s_max / cfg.norm_const,
                    horizon,
                    &mut rng,
                );
                levels.iter().map(|&l| c.first_above(l)).collect()
            })
            .collect();
        for (k, &s) in cfg.s_grid.iter().enumerate() {
            exhausted = exhausted.max(passages.iter().filter(|p| p[k + 1].is_none()).count());
            for &l in &cfg.lambda_grid {
                let target = (-s * laplace_exponent(l, params)?).exp();
                let samples: Vec<f64> = passages
                    .iter()
                    .map(|p| p[k + 1].map_or(0.0, |t| (-l * t).exp()))
                    .collect();
                reports.push(McReport::new("inverse_local_time", l, s, &samples, target, bias));
            }
        }
        check_exhausted(exhausted, passages.len())?;
        let taus: Vec<f64> = passages.iter().map(|p| p[0].unwrap_or(horizon)).collect();
        mean_tau1 = Some(McReport::new("mean_tau1", 0.0, 1.0, &taus, SQRT_2PI, 0.02 * SQRT_2PI));
    }

    let stepper = OuStepper::new(params, cfg.dt)?;
    let spec_cfg = SpecEvalConfig::default();
    for (k, &r0) in cfg.r0_grid.iter().enumerate() {
        let hits: Vec<Option<f64>> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(cfg.seed, 100 + k as u64, p as u64);
                hitting_time_with(&stepper, r0, cfg.dt, horizon, &mut rng)
            })
            .collect::<Result<_>>()?;
        for &l in &cfg.lambda_grid {
            let samples: Vec<f64> = hits.iter().map(|h| h.map_or(0.0, |t| (-l * t).exp())).collect();
            let target = hitting_transform(l, r0, params, &spec_cfg)?;
            reports.push(McReport::new("hitting_time", l, r0, &samples, target, bias));
        }
    }
    Ok(LaplaceValidation {
        reports,
        mean_tau1,
        exhausted,
    })
}
