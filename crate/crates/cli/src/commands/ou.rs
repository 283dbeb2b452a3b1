use clockopt_core::ou_clock::{
    calibrate_clock, inverse_local_time, local_time, simulate_ou, validate_laplace, CalibrationConfig, ClockEstimator,
    LaplaceConfig,
};
use clockopt_core::specfun::OuParams;
use serde_json::json;

use super::{pick, report, require_positive};
use crate::args::{OuCmd, OuCommon};
use crate::config::FileConfig;
use crate::output::{num, Table};
use crate::{Ctx, Failure};

pub struct OuSetup {
    pub alpha: f64,
    pub dt: f64,
    pub paths: usize,
    pub estimator: ClockEstimator,
}

pub fn estimator(name: Option<String>, eps: Option<f64>, dt: f64) -> Result<ClockEstimator, Failure> {
    match name.as_deref().unwrap_or("tanaka") {
        "tanaka" => Ok(ClockEstimator::Tanaka),
        "occupation" => Ok(match eps {
            Some(e) => ClockEstimator::Occupation {
                eps: require_positive("eps", e)?,
            },
            None => ClockEstimator::occupation_default(dt),
        }),
        other => Err(Failure::Usage(format!(
            "unknown estimator {other:?} (tanaka, occupation)"
        ))),
    }
}

fn setup(o: OuCommon, f: &FileConfig, default_paths: usize) -> Result<OuSetup, Failure> {
    let alpha = require_positive("alpha", pick(o.alpha, f.alpha, 1.0))?;
    let dt = require_positive("dt", pick(o.dt, f.dt, 1e-3))?;
    let paths = pick(o.paths, f.paths, default_paths);
    if paths < 2 {
        return Err(Failure::Usage("paths must be at least 2".into()));
    }
    let estimator = estimator(o.estimator.or(f.estimator.clone()), o.eps.or(f.eps), dt)?;
    Ok(OuSetup {
        alpha,
        dt,
        paths,
        estimator,
    })
}

pub fn run(ctx: &Ctx, cmd: OuCmd) -> Result<(), Failure> {
    let f = &ctx.file;
    match cmd {
        OuCmd::Simulate {
            ou,
            r0,
            horizon,
            norm_const,
        } => {
            let s = setup(ou, f, 1)?;
            let params = OuParams::new(s.alpha)?;
            let r0 = pick(r0, f.r0, 0.0);
            let horizon = require_positive("horizon", pick(horizon, f.horizon, 10.0))?;
            let c = require_positive(
                "norm_const",
                pick(norm_const, f.norm_const, 1.0 / (2.0 * s.alpha).sqrt()),
            )?;
            let path = simulate_ou(&params, r0, s.dt, horizon, ctx.seed)?;
            let clock = local_time(&path, s.estimator, c)?;
            let tau1 = inverse_local_time(&clock, 1.0)?;
            let config = json!({
                "command": "ou simulate", "seed": ctx.seed, "alpha": s.alpha, "dt": s.dt, "r0": r0,
                "horizon": horizon, "estimator": s.estimator, "norm_const": c,
            });
            let summary = json!({
                "n_steps": path.r.len() - 1,
                "final_kappa": clock.kappa.last(),
                "tau1": tau1,
            });
            let mut table = Table::new(vec!["t", "r", "kappa"]);
            for (i, (r, k)) in path.r.iter().zip(&clock.kappa).enumerate() {
                table.push(vec![num(i as f64 * s.dt), num(*r), num(*k)]);
            }
            println!(
                "steps {} final kappa {} tau1 {:?}",
                path.r.len() - 1,
                clock.kappa.last().unwrap(),
                tau1
            );
            report(&ctx.out.emit("ou_simulate", &config, &summary, Some(&table))?);
            Ok(())
        }
        OuCmd::Calibrate { ou, lambda_grid } => {
            let s = setup(ou, f, 20_000)?;
            let params = OuParams::new(s.alpha)?;
            let mut cfg = CalibrationConfig::new(s.dt, s.paths, ctx.seed, s.estimator);
            if let Some(g) = lambda_grid.or(f.lambda_grid.clone()) {
                cfg.lambda_grid = g;
            }
            let config = json!({ "command": "ou calibrate", "seed": ctx.seed, "alpha": s.alpha, "calibration": cfg });
            let cal = calibrate_clock(&params, &cfg)?;
            println!("norm_const {} (objective {:e})", cal.norm_const, cal.objective);
            let summary = json!({ "calibration": cal, "reference": 1.0 / (2.0 * s.alpha).sqrt() });
            report(&ctx.out.emit("ou_calibrate", &config, &summary, None)?);
            Ok(())
        }
        OuCmd::ValidateLaplace {
            ou,
            lambda_grid,
            s_grid,
            r0_grid,
            norm_const,
        } => {
            let s = setup(ou, f, 20_000)?;
            let params = OuParams::new(s.alpha)?;
            let lambda_grid = pick(lambda_grid, f.lambda_grid.clone(), vec![0.5, 1.0, 2.0]);
            let calibrated = match norm_const.or(f.norm_const) {
                Some(c) => require_positive("norm_const", c)?,
                None => {
                    let mut cfg = CalibrationConfig::new(s.dt, s.paths, ctx.seed, s.estimator);
                    cfg.lambda_grid = lambda_grid.clone();
                    calibrate_clock(&params, &cfg)?.norm_const
                }
            };
            let cfg = LaplaceConfig {
                lambda_grid,
                s_grid: pick(s_grid, f.s_grid.clone(), vec![1.0]),
                r0_grid: pick(r0_grid, f.r0_grid.clone(), vec![0.5, 1.0, 2.0]),
                n_paths: s.paths,
                dt: s.dt,
                seed: ctx.seed,
                estimator: s.estimator,
                norm_const: calibrated,
                bias_factor: pick(None, f.bias_factor, 1.0),
            };
            let config =
                json!({ "command": "ou validate-laplace", "seed": ctx.seed, "alpha": s.alpha, "laplace": cfg });
            let v = validate_laplace(&params, &cfg)?;
            let mut table = Table::new(vec![
                "label",
                "lambda",
                "point",
                "estimate",
                "std_error",
                "target",
                "bias_budget",
                "pass",
            ]);
            for r in v.reports.iter().chain(v.mean_tau1.as_ref()) {
                table.push(vec![
                    r.label.clone(),
                    num(r.lambda),
                    num(r.point),
                    num(r.estimate),
                    num(r.std_error),
                    num(r.target),
                    num(r.bias_budget),
                    r.pass.to_string(),
                ]);
            }
            let failed = v.reports.iter().filter(|r| !r.pass).count();
            let tau_ok = v
                .mean_tau1
                .as_ref()
                .is_none_or(|m| (m.estimate / m.target - 1.0).abs() <= 0.02);
            println!(
                "{} of {} transform checks pass",
                v.reports.len() - failed,
                v.reports.len()
            );
            if let Some(m) = &v.mean_tau1 {
                println!("E[tau_1] = {} (target {})", m.estimate, m.target);
            }
            report(&ctx.out.emit("ou_validate_laplace", &config, &v, Some(&table))?);
            if failed > 0 || !tau_ok {
                return Err(Failure::Check(format!(
                    "validate-laplace: {failed} transform report(s) outside 3 SE + bias; mean tau_1 within 2%: {tau_ok}"
                )));
            }
            Ok(())
        }
    }
}
