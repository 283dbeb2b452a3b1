use clockopt_core::logou::{
    default_perturbations, discriminate, dominance_test, noarb_check, simulate_optimal, utility_bound_check,
    ConsumptionRule, MarketParams, NuChoice, SimConfig, Strategy, StrategySummary,
};
use clockopt_core::ou_clock::{calibrate_clock, CalibrationConfig};
use clockopt_core::specfun::OuParams;
use clockopt_core::Error;
use serde_json::{json, Value};

use super::{pick, report, require_positive};
use crate::args::{LogouCmd, LogouCommon};
use crate::output::{num, Table};
use crate::{Ctx, Failure};

fn sim_config(ctx: &Ctx, p: LogouCommon) -> Result<(SimConfig, Value), Failure> {
    let f = &ctx.file;
    let market = MarketParams::new(
        pick(p.mu, f.mu, 0.1),
        pick(p.sigma, f.sigma, 0.3),
        pick(p.rho, f.rho, 0.7),
        pick(None, f.s0, 1.0),
    )?;
    let alpha = require_positive("alpha", pick(p.alpha, f.alpha, 1.0))?;
    let ou = OuParams::new(alpha)?;
    let gate = noarb_check(&market, &ou);
    if !gate.ok {
        return Err(Error::NoArbitrageGate {
            alpha,
            half_theta_sq: gate.half_theta_sq,
        }
        .into());
    }
    let dt = require_positive("dt", pick(p.dt, f.dt, 1e-3))?;
    let paths = pick(p.paths, f.paths, 10_000);
    let estimator = super::ou::estimator(f.estimator.clone(), f.eps, dt)?;
    let (norm_const, clock) = match p.norm_const.or(f.norm_const) {
        Some(c) => (require_positive("norm_const", c)?, json!({ "source": "given" })),
        None => {
            let n = pick(None, f.calibration_paths, paths.max(20_000));
            let cal = calibrate_clock(&ou, &CalibrationConfig::new(dt, n, ctx.seed, estimator))?;
            (cal.norm_const, json!({ "source": "calibrated", "calibration": cal }))
        }
    };
    let cfg = SimConfig {
        x: require_positive("x", pick(p.x, f.x, 1.0))?,
        market,
        alpha,
        beta: require_positive("beta", pick(p.beta, f.beta, 1.0))?,
        dt,
        n_paths: paths,
        seed: ctx.seed,
        norm_const,
        estimator,
        bias_factor: pick(None, f.bias_factor, 1.0),
    };
    cfg.validate()?;
    Ok((cfg, clock))
}

fn config_json(command: &str, cfg: &SimConfig, clock: &Value, extra: Value) -> Value {
    json!({ "command": command, "seed": cfg.seed, "simulation": cfg, "clock": clock, "extra": extra })
}

fn checkpoint_table(summaries: &[StrategySummary]) -> Table {
    let mut t = Table::new(vec![
        "strategy",
        "t",
        "mean_m",
        "se_m",
        "mean_x",
        "mean_z",
        "mean_m_literal",
        "se_m_literal",
    ]);
    for s in summaries {
        for c in &s.checkpoints {
            t.push(vec![
                s.label.clone(),
                num(c.t),
                num(c.m_mean),
                num(c.m_se),
                num(c.x_mean),
                num(c.z_mean),
                num(c.m_literal_mean),
                num(c.m_literal_se),
            ]);
        }
    }
    t
}

fn print_summary(s: &StrategySummary) {
    println!(
        "{:<32} utility {:.6} ± {:.6}  E[X_tau] {:.3e}  flat {}  saturated {}",
        s.label, s.utility, s.utility_se, s.terminal_wealth.estimate, s.flat, s.saturated
    );
}

fn parse_nu(v: Option<String>) -> Result<NuChoice, Failure> {
    match v.as_deref().unwrap_or("derived") {
        "derived" => Ok(NuChoice::Derived),
        "alternate" => Ok(NuChoice::Alternate),
        "zero" => Ok(NuChoice::Zero),
        o => Err(Failure::Usage(format!("unknown nu {o:?} (derived, alternate, zero)"))),
    }
}

fn parse_rule(v: Option<String>) -> Result<ConsumptionRule, Failure> {
    match v.as_deref().unwrap_or("derived") {
        "derived" => Ok(ConsumptionRule::Derived),
        "alternate" => Ok(ConsumptionRule::Alternate),
        o => Err(Failure::Usage(format!(
            "unknown consumption rule {o:?} (derived, alternate)"
        ))),
    }
}

pub fn run(ctx: &Ctx, cmd: LogouCmd) -> Result<(), Failure> {
    let optimal = Strategy::new(NuChoice::Derived, ConsumptionRule::Derived);
    match cmd {
        LogouCmd::Simulate { p, nu, consumption } => {
            let strategy = Strategy::new(
                parse_nu(nu.or(ctx.file.nu.clone()))?,
                parse_rule(consumption.or(ctx.file.consumption.clone()))?,
            );
            let (cfg, clock) = sim_config(ctx, p)?;
            let rep = simulate_optimal(&cfg, &[strategy])?;
            rep.summaries.iter().for_each(print_summary);
            let config = config_json("logou simulate", &cfg, &clock, json!({ "strategy": strategy }));
            report(
                &ctx.out
                    .emit("logou_simulate", &config, &rep, Some(&checkpoint_table(&rep.summaries)))?,
            );
            Ok(())
        }
        LogouCmd::Discriminate { p } => {
            let (cfg, clock) = sim_config(ctx, p)?;
            let d = discriminate(&cfg)?;
            d.summaries.iter().for_each(print_summary);
            let config = config_json("logou discriminate", &cfg, &clock, Value::Null);
            report(
                &ctx.out
                    .emit("logou_discriminate", &config, &d, Some(&checkpoint_table(&d.summaries)))?,
            );
            match d.winner {
                Some(w) => {
                    println!("consistent pair: {}", w.label());
                    Ok(())
                }
                None => Err(Failure::Check(format!(
                    "discrimination: {} pairs pass saturation and flatness (need exactly one)",
                    d.n_passing
                ))),
            }
        }
        LogouCmd::Dominance { p } => {
            let (cfg, clock) = sim_config(ctx, p)?;
            let perturbations = default_perturbations(optimal);
            let d = dominance_test(&cfg, optimal, &perturbations)?;
            let mut table = Table::new(vec![
                "strategy",
                "utility",
                "utility_se",
                "diff",
                "diff_se",
                "strictly_dominated",
                "not_better",
                "bankrupt_fraction",
            ]);
            table.push(vec![
                optimal.label(),
                num(d.optimal_utility),
                num(d.optimal_se),
                num(0.0),
                num(0.0),
                "false".into(),
                "true".into(),
                num(0.0),
            ]);
            println!(
                "{:<32} utility {:.6} ± {:.6}",
                optimal.label(),
                d.optimal_utility,
                d.optimal_se
            );
            for r in &d.rows {
                println!(
                    "{:<32} utility {:.6}  optimal - this = {:.6} ± {:.6}",
                    r.label, r.utility, r.diff, r.diff_se
                );
                table.push(vec![
                    r.label.clone(),
                    num(r.utility),
                    num(r.utility_se),
                    num(r.diff),
                    num(r.diff_se),
                    r.strictly_dominated.to_string(),
                    r.not_better.to_string(),
                    num(r.bankrupt_fraction),
                ]);
            }
            let config = config_json(
                "logou dominance",
                &cfg,
                &clock,
                json!({ "perturbations": perturbations }),
            );
            report(&ctx.out.emit("logou_dominance", &config, &d, Some(&table))?);
            let beaten: Vec<&str> = d
                .rows
                .iter()
                .filter(|r| !r.not_better)
                .map(|r| r.label.as_str())
                .collect();
            if !beaten.is_empty() {
                return Err(Failure::Check(format!("dominance: beaten by {}", beaten.join(", "))));
            }
            Ok(())
        }
        LogouCmd::Bound { p } => {
            let (cfg, clock) = sim_config(ctx, p)?;
            let b = utility_bound_check(&cfg, optimal)?;
            println!(
                "utility - x = {:.6} ± {:.6}, bound {:.6}: {}",
                b.utility - b.x,
                b.utility_se,
                b.bound,
                if b.pass { "pass" } else { "FAIL" }
            );
            let config = config_json("logou bound", &cfg, &clock, Value::Null);
            report(&ctx.out.emit("logou_bound", &config, &b, None)?);
            if !b.pass {
                return Err(Failure::Check("utility bound violated".into()));
            }
            Ok(())
        }
    }
}
