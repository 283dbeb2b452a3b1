use clockopt_core::specfun::{
    beta_potential, hermite_h, hermite_h_dx, hitting_transform, hitting_transform_dr, laplace_exponent, nu_feedback,
    NuVariant, OuParams, SpecEvalConfig,
};
use serde_json::json;

use super::{pick, report};
use crate::args::{Function, SpecfunCmd, SpecfunEval};
use crate::output::{num, Table};
use crate::{Ctx, Failure};

pub fn run(ctx: &Ctx, cmd: SpecfunCmd) -> Result<(), Failure> {
    match cmd {
        SpecfunCmd::Eval(a) => eval(ctx, a),
    }
}

fn need(name: &str, v: Option<f64>) -> Result<f64, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{name} is required for this function")))
}

fn eval(ctx: &Ctx, a: SpecfunEval) -> Result<(), Failure> {
    let cfg = SpecEvalConfig::default();
    let alpha = pick(a.alpha, ctx.file.alpha, 1.0);
    let params = OuParams::new(alpha)?;
    let variant = match a.variant.as_str() {
        "derived" => NuVariant::Derived,
        "alternate" => NuVariant::Alternate,
        v => return Err(Failure::Usage(format!("unknown variant {v:?} (derived, alternate)"))),
    };
    let beta = a.beta.or(ctx.file.beta);
    let mut values = Vec::with_capacity(a.at.len());
    for &p in &a.at {
        let v = match a.function {
            Function::Hermite => hermite_h(need("xi", a.xi)?, p, &cfg)?,
            Function::HermiteDx => hermite_h_dx(need("xi", a.xi)?, p, &cfg)?,
            Function::Psi => laplace_exponent(p, &params)?,
            Function::Hitting => hitting_transform(need("lambda", a.lambda)?, p, &params, &cfg)?,
            Function::HittingDr => hitting_transform_dr(need("lambda", a.lambda)?, p, &params, &cfg)?,
            Function::Nu => nu_feedback(p, need("beta", beta)?, &params, variant, &cfg)?,
            Function::BetaPotential => beta_potential(a.t, p, a.k, need("beta", beta)?, &params, &cfg)?,
        };
        values.push(v);
    }
    let config = json!({
        "command": "specfun eval",
        "seed": ctx.seed,
        "function": a.function,
        "at": a.at,
        "xi": a.xi,
        "lambda": a.lambda,
        "alpha": alpha,
        "beta": beta,
        "variant": variant,
        "t": a.t,
        "k": a.k,
    });
    let mut table = Table::new(vec!["point", "value"]);
    for (p, v) in a.at.iter().zip(&values) {
        println!("{p}\t{v}");
        table.push(vec![num(*p), num(*v)]);
    }
    report(
        &ctx.out
            .emit("specfun_eval", &config, &json!({ "values": values }), Some(&table))?,
    );
    Ok(())
}
