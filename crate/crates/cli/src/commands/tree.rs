use std::path::PathBuf;

use clockopt_core::finite_market::{
    hedging_prices, infeasibility_certificate, martingale_polytope, solve_dual, solve_primal, verify_duality,
    EventTree, VerifyTolerances,
};
use clockopt_core::utility::{FamilyName, UtilityField, UtilitySpec};
use serde_json::json;

use super::{pick, report};
use crate::args::{TreeCmd, TreeCommon};
use crate::output::{num, Table};
use crate::{Ctx, Failure};

fn load(ctx: &Ctx, t: TreeCommon) -> Result<(EventTree, UtilitySpec, PathBuf), Failure> {
    let path = t
        .file
        .or(ctx.file.file.clone().map(PathBuf::from))
        .ok_or_else(|| Failure::Usage("--file is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("cannot read tree file {}: {e}", path.display())))?;
    let (tree, spec) = EventTree::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut spec = spec.unwrap_or(UtilitySpec {
        family: FamilyName::Log,
        gamma: None,
        beta: 0.0,
    });
    if let Some(fam) = t.family.or(ctx.file.family.clone()) {
        spec.family = match fam.as_str() {
            "log" => FamilyName::Log,
            "power" => FamilyName::Power,
            other => return Err(Failure::Usage(format!("unknown utility family {other:?} (log, power)"))),
        };
    }
    if let Some(g) = t.gamma.or(ctx.file.gamma) {
        spec.gamma = Some(g);
    }
    if let Some(b) = t.beta.or(ctx.file.beta) {
        spec.beta = b;
    }
    Ok((tree, spec, path))
}

fn field(spec: &UtilitySpec) -> Result<UtilityField, Failure> {
    Ok(spec.build()?)
}

fn node_table(tree: &EventTree, cols: Vec<&'static str>, values: &[Vec<f64>]) -> Table {
    let mut headers = vec!["node", "t", "dkappa"];
    headers.extend(cols);
    let mut table = Table::new(headers);
    for (i, n) in tree.nodes.iter().enumerate() {
        let mut row = vec![n.id.to_string(), num(n.t), num(n.dkappa)];
        row.extend(values.iter().map(|v| num(v[i])));
        table.push(row);
    }
    table
}

pub fn run(ctx: &Ctx, cmd: TreeCmd) -> Result<(), Failure> {
    match cmd {
        TreeCmd::Solve { tree, x } => {
            let (tree, spec, path) = load(ctx, tree)?;
            let u = field(&spec)?;
            let x = pick(x, ctx.file.x, 1.0);
            let config = json!({
                "command": "tree solve", "seed": ctx.seed, "file": path.display().to_string(),
                "utility": spec, "x": x, "nodes": tree.to_specs(),
            });
            let poly = martingale_polytope(&tree)?;
            let prices = hedging_prices(&tree, &poly);
            if let Some(cert) = infeasibility_certificate(&tree, &poly, x) {
                let summary = json!({ "feasible": false, "lower_price": prices.lower, "upper_price": prices.upper, "certificate": cert });
                report(&ctx.out.emit("tree_solve", &config, &summary, None)?);
                return Err(Failure::Check(format!(
                    "infeasible: x = {x} is below -L(E) = {}; u(x) = -infinity",
                    -prices.lower
                )));
            }
            let sol = solve_primal(&tree, &poly, &u, x)?;
            println!("u({x}) = {}", sol.value);
            let summary =
                json!({ "feasible": true, "lower_price": prices.lower, "upper_price": prices.upper, "solution": sol });
            let table = node_table(&tree, vec!["c", "wealth"], &[sol.c.clone(), sol.wealth.clone()]);
            report(&ctx.out.emit("tree_solve", &config, &summary, Some(&table))?);
            Ok(())
        }
        TreeCmd::Dual { tree, y } => {
            let (tree, spec, path) = load(ctx, tree)?;
            let u = field(&spec)?;
            let y = pick(y, ctx.file.y, 1.0);
            if y.is_nan() || y <= 0.0 {
                return Err(Failure::Usage(format!(
                    "y must be positive (v = +infinity for y <= 0), got {y}"
                )));
            }
            let config = json!({
                "command": "tree dual", "seed": ctx.seed, "file": path.display().to_string(),
                "utility": spec, "y": y, "nodes": tree.to_specs(),
            });
            let poly = martingale_polytope(&tree)?;
            let d = solve_dual(&tree, &poly, &u, y)?;
            println!("v({y}) = {} (xi = {})", d.value, d.measure.xi);
            let qmass = tree.node_mass(&d.measure.q);
            let table = node_table(&tree, vec!["q_mass", "density"], &[qmass, d.measure.density.clone()]);
            report(&ctx.out.emit("tree_dual", &config, &d, Some(&table))?);
            Ok(())
        }
        TreeCmd::Verify { tree, x_grid, y_grid } => {
            let (tree, spec, path) = load(ctx, tree)?;
            let u = field(&spec)?;
            let poly = martingale_polytope(&tree)?;
            let lower = hedging_prices(&tree, &poly).lower;
            let x_grid = pick(
                x_grid,
                ctx.file.x_grid.clone(),
                [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|d| d - lower).collect(),
            );
            let y_grid = pick(
                y_grid,
                ctx.file.y_grid.clone(),
                vec![0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1000.0],
            );
            let config = json!({
                "command": "tree verify", "seed": ctx.seed, "file": path.display().to_string(),
                "utility": spec, "x_grid": x_grid, "y_grid": y_grid, "nodes": tree.to_specs(),
            });
            let rep = verify_duality(&tree, &u, &x_grid, &y_grid, VerifyTolerances::default())?;
            let mut table = Table::new(vec!["check", "pass", "residual", "tolerance", "property"]);
            for c in &rep.checks {
                println!(
                    "{:<36} {:<5} {:.3e}",
                    c.name,
                    if c.pass { "pass" } else { "FAIL" },
                    c.residual
                );
                table.push(vec![
                    c.name.to_string(),
                    c.pass.to_string(),
                    num(c.residual),
                    num(c.tolerance),
                    c.property.to_string(),
                ]);
            }
            report(&ctx.out.emit("tree_verify", &config, &rep, Some(&table))?);
            if !rep.all_pass {
                let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
                return Err(Failure::Check(format!("tree verify: {}", failed.join(", "))));
            }
            Ok(())
        }
    }
}
