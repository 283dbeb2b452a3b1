//! Log-barrier Newton method for `min F(z)` subject to affine slacks
//! `s = h - G z > 0`, with `F` smooth and convex on its domain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Objective callback: value, gradient and Hessian, or `None` outside the domain.
pub(crate) type Objective<'a> = dyn Fn(&DVector<f64>) -> Option<(f64, DVector<f64>, DMatrix<f64>)> + 'a;

pub(crate) struct Problem<'a> {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub objective: &'a Objective<'a>,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub z: DVector<f64>,
    pub multipliers: DVector<f64>,
    /// `|grad F + G^T lambda|_inf`.
    pub stationarity: f64,
    /// `max_i |lambda_i s_i|`.
    pub complementarity: f64,
}

const MU_START: f64 = 1.0;
const MU_FACTOR: f64 = 0.1;
const MU_FINAL: f64 = 1e-13;
const MAX_NEWTON: usize = 200;

/// Value, gradient, Hessian and slacks.
type Merit = (f64, DVector<f64>, DMatrix<f64>, DVector<f64>);

fn merit(p: &Problem, z: &DVector<f64>, mu: f64) -> Option<Merit> {
    let s = &p.h - &p.g * z;
    if s.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let (f, grad, hess) = (p.objective)(z)?;
    if !f.is_finite() {
        return None;
    }
    let inv: DVector<f64> = s.map(|v| 1.0 / v);
    let phi = f - mu * s.iter().map(|v| v.ln()).sum::<f64>();
    let grad = grad + p.g.transpose() * (&inv * mu);
    let weighted = DMatrix::from_fn(p.g.nrows(), p.g.ncols(), |r, c| p.g[(r, c)] * inv[r]);
    let hess = hess + weighted.transpose() * &weighted * mu;
    Some((phi, grad, hess, s))
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..30 {
        let mut m = hess.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 10.0 };
    }
    None
}

pub(crate) fn minimize(p: &Problem, z0: DVector<f64>) -> Result<Outcome> {
    let mut z = z0;
    let mut mu = MU_START;
    if merit(p, &z, mu).is_none() {
        return Err(Error::Solver("barrier start is not strictly feasible".into()));
    }
    loop {
        for _ in 0..MAX_NEWTON {
            let (phi, grad, hess, _) = merit(p, &z, mu).ok_or_else(|| Error::Solver("left the domain".into()))?;
            let Some(dz) = newton_direction(&hess, &grad) else {
                return Err(Error::Solver("Newton system could not be solved".into()));
            };
            let slope = grad.dot(&dz);
            let gnorm = grad.amax();
            if -slope <= 1e-15 * (1.0 + phi.abs()) && gnorm <= 1e-12 {
                break;
            }
            // Near convergence the merit value is dominated by rounding, so a
            // step that shrinks the gradient without raising the merit beyond
            // rounding is also accepted.
            let noise = 1e-14 * (1.0 + phi.abs());
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-20 {
                let trial = &z + &dz * t;
                if let Some((phi_t, grad_t, ..)) = merit(p, &trial, mu) {
                    let armijo = phi_t <= phi + 1e-4 * t * slope;
                    let flat = phi_t <= phi + noise && grad_t.amax() < 0.5 * gnorm;
                    if armijo || flat {
                        z = trial;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if mu <= MU_FINAL {
            break;
        }
        mu = (mu * MU_FACTOR).max(MU_FINAL);
    }
    let s = &p.h - &p.g * &z;
    let (_, grad, _) = (p.objective)(&z).ok_or_else(|| Error::Solver("final point outside domain".into()))?;
    let lambda = refit_multipliers(p, &s, &grad, mu);
    let resid = &grad + p.g.transpose() * &lambda;
    let complementarity = lambda
        .iter()
        .zip(s.iter())
        .fold(0.0f64, |m, (l, s)| m.max((l * s).abs()));
    Ok(Outcome {
        stationarity: resid.amax(),
        complementarity,
        z,
        multipliers: lambda,
    })
}

/// The slacks of nearly active constraints carry too much rounding for
/// `mu / s` to be an accurate multiplier; those multipliers are refitted by
/// least squares on the stationarity condition.
fn refit_multipliers(p: &Problem, s: &DVector<f64>, grad: &DVector<f64>, mu: f64) -> DVector<f64> {
    let mut lambda = s.map(|v| mu / v);
    let active: Vec<usize> = (0..s.len()).filter(|&i| lambda[i] > 1e-6).collect();
    if active.is_empty() {
        return lambda;
    }
    let mut rhs = -grad.clone();
    for i in 0..s.len() {
        if !active.contains(&i) {
            rhs -= p.g.row(i).transpose() * lambda[i];
        }
    }
    let ga = DMatrix::from_fn(p.g.ncols(), active.len(), |r, c| p.g[(active[c], r)]);
    if let Ok(fit) = ga.svd(true, true).solve(&rhs, 1e-12) {
        for (k, &i) in active.iter().enumerate() {
            lambda[i] = fit[k].max(0.0);
        }
    }
    lambda
}
