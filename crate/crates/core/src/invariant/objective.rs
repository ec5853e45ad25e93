//! Risks, penalties, the combined objective, and its analytic gradient.
//!
//! With squared loss and the dummy classifier at 1.0, the per-environment
//! penalty gradient has the closed empirical form
//! `g = (2/n) sum_i (phi.x_i - y_i)(phi.x_i)` and, under an identity
//! feature covariance, the population value
//! `2 |sum_i (phi_i^2 - w_i phi_i)|`.

use ndarray::Array1;

use super::{PenaltyForm, Predictor};
use crate::envgen::{Dataset, EnvWeights};
use crate::error::{Error, Result};
use crate::exec::map_indexed;

fn check_dim(pred: &Predictor, ds: &Dataset) -> Result<()> {
    if pred.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: pred.dim(),
            got: ds.dim(),
            context: "predictor vs dataset features",
        });
    }
    Ok(())
}

/// Mean squared error of the predictor on one environment.
pub fn mse_risk(pred: &Predictor, ds: &Dataset) -> Result<f64> {
    check_dim(pred, ds)?;
    Ok(risk_value(pred, ds))
}

fn risk_value(pred: &Predictor, ds: &Dataset) -> f64 {
    let residual = pred.predict(ds.x()) - ds.y();
    residual.dot(&residual) / ds.n() as f64
}

/// Scalar gradient of the empirical risk in the dummy classifier at 1.0.
fn penalty_scalar(pred: &Predictor, ds: &Dataset) -> f64 {
    let fitted = pred.predict(ds.x());
    let residual = &fitted - ds.y();
    2.0 * residual.dot(&fitted) / ds.n() as f64
}

fn apply_form(g: f64, form: PenaltyForm) -> f64 {
    match form {
        PenaltyForm::Norm => g.abs(),
        PenaltyForm::SquaredNorm => g * g,
    }
}

/// Empirical invariance penalty of one environment: `|g|` or `g^2`.
pub fn grad_penalty_empirical(pred: &Predictor, ds: &Dataset, form: PenaltyForm) -> Result<f64> {
    check_dim(pred, ds)?;
    Ok(apply_form(penalty_scalar(pred, ds), form))
}

/// Population penalty under identity feature covariance:
/// `2 |sum_i (phi_i^2 - w_i phi_i)|`.
pub fn grad_penalty_closed_form(phi: &[f64], env: &EnvWeights) -> Result<f64> {
    if phi.len() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: phi.len(),
            context: "phi vs environment weights",
        });
    }
    let s: f64 = phi
        .iter()
        .zip(env.w.iter())
        .map(|(p, w)| p * p - w * p)
        .sum();
    Ok(2.0 * s.abs())
}

fn validate_envs(pred: &Predictor, envs: &[&Dataset]) -> Result<()> {
    for ds in envs {
        check_dim(pred, ds)?;
    }
    Ok(())
}

/// `sum_{E1} R^e + lambda * sum_{E2} pen^e`. Per-environment terms are
/// evaluated in parallel and reduced in input order, so the value is
/// independent of thread count.
pub fn objective(
    pred: &Predictor,
    risk_envs: &[&Dataset],
    penalty_envs: &[&Dataset],
    lambda: f64,
    form: PenaltyForm,
) -> Result<f64> {
    if risk_envs.is_empty() {
        return Err(Error::EmptyInput("objective needs at least one risk environment"));
    }
    validate_envs(pred, risk_envs)?;
    validate_envs(pred, penalty_envs)?;
    let risks = map_indexed(risk_envs.len(), |i| risk_value(pred, risk_envs[i]));
    let penalties = map_indexed(penalty_envs.len(), |i| {
        apply_form(penalty_scalar(pred, penalty_envs[i]), form)
    });
    Ok(risks.iter().sum::<f64>() + lambda * penalties.iter().sum::<f64>())
}

fn risk_gradient(pred: &Predictor, ds: &Dataset) -> Array1<f64> {
    let residual = pred.predict(ds.x()) - ds.y();
    ds.x().t().dot(&residual) * (2.0 / ds.n() as f64)
}

/// d pen / d phi. For the scalar `g` above,
/// `dg/dphi = (2/n) X^T (2 X phi - y)`; the form contributes the outer
/// chain factor (`2g` for the square, `sign(g)` for the magnitude, with
/// the zero subgradient at `g = 0`).
fn penalty_gradient(pred: &Predictor, ds: &Dataset, form: PenaltyForm) -> Array1<f64> {
    let fitted = pred.predict(ds.x());
    let residual = &fitted - ds.y();
    let g = 2.0 * residual.dot(&fitted) / ds.n() as f64;
    let inner = ds.x().t().dot(&(&fitted + &residual)) * (2.0 / ds.n() as f64);
    inner * penalty_chain(g, form)
}

fn penalty_chain(g: f64, form: PenaltyForm) -> f64 {
    match form {
        PenaltyForm::SquaredNorm => 2.0 * g,
        PenaltyForm::Norm => {
            if g == 0.0 {
                0.0
            } else {
                g.signum()
            }
        }
    }
}

/// Objective value and gradient in one pass. Each environment is swept
/// row by row without temporaries, so this is the training loop's hot
/// path; it agrees with [`objective`] / [`grad_objective`] up to
/// floating-point accumulation order.
pub fn objective_and_grad(
    pred: &Predictor,
    risk_envs: &[&Dataset],
    penalty_envs: &[&Dataset],
    lambda: f64,
    form: PenaltyForm,
) -> Result<(f64, Array1<f64>)> {
    if risk_envs.is_empty() {
        return Err(Error::EmptyInput("objective needs at least one risk environment"));
    }
    validate_envs(pred, risk_envs)?;
    validate_envs(pred, penalty_envs)?;
    let phi = pred.phi().as_slice().expect("contiguous predictor");
    let c = phi.len();

    let risk_terms = map_indexed(risk_envs.len(), |i| {
        let ds = risk_envs[i];
        let n = ds.n() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; c];
        for (row, &yi) in ds.x().outer_iter().zip(ds.y().iter()) {
            let row = row.to_slice().expect("contiguous row");
            let fitted: f64 = row.iter().zip(phi).map(|(x, p)| x * p).sum();
            let residual = fitted - yi;
            value += residual * residual;
            for (g, &xij) in grad.iter_mut().zip(row) {
                *g += xij * residual;
            }
        }
        for g in &mut grad {
            *g *= 2.0 / n;
        }
        (value / n, grad)
    });
    let penalty_terms = map_indexed(penalty_envs.len(), |i| {
        let ds = penalty_envs[i];
        let n = ds.n() as f64;
        let mut g_sum = 0.0;
        let mut inner = vec![0.0; c];
        for (row, &yi) in ds.x().outer_iter().zip(ds.y().iter()) {
            let row = row.to_slice().expect("contiguous row");
            let fitted: f64 = row.iter().zip(phi).map(|(x, p)| x * p).sum();
            let residual = fitted - yi;
            g_sum += residual * fitted;
            let weight = fitted + residual;
            for (acc, &xij) in inner.iter_mut().zip(row) {
                *acc += xij * weight;
            }
        }
        let g = 2.0 * g_sum / n;
        let chain = penalty_chain(g, form) * 2.0 / n;
        for acc in &mut inner {
            *acc *= chain;
        }
        (apply_form(g, form), inner)
    });

    let mut value = 0.0;
    let mut grad = Array1::zeros(c);
    for (v, g) in &risk_terms {
        value += v;
        for (total, gi) in grad.iter_mut().zip(g) {
            *total += gi;
        }
    }
    let mut penalty_value = 0.0;
    for (v, g) in &penalty_terms {
        penalty_value += v;
        for (total, gi) in grad.iter_mut().zip(g) {
            *total += lambda * gi;
        }
    }
    Ok((value + lambda * penalty_value, grad))
}

/// Analytic gradient of [`objective`] in `phi`.
pub fn grad_objective(
    pred: &Predictor,
    risk_envs: &[&Dataset],
    penalty_envs: &[&Dataset],
    lambda: f64,
    form: PenaltyForm,
) -> Result<Array1<f64>> {
    if risk_envs.is_empty() {
        return Err(Error::EmptyInput("objective needs at least one risk environment"));
    }
    validate_envs(pred, risk_envs)?;
    validate_envs(pred, penalty_envs)?;
    let risk_grads = map_indexed(risk_envs.len(), |i| risk_gradient(pred, risk_envs[i]));
    let pen_grads = map_indexed(penalty_envs.len(), |i| {
        penalty_gradient(pred, penalty_envs[i], form)
    });
    let mut total = Array1::zeros(pred.dim());
    for g in &risk_grads {
        total += g;
    }
    for g in &pen_grads {
        total.scaled_add(lambda, g);
    }
    Ok(total)
}
