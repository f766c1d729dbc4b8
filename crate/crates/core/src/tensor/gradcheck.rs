use crate::error::{Error, Result};

/// Outcome of one finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GradReport {
    /// Largest relative error over all parameters.
    pub max_rel_error: f64,
    /// Central-difference step that was used.
    pub step: f64,
    pub pass: bool,
    /// Parameter index with the largest error, if any parameter was checked.
    pub worst_index: Option<usize>,
}

/// Compares the analytic gradient of `loss_fn` against central finite
/// differences at `theta`.
///
/// `loss_fn` maps a flat parameter vector to the loss value and its analytic
/// gradient. The error is measured per coordinate relative to the largest
/// gradient magnitude in either vector, `max(‖analytic‖∞, ‖numeric‖∞, 1e-8)`:
/// central differences carry an absolute roundoff floor of roughly
/// `ε·|loss|/(2·step)` regardless of how small a coordinate's true gradient
/// is, so coordinates many orders below the dominant one cannot be certified
/// individually — while any error at the gradient's own scale is still
/// caught. An empty parameter vector passes trivially.
pub fn grad_check<F>(loss_fn: F, theta: &[f64], step: f64, tol: f64) -> Result<GradReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be positive and finite, got {step}"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Parameter(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    let (_, analytic) = loss_fn(theta)?;
    if analytic.len() != theta.len() {
        return Err(Error::Contract(format!(
            "loss_fn returned {} gradient entries for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }

    let mut work = theta.to_vec();
    let mut numeric = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        work[i] = theta[i] + step;
        let (f_plus, _) = loss_fn(&work)?;
        work[i] = theta[i] - step;
        let (f_minus, _) = loss_fn(&work)?;
        work[i] = theta[i];
        numeric.push((f_plus - f_minus) / (2.0 * step));
    }

    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(1e-8f64, |acc, v| acc.max(v.abs()));
    let mut max_rel_error = 0.0f64;
    let mut worst_index = None;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / scale;
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = Some(i);
        }
    }
    Ok(GradReport {
        max_rel_error,
        step,
        pass: max_rel_error <= tol,
        worst_index,
    })
}
