//! Central-difference verification of reverse-mode gradients.
//!
//! The caller computes analytic gradients once, then hands this module the
//! parameter tensors plus a deterministic loss closure. Every coordinate is
//! perturbed by ±h and the finite-difference slope is compared against the
//! analytic value under a relative error that tolerates near-zero gradients.

use super::tensor::TensorData;
use super::NumError;

/// Step size used by the acceptance checks; appropriate for f64.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst coordinate found by [`grad_check`].
#[derive(Debug, Clone)]
pub struct WorstCoord {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Outcome of a full gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<WorstCoord>,
}

impl GradCheckReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative error with an absolute floor, so coordinates where both slopes
/// are tiny do not blow up the ratio.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares `analytic` against central differences of `loss_fn` at `params`.
///
/// `loss_fn` must be a pure function of the parameter slice: any randomness
/// (dropout masks, data order) has to be fixed outside the closure.
pub fn grad_check<F>(
    params: &[TensorData<f64>],
    analytic: &[TensorData<f64>],
    mut loss_fn: F,
    h: f64,
) -> Result<GradCheckReport, NumError>
where
    F: FnMut(&[TensorData<f64>]) -> Result<f64, NumError>,
{
    if params.len() != analytic.len() {
        return Err(NumError::InvalidArg {
            op: "grad_check",
            message: format!(
                "{} params but {} analytic gradients",
                params.len(),
                analytic.len()
            ),
        });
    }
    for (p, a) in params.iter().zip(analytic) {
        if p.shape() != a.shape() {
            return Err(NumError::ShapeMismatch {
                op: "grad_check",
                lhs: p.shape().to_vec(),
                rhs: a.shape().to_vec(),
            });
        }
    }
    let mut working = params.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for pi in 0..params.len() {
        for j in 0..params[pi].len() {
            let orig = working[pi].data()[j];
            working[pi].data_mut()[j] = orig + h;
            let plus = loss_fn(&working)?;
            working[pi].data_mut()[j] = orig - h;
            let minus = loss_fn(&working)?;
            working[pi].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let an = analytic[pi].data()[j];
            let err = rel_err(an, numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some(WorstCoord {
                    param: pi,
                    index: j,
                    analytic: an,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
