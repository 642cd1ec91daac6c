//! Central finite-difference verification of tape gradients.

use crate::tape::{Tape, TensorId};
use crate::tensor::{Tensor, TensorError};

/// Compares the tape's analytic gradient against central finite
/// differences for a scalar function of the given parameters.
///
/// `build` reconstructs the function on a fresh tape each evaluation; it
/// receives parameter ids in the same order as `params`. Returns the
/// maximum over all parameter coordinates of
/// `|analytic - central| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(
    params: &[(String, Tensor)],
    step: f64,
    build: F,
) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId, TensorError>,
{
    if step <= 0.0 {
        return Err(TensorError::Domain {
            op: "finite-diff-check",
            detail: format!("step must be positive, got {step}"),
        });
    }

    let analytic = {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = params
            .iter()
            .map(|(name, value)| tape.param(name.clone(), value.clone()))
            .collect();
        let loss = build(&mut tape, &ids)?;
        let grads = tape.backward(loss)?;
        params
            .iter()
            .map(|(name, _)| grads.by_name(name).expect("registered param").clone())
            .collect::<Vec<_>>()
    };

    let eval = |point: &[(String, Tensor)]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = point
            .iter()
            .map(|(name, value)| tape.param(name.clone(), value.clone()))
            .collect();
        let loss = build(&mut tape, &ids)?;
        let value = tape.value(loss);
        if !value.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: value.shape().to_vec(),
            });
        }
        Ok(value.item())
    };

    let mut worst = 0.0f64;
    let mut point = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        for ci in 0..grad.numel() {
            let orig = point[pi].1.data()[ci];
            point[pi].1.data_mut()[ci] = orig + step;
            let plus = eval(&point)?;
            point[pi].1.data_mut()[ci] = orig - step;
            let minus = eval(&point)?;
            point[pi].1.data_mut()[ci] = orig;

            let central = (plus - minus) / (2.0 * step);
            let a = grad.data()[ci];
            let err = (a - central).abs() / 1.0f64.max(a.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
