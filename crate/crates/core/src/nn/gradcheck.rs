//! Central finite-difference gradient checking.

use crate::error::{check_len, Error, Result};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error used throughout: `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Central-difference derivative of `loss` along coordinate `index`.
pub fn numeric_partial<F>(loss: &mut F, params: &[f64], index: usize, step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = params.to_vec();
    probe[index] = params[index] + step;
    let plus = finite(loss(&probe))?;
    probe[index] = params[index] - step;
    let minus = finite(loss(&probe))?;
    Ok((plus - minus) / (2.0 * step))
}

/// Max relative error between `analytic` and central differences of `loss`
/// over the listed coordinates (all coordinates when `coords` is `None`).
pub fn grad_check_coords<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    coords: Option<&[usize]>,
    step: f64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    check_len("grad_check", params.len(), analytic.len())?;
    finite(loss(params))?;
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let mut worst = 0.0f64;
    for &i in coords {
        let numeric = numeric_partial(&mut loss, params, i, step)?;
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Checks a loss that reports its own analytic gradient, over every coordinate.
pub fn grad_check<F>(mut loss_and_grad: F, params: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (value, analytic) = loss_and_grad(params);
    finite(value)?;
    grad_check_coords(|p| loss_and_grad(p).0, params, &analytic, None, FD_STEP)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context: "grad_check loss",
            detail: v.to_string(),
        })
    }
}
