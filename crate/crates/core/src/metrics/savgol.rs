use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// How the first and last `window / 2` samples are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeMode {
    /// Evaluate the polynomial fitted to the first (last) full window.
    /// Reproduces any polynomial of degree `<= order` exactly.
    #[default]
    Interp,
    /// Reflect the series about its end samples (`x[-k] = x[k]`) and filter
    /// the padded series.
    Mirror,
}

fn validate(len: usize, window: usize, order: usize) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(Error::config("window", format!("must be odd, got {window}")));
    }
    if order >= window {
        return Err(Error::config("order", format!("must be below the window ({window}), got {order}")));
    }
    if len < window {
        return Err(Error::config("window", format!("series of length {len} is shorter than the window {window}")));
    }
    Ok(())
}

/// Vandermonde matrix over positions `offsets`, columns `t^0 .. t^order`.
fn vandermonde(offsets: impl Iterator<Item = f64>, order: usize) -> DMatrix<f64> {
    let rows: Vec<f64> = offsets.collect();
    DMatrix::from_fn(rows.len(), order + 1, |r, p| rows[r].powi(p as i32))
}

/// Least-squares polynomial coefficients for samples at offsets
/// `-half..=half`.
fn fit(samples: &[f64], order: usize) -> DVector<f64> {
    let half = (samples.len() / 2) as f64;
    let a = vandermonde((0..samples.len()).map(|k| k as f64 - half), order);
    let y = DVector::from_column_slice(samples);
    a.svd(true, true)
        .solve(&y, 1e-12)
        .expect("svd with both factors computed")
}

fn eval_poly(coeffs: &DVector<f64>, t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Convolution weights producing the fitted value at the window centre.
fn centre_weights(window: usize, order: usize) -> Vec<f64> {
    (0..window)
        .map(|k| {
            let mut unit = vec![0.0; window];
            unit[k] = 1.0;
            fit(&unit, order)[0]
        })
        .collect()
}

/// Savitzky-Golay smoothing with [`EdgeMode::Interp`] edges.
pub fn savitzky_golay(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    savitzky_golay_with(series, window, order, EdgeMode::Interp)
}

pub fn savitzky_golay_with(series: &[f64], window: usize, order: usize, edges: EdgeMode) -> Result<Vec<f64>> {
    validate(series.len(), window, order)?;
    let half = window / 2;
    let weights = centre_weights(window, order);
    let smooth_at = |padded: &[f64], centre: usize| -> f64 {
        weights.iter().zip(&padded[centre - half..=centre + half]).map(|(w, x)| w * x).sum()
    };
    let n = series.len();
    match edges {
        EdgeMode::Interp => {
            let mut out: Vec<f64> = Vec::with_capacity(n);
            let head = fit(&series[..window], order);
            out.extend((0..half).map(|i| eval_poly(&head, i as f64 - half as f64)));
            out.extend((half..n - half).map(|i| smooth_at(series, i)));
            let tail = fit(&series[n - window..], order);
            out.extend((n - half..n).map(|i| eval_poly(&tail, (i + window - n) as f64 - half as f64)));
            Ok(out)
        }
        EdgeMode::Mirror => {
            if n < half + 1 {
                return Err(Error::config("window", "series too short to mirror"));
            }
            let mut padded = Vec::with_capacity(n + 2 * half);
            padded.extend((1..=half).rev().map(|k| series[k]));
            padded.extend_from_slice(series);
            padded.extend((1..=half).map(|k| series[n - 1 - k]));
            Ok((0..n).map(|i| smooth_at(&padded, i + half)).collect())
        }
    }
}
