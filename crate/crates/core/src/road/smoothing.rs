//! Savitzky-Golay smoothing of waypoint sequences.
//!
//! Interior samples use the usual fixed convolution kernel. Near the ends the
//! window cannot be centered, so each edge sample is evaluated from a
//! least-squares polynomial over the first (or last) `window` samples that is
//! constrained to pass through the end sample. This keeps both endpoints fixed
//! and still reproduces any polynomial of degree `≤ order` exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{PlanError, Result};

fn check(len: usize, window: usize, order: usize) -> Result<()> {
    if window.is_multiple_of(2) || window < 3 {
        return Err(PlanError::BadFilterParams(format!(
            "window {window} must be odd and >= 3"
        )));
    }
    if order >= window {
        return Err(PlanError::BadFilterParams(format!(
            "order {order} must be below window {window}"
        )));
    }
    if len < window {
        return Err(PlanError::BadFilterParams(format!(
            "{len} samples are fewer than the window {window}"
        )));
    }
    Ok(())
}

/// Least-squares polynomial fit weights: row `e` of the result gives the
/// fitted value at abscissa `eval[e]` as a linear combination of the samples
/// at `abscissae`. When `pin` is set, the fit is forced through that sample.
fn fit_weights(abscissae: &[f64], order: usize, eval: &[f64], pin: Option<usize>) -> DMatrix<f64> {
    let m = abscissae.len();
    let vander = |t: f64| (0..=order).map(move |p| t.powi(p as i32));
    let v = DMatrix::from_fn(m, order + 1, |r, c| abscissae[r].powi(c as i32));
    let e = DMatrix::from_fn(eval.len(), order + 1, |r, c| eval[r].powi(c as i32));
    let vtv = v.transpose() * &v;
    let coeffs = match pin {
        None => vtv
            .clone()
            .lu()
            .solve(&v.transpose())
            .expect("Vandermonde normal matrix is regular"),
        Some(k) => {
            // Equality-constrained least squares via its KKT system.
            let n = order + 1;
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            kkt.view_mut((0, 0), (n, n)).copy_from(&(&vtv * 2.0));
            for (c, val) in vander(abscissae[k]).enumerate() {
                kkt[(n, c)] = val;
                kkt[(c, n)] = val;
            }
            let mut rhs = DMatrix::zeros(n + 1, m);
            rhs.view_mut((0, 0), (n, m)).copy_from(&(v.transpose() * 2.0));
            rhs[(n, k)] = 1.0;
            let sol = kkt.lu().solve(&rhs).expect("pinned fit system is regular");
            sol.rows(0, n).into_owned()
        }
    };
    e * coeffs
}

/// Filters one coordinate sequence.
pub fn savgol_filter(values: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    check(values.len(), window, order)?;
    let half = window / 2;
    let n = values.len();
    let offsets: Vec<f64> = (0..window).map(|k| k as f64 - half as f64).collect();
    let centre = fit_weights(&offsets, order, &[0.0], None);

    let mut out = values.to_vec();
    for c in half..n - half {
        let win = DVector::from_column_slice(&values[c - half..=c + half]);
        out[c] = (centre.row(0) * win)[0];
    }

    let head_x: Vec<f64> = (0..window).map(|k| k as f64).collect();
    let head_eval: Vec<f64> = (0..half).map(|k| k as f64).collect();
    let head = fit_weights(&head_x, order, &head_eval, Some(0));
    let win = DVector::from_column_slice(&values[..window]);
    let fitted = &head * win;
    out[..half].copy_from_slice(fitted.as_slice());

    let tail_eval: Vec<f64> = (window - half..window).map(|k| k as f64).collect();
    let tail = fit_weights(&head_x, order, &tail_eval, Some(window - 1));
    let win = DVector::from_column_slice(&values[n - window..]);
    let fitted = &tail * win;
    out[n - half..].copy_from_slice(fitted.as_slice());

    out[0] = values[0];
    out[n - 1] = values[n - 1];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics() {
        let xs: Vec<f64> = (0..30)
            .map(|k| {
                let t = k as f64 * 0.3;
                1.0 - 2.0 * t + 0.5 * t * t - 0.1 * t * t * t
            })
            .collect();
        let out = savgol_filter(&xs, 9, 3).unwrap();
        for (a, b) in xs.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn keeps_endpoints() {
        let xs: Vec<f64> = (0..20).map(|k| ((k * 7919) % 13) as f64).collect();
        let out = savgol_filter(&xs, 9, 3).unwrap();
        assert_eq!(out[0], xs[0]);
        assert_eq!(out[19], xs[19]);
    }

    #[test]
    fn classic_five_point_quadratic_kernel() {
        // Standard tabulated smoothing coefficients (-3, 12, 17, 12, -3) / 35.
        let mut xs = vec![0.0; 11];
        xs[5] = 35.0;
        let out = savgol_filter(&xs, 5, 2).unwrap();
        assert!((out[3] + 3.0).abs() < 1e-12);
        assert!((out[4] - 12.0).abs() < 1e-12);
        assert!((out[5] - 17.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let xs = vec![0.0; 10];
        assert!(savgol_filter(&xs, 8, 3).is_err());
        assert!(savgol_filter(&xs, 5, 5).is_err());
        assert!(savgol_filter(&xs, 11, 3).is_err());
    }
}
