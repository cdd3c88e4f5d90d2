//! Dense helpers shared by the spectrum, chart and PCA code.

use nalgebra::{DMatrix, DVector};

/// Subtracts the column means, returning `(mean, centered)`.
pub fn center_rows(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let rows = m.nrows();
    let mean: Vec<f64> = m
        .column_iter()
        .map(|c| c.iter().sum::<f64>() / rows as f64)
        .collect();
    let mut centered = m.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (mean, centered)
}

/// Tall inputs are reduced to their `R` factor first; the singular values
/// and right singular vectors are unchanged but the SVD runs on `D x D`.
fn reduce(m: DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() > 2 * m.ncols() {
        m.qr().r()
    } else {
        m
    }
}

/// Singular values in descending order, length `min(rows, cols)`.
pub fn singular_values(m: DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = reduce(m).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Right singular vectors as rows, paired with singular values and sorted
/// by descending singular value. Each row is sign-normalized.
pub fn right_singular_pairs(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = reduce(m).svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut pairs: Vec<(f64, Vec<f64>)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut row: Vec<f64> = v_t.row(i).iter().copied().collect();
            normalize_sign(&mut row);
            (s, row)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Flips `v` so its largest-magnitude coordinate is positive. Among equal
/// magnitudes the first index wins.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    // no negative zeros in serialized bases
    v.iter_mut().for_each(|x| *x += 0.0);
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Least-squares `y ~ a x^2 + b x + c`, returned as `[a, b, c]`.
///
/// The fit is done on `x / scale` to keep the Vandermonde system well
/// conditioned and mapped back afterwards.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> [f64; 3] {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let v = DMatrix::from_fn(x.len(), 3, |i, j| (x[i] / scale).powi(2 - j as i32));
    let rhs = DVector::from_column_slice(y);
    let coef = v
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(3));
    [coef[0] / (scale * scale), coef[1] / scale, coef[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!((ols_slope(&x, &y) - 3.0).abs() < 1e-12);
        assert_eq!(ols_slope(&[2.0, 2.0], &[1.0, 5.0]), 0.0);
    }

    #[test]
    fn quadratic_recovers_coefficients() {
        let x: Vec<f64> = (0..10).map(|i| 0.3 + 0.2 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v * v - 1.5 * v + 2.0).collect();
        let [a, b, c] = quadratic_fit(&x, &y);
        assert!((a - 0.7).abs() < 1e-10 && (b + 1.5).abs() < 1e-10 && (c - 2.0).abs() < 1e-10);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        normalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }

    #[test]
    fn tall_and_wide_agree() {
        let m = DMatrix::from_fn(40, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 - (j as f64).cos());
        let tall = singular_values(m.clone());
        let direct: Vec<f64> = {
            let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        };
        for (a, b) in tall.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
        let wide = singular_values(m.transpose());
        for (a, b) in wide.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
