use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_symmetric, invalid, NetworkError};

/// A random correlation structure and the covariance built from it.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationDraw {
    /// Symmetric, unit diagonal, off-diagonal entries in `(-1, 1)`.
    pub raw_correlation: DMatrix<f64>,
    /// PSD covariance whose diagonal equals the prescribed variances.
    pub covariance: DMatrix<f64>,
}

/// Draws pairwise correlations i.i.d. from `U(-1, 1)`, scales them by the
/// standard deviations and repairs the result with [`nearest_psd`].
pub fn generate_covariance(variances: &[f64], seed: u64) -> Result<CorrelationDraw, NetworkError> {
    if let Some(i) = variances.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid(format!(
            "variance {i} is {} (must be finite and >= 0)",
            variances[i]
        )));
    }
    let n = variances.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corr = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = loop {
                let c: f64 = rng.gen_range(-1.0..1.0);
                if c != -1.0 {
                    break c;
                }
            };
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let raw_cov = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            variances[i]
        } else {
            corr[(i, j)] * sd[i] * sd[j]
        }
    });
    let covariance = nearest_psd(&raw_cov)?;
    Ok(CorrelationDraw {
        raw_correlation: corr,
        covariance,
    })
}

/// Clips negative eigenvalues to zero, then rescales rows and columns so the
/// diagonal matches the input diagonal again.
///
/// One pass only: the rescaling is a congruence, so the result stays PSD up
/// to rounding. Rows whose input diagonal is zero come back exactly zero.
pub fn nearest_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, NetworkError> {
    if !m.is_square() {
        return Err(invalid(format!("matrix is {:?}, not square", m.shape())));
    }
    check_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;

    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let target = m[(i, i)];
            let got = rebuilt[(i, i)];
            if target <= 0.0 || got <= 0.0 {
                0.0
            } else {
                (target / got).sqrt()
            }
        })
        .collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| rebuilt[(i, j)] * (scale[i] * scale[j]));
    for i in 0..n {
        if scale[i] > 0.0 {
            out[(i, i)] = m[(i, i)];
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` when empty).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
