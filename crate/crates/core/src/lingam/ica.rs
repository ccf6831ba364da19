//! Symmetric fixed-point FastICA with the `tanh` contrast.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcaResult<T: Real> {
    /// Full unmixing `W = rotation * whitener`, applied to centered data.
    pub unmixing: DMatrix<T>,
    pub whitener: DMatrix<T>,
    /// Orthonormal unmixing in whitened coordinates.
    pub rotation: DMatrix<T>,
    pub mean: DVector<T>,
    pub n_iterations: usize,
    pub converged: bool,
    /// Set when every recovered source has excess kurtosis within 0.1 of zero.
    pub gaussian_warning: bool,
}

pub fn fastica<T: Real, R: Rng + ?Sized>(data: &DMatrix<T>, rng: &mut R) -> Result<IcaResult<T>> {
    fastica_with(data, rng, &IcaOptions::default())
}

pub fn fastica_with<T: Real, R: Rng + ?Sized>(
    data: &DMatrix<T>,
    rng: &mut R,
    opts: &IcaOptions,
) -> Result<IcaResult<T>> {
    let (n, k) = data.shape();
    if n == 0 {
        return Err(Error::InvalidArgument("fastica: no signals".into()));
    }
    if k <= n {
        return Err(Error::InsufficientData {
            samples: k,
            needed: n,
        });
    }
    let kf = T::from_usize(k).expect("sample count fits scalar");
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centered * centered.transpose() / kf;
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(max_ev > T::zero()) || min_ev <= max_ev * T::lit(1e-12) {
        return Err(Error::Degenerate(format!(
            "covariance is rank deficient (eigenvalues {min_ev} .. {max_ev})"
        )));
    }
    let inv_sqrt = eig.eigenvalues.map(|d| T::one() / d.sqrt());
    let whitener = DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let z = &whitener * &centered;

    let tol = T::lit(opts.tol);
    let mut total_iter = 0;
    let mut last_rotation = None;
    for _ in 0..opts.restarts.max(1) {
        let init = DMatrix::from_fn(n, n, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            T::lit(v)
        });
        let mut w = symmetric_decorrelation(&init)?;
        let mut converged = false;
        for _ in 0..opts.max_iter {
            total_iter += 1;
            let wz = &w * &z;
            let g = wz.map(|u| u.tanh());
            let g_prime_mean = DVector::from_iterator(
                n,
                g.row_iter()
                    .map(|row| row.iter().fold(T::zero(), |s, &t| s + T::one() - t * t) / kf),
            );
            let mut next = &g * z.transpose() / kf;
            for i in 0..n {
                let scale = g_prime_mean[i];
                for c in 0..n {
                    next[(i, c)] -= scale * w[(i, c)];
                }
            }
            let next = symmetric_decorrelation(&next)?;
            let overlap = &next * w.transpose();
            let lim = (0..n).fold(T::zero(), |m, i| {
                m.max((overlap[(i, i)].abs() - T::one()).abs())
            });
            w = next;
            if lim < tol {
                converged = true;
                break;
            }
        }
        if converged {
            return Ok(finish(w, whitener, mean, &z, total_iter, true));
        }
        last_rotation = Some(w);
        log::debug!("fastica restart after {} iterations", opts.max_iter);
    }
    // Near-Gaussian data never settles; hand it back flagged instead of failing.
    let rotation = last_rotation.expect("at least one restart ran");
    let res = finish(rotation, whitener, mean, &z, total_iter, false);
    if res.gaussian_warning {
        return Ok(res);
    }
    Err(Error::NonConvergence {
        what: "fastica",
        residual: opts.tol,
    })
}

fn finish<T: Real>(
    rotation: DMatrix<T>,
    whitener: DMatrix<T>,
    mean: DVector<T>,
    z: &DMatrix<T>,
    n_iterations: usize,
    converged: bool,
) -> IcaResult<T> {
    let sources = &rotation * z;
    let gaussian_warning = sources
        .row_iter()
        .all(|row| excess_kurtosis(row.iter().copied()).abs() < 0.1);
    if gaussian_warning {
        log::warn!(
            "fastica: all recovered sources look Gaussian; the causal order is not identifiable"
        );
    }
    IcaResult {
        unmixing: &rotation * &whitener,
        whitener,
        rotation,
        mean,
        n_iterations,
        converged,
        gaussian_warning,
    }
}

/// `(W W^T)^{-1/2} W`.
pub fn symmetric_decorrelation<T: Real>(w: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eig = SymmetricEigen::new(w * w.transpose());
    if eig.eigenvalues.iter().any(|&d| !(d > T::zero())) {
        return Err(Error::Numerical(
            "singular matrix in symmetric decorrelation".into(),
        ));
    }
    let d = eig.eigenvalues.map(|d| T::one() / d.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose() * w)
}

pub fn excess_kurtosis<T: Real>(values: impl Iterator<Item = T> + Clone) -> f64 {
    let v: Vec<f64> = values.map(|x| x.as_f64()).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn whitened_rotation_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = DMatrix::from_fn(3, 2000, |_, _| rng.random_range(-1.0..1.0f64));
        let mix = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, -0.3, 1.0, 0.1, 0.4, 0.0, 1.0]);
        let res = fastica(&(mix * data), &mut rng).unwrap();
        let gram = &res.rotation * res.rotation.transpose();
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-6);
        assert!(res.converged);
    }

    #[test]
    fn rank_deficient_input_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let row = DMatrix::from_fn(1, 500, |_, _| rng.random_range(-1.0..1.0f64));
        let data = DMatrix::from_fn(2, 500, |_, c| row[(0, c)]);
        assert!(matches!(
            fastica(&data, &mut rng),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn gaussian_sources_raise_warning() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = DMatrix::from_fn(2, 50_000, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let opts = IcaOptions {
            max_iter: 50,
            restarts: 1,
            ..IcaOptions::default()
        };
        let res = fastica_with(&data, &mut rng, &opts).unwrap();
        assert!(res.gaussian_warning);
    }
}
