//! Lagged correlation matrix, empirical first-layer Fisher information and a
//! linear-Gaussian Cramér–Rao check.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::{Distribution, Uniform};
use rand_distr::Normal;

use crate::error::{check_len, Error, Result};
use crate::nnet::{self, Network};
use crate::rng::{self, Stream};

/// Whether columns are mean-centered before the outer products.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Centering {
    #[default]
    Centered,
    Raw,
}

/// Symmetric `2tau x 2tau` second-moment matrix of the lagged regressor.
///
/// Under the dataset column order the `u`/`u`, `u`/`y` and `y`/`y` blocks are
/// the input auto-covariance, the cross-covariance and the output
/// auto-covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    matrix: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Wraps a square matrix, symmetrizing it.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        check_len("correlation matrix", matrix.nrows(), matrix.ncols())?;
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("correlation matrix"));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix: sym })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row-major upper triangle including the diagonal, `d(d+1)/2` entries.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                out.push(self.matrix[(i, j)]);
            }
        }
        out
    }

    /// Row-major flattening of the whole matrix.
    pub fn full(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            out.extend(self.matrix.row(i).iter().copied());
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `C = (1/N) X~^T X~` over the rows of `x`, where `X~` is `x` with column
/// means removed (or `x` itself in [`Centering::Raw`] mode).
///
/// Only the upper triangle is accumulated and then mirrored, so the result is
/// exactly symmetric. Network parameters are never touched.
pub fn correlation_matrix(x: &DMatrix<f64>, centering: Centering) -> Result<CorrelationMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { len: n, lag: 1 });
    }
    let d = x.ncols();
    let mut centered = x.clone();
    if centering == Centering::Centered {
        for mut col in centered.column_iter_mut() {
            let mean = col.sum() / n as f64;
            col.add_scalar_mut(-mean);
        }
    }
    let mut c = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = centered.column(i).dot(&centered.column(j)) / n as f64;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation matrix"));
    }
    Ok(CorrelationMatrix { matrix: c })
}

/// Jacobian of the residual `y_i - f(x_i)` of sample `i` with respect to the
/// first-layer weights: `-delta_i (x_i * alpha)^T` with `delta_i` the
/// prediction's sensitivity to the first-layer pre-activation.
pub fn first_layer_jacobian(
    net: &Network,
    trace: &nnet::ForwardTrace,
    index: usize,
) -> Result<DMatrix<f64>> {
    let n = trace.batch_size();
    if index >= n {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    let delta = nnet::first_layer_sensitivity(net, trace)?;
    let d = delta.column(index);
    let x = trace.gated_input.column(index);
    Ok(-(d * x.transpose()))
}

/// Empirical Fisher information of the first-layer weights,
/// `F = (1/N) sum_i s_i s_i^T`, with `s_i` the residual-weighted Jacobian of
/// sample `i` flattened row-major (`h * 2tau` entries).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalFim {
    pub matrix: DMatrix<f64>,
    pub n_samples: usize,
}

impl EmpiricalFim {
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

pub fn empirical_fim(
    net: &Network,
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: &[f64],
) -> Result<EmpiricalFim> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyRequest);
    }
    check_len("targets", n, y.len())?;
    let (preds, trace) = nnet::forward(net, x, alpha)?;
    let delta = nnet::first_layer_sensitivity(net, &trace)?;
    let (h, d) = (net.first_layer_width(), net.input_dim());
    let p = h * d;
    let mut scores = DMatrix::zeros(p, n);
    for i in 0..n {
        let resid = y[i] - preds[i];
        let x_i = trace.gated_input.column(i);
        let mut s = scores.column_mut(i);
        for a in 0..h {
            let w = resid * delta[(a, i)];
            for j in 0..d {
                s[a * d + j] = w * x_i[j];
            }
        }
    }
    let mut f = &scores * scores.transpose();
    f /= n as f64;
    // Exact symmetry regardless of the product's summation order.
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (f[(i, j)] + f[(j, i)]);
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    Ok(EmpiricalFim {
        matrix: f,
        n_samples: n,
    })
}

/// Outcome of the replicated least-squares experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CramerRaoReport {
    /// Sample covariance of the least-squares estimates across replications.
    pub empirical_cov: DMatrix<f64>,
    /// `sigma^2 (X^T X)^{-1}`.
    pub bound: DMatrix<f64>,
    pub n_reps: usize,
    pub n_samples: usize,
}

/// Fits ordinary least squares on `n_reps` noisy replications of a fixed
/// linear-Gaussian design (intercept plus two uniform regressors) and
/// compares the spread of the estimates with `sigma^2 (X^T X)^{-1}`.
pub fn cramer_rao_toy(n_reps: usize, n_samples: usize, sigma: f64, seed: u64) -> Result<CramerRaoReport> {
    if n_reps < 100 {
        return Err(Error::InvalidConfig("cramer_rao_toy needs at least 100 replications".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConfig("sigma must be >= 0".into()));
    }
    const P: usize = 3;
    let beta = DVector::from_row_slice(&[0.5, -1.0, 2.0]);
    let mut rng = rng::stream(seed, Stream::Toy);
    let regressor = Uniform::new(-1.0, 1.0).map_err(|_| Error::InvalidConfig("range".into()))?;
    let x = DMatrix::from_fn(n_samples, P, |_, j| {
        if j == 0 {
            1.0
        } else {
            regressor.sample(&mut rng)
        }
    });
    let xtx = x.tr_mul(&x);
    let eig = SymmetricEigen::new(xtx.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(lo > 1e-12 * hi) {
        return Err(Error::Singular);
    }
    let xtx_inv = xtx.clone().cholesky().ok_or(Error::Singular)?.inverse();
    if xtx_inv.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let noise = Normal::new(0.0, sigma).map_err(|_| Error::InvalidConfig("sigma".into()))?;
    let clean = &x * &beta;

    let mut estimates: Vec<DVector<f64>> = Vec::with_capacity(n_reps);
    for _ in 0..n_reps {
        let y = DVector::from_fn(n_samples, |i, _| clean[i] + noise.sample(&mut rng));
        estimates.push(&xtx_inv * x.tr_mul(&y));
    }
    let mean = estimates.iter().fold(DVector::zeros(P), |acc, b| acc + b) / n_reps as f64;
    let mut cov = DMatrix::zeros(P, P);
    for b in &estimates {
        let d = b - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n_reps - 1) as f64;
    Ok(CramerRaoReport {
        empirical_cov: cov,
        bound: xtx_inv * (sigma * sigma),
        n_reps,
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Activation, Layer};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_columns_give_zero_matrix() {
        let c = correlation_matrix(&DMatrix::zeros(5, 3), Centering::Centered).unwrap();
        assert_eq!(c.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn two_sample_hand_case() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let c = correlation_matrix(&x, Centering::Centered).unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn raw_mode_skips_centering() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let raw = correlation_matrix(&x, Centering::Raw).unwrap();
        let centered = correlation_matrix(&x, Centering::Centered).unwrap();
        assert_eq!(raw.matrix()[(0, 0)], 5.0);
        assert_eq!(centered.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn needs_two_samples() {
        assert!(correlation_matrix(&DMatrix::zeros(1, 3), Centering::Centered).is_err());
    }

    #[test]
    fn independent_noise_is_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(100_000, 4, |_, _| normal.sample(&mut rng));
        let c = correlation_matrix(&x, Centering::Centered).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((c.matrix()[(i, j)] - target).abs() < 0.02);
            }
        }
    }

    #[test]
    fn flattenings() {
        let c = CorrelationMatrix::from_matrix(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 2.0, 3.0],
        ))
        .unwrap();
        assert_eq!(c.upper_triangle(), vec![1.0, 2.0, 3.0]);
        assert_eq!(c.full(), vec![1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn scaling_a_column_scales_its_row_and_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
        let mut scaled = x.clone();
        scaled.column_mut(1).scale_mut(3.0);
        let a = correlation_matrix(&x, Centering::Centered).unwrap();
        let b = correlation_matrix(&scaled, Centering::Centered).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let f = match (i == 1, j == 1) {
                    (true, true) => 9.0,
                    (false, false) => 1.0,
                    _ => 3.0,
                };
                let (lhs, rhs) = (b.matrix()[(i, j)], f * a.matrix()[(i, j)]);
                assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
            }
        }
    }

    fn single_unit_linear(w: &[f64], b: f64) -> Network {
        Network::from_layers(vec![Layer::new(
            DMatrix::from_row_slice(1, w.len(), w),
            DVector::from_element(1, b),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn fim_of_linear_unit_is_weighted_outer_product() {
        let net = single_unit_linear(&[0.5, -1.0], 0.2);
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let y = [0.0, 1.0, -2.0];
        let f = empirical_fim(&net, &x, &y, &[1.0, 1.0]).unwrap();
        // Hand oracle: (1/N) sum eps_i^2 x_i x_i^T.
        let mut expected = DMatrix::zeros(2, 2);
        for i in 0..3 {
            let xi = DVector::from_row_slice(&[x[(i, 0)], x[(i, 1)]]);
            let pred = 0.5 * xi[0] - xi[1] + 0.2;
            let eps = y[i] - pred;
            expected += &xi * xi.transpose() * (eps * eps);
        }
        expected /= 3.0;
        assert!((f.matrix - expected).abs().max() < 1e-14);
    }

    #[test]
    fn perfect_fit_gives_zero_fim() {
        let net = Network::new(3, &[4], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = nnet::predict(&net, &x, &[0.7; 3]).unwrap();
        let f = empirical_fim(&net, &x, &y, &[0.7; 3]).unwrap();
        assert!(f.matrix.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_sample_fim_rank_is_bounded() {
        let net = Network::new(3, &[4], 1).unwrap();
        let x = DMatrix::from_row_slice(1, 3, &[0.3, -0.2, 1.1]);
        let f = empirical_fim(&net, &x, &[2.0], &[1.0; 3]).unwrap();
        let eig = SymmetricEigen::new(f.matrix.clone()).eigenvalues;
        let big = eig.iter().filter(|v| v.abs() > 1e-10).count();
        assert!(big <= 4, "rank {big}");
    }

    #[test]
    fn jacobian_of_zero_sample_is_zero() {
        let net = Network::new(3, &[4], 1).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        let (_, trace) = nnet::forward(&net, &x, &[1.0; 3]).unwrap();
        let j = first_layer_jacobian(&net, &trace, 0).unwrap();
        assert!(j.iter().all(|v| *v == 0.0));
        let j = first_layer_jacobian(&net, &trace, 1).unwrap();
        assert_eq!(j.rank(1e-10), 1);
        assert!(matches!(
            first_layer_jacobian(&net, &trace, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn noiseless_toy_has_zero_spread() {
        let r = cramer_rao_toy(100, 50, 0.0, 1).unwrap();
        assert!(r.empirical_cov.iter().all(|v| v.abs() < 1e-24));
        assert!(cramer_rao_toy(10, 50, 1.0, 1).is_err());
    }

    #[test]
    fn toy_rejects_singular_design() {
        assert_eq!(cramer_rao_toy(100, 2, 1.0, 1), Err(Error::Singular));
    }
}
