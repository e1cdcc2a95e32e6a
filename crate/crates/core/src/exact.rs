//! Exact Gaussian likelihoods through a dense Cholesky factorisation.

use std::f64::consts::PI;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{
    cholesky_in_place, cholesky_in_place_scratch, LltError, LltRegularization,
};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par};

use crate::approx::DatasetContext;
use crate::error::{Error, Result};
use crate::fourier::{build_toeplitz, AutocovarianceSeq};
use crate::model::{PriorConfig, ThetaParams};

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Mat<f64>,
    log_det: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Mat<f64> {
        &self.lower
    }

    /// `ln |Σ| = 2 Σ ln L(i, i)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `L z = y` by forward substitution.
    pub fn solve_lower(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.dim() {
            return Err(Error::Size(format!(
                "vector of length {} against a {}x{} factor",
                y.len(),
                self.dim(),
                self.dim()
            )));
        }
        let mut z = Mat::from_fn(y.len(), 1, |i, _| y[i]);
        solve_lower_triangular_in_place(self.lower.as_ref(), z.as_mut(), Par::Seq);
        Ok((0..y.len()).map(|i| z[(i, 0)]).collect())
    }

    /// `yᵀ Σ⁻¹ y = ‖L⁻¹ y‖²`.
    pub fn quad_form(&self, y: &[f64]) -> Result<f64> {
        Ok(self.solve_lower(y)?.iter().map(|z| z * z).sum())
    }
}

/// Factorises `sigma` in place; only its lower triangle is read.
pub fn cholesky(mut sigma: Mat<f64>) -> Result<CholeskyFactor> {
    let n = sigma.nrows();
    if n == 0 || sigma.ncols() != n {
        return Err(Error::Size(format!(
            "Cholesky needs a nonempty square matrix, got {}x{}",
            n,
            sigma.ncols()
        )));
    }
    let mut buf = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    let stack = MemStack::new(&mut buf);
    match cholesky_in_place(
        sigma.as_mut(),
        LltRegularization::default(),
        Par::Seq,
        stack,
        Default::default(),
    ) {
        Ok(_) => {}
        Err(LltError::NonPositivePivot { index }) => {
            return Err(Error::NotPositiveDefinite { index })
        }
    }
    let mut log_det = 0.0;
    for j in 0..n {
        let pivot = sigma[(j, j)];
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(Error::NotPositiveDefinite { index: j });
        }
        log_det += pivot.ln();
        for i in 0..j {
            sigma[(i, j)] = 0.0;
        }
    }
    Ok(CholeskyFactor {
        lower: sigma,
        log_det: 2.0 * log_det,
    })
}

/// `yᵀ Σ⁻¹ y` for a factorised `Σ`.
pub fn quad_form(chol: &CholeskyFactor, y: &[f64]) -> Result<f64> {
    chol.quad_form(y)
}

/// Marginal log-likelihood of `θ` with `μ` and `σ²` integrated out under
/// the conjugate prior, up to a `θ`-free constant:
/// `−½ ln|Σ| − (a + n/2) ln(b + q/2)` with `Σ = T(f̄_θ) + 11ᵀ/g_μ` and
/// `q = (x − m_μ1)ᵀ Σ⁻¹ (x − m_μ1)`.
///
/// A covariance that fails to factorise yields `−∞`.
pub fn exact_log_marglik(theta: &ThetaParams, data: &DatasetContext, cfg: &PriorConfig) -> Result<f64> {
    exact_log_marglik_series(theta, data.x(), cfg)
}

/// [`exact_log_marglik`] on a raw series of length at least 2.
pub fn exact_log_marglik_series(theta: &ThetaParams, x: &[f64], cfg: &PriorConfig) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Size(format!("marginal likelihood needs n >= 2, got {n}")));
    }
    if !theta.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let acf = theta.autocovariance(n)?;
    let sigma = build_toeplitz(&acf, 1.0 / cfg.g_mu, n)?;
    let chol = match cholesky(sigma) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { index }) => {
            log::debug!("covariance not positive definite at pivot {index} for {theta:?}");
            return Ok(f64::NEG_INFINITY);
        }
        Err(e) => return Err(e),
    };
    let shifted: Vec<f64> = x.iter().map(|v| v - cfg.m_mu).collect();
    let q = chol.quad_form(&shifted)?;
    Ok(marginal_form(chol.log_det(), q, n, cfg))
}

/// `−½ ln_det − (a + n/2) ln(b + q/2)`.
pub(crate) fn marginal_form(log_det: f64, q: f64, n: usize, cfg: &PriorConfig) -> f64 {
    -0.5 * log_det - (cfg.a + 0.5 * n as f64) * (cfg.b + 0.5 * q).ln()
}

/// Full `N(0, T(f))` log-density of `x`.
pub fn exact_log_lik_zeromean(acf: &AutocovarianceSeq, x: &[f64]) -> Result<f64> {
    let n = x.len();
    let chol = cholesky(build_toeplitz(acf, 0.0, n)?)?;
    let q = chol.quad_form(x)?;
    Ok(-0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * chol.log_det() - 0.5 * q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::prepare_dataset;
    use crate::fourier::fracdiff_acf_seq;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn to_nalgebra(m: &Mat<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64 * 0.1
    }

    /// Generic multivariate normal density through LU inverse and determinant.
    fn mvn_oracle(cov: &DMatrix<f64>, x: &[f64]) -> f64 {
        let n = x.len();
        let v = nalgebra::DVector::from_column_slice(x);
        let inv = cov.clone().try_inverse().unwrap();
        let q = (v.transpose() * inv * &v)[(0, 0)];
        -0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * cov.determinant().ln() - 0.5 * q
    }

    #[test]
    fn identity_factor() {
        let c = cholesky(Mat::identity(3, 3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.lower()[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(c.log_det(), 0.0);
    }

    #[test]
    fn hand_factor() {
        let m = Mat::from_fn(2, 2, |i, j| [[4.0, 2.0], [2.0, 3.0]][i][j]);
        let c = cholesky(m).unwrap();
        let l = c.lower();
        assert_relative_eq!(l[(0, 0)], 2.0, max_relative = 1e-15);
        assert_relative_eq!(l[(1, 0)], 1.0, max_relative = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert_relative_eq!(l[(1, 1)], 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(c.log_det(), 8f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn not_positive_definite() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, 1.0, -1.0][i] } else { 0.0 });
        match cholesky(m) {
            Err(Error::NotPositiveDefinite { index }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(cholesky(Mat::zeros(0, 0)), Err(Error::Size(_))));
        assert!(matches!(cholesky(Mat::zeros(2, 3)), Err(Error::Size(_))));
    }

    #[test]
    fn reconstructs_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 7, 64, 256] {
            let a = random_spd(n, &mut rng);
            let c = cholesky(Mat::from_fn(n, n, |i, j| a[(i, j)])).unwrap();
            let l = to_nalgebra(c.lower());
            let err = (&l * l.transpose() - &a).norm() / a.norm();
            assert!(err < 1e-10, "n = {n}: {err}");
            assert!((0..n).all(|i| c.lower()[(i, i)] > 0.0));
        }
    }

    #[test]
    fn fexp_log_det_matches_eigenvalues() {
        let theta = ThetaParams::from_d(0.3, vec![0.4]).unwrap();
        let acf = theta.autocovariance(64).unwrap();
        let t = build_toeplitz(&acf, 0.0, 64).unwrap();
        let eig = to_nalgebra(&t).symmetric_eigen();
        let oracle: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        let got = cholesky(t).unwrap().log_det();
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn quad_form_values() {
        let c = cholesky(Mat::identity(2, 2)).unwrap();
        assert_relative_eq!(quad_form(&c, &[3.0, 4.0]).unwrap(), 25.0, max_relative = 1e-15);
        let c = cholesky(Mat::from_fn(2, 2, |i, j| if i == j { [4.0, 1.0][i] } else { 0.0 })).unwrap();
        assert_relative_eq!(quad_form(&c, &[2.0, 1.0]).unwrap(), 2.0, max_relative = 1e-15);
        assert!(quad_form(&c, &[1.0]).is_err());
    }

    #[test]
    fn quad_form_matches_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_spd(32, &mut rng);
        let y: Vec<f64> = (0..32).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v = nalgebra::DVector::from_column_slice(&y);
        let oracle = (v.transpose() * a.clone().try_inverse().unwrap() * &v)[(0, 0)];
        let c = cholesky(Mat::from_fn(32, 32, |i, j| a[(i, j)])).unwrap();
        assert_relative_eq!(c.quad_form(&y).unwrap(), oracle, max_relative = 1e-9);
        assert_eq!(c.quad_form(&[0.0; 32]).unwrap(), 0.0);
    }

    #[test]
    fn marglik_two_by_two() {
        let cfg = PriorConfig::default();
        let theta = ThetaParams::new(-30.0, vec![]);
        let x = [0.7, -1.3, 0.4, 2.0];
        let data = prepare_dataset(&x).unwrap();
        // Σ = T(f̄) + 11ᵀ/g with T ≈ I at t = −30
        let acf = theta.autocovariance(4).unwrap();
        let s = DMatrix::from_fn(4, 4, |i, j| acf[i.abs_diff(j)] + 1.0 / cfg.g_mu);
        let v = nalgebra::DVector::from_column_slice(&x);
        let q = (v.transpose() * s.clone().try_inverse().unwrap() * &v)[(0, 0)];
        let want = -0.5 * s.determinant().ln() - (cfg.a + 2.0) * (cfg.b + 0.5 * q).ln();
        let got = exact_log_marglik(&theta, &data, &cfg).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");

        // scalar 2×2 case written out by hand
        let x2 = [1.5, -0.5];
        let g = 1.0 / cfg.g_mu;
        let det = (1.0 + g) * (1.0 + g) - g * g;
        let q2 = ((1.0 + g) * (x2[0] * x2[0] + x2[1] * x2[1]) - 2.0 * g * x2[0] * x2[1]) / det;
        let want2 = -0.5 * det.ln() - (cfg.a + 1.0) * (cfg.b + 0.5 * q2).ln();
        let got2 = exact_log_marglik_series(&theta, &x2, &cfg).unwrap();
        assert!((got2 - want2).abs() < 1e-10, "{got2} vs {want2}");
    }

    #[test]
    fn marglik_determinism_and_scaling() {
        let cfg = PriorConfig::default();
        let theta = ThetaParams::from_d(0.2, vec![0.3, -0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = prepare_dataset(&x).unwrap();
        let a = exact_log_marglik(&theta, &data, &cfg).unwrap();
        let b = exact_log_marglik(&theta.clone(), &data, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());

        let c = 3.0;
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let data_c = prepare_dataset(&scaled).unwrap();
        let acf = theta.autocovariance(50).unwrap();
        let chol = cholesky(build_toeplitz(&acf, 1.0 / cfg.g_mu, 50).unwrap()).unwrap();
        let q = chol.quad_form(&x).unwrap();
        let shift = -(cfg.a + 25.0) * ((cfg.b + c * c * q / 2.0) / (cfg.b + q / 2.0)).ln();
        let got = exact_log_marglik(&theta, &data_c, &cfg).unwrap() - a;
        assert_relative_eq!(got, shift, max_relative = 1e-10);
    }

    #[test]
    fn zeromean_values() {
        let flat = AutocovarianceSeq(vec![1.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(
            exact_log_lik_zeromean(&flat, &[0.0; 4]).unwrap(),
            -2.0 * (2.0 * PI).ln(),
            max_relative = 1e-15
        );
        let (v, s) = (2.5, 0.8);
        let got = exact_log_lik_zeromean(&AutocovarianceSeq(vec![v]), &[s]).unwrap();
        assert_relative_eq!(got, -0.5 * (2.0 * PI * v).ln() - s * s / (2.0 * v), max_relative = 1e-14);
    }

    #[test]
    fn zeromean_matches_mvn_oracle() {
        let acf = AutocovarianceSeq(fracdiff_acf_seq(0.2, 32).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x: Vec<f64> = (0..32).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cov = DMatrix::from_fn(32, 32, |i, j| acf[i.abs_diff(j)]);
        let want = mvn_oracle(&cov, &x);
        let got = exact_log_lik_zeromean(&acf, &x).unwrap();
        assert_relative_eq!(got, want, max_relative = 1e-9);
    }

    #[test]
    fn time_reversal_symmetry() {
        let theta = ThetaParams::from_d(0.35, vec![0.5]).unwrap();
        let acf = theta.autocovariance(40).unwrap();
        let chol = cholesky(build_toeplitz(&acf, 0.0, 40).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let (a, b) = (chol.quad_form(&x).unwrap(), chol.quad_form(&rev).unwrap());
        assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn refined_grid_invariance() {
        use crate::fourier::{fourier_coeffs_longmemory_with, FourierGrid, FourierKernel};
        let cfg = PriorConfig::default();
        let theta = ThetaParams::from_d(0.25, vec![0.4, -0.2]).unwrap();
        let n = 128;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |m: usize| {
            let grid = FourierGrid::with_size(m, n).unwrap();
            let acf = fourier_coeffs_longmemory_with(
                theta.d(),
                |l| theta.short_memory(l),
                n,
                grid,
                FourierKernel::Trapezoid,
            )
            .unwrap();
            let chol = cholesky(build_toeplitz(&acf, 1.0 / cfg.g_mu, n).unwrap()).unwrap();
            marginal_form(chol.log_det(), chol.quad_form(&x).unwrap(), n, &cfg)
        };
        let (a, b) = (eval(256), eval(512));
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}
