//! Kernel ridge regression through the representer theorem.
//!
//! The fitted function is `f(x) = αᵀ K_x` with dual weights
//! `α = (K + λN I)⁻¹ y`, obtained by a Cholesky solve. Because the kernel
//! has rank `M`, the fit also lives in `span{ψ_1..ψ_M}` with coefficients
//! `c = Λ Ψ α`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::kernel::{gram_from_features, SpectralKernel};
use crate::linalg;
use crate::target::Dataset;
use crate::{Error, Result};

/// Desk-scale cap on the number of samples for the `N × N` dual solve.
pub const MAX_SAMPLES: usize = 4096;

/// Condition numbers above this are logged as a warning.
pub const CONDITION_WARNING: f64 = 1e12;

/// Relative eigenvalue cut-off used to decide that `K` is singular when
/// `λ = 0`, and for the minimum-norm pseudo-inverse.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// For `λ = 0` with a rank-deficient Gram matrix, use the minimum-norm
    /// least-squares solution `α = K⁺ y` instead of failing.
    pub min_norm: bool,
}

#[derive(Debug, Clone)]
pub struct FittedKRR {
    kernel: Arc<SpectralKernel>,
    data: Dataset,
    ridge: f64,
    psi: DMatrix<f64>,
    dual_weights: DVector<f64>,
    basis_coeffs: DVector<f64>,
    min_norm: bool,
    condition_estimate: f64,
}

pub fn fit(kernel: &Arc<SpectralKernel>, data: &Dataset, lambda: f64) -> Result<FittedKRR> {
    fit_with(kernel, data, lambda, FitOptions::default())
}

pub fn fit_with(
    kernel: &Arc<SpectralKernel>,
    data: &Dataset,
    lambda: f64,
    opts: FitOptions,
) -> Result<FittedKRR> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be finite and >= 0, got {lambda}")));
    }
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if n > MAX_SAMPLES {
        return Err(Error::Capability(format!("N = {n} exceeds the dense budget of {MAX_SAMPLES}")));
    }
    let psi = kernel.feature_matrix(&data.inputs)?;
    let gram = gram_from_features(&psi, &kernel.lambda_diag());
    let y = DVector::from_column_slice(&data.labels);

    let (dual_weights, condition_estimate, min_norm) = if lambda > 0.0 {
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += lambda * n as f64;
        }
        let chol = linalg::cholesky(&a, "K + λN·I")?;
        (chol.solve(&y), linalg::cholesky_condition_estimate(&chol), false)
    } else {
        let spectrum = linalg::symmetric_spectrum(&gram);
        let max = spectrum.max();
        let min = spectrum.min();
        let singular = min <= RANK_RTOL * max;
        if !singular {
            let chol = linalg::cholesky(&gram, "K")?;
            (chol.solve(&y), max / min, false)
        } else if opts.min_norm {
            let (pinv, _rank) = linalg::psd_pseudo_inverse(&gram, RANK_RTOL);
            (pinv * &y, f64::INFINITY, true)
        } else {
            return Err(Error::IllPosed(format!(
                "λ = 0 with a rank-deficient Gram matrix (N = {n}, rank ≤ {}); \
                 set the minimum-norm solve option or use λ > 0",
                kernel.rank()
            )));
        }
    };
    if condition_estimate > CONDITION_WARNING && !min_norm {
        log::warn!("ill-conditioned dual system: condition estimate {condition_estimate:.3e}");
    }

    let basis_coeffs = lambda_times(kernel, &(&psi * &dual_weights));
    Ok(FittedKRR {
        kernel: kernel.clone(),
        data: data.clone(),
        ridge: lambda,
        psi,
        dual_weights,
        basis_coeffs,
        min_norm,
        condition_estimate,
    })
}

fn lambda_times(kernel: &SpectralKernel, v: &DVector<f64>) -> DVector<f64> {
    v.component_mul(&kernel.lambda_diag())
}

impl FittedKRR {
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn kernel(&self) -> &Arc<SpectralKernel> {
        &self.kernel
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn dual_weights(&self) -> &DVector<f64> {
        &self.dual_weights
    }

    /// Coefficients of the fit on `ψ_1..ψ_M`.
    pub fn basis_coeffs(&self) -> &DVector<f64> {
        &self.basis_coeffs
    }

    /// Whether the minimum-norm (pseudo-inverse) path was used.
    pub fn is_min_norm(&self) -> bool {
        self.min_norm
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// `‖(K + λN·I) α − y‖ / ‖y‖`.
    pub fn relative_residual(&self) -> f64 {
        let n = self.data.len() as f64;
        let k = gram_from_features(&self.psi, &self.kernel.lambda_diag());
        let y = DVector::from_column_slice(&self.data.labels);
        let r = &k * &self.dual_weights + &self.dual_weights * (self.ridge * n) - &y;
        let ny = y.norm();
        if ny == 0.0 {
            r.norm()
        } else {
            r.norm() / ny
        }
    }

    /// `αᵀ K_x` with `K_x = [K(x_i, x)]_i`.
    pub fn predict(&self, x: f64) -> Result<f64> {
        let phi = self.kernel.eval_features(x)?;
        let kx = self.psi.tr_mul(&lambda_times(&self.kernel, &phi));
        Ok(self.dual_weights.dot(&kx))
    }

    /// `cᵀ ψ(x)`, the eigenbasis route to the same value.
    pub fn predict_basis(&self, x: f64) -> Result<f64> {
        let phi = self.kernel.eval_features(x)?;
        Ok(self.basis_coeffs.dot(&phi))
    }

    /// Dual-route predictions on many points, blocked to bound memory.
    pub fn predict_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        const BLOCK: usize = 4096;
        let mut out = Vec::with_capacity(xs.len());
        let lambda = self.kernel.lambda_diag();
        for chunk in xs.chunks(BLOCK) {
            let mut phi = self.kernel.feature_matrix(chunk)?;
            for (mut row, l) in phi.row_iter_mut().zip(lambda.iter()) {
                row *= *l;
            }
            // N × B block of K(x_i, x_q)
            let kq = self.psi.tr_mul(&phi);
            out.extend(kq.tr_mul(&self.dual_weights).iter().copied());
        }
        Ok(out)
    }

    /// `(1/N) Σ (f(x_i) − y_i)²`.
    pub fn train_error(&self) -> f64 {
        let fitted = self.psi.tr_mul(&self.basis_coeffs);
        let n = self.data.len() as f64;
        fitted
            .iter()
            .zip(&self.data.labels)
            .map(|(f, y)| (f - y).powi(2))
            .sum::<f64>()
            / n
    }
}
