//! Exact test error of finite-rank KRR and the random matrices behind it.
//!
//! For a sample `X` of size `N` and ridge `λ`:
//!
//! * `Δ = ΨΨᵀ/N − I` (fluctuation matrix), `δ = ‖Δ‖_op`;
//! * `E = Ψ ψ₊(X) / N` (error vector);
//! * `B = (I + Δ + λΛ⁻¹)⁻¹`, `P̄ = diag(λ_k / (λ_k + λ))`.
//!
//! Then, with `w = λΛ⁻¹γ̃ − γ̃₊E`,
//!
//! ```text
//! bias     = γ̃₊² + ‖B w‖²
//! variance = (σ²/N) Tr[B² (I + Δ)]
//! ```
//!
//! Three independent routes are provided for cross-checking: the
//! Parseval route through the regressor's basis coefficients, the direct
//! resolvent trace `σ² Tr[R M R]`, and dense quadrature of `(f − f̃)²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::kernel::{gram_from_features, SpectralKernel};
use crate::linalg;
use crate::regressor::{FittedKRR, RANK_RTOL};
use crate::target::TargetSpec;
use crate::{Error, Result};

/// Ridge substituted for `λ = 0` when `I + Δ` is numerically singular.
pub const RIDGELESS_SURROGATE: f64 = 1e-12;

/// Nodes used by the quadrature oracle.
pub const ORACLE_QUADRATURE_NODES: usize = 100_000;

#[derive(Debug, Clone)]
pub struct FluctuationState {
    pub delta_matrix: DMatrix<f64>,
    pub delta_norm: f64,
    pub error_vector: DVector<f64>,
    pub b_matrix: DMatrix<f64>,
    /// Diagonal of `P̄`.
    pub pbar: DVector<f64>,
    pub eigenvalues: DVector<f64>,
    /// Ridge actually used to form `B`.
    pub ridge: f64,
    pub n: usize,
    /// Set when `λ = 0` was replaced by [`RIDGELESS_SURROGATE`].
    pub ridgeless_limit: bool,
}

/// Exact decomposition of the test error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub bias: f64,
    pub variance: f64,
    pub test_error: f64,
    /// `γ̃₊²`
    pub finite_rank_error: f64,
    /// `‖B w‖²`
    pub fitting_error: f64,
    pub delta_norm: f64,
    pub error_vector_norm: f64,
    pub ridgeless_limit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDimensions {
    /// `𝒩(λ) = Σ λ_k/(λ_k+λ)`
    pub n_eff: f64,
    /// `𝒩²(λ) = Σ λ_k²/(λ_k+λ)²`
    pub n_eff_sq: f64,
}

/// A deterministic two-sided approximation `|exact − center| ≤ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    pub exact: f64,
    pub center: f64,
    pub radius: f64,
}

impl Approximation {
    pub fn holds(&self) -> bool {
        (self.exact - self.center).abs() <= self.radius
    }
}

/// `p(δ) = 5 + 4δ + 4δ²`.
pub fn p_delta(delta: f64) -> f64 {
    5.0 + 4.0 * delta + 4.0 * delta * delta
}

pub fn pbar_diag(eigenvalues: &[f64], lambda: f64) -> DVector<f64> {
    DVector::from_iterator(eigenvalues.len(), eigenvalues.iter().map(|l| l / (l + lambda)))
}

pub fn fluctuation_state(kernel: &SpectralKernel, inputs: &[f64], lambda: f64) -> Result<FluctuationState> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("need at least one input".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be finite and >= 0, got {lambda}")));
    }
    let n = inputs.len();
    let m = kernel.rank();
    let psi = kernel.feature_matrix(inputs)?;
    let plus = kernel.complement_vector(inputs)?;
    let nf = n as f64;
    let delta_matrix = linalg::symmetrize(&((&psi * psi.transpose()) / nf - DMatrix::identity(m, m)));
    let delta_norm = linalg::op_norm(&delta_matrix);
    let error_vector = (&psi * &plus) / nf;
    let ev = kernel.eigenvalues();

    let b_for = |ridge: f64| -> Result<DMatrix<f64>> {
        let mut a = DMatrix::identity(m, m) + &delta_matrix;
        for (k, l) in ev.iter().enumerate() {
            a[(k, k)] += ridge / l;
        }
        linalg::spd_inverse(&a, "I + Δ + λΛ⁻¹")
    };
    let (b_matrix, ridge, ridgeless_limit) = match b_for(lambda) {
        Ok(b) => (b, lambda, false),
        Err(_) if lambda == 0.0 => {
            let b = b_for(RIDGELESS_SURROGATE).map_err(|_| {
                Error::Singular(format!("I + Δ is singular (δ = {delta_norm:.3e})"))
            })?;
            (b, RIDGELESS_SURROGATE, true)
        }
        Err(e) => return Err(e),
    };

    Ok(FluctuationState {
        delta_matrix,
        delta_norm,
        error_vector,
        b_matrix,
        pbar: pbar_diag(ev, ridge),
        eigenvalues: kernel.lambda_diag(),
        ridge,
        n,
        ridgeless_limit,
    })
}

impl FluctuationState {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `w = λΛ⁻¹γ̃ − γ̃₊E`.
    pub fn w_vector(&self, target: &TargetSpec) -> DVector<f64> {
        let g = DVector::from_column_slice(target.gamma());
        let scaled = g.component_div(&self.eigenvalues) * self.ridge;
        scaled - &self.error_vector * target.gamma_plus()
    }

    pub fn pbar_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.pbar)
    }

    /// `I + Δ`.
    pub fn gram_normalized(&self) -> DMatrix<f64> {
        DMatrix::identity(self.rank(), self.rank()) + &self.delta_matrix
    }
}

pub fn exact_bias(state: &FluctuationState, target: &TargetSpec) -> f64 {
    let gp = target.gamma_plus();
    gp * gp + (&state.b_matrix * state.w_vector(target)).norm_squared()
}

pub fn exact_variance(state: &FluctuationState, sigma2: f64) -> f64 {
    let b2 = &state.b_matrix * &state.b_matrix;
    sigma2 / state.n as f64 * (b2 * state.gram_normalized()).trace()
}

pub fn error_report(state: &FluctuationState, target: &TargetSpec, sigma2: f64) -> ErrorReport {
    let gp = target.gamma_plus();
    let finite_rank_error = gp * gp;
    let fitting_error = (&state.b_matrix * state.w_vector(target)).norm_squared();
    let bias = finite_rank_error + fitting_error;
    let variance = exact_variance(state, sigma2);
    ErrorReport {
        bias,
        variance,
        test_error: bias + variance,
        finite_rank_error,
        fitting_error,
        delta_norm: state.delta_norm,
        error_vector_norm: state.error_vector.norm(),
        ridgeless_limit: state.ridgeless_limit,
    }
}

fn require_noiseless(fitted: &FittedKRR, target: &TargetSpec) -> Result<()> {
    let data = fitted.dataset();
    if data.noise_var != 0.0 {
        return Err(Error::Misuse(format!(
            "oracle needs a noiseless fit, dataset has noise variance {}",
            data.noise_var
        )));
    }
    let scale = data.labels.iter().fold(1.0f64, |a, y| a.max(y.abs()));
    for (x, y) in data.inputs.iter().zip(&data.labels) {
        if (target.eval(*x)? - y).abs() > 1e-12 * scale {
            return Err(Error::Misuse("labels do not equal the target at the inputs".into()));
        }
    }
    Ok(())
}

/// Bias via Parseval: `γ̃₊² + ‖c − γ̃‖²` where `c` are the basis
/// coefficients of the noiseless fit.
pub fn bias_parseval_oracle(fitted: &FittedKRR, target: &TargetSpec) -> Result<f64> {
    require_noiseless(fitted, target)?;
    let g = DVector::from_column_slice(target.gamma());
    let gp = target.gamma_plus();
    Ok(gp * gp + (fitted.basis_coeffs() - g).norm_squared())
}

/// `R Z` with `R = (K + λN·I)⁻¹`, by a Cholesky solve. For `λ = 0` the
/// pseudo-inverse `K⁺` is used when `K` is singular.
fn resolvent_apply(gram: &DMatrix<f64>, lambda: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    if lambda > 0.0 {
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += lambda * n as f64;
        }
        return Ok(linalg::cholesky(&a, "K + λN·I")?.solve(rhs));
    }
    let spectrum = linalg::symmetric_spectrum(gram);
    if spectrum.min() > RANK_RTOL * spectrum.max() {
        Ok(linalg::cholesky(gram, "K")?.solve(rhs))
    } else {
        Ok(linalg::psd_pseudo_inverse(gram, RANK_RTOL).0 * rhs)
    }
}

/// `X = R Ψᵀ Λ` (an `N × M` matrix), so that `ΛΨR = Xᵀ`.
fn resolvent_features(kernel: &SpectralKernel, inputs: &[f64], lambda: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be finite and >= 0, got {lambda}")));
    }
    let psi = kernel.feature_matrix(inputs)?;
    let lam = kernel.lambda_diag();
    let gram = gram_from_features(&psi, &lam);
    let mut psi_t_lam = psi.transpose();
    for (mut col, l) in psi_t_lam.column_iter_mut().zip(lam.iter()) {
        col *= *l;
    }
    let x = resolvent_apply(&gram, lambda, &psi_t_lam)?;
    Ok((psi, x))
}

/// `σ² Tr[R M R]` with `R = (K + λN·I)⁻¹` and `M = Ψᵀ Λ² Ψ`, evaluated as
/// `σ² ‖R Ψᵀ Λ‖_F²` to avoid amplifying rounding in the null space of `K`.
pub fn variance_direct_oracle(kernel: &SpectralKernel, inputs: &[f64], lambda: f64, sigma2: f64) -> Result<f64> {
    let (_, x) = resolvent_features(kernel, inputs, lambda)?;
    Ok(sigma2 * x.norm_squared())
}

/// Bias by dense quadrature of `(f − f̃)²` over `ρ`, plus the direct
/// variance trace. The fit must be noiseless.
pub fn quadrature_test_error_oracle(fitted: &FittedKRR, target: &TargetSpec, sigma2: f64) -> Result<f64> {
    require_noiseless(fitted, target)?;
    let kernel = fitted.kernel();
    let rule = kernel.domain().quadrature(ORACLE_QUADRATURE_NODES);
    let preds = fitted.predict_many(&rule.nodes)?;
    let mut bias = 0.0;
    for ((x, w), f) in rule.nodes.iter().zip(&rule.weights).zip(&preds) {
        let d = f - target.eval(*x)?;
        bias += w * d * d;
    }
    let variance = variance_direct_oracle(kernel, &fitted.dataset().inputs, fitted.ridge(), sigma2)?;
    Ok(bias + variance)
}

/// `B⁽ⁿ⁾ = Σ_{s=0}^{n} (−P̄Δ)^s P̄`.
pub fn b_neumann(state: &FluctuationState, order: usize) -> DMatrix<f64> {
    let pbar = state.pbar_matrix();
    let step = -(&pbar * &state.delta_matrix);
    let mut term = pbar.clone();
    let mut sum = pbar;
    for _ in 0..order {
        term = &step * term;
        sum += &term;
    }
    sum
}

/// `‖B − B⁽ⁿ⁾‖_op` and the bound `2δⁿ⁺¹` (meaningful when `δ < 1/2`).
pub fn neumann_tail(state: &FluctuationState, order: usize) -> (f64, f64) {
    let diff = &state.b_matrix - b_neumann(state, order);
    (linalg::op_norm(&diff), 2.0 * state.delta_norm.powi(order as i32 + 1))
}

pub fn effective_dimensions(kernel: &SpectralKernel, lambda: f64) -> EffectiveDimensions {
    let (mut n_eff, mut n_eff_sq) = (0.0, 0.0);
    for l in kernel.eigenvalues() {
        let r = l / (l + lambda);
        n_eff += r;
        n_eff_sq += r * r;
    }
    debug_assert!(n_eff_sq <= n_eff + 1e-12 && n_eff <= kernel.rank() as f64 + 1e-12);
    EffectiveDimensions { n_eff, n_eff_sq }
}

/// `P_{≤M} = ΛΨRΨᵀ` and `P_{>M} = ΛΨRψ₊(X)`, built from the resolvent.
pub fn projections_direct(kernel: &SpectralKernel, inputs: &[f64], lambda: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (psi, x) = resolvent_features(kernel, inputs, lambda)?;
    let plus = kernel.complement_vector(inputs)?;
    Ok((x.tr_mul(&psi.transpose()), x.tr_mul(&plus)))
}

/// The same projections through `B`: `I − λBΛ⁻¹` and `B E`.
pub fn projections_from_b(state: &FluctuationState) -> (DMatrix<f64>, DVector<f64>) {
    let m = state.rank();
    let mut b_linv = state.b_matrix.clone();
    for (mut col, l) in b_linv.column_iter_mut().zip(state.eigenvalues.iter()) {
        col /= *l;
    }
    (
        DMatrix::identity(m, m) - b_linv * state.ridge,
        &state.b_matrix * &state.error_vector,
    )
}

/// Deterministic bias approximation, valid when `δ < 1/2`:
/// `|bias − (‖P̄w‖² + γ̃₊²)| ≤ 2δ‖P̄w‖² + ‖w‖²δ²p(δ)`.
pub fn bias_approximation(state: &FluctuationState, target: &TargetSpec) -> Option<Approximation> {
    let d = state.delta_norm;
    if d >= 0.5 {
        return None;
    }
    let w = state.w_vector(target);
    let pw = state.pbar.component_mul(&w).norm_squared();
    let gp = target.gamma_plus();
    Some(Approximation {
        exact: exact_bias(state, target),
        center: pw + gp * gp,
        radius: 2.0 * d * pw + w.norm_squared() * d * d * p_delta(d),
    })
}

/// Deterministic variance approximation, valid when `δ < 1/2`:
/// `|variance − (σ²/N)𝒩²| ≤ δ(σ²/N)𝒩² + M(σ²/N)(1+δ)δ²p(δ)`.
pub fn variance_approximation(state: &FluctuationState, sigma2: f64) -> Option<Approximation> {
    let d = state.delta_norm;
    if d >= 0.5 {
        return None;
    }
    let n2: f64 = state.pbar.iter().map(|p| p * p).sum();
    let scale = sigma2 / state.n as f64;
    Some(Approximation {
        exact: exact_variance(state, sigma2),
        center: scale * n2,
        radius: d * scale * n2 + state.rank() as f64 * scale * (1.0 + d) * d * d * p_delta(d),
    })
}
