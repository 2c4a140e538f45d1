//! Target functions expanded in a kernel's eigenbasis, and noisy datasets.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::kernel::{BasisFunction, KernelFamily, SpectralKernel};
use crate::{Error, Result};

/// ChaCha stream carrying input draws; labels use [`NOISE_STREAM`].
pub const INPUT_STREAM: u64 = 0;
pub const NOISE_STREAM: u64 = 1;

/// `f̃ = Σ γ̃_k ψ_k + γ̃₊ ψ₊`.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    gamma: Vec<f64>,
    gamma_plus: f64,
    kernel: Arc<SpectralKernel>,
    note: Option<String>,
}

/// JSON form of a target, `{"gamma": [...], "gamma_plus": v}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCoefficients {
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub gamma_plus: f64,
}

/// Scalar functionals of a target used by the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetFunctionals {
    /// `‖f̃‖²_{L²} = Σ γ̃_k² + γ̃₊²`
    pub l2_norm_sq: f64,
    /// `‖f̃_{≤M}‖²_H = Σ γ̃_k² / λ_k`
    pub rkhs_norm_sq: f64,
    /// `max_k |γ̃_k / λ_k|`
    pub r_over: f64,
    /// `min_k |γ̃_k / λ_k|`
    pub r_under: f64,
}

impl TargetSpec {
    pub fn new(kernel: Arc<SpectralKernel>, gamma: Vec<f64>, gamma_plus: f64) -> Result<Self> {
        if gamma.len() != kernel.rank() {
            return Err(Error::InvalidArgument(format!(
                "target has {} coefficients, kernel rank is {}",
                gamma.len(),
                kernel.rank()
            )));
        }
        if gamma.iter().chain(std::iter::once(&gamma_plus)).any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("target coefficients must be finite".into()));
        }
        Ok(TargetSpec {
            gamma,
            gamma_plus,
            kernel,
            note: None,
        })
    }

    pub fn from_coefficients(kernel: Arc<SpectralKernel>, c: &TargetCoefficients) -> Result<Self> {
        Self::new(kernel, c.gamma.clone(), c.gamma_plus)
    }

    pub fn zero(kernel: Arc<SpectralKernel>) -> Self {
        let m = kernel.rank();
        TargetSpec {
            gamma: vec![0.0; m],
            gamma_plus: 0.0,
            kernel,
            note: None,
        }
    }

    /// `f̃(θ) = cos θ = (1/√2) ψ₂(θ)` on a circle kernel.
    pub fn tntk_cosine(kernel: Arc<SpectralKernel>) -> Result<Self> {
        let idx = kernel
            .basis()
            .iter()
            .position(|b| *b == BasisFunction::Cos(1));
        let mut gamma = vec![0.0; kernel.rank()];
        let mut gamma_plus = 0.0;
        match idx {
            Some(i) => gamma[i] = std::f64::consts::FRAC_1_SQRT_2,
            None if kernel.complement() == BasisFunction::Cos(1) => {
                gamma_plus = std::f64::consts::FRAC_1_SQRT_2
            }
            None => {
                return Err(Error::InvalidArgument(
                    "cos θ is not representable on this kernel's basis".into(),
                ))
            }
        }
        Self::new(kernel, gamma, gamma_plus)
    }

    /// Target given by raw Legendre coefficients, `f̃ = Σ_d a_d P_d`.
    ///
    /// Coefficients are converted to the orthonormal basis `√(2d+1) P_d`
    /// (`γ̃_d = a_d / √(2d+1)`). Degrees beyond the rank may only hit the
    /// complement degree `M`.
    pub fn legendre_raw(kernel: Arc<SpectralKernel>, raw: &[f64]) -> Result<Self> {
        let m = kernel.rank();
        let is_legendre = kernel
            .basis()
            .iter()
            .enumerate()
            .all(|(i, b)| *b == BasisFunction::Legendre(i as u32));
        if !is_legendre {
            return Err(Error::InvalidArgument("raw Legendre coefficients need a Legendre basis".into()));
        }
        let mut gamma = vec![0.0; m];
        let mut gamma_plus = 0.0;
        for (d, &a) in raw.iter().enumerate() {
            let g = a / ((2 * d + 1) as f64).sqrt();
            if d < m {
                gamma[d] = g;
            } else if d == m {
                gamma_plus = g;
            } else if a != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "degree {d} is neither in the basis nor the complement (rank {m})"
                )));
            }
        }
        let mut t = Self::new(kernel, gamma, gamma_plus)?;
        t.note = Some(format!(
            "raw Legendre coefficients {raw:?} converted to the orthonormal basis sqrt(2d+1) P_d"
        ));
        Ok(t)
    }

    /// `f̃(x) = x² = ⅓ P₀ + ⅔ P₂` on a Legendre kernel.
    pub fn legendre_x_squared(kernel: Arc<SpectralKernel>) -> Result<Self> {
        Self::legendre_raw(kernel, &[1.0 / 3.0, 0.0, 2.0 / 3.0])
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma_plus(&self) -> f64 {
        self.gamma_plus
    }

    pub fn kernel(&self) -> &Arc<SpectralKernel> {
        &self.kernel
    }

    /// Provenance note recorded when coefficients were converted.
    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn is_consistent(&self) -> bool {
        self.gamma_plus == 0.0
    }

    pub fn coefficients(&self) -> TargetCoefficients {
        TargetCoefficients {
            gamma: self.gamma.clone(),
            gamma_plus: self.gamma_plus,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let psi = self.kernel.eval_features(x)?;
        Ok(self.eval_from_features(psi.as_slice(), x))
    }

    fn eval_from_features(&self, psi: &[f64], x: f64) -> f64 {
        let inner: f64 = self.gamma.iter().zip(psi).map(|(g, p)| g * p).sum();
        if self.gamma_plus == 0.0 {
            inner
        } else {
            inner + self.gamma_plus * self.kernel.complement().eval(x)
        }
    }

    /// `f̃(X)` for a batch of points.
    pub fn eval_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    pub fn functionals(&self) -> TargetFunctionals {
        let ev = self.kernel.eigenvalues();
        let l2_inner: f64 = self.gamma.iter().map(|g| g * g).sum();
        let rkhs: f64 = self.gamma.iter().zip(ev).map(|(g, l)| g * g / l).sum();
        let ratios = self.gamma.iter().zip(ev).map(|(g, l)| (g / l).abs());
        let r_over = ratios.clone().fold(0.0, f64::max);
        let r_under = ratios.fold(f64::INFINITY, f64::min);
        TargetFunctionals {
            l2_norm_sq: l2_inner + self.gamma_plus * self.gamma_plus,
            rkhs_norm_sq: rkhs,
            r_over,
            r_under,
        }
    }

    /// Draw `n` inputs from `ρ` and labels `y_i = f̃(x_i) + ε_i` with
    /// `ε_i ~ N(0, σ²)`.
    ///
    /// Generator: ChaCha8 seeded with `seed`; inputs come from stream
    /// [`INPUT_STREAM`] and noise from [`NOISE_STREAM`], so the inputs for a
    /// given seed do not depend on `σ²`.
    pub fn sample_dataset(&self, n: usize, sigma2: f64, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidArgument("dataset needs n >= 1".into()));
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidArgument(format!("noise variance must be >= 0, got {sigma2}")));
        }
        let domain = self.kernel.domain();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INPUT_STREAM);
        let inputs: Vec<f64> = (0..n).map(|_| domain.sample(&mut rng)).collect();
        let mut labels = self.eval_many(&inputs)?;
        if sigma2 > 0.0 {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
            noise_rng.set_stream(NOISE_STREAM);
            let normal = Normal::new(0.0, sigma2.sqrt())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for y in labels.iter_mut() {
                *y += normal.sample(&mut noise_rng);
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            noise_var: sigma2,
            seed,
        })
    }

    /// The same inputs with noiseless labels `f̃(X)`.
    pub fn noiseless(&self, data: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            inputs: data.inputs.clone(),
            labels: self.eval_many(&data.inputs)?,
            noise_var: 0.0,
            seed: data.seed,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.kernel.family()
    }
}

/// `N` inputs with labels, plus the noise level and seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub noise_var: f64,
    pub seed: u64,
}

impl Dataset {
    /// Dataset from explicit values. `noise_var` documents how the labels
    /// were produced.
    pub fn new(inputs: Vec<f64>, labels: Vec<f64>, noise_var: f64, seed: u64) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::InvalidArgument("inputs and labels differ in length".into()));
        }
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset needs n >= 1".into()));
        }
        Ok(Dataset {
            inputs,
            labels,
            noise_var,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// CSV with a `# seed=..., noise_var=...` comment line and an `x,y` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# seed={} noise_var={}", self.seed, self.noise_var);
        out.push_str("x,y\n");
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            let _ = writeln!(out, "{x},{y}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn tntk() -> Arc<SpectralKernel> {
        Arc::new(SpectralKernel::tntk(7).unwrap())
    }

    fn legendre(m: usize) -> Arc<SpectralKernel> {
        Arc::new(SpectralKernel::legendre(m).unwrap())
    }

    #[test]
    fn zero_target_is_zero() {
        let t = TargetSpec::zero(tntk());
        assert_eq!(t.eval(1.234).unwrap(), 0.0);
    }

    #[test]
    fn cosine_target() {
        let t = TargetSpec::tntk_cosine(tntk()).unwrap();
        assert!((t.eval(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((t.eval(1.1).unwrap() - 1.1f64.cos()).abs() < 1e-15);
        assert!(t.is_consistent());
    }

    #[test]
    fn x_squared_conversion() {
        let t = TargetSpec::legendre_x_squared(legendre(5)).unwrap();
        assert!((t.gamma()[0] - 1.0 / 3.0).abs() < 1e-16);
        assert!((t.gamma()[2] - (2.0 / 3.0) / 5f64.sqrt()).abs() < 1e-16);
        assert!((t.eval(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((t.eval(0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!(t.note().is_some());
    }

    #[test]
    fn x_squared_on_rank_two_uses_complement() {
        let t = TargetSpec::legendre_x_squared(legendre(2)).unwrap();
        assert!(!t.is_consistent());
        assert!((t.eval(-1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(TargetSpec::legendre_raw(legendre(1), &[0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn functionals_examples() {
        let k = tntk();
        let mut g = vec![0.0; 7];
        g[0] = 1.0;
        let t = TargetSpec::new(k.clone(), g, 0.0).unwrap();
        let f = t.functionals();
        assert_eq!(f.l2_norm_sq, 1.0);
        assert!((f.rkhs_norm_sq - 1.0 / k.eigenvalues()[0]).abs() < 1e-12);

        let c = TargetSpec::tntk_cosine(k).unwrap().functionals();
        assert!((c.rkhs_norm_sq - 4.0).abs() < 1e-14);
        assert!((c.r_over - 4.0 * SQRT_2).abs() < 1e-13);
        assert_eq!(c.r_under, 0.0);
    }

    #[test]
    fn parseval_by_quadrature() {
        let k = legendre(5);
        let t = TargetSpec::new(k.clone(), vec![0.3, -0.2, 0.5, 0.1, -0.4], 0.25).unwrap();
        let rule = k.domain().quadrature(100_000);
        let q = rule.integrate(|x| t.eval(x).unwrap().powi(2));
        assert!((q - t.functionals().l2_norm_sq).abs() < 1e-8);
    }

    #[test]
    fn noiseless_labels_match_target() {
        let t = TargetSpec::tntk_cosine(tntk()).unwrap();
        let d = t.sample_dataset(40, 0.0, 3).unwrap();
        for (x, y) in d.inputs.iter().zip(&d.labels) {
            assert_eq!(*y, t.eval(*x).unwrap());
        }
    }

    #[test]
    fn reproducible_and_input_stream_independent_of_noise() {
        let t = TargetSpec::tntk_cosine(tntk()).unwrap();
        let a = t.sample_dataset(30, 0.05, 11).unwrap();
        let b = t.sample_dataset(30, 0.05, 11).unwrap();
        assert_eq!(a, b);
        let c = t.sample_dataset(30, 0.0, 11).unwrap();
        assert_eq!(a.inputs, c.inputs);
        let d = t.sample_dataset(30, 0.05, 12).unwrap();
        assert_ne!(a.inputs, d.inputs);
    }

    #[test]
    fn noise_mean_is_small() {
        let t = TargetSpec::zero(legendre(3));
        let d = t.sample_dataset(100_000, 0.05, 5).unwrap();
        let mean = d.labels.iter().sum::<f64>() / d.len() as f64;
        assert!(mean.abs() < 3.0 * 0.05f64.sqrt() / (1e5f64).sqrt());
    }

    #[test]
    fn invalid_arguments() {
        let t = TargetSpec::zero(legendre(3));
        assert!(t.sample_dataset(0, 0.1, 1).is_err());
        assert!(t.sample_dataset(5, -0.1, 1).is_err());
        assert!(TargetSpec::new(legendre(3), vec![1.0], 0.0).is_err());
        assert!(TargetSpec::tntk_cosine(legendre(3)).is_err());
    }

    #[test]
    fn csv_dump_header() {
        let t = TargetSpec::zero(legendre(2));
        let d = t.sample_dataset(3, 0.05, 9).unwrap();
        let csv = d.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# seed=9 noise_var=0.05");
        assert_eq!(lines.next().unwrap(), "x,y");
        assert_eq!(lines.count(), 3);
    }
}
