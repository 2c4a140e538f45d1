//! Finite-rank Mercer kernels described by their spectrum.
//!
//! A [`SpectralKernel`] of rank `M` is `K(x, x') = Σ_k λ_k ψ_k(x) ψ_k(x')`
//! with `ψ_1..ψ_M` orthonormal in `L²(ρ)`. Each kernel also carries one
//! extra orthonormal function `ψ₊` (the complement), used to build targets
//! that lie partly outside the RKHS.
//!
//! Two families are built in:
//!
//! * the truncated NTK on the circle, with Fourier eigenfunctions
//!   `{1, √2 cos kθ, √2 sin kθ}` and `ρ = Uniform[0, 2π)`;
//! * the Legendre kernel on `[-1, 1]`, with basis `√(2k+1) P_k` and
//!   `ρ = Uniform[-1, 1]`, eigenvalues `(3/π²)(k+1)⁻²`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quadrature::{self, Rule};
use crate::{Error, Result};

/// Largest rank the truncated NTK is built for.
pub const MAX_TNTK_RANK: usize = 64;

/// Number of Simpson intervals used to recover NTK eigenvalues.
pub const NTK_QUADRATURE_INTERVALS: usize = 20_000;

/// Maximum gap tolerated between a quadrature-recovered NTK eigenvalue and
/// the tabulated closed form.
pub const NTK_TABLE_TOLERANCE: f64 = 1e-8;

/// Fourier eigenvalues below this are treated as exact zeros of the NTK
/// spectrum (all odd frequencies `k ≥ 3` vanish).
const NTK_NULL_MODE: f64 = 1e-12;

/// Closed-form NTK eigenvalues for the first seven modes, in table order
/// `1, cos θ, sin θ, cos 2θ, sin 2θ, cos 4θ, sin 4θ`.
pub fn ntk_table_eigenvalues() -> [f64; 7] {
    let pi2 = PI * PI;
    [
        1.0 / pi2,
        1.0 / 8.0,
        1.0 / 8.0,
        5.0 / (9.0 * pi2),
        5.0 / (9.0 * pi2),
        17.0 / (225.0 * pi2),
        17.0 / (225.0 * pi2),
    ]
}

/// Leading constant of the Legendre kernel spectrum, `0.5 / Σ k⁻² = 3/π²`.
pub fn legendre_scale() -> f64 {
    3.0 / (PI * PI)
}

/// Input space and sampling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// `[0, 2π)` with the uniform distribution.
    Circle,
    /// `[-1, 1]` with the uniform distribution.
    Interval,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Circle => "circle [0, 2pi)",
            Domain::Interval => "interval [-1, 1]",
        }
    }

    /// Circle inputs are angles and accepted modulo 2π; the interval is closed.
    pub fn check(self, x: f64) -> Result<()> {
        let ok = match self {
            Domain::Circle => x.is_finite(),
            Domain::Interval => (-1.0..=1.0).contains(&x),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                value: x,
                domain: self.name(),
            })
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Domain::Circle => rng.random_range(0.0..2.0 * PI),
            Domain::Interval => rng.random_range(-1.0..=1.0),
        }
    }

    /// A probability-weighted rule with at least `min_nodes` nodes.
    ///
    /// The circle uses the uniform trapezoid rule (exact for trigonometric
    /// polynomials), the interval a composite 50-point Gauss rule.
    pub fn quadrature(self, min_nodes: usize) -> Rule {
        match self {
            Domain::Circle => quadrature::circle_trapezoid(min_nodes.max(1)),
            Domain::Interval => {
                let order = 50;
                let panels = min_nodes.div_ceil(order).max(1);
                quadrature::composite_gauss_uniform(-1.0, 1.0, panels, order)
            }
        }
    }
}

/// One orthonormal basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum BasisFunction {
    Constant,
    /// `√2 cos(kθ)`
    Cos(u32),
    /// `√2 sin(kθ)`
    Sin(u32),
    /// `√(2d+1) P_d(x)`
    Legendre(u32),
}

impl BasisFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Cos(k) => SQRT_2 * (k as f64 * x).cos(),
            BasisFunction::Sin(k) => SQRT_2 * (k as f64 * x).sin(),
            BasisFunction::Legendre(d) => ((2 * d + 1) as f64).sqrt() * legendre_p(d, x),
        }
    }

    /// `sup_x |ψ(x)|` over the natural domain.
    pub fn sup_norm(self) -> f64 {
        match self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Cos(_) | BasisFunction::Sin(_) => SQRT_2,
            BasisFunction::Legendre(d) => ((2 * d + 1) as f64).sqrt(),
        }
    }
}

/// Raw Legendre polynomial `P_d(x)` by the Bonnet recurrence.
pub fn legendre_p(d: u32, x: f64) -> f64 {
    match d {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=d {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// The untruncated NTK on the circle,
/// `cos(θ − θ')(π − |θ − θ'|) / (2π)` with `|θ − θ'|` the geodesic distance.
pub fn ntk_closed_form(theta: f64, theta2: f64) -> f64 {
    let d = geodesic_distance(theta, theta2);
    d.cos() * (PI - d) / (2.0 * PI)
}

/// Distance on the circle folded into `[0, π]`.
pub fn geodesic_distance(theta: f64, theta2: f64) -> f64 {
    let d = (theta - theta2).rem_euclid(2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

/// Eigenvalue of the NTK on the Fourier mode of frequency `k`, by composite
/// Simpson quadrature of `(1/π) ∫₀^π K(u) cos(ku) du`. The integrand is
/// smooth on `[0, π]`, so Simpson converges at fourth order.
pub fn ntk_fourier_eigenvalue(k: u32, intervals: usize) -> f64 {
    let kf = k as f64;
    let integral = quadrature::simpson(
        |u| ntk_closed_form(0.0, u) * (kf * u).cos(),
        0.0,
        PI,
        intervals,
    );
    integral / PI
}

/// Family tag of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Tntk,
    Legendre,
    Custom,
}

/// Rank-`M` Mercer kernel given by its spectrum and eigenfunctions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    family: KernelFamily,
    domain: Domain,
    eigenvalues: Vec<f64>,
    basis: Vec<BasisFunction>,
    complement: BasisFunction,
}

/// JSON descriptor of a kernel,
/// `{"family": "tntk"|"legendre"|"custom", "rank": M, "eigenvalues": [...]}`.
///
/// `eigenvalues` is required for `custom` and ignored (but emitted) for the
/// built-in families. `domain` selects the basis of a custom kernel
/// (Fourier modes on the circle or Legendre degrees on the interval) and
/// defaults to the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDescriptor {
    pub family: KernelFamily,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

/// Fourier modes in the order used for circle kernels: the constant, then
/// `cos kθ` before `sin kθ` for each frequency in `freqs`.
fn fourier_modes(freqs: impl Iterator<Item = u32>) -> impl Iterator<Item = BasisFunction> {
    std::iter::once(BasisFunction::Constant)
        .chain(freqs.flat_map(|k| [BasisFunction::Cos(k), BasisFunction::Sin(k)]))
}

impl SpectralKernel {
    /// Rank-`m` truncation of the circle NTK.
    ///
    /// The first seven eigenvalues are the closed-form table values; later
    /// ones are recovered by Fourier quadrature of [`ntk_closed_form`],
    /// skipping frequencies whose eigenvalue vanishes. Quadrature must
    /// reproduce the table within [`NTK_TABLE_TOLERANCE`], and the recovered
    /// tail must be non-increasing.
    pub fn tntk(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if m > MAX_TNTK_RANK {
            return Err(Error::Capability(format!(
                "truncated NTK implemented up to rank {MAX_TNTK_RANK}, requested {m}"
            )));
        }
        let (modes, quad) = ntk_modes((m + 1).max(7));
        let table = ntk_table_eigenvalues();
        for (i, &t) in table.iter().enumerate() {
            if (quad[i] - t).abs() > NTK_TABLE_TOLERANCE {
                return Err(Error::Numerical(format!(
                    "NTK quadrature eigenvalue {i} = {} differs from table value {t}",
                    quad[i]
                )));
            }
        }
        let mut eigenvalues: Vec<f64> = quad[..m].to_vec();
        for (e, &t) in eigenvalues.iter_mut().zip(table.iter()) {
            *e = t;
        }
        for w in quad[table.len().min(quad.len())..].windows(2) {
            if w[1] > w[0] + NTK_TABLE_TOLERANCE {
                return Err(Error::Numerical("NTK tail spectrum is not monotone".into()));
            }
        }
        Ok(SpectralKernel {
            family: KernelFamily::Tntk,
            domain: Domain::Circle,
            eigenvalues,
            basis: modes[..m].to_vec(),
            complement: modes[m],
        })
    }

    /// Legendre kernel of rank `m` (degrees `0..m`), eigenvalues
    /// `(3/π²)(k+1)⁻²`, complement `√(2m+1) P_m`.
    pub fn legendre(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        let c = legendre_scale();
        Ok(SpectralKernel {
            family: KernelFamily::Legendre,
            domain: Domain::Interval,
            eigenvalues: (0..m).map(|k| c / ((k + 1) * (k + 1)) as f64).collect(),
            basis: (0..m as u32).map(BasisFunction::Legendre).collect(),
            complement: BasisFunction::Legendre(m as u32),
        })
    }

    /// User-supplied spectrum on a standard basis of `domain`: Fourier modes
    /// (constant, cos 1, sin 1, cos 2, ...) on the circle or Legendre degrees
    /// on the interval. Eigenvalues must be positive and non-increasing.
    pub fn custom(domain: Domain, eigenvalues: Vec<f64>) -> Result<Self> {
        let m = eigenvalues.len();
        if m == 0 {
            return Err(Error::InvalidArgument("custom kernel needs at least one eigenvalue".into()));
        }
        check_positive(&eigenvalues)?;
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("eigenvalues must be non-increasing".into()));
        }
        let modes: Vec<BasisFunction> = match domain {
            Domain::Circle => fourier_modes(1..).take(m + 1).collect(),
            Domain::Interval => (0..=m as u32).map(BasisFunction::Legendre).collect(),
        };
        Ok(SpectralKernel {
            family: KernelFamily::Custom,
            domain,
            eigenvalues,
            basis: modes[..m].to_vec(),
            complement: modes[m],
        })
    }

    pub fn from_descriptor(d: &KernelDescriptor) -> Result<Self> {
        match d.family {
            KernelFamily::Tntk => Self::tntk(d.rank),
            KernelFamily::Legendre => Self::legendre(d.rank),
            KernelFamily::Custom => {
                let ev = d.eigenvalues.clone().ok_or_else(|| {
                    Error::Config("custom kernel descriptor needs \"eigenvalues\"".into())
                })?;
                if ev.len() != d.rank {
                    return Err(Error::Config(format!(
                        "rank {} does not match {} eigenvalues",
                        d.rank,
                        ev.len()
                    )));
                }
                Self::custom(d.domain.unwrap_or(Domain::Interval), ev)
            }
        }
    }

    pub fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor {
            family: self.family,
            rank: self.rank(),
            eigenvalues: Some(self.eigenvalues.clone()),
            domain: Some(self.domain),
        }
    }

    /// Copy of the kernel with eigenvalue `index` replaced. The basis and
    /// family tag are kept, so family-level spectrum checks will flag it.
    pub fn with_eigenvalue(&self, index: usize, value: f64) -> Result<Self> {
        if index >= self.rank() {
            return Err(Error::InvalidArgument(format!("eigenvalue index {index} out of range")));
        }
        let mut out = self.clone();
        out.eigenvalues[index] = value;
        check_positive(&out.eigenvalues)?;
        Ok(out)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn complement(&self) -> BasisFunction {
        self.complement
    }

    /// `Σ λ_k`, the average of `K(x, x)` under `ρ`.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `sup_x max_k |ψ_k(x)|` over the basis and the complement.
    pub fn sup_basis_norm(&self) -> f64 {
        self.basis
            .iter()
            .chain(std::iter::once(&self.complement))
            .map(|b| b.sup_norm())
            .fold(0.0, f64::max)
    }

    /// `ψ(x) = [ψ_k(x)]_k`.
    pub fn eval_features(&self, x: f64) -> Result<DVector<f64>> {
        self.domain.check(x)?;
        Ok(self.features_unchecked(x))
    }

    pub(crate) fn features_unchecked(&self, x: f64) -> DVector<f64> {
        match self.domain {
            // One recurrence pass for all degrees.
            Domain::Interval if self.basis_is_legendre_prefix() => {
                let m = self.rank();
                let mut out = DVector::zeros(m);
                let (mut p0, mut p1) = (1.0, x);
                for d in 0..m {
                    let p = match d {
                        0 => 1.0,
                        1 => x,
                        _ => {
                            let kf = d as f64;
                            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                            p0 = p1;
                            p1 = p2;
                            p2
                        }
                    };
                    out[d] = ((2 * d + 1) as f64).sqrt() * p;
                }
                out
            }
            _ => DVector::from_iterator(self.rank(), self.basis.iter().map(|b| b.eval(x))),
        }
    }

    fn basis_is_legendre_prefix(&self) -> bool {
        self.basis
            .iter()
            .enumerate()
            .all(|(i, b)| *b == BasisFunction::Legendre(i as u32))
    }

    pub fn eval_complement(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.complement.eval(x))
    }

    /// `K(x, x2) = Σ λ_k ψ_k(x) ψ_k(x2)`.
    pub fn eval_kernel(&self, x: f64, x2: f64) -> Result<f64> {
        let a = self.eval_features(x)?;
        let b = self.eval_features(x2)?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(l, (p, q))| l * p * q)
            .sum())
    }

    /// `Ψ = [ψ_k(x_i)]`, an `M × N` matrix.
    pub fn feature_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        for &x in xs {
            self.domain.check(x)?;
        }
        let mut psi = DMatrix::zeros(self.rank(), xs.len());
        for (i, &x) in xs.iter().enumerate() {
            psi.set_column(i, &self.features_unchecked(x));
        }
        Ok(psi)
    }

    /// `ψ₊(X)` as a length-`N` vector.
    pub fn complement_vector(&self, xs: &[f64]) -> Result<DVector<f64>> {
        for &x in xs {
            self.domain.check(x)?;
        }
        Ok(DVector::from_iterator(xs.len(), xs.iter().map(|&x| self.complement.eval(x))))
    }

    /// `Λ = diag(λ_k)`.
    pub fn lambda_diag(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.eigenvalues)
    }

    /// Gram matrix through the feature factorisation `Ψᵀ Λ Ψ`.
    pub fn gram_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("gram matrix needs at least one point".into()));
        }
        let psi = self.feature_matrix(xs)?;
        Ok(gram_from_features(&psi, &self.lambda_diag()))
    }

    /// Gram matrix by evaluating the Mercer sum entrywise.
    pub fn gram_matrix_direct(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("gram matrix needs at least one point".into()));
        }
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval_kernel(xs[i], xs[j])?;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Largest deviation of the quadrature Gram matrix `∫ψ_k ψ_l dρ` from
    /// the identity, over the basis and the complement.
    pub fn orthonormality_defect(&self, nodes: usize) -> f64 {
        let rule = self.domain.quadrature(nodes);
        let funcs: Vec<BasisFunction> = self
            .basis
            .iter()
            .cloned()
            .chain(std::iter::once(self.complement))
            .collect();
        let p = funcs.len();
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut row = vec![0.0; p];
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            for (r, f) in row.iter_mut().zip(&funcs) {
                *r = f.eval(x);
            }
            for a in 0..p {
                for b in a..p {
                    gram[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for a in 0..p {
            for b in a..p {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((gram[(a, b)] - target).abs());
            }
        }
        worst
    }
}

/// `Ψᵀ Λ Ψ`, symmetrised so that rounding cannot break exact symmetry.
pub fn gram_from_features(psi: &DMatrix<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = psi.clone();
    for (mut row, l) in scaled.row_iter_mut().zip(lambda.iter()) {
        row *= *l;
    }
    crate::linalg::symmetrize(&psi.tr_mul(&scaled))
}

fn check_positive(ev: &[f64]) -> Result<()> {
    if ev.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("eigenvalues must be finite and strictly positive".into()));
    }
    Ok(())
}

/// The first `count` NTK modes with nonzero eigenvalue, and the
/// quadrature-recovered eigenvalue of each.
fn ntk_modes(count: usize) -> (Vec<BasisFunction>, Vec<f64>) {
    let mut modes = vec![BasisFunction::Constant];
    let mut values = vec![ntk_fourier_eigenvalue(0, NTK_QUADRATURE_INTERVALS)];
    let mut k = 1u32;
    while modes.len() < count {
        let l = ntk_fourier_eigenvalue(k, NTK_QUADRATURE_INTERVALS);
        if l > NTK_NULL_MODE {
            modes.push(BasisFunction::Cos(k));
            values.push(l);
            modes.push(BasisFunction::Sin(k));
            values.push(l);
        }
        k += 1;
    }
    modes.truncate(count);
    values.truncate(count);
    (modes, values)
}

/// Quadrature-recovered eigenvalues of the first `count` NTK modes.
pub fn ntk_quadrature_spectrum(count: usize) -> Vec<f64> {
    ntk_modes(count).1
}
