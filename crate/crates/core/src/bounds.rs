//! High-probability bounds on the test error, with explicit constants.
//!
//! Every bound below holds with probability at least `1 − 2/N` and is
//! written in terms of `L = log N / N`. Residue terms (`C₁ L` on the bias,
//! `C₂ σ² (M/N) L` on the variance) can be switched off, which is how the
//! figures are drawn.
//!
//! Where a formula refers to the first and last eigenvalue, this module
//! uses the largest and smallest eigenvalue of the kernel, since the table
//! order of the truncated NTK is not monotone.

use serde::{Deserialize, Serialize};

use crate::exact_error::effective_dimensions;
use crate::kernel::SpectralKernel;
use crate::target::TargetSpec;
use crate::{Error, Result};

/// Variance residue constant.
pub const C2: f64 = 12.0;

/// Multiplier applied to the strict lower limit on `C₁`.
pub const C1_HEADROOM: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    General,
    /// `λ = 0` with an inconsistent target.
    Ridgeless,
    /// `γ̃₊ = 0`; takes precedence over `Ridgeless`.
    Consistent,
}

impl Regime {
    pub fn select(target: &TargetSpec, lambda: f64) -> Self {
        if target.is_consistent() {
            Regime::Consistent
        } else if lambda == 0.0 {
            Regime::Ridgeless
        } else {
            Regime::General
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub include_residue: bool,
    /// Replace `M` by `𝒩²(λ)` in the leading variance factor.
    pub sharpen_variance: bool,
    /// Constant of the Rademacher baseline; omitted when `None`.
    pub rademacher_c: Option<f64>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions { include_residue: true, sharpen_variance: false, rademacher_c: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampFlags {
    pub bias_lower: bool,
    pub variance_lower: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BachBounds {
    pub bias_upper: f64,
    pub variance_upper: f64,
    pub test_upper: f64,
    pub min_n: f64,
    pub r_squared: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub regime: Regime,
    pub bias_upper: f64,
    pub bias_lower: f64,
    pub variance_upper: f64,
    pub variance_lower: f64,
    pub test_upper: f64,
    pub test_lower: f64,
    pub c1: f64,
    pub c2: f64,
    pub include_residue: bool,
    /// Lower bounds that were negative and raised to zero.
    pub clamped: ClampFlags,
    /// `None` when the baseline does not apply (`λ = 0` or an
    /// inconsistent target).
    pub bach: Option<BachBounds>,
    pub rademacher_gap: Option<f64>,
    pub confidence: f64,
}

/// `log N / N`.
pub fn log_ratio(n: usize) -> f64 {
    let n = n as f64;
    n.ln() / n
}

fn check_common(n: usize, lambda: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("bounds need N >= 3, got {n}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!("noise variance must be >= 0, got {sigma2}")));
    }
    Ok(())
}

/// `C₁ = 1.01 · [8(λ r̄ √M + ½|γ̃₊|)² + (5/2)‖f̃‖²_{L²}]`.
pub fn c1(target: &TargetSpec, lambda: f64) -> f64 {
    let f = target.functionals();
    let m = target.kernel().rank() as f64;
    let a = lambda * f.r_over * m.sqrt() + 0.5 * target.gamma_plus().abs();
    C1_HEADROOM * (8.0 * a * a + 2.5 * f.l2_norm_sq)
}

pub fn refined_bias_bounds(target: &TargetSpec, n: usize, lambda: f64, include_residue: bool) -> Result<Interval> {
    check_common(n, lambda)?;
    let kernel = target.kernel();
    let f = target.functionals();
    let l = log_ratio(n);
    let sl = l.sqrt();
    let residue = if include_residue { c1(target, lambda) * l } else { 0.0 };
    let gp2 = target.gamma_plus().powi(2);
    let l_min = kernel.min_eigenvalue();
    let l_max = kernel.max_eigenvalue();
    let shrink = lambda * lambda * l_min / (l_min + lambda).powi(2);
    let h = f.rkhs_norm_sq;

    Ok(match Regime::select(target, lambda) {
        Regime::Ridgeless => Interval {
            upper: gp2 * (1.0 + l) + 6.0 * gp2 * l.powf(1.5),
            lower: gp2 * (1.0 - l) - 6.0 * gp2 * l.powf(1.5),
        },
        Regime::Consistent => Interval {
            upper: lambda * h * (1.0 + 2.0 * sl) + residue,
            lower: shrink * h * (1.0 - 2.0 * sl) - residue,
        },
        Regime::General => Interval {
            upper: gp2 + lambda * h + (0.25 * f.l2_norm_sq + 2.0 * lambda * h) * sl + residue,
            lower: gp2 + shrink * h
                - (0.25 * f.l2_norm_sq + 2.0 * lambda * lambda / (l_max + lambda) * h) * sl
                - residue,
        },
    })
}

pub fn refined_variance_bounds(
    kernel: &SpectralKernel,
    n: usize,
    lambda: f64,
    sigma2: f64,
    include_residue: bool,
    sharpen: bool,
) -> Result<Interval> {
    check_common(n, lambda)?;
    check_sigma2(sigma2)?;
    let l = log_ratio(n);
    let m = kernel.rank() as f64;
    let scale = sigma2 * m / n as f64;
    let residue = if include_residue { C2 * scale * l } else { 0.0 };
    let lead = if sharpen {
        sigma2 * effective_dimensions(kernel, lambda).n_eff_sq / n as f64
    } else {
        scale
    };
    let l_min = kernel.min_eigenvalue();
    let shrink = (l_min / (l_min + lambda)).powi(2);
    Ok(Interval {
        upper: lead * (1.0 + l.sqrt()) + residue,
        lower: shrink * scale * (1.0 - l.sqrt()) - residue,
    })
}

/// Sum of the bias and variance bounds, without clamping.
pub fn test_error_bounds(
    target: &TargetSpec,
    n: usize,
    lambda: f64,
    sigma2: f64,
    include_residue: bool,
) -> Result<Interval> {
    let b = refined_bias_bounds(target, n, lambda, include_residue)?;
    let v = refined_variance_bounds(target.kernel(), n, lambda, sigma2, include_residue, false)?;
    Ok(Interval { lower: b.lower + v.lower, upper: b.upper + v.upper })
}

/// Baseline bounds with `R² = Σ λ_k` of the truncated kernel.
pub fn bach_bounds(target: &TargetSpec, n: usize, lambda: f64, sigma2: f64, tau: f64) -> Result<BachBounds> {
    if lambda == 0.0 {
        return Err(Error::Divergent("baseline bounds diverge at λ = 0".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be > 0, got {lambda}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("τ must lie in (0, 1), got {tau}")));
    }
    if !target.is_consistent() {
        return Err(Error::Capability("baseline bounds need a target inside the RKHS".into()));
    }
    check_sigma2(sigma2)?;
    if n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    let r2 = target.kernel().trace();
    let bias_upper = 4.0 * lambda * target.functionals().rkhs_norm_sq;
    let variance_upper = 8.0 * sigma2 * r2 / (lambda * n as f64) * (1.0 + 2.0 * (2.0 / tau).ln());
    Ok(BachBounds {
        bias_upper,
        variance_upper,
        test_upper: bias_upper + variance_upper,
        min_n: 4.0 / 3.0 + r2 / (8.0 * lambda) * (14.0 * r2 / (lambda * tau)).ln(),
        r_squared: r2,
        tau,
    })
}

/// Generalisation gap `(c/√N)(1 + ½√(log(1/τ)/2))`.
pub fn rademacher_gap(n: usize, tau: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) || !(tau > 0.0 && tau <= 1.0) || n == 0 {
        return Err(Error::InvalidArgument(format!("need c > 0, τ in (0, 1], N > 0; got c={c}, τ={tau}, N={n}")));
    }
    Ok(c / (n as f64).sqrt() * (1.0 + 0.5 * ((1.0 / tau).ln() / 2.0).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinNRequirement {
    pub g: f64,
    pub rank: usize,
    /// `4(12G²)²(M+1)`, the log of the concentration threshold.
    pub log_concentration: f64,
    /// `max(exp(4(12G²)²(M+1)), 9)`; infinite when it overflows.
    pub concentration: f64,
    /// `max((12G)⁴(M+1)², 9)`.
    pub variance: f64,
    pub note: String,
}

/// Sub-Gaussian constant used by default: `sup_x max_k |ψ_k(x)|`.
pub fn default_sub_gaussian(kernel: &SpectralKernel) -> f64 {
    kernel.sup_basis_norm()
}

pub fn min_n_requirement(kernel: &SpectralKernel, g: f64) -> Result<MinNRequirement> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::InvalidArgument(format!("G must be > 0, got {g}")));
    }
    let m1 = kernel.rank() as f64 + 1.0;
    let log_concentration = 4.0 * (12.0 * g * g).powi(2) * m1;
    Ok(MinNRequirement {
        g,
        rank: kernel.rank(),
        log_concentration,
        concentration: log_concentration.exp().max(9.0),
        variance: ((12.0 * g).powi(4) * m1 * m1).max(9.0),
        note: "sample sizes used in practice sit far below the concentration threshold; \
               the bounds are evaluated there as approximations"
            .into(),
    })
}

/// Residue-free enclosure with the exact sums
/// `I = λ² Σ γ̃_k²/(λ_k+λ)²` and `𝒩²(λ)`:
/// `γ̃₊² + I(1 ± 2√L) + (σ²/N)𝒩²(1 ± √L)`.
pub fn enclosure_bounds(target: &TargetSpec, n: usize, lambda: f64, sigma2: f64) -> Result<Interval> {
    check_common(n, lambda)?;
    check_sigma2(sigma2)?;
    let kernel = target.kernel();
    let i_term: f64 = lambda
        * lambda
        * target
            .gamma()
            .iter()
            .zip(kernel.eigenvalues())
            .map(|(g, l)| g * g / (l + lambda).powi(2))
            .sum::<f64>();
    let var = sigma2 / n as f64 * effective_dimensions(kernel, lambda).n_eff_sq;
    let sl = log_ratio(n).sqrt();
    let gp2 = target.gamma_plus().powi(2);
    Ok(Interval {
        upper: gp2 + i_term * (1.0 + 2.0 * sl) + var * (1.0 + sl),
        lower: gp2 + i_term * (1.0 - 2.0 * sl) + var * (1.0 - sl),
    })
}

pub fn bounds_report(
    target: &TargetSpec,
    n: usize,
    lambda: f64,
    sigma2: f64,
    opts: BoundOptions,
) -> Result<BoundsReport> {
    let bias = refined_bias_bounds(target, n, lambda, opts.include_residue)?;
    let var = refined_variance_bounds(
        target.kernel(),
        n,
        lambda,
        sigma2,
        opts.include_residue,
        opts.sharpen_variance,
    )?;
    let clamped = ClampFlags { bias_lower: bias.lower < 0.0, variance_lower: var.lower < 0.0 };
    let bias_lower = bias.lower.max(0.0);
    let variance_lower = var.lower.max(0.0);
    if clamped.bias_lower || clamped.variance_lower {
        log::debug!("negative lower bound clamped to 0 at N={n}, λ={lambda}: {clamped:?}");
    }
    let tau = 2.0 / n as f64;
    let bach = match bach_bounds(target, n, lambda, sigma2, tau) {
        Ok(b) => Some(b),
        Err(Error::Divergent(_) | Error::Capability(_)) => None,
        Err(e) => return Err(e),
    };
    let rademacher_gap = opts.rademacher_c.map(|c| rademacher_gap(n, tau, c)).transpose()?;
    Ok(BoundsReport {
        n,
        lambda,
        sigma2,
        regime: Regime::select(target, lambda),
        bias_upper: bias.upper,
        bias_lower,
        variance_upper: var.upper,
        variance_lower,
        test_upper: bias.upper + var.upper,
        test_lower: bias_lower + variance_lower,
        c1: c1(target, lambda),
        c2: C2,
        include_residue: opts.include_residue,
        clamped,
        bach,
        rademacher_gap,
        confidence: 1.0 - tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn tntk() -> Arc<SpectralKernel> {
        Arc::new(SpectralKernel::tntk(7).unwrap())
    }

    fn general_target() -> TargetSpec {
        TargetSpec::new(tntk(), vec![0.3, 0.2, 0.0, 0.1, -0.1, 0.05, 0.0], 0.2).unwrap()
    }

    #[test]
    fn regime_selection() {
        let k = tntk();
        let cons = TargetSpec::tntk_cosine(k.clone()).unwrap();
        assert_eq!(Regime::select(&cons, 0.0), Regime::Consistent);
        assert_eq!(Regime::select(&general_target(), 0.0), Regime::Ridgeless);
        assert_eq!(Regime::select(&general_target(), 1e-3), Regime::General);
    }

    #[test]
    fn small_n_rejected() {
        let t = general_target();
        assert!(matches!(refined_bias_bounds(&t, 2, 1e-3, true), Err(Error::InvalidArgument(_))));
        assert!(matches!(refined_variance_bounds(t.kernel(), 2, 1e-3, 0.1, true, false), Err(Error::InvalidArgument(_))));
        assert!(refined_bias_bounds(&t, 3, 1e-3, true).is_ok());
    }

    #[test]
    fn consistent_ridgeless_bias_is_residue_only() {
        let k = tntk();
        let t = TargetSpec::tntk_cosine(k).unwrap();
        let b = refined_bias_bounds(&t, 100, 0.0, true).unwrap();
        assert!((b.upper - c1(&t, 0.0) * log_ratio(100)).abs() < 1e-15);
        let b = refined_bias_bounds(&t, 100, 0.0, false).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn ridgeless_formula() {
        let t = general_target();
        let n = 150;
        let l = log_ratio(n);
        let gp2 = 0.04;
        let b = refined_bias_bounds(&t, n, 0.0, true).unwrap();
        assert!((b.upper - (gp2 * (1.0 + l) + 6.0 * gp2 * l.powf(1.5))).abs() < 1e-15);
        assert!((b.lower - (gp2 * (1.0 - l) - 6.0 * gp2 * l.powf(1.5))).abs() < 1e-15);
    }

    #[test]
    fn consistent_formula() {
        let k = tntk();
        let t = TargetSpec::tntk_cosine(k.clone()).unwrap();
        let (n, lambda) = (80, 1e-3);
        let h = t.functionals().rkhs_norm_sq;
        let b = refined_bias_bounds(&t, n, lambda, false).unwrap();
        assert!((b.upper - lambda * h * (1.0 + 2.0 * log_ratio(n).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn variance_formula_and_zero_noise() {
        let k = tntk();
        let v = refined_variance_bounds(&k, 200, 0.05 / 200.0, 0.05, false, false).unwrap();
        let expected = 0.05 * (7.0 / 200.0) * (1.0 + (200f64.ln() / 200.0).sqrt());
        assert!((v.upper - expected).abs() < 1e-16);
        let z = refined_variance_bounds(&k, 200, 1e-3, 0.0, true, true).unwrap();
        assert_eq!((z.lower, z.upper), (0.0, 0.0));
        let s = refined_variance_bounds(&k, 200, 1e-2, 0.05, false, true).unwrap();
        assert!(s.upper < v.upper);
    }

    #[test]
    fn variance_bounds_meet_as_n_grows() {
        let k = tntk();
        let n = 100_000_000;
        let v = refined_variance_bounds(&k, n, 0.0, 1.0, true, false).unwrap();
        let lead = 7.0 / n as f64;
        assert!((v.upper / lead - 1.0).abs() < 1e-3);
        assert!((v.lower / lead - 1.0).abs() < 1e-3);
    }

    #[test]
    fn bias_limits_at_large_n() {
        let t = general_target();
        let lambda = 1e-2;
        let f = t.functionals();
        let k = t.kernel();
        let b = refined_bias_bounds(&t, 100_000_000, lambda, false).unwrap();
        let up = 0.04 + lambda * f.rkhs_norm_sq;
        let l_min = k.min_eigenvalue();
        let lo = 0.04 + lambda * lambda * l_min / (l_min + lambda).powi(2) * f.rkhs_norm_sq;
        assert!((b.upper - up).abs() / up < 1e-3);
        assert!((b.lower - lo).abs() / lo < 1e-2);
    }

    #[test]
    fn ordering_with_residue() {
        let t = general_target();
        for n in [3, 10, 50, 1000] {
            for lambda in [0.0, 1e-6, 1e-2, 1.0] {
                let b = refined_bias_bounds(&t, n, lambda, true).unwrap();
                assert!(b.lower <= b.upper);
                let v = refined_variance_bounds(t.kernel(), n, lambda, 0.1, true, false).unwrap();
                assert!(v.lower <= v.upper);
            }
        }
    }

    #[test]
    fn report_clamps_and_records() {
        let t = general_target();
        let r = bounds_report(&t, 10, 1e-3, 0.05, BoundOptions::default()).unwrap();
        assert!(r.clamped.bias_lower && r.clamped.variance_lower);
        assert_eq!(r.bias_lower, 0.0);
        assert_eq!(r.variance_lower, 0.0);
        assert_eq!(r.confidence, 0.8);
        assert!(r.bach.is_none());
        assert_eq!(r.test_upper, r.bias_upper + r.variance_upper);
    }

    #[test]
    fn bach_scaling_and_divergence() {
        let t = TargetSpec::tntk_cosine(tntk()).unwrap();
        let a = bach_bounds(&t, 50, 1e-3, 0.05, 0.04).unwrap();
        let b = bach_bounds(&t, 50, 5e-4, 0.05, 0.04).unwrap();
        assert!((b.variance_upper / a.variance_upper - 2.0).abs() < 1e-12);
        assert!((a.bias_upper - 4e-3 * t.functionals().rkhs_norm_sq).abs() < 1e-18);
        assert!(matches!(bach_bounds(&t, 50, 0.0, 0.05, 0.04), Err(Error::Divergent(_))));
        // τ = 2/N turns the log factor into 1 + 2 log N.
        let n = 120;
        let c = bach_bounds(&t, n, 1e-3, 0.05, 2.0 / n as f64).unwrap();
        let direct = 8.0 * 0.05 * c.r_squared / (1e-3 * n as f64) * (1.0 + 2.0 * (n as f64).ln());
        assert!((c.variance_upper - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn rademacher_scaling() {
        let a = rademacher_gap(100, 0.1, 2.0).unwrap();
        let b = rademacher_gap(400, 0.1, 2.0).unwrap();
        assert!((a / b - 2.0).abs() < 1e-14);
        assert!((rademacher_gap(100, 1.0, 3.0).unwrap() - 0.3).abs() < 1e-15);
        assert!(rademacher_gap(100, 0.1, 0.0).is_err());
    }

    #[test]
    fn min_n_thresholds() {
        let k = tntk();
        let g = std::f64::consts::FRAC_1_SQRT_2;
        let r = min_n_requirement(&k, g).unwrap();
        assert!((r.log_concentration - 4.0 * 36.0 * 8.0).abs() < 1e-9);
        assert!((r.variance - 20736.0 / 4.0 * 64.0).abs() < 1e-6);
        let bigger = min_n_requirement(&SpectralKernel::tntk(9).unwrap(), g).unwrap();
        assert!(bigger.log_concentration > r.log_concentration && bigger.variance > r.variance);
        let d = min_n_requirement(&k, default_sub_gaussian(&k)).unwrap();
        assert!(d.concentration.is_infinite() && d.log_concentration.is_finite());
    }

    #[test]
    fn enclosure_contains_and_zero_cases() {
        let k = Arc::new(SpectralKernel::legendre(5).unwrap());
        let t = TargetSpec::legendre_x_squared(k.clone()).unwrap();
        let e = enclosure_bounds(&t, 200, 0.05 / 200.0, 0.05).unwrap();
        assert!(e.lower < e.upper && e.lower > 0.0);
        let z = enclosure_bounds(&TargetSpec::zero(k), 200, 1e-3, 0.0).unwrap();
        assert_eq!((z.lower, z.upper), (0.0, 0.0));
    }
}
