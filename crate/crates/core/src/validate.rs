//! Self-check suite run by `finrank-krr validate`.
//!
//! Each check records its tolerance and the worst value observed. The
//! suite covers the kernel spectrum and basis, the three routes to the
//! test error, the projection identities, the Neumann tail for orders
//! 0 to 5, and the deterministic bias/variance approximations.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exact_error::{self, FluctuationState};
use crate::kernel::{self, KernelFamily, SpectralKernel};
use crate::regressor;
use crate::target::TargetSpec;
use crate::{linalg, Result};

pub const SAMPLE_SIZES: [usize; 3] = [20, 50, 200];
pub const RIDGES: [f64; 3] = [1e-6, 1e-3, 1e-1];
pub const DRAWS_PER_KERNEL: usize = 20;
pub const NEUMANN_N: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Default)]
struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    /// Pass when `observed <= tolerance`.
    fn at_most(&mut self, name: impl Into<String>, tolerance: f64, observed: f64) {
        self.checks.push(Check {
            name: name.into(),
            tolerance,
            observed,
            passed: observed <= tolerance,
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1.0)
}

/// Distance of the spectrum from an independent reference: Fourier
/// quadrature of the closed-form NTK, or the Legendre formula.
pub fn spectrum_defect(kernel: &SpectralKernel) -> Option<f64> {
    let reference: Vec<f64> = match kernel.family() {
        KernelFamily::Tntk => kernel::ntk_quadrature_spectrum(kernel.rank()),
        KernelFamily::Legendre => {
            (0..kernel.rank()).map(|d| kernel::legendre_scale() / ((d + 1) * (d + 1)) as f64).collect()
        }
        KernelFamily::Custom => return None,
    };
    Some(
        reference
            .iter()
            .zip(kernel.eigenvalues())
            .map(|(r, l)| (r - l).abs())
            .fold(0.0, f64::max),
    )
}

/// A generic target with every coefficient and the complement nonzero.
fn probe_target(kernel: &Arc<SpectralKernel>) -> Result<TargetSpec> {
    let gamma = (0..kernel.rank()).map(|k| 0.5 / (k + 1) as f64 * if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    TargetSpec::new(kernel.clone(), gamma, 0.3)
}

fn kernel_checks(s: &mut Suite, label: &str, kernel: &Arc<SpectralKernel>, seed: u64) -> Result<()> {
    if let Some(d) = spectrum_defect(kernel) {
        s.at_most(format!("{label}: spectrum vs reference"), 1e-8, d);
    }
    s.at_most(format!("{label}: basis orthonormality"), 1e-10, kernel.orthonormality_defect(2048));

    let target = probe_target(kernel)?;
    let noiseless = target.sample_dataset(40, 0.0, seed)?;
    let g1 = kernel.gram_matrix(&noiseless.inputs)?;
    let g2 = kernel.gram_matrix_direct(&noiseless.inputs)?;
    s.at_most(format!("{label}: Gram factorisation"), 1e-12, linalg::max_abs_diff(&g1, &g2));

    let (mut bias_err, mut var_err, mut quad_err, mut proj_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut draw = 0u64;
    for &n in &SAMPLE_SIZES {
        for &lambda in &RIDGES {
            let data = target.sample_dataset(n, 0.0, seed.wrapping_add(1000 + draw))?;
            draw += 1;
            let sigma2 = 0.05;
            let fitted = regressor::fit(kernel, &data, lambda)?;
            let state = exact_error::fluctuation_state(kernel, &data.inputs, lambda)?;
            let report = exact_error::error_report(&state, &target, sigma2);
            bias_err = bias_err.max(rel(report.bias, exact_error::bias_parseval_oracle(&fitted, &target)?));
            let v = exact_error::variance_direct_oracle(kernel, &data.inputs, lambda, sigma2)?;
            var_err = var_err.max(rel(report.variance, v));
            let q = exact_error::quadrature_test_error_oracle(&fitted, &target, sigma2)?;
            quad_err = quad_err.max((q - report.test_error).abs() / report.test_error);
            let (ple, pgt) = exact_error::projections_direct(kernel, &data.inputs, lambda)?;
            let (ble, bgt) = exact_error::projections_from_b(&state);
            proj_err = proj_err.max(linalg::max_abs_diff(&ple, &ble)).max((pgt - bgt).amax());
        }
    }
    s.at_most(format!("{label}: bias vs Parseval oracle"), 1e-9, bias_err);
    s.at_most(format!("{label}: variance vs direct trace"), 1e-10, var_err);
    s.at_most(format!("{label}: test error vs quadrature"), 1e-6, quad_err);
    s.at_most(format!("{label}: projection identities"), 1e-10, proj_err);

    let mut states: Vec<FluctuationState> = Vec::new();
    for d in 0..DRAWS_PER_KERNEL as u64 {
        let data = target.sample_dataset(NEUMANN_N, 0.0, seed.wrapping_add(5000 + d))?;
        let lambda = RIDGES[(d as usize) % RIDGES.len()];
        let state = exact_error::fluctuation_state(kernel, &data.inputs, lambda)?;
        if state.delta_norm < 0.5 {
            states.push(state);
        }
    }
    let skipped = (DRAWS_PER_KERNEL - states.len()) as f64 / DRAWS_PER_KERNEL as f64;
    s.at_most(format!("{label}: fraction of draws with δ ≥ 1/2"), 0.5, skipped);
    for order in 0..=5 {
        // Worst ratio ‖B − B⁽ⁿ⁾‖ / 2δⁿ⁺¹; the bound holds when it is ≤ 1.
        let worst = states
            .iter()
            .map(|st| {
                let (tail, bound) = exact_error::neumann_tail(st, order);
                tail / bound
            })
            .fold(0.0, f64::max);
        s.at_most(format!("{label}: Neumann tail n={order}"), 1.0, worst);
    }
    let (mut bias_viol, mut var_viol) = (0.0f64, 0.0f64);
    for st in &states {
        if let Some(a) = exact_error::bias_approximation(st, &target) {
            bias_viol = bias_viol.max((a.exact - a.center).abs() / a.radius);
        }
        if let Some(a) = exact_error::variance_approximation(st, 0.05) {
            var_viol = var_viol.max((a.exact - a.center).abs() / a.radius);
        }
    }
    s.at_most(format!("{label}: bias approximation ratio"), 1.0, bias_viol);
    s.at_most(format!("{label}: variance approximation ratio"), 1.0, var_viol);
    Ok(())
}

pub fn validate_kernels(kernels: &[(&str, Arc<SpectralKernel>)], seed: u64) -> Result<ValidationReport> {
    let mut s = Suite::default();
    let table = kernel::ntk_table_eigenvalues();
    let quad = kernel::ntk_quadrature_spectrum(table.len());
    let table_err = table.iter().zip(&quad).map(|(t, q)| (t - q).abs()).fold(0.0, f64::max);
    s.at_most("NTK table vs closed-form quadrature", 1e-8, table_err);
    for (label, k) in kernels {
        kernel_checks(&mut s, label, k, seed)?;
    }
    let passed = s.checks.iter().all(|c| c.passed);
    Ok(ValidationReport { seed, checks: s.checks, passed })
}

/// The suite on the truncated NTK of rank 7 and the Legendre kernel of
/// rank 5.
pub fn validate_default(seed: u64) -> Result<ValidationReport> {
    validate_kernels(
        &[
            ("tntk(7)", Arc::new(SpectralKernel::tntk(7)?)),
            ("legendre(5)", Arc::new(SpectralKernel::legendre(5)?)),
        ],
        seed,
    )
}
