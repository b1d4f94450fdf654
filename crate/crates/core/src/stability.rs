//! Linear stability of the homogeneous state `u1 = u2 = 0`.
//!
//! Linearizing the `(u1, u2)` equations at the origin, a perturbation
//! `δu_i = a_i cos(2πkr)` evolves under
//!
//! ```text
//! A(k) = [ −1 + β1(1 − t1²)φ̂1(k)    t1                    ]
//!        [ −t2                      −1 + β2(1 − t2²)φ̂2(k) ]
//! ```
//!
//! with `t_i = tanh(β_i λ)`. `v` does not feed back into `u` and is left out.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::KernelSpec;
use crate::lattice::validate_couplings;
use crate::pde::{integrate_pde, ConvolutionMethod, MacroState, PdeParams};
use crate::rng;
use crate::schedule::Schedule;

/// Mode-`k` linearization and its eigenvalues, largest real part first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMatrix {
    pub k: u32,
    pub entries: [[f64; 2]; 2],
    pub eigenvalues: [Complex64; 2],
}

impl ModeMatrix {
    pub fn from_entries(k: u32, entries: [[f64; 2]; 2]) -> Self {
        ModeMatrix {
            k,
            entries,
            eigenvalues: eigenvalues_2x2(entries),
        }
    }

    /// Largest real part of the eigenvalues.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues[0].re
    }
}

/// Roots of `z² − tr·z + det` for a real 2×2 matrix. The discriminant is
/// formed as `((a−d)/2)² + bc` to avoid cancellation in `tr² − 4det`, and
/// the smaller real root comes from `det / λ₁`.
pub fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [Complex64; 2] {
    let [[a, b], [c, d]] = m;
    let half_tr = 0.5 * (a + d);
    let half_gap = 0.5 * (a - d);
    let disc = half_gap * half_gap + b * c;
    if disc >= 0.0 {
        let root = disc.sqrt();
        let big = if half_tr >= 0.0 {
            half_tr + root
        } else {
            half_tr - root
        };
        let det = a * d - b * c;
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (hi, lo) = if big >= small {
            (big, small)
        } else {
            (small, big)
        };
        [Complex64::new(hi, 0.0), Complex64::new(lo, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
    }
}

/// `∫₀¹ φ(r) cos(2πkr) dr` of the normalized kernel.
pub fn kernel_fourier_coefficient(spec: &KernelSpec, k: i64) -> f64 {
    spec.fourier_coefficient(k)
}

/// Entries of `A(k)` given the kernel coefficients at `k`.
pub fn linearized_matrix(
    beta1: f64,
    beta2: f64,
    lambda: f64,
    phi1_hat: f64,
    phi2_hat: f64,
) -> [[f64; 2]; 2] {
    let t1 = (beta1 * lambda).tanh();
    let t2 = (beta2 * lambda).tanh();
    [
        [-1.0 + beta1 * (1.0 - t1 * t1) * phi1_hat, t1],
        [-t2, -1.0 + beta2 * (1.0 - t2 * t2) * phi2_hat],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub modes: Vec<ModeMatrix>,
    pub max_growth: f64,
    pub unstable_modes: Vec<u32>,
    /// Mode 0 decays while some `k ≠ 0` grows.
    pub turing: bool,
}

impl DispersionReport {
    pub fn growth_at_zero(&self) -> f64 {
        self.modes[0].spectral_abscissa()
    }

    /// Largest spectral abscissa over `k ≥ 1`.
    pub fn max_nonzero_growth(&self) -> f64 {
        self.modes[1..]
            .iter()
            .map(ModeMatrix::spectral_abscissa)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Dispersion relation for `k = 0..=k_max` from the continuum kernels.
pub fn dispersion(
    beta1: f64,
    beta2: f64,
    lambda: f64,
    kernel1: &KernelSpec,
    kernel2: &KernelSpec,
    k_max: u32,
) -> Result<DispersionReport> {
    kernel1.validate()?;
    kernel2.validate()?;
    let phi1: Vec<f64> = (0..=k_max as i64)
        .map(|k| kernel1.fourier_coefficient(k))
        .collect();
    let phi2: Vec<f64> = (0..=k_max as i64)
        .map(|k| kernel2.fourier_coefficient(k))
        .collect();
    dispersion_from_coefficients(beta1, beta2, lambda, &phi1, &phi2)
}

/// Dispersion relation from explicit coefficient sequences, entry `k` being
/// mode `k`.
pub fn dispersion_from_coefficients(
    beta1: f64,
    beta2: f64,
    lambda: f64,
    phi1_hat: &[f64],
    phi2_hat: &[f64],
) -> Result<DispersionReport> {
    validate_couplings(beta1, beta2, lambda)?;
    if phi1_hat.len() != phi2_hat.len() {
        return Err(crate::Error::Dimension {
            expected: phi1_hat.len(),
            actual: phi2_hat.len(),
        });
    }
    if phi1_hat.len() < 2 {
        return Err(invalid("k_max", "must be at least 1"));
    }
    let modes: Vec<ModeMatrix> = phi1_hat
        .iter()
        .zip(phi2_hat)
        .enumerate()
        .map(|(k, (&p1, &p2))| {
            ModeMatrix::from_entries(k as u32, linearized_matrix(beta1, beta2, lambda, p1, p2))
        })
        .collect();
    let max_growth = modes
        .iter()
        .map(ModeMatrix::spectral_abscissa)
        .fold(f64::NEG_INFINITY, f64::max);
    let unstable_modes: Vec<u32> = modes
        .iter()
        .filter(|m| m.spectral_abscissa() > 0.0)
        .map(|m| m.k)
        .collect();
    let turing = modes[0].spectral_abscissa() < 0.0 && unstable_modes.iter().any(|&k| k != 0);
    Ok(DispersionReport {
        modes,
        max_growth,
        unstable_modes,
        turing,
    })
}

/// Cartesian grid over couplings and wrapped-gaussian scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub lambda: Vec<f64>,
    pub scale1: Vec<f64>,
    pub scale2: Vec<f64>,
}

impl ScanGrid {
    /// Evenly spaced grid, `points` values per axis, endpoints included.
    pub fn linspace(
        beta1: (f64, f64),
        beta2: (f64, f64),
        lambda: (f64, f64),
        scale: (f64, f64),
        points: usize,
    ) -> Self {
        let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
            if points <= 1 {
                return vec![lo];
            }
            (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect()
        };
        ScanGrid {
            beta1: axis(beta1),
            beta2: axis(beta2),
            lambda: axis(lambda),
            scale1: axis(scale),
            scale2: axis(scale),
        }
    }

    pub fn len(&self) -> usize {
        self.beta1.len()
            * self.beta2.len()
            * self.lambda.len()
            * self.scale1.len()
            * self.scale2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell `i` in row-major order (`scale2` varies fastest).
    pub fn cell(&self, mut i: usize) -> ScanPoint {
        let mut take = |axis: &[f64]| {
            let v = axis[i % axis.len()];
            i /= axis.len();
            v
        };
        let scale2 = take(&self.scale2);
        let scale1 = take(&self.scale1);
        let lambda = take(&self.lambda);
        let beta2 = take(&self.beta2);
        let beta1 = take(&self.beta1);
        ScanPoint {
            beta1,
            beta2,
            lambda,
            scale1,
            scale2,
        }
    }
}

/// Turing point found by the 9-per-axis scan of
/// `β ∈ [0.5, 2]`, `λ ∈ [0.1, 2]`, gaussian scales in `[0.02, 0.3]`
/// (the cell with the largest nonzero-mode growth).
pub const TURING_FIXTURE: ScanPoint = ScanPoint {
    beta1: 2.0,
    beta2: 0.6875,
    lambda: 0.3375,
    scale1: 0.02,
    scale2: 0.3,
};

/// The scan box around [`TURING_FIXTURE`].
pub fn default_scan_grid() -> ScanGrid {
    ScanGrid::linspace((0.5, 2.0), (0.5, 2.0), (0.1, 2.0), (0.02, 0.3), 9)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub scale1: f64,
    pub scale2: f64,
}

impl ScanPoint {
    pub fn kernels(&self) -> (KernelSpec, KernelSpec) {
        (
            KernelSpec::WrappedGaussian { scale: self.scale1 },
            KernelSpec::WrappedGaussian { scale: self.scale2 },
        )
    }

    pub fn dispersion(&self, k_max: u32) -> Result<DispersionReport> {
        let (k1, k2) = self.kernels();
        dispersion(self.beta1, self.beta2, self.lambda, &k1, &k2, k_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(flatten)]
    pub point: ScanPoint,
    pub growth_k0: f64,
    pub max_growth_nonzero: f64,
    pub turing: bool,
}

/// Dispersion at every grid cell, in cell order.
pub fn regime_scan(grid: &ScanGrid, k_max: u32) -> Result<Vec<ScanRow>> {
    if grid.is_empty() {
        return Err(invalid("scan", "grid has no cells"));
    }
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let point = grid.cell(i);
            let report = point.dispersion(k_max)?;
            Ok(ScanRow {
                point,
                growth_k0: report.growth_at_zero(),
                max_growth_nonzero: report.max_nonzero_growth(),
                turing: report.turing,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationSettings {
    pub grid_size: usize,
    pub dt: f64,
    pub horizon: f64,
    pub sample_dt: f64,
    pub amplitude: f64,
    /// Highest Fourier mode present in the random perturbation.
    pub max_mode: u32,
    pub required_growth: f64,
}

impl Default for ConfirmationSettings {
    fn default() -> Self {
        ConfirmationSettings {
            grid_size: 128,
            dt: 0.05,
            horizon: 60.0,
            sample_dt: 0.5,
            amplitude: 1e-3,
            max_mode: 4,
            required_growth: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuringConfirmation {
    pub initial_norm: f64,
    pub peak_norm: f64,
    pub peak_time: f64,
    pub growth_factor: f64,
    pub confirmed: bool,
}

/// Integrates the nonlinear system from a small random low-mode perturbation
/// of the origin and records the peak of `max(‖u1‖∞, ‖u2‖∞)`.
pub fn confirm_turing(
    point: &ScanPoint,
    settings: &ConfirmationSettings,
    seed: u64,
) -> Result<TuringConfirmation> {
    if !(settings.amplitude > 0.0 && settings.amplitude < 1.0) {
        return Err(invalid("amplitude", "must lie in (0, 1)"));
    }
    let (k1, k2) = point.kernels();
    let params = PdeParams::new(
        point.beta1,
        point.beta2,
        point.lambda,
        &k1,
        &k2,
        settings.grid_size,
    )?
    .with_convolution(ConvolutionMethod::Spectral);
    let mut rng = rng::stream(seed, 0);
    let mut field = || -> Vec<f64> {
        let coeffs: Vec<(f64, f64)> = (0..settings.max_mode)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let m = settings.grid_size;
        let raw: Vec<f64> = (0..m)
            .map(|j| {
                let r = j as f64 / m as f64;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, (a, b))| {
                        let w = std::f64::consts::TAU * (i + 1) as f64 * r;
                        a * w.cos() + b * w.sin()
                    })
                    .sum()
            })
            .collect();
        let peak = raw.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        raw.iter().map(|x| settings.amplitude * x / peak).collect()
    };
    let u1 = field();
    let u2 = field();
    let v = u1.iter().zip(&u2).map(|(a, b)| a * b).collect();
    let state0 = MacroState::new(u1, u2, v)?;
    let initial_norm = state0.u_sup_norm();
    let schedule = Schedule::uniform(settings.horizon, settings.sample_dt)?;
    let path = integrate_pde(&state0, &params, &schedule, settings.dt)?;
    let (peak_time, peak_norm) =
        path.iter()
            .map(|s| (s.time, s.u_sup_norm()))
            .fold(
                (0.0, 0.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
    let growth_factor = peak_norm / initial_norm;
    Ok(TuringConfirmation {
        initial_norm,
        peak_norm,
        peak_time,
        growth_factor,
        confirmed: growth_factor >= settings.required_growth,
    })
}
