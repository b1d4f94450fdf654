//! Interaction kernels: continuous shapes on the unit torus and their
//! exactly normalized lattice tables.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Continuous even kernel `φ(0, r)` on the unit torus, integrating to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `φ ≡ 1` (mean-field interaction).
    Uniform,
    /// Periodized normal density with standard deviation `scale`.
    WrappedGaussian { scale: f64 },
    /// `1/(2w)` on `d(0,r) ≤ w`, zero elsewhere.
    TopHat { half_width: f64 },
    /// `(1 + cos(πr/w)) / (2w)` on `d(0,r) ≤ w`, zero elsewhere.
    RaisedCosine { half_width: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Uniform => Ok(()),
            KernelSpec::WrappedGaussian { scale } => {
                if scale.is_finite() && scale > 0.0 {
                    Ok(())
                } else {
                    Err(invalid("scale", format!("must be positive, got {scale}")))
                }
            }
            KernelSpec::TopHat { half_width } | KernelSpec::RaisedCosine { half_width } => {
                if half_width.is_finite() && half_width > 0.0 && half_width <= 0.5 {
                    Ok(())
                } else {
                    Err(invalid(
                        "half_width",
                        format!("must lie in (0, 1/2], got {half_width}"),
                    ))
                }
            }
        }
    }

    /// Kernel value at periodic distance `r ∈ [0, 1/2]`.
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::Uniform => 1.0,
            KernelSpec::WrappedGaussian { scale } => wrapped_gaussian(r, scale),
            KernelSpec::TopHat { half_width } => {
                if r <= half_width * (1.0 + 1e-12) {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            KernelSpec::RaisedCosine { half_width } => {
                if r < half_width {
                    (1.0 + (PI * r / half_width).cos()) / (2.0 * half_width)
                } else {
                    0.0
                }
            }
        }
    }

    /// Cosine coefficient `∫₀¹ φ(0,r) cos(2πkr) dr` of the continuous kernel.
    pub fn fourier_coefficient(&self, k: i64) -> f64 {
        let k = k.unsigned_abs() as f64;
        if k == 0.0 {
            return 1.0;
        }
        match *self {
            KernelSpec::Uniform => 0.0,
            KernelSpec::WrappedGaussian { scale } => (-2.0 * PI * PI * scale * scale * k * k).exp(),
            KernelSpec::TopHat { half_width } => {
                let a = TAU * k * half_width;
                a.sin() / a
            }
            KernelSpec::RaisedCosine { half_width } => {
                // x = 2kw; coefficient sin(πx) / (πx(1 − x²)), removable at x = 1
                let x = 2.0 * k * half_width;
                let dx = x - 1.0;
                if dx.abs() < 1e-6 {
                    // Taylor expansion around x = 1
                    0.5 - 0.25 * dx
                } else {
                    (PI * x).sin() / (PI * x * (1.0 - x * x))
                }
            }
        }
    }
}

fn wrapped_gaussian(r: f64, scale: f64) -> f64 {
    // images beyond |n| = K contribute below exp(-39) relative to the peak
    let images = (9.0 * scale + 0.5).ceil() as i64 + 1;
    let norm = 1.0 / (scale * TAU.sqrt());
    let inv_two_var = 0.5 / (scale * scale);
    let mut acc = 0.0;
    // smallest terms first
    for n in (1..=images).rev() {
        let a = r + n as f64;
        let b = r - n as f64;
        acc += (-a * a * inv_two_var).exp() + (-b * b * inv_two_var).exp();
    }
    acc += (-r * r * inv_two_var).exp();
    norm * acc
}

/// Interaction table on the `N`-site torus: `weights[d]` is the kernel at
/// periodic displacement `d`, normalized so that `γ Σ_d weights[d] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    weights: Vec<f64>,
    /// Displacements with nonzero weight.
    support: Vec<usize>,
}

impl DiscreteKernel {
    /// Samples `spec` at the lattice distances `min(d, N−d)/N` and renormalizes.
    pub fn new(spec: &KernelSpec, n_sites: usize) -> Result<Self> {
        spec.validate()?;
        if n_sites == 0 {
            return Err(invalid("n_sites", "must be at least 1"));
        }
        let inv = 1.0 / n_sites as f64;
        let weights: Vec<f64> = (0..n_sites)
            .map(|d| spec.value(d.min(n_sites - d) as f64 * inv))
            .collect();
        if n_sites > 1 && weights[1..].iter().all(|&w| w == 0.0) {
            return Err(Error::DegenerateKernel(format!(
                "{spec:?} has no interaction range on {n_sites} sites (support narrower than one lattice spacing)"
            )));
        }
        Self::from_weights(weights)
    }

    /// Builds a kernel from an explicit symmetric, nonnegative table.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(invalid("weights", "table is empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights", "entries must be finite and nonnegative"));
        }
        if (1..n).any(|d| weights[d] != weights[n - d]) {
            return Err(invalid("weights", "table is not symmetric"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateKernel("all weights are zero".into()));
        }
        normalize(&mut weights);
        let support = (0..n).filter(|&d| weights[d] != 0.0).collect();
        Ok(DiscreteKernel { weights, support })
    }

    pub fn n_sites(&self) -> usize {
        self.weights.len()
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.weights.len() as f64
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at periodic displacement `d mod N`.
    #[inline]
    pub fn weight(&self, d: usize) -> f64 {
        self.weights[d % self.weights.len()]
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Grid cosine transform `γ Σ_d weights[d]·cos(2πkd/N)`.
    pub fn fourier_coefficient(&self, k: i64) -> f64 {
        let n = self.weights.len();
        let step = std::f64::consts::TAU * k as f64 / n as f64;
        let sum: f64 = self
            .support
            .iter()
            .map(|&d| self.weights[d] * (step * d as f64).cos())
            .sum();
        sum / n as f64
    }

    /// True when every weight equals 1 (mean-field interaction).
    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }
}

/// Rescales `w` so its plain left-to-right sum equals `len` exactly,
/// absorbing the residual rounding into a symmetric slot.
fn normalize(w: &mut [f64]) {
    let n = w.len();
    let target = n as f64;
    let total: f64 = w.iter().sum();
    let factor = target / total;
    for x in w.iter_mut() {
        *x *= factor;
    }
    // self-weight if present, otherwise the heaviest mirrored pair
    let slot = if w[0] > 0.0 {
        0
    } else {
        (1..n).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0)
    };
    for _ in 0..8 {
        let residual = target - w.iter().sum::<f64>();
        if residual == 0.0 {
            break;
        }
        let mirror = (n - slot) % n;
        if mirror == slot {
            w[slot] = (w[slot] + residual).max(0.0);
        } else {
            w[slot] = (w[slot] + 0.5 * residual).max(0.0);
            w[mirror] = w[slot];
        }
    }
}
