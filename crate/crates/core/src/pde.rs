//! Limiting nonlocal reaction system for `(u1, u2, v)` on a periodic grid,
//! and its mean-field reduction for `(m1, m2)`.
//!
//! The `v` equation defaults to the form obtained by passing the generator
//! of `⟨η, G⟩` to the limit, where the line-2 bracket is the *difference*
//! `½[tanh(β2 u2*φ2 + β2λ) − tanh(β2 u2*φ2 − β2λ)]`, entering with a minus
//! sign. The alternative with a sum inside that bracket is available as
//! [`VEquation::VerbatimHydro3`] for comparison; it does not preserve
//! `v = u1·u2` when `λ = 0`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::TorusFn;
use crate::kernel::{DiscreteKernel, KernelSpec};
use crate::kmc::{fourier_modulus, ObservableSpec};
use crate::lattice::{convolve_field, validate_couplings};
use crate::schedule::Schedule;

/// Tolerance on `‖fields‖∞ − 1` before integration is declared unstable.
pub const INVARIANT_TOLERANCE: f64 = 1e-9;
/// Largest admissible fixed step.
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VEquation {
    #[default]
    GeneratorConsistent,
    VerbatimHydro3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionMethod {
    /// `O(M²)` periodic quadrature.
    #[default]
    Direct,
    /// Circular convolution through the discrete Fourier transform.
    Spectral,
}

/// Spectral convolution with a cached kernel transform.
#[derive(Clone)]
struct SpectralConvolver {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum1: Vec<f64>,
    spectrum2: Vec<f64>,
}

impl fmt::Debug for SpectralConvolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralConvolver")
            .field("len", &self.spectrum1.len())
            .finish()
    }
}

impl SpectralConvolver {
    fn new(k1: &DiscreteKernel, k2: &DiscreteKernel) -> Self {
        let m = k1.n_sites();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let spectrum = |k: &DiscreteKernel| -> Vec<f64> {
            let mut buf: Vec<Complex64> = k
                .weights()
                .iter()
                .map(|&w| Complex64::new(w, 0.0))
                .collect();
            forward.process(&mut buf);
            // symmetric table: the transform is real; fold in γ and the 1/M of the inverse
            let scale = 1.0 / (m as f64 * m as f64);
            buf.iter().map(|c| c.re * scale).collect()
        };
        let spectrum1 = spectrum(k1);
        let spectrum2 = spectrum(k2);
        SpectralConvolver {
            forward,
            inverse,
            spectrum1,
            spectrum2,
        }
    }

    fn convolve(&self, values: &[f64], spectrum: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (c, s) in buf.iter_mut().zip(spectrum) {
            *c *= *s;
        }
        self.inverse.process(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
        }
    }
}

/// Couplings and grid kernels of the macroscopic system.
#[derive(Debug, Clone)]
pub struct PdeParams {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    kernel1: DiscreteKernel,
    kernel2: DiscreteKernel,
    v_equation: VEquation,
    spectral: Option<SpectralConvolver>,
}

impl PdeParams {
    /// Discretizes both kernels on the `grid_size`-point grid with exact
    /// normalization.
    pub fn new(
        beta1: f64,
        beta2: f64,
        lambda: f64,
        kernel1: &KernelSpec,
        kernel2: &KernelSpec,
        grid_size: usize,
    ) -> Result<Self> {
        validate_couplings(beta1, beta2, lambda)?;
        Ok(PdeParams {
            beta1,
            beta2,
            lambda,
            kernel1: DiscreteKernel::new(kernel1, grid_size)?,
            kernel2: DiscreteKernel::new(kernel2, grid_size)?,
            v_equation: VEquation::default(),
            spectral: None,
        })
    }

    pub fn with_v_equation(mut self, v_equation: VEquation) -> Self {
        self.v_equation = v_equation;
        self
    }

    pub fn with_convolution(mut self, method: ConvolutionMethod) -> Self {
        self.spectral = match method {
            ConvolutionMethod::Direct => None,
            ConvolutionMethod::Spectral => {
                Some(SpectralConvolver::new(&self.kernel1, &self.kernel2))
            }
        };
        self
    }

    pub fn grid_size(&self) -> usize {
        self.kernel1.n_sites()
    }

    pub fn kernel1(&self) -> &DiscreteKernel {
        &self.kernel1
    }

    pub fn kernel2(&self) -> &DiscreteKernel {
        &self.kernel2
    }

    pub fn v_equation(&self) -> VEquation {
        self.v_equation
    }

    fn convolve(&self, values: &[f64], which: usize, out: &mut [f64]) {
        match &self.spectral {
            Some(sp) => {
                let spectrum = if which == 1 {
                    &sp.spectrum1
                } else {
                    &sp.spectrum2
                };
                sp.convolve(values, spectrum, out);
            }
            None => {
                let kernel = if which == 1 {
                    &self.kernel1
                } else {
                    &self.kernel2
                };
                let h = convolve_field(values, kernel).expect("grid sizes agree");
                out.copy_from_slice(&h);
            }
        }
    }
}

/// Grid values of `(u1, u2, v)` at points `j/M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl MacroState {
    pub fn new(u1: Vec<f64>, u2: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let m = u1.len();
        if m == 0 {
            return Err(invalid("grid_size", "must be at least 1"));
        }
        for f in [&u2, &v] {
            if f.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    actual: f.len(),
                });
            }
        }
        let state = MacroState {
            u1,
            u2,
            v,
            time: 0.0,
        };
        if state.sup_norm() > 1.0 + INVARIANT_TOLERANCE {
            return Err(Error::Domain(
                "initial fields must satisfy |u1|, |u2|, |v| ≤ 1".into(),
            ));
        }
        Ok(state)
    }

    /// `u_i = ψ_i` and `v = ψ1ψ2` sampled on an `M`-point grid.
    pub fn from_profiles(
        psi1: &impl TorusFn,
        psi2: &impl TorusFn,
        grid_size: usize,
    ) -> Result<Self> {
        if grid_size == 0 {
            return Err(invalid("grid_size", "must be at least 1"));
        }
        let u1 = psi1.sample(grid_size);
        let u2 = psi2.sample(grid_size);
        let v = u1.iter().zip(&u2).map(|(a, b)| a * b).collect();
        MacroState::new(u1, u2, v)
    }

    pub fn grid_size(&self) -> usize {
        self.u1.len()
    }

    pub fn sup_norm(&self) -> f64 {
        self.u1
            .iter()
            .chain(&self.u2)
            .chain(&self.v)
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// `max_j |u1[j]|, |u2[j]|`.
    pub fn u_sup_norm(&self) -> f64 {
        self.u1
            .iter()
            .chain(&self.u2)
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }
}

/// Time derivatives of the three fields.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroRhs {
    pub du1: Vec<f64>,
    pub du2: Vec<f64>,
    pub dv: Vec<f64>,
}

/// Right-hand side of the nonlocal system.
pub fn pde_rhs(state: &MacroState, params: &PdeParams) -> Result<MacroRhs> {
    let m = state.grid_size();
    if m != params.grid_size() {
        return Err(Error::Dimension {
            expected: params.grid_size(),
            actual: m,
        });
    }
    let mut out = MacroRhs {
        du1: vec![0.0; m],
        du2: vec![0.0; m],
        dv: vec![0.0; m],
    };
    let mut scratch = Workspace::new(m);
    rhs_into(
        &state.u1,
        &state.u2,
        &state.v,
        params,
        &mut scratch,
        &mut out,
    );
    Ok(out)
}

struct Workspace {
    c1: Vec<f64>,
    c2: Vec<f64>,
}

impl Workspace {
    fn new(m: usize) -> Self {
        Workspace {
            c1: vec![0.0; m],
            c2: vec![0.0; m],
        }
    }
}

fn rhs_into(
    u1: &[f64],
    u2: &[f64],
    v: &[f64],
    params: &PdeParams,
    ws: &mut Workspace,
    out: &mut MacroRhs,
) {
    params.convolve(u1, 1, &mut ws.c1);
    params.convolve(u2, 2, &mut ws.c2);
    let (b1, b2, lam) = (params.beta1, params.beta2, params.lambda);
    for j in 0..u1.len() {
        let p1 = (b1 * ws.c1[j] + b1 * lam).tanh();
        let m1 = (b1 * ws.c1[j] - b1 * lam).tanh();
        let p2 = (b2 * ws.c2[j] + b2 * lam).tanh();
        let m2 = (b2 * ws.c2[j] - b2 * lam).tanh();
        let (sum1, diff1) = (0.5 * (p1 + m1), 0.5 * (p1 - m1));
        let (sum2, diff2) = (0.5 * (p2 + m2), 0.5 * (p2 - m2));
        out.du1[j] = -u1[j] + sum1 + u2[j] * diff1;
        out.du2[j] = -u2[j] + sum2 - u1[j] * diff2;
        let line2_bracket = match params.v_equation {
            VEquation::GeneratorConsistent => diff2,
            VEquation::VerbatimHydro3 => sum2,
        };
        out.dv[j] = -2.0 * v[j] + diff1 - line2_bracket + u1[j] * sum2 + u2[j] * sum1;
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0 && dt <= MAX_DT) {
        return Err(invalid(
            "dt",
            format!("must lie in (0, {MAX_DT}], got {dt}"),
        ));
    }
    Ok(())
}

/// Classical fixed-step RK4 integration, returning the state at each
/// schedule time (offsets from `state0.time`). The last step before a sample
/// time is shortened to land on it exactly.
pub fn integrate_pde(
    state0: &MacroState,
    params: &PdeParams,
    schedule: &Schedule,
    dt: f64,
) -> Result<Vec<MacroState>> {
    check_dt(dt)?;
    let m = state0.grid_size();
    if m != params.grid_size() {
        return Err(Error::Dimension {
            expected: params.grid_size(),
            actual: m,
        });
    }
    let start = state0.time;
    let mut state = state0.clone();
    let mut ws = Workspace::new(m);
    let mut stages: Vec<MacroRhs> = (0..4)
        .map(|_| MacroRhs {
            du1: vec![0.0; m],
            du2: vec![0.0; m],
            dv: vec![0.0; m],
        })
        .collect();
    let mut tmp = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut elapsed = 0.0;
    let mut out = Vec::with_capacity(schedule.sample_times().len());
    for &target in schedule.sample_times() {
        let mut steps_left = ((target - elapsed) / dt - 1e-9).ceil().max(0.0) as u64;
        while steps_left > 0 {
            let h = if steps_left == 1 {
                target - elapsed
            } else {
                dt
            };
            rk4_step(&mut state, params, h, &mut ws, &mut stages, &mut tmp);
            elapsed = if steps_left == 1 {
                target
            } else {
                elapsed + dt
            };
            state.time = start + elapsed;
            let norm = state.sup_norm();
            if !(norm <= 1.0 + INVARIANT_TOLERANCE) {
                return Err(Error::Instability {
                    time: state.time,
                    magnitude: norm,
                });
            }
            steps_left -= 1;
        }
        state.time = start + target;
        out.push(state.clone());
    }
    Ok(out)
}

type Fields = (Vec<f64>, Vec<f64>, Vec<f64>);

fn rk4_step(
    state: &mut MacroState,
    params: &PdeParams,
    h: f64,
    ws: &mut Workspace,
    k: &mut [MacroRhs],
    tmp: &mut Fields,
) {
    let m = state.grid_size();
    let coeffs = [0.5 * h, 0.5 * h, h];
    rhs_into(&state.u1, &state.u2, &state.v, params, ws, &mut k[0]);
    for s in 0..3 {
        let (prev, next) = k.split_at_mut(s + 1);
        let ks = &prev[s];
        let c = coeffs[s];
        for j in 0..m {
            tmp.0[j] = state.u1[j] + c * ks.du1[j];
            tmp.1[j] = state.u2[j] + c * ks.du2[j];
            tmp.2[j] = state.v[j] + c * ks.dv[j];
        }
        rhs_into(&tmp.0, &tmp.1, &tmp.2, params, ws, &mut next[0]);
    }
    let w = h / 6.0;
    for j in 0..m {
        state.u1[j] += w * (k[0].du1[j] + 2.0 * k[1].du1[j] + 2.0 * k[2].du1[j] + k[3].du1[j]);
        state.u2[j] += w * (k[0].du2[j] + 2.0 * k[1].du2[j] + 2.0 * k[2].du2[j] + k[3].du2[j]);
        state.v[j] += w * (k[0].dv[j] + 2.0 * k[1].dv[j] + 2.0 * k[2].dv[j] + k[3].dv[j]);
    }
}

/// Mean-field magnetizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub m1: f64,
    pub m2: f64,
    pub time: f64,
}

impl MeanFieldState {
    pub fn new(m1: f64, m2: f64) -> Result<Self> {
        if !(m1.abs() <= 1.0 && m2.abs() <= 1.0) {
            return Err(Error::Domain("magnetizations must lie in [-1, 1]".into()));
        }
        Ok(MeanFieldState { m1, m2, time: 0.0 })
    }
}

/// Mean-field drift `(dm1/dt, dm2/dt)`.
pub fn mean_field_rhs(state: &MeanFieldState, beta1: f64, beta2: f64, lambda: f64) -> (f64, f64) {
    mean_field_rhs_at(state.m1, state.m2, beta1, beta2, lambda)
}

fn mean_field_rhs_at(m1: f64, m2: f64, beta1: f64, beta2: f64, lambda: f64) -> (f64, f64) {
    let p1 = (beta1 * m1 + beta1 * lambda).tanh();
    let n1 = (beta1 * m1 - beta1 * lambda).tanh();
    let p2 = (beta2 * m2 + beta2 * lambda).tanh();
    let n2 = (beta2 * m2 - beta2 * lambda).tanh();
    (
        -m1 + 0.5 * (p1 + n1) + m2 * 0.5 * (p1 - n1),
        -m2 + 0.5 * (p2 + n2) - m1 * 0.5 * (p2 - n2),
    )
}

/// RK4 integration of the mean-field system; same step rules as
/// [`integrate_pde`].
pub fn integrate_ode(
    state0: &MeanFieldState,
    beta1: f64,
    beta2: f64,
    lambda: f64,
    schedule: &Schedule,
    dt: f64,
) -> Result<Vec<MeanFieldState>> {
    check_dt(dt)?;
    if !(beta1.is_finite() && beta2.is_finite() && lambda.is_finite()) {
        return Err(invalid("beta", "couplings must be finite"));
    }
    let f = |m1: f64, m2: f64| mean_field_rhs_at(m1, m2, beta1, beta2, lambda);
    let start = state0.time;
    let (mut m1, mut m2) = (state0.m1, state0.m2);
    let mut elapsed = 0.0;
    let mut out = Vec::with_capacity(schedule.sample_times().len());
    for &target in schedule.sample_times() {
        let mut steps_left = ((target - elapsed) / dt - 1e-9).ceil().max(0.0) as u64;
        while steps_left > 0 {
            let h = if steps_left == 1 {
                target - elapsed
            } else {
                dt
            };
            let k1 = f(m1, m2);
            let k2 = f(m1 + 0.5 * h * k1.0, m2 + 0.5 * h * k1.1);
            let k3 = f(m1 + 0.5 * h * k2.0, m2 + 0.5 * h * k2.1);
            let k4 = f(m1 + h * k3.0, m2 + h * k3.1);
            m1 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            m2 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            elapsed = if steps_left == 1 {
                target
            } else {
                elapsed + dt
            };
            let norm = m1.abs().max(m2.abs());
            if !(norm <= 1.0 + INVARIANT_TOLERANCE) {
                return Err(Error::Instability {
                    time: start + elapsed,
                    magnitude: norm,
                });
            }
            steps_left -= 1;
        }
        out.push(MeanFieldState {
            m1,
            m2,
            time: start + target,
        });
    }
    Ok(out)
}

/// Rectangle-rule pairings `(⟨u1,G⟩, ⟨u2,G⟩, ⟨v,G⟩)`.
pub fn eval_macro_observable(state: &MacroState, g: &impl TorusFn) -> (f64, f64, f64) {
    let m = state.grid_size();
    let inv = 1.0 / m as f64;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for j in 0..m {
        let gj = g.eval(j as f64 * inv);
        a += state.u1[j] * gj;
        b += state.u2[j] * gj;
        c += state.v[j] * gj;
    }
    (a * inv, b * inv, c * inv)
}

/// Macroscopic counterpart of a microscopic observable.
pub fn macro_observable(spec: &ObservableSpec, state: &MacroState) -> f64 {
    let one = |_: f64| 1.0;
    match *spec {
        ObservableSpec::InnerProductLine1 { test_function } => {
            eval_macro_observable(state, &test_function).0
        }
        ObservableSpec::InnerProductLine2 { test_function } => {
            eval_macro_observable(state, &test_function).1
        }
        ObservableSpec::InnerProductEta { test_function } => {
            eval_macro_observable(state, &test_function).2
        }
        ObservableSpec::MagnetizationLine1 => eval_macro_observable(state, &one).0,
        ObservableSpec::MagnetizationLine2 => eval_macro_observable(state, &one).1,
        ObservableSpec::FourierMode { line, k } => {
            let field = if line == 1 { &state.u1 } else { &state.u2 };
            fourier_modulus(field.iter().copied(), field.len(), k)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Profile, TestFunction};
    use std::f64::consts::TAU;

    fn uniform_params(beta1: f64, beta2: f64, lambda: f64, m: usize) -> PdeParams {
        PdeParams::new(
            beta1,
            beta2,
            lambda,
            &KernelSpec::Uniform,
            &KernelSpec::Uniform,
            m,
        )
        .unwrap()
    }

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rhs_at_origin() {
        let (b1, b2, lam) = (1.3, 0.7, 0.4);
        let params = PdeParams::new(
            b1,
            b2,
            lam,
            &KernelSpec::WrappedGaussian { scale: 0.1 },
            &KernelSpec::Uniform,
            32,
        )
        .unwrap();
        let zero = MacroState::new(vec![0.0; 32], vec![0.0; 32], vec![0.0; 32]).unwrap();
        let rhs = pde_rhs(&zero, &params).unwrap();
        let expected_dv = (b1 * lam).tanh() - (b2 * lam).tanh();
        assert!(rhs.du1.iter().chain(&rhs.du2).all(|d| d.abs() < 1e-16));
        assert!(rhs.dv.iter().all(|d| (d - expected_dv).abs() < 1e-15));

        let uncoupled = PdeParams::new(
            b1,
            b2,
            0.0,
            &KernelSpec::WrappedGaussian { scale: 0.1 },
            &KernelSpec::Uniform,
            32,
        )
        .unwrap();
        let rhs = pde_rhs(&zero, &uncoupled).unwrap();
        assert!(rhs
            .du1
            .iter()
            .chain(&rhs.du2)
            .chain(&rhs.dv)
            .all(|d| *d == 0.0));
    }

    #[test]
    fn homogeneous_rhs_equals_mean_field() {
        let (b1, b2, lam) = (1.2, 0.9, 0.4);
        for spec in [
            KernelSpec::Uniform,
            KernelSpec::WrappedGaussian { scale: 0.05 },
            KernelSpec::TopHat { half_width: 0.2 },
        ] {
            let params = PdeParams::new(b1, b2, lam, &spec, &spec, 64).unwrap();
            let (m1, m2) = (0.3, -0.2);
            let state = MacroState::new(vec![m1; 64], vec![m2; 64], vec![m1 * m2; 64]).unwrap();
            let rhs = pde_rhs(&state, &params).unwrap();
            let (d1, d2) = mean_field_rhs(&MeanFieldState::new(m1, m2).unwrap(), b1, b2, lam);
            assert!(rhs.du1.iter().all(|x| (x - d1).abs() < 1e-14));
            assert!(rhs.du2.iter().all(|x| (x - d2).abs() < 1e-14));
        }
    }

    #[test]
    fn verbatim_variant_differs_only_in_v() {
        let params = uniform_params(1.0, 1.5, 0.3, 16);
        let verbatim = params.clone().with_v_equation(VEquation::VerbatimHydro3);
        let state =
            MacroState::from_profiles(&Profile::cosine(0.5, 1), &Profile::constant(0.2), 16)
                .unwrap();
        let a = pde_rhs(&state, &params).unwrap();
        let b = pde_rhs(&state, &verbatim).unwrap();
        assert_eq!(a.du1, b.du1);
        assert_eq!(a.du2, b.du2);
        assert!(sup_diff(&a.dv, &b.dv) > 0.1);
    }

    #[test]
    fn spectral_convolution_agrees_with_direct() {
        let spec1 = KernelSpec::WrappedGaussian { scale: 0.07 };
        let spec2 = KernelSpec::RaisedCosine { half_width: 0.2 };
        let direct = PdeParams::new(1.1, 0.8, 0.6, &spec1, &spec2, 256).unwrap();
        let spectral = direct.clone().with_convolution(ConvolutionMethod::Spectral);
        let state = MacroState::from_profiles(
            &|r: f64| 0.6 * (TAU * r).sin() + 0.2 * (3.0 * TAU * r).cos(),
            &Profile::cosine(-0.7, 2),
            256,
        )
        .unwrap();
        let a = pde_rhs(&state, &direct).unwrap();
        let b = pde_rhs(&state, &spectral).unwrap();
        assert!(sup_diff(&a.du1, &b.du1) < 1e-12);
        assert!(sup_diff(&a.du2, &b.du2) < 1e-12);
        assert!(sup_diff(&a.dv, &b.dv) < 1e-12);
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let params = uniform_params(1.0, 1.0, 0.5, 8);
        let s0 = MacroState::from_profiles(&Profile::cosine(0.4, 1), &Profile::constant(0.0), 8)
            .unwrap();
        let out =
            integrate_pde(&s0, &params, &Schedule::uniform(0.0, 0.05).unwrap(), 0.01).unwrap();
        assert_eq!(out, vec![s0]);
        assert!(
            integrate_pde(&out[0], &params, &Schedule::uniform(1.0, 0.5).unwrap(), 0.2).is_err()
        );
    }

    #[test]
    fn zero_densities_relax_correlation_exponentially() {
        let (b1, b2, lam) = (1.5, 0.6, 0.8);
        let params = PdeParams::new(
            b1,
            b2,
            lam,
            &KernelSpec::WrappedGaussian { scale: 0.1 },
            &KernelSpec::Uniform,
            32,
        )
        .unwrap();
        let s0 = MacroState::new(vec![0.0; 32], vec![0.0; 32], vec![0.0; 32]).unwrap();
        let out =
            integrate_pde(&s0, &params, &Schedule::uniform(2.0, 0.25).unwrap(), 0.01).unwrap();
        let limit = 0.5 * ((b1 * lam).tanh() - (b2 * lam).tanh());
        for s in &out {
            assert!(s.u_sup_norm() == 0.0);
            let exact = limit * (1.0 - (-2.0 * s.time).exp());
            assert!(s.v.iter().all(|v| (v - exact).abs() < 1e-9), "t={}", s.time);
        }
    }

    #[test]
    fn uncoupled_system_keeps_chaos() {
        let spec = KernelSpec::WrappedGaussian { scale: 0.1 };
        let params = PdeParams::new(
            1.4,
            0.9,
            0.0,
            &spec,
            &KernelSpec::TopHat { half_width: 0.2 },
            128,
        )
        .unwrap();
        let s0 = MacroState::from_profiles(
            &Profile::cosine(0.6, 1),
            &|r: f64| 0.3 + 0.5 * (2.0 * TAU * r).sin(),
            128,
        )
        .unwrap();
        let out = integrate_pde(&s0, &params, &Schedule::uniform(2.0, 0.1).unwrap(), 0.01).unwrap();
        for s in &out {
            let prod: Vec<f64> = s.u1.iter().zip(&s.u2).map(|(a, b)| a * b).collect();
            assert!(sup_diff(&s.v, &prod) < 1e-8);
        }
        // the verbatim third equation does not keep v = u1·u2
        let verbatim = params.with_v_equation(VEquation::VerbatimHydro3);
        let last = integrate_pde(&s0, &verbatim, &Schedule::uniform(2.0, 2.0).unwrap(), 0.01)
            .unwrap()
            .pop()
            .unwrap();
        let prod: Vec<f64> = last.u1.iter().zip(&last.u2).map(|(a, b)| a * b).collect();
        assert!(sup_diff(&last.v, &prod) > 1e-2);
    }

    #[test]
    fn mean_field_examples() {
        assert_eq!(
            mean_field_rhs(&MeanFieldState::new(0.0, 0.0).unwrap(), 1.3, 0.4, 0.9),
            (0.0, 0.0)
        );
        for m2 in [-0.8, 0.0, 0.5] {
            let (d1, _) = mean_field_rhs(&MeanFieldState::new(0.35, m2).unwrap(), 1.7, 1.0, 0.0);
            assert!((d1 - (-0.35 + (1.7f64 * 0.35).tanh())).abs() < 1e-15);
        }
        // independent evaluation through the single-tanh identity
        // ½[T₊+T₋] + m·½[T₊−T₋] = ((1+m)T₊ + (1−m)T₋)/2
        let (m1, m2, b1, b2, lam): (f64, f64, f64, f64, f64) = (0.3, -0.2, 1.2, 0.9, 0.4);
        let e1 = -m1
            + 0.5 * ((1.0 + m2) * (b1 * (m1 + lam)).tanh() + (1.0 - m2) * (b1 * (m1 - lam)).tanh());
        let e2 = -m2
            + 0.5 * ((1.0 - m1) * (b2 * (m2 + lam)).tanh() + (1.0 + m1) * (b2 * (m2 - lam)).tanh());
        let (d1, d2) = mean_field_rhs(&MeanFieldState::new(m1, m2).unwrap(), b1, b2, lam);
        assert!((d1 - e1).abs() < 1e-15 && (d2 - e2).abs() < 1e-15);
    }

    #[test]
    fn ode_zero_horizon_and_pure_decay() {
        let s0 = MeanFieldState::new(0.7, -0.4).unwrap();
        let out = integrate_ode(
            &s0,
            1.0,
            1.0,
            0.3,
            &Schedule::uniform(0.0, 0.1).unwrap(),
            0.01,
        )
        .unwrap();
        assert_eq!(out, vec![s0]);
        // β → 0: the tanh brackets vanish identically
        let out = integrate_ode(
            &s0,
            0.0,
            0.0,
            0.3,
            &Schedule::uniform(3.0, 0.5).unwrap(),
            0.01,
        )
        .unwrap();
        for s in out {
            assert!((s.m1 - 0.7 * (-s.time).exp()).abs() < 1e-10);
            assert!((s.m2 + 0.4 * (-s.time).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn ode_matches_homogeneous_pde() {
        let (b1, b2, lam) = (1.4, 0.8, 0.6);
        let params = uniform_params(b1, b2, lam, 16);
        let s0 = MacroState::from_profiles(&Profile::constant(0.5), &Profile::constant(-0.3), 16)
            .unwrap();
        let sched = Schedule::uniform(2.0, 0.1).unwrap();
        let pde = integrate_pde(&s0, &params, &sched, 0.01).unwrap();
        let ode = integrate_ode(
            &MeanFieldState::new(0.5, -0.3).unwrap(),
            b1,
            b2,
            lam,
            &sched,
            0.01,
        )
        .unwrap();
        for (p, o) in pde.iter().zip(&ode) {
            assert!(p.u1.iter().all(|u| (u - o.m1).abs() < 1e-8));
            assert!(p.u2.iter().all(|u| (u - o.m2).abs() < 1e-8));
        }
    }

    #[test]
    fn pairing_examples() {
        let m = 256;
        let c = MacroState::new(vec![0.3; m], vec![0.0; m], vec![0.0; m]).unwrap();
        assert!((eval_macro_observable(&c, &|_| 1.0).0 - 0.3).abs() < 1e-14);
        assert_eq!(eval_macro_observable(&c, &|_| 0.0), (0.0, 0.0, 0.0));
        let s = MacroState::from_profiles(&Profile::cosine(1.0, 1), &Profile::constant(0.0), m)
            .unwrap();
        assert!((eval_macro_observable(&s, &TestFunction::Cos(1)).0 - 0.5).abs() < 1e-10);
    }

    #[test]
    fn step_halving_is_fourth_order() {
        let spec = KernelSpec::WrappedGaussian { scale: 0.1 };
        let params = PdeParams::new(1.0, 1.0, 0.5, &spec, &spec, 128).unwrap();
        let s0 = MacroState::from_profiles(&Profile::cosine(0.4, 1), &Profile::constant(0.0), 128)
            .unwrap();
        let sched = Schedule::uniform(2.0, 2.0).unwrap();
        let obs = |dt: f64| {
            let last = integrate_pde(&s0, &params, &sched, dt)
                .unwrap()
                .pop()
                .unwrap();
            eval_macro_observable(&last, &TestFunction::Cos(1)).0
        };
        let (a, b, c, d) = (obs(0.1), obs(0.05), obs(0.025), obs(0.0125));
        let e1 = (a - b).abs();
        let e2 = (b - c).abs();
        let e3 = (c - d).abs();
        // error ratio 16 per halving, within a factor of 4
        for ratio in [e1 / e2, e2 / e3] {
            assert!(ratio > 4.0 && ratio < 64.0, "ratio {ratio}");
        }
        assert!(e3 < 1e-8);
    }
}
