//! Ensemble experiments comparing the microscopic dynamics with the
//! macroscopic equations.
//!
//! Trajectory `r` of lattice-size cell `c` draws from the random stream
//! `cell_stream(c, r)` of the master seed and per-trajectory results are
//! reduced in index order, so every report is a pure function of its inputs
//! and the seed, independent of the worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::{Profile, TestFunction, TorusFn};
use crate::kernel::KernelSpec;
use crate::kmc::{
    closed_form_drift_with, generator_apply, martingale_residual, run, DriftFormula, DriftTarget,
    ObservableSpec, RunOptions,
};
use crate::lattice::{sample_initial, validate_couplings, KernelPair, ModelParams, PairConfig};
use crate::pde::{eval_macro_observable, integrate_pde, MacroState, PdeParams, VEquation};
use crate::rng::{cell_stream, stream};
use crate::schedule::Schedule;

/// Version of the serialized report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest accepted `|closed form − brute force|` in the identity fuzz.
pub const DRIFT_TOLERANCE: f64 = 1e-11;

/// Couplings and kernels, without a lattice size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub kernel1: KernelSpec,
    pub kernel2: KernelSpec,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        validate_couplings(self.beta1, self.beta2, self.lambda)?;
        self.kernel1.validate()?;
        self.kernel2.validate()
    }

    pub fn lattice(&self, n_sites: usize) -> Result<(ModelParams, KernelPair)> {
        Ok((
            ModelParams::new(self.beta1, self.beta2, self.lambda, n_sites)?,
            KernelPair::from_specs(&self.kernel1, &self.kernel2, n_sites)?,
        ))
    }

    pub fn pde(&self, grid_size: usize, v_equation: VEquation) -> Result<PdeParams> {
        Ok(PdeParams::new(
            self.beta1,
            self.beta2,
            self.lambda,
            &self.kernel1,
            &self.kernel2,
            grid_size,
        )?
        .with_v_equation(v_equation))
    }
}

/// One value per macroscopic field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Fields<T> {
    pub u1: T,
    pub u2: T,
    pub v: T,
}

impl<T: Copy> Fields<T> {
    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Fields<U> {
        Fields {
            u1: f(self.u1),
            u2: f(self.u2),
            v: f(self.v),
        }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.u1, self.u2, self.v]
    }

    fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        Fields {
            u1: f(0),
            u2: f(1),
            v: f(2),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; `None` below two samples.
fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

fn stderr(xs: &[f64]) -> Option<f64> {
    sample_variance(xs).map(|v| (v / xs.len() as f64).sqrt())
}

/// Least-squares slope of `log y` against `log x`; `None` if any `y ≤ 0`
/// or fewer than two points.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn check_sizes(lattice_sizes: &[usize]) -> Result<()> {
    if lattice_sizes.is_empty() {
        return Err(invalid("lattice_sizes", "list is empty"));
    }
    if lattice_sizes[0] == 0 || lattice_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(
            "lattice_sizes",
            "must be positive and strictly increasing",
        ));
    }
    Ok(())
}

fn check_profiles(psi1: &Profile, psi2: &Profile) -> Result<()> {
    if !psi1.is_admissible() || !psi2.is_admissible() {
        return Err(Error::Domain(
            "initial profiles must satisfy |ψ| ≤ 1".into(),
        ));
    }
    Ok(())
}

fn pairing_observables(test_functions: &[TestFunction]) -> Vec<ObservableSpec> {
    let mut obs = Vec::with_capacity(3 * test_functions.len());
    for &test_function in test_functions {
        obs.push(ObservableSpec::InnerProductLine1 { test_function });
        obs.push(ObservableSpec::InnerProductLine2 { test_function });
        obs.push(ObservableSpec::InnerProductEta { test_function });
    }
    obs
}

// ---------------------------------------------------------------------------
// Hydrodynamic convergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSetup {
    pub model: ModelSpec,
    pub psi1: Profile,
    pub psi2: Profile,
    pub lattice_sizes: Vec<usize>,
    pub ensemble_size: usize,
    pub horizon: f64,
    pub sample_dt: f64,
    pub test_functions: Vec<TestFunction>,
    pub grid_size: usize,
    pub dt: f64,
    pub v_equation: VEquation,
}

impl ConvergenceSetup {
    /// Reference integration on 512 points with step 0.01, sampled every 0.05.
    pub fn new(
        model: ModelSpec,
        psi1: Profile,
        psi2: Profile,
        lattice_sizes: Vec<usize>,
        ensemble_size: usize,
        horizon: f64,
    ) -> Self {
        ConvergenceSetup {
            model,
            psi1,
            psi2,
            lattice_sizes,
            ensemble_size,
            horizon,
            sample_dt: 0.05,
            test_functions: vec![
                TestFunction::ONE,
                TestFunction::Cos(1),
                TestFunction::Sin(1),
            ],
            grid_size: 512,
            dt: 0.01,
            v_equation: VEquation::default(),
        }
    }
}

/// Sup-over-time discrepancy statistics at one lattice size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_sites: usize,
    pub gamma: f64,
    pub mean_error: Fields<f64>,
    /// Undefined for a single trajectory.
    pub stderr: Option<Fields<f64>>,
    pub trajectory_errors: Vec<Fields<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub seed: u64,
    pub ensemble_size: usize,
    pub horizon: f64,
    pub test_functions: Vec<TestFunction>,
    pub rows: Vec<ConvergenceRow>,
    /// Slope of `log(mean error)` against `log γ`.
    pub slope: Fields<Option<f64>>,
    /// Mean error strictly decreasing along the lattice sizes.
    pub monotone: Fields<bool>,
}

/// Compares `R` microscopic trajectories per lattice size with one PDE
/// reference solution. The error of a trajectory for field `f` is
/// `max_{G, t} |⟨f_micro(t), G⟩ − ⟨f_macro(t), G⟩|` over the sample grid.
pub fn convergence_experiment(setup: &ConvergenceSetup, seed: u64) -> Result<ConvergenceReport> {
    setup.model.validate()?;
    check_sizes(&setup.lattice_sizes)?;
    check_profiles(&setup.psi1, &setup.psi2)?;
    if setup.ensemble_size == 0 {
        return Err(invalid("ensemble_size", "must be at least 1"));
    }
    if setup.test_functions.is_empty() {
        return Err(invalid("test_functions", "list is empty"));
    }
    let schedule = Schedule::uniform(setup.horizon, setup.sample_dt)?;
    let pde = setup.model.pde(setup.grid_size, setup.v_equation)?;
    let state0 = MacroState::from_profiles(&setup.psi1, &setup.psi2, setup.grid_size)?;
    let path = integrate_pde(&state0, &pde, &schedule, setup.dt)?;
    // reference[g][t] = (⟨u1,G⟩, ⟨u2,G⟩, ⟨v,G⟩)
    let reference: Vec<Vec<(f64, f64, f64)>> = setup
        .test_functions
        .iter()
        .map(|g| path.iter().map(|s| eval_macro_observable(s, g)).collect())
        .collect();
    let observables = pairing_observables(&setup.test_functions);

    let mut rows = Vec::with_capacity(setup.lattice_sizes.len());
    for (cell, &n) in setup.lattice_sizes.iter().enumerate() {
        let (params, kernels) = setup.model.lattice(n)?;
        let errors: Vec<Fields<f64>> = (0..setup.ensemble_size)
            .into_par_iter()
            .map(|r| -> Result<Fields<f64>> {
                let mut rng = stream(seed, cell_stream(cell as u64, r as u64));
                let config = sample_initial(&setup.psi1, &setup.psi2, &kernels, &mut rng)?;
                let series = run(
                    config,
                    &params,
                    &kernels,
                    &schedule,
                    &observables,
                    &mut rng,
                    RunOptions::default(),
                )?;
                let mut err = Fields::<f64>::default();
                for (gi, per_time) in reference.iter().enumerate() {
                    for (ti, &(a, b, c)) in per_time.iter().enumerate() {
                        err.u1 = err.u1.max((series.values[3 * gi][ti] - a).abs());
                        err.u2 = err.u2.max((series.values[3 * gi + 1][ti] - b).abs());
                        err.v = err.v.max((series.values[3 * gi + 2][ti] - c).abs());
                    }
                }
                Ok(err)
            })
            .collect::<Result<_>>()?;
        let column = |f: usize| -> Vec<f64> { errors.iter().map(|e| e.as_array()[f]).collect() };
        let mean_error = Fields::from_fn(|f| mean(&column(f)));
        let stderr = (setup.ensemble_size >= 2)
            .then(|| Fields::from_fn(|f| stderr(&column(f)).unwrap_or(0.0)));
        rows.push(ConvergenceRow {
            n_sites: n,
            gamma: 1.0 / n as f64,
            mean_error,
            stderr,
            trajectory_errors: errors,
        });
    }
    let gammas: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    let slope = Fields::from_fn(|f| {
        let means: Vec<f64> = rows.iter().map(|r| r.mean_error.as_array()[f]).collect();
        log_log_slope(&gammas, &means)
    });
    let monotone = Fields::from_fn(|f| {
        rows.windows(2)
            .all(|w| w[1].mean_error.as_array()[f] < w[0].mean_error.as_array()[f])
    });
    Ok(ConvergenceReport {
        schema_version: SCHEMA_VERSION,
        seed,
        ensemble_size: setup.ensemble_size,
        horizon: setup.horizon,
        test_functions: setup.test_functions.clone(),
        rows,
        slope,
        monotone,
    })
}

// ---------------------------------------------------------------------------
// Martingale variance scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSetup {
    pub model: ModelSpec,
    pub psi1: Profile,
    pub psi2: Profile,
    pub lattice_sizes: Vec<usize>,
    pub ensemble_size: usize,
    pub horizon: f64,
    pub test_function: TestFunction,
}

/// Statistics of `M^G(T)` for one observable at one lattice size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCell {
    pub mean: f64,
    pub variance: f64,
    /// `variance / (‖G‖∞ T γ)`; absent when `G ≡ 0`.
    pub constant: Option<f64>,
    /// Variance above `1.5 C ‖G‖∞ T γ` for the fitted `C`.
    pub exceeds_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n_sites: usize,
    pub gamma: f64,
    pub line1: VarianceCell,
    pub line2: VarianceCell,
    pub correlation: VarianceCell,
}

impl VarianceRow {
    pub fn cell(&self, which: DriftTarget) -> &VarianceCell {
        match which {
            DriftTarget::Line1 => &self.line1,
            DriftTarget::Line2 => &self.line2,
            DriftTarget::Correlation => &self.correlation,
        }
    }
}

/// Fit summary for one observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceFit {
    /// Slope of `log Var` against `log γ`.
    pub slope: Option<f64>,
    /// Geometric mean of the per-size constants.
    pub constant: Option<f64>,
    /// Largest over smallest per-size constant.
    pub constant_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub schema_version: u32,
    pub seed: u64,
    pub ensemble_size: usize,
    pub horizon: f64,
    pub test_function: TestFunction,
    pub rows: Vec<VarianceRow>,
    pub line1: VarianceFit,
    pub line2: VarianceFit,
    pub correlation: VarianceFit,
}

impl VarianceReport {
    pub fn fit(&self, which: DriftTarget) -> &VarianceFit {
        match which {
            DriftTarget::Line1 => &self.line1,
            DriftTarget::Line2 => &self.line2,
            DriftTarget::Correlation => &self.correlation,
        }
    }
}

/// Ensemble variance of the martingale residual at the horizon for each
/// lattice size, and its fitted dependence on `γ`.
pub fn variance_scaling_experiment(setup: &VarianceSetup, seed: u64) -> Result<VarianceReport> {
    setup.model.validate()?;
    check_sizes(&setup.lattice_sizes)?;
    check_profiles(&setup.psi1, &setup.psi2)?;
    if setup.ensemble_size < 2 {
        return Err(invalid(
            "ensemble_size",
            "variance needs at least 2 trajectories",
        ));
    }
    if !(setup.horizon.is_finite() && setup.horizon > 0.0) {
        return Err(invalid("horizon", "must be positive"));
    }
    let schedule = Schedule::new(setup.horizon, vec![setup.horizon])?;
    let observables = [ObservableSpec::MagnetizationLine1];
    let g = setup.test_function;
    let scale = g.sup_norm() * setup.horizon;

    // per size, per target: residuals of every trajectory
    let mut samples: Vec<[Vec<f64>; 3]> = Vec::with_capacity(setup.lattice_sizes.len());
    for (cell, &n) in setup.lattice_sizes.iter().enumerate() {
        let (params, kernels) = setup.model.lattice(n)?;
        let per_traj: Vec<[f64; 3]> = (0..setup.ensemble_size)
            .into_par_iter()
            .map(|r| -> Result<[f64; 3]> {
                let mut rng = stream(seed, cell_stream(cell as u64, r as u64));
                let config = sample_initial(&setup.psi1, &setup.psi2, &kernels, &mut rng)?;
                let options = RunOptions {
                    seed,
                    record_events: true,
                };
                let series = run(
                    config,
                    &params,
                    &kernels,
                    &schedule,
                    &observables,
                    &mut rng,
                    options,
                )?;
                let mut out = [0.0; 3];
                for (slot, which) in out.iter_mut().zip(DriftTarget::ALL) {
                    *slot = *martingale_residual(&series, &params, &kernels, &g, which)?
                        .last()
                        .expect("one sample time");
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        samples.push(std::array::from_fn(|k| {
            per_traj.iter().map(|m| m[k]).collect()
        }));
    }

    let gammas: Vec<f64> = setup
        .lattice_sizes
        .iter()
        .map(|&n| 1.0 / n as f64)
        .collect();
    let mut fits = Vec::with_capacity(3);
    let mut cells: Vec<Vec<VarianceCell>> = Vec::with_capacity(3);
    for k in 0..3 {
        let variances: Vec<f64> = samples
            .iter()
            .map(|s| sample_variance(&s[k]).expect("R ≥ 2"))
            .collect();
        let constants: Vec<Option<f64>> = variances
            .iter()
            .zip(&gammas)
            .map(|(v, gamma)| (scale > 0.0).then(|| v / (scale * gamma)))
            .collect();
        let positive: Option<Vec<f64>> = constants.iter().map(|c| c.filter(|c| *c > 0.0)).collect();
        let constant = positive
            .as_ref()
            .map(|cs| cs.iter().map(|c| c.ln()).sum::<f64>() / cs.len() as f64)
            .map(f64::exp);
        let constant_spread = positive.as_ref().map(|cs| {
            let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
            hi / lo
        });
        let fit = VarianceFit {
            slope: log_log_slope(&gammas, &variances),
            constant,
            constant_spread,
        };
        cells.push(
            samples
                .iter()
                .zip(&variances)
                .zip(&constants)
                .zip(&gammas)
                .map(|(((s, &variance), &c), gamma)| VarianceCell {
                    mean: mean(&s[k]),
                    variance,
                    constant: c,
                    exceeds_bound: match constant {
                        Some(fitted) => variance > 1.5 * fitted * scale * gamma,
                        None => variance > 0.0,
                    },
                })
                .collect(),
        );
        fits.push(fit);
    }
    let rows = setup
        .lattice_sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| VarianceRow {
            n_sites: n,
            gamma: gammas[i],
            line1: cells[0][i],
            line2: cells[1][i],
            correlation: cells[2][i],
        })
        .collect();
    Ok(VarianceReport {
        schema_version: SCHEMA_VERSION,
        seed,
        ensemble_size: setup.ensemble_size,
        horizon: setup.horizon,
        test_function: g,
        rows,
        line1: fits[0],
        line2: fits[1],
        correlation: fits[2],
    })
}

// ---------------------------------------------------------------------------
// Propagation-of-chaos gap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosGapSetup {
    pub model: ModelSpec,
    pub psi1: Profile,
    pub psi2: Profile,
    pub n_sites: usize,
    pub ensemble_size: usize,
    pub horizon: f64,
    pub sample_dt: f64,
    pub test_function: TestFunction,
    pub grid_size: usize,
    pub dt: f64,
    pub v_equation: VEquation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosGapRow {
    pub time: f64,
    /// `E⟨η,G⟩ − E⟨σ1,G⟩·E⟨σ2,G⟩` estimated from the ensemble.
    pub micro_gap: f64,
    /// Delta-method standard error of `micro_gap`.
    pub stderr: f64,
    /// `⟨v,G⟩ − ⟨u1,G⟩⟨u2,G⟩`.
    pub macro_gap: f64,
    /// `⟨v − u1·u2, G⟩`.
    pub macro_pointwise_gap: f64,
    /// `|micro_gap| > 3 stderr`.
    pub significant: bool,
    /// `|micro_gap − macro_gap| ≤ 3 stderr`.
    pub tracks_macro: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosGapReport {
    pub schema_version: u32,
    pub seed: u64,
    pub n_sites: usize,
    pub ensemble_size: usize,
    pub test_function: TestFunction,
    pub rows: Vec<ChaosGapRow>,
    pub gap_detected: bool,
    pub tracks_macro: bool,
}

/// Standard errors are multiples of this factor in the gap tests.
pub const GAP_SIGMAS: f64 = 3.0;

pub fn chaos_gap_experiment(setup: &ChaosGapSetup, seed: u64) -> Result<ChaosGapReport> {
    setup.model.validate()?;
    check_profiles(&setup.psi1, &setup.psi2)?;
    if setup.ensemble_size < 2 {
        return Err(invalid("ensemble_size", "needs at least 2 trajectories"));
    }
    let schedule = Schedule::uniform(setup.horizon, setup.sample_dt)?;
    let pde = setup.model.pde(setup.grid_size, setup.v_equation)?;
    let state0 = MacroState::from_profiles(&setup.psi1, &setup.psi2, setup.grid_size)?;
    let path = integrate_pde(&state0, &pde, &schedule, setup.dt)?;
    let g = setup.test_function;
    let (params, kernels) = setup.model.lattice(setup.n_sites)?;
    let observables = pairing_observables(&[g]);
    let series: Vec<Vec<Vec<f64>>> = (0..setup.ensemble_size)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut rng = stream(seed, cell_stream(0, r as u64));
            let config = sample_initial(&setup.psi1, &setup.psi2, &kernels, &mut rng)?;
            Ok(run(
                config,
                &params,
                &kernels,
                &schedule,
                &observables,
                &mut rng,
                RunOptions::default(),
            )?
            .values)
        })
        .collect::<Result<_>>()?;

    let r = setup.ensemble_size as f64;
    let rows: Vec<ChaosGapRow> = path
        .iter()
        .enumerate()
        .map(|(ti, state)| {
            let a: Vec<f64> = series.iter().map(|s| s[0][ti]).collect();
            let b: Vec<f64> = series.iter().map(|s| s[1][ti]).collect();
            let e: Vec<f64> = series.iter().map(|s| s[2][ti]).collect();
            let (ma, mb, me) = (mean(&a), mean(&b), mean(&e));
            // gradient of e − a·b at the means
            let grad = [-mb, -ma, 1.0];
            let variance = (0..a.len())
                .map(|i| {
                    let d = grad[0] * (a[i] - ma) + grad[1] * (b[i] - mb) + grad[2] * (e[i] - me);
                    d * d
                })
                .sum::<f64>()
                / (r - 1.0);
            let stderr = (variance / r).sqrt();
            let micro_gap = me - ma * mb;
            let (u1, u2, v) = eval_macro_observable(state, &g);
            let macro_gap = v - u1 * u2;
            let pointwise: Vec<f64> = state
                .v
                .iter()
                .zip(&state.u1)
                .zip(&state.u2)
                .map(|((v, a), b)| v - a * b)
                .collect();
            let macro_pointwise_gap = {
                let m = pointwise.len();
                pointwise
                    .iter()
                    .enumerate()
                    .map(|(j, d)| d * g.eval(j as f64 / m as f64))
                    .sum::<f64>()
                    / m as f64
            };
            ChaosGapRow {
                time: state.time,
                micro_gap,
                stderr,
                macro_gap,
                macro_pointwise_gap,
                significant: micro_gap.abs() > GAP_SIGMAS * stderr,
                tracks_macro: (micro_gap - macro_gap).abs() <= GAP_SIGMAS * stderr,
            }
        })
        .collect();
    Ok(ChaosGapReport {
        schema_version: SCHEMA_VERSION,
        seed,
        n_sites: setup.n_sites,
        ensemble_size: setup.ensemble_size,
        test_function: g,
        gap_detected: rows.iter().any(|row| row.significant),
        tracks_macro: rows.iter().all(|row| row.tracks_macro),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Generator identity fuzzing

/// A fully specified drift check, enough to replay a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzInstance {
    pub trial: usize,
    pub n_sites: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub kernel1: KernelSpec,
    pub kernel2: KernelSpec,
    pub s1: Vec<i8>,
    pub s2: Vec<i8>,
    pub test_function: TestFunction,
    pub target: DriftTarget,
    pub closed_form: f64,
    pub brute_force: f64,
}

impl FuzzInstance {
    pub fn discrepancy(&self) -> f64 {
        (self.closed_form - self.brute_force).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub schema_version: u32,
    pub trials: usize,
    pub max_n_sites: usize,
    pub tolerance: f64,
    pub max_discrepancy: f64,
    pub first_failure: Option<usize>,
    pub failures: Vec<FuzzInstance>,
    pub passed: bool,
}

fn random_kernel<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (KernelSpec, KernelPair) {
    let spec = |rng: &mut R| match rng.random_range(0..4) {
        0 => KernelSpec::Uniform,
        1 => KernelSpec::WrappedGaussian {
            scale: rng.random_range(0.02..0.5),
        },
        2 => KernelSpec::TopHat {
            half_width: rng.random_range(0.05..0.5),
        },
        _ => KernelSpec::RaisedCosine {
            half_width: rng.random_range(0.05..0.5),
        },
    };
    // shapes narrower than a lattice spacing are degenerate; redraw
    loop {
        let s = spec(rng);
        if let Ok(pair) = KernelPair::from_specs(&s, &s, n) {
            return (s, pair);
        }
    }
}

/// Random instances of (couplings, kernels, configuration, test function,
/// observable) comparing the closed-form drift with the brute-force
/// generator. Every trial checks all three observables.
pub fn drift_identity_fuzz<R: Rng + ?Sized>(
    trials: usize,
    max_n: usize,
    rng: &mut R,
) -> Result<FuzzReport> {
    drift_identity_fuzz_with(trials, max_n, rng, DriftFormula::Exact)
}

/// [`drift_identity_fuzz`] against a selectable closed-form variant.
pub fn drift_identity_fuzz_with<R: Rng + ?Sized>(
    trials: usize,
    max_n: usize,
    rng: &mut R,
    formula: DriftFormula,
) -> Result<FuzzReport> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if max_n == 0 {
        return Err(invalid("max_n", "must be at least 1"));
    }
    let basis = TestFunction::basis(4);
    let mut max_discrepancy = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..trials {
        let n = rng.random_range(1..=max_n);
        let beta1 = rng.random_range(0.05..3.0);
        let beta2 = rng.random_range(0.05..3.0);
        let lambda = if rng.random_bool(0.1) {
            0.0
        } else {
            rng.random_range(0.0..2.0)
        };
        let (k1, pair1) = random_kernel(rng, n);
        let (k2, pair2) = random_kernel(rng, n);
        let kernels = KernelPair::new(pair1.line1, pair2.line2)?;
        let params = ModelParams::new(beta1, beta2, lambda, n)?;
        let spins = |rng: &mut R| -> Vec<i8> {
            (0..n)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect()
        };
        let s1 = spins(rng);
        let s2 = spins(rng);
        let config = PairConfig::new(s1.clone(), s2.clone(), &kernels)?;
        let g = basis[rng.random_range(0..basis.len())];
        for target in DriftTarget::ALL {
            let closed_form = closed_form_drift_with(&config, &params, &g, target, formula).value;
            let brute_force = generator_apply(&config, &params, &kernels, &g, target);
            let diff = (closed_form - brute_force).abs();
            max_discrepancy = max_discrepancy.max(diff);
            if !(diff < DRIFT_TOLERANCE) {
                failures.push(FuzzInstance {
                    trial,
                    n_sites: n,
                    beta1,
                    beta2,
                    lambda,
                    kernel1: k1,
                    kernel2: k2,
                    s1: s1.clone(),
                    s2: s2.clone(),
                    test_function: g,
                    target,
                    closed_form,
                    brute_force,
                });
            }
        }
    }
    Ok(FuzzReport {
        schema_version: SCHEMA_VERSION,
        trials,
        max_n_sites: max_n,
        tolerance: DRIFT_TOLERANCE,
        max_discrepancy,
        first_failure: failures.first().map(|f| f.trial),
        passed: failures.is_empty(),
        failures,
    })
}

/// Recomputes both sides of a recorded instance.
pub fn replay_instance(instance: &FuzzInstance, formula: DriftFormula) -> Result<(f64, f64)> {
    let n = instance.n_sites;
    let kernels = KernelPair::from_specs(&instance.kernel1, &instance.kernel2, n)?;
    let params = ModelParams::new(instance.beta1, instance.beta2, instance.lambda, n)?;
    let config = PairConfig::new(instance.s1.clone(), instance.s2.clone(), &kernels)?;
    let g = instance.test_function;
    Ok((
        closed_form_drift_with(&config, &params, &g, instance.target, formula).value,
        generator_apply(&config, &params, &kernels, &g, instance.target),
    ))
}
