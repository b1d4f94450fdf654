//! Subcommand implementations: resolve the effective configuration, run the
//! core operation, write the outputs and map check results to errors.

use clap::Args;
use kt_core::harness::{
    chaos_gap_experiment, convergence_experiment, drift_identity_fuzz_with,
    variance_scaling_experiment, ChaosGapReport, ChaosGapSetup, ConvergenceReport,
    ConvergenceSetup, FuzzReport, VarianceReport, VarianceSetup,
};
use kt_core::kmc::{run, DriftFormula, DriftTarget, RunOptions, Schedule};
use kt_core::lattice::sample_initial;
use kt_core::pde::{
    integrate_ode, integrate_pde, macro_observable, ConvolutionMethod, MacroState, MeanFieldState,
    VEquation,
};
use kt_core::rng::stream;
use kt_core::stability::{
    self, confirm_turing, regime_scan, ConfirmationSettings, DispersionReport, ScanGrid, ScanRow,
    TuringConfirmation,
};
use kt_core::Profile;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Output, RunConfig};
use crate::error::CliError;
use crate::output::{cell, opt_cell, write_outputs, Header, Table};
use crate::Common;

fn core<T>(r: kt_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from_core)
}

fn load_config(common: &Common, command: &str) -> Result<RunConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("`{command}` needs --config <FILE>")))?;
    RunConfig::load(path)
}

fn resolve_output(common: &Common, base: Option<&Output>) -> Output {
    let mut out = base.cloned().unwrap_or_default();
    if let Some(dir) = &common.output {
        out.directory = dir.clone();
    }
    if let Some(formats) = &common.format {
        out.formats = formats.clone();
    }
    out
}

fn require_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    flag.or(config).ok_or_else(|| {
        CliError::Validation(
            "a master seed is required: pass --seed or set microscopic.seed".into(),
        )
    })
}

/// Resolves the seed and records it in the configuration, so the hash
/// covers a `--seed` override.
fn resolve_seed(flag: Option<u64>, cfg: &mut RunConfig) -> Result<u64, CliError> {
    let seed = require_seed(flag, cfg.microscopic.seed)?;
    cfg.microscopic.seed = Some(seed);
    Ok(seed)
}

fn finish<T: Serialize>(
    output: &Output,
    header: &Header,
    table: &Table,
    result: &T,
) -> Result<(), CliError> {
    if output.formats.is_empty() {
        return Err(CliError::Validation(
            "--format needs at least one of csv, json".into(),
        ));
    }
    for path in write_outputs(output, header, table, result)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Report plus the verdict of the subcommand's acceptance check.
#[derive(Serialize)]
struct Checked<'a, R: Serialize> {
    passed: bool,
    failures: Vec<String>,
    report: &'a R,
}

fn verdict(command: &str, failures: &[String]) -> Result<(), CliError> {
    if failures.is_empty() {
        println!("{command}: check passed");
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{command}: {}",
            failures.join("; ")
        )))
    }
}

fn profile_mean(p: &Profile) -> f64 {
    if p.mode == 0 {
        p.offset + p.amplitude
    } else {
        p.offset
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Master seed [default: microscopic.seed; required]
    #[arg(long)]
    seed: Option<u64>,
    /// Lattice size N [default: microscopic.n_sites, or 256]
    #[arg(long)]
    n_sites: Option<usize>,
    /// Time horizon T [default: microscopic.horizon, or 1]
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of independent trajectories [default: microscopic.ensemble_size, or 1]
    #[arg(long)]
    ensemble_size: Option<usize>,
}

#[derive(Serialize)]
struct TrajectoryOut {
    replicate: usize,
    proposals: u64,
    accepted: u64,
    /// `values[j][i]`: observable `j` at sample time `i`.
    values: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SimulationOut {
    n_sites: usize,
    horizon: f64,
    sample_times: Vec<f64>,
    labels: Vec<String>,
    trajectories: Vec<TrajectoryOut>,
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common, "simulate")?;
    let mic = &mut cfg.microscopic;
    mic.n_sites = args.n_sites.unwrap_or(mic.n_sites);
    mic.horizon = args.horizon.unwrap_or(mic.horizon);
    mic.ensemble_size = args.ensemble_size.unwrap_or(mic.ensemble_size);
    cfg.validate()?;
    let seed = resolve_seed(args.seed, &mut cfg)?;
    let mic = cfg.microscopic;
    let (params, kernels) = core(cfg.model_spec().lattice(mic.n_sites))?;
    let schedule = core(Schedule::uniform(mic.horizon, mic.sample_dt))?;
    let initial = cfg.initial;
    let observables = cfg.observables.clone();
    let runs = (0..mic.ensemble_size)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let config0 = sample_initial(&initial.psi1, &initial.psi2, &kernels, &mut rng)?;
            run(
                config0,
                &params,
                &kernels,
                &schedule,
                &observables,
                &mut rng,
                RunOptions {
                    seed,
                    record_events: false,
                },
            )
        })
        .collect::<kt_core::Result<Vec<_>>>();
    let runs = core(runs)?;
    let labels: Vec<String> = observables.iter().map(|o| o.label()).collect();
    let mut table = Table::new(
        ["replicate".to_string(), "time".to_string()]
            .into_iter()
            .chain(labels.iter().cloned()),
    );
    for (r, series) in runs.iter().enumerate() {
        for (i, t) in series.sample_times.iter().enumerate() {
            let mut row = vec![cell(r), cell(t)];
            row.extend(series.values.iter().map(|col| cell(col[i])));
            table.push(row);
        }
    }
    let out = SimulationOut {
        n_sites: mic.n_sites,
        horizon: mic.horizon,
        sample_times: schedule.sample_times().to_vec(),
        labels,
        trajectories: runs
            .into_iter()
            .enumerate()
            .map(|(replicate, s)| TrajectoryOut {
                replicate,
                proposals: s.event_count,
                accepted: s.accepted_count,
                values: s.values,
            })
            .collect(),
    };
    let output = resolve_output(&args.common, Some(&cfg.output));
    finish(
        &output,
        &Header::new("simulate", Some(&cfg), &(), Some(seed)),
        &table,
        &out,
    )
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct PdeArgs {
    #[command(flatten)]
    common: Common,
    /// Grid points M [default: macroscopic.grid_size, or 256]
    #[arg(long)]
    grid_size: Option<usize>,
    /// RK4 step [default: macroscopic.dt, or 0.01]
    #[arg(long)]
    dt: Option<f64>,
    /// Time horizon [default: macroscopic.horizon, or 1]
    #[arg(long)]
    horizon: Option<f64>,
    /// Form of the v equation [default: macroscopic.v_equation_variant, or generator-consistent]
    #[arg(long, value_parser = parse_v_equation)]
    v_equation: Option<VEquation>,
    /// Convolution method [default: macroscopic.convolution, or direct]
    #[arg(long, value_parser = parse_convolution)]
    convolution: Option<ConvolutionMethod>,
}

fn parse_v_equation(s: &str) -> Result<VEquation, String> {
    match s {
        "generator-consistent" => Ok(VEquation::GeneratorConsistent),
        "verbatim-hydro3" => Ok(VEquation::VerbatimHydro3),
        _ => Err("expected generator-consistent or verbatim-hydro3".into()),
    }
}

fn parse_convolution(s: &str) -> Result<ConvolutionMethod, String> {
    match s {
        "direct" => Ok(ConvolutionMethod::Direct),
        "spectral" => Ok(ConvolutionMethod::Spectral),
        _ => Err("expected direct or spectral".into()),
    }
}

#[derive(Serialize)]
struct PdeOut {
    grid_size: usize,
    dt: f64,
    v_equation: VEquation,
    sample_times: Vec<f64>,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
    sup_norm: Vec<f64>,
    final_state: MacroState,
}

pub fn pde(args: PdeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common, "pde")?;
    let mac = &mut cfg.macroscopic;
    mac.grid_size = args.grid_size.unwrap_or(mac.grid_size);
    mac.dt = args.dt.unwrap_or(mac.dt);
    mac.horizon = args.horizon.unwrap_or(mac.horizon);
    mac.v_equation_variant = args.v_equation.unwrap_or(mac.v_equation_variant);
    mac.convolution = args.convolution.unwrap_or(mac.convolution);
    cfg.validate()?;
    let mac = cfg.macroscopic;
    for obs in &cfg.observables {
        core(obs.validate(mac.grid_size))?;
    }
    let params = core(cfg.model_spec().pde(mac.grid_size, mac.v_equation_variant))?
        .with_convolution(mac.convolution);
    let state0 = core(MacroState::from_profiles(
        &cfg.initial.psi1,
        &cfg.initial.psi2,
        mac.grid_size,
    ))?;
    let schedule = core(Schedule::uniform(mac.horizon, mac.sample_dt))?;
    let path = core(integrate_pde(&state0, &params, &schedule, mac.dt))?;

    let labels: Vec<String> = cfg.observables.iter().map(|o| o.label()).collect();
    let values: Vec<Vec<f64>> = cfg
        .observables
        .iter()
        .map(|o| path.iter().map(|s| macro_observable(o, s)).collect())
        .collect();
    let sup_norm: Vec<f64> = path.iter().map(MacroState::sup_norm).collect();
    let mut table = Table::new(
        ["time".to_string()]
            .into_iter()
            .chain(labels.iter().cloned())
            .chain(["sup_norm".to_string()]),
    );
    for (i, s) in path.iter().enumerate() {
        let mut row = vec![cell(s.time)];
        row.extend(values.iter().map(|col| cell(col[i])));
        row.push(cell(sup_norm[i]));
        table.push(row);
    }
    let out = PdeOut {
        grid_size: mac.grid_size,
        dt: mac.dt,
        v_equation: mac.v_equation_variant,
        sample_times: path.iter().map(|s| s.time).collect(),
        labels,
        values,
        sup_norm,
        final_state: path.last().cloned().expect("schedule is nonempty"),
    };
    let output = resolve_output(&args.common, Some(&cfg.output));
    finish(
        &output,
        &Header::new("pde", Some(&cfg), &(), None),
        &table,
        &out,
    )
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[command(flatten)]
    common: Common,
    /// RK4 step [default: macroscopic.dt, or 0.01]
    #[arg(long)]
    dt: Option<f64>,
    /// Time horizon [default: macroscopic.horizon, or 1]
    #[arg(long)]
    horizon: Option<f64>,
}

pub fn ode(args: OdeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common, "ode")?;
    cfg.macroscopic.dt = args.dt.unwrap_or(cfg.macroscopic.dt);
    cfg.macroscopic.horizon = args.horizon.unwrap_or(cfg.macroscopic.horizon);
    cfg.validate()?;
    let mac = cfg.macroscopic;
    let m = &cfg.model;
    let state0 = core(MeanFieldState::new(
        profile_mean(&cfg.initial.psi1),
        profile_mean(&cfg.initial.psi2),
    ))?;
    let schedule = core(Schedule::uniform(mac.horizon, mac.sample_dt))?;
    let path = core(integrate_ode(
        &state0, m.beta1, m.beta2, m.lambda, &schedule, mac.dt,
    ))?;
    let mut table = Table::new(["time", "m1", "m2"]);
    for s in &path {
        table.push(vec![cell(s.time), cell(s.m1), cell(s.m2)]);
    }
    let output = resolve_output(&args.common, Some(&cfg.output));
    finish(
        &output,
        &Header::new("ode", Some(&cfg), &(), None),
        &table,
        &path,
    )
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct DispersionArgs {
    #[command(flatten)]
    common: Common,
    /// Largest Fourier mode [default: experiment.k_max, or 16]
    #[arg(long)]
    k_max: Option<u32>,
}

pub fn dispersion(args: DispersionArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common, "dispersion")?;
    cfg.experiment.k_max = args.k_max.unwrap_or(cfg.experiment.k_max);
    cfg.validate()?;
    let m = cfg.model_spec();
    let report: DispersionReport = core(stability::dispersion(
        m.beta1,
        m.beta2,
        m.lambda,
        &m.kernel1,
        &m.kernel2,
        cfg.experiment.k_max,
    ))?;
    let mut table = Table::new(["k", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2"]);
    for mode in &report.modes {
        let [a, b] = mode.eigenvalues;
        table.push(vec![
            cell(mode.k),
            cell(a.re),
            cell(a.im),
            cell(b.re),
            cell(b.im),
        ]);
    }
    println!(
        "dispersion: turing = {}, max growth = {}, unstable modes = {:?}",
        report.turing, report.max_growth, report.unstable_modes
    );
    let output = resolve_output(&args.common, Some(&cfg.output));
    finish(
        &output,
        &Header::new("dispersion", Some(&cfg), &(), None),
        &table,
        &report,
    )
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// Grid points per axis [default: scan.points, or 9]
    #[arg(long)]
    points: Option<usize>,
    /// Largest Fourier mode [default: scan.k_max, or 16]
    #[arg(long)]
    k_max: Option<u32>,
    /// Confirm the strongest Turing cell with a nonlinear run (needs a seed; exit 3 if it fails) [default: scan.confirm, or false]
    #[arg(long)]
    confirm: bool,
    /// Seed of the confirmation perturbation [default: microscopic.seed]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ScanOut {
    grid: ScanGrid,
    k_max: u32,
    cells: usize,
    turing_cells: usize,
    /// Turing cell with the largest nonzero-mode growth.
    strongest: Option<ScanRow>,
    confirmation: Option<TuringConfirmation>,
    rows: Vec<ScanRow>,
}

pub fn scan(args: ScanArgs) -> Result<(), CliError> {
    let mut cfg = match &args.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::with_model(crate::config::Model {
            beta1: 1.0,
            beta2: 1.0,
            lambda: 0.0,
        }),
    };
    cfg.scan.points = args.points.unwrap_or(cfg.scan.points);
    cfg.scan.k_max = args.k_max.unwrap_or(cfg.scan.k_max);
    cfg.scan.confirm |= args.confirm;
    cfg.validate()?;
    let seed = if cfg.scan.confirm {
        Some(resolve_seed(args.seed, &mut cfg)?)
    } else {
        None
    };
    let s = &cfg.scan;
    let grid = ScanGrid::linspace(
        (s.beta1[0], s.beta1[1]),
        (s.beta2[0], s.beta2[1]),
        (s.lambda[0], s.lambda[1]),
        (s.scale[0], s.scale[1]),
        s.points,
    );
    let rows = core(regime_scan(&grid, s.k_max))?;
    let strongest = rows
        .iter()
        .filter(|r| r.turing)
        .fold(None::<ScanRow>, |best, r| match best {
            Some(b) if b.max_growth_nonzero >= r.max_growth_nonzero => Some(b),
            _ => Some(*r),
        });
    let confirmation = match (seed, strongest) {
        (Some(seed), Some(row)) => Some(core(confirm_turing(
            &row.point,
            &ConfirmationSettings::default(),
            seed,
        ))?),
        _ => None,
    };
    let mut table = Table::new([
        "beta1",
        "beta2",
        "lambda",
        "scale1",
        "scale2",
        "growth_k0",
        "max_growth_nonzero",
        "turing",
    ]);
    for r in &rows {
        let p = r.point;
        table.push(vec![
            cell(p.beta1),
            cell(p.beta2),
            cell(p.lambda),
            cell(p.scale1),
            cell(p.scale2),
            cell(r.growth_k0),
            cell(r.max_growth_nonzero),
            cell(r.turing),
        ]);
    }
    let turing_cells = rows.iter().filter(|r| r.turing).count();
    println!(
        "scan: {turing_cells} of {} cells show Turing instability",
        rows.len()
    );
    let out = ScanOut {
        cells: rows.len(),
        grid,
        k_max: s.k_max,
        turing_cells,
        strongest,
        confirmation,
        rows,
    };
    if let Some(c) = &out.confirmation {
        println!(
            "scan: confirmation growth factor {} (peak at t = {})",
            c.growth_factor, c.peak_time
        );
    }
    let output = resolve_output(&args.common, Some(&cfg.output));
    let scan_settings = (&cfg.scan, ConfirmationSettings::default());
    finish(
        &output,
        &Header::new("scan", Some(&cfg), &scan_settings, seed),
        &table,
        &out,
    )?;
    match (cfg.scan.confirm, out.confirmation) {
        (true, Some(c)) if !c.confirmed => Err(CliError::CheckFailed(format!(
            "scan: nonlinear growth factor {} below {}",
            c.growth_factor,
            ConfirmationSettings::default().required_growth
        ))),
        (true, None) => Err(CliError::CheckFailed(
            "scan: no Turing cell to confirm".into(),
        )),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------------

fn parse_sizes(s: &str) -> Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a lattice size"))
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    /// Master seed [default: microscopic.seed; required]
    #[arg(long)]
    seed: Option<u64>,
    /// Increasing lattice sizes, comma separated [default: experiment.lattice_sizes, or 128,512,2048]
    #[arg(long, value_delimiter = ',', value_parser = parse_sizes)]
    lattice_sizes: Option<Vec<usize>>,
    /// Trajectories per lattice size [default: experiment.ensemble_size, or 32]
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Time horizon [default: experiment.horizon, or 1]
    #[arg(long)]
    horizon: Option<f64>,
}

fn apply_experiment_overrides(
    cfg: &mut RunConfig,
    sizes: Option<Vec<usize>>,
    ensemble: Option<usize>,
    horizon: Option<f64>,
) {
    let e = &mut cfg.experiment;
    if let Some(s) = sizes {
        e.lattice_sizes = s;
    }
    e.ensemble_size = ensemble.unwrap_or(e.ensemble_size);
    e.horizon = horizon.unwrap_or(e.horizon);
}

pub fn converge(args: ConvergeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common, "converge")?;
    apply_experiment_overrides(
        &mut cfg,
        args.lattice_sizes,
        args.ensemble_size,
        args.horizon,
    );
    cfg.validate()?;
    let seed = resolve_seed(args.seed, &mut cfg)?;
    let e = &cfg.experiment;
    let mut setup = ConvergenceSetup::new(
        cfg.model_spec(),
        cfg.initial.psi1,
        cfg.initial.psi2,
        e.lattice_sizes.clone(),
        e.ensemble_size,
        e.horizon,
    );
    setup.sample_dt = cfg.microscopic.sample_dt;
    setup.test_functions = e.test_functions.clone();
    setup.v_equation = cfg.macroscopic.v_equation_variant;
    let report: ConvergenceReport = core(convergence_experiment(&setup, seed))?;

    let mut failures = Vec::new();
    for (name, monotone, slope) in [
        ("u1", report.monotone.u1, report.slope.u1),
        ("u2", report.monotone.u2, report.slope.u2),
        ("v", report.monotone.v, report.slope.v),
    ] {
        if !monotone {
            failures.push(format!("{name}: mean error not strictly decreasing in N"));
        }
        match slope {
            Some(s) if s > e.min_slope => {}
            other => failures.push(format!("{name}: slope {other:?} not above {}", e.min_slope)),
        }
    }
    let mut table = Table::new([
        "n_sites",
        "gamma",
        "mean_u1",
        "mean_u2",
        "mean_v",
        "stderr_u1",
        "stderr_u2",
        "stderr_v",
    ]);
    for r in &report.rows {
        table.push(vec![
            cell(r.n_sites),
            cell(r.gamma),
            cell(r.mean_error.u1),
            cell(r.mean_error.u2),
            cell(r.mean_error.v),
            opt_cell(r.stderr.map(|s| s.u1)),
            opt_cell(r.stderr.map(|s| s.u2)),
            opt_cell(r.stderr.map(|s| s.v)),
        ]);
    }
    let output = resolve_output(&args.common, Some(&cfg.output));
    let checked = Checked {
        passed: failures.is_empty(),
        failures: failures.clone(),
        report: &report,
    };
    finish(
        &output,
        &Header::new("converge", Some(&cfg), &setup, Some(seed)),
        &table,
        &checked,
    )?;
    verdict("converge", &failures)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[command(flatten)]
    common: Common,
    /// Master seed [default: microscopic.seed; required]
    #[arg(long)]
    seed: Option<u64>,
    /// Increasing lattice sizes, comma separated [default: experiment.lattice_sizes, or 128,512,2048]
    #[arg(long, value_delimiter = ',', value_parser = parse_sizes)]
    lattice_sizes: Option<Vec<usize>>,
    /// Trajectories per lattice size [default: experiment.ensemble_size, or 32]
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Time horizon [default: experiment.horizon, or 1]
    #[arg(long)]
    horizon: Option<f64>,
}

pub fn variance(args: VarianceArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common, "variance")?;
    apply_experiment_overrides(
        &mut cfg,
        args.lattice_sizes,
        args.ensemble_size,
        args.horizon,
    );
    cfg.validate()?;
    let seed = resolve_seed(args.seed, &mut cfg)?;
    let e = &cfg.experiment;
    let setup = VarianceSetup {
        model: cfg.model_spec(),
        psi1: cfg.initial.psi1,
        psi2: cfg.initial.psi2,
        lattice_sizes: e.lattice_sizes.clone(),
        ensemble_size: e.ensemble_size,
        horizon: e.horizon,
        test_function: e.test_function,
    };
    let report: VarianceReport = core(variance_scaling_experiment(&setup, seed))?;
    let [lo, hi] = e.variance_slope_range;
    let mut failures = Vec::new();
    if e.test_function.sup_norm() > 0.0 {
        for which in DriftTarget::ALL {
            let fit = report.fit(which);
            match fit.slope {
                Some(s) if (lo..=hi).contains(&s) => {}
                other => failures.push(format!("{which:?}: slope {other:?} outside [{lo}, {hi}]")),
            }
            match fit.constant_spread {
                Some(s) if s <= e.max_constant_spread => {}
                other => failures.push(format!(
                    "{which:?}: constant spread {other:?} above {}",
                    e.max_constant_spread
                )),
            }
        }
    }
    let mut table = Table::new([
        "n_sites",
        "gamma",
        "var_line1",
        "var_line2",
        "var_correlation",
        "c_line1",
        "c_line2",
        "c_correlation",
        "exceeds_line1",
        "exceeds_line2",
        "exceeds_correlation",
    ]);
    for r in &report.rows {
        table.push(vec![
            cell(r.n_sites),
            cell(r.gamma),
            cell(r.line1.variance),
            cell(r.line2.variance),
            cell(r.correlation.variance),
            opt_cell(r.line1.constant),
            opt_cell(r.line2.constant),
            opt_cell(r.correlation.constant),
            cell(r.line1.exceeds_bound),
            cell(r.line2.exceeds_bound),
            cell(r.correlation.exceeds_bound),
        ]);
    }
    let output = resolve_output(&args.common, Some(&cfg.output));
    let checked = Checked {
        passed: failures.is_empty(),
        failures: failures.clone(),
        report: &report,
    };
    finish(
        &output,
        &Header::new("variance", Some(&cfg), &setup, Some(seed)),
        &table,
        &checked,
    )?;
    verdict("variance", &failures)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ChaosGapArgs {
    #[command(flatten)]
    common: Common,
    /// Master seed [default: microscopic.seed; required]
    #[arg(long)]
    seed: Option<u64>,
    /// Lattice size N [default: microscopic.n_sites, or 256]
    #[arg(long)]
    n_sites: Option<usize>,
    /// Number of trajectories [default: experiment.ensemble_size, or 32]
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Time horizon [default: experiment.horizon, or 1]
    #[arg(long)]
    horizon: Option<f64>,
}

pub fn chaos_gap(args: ChaosGapArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common, "chaos-gap")?;
    apply_experiment_overrides(&mut cfg, None, args.ensemble_size, args.horizon);
    cfg.microscopic.n_sites = args.n_sites.unwrap_or(cfg.microscopic.n_sites);
    cfg.validate()?;
    let seed = resolve_seed(args.seed, &mut cfg)?;
    let setup = ChaosGapSetup {
        model: cfg.model_spec(),
        psi1: cfg.initial.psi1,
        psi2: cfg.initial.psi2,
        n_sites: cfg.microscopic.n_sites,
        ensemble_size: cfg.experiment.ensemble_size,
        horizon: cfg.experiment.horizon,
        sample_dt: cfg.microscopic.sample_dt,
        test_function: cfg.experiment.test_function,
        grid_size: cfg.macroscopic.grid_size,
        dt: cfg.macroscopic.dt,
        v_equation: cfg.macroscopic.v_equation_variant,
    };
    let report: ChaosGapReport = core(chaos_gap_experiment(&setup, seed))?;
    let mut failures = Vec::new();
    if !report.tracks_macro {
        failures.push(
            "microscopic gap departs from the PDE gap by more than 3 standard errors".to_string(),
        );
    }
    if cfg.model.lambda > 0.0 && !report.gap_detected {
        failures.push("no significant gap although lambda > 0".to_string());
    }
    if cfg.model.lambda == 0.0 && report.gap_detected {
        failures.push("significant gap although lambda = 0".to_string());
    }
    let mut table = Table::new([
        "time",
        "micro_gap",
        "stderr",
        "macro_gap",
        "macro_pointwise_gap",
        "significant",
        "tracks_macro",
    ]);
    for r in &report.rows {
        table.push(vec![
            cell(r.time),
            cell(r.micro_gap),
            cell(r.stderr),
            cell(r.macro_gap),
            cell(r.macro_pointwise_gap),
            cell(r.significant),
            cell(r.tracks_macro),
        ]);
    }
    let output = resolve_output(&args.common, Some(&cfg.output));
    let checked = Checked {
        passed: failures.is_empty(),
        failures: failures.clone(),
        report: &report,
    };
    finish(
        &output,
        &Header::new("chaos-gap", Some(&cfg), &setup, Some(seed)),
        &table,
        &checked,
    )?;
    verdict("chaos-gap", &failures)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct DriftCheckArgs {
    #[command(flatten)]
    common: Common,
    /// Master seed [default: microscopic.seed; required]
    #[arg(long)]
    seed: Option<u64>,
    /// Random instances [default: experiment.trials, or 1000]
    #[arg(long)]
    trials: Option<usize>,
    /// Largest lattice size [default: experiment.max_n, or 16]
    #[arg(long)]
    max_n: Option<usize>,
    /// Check a sign-flipped correlation drift instead (expected to fail) [default: false]
    #[arg(long)]
    mutant: bool,
}

#[derive(Serialize)]
struct DriftSettings {
    trials: usize,
    max_n: usize,
    mutant: bool,
}

pub fn drift_check(args: DriftCheckArgs) -> Result<(), CliError> {
    let cfg = match &args.common.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            cfg.validate()?;
            Some(cfg)
        }
        None => None,
    };
    let defaults = cfg
        .as_ref()
        .map(|c| c.experiment.clone())
        .unwrap_or_default();
    let settings = DriftSettings {
        trials: args.trials.unwrap_or(defaults.trials),
        max_n: args.max_n.unwrap_or(defaults.max_n),
        mutant: args.mutant,
    };
    let seed = require_seed(args.seed, cfg.as_ref().and_then(|c| c.microscopic.seed))?;
    let formula = if settings.mutant {
        DriftFormula::MutatedCorrelationSign
    } else {
        DriftFormula::Exact
    };
    let report: FuzzReport = core(drift_identity_fuzz_with(
        settings.trials,
        settings.max_n,
        &mut stream(seed, 0),
        formula,
    ))?;
    let mut table = Table::new([
        "trials",
        "max_n",
        "tolerance",
        "max_discrepancy",
        "failures",
        "first_failure",
        "passed",
    ]);
    table.push(vec![
        cell(report.trials),
        cell(report.max_n_sites),
        cell(report.tolerance),
        cell(report.max_discrepancy),
        cell(report.failures.len()),
        report.first_failure.map(cell).unwrap_or_default(),
        cell(report.passed),
    ]);
    let output = resolve_output(&args.common, cfg.as_ref().map(|c| &c.output));
    finish(
        &output,
        &Header::new("drift-check", cfg.as_ref(), &settings, Some(seed)),
        &table,
        &report,
    )?;
    let failures: Vec<String> = report
        .failures
        .first()
        .map(|f| {
            vec![format!(
                "{} mismatches; first at trial {} ({:?}, N = {}): closed form {} vs generator {}",
                report.failures.len(),
                f.trial,
                f.target,
                f.n_sites,
                f.closed_form,
                f.brute_force
            )]
        })
        .unwrap_or_default();
    verdict("drift-check", &failures)
}
