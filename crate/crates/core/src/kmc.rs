//! Exact continuous-time simulation by uniformization, and generator
//! diagnostics on linear and bilinear observables.
//!
//! Every spin on both lines carries a proposal clock of rate 1. Because each
//! flip rate lies in `(0, 1)`, accepting a proposal with probability equal to
//! the flip rate (thinning) reproduces the spin-flip process exactly. Total
//! proposal rate is `2N`.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{TestFunction, TorusFn};
use crate::lattice::{
    correlation_field, flip_rate, inner_product, inner_product_grid, KernelPair, Line, ModelParams,
    PairConfig,
};
pub use crate::schedule::Schedule;

/// Which observable a drift or martingale refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftTarget {
    Line1,
    Line2,
    Correlation,
}

impl DriftTarget {
    pub const ALL: [DriftTarget; 3] = [
        DriftTarget::Line1,
        DriftTarget::Line2,
        DriftTarget::Correlation,
    ];

    pub fn number(self) -> u8 {
        match self {
            DriftTarget::Line1 => 1,
            DriftTarget::Line2 => 2,
            DriftTarget::Correlation => 3,
        }
    }

    pub fn from_number(which: u8) -> Option<Self> {
        match which {
            1 => Some(DriftTarget::Line1),
            2 => Some(DriftTarget::Line2),
            3 => Some(DriftTarget::Correlation),
            _ => None,
        }
    }

    /// `⟨σ1,G⟩`, `⟨σ2,G⟩` or `⟨η,G⟩` from precomputed `G` values.
    pub(crate) fn pairing(self, config: &PairConfig, g: &[f64]) -> f64 {
        match self {
            DriftTarget::Line1 => inner_product_grid(config.spins(Line::One), g),
            DriftTarget::Line2 => inner_product_grid(config.spins(Line::Two), g),
            DriftTarget::Correlation => {
                let s1 = config.spins(Line::One);
                let s2 = config.spins(Line::Two);
                let acc: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(x, gx)| (s1[x] * s2[x]) as f64 * gx)
                    .sum();
                acc / g.len() as f64
            }
        }
    }
}

/// Value of a drift functional `B_which^G` at one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftValue {
    pub which: DriftTarget,
    pub value: f64,
}

/// Variant of the closed-form drift, kept selectable so that the identity
/// checks can be exercised against a known-wrong formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftFormula {
    #[default]
    Exact,
    /// Correlation drift with the sign of the line-2 difference bracket flipped.
    MutatedCorrelationSign,
}

/// Observable recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableSpec {
    InnerProductLine1 {
        test_function: TestFunction,
    },
    InnerProductLine2 {
        test_function: TestFunction,
    },
    InnerProductEta {
        test_function: TestFunction,
    },
    MagnetizationLine1,
    MagnetizationLine2,
    /// Modulus of `γ Σ_x σ(x) e^{−2πikx/N}` on line 1 or 2.
    FourierMode {
        line: u8,
        k: usize,
    },
}

impl ObservableSpec {
    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if let ObservableSpec::FourierMode { line, k } = *self {
            if line != 1 && line != 2 {
                return Err(Error::Config(format!(
                    "fourier-mode line must be 1 or 2, got {line}"
                )));
            }
            if 2 * k >= n_sites {
                return Err(Error::Config(format!(
                    "fourier-mode k = {k} requires k < N/2 (N = {n_sites})"
                )));
            }
        }
        Ok(())
    }

    /// Column label used in tabular output.
    pub fn label(&self) -> String {
        match self {
            ObservableSpec::InnerProductLine1 { test_function } => {
                format!("line1[{test_function}]")
            }
            ObservableSpec::InnerProductLine2 { test_function } => {
                format!("line2[{test_function}]")
            }
            ObservableSpec::InnerProductEta { test_function } => format!("eta[{test_function}]"),
            ObservableSpec::MagnetizationLine1 => "m1".into(),
            ObservableSpec::MagnetizationLine2 => "m2".into(),
            ObservableSpec::FourierMode { line, k } => format!("fourier{line}[{k}]"),
        }
    }

    /// Evaluates on a microscopic configuration.
    pub fn eval(&self, config: &PairConfig) -> f64 {
        match *self {
            ObservableSpec::InnerProductLine1 { test_function } => {
                inner_product(config.spins(Line::One), &test_function)
            }
            ObservableSpec::InnerProductLine2 { test_function } => {
                inner_product(config.spins(Line::Two), &test_function)
            }
            ObservableSpec::InnerProductEta { test_function } => {
                inner_product(&correlation_field(config)[..], &test_function)
            }
            ObservableSpec::MagnetizationLine1 => inner_product(config.spins(Line::One), &|_| 1.0),
            ObservableSpec::MagnetizationLine2 => inner_product(config.spins(Line::Two), &|_| 1.0),
            ObservableSpec::FourierMode { line, k } => {
                let spins = if line == 1 {
                    config.spins(Line::One)
                } else {
                    config.spins(Line::Two)
                };
                fourier_modulus(spins.iter().map(|&s| s as f64), spins.len(), k)
            }
        }
    }
}

pub(crate) fn fourier_modulus(values: impl Iterator<Item = f64>, n: usize, k: usize) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    let step = TAU * k as f64 / n as f64;
    for (x, v) in values.enumerate() {
        let a = step * x as f64;
        re += v * a.cos();
        im -= v * a.sin();
    }
    re.hypot(im) / n as f64
}

/// One accepted flip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipEvent {
    pub time: f64,
    pub line: Line,
    pub site: usize,
}

/// Initial state plus every accepted flip, enough to replay a path.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub initial: PairConfig,
    pub events: Vec<FlipEvent>,
}

/// Observable values of one trajectory at its sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySeries {
    pub sample_times: Vec<f64>,
    pub labels: Vec<String>,
    /// `values[j][i]` is observable `j` at `sample_times[i]`.
    pub values: Vec<Vec<f64>>,
    /// Proposals in `[0, T]`.
    pub event_count: u64,
    pub accepted_count: u64,
    pub seed: u64,
    pub event_log: Option<EventLog>,
    pub final_config: PairConfig,
}

#[inline]
fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // 1 − U ∈ (0, 1]
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Draws a uniform (line, site) proposal and accepts it with the flip rate.
#[inline]
fn propose<R: Rng + ?Sized>(
    config: &mut PairConfig,
    params: &ModelParams,
    kernels: &KernelPair,
    rng: &mut R,
) -> Option<(Line, usize)> {
    let n = config.n_sites();
    let pick = rng.random_range(0..2 * n);
    let (line, site) = if pick < n {
        (Line::One, pick)
    } else {
        (Line::Two, pick - n)
    };
    let rate = flip_rate(line, site, config, params);
    if rng.random::<f64>() < rate {
        config.flip(line, site, kernels);
        Some((line, site))
    } else {
        None
    }
}

/// Advances the uniformized chain by one proposal.
///
/// Returns the exponential waiting time (rate `2N`) and the flipped spin,
/// if the proposal was accepted.
pub fn step<R: Rng + ?Sized>(
    config: &mut PairConfig,
    params: &ModelParams,
    kernels: &KernelPair,
    rng: &mut R,
) -> (f64, Option<(Line, usize)>) {
    let wait = exponential(rng, 2.0 * config.n_sites() as f64);
    (wait, propose(config, params, kernels, rng))
}

/// Options for [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Seed recorded in the output series.
    pub seed: u64,
    /// Keep the full event log (needed for martingale diagnostics).
    pub record_events: bool,
}

/// Simulates from `config0` up to the schedule horizon, recording the
/// observables on the state after all events at or before each sample time.
pub fn run<R: Rng + ?Sized>(
    config0: PairConfig,
    params: &ModelParams,
    kernels: &KernelPair,
    schedule: &Schedule,
    observables: &[ObservableSpec],
    rng: &mut R,
    options: RunOptions,
) -> Result<TrajectorySeries> {
    if observables.is_empty() {
        return Err(Error::Config("observable list is empty".into()));
    }
    let n = config0.n_sites();
    if kernels.n_sites() != n || params.n_sites != n {
        return Err(Error::Dimension {
            expected: n,
            actual: kernels.n_sites(),
        });
    }
    for obs in observables {
        obs.validate(n)?;
    }
    let mut log = options.record_events.then(|| EventLog {
        initial: config0.clone(),
        events: Vec::new(),
    });
    let mut config = config0;
    let total_rate = 2.0 * n as f64;
    let horizon = schedule.horizon();
    let mut values: Vec<Vec<f64>> =
        vec![Vec::with_capacity(schedule.sample_times().len()); observables.len()];
    let mut event_count = 0u64;
    let mut accepted_count = 0u64;
    let mut next_event = exponential(rng, total_rate);

    let record = |config: &PairConfig, values: &mut Vec<Vec<f64>>| {
        for (column, obs) in values.iter_mut().zip(observables) {
            column.push(obs.eval(config));
        }
    };

    for &sample in schedule.sample_times() {
        while next_event <= sample {
            event_count += 1;
            if let Some((line, site)) = propose(&mut config, params, kernels, rng) {
                accepted_count += 1;
                if let Some(log) = log.as_mut() {
                    log.events.push(FlipEvent {
                        time: next_event,
                        line,
                        site,
                    });
                }
            }
            next_event += exponential(rng, total_rate);
        }
        record(&config, &mut values);
    }
    // proposals after the last sample time but within the horizon
    while next_event <= horizon {
        event_count += 1;
        if let Some((line, site)) = propose(&mut config, params, kernels, rng) {
            accepted_count += 1;
            if let Some(log) = log.as_mut() {
                log.events.push(FlipEvent {
                    time: next_event,
                    line,
                    site,
                });
            }
        }
        next_event += exponential(rng, total_rate);
    }

    Ok(TrajectorySeries {
        sample_times: schedule.sample_times().to_vec(),
        labels: observables.iter().map(ObservableSpec::label).collect(),
        values,
        event_count,
        accepted_count,
        seed: options.seed,
        event_log: log,
        final_config: config,
    })
}

/// Brute-force generator `L_γ F` for `F = ⟨σ1,G⟩`, `⟨σ2,G⟩` or `⟨η,G⟩`:
/// sums rate × increment over all `2N` single flips.
pub fn generator_apply(
    config: &PairConfig,
    params: &ModelParams,
    kernels: &KernelPair,
    g: &impl TorusFn,
    which: DriftTarget,
) -> f64 {
    let observe = |c: &PairConfig| -> f64 {
        match which {
            DriftTarget::Line1 => inner_product(c.spins(Line::One), g),
            DriftTarget::Line2 => inner_product(c.spins(Line::Two), g),
            DriftTarget::Correlation => inner_product(&correlation_field(c)[..], g),
        }
    };
    let before = observe(config);
    let mut total = 0.0;
    for line in [Line::One, Line::Two] {
        for x in 0..config.n_sites() {
            let rate = flip_rate(line, x, config, params);
            let mut flipped = config.clone();
            flipped.flip(line, x, kernels);
            total += rate * (observe(&flipped) - before);
        }
    }
    total
}

/// Closed-form drift `B_which^G` evaluated from the cached fields.
pub fn closed_form_drift(
    config: &PairConfig,
    params: &ModelParams,
    g: &impl TorusFn,
    which: DriftTarget,
) -> DriftValue {
    closed_form_drift_with(config, params, g, which, DriftFormula::Exact)
}

/// [`closed_form_drift`] with a selectable formula variant.
pub fn closed_form_drift_with(
    config: &PairConfig,
    params: &ModelParams,
    g: &impl TorusFn,
    which: DriftTarget,
    formula: DriftFormula,
) -> DriftValue {
    let grid = g.sample(config.n_sites());
    DriftValue {
        which,
        value: drift_on_grid(config, params, &grid, which, formula),
    }
}

/// Tanh brackets of one line at one site: `(½[T₊ + T₋], ½[T₊ − T₋])` with
/// `T± = tanh(β h ± βλ)`.
#[inline]
fn brackets(beta: f64, h: f64, lambda: f64) -> (f64, f64) {
    let plus = (beta * h + beta * lambda).tanh();
    let minus = (beta * h - beta * lambda).tanh();
    (0.5 * (plus + minus), 0.5 * (plus - minus))
}

pub(crate) fn drift_on_grid(
    config: &PairConfig,
    params: &ModelParams,
    g: &[f64],
    which: DriftTarget,
    formula: DriftFormula,
) -> f64 {
    let s1 = config.spins(Line::One);
    let s2 = config.spins(Line::Two);
    let h1 = config.field(Line::One);
    let h2 = config.field(Line::Two);
    let (b1, b2, lambda) = (params.beta1, params.beta2, params.lambda);
    let mut acc = 0.0;
    match which {
        DriftTarget::Line1 => {
            for x in 0..g.len() {
                let (sum, diff) = brackets(b1, h1[x], lambda);
                acc += (-(s1[x] as f64) + sum + s2[x] as f64 * diff) * g[x];
            }
        }
        DriftTarget::Line2 => {
            for x in 0..g.len() {
                let (sum, diff) = brackets(b2, h2[x], lambda);
                acc += (-(s2[x] as f64) + sum - s1[x] as f64 * diff) * g[x];
            }
        }
        DriftTarget::Correlation => {
            let line2_sign = match formula {
                DriftFormula::Exact => -1.0,
                DriftFormula::MutatedCorrelationSign => 1.0,
            };
            for x in 0..g.len() {
                let (sum1, diff1) = brackets(b1, h1[x], lambda);
                let (sum2, diff2) = brackets(b2, h2[x], lambda);
                let eta = (s1[x] * s2[x]) as f64;
                acc += (-2.0 * eta
                    + diff1
                    + line2_sign * diff2
                    + s1[x] as f64 * sum2
                    + s2[x] as f64 * sum1)
                    * g[x];
            }
        }
    }
    acc / g.len() as f64
}

/// Martingale residual `M(t) = ⟨obs(t),G⟩ − ⟨obs(0),G⟩ − ∫₀ᵗ B^G ds` at each
/// sample time. The drift is constant between events, so the integral is an
/// exact sum over inter-event intervals.
pub fn martingale_residual(
    series: &TrajectorySeries,
    params: &ModelParams,
    kernels: &KernelPair,
    g: &impl TorusFn,
    which: DriftTarget,
) -> Result<Vec<f64>> {
    let log = series
        .event_log
        .as_ref()
        .ok_or_else(|| Error::Config("martingale residual needs a recorded event log".into()))?;
    let grid = g.sample(log.initial.n_sites());
    Ok(replay_residual(
        log,
        params,
        kernels,
        &grid,
        which,
        &series.sample_times,
    ))
}

pub(crate) fn replay_residual(
    log: &EventLog,
    params: &ModelParams,
    kernels: &KernelPair,
    g: &[f64],
    which: DriftTarget,
    sample_times: &[f64],
) -> Vec<f64> {
    let mut state = log.initial.clone();
    let start = which.pairing(&state, g);
    let mut drift = drift_on_grid(&state, params, g, which, DriftFormula::Exact);
    let mut integral = 0.0;
    let mut t_prev = 0.0;
    let mut events = log.events.iter().peekable();
    let mut out = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        while let Some(ev) = events.next_if(|ev| ev.time <= t) {
            integral += drift * (ev.time - t_prev);
            t_prev = ev.time;
            state.flip(ev.line, ev.site, kernels);
            drift = drift_on_grid(&state, params, g, which, DriftFormula::Exact);
        }
        let compensator = integral + drift * (t - t_prev);
        out.push(which.pairing(&state, g) - start - compensator);
    }
    out
}
