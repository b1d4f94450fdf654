//! Run configuration: a sectioned TOML file, validated before any run starts.

use std::fs;
use std::path::{Path, PathBuf};

use kt_core::harness::ModelSpec;
use kt_core::kmc::ObservableSpec;
use kt_core::pde::{ConvolutionMethod, VEquation};
use kt_core::{KernelSpec, Profile, TestFunction};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(default)]
    pub kernels: Kernels,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub microscopic: Microscopic,
    #[serde(default)]
    pub macroscopic: Macroscopic,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default)]
    pub scan: Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Kernels {
    pub line1: KernelSpec,
    pub line2: KernelSpec,
}

impl Default for Kernels {
    fn default() -> Self {
        Kernels {
            line1: KernelSpec::Uniform,
            line2: KernelSpec::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Initial {
    pub psi1: Profile,
    pub psi2: Profile,
}

impl Default for Initial {
    fn default() -> Self {
        Initial {
            psi1: Profile::constant(0.0),
            psi2: Profile::constant(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Microscopic {
    pub n_sites: usize,
    pub horizon: f64,
    pub sample_dt: f64,
    pub ensemble_size: usize,
    pub seed: Option<u64>,
}

impl Default for Microscopic {
    fn default() -> Self {
        Microscopic {
            n_sites: 256,
            horizon: 1.0,
            sample_dt: 0.05,
            ensemble_size: 1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Macroscopic {
    pub grid_size: usize,
    pub dt: f64,
    pub horizon: f64,
    pub sample_dt: f64,
    pub v_equation_variant: VEquation,
    pub convolution: ConvolutionMethod,
}

impl Default for Macroscopic {
    fn default() -> Self {
        Macroscopic {
            grid_size: 256,
            dt: 0.01,
            horizon: 1.0,
            sample_dt: 0.05,
            v_equation_variant: VEquation::GeneratorConsistent,
            convolution: ConvolutionMethod::Direct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            directory: PathBuf::from("kt-output"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

/// Settings of the ensemble experiments (`converge`, `variance`,
/// `chaos-gap`, `drift-check`, `dispersion`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    pub lattice_sizes: Vec<usize>,
    pub ensemble_size: usize,
    pub horizon: f64,
    pub test_functions: Vec<TestFunction>,
    /// Single test function for `variance` and `chaos-gap`.
    pub test_function: TestFunction,
    pub min_slope: f64,
    pub variance_slope_range: [f64; 2],
    pub max_constant_spread: f64,
    pub trials: usize,
    pub max_n: usize,
    pub k_max: u32,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            lattice_sizes: vec![128, 512, 2048],
            ensemble_size: 32,
            horizon: 1.0,
            test_functions: vec![
                TestFunction::ONE,
                TestFunction::Cos(1),
                TestFunction::Sin(1),
            ],
            test_function: TestFunction::Cos(1),
            min_slope: 0.3,
            variance_slope_range: [0.7, 1.3],
            max_constant_spread: 3.0,
            trials: 1000,
            max_n: 16,
            k_max: 16,
        }
    }
}

/// Box of the Turing regime scan; each axis is `[low, high]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scan {
    pub beta1: [f64; 2],
    pub beta2: [f64; 2],
    pub lambda: [f64; 2],
    pub scale: [f64; 2],
    pub points: usize,
    pub k_max: u32,
    pub confirm: bool,
}

impl Default for Scan {
    fn default() -> Self {
        Scan {
            beta1: [0.5, 2.0],
            beta2: [0.5, 2.0],
            lambda: [0.1, 2.0],
            scale: [0.02, 0.3],
            points: 9,
            k_max: 16,
            confirm: false,
        }
    }
}

fn default_observables() -> Vec<ObservableSpec> {
    vec![
        ObservableSpec::MagnetizationLine1,
        ObservableSpec::MagnetizationLine2,
        ObservableSpec::InnerProductEta {
            test_function: TestFunction::ONE,
        },
    ]
}

impl RunConfig {
    /// Configuration with the given couplings and every other section at its
    /// default.
    pub fn with_model(model: Model) -> Self {
        RunConfig {
            model,
            kernels: Kernels::default(),
            initial: Initial::default(),
            microscopic: Microscopic::default(),
            macroscopic: Macroscopic::default(),
            observables: default_observables(),
            output: Output::default(),
            experiment: Experiment::default(),
            scan: Scan::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Validation(format!("config: {}", e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            beta1: self.model.beta1,
            beta2: self.model.beta2,
            lambda: self.model.lambda,
            kernel1: self.kernels.line1,
            kernel2: self.kernels.line2,
        }
    }

    /// Checks every section against the preconditions of the operations.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model_spec().validate().map_err(CliError::from_core)?;
        for (name, p) in [
            ("initial.psi1", &self.initial.psi1),
            ("initial.psi2", &self.initial.psi2),
        ] {
            if !p.is_admissible() {
                return Err(CliError::Validation(format!(
                    "{name} must satisfy |offset| + |amplitude| ≤ 1"
                )));
            }
        }
        let mic = &self.microscopic;
        if mic.n_sites == 0 {
            return Err(invalid("microscopic.n_sites", "must be ≥ 1"));
        }
        positive_or_zero("microscopic.horizon", mic.horizon)?;
        positive("microscopic.sample_dt", mic.sample_dt)?;
        if mic.ensemble_size == 0 {
            return Err(invalid("microscopic.ensemble_size", "must be ≥ 1"));
        }
        let mac = &self.macroscopic;
        if mac.grid_size == 0 {
            return Err(invalid("macroscopic.grid_size", "must be ≥ 1"));
        }
        positive("macroscopic.dt", mac.dt)?;
        if mac.dt > kt_core::pde::MAX_DT {
            return Err(invalid("macroscopic.dt", "must be ≤ 0.1"));
        }
        positive_or_zero("macroscopic.horizon", mac.horizon)?;
        positive("macroscopic.sample_dt", mac.sample_dt)?;
        for obs in &self.observables {
            obs.validate(mic.n_sites).map_err(CliError::from_core)?;
        }
        if self.output.formats.is_empty() {
            return Err(invalid(
                "output.formats",
                "must list at least one of csv, json",
            ));
        }
        let exp = &self.experiment;
        positive_or_zero("experiment.horizon", exp.horizon)?;
        if exp.k_max == 0 {
            return Err(invalid("experiment.k_max", "must be ≥ 1"));
        }
        let [lo, hi] = exp.variance_slope_range;
        if !(lo <= hi) {
            return Err(invalid(
                "experiment.variance_slope_range",
                "must be [low, high] with low ≤ high",
            ));
        }
        let scan = &self.scan;
        for (name, [lo, hi]) in [
            ("scan.beta1", scan.beta1),
            ("scan.beta2", scan.beta2),
            ("scan.lambda", scan.lambda),
            ("scan.scale", scan.scale),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(invalid(name, "must be [low, high] with low ≤ high"));
            }
        }
        if scan.points == 0 {
            return Err(invalid("scan.points", "must be ≥ 1"));
        }
        if scan.k_max == 0 {
            return Err(invalid("scan.k_max", "must be ≥ 1"));
        }
        Ok(())
    }
}

fn invalid(key: &str, reason: &str) -> CliError {
    CliError::Validation(format!("{key} {reason}"))
}

fn positive(key: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, "must be > 0"))
    }
}

fn positive_or_zero(key: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(key, "must be ≥ 0"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nbeta1 = 1.0\nbeta2 = 1.0\nlambda = 0.5\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.microscopic.sample_dt, 0.05);
        assert_eq!(cfg.macroscopic.grid_size, 256);
        assert_eq!(cfg.macroscopic.dt, 0.01);
        assert_eq!(
            cfg.macroscopic.v_equation_variant,
            VEquation::GeneratorConsistent
        );
        assert_eq!(cfg.kernels, Kernels::default());
    }

    #[test]
    fn negative_lambda_is_named() {
        let cfg = RunConfig::parse("[model]\nbeta1 = 1.0\nbeta2 = 1.0\nlambda = -0.1\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.to_string(), "lambda must be ≥ 0");
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let err =
            RunConfig::parse("[model]\nbetta1 = 1.0\nbeta2 = 1.0\nlambda = 0.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("betta1"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
[model]
beta1 = 1.0
beta2 = 1.2
lambda = 0.5

[kernels]
line1 = { shape = "wrapped-gaussian", scale = 0.1 }
line2 = { shape = "top-hat", half_width = 0.2 }

[initial]
psi1 = { amplitude = 0.4, mode = 1 }
psi2 = { offset = -0.1 }

[microscopic]
n_sites = 128
horizon = 0.5
seed = 7

[macroscopic]
grid_size = 64
v_equation_variant = "verbatim-hydro3"
convolution = "spectral"

[[observables]]
kind = "inner-product-line1"
test_function = "cos:1"

[[observables]]
kind = "fourier-mode"
line = 2
k = 3

[output]
directory = "out"
formats = ["json"]
"#;
        let cfg = RunConfig::parse(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.kernels.line2, KernelSpec::TopHat { half_width: 0.2 });
        assert_eq!(cfg.initial.psi1, Profile::cosine(0.4, 1));
        assert_eq!(cfg.microscopic.seed, Some(7));
        assert_eq!(cfg.observables.len(), 2);
        assert_eq!(cfg.output.formats, vec![Format::Json]);
        assert_eq!(cfg.macroscopic.convolution, ConvolutionMethod::Spectral);
    }

    #[test]
    fn inadmissible_profile_rejected() {
        let text = format!(
            "{MINIMAL}[initial]\npsi1 = {{ offset = 0.8, amplitude = 0.4 }}\npsi2 = {{}}\n"
        );
        let err = RunConfig::parse(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("initial.psi1"));
    }
}
