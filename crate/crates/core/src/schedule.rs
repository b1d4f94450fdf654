//! Sampling schedules shared by the stochastic and deterministic integrators.

use crate::error::{Error, Result};

/// Horizon and the sample times at which observables are recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    horizon: f64,
    sample_times: Vec<f64>,
}

impl Schedule {
    pub fn new(horizon: f64, sample_times: Vec<f64>) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::Config(format!("horizon must be ≥ 0, got {horizon}")));
        }
        if sample_times.is_empty() {
            return Err(Error::Config("at least one sample time is required".into()));
        }
        if sample_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "sample times must be strictly increasing".into(),
            ));
        }
        if sample_times[0] < 0.0 || *sample_times.last().unwrap() > horizon {
            return Err(Error::Config(
                "sample times must lie in [0, horizon]".into(),
            ));
        }
        Ok(Schedule {
            horizon,
            sample_times,
        })
    }

    /// `0, dt, 2dt, …` closed by `T` itself.
    pub fn uniform(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("sample step must be > 0, got {dt}")));
        }
        let mut times = vec![0.0];
        let mut j = 1u64;
        loop {
            let t = j as f64 * dt;
            if t >= horizon * (1.0 - 1e-12) {
                break;
            }
            times.push(t);
            j += 1;
        }
        if horizon > 0.0 {
            times.push(horizon);
        }
        Schedule::new(horizon, times)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }
}
