//! Functions on the unit torus: test functions for weak pairings and
//! initial density profiles.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real function on the unit torus `[0, 1)`.
pub trait TorusFn {
    fn eval(&self, r: f64) -> f64;

    /// Values at the grid points `j / n`, `j = 0..n`.
    fn sample(&self, n: usize) -> Vec<f64> {
        let inv = 1.0 / n as f64;
        (0..n).map(|j| self.eval(j as f64 * inv)).collect()
    }
}

impl<F: Fn(f64) -> f64> TorusFn for F {
    fn eval(&self, r: f64) -> f64 {
        self(r)
    }
}

/// Test functions drawn from the low-frequency trigonometric basis.
///
/// Text form: `one`, `zero`, `const:<c>`, `cos:<k>`, `sin:<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestFunction {
    Constant(f64),
    Cos(u32),
    Sin(u32),
}

impl TestFunction {
    pub const ONE: TestFunction = TestFunction::Constant(1.0);

    /// `{1, cos(2πkr), sin(2πkr) : 1 ≤ k ≤ max_k}`.
    pub fn basis(max_k: u32) -> Vec<TestFunction> {
        let mut out = vec![TestFunction::ONE];
        for k in 1..=max_k {
            out.push(TestFunction::Cos(k));
            out.push(TestFunction::Sin(k));
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestFunction::Constant(c) => c.abs(),
            TestFunction::Cos(_) => 1.0,
            TestFunction::Sin(k) => {
                if k == 0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

impl TorusFn for TestFunction {
    fn eval(&self, r: f64) -> f64 {
        match *self {
            TestFunction::Constant(c) => c,
            TestFunction::Cos(k) => (TAU * k as f64 * r).cos(),
            TestFunction::Sin(k) => (TAU * k as f64 * r).sin(),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TestFunction::Constant(c) if c == 1.0 => write!(f, "one"),
            TestFunction::Constant(c) if c == 0.0 => write!(f, "zero"),
            TestFunction::Constant(c) => write!(f, "const:{c}"),
            TestFunction::Cos(k) => write!(f, "cos:{k}"),
            TestFunction::Sin(k) => write!(f, "sin:{k}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized test function `{s}`"));
        match s.trim() {
            "one" | "1" => return Ok(TestFunction::ONE),
            "zero" | "0" => return Ok(TestFunction::Constant(0.0)),
            _ => {}
        }
        let (head, tail) = s.trim().split_once(':').ok_or_else(bad)?;
        match head {
            "const" => tail
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(TestFunction::Constant)
                .ok_or_else(bad),
            "cos" => tail.parse().map(TestFunction::Cos).map_err(|_| bad()),
            "sin" => tail.parse().map(TestFunction::Sin).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for TestFunction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestFunction> for String {
    fn from(g: TestFunction) -> String {
        g.to_string()
    }
}

/// Initial density profile `ψ(r) = offset + amplitude·cos(2π·mode·r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_mode")]
    pub mode: u32,
}

fn default_mode() -> u32 {
    1
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile {
            offset: value,
            amplitude: 0.0,
            mode: 1,
        }
    }

    pub fn cosine(amplitude: f64, mode: u32) -> Self {
        Profile {
            offset: 0.0,
            amplitude,
            mode,
        }
    }

    /// True when `|ψ| ≤ 1` everywhere on the torus.
    pub fn is_admissible(&self) -> bool {
        self.offset.is_finite()
            && self.amplitude.is_finite()
            && self.offset.abs() + self.amplitude.abs() <= 1.0 + 1e-12
    }
}

impl TorusFn for Profile {
    fn eval(&self, r: f64) -> f64 {
        if self.amplitude == 0.0 {
            self.offset
        } else {
            self.offset + self.amplitude * (TAU * self.mode as f64 * r).cos()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_round_trips() {
        for g in TestFunction::basis(4)
            .into_iter()
            .chain([TestFunction::Constant(0.0), TestFunction::Constant(-2.5)])
        {
            let back: TestFunction = g.to_string().parse().unwrap();
            assert_eq!(back, g);
        }
        assert!("cosine:1".parse::<TestFunction>().is_err());
        assert!("const:nan".parse::<TestFunction>().is_err());
    }

    #[test]
    fn basis_has_nine_members_up_to_four() {
        assert_eq!(TestFunction::basis(4).len(), 9);
    }

    #[test]
    fn profile_admissibility() {
        assert!(Profile::cosine(0.4, 1).is_admissible());
        assert!(Profile::constant(-1.0).is_admissible());
        let p = Profile {
            offset: 0.7,
            amplitude: 0.5,
            mode: 2,
        };
        assert!(!p.is_admissible());
    }
}
