//! Microscopic state: two spin lines on the discrete torus with cached
//! Kac convolution fields.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::TorusFn;
use crate::kernel::{DiscreteKernel, KernelSpec};

/// Macroscopic parameters plus the lattice size `N` (`γ = 1/N`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub n_sites: usize,
}

impl ModelParams {
    pub fn new(beta1: f64, beta2: f64, lambda: f64, n_sites: usize) -> Result<Self> {
        let p = ModelParams {
            beta1,
            beta2,
            lambda,
            n_sites,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        validate_couplings(self.beta1, self.beta2, self.lambda)?;
        if self.n_sites == 0 {
            return Err(invalid("n_sites", "must be at least 1"));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.n_sites as f64
    }

    pub fn beta(&self, line: Line) -> f64 {
        match line {
            Line::One => self.beta1,
            Line::Two => self.beta2,
        }
    }
}

pub(crate) fn validate_couplings(beta1: f64, beta2: f64, lambda: f64) -> Result<()> {
    if !(beta1.is_finite() && beta1 > 0.0) {
        return Err(invalid("beta1", "must be > 0"));
    }
    if !(beta2.is_finite() && beta2 > 0.0) {
        return Err(invalid("beta2", "must be > 0"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid("lambda", "must be ≥ 0"));
    }
    Ok(())
}

/// One of the two spin lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Line {
    One,
    Two,
}

impl Line {
    pub fn index(self) -> usize {
        match self {
            Line::One => 0,
            Line::Two => 1,
        }
    }

    pub fn other(self) -> Line {
        match self {
            Line::One => Line::Two,
            Line::Two => Line::One,
        }
    }
}

/// The interaction tables of both lines, on the same torus.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPair {
    pub line1: DiscreteKernel,
    pub line2: DiscreteKernel,
}

impl KernelPair {
    pub fn new(line1: DiscreteKernel, line2: DiscreteKernel) -> Result<Self> {
        if line1.n_sites() != line2.n_sites() {
            return Err(Error::Dimension {
                expected: line1.n_sites(),
                actual: line2.n_sites(),
            });
        }
        Ok(KernelPair { line1, line2 })
    }

    pub fn from_specs(spec1: &KernelSpec, spec2: &KernelSpec, n_sites: usize) -> Result<Self> {
        Ok(KernelPair {
            line1: DiscreteKernel::new(spec1, n_sites)?,
            line2: DiscreteKernel::new(spec2, n_sites)?,
        })
    }

    pub fn get(&self, line: Line) -> &DiscreteKernel {
        match line {
            Line::One => &self.line1,
            Line::Two => &self.line2,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.line1.n_sites()
    }
}

/// Spin pair configuration with cached fields `h_i = σ_i * φ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairConfig {
    s1: Vec<i8>,
    s2: Vec<i8>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl PairConfig {
    pub fn new(s1: Vec<i8>, s2: Vec<i8>, kernels: &KernelPair) -> Result<Self> {
        let n = kernels.n_sites();
        for line in [&s1, &s2] {
            if line.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: line.len(),
                });
            }
            if line.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::Domain("spins must be ±1".into()));
            }
        }
        let h1 = convolve_field(&s1[..], &kernels.line1)?;
        let h2 = convolve_field(&s2[..], &kernels.line2)?;
        Ok(PairConfig { s1, s2, h1, h2 })
    }

    pub fn n_sites(&self) -> usize {
        self.s1.len()
    }

    pub fn spins(&self, line: Line) -> &[i8] {
        match line {
            Line::One => &self.s1,
            Line::Two => &self.s2,
        }
    }

    pub fn field(&self, line: Line) -> &[f64] {
        match line {
            Line::One => &self.h1,
            Line::Two => &self.h2,
        }
    }

    /// Flips the spin at `site` on `line` and updates that line's field.
    pub fn flip(&mut self, line: Line, site: usize, kernels: &KernelPair) {
        let (spins, field) = match line {
            Line::One => (&mut self.s1, &mut self.h1),
            Line::Two => (&mut self.s2, &mut self.h2),
        };
        let old = spins[site];
        spins[site] = -old;
        update_field_after_flip(field, kernels.get(line), site, old);
    }

    /// Recomputes both cached fields from scratch.
    pub fn refresh_fields(&mut self, kernels: &KernelPair) {
        self.h1 = convolve_field(&self.s1[..], &kernels.line1).expect("consistent sizes");
        self.h2 = convolve_field(&self.s2[..], &kernels.line2).expect("consistent sizes");
    }

    /// Largest deviation of the cached fields from a full recomputation.
    pub fn field_drift(&self, kernels: &KernelPair) -> f64 {
        let f1 = convolve_field(&self.s1[..], &kernels.line1).expect("consistent sizes");
        let f2 = convolve_field(&self.s2[..], &kernels.line2).expect("consistent sizes");
        self.h1
            .iter()
            .zip(&f1)
            .chain(self.h2.iter().zip(&f2))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Spin or density values paired against test functions.
pub trait FieldValues {
    fn len(&self) -> usize;
    fn at(&self, x: usize) -> f64;
}

impl FieldValues for [i8] {
    fn len(&self) -> usize {
        <[i8]>::len(self)
    }
    #[inline]
    fn at(&self, x: usize) -> f64 {
        self[x] as f64
    }
}

impl FieldValues for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }
    #[inline]
    fn at(&self, x: usize) -> f64 {
        self[x]
    }
}

/// Periodic discrete convolution `h[x] = γ Σ_y values[y] w[(x − y) mod N]`.
pub fn convolve_field<V: FieldValues + ?Sized>(
    values: &V,
    kernel: &DiscreteKernel,
) -> Result<Vec<f64>> {
    let n = kernel.n_sites();
    if values.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: values.len(),
        });
    }
    let gamma = kernel.gamma();
    let w = kernel.weights();
    let mut h = vec![0.0; n];
    for y in 0..n {
        let s = values.at(y);
        if s == 0.0 {
            continue;
        }
        for &d in kernel.support() {
            let x = if y + d >= n { y + d - n } else { y + d };
            h[x] += s * w[d];
        }
    }
    for v in &mut h {
        *v *= gamma;
    }
    Ok(h)
}

/// Applies the effect of flipping `site` (previously `old_spin`) to a
/// cached convolution field.
pub fn update_field_after_flip(h: &mut [f64], kernel: &DiscreteKernel, site: usize, old_spin: i8) {
    let n = h.len();
    let amp = -2.0 * old_spin as f64 * kernel.gamma();
    let w = kernel.weights();
    for &d in kernel.support() {
        let x = if site + d >= n {
            site + d - n
        } else {
            site + d
        };
        h[x] += amp * w[d];
    }
}

/// Ferromagnetic Kac energy `−½ Σ_x σ(x) (σ * φ)(x)`.
pub fn hamiltonian(line: &[i8], kernel: &DiscreteKernel) -> Result<f64> {
    let h = convolve_field(line, kernel)?;
    Ok(-0.5
        * line
            .iter()
            .zip(&h)
            .map(|(&s, &f)| s as f64 * f)
            .sum::<f64>())
}

/// Largest double below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// `1 / (1 + e^z)` without overflow for large `|z|`, kept strictly below 1
/// (for `z < −37` the exact value rounds up to 1.0 otherwise).
#[inline]
pub(crate) fn logistic_complement(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        (1.0 / (1.0 + z.exp())).min(BELOW_ONE)
    }
}

/// Local field seen by the spin at `site`: `h1 + λσ2` on line 1,
/// `h2 − λσ1` on line 2.
#[inline]
pub fn local_field(line: Line, site: usize, config: &PairConfig, lambda: f64) -> f64 {
    match line {
        Line::One => config.h1[site] + lambda * config.s2[site] as f64,
        Line::Two => config.h2[site] - lambda * config.s1[site] as f64,
    }
}

/// Glauber flip rate `e^{−βσa} / (2cosh βa) = 1 / (1 + e^{2βσa})`.
#[inline]
pub fn flip_rate(line: Line, site: usize, config: &PairConfig, params: &ModelParams) -> f64 {
    let a = local_field(line, site, config, params.lambda);
    let s = config.spins(line)[site] as f64;
    logistic_complement(2.0 * params.beta(line) * s * a)
}

/// Independent product initial law with `E σ_i(x) = ψ_i(γx)`.
pub fn sample_initial<R: Rng + ?Sized>(
    psi1: &impl TorusFn,
    psi2: &impl TorusFn,
    kernels: &KernelPair,
    rng: &mut R,
) -> Result<PairConfig> {
    let n = kernels.n_sites();
    let p1 = psi1.sample(n);
    let p2 = psi2.sample(n);
    for (name, p) in [("psi1", &p1), ("psi2", &p2)] {
        if let Some(bad) = p.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Domain(format!(
                "{name} takes value {bad} outside [-1, 1]"
            )));
        }
    }
    let mut draw = |p: &[f64]| -> Vec<i8> {
        p.iter()
            .map(|&m| {
                let up = 0.5 * (1.0 + m);
                // degenerate laws consume no randomness
                if up >= 1.0 {
                    1
                } else if up <= 0.0 {
                    -1
                } else if rng.random::<f64>() < up {
                    1
                } else {
                    -1
                }
            })
            .collect()
    };
    let s1 = draw(&p1);
    let s2 = draw(&p2);
    PairConfig::new(s1, s2, kernels)
}

/// Riemann pairing `⟨field, G⟩ = γ Σ_x field[x] G(x/N)`.
pub fn inner_product<V: FieldValues + ?Sized>(field: &V, g: &impl TorusFn) -> f64 {
    let n = field.len();
    let inv = 1.0 / n as f64;
    let mut acc = 0.0;
    for x in 0..n {
        acc += field.at(x) * g.eval(x as f64 * inv);
    }
    acc * inv
}

/// Pairing against precomputed test-function values on the lattice.
#[inline]
pub(crate) fn inner_product_grid<V: FieldValues + ?Sized>(field: &V, g: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, gx) in g.iter().enumerate() {
        acc += field.at(x) * gx;
    }
    acc / g.len() as f64
}

/// Sitewise product `η(x) = σ1(x) σ2(x)`.
pub fn correlation_field(config: &PairConfig) -> Vec<i8> {
    config
        .s1
        .iter()
        .zip(&config.s2)
        .map(|(a, b)| a * b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::TAU;

    fn uniform_pair(n: usize) -> KernelPair {
        KernelPair::from_specs(&KernelSpec::Uniform, &KernelSpec::Uniform, n).unwrap()
    }

    fn random_spins(n: usize, rng: &mut impl Rng) -> Vec<i8> {
        (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect()
    }

    fn brute_convolution(values: &[i8], kernel: &DiscreteKernel) -> Vec<f64> {
        let n = values.len();
        (0..n)
            .map(|x| {
                let mut acc = 0.0;
                for y in 0..n {
                    let d = (x + n - y) % n;
                    acc += values[y] as f64 * kernel.weights()[d];
                }
                acc / n as f64
            })
            .collect()
    }

    #[test]
    fn all_up_line_gives_unit_field() {
        for spec in [
            KernelSpec::Uniform,
            KernelSpec::WrappedGaussian { scale: 0.05 },
            KernelSpec::RaisedCosine { half_width: 0.3 },
        ] {
            let k = DiscreteKernel::new(&spec, 50).unwrap();
            let h = convolve_field(&vec![1i8; 50][..], &k).unwrap();
            assert!(h.iter().all(|v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn alternating_line_cancels_under_uniform_kernel() {
        let k = DiscreteKernel::new(&KernelSpec::Uniform, 10).unwrap();
        let line: Vec<i8> = (0..10).map(|x| if x % 2 == 0 { 1 } else { -1 }).collect();
        let h = convolve_field(&line[..], &k).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn top_hat_convolution_matches_double_loop() {
        let mut rng = stream(11, 0);
        let k = DiscreteKernel::new(&KernelSpec::TopHat { half_width: 0.34 }, 6).unwrap();
        let line = random_spins(6, &mut rng);
        let h = convolve_field(&line[..], &k).unwrap();
        for (a, b) in h.iter().zip(brute_convolution(&line, &k)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn convolution_rejects_length_mismatch() {
        let k = DiscreteKernel::new(&KernelSpec::Uniform, 4).unwrap();
        assert!(matches!(
            convolve_field(&[1i8, 1, 1][..], &k),
            Err(Error::Dimension {
                expected: 4,
                actual: 3
            })
        ));
    }

    #[test]
    fn flip_update_on_four_sites() {
        let k = DiscreteKernel::new(&KernelSpec::Uniform, 4).unwrap();
        let mut h = vec![1.0; 4];
        update_field_after_flip(&mut h, &k, 0, 1);
        assert!(h.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        update_field_after_flip(&mut h, &k, 0, -1);
        assert!(h.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn flip_update_matches_recomputation() {
        let mut rng = stream(5, 1);
        let kernels = KernelPair::from_specs(
            &KernelSpec::WrappedGaussian { scale: 0.1 },
            &KernelSpec::TopHat { half_width: 0.2 },
            32,
        )
        .unwrap();
        let mut cfg = PairConfig::new(
            random_spins(32, &mut rng),
            random_spins(32, &mut rng),
            &kernels,
        )
        .unwrap();
        let site = rng.random_range(0..32);
        cfg.flip(Line::One, site, &kernels);
        cfg.flip(Line::Two, (site + 7) % 32, &kernels);
        assert!(cfg.field_drift(&kernels) < 1e-12);
    }

    #[test]
    fn long_flip_sequences_stay_exact() {
        let mut rng = stream(99, 0);
        let kernels = KernelPair::from_specs(
            &KernelSpec::WrappedGaussian { scale: 0.07 },
            &KernelSpec::RaisedCosine { half_width: 0.15 },
            128,
        )
        .unwrap();
        let mut cfg = PairConfig::new(
            random_spins(128, &mut rng),
            random_spins(128, &mut rng),
            &kernels,
        )
        .unwrap();
        for _ in 0..10_000 {
            let line = if rng.random::<bool>() {
                Line::One
            } else {
                Line::Two
            };
            cfg.flip(line, rng.random_range(0..128), &kernels);
        }
        assert!(cfg.field_drift(&kernels) < 1e-9);
        for line in [Line::One, Line::Two] {
            assert!(cfg.field(line).iter().all(|h| h.abs() <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let k = DiscreteKernel::new(&KernelSpec::WrappedGaussian { scale: 0.2 }, 10).unwrap();
        assert!((hamiltonian(&[1i8; 10], &k).unwrap() + 5.0).abs() < 1e-13);

        let mut rng = stream(3, 3);
        let k = DiscreteKernel::new(&KernelSpec::RaisedCosine { half_width: 0.45 }, 5).unwrap();
        let line = random_spins(5, &mut rng);
        let flipped: Vec<i8> = line.iter().map(|s| -s).collect();
        let mut direct = 0.0;
        for x in 0..5 {
            for y in 0..5 {
                direct += line[x] as f64 * line[y] as f64 * k.weights()[(x + 5 - y) % 5];
            }
        }
        direct *= -0.5 / 5.0;
        let e = hamiltonian(&line, &k).unwrap();
        assert!((e - direct).abs() < 1e-13);
        assert!((hamiltonian(&flipped, &k).unwrap() - e).abs() < 1e-13);
        assert!(hamiltonian(&line[..4], &k).is_err());
    }

    fn single_site(s1: i8, s2: i8) -> PairConfig {
        PairConfig::new(vec![s1], vec![s2], &uniform_pair(1)).unwrap()
    }

    fn config_with_fields(s1: i8, s2: i8, h1: f64, h2: f64) -> PairConfig {
        let mut c = single_site(s1, s2);
        c.h1[0] = h1;
        c.h2[0] = h2;
        c
    }

    #[test]
    fn rate_examples() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 1).unwrap();
        for (a, b) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let c = config_with_fields(a, b, 0.0, 0.0);
            assert_eq!(flip_rate(Line::One, 0, &c, &p), 0.5);
        }
        let p = ModelParams::new(1.0, 1.0, 0.5, 1).unwrap();
        let c = config_with_fields(1, 1, 0.0, 0.0);
        // 1/(1+e) and 1/(1+1/e), evaluated in extended precision
        assert!((flip_rate(Line::One, 0, &c, &p) - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((flip_rate(Line::Two, 0, &c, &p) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn rate_matches_exponential_form() {
        let mut rng = stream(8, 0);
        for _ in 0..200 {
            let beta1 = rng.random_range(0.01..5.0);
            let beta2 = rng.random_range(0.01..5.0);
            let lambda = rng.random_range(0.0..2.0);
            let p = ModelParams::new(beta1, beta2, lambda, 1).unwrap();
            let s1 = if rng.random::<bool>() { 1 } else { -1 };
            let s2 = if rng.random::<bool>() { 1 } else { -1 };
            let c = config_with_fields(
                s1,
                s2,
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let (s1f, s2f) = (s1 as f64, s2 as f64);
            let a1 = c.h1[0] + lambda * s2f;
            let r1 = (-beta1 * s1f * c.h1[0]).exp() * (-beta1 * lambda * s1f * s2f).exp()
                / (2.0 * (beta1 * a1).cosh());
            let a2 = c.h2[0] - lambda * s1f;
            let r2 = (-beta2 * s2f * c.h2[0]).exp() * (beta2 * lambda * s2f * s1f).exp()
                / (2.0 * (beta2 * a2).cosh());
            assert!((flip_rate(Line::One, 0, &c, &p) - r1).abs() < 1e-14);
            assert!((flip_rate(Line::Two, 0, &c, &p) - r2).abs() < 1e-14);
        }
    }

    fn energy_with_flip(line: &[i8], k: &DiscreteKernel, site: usize) -> f64 {
        let mut l = line.to_vec();
        l[site] = -l[site];
        hamiltonian(&l, k).unwrap()
    }

    #[test]
    fn detailed_balance_without_self_interaction() {
        // reversibility is exact when the kernel has no self-weight
        let mut rng = stream(21, 0);
        for n in 2..=8 {
            let mut w: Vec<f64> = vec![0.0; n];
            for d in 1..=n / 2 {
                let v = rng.random_range(0.1..2.0);
                w[d] = v;
                w[n - d] = v;
            }
            let k = DiscreteKernel::from_weights(w).unwrap();
            let kernels = KernelPair::new(k.clone(), k.clone()).unwrap();
            let beta = rng.random_range(0.1..3.0);
            let params = ModelParams::new(beta, 1.0, 0.0, n).unwrap();
            for _ in 0..20 {
                let s1 = random_spins(n, &mut rng);
                let cfg = PairConfig::new(s1.clone(), vec![1; n], &kernels).unwrap();
                let site = rng.random_range(0..n);
                let mut flipped = cfg.clone();
                flipped.flip(Line::One, site, &kernels);
                let lhs = flip_rate(Line::One, site, &cfg, &params)
                    * (-beta * hamiltonian(&s1, &k).unwrap()).exp();
                let rhs = flip_rate(Line::One, site, &flipped, &params)
                    * (-beta * energy_with_flip(&s1, &k, site)).exp();
                assert!(
                    (lhs - rhs).abs() < 1e-10 * lhs.max(1.0),
                    "n={n}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn self_interaction_breaks_balance_by_order_gamma() {
        // with self-weight w0 the log-ratio defect is 2βγw0·(1 − …) ≤ 4βγw0
        let mut rng = stream(22, 0);
        let n = 8;
        let k = DiscreteKernel::new(&KernelSpec::WrappedGaussian { scale: 0.2 }, n).unwrap();
        let kernels = KernelPair::new(k.clone(), k.clone()).unwrap();
        let beta = 1.3;
        let params = ModelParams::new(beta, 1.0, 0.0, n).unwrap();
        let bound = 4.0 * beta * k.weights()[0] / n as f64;
        for _ in 0..50 {
            let s1 = random_spins(n, &mut rng);
            let cfg = PairConfig::new(s1.clone(), vec![1; n], &kernels).unwrap();
            let site = rng.random_range(0..n);
            let mut flipped = cfg.clone();
            flipped.flip(Line::One, site, &kernels);
            let log_lhs = flip_rate(Line::One, site, &cfg, &params).ln()
                - beta * hamiltonian(&s1, &k).unwrap();
            let log_rhs = flip_rate(Line::One, site, &flipped, &params).ln()
                - beta * energy_with_flip(&s1, &k, site);
            assert!((log_lhs - log_rhs).abs() <= bound);
        }
    }

    #[test]
    fn initial_law_examples() {
        let kernels = uniform_pair(64);
        let mut rng = stream(1, 0);
        let c = sample_initial(&|_| 1.0, &|_| -1.0, &kernels, &mut rng).unwrap();
        assert!(c.spins(Line::One).iter().all(|&s| s == 1));
        assert!(c.spins(Line::Two).iter().all(|&s| s == -1));
        assert!(sample_initial(&|_| 1.5, &|_| 0.0, &kernels, &mut rng).is_err());
    }

    #[test]
    fn unbiased_initial_law_concentrates() {
        // |mean| ≤ 4/√N is a 4-sigma event for a fair ±1 sample
        let n = 4096;
        let kernels = uniform_pair(n);
        let mut inside = 0;
        for seed in 0..100 {
            let mut rng = stream(seed, 0);
            let c = sample_initial(&|_| 0.0, &|_| 0.0, &kernels, &mut rng).unwrap();
            let m = inner_product(c.spins(Line::One), &|_| 1.0);
            if m.abs() <= 4.0 / (n as f64).sqrt() {
                inside += 1;
            }
        }
        assert!(inside >= 99);
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product(&[1i8; 12][..], &|_| 1.0), 1.0);
        let alt: Vec<i8> = (0..12).map(|x| if x % 2 == 0 { 1 } else { -1 }).collect();
        assert_eq!(inner_product(&alt[..], &|_| 1.0), 0.0);

        let mut rng = stream(4, 0);
        let line = random_spins(8, &mut rng);
        let g = |r: f64| (TAU * r).cos();
        let direct: f64 = (0..8)
            .map(|x| line[x] as f64 * g(x as f64 / 8.0))
            .sum::<f64>()
            / 8.0;
        assert!((inner_product(&line[..], &g) - direct).abs() < 1e-14);
    }

    #[test]
    fn correlation_field_examples() {
        let kernels = uniform_pair(16);
        let mut rng = stream(6, 0);
        let s = random_spins(16, &mut rng);
        let same = PairConfig::new(s.clone(), s.clone(), &kernels).unwrap();
        assert!(correlation_field(&same).iter().all(|&e| e == 1));
        let opposite =
            PairConfig::new(s.clone(), s.iter().map(|x| -x).collect(), &kernels).unwrap();
        assert!(correlation_field(&opposite).iter().all(|&e| e == -1));
        let other = random_spins(16, &mut rng);
        let c = PairConfig::new(s.clone(), other.clone(), &kernels).unwrap();
        let eta = correlation_field(&c);
        for x in 0..16 {
            assert_eq!(eta[x], s[x] * other[x]);
        }
    }

    proptest! {
        #[test]
        fn rates_stay_strictly_inside_unit_interval(
            beta1 in 1e-3f64..50.0,
            beta2 in 1e-3f64..50.0,
            lambda in 0.0f64..2.0,
            h1 in -1.0f64..1.0,
            h2 in -1.0f64..1.0,
            s1 in prop::bool::ANY,
            s2 in prop::bool::ANY,
        ) {
            let p = ModelParams::new(beta1, beta2, lambda, 1).unwrap();
            let c = config_with_fields(if s1 { 1 } else { -1 }, if s2 { 1 } else { -1 }, h1, h2);
            for line in [Line::One, Line::Two] {
                let r = flip_rate(line, 0, &c, &p);
                prop_assert!(r > 0.0 && r < 1.0);
            }
        }

        #[test]
        fn global_flip_preserves_uncoupled_rates(seed in 0u64..1000, n in 1usize..20) {
            let mut rng = stream(seed, 0);
            let kernels = KernelPair::from_specs(
                &KernelSpec::WrappedGaussian { scale: 0.15 },
                &KernelSpec::Uniform,
                n,
            ).unwrap();
            let s1 = random_spins(n, &mut rng);
            let s2 = random_spins(n, &mut rng);
            let neg = |s: &[i8]| s.iter().map(|x| -x).collect::<Vec<_>>();
            let a = PairConfig::new(s1.clone(), s2.clone(), &kernels).unwrap();
            let b = PairConfig::new(neg(&s1), neg(&s2), &kernels).unwrap();
            let p = ModelParams::new(1.7, 0.4, 0.0, n).unwrap();
            for x in 0..n {
                prop_assert!((flip_rate(Line::One, x, &a, &p) - flip_rate(Line::One, x, &b, &p)).abs() < 1e-14);
            }
        }
    }
}
