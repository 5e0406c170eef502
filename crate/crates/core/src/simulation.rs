//! Synthetic data generation, validation metrics and the benchmark systems.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{design_cheby1, BandSpec, SystemComponent, SystemSpec};
use crate::error::{Error, Result};
use crate::estimator::{simulate_fir, Dataset, ImpulseResponseEstimate, Method};
use crate::tuning::GridSpec;

/// Names accepted by [`make_benchmark_system`].
pub const BENCHMARK_SYSTEMS: [&str; 8] = ["low", "band1", "band2", "band3", "high", "res1", "res2dom", "res2eq"];

const RIPPLE_DB: f64 = 1.0;

/// The benchmark systems: Chebyshev type-I designs with 1 dB ripple.
///
/// Resonances are two-pole band-pass designs over the stated band (unit peak
/// gain); the two-resonance systems are gain-weighted sums of them.
pub fn make_benchmark_system(name: &str) -> Result<SystemSpec> {
    let cheby = |order, band: Result<BandSpec>| -> Result<SystemSpec> { design_cheby1(order, RIPPLE_DB, &band?) };
    let resonance = |lo, hi| cheby(2, BandSpec::band_pass(lo, hi));
    let mut sys = match name {
        "low" => cheby(2, BandSpec::low_pass(0.05))?,
        "band1" => cheby(4, BandSpec::band_pass(0.1, 0.15))?,
        "band2" => cheby(4, BandSpec::band_pass(0.225, 0.275))?,
        "band3" => cheby(4, BandSpec::band_pass(0.35, 0.4))?,
        "high" => cheby(2, BandSpec::high_pass(0.45))?,
        "res1" => resonance(0.145, 0.15)?,
        "res2dom" | "res2eq" => {
            let first_gain = if name == "res2dom" { 0.2 } else { 1.0 };
            SystemSpec::sum(
                name,
                vec![
                    SystemComponent {
                        gain: first_gain,
                        spec: resonance(0.145, 0.15)?,
                    },
                    SystemComponent {
                        gain: 1.0,
                        spec: resonance(0.395, 0.4)?,
                    },
                ],
            )?
        }
        other => return Err(Error::UnknownSystem(other.to_string())),
    };
    sys.name = name.to_string();
    Ok(sys)
}

/// A benchmark name or an inline system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Name(String),
    Spec(SystemSpec),
}

impl SystemRef {
    pub fn resolve(&self) -> Result<SystemSpec> {
        match self {
            SystemRef::Name(n) => make_benchmark_system(n),
            SystemRef::Spec(s) => {
                s.validate()?;
                Ok(s.clone())
            }
        }
    }

    pub fn label(&self) -> &str {
        match self {
            SystemRef::Name(n) => n,
            SystemRef::Spec(s) => &s.name,
        }
    }
}

fn default_folds() -> usize {
    2
}

fn default_true() -> bool {
    true
}

fn default_input_sigma() -> f64 {
    1.0
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemRef,
    /// Estimation record length.
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub noise_sigma: f64,
    /// FIR model order.
    pub n: usize,
    #[serde(rename = "N_val")]
    pub n_val: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Cross-validation folds.
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Refine the filter grid winner with a local simplex search.
    #[serde(default = "default_true")]
    pub refine: bool,
    /// Stop-band edges for the `tailored` method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tailored_edges: Option<Vec<f64>>,
    /// Standard deviation of the estimation and validation inputs.
    #[serde(default = "default_input_sigma")]
    pub input_sigma: f64,
}

impl ExperimentConfig {
    /// Full-scale protocol settings: N = 250, σ = 0.1, n = 100, N_val = 10⁴, 100 runs.
    pub fn standard(system: &str) -> Self {
        Self {
            system: SystemRef::Name(system.to_string()),
            n_samples: 250,
            noise_sigma: 0.1,
            n: 100,
            n_val: 10_000,
            runs: 100,
            base_seed: 1,
            methods: vec![Method::Ls, Method::Tc, Method::Dc, Method::Filter],
            grid: GridSpec::default(),
            folds: 2,
            refine: true,
            tailored_edges: None,
            input_sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::param("model order n must be at least 1"));
        }
        if self.n_samples < self.n {
            return Err(Error::param(format!(
                "N = {} must be at least the model order n = {}",
                self.n_samples, self.n
            )));
        }
        if self.n_val < 1 {
            return Err(Error::param("N_val must be at least 1"));
        }
        if self.runs < 1 {
            return Err(Error::param("runs must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::param("noise_sigma must be non-negative"));
        }
        if !(self.input_sigma > 0.0) || !self.input_sigma.is_finite() {
            return Err(Error::param("input_sigma must be positive"));
        }
        if self.folds < 2 || self.folds > self.n_samples {
            return Err(Error::param(format!("folds = {} must lie in [2, N]", self.folds)));
        }
        if self.methods.contains(&Method::Regularised) {
            return Err(Error::param("method `regularised` is not a benchmark method"));
        }
        if self.methods.contains(&Method::Tailored) && self.tailored_edges.is_none() {
            return Err(Error::param("method `tailored` needs tailored_edges"));
        }
        if let Some(e) = &self.tailored_edges {
            BandSpec::multi_band_stop(e.clone())?;
        }
        self.grid.validate()?;
        self.system.resolve()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Stream seed for `(base_seed, run_index, label)`: FNV-1a of the label
/// mixed with the base seed and run index through SplitMix64 rounds, so every
/// stream is fixed by its coordinates alone.
pub fn derive_seed(base_seed: u64, run_index: u64, label: &str) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix(splitmix(splitmix(base_seed) ^ run_index) ^ h)
}

/// I.i.d. `N(0, σ²)` samples from a ChaCha8 stream seeded with `seed`.
pub fn generate_white_gaussian(length: usize, seed: u64, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; length];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..length)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

/// Estimation record for one run of `cfg` on the already resolved `system`.
pub fn make_dataset_for(cfg: &ExperimentConfig, system: &SystemSpec, run_index: usize) -> Dataset {
    let run = run_index as u64;
    let input_seed = derive_seed(cfg.base_seed, run, "input");
    let u = generate_white_gaussian(cfg.n_samples, input_seed, cfg.input_sigma);
    let noise = generate_white_gaussian(cfg.n_samples, derive_seed(cfg.base_seed, run, "noise"), cfg.noise_sigma);
    let y = system
        .filter_signal(&u)
        .into_iter()
        .zip(noise)
        .map(|(a, b)| a + b)
        .collect();
    Dataset {
        u,
        y,
        seed: Some(input_seed),
        noise_sigma: cfg.noise_sigma,
    }
}

pub fn make_dataset(cfg: &ExperimentConfig, run_index: usize) -> Result<Dataset> {
    let system = cfg.system.resolve()?;
    Ok(make_dataset_for(cfg, &system, run_index))
}

/// Seed of the validation input for one run.
pub fn validation_seed(cfg: &ExperimentConfig, run_index: usize) -> u64 {
    derive_seed(cfg.base_seed, run_index as u64, "validation")
}

/// Noiseless validation MSE on fresh unit-variance white input of length
/// `n_val`, both outputs from zero initial conditions.
pub fn validation_mse(est: &ImpulseResponseEstimate, system: &SystemSpec, n_val: usize, seed: u64) -> f64 {
    validation_mse_with_sigma(est, system, n_val, seed, 1.0)
}

pub fn validation_mse_with_sigma(
    est: &ImpulseResponseEstimate,
    system: &SystemSpec,
    n_val: usize,
    seed: u64,
    sigma_u: f64,
) -> f64 {
    let u = generate_white_gaussian(n_val, seed, sigma_u);
    let y = system.filter_signal(&u);
    let yhat = simulate_fir(&est.theta, &u);
    y.iter().zip(&yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n_val as f64
}

/// `σ_u² Σ_k (g_k − ĝ_k)²`, including the unmodelled tail `Σ_{k≥n} g_k²`.
pub fn coefficient_mse(est: &ImpulseResponseEstimate, g_true: &[f64], sigma_u: f64) -> f64 {
    let len = g_true.len().max(est.theta.len());
    let sum: f64 = (0..len)
        .map(|k| {
            let g = g_true.get(k).copied().unwrap_or(0.0);
            let h = est.theta.get(k).copied().unwrap_or(0.0);
            (g - h).powi(2)
        })
        .sum();
    sigma_u * sigma_u * sum
}

/// Length at which an impulse response is treated as complete for
/// coefficient-domain metrics.
pub const TRUE_RESPONSE_LENGTH: usize = 10_000;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::Hyperparameters;
    use crate::spectrum::uniform_grid;

    fn estimate(theta: Vec<f64>) -> ImpulseResponseEstimate {
        ImpulseResponseEstimate::new(theta, Method::Ls, Hyperparameters::None)
    }

    #[test]
    fn zero_sigma_gives_zeros() {
        assert_eq!(generate_white_gaussian(5, 3, 0.0), vec![0.0; 5]);
    }

    #[test]
    fn seeded_streams_are_reproducible_and_distinct() {
        assert_eq!(generate_white_gaussian(64, 9, 1.0), generate_white_gaussian(64, 9, 1.0));
        assert_ne!(generate_white_gaussian(64, 9, 1.0), generate_white_gaussian(64, 10, 1.0));
        let seeds = [
            derive_seed(1, 0, "input"),
            derive_seed(1, 0, "noise"),
            derive_seed(1, 1, "input"),
            derive_seed(2, 0, "input"),
        ];
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }

    #[test]
    fn sample_moments() {
        let x = generate_white_gaussian(100_000, 42, 1.0);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        assert!(mean.abs() <= 0.02, "{mean}");
        assert!((0.99..=1.01).contains(&var.sqrt()), "{}", var.sqrt());
    }

    #[test]
    fn benchmark_systems() {
        let low = make_benchmark_system("low").unwrap();
        assert_eq!(low.a.len(), 3);
        assert!((low.a[1] + 1.6185196386155332).abs() < 1e-12);
        let dom = make_benchmark_system("res2dom").unwrap();
        assert_eq!(dom.components.len(), 2);
        assert_eq!((dom.components[0].gain, dom.components[1].gain), (0.2, 1.0));
        let eq = make_benchmark_system("res2eq").unwrap();
        assert_eq!((eq.components[0].gain, eq.components[1].gain), (1.0, 1.0));
        for name in BENCHMARK_SYSTEMS {
            let s = make_benchmark_system(name).unwrap();
            assert!(s.is_stable(), "{name}");
            assert_eq!(s.name, name);
        }
        assert!(matches!(make_benchmark_system("band4"), Err(Error::UnknownSystem(_))));
    }

    #[test]
    fn chebyshev_benchmarks_fit_in_one_hundred_taps() {
        for name in ["low", "band1", "band2", "band3", "high"] {
            let g = make_benchmark_system(name).unwrap().impulse_response(10_000);
            let total: f64 = g.iter().map(|v| v * v).sum();
            let tail: f64 = g[100..].iter().map(|v| v * v).sum();
            assert!(tail < 1e-4 * total, "{name}: {}", tail / total);
        }
    }

    #[test]
    fn benchmark_response_checks() {
        let low = make_benchmark_system("low").unwrap();
        assert!(low.frequency_response(&[0.25])[0] < -25.0);
        let band2 = make_benchmark_system("band2").unwrap();
        let g = band2.frequency_response(&[0.25])[0];
        assert!((-1.0..=0.0).contains(&g), "{g}");
        // Resonances peak at unit gain.
        let res = make_benchmark_system("res1").unwrap();
        let peak = res
            .frequency_response(&uniform_grid(20_001))
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(peak.abs() < 1e-3, "{peak}");
    }

    #[test]
    fn noiseless_dataset_is_system_output() {
        let mut cfg = ExperimentConfig::standard("band2");
        cfg.noise_sigma = 0.0;
        let d = make_dataset(&cfg, 3).unwrap();
        let sys = make_benchmark_system("band2").unwrap();
        assert_eq!(d.y, sys.filter_signal(&d.u));
        assert_eq!(d.len(), 250);
        assert_eq!(make_dataset(&cfg, 3).unwrap(), d);
    }

    #[test]
    fn band_pass_snr_band() {
        let cfg = ExperimentConfig::standard("band2");
        let sys = make_benchmark_system("band2").unwrap();
        for run in 0..20 {
            let d = make_dataset_for(&cfg, &sys, run);
            let clean = sys.filter_signal(&d.u);
            let mean = clean.iter().sum::<f64>() / clean.len() as f64;
            let var = clean.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / clean.len() as f64;
            let snr = 10.0 * (var / 0.01).log10();
            assert!((8.0..=14.0).contains(&snr), "run {run}: {snr}");
        }
    }

    #[test]
    fn runs_have_independent_inputs() {
        let cfg = ExperimentConfig::standard("band2");
        let sys = make_benchmark_system("band2").unwrap();
        let inputs: Vec<Vec<f64>> = (0..10).map(|r| make_dataset_for(&cfg, &sys, r).u).collect();
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..inputs.len() {
            for j in i + 1..inputs.len() {
                let c: f64 = inputs[i].iter().zip(&inputs[j]).map(|(a, b)| a * b).sum::<f64>() / 250.0;
                total += c.abs();
                pairs += 1;
            }
        }
        assert!(total / (pairs as f64) < 0.08);
        assert!((total / pairs as f64) > 0.0);
    }

    #[test]
    fn validation_metrics() {
        let fir = SystemSpec::fir("fir", vec![0.5, -0.25, 0.125]).unwrap();
        let own = estimate(vec![0.5, -0.25, 0.125, 0.0]);
        assert!(validation_mse(&own, &fir, 1000, 1) <= 1e-12);
        assert_eq!(coefficient_mse(&own, &[0.5, -0.25, 0.125], 1.0), 0.0);
        assert_eq!(coefficient_mse(&estimate(vec![0.0]), &[1.0], 1.0), 1.0);

        let sys = make_benchmark_system("band2").unwrap();
        let g = sys.impulse_response(TRUE_RESPONSE_LENGTH);
        let zero = estimate(vec![0.0; 100]);
        let energy: f64 = g.iter().map(|v| v * v).sum();
        let v = validation_mse(&zero, &sys, 10_000, 5);
        assert!((v / energy - 1.0).abs() < 0.05, "{v} vs {energy}");

        let truncated = estimate(g[..40].to_vec());
        let tail: f64 = g[40..].iter().map(|v| v * v).sum();
        let v = validation_mse(&truncated, &sys, 100_000, 6);
        assert!((v / tail - 1.0).abs() < 0.05, "{v} vs {tail}");
        assert!((coefficient_mse(&truncated, &g, 1.0) / tail - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_json() {
        let text = r#"{
            "system": "band2", "N": 250, "noise_sigma": 0.1, "n": 100,
            "N_val": 10000, "runs": 100, "base_seed": 7, "methods": ["ls", "tc", "filter"]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!((cfg.n_samples, cfg.n, cfg.n_val, cfg.runs), (250, 100, 10_000, 100));
        assert_eq!(cfg.folds, 2);
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(ExperimentConfig::from_json(&text.replace("\"n\": 100", "\"n\": 300")).is_err());
        assert!(ExperimentConfig::from_json(&text.replace("band2", "nope")).is_err());
        assert!(ExperimentConfig::from_json(&text.replace("\"runs\"", "\"rusn\"")).is_err());
        let tailored = text.replace("\"filter\"]", "\"tailored\"]");
        assert!(ExperimentConfig::from_json(&tailored).is_err());
    }

    #[test]
    fn inline_system_in_config() {
        let mut cfg = ExperimentConfig::standard("x");
        cfg.system = SystemRef::Spec(SystemSpec::new("ar", vec![1.0], vec![1.0, -0.5]).unwrap());
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back.system, cfg.system);
    }
}
