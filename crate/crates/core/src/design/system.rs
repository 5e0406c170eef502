//! Rational discrete-time systems `B(z)/A(z)` and gain-weighted sums of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{polyval_unit_circle, to_db};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemComponent {
    pub gain: f64,
    pub spec: SystemSpec,
}

/// `H(z) = (b_0 + b_1 z⁻¹ + …)/(1 + a_1 z⁻¹ + …)`. When `components` is
/// non-empty the system is their gain-weighted sum; `b`/`a` then hold the
/// combined rational function and simulation runs per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<SystemComponent>,
}

fn poly_mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn poly_add(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len().max(y.len())];
    for (i, v) in x.iter().enumerate() {
        out[i] += v;
    }
    for (i, v) in y.iter().enumerate() {
        out[i] += v;
    }
    out
}

/// Schur–Cohn step-down test: all roots of the monic polynomial `a` lie
/// strictly inside the unit circle.
pub fn is_stable(a: &[f64]) -> bool {
    if a.is_empty() || a[0] != 1.0 {
        return false;
    }
    let mut c = a.to_vec();
    while c.len() > 1 && c[c.len() - 1] == 0.0 {
        c.pop();
    }
    while c.len() > 1 {
        let m = c.len() - 1;
        let k = c[m];
        if !(k.abs() < 1.0) {
            return false;
        }
        let d = 1.0 - k * k;
        c = (0..m).map(|i| (c[i] - k * c[m - i]) / d).collect();
    }
    true
}

impl SystemSpec {
    pub fn new(name: impl Into<String>, b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        let s = Self {
            name: name.into(),
            b,
            a,
            components: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn fir(name: impl Into<String>, taps: Vec<f64>) -> Result<Self> {
        Self::new(name, taps, vec![1.0])
    }

    /// `Σ gain_i · H_i(z)`.
    pub fn sum(name: impl Into<String>, components: Vec<SystemComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("a summed system needs at least one component"));
        }
        let mut b = vec![0.0];
        let mut a = vec![1.0];
        for c in &components {
            let scaled: Vec<f64> = c.spec.b.iter().map(|v| v * c.gain).collect();
            b = poly_add(&poly_mul(&b, &c.spec.a), &poly_mul(&scaled, &a));
            a = poly_mul(&a, &c.spec.a);
        }
        let s = Self {
            name: name.into(),
            b,
            a,
            components,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.is_empty() || self.a.is_empty() {
            return Err(Error::param(format!("system `{}` has empty coefficients", self.name)));
        }
        if self.a[0] != 1.0 {
            return Err(Error::param(format!(
                "system `{}`: leading denominator coefficient must be 1, got {}",
                self.name, self.a[0]
            )));
        }
        if self.b.iter().chain(&self.a).any(|v| !v.is_finite()) {
            return Err(Error::param(format!("system `{}` has non-finite coefficients", self.name)));
        }
        for c in &self.components {
            if !c.gain.is_finite() {
                return Err(Error::param("component gain must be finite"));
            }
            c.spec.validate()?;
        }
        if !self.is_stable() {
            return Err(Error::Design(format!(
                "system `{}` has poles on or outside the unit circle",
                self.name
            )));
        }
        Ok(())
    }

    pub fn is_stable(&self) -> bool {
        if self.components.is_empty() {
            is_stable(&self.a)
        } else {
            self.components.iter().all(|c| c.spec.is_stable())
        }
    }

    /// First `length` impulse-response coefficients.
    pub fn impulse_response(&self, length: usize) -> Vec<f64> {
        let mut u = vec![0.0; length];
        if length > 0 {
            u[0] = 1.0;
        }
        self.filter_signal(&u)
    }

    /// Direct-form output from zero initial conditions.
    pub fn filter_signal(&self, u: &[f64]) -> Vec<f64> {
        if !self.components.is_empty() {
            let mut y = vec![0.0; u.len()];
            for c in &self.components {
                for (acc, v) in y.iter_mut().zip(c.spec.filter_signal(u)) {
                    *acc += c.gain * v;
                }
            }
            return y;
        }
        let mut y = vec![0.0; u.len()];
        for t in 0..u.len() {
            let mut s = 0.0;
            for (k, bk) in self.b.iter().enumerate().take(t + 1) {
                s += bk * u[t - k];
            }
            for (k, ak) in self.a.iter().enumerate().take(t + 1).skip(1) {
                s -= ak * y[t - k];
            }
            y[t] = s;
        }
        y
    }

    pub fn response_at(&self, f: f64) -> num_complex::Complex64 {
        if self.components.is_empty() {
            polyval_unit_circle(&self.b, f) / polyval_unit_circle(&self.a, f)
        } else {
            self.components
                .iter()
                .map(|c| c.spec.response_at(f) * c.gain)
                .sum()
        }
    }

    /// `20 log10 |H(e^{j2πf})|` on the grid.
    pub fn frequency_response(&self, freqs: &[f64]) -> Vec<f64> {
        freqs.iter().map(|&f| to_db(self.response_at(f).norm())).collect()
    }
}

pub fn impulse_response(sys: &SystemSpec, length: usize) -> Vec<f64> {
    sys.impulse_response(length)
}

pub fn filter_signal(sys: &SystemSpec, u: &[f64]) -> Vec<f64> {
    sys.filter_signal(u)
}

pub fn frequency_response(sys: &SystemSpec, freqs: &[f64]) -> Vec<f64> {
    sys.frequency_response(freqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::uniform_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn first_order() -> SystemSpec {
        SystemSpec::new("ar1", vec![1.0], vec![1.0, -0.5]).unwrap()
    }

    #[test]
    fn geometric_impulse_response() {
        let g = first_order().impulse_response(6);
        for (k, v) in g.iter().enumerate() {
            assert_eq!(*v, 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn fir_response_is_zero_padded_taps() {
        let s = SystemSpec::fir("fir", vec![0.3, -0.2, 0.1]).unwrap();
        assert_eq!(s.impulse_response(5), vec![0.3, -0.2, 0.1, 0.0, 0.0]);
    }

    #[test]
    fn pure_delay_shifts() {
        let s = SystemSpec::fir("delay", vec![0.0, 1.0]).unwrap();
        assert_eq!(s.filter_signal(&[1.0, 2.0, 3.0]), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn filtering_is_linear() {
        let s = SystemSpec::new("x", vec![0.2, 0.1, -0.3], vec![1.0, -0.9, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u1: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u2: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let (y1, y2, ys) = (s.filter_signal(&u1), s.filter_signal(&u2), s.filter_signal(&sum));
        for i in 0..200 {
            assert!((ys[i] - y1[i] - y2[i]).abs() <= 1e-12);
        }
        let imp = s.impulse_response(40);
        let mut delta = vec![0.0; 40];
        delta[0] = 1.0;
        assert_eq!(s.filter_signal(&delta), imp);
    }

    #[test]
    fn equal_numerator_and_denominator_is_flat() {
        let s = SystemSpec::new("flat", vec![1.0, -0.5, 0.2], vec![1.0, -0.5, 0.2]).unwrap();
        for db in s.frequency_response(&uniform_grid(33)) {
            assert!(db.abs() <= 1e-12);
        }
    }

    #[test]
    fn stability_step_down() {
        assert!(is_stable(&[1.0, -0.5]));
        assert!(!is_stable(&[1.0, -1.0]));
        assert!(!is_stable(&[1.0, -2.5, 1.0]));
        assert!(is_stable(&[1.0, -1.6185196386155332, 0.7105934766511969]));
        assert!(!is_stable(&[2.0, 0.1]));
        assert!(matches!(
            SystemSpec::new("bad", vec![1.0], vec![1.0, -1.2]),
            Err(Error::Design(_))
        ));
        assert!(SystemSpec::new("bad", vec![1.0], vec![0.5, 0.1]).is_err());
    }

    #[test]
    fn summed_system_matches_combined_rational() {
        let s1 = SystemSpec::new("a", vec![0.1, 0.0, -0.1], vec![1.0, -1.1, 0.9]).unwrap();
        let s2 = SystemSpec::new("b", vec![0.2, 0.0, -0.2], vec![1.0, 1.5, 0.9]).unwrap();
        let sum = SystemSpec::sum(
            "sum",
            vec![
                SystemComponent { gain: 0.2, spec: s1 },
                SystemComponent { gain: 1.0, spec: s2 },
            ],
        )
        .unwrap();
        let combined = SystemSpec::new("flat", sum.b.clone(), sum.a.clone()).unwrap();
        let (g1, g2) = (sum.impulse_response(200), combined.impulse_response(200));
        for (x, y) in g1.iter().zip(&g2) {
            assert!((x - y).abs() <= 1e-12);
        }
        for f in uniform_grid(65) {
            let (x, y) = (sum.response_at(f), combined.response_at(f));
            assert!((x - y).norm() <= 1e-10 * y.norm().max(1.0));
        }
    }

    #[test]
    fn json_round_trip() {
        let s1 = first_order();
        let sum = SystemSpec::sum("s", vec![SystemComponent { gain: 0.5, spec: s1.clone() }]).unwrap();
        for s in [s1, sum] {
            let text = serde_json::to_string(&s).unwrap();
            let back: SystemSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, s);
        }
    }
}
