use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Magnitude response sampled on a normalised-frequency grid (cycles/sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub frequency: Vec<f64>,
    pub magnitude_db: Vec<f64>,
}

/// `count` uniformly spaced points on `[0, 0.5]`, endpoints included.
pub fn uniform_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|i| 0.5 * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `Σ_k c_k e^{−j2πfk}`.
pub fn polyval_unit_circle(coeffs: &[f64], f: f64) -> Complex64 {
    // Horner in z⁻¹.
    let zinv = Complex64::from_polar(1.0, -2.0 * PI * f);
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * zinv + c)
}

pub fn to_db(magnitude: f64) -> f64 {
    20.0 * magnitude.log10()
}

pub fn fir_magnitude_db(taps: &[f64], f: f64) -> f64 {
    to_db(polyval_unit_circle(taps, f).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_endpoints() {
        let g = uniform_grid(5);
        assert_eq!(g, vec![0.0, 0.125, 0.25, 0.375, 0.5]);
    }

    #[test]
    fn two_tap_difference() {
        let taps = [1.0, -1.0];
        assert!(polyval_unit_circle(&taps, 0.0).norm() == 0.0);
        assert!((polyval_unit_circle(&taps, 0.5).norm() - 2.0).abs() < 1e-15);
        assert_eq!(fir_magnitude_db(&taps, 0.0), f64::NEG_INFINITY);
    }
}
