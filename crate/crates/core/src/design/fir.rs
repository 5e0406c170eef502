//! Hamming-windowed linear-phase FIR design and the decay-scaled banded
//! regularisation matrix built from it.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FilterMatrix, Triangle};
use crate::spectrum::polyval_unit_circle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandKind {
    LowPass,
    HighPass,
    BandPass,
    BandStop,
    MultiBandStop,
}

impl BandKind {
    /// Whether the design passes Nyquist, which forces an even order for a
    /// symmetric windowed design.
    pub fn passes_nyquist(self) -> bool {
        matches!(self, BandKind::HighPass | BandKind::BandStop | BandKind::MultiBandStop)
    }
}

/// Band type plus normalised edge frequencies (cycles/sample, Nyquist = 0.5).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub kind: BandKind,
    pub edges: Vec<f64>,
}

impl BandSpec {
    pub fn new(kind: BandKind, edges: Vec<f64>) -> Result<Self> {
        let b = Self { kind, edges };
        b.validate()?;
        Ok(b)
    }

    pub fn low_pass(edge: f64) -> Result<Self> {
        Self::new(BandKind::LowPass, vec![edge])
    }

    pub fn high_pass(edge: f64) -> Result<Self> {
        Self::new(BandKind::HighPass, vec![edge])
    }

    pub fn band_pass(lo: f64, hi: f64) -> Result<Self> {
        Self::new(BandKind::BandPass, vec![lo, hi])
    }

    pub fn band_stop(lo: f64, hi: f64) -> Result<Self> {
        Self::new(BandKind::BandStop, vec![lo, hi])
    }

    /// Stop-bands `[e0,e1] ∪ [e2,e3] ∪ …`; DC and Nyquist pass.
    pub fn multi_band_stop(edges: Vec<f64>) -> Result<Self> {
        Self::new(BandKind::MultiBandStop, edges)
    }

    pub fn validate(&self) -> Result<()> {
        let count_ok = match self.kind {
            BandKind::LowPass | BandKind::HighPass => self.edges.len() == 1,
            BandKind::BandPass | BandKind::BandStop => self.edges.len() == 2,
            BandKind::MultiBandStop => !self.edges.is_empty() && self.edges.len().is_multiple_of(2),
        };
        if !count_ok {
            return Err(Error::param(format!(
                "{:?} takes {} edges, got {}",
                self.kind,
                match self.kind {
                    BandKind::LowPass | BandKind::HighPass => "1",
                    BandKind::BandPass | BandKind::BandStop => "2",
                    BandKind::MultiBandStop => "an even number of",
                },
                self.edges.len()
            )));
        }
        for &e in &self.edges {
            if !(e > 0.0 && e < 0.5) {
                return Err(Error::param(format!(
                    "band edge {e} must lie strictly inside (0, 0.5)"
                )));
            }
        }
        if self.edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("band edges must be strictly increasing"));
        }
        Ok(())
    }

    /// Passbands as `(lo, hi)` intervals on `[0, 0.5]`.
    pub fn passbands(&self) -> Vec<(f64, f64)> {
        let e = &self.edges;
        match self.kind {
            BandKind::LowPass => vec![(0.0, e[0])],
            BandKind::HighPass => vec![(e[0], 0.5)],
            BandKind::BandPass => vec![(e[0], e[1])],
            BandKind::BandStop | BandKind::MultiBandStop => {
                let mut bands = Vec::with_capacity(e.len() / 2 + 1);
                let mut lo = 0.0;
                for pair in e.chunks(2) {
                    bands.push((lo, pair[0]));
                    lo = pair[1];
                }
                bands.push((lo, 0.5));
                bands
            }
        }
    }

    /// Stop-bands as `(lo, hi)` intervals on `[0, 0.5]`.
    pub fn stopbands(&self) -> Vec<(f64, f64)> {
        let pass = self.passbands();
        let mut stops = Vec::new();
        let mut lo = 0.0;
        for (a, b) in pass {
            if a > lo {
                stops.push((lo, a));
            }
            lo = b;
        }
        if lo < 0.5 {
            stops.push((lo, 0.5));
        }
        stops
    }
}

/// FIR filter `b_0 … b_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirDesign {
    pub order: usize,
    pub coefficients: Vec<f64>,
}

impl FirDesign {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::param("an FIR design needs at least one coefficient"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("FIR coefficients must be finite"));
        }
        Ok(Self {
            order: coefficients.len() - 1,
            coefficients,
        })
    }

    pub fn magnitude(&self, f: f64) -> f64 {
        polyval_unit_circle(&self.coefficients, f).norm()
    }

    pub fn magnitude_db(&self, f: f64) -> f64 {
        20.0 * self.magnitude(f).log10()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed linear-phase FIR of order `p` (`p + 1` taps).
///
/// The ideal response is the sum of the band's passbands; the result is
/// scaled to unit gain at DC when the first passband touches DC, at Nyquist
/// when it touches Nyquist, and at its centre otherwise.
pub fn design_fir_windowed(p: usize, band: &BandSpec) -> Result<FirDesign> {
    if p < 1 {
        return Err(Error::param("FIR order p must be at least 1"));
    }
    band.validate()?;
    if band.kind.passes_nyquist() && p % 2 == 1 {
        return Err(Error::param(format!(
            "{:?} designs need an even order, got p = {p}",
            band.kind
        )));
    }
    let taps = p + 1;
    let mid = p as f64 / 2.0;
    let bands = band.passbands();
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let m = k as f64 - mid;
            let ideal: f64 = bands
                .iter()
                .map(|&(lo, hi)| 2.0 * hi * sinc(2.0 * hi * m) - 2.0 * lo * sinc(2.0 * lo * m))
                .sum();
            let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / p as f64).cos();
            ideal * window
        })
        .collect();

    let (lo, hi) = bands[0];
    let f_ref = if lo == 0.0 {
        0.0
    } else if hi == 0.5 {
        0.5
    } else {
        0.5 * (lo + hi)
    };
    let gain: f64 = h
        .iter()
        .enumerate()
        .map(|(k, v)| v * (2.0 * PI * f_ref * (k as f64 - mid)).cos())
        .sum();
    if gain.abs() < f64::EPSILON {
        return Err(Error::Design("normalisation gain vanished".into()));
    }
    for v in &mut h {
        *v /= gain;
    }
    FirDesign::new(h)
}

/// Row `i` (1-based) holds `α^{−i/2}·[b_0 … b_p]` starting at column `i`,
/// truncated at column `n`.
pub fn build_regularisation_filter_matrix(fir: &FirDesign, n: usize, alpha: f64) -> Result<FilterMatrix> {
    if fir.order >= n {
        return Err(Error::param(format!(
            "filter order p = {} must be below the model order n = {n}",
            fir.order
        )));
    }
    if alpha == 0.0 {
        return Err(Error::Singular("alpha = 0 gives an unbounded row scaling".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let mut f = DMatrix::zeros(n, n);
    for i in 0..n {
        let scale = alpha.powf(-((i + 1) as f64) / 2.0);
        for (k, b) in fir.coefficients.iter().enumerate() {
            let j = i + k;
            if j >= n {
                break;
            }
            f[(i, j)] = scale * b;
        }
    }
    FilterMatrix::from_dense(f, Triangle::Upper)
}

/// `λ Fᵀ F` for the matrix of [`build_regularisation_filter_matrix`], built
/// directly from the taps. Entry `(j, k)` sums over the rows whose band covers
/// both columns.
pub fn regularisation_gram(fir: &FirDesign, n: usize, alpha: f64, lambda: f64) -> Result<DMatrix<f64>> {
    if fir.order >= n {
        return Err(Error::param(format!(
            "filter order p = {} must be below the model order n = {n}",
            fir.order
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let b = &fir.coefficients;
    let p = fir.order;
    let weights: Vec<f64> = (0..n).map(|i| lambda * alpha.powf(-((i + 1) as f64))).collect();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..(j + p + 1).min(n) {
            // rows i with i ≤ j and k − i ≤ p
            let lo = k.saturating_sub(p);
            let s: f64 = (lo..=j).map(|i| weights[i] * b[j - i] * b[k - i]).sum();
            g[(j, k)] = s;
            g[(k, j)] = s;
        }
    }
    Ok(g)
}
