//! Cross-validated tuning of the filter hyperparameters `β = [p, f1, f2, α, λ]`,
//! CV tuning of the TC/DC baselines, and an evidence-maximising kernel tuner.

mod cv;
mod evidence;
pub(crate) mod search;

use serde::{Deserialize, Serialize};

use crate::design::{build_regularisation_filter_matrix, design_fir_windowed, BandKind, BandSpec, FirDesign};
use crate::error::{Error, Result};
use crate::kernel::{FilterMatrix, KernelSpec};

pub use cv::{cv_score, kernel_cv_score, kfold_split, CvProblem, Fold};
pub use evidence::{evidence_objective, marginal_likelihood_tune, EvidenceFamily, EvidenceGrid, EvidenceResult};
pub use search::{
    grid_search, nelder_mead, refine_local, tune_kernel_cv, KernelTraceEntry, KernelTuningResult,
    NelderMeadOptions, SimplexResult,
};

/// `β = [p, f1, f2, α, λ]`.
///
/// `[f1, f2]` is the band the regularisation filter suppresses, i.e. the
/// assumed passband of the system. `band_kind` is the kind of that filter:
/// band-stop for `0 < f1 < f2 < 0.5`, high-pass when `f1 = 0` (low-pass
/// system), low-pass when `f2 = 0.5` (high-pass system), and multi-band stop
/// when `tailored_edges` supplies the stop-bands directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterVector {
    pub p: usize,
    pub f1: f64,
    pub f2: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub band_kind: BandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tailored_edges: Option<Vec<f64>>,
}

impl HyperparameterVector {
    /// Infers the filter kind from the band `[f1, f2]`.
    pub fn new(p: usize, f1: f64, f2: f64, alpha: f64, lambda: f64) -> Result<Self> {
        let band_kind = if f1 == 0.0 {
            BandKind::HighPass
        } else if f2 == 0.5 {
            BandKind::LowPass
        } else {
            BandKind::BandStop
        };
        let b = Self {
            p,
            f1,
            f2,
            alpha,
            lambda,
            band_kind,
            tailored_edges: None,
        };
        b.validate()?;
        Ok(b)
    }

    /// Multi-band stop filter with fixed stop-band edges.
    pub fn tailored(p: usize, edges: Vec<f64>, alpha: f64, lambda: f64) -> Result<Self> {
        let (f1, f2) = match (edges.first(), edges.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::param("tailored filter needs stop-band edges")),
        };
        let b = Self {
            p,
            f1,
            f2,
            alpha,
            lambda,
            band_kind: BandKind::MultiBandStop,
            tailored_edges: Some(edges),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::param("filter order p must be at least 1"));
        }
        if !(0.0 <= self.f1 && self.f1 < self.f2 && self.f2 <= 0.5) {
            return Err(Error::param(format!(
                "need 0 <= f1 < f2 <= 0.5, got f1 = {}, f2 = {}",
                self.f1, self.f2
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        let consistent = match self.band_kind {
            BandKind::HighPass => self.f1 == 0.0 && self.f2 < 0.5,
            BandKind::LowPass => self.f2 == 0.5 && self.f1 > 0.0,
            BandKind::BandStop => self.f1 > 0.0 && self.f2 < 0.5,
            BandKind::MultiBandStop => self.tailored_edges.is_some(),
            BandKind::BandPass => false,
        };
        if !consistent {
            return Err(Error::param(format!(
                "band kind {:?} does not match f1 = {}, f2 = {}",
                self.band_kind, self.f1, self.f2
            )));
        }
        if self.band_kind.passes_nyquist() && self.p % 2 == 1 {
            return Err(Error::param(format!(
                "{} regularisers need an even order, got p = {}",
                kind_label(self.band_kind),
                self.p
            )));
        }
        self.regulariser_band()?;
        Ok(())
    }

    /// Band specification of the regularisation filter.
    pub fn regulariser_band(&self) -> Result<BandSpec> {
        match self.band_kind {
            BandKind::HighPass => BandSpec::high_pass(self.f2),
            BandKind::LowPass => BandSpec::low_pass(self.f1),
            BandKind::BandStop => BandSpec::band_stop(self.f1, self.f2),
            BandKind::MultiBandStop => BandSpec::multi_band_stop(
                self.tailored_edges
                    .clone()
                    .ok_or_else(|| Error::param("multi-band stop needs tailored edges"))?,
            ),
            BandKind::BandPass => Err(Error::param("band-pass is not a regulariser kind")),
        }
    }

    pub fn fir(&self) -> Result<FirDesign> {
        design_fir_windowed(self.p, &self.regulariser_band()?)
    }

    pub fn filter_matrix(&self, n: usize) -> Result<FilterMatrix> {
        build_regularisation_filter_matrix(&self.fir()?, n, self.alpha)
    }

    /// Stop-band width used by the tie-break (total width for tailored filters).
    pub fn band_width(&self) -> f64 {
        match &self.tailored_edges {
            Some(e) => e.chunks(2).map(|c| c[1] - c[0]).sum(),
            None => self.f2 - self.f1,
        }
    }

    /// Compact `key=value` rendering.
    pub fn summary(&self) -> String {
        let band = match &self.tailored_edges {
            Some(e) => e.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join("/"),
            None => format!("{}/{}", self.f1, self.f2),
        };
        format!(
            "p={} band={} kind={} alpha={:e} lambda={:e}",
            self.p,
            band,
            kind_label(self.band_kind),
            self.alpha,
            self.lambda
        )
    }

    /// Ordering used for tie-breaking: smaller λ, then smaller p, then a
    /// narrower band, then the remaining coordinates.
    pub(crate) fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then(self.p.cmp(&other.p))
            .then(self.band_width().total_cmp(&other.band_width()))
            .then(self.f1.total_cmp(&other.f1))
            .then(self.alpha.total_cmp(&other.alpha))
            .then(self.band_kind.cmp(&other.band_kind))
    }
}

pub(crate) fn kind_label(kind: BandKind) -> &'static str {
    match kind {
        BandKind::LowPass => "low-pass",
        BandKind::HighPass => "high-pass",
        BandKind::BandPass => "band-pass",
        BandKind::BandStop => "band-stop",
        BandKind::MultiBandStop => "multi-band-stop",
    }
}

fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

fn lin_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Candidate lists for every tuned quantity.
///
/// Filter candidates are the product `p × (f1, f2) × α × λ` over pairs with
/// `f1 < f2`, restricted to the regulariser kinds in `band_kinds`. With
/// `tailored_edges` set, the band scan is replaced by that fixed multi-band
/// stop filter. `kernel_alpha`, `kernel_rho` and `kernel_lambda` drive the
/// TC/DC baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub p: Vec<usize>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub band_kinds: Vec<BandKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tailored_edges: Option<Vec<f64>>,
    pub kernel_alpha: Vec<f64>,
    pub kernel_rho: Vec<f64>,
    pub kernel_lambda: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let edges: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
        Self {
            p: vec![2, 4, 6, 10, 16, 22, 30],
            f1: edges[..10].to_vec(),
            f2: edges[1..].to_vec(),
            alpha: vec![0.7, 0.8, 0.9],
            lambda: log_space(1e-2, 1e4, 13),
            band_kinds: vec![BandKind::BandStop, BandKind::HighPass, BandKind::LowPass],
            tailored_edges: None,
            kernel_alpha: lin_space(0.5, 0.99, 20),
            kernel_rho: lin_space(-0.99, 0.99, 20),
            kernel_lambda: log_space(1e-6, 1e3, 19),
        }
    }
}

impl GridSpec {
    /// Grid with a single filter candidate.
    pub fn single(beta: &HyperparameterVector) -> Self {
        Self {
            p: vec![beta.p],
            f1: vec![beta.f1],
            f2: vec![beta.f2],
            alpha: vec![beta.alpha],
            lambda: vec![beta.lambda],
            band_kinds: vec![beta.band_kind],
            tailored_edges: beta.tailored_edges.clone(),
            ..Self::default()
        }
    }

    pub fn with_tailored_edges(mut self, edges: Vec<f64>) -> Self {
        self.tailored_edges = Some(edges);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str| Error::param(format!("grid list `{name}` is empty"));
        if self.p.is_empty() {
            return Err(empty("p"));
        }
        if self.alpha.is_empty() {
            return Err(empty("alpha"));
        }
        if self.lambda.is_empty() {
            return Err(empty("lambda"));
        }
        if self.tailored_edges.is_none() {
            if self.f1.is_empty() {
                return Err(empty("f1"));
            }
            if self.f2.is_empty() {
                return Err(empty("f2"));
            }
            if self.band_kinds.is_empty() {
                return Err(empty("band_kinds"));
            }
        }
        if let Some(p) = self.p.iter().find(|&&p| p < 1) {
            return Err(Error::param(format!("grid filter order {p} must be at least 1")));
        }
        for &f in self.f1.iter().chain(&self.f2) {
            if !(0.0..=0.5).contains(&f) {
                return Err(Error::param(format!("grid cut-off {f} outside [0, 0.5]")));
            }
        }
        for &a in self.alpha.iter().chain(&self.kernel_alpha) {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::param(format!("grid alpha {a} outside (0, 1]")));
            }
        }
        for &l in self.lambda.iter().chain(&self.kernel_lambda) {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::param(format!("grid lambda {l} must be non-negative")));
            }
        }
        for &r in &self.kernel_rho {
            if !(r.abs() < 1.0) {
                return Err(Error::param(format!("grid rho {r} must satisfy |rho| < 1")));
            }
        }
        if let Some(e) = &self.tailored_edges {
            BandSpec::multi_band_stop(e.clone())?;
        }
        if self.band_kinds.contains(&BandKind::BandPass) {
            return Err(Error::param("band-pass is not a regulariser kind"));
        }
        Ok(())
    }

    /// `(band kind, f1, f2)` combinations to scan.
    fn bands(&self) -> Vec<(BandKind, f64, f64)> {
        let mut out = Vec::new();
        for &f1 in &self.f1 {
            for &f2 in &self.f2 {
                if !(f1 < f2) || (f1 == 0.0 && f2 == 0.5) {
                    continue;
                }
                let kind = if f1 == 0.0 {
                    BandKind::HighPass
                } else if f2 == 0.5 {
                    BandKind::LowPass
                } else {
                    BandKind::BandStop
                };
                if self.band_kinds.contains(&kind) {
                    out.push((kind, f1, f2));
                }
            }
        }
        out
    }

    /// Every valid filter candidate. Orders that a band kind cannot realise
    /// (odd `p` with a Nyquist passband, `p ≥ n`) are skipped.
    pub fn candidates(&self, n: usize) -> Vec<HyperparameterVector> {
        let mut out = Vec::new();
        let bands: Vec<(BandKind, f64, f64, Option<Vec<f64>>)> = match &self.tailored_edges {
            Some(e) => vec![(BandKind::MultiBandStop, e[0], e[e.len() - 1], Some(e.clone()))],
            None => self.bands().into_iter().map(|(k, a, b)| (k, a, b, None)).collect(),
        };
        for &p in &self.p {
            if p >= n {
                continue;
            }
            for (kind, f1, f2, edges) in &bands {
                if kind.passes_nyquist() && p % 2 == 1 {
                    continue;
                }
                for &alpha in &self.alpha {
                    for &lambda in &self.lambda {
                        out.push(HyperparameterVector {
                            p,
                            f1: *f1,
                            f2: *f2,
                            alpha,
                            lambda,
                            band_kind: *kind,
                            tailored_edges: edges.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub beta: HyperparameterVector,
    pub cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best: HyperparameterVector,
    pub cv_mse: f64,
    pub trace: Vec<TraceEntry>,
    /// Candidates whose estimate could not be computed.
    #[serde(default)]
    pub failures: usize,
}

impl TuningResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// TC/DC baseline spec with `R = λ·R_kernel(c = σ² = 1)`, i.e. `σ²/c = λ`.
pub(crate) fn baseline_kernel(family: EvidenceFamily, alpha: f64, rho: f64, lambda: f64) -> KernelSpec {
    match family {
        EvidenceFamily::Tc => KernelSpec::tc(1.0, alpha, lambda),
        EvidenceFamily::Dc => KernelSpec::dc(1.0, rho, alpha, lambda),
    }
}
