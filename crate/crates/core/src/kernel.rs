//! Prior covariances `P`, regularisation matrices `R = σ² P⁻¹` and filter
//! factors `F` with `R = Fᵀ F` for the random-walk, correlation, decay, TC and
//! DC kernels.
//!
//! Index convention: the closed forms are written with 1-based indices
//! `i, j ∈ {1..n}` (so the first row of the decay factor is `α^{-1/2}`).
//! Storage and every public index argument are 0-based; storage index `k`
//! corresponds to formula index `k + 1`.
//!
//! Two triangular factorisations are available. [`factorize_rotated`] gives the
//! lower-triangular `F` with `R = Fᵀ F` (index reversal around a standard
//! Cholesky); it reproduces the random-walk difference operator.
//! [`factorize_cholesky`] gives the upper-triangular `F = Lᵀ` of `R = L Lᵀ`;
//! it reproduces the correlation, TC and DC closed forms. Both agree on the
//! diagonal decay kernel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::spectrum::{polyval_unit_circle, to_db, uniform_grid, FrequencyResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    RandomWalk,
    Correlation,
    Decay,
    Tc,
    Dc,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::RandomWalk,
        KernelFamily::Correlation,
        KernelFamily::Decay,
        KernelFamily::Tc,
        KernelFamily::Dc,
    ];

    pub fn is_tridiagonal(self) -> bool {
        !matches!(self, KernelFamily::Decay)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rw" | "random-walk" | "randomwalk" => Ok(KernelFamily::RandomWalk),
            "corr" | "correlation" => Ok(KernelFamily::Correlation),
            "dec" | "decay" => Ok(KernelFamily::Decay),
            "tc" => Ok(KernelFamily::Tc),
            "dc" => Ok(KernelFamily::Dc),
            other => Err(Error::param(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel family and hyperparameters.
///
/// Only the fields a family uses are read: `c` (all but random walk and
/// decay), `rho` (correlation, DC), `alpha` (decay, TC, DC) and `sigma2`
/// (all). For the random walk `sigma2` holds the ratio `σ²/σ_e²`, with
/// `σ_e² = 1`. For TC, `rho` is implicitly `√α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn random_walk(sigma2: f64) -> Self {
        Self {
            family: KernelFamily::RandomWalk,
            c: 1.0,
            rho: 0.0,
            alpha: 1.0,
            sigma2,
        }
    }

    pub fn correlation(c: f64, rho: f64, sigma2: f64) -> Self {
        Self {
            family: KernelFamily::Correlation,
            c,
            rho,
            alpha: 1.0,
            sigma2,
        }
    }

    pub fn decay(alpha: f64, sigma2: f64) -> Self {
        Self {
            family: KernelFamily::Decay,
            c: 1.0,
            rho: 0.0,
            alpha,
            sigma2,
        }
    }

    pub fn tc(c: f64, alpha: f64, sigma2: f64) -> Self {
        Self {
            family: KernelFamily::Tc,
            c,
            rho: alpha.sqrt(),
            alpha,
            sigma2,
        }
    }

    pub fn dc(c: f64, rho: f64, alpha: f64, sigma2: f64) -> Self {
        Self {
            family: KernelFamily::Dc,
            c,
            rho,
            alpha,
            sigma2,
        }
    }

    /// Checks `c ≥ 0`, `|ρ| ≤ 1`, `0 ≤ α ≤ 1`, `σ² > 0` for the fields the family uses.
    pub fn validate(&self) -> Result<()> {
        use KernelFamily::*;
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::param(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if matches!(self.family, Correlation | Tc | Dc) && (!(self.c >= 0.0) || !self.c.is_finite()) {
            return Err(Error::param(format!("c must be non-negative, got {}", self.c)));
        }
        if matches!(self.family, Correlation | Dc) && !(self.rho.abs() <= 1.0) {
            return Err(Error::param(format!("|rho| must be at most 1, got {}", self.rho)));
        }
        if matches!(self.family, Decay | Tc | Dc) && !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    fn effective_rho(&self) -> f64 {
        match self.family {
            KernelFamily::Tc => self.alpha.sqrt(),
            _ => self.rho,
        }
    }

    /// `σ²/c`, the common prefactor of the inverse kernels.
    fn inverse_scale(&self) -> Result<f64> {
        match self.family {
            KernelFamily::RandomWalk | KernelFamily::Decay => Ok(self.sigma2),
            _ if self.c > 0.0 => Ok(self.sigma2 / self.c),
            _ => Err(Error::Singular("c = 0 gives a zero covariance with no inverse".into())),
        }
    }
}

macro_rules! square_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DMatrix<f64>);

        impl $name {
            pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
                if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
                    return Err(Error::param(format!(
                        "expected a non-empty square matrix, got {}x{}",
                        matrix.nrows(),
                        matrix.ncols()
                    )));
                }
                Ok(Self(matrix))
            }

            pub fn n(&self) -> usize {
                self.0.nrows()
            }

            pub fn matrix(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_inner(self) -> DMatrix<f64> {
                self.0
            }

            /// Largest `|A_ij − A_ji|`.
            pub fn asymmetry(&self) -> f64 {
                let n = self.n();
                let mut worst = 0.0_f64;
                for i in 0..n {
                    for j in 0..i {
                        worst = worst.max((self.0[(i, j)] - self.0[(j, i)]).abs());
                    }
                }
                worst
            }
        }
    };
}

square_newtype!(CovarianceMatrix);
square_newtype!(RegularisationMatrix);

impl RegularisationMatrix {
    /// `R = λ Fᵀ F`.
    pub fn from_filter(f: &FilterMatrix, lambda: f64) -> Self {
        Self(f.gram() * lambda)
    }
}

/// Which triangle of `F` carries the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Triangle {
    /// Row `i` is nonzero only in columns `i..=i+bandwidth`.
    Upper,
    /// Row `i` is nonzero only in columns `i-bandwidth..=i`.
    Lower,
}

/// Banded triangular penalty operator `F`, with `R = λ Fᵀ F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    matrix: DMatrix<f64>,
    bandwidth: usize,
    triangle: Triangle,
}

impl FilterMatrix {
    /// Wraps a dense triangular matrix, measuring its bandwidth. Entries on the
    /// wrong side of the diagonal must be exactly zero.
    pub fn from_dense(matrix: DMatrix<f64>, triangle: Triangle) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::param("filter matrix must be square and non-empty"));
        }
        let mut bandwidth = 0;
        for i in 0..n {
            for j in 0..n {
                let v = matrix[(i, j)];
                if v == 0.0 {
                    continue;
                }
                let off = match triangle {
                    Triangle::Upper if j >= i => j - i,
                    Triangle::Lower if i >= j => i - j,
                    _ => {
                        return Err(Error::param(format!(
                            "entry ({i}, {j}) = {v} lies outside the {triangle:?} triangle"
                        )))
                    }
                };
                bandwidth = bandwidth.max(off);
            }
        }
        Ok(Self {
            matrix,
            bandwidth,
            triangle,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn triangle(&self) -> Triangle {
        self.triangle
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Column range of the band in row `i`.
    fn band(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        match self.triangle {
            Triangle::Upper => i..=(i + self.bandwidth).min(self.n() - 1),
            Triangle::Lower => i.saturating_sub(self.bandwidth)..=i,
        }
    }

    /// Band entries of row `i` ordered outward from the diagonal, i.e. the FIR
    /// taps the row applies to `θ`.
    pub fn row_taps(&self, i: usize) -> Vec<f64> {
        let cols = self.band(i);
        let taps = cols.map(|j| self.matrix[(i, j)]);
        match self.triangle {
            Triangle::Upper => taps.collect(),
            Triangle::Lower => {
                let mut v: Vec<f64> = taps.collect();
                v.reverse();
                v
            }
        }
    }

    /// `Fᵀ F`, accumulated over the band only.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            let cols = self.band(i);
            let (lo, hi) = (*cols.start(), *cols.end());
            for j in lo..=hi {
                let fij = self.matrix[(i, j)];
                if fij == 0.0 {
                    continue;
                }
                for k in lo..=hi {
                    g[(j, k)] += fij * self.matrix[(i, k)];
                }
            }
        }
        g
    }

    /// `F θ`.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.band(i).map(|j| self.matrix[(i, j)] * theta[j]).sum())
            .collect()
    }
}

fn check_order(spec: &KernelSpec, n: usize) -> Result<()> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::param("model order n must be at least 1"));
    }
    Ok(())
}

/// Prior covariance `P` of the impulse-response coefficients.
pub fn build_covariance(spec: &KernelSpec, n: usize) -> Result<CovarianceMatrix> {
    check_order(spec, n)?;
    let (c, rho, alpha) = (spec.c, spec.effective_rho(), spec.alpha);
    // 1-based formula indices.
    let entry = |i: usize, j: usize| -> f64 {
        let (fi, fj) = ((i + 1) as f64, (j + 1) as f64);
        match spec.family {
            KernelFamily::RandomWalk => fi.min(fj),
            KernelFamily::Correlation => c * rho.powi((i as i64 - j as i64).unsigned_abs() as i32),
            KernelFamily::Decay => {
                if i == j {
                    alpha.powf(fi)
                } else {
                    0.0
                }
            }
            KernelFamily::Tc => c * alpha.powf(fi).min(alpha.powf(fj)),
            KernelFamily::Dc => {
                c * rho.powi((i as i64 - j as i64).unsigned_abs() as i32)
                    * alpha.powf((fi + fj) / 2.0)
            }
        }
    };
    CovarianceMatrix::new(DMatrix::from_fn(n, n, entry))
}

/// Analytic `R = σ² P⁻¹`.
pub fn build_regularisation_closed_form(spec: &KernelSpec, n: usize) -> Result<RegularisationMatrix> {
    check_order(spec, n)?;
    if spec.family.is_tridiagonal() && n < 2 {
        return Err(Error::param("tridiagonal kernels need n >= 2"));
    }
    let scale = spec.inverse_scale()?;
    let alpha = spec.alpha;
    if matches!(spec.family, KernelFamily::Decay | KernelFamily::Tc | KernelFamily::Dc) && alpha == 0.0 {
        return Err(Error::Singular("alpha = 0 gives a singular covariance".into()));
    }
    let rho = spec.effective_rho();
    let one_minus_rho2 = match spec.family {
        KernelFamily::Tc => 1.0 - alpha,
        _ => 1.0 - rho * rho,
    };
    if matches!(spec.family, KernelFamily::Correlation | KernelFamily::Tc | KernelFamily::Dc)
        && !(one_minus_rho2 > 0.0)
    {
        return Err(Error::Singular("|rho| = 1 gives a singular covariance".into()));
    }

    let last = n - 1;
    let mut r = DMatrix::zeros(n, n);
    match spec.family {
        KernelFamily::RandomWalk => {
            for i in 0..n {
                r[(i, i)] = if i == last { 1.0 } else { 2.0 };
                if i > 0 {
                    r[(i, i - 1)] = -1.0;
                    r[(i - 1, i)] = -1.0;
                }
            }
        }
        KernelFamily::Decay => {
            for i in 0..n {
                r[(i, i)] = alpha.powf(-((i + 1) as f64));
            }
        }
        KernelFamily::Correlation | KernelFamily::Tc | KernelFamily::Dc => {
            // a_ij / (α^{(i+j)/2} (1 − ρ²)); the correlation kernel has no decay.
            let decay = |i: usize, j: usize| -> f64 {
                if spec.family == KernelFamily::Correlation {
                    1.0
                } else {
                    alpha.powf(-((i + j + 2) as f64) / 2.0)
                }
            };
            for i in 0..n {
                let a_ii = if i == 0 || i == last { 1.0 } else { 1.0 + rho * rho };
                r[(i, i)] = a_ii * decay(i, i) / one_minus_rho2;
                if i > 0 {
                    let v = -rho * decay(i, i - 1) / one_minus_rho2;
                    r[(i, i - 1)] = v;
                    r[(i - 1, i)] = v;
                }
            }
        }
    }
    RegularisationMatrix::new(r * scale)
}

/// Closed-form filter factor with `Fᵀ F = R`, scaled by `√(σ²/c)` so it matches
/// [`build_regularisation_closed_form`] for any `c, σ²` and the displayed
/// forms at `c = σ² = 1`.
///
/// Random walk: lower bidiagonal, `F(i,i) = 1`, `F(i,i−1) = −1`.
/// Correlation, TC, DC: upper bidiagonal with a distinct last diagonal entry.
/// Decay: diagonal `α^{−i/2}`.
pub fn build_filter_factor_closed_form(spec: &KernelSpec, n: usize) -> Result<FilterMatrix> {
    check_order(spec, n)?;
    let scale = spec.inverse_scale()?.sqrt();
    let alpha = spec.alpha;
    let rho = spec.effective_rho();
    let last = n - 1;
    let mut f = DMatrix::zeros(n, n);
    let triangle = match spec.family {
        KernelFamily::RandomWalk => {
            for i in 0..n {
                f[(i, i)] = 1.0;
                if i > 0 {
                    f[(i, i - 1)] = -1.0;
                }
            }
            Triangle::Lower
        }
        KernelFamily::Decay => {
            if alpha == 0.0 {
                return Err(Error::Singular("alpha = 0 gives an unbounded decay factor".into()));
            }
            for i in 0..n {
                f[(i, i)] = alpha.powf(-((i + 1) as f64) / 2.0);
            }
            Triangle::Upper
        }
        KernelFamily::Correlation | KernelFamily::Tc | KernelFamily::Dc => {
            let one_minus_rho2 = match spec.family {
                KernelFamily::Tc => 1.0 - alpha,
                _ => 1.0 - rho * rho,
            };
            if !(one_minus_rho2 > 0.0) {
                return Err(Error::Singular("|rho| = 1 makes 1 − ρ² vanish".into()));
            }
            if spec.family != KernelFamily::Correlation && alpha == 0.0 {
                return Err(Error::Singular("alpha = 0 gives an unbounded decay factor".into()));
            }
            // α^{-i} with 1-based i, or 1 for the correlation kernel.
            let decay = |i: usize| -> f64 {
                if spec.family == KernelFamily::Correlation {
                    1.0
                } else {
                    alpha.powf(-((i + 1) as f64))
                }
            };
            for i in 0..n {
                f[(i, i)] = if i == last {
                    decay(i).sqrt()
                } else {
                    (decay(i) / one_minus_rho2).sqrt()
                };
                if i < last {
                    // −√(ρ² / (α^{i+1}(1 − ρ²))); ρ keeps its sign so DC with ρ < 0 still factors R.
                    f[(i, i + 1)] = -rho * (decay(i + 1) / one_minus_rho2).sqrt();
                }
            }
            Triangle::Upper
        }
    };
    FilterMatrix::from_dense(f * scale, triangle)
}

/// Lower-triangular `F` with `R = Fᵀ F`: reverse the index order, take the
/// standard Cholesky factor `L̃` of the reversed matrix, and reverse back
/// (`F = J L̃ᵀ J`).
pub fn factorize_rotated(r: &RegularisationMatrix) -> Result<FilterMatrix> {
    let n = r.n();
    let m = r.matrix();
    let reversed = DMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    let l = Cholesky::new(&reversed).map_err(|e| match e {
        Error::NotPositiveDefinite {
            index,
            pivot,
            tolerance,
        } => Error::NotPositiveDefinite {
            index: n - 1 - index,
            pivot,
            tolerance,
        },
        other => other,
    })?;
    let lf = l.factor();
    let f = DMatrix::from_fn(n, n, |i, j| lf[(n - 1 - j, n - 1 - i)]);
    FilterMatrix::from_dense(f, Triangle::Lower)
}

/// Upper-triangular `F = Lᵀ` from the standard Cholesky factorisation `R = L Lᵀ`.
pub fn factorize_cholesky(r: &RegularisationMatrix) -> Result<FilterMatrix> {
    let l = Cholesky::new(r.matrix())?;
    FilterMatrix::from_dense(l.factor().transpose(), Triangle::Upper)
}

/// Magnitude response (dB) of the FIR filter formed by row `row` (0-based) of
/// `F`, on `n_freq` uniform points of `[0, 0.5]`.
pub fn row_frequency_response(f: &FilterMatrix, row: usize, n_freq: usize) -> Result<FrequencyResponse> {
    if row >= f.n() {
        return Err(Error::param(format!("row {row} out of range for n = {}", f.n())));
    }
    if n_freq < 2 {
        return Err(Error::param("need at least two frequency points"));
    }
    let taps = f.row_taps(row);
    if taps.iter().all(|&t| t == 0.0) {
        return Err(Error::ZeroRow(row));
    }
    let frequency = uniform_grid(n_freq);
    let magnitude_db = frequency
        .iter()
        .map(|&fr| to_db(polyval_unit_circle(&taps, fr).norm()))
        .collect();
    Ok(FrequencyResponse {
        frequency,
        magnitude_db,
    })
}
