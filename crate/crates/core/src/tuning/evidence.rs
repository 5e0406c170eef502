//! Gaussian-evidence tuning of TC/DC kernel hyperparameters.
//!
//! The objective `log det(Σ) + Yᵀ Σ⁻¹ Y` with `Σ = c Φ P₁ Φᵀ + σ² I` is
//! evaluated in `n` dimensions. With `P₁ = L Lᵀ` and the eigendecomposition
//! `Lᵀ ΦᵀΦ L = V D Vᵀ`, `w = Vᵀ Lᵀ ΦᵀY`:
//!
//! `log det Σ = (N − n) log σ² + Σᵢ log(σ² + c dᵢ)`,
//! `Yᵀ Σ⁻¹ Y = (YᵀY − Σᵢ c wᵢ² / (σ² + c dᵢ)) / σ²`,
//!
//! so each `(α, ρ)` shape costs one eigendecomposition and every `(c, σ²)`
//! pair after that is `O(n)`. `L = F⁻¹` comes from the closed-form factor.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::search::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::estimator::{build_regressor, normal_equations, Dataset};
use crate::kernel::{build_filter_factor_closed_form, KernelFamily, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceFamily {
    Tc,
    Dc,
}

impl EvidenceFamily {
    fn spec(self, c: f64, alpha: f64, rho: f64, sigma2: f64) -> KernelSpec {
        match self {
            EvidenceFamily::Tc => KernelSpec::tc(c, alpha, sigma2),
            EvidenceFamily::Dc => KernelSpec::dc(c, rho, alpha, sigma2),
        }
    }
}

impl TryFrom<KernelFamily> for EvidenceFamily {
    type Error = Error;

    fn try_from(f: KernelFamily) -> Result<Self> {
        match f {
            KernelFamily::Tc => Ok(EvidenceFamily::Tc),
            KernelFamily::Dc => Ok(EvidenceFamily::Dc),
            other => Err(Error::param(format!("{other:?} is not tunable by evidence maximisation"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceGrid {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub c: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Simplex refinement budget; 0 disables refinement.
    pub refine_evaluations: usize,
}

impl Default for EvidenceGrid {
    fn default() -> Self {
        let lin = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
        };
        let log = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            lin(lo.log10(), hi.log10(), k).into_iter().map(|e| 10f64.powf(e)).collect()
        };
        Self {
            alpha: lin(0.5, 0.99, 20),
            rho: lin(-0.99, 0.99, 20),
            c: log(1e-6, 1e2, 17),
            sigma2: log(1e-8, 1e2, 21),
            refine_evaluations: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTraceEntry {
    pub spec: KernelSpec,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceResult {
    pub spec: KernelSpec,
    pub objective: f64,
    /// Best `(c, σ²)` per grid shape, then accepted refinement steps.
    pub trace: Vec<EvidenceTraceEntry>,
    /// Shapes whose covariance could not be factorised.
    pub skipped: Vec<String>,
}

struct Sufficient {
    samples: usize,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    yy: f64,
}

/// Spectrum of `Lᵀ ΦᵀΦ L` and the projected data for one kernel shape.
struct Shape {
    d: Vec<f64>,
    w2: Vec<f64>,
}

impl Sufficient {
    fn new(data: &Dataset, n: usize) -> Result<Self> {
        data.validate()?;
        if n >= data.len() {
            return Err(Error::param(format!(
                "model order n = {n} must be below the sample count {}",
                data.len()
            )));
        }
        let phi = build_regressor(&data.u, n)?;
        let (gram, rhs) = normal_equations(&phi, &data.y);
        Ok(Self {
            samples: data.len(),
            gram,
            rhs: DVector::from_vec(rhs),
            yy: data.y.iter().map(|v| v * v).sum(),
        })
    }

    fn shape(&self, family: EvidenceFamily, alpha: f64, rho: f64) -> Result<Shape> {
        let n = self.gram.nrows();
        let f = build_filter_factor_closed_form(&family.spec(1.0, alpha, rho, 1.0), n)?;
        let l = f
            .matrix()
            .clone()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Singular("kernel factor is singular".into()))?;
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("kernel factor inverse overflowed".into()));
        }
        let m = l.tr_mul(&(&self.gram * &l));
        let m = (&m + m.transpose()) * 0.5;
        let eig = m.symmetric_eigen();
        let w = eig.eigenvectors.tr_mul(&l.tr_mul(&self.rhs));
        Ok(Shape {
            d: eig.eigenvalues.iter().map(|v| v.max(0.0)).collect(),
            w2: w.iter().map(|v| v * v).collect(),
        })
    }

    fn objective(&self, s: &Shape, c: f64, sigma2: f64) -> f64 {
        let n = s.d.len();
        let mut logdet = (self.samples - n) as f64 * sigma2.ln();
        let mut quad = 0.0;
        for (d, w2) in s.d.iter().zip(&s.w2) {
            let k = sigma2 + c * d;
            logdet += k.ln();
            quad += c * w2 / k;
        }
        logdet + (self.yy - quad).max(0.0) / sigma2
    }
}

/// Evidence objective `log det(ΦPΦᵀ + σ²I) + Yᵀ(ΦPΦᵀ + σ²I)⁻¹Y` (lower is better).
pub fn evidence_objective(spec: &KernelSpec, data: &Dataset, n: usize) -> Result<f64> {
    spec.validate()?;
    let family = EvidenceFamily::try_from(spec.family)?;
    let suff = Sufficient::new(data, n)?;
    let shape = suff.shape(family, spec.alpha, spec.rho)?;
    Ok(suff.objective(&shape, spec.c, spec.sigma2))
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Grid plus simplex minimisation of the evidence objective over `(c, α, σ²)`
/// (and `ρ` for DC), using [`EvidenceGrid::default`].
pub fn marginal_likelihood_tune(family: EvidenceFamily, data: &Dataset, n: usize) -> Result<EvidenceResult> {
    marginal_likelihood_tune_with(family, data, n, &EvidenceGrid::default())
}

/// As [`marginal_likelihood_tune`] with explicit grids. Refinement stays
/// inside the grid's bounding box.
pub fn marginal_likelihood_tune_with(
    family: EvidenceFamily,
    data: &Dataset,
    n: usize,
    grid: &EvidenceGrid,
) -> Result<EvidenceResult> {
    if grid.alpha.is_empty() || grid.c.is_empty() || grid.sigma2.is_empty() {
        return Err(Error::param("evidence grid has an empty list"));
    }
    if family == EvidenceFamily::Dc && grid.rho.is_empty() {
        return Err(Error::param("evidence grid has no rho values"));
    }
    if grid.c.iter().chain(&grid.sigma2).any(|v| !(*v > 0.0)) {
        return Err(Error::param("evidence grid scales must be positive"));
    }
    let suff = Sufficient::new(data, n)?;
    let rhos = match family {
        EvidenceFamily::Tc => vec![0.0],
        EvidenceFamily::Dc => grid.rho.clone(),
    };
    let shapes: Vec<(f64, f64)> = grid
        .alpha
        .iter()
        .flat_map(|&a| rhos.iter().map(move |&r| (a, r)))
        .collect();
    let per_shape: Vec<std::result::Result<EvidenceTraceEntry, String>> = shapes
        .par_iter()
        .map(|&(alpha, rho)| {
            let shape = suff
                .shape(family, alpha, rho)
                .map_err(|e| format!("alpha={alpha} rho={rho}: {e}"))?;
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for &c in &grid.c {
                for &s2 in &grid.sigma2 {
                    let v = suff.objective(&shape, c, s2);
                    if v < best.0 {
                        best = (v, c, s2);
                    }
                }
            }
            Ok(EvidenceTraceEntry {
                spec: family.spec(best.1, alpha, rho, best.2),
                objective: best.0,
            })
        })
        .collect();
    let mut trace = Vec::new();
    let mut skipped = Vec::new();
    for r in per_shape {
        match r {
            Ok(t) if t.objective.is_finite() => trace.push(t),
            Ok(t) => skipped.push(format!("alpha={} rho={}: non-finite objective", t.spec.alpha, t.spec.rho)),
            Err(note) => skipped.push(note),
        }
    }
    let start = trace
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .cloned()
        .ok_or_else(|| Error::AllCandidatesFailed {
            candidates: shapes.len(),
            first: Box::new(Error::Singular(skipped.first().cloned().unwrap_or_default())),
        })?;

    let mut best = start.clone();
    if grid.refine_evaluations > 0 {
        let (a_lo, a_hi) = bounds(&grid.alpha);
        let (r_lo, r_hi) = if family == EvidenceFamily::Dc { bounds(&grid.rho) } else { (0.0, 0.0) };
        let (c_lo, c_hi) = bounds(&grid.c);
        let (s_lo, s_hi) = bounds(&grid.sigma2);
        let dc = family == EvidenceFamily::Dc;
        let unpack = |x: &[f64]| -> Option<KernelSpec> {
            let (alpha, lc, ls) = (x[0], x[1], x[2]);
            let rho = if dc { x[3] } else { 0.0 };
            let inside = (a_lo..=a_hi).contains(&alpha)
                && (c_lo.log10()..=c_hi.log10()).contains(&lc)
                && (s_lo.log10()..=s_hi.log10()).contains(&ls)
                && (r_lo..=r_hi).contains(&rho);
            inside.then(|| family.spec(10f64.powf(lc), alpha, rho, 10f64.powf(ls)))
        };
        let objective = |x: &[f64]| -> f64 {
            let Some(spec) = unpack(x) else {
                return f64::INFINITY;
            };
            match suff.shape(family, spec.alpha, spec.rho) {
                Ok(shape) => suff.objective(&shape, spec.c, spec.sigma2),
                Err(_) => f64::INFINITY,
            }
        };
        let mut x0 = vec![start.spec.alpha, start.spec.c.log10(), start.spec.sigma2.log10()];
        let step_a = if start.spec.alpha + 0.02 <= a_hi { 0.02 } else { -0.02 };
        let mut steps = vec![step_a, 0.25, 0.25];
        if dc {
            x0.push(start.spec.rho);
            steps.push(if start.spec.rho + 0.05 <= r_hi { 0.05 } else { -0.05 });
        }
        let opts = NelderMeadOptions {
            max_evaluations: grid.refine_evaluations,
            x_tolerance: 1e-5,
            f_tolerance: 1e-12,
        };
        let r = nelder_mead(objective, &x0, &steps, &opts);
        for (x, v) in r.history.iter().skip(1) {
            if *v < best.objective {
                if let Some(spec) = unpack(x) {
                    best = EvidenceTraceEntry { spec, objective: *v };
                    trace.push(best.clone());
                }
            }
        }
    }
    Ok(EvidenceResult {
        spec: best.spec,
        objective: best.objective,
        trace,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::simulate_fir;
    use crate::kernel::build_covariance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    /// Dense evidence straight from the definition.
    fn dense_objective(spec: &KernelSpec, data: &Dataset, n: usize) -> f64 {
        let phi = build_regressor(&data.u, n).unwrap();
        let p = build_covariance(spec, n).unwrap();
        let m = phi.matrix();
        let sigma = m * p.matrix() * m.transpose() + DMatrix::identity(data.len(), data.len()) * spec.sigma2;
        let ch = sigma.cholesky().unwrap();
        let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let y = DVector::from_column_slice(&data.y);
        logdet + y.dot(&ch.solve(&y))
    }

    fn prior_draw(seed: u64, alpha: f64, sigma2: f64, n: usize, len: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = build_covariance(&KernelSpec::tc(1.0, alpha, 1.0), n).unwrap();
        let l = p.matrix().clone().cholesky().unwrap().l();
        let z = DVector::from_fn(n, |_, _| normal(&mut rng));
        let g = l * z;
        let u: Vec<f64> = (0..len).map(|_| normal(&mut rng)).collect();
        let y = simulate_fir(g.as_slice(), &u)
            .into_iter()
            .map(|v| v + sigma2.sqrt() * normal(&mut rng))
            .collect();
        Dataset::new(u, y).unwrap()
    }

    #[test]
    fn reduced_objective_matches_dense_definition() {
        let data = prior_draw(1, 0.8, 0.01, 12, 40);
        for spec in [
            KernelSpec::tc(0.7, 0.8, 0.02),
            KernelSpec::dc(1.3, -0.4, 0.75, 0.5),
            KernelSpec::dc(0.2, 0.6, 0.9, 0.001),
        ] {
            let a = evidence_objective(&spec, &data, 12).unwrap();
            let b = dense_objective(&spec, &data, 12);
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn recovers_prior_decay() {
        let grid = EvidenceGrid {
            alpha: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            ..EvidenceGrid::default()
        };
        let mut hits = 0;
        for seed in 0..20 {
            let data = prior_draw(100 + seed, 0.8, 0.01, 50, 500);
            let r = marginal_likelihood_tune_with(EvidenceFamily::Tc, &data, 50, &grid).unwrap();
            if (0.7..=0.9).contains(&r.spec.alpha) {
                hits += 1;
            }
        }
        assert!(hits >= 16, "alpha recovered in {hits}/20 draws");
    }

    #[test]
    fn true_noise_level_beats_tenfold() {
        let mut diff = 0.0;
        for seed in 0..10 {
            let data = prior_draw(200 + seed, 0.8, 0.01, 30, 300);
            let at_truth = evidence_objective(&KernelSpec::tc(1.0, 0.8, 0.01), &data, 30).unwrap();
            let at_ten = evidence_objective(&KernelSpec::tc(1.0, 0.8, 0.1), &data, 30).unwrap();
            diff += at_ten - at_truth;
        }
        assert!(diff > 0.0);
    }

    #[test]
    fn noiseless_data_drives_noise_to_grid_floor() {
        let taps = [0.9, 0.5, 0.25, 0.1, 0.05];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Vec<f64> = (0..200).map(|_| normal(&mut rng)).collect();
        let y = simulate_fir(&taps, &u);
        let data = Dataset::new(u, y).unwrap();
        let grid = EvidenceGrid::default();
        let r = marginal_likelihood_tune_with(EvidenceFamily::Tc, &data, 10, &grid).unwrap();
        assert!((r.spec.sigma2 / grid.sigma2[0] - 1.0).abs() <= 1e-3, "{}", r.spec.sigma2);
    }

    #[test]
    fn result_attains_best_evaluated_objective() {
        let data = prior_draw(3, 0.7, 0.05, 20, 150);
        let grid = EvidenceGrid {
            alpha: vec![0.6, 0.8, 0.99],
            rho: vec![-0.5, 0.5],
            ..EvidenceGrid::default()
        };
        let r = marginal_likelihood_tune_with(EvidenceFamily::Dc, &data, 20, &grid).unwrap();
        assert!(r.trace.iter().all(|t| r.objective <= t.objective));
        assert_eq!(r.spec.family, KernelFamily::Dc);
    }

    #[test]
    fn singular_shapes_are_skipped() {
        let data = prior_draw(4, 0.8, 0.01, 10, 100);
        let grid = EvidenceGrid {
            alpha: vec![0.8, 1.0],
            refine_evaluations: 0,
            ..EvidenceGrid::default()
        };
        let r = marginal_likelihood_tune_with(EvidenceFamily::Tc, &data, 10, &grid).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.trace.len(), 1);
    }
}
