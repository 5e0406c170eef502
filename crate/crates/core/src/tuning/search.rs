use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::CvProblem;
use super::evidence::EvidenceFamily;
use super::{baseline_kernel, GridSpec, HyperparameterVector, TraceEntry, TuningResult};
use crate::design::{regularisation_gram, BandKind};
use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::kernel::{build_regularisation_closed_form, KernelFamily, KernelSpec};

fn collect_outcomes<T: Clone>(
    outcomes: Vec<(T, Result<f64>)>,
) -> Result<(Vec<(T, f64)>, usize)> {
    let total = outcomes.len();
    let mut ok = Vec::with_capacity(total);
    let mut first_err = None;
    let mut failures = 0;
    for (c, r) in outcomes {
        match r {
            Ok(v) if v.is_finite() => ok.push((c, v)),
            Ok(v) => {
                failures += 1;
                first_err.get_or_insert(Error::Singular(format!("non-finite CV score {v}")));
            }
            Err(e) => {
                failures += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::AllCandidatesFailed {
            candidates: total,
            first: Box::new(first_err.unwrap_or_else(|| Error::param("empty grid"))),
        });
    }
    Ok((ok, failures))
}

/// Index of the first strict minimum in an already canonically sorted trace.
fn first_min(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Exhaustive k-fold CV over the grid's filter candidates.
///
/// The trace is sorted canonically (λ, p, band width, f1, α, kind) and the
/// winner is the first candidate attaining the minimum, so ties go to the
/// smaller λ, then the smaller p, then the narrower band.
pub fn grid_search(grid: &GridSpec, data: &Dataset, n: usize, k: usize) -> Result<TuningResult> {
    grid.validate()?;
    let candidates = grid.candidates(n);
    if candidates.is_empty() {
        return Err(Error::param(format!(
            "grid has no realisable filter candidates for n = {n}"
        )));
    }
    let problem = CvProblem::new(data, n, k)?;
    grid_search_with(&problem, candidates)
}

/// Grid search over explicit candidates on a prepared CV problem.
pub(crate) fn grid_search_with(
    problem: &CvProblem,
    candidates: Vec<HyperparameterVector>,
) -> Result<TuningResult> {
    // Candidates sharing (p, band, α) share one unit-λ penalty.
    let mut groups: Vec<Vec<HyperparameterVector>> = Vec::new();
    for c in candidates {
        match groups.last_mut() {
            Some(g)
                if g[0].p == c.p
                    && g[0].f1 == c.f1
                    && g[0].f2 == c.f2
                    && g[0].alpha == c.alpha
                    && g[0].band_kind == c.band_kind
                    && g[0].tailored_edges == c.tailored_edges =>
            {
                g.push(c)
            }
            _ => groups.push(vec![c]),
        }
    }
    let outcomes: Vec<(HyperparameterVector, Result<f64>)> = groups
        .into_par_iter()
        .flat_map_iter(|group| {
            let head = &group[0];
            let unit = head
                .validate()
                .and_then(|_| head.fir())
                .and_then(|fir| regularisation_gram(&fir, problem.order(), head.alpha, 1.0));
            group
                .into_iter()
                .map(|b| {
                    let r = match &unit {
                        Ok(g) => b.validate().and_then(|_| problem.score_penalty(&(g * b.lambda))),
                        Err(e) => Err(Error::Design(e.to_string())),
                    };
                    (b, r)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (ok, failures) = collect_outcomes(outcomes)?;
    let mut trace: Vec<TraceEntry> = ok
        .into_iter()
        .map(|(beta, cv_mse)| TraceEntry { beta, cv_mse })
        .collect();
    trace.sort_by(|a, b| a.beta.canonical_cmp(&b.beta));
    let i = first_min(trace.iter().map(|t| t.cv_mse));
    Ok(TuningResult {
        best: trace[i].beta.clone(),
        cv_mse: trace[i].cv_mse,
        trace,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when every vertex is within this distance of the best (per coordinate).
    pub x_tolerance: f64,
    /// Stop when the value spread falls below this (relative to the best value).
    pub f_tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 120,
            x_tolerance: 1e-4,
            f_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best point after each iteration that improved on the previous best.
    pub history: Vec<(Vec<f64>, f64)>,
}

/// Derivative-free simplex descent from `x0` with initial edge lengths
/// `steps`. Non-finite objective values count as `+∞`, so infeasible points
/// can be rejected by returning NaN or infinity. The result is never worse
/// than `x0`.
pub fn nelder_mead(
    mut objective: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    options: &NelderMeadOptions,
) -> SimplexResult {
    let dim = x0.len();
    let evaluations = std::cell::Cell::new(0usize);
    let mut eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(x0);
    let mut history = vec![(x0.to_vec(), f0)];
    if dim == 0 {
        return SimplexResult {
            x: x0.to_vec(),
            value: f0,
            evaluations: 1,
            history,
        };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let v = eval(&x);
        simplex.push((x, v));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    loop {
        // Stable sort keeps the earlier (start) vertex first on ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        if best < history.last().unwrap().1 {
            history.push(simplex[0].clone());
        }
        let worst = simplex[dim].1;
        let spread_ok = (worst - best).abs() <= options.f_tolerance * best.abs().max(1e-300);
        let size_ok = simplex[1..].iter().all(|(x, _)| {
            x.iter()
                .zip(&simplex[0].0)
                .all(|(a, b)| (a - b).abs() <= options.x_tolerance)
        });
        if (spread_ok && size_ok) || evaluations.get() >= options.max_evaluations {
            break;
        }
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let worst_x = simplex[dim].0.clone();
        let xr = combine(&centroid, &worst_x, -1.0);
        let fr = eval(&xr);
        if fr < best {
            let xe = combine(&centroid, &worst_x, -2.0);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = combine(&centroid, &xr, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = combine(&centroid, &worst_x, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(worst) {
                simplex[dim] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = combine(&x_best, &vertex.0, 0.5);
                    let v = eval(&x);
                    *vertex = (x, v);
                }
            }
        }
    }
    let (x, value) = history.last().unwrap().clone();
    SimplexResult {
        x,
        value,
        evaluations: evaluations.get(),
        history,
    }
}

/// Continuous coordinates of β that the local search moves, with λ on a
/// log10 scale. `p`, the band kind and tailored edges stay fixed.
struct Coordinates {
    free_f1: bool,
    free_f2: bool,
    free_lambda: bool,
}

impl Coordinates {
    fn for_start(start: &HyperparameterVector) -> Self {
        let (free_f1, free_f2) = match start.band_kind {
            BandKind::BandStop => (true, true),
            BandKind::HighPass => (false, true),
            BandKind::LowPass => (true, false),
            _ => (false, false),
        };
        Self {
            free_f1,
            free_f2,
            free_lambda: start.lambda > 0.0,
        }
    }

    fn pack(&self, b: &HyperparameterVector) -> (Vec<f64>, Vec<f64>) {
        let (mut x, mut steps) = (Vec::new(), Vec::new());
        if self.free_f1 {
            x.push(b.f1);
            steps.push(if b.f1 + 0.02 < b.f2 { 0.02 } else { -0.02 });
        }
        if self.free_f2 {
            x.push(b.f2);
            steps.push(if b.f2 + 0.02 < 0.5 { 0.02 } else { -0.02 });
        }
        x.push(b.alpha);
        steps.push(if b.alpha + 0.03 <= 1.0 { 0.03 } else { -0.03 });
        if self.free_lambda {
            x.push(b.lambda.log10());
            steps.push(0.5);
        }
        (x, steps)
    }

    fn unpack(&self, start: &HyperparameterVector, x: &[f64]) -> HyperparameterVector {
        let mut b = start.clone();
        let mut it = x.iter();
        if self.free_f1 {
            b.f1 = *it.next().unwrap();
        }
        if self.free_f2 {
            b.f2 = *it.next().unwrap();
        }
        b.alpha = *it.next().unwrap();
        if self.free_lambda {
            b.lambda = 10f64.powf(*it.next().unwrap());
        }
        b
    }
}

/// Simplex refinement of `(f1, f2, α, log λ)` from `start`, with `p` fixed.
pub fn refine_local(start: &HyperparameterVector, data: &Dataset, n: usize, k: usize) -> Result<TuningResult> {
    let problem = CvProblem::new(data, n, k)?;
    refine_local_with(&problem, start, &NelderMeadOptions::default())
}

pub(crate) fn refine_local_with(
    problem: &CvProblem,
    start: &HyperparameterVector,
    options: &NelderMeadOptions,
) -> Result<TuningResult> {
    start.validate()?;
    let start_score = problem.score(start)?;
    let coords = Coordinates::for_start(start);
    let (x0, steps) = coords.pack(start);
    let objective = |x: &[f64]| -> f64 {
        let b = coords.unpack(start, x);
        if !b.lambda.is_finite() {
            return f64::INFINITY;
        }
        problem.score(&b).unwrap_or(f64::INFINITY)
    };
    let result = nelder_mead(objective, &x0, &steps, options);
    let mut trace = vec![TraceEntry {
        beta: start.clone(),
        cv_mse: start_score,
    }];
    for (x, v) in result.history.iter().skip(1) {
        if *v < trace.last().unwrap().cv_mse {
            trace.push(TraceEntry {
                beta: coords.unpack(start, x),
                cv_mse: *v,
            });
        }
    }
    let last = trace.last().unwrap().clone();
    Ok(TuningResult {
        best: last.beta,
        cv_mse: last.cv_mse,
        trace,
        failures: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTraceEntry {
    pub spec: KernelSpec,
    pub cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTuningResult {
    pub spec: KernelSpec,
    pub cv_mse: f64,
    pub trace: Vec<KernelTraceEntry>,
    pub failures: usize,
}

fn kernel_cmp(a: &KernelSpec, b: &KernelSpec) -> std::cmp::Ordering {
    (a.sigma2 / a.c)
        .total_cmp(&(b.sigma2 / b.c))
        .then(a.alpha.total_cmp(&b.alpha))
        .then(a.rho.total_cmp(&b.rho))
}

/// CV grid search for the TC or DC baseline with `R = λ·R_kernel(c = σ² = 1)`
/// over `kernel_alpha × (kernel_rho) × kernel_lambda`. Ties go to the smaller λ.
pub fn tune_kernel_cv(
    family: EvidenceFamily,
    grid: &GridSpec,
    data: &Dataset,
    n: usize,
    k: usize,
) -> Result<KernelTuningResult> {
    grid.validate()?;
    let problem = CvProblem::new(data, n, k)?;
    tune_kernel_cv_with(&problem, family, grid)
}

pub(crate) fn tune_kernel_cv_with(
    problem: &CvProblem,
    family: EvidenceFamily,
    grid: &GridSpec,
) -> Result<KernelTuningResult> {
    let rhos: Vec<f64> = match family {
        EvidenceFamily::Tc => vec![f64::NAN],
        EvidenceFamily::Dc => grid.kernel_rho.clone(),
    };
    let lambdas: Vec<f64> = grid.kernel_lambda.iter().copied().filter(|l| *l > 0.0).collect();
    if grid.kernel_alpha.is_empty() || rhos.is_empty() || lambdas.is_empty() {
        return Err(Error::param("kernel grid has no candidates"));
    }
    let shapes: Vec<(f64, f64)> = grid
        .kernel_alpha
        .iter()
        .flat_map(|&a| rhos.iter().map(move |&r| (a, r)))
        .collect();
    let outcomes: Vec<(KernelSpec, Result<f64>)> = shapes
        .into_par_iter()
        .flat_map_iter(|(alpha, rho)| {
            let unit_spec = baseline_kernel(family, alpha, rho, 1.0);
            let unit = build_regularisation_closed_form(&unit_spec, problem.order());
            lambdas
                .iter()
                .map(|&lambda| {
                    let spec = baseline_kernel(family, alpha, rho, lambda);
                    let r = match &unit {
                        Ok(r) => problem.score_penalty(&(r.matrix() * lambda)),
                        Err(e) => Err(Error::Design(e.to_string())),
                    };
                    (spec, r)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (ok, failures) = collect_outcomes(outcomes)?;
    let mut trace: Vec<KernelTraceEntry> = ok
        .into_iter()
        .map(|(spec, cv_mse)| KernelTraceEntry { spec, cv_mse })
        .collect();
    trace.sort_by(|a, b| kernel_cmp(&a.spec, &b.spec));
    let i = first_min(trace.iter().map(|t| t.cv_mse));
    debug_assert!(matches!(trace[i].spec.family, KernelFamily::Tc | KernelFamily::Dc));
    Ok(KernelTuningResult {
        spec: trace[i].spec,
        cv_mse: trace[i].cv_mse,
        trace,
        failures,
    })
}
