use nalgebra::{DMatrix, DVector};

use super::HyperparameterVector;
use crate::design::regularisation_gram;
use crate::error::{Error, Result};
use crate::estimator::{
    build_regressor, normal_equations, regularised_estimate, regularised_estimate_filter, Dataset,
    RegressorMatrix,
};
use crate::kernel::{build_regularisation_closed_form, KernelSpec};
use crate::linalg::solve_spd;

/// Training and validation sample indices (0-based) of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// `k` contiguous validation blocks covering `0..N`; the first `N mod k`
/// blocks hold one extra sample.
pub fn kfold_split(n_samples: usize, k: usize) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::param(format!("need at least 2 folds, got {k}")));
    }
    if k > n_samples {
        return Err(Error::param(format!(
            "cannot split {n_samples} samples into {k} folds"
        )));
    }
    let (base, extra) = (n_samples / k, n_samples % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let end = start + base + usize::from(j < extra);
        folds.push(Fold {
            train: (0..start).chain(end..n_samples).collect(),
            validation: (start..end).collect(),
        });
        start = end;
    }
    Ok(folds)
}

/// Rows of the full-record regressor, so held-out predictions use the
/// actual past inputs across fold boundaries.
fn fold_system(phi: &RegressorMatrix, y: &[f64], indices: &[usize]) -> (RegressorMatrix, Vec<f64>) {
    (phi.select_rows(indices), indices.iter().map(|&i| y[i]).collect())
}

fn mse(phi: &RegressorMatrix, y: &[f64], theta: &[f64]) -> f64 {
    let pred = phi.matrix() * DVector::from_column_slice(theta);
    pred.iter().zip(y).map(|(p, v)| (v - p).powi(2)).sum::<f64>() / y.len() as f64
}

fn check_sizes(data: &Dataset, folds: &[Fold], n: usize) -> Result<()> {
    data.validate()?;
    if let Some(f) = folds.iter().find(|f| f.train.len() <= n) {
        return Err(Error::param(format!(
            "model order n = {n} needs more than {} training samples per fold",
            f.train.len()
        )));
    }
    Ok(())
}

fn fold_err(fold: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Fold {
        fold,
        source: Box::new(e),
    }
}

/// Mean held-out MSE of the filter-regularised estimate over `k` contiguous folds.
pub fn cv_score(beta: &HyperparameterVector, data: &Dataset, n: usize, k: usize) -> Result<f64> {
    beta.validate()?;
    let folds = kfold_split(data.len(), k)?;
    check_sizes(data, &folds, n)?;
    let f = beta.filter_matrix(n)?;
    let phi = build_regressor(&data.u, n)?;
    let mut total = 0.0;
    for (j, fold) in folds.iter().enumerate() {
        let (phi_t, y_t) = fold_system(&phi, &data.y, &fold.train);
        let est = regularised_estimate_filter(&phi_t, &y_t, &f, beta.lambda).map_err(fold_err(j))?;
        let (phi_v, y_v) = fold_system(&phi, &data.y, &fold.validation);
        total += mse(&phi_v, &y_v, &est.theta);
    }
    Ok(total / k as f64)
}

/// Mean held-out MSE of the kernel-regularised estimate with `R = σ² P⁻¹`.
pub fn kernel_cv_score(spec: &KernelSpec, data: &Dataset, n: usize, k: usize) -> Result<f64> {
    let folds = kfold_split(data.len(), k)?;
    check_sizes(data, &folds, n)?;
    let r = build_regularisation_closed_form(spec, n)?;
    let phi = build_regressor(&data.u, n)?;
    let mut total = 0.0;
    for (j, fold) in folds.iter().enumerate() {
        let (phi_t, y_t) = fold_system(&phi, &data.y, &fold.train);
        let est = regularised_estimate(&phi_t, &y_t, &r).map_err(fold_err(j))?;
        let (phi_v, y_v) = fold_system(&phi, &data.y, &fold.validation);
        total += mse(&phi_v, &y_v, &est.theta);
    }
    Ok(total / k as f64)
}

struct FoldSystem {
    gram: DMatrix<f64>,
    rhs: Vec<f64>,
    phi_v: RegressorMatrix,
    y_v: Vec<f64>,
}

/// Per-fold normal equations cached for repeated scoring. Each candidate
/// costs one equilibrated Cholesky solve per fold.
pub struct CvProblem {
    n: usize,
    folds: Vec<FoldSystem>,
}

impl CvProblem {
    pub fn new(data: &Dataset, n: usize, k: usize) -> Result<Self> {
        let folds = kfold_split(data.len(), k)?;
        check_sizes(data, &folds, n)?;
        let phi = build_regressor(&data.u, n)?;
        let folds: Vec<FoldSystem> = folds
            .iter()
            .map(|fold| {
                let (phi_t, y_t) = fold_system(&phi, &data.y, &fold.train);
                let (gram, rhs) = normal_equations(&phi_t, &y_t);
                let (phi_v, y_v) = fold_system(&phi, &data.y, &fold.validation);
                FoldSystem {
                    gram,
                    rhs,
                    phi_v,
                    y_v,
                }
            })
            .collect();
        if folds.iter().all(|f| f.gram.iter().all(|v| *v == 0.0)) {
            return Err(Error::DegenerateInput);
        }
        Ok(Self { n, folds })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn folds(&self) -> usize {
        self.folds.len()
    }

    /// CV score with penalty matrix `R` (so each fold solves `(ΦᵀΦ + R) θ = ΦᵀY`).
    pub fn score_penalty(&self, penalty: &DMatrix<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (j, f) in self.folds.iter().enumerate() {
            let theta = solve_spd(&(&f.gram + penalty), &f.rhs).map_err(fold_err(j))?;
            total += mse(&f.phi_v, &f.y_v, &theta);
        }
        Ok(total / self.folds.len() as f64)
    }

    pub fn score(&self, beta: &HyperparameterVector) -> Result<f64> {
        beta.validate()?;
        let g = regularisation_gram(&beta.fir()?, self.n, beta.alpha, 1.0)?;
        self.score_penalty(&(g * beta.lambda))
    }

    pub fn score_kernel(&self, spec: &KernelSpec) -> Result<f64> {
        let r = build_regularisation_closed_form(spec, self.n)?;
        self.score_penalty(r.matrix())
    }
}
