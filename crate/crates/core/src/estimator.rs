//! FIR regressor construction and the least-squares / regularised estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FilterMatrix, KernelSpec, RegularisationMatrix};
use crate::linalg::{lstsq_qr, max_abs, numerical_rank, solve_spd};
use crate::tuning::HyperparameterVector;

/// Column-relative pivot tolerance for the QR solves.
const QR_RANK_TOLERANCE: f64 = 1e-12;

/// Input-output record `{(u(t), y(t))}`, `t = 1..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    /// Seed of the input stream, when synthetic.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Standard deviation of the additive output noise.
    #[serde(default)]
    pub noise_sigma: f64,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let d = Self {
            u,
            y,
            seed: None,
            noise_sigma: 0.0,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_metadata(mut self, seed: Option<u64>, noise_sigma: f64) -> Self {
        self.seed = seed;
        self.noise_sigma = noise_sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.is_empty() {
            return Err(Error::param("dataset is empty"));
        }
        if self.u.len() != self.y.len() {
            return Err(Error::param(format!(
                "input has {} samples but output has {}",
                self.u.len(),
                self.y.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Samples `range` as a new record (metadata carried over).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            u: self.u[range.clone()].to_vec(),
            y: self.y[range].to_vec(),
            seed: self.seed,
            noise_sigma: self.noise_sigma,
        }
    }
}

/// `N × n` matrix with entry `(t, k) = u(t − k)`, zero initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorMatrix(DMatrix<f64>);

impl RegressorMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Model order (columns).
    pub fn order(&self) -> usize {
        self.0.ncols()
    }

    /// Sample count (rows).
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    /// Stacks row blocks built independently (each with its own zero initial conditions).
    pub fn stack(blocks: &[RegressorMatrix]) -> Result<Self> {
        let n = blocks
            .first()
            .map(|b| b.order())
            .ok_or_else(|| Error::param("nothing to stack"))?;
        if blocks.iter().any(|b| b.order() != n) {
            return Err(Error::param("regressor blocks have different orders"));
        }
        let rows: usize = blocks.iter().map(|b| b.rows()).sum();
        let mut m = DMatrix::zeros(rows, n);
        let mut at = 0;
        for b in blocks {
            m.rows_mut(at, b.rows()).copy_from(&b.0);
            at += b.rows();
        }
        Ok(Self(m))
    }

    /// The given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> RegressorMatrix {
        RegressorMatrix(self.0.select_rows(rows))
    }

    fn ensure_nonzero(&self) -> Result<()> {
        if max_abs(&self.0) == 0.0 {
            Err(Error::DegenerateInput)
        } else {
            Ok(())
        }
    }
}

pub fn build_regressor(u: &[f64], n: usize) -> Result<RegressorMatrix> {
    if n < 1 {
        return Err(Error::param("model order n must be at least 1"));
    }
    if u.is_empty() {
        return Err(Error::param("input sequence is empty"));
    }
    let rows = u.len();
    Ok(RegressorMatrix(DMatrix::from_fn(rows, n, |t, k| {
        if t >= k {
            u[t - k]
        } else {
            0.0
        }
    })))
}

/// `ŷ(t) = Σ_k θ_k u(t − k)` with zero initial conditions.
pub fn simulate_fir(theta: &[f64], u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|t| {
            theta
                .iter()
                .take(t + 1)
                .enumerate()
                .map(|(k, g)| g * u[t - k])
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ls,
    Tc,
    Dc,
    Filter,
    Tailored,
    /// Regularised with a caller-supplied `R`.
    Regularised,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Tc => "tc",
            Method::Dc => "dc",
            Method::Filter => "filter",
            Method::Tailored => "tailored",
            Method::Regularised => "regularised",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ls" => Ok(Method::Ls),
            "tc" => Ok(Method::Tc),
            "dc" => Ok(Method::Dc),
            "filter" => Ok(Method::Filter),
            "tailored" => Ok(Method::Tailored),
            other => Err(Error::param(format!(
                "unknown method `{other}` (expected ls, tc, dc, filter or tailored)"
            ))),
        }
    }
}

/// Hyperparameters an estimate was computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparameters {
    None,
    /// `R = σ²/c · R_kernel`.
    Kernel(KernelSpec),
    Filter(HyperparameterVector),
    /// Scalar scale on a caller-supplied penalty.
    Scale { lambda: f64 },
}

impl Hyperparameters {
    /// Compact `key=value` rendering for tabular reports.
    pub fn summary(&self) -> String {
        match self {
            Hyperparameters::None => String::new(),
            Hyperparameters::Kernel(k) => match k.family {
                crate::kernel::KernelFamily::Dc => format!(
                    "alpha={:e} rho={:e} scale={:e}",
                    k.alpha,
                    k.rho,
                    k.sigma2 / k.c
                ),
                _ => format!("alpha={:e} scale={:e}", k.alpha, k.sigma2 / k.c),
            },
            Hyperparameters::Filter(b) => b.summary(),
            Hyperparameters::Scale { lambda } => format!("lambda={lambda:e}"),
        }
    }
}

/// Estimated impulse response `g_0 … g_{n−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponseEstimate {
    pub theta: Vec<f64>,
    pub method: Method,
    pub hyperparameters: Hyperparameters,
}

impl ImpulseResponseEstimate {
    pub fn new(theta: Vec<f64>, method: Method, hyperparameters: Hyperparameters) -> Self {
        Self {
            theta,
            method,
            hyperparameters,
        }
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }

    pub fn tagged(mut self, method: Method, hyperparameters: Hyperparameters) -> Self {
        self.method = method;
        self.hyperparameters = hyperparameters;
        self
    }
}

fn check_rows(phi: &RegressorMatrix, y: &[f64]) -> Result<()> {
    if phi.rows() != y.len() {
        return Err(Error::param(format!(
            "regressor has {} rows but the output has {} samples",
            phi.rows(),
            y.len()
        )));
    }
    Ok(())
}

/// `θ̂ = argmin ‖Y − Φθ‖²`, solved by QR. Requires full column rank.
pub fn least_squares(phi: &RegressorMatrix, y: &[f64]) -> Result<ImpulseResponseEstimate> {
    check_rows(phi, y)?;
    phi.ensure_nonzero()?;
    let (rows, n) = (phi.rows(), phi.order());
    if rows < n {
        return Err(Error::RankDeficient {
            deficient: n - rows,
            columns: n,
        });
    }
    match lstsq_qr(phi.0.clone(), y, QR_RANK_TOLERANCE) {
        Ok(theta) => Ok(ImpulseResponseEstimate::new(theta, Method::Ls, Hyperparameters::None)),
        Err(Error::Singular(_)) => {
            let rank = numerical_rank(&phi.0).min(n - 1);
            Err(Error::RankDeficient {
                deficient: n - rank,
                columns: n,
            })
        }
        Err(e) => Err(e),
    }
}

/// `θ̂ = (ΦᵀΦ + R)⁻¹ ΦᵀY` by equilibrated Cholesky on the normal equations.
pub fn regularised_estimate(
    phi: &RegressorMatrix,
    y: &[f64],
    r: &RegularisationMatrix,
) -> Result<ImpulseResponseEstimate> {
    check_rows(phi, y)?;
    phi.ensure_nonzero()?;
    if r.n() != phi.order() {
        return Err(Error::param(format!(
            "R is {}x{} but the model order is {}",
            r.n(),
            r.n(),
            phi.order()
        )));
    }
    let (a, rhs) = normal_equations(phi, y);
    let theta = solve_spd(&(a + r.matrix()), &rhs).map_err(|e| match e {
        Error::NotPositiveDefinite { index, pivot, .. } => Error::Singular(format!(
            "ΦᵀΦ + R is not positive definite (pivot {index} = {pivot:e})"
        )),
        other => other,
    })?;
    Ok(ImpulseResponseEstimate::new(
        theta,
        Method::Regularised,
        Hyperparameters::None,
    ))
}

/// `ΦᵀΦ` and `ΦᵀY`.
pub fn normal_equations(phi: &RegressorMatrix, y: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let m = &phi.0;
    let gram = m.tr_mul(m);
    let rhs = m.tr_mul(&DVector::from_column_slice(y));
    (gram, rhs.iter().copied().collect())
}

/// `θ̂ = (ΦᵀΦ + λFᵀF)⁻¹ΦᵀY`, computed as the least-squares solution of the
/// stacked system `[Φ; √λ F] θ ≈ [Y; 0]` so `ΦᵀΦ` is never formed.
pub fn regularised_estimate_filter(
    phi: &RegressorMatrix,
    y: &[f64],
    f: &FilterMatrix,
    lambda: f64,
) -> Result<ImpulseResponseEstimate> {
    check_rows(phi, y)?;
    phi.ensure_nonzero()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(format!("lambda must be non-negative, got {lambda}")));
    }
    let (rows, n) = (phi.rows(), phi.order());
    if f.n() != n {
        return Err(Error::param(format!(
            "F is {}x{} but the model order is {n}",
            f.n(),
            f.n()
        )));
    }
    let mut stacked = DMatrix::zeros(rows + n, n);
    stacked.rows_mut(0, rows).copy_from(&phi.0);
    let s = lambda.sqrt();
    stacked.rows_mut(rows, n).copy_from(&(f.matrix() * s));
    let mut rhs = y.to_vec();
    rhs.resize(rows + n, 0.0);
    let theta = lstsq_qr(stacked, &rhs, QR_RANK_TOLERANCE)
        .map_err(|_| Error::Singular("ΦᵀΦ + λFᵀF is singular".into()))?;
    Ok(ImpulseResponseEstimate::new(
        theta,
        Method::Filter,
        Hyperparameters::Scale { lambda },
    ))
}

/// `‖Y − Φθ‖² + λ‖Fθ‖²`.
pub fn cost_value(
    theta: &[f64],
    phi: &RegressorMatrix,
    y: &[f64],
    f: &FilterMatrix,
    lambda: f64,
) -> Result<f64> {
    check_rows(phi, y)?;
    if theta.len() != phi.order() || f.n() != phi.order() {
        return Err(Error::param("theta, Φ and F dimensions disagree"));
    }
    let fit = residual_sum_of_squares(theta, phi, y);
    let penalty: f64 = f.apply(theta).iter().map(|v| v * v).sum();
    Ok(fit + lambda * penalty)
}

pub fn residual_sum_of_squares(theta: &[f64], phi: &RegressorMatrix, y: &[f64]) -> f64 {
    let pred = &phi.0 * DVector::from_column_slice(theta);
    pred.iter().zip(y).map(|(p, v)| (v - p).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_filter_factor_closed_form, build_regularisation_closed_form, Triangle};
    use crate::linalg::norm;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm(&d) / norm(b).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn impulse_regressor() {
        let phi = build_regressor(&[1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(
            phi.matrix(),
            &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn short_input_regressor_zero_pads() {
        let phi = build_regressor(&[2.0, 3.0], 3).unwrap();
        assert_eq!(
            phi.matrix(),
            &DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 3.0, 2.0, 0.0])
        );
        assert!(build_regressor(&[1.0], 0).is_err());
        assert!(build_regressor(&[], 2).is_err());
    }

    #[test]
    fn least_squares_on_impulse_returns_output() {
        let mut u = vec![0.0; 4];
        u[0] = 1.0;
        let phi = build_regressor(&u, 4).unwrap();
        let y = [0.3, -1.0, 2.5, 0.25];
        let est = least_squares(&phi, &y).unwrap();
        for (a, b) in est.theta.iter().zip(&y) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn least_squares_recovers_noiseless_truth() {
        let u = noise(60, 1);
        let truth = noise(8, 2);
        let y = simulate_fir(&truth, &u);
        let phi = build_regressor(&u, 8).unwrap();
        let est = least_squares(&phi, &y).unwrap();
        assert!(rel_diff(&est.theta, &truth) < 1e-8);
        // Residual gradient vanishes.
        let resid: Vec<f64> = y
            .iter()
            .zip(simulate_fir(&est.theta, &u))
            .map(|(a, b)| a - b)
            .collect();
        let grad = phi.matrix().tr_mul(&DVector::from_vec(resid));
        assert!(grad.norm() < 1e-10);
    }

    #[test]
    fn least_squares_rank_deficiency() {
        // Only the first two samples excite the regressor; columns 3.. are dependent.
        let u = [1.0, 1.0, 0.0, 0.0];
        let phi = build_regressor(&u, 3).unwrap();
        let y = [1.0, 2.0, 1.0, 0.0];
        assert!(least_squares(&phi, &y).is_ok());
        let phi = build_regressor(&[1.0, 2.0], 3).unwrap();
        match least_squares(&phi, &[1.0, 1.0]) {
            Err(Error::RankDeficient { deficient, columns }) => {
                assert_eq!((deficient, columns), (1, 3))
            }
            other => panic!("{other:?}"),
        }
        let u = [0.0, 0.0, 0.0, 0.0, 0.0];
        let phi = build_regressor(&u, 2).unwrap();
        assert!(matches!(least_squares(&phi, &[0.0; 5]), Err(Error::DegenerateInput)));
    }

    #[test]
    fn trailing_zero_columns_report_deficiency() {
        // Input that starts late leaves the last lag column empty.
        let u = vec![0.0, 0.0, 0.0, 1.0, 1.0];
        let phi = build_regressor(&u, 3).unwrap();
        match least_squares(&phi, &[0.0, 0.0, 0.0, 1.0, 2.0]) {
            Err(Error::RankDeficient { deficient, columns }) => {
                assert_eq!((deficient, columns), (1, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_penalty_equals_least_squares() {
        let u = noise(40, 3);
        let y = noise(40, 4);
        let phi = build_regressor(&u, 6).unwrap();
        let ls = least_squares(&phi, &y).unwrap();
        let zero = RegularisationMatrix::new(DMatrix::zeros(6, 6)).unwrap();
        let reg = regularised_estimate(&phi, &y, &zero).unwrap();
        assert!(rel_diff(&reg.theta, &ls.theta) < 1e-8);
        let f = build_filter_factor_closed_form(&KernelSpec::tc(1.0, 0.7, 1.0), 6).unwrap();
        let filt = regularised_estimate_filter(&phi, &y, &f, 0.0).unwrap();
        assert!(rel_diff(&filt.theta, &ls.theta) < 1e-8);
    }

    #[test]
    fn ridge_limit_shrinks_to_zero() {
        let u = noise(30, 5);
        let y = noise(30, 6);
        let phi = build_regressor(&u, 5).unwrap();
        let (_, rhs) = normal_equations(&phi, &y);
        for tau in [1e2, 1e4, 1e8] {
            let r = RegularisationMatrix::new(DMatrix::identity(5, 5) * tau).unwrap();
            let est = regularised_estimate(&phi, &y, &r).unwrap();
            assert!(norm(&est.theta) <= norm(&rhs) / tau * (1.0 + 1e-12));
        }
    }

    #[test]
    fn small_instance_matches_dense_solve() {
        // n = 3, N = 5: independent LU solve of the normal equations.
        let u = [0.5, -1.0, 2.0, 0.25, -0.75];
        let y = [1.0, 0.0, -2.0, 0.5, 0.3];
        let phi = build_regressor(&u, 3).unwrap();
        let r = RegularisationMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, -0.5, 0.0, -0.5, 1.5, 0.2, 0.0, 0.2, 1.0],
        ))
        .unwrap();
        let a = DMatrix::from_fn(3, 3, |i, j| {
            (0..5).map(|t| phi.matrix()[(t, i)] * phi.matrix()[(t, j)]).sum::<f64>() + r.matrix()[(i, j)]
        });
        let b = DVector::from_fn(3, |i, _| (0..5).map(|t| phi.matrix()[(t, i)] * y[t]).sum::<f64>());
        let oracle = a.lu().solve(&b).unwrap();
        let est = regularised_estimate(&phi, &y, &r).unwrap();
        for (x, o) in est.theta.iter().zip(oracle.iter()) {
            assert_relative_eq!(x, o, epsilon = 1e-10);
        }
    }

    #[test]
    fn random_filter_matches_dense_solve() {
        let u = noise(9, 7);
        let y = noise(9, 8);
        let n = 4;
        let phi = build_regressor(&u, n).unwrap();
        let vals = noise(16, 9);
        let fm = DMatrix::from_fn(n, n, |i, j| if j >= i { vals[i * n + j] + if i == j { 2.0 } else { 0.0 } } else { 0.0 });
        let f = FilterMatrix::from_dense(fm.clone(), Triangle::Upper).unwrap();
        let a = phi.matrix().transpose() * phi.matrix() + fm.transpose() * &fm;
        let b = phi.matrix().transpose() * DVector::from_column_slice(&y);
        let oracle = a.lu().solve(&b).unwrap();
        let est = regularised_estimate_filter(&phi, &y, &f, 1.0).unwrap();
        for (x, o) in est.theta.iter().zip(oracle.iter()) {
            assert_relative_eq!(x, o, epsilon = 1e-10);
        }
    }

    #[test]
    fn tc_filter_path_matches_kernel_path() {
        let n = 20;
        let u = noise(80, 10);
        let y = noise(80, 11);
        let phi = build_regressor(&u, n).unwrap();
        let (c, sigma2) = (0.5, 0.02);
        let spec = KernelSpec::tc(c, 0.8, sigma2);
        let r = build_regularisation_closed_form(&spec, n).unwrap();
        let unit = build_filter_factor_closed_form(&KernelSpec::tc(1.0, 0.8, 1.0), n).unwrap();
        let via_r = regularised_estimate(&phi, &y, &r).unwrap();
        let via_f = regularised_estimate_filter(&phi, &y, &unit, sigma2 / c).unwrap();
        assert!(rel_diff(&via_f.theta, &via_r.theta) < 1e-8);
    }

    #[test]
    fn cost_value_identities() {
        let n = 5;
        let u = noise(25, 12);
        let y = noise(25, 13);
        let phi = build_regressor(&u, n).unwrap();
        let f = build_filter_factor_closed_form(&KernelSpec::dc(1.0, 0.5, 0.8, 1.0), n).unwrap();
        let zero = vec![0.0; n];
        let yy: f64 = y.iter().map(|v| v * v).sum();
        assert_relative_eq!(cost_value(&zero, &phi, &y, &f, 3.0).unwrap(), yy, max_relative = 1e-14);
        let ls = least_squares(&phi, &y).unwrap();
        let rss = residual_sum_of_squares(&ls.theta, &phi, &y);
        assert_relative_eq!(cost_value(&ls.theta, &phi, &y, &f, 0.0).unwrap(), rss, max_relative = 1e-14);
    }

    #[test]
    fn regularised_solution_is_a_local_minimum() {
        let n = 6;
        let u = noise(30, 14);
        let y = noise(30, 15);
        let phi = build_regressor(&u, n).unwrap();
        let f = build_filter_factor_closed_form(&KernelSpec::tc(1.0, 0.9, 1.0), n).unwrap();
        let lambda = 0.7;
        let est = regularised_estimate_filter(&phi, &y, &f, lambda).unwrap();
        let best = cost_value(&est.theta, &phi, &y, &f, lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..100 {
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = 1e-3 / norm(&d);
            let probe: Vec<f64> = est.theta.iter().zip(&d).map(|(t, v)| t + s * v).collect();
            assert!(best <= cost_value(&probe, &phi, &y, &f, lambda).unwrap());
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        let phi = build_regressor(&[1.0, 2.0, 3.0], 2).unwrap();
        let f = build_filter_factor_closed_form(&KernelSpec::decay(0.9, 1.0), 2).unwrap();
        assert!(regularised_estimate_filter(&phi, &[1.0, 1.0, 1.0], &f, -1.0).is_err());
    }

    #[test]
    fn regularisation_allows_short_records() {
        let n = 10;
        let u = noise(4, 17);
        let y = noise(4, 18);
        let phi = build_regressor(&u, n).unwrap();
        let f = build_filter_factor_closed_form(&KernelSpec::tc(1.0, 0.8, 1.0), n).unwrap();
        assert!(least_squares(&phi, &y).is_err());
        assert_eq!(regularised_estimate_filter(&phi, &y, &f, 1.0).unwrap().theta.len(), n);
    }

    #[test]
    fn simulate_matches_regressor_product() {
        let u = noise(15, 19);
        let theta = noise(4, 20);
        let phi = build_regressor(&u, 4).unwrap();
        let direct = phi.matrix() * DVector::from_column_slice(&theta);
        for (a, b) in simulate_fir(&theta, &u).iter().zip(direct.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }
}
