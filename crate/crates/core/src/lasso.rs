//! Weighted lasso by cyclic coordinate descent with per-feature penalty
//! factors, regularization paths, and K-fold cross-validation.
//!
//! The solver minimizes, over `(b0, beta)` and on the matrix it is given,
//!
//! ```text
//! (1/2n) * sum_i w_i (y_i - b0 - x_i' beta)^2 + lambda * sum_j f_j |beta_j|
//! ```
//!
//! with the intercept unpenalized. A penalty factor of `+inf` excludes the
//! feature outright. [`fit_weighted_lasso`] operates on the raw matrix;
//! [`cv_weighted_lasso`] standardizes columns internally (then applies the
//! factors), selects `lambda` by out-of-fold weighted squared error, and maps
//! the final refit back to the original column scale.

use crate::data::{standardize_columns, FoldAssignment};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// Per-feature penalty factors plus the pretraining metadata that produced
/// them. Factors are nonnegative; `+inf` means the feature is excluded.
/// Protected features always carry factor 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub factors: Array1<f64>,
    pub alpha_strength: f64,
    pub protected: Vec<bool>,
}

impl PenaltySpec {
    /// All factors 1 (plain lasso).
    pub fn uniform(p: usize) -> Self {
        Self {
            factors: Array1::ones(p),
            alpha_strength: 1.0,
            protected: vec![false; p],
        }
    }

    pub fn with_factors(factors: Array1<f64>, protected: Vec<bool>) -> Result<Self> {
        if factors.len() != protected.len() {
            return Err(Error::DimensionMismatch("factors/protected length".into()));
        }
        if factors.iter().any(|f| f.is_nan() || *f < 0.0) {
            return Err(Error::InvalidArgument("penalty factors must be >= 0".into()));
        }
        for (j, (&f, &prot)) in factors.iter().zip(protected.iter()).enumerate() {
            if prot && f != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "protected feature {j} must have penalty factor 1, got {f}"
                )));
            }
        }
        let max_finite = factors.iter().copied().filter(|f| f.is_finite()).fold(1.0f64, f64::max);
        Ok(Self {
            factors,
            alpha_strength: (1.0 / max_finite).clamp(f64::MIN_POSITIVE, 1.0),
            protected,
        })
    }

    pub fn p(&self) -> usize {
        self.factors.len()
    }

    pub fn excluded(&self, j: usize) -> bool {
        self.factors[j].is_infinite()
    }
}

/// A single penalized fit. Coefficients are reported on the scale of the
/// matrix the fit was given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    pub active_set: Vec<usize>,
    pub lambda: f64,
    pub objective_value: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Per-sweep objective values when tracing was requested.
    pub objective_trace: Option<Vec<f64>>,
}

impl FitResult {
    pub fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        let mut out = Array1::from_elem(x.nrows(), self.intercept);
        for &j in &self.active_set {
            let b = self.coefficients[j];
            for (o, v) in out.iter_mut().zip(x.column(j).iter()) {
                *o += b * v;
            }
        }
        out
    }
}

/// Cross-validation curve over a descending lambda grid.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_min: f64,
    /// Refit on all rows at `lambda_min`, on the original column scale.
    pub fit_at_min: FitResult,
    /// The same refit on the internally standardized columns; residuals agree
    /// with `fit_at_min`, and stationarity checks apply to this one.
    pub fit_standardized: FitResult,
    /// Folds where iteratively reweighted fitting diverged and the curve was
    /// truncated toward heavier penalties (logistic path only).
    pub n_divergent_folds: usize,
}

#[derive(Debug, Clone)]
pub struct LassoOptions {
    /// Convergence threshold on `max_j |delta beta_j| * sqrt(a_j)` per sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Clamp coefficients at zero from below (sign-constrained stage of the
    /// univariate-guided lasso).
    pub nonnegative: bool,
    /// Record the objective after every sweep (test instrumentation).
    pub trace_objective: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 1000,
            nonnegative: false,
            trace_objective: false,
        }
    }
}

/// Grid geometry for [`lambda_path`] / [`cv_weighted_lasso`]. Defaults follow
/// the n > p vs p >= n convention.
#[derive(Debug, Clone, Copy)]
pub struct PathSpec {
    pub n_lambda: usize,
    pub ratio: f64,
}

impl PathSpec {
    pub fn default_for(n: usize, p: usize) -> Self {
        Self {
            n_lambda: 100,
            ratio: if n > p { 0.01 } else { 0.05 },
        }
    }
}

/// `sign(z) * max(|z| - gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Coordinate-descent engine
// ---------------------------------------------------------------------------

/// Column-contiguous problem data reused across a lambda path.
pub(crate) struct CdProblem {
    pub n: usize,
    pub p: usize,
    cols: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    w_sum: f64,
    /// a_j = (1/n) sum_i w_i x_ij^2
    a: Vec<f64>,
    factors: Vec<f64>,
    eligible: Vec<usize>,
    nonnegative: bool,
    tol: f64,
    max_sweeps: usize,
}

/// Warm-startable solver state: coefficients and the running residual.
pub(crate) struct CdState {
    pub beta: Vec<f64>,
    pub intercept: f64,
    resid: Vec<f64>,
    active: Vec<usize>,
    is_active: Vec<bool>,
}

impl CdProblem {
    pub fn new(
        x: &Array2<f64>,
        y: &Array1<f64>,
        obs_weights: &Array1<f64>,
        penalty: &PenaltySpec,
        options: &LassoOptions,
    ) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if y.len() != n || obs_weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "x is {n}x{p}, y has {}, weights have {}",
                y.len(),
                obs_weights.len()
            )));
        }
        if penalty.p() != p {
            return Err(Error::DimensionMismatch("penalty factors length != p".into()));
        }
        if x.iter().any(|v| !v.is_finite())
            || y.iter().any(|v| !v.is_finite())
            || obs_weights.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("design, response, and weights must be finite".into()));
        }
        if obs_weights.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("observation weights must be >= 0".into()));
        }
        let w_sum: f64 = obs_weights.sum();
        if w_sum <= 0.0 {
            return Err(Error::Degenerate("observation weights sum to zero".into()));
        }
        let w: Vec<f64> = obs_weights.to_vec();
        let mut cols = Vec::with_capacity(p);
        let mut a = vec![0.0; p];
        for j in 0..p {
            let col: Vec<f64> = x.column(j).to_vec();
            a[j] = col.iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>() / n as f64;
            cols.push(col);
        }
        let eligible: Vec<usize> = (0..p).filter(|&j| penalty.factors[j].is_finite()).collect();
        Ok(Self {
            n,
            p,
            cols,
            w,
            y: y.to_vec(),
            w_sum,
            a,
            factors: penalty.factors.to_vec(),
            eligible,
            nonnegative: options.nonnegative,
            tol: options.tol,
            max_sweeps: options.max_sweeps,
        })
    }

    pub fn cold_state(&self) -> CdState {
        CdState {
            beta: vec![0.0; self.p],
            intercept: 0.0,
            resid: self.y.clone(),
            active: Vec::new(),
            is_active: vec![false; self.p],
        }
    }

    #[inline]
    fn gradient(&self, j: usize, resid: &[f64]) -> f64 {
        let col = &self.cols[j];
        let mut g = 0.0;
        for i in 0..self.n {
            g += self.w[i] * col[i] * resid[i];
        }
        g / self.n as f64
    }

    #[inline]
    fn update_coordinate(&self, j: usize, lambda: f64, state: &mut CdState) -> f64 {
        let aj = self.a[j];
        if aj <= 0.0 {
            return 0.0;
        }
        let old = state.beta[j];
        let rho = self.gradient(j, &state.resid) + aj * old;
        let gamma = lambda * self.factors[j];
        let new = if self.nonnegative {
            if rho > gamma {
                (rho - gamma) / aj
            } else {
                0.0
            }
        } else {
            soft_threshold(rho, gamma) / aj
        };
        let delta = new - old;
        if delta != 0.0 {
            let col = &self.cols[j];
            for i in 0..self.n {
                state.resid[i] -= delta * col[i];
            }
            state.beta[j] = new;
            if new != 0.0 && !state.is_active[j] {
                state.is_active[j] = true;
                state.active.push(j);
            }
        }
        delta.abs() * aj.sqrt()
    }

    #[inline]
    fn update_intercept(&self, state: &mut CdState) -> f64 {
        let mut wr = 0.0;
        for i in 0..self.n {
            wr += self.w[i] * state.resid[i];
        }
        let delta = wr / self.w_sum;
        if delta != 0.0 {
            state.intercept += delta;
            for r in state.resid.iter_mut() {
                *r -= delta;
            }
        }
        delta.abs() * (self.w_sum / self.n as f64).sqrt()
    }

    pub fn objective(&self, lambda: f64, state: &CdState) -> f64 {
        let mut rss = 0.0;
        for i in 0..self.n {
            rss += self.w[i] * state.resid[i] * state.resid[i];
        }
        let mut pen = 0.0;
        for &j in &self.eligible {
            pen += self.factors[j] * state.beta[j].abs();
        }
        rss / (2.0 * self.n as f64) + lambda * pen
    }

    /// Solve at `lambda` from the current state. Returns `(converged, sweeps,
    /// trace)`; convergence requires a full sweep whose largest scaled
    /// coefficient move is below tolerance, which doubles as a stationarity
    /// certificate.
    pub fn fit_at(
        &self,
        lambda: f64,
        state: &mut CdState,
        trace_objective: bool,
    ) -> (bool, usize, Option<Vec<f64>>) {
        let mut sweeps = 0usize;
        let mut trace = if trace_objective { Some(Vec::new()) } else { None };
        let mut converged = false;
        while sweeps < self.max_sweeps {
            // Full sweep over eligible coordinates.
            let mut max_change = self.update_intercept(state);
            for &j in &self.eligible {
                max_change = max_change.max(self.update_coordinate(j, lambda, state));
            }
            sweeps += 1;
            if let Some(t) = trace.as_mut() {
                t.push(self.objective(lambda, state));
            }
            if max_change < self.tol {
                converged = true;
                break;
            }
            // Iterate on the current active set until stable.
            while sweeps < self.max_sweeps {
                let mut change = self.update_intercept(state);
                for idx in 0..state.active.len() {
                    let j = state.active[idx];
                    change = change.max(self.update_coordinate(j, lambda, state));
                }
                sweeps += 1;
                if let Some(t) = trace.as_mut() {
                    t.push(self.objective(lambda, state));
                }
                if change < self.tol {
                    break;
                }
            }
        }
        (converged, sweeps, trace)
    }

    pub fn result(&self, lambda: f64, state: &CdState, converged: bool, sweeps: usize, trace: Option<Vec<f64>>) -> FitResult {
        let coefficients = Array1::from_vec(state.beta.clone());
        let active_set: Vec<usize> = (0..self.p).filter(|&j| state.beta[j] != 0.0).collect();
        FitResult {
            intercept: state.intercept,
            coefficients,
            active_set,
            lambda,
            objective_value: self.objective(lambda, state),
            converged,
            sweeps,
            objective_trace: trace,
        }
    }

    /// Weighted-mean response under an intercept-only model.
    pub fn weighted_mean_y(&self) -> f64 {
        self.y.iter().zip(&self.w).map(|(y, w)| w * y).sum::<f64>() / self.w_sum
    }

    /// lambda_max for this problem: the smallest lambda at which every
    /// eligible coordinate stays at zero.
    pub fn lambda_max(&self) -> f64 {
        let ybar = self.weighted_mean_y();
        let mut lmax = 0.0f64;
        for &j in &self.eligible {
            let col = &self.cols[j];
            let mut g = 0.0;
            for i in 0..self.n {
                g += self.w[i] * col[i] * (self.y[i] - ybar);
            }
            g /= self.n as f64;
            let relevant = if self.nonnegative { g.max(0.0) } else { g.abs() };
            lmax = lmax.max(relevant / self.factors[j]);
        }
        lmax
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Single weighted lasso fit on the matrix as given (no standardization).
pub fn fit_weighted_lasso(
    x: &Array2<f64>,
    y: &Array1<f64>,
    obs_weights: &Array1<f64>,
    penalty: &PenaltySpec,
    lambda: f64,
    options: &LassoOptions,
) -> Result<FitResult> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let problem = CdProblem::new(x, y, obs_weights, penalty, options)?;
    let mut state = problem.cold_state();
    let (converged, sweeps, trace) = problem.fit_at(lambda, &mut state, options.trace_objective);
    Ok(problem.result(lambda, &state, converged, sweeps, trace))
}

/// Descending log-spaced lambda grid from `lambda_max` down to
/// `ratio * lambda_max`, computed on the matrix as given.
pub fn lambda_path(
    x: &Array2<f64>,
    y: &Array1<f64>,
    obs_weights: &Array1<f64>,
    penalty: &PenaltySpec,
    n_lambda: usize,
    ratio: f64,
) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::InvalidArgument("n_lambda must be >= 2".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument("ratio must lie in (0, 1)".into()));
    }
    if penalty.factors.iter().all(|f| f.is_infinite()) {
        return Err(Error::InvalidArgument("every feature carries an infinite penalty factor".into()));
    }
    let problem = CdProblem::new(x, y, obs_weights, penalty, &LassoOptions::default())?;
    Ok(grid_from_lambda_max(problem.lambda_max(), n_lambda, ratio))
}

pub(crate) fn grid_from_lambda_max(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    // A zero lambda_max (constant response) degenerates to a tiny flat grid;
    // everything on it is the intercept-only fit.
    let lmax = if lambda_max > 1e-12 { lambda_max } else { 1e-12 };
    (0..n_lambda)
        .map(|t| lmax * ratio.powf(t as f64 / (n_lambda - 1) as f64))
        .collect()
}

/// Path state for warm-started descent over a grid; yields a sparse snapshot
/// per grid point.
pub(crate) struct SparseFit {
    pub intercept: f64,
    pub active: Vec<(usize, f64)>,
    pub converged: bool,
}

pub(crate) fn fit_path(
    problem: &CdProblem,
    grid: &[f64],
) -> (Vec<SparseFit>, CdState) {
    let mut state = problem.cold_state();
    let mut fits = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let (converged, _sweeps, _) = problem.fit_at(lambda, &mut state, false);
        let active: Vec<(usize, f64)> = state
            .active
            .iter()
            .copied()
            .filter(|&j| state.beta[j] != 0.0)
            .map(|j| (j, state.beta[j]))
            .collect();
        fits.push(SparseFit {
            intercept: state.intercept,
            active,
            converged,
        });
    }
    (fits, state)
}

pub(crate) fn predict_sparse(fit: &SparseFit, x: &Array2<f64>, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = fit.intercept;
    }
    for &(j, b) in &fit.active {
        for (i, v) in x.column(j).iter().enumerate() {
            out[i] += b * v;
        }
    }
}

/// K-fold cross-validated weighted lasso.
///
/// Columns are standardized internally (training-fold statistics for the CV
/// curve, all-rows statistics for the grid and the final refit); penalty
/// factors apply to the standardized columns. The returned
/// [`CvResult::fit_at_min`] is mapped back to the original scale.
pub fn cv_weighted_lasso(
    x: &Array2<f64>,
    y: &Array1<f64>,
    obs_weights: &Array1<f64>,
    penalty: &PenaltySpec,
    folds: &FoldAssignment,
    options: &LassoOptions,
    path: Option<PathSpec>,
) -> Result<CvResult> {
    let n = x.nrows();
    let p = x.ncols();
    if folds.fold_of.len() != n {
        return Err(Error::DimensionMismatch("fold assignment length != n".into()));
    }
    let spec = path.unwrap_or_else(|| PathSpec::default_for(n, p));
    let (xs_full, info_full) = standardize_columns(x)?;
    let full_problem = CdProblem::new(&xs_full, y, obs_weights, penalty, options)?;
    let grid = grid_from_lambda_max(full_problem.lambda_max(), spec.n_lambda, spec.ratio);

    let k = folds.k;
    let mut fold_mse = vec![vec![0.0f64; grid.len()]; k];
    for fold in 0..k {
        let train = folds.complement_rows(fold);
        let val = folds.fold_rows(fold);
        if train.is_empty() || val.is_empty() {
            return Err(Error::Degenerate(format!("fold {fold} is empty")));
        }
        let x_train = select_rows(x, &train);
        let (xs_train, info_train) = standardize_columns(&x_train)?;
        let y_train = Array1::from_iter(train.iter().map(|&i| y[i]));
        let w_train = Array1::from_iter(train.iter().map(|&i| obs_weights[i]));
        let problem = CdProblem::new(&xs_train, &y_train, &w_train, penalty, options)?;
        let (fits, _) = fit_path(&problem, &grid);

        let x_val = select_rows(x, &val);
        let xs_val = info_train.transform(&x_val);
        let y_val: Vec<f64> = val.iter().map(|&i| y[i]).collect();
        let w_val: Vec<f64> = val.iter().map(|&i| obs_weights[i]).collect();
        let w_val_sum: f64 = w_val.iter().sum();
        if w_val_sum <= 0.0 {
            return Err(Error::Degenerate(format!("fold {fold} has zero validation weight")));
        }
        let mut pred = vec![0.0; val.len()];
        for (t, fit) in fits.iter().enumerate() {
            predict_sparse(fit, &xs_val, &mut pred);
            let mut err = 0.0;
            for i in 0..val.len() {
                let d = y_val[i] - pred[i];
                err += w_val[i] * d * d;
            }
            fold_mse[fold][t] = err / w_val_sum;
        }
    }

    let mut cv_mean = vec![0.0; grid.len()];
    let mut cv_se = vec![0.0; grid.len()];
    for t in 0..grid.len() {
        let m = fold_mse.iter().map(|f| f[t]).sum::<f64>() / k as f64;
        let var = fold_mse.iter().map(|f| (f[t] - m) * (f[t] - m)).sum::<f64>() / (k as f64 - 1.0);
        cv_mean[t] = m;
        cv_se[t] = (var / k as f64).sqrt();
    }
    if cv_mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cross-validation curve is not finite".into()));
    }
    let best = argmin_first(&cv_mean);

    let (converged, sweeps, state) = fit_path_to(&full_problem, &grid, best);
    let fit_standardized = full_problem.result(grid[best], &state, converged, sweeps, None);
    let (b0, beta) = info_full.unstandardize(fit_standardized.intercept, &fit_standardized.coefficients);
    let mut fit_at_min = fit_standardized.clone();
    fit_at_min.intercept = b0;
    fit_at_min.coefficients = beta;

    Ok(CvResult {
        lambda_min: grid[best],
        lambda_grid: grid,
        cv_mean,
        cv_se,
        fit_at_min,
        fit_standardized,
        n_divergent_folds: 0,
    })
}

// Small helpers kept next to the solver.

fn fit_path_to(problem: &CdProblem, grid: &[f64], stop: usize) -> (bool, usize, CdState) {
    let mut state = problem.cold_state();
    let mut converged = true;
    let mut total_sweeps = 0;
    for &lambda in &grid[..=stop] {
        let (c, sweeps, _) = problem.fit_at(lambda, &mut state, false);
        converged = c;
        total_sweeps += sweeps;
    }
    (converged, total_sweeps, state)
}

pub(crate) fn select_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), x.ncols()), |(i, j)| x[[rows[i], j]])
}

pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Largest stationarity violation of a fit: for inactive coordinates the
/// excess of `|x_j' (w .* r) / n|` over `lambda * f_j`, for active ones the
/// distance from `lambda * f_j * sign(beta_j)` (one-sided under the
/// nonnegativity constraint). Excluded coordinates are skipped.
pub fn kkt_violation(
    x: &Array2<f64>,
    y: &Array1<f64>,
    obs_weights: &Array1<f64>,
    penalty: &PenaltySpec,
    lambda: f64,
    fit: &FitResult,
    nonnegative: bool,
) -> f64 {
    let n = x.nrows() as f64;
    let pred = fit.predict(x);
    let mut worst = 0.0f64;
    for j in 0..x.ncols() {
        let f = penalty.factors[j];
        if f.is_infinite() {
            continue;
        }
        let mut g = 0.0;
        for i in 0..x.nrows() {
            g += obs_weights[i] * x[[i, j]] * (y[i] - pred[i]);
        }
        g /= n;
        let b = fit.coefficients[j];
        let v = if b != 0.0 {
            (g - lambda * f * b.signum()).abs()
        } else if nonnegative {
            (g - lambda * f).max(0.0)
        } else {
            (g.abs() - lambda * f).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}
