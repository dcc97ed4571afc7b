//! Core data containers, fold assignment, and column standardization.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use std::io::Write;
use std::path::Path;

/// Observational rows `(y, w, x)` plus optional known propensities and the
/// simulation oracle `tau`.
///
/// Invariants checked at construction: equal column lengths, binary `w`,
/// propensities bounded away from 0 and 1, and both treatment arms non-empty.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Array1<f64>,
    pub w: Array1<f64>,
    pub x: Array2<f64>,
    pub known_propensity: Option<Array1<f64>>,
    pub true_tau: Option<Array1<f64>>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        y: Array1<f64>,
        w: Array1<f64>,
        x: Array2<f64>,
        known_propensity: Option<Array1<f64>>,
        true_tau: Option<Array1<f64>>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = y.len();
        let p = x.ncols();
        if w.len() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {} rows, w has {}, x has {}",
                n,
                w.len(),
                x.nrows()
            )));
        }
        if let Some(e) = &known_propensity {
            if e.len() != n {
                return Err(Error::DimensionMismatch("known_propensity length != n".into()));
            }
            if e.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::InvalidArgument(
                    "known propensities must lie strictly inside (0, 1)".into(),
                ));
            }
        }
        if let Some(t) = &true_tau {
            if t.len() != n {
                return Err(Error::DimensionMismatch("true_tau length != n".into()));
            }
        }
        if w.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("treatment indicator must be 0 or 1".into()));
        }
        let n_treated = w.iter().filter(|&&v| v == 1.0).count();
        if n_treated == 0 || n_treated == n {
            return Err(Error::Degenerate(format!(
                "both treatment arms must be non-empty (treated = {n_treated} of {n})"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome vector contains non-finite values".into()));
        }
        let feature_names = match feature_names {
            Some(names) => {
                if names.len() != p {
                    return Err(Error::DimensionMismatch("feature_names length != p".into()));
                }
                names
            }
            None => (0..p).map(|j| format!("x{}", j + 1)).collect(),
        };
        Ok(Self {
            y,
            w,
            x,
            known_propensity,
            true_tau,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Row subset in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let take1 = |v: &Array1<f64>| Array1::from_iter(rows.iter().map(|&i| v[i]));
        let x = Array2::from_shape_fn((rows.len(), self.p()), |(i, j)| self.x[[rows[i], j]]);
        Dataset::new(
            take1(&self.y),
            take1(&self.w),
            x,
            self.known_propensity.as_ref().map(take1),
            self.true_tau.as_ref().map(take1),
            Some(self.feature_names.clone()),
        )
    }

    /// Load from CSV with a header row: columns `y`, `w`, optional `e`,
    /// optional `tau_true`; every remaining column is a feature.
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let y_col = find("y").ok_or_else(|| Error::InvalidArgument("missing column `y`".into()))?;
        let w_col = find("w").ok_or_else(|| Error::InvalidArgument("missing column `w`".into()))?;
        let e_col = find("e");
        let tau_col = find("tau_true");
        let special: Vec<usize> = [Some(y_col), Some(w_col), e_col, tau_col]
            .into_iter()
            .flatten()
            .collect();
        let feat_cols: Vec<usize> = (0..headers.len()).filter(|c| !special.contains(c)).collect();

        let mut y = Vec::new();
        let mut w = Vec::new();
        let mut e = Vec::new();
        let mut tau = Vec::new();
        let mut xs: Vec<f64> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |c: usize| -> Result<f64> {
                record
                    .get(c)
                    .ok_or_else(|| Error::InvalidArgument("short csv record".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad numeric field: {e}")))
            };
            y.push(parse(y_col)?);
            w.push(parse(w_col)?);
            if let Some(c) = e_col {
                e.push(parse(c)?);
            }
            if let Some(c) = tau_col {
                tau.push(parse(c)?);
            }
            for &c in &feat_cols {
                xs.push(parse(c)?);
            }
        }
        let n = y.len();
        let p = feat_cols.len();
        let x = Array2::from_shape_vec((n, p), xs)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Dataset::new(
            Array1::from_vec(y),
            Array1::from_vec(w),
            x,
            if e_col.is_some() { Some(Array1::from_vec(e)) } else { None },
            if tau_col.is_some() { Some(Array1::from_vec(tau)) } else { None },
            Some(feat_cols.iter().map(|&c| headers[c].clone()).collect()),
        )
    }

    /// Write the CSV schema read by [`Dataset::from_csv`].
    pub fn to_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec!["y".to_string(), "w".to_string()];
        if self.known_propensity.is_some() {
            header.push("e".into());
        }
        if self.true_tau.is_some() {
            header.push("tau_true".into());
        }
        header.extend(self.feature_names.iter().cloned());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n() {
            let mut row = vec![format!("{}", self.y[i]), format!("{}", self.w[i])];
            if let Some(e) = &self.known_propensity {
                row.push(format!("{}", e[i]));
            }
            if let Some(t) = &self.true_tau {
                row.push(format!("{}", t[i]));
            }
            for j in 0..self.p() {
                row.push(format!("{}", self.x[[i, j]]));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Assignment of rows to `k` cross-fitting folds, stratified by treatment arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn complement_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// Deterministic arm-stratified assignment, used for inner tuning splits
    /// where no RNG is threaded through. Rows of each arm are dealt round
    /// robin in index order.
    pub fn round_robin_stratified(w: &Array1<f64>, k: usize) -> Result<Self> {
        check_fold_preconditions(w.len(), k, w)?;
        let mut fold_of = vec![0usize; w.len()];
        for arm in [0.0, 1.0] {
            for (pos, i) in (0..w.len()).filter(|&i| w[i] == arm).enumerate() {
                fold_of[i] = pos % k;
            }
        }
        Ok(Self { fold_of, k })
    }

    /// Deterministic unstratified assignment (row index modulo `k`), for
    /// single-arm regressions.
    pub fn round_robin(n: usize, k: usize) -> Result<Self> {
        if k < 2 || k > n {
            return Err(Error::InvalidArgument(format!(
                "fold count {k} must satisfy 2 <= k <= n = {n}"
            )));
        }
        Ok(Self {
            fold_of: (0..n).map(|i| i % k).collect(),
            k,
        })
    }
}

fn check_fold_preconditions(n: usize, k: usize, w: &Array1<f64>) -> Result<()> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} must satisfy 2 <= k <= n = {n}"
        )));
    }
    let treated = w.iter().filter(|&&v| v == 1.0).count();
    let control = n - treated;
    if treated == 0 || control == 0 {
        return Err(Error::Degenerate(
            "cannot build stratified folds from single-arm data".into(),
        ));
    }
    if treated < k || control < k {
        return Err(Error::Degenerate(format!(
            "each fold needs a unit from each arm: k = {k} but arms have ({treated}, {control}) units"
        )));
    }
    Ok(())
}

/// Randomized arm-stratified folds: within each arm, rows are shuffled and
/// dealt round robin from a random offset, so per-arm fold sizes differ by at
/// most one and every fold holds at least one unit from each arm.
pub fn make_folds(n: usize, k: usize, w: &Array1<f64>, rng: &SeededRng) -> Result<FoldAssignment> {
    if w.len() != n {
        return Err(Error::DimensionMismatch("w length != n".into()));
    }
    check_fold_preconditions(n, k, w)?;
    let mut gen = rng.rng();
    let mut fold_of = vec![0usize; n];
    for arm in [0.0, 1.0] {
        let mut rows: Vec<usize> = (0..n).filter(|&i| w[i] == arm).collect();
        rows.shuffle(&mut gen);
        let offset: usize = gen.gen_range(0..k);
        for (pos, &i) in rows.iter().enumerate() {
            fold_of[i] = (offset + pos) % k;
        }
    }
    Ok(FoldAssignment { fold_of, k })
}

/// Per-column centering and scaling metadata.
#[derive(Debug, Clone)]
pub struct Standardization {
    pub means: Array1<f64>,
    /// Population standard deviation (divisor `n`); constant columns get 1.
    pub scales: Array1<f64>,
    pub constant: Vec<bool>,
}

impl Standardization {
    /// Apply the stored transform to a new matrix with the same columns.
    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for j in 0..x.ncols() {
            let (m, s) = (self.means[j], self.scales[j]);
            out.column_mut(j).mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    /// Map a fit on standardized columns back to the original scale.
    pub fn unstandardize(&self, intercept: f64, coefficients: &Array1<f64>) -> (f64, Array1<f64>) {
        let mut b0 = intercept;
        let mut beta = coefficients.clone();
        for j in 0..beta.len() {
            beta[j] /= self.scales[j];
            b0 -= beta[j] * self.means[j];
        }
        (b0, beta)
    }
}

/// Center each column to mean zero and scale to unit population standard
/// deviation. Constant columns keep scale 1 and are flagged rather than
/// rejected.
pub fn standardize_columns(x: &Array2<f64>) -> Result<(Array2<f64>, Standardization)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("standardization needs n >= 2".into()));
    }
    let p = x.ncols();
    let mut means = Array1::zeros(p);
    let mut scales = Array1::ones(p);
    let mut constant = vec![false; p];
    let mut out = x.clone();
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        means[j] = mean;
        if var <= 1e-24 {
            constant[j] = true;
            out.column_mut(j).fill(0.0);
        } else {
            let sd = var.sqrt();
            scales[j] = sd;
            out.column_mut(j).mapv_inplace(|v| (v - mean) / sd);
        }
    }
    Ok((
        out,
        Standardization {
            means,
            scales,
            constant,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_dataset() -> Dataset {
        Dataset::new(
            array![1.0, 2.0, 3.0, 4.0],
            array![1.0, 1.0, 0.0, 0.0],
            array![[1.0, 0.5], [2.0, 0.25], [3.0, -0.5], [4.0, 1.5]],
            Some(array![0.5, 0.5, 0.5, 0.5]),
            Some(array![0.1, 0.2, 0.3, 0.4]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn dataset_rejects_bad_treatment() {
        let err = Dataset::new(
            array![1.0, 2.0],
            array![1.0, 2.0],
            array![[0.0], [1.0]],
            None,
            None,
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn dataset_rejects_single_arm() {
        let err = Dataset::new(
            array![1.0, 2.0],
            array![1.0, 1.0],
            array![[0.0], [1.0]],
            None,
            None,
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn folds_stratified_two_by_two() {
        let w = array![1.0, 1.0, 0.0, 0.0];
        let folds = make_folds(4, 2, &w, &SeededRng::new(1)).unwrap();
        for fold in 0..2 {
            let rows = folds.fold_rows(fold);
            let treated = rows.iter().filter(|&&i| w[i] == 1.0).count();
            assert_eq!(treated, 1);
            assert_eq!(rows.len(), 2);
        }
    }

    #[test]
    fn folds_six_rows_three_folds() {
        let w = array![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let folds = make_folds(6, 3, &w, &SeededRng::new(9)).unwrap();
        for fold in 0..3 {
            let rows = folds.fold_rows(fold);
            assert_eq!(rows.len(), 2);
            assert_eq!(rows.iter().filter(|&&i| w[i] == 1.0).count(), 1);
        }
    }

    #[test]
    fn folds_deterministic_under_seed() {
        let w = Array1::from_iter((0..40).map(|i| (i % 2) as f64));
        let a = make_folds(40, 5, &w, &SeededRng::new(3).derive(1)).unwrap();
        let b = make_folds(40, 5, &w, &SeededRng::new(3).derive(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn folds_reject_excess_k() {
        let w = array![1.0, 0.0, 1.0];
        assert!(make_folds(3, 4, &w, &SeededRng::new(0)).is_err());
        // k exceeds the treated-arm count: stratification impossible.
        let w = array![1.0, 0.0, 0.0, 0.0];
        assert!(make_folds(4, 2, &w, &SeededRng::new(0)).is_err());
        let w = array![1.0, 1.0, 0.0, 0.0];
        assert!(make_folds(4, 2, &w, &SeededRng::new(0)).is_ok());
    }

    #[test]
    fn standardize_matches_hand_arithmetic() {
        let x = array![[1.0], [2.0], [3.0]];
        let (z, info) = standardize_columns(&x).unwrap();
        assert_abs_diff_eq!(info.means[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(info.scales[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(z[[0, 0]], -1.224744871391589, epsilon = 1e-9);
        assert_abs_diff_eq!(z[[1, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[[2, 0]], 1.224744871391589, epsilon = 1e-9);
    }

    #[test]
    fn standardize_flags_constant_column() {
        let x = array![[5.0], [5.0], [5.0]];
        let (z, info) = standardize_columns(&x).unwrap();
        assert!(info.constant[0]);
        assert_eq!(info.scales[0], 1.0);
        assert!(z.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = array![[1.0, 4.0], [2.0, -1.0], [4.0, 0.5], [0.0, 2.0]];
        let (z1, _) = standardize_columns(&x).unwrap();
        let (z2, _) = standardize_columns(&z1).unwrap();
        for (a, b) in z1.iter().zip(z2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let data = toy_dataset();
        let dir = std::env::temp_dir().join("cate_core_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("toy.csv");
        data.to_csv(&path).unwrap();
        let back = Dataset::from_csv(&path).unwrap();
        assert_eq!(back.n(), 4);
        assert_eq!(back.p(), 2);
        assert_eq!(back.feature_names, data.feature_names);
        for i in 0..4 {
            assert_abs_diff_eq!(back.y[i], data.y[i], epsilon = 1e-12);
            assert_abs_diff_eq!(
                back.known_propensity.as_ref().unwrap()[i],
                0.5,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                back.true_tau.as_ref().unwrap()[i],
                data.true_tau.as_ref().unwrap()[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn subset_keeps_row_alignment() {
        let data = toy_dataset();
        let sub = data.subset(&[3, 0]).unwrap();
        assert_eq!(sub.n(), 2);
        assert_abs_diff_eq!(sub.y[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sub.x[[1, 1]], 0.5, epsilon = 1e-12);
    }
}
