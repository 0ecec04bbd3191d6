//! Datasets, imputation, feature standardization, fold plans and synthetic
//! piecewise-linear instances.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::TrainingSet;
use crate::model::{LDerParams, ModelDims};
use crate::train::random_params;

/// Raw tabular data. Missing feature cells are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dim("targets vs feature rows", x.rows(), y.len()));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::dim("feature names", x.cols(), feature_names.len()));
        }
        if y.is_empty() || x.cols() == 0 {
            return Err(Error::domain("dataset needs at least one row and one feature"));
        }
        Ok(Dataset {
            name: name.into(),
            x,
            y,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn missing_count(&self) -> usize {
        self.x.as_slice().iter().filter(|v| v.is_nan()).count()
    }

    /// Fails while any feature is still missing.
    pub fn to_training_set(&self) -> Result<TrainingSet> {
        TrainingSet::new(self.x.clone(), self.y.clone())
    }
}

/// Replaces missing entries by the mean of the observed entries of their column.
pub fn impute_mean(d: &Dataset) -> Result<Dataset> {
    let mut out = d.clone();
    let (rows, cols) = (d.x.rows(), d.x.cols());
    for j in 0..cols {
        let (sum, count) = (0..rows)
            .map(|i| d.x[(i, j)])
            .filter(|v| !v.is_nan())
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            return Err(Error::Imputation(d.feature_names[j].clone()));
        }
        if count == rows {
            continue;
        }
        let mean = sum / count as f64;
        for i in 0..rows {
            let v = &mut out.x.row_mut(i)[j];
            if v.is_nan() {
                *v = mean;
            }
        }
    }
    Ok(out)
}

/// Per-feature affine map `x ↦ (x − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    /// Floored at [`StandardizeStats::STD_FLOOR`].
    pub std: Vec<f64>,
}

impl StandardizeStats {
    pub const STD_FLOOR: f64 = 1e-12;

    /// Population mean and standard deviation of each column.
    pub fn fit(x: &Matrix) -> Self {
        let (rows, cols) = (x.rows(), x.cols());
        let mut mean = vec![0.0; cols];
        let mut std = vec![0.0; cols];
        if rows == 0 {
            return StandardizeStats {
                mean,
                std: vec![1.0; cols],
            };
        }
        for r in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        for r in x.iter_rows() {
            for ((s, m), v) in std.iter_mut().zip(&mean).zip(r) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = libm::sqrt(*s / rows as f64);
            if !(*s >= Self::STD_FLOOR) {
                *s = Self::STD_FLOOR;
            }
        }
        StandardizeStats { mean, std }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(Error::dim("standardized features", self.mean.len(), x.cols()));
        }
        Ok(())
    }
}

/// Fits the statistics on `x` and returns the transformed copy.
pub fn standardize(x: &Matrix) -> (Matrix, StandardizeStats) {
    let stats = StandardizeStats::fit(x);
    let out = stats.apply(x).expect("stats fitted on the same matrix");
    (out, stats)
}

/// Assignment of samples to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of each sample.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffled k-fold partition; the first `m mod k` folds hold one extra sample.
pub fn kfold_split(m: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > m {
        return Err(Error::domain("fold count must satisfy 2 ≤ k ≤ m"));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (m / k, m % k);
    let mut assignments = vec![0; m];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &perm[pos..pos + size] {
            assignments[i] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Samples a ground-truth model (same distribution as
/// [`init_params`](crate::init_params) with unit scale, on its own random
/// stream), inputs uniform on `[−1, 1]ⁿ`, and targets `τ(x) + N(0, noise_std²)`.
pub fn synth_pwl(dims: ModelDims, m: usize, noise_std: f64, seed: u64) -> Result<(TrainingSet, LDerParams)> {
    if m == 0 {
        return Err(Error::domain("synthetic set needs at least one sample"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::domain("noise level must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let truth = random_params(dims, &mut rng, 1.0);
    let mut x = Matrix::zeros(m, dims.n);
    for v in x.as_mut_slice() {
        *v = rng.random_range(-1.0..=1.0);
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(3);
    let normal = Normal::new(0.0, noise_std).map_err(|_| Error::domain("invalid noise level"))?;
    let y = x
        .iter_rows()
        .map(|r| {
            let e = if noise_std > 0.0 { normal.sample(&mut noise_rng) } else { 0.0 };
            truth.predict_unchecked(r) + e
        })
        .collect();
    Ok((TrainingSet::new(x, y)?, truth))
}
