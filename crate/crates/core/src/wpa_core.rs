//! Model bank, parameter averaging and weighted parameter averaging.
//!
//! The bank `W` stacks the per-partition SVM solutions as columns. WPA
//! searches `w = W beta` for the `beta` minimizing
//! `lambda |W beta|^2 + (1/ML) sum hinge`. Its dual is an SVM dual whose
//! kernel is `x^T W (W^T W)^-1 W^T x'`, so it is solved here as an ordinary
//! SVM on the `M`-dimensional points `z = L^-1 W^T x`, where `L L^T` is the
//! Cholesky factor of the Gram matrix. Any square root of the Gram matrix
//! gives the same kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::data_io::{LabeledDataset, LabeledExample, Partitioning};
use crate::error::{Error, Result};
use crate::local_svm::{self, FeatureRow, HingeRows, SolverSettings, WeightVector};
use crate::rng;

/// Pivots below this fraction of the largest Gram diagonal count as zero.
const PIVOT_RTOL: f64 = 1e-13;
/// Scale of the automatic ridge, relative to `trace(W^T W) / M`.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-10;

/// Columns `w_1 .. w_M` and their Gram matrix.
#[derive(Clone, Debug)]
pub struct ModelBank {
    columns: Vec<WeightVector>,
    gram: DMatrix<f64>,
}

/// Coefficients `beta` of a combination `W beta`; unconstrained reals.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightCombination(pub Vec<f64>);

impl WeightCombination {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Regularization added to the Gram matrix before factoring.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Ridge {
    /// Factor `W^T W` as is; fail if it is singular.
    #[default]
    None,
    /// `DEFAULT_RIDGE_SCALE * trace / M`.
    Auto,
    Fixed(f64),
}

impl Ridge {
    pub fn value(&self, bank: &ModelBank) -> f64 {
        match *self {
            Ridge::None => 0.0,
            Ridge::Auto => bank.default_ridge(),
            Ridge::Fixed(r) => r,
        }
    }
}

impl ModelBank {
    pub fn num_models(&self) -> usize {
        self.columns.len()
    }

    pub fn dimension(&self) -> usize {
        self.columns[0].len()
    }

    pub fn columns(&self) -> &[WeightVector] {
        &self.columns
    }

    pub fn column(&self, m: usize) -> &WeightVector {
        &self.columns[m]
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Returns a bank with column `m` replaced; the Gram matrix is rebuilt.
    pub fn with_column(&self, m: usize, column: WeightVector) -> Result<ModelBank> {
        let mut columns = self.columns.clone();
        columns[m] = column;
        build_bank(columns)
    }

    /// `1e-10 * trace(W^T W) / M`.
    pub fn default_ridge(&self) -> f64 {
        DEFAULT_RIDGE_SCALE * self.gram.trace() / self.num_models() as f64
    }

    /// Rank of the Gram matrix, counting eigenvalues above `1e-10 * max`.
    pub fn numerical_rank(&self) -> usize {
        let eig = self.gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        eig.eigenvalues.iter().filter(|&&e| e > 1e-10 * max).count()
    }

    /// `W^T x`.
    pub fn project_row<R: FeatureRow>(&self, x: &R) -> Vec<f64> {
        self.columns.iter().map(|c| x.dot(c.as_slice())).collect()
    }

    /// Cholesky factor of `W^T W + ridge I`.
    pub fn factor(&self, ridge: f64) -> Result<Cholesky<f64, Dyn>> {
        factor_spd(&self.gram, ridge)
    }
}

/// Cholesky of `a + ridge I`, rejecting numerically singular input.
pub(crate) fn factor_spd(a: &DMatrix<f64>, ridge: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] += ridge;
    }
    let scale = (0..n).map(|i| shifted[(i, i)]).fold(0.0, f64::max);
    let chol = Cholesky::new(shifted).ok_or_else(|| {
        Error::Singular("Cholesky factorization failed (matrix not positive definite)".into())
    })?;
    let l = chol.l_dirty();
    let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(scale > 0.0) || min_pivot < PIVOT_RTOL * scale {
        return Err(Error::Singular(format!(
            "smallest pivot {min_pivot:e} is negligible against diagonal scale {scale:e}"
        )));
    }
    Ok(chol)
}

/// Stacks `models` as columns and computes `W^T W` once.
pub fn build_bank(models: Vec<WeightVector>) -> Result<ModelBank> {
    let Some(first) = models.first() else {
        return Err(Error::invalid("a model bank needs at least one column"));
    };
    let d = first.len();
    if models.iter().any(|w| w.len() != d) {
        return Err(Error::contract("model bank columns have different lengths"));
    }
    let m = models.len();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let g = crate::linalg::dot(models[i].as_slice(), models[j].as_slice());
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    Ok(ModelBank {
        columns: models,
        gram,
    })
}

/// Trains one SVM per partition (in parallel) and stacks the results.
/// Partition `m` uses the seed stream `m` of `settings.seed`, so a model
/// depends only on its own partition's data.
pub fn train_bank(
    dataset: &LabeledDataset,
    partitioning: &Partitioning,
    settings: &SolverSettings,
) -> Result<ModelBank> {
    let models = (0..partitioning.num_partitions())
        .into_par_iter()
        .map(|m| {
            let local = partitioning.subset(dataset, m);
            let s = SolverSettings {
                seed: rng::child_seed(settings.seed, m as u64),
                ..*settings
            };
            local_svm::train_linear_svm(&local, &s)
        })
        .collect::<Result<Vec<_>>>()?;
    build_bank(models)
}

/// Uniform weights `1/M`.
pub fn pa_weights(m: usize) -> Result<WeightCombination> {
    if m == 0 {
        return Err(Error::invalid("parameter averaging needs M >= 1"));
    }
    Ok(WeightCombination(vec![1.0 / m as f64; m]))
}

/// `W beta`.
pub fn combine(bank: &ModelBank, beta: &WeightCombination) -> Result<WeightVector> {
    if beta.len() != bank.num_models() {
        return Err(Error::contract(format!(
            "beta has {} entries for {} models",
            beta.len(),
            bank.num_models()
        )));
    }
    let mut w = vec![0.0; bank.dimension()];
    for (b, col) in beta.0.iter().zip(&bank.columns) {
        crate::linalg::axpy(*b, col.as_slice(), &mut w);
    }
    WeightVector::new(w)
}

/// `W (W^T W + ridge I)^-1 W^T x`, via an `M x M` solve.
pub fn projection_apply<R: FeatureRow>(bank: &ModelBank, x: &R, ridge: f64) -> Result<Vec<f64>> {
    let chol = bank.factor(ridge)?;
    Ok(apply_with_factor(bank, &chol, x))
}

fn apply_with_factor<R: FeatureRow>(bank: &ModelBank, chol: &Cholesky<f64, Dyn>, x: &R) -> Vec<f64> {
    let coeffs = chol.solve(&DVector::from_vec(bank.project_row(x)));
    let mut out = vec![0.0; bank.dimension()];
    for (c, col) in coeffs.iter().zip(&bank.columns) {
        crate::linalg::axpy(*c, col.as_slice(), &mut out);
    }
    out
}

/// Replaces every example `x` with its projection onto the column space of
/// the bank (stored densely).
pub fn project_dataset(bank: &ModelBank, dataset: &LabeledDataset, ridge: f64) -> Result<LabeledDataset> {
    let chol = bank.factor(ridge)?;
    let examples = dataset
        .examples()
        .iter()
        .map(|e| LabeledExample::from_dense(&apply_with_factor(bank, &chol, e), e.label))
        .collect();
    LabeledDataset::new(examples, bank.dimension())
}

/// `lambda beta^T (W^T W) beta + (1/ML) sum_{m,i} max(0, 1 - y_mi beta^T W^T x_mi)`,
/// evaluated directly on the `M`-dimensional representation.
pub fn wpa_objective(
    bank: &ModelBank,
    beta: &WeightCombination,
    dataset: &LabeledDataset,
    partitioning: &Partitioning,
    lambda: f64,
) -> Result<f64> {
    if beta.len() != bank.num_models() {
        return Err(Error::contract("beta length does not match the bank"));
    }
    let b = DVector::from_column_slice(beta.as_slice());
    let reg = lambda * b.dot(&(&bank.gram * &b));
    let mut total = 0.0;
    for list in partitioning.partitions() {
        for &i in list {
            let e = &dataset.examples()[i];
            let p = bank.project_row(e);
            let margin = e.label.value() * crate::linalg::dot(&p, beta.as_slice());
            total += (1.0 - margin).max(0.0);
        }
    }
    Ok(reg + total / partitioning.total() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WpaSettings {
    /// WPA regularization and coordinate-descent controls.
    pub solver: SolverSettings,
    pub ridge: Ridge,
}

impl Default for WpaSettings {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            ridge: Ridge::None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WpaSolution {
    pub beta: WeightCombination,
    /// Dual variables `alpha_mi` in `[0, upper]`, in partition order.
    pub alpha: Vec<f64>,
    /// `1 / (ML)`.
    pub upper: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub epochs: usize,
    pub converged: bool,
}

/// Solves the WPA problem on one machine through its dual.
pub fn solve_wpa_central(
    bank: &ModelBank,
    dataset: &LabeledDataset,
    partitioning: &Partitioning,
    settings: &WpaSettings,
) -> Result<WpaSolution> {
    settings.solver.validate()?;
    if dataset.dimension() != bank.dimension() {
        return Err(Error::contract(format!(
            "dataset dimension {} does not match bank dimension {}",
            dataset.dimension(),
            bank.dimension()
        )));
    }
    let chol = bank.factor(settings.ridge.value(bank))?;
    let lambda = settings.solver.lambda;

    let mut projected = Vec::with_capacity(partitioning.total());
    let mut rows = Vec::with_capacity(partitioning.total());
    let mut labels = Vec::with_capacity(partitioning.total());
    for list in partitioning.partitions() {
        for &i in list {
            let e = &dataset.examples()[i];
            let p = bank.project_row(e);
            let z = chol
                .l_dirty()
                .solve_lower_triangular(&DVector::from_column_slice(&p))
                .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric("non-finite projected features".into()));
            }
            rows.push(z.as_slice().to_vec());
            projected.push(p);
            labels.push(e.label.value());
        }
    }

    let m = bank.num_models();
    let sol = HingeRows::new(&rows, &labels).solve(
        &vec![0.0; m],
        2.0 * lambda,
        1.0 / partitioning.total() as f64,
        &settings.solver.cd_options(),
        None,
    );

    // beta = (1 / 2 lambda) (W^T W)^-1 sum alpha y W^T x
    let mut acc = vec![0.0; m];
    for ((a, y), p) in sol.dual.iter().zip(&labels).zip(&projected) {
        if *a != 0.0 {
            crate::linalg::axpy(a * y, p, &mut acc);
        }
    }
    let beta = chol.solve(&DVector::from_vec(acc)) / (2.0 * lambda);
    let beta = WeightCombination(beta.as_slice().to_vec());
    if !crate::linalg::all_finite(beta.as_slice()) {
        return Err(Error::Numeric("non-finite beta".into()));
    }
    Ok(WpaSolution {
        beta,
        alpha: sol.dual,
        upper: sol.upper,
        primal_objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        epochs: sol.epochs,
        converged: sol.converged,
    })
}
