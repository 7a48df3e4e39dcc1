//! Single-machine regularized hinge-loss SVM
//!
//! Everything here uses the objective `lambda |w|^2 + (1/n) sum_i max(0, 1 - y_i <w, x_i>)`
//! with the bias folded into `w` (see [`crate::data_io::augment_bias`]).

mod prox;

pub use prox::{CdOptions, HingeRows, ProxSolution};

use crate::data_io::{Label, LabeledDataset, LabeledExample};
use crate::error::{Error, Result};
use crate::linalg;

/// Anything that can be dotted with a dense weight vector.
pub trait FeatureRow {
    fn dot(&self, w: &[f64]) -> f64;
    /// `w += scale * self`
    fn add_scaled_to(&self, scale: f64, w: &mut [f64]);
    fn norm_sq(&self) -> f64;
}

impl FeatureRow for Vec<f64> {
    #[inline]
    fn dot(&self, w: &[f64]) -> f64 {
        linalg::dot(self, w)
    }

    #[inline]
    fn add_scaled_to(&self, scale: f64, w: &mut [f64]) {
        linalg::axpy(scale, self, w)
    }

    #[inline]
    fn norm_sq(&self) -> f64 {
        linalg::norm_sq(self)
    }
}

/// Dense weights, bias slot included.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !linalg::all_finite(&values) {
            return Err(Error::Numeric("weight vector has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        linalg::norm_sq(&self.0)
    }

    pub fn distance(&self, other: &WeightVector) -> f64 {
        linalg::dist_sq(&self.0, &other.0).sqrt()
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Regularization weight on `|w|^2`.
    pub lambda: f64,
    /// Duality-gap stopping threshold.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            tolerance: 1e-6,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda {} must be > 0", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance {} must be > 0",
                self.tolerance
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn cd_options(&self) -> CdOptions {
        CdOptions {
            tolerance: self.tolerance,
            max_epochs: self.max_epochs,
            seed: self.seed,
        }
    }
}

fn check_dims(w: &WeightVector, dataset: &LabeledDataset) -> Result<()> {
    if dataset.dimension() != w.len() {
        return Err(Error::contract(format!(
            "weight length {} does not match dataset dimension {}",
            w.len(),
            dataset.dimension()
        )));
    }
    Ok(())
}

/// Mean hinge loss `(1/n) sum_i max(0, 1 - y_i <w, x_i>)`.
pub fn hinge_loss(w: &WeightVector, dataset: &LabeledDataset) -> Result<f64> {
    check_dims(w, dataset)?;
    if dataset.is_empty() {
        return Err(Error::invalid("hinge loss of an empty dataset"));
    }
    let total: f64 = dataset
        .examples()
        .iter()
        .map(|e| (1.0 - e.label.value() * e.dot(w.as_slice())).max(0.0))
        .sum();
    Ok(total / dataset.len() as f64)
}

/// `lambda |w|^2 + hinge_loss(w, dataset)`.
pub fn objective(w: &WeightVector, dataset: &LabeledDataset, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda {lambda} must be > 0")));
    }
    Ok(lambda * w.norm_sq() + hinge_loss(w, dataset)?)
}

/// `sign(<w, x>)`, with ties going to +1.
pub fn predict(w: &WeightVector, x: &LabeledExample) -> Result<Label> {
    if x.max_index() as usize > w.len() {
        return Err(Error::contract(format!(
            "example uses index {} beyond weight length {}",
            x.max_index(),
            w.len()
        )));
    }
    Ok(Label::from_sign(x.dot(w.as_slice())))
}

pub fn accuracy(w: &WeightVector, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("accuracy of an empty dataset"));
    }
    let mut correct = 0usize;
    for e in dataset.examples() {
        if predict(w, e)? == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Result of [`train_linear_svm_detailed`], with the dual certificate.
#[derive(Clone, Debug)]
pub struct SvmFit {
    pub weights: WeightVector,
    /// `alpha_i` in `[0, upper]` with `w = sum_i alpha_i y_i x_i`.
    pub alpha: Vec<f64>,
    /// `1 / (2 lambda n)`.
    pub upper: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub epochs: usize,
    pub converged: bool,
    pub dual_history: Vec<f64>,
}

/// Trains `argmin_w lambda |w|^2 + mean hinge` by dual coordinate descent.
pub fn train_linear_svm(dataset: &LabeledDataset, settings: &SolverSettings) -> Result<WeightVector> {
    Ok(train_linear_svm_detailed(dataset, settings)?.weights)
}

pub fn train_linear_svm_detailed(
    dataset: &LabeledDataset,
    settings: &SolverSettings,
) -> Result<SvmFit> {
    settings.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if !dataset.examples().iter().all(LabeledExample::is_finite) {
        return Err(Error::Numeric("dataset has non-finite feature values".into()));
    }
    let labels = dataset.labels();
    let rows = HingeRows::new(dataset.examples(), &labels);
    let rho = 2.0 * settings.lambda;
    let center = vec![0.0; dataset.dimension()];
    let sol = rows.solve(
        &center,
        rho,
        1.0 / dataset.len() as f64,
        &settings.cd_options(),
        None,
    );
    // nu = rho * alpha; division is monotone so the clip survives rescaling
    let alpha = sol.dual.iter().map(|nu| nu / rho).collect();
    Ok(SvmFit {
        weights: WeightVector::new(sol.point)?,
        alpha,
        upper: sol.upper / rho,
        primal_objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        epochs: sol.epochs,
        converged: sol.converged,
        dual_history: sol.dual_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{augment_bias, toy_gaussian_mixture};
    use rand::{Rng, SeedableRng};

    fn ds(rows: &[(&[f64], f64)]) -> LabeledDataset {
        let dim = rows[0].0.len();
        let examples = rows
            .iter()
            .map(|(x, y)| LabeledExample::from_dense(x, Label::from_sign(*y)))
            .collect();
        LabeledDataset::new(examples, dim).unwrap()
    }

    fn random_dataset(seed: u64, n: usize, d: usize) -> LabeledDataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (x, y)
            })
            .collect();
        let refs: Vec<(&[f64], f64)> = rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        ds(&refs)
    }

    #[test]
    fn zero_weights_give_unit_loss() {
        let d = random_dataset(1, 13, 4);
        let w = WeightVector::zeros(4);
        assert_eq!(hinge_loss(&w, &d).unwrap(), 1.0);
        assert_eq!(objective(&w, &d, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn margin_at_least_one_has_zero_loss() {
        let d = ds(&[(&[2.0, 0.0], 1.0)]);
        let w = WeightVector::new(vec![0.5, 7.0]).unwrap();
        assert_eq!(hinge_loss(&w, &d).unwrap(), 0.0);
    }

    #[test]
    fn hinge_matches_brute_force() {
        for seed in 0..5 {
            let d = random_dataset(seed, 40, 6);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut total = 0.0;
            for e in d.examples() {
                let x = e.to_dense(6);
                let mut s = 0.0;
                for j in 0..6 {
                    s += w[j] * x[j];
                }
                total += f64::max(0.0, 1.0 - e.label.value() * s);
            }
            let oracle = total / 40.0;
            let got = hinge_loss(&WeightVector::new(w).unwrap(), &d).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn doubling_lambda_adds_regularizer() {
        let d = random_dataset(3, 20, 3);
        let w = WeightVector::new(vec![0.4, -0.2, 1.5]).unwrap();
        let a = objective(&w, &d, 0.1).unwrap();
        let b = objective(&w, &d, 0.2).unwrap();
        assert!((b - a - 0.1 * w.norm_sq()).abs() < 1e-14);
    }

    #[test]
    fn finite_difference_gradient() {
        let d = random_dataset(4, 30, 5);
        let lambda = 0.05;
        let w = vec![0.31, -0.27, 0.11, 0.52, -0.08];
        // skip if any margin sits near the kink
        let margins: Vec<f64> = d
            .examples()
            .iter()
            .map(|e| e.label.value() * e.dot(&w))
            .collect();
        assert!(margins.iter().all(|m| (m - 1.0).abs() > 1e-4));
        let mut analytic: Vec<f64> = w.iter().map(|v| 2.0 * lambda * v).collect();
        for (e, m) in d.examples().iter().zip(&margins) {
            if *m < 1.0 {
                e.add_scaled_to(-e.label.value() / 30.0, &mut analytic);
            }
        }
        let h = 1e-6;
        for j in 0..5 {
            let mut plus = w.clone();
            plus[j] += h;
            let mut minus = w.clone();
            minus[j] -= h;
            let fp = objective(&WeightVector::new(plus).unwrap(), &d, lambda).unwrap();
            let fm = objective(&WeightVector::new(minus).unwrap(), &d, lambda).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - analytic[j]).abs() < 1e-5, "coord {j}: {fd} vs {}", analytic[j]);
        }
    }

    #[test]
    fn predict_tie_rule() {
        let e1 = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let pos = LabeledExample::new(vec![(1, 3.0)], Label::Positive).unwrap();
        let neg = LabeledExample::new(vec![(1, -3.0)], Label::Positive).unwrap();
        assert_eq!(predict(&e1, &pos).unwrap(), Label::Positive);
        assert_eq!(predict(&e1, &neg).unwrap(), Label::Negative);
        assert_eq!(predict(&WeightVector::zeros(2), &neg).unwrap(), Label::Positive);
        let long = LabeledExample::new(vec![(3, 1.0)], Label::Positive).unwrap();
        assert!(predict(&e1, &long).is_err());
    }

    #[test]
    fn accuracy_counts_and_tie_rule() {
        let d = random_dataset(7, 50, 3);
        let positives = d.examples().iter().filter(|e| e.label == Label::Positive).count();
        assert_eq!(
            accuracy(&WeightVector::zeros(3), &d).unwrap(),
            positives as f64 / 50.0
        );
        let w = WeightVector::new(vec![0.3, -0.7, 0.2]).unwrap();
        let mut correct = 0;
        for e in d.examples() {
            let s: f64 = e.to_dense(3).iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
            let p = if s >= 0.0 { 1.0 } else { -1.0 };
            if p == e.label.value() {
                correct += 1;
            }
        }
        assert_eq!(accuracy(&w, &d).unwrap(), correct as f64 / 50.0);
        assert!(accuracy(&w, &LabeledDataset::empty().with_dimension(3).unwrap()).is_err());
    }

    #[test]
    fn dimension_mismatch_is_contract_violation() {
        let d = random_dataset(1, 5, 3);
        assert!(matches!(
            hinge_loss(&WeightVector::zeros(2), &d),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn separable_fit_is_perfect() {
        let d = augment_bias(&ds(&[
            (&[2.0, 1.0], 1.0),
            (&[3.0, -1.0], 1.0),
            (&[-2.0, 0.5], -1.0),
            (&[-1.5, -1.0], -1.0),
        ]))
        .unwrap();
        let w = train_linear_svm(&d, &SolverSettings { lambda: 1e-3, ..Default::default() }).unwrap();
        assert_eq!(accuracy(&w, &d).unwrap(), 1.0);
    }

    #[test]
    fn heavy_regularization_shrinks_weights() {
        let d = augment_bias(&random_dataset(9, 30, 4)).unwrap();
        let w = train_linear_svm(&d, &SolverSettings { lambda: 1e6, ..Default::default() }).unwrap();
        assert!(w.norm_sq().sqrt() <= 1e-2);
    }

    #[test]
    fn constant_labels_predict_positive_everywhere() {
        let raw = toy_gaussian_mixture(60, 0.2, 4).unwrap();
        let examples = raw
            .examples()
            .iter()
            .map(|e| LabeledExample::new(e.features().to_vec(), Label::Positive).unwrap())
            .collect();
        let d = augment_bias(&LabeledDataset::new(examples, 2).unwrap()).unwrap();
        let w = train_linear_svm(&d, &SolverSettings::default()).unwrap();
        assert_eq!(accuracy(&w, &d).unwrap(), 1.0);
    }

    #[test]
    fn dual_invariants_hold() {
        let d = augment_bias(&random_dataset(12, 60, 5)).unwrap();
        for max_epochs in [1, 3, 50, 1000] {
            let s = SolverSettings { lambda: 0.01, max_epochs, ..Default::default() };
            let fit = train_linear_svm_detailed(&d, &s).unwrap();
            assert!((fit.upper - 1.0 / (2.0 * 0.01) / 60.0).abs() < 1e-12);
            assert!(fit.alpha.iter().all(|&a| (0.0..=fit.upper).contains(&a)));
            let mut w = vec![0.0; d.dimension()];
            for (a, e) in fit.alpha.iter().zip(d.examples()) {
                e.add_scaled_to(a * e.label.value(), &mut w);
            }
            assert!(linalg::dist_sq(&w, fit.weights.as_slice()).sqrt() <= 1e-10);
            for pair in fit.dual_history.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-12, "dual decreased: {pair:?}");
            }
        }
    }

    #[test]
    fn converged_fit_certifies_gap() {
        let d = augment_bias(&random_dataset(13, 80, 4)).unwrap();
        let fit = train_linear_svm_detailed(&d, &SolverSettings::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.primal_objective - fit.dual_objective <= 1e-6);
        let direct = objective(&fit.weights, &d, 1e-3).unwrap();
        assert!((direct - fit.primal_objective).abs() < 1e-12);
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let d = augment_bias(&random_dataset(14, 50, 4)).unwrap();
        let s = SolverSettings { seed: 77, ..Default::default() };
        let a = train_linear_svm_detailed(&d, &s).unwrap();
        let b = train_linear_svm_detailed(&d, &s).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn training_errors() {
        assert!(matches!(
            train_linear_svm(&LabeledDataset::empty(), &SolverSettings::default()),
            Err(Error::InvalidArgument(_))
        ));
        let bad = LabeledDataset::new(
            vec![LabeledExample::from_dense(&[f64::NAN], Label::Positive)],
            1,
        )
        .unwrap();
        assert!(matches!(
            train_linear_svm(&bad, &SolverSettings::default()),
            Err(Error::Numeric(_))
        ));
        let d = random_dataset(1, 5, 2);
        assert!(train_linear_svm(&d, &SolverSettings { lambda: 0.0, ..Default::default() }).is_err());
    }
}
