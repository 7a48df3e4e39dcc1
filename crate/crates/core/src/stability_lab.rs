//! Empirical checks of hypothesis stability and estimator bias on the toy
//! mixture.

use rayon::prelude::*;

use crate::admm_engine::{run_dsvm, run_dwpa, AdmmConfig};
use crate::data_io::{augment_bias, partition, LabeledDataset, LabeledExample, Partitioning, ToyMixture};
use crate::error::{Error, Result};
use crate::local_svm::{self, SolverSettings, WeightVector};
use crate::rng;
use crate::wpa_core::{self, ModelBank, Ridge, WpaSettings};

/// Rescales every column to squared norm `1/M`, so `|W|_F = 1`.
pub fn normalize_bank(bank: &ModelBank) -> Result<ModelBank> {
    let m = bank.num_models();
    let target = (1.0 / m as f64).sqrt();
    let columns = bank
        .columns()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let norm = c.norm_sq().sqrt();
            if norm == 0.0 {
                return Err(Error::invalid(format!("column {i} of the bank is zero")));
            }
            WeightVector::new(c.as_slice().iter().map(|v| v / norm * target).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    wpa_core::build_bank(columns)
}

/// Replaces the last point of the last partition with `replacement`.
pub fn perturb_one(
    dataset: &LabeledDataset,
    partitioning: &Partitioning,
    replacement: LabeledExample,
) -> Result<LabeledDataset> {
    if replacement.max_index() as usize > dataset.dimension() {
        return Err(Error::contract(format!(
            "replacement index {} exceeds dimension {}",
            replacement.max_index(),
            dataset.dimension()
        )));
    }
    dataset.with_replaced(partitioning.last_index(), replacement)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilitySettings {
    /// Per-partition training and WPA regularization.
    pub solver: SolverSettings,
    pub ridge: Ridge,
    pub mixture: ToyMixture,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self {
            solver: SolverSettings {
                tolerance: 1e-9,
                max_epochs: 20_000,
                ..SolverSettings::default()
            },
            ridge: Ridge::Auto,
            mixture: ToyMixture::standard(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityTrial {
    pub m: usize,
    pub l: usize,
    pub trial: usize,
    pub seed: u64,
    /// Distance between the WPA models built from normalized banks.
    pub theta_distance: f64,
    /// Same distance with the banks left as trained.
    pub raw_distance: f64,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub trials: Vec<StabilityTrial>,
    /// `(M, L, skipped trials)` per size, in input order.
    pub skipped: Vec<(usize, usize, usize)>,
    /// `(M * L, mean theta distance)` per size.
    pub means: Vec<(usize, f64)>,
    /// Least-squares slope of `ln(mean distance)` against `ln(M L)`.
    pub slope: f64,
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct x values"));
    }
    Ok(sxy / sxx)
}

fn single_class(dataset: &LabeledDataset, partitioning: &Partitioning) -> bool {
    (0..partitioning.num_partitions()).any(|m| {
        let labels: Vec<f64> = partitioning
            .indices(m)
            .iter()
            .map(|&i| dataset.examples()[i].label.value())
            .collect();
        labels.iter().all(|&y| y == labels[0])
    })
}

fn wpa_model(
    dataset: &LabeledDataset,
    partitioning: &Partitioning,
    bank: &ModelBank,
    settings: &StabilitySettings,
) -> Result<WeightVector> {
    let wpa = WpaSettings {
        solver: settings.solver,
        ridge: settings.ridge,
    };
    let sol = wpa_core::solve_wpa_central(bank, dataset, partitioning, &wpa)?;
    wpa_core::combine(bank, &sol.beta)
}

/// Measures `|theta - theta'|` for one pair of toy samples differing in the
/// last point of the last partition. `replacement` overrides the freshly
/// drawn replacement point. Returns `None` when a partition of either
/// sample holds a single class.
pub fn stability_trial(
    m: usize,
    l: usize,
    seed: u64,
    settings: &StabilitySettings,
    replacement: Option<LabeledExample>,
) -> Result<Option<(f64, f64)>> {
    let sample = augment_bias(&settings.mixture.sample(m * l + 1, seed, 0).dataset)?;
    // the extra draw is the replacement point
    let fresh = sample.examples()[m * l].clone();
    let dataset = sample.subset(&(0..m * l).collect::<Vec<_>>());
    let parts = partition(&dataset, m, seed)?;
    let replacement = replacement.unwrap_or(fresh);
    let perturbed = perturb_one(&dataset, &parts, replacement)?;
    if single_class(&dataset, &parts) || single_class(&perturbed, &parts) {
        return Ok(None);
    }
    let solver = SolverSettings {
        seed,
        ..settings.solver
    };
    let bank = wpa_core::train_bank(&dataset, &parts, &solver)?;
    let bank2 = wpa_core::train_bank(&perturbed, &parts, &solver)?;
    let s = StabilitySettings { solver, ..*settings };
    let theta = wpa_model(&dataset, &parts, &normalize_bank(&bank)?, &s)?;
    let theta2 = wpa_model(&perturbed, &parts, &normalize_bank(&bank2)?, &s)?;
    let raw = wpa_model(&dataset, &parts, &bank, &s)?;
    let raw2 = wpa_model(&perturbed, &parts, &bank2, &s)?;
    Ok(Some((theta.distance(&theta2), raw.distance(&raw2))))
}

/// Runs `trials` perturbation trials per `(M, L)` size and fits the
/// log-log slope of the mean distance against `M L`.
pub fn stability_experiment(
    sizes: &[(usize, usize)],
    trials: usize,
    seed: u64,
    settings: &StabilitySettings,
) -> Result<StabilityReport> {
    let mut distinct: Vec<usize> = sizes.iter().map(|(m, l)| m * l).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 || sizes.iter().any(|(m, l)| m * l < 8 || *m == 0) {
        return Err(Error::invalid(
            "stability experiment needs >= 3 distinct sizes, each with M >= 1 and M*L >= 8",
        ));
    }
    if trials == 0 {
        return Err(Error::invalid("stability experiment needs at least one trial"));
    }
    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..trials).map(move |t| (s, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(s, t)| {
            let (m, l) = sizes[s];
            let trial_seed = rng::child_seed(seed, rng::stream_id(s as u64, t as u64));
            Ok((s, t, trial_seed, stability_trial(m, l, trial_seed, settings, None)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    let mut skipped = vec![0usize; sizes.len()];
    for (s, t, trial_seed, r) in results {
        let (m, l) = sizes[s];
        match r {
            Some((theta_distance, raw_distance)) => out.push(StabilityTrial {
                m,
                l,
                trial: t,
                seed: trial_seed,
                theta_distance,
                raw_distance,
            }),
            None => skipped[s] += 1,
        }
    }
    let mut means = Vec::new();
    for &(m, l) in sizes {
        let d: Vec<f64> = out
            .iter()
            .filter(|t| t.m == m && t.l == l)
            .map(|t| t.theta_distance)
            .collect();
        if d.is_empty() {
            return Err(Error::Setup(format!("every trial at M={m}, L={l} was skipped")));
        }
        means.push((m * l, d.iter().sum::<f64>() / d.len() as f64));
    }
    let points: Vec<(f64, f64)> = means
        .iter()
        .map(|&(n, d)| ((n as f64).ln(), d.ln()))
        .collect();
    let slope = fit_slope(&points)?;
    Ok(StabilityReport {
        trials: out,
        skipped: sizes
            .iter()
            .zip(skipped)
            .map(|(&(m, l), k)| (m, l, k))
            .collect(),
        means,
        slope,
    })
}

/// Estimators compared in the bias experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasAlgorithm {
    Pa,
    Dwpa,
    Dsvm,
    /// Single-machine SVM on the whole sample.
    Svm,
}

impl BiasAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            BiasAlgorithm::Pa => "pa",
            BiasAlgorithm::Dwpa => "dwpa",
            BiasAlgorithm::Dsvm => "dsvm",
            BiasAlgorithm::Svm => "svm_central",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasSettings {
    /// Partitions used by the distributed estimators.
    pub partitions: usize,
    pub solver: SolverSettings,
    /// ADMM controls; `lambda` should equal `solver.lambda`.
    pub admm: AdmmConfig,
    pub mixture: ToyMixture,
    /// Reference sample size as a multiple of the largest N.
    pub reference_factor: usize,
    pub reference_tolerance: f64,
    /// Largest accepted gap between the reference model's objective on its
    /// own sample and on an independent sample of the same size.
    pub reference_gap: f64,
}

impl Default for BiasSettings {
    fn default() -> Self {
        Self {
            partitions: 50,
            solver: SolverSettings::default(),
            admm: AdmmConfig::default(),
            mixture: ToyMixture::standard(),
            reference_factor: 50,
            reference_tolerance: 1e-8,
            reference_gap: 1e-2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceModel {
    pub weights: WeightVector,
    pub sample_size: usize,
    pub train_objective: f64,
    pub test_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasEstimate {
    pub sample_size: usize,
    pub trials: usize,
    /// Mean of `|w - w*|` over the trials.
    pub mean_bias: f64,
    pub distances: Vec<f64>,
}

const REFERENCE_STREAM: u64 = 0x5245_4600;

/// Trains `w*` on `reference_factor * n_max` toy points and checks it
/// against an independent sample of the same size.
pub fn reference_model(n_max: usize, seed: u64, settings: &BiasSettings) -> Result<ReferenceModel> {
    let n = n_max
        .checked_mul(settings.reference_factor)
        .filter(|&n| n >= 4)
        .ok_or_else(|| Error::invalid("reference sample size is out of range"))?;
    let mixture = &settings.mixture;
    let train = augment_bias(&mixture.sample(n, seed, REFERENCE_STREAM).dataset)?;
    let test = augment_bias(&mixture.sample(n, seed, REFERENCE_STREAM + 1).dataset)?;
    let s = SolverSettings {
        tolerance: settings.reference_tolerance,
        max_epochs: settings.solver.max_epochs.max(10_000),
        seed,
        ..settings.solver
    };
    let fit = local_svm::train_linear_svm_detailed(&train, &s)?;
    if !fit.converged {
        return Err(Error::Setup(format!(
            "reference model did not reach gap {} in {} epochs",
            s.tolerance, fit.epochs
        )));
    }
    let train_objective = local_svm::objective(&fit.weights, &train, s.lambda)?;
    let test_objective = local_svm::objective(&fit.weights, &test, s.lambda)?;
    if (train_objective - test_objective).abs() > settings.reference_gap {
        return Err(Error::Setup(format!(
            "reference objective gap {:e} exceeds {:e}; raise the reference size",
            (train_objective - test_objective).abs(),
            settings.reference_gap
        )));
    }
    Ok(ReferenceModel {
        weights: fit.weights,
        sample_size: n,
        train_objective,
        test_objective,
    })
}

/// Output of `algorithm` on one toy sample.
pub fn fit_estimator(
    algorithm: BiasAlgorithm,
    dataset: &LabeledDataset,
    seed: u64,
    settings: &BiasSettings,
) -> Result<WeightVector> {
    let solver = SolverSettings {
        seed,
        ..settings.solver
    };
    if algorithm == BiasAlgorithm::Svm {
        return local_svm::train_linear_svm(dataset, &solver);
    }
    let parts = partition(dataset, settings.partitions, seed)?;
    match algorithm {
        BiasAlgorithm::Pa => {
            let bank = wpa_core::train_bank(dataset, &parts, &solver)?;
            wpa_core::combine(&bank, &wpa_core::pa_weights(bank.num_models())?)
        }
        BiasAlgorithm::Dwpa => {
            let bank = wpa_core::train_bank(dataset, &parts, &solver)?;
            Ok(run_dwpa(dataset, &parts, &bank, &settings.admm, None)?.weights)
        }
        BiasAlgorithm::Dsvm => Ok(run_dsvm(dataset, &parts, &settings.admm, None)?.weights),
        BiasAlgorithm::Svm => unreachable!(),
    }
}

/// Mean `|w - w*|` per sample size against a precomputed reference.
pub fn bias_experiment_with_reference(
    algorithm: BiasAlgorithm,
    n_values: &[usize],
    trials: usize,
    seed: u64,
    settings: &BiasSettings,
    reference: &ReferenceModel,
) -> Result<Vec<BiasEstimate>> {
    if trials < 2 {
        return Err(Error::invalid("bias estimates need at least two trials"));
    }
    let mixture = &settings.mixture;
    n_values
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let distances = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let trial_seed = rng::child_seed(seed, rng::stream_id(k as u64, t as u64));
                    let sample = augment_bias(&mixture.sample(n, trial_seed, 0).dataset)?;
                    let w = fit_estimator(algorithm, &sample, trial_seed, settings)?;
                    Ok(w.distance(&reference.weights))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BiasEstimate {
                sample_size: n,
                trials,
                mean_bias: distances.iter().sum::<f64>() / trials as f64,
                distances,
            })
        })
        .collect()
}

/// Builds the reference model from `seed`, then estimates the bias of
/// `algorithm` at each sample size.
pub fn bias_experiment(
    algorithm: BiasAlgorithm,
    n_values: &[usize],
    trials: usize,
    seed: u64,
    settings: &BiasSettings,
) -> Result<(ReferenceModel, Vec<BiasEstimate>)> {
    let n_max = n_values
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::invalid("bias experiment needs at least one sample size"))?;
    let reference = reference_model(n_max, seed, settings)?;
    let estimates =
        bias_experiment_with_reference(algorithm, n_values, trials, seed, settings, &reference)?;
    Ok((reference, estimates))
}
