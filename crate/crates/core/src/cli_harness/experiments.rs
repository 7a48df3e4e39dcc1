//! One driver per subcommand.

use std::fmt::Write as _;
use std::time::Instant;

use super::config::{Command, DataSource, ExperimentConfig, Method};
use super::report::{Cell, ReportRow, RunReport, Table};
use crate::admm_engine::{DsvmRunner, DwpaRunner, IterationRecord, BYTES_PER_REAL};
use crate::data_io::{augment_bias, partition, read_libsvm, LabeledDataset, Partitioning, ToyComponent, ToyMixture};
use crate::error::{Error, Result};
use crate::local_svm::{self, WeightVector};
use crate::stability_lab::{self, BiasAlgorithm, BiasSettings, StabilitySettings};
use crate::wpa_core::{self, ModelBank, WpaSettings};

/// Training set and optional test set, both bias-augmented.
#[derive(Clone, Debug)]
pub struct Data {
    pub train: LabeledDataset,
    pub test: Option<LabeledDataset>,
}

impl Data {
    pub fn new(train: LabeledDataset, test: Option<LabeledDataset>) -> Result<Self> {
        if let Some(t) = &test {
            if t.dimension() != train.dimension() {
                return Err(Error::contract("train and test dimensions differ"));
            }
        }
        Ok(Self { train, test })
    }
}

/// Loads the configured data for `seed`. Toy data is drawn afresh per seed
/// (training and test from independent streams); LIBSVM files are read
/// as is, with both files widened to a common dimension.
pub fn load_data(config: &ExperimentConfig, seed: u64) -> Result<Data> {
    match &config.data {
        DataSource::Toy => {
            let mixture = ToyMixture::new(config.minority_fraction)?;
            let train = augment_bias(&mixture.sample(config.toy_train_size, seed, 0).dataset)?;
            let test = augment_bias(&mixture.sample(config.toy_test_size, seed, 1).dataset)?;
            Data::new(train, Some(test))
        }
        DataSource::Libsvm { train, test } => {
            let train = read_libsvm(train)?;
            let test = test.as_ref().map(read_libsvm).transpose()?;
            let dim = train
                .dimension()
                .max(test.as_ref().map_or(0, |t| t.dimension()));
            let train = augment_bias(&train.with_dimension(dim)?)?;
            let test = test
                .map(|t| augment_bias(&t.with_dimension(dim)?))
                .transpose()?;
            Data::new(train, test)
        }
    }
}

/// One partitioning of one dataset, with its bank built on first use.
struct Split<'a> {
    config: &'a ExperimentConfig,
    data: &'a Data,
    parts: Partitioning,
    union: LabeledDataset,
    seed: u64,
    bank: Option<ModelBank>,
}

impl<'a> Split<'a> {
    fn new(config: &'a ExperimentConfig, data: &'a Data, m: usize, seed: u64) -> Result<Self> {
        let parts = partition(&data.train, m, seed)?;
        let union = parts.union(&data.train);
        Ok(Self {
            config,
            data,
            parts,
            union,
            seed,
            bank: None,
        })
    }

    fn bank(&mut self) -> Result<&ModelBank> {
        if self.bank.is_none() {
            let s = self.config.solver(self.seed);
            self.bank = Some(wpa_core::train_bank(&self.data.train, &self.parts, &s)?);
        }
        Ok(self.bank.as_ref().expect("bank was just built"))
    }

    fn row(&self, id: &str, method: Method, w: &WeightVector, iteration: usize, bytes: u64, ms: f64) -> Result<ReportRow> {
        Ok(ReportRow {
            experiment: id.into(),
            method: method.name().into(),
            m: self.parts.num_partitions(),
            l: self.parts.partition_size(),
            seed: self.seed,
            iteration,
            primal_residual: None,
            objective: Some(local_svm::objective(w, &self.union, self.config.lambda)?),
            train_accuracy: Some(local_svm::accuracy(w, &self.union)?),
            test_accuracy: self.data.test.as_ref().map(|t| local_svm::accuracy(w, t)).transpose()?,
            bytes,
            wall_clock_ms: Some(ms),
            status: "ok".into(),
        })
    }

    fn trace_row(&self, id: &str, method: Method, r: &IterationRecord) -> ReportRow {
        ReportRow {
            experiment: id.into(),
            method: method.name().into(),
            m: self.parts.num_partitions(),
            l: self.parts.partition_size(),
            seed: self.seed,
            iteration: r.iteration,
            primal_residual: Some(r.primal_residual),
            objective: Some(r.objective),
            train_accuracy: Some(r.train_accuracy),
            test_accuracy: r.test_accuracy,
            bytes: r.bytes,
            wall_clock_ms: Some(r.elapsed_ms),
            status: "ok".into(),
        }
    }

    /// Runs an ADMM method, handing every record to `sink`.
    fn admm(&mut self, method: Method, mut sink: impl FnMut(&IterationRecord)) -> Result<(WeightVector, u64)> {
        let cfg = self.config.admm(method, self.seed);
        let test = self.data.test.as_ref();
        let mut total = 0;
        let mut run = |mut step: Box<dyn FnMut() -> Result<IterationRecord> + '_>| -> Result<()> {
            for _ in 0..cfg.max_iters {
                let r = step()?;
                total += r.bytes;
                sink(&r);
                if r.primal_residual <= cfg.residual_stop {
                    break;
                }
            }
            Ok(())
        };
        match method {
            Method::Dwpa | Method::DwpaAcc => {
                self.bank()?;
                let bank = self.bank.as_ref().expect("bank was just built");
                let mut runner = DwpaRunner::new(&self.data.train, &self.parts, bank, &cfg, test)?;
                run(Box::new(|| runner.step()))?;
                let beta = wpa_core::WeightCombination(runner.state().consensus.clone());
                Ok((wpa_core::combine(bank, &beta)?, total))
            }
            Method::Dsvm | Method::DsvmAcc => {
                let mut runner = DsvmRunner::new(&self.data.train, &self.parts, &cfg, test)?;
                run(Box::new(|| runner.step()))?;
                Ok((WeightVector::new(runner.state().consensus.clone())?, total))
            }
            _ => Err(Error::contract(format!("{} is not an ADMM method", method.name()))),
        }
    }

    /// Final model of `method` plus `(iterations, bytes)`.
    fn fit(&mut self, method: Method) -> Result<(WeightVector, usize, u64)> {
        match method {
            Method::Pa => {
                let bank = self.bank()?;
                let m = bank.num_models();
                let w = wpa_core::combine(bank, &wpa_core::pa_weights(m)?)?;
                let bytes = (m * bank.dimension()) as u64 * BYTES_PER_REAL;
                Ok((w, 0, bytes))
            }
            Method::WpaCentral => {
                let settings = WpaSettings {
                    solver: self.config.solver(self.seed),
                    ridge: self.config.ridge,
                };
                self.bank()?;
                let bank = self.bank.as_ref().expect("bank was just built");
                let sol = wpa_core::solve_wpa_central(bank, &self.data.train, &self.parts, &settings)?;
                Ok((wpa_core::combine(bank, &sol.beta)?, 0, 0))
            }
            Method::SvmCentral => {
                let w = local_svm::train_linear_svm(&self.union, &self.config.solver(self.seed))?;
                Ok((w, 0, 0))
            }
            _ => {
                let mut iterations = 0;
                let (w, bytes) = self.admm(method, |r| iterations = r.iteration)?;
                Ok((w, iterations, bytes))
            }
        }
    }
}

fn cell_id(config: &ExperimentConfig, index: usize) -> String {
    format!("{}-{index:04}", config.experiment)
}

/// Final accuracy of every method for every `(M, seed)`; failed cells become
/// error rows and the sweep continues.
pub fn run_accuracy_sweep(config: &ExperimentConfig) -> Result<RunReport> {
    run_accuracy_sweep_with(config, |seed| load_data(config, seed))
}

pub fn run_accuracy_sweep_with(
    config: &ExperimentConfig,
    data_for: impl Fn(u64) -> Result<Data>,
) -> Result<RunReport> {
    config.validate(Command::Sweep)?;
    let mut report = RunReport::new();
    let mut index = 0;
    for &seed in &config.seeds {
        let data = data_for(seed)?;
        for &m in &config.partitions {
            let mut cell = Split::new(config, &data, m, seed);
            for &method in &config.methods {
                let id = cell_id(config, index);
                index += 1;
                let row = match &mut cell {
                    Ok(c) => {
                        let t0 = Instant::now();
                        c.fit(method).and_then(|(w, it, bytes)| {
                            let ms = t0.elapsed().as_secs_f64() * 1e3;
                            c.row(&id, method, &w, it, bytes, ms)
                        })
                    }
                    Err(e) => Err(Error::invalid(e.to_string())),
                };
                report.push(row.unwrap_or_else(|e| ReportRow::failed(&id, method.name(), m, seed, &e)))?;
            }
        }
    }
    report.sort();
    Ok(report)
}

/// Per-iteration ADMM metrics for every `(M, seed, method)`.
pub fn run_convergence_trace(config: &ExperimentConfig) -> Result<RunReport> {
    run_convergence_trace_with(config, |seed| load_data(config, seed))
}

pub fn run_convergence_trace_with(
    config: &ExperimentConfig,
    data_for: impl Fn(u64) -> Result<Data>,
) -> Result<RunReport> {
    config.validate(Command::Trace)?;
    trace_rows(config, data_for)
}

fn trace_rows(config: &ExperimentConfig, data_for: impl Fn(u64) -> Result<Data>) -> Result<RunReport> {
    let mut report = RunReport::new();
    let mut index = 0;
    for &seed in &config.seeds {
        let data = data_for(seed)?;
        for &m in &config.partitions {
            let mut cell = Split::new(config, &data, m, seed)?;
            for &method in &config.methods {
                let id = cell_id(config, index);
                index += 1;
                let mut records = Vec::new();
                cell.admm(method, |r| records.push(r.clone()))?;
                for r in &records {
                    report.push(cell.trace_row(&id, method, r))?;
                }
            }
        }
    }
    report.sort();
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingSummary {
    pub experiment: String,
    pub method: String,
    pub m: usize,
    pub seed: u64,
    pub iterations: usize,
    pub mean_ms: f64,
}

/// Per-iteration wall-clock rows plus their means.
pub fn run_timing(config: &ExperimentConfig) -> Result<(RunReport, Vec<TimingSummary>)> {
    run_timing_with(config, |seed| load_data(config, seed))
}

pub fn run_timing_with(
    config: &ExperimentConfig,
    data_for: impl Fn(u64) -> Result<Data>,
) -> Result<(RunReport, Vec<TimingSummary>)> {
    config.validate(Command::Timing)?;
    let report = trace_rows(config, data_for)?;
    let mut summary: Vec<TimingSummary> = Vec::new();
    for r in &report.rows {
        let ms = r.wall_clock_ms.unwrap_or(0.0);
        match summary.last_mut() {
            Some(s) if s.experiment == r.experiment => {
                s.iterations += 1;
                s.mean_ms += ms;
            }
            _ => summary.push(TimingSummary {
                experiment: r.experiment.clone(),
                method: r.method.clone(),
                m: r.m,
                seed: r.seed,
                iterations: 1,
                mean_ms: ms,
            }),
        }
    }
    for s in &mut summary {
        s.mean_ms /= s.iterations as f64;
    }
    Ok((report, summary))
}

/// Perturbation trials on the toy mixture; returns the table and the slope.
pub fn run_stability(config: &ExperimentConfig) -> Result<(Table, f64)> {
    config.validate(Command::Stability)?;
    let settings = StabilitySettings {
        solver: local_svm::SolverSettings {
            tolerance: config.tolerance,
            max_epochs: config.max_epochs,
            ..config.solver(0)
        },
        ridge: config.ridge,
        mixture: ToyMixture::new(config.minority_fraction)?,
    };
    let report = stability_lab::stability_experiment(&config.sizes, config.trials, config.seeds[0], &settings)?;
    let mut t = Table::new(&["kind", "M", "L", "ML", "trial", "seed", "theta_distance", "raw_distance"]);
    for tr in &report.trials {
        t.push(vec![
            Cell::Text("trial".into()),
            Cell::Int(tr.m as u64),
            Cell::Int(tr.l as u64),
            Cell::Int((tr.m * tr.l) as u64),
            Cell::Int(tr.trial as u64),
            Cell::Int(tr.seed),
            Cell::Real(tr.theta_distance),
            Cell::Real(tr.raw_distance),
        ])?;
    }
    for (&(m, l), &(_, mean)) in config.sizes.iter().zip(&report.means) {
        let raw: Vec<f64> = report
            .trials
            .iter()
            .filter(|x| x.m == m && x.l == l)
            .map(|x| x.raw_distance)
            .collect();
        let skipped = report
            .skipped
            .iter()
            .find(|s| s.0 == m && s.1 == l)
            .map_or(0, |s| s.2);
        t.push(vec![
            Cell::Text("mean".into()),
            Cell::Int(m as u64),
            Cell::Int(l as u64),
            Cell::Int((m * l) as u64),
            Cell::Text(format!("skipped={skipped}")),
            Cell::Empty,
            Cell::Real(mean),
            Cell::Real(raw.iter().sum::<f64>() / raw.len() as f64),
        ])?;
    }
    t.push(vec![
        Cell::Text("slope".into()),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Real(report.slope),
        Cell::Empty,
    ])?;
    Ok((t, report.slope))
}

fn bias_algorithm(method: Method) -> Result<BiasAlgorithm> {
    match method {
        Method::Pa => Ok(BiasAlgorithm::Pa),
        Method::Dwpa => Ok(BiasAlgorithm::Dwpa),
        Method::Dsvm => Ok(BiasAlgorithm::Dsvm),
        Method::SvmCentral => Ok(BiasAlgorithm::Svm),
        m => Err(Error::config("method", format!("{} has no bias estimator", m.name()))),
    }
}

/// Bias `|w - w*|` per method, seed batch and sample size. The reference
/// model comes from the first seed; distributed methods use the largest
/// value of `partitions`.
pub fn run_bias(config: &ExperimentConfig) -> Result<Table> {
    config.validate(Command::Bias)?;
    let partitions = *config.partitions.iter().max().expect("validated nonempty");
    let base = BiasSettings {
        partitions,
        solver: config.solver(0),
        admm: config.admm(Method::Dwpa, 0),
        mixture: ToyMixture::new(config.minority_fraction)?,
        reference_factor: config.reference_factor,
        ..BiasSettings::default()
    };
    let n_max = *config.sample_sizes.iter().max().expect("validated nonempty");
    let reference = stability_lab::reference_model(n_max, config.seeds[0], &base)?;
    let mut t = Table::new(&["kind", "method", "M", "seed", "N", "trial", "bias"]);
    for &method in &config.methods {
        let algorithm = bias_algorithm(method)?;
        for &seed in &config.seeds {
            let est = stability_lab::bias_experiment_with_reference(
                algorithm,
                &config.sample_sizes,
                config.trials,
                seed,
                &base,
                &reference,
            )?;
            for e in &est {
                for (i, d) in e.distances.iter().enumerate() {
                    t.push(vec![
                        Cell::Text("trial".into()),
                        Cell::Text(method.name().into()),
                        Cell::Int(partitions as u64),
                        Cell::Int(seed),
                        Cell::Int(e.sample_size as u64),
                        Cell::Int(i as u64),
                        Cell::Real(*d),
                    ])?;
                }
                t.push(vec![
                    Cell::Text("mean".into()),
                    Cell::Text(method.name().into()),
                    Cell::Int(partitions as u64),
                    Cell::Int(seed),
                    Cell::Int(e.sample_size as u64),
                    Cell::Empty,
                    Cell::Real(e.mean_bias),
                ])?;
            }
        }
    }
    Ok(t)
}

/// Separating lines `w1 x + w2 y + b = 0` of the toy figure.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperplane {
    pub method: Method,
    pub m: usize,
    pub weights: WeightVector,
}

/// Toy points (first seed) and the PA, DWPA and central-SVM lines for every
/// partition count.
pub fn run_toyfig(config: &ExperimentConfig) -> Result<(Table, Vec<Hyperplane>)> {
    config.validate(Command::Toyfig)?;
    if config.data != DataSource::Toy {
        return Err(Error::config("data", "toyfig needs the toy data source"));
    }
    let seed = config.seeds[0];
    let mixture = ToyMixture::new(config.minority_fraction)?;
    let sample = mixture.sample(config.toy_train_size, seed, 0);
    let mut points = Table::new(&["x", "y", "label", "component"]);
    for (e, c) in sample.dataset.examples().iter().zip(&sample.components) {
        let name = match c {
            ToyComponent::Blue => "blue",
            ToyComponent::RedMajor => "red_major",
            ToyComponent::RedMinor => "red_minor",
        };
        points.push(vec![
            Cell::Real(e.get(1)),
            Cell::Real(e.get(2)),
            Cell::Text(if e.label.value() > 0.0 { "+1" } else { "-1" }.into()),
            Cell::Text(name.into()),
        ])?;
    }
    let data = load_data(config, seed)?;
    let methods = if config.methods.is_empty() {
        vec![Method::Pa, Method::Dwpa, Method::SvmCentral]
    } else {
        config.methods.clone()
    };
    let mut planes = Vec::new();
    for &m in &config.partitions {
        let mut cell = Split::new(config, &data, m, seed)?;
        for &method in &methods {
            let (weights, _, _) = cell.fit(method)?;
            planes.push(Hyperplane { method, m, weights });
        }
    }
    Ok((points, planes))
}

/// Gnuplot data blocks (one per line, two endpoints each, separated by
/// two blank lines so `index` selects a block) clipped to the point cloud.
pub fn hyperplane_file(points: &LabeledDataset, planes: &[Hyperplane]) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for e in points.examples() {
        x0 = x0.min(e.get(1));
        x1 = x1.max(e.get(1));
        y0 = y0.min(e.get(2));
        y1 = y1.max(e.get(2));
    }
    let fmt = super::report::format_real;
    let mut s = String::new();
    for (i, p) in planes.iter().enumerate() {
        let w = p.weights.as_slice();
        let (a, b, c) = (w[0], w[1], w[2]);
        let _ = writeln!(
            s,
            "# index {i}: method={} M={} w=({}, {}) b={}",
            p.method.name(),
            p.m,
            fmt(a),
            fmt(b),
            fmt(c)
        );
        if b.abs() >= a.abs() && b != 0.0 {
            for x in [x0, x1] {
                let _ = writeln!(s, "{} {}", fmt(x), fmt(-(a * x + c) / b));
            }
        } else if a != 0.0 {
            for y in [y0, y1] {
                let _ = writeln!(s, "{} {}", fmt(-(b * y + c) / a), fmt(y));
            }
        }
        s.push_str("\n\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli_harness::config::parse_config;

    fn cfg(command: Command, extra: &[&str]) -> ExperimentConfig {
        let f: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        parse_config(command, None, &f).unwrap()
    }

    #[test]
    fn sweep_reports_every_cell_and_keeps_going() {
        let c = cfg(
            Command::Sweep,
            &["--method", "pa,wpa_central,svm_central", "--partitions", "1,5,400", "--toy_n", "100"],
        );
        let rep = run_accuracy_sweep(&c).unwrap();
        assert_eq!(rep.rows.len(), 9);
        let errors: Vec<_> = rep.rows.iter().filter(|r| r.status != "ok").collect();
        assert_eq!(errors.len(), 3);
        assert!(errors.iter().all(|r| r.m == 400 && r.objective.is_none()));
    }

    #[test]
    fn sweep_at_one_partition_agrees() {
        let c = cfg(
            Command::Sweep,
            &[
                "--method", "pa,wpa_central,dwpa,svm_central", "--partitions", "1",
                "--toy_n", "200", "--iterations", "100", "--ridge", "none",
            ],
        );
        let rep = run_accuracy_sweep(&c).unwrap();
        let acc: Vec<f64> = rep.rows.iter().map(|r| r.test_accuracy.unwrap()).collect();
        for a in &acc {
            assert!((a - acc[0]).abs() <= 0.005, "{acc:?}");
        }
    }

    #[test]
    fn trace_has_one_row_per_iteration() {
        let c = cfg(
            Command::Trace,
            &["--method", "dwpa,dsvm", "--partitions", "4", "--iterations", "7", "--toy_n", "80"],
        );
        let rep = run_convergence_trace(&c).unwrap();
        assert_eq!(rep.rows.len(), 14);
        assert_eq!(rep.rows[0].bytes, 2 * 4 * 4 * 8);
        assert_eq!(rep.rows[7].bytes, 2 * 4 * 3 * 8);
    }

    #[test]
    fn timing_summary_matches_rows() {
        let c = cfg(
            Command::Timing,
            &["--method", "dwpa", "--partitions", "2,4", "--iterations", "5", "--toy_n", "40"],
        );
        let (rep, summary) = run_timing(&c).unwrap();
        assert_eq!(rep.rows.len(), 10);
        assert_eq!(summary.len(), 2);
        assert!(summary.iter().all(|s| s.iterations == 5 && s.mean_ms > 0.0));
        assert!(rep.rows.iter().all(|r| r.wall_clock_ms.unwrap() > 0.0));
    }

    #[test]
    fn toyfig_emits_points_and_planes() {
        let c = cfg(Command::Toyfig, &["--partitions", "1,5", "--toy_n", "60", "--iterations", "20"]);
        let (points, planes) = run_toyfig(&c).unwrap();
        assert_eq!(points.rows.len(), 60);
        assert_eq!(planes.len(), 6);
        let data = load_data(&c, 0).unwrap();
        let text = hyperplane_file(&data.train, &planes);
        assert_eq!(text.matches("# index").count(), 6);
        assert_eq!(text.matches("\n\n\n").count(), 6);
    }
}
