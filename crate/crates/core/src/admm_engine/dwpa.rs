//! Distributed weighted parameter averaging: consensus ADMM over `beta`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cluster::{ConsensusState, Engine, Master, SlaveData};
use super::{beta_stationarity, AdmmConfig, Initialization, IterationRecord};
use crate::data_io::{LabeledDataset, Partitioning};
use crate::error::{Error, Result};
use crate::local_svm::{self, WeightVector};
use crate::wpa_core::{combine, ModelBank, WeightCombination};

pub type DwpaState = ConsensusState;

/// Pre-factored master update `beta = (2 lambda G + M rho I)^-1 M rho target`.
pub struct BetaSolver {
    chol: Cholesky<f64, Dyn>,
    gram: DMatrix<f64>,
    m: usize,
    rho: f64,
    lambda: f64,
}

impl BetaSolver {
    pub fn new(gram: &DMatrix<f64>, m: usize, rho: f64, lambda: f64) -> Result<Self> {
        let mrho = m as f64 * rho;
        let mut a = gram * (2.0 * lambda);
        for i in 0..a.nrows() {
            a[(i, i)] += mrho;
        }
        let chol = Cholesky::new(a).ok_or_else(|| {
            Error::Numeric("2 lambda G + M rho I is not positive definite".into())
        })?;
        Ok(Self {
            chol,
            gram: gram.clone(),
            m,
            rho,
            lambda,
        })
    }

    pub fn solve(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() != self.gram.nrows() {
            return Err(Error::contract("target length does not match the gram"));
        }
        let rhs = DVector::from_column_slice(target) * (self.m as f64 * self.rho);
        Ok(self.chol.solve(&rhs).as_slice().to_vec())
    }
}

impl Master for BetaSolver {
    fn update(&self, target: &[f64]) -> Result<(Vec<f64>, f64)> {
        let beta = self.solve(target)?;
        let s = beta_stationarity(&self.gram, &beta, target, self.m, self.rho, self.lambda);
        Ok((beta, s))
    }
}

/// Result of a DWPA run.
#[derive(Clone, Debug)]
pub struct DwpaOutcome {
    pub beta: WeightCombination,
    pub weights: WeightVector,
    pub trace: Vec<IterationRecord>,
    pub state: DwpaState,
    pub traffic: super::Traffic,
    /// Largest beta-update stationarity residual over the run.
    pub max_stationarity: f64,
}

/// Step-by-step DWPA driver; [`run_dwpa`] wraps it.
pub struct DwpaRunner<'a> {
    engine: Engine<Vec<f64>, BetaSolver>,
    bank: &'a ModelBank,
    train: LabeledDataset,
    test: Option<&'a LabeledDataset>,
    config: AdmmConfig,
}

impl<'a> DwpaRunner<'a> {
    pub fn new(
        dataset: &LabeledDataset,
        partitioning: &Partitioning,
        bank: &'a ModelBank,
        config: &AdmmConfig,
        test: Option<&'a LabeledDataset>,
    ) -> Result<Self> {
        config.validate()?;
        let m = bank.num_models();
        if partitioning.num_partitions() != m {
            return Err(Error::contract(format!(
                "bank has {m} models for {} partitions",
                partitioning.num_partitions()
            )));
        }
        if dataset.dimension() != bank.dimension() {
            return Err(Error::contract("dataset and bank dimensions differ"));
        }
        if let Some(t) = test {
            if t.dimension() != bank.dimension() {
                return Err(Error::contract("test set and bank dimensions differ"));
            }
        }
        let slaves = (0..m)
            .map(|p| {
                let local = partitioning.subset(dataset, p);
                // rows a_l = W^T x_l, i.e. A_m = -diag(y) X_m W row-negated
                let rows = local.examples().iter().map(|e| bank.project_row(e)).collect();
                SlaveData::new(rows, local.labels())
            })
            .collect::<Result<Vec<_>>>()?;
        let init = match config.init {
            Initialization::Consensus => ConsensusState::uniform(m, vec![1.0 / m as f64; m], 0.0),
            Initialization::AllOnes => ConsensusState::uniform(m, vec![1.0; m], 1.0),
        };
        let master = BetaSolver::new(bank.gram(), m, config.rho, config.lambda)?;
        Ok(Self {
            engine: Engine::new(slaves, master, *config, partitioning.total(), init)?,
            bank,
            train: partitioning.union(dataset),
            test,
            config: *config,
        })
    }

    pub fn state(&self) -> &DwpaState {
        self.engine.state()
    }

    pub fn set_state(&mut self, state: DwpaState) -> Result<()> {
        self.engine.set_state(state)
    }

    pub fn traffic(&self) -> &super::Traffic {
        self.engine.traffic()
    }

    /// One slave/master/dual round followed by metric evaluation.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let out = self.engine.step()?;
        let beta = WeightCombination(self.engine.state().consensus.clone());
        let w = combine(self.bank, &beta)?;
        Ok(IterationRecord {
            iteration: self.engine.state().iteration,
            primal_residual: out.residual,
            objective: local_svm::objective(&w, &self.train, self.config.lambda)?,
            train_accuracy: local_svm::accuracy(&w, &self.train)?,
            test_accuracy: self.test.map(|t| local_svm::accuracy(&w, t)).transpose()?,
            bytes: out.bytes,
            elapsed_ms: out.elapsed_ms,
            stationarity: out.stationarity,
        })
    }

    pub fn run(mut self) -> Result<DwpaOutcome> {
        let mut trace = Vec::with_capacity(self.config.max_iters);
        let mut max_stationarity: f64 = 0.0;
        for _ in 0..self.config.max_iters {
            let rec = self.step()?;
            max_stationarity = max_stationarity.max(rec.stationarity);
            let done = rec.primal_residual <= self.config.residual_stop;
            trace.push(rec);
            if done {
                break;
            }
        }
        let state = self.engine.state().clone();
        let beta = WeightCombination(state.consensus.clone());
        Ok(DwpaOutcome {
            weights: combine(self.bank, &beta)?,
            beta,
            trace,
            traffic: self.engine.traffic().clone(),
            state,
            max_stationarity,
        })
    }
}

/// Runs DWPA over the partitioning, learning `beta` for
/// the bank trained on the same partitions.
pub fn run_dwpa(
    dataset: &LabeledDataset,
    partitioning: &Partitioning,
    bank: &ModelBank,
    config: &AdmmConfig,
    test: Option<&LabeledDataset>,
) -> Result<DwpaOutcome> {
    DwpaRunner::new(dataset, partitioning, bank, config, test)?.run()
}
