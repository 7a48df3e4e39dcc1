//! Consensus ADMM in feature space.

use super::cluster::{ConsensusState, Engine, Master, SlaveData};
use super::{AdmmConfig, Initialization, IterationRecord};
use crate::data_io::{LabeledDataset, LabeledExample, Partitioning};
use crate::error::{Error, Result};
use crate::linalg;
use crate::local_svm::{self, WeightVector};

pub type DsvmState = ConsensusState;

/// `z = M rho / (2 lambda + M rho) * target`, the minimizer of
/// `lambda |z|^2 + (M rho / 2) |z - target|^2`.
pub fn z_update(target: &[f64], m: usize, rho: f64, lambda: f64) -> Vec<f64> {
    let mrho = m as f64 * rho;
    let factor = mrho / (2.0 * lambda + mrho);
    target.iter().map(|t| factor * t).collect()
}

struct ZMaster {
    m: usize,
    rho: f64,
    lambda: f64,
}

impl Master for ZMaster {
    fn update(&self, target: &[f64]) -> Result<(Vec<f64>, f64)> {
        let z = z_update(target, self.m, self.rho, self.lambda);
        let mrho = self.m as f64 * self.rho;
        let grad: Vec<f64> = z
            .iter()
            .zip(target)
            .map(|(z, t)| 2.0 * self.lambda * z + mrho * (z - t))
            .collect();
        Ok((z, linalg::norm_sq(&grad).sqrt()))
    }
}

#[derive(Clone, Debug)]
pub struct DsvmOutcome {
    pub weights: WeightVector,
    pub trace: Vec<IterationRecord>,
    pub state: DsvmState,
    pub traffic: super::Traffic,
}

pub struct DsvmRunner<'a> {
    engine: Engine<LabeledExample, ZMaster>,
    train: LabeledDataset,
    test: Option<&'a LabeledDataset>,
    config: AdmmConfig,
}

impl<'a> DsvmRunner<'a> {
    pub fn new(
        dataset: &LabeledDataset,
        partitioning: &Partitioning,
        config: &AdmmConfig,
        test: Option<&'a LabeledDataset>,
    ) -> Result<Self> {
        config.validate()?;
        let m = partitioning.num_partitions();
        let d = dataset.dimension();
        if let Some(t) = test {
            if t.dimension() != d {
                return Err(Error::contract("test set and training dimensions differ"));
            }
        }
        let slaves = (0..m)
            .map(|p| {
                let local = partitioning.subset(dataset, p);
                let labels = local.labels();
                SlaveData::new(local.examples().to_vec(), labels)
            })
            .collect::<Result<Vec<_>>>()?;
        let init = match config.init {
            Initialization::Consensus => ConsensusState::uniform(m, vec![0.0; d], 0.0),
            Initialization::AllOnes => ConsensusState::uniform(m, vec![1.0; d], 1.0),
        };
        let master = ZMaster {
            m,
            rho: config.rho,
            lambda: config.lambda,
        };
        Ok(Self {
            engine: Engine::new(slaves, master, *config, partitioning.total(), init)?,
            train: partitioning.union(dataset),
            test,
            config: *config,
        })
    }

    pub fn state(&self) -> &DsvmState {
        self.engine.state()
    }

    pub fn set_state(&mut self, state: DsvmState) -> Result<()> {
        self.engine.set_state(state)
    }

    pub fn traffic(&self) -> &super::Traffic {
        self.engine.traffic()
    }

    pub fn step(&mut self) -> Result<IterationRecord> {
        let out = self.engine.step()?;
        let w = WeightVector::new(self.engine.state().consensus.clone())?;
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

    pub fn run(mut self) -> Result<DsvmOutcome> {
        let mut trace = Vec::with_capacity(self.config.max_iters);
        for _ in 0..self.config.max_iters {
            let rec = self.step()?;
            let done = rec.primal_residual <= self.config.residual_stop;
            trace.push(rec);
            if done {
                break;
            }
        }
        let state = self.engine.state().clone();
        Ok(DsvmOutcome {
            weights: WeightVector::new(state.consensus.clone())?,
            trace,
            traffic: self.engine.traffic().clone(),
            state,
        })
    }
}

/// Consensus ADMM on the full feature vector (`w_m = z`).
pub fn run_dsvm(
    dataset: &LabeledDataset,
    partitioning: &Partitioning,
    config: &AdmmConfig,
    test: Option<&LabeledDataset>,
) -> Result<DsvmOutcome> {
    DsvmRunner::new(dataset, partitioning, config, test)?.run()
}
