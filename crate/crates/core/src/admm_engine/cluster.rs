//! The simulated master/slave cluster shared by DWPA and DSVM.

use std::time::Instant;

use rayon::prelude::*;

use super::{overrelax_step, AdmmConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::local_svm::{CdOptions, FeatureRow, HingeRows, ProxSolution};
use crate::rng;

/// Every real exchanged between master and slave costs 8 bytes.
pub const BYTES_PER_REAL: u64 = 8;

/// Byte counters for master/slave exchanges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Traffic {
    pub iterations: u64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

impl Traffic {
    pub fn total(&self) -> u64 {
        self.uplink_bytes + self.downlink_bytes
    }

    pub fn per_iteration(&self) -> Option<u64> {
        (self.iterations > 0).then(|| self.total() / self.iterations)
    }
}

/// Master consensus point, per-slave local iterates and scaled duals.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusState {
    pub consensus: Vec<f64>,
    pub locals: Vec<Vec<f64>>,
    pub duals: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl ConsensusState {
    pub fn uniform(slaves: usize, consensus: Vec<f64>, dual_value: f64) -> Self {
        let dim = consensus.len();
        Self {
            locals: vec![consensus.clone(); slaves],
            duals: vec![vec![dual_value; dim]; slaves],
            consensus,
            iteration: 0,
        }
    }

    fn validate(&self, slaves: usize, dim: usize) -> Result<()> {
        let ok = self.consensus.len() == dim
            && self.locals.len() == slaves
            && self.duals.len() == slaves
            && self.locals.iter().chain(&self.duals).all(|v| v.len() == dim);
        if !ok {
            return Err(Error::contract("state shape does not match the cluster"));
        }
        let finite = linalg::all_finite(&self.consensus)
            && self.locals.iter().chain(&self.duals).all(|v| linalg::all_finite(v));
        if !finite {
            return Err(Error::Numeric("state has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Consensus update run by the master.
pub(crate) trait Master: Sync {
    /// New consensus point from `target = mean(local) + mean(dual)`, plus the
    /// gradient norm of the master objective at that point.
    fn update(&self, target: &[f64]) -> Result<(Vec<f64>, f64)>;
}

/// One slave's partition.
pub(crate) struct SlaveData<R> {
    pub rows: Vec<R>,
    pub labels: Vec<f64>,
    pub norms: Vec<f64>,
}

impl<R: FeatureRow> SlaveData<R> {
    pub fn new(rows: Vec<R>, labels: Vec<f64>) -> Result<Self> {
        let norms: Vec<f64> = rows.iter().map(FeatureRow::norm_sq).collect();
        if !linalg::all_finite(&norms) {
            return Err(Error::Numeric("slave data has non-finite features".into()));
        }
        Ok(Self { rows, labels, norms })
    }
}

pub(crate) struct StepOutcome {
    pub residual: f64,
    pub stationarity: f64,
    pub bytes: u64,
    pub elapsed_ms: f64,
}

pub(crate) struct Engine<R, M> {
    slaves: Vec<SlaveData<R>>,
    master: M,
    config: AdmmConfig,
    scale: f64,
    state: ConsensusState,
    warm: Vec<Vec<f64>>,
    pool: Option<rayon::ThreadPool>,
    traffic: Traffic,
}

impl<R: FeatureRow + Sync, M: Master> Engine<R, M> {
    pub fn new(
        slaves: Vec<SlaveData<R>>,
        master: M,
        config: AdmmConfig,
        total: usize,
        state: ConsensusState,
    ) -> Result<Self> {
        config.validate()?;
        state.validate(slaves.len(), state.consensus.len())?;
        let pool = match config.workers {
            0 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Setup(format!("worker pool: {e}")))?,
            ),
        };
        let warm = slaves.iter().map(|s| vec![0.0; s.rows.len()]).collect();
        Ok(Self {
            scale: config.scale(total),
            slaves,
            master,
            config,
            state,
            warm,
            pool,
            traffic: Traffic::default(),
        })
    }

    pub fn state(&self) -> &ConsensusState {
        &self.state
    }

    pub fn set_state(&mut self, state: ConsensusState) -> Result<()> {
        state.validate(self.slaves.len(), self.state.consensus.len())?;
        self.state = state;
        Ok(())
    }

    pub fn traffic(&self) -> &Traffic {
        &self.traffic
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let start = Instant::now();
        let k = self.state.iteration + 1;
        let dim = self.state.consensus.len();
        let slaves_n = self.slaves.len();
        let rho = self.config.rho;
        let scale = self.scale;
        let sub = self.config.subproblem;

        // downlink: v_m = consensus - u_m
        let centers: Vec<Vec<f64>> = self
            .state
            .duals
            .iter()
            .map(|u| self.state.consensus.iter().zip(u).map(|(c, u)| c - u).collect())
            .collect();

        let slaves = &self.slaves;
        let warm = &self.warm;
        let solve = |m: usize| -> ProxSolution {
            let s = &slaves[m];
            let options = CdOptions {
                tolerance: sub.tolerance,
                max_epochs: sub.max_epochs,
                seed: rng::child_seed(sub.seed, rng::stream_id(m as u64, k as u64)),
            };
            HingeRows::with_norms(&s.rows, &s.labels, &s.norms).solve(
                &centers[m],
                rho,
                scale,
                &options,
                Some(&warm[m]),
            )
        };
        let solutions: Vec<ProxSolution> = match &self.pool {
            Some(pool) => pool.install(|| (0..slaves_n).into_par_iter().map(solve).collect()),
            None => (0..slaves_n).into_par_iter().map(solve).collect(),
        };
        if solutions.iter().any(|s| !linalg::all_finite(&s.point)) {
            return Err(Error::Numeric(format!("slave update diverged at iteration {k}")));
        }

        // uplink: local iterates
        let mut locals = Vec::with_capacity(slaves_n);
        for (m, sol) in solutions.into_iter().enumerate() {
            self.warm[m] = sol.dual;
            locals.push(sol.point);
        }
        let hats: Vec<Vec<f64>> = match self.config.overrelax_alpha {
            Some(alpha) => locals
                .iter()
                .map(|l| overrelax_step(l, &self.state.consensus, alpha))
                .collect::<Result<_>>()?,
            None => locals.clone(),
        };

        let mean_hat = linalg::mean_of(hats.iter().map(Vec::as_slice), dim);
        let mean_dual = linalg::mean_of(self.state.duals.iter().map(Vec::as_slice), dim);
        let target: Vec<f64> = mean_hat.iter().zip(&mean_dual).map(|(a, b)| a + b).collect();
        let (consensus, stationarity) = self.master.update(&target)?;

        for (u, hat) in self.state.duals.iter_mut().zip(&hats) {
            for ((ui, hi), ci) in u.iter_mut().zip(hat).zip(&consensus) {
                *ui += hi - ci;
            }
        }
        let residual = super::primal_residual(&locals, &consensus)?;

        let down = slaves_n as u64 * dim as u64 * BYTES_PER_REAL;
        let up = down;
        self.traffic.iterations += 1;
        self.traffic.downlink_bytes += down;
        self.traffic.uplink_bytes += up;

        self.state.consensus = consensus;
        self.state.locals = locals;
        self.state.iteration = k;
        Ok(StepOutcome {
            residual,
            stationarity,
            bytes: down + up,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}
