//! Consensus ADMM on a simulated star cluster.
//!
//! One master holds the consensus variable (`beta` for DWPA, `z` for DSVM)
//! and the scaled duals; `M` slaves each own one partition and solve a
//! hinge-loss proximal problem per iteration. Slaves may run on any number
//! of worker threads. All reductions happen on the master in partition
//! order, so traces do not depend on the thread count.

mod cluster;
mod dsvm;
mod dwpa;

pub use cluster::{ConsensusState, Traffic, BYTES_PER_REAL};
pub use dsvm::{run_dsvm, z_update, DsvmOutcome, DsvmRunner, DsvmState};
pub use dwpa::{run_dwpa, BetaSolver, DwpaOutcome, DwpaRunner, DwpaState};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::local_svm::{HingeRows, ProxSolution, SolverSettings};

/// Starting point of the iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Initialization {
    /// DWPA: `beta = gamma_m = 1/M`, DSVM: `z = w_m = 0`; duals zero.
    #[default]
    Consensus,
    /// Every variable, duals included, set to 1.
    AllOnes,
}

/// Weight on the slave hinge sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossScale {
    /// `1/(ML)`, so the iteration minimizes the same objective as the
    /// central solvers.
    #[default]
    Normalized,
    /// Plain hinge sum.
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    pub lambda: f64,
    pub max_iters: usize,
    /// Overrelaxation weight in `[1, 2]`; `None` runs plain ADMM.
    pub overrelax_alpha: Option<f64>,
    /// Stop once the primal residual falls to this value.
    pub residual_stop: f64,
    /// Slave coordinate-descent controls (`lambda` is unused here).
    pub subproblem: SolverSettings,
    pub init: Initialization,
    pub loss_scale: LossScale,
    /// Worker threads for slave updates; 0 uses the global pool.
    pub workers: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            lambda: 1e-3,
            max_iters: 500,
            overrelax_alpha: None,
            residual_stop: 0.0,
            subproblem: SolverSettings::default(),
            init: Initialization::Consensus,
            loss_scale: LossScale::Normalized,
            workers: 0,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho {} must be > 0", self.rho)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda {} must be > 0", self.lambda)));
        }
        if let Some(a) = self.overrelax_alpha {
            check_alpha(a)?;
        }
        if !(self.residual_stop >= 0.0) {
            return Err(Error::invalid("residual_stop must be >= 0"));
        }
        if self.subproblem.tolerance <= 0.0 || self.subproblem.max_epochs == 0 {
            return Err(Error::invalid("subproblem tolerance and max_epochs must be positive"));
        }
        Ok(())
    }

    pub(crate) fn scale(&self, total: usize) -> f64 {
        match self.loss_scale {
            LossScale::Normalized => 1.0 / total as f64,
            LossScale::Unit => 1.0,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "overrelaxation alpha {alpha} must lie in [1, 2]"
        )));
    }
    Ok(())
}

/// One row of an ADMM trace.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `sqrt(sum_m |local_m - consensus|^2)`.
    pub primal_residual: f64,
    /// Regularized hinge objective of the consensus model on the training union.
    pub objective: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Bytes moved between master and slaves during this iteration.
    pub bytes: u64,
    /// Wall-clock time of the update itself (metrics excluded).
    pub elapsed_ms: f64,
    /// `|grad|` of the master objective at the new consensus point.
    pub stationarity: f64,
}

fn check_lengths(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "{what}: length {} does not match {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Slave step: `argmin_g scale * sum_l max(0, (A g)_l + 1) + (rho/2) |g - v|^2`.
///
/// `a_rows` are the rows of `A_m = -diag(y_m) X_m W`.
pub fn gamma_update(
    a_rows: &[Vec<f64>],
    v: &[f64],
    rho: f64,
    scale: f64,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    Ok(gamma_update_detailed(a_rows, v, rho, scale, settings)?.point)
}

/// [`gamma_update`] with the dual certificate (`nu_l` in `[0, scale]`).
pub fn gamma_update_detailed(
    a_rows: &[Vec<f64>],
    v: &[f64],
    rho: f64,
    scale: f64,
    settings: &SolverSettings,
) -> Result<ProxSolution> {
    if !(rho > 0.0) || !(scale >= 0.0) {
        return Err(Error::invalid("rho must be > 0 and scale >= 0"));
    }
    if !linalg::all_finite(v) || !a_rows.iter().all(|r| linalg::all_finite(r)) {
        return Err(Error::Numeric("gamma update inputs are not finite".into()));
    }
    if let Some(r) = a_rows.iter().find(|r| r.len() != v.len()) {
        return Err(Error::contract(format!(
            "row length {} does not match v length {}",
            r.len(),
            v.len()
        )));
    }
    // (A g)_l + 1 = 1 - <-A_l, g>: rows -A_l with unit labels
    let rows: Vec<Vec<f64>> = a_rows.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
    let labels = vec![1.0; rows.len()];
    let sol = HingeRows::new(&rows, &labels).solve(
        v,
        rho,
        scale,
        &crate::local_svm::CdOptions {
            tolerance: settings.tolerance,
            max_epochs: settings.max_epochs,
            seed: settings.seed,
        },
        None,
    );
    Ok(sol)
}

/// Master step: exact minimizer of
/// `lambda |W beta|^2 + (M rho / 2) |beta - target|^2`, that is
/// `beta = (2 lambda G + M rho I)^-1 M rho target`.
pub fn beta_update(
    gram: &DMatrix<f64>,
    target: &[f64],
    m: usize,
    rho: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if gram.nrows() != target.len() || gram.ncols() != target.len() {
        return Err(Error::contract("gram and target sizes disagree"));
    }
    if !(rho > 0.0) || !(lambda >= 0.0) || m == 0 {
        return Err(Error::invalid("beta update needs rho > 0, lambda >= 0, M >= 1"));
    }
    if lambda == 0.0 {
        return Ok(target.to_vec());
    }
    let eig = gram.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * gram.trace().abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "gram matrix is not positive semidefinite (eigenvalue {min:e})"
        )));
    }
    BetaSolver::new(gram, m, rho, lambda)?.solve(target)
}

/// `|2 lambda G beta + M rho (beta - target)|`.
pub fn beta_stationarity(
    gram: &DMatrix<f64>,
    beta: &[f64],
    target: &[f64],
    m: usize,
    rho: f64,
    lambda: f64,
) -> f64 {
    let b = DVector::from_column_slice(beta);
    let t = DVector::from_column_slice(target);
    let mrho = m as f64 * rho;
    let g = gram * &b * (2.0 * lambda) + (&b - &t) * mrho;
    g.norm()
}

/// `u + (gamma - beta)`; leaves `u` bit-identical when `gamma == beta`.
pub fn dual_update(u: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    check_lengths(u, gamma, "dual update")?;
    check_lengths(u, beta, "dual update")?;
    Ok(u.iter()
        .zip(gamma)
        .zip(beta)
        .map(|((u, g), b)| u + (g - b))
        .collect())
}

/// `alpha * local + (1 - alpha) * consensus_prev`; `alpha = 1` returns
/// `local` unchanged.
pub fn overrelax_step(local: &[f64], consensus_prev: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_lengths(local, consensus_prev, "overrelaxation")?;
    if alpha == 1.0 {
        return Ok(local.to_vec());
    }
    Ok(local
        .iter()
        .zip(consensus_prev)
        .map(|(l, c)| alpha * l + (1.0 - alpha) * c)
        .collect())
}

/// `sqrt(sum_m |local_m - consensus|^2)`, summed in slice order.
pub fn primal_residual(locals: &[Vec<f64>], consensus: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for l in locals {
        check_lengths(l, consensus, "primal residual")?;
        total += linalg::dist_sq(l, consensus);
    }
    Ok(total.sqrt())
}
