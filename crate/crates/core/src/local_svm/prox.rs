//! Dual coordinate ascent for the hinge-loss proximal problem
//!
//! ```text
//! minimize_g  s * sum_l max(0, 1 - y_l <a_l, g>)  +  (rho/2) |g - v|^2
//! ```
//!
//! The dual variables `nu_l` live in the box `[0, s]` and the primal point is
//! recovered as `g(nu) = v + (1/rho) sum_l nu_l y_l a_l`. With `v = 0`,
//! `rho = 2 lambda` and `s = 1/n` this is the regularized SVM; with `v` set
//! to a consensus point it is an ADMM slave update. Each coordinate step is
//! an exact maximization of the dual along `nu_l`, clipped to the box, so the
//! dual objective never decreases.

use std::borrow::Cow;

use rand::seq::SliceRandom;

use super::FeatureRow;
use crate::linalg;
use crate::rng;

/// Stopping controls for one coordinate-ascent solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdOptions {
    /// Absolute duality-gap target.
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Seed of the per-epoch permutation stream.
    pub seed: u64,
}

/// Rows `a_l` with labels `y_l` and cached squared norms.
pub struct HingeRows<'a, R> {
    rows: &'a [R],
    labels: &'a [f64],
    norms: Cow<'a, [f64]>,
}

#[derive(Clone, Debug)]
pub struct ProxSolution {
    /// Primal minimizer estimate `g(nu)`.
    pub point: Vec<f64>,
    /// Dual variables, each in `[0, upper]`.
    pub dual: Vec<f64>,
    /// Box bound `s`.
    pub upper: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub epochs: usize,
    pub converged: bool,
    /// Dual objective after every epoch (the initial value first).
    pub dual_history: Vec<f64>,
}

impl ProxSolution {
    pub fn gap(&self) -> f64 {
        self.primal_objective - self.dual_objective
    }
}

impl<'a, R: FeatureRow> HingeRows<'a, R> {
    pub fn new(rows: &'a [R], labels: &'a [f64]) -> Self {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        let norms = rows.iter().map(FeatureRow::norm_sq).collect();
        Self {
            rows,
            labels,
            norms: Cow::Owned(norms),
        }
    }

    /// Reuses squared norms computed earlier (see [`HingeRows::norms`]).
    pub fn with_norms(rows: &'a [R], labels: &'a [f64], norms: &'a [f64]) -> Self {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        assert_eq!(rows.len(), norms.len(), "one norm per row");
        Self {
            rows,
            labels,
            norms: Cow::Borrowed(norms),
        }
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.norms.iter().all(|v| v.is_finite())
    }

    /// `s * sum_l max(0, 1 - y_l <a_l, point>)`.
    pub fn hinge_sum(&self, point: &[f64], loss_scale: f64) -> f64 {
        let total: f64 = self
            .rows
            .iter()
            .zip(self.labels)
            .map(|(r, &y)| (1.0 - y * r.dot(point)).max(0.0))
            .sum();
        loss_scale * total
    }

    /// Solves the proximal problem around `center`. `warm` seeds the dual
    /// variables (clipped into the box).
    pub fn solve(
        &self,
        center: &[f64],
        rho: f64,
        loss_scale: f64,
        options: &CdOptions,
        warm: Option<&[f64]>,
    ) -> ProxSolution {
        let n = self.rows.len();
        let upper = loss_scale;
        let mut dual: Vec<f64> = match warm {
            Some(w) => w.iter().map(|v| v.clamp(0.0, upper)).collect(),
            None => vec![0.0; n],
        };
        let mut point = center.to_vec();
        for (l, &nu) in dual.iter().enumerate() {
            if nu > 0.0 && self.norms[l] > 0.0 {
                self.rows[l].add_scaled_to(nu * self.labels[l] / rho, &mut point);
            }
        }

        let mut rng = rng::stream(options.seed, 0x4344);
        let mut order: Vec<usize> = (0..n).collect();
        let (mut primal, mut dual_obj) = self.objectives(&point, center, &dual, rho, loss_scale);
        let mut history = vec![dual_obj];
        let mut epochs = 0;
        let mut converged = primal - dual_obj <= options.tolerance;

        while !converged && epochs < options.max_epochs {
            order.shuffle(&mut rng);
            for &l in &order {
                let y = self.labels[l];
                let q = self.norms[l];
                let grad = 1.0 - y * self.rows[l].dot(&point);
                let next = if q > 0.0 {
                    (dual[l] + rho * grad / q).clamp(0.0, upper)
                } else if grad > 0.0 {
                    upper
                } else {
                    0.0
                };
                let delta = next - dual[l];
                if delta != 0.0 {
                    if q > 0.0 {
                        self.rows[l].add_scaled_to(delta * y / rho, &mut point);
                    }
                    dual[l] = next;
                }
            }
            epochs += 1;
            (primal, dual_obj) = self.objectives(&point, center, &dual, rho, loss_scale);
            history.push(dual_obj);
            converged = primal - dual_obj <= options.tolerance;
        }

        ProxSolution {
            point,
            dual,
            upper,
            primal_objective: primal,
            dual_objective: dual_obj,
            epochs,
            converged,
            dual_history: history,
        }
    }

    /// Primal and dual objective values at `(point, dual)`.
    fn objectives(
        &self,
        point: &[f64],
        center: &[f64],
        dual: &[f64],
        rho: f64,
        loss_scale: f64,
    ) -> (f64, f64) {
        let diff: Vec<f64> = point.iter().zip(center).map(|(g, v)| g - v).collect();
        let quad = 0.5 * rho * linalg::norm_sq(&diff);
        let primal = self.hinge_sum(point, loss_scale) + quad;
        // sum_l nu_l y_l <a_l, v> = rho <g - v, v>
        let dual_obj = dual.iter().sum::<f64>() - rho * linalg::dot(&diff, center) - quad;
        (primal, dual_obj)
    }
}
