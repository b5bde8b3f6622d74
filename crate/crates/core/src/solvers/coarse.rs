//! Coarse-space solves of the two-level method. The nonlinear energies use
//! the same accelerated engine as the subdomains; the obstacle problem uses
//! a projected nonlinear Gauss-Seidel sweep that honors the fine-node bounds
//! through the interpolation weights.

use crate::decomposition::CoarseOperator;
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{FeFunction, InterpOperator};
use crate::problems::{ProblemInstance, ProblemKind};
use crate::solvers::fista::Objective;
use crate::solvers::{LocalSolverConfig, COARSE_ITER_CAP};

/// Coarse objective in the coarse variable w: F(base + interpolation of w).
pub(crate) struct CoarseObjective<'a> {
    pub p: &'a ProblemInstance,
    pub interp: &'a InterpOperator,
    pub base: &'a [f64],
    /// H² weight of the coarse stop statistic.
    pub hh_coarse: f64,
}

impl<'a> CoarseObjective<'a> {
    fn lift(&self, w: &[f64]) -> Vec<f64> {
        let mut fine = self.base.to_vec();
        self.interp.apply_add(w, &mut fine);
        fine
    }
}

impl<'a> Objective for CoarseObjective<'a> {
    fn dim(&self) -> usize {
        self.interp.coarse_dim()
    }

    fn smooth_value(&self, w: &[f64]) -> f64 {
        self.p.smooth_value(&self.lift(w))
    }

    fn smooth_grad(&self, w: &[f64], out: &mut [f64]) {
        let fine = self.lift(w);
        let mut g = vec![0.0; self.interp.fine_dim()];
        self.p.smooth_grad_into(&fine, &mut g);
        self.interp.apply_transpose(&g, out);
    }

    fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.hh_coarse * d
    }
}

/// Cyclic projected coordinate descent over the coarse DOFs of an obstacle
/// instance. Each 1D step solves the exact quadratic minimization, then
/// clamps to the interval that keeps every fine node of the hat's support
/// between the obstacles. Stops when H²‖Δw‖² over a sweep falls below the
/// tolerance, or at the iteration cap (with a warning).
pub(crate) fn obstacle_coarse_gs(
    p: &ProblemInstance,
    a_coarse: &SparseMatrix,
    interp: &InterpOperator,
    base: &[f64],
    hh_coarse: f64,
    stop_tol: f64,
) -> Result<Vec<f64>> {
    let ProblemKind::Obstacle { lower, upper } = p.kind() else {
        return Err(Error::Unsupported("projected Gauss-Seidel needs an obstacle instance".into()));
    };
    let dim = interp.coarse_dim();
    let mut w = vec![0.0; dim];
    let mut lifted = vec![0.0; interp.fine_dim()]; // interpolation of w only
    // fixed linear term: restriction of grad F(base)
    let mut g_fine = vec![0.0; interp.fine_dim()];
    p.smooth_grad_into(base, &mut g_fine);
    let mut g_lin = vec![0.0; dim];
    interp.apply_transpose(&g_fine, &mut g_lin);
    let diag: Vec<f64> = (0..dim).map(|j| a_coarse.get(j, j)).collect();

    for _ in 0..COARSE_ITER_CAP {
        let mut sweep_diff_sq = 0.0;
        for j in 0..dim {
            let aw_j: f64 = a_coarse.row(j).map(|(c, v)| v * w[c]).sum();
            let candidate = w[j] - (aw_j + g_lin[j]) / diag[j];
            // feasible interval from the fine-node constraints in the support
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for &(i, phi) in interp.col(j) {
                let fixed = base[i] + lifted[i] - w[j] * phi;
                lo = lo.max((lower[i] - fixed) / phi);
                hi = hi.min((upper[i] - fixed) / phi);
            }
            if lo > hi + 1e-12 {
                return Err(Error::Internal(format!(
                    "empty feasible interval for coarse dof {j}: [{lo}, {hi}]"
                )));
            }
            let new = candidate.clamp(lo, hi.max(lo));
            let delta = new - w[j];
            if delta != 0.0 {
                for &(i, phi) in interp.col(j) {
                    lifted[i] += delta * phi;
                }
                w[j] = new;
                sweep_diff_sq += delta * delta;
            }
        }
        if hh_coarse * sweep_diff_sq < stop_tol {
            return Ok(w);
        }
    }
    log::warn!("coarse Gauss-Seidel hit the sweep cap of {COARSE_ITER_CAP}");
    Ok(w)
}

/// Public entry: coarse correction of an obstacle instance by projected
/// Gauss-Seidel, assembling the coarse operator from the interpolation.
pub fn projected_gauss_seidel_coarse(
    p: &ProblemInstance,
    base: &FeFunction,
    coarse: &CoarseOperator,
    cfg: &LocalSolverConfig,
) -> Result<Vec<f64>> {
    p.check_space(base)?;
    let a_coarse = crate::linalg::assemble_stiffness(&coarse.space);
    let h_coarse = coarse.space.spacing();
    obstacle_coarse_gs(
        p,
        &a_coarse,
        &coarse.interp,
        base.values(),
        h_coarse * h_coarse,
        cfg.stop_tol,
    )
}
