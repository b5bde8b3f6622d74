//! Solver family: forward-backward splitting, accelerated proximal gradients
//! with adaptive restart, plain and accelerated Schwarz iterations, the
//! projected Gauss-Seidel coarse solver for the obstacle problem, and a
//! preconditioned conjugate gradient baseline for the linear case.

pub mod coarse;
pub mod fista;
pub mod pcg;
pub mod schwarz;

pub use coarse::projected_gauss_seidel_coarse;
pub use fista::{
    backtrack_step, fb_step, full_space_solve, momentum_update, restart_test, run_fista,
    FistaOutcome, FistaVariant, FullSolverKind, Objective,
};
pub use pcg::pcg_as;
pub use schwarz::{accel_asm_solve, asm_iterate, asm_solve, SchwarzContext};

/// Threshold of the squared-difference stop criteria.
pub const STOP_THRESHOLD: f64 = 1e-20;

/// Iteration cap for coarse-space solves (a warning is logged when it binds).
pub(crate) const COARSE_ITER_CAP: usize = 1000;

/// Configuration of the inner (local and full-space) proximal solvers.
#[derive(Debug, Clone)]
pub struct LocalSolverConfig {
    /// Inner iteration cap; binding it logs a warning instead of failing.
    pub max_iters: usize,
    /// Threshold for the scaled squared-difference stop statistic.
    pub stop_tol: f64,
    /// Use the sufficient-decrease line search for the step size.
    pub backtracking: bool,
    /// Growth factor of the line search.
    pub eta: f64,
    /// Initial Lipschitz estimate.
    pub initial_lipschitz: f64,
    /// Fixed forward-backward step; set for the dual-TV subproblems (1/8).
    pub fixed_step: Option<f64>,
}

impl Default for LocalSolverConfig {
    fn default() -> Self {
        LocalSolverConfig {
            max_iters: 500,
            stop_tol: STOP_THRESHOLD,
            backtracking: true,
            eta: 2.0,
            initial_lipschitz: 1.0,
            fixed_step: None,
        }
    }
}

impl LocalSolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.max_iters == 0 || !(self.stop_tol > 0.0) || !(self.eta > 1.0)
            || !(self.initial_lipschitz > 0.0)
            || self.fixed_step.is_some_and(|s| !(s > 0.0))
        {
            return Err(crate::Error::InvalidParams("bad inner solver configuration".into()));
        }
        Ok(())
    }
}

/// Momentum bookkeeping of the accelerated outer iteration.
#[derive(Debug, Clone)]
pub struct MomentumState {
    pub t: f64,
    pub beta: f64,
    pub u_prev: Vec<f64>,
    pub u_curr: Vec<f64>,
    pub v_curr: Vec<f64>,
}

impl MomentumState {
    pub fn new(u0: Vec<f64>) -> Self {
        MomentumState { t: 1.0, beta: 0.0, u_prev: u0.clone(), u_curr: u0.clone(), v_curr: u0 }
    }

    /// Resets the momentum after a restart.
    pub fn restart(&mut self) {
        self.t = 1.0;
        self.beta = 0.0;
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub energy_error: f64,
    pub restarted: bool,
    pub wall_s: f64,
}

/// Per-outer-iteration record of a solver run.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    pub(crate) fn push(&mut self, energy: f64, reference: f64, restarted: bool, wall_s: f64) {
        let iter = self.records.len();
        self.records.push(IterationRecord {
            iter,
            energy,
            energy_error: energy - reference,
            restarted,
            wall_s,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_energy(&self) -> Option<f64> {
        self.records.last().map(|r| r.energy)
    }
}

/// Local stop criterion: h² ‖w_new − w_old‖² < 1e-20 (strict).
pub fn stop_local(h: f64, w_new: &[f64], w_old: &[f64]) -> bool {
    debug_assert_eq!(w_new.len(), w_old.len());
    let diff_sq: f64 = w_new.iter().zip(w_old).map(|(a, b)| (a - b) * (a - b)).sum();
    h * h * diff_sq < STOP_THRESHOLD
}
