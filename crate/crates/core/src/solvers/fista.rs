//! Forward-backward splitting and its accelerated variants.
//!
//! The engine works on an abstract objective (smooth value and gradient plus
//! a projection realizing the proximal map of the box indicator), so the same
//! code drives full-space solves, subdomain solves, and coarse-space solves.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::mesh::FeFunction;
use crate::problems::{self, FullObjective, ProblemInstance};
use crate::solvers::{LocalSolverConfig, Trace};

/// Cap on the backtracked Lipschitz estimate before declaring divergence.
const BACKTRACK_LIMIT: f64 = 1e16;

/// Smooth-plus-box objective seen by the forward-backward engine.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Value of the smooth part F.
    fn smooth_value(&self, u: &[f64]) -> f64;
    /// Gradient of F.
    fn smooth_grad(&self, u: &[f64], out: &mut [f64]);
    /// Euclidean projection onto dom G (identity when G = 0).
    fn project(&self, _u: &mut [f64]) {}
    /// Scaled squared-difference statistic used by the stop criterion.
    fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64;
}

impl Objective for ProblemInstance {
    fn dim(&self) -> usize {
        self.space().dof_count()
    }

    fn smooth_value(&self, u: &[f64]) -> f64 {
        ProblemInstance::smooth_value(self, u)
    }

    fn smooth_grad(&self, u: &[f64], out: &mut [f64]) {
        self.smooth_grad_into(u, out);
    }

    fn project(&self, u: &mut [f64]) {
        self.project_feasible(u);
    }

    fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64 {
        ProblemInstance::stop_stat(self, a, b)
    }
}

/// t_{n+1} = (1 + sqrt(1 + 4 t_n²)) / 2 and the momentum weight
/// beta = (t_n − 1) / t_{n+1}.
pub fn momentum_update(t: f64) -> (f64, f64) {
    debug_assert!(t >= 1.0);
    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
    (t_next, (t - 1.0) / t_next)
}

/// Gradient-based restart test: true iff ⟨v − u_new, u_new − u_old⟩ > 0.
pub fn restart_slices(v: &[f64], u_new: &[f64], u_old: &[f64]) -> bool {
    let mut acc = 0.0;
    for i in 0..v.len() {
        acc += (v[i] - u_new[i]) * (u_new[i] - u_old[i]);
    }
    acc > 0.0
}

/// Restart test on functions of a common space.
pub fn restart_test(v: &FeFunction, u_new: &FeFunction, u_old: &FeFunction) -> bool {
    debug_assert!(v.same_space(u_new) && v.same_space(u_old));
    restart_slices(v.values(), u_new.values(), u_old.values())
}

fn fb_step_into<O: Objective>(obj: &O, v: &[f64], tau: f64, grad: &mut [f64], out: &mut Vec<f64>) {
    obj.smooth_grad(v, grad);
    out.clear();
    out.extend(v.iter().zip(grad.iter()).map(|(&vi, &gi)| vi - tau * gi));
    obj.project(out);
}

/// One forward-backward step: prox_G(v − tau grad F(v)).
pub fn fb_step_obj<O: Objective>(obj: &O, v: &[f64], tau: f64) -> Vec<f64> {
    let mut grad = vec![0.0; obj.dim()];
    let mut out = Vec::with_capacity(obj.dim());
    fb_step_into(obj, v, tau, &mut grad, &mut out);
    out
}

/// Forward-backward step on a problem instance.
pub fn fb_step(p: &ProblemInstance, v: &FeFunction, tau: f64) -> Result<FeFunction> {
    p.check_space(v)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParams(format!("step size {tau} must be positive")));
    }
    FeFunction::from_values(v.space().clone(), fb_step_obj(p, v.values(), tau))
}

/// Backtracking step: finds the smallest L = l_in * eta^j satisfying the
/// sufficient-decrease test and returns (u_L, L, F(u_L)).
fn backtrack_inner<O: Objective>(
    obj: &O,
    v: &[f64],
    lip: &mut f64,
    eta: f64,
    grad: &mut [f64],
    out: &mut Vec<f64>,
) -> Result<f64> {
    obj.smooth_grad(v, grad);
    let fv = obj.smooth_value(v);
    loop {
        let tau = 1.0 / *lip;
        out.clear();
        out.extend(v.iter().zip(grad.iter()).map(|(&vi, &gi)| vi - tau * gi));
        obj.project(out);
        let fu = obj.smooth_value(out);
        let mut lin = 0.0;
        let mut dist_sq = 0.0;
        for i in 0..v.len() {
            let d = out[i] - v[i];
            lin += grad[i] * d;
            dist_sq += d * d;
        }
        let surrogate = fv + lin + 0.5 * *lip * dist_sq;
        // roundoff slack keeps the estimate from inflating near convergence
        if fu <= surrogate + 1e-12 * (1.0 + fv.abs()) {
            return Ok(fu);
        }
        *lip *= eta;
        if *lip > BACKTRACK_LIMIT {
            return Err(Error::SolverDivergence(format!(
                "backtracking exceeded L = {BACKTRACK_LIMIT:.1e}"
            )));
        }
    }
}

/// Public backtracking step on a problem instance; returns the new point and
/// the accepted Lipschitz estimate.
pub fn backtrack_step(
    p: &ProblemInstance,
    v: &FeFunction,
    l_in: f64,
    eta: f64,
) -> Result<(FeFunction, f64)> {
    p.check_space(v)?;
    if !(l_in > 0.0) || !(eta > 1.0) {
        return Err(Error::InvalidParams("backtracking needs l_in > 0 and eta > 1".into()));
    }
    let mut lip = l_in;
    let mut grad = vec![0.0; p.space().dof_count()];
    let mut out = Vec::new();
    backtrack_inner(p, v.values(), &mut lip, eta, &mut grad, &mut out)?;
    Ok((FeFunction::from_values(v.space().clone(), out)?, lip))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FistaVariant {
    /// Plain forward-backward splitting, no momentum.
    ForwardBackward,
    /// Nesterov momentum with the t-sequence.
    Momentum,
    /// Momentum plus the gradient-based adaptive restart.
    Restart,
}

#[derive(Debug, Clone)]
pub struct FistaOutcome {
    pub u: Vec<f64>,
    pub iters: usize,
    pub lipschitz: f64,
    pub capped: bool,
    pub restarts: usize,
}

/// Runs the forward-backward family on an objective.
///
/// The observer sees (iteration, iterate, restarted, F value when the line
/// search evaluated it) after every step and may return `false` to stop.
/// With `track_best` the best-F iterate seen (including the start) is
/// returned, which makes the result safe for monotone outer iterations.
pub fn run_fista<O, F>(
    obj: &O,
    u0: Vec<f64>,
    variant: FistaVariant,
    cfg: &LocalSolverConfig,
    track_best: bool,
    mut observer: F,
) -> Result<FistaOutcome>
where
    O: Objective,
    F: FnMut(usize, &[f64], bool, Option<f64>) -> bool,
{
    cfg.validate()?;
    let dim = obj.dim();
    debug_assert_eq!(u0.len(), dim);
    let mut u_curr = u0;
    obj.project(&mut u_curr);
    let mut v = u_curr.clone();
    let mut u_new: Vec<f64> = Vec::with_capacity(dim);
    let mut grad = vec![0.0; dim];
    let mut t = 1.0;
    let mut lip = cfg.initial_lipschitz;
    let mut best: Option<(f64, Vec<f64>)> =
        track_best.then(|| (obj.smooth_value(&u_curr), u_curr.clone()));
    let mut restarts = 0;
    let mut iters = 0;
    let mut capped = true;

    for n in 0..cfg.max_iters {
        let f_new = if let Some(step) = cfg.fixed_step {
            fb_step_into(obj, &v, step, &mut grad, &mut u_new);
            None
        } else if cfg.backtracking {
            Some(backtrack_inner(obj, &v, &mut lip, cfg.eta, &mut grad, &mut u_new)?)
        } else {
            fb_step_into(obj, &v, 1.0 / lip, &mut grad, &mut u_new);
            None
        };

        let restarted = match variant {
            FistaVariant::Restart => restart_slices(&v, &u_new, &u_curr),
            _ => false,
        };
        let beta = match variant {
            FistaVariant::ForwardBackward => 0.0,
            FistaVariant::Momentum => {
                let (tn, b) = momentum_update(t);
                t = tn;
                b
            }
            FistaVariant::Restart => {
                if restarted {
                    restarts += 1;
                    t = 1.0;
                    0.0
                } else {
                    let (tn, b) = momentum_update(t);
                    t = tn;
                    b
                }
            }
        };
        for i in 0..dim {
            v[i] = u_new[i] + beta * (u_new[i] - u_curr[i]);
        }

        if track_best {
            let f = f_new.unwrap_or_else(|| obj.smooth_value(&u_new));
            let cur_best = best.as_ref().map(|(b, _)| *b).unwrap();
            if f < cur_best {
                best = Some((f, u_new.clone()));
            }
        }

        iters = n + 1;
        let keep_going = observer(iters, &u_new, restarted, f_new);
        let stat = obj.stop_stat(&u_new, &u_curr);
        std::mem::swap(&mut u_curr, &mut u_new);
        if !keep_going || stat < cfg.stop_tol {
            capped = false;
            break;
        }
    }

    if capped {
        log::warn!("inner solver hit the iteration cap of {}", cfg.max_iters);
    }
    let u = match best {
        Some((fb, ub)) if fb < obj.smooth_value(&u_curr) => ub,
        _ => u_curr,
    };
    Ok(FistaOutcome { u, iters, lipschitz: lip, capped, restarts })
}

/// Full-space solver selection for the benchmark driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullSolverKind {
    ForwardBackward,
    Fista,
    FistaRestart,
}

impl FullSolverKind {
    fn variant(self) -> FistaVariant {
        match self {
            FullSolverKind::ForwardBackward => FistaVariant::ForwardBackward,
            FullSolverKind::Fista => FistaVariant::Momentum,
            FullSolverKind::FistaRestart => FistaVariant::Restart,
        }
    }
}

/// Runs a full-space forward-backward solver and records an energy trace.
/// Stops on the squared-difference criterion, the optional energy-error
/// threshold, or the iteration budget.
pub fn full_space_solve(
    p: &ProblemInstance,
    u0: &FeFunction,
    kind: FullSolverKind,
    cfg: &LocalSolverConfig,
    max_iters: usize,
    reference_energy: f64,
    stop_tol: Option<f64>,
) -> Result<(FeFunction, Trace)> {
    p.check_space(u0)?;
    if !problems::energy_value(p, u0)?.is_finite() {
        return Err(Error::NonFiniteEnergy { iter: 0 });
    }
    let started = Instant::now();
    let mut trace = Trace::default();
    trace.push(p.smooth_value(u0.values()), reference_energy, false, 0.0);
    if max_iters == 0 || stop_tol.is_some_and(|tol| trace.records[0].energy_error < tol) {
        return Ok((u0.clone(), trace));
    }

    let obj = FullObjective::new(p);
    let mut infeasible_at = None;
    let run_cfg = LocalSolverConfig { max_iters, ..cfg.clone() };
    let outcome = run_fista(
        &obj,
        u0.values().to_vec(),
        kind.variant(),
        &run_cfg,
        false,
        |iter, u, restarted, _| {
            if p.constraint_violation(u) > problems::FEAS_TOL {
                infeasible_at = Some(iter);
                return false;
            }
            let e = p.smooth_value(u);
            trace.push(e, reference_energy, restarted, started.elapsed().as_secs_f64());
            if !e.is_finite() {
                infeasible_at = Some(iter);
                return false;
            }
            match stop_tol {
                Some(tol) => e - reference_energy >= tol,
                None => true,
            }
        },
    )?;
    if let Some(iter) = infeasible_at {
        return Err(Error::NonFiniteEnergy { iter });
    }
    let u = FeFunction::from_values(u0.space().clone(), outcome.u)?;
    Ok((u, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// F(u) = sum_i d_i/2 u_i² with optional box constraints.
    struct QuadDiag {
        diag: Vec<f64>,
        lo: Option<f64>,
        hi: Option<f64>,
    }

    impl QuadDiag {
        fn new(diag: Vec<f64>) -> Self {
            QuadDiag { diag, lo: None, hi: None }
        }
    }

    impl Objective for QuadDiag {
        fn dim(&self) -> usize {
            self.diag.len()
        }

        fn smooth_value(&self, u: &[f64]) -> f64 {
            u.iter().zip(&self.diag).map(|(&x, &d)| 0.5 * d * x * x).sum()
        }

        fn smooth_grad(&self, u: &[f64], out: &mut [f64]) {
            for i in 0..u.len() {
                out[i] = self.diag[i] * u[i];
            }
        }

        fn project(&self, u: &mut [f64]) {
            if let (Some(lo), Some(hi)) = (self.lo, self.hi) {
                for v in u.iter_mut() {
                    *v = v.clamp(lo, hi);
                }
            }
        }

        fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        }
    }

    #[test]
    fn momentum_first_values() {
        let (t1, beta0) = momentum_update(1.0);
        assert!((t1 - (1.0 + 5.0f64.sqrt()) / 2.0).abs() < 1e-12);
        assert_eq!(beta0, 0.0);
        // next step; cross-checked against the defining recursion
        // t_{n+1}² − t_{n+1} = t_n²
        let (t2, beta1) = momentum_update(t1);
        assert!((t2 * t2 - t2 - t1 * t1).abs() < 1e-12);
        assert!((t2 - 2.1935271).abs() < 1e-6);
        assert!((beta1 - 0.2817535).abs() < 1e-6);
    }

    #[test]
    fn momentum_monotonicity() {
        let mut t = 1.0;
        for _ in 0..100 {
            let (tn, beta) = momentum_update(t);
            assert!(tn >= t + 0.5);
            assert!((0.0..1.0).contains(&beta));
            t = tn;
        }
    }

    #[test]
    fn restart_truth_table() {
        assert!(!restart_slices(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]));
        assert!(restart_slices(&[2.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]));
        // boundary case is strict
        assert!(!restart_slices(&[1.0], &[1.0], &[1.0]));
    }

    #[test]
    fn fb_step_on_scalar_quadratic() {
        // F = u²/2, v = 1, tau = 0.5 -> 0.5
        let obj = QuadDiag::new(vec![1.0]);
        let u = fb_step_obj(&obj, &[1.0], 0.5);
        assert!((u[0] - 0.5).abs() < 1e-15);
        // fixed point at a feasible stationary point
        let u = fb_step_obj(&obj, &[0.0], 0.7);
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn fb_step_result_feasible() {
        let obj = QuadDiag { diag: vec![1.0], lo: Some(-0.25), hi: Some(0.25) };
        // short step from far outside the box lands on the boundary
        let u = fb_step_obj(&obj, &[-2.0], 0.1);
        assert_eq!(u[0], -0.25);
    }

    #[test]
    fn backtracking_explicit_sequence() {
        // F = 2u² has Lipschitz constant 4; starting from L = 1 with eta = 2
        // the accepted estimate is exactly 4 (checked at L = 1, 2, 4)
        let obj = QuadDiag::new(vec![4.0]);
        let mut lip = 1.0;
        let mut grad = vec![0.0];
        let mut out = Vec::new();
        let fu = backtrack_inner(&obj, &[1.0], &mut lip, 2.0, &mut grad, &mut out).unwrap();
        assert_eq!(lip, 4.0);
        assert!(out[0].abs() < 1e-15);
        assert!(fu.abs() < 1e-15);
    }

    #[test]
    fn backtracking_accepts_valid_estimate_immediately() {
        let obj = QuadDiag::new(vec![1.0]);
        let mut lip = 1.0;
        let mut grad = vec![0.0];
        let mut out = Vec::new();
        backtrack_inner(&obj, &[1.0], &mut lip, 2.0, &mut grad, &mut out).unwrap();
        assert_eq!(lip, 1.0);
    }

    #[test]
    fn backtracking_no_move_at_stationary_point() {
        let obj = QuadDiag::new(vec![3.0]);
        let mut lip = 0.5;
        let mut grad = vec![0.0];
        let mut out = Vec::new();
        backtrack_inner(&obj, &[0.0], &mut lip, 2.0, &mut grad, &mut out).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn engine_stops_at_stationary_start() {
        let obj = QuadDiag::new(vec![2.0]);
        let cfg = LocalSolverConfig::default();
        let out = run_fista(&obj, vec![0.0], FistaVariant::Restart, &cfg, false, |_, _, _, _| true)
            .unwrap();
        assert_eq!(out.iters, 1);
        assert_eq!(out.u[0], 0.0);
        assert!(!out.capped);
    }

    #[test]
    fn engine_reports_cap() {
        // a deliberately short step keeps the iteration from stalling exactly
        let obj = QuadDiag::new(vec![2.0]);
        let cfg = LocalSolverConfig {
            max_iters: 3,
            stop_tol: 1e-300,
            backtracking: false,
            initial_lipschitz: 8.0,
            ..Default::default()
        };
        let out = run_fista(&obj, vec![1.0], FistaVariant::ForwardBackward, &cfg, false, |_, _, _, _| true)
            .unwrap();
        assert!(out.capped);
        assert_eq!(out.iters, 3);
    }

    #[test]
    fn restart_beats_plain_momentum_on_sharp_quadratic() {
        // anisotropic strongly convex quadratic: plain momentum oscillates,
        // the adaptive restart removes the oscillation
        let obj = QuadDiag::new(vec![1.0, 100.0]);
        let cfg = LocalSolverConfig {
            max_iters: 2000,
            stop_tol: 1e-300,
            backtracking: false,
            initial_lipschitz: 100.0,
            ..Default::default()
        };
        let count_to_tol = |variant: FistaVariant| {
            let mut hit = usize::MAX;
            run_fista(&obj, vec![1.0, 1.0], variant, &cfg, false, |n, u, _, _| {
                if obj.smooth_value(u) < 1e-10 {
                    hit = hit.min(n);
                    false
                } else {
                    true
                }
            })
            .unwrap();
            hit
        };
        let plain = count_to_tol(FistaVariant::Momentum);
        let restart = count_to_tol(FistaVariant::Restart);
        assert!(restart <= plain, "restart {restart} vs plain {plain}");
        assert!(restart < usize::MAX);
    }

    #[test]
    fn track_best_never_worse_than_start() {
        let obj = QuadDiag::new(vec![1.0, 50.0]);
        let cfg = LocalSolverConfig {
            max_iters: 7,
            stop_tol: 1e-300,
            backtracking: false,
            initial_lipschitz: 50.0,
            ..Default::default()
        };
        let out =
            run_fista(&obj, vec![3.0, 2.0], FistaVariant::Momentum, &cfg, true, |_, _, _, _| true)
                .unwrap();
        assert!(obj.smooth_value(&out.u) <= obj.smooth_value(&[3.0, 2.0]));
    }
}
