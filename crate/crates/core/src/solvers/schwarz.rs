//! Plain and accelerated Schwarz outer iterations.
//!
//! Each outer step solves the independent local minimizations (in parallel),
//! reduces the corrections in subdomain order so runs are bit-reproducible,
//! adds the optional coarse correction, and relaxes with the plan's step
//! size. The accelerated variant takes the step at an extrapolated point and
//! resets the momentum whenever the gradient restart test fires.

use std::time::Instant;

use rayon::prelude::*;

use crate::decomposition::{extend_slice, DecompositionPlan};
use crate::error::{Error, Result};
use crate::linalg::{self, SparseMatrix};
use crate::mesh::FeFunction;
use crate::problems::{
    self, build_local_data, solve_local, LocalData, ProblemInstance, ProblemKind,
};
use crate::solvers::coarse::{obstacle_coarse_gs, CoarseObjective};
use crate::solvers::fista::{momentum_update, restart_slices, run_fista, FistaVariant};
use crate::solvers::{LocalSolverConfig, MomentumState, Trace, COARSE_ITER_CAP};

/// Relative residual of the coarse linear solves.
const COARSE_LINEAR_TOL: f64 = 1e-12;

enum CoarseSolve {
    /// Linear instance: direct solve with the coarse stiffness operator.
    Linear { a: SparseMatrix },
    /// Nonlinear smooth energy: accelerated proximal solve on the coarse space.
    Nonlinear,
    /// Obstacle instance: projected Gauss-Seidel against the fine bounds.
    ObstacleGs { a: SparseMatrix },
}

/// Precomputed per-problem, per-plan solve data: local operators, the global
/// stiffness matrix for quadratic instances, and the coarse solver.
pub struct SchwarzContext<'a> {
    p: &'a ProblemInstance,
    plan: &'a DecompositionPlan,
    locals: Vec<LocalData>,
    stiffness: Option<SparseMatrix>,
    coarse: Option<CoarseSolve>,
}

impl<'a> SchwarzContext<'a> {
    pub fn new(p: &'a ProblemInstance, plan: &'a DecompositionPlan) -> Result<Self> {
        if plan.space_id() != p.space_id() {
            return Err(Error::SpaceMismatch);
        }
        let stiffness = match (p.kind(), p.space()) {
            (ProblemKind::SLaplacian { s, .. }, crate::mesh::SpaceRef::P1(space)) if *s == 2.0 => {
                Some(linalg::assemble_stiffness(space))
            }
            (ProblemKind::Obstacle { .. }, crate::mesh::SpaceRef::P1(space)) => {
                Some(linalg::assemble_stiffness(space))
            }
            _ => None,
        };
        let locals = plan
            .maps()
            .iter()
            .map(|map| build_local_data(p, stiffness.as_ref(), map))
            .collect();
        let coarse = match plan.coarse() {
            None => None,
            Some(cop) => Some(match p.kind() {
                ProblemKind::SLaplacian { s, .. } if *s == 2.0 => {
                    CoarseSolve::Linear { a: linalg::assemble_stiffness(&cop.space) }
                }
                ProblemKind::SLaplacian { .. } => CoarseSolve::Nonlinear,
                ProblemKind::Obstacle { .. } => {
                    CoarseSolve::ObstacleGs { a: linalg::assemble_stiffness(&cop.space) }
                }
                ProblemKind::DualTv { .. } => {
                    return Err(Error::Unsupported("coarse space for the dual-TV instance".into()))
                }
            }),
        };
        Ok(SchwarzContext { p, plan, locals, stiffness, coarse })
    }

    pub fn plan(&self) -> &DecompositionPlan {
        self.plan
    }

    pub(crate) fn stiffness(&self) -> Option<&SparseMatrix> {
        self.stiffness.as_ref()
    }

    fn global_grad(&self, u: &[f64], out: &mut [f64]) {
        match (&self.stiffness, self.p.kind()) {
            (Some(a), ProblemKind::SLaplacian { load, .. }) => {
                a.matvec(u, out);
                for (o, l) in out.iter_mut().zip(load) {
                    *o -= l;
                }
            }
            (Some(a), _) => a.matvec(u, out),
            _ => self.p.smooth_grad_into(u, out),
        }
    }

    /// Correction sum Σ_k R_k^* w_k (+ coarse term), not yet scaled by the
    /// step size. Local solves run in parallel; the reduction is serial in
    /// subdomain order, coarse term last.
    pub fn correction(&self, base: &[f64], cfg: &LocalSolverConfig) -> Result<Vec<f64>> {
        let dim = self.plan.global_dim();
        let mut g0 = vec![0.0; dim];
        self.global_grad(base, &mut g0);

        let results: Vec<Result<Vec<f64>>> = self
            .plan
            .maps()
            .par_iter()
            .zip(self.locals.par_iter())
            .map(|(map, data)| {
                let r0 = map.dofs().iter().map(|&g| g0[g]).collect();
                solve_local(self.p, data, map, base, r0, cfg).map_err(|e| {
                    Error::SolverDivergence(format!("subdomain {}: {e}", map.subdomain()))
                })
            })
            .collect();

        let mut c = vec![0.0; dim];
        for (map, res) in self.plan.maps().iter().zip(results) {
            extend_slice(&res?, map, &mut c)?;
        }

        if let Some(cs) = &self.coarse {
            let cop = self.plan.coarse().expect("coarse solver without coarse operator");
            let w0 = match cs {
                CoarseSolve::Linear { a } => {
                    let mut rhs = vec![0.0; cop.interp.coarse_dim()];
                    cop.interp.apply_transpose(&g0, &mut rhs);
                    for r in rhs.iter_mut() {
                        *r = -*r;
                    }
                    linalg::solve_spd(a, &rhs, COARSE_LINEAR_TOL)?
                }
                CoarseSolve::Nonlinear => {
                    let hc = cop.space.spacing();
                    let obj = CoarseObjective {
                        p: self.p,
                        interp: &cop.interp,
                        base,
                        hh_coarse: hc * hc,
                    };
                    let ccfg = LocalSolverConfig { max_iters: COARSE_ITER_CAP, ..cfg.clone() };
                    run_fista(
                        &obj,
                        vec![0.0; cop.interp.coarse_dim()],
                        FistaVariant::Restart,
                        &ccfg,
                        true,
                        |_, _, _, _| true,
                    )?
                    .u
                }
                CoarseSolve::ObstacleGs { a } => {
                    let hc = cop.space.spacing();
                    obstacle_coarse_gs(self.p, a, &cop.interp, base, hc * hc, cfg.stop_tol)?
                }
            };
            cop.interp.apply_add(&w0, &mut c);
        }
        Ok(c)
    }
}

fn checked_energy(p: &ProblemInstance, u: &[f64], iter: usize) -> Result<f64> {
    if p.constraint_violation(u) > problems::FEAS_TOL {
        return Err(Error::NonFiniteEnergy { iter });
    }
    let e = p.smooth_value(u);
    if !e.is_finite() {
        return Err(Error::NonFiniteEnergy { iter });
    }
    Ok(e)
}

/// One Schwarz step from a feasible iterate.
pub fn asm_iterate(
    p: &ProblemInstance,
    plan: &DecompositionPlan,
    u: &FeFunction,
    cfg: &LocalSolverConfig,
) -> Result<FeFunction> {
    let ctx = SchwarzContext::new(p, plan)?;
    p.check_space(u)?;
    checked_energy(p, u.values(), 0)?;
    let c = ctx.correction(u.values(), cfg)?;
    let mut out = u.values().to_vec();
    linalg::axpy(plan.step_size(), &c, &mut out);
    p.project_feasible(&mut out);
    FeFunction::from_values(u.space().clone(), out)
}

/// Plain Schwarz iteration with an energy trace. Stops at the iteration
/// budget or when the energy error falls below `stop_tol`.
pub fn asm_solve(
    p: &ProblemInstance,
    plan: &DecompositionPlan,
    u0: &FeFunction,
    cfg: &LocalSolverConfig,
    max_outer: usize,
    reference_energy: f64,
    stop_tol: Option<f64>,
) -> Result<Trace> {
    let ctx = SchwarzContext::new(p, plan)?;
    p.check_space(u0)?;
    let started = Instant::now();
    let tau = plan.step_size();
    let mut u = u0.values().to_vec();
    let mut trace = Trace::default();
    let e0 = checked_energy(p, &u, 0)?;
    trace.push(e0, reference_energy, false, 0.0);
    if stop_tol.is_some_and(|tol| e0 - reference_energy < tol) {
        return Ok(trace);
    }
    for n in 1..=max_outer {
        let c = ctx.correction(&u, cfg)?;
        linalg::axpy(tau, &c, &mut u);
        p.project_feasible(&mut u);
        let e = checked_energy(p, &u, n)?;
        trace.push(e, reference_energy, false, started.elapsed().as_secs_f64());
        if stop_tol.is_some_and(|tol| e - reference_energy < tol) {
            break;
        }
    }
    Ok(trace)
}

/// Accelerated Schwarz iteration: the correction is computed at the
/// extrapolated point, the gradient restart test resets the momentum, and
/// the extrapolation is projected back onto dom G so every local solve sees
/// a feasible base.
pub fn accel_asm_solve(
    p: &ProblemInstance,
    plan: &DecompositionPlan,
    u0: &FeFunction,
    cfg: &LocalSolverConfig,
    max_outer: usize,
    reference_energy: f64,
    stop_tol: Option<f64>,
) -> Result<Trace> {
    let ctx = SchwarzContext::new(p, plan)?;
    p.check_space(u0)?;
    let started = Instant::now();
    let tau = plan.step_size();
    let dim = plan.global_dim();
    let mut st = MomentumState::new(u0.values().to_vec());
    let mut trace = Trace::default();
    let e0 = checked_energy(p, &st.u_curr, 0)?;
    trace.push(e0, reference_energy, false, 0.0);
    if stop_tol.is_some_and(|tol| e0 - reference_energy < tol) {
        return Ok(trace);
    }
    for n in 1..=max_outer {
        let c = ctx.correction(&st.v_curr, cfg)?;
        let mut u_new = st.v_curr.clone();
        linalg::axpy(tau, &c, &mut u_new);
        p.project_feasible(&mut u_new);

        let restarted = restart_slices(&st.v_curr, &u_new, &st.u_curr);
        if restarted {
            st.restart();
        } else {
            let (t_next, beta) = momentum_update(st.t);
            st.t = t_next;
            st.beta = beta;
        }
        let mut v_next = vec![0.0; dim];
        for i in 0..dim {
            v_next[i] = u_new[i] + st.beta * (u_new[i] - st.u_curr[i]);
        }
        p.project_feasible(&mut v_next);

        st.u_prev = std::mem::replace(&mut st.u_curr, u_new);
        st.v_curr = v_next;

        let e = checked_energy(p, &st.u_curr, n)?;
        trace.push(e, reference_energy, restarted, started.elapsed().as_secs_f64());
        if stop_tol.is_some_and(|tol| e - reference_energy < tol) {
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_decomposition, DecompositionLevel};
    use crate::mesh::{build_p1_space, FeFunction, MeshLevel, MeshParams, SpaceRef};
    use std::sync::Arc;

    fn poisson_setup(
        n: usize,
        nsub: usize,
        d: usize,
        level: DecompositionLevel,
    ) -> (ProblemInstance, DecompositionPlan) {
        let params = MeshParams::new(n, nsub, d).unwrap();
        let space = Arc::new(build_p1_space(&params, MeshLevel::Fine).unwrap());
        let p = ProblemInstance::poisson(space.clone(), |_, _| 1.0).unwrap();
        let plan = build_decomposition(&params, &SpaceRef::P1(space), level).unwrap();
        (p, plan)
    }

    #[test]
    fn minimizer_is_a_fixed_point() {
        let (p, plan) = poisson_setup(4, 2, 1, DecompositionLevel::OneLevel);
        let a = linalg::assemble_stiffness(p.space().as_p1().unwrap());
        let ProblemKind::SLaplacian { load, .. } = p.kind() else { unreachable!() };
        let ustar = linalg::solve_spd(&a, load, 1e-14).unwrap();
        let u = FeFunction::from_values(p.space().clone(), ustar).unwrap();
        let next = asm_iterate(&p, &plan, &u, &LocalSolverConfig::default()).unwrap();
        for (a, b) in next.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn first_accelerated_iterate_matches_plain() {
        for level in [DecompositionLevel::OneLevel, DecompositionLevel::TwoLevel] {
            let (p, plan) = poisson_setup(8, 2, 1, level);
            let u0 = FeFunction::zeros(p.space().clone());
            let cfg = LocalSolverConfig::default();
            let plain = asm_solve(&p, &plan, &u0, &cfg, 1, 0.0, None).unwrap();
            let accel = accel_asm_solve(&p, &plan, &u0, &cfg, 1, 0.0, None).unwrap();
            assert_eq!(plain.len(), 2);
            assert!((plain.records[1].energy - accel.records[1].energy).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_budget_records_only_the_start() {
        let (p, plan) = poisson_setup(4, 2, 1, DecompositionLevel::OneLevel);
        let u0 = FeFunction::zeros(p.space().clone());
        let trace =
            asm_solve(&p, &plan, &u0, &LocalSolverConfig::default(), 0, 0.0, None).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.records[0].iter, 0);
        assert_eq!(trace.records[0].energy, 0.0);
    }

    #[test]
    fn plain_energy_nonincreasing() {
        let (p, plan) = poisson_setup(8, 2, 1, DecompositionLevel::TwoLevel);
        let u0 = FeFunction::zeros(p.space().clone());
        let trace =
            asm_solve(&p, &plan, &u0, &LocalSolverConfig::default(), 20, 0.0, None).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12);
        }
    }
}
