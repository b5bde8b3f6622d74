//! Building problems from configurations and running single experiments.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use schwarz_core::decomposition::{build_decomposition, DecompositionLevel, DecompositionPlan};
use schwarz_core::mesh::{
    build_p1_space, build_rt0_space, nodal_interpolate, FeFunction, MeshLevel, SpaceRef,
};
use schwarz_core::problems::{fields, ProblemInstance, DUAL_TV_STEP};
use schwarz_core::solvers::{
    accel_asm_solve, asm_solve, full_space_solve, pcg_as, FullSolverKind, LocalSolverConfig, Trace,
};

use crate::config::{ExperimentConfig, LevelChoice, ProblemChoice, SolverChoice};
use crate::reference::ensure_reference;
use crate::Result;

/// Residual tolerance of the conjugate-gradient baseline when the energy
/// stop is disabled.
const PCG_RESIDUAL_FLOOR: f64 = 0.0;

pub fn build_problem(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let params = cfg.mesh_params()?;
    Ok(match cfg.problem {
        ProblemChoice::SLaplacian | ProblemChoice::Poisson => {
            let space = Arc::new(build_p1_space(&params, MeshLevel::Fine)?);
            ProblemInstance::s_laplacian(space, cfg.effective_s(), |_, _| 1.0)?
        }
        ProblemChoice::Obstacle => {
            let space = Arc::new(build_p1_space(&params, MeshLevel::Fine)?);
            ProblemInstance::obstacle(space, fields::obstacle_lower, fields::obstacle_upper)?
        }
        ProblemChoice::DualTv => {
            let space = Arc::new(build_rt0_space(&params)?);
            ProblemInstance::dual_tv(space, fields::tv_source)
        }
    })
}

pub fn build_plan(cfg: &ExperimentConfig, p: &ProblemInstance) -> Result<DecompositionPlan> {
    let params = cfg.mesh_params()?;
    let level = match cfg.level {
        LevelChoice::One => DecompositionLevel::OneLevel,
        LevelChoice::Two => DecompositionLevel::TwoLevel,
    };
    let mut plan = build_decomposition(&params, p.space(), level)?;
    if let Some(tau) = cfg.tau {
        plan = plan.with_step_size(tau)?;
    }
    Ok(plan)
}

/// Initial guess: the lower-obstacle interpolant for the obstacle problem,
/// zero otherwise.
pub fn initial_guess(p: &ProblemInstance, cfg: &ExperimentConfig) -> Result<FeFunction> {
    Ok(match (cfg.problem, p.space()) {
        (ProblemChoice::Obstacle, SpaceRef::P1(space)) => {
            nodal_interpolate(fields::obstacle_lower, space)
        }
        _ => FeFunction::zeros(p.space().clone()),
    })
}

/// Full-space solvers backtrack by default; the dual-TV problem uses its
/// fixed 1/8 step, and an explicit tau overrides either choice.
fn inner_config(cfg: &ExperimentConfig) -> LocalSolverConfig {
    let mut lcfg = LocalSolverConfig::default();
    if cfg.problem == ProblemChoice::DualTv {
        lcfg.fixed_step = Some(cfg.tau.unwrap_or(DUAL_TV_STEP));
    } else if let Some(t) = cfg.tau {
        lcfg.fixed_step = Some(t);
    }
    lcfg
}

/// Runs the configured solver against the cached reference and writes the
/// trace as CSV when an output path is set. Rows are ordered by iteration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Trace> {
    cfg.validate()?;
    let p = build_problem(cfg)?;
    let reference = ensure_reference(cfg)?;
    let u0 = initial_guess(&p, cfg)?;
    let lcfg = LocalSolverConfig::default();

    let trace = match cfg.solver {
        SolverChoice::Asm => {
            let plan = build_plan(cfg, &p)?;
            asm_solve(&p, &plan, &u0, &lcfg, cfg.max_iter, reference.energy, cfg.tol)?
        }
        SolverChoice::AccelAsm => {
            let plan = build_plan(cfg, &p)?;
            accel_asm_solve(&p, &plan, &u0, &lcfg, cfg.max_iter, reference.energy, cfg.tol)?
        }
        SolverChoice::Pcg => {
            let plan = build_plan(cfg, &p)?;
            pcg_as(&p, &plan, &u0, PCG_RESIDUAL_FLOOR, cfg.max_iter, reference.energy, cfg.tol)?
        }
        SolverChoice::Fb | SolverChoice::Fista | SolverChoice::FistaRestart => {
            let kind = match cfg.solver {
                SolverChoice::Fb => FullSolverKind::ForwardBackward,
                SolverChoice::Fista => FullSolverKind::Fista,
                _ => FullSolverKind::FistaRestart,
            };
            let icfg = inner_config(cfg);
            full_space_solve(&p, &u0, kind, &icfg, cfg.max_iter, reference.energy, cfg.tol)?.1
        }
    };

    if let Some(out) = &cfg.output_path {
        write_trace_csv(out, &trace)?;
    }
    Ok(trace)
}

/// CSV schema: `iter,energy,energy_error,restarted,wall_s`.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = String::with_capacity(64 * trace.len() + 64);
    out.push_str("iter,energy,energy_error,restarted,wall_s\n");
    for r in &trace.records {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{},{:.6}\n",
            r.iter,
            r.energy,
            r.energy_error,
            u8::from(r.restarted),
            r.wall_s
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Smallest recorded iteration whose energy error is below `tol`.
pub fn iterations_to_tol(trace: &Trace, tol: f64) -> Option<usize> {
    trace.records.iter().find(|r| r.energy_error < tol).map(|r| r.iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use schwarz_core::solvers::IterationRecord;

    fn trace_of(errors: &[f64]) -> Trace {
        let mut t = Trace::default();
        for (i, &e) in errors.iter().enumerate() {
            t.records.push(IterationRecord {
                iter: i,
                energy: e,
                energy_error: e,
                restarted: false,
                wall_s: 0.0,
            });
        }
        t
    }

    #[test]
    fn iterations_to_tol_cases() {
        let t = trace_of(&[1.0, 1e-3, 1e-9]);
        assert_eq!(iterations_to_tol(&t, 1e-8), Some(2));
        assert_eq!(iterations_to_tol(&t, 1e-12), None);
        assert_eq!(iterations_to_tol(&t, f64::INFINITY), Some(0));
    }
}
