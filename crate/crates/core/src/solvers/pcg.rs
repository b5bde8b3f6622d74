//! Preconditioned conjugate gradients for the linear instance, with the
//! overlapping Schwarz preconditioner r ↦ Σ_k R_k^* A_k^{-1} R_k r (plus the
//! coarse term in the two-level case).

use std::time::Instant;

use rayon::prelude::*;

use crate::decomposition::{extend_slice, DecompositionPlan};
use crate::error::{Error, Result};
use crate::linalg::{self, SparseMatrix};
use crate::mesh::FeFunction;
use crate::problems::{ProblemInstance, ProblemKind};
use crate::solvers::{SchwarzContext, Trace};

const LOCAL_TOL: f64 = 1e-12;

fn apply_preconditioner(
    ctx: &SchwarzContext<'_>,
    locals: &[&SparseMatrix],
    coarse_a: Option<&SparseMatrix>,
    r: &[f64],
) -> Result<Vec<f64>> {
    let plan = ctx.plan();
    let results: Vec<Result<Vec<f64>>> = plan
        .maps()
        .par_iter()
        .zip(locals.par_iter())
        .map(|(map, a)| {
            let rhs: Vec<f64> = map.dofs().iter().map(|&g| r[g]).collect();
            linalg::cg_operator(|x, y| a.matvec(x, y), &rhs, LOCAL_TOL, (10 * map.len()).max(100))
        })
        .collect();
    let mut z = vec![0.0; plan.global_dim()];
    for (map, res) in plan.maps().iter().zip(results) {
        extend_slice(&res?, map, &mut z)?;
    }
    if let (Some(a_h), Some(cop)) = (coarse_a, plan.coarse()) {
        let mut rhs = vec![0.0; cop.interp.coarse_dim()];
        cop.interp.apply_transpose(r, &mut rhs);
        let w0 = linalg::solve_spd(a_h, &rhs, LOCAL_TOL)?;
        cop.interp.apply_add(&w0, &mut z);
    }
    Ok(z)
}

/// Preconditioned conjugate gradients on the linear instance. Runs until the
/// relative residual reaches `tol` (`tol = 0` disables the residual stop),
/// the optional energy-error threshold fires, or `max_iter` steps complete;
/// the energy error is recorded each iteration.
pub fn pcg_as(
    p: &ProblemInstance,
    plan: &DecompositionPlan,
    u0: &FeFunction,
    tol: f64,
    max_iter: usize,
    reference_energy: f64,
    stop_tol: Option<f64>,
) -> Result<Trace> {
    let ProblemKind::SLaplacian { s, load } = p.kind() else {
        return Err(Error::Unsupported("conjugate gradients need the linear instance".into()));
    };
    if *s != 2.0 {
        return Err(Error::Unsupported(format!("conjugate gradients need s = 2, got {s}")));
    }
    p.check_space(u0)?;
    let ctx = SchwarzContext::new(p, plan)?;
    let a = ctx.stiffness().expect("linear instance carries a stiffness matrix");
    // local principal submatrices and the coarse operator
    let locals_owned: Vec<SparseMatrix> =
        plan.maps().iter().map(|m| a.principal_submatrix(m.dofs())).collect();
    let locals: Vec<&SparseMatrix> = locals_owned.iter().collect();
    let coarse_a = plan
        .coarse()
        .map(|cop| linalg::assemble_stiffness(&cop.space));

    let started = Instant::now();
    let mut trace = Trace::default();
    let mut u = u0.values().to_vec();
    trace.push(p.smooth_value(&u), reference_energy, false, 0.0);

    let mut r = load.clone();
    let au = a.apply(&u);
    for (ri, ai) in r.iter_mut().zip(&au) {
        *ri -= ai;
    }
    let bnorm = linalg::norm_sq(load).sqrt();
    if bnorm == 0.0 || linalg::norm_sq(&r).sqrt() <= tol * bnorm {
        return Ok(trace);
    }

    let mut z = apply_preconditioner(&ctx, &locals, coarse_a.as_ref(), &r)?;
    let mut dir = z.clone();
    let mut rz = linalg::dot(&r, &z);
    let mut q = vec![0.0; u.len()];

    for _ in 1..=max_iter {
        if rz <= 0.0 || linalg::norm_sq(&r) == 0.0 {
            break; // stagnated at machine precision
        }
        a.matvec(&dir, &mut q);
        let pq = linalg::dot(&dir, &q);
        if pq <= 0.0 {
            if linalg::norm_sq(&dir) == 0.0 {
                break;
            }
            return Err(Error::NotSpd);
        }
        let alpha = rz / pq;
        linalg::axpy(alpha, &dir, &mut u);
        linalg::axpy(-alpha, &q, &mut r);
        let e = p.smooth_value(&u);
        trace.push(e, reference_energy, false, started.elapsed().as_secs_f64());
        if stop_tol.is_some_and(|t| e - reference_energy < t) {
            break;
        }
        if tol > 0.0 && linalg::norm_sq(&r).sqrt() <= tol * bnorm {
            break;
        }
        z = apply_preconditioner(&ctx, &locals, coarse_a.as_ref(), &r)?;
        let rz_new = linalg::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..dir.len() {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    Ok(trace)
}
