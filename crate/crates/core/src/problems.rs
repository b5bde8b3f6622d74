//! The four energy instances E = F + G: smooth energies, gradients,
//! projections, and the local minimization subproblems used by the Schwarz
//! iterations.
//!
//! All nonsmooth terms are box indicators in DOF coordinates, so the
//! proximal map is a coordinate-wise clamp.

use std::sync::Arc;

use crate::decomposition::SubspaceMap;
use crate::error::{Error, Result};
use crate::linalg::{self, SparseMatrix};
use crate::mesh::{FeFunction, FeSpaceP1, FeSpaceRT0, SpaceId, SpaceRef};
use crate::solvers::fista::{run_fista, FistaVariant, Objective};
use crate::solvers::LocalSolverConfig;

/// Slack allowed when checking indicator feasibility.
pub const FEAS_TOL: f64 = 1e-12;

/// Floor on |grad| when differentiating |grad|^s with s < 2.
const GRAD_FLOOR: f64 = 1e-12;

/// Relative residual for the shortcut conjugate-gradient local solves on
/// linear instances.
const LINEAR_LOCAL_TOL: f64 = 1e-12;

/// Fixed forward-backward step for dual-TV subproblems (a valid inverse
/// Lipschitz bound for the scaled divergence operator; see `op_norm_sq`).
pub const DUAL_TV_STEP: f64 = 0.125;

#[derive(Debug)]
pub enum ProblemKind {
    /// (1/s)∫|∇u|^s − ∫fu on the P1 space; s = 2 is the Poisson case.
    SLaplacian { s: f64, load: Vec<f64> },
    /// (1/2)∫|∇u|² subject to nodewise bounds lower ≤ u ≤ upper.
    Obstacle { lower: Vec<f64>, upper: Vec<f64> },
    /// (1/2)∫(div u + f)² subject to |u·n| ≤ 1 per interior edge.
    DualTv { cell_source: Vec<f64> },
}

/// An energy instance bound to its finite element space.
#[derive(Debug)]
pub struct ProblemInstance {
    space: SpaceRef,
    kind: ProblemKind,
}

/// Value of E at a point: finite, or infeasible (+∞) when the constraint is
/// violated by more than `FEAS_TOL`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyValue {
    Finite(f64),
    Infeasible,
}

impl EnergyValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, EnergyValue::Finite(_))
    }

    pub fn value(&self) -> f64 {
        match self {
            EnergyValue::Finite(v) => *v,
            EnergyValue::Infeasible => f64::INFINITY,
        }
    }
}

/// Scalar fields used by the benchmark problems.
pub mod fields {
    /// Indicator of the closed disk of radius `r` about (cx, cy).
    pub fn disk(cx: f64, cy: f64, r: f64) -> impl Fn(f64, f64) -> f64 {
        let r2 = r * r;
        move |x, y| {
            if (x - cx).powi(2) + (y - cy).powi(2) <= r2 {
                1.0
            } else {
                0.0
            }
        }
    }

    /// Lower obstacle: 1 on a small disk at the center, 0 elsewhere.
    pub fn obstacle_lower(x: f64, y: f64) -> f64 {
        disk(0.5, 0.5, 1.0 / 16.0)(x, y)
    }

    /// Upper obstacle: 0 on a small disk at (1/4, 1/4), 1 elsewhere.
    pub fn obstacle_upper(x: f64, y: f64) -> f64 {
        1.0 - disk(0.25, 0.25, 1.0 / 16.0)(x, y)
    }

    /// Source term of the dual total variation problem.
    pub fn tv_source(x: f64, y: f64) -> f64 {
        disk(0.5, 0.5, 0.25)(x, y)
    }
}

#[inline]
fn pow_s(r: f64, s: f64) -> f64 {
    if s == 2.0 {
        r * r
    } else if s == 4.0 {
        let q = r * r;
        q * q
    } else {
        r.powf(s)
    }
}

#[inline]
fn pow_s_minus_2(r: f64, s: f64) -> f64 {
    if s == 2.0 {
        1.0
    } else if s == 4.0 {
        r * r
    } else if s > 2.0 {
        r.powf(s - 2.0)
    } else {
        r.max(GRAD_FLOOR).powf(s - 2.0)
    }
}

impl ProblemInstance {
    /// s-Laplacian energy with source `f` (sampled at triangle centroids for
    /// the load vector, exact for constant f).
    pub fn s_laplacian<F: Fn(f64, f64) -> f64>(
        space: Arc<FeSpaceP1>,
        s: f64,
        f: F,
    ) -> Result<Self> {
        if !(s > 1.0) {
            return Err(Error::InvalidParams(format!("s-Laplacian exponent {s} must be > 1")));
        }
        let load = assemble_load(&space, &f);
        Ok(ProblemInstance { space: SpaceRef::P1(space), kind: ProblemKind::SLaplacian { s, load } })
    }

    /// Linear (Poisson) case: s = 2.
    pub fn poisson<F: Fn(f64, f64) -> f64>(space: Arc<FeSpaceP1>, f: F) -> Result<Self> {
        Self::s_laplacian(space, 2.0, f)
    }

    /// Obstacle problem with nodal interpolants of the obstacle fields.
    pub fn obstacle<L, U>(space: Arc<FeSpaceP1>, gl: L, gu: U) -> Result<Self>
    where
        L: Fn(f64, f64) -> f64,
        U: Fn(f64, f64) -> f64,
    {
        let mut lower = Vec::with_capacity(space.dof_count());
        let mut upper = Vec::with_capacity(space.dof_count());
        for d in 0..space.dof_count() {
            let (x, y) = space.node_coords(space.dof_node(d));
            let (lo, hi) = (gl(x, y), gu(x, y));
            if lo > hi {
                return Err(Error::InvalidParams(format!(
                    "obstacles cross at ({x}, {y}): {lo} > {hi}"
                )));
            }
            lower.push(lo);
            upper.push(hi);
        }
        // the zero boundary trace must be admissible
        for n in 0..space.node_count() {
            if space.node_dof(n).is_none() {
                let (x, y) = space.node_coords(n);
                if gl(x, y) > 0.0 || gu(x, y) < 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "obstacles exclude the zero boundary value at ({x}, {y})"
                    )));
                }
            }
        }
        Ok(ProblemInstance { space: SpaceRef::P1(space), kind: ProblemKind::Obstacle { lower, upper } })
    }

    /// Dual total variation instance; `f` is sampled at cell centers.
    pub fn dual_tv<F: Fn(f64, f64) -> f64>(space: Arc<FeSpaceRT0>, f: F) -> Self {
        let cell_source = (0..space.cell_count())
            .map(|c| {
                let (x, y) = space.cell_center(c);
                f(x, y)
            })
            .collect();
        ProblemInstance { space: SpaceRef::Rt0(space), kind: ProblemKind::DualTv { cell_source } }
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn space_id(&self) -> SpaceId {
        self.space.id()
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.space.dof_count()
    }

    /// True when the smooth part is a quadratic form (linear gradient).
    pub fn is_quadratic(&self) -> bool {
        match &self.kind {
            ProblemKind::SLaplacian { s, .. } => *s == 2.0,
            ProblemKind::Obstacle { .. } | ProblemKind::DualTv { .. } => true,
        }
    }

    /// True when G is a genuine box constraint (not identically zero).
    pub fn has_constraints(&self) -> bool {
        !matches!(self.kind, ProblemKind::SLaplacian { .. })
    }

    pub fn check_space(&self, u: &FeFunction) -> Result<()> {
        if u.space().id() == self.space_id() {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Largest box-constraint violation of `u` (zero when G = 0).
    pub fn constraint_violation(&self, u: &[f64]) -> f64 {
        match &self.kind {
            ProblemKind::SLaplacian { .. } => 0.0,
            ProblemKind::Obstacle { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
                .fold(0.0, f64::max),
            ProblemKind::DualTv { .. } => {
                u.iter().map(|&v| (v.abs() - 1.0).max(0.0)).fold(0.0, f64::max)
            }
        }
    }

    /// Value of the smooth part F.
    pub fn smooth_value(&self, u: &[f64]) -> f64 {
        match (&self.kind, &self.space) {
            (ProblemKind::SLaplacian { s, load }, SpaceRef::P1(space)) => {
                dirichlet_term(space, u, *s) - linalg::dot(load, u)
            }
            (ProblemKind::Obstacle { .. }, SpaceRef::P1(space)) => dirichlet_term(space, u, 2.0),
            (ProblemKind::DualTv { cell_source }, SpaceRef::Rt0(space)) => {
                let h = space.spacing();
                let mut acc = 0.0;
                for c in 0..space.cell_count() {
                    let div = cell_divergence(space, u, c);
                    let t = div + cell_source[c];
                    acc += 0.5 * h * h * t * t;
                }
                acc
            }
            _ => unreachable!("kind/space pairing enforced at construction"),
        }
    }

    /// Gradient of F in DOF coordinates (Euclidean pairing).
    pub fn smooth_grad_into(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match (&self.kind, &self.space) {
            (ProblemKind::SLaplacian { s, load }, SpaceRef::P1(space)) => {
                dirichlet_grad(space, u, *s, out);
                for (o, l) in out.iter_mut().zip(load) {
                    *o -= l;
                }
            }
            (ProblemKind::Obstacle { .. }, SpaceRef::P1(space)) => {
                dirichlet_grad(space, u, 2.0, out);
            }
            (ProblemKind::DualTv { cell_source }, SpaceRef::Rt0(space)) => {
                let h = space.spacing();
                for c in 0..space.cell_count() {
                    let t = h * (cell_divergence(space, u, c) + cell_source[c]);
                    let [l, r, b, tp] = space.cell_edge_ids(c);
                    let edges = space.edges();
                    if let Some(d) = edges[r].dof {
                        out[d] += t;
                    }
                    if let Some(d) = edges[l].dof {
                        out[d] -= t;
                    }
                    if let Some(d) = edges[tp].dof {
                        out[d] += t;
                    }
                    if let Some(d) = edges[b].dof {
                        out[d] -= t;
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// Coordinate-wise projection onto dom G (identity when G = 0).
    pub fn project_feasible(&self, u: &mut [f64]) {
        match &self.kind {
            ProblemKind::SLaplacian { .. } => {}
            ProblemKind::Obstacle { lower, upper } => {
                for ((v, &lo), &hi) in u.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(lo, hi);
                }
            }
            ProblemKind::DualTv { .. } => {
                for v in u.iter_mut() {
                    *v = v.clamp(-1.0, 1.0);
                }
            }
        }
    }

    /// Squared-difference statistic used by the stop criteria: h²‖a − b‖²
    /// for nodal spaces, h²‖div(a − b)‖² for the divergence-conforming one.
    pub fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.space {
            SpaceRef::P1(space) => {
                let h = space.spacing();
                h * h * diff_norm_sq(a, b)
            }
            SpaceRef::Rt0(space) => {
                let h = space.spacing();
                let mut acc = 0.0;
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                for c in 0..space.cell_count() {
                    let d = cell_divergence(space, &diff, c);
                    acc += d * d;
                }
                h * h * acc
            }
        }
    }
}

fn diff_norm_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assemble_load<F: Fn(f64, f64) -> f64>(space: &FeSpaceP1, f: &F) -> Vec<f64> {
    let mut load = vec![0.0; space.dof_count()];
    for tri in space.triangles() {
        let (mut cx, mut cy) = (0.0, 0.0);
        for &n in &tri.nodes {
            let (x, y) = space.node_coords(n);
            cx += x / 3.0;
            cy += y / 3.0;
        }
        let w = tri.area / 3.0 * f(cx, cy);
        for &n in &tri.nodes {
            if let Some(d) = space.node_dof(n) {
                load[d] += w;
            }
        }
    }
    load
}

/// Σ_T (area/s) |∇u|^s over all triangles, boundary values zero.
fn dirichlet_term(space: &FeSpaceP1, u: &[f64], s: f64) -> f64 {
    let mut acc = 0.0;
    for tri in space.triangles() {
        let mut g = [0.0, 0.0];
        for i in 0..3 {
            if let Some(d) = space.node_dof(tri.nodes[i]) {
                g[0] += u[d] * tri.grads[i][0];
                g[1] += u[d] * tri.grads[i][1];
            }
        }
        let r = (g[0] * g[0] + g[1] * g[1]).sqrt();
        acc += tri.area / s * pow_s(r, s);
    }
    acc
}

fn dirichlet_grad(space: &FeSpaceP1, u: &[f64], s: f64, out: &mut [f64]) {
    for tri in space.triangles() {
        let mut g = [0.0, 0.0];
        for i in 0..3 {
            if let Some(d) = space.node_dof(tri.nodes[i]) {
                g[0] += u[d] * tri.grads[i][0];
                g[1] += u[d] * tri.grads[i][1];
            }
        }
        let r = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let factor = tri.area * pow_s_minus_2(r, s);
        for i in 0..3 {
            if let Some(d) = space.node_dof(tri.nodes[i]) {
                out[d] += factor * (g[0] * tri.grads[i][0] + g[1] * tri.grads[i][1]);
            }
        }
    }
}

fn cell_divergence(space: &FeSpaceRT0, u: &[f64], cell: usize) -> f64 {
    let [l, r, b, t] = space.cell_edge_ids(cell);
    let edges = space.edges();
    let val = |e: usize| edges[e].dof.map_or(0.0, |d| u[d]);
    (val(r) - val(l) + val(t) - val(b)) / space.spacing()
}

// ---- public operations ----

/// E(u) = F(u) + G(u), with G evaluated as a box indicator under `FEAS_TOL`.
pub fn energy_value(p: &ProblemInstance, u: &FeFunction) -> Result<EnergyValue> {
    p.check_space(u)?;
    if p.constraint_violation(u.values()) > FEAS_TOL {
        return Ok(EnergyValue::Infeasible);
    }
    Ok(EnergyValue::Finite(p.smooth_value(u.values())))
}

/// Gradient of the smooth part as a function on the same space.
pub fn grad_smooth(p: &ProblemInstance, u: &FeFunction) -> Result<FeFunction> {
    p.check_space(u)?;
    let mut out = vec![0.0; p.dim()];
    p.smooth_grad_into(u.values(), &mut out);
    FeFunction::from_values(u.space().clone(), out)
}

/// Proximal map of G: the identity for G = 0, otherwise a clamp.
pub fn prox_nonsmooth(p: &ProblemInstance, u: &FeFunction) -> Result<FeFunction> {
    p.check_space(u)?;
    let mut out = u.clone();
    p.project_feasible(out.values_mut());
    Ok(out)
}

// ---- local subproblems ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum QuadStop {
    /// h²‖Δw‖² against the stop tolerance.
    DofDiff,
    /// ΔwᵀAΔw, which equals h²‖div Δw‖² for the dual-TV local operator.
    ViaMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum QuadBoundsKind {
    Obstacle,
    UnitBox,
}

/// Base-independent data of one local subproblem.
#[derive(Debug)]
pub(crate) enum LocalData {
    /// Unconstrained quadratic: solve the local linear system directly.
    LinearCg { a: SparseMatrix },
    /// Quadratic with box constraints: accelerated proximal gradient.
    QuadProx { a: SparseMatrix, bounds: QuadBoundsKind, fixed_step: Option<f64>, stop: QuadStop },
    /// Nonlinear patch energy for the s-Laplacian.
    Patch(SLapPatch),
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum PatchVtx {
    Local { local: u32, global: u32 },
    Fixed { global: u32 },
    Boundary,
}

#[derive(Debug)]
pub(crate) struct PatchTri {
    area: f64,
    grads: [[f64; 2]; 3],
    vtx: [PatchVtx; 3],
}

/// Triangles whose energy depends on a subdomain's DOFs, with the local load.
#[derive(Debug)]
pub(crate) struct SLapPatch {
    tris: Vec<PatchTri>,
    local_load: Vec<f64>,
    s: f64,
    hh: f64,
}

impl SLapPatch {
    fn build(space: &FeSpaceP1, map: &SubspaceMap, load: &[f64], s: f64) -> Self {
        let mut global_to_local = vec![u32::MAX; space.dof_count()];
        for (l, &g) in map.dofs().iter().enumerate() {
            global_to_local[g] = l as u32;
        }
        let rect = map.rect();
        let mut tris = Vec::new();
        for cy in rect.y0..rect.y1 {
            for cx in rect.x0..rect.x1 {
                let cell = cy * space.cells_per_side() + cx;
                for t in [2 * cell, 2 * cell + 1] {
                    let tri = &space.triangles()[t];
                    let mut vtx = [PatchVtx::Boundary; 3];
                    let mut touches_local = false;
                    for i in 0..3 {
                        vtx[i] = match space.node_dof(tri.nodes[i]) {
                            None => PatchVtx::Boundary,
                            Some(g) => {
                                if global_to_local[g] != u32::MAX {
                                    touches_local = true;
                                    PatchVtx::Local { local: global_to_local[g], global: g as u32 }
                                } else {
                                    PatchVtx::Fixed { global: g as u32 }
                                }
                            }
                        };
                    }
                    if touches_local {
                        tris.push(PatchTri { area: tri.area, grads: tri.grads, vtx });
                    }
                }
            }
        }
        let local_load = map.dofs().iter().map(|&g| load[g]).collect();
        let h = space.spacing();
        SLapPatch { tris, local_load, s, hh: h * h }
    }
}

/// Patch objective in the local variable w: F(base + extension of w) up to a
/// constant independent of w.
pub(crate) struct SLapLocalObjective<'a> {
    patch: &'a SLapPatch,
    base: &'a [f64],
}

impl<'a> SLapLocalObjective<'a> {
    fn tri_gradient(&self, tri: &PatchTri, w: &[f64]) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for i in 0..3 {
            let v = match tri.vtx[i] {
                PatchVtx::Local { local, global } => self.base[global as usize] + w[local as usize],
                PatchVtx::Fixed { global } => self.base[global as usize],
                PatchVtx::Boundary => 0.0,
            };
            g[0] += v * tri.grads[i][0];
            g[1] += v * tri.grads[i][1];
        }
        g
    }
}

impl<'a> Objective for SLapLocalObjective<'a> {
    fn dim(&self) -> usize {
        self.patch.local_load.len()
    }

    fn smooth_value(&self, w: &[f64]) -> f64 {
        let s = self.patch.s;
        let mut acc = 0.0;
        for tri in &self.patch.tris {
            let g = self.tri_gradient(tri, w);
            let r = (g[0] * g[0] + g[1] * g[1]).sqrt();
            acc += tri.area / s * pow_s(r, s);
        }
        acc - linalg::dot(&self.patch.local_load, w)
    }

    fn smooth_grad(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let s = self.patch.s;
        for tri in &self.patch.tris {
            let g = self.tri_gradient(tri, w);
            let r = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let factor = tri.area * pow_s_minus_2(r, s);
            for i in 0..3 {
                if let PatchVtx::Local { local, .. } = tri.vtx[i] {
                    out[local as usize] +=
                        factor * (g[0] * tri.grads[i][0] + g[1] * tri.grads[i][1]);
                }
            }
        }
        for (o, l) in out.iter_mut().zip(&self.patch.local_load) {
            *o -= l;
        }
    }

    fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64 {
        self.patch.hh * diff_norm_sq(a, b)
    }
}

/// Quadratic local objective ½wᵀAw + r0ᵀw with optional box constraints on
/// base + w.
pub(crate) struct QuadLocalObjective<'a> {
    a: &'a SparseMatrix,
    r0: Vec<f64>,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
    stop: QuadStop,
    hh: f64,
}

impl<'a> Objective for QuadLocalObjective<'a> {
    fn dim(&self) -> usize {
        self.r0.len()
    }

    fn smooth_value(&self, w: &[f64]) -> f64 {
        let aw = self.a.apply(w);
        0.5 * linalg::dot(w, &aw) + linalg::dot(&self.r0, w)
    }

    fn smooth_grad(&self, w: &[f64], out: &mut [f64]) {
        self.a.matvec(w, out);
        for (o, r) in out.iter_mut().zip(&self.r0) {
            *o += r;
        }
    }

    fn project(&self, w: &mut [f64]) {
        if let (Some(lo), Some(hi)) = (&self.lo, &self.hi) {
            for ((v, &l), &h) in w.iter_mut().zip(lo).zip(hi) {
                *v = v.clamp(l, h);
            }
        }
    }

    fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.stop {
            QuadStop::DofDiff => self.hh * diff_norm_sq(a, b),
            QuadStop::ViaMatrix => {
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                let ad = self.a.apply(&diff);
                linalg::dot(&diff, &ad)
            }
        }
    }
}

/// Local operator for the dual-TV instance: the restriction of h² Dᵀ D to the
/// subdomain edges (entries ±1, assembled cell by cell).
fn assemble_tv_local(space: &FeSpaceRT0, map: &SubspaceMap) -> SparseMatrix {
    let mut global_to_local = vec![usize::MAX; space.dof_count()];
    for (l, &g) in map.dofs().iter().enumerate() {
        global_to_local[g] = l;
    }
    let mut trips = Vec::new();
    let rect = map.rect();
    for cy in rect.y0..rect.y1 {
        for cx in rect.x0..rect.x1 {
            let cell = space.cell_index(cx, cy);
            let [l, r, b, t] = space.cell_edge_ids(cell);
            let edges = space.edges();
            let signed: Vec<(usize, f64)> = [(r, 1.0), (l, -1.0), (t, 1.0), (b, -1.0)]
                .iter()
                .filter_map(|&(e, sgn)| {
                    edges[e].dof.and_then(|d| {
                        let ld = global_to_local[d];
                        (ld != usize::MAX).then_some((ld, sgn))
                    })
                })
                .collect();
            for &(i, si) in &signed {
                for &(j, sj) in &signed {
                    trips.push((i, j, si * sj));
                }
            }
        }
    }
    SparseMatrix::from_triplets(map.len(), map.len(), trips)
}

pub(crate) fn build_local_data(
    p: &ProblemInstance,
    global_stiffness: Option<&SparseMatrix>,
    map: &SubspaceMap,
) -> LocalData {
    match (&p.kind, &p.space) {
        (ProblemKind::SLaplacian { s, load }, SpaceRef::P1(space)) => {
            if *s == 2.0 {
                let a = match global_stiffness {
                    Some(a) => a.principal_submatrix(map.dofs()),
                    None => linalg::assemble_stiffness(space).principal_submatrix(map.dofs()),
                };
                LocalData::LinearCg { a }
            } else {
                LocalData::Patch(SLapPatch::build(space, map, load, *s))
            }
        }
        (ProblemKind::Obstacle { .. }, SpaceRef::P1(space)) => {
            let a = match global_stiffness {
                Some(a) => a.principal_submatrix(map.dofs()),
                None => linalg::assemble_stiffness(space).principal_submatrix(map.dofs()),
            };
            LocalData::QuadProx {
                a,
                bounds: QuadBoundsKind::Obstacle,
                fixed_step: None,
                stop: QuadStop::DofDiff,
            }
        }
        (ProblemKind::DualTv { .. }, SpaceRef::Rt0(space)) => LocalData::QuadProx {
            a: assemble_tv_local(space, map),
            bounds: QuadBoundsKind::UnitBox,
            fixed_step: Some(DUAL_TV_STEP),
            stop: QuadStop::ViaMatrix,
        },
        _ => unreachable!(),
    }
}

/// Solves the local subproblem given the restriction `r0` of grad F(base) to
/// the subdomain (the gradient of the local objective at w = 0).
pub(crate) fn solve_local(
    p: &ProblemInstance,
    data: &LocalData,
    map: &SubspaceMap,
    base: &[f64],
    r0: Vec<f64>,
    cfg: &LocalSolverConfig,
) -> Result<Vec<f64>> {
    match data {
        LocalData::LinearCg { a } => {
            let rhs: Vec<f64> = r0.iter().map(|v| -v).collect();
            linalg::cg_operator(
                |w, out| a.matvec(w, out),
                &rhs,
                LINEAR_LOCAL_TOL,
                (10 * map.len()).max(100),
            )
        }
        LocalData::QuadProx { a, bounds, fixed_step, stop } => {
            let (lo, hi) = match bounds {
                QuadBoundsKind::Obstacle => {
                    let ProblemKind::Obstacle { lower, upper } = &p.kind else { unreachable!() };
                    let lo = map.dofs().iter().map(|&g| lower[g] - base[g]).collect();
                    let hi = map.dofs().iter().map(|&g| upper[g] - base[g]).collect();
                    (Some(lo), Some(hi))
                }
                QuadBoundsKind::UnitBox => {
                    let lo = map.dofs().iter().map(|&g| -1.0 - base[g]).collect();
                    let hi = map.dofs().iter().map(|&g| 1.0 - base[g]).collect();
                    (Some(lo), Some(hi))
                }
            };
            let hh = p.space.spacing() * p.space.spacing();
            let obj = QuadLocalObjective { a, r0, lo, hi, stop: *stop, hh };
            let mut cfg = cfg.clone();
            cfg.fixed_step = *fixed_step;
            let out = run_fista(
                &obj,
                vec![0.0; map.len()],
                FistaVariant::Restart,
                &cfg,
                true,
                |_, _, _, _| true,
            )?;
            Ok(out.u)
        }
        LocalData::Patch(patch) => {
            let obj = SLapLocalObjective { patch, base };
            let out = run_fista(
                &obj,
                vec![0.0; map.len()],
                FistaVariant::Restart,
                cfg,
                true,
                |_, _, _, _| true,
            )?;
            Ok(out.u)
        }
    }
}

/// Approximately minimizes w ↦ E(base + extension of w) over the subdomain.
///
/// The returned correction never increases the energy: the best iterate seen
/// by the inner solver is returned, and w = 0 is always admissible.
pub fn local_energy_min(
    p: &ProblemInstance,
    base: &FeFunction,
    map: &SubspaceMap,
    cfg: &LocalSolverConfig,
) -> Result<Vec<f64>> {
    p.check_space(base)?;
    if !energy_value(p, base)?.is_finite() {
        return Err(Error::SolverDivergence("local solve from infeasible base".into()));
    }
    let data = build_local_data(p, None, map);
    let mut g0 = vec![0.0; p.dim()];
    p.smooth_grad_into(base.values(), &mut g0);
    let r0 = map.dofs().iter().map(|&g| g0[g]).collect();
    solve_local(p, &data, map, base.values(), r0, cfg)
}

/// Full-space view of an energy instance for the forward-backward solvers.
/// Quadratic P1 instances carry an assembled stiffness matrix so gradient
/// evaluations cost O(nnz) instead of a triangulation sweep.
pub struct FullObjective<'a> {
    p: &'a ProblemInstance,
    quad: Option<SparseMatrix>,
}

impl<'a> FullObjective<'a> {
    pub fn new(p: &'a ProblemInstance) -> Self {
        let quad = match (&p.kind, &p.space) {
            (ProblemKind::SLaplacian { s, .. }, SpaceRef::P1(space)) if *s == 2.0 => {
                Some(linalg::assemble_stiffness(space))
            }
            (ProblemKind::Obstacle { .. }, SpaceRef::P1(space)) => {
                Some(linalg::assemble_stiffness(space))
            }
            _ => None,
        };
        FullObjective { p, quad }
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.p
    }
}

impl<'a> Objective for FullObjective<'a> {
    fn dim(&self) -> usize {
        self.p.dim()
    }

    fn smooth_value(&self, u: &[f64]) -> f64 {
        match &self.quad {
            Some(a) => {
                let au = a.apply(u);
                let linear = match &self.p.kind {
                    ProblemKind::SLaplacian { load, .. } => linalg::dot(load, u),
                    _ => 0.0,
                };
                0.5 * linalg::dot(u, &au) - linear
            }
            None => self.p.smooth_value(u),
        }
    }

    fn smooth_grad(&self, u: &[f64], out: &mut [f64]) {
        match &self.quad {
            Some(a) => {
                a.matvec(u, out);
                if let ProblemKind::SLaplacian { load, .. } = &self.p.kind {
                    for (o, l) in out.iter_mut().zip(load) {
                        *o -= l;
                    }
                }
            }
            None => self.p.smooth_grad_into(u, out),
        }
    }

    fn project(&self, u: &mut [f64]) {
        self.p.project_feasible(u);
    }

    fn stop_stat(&self, a: &[f64], b: &[f64]) -> f64 {
        self.p.stop_stat(a, b)
    }
}
