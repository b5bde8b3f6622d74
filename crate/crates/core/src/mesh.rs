//! Structured meshes and finite element spaces on the unit square.
//!
//! Two discretizations are provided: continuous piecewise-linear elements on
//! a uniform triangulation (every square cell split along the lower-left to
//! upper-right diagonal), and lowest-order divergence-conforming elements on
//! the square cells themselves. Both impose homogeneous essential boundary
//! conditions, so boundary nodes/edges carry no degrees of freedom.
//!
//! DOF ordering is lexicographic by (y, x); for edge elements the vertical
//! (normal +x) edges come first, then the horizontal (normal +y) edges.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Mesh and decomposition sizes: `cells` fine cells per side (h = 1/cells),
/// `coarse_cells` subdomains per side (H = 1/coarse_cells), and the overlap
/// width in fine-cell layers (delta = overlap_layers * h).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshParams {
    cells: usize,
    coarse_cells: usize,
    overlap_layers: usize,
}

impl MeshParams {
    pub fn new(cells: usize, coarse_cells: usize, overlap_layers: usize) -> Result<Self> {
        if cells == 0 || coarse_cells == 0 || overlap_layers == 0 {
            return Err(Error::InvalidParams(
                "cells, coarse cells and overlap layers must be positive".into(),
            ));
        }
        if !cells.is_multiple_of(coarse_cells) {
            return Err(Error::InvalidParams(format!(
                "cells {cells} is not a multiple of coarse cells {coarse_cells}"
            )));
        }
        // overlap must not exceed half a subdomain, or subdomains more than
        // two apart would start to interact and the 4-coloring bound breaks
        if 2 * overlap_layers * coarse_cells > cells {
            return Err(Error::InvalidParams(format!(
                "overlap {overlap_layers} exceeds half the subdomain width {}",
                cells / coarse_cells
            )));
        }
        Ok(MeshParams { cells, coarse_cells, overlap_layers })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn coarse_cells(&self) -> usize {
        self.coarse_cells
    }

    pub fn overlap_layers(&self) -> usize {
        self.overlap_layers
    }

    /// Fine cells per subdomain side (H/h).
    pub fn cells_per_subdomain(&self) -> usize {
        self.cells / self.coarse_cells
    }

    pub fn fine_spacing(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn subdomain_width(&self) -> f64 {
        1.0 / self.coarse_cells as f64
    }

    pub fn overlap_width(&self) -> f64 {
        self.overlap_layers as f64 * self.fine_spacing()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshLevel {
    Fine,
    Coarse,
}

/// One triangle of the P1 space: vertex node ids, area, and the constant
/// gradients of the three nodal basis functions.
#[derive(Debug, Clone)]
pub struct Triangle {
    pub nodes: [usize; 3],
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

/// Continuous piecewise-linear space on a uniform triangulation of [0,1]^2
/// with homogeneous essential boundary conditions.
#[derive(Debug)]
pub struct FeSpaceP1 {
    cells: usize,
    level: MeshLevel,
    spacing: f64,
    node_dof: Vec<Option<usize>>,
    dof_node: Vec<usize>,
    tris: Vec<Triangle>,
}

fn rot90(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

impl FeSpaceP1 {
    /// Builds the space on a `cells` x `cells` grid. Needs `cells >= 2`;
    /// a single cell has no interior node.
    pub fn build(cells: usize, level: MeshLevel) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidParams(format!(
                "{cells} cells per side leaves zero interior DOFs"
            )));
        }
        let h = 1.0 / cells as f64;
        let nodes_per_side = cells + 1;
        let node_id = |ix: usize, iy: usize| iy * nodes_per_side + ix;

        let mut node_dof = vec![None; nodes_per_side * nodes_per_side];
        let mut dof_node = Vec::with_capacity((cells - 1) * (cells - 1));
        for iy in 1..cells {
            for ix in 1..cells {
                node_dof[node_id(ix, iy)] = Some(dof_node.len());
                dof_node.push(node_id(ix, iy));
            }
        }

        let mut tris = Vec::with_capacity(2 * cells * cells);
        for iy in 0..cells {
            for ix in 0..cells {
                let a = node_id(ix, iy);
                let b = node_id(ix + 1, iy);
                let c = node_id(ix + 1, iy + 1);
                let d = node_id(ix, iy + 1);
                // split along the lower-left to upper-right diagonal
                tris.push(Self::make_triangle([a, b, c], nodes_per_side, h));
                tris.push(Self::make_triangle([a, c, d], nodes_per_side, h));
            }
        }

        Ok(FeSpaceP1 { cells, level, spacing: h, node_dof, dof_node, tris })
    }

    fn make_triangle(nodes: [usize; 3], nodes_per_side: usize, h: f64) -> Triangle {
        let coord = |n: usize| {
            [(n % nodes_per_side) as f64 * h, (n / nodes_per_side) as f64 * h]
        };
        let p: Vec<[f64; 2]> = nodes.iter().map(|&n| coord(n)).collect();
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]);
        debug_assert!(area > 0.0, "triangle vertices must be counterclockwise");
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let u = p[(i + 2) % 3];
            let w = p[(i + 1) % 3];
            let r = rot90([u[0] - w[0], u[1] - w[1]]);
            grads[i] = [r[0] / (2.0 * area), r[1] / (2.0 * area)];
        }
        Triangle { nodes, area, grads }
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn level(&self) -> MeshLevel {
        self.level
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.node_dof.len()
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let nps = self.cells + 1;
        ((node % nps) as f64 * self.spacing, (node / nps) as f64 * self.spacing)
    }

    /// Grid indices (ix, iy) of a node.
    pub fn node_grid(&self, node: usize) -> (usize, usize) {
        let nps = self.cells + 1;
        (node % nps, node / nps)
    }

    pub fn node_at(&self, ix: usize, iy: usize) -> usize {
        iy * (self.cells + 1) + ix
    }

    pub fn node_dof(&self, node: usize) -> Option<usize> {
        self.node_dof[node]
    }

    pub fn dof_count(&self) -> usize {
        self.dof_node.len()
    }

    pub fn dof_node(&self, dof: usize) -> usize {
        self.dof_node[dof]
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.tris
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Edge on a vertical grid line, unit normal +x.
    Vertical,
    /// Edge on a horizontal grid line, unit normal +y.
    Horizontal,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub kind: EdgeKind,
    /// Grid line index (x-index for vertical, y-index for horizontal).
    pub line: usize,
    /// Position along the line (y-cell for vertical, x-cell for horizontal).
    pub along: usize,
    pub dof: Option<usize>,
}

impl Edge {
    pub fn normal(&self) -> [f64; 2] {
        match self.kind {
            EdgeKind::Vertical => [1.0, 0.0],
            EdgeKind::Horizontal => [0.0, 1.0],
        }
    }
}

/// Lowest-order divergence-conforming space on the square cells, one DOF per
/// interior edge holding the (constant) normal component across that edge.
#[derive(Debug)]
pub struct FeSpaceRT0 {
    cells: usize,
    spacing: f64,
    edges: Vec<Edge>,
    dof_edge: Vec<usize>,
    /// Per cell: [left, right, bottom, top] edge ids.
    cell_edges: Vec<[usize; 4]>,
}

impl FeSpaceRT0 {
    pub fn build(cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidParams(format!(
                "{cells} cells per side leaves no interior edges"
            )));
        }
        let n = cells;
        let h = 1.0 / n as f64;
        let v_id = |i: usize, j: usize| j * (n + 1) + i; // x-line i in 0..=n, cell row j
        let h_off = n * (n + 1);
        let h_id = |i: usize, j: usize| h_off + j * n + i; // y-line j in 0..=n, cell col i

        let mut edges = vec![
            Edge { kind: EdgeKind::Vertical, line: 0, along: 0, dof: None };
            2 * n * (n + 1)
        ];
        let mut dof_edge = Vec::with_capacity(2 * n * (n - 1));
        // vertical edges first, lexicographic by (y, x)
        for j in 0..n {
            for i in 0..=n {
                let dof = (1..n).contains(&i).then(|| {
                    dof_edge.push(v_id(i, j));
                    dof_edge.len() - 1
                });
                edges[v_id(i, j)] = Edge { kind: EdgeKind::Vertical, line: i, along: j, dof };
            }
        }
        for j in 0..=n {
            for i in 0..n {
                let dof = (1..n).contains(&j).then(|| {
                    dof_edge.push(h_id(i, j));
                    dof_edge.len() - 1
                });
                edges[h_id(i, j)] = Edge { kind: EdgeKind::Horizontal, line: j, along: i, dof };
            }
        }

        let mut cell_edges = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                cell_edges.push([v_id(ix, iy), v_id(ix + 1, iy), h_id(ix, iy), h_id(ix, iy + 1)]);
            }
        }

        Ok(FeSpaceRT0 { cells: n, spacing: h, edges, dof_edge, cell_edges })
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells * self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn edge_length(&self) -> f64 {
        self.spacing
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn dof_count(&self) -> usize {
        self.dof_edge.len()
    }

    pub fn dof_edge(&self, dof: usize) -> usize {
        self.dof_edge[dof]
    }

    /// [left, right, bottom, top] edge ids of cell (ix, iy).
    pub fn cell_edge_ids(&self, cell: usize) -> [usize; 4] {
        self.cell_edges[cell]
    }

    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.cells + ix
    }

    pub fn cell_grid(&self, cell: usize) -> (usize, usize) {
        (cell % self.cells, cell / self.cells)
    }

    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let (ix, iy) = self.cell_grid(cell);
        ((ix as f64 + 0.5) * self.spacing, (iy as f64 + 0.5) * self.spacing)
    }
}

/// Identifies a space structurally (used for mismatch checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceId {
    pub kind: SpaceKind,
    pub cells: usize,
    pub level: MeshLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    P1,
    Rt0,
}

/// Shared handle to a finite element space.
#[derive(Debug, Clone)]
pub enum SpaceRef {
    P1(Arc<FeSpaceP1>),
    Rt0(Arc<FeSpaceRT0>),
}

impl SpaceRef {
    pub fn dof_count(&self) -> usize {
        match self {
            SpaceRef::P1(s) => s.dof_count(),
            SpaceRef::Rt0(s) => s.dof_count(),
        }
    }

    pub fn spacing(&self) -> f64 {
        match self {
            SpaceRef::P1(s) => s.spacing(),
            SpaceRef::Rt0(s) => s.spacing(),
        }
    }

    pub fn id(&self) -> SpaceId {
        match self {
            SpaceRef::P1(s) => SpaceId { kind: SpaceKind::P1, cells: s.cells_per_side(), level: s.level() },
            SpaceRef::Rt0(s) => {
                SpaceId { kind: SpaceKind::Rt0, cells: s.cells_per_side(), level: MeshLevel::Fine }
            }
        }
    }

    pub fn as_p1(&self) -> Result<&Arc<FeSpaceP1>> {
        match self {
            SpaceRef::P1(s) => Ok(s),
            SpaceRef::Rt0(_) => Err(Error::SpaceMismatch),
        }
    }

    pub fn as_rt0(&self) -> Result<&Arc<FeSpaceRT0>> {
        match self {
            SpaceRef::Rt0(s) => Ok(s),
            SpaceRef::P1(_) => Err(Error::SpaceMismatch),
        }
    }
}

/// A DOF vector bound to a space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: SpaceRef,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: SpaceRef) -> Self {
        let n = space.dof_count();
        FeFunction { space, values: vec![0.0; n] }
    }

    pub fn from_values(space: SpaceRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.dof_count() {
            return Err(Error::DimensionMismatch {
                expected: space.dof_count(),
                got: values.len(),
            });
        }
        Ok(FeFunction { space, values })
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_space(&self, other: &FeFunction) -> bool {
        self.space.id() == other.space.id()
    }
}

/// Builds the P1 space at the requested level of a mesh parameter set.
pub fn build_p1_space(params: &MeshParams, level: MeshLevel) -> Result<FeSpaceP1> {
    let cells = match level {
        MeshLevel::Fine => params.cells(),
        MeshLevel::Coarse => params.coarse_cells(),
    };
    FeSpaceP1::build(cells, level)
}

/// Builds the divergence-conforming space on the fine cell grid.
pub fn build_rt0_space(params: &MeshParams) -> Result<FeSpaceRT0> {
    FeSpaceRT0::build(params.cells())
}

/// Per-triangle constant gradient of a full nodal field (all nodes, boundary
/// values included).
pub fn gradient_of_nodal_field(space: &FeSpaceP1, nodal: &[f64]) -> Vec<[f64; 2]> {
    space
        .triangles()
        .iter()
        .map(|tri| {
            let mut g = [0.0, 0.0];
            for i in 0..3 {
                let v = nodal[tri.nodes[i]];
                g[0] += v * tri.grads[i][0];
                g[1] += v * tri.grads[i][1];
            }
            g
        })
        .collect()
}

/// Per-triangle gradient of a DOF function (boundary values are zero).
pub fn p1_gradient(u: &FeFunction) -> Result<Vec<[f64; 2]>> {
    let space = u.space().as_p1()?;
    let mut nodal = vec![0.0; space.node_count()];
    for (dof, &v) in u.values().iter().enumerate() {
        nodal[space.dof_node(dof)] = v;
    }
    Ok(gradient_of_nodal_field(space, &nodal))
}

/// Per-cell constant divergence of a DOF function (boundary fluxes are zero).
pub fn rt0_divergence(u: &FeFunction) -> Result<Vec<f64>> {
    let space = u.space().as_rt0()?;
    Ok(divergence_of_dofs(space, u.values()))
}

pub(crate) fn divergence_of_dofs(space: &FeSpaceRT0, vals: &[f64]) -> Vec<f64> {
    let h = space.spacing();
    (0..space.cell_count())
        .map(|c| {
            let [l, r, b, t] = space.cell_edge_ids(c);
            let val = |e: usize| space.edges()[e].dof.map_or(0.0, |d| vals[d]);
            (val(r) - val(l) + val(t) - val(b)) / h
        })
        .collect()
}

/// Interpolation from a coarse P1 space into a fine one. Column j holds the
/// fine-node values of coarse hat basis j.
#[derive(Debug, Clone)]
pub struct InterpOperator {
    fine_dim: usize,
    coarse_dim: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl InterpOperator {
    pub fn fine_dim(&self) -> usize {
        self.fine_dim
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse_dim
    }

    pub fn col(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    /// out += P w
    pub fn apply_add(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.coarse_dim);
        debug_assert_eq!(out.len(), self.fine_dim);
        for (j, col) in self.cols.iter().enumerate() {
            let wj = w[j];
            if wj != 0.0 {
                for &(i, p) in col {
                    out[i] += p * wj;
                }
            }
        }
    }

    /// out = P^T r
    pub fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.fine_dim);
        debug_assert_eq!(out.len(), self.coarse_dim);
        for (j, col) in self.cols.iter().enumerate() {
            out[j] = col.iter().map(|&(i, p)| p * r[i]).sum();
        }
    }
}

/// Evaluates the coarse hat bases at the fine interior nodes.
pub fn coarse_interpolation(coarse: &FeSpaceP1, fine: &FeSpaceP1) -> Result<InterpOperator> {
    let nc = coarse.cells_per_side();
    let nf = fine.cells_per_side();
    if !nf.is_multiple_of(nc) || nf < nc {
        return Err(Error::InvalidParams(format!(
            "fine mesh ({nf} cells) does not nest the coarse mesh ({nc} cells)"
        )));
    }
    let m = nf / nc;
    let mut cols = vec![Vec::new(); coarse.dof_count()];
    for fdof in 0..fine.dof_count() {
        let (gx, gy) = fine.node_grid(fine.dof_node(fdof));
        let cx = (gx / m).min(nc - 1);
        let cy = (gy / m).min(nc - 1);
        let xi = (gx - cx * m) as f64 / m as f64;
        let eta = (gy - cy * m) as f64 / m as f64;
        // barycentric weights on the containing sub-triangle of the coarse cell
        let (corners, weights) = if eta <= xi {
            ([(cx, cy), (cx + 1, cy), (cx + 1, cy + 1)], [1.0 - xi, xi - eta, eta])
        } else {
            ([(cx, cy), (cx + 1, cy + 1), (cx, cy + 1)], [1.0 - eta, xi, eta - xi])
        };
        for (&(vx, vy), &w) in corners.iter().zip(&weights) {
            if w > 0.0 {
                if let Some(cdof) = coarse.node_dof(coarse.node_at(vx, vy)) {
                    cols[cdof].push((fdof, w));
                }
            }
        }
    }
    for col in &mut cols {
        col.sort_unstable_by_key(|&(i, _)| i);
    }
    Ok(InterpOperator { fine_dim: fine.dof_count(), coarse_dim: coarse.dof_count(), cols })
}

/// Nodal interpolation of a scalar field onto the interior DOFs.
pub fn nodal_interpolate<F: Fn(f64, f64) -> f64>(g: F, space: &Arc<FeSpaceP1>) -> FeFunction {
    let values = (0..space.dof_count())
        .map(|d| {
            let (x, y) = space.node_coords(space.dof_node(d));
            g(x, y)
        })
        .collect();
    FeFunction { space: SpaceRef::P1(space.clone()), values }
}
