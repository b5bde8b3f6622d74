//! Overlapping space decompositions and the gather/scatter machinery that
//! realizes the restriction and extension operators.
//!
//! Subdomains form an N x N grid; each is enlarged by `overlap_layers` rings
//! of fine cells (clipped to the domain) and keeps the DOFs strictly inside
//! the enlarged region. The optional coarse component interpolates a coarse
//! P1 space into the fine one.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{
    coarse_interpolation, EdgeKind, FeFunction, FeSpaceP1, FeSpaceRT0, InterpOperator, MeshLevel,
    MeshParams, SpaceId, SpaceRef,
};

/// Half-open cell index ranges of an enlarged subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

/// Global DOF indices of one local space, with its subdomain id and the
/// enlarged-subdomain cell rectangle.
#[derive(Debug, Clone)]
pub struct SubspaceMap {
    subdomain: usize,
    dofs: Vec<usize>,
    rect: CellRect,
}

impl SubspaceMap {
    pub fn new(subdomain: usize, dofs: Vec<usize>, rect: CellRect, global_dim: usize) -> Result<Self> {
        let mut seen = vec![false; global_dim];
        for &d in &dofs {
            if d >= global_dim {
                return Err(Error::Internal(format!(
                    "subspace dof {d} out of range {global_dim}"
                )));
            }
            if seen[d] {
                return Err(Error::Internal(format!("duplicate dof {d} in subspace")));
            }
            seen[d] = true;
        }
        Ok(SubspaceMap { subdomain, dofs, rect })
    }

    pub fn subdomain(&self) -> usize {
        self.subdomain
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn rect(&self) -> CellRect {
        self.rect
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionLevel {
    OneLevel,
    TwoLevel,
}

/// Coarse component of a two-level decomposition.
#[derive(Debug)]
pub struct CoarseOperator {
    pub space: Arc<FeSpaceP1>,
    pub interp: InterpOperator,
}

/// The full decomposition: local subspaces, optional coarse operator, and
/// the outer relaxation step size.
#[derive(Debug)]
pub struct DecompositionPlan {
    params: MeshParams,
    space_id: SpaceId,
    global_dim: usize,
    maps: Vec<SubspaceMap>,
    coarse: Option<CoarseOperator>,
    step_size: f64,
    level: DecompositionLevel,
}

impl DecompositionPlan {
    pub fn params(&self) -> &MeshParams {
        &self.params
    }

    pub fn space_id(&self) -> SpaceId {
        self.space_id
    }

    pub fn global_dim(&self) -> usize {
        self.global_dim
    }

    pub fn maps(&self) -> &[SubspaceMap] {
        &self.maps
    }

    pub fn coarse(&self) -> Option<&CoarseOperator> {
        self.coarse.as_ref()
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn level(&self) -> DecompositionLevel {
        self.level
    }

    /// Overrides the outer step size; must lie in (0, 1].
    pub fn with_step_size(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParams(format!("step size {tau} outside (0, 1]")));
        }
        self.step_size = tau;
        Ok(self)
    }
}

/// Default outer step size: 1/4 one-level, 1/5 two-level (the subdomains can
/// be colored with four colors; the coarse space adds one more).
pub fn default_step_size(level: DecompositionLevel) -> f64 {
    match level {
        DecompositionLevel::OneLevel => 0.25,
        DecompositionLevel::TwoLevel => 0.2,
    }
}

fn subdomain_rect(params: &MeshParams, sx: usize, sy: usize) -> CellRect {
    let n = params.cells();
    let m = params.cells_per_subdomain();
    let d = params.overlap_layers();
    CellRect {
        x0: (sx * m).saturating_sub(d),
        x1: ((sx + 1) * m + d).min(n),
        y0: (sy * m).saturating_sub(d),
        y1: ((sy + 1) * m + d).min(n),
    }
}

fn p1_subspace(space: &FeSpaceP1, rect: CellRect, subdomain: usize) -> Result<SubspaceMap> {
    // nodes strictly inside the enlarged subdomain
    let mut dofs = Vec::new();
    for gy in rect.y0 + 1..rect.y1 {
        for gx in rect.x0 + 1..rect.x1 {
            let dof = space
                .node_dof(space.node_at(gx, gy))
                .ok_or_else(|| Error::Internal("patch node without dof".into()))?;
            dofs.push(dof);
        }
    }
    SubspaceMap::new(subdomain, dofs, rect, space.dof_count())
}

fn rt0_subspace(space: &FeSpaceRT0, rect: CellRect, subdomain: usize) -> Result<SubspaceMap> {
    // edges shared by two cells of the enlarged subdomain
    let mut dofs = Vec::new();
    for e in space.edges() {
        let inside = match e.kind {
            EdgeKind::Vertical => {
                e.line > rect.x0 && e.line < rect.x1 && e.along >= rect.y0 && e.along < rect.y1
            }
            EdgeKind::Horizontal => {
                e.line > rect.y0 && e.line < rect.y1 && e.along >= rect.x0 && e.along < rect.x1
            }
        };
        if inside {
            if let Some(d) = e.dof {
                dofs.push(d);
            }
        }
    }
    dofs.sort_unstable();
    SubspaceMap::new(subdomain, dofs, rect, space.dof_count())
}

/// Builds the one- or two-level decomposition for a fine space.
pub fn build_decomposition(
    params: &MeshParams,
    space: &SpaceRef,
    level: DecompositionLevel,
) -> Result<DecompositionPlan> {
    let id = space.id();
    if id.cells != params.cells() || id.level != MeshLevel::Fine {
        return Err(Error::InvalidParams(
            "decomposition parameters do not match the fine space".into(),
        ));
    }
    let nsub = params.coarse_cells();
    let mut maps = Vec::with_capacity(nsub * nsub);
    for sy in 0..nsub {
        for sx in 0..nsub {
            let rect = subdomain_rect(params, sx, sy);
            let subdomain = sy * nsub + sx;
            let map = match space {
                SpaceRef::P1(s) => p1_subspace(s, rect, subdomain)?,
                SpaceRef::Rt0(s) => rt0_subspace(s, rect, subdomain)?,
            };
            maps.push(map);
        }
    }

    let global_dim = space.dof_count();
    let mut covered = vec![false; global_dim];
    for map in &maps {
        for &d in map.dofs() {
            covered[d] = true;
        }
    }
    if let Some(missing) = covered.iter().position(|&c| !c) {
        return Err(Error::Internal(format!(
            "space decomposition does not span dof {missing}"
        )));
    }

    let coarse = match (level, space) {
        (DecompositionLevel::OneLevel, _) => None,
        (DecompositionLevel::TwoLevel, SpaceRef::P1(fine)) => {
            let coarse_space = Arc::new(FeSpaceP1::build(params.coarse_cells(), MeshLevel::Coarse)?);
            let interp = coarse_interpolation(&coarse_space, fine)?;
            Some(CoarseOperator { space: coarse_space, interp })
        }
        (DecompositionLevel::TwoLevel, SpaceRef::Rt0(_)) => {
            return Err(Error::Unsupported(
                "two-level decomposition for divergence-conforming spaces".into(),
            ));
        }
    };

    Ok(DecompositionPlan {
        params: *params,
        space_id: id,
        global_dim,
        maps,
        coarse,
        step_size: default_step_size(level),
        level,
    })
}

/// Gathers the local DOF values of `u`.
pub fn restrict(u: &FeFunction, map: &SubspaceMap) -> Vec<f64> {
    map.dofs().iter().map(|&g| u.values()[g]).collect()
}

/// Scatter-adds the local values into the global accumulator.
pub fn extend(w: &[f64], map: &SubspaceMap, out: &mut FeFunction) -> Result<()> {
    extend_slice(w, map, out.values_mut())
}

pub(crate) fn extend_slice(w: &[f64], map: &SubspaceMap, out: &mut [f64]) -> Result<()> {
    if w.len() != map.len() {
        return Err(Error::DimensionMismatch { expected: map.len(), got: w.len() });
    }
    for (&g, &v) in map.dofs().iter().zip(w) {
        out[g] += v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_p1_space, build_rt0_space};
    use proptest::prelude::*;

    fn p1_plan(n: usize, nsub: usize, d: usize, level: DecompositionLevel) -> DecompositionPlan {
        let params = MeshParams::new(n, nsub, d).unwrap();
        let space = Arc::new(build_p1_space(&params, MeshLevel::Fine).unwrap());
        build_decomposition(&params, &SpaceRef::P1(space), level).unwrap()
    }

    #[test]
    fn interior_patch_geometry() {
        // n=16, N=4, d=1: a fully interior enlarged subdomain covers a 6x6
        // cell patch and holds the 25 nodes strictly inside it
        let plan = p1_plan(16, 4, 1, DecompositionLevel::OneLevel);
        assert_eq!(plan.maps().len(), 16);
        let map = &plan.maps()[5]; // subdomain (1,1)
        assert_eq!(map.rect(), CellRect { x0: 3, x1: 9, y0: 3, y1: 9 });
        assert_eq!(map.len(), 25);
        let params = MeshParams::new(16, 4, 1).unwrap();
        let space = build_p1_space(&params, MeshLevel::Fine).unwrap();
        for &dof in map.dofs() {
            let (gx, gy) = space.node_grid(space.dof_node(dof));
            assert!((4..=8).contains(&gx) && (4..=8).contains(&gy));
        }
    }

    #[test]
    fn small_plan_covers_all_dofs() {
        let plan = p1_plan(4, 2, 1, DecompositionLevel::OneLevel);
        assert_eq!(plan.maps().len(), 4);
        let mut covered = vec![false; plan.global_dim()];
        for map in plan.maps() {
            for &d in map.dofs() {
                covered[d] = true;
            }
        }
        assert_eq!(plan.global_dim(), 9);
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn oversized_overlap_rejected() {
        assert!(MeshParams::new(4, 2, 2).is_err());
    }

    #[test]
    fn step_size_defaults() {
        assert_eq!(default_step_size(DecompositionLevel::OneLevel), 0.25);
        assert_eq!(default_step_size(DecompositionLevel::TwoLevel), 0.2);
    }

    #[test]
    fn step_size_override_validated() {
        let plan = p1_plan(4, 2, 1, DecompositionLevel::OneLevel);
        assert!(plan.with_step_size(1.5).is_err());
    }

    #[test]
    fn coloring_bound() {
        // every DOF lies in at most four subspaces (2x2 overlap pattern)
        for (n, nsub, d) in [(16, 4, 1), (16, 4, 2), (32, 4, 4), (8, 2, 2)] {
            let plan = p1_plan(n, nsub, d, DecompositionLevel::OneLevel);
            let mut count = vec![0usize; plan.global_dim()];
            for map in plan.maps() {
                for &dof in map.dofs() {
                    count[dof] += 1;
                }
            }
            let max = count.iter().max().unwrap();
            assert!(*max <= 4, "n={n} N={nsub} d={d}: max cover {max}");
        }
    }

    #[test]
    fn rt0_plan_spans_and_rejects_two_level() {
        let params = MeshParams::new(4, 2, 1).unwrap();
        let space = Arc::new(build_rt0_space(&params).unwrap());
        let plan =
            build_decomposition(&params, &SpaceRef::Rt0(space.clone()), DecompositionLevel::OneLevel)
                .unwrap();
        assert_eq!(plan.maps().len(), 4);
        let err = build_decomposition(&params, &SpaceRef::Rt0(space), DecompositionLevel::TwoLevel);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn two_level_has_coarse_operator() {
        let plan = p1_plan(16, 4, 1, DecompositionLevel::TwoLevel);
        let coarse = plan.coarse().unwrap();
        assert_eq!(coarse.space.dof_count(), 9);
        assert_eq!(coarse.interp.fine_dim(), plan.global_dim());
        assert_eq!(plan.step_size(), 0.2);
    }

    #[test]
    fn gather_scatter_identities() {
        let plan = p1_plan(4, 2, 1, DecompositionLevel::OneLevel);
        let params = MeshParams::new(4, 2, 1).unwrap();
        let space = Arc::new(build_p1_space(&params, MeshLevel::Fine).unwrap());
        let map = &plan.maps()[0];

        // gather of zero
        let zero = FeFunction::zeros(SpaceRef::P1(space.clone()));
        assert!(restrict(&zero, map).iter().all(|&v| v == 0.0));

        // identity permutation over the whole space
        let full = SubspaceMap::new(
            0,
            (0..9).collect(),
            CellRect { x0: 0, x1: 4, y0: 0, y1: 4 },
            9,
        )
        .unwrap();
        let mut u = FeFunction::zeros(SpaceRef::P1(space.clone()));
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            *v = i as f64 + 1.0;
        }
        assert_eq!(restrict(&u, &full), u.values());

        // extend of zero leaves the accumulator unchanged
        let mut acc = u.clone();
        extend(&vec![0.0; map.len()], map, &mut acc).unwrap();
        assert_eq!(acc.values(), u.values());

        // length mismatch is an error
        assert!(extend(&[1.0], map, &mut acc).is_err());
    }

    #[test]
    fn disjoint_scatter_matches_dense_oracle() {
        let space = Arc::new(FeSpaceP1::build(4, MeshLevel::Fine).unwrap());
        let rect = CellRect { x0: 0, x1: 4, y0: 0, y1: 4 };
        let a = SubspaceMap::new(0, vec![0, 2, 4], rect, 9).unwrap();
        let b = SubspaceMap::new(1, vec![1, 5], rect, 9).unwrap();
        let wa = [1.0, 2.0, 3.0];
        let wb = [10.0, 20.0];
        let mut acc = FeFunction::zeros(SpaceRef::P1(space));
        extend(&wa, &a, &mut acc).unwrap();
        extend(&wb, &b, &mut acc).unwrap();
        // dense scatter oracle
        let mut dense = vec![0.0; 9];
        for (&g, &v) in a.dofs().iter().zip(&wa) {
            dense[g] += v;
        }
        for (&g, &v) in b.dofs().iter().zip(&wb) {
            dense[g] += v;
        }
        assert_eq!(acc.values(), &dense[..]);
    }

    proptest! {
        #[test]
        fn restrict_extend_roundtrip(vals in proptest::collection::vec(-100.0f64..100.0, 25)) {
            let plan = p1_plan(16, 4, 1, DecompositionLevel::OneLevel);
            let map = &plan.maps()[5];
            prop_assert_eq!(map.len(), 25);
            let params = MeshParams::new(16, 4, 1).unwrap();
            let space = Arc::new(build_p1_space(&params, MeshLevel::Fine).unwrap());
            let mut acc = FeFunction::zeros(SpaceRef::P1(space));
            extend(&vals, map, &mut acc).unwrap();
            // restrict(extend(w)) == w on a zero accumulator
            prop_assert_eq!(restrict(&acc, map), vals.clone());
            // extend∘restrict masks the function to the subdomain
            let masked = restrict(&acc, map);
            let mut again = FeFunction::zeros(acc.space().clone());
            extend(&masked, map, &mut again).unwrap();
            prop_assert_eq!(again.values(), acc.values());
        }
    }
}
