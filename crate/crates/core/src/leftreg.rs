//! Aggregated left regular representation on the truncated `ℓ²_τ(Γ; x)`.

use serde::{Deserialize, Serialize};

use crate::linalg::{c, hermitian_defect, max_abs, max_abs_diff, op_norm, zeros, CMatrix};
use crate::psd::AggregationMap;
use crate::table::{ElementId, SemigroupoidTable};

/// Slack for `‖L(γ)‖ ≤ N`.
pub const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LeftRegularSpace {
    pub tau: AggregationMap,
    /// Per point `x`, the elements `γ` with `τ(c(γ)) = x`; these index `δ_γ`.
    pub bases: Vec<Vec<ElementId>>,
    /// `L(γ): ℓ²(x_d) → ℓ²(x_c)`.
    pub l: Vec<CMatrix>,
    /// Per element, the basis vectors `δ_β` with `γβ` composable but absent
    /// from the table; their columns are zero.
    pub overflow: Vec<Vec<ElementId>>,
}

impl LeftRegularSpace {
    pub fn matrix(&self, g: ElementId) -> &CMatrix {
        &self.l[g.0]
    }

    pub fn has_overflow(&self) -> bool {
        self.overflow.iter().any(|o| !o.is_empty())
    }
}

/// `L(γ)δ_β = δ_{γβ}` when the product exists, `0` otherwise.
pub fn left_regular(table: &SemigroupoidTable, tau: &AggregationMap) -> LeftRegularSpace {
    let n_points = tau.tau.iter().max().map_or(0, |m| m + 1);
    let mut bases = vec![Vec::new(); n_points];
    let mut position = vec![0; table.n_elements()];
    for g in table.elements() {
        let x = tau.of(table.tgt(g));
        position[g.0] = bases[x].len();
        bases[x].push(g);
    }
    let mut l = Vec::with_capacity(table.n_elements());
    let mut overflow = Vec::with_capacity(table.n_elements());
    for g in table.elements() {
        let (xc, xd) = (tau.of(table.tgt(g)), tau.of(table.src(g)));
        let mut m = zeros(bases[xc].len(), bases[xd].len());
        let mut flagged = Vec::new();
        for (j, &b) in bases[xd].iter().enumerate() {
            if !table.composable(g, b) {
                continue;
            }
            match table.mul(g, b) {
                Some(p) => m[(position[p.0], j)] = c(1.0, 0.0),
                None => flagged.push(b),
            }
        }
        l.push(m);
        overflow.push(flagged);
    }
    LeftRegularSpace { tau: tau.clone(), bases, l, overflow }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicityProfile {
    pub element: ElementId,
    /// `N = max_β |{α : γα = β}|`.
    pub max_multiplicity: usize,
    /// Every preimage is finite, so this always holds at finite scale.
    pub closable: bool,
    pub partial_isometry_expected: bool,
}

pub fn multiplicity_profile(table: &SemigroupoidTable, g: ElementId) -> MultiplicityProfile {
    let mut counts = vec![0usize; table.n_elements()];
    for a in table.with_target(table.src(g)) {
        if let Some(p) = table.mul(g, *a) {
            counts[p.0] += 1;
        }
    }
    MultiplicityProfile {
        element: g,
        max_multiplicity: counts.into_iter().max().unwrap_or(0),
        closable: true,
        partial_isometry_expected: table.left_cancellative_at(g) || table.is_invertible(g),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftRegularReport {
    /// Over elements where it is expected: `max ‖LL*L − L‖_max`.
    pub partial_isometry: f64,
    pub partial_isometry_checked: usize,
    /// `max ‖L(ε)² − L(ε)‖` and `max ‖L(ε) − L(ε)*‖` over units.
    pub projection: f64,
    /// `‖L(γβ) − L(γ)L(β)‖` on columns free of overflow.
    pub multiplicativity: f64,
    /// `‖L(β)* L(α)‖` for `c(α) ≠ c(β)` over the same point.
    pub orthogonality: f64,
    /// `max_γ (‖L(γ)‖ − N(γ))`, non-positive when every bound holds.
    pub norm_excess: f64,
    pub worst_norm_element: Option<ElementId>,
    pub tolerance: f64,
}

impl LeftRegularReport {
    pub fn passed(&self) -> bool {
        self.partial_isometry < self.tolerance
            && self.projection < self.tolerance
            && self.multiplicativity < self.tolerance
            && self.orthogonality < self.tolerance
            && self.norm_excess <= NORM_SLACK
    }
}

pub fn check_lr_properties(table: &SemigroupoidTable, space: &LeftRegularSpace) -> LeftRegularReport {
    let mut r = LeftRegularReport {
        partial_isometry: 0.0,
        partial_isometry_checked: 0,
        projection: 0.0,
        multiplicativity: 0.0,
        orthogonality: 0.0,
        norm_excess: f64::NEG_INFINITY,
        worst_norm_element: None,
        tolerance: 1e-9,
    };
    for g in table.elements() {
        let m = space.matrix(g);
        let profile = multiplicity_profile(table, g);
        if profile.partial_isometry_expected {
            r.partial_isometry = r.partial_isometry.max(max_abs_diff(&(m * m.adjoint() * m), m));
            r.partial_isometry_checked += 1;
        }
        if table.is_unit(g) {
            r.projection = r.projection.max(max_abs_diff(&(m * m), m)).max(hermitian_defect(m));
        }
        let excess = op_norm(m) - profile.max_multiplicity as f64;
        if excess > r.norm_excess {
            r.norm_excess = excess;
            r.worst_norm_element = Some(g);
        }
    }
    if r.worst_norm_element.is_none() {
        r.norm_excess = 0.0;
    }
    for (a, b, p) in table.products() {
        let xd = space.tau.of(table.src(b));
        let interior: Vec<usize> = space.bases[xd]
            .iter()
            .enumerate()
            .filter(|(_, beta)| ![a, b, p].iter().any(|g| space.overflow[g.0].contains(beta)))
            .map(|(j, _)| j)
            .collect();
        let prod = space.matrix(a) * space.matrix(b);
        for j in interior {
            let diff = (space.matrix(p).column(j) - prod.column(j)).iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
            r.multiplicativity = r.multiplicativity.max(diff);
        }
    }
    for a in table.elements() {
        for b in table.elements() {
            let (ca, cb) = (table.tgt(a), table.tgt(b));
            if ca != cb && space.tau.of(ca) == space.tau.of(cb) && space.tau.of(table.src(a)) == space.tau.of(table.src(b)) {
                r.orthogonality = r.orthogonality.max(max_abs(&(space.matrix(b).adjoint() * space.matrix(a))));
            }
        }
    }
    r
}

/// `L(γ)* L(γ)`, which is a 0/1 diagonal projection on left-cancellative tables.
pub fn initial_projection(space: &LeftRegularSpace, g: ElementId) -> CMatrix {
    let m = space.matrix(g);
    m.adjoint() * m
}

/// Whether `m` is diagonal with every entry exactly `0` or `1`.
pub fn is_zero_one_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    m.shape() == (n, n)
        && (0..n).all(|i| (0..n).all(|j| {
            let z = m[(i, j)];
            if i == j { z == c(0.0, 0.0) || z == c(1.0, 0.0) } else { z == c(0.0, 0.0) }
        }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free::{free_semigroupoid, DirectedGraph};
    use crate::linalg::real_matrix;
    use crate::table::{monoid, pair_groupoid};

    fn absorbing() -> SemigroupoidTable {
        // e, a, z with a² = z and z absorbing.
        monoid(&[vec![0, 1, 2], vec![1, 2, 2], vec![2, 2, 2]], Some(0), Some(vec![0, 1, 2])).unwrap()
    }

    #[test]
    fn trivial_group() {
        let t = monoid(&[vec![0]], Some(0), Some(vec![0])).unwrap();
        let s = left_regular(&t, &AggregationMap::full(1));
        assert_eq!(s.l[0], real_matrix(1, 1, &[1.0]));
    }

    #[test]
    fn pair_groupoid_permutations() {
        let t = pair_groupoid(2);
        let s = left_regular(&t, &AggregationMap::identity(2));
        assert_eq!(s.bases[0].len(), 2);
        // (0,1) sends δ_(1,0) to δ_(0,0) and δ_(1,1) to δ_(0,1).
        assert_eq!(s.l[1], real_matrix(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let r = check_lr_properties(&t, &s);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.partial_isometry, 0.0);
        for g in t.elements() {
            assert_eq!(multiplicity_profile(&t, g).max_multiplicity, 1);
            assert_eq!(s.l[t.star(g).unwrap().0], s.l[g.0].adjoint());
        }
    }

    #[test]
    fn loop_shift_with_overflow() {
        let g = DirectedGraph::new(1, vec![(0, 0)]).unwrap();
        let free = free_semigroupoid(&g, 3, true).unwrap();
        let s = left_regular(&free.table, &AggregationMap::full(1));
        // Basis e, a, aa, aaa; L(a) shifts and drops aaa.
        let a = ElementId(1);
        let expected = real_matrix(4, 4, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.l[a.0], expected);
        assert_eq!(s.overflow[a.0], vec![ElementId(3)]);
        assert_eq!(multiplicity_profile(&free.table, a).max_multiplicity, 1);
    }

    #[test]
    fn two_loops_have_orthogonal_ranges() {
        let g = DirectedGraph::new(1, vec![(0, 0), (0, 0)]).unwrap();
        let free = free_semigroupoid(&g, 3, true).unwrap();
        let s = left_regular(&free.table, &AggregationMap::full(1));
        let (a, b) = (ElementId(1), ElementId(2));
        assert_eq!(max_abs(&(s.l[b.0].adjoint() * &s.l[a.0])), 0.0);
        let r = check_lr_properties(&free.table, &s);
        assert!(r.passed(), "{r:?}");
        for g in free.table.elements() {
            assert!(is_zero_one_diagonal(&initial_projection(&s, g)));
        }
    }

    #[test]
    fn absorbing_element_norm() {
        let t = absorbing();
        let s = left_regular(&t, &AggregationMap::full(1));
        let a = ElementId(1);
        let p = multiplicity_profile(&t, a);
        assert_eq!(p.max_multiplicity, 2);
        assert!(!p.partial_isometry_expected);
        assert!((op_norm(&s.l[a.0]) - 2f64.sqrt()).abs() < 1e-12);
        let r = check_lr_properties(&t, &s);
        assert!(r.passed(), "{r:?}");
    }
}
