//! Cuntz-Krieger-Toeplitz families of a directed graph and the representation
//! of the free *-semigroupoid they induce.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dilation::{check_representation, RepresentationCheck};
use crate::free::{free_star_semigroupoid, DirectedGraph, GraphError, TruncatedFreeTable};
use crate::linalg::{self, hermitian_defect, identity, max_abs, max_abs_diff, zeros, CMatrix};
use crate::psd::{AggregationMap, CoherentMap, HilbertBundle, MapError};

/// Tolerance for the family identities.
pub const CKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CktError {
    #[error("{what} {index} is {found:?}, expected {expected}x{expected}")]
    Shape { what: &'static str, index: usize, expected: usize, found: (usize, usize) },
    #[error("{what}: {found} given for {expected}")]
    Count { what: &'static str, expected: usize, found: usize },
    #[error("family fails validation: {0}")]
    ValidationFailed(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Projections `P_v` and operators `S_f` on a common space `H = C^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct CktFamily {
    pub graph: DirectedGraph,
    pub dim: usize,
    pub p: Vec<CMatrix>,
    pub s: Vec<CMatrix>,
}

impl CktFamily {
    pub fn new(graph: DirectedGraph, dim: usize, p: Vec<CMatrix>, s: Vec<CMatrix>) -> Result<Self, CktError> {
        if p.len() != graph.vertices {
            return Err(CktError::Count { what: "projections", expected: graph.vertices, found: p.len() });
        }
        if s.len() != graph.edges.len() {
            return Err(CktError::Count { what: "edge operators", expected: graph.edges.len(), found: s.len() });
        }
        for (what, list) in [("projection", &p), ("edge operator", &s)] {
            if let Some((index, m)) = list.iter().enumerate().find(|(_, m)| m.shape() != (dim, dim)) {
                return Err(CktError::Shape { what, index, expected: dim, found: m.shape() });
            }
        }
        Ok(Self { graph, dim, p, s })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexValue {
    pub vertex: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeValue {
    pub edge: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CktReport {
    /// `max_v ‖P_v² − P_v‖`, `max_v ‖P_v − P_v*‖`, `max_{v≠w} ‖P_v P_w‖`.
    pub idempotent: f64,
    pub hermitian: f64,
    pub orthogonality: f64,
    /// `‖S_f* S_f − P_{s(f)}‖_max` per edge.
    pub condition_i: Vec<EdgeValue>,
    /// `λ_min(P_v − Σ_{r(f)=v} S_f S_f*)` per vertex.
    pub condition_ckt: Vec<VertexValue>,
    /// `‖P_v − Σ_{r(f)=v} S_f S_f*‖_max` for vertices receiving an edge.
    pub condition_ck: Vec<VertexValue>,
    /// `‖(I − P_{r(f)}) S_f‖_max` per edge.
    pub range_containment: Vec<EdgeValue>,
    /// `‖Σ_v P_v − I‖_max`.
    pub nondegenerate: f64,
    pub tolerance: f64,
}

impl CktReport {
    pub fn projections_hold(&self) -> bool {
        self.idempotent < self.tolerance && self.hermitian < self.tolerance && self.orthogonality < self.tolerance
    }

    pub fn condition_i_holds(&self) -> bool {
        self.condition_i.iter().all(|e| e.value < self.tolerance)
    }

    pub fn condition_ckt_holds(&self) -> bool {
        self.condition_ckt.iter().all(|v| v.value >= -self.tolerance)
    }

    pub fn condition_ck_holds(&self) -> bool {
        self.condition_ck.iter().all(|v| v.value < self.tolerance)
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.nondegenerate < self.tolerance
    }

    /// Projections, (I) and (CKT): what makes a CKT family.
    pub fn passed(&self) -> bool {
        self.projections_hold() && self.condition_i_holds() && self.condition_ckt_holds()
    }

    pub fn worst_condition_i(&self) -> Option<&EdgeValue> {
        self.condition_i.iter().max_by(|a, b| a.value.total_cmp(&b.value))
    }

    pub fn worst_condition_ckt(&self) -> Option<&VertexValue> {
        self.condition_ckt.iter().min_by(|a, b| a.value.total_cmp(&b.value))
    }
}

/// Checks the family identities. The (CKT) inequality is tested for
/// `F = r^{-1}(v)` only: every `S_f S_f*` is positive, so the full sum is the
/// binding case among finite subsets.
pub fn validate_ckt(fam: &CktFamily) -> CktReport {
    let g = &fam.graph;
    let n = fam.dim;
    let mut report = CktReport {
        idempotent: 0.0,
        hermitian: 0.0,
        orthogonality: 0.0,
        condition_i: Vec::new(),
        condition_ckt: Vec::new(),
        condition_ck: Vec::new(),
        range_containment: Vec::new(),
        nondegenerate: 0.0,
        tolerance: CKT_TOL,
    };
    let mut sum = zeros(n, n);
    for (v, p) in fam.p.iter().enumerate() {
        report.idempotent = report.idempotent.max(max_abs_diff(&(p * p), p));
        report.hermitian = report.hermitian.max(hermitian_defect(p));
        for q in &fam.p[v + 1..] {
            report.orthogonality = report.orthogonality.max(max_abs(&(p * q)));
        }
        sum += p;
    }
    report.nondegenerate = max_abs_diff(&sum, &identity(n));
    for (f, s) in fam.s.iter().enumerate() {
        let value = max_abs_diff(&(s.adjoint() * s), &fam.p[g.source(f)]);
        report.condition_i.push(EdgeValue { edge: f, value });
        let value = max_abs(&((identity(n) - &fam.p[g.range(f)]) * s));
        report.range_containment.push(EdgeValue { edge: f, value });
    }
    for v in 0..g.vertices {
        let incoming = g.received_by(v);
        let mut defect = fam.p[v].clone();
        for &f in &incoming {
            defect -= &fam.s[f] * fam.s[f].adjoint();
        }
        let lambda_min = if n == 0 { 0.0 } else { linalg::hermitian_eig_min(&defect).expect("square") };
        report.condition_ckt.push(VertexValue { vertex: v, value: lambda_min });
        if !incoming.is_empty() {
            report.condition_ck.push(VertexValue { vertex: v, value: max_abs(&defect) });
        }
    }
    report
}

/// The representation `Φ(f) = S_f`, `Φ(f*) = S_f*`, `Φ(e_v) = P_v` of the
/// truncated free *-semigroupoid, as a fully aggregated map.
#[derive(Debug, Clone)]
pub struct InducedRepresentation {
    pub free: TruncatedFreeTable,
    pub map: CoherentMap,
    pub check: RepresentationCheck,
}

pub fn induce_representation(fam: &CktFamily, max_len: usize) -> Result<InducedRepresentation, CktError> {
    let report = validate_ckt(fam);
    if !report.passed() {
        return Err(CktError::ValidationFailed(describe_failure(&report)));
    }
    let free = free_star_semigroupoid(&fam.graph, max_len)?;
    let rep = free.extend(|f| fam.s[f].clone(), |v| fam.p[v].clone());
    let check = check_representation(&free.table, &rep);
    let map = CoherentMap::new(
        free.table.clone(),
        HilbertBundle::new(vec![fam.dim]),
        AggregationMap::full(fam.graph.vertices),
        rep,
    )?;
    Ok(InducedRepresentation { free, map, check })
}

fn describe_failure(r: &CktReport) -> String {
    if !r.projections_hold() {
        return "vertex operators are not mutually orthogonal projections".into();
    }
    if let Some(e) = r.worst_condition_i().filter(|e| e.value >= r.tolerance) {
        return format!("S*S = P fails at edge {} (residual {:e})", e.edge, e.value);
    }
    match r.worst_condition_ckt() {
        Some(v) => format!("P - sum SS* is not positive at vertex {} (minimal eigenvalue {:e})", v.vertex, v.value),
        None => "unknown".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedOrthogonality {
    /// `max ‖Φ(β)* Φ(α)‖_max` over star-free words with `r(α) ≠ r(β)`.
    pub residual: f64,
    pub pairs_checked: usize,
    /// Words carrying a starred letter, left out by design.
    pub skipped_starred: usize,
    pub tolerance: f64,
}

impl RestrictedOrthogonality {
    pub fn passed(&self) -> bool {
        self.residual < self.tolerance
    }
}

/// Orthogonality of ranges on the star-free part: words ending in different
/// vertices have orthogonal ranges.
pub fn check_restricted_orthogonality(induced: &InducedRepresentation) -> RestrictedOrthogonality {
    let free = &induced.free;
    let mut plain = Vec::new();
    let mut skipped_starred = 0;
    for (a, w) in free.words.iter().enumerate() {
        if w.letters.iter().any(|l| l.starred) {
            skipped_starred += 1;
        } else {
            plain.push((a, w.range));
        }
    }
    let mut residual = 0.0f64;
    let mut pairs_checked = 0;
    for (i, &(a, ra)) in plain.iter().enumerate() {
        for &(b, rb) in &plain[i + 1..] {
            if ra != rb {
                let m = induced.map.mats()[b].adjoint() * &induced.map.mats()[a];
                residual = residual.max(max_abs(&m));
                pairs_checked += 1;
            }
        }
    }
    RestrictedOrthogonality { residual, pairs_checked, skipped_starred, tolerance: CKT_TOL }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_matrix;

    fn two_vertex_family(scale: f64) -> CktFamily {
        let g = DirectedGraph::new(2, vec![(0, 1)]).unwrap();
        let pv = real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let pw = real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let s = real_matrix(2, 2, &[0.0, 0.0, scale, 0.0]);
        CktFamily::new(g, 2, vec![pv, pw], vec![s]).unwrap()
    }

    #[test]
    fn two_vertex_family_passes_everything() {
        let r = validate_ckt(&two_vertex_family(1.0));
        assert!(r.passed());
        assert!(r.condition_ck_holds() && r.is_nondegenerate());
        assert_eq!(r.condition_ck.len(), 1);
        assert_eq!(r.condition_ck[0].vertex, 1);
        assert!(r.range_containment.iter().all(|e| e.value == 0.0));
    }

    #[test]
    fn scaled_edge_fails_condition_i() {
        let r = validate_ckt(&two_vertex_family(1.001));
        assert!(!r.condition_i_holds());
        let v = r.worst_condition_i().unwrap().value;
        assert!((1.9e-3..=2.1e-3).contains(&v), "{v}");
    }

    #[test]
    fn two_unitary_loops_fail_ckt() {
        let g = DirectedGraph::new(1, vec![(0, 0), (0, 0)]).unwrap();
        let u = real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let fam = CktFamily::new(g, 2, vec![identity(2)], vec![identity(2), u]).unwrap();
        let r = validate_ckt(&fam);
        assert!(r.condition_i_holds());
        assert!(!r.condition_ckt_holds());
        assert!((r.worst_condition_ckt().unwrap().value + 1.0).abs() < 1e-9);
        assert!(matches!(induce_representation(&fam, 2), Err(CktError::ValidationFailed(_))));
    }

    #[test]
    fn induced_representation_products() {
        let fam = two_vertex_family(1.0);
        let ind = induce_representation(&fam, 2).unwrap();
        assert!(ind.check.multiplicativity < 1e-12 && ind.check.adjoint < 1e-12);
        let free = &ind.free;
        use crate::free::Letter;
        let ff_star = free.element_of_letters(&[Letter::plain(0), Letter::star(0)]).unwrap();
        let f_star_f = free.element_of_letters(&[Letter::star(0), Letter::plain(0)]).unwrap();
        assert_eq!(ind.map.mat(f_star_f), &fam.p[0]);
        assert_eq!(ind.map.mat(ff_star), &real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        let f = free.element_of_letters(&[Letter::plain(0)]).unwrap();
        let ew = free.unit_of(1).unwrap();
        assert_eq!(&(ind.map.mat(ew) * ind.map.mat(f)), ind.map.mat(f));
        // Length-3 words are not part of a table truncated at 2.
        assert!(free.element_of_letters(&[Letter::plain(0), Letter::star(0), Letter::plain(0)]).is_none());
        assert_eq!(ind.map.mats().len(), free.table.n_elements());

        let orth = check_restricted_orthogonality(&ind);
        assert!(orth.passed());
        assert!(orth.skipped_starred > 0);
    }

    #[test]
    fn edges_into_distinct_vertices_are_orthogonal() {
        // u -> v and u -> w on C^3 = span(e_u, e_v, e_w).
        let g = DirectedGraph::new(3, vec![(0, 1), (0, 2)]).unwrap();
        let p: Vec<CMatrix> = (0..3).map(|i| CMatrix::from_fn(3, 3, |r, c| if r == i && c == i { 1.0.into() } else { 0.0.into() })).collect();
        let unit = |to: usize| CMatrix::from_fn(3, 3, |r, c| if r == to && c == 0 { 1.0.into() } else { 0.0.into() });
        // S_f* S_f = P_u for both edges; P_u - 0 keeps (CKT) at u.
        let fam = CktFamily::new(g, 3, p, vec![unit(1), unit(2)]).unwrap();
        let ind = induce_representation(&fam, 2).unwrap();
        let orth = check_restricted_orthogonality(&ind);
        assert_eq!(orth.residual, 0.0);
    }
}
