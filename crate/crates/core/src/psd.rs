//! Operator-valued Hermitian maps on a *-semigroupoid and their positivity.
//!
//! A [`CoherentMap`] assigns to each element `α` a matrix acting from
//! `H_{τ(d(α))}` to `H_{τ(c(α))}`. Positivity is decided fibre by fibre on
//! the block Gram matrices `[T(β*α)]_{β,α ∈ Γ^s}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, hermitian_defect, max_abs, max_abs_diff, CMatrix, HERM_TOL};
use crate::table::{check_permutation, ElementId, ObjectId, SemigroupoidTable, TableError};

/// Slack for the positivity verdict, relative to `max(1, ‖G‖_max)`.
pub const PSD_TOL: f64 = 1e-9;
/// Tolerance for the projection identities of a unital map.
pub const UNITAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertBundle {
    pub dims: Vec<usize>,
}

impl HilbertBundle {
    pub fn new(dims: Vec<usize>) -> Self {
        Self { dims }
    }

    pub fn n_points(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, x: usize) -> usize {
        self.dims[x]
    }
}

/// `τ: S → X`, stored per object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationMap {
    pub tau: Vec<usize>,
}

impl AggregationMap {
    pub fn new(tau: Vec<usize>) -> Self {
        Self { tau }
    }

    pub fn identity(n_objects: usize) -> Self {
        Self { tau: (0..n_objects).collect() }
    }

    /// Every object mapped to the single point `0`.
    pub fn full(n_objects: usize) -> Self {
        Self { tau: vec![0; n_objects] }
    }

    pub fn of(&self, s: ObjectId) -> usize {
        self.tau[s.0]
    }

    /// `τ^{-1}(x)` in object order.
    pub fn preimage(&self, x: usize) -> Vec<ObjectId> {
        (0..self.tau.len()).filter(|&s| self.tau[s] == x).map(ObjectId).collect()
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = self.tau.clone();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("the table has no involution")]
    MissingStar,
    #[error("the table has no unit")]
    MissingUnits,
    #[error("aggregation map has {found} entries for {expected} objects")]
    TauLength { expected: usize, found: usize },
    #[error("aggregation map sends object {object} to {point}, outside 0..{points}")]
    TauRange { object: usize, point: usize, points: usize },
    #[error("{found} matrices for {expected} elements")]
    MatsLength { expected: usize, found: usize },
    #[error("matrix of element {element} is {found:?}, expected {expected:?}")]
    Shape { element: ElementId, expected: (usize, usize), found: (usize, usize) },
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A Hermitian, `τ`-coherent map `T: Γ → matrices`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentMap {
    table: SemigroupoidTable,
    bundle: HilbertBundle,
    tau: AggregationMap,
    mats: Vec<CMatrix>,
}

impl CoherentMap {
    /// Checks the structural preconditions only (involution, unit, lengths);
    /// shapes and Hermitian symmetry are reported by [`CoherentMap::check_coherent`].
    pub fn new(
        table: SemigroupoidTable,
        bundle: HilbertBundle,
        tau: AggregationMap,
        mats: Vec<CMatrix>,
    ) -> Result<Self, MapError> {
        if !table.has_star() {
            return Err(MapError::MissingStar);
        }
        if !table.has_units() {
            return Err(MapError::MissingUnits);
        }
        if tau.tau.len() != table.n_objects() {
            return Err(MapError::TauLength { expected: table.n_objects(), found: tau.tau.len() });
        }
        if let Some((object, &point)) = tau.tau.iter().enumerate().find(|(_, &x)| x >= bundle.n_points()) {
            return Err(MapError::TauRange { object, point, points: bundle.n_points() });
        }
        if mats.len() != table.n_elements() {
            return Err(MapError::MatsLength { expected: table.n_elements(), found: mats.len() });
        }
        Ok(Self { table, bundle, tau, mats })
    }

    /// `T(α) = V_{c(α)}* Φ₀(α) V_{d(α)}` for a representation table `Φ₀` on a
    /// bundle `K` and operators `V_s: H_{τ(s)} → K_{τ(s)}`.
    pub fn pullback(
        table: SemigroupoidTable,
        bundle: HilbertBundle,
        tau: AggregationMap,
        rep: &[CMatrix],
        v: &[CMatrix],
    ) -> Result<Self, MapError> {
        let mats = table
            .elements()
            .map(|a| v[table.tgt(a).0].adjoint() * &rep[a.0] * &v[table.src(a).0])
            .collect();
        Self::new(table, bundle, tau, mats)
    }

    pub fn table(&self) -> &SemigroupoidTable {
        &self.table
    }

    pub fn bundle(&self) -> &HilbertBundle {
        &self.bundle
    }

    pub fn tau(&self) -> &AggregationMap {
        &self.tau
    }

    pub fn mat(&self, a: ElementId) -> &CMatrix {
        &self.mats[a.0]
    }

    pub fn mats(&self) -> &[CMatrix] {
        &self.mats
    }

    /// `dim H_{τ(s)}`.
    pub fn object_dim(&self, s: ObjectId) -> usize {
        self.bundle.dim(self.tau.of(s))
    }

    /// Required shape of `T(α)`.
    pub fn expected_shape(&self, a: ElementId) -> (usize, usize) {
        (self.object_dim(self.table.tgt(a)), self.object_dim(self.table.src(a)))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.mats {
            *m = m.scale(factor);
        }
        out
    }

    /// Same map on the relabelled table (see [`SemigroupoidTable::permute_elements`]).
    pub fn permute_elements(&self, perm: &[usize]) -> Result<Self, MapError> {
        check_permutation(perm, self.table.n_elements())?;
        let table = self.table.permute_elements(perm)?;
        let mut mats = vec![CMatrix::zeros(0, 0); perm.len()];
        for (a, m) in self.mats.iter().enumerate() {
            mats[perm[a]] = m.clone();
        }
        Self::new(table, self.bundle.clone(), self.tau.clone(), mats)
    }

    pub fn with_mat(mut self, a: ElementId, m: CMatrix) -> Self {
        self.mats[a.0] = m;
        self
    }

    pub fn check_coherent(&self) -> CoherenceReport {
        let mut violations = Vec::new();
        for a in self.table.elements() {
            let expected = self.expected_shape(a);
            let found = self.mats[a.0].shape();
            if expected != found {
                violations.push(CoherenceViolation::Shape { element: a, expected, found });
            }
        }
        let star = self.table.star_map().expect("checked in new");
        for a in self.table.elements() {
            let s = star[a.0];
            let (m, ms) = (&self.mats[a.0], &self.mats[s.0]);
            if m.shape() != (ms.ncols(), ms.nrows()) {
                continue;
            }
            let deviation = max_abs_diff(ms, &m.adjoint());
            let scale = 1f64.max(max_abs(m)).max(max_abs(ms));
            if deviation > HERM_TOL * scale {
                violations.push(CoherenceViolation::Hermitian { element: a, deviation });
            }
        }
        CoherenceReport { violations }
    }

    fn require_shapes(&self) -> Result<(), MapError> {
        for a in self.table.elements() {
            let expected = self.expected_shape(a);
            let found = self.mats[a.0].shape();
            if expected != found {
                return Err(MapError::Shape { element: a, expected, found });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoherenceViolation {
    /// Shape rule `T(α): H_{τ(d(α))} → H_{τ(c(α))}`.
    Shape { element: ElementId, expected: (usize, usize), found: (usize, usize) },
    /// `T(α*) ≠ T(α)*`.
    Hermitian { element: ElementId, deviation: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub violations: Vec<CoherenceViolation>,
}

impl CoherenceReport {
    pub fn is_coherent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        self.violations
            .iter()
            .filter_map(|v| match v {
                CoherenceViolation::Hermitian { deviation, .. } => Some(*deviation),
                _ => None,
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsdError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("product {left}·{right} is missing from the table; fibre {fiber} is not checkable at this truncation")]
    MissingProduct { fiber: ObjectId, left: ElementId, right: ElementId },
    #[error("map is not Hermitian: max deviation {deviation:e}")]
    NotHermitian { deviation: f64 },
}

/// Block Gram matrix of one fibre.
#[derive(Debug, Clone)]
pub struct FiberGram {
    pub fiber: ObjectId,
    /// Elements indexing the blocks, in order.
    pub ordering: Vec<ElementId>,
    pub block_offsets: Vec<usize>,
    pub block_dims: Vec<usize>,
    pub gram: CMatrix,
    pub lambda_min: f64,
}

impl FiberGram {
    pub fn dimension(&self) -> usize {
        self.gram.nrows()
    }

    /// Positivity threshold `-PSD_TOL · max(1, ‖G‖_max)`.
    pub fn threshold(&self) -> f64 {
        -PSD_TOL * 1f64.max(max_abs(&self.gram))
    }

    pub fn is_psd(&self) -> bool {
        self.lambda_min >= self.threshold()
    }
}

/// Gram matrix over the whole fibre `Γ^s`.
pub fn fiber_gram(map: &CoherentMap, s: ObjectId) -> Result<FiberGram, PsdError> {
    fiber_gram_over(map, s, map.table.with_target(s))
}

/// Gram matrix over the elements of `Γ^s` of length at most `max_len`
/// (all of `Γ^s` when the table carries no lengths).
pub fn fiber_gram_window(map: &CoherentMap, s: ObjectId, max_len: usize) -> Result<FiberGram, PsdError> {
    fiber_gram_over(map, s, &window(map.table(), s, max_len))
}

pub(crate) fn window(table: &SemigroupoidTable, s: ObjectId, max_len: usize) -> Vec<ElementId> {
    table
        .with_target(s)
        .iter()
        .copied()
        .filter(|&a| table.length(a).is_none_or(|l| l <= max_len))
        .collect()
}

/// Gram matrix `[T(β*α)]` over an explicit ordered subset of `Γ^s`.
pub fn fiber_gram_over(map: &CoherentMap, s: ObjectId, ordering: &[ElementId]) -> Result<FiberGram, PsdError> {
    map.require_shapes()?;
    let gram = gram_over(map, s, ordering)?;
    let lambda_min = if gram.gram.nrows() == 0 { 0.0 } else { linalg::hermitian_eig_min(&gram.gram).expect("square") };
    Ok(FiberGram { lambda_min, ..gram })
}

pub(crate) fn gram_over(map: &CoherentMap, s: ObjectId, ordering: &[ElementId]) -> Result<FiberGram, PsdError> {
    let table = &map.table;
    let block_dims: Vec<usize> = ordering.iter().map(|&a| map.object_dim(table.src(a))).collect();
    let mut block_offsets = Vec::with_capacity(ordering.len());
    let mut total = 0;
    for &d in &block_dims {
        block_offsets.push(total);
        total += d;
    }
    let mut gram = CMatrix::zeros(total, total);
    for (i, &beta) in ordering.iter().enumerate() {
        let beta_star = table.star(beta).expect("checked in new");
        for (j, &alpha) in ordering.iter().enumerate() {
            let p = table
                .mul(beta_star, alpha)
                .ok_or(PsdError::MissingProduct { fiber: s, left: beta_star, right: alpha })?;
            gram.view_mut((block_offsets[i], block_offsets[j]), (block_dims[i], block_dims[j]))
                .copy_from(&map.mats[p.0]);
        }
    }
    Ok(FiberGram { fiber: s, ordering: ordering.to_vec(), block_offsets, block_dims, gram, lambda_min: f64::NAN })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FiberStatus {
    Checked { lambda_min: f64, threshold: f64, dimension: usize },
    NotCheckable { left: ElementId, right: ElementId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberCheck {
    pub fiber: ObjectId,
    #[serde(flatten)]
    pub status: FiberStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PsdVerdict {
    Pass,
    Fail { fiber: ObjectId, lambda_min: f64 },
    NotCheckable { fiber: ObjectId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub fibers: Vec<FiberCheck>,
    /// Window length used for truncated tables, `None` for whole fibres.
    pub window: Option<usize>,
    pub tolerance: f64,
}

impl PsdReport {
    /// Fails on the fibre with the smallest `λ_min` below its threshold; a
    /// fibre that could not be assembled makes the verdict inconclusive.
    pub fn verdict(&self) -> PsdVerdict {
        let mut worst: Option<(ObjectId, f64)> = None;
        for f in &self.fibers {
            match f.status {
                FiberStatus::NotCheckable { .. } => return PsdVerdict::NotCheckable { fiber: f.fiber },
                FiberStatus::Checked { lambda_min, threshold, .. } => {
                    if lambda_min < threshold && worst.is_none_or(|(_, w)| lambda_min < w) {
                        worst = Some((f.fiber, lambda_min));
                    }
                }
            }
        }
        match worst {
            Some((fiber, lambda_min)) => PsdVerdict::Fail { fiber, lambda_min },
            None => PsdVerdict::Pass,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict() == PsdVerdict::Pass
    }

    pub fn lambda_min(&self, s: ObjectId) -> Option<f64> {
        self.fibers.iter().find(|f| f.fiber == s).and_then(|f| match f.status {
            FiberStatus::Checked { lambda_min, .. } => Some(lambda_min),
            FiberStatus::NotCheckable { .. } => None,
        })
    }
}

/// Fibre-wise positivity over whole fibres `Γ^s`.
pub fn check_psd(map: &CoherentMap) -> Result<PsdReport, PsdError> {
    check_psd_scoped(map, None)
}

/// Fibre-wise positivity over words of length at most `max_len`; intended for
/// truncated free tables, where whole fibres need products past the bound.
pub fn check_psd_window(map: &CoherentMap, max_len: usize) -> Result<PsdReport, PsdError> {
    check_psd_scoped(map, Some(max_len))
}

fn check_psd_scoped(map: &CoherentMap, window_len: Option<usize>) -> Result<PsdReport, PsdError> {
    map.require_shapes()?;
    let coherence = map.check_coherent();
    if !coherence.is_coherent() {
        return Err(PsdError::NotHermitian { deviation: coherence.max_hermitian_deviation() });
    }
    let objects: Vec<ObjectId> = map.table.objects().collect();
    let fibers = objects
        .par_iter()
        .map(|&s| {
            let ordering = match window_len {
                Some(k) => window(&map.table, s, k),
                None => map.table.with_target(s).to_vec(),
            };
            let status = match fiber_gram_over(map, s, &ordering) {
                Ok(g) => FiberStatus::Checked { lambda_min: g.lambda_min, threshold: g.threshold(), dimension: g.dimension() },
                Err(PsdError::MissingProduct { left, right, .. }) => FiberStatus::NotCheckable { left, right },
                Err(e) => return Err(e),
            };
            Ok(FiberCheck { fiber: s, status })
        })
        .collect::<Result<Vec<_>, PsdError>>()?;
    Ok(PsdReport { fibers, window: window_len, tolerance: PSD_TOL })
}

/// Minimal constants `C(α) = ‖Φ(α)‖²` for every element, where `Φ` is the
/// representation of the minimal dilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub constants: Vec<BoundEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub element: ElementId,
    pub constant: f64,
    /// Always true at finite scale.
    pub finite: bool,
}

pub fn bound_constant(map: &CoherentMap, a: ElementId) -> Result<f64, crate::dilation::DilationError> {
    let d = crate::dilation::dilate(map)?;
    Ok(linalg::op_norm(d.rep(a)).powi(2))
}

pub fn bound_report(map: &CoherentMap) -> Result<BoundReport, crate::dilation::DilationError> {
    let d = crate::dilation::dilate(map)?;
    let constants = map
        .table
        .elements()
        .map(|a| BoundEntry { element: a, constant: linalg::op_norm(d.rep(a)).powi(2), finite: true })
        .collect();
    Ok(BoundReport { constants })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitalPoint {
    pub point: usize,
    /// `max_s ‖T(ε_s)² − T(ε_s)‖_max`.
    pub idempotent: f64,
    /// `max_s ‖T(ε_s) − T(ε_s)*‖_max`.
    pub hermitian: f64,
    /// `max_{s≠t} ‖T(ε_s)T(ε_t)‖_max`.
    pub orthogonality: f64,
    /// `‖Σ_s T(ε_s) − I‖_max`.
    pub sum_identity: f64,
}

impl UnitalPoint {
    pub fn worst(&self) -> f64 {
        self.idempotent.max(self.hermitian).max(self.orthogonality).max(self.sum_identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitalReport {
    pub points: Vec<UnitalPoint>,
    pub tolerance: f64,
}

impl UnitalReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.worst() < self.tolerance)
    }

    pub fn worst_point(&self) -> Option<&UnitalPoint> {
        self.points.iter().max_by(|a, b| a.worst().total_cmp(&b.worst()))
    }
}

/// Checks that `{T(ε_s) : τ(s) = x}` are mutually orthogonal projections
/// summing to `I_{H_x}` for every `x`.
pub fn check_unital(map: &CoherentMap) -> Result<UnitalReport, MapError> {
    map.require_shapes()?;
    let units = map.table.unit_map().ok_or(MapError::MissingUnits)?;
    let points = (0..map.bundle.n_points())
        .map(|x| {
            let n = map.bundle.dim(x);
            let projections: Vec<&CMatrix> = map.tau.preimage(x).iter().map(|s| &map.mats[units[s.0].0]).collect();
            let mut point = UnitalPoint { point: x, idempotent: 0.0, hermitian: 0.0, orthogonality: 0.0, sum_identity: 0.0 };
            let mut sum = CMatrix::zeros(n, n);
            for (i, p) in projections.iter().enumerate() {
                point.idempotent = point.idempotent.max(max_abs_diff(&(*p * *p), p));
                point.hermitian = point.hermitian.max(hermitian_defect(p));
                for q in &projections[i + 1..] {
                    point.orthogonality = point.orthogonality.max(max_abs(&(*p * *q)));
                }
                sum += *p;
            }
            point.sum_identity = max_abs_diff(&sum, &linalg::identity(n));
            point
        })
        .collect();
    Ok(UnitalReport { points, tolerance: UNITAL_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, real_matrix};
    use crate::table::{monoid, pair_groupoid};

    fn scalar(v: f64) -> CMatrix {
        real_matrix(1, 1, &[v])
    }

    /// Pair groupoid on two points, scalar, with `T((0,1)) = T((1,0)) = off`.
    fn pair_map(off: f64, tau: AggregationMap) -> CoherentMap {
        let table = pair_groupoid(2);
        let n_points = tau.tau.iter().max().unwrap() + 1;
        let mats = vec![scalar(1.0), scalar(off), scalar(off), scalar(1.0)];
        CoherentMap::new(table, HilbertBundle::new(vec![1; n_points]), tau, mats).unwrap()
    }

    #[test]
    fn coherence_checks() {
        let t = pair_map(1.0, AggregationMap::identity(2));
        assert!(t.check_coherent().is_coherent());

        let bad = t.clone().with_mat(ElementId(1), real_matrix(2, 1, &[1.0, 1.0]));
        let report = bad.check_coherent();
        assert!(report.violations.iter().any(|v| matches!(v,
            CoherenceViolation::Shape { element, expected: (1, 1), found: (2, 1) } if *element == ElementId(1))));

        let skew = t.with_mat(ElementId(1), scalar(1.001));
        let report = skew.check_coherent();
        assert!((report.max_hermitian_deviation() - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn gram_examples() {
        let t = pair_map(1.0, AggregationMap::identity(2));
        let g = fiber_gram(&t, ObjectId(0)).unwrap();
        assert_eq!(g.gram, real_matrix(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(g.lambda_min.abs() < 1e-14);

        let t = pair_map(2.0, AggregationMap::identity(2));
        let g = fiber_gram(&t, ObjectId(0)).unwrap();
        assert_eq!(g.gram, real_matrix(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!((g.lambda_min + 1.0).abs() < 1e-14);

        let trivial = monoid(&[vec![0]], Some(0), Some(vec![0])).unwrap();
        let t = CoherentMap::new(trivial, HilbertBundle::new(vec![1]), AggregationMap::full(1), vec![scalar(1.0)]).unwrap();
        let g = fiber_gram(&t, ObjectId(0)).unwrap();
        assert!((g.lambda_min - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psd_verdicts() {
        assert!(check_psd(&pair_map(1.0, AggregationMap::identity(2))).unwrap().passed());
        let report = check_psd(&pair_map(2.0, AggregationMap::identity(2))).unwrap();
        match report.verdict() {
            PsdVerdict::Fail { lambda_min, .. } => assert!((lambda_min + 1.0).abs() < 1e-12),
            v => panic!("unexpected {v:?}"),
        }
        let zero = pair_map(0.0, AggregationMap::identity(2)).scaled(0.0);
        let report = check_psd(&zero).unwrap();
        assert!(report.passed());
        assert!(report.fibers.iter().all(|f| matches!(f.status, FiberStatus::Checked { lambda_min, .. } if lambda_min == 0.0)));
    }

    #[test]
    fn non_hermitian_map_is_rejected() {
        let skew = pair_map(1.0, AggregationMap::identity(2)).with_mat(ElementId(1), scalar(1.5));
        assert!(matches!(check_psd(&skew), Err(PsdError::NotHermitian { .. })));
    }

    #[test]
    fn unital_examples() {
        let full = pair_map(1.0, AggregationMap::full(2));
        let report = check_unital(&full).unwrap();
        assert!(!report.passed());
        assert!((report.points[0].sum_identity - 1.0).abs() < 1e-14);

        assert!(check_unital(&pair_map(1.0, AggregationMap::identity(2))).unwrap().passed());

        let table = pair_groupoid(2);
        let p1 = real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p2 = real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let off = real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let mats = vec![p1, off.adjoint(), off, p2];
        let t = CoherentMap::new(table, HilbertBundle::new(vec![2]), AggregationMap::full(2), mats).unwrap();
        assert!(check_unital(&t).unwrap().passed());
    }

    #[test]
    fn window_on_truncated_free_table() {
        use crate::free::{free_star_semigroupoid, DirectedGraph};
        let g = DirectedGraph::new(1, vec![(0, 0)]).unwrap();
        let free = free_star_semigroupoid(&g, 2).unwrap();
        let n = free.table.n_elements();
        let mats = vec![CMatrix::from_element(1, 1, c(0.0, 0.0)); n];
        let t = CoherentMap::new(free.table, HilbertBundle::new(vec![1]), AggregationMap::full(1), mats).unwrap();
        let full = check_psd(&t).unwrap();
        assert!(matches!(full.verdict(), PsdVerdict::NotCheckable { .. }));
        assert!(check_psd_window(&t, 1).unwrap().passed());
    }
}
