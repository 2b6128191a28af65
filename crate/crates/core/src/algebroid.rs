//! Linearisation: formal linear combinations over a *-semigroupoid, their
//! matrix amplifications, complete-positivity sampling, the `sqrt(1 − a*a)`
//! series and cyclic representations of positive forms.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dilation::{dilate, verify_dilation, Dilation, DilationError, VerificationReport};
use crate::linalg::{self, c, hermitian_eig_min, identity, max_abs, op_norm, zeros, CMatrix, HERM_TOL};
use crate::psd::{AggregationMap, CoherentMap, HilbertBundle, MapError};
use crate::table::{ElementId, ObjectId, SemigroupoidTable};

/// Positivity slack for sampled amplifications, relative to `max(1, ‖M‖_max)`.
pub const CP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebroidError {
    #[error("element {element} does not lie in the fibre from {source_object} to {target}")]
    OutOfFiber { element: ElementId, source_object: ObjectId, target: ObjectId },
    #[error("cannot combine fibre ({0}, {1}) with fibre ({2}, {3})")]
    MixedFiber(ObjectId, ObjectId, ObjectId, ObjectId),
    #[error("product {left}·{right} is missing from the table")]
    MissingProduct { left: ElementId, right: ElementId },
    #[error("entry ({row}, {col}) lies in the wrong fibre")]
    EntryFiber { row: usize, col: usize },
    #[error("amplified sizes differ: {0} and {1}")]
    Size(usize, usize),
    #[error("operator norm {norm} is not below 1")]
    NotStrictContraction { norm: f64 },
    #[error("form is not Hermitian at element {element}")]
    NotHermitianForm { element: ElementId },
    #[error("{found} values for {expected} elements")]
    FormLength { expected: usize, found: usize },
    #[error("table has no involution")]
    MissingStar,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Dilation(#[from] DilationError),
}

/// A finite combination `Σ c_γ γ` of elements `γ` with `d(γ) = source`,
/// `c(γ) = target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormalElement {
    pub source: ObjectId,
    pub target: ObjectId,
    pub coeffs: Vec<(ElementId, Complex64)>,
}

impl FormalElement {
    pub fn new(
        table: &SemigroupoidTable,
        source: ObjectId,
        target: ObjectId,
        coeffs: Vec<(ElementId, Complex64)>,
    ) -> Result<Self, AlgebroidError> {
        for &(a, _) in &coeffs {
            if a.0 >= table.n_elements() || table.src(a) != source || table.tgt(a) != target {
                return Err(AlgebroidError::OutOfFiber { element: a, source_object: source, target });
            }
        }
        Ok(Self { source, target, coeffs })
    }

    pub fn zero(source: ObjectId, target: ObjectId) -> Self {
        Self { source, target, coeffs: Vec::new() }
    }

    pub fn single(table: &SemigroupoidTable, a: ElementId) -> Self {
        Self { source: table.src(a), target: table.tgt(a), coeffs: vec![(a, c(1.0, 0.0))] }
    }

    pub fn add(&self, other: &Self) -> Result<Self, AlgebroidError> {
        if (self.source, self.target) != (other.source, other.target) {
            return Err(AlgebroidError::MixedFiber(self.source, self.target, other.source, other.target));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.extend_from_slice(&other.coeffs);
        Ok(Self { coeffs, ..self.clone() }.collapsed())
    }

    pub fn scale(&self, z: Complex64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|&(a, w)| (a, w * z)).collect(), ..self.clone() }
    }

    pub fn star(&self, table: &SemigroupoidTable) -> Result<Self, AlgebroidError> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|&(a, w)| table.star(a).map(|s| (s, w.conj())).ok_or(AlgebroidError::MissingStar))
            .collect::<Result<_, _>>()?;
        Ok(Self { source: self.target, target: self.source, coeffs })
    }

    /// `self · other`, defined when `other` ends where `self` starts.
    pub fn mul(&self, table: &SemigroupoidTable, other: &Self) -> Result<Self, AlgebroidError> {
        if self.source != other.target {
            return Err(AlgebroidError::MixedFiber(self.source, self.target, other.source, other.target));
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() * other.coeffs.len());
        for &(a, x) in &self.coeffs {
            for &(b, y) in &other.coeffs {
                let p = table.mul(a, b).ok_or(AlgebroidError::MissingProduct { left: a, right: b })?;
                coeffs.push((p, x * y));
            }
        }
        Ok(Self { source: other.source, target: self.target, coeffs }.collapsed())
    }

    /// Merges repeated elements; order of first appearance is kept.
    fn collapsed(mut self) -> Self {
        let mut out: Vec<(ElementId, Complex64)> = Vec::with_capacity(self.coeffs.len());
        for (a, w) in self.coeffs.drain(..) {
            match out.iter_mut().find(|(b, _)| *b == a) {
                Some((_, v)) => *v += w,
                None => out.push((a, w)),
            }
        }
        self.coeffs = out;
        self
    }
}

/// `Σ c_γ T(γ)`.
pub fn linear_extend(map: &CoherentMap, x: &FormalElement) -> CMatrix {
    let rows = map.object_dim(x.target);
    let cols = map.object_dim(x.source);
    let mut out = zeros(rows, cols);
    for &(a, w) in &x.coeffs {
        out += map.mat(a).map(|z| z * w);
    }
    out
}

/// An `n × n` matrix over the algebroid; entry `(i, j)` runs from
/// `sources[j]` to `targets[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifiedElement {
    pub sources: Vec<ObjectId>,
    pub targets: Vec<ObjectId>,
    pub entries: Vec<Vec<FormalElement>>,
}

impl AmplifiedElement {
    pub fn new(sources: Vec<ObjectId>, targets: Vec<ObjectId>, entries: Vec<Vec<FormalElement>>) -> Result<Self, AlgebroidError> {
        let n = sources.len();
        if targets.len() != n {
            return Err(AlgebroidError::Size(n, targets.len()));
        }
        if entries.len() != n {
            return Err(AlgebroidError::Size(n, entries.len()));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(AlgebroidError::Size(n, row.len()));
            }
            for (j, e) in row.iter().enumerate() {
                if e.source != sources[j] || e.target != targets[i] {
                    return Err(AlgebroidError::EntryFiber { row: i, col: j });
                }
            }
        }
        Ok(Self { sources, targets, entries })
    }

    pub fn n(&self) -> usize {
        self.sources.len()
    }

    pub fn diagonal(table: &SemigroupoidTable, elements: &[ElementId]) -> Result<Self, AlgebroidError> {
        let sources: Vec<ObjectId> = elements.iter().map(|&a| table.src(a)).collect();
        let targets: Vec<ObjectId> = elements.iter().map(|&a| table.tgt(a)).collect();
        let entries = (0..elements.len())
            .map(|i| {
                (0..elements.len())
                    .map(|j| if i == j { FormalElement::single(table, elements[i]) } else { FormalElement::zero(sources[j], targets[i]) })
                    .collect()
            })
            .collect();
        Self::new(sources, targets, entries)
    }

    /// Transpose with every entry starred.
    pub fn star(&self, table: &SemigroupoidTable) -> Result<Self, AlgebroidError> {
        let n = self.n();
        let entries = (0..n)
            .map(|i| (0..n).map(|j| self.entries[j][i].star(table)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.targets.clone(), self.sources.clone(), entries)
    }

    pub fn mul(&self, table: &SemigroupoidTable, other: &Self) -> Result<Self, AlgebroidError> {
        let n = self.n();
        if other.n() != n {
            return Err(AlgebroidError::Size(n, other.n()));
        }
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for k in 0..n {
                let mut acc = FormalElement::zero(other.sources[k], self.targets[i]);
                for j in 0..n {
                    acc = acc.add(&self.entries[i][j].mul(table, &other.entries[j][k])?)?;
                }
                row.push(acc);
            }
            entries.push(row);
        }
        Self::new(other.sources.clone(), self.targets.clone(), entries)
    }
}

/// `T^{(n)}(A) = [T(a_ij)]` as one block matrix.
pub fn amplify_map(map: &CoherentMap, a: &AmplifiedElement) -> CMatrix {
    let row_dims: Vec<usize> = a.targets.iter().map(|&t| map.object_dim(t)).collect();
    let col_dims: Vec<usize> = a.sources.iter().map(|&s| map.object_dim(s)).collect();
    let mut out = zeros(row_dims.iter().sum(), col_dims.iter().sum());
    let mut r0 = 0;
    for (i, row) in a.entries.iter().enumerate() {
        let mut c0 = 0;
        for (j, e) in row.iter().enumerate() {
            out.view_mut((r0, c0), (row_dims[i], col_dims[j])).copy_from(&linear_extend(map, e));
            c0 += col_dims[j];
        }
        r0 += row_dims[i];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpWitness {
    pub n: usize,
    pub trial: usize,
    pub lambda_min: f64,
    pub element: AmplifiedElement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpLevel {
    pub n: usize,
    pub worst_lambda_min: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpReport {
    pub seed: u64,
    pub trials: usize,
    pub levels: Vec<CpLevel>,
    /// Sample with the smallest `λ_min`; the first failing sample if any fails.
    pub witness: Option<CpWitness>,
    pub tolerance: f64,
}

impl CpReport {
    pub fn worst_lambda_min(&self) -> f64 {
        self.levels.iter().map(|l| l.worst_lambda_min).fold(f64::INFINITY, f64::min)
    }

    pub fn first_failing_n(&self) -> Option<usize> {
        self.levels.iter().find(|l| l.failures > 0).map(|l| l.n)
    }

    pub fn passed(&self) -> bool {
        self.first_failing_n().is_none()
    }
}

/// Deterministic per-sample stream: the seed picks the key, `(n, trial)` the
/// stream, so samples can be drawn in any order.
fn sample_rng(seed: u64, n: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | trial as u64);
    rng
}

/// Random `X` of size `n`; entries combine every element of their fibre,
/// limited on truncated tables to words of at most half the bound so that
/// `X*X` is defined.
pub fn random_amplified(table: &SemigroupoidTable, n: usize, rng: &mut impl Rng) -> AmplifiedElement {
    let max_len = table.truncation().map(|l| l / 2);
    let sources: Vec<ObjectId> = (0..n).map(|_| ObjectId(rng.random_range(0..table.n_objects()))).collect();
    let targets: Vec<ObjectId> = (0..n).map(|_| ObjectId(rng.random_range(0..table.n_objects()))).collect();
    let entries = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let coeffs = table
                        .with_target(targets[i])
                        .iter()
                        .filter(|&&a| table.src(a) == sources[j])
                        .filter(|&&a| match (max_len, table.length(a)) {
                            (Some(m), Some(l)) => l <= m,
                            _ => true,
                        })
                        .map(|&a| (a, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
                        .collect();
                    FormalElement { source: sources[j], target: targets[i], coeffs }
                })
                .collect()
        })
        .collect();
    AmplifiedElement { sources, targets, entries }
}

/// Samples `T^{(n)}(X*X)` for `n ≤ n_max` and `trials` random `X` per level.
/// A pass is evidence, not a proof.
pub fn sample_cp_check(map: &CoherentMap, n_max: usize, trials: usize, seed: u64) -> Result<CpReport, AlgebroidError> {
    let table = map.table();
    let mut levels = Vec::with_capacity(n_max);
    let mut witness: Option<CpWitness> = None;
    let mut witness_failed = false;
    for n in 1..=n_max {
        let samples = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = sample_rng(seed, n, trial);
                let x = random_amplified(table, n, &mut rng);
                let xx = x.star(table)?.mul(table, &x)?;
                let m = amplify_map(map, &xx);
                let lambda_min = if m.nrows() == 0 { 0.0 } else { hermitian_eig_min(&m).expect("square") };
                let failed = lambda_min < -CP_TOL * 1f64.max(max_abs(&m));
                Ok((trial, lambda_min, failed, x))
            })
            .collect::<Result<Vec<_>, AlgebroidError>>()?;
        let mut level = CpLevel { n, worst_lambda_min: f64::INFINITY, failures: 0 };
        for (trial, lambda_min, failed, x) in samples {
            level.worst_lambda_min = level.worst_lambda_min.min(lambda_min);
            if failed {
                level.failures += 1;
            }
            let replace = if witness_failed {
                false
            } else {
                failed || witness.as_ref().is_none_or(|w| lambda_min < w.lambda_min)
            };
            if replace {
                witness_failed = failed;
                witness = Some(CpWitness { n, trial, lambda_min, element: x });
            }
        }
        levels.push(level);
    }
    Ok(CpReport { seed, trials, levels, witness, tolerance: CP_TOL })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqrtSeries {
    pub b: CMatrix,
    /// Number of series terms after the identity.
    pub terms: usize,
    /// Geometric bound on the discarded tail.
    pub tail_bound: f64,
}

/// `b = I − Σ_{n≥1} c_n (a*a)^n` with `c_n = |binom(1/2, n)|`, truncated at
/// the first `n` whose tail bound `c_n ‖a*a‖ⁿ / (1 − ‖a*a‖)` drops below `tol`.
pub fn sqrt_one_minus(a: &CMatrix, tol: f64) -> Result<SqrtSeries, AlgebroidError> {
    let norm = op_norm(a);
    if norm >= 1.0 {
        return Err(AlgebroidError::NotStrictContraction { norm });
    }
    let n = a.ncols();
    let h = a.adjoint() * a;
    let q = norm * norm;
    let mut b = identity(n);
    let mut power = identity(n);
    let mut coeff = 0.5;
    let mut q_pow = 1.0;
    let mut terms = 0;
    let mut tail_bound = 1.0 / (1.0 - q);
    while tail_bound >= tol && q > 0.0 {
        terms += 1;
        power = &power * &h;
        q_pow *= q;
        b -= power.scale(coeff);
        tail_bound = coeff * q_pow / (1.0 - q);
        coeff *= (2.0 * terms as f64 - 1.0) / (2.0 * terms as f64 + 2.0);
    }
    if q == 0.0 {
        tail_bound = 0.0;
    }
    Ok(SqrtSeries { b, terms, tail_bound })
}

/// `ω: Γ → C`, seen as a scalar fully aggregated map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveForm {
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct FormRepresentation {
    pub map: CoherentMap,
    pub dilation: Dilation,
    /// `ξ_s = V(s)·1`.
    pub xi: Vec<CMatrix>,
    /// `max_a |ω(a) − ⟨Φ(a)ξ_{d(a)}, ξ_{c(a)}⟩|`.
    pub representation: f64,
    pub verification: VerificationReport,
}

impl FormRepresentation {
    pub fn cyclic(&self) -> bool {
        self.verification.is_minimal()
    }

    pub fn passed(&self) -> bool {
        self.representation < self.verification.tolerance && self.verification.passed()
    }
}

pub fn positive_form_rep(form: &PositiveForm, table: &SemigroupoidTable) -> Result<FormRepresentation, AlgebroidError> {
    if form.values.len() != table.n_elements() {
        return Err(AlgebroidError::FormLength { expected: table.n_elements(), found: form.values.len() });
    }
    let star = table.star_map().ok_or(AlgebroidError::MissingStar)?;
    for a in table.elements() {
        let scale = 1f64.max(form.values[a.0].norm());
        if (form.values[star[a.0].0] - form.values[a.0].conj()).norm() > HERM_TOL * scale {
            return Err(AlgebroidError::NotHermitianForm { element: a });
        }
    }
    let mats = form.values.iter().map(|&w| CMatrix::from_element(1, 1, w)).collect();
    let map = CoherentMap::new(table.clone(), HilbertBundle::new(vec![1]), AggregationMap::full(table.n_objects()), mats)?;
    let dilation = dilate(&map)?;
    let verification = verify_dilation(&map, &dilation)?;
    let xi: Vec<CMatrix> = dilation.v.clone();
    let representation = table
        .elements()
        .map(|a| {
            let inner = (xi[table.tgt(a).0].adjoint() * dilation.rep(a) * &xi[table.src(a).0])[(0, 0)];
            (form.values[a.0] - inner).norm()
        })
        .fold(0.0, f64::max);
    Ok(FormRepresentation { map, dilation, xi, representation, verification })
}

/// Eigendecomposition square root of a positive semidefinite matrix.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = linalg::hermitian_eig(m).expect("square");
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&l| c(l.max(0.0).sqrt(), 0.0)),
    ));
    &vectors * d * vectors.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, real_matrix};
    use crate::table::{monoid, pair_groupoid};

    fn z2(off: f64) -> CoherentMap {
        let table = monoid(&[vec![0, 1], vec![1, 0]], Some(0), Some(vec![0, 1])).unwrap();
        let mats = vec![real_matrix(1, 1, &[1.0]), real_matrix(1, 1, &[off])];
        CoherentMap::new(table, HilbertBundle::new(vec![1]), AggregationMap::full(1), mats).unwrap()
    }

    fn ones_on_pairs() -> CoherentMap {
        let mats = vec![real_matrix(1, 1, &[1.0]); 4];
        CoherentMap::new(pair_groupoid(2), HilbertBundle::new(vec![1]), AggregationMap::full(2), mats).unwrap()
    }

    #[test]
    fn linear_extension() {
        let t = z2(0.5);
        let g = FormalElement::single(t.table(), ElementId(1));
        assert_eq!(linear_extend(&t, &g), real_matrix(1, 1, &[0.5]));
        let avg = g.add(&g).unwrap().scale(c(0.5, 0.0));
        assert_eq!(linear_extend(&t, &avg), real_matrix(1, 1, &[0.5]));
        let e = FormalElement::single(t.table(), ElementId(0));
        let zero = e.add(&e.scale(c(-1.0, 0.0))).unwrap();
        assert_eq!(linear_extend(&t, &zero), real_matrix(1, 1, &[0.0]));

        let p = ones_on_pairs();
        let a = FormalElement::single(p.table(), ElementId(0));
        let b = FormalElement::single(p.table(), ElementId(1));
        assert!(matches!(a.add(&b), Err(AlgebroidError::MixedFiber(..))));
    }

    #[test]
    fn amplification() {
        let p = ones_on_pairs();
        let table = p.table();
        let diag = AmplifiedElement::diagonal(table, &[ElementId(0), ElementId(3)]).unwrap();
        assert_eq!(amplify_map(&p, &diag), identity(2));

        let single = AmplifiedElement::diagonal(table, &[ElementId(1)]).unwrap();
        assert_eq!(amplify_map(&p, &single), linear_extend(&p, &FormalElement::single(table, ElementId(1))));

        let mut rng = crate::random::seeded(1);
        let x = random_amplified(table, 2, &mut rng);
        let xx = x.star(table).unwrap().mul(table, &x).unwrap();
        let m = amplify_map(&p, &xx);
        assert!(hermitian_eig_min(&m).unwrap() > -1e-12);
    }

    #[test]
    fn cp_sampling() {
        let good = sample_cp_check(&z2(0.5), 3, 50, 42).unwrap();
        assert!(good.passed());
        let bad = sample_cp_check(&z2(2.0), 3, 50, 42).unwrap();
        assert_eq!(bad.first_failing_n(), Some(1));
        assert!(bad.witness.unwrap().lambda_min < 0.0);
        let zero = sample_cp_check(&z2(0.0).scaled(0.0), 2, 10, 42).unwrap();
        assert!(zero.passed());
        assert_eq!(sample_cp_check(&z2(0.5), 2, 20, 9).unwrap(), sample_cp_check(&z2(0.5), 2, 20, 9).unwrap());
    }

    #[test]
    fn square_root_series() {
        let zero = sqrt_one_minus(&zeros(2, 2), 1e-12).unwrap();
        assert_eq!(zero.b, identity(2));
        let half = sqrt_one_minus(&real_matrix(1, 1, &[0.5]), 1e-12).unwrap();
        let oracle = psd_sqrt(&real_matrix(1, 1, &[0.75]));
        assert!((half.b[(0, 0)].re - 0.866_025_403_784_438_6).abs() < 1e-9);
        assert!((half.b[(0, 0)] - oracle[(0, 0)]).norm() < 1e-9);
        assert!(matches!(sqrt_one_minus(&identity(1), 1e-12), Err(AlgebroidError::NotStrictContraction { .. })));

        let mut rng = crate::random::seeded(5);
        let a = crate::random::with_norm(&mut rng, 3, 3, 0.9);
        let s = sqrt_one_minus(&a, 1e-12).unwrap();
        let target = identity(3) - a.adjoint() * &a;
        assert!(max_abs_diff(&(&s.b * &s.b), &target) < 1e-8);
        assert!(max_abs_diff(&s.b, &psd_sqrt(&target)) < 1e-8);
    }

    #[test]
    fn form_representations() {
        let trivial = monoid(&[vec![0]], Some(0), Some(vec![0])).unwrap();
        let r = positive_form_rep(&PositiveForm { values: vec![c(1.0, 0.0)] }, &trivial).unwrap();
        assert_eq!(r.dilation.k_dims, vec![1]);
        assert!(r.passed());

        let ones = PositiveForm { values: vec![c(1.0, 0.0); 4] };
        let r = positive_form_rep(&ones, &pair_groupoid(2)).unwrap();
        assert!(r.passed() && r.cyclic());
        assert!(r.representation < 1e-12);
        // one rank-1 block per object, stacked orthogonally in K_0
        assert!(r.dilation.factors.iter().all(|f| f.rank() == 1));
        assert_eq!(r.dilation.k_dims, vec![2]);

        let bad = PositiveForm { values: vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)] };
        assert!(matches!(
            positive_form_rep(&bad, &pair_groupoid(2)),
            Err(AlgebroidError::Dilation(DilationError::NotPsd { .. }))
        ));
    }
}
