//! Finite *-semigroupoids stored as dense composition tables.
//!
//! Objects and elements are dense integer ids. The composition is a flat
//! `n x n` array with a sentinel for "undefined"; ids keep insertion order and
//! every matrix layout built downstream inherits that order.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub usize);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

const UNDEFINED: u32 = u32::MAX;

/// Structural problems: the data cannot even be read as a table.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange { what: &'static str, index: usize, bound: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("relation is not transitive: ({0},{1}) and ({1},{2}) compose to the missing pair ({0},{2})", .first.0, .first.1, .second.1)]
    NotTransitive { first: (usize, usize), second: (usize, usize) },
    #[error("monoid table must have one object and a total composition")]
    NotAMonoid,
    #[error("action axiom fails at x={point}, g={g}, h={h}: (x.g).h != x.(gh)")]
    ActionAxiom { point: usize, g: usize, h: usize },
    #[error("unit of the monoid does not act trivially on point {point}")]
    ActionUnit { point: usize },
    #[error("too many elements for a dense table: {0}")]
    TooLarge(usize),
}

/// A finite semigroupoid with optional involution and unit.
///
/// A table is immutable in shape (objects, `d`, `c`) once built; products,
/// involution and units can be edited, which is how invalid tables are
/// produced for [`SemigroupoidTable::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupoidTable {
    n_objects: usize,
    src: Vec<ObjectId>,
    tgt: Vec<ObjectId>,
    mul: Vec<u32>,
    star: Option<Vec<ElementId>>,
    units: Option<Vec<ElementId>>,
    truncation: Option<usize>,
    lengths: Option<Vec<usize>>,
    by_target: Vec<Vec<ElementId>>,
    by_source: Vec<Vec<ElementId>>,
}

impl SemigroupoidTable {
    /// Creates a table with the given domain (`src`) and codomain (`tgt`)
    /// maps and no products.
    pub fn new(n_objects: usize, src: Vec<usize>, tgt: Vec<usize>) -> Result<Self, TableError> {
        if src.len() != tgt.len() {
            return Err(TableError::LengthMismatch {
                what: "codomain map",
                expected: src.len(),
                found: tgt.len(),
            });
        }
        let n = src.len();
        if n >= UNDEFINED as usize || n.checked_mul(n).is_none_or(|sq| sq > 1 << 31) {
            return Err(TableError::TooLarge(n));
        }
        for &s in src.iter().chain(tgt.iter()) {
            check_index("object", s, n_objects)?;
        }
        let mut by_target = vec![Vec::new(); n_objects];
        let mut by_source = vec![Vec::new(); n_objects];
        for a in 0..n {
            by_target[tgt[a]].push(ElementId(a));
            by_source[src[a]].push(ElementId(a));
        }
        Ok(Self {
            n_objects,
            src: src.into_iter().map(ObjectId).collect(),
            tgt: tgt.into_iter().map(ObjectId).collect(),
            mul: vec![UNDEFINED; n * n],
            star: None,
            units: None,
            truncation: None,
            lengths: None,
            by_target,
            by_source,
        })
    }

    /// Sets (or clears, with `None`) the product `a·b`. Only indices are checked.
    pub fn set_product(
        &mut self,
        a: ElementId,
        b: ElementId,
        ab: Option<ElementId>,
    ) -> Result<(), TableError> {
        let n = self.n_elements();
        check_index("element", a.0, n)?;
        check_index("element", b.0, n)?;
        if let Some(p) = ab {
            check_index("element", p.0, n)?;
        }
        self.mul[a.0 * n + b.0] = ab.map_or(UNDEFINED, |p| p.0 as u32);
        Ok(())
    }

    pub fn with_star(mut self, star: Vec<usize>) -> Result<Self, TableError> {
        self.set_star(star)?;
        Ok(self)
    }

    pub fn set_star(&mut self, star: Vec<usize>) -> Result<(), TableError> {
        let n = self.n_elements();
        if star.len() != n {
            return Err(TableError::LengthMismatch { what: "star", expected: n, found: star.len() });
        }
        for &b in &star {
            check_index("element", b, n)?;
        }
        self.star = Some(star.into_iter().map(ElementId).collect());
        Ok(())
    }

    /// Overwrites a single involution entry. Fails if no involution is present.
    pub fn set_star_of(&mut self, a: ElementId, b: ElementId) -> Result<(), TableError> {
        let n = self.n_elements();
        check_index("element", a.0, n)?;
        check_index("element", b.0, n)?;
        match self.star.as_mut() {
            Some(star) => {
                star[a.0] = b;
                Ok(())
            }
            None => Err(TableError::LengthMismatch { what: "star", expected: n, found: 0 }),
        }
    }

    pub fn with_units(mut self, units: Vec<usize>) -> Result<Self, TableError> {
        if units.len() != self.n_objects {
            return Err(TableError::LengthMismatch {
                what: "units",
                expected: self.n_objects,
                found: units.len(),
            });
        }
        for &e in &units {
            check_index("element", e, self.n_elements())?;
        }
        self.units = Some(units.into_iter().map(ElementId).collect());
        Ok(self)
    }

    /// Marks the table as a length truncation with bound `bound`: products whose
    /// result would exceed the bound are left undefined and are not violations.
    pub fn with_truncation(mut self, bound: usize, lengths: Vec<usize>) -> Result<Self, TableError> {
        if lengths.len() != self.n_elements() {
            return Err(TableError::LengthMismatch {
                what: "lengths",
                expected: self.n_elements(),
                found: lengths.len(),
            });
        }
        self.truncation = Some(bound);
        self.lengths = Some(lengths);
        Ok(self)
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    pub fn n_elements(&self) -> usize {
        self.src.len()
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = ElementId> + Clone {
        (0..self.n_elements()).map(ElementId)
    }

    pub fn objects(&self) -> impl ExactSizeIterator<Item = ObjectId> + Clone {
        (0..self.n_objects).map(ObjectId)
    }

    /// Domain `d(a)`.
    pub fn src(&self, a: ElementId) -> ObjectId {
        self.src[a.0]
    }

    /// Codomain `c(a)`.
    pub fn tgt(&self, a: ElementId) -> ObjectId {
        self.tgt[a.0]
    }

    pub fn composable(&self, a: ElementId, b: ElementId) -> bool {
        self.src[a.0] == self.tgt[b.0]
    }

    pub fn mul(&self, a: ElementId, b: ElementId) -> Option<ElementId> {
        let raw = self.mul[a.0 * self.n_elements() + b.0];
        (raw != UNDEFINED).then_some(ElementId(raw as usize))
    }

    pub fn has_star(&self) -> bool {
        self.star.is_some()
    }

    pub fn star(&self, a: ElementId) -> Option<ElementId> {
        self.star.as_ref().map(|s| s[a.0])
    }

    pub fn star_map(&self) -> Option<&[ElementId]> {
        self.star.as_deref()
    }

    pub fn has_units(&self) -> bool {
        self.units.is_some()
    }

    pub fn unit(&self, s: ObjectId) -> Option<ElementId> {
        self.units.as_ref().map(|u| u[s.0])
    }

    pub fn unit_map(&self) -> Option<&[ElementId]> {
        self.units.as_deref()
    }

    pub fn is_unit(&self, a: ElementId) -> bool {
        self.units.as_ref().is_some_and(|u| u[self.tgt[a.0].0] == a)
    }

    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    pub fn is_truncated(&self) -> bool {
        self.truncation.is_some()
    }

    pub fn length(&self, a: ElementId) -> Option<usize> {
        self.lengths.as_ref().map(|l| l[a.0])
    }

    pub fn lengths(&self) -> Option<&[usize]> {
        self.lengths.as_deref()
    }

    /// `Γ^s`: elements with codomain `s`, in canonical order.
    pub fn with_target(&self, s: ObjectId) -> &[ElementId] {
        &self.by_target[s.0]
    }

    /// `Γ_s`: elements with domain `s`, in canonical order.
    pub fn with_source(&self, s: ObjectId) -> &[ElementId] {
        &self.by_source[s.0]
    }

    /// Defined products as `(a, b, ab)` triples in row-major order.
    pub fn products(&self) -> impl Iterator<Item = (ElementId, ElementId, ElementId)> + '_ {
        let n = self.n_elements();
        self.mul.iter().enumerate().filter(|(_, &p)| p != UNDEFINED).map(move |(k, &p)| {
            (ElementId(k / n), ElementId(k % n), ElementId(p as usize))
        })
    }

    /// Relabels elements: element `a` of `self` becomes element `perm[a]`.
    pub fn permute_elements(&self, perm: &[usize]) -> Result<Self, TableError> {
        let n = self.n_elements();
        check_permutation(perm, n)?;
        let mut src = vec![0; n];
        let mut tgt = vec![0; n];
        for a in 0..n {
            src[perm[a]] = self.src[a].0;
            tgt[perm[a]] = self.tgt[a].0;
        }
        let mut out = Self::new(self.n_objects, src, tgt)?;
        for (a, b, ab) in self.products() {
            out.set_product(
                ElementId(perm[a.0]),
                ElementId(perm[b.0]),
                Some(ElementId(perm[ab.0])),
            )?;
        }
        if let Some(star) = &self.star {
            let mut s = vec![0; n];
            for a in 0..n {
                s[perm[a]] = perm[star[a].0];
            }
            out.set_star(s)?;
        }
        if let Some(units) = &self.units {
            out = out.with_units(units.iter().map(|e| perm[e.0]).collect())?;
        }
        if let (Some(bound), Some(lengths)) = (self.truncation, &self.lengths) {
            let mut l = vec![0; n];
            for a in 0..n {
                l[perm[a]] = lengths[a];
            }
            out = out.with_truncation(bound, l)?;
        }
        Ok(out)
    }

    pub fn fibers(&self, s: ObjectId) -> Fibers {
        let mut between: Vec<(ObjectId, Vec<ElementId>)> = Vec::new();
        for &a in self.with_source(s) {
            let t = self.tgt(a);
            match between.iter_mut().find(|(u, _)| *u == t) {
                Some((_, list)) => list.push(a),
                None => between.push((t, vec![a])),
            }
        }
        between.sort_by_key(|(t, _)| *t);
        Fibers {
            with_target: self.with_target(s).to_vec(),
            with_source: self.with_source(s).to_vec(),
            between,
        }
    }

    /// Objects with no incoming and no outgoing element.
    pub fn isolated_objects(&self) -> Vec<ObjectId> {
        self.objects()
            .filter(|s| self.by_target[s.0].is_empty() && self.by_source[s.0].is_empty())
            .collect()
    }
}

/// The three fibres attached to an object `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fibers {
    /// `Γ^s`, codomain `s`.
    pub with_target: Vec<ElementId>,
    /// `Γ_s`, domain `s`.
    pub with_source: Vec<ElementId>,
    /// `t ↦ Γ_s^t` (domain `s`, codomain `t`), sorted by `t`; empty fibres omitted.
    pub between: Vec<(ObjectId, Vec<ElementId>)>,
}

pub(crate) fn check_index(what: &'static str, index: usize, bound: usize) -> Result<(), TableError> {
    if index < bound {
        Ok(())
    } else {
        Err(TableError::IndexOutOfRange { what, index, bound })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<(), TableError> {
    if perm.len() != n {
        return Err(TableError::LengthMismatch { what: "permutation", expected: n, found: perm.len() });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        check_index("permutation entry", p, n)?;
        if std::mem::replace(&mut seen[p], true) {
            return Err(TableError::IndexOutOfRange { what: "repeated permutation entry", index: p, bound: n });
        }
    }
    Ok(())
}

/// The axiom a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axiom {
    /// Composition defined exactly on composable pairs, with `d(ab)=d(b)`, `c(ab)=c(a)`.
    SG3,
    /// Associativity.
    SG4,
    /// `d(a*) = c(a)`, `c(a*) = d(a)`.
    I1,
    /// `(ab)* = b*a*`.
    I2,
    /// `a** = a`.
    I3,
    /// `d(ε_s) = c(ε_s) = s`.
    U1,
    /// `ε_s α = α` for `c(α) = s`.
    U2,
    /// `α ε_s = α` for `d(α) = s`.
    U3,
    /// `ε_s* = ε_s`.
    UnitStar,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Axiom::SG3 => "SG3",
            Axiom::SG4 => "SG4",
            Axiom::I1 => "I1",
            Axiom::I2 => "I2",
            Axiom::I3 => "I3",
            Axiom::U1 => "U1",
            Axiom::U2 => "U2",
            Axiom::U3 => "U3",
            Axiom::UnitStar => "unit-star",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Object(ObjectId),
    Element(ElementId),
    Pair(ElementId, ElementId),
    Triple(ElementId, ElementId, ElementId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub axiom: Axiom,
    pub witness: Witness,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// True if the scan stopped after [`MAX_VIOLATIONS`] entries.
    pub capped: bool,
    /// Objects with empty fibres; permitted, reported for information.
    pub isolated_objects: Vec<ObjectId>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, axiom: Axiom) -> bool {
        self.violations.iter().any(|v| v.axiom == axiom)
    }
}

pub const MAX_VIOLATIONS: usize = 10_000;

struct Collector {
    report: ValidationReport,
}

impl Collector {
    fn push(&mut self, axiom: Axiom, witness: Witness, detail: String) -> bool {
        if self.report.violations.len() >= MAX_VIOLATIONS {
            self.report.capped = true;
            return false;
        }
        self.report.violations.push(Violation { axiom, witness, detail });
        true
    }
}

impl SemigroupoidTable {
    /// Exhaustive axiom scan.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Collector { report: ValidationReport::default() };
        self.scan_composition(&mut out);
        self.scan_associativity(&mut out);
        self.scan_star(&mut out);
        self.scan_units(&mut out);
        out.report.isolated_objects = self.isolated_objects();
        out.report
    }

    fn scan_composition(&self, out: &mut Collector) {
        for a in self.elements() {
            for b in self.elements() {
                let composable = self.composable(a, b);
                match self.mul(a, b) {
                    None if composable && !self.is_truncated() => {
                        if !out.push(Axiom::SG3, Witness::Pair(a, b), format!("{a}·{b} is composable but undefined")) {
                            return;
                        }
                    }
                    None => {}
                    Some(_) if !composable => {
                        if !out.push(Axiom::SG3, Witness::Pair(a, b), format!("{a}·{b} defined although d({a}) != c({b})")) {
                            return;
                        }
                    }
                    Some(ab) => {
                        if (self.src(ab) != self.src(b) || self.tgt(ab) != self.tgt(a))
                            && !out.push(
                                Axiom::SG3,
                                Witness::Pair(a, b),
                                format!("{a}·{b} = {ab} has wrong domain or codomain"),
                            )
                        {
                            return;
                        }
                    }
                }
            }
        }
    }

    fn scan_associativity(&self, out: &mut Collector) {
        for a in self.elements() {
            for &b in self.with_target(self.src(a)) {
                let Some(ab) = self.mul(a, b) else { continue };
                for &cc in self.with_target(self.src(b)) {
                    let Some(bc) = self.mul(b, cc) else { continue };
                    let left = self.mul(ab, cc);
                    let right = self.mul(a, bc);
                    if let (Some(l), Some(r)) = (left, right) {
                        if l != r
                            && !out.push(
                                Axiom::SG4,
                                Witness::Triple(a, b, cc),
                                format!("({a}{b}){cc} = {l} but {a}({b}{cc}) = {r}"),
                            )
                        {
                            return;
                        }
                    }
                }
            }
        }
    }

    fn scan_star(&self, out: &mut Collector) {
        let Some(star) = &self.star else { return };
        for a in self.elements() {
            let s = star[a.0];
            if (self.src(s) != self.tgt(a) || self.tgt(s) != self.src(a))
                && !out.push(Axiom::I1, Witness::Element(a), format!("{a}* = {s} has swapped endpoints wrong"))
            {
                return;
            }
            if star[s.0] != a && !out.push(Axiom::I3, Witness::Element(a), format!("{a}** = {} != {a}", star[s.0])) {
                return;
            }
        }
        for (a, b, ab) in self.products() {
            let expected = self.mul(star[b.0], star[a.0]);
            if expected.is_none() && self.is_truncated() {
                continue;
            }
            if expected != Some(star[ab.0])
                && !out.push(
                    Axiom::I2,
                    Witness::Pair(a, b),
                    format!("({a}{b})* = {} but {b}*{a}* = {expected:?}", star[ab.0]),
                )
            {
                return;
            }
        }
    }

    fn scan_units(&self, out: &mut Collector) {
        let Some(units) = &self.units else { return };
        for s in self.objects() {
            let e = units[s.0];
            if self.src(e) != s || self.tgt(e) != s {
                out.push(Axiom::U1, Witness::Object(s), format!("unit {e} of {s} is not a loop at {s}"));
                continue;
            }
            if let Some(star) = &self.star {
                if star[e.0] != e {
                    out.push(Axiom::UnitStar, Witness::Object(s), format!("unit {e} is not self-adjoint"));
                }
            }
            for &a in self.with_target(s) {
                if self.mul(e, a) != Some(a)
                    && !out.push(Axiom::U2, Witness::Pair(e, a), format!("{e}·{a} != {a}"))
                {
                    return;
                }
            }
            for &a in self.with_source(s) {
                if self.mul(a, e) != Some(a)
                    && !out.push(Axiom::U3, Witness::Pair(a, e), format!("{a}·{e} != {a}"))
                {
                    return;
                }
            }
        }
    }
}

/// Structural classification flags, all decided by exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassificationFlags {
    pub has_unit: bool,
    pub has_star: bool,
    /// `(d, c)` onto `S x S`.
    pub transitive: bool,
    /// `(d, c)` injective.
    pub principal: bool,
    /// Every element has a unique generalized inverse, and it is the involution.
    pub inverse_semigroupoid: bool,
    /// Unital, and `a a* = ε_{c(a)}`, `a* a = ε_{d(a)}` for every `a`.
    pub groupoid: bool,
    pub left_cancellative: bool,
}

impl SemigroupoidTable {
    pub fn classify(&self) -> ClassificationFlags {
        let pairs: Vec<(ObjectId, ObjectId)> = self.elements().map(|a| (self.src(a), self.tgt(a))).collect();
        let mut distinct = pairs.clone();
        distinct.sort();
        distinct.dedup();
        let principal = distinct.len() == pairs.len();
        let transitive = distinct.len() == self.n_objects * self.n_objects;

        let inverses: Option<Vec<ElementId>> =
            self.elements().map(|a| self.unique_generalized_inverse(a)).collect();
        let inverse_semigroupoid = match (&inverses, &self.star) {
            (Some(inv), Some(star)) => inv == star,
            _ => false,
        };
        let groupoid = match (&self.star, &self.units) {
            (Some(star), Some(units)) => self.elements().all(|a| {
                let s = star[a.0];
                self.mul(a, s) == Some(units[self.tgt(a).0]) && self.mul(s, a) == Some(units[self.src(a).0])
            }),
            _ => false,
        };
        ClassificationFlags {
            has_unit: self.has_units(),
            has_star: self.has_star(),
            transitive,
            principal,
            inverse_semigroupoid,
            groupoid,
            left_cancellative: self.is_left_cancellative(),
        }
    }

    /// The unique `a'` with `a a' a = a` and `a' a a' = a'`, if it exists.
    pub fn unique_generalized_inverse(&self, a: ElementId) -> Option<ElementId> {
        let mut found = None;
        for &cand in self.with_target(self.src(a)) {
            if self.src(cand) != self.tgt(a) {
                continue;
            }
            let aba = self.mul(a, cand).and_then(|x| self.mul(x, a));
            let bab = self.mul(cand, a).and_then(|x| self.mul(x, cand));
            if aba == Some(a) && bab == Some(cand) {
                if found.is_some() {
                    return None;
                }
                found = Some(cand);
            }
        }
        found
    }

    /// Condition `γβ = γβ' ⇒ β = β'` over all `γ` and `β, β' ∈ Γ^{d(γ)}`.
    pub fn is_left_cancellative(&self) -> bool {
        self.elements().all(|g| self.left_cancellative_at(g))
    }

    pub fn left_cancellative_at(&self, g: ElementId) -> bool {
        let mut seen: HashMap<ElementId, ElementId> = HashMap::new();
        self.with_target(self.src(g)).iter().all(|&b| match self.mul(g, b) {
            Some(p) => seen.insert(p, b).is_none(),
            None => true,
        })
    }

    /// Whether `a` has a two-sided inverse with respect to the units.
    pub fn is_invertible(&self, a: ElementId) -> bool {
        let Some(units) = &self.units else { return false };
        self.with_target(self.src(a)).iter().any(|&b| {
            self.src(b) == self.tgt(a)
                && self.mul(a, b) == Some(units[self.tgt(a).0])
                && self.mul(b, a) == Some(units[self.src(a).0])
        })
    }
}

/// Relation semigroupoid: elements are the pairs of `R`, `(s,t)·(t,v) = (s,v)`.
///
/// The pair `(s,t)` has codomain `s` and domain `t`. Units are attached iff
/// `R` is reflexive, the involution `(s,t)* = (t,s)` iff `R` is symmetric.
pub fn from_relation(n_points: usize, pairs: &[(usize, usize)]) -> Result<SemigroupoidTable, TableError> {
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut elems: Vec<(usize, usize)> = Vec::new();
    for &(s, t) in pairs {
        check_index("point", s, n_points)?;
        check_index("point", t, n_points)?;
        index.entry((s, t)).or_insert_with(|| {
            elems.push((s, t));
            elems.len() - 1
        });
    }
    for &(s, t) in &elems {
        for &(t2, v) in &elems {
            if t2 == t && !index.contains_key(&(s, v)) {
                return Err(TableError::NotTransitive { first: (s, t), second: (t, v) });
            }
        }
    }
    let src = elems.iter().map(|&(_, t)| t).collect();
    let tgt = elems.iter().map(|&(s, _)| s).collect();
    let mut table = SemigroupoidTable::new(n_points, src, tgt)?;
    for (a, &(s, t)) in elems.iter().enumerate() {
        for (b, &(t2, v)) in elems.iter().enumerate() {
            if t2 == t {
                table.set_product(ElementId(a), ElementId(b), Some(ElementId(index[&(s, v)])))?;
            }
        }
    }
    let symmetric = elems.iter().all(|&(s, t)| index.contains_key(&(t, s)));
    if symmetric {
        let star = elems.iter().map(|&(s, t)| index[&(t, s)]).collect();
        table = table.with_star(star)?;
    }
    let units: Option<Vec<usize>> = (0..n_points).map(|s| index.get(&(s, s)).copied()).collect();
    if let Some(units) = units {
        table = table.with_units(units)?;
    }
    Ok(table)
}

/// Pair groupoid on `n` points, elements ordered row-major `(s, t)`.
pub fn pair_groupoid(n: usize) -> SemigroupoidTable {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|s| (0..n).map(move |t| (s, t))).collect();
    from_relation(n, &pairs).expect("full relation is transitive")
}

/// Transformation semigroupoid of a right action `x·g` of a monoid on
/// `n_points` points.
///
/// `monoid` must have a single object and a total composition; `action[x][g]`
/// is `x·g`. Elements are the pairs `(x, g)` in x-major order with
/// `c(x,g) = x`, `d(x,g) = x·g` and `(x,g)(x·g,h) = (x,gh)`.
pub fn transformation_semigroupoid(
    monoid: &SemigroupoidTable,
    n_points: usize,
    action: &[Vec<usize>],
) -> Result<SemigroupoidTable, TableError> {
    let m = monoid.n_elements();
    if monoid.n_objects() != 1 || monoid.elements().any(|g| monoid.elements().any(|h| monoid.mul(g, h).is_none())) {
        return Err(TableError::NotAMonoid);
    }
    if action.len() != n_points {
        return Err(TableError::LengthMismatch { what: "action", expected: n_points, found: action.len() });
    }
    for row in action {
        if row.len() != m {
            return Err(TableError::LengthMismatch { what: "action row", expected: m, found: row.len() });
        }
        for &y in row {
            check_index("point", y, n_points)?;
        }
    }
    let gh = |g: usize, h: usize| monoid.mul(ElementId(g), ElementId(h)).expect("total").0;
    for (x, row) in action.iter().enumerate() {
        for g in 0..m {
            for h in 0..m {
                if action[row[g]][h] != row[gh(g, h)] {
                    return Err(TableError::ActionAxiom { point: x, g, h });
                }
            }
        }
    }
    let id = |x: usize, g: usize| x * m + g;
    let mut src = Vec::with_capacity(n_points * m);
    let mut tgt = Vec::with_capacity(n_points * m);
    for (x, row) in action.iter().enumerate() {
        for &y in row {
            src.push(y);
            tgt.push(x);
        }
    }
    let mut table = SemigroupoidTable::new(n_points, src, tgt)?;
    for x in 0..n_points {
        for g in 0..m {
            let y = action[x][g];
            for h in 0..m {
                table.set_product(ElementId(id(x, g)), ElementId(id(y, h)), Some(ElementId(id(x, gh(g, h)))))?;
            }
        }
    }
    if let Some(e) = monoid.unit(ObjectId(0)) {
        if let Some(x) = (0..n_points).find(|&x| action[x][e.0] != x) {
            return Err(TableError::ActionUnit { point: x });
        }
        table = table.with_units((0..n_points).map(|x| id(x, e.0)).collect())?;
    }
    if let Some(star) = monoid.star_map() {
        // (x,g)* = (x·g, g*) is an involution only when x·g·g* = x everywhere.
        let reversible = (0..n_points).all(|x| (0..m).all(|g| action[action[x][g]][star[g].0] == x));
        if reversible {
            let s = (0..n_points)
                .flat_map(|x| (0..m).map(move |g| (x, g)))
                .map(|(x, g)| id(action[x][g], star[g].0))
                .collect();
            table = table.with_star(s)?;
        }
    }
    Ok(table)
}

/// Single-object table from a full multiplication table `mul[g][h]`.
pub fn monoid(mul: &[Vec<usize>], unit: Option<usize>, star: Option<Vec<usize>>) -> Result<SemigroupoidTable, TableError> {
    let m = mul.len();
    let mut table = SemigroupoidTable::new(1, vec![0; m], vec![0; m])?;
    for (g, row) in mul.iter().enumerate() {
        if row.len() != m {
            return Err(TableError::LengthMismatch { what: "monoid row", expected: m, found: row.len() });
        }
        for (h, &p) in row.iter().enumerate() {
            table.set_product(ElementId(g), ElementId(h), Some(ElementId(p)))?;
        }
    }
    if let Some(e) = unit {
        table = table.with_units(vec![e])?;
    }
    if let Some(s) = star {
        table = table.with_star(s)?;
    }
    Ok(table)
}
