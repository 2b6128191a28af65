//! JSON documents for tables, maps, dilations, families and algebroid elements.
//!
//! Complex numbers are always `[re, im]` pairs and matrices are row-major
//! lists of such pairs. Emitting a parsed document reproduces it byte for
//! byte: keys keep declaration order and product triples are sorted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebroid::{AmplifiedElement, FormalElement, PositiveForm};
use crate::ckt::CktFamily;
use crate::dilation::{Block, Dilation, FiberFactor};
use crate::free::{DirectedGraph, TruncatedFreeTable};
use crate::linalg::{c, CMatrix};
use crate::psd::{AggregationMap, CoherentMap, HilbertBundle};
use crate::table::{ElementId, ObjectId, SemigroupoidTable};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at {path} (line {line}, column {column}): {message}")]
    Schema { path: String, line: usize, column: usize, message: String },
    #[error("{path}: index {index} out of range (bound {bound})")]
    IndexRange { path: String, index: usize, bound: usize },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("conflicting products: {first:?} and {second:?}")]
    Conflict { first: [usize; 3], second: [usize; 3] },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Invalid { path: path.into(), message: message.into() }
}

fn range(path: impl Into<String>, index: usize, bound: usize) -> Result<(), ParseError> {
    if index >= bound {
        return Err(ParseError::IndexRange { path: path.into(), index, bound });
    }
    Ok(())
}

/// Parses JSON text into `T`, reporting the failing path for schema errors.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, ParseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    match serde_path_to_error::deserialize(de) {
        Ok(v) => Ok(v),
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() {
                Err(ParseError::Syntax { line: inner.line(), column: inner.column(), message: inner.to_string() })
            } else {
                Err(ParseError::Schema { path, line: inner.line(), column: inner.column(), message: inner.to_string() })
            }
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError::Io { path: path.to_owned(), message: e.to_string() })?;
    parse_json(&text)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents always serialise");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `[re, im]` pairs.
    pub entries: Vec<[f64; 2]>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }

    pub fn to_matrix(&self, path: &str) -> Result<CMatrix, ParseError> {
        if self.entries.len() != self.rows * self.cols {
            return Err(invalid(path, format!("{} entries for a {}x{} matrix", self.entries.len(), self.rows, self.cols)));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.entries[i * self.cols + j];
            c(re, im)
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementDoc {
    pub id: usize,
    pub d: usize,
    pub c: usize,
}

/// A finite *-semigroupoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdDocument {
    pub format: String,
    pub version: u32,
    pub objects: usize,
    pub elements: Vec<ElementDoc>,
    /// `[a, b, ab]`, sorted.
    pub mul: Vec<[usize; 3]>,
    /// `[a, a*]`; empty when there is no involution.
    #[serde(default)]
    pub star: Vec<[usize; 2]>,
    /// `[s, ε_s]`; empty when there are no units.
    #[serde(default)]
    pub units: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
}

pub const SGD_FORMAT: &str = "stardil-sgd";

impl SgdDocument {
    pub fn from_table(table: &SemigroupoidTable) -> Self {
        let elements = table
            .elements()
            .map(|a| ElementDoc { id: a.0, d: table.src(a).0, c: table.tgt(a).0 })
            .collect();
        let mut mul: Vec<[usize; 3]> = table.products().map(|(a, b, p)| [a.0, b.0, p.0]).collect();
        mul.sort_unstable();
        let star = table.star_map().map_or_else(Vec::new, |s| s.iter().enumerate().map(|(a, b)| [a, b.0]).collect());
        let units = table.unit_map().map_or_else(Vec::new, |u| u.iter().enumerate().map(|(s, e)| [s, e.0]).collect());
        Self {
            format: SGD_FORMAT.into(),
            version: FORMAT_VERSION,
            objects: table.n_objects(),
            elements,
            mul,
            star,
            units,
            truncation: table.truncation(),
            lengths: table.lengths().map(<[usize]>::to_vec),
            words: None,
        }
    }

    pub fn from_free(free: &TruncatedFreeTable) -> Self {
        let mut doc = Self::from_table(&free.table);
        doc.words = Some(free.words.iter().map(|w| w.to_string()).collect());
        doc
    }

    /// Canonical form: products sorted and deduplicated.
    pub fn canonical(mut self) -> Self {
        self.mul.sort_unstable();
        self.mul.dedup();
        self.star.sort_unstable();
        self.units.sort_unstable();
        self.elements.sort_by_key(|e| e.id);
        self
    }

    pub fn to_table(&self) -> Result<SemigroupoidTable, ParseError> {
        if self.format != SGD_FORMAT {
            return Err(invalid("format", format!("expected \"{SGD_FORMAT}\", found \"{}\"", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(invalid("version", format!("unsupported version {}", self.version)));
        }
        let n = self.elements.len();
        let mut src = vec![usize::MAX; n];
        let mut tgt = vec![usize::MAX; n];
        for (i, e) in self.elements.iter().enumerate() {
            range(format!("elements[{i}].id"), e.id, n)?;
            range(format!("elements[{i}].d"), e.d, self.objects)?;
            range(format!("elements[{i}].c"), e.c, self.objects)?;
            if src[e.id] != usize::MAX {
                return Err(invalid(format!("elements[{i}].id"), format!("duplicate id {}", e.id)));
            }
            src[e.id] = e.d;
            tgt[e.id] = e.c;
        }
        let mut table = SemigroupoidTable::new(self.objects, src, tgt).map_err(|e| invalid("elements", e.to_string()))?;
        let mut seen: BTreeMap<(usize, usize), [usize; 3]> = BTreeMap::new();
        for (i, t) in self.mul.iter().enumerate() {
            for (k, &x) in t.iter().enumerate() {
                range(format!("mul[{i}][{k}]"), x, n)?;
            }
            let [a, b, p] = *t;
            if let Some(prev) = seen.get(&(a, b)) {
                if prev[2] != p {
                    return Err(ParseError::Conflict { first: *prev, second: *t });
                }
                continue;
            }
            seen.insert((a, b), *t);
            table.set_product(ElementId(a), ElementId(b), Some(ElementId(p))).expect("indices checked");
        }
        if !self.star.is_empty() {
            let mut star = vec![usize::MAX; n];
            for (i, &[a, b]) in self.star.iter().enumerate() {
                range(format!("star[{i}][0]"), a, n)?;
                range(format!("star[{i}][1]"), b, n)?;
                if star[a] != usize::MAX && star[a] != b {
                    return Err(invalid(format!("star[{i}]"), format!("element {a} is given two adjoints")));
                }
                star[a] = b;
            }
            if let Some(a) = star.iter().position(|&b| b == usize::MAX) {
                return Err(invalid("star", format!("element {a} has no adjoint")));
            }
            table.set_star(star).expect("indices checked");
        }
        if !self.units.is_empty() {
            let mut units = vec![usize::MAX; self.objects];
            for (i, &[s, e]) in self.units.iter().enumerate() {
                range(format!("units[{i}][0]"), s, self.objects)?;
                range(format!("units[{i}][1]"), e, n)?;
                units[s] = e;
            }
            if let Some(s) = units.iter().position(|&e| e == usize::MAX) {
                return Err(invalid("units", format!("object {s} has no unit")));
            }
            table = table.with_units(units).expect("indices checked");
        }
        match (self.truncation, &self.lengths) {
            (Some(bound), Some(lengths)) => {
                table = table.with_truncation(bound, lengths.clone()).map_err(|e| invalid("lengths", e.to_string()))?;
            }
            (None, None) => {}
            _ => return Err(invalid("truncation", "truncation and lengths must be given together")),
        }
        Ok(table)
    }
}

/// Table given inline or as a path relative to the referring document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SgdRef {
    Path(String),
    Inline(Box<SgdDocument>),
}

impl SgdRef {
    pub fn load(&self, base: Option<&Path>) -> Result<SgdDocument, ParseError> {
        match self {
            SgdRef::Inline(doc) => Ok((**doc).clone()),
            SgdRef::Path(p) => {
                let path = match base.and_then(Path::parent) {
                    Some(dir) => dir.join(p),
                    None => PathBuf::from(p),
                };
                read_json(&path)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatEntryDoc {
    pub element_id: usize,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

/// A coherent map over a table. Elements without an entry in `mats` map to
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub format: String,
    pub version: u32,
    pub sgd: SgdRef,
    #[serde(rename = "X")]
    pub points: usize,
    /// `[s, x]`.
    pub tau: Vec<[usize; 2]>,
    /// `[x, dim]`.
    pub dims: Vec<[usize; 2]>,
    pub mats: Vec<MatEntryDoc>,
}

pub const MAP_FORMAT: &str = "stardil-map";

impl MapDocument {
    pub fn from_map(map: &CoherentMap) -> Self {
        let table = map.table();
        Self {
            format: MAP_FORMAT.into(),
            version: FORMAT_VERSION,
            sgd: SgdRef::Inline(Box::new(SgdDocument::from_table(table))),
            points: map.bundle().n_points(),
            tau: map.tau().tau.iter().enumerate().map(|(s, &x)| [s, x]).collect(),
            dims: map.bundle().dims.iter().enumerate().map(|(x, &d)| [x, d]).collect(),
            mats: table
                .elements()
                .map(|a| {
                    let m = MatrixDoc::from_matrix(map.mat(a));
                    MatEntryDoc { element_id: a.0, rows: m.rows, cols: m.cols, entries: m.entries }
                })
                .collect(),
        }
    }

    /// Builds the map; `base` resolves a table given by path.
    pub fn to_map(&self, base: Option<&Path>) -> Result<CoherentMap, ParseError> {
        if self.format != MAP_FORMAT {
            return Err(invalid("format", format!("expected \"{MAP_FORMAT}\", found \"{}\"", self.format)));
        }
        let table = self.sgd.load(base)?.to_table()?;
        let mut tau = vec![usize::MAX; table.n_objects()];
        for (i, &[s, x]) in self.tau.iter().enumerate() {
            range(format!("tau[{i}][0]"), s, table.n_objects())?;
            range(format!("tau[{i}][1]"), x, self.points)?;
            tau[s] = x;
        }
        if let Some(s) = tau.iter().position(|&x| x == usize::MAX) {
            return Err(invalid("tau", format!("object {s} is not aggregated")));
        }
        let mut dims = vec![usize::MAX; self.points];
        for (i, &[x, d]) in self.dims.iter().enumerate() {
            range(format!("dims[{i}][0]"), x, self.points)?;
            dims[x] = d;
        }
        if let Some(x) = dims.iter().position(|&d| d == usize::MAX) {
            return Err(invalid("dims", format!("point {x} has no dimension")));
        }
        let shape = |a: usize| (dims[tau[table.tgt(ElementId(a)).0]], dims[tau[table.src(ElementId(a)).0]]);
        let mut mats: Vec<CMatrix> = (0..table.n_elements()).map(|a| CMatrix::zeros(shape(a).0, shape(a).1)).collect();
        for (i, m) in self.mats.iter().enumerate() {
            let path = format!("mats[{i}]");
            range(format!("{path}.element_id"), m.element_id, table.n_elements())?;
            let matrix = MatrixDoc { rows: m.rows, cols: m.cols, entries: m.entries.clone() }.to_matrix(&path)?;
            let want = shape(m.element_id);
            if matrix.shape() != want {
                return Err(invalid(
                    path,
                    format!("element {} needs a {}x{} matrix, found {}x{}", m.element_id, want.0, want.1, m.rows, m.cols),
                ));
            }
            mats[m.element_id] = matrix;
        }
        CoherentMap::new(table, HilbertBundle::new(dims), AggregationMap::new(tau), mats).map_err(|e| invalid("sgd", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDoc {
    pub fiber: usize,
    pub basis: Vec<usize>,
    pub offsets: Vec<usize>,
    pub block_dims: Vec<usize>,
    pub q: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationDocument {
    pub format: String,
    pub version: u32,
    pub tau: Vec<usize>,
    pub k_dims: Vec<usize>,
    pub layout: Vec<Vec<Block>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    pub factors: Vec<FactorDoc>,
    pub rep: Vec<MatrixDoc>,
    pub v: Vec<MatrixDoc>,
}

pub const DILATION_FORMAT: &str = "stardil-dilation";

impl DilationDocument {
    pub fn from_dilation(d: &Dilation) -> Self {
        Self {
            format: DILATION_FORMAT.into(),
            version: FORMAT_VERSION,
            tau: d.tau.tau.clone(),
            k_dims: d.k_dims.clone(),
            layout: d.layout.clone(),
            window: d.window,
            factors: d
                .factors
                .iter()
                .map(|f| FactorDoc {
                    fiber: f.fiber.0,
                    basis: f.basis.iter().map(|b| b.0).collect(),
                    offsets: f.offsets.clone(),
                    block_dims: f.block_dims.clone(),
                    q: MatrixDoc::from_matrix(&f.q),
                })
                .collect(),
            rep: d.rep.iter().map(MatrixDoc::from_matrix).collect(),
            v: d.v.iter().map(MatrixDoc::from_matrix).collect(),
        }
    }

    pub fn to_dilation(&self) -> Result<Dilation, ParseError> {
        if self.format != DILATION_FORMAT {
            return Err(invalid("format", format!("expected \"{DILATION_FORMAT}\", found \"{}\"", self.format)));
        }
        let n_points = self.k_dims.len();
        if self.layout.len() != n_points {
            return Err(invalid("layout", format!("{} entries for {n_points} points", self.layout.len())));
        }
        for (i, &x) in self.tau.iter().enumerate() {
            range(format!("tau[{i}]"), x, n_points)?;
        }
        for (x, blocks) in self.layout.iter().enumerate() {
            for (i, b) in blocks.iter().enumerate() {
                range(format!("layout[{x}][{i}].object"), b.object.0, self.tau.len())?;
                if b.offset + b.dim > self.k_dims[x] {
                    return Err(invalid(format!("layout[{x}][{i}]"), "block exceeds the space"));
                }
            }
        }
        for s in 0..self.tau.len() {
            if !self.layout[self.tau[s]].iter().any(|b| b.object.0 == s) {
                return Err(invalid("layout", format!("object {s} has no block")));
            }
        }
        let factors = self
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Ok(FiberFactor {
                    fiber: ObjectId(f.fiber),
                    basis: f.basis.iter().map(|&b| ElementId(b)).collect(),
                    offsets: f.offsets.clone(),
                    block_dims: f.block_dims.clone(),
                    q: f.q.to_matrix(&format!("factors[{i}].q"))?,
                })
            })
            .collect::<Result<_, ParseError>>()?;
        let rep = self.rep.iter().enumerate().map(|(i, m)| m.to_matrix(&format!("rep[{i}]"))).collect::<Result<_, _>>()?;
        let v = self.v.iter().enumerate().map(|(i, m)| m.to_matrix(&format!("v[{i}]"))).collect::<Result<_, _>>()?;
        Ok(Dilation {
            tau: AggregationMap::new(self.tau.clone()),
            factors,
            layout: self.layout.clone(),
            k_dims: self.k_dims.clone(),
            rep,
            v,
            window: self.window,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub vertices: usize,
    /// `[source, range]`.
    pub edges: Vec<[usize; 2]>,
}

impl GraphDoc {
    pub fn from_graph(g: &DirectedGraph) -> Self {
        Self { vertices: g.vertices, edges: g.edges.iter().map(|&(s, r)| [s, r]).collect() }
    }

    pub fn to_graph(&self) -> Result<DirectedGraph, ParseError> {
        DirectedGraph::new(self.vertices, self.edges.iter().map(|&[s, r]| (s, r)).collect())
            .map_err(|e| invalid("edges", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDocument {
    pub format: String,
    pub version: u32,
    pub graph: GraphDoc,
    pub dim: usize,
    /// Indexed by vertex.
    pub p: Vec<MatrixDoc>,
    /// Indexed by edge.
    pub s: Vec<MatrixDoc>,
}

pub const FAMILY_FORMAT: &str = "stardil-ckt";

impl FamilyDocument {
    pub fn from_family(fam: &CktFamily) -> Self {
        Self {
            format: FAMILY_FORMAT.into(),
            version: FORMAT_VERSION,
            graph: GraphDoc::from_graph(&fam.graph),
            dim: fam.dim,
            p: fam.p.iter().map(MatrixDoc::from_matrix).collect(),
            s: fam.s.iter().map(MatrixDoc::from_matrix).collect(),
        }
    }

    pub fn to_family(&self) -> Result<CktFamily, ParseError> {
        if self.format != FAMILY_FORMAT {
            return Err(invalid("format", format!("expected \"{FAMILY_FORMAT}\", found \"{}\"", self.format)));
        }
        let graph = self.graph.to_graph()?;
        let p = self.p.iter().enumerate().map(|(i, m)| m.to_matrix(&format!("p[{i}]"))).collect::<Result<_, _>>()?;
        let s = self.s.iter().enumerate().map(|(i, m)| m.to_matrix(&format!("s[{i}]"))).collect::<Result<_, _>>()?;
        CktFamily::new(graph, self.dim, p, s).map_err(|e| invalid("family", e.to_string()))
    }
}

/// `{fiber: [source, target], terms: [[element_id, re, im]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormalDoc {
    pub fiber: [usize; 2],
    pub terms: Vec<(usize, f64, f64)>,
}

impl FormalDoc {
    pub fn from_formal(x: &FormalElement) -> Self {
        Self { fiber: [x.source.0, x.target.0], terms: x.coeffs.iter().map(|(a, z)| (a.0, z.re, z.im)).collect() }
    }

    pub fn to_formal(&self, table: &SemigroupoidTable, path: &str) -> Result<FormalElement, ParseError> {
        let [source, target] = self.fiber;
        range(format!("{path}.fiber[0]"), source, table.n_objects())?;
        range(format!("{path}.fiber[1]"), target, table.n_objects())?;
        for (i, t) in self.terms.iter().enumerate() {
            range(format!("{path}.terms[{i}]"), t.0, table.n_elements())?;
        }
        let coeffs = self.terms.iter().map(|&(a, re, im)| (ElementId(a), c(re, im))).collect();
        FormalElement::new(table, ObjectId(source), ObjectId(target), coeffs).map_err(|e| invalid(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifiedDoc {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub entries: Vec<Vec<FormalDoc>>,
}

impl AmplifiedDoc {
    pub fn from_amplified(a: &AmplifiedElement) -> Self {
        Self {
            sources: a.sources.iter().map(|s| s.0).collect(),
            targets: a.targets.iter().map(|s| s.0).collect(),
            entries: a.entries.iter().map(|row| row.iter().map(FormalDoc::from_formal).collect()).collect(),
        }
    }

    pub fn to_amplified(&self, table: &SemigroupoidTable) -> Result<AmplifiedElement, ParseError> {
        let entries = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, e)| e.to_formal(table, &format!("entries[{i}][{j}]"))).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        AmplifiedElement::new(
            self.sources.iter().map(|&s| ObjectId(s)).collect(),
            self.targets.iter().map(|&s| ObjectId(s)).collect(),
            entries,
        )
        .map_err(|e| invalid("entries", e.to_string()))
    }
}

/// `ω` over a table: one `[re, im]` value per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormDocument {
    pub sgd: SgdRef,
    pub values: Vec<[f64; 2]>,
}

impl FormDocument {
    pub fn to_form(&self, base: Option<&Path>) -> Result<(SemigroupoidTable, PositiveForm), ParseError> {
        let table = self.sgd.load(base)?.to_table()?;
        let values: Vec<Complex64> = self.values.iter().map(|&[re, im]| c(re, im)).collect();
        Ok((table, PositiveForm { values }))
    }
}
