//! Directed graphs and their length-truncated free semigroupoids.
//!
//! Three flavours are generated: paths in the graph, paths over the doubled
//! edge set `E ∪ E*`, and reduced words of the free groupoid. A product whose
//! length would exceed the bound is left undefined.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMatrix;
use crate::table::{ElementId, SemigroupoidTable, TableError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedGraph {
    pub vertices: usize,
    /// `(source, range)` per edge; parallel edges and loops are allowed.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {edge} has endpoint {vertex} outside 0..{vertices}")]
    EndpointOutOfRange { edge: usize, vertex: usize, vertices: usize },
    #[error("length bound must be at least 1")]
    ZeroBound,
    #[error(transparent)]
    Table(#[from] TableError),
}

impl DirectedGraph {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        for (edge, &(s, r)) in edges.iter().enumerate() {
            for v in [s, r] {
                if v >= vertices {
                    return Err(GraphError::EndpointOutOfRange { edge, vertex: v, vertices });
                }
            }
        }
        Ok(Self { vertices, edges })
    }

    pub fn source(&self, f: usize) -> usize {
        self.edges[f].0
    }

    pub fn range(&self, f: usize) -> usize {
        self.edges[f].1
    }

    /// Edges `f` with `r(f) = v`.
    pub fn received_by(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&f| self.range(f) == v).collect()
    }

    /// Number of paths of each length `0..=max_len`, by powers of the
    /// adjacency matrix. Length 0 counts vertices.
    pub fn path_counts(&self, max_len: usize) -> Vec<u128> {
        let n = self.vertices;
        let mut adj = vec![vec![0u128; n]; n];
        for &(s, r) in &self.edges {
            adj[r][s] += 1;
        }
        let mut power: Vec<Vec<u128>> = (0..n).map(|i| (0..n).map(|j| u128::from(i == j)).collect()).collect();
        let mut counts = Vec::with_capacity(max_len + 1);
        for _ in 0..=max_len {
            counts.push(power.iter().flatten().sum());
            let mut next = vec![vec![0u128; n]; n];
            for i in 0..n {
                for k in 0..n {
                    if power[i][k] == 0 {
                        continue;
                    }
                    for j in 0..n {
                        next[i][j] += power[i][k] * adj[k][j];
                    }
                }
            }
            power = next;
        }
        counts
    }

    /// The graph with every edge doubled by a reversed companion edge; edge
    /// `f*` has index `m + f`.
    pub fn doubled(&self) -> DirectedGraph {
        let mut edges = self.edges.clone();
        edges.extend(self.edges.iter().map(|&(s, r)| (r, s)));
        DirectedGraph { vertices: self.vertices, edges }
    }
}

/// An edge letter: the edge itself or its companion (`f*`, or `f^{-1}` in
/// the groupoid flavour).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub edge: usize,
    pub starred: bool,
}

impl Letter {
    pub fn plain(edge: usize) -> Self {
        Self { edge, starred: false }
    }

    pub fn star(edge: usize) -> Self {
        Self { edge, starred: true }
    }

    pub fn flipped(self) -> Self {
        Self { edge: self.edge, starred: !self.starred }
    }

    /// Sort key: plain edges first, then companions.
    fn id(self, n_edges: usize) -> usize {
        self.edge + if self.starred { n_edges } else { 0 }
    }

    fn source(self, g: &DirectedGraph) -> usize {
        if self.starred {
            g.range(self.edge)
        } else {
            g.source(self.edge)
        }
    }

    fn range(self, g: &DirectedGraph) -> usize {
        if self.starred {
            g.source(self.edge)
        } else {
            g.range(self.edge)
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.starred {
            write!(f, "f{}*", self.edge)
        } else {
            write!(f, "f{}", self.edge)
        }
    }
}

/// A path `w = w_1 ⋯ w_n` read right to left: `w_n` acts first, so
/// `s(w_i) = r(w_{i+1})`, the codomain is `r(w_1)` and the domain `s(w_n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub letters: Vec<Letter>,
    pub source: usize,
    pub range: usize,
}

impl Word {
    pub fn unit(v: usize) -> Self {
        Self { letters: Vec::new(), source: v, range: v }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Reverse and flip every letter.
    pub fn star(&self) -> Word {
        Word {
            letters: self.letters.iter().rev().map(|l| l.flipped()).collect(),
            source: self.range,
            range: self.source,
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "e{}", self.source);
        }
        let parts: Vec<String> = self.letters.iter().map(Letter::to_string).collect();
        f.write_str(&parts.join("."))
    }
}

/// Cancels adjacent `x x^{-1}` pairs with a stack; the result does not
/// depend on the order in which pairs are cancelled.
pub fn reduce(letters: &[Letter]) -> Vec<Letter> {
    let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
    for &l in letters {
        if out.last().is_some_and(|&top| top == l.flipped()) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Plain,
    Starred,
    Groupoid,
}

/// A free object truncated at `max_len`, with the word behind every element.
#[derive(Debug, Clone)]
pub struct TruncatedFreeTable {
    pub table: SemigroupoidTable,
    pub max_len: usize,
    pub words: Vec<Word>,
    pub flavor: Flavor,
    pub graph: DirectedGraph,
}

impl TruncatedFreeTable {
    pub fn element_of(&self, word: &Word) -> Option<ElementId> {
        self.words.iter().position(|w| w == word).map(ElementId)
    }

    pub fn word(&self, a: ElementId) -> &Word {
        &self.words[a.0]
    }

    /// Element for a word given by its letters; `None` if out of range.
    pub fn element_of_letters(&self, letters: &[Letter]) -> Option<ElementId> {
        let first = letters.first()?;
        let last = letters.last()?;
        let word = Word {
            letters: letters.to_vec(),
            source: last.source(&self.graph),
            range: first.range(&self.graph),
        };
        self.element_of(&word)
    }

    pub fn unit_of(&self, v: usize) -> Option<ElementId> {
        self.element_of(&Word::unit(v))
    }

    /// Extends operators on edges and vertices multiplicatively: a starred
    /// letter gets the adjoint, a word the product of its letters.
    pub fn extend(&self, edge: impl Fn(usize) -> CMatrix, unit: impl Fn(usize) -> CMatrix) -> Vec<CMatrix> {
        let letters: Vec<CMatrix> = (0..self.graph.edges.len()).map(edge).collect();
        self.words
            .iter()
            .map(|w| {
                let mut it = w.letters.iter().map(|l| if l.starred { letters[l.edge].adjoint() } else { letters[l.edge].clone() });
                match it.next() {
                    None => unit(w.source),
                    Some(first) => it.fold(first, |acc, m| acc * m),
                }
            })
            .collect()
    }
}

/// Free semigroupoid `F+(G)` truncated at length `max_len`.
pub fn free_semigroupoid(
    graph: &DirectedGraph,
    max_len: usize,
    with_units: bool,
) -> Result<TruncatedFreeTable, GraphError> {
    let letters: Vec<Letter> = (0..graph.edges.len()).map(Letter::plain).collect();
    build(graph, max_len, &letters, with_units, Flavor::Plain)
}

/// Free *-semigroupoid `F+*(G)` (with units) truncated at length `max_len`.
pub fn free_star_semigroupoid(graph: &DirectedGraph, max_len: usize) -> Result<TruncatedFreeTable, GraphError> {
    let m = graph.edges.len();
    let letters: Vec<Letter> = (0..m).map(Letter::plain).chain((0..m).map(Letter::star)).collect();
    build(graph, max_len, &letters, true, Flavor::Starred)
}

/// Free groupoid on `G` (with units): reduced words of length at most `max_len`.
pub fn free_groupoid(graph: &DirectedGraph, max_len: usize) -> Result<TruncatedFreeTable, GraphError> {
    let m = graph.edges.len();
    let letters: Vec<Letter> = (0..m).map(Letter::plain).chain((0..m).map(Letter::star)).collect();
    build(graph, max_len, &letters, true, Flavor::Groupoid)
}

fn build(
    graph: &DirectedGraph,
    max_len: usize,
    alphabet: &[Letter],
    with_units: bool,
    flavor: Flavor,
) -> Result<TruncatedFreeTable, GraphError> {
    if max_len == 0 {
        return Err(GraphError::ZeroBound);
    }
    let m = graph.edges.len();
    let mut alphabet = alphabet.to_vec();
    alphabet.sort_by_key(|l| l.id(m));

    // Length-then-lex: extending each lex-ordered layer by letters in order
    // keeps the next layer lex-ordered.
    let mut words: Vec<Word> = Vec::new();
    if with_units {
        words.extend((0..graph.vertices).map(Word::unit));
    }
    let mut layer: Vec<Word> = alphabet
        .iter()
        .map(|&l| Word { letters: vec![l], source: l.source(graph), range: l.range(graph) })
        .collect();
    for len in 1..=max_len {
        words.extend(layer.iter().cloned());
        if len == max_len {
            break;
        }
        let mut next = Vec::new();
        for w in &layer {
            let tail = *w.letters.last().expect("non-empty");
            for &l in &alphabet {
                if l.range(graph) != tail.source(graph) {
                    continue;
                }
                if flavor == Flavor::Groupoid && l == tail.flipped() {
                    continue;
                }
                let mut letters = w.letters.clone();
                letters.push(l);
                next.push(Word { letters, source: l.source(graph), range: w.range });
            }
        }
        layer = next;
    }

    let index: HashMap<&Word, usize> = words.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let src = words.iter().map(|w| w.source).collect();
    let tgt = words.iter().map(|w| w.range).collect();
    let mut table = SemigroupoidTable::new(graph.vertices, src, tgt)?;
    for (a, wa) in words.iter().enumerate() {
        for (b, wb) in words.iter().enumerate() {
            if wa.source != wb.range {
                continue;
            }
            let mut letters = wa.letters.clone();
            letters.extend_from_slice(&wb.letters);
            if flavor == Flavor::Groupoid {
                letters = reduce(&letters);
            }
            if letters.len() > max_len {
                continue;
            }
            let product = Word { letters, source: wb.source, range: wa.range };
            if let Some(&p) = index.get(&product) {
                table.set_product(ElementId(a), ElementId(b), Some(ElementId(p)))?;
            }
        }
    }
    if flavor != Flavor::Plain {
        let star = words.iter().map(|w| index[&w.star()]).collect();
        table = table.with_star(star)?;
    }
    if with_units {
        table = table.with_units((0..graph.vertices).collect())?;
    }
    let lengths = words.iter().map(Word::len).collect();
    let table = table.with_truncation(max_len, lengths)?;
    Ok(TruncatedFreeTable { table, max_len, words, flavor, graph: graph.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_loops() -> DirectedGraph {
        DirectedGraph::new(1, vec![(0, 0), (0, 0)]).unwrap()
    }

    #[test]
    fn plain_counts() {
        let t = free_semigroupoid(&two_loops(), 2, true).unwrap();
        assert_eq!(t.table.n_elements(), 7);
        assert_eq!(t.table.with_target(crate::table::ObjectId(0)).len(), 7);

        let edge = DirectedGraph::new(2, vec![(0, 1)]).unwrap();
        let t = free_semigroupoid(&edge, 3, true).unwrap();
        assert_eq!(t.table.n_elements(), 3);
        assert!(t.words.iter().all(|w| w.len() <= 1));
    }

    #[test]
    fn single_loop_overflow() {
        let g = DirectedGraph::new(1, vec![(0, 0)]).unwrap();
        let t = free_semigroupoid(&g, 3, true).unwrap();
        assert_eq!(t.table.n_elements(), 4);
        let a2 = t.element_of_letters(&[Letter::plain(0); 2]).unwrap();
        assert_eq!(t.table.mul(a2, a2), None);
        let a = t.element_of_letters(&[Letter::plain(0)]).unwrap();
        let a3 = t.element_of_letters(&[Letter::plain(0); 3]).unwrap();
        assert_eq!(t.table.mul(a, a2), Some(a3));
        assert!(t.table.validate().is_valid());
    }

    #[test]
    fn starred_examples() {
        let g = DirectedGraph::new(1, vec![(0, 0)]).unwrap();
        let t = free_star_semigroupoid(&g, 1).unwrap();
        assert_eq!(t.table.n_elements(), 3);
        let a = t.element_of_letters(&[Letter::plain(0)]).unwrap();
        let a_star = t.element_of_letters(&[Letter::star(0)]).unwrap();
        assert_eq!(t.table.star(a), Some(a_star));

        let edge = DirectedGraph::new(2, vec![(0, 1)]).unwrap();
        let t = free_star_semigroupoid(&edge, 2).unwrap();
        let fsf = t.element_of_letters(&[Letter::star(0), Letter::plain(0)]).unwrap();
        assert_eq!((t.table.src(fsf).0, t.table.tgt(fsf).0), (0, 0));
        let ffs = t.element_of_letters(&[Letter::plain(0), Letter::star(0)]).unwrap();
        assert_eq!((t.table.src(ffs).0, t.table.tgt(ffs).0), (1, 1));

        assert_eq!(free_star_semigroupoid(&two_loops(), 2).unwrap().table.n_elements(), 21);
    }

    #[test]
    fn groupoid_examples() {
        let g = DirectedGraph::new(1, vec![(0, 0)]).unwrap();
        let t = free_groupoid(&g, 2).unwrap();
        assert_eq!(t.table.n_elements(), 5);
        let a = t.element_of_letters(&[Letter::plain(0)]).unwrap();
        let ai = t.element_of_letters(&[Letter::star(0)]).unwrap();
        assert_eq!(t.table.mul(a, ai), t.unit_of(0));

        let w = [Letter::plain(0), Letter::star(0), Letter::plain(0)];
        assert_eq!(reduce(&w), vec![Letter::plain(0)]);

        let edge = DirectedGraph::new(2, vec![(0, 1)]).unwrap();
        let t = free_groupoid(&edge, 4).unwrap();
        assert_eq!(t.table.n_elements(), 4);
        assert!(t.table.classify().groupoid);
    }

    #[test]
    fn canonical_order_is_length_then_lex() {
        let t = free_star_semigroupoid(&two_loops(), 2).unwrap();
        for pair in t.words.windows(2) {
            let key = |w: &Word| (w.len(), w.letters.iter().map(|l| l.id(2)).collect::<Vec<_>>());
            assert!(key(&pair[0]) < key(&pair[1]));
        }
    }

    #[test]
    fn zero_bound_rejected() {
        assert_eq!(free_semigroupoid(&two_loops(), 0, true).unwrap_err(), GraphError::ZeroBound);
        assert!(DirectedGraph::new(1, vec![(0, 1)]).is_err());
    }
}
