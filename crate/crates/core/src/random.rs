//! Seeded random instances: matrices, unitaries and pullback maps.
//!
//! All generators draw from a caller-supplied ChaCha stream so that a seed
//! fixes every instance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::free::TruncatedFreeTable;
use crate::linalg::{c, identity, CMatrix};
use crate::psd::{AggregationMap, CoherentMap, HilbertBundle, MapError};
use crate::table::pair_groupoid;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries with real and imaginary parts uniform in `[-1, 1)`.
pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let m = matrix(rng, n, n);
    (&m + m.adjoint()).scale(0.5)
}

/// Unitary from the QR factor of a random matrix.
pub fn unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    if n == 0 {
        return identity(0);
    }
    matrix(rng, n, n).qr().q()
}

/// Random matrix rescaled to operator norm `norm`.
pub fn with_norm(rng: &mut impl Rng, rows: usize, cols: usize, norm: f64) -> CMatrix {
    let m = matrix(rng, rows, cols);
    let n = crate::linalg::op_norm(&m);
    if n == 0.0 { m } else { m.scale(norm / n) }
}

/// `T(s,t) = V_s* W_s W_t* V_t` on the pair groupoid: the pullback of a
/// unitary representation on `C^m` through random `V_s: H_{τ(s)} → C^m`.
pub fn pair_groupoid_pullback(
    rng: &mut impl Rng,
    n: usize,
    tau: AggregationMap,
    h_dims: Vec<usize>,
    m: usize,
) -> Result<CoherentMap, MapError> {
    let table = pair_groupoid(n);
    let w: Vec<CMatrix> = (0..n).map(|_| unitary(rng, m)).collect();
    let rep: Vec<CMatrix> = table.elements().map(|a| &w[table.tgt(a).0] * w[table.src(a).0].adjoint()).collect();
    let v: Vec<CMatrix> = (0..n).map(|s| matrix(rng, m, h_dims[tau.tau[s]])).collect();
    CoherentMap::pullback(table, HilbertBundle::new(h_dims), tau, &rep, &v)
}

/// Pullback of a representation of a truncated free table through square
/// random `V_s`. Edges get random operators of norm `edge_norm`, or random
/// unitaries when `unitary_edges` is set; units act as the identity.
pub fn free_pullback(
    rng: &mut impl Rng,
    free: &TruncatedFreeTable,
    tau: AggregationMap,
    h_dims: Vec<usize>,
    unitary_edges: bool,
) -> Result<CoherentMap, MapError> {
    let g = &free.graph;
    let edges: Vec<CMatrix> = (0..g.edges.len())
        .map(|f| {
            let (rows, cols) = (h_dims[tau.tau[g.range(f)]], h_dims[tau.tau[g.source(f)]]);
            if unitary_edges {
                assert_eq!(rows, cols, "unitary edges need equal dimensions");
                unitary(rng, rows)
            } else {
                with_norm(rng, rows, cols, 0.9)
            }
        })
        .collect();
    let rep = free.extend(|f| edges[f].clone(), |v| identity(h_dims[tau.tau[v]]));
    let v: Vec<CMatrix> = (0..g.vertices).map(|s| matrix(rng, h_dims[tau.tau[s]], h_dims[tau.tau[s]])).collect();
    CoherentMap::pullback(free.table.clone(), HilbertBundle::new(h_dims), tau, &rep, &v)
}

/// Random aggregation of `n` objects onto `0..k`, every point hit.
pub fn aggregation(rng: &mut impl Rng, n: usize, k: usize) -> AggregationMap {
    assert!(k >= 1 && k <= n);
    let mut tau: Vec<usize> = (0..n).map(|s| if s < k { s } else { rng.random_range(0..k) }).collect();
    tau.shuffle(rng);
    AggregationMap::new(tau)
}

/// Random permutation of `0..n` as `perm[old] = new`.
pub fn permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
