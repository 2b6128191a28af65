//! Minimal orthogonal dilations of positive semidefinite coherent maps.
//!
//! Every fibre `Γ^s` contributes a factor space `L_s` from a rank-revealing
//! factorization of its Gram matrix; `K_x` is the orthogonal sum of the `L_s`
//! with `τ(s) = x`. Representation operators act blockwise on that sum.
//!
//! Truncated free tables cannot supply whole-fibre Gram matrices, so the
//! factor space is built from short words instead: the smallest length `k`
//! at which adding words of length `k + 1` does not raise the rank of any
//! fibre Gram matrix. Operators on longer words are then obtained from
//! cross-Gram coordinates or as products of shorter ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, block_diag, column_basis, hstack, identity, lstsq, max_abs, max_abs_diff, op_norm, zeros,
    CMatrix, RANK_TOL, VERIFY_TOL,
};
use crate::psd::{check_unital, gram_over, window, AggregationMap, CoherentMap, MapError, PsdError, PSD_TOL};
use crate::table::{ElementId, ObjectId, SemigroupoidTable};

/// Relative residual above which the defining least-squares solve is rejected.
pub const SOLVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DilationError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("map is not Hermitian: max deviation {deviation:e}")]
    NotHermitian { deviation: f64 },
    #[error("fibre {fiber} is not positive semidefinite: minimal eigenvalue {lambda_min:e}")]
    NotPsd { fiber: ObjectId, lambda_min: f64 },
    #[error("product {left}·{right} is missing from the table")]
    MissingProduct { left: ElementId, right: ElementId },
    #[error("operator of element {element} is ill-conditioned: residual {residual:e} against scale {scale:e}")]
    IllConditioned { element: ElementId, residual: f64, scale: f64 },
    #[error("fibre Gram ranks do not stabilise within the truncation bound {bound} (fibre {fiber}: rank {basis_rank} grows to {extended_rank})")]
    NotFlat { bound: usize, fiber: ObjectId, basis_rank: usize, extended_rank: usize },
    #[error("table is not an inverse semigroupoid")]
    NotInverseSemigroupoid,
    #[error("map is not unital: worst projection defect {defect:e} at point {point}")]
    NotUnital { point: usize, defect: f64 },
    #[error("factor dimensions differ at object {object}: {left} vs {right}")]
    DimensionMismatch { object: ObjectId, left: usize, right: usize },
    #[error("input dilation {which} does not verify: worst residual {residual:e}")]
    InputNotVerified { which: usize, residual: f64 },
    #[error("input dilation is not orthogonal: residual {residual:e}")]
    NotOrthogonal { residual: f64 },
    #[error("dilation does not match the map: {0}")]
    Mismatch(String),
}

impl From<PsdError> for DilationError {
    fn from(e: PsdError) -> Self {
        match e {
            PsdError::Map(m) => Self::Map(m),
            PsdError::MissingProduct { left, right, .. } => Self::MissingProduct { left, right },
            PsdError::NotHermitian { deviation } => Self::NotHermitian { deviation },
        }
    }
}

/// `M_α`: entry `(λ, β)` counts the solutions of `αβ = λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMatrix {
    pub element: ElementId,
    /// `Γ^{c(α)}` in table order.
    pub rows: Vec<ElementId>,
    /// `Γ^{d(α)}` in table order.
    pub cols: Vec<ElementId>,
    /// Row-major counts.
    pub entries: Vec<Vec<u32>>,
    /// Columns `β` whose product `αβ` is absent from the table.
    pub missing: Vec<ElementId>,
}

impl StructureMatrix {
    pub fn entry(&self, lambda: ElementId, beta: ElementId) -> u32 {
        let i = self.rows.iter().position(|&r| r == lambda);
        let j = self.cols.iter().position(|&c| c == beta);
        match (i, j) {
            (Some(i), Some(j)) => self.entries[i][j],
            _ => 0,
        }
    }
}

pub fn structure_matrix(table: &SemigroupoidTable, a: ElementId) -> StructureMatrix {
    let rows = table.with_target(table.tgt(a)).to_vec();
    let cols = table.with_target(table.src(a)).to_vec();
    let mut entries = vec![vec![0u32; cols.len()]; rows.len()];
    let mut missing = Vec::new();
    for (j, &b) in cols.iter().enumerate() {
        match table.mul(a, b) {
            Some(p) => {
                let i = rows.iter().position(|&r| r == p).expect("product lands in the target fibre");
                entries[i][j] += 1;
            }
            None => missing.push(b),
        }
    }
    StructureMatrix { element: a, rows, cols, entries, missing }
}

/// Factor `G_s = Q_s* Q_s` of one fibre over its generating elements.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberFactor {
    pub fiber: ObjectId,
    /// Elements of `Γ^s` whose blocks index the columns of `q`.
    pub basis: Vec<ElementId>,
    pub offsets: Vec<usize>,
    pub block_dims: Vec<usize>,
    /// `r_s × N_s`.
    pub q: CMatrix,
}

impl FiberFactor {
    pub fn rank(&self) -> usize {
        self.q.nrows()
    }

    fn position(&self, a: ElementId) -> Option<usize> {
        self.basis.iter().position(|&b| b == a)
    }

    fn column_block(&self, idx: usize) -> CMatrix {
        self.q.columns(self.offsets[idx], self.block_dims[idx]).into_owned()
    }
}

/// Placement of `L_s` inside `K_{τ(s)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub object: ObjectId,
    pub offset: usize,
    pub dim: usize,
}

/// An orthogonal dilation `(K, Φ, V)` with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dilation {
    pub tau: AggregationMap,
    pub factors: Vec<FiberFactor>,
    /// Per point `x`, the blocks of `τ^{-1}(x)` in object order.
    pub layout: Vec<Vec<Block>>,
    pub k_dims: Vec<usize>,
    /// `rep[α]: K_{τ(d(α))} → K_{τ(c(α))}`.
    pub rep: Vec<CMatrix>,
    /// `v[s]: H_{τ(s)} → K_{τ(s)}`.
    pub v: Vec<CMatrix>,
    /// Word length of the generating window, `None` for whole fibres.
    pub window: Option<usize>,
}

impl Dilation {
    pub fn rep(&self, a: ElementId) -> &CMatrix {
        &self.rep[a.0]
    }

    pub fn v(&self, s: ObjectId) -> &CMatrix {
        &self.v[s.0]
    }

    pub fn block(&self, s: ObjectId) -> Block {
        *self.layout[self.tau.of(s)].iter().find(|b| b.object == s).expect("every object has a block")
    }

    pub fn k_dim(&self, x: usize) -> usize {
        self.k_dims[x]
    }

    /// `Φ(α) V(d(α))`, the spanning columns contributed by `α`.
    pub fn span_columns(&self, table: &SemigroupoidTable, a: ElementId) -> CMatrix {
        &self.rep[a.0] * &self.v[table.src(a).0]
    }

    /// All spanning columns landing in `K_{τ(s)}` from elements of `Γ^s`.
    pub fn object_span(&self, table: &SemigroupoidTable, s: ObjectId) -> CMatrix {
        let cols: Vec<CMatrix> = table.with_target(s).iter().map(|&a| self.span_columns(table, a)).collect();
        hstack(self.k_dim(self.tau.of(s)), &cols)
    }

    /// Conjugates by a unitary `u[x]` on every `K_x`. The layout is kept, so
    /// `u[x]` should respect it for the result to stay block supported.
    pub fn conjugate(&self, table: &SemigroupoidTable, u: &[CMatrix]) -> Dilation {
        let mut out = self.clone();
        for s in table.objects() {
            out.v[s.0] = &u[self.tau.of(s)] * self.v(s);
        }
        for f in &mut out.factors {
            let b = self.block(f.fiber);
            let local = u[self.tau.of(f.fiber)].view((b.offset, b.offset), (b.dim, b.dim)).into_owned();
            f.q = local * &f.q;
        }
        for a in table.elements() {
            let xc = self.tau.of(table.tgt(a));
            let xd = self.tau.of(table.src(a));
            out.rep[a.0] = &u[xc] * self.rep(a) * u[xd].adjoint();
        }
        out
    }

    /// `Φ(α)` restricted to `L_{d(α)} → L_{c(α)}`.
    pub fn local_block(&self, table: &SemigroupoidTable, a: ElementId) -> CMatrix {
        let (bc, bd) = (self.block(table.tgt(a)), self.block(table.src(a)));
        self.rep[a.0].view((bc.offset, bd.offset), (bc.dim, bd.dim)).into_owned()
    }

    /// Orthogonal sum with a second copy of the representation that `V` does
    /// not see. Still an orthogonal dilation, but no longer minimal.
    pub fn doubled(&self, table: &SemigroupoidTable) -> Dilation {
        let dims: Vec<usize> = self.factors.iter().map(FiberFactor::rank).collect();
        let copy: Vec<CMatrix> = table.elements().map(|a| self.local_block(table, a)).collect();
        self.with_stray(table, &dims, &copy)
    }

    /// Orthogonal sum with `extra[s]` dimensions appended to each `L_s` on
    /// which every operator, units included, vanishes.
    pub fn pad(&self, table: &SemigroupoidTable, extra: &[usize]) -> Dilation {
        let zero_rep: Vec<CMatrix> = table
            .elements()
            .map(|a| zeros(extra[table.tgt(a).0], extra[table.src(a).0]))
            .collect();
        self.stack(table, extra, &zero_rep)
    }

    /// Orthogonal sum with a blockwise representation `stray` that is invisible
    /// to `V`. `stray[α]` maps a space of dimension `dims[d(α)]` to one of
    /// dimension `dims[c(α)]`.
    pub fn with_stray(&self, table: &SemigroupoidTable, dims: &[usize], stray: &[CMatrix]) -> Dilation {
        self.stack(table, dims, stray)
    }

    fn stack(&self, table: &SemigroupoidTable, extra: &[usize], extra_rep: &[CMatrix]) -> Dilation {
        let n_points = self.k_dims.len();
        let mut layout = vec![Vec::new(); n_points];
        let mut k_dims = vec![0; n_points];
        for (s, f) in self.factors.iter().enumerate() {
            let x = self.tau.tau[s];
            let dim = f.rank() + extra[s];
            layout[x].push(Block { object: ObjectId(s), offset: k_dims[x], dim });
            k_dims[x] += dim;
        }
        let new_block = |s: ObjectId| layout[self.tau.of(s)].iter().find(|b| b.object == s).copied().unwrap();
        let rep = table
            .elements()
            .map(|a| {
                let (c, d) = (table.tgt(a), table.src(a));
                let (old_c, old_d) = (self.block(c), self.block(d));
                let (nc, nd) = (new_block(c), new_block(d));
                let mut m = zeros(k_dims[self.tau.of(c)], k_dims[self.tau.of(d)]);
                let inner = self.rep[a.0].view((old_c.offset, old_d.offset), (old_c.dim, old_d.dim));
                m.view_mut((nc.offset, nd.offset), (old_c.dim, old_d.dim)).copy_from(&inner);
                m.view_mut((nc.offset + old_c.dim, nd.offset + old_d.dim), (extra[c.0], extra[d.0]))
                    .copy_from(&extra_rep[a.0]);
                m
            })
            .collect();
        let v = (0..self.v.len())
            .map(|s| {
                let s = ObjectId(s);
                let (old, nb) = (self.block(s), new_block(s));
                let mut m = zeros(k_dims[self.tau.of(s)], self.v[s.0].ncols());
                m.view_mut((nb.offset, 0), (old.dim, m.ncols()))
                    .copy_from(&self.v[s.0].rows(old.offset, old.dim));
                m
            })
            .collect();
        let factors = self
            .factors
            .iter()
            .map(|f| {
                let mut q = zeros(f.rank() + extra[f.fiber.0], f.q.ncols());
                q.rows_mut(0, f.rank()).copy_from(&f.q);
                FiberFactor { q, ..f.clone() }
            })
            .collect();
        Dilation { tau: self.tau.clone(), factors, layout, k_dims, rep, v, window: self.window }
    }

    /// The dilation seen through a relabelling: `perm[old] = new` maps this
    /// dilation's element ids to the ids of the returned one.
    pub fn relabel_elements(&self, perm: &[usize]) -> Dilation {
        let mut out = self.clone();
        for (old, m) in self.rep.iter().enumerate() {
            out.rep[perm[old]] = m.clone();
        }
        for f in &mut out.factors {
            for b in &mut f.basis {
                *b = ElementId(perm[b.0]);
            }
        }
        out
    }
}

/// Builds the minimal orthogonal dilation of a positive semidefinite map.
pub fn dilate(map: &CoherentMap) -> Result<Dilation, DilationError> {
    let coherence = map.check_coherent();
    if let Some(v) = coherence.violations.iter().find(|v| matches!(v, crate::psd::CoherenceViolation::Shape { .. })) {
        if let crate::psd::CoherenceViolation::Shape { element, expected, found } = *v {
            return Err(MapError::Shape { element, expected, found }.into());
        }
    }
    if !coherence.is_coherent() {
        return Err(DilationError::NotHermitian { deviation: coherence.max_hermitian_deviation() });
    }
    let table = map.table();
    let window_len = choose_window(map)?;
    let objects: Vec<ObjectId> = table.objects().collect();
    let factors = objects
        .par_iter()
        .map(|&s| {
            let basis = match window_len {
                Some(k) => window(table, s, k),
                None => table.with_target(s).to_vec(),
            };
            let gram = gram_over(map, s, &basis)?;
            let f = linalg::psd_factor_with(&gram.gram, RANK_TOL, PSD_TOL).map_err(|e| match e {
                linalg::LinalgError::NotPsd { lambda_min } => DilationError::NotPsd { fiber: s, lambda_min },
                other => DilationError::Mismatch(other.to_string()),
            })?;
            Ok(FiberFactor { fiber: s, basis, offsets: gram.block_offsets, block_dims: gram.block_dims, q: f.q })
        })
        .collect::<Result<Vec<_>, DilationError>>()?;

    let n_points = map.bundle().n_points();
    let mut layout = vec![Vec::new(); n_points];
    let mut k_dims = vec![0; n_points];
    for f in &factors {
        let x = map.tau().of(f.fiber);
        layout[x].push(Block { object: f.fiber, offset: k_dims[x], dim: f.rank() });
        k_dims[x] += f.rank();
    }

    let local = local_operators(map, &factors, window_len.is_some())?;

    let block_of = |s: ObjectId| layout[map.tau().of(s)].iter().find(|b| b.object == s).copied().unwrap();
    let rep = table
        .elements()
        .map(|a| {
            let (c, d) = (table.tgt(a), table.src(a));
            let (bc, bd) = (block_of(c), block_of(d));
            let mut m = zeros(k_dims[map.tau().of(c)], k_dims[map.tau().of(d)]);
            m.view_mut((bc.offset, bd.offset), (bc.dim, bd.dim)).copy_from(&local[a.0]);
            m
        })
        .collect();
    let units = table.unit_map().expect("coherent maps carry units");
    let v = factors
        .iter()
        .map(|f| {
            let s = f.fiber;
            let b = block_of(s);
            let idx = f.position(units[s.0]).expect("the unit belongs to every generating window");
            let mut m = zeros(k_dims[map.tau().of(s)], map.object_dim(s));
            m.view_mut((b.offset, 0), (b.dim, m.ncols())).copy_from(&f.column_block(idx));
            m
        })
        .collect();
    Ok(Dilation { tau: map.tau().clone(), factors, layout, k_dims, rep, v, window: window_len })
}

/// `None` for untruncated tables; otherwise the smallest word length at which
/// every fibre Gram matrix is flat.
fn choose_window(map: &CoherentMap) -> Result<Option<usize>, DilationError> {
    let table = map.table();
    let Some(bound) = table.truncation() else { return Ok(None) };
    let mut worst = None;
    let mut k = 0;
    while 2 * (k + 1) <= bound {
        let mut flat = true;
        for s in table.objects() {
            let base = window(table, s, k);
            // base first, so its Gram is the leading block whatever the ids
            let mut ext = base.clone();
            ext.extend(window(table, s, k + 1).into_iter().filter(|a| !base.contains(a)));
            let g_ext = gram_over(map, s, &ext)?;
            let f_ext = linalg::psd_factor_with(&g_ext.gram, RANK_TOL, PSD_TOL).map_err(|e| match e {
                linalg::LinalgError::NotPsd { lambda_min } => DilationError::NotPsd { fiber: s, lambda_min },
                other => DilationError::Mismatch(other.to_string()),
            })?;
            let n_base: usize = g_ext.block_dims[..base.len()].iter().sum();
            let g_base = g_ext.gram.view((0, 0), (n_base, n_base)).into_owned();
            let cutoff = RANK_TOL * f_ext.lambda_max.max(0.0);
            let base_rank = if n_base == 0 {
                0
            } else {
                linalg::hermitian_eig(&g_base).expect("square").0.iter().filter(|&&l| l > cutoff && l > 0.0).count()
            };
            if base_rank != f_ext.rank {
                flat = false;
                worst.get_or_insert((s, base_rank, f_ext.rank));
                break;
            }
        }
        if flat {
            return Ok(Some(k));
        }
        k += 1;
    }
    let (fiber, basis_rank, extended_rank) = worst.unwrap_or((ObjectId(0), 0, 0));
    Err(DilationError::NotFlat { bound, fiber, basis_rank, extended_rank })
}

/// Coordinates in `L_s` of the vectors `λh`, `λ ∈ Γ^s`.
fn coordinates(map: &CoherentMap, f: &FiberFactor, lambda: ElementId) -> Option<Result<CMatrix, DilationError>> {
    if let Some(idx) = f.position(lambda) {
        return Some(Ok(f.column_block(idx)));
    }
    let table = map.table();
    let cols = map.object_dim(table.src(lambda));
    let mut cross = zeros(f.q.ncols(), cols);
    for (i, &g) in f.basis.iter().enumerate() {
        let p = table.mul(table.star(g)?, lambda)?;
        cross.view_mut((f.offsets[i], 0), (f.block_dims[i], cols)).copy_from(map.mat(p));
    }
    // Q_s* y = [T(γ*λ)]_γ
    let sol = lstsq(&f.q.adjoint(), &cross).expect("row counts agree");
    let scale = 1f64.max(max_abs(&cross));
    if sol.residual > SOLVE_TOL * scale {
        return Some(Err(DilationError::IllConditioned { element: lambda, residual: sol.residual, scale }));
    }
    Some(Ok(sol.x))
}

/// Local operators `L_{d(α)} → L_{c(α)}` for every element.
fn local_operators(map: &CoherentMap, factors: &[FiberFactor], windowed: bool) -> Result<Vec<CMatrix>, DilationError> {
    let table = map.table();
    let direct: Vec<Option<Result<CMatrix, DilationError>>> = table
        .elements()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&a| {
            let fc = &factors[table.tgt(a).0];
            let fd = &factors[table.src(a).0];
            let y = if windowed {
                let mut blocks = Vec::with_capacity(fd.basis.len());
                for &b in &fd.basis {
                    let lambda = table.mul(a, b)?;
                    match coordinates(map, fc, lambda)? {
                        Ok(y) => blocks.push(y),
                        Err(e) => return Some(Err(e)),
                    }
                }
                hstack(fc.rank(), &blocks)
            } else {
                let m = structure_matrix(table, a);
                if let Some(&b) = m.missing.first() {
                    return Some(Err(DilationError::MissingProduct { left: a, right: b }));
                }
                &fc.q * expand(map, &m, fc, fd)
            };
            Some(solve_operator(a, &fd.q, &y))
        })
        .collect();

    let mut ops: Vec<Option<CMatrix>> = Vec::with_capacity(direct.len());
    for r in direct {
        ops.push(r.transpose()?);
    }
    // Remaining elements are products of ones already known; shorter words first.
    let mut pending: Vec<ElementId> = table.elements().filter(|a| ops[a.0].is_none()).collect();
    pending.sort_by_key(|&a| (table.length(a).unwrap_or(0), a));
    for a in pending {
        let found = table.products().find(|&(x, y, p)| p == a && x != a && y != a && ops[x.0].is_some() && ops[y.0].is_some());
        match found {
            Some((x, y, _)) => {
                let m = ops[x.0].as_ref().unwrap() * ops[y.0].as_ref().unwrap();
                ops[a.0] = Some(m);
            }
            None => {
                let fd = &factors[table.src(a).0];
                let right = fd.basis.iter().copied().find(|&b| table.mul(a, b).is_none()).unwrap_or(a);
                return Err(DilationError::MissingProduct { left: a, right });
            }
        }
    }
    Ok(ops.into_iter().map(Option::unwrap).collect())
}

/// `M_α` with every count `k` at `(λ, β)` widened to `k·I` on the `β` block.
fn expand(map: &CoherentMap, m: &StructureMatrix, fc: &FiberFactor, fd: &FiberFactor) -> CMatrix {
    let mut out = zeros(fc.q.ncols(), fd.q.ncols());
    for (i, row) in m.entries.iter().enumerate() {
        for (j, &k) in row.iter().enumerate() {
            if k > 0 {
                let dim = map.object_dim(map.table().src(m.cols[j]));
                let block = identity(dim).scale(k as f64);
                out.view_mut((fc.offsets[i], fd.offsets[j]), (dim, dim)).copy_from(&block);
            }
        }
    }
    out
}

/// Solves `Φ Q_d = Y` in the least-squares sense.
fn solve_operator(a: ElementId, qd: &CMatrix, y: &CMatrix) -> Result<CMatrix, DilationError> {
    let sol = lstsq(&qd.adjoint(), &y.adjoint()).expect("column counts agree");
    let scale = 1f64.max(max_abs(y));
    if sol.residual > SOLVE_TOL * scale {
        return Err(DilationError::IllConditioned { element: a, residual: sol.residual, scale });
    }
    Ok(sol.x.adjoint())
}

/// Maximal residuals of a candidate dilation against a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub reconstruction: f64,
    pub multiplicativity: f64,
    pub adjoint: f64,
    pub block_support: f64,
    pub orthogonality: f64,
    /// `‖Φ(β)Φ(α)V(d(α))‖` for `τ(c(α)) = τ(d(β))`, `c(α) ≠ d(β)`.
    pub cross_products: f64,
    pub unit_sum: f64,
    pub v_range: f64,
    /// `dim K_x − rank` of the spanning columns, per point.
    pub minimality_defect: Vec<usize>,
    pub tolerance: f64,
}

impl VerificationReport {
    pub fn worst_residual(&self) -> f64 {
        [
            self.reconstruction,
            self.multiplicativity,
            self.adjoint,
            self.block_support,
            self.orthogonality,
            self.cross_products,
            self.unit_sum,
            self.v_range,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn is_minimal(&self) -> bool {
        self.minimality_defect.iter().all(|&d| d == 0)
    }

    pub fn passed(&self) -> bool {
        self.worst_residual() < self.tolerance && self.is_minimal()
    }

    /// Named residuals, for reports.
    pub fn residuals(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("reconstruction", self.reconstruction),
            ("multiplicativity", self.multiplicativity),
            ("adjoint", self.adjoint),
            ("block_support", self.block_support),
            ("orthogonality", self.orthogonality),
            ("cross_products", self.cross_products),
            ("unit_sum", self.unit_sum),
            ("v_range", self.v_range),
        ]
    }
}

fn shape_guard(map: &CoherentMap, d: &Dilation) -> Result<(), DilationError> {
    let table = map.table();
    if d.rep.len() != table.n_elements() || d.v.len() != table.n_objects() || d.tau != *map.tau() {
        return Err(DilationError::Mismatch("element or object counts differ".into()));
    }
    for a in table.elements() {
        let want = (d.k_dim(d.tau.of(table.tgt(a))), d.k_dim(d.tau.of(table.src(a))));
        if d.rep[a.0].shape() != want {
            return Err(DilationError::Mismatch(format!("operator of {a} has shape {:?}, expected {want:?}", d.rep[a.0].shape())));
        }
    }
    for s in table.objects() {
        let want = (d.k_dim(d.tau.of(s)), map.object_dim(s));
        if d.v[s.0].shape() != want {
            return Err(DilationError::Mismatch(format!("V({s}) has shape {:?}, expected {want:?}", d.v[s.0].shape())));
        }
    }
    Ok(())
}

/// Residual report; errors only on inconsistent shapes.
pub fn verify_dilation(map: &CoherentMap, d: &Dilation) -> Result<VerificationReport, DilationError> {
    shape_guard(map, d)?;
    let table = map.table();
    let star = table.star_map().expect("coherent maps carry an involution");
    let units = table.unit_map().expect("coherent maps carry units");

    let reconstruction = table
        .elements()
        .map(|a| {
            let r = d.v(table.tgt(a)).adjoint() * d.rep(a) * d.v(table.src(a));
            max_abs_diff(map.mat(a), &r)
        })
        .fold(0.0, f64::max);
    let multiplicativity = table
        .products()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(a, b, p)| max_abs_diff(d.rep(p), &(d.rep(a) * d.rep(b))))
        .reduce(|| 0.0, f64::max);
    let adjoint = table.elements().map(|a| max_abs_diff(d.rep(star[a.0]), &d.rep(a).adjoint())).fold(0.0, f64::max);

    let mut block_support = 0.0f64;
    for a in table.elements() {
        let (bc, bd) = (d.block(table.tgt(a)), d.block(table.src(a)));
        let m = d.rep(a);
        for ((i, j), z) in m.iter().enumerate().map(|(k, z)| ((k % m.nrows(), k / m.nrows()), z)) {
            let inside = (bc.offset..bc.offset + bc.dim).contains(&i) && (bd.offset..bd.offset + bd.dim).contains(&j);
            if !inside {
                block_support = block_support.max(z.norm());
            }
        }
    }
    let mut v_range = 0.0f64;
    for s in table.objects() {
        let b = d.block(s);
        let m = d.v(s);
        for i in (0..m.nrows()).filter(|i| !(b.offset..b.offset + b.dim).contains(i)) {
            v_range = m.row(i).iter().fold(v_range, |acc, z| acc.max(z.norm()));
        }
    }

    let spans: Vec<CMatrix> = table.objects().map(|s| d.object_span(table, s)).collect();
    let mut orthogonality = 0.0f64;
    let mut cross_products = 0.0f64;
    let mut unit_sum = 0.0f64;
    let mut minimality_defect = Vec::with_capacity(d.k_dims.len());
    for x in 0..d.k_dims.len() {
        let pre = d.tau.preimage(x);
        for (i, s) in pre.iter().enumerate() {
            for t in &pre[i + 1..] {
                orthogonality = orthogonality.max(max_abs(&(spans[t.0].adjoint() * &spans[s.0])));
            }
        }
        let mut sum = zeros(d.k_dim(x), d.k_dim(x));
        for s in &pre {
            sum += d.rep(units[s.0]);
        }
        unit_sum = unit_sum.max(max_abs_diff(&sum, &identity(d.k_dim(x))));
        // Each block is normalised so that a faint fibre is not lost to the
        // relative cutoff of a strong one.
        let normalised: Vec<CMatrix> = pre
            .iter()
            .map(|s| {
                let n = op_norm(&spans[s.0]);
                if n > 0.0 { spans[s.0].unscale(n) } else { spans[s.0].clone() }
            })
            .collect();
        let all = hstack(d.k_dim(x), &normalised);
        minimality_defect.push(d.k_dim(x) - linalg::rank(&all, RANK_TOL));
    }
    for b in table.elements() {
        let db = table.src(b);
        for s in d.tau.preimage(d.tau.of(db)) {
            if s != db {
                cross_products = cross_products.max(max_abs(&(d.rep(b) * &spans[s.0])));
            }
        }
    }

    Ok(VerificationReport {
        reconstruction,
        multiplicativity,
        adjoint,
        block_support,
        orthogonality,
        cross_products,
        unit_sum,
        v_range,
        minimality_defect,
        tolerance: VERIFY_TOL,
    })
}

/// Multiplicativity and adjoint residuals of an arbitrary representation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationCheck {
    pub multiplicativity: f64,
    pub adjoint: f64,
}

pub fn check_representation(table: &SemigroupoidTable, rep: &[CMatrix]) -> RepresentationCheck {
    let multiplicativity = table
        .products()
        .map(|(a, b, p)| {
            let prod = &rep[a.0] * &rep[b.0];
            if prod.shape() == rep[p.0].shape() { max_abs_diff(&rep[p.0], &prod) } else { f64::INFINITY }
        })
        .fold(0.0, f64::max);
    let adjoint = match table.star_map() {
        Some(star) => table
            .elements()
            .map(|a| {
                let adj = rep[a.0].adjoint();
                if adj.shape() == rep[star[a.0].0].shape() { max_abs_diff(&rep[star[a.0].0], &adj) } else { f64::INFINITY }
            })
            .fold(0.0, f64::max),
        None => 0.0,
    };
    RepresentationCheck { multiplicativity, adjoint }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceWitness {
    pub u: Vec<CMatrix>,
    pub unitarity: f64,
    pub intertwining: f64,
    pub v_matching: f64,
}

impl EquivalenceWitness {
    pub fn passed(&self) -> bool {
        self.unitarity < VERIFY_TOL && self.intertwining < VERIFY_TOL && self.v_matching < VERIFY_TOL
    }
}

/// Residual budget for dilations accepted by [`unitary_equivalence`].
pub const INPUT_TOL: f64 = 1e-6;

/// Builds `U_x = ⊕_s U_{x,s}` carrying `Φ₁(α)V₁(d(α))` to `Φ₂(α)V₂(d(α))`.
pub fn unitary_equivalence(d1: &Dilation, d2: &Dilation, map: &CoherentMap) -> Result<EquivalenceWitness, DilationError> {
    let table = map.table();
    for (which, d) in [(1, d1), (2, d2)] {
        let r = verify_dilation(map, d)?;
        if r.worst_residual() >= INPUT_TOL {
            return Err(DilationError::InputNotVerified { which, residual: r.worst_residual() });
        }
    }
    for s in table.objects() {
        let (l, r) = (d1.block(s).dim, d2.block(s).dim);
        if l != r {
            return Err(DilationError::DimensionMismatch { object: s, left: l, right: r });
        }
    }
    let u: Vec<CMatrix> = (0..d1.k_dims.len())
        .map(|x| {
            let blocks: Vec<CMatrix> = d1.layout[x]
                .iter()
                .map(|b| {
                    let s = b.object;
                    let b2 = d2.block(s);
                    let a1 = d1.object_span(table, s).rows(b.offset, b.dim).into_owned();
                    let a2 = d2.object_span(table, s).rows(b2.offset, b2.dim).into_owned();
                    // U A1 = A2  <=>  A1* U* = A2*
                    lstsq(&a1.adjoint(), &a2.adjoint()).expect("column counts agree").x.adjoint()
                })
                .collect();
            block_diag(&blocks)
        })
        .collect();
    // The two layouts list blocks in the same object order, so block_diag
    // lines up with d2's offsets as well.
    let unitarity = u.iter().map(|ux| max_abs_diff(&(ux.adjoint() * ux), &identity(ux.ncols()))).fold(0.0, f64::max);
    let intertwining = table
        .elements()
        .map(|a| {
            let (xc, xd) = (d1.tau.of(table.tgt(a)), d1.tau.of(table.src(a)));
            max_abs_diff(&(&u[xc] * d1.rep(a)), &(d2.rep(a) * &u[xd]))
        })
        .fold(0.0, f64::max);
    let v_matching = table
        .objects()
        .map(|s| max_abs_diff(&(&u[d1.tau.of(s)] * d1.v(s)), d2.v(s)))
        .fold(0.0, f64::max);
    Ok(EquivalenceWitness { u, unitarity, intertwining, v_matching })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialIsometryReport {
    /// `max_α ‖Φ(α)Φ(α)*Φ(α) − Φ(α)‖_max`.
    pub triple_product: f64,
    pub worst_element: Option<ElementId>,
    pub max_norm: f64,
    pub tolerance: f64,
}

impl PartialIsometryReport {
    pub fn passed(&self) -> bool {
        self.triple_product < self.tolerance && self.max_norm <= 1.0 + self.tolerance
    }
}

pub fn check_partial_isometries(table: &SemigroupoidTable, d: &Dilation) -> Result<PartialIsometryReport, DilationError> {
    if !table.classify().inverse_semigroupoid {
        return Err(DilationError::NotInverseSemigroupoid);
    }
    let mut report = PartialIsometryReport { triple_product: 0.0, worst_element: None, max_norm: 0.0, tolerance: VERIFY_TOL };
    for a in table.elements() {
        let p = d.rep(a);
        let r = max_abs_diff(&(p * p.adjoint() * p), p);
        if report.worst_element.is_none() || r > report.triple_product {
            report.triple_product = r;
            report.worst_element = Some(a);
        }
        report.max_norm = report.max_norm.max(op_norm(p));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitalEmbedding {
    /// `W_x = Σ_{τ(s)=x} V(s)`.
    pub w: Vec<CMatrix>,
    pub isometry: f64,
    pub compression: f64,
}

impl UnitalEmbedding {
    pub fn passed(&self) -> bool {
        self.isometry < VERIFY_TOL && self.compression < VERIFY_TOL
    }
}

pub fn embed_unital(map: &CoherentMap, d: &Dilation) -> Result<UnitalEmbedding, DilationError> {
    let report = check_unital(map)?;
    if !report.passed() {
        let worst = report.worst_point().expect("a failing report has points");
        return Err(DilationError::NotUnital { point: worst.point, defect: worst.worst() });
    }
    shape_guard(map, d)?;
    let table = map.table();
    let w: Vec<CMatrix> = (0..d.k_dims.len())
        .map(|x| {
            let mut sum = zeros(d.k_dim(x), map.bundle().dim(x));
            for s in d.tau.preimage(x) {
                sum += d.v(s);
            }
            sum
        })
        .collect();
    let isometry = w.iter().map(|wx| max_abs_diff(&(wx.adjoint() * wx), &identity(wx.ncols()))).fold(0.0, f64::max);
    let compression = table
        .elements()
        .map(|a| {
            let (xc, xd) = (d.tau.of(table.tgt(a)), d.tau.of(table.src(a)));
            max_abs_diff(map.mat(a), &(w[xc].adjoint() * d.rep(a) * &w[xd]))
        })
        .fold(0.0, f64::max);
    Ok(UnitalEmbedding { w, isometry, compression })
}

/// Compresses an orthogonal dilation onto the spans of its spanning columns.
pub fn minimalize(d: &Dilation, map: &CoherentMap) -> Result<Dilation, DilationError> {
    let report = verify_dilation(map, d)?;
    if report.orthogonality >= VERIFY_TOL {
        return Err(DilationError::NotOrthogonal { residual: report.orthogonality });
    }
    let table = map.table();
    let bases: Vec<CMatrix> = table.objects().map(|s| column_basis(&d.object_span(table, s), RANK_TOL)).collect();
    let n_points = d.k_dims.len();
    let mut layout = vec![Vec::new(); n_points];
    let mut k_dims = vec![0; n_points];
    let mut stacked: Vec<Vec<CMatrix>> = vec![Vec::new(); n_points];
    for s in table.objects() {
        let x = d.tau.of(s);
        let dim = bases[s.0].ncols();
        layout[x].push(Block { object: s, offset: k_dims[x], dim });
        k_dims[x] += dim;
        stacked[x].push(bases[s.0].clone());
    }
    let b: Vec<CMatrix> = (0..n_points).map(|x| hstack(d.k_dim(x), &stacked[x])).collect();
    let rep = table
        .elements()
        .map(|a| {
            let (xc, xd) = (d.tau.of(table.tgt(a)), d.tau.of(table.src(a)));
            b[xc].adjoint() * d.rep(a) * &b[xd]
        })
        .collect();
    let v = table.objects().map(|s| b[d.tau.of(s)].adjoint() * d.v(s)).collect();
    let factors = d
        .factors
        .iter()
        .map(|f| {
            let basis_cols: Vec<CMatrix> = f.basis.iter().map(|&a| d.span_columns(table, a)).collect();
            let cols = hstack(d.k_dim(d.tau.of(f.fiber)), &basis_cols);
            FiberFactor { q: bases[f.fiber.0].adjoint() * cols, ..f.clone() }
        })
        .collect();
    Ok(Dilation { tau: d.tau.clone(), factors, layout, k_dims, rep, v, window: d.window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, real_matrix};
    use crate::psd::{check_psd, HilbertBundle};
    use crate::table::{monoid, pair_groupoid};

    fn scalar(v: f64) -> CMatrix {
        real_matrix(1, 1, &[v])
    }

    fn ones_on_pairs() -> CoherentMap {
        let mats = vec![scalar(1.0); 4];
        CoherentMap::new(pair_groupoid(2), HilbertBundle::new(vec![1, 1]), AggregationMap::identity(2), mats).unwrap()
    }

    #[test]
    fn structure_matrix_examples() {
        let t = pair_groupoid(2);
        // element 1 = (0,1)
        let m = structure_matrix(&t, ElementId(1));
        assert_eq!(m.rows, vec![ElementId(0), ElementId(1)]);
        assert_eq!(m.cols, vec![ElementId(2), ElementId(3)]);
        assert_eq!(m.entry(ElementId(0), ElementId(2)), 1);
        assert_eq!(m.entry(ElementId(1), ElementId(3)), 1);
        assert_eq!(m.entry(ElementId(0), ElementId(3)), 0);

        let unit = structure_matrix(&t, ElementId(0));
        assert_eq!(unit.entries, vec![vec![1, 0], vec![0, 1]]);

        // {e, a, z}: a² = z, z absorbing. Left multiplication by z sends all three to z.
        let m3 = monoid(&[vec![0, 1, 2], vec![1, 2, 2], vec![2, 2, 2]], Some(0), Some(vec![0, 1, 2])).unwrap();
        let mz = structure_matrix(&m3, ElementId(2));
        assert_eq!(mz.entries[2], vec![1, 1, 1]);
        let ma = structure_matrix(&m3, ElementId(1));
        assert_eq!(ma.entries[2], vec![0, 1, 1]);
    }

    #[test]
    fn trivial_group() {
        let table = monoid(&[vec![0]], Some(0), Some(vec![0])).unwrap();
        let t = CoherentMap::new(table, HilbertBundle::new(vec![1]), AggregationMap::full(1), vec![scalar(1.0)]).unwrap();
        let d = dilate(&t).unwrap();
        assert_eq!(d.k_dims, vec![1]);
        assert!((d.rep[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((d.v[0][(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(verify_dilation(&t, &d).unwrap().passed());
    }

    #[test]
    fn pair_groupoid_scalar_ones() {
        let t = ones_on_pairs();
        let d = dilate(&t).unwrap();
        assert_eq!(d.k_dims, vec![1, 1]);
        assert!((d.rep[1][(0, 0)].norm() - 1.0).abs() < 1e-12);
        let report = verify_dilation(&t, &d).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.reconstruction < 1e-14);

        let pi = check_partial_isometries(t.table(), &d).unwrap();
        assert!(pi.passed());
    }

    #[test]
    fn zeroed_operator_shows_in_reconstruction() {
        let t = ones_on_pairs();
        let mut d = dilate(&t).unwrap();
        d.rep[1] = zeros(1, 1);
        let report = verify_dilation(&t, &d).unwrap();
        assert!((report.reconstruction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn padding_raises_the_defect() {
        let t = ones_on_pairs();
        let d = dilate(&t).unwrap();
        let padded = d.pad(t.table(), &[1, 0]);
        let report = verify_dilation(&t, &padded).unwrap();
        assert_eq!(report.minimality_defect, vec![1, 0]);
        assert!(report.reconstruction < 1e-12);
    }

    #[test]
    fn minimalize_removes_a_stray_copy() {
        let t = ones_on_pairs();
        let d = dilate(&t).unwrap();
        let doubled = d.doubled(t.table());
        let report = verify_dilation(&t, &doubled).unwrap();
        assert_eq!(report.minimality_defect, vec![1, 1]);
        assert!(report.worst_residual() < 1e-12, "{report:?}");
        assert!(matches!(unitary_equivalence(&d, &doubled, &t), Err(DilationError::DimensionMismatch { .. })));

        let m = minimalize(&doubled, &t).unwrap();
        assert_eq!(m.k_dims, vec![1, 1]);
        assert!(verify_dilation(&t, &m).unwrap().passed());
        assert!(unitary_equivalence(&d, &m, &t).unwrap().passed());
    }

    #[test]
    fn not_psd_is_rejected() {
        let mats = vec![scalar(1.0), scalar(2.0), scalar(2.0), scalar(1.0)];
        let t = CoherentMap::new(pair_groupoid(2), HilbertBundle::new(vec![1, 1]), AggregationMap::identity(2), mats).unwrap();
        assert!(!check_psd(&t).unwrap().passed());
        match dilate(&t) {
            Err(DilationError::NotPsd { lambda_min, .. }) => assert!((lambda_min + 1.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn aggregated_unit_sum() {
        let mats = vec![scalar(1.0); 4];
        let t = CoherentMap::new(pair_groupoid(2), HilbertBundle::new(vec![1]), AggregationMap::full(2), mats).unwrap();
        let d = dilate(&t).unwrap();
        assert_eq!(d.k_dims, vec![2]);
        let r = verify_dilation(&t, &d).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.unit_sum < 1e-10);
        assert!(matches!(embed_unital(&t, &d), Err(DilationError::NotUnital { .. })));
    }

    #[test]
    fn partial_isometries_need_an_inverse_semigroupoid() {
        use crate::free::{free_semigroupoid, DirectedGraph};
        let g = DirectedGraph::new(1, vec![(0, 0)]).unwrap();
        let free = free_semigroupoid(&g, 2, true).unwrap();
        let n = free.table.n_elements();
        let d = Dilation {
            tau: AggregationMap::full(1),
            factors: Vec::new(),
            layout: vec![Vec::new()],
            k_dims: vec![0],
            rep: vec![zeros(0, 0); n],
            v: vec![zeros(0, 1)],
            window: None,
        };
        assert!(matches!(check_partial_isometries(&free.table, &d), Err(DilationError::NotInverseSemigroupoid)));
    }

    #[test]
    fn truncated_free_pullback_round_trip() {
        use crate::free::{free_star_semigroupoid, DirectedGraph};
        use crate::random::{free_pullback, seeded};
        let g = DirectedGraph::new(2, vec![(0, 1), (1, 1), (1, 0)]).unwrap();
        let free = free_star_semigroupoid(&g, 2).unwrap();
        let mut rng = seeded(7);
        let t = free_pullback(&mut rng, &free, AggregationMap::identity(2), vec![2, 3], false).unwrap();
        let d = dilate(&t).unwrap();
        assert_eq!(d.window, Some(0));
        let r = verify_dilation(&t, &d).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn truncated_window_ignores_element_order() {
        use crate::free::{free_star_semigroupoid, DirectedGraph};
        use crate::random::{free_pullback, permutation, seeded};
        let g = DirectedGraph::new(2, vec![(0, 1), (1, 1)]).unwrap();
        let free = free_star_semigroupoid(&g, 2).unwrap();
        let mut rng = seeded(19);
        let t = free_pullback(&mut rng, &free, AggregationMap::identity(2), vec![2, 1], false).unwrap();
        for _ in 0..5 {
            let p = t.permute_elements(&permutation(&mut rng, t.table().n_elements())).unwrap();
            let d = dilate(&p).unwrap();
            assert_eq!(d.window, Some(0));
            assert!(verify_dilation(&p, &d).unwrap().passed());
        }
    }

    #[test]
    fn random_pair_groupoid_round_trip() {
        use crate::random::{aggregation, pair_groupoid_pullback, seeded};
        let mut rng = seeded(3);
        for n in 1..=4 {
            let tau = aggregation(&mut rng, n, 1.max(n / 2));
            let k = tau.tau.iter().max().unwrap() + 1;
            let t = pair_groupoid_pullback(&mut rng, n, tau, vec![2; k], 3).unwrap();
            let d = dilate(&t).unwrap();
            let r = verify_dilation(&t, &d).unwrap();
            assert!(r.passed(), "{r:?}");
            assert!(check_partial_isometries(t.table(), &d).unwrap().passed());
        }
    }
}
