//! The operator workbench: tensor embedding with Jordan–Wigner parity
//! bookkeeping, operator norms, commutators, spectra, and charge-sector
//! block decompositions.
//!
//! A full state space factors as (Fock space of the fermion layout) ⊗
//! (link factors in link order). Basis index convention:
//!
//!   index = fock + fock_dim · Σ_k digit_k · stride_k,
//!
//! fermion mode k ↔ bit k of `fock`, link slot 0 is the fastest digit.
//!
//! Operators are built per term on their support factors ([`LocalOperator`])
//! and either embedded into a full sparse matrix, applied matrix-free, or
//! compressed into charge-sector blocks. The embedding of a fermionic block
//! inserts the parity strings exactly: a matrix element O_{n'n} on the
//! support modes contributes O_{n'n}·ε(n', ctx)·ε(n, ctx) at fixed context
//! ctx, where ε counts crossings between occupied context modes and occupied
//! support modes. Disjointly supported operators then graded-commute to
//! machine precision.

use crate::error::{Error, Result};
use crate::fermions::FermionLayout;
use crate::lattice::{Link, Site, SubLattice};
use crate::linkspace::GaugeGroupModel;
use crate::sparse::{CsrMatrix, LinearOp};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Default crossover from dense to iterative linear algebra.
pub const DENSE_DIM_DEFAULT: usize = 2048;
/// Default budget for materializing full sparse operators.
pub const SPARSE_DIM_DEFAULT: usize = 200_000;

/// Fermion content of a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FermionPreset {
    /// Pure gauge: no fermionic factors.
    None,
    /// One spinor component, γ₀ = 1.
    Reduced,
    /// Four spinor components with the chosen γ₀.
    Spinor4(crate::fermions::Gamma0),
}

/// The tensor factorization of a finite-volume state space.
#[derive(Debug, Clone)]
pub struct HilbertLayout {
    fermions: FermionLayout,
    links: Vec<Link>,
    link_dims: Vec<usize>,
    strides: Vec<usize>,
    fock_dim: usize,
    total_dim: usize,
}

impl HilbertLayout {
    pub fn new(fermions: FermionLayout, links: Vec<Link>, link_dims: Vec<usize>) -> Result<Arc<Self>> {
        if links.len() != link_dims.len() {
            return Err(Error::FactorMismatch(
                "links and link_dims must have equal length".into(),
            ));
        }
        let mut sorted = links.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != links {
            return Err(Error::Precondition(
                "link order must be ascending and duplicate-free".into(),
            ));
        }
        let fock_dim = fermions
            .fock_dim()
            .checked_mul(1)
            .filter(|_| fermions.modes() < 40)
            .ok_or_else(|| Error::Precondition("too many fermion modes".into()))?;
        let mut strides = Vec::with_capacity(link_dims.len());
        let mut total = fock_dim;
        let mut stride = 1usize;
        for &d in &link_dims {
            strides.push(stride);
            stride = stride
                .checked_mul(d)
                .ok_or_else(|| Error::Precondition("layout dimension overflow".into()))?;
            total = total
                .checked_mul(d)
                .ok_or_else(|| Error::Precondition("layout dimension overflow".into()))?;
        }
        Ok(Arc::new(HilbertLayout {
            fermions,
            links,
            link_dims,
            strides,
            fock_dim,
            total_dim: total,
        }))
    }

    /// Layout for a sublattice: fermion modes on its sites per preset (color
    /// dimension from the model), one link factor per lattice link.
    pub fn for_sublattice(
        lat: &SubLattice,
        model: &GaugeGroupModel,
        preset: FermionPreset,
    ) -> Result<Arc<Self>> {
        let fermions = match preset {
            FermionPreset::None => FermionLayout::reduced(Vec::new())?,
            FermionPreset::Reduced => {
                FermionLayout::new(lat.sites().to_vec(), 1, model.color_dim(), crate::fermions::Gamma0::Identity)?
            }
            FermionPreset::Spinor4(g0) => {
                FermionLayout::new(lat.sites().to_vec(), 4, model.color_dim(), g0)?
            }
        };
        let links = lat.links().to_vec();
        let dims = vec![model.local_dim(); links.len()];
        HilbertLayout::new(fermions, links, dims)
    }

    pub fn fermions(&self) -> &FermionLayout {
        &self.fermions
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_dims(&self) -> &[usize] {
        &self.link_dims
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn modes(&self) -> usize {
        self.fermions.modes()
    }

    pub fn link_slot(&self, link: &Link) -> Result<usize> {
        self.links
            .binary_search(link)
            .map_err(|_| Error::FactorMismatch(format!("link {link:?} not in layout")))
    }

    pub fn link_stride(&self, slot: usize) -> usize {
        self.strides[slot]
    }

    /// Split a full index into (fock bits, link digit per slot).
    pub fn decompose(&self, idx: usize) -> (usize, Vec<usize>) {
        let fock = idx % self.fock_dim;
        let mut rest = idx / self.fock_dim;
        let digits = self
            .link_dims
            .iter()
            .map(|&d| {
                let g = rest % d;
                rest /= d;
                g
            })
            .collect();
        (fock, digits)
    }

    pub fn compose(&self, fock: usize, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.link_dims.len());
        let mut link = 0usize;
        for (k, &g) in digits.iter().enumerate() {
            link += g * self.strides[k];
        }
        fock + self.fock_dim * link
    }

    /// Whether the sites/links of `other` embed into this layout with the
    /// same ordering conventions.
    pub fn contains_layout(&self, other: &HilbertLayout) -> bool {
        other
            .fermions
            .sites()
            .iter()
            .all(|s| self.fermions.sites().binary_search(s).is_ok())
            && other.fermions.internal_dim() == self.fermions.internal_dim()
            && other
                .links
                .iter()
                .all(|l| self.links.binary_search(l).is_ok())
    }
}

/// Fermionic parity of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

impl Parity {
    fn combine_product(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::Even, p) | (p, Parity::Even) => p,
            (Parity::Odd, Parity::Odd) => Parity::Even,
            _ => Parity::Mixed,
        }
    }

    fn combine_sum(self, other: Parity) -> Parity {
        if self == other {
            self
        } else {
            Parity::Mixed
        }
    }
}

/// Declared support of an operator: the sites and links whose factors it may
/// act on (conservative under arithmetic).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Support {
    pub sites: BTreeSet<Site>,
    pub links: BTreeSet<Link>,
}

impl Support {
    pub fn union(&self, other: &Support) -> Support {
        Support {
            sites: self.sites.union(&other.sites).copied().collect(),
            links: self.links.union(&other.links).copied().collect(),
        }
    }

    /// Site-disjointness (links contribute their endpoints).
    pub fn disjoint(&self, other: &Support) -> bool {
        self.sites.is_disjoint(&other.sites)
    }

    pub fn to_sublattice(&self, dimension: usize) -> Result<SubLattice> {
        SubLattice::new(
            dimension,
            self.sites.iter().copied().collect(),
            self.links.iter().copied().collect(),
        )
    }
}

/// Infer the parity of a Fock-space matrix: every entry must change the
/// occupation count by a fixed parity.
fn fock_parity(mat: &CsrMatrix) -> Parity {
    let mut parity: Option<u32> = None;
    for (r, c, _) in mat.iter() {
        let p = (r.count_ones() + c.count_ones()) % 2;
        match parity {
            None => parity = Some(p),
            Some(q) if q == p => {}
            _ => return Parity::Mixed,
        }
    }
    match parity {
        Some(1) => Parity::Odd,
        _ => Parity::Even,
    }
}

/// An operator stored on its support factors: a matrix over
/// (selected fermion modes) ⊗ (selected link slots), plus the data needed to
/// act on the full space with exact parity strings.
#[derive(Debug, Clone)]
pub struct LocalOperator {
    layout: Arc<HilbertLayout>,
    /// Ascending global mode indices.
    modes: Vec<usize>,
    /// Ascending global link slots.
    slots: Vec<usize>,
    /// Matrix on the sub-space: index = fock + 2^{modes} · (slot digits,
    /// first listed slot fastest).
    mat: CsrMatrix,
    /// Transpose of `mat` for column-wise access.
    mat_t: CsrMatrix,
    parity: Parity,
    support: Support,
}

impl LocalOperator {
    /// Build from a fermionic block on `modes` (matrix over 2^{modes.len()},
    /// local Jordan–Wigner order) and per-link blocks. Either part may be
    /// absent. Mixed-parity fermionic blocks are rejected.
    pub fn from_parts(
        layout: &Arc<HilbertLayout>,
        modes: Vec<usize>,
        fock_part: Option<CsrMatrix>,
        link_parts: Vec<(Link, DMatrix<C64>)>,
    ) -> Result<LocalOperator> {
        let mut sorted = modes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != modes {
            return Err(Error::Precondition(
                "support modes must be ascending and duplicate-free".into(),
            ));
        }
        if modes.iter().any(|&m| m >= layout.modes()) {
            return Err(Error::FactorMismatch("support mode outside layout".into()));
        }
        let sub_fock = 1usize << modes.len();
        let fock = match fock_part {
            Some(m) => {
                if m.nrows() != sub_fock || m.ncols() != sub_fock {
                    return Err(Error::FactorMismatch(format!(
                        "fermionic block is {}×{}, support implies {sub_fock}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m
            }
            None => CsrMatrix::identity(sub_fock),
        };
        let parity = fock_parity(&fock);
        if parity == Parity::Mixed && !modes.is_empty() {
            return Err(Error::MixedParity);
        }
        let mut slots_links: Vec<(usize, &DMatrix<C64>)> = link_parts
            .iter()
            .map(|(l, m)| Ok((layout.link_slot(l)?, m)))
            .collect::<Result<_>>()?;
        slots_links.sort_by_key(|(s, _)| *s);
        for w in slots_links.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Precondition("duplicate link factor".into()));
            }
        }
        for (s, m) in &slots_links {
            let d = layout.link_dims()[*s];
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::FactorMismatch(format!(
                    "link block is {}×{}, factor dimension is {d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        // Assemble: fold links over the fermionic block, ascending slots,
        // so the earlier slot is the faster sub-index.
        let mut mat = fock;
        for (_, m) in &slots_links {
            mat = kron_dense_csr(m, &mat);
        }
        let slots: Vec<usize> = slots_links.iter().map(|(s, _)| *s).collect();
        let mut support = Support::default();
        for &m in &modes {
            let site_idx = m / layout.fermions().internal_dim();
            support.sites.insert(layout.fermions().sites()[site_idx]);
        }
        for &s in &slots {
            let link = layout.links()[s];
            support.links.insert(link);
            support.sites.insert(link.tail);
            support.sites.insert(link.head());
        }
        let mat_t = transpose(&mat);
        Ok(LocalOperator {
            layout: Arc::clone(layout),
            modes,
            slots,
            mat,
            mat_t,
            parity,
            support,
        })
    }

    pub fn identity(layout: &Arc<HilbertLayout>) -> LocalOperator {
        LocalOperator::from_parts(layout, Vec::new(), None, Vec::new()).expect("trivial support")
    }

    pub fn layout(&self) -> &Arc<HilbertLayout> {
        &self.layout
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn sub_dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.mat
    }

    pub fn scaled(&self, s: C64) -> LocalOperator {
        let mut out = self.clone();
        out.mat.scale(s);
        out.mat_t.scale(s);
        out
    }

    pub fn adjoint(&self) -> LocalOperator {
        let mut out = self.clone();
        out.mat = self.mat.adjoint();
        out.mat_t = transpose(&out.mat);
        out
    }

    /// Operator norm of the local block (equals the norm of the embedded
    /// operator: the embedding tensors with identities and ±1 signs).
    pub fn norm(&self) -> f64 {
        if self.mat.nnz() == 0 {
            return 0.0;
        }
        largest_singular_dense(&self.mat.to_dense())
    }

    /// Extend to a larger support (within the same layout); the matrix is
    /// re-embedded with parity strings relative to the enlarged mode set.
    pub fn extend_support(&self, modes: &[usize], slots: &[usize]) -> Result<LocalOperator> {
        for m in &self.modes {
            if !modes.contains(m) {
                return Err(Error::FactorMismatch("extension must contain the support".into()));
            }
        }
        for s in &self.slots {
            if !slots.contains(s) {
                return Err(Error::FactorMismatch("extension must contain the support".into()));
            }
        }
        let plan = EmbedPlan::new(self, modes, slots, &index_dims(&self.layout, slots));
        let sub_fock_big = 1usize << modes.len();
        let big_link_dim: usize = slots.iter().map(|&s| self.layout.link_dims()[s]).product();
        let big_dim = sub_fock_big * big_link_dim;
        let mut triplets = Vec::with_capacity(self.mat.nnz() * (big_dim / self.sub_dim().max(1)));
        plan.for_each_entry(&self.mat, |r, c, v| {
            triplets.push((r as u32, c as u32, v));
        });
        let mat = CsrMatrix::from_triplets(big_dim, big_dim, triplets);
        let mat_t = transpose(&mat);
        Ok(LocalOperator {
            layout: Arc::clone(&self.layout),
            modes: modes.to_vec(),
            slots: slots.to_vec(),
            mat,
            mat_t,
            parity: self.parity,
            support: self.support.clone(),
        })
    }

    /// Sum on the union support.
    pub fn add(&self, other: &LocalOperator, coeff: C64) -> Result<LocalOperator> {
        let (a, b) = align(self, other)?;
        let mat = a.mat.add_scaled(&b.mat, coeff);
        let parity = fock_combined_parity(&a, &b, &mat);
        let mat_t = transpose(&mat);
        Ok(LocalOperator {
            layout: Arc::clone(&self.layout),
            modes: a.modes.clone(),
            slots: a.slots.clone(),
            mat,
            mat_t,
            parity,
            support: self.support.union(&other.support),
        })
    }

    /// Product on the union support.
    pub fn product(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b) = align(self, other)?;
        let mat = a.mat.matmul(&b.mat);
        let parity = self.parity.combine_product(other.parity);
        let mat_t = transpose(&mat);
        Ok(LocalOperator {
            layout: Arc::clone(&self.layout),
            modes: a.modes.clone(),
            slots: a.slots.clone(),
            mat,
            mat_t,
            parity,
            support: self.support.union(&other.support),
        })
    }

    /// Materialize on the full layout.
    pub fn embed(&self) -> Result<SparseOperator> {
        let layout = &self.layout;
        let n_ctx_modes = layout.modes() - self.modes.len();
        let ctx_link_dim: usize = (0..layout.links().len())
            .filter(|s| !self.slots.contains(s))
            .map(|s| layout.link_dims()[s])
            .product();
        let nnz_est = self
            .mat
            .nnz()
            .checked_mul(1usize << n_ctx_modes)
            .and_then(|x| x.checked_mul(ctx_link_dim))
            .ok_or_else(|| Error::Precondition("embedding size overflow".into()))?;
        if nnz_est > 64_000_000 {
            return Err(Error::Budget {
                needed: nnz_est,
                budget: 64_000_000,
                context: "embedding a local operator into the full layout".into(),
            });
        }
        let mut triplets = Vec::with_capacity(nnz_est);
        self.for_each_full_entry(|r, c, v| triplets.push((r as u32, c as u32, v)));
        let mat = CsrMatrix::from_triplets(layout.total_dim(), layout.total_dim(), triplets);
        Ok(SparseOperator {
            layout: Arc::clone(layout),
            mat,
            support: self.support.clone(),
            parity: self.parity,
        })
    }

    /// Enumerate all full-layout matrix entries (row, col, value).
    fn for_each_full_entry<F: FnMut(usize, usize, C64)>(&self, mut f: F) {
        let ctx = ContextIter::new(self);
        ctx.for_each(&self.mat, &mut f);
    }

    /// y += coeff · O x on full-layout vectors, matrix-free.
    pub fn apply_full(&self, x: &[C64], y: &mut [C64], coeff: C64) {
        debug_assert_eq!(x.len(), self.layout.total_dim());
        debug_assert_eq!(y.len(), self.layout.total_dim());
        let ctx = ContextIter::new(self);
        ctx.for_each(&self.mat, &mut |r, c, v| {
            y[r] += coeff * v * x[c];
        });
    }

    /// Nonzero images of a full basis column: (row index, value) pairs.
    pub fn apply_to_basis(&self, col: usize, out: &mut Vec<(usize, C64)>) {
        let layout = &self.layout;
        let fock = col % layout.fock_dim();
        let link = col / layout.fock_dim();
        // Split fock bits into support and context parts.
        let mut sub_f = 0usize;
        let mut ctx_mask = fock;
        for (i, &m) in self.modes.iter().enumerate() {
            if fock >> m & 1 == 1 {
                sub_f |= 1 << i;
            }
            ctx_mask &= !(1 << m);
        }
        // Crossing counts of context-occupied modes below each support mode.
        let mut cnt_below = [0u32; 64];
        for (i, &m) in self.modes.iter().enumerate() {
            cnt_below[i] = (ctx_mask & ((1usize << m) - 1)).count_ones();
        }
        let sign_of = |bits: usize| -> f64 {
            let mut acc = 0u32;
            for (i, c) in cnt_below.iter().enumerate().take(self.modes.len()) {
                if bits >> i & 1 == 1 {
                    acc += *c;
                }
            }
            if acc % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        // Split link digits into support and context parts.
        let mut sub_l = 0usize;
        let mut sub_l_dim = 1usize;
        let mut ctx_link_offset = link;
        for &s in &self.slots {
            let d = layout.link_dims()[s];
            let digit = link / layout.link_stride(s) % d;
            sub_l += digit * sub_l_dim;
            sub_l_dim *= d;
            ctx_link_offset -= digit * layout.link_stride(s);
        }
        let sub_fock_dim = 1usize << self.modes.len();
        let sub_col = sub_f + sub_fock_dim * sub_l;
        let col_sign = sign_of(sub_f);
        // Column of `mat` = row of the transpose.
        let (rows, vals) = self.mat_t.row(sub_col);
        for (&r, &v) in rows.iter().zip(vals) {
            let r = r as usize;
            let rf = r % sub_fock_dim;
            let rl = r / sub_fock_dim;
            // Recompose the full row index.
            let mut fock_row = ctx_mask;
            for (i, &m) in self.modes.iter().enumerate() {
                if rf >> i & 1 == 1 {
                    fock_row |= 1 << m;
                }
            }
            let mut link_row = ctx_link_offset;
            let mut rest = rl;
            for &s in &self.slots {
                let d = layout.link_dims()[s];
                link_row += (rest % d) * layout.link_stride(s);
                rest /= d;
            }
            let row = fock_row + layout.fock_dim() * link_row;
            out.push((row, v * C64::new(col_sign * sign_of(rf), 0.0)));
        }
    }
}

fn index_dims(layout: &Arc<HilbertLayout>, slots: &[usize]) -> Vec<usize> {
    slots.iter().map(|&s| layout.link_dims()[s]).collect()
}

fn fock_combined_parity(a: &LocalOperator, b: &LocalOperator, sum: &CsrMatrix) -> Parity {
    if a.parity == b.parity {
        a.parity
    } else if a.modes.is_empty() {
        fock_parity(sum)
    } else {
        a.parity.combine_sum(b.parity)
    }
}

/// Align two local operators on their union support.
fn align(a: &LocalOperator, b: &LocalOperator) -> Result<(LocalOperator, LocalOperator)> {
    if !Arc::ptr_eq(&a.layout, &b.layout) {
        return Err(Error::FactorMismatch("operators live on different layouts".into()));
    }
    let modes: Vec<usize> = a
        .modes
        .iter()
        .chain(b.modes.iter())
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slots: Vec<usize> = a
        .slots
        .iter()
        .chain(b.slots.iter())
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((a.extend_support(&modes, &slots)?, b.extend_support(&modes, &slots)?))
}

/// Iterates the contexts (absent factors) of a local operator, producing all
/// full-layout entries from the sub-matrix with correct parity signs.
struct EmbedPlan {
    sub_modes: Vec<usize>,
    big_modes: Vec<usize>,
    sub_slots: Vec<usize>,
    big_slots: Vec<usize>,
    big_dims: Vec<usize>,
}

impl EmbedPlan {
    fn new(op: &LocalOperator, big_modes: &[usize], big_slots: &[usize], big_dims: &[usize]) -> Self {
        EmbedPlan {
            sub_modes: op.modes.clone(),
            big_modes: big_modes.to_vec(),
            sub_slots: op.slots.clone(),
            big_slots: big_slots.to_vec(),
            big_dims: big_dims.to_vec(),
        }
    }

    /// Enumerate entries of the operator re-expressed on the big support
    /// (indices relative to the big sub-space, not the full layout).
    fn for_each_entry<F: FnMut(usize, usize, C64)>(&self, mat: &CsrMatrix, f: F) {
        // Positions of the sub modes/slots within the big lists.
        let mode_pos: Vec<usize> = self
            .sub_modes
            .iter()
            .map(|m| self.big_modes.iter().position(|x| x == m).unwrap())
            .collect();
        let slot_pos: Vec<usize> = self
            .sub_slots
            .iter()
            .map(|s| self.big_slots.iter().position(|x| x == s).unwrap())
            .collect();
        generic_embed(
            mat,
            self.sub_modes.len(),
            &mode_pos,
            self.big_modes.len(),
            &slot_pos,
            &self.big_dims,
            f,
        );
    }
}

struct ContextIter<'a> {
    op: &'a LocalOperator,
}

impl<'a> ContextIter<'a> {
    fn new(op: &'a LocalOperator) -> Self {
        ContextIter { op }
    }

    fn for_each<F: FnMut(usize, usize, C64)>(&self, mat: &CsrMatrix, f: &mut F) {
        let layout = &self.op.layout;
        let all_modes: Vec<usize> = (0..layout.modes()).collect();
        let all_slots: Vec<usize> = (0..layout.links().len()).collect();
        let mode_pos: Vec<usize> = self.op.modes.clone();
        let slot_pos: Vec<usize> = self.op.slots.clone();
        let dims: Vec<usize> = layout.link_dims().to_vec();
        let fock_dim = layout.fock_dim();
        generic_embed(
            mat,
            self.op.modes.len(),
            &mode_pos,
            all_modes.len(),
            &slot_pos,
            &dims,
            |r, c, v| {
                // generic_embed produces indices in (big fock) + 2^M·(link mix):
                // for the full layout that is exactly the global convention.
                let rf = r % (1usize << all_modes.len()).max(1);
                let rl = r / (1usize << all_modes.len()).max(1);
                let cf = c % (1usize << all_modes.len()).max(1);
                let cl = c / (1usize << all_modes.len()).max(1);
                f(rf + fock_dim * rl, cf + fock_dim * cl, v);
            },
        );
        let _ = all_slots;
    }
}

/// Core embedding: re-express `mat` (over k modes at `mode_pos` within a set
/// of `n_big_modes`, and slots at `slot_pos` within digits of `big_dims`)
/// as entries over the big index space, with Jordan–Wigner crossing signs.
fn generic_embed<F: FnMut(usize, usize, C64)>(
    mat: &CsrMatrix,
    k_modes: usize,
    mode_pos: &[usize],
    n_big_modes: usize,
    slot_pos: &[usize],
    big_dims: &[usize],
    mut f: F,
) {
    let sub_fock = 1usize << k_modes;
    // Context modes: big positions not in mode_pos.
    let ctx_modes: Vec<usize> = (0..n_big_modes)
        .filter(|p| !mode_pos.contains(p))
        .collect();
    let n_ctx_modes = ctx_modes.len();
    let big_fock = 1usize << n_big_modes;
    // Context slots with their strides in the big link index.
    let mut strides = vec![0usize; big_dims.len()];
    {
        let mut s = 1usize;
        for (i, &d) in big_dims.iter().enumerate() {
            strides[i] = s;
            s *= d;
        }
    }
    let ctx_slots: Vec<usize> = (0..big_dims.len())
        .filter(|p| !slot_pos.contains(p))
        .collect();
    // Sub link index → big link offset.
    let sub_link_dim: usize = slot_pos.iter().map(|&p| big_dims[p]).product();
    let mut sub_link_offset = vec![0usize; sub_link_dim.max(1)];
    for (sl, off) in sub_link_offset.iter_mut().enumerate() {
        let mut rest = sl;
        let mut acc = 0usize;
        for &p in slot_pos {
            let d = big_dims[p];
            acc += (rest % d) * strides[p];
            rest /= d;
        }
        *off = acc;
    }
    // Pre-split the sub matrix entries into (fock parts, link parts).
    let entries: Vec<(usize, usize, usize, usize, C64)> = mat
        .iter()
        .map(|(r, c, v)| {
            let r = r as usize;
            let c = c as usize;
            (r % sub_fock, r / sub_fock, c % sub_fock, c / sub_fock, v)
        })
        .collect();
    // Spread tables for the fock composition.
    let spread_sub: Vec<usize> = (0..sub_fock)
        .map(|s| {
            let mut out = 0usize;
            for (i, &p) in mode_pos.iter().enumerate() {
                if s >> i & 1 == 1 {
                    out |= 1 << p;
                }
            }
            out
        })
        .collect();
    let _ = big_fock;
    for ctx_f in 0..(1usize << n_ctx_modes) {
        // Deposit context bits and compute crossing counts below each mode.
        let mut ctx_spread = 0usize;
        for (j, &p) in ctx_modes.iter().enumerate() {
            if ctx_f >> j & 1 == 1 {
                ctx_spread |= 1 << p;
            }
        }
        let mut sign_table = vec![1.0f64; sub_fock];
        for s in 1..sub_fock {
            let low = s.trailing_zeros() as usize;
            let below = (ctx_spread & ((1usize << mode_pos[low]) - 1)).count_ones();
            let base = sign_table[s & (s - 1)];
            sign_table[s] = if below % 2 == 0 { base } else { -base };
        }
        // Odometer over context link digits.
        let mut ctx_digits = vec![0usize; ctx_slots.len()];
        'contexts: loop {
            let ctx_off: usize = ctx_slots
                .iter()
                .zip(&ctx_digits)
                .map(|(&p, &g)| g * strides[p])
                .sum();
            for &(rf, rl, cf, cl, v) in &entries {
                let sign = sign_table[rf] * sign_table[cf];
                let row = (spread_sub[rf] | ctx_spread)
                    + (1usize << n_big_modes) * (sub_link_offset[rl] + ctx_off);
                let col = (spread_sub[cf] | ctx_spread)
                    + (1usize << n_big_modes) * (sub_link_offset[cl] + ctx_off);
                f(row, col, v * C64::new(sign, 0.0));
            }
            // Advance the odometer; when it wraps, move to the next
            // fermionic context.
            let mut k = 0usize;
            loop {
                if k == ctx_slots.len() {
                    break 'contexts;
                }
                ctx_digits[k] += 1;
                if ctx_digits[k] < big_dims[ctx_slots[k]] {
                    break;
                }
                ctx_digits[k] = 0;
                k += 1;
            }
        }
    }
}

fn transpose(m: &CsrMatrix) -> CsrMatrix {
    let t: Vec<(u32, u32, C64)> = m.iter().map(|(r, c, v)| (c, r, v)).collect();
    CsrMatrix::from_triplets(m.ncols(), m.nrows(), t)
}

/// kron(A, B) with B the faster index.
pub fn kron_dense_csr(a: &DMatrix<C64>, b: &CsrMatrix) -> CsrMatrix {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut t = Vec::with_capacity(a.len() * b.nnz());
    for ia in 0..ar {
        for ja in 0..ac {
            let av = a[(ia, ja)];
            if av == ZERO {
                continue;
            }
            for (rb, cb, vb) in b.iter() {
                t.push((
                    (ia * br + rb as usize) as u32,
                    (ja * bc + cb as usize) as u32,
                    av * vb,
                ));
            }
        }
    }
    CsrMatrix::from_triplets(ar * br, ac * bc, t)
}

/// A full-layout operator in compressed sparse form, with conservative
/// support and a fermionic parity tag.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub layout: Arc<HilbertLayout>,
    pub mat: CsrMatrix,
    pub support: Support,
    pub parity: Parity,
}

impl SparseOperator {
    pub fn identity(layout: &Arc<HilbertLayout>) -> SparseOperator {
        SparseOperator {
            layout: Arc::clone(layout),
            mat: CsrMatrix::identity(layout.total_dim()),
            support: Support::default(),
            parity: Parity::Even,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    fn check_layout(&self, other: &SparseOperator) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) {
            Ok(())
        } else {
            Err(Error::FactorMismatch("operators live on different layouts".into()))
        }
    }

    pub fn add_scaled(&self, other: &SparseOperator, s: C64) -> Result<SparseOperator> {
        self.check_layout(other)?;
        Ok(SparseOperator {
            layout: Arc::clone(&self.layout),
            mat: self.mat.add_scaled(&other.mat, s),
            support: self.support.union(&other.support),
            parity: self.parity.combine_sum(other.parity),
        })
    }

    pub fn matmul(&self, other: &SparseOperator) -> Result<SparseOperator> {
        self.check_layout(other)?;
        Ok(SparseOperator {
            layout: Arc::clone(&self.layout),
            mat: self.mat.matmul(&other.mat),
            support: self.support.union(&other.support),
            parity: self.parity.combine_product(other.parity),
        })
    }

    pub fn scaled(&self, s: C64) -> SparseOperator {
        SparseOperator {
            layout: Arc::clone(&self.layout),
            mat: self.mat.scaled(s),
            support: self.support.clone(),
            parity: self.parity,
        }
    }

    pub fn adjoint(&self) -> SparseOperator {
        SparseOperator {
            layout: Arc::clone(&self.layout),
            mat: self.mat.adjoint(),
            support: self.support.clone(),
            parity: self.parity,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.mat.to_dense()
    }

    /// Recompute the minimal link support by scanning the matrix for factors
    /// on which the operator acts as the identity. Fermionic support is kept
    /// as declared: the parity strings are representation artifacts, and the
    /// algebraic support of a fermionic monomial is its declared mode set.
    pub fn tighten_support(&mut self) {
        let layout = Arc::clone(&self.layout);
        let mut trivial = vec![true; layout.links().len()];
        let fock_dim = layout.fock_dim();
        for (r, c, v) in self.mat.iter() {
            let (rl, cl) = (r as usize / fock_dim, c as usize / fock_dim);
            for (slot, t) in trivial.iter_mut().enumerate() {
                if !*t {
                    continue;
                }
                let d = layout.link_dims()[slot];
                let stride = layout.link_stride(slot);
                let (gr, gc) = (rl / stride % d, cl / stride % d);
                if gr != gc {
                    *t = false;
                }
            }
            let _ = v;
        }
        // A diagonal factor can still be acted on (diagonal ≠ identity):
        // compare entries across the factor digit.
        for (slot, t) in trivial.iter_mut().enumerate() {
            if !*t {
                continue;
            }
            let d = layout.link_dims()[slot];
            let stride = layout.link_stride(slot) * fock_dim;
            let mut seen: HashMap<(usize, usize), C64> = HashMap::new();
            'scan: for (r, c, v) in self.mat.iter() {
                let (r, c) = (r as usize, c as usize);
                let g = r / stride % d;
                let key = (r - g * stride, c - g * stride);
                match seen.entry(key) {
                    std::collections::hash_map::Entry::Occupied(e) => {
                        if (e.get() - v).norm() > 0.0 {
                            *t = false;
                            break 'scan;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(v);
                    }
                }
            }
            // Identity action also requires every digit to appear uniformly;
            // entry counts must be divisible by d with equal values, which the
            // scan above established; a missing digit means a projector, so
            // check the count.
            if *t && self.mat.nnz() % d != 0 {
                *t = false;
            }
        }
        let keep: BTreeSet<Link> = layout
            .links()
            .iter()
            .enumerate()
            .filter(|(s, _)| !trivial[*s])
            .map(|(_, l)| *l)
            .collect();
        self.support.links = self
            .support
            .links
            .intersection(&keep)
            .copied()
            .collect();
        let mut sites: BTreeSet<Site> = self
            .support
            .sites
            .iter()
            .copied()
            .filter(|s| {
                layout
                    .fermions()
                    .site_modes(s)
                    .map(|_| true)
                    .unwrap_or(false)
            })
            .collect();
        for l in &self.support.links {
            sites.insert(l.tail);
            sites.insert(l.head());
        }
        // Sites that carried only removed links and no fermionic modes drop out.
        let mode_sites: BTreeSet<Site> = self
            .support
            .sites
            .iter()
            .copied()
            .filter(|_s| layout.fermions().modes() > 0)
            .collect();
        let _ = mode_sites;
        self.support.sites = sites;
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.mat.hermitian_deviation()
    }
}

impl LinearOp for SparseOperator {
    fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.mat.matvec_into(x, y);
    }
}

/// Commutator AB − BA.
pub fn commutator(a: &SparseOperator, b: &SparseOperator) -> Result<SparseOperator> {
    let ab = a.matmul(b)?;
    let ba = b.matmul(a)?;
    ab.add_scaled(&ba, -ONE)
}

/// Graded commutator AB − (−1)^{|A||B|} BA; both parities must be definite.
pub fn graded_commutator(a: &SparseOperator, b: &SparseOperator) -> Result<SparseOperator> {
    let sign = match (a.parity, b.parity) {
        (Parity::Mixed, _) | (_, Parity::Mixed) => {
            return Err(Error::MixedParity);
        }
        (Parity::Odd, Parity::Odd) => ONE,
        _ => -ONE,
    };
    let ab = a.matmul(b)?;
    let ba = b.matmul(a)?;
    ab.add_scaled(&ba, sign)
}

/// Largest singular value of a dense matrix.
pub fn largest_singular_dense(m: &DMatrix<C64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
}

/// Operator 2-norm: dense SVD below `dense_threshold`, otherwise Lanczos on
/// A†A with a deterministic seed. `tol` is relative.
pub fn operator_norm(op: &SparseOperator, tol: f64) -> Result<f64> {
    operator_norm_with(op, tol, DENSE_DIM_DEFAULT, 0)
}

pub fn operator_norm_with(
    op: &SparseOperator,
    tol: f64,
    dense_threshold: usize,
    seed: u64,
) -> Result<f64> {
    let n = op.dim();
    if n <= dense_threshold {
        return Ok(largest_singular_dense(&op.to_dense()));
    }
    // Lanczos on the Hermitian psd map x ↦ A†(Ax).
    struct AtA<'a> {
        a: &'a CsrMatrix,
    }
    impl LinearOp for AtA<'_> {
        fn dim(&self) -> usize {
            self.a.ncols()
        }
        fn apply(&self, x: &[C64], y: &mut [C64]) {
            let mut mid = vec![ZERO; self.a.nrows()];
            self.a.matvec_into(x, &mut mid);
            self.a.matvec_adjoint_into(&mid, y);
        }
    }
    let map = AtA { a: &op.mat };
    let (vals, _) = lanczos_extreme(&map, 1, tol.max(1e-14), seed, Extreme::Largest, 400)?;
    Ok(vals[0].max(0.0).sqrt())
}

/// Dense spectrum of a Hermitian operator, ascending.
pub fn spectrum_dense(op: &SparseOperator) -> Result<Vec<f64>> {
    let dev = op.hermitian_deviation();
    let scale = op.mat.frobenius().max(1.0);
    if dev > 1e-10 * scale {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol: 1e-10 * scale,
        });
    }
    let mut eig: Vec<f64> = op
        .to_dense()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Hermitian eigendecomposition sorted ascending: (values, vectors).
pub fn eigendecompose_dense(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Lowest,
    Largest,
}

/// Thick-restart Lanczos with full reorthogonalization for extremal
/// eigenpairs of a Hermitian map. Deterministic for a fixed seed.
pub fn lanczos_extreme(
    op: &dyn LinearOp,
    k: usize,
    tol: f64,
    seed: u64,
    which: Extreme,
    max_iters: usize,
) -> Result<(Vec<f64>, Vec<DVector<C64>>)> {
    let n = op.dim();
    if n == 0 || k == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if k >= n {
        return Err(Error::Precondition(format!(
            "requested {k} eigenpairs of a dimension-{n} operator"
        )));
    }
    let m = (2 * k + 30).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6e63_7a6f_73u64);
    let random_vec = |rng: &mut ChaCha8Rng| {
        DVector::from_iterator(
            n,
            (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
        )
    };
    let orthonormalize = |v: &mut DVector<C64>, basis: &[DVector<C64>]| -> f64 {
        for _ in 0..2 {
            for b in basis {
                let c = b.dotc(v);
                *v -= b * c;
            }
        }
        let nn = v.norm();
        if nn > 1e-13 {
            *v /= C64::new(nn, 0.0);
        }
        nn
    };
    let mut basis: Vec<DVector<C64>> = Vec::with_capacity(m);
    let mut images: Vec<DVector<C64>> = Vec::with_capacity(m);
    let mut v0 = random_vec(&mut rng);
    v0 /= C64::new(v0.norm(), 0.0);
    basis.push(v0);
    let mut restarts = 0usize;
    let mut iters = 0usize;
    loop {
        // Expand: apply the operator to each new basis vector, cache the
        // image, and append the reorthogonalized image as the next vector.
        while basis.len() < m && iters < max_iters {
            iters += 1;
            let j = images.len();
            let mut hv = DVector::zeros(n);
            op.apply(basis[j].as_slice(), hv.as_mut_slice());
            images.push(hv.clone());
            let beta = orthonormalize(&mut hv, &basis);
            if beta < 1e-13 {
                // Invariant subspace reached: top up with a random direction.
                let mut f = random_vec(&mut rng);
                if orthonormalize(&mut f, &basis) < 1e-12 {
                    break; // full space spanned
                }
                basis.push(f);
            } else {
                basis.push(hv);
            }
        }
        // Images for any trailing vectors added without one.
        while images.len() < basis.len() {
            let j = images.len();
            iters += 1;
            let mut hv = DVector::zeros(n);
            op.apply(basis[j].as_slice(), hv.as_mut_slice());
            images.push(hv);
        }
        // Rayleigh–Ritz on the spanned space.
        let size = basis.len();
        let mut proj = DMatrix::<C64>::zeros(size, size);
        for j in 0..size {
            for i in 0..size {
                proj[(i, j)] = basis[i].dotc(&images[j]);
            }
        }
        let (vals, vecs) = eigendecompose_dense(&proj);
        let picked: Vec<usize> = match which {
            Extreme::Lowest => (0..k.min(size)).collect(),
            Extreme::Largest => ((size - k.min(size))..size).rev().collect(),
        };
        let mut ritz_vals = Vec::with_capacity(picked.len());
        let mut ritz_vecs: Vec<DVector<C64>> = Vec::with_capacity(picked.len());
        let mut max_resid = 0.0f64;
        for &p in &picked {
            let mut v = DVector::<C64>::zeros(n);
            let mut hv = DVector::<C64>::zeros(n);
            for j in 0..size {
                v += &basis[j] * vecs[(j, p)];
                hv += &images[j] * vecs[(j, p)];
            }
            let vn = v.norm();
            v /= C64::new(vn, 0.0);
            hv /= C64::new(vn, 0.0);
            let lambda = vals[p];
            let resid = (&hv - &v * C64::new(lambda, 0.0)).norm();
            max_resid = max_resid.max(resid / lambda.abs().max(1.0));
            ritz_vals.push(lambda);
            ritz_vecs.push(v);
        }
        let exhausted = size >= n;
        if max_resid <= tol || exhausted {
            return Ok((ritz_vals, ritz_vecs));
        }
        if iters >= max_iters {
            return Err(Error::NonConvergence {
                restarts,
                detail: format!(
                    "residual {max_resid:.3e} above tolerance {tol:.3e} after {iters} applications"
                ),
            });
        }
        // Thick restart from the Ritz vectors plus one fresh direction.
        restarts += 1;
        if restarts > 80 {
            return Err(Error::NonConvergence {
                restarts,
                detail: "restart cap reached".into(),
            });
        }
        basis = Vec::with_capacity(m);
        images = Vec::new();
        for mut v in ritz_vecs {
            if orthonormalize(&mut v, &basis) > 1e-12 {
                basis.push(v);
            }
        }
        let mut f = random_vec(&mut rng);
        if orthonormalize(&mut f, &basis) > 1e-12 {
            basis.push(f);
        }
    }
}

/// Lowest eigenpairs of a Hermitian operator: dense below the threshold,
/// Lanczos above it. Degenerate eigenvalues are grouped within `tol`.
pub fn lowest_eigenpairs(
    op: &SparseOperator,
    k: usize,
    tol: f64,
) -> Result<(Vec<f64>, Vec<DVector<C64>>)> {
    let dev = op.hermitian_deviation();
    let scale = op.mat.frobenius().max(1.0);
    if dev > 1e-9 * scale {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol: 1e-9 * scale,
        });
    }
    let n = op.dim();
    if n <= DENSE_DIM_DEFAULT {
        let (vals, vecs) = eigendecompose_dense(&op.to_dense());
        let k = k.min(n);
        Ok((
            vals[..k].to_vec(),
            (0..k).map(|i| vecs.column(i).into_owned()).collect(),
        ))
    } else {
        lanczos_extreme(op, k, tol, 1, Extreme::Lowest, 600)
    }
}

/// A partition of the layout's basis into conserved-charge sectors.
#[derive(Debug)]
pub struct SectorSpace {
    pub layout: Arc<HilbertLayout>,
    sectors: Vec<Vec<u32>>,
    /// basis index → (sector, position within sector)
    membership: Vec<(u32, u32)>,
}

impl SectorSpace {
    /// Group basis states by a label function.
    pub fn from_labels(layout: &Arc<HilbertLayout>, mut label_of: impl FnMut(usize) -> u64) -> Self {
        let n = layout.total_dim();
        let mut by_label: HashMap<u64, u32> = HashMap::new();
        let mut sectors: Vec<Vec<u32>> = Vec::new();
        let mut membership = vec![(0u32, 0u32); n];
        for idx in 0..n {
            let label = label_of(idx);
            let sec = *by_label.entry(label).or_insert_with(|| {
                sectors.push(Vec::new());
                (sectors.len() - 1) as u32
            });
            membership[idx] = (sec, sectors[sec as usize].len() as u32);
            sectors[sec as usize].push(idx as u32);
        }
        SectorSpace {
            layout: Arc::clone(layout),
            sectors,
            membership,
        }
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn sector(&self, s: usize) -> &[u32] {
        &self.sectors[s]
    }

    pub fn sectors(&self) -> &[Vec<u32>] {
        &self.sectors
    }

    pub fn membership(&self, idx: usize) -> (u32, u32) {
        self.membership[idx]
    }

    pub fn max_sector_dim(&self) -> usize {
        self.sectors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Dense block of Σ coeffᵢ·termᵢ on one sector. Errors if any term maps
    /// a sector state outside the sector (the terms then do not conserve the
    /// labels, and the decomposition is invalid).
    pub fn build_block(&self, s: usize, terms: &[(&LocalOperator, C64)]) -> Result<DMatrix<C64>> {
        let basis = &self.sectors[s];
        let d = basis.len();
        let mut block = DMatrix::<C64>::zeros(d, d);
        let mut out: Vec<(usize, C64)> = Vec::new();
        for (col_pos, &col_idx) in basis.iter().enumerate() {
            for (term, coeff) in terms {
                out.clear();
                term.apply_to_basis(col_idx as usize, &mut out);
                for &(row_idx, v) in &out {
                    let (sec, pos) = self.membership[row_idx];
                    if sec as usize != s {
                        return Err(Error::Precondition(format!(
                            "operator does not preserve the charge sectors: \
                             {col_idx} → {row_idx} crosses sectors"
                        )));
                    }
                    block[(pos as usize, col_pos)] += *coeff * v;
                }
            }
        }
        Ok(block)
    }
}
