//! Finite-volume ground states: lowest eigenpairs with degeneracy grouping,
//! the shifted Hamiltonian H̃ = H − λ·1, the spectral subadditivity
//! inequality
//!
//!   λ_n + λ_{m\n} − λ_m ≥ −Σ′_{q ∈ Δ_{S_m}(S_n)} ‖Ψ(q)‖
//!                        ≥ −30(2n+1)²‖Ψ‖   (3D cubes),
//!
//! and a variational ground-state certificate: for a ground vector,
//! ω(A†[H, A]) ≥ 0 for every operator A, and the certificate reports the
//! worst violation over a seeded family of random local trial operators.

use crate::dynamics::ChargeSectors;
use crate::error::{Error, Result};
use crate::hamiltonian::{CouplingParams, HamiltonianTerms, TermKey};
use crate::lattice::{boundary_set, ElementKind, Site, SubLattice};
use crate::linkspace::{GaugeGroupModel, GroupKind};
use crate::opalg::{
    eigendecompose_dense, lanczos_extreme, Extreme, FermionPreset, HilbertLayout, LocalOperator,
    SparseOperator, DENSE_DIM_DEFAULT,
};
use crate::sparse::{CsrMatrix, LinearOp};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Lowest eigenvalue, eigenspace basis, degeneracy, and gap.
#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub lambda: f64,
    pub eigenspace: Vec<DVector<C64>>,
    pub degeneracy: usize,
    pub gap: f64,
}

/// Group eigenvalues within max(tol_abs, tol_rel·spread) of the lowest.
fn group_lowest(vals: &[f64], tol_abs: f64, tol_rel: f64) -> (usize, f64) {
    let spread = vals.last().unwrap_or(&0.0) - vals.first().unwrap_or(&0.0);
    let window = tol_abs.max(tol_rel * spread.abs());
    let lambda = vals[0];
    let mut degeneracy = 1;
    while degeneracy < vals.len() && vals[degeneracy] - lambda <= window {
        degeneracy += 1;
    }
    let gap = if degeneracy < vals.len() {
        vals[degeneracy] - lambda
    } else {
        0.0
    };
    (degeneracy, gap)
}

/// Lowest eigenpair(s) of a Hermitian operator with degeneracy detection.
/// Dense below the threshold, Lanczos with full reorthogonalization above.
pub fn ground(h: &SparseOperator, tol: f64) -> Result<GroundStateResult> {
    let n = h.dim();
    if n <= DENSE_DIM_DEFAULT {
        let dev = h.hermitian_deviation();
        if dev > 1e-9 * h.mat.frobenius().max(1.0) {
            return Err(Error::NotHermitian {
                deviation: dev,
                tol: 1e-9,
            });
        }
        let (vals, vecs) = eigendecompose_dense(&h.to_dense());
        let (degeneracy, gap) = group_lowest(&vals, tol, 1e-12);
        let eigenspace = (0..degeneracy).map(|k| vecs.column(k).into_owned()).collect();
        Ok(GroundStateResult {
            lambda: vals[0],
            eigenspace,
            degeneracy,
            gap,
        })
    } else {
        let k = 4.min(n - 1);
        let (vals, vecs) = lanczos_extreme(h, k, tol.max(1e-12), 7, Extreme::Lowest, 2000)?;
        let (degeneracy, gap) = group_lowest(&vals, tol, 1e-12);
        Ok(GroundStateResult {
            lambda: vals[0],
            eigenspace: vecs.into_iter().take(degeneracy).collect(),
            degeneracy,
            gap,
        })
    }
}

/// H̃ = H − λ·1: positive semidefinite with 0 in the spectrum.
pub fn shifted(h: &SparseOperator, result: &GroundStateResult) -> SparseOperator {
    let id = SparseOperator::identity(&h.layout);
    h.add_scaled(&id, C64::new(-result.lambda, 0.0))
        .expect("same layout")
}

struct MatFreeH<'a>(&'a HamiltonianTerms);

impl LinearOp for MatFreeH<'_> {
    fn dim(&self) -> usize {
        self.0.layout.total_dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.0.apply_h(x, y);
    }
}

/// Ground energy of an assembled Hamiltonian, choosing the cheapest exact
/// path: dense, U(1) charge sectors, or matrix-free Lanczos.
pub fn ground_energy(h: &HamiltonianTerms, tol: f64) -> Result<f64> {
    let n = h.layout.total_dim();
    if n <= DENSE_DIM_DEFAULT {
        return Ok(ground(h.h_total()?, tol)?.lambda);
    }
    if matches!(h.model.kind, GroupKind::U1 { .. }) {
        let sectors = crate::dynamics::charge_sectors(h)?;
        return sector_ground_energy(h, &sectors);
    }
    let map = MatFreeH(h);
    let (vals, _) = lanczos_extreme(&map, 1, tol.max(1e-11), 7, Extreme::Lowest, 4000)?;
    Ok(vals[0])
}

/// Minimum over charge sectors of the per-sector lowest eigenvalue.
pub fn sector_ground_energy(h: &HamiltonianTerms, sectors: &ChargeSectors) -> Result<f64> {
    let terms: Vec<(&LocalOperator, C64)> = h.all_terms().map(|t| (t, ONE)).collect();
    let space = &sectors.space;
    let minima = (0..space.len())
        .into_par_iter()
        .map(|s| -> Result<f64> {
            if space.sector(s).is_empty() {
                return Ok(f64::INFINITY);
            }
            let block = space.build_block(s, &terms)?;
            let (vals, _) = eigendecompose_dense(&block);
            Ok(vals[0])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(minima.into_iter().fold(f64::INFINITY, f64::min))
}

/// Result of one spectral subadditivity check.
#[derive(Debug, Clone)]
pub struct SubadditivityReport {
    pub lambda_m: f64,
    pub lambda_n: f64,
    pub lambda_complement: f64,
    /// λ_n + λ_{m\n} − λ_m.
    pub lhs: f64,
    /// −Σ′_{q ∈ Δ_{S_m}(S_n)} ‖Ψ(q)‖ with exact catalog norms.
    pub rhs_exact: f64,
    /// −30(2n+1)²‖Ψ‖ when both volumes are 3D cubes.
    pub rhs_closed_3d: Option<f64>,
    pub pass: bool,
    pub slack: f64,
}

/// Check λ_n + λ_{m\n} − λ_m ≥ −Σ′‖Ψ(q)‖ for a nested pair of volumes.
/// The complement Hamiltonian lives on the induced sublattice of the
/// leftover sites with every catalog term crossing the split removed.
pub fn subadditivity_check(
    m_vol: &SubLattice,
    n_vol: &SubLattice,
    params: CouplingParams,
    model: GaugeGroupModel,
    preset: FermionPreset,
    cube_radii: Option<(usize, usize)>,
    tol: f64,
) -> Result<SubadditivityReport> {
    if !n_vol.is_subset_of(m_vol) {
        return Err(Error::Precondition("subadditivity requires S_n ⊂ S_m".into()));
    }
    let layout_m = HilbertLayout::for_sublattice(m_vol, &model, preset)?;
    let h_m = HamiltonianTerms::assemble(m_vol, params, model, &layout_m)?;
    let layout_n = HilbertLayout::for_sublattice(n_vol, &model, preset)?;
    let h_n = HamiltonianTerms::assemble(n_vol, params, model, &layout_n)?;
    let inner: BTreeSet<Site> = n_vol.sites().iter().copied().collect();
    let leftover: Vec<Site> = m_vol
        .sites()
        .iter()
        .copied()
        .filter(|s| !inner.contains(s))
        .collect();
    let complement = SubLattice::induced(m_vol.dimension(), leftover)?;
    let layout_c = HilbertLayout::for_sublattice(&complement, &model, preset)?;
    let h_c = HamiltonianTerms::assemble(&complement, params, model, &layout_c)?;

    let lambda_m = ground_energy(&h_m, tol)?;
    let lambda_n = ground_energy(&h_n, tol)?;
    let lambda_c = ground_energy(&h_c, tol)?;
    let lhs = lambda_n + lambda_c - lambda_m;

    // Exact right side: catalog norms of the boundary terms of the larger
    // volume.
    let mut rhs_exact = 0.0;
    for e in boundary_set(m_vol, n_vol, ElementKind::Both)? {
        let key = match e {
            crate::lattice::Element::Link(l) => TermKey::Link(l),
            crate::lattice::Element::Plaquette(p) => TermKey::Plaquette(p),
        };
        if let Some(n) = h_m.catalog_norm(&key) {
            rhs_exact -= n;
        }
    }
    let rhs_closed_3d = cube_radii.map(|(n_rad, _m_rad)| {
        let side = (2 * n_rad + 1) as f64;
        -30.0 * side * side * h_m.psi_norm
    });
    let pass = lhs >= rhs_exact - 1e-9;
    Ok(SubadditivityReport {
        lambda_m,
        lambda_n,
        lambda_complement: lambda_c,
        lhs,
        rhs_exact,
        rhs_closed_3d,
        pass,
        slack: lhs - rhs_exact,
    })
}

/// Max over seeded random local trial operators A of −Re ω(A†[H, A]),
/// with ω the vector state of `omega`. A true ground state stays at
/// numerical-noise level; an excited state exposes a strictly positive
/// violation.
pub fn ground_certificate(
    omega: &DVector<C64>,
    h: &HamiltonianTerms,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let layout = &h.layout;
    let n = layout.total_dim();
    if omega.len() != n {
        return Err(Error::FactorMismatch("state dimension mismatch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut h_omega = vec![ZERO; n];
    h.apply_h(omega.as_slice(), &mut h_omega);
    let mut a_omega = vec![ZERO; n];
    let mut h_a_omega = vec![ZERO; n];
    let mut a_h_omega = vec![ZERO; n];
    for _ in 0..trials.max(1) {
        let a = random_local_operator(layout, &mut rng)?;
        // ω(A†[H,A]) = ⟨Aω, H(Aω)⟩ − ⟨Aω, A(Hω)⟩.
        a_omega.fill(ZERO);
        a.apply_full(omega.as_slice(), &mut a_omega, ONE);
        h.apply_h(&a_omega, &mut h_a_omega);
        a_h_omega.fill(ZERO);
        a.apply_full(&h_omega, &mut a_h_omega, ONE);
        let term1: C64 = a_omega
            .iter()
            .zip(&h_a_omega)
            .map(|(x, y)| x.conj() * y)
            .sum();
        let term2: C64 = a_omega
            .iter()
            .zip(&a_h_omega)
            .map(|(x, y)| x.conj() * y)
            .sum();
        let value = (term1 - term2).re;
        worst = worst.max(-value);
    }
    Ok(worst)
}

/// A seeded random local operator: either a random matrix on one link
/// factor, or a random parity-preserving quadratic on a pair of nearby
/// fermionic modes.
fn random_local_operator(
    layout: &Arc<HilbertLayout>,
    rng: &mut ChaCha8Rng,
) -> Result<LocalOperator> {
    let n_links = layout.links().len();
    let n_modes = layout.modes();
    let pick_link = n_modes == 0 || (n_links > 0 && rng.random_bool(0.5));
    if pick_link {
        let slot = rng.random_range(0..n_links);
        let link = layout.links()[slot];
        let d = layout.link_dims()[slot];
        let m = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        LocalOperator::from_parts(layout, Vec::new(), None, vec![(link, m)])
    } else {
        let p = rng.random_range(0..n_modes);
        let q = rng.random_range(0..n_modes);
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        let modes: Vec<usize> = if p == q { vec![p] } else { vec![p, q] };
        let k = modes.len();
        // Random even operator: combination of number operators and a hop.
        let ap = crate::fermions::annihilator_mode(k, 0);
        let mut mat = ap
            .adjoint()
            .matmul(&ap)
            .scaled(C64::new(rng.random_range(-1.0..1.0), 0.0));
        if k == 2 {
            let aq = crate::fermions::annihilator_mode(2, 1);
            let hop = ap.adjoint().matmul(&aq);
            let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            mat = mat
                .add_scaled(&hop, c)
                .add_scaled(&hop.adjoint(), c.conj())
                .add_scaled(&aq.adjoint().matmul(&aq), C64::new(rng.random_range(-1.0..1.0), 0.0));
        }
        LocalOperator::from_parts(layout, modes, Some(mat), Vec::new())
    }
}

/// Convex combinations of eigenspace vector states: the data backing the
/// partial ground-state functionals ω_n.
#[derive(Debug, Clone)]
pub struct PartialGroundState {
    pub volume_sites: usize,
    pub basis: Vec<DVector<C64>>,
    pub weights: Vec<f64>,
}

impl PartialGroundState {
    pub fn uniform(volume_sites: usize, basis: Vec<DVector<C64>>) -> Self {
        let k = basis.len().max(1);
        PartialGroundState {
            volume_sites,
            weights: vec![1.0 / k as f64; basis.len()],
            basis,
        }
    }

    /// ω(A) = Σ w_i ⟨v_i, A v_i⟩ for a sparse observable.
    pub fn expectation(&self, a: &CsrMatrix) -> C64 {
        let mut acc = ZERO;
        let mut av = vec![ZERO; a.ncols()];
        for (v, w) in self.basis.iter().zip(&self.weights) {
            a.matvec_into(v.as_slice(), &mut av);
            let e: C64 = v.iter().zip(&av).map(|(x, y)| x.conj() * y).sum();
            acc += e * C64::new(*w, 0.0);
        }
        acc
    }
}
