//! Heisenberg dynamics: α_t = Ad(e^{itH}), the interaction-picture
//! propagator U(t,s) = e^{itH_loc} e^{i(s−t)H} e^{−isH_loc}, the cocycle
//! τ_t = Ad(e^{itH} e^{−itH_loc}) with its truncated Dyson expansion
//!
//!   τ_t(B) = B + Σ_{n≥1} iⁿ ∫_{0≤t_n≤…≤t_1≤t}
//!            [H_int(t_n), […, [H_int(t_1), B]…]] dtⁿ,
//!
//! whose truncation at order N carries the certified tail
//! Σ_{n>N} (2‖H_int‖|t|)ⁿ/n! · ‖B‖, and the operator initial-value problem
//! f′ = i[f, A(t)] + B(t) solved through its unitary-propagator
//! representation.
//!
//! Two evaluation paths exist everywhere: exact dense eigendecomposition for
//! small state spaces, and a charge-sector path that block-diagonalizes all
//! operators over the conserved U(1) Gauss charges, keeping each block small
//! enough for exact evolution even when the total dimension runs into the
//! millions.

use crate::error::{Error, Result};
use crate::gauge::u1_sector_labels;
use crate::hamiltonian::HamiltonianTerms;
use crate::lattice::Site;
use crate::opalg::{
    eigendecompose_dense, largest_singular_dense, HilbertLayout, LocalOperator, SectorSpace,
    SparseOperator, DENSE_DIM_DEFAULT,
};
use crate::quadrature::gauss_legendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// How to realize the time evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionMethod {
    /// Exact through the eigendecomposition (requires dense-scale dims).
    DenseEigen,
    /// Lanczos exponential action on vectors, with step control.
    Krylov,
}

/// A prepared evolution: the Hamiltonian plus solver parameters and cached
/// spectral data.
pub struct EvolutionPlan {
    pub hamiltonian: Arc<HamiltonianTerms>,
    pub method: EvolutionMethod,
    pub krylov_dim: usize,
    pub step: f64,
    pub tolerance: f64,
    dense: OnceLock<DenseData>,
}

struct DenseData {
    h_vals: Vec<f64>,
    h_vecs: DMatrix<C64>,
    loc_vals: Vec<f64>,
    loc_vecs: DMatrix<C64>,
    h_int_norm: f64,
}

impl EvolutionPlan {
    pub fn dense(hamiltonian: Arc<HamiltonianTerms>) -> Result<Self> {
        let dim = hamiltonian.layout.total_dim();
        if dim > DENSE_DIM_DEFAULT {
            return Err(Error::Budget {
                needed: dim,
                budget: DENSE_DIM_DEFAULT,
                context: "dense evolution plan".into(),
            });
        }
        Ok(EvolutionPlan {
            hamiltonian,
            method: EvolutionMethod::DenseEigen,
            krylov_dim: 0,
            step: 0.0,
            tolerance: 1e-12,
            dense: OnceLock::new(),
        })
    }

    pub fn krylov(hamiltonian: Arc<HamiltonianTerms>, krylov_dim: usize, step: f64, tolerance: f64) -> Self {
        EvolutionPlan {
            hamiltonian,
            method: EvolutionMethod::Krylov,
            krylov_dim: krylov_dim.max(8),
            step: step.abs().max(1e-6),
            tolerance: tolerance.max(1e-14),
            dense: OnceLock::new(),
        }
    }

    pub fn layout(&self) -> &Arc<HilbertLayout> {
        &self.hamiltonian.layout
    }

    fn dense_data(&self) -> Result<&DenseData> {
        if let Some(d) = self.dense.get() {
            return Ok(d);
        }
        let h = self.hamiltonian.h_total()?.to_dense();
        let (h_vals, h_vecs) = eigendecompose_dense(&h);
        let loc = self.hamiltonian.h_loc()?.to_dense();
        let (loc_vals, loc_vecs) = eigendecompose_dense(&loc);
        let h_int_norm = largest_singular_dense(&self.hamiltonian.h_int()?.to_dense());
        Ok(self.dense.get_or_init(|| DenseData {
            h_vals,
            h_vecs,
            loc_vals,
            loc_vecs,
            h_int_norm,
        }))
    }

    pub fn h_int_norm(&self) -> Result<f64> {
        Ok(self.dense_data()?.h_int_norm)
    }

    /// e^{itH} v.
    pub fn evolve_state(&self, v: &[C64], t: f64) -> Result<Vec<C64>> {
        match self.method {
            EvolutionMethod::DenseEigen => {
                let d = self.dense_data()?;
                Ok(conjugate_phase_apply(&d.h_vecs, &d.h_vals, t, v))
            }
            EvolutionMethod::Krylov => self.krylov_exp(v, t),
        }
    }

    fn krylov_exp(&self, v: &[C64], t: f64) -> Result<Vec<C64>> {
        let n = v.len();
        let h = &self.hamiltonian;
        let mut current: Vec<C64> = v.to_vec();
        let mut remaining = t;
        let sign = if t >= 0.0 { 1.0 } else { -1.0 };
        let mut budget = (t.abs() / self.step).ceil() as usize * 4 + 16;
        while remaining.abs() > 1e-15 {
            let tau = sign * remaining.abs().min(self.step);
            let (basis, tri, beta0) = lanczos_basis(h, &current, self.krylov_dim);
            // exp(i·tau·T) e₁ in the Krylov basis.
            let m = tri.nrows();
            let tri_c = tri.map(|x| C64::new(x, 0.0));
            let (tvals, tvecs) = eigendecompose_dense(&tri_c);
            let mut e1 = vec![ZERO; m];
            for j in 0..m {
                let mut acc = ZERO;
                for k in 0..m {
                    acc += tvecs[(j, k)]
                        * C64::from_polar(1.0, tau * tvals[k])
                        * tvecs[(0, k)].conj();
                }
                e1[j] = acc * C64::new(beta0, 0.0);
            }
            // Error heuristic: weight of the last basis vector.
            let tail = e1[m - 1].norm();
            if tail > self.tolerance && m == self.krylov_dim {
                if budget == 0 {
                    return Err(Error::NonConvergence {
                        restarts: 0,
                        detail: format!(
                            "Krylov step control exhausted (tail {tail:.3e} > tol {:.3e})",
                            self.tolerance
                        ),
                    });
                }
                budget -= 1;
                // Halve the step by re-running this segment.
                let half = tau / 2.0;
                let halfway = {
                    let sub = EvolutionPlan {
                        hamiltonian: Arc::clone(&self.hamiltonian),
                        method: EvolutionMethod::Krylov,
                        krylov_dim: self.krylov_dim,
                        step: half.abs().max(1e-9),
                        tolerance: self.tolerance,
                        dense: OnceLock::new(),
                    };
                    sub.krylov_exp(&current, tau)?
                };
                current = halfway;
                remaining -= tau;
                continue;
            }
            let mut next = vec![ZERO; n];
            for (j, b) in basis.iter().enumerate() {
                let c = e1[j];
                if c != ZERO {
                    for (x, bi) in next.iter_mut().zip(b.iter()) {
                        *x += c * *bi;
                    }
                }
            }
            current = next;
            remaining -= tau;
        }
        Ok(current)
    }

    /// Heisenberg evolution α_t(A) = e^{itH} A e^{−itH}.
    pub fn heisenberg(&self, a: &SparseOperator, t: f64) -> Result<SparseOperator> {
        if !Arc::ptr_eq(&a.layout, &self.hamiltonian.layout) {
            return Err(Error::FactorMismatch("operator not on the plan's layout".into()));
        }
        match self.method {
            EvolutionMethod::DenseEigen => {
                let d = self.dense_data()?;
                let ad = a.to_dense();
                let evolved = conjugate_dense(&d.h_vecs, &d.h_vals, t, &ad);
                Ok(SparseOperator {
                    layout: Arc::clone(&a.layout),
                    mat: crate::sparse::CsrMatrix::from_dense(&evolved, 1e-300),
                    support: a.support.clone(),
                    parity: a.parity,
                })
            }
            EvolutionMethod::Krylov => {
                let n = a.dim();
                if n > 16 * DENSE_DIM_DEFAULT {
                    return Err(Error::Budget {
                        needed: n,
                        budget: 16 * DENSE_DIM_DEFAULT,
                        context: "column-wise Krylov Heisenberg evolution".into(),
                    });
                }
                // Column-wise: (α_t(A)) e_j = e^{itH} A e^{−itH} e_j.
                let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
                let mut e = vec![ZERO; n];
                for j in 0..n {
                    e.fill(ZERO);
                    e[j] = ONE;
                    let back = self.evolve_state(&e, -t)?;
                    let mut mid = vec![ZERO; n];
                    a.mat.matvec_into(&back, &mut mid);
                    cols.push(self.evolve_state(&mid, t)?);
                }
                let mut triplets = Vec::new();
                for (j, col) in cols.iter().enumerate() {
                    for (i, v) in col.iter().enumerate() {
                        if v.norm() > 1e-14 {
                            triplets.push((i as u32, j as u32, *v));
                        }
                    }
                }
                Ok(SparseOperator {
                    layout: Arc::clone(&a.layout),
                    mat: crate::sparse::CsrMatrix::from_triplets(n, n, triplets),
                    support: a.support.clone(),
                    parity: a.parity,
                })
            }
        }
    }

    /// The interaction propagator U(t, s) = e^{itH_loc} e^{i(s−t)H} e^{−isH_loc}
    /// as a dense unitary.
    pub fn interaction_propagator(&self, t: f64, s: f64) -> Result<DMatrix<C64>> {
        let d = self.dense_data()?;
        let n = d.h_vals.len();
        let mut m = DMatrix::identity(n, n);
        m = phase_matrix(&d.loc_vecs, &d.loc_vals, t) * phase_matrix(&d.h_vecs, &d.h_vals, s - t) * m;
        Ok(phase_diag_right(m, &d.loc_vecs, &d.loc_vals, -s))
    }

    /// The cocycle τ_t(B) = e^{itH} e^{−itH_loc} B e^{itH_loc} e^{−itH},
    /// computed exactly.
    pub fn cocycle_exact(&self, b: &DMatrix<C64>, t: f64) -> Result<DMatrix<C64>> {
        let u = self.interaction_propagator(0.0, t)?;
        Ok(&u * b * u.adjoint())
    }
}

fn conjugate_phase_apply(vecs: &DMatrix<C64>, vals: &[f64], t: f64, v: &[C64]) -> Vec<C64> {
    let n = vals.len();
    let vv = DVector::from_column_slice(v);
    let mut coeff = vecs.adjoint() * vv;
    for k in 0..n {
        coeff[k] *= C64::from_polar(1.0, t * vals[k]);
    }
    let out = vecs * coeff;
    out.as_slice().to_vec()
}

/// U e^{itΛ} U†.
fn phase_matrix(vecs: &DMatrix<C64>, vals: &[f64], t: f64) -> DMatrix<C64> {
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| C64::from_polar(1.0, t * l)),
    ));
    vecs * phases * vecs.adjoint()
}

fn phase_diag_right(m: DMatrix<C64>, vecs: &DMatrix<C64>, vals: &[f64], t: f64) -> DMatrix<C64> {
    m * phase_matrix(vecs, vals, t)
}

/// e^{itΛ}-conjugation of a dense operator in the eigenbasis of H.
fn conjugate_dense(vecs: &DMatrix<C64>, vals: &[f64], t: f64, a: &DMatrix<C64>) -> DMatrix<C64> {
    let ahat = vecs.adjoint() * a * vecs;
    let n = vals.len();
    let mut out = ahat;
    for r in 0..n {
        for c in 0..n {
            out[(r, c)] *= C64::from_polar(1.0, t * (vals[r] - vals[c]));
        }
    }
    vecs * out * vecs.adjoint()
}

/// Plain Lanczos basis of the Hamiltonian from a start vector: returns the
/// orthonormal basis, the real tridiagonal projection, and ‖v₀‖.
fn lanczos_basis(h: &HamiltonianTerms, v0: &[C64], m: usize) -> (Vec<Vec<C64>>, DMatrix<f64>, f64) {
    let n = v0.len();
    let beta0 = v0.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m);
    basis.push(v0.iter().map(|x| x / C64::new(beta0, 0.0)).collect());
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    let mut w = vec![ZERO; n];
    for j in 0..m {
        h.apply_h(&basis[j], &mut w);
        // Orthogonalize (full, for robustness at these sizes).
        let mut alpha = 0.0;
        for (i, b) in basis.iter().enumerate() {
            let c: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
            if i == j {
                alpha = c.re;
            }
            for (wk, bk) in w.iter_mut().zip(b.iter()) {
                *wk -= c * *bk;
            }
        }
        alphas.push(alpha);
        let beta = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if j + 1 == m || beta < 1e-13 {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / C64::new(beta, 0.0)).collect());
    }
    let k = alphas.len();
    let mut tri = DMatrix::zeros(k, k);
    for (i, a) in alphas.iter().enumerate() {
        tri[(i, i)] = *a;
    }
    for (i, b) in betas.iter().enumerate().take(k - 1) {
        tri[(i, i + 1)] = *b;
        tri[(i + 1, i)] = *b;
    }
    (basis, tri, beta0)
}

/// Result of a truncated Dyson expansion of the cocycle.
pub struct DysonResult {
    pub operator: DMatrix<C64>,
    /// Certified series tail Σ_{n>N} (2‖H_int‖|t|)ⁿ/n! · ‖B‖.
    pub tail_bound: f64,
    /// Difference between the panel count used and its doubling.
    pub quadrature_defect: f64,
}

/// Analytic series tail Σ_{n>N} xⁿ/n! · scale with x = 2‖H_int‖|t|.
pub fn dyson_tail_bound(h_int_norm: f64, t: f64, order: usize, b_norm: f64) -> f64 {
    let x = 2.0 * h_int_norm * t.abs();
    let mut term = b_norm;
    for n in 1..=order {
        term *= x / n as f64;
    }
    // term = x^order/order! · ‖B‖; sum the tail from order+1.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = order + 1;
    loop {
        term *= x / n as f64;
        // Kahan accumulation.
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        if term <= 1e-18 * sum.max(f64::MIN_POSITIVE) || n > order + 600 {
            break;
        }
        n += 1;
    }
    sum
}

/// Per-level Gauss–Legendre node count from the integrand's bandwidth: the
/// u-derivatives of every level are bounded by powers of the phase spread Ω,
/// so the n-node error scales like (Ω|t|/4)^{2n}/(2n)!.
fn dyson_node_count(spread: f64, t: f64) -> usize {
    let target = 1e-13f64;
    let half_band = (spread * t.abs() / 4.0).max(1e-6);
    let mut n_gl = 3usize;
    while n_gl < 24 {
        let log_err = 2.0 * n_gl as f64 * half_band.ln()
            - (1..=2 * n_gl).map(|k| (k as f64).ln()).sum::<f64>();
        if log_err < target.ln() {
            break;
        }
        n_gl += 1;
    }
    n_gl
}

/// Nested-quadrature evaluation on one dense block: coarse and refined node
/// counts, returning (result, defect).
fn dyson_block(
    h_loc: &DMatrix<C64>,
    h_int: &DMatrix<C64>,
    b: &DMatrix<C64>,
    t: f64,
    order: usize,
    n_gl: usize,
    parallel: bool,
) -> (DMatrix<C64>, f64) {
    let (loc_vals, loc_vecs) = eigendecompose_dense(h_loc);
    let hat_int = loc_vecs.adjoint() * h_int * &loc_vecs;
    let hat_b = loc_vecs.adjoint() * b * &loc_vecs;
    let coarse = dyson_recurse(&hat_int, &loc_vals, &hat_b, order, t, n_gl, parallel);
    let fine = dyson_recurse(&hat_int, &loc_vals, &hat_b, order, t, n_gl + 2, parallel);
    let defect = largest_singular_dense(&(&fine - &coarse));
    (&loc_vecs * fine * loc_vecs.adjoint(), defect)
}

/// Truncated Dyson expansion of τ_t(B) to the given order, with nested
/// integrals evaluated by iterated Gauss–Legendre in the H_loc eigenbasis.
///
/// When the model conserves U(1) Gauss charges and B is block-diagonal over
/// them, the recursion runs per charge sector; otherwise one dense block.
pub fn dyson_cocycle(
    plan: &EvolutionPlan,
    b: &DMatrix<C64>,
    t: f64,
    order: usize,
) -> Result<DysonResult> {
    let d = plan.dense_data()?;
    let b_norm = largest_singular_dense(b);
    let tail_bound = dyson_tail_bound(d.h_int_norm, t, order, b_norm);
    if d.h_int_norm == 0.0 {
        return Ok(DysonResult {
            operator: b.clone(),
            tail_bound: 0.0,
            quadrature_defect: 0.0,
        });
    }
    let spread = d.loc_vals.last().copied().unwrap_or(0.0)
        - d.loc_vals.first().copied().unwrap_or(0.0);
    let n_gl = dyson_node_count(spread, t);

    // Sector fast path: all Hamiltonian terms preserve the U(1) charge
    // labels; if B does too, every block evolves independently.
    if matches!(plan.hamiltonian.model.kind, crate::linkspace::GroupKind::U1 { .. }) {
        if let Some(result) = dyson_sector_path(plan, b, t, order, n_gl)? {
            return Ok(DysonResult {
                operator: result.0,
                tail_bound,
                quadrature_defect: result.1,
            });
        }
    }

    let leaves = (n_gl + 2).pow(order as u32) as f64;
    let flop_estimate = leaves * 2.0 * (b.nrows() as f64).powi(3);
    if flop_estimate > 5e12 {
        return Err(Error::Quadrature(format!(
            "nested Dyson quadrature too large: ~{flop_estimate:.1e} flops at order {order}, \
             dimension {}, {n_gl} nodes per level",
            b.nrows()
        )));
    }
    let h_loc = plan.hamiltonian.h_loc()?.to_dense();
    let h_int = plan.hamiltonian.h_int()?.to_dense();
    let (operator, quadrature_defect) = dyson_block(&h_loc, &h_int, b, t, order, n_gl, true);
    Ok(DysonResult {
        operator,
        tail_bound,
        quadrature_defect,
    })
}

/// Try the per-sector evaluation; returns None when B is not block-diagonal
/// over the charge sectors.
fn dyson_sector_path(
    plan: &EvolutionPlan,
    b: &DMatrix<C64>,
    t: f64,
    order: usize,
    n_gl: usize,
) -> Result<Option<(DMatrix<C64>, f64)>> {
    let h = &plan.hamiltonian;
    let sectors = charge_sectors(h)?;
    let space = &sectors.space;
    let n = h.layout.total_dim();
    // B must vanish between different sectors.
    for c in 0..n {
        let (sec_c, _) = space.membership(c);
        for r in 0..n {
            if b[(r, c)] != ZERO && space.membership(r).0 != sec_c {
                return Ok(None);
            }
        }
    }
    let loc_terms: Vec<(&LocalOperator, C64)> = h.local_terms.iter().map(|t| (t, ONE)).collect();
    let int_terms: Vec<(&LocalOperator, C64)> = h.catalog.values().map(|t| (t, ONE)).collect();
    let blocks = (0..space.len())
        .into_par_iter()
        .map(|s| -> Result<(DMatrix<C64>, f64)> {
            let basis = space.sector(s);
            let h_loc = space.build_block(s, &loc_terms)?;
            let h_int = space.build_block(s, &int_terms)?;
            let mut b_block = DMatrix::<C64>::zeros(basis.len(), basis.len());
            for (j, &cj) in basis.iter().enumerate() {
                for (i, &ci) in basis.iter().enumerate() {
                    b_block[(i, j)] = b[(ci as usize, cj as usize)];
                }
            }
            Ok(dyson_block(&h_loc, &h_int, &b_block, t, order, n_gl, false))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::<C64>::zeros(n, n);
    let mut defect = 0.0f64;
    for (s, (block, d)) in blocks.iter().enumerate() {
        let basis = space.sector(s);
        for (j, &cj) in basis.iter().enumerate() {
            for (i, &ci) in basis.iter().enumerate() {
                out[(ci as usize, cj as usize)] = block[(i, j)];
            }
        }
        defect = defect.max(*d);
    }
    Ok(Some((out, defect)))
}

/// F(k, s, X) = X + i ∫₀ˢ F(k−1, u, [Ĥ_int(u), X]) du, so that
/// F(N, t, B̂) is the order-N partial sum of the cocycle series. The top
/// level fans out across threads; the subtrees are independent.
fn dyson_recurse(
    hat_int: &DMatrix<C64>,
    loc_vals: &[f64],
    x: &DMatrix<C64>,
    k: usize,
    s: f64,
    n_gl: usize,
    parallel: bool,
) -> DMatrix<C64> {
    if k == 0 {
        return x.clone();
    }
    let (nodes, weights) = gauss_legendre(n_gl);
    let eval_node = |(xi, wi): (&f64, &f64)| -> DMatrix<C64> {
        let u = 0.5 * s * (xi + 1.0);
        let w = 0.5 * s * wi;
        // Ĥ_int(u): entrywise phases e^{iu(ε_r − ε_c)}.
        let comm = phase_commutator(hat_int, loc_vals, u, x);
        dyson_recurse(hat_int, loc_vals, &comm, k - 1, u, n_gl, false) * C64::new(w, 0.0)
    };
    let acc: DMatrix<C64> = if parallel {
        nodes
            .par_iter()
            .zip(weights.par_iter())
            .map(eval_node)
            .reduce(|| DMatrix::zeros(x.nrows(), x.ncols()), |a, b| a + b)
    } else {
        let mut acc = DMatrix::zeros(x.nrows(), x.ncols());
        for nw in nodes.iter().zip(weights.iter()) {
            acc += eval_node(nw);
        }
        acc
    };
    x + acc * I
}

/// [Ĥ_int(u), X] with Ĥ_int(u)_{rc} = e^{iu(ε_r−ε_c)} Ĥ_int_{rc}.
fn phase_commutator(
    hat_int: &DMatrix<C64>,
    loc_vals: &[f64],
    u: f64,
    x: &DMatrix<C64>,
) -> DMatrix<C64> {
    let n = loc_vals.len();
    let mut twisted = hat_int.clone();
    for r in 0..n {
        for c in 0..n {
            if twisted[(r, c)] != ZERO {
                twisted[(r, c)] *= C64::from_polar(1.0, u * (loc_vals[r] - loc_vals[c]));
            }
        }
    }
    &twisted * x - x * &twisted
}

/// Solve f′ = i[f, A(t)] + B(t), f(t₀) = f₀ by the unitary-propagator
/// representation f(t) = V(t)(f₀ + ∫ V†BV ds)V(t)†, where V solves
/// V′ = −iA(t)V with a fourth-order Magnus integrator; the accumulated
/// integral uses Simpson's rule on the same grid.
pub fn commutator_ivp(
    a: &dyn Fn(f64) -> DMatrix<C64>,
    b: &dyn Fn(f64) -> DMatrix<C64>,
    f0: &DMatrix<C64>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<DMatrix<C64>> {
    let n = f0.nrows();
    if steps == 0 {
        return Err(Error::Quadrature("commutator_ivp needs at least one step".into()));
    }
    let h = (t1 - t0) / steps as f64;
    let mut v = DMatrix::<C64>::identity(n, n);
    let mut integral = DMatrix::<C64>::zeros(n, n);
    let sandwich = |v: &DMatrix<C64>, t: f64| -> DMatrix<C64> { v.adjoint() * b(t) * v };
    for k in 0..steps {
        let t = t0 + h * k as f64;
        // Simpson contribution over [t, t+h] needs V at the midpoint.
        let g0 = sandwich(&v, t);
        let v_half = magnus_step(a, t, h / 2.0) * &v;
        let g_half = sandwich(&v_half, t + h / 2.0);
        let v_full = magnus_step(a, t + h / 2.0, h / 2.0) * v_half;
        let g1 = sandwich(&v_full, t + h);
        integral += (g0 + g_half * C64::new(4.0, 0.0) + g1) * C64::new(h / 6.0, 0.0);
        v = v_full;
    }
    Ok(&v * (f0 + integral) * v.adjoint())
}

/// Fourth-order Magnus step for V′ = −iA(t)V over [t, t+h], built from the
/// two-point Gauss nodes.
fn magnus_step(a: &dyn Fn(f64) -> DMatrix<C64>, t: f64, h: f64) -> DMatrix<C64> {
    let c1 = 0.5 - 3.0f64.sqrt() / 6.0;
    let c2 = 0.5 + 3.0f64.sqrt() / 6.0;
    let a1 = a(t + c1 * h);
    let a2 = a(t + c2 * h);
    let sym = (&a1 + &a2) * C64::new(0.5 * h, 0.0);
    let comm = (&a1 * &a2 - &a2 * &a1) * C64::new(3.0f64.sqrt() / 12.0 * h * h, 0.0);
    // Ω = −i·sym + comm is anti-Hermitian; exponentiate through iΩ.
    let omega_i = sym + comm * I; // i·Ω... (−i·sym + comm) times i = sym + i·comm
    let (vals, vecs) = eigendecompose_dense(&omega_i);
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| C64::from_polar(1.0, -l)),
    ));
    &vecs * phases * vecs.adjoint()
}

/// One row of a finite-volume convergence table.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    /// Number of sites of the larger volume of the pair.
    pub volume_sites: usize,
    pub t: f64,
    /// ‖α^{S_{k+1}}_t(A) − α^{S_k}_t(A)‖.
    pub diff_norm: f64,
}

/// The U(1) charge-sector decomposition of a layout, with the site list the
/// labels were computed over.
pub struct ChargeSectors {
    pub space: Arc<SectorSpace>,
    pub sites: Vec<Site>,
}

pub fn charge_sectors(h: &HamiltonianTerms) -> Result<ChargeSectors> {
    let layout = &h.layout;
    let sites: Vec<Site> = if layout.fermions().modes() > 0 {
        layout.fermions().sites().to_vec()
    } else {
        let mut set = BTreeSet::new();
        for l in layout.links() {
            set.insert(l.tail);
            set.insert(l.head());
        }
        set.into_iter().collect()
    };
    let labels = u1_sector_labels(layout, &h.model, &sites);
    let space = Arc::new(SectorSpace::from_labels(layout, |i| {
        (labels[i] & u64::MAX as u128) as u64 ^ ((labels[i] >> 64) as u64)
    }));
    Ok(ChargeSectors { space, sites })
}

/// Per-sector exact evolution: max over sectors of
/// ‖[D, α_t(A)]‖ for each t in the grid. All operators must preserve the
/// charge sectors (verified during block construction).
pub fn sector_commutator_norms(
    h: &HamiltonianTerms,
    sectors: &ChargeSectors,
    a: &LocalOperator,
    d: &LocalOperator,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    let terms: Vec<(&LocalOperator, C64)> = h.all_terms().map(|t| (t, ONE)).collect();
    let space = &sectors.space;
    let maxima = (0..space.len())
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let dim = space.sector(s).len();
            let mut out = vec![0.0; t_grid.len()];
            if dim == 0 {
                return Ok(out);
            }
            let h_block = space.build_block(s, &terms)?;
            let a_block = space.build_block(s, &[(a, ONE)])?;
            let d_block = space.build_block(s, &[(d, ONE)])?;
            if a_block.norm() == 0.0 && d_block.norm() == 0.0 {
                return Ok(out);
            }
            let (vals, vecs) = eigendecompose_dense(&h_block);
            for (ti, &t) in t_grid.iter().enumerate() {
                let at = conjugate_dense(&vecs, &vals, t, &a_block);
                let comm = &d_block * &at - &at * &d_block;
                out[ti] = largest_singular_dense(&comm);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = vec![0.0; t_grid.len()];
    for m in maxima {
        for (r, v) in result.iter_mut().zip(&m) {
            *r = f64::max(*r, *v);
        }
    }
    Ok(result)
}

/// ‖α^{big}_t(A) − α^{small}_t(A)‖ for each t, where `small` is assembled on
/// its own layout and embedded; everything proceeds sector by sector.
pub fn sector_evolution_difference(
    h_big: &HamiltonianTerms,
    big_sectors: &ChargeSectors,
    h_small: &HamiltonianTerms,
    a_small: &LocalOperator,
    a_big: &LocalOperator,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    let small_layout = &h_small.layout;
    let big_layout = &h_big.layout;
    if !big_layout.contains_layout(small_layout) {
        return Err(Error::FactorMismatch(
            "small layout does not embed into the big layout".into(),
        ));
    }
    // Evolve A in the small volume, sector by sector, storing dense blocks.
    let small_secs = charge_sectors(h_small)?;
    let small_terms: Vec<(&LocalOperator, C64)> = h_small.all_terms().map(|t| (t, ONE)).collect();
    let n_small_sectors = small_secs.space.len();
    let mut evolved: Vec<Vec<DMatrix<C64>>> = Vec::with_capacity(t_grid.len());
    for _ in t_grid {
        evolved.push(Vec::with_capacity(n_small_sectors));
    }
    let per_sector: Vec<Vec<DMatrix<C64>>> = (0..n_small_sectors)
        .into_par_iter()
        .map(|s| -> Result<Vec<DMatrix<C64>>> {
            let h_block = small_secs.space.build_block(s, &small_terms)?;
            let a_block = small_secs.space.build_block(s, &[(a_small, ONE)])?;
            let (vals, vecs) = eigendecompose_dense(&h_block);
            Ok(t_grid
                .iter()
                .map(|&t| conjugate_dense(&vecs, &vals, t, &a_block))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    for blocks in per_sector {
        for (ti, b) in blocks.into_iter().enumerate() {
            evolved[ti].push(b);
        }
    }
    // Index maps from the small layout into the big layout.
    let internal = big_layout.fermions().internal_dim();
    let mode_map: Vec<usize> = small_layout
        .fermions()
        .sites()
        .iter()
        .flat_map(|site| {
            let bi = big_layout
                .fermions()
                .site_index(site)
                .expect("checked containment");
            (0..internal).map(move |c| bi * internal + c)
        })
        .collect();
    let slot_map: Vec<usize> = small_layout
        .links()
        .iter()
        .map(|l| big_layout.link_slot(l).expect("checked containment"))
        .collect();
    let big_terms: Vec<(&LocalOperator, C64)> = h_big.all_terms().map(|t| (t, ONE)).collect();
    let space = &big_sectors.space;
    let maxima = (0..space.len())
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let basis = space.sector(s);
            let dim = basis.len();
            let mut out = vec![0.0; t_grid.len()];
            if dim == 0 {
                return Ok(out);
            }
            let h_block = space.build_block(s, &big_terms)?;
            let a_block = space.build_block(s, &[(a_big, ONE)])?;
            let (vals, vecs) = eigendecompose_dense(&h_block);
            // Decompose each big basis state into (small index, context, sign).
            let decomp: Vec<(usize, u128, f64)> = basis
                .iter()
                .map(|&idx| decompose_against_sub(big_layout, small_layout, &mode_map, &slot_map, idx as usize))
                .collect();
            for (ti, &t) in t_grid.iter().enumerate() {
                let at_big = conjugate_dense(&vecs, &vals, t, &a_block);
                let mut emb = DMatrix::<C64>::zeros(dim, dim);
                for (j, &(sub_j, ctx_j, sign_j)) in decomp.iter().enumerate() {
                    let (sec_j, pos_j) = small_secs.space.membership(sub_j);
                    for (i, &(sub_i, ctx_i, sign_i)) in decomp.iter().enumerate() {
                        if ctx_i != ctx_j {
                            continue;
                        }
                        let (sec_i, pos_i) = small_secs.space.membership(sub_i);
                        if sec_i != sec_j {
                            continue;
                        }
                        let v = evolved[ti][sec_j as usize][(pos_i as usize, pos_j as usize)];
                        if v != ZERO {
                            emb[(i, j)] = v * C64::new(sign_i * sign_j, 0.0);
                        }
                    }
                }
                out[ti] = largest_singular_dense(&(at_big - emb));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = vec![0.0; t_grid.len()];
    for m in maxima {
        for (r, v) in result.iter_mut().zip(&m) {
            *r = f64::max(*r, *v);
        }
    }
    Ok(result)
}

/// Split a big-layout basis index into the sub-layout index, a context key
/// for the remaining factors, and the Jordan–Wigner crossing sign.
fn decompose_against_sub(
    big: &Arc<HilbertLayout>,
    small: &Arc<HilbertLayout>,
    mode_map: &[usize],
    slot_map: &[usize],
    idx: usize,
) -> (usize, u128, f64) {
    let fock = idx % big.fock_dim();
    let link = idx / big.fock_dim();
    let mut sub_fock = 0usize;
    let mut ctx_mask = fock;
    for (i, &m) in mode_map.iter().enumerate() {
        if fock >> m & 1 == 1 {
            sub_fock |= 1 << i;
        }
        ctx_mask &= !(1 << m);
    }
    // Crossing sign: context-occupied modes below each occupied sub mode.
    let mut crossings = 0u32;
    for (i, &m) in mode_map.iter().enumerate() {
        if sub_fock >> i & 1 == 1 {
            crossings += (ctx_mask & ((1usize << m) - 1)).count_ones();
        }
    }
    let sign = if crossings % 2 == 0 { 1.0 } else { -1.0 };
    let mut sub_link = 0usize;
    let mut sub_dim = 1usize;
    let mut ctx_link = link;
    for (k, &slot) in slot_map.iter().enumerate() {
        let d = big.link_dims()[slot];
        let digit = link / big.link_stride(slot) % d;
        sub_link += digit * sub_dim;
        sub_dim *= d;
        ctx_link -= digit * big.link_stride(slot);
        let _ = k;
    }
    let sub_idx = sub_fock + small.fock_dim() * sub_link;
    let ctx = (ctx_mask as u128) | ((ctx_link as u128) << 40);
    (sub_idx, ctx, sign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::CouplingParams;
    use crate::lattice::SubLattice;
    use crate::linkspace::GaugeGroupModel;
    use crate::opalg::{operator_norm, FermionPreset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_plan(n_sites: usize, cutoff: u32, m: f64) -> (Arc<HamiltonianTerms>, EvolutionPlan) {
        let sites: Vec<Site> = (0..n_sites as i32).map(|x| Site::new(x, 0, 0)).collect();
        let lat = SubLattice::induced(1, sites).unwrap();
        let model = GaugeGroupModel::u1(cutoff);
        let layout = HilbertLayout::for_sublattice(&lat, &model, FermionPreset::Reduced).unwrap();
        let params = CouplingParams::new(1.0, 1.0, m).unwrap();
        let h = Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout).unwrap());
        let plan = EvolutionPlan::dense(Arc::clone(&h)).unwrap();
        (h, plan)
    }

    fn local_a(h: &HamiltonianTerms) -> SparseOperator {
        // Electric operator on the first link: a convenient local observable.
        let layout = &h.layout;
        LocalOperator::from_parts(
            layout,
            Vec::new(),
            None,
            vec![(
                layout.links()[0],
                crate::linkspace::electric_operator(&h.model),
            )],
        )
        .unwrap()
        .embed()
        .unwrap()
    }

    #[test]
    fn heisenberg_trivials() {
        let (h, plan) = chain_plan(2, 1, 0.5);
        let a = local_a(&h);
        // t = 0 is the identity map.
        let a0 = plan.heisenberg(&a, 0.0).unwrap();
        assert!((a0.to_dense() - a.to_dense()).norm() < 1e-12);
        // H is invariant.
        let ht = plan.heisenberg(h.h_total().unwrap(), 1.3).unwrap();
        assert!((ht.to_dense() - h.h_total().unwrap().to_dense()).norm() < 1e-9);
        // Norm preservation.
        let at = plan.heisenberg(&a, 0.7).unwrap();
        let n0 = operator_norm(&a, 1e-10).unwrap();
        let nt = operator_norm(&at, 1e-10).unwrap();
        assert!((n0 - nt).abs() < 1e-9);
    }

    #[test]
    fn heisenberg_group_law() {
        let (h, plan) = chain_plan(2, 1, 0.5);
        let a = local_a(&h);
        let ab = plan.heisenberg(&plan.heisenberg(&a, 0.4).unwrap(), 0.3).unwrap();
        let once = plan.heisenberg(&a, 0.7).unwrap();
        assert!((ab.to_dense() - once.to_dense()).norm() < 1e-9);
    }

    #[test]
    fn krylov_matches_dense_evolution() {
        let (h, plan) = chain_plan(3, 1, 0.5);
        let kry = EvolutionPlan::krylov(Arc::clone(&h), 30, 0.25, 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = h.layout.total_dim();
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for t in [0.3, -0.9] {
            let dense = plan.evolve_state(&v, t).unwrap();
            let fast = kry.evolve_state(&v, t).unwrap();
            let diff: f64 = dense
                .iter()
                .zip(&fast)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-9, "Krylov deviates by {diff} at t = {t}");
            // Unitarity of the propagator action.
            let n0: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let n1: f64 = fast.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            assert!((n0 - n1).abs() < 1e-9);
        }
    }

    #[test]
    fn interaction_propagator_properties() {
        let (h, plan) = chain_plan(2, 1, 0.5);
        let n = h.layout.total_dim();
        // U(t, t) = 1.
        let u = plan.interaction_propagator(0.8, 0.8).unwrap();
        assert!((u - DMatrix::<C64>::identity(n, n)).norm() < 1e-10);
        // U(t, s)† = U(s, t).
        let a = plan.interaction_propagator(0.3, 0.9).unwrap();
        let b = plan.interaction_propagator(0.9, 0.3).unwrap();
        assert!((a.adjoint() - b).norm() < 1e-10);
    }

    #[test]
    fn propagator_trivial_when_no_interaction() {
        // Pure gauge single link: H = H_loc, so U(t,s) = 1.
        let lat =
            SubLattice::induced(1, vec![Site::new(0, 0, 0), Site::new(1, 0, 0)]).unwrap();
        let model = GaugeGroupModel::u1(1);
        let layout = HilbertLayout::for_sublattice(&lat, &model, FermionPreset::None).unwrap();
        let params = CouplingParams::new(1.0, 1.0, 0.0).unwrap();
        let h = Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout).unwrap());
        let plan = EvolutionPlan::dense(h).unwrap();
        let u = plan.interaction_propagator(0.0, 1.7).unwrap();
        assert!((u - DMatrix::<C64>::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn cocycle_identity_reproduces_heisenberg() {
        // τ_t(A(t)) = α_t(A) with A(t) = e^{itH_loc} A e^{−itH_loc};
        // dense check on a 1D chain (dim 108 ≤ 500).
        let (h, plan) = chain_plan(3, 1, 0.4);
        let a = local_a(&h);
        let t = 0.6;
        let d = plan.dense_data().unwrap();
        let a_t = conjugate_dense(&d.loc_vecs, &d.loc_vals, t, &a.to_dense());
        let lhs = plan.cocycle_exact(&a_t, t).unwrap();
        let rhs = plan.heisenberg(&a, t).unwrap().to_dense();
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn dyson_trivial_cases() {
        // H_int = 0 → (B, 0).
        let lat =
            SubLattice::induced(1, vec![Site::new(0, 0, 0), Site::new(1, 0, 0)]).unwrap();
        let model = GaugeGroupModel::u1(1);
        let layout = HilbertLayout::for_sublattice(&lat, &model, FermionPreset::None).unwrap();
        let params = CouplingParams::new(1.0, 1.0, 0.0).unwrap();
        let h = Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout).unwrap());
        let plan = EvolutionPlan::dense(h).unwrap();
        let b = DMatrix::<C64>::identity(3, 3) * C64::new(0.7, 0.1);
        let r = dyson_cocycle(&plan, &b, 0.9, 3).unwrap();
        assert!((r.operator - b).norm() < 1e-13);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn dyson_order_zero_tail_is_full_exponential() {
        let (h, plan) = chain_plan(2, 1, 0.3);
        let _ = &h;
        let b = local_a(&h).to_dense();
        let b_norm = largest_singular_dense(&b);
        let t = 0.4;
        let hn = plan.h_int_norm().unwrap();
        let tail = dyson_tail_bound(hn, t, 0, b_norm);
        let expect = ((2.0 * hn * t).exp() - 1.0) * b_norm;
        assert!((tail - expect).abs() < 1e-10 * expect.max(1.0));
    }

    #[test]
    fn dyson_converges_to_exact_cocycle_within_certificate() {
        let (h, plan) = chain_plan(2, 1, 0.4);
        let _ = &h;
        let b = local_a(&h).to_dense();
        let t = 0.08;
        let exact = plan.cocycle_exact(&b, t).unwrap();
        let mut last_err = f64::INFINITY;
        for order in 1..=6 {
            let r = dyson_cocycle(&plan, &b, t, order).unwrap();
            let err = largest_singular_dense(&(&r.operator - &exact));
            assert!(
                err <= r.tail_bound + r.quadrature_defect + 1e-11,
                "order {order}: error {err:.3e} exceeds certificate {:.3e}",
                r.tail_bound
            );
            assert!(r.quadrature_defect < 1e-11);
            if order >= 3 {
                assert!(err <= last_err + 1e-14, "series should tighten");
            }
            last_err = err;
        }
    }

    #[test]
    fn ivp_homogeneous_constant_a() {
        // B ≡ 0, constant A: f(t) = e^{−i(t−t₀)A} f₀ e^{i(t−t₀)A}.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let raw = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let a_mat = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
        let f0 = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let zero = DMatrix::<C64>::zeros(n, n);
        let t1 = 0.9;
        let f = commutator_ivp(&|_| a_mat.clone(), &|_| zero.clone(), &f0, 0.0, t1, 200).unwrap();
        let (vals, vecs) = eigendecompose_dense(&a_mat);
        let prop = {
            let phases = DMatrix::from_diagonal(&DVector::from_iterator(
                n,
                vals.iter().map(|&l| C64::from_polar(1.0, -t1 * l)),
            ));
            &vecs * phases * vecs.adjoint()
        };
        let expect = &prop * &f0 * prop.adjoint();
        assert!((f - expect).norm() < 1e-9);
    }

    #[test]
    fn ivp_pure_integral() {
        // f₀ = 0, A ≡ 0: f(t) = ∫ B.
        let n = 4;
        let b = |t: f64| DMatrix::<C64>::identity(n, n) * C64::new(t * t, 0.5 * t);
        let zero = DMatrix::<C64>::zeros(n, n);
        let f = commutator_ivp(&|_| zero.clone(), &b, &zero, 0.0, 1.0, 128).unwrap();
        let expect = DMatrix::<C64>::identity(n, n) * C64::new(1.0 / 3.0, 0.25);
        assert!((f - expect).norm() < 1e-9);
    }

    #[test]
    fn ivp_gronwall_bound_against_rk4_oracle() {
        // Random time-dependent A, B on [0, 1]: the solution satisfies
        // ‖f(1)‖ ≤ ‖f₀‖ + ∫‖B‖, and matches an independent RK4 integration.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 5;
        let mk = |rng: &mut ChaCha8Rng| {
            let raw = DMatrix::from_fn(n, n, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            (&raw + raw.adjoint()) * C64::new(0.5, 0.0)
        };
        let (a0, a1) = (mk(&mut rng), mk(&mut rng));
        let (b0, b1) = (mk(&mut rng), mk(&mut rng));
        let a = move |t: f64| &a0 * C64::new((1.7 * t).cos(), 0.0) + &a1 * C64::new(t, 0.0);
        let b = move |t: f64| &b0 * C64::new(1.0, 0.0) + &b1 * C64::new((3.0 * t).sin(), 0.0);
        let f0 = mk(&mut rng);
        let f = commutator_ivp(&a, &b, &f0, 0.0, 1.0, 400).unwrap();

        // RK4 oracle on f′ = i[f, A] + B.
        let rhs = |t: f64, f: &DMatrix<C64>| -> DMatrix<C64> {
            let at = a(t);
            (f * &at - &at * f) * I + b(t)
        };
        let steps = 800;
        let h = 1.0 / steps as f64;
        let mut g = f0.clone();
        for k in 0..steps {
            let t = k as f64 * h;
            let k1 = rhs(t, &g);
            let k2 = rhs(t + h / 2.0, &(&g + &k1 * C64::new(h / 2.0, 0.0)));
            let k3 = rhs(t + h / 2.0, &(&g + &k2 * C64::new(h / 2.0, 0.0)));
            let k4 = rhs(t + h, &(&g + &k3 * C64::new(h, 0.0)));
            g += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4)
                * C64::new(h / 6.0, 0.0);
        }
        assert!(
            largest_singular_dense(&(&f - &g)) < 1e-7,
            "propagator and RK4 oracle disagree"
        );

        let f_norm = largest_singular_dense(&f);
        let b_integral = crate::quadrature::integrate(0.0, 1.0, 48, |t| {
            largest_singular_dense(&b(t))
        });
        assert!(
            f_norm <= largest_singular_dense(&f0) + b_integral + 1e-8,
            "norm estimate violated: {f_norm} vs {} + {b_integral}",
            largest_singular_dense(&f0)
        );
    }

    #[test]
    fn sector_norms_match_dense() {
        // The sector path must reproduce the dense commutator norms exactly.
        let (h, plan) = chain_plan(3, 1, 0.5);
        let layout = &h.layout;
        let a_loc = LocalOperator::from_parts(
            layout,
            Vec::new(),
            None,
            vec![(
                layout.links()[0],
                crate::linkspace::electric_operator(&h.model),
            )],
        )
        .unwrap();
        let d_loc = LocalOperator::from_parts(
            layout,
            Vec::new(),
            None,
            vec![(
                layout.links()[1],
                crate::linkspace::electric_operator(&h.model),
            )],
        )
        .unwrap();
        let t_grid = [0.25, 0.8];
        let sectors = charge_sectors(&h).unwrap();
        let fast = sector_commutator_norms(&h, &sectors, &a_loc, &d_loc, &t_grid).unwrap();
        let a = a_loc.embed().unwrap();
        let d = d_loc.embed().unwrap();
        for (ti, &t) in t_grid.iter().enumerate() {
            let at = plan.heisenberg(&a, t).unwrap();
            let comm = crate::opalg::commutator(&d, &at).unwrap();
            let dense = largest_singular_dense(&comm.to_dense());
            assert!(
                (fast[ti] - dense).abs() < 1e-9,
                "sector path deviates at t = {t}: {} vs {dense}",
                fast[ti]
            );
        }
    }

    #[test]
    fn sector_difference_matches_dense() {
        // Difference of evolutions on nested volumes: the sector path must
        // equal the dense result (4-site outer, 3-site inner chain).
        let sites5: Vec<Site> = (-1..=2).map(|x| Site::new(x, 0, 0)).collect();
        let sites3: Vec<Site> = (-1..=1).map(|x| Site::new(x, 0, 0)).collect();
        let lat5 = SubLattice::induced(1, sites5).unwrap();
        let lat3 = SubLattice::induced(1, sites3).unwrap();
        let model = GaugeGroupModel::u1(1);
        let layout5 = HilbertLayout::for_sublattice(&lat5, &model, FermionPreset::Reduced).unwrap();
        let layout3 = HilbertLayout::for_sublattice(&lat3, &model, FermionPreset::Reduced).unwrap();
        let params = CouplingParams::new(1.0, 1.0, 0.5).unwrap();
        let h5 = Arc::new(HamiltonianTerms::assemble(&lat5, params, model, &layout5).unwrap());
        let h3 = Arc::new(HamiltonianTerms::assemble(&lat3, params, model, &layout3).unwrap());
        // A = electric term on the central link (present in both layouts).
        let central = crate::lattice::Link::new(Site::new(0, 0, 0), 0);
        let mk_a = |layout: &Arc<HilbertLayout>| {
            LocalOperator::from_parts(
                layout,
                Vec::new(),
                None,
                vec![(central, crate::linkspace::electric_operator(&model))],
            )
            .unwrap()
        };
        let t_grid = [0.5];
        let big_secs = charge_sectors(&h5).unwrap();
        let fast = sector_evolution_difference(
            &h5,
            &big_secs,
            &h3,
            &mk_a(&layout3),
            &mk_a(&layout5),
            &t_grid,
        )
        .unwrap();

        // Dense oracle: evolve in both volumes on the big layout.
        let plan5 = EvolutionPlan::dense(Arc::clone(&h5)).unwrap();
        let a_big = mk_a(&layout5).embed().unwrap();
        let evolved_big = plan5.heisenberg(&a_big, 0.5).unwrap();
        // α^{S₃} on the big layout: assemble S₃'s Hamiltonian terms on the
        // big layout and evolve with them.
        let h3_on_5 = Arc::new(
            HamiltonianTerms::assemble(&lat3, params, model, &layout5).unwrap(),
        );
        let plan3 = EvolutionPlan::dense(h3_on_5).unwrap();
        let evolved_small = plan3.heisenberg(&a_big, 0.5).unwrap();
        let dense = largest_singular_dense(
            &(evolved_big.to_dense() - evolved_small.to_dense()),
        );
        assert!(
            (fast[0] - dense).abs() < 1e-8,
            "sector difference {} vs dense {dense}",
            fast[0]
        );
    }
}
