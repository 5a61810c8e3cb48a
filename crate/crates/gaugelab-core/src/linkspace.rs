//! Truncated per-link gauge Hilbert spaces and their canonical operators.
//!
//! U(1) links carry the charge basis |m⟩, m = −c..c (ascending), truncated at
//! an electric cutoff c. SU(2) links carry the Peter–Weyl basis
//! |j, α, β⟩ = √(2j+1) D^j_{αβ}, blocks ascending in j, row-major within a
//! block, truncated at a spin cutoff j_max.
//!
//! The electric operator is the group Laplacian, diagonal in these bases:
//! m² for U(1) and the Casimir j(j+1) (degeneracy (2j+1)²) for SU(2), times a
//! configurable `laplacian_scale`. Link matrix elements Φ_ij multiply by the
//! defining-representation matrix element (e_i, g e_j); out-of-range images
//! under truncation are dropped, never wrapped. The two-sided gauge action
//! W(g_tail, g_head) is block-preserving, hence truncation-exact.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Truncation scheme of a single link factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    /// U(1) with charges |m| ≤ electric_cutoff.
    U1 { electric_cutoff: u32 },
    /// SU(2) with Peter–Weyl blocks 2j = 0..=two_j_max.
    Su2 { two_j_max: u32 },
}

/// A truncated per-link gauge model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeGroupModel {
    pub kind: GroupKind,
    /// Constant multiplying the group Laplacian in the electric term.
    pub laplacian_scale: f64,
}

impl GaugeGroupModel {
    pub fn u1(electric_cutoff: u32) -> Self {
        GaugeGroupModel {
            kind: GroupKind::U1 { electric_cutoff },
            laplacian_scale: 1.0,
        }
    }

    pub fn su2(two_j_max: u32) -> Self {
        GaugeGroupModel {
            kind: GroupKind::Su2 { two_j_max },
            laplacian_scale: 1.0,
        }
    }

    pub fn with_laplacian_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0, "laplacian_scale must be positive");
        self.laplacian_scale = scale;
        self
    }

    /// Dimension of the defining (color) representation.
    pub fn color_dim(&self) -> usize {
        match self.kind {
            GroupKind::U1 { .. } => 1,
            GroupKind::Su2 { .. } => 2,
        }
    }

    /// Dimension of the truncated link Hilbert space.
    pub fn local_dim(&self) -> usize {
        match self.kind {
            GroupKind::U1 { electric_cutoff } => 2 * electric_cutoff as usize + 1,
            GroupKind::Su2 { two_j_max } => (0..=two_j_max as usize)
                .map(|two_j| (two_j + 1) * (two_j + 1))
                .sum(),
        }
    }

    /// Basis index of the constant mode ψ₀ (the Haar-flat state annihilated
    /// by every momentum operator).
    pub fn psi0_index(&self) -> usize {
        match self.kind {
            GroupKind::U1 { electric_cutoff } => electric_cutoff as usize,
            GroupKind::Su2 { .. } => 0,
        }
    }
}

/// A group element of the structure group.
#[derive(Debug, Clone)]
pub enum GroupElement {
    /// U(1) phase angle in radians.
    U1(f64),
    /// SU(2) element as a 2×2 special unitary in the m-ascending basis.
    Su2(Matrix2<C64>),
}

impl GroupElement {
    pub fn identity(model: &GaugeGroupModel) -> Self {
        match model.kind {
            GroupKind::U1 { .. } => GroupElement::U1(0.0),
            GroupKind::Su2 { .. } => GroupElement::Su2(Matrix2::identity()),
        }
    }

    /// Validate against the model; SU(2) elements must be special unitary.
    pub fn validate(&self, model: &GaugeGroupModel) -> Result<()> {
        match (self, model.kind) {
            (GroupElement::U1(theta), GroupKind::U1 { .. }) => {
                if theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidGroupElement("non-finite U(1) angle".into()))
                }
            }
            (GroupElement::Su2(g), GroupKind::Su2 { .. }) => {
                let unit_dev = (g * g.adjoint() - Matrix2::identity()).norm();
                let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
                let det_dev = (det - ONE).norm();
                if unit_dev < 1e-10 && det_dev < 1e-10 {
                    Ok(())
                } else {
                    Err(Error::InvalidGroupElement(format!(
                        "not special unitary: |gg†−1| = {unit_dev:.2e}, |det−1| = {det_dev:.2e}"
                    )))
                }
            }
            _ => Err(Error::InvalidGroupElement(
                "group element kind does not match the model".into(),
            )),
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            GroupElement::U1(theta) => GroupElement::U1(-theta),
            GroupElement::Su2(g) => GroupElement::Su2(g.adjoint()),
        }
    }

    pub fn compose(&self, other: &GroupElement) -> Self {
        match (self, other) {
            (GroupElement::U1(a), GroupElement::U1(b)) => GroupElement::U1(a + b),
            (GroupElement::Su2(a), GroupElement::Su2(b)) => GroupElement::Su2(a * b),
            _ => panic!("cannot compose group elements of different kinds"),
        }
    }

    /// SU(2) element from axis-angle data; U(1) from an angle.
    pub fn su2_from_axis_angle(axis: [f64; 3], theta: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        assert!(n > 0.0, "axis must be nonzero");
        let (nx, ny, nz) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let c = (theta / 2.0).cos();
        let s = (theta / 2.0).sin();
        // cos(θ/2)·1 − i sin(θ/2)(n·σ) in the m-ascending basis, where the
        // Pauli action is fixed by σz|±1/2⟩ = ±|±1/2⟩ (index 0 ↔ m = −1/2).
        let g = Matrix2::new(
            C64::new(c, nz * s) * ONE,
            C64::new(ny * s, -nx * s),
            C64::new(-ny * s, -nx * s),
            C64::new(c, -nz * s),
        );
        GroupElement::Su2(g)
    }
}

/// Enumerates the Peter–Weyl block layout for a truncated SU(2) link.
#[derive(Debug, Clone, Copy)]
pub struct Su2Basis {
    pub two_j_max: u32,
}

impl Su2Basis {
    pub fn block_dim(two_j: u32) -> usize {
        (two_j as usize + 1) * (two_j as usize + 1)
    }

    pub fn block_offset(&self, two_j: u32) -> usize {
        (0..two_j).map(Su2Basis::block_dim).sum()
    }

    /// Index of |j, α, β⟩ with row/col indices a, b ∈ 0..2j+1 (m ascending).
    pub fn index(&self, two_j: u32, a: usize, b: usize) -> usize {
        let d = two_j as usize + 1;
        debug_assert!(a < d && b < d);
        self.block_offset(two_j) + a * d + b
    }

    pub fn blocks(&self) -> impl Iterator<Item = u32> {
        0..=self.two_j_max
    }
}

/// Clebsch–Gordan coefficient ⟨j1 m1; j2 m2 | J M⟩ (Condon–Shortley phase),
/// all spins passed doubled so half-integers stay exact.
pub fn clebsch_gordan(two_j1: i32, two_m1: i32, two_j2: i32, two_m2: i32, two_j: i32, two_m: i32) -> f64 {
    if two_m1 + two_m2 != two_m
        || two_j < (two_j1 - two_j2).abs()
        || two_j > two_j1 + two_j2
        || (two_j1 + two_j2 + two_j) % 2 != 0
        || two_m1.abs() > two_j1
        || two_m2.abs() > two_j2
        || two_m.abs() > two_j
    {
        return 0.0;
    }
    let fact = |n: i32| -> f64 {
        debug_assert!(n >= 0, "negative factorial argument");
        (1..=n as u64).map(|k| k as f64).product()
    };
    // All factorial arguments below are guaranteed integral.
    let h = |x: i32| x / 2;
    let delta = fact(h(two_j1 + two_j2 - two_j)) * fact(h(two_j1 - two_j2 + two_j))
        * fact(h(-two_j1 + two_j2 + two_j))
        / fact(h(two_j1 + two_j2 + two_j) + 1);
    let pre = ((two_j as f64 + 1.0)
        * delta
        * fact(h(two_j + two_m))
        * fact(h(two_j - two_m))
        * fact(h(two_j1 + two_m1))
        * fact(h(two_j1 - two_m1))
        * fact(h(two_j2 + two_m2))
        * fact(h(two_j2 - two_m2)))
    .sqrt();
    let mut sum = 0.0;
    // k ranges over all values keeping every factorial argument nonnegative.
    let k_min = 0
        .max(h(two_j2 - two_j - two_m1))
        .max(h(two_j1 + two_m2 - two_j));
    let k_max = h(two_j1 + two_j2 - two_j)
        .min(h(two_j1 - two_m1))
        .min(h(two_j2 + two_m2));
    for k in k_min..=k_max {
        let denom = fact(k)
            * fact(h(two_j1 + two_j2 - two_j) - k)
            * fact(h(two_j1 - two_m1) - k)
            * fact(h(two_j2 + two_m2) - k)
            * fact(h(two_j - two_j2 + two_m1) + k)
            * fact(h(two_j - two_j1 - two_m2) + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    pre * sum
}

/// Standard spin-j angular momentum matrices (Jx, Jy, Jz) in the m-ascending
/// basis, built from the ladder operators.
pub fn spin_matrices(two_j: u32) -> (DMatrix<C64>, DMatrix<C64>, DMatrix<C64>) {
    let d = two_j as usize + 1;
    let j = two_j as f64 / 2.0;
    let m_of = |idx: usize| -j + idx as f64;
    let mut jp = DMatrix::<C64>::zeros(d, d);
    for idx in 0..d - 1 {
        let m = m_of(idx);
        jp[(idx + 1, idx)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * C64::new(0.5, 0.0);
    let jy = (&jp - &jm) * C64::new(0.0, -0.5);
    let mut jz = DMatrix::<C64>::zeros(d, d);
    for idx in 0..d {
        jz[(idx, idx)] = C64::new(m_of(idx), 0.0);
    }
    (jx, jy, jz)
}

/// Wigner matrix D^j(g) for g ∈ SU(2), via axis-angle extraction and
/// exponentiation of the spin-j generators. D^{1/2}(g) = g.
pub fn wigner_d(two_j: u32, g: &Matrix2<C64>) -> DMatrix<C64> {
    let d = two_j as usize + 1;
    let c = 0.5 * (g[(0, 0)].re + g[(1, 1)].re);
    // g = cos(θ/2)·1 − i sin(θ/2)(n·σ): recover sin(θ/2)·n from i(g − c·1).
    let m = [
        C64::new(0.0, 1.0) * (g[(0, 0)] - C64::new(c, 0.0)),
        C64::new(0.0, 1.0) * g[(1, 0)],
    ];
    // In the m-ascending basis σz = diag(−1, +1), so the (0,0) entry of n·σ
    // is −nz and the (1,0) entry is nx − i·ny.
    let sz = -m[0].re;
    let sx = m[1].re;
    let sy = -m[1].im;
    let sin_half = (sx * sx + sy * sy + sz * sz).sqrt();
    if sin_half < 1e-14 {
        // g ≈ ±1.
        let sign = if c >= 0.0 {
            1.0
        } else if two_j % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        return DMatrix::identity(d, d) * C64::new(sign, 0.0);
    }
    let theta = 2.0 * sin_half.atan2(c);
    let (nx, ny, nz) = (sx / sin_half, sy / sin_half, sz / sin_half);
    let (jx, jy, jz) = spin_matrices(two_j);
    let h = jx * C64::new(nx, 0.0) + jy * C64::new(ny, 0.0) + jz * C64::new(nz, 0.0);
    // exp(−iθ n·J) through the eigendecomposition of the Hermitian n·J.
    let eig = h.symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -theta * l)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Eigenvalues of the truncated Laplacian, in basis order: laplacian_scale ×
/// (m² for U(1); j(j+1) per Peter–Weyl block for SU(2)).
pub fn electric_diag(model: &GaugeGroupModel) -> Vec<f64> {
    match model.kind {
        GroupKind::U1 { electric_cutoff } => {
            let c = electric_cutoff as i64;
            (-c..=c)
                .map(|m| model.laplacian_scale * (m * m) as f64)
                .collect()
        }
        GroupKind::Su2 { two_j_max } => {
            let mut out = Vec::with_capacity(model.local_dim());
            for two_j in 0..=two_j_max {
                let j = two_j as f64 / 2.0;
                let casimir = j * (j + 1.0);
                for _ in 0..Su2Basis::block_dim(two_j) {
                    out.push(model.laplacian_scale * casimir);
                }
            }
            out
        }
    }
}

/// The electric (Laplacian) operator as a diagonal matrix on one link factor.
pub fn electric_operator(model: &GaugeGroupModel) -> DMatrix<C64> {
    let diag = electric_diag(model);
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        diag.len(),
        diag.into_iter().map(|x| C64::new(x, 0.0)),
    ))
}

/// The multiplication operator T_{Φ_ij} by the defining-representation matrix
/// element Φ_ij(g) = (e_i, g e_j), on the truncated link space.
///
/// U(1): the charge-raising shift |m⟩ → |m+1⟩, cut at the top.
/// SU(2): Clebsch–Gordan coupling j ⊗ ½; target blocks above j_max are
/// dropped, so the operator is a partial isometry near the cutoff.
pub fn link_matrix(model: &GaugeGroupModel, i: usize, j: usize) -> Result<DMatrix<C64>> {
    let k = model.color_dim();
    if i >= k || j >= k {
        return Err(Error::IndexRange(format!(
            "color indices ({i}, {j}) out of range for color_dim {k}"
        )));
    }
    let dim = model.local_dim();
    let mut mat = DMatrix::<C64>::zeros(dim, dim);
    match model.kind {
        GroupKind::U1 { electric_cutoff } => {
            let c = electric_cutoff as usize;
            for idx in 0..2 * c {
                mat[(idx + 1, idx)] = ONE;
            }
        }
        GroupKind::Su2 { two_j_max } => {
            let basis = Su2Basis { two_j_max };
            // Color index ↔ doubled magnetic quantum number of the defining rep.
            let two_mi = 2 * i as i32 - 1;
            let two_mj = 2 * j as i32 - 1;
            for two_j1 in basis.blocks() {
                let d1 = two_j1 as usize + 1;
                for a in 0..d1 {
                    let two_ma = 2 * a as i32 - two_j1 as i32;
                    for b in 0..d1 {
                        let two_mb = 2 * b as i32 - two_j1 as i32;
                        for two_jt in [two_j1 as i32 - 1, two_j1 as i32 + 1] {
                            if two_jt < 0 || two_jt > two_j_max as i32 {
                                continue;
                            }
                            let two_mat = two_ma + two_mi;
                            let two_mbt = two_mb + two_mj;
                            if two_mat.abs() > two_jt || two_mbt.abs() > two_jt {
                                continue;
                            }
                            let c1 = clebsch_gordan(two_j1 as i32, two_ma, 1, two_mi, two_jt, two_mat);
                            let c2 = clebsch_gordan(two_j1 as i32, two_mb, 1, two_mj, two_jt, two_mbt);
                            if c1 == 0.0 || c2 == 0.0 {
                                continue;
                            }
                            let scale = ((two_j1 as f64 + 1.0) / (two_jt as f64 + 1.0)).sqrt();
                            let at = ((two_mat + two_jt) / 2) as usize;
                            let bt = ((two_mbt + two_jt) / 2) as usize;
                            let row = basis.index(two_jt as u32, at, bt);
                            let col = basis.index(two_j1, a, b);
                            mat[(row, col)] += C64::new(c1 * c2 * scale, 0.0);
                        }
                    }
                }
            }
        }
    }
    Ok(mat)
}

/// All link operators of a model, bundled.
#[derive(Debug, Clone)]
pub struct LinkOperatorSet {
    pub dim: usize,
    pub electric_diag: Vec<f64>,
    /// phi[i][j] = T_{Φ_ij} on the truncated space.
    pub phi: Vec<Vec<DMatrix<C64>>>,
}

pub fn link_operators(model: &GaugeGroupModel) -> LinkOperatorSet {
    let k = model.color_dim();
    let phi = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| link_matrix(model, i, j).expect("indices in range"))
                .collect()
        })
        .collect();
    LinkOperatorSet {
        dim: model.local_dim(),
        electric_diag: electric_diag(model),
        phi,
    }
}

/// Left translation U_θ on a U(1) link: diagonal e^{−imθ} in the charge basis.
pub fn left_translation(model: &GaugeGroupModel, theta: f64) -> Result<DMatrix<C64>> {
    match model.kind {
        GroupKind::U1 { electric_cutoff } => {
            let c = electric_cutoff as i64;
            let diag = nalgebra::DVector::from_iterator(
                model.local_dim(),
                (-c..=c).map(|m| C64::from_polar(1.0, -(m as f64) * theta)),
            );
            Ok(DMatrix::from_diagonal(&diag))
        }
        GroupKind::Su2 { .. } => Err(Error::Unsupported(
            "standalone left translation is only provided for U(1); SU(2) links only need \
             the two-sided gauge action"
                .into(),
        )),
    }
}

/// The gauge action on one link: φ(h) ↦ φ(g_tail⁻¹ h g_head), restricted to
/// the truncated space. Block-preserving, hence exactly unitary.
pub fn gauge_link_unitary(
    model: &GaugeGroupModel,
    g_tail: &GroupElement,
    g_head: &GroupElement,
) -> Result<DMatrix<C64>> {
    g_tail.validate(model)?;
    g_head.validate(model)?;
    let dim = model.local_dim();
    match (model.kind, g_tail, g_head) {
        (GroupKind::U1 { electric_cutoff }, GroupElement::U1(tt), GroupElement::U1(th)) => {
            let c = electric_cutoff as i64;
            let diag = nalgebra::DVector::from_iterator(
                dim,
                (-c..=c).map(|m| C64::from_polar(1.0, m as f64 * (th - tt))),
            );
            Ok(DMatrix::from_diagonal(&diag))
        }
        (GroupKind::Su2 { two_j_max }, GroupElement::Su2(gt), GroupElement::Su2(gh)) => {
            let basis = Su2Basis { two_j_max };
            let mut w = DMatrix::<C64>::zeros(dim, dim);
            for two_j in basis.blocks() {
                let d = two_j as usize + 1;
                let dt = wigner_d(two_j, &gt.adjoint()); // D^j(g_tail⁻¹)
                let dh = wigner_d(two_j, gh);
                // |j,α,β⟩ ↦ Σ_{γδ} D^j(g_tail⁻¹)_{αγ} D^j(g_head)_{δβ} |j,γ,δ⟩.
                for a in 0..d {
                    for b in 0..d {
                        let col = basis.index(two_j, a, b);
                        for g in 0..d {
                            for e in 0..d {
                                let v = dt[(a, g)] * dh[(e, b)];
                                if v != ZERO {
                                    w[(basis.index(two_j, g, e), col)] += v;
                                }
                            }
                        }
                    }
                }
            }
            Ok(w)
        }
        _ => unreachable!("validate() checked the kinds"),
    }
}
