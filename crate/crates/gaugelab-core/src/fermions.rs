//! CAR algebra on the finite lattice through a Jordan–Wigner encoding.
//!
//! Fermionic modes are ordered site-major (sites lexicographic), component
//! minor; mode k occupies bit k of the Fock basis index. The annihilator is
//! the usual string operator
//!
//!   a_k |n⟩ = (−1)^{n_0 + … + n_{k−1}} n_k |n − e_k⟩,
//!
//! so the anticommutation relations hold to machine precision. Smeared
//! fields are antilinear in the test function: a(f) = Σ_k conj(f_k) a_k.
//!
//! The internal space at each site is spinor ⊗ color. The reduced preset
//! (one spinor component, γ₀ = 1) keeps the Fock dimension at 2^|sites|; the
//! four-spinor Dirac structure (γ₀ = diag(1,1,−1,−1), γᵏ off-diagonal in the
//! Dirac basis) is available for small site counts.

use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::sparse::CsrMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Choice of γ₀ for the mass term and hopping bilinears.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gamma0 {
    Identity,
    Dirac,
}

/// Ordered fermionic modes over a site list with an internal spinor ⊗ color
/// space.
#[derive(Debug, Clone)]
pub struct FermionLayout {
    sites: Vec<Site>,
    spinor_dim: usize,
    color_dim: usize,
    gamma0: DMatrix<C64>,
}

impl FermionLayout {
    /// `spinor_dim` must be 1 (reduced) or 4 (Dirac); γ₀ = Dirac requires 4.
    pub fn new(mut sites: Vec<Site>, spinor_dim: usize, color_dim: usize, gamma0: Gamma0) -> Result<Self> {
        if spinor_dim != 1 && spinor_dim != 4 {
            return Err(Error::Precondition(format!(
                "spinor_dim must be 1 or 4, got {spinor_dim}"
            )));
        }
        if color_dim == 0 {
            return Err(Error::Precondition("color_dim must be positive".into()));
        }
        if matches!(gamma0, Gamma0::Dirac) && spinor_dim != 4 {
            return Err(Error::Precondition(
                "Dirac γ₀ requires the four-spinor preset".into(),
            ));
        }
        sites.sort_unstable();
        sites.dedup();
        let g0_spinor = match gamma0 {
            Gamma0::Identity => DMatrix::identity(spinor_dim, spinor_dim),
            Gamma0::Dirac => {
                let mut g = DMatrix::zeros(4, 4);
                for (k, s) in [1.0, 1.0, -1.0, -1.0].into_iter().enumerate() {
                    g[(k, k)] = C64::new(s, 0.0);
                }
                g
            }
        };
        // γ₀ on the full internal space spinor ⊗ color.
        let internal = spinor_dim * color_dim;
        let mut g0 = DMatrix::zeros(internal, internal);
        for s1 in 0..spinor_dim {
            for s2 in 0..spinor_dim {
                let v = g0_spinor[(s1, s2)];
                if v != ZERO {
                    for c in 0..color_dim {
                        g0[(s1 * color_dim + c, s2 * color_dim + c)] = v;
                    }
                }
            }
        }
        Ok(FermionLayout {
            sites,
            spinor_dim,
            color_dim,
            gamma0: g0,
        })
    }

    /// Reduced preset: one component per site, γ₀ = 1.
    pub fn reduced(sites: Vec<Site>) -> Result<Self> {
        FermionLayout::new(sites, 1, 1, Gamma0::Identity)
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn spinor_dim(&self) -> usize {
        self.spinor_dim
    }

    pub fn color_dim(&self) -> usize {
        self.color_dim
    }

    pub fn internal_dim(&self) -> usize {
        self.spinor_dim * self.color_dim
    }

    /// γ₀ on the internal space (Hermitian involution).
    pub fn gamma0(&self) -> &DMatrix<C64> {
        &self.gamma0
    }

    pub fn modes(&self) -> usize {
        self.sites.len() * self.internal_dim()
    }

    pub fn fock_dim(&self) -> usize {
        1usize << self.modes()
    }

    pub fn site_index(&self, site: &Site) -> Result<usize> {
        self.sites
            .binary_search(site)
            .map_err(|_| Error::IndexRange(format!("site {site:?} not in fermion layout")))
    }

    /// Mode index of (site, spinor, color).
    pub fn mode(&self, site: &Site, spinor: usize, color: usize) -> Result<usize> {
        if spinor >= self.spinor_dim || color >= self.color_dim {
            return Err(Error::IndexRange(format!(
                "component ({spinor}, {color}) out of range"
            )));
        }
        let s = self.site_index(site)?;
        Ok(s * self.internal_dim() + spinor * self.color_dim + color)
    }

    /// All mode indices belonging to a site, ascending.
    pub fn site_modes(&self, site: &Site) -> Result<Vec<usize>> {
        let s = self.site_index(site)?;
        let d = self.internal_dim();
        Ok((s * d..(s + 1) * d).collect())
    }
}

/// Dirac gamma matrices γ⁰..γ³ in the Dirac basis.
pub fn dirac_gammas() -> [DMatrix<C64>; 4] {
    let i = C64::new(0.0, 1.0);
    let mut g0 = DMatrix::zeros(4, 4);
    for (k, s) in [1.0, 1.0, -1.0, -1.0].into_iter().enumerate() {
        g0[(k, k)] = C64::new(s, 0.0);
    }
    // Pauli blocks: γᵏ = [[0, σₖ], [−σₖ, 0]].
    let sigma = [
        [[ZERO, ONE], [ONE, ZERO]],
        [[ZERO, -i], [i, ZERO]],
        [[ONE, ZERO], [ZERO, -ONE]],
    ];
    let mut out = [g0, DMatrix::zeros(4, 4), DMatrix::zeros(4, 4), DMatrix::zeros(4, 4)];
    for k in 0..3 {
        let s = &sigma[k];
        let g = &mut out[k + 1];
        for r in 0..2 {
            for c in 0..2 {
                g[(r, c + 2)] = s[r][c];
                g[(r + 2, c)] = -s[r][c];
            }
        }
    }
    out
}

/// Jordan–Wigner annihilator for one mode, on the Fock factor.
pub fn annihilator_mode(n_modes: usize, mode: usize) -> CsrMatrix {
    assert!(mode < n_modes);
    let dim = 1usize << n_modes;
    let mask_below = (1usize << mode) - 1;
    let bit = 1usize << mode;
    let mut t = Vec::with_capacity(dim / 2);
    for b in 0..dim {
        if b & bit != 0 {
            let sign = if ((b & mask_below).count_ones()) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            t.push(((b ^ bit) as u32, b as u32, C64::new(sign, 0.0)));
        }
    }
    CsrMatrix::from_triplets(dim, dim, t)
}

/// Annihilator of a layout mode addressed by (site, spinor, color).
pub fn annihilator(layout: &FermionLayout, site: &Site, spinor: usize, color: usize) -> Result<CsrMatrix> {
    let mode = layout.mode(site, spinor, color)?;
    Ok(annihilator_mode(layout.modes(), mode))
}

/// Smeared field a(f) = Σ_k conj(f_k) a_k (antilinear in f).
pub fn field_annihilator(n_modes: usize, f: &[C64]) -> CsrMatrix {
    assert_eq!(f.len(), n_modes);
    let dim = 1usize << n_modes;
    let mut acc = CsrMatrix::zeros(dim, dim);
    for (k, fk) in f.iter().enumerate() {
        if *fk != ZERO {
            acc = acc.add_scaled(&annihilator_mode(n_modes, k), fk.conj());
        }
    }
    acc
}

/// Mass term m·a³ Σ_x ψ̄ψ(x) = m·a³ Σ_x Σ_{ij} (γ₀)_{ij} a†_{x,i} a_{x,j},
/// on the Fock factor.
pub fn mass_term(layout: &FermionLayout, m: f64, a_spacing: f64) -> CsrMatrix {
    let n = layout.modes();
    let dim = layout.fock_dim();
    let scale = C64::new(m * a_spacing.powi(3), 0.0);
    let d = layout.internal_dim();
    let g0 = layout.gamma0();
    let mut acc = CsrMatrix::zeros(dim, dim);
    if m == 0.0 {
        return acc;
    }
    for s in 0..layout.sites.len() {
        for i in 0..d {
            for j in 0..d {
                let g = g0[(i, j)];
                if g == ZERO {
                    continue;
                }
                let ai = annihilator_mode(n, s * d + i);
                let term = if i == j {
                    // Diagonal: a†a is the number operator on that mode.
                    ai.adjoint().matmul(&ai)
                } else {
                    let aj = annihilator_mode(n, s * d + j);
                    ai.adjoint().matmul(&aj)
                };
                acc = acc.add_scaled(&term, scale * g);
            }
        }
    }
    acc
}

/// Occupation-parity grading unitary: diagonal (−1)^{Σ n_k}.
pub fn parity_operator(layout: &FermionLayout) -> CsrMatrix {
    let dim = layout.fock_dim();
    let diag: Vec<C64> = (0..dim)
        .map(|b| {
            if (b as u64).count_ones() % 2 == 0 {
                ONE
            } else {
                -ONE
            }
        })
        .collect();
    CsrMatrix::from_diag(&diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sites(n: usize) -> Vec<Site> {
        (0..n as i32).map(|x| Site::new(x, 0, 0)).collect()
    }

    fn rand_f(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn single_mode_nilpotent() {
        let a = annihilator_mode(1, 0);
        assert_eq!(a.matmul(&a).nnz(), 0);
    }

    #[test]
    fn car_relations_on_four_modes() {
        // Dense 16×16 oracle: {a(f), a(g)†} = ⟨f,g⟩·1 and {a(f), a(g)} = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let f = rand_f(&mut rng, 4);
            let g = rand_f(&mut rng, 4);
            let af = field_annihilator(4, &f).to_dense();
            let ag = field_annihilator(4, &g).to_dense();
            let anti1 = &af * ag.adjoint() + ag.adjoint() * &af;
            let ip: C64 = f.iter().zip(&g).map(|(a, b)| a.conj() * b).sum();
            let expect = DMatrix::identity(16, 16) * ip;
            assert!((anti1 - expect).norm() < 1e-13);
            let anti2 = &af * &ag + &ag * &af;
            assert!(anti2.norm() < 1e-13);
        }
    }

    #[test]
    fn car_relations_mode_level() {
        for n in [2usize, 3] {
            let dim = 1usize << n;
            for p in 0..n {
                for q in 0..n {
                    let ap = annihilator_mode(n, p).to_dense();
                    let aq = annihilator_mode(n, q).to_dense();
                    let anti = &ap * aq.adjoint() + aq.adjoint() * &ap;
                    let expect = if p == q {
                        DMatrix::identity(dim, dim)
                    } else {
                        DMatrix::zeros(dim, dim)
                    };
                    assert!((anti - expect).norm() < 1e-14, "p={p} q={q} n={n}");
                }
            }
        }
    }

    #[test]
    fn mass_term_single_site_number_operator() {
        let layout = FermionLayout::reduced(sites(1)).unwrap();
        let h = mass_term(&layout, 0.5, 2.0); // m a³ = 4
        let d = h.to_dense();
        assert!((d[(0, 0)] - ZERO).norm() < 1e-15);
        assert!((d[(1, 1)] - C64::new(4.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mass_term_zero_mass() {
        let layout = FermionLayout::reduced(sites(3)).unwrap();
        assert_eq!(mass_term(&layout, 0.0, 1.0).nnz(), 0);
    }

    #[test]
    fn mass_term_two_site_spectrum() {
        // Dense diagonalization oracle: spectrum {0, ma³, 2ma³} with
        // multiplicities {1, 2, 1}.
        let layout = FermionLayout::reduced(sites(2)).unwrap();
        let (m, a) = (0.7, 1.3);
        let h = mass_term(&layout, m, a).to_dense();
        let mut eig: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let unit = m * a * a * a;
        let expect = [0.0, unit, unit, 2.0 * unit];
        for (e, x) in eig.iter().zip(expect) {
            assert!((e - x).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_term_dirac_gamma0_hermitian() {
        let layout = FermionLayout::new(sites(1), 4, 1, Gamma0::Dirac).unwrap();
        let h = mass_term(&layout, 1.0, 1.0);
        assert!(h.hermitian_deviation() < 1e-14);
        // γ₀ = diag(1,1,−1,−1): eigenvalues are sums of ±ma³.
        let mut eig: Vec<f64> = h
            .to_dense()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] + 2.0).abs() < 1e-12);
        assert!((eig.last().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parity_grading() {
        let layout = FermionLayout::reduced(sites(3)).unwrap();
        let uf = parity_operator(&layout);
        // Vacuum +1, one-particle states −1.
        assert_eq!(uf.get(0, 0), ONE);
        for k in 0..3 {
            let idx = 1usize << k;
            assert_eq!(uf.get(idx, idx), -ONE);
        }
        // U_F² = 1 and U_F a(f) U_F = −a(f).
        let uf2 = uf.matmul(&uf);
        assert!((uf2.to_dense() - DMatrix::identity(8, 8)).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = rand_f(&mut rng, 3);
        let af = field_annihilator(3, &f);
        let conj = uf.matmul(&af).matmul(&uf).to_dense();
        assert!((conj + af.to_dense()).norm() < 1e-13);
    }

    #[test]
    fn mass_commutes_with_parity() {
        let layout = FermionLayout::new(sites(1), 4, 1, Gamma0::Dirac).unwrap();
        let h = mass_term(&layout, 0.9, 1.1);
        let uf = parity_operator(&layout);
        let comm = h.matmul(&uf).add_scaled(&uf.matmul(&h), C64::new(-1.0, 0.0));
        assert!(comm.frobenius() < 1e-13);
    }

    #[test]
    fn gamma_algebra() {
        // {γ^μ, γ^ν} = 2η^{μν} with η = diag(1,−1,−1,−1).
        let g = dirac_gammas();
        let eta = [1.0, -1.0, -1.0, -1.0];
        for mu in 0..4 {
            for nu in 0..4 {
                let anti = &g[mu] * &g[nu] + &g[nu] * &g[mu];
                let expect = DMatrix::identity(4, 4) * C64::new(2.0 * eta[mu] * if mu == nu { 1.0 } else { 0.0 }, 0.0);
                assert!((anti - expect).norm() < 1e-14, "mu={mu} nu={nu}");
            }
        }
    }

    #[test]
    fn mode_ordering_is_site_major() {
        let layout = FermionLayout::new(sites(2), 1, 2, Gamma0::Identity).unwrap();
        assert_eq!(layout.modes(), 4);
        assert_eq!(layout.mode(&Site::new(0, 0, 0), 0, 1).unwrap(), 1);
        assert_eq!(layout.mode(&Site::new(1, 0, 0), 0, 0).unwrap(), 2);
        assert!(layout.mode(&Site::new(2, 0, 0), 0, 0).is_err());
    }
}
