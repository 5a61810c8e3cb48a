//! The finite-volume Kogut–Susskind Hamiltonian, assembled as catalogued
//! terms with the local/interaction split:
//!
//!   H = (a/2) Σ_ℓ E²(ℓ)  +  m a³ Σ_x ψ̄ψ(x)          (local part)
//!     + 1/(2g²a) Σ_p (W(p) + W(p)†)                   (plaquette part)
//!     + i(a/2) Σ_ℓ ψ̄(x_ℓ)[γ·(y_ℓ−x_ℓ)]Φ(ℓ)ψ(y_ℓ) + h.c.   (hopping part)
//!
//! The interaction catalog maps each plaquette p to W̃(p) and each link ℓ to
//! B(ℓ); ‖Ψ‖ is the largest catalog term norm, which on a lattice with a
//! bulk plaquette and link equals max{‖W̃‖, ‖B‖}.
//!
//! In the reduced fermion preset the spinor bracket [γ·(y−x)] is replaced by
//! the scalar 1; with the four-spinor preset it is γ⁰γ^{axis} times the
//! physical link length a.

use crate::error::{Error, Result};
use crate::gauge::{fermion_monomial, wilson_loop, PathStep};
use crate::lattice::{Link, Plaquette, Site, SubLattice};
use crate::linkspace::{electric_operator, link_matrix, GaugeGroupModel};
use crate::opalg::{HilbertLayout, LocalOperator, SparseOperator, SPARSE_DIM_DEFAULT};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

const ONE: C64 = C64::new(1.0, 0.0);

/// Physical couplings of the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    /// Lattice spacing (length units).
    pub a: f64,
    /// Gauge coupling.
    pub g: f64,
    /// Mass (inverse length units).
    pub m: f64,
}

impl CouplingParams {
    pub fn new(a: f64, g: f64, m: f64) -> Result<Self> {
        if !(a > 0.0) || !(g > 0.0) || !(m >= 0.0) {
            return Err(Error::Precondition(format!(
                "couplings must satisfy a > 0, g > 0, m ≥ 0 (got a={a}, g={g}, m={m})"
            )));
        }
        Ok(CouplingParams { a, g, m })
    }
}

/// Key of an interaction catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TermKey {
    Link(Link),
    Plaquette(Plaquette),
}

/// The assembled Hamiltonian: local terms (electric + mass) and the
/// interaction catalog {Ψ(q)}, with full sparse forms materialized lazily.
pub struct HamiltonianTerms {
    pub layout: Arc<HilbertLayout>,
    pub model: GaugeGroupModel,
    pub params: CouplingParams,
    /// Electric term per link and mass term per site.
    pub local_terms: Vec<LocalOperator>,
    /// Interaction terms Ψ(q): W̃(p) for plaquettes, B(ℓ) for links.
    pub catalog: BTreeMap<TermKey, LocalOperator>,
    /// max_q ‖Ψ(q)‖.
    pub psi_norm: f64,
    catalog_norms: BTreeMap<TermKey, f64>,
    h_loc_cache: OnceLock<SparseOperator>,
    h_int_cache: OnceLock<SparseOperator>,
    h_cache: OnceLock<SparseOperator>,
}

/// The plaquette term W̃(p) = (W(p) + W(p)†) / (2g²a).
pub fn plaquette_term(
    p: &Plaquette,
    params: &CouplingParams,
    model: &GaugeGroupModel,
    layout: &Arc<HilbertLayout>,
) -> Result<LocalOperator> {
    let path: Vec<PathStep> = p
        .links()
        .iter()
        .map(|(l, s)| PathStep {
            link: *l,
            forward: *s > 0,
        })
        .collect();
    let w = wilson_loop(layout, model, &path)?;
    let herm = w.add(&w.adjoint(), ONE)?;
    Ok(herm.scaled(C64::new(1.0 / (2.0 * params.g * params.g * params.a), 0.0)))
}

/// The hopping term B(ℓ) = i(a/2) ψ̄(x)[γ·(y−x)]Φ(ℓ)ψ(y) + h.c.
pub fn hopping_term(
    link: &Link,
    params: &CouplingParams,
    model: &GaugeGroupModel,
    layout: &Arc<HilbertLayout>,
) -> Result<LocalOperator> {
    let fermions = layout.fermions();
    if fermions.modes() == 0 {
        return Err(Error::FactorMismatch(
            "hopping term requires fermionic factors".into(),
        ));
    }
    let (x, y) = (link.tail, link.head());
    let k = model.color_dim();
    if fermions.color_dim() != k {
        return Err(Error::FactorMismatch(format!(
            "fermion color dimension {} does not match the gauge model ({k})",
            fermions.color_dim()
        )));
    }
    // Spinor bracket γ₀·[γ·(y−x)]: scalar 1 in the reduced preset, otherwise
    // γ⁰γ^{axis} scaled by the physical link length a.
    let spinor = fermions.spinor_dim();
    let bracket: DMatrix<C64> = if spinor == 1 {
        DMatrix::identity(1, 1)
    } else {
        let gammas = crate::fermions::dirac_gammas();
        (&gammas[0] * &gammas[1 + link.axis as usize]) * C64::new(params.a, 0.0)
    };
    let coeff = C64::new(0.0, params.a / 2.0);
    let mut acc: Option<LocalOperator> = None;
    for s_out in 0..spinor {
        for s_in in 0..spinor {
            let b = bracket[(s_out, s_in)];
            if b == C64::new(0.0, 0.0) {
                continue;
            }
            for n in 0..k {
                for m in 0..k {
                    let phi = link_matrix(model, n, m)?;
                    let mode_x = fermions.mode(&x, s_out, n)?;
                    let mode_y = fermions.mode(&y, s_in, m)?;
                    let ferm = fermion_monomial(layout, &[mode_x], &[mode_y])?;
                    let links = LocalOperator::from_parts(layout, Vec::new(), None, vec![(*link, phi)])?;
                    let term = ferm.product(&links)?.scaled(coeff * b);
                    acc = Some(match acc {
                        None => term,
                        Some(prev) => prev.add(&term, ONE)?,
                    });
                }
            }
        }
    }
    let t = acc.expect("hopping term has at least one component");
    t.add(&t.adjoint(), ONE)
}

/// The electric term (a/2)·E²(ℓ) on one link.
pub fn electric_term(
    link: &Link,
    params: &CouplingParams,
    model: &GaugeGroupModel,
    layout: &Arc<HilbertLayout>,
) -> Result<LocalOperator> {
    let e = electric_operator(model) * C64::new(params.a / 2.0, 0.0);
    LocalOperator::from_parts(layout, Vec::new(), None, vec![(*link, e)])
}

/// The mass term m a³ ψ̄ψ(x) on one site.
pub fn mass_site_term(
    site: &Site,
    params: &CouplingParams,
    layout: &Arc<HilbertLayout>,
) -> Result<LocalOperator> {
    let fermions = layout.fermions();
    let modes = fermions.site_modes(site)?;
    let d = fermions.internal_dim();
    let g0 = fermions.gamma0();
    let scale = C64::new(params.m * params.a.powi(3), 0.0);
    let n = modes.len();
    let mut mat = crate::sparse::CsrMatrix::zeros(1 << n, 1 << n);
    for i in 0..d {
        for j in 0..d {
            let g = g0[(i, j)];
            if g == C64::new(0.0, 0.0) {
                continue;
            }
            let ai = crate::fermions::annihilator_mode(n, i);
            let aj = crate::fermions::annihilator_mode(n, j);
            mat = mat.add_scaled(&ai.adjoint().matmul(&aj), scale * g);
        }
    }
    LocalOperator::from_parts(layout, modes, Some(mat), Vec::new())
}

impl HamiltonianTerms {
    /// Assemble all terms over a sublattice. The layout must carry exactly
    /// the sublattice's links (and its sites, when fermions are present).
    pub fn assemble(
        lat: &SubLattice,
        params: CouplingParams,
        model: GaugeGroupModel,
        layout: &Arc<HilbertLayout>,
    ) -> Result<Self> {
        for l in lat.links() {
            layout.link_slot(l)?;
        }
        let with_fermions = layout.fermions().modes() > 0;
        if with_fermions {
            for s in lat.sites() {
                layout.fermions().site_index(s)?;
            }
        }
        let mut local_terms = Vec::new();
        for l in lat.links() {
            local_terms.push(electric_term(l, &params, &model, layout)?);
        }
        if with_fermions && params.m != 0.0 {
            for s in lat.sites() {
                local_terms.push(mass_site_term(s, &params, layout)?);
            }
        }
        let mut catalog = BTreeMap::new();
        for p in lat.plaquettes() {
            catalog.insert(
                TermKey::Plaquette(*p),
                plaquette_term(p, &params, &model, layout)?,
            );
        }
        if with_fermions {
            for l in lat.links() {
                catalog.insert(TermKey::Link(*l), hopping_term(l, &params, &model, layout)?);
            }
        }
        let catalog_norms: BTreeMap<TermKey, f64> =
            catalog.iter().map(|(k, v)| (*k, v.norm())).collect();
        let psi_norm = catalog_norms.values().fold(0.0f64, |a, &b| a.max(b));
        Ok(HamiltonianTerms {
            layout: Arc::clone(layout),
            model,
            params,
            local_terms,
            catalog,
            psi_norm,
            catalog_norms,
            h_loc_cache: OnceLock::new(),
            h_int_cache: OnceLock::new(),
            h_cache: OnceLock::new(),
        })
    }

    pub fn catalog_norm(&self, key: &TermKey) -> Option<f64> {
        self.catalog_norms.get(key).copied()
    }

    /// All terms, local first.
    pub fn all_terms(&self) -> impl Iterator<Item = &LocalOperator> {
        self.local_terms.iter().chain(self.catalog.values())
    }

    fn materialize(&self, terms: Vec<&LocalOperator>) -> Result<SparseOperator> {
        let n = self.layout.total_dim();
        if n > SPARSE_DIM_DEFAULT {
            return Err(Error::Budget {
                needed: n,
                budget: SPARSE_DIM_DEFAULT,
                context: "materializing a full Hamiltonian".into(),
            });
        }
        let mut acc = SparseOperator::identity(&self.layout).scaled(C64::new(0.0, 0.0));
        for t in terms {
            acc = acc.add_scaled(&t.embed()?, ONE)?;
        }
        Ok(acc)
    }

    /// The free part H_loc = electric + mass (sum of per-factor terms).
    pub fn h_loc(&self) -> Result<&SparseOperator> {
        if let Some(v) = self.h_loc_cache.get() {
            return Ok(v);
        }
        let v = self.materialize(self.local_terms.iter().collect())?;
        Ok(self.h_loc_cache.get_or_init(|| v))
    }

    /// The bounded interaction H_int = Σ_q Ψ(q).
    pub fn h_int(&self) -> Result<&SparseOperator> {
        if let Some(v) = self.h_int_cache.get() {
            return Ok(v);
        }
        let v = self.materialize(self.catalog.values().collect())?;
        Ok(self.h_int_cache.get_or_init(|| v))
    }

    /// The full Hamiltonian H = H_loc + H_int.
    pub fn h_total(&self) -> Result<&SparseOperator> {
        if let Some(v) = self.h_cache.get() {
            return Ok(v);
        }
        let v = self.h_loc()?.add_scaled(self.h_int()?, ONE)?;
        Ok(self.h_cache.get_or_init(|| v))
    }

    /// Matrix-free application of the full Hamiltonian.
    pub fn apply_h(&self, x: &[C64], y: &mut [C64]) {
        y.fill(C64::new(0.0, 0.0));
        for t in self.all_terms() {
            t.apply_full(x, y, ONE);
        }
    }
}

/// Norms of the bulk interaction terms for given couplings: ‖W̃‖ from a
/// single plaquette and ‖B‖ from a single link (when fermions are present).
/// Both are translation invariant, so minimal auxiliary lattices suffice.
pub fn bulk_term_norms(
    params: &CouplingParams,
    model: &GaugeGroupModel,
    preset: crate::opalg::FermionPreset,
) -> Result<(f64, f64)> {
    let square = SubLattice::induced(
        2,
        vec![
            Site::new(0, 0, 0),
            Site::new(1, 0, 0),
            Site::new(0, 1, 0),
            Site::new(1, 1, 0),
        ],
    )?;
    let gauge_layout =
        HilbertLayout::for_sublattice(&square, model, crate::opalg::FermionPreset::None)?;
    let w_norm = plaquette_term(&square.plaquettes()[0], params, model, &gauge_layout)?.norm();
    let b_norm = if matches!(preset, crate::opalg::FermionPreset::None) {
        0.0
    } else {
        let pair = SubLattice::induced(1, vec![Site::new(0, 0, 0), Site::new(1, 0, 0)])?;
        let layout = HilbertLayout::for_sublattice(&pair, model, preset)?;
        hopping_term(&pair.links()[0], params, model, &layout)?.norm()
    };
    Ok((w_norm, b_norm))
}

/// Σ′_{q ∈ Δ_ambient(inner)} ‖Ψ(q)‖ from the bulk term norms: boundary
/// links weighted by ‖B‖, boundary plaquettes by ‖W̃‖. This is the exact
/// catalog sum whenever all boundary terms are bulk-like, and needs no
/// state space.
pub fn boundary_norm_sum(
    ambient: &SubLattice,
    inner: &SubLattice,
    plaquette_norm: f64,
    hopping_norm: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for e in crate::lattice::boundary_set(ambient, inner, crate::lattice::ElementKind::Both)? {
        acc += match e {
            crate::lattice::Element::Link(_) => hopping_norm,
            crate::lattice::Element::Plaquette(_) => plaquette_norm,
        };
    }
    Ok(acc)
}
