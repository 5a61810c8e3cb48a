//! Shared fixtures for the kernel benchmarks.

use gaugelab_core::hamiltonian::{CouplingParams, HamiltonianTerms};
use gaugelab_core::lattice::{Site, SubLattice};
use gaugelab_core::linkspace::GaugeGroupModel;
use gaugelab_core::opalg::{FermionPreset, HilbertLayout};
use std::sync::Arc;

/// A centered U(1) chain with reduced fermions and default couplings.
pub fn chain_hamiltonian(radius: usize, cutoff: u32) -> Arc<HamiltonianTerms> {
    let sites: Vec<Site> = (-(radius as i32)..=radius as i32)
        .map(|x| Site::new(x, 0, 0))
        .collect();
    let lat = SubLattice::induced(1, sites).unwrap();
    let model = GaugeGroupModel::u1(cutoff);
    let layout = HilbertLayout::for_sublattice(&lat, &model, FermionPreset::Reduced).unwrap();
    let params = CouplingParams::new(1.0, 1.0, 0.5).unwrap();
    Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout).unwrap())
}
