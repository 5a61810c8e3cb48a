//! The named experiments behind each CLI subcommand. Every experiment reads
//! its parameters from the config, writes CSV artifacts plus a JSON manifest
//! into the output directory (atomically), and reports whether all of its
//! internal checks passed.

use crate::config::{Config, ConfigError, ConfigResult};
use gaugelab_core::dynamics::{
    charge_sectors, dyson_cocycle, sector_evolution_difference, EvolutionPlan,
};
use gaugelab_core::gauge::{gauss_projector, GaussConstraint};
use gaugelab_core::ground_state::{ground, subadditivity_check, SubadditivityReport};
use gaugelab_core::hamiltonian::{
    boundary_norm_sum, bulk_term_norms, CouplingParams, HamiltonianTerms,
};
use gaugelab_core::lattice::{
    boundary_set, build_cube, neighbor_set, Element, ElementKind, Link, Plaquette, Site,
    SubLattice,
};
use gaugelab_core::lieb_robinson::{
    bound_3d_tail, commutator_experiment, tau_difference_bound, LRBoundInput,
};
use gaugelab_core::linkspace::{electric_operator, GaugeGroupModel};
use gaugelab_core::opalg::{
    commutator, eigendecompose_dense, largest_singular_dense, operator_norm, FermionPreset,
    HilbertLayout, LocalOperator,
};
use num_complex::Complex64 as C64;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// How a completed experiment run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

pub struct RunContext<'a> {
    pub config: &'a Config,
    pub out_dir: &'a Path,
    pub seed: u64,
}

impl RunContext<'_> {
    fn hash_hex(&self) -> String {
        format!("{:016x}", self.config.hash())
    }

    /// Atomic write: temporary file in the same directory, then rename.
    fn write_artifact(&self, name: &str, contents: &str) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(self.out_dir)?;
        let path = self.out_dir.join(name);
        let tmp = self.out_dir.join(format!("{name}.tmp"));
        std::fs::write(&tmp, contents)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    fn csv_header(&self, experiment: &str, units: &str, columns: &str) -> String {
        format!(
            "# gaugelab {VERSION} experiment={experiment} config_hash={} seed={}\n# units: {units}\n{columns}\n",
            self.hash_hex(),
            self.seed
        )
    }

    fn write_manifest(
        &self,
        experiment: &str,
        outputs: &[String],
        checks_passed: bool,
        started: Instant,
        extra: &[(String, String)],
    ) -> std::io::Result<()> {
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"experiment\": \"{experiment}\",");
        let _ = writeln!(s, "  \"version\": \"{VERSION}\",");
        let _ = writeln!(s, "  \"config_hash\": \"{}\",", self.hash_hex());
        let _ = writeln!(s, "  \"seed\": {},", self.seed);
        let _ = writeln!(s, "  \"checks_passed\": {checks_passed},");
        let _ = writeln!(s, "  \"timing_ms\": {},", started.elapsed().as_millis());
        for (k, v) in extra {
            let _ = writeln!(s, "  \"{k}\": \"{v}\",");
        }
        let quoted: Vec<String> = outputs.iter().map(|o| format!("\"{o}\"")).collect();
        let _ = writeln!(s, "  \"outputs\": [{}]", quoted.join(", "));
        s.push_str("}\n");
        self.write_artifact(&format!("{experiment}-manifest.json"), &s)?;
        Ok(())
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(gaugelab_core::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<gaugelab_core::Error> for RunError {
    fn from(e: gaugelab_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    /// Invalid-input errors (config, preconditions, budgets) exit with 2.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            RunError::Config(_)
                | RunError::Core(gaugelab_core::Error::Precondition(_))
                | RunError::Core(gaugelab_core::Error::Budget { .. })
        )
    }
}

pub type RunResult = Result<Outcome, RunError>;

fn parse_model(c: &Config) -> ConfigResult<GaugeGroupModel> {
    let group = c.str_or("model", "group", "u1").to_lowercase();
    let scale = c.f64_or("model", "laplacian_scale", 1.0)?;
    if scale <= 0.0 {
        return Err(ConfigError("model.laplacian_scale: must be positive".into()));
    }
    match group.as_str() {
        "u1" => {
            let cutoff = c.usize_or("model", "cutoff", 1)?;
            Ok(GaugeGroupModel::u1(cutoff as u32).with_laplacian_scale(scale))
        }
        "su2" => {
            let jmax = c.f64_or("model", "jmax", 0.5)?;
            let two_j = (2.0 * jmax).round();
            if (2.0 * jmax - two_j).abs() > 1e-9 || two_j < 0.0 {
                return Err(ConfigError(format!(
                    "model.jmax: must be a nonnegative half-integer, got {jmax}"
                )));
            }
            Ok(GaugeGroupModel::su2(two_j as u32).with_laplacian_scale(scale))
        }
        other => Err(ConfigError(format!(
            "model.group: unknown group `{other}` (expected u1 or su2)"
        ))),
    }
}

fn parse_couplings(c: &Config) -> Result<CouplingParams, RunError> {
    let a = c.f64_or("couplings", "a", 1.0)?;
    let g = c.f64_or("couplings", "g", 1.0)?;
    let m = c.f64_or("couplings", "m", 0.5)?;
    CouplingParams::new(a, g, m).map_err(RunError::Core)
}

fn parse_preset(c: &Config) -> ConfigResult<FermionPreset> {
    let comps = c.usize_or("fermion", "components", 1)?;
    let gamma0 = c.str_or("fermion", "gamma0", "identity").to_lowercase();
    match (comps, gamma0.as_str()) {
        (0, _) => Ok(FermionPreset::None),
        (1, "identity") => Ok(FermionPreset::Reduced),
        (1, other) => Err(ConfigError(format!(
            "fermion.gamma0: the reduced preset requires identity, got `{other}`"
        ))),
        (4, "identity") => Ok(FermionPreset::Spinor4(gaugelab_core::fermions::Gamma0::Identity)),
        (4, "dirac") => Ok(FermionPreset::Spinor4(gaugelab_core::fermions::Gamma0::Dirac)),
        (n, _) => Err(ConfigError(format!(
            "fermion.components: must be 0, 1 or 4, got {n}"
        ))),
    }
}

struct Budgets {
    dense: usize,
    sparse: usize,
    sector: usize,
}

fn parse_budgets(c: &Config) -> ConfigResult<Budgets> {
    Ok(Budgets {
        dense: c.usize_or("budget", "dense", 2048)?,
        sparse: c.usize_or("budget", "sparse", 200_000)?,
        sector: c.usize_or("budget", "sector", 4_000_000)?,
    })
}

/// Refusal message listing the budget arithmetic.
fn budget_refusal(layout: &HilbertLayout, limit: usize, which: &str) -> RunError {
    let modes = layout.modes();
    let dims: Vec<String> = layout.link_dims().iter().map(|d| d.to_string()).collect();
    RunError::Core(gaugelab_core::Error::Budget {
        needed: layout.total_dim(),
        budget: limit,
        context: format!(
            "{which} path: total_dim = 2^{modes} × {} = {} exceeds the budget {limit}",
            if dims.is_empty() {
                "1".to_string()
            } else {
                dims.join("×")
            },
            layout.total_dim()
        ),
    })
}

/// The centered volume S_radius in the configured dimension (a chain when
/// dimension = 1).
fn volume_lattice(c: &Config, radius: usize) -> Result<SubLattice, RunError> {
    let dimension = c.usize_or("lattice", "dimension", 1)?;
    if !(1..=3).contains(&dimension) {
        return Err(ConfigError(format!("lattice.dimension: must be 1..3, got {dimension}")).into());
    }
    build_cube(radius, dimension).map_err(RunError::Core)
}

/// The electric Casimir on one link, the stock local observable of the
/// bound experiments (unit scale, so ‖A‖ = cutoff²).
fn electric_observable(
    layout: &Arc<HilbertLayout>,
    model: &GaugeGroupModel,
    link: Link,
) -> Result<LocalOperator, RunError> {
    LocalOperator::from_parts(layout, Vec::new(), None, vec![(link, electric_operator(model))])
        .map_err(RunError::Core)
}

/// lattice-audit: boundary/neighbor combinatorics against the closed forms,
/// plus a serialization round-trip of the audited volume.
pub fn lattice_audit(ctx: &RunContext) -> RunResult {
    let started = Instant::now();
    let c = ctx.config;
    let d_values = c.usize_list_or("lattice-audit", "d_values", &[1, 2, 3])?;
    let offset = c.usize_or("lattice-audit", "offset", 2)?;
    let mut rows = String::new();
    let mut all_pass = true;
    let mut check = |rows: &mut String, name: &str, d: usize, n: usize, expected: usize, actual: usize, exact: bool| {
        let pass = if exact {
            actual == expected
        } else {
            actual <= expected
        };
        all_pass &= pass;
        let _ = writeln!(rows, "{name},{d},{n},{expected},{actual},{pass}");
    };
    for &d in &d_values {
        let n = d + offset;
        let t = build_cube(n, 3)?;
        let r = build_cube(d, 3)?;
        let links = boundary_set(&t, &r, ElementKind::Links)?.len();
        check(&mut rows, "boundary-links", d, n, 6 * (2 * d + 1).pow(2), links, true);
        let plaqs = boundary_set(&t, &r, ElementKind::Plaquettes)?.len();
        check(&mut rows, "boundary-plaquettes-upper", d, n, 24 * (2 * d + 1).pow(2), plaqs, false);
        let bulk_link = Element::Link(Link::new(Site::new(0, 0, 0), 0));
        check(&mut rows, "bulk-link-neighbors", d, n, 30, neighbor_set(&t, &bulk_link)?.len(), true);
        let bulk_plaq = Element::Plaquette(Plaquette::new(Site::new(0, 0, 0), 0, 1));
        check(&mut rows, "bulk-plaquette-neighbors", d, n, 48, neighbor_set(&t, &bulk_plaq)?.len(), true);
    }
    // Text-format round-trip of an audited volume (or a user-provided file).
    let lattice_file = c.str_or("lattice-audit", "lattice_file", "");
    let reference = if lattice_file.is_empty() {
        let n = d_values.iter().max().copied().unwrap_or(1) + offset;
        build_cube(n.min(3), 3)?
    } else {
        SubLattice::from_text(&std::fs::read_to_string(lattice_file)?)?
    };
    let text = reference.to_text();
    let back = SubLattice::from_text(&text)?;
    let roundtrip = back.sites() == reference.sites()
        && back.links() == reference.links()
        && back.plaquettes() == reference.plaquettes();
    all_pass &= roundtrip;
    let _ = writeln!(
        rows,
        "serialization-roundtrip,0,0,{},{},{roundtrip}",
        reference.sites().len(),
        back.sites().len()
    );
    let lattice_path = ctx.write_artifact("audited.lattice", &text)?;

    let header = ctx.csv_header(
        "lattice-audit",
        "counts are exact integers",
        "check,d,n,expected,actual,pass",
    );
    let csv = ctx.write_artifact("lattice-audit.csv", &format!("{header}{rows}"))?;
    ctx.write_manifest(
        "lattice-audit",
        &[
            csv.display().to_string(),
            lattice_path.display().to_string(),
        ],
        all_pass,
        started,
        &[],
    )?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

/// lr-verify: measured commutator norms against the generic bound (and the
/// 3D closed form when it applies).
pub fn lr_verify(ctx: &RunContext) -> RunResult {
    let started = Instant::now();
    let c = ctx.config;
    let model = parse_model(c)?;
    let params = parse_couplings(c)?;
    let preset = parse_preset(c)?;
    let budgets = parse_budgets(c)?;
    let radius = c.usize_or("lr-verify", "radius", 4)?;
    let t_grid = c.list_or("lr-verify", "t_grid", &[0.25, 0.5, 1.0])?;
    let order_cap = c.usize_or("lr-verify", "order_cap", 20)?;
    let lat = volume_lattice(c, radius)?;
    let layout = HilbertLayout::for_sublattice(&lat, &model, preset)?;
    if layout.total_dim() > budgets.sector {
        return Err(budget_refusal(&layout, budgets.sector, "sector"));
    }
    let h = Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout)?);
    let leftmost = lat.links()[0];
    let rightmost = *lat.links().last().unwrap();
    let a = electric_observable(&layout, &model, leftmost)?;
    let d = electric_observable(&layout, &model, rightmost)?;
    let rows = commutator_experiment(&h, &lat, &a, &d, &t_grid, order_cap)?;
    let mut csv_rows = String::new();
    let mut all_pass = true;
    for r in &rows {
        all_pass &= !r.violation;
        // The closed form needs 3D cube geometry; on chains the column is
        // left empty.
        let closed = if lat.dimension() == 3 {
            let input = LRBoundInput {
                d: 0,
                n: radius,
                t: r.t,
                psi_norm: h.psi_norm,
                a_norm: a.norm(),
                d_norm: d.norm(),
                dimension: 3,
            };
            bound_3d_tail(&input).map(|v| v.to_string()).unwrap_or_default()
        } else {
            String::new()
        };
        let _ = writeln!(csv_rows, "{},{},{},{closed}", r.t, r.measured, r.bound);
    }
    let header = ctx.csv_header(
        "lr-verify",
        "t in inverse energy; norms dimensionless; A/D = unit-scale electric Casimir on the end links",
        "t,measured,generic_bound,closed_form_bound",
    );
    let csv = ctx.write_artifact("lr-verify.csv", &format!("{header}{csv_rows}"))?;
    ctx.write_manifest(
        "lr-verify",
        &[csv.display().to_string()],
        all_pass,
        started,
        &[("volume_sites".into(), lat.sites().len().to_string())],
    )?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

/// converge: finite-volume Cauchy differences with their bounds.
pub fn converge(ctx: &RunContext) -> RunResult {
    let started = Instant::now();
    let c = ctx.config;
    let model = parse_model(c)?;
    let params = parse_couplings(c)?;
    let preset = parse_preset(c)?;
    let budgets = parse_budgets(c)?;
    let radii = c.usize_list_or("converge", "radii", &[1, 2, 3, 4])?;
    let t = c.f64_or("converge", "t", 0.5)?;
    if radii.len() < 2 {
        return Err(ConfigError("converge.radii: need at least two volumes".into()).into());
    }
    let central = Link::new(Site::new(0, 0, 0), 0);
    let (w_norm, b_norm) = bulk_term_norms(&params, &model, preset)?;
    let mut csv_rows = String::new();
    let mut all_pass = true;
    for w in radii.windows(2) {
        let small = volume_lattice(c, w[0])?;
        let big = volume_lattice(c, w[1])?;
        let layout_s = HilbertLayout::for_sublattice(&small, &model, preset)?;
        let layout_b = HilbertLayout::for_sublattice(&big, &model, preset)?;
        if layout_b.total_dim() > budgets.sector {
            return Err(budget_refusal(&layout_b, budgets.sector, "sector"));
        }
        let h_s = Arc::new(HamiltonianTerms::assemble(&small, params, model, &layout_s)?);
        let h_b = Arc::new(HamiltonianTerms::assemble(&big, params, model, &layout_b)?);
        let a_s = electric_observable(&layout_s, &model, central)?;
        let a_b = electric_observable(&layout_b, &model, central)?;
        let sectors = charge_sectors(&h_b)?;
        let diff = sector_evolution_difference(&h_b, &sectors, &h_s, &a_s, &a_b, &[t])?[0];
        let boundary_sum = boundary_norm_sum(&big, &small, w_norm, b_norm)?;
        let r_vol = SubLattice::induced(1, vec![Site::new(0, 0, 0), Site::new(1, 0, 0)])?;
        let bound = tau_difference_bound(
            &small,
            &big,
            &r_vol,
            h_b.psi_norm,
            a_s.norm(),
            boundary_sum,
            t,
            1e-12,
            20,
        )?;
        all_pass &= diff <= bound;
        let _ = writeln!(csv_rows, "{},{t},{diff},{bound}", big.sites().len());
    }
    let header = ctx.csv_header(
        "converge",
        "volume in sites; diff_norm = ‖α^{S_{k+1}}_t(A) − α^{S_k}_t(A)‖; A = electric Casimir on the central link",
        "volume,t,diff_norm,lr_bound",
    );
    let csv = ctx.write_artifact("converge.csv", &format!("{header}{csv_rows}"))?;
    ctx.write_manifest(
        "converge",
        &[csv.display().to_string()],
        all_pass,
        started,
        &[("t_grid".into(), format!("single point t={t}"))],
    )?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

/// dyson: truncation error of the cocycle expansion against its certificate.
pub fn dyson(ctx: &RunContext) -> RunResult {
    let started = Instant::now();
    let c = ctx.config;
    let model = parse_model(c)?;
    let params = parse_couplings(c)?;
    let preset = parse_preset(c)?;
    let budgets = parse_budgets(c)?;
    let radius = c.usize_or("dyson", "radius", 1)?;
    let t = c.f64_or("dyson", "t", 0.04)?;
    let max_order = c.usize_or("dyson", "max_order", 6)?;
    let lat = volume_lattice(c, radius)?;
    let layout = HilbertLayout::for_sublattice(&lat, &model, preset)?;
    if layout.total_dim() > budgets.dense {
        return Err(budget_refusal(&layout, budgets.dense, "dense"));
    }
    let h = Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout)?);
    let plan = EvolutionPlan::dense(Arc::clone(&h))?;
    let b = electric_observable(&layout, &model, lat.links()[0])?
        .embed()?
        .to_dense();
    let exact = plan.cocycle_exact(&b, t)?;
    let mut csv_rows = String::new();
    let mut all_pass = true;
    for order in 1..=max_order {
        let r = dyson_cocycle(&plan, &b, t, order)?;
        let err = largest_singular_dense(&(&r.operator - &exact));
        let ok = err <= r.tail_bound + r.quadrature_defect + 1e-12;
        all_pass &= ok;
        let _ = writeln!(
            csv_rows,
            "{order},{err},{},{}",
            r.tail_bound, r.quadrature_defect
        );
    }
    let header = ctx.csv_header(
        "dyson",
        "diff_norm = ‖series_N − exact cocycle‖; tail_bound = Σ_{n>N}(2‖H_int‖|t|)ⁿ/n!·‖B‖",
        "order,diff_norm,tail_bound,quadrature_defect",
    );
    let csv = ctx.write_artifact("dyson.csv", &format!("{header}{csv_rows}"))?;
    ctx.write_manifest("dyson", &[csv.display().to_string()], all_pass, started, &[])?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

/// Ground energy summary that scales: dense eigensolve or per-sector exact
/// diagonalization, merged for degeneracy and gap.
fn ground_summary(
    h: &Arc<HamiltonianTerms>,
    budgets: &Budgets,
) -> Result<(f64, usize, f64), RunError> {
    let dim = h.layout.total_dim();
    if dim <= budgets.dense {
        let g = ground(h.h_total()?, 1e-10)?;
        return Ok((g.lambda, g.degeneracy, g.gap));
    }
    if dim > budgets.sector {
        return Err(budget_refusal(&h.layout, budgets.sector, "sector"));
    }
    let sectors = charge_sectors(h)?;
    let terms: Vec<(&LocalOperator, C64)> = h
        .all_terms()
        .map(|t| (t, C64::new(1.0, 0.0)))
        .collect();
    let mut lowest: Vec<f64> = Vec::new();
    for s in 0..sectors.space.len() {
        let block = sectors.space.build_block(s, &terms)?;
        let (vals, _) = eigendecompose_dense(&block);
        lowest.extend(vals.into_iter().take(2));
    }
    lowest.sort_by(f64::total_cmp);
    let lambda = lowest[0];
    let window = 1e-10_f64.max(1e-12 * lowest.last().unwrap_or(&1.0).abs());
    let degeneracy = lowest.iter().take_while(|&&v| v - lambda <= window).count();
    let gap = lowest
        .iter()
        .find(|&&v| v - lambda > window)
        .map(|v| v - lambda)
        .unwrap_or(0.0);
    Ok((lambda, degeneracy, gap))
}

/// ground: per-volume spectra summary, optionally with subadditivity splits.
pub fn ground_experiment(ctx: &RunContext, subadditivity: bool) -> RunResult {
    let started = Instant::now();
    let c = ctx.config;
    let model = parse_model(c)?;
    let params = parse_couplings(c)?;
    let preset = parse_preset(c)?;
    let budgets = parse_budgets(c)?;
    let radii = c.usize_list_or("ground", "radii", &[1, 2, 3])?;
    let mut csv_rows = String::new();
    let mut outputs = Vec::new();
    let mut all_pass = true;
    for &r in &radii {
        let lat = volume_lattice(c, r)?;
        let layout = HilbertLayout::for_sublattice(&lat, &model, preset)?;
        let h = Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout)?);
        let (lambda, degeneracy, gap) = ground_summary(&h, &budgets)?;
        let _ = writeln!(csv_rows, "{},{lambda},{degeneracy},{gap}", lat.sites().len());
    }
    let header = ctx.csv_header(
        "ground",
        "volume in sites; lambda = lowest eigenvalue; gap to the next distinct level",
        "volume,lambda,degeneracy,gap",
    );
    let csv = ctx.write_artifact("ground.csv", &format!("{header}{csv_rows}"))?;
    outputs.push(csv.display().to_string());

    if subadditivity {
        let split = c.usize_or("ground", "split", 0)?;
        let mut rows = String::new();
        for &r in &radii {
            let m_sites = 2 * r + 1;
            let n_sites = if split > 0 && split < m_sites {
                split
            } else {
                m_sites / 2
            };
            let m_vol = volume_lattice(c, r)?;
            let dimension = c.usize_or("lattice", "dimension", 1)?;
            if dimension != 1 {
                return Err(ConfigError(
                    "ground.split: subadditivity splits are defined for chains (dimension = 1)"
                        .into(),
                )
                .into());
            }
            let lo = -(r as i32);
            let n_vol = SubLattice::induced(
                1,
                (lo..lo + n_sites as i32).map(|x| Site::new(x, 0, 0)).collect(),
            )?;
            let rep: SubadditivityReport = subadditivity_check(
                &m_vol,
                &n_vol,
                params,
                model,
                preset,
                None,
                1e-10,
            )?;
            all_pass &= rep.pass;
            let _ = writeln!(
                rows,
                "{m_sites},{n_sites},{},{},{},{},{},{},{}",
                rep.lambda_m,
                rep.lambda_n,
                rep.lambda_complement,
                rep.lhs,
                rep.rhs_exact,
                rep.pass,
                rep.slack
            );
        }
        let header2 = ctx.csv_header(
            "ground-subadditivity",
            "lhs = λ_n + λ_{m\\n} − λ_m; rhs = −Σ′ ‖Ψ(q)‖ over the split boundary",
            "sites_m,sites_n,lambda_m,lambda_n,lambda_complement,lhs,rhs_exact,pass,slack",
        );
        let csv2 = ctx.write_artifact("ground-subadditivity.csv", &format!("{header2}{rows}"))?;
        outputs.push(csv2.display().to_string());
    }
    ctx.write_manifest("ground", &outputs, all_pass, started, &[])?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

/// gauss: projector certification, commutator norms, and reduced dimensions.
pub fn gauss(ctx: &RunContext) -> RunResult {
    let started = Instant::now();
    let c = ctx.config;
    let model = parse_model(c)?;
    let params = parse_couplings(c)?;
    let preset = parse_preset(c)?;
    let budgets = parse_budgets(c)?;
    let radius = c.usize_or("gauss", "radius", 1)?;
    let defect_tol = c.f64_or("gauss", "defect_tol", 1e-10)?;
    let lat = volume_lattice(c, radius)?;
    let layout = HilbertLayout::for_sublattice(&lat, &model, preset)?;
    if layout.total_dim() > budgets.sparse {
        return Err(budget_refusal(&layout, budgets.sparse, "sparse"));
    }
    let h = Arc::new(HamiltonianTerms::assemble(&lat, params, model, &layout)?);
    // The assembled Hamiltonian is cached between runs in the documented
    // binary operator format, keyed by the config hash.
    let cache_name = format!("h-{:016x}.op", ctx.config.hash());
    let cache_path = ctx.out_dir.join(&cache_name);
    let h_full: gaugelab_core::opalg::SparseOperator = if cache_path.exists() {
        let mut f = std::io::BufReader::new(std::fs::File::open(&cache_path)?);
        let mat = gaugelab_core::sparse::CsrMatrix::read_binary(&mut f)?;
        if mat.nrows() != layout.total_dim() {
            return Err(ConfigError(format!(
                "stale operator cache {cache_name}: dimension {} vs layout {}",
                mat.nrows(),
                layout.total_dim()
            ))
            .into());
        }
        gaugelab_core::opalg::SparseOperator {
            layout: Arc::clone(&layout),
            mat,
            support: Default::default(),
            parity: gaugelab_core::opalg::Parity::Even,
        }
    } else {
        let full = h.h_total()?.clone();
        let mut buf = Vec::new();
        full.mat.write_binary(&mut buf)?;
        std::fs::create_dir_all(ctx.out_dir)?;
        let tmp = ctx.out_dir.join(format!("{cache_name}.tmp"));
        std::fs::write(&tmp, &buf)?;
        std::fs::rename(&tmp, &cache_path)?;
        full
    };
    let proj = gauss_projector(&layout, &model, &GaussConstraint::default(), defect_tol)?;
    let mut rows = String::new();
    let mut all_pass = true;
    let mut check = |rows: &mut String, name: &str, value: f64, threshold: f64| {
        let pass = value <= threshold;
        all_pass &= pass;
        let _ = writeln!(rows, "{name},{value},{threshold},{pass}");
    };
    let p = &proj.op;
    let idempotent = operator_norm(&p.matmul(p)?.add_scaled(p, C64::new(-1.0, 0.0))?, 1e-11)?;
    check(&mut rows, "projector-idempotent", idempotent, defect_tol);
    check(&mut rows, "projector-hermitian", p.hermitian_deviation(), defect_tol);
    let comm = commutator(p, &h_full)?;
    check(&mut rows, "projector-commutes-with-h", operator_norm(&comm, 1e-11)?, defect_tol);
    let _ = writeln!(rows, "reduced-dimension,{},{},true", proj.rank, layout.total_dim());
    // Reduced Hamiltonian: its lowest eigenvalue dominates the global one
    // (dense-scale volumes only).
    if layout.total_dim() <= budgets.dense {
        let reduced = gaugelab_core::gauge::reduce_observable(&h_full, &proj, 1e-8)?;
        if reduced.dim > 0 {
            let (vals, _) = eigendecompose_dense(&reduced.matrix);
            let global = ground(&h_full, 1e-10)?.lambda;
            let pass = vals[0] >= global - 1e-9;
            all_pass &= pass;
            let _ = writeln!(rows, "reduced-ground-dominates,{},{global},{pass}", vals[0]);
        }
    }
    let header = ctx.csv_header(
        "gauss",
        "norms dimensionless; thresholds absolute",
        "check,value,threshold,pass",
    );
    let csv = ctx.write_artifact("gauss.csv", &format!("{header}{rows}"))?;
    ctx.write_manifest(
        "gauss",
        &[csv.display().to_string()],
        all_pass,
        started,
        &[("projector_defect".into(), proj.defect.to_string())],
    )?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}

/// run: execute the experiment list from the config (may be empty, which
/// produces only the manifest).
pub fn run_all(ctx: &RunContext) -> RunResult {
    let started = Instant::now();
    let list = ctx.config.str_list_or("run", "experiments");
    let mut outcome = Outcome::Success;
    for name in &list {
        let sub = dispatch(name, ctx, false)?;
        if sub == Outcome::ChecksFailed {
            outcome = Outcome::ChecksFailed;
        }
    }
    ctx.write_manifest(
        "run",
        &list,
        outcome == Outcome::Success,
        started,
        &[("experiments".into(), list.len().to_string())],
    )?;
    Ok(outcome)
}

/// Dispatch by experiment name; unknown names are an input error.
pub fn dispatch(name: &str, ctx: &RunContext, subadditivity: bool) -> RunResult {
    match name {
        "lattice-audit" => lattice_audit(ctx),
        "lr-verify" => lr_verify(ctx),
        "converge" => converge(ctx),
        "dyson" => dyson(ctx),
        "ground" => ground_experiment(ctx, subadditivity),
        "gauss" => gauss(ctx),
        "run" => run_all(ctx),
        other => Err(ConfigError(format!("unknown experiment `{other}`")).into()),
    }
}
