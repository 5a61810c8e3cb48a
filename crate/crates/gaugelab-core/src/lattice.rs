//! Finite sublattices of the cubic lattice: sites, oriented links, oriented
//! plaquettes, and the boundary/neighbor sets that drive quasi-locality
//! estimates.
//!
//! Links carry the positive orientation (head = tail + eᵢ for a unit basis
//! vector eᵢ). Plaquettes are traversed counterclockwise in their coordinate
//! plane starting from the lexicographically least corner, so two of the four
//! sides are traversed against their orientation and carry sign −1.
//!
//! The boundary set Δ_T(R) of a region R inside a volume T collects the links
//! and plaquettes of T with at least one site in R and at least one site in
//! T\R. On cubes S_d ⊂ S_n in three dimensions the link count is exactly
//! 6(2d+1)² and the plaquette count is at most 24(2d+1)²; a bulk link has 30
//! boundary neighbors (10 links, 20 plaquettes) and a bulk plaquette 48
//! (16 links, 32 plaquettes). Those constants are what the tests pin down.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

/// A lattice site. For dimension d < 3 the unused coordinates are fixed at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site(pub [i32; 3]);

impl Site {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        Site([x, y, z])
    }

    /// Nearest neighbor in the positive `axis` direction.
    pub fn step(&self, axis: usize) -> Site {
        let mut c = self.0;
        c[axis] += 1;
        Site(c)
    }
}

/// A positively oriented link: head = tail + e_axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub tail: Site,
    pub axis: u8,
}

impl Link {
    pub fn new(tail: Site, axis: usize) -> Self {
        debug_assert!(axis < 3);
        Link {
            tail,
            axis: axis as u8,
        }
    }

    pub fn head(&self) -> Site {
        self.tail.step(self.axis as usize)
    }

    /// Both endpoints, tail first.
    pub fn sites(&self) -> [Site; 2] {
        [self.tail, self.head()]
    }
}

/// An oriented unit square, stored by its lexicographically least corner and
/// its coordinate plane (axis_a < axis_b).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Plaquette {
    pub corner: Site,
    pub axis_a: u8,
    pub axis_b: u8,
}

impl Plaquette {
    pub fn new(corner: Site, axis_a: usize, axis_b: usize) -> Self {
        debug_assert!(axis_a < axis_b && axis_b < 3);
        Plaquette {
            corner,
            axis_a: axis_a as u8,
            axis_b: axis_b as u8,
        }
    }

    /// The four corners.
    pub fn sites(&self) -> [Site; 4] {
        let (a, b) = (self.axis_a as usize, self.axis_b as usize);
        let c = self.corner;
        [c, c.step(a), c.step(b), c.step(a).step(b)]
    }

    /// The four sides with traversal signs, counterclockwise from the least
    /// corner: +a, +b (shifted), −a (shifted), −b. Signed link vectors sum
    /// to zero.
    pub fn links(&self) -> [(Link, i8); 4] {
        let (a, b) = (self.axis_a as usize, self.axis_b as usize);
        let c = self.corner;
        [
            (Link::new(c, a), 1),
            (Link::new(c.step(a), b), 1),
            (Link::new(c.step(b), a), -1),
            (Link::new(c, b), -1),
        ]
    }
}

/// A link or a plaquette; the two kinds of interaction support the boundary
/// calculus ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Link(Link),
    Plaquette(Plaquette),
}

impl Element {
    pub fn sites(&self) -> Vec<Site> {
        match self {
            Element::Link(l) => l.sites().to_vec(),
            Element::Plaquette(p) => p.sites().to_vec(),
        }
    }

    pub fn is_link(&self) -> bool {
        matches!(self, Element::Link(_))
    }
}

/// Which elements a boundary query should return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Links,
    Plaquettes,
    Both,
}

/// A finite piece of the cubic lattice: a set of sites, a set of positively
/// oriented links between them, and the plaquettes all four of whose sides
/// are present.
///
/// Disconnected site sets are permitted (they arise as unions of disjoint
/// observable supports); `connected` records whether the graph is connected,
/// and operations that require a connected subgraph check the flag.
#[derive(Debug, Clone)]
pub struct SubLattice {
    dimension: u8,
    sites: Vec<Site>,
    links: Vec<Link>,
    plaquettes: Vec<Plaquette>,
    site_set: HashSet<Site>,
    link_set: HashSet<Link>,
    site_links: HashMap<Site, Vec<Link>>,
    link_plaquettes: HashMap<Link, Vec<Plaquette>>,
    connected: bool,
}

impl SubLattice {
    /// Build from explicit sites and links; plaquettes are derived as the
    /// unit squares whose four sides are all present.
    pub fn new(dimension: usize, sites: Vec<Site>, links: Vec<Link>) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(Error::Precondition(format!(
                "dimension must be 1, 2 or 3, got {dimension}"
            )));
        }
        let mut sites: Vec<Site> = sites.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        sites.sort_unstable();
        let site_set: HashSet<Site> = sites.iter().copied().collect();
        for s in &sites {
            for ax in dimension..3 {
                if s.0[ax] != 0 {
                    return Err(Error::Precondition(format!(
                        "site {:?} uses coordinate {ax} outside dimension {dimension}",
                        s.0
                    )));
                }
            }
        }
        let mut links: Vec<Link> = links.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        links.sort_unstable();
        for l in &links {
            if !site_set.contains(&l.tail) || !site_set.contains(&l.head()) {
                return Err(Error::Precondition(format!(
                    "link {:?} has an endpoint outside the site set",
                    l
                )));
            }
        }
        let link_set: HashSet<Link> = links.iter().copied().collect();

        // Plaquettes: scan possible least corners among the sites.
        let mut plaquettes = Vec::new();
        for &s in &sites {
            for a in 0..dimension {
                for b in (a + 1)..dimension {
                    let p = Plaquette::new(s, a, b);
                    if p.links().iter().all(|(l, _)| link_set.contains(l)) {
                        plaquettes.push(p);
                    }
                }
            }
        }
        plaquettes.sort_unstable();

        let mut site_links: HashMap<Site, Vec<Link>> = HashMap::new();
        for &l in &links {
            for s in l.sites() {
                site_links.entry(s).or_default().push(l);
            }
        }
        let mut link_plaquettes: HashMap<Link, Vec<Plaquette>> = HashMap::new();
        for &p in &plaquettes {
            for (l, _) in p.links() {
                link_plaquettes.entry(l).or_default().push(p);
            }
        }

        let connected = is_connected(&sites, &site_links);

        Ok(SubLattice {
            dimension: dimension as u8,
            sites,
            links,
            plaquettes,
            site_set,
            link_set,
            site_links,
            link_plaquettes,
            connected,
        })
    }

    /// Build from a site set with all induced nearest-neighbor links.
    pub fn induced(dimension: usize, sites: Vec<Site>) -> Result<Self> {
        let site_set: HashSet<Site> = sites.iter().copied().collect();
        let mut links = Vec::new();
        for &s in &sites {
            for ax in 0..dimension {
                if site_set.contains(&s.step(ax)) {
                    links.push(Link::new(s, ax));
                }
            }
        }
        SubLattice::new(dimension, sites, links)
    }

    pub fn dimension(&self) -> usize {
        self.dimension as usize
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn plaquettes(&self) -> &[Plaquette] {
        &self.plaquettes
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn contains_site(&self, s: &Site) -> bool {
        self.site_set.contains(s)
    }

    pub fn contains_link(&self, l: &Link) -> bool {
        self.link_set.contains(l)
    }

    pub fn contains_plaquette(&self, p: &Plaquette) -> bool {
        self.plaquettes.binary_search(p).is_ok()
    }

    pub fn contains_element(&self, e: &Element) -> bool {
        match e {
            Element::Link(l) => self.contains_link(l),
            Element::Plaquette(p) => self.contains_plaquette(p),
        }
    }

    /// Links incident to a site.
    pub fn links_at(&self, s: &Site) -> &[Link] {
        self.site_links.get(s).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Plaquettes containing a link as a side.
    pub fn plaquettes_of(&self, l: &Link) -> &[Plaquette] {
        self.link_plaquettes.get(l).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Site-wise inclusion (links must also be contained).
    pub fn is_subset_of(&self, other: &SubLattice) -> bool {
        self.sites.iter().all(|s| other.contains_site(s))
            && self.links.iter().all(|l| other.contains_link(l))
    }

    /// All elements (links then plaquettes) in deterministic order.
    pub fn elements(&self) -> Vec<Element> {
        let mut out: Vec<Element> = self.links.iter().copied().map(Element::Link).collect();
        out.extend(self.plaquettes.iter().copied().map(Element::Plaquette));
        out
    }

    /// True iff the site sets are disjoint.
    pub fn disjoint(&self, other: &SubLattice) -> bool {
        self.sites.iter().all(|s| !other.contains_site(s))
    }

    /// Smallest sublattice containing both operands (sites and links are
    /// unioned; plaquettes are re-derived from the union of links).
    pub fn union(&self, other: &SubLattice) -> Result<SubLattice> {
        if self.dimension != other.dimension {
            return Err(Error::Precondition(format!(
                "union of sublattices of different dimensions {} and {}",
                self.dimension, other.dimension
            )));
        }
        let sites: Vec<Site> = self
            .sites
            .iter()
            .chain(other.sites.iter())
            .copied()
            .collect();
        let links: Vec<Link> = self
            .links
            .iter()
            .chain(other.links.iter())
            .copied()
            .collect();
        SubLattice::new(self.dimension(), sites, links)
    }

    /// Line-oriented text serialization.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "dim {}", self.dimension).unwrap();
        writeln!(out, "sites {}", self.sites.len()).unwrap();
        for s in &self.sites {
            writeln!(out, "{} {} {}", s.0[0], s.0[1], s.0[2]).unwrap();
        }
        writeln!(out, "links {}", self.links.len()).unwrap();
        for l in &self.links {
            writeln!(out, "{} {} {} {}", l.tail.0[0], l.tail.0[1], l.tail.0[2], l.axis).unwrap();
        }
        writeln!(out, "plaquettes {}", self.plaquettes.len()).unwrap();
        for p in &self.plaquettes {
            writeln!(
                out,
                "{} {} {} {} {}",
                p.corner.0[0], p.corner.0[1], p.corner.0[2], p.axis_a, p.axis_b
            )
            .unwrap();
        }
        out
    }

    /// Parse the line-oriented text format produced by [`SubLattice::to_text`].
    /// The plaquette list is validated against the derived set.
    pub fn from_text(text: &str) -> Result<SubLattice> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty lattice file".into()))?;
        let dim: usize = parse_tagged(header, "dim")?;
        let n_sites: usize = parse_tagged(
            lines
                .next()
                .ok_or_else(|| Error::Parse("missing sites header".into()))?,
            "sites",
        )?;
        let mut sites = Vec::with_capacity(n_sites);
        for _ in 0..n_sites {
            let nums = parse_ints(lines.next().ok_or_else(|| Error::Parse("truncated site list".into()))?, 3)?;
            sites.push(Site::new(nums[0], nums[1], nums[2]));
        }
        let n_links: usize = parse_tagged(
            lines
                .next()
                .ok_or_else(|| Error::Parse("missing links header".into()))?,
            "links",
        )?;
        let mut links = Vec::with_capacity(n_links);
        for _ in 0..n_links {
            let nums = parse_ints(lines.next().ok_or_else(|| Error::Parse("truncated link list".into()))?, 4)?;
            if !(0..3).contains(&nums[3]) {
                return Err(Error::Parse(format!("bad link axis {}", nums[3])));
            }
            links.push(Link::new(Site::new(nums[0], nums[1], nums[2]), nums[3] as usize));
        }
        let n_plaq: usize = parse_tagged(
            lines
                .next()
                .ok_or_else(|| Error::Parse("missing plaquettes header".into()))?,
            "plaquettes",
        )?;
        let mut listed = Vec::with_capacity(n_plaq);
        for _ in 0..n_plaq {
            let nums = parse_ints(lines.next().ok_or_else(|| Error::Parse("truncated plaquette list".into()))?, 5)?;
            listed.push(Plaquette::new(
                Site::new(nums[0], nums[1], nums[2]),
                nums[3] as usize,
                nums[4] as usize,
            ));
        }
        let lat = SubLattice::new(dim, sites, links)?;
        let derived: BTreeSet<Plaquette> = lat.plaquettes.iter().copied().collect();
        let listed: BTreeSet<Plaquette> = listed.into_iter().collect();
        if derived != listed {
            return Err(Error::Parse(format!(
                "plaquette list disagrees with the derived set ({} listed, {} derived)",
                listed.len(),
                derived.len()
            )));
        }
        Ok(lat)
    }
}

fn parse_tagged(line: &str, tag: &str) -> Result<usize> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next()) {
        (Some(t), Some(v)) if t == tag => v
            .parse()
            .map_err(|e| Error::Parse(format!("bad `{tag}` value: {e}"))),
        _ => Err(Error::Parse(format!("expected `{tag} <count>`, got `{line}`"))),
    }
}

fn parse_ints(line: &str, n: usize) -> Result<Vec<i32>> {
    let nums: Vec<i32> = line
        .split_whitespace()
        .map(|t| t.parse::<i32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad integer in `{line}`: {e}")))?;
    if nums.len() != n {
        return Err(Error::Parse(format!(
            "expected {n} integers, got {} in `{line}`",
            nums.len()
        )));
    }
    Ok(nums)
}

fn is_connected(sites: &[Site], site_links: &HashMap<Site, Vec<Link>>) -> bool {
    if sites.len() <= 1 {
        return true;
    }
    let mut seen: HashSet<Site> = HashSet::with_capacity(sites.len());
    let mut queue = VecDeque::new();
    seen.insert(sites[0]);
    queue.push_back(sites[0]);
    while let Some(s) = queue.pop_front() {
        if let Some(ls) = site_links.get(&s) {
            for l in ls {
                for nb in l.sites() {
                    if nb != s && seen.insert(nb) {
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    seen.len() == sites.len()
}

/// The full cube S_n: all sites with |coordᵢ| ≤ n in the first `dimension`
/// axes, with every induced link and plaquette. n = 0 is a single site.
pub fn build_cube(n: usize, dimension: usize) -> Result<SubLattice> {
    if !(1..=3).contains(&dimension) {
        return Err(Error::Precondition(format!(
            "dimension must be 1, 2 or 3, got {dimension}"
        )));
    }
    let r = n as i32;
    let range = |active: bool| if active { -r..=r } else { 0..=0 };
    let mut sites = Vec::new();
    for x in range(dimension >= 1) {
        for y in range(dimension >= 2) {
            for z in range(dimension >= 3) {
                sites.push(Site::new(x, y, z));
            }
        }
    }
    SubLattice::induced(dimension, sites)
}

/// The boundary set Δ_T(R): links and/or plaquettes of T with at least one
/// site in R and at least one site in T\R.
pub fn boundary_set(t: &SubLattice, r: &SubLattice, kind: ElementKind) -> Result<Vec<Element>> {
    if !r.is_subset_of(t) {
        return Err(Error::Precondition(
            "boundary_set requires R ⊆ T (site- and link-wise)".into(),
        ));
    }
    let straddles = |sites: &[Site]| {
        let inside = sites.iter().any(|s| r.contains_site(s));
        let outside = sites
            .iter()
            .any(|s| t.contains_site(s) && !r.contains_site(s));
        inside && outside
    };
    let mut out = Vec::new();
    if matches!(kind, ElementKind::Links | ElementKind::Both) {
        for &l in t.links() {
            if straddles(&l.sites()) {
                out.push(Element::Link(l));
            }
        }
    }
    if matches!(kind, ElementKind::Plaquettes | ElementKind::Both) {
        for &p in t.plaquettes() {
            if straddles(&p.sites()) {
                out.push(Element::Plaquette(p));
            }
        }
    }
    Ok(out)
}

/// The neighbor set Δ_T(q) of a single link or plaquette q: all links and
/// plaquettes of T with a site in q and a site outside q.
pub fn neighbor_set(t: &SubLattice, q: &Element) -> Result<Vec<Element>> {
    if !t.contains_element(q) {
        return Err(Error::Precondition(format!(
            "neighbor_set requires q ∈ T, got {q:?}"
        )));
    }
    let q_sites: BTreeSet<Site> = q.sites().into_iter().collect();
    let straddles = |sites: &[Site]| {
        let inside = sites.iter().any(|s| q_sites.contains(s));
        let outside = sites.iter().any(|s| !q_sites.contains(s));
        inside && outside
    };
    let mut out = Vec::new();
    for &l in t.links() {
        let e = Element::Link(l);
        if e != *q && straddles(&l.sites()) {
            out.push(e);
        }
    }
    for &p in t.plaquettes() {
        let e = Element::Plaquette(p);
        if e != *q && straddles(&p.sites()) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Adjacency table over a volume's elements: `adj[i]` lists the positions of
/// the elements in Δ_T(elements[i]). Used by the path-counting estimates.
pub fn element_adjacency(t: &SubLattice) -> (Vec<Element>, Vec<Vec<u32>>) {
    let elements = t.elements();
    let index: BTreeMap<Element, u32> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (*e, i as u32))
        .collect();
    let adj = elements
        .iter()
        .map(|e| {
            neighbor_set(t, e)
                .expect("element listed by the volume itself")
                .into_iter()
                .map(|n| index[&n])
                .collect()
        })
        .collect();
    (elements, adj)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute oracle: count unit segments and unit squares inside the box
    /// [−n, n]^dim by direct coordinate scans, independent of SubLattice.
    fn brute_box_counts(n: i32, dim: usize) -> (usize, usize, usize) {
        let active = |ax: usize| ax < dim;
        let rng = |ax: usize| if active(ax) { -n..=n } else { 0..=0 };
        let mut sites = 0usize;
        let mut links = 0usize;
        let mut plaqs = 0usize;
        for x in rng(0) {
            for y in rng(1) {
                for z in rng(2) {
                    sites += 1;
                    let c = [x, y, z];
                    for a in 0..dim {
                        if c[a] + 1 <= n {
                            links += 1;
                        }
                        for b in (a + 1)..dim {
                            if c[a] + 1 <= n && c[b] + 1 <= n {
                                plaqs += 1;
                            }
                        }
                    }
                }
            }
        }
        (sites, links, plaqs)
    }

    #[test]
    fn cube_1_3d_counts() {
        let s = build_cube(1, 3).unwrap();
        assert_eq!(s.sites().len(), 27);
        let (bs, bl, bp) = brute_box_counts(1, 3);
        assert_eq!(bs, 27);
        assert_eq!(s.links().len(), bl);
        assert_eq!(s.plaquettes().len(), bp);
        assert_eq!(s.links().len(), 54);
        assert_eq!(s.plaquettes().len(), 36);
        assert!(s.is_connected());
    }

    #[test]
    fn cube_counts_match_brute_oracle() {
        for dim in 1..=3 {
            for n in 0..=2 {
                let s = build_cube(n, dim).unwrap();
                let (bs, bl, bp) = brute_box_counts(n as i32, dim);
                assert_eq!(s.sites().len(), bs, "sites n={n} dim={dim}");
                assert_eq!(s.links().len(), bl, "links n={n} dim={dim}");
                assert_eq!(s.plaquettes().len(), bp, "plaquettes n={n} dim={dim}");
                assert_eq!(s.sites().len(), (2 * n + 1).pow(dim as u32));
            }
        }
    }

    #[test]
    fn path_graph_1d() {
        let s = build_cube(2, 1).unwrap();
        assert_eq!(s.sites().len(), 5);
        assert_eq!(s.links().len(), 4);
        assert_eq!(s.plaquettes().len(), 0);
    }

    #[test]
    fn cube_0_is_single_site() {
        for dim in 1..=3 {
            let s = build_cube(0, dim).unwrap();
            assert_eq!(s.sites().len(), 1);
            assert_eq!(s.links().len(), 0);
        }
    }

    #[test]
    fn plaquette_closure() {
        let s = build_cube(2, 3).unwrap();
        for p in s.plaquettes() {
            let mut total = [0i32; 3];
            for (l, sign) in p.links() {
                total[l.axis as usize] += sign as i32;
            }
            assert_eq!(total, [0, 0, 0], "signed link vectors must close");
            // Composition: sign-adjusted traversal is a closed path.
            let mut pos = p.corner;
            for (l, sign) in p.links() {
                let (from, to) = if sign > 0 {
                    (l.tail, l.head())
                } else {
                    (l.head(), l.tail)
                };
                assert_eq!(pos, from);
                pos = to;
            }
            assert_eq!(pos, p.corner);
        }
    }

    #[test]
    fn boundary_links_exact_closed_form() {
        // |Δ_{S_n}(S_d) ∩ Λ¹| = 6(2d+1)² for every d < n in 3D.
        for (d, n) in [(0usize, 2usize), (1, 3), (1, 2), (2, 4)] {
            let t = build_cube(n, 3).unwrap();
            let r = build_cube(d, 3).unwrap();
            let links = boundary_set(&t, &r, ElementKind::Links).unwrap();
            assert_eq!(
                links.len(),
                6 * (2 * d + 1) * (2 * d + 1),
                "d={d} n={n}"
            );
        }
    }

    #[test]
    fn boundary_s3_s1_values() {
        let t = build_cube(3, 3).unwrap();
        let r = build_cube(1, 3).unwrap();
        let links = boundary_set(&t, &r, ElementKind::Links).unwrap();
        assert_eq!(links.len(), 54);

        // Plaquette count: bounded by 24(2d+1)² = 216; brute enumeration
        // oracle fixes the exact value.
        let plaqs = boundary_set(&t, &r, ElementKind::Plaquettes).unwrap();
        assert!(plaqs.len() <= 216);
        let mut brute = 0usize;
        for p in t.plaquettes() {
            let sites = p.sites();
            let ins = sites.iter().any(|s| r.contains_site(s));
            let outs = sites.iter().any(|s| !r.contains_site(s));
            if ins && outs {
                brute += 1;
            }
        }
        assert_eq!(plaqs.len(), brute);
    }

    #[test]
    fn boundary_of_equal_volumes_is_empty() {
        let t = build_cube(2, 3).unwrap();
        let b = boundary_set(&t, &t, ElementKind::Both).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn boundary_requires_subset() {
        let t = build_cube(1, 3).unwrap();
        let r = build_cube(2, 3).unwrap();
        assert!(boundary_set(&t, &r, ElementKind::Both).is_err());
    }

    #[test]
    fn boundary_plaquette_bound_all_small_cubes() {
        for n in 2..=4usize {
            for d in 0..n {
                let t = build_cube(n, 3).unwrap();
                let r = build_cube(d, 3).unwrap();
                let p = boundary_set(&t, &r, ElementKind::Plaquettes).unwrap();
                assert!(
                    p.len() <= 24 * (2 * d + 1) * (2 * d + 1),
                    "d={d} n={n}: {} > 24(2d+1)²",
                    p.len()
                );
            }
        }
    }

    #[test]
    fn boundary_monotone_in_t() {
        let r = build_cube(1, 3).unwrap();
        let t1 = build_cube(2, 3).unwrap();
        let t2 = build_cube(3, 3).unwrap();
        let b1: BTreeSet<Element> = boundary_set(&t1, &r, ElementKind::Both)
            .unwrap()
            .into_iter()
            .collect();
        let b2: BTreeSet<Element> = boundary_set(&t2, &r, ElementKind::Both)
            .unwrap()
            .into_iter()
            .collect();
        assert!(b1.is_subset(&b2));
    }

    #[test]
    fn bulk_neighbor_counts() {
        let t = build_cube(5, 3).unwrap();
        // Bulk link at the origin.
        let q = Element::Link(Link::new(Site::new(0, 0, 0), 0));
        let nb = neighbor_set(&t, &q).unwrap();
        let links = nb.iter().filter(|e| e.is_link()).count();
        let plaqs = nb.len() - links;
        assert_eq!(links, 10);
        assert_eq!(plaqs, 20);
        assert_eq!(nb.len(), 30);

        // Bulk plaquette at the origin.
        let q = Element::Plaquette(Plaquette::new(Site::new(0, 0, 0), 0, 1));
        let nb = neighbor_set(&t, &q).unwrap();
        let links = nb.iter().filter(|e| e.is_link()).count();
        let plaqs = nb.len() - links;
        assert_eq!(links, 16);
        assert_eq!(plaqs, 32);
        assert_eq!(nb.len(), 48);
    }

    #[test]
    fn neighbor_maxima_over_volume() {
        let t = build_cube(3, 3).unwrap();
        let mut max_link = 0;
        let mut max_plaq = 0;
        for e in t.elements() {
            let n = neighbor_set(&t, &e).unwrap().len();
            match e {
                Element::Link(_) => max_link = max_link.max(n),
                Element::Plaquette(_) => max_plaq = max_plaq.max(n),
            }
        }
        assert_eq!(max_link, 30);
        assert_eq!(max_plaq, 48);
    }

    #[test]
    fn corner_link_has_fewer_neighbors() {
        let t = build_cube(1, 3).unwrap();
        let q = Element::Link(Link::new(Site::new(-1, -1, -1), 0));
        let nb = neighbor_set(&t, &q).unwrap();
        assert!(nb.len() < 30, "corner neighbor count {} not < 30", nb.len());
        // Brute oracle on the S_1 box.
        let q_sites: HashSet<Site> = q.sites().into_iter().collect();
        let mut brute = 0usize;
        for e in t.elements() {
            if e == q {
                continue;
            }
            let sites = e.sites();
            if sites.iter().any(|s| q_sites.contains(s)) && sites.iter().any(|s| !q_sites.contains(s)) {
                brute += 1;
            }
        }
        assert_eq!(nb.len(), brute);
    }

    #[test]
    fn neighbor_requires_membership() {
        let t = build_cube(1, 3).unwrap();
        let q = Element::Link(Link::new(Site::new(5, 0, 0), 0));
        assert!(neighbor_set(&t, &q).is_err());
    }

    #[test]
    fn union_and_disjoint() {
        let s1 = build_cube(1, 3).unwrap();
        let s2 = build_cube(2, 3).unwrap();
        let u = s1.union(&s2).unwrap();
        assert_eq!(u.sites().len(), s2.sites().len());
        assert_eq!(u.links().len(), s2.links().len());
        assert!(!s1.disjoint(&s1));

        // Two disjoint unit links.
        let a = SubLattice::new(
            1,
            vec![Site::new(0, 0, 0), Site::new(1, 0, 0)],
            vec![Link::new(Site::new(0, 0, 0), 0)],
        )
        .unwrap();
        let b = SubLattice::new(
            1,
            vec![Site::new(5, 0, 0), Site::new(6, 0, 0)],
            vec![Link::new(Site::new(5, 0, 0), 0)],
        )
        .unwrap();
        assert!(a.disjoint(&b));
        let u = a.union(&b).unwrap();
        assert_eq!(u.sites().len(), 4);
        assert_eq!(u.links().len(), 2);
        assert!(!u.is_connected());
    }

    #[test]
    fn text_roundtrip() {
        for (n, dim) in [(1usize, 3usize), (2, 2), (3, 1)] {
            let s = build_cube(n, dim).unwrap();
            let text = s.to_text();
            let back = SubLattice::from_text(&text).unwrap();
            assert_eq!(s.sites(), back.sites());
            assert_eq!(s.links(), back.links());
            assert_eq!(s.plaquettes(), back.plaquettes());
        }
    }

    #[test]
    fn dimension_1_and_2_boundaries() {
        // The Δ definitions work uniformly; counts come from enumeration.
        let t = build_cube(3, 1).unwrap();
        let r = build_cube(1, 1).unwrap();
        let b = boundary_set(&t, &r, ElementKind::Both).unwrap();
        assert_eq!(b.len(), 2); // one link sticking out each side

        let t = build_cube(2, 2).unwrap();
        let r = build_cube(1, 2).unwrap();
        let links = boundary_set(&t, &r, ElementKind::Links).unwrap();
        assert_eq!(links.len(), 4 * 3); // 4 sides × (2d+1)
    }
}
