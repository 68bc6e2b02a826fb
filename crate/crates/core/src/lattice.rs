//! Heavy-hex geometries, the 1D snake ordering, gate-layer scheduling and
//! graph lightcones.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unordered edge stored as `(min, max)`.
pub type Edge = (usize, usize);

const EAGLE_JSON: &str = include_str!("../data/eagle127.json");

#[inline]
pub fn norm_edge(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// On-disk geometry description. Only `sites` and `edges` are required.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryFile {
    #[serde(default)]
    pub name: Option<String>,
    pub sites: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub bond_groups: Option<Vec<usize>>,
    #[serde(default)]
    pub snake_order: Option<Vec<usize>>,
    #[serde(default)]
    pub labels: BTreeMap<String, usize>,
    #[serde(default)]
    pub flux_bond: Option<[usize; 2]>,
    #[serde(default)]
    pub coordinates: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub name: String,
    pub site_count: usize,
    /// Sorted, normalized edges.
    pub edges: Vec<Edge>,
    /// Proper edge coloring, parallel to `edges`. Each color class is a set of
    /// disjoint bonds applied simultaneously on hardware.
    pub bond_groups: Vec<usize>,
    pub coordinates: Vec<[f64; 2]>,
    pub labels: BTreeMap<String, usize>,
    pub flux_bond: Option<Edge>,
    snake: Option<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
}

impl Lattice {
    /// Validates and builds a lattice. Bond groups are computed when absent.
    pub fn from_geometry(g: GeometryFile) -> Result<Self> {
        let n = g.sites;
        if n == 0 {
            return Err(Error::InvalidLattice("no sites".into()));
        }
        let mut seen = BTreeSet::new();
        let mut raw = Vec::with_capacity(g.edges.len());
        for (k, [a, b]) in g.edges.iter().copied().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidLattice(format!("edge {k} ({a},{b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidLattice(format!("self-loop at site {a}")));
            }
            let e = norm_edge(a, b);
            if !seen.insert(e) {
                return Err(Error::InvalidLattice(format!("duplicate edge {e:?}")));
            }
            raw.push((e, g.bond_groups.as_ref().and_then(|bg| bg.get(k).copied())));
        }
        if let Some(bg) = &g.bond_groups {
            if bg.len() != raw.len() {
                return Err(Error::InvalidLattice("bond_groups length differs from edges".into()));
            }
        }
        raw.sort_by_key(|(e, _)| *e);
        let edges: Vec<Edge> = raw.iter().map(|(e, _)| *e).collect();

        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        if n > 1 && neighbors.iter().any(|v| v.is_empty()) {
            return Err(Error::InvalidLattice("isolated site".into()));
        }
        if !is_connected(&neighbors) {
            return Err(Error::InvalidLattice("graph is not connected".into()));
        }
        let max_deg = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        if max_deg > 3 {
            log::warn!("lattice has a site of degree {max_deg}; layer scheduling is not tuned for it");
        }

        let bond_groups = match g.bond_groups {
            Some(_) => {
                let bg: Vec<usize> = raw.iter().map(|(_, c)| c.unwrap()).collect();
                check_coloring(&edges, &bg)?;
                bg
            }
            None => edge_coloring(n, &edges, &neighbors),
        };

        let coordinates = match g.coordinates {
            Some(c) if c.len() == n => c,
            Some(_) => return Err(Error::InvalidLattice("coordinates length differs from sites".into())),
            None => (0..n).map(|i| [i as f64, 0.0]).collect(),
        };
        for (k, &s) in &g.labels {
            if s >= n {
                return Err(Error::InvalidLattice(format!("label {k} points to missing site {s}")));
            }
        }
        let flux_bond = match g.flux_bond {
            Some([a, b]) => {
                let e = norm_edge(a, b);
                if edges.binary_search(&e).is_err() {
                    return Err(Error::InvalidLattice(format!("flux bond {e:?} is not an edge")));
                }
                Some(e)
            }
            None => None,
        };
        if let Some(s) = &g.snake_order {
            SnakeOrder::from_sites(s.clone())?;
            if s.len() != n {
                return Err(Error::InvalidLattice("snake order length differs from sites".into()));
            }
        }
        Ok(Lattice {
            name: g.name.unwrap_or_else(|| "custom".into()),
            site_count: n,
            edges,
            bond_groups,
            coordinates,
            labels: g.labels,
            flux_bond,
            snake: g.snake_order,
            neighbors,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_geometry(serde_json::from_str(s)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_geometry(&self) -> GeometryFile {
        GeometryFile {
            name: Some(self.name.clone()),
            sites: self.site_count,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            bond_groups: Some(self.bond_groups.clone()),
            snake_order: self.snake.clone(),
            labels: self.labels.clone(),
            flux_bond: self.flux_bond.map(|(a, b)| [a, b]),
            coordinates: Some(self.coordinates.clone()),
        }
    }

    /// Resolves `eagle127`, `twohex21`, `hex12` or `file:<path>`.
    pub fn from_name(spec: &str) -> Result<Self> {
        match spec {
            "eagle127" => Ok(build_eagle_127()),
            "twohex21" => Ok(build_two_hexagon_21()),
            "hex12" => Ok(build_single_hexagon_12()),
            s if s.starts_with("file:") => Self::from_file(Path::new(&s[5..])),
            other => Err(Error::UnsupportedGeometry(other.to_string())),
        }
    }

    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.neighbors[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.neighbors[site].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&norm_edge(a, b)).is_ok()
    }

    pub fn label(&self, name: &str) -> Option<usize> {
        self.labels.get(name).copied()
    }

    pub fn group_count(&self) -> usize {
        self.bond_groups.iter().max().map_or(0, |m| m + 1)
    }

    /// Length of the shortest cycle, or `None` for a tree.
    pub fn girth(&self) -> Option<usize> {
        let n = self.site_count;
        let mut best: Option<usize> = None;
        for s in 0..n {
            let mut dist = vec![usize::MAX; n];
            let mut parent = vec![usize::MAX; n];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &self.neighbors[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        parent[v] = u;
                        q.push_back(v);
                    } else if parent[u] != v {
                        let c = dist[u] + dist[v] + 1;
                        best = Some(best.map_or(c, |b| b.min(c)));
                    }
                }
            }
        }
        best
    }

    pub fn is_bipartite(&self) -> bool {
        let mut color = vec![u8::MAX; self.site_count];
        color[0] = 0;
        let mut q = VecDeque::from([0]);
        while let Some(u) = q.pop_front() {
            for &v in &self.neighbors[u] {
                if color[v] == u8::MAX {
                    color[v] = 1 - color[u];
                    q.push_back(v);
                } else if color[v] == color[u] {
                    return false;
                }
            }
        }
        true
    }

    /// Graph distances from `site`.
    pub fn distances(&self, site: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.site_count];
        dist[site] = 0;
        let mut q = VecDeque::from([site]);
        while let Some(u) = q.pop_front() {
            for &v in &self.neighbors[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        dist
    }

    /// Copy of the lattice with the given edges removed. Bond groups and the
    /// snake order carry over; the result must stay connected.
    pub fn without_edges(&self, drop: &[Edge]) -> Result<Self> {
        let drop: BTreeSet<Edge> = drop.iter().map(|&(a, b)| norm_edge(a, b)).collect();
        let mut g = self.to_geometry();
        let keep: Vec<usize> = (0..self.edges.len()).filter(|&k| !drop.contains(&self.edges[k])).collect();
        g.edges = keep.iter().map(|&k| [self.edges[k].0, self.edges[k].1]).collect();
        g.bond_groups = Some(keep.iter().map(|&k| self.bond_groups[k]).collect());
        if g.flux_bond.is_some_and(|[a, b]| drop.contains(&norm_edge(a, b))) {
            g.flux_bond = None;
        }
        g.name = Some(format!("{}-cut", self.name));
        Self::from_geometry(g)
    }
}

fn is_connected(nb: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; nb.len()];
    seen[0] = true;
    let mut stack = vec![0];
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &nb[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == nb.len()
}

fn check_coloring(edges: &[Edge], colors: &[usize]) -> Result<()> {
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (&(a, b), &c) in edges.iter().zip(colors) {
        if !used.insert((a, c)) || !used.insert((b, c)) {
            return Err(Error::InvalidLattice(format!("bond group {c} has two bonds at a shared site near {a}-{b}")));
        }
    }
    Ok(())
}

/// Deterministic proper edge coloring. Bipartite graphs get exactly
/// max-degree colors via Kempe-chain swaps; otherwise first-fit.
fn edge_coloring(n: usize, edges: &[Edge], neighbors: &[Vec<usize>]) -> Vec<usize> {
    let delta = neighbors.iter().map(Vec::len).max().unwrap_or(0);
    let bipartite = {
        let mut color = vec![u8::MAX; n];
        color[0] = 0;
        let mut q = VecDeque::from([0]);
        let mut ok = true;
        while let Some(u) = q.pop_front() {
            for &v in &neighbors[u] {
                if color[v] == u8::MAX {
                    color[v] = 1 - color[u];
                    q.push_back(v);
                } else if color[v] == color[u] {
                    ok = false;
                }
            }
        }
        ok
    };
    // at[site][color] = other endpoint
    let ncol = if bipartite { delta } else { 2 * delta };
    let mut at = vec![vec![usize::MAX; ncol.max(1)]; n];
    for &(u, v) in edges {
        let free = |s: usize, at: &Vec<Vec<usize>>| (0..ncol).find(|&c| at[s][c] == usize::MAX);
        let cu = free(u, &at).expect("color available");
        if at[v][cu] == usize::MAX {
            at[u][cu] = v;
            at[v][cu] = u;
            continue;
        }
        if !bipartite {
            let c = (0..ncol).find(|&c| at[u][c] == usize::MAX && at[v][c] == usize::MAX).expect("first-fit color");
            at[u][c] = v;
            at[v][c] = u;
            continue;
        }
        let cv = free(v, &at).expect("color available");
        // Swap the cu/cv alternating path starting at v; in a bipartite graph
        // it never reaches u.
        let mut path = vec![v];
        let mut cur = v;
        let mut want = cu;
        while at[cur][want] != usize::MAX {
            let nxt = at[cur][want];
            path.push(nxt);
            cur = nxt;
            want = if want == cu { cv } else { cu };
        }
        let mut pairs = Vec::new();
        for w in path.windows(2) {
            let c = if at[w[0]][cu] == w[1] { cu } else { cv };
            pairs.push((w[0], w[1], c));
        }
        for &(a, b, c) in &pairs {
            at[a][c] = usize::MAX;
            at[b][c] = usize::MAX;
        }
        for &(a, b, c) in &pairs {
            let d = if c == cu { cv } else { cu };
            at[a][d] = b;
            at[b][d] = a;
        }
        at[u][cu] = v;
        at[v][cu] = u;
    }
    edges.iter().map(|&(u, v)| (0..ncol).find(|&c| at[u][c] == v).expect("edge colored")).collect()
}

/// Eagle 127-qubit heavy-hex device graph with device-style row-major
/// numbering (site 62 is central).
pub fn build_eagle_127() -> Lattice {
    Lattice::from_json_str(EAGLE_JSON).expect("bundled eagle geometry is valid")
}

/// Two 12-site heavy hexagons fused along one heavy edge (sites 5-6-7).
///
/// Left ring: 0..=11 in order. Right ring: 5, 12..=20, 7, 6. Source site 0,
/// detector site 6 (antipodal on the left ring), flux bond (0, 1).
pub fn build_two_hexagon_21() -> Lattice {
    let mut edges: Vec<[usize; 2]> = (0..12).map(|i| [i, (i + 1) % 12]).collect();
    let right = [5, 12, 13, 14, 15, 16, 17, 18, 19, 20, 7];
    edges.extend(right.windows(2).map(|w| [w[0], w[1]]));
    let mut coords = vec![[0.0; 2]; 21];
    let top = [1, 2, 3, 4, 5, 12, 13, 14, 15];
    let bottom = [11, 10, 9, 8, 7, 20, 19, 18, 17];
    for (x, (&t, &b)) in top.iter().zip(&bottom).enumerate() {
        coords[t] = [x as f64, 0.0];
        coords[b] = [x as f64, -2.0];
    }
    coords[0] = [0.0, -1.0];
    coords[6] = [4.0, -1.0];
    coords[16] = [8.0, -1.0];
    let g = GeometryFile {
        name: Some("twohex21".into()),
        sites: 21,
        edges,
        bond_groups: None,
        snake_order: Some(vec![1, 2, 3, 4, 5, 12, 13, 14, 15, 16, 6, 0, 17, 18, 19, 20, 7, 8, 9, 10, 11]),
        labels: BTreeMap::from([("source".into(), 0), ("detector".into(), 6)]),
        flux_bond: Some([0, 1]),
        coordinates: Some(coords),
    };
    Lattice::from_geometry(g).expect("two-hexagon geometry is valid")
}

/// One heavy hexagon: a 12-site ring.
pub fn build_single_hexagon_12() -> Lattice {
    let coords = (0..12)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / 12.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let g = GeometryFile {
        name: Some("hex12".into()),
        sites: 12,
        edges: (0..12).map(|i| [i, (i + 1) % 12]).collect(),
        bond_groups: None,
        snake_order: Some((0..12).collect()),
        labels: BTreeMap::from([("source".into(), 0), ("detector".into(), 6)]),
        flux_bond: Some([0, 1]),
        coordinates: Some(coords),
    };
    Lattice::from_geometry(g).expect("hexagon geometry is valid")
}

/// Bijection between sites and 1D chain positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnakeOrder {
    site_at: Vec<usize>,
    position_of: Vec<usize>,
}

impl SnakeOrder {
    /// `sites[p]` is the site placed at chain position `p`.
    pub fn from_sites(sites: Vec<usize>) -> Result<Self> {
        let n = sites.len();
        let mut position_of = vec![usize::MAX; n];
        for (p, &s) in sites.iter().enumerate() {
            if s >= n || position_of[s] != usize::MAX {
                return Err(Error::InvalidLattice(format!("snake order is not a permutation at {p}")));
            }
            position_of[s] = p;
        }
        Ok(SnakeOrder { site_at: sites, position_of })
    }

    pub fn identity(n: usize) -> Self {
        SnakeOrder { site_at: (0..n).collect(), position_of: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.site_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_at.is_empty()
    }

    pub fn position(&self, site: usize) -> usize {
        self.position_of[site]
    }

    pub fn site(&self, pos: usize) -> usize {
        self.site_at[pos]
    }

    pub fn sites(&self) -> &[usize] {
        &self.site_at
    }

    pub fn span(&self, (a, b): Edge) -> (usize, usize) {
        let (pa, pb) = (self.position_of[a], self.position_of[b]);
        (pa.min(pb), pa.max(pb))
    }
}

/// Chain ordering carried by the geometry. Geometries without one are
/// rejected rather than guessed.
pub fn snake_order(lat: &Lattice) -> Result<SnakeOrder> {
    match &lat.snake {
        Some(s) => SnakeOrder::from_sites(s.clone()),
        None => Err(Error::UnsupportedGeometry(format!("{} has no snake order", lat.name))),
    }
}

/// Largest 1D distance spanned by any edge.
pub fn max_span(lat: &Lattice, order: &SnakeOrder) -> usize {
    lat.edges
        .iter()
        .map(|&e| {
            let (a, b) = order.span(e);
            b - a
        })
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateLayer {
    pub bonds: Vec<Edge>,
    /// Closed chain-position interval of each bond, parallel to `bonds`.
    pub spans: Vec<(usize, usize)>,
    /// Bond group the layer was scheduled from.
    pub group: usize,
}

impl GateLayer {
    /// Checks that no two spans share a chain position.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut s = self.spans.clone();
        s.sort_unstable();
        for w in s.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::OverlappingSpans(w[0], w[1]));
            }
        }
        Ok(())
    }
}

/// Schedules every edge into layers whose spans are pairwise disjoint.
///
/// Each bond group is scheduled on its own: spans sorted by left endpoint
/// (ties by length, then site), each assigned to the compatible layer
/// holding the fewest bonds. The layer count per group equals the maximum
/// number of spans covering one position.
pub fn layer_bonds(lat: &Lattice, order: &SnakeOrder) -> Vec<GateLayer> {
    let mut out = Vec::new();
    for g in 0..lat.group_count() {
        let mut items: Vec<(usize, usize, Edge)> = lat
            .edges
            .iter()
            .zip(&lat.bond_groups)
            .filter(|(_, &c)| c == g)
            .map(|(&e, _)| {
                let (l, r) = order.span(e);
                (l, r, e)
            })
            .collect();
        items.sort_by_key(|&(l, r, e)| (l, r - l, e));
        let mut layers: Vec<(usize, GateLayer)> = Vec::new(); // (last right end, layer)
        for (l, r, e) in items {
            let slot = layers
                .iter()
                .enumerate()
                .filter(|(_, (end, _))| *end < l)
                .min_by_key(|(k, (_, ly))| (ly.bonds.len(), *k))
                .map(|(k, _)| k);
            match slot {
                Some(k) => {
                    layers[k].0 = r;
                    layers[k].1.bonds.push(e);
                    layers[k].1.spans.push((l, r));
                }
                None => layers.push((r, GateLayer { bonds: vec![e], spans: vec![(l, r)], group: g })),
            }
        }
        out.extend(layers.into_iter().map(|(_, ly)| ly));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LightconeMode {
    /// One graph step per round.
    #[default]
    Standard,
    /// One step along each bond group in turn, as when a single-qubit layer
    /// follows every bond group.
    NonCommuting,
}

/// Sites causally connected to `sites` after `depth` rounds.
pub fn lightcone_of(lat: &Lattice, sites: &[usize], depth: usize, mode: LightconeMode) -> BTreeSet<usize> {
    let mut inside = vec![false; lat.site_count];
    for &s in sites {
        inside[s] = true;
    }
    for _ in 0..depth {
        match mode {
            LightconeMode::Standard => {
                let snapshot = inside.clone();
                for &(a, b) in &lat.edges {
                    if snapshot[a] || snapshot[b] {
                        inside[a] = true;
                        inside[b] = true;
                    }
                }
            }
            LightconeMode::NonCommuting => {
                for g in 0..lat.group_count() {
                    for (&(a, b), &c) in lat.edges.iter().zip(&lat.bond_groups) {
                        if c == g && (inside[a] || inside[b]) {
                            inside[a] = true;
                            inside[b] = true;
                        }
                    }
                }
            }
        }
    }
    (0..lat.site_count).filter(|&s| inside[s]).collect()
}

pub fn lightcone(lat: &Lattice, site: usize, depth: usize) -> BTreeSet<usize> {
    lightcone_of(lat, &[site], depth, LightconeMode::Standard)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eagle_basics() {
        let lat = build_eagle_127();
        assert_eq!(lat.site_count, 127);
        assert_eq!(lat.edges.len(), 144);
        let mut hist = [0usize; 4];
        for s in 0..127 {
            hist[lat.degree(s)] += 1;
        }
        assert_eq!(hist, [0, 2, 89, 36]);
        assert_eq!(lat.girth(), Some(12));
        assert!(lat.is_bipartite());
        assert_eq!(lat.label("center"), Some(62));
    }

    #[test]
    fn eagle_layers_and_span() {
        let lat = build_eagle_127();
        let order = snake_order(&lat).unwrap();
        let layers = layer_bonds(&lat, &order);
        assert_eq!(layers.len(), 13);
        let per_group: Vec<usize> = (0..3).map(|g| layers.iter().filter(|l| l.group == g).count()).collect();
        assert_eq!(per_group, vec![5, 4, 4]);
        for l in &layers {
            l.check_disjoint().unwrap();
        }
        assert_eq!(max_span(&lat, &order), 18);
        let total: usize = layers.iter().map(|l| l.bonds.len()).sum();
        assert_eq!(total, 144);
    }

    #[test]
    fn eagle_lightcones() {
        let lat = build_eagle_127();
        assert_eq!(lightcone(&lat, 62, 0).len(), 1);
        let sizes: Vec<usize> = (0..10).map(|d| lightcone(&lat, 62, d).len()).collect();
        assert_eq!(sizes, vec![1, 4, 7, 13, 19, 31, 40, 54, 65, 81]);
        assert_eq!(lightcone_of(&lat, &[62], 4, LightconeMode::NonCommuting).len(), 69);
    }

    #[test]
    fn two_hex_structure() {
        let lat = build_two_hexagon_21();
        assert_eq!(lat.site_count, 21);
        assert_eq!(lat.edges.len(), 22);
        let deg3: Vec<usize> = (0..21).filter(|&s| lat.degree(s) == 3).collect();
        assert_eq!(deg3, vec![5, 7]);
        assert!((0..21).all(|s| (2..=3).contains(&lat.degree(s))));
        assert_eq!(lat.girth(), Some(12));
        assert_eq!(lat.group_count(), 3);
        let order = snake_order(&lat).unwrap();
        for l in layer_bonds(&lat, &order) {
            l.check_disjoint().unwrap();
        }
    }

    #[test]
    fn hexagon_ring() {
        let lat = build_single_hexagon_12();
        assert!((0..12).all(|s| lat.degree(s) == 2));
        assert!(lat.is_bipartite());
        assert_eq!(lat.group_count(), 2);
        let order = snake_order(&lat).unwrap();
        assert_eq!(max_span(&lat, &order), 11);
        let layers = layer_bonds(&lat, &order);
        let mut all: Vec<Edge> = layers.iter().flat_map(|l| l.bonds.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, lat.edges);
    }

    #[test]
    fn rejects_bad_geometry() {
        let dup = r#"{"sites":3,"edges":[[0,1],[1,0],[1,2]]}"#;
        assert!(Lattice::from_json_str(dup).is_err());
        let loop_ = r#"{"sites":2,"edges":[[0,0],[0,1]]}"#;
        assert!(Lattice::from_json_str(loop_).is_err());
        let split = r#"{"sites":4,"edges":[[0,1],[2,3]]}"#;
        assert!(Lattice::from_json_str(split).is_err());
        let lat = Lattice::from_json_str(r#"{"sites":3,"edges":[[0,1],[1,2]]}"#).unwrap();
        assert!(matches!(snake_order(&lat), Err(Error::UnsupportedGeometry(_))));
        assert!(Lattice::from_name("kagome").is_err());
    }

    #[test]
    fn geometry_roundtrip() {
        let lat = build_two_hexagon_21();
        let s = serde_json::to_string(&lat.to_geometry()).unwrap();
        assert_eq!(Lattice::from_json_str(&s).unwrap(), lat);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lightcone_monotone(site in 0usize..127, d in 0usize..12) {
                let lat = build_eagle_127();
                let a = lightcone(&lat, site, d);
                let b = lightcone(&lat, site, d + 1);
                prop_assert!(a.is_subset(&b));
                prop_assert!(b.len() <= 127);
                prop_assert_eq!(lightcone(&lat, site, 40).len(), 127);
            }

            #[test]
            fn snake_inverse(perm in Just((0..127usize).collect::<Vec<_>>()).prop_shuffle()) {
                let o = SnakeOrder::from_sites(perm.clone()).unwrap();
                for s in 0..127 {
                    prop_assert_eq!(o.site(o.position(s)), s);
                }
            }
        }
    }
}
