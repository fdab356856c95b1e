//! Equal-area hexagonal cartograms.
//!
//! Every region gets exactly one pointy-top hexagon on an axial grid. Layouts
//! are seeded by snapping normalized centroids to their nearest hex (contested
//! hexes are settled by an optimal assignment) and then refined by seeded
//! hill climbing over relocate and swap moves, minimizing
//!
//! ```text
//! total = Σ |hex_center(region) - centroid(region)|² + λ_adj · (adjacent pairs not on neighboring hexes)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ingest::{normalize_region_code, RegionGeometry};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Region code → geographic centroid.
pub type Centroids = BTreeMap<String, Point>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AxialCoord {
    pub q: i32,
    pub r: i32,
}

impl AxialCoord {
    pub const ORIGIN: AxialCoord = AxialCoord { q: 0, r: 0 };

    pub const DIRECTIONS: [AxialCoord; 6] = [
        AxialCoord { q: 1, r: 0 },
        AxialCoord { q: 1, r: -1 },
        AxialCoord { q: 0, r: -1 },
        AxialCoord { q: -1, r: 0 },
        AxialCoord { q: -1, r: 1 },
        AxialCoord { q: 0, r: 1 },
    ];

    pub const fn new(q: i32, r: i32) -> Self {
        AxialCoord { q, r }
    }

    pub fn neighbors(self) -> [AxialCoord; 6] {
        Self::DIRECTIONS.map(|d| AxialCoord::new(self.q + d.q, self.r + d.r))
    }

    pub fn distance(self, other: AxialCoord) -> u32 {
        let dq = self.q - other.q;
        let dr = self.r - other.r;
        ((dq.abs() + dr.abs() + (dq + dr).abs()) / 2) as u32
    }

    /// All hexes within `radius` steps, in (q, r) order.
    pub fn within(self, radius: u32) -> Vec<AxialCoord> {
        let n = radius as i32;
        let mut out = Vec::new();
        for dq in -n..=n {
            for dr in (-n).max(-dq - n)..=n.min(-dq + n) {
                out.push(AxialCoord::new(self.q + dq, self.r + dr));
            }
        }
        out
    }
}

/// Center of a pointy-top hex with circumradius `size`.
pub fn hex_center(c: AxialCoord, size: f64) -> (f64, f64) {
    let q = c.q as f64;
    let r = c.r as f64;
    (size * SQRT3 * (q + r / 2.0), size * 1.5 * r)
}

/// The hex containing a point.
pub fn pixel_to_hex(p: Point, size: f64) -> AxialCoord {
    let q = (SQRT3 / 3.0 * p.x - p.y / 3.0) / size;
    let r = (2.0 / 3.0 * p.y) / size;
    let s = -q - r;
    let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    AxialCoord::new(rq as i32, rr as i32)
}

/// Undirected region adjacency, stored as ordered pairs `(a, b)` with `a < b`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AdjacencyGraph {
    edges: BTreeSet<(String, String)>,
}

impl AdjacencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut g = Self::new();
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, a: impl Into<String>, b: impl Into<String>) -> Result<()> {
        let (a, b) = (a.into(), b.into());
        if a == b {
            return Err(Error::Contract(format!("self-loop on {a}")));
        }
        let edge = if a < b { (a, b) } else { (b, a) };
        self.edges.insert(edge);
        Ok(())
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&(a.to_string(), b.to_string()))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn neighbors<'a>(&'a self, code: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges().filter_map(move |(a, b)| {
            if a == code {
                Some(b)
            } else if b == code {
                Some(a)
            } else {
                None
            }
        })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Regions are adjacent when they share at least two boundary vertices
/// within `tolerance` of each other, i.e. a boundary segment.
pub fn derive_adjacency(geoms: &[RegionGeometry], tolerance: f64) -> AdjacencyGraph {
    let tolerance = tolerance.max(0.0);
    // distinct vertices per region
    let mut vertices: Vec<Vec<Point>> = Vec::with_capacity(geoms.len());
    let mut extent = 0.0f64;
    for g in geoms {
        let mut seen = BTreeSet::new();
        let mut vs = Vec::new();
        for ring in g.polygons.iter().flat_map(|p| p.rings()) {
            for p in &ring[..ring.len().saturating_sub(1)] {
                if seen.insert((p.x.to_bits(), p.y.to_bits())) {
                    extent = extent.max(p.x.abs()).max(p.y.abs());
                    vs.push(*p);
                }
            }
        }
        vertices.push(vs);
    }

    let cell = tolerance.max(extent * 1e-12).max(f64::MIN_POSITIVE);
    let key = |p: Point| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<(usize, Point)>> = HashMap::new();
    for (i, vs) in vertices.iter().enumerate() {
        for p in vs {
            grid.entry(key(*p)).or_default().push((i, *p));
        }
    }

    let mut shared: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, vs) in vertices.iter().enumerate() {
        for p in vs {
            let (kx, ky) = key(*p);
            let mut matched = BTreeSet::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = grid.get(&(kx + dx, ky + dy)) else { continue };
                    for (b, q) in bucket {
                        if *b != a && (p.x - q.x).hypot(p.y - q.y) <= tolerance {
                            matched.insert(*b);
                        }
                    }
                }
            }
            for b in matched {
                *shared.entry((a, b)).or_default() += 1;
            }
        }
    }

    let mut g = AdjacencyGraph::new();
    for ((a, b), n) in shared {
        if n >= 2 {
            g.add_edge(geoms[a].region_code.clone(), geoms[b].region_code.clone())
                .expect("distinct regions");
        }
    }
    g
}

/// Injective assignment of regions to hexes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HexLayout {
    cells: BTreeMap<String, AxialCoord>,
    /// Hex circumradius in layout units.
    pub hex_size: f64,
}

impl HexLayout {
    pub fn new(cells: BTreeMap<String, AxialCoord>, hex_size: f64) -> Result<Self> {
        if !(hex_size > 0.0 && hex_size.is_finite()) {
            return Err(Error::Layout(format!("hex size {hex_size} must be positive")));
        }
        let mut taken: HashMap<AxialCoord, &str> = HashMap::new();
        for (code, c) in &cells {
            if let Some(other) = taken.insert(*c, code) {
                return Err(Error::Layout(format!(
                    "regions {other} and {code} share hex ({}, {})",
                    c.q, c.r
                )));
            }
        }
        Ok(HexLayout { cells, hex_size })
    }

    pub fn get(&self, code: &str) -> Option<AxialCoord> {
        self.cells.get(code).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, AxialCoord)> {
        self.cells.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn center(&self, code: &str) -> Option<(f64, f64)> {
        self.get(code).map(|c| hex_center(c, self.hex_size))
    }

    pub fn with_hex_size(mut self, hex_size: f64) -> Result<Self> {
        if !(hex_size > 0.0 && hex_size.is_finite()) {
            return Err(Error::Layout(format!("hex size {hex_size} must be positive")));
        }
        self.hex_size = hex_size;
        Ok(self)
    }

    pub fn is_injective(&self) -> bool {
        self.cells.values().collect::<BTreeSet<_>>().len() == self.cells.len()
    }
}

/// Centroids recentered on their mean, flipped so north is up in screen
/// coordinates, and scaled so the mean nearest-neighbor spacing equals the hex
/// pitch (`√3 · hex_size`).
pub fn normalize_centroids(centroids: &Centroids, hex_size: f64) -> Centroids {
    let n = centroids.len();
    if n == 0 {
        return Centroids::new();
    }
    let (sx, sy) = centroids
        .values()
        .fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    let mean = Point::new(sx / n as f64, sy / n as f64);
    let nn = mean_nearest_neighbor(centroids.values().copied());
    let scale = if nn > 0.0 { SQRT3 * hex_size / nn } else { 1.0 };
    centroids
        .iter()
        .map(|(k, p)| {
            (
                k.clone(),
                Point::new((p.x - mean.x) * scale, -(p.y - mean.y) * scale),
            )
        })
        .collect()
}

fn nearest_neighbor_distances(points: &[Point]) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p.x - q.x).hypot(p.y - q.y))
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect()
}

fn mean_nearest_neighbor(points: impl Iterator<Item = Point>) -> f64 {
    let pts: Vec<Point> = points.collect();
    let d = nearest_neighbor_distances(&pts);
    if d.is_empty() {
        0.0
    } else {
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Default adjacency weight: ten times the mean squared nearest-centroid
/// spacing, measured in normalized layout units.
pub fn default_adjacency_weight(centroids: &Centroids, hex_size: f64) -> f64 {
    let norm = normalize_centroids(centroids, hex_size);
    let pts: Vec<Point> = norm.values().copied().collect();
    let d = nearest_neighbor_distances(&pts);
    if d.is_empty() {
        return 10.0 * 3.0 * hex_size * hex_size;
    }
    10.0 * d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayoutCost {
    pub displacement: f64,
    pub adjacency_penalty: u64,
    pub total: f64,
}

/// Indexed problem shared by the cost function and the solver.
struct Problem {
    codes: Vec<String>,
    targets: Vec<Point>,
    neighbors: Vec<Vec<usize>>,
    hex_size: f64,
    lambda: f64,
}

impl Problem {
    fn new(layout: &HexLayout, centroids: &Centroids, adj: &AdjacencyGraph, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Contract(format!("adjacency weight {lambda} must be >= 0")));
        }
        if layout.len() != centroids.len() || layout.iter().any(|(c, _)| !centroids.contains_key(c)) {
            return Err(Error::Layout("layout and centroids cover different regions".into()));
        }
        let norm = normalize_centroids(centroids, layout.hex_size);
        let codes: Vec<String> = norm.keys().cloned().collect();
        let index: HashMap<&str, usize> = codes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut neighbors = vec![Vec::new(); codes.len()];
        for (a, b) in adj.edges() {
            let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) else {
                return Err(Error::Layout(format!("adjacency edge {a}-{b} names a region outside the layout")));
            };
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Problem {
            targets: norm.values().copied().collect(),
            codes,
            neighbors,
            hex_size: layout.hex_size,
            lambda,
        })
    }

    fn displacement(&self, i: usize, c: AxialCoord) -> f64 {
        let (x, y) = hex_center(c, self.hex_size);
        let t = self.targets[i];
        (x - t.x).powi(2) + (y - t.y).powi(2)
    }

    fn cost(&self, pos: &[AxialCoord]) -> LayoutCost {
        let displacement = (0..pos.len()).map(|i| self.displacement(i, pos[i])).sum();
        let mut adjacency_penalty = 0;
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                if i < j && pos[i].distance(pos[j]) != 1 {
                    adjacency_penalty += 1;
                }
            }
        }
        LayoutCost {
            displacement,
            adjacency_penalty,
            total: displacement + self.lambda * adjacency_penalty as f64,
        }
    }

    /// Broken-adjacency count among `i`'s edges if `i` sat at `at`, ignoring
    /// the edge to `skip`.
    fn broken_edges(&self, i: usize, at: AxialCoord, pos: &[AxialCoord], skip: Option<usize>) -> i64 {
        self.neighbors[i]
            .iter()
            .filter(|&&j| Some(j) != skip)
            .filter(|&&j| at.distance(pos[j]) != 1)
            .count() as i64
    }

    fn positions(&self, layout: &HexLayout) -> Vec<AxialCoord> {
        self.codes.iter().map(|c| layout.get(c).expect("validated")).collect()
    }

    fn to_layout(&self, pos: &[AxialCoord]) -> HexLayout {
        HexLayout {
            cells: self.codes.iter().cloned().zip(pos.iter().copied()).collect(),
            hex_size: self.hex_size,
        }
    }
}

pub fn layout_cost(
    layout: &HexLayout,
    centroids: &Centroids,
    adj: &AdjacencyGraph,
    lambda_adj: f64,
) -> Result<LayoutCost> {
    let p = Problem::new(layout, centroids, adj, lambda_adj)?;
    Ok(p.cost(&p.positions(layout)))
}

/// Snaps each normalized centroid to its nearest hex. Regions competing for a
/// hex are reassigned together by a minimum total squared displacement
/// assignment over the free hexes around them.
pub fn seed_layout(centroids: &Centroids, hex_size: f64) -> Result<HexLayout> {
    if centroids.is_empty() {
        return Err(Error::Contract("cannot lay out zero regions".into()));
    }
    if centroids.values().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Contract("centroids must be finite".into()));
    }
    if !(hex_size > 0.0 && hex_size.is_finite()) {
        return Err(Error::Contract(format!("hex size {hex_size} must be positive")));
    }
    let norm = normalize_centroids(centroids, hex_size);
    let codes: Vec<&String> = norm.keys().collect();
    let points: Vec<Point> = norm.values().copied().collect();
    let nearest: Vec<AxialCoord> = points.iter().map(|p| pixel_to_hex(*p, hex_size)).collect();

    let mut claims: BTreeMap<AxialCoord, Vec<usize>> = BTreeMap::new();
    for (i, c) in nearest.iter().enumerate() {
        claims.entry(*c).or_default().push(i);
    }
    let mut pos = nearest.clone();
    let fixed: BTreeSet<AxialCoord> = claims
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(c, _)| *c)
        .collect();
    let contested: Vec<usize> = claims
        .values()
        .filter(|v| v.len() > 1)
        .flatten()
        .copied()
        .collect();

    if !contested.is_empty() {
        let mut radius = 1;
        let candidates = loop {
            let free: BTreeSet<AxialCoord> = contested
                .iter()
                .flat_map(|&i| nearest[i].within(radius))
                .filter(|c| !fixed.contains(c))
                .collect();
            if free.len() >= contested.len() {
                break free.into_iter().collect::<Vec<_>>();
            }
            radius += 1;
        };
        let cost: Vec<Vec<f64>> = contested
            .iter()
            .map(|&i| {
                candidates
                    .iter()
                    .map(|c| {
                        let (x, y) = hex_center(*c, hex_size);
                        (x - points[i].x).powi(2) + (y - points[i].y).powi(2)
                    })
                    .collect()
            })
            .collect();
        for (row, col) in hungarian(&cost).into_iter().enumerate() {
            pos[contested[row]] = candidates[col];
        }
    }

    HexLayout::new(
        codes.into_iter().cloned().zip(pos).collect(),
        hex_size,
    )
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`).
/// Returns the column chosen for each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // 1-based potentials formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut row_of = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if row_of[j] > 0 {
            out[row_of[j] - 1] = j - 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Move {
    /// Region, anchor region, direction: move next to the anchor's hex.
    Relocate(usize, usize, usize),
    Swap(usize, usize),
}

/// Above this many regions swaps are only tried between regions at most
/// `LOCAL_SWAP_RADIUS` hexes apart.
const ALL_PAIRS_SWAP_LIMIT: usize = 256;
const LOCAL_SWAP_RADIUS: u32 = 3;

/// Hill climbing over relocate-to-empty-neighbor and swap moves.
///
/// A region may relocate to an empty hex next to its own hex or next to the
/// hex of one of its graph neighbors. Each iteration is one pass over all candidate moves in a seeded random
/// order; a move is applied iff it strictly lowers the total cost. Stops
/// early after a pass without improvement.
pub fn refine_layout(
    layout: &HexLayout,
    centroids: &Centroids,
    adj: &AdjacencyGraph,
    lambda_adj: f64,
    iterations: usize,
    seed: u64,
) -> Result<HexLayout> {
    let p = Problem::new(layout, centroids, adj, lambda_adj)?;
    let mut pos = p.positions(layout);
    let n = pos.len();
    let mut occupied: HashMap<AxialCoord, usize> = pos.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = p.cost(&pos).total;
    let eps = 1e-12 * (1.0 + start.abs());

    for _ in 0..iterations {
        let mut moves: Vec<Move> = (0..n)
            .flat_map(|i| {
                std::iter::once(i)
                    .chain(p.neighbors[i].iter().copied())
                    .flat_map(move |a| (0..6).map(move |d| Move::Relocate(i, a, d)))
            })
            .collect();
        for i in 0..n {
            for j in i + 1..n {
                if n <= ALL_PAIRS_SWAP_LIMIT || pos[i].distance(pos[j]) <= LOCAL_SWAP_RADIUS {
                    moves.push(Move::Swap(i, j));
                }
            }
        }
        moves.shuffle(&mut rng);

        let mut improved = false;
        for mv in moves {
            match mv {
                Move::Relocate(i, a, d) => {
                    let from = pos[i];
                    let to = pos[a].neighbors()[d];
                    if occupied.contains_key(&to) {
                        continue;
                    }
                    let delta = p.displacement(i, to) - p.displacement(i, from)
                        + p.lambda
                            * (p.broken_edges(i, to, &pos, None) - p.broken_edges(i, from, &pos, None)) as f64;
                    if delta < -eps {
                        occupied.remove(&from);
                        occupied.insert(to, i);
                        pos[i] = to;
                        improved = true;
                    }
                }
                Move::Swap(i, j) => {
                    let (a, b) = (pos[i], pos[j]);
                    let disp = p.displacement(i, b) + p.displacement(j, a)
                        - p.displacement(i, a)
                        - p.displacement(j, b);
                    // the i-j edge keeps its length under a swap
                    let broken = p.broken_edges(i, b, &pos, Some(j))
                        + p.broken_edges(j, a, &pos, Some(i))
                        - p.broken_edges(i, a, &pos, Some(j))
                        - p.broken_edges(j, b, &pos, Some(i));
                    let delta = disp + p.lambda * broken as f64;
                    if delta < -eps {
                        pos.swap(i, j);
                        occupied.insert(pos[i], i);
                        occupied.insert(pos[j], j);
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }

    let out = p.to_layout(&pos);
    debug_assert!(out.is_injective());
    debug_assert!(p.cost(&pos).total <= start + eps);
    Ok(out)
}

pub fn write_layout<W: Write>(out: W, layout: &HexLayout) -> Result<()> {
    let ctx = "layout";
    let err = |e: csv::Error| Error::data(ctx, e);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region_code", "q", "r"]).map_err(err)?;
    for (code, c) in layout.iter() {
        w.write_record([code, &c.q.to_string(), &c.r.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn save_layout(layout: &HexLayout, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_layout(std::io::BufWriter::new(file), layout)
}

/// Reads a `region_code,q,r` file. The file carries no hex size; the layout
/// comes back with unit size.
pub fn read_layout<R: Read>(input: R) -> Result<HexLayout> {
    let ctx = "layout";
    let mut r = csv::Reader::from_reader(input);
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| Error::data(ctx, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers != ["region_code", "q", "r"] {
        return Err(Error::SchemaMismatch("layout header must be region_code,q,r".into()));
    }
    let mut cells = BTreeMap::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::data(ctx, e))?;
        let code = normalize_region_code(&row[0])
            .ok_or_else(|| Error::Layout(format!("invalid region code {:?}", &row[0])))?;
        let int = |s: &str| {
            s.trim()
                .parse::<i32>()
                .map_err(|_| Error::Layout(format!("bad coordinate {s:?}")))
        };
        let c = AxialCoord::new(int(&row[1])?, int(&row[2])?);
        if cells.insert(code.clone(), c).is_some() {
            return Err(Error::Layout(format!("duplicate region code {code}")));
        }
    }
    HexLayout::new(cells, 1.0)
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<HexLayout> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_layout(file)
}

/// Bundled 32-state Mexico layout.
///
/// Built by running [`seed_layout`] and [`refine_layout`] on the bundled
/// approximate state centroids and outline fixture (see
/// `examples/build_mexico_preset.rs`). It is not a copy of any published
/// tile map.
pub fn mexico_state_preset() -> HexLayout {
    read_layout(MEXICO_PRESET_CSV.as_bytes()).expect("bundled preset is valid")
}

pub const MEXICO_PRESET_CSV: &str = include_str!("../data/mx_states_layout.csv");

/// Short labels for the 32 states, keyed by INEGI code.
pub fn mexico_state_labels() -> BTreeMap<String, String> {
    let mut r = csv::Reader::from_reader(MEXICO_STATES_CSV.as_bytes());
    r.records()
        .map(|row| {
            let row = row.expect("bundled table is valid");
            (row[0].to_string(), row[2].to_string())
        })
        .collect()
}

/// `region_code,name,abbr,lon,lat` for the 32 states (approximate centroids).
pub const MEXICO_STATES_CSV: &str = include_str!("../data/mx_states.csv");

/// Reads `region_code` and `lon`/`lat` (or `x`/`y`) columns into centroids.
pub fn read_centroids<R: Read>(input: R) -> Result<Centroids> {
    let ctx = "centroids";
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::data(ctx, e))?.clone();
    let col = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.contains(&h.trim()))
            .ok_or_else(|| Error::SchemaMismatch(format!("centroid file needs one of {names:?}")))
    };
    let (ci, xi, yi) = (col(&["region_code"])?, col(&["lon", "x"])?, col(&["lat", "y"])?);
    let mut out = Centroids::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::data(ctx, e))?;
        let code = normalize_region_code(&row[ci])
            .ok_or_else(|| Error::data(ctx, format!("invalid region code {:?}", &row[ci])))?;
        let num = |i: usize| {
            row[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::data(ctx, format!("bad coordinate {:?}", &row[i])))
        };
        out.insert(code, Point::new(num(xi)?, num(yi)?));
    }
    Ok(out)
}

pub fn centroids_of(geoms: &[RegionGeometry]) -> Centroids {
    geoms
        .iter()
        .map(|g| (g.region_code.clone(), g.centroid))
        .collect()
}
