//! The two graph levels built on top of a mesh: seed-centered local graphs
//! for description, and the coarse shape graph whose nodes are the sampled
//! seeds. Also hosts hard-negative mining and the bipartite geodesic matrix
//! used as matching supervision.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::diffcore::DenseMatrix;
use crate::mesh::vec3;
use crate::mesh::{bfs_hops, dijkstra_geodesics, MeshGraph, Point3};

#[derive(Debug, Error)]
pub enum HierError {
    #[error("vertex index {index} out of range (vertex count {count})")]
    BadIndex { index: usize, count: usize },
    #[error("no vertex found {min}..={max} hops from vertex {seed}; widen the ring")]
    EmptyRing { seed: usize, min: usize, max: usize },
    #[error("seed list contains duplicates")]
    DuplicateSeeds,
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("no correspondence entry for vertex {0}")]
    MissingCorrespondence(usize),
    #[error("mesh error: {0}")]
    Mesh(#[from] crate::mesh::MeshError),
    #[error("shape graph text at line {line}: {message}")]
    ParseGraph { line: usize, message: String },
}

/// How far a local patch extends from its seed on the mesh graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchCut {
    /// Vertices within this many hops (inclusive) on the unweighted graph.
    Hops(usize),
    /// Vertices with weighted shortest-path distance strictly below this.
    Geodesic(f64),
}

/// Seed-centered subgraph. Node coordinates are translated so the seed sits
/// at the origin; nodes are kept sorted by vertex index so downstream
/// arithmetic has a canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGraph {
    /// Vertex index of the seed in the parent mesh.
    pub seed: usize,
    /// `(vertex index, seed-relative coordinate)`, ascending by vertex index.
    pub nodes: Vec<(usize, Point3)>,
    /// `(node a, node b, weight)` with `a < b`, indices into `nodes`;
    /// weight is the Euclidean node-to-node distance, strictly below the
    /// construction radius.
    pub edges: Vec<(usize, usize, f64)>,
}

impl LocalGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Index of the seed within `nodes`.
    pub fn seed_node(&self) -> usize {
        self.nodes
            .binary_search_by_key(&self.seed, |&(v, _)| v)
            .expect("seed is always a node")
    }

    /// Apply a linear map (e.g. a rotation) to every node coordinate. Edge
    /// weights are Euclidean distances and stay valid under isometries.
    pub fn with_transformed_coords(&self, f: impl Fn(Point3) -> Point3) -> LocalGraph {
        LocalGraph {
            seed: self.seed,
            nodes: self.nodes.iter().map(|&(v, p)| (v, f(p))).collect(),
            edges: self.edges.clone(),
        }
    }
}

/// Cut the patch around `seed` and connect nodes closer than `radius`.
pub fn extract_local_graph(
    graph: &MeshGraph,
    vertices: &[Point3],
    seed: usize,
    cut: PatchCut,
    radius: f64,
) -> Result<LocalGraph, HierError> {
    if seed >= vertices.len() {
        return Err(HierError::BadIndex { index: seed, count: vertices.len() });
    }
    if radius <= 0.0 {
        return Err(HierError::BadRadius(radius));
    }
    let members: Vec<usize> = match cut {
        PatchCut::Hops(h) => bfs_hops(graph, seed, h)?.into_keys().collect(),
        PatchCut::Geodesic(d) => dijkstra_geodesics(graph, seed, Some(d))?
            .into_iter()
            .filter(|&(_, dist)| dist < d)
            .map(|(v, _)| v)
            .collect(),
    };
    // BTreeMap iteration means `members` is already ascending by vertex id.
    let origin = vertices[seed];
    let nodes: Vec<(usize, Point3)> = members
        .iter()
        .map(|&v| (v, vec3::sub(vertices[v], origin)))
        .collect();
    let mut edges = Vec::new();
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let w = vec3::dist(nodes[a].1, nodes[b].1);
            if w < radius {
                edges.push((a, b, w));
            }
        }
    }
    Ok(LocalGraph { seed, nodes, edges })
}

/// Pick a vertex whose hop distance from `positive_seed` lies in
/// `ring = (min_hops, max_hops)`, uniformly among candidates. Deterministic
/// for a given RNG state.
pub fn mine_hard_negative(
    graph: &MeshGraph,
    positive_seed: usize,
    ring: (usize, usize),
    rng: &mut impl Rng,
) -> Result<usize, HierError> {
    let (min_hops, max_hops) = ring;
    assert!(min_hops >= 1 && min_hops <= max_hops, "ring must satisfy 1 <= min <= max");
    let hops = bfs_hops(graph, positive_seed, max_hops)?;
    let candidates: Vec<usize> = hops
        .into_iter()
        .filter(|&(_, h)| h >= min_hops && h <= max_hops)
        .map(|(v, _)| v)
        .collect();
    if candidates.is_empty() {
        return Err(HierError::EmptyRing { seed: positive_seed, min: min_hops, max: max_hops });
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Coarse graph over the sampled seeds. Edges link seeds within geodesic
/// distance `r_shape`, weighted by that distance.
#[derive(Debug, Clone)]
pub struct ShapeGraph {
    /// Seed positions in normalized shape coordinates.
    pub positions: Vec<Point3>,
    /// `(i, l, geodesic weight)` with `i < l`.
    pub edges: Vec<(usize, usize, f64)>,
    /// False when the edge set leaves the graph in several components.
    pub connected: bool,
    /// Per-node unit descriptors, filled by the matching pipeline.
    pub descriptors: Option<DenseMatrix>,
    /// Per-node fused features, filled by the matching pipeline.
    pub node_features: Option<DenseMatrix>,
}

impl ShapeGraph {
    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    /// Neighbor lists in ascending node order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.positions.len()];
        for &(a, b, _) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Text form: one `i x y z` line per node, then one `i l w` line per
    /// edge. Node lines carry four fields, edge lines three.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.positions.iter().enumerate() {
            out.push_str(&format!("{} {} {} {}\n", i, p[0], p[1], p[2]));
        }
        for &(a, b, w) in &self.edges {
            out.push_str(&format!("{} {} {}\n", a, b, w));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ShapeGraph, HierError> {
        let mut positions = Vec::new();
        let mut edges = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line_no = k + 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |message: String| HierError::ParseGraph { line: line_no, message };
            match toks.len() {
                0 => {}
                4 => {
                    let i: usize = toks[0].parse().map_err(|_| bad("bad node index".into()))?;
                    if i != positions.len() {
                        return Err(bad(format!("node {i} out of order")));
                    }
                    let mut p = [0.0; 3];
                    for (slot, t) in p.iter_mut().zip(&toks[1..]) {
                        *slot = t.parse().map_err(|_| bad("bad coordinate".into()))?;
                    }
                    positions.push(p);
                }
                3 => {
                    let a: usize = toks[0].parse().map_err(|_| bad("bad edge endpoint".into()))?;
                    let b: usize = toks[1].parse().map_err(|_| bad("bad edge endpoint".into()))?;
                    let w: f64 = toks[2].parse().map_err(|_| bad("bad edge weight".into()))?;
                    if a >= positions.len() || b >= positions.len() {
                        return Err(bad(format!("edge ({a},{b}) references unknown node")));
                    }
                    edges.push((a, b, w));
                }
                _ => return Err(bad(format!("expected 3 or 4 fields, found {}", toks.len()))),
            }
        }
        let connected = is_connected(positions.len(), &edges);
        Ok(ShapeGraph { positions, edges, connected, descriptors: None, node_features: None })
    }
}

fn is_connected(n: usize, edges: &[(usize, usize, f64)]) -> bool {
    if n <= 1 {
        return true;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for &(a, b, _) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let root = find(&mut parent, 0);
    (1..n).all(|x| find(&mut parent, x) == root)
}

/// Link seeds whose geodesic distance is at most `r_shape`.
pub fn build_shape_graph(
    seeds: &[usize],
    vertices: &[Point3],
    graph: &MeshGraph,
    r_shape: f64,
) -> Result<ShapeGraph, HierError> {
    if r_shape <= 0.0 {
        return Err(HierError::BadRadius(r_shape));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(HierError::DuplicateSeeds);
    }
    for &s in seeds {
        if s >= vertices.len() {
            return Err(HierError::BadIndex { index: s, count: vertices.len() });
        }
    }
    let positions: Vec<Point3> = seeds.iter().map(|&s| vertices[s]).collect();
    let mut edges = Vec::new();
    for (i, &si) in seeds.iter().enumerate() {
        let dist = dijkstra_geodesics(graph, si, Some(r_shape))?;
        for (l, &sl) in seeds.iter().enumerate().skip(i + 1) {
            if let Some(&d) = dist.get(&sl) {
                edges.push((i, l, d));
            }
        }
    }
    let connected = is_connected(seeds.len(), &edges);
    Ok(ShapeGraph { positions, edges, connected, descriptors: None, node_features: None })
}

/// Ground-truth to target-seed geodesic distances: entry `(i, l)` is the
/// distance on shape B between the image of seed `i` of A and seed `l` of B.
#[derive(Debug, Clone)]
pub struct BipartiteGeodesicMatrix {
    entries: DenseMatrix,
}

impl BipartiteGeodesicMatrix {
    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.entries.get(i, l)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.entries
    }

    /// Column index of the row minimum (lowest index on ties).
    pub fn row_min(&self, i: usize) -> usize {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for l in 0..self.cols() {
            let v = self.get(i, l);
            if v < best {
                best = v;
                arg = l;
            }
        }
        arg
    }
}

/// Vertex-to-vertex ground truth between two meshes.
#[derive(Debug, Clone)]
pub enum Correspondence {
    /// Vertex `i` on A maps to vertex `i` on B.
    Identity,
    Map(BTreeMap<usize, usize>),
}

impl Correspondence {
    pub fn image(&self, v: usize) -> Option<usize> {
        match self {
            Correspondence::Identity => Some(v),
            Correspondence::Map(m) => m.get(&v).copied(),
        }
    }
}

/// Build the supervision matrix by one Dijkstra run per source seed on the
/// target mesh graph. Unreachable targets yield infinite entries.
pub fn bipartite_geodesic_matrix(
    correspondence: &Correspondence,
    seeds_a: &[usize],
    seeds_b: &[usize],
    graph_b: &MeshGraph,
) -> Result<BipartiteGeodesicMatrix, HierError> {
    let mut entries = DenseMatrix::zeros(seeds_a.len(), seeds_b.len());
    for (i, &sa) in seeds_a.iter().enumerate() {
        let src = correspondence
            .image(sa)
            .ok_or(HierError::MissingCorrespondence(sa))?;
        if src >= graph_b.vertex_count() {
            return Err(HierError::BadIndex { index: src, count: graph_b.vertex_count() });
        }
        let dist = dijkstra_geodesics(graph_b, src, None)?;
        for (l, &sb) in seeds_b.iter().enumerate() {
            entries.set(i, l, dist.get(&sb).copied().unwrap_or(f64::INFINITY));
        }
    }
    Ok(BipartiteGeodesicMatrix { entries })
}
