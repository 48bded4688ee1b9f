//! Mesh ingestion, normalization, mesh graphs, geodesics, and farthest
//! point sampling.

mod io;
pub mod vec3;

use std::collections::BinaryHeap;
use std::collections::BTreeMap;

use thiserror::Error;

pub use io::{load_mesh, write_off, MeshFormat};
pub use vec3::Point3;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("vertex index {index} out of range (vertex count {count})")]
    BadIndex { index: usize, count: usize },
    #[error("sample count {requested} exceeds point count {available}")]
    TooManySamples { requested: usize, available: usize },
}

/// Triangle mesh: positions plus index triples. No normalization is applied
/// on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let count = vertices.len();
        for f in &faces {
            for &i in f {
                if i >= count {
                    return Err(MeshError::BadIndex { index: i, count });
                }
            }
        }
        Ok(Self { vertices, faces })
    }
}

/// Undirected vertex adjacency with Euclidean edge lengths, one entry per
/// unique mesh edge in each direction.
#[derive(Debug, Clone)]
pub struct MeshGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl MeshGraph {
    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Unique undirected edges as `(a, b, length)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, nbrs)| nbrs.iter().filter(move |(b, _)| a < *b).map(move |&(b, w)| (a, b, w)))
    }
}

/// Center at the vertex centroid and scale so the farthest vertex sits on
/// the unit sphere. Topology is untouched.
pub fn normalize_to_unit_ball(mesh: &TriangleMesh) -> Result<TriangleMesh, MeshError> {
    if mesh.vertices.is_empty() {
        return Err(MeshError::Degenerate("mesh has no vertices".into()));
    }
    let n = mesh.vertices.len() as f64;
    let mut centroid = [0.0; 3];
    for v in &mesh.vertices {
        centroid = vec3::add(centroid, *v);
    }
    centroid = vec3::scale(centroid, 1.0 / n);
    let max_norm = mesh
        .vertices
        .iter()
        .map(|v| vec3::norm(vec3::sub(*v, centroid)))
        .fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Err(MeshError::Degenerate("all vertices coincide".into()));
    }
    let inv = 1.0 / max_norm;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| vec3::scale(vec3::sub(*v, centroid), inv))
        .collect();
    Ok(TriangleMesh { vertices, faces: mesh.faces.clone() })
}

/// One undirected edge per unique face edge, weighted by Euclidean length.
/// Degenerate `(i, i)` edges are skipped; an empty mesh yields an empty
/// graph.
pub fn build_mesh_graph(mesh: &TriangleMesh) -> MeshGraph {
    let mut adjacency = vec![Vec::new(); mesh.vertices.len()];
    let mut seen = std::collections::BTreeSet::new();
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                let w = vec3::dist(mesh.vertices[a], mesh.vertices[b]);
                adjacency[a].push((b, w));
                adjacency[b].push((a, w));
            }
        }
    }
    for nbrs in &mut adjacency {
        nbrs.sort_by(|x, y| x.0.cmp(&y.0));
    }
    MeshGraph { adjacency }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance, ties on vertex index for determinism.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact single-source shortest paths over the weighted mesh graph. With a
/// cutoff, only vertices at distance `<= cutoff` appear in the result.
pub fn dijkstra_geodesics(
    graph: &MeshGraph,
    source: usize,
    cutoff: Option<f64>,
) -> Result<BTreeMap<usize, f64>, MeshError> {
    let n = graph.vertex_count();
    if source >= n {
        return Err(MeshError::BadIndex { index: source, count: n });
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry { dist: 0.0, vertex: source });
    while let Some(HeapEntry { dist: d, vertex: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if let Some(c) = cutoff {
            if d > c {
                break;
            }
        }
        for &(v, w) in graph.neighbors(u) {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry { dist: nd, vertex: v });
            }
        }
    }
    let mut out = BTreeMap::new();
    for (v, &d) in dist.iter().enumerate() {
        if d.is_finite() && cutoff.is_none_or(|c| d <= c) {
            out.insert(v, d);
        }
    }
    Ok(out)
}

/// Hop counts from `source` on the unweighted graph, limited to `max_hops`.
pub fn bfs_hops(graph: &MeshGraph, source: usize, max_hops: usize) -> Result<BTreeMap<usize, usize>, MeshError> {
    let n = graph.vertex_count();
    if source >= n {
        return Err(MeshError::BadIndex { index: source, count: n });
    }
    let mut hops = BTreeMap::new();
    hops.insert(source, 0usize);
    let mut frontier = vec![source];
    for depth in 1..=max_hops {
        let mut next = Vec::new();
        for &u in &frontier {
            for &(v, _) in graph.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = hops.entry(v) {
                    e.insert(depth);
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(hops)
}

/// Greedy max-min selection in Euclidean space. The first pick is `start`;
/// each following pick maximizes the distance to the already selected set,
/// with ties resolved toward the lowest index.
pub fn farthest_point_sampling(points: &[Point3], n: usize, start: usize) -> Result<Vec<usize>, MeshError> {
    if n > points.len() {
        return Err(MeshError::TooManySamples { requested: n, available: points.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if start >= points.len() {
        return Err(MeshError::BadIndex { index: start, count: points.len() });
    }
    let mut selected = Vec::with_capacity(n);
    let mut min_dist = vec![f64::INFINITY; points.len()];
    let mut current = start;
    selected.push(current);
    for _ in 1..n {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, p) in points.iter().enumerate() {
            let d = vec3::dist(*p, points[current]).min(min_dist[i]);
            min_dist[i] = d;
            if d > best {
                best = d;
                arg = i;
            }
        }
        current = arg;
        selected.push(current);
    }
    Ok(selected)
}

/// Sum of triangle areas via the cross product; degenerate faces add zero.
pub fn surface_area(mesh: &TriangleMesh) -> f64 {
    mesh.faces
        .iter()
        .map(|f| {
            let ab = vec3::sub(mesh.vertices[f[1]], mesh.vertices[f[0]]);
            let ac = vec3::sub(mesh.vertices[f[2]], mesh.vertices[f[0]]);
            0.5 * vec3::norm(vec3::cross(ab, ac))
        })
        .sum()
}
