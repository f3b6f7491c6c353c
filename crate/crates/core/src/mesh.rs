//! Triangle meshes, point clouds, and the per-level neighbor graph.

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Indexed triangle mesh. Faces are 0-based index triples.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates face indices; meshes are otherwise accepted as-is
    /// (non-manifold and broken connectivity included).
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::DegenerateInput(format!(
                        "face {fi} references vertex {v} of {n}"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateInput(format!(
                    "face {fi} repeats a vertex index"
                )));
            }
        }
        Ok(Self { positions, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
}

/// Unstructured point set.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::DegenerateInput("empty point cloud".into()));
        }
        if positions
            .iter()
            .any(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::DegenerateInput(
                "point cloud contains non-finite coordinates".into(),
            ));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// One hierarchy level: point positions plus an undirected edge set.
///
/// Edges are stored canonically (lower index first, sorted, deduplicated,
/// no self-loops) and mirrored into per-vertex sorted adjacency lists.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGraph {
    positions: Vec<Vec3>,
    edges: Vec<[usize; 2]>,
    adjacency: Vec<Vec<usize>>,
}

impl SurfaceGraph {
    pub fn new(positions: Vec<Vec3>, edges: impl IntoIterator<Item = [usize; 2]>) -> Result<Self> {
        let n = positions.len();
        let mut canon: Vec<[usize; 2]> = Vec::new();
        for [a, b] in edges {
            if a >= n || b >= n {
                return Err(Error::DegenerateInput(format!(
                    "edge ({a}, {b}) references vertex outside 0..{n}"
                )));
            }
            if a == b {
                continue;
            }
            canon.push([a.min(b), a.max(b)]);
        }
        canon.sort_unstable();
        canon.dedup();

        let mut adjacency = vec![Vec::new(); n];
        for &[a, b] in &canon {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            positions,
            edges: canon,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.positions[i]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        vec3::dist(self.positions[a], self.positions[b])
    }
}

/// Level-1 graph of a mesh: its vertices and the union of face edges.
pub fn mesh_to_graph(mesh: &TriangleMesh) -> SurfaceGraph {
    let edges = mesh.faces.iter().flat_map(|&[a, b, c]| {
        [[a, b], [b, c], [c, a]]
    });
    SurfaceGraph::new(mesh.positions.clone(), edges)
        .expect("validated mesh produces valid edges")
}

/// Symmetrized k-nearest-neighbor graph over a point cloud; an edge is kept
/// if either endpoint selects the other. Ties are broken by lower index.
pub fn knn_graph(cloud: &PointCloud, k: usize) -> Result<SurfaceGraph> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "k-nn graph needs at least 2 points, got {n}"
        )));
    }
    if k < 1 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < point count, got k={k}, n={n}"
        )));
    }
    let pos = &cloud.positions;
    let neighbor_lists = if n <= 1024 {
        knn_brute_force(pos, k)
    } else {
        knn_grid(pos, k)
    };
    let edges = neighbor_lists
        .into_iter()
        .enumerate()
        .flat_map(|(i, js)| js.into_iter().map(move |j| [i, j]));
    SurfaceGraph::new(pos.clone(), edges)
}

fn knn_brute_force(pos: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let n = pos.len();
    let mut out = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        scratch.clear();
        for j in 0..n {
            if j != i {
                scratch.push((vec3::dist_sq(pos[i], pos[j]), j));
            }
        }
        scratch.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(scratch[..k].iter().map(|&(_, j)| j).collect());
    }
    out
}

/// Uniform-grid accelerated k-nn. Cells are scanned in growing Chebyshev
/// rings; a ring bound guarantees no closer point remains unscanned.
fn knn_grid(pos: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let n = pos.len();
    let mut lo = pos[0];
    let mut hi = pos[0];
    for p in pos {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let max_extent = extent[0].max(extent[1]).max(extent[2]);
    if max_extent <= 0.0 {
        // all points coincide
        return knn_brute_force(pos, k);
    }
    // aim for a few points per cell
    let cells_per_axis = ((n as f64 / 4.0).cbrt().ceil() as i64).max(1);
    let cell = max_extent / cells_per_axis as f64;

    let cell_of = |p: &Vec3| -> [i64; 3] {
        [
            ((p[0] - lo[0]) / cell).floor() as i64,
            ((p[1] - lo[1]) / cell).floor() as i64,
            ((p[2] - lo[2]) / cell).floor() as i64,
        ]
    };
    let mut grid: std::collections::HashMap<[i64; 3], Vec<usize>> =
        std::collections::HashMap::new();
    for (i, p) in pos.iter().enumerate() {
        grid.entry(cell_of(p)).or_default().push(i);
    }

    let mut out = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        cand.clear();
        let c = cell_of(&pos[i]);
        let mut ring = 0i64;
        loop {
            // cells with Chebyshev distance exactly `ring`
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(members) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &j in members {
                                if j != i {
                                    cand.push((vec3::dist_sq(pos[i], pos[j]), j));
                                }
                            }
                        }
                    }
                }
            }
            if cand.len() >= k {
                cand.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                // any unscanned point lies at distance >= ring * cell
                let bound = ring as f64 * cell;
                if cand[k - 1].0.sqrt() <= bound {
                    break;
                }
            }
            ring += 1;
            if ring > 2 * cells_per_axis {
                // scanned the whole grid
                cand.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                break;
            }
        }
        out.push(cand[..k].iter().map(|&(_, j)| j).collect());
    }
    out
}

/// Arithmetic mean of Euclidean edge lengths.
pub fn average_edge_length(graph: &SurfaceGraph) -> Result<f64> {
    if graph.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let total: f64 = graph
        .edges()
        .iter()
        .map(|&[a, b]| graph.edge_length(a, b))
        .sum();
    Ok(total / graph.edge_count() as f64)
}
