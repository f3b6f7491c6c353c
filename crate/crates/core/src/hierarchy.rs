//! Multigrid hierarchy construction on a neighbor graph: uniform sampling,
//! graph Voronoi diagrams, Voronoi-dual candidate triangles, and the sparse
//! prolongation matrices between levels, including the ablation variants.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{average_edge_length, SurfaceGraph};
use crate::rng::SplitMix64;
use crate::sparse::SparseMatrix;
use crate::vec3::{self, Vec3};

/// How coarse points are chosen from a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingVariant {
    /// Single-sweep spacing-enforced sampling (the default scheme).
    Gravo,
    /// Uniform random subset of ceil(phi * n) vertices.
    Random,
    /// Geodesic farthest point sampling.
    Fps,
    /// Greedy maximal independent set on the k-hop graph.
    Mis,
}

/// How the coarse support of each fine vertex is selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionVariant {
    /// Closest triangle among Voronoi-dual triangles containing the seed.
    VoronoiTriangle,
    /// The k closest coarse points in the seed's Voronoi neighborhood,
    /// k in 2..=4, with inverse-distance weights.
    ClosestK(usize),
    /// Three random coarse points from the neighborhood.
    Random3,
    /// Single closest coarse point with unit weight.
    ClosestVertex,
    /// Closest triangle among all pairs in the seed's one-ring, ignoring
    /// whether the opposite edge is a Voronoi edge.
    AllTriangles,
}

/// How weights are computed on the selected triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingVariant {
    Barycentric,
    Uniform,
    InverseDistance,
}

/// Hierarchy construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Target fraction of points kept per level, in (0, 1).
    pub phi: f64,
    /// Stop coarsening once a level has at most this many vertices.
    pub coarsest_size: usize,
    /// Hop limit for the ineligibility search during sampling.
    pub neighbor_search_ring: usize,
    /// Move each seed to the mean of its Voronoi cell before projection.
    pub shift_seeds: bool,
    pub sampling: SamplingVariant,
    pub selection: SelectionVariant,
    pub weighting: WeightingVariant,
    /// Seed for the random sampling / random selection variants.
    pub rng_seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            phi: 1.0 / 8.0,
            coarsest_size: 1000,
            neighbor_search_ring: 2,
            shift_seeds: true,
            sampling: SamplingVariant::Gravo,
            selection: SelectionVariant::VoronoiTriangle,
            weighting: WeightingVariant::Barycentric,
            rng_seed: 0,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "phi must lie in (0, 1), got {}",
                self.phi
            )));
        }
        if self.coarsest_size < 4 {
            return Err(Error::InvalidParameter(format!(
                "coarsest_size must be at least 4, got {}",
                self.coarsest_size
            )));
        }
        if self.neighbor_search_ring < 1 {
            return Err(Error::InvalidParameter(
                "neighbor_search_ring must be at least 1".into(),
            ));
        }
        if let SelectionVariant::ClosestK(k) = self.selection {
            if !(2..=4).contains(&k) {
                return Err(Error::InvalidParameter(format!(
                    "closest-k selection supports k in 2..=4, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Assignment of every fine vertex to its nearest seed in graph distance.
#[derive(Clone, Debug)]
pub struct VoronoiPartition {
    /// Coarse index of the owning seed, per fine vertex.
    pub seed_of: Vec<usize>,
    /// Graph distance to the owning seed, per fine vertex.
    pub dist_of: Vec<f64>,
    /// Fine vertex index of each seed, in coarse order.
    pub seeds: Vec<usize>,
    /// Vertices in components without a seed, assigned by straight-line
    /// distance instead.
    pub unreachable: usize,
}

/// One level of the hierarchy. The triangle list, fallback fraction, and
/// build time describe the coarsening step that produced this level; they
/// are zero/empty for the input level.
#[derive(Clone, Debug)]
pub struct Level {
    pub graph: SurfaceGraph,
    pub triangles: Vec<[usize; 3]>,
    pub fallback_fraction: f64,
    pub unreachable: usize,
    pub build_seconds: f64,
}

/// Sequence of levels with the prolongation matrices between them;
/// `prolongations[l]` maps level l+1 functions to level l.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
    pub prolongations: Vec<SparseMatrix>,
}

impl Hierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.graph.vertex_count()).collect()
    }
}

/// Single-sweep uniform sampling: selecting a vertex marks everything
/// within graph distance r = phi^(-1/3) * (average edge length) ineligible,
/// searching at most `ring_limit` hops out.
pub fn sample_points(graph: &SurfaceGraph, phi: f64, ring_limit: usize) -> Result<Vec<usize>> {
    let n = graph.vertex_count();
    if n == 0 {
        return Err(Error::DegenerateInput("empty graph".into()));
    }
    if n == 1 || graph.edge_count() == 0 {
        return Ok((0..n).collect());
    }
    let e_bar = average_edge_length(graph)?;
    let radius = phi.powf(-1.0 / 3.0) * e_bar;

    let mut eligible = vec![true; n];
    let mut samples = Vec::new();
    // stamped scratch so each sweep reuses the buffers
    let mut dist = vec![0.0f64; n];
    let mut stamp = vec![0u32; n];
    let mut round = 0u32;
    let mut frontier: Vec<usize> = Vec::new();
    let mut next: Vec<usize> = Vec::new();
    let mut touched: Vec<usize> = Vec::new();

    for v in 0..n {
        if !eligible[v] {
            continue;
        }
        samples.push(v);
        eligible[v] = false;

        round += 1;
        dist[v] = 0.0;
        stamp[v] = round;
        touched.clear();
        touched.push(v);
        frontier.clear();
        frontier.push(v);
        for _hop in 0..ring_limit {
            next.clear();
            for &u in &frontier {
                let du = dist[u];
                for &w in graph.neighbors(u) {
                    let nd = du + graph.edge_length(u, w);
                    if nd >= radius {
                        continue;
                    }
                    if stamp[w] != round {
                        stamp[w] = round;
                        dist[w] = nd;
                        touched.push(w);
                        next.push(w);
                    } else if nd < dist[w] {
                        dist[w] = nd;
                        next.push(w);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
        }
        for &w in &touched {
            // strict inequality: vertices at exactly distance r stay eligible
            if dist[w] < radius {
                eligible[w] = false;
            }
        }
    }
    Ok(samples)
}

/// Uniform sample of ceil(phi * n) vertices without replacement,
/// deterministic for a given seed.
pub fn sample_random(graph: &SurfaceGraph, phi: f64, rng_seed: u64) -> Vec<usize> {
    let n = graph.vertex_count();
    let m = ((phi * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = SplitMix64::new(rng_seed);
    let mut pool: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates
    for i in 0..m {
        let j = i + rng.next_index(n - i);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}

/// Geodesic farthest point sampling starting from vertex 0, growing the set
/// by the vertex farthest from it. Disconnected components are seeded first.
pub fn sample_fps(graph: &SurfaceGraph, phi: f64) -> Vec<usize> {
    let n = graph.vertex_count();
    let m = ((phi * n as f64).ceil() as usize).clamp(1, n);

    // one representative (lowest index) per connected component
    let mut component = vec![usize::MAX; n];
    let mut reps = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        reps.push(start);
        let id = reps.len() - 1;
        let mut stack = vec![start];
        component[start] = id;
        while let Some(u) = stack.pop() {
            for &w in graph.neighbors(u) {
                if component[w] == usize::MAX {
                    component[w] = id;
                    stack.push(w);
                }
            }
        }
    }

    let mut seeds: Vec<usize> = reps.into_iter().take(m).collect();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap: BinaryHeap<MinHeapEntry> = BinaryHeap::new();
    let mut relax = |sources: &[usize], dist: &mut Vec<f64>, heap: &mut BinaryHeap<MinHeapEntry>| {
        for &s in sources {
            dist[s] = 0.0;
            heap.push(MinHeapEntry {
                dist: 0.0,
                seed: 0,
                vertex: s,
            });
        }
        while let Some(MinHeapEntry { dist: d, vertex: u, .. }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &w in graph.neighbors(u) {
                let nd = d + graph.edge_length(u, w);
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(MinHeapEntry {
                        dist: nd,
                        seed: 0,
                        vertex: w,
                    });
                }
            }
        }
    };
    relax(&seeds.clone(), &mut dist, &mut heap);

    while seeds.len() < m {
        let mut best = 0;
        for v in 1..n {
            if dist[v] > dist[best] {
                best = v;
            }
        }
        seeds.push(best);
        relax(&[best], &mut dist, &mut heap);
    }
    seeds
}

/// Greedy maximal independent set on the k-hop graph, for the smallest k
/// whose set is no larger than ceil(phi * n). Returns the current set when
/// growing k stops shrinking it (edgeless graphs never shrink).
pub fn sample_mis(graph: &SurfaceGraph, phi: f64) -> Vec<usize> {
    let n = graph.vertex_count();
    let m = ((phi * n as f64).ceil() as usize).clamp(1, n);

    let greedy = |k: usize| -> Vec<usize> {
        let mut dominated = vec![false; n];
        let mut selected = Vec::new();
        let mut frontier = Vec::new();
        let mut next = Vec::new();
        let mut seen = vec![false; n];
        for v in 0..n {
            if dominated[v] {
                continue;
            }
            selected.push(v);
            dominated[v] = true;
            // dominate the k-hop ball around v
            frontier.clear();
            frontier.push(v);
            let mut touched = vec![v];
            seen[v] = true;
            for _ in 0..k {
                next.clear();
                for &u in &frontier {
                    for &w in graph.neighbors(u) {
                        if !seen[w] {
                            seen[w] = true;
                            touched.push(w);
                            dominated[w] = true;
                            next.push(w);
                        }
                    }
                }
                std::mem::swap(&mut frontier, &mut next);
            }
            for t in touched {
                seen[t] = false;
            }
        }
        selected
    };

    let mut prev_len = usize::MAX;
    let mut k = 1;
    loop {
        let mis = greedy(k);
        if mis.len() <= m || mis.len() >= prev_len {
            return mis;
        }
        prev_len = mis.len();
        k += 1;
    }
}

#[derive(Clone, Copy, Debug)]
struct MinHeapEntry {
    dist: f64,
    seed: usize,
    vertex: usize,
}

impl PartialEq for MinHeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for MinHeapEntry {}
impl PartialOrd for MinHeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for MinHeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed so BinaryHeap pops the smallest (dist, seed, vertex)
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seed.cmp(&self.seed))
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Multisource Dijkstra partition: every vertex goes to the seed with
/// minimal graph distance, ties broken by lower coarse index. Vertices in
/// seedless components are assigned by straight-line distance and counted.
pub fn graph_voronoi(graph: &SurfaceGraph, seeds: &[usize]) -> Result<VoronoiPartition> {
    let n = graph.vertex_count();
    if seeds.is_empty() {
        return Err(Error::DegenerateInput("no seeds given".into()));
    }
    for &s in seeds {
        if s >= n {
            return Err(Error::DegenerateInput(format!(
                "seed {s} outside graph of {n} vertices"
            )));
        }
    }
    let mut seed_of = vec![usize::MAX; n];
    let mut dist_of = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap: BinaryHeap<MinHeapEntry> = BinaryHeap::new();
    for (ci, &s) in seeds.iter().enumerate() {
        if dist_of[s] == 0.0 {
            continue; // duplicate seed: lower coarse index wins
        }
        dist_of[s] = 0.0;
        seed_of[s] = ci;
        heap.push(MinHeapEntry {
            dist: 0.0,
            seed: ci,
            vertex: s,
        });
    }
    while let Some(MinHeapEntry {
        dist: d,
        seed: ci,
        vertex: u,
    }) = heap.pop()
    {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        debug_assert_eq!(seed_of[u], ci);
        for &w in graph.neighbors(u) {
            if settled[w] {
                continue;
            }
            let nd = d + graph.edge_length(u, w);
            if nd < dist_of[w] || (nd == dist_of[w] && ci < seed_of[w]) {
                dist_of[w] = nd;
                seed_of[w] = ci;
                heap.push(MinHeapEntry {
                    dist: nd,
                    seed: ci,
                    vertex: w,
                });
            }
        }
    }

    let mut unreachable = 0usize;
    for v in 0..n {
        if seed_of[v] != usize::MAX {
            continue;
        }
        unreachable += 1;
        let p = graph.position(v);
        let (mut best_ci, mut best_d) = (0usize, f64::INFINITY);
        for (ci, &s) in seeds.iter().enumerate() {
            let d = vec3::dist(p, graph.position(s));
            if d < best_d {
                best_d = d;
                best_ci = ci;
            }
        }
        seed_of[v] = best_ci;
        dist_of[v] = best_d;
    }

    Ok(VoronoiPartition {
        seed_of,
        dist_of,
        seeds: seeds.to_vec(),
        unreachable,
    })
}

/// Coarse edge {i, j} for every fine edge crossing from cell i to cell j.
pub fn voronoi_adjacency(graph: &SurfaceGraph, part: &VoronoiPartition) -> Vec<[usize; 2]> {
    let mut edges: Vec<[usize; 2]> = graph
        .edges()
        .iter()
        .filter_map(|&[u, v]| {
            let (a, b) = (part.seed_of[u], part.seed_of[v]);
            (a != b).then(|| [a.min(b), a.max(b)])
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Every 3-clique {i, j, k} of the coarse edge set, found by intersecting
/// sorted neighbor lists along each edge.
pub fn candidate_triangles(num_vertices: usize, edges: &[[usize; 2]]) -> Vec<[usize; 3]> {
    let mut adjacency = vec![Vec::new(); num_vertices];
    for &[a, b] in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    let mut triangles = Vec::new();
    for &[i, j] in edges {
        // common neighbors above j yield each clique exactly once
        let (mut a, mut b) = (0, 0);
        let (ai, aj) = (&adjacency[i], &adjacency[j]);
        while a < ai.len() && b < aj.len() {
            match ai[a].cmp(&aj[b]) {
                Ordering::Less => a += 1,
                Ordering::Greater => b += 1,
                Ordering::Equal => {
                    if ai[a] > j {
                        triangles.push([i, j, ai[a]]);
                    }
                    a += 1;
                    b += 1;
                }
            }
        }
    }
    triangles
}

/// Coarse positions after moving each seed to the mean of its Voronoi cell.
pub fn shift_seeds(part: &VoronoiPartition, fine_positions: &[Vec3]) -> Vec<Vec3> {
    let nc = part.seeds.len();
    let mut sums = vec![[0.0f64; 3]; nc];
    let mut counts = vec![0usize; nc];
    for (v, &ci) in part.seed_of.iter().enumerate() {
        sums[ci] = vec3::add(sums[ci], fine_positions[v]);
        counts[ci] += 1;
    }
    sums.iter()
        .zip(&counts)
        .zip(&part.seeds)
        .map(|((&s, &c), &seed)| {
            if c == 0 {
                fine_positions[seed]
            } else {
                vec3::scale(s, 1.0 / c as f64)
            }
        })
        .collect()
}

/// Closest point on a closed triangle, as barycentric weights and the
/// squared distance. Near-degenerate triangles fall back to the closest
/// point on their longest edge.
pub fn project_to_triangle(p: Vec3, tri: [Vec3; 3]) -> ([f64; 3], f64) {
    let [a, b, c] = tri;
    let ab = vec3::sub(b, a);
    let ac = vec3::sub(c, a);
    let double_area = vec3::norm(vec3::cross(ab, ac));
    let mean_sq_edge =
        (vec3::dist_sq(a, b) + vec3::dist_sq(b, c) + vec3::dist_sq(c, a)) / 3.0;
    if mean_sq_edge <= 0.0 {
        // all three corners coincide
        return ([1.0, 0.0, 0.0], vec3::dist_sq(p, a));
    }
    if 0.5 * double_area < 1e-12 * mean_sq_edge {
        return project_to_longest_edge(p, tri);
    }

    // region classification (Ericson, Real-Time Collision Detection 5.1.5)
    let ap = vec3::sub(p, a);
    let d1 = vec3::dot(ab, ap);
    let d2 = vec3::dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return finish(p, tri, [1.0, 0.0, 0.0]);
    }
    let bp = vec3::sub(p, b);
    let d3 = vec3::dot(ab, bp);
    let d4 = vec3::dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return finish(p, tri, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return finish(p, tri, [1.0 - v, v, 0.0]);
    }
    let cp = vec3::sub(p, c);
    let d5 = vec3::dot(ab, cp);
    let d6 = vec3::dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return finish(p, tri, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return finish(p, tri, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return finish(p, tri, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    finish(p, tri, [1.0 - v - w, v, w])
}

fn finish(p: Vec3, tri: [Vec3; 3], mut weights: [f64; 3]) -> ([f64; 3], f64) {
    for w in &mut weights {
        *w = w.clamp(0.0, 1.0);
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    } else {
        weights = [1.0, 0.0, 0.0];
    }
    let closest = vec3::add(
        vec3::scale(tri[0], weights[0]),
        vec3::add(vec3::scale(tri[1], weights[1]), vec3::scale(tri[2], weights[2])),
    );
    (weights, vec3::dist_sq(p, closest))
}

fn project_to_longest_edge(p: Vec3, tri: [Vec3; 3]) -> ([f64; 3], f64) {
    let pairs = [(0usize, 1usize), (1, 2), (0, 2)];
    let (mut best_pair, mut best_len) = ((0, 1), -1.0);
    for &(i, j) in &pairs {
        let len = vec3::dist_sq(tri[i], tri[j]);
        if len > best_len {
            best_len = len;
            best_pair = (i, j);
        }
    }
    let (i, j) = best_pair;
    let (u, v) = (tri[i], tri[j]);
    let seg = vec3::sub(v, u);
    let len_sq = vec3::norm_sq(seg);
    let t = if len_sq > 0.0 {
        (vec3::dot(vec3::sub(p, u), seg) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut weights = [0.0f64; 3];
    weights[i] = 1.0 - t;
    weights[j] = t;
    let closest = vec3::add(vec3::scale(u, 1.0 - t), vec3::scale(v, t));
    (weights, vec3::dist_sq(p, closest))
}

/// Builds the prolongation matrix from a fine level to the coarse level
/// defined by `part`, using the configured selection and weighting variant.
///
/// Returns the matrix together with the fraction of rows that needed the
/// inverse-distance fallback.
pub fn build_prolongation(
    fine: &SurfaceGraph,
    part: &VoronoiPartition,
    coarse_edges: &[[usize; 2]],
    coarse_positions: &[Vec3],
    triangles: &[[usize; 3]],
    config: &HierarchyConfig,
) -> Result<(SparseMatrix, f64)> {
    let n_fine = fine.vertex_count();
    let n_coarse = part.seeds.len();
    if coarse_positions.len() != n_coarse {
        return Err(Error::DimensionMismatch(format!(
            "{} coarse positions for {} seeds",
            coarse_positions.len(),
            n_coarse
        )));
    }
    let e_bar = average_edge_length(fine).unwrap_or(1.0);
    let delta = 1e-12 * e_bar;

    let mut coarse_adjacency = vec![Vec::new(); n_coarse];
    for &[a, b] in coarse_edges {
        coarse_adjacency[a].push(b);
        coarse_adjacency[b].push(a);
    }
    for list in &mut coarse_adjacency {
        list.sort_unstable();
    }
    let mut triangles_of_seed = vec![Vec::new(); n_coarse];
    for (ti, tri) in triangles.iter().enumerate() {
        for &corner in tri {
            triangles_of_seed[corner].push(ti);
        }
    }

    let mut rng = SplitMix64::new(
        config
            .rng_seed
            .wrapping_add((n_fine as u64).wrapping_mul(0x9E37_79B9)),
    );

    let inverse_distance_row =
        |p: Vec3, support: &[usize], triplets: &mut Vec<(usize, usize, f64)>, row: usize| {
            let mut weights: Vec<f64> = support
                .iter()
                .map(|&c| 1.0 / (vec3::dist(p, coarse_positions[c]) + delta))
                .collect();
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            for (&c, &w) in support.iter().zip(&weights) {
                triplets.push((row, c, w));
            }
        };

    // sorted (distance, index) pool over the seed and its Voronoi neighbors
    let neighborhood_pool = |p: Vec3, s: usize| -> Vec<usize> {
        let mut pool: Vec<usize> = Vec::with_capacity(coarse_adjacency[s].len() + 1);
        pool.push(s);
        pool.extend_from_slice(&coarse_adjacency[s]);
        pool.sort_unstable_by(|&a, &b| {
            vec3::dist_sq(p, coarse_positions[a])
                .partial_cmp(&vec3::dist_sq(p, coarse_positions[b]))
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.cmp(&b))
        });
        pool
    };

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(3 * n_fine);
    let mut fallback_rows = 0usize;

    for v in 0..n_fine {
        let s = part.seed_of[v];
        let p = fine.position(v);
        match config.selection {
            SelectionVariant::VoronoiTriangle | SelectionVariant::AllTriangles => {
                // best triangle containing the seed, by closest-point distance
                let mut best: Option<([usize; 3], [f64; 3], f64)> = None;
                let mut consider = |corners: [usize; 3]| {
                    let tri = [
                        coarse_positions[corners[0]],
                        coarse_positions[corners[1]],
                        coarse_positions[corners[2]],
                    ];
                    let (weights, d2) = project_to_triangle(p, tri);
                    if best.as_ref().map_or(true, |&(_, _, bd)| d2 < bd) {
                        best = Some((corners, weights, d2));
                    }
                };
                match config.selection {
                    SelectionVariant::VoronoiTriangle => {
                        for &ti in &triangles_of_seed[s] {
                            consider(triangles[ti]);
                        }
                    }
                    _ => {
                        let ring = &coarse_adjacency[s];
                        for (ai, &a) in ring.iter().enumerate() {
                            for &b in &ring[ai + 1..] {
                                consider([s, a, b]);
                            }
                        }
                    }
                }
                // the projection collapsing onto a single corner means the
                // point lies outside every candidate; spread instead when
                // barycentric weighting with shifted seeds is in effect
                let collapse_is_fallback =
                    config.shift_seeds && config.weighting == WeightingVariant::Barycentric;
                let fallback = match &best {
                    None => true,
                    Some((_, weights, _)) => {
                        collapse_is_fallback && weights.iter().any(|&w| w >= 1.0 - 1e-9)
                    }
                };
                if fallback {
                    fallback_rows += 1;
                    let pool = neighborhood_pool(p, s);
                    let take = pool.len().min(3);
                    inverse_distance_row(p, &pool[..take], &mut triplets, v);
                } else {
                    let (corners, weights, _) = best.unwrap();
                    match config.weighting {
                        WeightingVariant::Barycentric => {
                            for (c, w) in corners.iter().zip(weights) {
                                triplets.push((v, *c, w));
                            }
                        }
                        WeightingVariant::Uniform => {
                            for c in corners {
                                triplets.push((v, c, 1.0 / 3.0));
                            }
                        }
                        WeightingVariant::InverseDistance => {
                            inverse_distance_row(p, &corners, &mut triplets, v);
                        }
                    }
                }
            }
            SelectionVariant::ClosestK(k) => {
                let pool = neighborhood_pool(p, s);
                let take = pool.len().min(k);
                if take < k {
                    fallback_rows += 1;
                }
                inverse_distance_row(p, &pool[..take.min(3.max(k))], &mut triplets, v);
            }
            SelectionVariant::ClosestVertex => {
                let pool = neighborhood_pool(p, s);
                triplets.push((v, pool[0], 1.0));
            }
            SelectionVariant::Random3 => {
                let mut pool = neighborhood_pool(p, s);
                if pool.len() > 3 {
                    for i in 0..3 {
                        let j = i + rng.next_index(pool.len() - i);
                        pool.swap(i, j);
                    }
                    pool.truncate(3);
                } else {
                    fallback_rows += 1;
                }
                inverse_distance_row(p, &pool, &mut triplets, v);
            }
        }
    }

    let matrix = SparseMatrix::from_triplets(n_fine, n_coarse, triplets)?;
    Ok((matrix, fallback_rows as f64 / n_fine as f64))
}

fn sample_level(graph: &SurfaceGraph, config: &HierarchyConfig) -> Result<Vec<usize>> {
    Ok(match config.sampling {
        SamplingVariant::Gravo => {
            sample_points(graph, config.phi, config.neighbor_search_ring)?
        }
        SamplingVariant::Random => sample_random(graph, config.phi, config.rng_seed),
        SamplingVariant::Fps => sample_fps(graph, config.phi),
        SamplingVariant::Mis => sample_mis(graph, config.phi),
    })
}

/// Builds the full hierarchy: sample, partition, dual edges, optional seed
/// shift, prolongation; repeated until the coarsest-size threshold is
/// reached or coarsening stops making progress.
pub fn build_hierarchy(graph: &SurfaceGraph, config: &HierarchyConfig) -> Result<Hierarchy> {
    config.validate()?;
    if graph.vertex_count() == 0 {
        return Err(Error::DegenerateInput("empty graph".into()));
    }
    let mut levels = vec![Level {
        graph: graph.clone(),
        triangles: Vec::new(),
        fallback_fraction: 0.0,
        unreachable: 0,
        build_seconds: 0.0,
    }];
    let mut prolongations = Vec::new();

    loop {
        let fine = &levels.last().unwrap().graph;
        let n = fine.vertex_count();
        if n <= config.coarsest_size || fine.edge_count() == 0 {
            break;
        }
        let started = Instant::now();
        let seeds = sample_level(fine, config)?;
        if seeds.len() >= n {
            break; // sampling failed to shrink the level
        }
        let part = graph_voronoi(fine, &seeds)?;
        let coarse_edges = voronoi_adjacency(fine, &part);
        let coarse_positions = if config.shift_seeds {
            shift_seeds(&part, fine.positions())
        } else {
            part.seeds.iter().map(|&s| fine.position(s)).collect()
        };
        let triangles = candidate_triangles(seeds.len(), &coarse_edges);
        let (prolongation, fallback_fraction) = build_prolongation(
            fine,
            &part,
            &coarse_edges,
            &coarse_positions,
            &triangles,
            config,
        )?;
        let next_graph = SurfaceGraph::new(coarse_positions, coarse_edges.iter().copied())?;
        prolongations.push(prolongation);
        levels.push(Level {
            graph: next_graph,
            triangles,
            fallback_fraction,
            unreachable: part.unreachable,
            build_seconds: started.elapsed().as_secs_f64(),
        });
    }

    Ok(Hierarchy {
        levels,
        prolongations,
    })
}
