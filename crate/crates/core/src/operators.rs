//! Discrete operator assembly: the cotangent stiffness matrix, the lumped
//! mass matrix, a graph Laplacian substitute for point clouds, and the
//! benchmark linear systems built from them.
//!
//! Sign convention: the stiffness matrix S is positive semidefinite (energy
//! form), so the assembled systems read S + eta*M and M + alpha*S.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SurfaceGraph, TriangleMesh};
use crate::sparse::SparseMatrix;
use crate::vec3::{self, Vec3};

/// Cotangent values are clamped to this magnitude; raw scanned meshes
/// contain degenerate triangles whose unbounded cotangents would break the
/// Gauss-Seidel smoother.
const COT_CLAMP: f64 = 1e6;

/// A face is counted as degenerate when its area falls below this fraction
/// of its mean squared edge length.
const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

/// Stiffness and lumped mass for one discretized surface, with counters for
/// the degeneracies that were clamped during assembly.
#[derive(Clone, Debug)]
pub struct OperatorPair {
    pub stiffness: SparseMatrix,
    /// Diagonal of the lumped mass matrix; strictly positive.
    pub mass: Vec<f64>,
    pub degenerate_faces: usize,
    pub isolated_vertices: usize,
}

impl OperatorPair {
    pub fn from_mesh(mesh: &TriangleMesh) -> Result<Self> {
        let (stiffness, degenerate_faces) = assemble_cotan(mesh)?;
        let (mass, isolated_vertices) = assemble_lumped_mass(mesh)?;
        Ok(Self {
            stiffness,
            mass,
            degenerate_faces,
            isolated_vertices,
        })
    }

    pub fn from_graph(graph: &SurfaceGraph) -> Result<Self> {
        graph_laplacian(graph)
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }
}

fn assemble_cotan(mesh: &TriangleMesh) -> Result<(SparseMatrix, usize)> {
    let n = mesh.vertex_count();
    if n == 0 {
        return Err(Error::DegenerateInput("mesh has no vertices".into()));
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.faces.len() * 12);
    let mut degenerate = 0usize;
    for &[i, j, k] in &mesh.faces {
        let (a, b, c) = (mesh.positions[i], mesh.positions[j], mesh.positions[k]);
        let double_area = vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)));
        let mean_sq_edge =
            (vec3::dist_sq(a, b) + vec3::dist_sq(b, c) + vec3::dist_sq(c, a)) / 3.0;
        if 0.5 * double_area < DEGENERATE_AREA_FACTOR * mean_sq_edge {
            degenerate += 1;
        }
        // angle at each corner contributes to the opposite edge
        let corners = [(i, j, k), (j, k, i), (k, i, j)];
        for (at, e0, e1) in corners {
            let u = vec3::sub(mesh.positions[e0], mesh.positions[at]);
            let v = vec3::sub(mesh.positions[e1], mesh.positions[at]);
            let cot = if double_area > 0.0 {
                (vec3::dot(u, v) / double_area).clamp(-COT_CLAMP, COT_CLAMP)
            } else {
                // fully collapsed face: no usable angle information
                0.0
            };
            let w = 0.5 * cot;
            triplets.push((e0, e1, -w));
            triplets.push((e1, e0, -w));
            triplets.push((e0, e0, w));
            triplets.push((e1, e1, w));
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, triplets)?, degenerate))
}

/// Cotangent stiffness matrix; positive semidefinite, rows sum to zero.
pub fn cotan_laplacian(mesh: &TriangleMesh) -> Result<SparseMatrix> {
    Ok(assemble_cotan(mesh)?.0)
}

fn assemble_lumped_mass(mesh: &TriangleMesh) -> Result<(Vec<f64>, usize)> {
    let n = mesh.vertex_count();
    if n == 0 {
        return Err(Error::DegenerateInput("mesh has no vertices".into()));
    }
    let mut mass = vec![0.0f64; n];
    for &[i, j, k] in &mesh.faces {
        let (a, b, c) = (mesh.positions[i], mesh.positions[j], mesh.positions[k]);
        let area = 0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)));
        let share = area / 3.0;
        mass[i] += share;
        mass[j] += share;
        mass[k] += share;
    }
    let smallest_positive = mass
        .iter()
        .copied()
        .filter(|&m| m > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !smallest_positive.is_finite() {
        return Err(Error::DegenerateInput(
            "mesh has no faces with positive area".into(),
        ));
    }
    // isolated vertices get a tiny positive placeholder so the mass matrix
    // stays invertible
    let mut isolated = 0usize;
    for m in &mut mass {
        if *m <= 0.0 {
            *m = smallest_positive * 1e-3;
            isolated += 1;
        }
    }
    Ok((mass, isolated))
}

/// Lumped mass diagonal: one third of the incident triangle area per vertex.
pub fn lumped_mass(mesh: &TriangleMesh) -> Result<Vec<f64>> {
    Ok(assemble_lumped_mass(mesh)?.0)
}

/// Inverse-distance graph Laplacian with a squared-edge-length mass
/// heuristic; the point-cloud stand-in for the mesh operators.
pub fn graph_laplacian(graph: &SurfaceGraph) -> Result<OperatorPair> {
    let n = graph.vertex_count();
    if graph.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(graph.edge_count() * 4);
    let mut mass = vec![0.0f64; n];
    for &[i, j] in graph.edges() {
        let d = graph.edge_length(i, j);
        let w = if d > 0.0 { (1.0 / d).min(1e12) } else { 1e12 };
        triplets.push((i, j, -w));
        triplets.push((j, i, -w));
        triplets.push((i, i, w));
        triplets.push((j, j, w));
        let d2 = d * d;
        mass[i] += d2 / 6.0;
        mass[j] += d2 / 6.0;
    }
    let smallest_positive = mass
        .iter()
        .copied()
        .filter(|&m| m > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut isolated = 0usize;
    for m in &mut mass {
        if *m <= 0.0 {
            *m = if smallest_positive.is_finite() {
                smallest_positive * 1e-3
            } else {
                1e-12
            };
            isolated += 1;
        }
    }
    Ok(OperatorPair {
        stiffness: SparseMatrix::from_triplets(n, n, triplets)?,
        mass,
        degenerate_faces: 0,
        isolated_vertices: isolated,
    })
}

fn check_rhs(ops: &OperatorPair, y: &[f64]) -> Result<()> {
    if y.len() != ops.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} entries, operators have dimension {}",
            y.len(),
            ops.dim()
        )));
    }
    Ok(())
}

fn mass_times(ops: &OperatorPair, y: &[f64]) -> Vec<f64> {
    ops.mass.iter().zip(y).map(|(m, v)| m * v).collect()
}

/// Screened Poisson system (S + eta*M) x = M y; eta > 0 keeps the matrix
/// positive definite.
pub fn assemble_poisson(
    ops: &OperatorPair,
    eta: f64,
    y: &[f64],
) -> Result<(SparseMatrix, Vec<f64>)> {
    if eta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "poisson requires eta > 0, got {eta}"
        )));
    }
    check_rhs(ops, y)?;
    let m = SparseMatrix::from_diagonal(&ops.mass);
    let a = ops.stiffness.add_scaled(&m, 1.0, eta)?;
    Ok((a, mass_times(ops, y)))
}

/// Data smoothing system (M + alpha*S) x = M y.
pub fn assemble_smoothing(
    ops: &OperatorPair,
    alpha: f64,
    y: &[f64],
) -> Result<(SparseMatrix, Vec<f64>)> {
    if alpha < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "smoothing requires alpha >= 0, got {alpha}"
        )));
    }
    check_rhs(ops, y)?;
    let m = SparseMatrix::from_diagonal(&ops.mass);
    let a = m.add_scaled(&ops.stiffness, 1.0, alpha)?;
    Ok((a, mass_times(ops, y)))
}

/// Smoothing with an additional bi-Laplacian energy term: the normal
/// equations (M + alpha*S + beta*S M^-1 S) x = M y.
pub fn assemble_bilaplacian(
    ops: &OperatorPair,
    alpha: f64,
    beta: f64,
    y: &[f64],
) -> Result<(SparseMatrix, Vec<f64>)> {
    if alpha < 0.0 || beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bilaplacian smoothing requires alpha, beta >= 0, got {alpha}, {beta}"
        )));
    }
    check_rhs(ops, y)?;
    if let Some((i, &m)) = ops
        .mass
        .iter()
        .enumerate()
        .find(|(_, &m)| m <= 0.0)
    {
        return Err(Error::InvalidParameter(format!(
            "mass entry {i} is {m}; must be positive to invert"
        )));
    }
    let m = SparseMatrix::from_diagonal(&ops.mass);
    let inv_mass: Vec<f64> = ops.mass.iter().map(|&v| 1.0 / v).collect();
    let minv_s = ops.stiffness.scale_rows(&inv_mass)?;
    let s_minv_s = ops.stiffness.matmul(&minv_s)?;
    let a = m
        .add_scaled(&ops.stiffness, 1.0, alpha)?
        .add_scaled(&s_minv_s, 1.0, beta)?;
    Ok((a, mass_times(ops, y)))
}

/// Which benchmark system to assemble, with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProblemSpec {
    Poisson { eta: f64 },
    Smoothing { alpha: f64 },
    BilaplacianSmoothing { alpha: f64, beta: f64 },
}

impl ProblemSpec {
    pub fn assemble(&self, ops: &OperatorPair, y: &[f64]) -> Result<(SparseMatrix, Vec<f64>)> {
        match *self {
            ProblemSpec::Poisson { eta } => assemble_poisson(ops, eta, y),
            ProblemSpec::Smoothing { alpha } => assemble_smoothing(ops, alpha, y),
            ProblemSpec::BilaplacianSmoothing { alpha, beta } => {
                assemble_bilaplacian(ops, alpha, beta, y)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Poisson { .. } => "poisson",
            ProblemSpec::Smoothing { .. } => "smoothing",
            ProblemSpec::BilaplacianSmoothing { .. } => "bilaplacian_smoothing",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_to_graph;
    use crate::shapes;

    fn equilateral(side: f64) -> TriangleMesh {
        TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [side, 0.0, 0.0],
                [side / 2.0, side * 3.0f64.sqrt() / 2.0, 0.0],
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    fn unit_path_graph() -> SurfaceGraph {
        SurfaceGraph::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            [[0, 1], [1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn cotan_equilateral_hand_values() {
        let s = cotan_laplacian(&equilateral(1.0)).unwrap();
        // cot(60 deg) / 2 = 1 / (2 sqrt(3))
        let w = 1.0 / (2.0 * 3.0f64.sqrt());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 * w } else { -w };
                assert!((s.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cotan_right_isoceles_zero_weight_on_hypotenuse() {
        let mesh = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let s = cotan_laplacian(&mesh).unwrap();
        // the right angle sits at vertex 0, opposite edge {1,2}
        assert_eq!(s.get(1, 2), 0.0);
        assert_eq!(s.get(2, 1), 0.0);
    }

    #[test]
    fn cotan_rows_sum_to_zero_on_closed_mesh() {
        let mesh = shapes::icosphere(2);
        let s = cotan_laplacian(&mesh).unwrap();
        let ones = vec![1.0; mesh.vertex_count()];
        let product = s.spmv(&ones).unwrap();
        let scale = s.frobenius_norm();
        for v in product {
            assert!(v.abs() < 1e-8 * scale.max(1.0));
        }
        assert!(s.relative_asymmetry() < 1e-10);
    }

    #[test]
    fn cotan_invariant_under_rigid_motion() {
        let mesh = shapes::icosphere(2);
        // rotate about a skew axis and translate
        let (sa, ca) = (0.7f64.sin(), 0.7f64.cos());
        let (sb, cb) = (0.3f64.sin(), 0.3f64.cos());
        let moved = TriangleMesh {
            positions: mesh
                .positions
                .iter()
                .map(|p| {
                    let r1 = [p[0], ca * p[1] - sa * p[2], sa * p[1] + ca * p[2]];
                    [
                        cb * r1[0] - sb * r1[1] + 10.0,
                        sb * r1[0] + cb * r1[1] - 4.0,
                        r1[2] + 0.5,
                    ]
                })
                .collect(),
            faces: mesh.faces.clone(),
        };
        let s0 = cotan_laplacian(&mesh).unwrap();
        let s1 = cotan_laplacian(&moved).unwrap();
        let scale = s0.frobenius_norm();
        let diff = s0.add_scaled(&s1, 1.0, -1.0).unwrap();
        assert!(diff.frobenius_norm() < 1e-8 * scale);
    }

    #[test]
    fn lumped_mass_equilateral_and_total_area() {
        let mass = lumped_mass(&equilateral(1.0)).unwrap();
        let expect = 3.0f64.sqrt() / 4.0 / 3.0;
        for m in &mass {
            assert!((m - expect).abs() < 1e-12);
        }

        let sphere = shapes::icosphere(2);
        let mass = lumped_mass(&sphere).unwrap();
        let total: f64 = mass.iter().sum();
        let area: f64 = sphere
            .faces
            .iter()
            .map(|&[i, j, k]| {
                let (a, b, c) = (
                    sphere.positions[i],
                    sphere.positions[j],
                    sphere.positions[k],
                );
                0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
            })
            .sum();
        assert!((total - area).abs() < 1e-10 * area);
    }

    #[test]
    fn lumped_mass_scales_with_squared_coordinates() {
        let base = lumped_mass(&equilateral(1.0)).unwrap();
        let doubled = lumped_mass(&equilateral(2.0)).unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            assert!((b / a - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lumped_mass_isolated_vertex_flagged() {
        let mesh = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [9.0, 9.0, 9.0],
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let (mass, isolated) = assemble_lumped_mass(&mesh).unwrap();
        assert_eq!(isolated, 1);
        assert!(mass[3] > 0.0);
        assert!((mass[3] - mass[0] * 1e-3).abs() < 1e-18);
    }

    #[test]
    fn graph_laplacian_unit_path() {
        let pair = graph_laplacian(&unit_path_graph()).unwrap();
        let s = &pair.stiffness;
        assert_eq!(s.get(1, 0), -1.0);
        assert_eq!(s.get(1, 1), 2.0);
        assert_eq!(s.get(1, 2), -1.0);
        let ones = vec![1.0; 3];
        assert!(s.spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-14));
        assert_eq!(s.transpose(), *s);
        // mass heuristic: edge^2 / 6 per endpoint
        assert!((pair.mass[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((pair.mass[1] - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn graph_laplacian_clamps_coincident_points() {
        let g = SurfaceGraph::new(vec![[0.0; 3], [0.0; 3]], [[0, 1]]).unwrap();
        let pair = graph_laplacian(&g).unwrap();
        assert_eq!(pair.stiffness.get(0, 1), -1e12);
    }

    #[test]
    fn poisson_assembly_matches_hand_sum() {
        let mesh = equilateral(1.0);
        let ops = OperatorPair::from_mesh(&mesh).unwrap();
        let y = vec![1.0, 2.0, 3.0];
        let (a, rhs) = assemble_poisson(&ops, 1.0, &y).unwrap();
        let w = 1.0 / (2.0 * 3.0f64.sqrt());
        let m = 3.0f64.sqrt() / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 * w + m } else { -w };
                assert!((a.get(i, j) - expect).abs() < 1e-12);
            }
        }
        for (r, yi) in rhs.iter().zip(&y) {
            assert!((r - m * yi).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_rejects_nonpositive_eta() {
        let ops = OperatorPair::from_mesh(&equilateral(1.0)).unwrap();
        assert!(assemble_poisson(&ops, 0.0, &[0.0; 3]).is_err());
    }

    #[test]
    fn smoothing_alpha_zero_is_identity_problem() {
        let ops = OperatorPair::from_mesh(&equilateral(1.0)).unwrap();
        let y = vec![0.3, -0.7, 1.1];
        let (a, rhs) = assemble_smoothing(&ops, 0.0, &y).unwrap();
        // system reduces to M x = M y, so x = y
        let x = crate::sparse::dense_cholesky_solve(&a, &rhs).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_preserves_constants() {
        let mesh = shapes::icosphere(2);
        let ops = OperatorPair::from_mesh(&mesh).unwrap();
        let y = vec![2.5; mesh.vertex_count()];
        let (a, rhs) = assemble_smoothing(&ops, 1e-3, &y).unwrap();
        let x = crate::sparse::dense_cholesky_solve(&a, &rhs).unwrap();
        for xi in x {
            assert!((xi - 2.5).abs() < 1e-8);
        }
    }

    #[test]
    fn bilaplacian_beta_zero_reduces_to_smoothing() {
        let mesh = shapes::icosphere(1);
        let ops = OperatorPair::from_mesh(&mesh).unwrap();
        let y = crate::rng::normal_vector(5, mesh.vertex_count());
        let (a0, b0) = assemble_smoothing(&ops, 1e-3, &y).unwrap();
        let (a1, b1) = assemble_bilaplacian(&ops, 1e-3, 0.0, &y).unwrap();
        assert_eq!(b0, b1);
        let diff = a0.add_scaled(&a1, 1.0, -1.0).unwrap();
        assert!(diff.frobenius_norm() < 1e-14 * a0.frobenius_norm().max(1.0));
    }

    #[test]
    fn bilaplacian_hand_values_on_single_triangle() {
        let ops = OperatorPair::from_mesh(&equilateral(1.0)).unwrap();
        let y = vec![0.0; 3];
        let (a, _) = assemble_bilaplacian(&ops, 1.0, 1.0, &y).unwrap();
        // S = w K with K = 3I - ones, S M^-1 S = sqrt(3) K for side 1
        let w = 1.0 / (2.0 * 3.0f64.sqrt());
        let m = 3.0f64.sqrt() / 12.0;
        let r3 = 3.0f64.sqrt();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j {
                    m + 2.0 * w + 2.0 * r3
                } else {
                    -w - r3
                };
                assert!((a.get(i, j) - expect).abs() < 1e-10, "{i},{j}");
            }
        }
    }

    #[test]
    fn bilaplacian_preserves_constants() {
        let mesh = shapes::icosphere(1);
        let ops = OperatorPair::from_mesh(&mesh).unwrap();
        let y = vec![-1.25; mesh.vertex_count()];
        let (a, rhs) = assemble_bilaplacian(&ops, 1e-2, 1e-2, &y).unwrap();
        let x = crate::sparse::dense_cholesky_solve(&a, &rhs).unwrap();
        for xi in x {
            assert!((xi + 1.25).abs() < 1e-8);
        }
    }

    #[test]
    fn assembled_systems_are_symmetric_and_positive_definite() {
        // dense Jacobi eigendecomposition as the independent oracle
        fn smallest_eigenvalue(a: &SparseMatrix) -> f64 {
            let n = a.rows();
            let mut m = a.to_dense();
            for _ in 0..100 {
                let mut off = 0.0f64;
                for i in 0..n {
                    for j in (i + 1)..n {
                        off = off.max(m[i * n + j].abs());
                    }
                }
                if off < 1e-12 {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        let apq = m[p * n + q];
                        if apq.abs() < 1e-14 {
                            continue;
                        }
                        let app = m[p * n + p];
                        let aqq = m[q * n + q];
                        let t = if (aqq - app).abs() < 1e-30 {
                            1.0
                        } else {
                            let tau = (aqq - app) / (2.0 * apq);
                            let sign = if tau >= 0.0 { 1.0 } else { -1.0 };
                            sign / (tau.abs() + (1.0 + tau * tau).sqrt())
                        };
                        let c = 1.0 / (1.0 + t * t).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let mkp = m[k * n + p];
                            let mkq = m[k * n + q];
                            m[k * n + p] = c * mkp - s * mkq;
                            m[k * n + q] = s * mkp + c * mkq;
                        }
                        for k in 0..n {
                            let mpk = m[p * n + k];
                            let mqk = m[q * n + k];
                            m[p * n + k] = c * mpk - s * mqk;
                            m[q * n + k] = s * mpk + c * mqk;
                        }
                    }
                }
            }
            (0..n).map(|i| m[i * n + i]).fold(f64::INFINITY, f64::min)
        }

        let mesh = shapes::icosphere(1); // 42 vertices
        let ops = OperatorPair::from_mesh(&mesh).unwrap();
        let y = vec![0.0; mesh.vertex_count()];
        let (ap, _) = assemble_poisson(&ops, 1e-6, &y).unwrap();
        let (asm, _) = assemble_smoothing(&ops, 1e-3, &y).unwrap();
        for a in [&ap, &asm] {
            assert!(a.relative_asymmetry() < 1e-10);
            assert!(smallest_eigenvalue(a) > 0.0);
        }

        let cloud_graph = mesh_to_graph(&mesh);
        let gops = graph_laplacian(&cloud_graph).unwrap();
        let (ag, _) = assemble_poisson(&gops, 1e-6, &y).unwrap();
        assert!(smallest_eigenvalue(&ag) > 0.0);
    }
}
