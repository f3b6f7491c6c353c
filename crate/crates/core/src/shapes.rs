//! Synthetic meshes and point clouds for tests, benchmarks, and demos.

use std::collections::HashMap;

use crate::mesh::{PointCloud, TriangleMesh};
use crate::rng::SplitMix64;
use crate::vec3::{self, Vec3};

/// Unit icosphere: an icosahedron subdivided `subdivisions` times with all
/// vertices projected onto the unit sphere. Vertex count is
/// 10 * 4^subdivisions + 2.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for p in &mut positions {
        *p = vec3::scale(*p, 1.0 / vec3::norm(*p));
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let mut mid = |u: usize, v: usize, positions: &mut Vec<Vec3>| -> usize {
                let key = (u.min(v), u.max(v));
                *midpoint.entry(key).or_insert_with(|| {
                    let m = vec3::scale(vec3::add(positions[u], positions[v]), 0.5);
                    positions.push(vec3::scale(m, 1.0 / vec3::norm(m)));
                    positions.len() - 1
                })
            };
            let ab = mid(a, b, &mut positions);
            let bc = mid(b, c, &mut positions);
            let ca = mid(c, a, &mut positions);
            next_faces.push([a, ab, ca]);
            next_faces.push([b, bc, ab]);
            next_faces.push([c, ca, bc]);
            next_faces.push([ab, bc, ca]);
        }
        faces = next_faces;
    }
    TriangleMesh { positions, faces }
}

/// Torus triangulated on an nu x nv grid, wrapped in both directions.
pub fn torus(nu: usize, nv: usize, ring_radius: f64, tube_radius: f64) -> TriangleMesh {
    assert!(nu >= 3 && nv >= 3);
    let mut positions = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = std::f64::consts::TAU * i as f64 / nu as f64;
        for j in 0..nv {
            let v = std::f64::consts::TAU * j as f64 / nv as f64;
            let w = ring_radius + tube_radius * v.cos();
            positions.push([w * u.cos(), w * u.sin(), tube_radius * v.sin()]);
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh { positions, faces }
}

/// Copy of a mesh with every coordinate perturbed uniformly in
/// [-amplitude, amplitude].
pub fn jitter(mesh: &TriangleMesh, amplitude: f64, seed: u64) -> TriangleMesh {
    let mut rng = SplitMix64::new(seed);
    let positions = mesh
        .positions
        .iter()
        .map(|p| {
            [
                p[0] + amplitude * (2.0 * rng.next_f64() - 1.0),
                p[1] + amplitude * (2.0 * rng.next_f64() - 1.0),
                p[2] + amplitude * (2.0 * rng.next_f64() - 1.0),
            ]
        })
        .collect();
    TriangleMesh {
        positions,
        faces: mesh.faces.clone(),
    }
}

/// Copy of a mesh scaled per axis.
pub fn scaled(mesh: &TriangleMesh, factors: Vec3) -> TriangleMesh {
    let positions = mesh
        .positions
        .iter()
        .map(|p| [p[0] * factors[0], p[1] * factors[1], p[2] * factors[2]])
        .collect();
    TriangleMesh {
        positions,
        faces: mesh.faces.clone(),
    }
}

/// Points drawn uniformly from the unit sphere surface.
pub fn sphere_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = SplitMix64::new(seed);
    let mut positions = Vec::with_capacity(n);
    while positions.len() < n {
        let v = [rng.next_normal(), rng.next_normal(), rng.next_normal()];
        let norm = vec3::norm(v);
        if norm > 1e-9 {
            positions.push(vec3::scale(v, 1.0 / norm));
        }
    }
    PointCloud { positions }
}

/// Points drawn uniformly in (u, v) parameter space of a torus surface.
pub fn torus_cloud(n: usize, ring_radius: f64, tube_radius: f64, seed: u64) -> PointCloud {
    let mut rng = SplitMix64::new(seed);
    let positions = (0..n)
        .map(|_| {
            let u = std::f64::consts::TAU * rng.next_f64();
            let v = std::f64::consts::TAU * rng.next_f64();
            let w = ring_radius + tube_radius * v.cos();
            [w * u.cos(), w * u.sin(), tube_radius * v.sin()]
        })
        .collect();
    PointCloud { positions }
}

/// Jittered planar grid of nx x ny points with unit spacing.
pub fn grid_cloud(nx: usize, ny: usize, jitter_amplitude: f64, seed: u64) -> PointCloud {
    let mut rng = SplitMix64::new(seed);
    let mut positions = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            positions.push([
                i as f64 + jitter_amplitude * (2.0 * rng.next_f64() - 1.0),
                j as f64 + jitter_amplitude * (2.0 * rng.next_f64() - 1.0),
                jitter_amplitude * (2.0 * rng.next_f64() - 1.0),
            ]);
        }
    }
    PointCloud { positions }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for (s, v, f) in [(0, 12, 20), (1, 42, 80), (2, 162, 320), (3, 642, 1280)] {
            let m = icosphere(s);
            assert_eq!(m.vertex_count(), v);
            assert_eq!(m.face_count(), f);
        }
    }

    #[test]
    fn icosphere_on_unit_sphere() {
        let m = icosphere(3);
        for p in &m.positions {
            assert!((vec3::norm(*p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_counts() {
        let m = torus(24, 18, 2.0, 0.8);
        assert_eq!(m.vertex_count(), 24 * 18);
        assert_eq!(m.face_count(), 2 * 24 * 18);
    }

    #[test]
    fn jitter_is_deterministic() {
        let m = icosphere(1);
        let a = jitter(&m, 0.01, 3);
        let b = jitter(&m, 0.01, 3);
        assert_eq!(a.positions, b.positions);
    }
}
