//! Point-triangle distances, pseudo-normal signs and winding numbers.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::bvh::Bvh;
use super::mesh::{Aabb, TriangleMesh};
use super::sdf::SignMode;
use crate::Vec3;

/// Triangle feature that holds the closest point. Edges are numbered
/// `0: v0-v1`, `1: v1-v2`, `2: v2-v0`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Feature {
    Vertex(u8),
    Edge(u8),
    Face,
}

/// Closest point on triangle `abc` to `p` with the feature it lies on.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

/// Signed solid angle subtended by triangle `abc` seen from `p`.
pub fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (a, b, c) = (a - p, b - p, c - p);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let numer = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * numer.atan2(denom)
}

/// Generalised winding number of `mesh` at `p` (1 inside a closed outward
/// mesh, 0 outside).
pub fn winding_number(mesh: &TriangleMesh, p: &Vec3) -> f64 {
    let total: f64 = (0..mesh.triangles().len())
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            solid_angle(p, &a, &b, &c)
        })
        .sum();
    total / (4.0 * PI)
}

/// Angle-weighted pseudo-normals for faces, edges and vertices.
#[derive(Clone, Debug)]
pub struct PseudoNormals {
    face: Vec<Vec3>,
    edge: Vec<[Vec3; 3]>,
    vertex: Vec<Vec3>,
}

impl PseudoNormals {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let tris = mesh.triangles();
        let mut face = Vec::with_capacity(tris.len());
        let mut vertex = vec![Vec3::zeros(); mesh.vertices().len()];
        let mut edge_sum: HashMap<(u32, u32), Vec3> = HashMap::with_capacity(tris.len() * 3 / 2);
        for (t, tri) in tris.iter().enumerate() {
            let [a, b, c] = mesh.triangle(t);
            let n = (b - a).cross(&(c - a)).normalize();
            face.push(n);
            let corners = [a, b, c];
            for k in 0..3 {
                let p = corners[k];
                let e1 = (corners[(k + 1) % 3] - p).normalize();
                let e2 = (corners[(k + 2) % 3] - p).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vertex[tri[k] as usize] += n * angle;
                *edge_sum.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += n;
            }
        }
        let edge = tris
            .iter()
            .map(|tri| [0, 1, 2].map(|k| edge_sum[&edge_key(tri[k], tri[(k + 1) % 3])]))
            .collect();
        Self { face, edge, vertex }
    }

    fn normal(&self, mesh: &TriangleMesh, t: usize, feature: Feature) -> Vec3 {
        match feature {
            Feature::Face => self.face[t],
            Feature::Edge(e) => self.edge[t][e as usize],
            Feature::Vertex(v) => self.vertex[mesh.triangles()[t][v as usize] as usize],
        }
    }
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Distances closer than this are treated as ties; ties resolve to "inside"
/// so coincident faces of touching solids do not flip the sign.
const TIE: f64 = 1e-9;

/// Exact signed distance to `mesh` by scanning every triangle.
///
/// The sign uses angle-weighted pseudo-normals when the mesh is watertight and
/// the generalised winding number otherwise.
pub fn point_mesh_distance(mesh: &TriangleMesh, p: &Vec3) -> f64 {
    if mesh.is_watertight() {
        let normals = PseudoNormals::new(mesh);
        let mut best: Option<(f64, bool)> = None;
        for t in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.triangle(t);
            let (q, feature) = closest_point_on_triangle(p, &a, &b, &c);
            let d = (p - q).norm();
            let inside = (p - q).dot(&normals.normal(mesh, t, feature)) < 0.0;
            best = Some(match best {
                None => (d, inside),
                Some((bd, bin)) if (d - bd).abs() <= TIE => (d.min(bd), inside || bin),
                Some((bd, _)) if d < bd => (d, inside),
                Some(b) => b,
            });
        }
        let (d, inside) = best.expect("mesh has triangles");
        if inside {
            -d
        } else {
            d
        }
    } else {
        let d = (0..mesh.triangles().len())
            .map(|t| {
                let [a, b, c] = mesh.triangle(t);
                (p - closest_point_on_triangle(p, &a, &b, &c).0).norm()
            })
            .fold(f64::INFINITY, f64::min);
        if winding_number(mesh, p) > 0.5 {
            -d
        } else {
            d
        }
    }
}

/// Accelerated signed-distance queries against a fixed mesh.
#[derive(Clone, Debug)]
pub struct MeshDistance<'a> {
    mesh: &'a TriangleMesh,
    bvh: Bvh,
    normals: Option<PseudoNormals>,
}

impl<'a> MeshDistance<'a> {
    pub fn new(mesh: &'a TriangleMesh, sign: SignMode) -> Self {
        let boxes: Vec<Aabb> = (0..mesh.triangles().len())
            .map(|t| Aabb::from_points(&mesh.triangle(t)))
            .collect();
        let use_normals = match sign {
            SignMode::PseudoNormal => true,
            SignMode::WindingNumber => false,
            SignMode::Auto => mesh.is_watertight(),
        };
        Self {
            mesh,
            bvh: Bvh::new(&boxes),
            normals: use_normals.then(|| PseudoNormals::new(mesh)),
        }
    }

    pub fn uses_pseudo_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Unsigned distance to the closest triangle.
    pub fn unsigned_distance(&self, p: &Vec3) -> f64 {
        self.bvh
            .nearest(p, 0.0, |t| {
                let [a, b, c] = self.mesh.triangle(t);
                ((p - closest_point_on_triangle(p, &a, &b, &c).0).norm(), 0)
            })
            .map_or(f64::INFINITY, |n| n.distance)
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match &self.normals {
            Some(normals) => {
                let nearest = self.bvh.nearest(p, TIE, |t| {
                    let [a, b, c] = self.mesh.triangle(t);
                    let (q, feature) = closest_point_on_triangle(p, &a, &b, &c);
                    let inside = (p - q).dot(&normals.normal(self.mesh, t, feature)) < 0.0;
                    ((p - q).norm(), if inside { 0 } else { 1 })
                });
                match nearest {
                    Some(n) if n.rank == 0 => -n.distance,
                    Some(n) => n.distance,
                    None => f64::INFINITY,
                }
            }
            None => {
                let d = self.unsigned_distance(p);
                if winding_number(self.mesh, p) > 0.5 {
                    -d
                } else {
                    d
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> TriangleMesh {
        TriangleMesh::cuboid(Vec3::repeat(-0.5), Vec3::repeat(0.5)).unwrap()
    }

    #[test]
    fn point_on_face_is_zero() {
        let cube = unit_cube();
        assert!(point_mesh_distance(&cube, &Vec3::new(0.1, 0.5, -0.2)).abs() < 1e-15);
    }

    #[test]
    fn unit_cube_analytic_values() {
        let cube = unit_cube();
        assert!((point_mesh_distance(&cube, &Vec3::new(0.0, 0.0, 2.0)) - 1.5).abs() < 1e-12);
        assert!((point_mesh_distance(&cube, &Vec3::zeros()) + 0.5).abs() < 1e-12);
        // Corner region: distance to the vertex.
        let p = Vec3::new(1.5, 1.5, 1.5);
        assert!((point_mesh_distance(&cube, &p) - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn feature_classification() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c).1, Feature::Vertex(0));
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.5, -1.0, 0.0), &a, &b, &c).1, Feature::Edge(0));
        assert_eq!(closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c).1, Feature::Edge(1));
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, 0.5, 0.0), &a, &b, &c).1, Feature::Edge(2));
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.2, 0.2, 3.0), &a, &b, &c).1, Feature::Face);
    }

    #[test]
    fn winding_number_inside_outside() {
        let cube = unit_cube();
        assert!((winding_number(&cube, &Vec3::zeros()) - 1.0).abs() < 1e-9);
        assert!(winding_number(&cube, &Vec3::new(3.0, 0.1, 0.0)).abs() < 1e-9);
    }

    #[test]
    fn accelerated_matches_brute_force() {
        let mut scene = unit_cube();
        scene.append(&TriangleMesh::cuboid(Vec3::new(2.0, -0.5, -0.5), Vec3::new(3.0, 0.5, 0.5)).unwrap());
        let fast = MeshDistance::new(&scene, SignMode::Auto);
        assert!(fast.uses_pseudo_normals());
        for i in 0..50 {
            let t = i as f64 * 0.173;
            let p = Vec3::new(4.0 * t.sin() + 1.0, 1.3 * (2.0 * t).cos(), 0.9 * (3.0 * t).sin());
            let want = point_mesh_distance(&scene, &p);
            assert!((fast.signed_distance(&p) - want).abs() < 1e-12, "at {p:?}");
        }
    }

    #[test]
    fn touching_boxes_report_inside_on_shared_face() {
        // Box resting on a slab: points just inside either solid near the
        // shared plane must be negative.
        let mut scene = TriangleMesh::cuboid(Vec3::new(-1.0, -0.1, -1.0), Vec3::new(1.0, 0.0, 1.0)).unwrap();
        scene.append(&TriangleMesh::cuboid(Vec3::new(-0.2, 0.0, -0.2), Vec3::new(0.2, 0.4, 0.2)).unwrap());
        let q = MeshDistance::new(&scene, SignMode::Auto);
        assert!(q.signed_distance(&Vec3::new(0.0, 0.01, 0.0)) < 0.0);
        assert!(q.signed_distance(&Vec3::new(0.0, -0.01, 0.0)) < 0.0);
        assert!(q.signed_distance(&Vec3::new(0.5, 0.01, 0.0)) > 0.0);
    }
}
