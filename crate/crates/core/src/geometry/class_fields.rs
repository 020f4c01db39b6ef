use std::collections::{BTreeMap, BTreeSet};

use super::bvh::Bvh;
use super::distance::closest_point_on_triangle;
use super::mesh::{Aabb, ClassId, TriangleMesh};
use super::sdf::{GridSpec, SdfGrid};
use crate::{Error, Result, Vec3};

/// Unsigned distance to the scene geometry of each semantic class, sampled
/// on the same lattice as the scene sdf.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassDistanceFields {
    fields: BTreeMap<ClassId, SdfGrid>,
}

impl ClassDistanceFields {
    pub fn get(&self, class: ClassId) -> Option<&SdfGrid> {
        self.fields.get(&class)
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.fields.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn insert(&mut self, class: ClassId, field: SdfGrid) {
        self.fields.insert(class, field);
    }
}

enum Element {
    Triangle(usize),
    Point(usize),
}

/// One unsigned distance field per class found in the mesh labels.
///
/// A class's geometry is every triangle whose three vertices carry that
/// label, plus labelled vertices not covered by such a triangle.
pub fn build_class_distance_fields(mesh: &TriangleMesh, spec: &GridSpec) -> Result<ClassDistanceFields> {
    let labels = mesh.labels().ok_or(Error::MissingLabels)?;
    let classes: BTreeSet<ClassId> = labels.iter().copied().collect();
    let mut out = ClassDistanceFields::default();
    for class in classes {
        let mut covered = vec![false; labels.len()];
        let mut elements = Vec::new();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            if tri.iter().all(|&v| labels[v as usize] == class) {
                elements.push(Element::Triangle(t));
                for &v in tri {
                    covered[v as usize] = true;
                }
            }
        }
        elements.extend(
            (0..labels.len())
                .filter(|&v| labels[v] == class && !covered[v])
                .map(Element::Point),
        );
        let boxes: Vec<Aabb> = elements
            .iter()
            .map(|e| match *e {
                Element::Triangle(t) => Aabb::from_points(&mesh.triangle(t)),
                Element::Point(v) => Aabb::from_points([&mesh.vertices()[v]]),
            })
            .collect();
        let bvh = Bvh::new(&boxes);
        let distance = |p: &Vec3| {
            bvh.nearest(p, 0.0, |i| {
                let d = match elements[i] {
                    Element::Triangle(t) => {
                        let [a, b, c] = mesh.triangle(t);
                        (p - closest_point_on_triangle(p, &a, &b, &c).0).norm()
                    }
                    Element::Point(v) => (p - mesh.vertices()[v]).norm(),
                };
                (d, 0)
            })
            .map_or(f64::INFINITY, |n| n.distance)
        };
        out.insert(class, SdfGrid::from_fn(spec.clone(), distance)?);
    }
    Ok(out)
}
