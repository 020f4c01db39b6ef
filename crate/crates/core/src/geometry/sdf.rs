//! Voxelised signed distance fields with differentiable trilinear sampling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::MeshDistance;
use super::mesh::TriangleMesh;
use crate::{Error, Result, Vec3};

/// Sign policy for [`build_sdf`].
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// Pseudo-normals when the mesh is watertight, winding number otherwise.
    #[default]
    Auto,
    PseudoNormal,
    WindingNumber,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfOptions {
    pub cell_size: f64,
    pub padding: f64,
    /// Upper bound on `nx * ny * nz`.
    pub max_voxels: usize,
    pub sign: SignMode,
}

impl Default for SdfOptions {
    fn default() -> Self {
        Self {
            cell_size: 0.05,
            padding: 0.5,
            max_voxels: 1 << 25,
            sign: SignMode::Auto,
        }
    }
}

/// Axis-aligned lattice: sample `(i, j, k)` sits at `origin + cell_size * (i, j, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec3,
    pub cell_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, cell_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidGrid(format!("cell size must be positive, got {cell_size}")));
        }
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::InvalidGrid(format!("every dimension needs at least 2 samples, got {dims:?}")));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidGrid("origin is not finite".into()));
        }
        Ok(Self {
            origin,
            cell_size,
            dims,
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// x-fastest linear index.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.cell_size
    }

    /// Far corner of the lattice.
    pub fn upper(&self) -> Vec3 {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }
}

/// Value and gradient returned by [`SdfGrid::sample`].
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SdfSample {
    pub value: f64,
    pub gradient: Vec3,
}

/// Dense scalar field on a [`GridSpec`] lattice; positive outside geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    spec: GridSpec,
    values: Vec<f32>,
}

impl SdfGrid {
    pub fn new(spec: GridSpec, values: Vec<f32>) -> Result<Self> {
        if values.len() != spec.voxel_count() {
            return Err(Error::LengthMismatch {
                what: "sdf values",
                expected: spec.voxel_count(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("value {i} is not finite")));
        }
        Ok(Self { spec, values })
    }

    /// Fills the lattice by evaluating `f` at every sample point, one z-slab
    /// per task.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&Vec3) -> f64 + Sync,
    {
        let [nx, ny, _] = spec.dims;
        let mut values = vec![0f32; spec.voxel_count()];
        values
            .par_chunks_mut(nx * ny)
            .enumerate()
            .for_each(|(k, slab)| {
                for j in 0..ny {
                    for i in 0..nx {
                        slab[i + nx * j] = f(&spec.point(i, j, k)) as f32;
                    }
                }
            });
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn value_at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.spec.index(i, j, k)]
    }

    /// Trilinear value and its analytic gradient.
    ///
    /// Points outside the lattice are clamped onto its boundary and the
    /// distance to the boundary is added, so the result stays finite and the
    /// gradient points back towards the grid.
    pub fn sample(&self, p: &Vec3) -> Result<SdfSample> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite(format!("sdf query point {p:?}")));
        }
        let h = self.spec.cell_size;
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        let mut outside = Vec3::zeros();
        let mut clamped = [false; 3];
        for a in 0..3 {
            let n = self.spec.dims[a];
            let u = (p[a] - self.spec.origin[a]) / h;
            let hi = (n - 1) as f64;
            let uc = if u < 0.0 {
                clamped[a] = true;
                outside[a] = u * h;
                0.0
            } else if u > hi {
                clamped[a] = true;
                outside[a] = (u - hi) * h;
                hi
            } else {
                u
            };
            let i0 = (uc.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = uc - i0 as f64;
        }
        let [i, j, k] = base;
        let c = |di: usize, dj: usize, dk: usize| self.value_at(i + di, j + dj, k + dk) as f64;
        let [fx, fy, fz] = frac;
        let (c000, c100, c010, c110) = (c(0, 0, 0), c(1, 0, 0), c(0, 1, 0), c(1, 1, 0));
        let (c001, c101, c011, c111) = (c(0, 0, 1), c(1, 0, 1), c(0, 1, 1), c(1, 1, 1));

        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        let mut value = c0 + (c1 - c0) * fz;

        let dfx = ((c100 - c000) * (1.0 - fy) + (c110 - c010) * fy) * (1.0 - fz)
            + ((c101 - c001) * (1.0 - fy) + (c111 - c011) * fy) * fz;
        let dfy = (c10 - c00) * (1.0 - fz) + (c11 - c01) * fz;
        let dfz = c1 - c0;
        let mut gradient = Vec3::new(dfx, dfy, dfz) / h;
        for a in 0..3 {
            if clamped[a] {
                gradient[a] = 0.0;
            }
        }
        let out = outside.norm();
        if out > 0.0 {
            value += out;
            gradient += outside / out;
        }
        Ok(SdfSample { value, gradient })
    }
}

/// Builds a signed distance field over the mesh bounds expanded by `padding`.
pub fn build_sdf(mesh: &TriangleMesh, options: &SdfOptions) -> Result<SdfGrid> {
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("cannot build an sdf from an empty mesh".into()));
    }
    let SdfOptions {
        cell_size,
        padding,
        max_voxels,
        sign,
    } = *options;
    if !(cell_size > 0.0) {
        return Err(Error::InvalidParameter(format!("cell_size must be > 0, got {cell_size}")));
    }
    if !(padding >= cell_size) {
        return Err(Error::InvalidParameter(format!(
            "padding ({padding}) must be at least one cell ({cell_size})"
        )));
    }
    let spec = grid_for_bounds(mesh, cell_size, padding, max_voxels)?;
    let query = MeshDistance::new(mesh, sign);
    log::debug!(
        "building sdf {:?} ({} voxels, pseudo-normals: {})",
        spec.dims,
        spec.voxel_count(),
        query.uses_pseudo_normals()
    );
    SdfGrid::from_fn(spec, |p| query.signed_distance(p))
}

pub(crate) fn grid_for_bounds(
    mesh: &TriangleMesh,
    cell_size: f64,
    padding: f64,
    max_voxels: usize,
) -> Result<GridSpec> {
    let bounds = mesh.bounds();
    let origin = bounds.min - Vec3::repeat(padding);
    let extent = bounds.extent() + Vec3::repeat(2.0 * padding);
    let dims = [0, 1, 2].map(|a| ((extent[a] / cell_size).ceil() as usize + 1).max(2));
    let requested = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if requested > max_voxels {
        return Err(Error::GridTooLarge {
            requested,
            limit: max_voxels,
        });
    }
    GridSpec::new(origin, cell_size, dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_grid() -> SdfGrid {
        let spec = GridSpec::new(Vec3::new(-1.0, 0.0, 2.0), 0.25, [6, 5, 4]).unwrap();
        let h = spec.cell_size;
        let mut values = vec![0f32; spec.voxel_count()];
        for k in 0..4 {
            for j in 0..5 {
                for i in 0..6 {
                    values[spec.index(i, j, k)] = (i as f64 * h) as f32;
                }
            }
        }
        SdfGrid::new(spec, values).unwrap()
    }

    #[test]
    fn lattice_points_return_stored_values() {
        let grid = linear_grid();
        for (i, j, k) in [(0, 0, 0), (5, 4, 3), (2, 3, 1), (5, 0, 3)] {
            let s = grid.sample(&grid.spec().point(i, j, k)).unwrap();
            assert_eq!(s.value, grid.value_at(i, j, k) as f64);
        }
    }

    #[test]
    fn linear_field_has_unit_x_gradient() {
        let grid = linear_grid();
        for p in [Vec3::new(-0.9, 0.3, 2.1), Vec3::new(0.17, 0.91, 2.6)] {
            let s = grid.sample(&p).unwrap();
            assert!((s.gradient - Vec3::x()).norm() < 1e-12, "{:?}", s.gradient);
        }
    }

    #[test]
    fn outside_adds_distance_to_box() {
        let grid = linear_grid();
        let inside = grid.sample(&Vec3::new(0.0, 0.5, 2.5)).unwrap();
        let above = grid.sample(&Vec3::new(0.0, 1.5, 2.5)).unwrap();
        assert!((above.value - inside.value - 0.5).abs() < 1e-12);
        assert!((above.gradient - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn non_finite_query_is_an_error() {
        assert!(linear_grid().sample(&Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn size_limit_is_enforced() {
        let cube = TriangleMesh::cuboid(Vec3::repeat(-0.5), Vec3::repeat(0.5)).unwrap();
        let opts = SdfOptions {
            cell_size: 0.01,
            padding: 0.5,
            max_voxels: 1000,
            ..Default::default()
        };
        assert!(matches!(build_sdf(&cube, &opts), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn padding_must_cover_a_cell() {
        let cube = TriangleMesh::cuboid(Vec3::repeat(-0.5), Vec3::repeat(0.5)).unwrap();
        let opts = SdfOptions {
            cell_size: 0.1,
            padding: 0.05,
            ..Default::default()
        };
        assert!(build_sdf(&cube, &opts).is_err());
    }
}
