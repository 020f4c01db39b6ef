//! On-disk formats: OBJ scene meshes with a JSON label sidecar, JSON motion
//! clips, JSON or packed binary contact features, and packed binary SDF
//! grids.
//!
//! Every writer is the exact inverse of its reader, so write, read, write
//! produces identical bytes.

use std::fmt::Write as _;

use scenefit::body::{BodyPose, JOINT_COUNT};
use scenefit::geometry::{ClassId, GridSpec, SdfGrid, TriangleMesh};
use scenefit::interaction::FeatureMap;
use scenefit::motion::MotionSequence;
use scenefit::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEATURES_MAGIC: &[u8; 4] = b"PFTR";
pub const SDF_MAGIC: &[u8; 4] = b"PSDF";
pub const SDF_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("label count mismatch: mesh has {vertices} vertices, labels file has {labels} entries")]
    LabelCount { vertices: usize, labels: usize },

    #[error("frame {frame}: {message}")]
    Frame { frame: usize, message: String },

    #[error("binary {what}: {message}")]
    Binary { what: &'static str, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] scenefit::Error),
}

pub type FormatResult<T> = Result<T, FormatError>;

fn parse_error(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the `v` and `f` records of an OBJ file. Polygons are fan
/// triangulated; texture and normal indices are ignored, negative indices
/// count back from the latest vertex.
pub fn parse_obj(text: &str) -> FormatResult<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| parse_error(line, format!("bad coordinate {t:?}: {e}"))))
                    .collect::<FormatResult<_>>()?;
                if coords.len() != 3 {
                    return Err(parse_error(line, "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for t in tokens {
                    let index = t.split('/').next().unwrap_or_default();
                    let k: i64 = index
                        .parse()
                        .map_err(|e| parse_error(line, format!("bad face index {t:?}: {e}")))?;
                    let resolved = match k {
                        k if k > 0 => k - 1,
                        k if k < 0 => vertices.len() as i64 + k,
                        _ => return Err(parse_error(line, "face index 0")),
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_error(line, format!("face index {k} out of range")));
                    }
                    corners.push(resolved as u32);
                }
                if corners.len() < 3 {
                    return Err(parse_error(line, "face needs at least three corners"));
                }
                for w in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[w], corners[w + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, triangles)?)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn parse_labels(text: &str) -> FormatResult<Vec<ClassId>> {
    let raw: Vec<u16> = serde_json::from_str(text)?;
    Ok(raw.into_iter().map(ClassId).collect())
}

pub fn write_labels(labels: &[ClassId]) -> String {
    let raw: Vec<u16> = labels.iter().map(|c| c.0).collect();
    serde_json::to_string(&raw).expect("labels serialize") + "\n"
}

/// Attaches a label sidecar, reporting both counts on mismatch.
pub fn attach_labels(mesh: TriangleMesh, labels: Vec<ClassId>) -> FormatResult<TriangleMesh> {
    if labels.len() != mesh.vertices().len() {
        return Err(FormatError::LabelCount {
            vertices: mesh.vertices().len(),
            labels: labels.len(),
        });
    }
    Ok(mesh.with_labels(labels)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionFile {
    fps: f64,
    frames: Vec<FrameRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub t: [f64; 3],
    pub p: Vec<[f64; 3]>,
}

impl FrameRecord {
    pub fn from_pose(pose: &BodyPose) -> Self {
        Self {
            t: pose.translation.into(),
            p: pose.rotations.iter().map(|r| (*r).into()).collect(),
        }
    }

    fn to_pose(&self, frame: usize) -> FormatResult<BodyPose> {
        let frame_error = |message: String| FormatError::Frame { frame, message };
        if self.p.len() != JOINT_COUNT {
            return Err(frame_error(format!("expected {JOINT_COUNT} joints, got {}", self.p.len())));
        }
        let mut rotations = [Vec3::zeros(); JOINT_COUNT];
        for (r, p) in rotations.iter_mut().zip(&self.p) {
            *r = Vec3::from(*p);
        }
        BodyPose::new(Vec3::from(self.t), rotations).map_err(|e| frame_error(e.to_string()))
    }
}

pub fn parse_motion(text: &str) -> FormatResult<MotionSequence> {
    let file: MotionFile = serde_json::from_str(text)?;
    let frames = file
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| f.to_pose(i))
        .collect::<FormatResult<Vec<_>>>()?;
    Ok(MotionSequence::new(file.fps, frames)?)
}

/// Writes poses and frame rate; timestamps are implied by the frame rate.
pub fn write_motion(motion: &MotionSequence) -> String {
    let file = MotionFile {
        fps: motion.fps(),
        frames: motion.frames().iter().map(FrameRecord::from_pose).collect(),
    };
    serde_json::to_string(&file).expect("motion serializes") + "\n"
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturesFile {
    frames: usize,
    vertices: usize,
    contact: Vec<f32>,
    semantic: Vec<u16>,
}

pub fn parse_features_json(text: &str) -> FormatResult<FeatureMap> {
    let f: FeaturesFile = serde_json::from_str(text)?;
    Ok(FeatureMap::new(
        f.frames,
        f.vertices,
        f.contact,
        f.semantic.into_iter().map(ClassId).collect(),
    )?)
}

pub fn write_features_json(features: &FeatureMap) -> String {
    let f = FeaturesFile {
        frames: features.frame_count(),
        vertices: features.vertex_count(),
        contact: features.contact().to_vec(),
        semantic: features.semantic().iter().map(|c| c.0).collect(),
    };
    serde_json::to_string(&f).expect("features serialize") + "\n"
}

/// Little-endian reader over a byte slice.
struct Cursor<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> FormatResult<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(FormatError::Binary {
                what: self.what,
                message: format!("truncated: needed {n} more bytes, {} left", self.bytes.len()),
            });
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> FormatResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> FormatResult<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> FormatResult<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> FormatResult<()> {
        let found = self.array::<4>()?;
        if &found != expected {
            return Err(FormatError::Binary {
                what: self.what,
                message: format!("bad magic {found:?}"),
            });
        }
        Ok(())
    }

    fn finish(self) -> FormatResult<()> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(FormatError::Binary {
                what: self.what,
                message: format!("{} trailing bytes", self.bytes.len()),
            })
        }
    }
}

/// `PFTR`, frame count u32, vertex count u32, f32 contact, u16 class.
pub fn read_features_binary(bytes: &[u8]) -> FormatResult<FeatureMap> {
    let mut c = Cursor { bytes, what: "features" };
    c.magic(FEATURES_MAGIC)?;
    let frames = c.u32()? as usize;
    let vertices = c.u32()? as usize;
    let n = frames * vertices;
    let contact = c.take(4 * n)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let semantic = c
        .take(2 * n)?
        .chunks_exact(2)
        .map(|b| ClassId(u16::from_le_bytes(b.try_into().unwrap())))
        .collect();
    c.finish()?;
    Ok(FeatureMap::new(frames, vertices, contact, semantic)?)
}

pub fn write_features_binary(features: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 6 * features.contact().len());
    out.extend_from_slice(FEATURES_MAGIC);
    out.extend_from_slice(&(features.frame_count() as u32).to_le_bytes());
    out.extend_from_slice(&(features.vertex_count() as u32).to_le_bytes());
    for x in features.contact() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for c in features.semantic() {
        out.extend_from_slice(&c.0.to_le_bytes());
    }
    out
}

/// Reads either features format, telling them apart by the magic bytes.
pub fn read_features(bytes: &[u8]) -> FormatResult<FeatureMap> {
    if bytes.starts_with(FEATURES_MAGIC) {
        read_features_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| FormatError::Binary {
            what: "features",
            message: e.to_string(),
        })?;
        parse_features_json(text)
    }
}

/// `PSDF`, version u32, dims 3 x u32, origin 3 x f64, cell f64, f32 values
/// with x varying fastest.
pub fn read_sdf(bytes: &[u8]) -> FormatResult<SdfGrid> {
    let mut c = Cursor { bytes, what: "sdf" };
    c.magic(SDF_MAGIC)?;
    let version = c.u32()?;
    if version != SDF_VERSION {
        return Err(FormatError::Binary {
            what: "sdf",
            message: format!("unsupported version {version}"),
        });
    }
    let dims = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let origin = Vec3::new(c.f64()?, c.f64()?, c.f64()?);
    let cell = c.f64()?;
    let spec = GridSpec::new(origin, cell, dims)?;
    let values = c
        .take(4 * spec.voxel_count())?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    c.finish()?;
    Ok(SdfGrid::new(spec, values)?)
}

pub fn write_sdf(grid: &SdfGrid) -> Vec<u8> {
    let spec = grid.spec();
    let mut out = Vec::with_capacity(48 + 4 * grid.values().len());
    out.extend_from_slice(SDF_MAGIC);
    out.extend_from_slice(&SDF_VERSION.to_le_bytes());
    for d in spec.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for x in spec.origin.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&spec.cell_size.to_le_bytes());
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use scenefit::body::joint;

    #[test]
    fn cube_without_labels() {
        let text = write_obj(&TriangleMesh::cuboid(Vec3::zeros(), Vec3::repeat(1.0)).unwrap());
        let mesh = parse_obj(&text).unwrap();
        assert_eq!(mesh.vertices().len(), 8);
        assert_eq!(mesh.triangles().len(), 12);
        assert!(mesh.labels().is_none());
    }

    #[test]
    fn obj_quads_and_negative_indices() {
        let mesh = parse_obj("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4/1 -3/2 -2/3 -1/4\n").unwrap();
        assert_eq!(mesh.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 x 0\n").unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 3, .. }), "{err}");
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn label_counts() {
        let mesh = TriangleMesh::cuboid(Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
        let labelled = attach_labels(mesh.clone(), vec![ClassId(2); 8]).unwrap();
        assert_eq!(labelled.labels().unwrap().len(), 8);
        let err = attach_labels(mesh, vec![ClassId(2); 7]).unwrap_err();
        assert!(err.to_string().contains("8 vertices") && err.to_string().contains("7 entries"), "{err}");
    }

    #[test]
    fn minimal_motion() {
        let text = format!(
            "{{\"fps\":30,\"frames\":[{0},{0}]}}",
            format!("{{\"t\":[0,0.9,0],\"p\":{:?}}}", vec![[0.0; 3]; JOINT_COUNT])
        );
        let m = parse_motion(&text).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.frames()[1].translation, Vec3::new(0.0, 0.9, 0.0));
    }

    #[test]
    fn motion_errors_name_the_frame() {
        let good = format!("{{\"t\":[0,0,0],\"p\":{:?}}}", vec![[0.0; 3]; JOINT_COUNT]);
        let short = format!("{{\"t\":[0,0,0],\"p\":{:?}}}", vec![[0.0; 3]; JOINT_COUNT - 1]);
        let err = parse_motion(&format!("{{\"fps\":30,\"frames\":[{good},{short}]}}")).unwrap_err();
        assert!(matches!(err, FormatError::Frame { frame: 1, .. }), "{err}");
        assert!(err.to_string().contains("23"), "{err}");
        assert!(parse_motion(&format!("{{\"fps\":0,\"frames\":[{good},{good}]}}")).is_err());
        assert!(parse_motion(&format!("{{\"fps\":30,\"frames\":[{good}],\"extra\":1}}")).is_err());
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(read_features_binary(b"PFTX\0\0\0\0\0\0\0\0").is_err());
        let mut bytes = write_features_binary(&FeatureMap::zeros(2, 3));
        bytes.pop();
        assert!(read_features_binary(&bytes).is_err());
        let grid = SdfGrid::from_fn(GridSpec::new(Vec3::zeros(), 0.5, [2, 2, 2]).unwrap(), |p| p.x).unwrap();
        let mut bytes = write_sdf(&grid);
        bytes.push(0);
        assert!(read_sdf(&bytes).is_err());
    }

    mod round_trip {
        use super::*;
        use proptest::prelude::*;

        fn coord() -> impl Strategy<Value = f64> {
            prop_oneof![-1e3..1e3f64, Just(0.1), Just(-0.0), Just(1e-300)]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn obj_and_labels(points in prop::collection::vec((coord(), coord(), coord()), 3..20), labels in prop::collection::vec(0u16..8, 20)) {
                let n = points.len() as u32;
                let vertices: Vec<Vec3> = points.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
                let triangles: Vec<[u32; 3]> = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
                let labels: Vec<ClassId> = labels[..n as usize].iter().map(|&c| ClassId(c)).collect();
                let mesh = TriangleMesh::new(vertices, triangles);
                prop_assume!(mesh.is_ok());
                let mesh = mesh.unwrap().with_labels(labels.clone()).unwrap();
                let text = write_obj(&mesh);
                let back = parse_obj(&text).unwrap();
                prop_assert_eq!(back.vertices(), mesh.vertices());
                prop_assert_eq!(write_obj(&back), text);
                let l = write_labels(&labels);
                prop_assert_eq!(write_labels(&parse_labels(&l).unwrap()), l);
            }

            #[test]
            fn motion(frames in prop::collection::vec((coord(), -3.0..3.0f64), 2..5), fps in 1.0..240.0f64) {
                let poses: Vec<BodyPose> = frames
                    .iter()
                    .map(|&(y, r)| BodyPose::identity().with_translation(Vec3::new(0.0, y, 1.0)).with_rotation(joint::LEFT_KNEE, Vec3::new(r, 0.0, 0.0)))
                    .collect();
                let m = MotionSequence::new(fps, poses).unwrap();
                let text = write_motion(&m);
                let back = parse_motion(&text).unwrap();
                prop_assert_eq!(back.frames(), m.frames());
                prop_assert_eq!(write_motion(&back), text);
            }

            #[test]
            fn features(values in prop::collection::vec((0.0..=1.0f32, 0u16..8), 6)) {
                let contact = values.iter().map(|v| v.0).collect();
                let semantic = values.iter().map(|v| ClassId(v.1)).collect();
                let f = FeatureMap::new(2, 3, contact, semantic).unwrap();
                let bin = write_features_binary(&f);
                prop_assert_eq!(write_features_binary(&read_features(&bin).unwrap()), bin.clone());
                let json = write_features_json(&f);
                let back = read_features(json.as_bytes()).unwrap();
                prop_assert_eq!(write_features_json(&back), json);
                prop_assert_eq!(write_features_binary(&back), bin);
            }

            #[test]
            fn sdf(origin in (coord(), coord(), coord()), cell in 0.01..1.0f64, dims in (2usize..5, 2usize..5, 2usize..5)) {
                let spec = GridSpec::new(Vec3::new(origin.0, origin.1, origin.2), cell, [dims.0, dims.1, dims.2]).unwrap();
                let grid = SdfGrid::from_fn(spec, |p| p.x - 2.0 * p.y + p.z.sin()).unwrap();
                let bytes = write_sdf(&grid);
                let back = read_sdf(&bytes).unwrap();
                prop_assert_eq!(back.values(), grid.values());
                prop_assert_eq!(back.spec(), grid.spec());
                prop_assert_eq!(write_sdf(&back), bytes);
            }
        }
    }
}
