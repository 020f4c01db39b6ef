//! Content-addressed SDF cache under `PACE_CACHE_DIR`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use scenefit::geometry::{build_class_distance_fields, build_sdf, ClassDistanceFields, SdfGrid};
use scenefit::objective::SceneFields;
use scenefit::geometry::TriangleMesh;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::formats::{read_sdf, write_labels, write_obj, write_sdf, SDF_VERSION};
use crate::io::write_atomic;

pub const CACHE_ENV: &str = "PACE_CACHE_DIR";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The cache directory from the environment, if set and non-empty.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Scene SDF plus per-class distance fields when the mesh is labelled,
/// reusing cached grids keyed by mesh content and SDF options.
pub fn scene_fields(mesh: &TriangleMesh, config: &PipelineConfig, cache: Option<&Path>) -> anyhow::Result<SceneFields> {
    let mut hasher = Sha256::new();
    hasher.update(SDF_VERSION.to_le_bytes());
    hasher.update(write_obj(mesh));
    hasher.update(serde_json::to_vec(&config.sdf_options())?);
    let key = hex::encode(hasher.finalize());

    let sdf = cached(cache, &format!("{key}.sdf.psdf"), || Ok(build_sdf(mesh, &config.sdf_options())?))?;
    let classes = match mesh.labels() {
        None => None,
        Some(labels) => {
            let mut hasher = Sha256::new();
            hasher.update(&key);
            hasher.update(write_labels(labels));
            let class_key = hex::encode(hasher.finalize());
            let all = std::cell::OnceCell::new();
            let mut fields = ClassDistanceFields::default();
            let mut classes: Vec<_> = labels.to_vec();
            classes.sort();
            classes.dedup();
            for class in classes {
                let grid = cached(cache, &format!("{class_key}.class{}.psdf", class.0), || {
                    let all = all.get_or_init(|| build_class_distance_fields(mesh, sdf.spec()));
                    match all {
                        Ok(fields) => Ok(fields.get(class).expect("every label has a field").clone()),
                        Err(e) => anyhow::bail!("class distance fields: {e}"),
                    }
                })?;
                fields.insert(class, grid);
            }
            Some(fields)
        }
    };
    Ok(SceneFields::new(sdf, classes))
}

fn cached(cache: Option<&Path>, name: &str, build: impl FnOnce() -> anyhow::Result<SdfGrid>) -> anyhow::Result<SdfGrid> {
    let Some(dir) = cache else { return build() };
    let path = dir.join(name);
    if let Ok(bytes) = std::fs::read(&path) {
        match read_sdf(&bytes) {
            Ok(grid) => {
                log::debug!("sdf cache hit {}", path.display());
                return Ok(grid);
            }
            Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
        }
    }
    let grid = build()?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating cache dir {}", dir.display()))?;
    write_atomic(&path, &write_sdf(&grid))?;
    Ok(grid)
}
