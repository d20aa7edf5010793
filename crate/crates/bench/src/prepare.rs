//! Dataset preparation: write augmented instances plus a manifest of seeds
//! and content hashes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use routeq_core::instance::{self, augment, AugmentConfig, Instance};

use crate::corpus::{desk_corpus, CorpusConfig};
use crate::io::{atomic_write, sha256_hex};
use crate::runner::{save_manifest, Manifest, ManifestEntry, MANIFEST_VERSION};

#[derive(Debug, Clone)]
pub struct PrepareSpec {
    pub out_dir: PathBuf,
    /// Generate the seeded synthetic corpus.
    pub synthetic: Option<CorpusConfig>,
    /// TSPLIB-style files to parse and augment.
    pub vrp_files: Vec<PathBuf>,
    pub window_tightness: f64,
    pub break_fraction: f64,
    pub seed: u64,
    pub force: bool,
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect()
}

/// Write every prepared instance and the manifest; refuses to overwrite
/// existing instance files unless forced.
pub fn prepare(spec: &PrepareSpec) -> Result<Vec<PathBuf>> {
    let mut instances: Vec<Instance> = Vec::new();
    if let Some(cfg) = &spec.synthetic {
        instances.extend(desk_corpus(cfg)?);
    }
    for (i, path) in spec.vrp_files.iter().enumerate() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let raw = instance::parse_vrp(&text)?;
        let aug = augment(
            &raw,
            &AugmentConfig {
                window_tightness: spec.window_tightness,
                break_fraction: spec.break_fraction,
                seed: spec.seed + i as u64,
            },
        )?;
        instances.push(aug);
    }
    if instances.is_empty() {
        bail!("nothing to prepare: pass --synthetic or at least one .vrp file");
    }

    let mut written = Vec::new();
    let mut entries = Vec::new();
    for inst in &instances {
        let file = format!("{}.json", sanitize(&inst.name));
        let path = spec.out_dir.join(&file);
        if path.exists() && !spec.force {
            bail!("{} already exists; pass --force to overwrite", path.display());
        }
        let text = instance::serialize(inst);
        atomic_write(&path, &text)?;
        entries.push(ManifestEntry {
            name: inst.name.clone(),
            file,
            sha256: sha256_hex(&text),
            customers: inst.customer_count(),
            augment_seed: inst.rng_seed,
            best_known: None,
        });
        written.push(path);
    }
    save_manifest(&spec.out_dir, &Manifest { format_version: MANIFEST_VERSION, entries })?;
    Ok(written)
}

/// Manifest bytes for stability checks.
pub fn manifest_bytes(dir: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(dir.join("manifest.json"))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dir: &Path) -> PrepareSpec {
        PrepareSpec {
            out_dir: dir.to_path_buf(),
            synthetic: Some(CorpusConfig { count: 3, ..CorpusConfig::default() }),
            vrp_files: vec![],
            window_tightness: 0.42,
            break_fraction: 0.12,
            seed: 42,
            force: false,
        }
    }

    #[test]
    fn prepares_n_files_and_a_stable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let written = prepare(&spec(dir.path())).unwrap();
        assert_eq!(written.len(), 3);
        let first = manifest_bytes(dir.path()).unwrap();

        let forced = PrepareSpec { force: true, ..spec(dir.path()) };
        prepare(&forced).unwrap();
        assert_eq!(manifest_bytes(dir.path()).unwrap(), first);
    }

    #[test]
    fn refuses_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        prepare(&spec(dir.path())).unwrap();
        let err = prepare(&spec(dir.path())).unwrap_err();
        assert!(err.to_string().contains("--force"));
    }
}
