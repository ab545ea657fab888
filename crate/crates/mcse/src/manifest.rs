//! Dataset manifests: one JSON file listing each scene's component WAVs
//! (paths relative to the manifest) and its metadata.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mcse_core::room::RoomSpec;
use mcse_core::scene::{DoaBin, MixturePair, SceneMeta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::wav::{self, Encoding};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFiles {
    pub mixture: String,
    pub anechoic_target: String,
    pub direct_speech_image: String,
    pub reverberant_speech_tail: String,
    pub reverberant_noise: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// DOA-difference class of the target/noise pair, when geometry is known.
    pub doa_bin: Option<DoaBin>,
    pub num_samples: usize,
    pub sample_rate_hz: u32,
    pub files: ComponentFiles,
    pub meta: SceneMeta,
    #[serde(default)]
    pub target_room: Option<RoomSpec>,
    #[serde(default)]
    pub noise_room: Option<RoomSpec>,
    #[serde(default)]
    pub speech_source: Option<String>,
    #[serde(default)]
    pub noise_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub entries: Vec<ManifestEntry>,
    /// Directory the component paths are relative to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A scene plus the provenance that goes into its manifest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub id: String,
    pub pair: MixturePair,
    pub target_room: Option<RoomSpec>,
    pub noise_room: Option<RoomSpec>,
    pub speech_source: Option<String>,
    pub noise_source: Option<String>,
}

impl SceneRecord {
    pub fn new(id: impl Into<String>, pair: MixturePair) -> Self {
        SceneRecord { id: id.into(), pair, target_room: None, noise_room: None, speech_source: None, noise_source: None }
    }
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::usage(format!("utterance id {id:?} must be a non-empty name of [A-Za-z0-9_.-]")))
    }
}

/// Write the component WAVs of one scene under `out_dir/<id>/`.
pub fn write_scene(record: &SceneRecord, out_dir: &Path) -> Result<ManifestEntry> {
    check_id(&record.id)?;
    let rel = |name: &str| format!("{}/{name}.wav", record.id);
    let files = ComponentFiles {
        mixture: rel("mixture"),
        anechoic_target: rel("anechoic_target"),
        direct_speech_image: rel("direct_speech_image"),
        reverberant_speech_tail: rel("reverberant_speech_tail"),
        reverberant_noise: rel("reverberant_noise"),
    };
    let pair = &record.pair;
    wav::write_wav(&out_dir.join(&files.mixture), &pair.mixture, Encoding::Float32)?;
    wav::write_mono(&out_dir.join(&files.anechoic_target), &pair.anechoic_target, Encoding::Float32)?;
    wav::write_wav(&out_dir.join(&files.direct_speech_image), &pair.direct_speech_image, Encoding::Float32)?;
    wav::write_wav(&out_dir.join(&files.reverberant_speech_tail), &pair.reverberant_speech_tail, Encoding::Float32)?;
    wav::write_wav(&out_dir.join(&files.reverberant_noise), &pair.reverberant_noise, Encoding::Float32)?;
    Ok(ManifestEntry {
        id: record.id.clone(),
        doa_bin: pair.meta.geometry.as_ref().map(|g| g.doa_bin),
        num_samples: pair.mixture.len(),
        sample_rate_hz: pair.mixture.sample_rate_hz(),
        files,
        meta: pair.meta.clone(),
        target_room: record.target_room.clone(),
        noise_room: record.noise_room.clone(),
        speech_source: record.speech_source.clone(),
        noise_source: record.noise_source.clone(),
    })
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Self {
        Manifest { schema_version: MANIFEST_SCHEMA_VERSION, entries, base_dir: base_dir.into() }
    }

    /// Write `manifest.json` into the base directory and return its path.
    pub fn write(&self) -> Result<PathBuf> {
        self.validate(&self.base_dir.join(MANIFEST_FILE))?;
        let path = self.base_dir.join(MANIFEST_FILE);
        json::write(&path, self)?;
        Ok(path)
    }

    /// Load a manifest from its file or from the directory holding it.
    pub fn load(path: &Path) -> Result<Manifest> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let mut manifest: Manifest = json::read(&file)?;
        manifest.base_dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate(&file)?;
        Ok(manifest)
    }

    fn validate(&self, file: &Path) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::format(file, format!("unsupported schema_version {}", self.schema_version)));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            check_id(&e.id).map_err(|err| Error::format(file, err.to_string()))?;
            if !seen.insert(e.id.as_str()) {
                return Err(Error::format(file, format!("duplicate utterance id {}", e.id)));
            }
        }
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Read the component WAVs of `entry` back into a scene.
    pub fn load_pair(&self, entry: &ManifestEntry) -> Result<MixturePair> {
        let f = &entry.files;
        let fs = Some(entry.sample_rate_hz);
        let multi = |rel: &str| -> Result<_> {
            let path = self.resolve(rel);
            let w = wav::read_wav(&path)?;
            if w.sample_rate_hz() != entry.sample_rate_hz || w.len() != entry.num_samples {
                return Err(Error::format(
                    &path,
                    format!(
                        "expected {} samples at {} Hz, found {} at {} Hz",
                        entry.num_samples,
                        entry.sample_rate_hz,
                        w.len(),
                        w.sample_rate_hz()
                    ),
                ));
            }
            Ok(w)
        };
        Ok(MixturePair {
            mixture: multi(&f.mixture)?,
            anechoic_target: wav::read_mono(&self.resolve(&f.anechoic_target), fs)?,
            direct_speech_image: multi(&f.direct_speech_image)?,
            reverberant_speech_tail: multi(&f.reverberant_speech_tail)?,
            reverberant_noise: multi(&f.reverberant_noise)?,
            meta: entry.meta.clone(),
        })
    }
}

/// Write every scene and then the manifest. An empty list gives a valid
/// manifest with no entries.
pub fn build_manifest(records: &[SceneRecord], out_dir: &Path) -> Result<Manifest> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(Error::usage(format!("duplicate utterance id {}", dup.id)));
    }
    let entries = records.iter().map(|r| write_scene(r, out_dir)).collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(entries, out_dir);
    manifest.write()?;
    Ok(manifest)
}
