use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::{ColumnFrame, PartitionedFrame};
use crate::split::{select_control, Boundaries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_depth: usize,
    pub min_leaf_size: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_leaf_size: 1,
        }
    }
}

/// Everything a training run must agree on, pinned by digests.
///
/// A manifest is built unlocked, then [`Manifest::lock`]ed; trainers only
/// accept locked manifests whose digests still verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    row_id_digest: String,
    feature_names: Vec<String>,
    treatment_vocabulary: Vec<String>,
    control_label: String,
    boundaries: Vec<Boundaries>,
    seed: u64,
    training: TrainingConfig,
    preprocessing_digest: String,
    locked: bool,
    manifest_digest: Option<String>,
}

fn row_id_digest(frame: &ColumnFrame) -> String {
    let mut ids = frame.row_ids().to_vec();
    ids.sort_unstable();
    let mut h = Sha256::new();
    h.update(b"policykit-rowids\x01");
    for id in ids {
        h.update(id.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Manifest {
    pub fn new(
        frame: &ColumnFrame,
        boundaries: Vec<Boundaries>,
        treatment_vocabulary: Vec<String>,
        control_override: Option<&str>,
        seed: u64,
        training: TrainingConfig,
    ) -> Result<Self> {
        if training.min_leaf_size == 0 {
            return Err(Error::invalid("min_leaf_size must be at least 1"));
        }
        let feature_names: Vec<String> = boundaries.iter().map(|b| b.feature().to_owned()).collect();
        let control_label = select_control(&treatment_vocabulary, control_override)?;
        frame.treatment().encode(&treatment_vocabulary)?;
        let selected = frame.select_features(&feature_names)?;
        Ok(Self {
            row_id_digest: row_id_digest(frame),
            preprocessing_digest: selected.content_digest(),
            feature_names,
            treatment_vocabulary,
            control_label,
            boundaries,
            seed,
            training,
            locked: false,
            manifest_digest: None,
        })
    }

    /// What an unlocked pipeline does: vocabulary in first-appearance
    /// order and the first row's label as control, both read from `data`
    /// in its current row order. Returned locked so it can drive training.
    pub fn infer_from_data(
        data: &PartitionedFrame,
        boundaries: Vec<Boundaries>,
        seed: u64,
        training: TrainingConfig,
    ) -> Result<Self> {
        let frame = data.concat();
        let vocabulary = frame.treatment().first_appearance_order();
        let first = vocabulary
            .first()
            .cloned()
            .ok_or_else(|| Error::invalid("cannot infer a vocabulary from an empty frame"))?;
        Ok(Self::new(&frame, boundaries, vocabulary, Some(&first), seed, training)?.lock())
    }

    pub fn lock(mut self) -> Self {
        self.locked = true;
        self.manifest_digest = Some(self.compute_digest());
        self
    }

    fn compute_digest(&self) -> String {
        let mut unsealed = self.clone();
        unsealed.manifest_digest = None;
        let bytes = serde_json::to_vec(&unsealed).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    /// Locked and self-consistent.
    pub fn verify(&self) -> Result<()> {
        if !self.locked {
            return Err(Error::contract("manifest is not locked"));
        }
        match &self.manifest_digest {
            Some(d) if *d == self.compute_digest() => Ok(()),
            _ => Err(Error::contract("manifest digest does not match its contents")),
        }
    }

    /// The frame carries exactly the rows and feature content the manifest
    /// was locked against, in any order or partitioning.
    pub fn verify_frame(&self, frame: &ColumnFrame) -> Result<()> {
        if row_id_digest(frame) != self.row_id_digest {
            return Err(Error::contract("row id set differs from the manifest"));
        }
        if frame.select_features(&self.feature_names)?.content_digest() != self.preprocessing_digest {
            return Err(Error::contract("frame content differs from the manifest"));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn treatment_vocabulary(&self) -> &[String] {
        &self.treatment_vocabulary
    }

    pub fn control_label(&self) -> &str {
        &self.control_label
    }

    pub fn boundaries(&self) -> &[Boundaries] {
        &self.boundaries
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn training(&self) -> TrainingConfig {
        self.training
    }

    pub fn row_id_digest(&self) -> &str {
        &self.row_id_digest
    }

    pub fn preprocessing_digest(&self) -> &str {
        &self.preprocessing_digest
    }

    pub fn manifest_digest(&self) -> Option<&str> {
        self.manifest_digest.as_deref()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Parses and verifies a locked manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        m.verify()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }
}
