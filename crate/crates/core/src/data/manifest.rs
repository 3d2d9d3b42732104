use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Files belonging to one model. Any entry may be absent; metrics needing it
/// are then skipped for that model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFiles {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_texts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew_prompts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vqa: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<PathBuf>,
    /// Ground-truth captions kept apart from the generated ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions_gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_space: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_space: Option<PathBuf>,
}

/// Index of a multi-model bundle. Relative paths are resolved against the
/// directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: PathBuf,
    pub annotations: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PathBuf>,
    pub models: Vec<ModelFiles>,
    /// Cutoffs the bundle was built for; command-line values take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew_k: Option<usize>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.resolve(base);
        let mut ids: Vec<&str> = manifest.models.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0].to_string()));
        }
        Ok(manifest)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.schema);
        fix(&mut self.annotations);
        if let Some(p) = self.pairs.as_mut() {
            fix(p);
        }
        for m in &mut self.models {
            for p in [
                &mut m.retrieval_images,
                &mut m.retrieval_texts,
                &mut m.skew_images,
                &mut m.skew_prompts,
                &mut m.vqa,
                &mut m.captions,
                &mut m.captions_gt,
                &mut m.scores,
                &mut m.pre_space,
                &mut m.post_space,
            ]
            .into_iter()
            .flatten()
            {
                fix(p);
            }
        }
    }

    pub fn model(&self, id: &str) -> Option<&ModelFiles> {
        self.models.iter().find(|m| m.id == id)
    }
}
