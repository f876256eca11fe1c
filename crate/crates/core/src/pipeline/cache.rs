use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::oracles::PromptTemplate;

/// Content-addressed response cache: one file per key.
///
/// Writes go through a temporary file and a rename, so concurrent readers
/// see either nothing or a complete entry.
#[derive(Debug)]
pub struct DirCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

impl DirCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        fs::read_to_string(self.path(key)).ok()
    }

    pub fn put(&self, key: &str, value: &str) -> io::Result<()> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        fs::write(&tmp, value)?;
        fs::rename(&tmp, self.path(key))
    }
}

/// Key for a base-stage response: the video, the question with its choices,
/// and the template identity including a hash of its body, so editing a
/// prompt invalidates its entries.
pub fn cache_key(video_ref: &str, question: &str, choices: &[String], template: &PromptTemplate) -> String {
    let mut h = Sha256::new();
    for part in [video_ref, question]
        .into_iter()
        .chain(choices.iter().map(String::as_str))
        .chain([template.id(), template.body_hash().as_str()])
    {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}
