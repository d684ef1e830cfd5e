use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse};
use crate::error::{Error, Result};

/// Content-addressed response cache:
/// `<root>/<model>/<first two digest chars>/<digest>.json`.
#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    digest: String,
    request: ChatRequest,
    response: ChatResponse,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn path_component(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DiskCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, req: &ChatRequest) -> PathBuf {
        let digest = req.digest();
        self.root
            .join(path_component(&req.model))
            .join(&digest[..2])
            .join(format!("{digest}.json"))
    }

    /// Cached response, if a readable entry for exactly this request exists.
    /// Unreadable or mismatched entries are logged and treated as misses.
    pub fn get(&self, req: &ChatRequest) -> Option<ChatResponse> {
        let path = self.entry_path(req);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache read failed for {}: {e}", path.display());
                return None;
            }
        };
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.request == *req => Some(entry.response),
            Ok(_) => {
                log::warn!("cache entry {} belongs to a different request; ignoring", path.display());
                None
            }
            Err(e) => {
                log::warn!("corrupted cache entry {}: {e}; treating as miss", path.display());
                None
            }
        }
    }

    /// Store a response. Writes go through a temp file and an atomic rename,
    /// so concurrent writers of the same entry leave one complete file.
    pub fn put(&self, req: &ChatRequest, resp: &ChatResponse) -> Result<()> {
        let path = self.entry_path(req);
        let dir = path.parent().expect("entry has a parent");
        let werr = |source| Error::CacheWrite {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(werr)?;
        let entry = CacheEntry {
            digest: req.digest(),
            request: req.clone(),
            response: resp.clone(),
        };
        let text = serde_json::to_string_pretty(&entry)?;
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            entry.digest,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, text).map_err(werr)?;
        fs::rename(&tmp, &path).map_err(werr)
    }
}
