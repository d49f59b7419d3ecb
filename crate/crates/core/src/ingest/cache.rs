//! Per-stage result cache keyed by a digest of the stage configuration.
//!
//! Each stage has one entry file pointing at a payload file. Both are
//! written to a temporary path, synced, then renamed into place, payload
//! first, so an interrupted `put` leaves the previous entry readable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::error::{Error, Result};

/// Stable 64-bit digest of a configuration value.
///
/// Object keys are sorted and every number is rendered as an `f64`, so
/// `1` and `1.0` hash alike and field order never matters.
pub fn config_digest<T: Serialize + ?Sized>(value: &T) -> u64 {
    let v = serde_json::to_value(value).expect("config serializes to json");
    let mut canon = String::new();
    canonicalize(&v, &mut canon);
    let hash = Sha256::digest(canon.as_bytes());
    u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
}

/// Combine a stage's own digest with those of its upstream stages.
pub fn chain_digest(own: u64, upstream: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(own.to_le_bytes());
    for d in upstream {
        h.update(d.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

fn canonicalize(v: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            let f = n.as_f64().unwrap_or(0.0);
            out.push_str(&format!("{f:?}"));
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonicalize(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push(':');
                canonicalize(&map[k], out);
            }
            out.push('}');
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCacheEntry {
    pub stage: String,
    /// Hex-encoded config digest.
    pub digest: String,
    pub payload_file: String,
    pub payload_sha256: String,
    pub created_at: u64,
}

#[derive(Debug, Clone)]
pub struct StageCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Interrupt {
    None,
    AfterPayload,
}

impl StageCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}.entry.json"))
    }

    pub fn entry(&self, stage: &str) -> Option<StageCacheEntry> {
        let text = fs::read_to_string(self.entry_path(stage)).ok()?;
        match serde_json::from_str(&text) {
            Ok(e) => Some(e),
            Err(err) => {
                warn!(stage, %err, "unreadable stage cache entry");
                None
            }
        }
    }

    /// Payload stored for `stage` iff it was produced under `digest`.
    pub fn get(&self, stage: &str, digest: u64) -> Option<Vec<u8>> {
        let entry = self.entry(stage)?;
        if entry.digest != format!("{digest:016x}") {
            return None;
        }
        let path = self.dir.join(&entry.payload_file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(err) => {
                warn!(stage, %err, "stage cache payload missing");
                return None;
            }
        };
        if hex(&Sha256::digest(&bytes)) != entry.payload_sha256 {
            warn!(stage, "stage cache payload checksum mismatch");
            return None;
        }
        Some(bytes)
    }

    pub fn put(&self, stage: &str, digest: u64, payload: &[u8]) -> Result<()> {
        self.put_inner(stage, digest, payload, Interrupt::None)
    }

    fn put_inner(&self, stage: &str, digest: u64, payload: &[u8], interrupt: Interrupt) -> Result<()> {
        let previous = self.entry(stage);
        let payload_file = format!("{stage}.{digest:016x}.payload");
        atomic_write(&self.dir.join(&payload_file), payload)?;
        if interrupt == Interrupt::AfterPayload {
            // leave a half-written entry behind, as a crash would
            let tmp = self.entry_path(stage).with_extension("json.tmp");
            fs::write(&tmp, b"{\"stage\":").map_err(|e| Error::io(&tmp, e))?;
            return Ok(());
        }
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let entry = StageCacheEntry {
            stage: stage.to_owned(),
            digest: format!("{digest:016x}"),
            payload_file: payload_file.clone(),
            payload_sha256: hex(&Sha256::digest(payload)),
            created_at,
        };
        let text = serde_json::to_vec_pretty(&entry).expect("entry serializes");
        atomic_write(&self.entry_path(stage), &text)?;
        if let Some(prev) = previous {
            if prev.payload_file != payload_file {
                let _ = fs::remove_file(self.dir.join(prev.payload_file));
            }
        }
        Ok(())
    }

    pub fn get_json<T: DeserializeOwned>(&self, stage: &str, digest: u64) -> Option<T> {
        let bytes = self.get(stage, digest)?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(err) => {
                warn!(stage, %err, "corrupt stage cache payload");
                None
            }
        }
    }

    pub fn put_json<T: Serialize>(&self, stage: &str, digest: u64, value: &T) -> Result<()> {
        let bytes = serde_json::to_vec(value).expect("stage payload serializes");
        self.put(stage, digest, &bytes)
    }
}

/// Write `bytes` to a sibling temp file, fsync, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
