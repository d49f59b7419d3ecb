//! Durable append-only JSON-lines log.
//!
//! Every record is written as one line and synced to disk before `append`
//! returns. A line torn by a crash mid-write was never acknowledged, so it
//! is cut off when the log is reopened.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::warn;

pub struct AppendLog<T> {
    path: PathBuf,
    file: File,
    _record: PhantomData<fn(T)>,
}

impl<T: Serialize + DeserializeOwned> AppendLog<T> {
    /// Open (creating if needed) and return every complete record.
    pub fn open(path: impl Into<PathBuf>) -> io::Result<(Self, Vec<T>)> {
        let path = path.into();
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        fs::create_dir_all(&dir)?;
        let existed = path.exists();
        let mut bytes = if existed { fs::read(&path)? } else { Vec::new() };

        if bytes.last().is_some_and(|&b| b != b'\n') {
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            warn!(path = %path.display(), dropped = bytes.len() - keep, "dropping torn trailing record");
            bytes.truncate(keep);
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(keep as u64)?;
            f.sync_all()?;
        }

        let mut records = Vec::new();
        for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let rec = serde_json::from_slice(line).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{} line {}: {e}", path.display(), i + 1),
                )
            })?;
            records.push(rec);
        }

        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if !existed {
            // make the new directory entry itself durable
            File::open(&dir).and_then(|d| d.sync_all()).ok();
        }
        Ok((
            Self {
                path,
                file,
                _record: PhantomData,
            },
            records,
        ))
    }

    /// Write one record and sync it to stable storage.
    pub fn append(&mut self, record: &T) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
