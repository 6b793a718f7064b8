//! Append-only JSON-lines journals, one file per meta-store.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CatalogError;

pub const STORES: [&str; 8] = [
    "users",
    "logs",
    "sources",
    "algorithms",
    "services",
    "subscriptions",
    "ir",
    "anomalies",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JournalOp {
    Put,
    Delete,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub op: JournalOp,
    pub value: Value,
}

#[derive(Debug)]
pub struct Journal {
    dir: PathBuf,
    files: Mutex<BTreeMap<&'static str, File>>,
}

impl Journal {
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Mutex::new(BTreeMap::new()),
        })
    }

    fn path(&self, store: &str) -> PathBuf {
        self.dir.join(format!("{store}.jsonl"))
    }

    /// Reads every entry of `store`. A torn final line (no trailing newline
    /// and not parseable) is dropped and truncated away; any other bad line
    /// is reported.
    pub fn replay(&self, store: &'static str) -> Result<Vec<Entry>, CatalogError> {
        let path = self.path(store);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut reader = BufReader::new(file);
        let mut out = Vec::new();
        let mut good_len = 0u64;
        let mut line = String::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 {
                break;
            }
            n += 1;
            if !line.ends_with('\n') {
                // Every append ends in a newline, so this is a torn write.
                let f = OpenOptions::new().write(true).open(&path)?;
                f.set_len(good_len)?;
                break;
            }
            match serde_json::from_str::<Entry>(line.trim_end()) {
                Ok(e) => {
                    out.push(e);
                    good_len += read as u64;
                }
                Err(e) => {
                    return Err(CatalogError::CorruptJournal {
                        store: store.to_string(),
                        line: n,
                        reason: e.to_string(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Appends one entry with a single write call.
    pub fn append<T: Serialize>(&self, store: &'static str, op: JournalOp, value: &T) -> Result<(), CatalogError> {
        let entry = Entry {
            op,
            value: serde_json::to_value(value).map_err(|e| CatalogError::Io(e.to_string()))?,
        };
        let mut line = serde_json::to_vec(&entry).map_err(|e| CatalogError::Io(e.to_string()))?;
        line.push(b'\n');
        let mut files = self.files.lock().unwrap_or_else(|e| e.into_inner());
        if !files.contains_key(store) {
            let mut f = OpenOptions::new().create(true).append(true).open(self.path(store))?;
            f.seek(SeekFrom::End(0))?;
            files.insert(store, f);
        }
        let f = files.get_mut(store).expect("just inserted");
        f.write_all(&line)?;
        f.flush()?;
        Ok(())
    }
}
