//! Per-user object store with the three canonical spaces.
//!
//! Layout on disk: `<root>/<user_id>/{RAW_VIDEO,MODEL,PROJECT}/<path>`. Object
//! writes go to a staging file first and are renamed into place, so readers
//! see either the old or the new content.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::Actor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Space {
    RawVideo,
    Model,
    Project,
}

impl Space {
    pub const ALL: [Space; 3] = [Space::RawVideo, Space::Model, Space::Project];

    pub fn as_str(self) -> &'static str {
        match self {
            Space::RawVideo => "RAW_VIDEO",
            Space::Model => "MODEL",
            Space::Project => "PROJECT",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Space {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "RAW_VIDEO" => Ok(Space::RawVideo),
            "MODEL" => Ok(Space::Model),
            "PROJECT" => Ok(Space::Project),
            other => Err(format!("unknown space '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum UserspaceError {
    #[error("user space for '{0}' already exists")]
    AlreadyExists(String),
    #[error("no user space for '{0}'")]
    NoUserSpace(String),
    #[error("user '{actor}' may not access the space of '{owner}'")]
    AccessDenied { actor: String, owner: String },
    #[error("bad object path '{0}'")]
    BadPath(String),
    #[error("object not found: {space}/{path}")]
    NotFound { space: Space, path: String },
    #[error("userspace I/O error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = UserspaceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserSpace {
    pub user_id: String,
    pub root: PathBuf,
    pub spaces: Vec<Space>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub user_id: String,
    pub space: Space,
    pub path: String,
    pub size: u64,
    pub created_ts_micros: i64,
}

/// Object paths are relative, '/'-separated, and contain no empty, "." or
/// ".." segments.
pub fn validate_path(path: &str) -> Result<()> {
    let bad = path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.contains('\0')
        || path.split('/').any(|s| s.is_empty() || s == "." || s == "..");
    if bad {
        return Err(UserspaceError::BadPath(path.to_string()));
    }
    Ok(())
}

fn valid_user_id(user_id: &str) -> bool {
    !user_id.is_empty() && !user_id.starts_with('.') && user_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

#[derive(Debug)]
pub struct UserSpaces {
    root: PathBuf,
    staging: PathBuf,
    counter: AtomicU64,
}

impl UserSpaces {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let staging = root.join(".staging");
        fs::create_dir_all(&staging)?;
        // Leftovers from an interrupted write or creation.
        for e in fs::read_dir(&staging)? {
            let p = e?.path();
            if p.is_dir() {
                fs::remove_dir_all(&p)?;
            } else {
                fs::remove_file(&p)?;
            }
        }
        Ok(Self {
            root,
            staging,
            counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn staging_path(&self) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        self.staging.join(format!("{}-{n}", std::process::id()))
    }

    fn user_root(&self, user_id: &str) -> Result<PathBuf> {
        if !valid_user_id(user_id) {
            return Err(UserspaceError::NoUserSpace(user_id.to_string()));
        }
        Ok(self.root.join(user_id))
    }

    /// Builds the three spaces in a staging directory and renames it into
    /// place, so either all spaces exist or none do.
    pub fn create_user_space(&self, user_id: &str) -> Result<UserSpace> {
        let target = self.user_root(user_id)?;
        if target.exists() {
            return Err(UserspaceError::AlreadyExists(user_id.to_string()));
        }
        let tmp = self.staging_path();
        fs::create_dir(&tmp)?;
        for s in Space::ALL {
            fs::create_dir(tmp.join(s.as_str()))?;
        }
        if let Err(e) = fs::rename(&tmp, &target) {
            let _ = fs::remove_dir_all(&tmp);
            if target.exists() {
                return Err(UserspaceError::AlreadyExists(user_id.to_string()));
            }
            return Err(e.into());
        }
        Ok(UserSpace {
            user_id: user_id.to_string(),
            root: target,
            spaces: Space::ALL.to_vec(),
        })
    }

    pub fn exists(&self, user_id: &str) -> bool {
        self.user_root(user_id).map(|p| p.is_dir()).unwrap_or(false)
    }

    pub fn user_space(&self, user_id: &str) -> Result<UserSpace> {
        Ok(UserSpace {
            user_id: user_id.to_string(),
            root: self.existing_root(user_id)?,
            spaces: self.list_spaces(user_id)?,
        })
    }

    fn existing_root(&self, user_id: &str) -> Result<PathBuf> {
        let root = self.user_root(user_id)?;
        if !root.is_dir() {
            return Err(UserspaceError::NoUserSpace(user_id.to_string()));
        }
        Ok(root)
    }

    pub fn list_spaces(&self, user_id: &str) -> Result<Vec<Space>> {
        let root = self.existing_root(user_id)?;
        Ok(Space::ALL.into_iter().filter(|s| root.join(s.as_str()).is_dir()).collect())
    }

    fn check(&self, actor: &Actor, owner: &str) -> Result<PathBuf> {
        if !actor.may_act_for(owner) {
            return Err(UserspaceError::AccessDenied {
                actor: actor.user_id.clone(),
                owner: owner.to_string(),
            });
        }
        self.existing_root(owner)
    }

    pub fn put_object(&self, actor: &Actor, owner: &str, space: Space, path: &str, bytes: &[u8]) -> Result<ObjectRef> {
        let root = self.check(actor, owner)?;
        validate_path(path)?;
        let target = root.join(space.as_str()).join(path);
        if target.is_dir() {
            return Err(UserspaceError::BadPath(path.to_string()));
        }
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|_| UserspaceError::BadPath(path.to_string()))?;
        }
        let tmp = self.staging_path();
        fs::write(&tmp, bytes)?;
        if let Err(e) = fs::rename(&tmp, &target) {
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        object_ref(owner, space, path, &target)
    }

    pub fn get_object(&self, actor: &Actor, owner: &str, space: Space, path: &str) -> Result<Vec<u8>> {
        let root = self.check(actor, owner)?;
        validate_path(path)?;
        let target = root.join(space.as_str()).join(path);
        if !target.is_file() {
            return Err(UserspaceError::NotFound {
                space,
                path: path.to_string(),
            });
        }
        Ok(fs::read(target)?)
    }

    pub fn stat_object(&self, actor: &Actor, owner: &str, space: Space, path: &str) -> Result<ObjectRef> {
        let root = self.check(actor, owner)?;
        validate_path(path)?;
        let target = root.join(space.as_str()).join(path);
        if !target.is_file() {
            return Err(UserspaceError::NotFound {
                space,
                path: path.to_string(),
            });
        }
        object_ref(owner, space, path, &target)
    }

    /// Objects whose path starts with `prefix`, in lexicographic path order.
    pub fn list_objects(&self, actor: &Actor, owner: &str, space: Space, prefix: &str) -> Result<Vec<ObjectRef>> {
        let root = self.check(actor, owner)?.join(space.as_str());
        let mut out = Vec::new();
        walk(&root, "", &mut |rel, p| {
            if rel.starts_with(prefix) {
                out.push(object_ref(owner, space, rel, p)?);
            }
            Ok(())
        })?;
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }
}

fn walk(dir: &Path, rel: &str, f: &mut dyn FnMut(&str, &Path) -> Result<()>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        let child = if rel.is_empty() { name } else { format!("{rel}/{name}") };
        let p = e.path();
        if p.is_dir() {
            walk(&p, &child, f)?;
        } else {
            f(&child, &p)?;
        }
    }
    Ok(())
}

fn object_ref(owner: &str, space: Space, path: &str, file: &Path) -> Result<ObjectRef> {
    let meta = fs::metadata(file)?;
    let ts = meta
        .modified()
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map(|d| d.as_micros() as i64)
        .unwrap_or(0);
    Ok(ObjectRef {
        user_id: owner.to_string(),
        space,
        path: path.to_string(),
        size: meta.len(),
        created_ts_micros: ts,
    })
}
