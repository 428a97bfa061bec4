//! Relying-party credential storage: public material only.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("credential store {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("credential store {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("credential store {path}: unsupported version {version}")]
    Version { path: PathBuf, version: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialRecord {
    /// Stored as the map key in the file.
    #[serde(skip)]
    pub cred_id: Vec<u8>,
    #[serde(with = "crate::b64::bytes")]
    pub public_key: Vec<u8>,
    pub registered_at: u64,
    pub sign_count: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreFile {
    version: u32,
    /// Keyed by base64url credential id.
    credentials: BTreeMap<String, CredentialRecord>,
}

/// Credential id to record map, optionally mirrored to a JSON file.
/// File writes go through a temporary sibling and a rename.
#[derive(Debug, Default)]
pub struct CredentialStore {
    path: Option<PathBuf>,
    records: BTreeMap<Vec<u8>, CredentialRecord>,
}

impl CredentialStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, starting empty if the file does not exist yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let records = match fs::read(&path) {
            Ok(bytes) => parse_file(&path, &bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, cred_id: &[u8]) -> Option<&CredentialRecord> {
        self.records.get(cred_id)
    }

    pub fn contains(&self, cred_id: &[u8]) -> bool {
        self.records.contains_key(cred_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cred_ids(&self) -> impl Iterator<Item = &[u8]> {
        self.records.keys().map(Vec::as_slice)
    }

    pub fn insert(&mut self, record: CredentialRecord) -> Result<(), StoreError> {
        let cred_id = record.cred_id.clone();
        let previous = self.records.insert(cred_id.clone(), record);
        self.persist().inspect_err(|_| match previous {
            Some(p) => {
                self.records.insert(cred_id.clone(), p);
            }
            None => {
                self.records.remove(&cred_id);
            }
        })
    }

    pub fn remove(&mut self, cred_id: &[u8]) -> Result<Option<CredentialRecord>, StoreError> {
        let removed = self.records.remove(cred_id);
        if removed.is_some() {
            self.persist()?;
        }
        Ok(removed)
    }

    pub fn bump_sign_count(&mut self, cred_id: &[u8]) -> Result<u64, StoreError> {
        let Some(record) = self.records.get_mut(cred_id) else {
            return Ok(0);
        };
        record.sign_count += 1;
        let count = record.sign_count;
        self.persist()?;
        Ok(count)
    }

    fn persist(&self) -> Result<(), StoreError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let file = StoreFile {
            version: STORE_VERSION,
            credentials: self
                .records
                .iter()
                .map(|(k, v)| (crate::b64::encode(k), v.clone()))
                .collect(),
        };
        let json = serde_json::to_vec_pretty(&file).expect("store serializes");
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut tmp = path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(&json).map_err(io_err)?;
        f.write_all(b"\n").map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }
}

fn parse_file(path: &Path, bytes: &[u8]) -> Result<BTreeMap<Vec<u8>, CredentialRecord>, StoreError> {
    let parse_err = |source| StoreError::Parse {
        path: path.to_owned(),
        source,
    };
    let file: StoreFile = serde_json::from_slice(bytes).map_err(parse_err)?;
    if file.version != STORE_VERSION {
        return Err(StoreError::Version {
            path: path.to_owned(),
            version: file.version,
        });
    }
    file.credentials
        .into_iter()
        .map(|(k, v)| {
            crate::b64::decode(&k)
                .map(|id| (id.clone(), CredentialRecord { cred_id: id, ..v }))
                .map_err(|e| parse_err(serde::de::Error::custom(e)))
        })
        .collect()
}
