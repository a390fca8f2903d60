//! Content-addressed blob store.
//!
//! Blobs are keyed by the SHA-256 of their bytes; only those hashes ever
//! go on chain. The store is in-memory by default, with optional
//! directory persistence laid out as `<root>/<first2hex>/<fullhex>`.
//! Retrieval re-hashes the stored bytes, so any tampering surfaces as an
//! integrity error rather than silently wrong data.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{digest_bytes, Digest};

/// SHA-256 of a blob's raw bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct ContentHash(pub Digest);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> ContentHash {
        ContentHash(digest_bytes(bytes))
    }

    pub fn to_hex(self) -> String {
        self.0.to_hex()
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// An opaque payload; its size is always the actual byte length.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Blob {
    pub bytes: Vec<u8>,
}

impl Blob {
    pub fn new(bytes: Vec<u8>) -> Blob {
        Blob { bytes }
    }

    pub fn size_bytes(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn content_hash(&self) -> ContentHash {
        ContentHash::of(&self.bytes)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no blob stored under {0}")]
    NotFound(ContentHash),
    #[error("stored bytes for {key} re-hash to {actual}; blob is corrupt")]
    Integrity {
        key: ContentHash,
        actual: ContentHash,
    },
    #[error("blob store io: {0}")]
    Io(#[from] io::Error),
}

/// Content-addressed store standing in for a distributed file system.
#[derive(Debug, Default)]
pub struct ContentStore {
    blobs: BTreeMap<ContentHash, Vec<u8>>,
    root: Option<PathBuf>,
}

impl ContentStore {
    /// Purely in-memory store.
    pub fn in_memory() -> ContentStore {
        ContentStore::default()
    }

    /// Store that mirrors every blob to `<root>/<first2hex>/<fullhex>`.
    pub fn with_dir(root: PathBuf) -> ContentStore {
        ContentStore {
            blobs: BTreeMap::new(),
            root: Some(root),
        }
    }

    fn path_for(&self, hash: ContentHash) -> Option<PathBuf> {
        self.root.as_ref().map(|root| {
            let hex = hash.to_hex();
            root.join(&hex[..2]).join(hex)
        })
    }

    /// Store a blob and return its hash. Idempotent: re-putting the same
    /// bytes returns the same key and stores nothing new.
    pub fn put(&mut self, blob: &Blob) -> Result<ContentHash, StoreError> {
        let hash = blob.content_hash();
        if !self.blobs.contains_key(&hash) {
            self.blobs.insert(hash, blob.bytes.clone());
            if let Some(path) = self.path_for(hash) {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                std::fs::write(&path, &blob.bytes)?;
            }
        }
        Ok(hash)
    }

    /// Fetch a blob, verifying its bytes against the key.
    pub fn get(&self, hash: ContentHash) -> Result<Blob, StoreError> {
        let bytes = match self.blobs.get(&hash) {
            Some(b) => b.clone(),
            None => match self.path_for(hash) {
                Some(path) if path.exists() => std::fs::read(&path)?,
                _ => return Err(StoreError::NotFound(hash)),
            },
        };
        let actual = ContentHash::of(&bytes);
        if actual != hash {
            return Err(StoreError::Integrity { key: hash, actual });
        }
        Ok(Blob::new(bytes))
    }

    /// True iff the blob exists and its bytes still hash to the key.
    /// Missing blobs verify false.
    pub fn verify(&self, hash: ContentHash) -> bool {
        matches!(self.get(hash), Ok(_))
    }

    pub fn contains(&self, hash: ContentHash) -> bool {
        self.blobs.contains_key(&hash) || self.path_for(hash).map(|p| p.exists()).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    /// Corruption-injection hook for tests: flips one bit of the stored
    /// bytes without touching the key. Returns false if the blob is
    /// missing or the bit index is out of range.
    pub fn corrupt_bit(&mut self, hash: ContentHash, bit_index: usize) -> bool {
        let path = self.path_for(hash);
        let Some(bytes) = self.blobs.get_mut(&hash) else {
            return false;
        };
        let byte = bit_index / 8;
        if byte >= bytes.len() {
            return false;
        }
        bytes[byte] ^= 1 << (bit_index % 8);
        if let Some(path) = path {
            let _ = std::fs::write(&path, &*bytes);
        }
        true
    }
}
