//! Versioned JSON containers for every artifact, addressed by content hash.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT: &str = "semeq";
pub const VERSION: u32 = 1;

/// Hex SHA-256 of the canonical JSON encoding.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("artifact types serialize infallibly");
    sha256_hex(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Container<T> {
    pub format: String,
    pub version: u32,
    /// Artifact type, e.g. `language` or `partition`.
    pub kind: String,
    pub config_hash: String,
    pub payload_hash: String,
    pub payload: T,
}

impl<T: Serialize + DeserializeOwned> Container<T> {
    pub fn new(kind: &str, config_hash: &str, payload: T) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            payload_hash: content_hash(&payload),
            payload,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact types serialize infallibly")
    }

    /// Parses and checks format, version, kind and payload hash.
    pub fn from_json(text: &str, kind: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("{kind} container: {e}")))?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported container {} v{} (expected {FORMAT} v{VERSION})",
                c.format, c.version
            )));
        }
        if c.kind != kind {
            return Err(Error::Format(format!(
                "expected a {kind} file, found {}",
                c.kind
            )));
        }
        let actual = content_hash(&c.payload);
        if actual != c.payload_hash {
            return Err(Error::Format(format!(
                "{kind} payload hash {actual} does not match recorded {}",
                c.payload_hash
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_tamper_detection() {
        let c = Container::new("numbers", "abc", vec![0.1f64, 1e-300, -2.5]);
        let text = c.to_json();
        let back: Container<Vec<f64>> = Container::from_json(&text, "numbers").unwrap();
        assert_eq!(back, c);
        assert!(matches!(
            Container::<Vec<f64>>::from_json(&text, "other"),
            Err(Error::Format(_))
        ));
        let tampered = text.replace("-2.5", "-2.25");
        assert!(matches!(
            Container::<Vec<f64>>::from_json(&tampered, "numbers"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(content_hash(&[1u8, 2]), content_hash(&[1u8, 2]));
        assert_ne!(content_hash(&[1u8, 2]), content_hash(&[2u8, 1]));
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
