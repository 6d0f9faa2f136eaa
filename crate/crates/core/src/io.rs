//! Versioned structured-text containers and hashing helpers.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct VersionedRef<'a, T> {
    format_version: u32,
    data: &'a T,
}

#[derive(Deserialize)]
struct Versioned<T> {
    format_version: u32,
    data: T,
}

pub fn to_versioned_json<T: Serialize>(version: u32, value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&VersionedRef {
        format_version: version,
        data: value,
    })?)
}

pub fn from_versioned_json<T: DeserializeOwned>(text: &str, version: u32) -> Result<T> {
    let probe: serde_json::Value = serde_json::from_str(text)?;
    match probe.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(version) => {}
        Some(v) => {
            return Err(Error::Format(format!(
                "format_version {v}, this build reads {version}"
            )))
        }
        None => return Err(Error::Format("missing format_version".into())),
    }
    // Parse from the text again: going through `Value` would not keep
    // every float bit-exact.
    let parsed: Versioned<T> = serde_json::from_str(text)?;
    debug_assert_eq!(parsed.format_version, version);
    Ok(parsed.data)
}

pub fn write_versioned_json<T: Serialize>(path: &Path, version: u32, value: &T) -> Result<()> {
    fs::write(path, to_versioned_json(version, value)?)?;
    Ok(())
}

pub fn read_versioned_json<T: DeserializeOwned>(path: &Path, version: u32) -> Result<T> {
    from_versioned_json(&fs::read_to_string(path)?, version)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stateless 64-bit mixer (SplitMix64 finalizer).
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
