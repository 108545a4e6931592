//! Deterministic member allocation onto `[0, 100)` and into `b` buckets.
//!
//! The allocation value of member `i` under randomization domain `h` is taken
//! from the MD5 digest of the ASCII string `"<label>:<decimal id>"`: the first
//! eight digest bytes are read as a big-endian `u64` `u` and mapped to
//! `(u / 2^64) * 100`. Bucket `j` (1-based) holds values in
//! `[100(j-1)/b, 100j/b)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocError {
    #[error("bucket count must be at least 1")]
    InvalidBucketCount,
    #[error("hash id label must be non-empty")]
    EmptyHashId,
}

/// Names a randomization domain. Distinct labels give independent allocations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HashId(String);

impl HashId {
    pub fn new(label: impl Into<String>) -> Result<Self, AllocError> {
        let label = label.into();
        if label.is_empty() {
            return Err(AllocError::EmptyHashId);
        }
        Ok(HashId(label))
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for HashId {
    type Error = AllocError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        HashId::new(value)
    }
}

impl From<HashId> for String {
    fn from(value: HashId) -> Self {
        value.0
    }
}

impl fmt::Display for HashId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct MemberId(pub u64);

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point in `[0, 100)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct AllocationValue(f64);

impl AllocationValue {
    /// Wraps a raw value, rejecting anything outside `[0, 100)`.
    pub fn new(value: f64) -> Option<Self> {
        (0.0..100.0)
            .contains(&value)
            .then_some(AllocationValue(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// 1-based bucket index, `1 <= index <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BucketIndex(pub u32);

impl BucketIndex {
    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for BucketIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// Raw 64-bit allocation key: first eight MD5 bytes of `"<label>:<id>"`, big-endian.
pub fn allocation_key(h: &HashId, i: MemberId) -> u64 {
    let digest = md5::compute(format!("{}:{}", h.0, i.0));
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest.0[..8]);
    u64::from_be_bytes(head)
}

/// Places member `i` on `[0, 100)` under domain `h`.
pub fn randomize(h: &HashId, i: MemberId) -> AllocationValue {
    let u = allocation_key(h, i);
    let v = (u as f64 / TWO_POW_64) * 100.0;
    // u within 2^10 of 2^64 rounds to exactly 100 in f64
    AllocationValue(if v >= 100.0 { 100f64.next_down() } else { v })
}

/// Bucket of an allocation value among `b` equal-width buckets.
pub fn bucket_of_value(value: AllocationValue, b: u32) -> Result<BucketIndex, AllocError> {
    if b == 0 {
        return Err(AllocError::InvalidBucketCount);
    }
    let j = (value.0 * f64::from(b) / 100.0).floor() as u32;
    Ok(BucketIndex(j.min(b - 1) + 1))
}

/// Bucket of member `i` under domain `h` for a ring of `b` buckets.
pub fn bucket_of(h: &HashId, i: MemberId, b: u32) -> Result<BucketIndex, AllocError> {
    bucket_of_value(randomize(h, i), b)
}
