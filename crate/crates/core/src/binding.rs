//! Distance vectorization, quantization, salted hashing and majority vote.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::config::PipelineConfig;
use crate::geometry::{validate_frame, AlignedFrame, LandmarkFrame, Rejection, LANDMARK_COUNT};

/// Number of prominent landmarks feeding the hash.
pub const PROMINENT_COUNT: usize = 27;

/// Default selection (0-indexed 68-point scheme): jaw flanks and chin,
/// both brows, nose bridge/tip/wings, periocular contour, lip corners and
/// midpoints, inner lip.
pub const DEFAULT_PROMINENT: [u8; PROMINENT_COUNT] = [
    5, 8, 11, 17, 19, 21, 22, 24, 26, 27, 30, 31, 33, 35, 36, 37, 39, 40, 42, 43, 45, 46, 48, 51,
    54, 57, 62,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProminentSetError {
    #[error("expected {PROMINENT_COUNT} indices, found {0}")]
    WrongLength(usize),
    #[error("index {0} is outside 0..{LANDMARK_COUNT}")]
    OutOfRange(u8),
    #[error("indices must be strictly increasing")]
    NotIncreasing,
}

/// Ordered set of 27 distinct landmark indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct ProminentSet([u8; PROMINENT_COUNT]);

impl ProminentSet {
    pub fn new(indices: &[u8]) -> Result<Self, ProminentSetError> {
        let arr: [u8; PROMINENT_COUNT] = indices
            .try_into()
            .map_err(|_| ProminentSetError::WrongLength(indices.len()))?;
        if let Some(&bad) = arr.iter().find(|&&i| usize::from(i) >= LANDMARK_COUNT) {
            return Err(ProminentSetError::OutOfRange(bad));
        }
        if arr.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProminentSetError::NotIncreasing);
        }
        Ok(Self(arr))
    }

    pub fn indices(&self) -> &[u8; PROMINENT_COUNT] {
        &self.0
    }
}

impl Default for ProminentSet {
    fn default() -> Self {
        Self(DEFAULT_PROMINENT)
    }
}

impl TryFrom<Vec<u8>> for ProminentSet {
    type Error = ProminentSetError;

    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        Self::new(&v)
    }
}

impl From<ProminentSet> for Vec<u8> {
    fn from(p: ProminentSet) -> Self {
        p.0.to_vec()
    }
}

/// Distances of the prominent landmarks from the canonical midpoint.
pub fn distance_vector(aligned: &AlignedFrame, prominent: &ProminentSet) -> [f64; PROMINENT_COUNT] {
    prominent
        .indices()
        .map(|i| aligned.landmarks[usize::from(i)].distance(aligned.midpoint))
}

/// `floor(d / q)` per distance, clamped to one byte.
pub fn quantize(distances: &[f64], q: u32) -> Vec<u8> {
    assert!(q >= 1, "quantizer divisor must be positive");
    let q = f64::from(q);
    distances
        .iter()
        .map(|&d| (d / q).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Quantized distances followed by the salt, as hashed.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct QuantizedVector {
    q_values: Vec<u8>,
    packed: Vec<u8>,
}

impl QuantizedVector {
    pub fn new(q_values: Vec<u8>, salt: &str) -> Self {
        let mut packed = Vec::with_capacity(q_values.len() + salt.len());
        packed.extend_from_slice(&q_values);
        packed.extend_from_slice(salt.as_bytes());
        Self { q_values, packed }
    }

    pub fn q_values(&self) -> &[u8] {
        &self.q_values
    }

    pub fn salt_bytes(&self) -> &[u8] {
        &self.packed[self.q_values.len()..]
    }

    pub fn packed(&self) -> &[u8] {
        &self.packed
    }

    pub fn digest(&self) -> VseedDigest {
        VseedDigest(Sha256::digest(&self.packed).into())
    }
}

impl fmt::Debug for QuantizedVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("QuantizedVector(..)")
    }
}

/// A 32-byte SHA-256 digest that seeds key generation. Wiped on drop.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Zeroize, ZeroizeOnDrop)]
pub struct VseedDigest([u8; 32]);

impl VseedDigest {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for VseedDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VseedDigest(..)")
    }
}

/// SHA-256 over the quantized bytes followed by the UTF-8 salt, verbatim.
pub fn salted_hash(q_values: &[u8], salt: &str) -> VseedDigest {
    QuantizedVector::new(q_values.to_vec(), salt).digest()
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("majority vote over an empty digest list")]
pub struct EmptyVote;

/// The most frequent digest; ties go to the lexicographically smallest.
pub fn majority_vote(digests: &[VseedDigest]) -> Result<VseedDigest, EmptyVote> {
    // Sort references so no extra copies of the digests are made.
    let mut sorted: Vec<&VseedDigest> = digests.iter().collect();
    sorted.sort_unstable();
    let mut best: Option<(&VseedDigest, usize)> = None;
    for run in sorted.chunk_by(|a, b| a == b) {
        if best.is_none_or(|(_, n)| run.len() > n) {
            best = Some((run[0], run.len()));
        }
    }
    best.map(|(d, _)| d.clone()).ok_or(EmptyVote)
}

/// Full per-frame path: gates, alignment, distances, quantization, hash.
pub fn frame_digest(
    frame: &LandmarkFrame,
    salt: &str,
    config: &PipelineConfig,
) -> Result<VseedDigest, Rejection> {
    let aligned = validate_frame(frame, config.frontality_tolerance_px)?;
    let distances = distance_vector(&aligned, &config.prominent_indices);
    Ok(QuantizedVector::new(quantize(&distances, config.q), salt).digest())
}
