//! Transient P-256 key material derived from a Vseed digest.
//!
//! The private scalar is `(seed mod (n − 1)) + 1`, which is total over all
//! 32-byte seeds and never zero. Signatures are ECDSA over SHA-256 with
//! RFC 6979 nonces, encoded as fixed 64-byte `r ∥ s` with low `s`, so the
//! same key signs the same message to the same bytes every time.

use std::fmt;

use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{SigningKey, VerifyingKey};
use p256::elliptic_curve::bigint::{Encoding, NonZero, U256};
use p256::elliptic_curve::Curve;
use p256::NistP256;
use thiserror::Error;
use zeroize::Zeroize;

use crate::binding::VseedDigest;

/// Fixed ASCII prefix that marks a credential id as ours.
pub const CRED_ID_PREFIX: &[u8; 6] = b"BIDO1:";
/// Non-secret constant signed into every credential id.
pub const VCONST: &[u8] = b"BIDO-VERIFICATION-CONSTANT-V1";

pub const SIGNATURE_LEN: usize = 64;
pub const PUBLIC_KEY_LEN: usize = 65;
pub const CRED_ID_LEN: usize = CRED_ID_PREFIX.len() + SIGNATURE_LEN;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum KeyError {
    #[error("key material has been zeroized")]
    KeyZeroized,
    #[error("public key is not an uncompressed P-256 point")]
    MalformedPoint,
    #[error("signature must be {SIGNATURE_LEN} bytes")]
    MalformedSignature,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CredIdError {
    #[error("credential does not carry the BIDO prefix")]
    NotBidoCredential,
    #[error("BIDO credential has the wrong length")]
    MalformedCredential,
}

/// Maps a 32-byte seed onto `[1, n − 1]`.
pub fn seed_to_scalar(seed: &[u8; 32]) -> [u8; 32] {
    let n_minus_one = NistP256::ORDER.wrapping_sub(&U256::ONE);
    let modulus = NonZero::new(n_minus_one).expect("group order exceeds one");
    let mut x = U256::from_be_bytes(*seed);
    let mut reduced = x.rem(&modulus);
    let mut scalar = reduced.wrapping_add(&U256::ONE);
    let out = scalar.to_be_bytes();
    x.zeroize();
    reduced.zeroize();
    scalar.zeroize();
    out
}

/// Deterministic P-256 key pair. Wiped on drop or by [`Zeroize::zeroize`];
/// once wiped, signing fails with [`KeyError::KeyZeroized`].
pub struct KeyPair {
    scalar: [u8; 32],
    signing: Option<SigningKey>,
    public: [u8; PUBLIC_KEY_LEN],
}

impl KeyPair {
    pub fn from_seed(seed: &VseedDigest) -> Self {
        let scalar = seed_to_scalar(seed.as_bytes());
        let signing = SigningKey::from_bytes(&scalar.into()).expect("scalar is in [1, n-1]");
        let point = signing.verifying_key().to_encoded_point(false);
        let public = point
            .as_bytes()
            .try_into()
            .expect("uncompressed P-256 point is 65 bytes");
        Self {
            scalar,
            signing: Some(signing),
            public,
        }
    }

    pub fn public_key(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.public
    }

    /// Raw private scalar, big-endian. All zeros after zeroization.
    pub fn expose_secret_scalar(&self) -> &[u8; 32] {
        &self.scalar
    }

    pub fn is_zeroized(&self) -> bool {
        self.signing.is_none()
    }

    pub fn sign(&self, message: &[u8]) -> Result<Signature, KeyError> {
        let key = self.signing.as_ref().ok_or(KeyError::KeyZeroized)?;
        let sig: p256::ecdsa::Signature = key.sign(message);
        let sig = sig.normalize_s().unwrap_or(sig);
        Ok(Signature(sig.to_bytes().into()))
    }
}

impl Zeroize for KeyPair {
    fn zeroize(&mut self) {
        self.scalar.zeroize();
        // SigningKey wipes its scalar on drop.
        drop(self.signing.take());
        self.public.zeroize();
    }
}

impl Drop for KeyPair {
    fn drop(&mut self) {
        self.zeroize();
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("zeroized", &self.is_zeroized())
            .finish_non_exhaustive()
    }
}

pub fn keypair_from_seed(seed: &VseedDigest) -> KeyPair {
    KeyPair::from_seed(seed)
}

/// Fixed-width `r ∥ s` ECDSA signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: [u8; SIGNATURE_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, KeyError> {
        bytes
            .try_into()
            .map(Self)
            .map_err(|_| KeyError::MalformedSignature)
    }

    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        self.0
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }

    pub fn r(&self) -> &[u8] {
        &self.0[..32]
    }

    pub fn s(&self) -> &[u8] {
        &self.0[32..]
    }
}

impl serde::Serialize for Signature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::b64::bytes::serialize(self.0, s)
    }
}

impl<'de> serde::Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bytes = crate::b64::bytes::deserialize(d)?;
        Signature::from_slice(&bytes).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", crate::b64::encode(self.0))
    }
}

/// Standard ECDSA verification. High-`s` encodings are accepted.
pub fn verify(public_key: &[u8], message: &[u8], sig: &Signature) -> Result<bool, KeyError> {
    if public_key.len() != PUBLIC_KEY_LEN || public_key[0] != 0x04 {
        return Err(KeyError::MalformedPoint);
    }
    let key = VerifyingKey::from_sec1_bytes(public_key).map_err(|_| KeyError::MalformedPoint)?;
    let Ok(sig) = p256::ecdsa::Signature::from_slice(sig.as_bytes()) else {
        // r or s outside [1, n-1]
        return Ok(false);
    };
    let sig = sig.normalize_s().unwrap_or(sig);
    Ok(key.verify(message, &sig).is_ok())
}

/// Credential id: the fixed prefix followed by a signature over [`VCONST`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CredId {
    signed_vconst: Signature,
}

impl CredId {
    pub fn signed_vconst(&self) -> &Signature {
        &self.signed_vconst
    }

    pub fn to_bytes(&self) -> [u8; CRED_ID_LEN] {
        let mut out = [0u8; CRED_ID_LEN];
        out[..CRED_ID_PREFIX.len()].copy_from_slice(CRED_ID_PREFIX);
        out[CRED_ID_PREFIX.len()..].copy_from_slice(self.signed_vconst.as_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, CredIdError> {
        split_cred_id(bytes).map(|signed_vconst| Self { signed_vconst })
    }

    pub fn to_base64(&self) -> String {
        crate::b64::encode(self.to_bytes())
    }
}

pub fn make_cred_id(key: &KeyPair) -> Result<CredId, KeyError> {
    Ok(CredId {
        signed_vconst: key.sign(VCONST)?,
    })
}

/// Strips the prefix and returns the embedded signature over [`VCONST`].
pub fn split_cred_id(cred: &[u8]) -> Result<Signature, CredIdError> {
    let rest = cred
        .strip_prefix(CRED_ID_PREFIX.as_slice())
        .ok_or(CredIdError::NotBidoCredential)?;
    Signature::from_slice(rest).map_err(|_| CredIdError::MalformedCredential)
}

pub fn has_bido_prefix(cred: &[u8]) -> bool {
    cred.starts_with(CRED_ID_PREFIX)
}
