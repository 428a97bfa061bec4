//! WebAuthn-shaped enrollment and authentication against a relying party.
//!
//! Messages follow the registration/assertion split of WebAuthn with a
//! plain JSON encoding (base64url for binary fields) instead of CTAP2/CBOR.

mod ceremony;
pub mod http;
mod rp;
mod store;

use serde::{Deserialize, Serialize};

pub use ceremony::{authenticate, enroll, CeremonyError};
pub use rp::{Clock, ManualClock, RelyingParty, RpError, SystemClock, DEFAULT_CHALLENGE_TTL_SECS};
pub use store::{CredentialRecord, CredentialStore, StoreError};

use crate::keymat::{Signature, CRED_ID_LEN, PUBLIC_KEY_LEN};

pub const NONCE_LEN: usize = 32;
pub const AUTH_DATA_LEN: usize = NONCE_LEN + CRED_ID_LEN + PUBLIC_KEY_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Registration,
    Authentication,
}

/// A relying-party challenge as seen by a client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; NONCE_LEN],
    pub issued_at: u64,
    pub purpose: Purpose,
    pub consumed: bool,
}

impl Challenge {
    /// A challenge received over the wire, where only the nonce travels.
    pub fn received(nonce: [u8; NONCE_LEN], purpose: Purpose, now: u64) -> Self {
        Self {
            nonce,
            issued_at: now,
            purpose,
            consumed: false,
        }
    }
}

/// `auth_data = nonce ∥ cred_id ∥ public_key`, self-attested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationMessage {
    #[serde(with = "crate::b64::bytes")]
    pub auth_data: Vec<u8>,
    pub attestation: Signature,
}

/// The three fields packed into [`RegistrationMessage::auth_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthData<'a> {
    pub nonce: &'a [u8; NONCE_LEN],
    pub cred_id: &'a [u8; CRED_ID_LEN],
    pub public_key: &'a [u8; PUBLIC_KEY_LEN],
}

impl RegistrationMessage {
    pub fn build_auth_data(
        nonce: &[u8; NONCE_LEN],
        cred_id: &[u8; CRED_ID_LEN],
        public_key: &[u8; PUBLIC_KEY_LEN],
    ) -> Vec<u8> {
        [nonce.as_slice(), cred_id, public_key].concat()
    }

    pub fn parse_auth_data(&self) -> Option<AuthData<'_>> {
        if self.auth_data.len() != AUTH_DATA_LEN {
            return None;
        }
        let (nonce, rest) = self.auth_data.split_at(NONCE_LEN);
        let (cred_id, public_key) = rest.split_at(CRED_ID_LEN);
        Some(AuthData {
            nonce: nonce.try_into().ok()?,
            cred_id: cred_id.try_into().ok()?,
            public_key: public_key.try_into().ok()?,
        })
    }
}

/// Signature over the challenge nonce, tagged with the credential it used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionMessage {
    #[serde(with = "crate::b64::bytes")]
    pub cred_id: Vec<u8>,
    pub signed_challenge: Signature,
}

pub(crate) fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
