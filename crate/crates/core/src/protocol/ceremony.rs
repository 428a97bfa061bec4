//! Client side of enrollment and authentication.

use log::debug;
use thiserror::Error;
use zeroize::Zeroize;

use super::{AssertionMessage, Challenge, Purpose, RegistrationMessage};
use crate::binding::{frame_digest, majority_vote, VseedDigest};
use crate::config::PipelineConfig;
use crate::geometry::LandmarkFrame;
use crate::keymat::{
    has_bido_prefix, keypair_from_seed, make_cred_id, split_cred_id, verify, CredIdError,
    KeyError, VCONST,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CeremonyError {
    #[error("frame source ended after {valid} of {needed} valid frames")]
    FrameSourceExhausted { valid: usize, needed: usize },
    #[error("no allowed credential carries the BIDO prefix")]
    NoBidoCredential,
    #[error("BIDO credential in allowCredentials is malformed")]
    MalformedCredential,
    #[error("no key match within {0} valid frames")]
    AuthTimeout(usize),
    #[error("challenge was issued for {0:?}")]
    WrongPurpose(Purpose),
    #[error("challenge was already consumed")]
    ChallengeConsumed,
    #[error(transparent)]
    Key(#[from] KeyError),
}

impl CeremonyError {
    /// Stable name used in CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Self::FrameSourceExhausted { .. } => "FrameSourceExhausted",
            Self::NoBidoCredential => "NoBidoCredential",
            Self::MalformedCredential => "MalformedCredential",
            Self::AuthTimeout(_) => "AuthTimeout",
            Self::WrongPurpose(_) => "WrongPurpose",
            Self::ChallengeConsumed => "ChallengeConsumed",
            Self::Key(_) => "KeyError",
        }
    }
}

fn check_challenge(challenge: &Challenge, purpose: Purpose) -> Result<(), CeremonyError> {
    if challenge.purpose != purpose {
        return Err(CeremonyError::WrongPurpose(challenge.purpose));
    }
    if challenge.consumed {
        return Err(CeremonyError::ChallengeConsumed);
    }
    Ok(())
}

/// Collects `config.enroll_frames` valid digests, votes, derives the key
/// pair and produces a self-attested registration message. Every secret
/// (digests, Vseed, private key) is wiped before returning.
pub fn enroll<I>(
    frames: I,
    salt: &str,
    challenge: &Challenge,
    config: &PipelineConfig,
) -> Result<RegistrationMessage, CeremonyError>
where
    I: IntoIterator<Item = LandmarkFrame>,
{
    check_challenge(challenge, Purpose::Registration)?;
    let needed = config.enroll_frames;
    // Fixed capacity: the list never reallocates, so no stale digest copies
    // are left behind in freed memory.
    let mut digests: Vec<VseedDigest> = Vec::with_capacity(needed);
    let mut rejected = 0usize;
    for frame in frames {
        if digests.len() == needed {
            break;
        }
        match frame_digest(&frame, salt, config) {
            Ok(d) => digests.push(d),
            Err(reason) => {
                rejected += 1;
                debug!("enroll: frame {} rejected: {reason}", frame.frame_id);
            }
        }
    }
    if digests.len() < needed {
        let valid = digests.len();
        digests.zeroize();
        return Err(CeremonyError::FrameSourceExhausted { valid, needed });
    }
    debug!("enroll: {needed} valid frames, {rejected} rejected");

    let mut vseed = majority_vote(&digests).expect("at least one digest");
    digests.zeroize();
    let mut key = keypair_from_seed(&vseed);
    vseed.zeroize();

    let result = (|| {
        let cred_id = make_cred_id(&key)?.to_bytes();
        let auth_data =
            RegistrationMessage::build_auth_data(&challenge.nonce, &cred_id, key.public_key());
        let attestation = key.sign(&auth_data)?;
        Ok(RegistrationMessage {
            auth_data,
            attestation,
        })
    })();
    key.zeroize();
    result
}

/// Derives a candidate key from each valid frame until one verifies the
/// signed constant inside the credential id, then signs the challenge.
pub fn authenticate<I>(
    frames: I,
    salt: &str,
    challenge: &Challenge,
    allow_credentials: &[Vec<u8>],
    config: &PipelineConfig,
) -> Result<AssertionMessage, CeremonyError>
where
    I: IntoIterator<Item = LandmarkFrame>,
{
    check_challenge(challenge, Purpose::Authentication)?;
    let cred_id = allow_credentials
        .iter()
        .find(|c| has_bido_prefix(c))
        .ok_or(CeremonyError::NoBidoCredential)?;
    let signed_vconst = split_cred_id(cred_id).map_err(|e| match e {
        CredIdError::NotBidoCredential => CeremonyError::NoBidoCredential,
        CredIdError::MalformedCredential => CeremonyError::MalformedCredential,
    })?;

    let mut valid = 0usize;
    for frame in frames {
        if valid == config.auth_max_frames {
            return Err(CeremonyError::AuthTimeout(valid));
        }
        let mut candidate = match frame_digest(&frame, salt, config) {
            Ok(d) => d,
            Err(reason) => {
                debug!("auth: frame {} rejected: {reason}", frame.frame_id);
                continue;
            }
        };
        valid += 1;
        let mut key = keypair_from_seed(&candidate);
        candidate.zeroize();
        if verify(key.public_key(), VCONST, &signed_vconst)? {
            debug!("auth: key recovered on valid frame {valid}");
            let signed = key.sign(&challenge.nonce);
            key.zeroize();
            return Ok(AssertionMessage {
                cred_id: cred_id.clone(),
                signed_challenge: signed?,
            });
        }
        key.zeroize();
    }
    if valid == config.auth_max_frames {
        return Err(CeremonyError::AuthTimeout(valid));
    }
    Err(CeremonyError::FrameSourceExhausted {
        valid,
        needed: config.auth_max_frames,
    })
}
