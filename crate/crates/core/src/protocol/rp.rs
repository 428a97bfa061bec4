//! Mock relying party: challenge table, credential registry, verification.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use log::info;
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use thiserror::Error;

use super::store::{CredentialRecord, CredentialStore, StoreError};
use super::{AssertionMessage, Challenge, Purpose, RegistrationMessage, NONCE_LEN};
use crate::keymat::{split_cred_id, verify, VCONST};

pub const DEFAULT_CHALLENGE_TTL_SECS: u64 = 120;

#[derive(Debug, Error)]
pub enum RpError {
    #[error("no outstanding {0:?} challenge with this nonce")]
    ChallengeMismatch(Purpose),
    #[error("challenge already used")]
    ChallengeReplayed,
    #[error("challenge expired")]
    ChallengeExpired,
    #[error("attestation does not verify")]
    BadAttestation,
    #[error("credential already registered")]
    DuplicateCredential,
    #[error("unknown credential")]
    UnknownCredential,
    #[error("assertion does not verify")]
    BadAssertion,
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl RpError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::ChallengeMismatch(_) => "ChallengeMismatch",
            Self::ChallengeReplayed => "ChallengeReplayed",
            Self::ChallengeExpired => "ChallengeExpired",
            Self::BadAttestation => "BadAttestation",
            Self::DuplicateCredential => "DuplicateCredential",
            Self::UnknownCredential => "UnknownCredential",
            Self::BadAssertion => "BadAssertion",
            Self::MalformedMessage(_) => "MalformedMessage",
            Self::Store(_) => "StoreError",
        }
    }
}

/// Seconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        super::unix_now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        Self(AtomicU64::new(start))
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

struct Entry {
    challenge: Challenge,
    /// Credentials offered with an authentication challenge.
    allow: Option<Vec<Vec<u8>>>,
}

struct State {
    challenges: HashMap<[u8; NONCE_LEN], Entry>,
    store: CredentialStore,
    rng: Box<dyn RngCore + Send>,
}

/// All state sits behind one mutex, so checking and consuming a challenge
/// is a single step even under concurrent requests.
pub struct RelyingParty {
    state: Mutex<State>,
    clock: Arc<dyn Clock>,
    ttl_secs: u64,
}

impl std::fmt::Debug for RelyingParty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RelyingParty")
            .field("ttl_secs", &self.ttl_secs)
            .finish_non_exhaustive()
    }
}

impl RelyingParty {
    /// An RP drawing nonces from an OS-seeded CSPRNG.
    pub fn new(store: CredentialStore) -> Self {
        Self::with_rng(store, StdRng::from_os_rng())
    }

    /// Nonces come from `rng`. A seeded RNG makes the whole exchange
    /// reproducible; use only for testing.
    pub fn with_rng(store: CredentialStore, rng: impl RngCore + Send + 'static) -> Self {
        Self {
            state: Mutex::new(State {
                challenges: HashMap::new(),
                store,
                rng: Box::new(rng),
            }),
            clock: Arc::new(SystemClock),
            ttl_secs: DEFAULT_CHALLENGE_TTL_SECS,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_ttl(mut self, ttl_secs: u64) -> Self {
        self.ttl_secs = ttl_secs;
        self
    }

    pub fn ttl_secs(&self) -> u64 {
        self.ttl_secs
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn issue(&self, purpose: Purpose, allow: Option<Vec<Vec<u8>>>) -> Challenge {
        let now = self.clock.now();
        let mut state = self.lock();
        // Consumed entries linger for one extra TTL so late replays still
        // report ChallengeReplayed.
        let horizon = self.ttl_secs.saturating_mul(2);
        state
            .challenges
            .retain(|_, e| now.saturating_sub(e.challenge.issued_at) <= horizon);
        let mut nonce = [0u8; NONCE_LEN];
        state.rng.fill_bytes(&mut nonce);
        let challenge = Challenge {
            nonce,
            issued_at: now,
            purpose,
            consumed: false,
        };
        state.challenges.insert(
            nonce,
            Entry {
                challenge: challenge.clone(),
                allow,
            },
        );
        challenge
    }

    pub fn issue_challenge(&self, purpose: Purpose) -> Challenge {
        self.issue(purpose, None)
    }

    /// Authentication challenge plus its allowCredentials list: the named
    /// credential, or every registered one when none is named.
    pub fn issue_auth_challenge(&self, cred_id: Option<&[u8]>) -> (Challenge, Vec<Vec<u8>>) {
        let allow: Vec<Vec<u8>> = match cred_id {
            Some(id) => vec![id.to_vec()],
            None => self.lock().store.cred_ids().map(<[u8]>::to_vec).collect(),
        };
        let challenge = self.issue(Purpose::Authentication, Some(allow.clone()));
        (challenge, allow)
    }

    /// The outstanding challenge for `nonce`, if neither consumed nor expired.
    pub fn challenge(&self, nonce: &[u8; NONCE_LEN]) -> Option<Challenge> {
        let now = self.clock.now();
        let state = self.lock();
        let entry = state.challenges.get(nonce)?;
        let live = !entry.challenge.consumed && !self.expired(&entry.challenge, now);
        live.then(|| entry.challenge.clone())
    }

    fn expired(&self, challenge: &Challenge, now: u64) -> bool {
        now.saturating_sub(challenge.issued_at) > self.ttl_secs
    }

    fn check<'a>(
        &self,
        state: &'a mut State,
        nonce: &[u8; NONCE_LEN],
        purpose: Purpose,
        now: u64,
    ) -> Result<&'a mut Entry, RpError> {
        let entry = state
            .challenges
            .get_mut(nonce)
            .filter(|e| e.challenge.purpose == purpose)
            .ok_or(RpError::ChallengeMismatch(purpose))?;
        if entry.challenge.consumed {
            return Err(RpError::ChallengeReplayed);
        }
        if self.expired(&entry.challenge, now) {
            return Err(RpError::ChallengeExpired);
        }
        Ok(entry)
    }

    /// Verifies a self-attested registration and stores its public key.
    pub fn register(
        &self,
        msg: &RegistrationMessage,
        challenge_nonce: &[u8; NONCE_LEN],
    ) -> Result<CredentialRecord, RpError> {
        let parts = msg.parse_auth_data().ok_or_else(|| {
            RpError::MalformedMessage(format!("auth_data is {} bytes", msg.auth_data.len()))
        })?;
        if parts.nonce != challenge_nonce {
            return Err(RpError::ChallengeMismatch(Purpose::Registration));
        }
        let now = self.clock.now();
        let mut state = self.lock();
        self.check(&mut state, challenge_nonce, Purpose::Registration, now)?;

        let attested = verify(parts.public_key, &msg.auth_data, &msg.attestation)
            .map_err(|_| RpError::BadAttestation)?;
        let signed_vconst = split_cred_id(parts.cred_id).map_err(|_| RpError::BadAttestation)?;
        let bound = verify(parts.public_key, VCONST, &signed_vconst)
            .map_err(|_| RpError::BadAttestation)?;
        if !(attested && bound) {
            return Err(RpError::BadAttestation);
        }
        if state.store.contains(parts.cred_id) {
            return Err(RpError::DuplicateCredential);
        }
        let record = CredentialRecord {
            cred_id: parts.cred_id.to_vec(),
            public_key: parts.public_key.to_vec(),
            registered_at: now,
            sign_count: 0,
        };
        state.store.insert(record.clone())?;
        self.check(&mut state, challenge_nonce, Purpose::Registration, now)?
            .challenge
            .consumed = true;
        info!("registered credential {}", crate::b64::encode(&record.cred_id));
        Ok(record)
    }

    /// Accepts an assertion and returns the new sign count.
    pub fn finish_auth(
        &self,
        msg: &AssertionMessage,
        challenge_nonce: &[u8; NONCE_LEN],
    ) -> Result<u64, RpError> {
        let now = self.clock.now();
        let mut state = self.lock();
        let public_key = state
            .store
            .get(&msg.cred_id)
            .ok_or(RpError::UnknownCredential)?
            .public_key
            .clone();
        let entry = self.check(&mut state, challenge_nonce, Purpose::Authentication, now)?;
        if let Some(allow) = &entry.allow {
            if !allow.contains(&msg.cred_id) {
                return Err(RpError::ChallengeMismatch(Purpose::Authentication));
            }
        }
        match verify(&public_key, challenge_nonce, &msg.signed_challenge) {
            Ok(true) => {}
            Ok(false) | Err(_) => return Err(RpError::BadAssertion),
        }
        entry.challenge.consumed = true;
        Ok(state.store.bump_sign_count(&msg.cred_id)?)
    }

    pub fn credential(&self, cred_id: &[u8]) -> Option<CredentialRecord> {
        self.lock().store.get(cred_id).cloned()
    }

    pub fn credential_count(&self) -> usize {
        self.lock().store.len()
    }

    /// Revokes a credential. Returns whether it existed.
    pub fn delete_credential(&self, cred_id: &[u8]) -> Result<bool, RpError> {
        Ok(self.lock().store.remove(cred_id)?.is_some())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::config::PipelineConfig;
    use crate::geometry::LandmarkFrame;
    use crate::protocol::{authenticate, enroll};
    use crate::simulator::{NoiseConfig, Population};

    const SALT: &str = "correct horse";

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            enroll_frames: 3,
            auth_max_frames: 3,
            ..PipelineConfig::default()
        }
    }

    fn frames(subject: u64) -> Vec<LandmarkFrame> {
        Population::new(7, 6.0)
            .frames(subject, &NoiseConfig::noiseless(), 1)
            .take(3)
            .collect()
    }

    fn rp_at(clock: &Arc<ManualClock>) -> RelyingParty {
        RelyingParty::with_rng(CredentialStore::in_memory(), ChaCha20Rng::seed_from_u64(1))
            .with_clock(clock.clone())
    }

    fn rp() -> (RelyingParty, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::new(1_000));
        (rp_at(&clock), clock)
    }

    fn registered(rp: &RelyingParty, subject: u64) -> Vec<u8> {
        let ch = rp.issue_challenge(Purpose::Registration);
        let msg = enroll(frames(subject), SALT, &ch, &small_config()).unwrap();
        rp.register(&msg, &ch.nonce).unwrap().cred_id
    }

    fn assertion(rp: &RelyingParty, cred_id: &[u8], subject: u64) -> (AssertionMessage, Challenge) {
        let (ch, allow) = rp.issue_auth_challenge(Some(cred_id));
        let msg = authenticate(frames(subject), SALT, &ch, &allow, &small_config()).unwrap();
        (msg, ch)
    }

    /// A registration message for subject 0 bound to a fixed nonce.
    fn sample_registration() -> &'static RegistrationMessage {
        static MSG: OnceLock<RegistrationMessage> = OnceLock::new();
        MSG.get_or_init(|| {
            let ch = Challenge::received([9; NONCE_LEN], Purpose::Registration, 0);
            enroll(frames(0), SALT, &ch, &small_config()).unwrap()
        })
    }

    #[test]
    fn nonces_distinct_and_retrievable() {
        let (rp, clock) = rp();
        let a = rp.issue_challenge(Purpose::Registration);
        let b = rp.issue_challenge(Purpose::Registration);
        assert_ne!(a.nonce, b.nonce);
        assert_eq!(rp.challenge(&a.nonce), Some(a.clone()));
        clock.advance(DEFAULT_CHALLENGE_TTL_SECS);
        assert!(rp.challenge(&a.nonce).is_some());
        clock.advance(1);
        assert!(rp.challenge(&a.nonce).is_none());
    }

    #[test]
    fn register_consumes_challenge() {
        let (rp, _) = rp();
        let ch = rp.issue_challenge(Purpose::Registration);
        let msg = enroll(frames(0), SALT, &ch, &small_config()).unwrap();
        let record = rp.register(&msg, &ch.nonce).unwrap();
        assert_eq!(record.public_key.len(), 65);
        assert_eq!(record.registered_at, 1_000);
        assert_eq!(rp.credential(&record.cred_id), Some(record));
        assert!(rp.challenge(&ch.nonce).is_none());
        assert!(matches!(rp.register(&msg, &ch.nonce), Err(RpError::ChallengeReplayed)));
    }

    #[test]
    fn register_rejects_flipped_attestation() {
        let (rp, _) = rp();
        let ch = rp.issue_challenge(Purpose::Registration);
        let mut msg = enroll(frames(0), SALT, &ch, &small_config()).unwrap();
        let mut sig = msg.attestation.to_bytes();
        sig[10] ^= 0x01;
        msg.attestation = crate::keymat::Signature::from_bytes(sig);
        assert!(matches!(rp.register(&msg, &ch.nonce), Err(RpError::BadAttestation)));
        // A failed attempt leaves the challenge usable.
        assert!(rp.challenge(&ch.nonce).is_some());
    }

    #[test]
    fn register_rejects_tampered_auth_data() {
        let (rp, _) = rp();
        let ch = rp.issue_challenge(Purpose::Registration);
        let mut msg = enroll(frames(0), SALT, &ch, &small_config()).unwrap();
        msg.auth_data[40] ^= 0x80;
        assert!(matches!(rp.register(&msg, &ch.nonce), Err(RpError::BadAttestation)));
        msg.auth_data.pop();
        assert!(matches!(
            rp.register(&msg, &ch.nonce),
            Err(RpError::MalformedMessage(_))
        ));
    }

    #[test]
    fn register_checks_nonce() {
        let (rp, clock) = rp();
        let msg = sample_registration();
        // Nonce embedded in auth_data is not an issued challenge.
        assert!(matches!(
            rp.register(msg, &[9; NONCE_LEN]),
            Err(RpError::ChallengeMismatch(Purpose::Registration))
        ));
        let ch = rp.issue_challenge(Purpose::Registration);
        assert!(matches!(
            rp.register(msg, &ch.nonce),
            Err(RpError::ChallengeMismatch(_))
        ));
        let ch = rp.issue_challenge(Purpose::Registration);
        let fresh = enroll(frames(0), SALT, &ch, &small_config()).unwrap();
        clock.advance(DEFAULT_CHALLENGE_TTL_SECS + 1);
        assert!(matches!(rp.register(&fresh, &ch.nonce), Err(RpError::ChallengeExpired)));
    }

    #[test]
    fn register_rejects_auth_challenge() {
        let (rp, _) = rp();
        let (ch, _) = rp.issue_auth_challenge(None);
        let as_reg = Challenge {
            purpose: Purpose::Registration,
            ..ch.clone()
        };
        let msg = enroll(frames(0), SALT, &as_reg, &small_config()).unwrap();
        assert!(matches!(
            rp.register(&msg, &ch.nonce),
            Err(RpError::ChallengeMismatch(Purpose::Registration))
        ));
    }

    #[test]
    fn duplicate_credential() {
        let (rp, _) = rp();
        registered(&rp, 0);
        let ch = rp.issue_challenge(Purpose::Registration);
        let msg = enroll(frames(0), SALT, &ch, &small_config()).unwrap();
        assert!(matches!(rp.register(&msg, &ch.nonce), Err(RpError::DuplicateCredential)));
        assert_eq!(rp.credential_count(), 1);
    }

    #[test]
    fn auth_accepts_then_replay_rejected() {
        let (rp, _) = rp();
        let cred = registered(&rp, 0);
        let (msg, ch) = assertion(&rp, &cred, 0);
        assert_eq!(rp.finish_auth(&msg, &ch.nonce).unwrap(), 1);
        assert!(matches!(rp.finish_auth(&msg, &ch.nonce), Err(RpError::ChallengeReplayed)));
        // Same assertion against a fresh challenge: the signature covers the old nonce.
        let (fresh, _) = rp.issue_auth_challenge(Some(&cred));
        assert!(matches!(rp.finish_auth(&msg, &fresh.nonce), Err(RpError::BadAssertion)));
        let (msg2, ch2) = assertion(&rp, &cred, 0);
        assert_eq!(rp.finish_auth(&msg2, &ch2.nonce).unwrap(), 2);
        assert_eq!(rp.credential(&cred).unwrap().sign_count, 2);
    }

    #[test]
    fn auth_rejects_other_subjects_key() {
        let (rp, _) = rp();
        let cred0 = registered(&rp, 0);
        let cred1 = registered(&rp, 1);
        let (mut msg, ch) = assertion(&rp, &cred1, 1);
        msg.cred_id = cred0.clone();
        // The challenge's allow list named cred1.
        assert!(matches!(rp.finish_auth(&msg, &ch.nonce), Err(RpError::ChallengeMismatch(_))));
        let (open, _) = rp.issue_auth_challenge(None);
        let signed_by_1 = authenticate(frames(1), SALT, &open, &[cred1], &small_config()).unwrap();
        let forged = AssertionMessage {
            cred_id: cred0,
            signed_challenge: signed_by_1.signed_challenge,
        };
        assert!(matches!(rp.finish_auth(&forged, &open.nonce), Err(RpError::BadAssertion)));
    }

    #[test]
    fn revoked_credential_is_unknown() {
        let (rp, _) = rp();
        let cred = registered(&rp, 0);
        assert!(rp.delete_credential(&cred).unwrap());
        assert!(!rp.delete_credential(&cred).unwrap());
        let (ch, allow) = rp.issue_auth_challenge(Some(&cred));
        let msg = authenticate(frames(0), SALT, &ch, &allow, &small_config()).unwrap();
        assert!(matches!(rp.finish_auth(&msg, &ch.nonce), Err(RpError::UnknownCredential)));
    }

    #[test]
    fn auth_expired_and_unknown_nonce() {
        let (rp, clock) = rp();
        let cred = registered(&rp, 0);
        let (msg, ch) = assertion(&rp, &cred, 0);
        assert!(matches!(
            rp.finish_auth(&msg, &[0; NONCE_LEN]),
            Err(RpError::ChallengeMismatch(Purpose::Authentication))
        ));
        clock.advance(DEFAULT_CHALLENGE_TTL_SECS + 1);
        assert!(matches!(rp.finish_auth(&msg, &ch.nonce), Err(RpError::ChallengeExpired)));
    }

    #[test]
    fn open_auth_challenge_lists_all_credentials() {
        let (rp, _) = rp();
        let a = registered(&rp, 0);
        let b = registered(&rp, 1);
        let (_, mut allow) = rp.issue_auth_challenge(None);
        allow.sort();
        let mut expected = vec![a, b];
        expected.sort();
        assert_eq!(allow, expected);
    }

    #[test]
    fn seeded_rng_reproduces_nonces() {
        let clock = Arc::new(ManualClock::new(5));
        let a = rp_at(&clock).issue_challenge(Purpose::Registration);
        let b = rp_at(&clock).issue_challenge(Purpose::Registration);
        assert_eq!(a, b);
    }

    #[test]
    fn concurrent_finish_auth_accepts_once() {
        let (rp, _) = rp();
        let cred = registered(&rp, 0);
        let (msg, ch) = assertion(&rp, &cred, 0);
        let rp = Arc::new(rp);
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (rp, msg) = (rp.clone(), msg.clone());
                std::thread::spawn(move || rp.finish_auth(&msg, &ch.nonce).is_ok())
            })
            .collect();
        let accepted = handles.into_iter().map(|h| h.join().unwrap());
        assert_eq!(accepted.filter(|&ok| ok).count(), 1);
    }
}
