//! JSON-over-HTTP front end for [`RelyingParty`], plus the request and
//! response bodies shared with clients.
//!
//! | route                     | request                                   | response                          |
//! |---------------------------|-------------------------------------------|-----------------------------------|
//! | `POST /register/challenge`| `{}`                                      | `{challenge}`                     |
//! | `POST /register/complete` | `{auth_data, attestation}`                | `{cred_id}`                       |
//! | `POST /auth/challenge`    | `{cred_id?}`                              | `{challenge, allow_credentials}`  |
//! | `POST /auth/complete`     | `{cred_id, signed_challenge, challenge}`  | `{accepted}`                      |
//!
//! Errors carry `{error, detail}` with a 4xx status; `/auth/complete` also
//! sets `accepted: false`.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{AssertionMessage, Purpose, RegistrationMessage, RelyingParty, RpError, NONCE_LEN};
use crate::keymat::Signature;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeResponse {
    #[serde(with = "crate::b64::bytes")]
    pub challenge: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthChallengeRequest {
    #[serde(default, with = "crate::b64::opt_bytes", skip_serializing_if = "Option::is_none")]
    pub cred_id: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthChallengeResponse {
    #[serde(with = "crate::b64::bytes")]
    pub challenge: Vec<u8>,
    #[serde(with = "crate::b64::bytes_list")]
    pub allow_credentials: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterCompleteResponse {
    #[serde(with = "crate::b64::bytes")]
    pub cred_id: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthCompleteRequest {
    #[serde(with = "crate::b64::bytes")]
    pub cred_id: Vec<u8>,
    pub signed_challenge: Signature,
    #[serde(with = "crate::b64::bytes")]
    pub challenge: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthCompleteResponse {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

pub fn status_for(err: &RpError) -> StatusCode {
    match err {
        RpError::ChallengeMismatch(_) | RpError::MalformedMessage(_) => StatusCode::BAD_REQUEST,
        RpError::BadAttestation | RpError::BadAssertion => StatusCode::UNAUTHORIZED,
        RpError::UnknownCredential => StatusCode::NOT_FOUND,
        RpError::ChallengeReplayed | RpError::DuplicateCredential => StatusCode::CONFLICT,
        RpError::ChallengeExpired => StatusCode::GONE,
        RpError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError {
    status: StatusCode,
    body: ErrorBody,
    /// `/auth/complete` reports failures as `accepted: false`.
    auth_complete: bool,
}

impl ApiError {
    fn malformed(detail: impl ToString) -> Self {
        let err = RpError::MalformedMessage(detail.to_string());
        err.into()
    }

    fn for_auth_complete(mut self) -> Self {
        self.auth_complete = true;
        self
    }
}

impl From<RpError> for ApiError {
    fn from(err: RpError) -> Self {
        Self {
            status: status_for(&err),
            body: ErrorBody {
                error: err.code().to_owned(),
                detail: err.to_string(),
            },
            auth_complete: false,
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rej: JsonRejection) -> Self {
        Self::malformed(rej.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.auth_complete {
            let body = AuthCompleteResponse {
                accepted: false,
                error: Some(self.body.error),
                detail: Some(self.body.detail),
            };
            (self.status, Json(body)).into_response()
        } else {
            (self.status, Json(self.body)).into_response()
        }
    }
}

fn nonce_from(bytes: &[u8]) -> Result<[u8; NONCE_LEN], ApiError> {
    bytes
        .try_into()
        .map_err(|_| ApiError::malformed(format!("challenge must be {NONCE_LEN} bytes")))
}

type Rp = State<Arc<RelyingParty>>;

async fn register_challenge(State(rp): Rp) -> Json<ChallengeResponse> {
    let ch = rp.issue_challenge(Purpose::Registration);
    Json(ChallengeResponse {
        challenge: ch.nonce.to_vec(),
    })
}

async fn register_complete(
    State(rp): Rp,
    body: Result<Json<RegistrationMessage>, JsonRejection>,
) -> Result<Json<RegisterCompleteResponse>, ApiError> {
    let Json(msg) = body?;
    let parts = msg
        .parse_auth_data()
        .ok_or_else(|| ApiError::malformed("auth_data has the wrong length"))?;
    let nonce = *parts.nonce;
    let record = rp.register(&msg, &nonce)?;
    Ok(Json(RegisterCompleteResponse {
        cred_id: record.cred_id,
    }))
}

async fn auth_challenge(
    State(rp): Rp,
    body: Result<Json<AuthChallengeRequest>, JsonRejection>,
) -> Result<Json<AuthChallengeResponse>, ApiError> {
    let Json(req) = body?;
    let (ch, allow) = rp.issue_auth_challenge(req.cred_id.as_deref());
    Ok(Json(AuthChallengeResponse {
        challenge: ch.nonce.to_vec(),
        allow_credentials: allow,
    }))
}

async fn auth_complete(
    State(rp): Rp,
    body: Result<Json<AuthCompleteRequest>, JsonRejection>,
) -> Result<Json<AuthCompleteResponse>, ApiError> {
    let finish = || {
        let Json(req) = body?;
        let nonce = nonce_from(&req.challenge)?;
        let msg = AssertionMessage {
            cred_id: req.cred_id,
            signed_challenge: req.signed_challenge,
        };
        rp.finish_auth(&msg, &nonce).map_err(ApiError::from)
    };
    finish().map_err(ApiError::for_auth_complete)?;
    Ok(Json(AuthCompleteResponse {
        accepted: true,
        error: None,
        detail: None,
    }))
}

pub fn router(rp: Arc<RelyingParty>) -> Router {
    Router::new()
        .route("/register/challenge", post(register_challenge))
        .route("/register/complete", post(register_complete))
        .route("/auth/challenge", post(auth_challenge))
        .route("/auth/complete", post(auth_complete))
        .with_state(rp)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    rp: Arc<RelyingParty>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(rp))
        .with_graceful_shutdown(shutdown)
        .await
}

#[cfg(test)]
mod tests {
    use axum::body::Body;
    use axum::http::Request;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use serde::de::DeserializeOwned;
    use tower::ServiceExt;

    use super::*;
    use crate::config::PipelineConfig;
    use crate::protocol::{authenticate, enroll, Challenge, CredentialStore};
    use crate::simulator::{NoiseConfig, Population};

    const SALT: &str = "pepper";

    fn config() -> PipelineConfig {
        PipelineConfig {
            enroll_frames: 3,
            auth_max_frames: 3,
            ..PipelineConfig::default()
        }
    }

    fn frames() -> impl Iterator<Item = crate::geometry::LandmarkFrame> {
        Population::new(3, 6.0).frames(0, &NoiseConfig::noiseless(), 0).take(3)
    }

    async fn call<T: DeserializeOwned>(app: &Router, path: &str, body: String) -> (StatusCode, T) {
        let req = Request::post(path)
            .header("content-type", "application/json")
            .body(Body::from(body))
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), 1 << 20).await.unwrap();
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    fn app() -> Router {
        router(Arc::new(RelyingParty::with_rng(
            CredentialStore::in_memory(),
            ChaCha20Rng::seed_from_u64(0),
        )))
    }

    async fn register(app: &Router) -> (Vec<u8>, String) {
        let (_, ch): (_, ChallengeResponse) = call(app, "/register/challenge", "{}".into()).await;
        let nonce = ch.challenge.try_into().unwrap();
        let challenge = Challenge::received(nonce, Purpose::Registration, 0);
        let msg = enroll(frames(), SALT, &challenge, &config()).unwrap();
        let body = serde_json::to_string(&msg).unwrap();
        let (status, done): (_, RegisterCompleteResponse) =
            call(app, "/register/complete", body.clone()).await;
        assert_eq!(status, StatusCode::OK);
        (done.cred_id, body)
    }

    async fn assertion_body(app: &Router, cred_id: &[u8]) -> String {
        let req = serde_json::to_string(&AuthChallengeRequest {
            cred_id: Some(cred_id.to_vec()),
        })
        .unwrap();
        let (_, ch): (_, AuthChallengeResponse) = call(app, "/auth/challenge", req).await;
        assert_eq!(ch.allow_credentials, vec![cred_id.to_vec()]);
        let nonce: [u8; NONCE_LEN] = ch.challenge.clone().try_into().unwrap();
        let challenge = Challenge::received(nonce, Purpose::Authentication, 0);
        let msg = authenticate(frames(), SALT, &challenge, &ch.allow_credentials, &config()).unwrap();
        serde_json::to_string(&AuthCompleteRequest {
            cred_id: msg.cred_id,
            signed_challenge: msg.signed_challenge,
            challenge: ch.challenge,
        })
        .unwrap()
    }

    #[tokio::test]
    async fn full_exchange_and_replays() {
        let app = app();
        let (cred_id, reg_body) = register(&app).await;
        assert_eq!(cred_id.len(), crate::keymat::CRED_ID_LEN);

        let (status, err): (_, ErrorBody) = call(&app, "/register/complete", reg_body).await;
        assert_eq!(status, StatusCode::CONFLICT);
        assert_eq!(err.error, "ChallengeReplayed");

        let body = assertion_body(&app, &cred_id).await;
        let (status, ok): (_, AuthCompleteResponse) = call(&app, "/auth/complete", body.clone()).await;
        assert_eq!(status, StatusCode::OK);
        assert!(ok.accepted);

        let (status, again): (_, AuthCompleteResponse) = call(&app, "/auth/complete", body).await;
        assert_eq!(status, StatusCode::CONFLICT);
        assert!(!again.accepted);
        assert_eq!(again.error.as_deref(), Some("ChallengeReplayed"));
    }

    #[tokio::test]
    async fn open_auth_challenge_and_unknown_credential() {
        let app = app();
        let (cred_id, _) = register(&app).await;
        let (_, ch): (_, AuthChallengeResponse) = call(&app, "/auth/challenge", "{}".into()).await;
        assert_eq!(ch.allow_credentials, vec![cred_id.clone()]);

        let mut body: serde_json::Value =
            serde_json::from_str(&assertion_body(&app, &cred_id).await).unwrap();
        body["cred_id"] = crate::b64::encode(b"BIDO1:nobody").into();
        let (status, resp): (_, AuthCompleteResponse) =
            call(&app, "/auth/complete", body.to_string()).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(resp.error.as_deref(), Some("UnknownCredential"));
    }

    #[tokio::test]
    async fn malformed_bodies() {
        let app = app();
        let (status, err): (_, ErrorBody) = call(&app, "/register/complete", "{".into()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(err.error, "MalformedMessage");

        let short = format!(
            r#"{{"auth_data":"{}","attestation":"{}"}}"#,
            crate::b64::encode([0u8; 10]),
            crate::b64::encode([0u8; 64])
        );
        let (status, err): (_, ErrorBody) = call(&app, "/register/complete", short).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(err.error, "MalformedMessage");

        let bad_nonce = format!(
            r#"{{"cred_id":"QUJD","signed_challenge":"{}","challenge":"QUJD"}}"#,
            crate::b64::encode([1u8; 64])
        );
        let (status, resp): (_, AuthCompleteResponse) = call(&app, "/auth/complete", bad_nonce).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(!resp.accepted);
    }

    #[test]
    fn dto_shapes() {
        let req = AuthChallengeRequest::default();
        assert_eq!(serde_json::to_string(&req).unwrap(), "{}");
        let req: AuthChallengeRequest = serde_json::from_str(r#"{"cred_id":"QUJD"}"#).unwrap();
        assert_eq!(req.cred_id.as_deref(), Some(b"ABC".as_slice()));
        let resp = AuthChallengeResponse {
            challenge: vec![0xfb; 2],
            allow_credentials: vec![b"ABC".to_vec()],
        };
        assert_eq!(
            serde_json::to_string(&resp).unwrap(),
            r#"{"challenge":"-_s","allow_credentials":["QUJD"]}"#
        );
    }
}
