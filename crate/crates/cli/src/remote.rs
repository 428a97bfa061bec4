//! Blocking client for the relying party's HTTP API.

use anyhow::{anyhow, Context};
use bido_core::protocol::http::{
    AuthChallengeRequest, AuthChallengeResponse, AuthCompleteRequest, AuthCompleteResponse,
    ChallengeResponse, ErrorBody, RegisterCompleteResponse,
};
use bido_core::protocol::{AssertionMessage, RegistrationMessage, NONCE_LEN};
use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::exit::{fail, Class, ClassifyExt, CliResult};

pub struct RemoteRp {
    base: String,
    http: Client,
}

impl RemoteRp {
    pub fn new(base: &str) -> CliResult<Self> {
        let http = Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .context("building HTTP client")
            .transport()?;
        Ok(Self {
            base: base.trim_end_matches('/').to_owned(),
            http,
        })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> CliResult<T> {
        let url = format!("{}{path}", self.base);
        let resp = self
            .http
            .post(&url)
            .json(body)
            .send()
            .with_context(|| format!("POST {url}"))
            .transport()?;
        decode(resp, &url)
    }

    pub fn register_challenge(&self) -> CliResult<[u8; NONCE_LEN]> {
        let resp: ChallengeResponse = self.post("/register/challenge", &serde_json::json!({}))?;
        nonce(resp.challenge)
    }

    pub fn register_complete(&self, msg: &RegistrationMessage) -> CliResult<Vec<u8>> {
        let resp: RegisterCompleteResponse = self.post("/register/complete", msg)?;
        Ok(resp.cred_id)
    }

    pub fn auth_challenge(
        &self,
        cred_id: Option<&[u8]>,
    ) -> CliResult<([u8; NONCE_LEN], Vec<Vec<u8>>)> {
        let req = AuthChallengeRequest {
            cred_id: cred_id.map(<[u8]>::to_vec),
        };
        let resp: AuthChallengeResponse = self.post("/auth/challenge", &req)?;
        Ok((nonce(resp.challenge)?, resp.allow_credentials))
    }

    pub fn auth_complete(&self, msg: &AssertionMessage, challenge: &[u8; NONCE_LEN]) -> CliResult<()> {
        let req = AuthCompleteRequest {
            cred_id: msg.cred_id.clone(),
            signed_challenge: msg.signed_challenge,
            challenge: challenge.to_vec(),
        };
        let resp: AuthCompleteResponse = self.post("/auth/complete", &req)?;
        if resp.accepted {
            Ok(())
        } else {
            fail(Class::Rejected, anyhow!("relying party did not accept the assertion"))
        }
    }
}

fn nonce(bytes: Vec<u8>) -> CliResult<[u8; NONCE_LEN]> {
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| anyhow!("challenge is {} bytes, expected {NONCE_LEN}", b.len()))
        .transport()
}

fn decode<T: DeserializeOwned>(resp: Response, url: &str) -> CliResult<T> {
    let status = resp.status();
    let body = resp
        .bytes()
        .with_context(|| format!("reading response from {url}"))
        .transport()?;
    if status.is_success() {
        return serde_json::from_slice(&body)
            .with_context(|| format!("unexpected response body from {url}"))
            .transport();
    }
    match serde_json::from_slice::<ErrorBody>(&body) {
        Ok(err) if status.is_client_error() => {
            fail(Class::Rejected, anyhow!("{}: {}", err.error, err.detail))
        }
        Ok(err) => fail(Class::Transport, anyhow!("{url}: {status}: {}", err.detail)),
        Err(_) => fail(Class::Transport, anyhow!("{url}: HTTP {status}")),
    }
}
