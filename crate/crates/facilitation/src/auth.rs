//! Bearer tokens. Each stakeholder receives a token at registration; the
//! session keeps only its SHA-256 digest.

use std::sync::atomic::{AtomicU64, Ordering};

use eccola_deploy::engine::sha256_hex;
use eccola_deploy::Stakeholder;
use rand::RngCore;

pub trait TokenIssuer: Send + Sync {
    fn issue(&self) -> String;
}

/// 32 random bytes, hex encoded.
#[derive(Debug, Default)]
pub struct RandomTokens;

impl TokenIssuer for RandomTokens {
    fn issue(&self) -> String {
        let mut bytes = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Predictable tokens `<prefix>-1`, `<prefix>-2`, ... for tests and demos.
#[derive(Debug)]
pub struct SequentialTokens {
    prefix: String,
    next: AtomicU64,
}

impl SequentialTokens {
    pub fn new(prefix: impl Into<String>) -> Self {
        SequentialTokens {
            prefix: prefix.into(),
            next: AtomicU64::new(1),
        }
    }
}

impl TokenIssuer for SequentialTokens {
    fn issue(&self) -> String {
        format!("{}-{}", self.prefix, self.next.fetch_add(1, Ordering::Relaxed))
    }
}

pub fn token_digest(token: &str) -> String {
    sha256_hex(token.as_bytes())
}

/// Issues a token for `stakeholder`, storing its digest, and returns the
/// plain token.
pub fn attach_token(stakeholder: &mut Stakeholder, issuer: &dyn TokenIssuer) -> String {
    let token = issuer.issue();
    stakeholder.token_digest = Some(token_digest(&token));
    token
}
