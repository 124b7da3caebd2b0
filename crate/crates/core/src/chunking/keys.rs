use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

use super::hash::{fingerprint, signed_message, Fingerprint};

pub const PUBLIC_KEY_LEN: usize = 32;
pub const SECRET_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// Leading bytes of a public key file; the 32 key bytes follow.
pub const PUBLIC_KEY_MAGIC: [u8; 4] = *b"XPUB";
/// Leading bytes of a private key file; the 32 secret bytes follow.
pub const SECRET_KEY_MAGIC: [u8; 4] = *b"XPRV";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyFileError {
    #[error("not a {expected} key file")]
    BadMagic { expected: &'static str },
    #[error("key file is {0} bytes, expected 36")]
    BadLength(usize),
    #[error("public key is not a valid Ed25519 point")]
    BadPoint,
    #[error("public key does not belong to the private key")]
    Mismatch,
}

fn key_body(bytes: &[u8], magic: [u8; 4], expected: &'static str) -> Result<[u8; 32], KeyFileError> {
    if bytes.len() != 36 {
        return Err(KeyFileError::BadLength(bytes.len()));
    }
    if bytes[..4] != magic {
        return Err(KeyFileError::BadMagic { expected });
    }
    Ok(bytes[4..].try_into().expect("length checked"))
}

/// The public key bytes held in a public key file.
pub fn read_public_key_file(bytes: &[u8]) -> Result<[u8; PUBLIC_KEY_LEN], KeyFileError> {
    let pk = key_body(bytes, PUBLIC_KEY_MAGIC, "public")?;
    parse_public_key(&pk).ok_or(KeyFileError::BadPoint)?;
    Ok(pk)
}

/// A publisher's Ed25519 key pair. The private half stays with the
/// publishing application; the daemon only ever sees signed chunks.
#[derive(Clone)]
pub struct PublisherKey {
    signing: SigningKey,
}

impl PublisherKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut secret = [0u8; SECRET_KEY_LEN];
        rng.fill_bytes(&mut secret);
        Self::from_secret(secret)
    }

    pub fn random() -> Self {
        Self::generate(&mut rand::rngs::OsRng)
    }

    pub fn from_secret(secret: [u8; SECRET_KEY_LEN]) -> Self {
        Self { signing: SigningKey::from_bytes(&secret) }
    }

    pub fn secret_bytes(&self) -> [u8; SECRET_KEY_LEN] {
        self.signing.to_bytes()
    }

    /// Canonical public-key bytes; these are the key chunk's payload.
    pub fn public_key(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint(&self.public_key())
    }

    pub fn public_key_file(&self) -> Vec<u8> {
        [&PUBLIC_KEY_MAGIC[..], &self.public_key()].concat()
    }

    pub fn secret_key_file(&self) -> Vec<u8> {
        [&SECRET_KEY_MAGIC[..], &self.secret_bytes()].concat()
    }

    /// Loads a key pair, checking that both files belong together.
    pub fn from_key_files(public: &[u8], secret: &[u8]) -> Result<Self, KeyFileError> {
        let pk = read_public_key_file(public)?;
        let key = Self::from_secret(key_body(secret, SECRET_KEY_MAGIC, "private")?);
        if key.public_key() != pk {
            return Err(KeyFileError::Mismatch);
        }
        Ok(key)
    }

    /// Signs `frame(name) || payload`.
    pub fn sign_named(&self, name: &str, payload: &[u8]) -> Vec<u8> {
        self.signing.sign(&signed_message(name, payload)).to_bytes().to_vec()
    }
}

impl std::fmt::Debug for PublisherKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PublisherKey")
            .field("fingerprint", &hex::encode(self.fingerprint()))
            .finish_non_exhaustive()
    }
}

pub fn sign_named(name: &str, payload: &[u8], key: &PublisherKey) -> Vec<u8> {
    key.sign_named(name, payload)
}

/// Parses canonical public-key bytes.
pub(crate) fn parse_public_key(bytes: &[u8]) -> Option<VerifyingKey> {
    let arr: [u8; PUBLIC_KEY_LEN] = bytes.try_into().ok()?;
    VerifyingKey::from_bytes(&arr).ok()
}

/// Checks a named-content signature against raw public-key bytes.
pub fn verify_named_signature(name: &str, payload: &[u8], signature: &[u8], public_key: &[u8]) -> bool {
    let Some(key) = parse_public_key(public_key) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    key.verify_strict(&signed_message(name, payload), &sig).is_ok()
}
