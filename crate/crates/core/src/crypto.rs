//! Hashing, keyed signatures and location attestations.
//!
//! The reference scheme is a keyed FNV-1a/64 MAC. A "public key" is just a
//! key id that the trusted [`KeyDirectory`] resolves to a secret. Callers only
//! depend on [`SignatureScheme`], so a real public-key scheme can be dropped
//! in without touching them.
//!
//! Nothing here is collision resistant against an adversary outside the
//! simulation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const FNV_OFFSET: u64 = 14_695_981_039_346_656_037;
const FNV_PRIME: u64 = 1_099_511_628_211;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` already registered")]
    DuplicateKey(String),
    #[error("malformed digest `{0}`")]
    BadDigest(String),
}

/// 64-bit digest, rendered as exactly 16 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest64(pub u64);

impl fmt::Display for Digest64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Digest64 {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(CryptoError::BadDigest(s.to_string()));
        }
        u64::from_str_radix(s, 16)
            .map(Digest64)
            .map_err(|_| CryptoError::BadDigest(s.to_string()))
    }
}

/// FNV-1a, 64-bit.
pub fn h64(bytes: &[u8]) -> Digest64 {
    let mut state = FNV_OFFSET;
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    Digest64(state)
}

/// Raw keyed MAC: `h64(secret ‖ 0x00 ‖ msg)`.
pub fn keyed_mac(secret: &[u8], msg: &[u8]) -> Digest64 {
    let mut buf = Vec::with_capacity(secret.len() + 1 + msg.len());
    buf.extend_from_slice(secret);
    buf.push(0x00);
    buf.extend_from_slice(msg);
    h64(&buf)
}

/// Joins payload fields with `|`, the byte serialization every signed
/// payload in the system uses.
pub fn payload<I, S>(fields: I) -> Vec<u8>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = Vec::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(b'|');
        }
        out.extend_from_slice(f.as_ref().as_bytes());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub key_id: String,
    pub secret: Vec<u8>,
}

impl KeyPair {
    pub fn new(key_id: impl Into<String>, secret: impl Into<Vec<u8>>) -> Self {
        Self {
            key_id: key_id.into(),
            secret: secret.into(),
        }
    }

    /// Deterministic keypair derived from an id and a seed.
    pub fn derive(key_id: &str, seed: u64) -> Self {
        let d = h64(&payload(["key", key_id, &seed.to_string()]));
        Self::new(key_id, d.0.to_le_bytes().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub signer: String,
    pub mac: Digest64,
}

impl Signature {
    /// Signature claiming `signer` but computed with an arbitrary secret.
    /// This is how an adversary forges with the wrong key.
    pub fn forge(claimed_signer: &str, secret: &[u8], msg: &[u8]) -> Self {
        Self {
            signer: claimed_signer.to_string(),
            mac: keyed_mac(secret, msg),
        }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.signer, self.mac)
    }
}

impl FromStr for Signature {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (signer, mac) = s
            .rsplit_once(':')
            .ok_or_else(|| CryptoError::BadDigest(s.to_string()))?;
        Ok(Self {
            signer: signer.to_string(),
            mac: mac.parse()?,
        })
    }
}

pub trait SignatureScheme {
    fn sign(&self, key: &KeyPair, msg: &[u8]) -> Result<Signature, CryptoError>;
    fn verify(&self, key_id: &str, msg: &[u8], sig: &Signature) -> Result<bool, CryptoError>;
}

/// Trusted mapping of key id to secret. Append-only once a simulation is set up.
#[derive(Debug, Clone, Default)]
pub struct KeyDirectory {
    secrets: BTreeMap<String, Vec<u8>>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: &KeyPair) -> Result<(), CryptoError> {
        if self.secrets.contains_key(&key.key_id) {
            return Err(CryptoError::DuplicateKey(key.key_id.clone()));
        }
        self.secrets.insert(key.key_id.clone(), key.secret.clone());
        Ok(())
    }

    pub fn contains(&self, key_id: &str) -> bool {
        self.secrets.contains_key(key_id)
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }

    fn secret(&self, key_id: &str) -> Result<&[u8], CryptoError> {
        self.secrets
            .get(key_id)
            .map(Vec::as_slice)
            .ok_or_else(|| CryptoError::UnknownKey(key_id.to_string()))
    }

    pub fn attest_location(
        &self,
        authority: &KeyPair,
        host: &str,
        location: &str,
        at: u64,
    ) -> Result<Attestation, CryptoError> {
        let sig = self.sign(authority, &Attestation::signed_bytes(host, location, at))?;
        Ok(Attestation {
            authority: authority.key_id.clone(),
            host: host.to_string(),
            location: location.to_string(),
            at,
            sig,
        })
    }

    pub fn verify_attestation(&self, att: &Attestation) -> Result<bool, CryptoError> {
        self.verify(&att.authority, &att.bytes(), &att.sig)
    }
}

impl SignatureScheme for KeyDirectory {
    /// The keypair must be registered; the MAC is computed with the secret
    /// it carries, so a keypair with a stale secret produces a signature that
    /// will not verify.
    fn sign(&self, key: &KeyPair, msg: &[u8]) -> Result<Signature, CryptoError> {
        self.secret(&key.key_id)?;
        Ok(Signature {
            signer: key.key_id.clone(),
            mac: keyed_mac(&key.secret, msg),
        })
    }

    fn verify(&self, key_id: &str, msg: &[u8], sig: &Signature) -> Result<bool, CryptoError> {
        let secret = self.secret(key_id)?;
        Ok(sig.signer == key_id && keyed_mac(secret, msg) == sig.mac)
    }
}

/// Signed statement binding a host to a jurisdiction at a tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attestation {
    pub authority: String,
    pub host: String,
    pub location: String,
    pub at: u64,
    pub sig: Signature,
}

impl Attestation {
    fn signed_bytes(host: &str, location: &str, at: u64) -> Vec<u8> {
        payload([host, location, &at.to_string()])
    }

    /// The exact bytes the signature covers: `host|location|at`.
    pub fn bytes(&self) -> Vec<u8> {
        Self::signed_bytes(&self.host, &self.location, self.at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn directory() -> (KeyDirectory, KeyPair, KeyPair) {
        let mut dir = KeyDirectory::new();
        let a = KeyPair::new("alice", b"alice-secret".to_vec());
        let b = KeyPair::new("bob", b"bob-secret".to_vec());
        dir.register(&a).unwrap();
        dir.register(&b).unwrap();
        (dir, a, b)
    }

    #[test]
    fn empty_input_is_offset_basis() {
        assert_eq!(h64(b""), Digest64(0xcbf29ce484222325));
        assert_eq!(h64(b"").to_string(), "cbf29ce484222325");
    }

    #[test]
    fn single_byte_digest() {
        // (0xcbf29ce484222325 ^ 0x61) * 0x100000001b3 mod 2^64
        assert_eq!(h64(b"a"), Digest64(0xaf63dc4c8601ec8c));
        assert_ne!(h64(b"ab"), h64(b"ba"));
        assert_eq!(h64(b"ab"), Digest64(0x089c4407b545986a));
        assert_eq!(h64(b"ba"), Digest64(0x08a63307b54dd00c));
    }

    #[test]
    fn digest_text_round_trip() {
        let d = h64(b"hello");
        assert_eq!(d.to_string().parse::<Digest64>().unwrap(), d);
        assert!("ABCDEF0123456789".parse::<Digest64>().is_err());
        assert!("abc".parse::<Digest64>().is_err());
    }

    #[test]
    fn sign_is_deterministic_and_verifies() {
        let (dir, a, _) = directory();
        let s1 = dir.sign(&a, b"pay 10").unwrap();
        let s2 = dir.sign(&a, b"pay 10").unwrap();
        assert_eq!(s1, s2);
        assert!(dir.verify("alice", b"pay 10", &s1).unwrap());
    }

    #[test]
    fn wrong_claimed_key_fails() {
        let (dir, a, _) = directory();
        let sig = dir.sign(&a, b"msg").unwrap();
        assert!(!dir.verify("bob", b"msg", &sig).unwrap());
        // Even with the signer relabelled, bob's secret yields a different mac.
        let relabelled = Signature {
            signer: "bob".into(),
            mac: sig.mac,
        };
        assert_ne!(keyed_mac(b"bob-secret", b"msg"), sig.mac);
        assert!(!dir.verify("bob", b"msg", &relabelled).unwrap());
    }

    #[test]
    fn mutations_fail_verification() {
        let (dir, a, _) = directory();
        let sig = dir.sign(&a, b"transfer 100").unwrap();
        assert!(!dir.verify("alice", b"transfer 101", &sig).unwrap());
        let flipped = Signature {
            signer: sig.signer.clone(),
            mac: Digest64(sig.mac.0 ^ 1),
        };
        assert!(!dir.verify("alice", b"transfer 100", &flipped).unwrap());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let (dir, _, _) = directory();
        let ghost = KeyPair::new("ghost", b"x".to_vec());
        assert_eq!(
            dir.sign(&ghost, b"m"),
            Err(CryptoError::UnknownKey("ghost".into()))
        );
        let sig = Signature::forge("ghost", b"x", b"m");
        assert!(matches!(
            dir.verify("ghost", b"m", &sig),
            Err(CryptoError::UnknownKey(_))
        ));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let (mut dir, a, _) = directory();
        assert!(matches!(dir.register(&a), Err(CryptoError::DuplicateKey(_))));
    }

    #[test]
    fn attestation_lifecycle() {
        let (mut dir, _, _) = directory();
        let auth = KeyPair::new("locauth", b"loc".to_vec());
        dir.register(&auth).unwrap();
        let att = dir.attest_location(&auth, "h1", "HOME", 5).unwrap();
        assert_eq!(att.bytes(), b"h1|HOME|5");
        assert!(dir.verify_attestation(&att).unwrap());

        let mut moved = att.clone();
        moved.location = "PANAMA".into();
        assert!(!dir.verify_attestation(&moved).unwrap());

        // Freshness is the consumer's problem; an old attestation still verifies.
        assert!(dir.verify_attestation(&att).unwrap());
    }

    #[test]
    fn signature_text_round_trip() {
        let sig = Signature::forge("a:b", b"s", b"m");
        assert_eq!(sig.to_string().parse::<Signature>().unwrap(), sig);
    }
}
