//! Signature providers.
//!
//! Two providers sit behind [`Provider`]:
//!
//! * [`Provider::Digest`] is a fast keyed-digest scheme for simulation. The
//!   public key embeds the (masked) generation seed together with a digest
//!   binding it, and signatures are SHA-512 digests over the seed, the public
//!   key and the message. Holders of a [`KeyPair`] can only sign for their own
//!   key because [`KeyPair`] cannot be built outside of [`Provider::keygen`].
//! * [`Provider::Ed25519`] uses real Ed25519 signatures.
//!
//! Both providers use 32-byte public keys and 64-byte signatures, so every
//! wire format in this crate is provider independent.

use std::fmt;

use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use sha2::{Digest, Sha256, Sha512};

pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

const MASTER: &[u8; 32] = b"cac/digest-scheme/master-key/v01";
const KNOWLEDGE_TAG: &[u8] = b"cac/knowledge-proof";

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}..)", &self.to_hex()[..12])
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &hex::encode(&self.0[..6]))
    }
}

/// Proof that the holder of a public key knows the matching secret.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgeProof(pub Signature);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provider {
    #[default]
    Digest,
    Ed25519,
}

impl Provider {
    pub fn name(self) -> &'static str {
        match self {
            Provider::Digest => "digest",
            Provider::Ed25519 => "ed25519",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "digest" => Some(Provider::Digest),
            "ed25519" => Some(Provider::Ed25519),
            _ => None,
        }
    }

    /// Deterministic key generation: equal seeds yield equal key pairs.
    pub fn keygen(self, seed: u64) -> KeyPair {
        match self {
            Provider::Digest => {
                let public = digest_public_key(seed);
                let mut secret = [0u8; 32];
                secret[..8].copy_from_slice(&seed.to_be_bytes());
                KeyPair {
                    provider: self,
                    public,
                    secret,
                }
            }
            Provider::Ed25519 => {
                let mut h = Sha256::new();
                h.update(b"cac/ed25519-seed");
                h.update(seed.to_be_bytes());
                let secret: [u8; 32] = h.finalize().into();
                let signing = SigningKey::from_bytes(&secret);
                KeyPair {
                    provider: self,
                    public: PublicKey(signing.verifying_key().to_bytes()),
                    secret,
                }
            }
        }
    }

    /// Total: malformed keys or tokens simply yield `false`.
    pub fn verify(self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        match self {
            Provider::Digest => {
                let Some(seed) = digest_seed(pk) else {
                    return false;
                };
                digest_sign(seed, pk, msg) == sig.0
            }
            Provider::Ed25519 => {
                let Ok(vk) = VerifyingKey::from_bytes(&pk.0) else {
                    return false;
                };
                let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
                vk.verify(msg, &sig).is_ok()
            }
        }
    }

    pub fn verify_knowledge(self, pk: &PublicKey, proof: &KnowledgeProof) -> bool {
        self.verify(pk, &knowledge_message(pk), &proof.0)
    }
}

/// A signing identity. The secret half never leaves this module: it is not
/// serializable and `Debug` redacts it.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    provider: Provider,
    public: PublicKey,
    secret: [u8; 32],
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("provider", &self.provider)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn provider(&self) -> Provider {
        self.provider
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        match self.provider {
            Provider::Digest => {
                let seed = u64::from_be_bytes(self.secret[..8].try_into().expect("8 bytes"));
                Signature(digest_sign(seed, &self.public, msg))
            }
            Provider::Ed25519 => {
                let signing = SigningKey::from_bytes(&self.secret);
                Signature(signing.sign(msg).to_bytes())
            }
        }
    }

    pub fn prove_knowledge(&self) -> KnowledgeProof {
        KnowledgeProof(self.sign(&knowledge_message(&self.public)))
    }
}

fn knowledge_message(pk: &PublicKey) -> Vec<u8> {
    let mut m = Vec::with_capacity(KNOWLEDGE_TAG.len() + PUBLIC_KEY_LEN);
    m.extend_from_slice(KNOWLEDGE_TAG);
    m.extend_from_slice(&pk.0);
    m
}

fn seed_mask() -> [u8; 8] {
    let mut h = Sha256::new();
    h.update(MASTER);
    h.update(b"mask");
    let d = h.finalize();
    d[..8].try_into().expect("8 bytes")
}

fn seed_binding(seed: u64) -> [u8; 24] {
    let mut h = Sha256::new();
    h.update(MASTER);
    h.update(b"pk");
    h.update(seed.to_be_bytes());
    let d = h.finalize();
    d[..24].try_into().expect("24 bytes")
}

// Layout: binding digest (24 bytes) || seed xor mask (8 bytes).
fn digest_public_key(seed: u64) -> PublicKey {
    let mut pk = [0u8; PUBLIC_KEY_LEN];
    pk[..24].copy_from_slice(&seed_binding(seed));
    let mask = seed_mask();
    for (i, b) in seed.to_be_bytes().iter().enumerate() {
        pk[24 + i] = b ^ mask[i];
    }
    PublicKey(pk)
}

fn digest_seed(pk: &PublicKey) -> Option<u64> {
    let mask = seed_mask();
    let mut raw = [0u8; 8];
    for i in 0..8 {
        raw[i] = pk.0[24 + i] ^ mask[i];
    }
    let seed = u64::from_be_bytes(raw);
    (seed_binding(seed) == pk.0[..24]).then_some(seed)
}

fn digest_sign(seed: u64, pk: &PublicKey, msg: &[u8]) -> [u8; SIGNATURE_LEN] {
    let mut h = Sha512::new();
    h.update(MASTER);
    h.update(seed.to_be_bytes());
    h.update(pk.0);
    h.update((msg.len() as u64).to_be_bytes());
    h.update(msg);
    h.finalize().into()
}
