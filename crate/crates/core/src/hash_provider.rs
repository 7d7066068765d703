//! Pluggable one-way hash evaluation, evidence compression and the combine
//! operator used to bind evidence chunks into chain steps.
//!
//! Every chain step is `next = h(value)` or, when evidence is bound,
//! `next = h(combine(value, c(E)))` where `c(E)` is the fixed-width
//! compression of the evidence chunk `E`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Name reserved for the deterministic 64-bit mixing hash used by tests.
pub const MIX64_TEST: &str = "mix64-test";

/// Smallest digest width a provider may declare.
pub const MIN_WIDTH: usize = 8;

/// The value of one hash-chain element.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(Vec<u8>);

impl Digest {
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        Digest(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        hex::decode(s)
            .map(Digest)
            .map_err(|e| Error::Parse(format!("bad hex digest {s:?}: {e}")))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Digest::from_hex(s)
    }
}

/// Fixed-width compression `c(E)` of an evidence chunk.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CompressedEvidence(Digest);

impl CompressedEvidence {
    pub fn from_digest(d: Digest) -> Self {
        CompressedEvidence(d)
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn digest(&self) -> &Digest {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Name and width of a registered hash function.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct HashProviderId {
    pub name: String,
    pub width: usize,
}

impl fmt::Display for HashProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// How a chain value and compressed evidence are joined before hashing.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub enum CombineMode {
    /// Bytewise xor; both operands must have the same width.
    Xor,
    /// Value bytes followed by evidence bytes.
    #[default]
    Concat,
}

impl fmt::Display for CombineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombineMode::Xor => "xor",
            CombineMode::Concat => "concat",
        })
    }
}

impl FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor" => Ok(CombineMode::Xor),
            "concat" => Ok(CombineMode::Concat),
            other => Err(Error::Parse(format!("unknown combine mode {other:?}"))),
        }
    }
}

/// Join a chain value with compressed evidence.
pub fn combine(v: &Digest, c: &CompressedEvidence, mode: CombineMode) -> Result<Vec<u8>> {
    match mode {
        CombineMode::Xor => {
            if v.len() != c.len() {
                return Err(Error::WidthMismatch {
                    expected: v.len(),
                    found: c.len(),
                });
            }
            Ok(v.as_bytes()
                .iter()
                .zip(c.as_bytes())
                .map(|(a, b)| a ^ b)
                .collect())
        }
        CombineMode::Concat => {
            let mut out = Vec::with_capacity(v.len() + c.len());
            out.extend_from_slice(v.as_bytes());
            out.extend_from_slice(c.as_bytes());
            Ok(out)
        }
    }
}

/// A one-way function that can back a chain. Implementations must be pure.
pub trait HashFunction: Send + Sync {
    fn name(&self) -> &str;
    fn width(&self) -> usize;
    fn hash(&self, input: &[u8]) -> Vec<u8>;
}

/// The 64-bit finalizer mix: invertible, so it never collides on 8-byte
/// inputs, and every output can be reproduced by hand.
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    x = x.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    x ^= x >> 33;
    x
}

/// Test hash: input is folded in 8-byte little-endian blocks (the last one
/// zero-padded) with `x = mix64(x ^ block)` starting from zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct Mix64Test;

impl HashFunction for Mix64Test {
    fn name(&self) -> &str {
        MIX64_TEST
    }

    fn width(&self) -> usize {
        8
    }

    fn hash(&self, input: &[u8]) -> Vec<u8> {
        if input.is_empty() {
            return mix64(0).to_le_bytes().to_vec();
        }
        let x = input.chunks(8).fold(0u64, |acc, chunk| {
            let mut block = [0u8; 8];
            block[..chunk.len()].copy_from_slice(chunk);
            mix64(acc ^ u64::from_le_bytes(block))
        });
        x.to_le_bytes().to_vec()
    }
}

struct RustCrypto<D> {
    name: &'static str,
    _digest: std::marker::PhantomData<fn() -> D>,
}

impl<D> RustCrypto<D> {
    fn new(name: &'static str) -> Self {
        RustCrypto {
            name,
            _digest: std::marker::PhantomData,
        }
    }
}

impl<D: sha2::Digest> HashFunction for RustCrypto<D> {
    fn name(&self) -> &str {
        self.name
    }

    fn width(&self) -> usize {
        <D as sha2::Digest>::output_size()
    }

    fn hash(&self, input: &[u8]) -> Vec<u8> {
        D::digest(input).to_vec()
    }
}

/// A registered hash function. Cheap to clone; immutable once built.
#[derive(Clone)]
pub struct Provider {
    id: HashProviderId,
    f: Arc<dyn HashFunction>,
}

impl fmt::Debug for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Provider").field(&self.id.name).finish()
    }
}

impl Provider {
    pub fn new(f: Arc<dyn HashFunction>) -> Result<Self> {
        let id = HashProviderId {
            name: f.name().to_string(),
            width: f.width(),
        };
        if id.width < MIN_WIDTH {
            return Err(Error::Registry(format!(
                "provider {} declares width {} < {MIN_WIDTH}",
                id.name, id.width
            )));
        }
        if id.name.is_empty() || id.name.contains(|c: char| c.is_whitespace() || c == ':' || c == ',') {
            return Err(Error::Registry(format!("invalid provider name {:?}", id.name)));
        }
        Ok(Provider { id, f })
    }

    pub fn mix64_test() -> Self {
        Provider::new(Arc::new(Mix64Test)).expect("mix64-test is well formed")
    }

    pub fn id(&self) -> &HashProviderId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.id.name
    }

    pub fn width(&self) -> usize {
        self.id.width
    }

    pub fn evaluate(&self, input: &[u8]) -> Digest {
        let out = self.f.hash(input);
        assert_eq!(out.len(), self.id.width, "provider {} broke its width", self.id.name);
        Digest(out)
    }

    /// `c(E)`: the provider evaluated over an 8-byte little-endian length
    /// prefix followed by the evidence bytes.
    pub fn compress(&self, evidence: &[u8]) -> CompressedEvidence {
        let mut buf = Vec::with_capacity(8 + evidence.len());
        buf.extend_from_slice(&(evidence.len() as u64).to_le_bytes());
        buf.extend_from_slice(evidence);
        CompressedEvidence(self.evaluate(&buf))
    }

    /// One chain step: `h(value)` or `h(combine(value, c))`.
    pub fn chain_step(
        &self,
        value: &Digest,
        evidence: Option<&CompressedEvidence>,
        mode: CombineMode,
    ) -> Result<Digest> {
        match evidence {
            None => Ok(self.evaluate(value.as_bytes())),
            Some(c) => Ok(self.evaluate(&combine(value, c, mode)?)),
        }
    }

    /// Check that `d` has this provider's width.
    pub fn check_width(&self, d: &Digest) -> Result<()> {
        if d.len() != self.width() {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                found: d.len(),
            });
        }
        Ok(())
    }
}

/// Named set of providers. Names are unique.
#[derive(Clone, Default, Debug)]
pub struct Registry {
    providers: BTreeMap<String, Provider>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// `mix64-test` plus the three shipped cryptographic providers
    /// (`sha1`, `sha256`, `sha3-256`).
    pub fn standard() -> Self {
        let mut r = Registry::new();
        r.register(Arc::new(Mix64Test)).unwrap();
        r.register(Arc::new(RustCrypto::<sha1::Sha1>::new("sha1"))).unwrap();
        r.register(Arc::new(RustCrypto::<sha2::Sha256>::new("sha256"))).unwrap();
        r.register(Arc::new(RustCrypto::<sha3::Sha3_256>::new("sha3-256"))).unwrap();
        r
    }

    pub fn register(&mut self, f: Arc<dyn HashFunction>) -> Result<HashProviderId> {
        let p = Provider::new(f)?;
        if self.providers.contains_key(p.name()) {
            return Err(Error::Registry(format!("provider {} already registered", p.name())));
        }
        let id = p.id().clone();
        self.providers.insert(id.name.clone(), p);
        Ok(id)
    }

    pub fn get(&self, name: &str) -> Result<Provider> {
        self.providers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownProvider(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &HashProviderId> {
        self.providers.values().map(|p| p.id())
    }

    pub fn evaluate(&self, provider: &str, input: &[u8]) -> Result<Digest> {
        Ok(self.get(provider)?.evaluate(input))
    }

    pub fn compress(&self, provider: &str, evidence: &[u8]) -> Result<CompressedEvidence> {
        Ok(self.get(provider)?.compress(evidence))
    }
}
