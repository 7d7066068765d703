//! Hash chains that can be grown online to any length while keeping only
//! `⌈log₂ n⌉` stored elements, then disclosed backward with amortized
//! `O(log n)` hashing per element. A custody layer binds timed evidence into
//! several provider-parallel chains and verifies deferred disclosures.

pub mod chain_oracle;
pub mod custody;
pub mod error;
pub mod growth;
pub mod hash_provider;
pub mod pebble;
pub mod snapshot;
pub mod trace;
pub mod traversal;

pub use chain_oracle::FullChain;
pub use custody::{
    verify_disclosures, CustodyLedger, CustodySession, DisclosureSet, LedgerEntry, LedgerRecord, ProviderTranscript,
    SessionMeta,
    TranscriptRow, Verdict, VerificationTranscript,
};
pub use error::{Error, Result};
pub use growth::{index_map, ExposureHandoff, GrowthEvent, GrowthState};
pub use hash_provider::{
    combine, CombineMode, CompressedEvidence, Digest, HashFunction, HashProviderId, Provider, Registry,
    MIX64_TEST,
};
pub use pebble::Pebble;
pub use snapshot::ChainState;
pub use trace::TraceMode;
pub use traversal::{
    law_back_moves, law_destination, law_position_bound, law_reindex, Emission, Relocation, TraversalState,
};
