//! Chain of custody over several provider-parallel evidence-bound chains.
//!
//! Record `r` of a session (1-based, close record included) is the `r`-th
//! growth step of every chain. Once a session of `T` elements is closed,
//! record `r` committed the digest now at exposure position `T - r` and bound
//! the step leaving position `T - r + 1`. The evidence hashed into a step is
//! `tick_le8 ‖ evidence_bytes`, so ticks are covered by the chain as well.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::growth::GrowthState;
use crate::hash_provider::{CombineMode, Digest, HashProviderId, Provider, Registry};
use crate::snapshot::ChainState;

/// Providers a session should run in parallel.
pub const QUORUM: usize = 3;

const LEDGER_MAGIC: &str = "pebblechain-ledger";
const DISCLOSURE_MAGIC: &str = "pebblechain-disclosures";
const SESSION_MAGIC: &str = "pebblechain-session";
const VERSION: &str = "v1";

fn check_session_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(|c: char| c.is_whitespace() || c.is_control()) {
        return Err(Error::Contract(format!("invalid session id {id:?}")));
    }
    Ok(())
}

/// Bytes hashed into the chain for one ledger record.
pub fn bound_evidence(tick: u64, evidence: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + evidence.len());
    out.extend_from_slice(&tick.to_le_bytes());
    out.extend_from_slice(evidence);
    out
}

/// Evidence carried by the close record.
pub fn close_evidence(session_id: &str, tick: u64) -> Vec<u8> {
    let mut out = b"CLOSE".to_vec();
    out.extend_from_slice(session_id.as_bytes());
    out.extend_from_slice(&tick.to_le_bytes());
    out
}

/// Placeholder peer attestation bound into the next record.
fn attestation_bytes(session_id: &str, tick: u64) -> Vec<u8> {
    let mut out = b"ATTEST".to_vec();
    out.extend_from_slice(session_id.as_bytes());
    out.extend_from_slice(&tick.to_le_bytes());
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerRecord {
    pub tick: u64,
    pub evidence: Vec<u8>,
    /// Digest each chain produced on this step, in session provider order.
    pub digests: Vec<(String, Digest)>,
}

impl LedgerRecord {
    pub fn digest_for(&self, provider: &str) -> Option<&Digest> {
        self.digests.iter().find(|(p, _)| p == provider).map(|(_, d)| d)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LedgerEntry {
    Record(LedgerRecord),
    Attestation { tick: u64, bytes: Vec<u8> },
}

/// Append-only evidence ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CustodyLedger {
    session_id: String,
    entries: Vec<LedgerEntry>,
}

impl CustodyLedger {
    pub fn new(session_id: &str) -> Result<Self> {
        check_session_id(session_id)?;
        Ok(CustodyLedger {
            session_id: session_id.to_string(),
            entries: Vec::new(),
        })
    }

    /// Assemble a ledger from entries obtained elsewhere, e.g. a copy under
    /// audit. No content checks are made.
    pub fn from_entries(session_id: &str, entries: Vec<LedgerEntry>) -> Result<Self> {
        check_session_id(session_id)?;
        Ok(CustodyLedger {
            session_id: session_id.to_string(),
            entries,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn records(&self) -> impl Iterator<Item = &LedgerRecord> {
        self.entries.iter().filter_map(|e| match e {
            LedgerEntry::Record(r) => Some(r),
            LedgerEntry::Attestation { .. } => None,
        })
    }

    pub fn record_count(&self) -> usize {
        self.records().count()
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.records().last().map(|r| r.tick)
    }

    /// The final record, if it is a well-formed close marker.
    pub fn close_marker(&self) -> Option<&LedgerRecord> {
        self.records()
            .last()
            .filter(|r| r.evidence.ends_with(&close_evidence(&self.session_id, r.tick)))
    }

    /// Attestation bytes recorded since the last record.
    fn pending_attestation(&self) -> Vec<u8> {
        let since = self
            .entries
            .iter()
            .rposition(|e| matches!(e, LedgerEntry::Record(_)))
            .map_or(0, |i| i + 1);
        self.entries[since..]
            .iter()
            .flat_map(|e| match e {
                LedgerEntry::Attestation { bytes, .. } => bytes.as_slice(),
                LedgerEntry::Record(_) => &[],
            })
            .copied()
            .collect()
    }

    fn append(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{LEDGER_MAGIC} {VERSION} {}\n", self.session_id);
        for e in &self.entries {
            match e {
                LedgerEntry::Record(r) => {
                    let digests: Vec<String> = r.digests.iter().map(|(p, d)| format!("{p}:{d}")).collect();
                    let _ = writeln!(out, "{}\t{}\t{}", r.tick, hex::encode(&r.evidence), digests.join(","));
                }
                LedgerEntry::Attestation { tick, bytes } => {
                    let _ = writeln!(out, "attest\t{tick}\t{}", hex::encode(bytes));
                }
            }
        }
        out
    }

    /// Parse the line format. Only structure is checked; content is left to
    /// verification so tampering surfaces as a verdict.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty ledger".into()))?;
        let session_id = match header.split(' ').collect::<Vec<_>>().as_slice() {
            [LEDGER_MAGIC, VERSION, id] => *id,
            [LEDGER_MAGIC, v, _] => return Err(Error::Parse(format!("unsupported ledger version {v}"))),
            _ => return Err(Error::Parse(format!("not a ledger: {header:?}"))),
        };
        let mut ledger = CustodyLedger::new(session_id)?;
        for (no, line) in lines.enumerate() {
            let bad = |what: &str| Error::Parse(format!("ledger line {}: {what}", no + 2));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected three tab-separated fields"));
            }
            if fields[0] == "attest" {
                let tick = fields[1].parse().map_err(|_| bad("bad attestation tick"))?;
                let bytes = hex::decode(fields[2]).map_err(|_| bad("bad attestation hex"))?;
                ledger.append(LedgerEntry::Attestation { tick, bytes });
                continue;
            }
            let tick = fields[0].parse().map_err(|_| bad("bad tick"))?;
            let evidence = hex::decode(fields[1]).map_err(|_| bad("bad evidence hex"))?;
            let mut digests = Vec::new();
            for pair in fields[2].split(',').filter(|s| !s.is_empty()) {
                let (p, d) = pair.split_once(':').ok_or_else(|| bad("digest needs provider:hex"))?;
                digests.push((p.to_string(), Digest::from_hex(d).map_err(|_| bad("bad digest hex"))?));
            }
            ledger.append(LedgerEntry::Record(LedgerRecord { tick, evidence, digests }));
        }
        Ok(ledger)
    }
}

/// Deferred disclosures, per provider, from exposure position 1 downward.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DisclosureSet {
    session_id: String,
    /// provider -> (chain total, digests at positions 1..=m)
    chains: BTreeMap<String, (u64, Vec<Digest>)>,
}

impl DisclosureSet {
    pub fn new(session_id: &str) -> Result<Self> {
        check_session_id(session_id)?;
        Ok(DisclosureSet {
            session_id: session_id.to_string(),
            chains: BTreeMap::new(),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    /// Append the disclosure at `position`, which must be one deeper than
    /// the previous disclosure for this provider.
    pub fn push(&mut self, provider: &str, total: u64, position: u64, digest: Digest) -> Result<()> {
        let (t, ds) = self.chains.entry(provider.to_string()).or_insert((total, Vec::new()));
        if *t != total {
            return Err(Error::Contract(format!("provider {provider} declared totals {t} and {total}")));
        }
        if position != ds.len() as u64 + 1 || position > total {
            return Err(Error::Contract(format!(
                "disclosure for {provider} at position {position} is not the next of {total}"
            )));
        }
        ds.push(digest);
        Ok(())
    }

    pub fn providers(&self) -> impl Iterator<Item = &str> {
        self.chains.keys().map(String::as_str)
    }

    /// Declared chain total and disclosed digests (index 0 is position 1).
    pub fn chain(&self, provider: &str) -> Option<(u64, &[Digest])> {
        self.chains.get(provider).map(|(t, d)| (*t, d.as_slice()))
    }

    pub fn chain_mut(&mut self, provider: &str) -> Option<&mut Vec<Digest>> {
        self.chains.get_mut(provider).map(|(_, d)| d)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{DISCLOSURE_MAGIC} {VERSION} {}\n", self.session_id);
        for (p, (total, ds)) in &self.chains {
            let _ = writeln!(out, "chain\t{p}\t{total}");
            for (i, d) in ds.iter().enumerate() {
                let _ = writeln!(out, "d\t{p}\t{}\t{d}", i + 1);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty disclosure file".into()))?;
        let session_id = match header.split(' ').collect::<Vec<_>>().as_slice() {
            [DISCLOSURE_MAGIC, VERSION, id] => *id,
            _ => return Err(Error::Parse(format!("not a disclosure file: {header:?}"))),
        };
        let mut set = DisclosureSet::new(session_id)?;
        let mut totals = BTreeMap::new();
        for (no, line) in lines.enumerate() {
            let bad = |what: &str| Error::Parse(format!("disclosure line {}: {what}", no + 2));
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                ["chain", p, total] => {
                    let total: u64 = total.parse().map_err(|_| bad("bad total"))?;
                    totals.insert(p.to_string(), total);
                    set.chains.entry(p.to_string()).or_insert((total, Vec::new()));
                }
                ["d", p, pos, hex] => {
                    let total = *totals.get(*p).ok_or_else(|| bad("disclosure before its chain line"))?;
                    let pos = pos.parse().map_err(|_| bad("bad position"))?;
                    let d = Digest::from_hex(hex).map_err(|_| bad("bad digest hex"))?;
                    set.push(p, total, pos, d)?;
                }
                _ => return Err(bad("unrecognized line")),
            }
        }
        Ok(set)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    /// A recomputed or committed digest disagrees with a disclosure.
    Tamper,
    /// Evidence needed for a check is missing from the ledger.
    Incomplete,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Tamper => "tamper",
            Verdict::Incomplete => "incomplete",
        })
    }
}

/// One disclosed element and the checks made on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptRow {
    pub position: u64,
    pub disclosed: Digest,
    /// For position 1 the ledger commitment; deeper rows carry the forward
    /// image that must equal the previous disclosure.
    pub recomputed: Option<Digest>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProviderTranscript {
    pub provider: String,
    pub total: u64,
    pub rows: Vec<TranscriptRow>,
    pub verdict: Verdict,
}

impl ProviderTranscript {
    /// Shallowest position whose row did not pass.
    pub fn first_failure(&self) -> Option<u64> {
        self.rows.iter().find(|r| r.verdict != Verdict::Pass).map(|r| r.position)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationTranscript {
    pub session_id: String,
    pub providers: Vec<ProviderTranscript>,
    pub verdict: Verdict,
    /// Depth reached by every provider.
    pub disclosure_depth: u64,
    /// Providers reached different verdicts.
    pub providers_disagree: bool,
}

impl VerificationTranscript {
    pub fn render_table(&self) -> String {
        let mut out = format!("session {}  depth {}\n", self.session_id, self.disclosure_depth);
        let _ = writeln!(out, "{:<12} {:>8}  {:<66} {:<66} verdict", "provider", "position", "disclosed", "recomputed");
        for p in &self.providers {
            for r in &p.rows {
                let recomputed = r.recomputed.as_ref().map_or("-".to_string(), Digest::to_hex);
                let _ = writeln!(
                    out,
                    "{:<12} {:>8}  {:<66} {:<66} {}",
                    p.provider, r.position, r.disclosed, recomputed, r.verdict
                );
            }
            match p.first_failure() {
                Some(pos) => {
                    let _ = writeln!(out, "{:<12} {} (first failure at position {pos})", p.provider, p.verdict);
                }
                None => {
                    let _ = writeln!(out, "{:<12} {}", p.provider, p.verdict);
                }
            }
        }
        if self.providers_disagree {
            out.push_str("warning: providers disagree\n");
        }
        let _ = writeln!(out, "overall {}", self.verdict);
        out
    }

    /// Tab-separated lines: `row`, `provider` and a closing `overall`.
    pub fn render_lines(&self) -> String {
        let mut out = String::new();
        for p in &self.providers {
            for r in &p.rows {
                let recomputed = r.recomputed.as_ref().map_or("-".to_string(), Digest::to_hex);
                let _ = writeln!(out, "row\t{}\t{}\t{}\t{recomputed}\t{}", p.provider, r.position, r.disclosed, r.verdict);
            }
            let first = p.first_failure().map_or("-".to_string(), |q| q.to_string());
            let _ = writeln!(out, "provider\t{}\t{}\t{}\t{first}", p.provider, p.total, p.verdict);
        }
        let _ = writeln!(
            out,
            "overall\t{}\t{}\t{}\t{}",
            self.session_id,
            self.verdict,
            self.disclosure_depth,
            if self.providers_disagree { "disagree" } else { "agree" }
        );
        out
    }
}

/// Check every provider's disclosures against the ledger.
///
/// A ledger whose record count does not match a declared total is aligned
/// from its close end; any row that then fails is reported incomplete,
/// because missing records cannot be told apart from altered ones.
pub fn verify_disclosures(
    providers: &[Provider],
    mode: CombineMode,
    ledger: &CustodyLedger,
    disclosures: &DisclosureSet,
) -> Result<VerificationTranscript> {
    if ledger.session_id() != disclosures.session_id() {
        return Err(Error::Contract(format!(
            "ledger is for session {} but disclosures are for {}",
            ledger.session_id(),
            disclosures.session_id()
        )));
    }
    if let Some(p) = disclosures.providers().find(|p| !providers.iter().any(|q| q.name() == *p)) {
        return Err(Error::UnknownProvider(p.to_string()));
    }
    let records: Vec<&LedgerRecord> = ledger.records().collect();
    let mut out = Vec::with_capacity(providers.len());
    for provider in providers {
        out.push(match disclosures.chain(provider.name()) {
            None => ProviderTranscript {
                provider: provider.name().to_string(),
                total: 0,
                rows: Vec::new(),
                verdict: Verdict::Incomplete,
            },
            Some((total, ds)) => verify_chain(provider, mode, &records, total, ds),
        });
    }
    let verdict = if out.iter().any(|p| p.verdict == Verdict::Incomplete) {
        Verdict::Incomplete
    } else if out.iter().any(|p| p.verdict == Verdict::Tamper) {
        Verdict::Tamper
    } else {
        Verdict::Pass
    };
    let providers_disagree = out.windows(2).any(|w| w[0].verdict != w[1].verdict);
    Ok(VerificationTranscript {
        session_id: ledger.session_id().to_string(),
        disclosure_depth: out.iter().map(|p| p.rows.len() as u64).min().unwrap_or(0),
        providers: out,
        verdict,
        providers_disagree,
    })
}

fn verify_chain(provider: &Provider, mode: CombineMode, records: &[&LedgerRecord], total: u64, ds: &[Digest]) -> ProviderTranscript {
    let expected = total.saturating_sub(1);
    let aligned = records.len() as u64 == expected;
    // Records are right-aligned: the last one in the file is record T-1.
    let record = |r: u64| -> Option<&LedgerRecord> {
        let from_end = expected.checked_sub(r)?;
        let idx = (records.len() as u64).checked_sub(from_end + 1)?;
        records.get(idx as usize).copied()
    };

    let mut rows = Vec::with_capacity(ds.len());
    for (i, d) in ds.iter().enumerate() {
        let q = i as u64 + 1;
        let mut tampered = provider.check_width(d).is_err();
        let mut missing = false;
        let mut recomputed = None;

        if q < total {
            match record(total - q).and_then(|r| r.digest_for(provider.name())) {
                Some(committed) => {
                    tampered |= committed != d;
                    if q == 1 {
                        recomputed = Some(committed.clone());
                    }
                }
                None => missing = true,
            }
        }
        if q >= 2 {
            match record(total - q + 1) {
                Some(r) => {
                    let c = provider.compress(&bound_evidence(r.tick, &r.evidence));
                    match provider.chain_step(d, Some(&c), mode) {
                        Ok(image) => {
                            tampered |= image != ds[i - 1];
                            recomputed = Some(image);
                        }
                        Err(_) => tampered = true,
                    }
                }
                None => missing = true,
            }
        }

        let verdict = if tampered && aligned {
            Verdict::Tamper
        } else if tampered || missing {
            Verdict::Incomplete
        } else {
            Verdict::Pass
        };
        rows.push(TranscriptRow {
            position: q,
            disclosed: d.clone(),
            recomputed,
            verdict,
        });
    }

    let verdict = if !aligned {
        Verdict::Incomplete
    } else if rows.iter().any(|r| r.verdict == Verdict::Tamper) {
        Verdict::Tamper
    } else if rows.iter().any(|r| r.verdict == Verdict::Incomplete) {
        Verdict::Incomplete
    } else {
        Verdict::Pass
    };
    ProviderTranscript {
        provider: provider.name().to_string(),
        total,
        rows,
        verdict,
    }
}

/// A custody session: one evidence-bound chain per provider plus the ledger.
#[derive(Clone, Debug)]
pub struct CustodySession {
    session_id: String,
    providers: Vec<Provider>,
    chains: Vec<ChainState>,
    mode: CombineMode,
    tick_interval: u64,
    ledger: CustodyLedger,
    below_quorum: bool,
}

impl CustodySession {
    /// Open a session. Fewer than [`QUORUM`] providers is refused unless
    /// `allow_below_quorum` is set, in which case the session is flagged.
    pub fn open(
        session_id: &str,
        providers: Vec<Provider>,
        seed_material: &[u8],
        tick_interval: u64,
        mode: CombineMode,
        allow_below_quorum: bool,
    ) -> Result<Self> {
        let ledger = CustodyLedger::new(session_id)?;
        if providers.is_empty() {
            return Err(Error::Policy("a session needs at least one provider".into()));
        }
        for (i, p) in providers.iter().enumerate() {
            if providers[..i].iter().any(|q| q.name() == p.name()) {
                return Err(Error::Policy(format!("provider {} listed twice", p.name())));
            }
        }
        let below_quorum = providers.len() < QUORUM;
        if below_quorum && !allow_below_quorum {
            return Err(Error::Policy(format!(
                "{} providers given; custody needs at least {QUORUM}",
                providers.len()
            )));
        }
        let chains = providers
            .iter()
            .map(|p| {
                let mut material = seed_material.to_vec();
                material.extend_from_slice(p.name().as_bytes());
                material.extend_from_slice(session_id.as_bytes());
                let seed = p.compress(&material).digest().clone();
                Ok(ChainState::Growing(GrowthState::new(seed, p.clone(), mode)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CustodySession {
            session_id: session_id.to_string(),
            providers,
            chains,
            mode,
            tick_interval,
            ledger,
            below_quorum,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn providers(&self) -> &[Provider] {
        &self.providers
    }

    pub fn provider_ids(&self) -> Vec<HashProviderId> {
        self.providers.iter().map(|p| p.id().clone()).collect()
    }

    pub fn chains(&self) -> &[ChainState] {
        &self.chains
    }

    pub fn mode(&self) -> CombineMode {
        self.mode
    }

    pub fn tick_interval(&self) -> u64 {
        self.tick_interval
    }

    pub fn ledger(&self) -> &CustodyLedger {
        &self.ledger
    }

    /// Opened with fewer than [`QUORUM`] providers.
    pub fn below_quorum(&self) -> bool {
        self.below_quorum
    }

    pub fn is_finalized(&self) -> bool {
        matches!(self.chains[0], ChainState::Exposing(_))
    }

    /// Elements per chain; equal across providers.
    pub fn total_hash_elements(&self) -> u64 {
        self.chains[0].total_hash_elements()
    }

    pub fn next_tick(&self) -> u64 {
        self.ledger.last_tick().map_or(0, |t| t + 1)
    }

    fn append_record(&mut self, tick: u64, evidence: Vec<u8>) -> Result<Vec<Digest>> {
        if self.is_finalized() {
            return Err(Error::Phase(format!("session {} is closed", self.session_id)));
        }
        if let Some(last) = self.ledger.last_tick() {
            if tick <= last {
                return Err(Error::NonMonotoneTick { last, tick });
            }
        }
        let bound = bound_evidence(tick, &evidence);
        let mut digests = Vec::with_capacity(self.chains.len());
        for chain in &mut self.chains {
            digests.push(chain.growing_mut()?.grow_step(Some(&bound))?);
        }
        let named = self
            .providers
            .iter()
            .zip(&digests)
            .map(|(p, d)| (p.name().to_string(), d.clone()))
            .collect();
        self.ledger.append(LedgerEntry::Record(LedgerRecord {
            tick,
            evidence,
            digests: named,
        }));
        Ok(digests)
    }

    /// Append one evidence chunk at `tick`; every chain grows by one element.
    /// Pending attestations are prefixed to the chunk.
    pub fn record_evidence(&mut self, tick: u64, evidence: &[u8]) -> Result<Vec<Digest>> {
        let mut bytes = self.ledger.pending_attestation();
        bytes.extend_from_slice(evidence);
        self.append_record(tick, bytes)
    }

    /// Append the close record and finalize every chain.
    pub fn close(&mut self) -> Result<()> {
        if self.is_finalized() {
            return Err(Error::Phase(format!("session {} is already closed", self.session_id)));
        }
        let tick = self.next_tick();
        let mut bytes = self.ledger.pending_attestation();
        bytes.extend_from_slice(&close_evidence(&self.session_id, tick));
        self.append_record(tick, bytes)?;
        for chain in &mut self.chains {
            chain.finalize()?;
        }
        Ok(())
    }

    /// Record a placeholder peer attestation. Its bytes are bound into the
    /// next record while the session is still growing.
    pub fn attest_peers(&mut self) -> LedgerEntry {
        let tick = self.ledger.last_tick().unwrap_or(0);
        let entry = LedgerEntry::Attestation {
            tick,
            bytes: attestation_bytes(&self.session_id, tick),
        };
        self.ledger.append(entry.clone());
        entry
    }

    fn index_of(&self, provider: &str) -> Result<usize> {
        self.providers
            .iter()
            .position(|p| p.name() == provider)
            .ok_or_else(|| Error::UnknownProvider(provider.to_string()))
    }

    /// Disclose the next element of one provider's chain.
    pub fn disclose_next(&mut self, provider: &str) -> Result<(u64, Digest)> {
        let i = self.index_of(provider)?;
        let e = self.chains[i].exposing_mut()?.step()?;
        Ok((e.position, e.value))
    }

    /// Positions already disclosed on one provider's chain.
    pub fn disclosed(&self, provider: &str) -> Result<u64> {
        let i = self.index_of(provider)?;
        match &self.chains[i] {
            ChainState::Exposing(h) => Ok(h.traversal.current_position()),
            ChainState::Growing(_) => Ok(0),
        }
    }

    /// Disclose up to `count` further elements of every chain into `set`.
    pub fn disclose_into(&mut self, set: &mut DisclosureSet, count: u64) -> Result<()> {
        let total = self.total_hash_elements();
        for i in 0..self.providers.len() {
            let name = self.providers[i].name().to_string();
            for _ in 0..count {
                match self.disclose_next(&name) {
                    Ok((q, d)) => set.push(&name, total, q, d)?,
                    Err(Error::Exhausted) => break,
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    pub fn verify(&self, ledger: &CustodyLedger, disclosures: &DisclosureSet) -> Result<VerificationTranscript> {
        verify_disclosures(&self.providers, self.mode, ledger, disclosures)
    }

    /// Write `session`, `ledger` and one `<provider>.state` file into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = SessionMeta {
            session_id: self.session_id.clone(),
            tick_interval: self.tick_interval,
            mode: self.mode,
            below_quorum: self.below_quorum,
            providers: self.providers.iter().map(|p| p.name().to_string()).collect(),
        };
        write_atomic(&dir.join("session"), &meta.to_text())?;
        write_atomic(&dir.join("ledger"), &self.ledger.to_text())?;
        for (p, c) in self.providers.iter().zip(&self.chains) {
            write_atomic(&dir.join(format!("{}.state", p.name())), &c.to_text())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, registry: &Registry) -> Result<Self> {
        let meta = SessionMeta::read(dir)?;
        let providers = meta.resolve(registry)?;
        let id = &meta.session_id;
        let ledger = CustodyLedger::from_text(&fs::read_to_string(dir.join("ledger"))?)?;
        if ledger.session_id() != id {
            return Err(Error::Parse("ledger belongs to another session".into()));
        }
        let chains = providers
            .iter()
            .map(|p| ChainState::from_text(&fs::read_to_string(dir.join(format!("{}.state", p.name())))?, registry))
            .collect::<Result<Vec<_>>>()?;
        let totals: Vec<u64> = chains.iter().map(ChainState::total_hash_elements).collect();
        if totals.windows(2).any(|w| w[0] != w[1]) || totals[0] != ledger.record_count() as u64 + 1 {
            return Err(Error::Parse("chain states disagree with the ledger".into()));
        }
        Ok(CustodySession {
            session_id: meta.session_id,
            providers,
            chains,
            mode: meta.mode,
            tick_interval: meta.tick_interval,
            ledger,
            below_quorum: meta.below_quorum,
        })
    }
}

/// The `session` file of a saved session: everything a verifier needs
/// besides the ledger and the disclosures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionMeta {
    pub session_id: String,
    pub tick_interval: u64,
    pub mode: CombineMode,
    pub below_quorum: bool,
    pub providers: Vec<String>,
}

impl SessionMeta {
    pub fn to_text(&self) -> String {
        format!(
            "{SESSION_MAGIC} {VERSION} {} {} {} {} {}\n",
            self.session_id,
            self.tick_interval,
            self.mode,
            u8::from(self.below_quorum),
            self.providers.join(",")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let f: Vec<&str> = text.trim_end().split(' ').collect();
        let [SESSION_MAGIC, VERSION, id, interval, mode, flag, names] = f.as_slice() else {
            return Err(Error::Parse(format!("bad session file: {text:?}")));
        };
        check_session_id(id)?;
        Ok(SessionMeta {
            session_id: id.to_string(),
            tick_interval: interval.parse().map_err(|_| Error::Parse("bad tick interval".into()))?,
            mode: mode.parse()?,
            below_quorum: match *flag {
                "0" => false,
                "1" => true,
                _ => return Err(Error::Parse("bad quorum flag".into())),
            },
            providers: names.split(',').map(str::to_string).collect(),
        })
    }

    pub fn read(dir: &Path) -> Result<Self> {
        SessionMeta::from_text(&fs::read_to_string(dir.join("session"))?)
    }

    pub fn resolve(&self, registry: &Registry) -> Result<Vec<Provider>> {
        self.providers.iter().map(|n| registry.get(n)).collect()
    }
}

/// Replace `path` with `contents` via a sibling temporary file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_oracle::FullChain;
    use crate::hash_provider::MIX64_TEST;

    fn trio() -> Vec<Provider> {
        let r = Registry::standard();
        ["mix64-test", "sha1", "sha256"].iter().map(|n| r.get(n).unwrap()).collect()
    }

    fn session(chunks: usize) -> CustodySession {
        let mut s = CustodySession::open("case-7", trio(), b"material", 60, CombineMode::Concat, false).unwrap();
        for i in 0..chunks {
            s.record_evidence(10 * i as u64 + 3, format!("chunk {i}").as_bytes()).unwrap();
        }
        s
    }

    fn disclose_all(s: &mut CustodySession) -> DisclosureSet {
        let mut set = DisclosureSet::new(s.session_id()).unwrap();
        let total = s.total_hash_elements();
        s.disclose_into(&mut set, total).unwrap();
        set
    }

    #[test]
    fn open_policy() {
        let s = session(0);
        assert_eq!(s.chains().len(), 3);
        assert!(s.chains().iter().all(|c| c.total_hash_elements() == 1));
        let mut dup = trio();
        dup[2] = dup[0].clone();
        assert!(matches!(
            CustodySession::open("x", dup, b"", 1, CombineMode::Concat, true),
            Err(Error::Policy(_))
        ));
        let two: Vec<_> = trio().into_iter().take(2).collect();
        assert!(CustodySession::open("x", two.clone(), b"", 1, CombineMode::Concat, false).is_err());
        assert!(CustodySession::open("x", two, b"", 1, CombineMode::Concat, true).unwrap().below_quorum());
    }

    #[test]
    fn seeds_are_distinct_per_provider_and_session() {
        let p = vec![Provider::mix64_test(), Provider::mix64_test()];
        assert!(CustodySession::open("x", p, b"", 1, CombineMode::Concat, true).is_err());
        let a = CustodySession::open("a", trio(), b"m", 1, CombineMode::Concat, false).unwrap();
        let b = CustodySession::open("b", trio(), b"m", 1, CombineMode::Concat, false).unwrap();
        let seed = |s: &CustodySession| match &s.chains()[0] {
            ChainState::Growing(g) => g.seed().clone(),
            _ => unreachable!(),
        };
        assert_ne!(seed(&a), seed(&b));
    }

    #[test]
    fn records_and_ticks() {
        let mut s = session(5);
        assert_eq!(s.total_hash_elements(), 6);
        assert!(matches!(
            s.record_evidence(43, b"late"),
            Err(Error::NonMonotoneTick { last: 43, tick: 43 })
        ));
        let d = s.record_evidence(44, b"").unwrap();
        assert_eq!(d.len(), 3);
        assert_ne!(d[0].as_bytes(), &d[1].as_bytes()[..8]);
        s.close().unwrap();
        assert_eq!(s.total_hash_elements(), 8);
        assert!(matches!(s.close(), Err(Error::Phase(_))));
        assert!(matches!(s.record_evidence(99, b"x"), Err(Error::Phase(_))));
        assert_eq!(s.ledger().close_marker().unwrap().tick, 45);
    }

    #[test]
    fn close_on_empty_session_verifies() {
        let mut s = session(0);
        s.close().unwrap();
        assert_eq!(s.total_hash_elements(), 2);
        let set = disclose_all(&mut s);
        let t = s.verify(s.ledger(), &set).unwrap();
        assert_eq!(t.verdict, Verdict::Pass);
        assert_eq!(t.disclosure_depth, 2);
    }

    #[test]
    fn disclosures_match_oracle() {
        let mut s = session(6);
        s.close().unwrap();
        let total = s.total_hash_elements();
        let p = Provider::mix64_test();
        let seed = p.compress(b"materialmix64-testcase-7").digest().clone();
        let mut ev: Vec<_> = s
            .ledger()
            .records()
            .map(|r| p.compress(&bound_evidence(r.tick, &r.evidence)))
            .collect();
        ev.push(p.compress(b"anchor"));
        let oracle = FullChain::build(&p, &seed, total, Some(&ev), CombineMode::Concat).unwrap();
        for q in 1..=total {
            let (pos, d) = s.disclose_next(MIX64_TEST).unwrap();
            assert_eq!(pos, q);
            assert_eq!(&d, oracle.element_at(q).unwrap());
        }
        assert!(matches!(s.disclose_next(MIX64_TEST), Err(Error::Exhausted)));
    }

    #[test]
    fn disclose_while_growing_fails() {
        let mut s = session(2);
        assert!(matches!(s.disclose_next("sha1"), Err(Error::Phase(_))));
        assert!(matches!(s.disclose_next("md5"), Err(Error::UnknownProvider(_))));
    }

    #[test]
    fn untampered_depth_five() {
        let mut s = session(8);
        s.close().unwrap();
        let mut set = DisclosureSet::new(s.session_id()).unwrap();
        s.disclose_into(&mut set, 5).unwrap();
        let t = s.verify(s.ledger(), &set).unwrap();
        assert_eq!(t.verdict, Verdict::Pass);
        assert!(t.providers.iter().all(|p| p.rows.len() == 5));
        assert!(!t.providers_disagree);
        assert_eq!(t, s.verify(s.ledger(), &set).unwrap());
    }

    #[test]
    fn evidence_flip_fails_at_binding_row() {
        let mut s = session(9);
        s.close().unwrap();
        let total = s.total_hash_elements();
        let set = disclose_all(&mut s);
        let mut ledger = s.ledger().clone();
        let LedgerEntry::Record(r) = &mut ledger.entries[3] else { unreachable!() };
        r.evidence[0] ^= 1;
        let t = s.verify(&ledger, &set).unwrap();
        assert_eq!(t.verdict, Verdict::Tamper);
        for p in &t.providers {
            assert_eq!(p.first_failure(), Some(total - 4 + 1));
            assert_eq!(p.rows.iter().filter(|r| r.verdict != Verdict::Pass).count(), 1);
        }
    }

    #[test]
    fn deleted_record_is_incomplete() {
        let mut s = session(5);
        s.close().unwrap();
        let set = disclose_all(&mut s);
        let mut ledger = s.ledger().clone();
        ledger.entries.remove(2);
        assert_eq!(s.verify(&ledger, &set).unwrap().verdict, Verdict::Incomplete);
    }

    #[test]
    fn attestation_binds_into_next_record() {
        let mut s = session(2);
        let LedgerEntry::Attestation { tick, bytes } = s.attest_peers() else { unreachable!() };
        assert_eq!(tick, 13);
        s.record_evidence(20, b"after").unwrap();
        let last = s.ledger().records().last().unwrap();
        assert!(last.evidence.starts_with(&bytes));
        assert!(last.evidence.ends_with(b"after"));
        s.close().unwrap();
        let set = disclose_all(&mut s);
        assert_eq!(s.verify(s.ledger(), &set).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn text_round_trips() {
        let mut s = session(4);
        s.attest_peers();
        s.record_evidence(100, &[0, 255, 9]).unwrap();
        s.close().unwrap();
        let text = s.ledger().to_text();
        assert!(text.starts_with("pebblechain-ledger v1 case-7\n3\t6368756e6b2030\tmix64-test:"));
        assert_eq!(CustodyLedger::from_text(&text).unwrap().to_text(), text);
        let set = disclose_all(&mut s);
        assert_eq!(DisclosureSet::from_text(&set.to_text()).unwrap(), set);
    }

    #[test]
    fn save_and_load() {
        let dir = std::env::temp_dir().join(format!("pebblechain-custody-{}", std::process::id()));
        let mut s = session(3);
        s.save(&dir).unwrap();
        let mut back = CustodySession::load(&dir, &Registry::standard()).unwrap();
        back.record_evidence(50, b"more").unwrap();
        s.record_evidence(50, b"more").unwrap();
        assert_eq!(back.ledger().to_text(), s.ledger().to_text());
        fs::remove_dir_all(&dir).unwrap();
    }
}
