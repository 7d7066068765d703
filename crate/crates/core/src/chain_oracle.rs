//! Brute-force reference chain. Materializes every element, so it costs
//! O(n) memory; it exists to check the pebbling engines.
//!
//! Positions are exposure positions: 1 is disclosed first, `n` is the seed.
//! Position `q` holds `v_q`, and one hash step maps position `q` to `q - 1`
//! using the evidence bound at position `q`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::hash_provider::{CombineMode, CompressedEvidence, Digest, Provider};

#[derive(Clone, Debug)]
pub struct FullChain {
    provider: Provider,
    mode: CombineMode,
    /// `values[q]` is `v_q`; `values[n]` is the seed.
    values: Vec<Digest>,
    /// `evidence[q - 1]` is the compressed evidence hashed into the step
    /// from position `q` to `q - 1`.
    evidence: Option<Vec<CompressedEvidence>>,
}

impl FullChain {
    /// Build `v_n … v_0` from the seed by `n` forward applications.
    ///
    /// `evidence`, when present, lists `c(E_n), c(E_{n-1}), …, c(E_1)` in
    /// generation order.
    pub fn build(
        provider: &Provider,
        seed: &Digest,
        n: u64,
        evidence: Option<&[CompressedEvidence]>,
        mode: CombineMode,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::Contract("chain length must be at least 1".into()));
        }
        provider.check_width(seed)?;
        if let Some(ev) = evidence {
            if ev.len() as u64 != n {
                return Err(Error::Contract(format!(
                    "evidence list has {} entries for a chain of length {n}",
                    ev.len()
                )));
            }
        }
        let mut values = Vec::with_capacity(n as usize + 1);
        values.push(seed.clone());
        for step in 0..n as usize {
            let c = evidence.map(|ev| &ev[step]);
            let next = provider.chain_step(values.last().unwrap(), c, mode)?;
            values.push(next);
        }
        values.reverse();
        let evidence = evidence.map(|ev| ev.iter().rev().cloned().collect());
        Ok(FullChain {
            provider: provider.clone(),
            mode,
            values,
            evidence,
        })
    }

    pub fn n(&self) -> u64 {
        self.values.len() as u64 - 1
    }

    pub fn provider(&self) -> &Provider {
        &self.provider
    }

    pub fn mode(&self) -> CombineMode {
        self.mode
    }

    pub fn seed(&self) -> &Digest {
        &self.values[self.values.len() - 1]
    }

    /// `v_0`, the last computed element. It is never disclosed.
    pub fn anchor(&self) -> &Digest {
        &self.values[0]
    }

    pub fn element_at(&self, position: u64) -> Result<&Digest> {
        if position < 1 || position > self.n() {
            return Err(Error::PositionOutOfRange {
                position,
                n: self.n(),
            });
        }
        Ok(&self.values[position as usize])
    }

    /// Evidence hashed into the step leaving `position`.
    pub fn evidence_at(&self, position: u64) -> Option<&CompressedEvidence> {
        let ev = self.evidence.as_ref()?;
        ev.get((position as usize).checked_sub(1)?)
    }

    /// Evidence aligned by position (`[q - 1]` for the step leaving `q`).
    pub fn evidence_by_position(&self) -> Option<&[CompressedEvidence]> {
        self.evidence.as_deref()
    }

    /// Elements in generation order `v_n, …, v_0`.
    pub fn generation_order(&self) -> impl Iterator<Item = &Digest> {
        self.values.iter().rev()
    }

    /// Elements in exposure order `v_1, …, v_n`.
    pub fn exposure_order(&self) -> impl Iterator<Item = &Digest> {
        self.values.iter().skip(1)
    }

    /// Recompute `v_{q-1}, …, v_0` from `v_q` and compare with the stored
    /// elements.
    pub fn suffix_consistent_from(&self, position: u64) -> Result<bool> {
        let mut v = self.values[position as usize].clone();
        for q in (1..=position).rev() {
            v = self.provider.chain_step(&v, self.evidence_at(q), self.mode)?;
            if v != self.values[q as usize - 1] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Text dump: a header, then `position<TAB>hex` for positions 0..=n.
    pub fn dump(&self) -> String {
        let mut out = format!("pebblechain-oracle v1 {} {} {}\n", self.provider.name(), self.mode, self.n());
        for (q, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{q}\t{v}");
        }
        out
    }
}
