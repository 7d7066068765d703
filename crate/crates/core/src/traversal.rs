//! Amortized preimage traversal over `⌈log₂ n⌉` pebbles.
//!
//! Each call to [`TraversalState::step`] discloses the next element in
//! exposure order (position 1 first, the seed last) and performs the pebble
//! update: pebbles in transit advance two positions with two hash
//! applications, and on even positions the leading pebble is sent backward
//! by its start increment (or retired once its destination passes the end).
//!
//! The state may describe a plain chain of `2^k` elements (built by
//! [`TraversalState::jakobsson_setup`]) or the tail of one, as handed over by
//! the online growth engine. In the second case the first `span - len`
//! padded positions were never generated and the cursor starts past them.

use crate::chain_oracle::FullChain;
use crate::error::{Error, Result};
use crate::hash_provider::{CombineMode, CompressedEvidence, Digest, Provider};
use crate::pebble::{sort_pebbles, Pebble};

/// One disclosed element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emission {
    /// Exposure position (1 = first disclosed, `len` = seed).
    pub position: u64,
    pub value: Digest,
    /// Set when the leading pebble was moved backward on this step.
    pub relocation: Option<Relocation>,
}

/// A backward move of the leading pebble, observed immediately after
/// placement and before re-sorting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relocation {
    pub origin_index: u32,
    /// Count of backward moves including this one.
    pub back_moves: u32,
    pub position: u64,
    pub destination: u64,
    pub disposed: bool,
}

#[derive(Clone, Debug)]
pub struct TraversalState {
    provider: Provider,
    mode: CombineMode,
    /// Number of disclosable elements.
    len: u64,
    /// Padded chain length, a power of two `>= len`.
    span: u64,
    /// `Current.Position` in padded coordinates.
    cursor: u64,
    current_value: Option<Digest>,
    pebbles: Vec<Pebble>,
    /// `[q - 1]` holds the evidence bound into the step leaving exposure
    /// position `q`.
    evidence: Option<Vec<Option<CompressedEvidence>>>,
    hash_invocations: u64,
}

impl TraversalState {
    /// Place pebbles on positions `2^1 … 2^k` of a fully computed chain of
    /// `n = 2^k` elements.
    pub fn jakobsson_setup(chain: &FullChain) -> Result<Self> {
        let n = chain.n();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Contract(format!(
                "preimage traversal setup needs n = 2^k with k >= 1, got {n}"
            )));
        }
        let k = n.trailing_zeros();
        let pebbles = (1..=k)
            .map(|j| {
                let mut p = Pebble::initialize(j, chain.element_at(1 << j)?.clone());
                p.distance_from_seed = n - (1 << j);
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let evidence = chain
            .evidence_by_position()
            .map(|ev| ev.iter().cloned().map(Some).collect());
        Ok(TraversalState {
            provider: chain.provider().clone(),
            mode: chain.mode(),
            len: n,
            span: n,
            cursor: 0,
            current_value: Some(chain.anchor().clone()),
            pebbles,
            evidence,
            hash_invocations: 0,
        })
    }

    /// Assemble a state from already placed pebbles, kept in the given order
    /// (between relocations the order may lag behind the positions, and
    /// stepping depends on it). `span` must be `2^pebbles.len()`, and the
    /// cursor must sit within `[span - len, span]`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        provider: Provider,
        mode: CombineMode,
        len: u64,
        span: u64,
        cursor: u64,
        current_value: Option<Digest>,
        pebbles: Vec<Pebble>,
        evidence: Option<Vec<Option<CompressedEvidence>>>,
    ) -> Result<Self> {
        if !span.is_power_of_two() || span < len || len < 1 {
            return Err(Error::Contract(format!("bad traversal span {span} for length {len}")));
        }
        if span != 1u64 << pebbles.len() {
            return Err(Error::Contract(format!(
                "{} pebbles cannot cover a padded span of {span}",
                pebbles.len()
            )));
        }
        if cursor < span - len || cursor > span {
            return Err(Error::Contract(format!("cursor {cursor} outside [{}, {span}]", span - len)));
        }
        if let Some(ev) = &evidence {
            if ev.len() as u64 != len {
                return Err(Error::Contract(format!(
                    "evidence list has {} entries for {len} positions",
                    ev.len()
                )));
            }
            if mode == CombineMode::Xor && ev.iter().flatten().any(|c| c.len() != provider.width()) {
                return Err(Error::WidthMismatch {
                    expected: provider.width(),
                    found: ev.iter().flatten().map(|c| c.len()).find(|w| *w != provider.width()).unwrap_or(0),
                });
            }
        }
        for p in &pebbles {
            provider.check_width(&p.value)?;
        }
        Ok(TraversalState {
            provider,
            mode,
            len,
            span,
            cursor,
            current_value,
            pebbles,
            evidence,
            hash_invocations: 0,
        })
    }

    pub fn provider(&self) -> &Provider {
        &self.provider
    }

    pub fn mode(&self) -> CombineMode {
        self.mode
    }

    /// Number of disclosable elements.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn span(&self) -> u64 {
        self.span
    }

    /// Padded positions that precede the first disclosable element.
    pub fn offset(&self) -> u64 {
        self.span - self.len
    }

    /// The cursor in padded coordinates.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Exposure position of the last disclosed element (0 before the first).
    pub fn current_position(&self) -> u64 {
        self.cursor - self.offset()
    }

    pub fn current_value(&self) -> Option<&Digest> {
        self.current_value.as_ref()
    }

    pub fn remaining(&self) -> u64 {
        self.span - self.cursor
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor == self.span
    }

    /// Pebbles sorted by position; retired pebbles last.
    pub fn pebbles(&self) -> &[Pebble] {
        &self.pebbles
    }

    pub fn live_pebbles(&self) -> usize {
        self.live().count()
    }

    /// Pebbles not yet retired, in sort order.
    pub fn live(&self) -> impl Iterator<Item = &Pebble> {
        self.pebbles.iter().filter(|p| !p.disposed)
    }

    pub fn evidence(&self) -> Option<&[Option<CompressedEvidence>]> {
        self.evidence.as_deref()
    }

    pub fn hash_invocations(&self) -> u64 {
        self.hash_invocations
    }

    fn evidence_leaving(&self, padded: u64) -> Option<&CompressedEvidence> {
        let q = padded.checked_sub(self.offset())?;
        let ev = self.evidence.as_ref()?;
        ev.get((q as usize).checked_sub(1)?)?.as_ref()
    }

    /// Hash the value held at padded position `from` down to `from - 1`.
    fn hash_down(&self, value: &Digest, from: u64) -> Result<Digest> {
        debug_assert!(from > self.offset(), "position {from} lies outside the generated chain");
        self.provider.chain_step(value, self.evidence_leaving(from), self.mode)
    }

    /// The element at padded position `target`, derived from the nearest
    /// live pebble at or behind it. Returns the value and the number of hash
    /// applications spent.
    pub fn find_value(&self, target: u64) -> Result<(Digest, u64)> {
        self.find_value_skipping(target, usize::MAX)
    }

    fn find_value_skipping(&self, target: u64, skip: usize) -> Result<(Digest, u64)> {
        let source = self
            .pebbles
            .iter()
            .enumerate()
            .filter(|(i, p)| *i != skip && !p.disposed && p.position >= target)
            .min_by_key(|(_, p)| p.position)
            .map(|(_, p)| p)
            .ok_or_else(|| {
                Error::Contract(format!("no known value at or behind position {target}"))
            })?;
        let mut value = source.value.clone();
        for from in (target + 1..=source.position).rev() {
            value = self.hash_down(&value, from)?;
        }
        Ok((value, source.position - target))
    }

    /// Disclose the next element and update the pebbles.
    pub fn step(&mut self) -> Result<Emission> {
        if self.cursor == self.span {
            return Err(Error::Exhausted);
        }
        self.cursor += 1;

        for i in 0..self.pebbles.len() {
            let p = &self.pebbles[i];
            if p.disposed || p.at_rest() {
                continue;
            }
            let from = p.position;
            let once = self.hash_down(&p.value, from)?;
            let twice = self.hash_down(&once, from - 1)?;
            self.hash_invocations += 2;
            let p = &mut self.pebbles[i];
            p.position -= 2;
            p.value = twice;
        }

        let lead = &self.pebbles[0];
        let mut relocation = None;
        let value = if self.cursor % 2 == 1 {
            debug_assert_eq!(lead.position, self.cursor + 1);
            self.hash_invocations += 1;
            self.hash_down(&lead.value, lead.position)?
        } else {
            debug_assert_eq!(lead.position, self.cursor);
            let emitted = lead.value.clone();
            let position = lead.position + lead.start_increment;
            let destination = lead.destination + lead.dest_increment;
            if destination > self.span {
                let lead = &mut self.pebbles[0];
                lead.back_moves += 1;
                lead.disposed = true;
                lead.position = u64::MAX;
                lead.destination = u64::MAX;
                relocation = Some(Relocation {
                    origin_index: lead.origin_index,
                    back_moves: lead.back_moves,
                    position: u64::MAX,
                    destination: u64::MAX,
                    disposed: true,
                });
            } else {
                let (found, cost) = self.find_value_skipping(position, 0)?;
                self.hash_invocations += cost;
                let lead = &mut self.pebbles[0];
                lead.back_moves += 1;
                lead.position = position;
                lead.destination = destination;
                lead.value = found;
                relocation = Some(Relocation {
                    origin_index: lead.origin_index,
                    back_moves: lead.back_moves,
                    position,
                    destination,
                    disposed: false,
                });
            }
            sort_pebbles(&mut self.pebbles);
            emitted
        };

        self.current_value = Some(value.clone());
        Ok(Emission {
            position: self.current_position(),
            value,
            relocation,
        })
    }
}

impl Iterator for TraversalState {
    type Item = Result<Emission>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.is_exhausted() {
            None
        } else {
            Some(self.step())
        }
    }
}

/// `D(j, k) = 2^j + k·2^{j+1}`: destination of the pebble created as `j`
/// after `k` backward moves.
pub fn law_destination(j: u32, k: u64) -> u64 {
    (1u64 << j) + k * (1u64 << (j + 1))
}

/// `P(j, k) = 2^j + k·3·2^j`: the upper bound on that pebble's position.
pub fn law_position_bound(j: u32, k: u64) -> u64 {
    (1u64 << j) + k * 3 * (1u64 << j)
}

/// Backward moves made by pebble `j` while the first half of a chain of
/// `n = 2^{k+1}` elements is disclosed: `2^{k-j-1}`, defined for `j < k`.
pub fn law_back_moves(j: u32, n: u64) -> Result<u64> {
    if !n.is_power_of_two() || n < 4 {
        return Err(Error::Contract(format!("n = {n} is not 2^(k+1) with k >= 1")));
    }
    let k = n.trailing_zeros() - 1;
    if j < 1 || j >= k {
        return Err(Error::Contract(format!("pebble index {j} outside 1..{k}")));
    }
    Ok(1u64 << (k - j - 1))
}

/// `R_k(l) = l - 2^k`: a position in a chain of `2^{k+1}` renamed into the
/// chain of `2^k` left after its first half is disclosed.
pub fn law_reindex(l: u64, k: u32) -> Result<u64> {
    l.checked_sub(1u64 << k)
        .ok_or_else(|| Error::Contract(format!("position {l} precedes 2^{k}")))
}
