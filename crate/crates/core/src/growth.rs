//! Online chain growth to an unknown length.
//!
//! The chain is grown one element per step with a single hash evaluation,
//! while a logarithmic frontier of pebbles is kept exactly where the
//! preimage traversal expects it. Growth can stop after any number of
//! elements; [`GrowthState::finalize`] then adds the seed pebble and hands the
//! frontier over to [`TraversalState`].
//!
//! Pebble positions live in padded coordinates: with `total` elements grown
//! and `2^exponent >= total`, the grown chain is the tail of a chain of
//! `2^exponent` elements and a pebble whose value lies `d` hash applications
//! from the seed sits at padded position `2^exponent - d`. Mapping back with
//! [`index_map`] gives its distance from the emission front, `total - d`.

use crate::error::{Error, Result};
use crate::hash_provider::{CombineMode, CompressedEvidence, Digest, Provider};
use crate::pebble::{sort_pebbles, Pebble};
use crate::traversal::TraversalState;

/// `j = i - (2^σ - total)`: a padded position `i` expressed as a distance
/// from the emission front of a chain holding `total` elements.
pub fn index_map(sigma: u32, total: u64, i: u64) -> i64 {
    i as i64 - ((1i64 << sigma) - total as i64)
}

/// What one growth step did to the pebble frontier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GrowthEvent {
    Created { index: u32 },
    Moved { indices: Vec<u32> },
    None,
}

#[derive(Clone, Debug)]
pub struct GrowthState {
    provider: Provider,
    mode: CombineMode,
    seed: Digest,
    grow_value: Digest,
    total_hash_elements: u64,
    grow_pebble: u32,
    exponent: u32,
    pebbles: Vec<Pebble>,
    /// Compressed evidence per step, in growth order. Left empty until the
    /// first evidence-bound step.
    evidence: Vec<Option<CompressedEvidence>>,
    hash_invocations: u64,
}

impl GrowthState {
    pub fn new(seed: Digest, provider: Provider, mode: CombineMode) -> Result<Self> {
        provider.check_width(&seed)?;
        Ok(GrowthState {
            provider,
            mode,
            grow_value: seed.clone(),
            seed,
            total_hash_elements: 1,
            grow_pebble: 1,
            exponent: 1,
            pebbles: Vec::new(),
            evidence: Vec::new(),
            hash_invocations: 0,
        })
    }

    /// Rebuild a state from persisted fields, checking the frontier against
    /// the growth counters.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        provider: Provider,
        mode: CombineMode,
        seed: Digest,
        grow_value: Digest,
        total_hash_elements: u64,
        grow_pebble: u32,
        exponent: u32,
        pebbles: Vec<Pebble>,
        evidence: Vec<Option<CompressedEvidence>>,
    ) -> Result<Self> {
        provider.check_width(&seed)?;
        provider.check_width(&grow_value)?;
        if total_hash_elements < 1 {
            return Err(Error::Contract("total_hash_elements must be at least 1".into()));
        }
        let expected = if total_hash_elements >= 2 { (total_hash_elements - 1).ilog2() } else { 0 };
        if pebbles.len() as u32 != expected || grow_pebble != expected + 1 || exponent != expected + 1 {
            return Err(Error::Contract(format!(
                "{} pebbles (next index {grow_pebble}) do not fit {total_hash_elements} elements",
                pebbles.len()
            )));
        }
        if evidence.len() as u64 >= total_hash_elements {
            return Err(Error::Contract("more evidence entries than growth steps".into()));
        }
        let state = GrowthState {
            provider,
            mode,
            seed,
            grow_value,
            total_hash_elements,
            grow_pebble,
            exponent,
            pebbles,
            evidence,
            hash_invocations: 0,
        };
        for p in &state.pebbles {
            state.provider.check_width(&p.value)?;
            if state.index_map(p.position) != total_hash_elements as i64 - p.distance_from_seed as i64 {
                return Err(Error::Contract(format!("pebble {} is off the frontier", p.origin_index)));
            }
        }
        Ok(state)
    }

    pub fn provider(&self) -> &Provider {
        &self.provider
    }

    pub fn mode(&self) -> CombineMode {
        self.mode
    }

    pub fn seed(&self) -> &Digest {
        &self.seed
    }

    pub fn grow_value(&self) -> &Digest {
        &self.grow_value
    }

    pub fn total_hash_elements(&self) -> u64 {
        self.total_hash_elements
    }

    pub fn grow_pebble(&self) -> u32 {
        self.grow_pebble
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn pebbles(&self) -> &[Pebble] {
        &self.pebbles
    }

    pub fn evidence(&self) -> &[Option<CompressedEvidence>] {
        &self.evidence
    }

    pub fn is_evidence_bound(&self) -> bool {
        !self.evidence.is_empty()
    }

    pub fn hash_invocations(&self) -> u64 {
        self.hash_invocations
    }

    /// Pebble count once the seed pebble is added at finalize.
    pub fn sigma(&self) -> u32 {
        self.pebbles.len() as u32 + 1
    }

    /// [`index_map`] with `σ` taken as the post-finalize pebble count.
    pub fn index_map(&self, i: u64) -> i64 {
        index_map(self.sigma(), self.total_hash_elements, i)
    }

    /// Grow by one element, binding `evidence` into the step when given.
    pub fn grow_step(&mut self, evidence: Option<&[u8]>) -> Result<Digest> {
        let compressed = evidence.map(|e| self.provider.compress(e));
        self.grow_step_compressed(compressed)
    }

    /// As [`grow_step`](Self::grow_step) with evidence already compressed.
    pub fn grow_step_compressed(&mut self, compressed: Option<CompressedEvidence>) -> Result<Digest> {
        self.advance(compressed).map(|(v, _)| v)
    }

    /// Grow by one element and report what happened to the frontier.
    pub fn grow_step_traced(&mut self, evidence: Option<&[u8]>) -> Result<(Digest, GrowthEvent)> {
        let compressed = evidence.map(|e| self.provider.compress(e));
        self.advance(compressed)
    }

    fn advance(&mut self, compressed: Option<CompressedEvidence>) -> Result<(Digest, GrowthEvent)> {
        self.grow_value = self
            .provider
            .chain_step(&self.grow_value, compressed.as_ref(), self.mode)?;
        self.hash_invocations += 1;
        if compressed.is_some() || !self.evidence.is_empty() {
            let steps_before = self.total_hash_elements as usize - 1;
            self.evidence.resize(steps_before, None);
            self.evidence.push(compressed);
        }
        self.total_hash_elements += 1;
        let event = self.update_frontier();
        Ok((self.grow_value.clone(), event))
    }

    fn update_frontier(&mut self) -> GrowthEvent {
        let total = self.total_hash_elements;
        let grown = total - 1;
        if grown >= 2 && grown.is_power_of_two() {
            self.exponent += 1;
            let shift = 1u64 << (self.exponent - 1);
            for p in &mut self.pebbles {
                p.position += shift;
            }
            let j = self.grow_pebble;
            let mut p = Pebble::initialize(j, self.grow_value.clone());
            p.distance_from_seed = grown;
            self.pebbles.push(p);
            self.grow_pebble += 1;
            self.debug_check_positions();
            return GrowthEvent::Created { index: j };
        }
        let mut moved = Vec::new();
        for p in &mut self.pebbles {
            let trigger = p.move_increment + p.distance_from_seed + 1;
            if total == trigger {
                p.value = self.grow_value.clone();
                p.distance_from_seed = grown;
                p.position -= p.move_increment;
                moved.push(p.origin_index);
            }
        }
        self.debug_check_positions();
        if moved.is_empty() {
            GrowthEvent::None
        } else {
            GrowthEvent::Moved { indices: moved }
        }
    }

    fn debug_check_positions(&self) {
        if cfg!(debug_assertions) {
            for p in &self.pebbles {
                let from_front = self.index_map(p.position);
                debug_assert_eq!(
                    from_front,
                    self.total_hash_elements as i64 - p.distance_from_seed as i64,
                    "pebble {} drifted from the frontier",
                    p.origin_index
                );
            }
        }
    }

    /// Close growth: add the seed pebble, put every pebble at rest and hand
    /// the frontier to the preimage traversal.
    pub fn finalize(self) -> Result<ExposureHandoff> {
        let total = self.total_hash_elements;
        if total < 2 {
            return Err(Error::Phase("a one-element chain has nothing to traverse".into()));
        }
        let mut pebbles = self.pebbles;
        let mut root = Pebble::initialize(self.grow_pebble, self.seed.clone());
        root.distance_from_seed = 0;
        pebbles.push(root);
        sort_pebbles(&mut pebbles);
        for p in &mut pebbles {
            p.destination = p.position;
        }
        let sigma = pebbles.len() as u32;
        let span = 1u64 << sigma;
        let evidence = if self.evidence.is_empty() {
            None
        } else {
            // Growth step s leaves exposure position total - s + 1.
            let mut by_position = vec![None; total as usize];
            for (i, c) in self.evidence.into_iter().enumerate() {
                let step = i as u64 + 1;
                by_position[(total - step) as usize] = c;
            }
            Some(by_position)
        };
        let index_offset = span - total;
        let traversal = TraversalState::from_parts(
            self.provider,
            self.mode,
            total,
            span,
            index_offset,
            None,
            pebbles,
            evidence,
        )?;
        Ok(ExposureHandoff {
            traversal,
            index_offset,
            current_position: total,
            current_value: self.grow_value,
            seed: self.seed,
        })
    }
}

/// The finalized frontier, ready for preimage traversal.
#[derive(Clone, Debug)]
pub struct ExposureHandoff {
    pub traversal: TraversalState,
    /// `2^σ - total`: padded positions in front of the first element.
    pub index_offset: u64,
    /// Elements available for disclosure (the grown total).
    pub current_position: u64,
    /// The newest grown element, disclosed first.
    pub current_value: Digest,
    pub seed: Digest,
}

impl ExposureHandoff {
    pub fn into_traversal(self) -> TraversalState {
        self.traversal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_oracle::FullChain;

    fn seed() -> Digest {
        Digest::from_hex("0123456789abcdef").unwrap()
    }

    fn grown(total: u64) -> GrowthState {
        let mut g = GrowthState::new(seed(), Provider::mix64_test(), CombineMode::Concat).unwrap();
        for _ in 1..total {
            g.grow_step(None).unwrap();
        }
        g
    }

    fn pebble(g: &GrowthState, j: u32) -> &Pebble {
        g.pebbles().iter().find(|p| p.origin_index == j).unwrap()
    }

    #[test]
    fn init_state() {
        let g = grown(1);
        assert_eq!(g.total_hash_elements(), 1);
        assert_eq!(g.grow_value(), &seed());
        assert_eq!((g.grow_pebble(), g.exponent()), (1, 1));
        assert!(g.pebbles().is_empty());
        let h = grown(1);
        assert_eq!(format!("{g:?}"), format!("{h:?}"));
    }

    #[test]
    fn pebble_two_created_at_five() {
        let mut g = grown(4);
        assert_eq!(g.pebbles().len(), 1);
        let (_, ev) = g.grow_step_traced(None).unwrap();
        assert_eq!(ev, GrowthEvent::Created { index: 2 });
        let p2 = pebble(&g, 2);
        assert_eq!((p2.position, p2.move_increment), (4, 8));
    }

    #[test]
    fn pebble_one_refresh() {
        let mut g = grown(5);
        let (_, ev) = g.grow_step_traced(None).unwrap();
        assert_eq!(ev, GrowthEvent::None, "no refresh at total 6");
        let (_, ev) = g.grow_step_traced(None).unwrap();
        assert_eq!(ev, GrowthEvent::Moved { indices: vec![1] });
        let p1 = pebble(&g, 1);
        assert_eq!(g.total_hash_elements(), 7);
        assert_eq!(p1.distance_from_seed, 6);
        assert_eq!(p1.position, 2);
        assert_eq!(&p1.value, g.grow_value());
    }

    #[test]
    fn seven_element_frontier() {
        let h = grown(7).finalize().unwrap();
        let positions: Vec<u64> = h.traversal.pebbles().iter().map(|p| p.position).collect();
        assert_eq!(positions, vec![2, 4, 8]);
        assert_eq!(h.index_offset, 1);
        let oracle = FullChain::build(&Provider::mix64_test(), &seed(), 7, None, CombineMode::Concat).unwrap();
        let out: Vec<Digest> = h.traversal.map(|e| e.unwrap().value).collect();
        assert_eq!(out, oracle.exposure_order().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn smallest_chain() {
        let h = grown(2).finalize().unwrap();
        assert_eq!(h.traversal.pebbles().len(), 1);
        let oracle = FullChain::build(&Provider::mix64_test(), &seed(), 2, None, CombineMode::Concat).unwrap();
        let out: Vec<Digest> = h.traversal.map(|e| e.unwrap().value).collect();
        assert_eq!(out, oracle.exposure_order().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn one_element_chain_rejected() {
        assert!(matches!(grown(1).finalize(), Err(Error::Phase(_))));
    }

    #[test]
    fn handoff_fields() {
        let g = grown(12);
        let front = g.grow_value().clone();
        let h = g.finalize().unwrap();
        assert_eq!(h.current_position, 12);
        assert_eq!(h.current_value, front);
        assert!(h.traversal.pebbles().iter().all(Pebble::at_rest));
        let first = h.traversal.clone().step().unwrap();
        assert_eq!((first.position, first.value), (1, front));
    }

    #[test]
    fn power_of_two_frontier_is_distance_from_front() {
        for k in 1..=8 {
            let n = 1u64 << k;
            let h = grown(n).finalize().unwrap();
            assert_eq!(h.index_offset, 0);
            let positions: Vec<u64> = h.traversal.pebbles().iter().map(|p| p.position).collect();
            assert_eq!(positions, (1..=k).map(|j| 1u64 << j).collect::<Vec<_>>());
        }
    }

    #[test]
    fn index_map_examples() {
        assert_eq!(index_map(3, 8, 5), 5);
        assert_eq!(index_map(3, 6, 4), 2);
        assert_eq!(index_map(4, 12, 10), 6);
    }

    #[test]
    fn one_hash_per_step_and_frontier_size() {
        let mut g = grown(1);
        for total in 2..=600u64 {
            let before = g.hash_invocations();
            g.grow_step(None).unwrap();
            assert_eq!(g.hash_invocations() - before, 1);
            assert_eq!(g.pebbles().len() as u32, (total - 1).ilog2());
        }
    }

    #[test]
    fn pebbles_created_in_ascending_order() {
        let g = grown(300);
        let idx: Vec<u32> = g.pebbles().iter().map(|p| p.origin_index).collect();
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(idx, sorted);
    }

    #[test]
    fn evidence_bound_growth_matches_oracle() {
        let p = Provider::mix64_test();
        let chunks: Vec<Vec<u8>> = (0..20u8).map(|i| vec![i; i as usize]).collect();
        let mut g = GrowthState::new(seed(), p.clone(), CombineMode::Concat).unwrap();
        for c in &chunks {
            g.grow_step(Some(c)).unwrap();
        }
        let total = g.total_hash_elements();
        // The oracle needs one more step (into v_0); its evidence is irrelevant.
        let mut ev: Vec<CompressedEvidence> = chunks.iter().map(|c| p.compress(c)).collect();
        ev.push(p.compress(b"anchor"));
        let oracle = FullChain::build(&p, &seed(), total, Some(&ev), CombineMode::Concat).unwrap();
        assert_eq!(oracle.element_at(1).unwrap(), g.grow_value());
        let out: Vec<Digest> = g.finalize().unwrap().traversal.map(|e| e.unwrap().value).collect();
        assert_eq!(out, oracle.exposure_order().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn partially_bound_growth() {
        let p = Provider::mix64_test();
        let mut g = GrowthState::new(seed(), p.clone(), CombineMode::Xor).unwrap();
        let mut expect = vec![seed()];
        for i in 0..13u8 {
            let e = (i % 3 == 0).then(|| vec![i, 1, 2]);
            let c = e.as_ref().map(|e| p.compress(e));
            let next = p.chain_step(expect.last().unwrap(), c.as_ref(), CombineMode::Xor).unwrap();
            expect.push(next);
            g.grow_step(e.as_deref()).unwrap();
        }
        expect.reverse();
        let out: Vec<Digest> = g.finalize().unwrap().traversal.map(|e| e.unwrap().value).collect();
        assert_eq!(out, expect);
    }
}
