use pebblechain::{CombineMode, Digest, FullChain, GrowthState, Provider, Registry, TraversalState};
use proptest::prelude::*;

fn grow(provider: &Provider, seed: &Digest, n: u64, evidence: &[Option<Vec<u8>>], mode: CombineMode) -> GrowthState {
    let mut g = GrowthState::new(seed.clone(), provider.clone(), mode).unwrap();
    for step in 0..(n - 1) as usize {
        g.grow_step(evidence.get(step).and_then(|e| e.as_deref())).unwrap();
    }
    g
}

/// Expected exposure order. Growth step `s` binds the step leaving
/// position `n - s + 1`. Fully bound chains go through the reference chain
/// (with an arbitrary anchor step); partly bound ones are folded directly.
fn expected(provider: &Provider, seed: &Digest, n: u64, evidence: &[Option<Vec<u8>>], mode: CombineMode) -> Vec<Digest> {
    let steps = (n - 1) as usize;
    let bound: Option<Vec<_>> = (0..steps)
        .map(|s| evidence.get(s).and_then(|e| e.as_deref()).map(|e| provider.compress(e)))
        .collect();
    if let Some(mut ev) = bound.filter(|b| !b.is_empty()) {
        ev.push(provider.compress(b"anchor"));
        let chain = FullChain::build(provider, seed, n, Some(&ev), mode).unwrap();
        return chain.exposure_order().cloned().collect();
    }
    let mut values = vec![seed.clone()];
    for s in 0..steps {
        let c = evidence.get(s).and_then(|e| e.as_deref()).map(|e| provider.compress(e));
        values.push(provider.chain_step(values.last().unwrap(), c.as_ref(), mode).unwrap());
    }
    values.reverse();
    values
}

fn exposure(g: GrowthState) -> Vec<Digest> {
    g.finalize().unwrap().into_traversal().map(|e| e.unwrap().value).collect()
}

#[test]
fn every_length_up_to_512_matches_oracle() {
    let p = Provider::mix64_test();
    let seed = Digest::from_hex("0123456789abcdef").unwrap();
    for n in 2..=512u64 {
        let emitted = exposure(grow(&p, &seed, n, &[], CombineMode::Concat));
        let chain = FullChain::build(&p, &seed, n, None, CombineMode::Concat).unwrap();
        assert_eq!(emitted, chain.exposure_order().cloned().collect::<Vec<_>>(), "n = {n}");
    }
}

#[test]
fn power_of_two_frontier_equals_setup() {
    let p = Provider::mix64_test();
    let seed = Digest::from_hex("fedcba9876543210").unwrap();
    for k in 1..=10 {
        let n = 1u64 << k;
        let online = grow(&p, &seed, n, &[], CombineMode::Concat).finalize().unwrap().into_traversal();
        let chain = FullChain::build(&p, &seed, n, None, CombineMode::Concat).unwrap();
        let setup = TraversalState::jakobsson_setup(&chain).unwrap();
        let key = |t: &TraversalState| -> Vec<(u64, Digest)> {
            t.pebbles().iter().map(|p| (p.position - t.offset(), p.value.clone())).collect()
        };
        assert_eq!(key(&online), key(&setup), "k = {k}");
    }
}

#[test]
fn sha_providers_match_oracle() {
    let r = Registry::standard();
    for name in ["sha1", "sha256", "sha3-256"] {
        let p = r.get(name).unwrap();
        let seed = p.evaluate(name.as_bytes());
        for n in [2, 3, 7, 16, 33] {
            let emitted = exposure(grow(&p, &seed, n, &[], CombineMode::Xor));
            let chain = FullChain::build(&p, &seed, n, None, CombineMode::Xor).unwrap();
            assert_eq!(emitted, chain.exposure_order().cloned().collect::<Vec<_>>(), "{name} n = {n}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evidence_bound_growth_matches_oracle(
        seed in any::<u64>(),
        n in 2u64..200,
        xor in any::<bool>(),
        evidence in prop::collection::vec(prop::option::of(prop::collection::vec(any::<u8>(), 0..24)), 0..200),
    ) {
        let p = Provider::mix64_test();
        let mode = if xor { CombineMode::Xor } else { CombineMode::Concat };
        let seed = Digest::from_bytes(seed.to_le_bytes().to_vec());
        let evidence = &evidence[..evidence.len().min(n as usize - 1)];
        let emitted = exposure(grow(&p, &seed, n, evidence, mode));
        let expected = expected(&p, &seed, n, evidence, mode);
        prop_assert_eq!(emitted, expected);
    }

    #[test]
    fn live_pebbles_never_exceed_ceil_log(n in 2u64..3000) {
        let p = Provider::mix64_test();
        let seed = Digest::from_bytes(vec![7; 8]);
        let g = grow(&p, &seed, n, &[], CombineMode::Concat);
        let ceil = 64 - (n - 1).leading_zeros() as usize;
        let mut t = g.finalize().unwrap().into_traversal();
        prop_assert_eq!(t.live_pebbles(), ceil);
        while !t.is_exhausted() {
            t.step().unwrap();
            prop_assert!(t.live_pebbles() <= ceil);
        }
    }
}
