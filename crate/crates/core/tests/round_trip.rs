use pebblechain::{ChainState, CombineMode, CustodyLedger, CustodySession, Digest, GrowthState, Registry};
use proptest::prelude::*;

fn state(provider: &str, seed: &[u8], steps: u64, bind_every: u64, emits: Option<u64>, xor: bool) -> ChainState {
    let r = Registry::standard();
    let p = r.get(provider).unwrap();
    let mode = if xor { CombineMode::Xor } else { CombineMode::Concat };
    // mix64-test maps zero to zero, so keep the seed input away from it.
    let mut g = GrowthState::new(p.evaluate(&[&[1u8][..], seed].concat()), p, mode).unwrap();
    for i in 0..steps {
        let e = (bind_every > 0 && i % bind_every == 0).then(|| i.to_be_bytes());
        g.grow_step(e.as_ref().map(|e| &e[..])).unwrap();
    }
    let mut s = ChainState::Growing(g);
    if let Some(k) = emits {
        if steps > 0 {
            s.finalize().unwrap();
            let t = s.exposing_mut().unwrap();
            for _ in 0..k.min(steps + 1) {
                t.step().unwrap();
            }
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshots_round_trip_bit_exactly(
        provider in prop::sample::select(vec!["mix64-test", "sha1", "sha256", "sha3-256"]),
        seed in prop::collection::vec(any::<u8>(), 0..16),
        steps in 0u64..300,
        bind_every in 0u64..4,
        emits in prop::option::of(0u64..400),
        xor in any::<bool>(),
    ) {
        let s = state(provider, &seed, steps, bind_every, emits, xor);
        let text = s.to_text();
        let mut back = ChainState::from_text(&text, &Registry::standard()).unwrap();
        prop_assert_eq!(back.to_text(), text);
        // The reloaded chain continues exactly like the original.
        let mut orig = s;
        if let (Ok(a), Ok(b)) = (orig.exposing_mut(), back.exposing_mut()) {
            let a: Vec<Digest> = a.map(|e| e.unwrap().value).collect();
            let b: Vec<Digest> = b.map(|e| e.unwrap().value).collect();
            prop_assert_eq!(a, b);
        } else {
            let a = orig.growing_mut().unwrap().grow_step(Some(b"next")).unwrap();
            let b = back.growing_mut().unwrap().grow_step(Some(b"next")).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn ledgers_round_trip_bit_exactly(
        chunks in prop::collection::vec((prop::collection::vec(any::<u8>(), 0..20), 1u64..5, any::<bool>()), 0..30),
        close in any::<bool>(),
    ) {
        let r = Registry::standard();
        let providers = ["mix64-test", "sha1", "sha3-256"].iter().map(|n| r.get(n).unwrap()).collect();
        let mut s = CustodySession::open("rt-1", providers, b"", 5, CombineMode::Concat, false).unwrap();
        let mut tick = 0;
        for (chunk, gap, attest) in &chunks {
            if *attest {
                s.attest_peers();
            }
            tick += gap;
            s.record_evidence(tick, chunk).unwrap();
        }
        if close {
            s.close().unwrap();
        }
        let text = s.ledger().to_text();
        let back = CustodyLedger::from_text(&text).unwrap();
        prop_assert_eq!(&back, s.ledger());
        prop_assert_eq!(back.to_text(), text);
    }
}

#[test]
fn snapshot_rejects_inconsistent_pebbles() {
    let s = state("mix64-test", b"x", 20, 0, None, false);
    let text = s.to_text();
    let moved = text.replacen("pebble 1 ", "pebble 1 9", 1);
    assert!(ChainState::from_text(&moved, &Registry::standard()).is_err());
    // A total from another power-of-two band implies a different pebble count.
    let wrong_total = text.replacen(" 21\n", " 40\n", 1);
    assert!(ChainState::from_text(&wrong_total, &Registry::standard()).is_err());
}
