//! Versioned text snapshot of a chain in either phase.
//!
//! ```text
//! pebblechain-state v1 <provider> <mode> <total_hash_elements>
//! phase growing | phase exposure <span> <cursor>
//! seed <hex>
//! counters <grow_pebble> <exponent>
//! current <hex|->                        (exposure only)
//! pebble <index> <position> <destination> <start_increment> <dest_increment> <move_increment> <distance_from_seed> <value-hex>
//! evidence <slot> <hex|->                (evidence-bound chains only)
//! <grow_value-hex>
//! ```
//!
//! Retired pebbles carry `inf` for position and destination. During growth
//! evidence slots are growth steps; after finalize they are exposure
//! positions. Instrumentation counters are not persisted.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::growth::{ExposureHandoff, GrowthState};
use crate::hash_provider::{CombineMode, CompressedEvidence, Digest, Provider, Registry};
use crate::pebble::Pebble;
use crate::traversal::TraversalState;

const MAGIC: &str = "pebblechain-state";
const VERSION: &str = "v1";

/// A chain in either of its two phases.
#[derive(Clone, Debug)]
pub enum ChainState {
    Growing(GrowthState),
    Exposing(ExposureHandoff),
}

impl ChainState {
    pub fn provider(&self) -> &Provider {
        match self {
            ChainState::Growing(g) => g.provider(),
            ChainState::Exposing(h) => h.traversal.provider(),
        }
    }

    pub fn total_hash_elements(&self) -> u64 {
        match self {
            ChainState::Growing(g) => g.total_hash_elements(),
            ChainState::Exposing(h) => h.current_position,
        }
    }

    /// Pebbles currently stored (retired ones excluded).
    pub fn live_pebbles(&self) -> usize {
        match self {
            ChainState::Growing(g) => g.pebbles().len(),
            ChainState::Exposing(h) => h.traversal.live_pebbles(),
        }
    }

    pub fn growing_mut(&mut self) -> Result<&mut GrowthState> {
        match self {
            ChainState::Growing(g) => Ok(g),
            ChainState::Exposing(_) => Err(Error::Phase("chain is finalized; growth is closed".into())),
        }
    }

    pub fn exposing_mut(&mut self) -> Result<&mut TraversalState> {
        match self {
            ChainState::Exposing(h) => Ok(&mut h.traversal),
            ChainState::Growing(_) => Err(Error::Phase("chain is still growing; finalize it first".into())),
        }
    }

    /// Move from growth to exposure. Fails if already finalized.
    pub fn finalize(&mut self) -> Result<()> {
        let ChainState::Growing(g) = self else {
            return Err(Error::Phase("chain is already finalized".into()));
        };
        let handoff = g.clone().finalize()?;
        *self = ChainState::Exposing(handoff);
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            ChainState::Growing(g) => {
                let _ = writeln!(out, "{MAGIC} {VERSION} {} {} {}", g.provider().name(), g.mode(), g.total_hash_elements());
                out.push_str("phase growing\n");
                let _ = writeln!(out, "seed {}", g.seed());
                let _ = writeln!(out, "counters {} {}", g.grow_pebble(), g.exponent());
                for p in g.pebbles() {
                    write_pebble(&mut out, p);
                }
                write_evidence(&mut out, g.evidence().iter(), 1);
                let _ = writeln!(out, "{}", g.grow_value());
            }
            ChainState::Exposing(h) => {
                let t = &h.traversal;
                let _ = writeln!(out, "{MAGIC} {VERSION} {} {} {}", t.provider().name(), t.mode(), h.current_position);
                let _ = writeln!(out, "phase exposure {} {}", t.span(), t.cursor());
                let _ = writeln!(out, "seed {}", h.seed);
                let sigma = t.pebbles().len();
                let _ = writeln!(out, "counters {} {}", sigma, sigma);
                match t.current_value() {
                    Some(v) => {
                        let _ = writeln!(out, "current {v}");
                    }
                    None => out.push_str("current -\n"),
                }
                for p in t.pebbles() {
                    write_pebble(&mut out, p);
                }
                if let Some(ev) = t.evidence() {
                    write_evidence(&mut out, ev.iter(), 1);
                }
                let _ = writeln!(out, "{}", h.current_value);
            }
        }
        out
    }

    pub fn from_text(text: &str, registry: &Registry) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("snapshot ends before {what}")))
        };

        let (_, header) = next("header")?;
        let h: Vec<&str> = header.split(' ').collect();
        if h.len() != 5 || h[0] != MAGIC {
            return Err(Error::Parse(format!("not a state snapshot: {header:?}")));
        }
        if h[1] != VERSION {
            return Err(Error::Parse(format!("unsupported snapshot version {}", h[1])));
        }
        let provider = registry.get(h[2])?;
        let mode: CombineMode = h[3].parse()?;
        let total: u64 = parse_num(h[4], "total_hash_elements")?;

        let (_, phase_line) = next("phase")?;
        let phase: Vec<&str> = phase_line.split(' ').collect();
        let exposure = match phase.as_slice() {
            ["phase", "growing"] => None,
            ["phase", "exposure", span, cursor] => Some((parse_num(span, "span")?, parse_num(cursor, "cursor")?)),
            _ => return Err(Error::Parse(format!("bad phase line {phase_line:?}"))),
        };

        let seed = Digest::from_hex(keyed(next("seed")?.1, "seed")?)?;
        let counters: Vec<&str> = keyed(next("counters")?.1, "counters")?.split(' ').collect();
        let [grow_pebble, exponent] = counters.as_slice() else {
            return Err(Error::Parse("counters line needs two fields".into()));
        };
        let grow_pebble: u32 = parse_num(grow_pebble, "grow_pebble")? as u32;
        let exponent: u32 = parse_num(exponent, "exponent")? as u32;

        let current = if exposure.is_some() {
            match keyed(next("current")?.1, "current")? {
                "-" => None,
                hex => Some(Digest::from_hex(hex)?),
            }
        } else {
            None
        };

        let mut pebbles = Vec::new();
        let mut evidence: Vec<Option<CompressedEvidence>> = Vec::new();
        let mut grow_value = None;
        for (no, line) in lines.by_ref() {
            if let Some(rest) = line.strip_prefix("pebble ") {
                if !evidence.is_empty() {
                    return Err(Error::Parse(format!("line {}: pebble after evidence", no + 1)));
                }
                pebbles.push(parse_pebble(rest)?);
            } else if let Some(rest) = line.strip_prefix("evidence ") {
                let (slot, hex) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Parse(format!("line {}: bad evidence line", no + 1)))?;
                if parse_num(slot, "evidence slot")? != evidence.len() as u64 + 1 {
                    return Err(Error::Parse(format!("line {}: evidence slots out of order", no + 1)));
                }
                evidence.push(match hex {
                    "-" => None,
                    hex => Some(CompressedEvidence::from_digest(Digest::from_hex(hex)?)),
                });
            } else {
                grow_value = Some(Digest::from_hex(line)?);
                break;
            }
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing lines after grow value".into()));
        }
        let grow_value = grow_value.ok_or_else(|| Error::Parse("missing grow value line".into()))?;

        match exposure {
            None => Ok(ChainState::Growing(GrowthState::from_parts(
                provider,
                mode,
                seed,
                grow_value,
                total,
                grow_pebble,
                exponent,
                pebbles,
                evidence,
            )?)),
            Some((span, cursor)) => {
                let evidence = (!evidence.is_empty()).then_some(evidence);
                let traversal =
                    TraversalState::from_parts(provider, mode, total, span, cursor, current, pebbles, evidence)?;
                Ok(ChainState::Exposing(ExposureHandoff {
                    index_offset: span - total,
                    traversal,
                    current_position: total,
                    current_value: grow_value,
                    seed,
                }))
            }
        }
    }
}

fn write_pebble(out: &mut String, p: &Pebble) {
    let (pos, dest) = if p.disposed {
        ("inf".to_string(), "inf".to_string())
    } else {
        (p.position.to_string(), p.destination.to_string())
    };
    let _ = writeln!(
        out,
        "pebble {} {pos} {dest} {} {} {} {} {}",
        p.origin_index, p.start_increment, p.dest_increment, p.move_increment, p.distance_from_seed, p.value
    );
}

fn write_evidence<'a>(out: &mut String, ev: impl Iterator<Item = &'a Option<CompressedEvidence>>, first: usize) {
    for (i, c) in ev.enumerate() {
        match c {
            Some(c) => {
                let _ = writeln!(out, "evidence {} {}", i + first, c.digest());
            }
            None => {
                let _ = writeln!(out, "evidence {} -", i + first);
            }
        }
    }
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Parse(format!("expected {key} line, found {line:?}")))
}

fn parse_num(s: &str, what: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad {what}: {s:?}")))
}

fn parse_pebble(rest: &str) -> Result<Pebble> {
    let f: Vec<&str> = rest.split(' ').collect();
    if f.len() != 8 {
        return Err(Error::Parse(format!("pebble line needs 8 fields: {rest:?}")));
    }
    let origin_index = parse_num(f[0], "pebble index")? as u32;
    if origin_index == 0 || origin_index > 62 {
        return Err(Error::Parse(format!("pebble index {origin_index} out of range")));
    }
    let disposed = f[1] == "inf";
    if disposed != (f[2] == "inf") {
        return Err(Error::Parse("retired pebble needs inf position and destination".into()));
    }
    let (position, destination) = if disposed {
        (u64::MAX, u64::MAX)
    } else {
        (parse_num(f[1], "position")?, parse_num(f[2], "destination")?)
    };
    let mut p = Pebble::initialize(origin_index, Digest::from_hex(f[7])?);
    let increments = (
        parse_num(f[3], "start_increment")?,
        parse_num(f[4], "dest_increment")?,
        parse_num(f[5], "move_increment")?,
    );
    if increments != (p.start_increment, p.dest_increment, p.move_increment) {
        return Err(Error::Parse(format!("pebble {origin_index} has foreign increments")));
    }
    p.position = position;
    p.destination = destination;
    p.disposed = disposed;
    p.distance_from_seed = parse_num(f[6], "distance_from_seed")?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn growing(steps: u64, evidence: bool) -> ChainState {
        let p = Provider::mix64_test();
        let mut g = GrowthState::new(Digest::from_hex("0011223344556677").unwrap(), p, CombineMode::Concat).unwrap();
        for i in 0..steps {
            let e = (evidence && i % 2 == 1).then(|| i.to_le_bytes().to_vec());
            g.grow_step(e.as_deref()).unwrap();
        }
        ChainState::Growing(g)
    }

    #[test]
    fn growing_round_trip() {
        let r = Registry::standard();
        for steps in [0, 1, 2, 7, 15, 100] {
            let s = growing(steps, steps > 10);
            let text = s.to_text();
            let back = ChainState::from_text(&text, &r).unwrap();
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn header_format() {
        let text = growing(15, false).to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "pebblechain-state v1 mix64-test concat 16");
        assert_eq!(lines[1], "phase growing");
        assert_eq!(lines.iter().filter(|l| l.starts_with("pebble ")).count(), 3);
        assert_eq!(lines.last().unwrap().len(), 16);
    }

    #[test]
    fn exposure_round_trip_mid_traversal() {
        let r = Registry::standard();
        let mut s = growing(40, true);
        s.finalize().unwrap();
        for _ in 0..17 {
            s.exposing_mut().unwrap().step().unwrap();
        }
        let text = s.to_text();
        assert!(text.contains(" inf inf "), "a pebble should be retired by now:\n{text}");
        let mut back = ChainState::from_text(&text, &r).unwrap();
        assert_eq!(back.to_text(), text);
        let a: Vec<_> = s.exposing_mut().unwrap().map(|e| e.unwrap().value).collect();
        let b: Vec<_> = back.exposing_mut().unwrap().map(|e| e.unwrap().value).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn phase_errors() {
        let mut s = growing(3, false);
        assert!(s.exposing_mut().is_err());
        s.finalize().unwrap();
        assert!(matches!(s.finalize(), Err(Error::Phase(_))));
        assert!(s.growing_mut().is_err());
        let mut one = growing(0, false);
        assert!(one.finalize().is_err());
    }

    #[test]
    fn rejects_corruption() {
        let r = Registry::standard();
        let text = growing(9, false).to_text();
        assert!(ChainState::from_text(&text.replace("v1", "v9"), &r).is_err());
        assert!(ChainState::from_text(&text.replace("mix64-test", "md5"), &r).is_err());
        let dropped: String = text.lines().filter(|l| !l.starts_with("pebble 2")).map(|l| format!("{l}\n")).collect();
        assert!(ChainState::from_text(&dropped, &r).is_err());
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(ChainState::from_text(&truncated, &r).is_err());
    }
}
