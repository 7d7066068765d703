//! Text traces of pebble placement, one row per step.
//!
//! Rows are tab-separated: `step position event pebbles slots`. Positions
//! are padded coordinates; for chains whose length is a power of two they
//! are exposure positions. `slots` draws one character per position for
//! spans up to [`MAX_SLOTS`]: `o` pebble, `^` the element just emitted,
//! `-` padding in front of the chain, `.` anything else. Wider spans print
//! `-` there and rely on the `pebbles` column.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::chain_oracle::FullChain;
use crate::error::{Error, Result};
use crate::growth::{GrowthEvent, GrowthState};
use crate::hash_provider::{CombineMode, Digest, Provider};
use crate::pebble::Pebble;
use crate::traversal::TraversalState;

pub const MAX_SLOTS: u64 = 64;

pub const HEADER: &str = "step\tposition\tevent\tpebbles\tslots";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMode {
    /// Initial placement for a power-of-two chain.
    Setup,
    /// One row per disclosed element.
    Run,
    /// One row per growth step, then the finalized frontier.
    Grow,
}

impl fmt::Display for TraceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceMode::Setup => "setup",
            TraceMode::Run => "run",
            TraceMode::Grow => "grow",
        })
    }
}

impl FromStr for TraceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "setup" => Ok(TraceMode::Setup),
            "run" => Ok(TraceMode::Run),
            "grow" => Ok(TraceMode::Grow),
            other => Err(Error::Parse(format!("unknown trace mode {other:?}"))),
        }
    }
}

struct Frame<'a> {
    pebbles: &'a [Pebble],
    span: u64,
    /// Padding positions in front of the chain.
    offset: u64,
    emitted: Option<u64>,
}

fn positions(pebbles: &[Pebble]) -> Vec<u64> {
    let mut v: Vec<u64> = pebbles.iter().filter(|p| !p.disposed).map(|p| p.position).collect();
    v.sort_unstable();
    v
}

fn row(out: &mut String, step: u64, position: Option<u64>, event: &str, frame: &Frame<'_>) {
    let live = positions(frame.pebbles);
    let list = if live.is_empty() {
        "-".to_string()
    } else {
        live.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    };
    let slots = if frame.span > MAX_SLOTS {
        "-".to_string()
    } else {
        (1..=frame.span)
            .map(|s| {
                if live.contains(&s) {
                    'o'
                } else if frame.emitted == Some(s) {
                    '^'
                } else if s <= frame.offset {
                    '-'
                } else {
                    '.'
                }
            })
            .collect()
    };
    let position = position.map_or("-".to_string(), |q| q.to_string());
    let _ = writeln!(out, "{step}\t{position}\t{event}\t{list}\t{slots}");
}

/// Render a trace of a chain of `n` elements grown from `seed`.
pub fn render(mode: TraceMode, provider: &Provider, seed: &Digest, n: u64) -> Result<String> {
    if n < 2 {
        return Err(Error::Contract(format!("a trace needs at least 2 elements, got {n}")));
    }
    let mut out = String::new();
    match mode {
        TraceMode::Setup => {
            let t = setup_state(provider, seed, n)?;
            let _ = writeln!(out, "# setup n={n} span={}", t.span());
            out.push_str(HEADER);
            out.push('\n');
            row(&mut out, 0, None, "setup", &frame(&t, None));
        }
        TraceMode::Run => {
            let mut t = if n.is_power_of_two() {
                setup_state(provider, seed, n)?
            } else {
                grow(provider, seed, n)?.finalize()?.into_traversal()
            };
            let _ = writeln!(out, "# run n={n} span={}", t.span());
            out.push_str(HEADER);
            out.push('\n');
            row(&mut out, 0, None, "start", &frame(&t, None));
            for step in 1..=n {
                let e = t.step()?;
                let event = match &e.relocation {
                    Some(r) if r.disposed => format!("dispose:{}", r.origin_index),
                    Some(r) => format!("move:{}:{}", r.origin_index, r.destination),
                    None => "-".to_string(),
                };
                let emitted = e.position + t.offset();
                row(&mut out, step, Some(e.position), &event, &frame(&t, Some(emitted)));
            }
        }
        TraceMode::Grow => {
            let mut g = GrowthState::new(seed.clone(), provider.clone(), CombineMode::Concat)?;
            let _ = writeln!(out, "# grow n={n}");
            out.push_str(HEADER);
            out.push('\n');
            row(&mut out, 1, None, "seed", &growth_frame(&g));
            for _ in 1..n {
                let (_, event) = g.grow_step_traced(None)?;
                let event = match event {
                    GrowthEvent::Created { index } => format!("create:{index}"),
                    GrowthEvent::Moved { indices } => {
                        let ids: Vec<String> = indices.iter().map(u32::to_string).collect();
                        format!("move:{}", ids.join(","))
                    }
                    GrowthEvent::None => "-".to_string(),
                };
                row(&mut out, g.total_hash_elements(), None, &event, &growth_frame(&g));
            }
            let t = g.finalize()?.into_traversal();
            row(&mut out, n, None, "finalize", &frame(&t, None));
        }
    }
    Ok(out)
}

fn setup_state(provider: &Provider, seed: &Digest, n: u64) -> Result<TraversalState> {
    let chain = FullChain::build(provider, seed, n, None, CombineMode::Concat)?;
    TraversalState::jakobsson_setup(&chain)
}

fn grow(provider: &Provider, seed: &Digest, n: u64) -> Result<GrowthState> {
    let mut g = GrowthState::new(seed.clone(), provider.clone(), CombineMode::Concat)?;
    for _ in 1..n {
        g.grow_step(None)?;
    }
    Ok(g)
}

fn frame(t: &TraversalState, emitted: Option<u64>) -> Frame<'_> {
    Frame {
        pebbles: t.pebbles(),
        span: t.span(),
        offset: t.offset(),
        emitted,
    }
}

fn growth_frame(g: &GrowthState) -> Frame<'_> {
    let span = 1u64 << g.exponent();
    Frame {
        pebbles: g.pebbles(),
        span,
        offset: span.saturating_sub(g.total_hash_elements()),
        emitted: None,
    }
}

/// Positions marked `o` in the `slots` column of a trace row.
pub fn marked_slots(row: &str) -> Vec<u64> {
    row.rsplit('\t')
        .next()
        .map(|s| {
            s.chars()
                .enumerate()
                .filter(|(_, c)| *c == 'o')
                .map(|(i, _)| i as u64 + 1)
                .collect()
        })
        .unwrap_or_default()
}
