use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pebblechain::custody::write_atomic;
use pebblechain::{
    trace, verify_disclosures, ChainState, CombineMode, CustodyLedger, CustodySession, Digest, DisclosureSet, Error,
    GrowthState, Registry, SessionMeta, TraceMode, Verdict,
};

const EXIT_USAGE: u8 = 2;
const EXIT_EXHAUSTED: u8 = 3;
const EXIT_TAMPER: u8 = 4;
const EXIT_INCOMPLETE: u8 = 5;

const STATE_DIR_ENV: &str = "PEBBLECHAIN_STATE_DIR";

/// Grow, disclose and verify hash chains with logarithmic storage.
#[derive(Parser)]
#[command(name = "pebblechain", version)]
struct Cli {
    /// Directory for snapshots and sessions. PEBBLECHAIN_STATE_DIR takes
    /// precedence when set.
    #[arg(long, global = true)]
    state_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a chain and write its snapshot.
    Grow {
        /// Seed in hex. Omit to keep growing an existing snapshot.
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        steps: u64,
        /// One evidence chunk per file, bound to successive steps in
        /// lexicographic file order.
        #[arg(long = "evidence-file")]
        evidence_files: Vec<PathBuf>,
        #[arg(long, default_value = "mix64-test")]
        provider: String,
        #[arg(long, default_value = "concat")]
        mode: CombineMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Close growth and prepare the snapshot for disclosure.
    Finalize {
        #[arg(long)]
        state: PathBuf,
    },
    /// Disclose the next elements, one hex digest per line.
    Emit {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Print pebble placement as a tab-separated trace.
    Trace {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        mode: TraceMode,
        #[arg(long, default_value = "0123456789abcdef")]
        seed: String,
        #[arg(long, default_value = "mix64-test")]
        provider: String,
    },
    /// Open a custody session.
    Open {
        #[arg(long)]
        session: String,
        /// Comma-separated provider names.
        #[arg(long, default_value = "sha1,sha256,sha3-256", value_delimiter = ',')]
        providers: Vec<String>,
        /// Seed material in hex.
        #[arg(long, default_value = "")]
        seed_material: String,
        #[arg(long, default_value_t = 1)]
        tick_interval: u64,
        #[arg(long, default_value = "concat")]
        mode: CombineMode,
        /// Accept fewer than three providers.
        #[arg(long)]
        allow_below_quorum: bool,
    },
    /// Append evidence chunks. Without --file, reads stdin as records framed
    /// by an 8-byte little-endian length.
    Record {
        #[arg(long)]
        session: String,
        /// Tick of the first chunk; later chunks take the following ticks.
        #[arg(long)]
        tick: Option<u64>,
        #[arg(long = "file")]
        files: Vec<PathBuf>,
    },
    /// Append the close record and finalize every chain.
    Close {
        #[arg(long)]
        session: String,
    },
    /// Record a placeholder peer attestation.
    Attest {
        #[arg(long)]
        session: String,
    },
    /// Disclose further elements of every chain into the session's
    /// disclosure file.
    Disclose {
        #[arg(long)]
        session: String,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Check disclosures against a ledger; exit 0 pass, 4 tamper,
    /// 5 incomplete.
    Verify {
        #[arg(long)]
        session: String,
        /// Defaults to the session's ledger.
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Defaults to the session's disclosure file.
        #[arg(long)]
        disclosures: Option<PathBuf>,
        /// Print tab-separated lines instead of a table.
        #[arg(long)]
        lines: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let state_dir = std::env::var_os(STATE_DIR_ENV)
        .map(PathBuf::from)
        .or(cli.state_dir)
        .unwrap_or_else(|| PathBuf::from("."));
    match run(cli.command, &state_dir) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Core(Error::Exhausted)) => {
            eprintln!("pebblechain: chain exhausted");
            ExitCode::from(EXIT_EXHAUSTED)
        }
        Err(Failure::Core(e)) => {
            eprintln!("pebblechain: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("pebblechain: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(command: Command, state_dir: &Path) -> CmdResult {
    let registry = Registry::standard();
    match command {
        Command::Grow {
            seed,
            steps,
            evidence_files,
            provider,
            mode,
            out,
        } => {
            let path = state_dir.join(out);
            let _lock = lock(&path)?;
            let mut state = match seed {
                Some(hex) => {
                    let provider = registry.get(&provider)?;
                    let seed = Digest::from_hex(&hex)?;
                    ChainState::Growing(GrowthState::new(seed, provider, mode)?)
                }
                None => load_state(&path, &registry)?,
            };
            let evidence = read_sorted(&evidence_files)?;
            if evidence.len() as u64 > steps {
                return Err(Failure::Usage(format!(
                    "{} evidence files for {steps} steps",
                    evidence.len()
                )));
            }
            let g = state.growing_mut()?;
            for i in 0..steps as usize {
                g.grow_step(evidence.get(i).map(Vec::as_slice))?;
            }
            write_atomic(&path, &state.to_text())?;
            println!("total {} pebbles {}", state.total_hash_elements(), state.live_pebbles());
            Ok(0)
        }
        Command::Finalize { state } => {
            let path = state_dir.join(state);
            let _lock = lock(&path)?;
            let mut s = load_state(&path, &registry)?;
            s.finalize()?;
            write_atomic(&path, &s.to_text())?;
            println!("total {} pebbles {}", s.total_hash_elements(), s.live_pebbles());
            Ok(0)
        }
        Command::Emit { state, count } => {
            let path = state_dir.join(state);
            let _lock = lock(&path)?;
            let mut s = load_state(&path, &registry)?;
            let t = s.exposing_mut()?;
            let mut out = io::stdout().lock();
            let mut result = Ok(0);
            for _ in 0..count {
                match t.step() {
                    Ok(e) => writeln!(out, "{}", e.value)?,
                    Err(e) => {
                        result = Err(Failure::Core(e));
                        break;
                    }
                }
            }
            out.flush()?;
            if count > 0 {
                write_atomic(&path, &s.to_text())?;
            }
            result
        }
        Command::Trace {
            n,
            mode,
            seed,
            provider,
        } => {
            let provider = registry.get(&provider)?;
            let text = trace::render(mode, &provider, &Digest::from_hex(&seed)?, n)?;
            io::stdout().write_all(text.as_bytes())?;
            Ok(0)
        }
        Command::Open {
            session,
            providers,
            seed_material,
            tick_interval,
            mode,
            allow_below_quorum,
        } => {
            let dir = state_dir.join(&session);
            if dir.join("session").exists() {
                return Err(Failure::Usage(format!("session {session} already exists")));
            }
            let material = hex::decode(&seed_material).map_err(|e| Failure::Usage(format!("seed material: {e}")))?;
            let providers = providers.iter().map(|p| registry.get(p)).collect::<Result<Vec<_>, _>>()?;
            let s = CustodySession::open(&session, providers, &material, tick_interval, mode, allow_below_quorum)?;
            fs::create_dir_all(&dir)?;
            let _lock = lock(&dir.join("session"))?;
            s.save(&dir)?;
            if s.below_quorum() {
                eprintln!("pebblechain: warning: session {session} runs below the three-provider quorum");
            }
            println!("opened {session} providers {}", names(&s));
            Ok(0)
        }
        Command::Record { session, tick, files } => with_session(state_dir, &session, &registry, |s| {
            let chunks = if files.is_empty() {
                read_framed(io::stdin().lock())?
            } else {
                read_sorted(&files)?
            };
            let first = tick.unwrap_or_else(|| s.next_tick());
            for (tick, chunk) in (first..).zip(&chunks) {
                let digests = s.record_evidence(tick, chunk)?;
                let hexes: Vec<String> = digests.iter().map(Digest::to_hex).collect();
                println!("{tick}\t{}", hexes.join(","));
            }
            Ok(0)
        }),
        Command::Close { session } => with_session(state_dir, &session, &registry, |s| {
            s.close()?;
            println!("closed {} total {}", s.session_id(), s.total_hash_elements());
            Ok(0)
        }),
        Command::Attest { session } => with_session(state_dir, &session, &registry, |s| {
            if let pebblechain::LedgerEntry::Attestation { tick, bytes } = s.attest_peers() {
                println!("attest\t{tick}\t{}", hex::encode(bytes));
            }
            Ok(0)
        }),
        Command::Disclose { session, count } => {
            let dir = state_dir.join(&session);
            let path = dir.join("disclosures");
            with_session(state_dir, &session, &registry, |s| {
                let mut set = if path.exists() {
                    DisclosureSet::from_text(&fs::read_to_string(&path)?)?
                } else {
                    DisclosureSet::new(s.session_id())?
                };
                let total = s.total_hash_elements();
                let mut exhausted = false;
                for p in s.providers().to_vec() {
                    for _ in 0..count {
                        match s.disclose_next(p.name()) {
                            Ok((q, d)) => {
                                println!("{}\t{q}\t{d}", p.name());
                                set.push(p.name(), total, q, d)?;
                            }
                            Err(Error::Exhausted) => {
                                exhausted = true;
                                break;
                            }
                            Err(e) => return Err(e.into()),
                        }
                    }
                }
                write_atomic(&path, &set.to_text())?;
                if exhausted {
                    eprintln!("pebblechain: chain exhausted");
                    return Ok(EXIT_EXHAUSTED);
                }
                Ok(0)
            })
        }
        Command::Verify {
            session,
            ledger,
            disclosures,
            lines,
        } => {
            let dir = state_dir.join(&session);
            let meta = SessionMeta::read(&dir)?;
            let providers = meta.resolve(&registry)?;
            let ledger = ledger.unwrap_or_else(|| dir.join("ledger"));
            let disclosures = disclosures.unwrap_or_else(|| dir.join("disclosures"));
            let ledger = CustodyLedger::from_text(&fs::read_to_string(ledger)?)?;
            let set = DisclosureSet::from_text(&fs::read_to_string(disclosures)?)?;
            let t = verify_disclosures(&providers, meta.mode, &ledger, &set)?;
            let text = if lines { t.render_lines() } else { t.render_table() };
            io::stdout().write_all(text.as_bytes())?;
            Ok(match t.verdict {
                Verdict::Pass => 0,
                Verdict::Tamper => EXIT_TAMPER,
                Verdict::Incomplete => EXIT_INCOMPLETE,
            })
        }
    }
}

fn names(s: &CustodySession) -> String {
    s.providers().iter().map(|p| p.name()).collect::<Vec<_>>().join(",")
}

/// Run `f` on a loaded session under its lock and save it when `f` succeeds.
fn with_session(
    state_dir: &Path,
    session: &str,
    registry: &Registry,
    f: impl FnOnce(&mut CustodySession) -> CmdResult,
) -> CmdResult {
    let dir = state_dir.join(session);
    if !dir.join("session").exists() {
        return Err(Failure::Usage(format!("no session {session} in {}", state_dir.display())));
    }
    let _lock = lock(&dir.join("session"))?;
    let mut s = CustodySession::load(&dir, registry)?;
    let code = f(&mut s)?;
    s.save(&dir)?;
    Ok(code)
}

/// Exclusive advisory lock on `<path>.lock`, held until the file is dropped.
fn lock(path: &Path) -> io::Result<File> {
    let mut name = path.as_os_str().to_owned();
    name.push(".lock");
    let f = File::options().create(true).truncate(false).write(true).open(PathBuf::from(name))?;
    f.lock()?;
    Ok(f)
}

fn load_state(path: &Path, registry: &Registry) -> Result<ChainState, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(ChainState::from_text(&text, registry)?)
}

fn read_sorted(files: &[PathBuf]) -> io::Result<Vec<Vec<u8>>> {
    let mut sorted = files.to_vec();
    sorted.sort();
    sorted.iter().map(fs::read).collect()
}

fn read_framed(mut r: impl Read) -> Result<Vec<Vec<u8>>, Failure> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut chunks = Vec::new();
    let mut rest = buf.as_slice();
    while !rest.is_empty() {
        let Some((len, tail)) = rest.split_first_chunk::<8>() else {
            return Err(Failure::Usage("truncated length prefix on stdin".into()));
        };
        let len = u64::from_le_bytes(*len) as usize;
        if tail.len() < len {
            return Err(Failure::Usage("truncated evidence record on stdin".into()));
        }
        chunks.push(tail[..len].to_vec());
        rest = &tail[len..];
    }
    Ok(chunks)
}
