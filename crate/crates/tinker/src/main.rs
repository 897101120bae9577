use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use tinker::{router, spawn_ticker, AppState, Config, SessionLimits, SystemClock};
use tinker_analysis::text::Stopwords;
use tinker_analysis::{analyze, AnalysisOptions, ManualAnnotations};
use tinker_core::graph::enumerate_paths;
use tinker_core::scaffold::audit_session;
use tinker_core::session::{SessionKind, SessionStatus, Speaker};
use tinker_core::store::{FileStore, Store};
use tinker_core::{Condition, Session, SessionConfig, SessionEvent, SessionLog};
use tinker_sim::{run_persona, Persona};

#[derive(Parser)]
#[command(name = "tinker", version, about = "Co-creative storytelling sessions with tangible tokens")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CondArg {
    Structured,
    Generic,
    Both,
}

impl CondArg {
    fn conditions(self) -> Vec<Condition> {
        match self {
            CondArg::Structured => vec![Condition::Structured],
            CondArg::Generic => vec![Condition::Generic],
            CondArg::Both => Condition::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Bearer token; falls back to TINKER_TOKEN.
        #[arg(long)]
        token: Option<String>,
    },
    /// Play a session in the terminal. Type what the child says; `/scan
    /// Kind:Value` scans a toy and `/quit` leaves.
    Play {
        #[arg(long, value_enum, default_value = "structured")]
        condition: CondArg,
        #[arg(long, default_value = "local")]
        profile: String,
        /// Run the warm-up script instead of a full session.
        #[arg(long)]
        practice: bool,
    },
    /// Play simulated children and write their logs.
    Simulate {
        /// Bundled persona name or a persona TOML file.
        #[arg(long, default_value = "cooperative")]
        persona: String,
        #[arg(long, value_enum, default_value = "both")]
        condition: CondArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value = "sim-logs")]
        out: PathBuf,
    },
    /// Check the phase scripts and schedules.
    ValidateScripts {
        #[arg(long)]
        scripts: Option<PathBuf>,
        #[arg(long)]
        conditions: Option<PathBuf>,
    },
    /// Descriptive statistics, coding and uptake over a directory of logs.
    Analyze {
        dir: PathBuf,
        #[arg(long, default_value_t = tinker_analysis::uptake::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// One stopword per line, replacing the bundled list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// CSV of manual codes: session_id, turn_index, functions.
        #[arg(long)]
        manual: Option<PathBuf>,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => match Config::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => Config::default(),
    };
    let result = match cli.command {
        Command::Serve { bind, data_dir, token } => serve(config, bind, data_dir, token),
        Command::Play {
            condition,
            profile,
            practice,
        } => play(&config, condition, &profile, practice),
        Command::Simulate {
            persona,
            condition,
            seed,
            count,
            out,
        } => simulate(&config, &persona, condition, seed, count, &out),
        Command::ValidateScripts { scripts, conditions } => validate(config, scripts, conditions),
        Command::Analyze {
            dir,
            threshold,
            stopwords,
            manual,
            out,
        } => run_analysis(&dir, threshold, stopwords, manual, &out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(mut config: Config, bind: Option<String>, data_dir: Option<PathBuf>, token: Option<String>) -> Result<ExitCode> {
    if let Some(b) = bind {
        config.bind = b;
    }
    if let Some(d) = data_dir {
        config.data_dir = d;
    }
    let token = token.or_else(|| std::env::var("TINKER_TOKEN").ok()).or(config.auth_token.clone());
    if token.is_none() {
        tracing::warn!("no bearer token configured; the API is open");
    }
    let resources = config.resources()?;
    // The remote client blocks, so it is built and dropped outside the runtime.
    let narrator = config.narrator()?;
    let store: Arc<dyn Store> = Arc::new(FileStore::open(&config.data_dir)?);
    let app = Arc::new(
        AppState::new(store, resources, narrator.clone(), Arc::new(SystemClock))
            .with_token(token)
            .with_limits(SessionLimits {
                pause_ms: config.pause_ms,
                idle_timeout_ms: config.idle_timeout_ms,
                max_duration_ms: config.max_duration_ms,
            }),
    );
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.bind).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        let _ticker = spawn_ticker(app.clone(), Duration::from_millis(config.tick_ms));
        axum::serve(listener, router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, Box<dyn std::error::Error>>(())
    })?;
    drop(runtime);
    drop(narrator);
    Ok(ExitCode::SUCCESS)
}

fn print_agent(session: &Session, from: usize) -> usize {
    let turns = &session.state().transcript;
    for t in &turns[from..] {
        if t.speaker == Speaker::Agent {
            println!("tinker> {}", t.text);
        }
    }
    turns.len()
}

fn play(config: &Config, condition: CondArg, profile: &str, practice: bool) -> Result<ExitCode> {
    let condition = *condition.conditions().first().ok_or("pick one condition")?;
    let store = FileStore::open(&config.data_dir)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let mut sc = SessionConfig::new(&id, profile, condition, 0);
    sc.pause_ms = config.pause_ms;
    if practice {
        sc.kind = SessionKind::Practice;
    }
    let (mut session, _) = Session::start(sc, config.resources()?, config.narrator()?)?;
    let mut shown = print_agent(&session, 0);
    // A synthetic clock: every line is one complete turn.
    let mut clock = 0u64;
    let stdin = std::io::stdin();
    loop {
        clock += 1_000;
        session.ingest(SessionEvent::speech_ended(clock))?;
        if session.state().status != SessionStatus::Active {
            break;
        }
        print!("child> ");
        std::io::stdout().flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim();
        clock += 1_000;
        if line == "/quit" {
            break;
        } else if let Some(payload) = line.strip_prefix("/scan ") {
            session.ingest(SessionEvent::scan(clock, payload.trim()))?;
        } else if !line.is_empty() {
            session.ingest(SessionEvent::utterance(clock, line))?;
            clock += config.pause_ms;
            session.finalize(clock)?;
        }
        shown = print_agent(&session, shown);
        store.save(session.log())?;
    }
    if session.state().status == SessionStatus::Finished {
        if let Some(story) = session.complete(clock + 1)? {
            println!("\n{}", story.text);
        }
    }
    store.save(session.log())?;
    println!("log saved to {}", store.path_for(&id).display());
    Ok(ExitCode::SUCCESS)
}

fn simulate(config: &Config, persona: &str, condition: CondArg, seed: u64, count: u64, out: &PathBuf) -> Result<ExitCode> {
    let persona = match Persona::bundled(persona) {
        Ok(p) => p,
        Err(_) => Persona::load(std::path::Path::new(persona))?,
    };
    let resources = config.resources()?;
    let store = FileStore::open(out)?;
    let mut failed = 0;
    for c in condition.conditions() {
        for s in seed..seed + count {
            let log = run_persona(&persona, c, &resources, s)?;
            let audit = if log.is_finished() {
                match audit_session(&log, &resources.schedules) {
                    Ok(r) if r.passed() => "audit ok",
                    _ => {
                        failed += 1;
                        "audit FAILED"
                    }
                }
            } else {
                "abandoned"
            };
            store.save(&log)?;
            println!("{} {} turns, {audit}", log.session_id(), log.turns().count());
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn validate(mut config: Config, scripts: Option<PathBuf>, conditions: Option<PathBuf>) -> Result<ExitCode> {
    if scripts.is_some() {
        config.scripts_dir = scripts;
    }
    if conditions.is_some() {
        config.conditions_dir = conditions;
    }
    let res = config.resources()?;
    let mut bad = 0;
    for named in res.scripts.iter() {
        let paths = enumerate_paths(&named.script).map(|p| p.len());
        println!("{}: {} paths", named.file, paths.map_or_else(|e| e.to_string(), |n| n.to_string()));
    }
    for (file, d) in res.scripts.validate() {
        println!("{file}: {d:?}");
        bad += 1;
    }
    for c in Condition::ALL {
        let missing = res.scripts.missing_phases(c);
        if !missing.is_empty() {
            println!("{c}: missing phases {missing:?}");
            bad += 1;
        }
        let probe = SessionConfig::new("validate", "validate", c, 0);
        if let Err(e) = Session::start(probe, res.clone(), Arc::new(tinker_core::narrator::StubNarrator)) {
            println!("{c}: {e}");
            bad += 1;
        }
    }
    println!("{}", if bad == 0 { "all scripts valid" } else { "problems found" });
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_analysis(
    dir: &PathBuf,
    threshold: f64,
    stopwords: Option<PathBuf>,
    manual: Option<PathBuf>,
    out: &PathBuf,
) -> Result<ExitCode> {
    let store = FileStore::open(dir)?;
    let logs: Vec<SessionLog> = store
        .session_ids()?
        .iter()
        .map(|id| store.load(id))
        .collect::<std::result::Result<_, _>>()?;
    let options = AnalysisOptions {
        threshold,
        stopwords: match stopwords {
            Some(p) => Stopwords::load(&p)?,
            None => Stopwords::bundled(),
        },
        manual: manual.map(|p| ManualAnnotations::load(&p)).transpose()?,
    };
    let report = analyze(&logs, &options)?;
    let files = report.write_to(out)?;
    print!("{}", report.to_markdown());
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}
