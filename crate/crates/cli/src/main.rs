use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use joinery_cli::report::check_catalog;
use joinery_cli::script::Script;
use joinery_cli::simulate::{simulate, SimError};
use joinery_cli::default_spawn;
use joinery_core::pipeline::PipelineMode;
use joinery_core::session::{read_log, replay, ReplayError, SessionConfig};
use joinery_core::{Digest64, PartCatalog};
use joinery_server::discovery::{self, AnnounceTarget, DEFAULT_ANNOUNCE_PORT};
use joinery_server::{ServerConfig, ServerError, DEFAULT_LISTEN};

#[derive(Parser)]
#[command(name = "joinery", version, about = "Multi-user character assembly sessions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a session server.
    Serve(ServeArgs),
    /// Validate a catalog and report folds and part reuse.
    CheckCatalog {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Drive scripted clients against an in-process server.
    Simulate(SimulateArgs),
    /// Rebuild a session from its event log and print the digest.
    Replay(ReplayArgs),
    /// List sessions announcing on the LAN.
    Discover {
        #[arg(long, default_value_t = DEFAULT_ANNOUNCE_PORT)]
        port: u16,
        #[arg(long, default_value_t = 3.0)]
        seconds: f64,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = DEFAULT_LISTEN)]
    listen: SocketAddr,
    #[arg(long, default_value_t = DEFAULT_ANNOUNCE_PORT)]
    announce_port: u16,
    /// Send announcements here instead of the broadcast address.
    #[arg(long)]
    announce_addr: Option<SocketAddr>,
    #[arg(long)]
    no_announce: bool,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<PipelineMode>,
    /// Append-only NDJSON event log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    idle_timeout_secs: u64,
}

#[derive(Args)]
struct SimulateArgs {
    script: PathBuf,
    /// Overrides the script's catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Overrides the script's session.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "simulate.ndjson")]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Take catalog and session from a simulation script.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    verify: Option<String>,
}

enum Failure {
    Usage(String),
    Catalog(String),
    Bind(String),
    Mismatch(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Catalog(_) => 3,
            Failure::Bind(_) => 4,
            Failure::Mismatch(_) => 5,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m)
            | Failure::Catalog(m)
            | Failure::Bind(m)
            | Failure::Mismatch(m)
            | Failure::Runtime(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Serve(args) => serve(args),
        Cmd::CheckCatalog { path, json } => check(&path, json),
        Cmd::Simulate(args) => run_simulation(args),
        Cmd::Replay(args) => run_replay(args),
        Cmd::Discover { port, seconds } => run_discover(port, seconds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(format!("cannot start runtime: {e}")))
}

fn load_catalog(path: &Path) -> Result<Arc<PartCatalog>, Failure> {
    PartCatalog::load(path)
        .map(Arc::new)
        .map_err(|e| Failure::Catalog(e.to_string()))
}

fn load_session(
    path: Option<&Path>,
    fallback: Option<SessionConfig>,
    catalog: &PartCatalog,
) -> Result<SessionConfig, Failure> {
    let config = match (path, fallback) {
        (Some(p), _) => SessionConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        (None, Some(c)) => c,
        (None, None) => SessionConfig {
            spawn: default_spawn(catalog),
            ..SessionConfig::default()
        },
    };
    config
        .validate(catalog)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn serve(args: ServeArgs) -> Outcome {
    let catalog = load_catalog(&args.catalog)?;
    let mut session = load_session(args.config.as_deref(), None, &catalog)?;
    if let Some(mode) = args.mode {
        session.pipeline.mode = mode;
    }
    let announce = (!args.no_announce).then(|| match args.announce_addr {
        Some(addr) => AnnounceTarget {
            addr,
            interval: discovery::ANNOUNCE_INTERVAL,
        },
        None => AnnounceTarget::broadcast(args.announce_port),
    });
    let config = ServerConfig {
        listen: args.listen,
        announce,
        idle_timeout: Duration::from_secs(args.idle_timeout_secs),
        log_path: args.log.clone(),
        ..ServerConfig::default()
    };
    let name = session.session_name.clone();
    let mode = session.pipeline.mode;
    runtime()?.block_on(async move {
        let mut server = joinery_server::start(catalog, session, config)
            .await
            .map_err(|e| match e {
                ServerError::Bind { .. } => Failure::Bind(e.to_string()),
                ServerError::Log { .. } => Failure::Runtime(e.to_string()),
                other => Failure::Usage(other.to_string()),
            })?;
        println!(
            "joinery listening on {} (session {name:?}, pipeline {}, protocol {})",
            server.url(),
            match mode {
                PipelineMode::Mock => "mock",
                PipelineMode::Real => "real",
            },
            joinery_server::protocol::PROTOCOL_VERSION
        );
        let _ = std::io::stdout().flush();
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {
                server.shutdown().await;
                Ok(())
            }
            _ = server.wait() => Err(Failure::Runtime("server stopped unexpectedly".into())),
        }
    })
}

fn check(path: &Path, json: bool) -> Outcome {
    let catalog = load_catalog(path)?;
    let report = check_catalog(&catalog);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.render());
    }
    if report.all_foldable() {
        Ok(())
    } else {
        Err(Failure::Catalog(format!(
            "{} of {} characters do not fold",
            report.characters - report.foldable,
            report.characters
        )))
    }
}

fn run_simulation(args: SimulateArgs) -> Outcome {
    let script = Script::load(&args.script).map_err(|e| Failure::Usage(e.to_string()))?;
    let catalog_path = args
        .catalog
        .clone()
        .or_else(|| script.catalog.clone())
        .ok_or_else(|| Failure::Usage("no catalog: pass --catalog or set it in the script".into()))?;
    let catalog = load_catalog(&catalog_path)?;
    let session = load_session(args.config.as_deref(), script.session.clone(), &catalog)?;
    let report = runtime()?
        .block_on(simulate(catalog, session, &script, &args.out))
        .map_err(|e| match e {
            SimError::NotJoined { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        })?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        let s = &report.summary;
        println!("digest {}", report.digest);
        println!("events {}, users joined {}", s.events, s.users_joined);
        println!("cards minted {}, models activated {}", s.cards_minted, s.models_activated);
        println!(
            "splices ok {}, rejected {}; verifications failed {}",
            s.splices_ok, s.splices_rejected, s.verifications_failed
        );
        let errors: Vec<String> = s.errors.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "errors {}",
            if errors.is_empty() { "none".to_owned() } else { errors.join(" ") }
        );
        println!("log {}", args.out.display());
    }
    for failure in &report.failed_expectations {
        eprintln!("expect failed: {failure}");
    }
    if !report.diverged_clients.is_empty() {
        eprintln!("clients diverged from the server: {}", report.diverged_clients.join(", "));
    }
    if report.digest != report.replay_digest {
        eprintln!("log replays to {}, live digest {}", report.replay_digest, report.digest);
    }
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::Mismatch("simulation did not meet its expectations".into()))
    }
}

fn run_replay(args: ReplayArgs) -> Outcome {
    let script = match &args.script {
        Some(p) => Some(Script::load(p).map_err(|e| Failure::Usage(e.to_string()))?),
        None => None,
    };
    let catalog_path = args
        .catalog
        .clone()
        .or_else(|| script.as_ref().and_then(|s| s.catalog.clone()))
        .ok_or_else(|| Failure::Usage("no catalog: pass --catalog or --script".into()))?;
    let catalog = load_catalog(&catalog_path)?;
    let session = load_session(
        args.config.as_deref(),
        script.and_then(|s| s.session),
        &catalog,
    )?;
    let expected = match &args.verify {
        Some(d) => Some(
            d.parse::<Digest64>()
                .map_err(|e| Failure::Usage(e.to_string()))?,
        ),
        None => None,
    };
    let file = std::fs::File::open(&args.log)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.log.display())))?;
    let events = read_log(std::io::BufReader::new(file)).map_err(|e| Failure::Usage(e.to_string()))?;
    let world = replay(&catalog, &session, &events).map_err(|e| match e {
        ReplayError::CheckpointMismatch { .. } => Failure::Mismatch(e.to_string()),
        other => Failure::Usage(other.to_string()),
    })?;
    let digest = world.digest();
    println!("{digest}");
    match expected {
        Some(want) if want != digest => Err(Failure::Mismatch(format!(
            "digest {digest} does not match expected {want}"
        ))),
        _ => Ok(()),
    }
}

fn run_discover(port: u16, seconds: f64) -> Outcome {
    let window = Duration::from_secs_f64(seconds.max(0.0));
    let found = runtime()?
        .block_on(discovery::discover(SocketAddr::from(([0, 0, 0, 0], port)), window))
        .map_err(|e| Failure::Bind(format!("cannot listen on udp port {port}: {e}")))?;
    if found.is_empty() {
        println!("no sessions found");
    }
    for d in found {
        println!("{}\tws://{}", d.announce.session_name, d.addr);
    }
    Ok(())
}
