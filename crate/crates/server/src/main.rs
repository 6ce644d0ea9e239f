use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kfs_core::eval::{read_log, Evaluator, DEFAULT_K_LIST, EVAL_PAGE_SIZE};
use kfs_core::ingest::{build_index, IngestManifest, LoadedIndex};
use kfs_core::query::RankerTriple;
use kfs_server::{router, AppState, Service};
use log::{error, info};

#[derive(Parser)]
#[command(name = "kfs", version, about = "Keyframe search: build an index, serve it, replay query logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index directory from an ingest manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace an index already present at `--out`.
        #[arg(long)]
        overwrite: bool,
    },
    /// Serve the /v1 HTTP API.
    Serve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Objects offered on the canvas palette.
        #[arg(long, default_value_t = kfs_server::DEFAULT_SHORTLIST)]
        shortlist: usize,
    },
    /// Query-log evaluation.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Replay a log under ranker triples and rank them by MRR.
    Sweep {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_LIST)]
        k: Vec<usize>,
        /// JSON report; a text table is written next to it with a `.txt` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = EVAL_PAGE_SIZE)]
        page_size: usize,
        /// Comma-separated triples such as `NormTF-BM25-TF`; all 64 by default.
        #[arg(long, value_delimiter = ',')]
        triples: Vec<RankerTriple>,
    },
}

type Failure = Box<dyn std::error::Error>;

fn ingest(manifest: &Path, out: &Path, overwrite: bool) -> Result<(), Failure> {
    let manifest = IngestManifest::load(manifest)?;
    let report = build_index(&manifest, out, overwrite)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

async fn serve(index: PathBuf, host: String, port: u16, shortlist: usize) -> Result<(), Failure> {
    let state = AppState::loading();
    let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
    info!("listening on {}", listener.local_addr()?);
    let loader = state.clone();
    tokio::task::spawn_blocking(move || match Service::open(&index) {
        Ok(service) => {
            info!("index {} loaded", index.display());
            loader.set(service.with_shortlist(shortlist));
        }
        Err(e) => error!("cannot load {}: {e}", index.display()),
    });
    axum::serve(listener, router(state)).await?;
    Ok(())
}

fn sweep(
    index: &Path,
    log: &Path,
    k: &[usize],
    out: Option<&Path>,
    page_size: usize,
    triples: Vec<RankerTriple>,
) -> Result<(), Failure> {
    let loaded = LoadedIndex::open(index)?;
    let engine = loaded.engine();
    let reader = std::io::BufReader::new(fs::File::open(log)?);
    let queries = read_log(reader)?;
    let triples = if triples.is_empty() { RankerTriple::all() } else { triples };
    let report = Evaluator::new(&engine).with_page_size(page_size).sweep(&queries, &triples, k);
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = out {
        fs::write(out, serde_json::to_vec_pretty(&report)?)?;
        fs::write(out.with_extension("txt"), text)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { manifest, out, overwrite } => ingest(&manifest, &out, overwrite),
        Command::Serve { index, port, host, shortlist } => tokio::runtime::Runtime::new()
            .map_err(Failure::from)
            .and_then(|rt| rt.block_on(serve(index, host, port, shortlist))),
        Command::Eval { command: EvalCommand::Sweep { index, log, k, out, page_size, triples } } => {
            sweep(&index, &log, &k, out.as_deref(), page_size, triples)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
