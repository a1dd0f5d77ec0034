use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pipewright_agents::{confirm, mentalist_turn, run_after_confirm, Session, Status};
use pipewright_core::ir::dot::parse_pipeline_dot;
use pipewright_core::ir::json::{parse_pipeline_json, serialize_pipeline_json};
use pipewright_core::ir::{FunctionCatalog, Pipeline};
use pipewright_core::metrics::{evaluate_dataset, exact_match, ged, Hooks, MatchConfig};
use pipewright_core::par::Exec;
use pipewright_core::synthesis::{
    omitted_details, read_dataset, read_generated, synthesize_batch, template_queries,
    write_dataset, AmbiguityLevel, DatasetEntry, Provenance, SynthesisConfig,
};
use pipewright_core::validator::{apply_mechanical_fixes, validate};
use pipewright_gateway::{Gateway, Transcript};
use pipewright_service::{router, AppState, ServiceConfig, SessionStore};

#[derive(Parser)]
#[command(
    name = "pipewright",
    version,
    about = "Build, check and score AI pipelines"
)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "PIPEWRIGHT_CONFIG")]
    config: Option<PathBuf>,
    /// Function catalog JSON (overrides the config file).
    #[arg(long, global = true, env = "PIPEWRIGHT_CATALOG")]
    catalog: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a pipeline (.json or .dot). Exits 0 iff it is valid.
    Validate {
        file: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Apply mechanical fixes. Exits 0 iff the result is valid.
    Fix {
        file: PathBuf,
        /// Where to write the fixed pipeline; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exact match of a generated pipeline against a reference.
    Em {
        generated: PathBuf,
        reference: PathBuf,
    },
    /// Graph edit distance from a generated pipeline to a reference.
    Ged {
        generated: PathBuf,
        reference: PathBuf,
        /// Search time budget in milliseconds.
        #[arg(long, default_value_t = 10_000)]
        budget_ms: u64,
        /// Print the full result, edit script included, as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Score generated pipelines against a dataset and write the report.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        budget_ms: u64,
        /// Score pairs one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Synthesize reference pipelines with template queries as a dataset.
    Synth {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Function nodes per pipeline range over 1..=max-nodes.
        #[arg(long, default_value_t = 8)]
        max_nodes: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the whole agent loop for one query and write the pipeline.
    Build {
        #[arg(long)]
        query: String,
        /// Further user turns, sent in order while the clarifier asks.
        #[arg(long = "answer")]
        answers: Vec<String>,
        /// Replay this transcript instead of calling a live endpoint.
        #[arg(long, env = "PIPEWRIGHT_TRANSCRIPT")]
        transcript: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("PIPEWRIGHT_LOG"))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut config = match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    }
    .with_env();
    if cli.catalog.is_some() {
        config.catalog = cli.catalog.clone();
    }
    let catalog = config.load_catalog()?;
    match cli.command {
        Command::Validate { file, json } => {
            let p = read_pipeline(&file, &catalog)?;
            let report = validate(&p, &catalog);
            if json {
                println!("{}", report.to_json());
            } else if report.is_valid {
                println!("{}: valid", file.display());
            } else {
                for issue in &report.issues {
                    println!("{issue}");
                }
            }
            Ok(report.is_valid)
        }
        Command::Fix { file, output } => {
            let p = read_pipeline(&file, &catalog)?;
            let outcome = apply_mechanical_fixes(&p, &validate(&p, &catalog), &catalog);
            for fix in &outcome.applied {
                eprintln!("fixed {} at {}: {}", fix.code, fix.location, fix.action);
            }
            for issue in &outcome.report.issues {
                eprintln!("remaining: {issue}");
            }
            write_out(
                output.as_deref(),
                &serialize_pipeline_json(&outcome.pipeline),
            )?;
            Ok(outcome.report.is_valid)
        }
        Command::Em {
            generated,
            reference,
        } => {
            let g = read_pipeline(&generated, &catalog)?;
            let r = read_pipeline(&reference, &catalog)?;
            let outcome = exact_match(&g, &r, &MatchConfig::default());
            println!("{}", outcome.matched);
            Ok(true)
        }
        Command::Ged {
            generated,
            reference,
            budget_ms,
            json,
        } => {
            let g = read_pipeline(&generated, &catalog)?;
            let r = read_pipeline(&reference, &catalog)?;
            let cfg = MatchConfig::default().with_time_budget(Duration::from_millis(budget_ms));
            let result = ged(&g, &r, &cfg);
            if json {
                println!("{}", serde_json::to_string_pretty(&result)?);
            } else {
                println!("distance {}", result.distance);
                println!("normalized {:.4}", result.normalized);
                if result.timed_out {
                    println!("timed out: distance is an upper bound");
                }
            }
            Ok(true)
        }
        Command::Eval {
            dataset,
            generated,
            output,
            budget_ms,
            sequential,
        } => {
            let entries = read_dataset(&read(&dataset)?, &catalog)
                .with_context(|| dataset.display().to_string())?;
            let gens = read_generated(&read(&generated)?, &catalog)
                .with_context(|| generated.display().to_string())?;
            let cfg = MatchConfig::default().with_time_budget(Duration::from_millis(budget_ms));
            let exec = if sequential {
                Exec::Sequential
            } else {
                Exec::default()
            };
            let report = evaluate_dataset(&entries, &gens, &cfg, Hooks::offline(), exec)?;
            write_out(output.as_deref(), &report.to_json())?;
            eprintln!(
                "{} pairs: exact match {:.1}%, graph edit distance {:.1}%",
                report.pairs, report.exact_match_pct, report.ged_pct
            );
            Ok(true)
        }
        Command::Synth {
            count,
            seed,
            max_nodes,
            output,
        } => {
            if max_nodes == 0 {
                bail!("--max-nodes must be at least 1");
            }
            let entries = synthesize(count, seed, max_nodes, &catalog)?;
            write_out(output.as_deref(), &write_dataset(&entries))?;
            Ok(true)
        }
        Command::Build {
            query,
            answers,
            transcript,
            output,
        } => {
            let gateway = match transcript.or(config.transcript.clone()) {
                Some(path) => Gateway::scripted(Transcript::load(&path)?),
                None => Gateway::new(
                    Arc::new(config.gateway.http_backend()?),
                    config.gateway.models.clone(),
                )
                .with_sampling(config.gateway.temperature, config.gateway.max_tokens),
            };
            build(
                &query,
                &answers,
                &gateway,
                &catalog,
                &config,
                output.as_deref(),
            )
        }
        Command::Serve { bind } => {
            if let Some(b) = bind {
                config.bind = b;
            }
            serve(config, catalog)?;
            Ok(true)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_pipeline(path: &Path, catalog: &FunctionCatalog) -> Result<Pipeline> {
    let text = read(path)?;
    let parsed = if path.extension().and_then(|e| e.to_str()) == Some("dot") {
        parse_pipeline_dot(&text, catalog)
    } else {
        parse_pipeline_json(&text, catalog)
    };
    parsed.with_context(|| path.display().to_string())
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Pipelines with 1..=max_nodes function nodes in turn, each with its own
/// seed. The ambiguity level counts the details the ambiguous template
/// query leaves out.
fn synthesize(
    count: usize,
    seed: u64,
    max_nodes: usize,
    catalog: &FunctionCatalog,
) -> Result<Vec<DatasetEntry>> {
    let cfgs: Vec<SynthesisConfig> = (0..count)
        .map(|i| SynthesisConfig::new(1 + i % max_nodes, seed.wrapping_add(i as u64)))
        .collect();
    let pipelines = synthesize_batch(&cfgs, catalog, Exec::default())?;
    Ok(pipelines
        .into_iter()
        .enumerate()
        .map(|(i, reference)| {
            let q = template_queries(&reference);
            let ambiguity_level = match omitted_details(&q.specification).len() {
                0 => AmbiguityLevel::Unambiguous,
                1 => AmbiguityLevel::Ambiguous,
                _ => AmbiguityLevel::VeryAmbiguous,
            };
            DatasetEntry {
                id: format!("synth-{seed}-{i:04}"),
                ambiguous_query: q.ambiguous_query,
                clear_query: q.clear_query,
                specification: q.specification,
                reference,
                ambiguity_level,
                provenance: Provenance::Synthetic,
            }
        })
        .collect())
}

/// Runs the query and answers through the clarifier, confirms the refined
/// query and builds. Succeeds iff the session ends done.
fn build(
    query: &str,
    answers: &[String],
    gateway: &Gateway,
    catalog: &FunctionCatalog,
    config: &ServiceConfig,
    output: Option<&Path>,
) -> Result<bool> {
    let agents = config.agent_config();
    let registry = config.load_registry()?;
    let mut session = Session::new("cli");
    let mut turns = std::iter::once(query).chain(answers.iter().map(String::as_str));
    loop {
        let Some(text) = turns.next() else {
            bail!("the clarifier still has questions; pass more --answer values");
        };
        let reply = mentalist_turn(&mut session, text, Vec::new(), gateway, &agents)?;
        eprintln!("assistant: {}", reply.reply);
        if reply.refined_query.is_some() {
            break;
        }
    }
    confirm(&mut session)?;
    let outcome = run_after_confirm(&mut session, gateway, catalog, &registry, &agents)?;
    eprintln!(
        "{} after {} iteration(s){}",
        session.status,
        outcome.iterations,
        if outcome.result.degraded {
            ", degraded"
        } else {
            ""
        }
    );
    write_out(output, &serialize_pipeline_json(&outcome.result.pipeline))?;
    Ok(session.status == Status::Done)
}

fn serve(config: ServiceConfig, catalog: FunctionCatalog) -> Result<()> {
    let gateway = match &config.transcript {
        Some(path) => Gateway::scripted(Transcript::load(path)?),
        None => Gateway::new(
            Arc::new(config.gateway.http_backend()?),
            config.gateway.models.clone(),
        )
        .with_sampling(config.gateway.temperature, config.gateway.max_tokens),
    };
    let state = AppState {
        store: Arc::new(SessionStore::open(&config.data_dir)?),
        gateway,
        catalog: Arc::new(catalog),
        registry: Arc::new(config.load_registry()?),
        agents: config.agent_config(),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.bind)
            .await
            .with_context(|| format!("binding {}", config.bind))?;
        tracing::info!(addr = %config.bind, sessions = state.store.len(), "serving");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
