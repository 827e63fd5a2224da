// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use epiwatch_core::awareness::{choropleth_scores, indicator_scores, write_indicator_csv, write_map_csv};
use epiwatch_core::filter::parse_filter;
use epiwatch_core::kpi::compute_kpis;
use epiwatch_core::scoring::DateRange;
use epiwatch_core::Error;
use epiwatch_service::api::{self, classify};
use epiwatch_service::report::write_report;
use epiwatch_service::{ServiceConfig, Workspace};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "epiwatch", version, about = "Ranked monitoring of revisioned public-health streams")]
struct Cli {
    /// Service configuration file (TOML).
    #[arg(long, global = true, env = "EPIWATCH_CONFIG")]
    config: Option<PathBuf>,
    /// Store directory; overrides the config file and EPIWATCH_STORE.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add observation files (CSV or line-delimited JSON) to the store.
    Ingest {
        /// Install or replace the geo hierarchy first.
        #[arg(long)]
        geo: Option<PathBuf>,
        files: Vec<PathBuf>,
    },
    /// Score every stream as of a date and store the run.
    Run {
        #[arg(long)]
        as_of: NaiveDate,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
    /// Write the static top-k report and print its path.
    Report {
        #[arg(long)]
        as_of: NaiveDate,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print reviewer KPIs for a date range.
    Kpi {
        #[arg(long)]
        from: NaiveDate,
        #[arg(long)]
        to: NaiveDate,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Write a store's contents as delimited text to stdout.
    Dump {
        #[arg(value_enum)]
        what: DumpTarget,
        /// Run date for `results`, `map` and `indicators` (default: latest run).
        #[arg(long)]
        as_of: Option<NaiveDate>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DumpTarget {
    Observations,
    Results,
    Events,
    MetaEvents,
    Map,
    Indicators,
}

/// A failure with its exit code and machine name.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (status, kind) = classify(&e);
        let code = match status.as_u16() {
            404 => 3,
            400..=499 => 2,
            _ => 1,
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn config(cli: &Cli) -> Result<ServiceConfig, Failure> {
    let cfg = match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    let mut cfg = cfg.with_env(|name| std::env::var(name).ok());
    if let Some(store) = &cli.store {
        cfg.store = store.clone();
    }
    Ok(cfg)
}

fn open(cfg: &ServiceConfig) -> Result<Workspace, Failure> {
    Ok(Workspace::open(&cfg.store, cfg.scoring()?)?)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = config(&cli)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Ingest { geo, files } => {
            if let Some(geo) = geo {
                let h = Workspace::install_geo(&cfg.store, &geo)?;
                writeln!(out, "geo {} regions={}", geo.display(), h.len())?;
            }
            let ws = open(&cfg)?;
            for path in files {
                let file = std::fs::File::open(&path)?;
                let report = ws.ingest(std::io::BufReader::new(file))?;
                writeln!(
                    out,
                    "ingest {} inserted={} unchanged={} rejected={}",
                    path.display(),
                    report.inserted,
                    report.unchanged,
                    report.rejected_count()
                )?;
                for r in &report.rejected {
                    tracing::warn!(file = %path.display(), row = r.row, reason = %r.reason, "rejected row");
                }
            }
        }
        Command::Run { as_of } => {
            let ws = open(&cfg)?;
            let report = ws.run_daily(as_of)?;
            tracing::info!(run_id = %report.run_id, outcome = %report.outcome, "run stored");
            for s in &report.skipped {
                tracing::debug!(key = %s.key, reason = %s.reason, "skipped");
            }
            writeln!(
                out,
                "run as_of={} run_id={} streams={} points={} skipped={} wall_secs={:.3} outcome={}",
                report.as_of,
                report.run_id,
                report.streams_scored,
                report.points_scored,
                report.skipped.len(),
                report.wall_time.as_secs_f64(),
                report.outcome
            )?;
        }
        Command::Serve { listen } => {
            let mut cfg = cfg;
            if let Some(addr) = listen {
                cfg.listen = addr;
            }
            let ws = Arc::new(open(&cfg)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(api::serve(ws, cfg))?;
        }
        Command::Report { as_of, k, filter, out: path } => {
            let ws = open(&cfg)?;
            let filter = filter.as_deref().map(parse_filter).transpose()?;
            let path = path.unwrap_or_else(|| cfg.report_path.clone());
            write_report(&ws, as_of, k.unwrap_or(cfg.k_default), filter.as_ref(), &path)?;
            writeln!(out, "{}", path.display())?;
        }
        Command::Kpi { from, to, format } => {
            if from > to {
                return Err(Error::InvalidConfig(format!("--from {from} is after --to {to}")).into());
            }
            let ws = open(&cfg)?;
            let report = compute_kpis(&ws.triage().snapshot(), DateRange::new(from, to));
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &report).map_err(Error::from)?;
                    writeln!(out)?;
                }
                Format::Csv => report.write_csv(&mut out)?,
            }
        }
        Command::Dump { what, as_of } => {
            let ws = open(&cfg)?;
            match what {
                DumpTarget::Observations => ws.snapshot().dump(&mut out)?,
                DumpTarget::Events => ws.triage().write_events_csv(&mut out)?,
                DumpTarget::MetaEvents => ws.triage().write_meta_events_csv(&mut out)?,
                DumpTarget::Results => ws.run(as_of)?.results.write_csv(&mut out)?,
                DumpTarget::Map => {
                    let run = ws.run(as_of)?;
                    write_map_csv(&choropleth_scores(&run.results, ws.geo(), None, &cfg.map)?, &mut out)?
                }
                DumpTarget::Indicators => {
                    let run = ws.run(as_of)?;
                    write_indicator_csv(&indicator_scores(&run.results, ws.geo(), None, &cfg.map)?, &mut out)?
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // One line a script can parse: `error kind=<kind> code=<n> message=<json string>`.
            eprintln!(
                "error kind={} code={} message={}",
                f.kind,
                f.code,
                serde_json::Value::String(f.message)
            );
            ExitCode::from(f.code)
        }
    }
}
