use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cruise_core::clock::SystemClock;
use cruise_core::config::Config;
use cruise_core::ingest::{harvest_all, Harvester};
use cruise_core::metrics::AnnotationMatrix;
use cruise_core::pipeline::{select_sample, RunReport, SampleSpec, Stage};
use cruise_core::review::{serve, ReviewService};
use cruise_core::store::{Entity, ExportFormat, Store, StoreOptions};

#[derive(Parser)]
#[command(name = "cruise", version, about = "Mine acceptance criteria for user stories from issue trackers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the TOML config.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sampled user stories.
    #[arg(long)]
    stories: Option<usize>,
    /// Number of sampled preprocessed issues.
    #[arg(long)]
    issues: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricsFormat {
    Text,
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Download issues from the configured trackers.
    Harvest(ConfigArg),
    /// Clean harvested issues and print downloaded vs remaining per tracker.
    Preprocess(ConfigArg),
    /// Import user stories from CSV (id, project, text, acceptance_criteria, language).
    ImportStories {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        file: PathBuf,
    },
    /// Match sampled stories and issues with the backend ensemble.
    Match(RunArgs),
    /// Generate criteria for matched pairs.
    Generate(RunArgs),
    /// Assess generated criteria.
    Assess(RunArgs),
    /// Match, generate and assess.
    Run(RunArgs),
    /// Print counts for the configured sample.
    Report {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Export an entity as CSV or JSON lines.
    Export {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        entity: String,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agreement statistics over an annotation CSV (item_id, rater_id, decision).
    Metrics {
        #[arg(long)]
        annotations: PathBuf,
        /// Approvals needed for consensus acceptance.
        #[arg(long, default_value_t = 3)]
        threshold: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: MetricsFormat,
    },
    /// Serve the review API and UI.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

fn load(config: &Path) -> Result<(Config, Arc<Store>)> {
    let cfg = Config::load(config)?;
    let store = Store::open_with(cfg.store_path(), StoreOptions::durable())
        .with_context(|| format!("opening store {}", cfg.store_path().display()))?;
    Ok((cfg, Arc::new(store)))
}

fn sample_spec(cfg: &Config, args: &RunArgs) -> SampleSpec {
    let mut spec = cfg.sample_spec();
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if args.stories.is_some() {
        spec.story_count = args.stories;
    }
    if args.issues.is_some() {
        spec.issue_count = args.issues;
    }
    spec
}

async fn run_stages(args: &RunArgs, stages: &[Stage]) -> Result<()> {
    let (cfg, store) = load(&args.config.config)?;
    let pipeline = cfg.pipeline(store, Arc::new(SystemClock))?;
    let report = pipeline.run_stages(stages, &sample_spec(&cfg, args)).await?;
    print!("{}", report.to_text());
    eprintln!("backend calls: {}", pipeline.backend_calls());
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Harvest(c) => {
            let (cfg, store) = load(&c.config)?;
            let harvester = Harvester::new(Arc::new(SystemClock));
            let mut failed = false;
            for result in harvest_all(&harvester, &cfg.tracker_sources(), &cfg.filter, &store).await {
                match result {
                    Ok(r) => println!(
                        "{}: {} pages, {} fetched, {} kept, {} excluded, {} malformed",
                        r.tracker,
                        r.pages,
                        r.fetched,
                        r.emitted.len(),
                        r.excluded,
                        r.malformed
                    ),
                    Err(e) => {
                        failed = true;
                        eprintln!("error: {e}");
                    }
                }
            }
            store.compact()?;
            if failed {
                bail!("harvest incomplete; rerun to resume");
            }
        }
        Command::Preprocess(c) => {
            let (cfg, store) = load(&c.config)?;
            let summary = cfg.preprocessor()?.run(&store).await?;
            store.compact()?;
            let width = summary.keys().map(String::len).max().unwrap_or(0).max(7);
            println!("{:<width$}  {:>10}  {:>9}", "tracker", "downloaded", "remaining");
            let (mut down, mut rem) = (0, 0);
            for (tracker, s) in &summary {
                println!("{tracker:<width$}  {:>10}  {:>9}", s.downloaded, s.remaining);
                down += s.downloaded;
                rem += s.remaining;
            }
            println!("{:<width$}  {down:>10}  {rem:>9}", "total");
        }
        Command::ImportStories { config, file } => {
            let (_, store) = load(&config.config)?;
            let report = store.import_user_stories(&file)?;
            println!("imported {} stories", report.imported);
            for r in &report.rejected {
                eprintln!("line {}: {}", r.line, r.reason);
            }
        }
        Command::Match(a) => run_stages(&a, &[Stage::Match]).await?,
        Command::Generate(a) => run_stages(&a, &[Stage::Generate]).await?,
        Command::Assess(a) => run_stages(&a, &[Stage::Assess]).await?,
        Command::Run(a) => run_stages(&a, &Stage::ALL).await?,
        Command::Report { args, format } => {
            let (cfg, store) = load(&args.config.config)?;
            let (stories, issues) = select_sample(&store, &sample_spec(&cfg, &args))?;
            let report = RunReport::collect(&store, &stories, &issues)?;
            match format {
                ReportFormat::Text => print!("{}", report.to_text()),
                ReportFormat::Csv => print!("{}", report.to_csv()?),
            }
        }
        Command::Export {
            config,
            entity,
            format,
            out,
        } => {
            let (_, store) = load(&config.config)?;
            let entity: Entity = entity.parse()?;
            let format: ExportFormat = format.parse().map_err(anyhow::Error::msg)?;
            let n = store.export(entity, format, &out)?;
            println!("exported {n} {entity} records to {}", out.display());
        }
        Command::Metrics {
            annotations,
            threshold,
            format,
        } => {
            let file = File::open(&annotations).with_context(|| format!("opening {}", annotations.display()))?;
            let report = AnnotationMatrix::from_csv_reader(file)?.report(threshold);
            match format {
                MetricsFormat::Text => print!("{}", report.to_text()),
                MetricsFormat::Jsonl => print!("{}", report.to_jsonl()),
            }
        }
        Command::Serve { config, port, ui_dir } => {
            let (cfg, store) = load(&config.config)?;
            let service = Arc::new(ReviewService::new(store, cfg.review_config(), Arc::new(SystemClock)));
            let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
            eprintln!("review service listening on {}", listener.local_addr()?);
            serve(listener, service, ui_dir).await?;
        }
    }
    Ok(())
}
