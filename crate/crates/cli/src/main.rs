use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use selfprobe_core::claims::ObjectLexicon;
use selfprobe_core::dpo::{loss_report, DpoConfig, LogProbRecord};
use selfprobe_core::fsio::{read_jsonl, write_atomic};
use selfprobe_core::gateway::{ChatBackend, MockModel, MockScript};
use selfprobe_core::metrics::{ChairAggregation, MetricReport, PositiveClass};
use selfprobe_core::pipeline::{PairPolicy, RankingStrategy};
use selfprobe_core::runstore::{curate, RunConfig, RunStore, PAIRS_FILE};
use selfprobe_core::sim::{neg_precision_sweep, pairwise_ranking_accuracy, NoisyModelParams};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Occurrence,
    Ratio,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    All,
    BestWorst,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PositiveArg {
    Yes,
    No,
}

#[derive(Debug, Parser)]
#[command(name = "selfprobe", version, about = "Self-consistency preference-pair curation and hallucination metrics")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Base seed for candidate sampling and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, global = true, value_enum)]
    pair_policy: Option<PolicyArg>,
    /// Require the chosen response to carry at least as many claims.
    #[arg(long, global = true)]
    coverage_constraint: bool,
    /// Answer QA tasks in one round, without the description step.
    #[arg(long, global = true)]
    single_round_qa: bool,
    /// Answer every model request from a scripted mock instead of HTTP.
    #[arg(long, global = true)]
    mock: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Curate preference pairs for every task in a manifest.
    Curate {
        manifest: PathBuf,
    },
    /// Compute hallucination metrics.
    Evaluate {
        /// Generations, one JSON object per line.
        #[arg(long, requires = "annotations")]
        generations: Option<PathBuf>,
        #[arg(long, requires = "generations")]
        annotations: Option<PathBuf>,
        /// Yes/no answers, one JSON object per line.
        #[arg(long)]
        discriminative: Option<PathBuf>,
        /// Pool CHAIR over the corpus instead of averaging per response.
        #[arg(long)]
        corpus_chair: bool,
        #[arg(long, value_enum, default_value = "yes")]
        positive: PositiveArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// DPO loss and gradient for a file of pair log-probabilities.
    DpoCheck {
        logprobs: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long)]
        length_normalize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ranking accuracy of the self-consistency signal under a noise model.
    Simulate {
        /// measured, noiseless or coin.
        #[arg(long, default_value = "measured", conflicts_with = "params")]
        preset: String,
        /// Parameters file (JSON) instead of a preset.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 3)]
        candidates: usize,
        /// Mix existence, relation and attribute claims.
        #[arg(long)]
        three_category: bool,
        /// Comma-separated negative precisions to sweep.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the pairs file from stored candidates.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Run(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

trait ConfigContext<T> {
    fn config_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ConfigContext<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
}

fn run_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).config_err()?,
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.run_dir {
        cfg.run_dir = d.clone();
    }
    if let Some(c) = cli.concurrency {
        cfg.concurrency = c;
    }
    if let Some(s) = cli.seed {
        cfg.sampling.candidate_sampling.seed = Some(s);
    }
    if let Some(s) = cli.strategy {
        cfg.strategy = match s {
            StrategyArg::Occurrence => RankingStrategy::Occurrence,
            StrategyArg::Ratio => RankingStrategy::RelativeRatio,
        };
    }
    if let Some(p) = cli.pair_policy {
        cfg.pair_policy = match p {
            PolicyArg::All => PairPolicy::AllPairs,
            PolicyArg::BestWorst => PairPolicy::BestVsWorst,
        };
    }
    cfg.coverage_constraint |= cli.coverage_constraint;
    if cli.single_round_qa {
        cfg.two_round_qa = false;
    }
    cfg.validate().config_err()?;
    Ok(cfg)
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json serialises") + "\n";
    if let Some(p) = out {
        write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())).map_err(Failure::Run)?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_curate(cli: &Cli, manifest: &Path) -> Result<(), Failure> {
    let cfg = run_config(cli)?;
    let (model, extractor): (Arc<dyn ChatBackend>, Option<Arc<dyn ChatBackend>>) = match &cli.mock {
        Some(p) => {
            let script = MockScript::load(p).with_context(|| format!("loading mock script {}", p.display())).config_err()?;
            (Arc::new(MockModel::new(script)), None)
        }
        None if cli.config.is_none() => {
            return Err(Failure::Config(anyhow!("no endpoint configured: pass --config or --mock")));
        }
        None => cfg.http_backends().config_err()?,
    };
    let store = RunStore::open(&cfg.run_dir).config_err()?;
    let summary = match curate(&store, manifest, &cfg, model, extractor) {
        Ok(s) => s,
        Err(e) if e.is_config() => return Err(Failure::Config(e.into())),
        Err(e) => return Err(Failure::Run(e.into())),
    };
    emit(&serde_json::to_value(&summary).expect("summary serialises"), None)?;
    eprintln!("pairs written to {}", store.path(PAIRS_FILE).display());
    if summary.all_failed() {
        return Err(Failure::Run(anyhow!("every task failed; see reports/failures.jsonl")));
    }
    Ok(())
}

fn cmd_export(cli: &Cli, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = run_config(cli)?;
    let store = RunStore::open(&cfg.run_dir).config_err()?;
    let pairs = store.rederive_pairs(&cfg.pairing()).map_err(|e| Failure::Run(e.into()))?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| store.path(PAIRS_FILE));
    store.export(&pairs, &path).map_err(|e| Failure::Run(e.into()))?;
    emit(&json!({"pairs": pairs.len(), "path": path.display().to_string()}), None)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Curate { manifest } => cmd_curate(cli, manifest),
        Command::Export { out } => cmd_export(cli, out.as_deref()),
        Command::Evaluate { generations, annotations, discriminative, corpus_chair, positive, out } => {
            if generations.is_none() && discriminative.is_none() {
                return Err(Failure::Config(anyhow!("nothing to evaluate: pass --generations/--annotations or --discriminative")));
            }
            let report = MetricReport::evaluate_files(
                generations.as_deref(),
                annotations.as_deref(),
                discriminative.as_deref(),
                &ObjectLexicon::coco(),
                if *corpus_chair { ChairAggregation::Corpus } else { ChairAggregation::PerResponse },
                match positive {
                    PositiveArg::Yes => PositiveClass::Yes,
                    PositiveArg::No => PositiveClass::No,
                },
            )
            .config_err()?;
            eprint!("{}", report.to_table());
            emit(&report.to_json(), out.as_deref())
        }
        Command::DpoCheck { logprobs, beta, length_normalize, out } => {
            let cfg = DpoConfig::new(*beta).config_err()?;
            let records: Vec<LogProbRecord> = read_jsonl(logprobs).config_err()?;
            let report = loss_report(&records, &cfg, *length_normalize).config_err()?;
            emit(&serde_json::to_value(&report).expect("report serialises"), out.as_deref())
        }
        Command::Simulate { preset, params, trials, candidates, three_category, sweep, out } => {
            let mut p = match params {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).config_err()?;
                    NoisyModelParams::from_json(&text).config_err()?
                }
                None => NoisyModelParams::preset(preset).config_err()?,
            };
            if *three_category {
                p = p.three_category();
            }
            if let Some(s) = cli.seed {
                p.seed = s;
            }
            let value = if sweep.is_empty() {
                let report = pairwise_ranking_accuracy(&p, *candidates, *trials).config_err()?;
                json!({"params": p, "candidates": candidates, "report": report})
            } else {
                let points = neg_precision_sweep(&p, *candidates, *trials, sweep).config_err()?;
                json!({"params": p, "candidates": candidates, "sweep": points})
            };
            emit(&value, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Run(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
