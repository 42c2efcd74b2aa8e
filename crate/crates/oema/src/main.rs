use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oema::config::{ConfigError, Role, RunConfig};
use oema::core::corpus::LabelSet;
use oema::core::eval::Regime;
use oema::gateway::BackendKind;
use oema::pipeline::{cmd_annotate, cmd_evaluate, cmd_predict, cmd_sweep, render_sweep_csv, Pipeline, PipelineError};
use oema::report;

/// Zero-shot clinical NER with self-annotation, ontology-guided example
/// selection and few-shot prediction.
#[derive(Parser)]
#[command(name = "oema", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "oema.toml")]
    config: PathBuf,

    /// Override a backend kind, e.g. `predictor=scripted`. Repeatable.
    #[arg(long = "backend", global = true, value_parser = parse_backend_override)]
    backends: Vec<(Role, BackendKind)>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Overrides {
    /// Leave the entity type descriptions out of the prediction prompt.
    #[arg(long)]
    no_type_descriptions: bool,
    /// Leave the selected examples out of the prediction prompt.
    #[arg(long)]
    no_examples: bool,
    /// Candidates retrieved per target.
    #[arg(long = "K")]
    big_k: Option<usize>,
    /// Examples kept per target.
    #[arg(long = "k")]
    k: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Exact,
    Relaxed,
    Both,
}

impl RegimeArg {
    fn regimes(self) -> &'static [Regime] {
        match self {
            RegimeArg::Exact => &[Regime::Exact],
            RegimeArg::Relaxed => &[Regime::Relaxed],
            RegimeArg::Both => &Regime::BOTH,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the self-annotated corpus.
    Annotate,
    /// Select examples and predict the test sentences.
    Predict(Overrides),
    /// Score predictions against gold.
    Evaluate {
        /// Gold corpus; defaults to the configured test set.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Predictions; defaults to the run's predictions.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Comma-separated labels, used when no configuration file exists.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        /// Report directory; defaults to the run's reports/.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        regime: RegimeArg,
    },
    /// Predict and evaluate over a grid of (K, k).
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// k values at the fixed K.
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<usize>>,
        /// K values at the fixed k.
        #[arg(long = "K-grid", value_delimiter = ',')]
        big_k_grid: Option<Vec<usize>>,
    },
}

fn parse_backend_override(s: &str) -> Result<(Role, BackendKind), String> {
    let (role, kind) = s.split_once('=').ok_or_else(|| format!("expected role=kind, got `{s}`"))?;
    Ok((role.parse()?, kind.parse()?))
}

fn load_config(cli: &Cli, overrides: Option<Overrides>) -> Result<RunConfig, PipelineError> {
    let mut config = RunConfig::load(&cli.config)?;
    for &(role, kind) in &cli.backends {
        config.backends.set_kind(role, kind);
    }
    if let Some(o) = overrides {
        if o.no_type_descriptions {
            config.predictor.include_type_descriptions = false;
        }
        if o.no_examples {
            config.predictor.include_examples = false;
        }
        if let Some(big_k) = o.big_k {
            config.discriminator.retrieve = big_k;
            config.sweep.fixed_big_k = big_k;
        }
        if let Some(k) = o.k {
            config.discriminator.select = k;
            config.sweep.fixed_k = k;
        }
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Annotate => {
            let pipeline = Pipeline::new(load_config(&cli, None)?)?;
            let corpus = cmd_annotate(&pipeline)?;
            println!("{} sentences -> {}", corpus.len(), pipeline.layout().self_annotated().display());
        }
        Command::Predict(o) => {
            let pipeline = Pipeline::new(load_config(&cli, Some(*o))?)?;
            let corpus = cmd_predict(&pipeline)?;
            println!("{} sentences -> {}", corpus.len(), pipeline.layout().predictions().display());
        }
        Command::Evaluate { gold, pred, labels, out, regime } => {
            let config = if cli.config.exists() { Some(load_config(&cli, None)?) } else { None };
            let label_set = match (&config, labels.is_empty()) {
                (_, false) => LabelSet::from_labels("cli", labels.clone())
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                (Some(c), true) => c.dataset.label_set()?,
                (None, true) => {
                    return Err(ConfigError::Invalid(format!(
                        "{} not found; pass --labels",
                        cli.config.display()
                    ))
                    .into())
                }
            };
            let layout = config.as_ref().map(|c| oema::pipeline::Layout::new(c.output_dir.clone()));
            let need = |what: &str| ConfigError::Invalid(format!("--{what} is required without a configuration file"));
            let gold = match gold {
                Some(p) => p.clone(),
                None => config.as_ref().map(|c| c.dataset.test.clone()).ok_or_else(|| need("gold"))?,
            };
            let pred = match pred {
                Some(p) => p.clone(),
                None => layout.as_ref().map(|l| l.predictions()).ok_or_else(|| need("pred"))?,
            };
            let out = match out {
                Some(p) => p.clone(),
                None => layout.as_ref().map(|l| l.reports_dir()).ok_or_else(|| need("out"))?,
            };
            for r in cmd_evaluate(&gold, &pred, &label_set, regime.regimes(), &out)? {
                print!("{}", report::render_text(&r));
            }
        }
        Command::Sweep { overrides, k_grid, big_k_grid } => {
            let mut config = load_config(&cli, Some(*overrides))?;
            if let Some(g) = k_grid {
                config.sweep.k_grid = g.clone();
            }
            if let Some(g) = big_k_grid {
                config.sweep.big_k_grid = g.clone();
            }
            let cells = config.sweep.cells();
            if cells.is_empty() {
                return Err(ConfigError::Invalid("sweep grids are empty".into()).into());
            }
            let pipeline = Pipeline::new(config)?;
            print!("{}", render_sweep_csv(&cmd_sweep(&pipeline, &cells)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
