//! Command-line interface: one subcommand per pipeline stage.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors (missing or
//! malformed inputs). Every stage prints a one-line machine-readable summary
//! to stdout on success.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{
    load_config, parse_exact_match_mode, parse_stage_tag, ConfigError, Overrides, PipelineConfig,
};
use crate::pipeline::{
    format_summary, run_eval, run_export, run_filter, run_graph, run_ingest, run_materialize,
    run_partition, run_pipeline, run_play, run_synth, PipelineError, Summary,
};

#[derive(Debug, Parser)]
#[command(
    name = "envforge",
    version,
    about = "Build simulated tool environments and verified agent trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand: config file plus flag overrides.
/// Flags win over the config file.
#[derive(Debug, Args)]
struct CommonOpts {
    /// TOML config file merged under the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Similarity threshold for graph edges (exclusive)
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Maximum walk length for task synthesis
    #[arg(long = "max-steps", global = true)]
    max_steps: Option<usize>,
    /// Exact-match filter mode: all_read_only | always
    #[arg(long = "exact-match-mode", global = true)]
    exact_match_mode: Option<String>,
    /// Export stage tag: stage1_general | stage2_domain
    #[arg(long = "stage-tag", global = true)]
    stage_tag: Option<String>,
    /// Number of tasks to synthesize
    #[arg(long = "n-tasks", global = true)]
    n_tasks: Option<usize>,
    /// Intent chunks revealed per scripted-user turn
    #[arg(long, global = true)]
    chunks: Option<usize>,
    /// Depth bucket width for eval reports
    #[arg(long = "bucket-width", global = true)]
    bucket_width: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a raw tool catalog and write the clean records
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build the parameter-similarity tool graph from a catalog
    Graph {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Partition the tool graph into domains
    Partition {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Derive per-domain schemas and tool implementations
    Materialize {
        #[arg(long = "in")]
        catalog: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Synthesize seeded verifiable tasks from domain bundles
    Synth {
        #[arg(long = "in")]
        bundles: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Worker threads for task generation
        #[arg(long)]
        parallel: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run one user-agent episode per task
    Play {
        #[arg(long = "in")]
        tasks: PathBuf,
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Worker threads for episode execution
        #[arg(long)]
        parallel: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Apply the three-stage quality funnel to trajectories
    Filter {
        #[arg(long = "in")]
        trajectories: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Export loss-masked training samples for kept trajectories
    Export {
        #[arg(long = "in")]
        trajectories: PathBuf,
        #[arg(long)]
        funnel: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compute pass^k and depth analytics over trial records
    Eval {
        #[arg(long = "in")]
        records: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run every stage end to end into an output directory
    Pipeline {
        #[arg(long = "in")]
        catalog: PathBuf,
        #[arg(long = "out")]
        out_dir: PathBuf,
        /// Worker threads for synthesis and episodes
        #[arg(long)]
        parallel: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

impl Command {
    fn common(&self) -> &CommonOpts {
        match self {
            Command::Ingest { common, .. }
            | Command::Graph { common, .. }
            | Command::Partition { common, .. }
            | Command::Materialize { common, .. }
            | Command::Synth { common, .. }
            | Command::Play { common, .. }
            | Command::Filter { common, .. }
            | Command::Export { common, .. }
            | Command::Eval { common, .. }
            | Command::Pipeline { common, .. } => common,
        }
    }

    fn parallel(&self) -> Option<usize> {
        match self {
            Command::Synth { parallel, .. }
            | Command::Play { parallel, .. }
            | Command::Pipeline { parallel, .. } => *parallel,
            _ => None,
        }
    }

    fn stage_name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Graph { .. } => "graph",
            Command::Partition { .. } => "partition",
            Command::Materialize { .. } => "materialize",
            Command::Synth { .. } => "synth",
            Command::Play { .. } => "play",
            Command::Filter { .. } => "filter",
            Command::Export { .. } => "export",
            Command::Eval { .. } => "eval",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

fn build_config(command: &Command) -> Result<PipelineConfig, ConfigError> {
    let common = command.common();
    let base = load_config(common.config.as_deref())?;
    let overrides = Overrides {
        seed: common.seed,
        tau: common.tau,
        max_steps: common.max_steps,
        parallel: command.parallel(),
        exact_match_mode: common
            .exact_match_mode
            .as_deref()
            .map(parse_exact_match_mode)
            .transpose()?,
        stage_tag: common.stage_tag.as_deref().map(parse_stage_tag).transpose()?,
        n_tasks: common.n_tasks,
        chunks: common.chunks,
        bucket_width: common.bucket_width,
    };
    Ok(base.with_overrides(&overrides))
}

fn dispatch(command: &Command, config: &PipelineConfig) -> Result<Summary, PipelineError> {
    match command {
        Command::Ingest { input, output, .. } => run_ingest(input, output, config),
        Command::Graph { input, output, .. } => run_graph(input, output, config),
        Command::Partition { input, output, .. } => run_partition(input, output, config),
        Command::Materialize { catalog, graph, partition, output, .. } => {
            run_materialize(catalog, graph, partition, output, config)
        }
        Command::Synth { bundles, output, .. } => run_synth(bundles, output, config),
        Command::Play { tasks, bundles, output, .. } => run_play(tasks, bundles, output, config),
        Command::Filter { trajectories, tasks, bundles, output, .. } => {
            run_filter(trajectories, tasks, bundles, output, config)
        }
        Command::Export { trajectories, funnel, output, .. } => {
            run_export(trajectories, funnel, output, config)
        }
        Command::Eval { records, output, .. } => run_eval(records, output, config),
        Command::Pipeline { catalog, out_dir, .. } => run_pipeline(catalog, out_dir, config),
    }
}

/// Parse argv and run the selected stage; returns the process exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    let config = match build_config(&cli.command) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return match err {
                ConfigError::Flag(_) => 1,
                _ => 2,
            };
        }
    };
    match dispatch(&cli.command, &config) {
        Ok(summary) => {
            println!("{}", format_summary(cli.command.stage_name(), &summary));
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}
