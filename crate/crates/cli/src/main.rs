use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use refpose::pipeline::{ExecOptions, Executor};
use refpose_cli::{
    emit, estimate_status, gen_scene, load_config, load_pair_spec, run_trials, CliError, Manifest, TrialInput,
    TrialSource,
};

#[derive(Parser)]
#[command(name = "refpose", version, about = "Object pose from one reference RGB-D view")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a reference/query pair with ground truth.
    GenScene {
        /// Pair description (JSON).
        spec: PathBuf,
        /// Output directory for reference/, query/ and truth.json.
        out_dir: PathBuf,
        /// Noise seed, overriding the one in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the query pose of one bundle pair.
    Estimate {
        reference: PathBuf,
        query: PathBuf,
        /// truth.json to score the estimate against.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run every trial of a manifest and aggregate.
    Eval {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report path, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Worker threads, 0 for all cores. Never changes results.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Record per-stage wall times (makes reports run-dependent).
    #[arg(long)]
    timings: bool,
}

impl RunArgs {
    fn setup(&self) -> Result<(refpose::config::RunConfig, Executor), CliError> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let exec = Executor::new(ExecOptions { threads: self.parallel, record_timings: self.timings })
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((cfg, exec))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenScene { spec, out_dir, seed } => {
            let mut spec = load_pair_spec(&spec)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            gen_scene(&spec, &out_dir)
        }
        Command::Estimate { reference, query, truth, run } => {
            let (cfg, exec) = run.setup()?;
            let input = TrialInput { name: "estimate".into(), source: TrialSource::Bundles { reference, query, truth } };
            let (report, errors) = run_trials(&[input], &cfg, &exec);
            emit(&run.out, &report.to_json())?;
            estimate_status(errors[0].as_ref())
        }
        Command::Eval { manifest, run } => {
            let (cfg, exec) = run.setup()?;
            let base = manifest.parent().map(PathBuf::from).unwrap_or_default();
            let inputs = Manifest::load(&manifest)?.inputs(&base, cfg.seed)?;
            let (report, _) = run_trials(&inputs, &cfg, &exec);
            emit(&run.out, &report.to_json())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("refpose: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
