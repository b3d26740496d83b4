use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use occunash::game::{builtin, validate_game};
use occunash::gamefile::GameFile;
use occunash::simulator::Mode;
use occunash::WidthConstant;
use occunash_cli::experiment::{load_game, OnOff};
use occunash_cli::{run_batch, CliError, ExperimentSpec, Layer, Toggle};

#[derive(Parser)]
#[command(name = "occunash", version, about = "Decentralized occupancy-measure learning in Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded batch and write per-seed CSV/JSON plus summary.json.
    Run(RunArgs),
    /// Check reachability, ergodicity and mixing for a game.
    Validate {
        /// Game file or built-in name.
        game: String,
    },
    /// Print a built-in game as a game file.
    ExportGame {
        name: String,
        #[arg(long, value_enum, default_value = "json")]
        format: FileFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FileFormat {
    Json,
    Toml,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Finite,
    Asymptotic,
}

#[derive(Clone, Copy, ValueEnum)]
enum WidthArg {
    Hoeffding,
    Wide,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    game: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Step-size constant.
    #[arg(long)]
    c: Option<f64>,
    /// Occupancy floor; derived from epsilon when omitted.
    #[arg(long)]
    delta: Option<f64>,
    /// Exponent of the decaying step size (asymptotic mode).
    #[arg(long)]
    eta_exponent: Option<f64>,
    /// Fixed warm-up length, overriding the schedule.
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, value_enum)]
    width_constant: Option<WidthArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate the weighted gap every this many episodes.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_enum)]
    oracle: Option<OnOff>,
}

impl RunArgs {
    fn layer(&self) -> Layer {
        Layer {
            game: self.game.clone(),
            mode: self.mode.map(|m| match m {
                ModeArg::Finite => Mode::Finite,
                ModeArg::Asymptotic => Mode::Asymptotic,
            }),
            episodes: self.episodes,
            seeds: self.seeds,
            master_seed: self.master_seed,
            gamma: self.gamma,
            epsilon: self.epsilon,
            c: self.c,
            delta: self.delta,
            eta_exponent: self.eta_exponent,
            warmup: self.warmup,
            width_constant: self.width_constant.map(|w| match w {
                WidthArg::Hoeffding => WidthConstant::Hoeffding,
                WidthArg::Wide => WidthConstant::Wide,
            }),
            out: self.out.clone(),
            stride: self.stride,
            oracle: self.oracle.map(Toggle::Word),
        }
    }
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let (file, dir) = match &args.config {
        Some(path) => (Layer::from_file(path)?, path.parent().map(|p| p.to_path_buf())),
        None => (Layer::default(), None),
    };
    let spec = ExperimentSpec::resolve(&args.layer(), &file, dir.as_deref())?;
    let outcome = run_batch(&spec)?;
    let s = &outcome.summary;
    println!("wrote {} seed(s) to {}", s.seeds, spec.out.display());
    if let (Some(k), Some(gap)) = (s.gap_k.last(), s.gap_median.last()) {
        println!("median weighted gap at K={k}: {gap:.6}");
    }
    println!("coverage fraction: {:.3}", s.coverage_fraction);
    println!("mean episode length: {:.2}", s.mean_episode_len);
    Ok(())
}

fn validate(name: &str) -> Result<(), CliError> {
    let game = load_game(name)?;
    let report = validate_game(&game);
    println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
    if report.holds() {
        Ok(())
    } else {
        Err(CliError::Assumption(report.violations.join("; ")))
    }
}

fn export(name: &str, format: FileFormat) -> Result<(), CliError> {
    let game = builtin::by_name(name).ok_or_else(|| CliError::Config(format!("unknown built-in game {name}")))?;
    let file = GameFile::from_game(&game);
    match format {
        FileFormat::Json => println!("{}", file.to_json()),
        FileFormat::Toml => print!("{}", file.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Validate { game } => validate(game),
        Command::ExportGame { name, format } => export(name, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
