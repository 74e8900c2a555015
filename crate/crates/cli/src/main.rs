use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use alice_core::feature_store::{generate_synthetic, Dataset, Grid, Split, SynthParams};
use alice_core::parser::{cub_lexicon, Lexicon, Parser as ExplanationParser, RuleSet};
use alice_core::session::{metrics_csv, summary, write_atomic, ExplanationScript, Mode, Session, SessionConfig};
use alice_core::Error;
use alice_service::{AppState, ServiceConfig};
use clap::{Args, Parser, Subcommand};

const EXIT_INTERNAL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "alice", version, about = "Expert-in-the-loop training from contrastive explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted confusable pairs.
    SynthGen(SynthGenArgs),
    /// Run a full session non-interactively, answering queries from a script.
    Run(RunArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Parse one explanation and print the segments it mentions.
    Parse(ParseArgs),
    /// Re-score a saved session on the test split.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Number of planted confusable pairs.
    #[arg(long, default_value_t = 5)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    coarse_groups: usize,
    #[arg(long, default_value_t = 15)]
    n_train: usize,
    #[arg(long, default_value_t = 30)]
    n_test: usize,
    #[arg(long, default_value_t = 15)]
    n_pool: usize,
    /// Feature dimension per cell.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Offset magnitude inside a planted segment.
    #[arg(long, default_value_t = 2.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Explanation script, one `{"pair": [p, q], "text": ...}` per line.
    #[arg(long)]
    script: Option<PathBuf>,
    /// full, no-grounding, no-hierarchy, random-grounding, random-pairs or extra-data:X
    #[arg(long, default_value = "full")]
    mode: Mode,
    #[arg(long, default_value_t = 4)]
    k: u32,
    #[arg(long, default_value_t = 3)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    /// Output directory for metrics.csv, summary.txt, session.json and model.bin.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Relative dataset paths in session configs resolve against this.
    #[arg(long)]
    dataset_root: Option<PathBuf>,
    /// Defaults to $ALICE_BIND or 127.0.0.1:7878.
    #[arg(long)]
    bind: Option<String>,
    /// Defaults to $ALICE_DATA_DIR or ./alice-data.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    /// JSON object mapping canonical segment names to synonyms; the bird-part
    /// vocabulary when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    text: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    session: PathBuf,
    /// Overrides the dataset path recorded in the snapshot.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalFailure(_) | Error::StaleNode { .. } | Error::InvalidLabel { .. } | Error::Json(_) => {
            EXIT_INTERNAL
        }
        Error::Io(io) if io.kind() != std::io::ErrorKind::NotFound => EXIT_INTERNAL,
        _ => EXIT_INVALID,
    }
}

fn synth_gen(args: SynthGenArgs) -> Result<u8, Error> {
    let base = SynthParams::default();
    let params = SynthParams {
        classes: args.classes,
        coarse_groups: args.coarse_groups,
        grid: Grid::new(base.grid.h, base.grid.w, args.dim),
        n_train: args.n_train,
        n_test: args.n_test,
        n_pool: args.n_pool,
        delta: args.delta,
        sigma: args.sigma,
        ..base
    }
    .with_planted_pairs(args.pairs);
    let manifest = generate_synthetic(&params, args.seed, &args.out)?;
    println!("wrote {} samples of {} classes to {}", manifest.samples.len(), manifest.num_classes(), args.out.display());
    Ok(0)
}

fn run(args: RunArgs) -> Result<u8, Error> {
    let defaults = SessionConfig::default();
    let config = SessionConfig {
        dataset: args.dataset,
        k: args.k,
        b: args.b,
        mode: args.mode,
        queries: args.queries.unwrap_or(defaults.queries),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        base_lr: args.lr.unwrap_or(defaults.base_lr),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        seed: args.seed,
    };
    config.validate()?;
    let dataset = std::sync::Arc::new(Dataset::open(&config.dataset)?);
    let script = match (&args.script, config.mode.queries_experts()) {
        (Some(path), true) => ExplanationScript::load(path, dataset.manifest())?,
        (None, true) => return Err(Error::InvalidConfig(format!("mode {} needs --script", config.mode))),
        _ => ExplanationScript::default(),
    };

    let mut session = Session::start_with(config, dataset)?;
    session.run_to_completion(&script)?;

    fs::create_dir_all(&args.report)?;
    write_atomic(&args.report.join("metrics.csv"), metrics_csv(&session).as_bytes())?;
    let text = summary(&session);
    write_atomic(&args.report.join("summary.txt"), text.as_bytes())?;
    write_atomic(&args.report.join("model.bin"), &session.model_bytes())?;
    session.save(&args.report.join("session.json"))?;
    print!("{text}");

    if session.stopped_early() {
        eprintln!("stopped after {} of {} rounds: no class pairs left to query", session.round(), session.config().k);
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn serve(args: ServeArgs) -> Result<u8, Error> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let env = ServiceConfig::from_env();
    let config = ServiceConfig {
        bind: args.bind.unwrap_or(env.bind),
        data_dir: args.data_dir.unwrap_or(env.data_dir),
        dataset_root: args.dataset_root,
    };
    let state = AppState::open(&config.data_dir, config.dataset_root.as_deref())?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.bind).await?;
        println!("listening on http://{}", listener.local_addr()?);
        tracing::info!(sessions = state.store().len(), data_dir = %config.data_dir.display(), "serving");
        alice_service::serve(listener, state, async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await
    })?;
    Ok(0)
}

fn parse(args: ParseArgs) -> Result<u8, Error> {
    let lexicon = match &args.lexicon {
        Some(path) => Lexicon::load(path)?,
        None => cub_lexicon()?,
    };
    let parser = ExplanationParser::new(&lexicon, &RuleSet::default())?;
    match parser.parse(&args.text, (0, 1)) {
        Ok(parsed) => {
            for id in parsed.segments {
                println!("{}", lexicon.segment_name(id).unwrap_or("?"));
            }
            Ok(0)
        }
        Err(Error::NoSegmentsFound) => {
            eprintln!("NoSegmentsFound: no known segment in {:?}", args.text);
            Ok(EXIT_INVALID)
        }
        Err(e) => Err(e),
    }
}

fn eval(args: EvalArgs) -> Result<u8, Error> {
    let session = Session::load(&args.session, args.dataset.as_deref())?;
    let scored = session.evaluate(Split::Test)?;
    let recorded = session.metrics().last();
    let report = serde_json::json!({
        "round": session.round(),
        "fine_accuracy": scored.fine_accuracy,
        "coarse_accuracy": scored.coarse_accuracy,
        "per_class_accuracy": scored.per_class_accuracy,
        "recorded": recorded.map(|m| serde_json::json!({
            "fine_accuracy": m.fine_accuracy,
            "coarse_accuracy": m.coarse_accuracy,
        })),
        "matches_recorded": recorded
            .is_some_and(|m| m.fine_accuracy == scored.fine_accuracy && m.coarse_accuracy == scored.coarse_accuracy),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthGen(a) => synth_gen(a),
        Command::Run(a) => run(a),
        Command::Serve(a) => serve(a),
        Command::Parse(a) => parse(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn validation_errors_exit_2() {
        assert_eq!(exit_code(&Error::InvalidParams("c".into())), EXIT_INVALID);
        assert_eq!(exit_code(&Error::MalformedManifest("m".into())), EXIT_INVALID);
        assert_eq!(exit_code(&Error::NumericalFailure("nan".into())), EXIT_INTERNAL);
        let missing = std::io::Error::from(std::io::ErrorKind::NotFound);
        assert_eq!(exit_code(&Error::Io(missing)), EXIT_INVALID);
    }

    #[test]
    fn modes_parse_from_flags() {
        let cli = Cli::try_parse_from(["alice", "run", "--dataset", "d", "--report", "r", "--mode", "extra-data:0.5"]).unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        assert_eq!(args.mode, Mode::ExtraData(0.5));
        assert!(Cli::try_parse_from(["alice", "run", "--dataset", "d", "--report", "r", "--k", "-1"]).is_err());
    }
}
