use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use newsverify::eval::{
    align, compute_classification_metrics, load_dataset, load_predictions, rationale_metrics, split, Average,
    DatasetFormat, DatasetRecord,
};
use newsverify::pipeline::{export_distill, load_items, RunManifest};
use newsverify::verdict::{parse_output, render_output};
use newsverify::{
    Error, Label, NewsItem, Persona, Pipeline, PipelineConfig, ProviderEnv, ProviderMode, Providers, Variant, Verdict,
};

const EXIT_CONFIG: u8 = 3;
const EXIT_PROVIDER: u8 = 4;

#[derive(Parser)]
#[command(name = "newsverify", version, about = "Evidence-grounded news verification")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Serve every provider call from a recorded directory.
    #[arg(long, global = true, value_name = "DIR", conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Call live providers and record every response into a directory.
    #[arg(long, global = true, value_name = "DIR")]
    record: Option<PathBuf>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify one article; the exit code encodes the verdict (0 REAL, 1 FAKE, 2 UNCERTAIN).
    Verify(VerifyArgs),
    /// Verify every article in a file, writing one record per line in input order.
    Batch(BatchArgs),
    /// Join verdict records with a labeled dataset into training records.
    ExportDistill(ExportArgs),
    /// Score a predictions file against a labeled dataset.
    Eval(EvalArgs),
    /// Write a seeded train / validation / test split of a dataset.
    Split(SplitArgs),
}

#[derive(Args)]
struct RunOptions {
    /// Number of question rounds.
    #[arg(long)]
    rounds: Option<u32>,
    /// Comma-separated persona order, e.g. supervisor,journalist,legal,scientific.
    #[arg(long, value_delimiter = ',')]
    personas: Option<Vec<String>>,
    #[arg(long)]
    no_pkm: bool,
    #[arg(long)]
    no_image: bool,
    #[arg(long)]
    no_kg: bool,
    /// Only the supervisor asks questions.
    #[arg(long)]
    single_persona: bool,
    #[arg(long, group = "variant")]
    evidence_only: bool,
    #[arg(long, group = "variant")]
    agentic_only: bool,
    #[arg(long, group = "variant")]
    pkm_only: bool,
    /// Endpoint of a classifier service exposing POST /predict.
    #[arg(long, value_name = "URL")]
    slm: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Article as JSON (`{"id", "headline", "body", "image"}`).
    #[arg(long, conflicts_with = "headline")]
    input: Option<PathBuf>,
    #[arg(long, required_unless_present = "input")]
    headline: Option<String>,
    #[arg(long, default_value = "")]
    body: String,
    #[arg(long)]
    image: Option<String>,
    #[arg(long, default_value = "item")]
    id: String,
    #[command(flatten)]
    run: RunOptions,
}

#[derive(Args)]
struct BatchArgs {
    /// Articles as .jsonl, .json, .csv or .tsv.
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run manifest (JSON) describing every item, counts and config.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    run: RunOptions,
}

#[derive(Args)]
struct ExportArgs {
    /// Verdict records (JSONL) produced by `batch`.
    #[arg(long)]
    records: PathBuf,
    /// Labeled dataset (.csv, .tsv, .jsonl).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Keep UNCERTAIN records, labeled with the gold label.
    #[arg(long)]
    keep_uncertain_with_gold: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AverageArg {
    Binary,
    Macro,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Predictions (JSONL of `{id, pred, logprob_true_label?}`).
    #[arg(long)]
    predictions: PathBuf,
    /// Predictions of the same model trained without rationales.
    #[arg(long, value_name = "PATH")]
    paired: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "binary")]
    average: AverageArg,
    /// Positive class for binary scores.
    #[arg(long, default_value = "FAKE", value_parser = parse_label)]
    positive: Label,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Train, validation and test ratios.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [7, 2, 1])]
    ratios: Vec<u32>,
}

fn parse_label(s: &str) -> Result<Label, String> {
    Label::parse(s).ok_or_else(|| format!("`{s}` is not REAL or FAKE"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Provider(_) => EXIT_PROVIDER,
        _ => EXIT_CONFIG,
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Real => 0,
        Verdict::Fake => 1,
        Verdict::Uncertain => 2,
    }
}

impl Cli {
    fn provider_mode(&self) -> ProviderMode {
        match (&self.replay, &self.record) {
            (Some(dir), _) => ProviderMode::Replay(dir.clone()),
            (None, Some(dir)) => ProviderMode::Record(dir.clone()),
            (None, None) => ProviderMode::Live,
        }
    }

    fn pipeline(&self, run: &RunOptions) -> Result<Pipeline, Error> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::from_path(path)?,
            None => PipelineConfig::default(),
        };
        run.apply(&mut config)?;
        let config = config.validate()?;
        let providers = Providers::build(&self.provider_mode(), &config, &ProviderEnv::from_env())?;
        Pipeline::new(config, providers)
    }
}

impl RunOptions {
    fn apply(&self, config: &mut PipelineConfig) -> Result<(), Error> {
        if let Some(tau) = self.rounds {
            config.tau = tau;
        }
        if let Some(names) = &self.personas {
            config.persona_order = names
                .iter()
                .map(|n| {
                    Persona::parse(n).ok_or_else(|| Error::Config {
                        field: "personas".into(),
                        message: format!("unknown persona `{n}`"),
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        config.disable_pkm |= self.no_pkm;
        config.disable_image |= self.no_image;
        config.disable_kg |= self.no_kg;
        config.single_persona |= self.single_persona;
        if self.evidence_only {
            config.variant = Variant::EvidenceOnly;
        } else if self.agentic_only {
            config.variant = Variant::AgenticOnly;
        } else if self.pkm_only {
            config.variant = Variant::PkmOnly;
        }
        if let Some(url) = &self.slm {
            config.slm_endpoint = Some(url.clone());
        }
        Ok(())
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_lines<I: IntoIterator<Item = String>>(path: Option<&Path>, lines: I) -> Result<(), Error> {
    let target = path.unwrap_or(Path::new("<stdout>"));
    let mut out = open_output(path)?;
    for line in lines {
        writeln!(out, "{line}").map_err(|e| io_error(target, e))?;
    }
    out.flush().map_err(|e| io_error(target, e))
}

fn dataset(path: &Path) -> Result<Vec<DatasetRecord>, Error> {
    let format = DatasetFormat::from_path(path).ok_or_else(|| Error::Precondition(format!(
        "cannot tell the dataset format of {} (expected .csv, .tsv, .jsonl)",
        path.display()
    )))?;
    load_dataset(path, format)
}

fn verify(cli: &Cli, args: &VerifyArgs) -> Result<u8, Error> {
    let item = match (&args.input, &args.headline) {
        (Some(path), _) => {
            let mut items = load_items(path)?;
            if items.len() != 1 {
                return Err(Error::Precondition(format!(
                    "{} holds {} articles; use `batch` for more than one",
                    path.display(),
                    items.len()
                )));
            }
            items.remove(0)
        }
        (None, Some(headline)) => {
            let item = NewsItem::new(args.id.clone(), headline.clone(), args.body.clone())?;
            match &args.image {
                Some(img) => item.with_image(img.clone()),
                None => item,
            }
        }
        (None, None) => unreachable!("clap requires one of --input, --headline"),
    };
    let pipeline = cli.pipeline(&args.run)?;
    let verification = pipeline.verify(&item)?;
    let line = render_output(verification.record());
    write_lines(None, [line.clone()])?;
    Ok(verdict_code(parse_output(&line)?.final_verdict()))
}

fn batch(cli: &Cli, args: &BatchArgs) -> Result<u8, Error> {
    let items = load_items(&args.input)?;
    let pipeline = cli.pipeline(&args.run)?;
    let started = Instant::now();
    let results = pipeline.run_batch(&items, args.jobs);
    let lines: Vec<String> = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|v| render_output(v.record()))
        .collect();
    write_lines(args.output.as_deref(), lines)?;
    let manifest = RunManifest::build(
        &pipeline,
        cli.provider_mode().name(),
        vec![args.input.display().to_string()],
        args.output
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "-".into()),
        args.jobs,
        &items,
        &results,
        started,
    );
    log::info!("{} succeeded, {} failed", manifest.succeeded, manifest.failed);
    if let Some(path) = &args.manifest {
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(path, json + "\n").map_err(|e| io_error(path, e))?;
    }
    let worst = results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .map(exit_code)
        .max()
        .unwrap_or(0);
    Ok(worst)
}

fn export(args: &ExportArgs) -> Result<u8, Error> {
    let raw = std::fs::read_to_string(&args.records).map_err(|e| io_error(&args.records, e))?;
    let records = raw
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_output(l).map_err(|e| Error::Schema {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let out = export_distill(&records, &dataset(&args.dataset)?, args.keep_uncertain_with_gold)?;
    log::info!("exported {} of {} records", out.len(), records.len());
    write_lines(
        args.output.as_deref(),
        out.iter().map(|r| serde_json::to_string(r).expect("record serializes")),
    )?;
    Ok(0)
}

fn eval(args: &EvalArgs) -> Result<u8, Error> {
    let data = dataset(&args.dataset)?;
    let preds = load_predictions(&args.predictions)?;
    let average = match args.average {
        AverageArg::Binary => Average::Binary,
        AverageArg::Macro => Average::Macro,
    };
    let (p, y) = align(&preds, &data)?;
    let mut report = serde_json::json!({
        "metrics": compute_classification_metrics(&p, &y, args.positive, average)?,
        "average": average,
        "positive": args.positive,
    });
    if let Some(path) = &args.paired {
        let without = load_predictions(path)?;
        report["rationale"] =
            serde_json::to_value(rationale_metrics(&preds, &without, &data, args.positive, average)?).unwrap();
    }
    write_lines(None, [serde_json::to_string_pretty(&report).unwrap()])?;
    Ok(0)
}

fn split_cmd(args: &SplitArgs) -> Result<u8, Error> {
    let data = dataset(&args.dataset)?;
    let ratios = [args.ratios[0], args.ratios[1], args.ratios[2]];
    let (train, val, test) = split(&data, ratios, args.seed)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        let path = args.out_dir.join(format!("{name}.jsonl"));
        write_lines(
            Some(&path),
            part.iter().map(|r| serde_json::to_string(r).expect("record serializes")),
        )?;
    }
    eprintln!("train {} / val {} / test {}", train.len(), val.len(), test.len());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Verify(a) => verify(&cli, a),
        Command::Batch(a) => batch(&cli, a),
        Command::ExportDistill(a) => export(a),
        Command::Eval(a) => eval(a),
        Command::Split(a) => split_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
