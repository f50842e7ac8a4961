//! Command-line driver: replication studies, aggregation of existing record
//! files, bias correction of user datasets, and trajectory dumps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use tsbc::dga::Dataset;
use tsbc::error::Error;
use tsbc::harness::{
    self, aggregate, correct_dataset, run_study, CorrectOptions, Method, StudyConfig,
};
use tsbc::study::{truth, ScoreChoice, Study};

#[derive(Parser)]
#[command(name = "tsbc", version, about = "Two-stage latent-variable estimation with simulation-based bias correction")]
struct Cli {
    /// Worker threads (overrides TSBC_THREADS; 0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replication study and write records.csv + summary.csv
    Simulate(SimulateArgs),
    /// Aggregate an existing records.csv against a truth JSON
    Report(ReportArgs),
    /// Bias-correct a user dataset (CSV) under a model config (JSON)
    Correct(CorrectArgs),
    /// Dump the bias-correction trajectory of one replication as CSV
    Trace(TraceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Study config as JSON; explicit flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Study number: 1, 2, or 3
    #[arg(long)]
    study: Option<u32>,
    /// Sample size per replication
    #[arg(long)]
    n: Option<usize>,
    /// Number of replications
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Score choice: MM, BB, RR, BR, or EAP
    #[arg(long)]
    scores: Option<String>,
    /// Comma-separated subset of fsr,bc
    #[arg(long)]
    methods: Option<String>,
    /// Iteration budget of the bias-correction recursion
    #[arg(long = "k")]
    rm_iterations: Option<usize>,
    /// Learning-rate multiplier
    #[arg(long = "a")]
    rm_a: Option<f64>,
    /// Learning-rate decay exponent
    #[arg(long = "b")]
    rm_b: Option<f64>,
    /// Datasets averaged per iteration
    #[arg(long)]
    mc_per_iter: Option<usize>,
    /// Monte Carlo replications for the covariance stage
    #[arg(long = "acm-m")]
    acm_replications: Option<usize>,
    /// Perturbation constant (default depends on the study)
    #[arg(long = "acm-delta")]
    acm_delta: Option<f64>,
    /// Number of consecutive perturbation blocks
    #[arg(long = "acm-blocks")]
    acm_blocks: Option<usize>,
    /// Compute standard errors for bias-corrected estimates
    #[arg(long = "se")]
    compute_se: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    /// Truth vector JSON ({"names": [...], "values": [...]})
    #[arg(long)]
    truth: PathBuf,
    /// Summary CSV destination (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrectArgs {
    /// Dataset CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Model config JSON ({"study": 1, "scores": "BB", ...})
    #[arg(long)]
    model: PathBuf,
    /// Override the score choice from the model config
    #[arg(long)]
    scores: Option<String>,
    /// Result JSON destination (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    study: u32,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Which replication's trajectory to dump
    #[arg(long, default_value_t = 0)]
    rep: usize,
    #[arg(long)]
    scores: String,
    #[arg(long = "k", default_value_t = 1000)]
    rm_iterations: usize,
    #[arg(long = "a", default_value_t = 3.0)]
    rm_a: f64,
    #[arg(long = "b", default_value_t = 0.6)]
    rm_b: f64,
    /// Trace CSV destination
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    let threads = cli
        .threads
        .or_else(|| std::env::var("TSBC_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    if threads > 0 {
        // global pool for the covariance stage; study runs build their own
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args, threads),
        Command::Report(args) => cmd_report(args),
        Command::Correct(args) => cmd_correct(args),
        Command::Trace(args) => cmd_trace(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_simulate(args: SimulateArgs, threads: usize) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<StudyConfig>(&text)
                .map_err(|e| Error::Usage(format!("config: {e}")))?
        }
        None => {
            let study = args
                .study
                .ok_or_else(|| Error::Usage("study: required without --config".into()))?;
            let n = args.n.ok_or_else(|| Error::Usage("n: required without --config".into()))?;
            let reps =
                args.reps.ok_or_else(|| Error::Usage("reps: required without --config".into()))?;
            let scores = args
                .scores
                .clone()
                .ok_or_else(|| Error::Usage("scores: required without --config".into()))?;
            StudyConfig::new(
                Study::from_index(study)?,
                n,
                reps,
                args.seed.unwrap_or(1),
                ScoreChoice::parse(&scores)?,
            )
        }
    };
    if let Some(v) = args.study {
        cfg.study = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.scores {
        cfg.scores = v.clone();
    }
    if let Some(v) = &args.methods {
        cfg.methods = v
            .split(',')
            .filter(|s| !s.is_empty())
            .map(Method::parse)
            .collect::<Result<Vec<_>, _>>()?;
    }
    if let Some(v) = args.rm_iterations {
        cfg.rm_iterations = v;
    }
    if let Some(v) = args.rm_a {
        cfg.rm_a = v;
    }
    if let Some(v) = args.rm_b {
        cfg.rm_b = v;
    }
    if let Some(v) = args.mc_per_iter {
        cfg.rm_mc_per_iter = v;
    }
    if let Some(v) = args.acm_replications {
        cfg.acm_replications = v;
    }
    if let Some(v) = args.acm_delta {
        cfg.acm_delta = v;
    }
    if let Some(v) = args.acm_blocks {
        cfg.acm_blocks = v;
    }
    if args.compute_se {
        cfg.compute_se = true;
    }
    cfg.validate()?;

    fs::create_dir_all(&args.out)?;
    let started = std::time::Instant::now();
    let records = run_study(&cfg, threads)?;
    let elapsed = started.elapsed();

    write_file(&args.out.join("records.csv"), |w| harness::write_records_csv(&records, w))?;
    write_file(&args.out.join("config.json"), |w| {
        serde_json::to_writer_pretty(w, &cfg).map_err(Error::from)
    })?;
    // aggregation needs at least two replications per cell
    let table = if cfg.reps >= 2 {
        let table = aggregate(&records, &truth(cfg.study_enum()?))?;
        write_file(&args.out.join("summary.csv"), |w| harness::write_summary_csv(&table, w))?;
        table
    } else {
        eprintln!("note: single replication; records written, summary skipped");
        harness::SummaryTable::default()
    };

    println!(
        "study {} | n = {} | reps = {} | scores = {} | {:.1}s",
        cfg.study,
        cfg.n,
        cfg.reps,
        cfg.scores,
        elapsed.as_secs_f64()
    );
    println!("{:<6} {:<8} {:>9} {:>8} {:>8} {:>6}", "method", "param", "rb", "ese", "rbse", "reps");
    for row in &table.rows {
        let rbse = row.rbse.map(|v| format!("{v:.3}")).unwrap_or_default();
        println!(
            "{:<6} {:<8} {:>9.3} {:>8.3} {:>8} {:>6}",
            row.method, row.param, row.rb, row.ese, rbse, row.reps
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Error> {
    let records = harness::read_records_csv(fs::File::open(&args.records)?)?;
    let truth_vec = harness::read_truth_json(fs::File::open(&args.truth)?)?;
    let table = aggregate(&records, &truth_vec)?;
    match &args.out {
        Some(path) => write_file(path, |w| harness::write_summary_csv(&table, w))?,
        None => harness::write_summary_csv(&table, std::io::stdout().lock())?,
    }
    Ok(())
}

#[derive(Deserialize)]
struct ModelJson {
    study: u32,
    #[serde(flatten)]
    options: CorrectOptions,
}

fn cmd_correct(args: CorrectArgs) -> Result<(), Error> {
    let model: ModelJson = serde_json::from_str(&fs::read_to_string(&args.model)?)
        .map_err(|e| Error::Usage(format!("model: {e}")))?;
    let study = Study::from_index(model.study)?;
    let mut opts = model.options;
    if let Some(s) = &args.scores {
        opts.scores = s.clone();
    }
    let data = Dataset::read_csv(fs::File::open(&args.data)?, "user")?;
    if data.p() != study.p() {
        return Err(Error::Usage(format!(
            "data: study {} expects {} columns, found {}",
            study.index(),
            study.p(),
            data.p()
        )));
    }
    let outcome = correct_dataset(&data, study, &opts)?;
    let json = serde_json::to_string_pretty(&outcome)?;
    match &args.out {
        Some(path) => fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<(), Error> {
    let study = Study::from_index(args.study)?;
    let mut cfg = StudyConfig::new(
        study,
        args.n,
        args.rep + 1,
        args.seed,
        ScoreChoice::parse(&args.scores)?,
    );
    cfg.rm_iterations = args.rm_iterations;
    cfg.rm_a = args.rm_a;
    cfg.rm_b = args.rm_b;
    let trace = harness::replication_trace(&cfg, args.rep)?;
    write_file(&args.out, |w| trace.write_csv(&study.focal_names(), w))?;
    eprintln!(
        "trace written: {} iterations, {} projection hits",
        trace.iterates.len(),
        trace.projection_hits
    );
    Ok(())
}

fn write_file<F>(path: &Path, f: F) -> Result<(), Error>
where
    F: FnOnce(&mut dyn Write) -> Result<(), Error>,
{
    let mut file = fs::File::create(path)?;
    f(&mut file)?;
    file.flush()?;
    Ok(())
}
