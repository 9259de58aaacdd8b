mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use dlscf_core::baselines::{optimize_alpha, AlphaTable, DEFAULT_ALPHA_GRID};
use dlscf_core::dataset::{Dataset, Split};
use dlscf_core::eval::{bler_csv, run_bler_sweep, run_identification_experiment, session_logs, BlerDecoder, FlipProposer};
use dlscf_core::lstm::{load_checkpoint, save_checkpoint, CheckpointHeader, LstmNet};
use dlscf_core::training::{
    gen_stage1_dataset, gen_stage2_dataset, network_for, train_stage2, train_supervised, NetScorer, StageConfig,
};
use dlscf_core::{CodeConfig, Crc, RngStream};

/// RNG stream ids, one per purpose, so that outputs depend only on `--seed`.
mod streams {
    pub const SIMULATE: u64 = 10;
    pub const ALPHA: u64 = 11;
    pub const STAGE1_TRAIN: u64 = 20;
    pub const STAGE1_VALIDATION: u64 = 21;
    pub const STAGE2_TRAIN: u64 = 22;
    pub const STAGE2_VALIDATION: u64 = 23;
    pub const NET_INIT: u64 = 30;
    pub const STAGE1_ORDER: u64 = 31;
    pub const STAGE2: u64 = 32;
    pub const IDENTIFY: u64 = 40;
    pub const SESSIONS: u64 = 50;
}

#[derive(Parser, Debug)]
#[command(name = "dlscf", version, about = "Polar SC-flip decoding with an LSTM flip scorer")]
struct Cli {
    /// Code configuration file (n, k, crc_poly, design_snr_db, construction).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output file; standard output when omitted (where that makes sense).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Progress logging; `simulate` also appends decoder session logs.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a code by Gaussian approximation and write its config file.
    Construct(ConstructArgs),
    /// BLER sweep over an Eb/N0 grid with paired noise.
    Simulate(SimulateArgs),
    /// Generate a stage-1 or stage-2 training dataset.
    GenDataset(GenDatasetArgs),
    /// Train a network (stage 1 supervised, stage 2 on-policy).
    Train(TrainArgs),
    /// Attempt-wise first-error identification rates.
    Identify(IdentifyArgs),
    /// Render a BLER or identification CSV as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct ConstructArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Design Eb/N0 in dB.
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    /// CRC generator without its leading term (hex).
    #[arg(long, default_value = "0x07")]
    crc_poly: String,
    #[arg(long, default_value_t = 8)]
    crc_len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DecoderKind {
    Sc,
    Scl,
    Dscf,
    Dl,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_delimiter = ',', default_values = ["sc", "scl", "dscf"])]
    decoders: Vec<DecoderKind>,
    /// Eb/N0 grid in dB.
    #[arg(long, value_delimiter = ',', default_values = ["1.0"])]
    snr: Vec<f64>,
    /// Attempt budget T of the flip decoders.
    #[arg(long, default_value_t = 5)]
    budget: usize,
    #[arg(long, default_value_t = 4)]
    list_size: usize,
    #[arg(long, default_value_t = 200)]
    max_errors: usize,
    #[arg(long, default_value_t = 100_000)]
    max_trials: usize,
    /// Fixed D-SCF α; otherwise taken from --alpha-table or optimized.
    #[arg(long)]
    alpha: Option<f64>,
    /// α cache; missing entries are optimized and written back.
    #[arg(long)]
    alpha_table: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    alpha_trials: usize,
    /// Network checkpoint for the DL decoder.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Number of session logs to append under --verbose.
    #[arg(long, default_value_t = 20)]
    log_sessions: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Training,
    Validation,
}

#[derive(Args, Debug)]
struct GenDatasetArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    stage: u8,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    #[arg(long, value_enum, default_value_t = SplitArg::Training)]
    split: SplitArg,
    /// Stage-1 checkpoint driving the controller (stage 2 only).
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    budget: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    stage: u8,
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Stage-1 training dataset; generated when omitted.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Stage-1 validation dataset; generated when omitted.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Starting checkpoint (required for stage 2).
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long)]
    training_size: Option<usize>,
    #[arg(long)]
    validation_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Per-epoch (stage 1) or per-iteration (stage 2) metrics CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProposerKind {
    Lstm,
    Dscf,
    Magnitude,
    Genie,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[arg(long, value_enum, default_value_t = ProposerKind::Lstm)]
    proposer: ProposerKind,
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    min_failures: usize,
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    #[arg(long, default_value_t = 4)]
    attempts: usize,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// BLER or identification CSV.
    #[arg(long)]
    input: PathBuf,
}

/// Bad invocation or configuration; maps to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e:#}");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global()?;
    }
    match &cli.command {
        Command::Construct(a) => construct(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::GenDataset(a) => gen_dataset(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Identify(a) => identify(cli, a),
        Command::Plot(a) => {
            let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let svg = plot::render(&text).map_err(usage)?;
            emit(cli.out.as_deref(), svg.as_bytes())
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(bytes).context("writing to stdout"),
    }
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| usage("this subcommand needs --out PATH"))
}

fn load_code(cli: &Cli) -> Result<CodeConfig> {
    let path = cli.config.as_deref().ok_or_else(|| usage("missing --config PATH"))?;
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    dlscf_core::polar::CodeFile::parse(&text)
        .and_then(|f| f.build())
        .map_err(|e| usage(format!("bad config {}: {e}", path.display())))
}

fn load_scorer(path: Option<&Path>, code: &CodeConfig) -> Result<NetScorer> {
    let path = path.ok_or_else(|| usage("this decoder needs --net CHECKPOINT"))?;
    let (header, net) = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    header.check(code)?;
    Ok(NetScorer::new(net, code)?)
}

fn construct(cli: &Cli, a: &ConstructArgs) -> Result<()> {
    let digits = a.crc_poly.trim_start_matches("0x").trim_start_matches("0X");
    let poly = u64::from_str_radix(digits, 16).map_err(|e| usage(format!("--crc-poly {:?}: {e}", a.crc_poly)))?;
    let crc = Crc::new(a.crc_len, poly).map_err(|e| usage(e.to_string()))?;
    let code = CodeConfig::new(a.n, a.k, crc, a.snr).map_err(|e| usage(e.to_string()))?;
    let text = toml::to_string(&code.to_file())?;
    log::info!("frozen set: {:?}", code.frozen_set());
    emit(cli.out.as_deref(), text.as_bytes())
}

fn dscf_alpha(cli: &Cli, a: &SimulateArgs, code: &CodeConfig, ebn0: f64) -> Result<f64> {
    if let Some(alpha) = a.alpha {
        return Ok(alpha);
    }
    let mut table = match &a.alpha_table {
        Some(p) if p.exists() => AlphaTable::load(p)?,
        _ => AlphaTable::default(),
    };
    if let Some(alpha) = table.get(code.block_len(), code.nonfrozen_count(), ebn0) {
        return Ok(alpha);
    }
    let stream = RngStream::new(cli.seed, streams::ALPHA);
    let (alpha, sweep) = optimize_alpha(code, ebn0, &DEFAULT_ALPHA_GRID, a.alpha_trials, a.budget, &stream)?;
    for p in sweep {
        log::info!("alpha {:.1}: {} / {} block errors", p.alpha, p.block_errors, p.trials);
    }
    log::info!("optimized alpha at {ebn0} dB: {alpha}");
    if let Some(p) = &a.alpha_table {
        table.insert(code.block_len(), code.nonfrozen_count(), ebn0, alpha);
        table.save(p)?;
    }
    Ok(alpha)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let code = load_code(cli)?;
    if a.decoders.is_empty() || a.snr.is_empty() {
        return Err(usage("need at least one decoder and one Eb/N0"));
    }
    let scorer = if a.decoders.contains(&DecoderKind::Dl) { Some(load_scorer(a.net.as_deref(), &code)?) } else { None };
    let stream = RngStream::new(cli.seed, streams::SIMULATE);
    let mut csv = String::new();
    for (gi, &ebn0) in a.snr.iter().enumerate() {
        let mut decoders = Vec::with_capacity(a.decoders.len());
        for kind in &a.decoders {
            decoders.push(match kind {
                DecoderKind::Sc => BlerDecoder::Sc,
                DecoderKind::Scl => BlerDecoder::CaScl { list_size: a.list_size },
                DecoderKind::Dscf => BlerDecoder::Dscf { alpha: dscf_alpha(cli, a, &code, ebn0)?, budget: a.budget },
                DecoderKind::Dl => BlerDecoder::DlScf { scorer: scorer.as_ref().expect("loaded above"), budget: a.budget },
            });
        }
        // One grid point at a time keeps per-point α; the trial stream still
        // depends only on the grid position.
        let points = run_bler_sweep(&decoders, &code, &[ebn0], a.max_errors, a.max_trials, &stream.substream(gi as u64))?;
        for p in &points {
            log::info!("{} at {} dB: {}/{} (noise {:016x})", p.decoder, p.ebn0_db, p.block_errors, p.trials, p.noise_digest);
        }
        let text = bler_csv(&points);
        csv.push_str(if gi == 0 { &text } else { text.split_once('\n').map_or("", |(_, rest)| rest) });
    }
    emit(cli.out.as_deref(), csv.as_bytes())?;
    if cli.verbose {
        if let (Some(scorer), Some(out)) = (&scorer, &cli.out) {
            let mut path = out.clone().into_os_string();
            path.push(".sessions.txt");
            let mut logs = String::new();
            for (gi, &ebn0) in a.snr.iter().enumerate() {
                logs.push_str(&format!("## ebn0_db {ebn0}\n"));
                let s = RngStream::new(cli.seed, streams::SESSIONS).substream(gi as u64);
                logs.push_str(&session_logs(scorer, &code, ebn0, a.budget, a.log_sessions, &s)?);
            }
            fs::write(&path, logs)?;
        }
    }
    Ok(())
}

fn gen_dataset(cli: &Cli, a: &GenDatasetArgs) -> Result<()> {
    let code = load_code(cli)?;
    let out = required_out(cli)?;
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let (split, stage1_stream, stage2_stream) = match a.split {
        SplitArg::Training => (Split::Training, streams::STAGE1_TRAIN, streams::STAGE2_TRAIN),
        SplitArg::Validation => (Split::Validation, streams::STAGE1_VALIDATION, streams::STAGE2_VALIDATION),
    };
    let ds = if a.stage == 1 {
        let stream = RngStream::new(cli.seed, stage1_stream);
        gen_stage1_dataset(&code, a.snr, a.count, &stream, split)?
    } else {
        let scorer = load_scorer(a.net.as_deref(), &code)?;
        let stream = RngStream::new(cli.seed, stage2_stream);
        gen_stage2_dataset(&scorer, &code, a.snr, a.count, a.budget, &stream, split)?
    };
    log::info!("{} samples, undo fraction {:.3}", ds.len(), ds.undo_fraction());
    ds.save(out)?;
    Ok(())
}

fn stage_config(a: &TrainArgs) -> Result<StageConfig> {
    let mut s = match (a.stage, a.preset) {
        (1, Preset::Desk) => StageConfig::stage1_desk(),
        (1, Preset::Full) => StageConfig::stage1_full(),
        (_, Preset::Desk) => StageConfig::stage2_desk(),
        (_, Preset::Full) => StageConfig::stage2_full(),
    };
    s.training_size = a.training_size.unwrap_or(s.training_size);
    s.validation_size = a.validation_size.unwrap_or(s.validation_size);
    s.epochs = a.epochs.unwrap_or(s.epochs);
    s.minibatch = a.minibatch.unwrap_or(s.minibatch);
    s.iterations = a.iterations.unwrap_or(s.iterations);
    s.learning_rate = a.lr.unwrap_or(s.learning_rate);
    s.dropout = a.dropout.unwrap_or(s.dropout);
    s.validate().map_err(|e| usage(e.to_string()))?;
    Ok(s)
}

fn load_dataset(path: &Path, code: &CodeConfig) -> Result<Dataset> {
    let ds = Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))?;
    if ds.fingerprint != dlscf_core::dataset::CodeFingerprint::of(code) {
        return Err(anyhow!("dataset {} was generated for a different code", path.display()));
    }
    Ok(ds)
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let code = load_code(cli)?;
    let out = required_out(cli)?;
    let stage = stage_config(a)?;
    let (net, curve) = if a.stage == 1 {
        let train_ds = match &a.train {
            Some(p) => load_dataset(p, &code)?,
            None => gen_stage1_dataset(
                &code,
                a.snr,
                stage.training_size,
                &RngStream::new(cli.seed, streams::STAGE1_TRAIN),
                Split::Training,
            )?,
        };
        let validation = match &a.validation {
            Some(p) => load_dataset(p, &code)?,
            None if stage.validation_size == 0 => Dataset::new(&code, a.snr, Split::Validation, true),
            None => gen_stage1_dataset(
                &code,
                a.snr,
                stage.validation_size,
                &RngStream::new(cli.seed, streams::STAGE1_VALIDATION),
                Split::Validation,
            )?,
        };
        let net = match &a.net {
            Some(p) => {
                let (header, net) = load_checkpoint(p)?;
                header.check(&code)?;
                net
            }
            None => LstmNet::new(
                network_for(&code, a.layers, a.hidden, &stage),
                &RngStream::new(cli.seed, streams::NET_INIT),
            )
            .map_err(|e| usage(e.to_string()))?,
        };
        let outcome = train_supervised(net, &train_ds, &validation, &stage, &RngStream::new(cli.seed, streams::STAGE1_ORDER))?;
        let mut curve = String::from("epoch,learning_rate,train_loss,validation_loss\n");
        curve.push_str(&format!("0,,,{:.6}\n", outcome.initial_validation_loss));
        for e in &outcome.curve {
            curve.push_str(&format!("{},{:e},{:.6},{:.6}\n", e.epoch, e.learning_rate, e.train_loss, e.validation_loss));
        }
        (outcome.net, curve)
    } else {
        let path = a.net.as_deref().ok_or_else(|| usage("stage 2 needs --net with a stage-1 checkpoint"))?;
        let (header, net) = load_checkpoint(path)?;
        header.check(&code)?;
        let outcome = train_stage2(net, &code, a.snr, &stage, &RngStream::new(cli.seed, streams::STAGE2))?;
        let mut curve = String::from("iteration,training_samples,undo_fraction,validation_loss,undo_accuracy,flip_accuracy\n");
        for it in &outcome.iterations {
            curve.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                it.iteration,
                it.training_samples,
                it.undo_fraction,
                it.validation_loss,
                it.accuracy.undo_accuracy(),
                it.accuracy.flip_accuracy()
            ));
        }
        (outcome.net, curve)
    };
    save_checkpoint(out, CheckpointHeader::of(&code), &net)?;
    if let Some(p) = &a.curve {
        fs::write(p, curve)?;
    }
    Ok(())
}

fn identify(cli: &Cli, a: &IdentifyArgs) -> Result<()> {
    let code = load_code(cli)?;
    let scorer = if a.proposer == ProposerKind::Lstm { Some(load_scorer(a.net.as_deref(), &code)?) } else { None };
    let proposer = match a.proposer {
        ProposerKind::Lstm => FlipProposer::Scorer(scorer.as_ref().expect("loaded above")),
        ProposerKind::Dscf => FlipProposer::Dscf { alpha: a.alpha },
        ProposerKind::Magnitude => FlipProposer::Magnitude,
        ProposerKind::Genie => FlipProposer::Genie,
    };
    let stream = RngStream::new(cli.seed, streams::IDENTIFY);
    let report = run_identification_experiment(proposer, &code, a.snr, a.attempts, a.min_failures, &stream)
        .map_err(|e| usage(e.to_string()))?;
    emit(cli.out.as_deref(), report.to_csv().as_bytes())
}
