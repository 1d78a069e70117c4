//! `neurotree` command-line experiments: synthetic data, training,
//! streaming simulation, regularization sweeps, FoM and model reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neurotree::eval::{
    compressed_oblique, confusion_metrics, ea_fom, feature_usage_report, knee_index,
    sweep_regularization, sweep_to_csv, ModelKind, SweepConfig,
};
use neurotree::features::{CostTable, FeatureKind, FeatureTable};
use neurotree::gbdt::{train_dvte, TrainConfig, DEFAULT_DEPTH_SCHEDULE};
use neurotree::model_io::{load_model, save_model, write_atomic, Model};
use neurotree::oblique::{train_oblique, ObliqueConfig};
use neurotree::quant::{model_size_bytes, quantize_fixed_point};
use neurotree::runtime::{detection_latency, simulate_stream_dvte, simulate_stream_oblique, ParallelScheme};
use neurotree::signals::{
    generate_synthetic_recording, load_recording_csv, write_recording_csv, Recording,
    SyntheticParams, TICK_S,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "neurotree", version, about = "Cost-aware tree classifiers for streaming neural signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labelled recording as CSV.
    GenData {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        shape: ShapeArgs,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write it with a training log.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Keep the oblique tree as trained (skip prune, share, quantize).
        #[arg(long)]
        no_compress: bool,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream a recording through a saved model.
    Simulate {
        /// model.json written by train
        #[arg(long)]
        model_path: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Oblique evaluation layout: single, full or layers:<groups>.
        #[arg(long, default_value = "single")]
        scheme: String,
        /// Consecutive positive ticks required to count a detection.
        #[arg(long, default_value_t = 1)]
        hold: usize,
        /// TOML overrides for feature power and latency
        #[arg(long)]
        cost_table: Option<PathBuf>,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated sweep over the regularization coefficient.
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Score oblique models after compression instead of as trained.
        #[arg(long)]
        compress_oblique: bool,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy-area figure of merit.
    Fom {
        /// Watts per channel.
        #[arg(long)]
        power_per_ch: f64,
        /// mm^2 per channel.
        #[arg(long)]
        area_per_ch: f64,
        /// Samples per second.
        #[arg(long)]
        fs: f64,
    },
    /// Feature usage and storage size of a saved model.
    Report {
        /// model.json written by train
        #[arg(long)]
        model_path: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ShapeArgs {
    #[arg(long, default_value_t = 600.0)]
    duration_s: f64,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(long, default_value_t = 6)]
    events: usize,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Recording CSV.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Generate the recording instead of reading one; needs --seed.
    #[arg(long)]
    synthetic: bool,
    /// Random seed for generation and training (training defaults to 42)
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModelArg {
    Dvte,
    Oblique,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "dvte")]
    model: ModelArg,
    /// Regularization coefficient, or a comma-separated list for sweeps.
    #[arg(long, default_value = "0")]
    c: String,
    /// DVTE per-tree maximum depths, comma separated.
    #[arg(long)]
    depth_schedule: Option<String>,
    /// Oblique tree depth.
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Oblique codebook size.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Fixed-point fraction bits (oblique default 12; DVTE unquantized unless given).
    #[arg(long)]
    frac_bits: Option<u32>,
    /// TOML overrides for feature power and latency
    #[arg(long)]
    cost_table: Option<PathBuf>,
    /// Override the model's default gradient step.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Oblique training epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

enum CliError {
    Usage(String),
    Lib(neurotree::Error),
}

impl From<neurotree::Error> for CliError {
    fn from(e: neurotree::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use neurotree::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) => match e.root() {
                E::InvalidArgument(_) => 2,
                E::Divergence { .. } => 4,
                _ => 3,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Prefixes I/O failures with the file they concern.
fn at_path<T>(path: &Path, r: neurotree::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        neurotree::Error::Io(io) => CliError::Lib(neurotree::Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        ))),
        other => CliError::Lib(other),
    })
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse::<T>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .or_else(|_| usage(format!("--{flag}: cannot parse {text:?} as a comma-separated list")))
}

impl InputArgs {
    fn params(&self) -> CliResult<Option<SyntheticParams>> {
        if !self.synthetic {
            return Ok(None);
        }
        let Some(seed) = self.seed else {
            return usage("--synthetic requires --seed");
        };
        Ok(Some(SyntheticParams {
            seed,
            duration_s: self.shape.duration_s,
            channels: self.shape.channels,
            n_events: self.shape.events,
            ..Default::default()
        }))
    }

    fn load(&self) -> CliResult<Recording> {
        match (&self.input, self.params()?) {
            (Some(path), None) => at_path(path, load_recording_csv(path)),
            (None, Some(p)) => Ok(generate_synthetic_recording(&p)?),
            _ => usage("give exactly one of --input <csv> or --synthetic --seed <n>"),
        }
    }

    fn describe(&self) -> CliResult<Value> {
        Ok(match self.params()? {
            Some(p) => json!({ "synthetic": p }),
            None => json!({ "input": self.input.as_ref().map(|p| p.display().to_string()) }),
        })
    }

    fn training_seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }
}

fn cost_table(path: &Option<PathBuf>) -> CliResult<CostTable> {
    Ok(match path {
        Some(p) => at_path(p, CostTable::load(p))?,
        None => CostTable::default(),
    })
}

fn costs_json(costs: &CostTable) -> Value {
    FeatureKind::ALL
        .iter()
        .map(|&k| {
            (
                k.name().to_string(),
                json!({ "power_nw": costs.power_nw(k), "latency_s": costs.latency_s(k) }),
            )
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

struct Configs {
    dvte: TrainConfig,
    oblique: ObliqueConfig,
    c_values: Vec<f64>,
}

impl ModelArgs {
    fn kind(&self) -> ModelKind {
        match self.model {
            ModelArg::Dvte => ModelKind::Dvte,
            ModelArg::Oblique => ModelKind::Oblique,
        }
    }

    fn configs(&self, seed: u64) -> CliResult<Configs> {
        let c_values: Vec<f64> = parse_list(&self.c, "c")?;
        let schedule: Vec<usize> = match &self.depth_schedule {
            Some(s) => parse_list(s, "depth-schedule")?,
            None => DEFAULT_DEPTH_SCHEDULE.to_vec(),
        };
        let mut dvte = TrainConfig {
            n_trees: schedule.len(),
            depth_schedule: schedule,
            c: c_values[0],
            seed,
            ..Default::default()
        };
        let mut oblique = ObliqueConfig {
            max_depth: self.depth,
            k: self.k,
            c: c_values[0],
            seed,
            ..Default::default()
        };
        if let Some(fb) = self.frac_bits {
            oblique.frac_bits = fb;
        }
        if let Some(lr) = self.learning_rate {
            dvte.learning_rate = lr;
            oblique.learning_rate = lr;
        }
        if let Some(n) = self.epochs {
            oblique.epochs = n;
        }
        match self.kind() {
            ModelKind::Dvte => dvte.validate()?,
            ModelKind::Oblique => oblique.validate()?,
        }
        Ok(Configs {
            dvte,
            oblique,
            c_values,
        })
    }
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(neurotree::Error::from)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    write_atomic(path, format!("{text}\n").as_bytes())?;
    Ok(())
}

fn gen_data(seed: u64, shape: &ShapeArgs, out: &Path) -> CliResult<()> {
    let p = SyntheticParams {
        seed,
        duration_s: shape.duration_s,
        channels: shape.channels,
        n_events: shape.events,
        ..Default::default()
    };
    let rec = generate_synthetic_recording(&p)?;
    prepare_out(out)?;
    let path = out.join("recording.csv");
    write_recording_csv(&rec, &path)?;
    write_json(&out.join("gen_data_log.json"), &json!({ "command": "gen-data", "synthetic": p }))?;
    println!("wrote {} ({} samples, {} events)", path.display(), rec.len(), rec.onsets().len());
    Ok(())
}

fn train(input: &InputArgs, args: &ModelArgs, no_compress: bool, out: &Path) -> CliResult<()> {
    let cfg = args.configs(input.training_seed())?;
    if cfg.c_values.len() != 1 {
        return usage("train takes a single --c value");
    }
    let costs = cost_table(&args.cost_table)?;
    let rec = input.load()?;
    let table = FeatureTable::from_recording(&rec)?;
    let data = &table.dataset;
    let (model, config) = match args.kind() {
        ModelKind::Dvte => {
            let mut e = train_dvte(data, &cfg.dvte, &costs)?;
            if let Some(fb) = args.frac_bits {
                e = quantize_fixed_point(&e, fb)?;
            }
            (Model::Dvte(e), json!(cfg.dvte))
        }
        ModelKind::Oblique => {
            let t = if no_compress {
                train_oblique(data, &cfg.oblique, &costs)?
            } else {
                compressed_oblique(data, &cfg.oblique, &costs)?
            };
            (Model::Oblique(t), json!(cfg.oblique))
        }
    };
    let decisions: Vec<bool> = data
        .rows()
        .map(|r| predict_decision(&model, r))
        .collect::<neurotree::Result<_>>()?;
    let metrics = confusion_metrics(&decisions, data.labels(), TICK_S)?;
    let bytes = model_bytes(&model);

    prepare_out(out)?;
    save_model(&model, out.join("model.json"))?;
    write_json(
        &out.join("train_log.json"),
        &json!({
            "command": "train",
            "source": input.describe()?,
            "model": model.kind(),
            "compressed": matches!(model, Model::Oblique(_)) && !no_compress,
            "config": config,
            "costs": costs_json(&costs),
            "rows": data.n_rows(),
            "training_metrics": metrics,
            "model_bytes": bytes,
        }),
    )?;
    println!(
        "trained {} on {} rows: training F1 {:.4}, {} bytes -> {}",
        model.kind(),
        data.n_rows(),
        metrics.f1,
        bytes,
        out.join("model.json").display()
    );
    Ok(())
}

fn predict_decision(model: &Model, row: &[f64]) -> neurotree::Result<bool> {
    Ok(match model {
        Model::Dvte(e) => e.predict(row)? >= 0.5,
        Model::Oblique(t) => neurotree::oblique::predict_hard(t, row)? >= 0.0,
    })
}

fn model_bytes(model: &Model) -> u64 {
    match model {
        Model::Dvte(e) => model_size_bytes(e),
        Model::Oblique(t) => model_size_bytes(t),
    }
}

fn simulate(
    model_path: &Path,
    input: &InputArgs,
    scheme: &str,
    hold: usize,
    cost_path: &Option<PathBuf>,
    out: &Path,
) -> CliResult<()> {
    if hold == 0 {
        return usage("--hold must be at least 1");
    }
    let model = at_path(model_path, load_model(model_path))?;
    let costs = cost_table(cost_path)?;
    let rec = input.load()?;
    let (trace, scheme_text) = match &model {
        Model::Dvte(e) => (simulate_stream_dvte(e, &rec, &costs)?, None),
        Model::Oblique(t) => {
            let s = ParallelScheme::parse(scheme, t.depth)?;
            (simulate_stream_oblique(t, &rec, &s, &costs)?, Some(s.to_string()))
        }
    };
    let metrics = confusion_metrics(&trace.decisions(), &trace.labels(), TICK_S)?;
    let latencies = detection_latency(&trace, &trace.onsets_s, hold);

    prepare_out(out)?;
    trace.write_csv(out.join("trace.csv"))?;
    let summary = json!({
        "command": "simulate",
        "model_path": model_path.display().to_string(),
        "model": model.kind(),
        "source": input.describe()?,
        "scheme": scheme_text,
        "hold_ticks": hold,
        "costs": costs_json(&costs),
        "ticks": trace.ticks.len(),
        "metrics": metrics,
        "mean_power_nw": trace.mean_power_nw,
        "mean_inference_power_nw": trace.mean_inference_power_nw,
        "mean_latency_s": trace.mean_latency_s,
        "onsets_s": trace.onsets_s,
        "detection_latencies_s": latencies,
    });
    write_json(&out.join("summary.json"), &summary)?;
    let detected = latencies.iter().flatten().count();
    println!(
        "{} ticks: F1 {:.4}, FAR {:.2}/h, {}/{} onsets detected, mean power {:.1} nW",
        trace.ticks.len(),
        metrics.f1,
        metrics.false_alarms_per_hour,
        detected,
        latencies.len(),
        trace.mean_power_nw
    );
    Ok(())
}

fn sweep(input: &InputArgs, args: &ModelArgs, folds: usize, compress_oblique: bool, out: &Path) -> CliResult<()> {
    let cfg = args.configs(input.training_seed())?;
    let costs = cost_table(&args.cost_table)?;
    let rec = input.load()?;
    let config = SweepConfig {
        dvte: cfg.dvte,
        oblique: cfg.oblique,
        costs,
        folds,
        compress_oblique,
    };
    let rows = sweep_regularization(&rec, args.kind(), &cfg.c_values, &config)?;
    let knee = knee_index(&rows);

    prepare_out(out)?;
    let csv = sweep_to_csv(&rows);
    write_atomic(&out.join("sweep.csv"), csv.as_bytes())?;
    write_json(
        &out.join("sweep_log.json"),
        &json!({
            "command": "sweep",
            "source": input.describe()?,
            "model": args.kind(),
            "c_values": cfg.c_values,
            "folds": folds,
            "compress_oblique": compress_oblique,
            "dvte_config": config.dvte,
            "oblique_config": config.oblique,
            "costs": costs_json(&config.costs),
            "rows": rows,
            "knee_c": rows[knee].c,
        }),
    )?;
    print!("{csv}");
    println!("knee C = {}", rows[knee].c);
    Ok(())
}

fn fom(power: f64, area: f64, fs: f64) -> CliResult<()> {
    let v = ea_fom(power, area, fs)?;
    println!("E-A FoM: {:.1} pJ·mm²/S ({v:e} J·mm²/S)", v * 1e12);
    Ok(())
}

fn report(model_path: &Path) -> CliResult<()> {
    let model = at_path(model_path, load_model(model_path))?;
    println!("model: {} ({} channels)", model.kind(), model.channels());
    println!("feature,channel,count,expected_per_window");
    for r in feature_usage_report(&model) {
        let expected = r.expected_per_window.map_or(String::from("-"), |v| format!("{v:.4}"));
        println!("{},{},{},{}", r.feature.name(), r.channel, r.count, expected);
    }
    println!("model_size_bytes: {}", model_bytes(&model));
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { seed, shape, out } => gen_data(seed, &shape, &out),
        Command::Train {
            input,
            model,
            no_compress,
            out,
        } => train(&input, &model, no_compress, &out),
        Command::Simulate {
            model_path,
            input,
            scheme,
            hold,
            cost_table,
            out,
        } => simulate(&model_path, &input, &scheme, hold, &cost_table, &out),
        Command::Sweep {
            input,
            model,
            folds,
            compress_oblique,
            out,
        } => sweep(&input, &model, folds, compress_oblique, &out),
        Command::Fom {
            power_per_ch,
            area_per_ch,
            fs,
        } => fom(power_per_ch, area_per_ch, fs),
        Command::Report { model_path } => report(&model_path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            match e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Lib(err) => eprintln!("error: {err}"),
            }
            ExitCode::from(code)
        }
    }
}
