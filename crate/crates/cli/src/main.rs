use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use subband_core::codestream::{decode_stream, encode, read_header_features, CodeblockGrid};
use subband_core::io::{read_image, write_codestream, write_image, write_pyramid, IoError};
use subband_core::model::{ApproxTarget, HeadConfig, ModelConfig, Scenario};
use subband_core::nn::Mode;
use subband_core::pipeline::evaluate::RmseEntry;
use subband_core::pipeline::report::rmse_table;
use subband_core::pipeline::train::prepare;
use subband_core::pipeline::{
    emit_report, evaluate, load_trained, run_experiment, write_fixture, write_natural_fixture, EvalOptions, ExperimentConfig, Item,
    MetricsReport, PipelineError, ReportFormat, SplitName, SynthConfig,
};
use subband_core::{wavelet, CodestreamError, Image, SubbandKind};

#[derive(Parser)]
#[command(name = "subband", version, about = "Wavelet codestream tools and compressed-domain classifier")]
struct Cli {
    /// Worker threads for data ingestion. Timed phases always run on one.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
            Format::Text => ReportFormat::Text,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchScenario {
    #[value(name = "1")]
    Minimal,
    #[value(name = "2")]
    Partial,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Encode an image (PNG, PGM or PPM) into a .wcs codestream.
    Encode {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = CodeblockGrid::DEFAULT_SIZE)]
        block: usize,
        input: PathBuf,
        output: PathBuf,
    },
    /// Decode a codestream down to a level. Level 0 writes an image;
    /// coarser levels need a .pyr output.
    Decode {
        #[arg(long, default_value_t = 0)]
        level: usize,
        input: PathBuf,
        output: PathBuf,
    },
    /// Print per-codeblock byte counts (B) and significant bitplanes (MB).
    Inspect {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        input: PathBuf,
    },
    /// Write a synthetic labelled texture dataset.
    Synth {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        /// Total number of images.
        #[arg(long = "n", default_value_t = 400)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        bands: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image file extension: ppm, pgm or png.
        #[arg(long, default_value = "ppm")]
        image_format: String,
        /// Write smooth natural-looking images into a single class instead.
        #[arg(long)]
        natural: bool,
        out_dir: PathBuf,
    },
    /// Split, train and evaluate as described by an experiment file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Write the per-epoch training log as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint on one split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Time classification under each decoding scenario.
    Bench {
        #[arg(long, value_enum, num_args = 1..)]
        scenario: Vec<BenchScenario>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = CodeblockGrid::DEFAULT_SIZE)]
        block: usize,
        /// Experiment file supplying head and training settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training epochs per scenario; 0 times an untrained network on every image.
        #[arg(long, default_value_t = 0)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write approximated and decoded sub-bands of one codestream as
    /// images, with per-band RMSE.
    Approximate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        input: PathBuf,
        out_dir: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn data(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |m| CliError::Data(format!("{}: {m}", path.display()))
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| io_err(p, e)),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn cmd_encode(levels: usize, block: usize, input: &Path, output: &Path) -> Result<(), CliError> {
    let image = read_image(input).map_err(|e| data(input)(e.to_string()))?;
    let pyramid = wavelet::decompose(&image, levels).map_err(|e| CliError::Usage(e.to_string()))?;
    let grid = CodeblockGrid::square(block).map_err(|e| CliError::Usage(e.to_string()))?;
    let cs = encode(&pyramid, grid).map_err(|e| CliError::Data(e.to_string()))?;
    write_codestream(output, &cs).map_err(|e| data(output)(e.to_string()))?;
    eprintln!(
        "{}: {}x{}x{} {}-bit, {levels} levels, {} bytes ({} raw)",
        output.display(),
        image.width(),
        image.height(),
        image.bands(),
        image.bit_depth(),
        cs.byte_len(),
        image.raw_byte_len()
    );
    Ok(())
}

fn extension(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn cmd_decode(level: usize, input: &Path, output: &Path) -> Result<(), CliError> {
    let to_pyramid = extension(output) == "pyr";
    if level > 0 && !to_pyramid {
        return Err(CliError::Usage(format!(
            "decoding to level {level} yields sub-bands; use a .pyr output"
        )));
    }
    let file = File::open(input).map_err(|e| io_err(input, e))?;
    let out = decode_stream(BufReader::new(file), level).map_err(|e| match e {
        CodestreamError::InvalidLevel { .. } => CliError::Usage(e.to_string()),
        other => data(input)(other.to_string()),
    })?;
    if to_pyramid {
        let mut f = io::BufWriter::new(File::create(output).map_err(|e| io_err(output, e))?);
        write_pyramid(&mut f, &out.pyramid).map_err(|e| data(output)(e.to_string()))?;
        f.flush().map_err(|e| io_err(output, e))?;
    } else {
        let image = out.image.expect("level 0 decode yields an image");
        write_image(output, &image).map_err(|e| match e {
            IoError::Unsupported(m) => CliError::Usage(m),
            other => data(output)(other.to_string()),
        })?;
    }
    eprintln!("{}: read {} bytes", input.display(), out.bytes_read);
    Ok(())
}

fn cmd_inspect(format: Format, input: &Path) -> Result<(), CliError> {
    let file = File::open(input).map_err(|e| io_err(input, e))?;
    let features = read_header_features(BufReader::new(file)).map_err(|e| data(input)(e.to_string()))?;
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&features).expect("features serialize") + "\n",
        Format::Csv => {
            let mut s = String::from("level,band,subband,x0,y0,width,height,mb,b\n");
            for b in &features.blocks {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    b.level,
                    b.band,
                    b.kind.name(),
                    b.x0,
                    b.y0,
                    b.width,
                    b.height,
                    b.bitplanes,
                    b.bytes
                ));
            }
            s
        }
        Format::Text => features.to_table(),
    };
    write_output(None, text.as_bytes())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    classes: usize,
    count: usize,
    size: usize,
    bands: usize,
    seed: u64,
    image_format: String,
    natural: bool,
    out_dir: &Path,
) -> Result<(), CliError> {
    if natural {
        let n = write_natural_fixture(out_dir, count, size, bands, seed, &image_format)?;
        eprintln!("wrote {n} natural images to {}", out_dir.join("natural").display());
        return Ok(());
    }
    let cfg = SynthConfig {
        classes,
        count,
        size,
        bands,
        seed,
        format: image_format,
        ..SynthConfig::default()
    };
    let n = write_fixture(out_dir, &cfg)?;
    eprintln!("wrote {n} images in {classes} classes to {}", out_dir.display());
    Ok(())
}

fn log_epoch(e: &subband_core::pipeline::EpochLog) {
    let val = e.val_accuracy.map_or("-".to_string(), |v| format!("{v:.2}"));
    eprintln!(
        "epoch {:>3}  loss {:.6}  (cls {:.6}, approx {:.6})  train acc {:.2}  val acc {val}",
        e.epoch, e.loss, e.classification_loss, e.approximation_loss, e.train_accuracy
    );
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: &Path,
    epochs: Option<usize>,
    seed: Option<u64>,
    checkpoint: Option<PathBuf>,
    report: Option<PathBuf>,
    format: Option<Format>,
    log: Option<PathBuf>,
    threads: usize,
) -> Result<(), CliError> {
    let mut cfg = load_experiment(config)?;
    cfg.threads = threads;
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    if report.is_some() {
        cfg.report_path = report;
    }
    if let Some(f) = format {
        cfg.report_format = f.into();
    }
    let out = run_experiment(&cfg, &EvalOptions { batch_size: cfg.batch_size, rmse: true }, log_epoch)?;
    if let Some(path) = &log {
        let text = serde_json::to_string_pretty(&out.log).expect("log serializes");
        fs::write(path, text).map_err(|e| io_err(path, e))?;
    }
    write_output(cfg.report_path.as_deref(), &emit_report(&[out.report], cfg.report_format))
}

fn cmd_evaluate(
    config: &Path,
    checkpoint: &Path,
    split: &str,
    report: Option<PathBuf>,
    format: Format,
    threads: usize,
) -> Result<(), CliError> {
    let mut cfg = load_experiment(config)?;
    cfg.threads = threads;
    let split: SplitName = split.parse()?;
    let (dataset, mut model) = load_trained(&cfg, checkpoint)?;
    let mut r = evaluate(&mut model, &dataset, split, &EvalOptions { batch_size: cfg.batch_size, rmse: true })?;
    r.epochs = cfg.epochs;
    r.seed = cfg.seed;
    write_output(report.as_deref(), &emit_report(&[r], format.into()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    scenarios: Vec<BenchScenario>,
    dataset: PathBuf,
    levels: usize,
    block: usize,
    config: Option<PathBuf>,
    epochs: usize,
    seed: u64,
    format: Format,
    report: Option<PathBuf>,
    threads: usize,
) -> Result<(), CliError> {
    let mut base = match &config {
        Some(p) => load_experiment(p)?,
        None => ExperimentConfig {
            batch_size: 16,
            block_size: block,
            model: ModelConfig {
                normalize_approx_loss: true,
                head: HeadConfig::compact(),
                ..ModelConfig::default()
            },
            ..ExperimentConfig::default()
        },
    };
    if levels < 2 {
        return Err(CliError::Usage("bench needs at least 2 decomposition levels".into()));
    }
    base.dataset = dataset;
    base.threads = threads;
    base.epochs = epochs;
    base.seed = seed;
    base.model.levels = levels;
    base.model.target = ApproxTarget::Subbands;
    if epochs == 0 {
        // nothing to train, so time classification of every image
        base.fractions = [0.0, 0.0, 1.0];
    }
    base.eval_split = SplitName::Test;
    let scenarios = if scenarios.is_empty() {
        vec![BenchScenario::Minimal, BenchScenario::Partial, BenchScenario::Full]
    } else {
        scenarios
    };
    let mut rows: Vec<MetricsReport> = Vec::new();
    for s in scenarios {
        let mut cfg = base.clone();
        let (scenario, m) = match s {
            BenchScenario::Minimal => (Scenario::Minimal, levels - 1),
            BenchScenario::Partial => (Scenario::Partial, levels - 2),
            BenchScenario::Full => (Scenario::Full, 0),
        };
        cfg.model.scenario = scenario;
        cfg.model.approx_layers = m;
        let out = run_experiment(&cfg, &EvalOptions { batch_size: cfg.batch_size, rmse: false }, log_epoch)?;
        eprintln!(
            "{} {}: test {:.4}s (decode {:.4}s), {} of {} bytes read",
            out.report.group, out.report.method, out.report.timing.test_s, out.report.timing.decode_s,
            out.report.bytes_read, out.report.bytes_total
        );
        rows.push(out.report);
    }
    write_output(report.as_deref(), &emit_report(&rows, format.into()))
}

fn display_plane(values: &[f64], kind: Option<SubbandKind>) -> Vec<u16> {
    let offset = if matches!(kind, Some(k) if k != SubbandKind::LL) { 128.0 } else { 0.0 };
    values
        .iter()
        .map(|v| (v + offset).round().clamp(0.0, 255.0) as u16)
        .collect()
}

fn cmd_approximate(config: &Path, checkpoint: &Path, input: &Path, out_dir: &Path, threads: usize) -> Result<(), CliError> {
    let mut cfg = load_experiment(config)?;
    cfg.threads = threads;
    let (_, mut model) = load_trained(&cfg, checkpoint)?;
    let mcfg = model.config.clone();
    if mcfg.approx_layers == 0 {
        return Err(CliError::Usage("the configured model has no approximation layers".into()));
    }
    let item = Item {
        source: input.to_path_buf(),
        archive: input.to_path_buf(),
        label: 0,
    };
    let sample = prepare(&item, &mcfg).map_err(|e| data(input)(e.to_string()))?;
    let out = model.forward(&sample.input, Mode::Eval).map_err(|e| CliError::Data(e.to_string()))?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let scale = mcfg.coefficient_scale;
    let mut entries = Vec::new();
    for ((approx, target), level) in out.approximations.iter().zip(&sample.targets).zip(mcfg.approx_levels()) {
        let (_, c, h, w) = approx.dims4().map_err(|e| CliError::Data(e.to_string()))?;
        let plane = h * w;
        for ch in 0..c {
            let (band, kind) = if level == 0 { (ch, None) } else { (ch / 4, Some(SubbandKind::ALL[ch % 4])) };
            let name = kind.map_or("image", |k| k.name());
            let a: Vec<f64> = approx.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v / scale).collect();
            let d: Vec<f64> = target.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v / scale).collect();
            let mse = a.iter().zip(&d).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / plane as f64;
            entries.push(RmseEntry {
                level,
                band,
                subband: name.to_string(),
                rmse: mse.sqrt(),
            });
            for (suffix, values) in [("approx", &a), ("decoded", &d)] {
                let img = Image::new(w, h, 1, 8, display_plane(values, kind)).expect("8-bit plane");
                let path = out_dir.join(format!("level{level}_band{band}_{name}_{suffix}.pgm"));
                write_image(&path, &img).map_err(|e| data(&path)(e.to_string()))?;
            }
        }
    }
    let json = serde_json::to_string_pretty(&entries).expect("rmse serializes");
    let path = out_dir.join("rmse.json");
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    write_output(None, rmse_table(&entries).as_bytes())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Encode {
            levels,
            block,
            input,
            output,
        } => cmd_encode(levels, block, &input, &output),
        Command::Decode { level, input, output } => cmd_decode(level, &input, &output),
        Command::Inspect { format, input } => cmd_inspect(format, &input),
        Command::Synth {
            classes,
            count,
            size,
            bands,
            seed,
            image_format,
            natural,
            out_dir,
        } => cmd_synth(classes, count, size, bands, seed, image_format, natural, &out_dir),
        Command::Train {
            config,
            epochs,
            seed,
            checkpoint,
            report,
            format,
            log,
        } => cmd_train(&config, epochs, seed, checkpoint, report, format, log, threads),
        Command::Evaluate {
            config,
            checkpoint,
            split,
            report,
            format,
        } => cmd_evaluate(&config, &checkpoint, &split, report, format, threads),
        Command::Bench {
            scenario,
            dataset,
            levels,
            block,
            config,
            epochs,
            seed,
            format,
            report,
        } => cmd_bench(scenario, dataset, levels, block, config, epochs, seed, format, report, threads),
        Command::Approximate {
            config,
            checkpoint,
            input,
            out_dir,
        } => cmd_approximate(&config, &checkpoint, &input, &out_dir, threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::Usage(m))) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::Data(m))) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(3)
        }
    }
}
