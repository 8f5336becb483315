//! The `gazeattn` command.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 filesystem failure.
//! Each subcommand echoes its resolved configuration as `key: value` lines,
//! on stdout unless stdout carries the subcommand's data.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::preprocess::{prepare_labels, read_gaze_csv, read_overrides};
use crate::data::{
    dataset_shape, load_dataset, save_dataset, split, synth_generate, LabelSource, LabeledSequence,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, predict_sequence, EvalOptions, DEFAULT_SMOOTHING};
use crate::model::{
    FeatureCube, ModelConfig, ModelParams, DEFAULT_DROPOUT, DEFAULT_GRID, DEFAULT_HIDDEN,
};
use crate::tensor::Matrix;
use crate::train::{
    check_gradients, train_with_validation, AdamConfig, TrainConfig, DEFAULT_BPTT_WINDOW,
    DEFAULT_GAMMA,
};

#[derive(Debug, Parser)]
#[command(
    name = "gazeattn",
    version,
    about = "Recurrent soft-attention fixation prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic moving-target dataset.
    Synth(SynthArgs),
    /// Turn a gaze CSV into per-frame grid labels for a feature sequence.
    Prep(PrepArgs),
    /// Split every sequence into a temporal train prefix and test suffix.
    Split(SplitArgs),
    /// Train a model and write a checkpoint and loss curve.
    Train(TrainArgs),
    /// Score a checkpoint against labeled data.
    Eval(EvalArgs),
    /// Write per-frame attention maps as CSV.
    Predict(PredictArgs),
    /// Compare analytic gradients with central differences on a small random model.
    Gradcheck(GradcheckArgs),
    /// Write one grayscale PGM heatmap per frame of a predict CSV.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LabelKind {
    Target,
    Independent,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = 16)]
    depth: usize,
    #[arg(long, default_value_t = 20)]
    sequences: usize,
    #[arg(long, default_value_t = 120)]
    frames: usize,
    /// Max cells the target moves per frame along each axis.
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long, default_value_t = 32.0)]
    signal: f64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = LabelKind::Target)]
    labels: LabelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PrepArgs {
    /// CSV with header `frame,participant,x,y,width,height`; empty x,y = no fixation.
    #[arg(long)]
    gaze: PathBuf,
    /// GZDS file holding the frames to label.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Sequence in the features file to label; required when it holds several.
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    /// CSV with header `frame,label` applied after filling.
    #[arg(long = "override")]
    overrides: Option<PathBuf>,
    /// Total frame count when no features file is given.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Labels as CSV `frame,label`.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// One LSTM layer, 200 iterations.
    Car,
    /// Two LSTM layers, 1000 iterations.
    Uno,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Loss curve CSV path.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Grid side; only checked against the data.
    #[arg(long)]
    grid: Option<usize>,
    /// LSTM layers [default: 1, or the profile's]
    #[arg(long)]
    layers: Option<usize>,
    /// LSTM hidden size [default: 64]
    #[arg(long)]
    hidden: Option<usize>,
    /// L2 weight on all parameters [default: 0.01]
    #[arg(long)]
    gamma: Option<f64>,
    /// Iteration cap [default: 1000, or the profile's]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Frames per BPTT window [default: 30]
    #[arg(long)]
    window: Option<usize>,
    /// Dropout rate on LSTM outputs [default: 0.5]
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    /// Passes over the windows [default: 1]
    #[arg(long)]
    epochs: Option<usize>,
    /// Global gradient-norm clip, 0 disables [default: 5]
    #[arg(long)]
    clip: Option<f64>,
    /// Seeds initialization, window order and dropout.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Held-out GZDS data for the curve's val_kl column.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    val_every: usize,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    epsilon: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// `key: value` report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-frame `frame,kl,correct`.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    epsilon: f64,
    /// Frames per unroll.
    #[arg(long, default_value_t = DEFAULT_BPTT_WINDOW)]
    window: usize,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BPTT_WINDOW)]
    window: usize,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    grid: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    coords: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Predict CSV, `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Prep(a) => prep(a),
        Command::Split(a) => split_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Render(a) => render(a),
    }
}

fn echo(w: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(w, "{k}: {v}")?;
    }
    Ok(())
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        grid_side: a.grid,
        depth: a.depth,
        num_sequences: a.sequences,
        frames_per_sequence: a.frames,
        step_size: a.step,
        signal_strength: a.signal,
        noise_sigma: a.noise,
        labels: match a.labels {
            LabelKind::Target => LabelSource::Target,
            LabelKind::Independent => LabelSource::Independent,
        },
        seed: a.seed,
    };
    echo(
        &mut io::stdout(),
        &[
            ("grid", cfg.grid_side.to_string()),
            ("depth", cfg.depth.to_string()),
            ("sequences", cfg.num_sequences.to_string()),
            ("frames", cfg.frames_per_sequence.to_string()),
            ("step", cfg.step_size.to_string()),
            ("signal", cfg.signal_strength.to_string()),
            ("noise", cfg.noise_sigma.to_string()),
            ("labels", format!("{:?}", a.labels).to_lowercase()),
            ("seed", cfg.seed.to_string()),
            ("out", show(&a.out)),
        ],
    )?;
    let data = synth_generate(&cfg)?;
    save_dataset(&data, &a.out)
}

fn pick_sequence(mut seqs: Vec<LabeledSequence>, name: Option<&str>) -> Result<LabeledSequence> {
    match name {
        Some(n) => {
            let i = seqs
                .iter()
                .position(|s| s.name == n)
                .ok_or_else(|| Error::invalid(format!("no sequence named {n:?}")))?;
            Ok(seqs.swap_remove(i))
        }
        None if seqs.len() == 1 => Ok(seqs.remove(0)),
        None => Err(Error::invalid(format!(
            "features file holds {} sequences; pick one with --sequence",
            seqs.len()
        ))),
    }
}

fn prep(a: PrepArgs) -> Result<()> {
    if a.out.is_some() && a.features.is_none() {
        return Err(Error::invalid("--out needs --features"));
    }
    if a.out.is_none() && a.labels_out.is_none() {
        return Err(Error::invalid(
            "nothing to write; give --out and/or --labels-out",
        ));
    }
    let seq = match &a.features {
        Some(p) => Some(pick_sequence(load_dataset(p)?, a.sequence.as_deref())?),
        None => None,
    };
    let grid = match (a.grid, seq.as_ref().and_then(LabeledSequence::shape)) {
        (Some(g), Some((k, _))) if g != k => {
            return Err(Error::invalid(format!(
                "--grid {g} but the features use K={k}"
            )));
        }
        (Some(g), _) => g,
        (None, Some((k, _))) => k,
        (None, None) => DEFAULT_GRID,
    };
    let frames = seq.as_ref().map(LabeledSequence::len).or(a.frames);
    echo(
        &mut io::stdout(),
        &[
            ("gaze", show(&a.gaze)),
            ("grid", grid.to_string()),
            (
                "frames",
                frames.map_or_else(|| "from gaze".into(), |n| n.to_string()),
            ),
            (
                "override",
                a.overrides.as_deref().map_or_else(|| "none".into(), show),
            ),
        ],
    )?;

    let gaze_name = show(&a.gaze);
    let records = read_gaze_csv(File::open(&a.gaze)?, &gaze_name)?;
    let overrides = match &a.overrides {
        Some(p) => read_overrides(File::open(p)?, &show(p))?,
        None => Vec::new(),
    };
    let labels = prepare_labels(&records, grid, &overrides, frames)?;
    if let Some(n) = frames {
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "gaze file mentions frame {}, but the sequence has {n} frames",
                labels.len() - 1
            )));
        }
    }
    if let Some(p) = &a.labels_out {
        let mut w = create(p)?;
        writeln!(w, "frame,label")?;
        for (i, l) in labels.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        w.flush()?;
    }
    if let (Some(out), Some(seq)) = (&a.out, seq) {
        save_dataset(&[seq.with_labels(labels)?], out)?;
    }
    Ok(())
}

fn split_cmd(a: SplitArgs) -> Result<()> {
    echo(
        &mut io::stdout(),
        &[
            ("data", show(&a.data)),
            ("fraction", a.fraction.to_string()),
        ],
    )?;
    let seqs = load_dataset(&a.data)?;
    let mut train = Vec::with_capacity(seqs.len());
    let mut test = Vec::with_capacity(seqs.len());
    for s in &seqs {
        let (tr, te) = split(s, a.fraction)?;
        train.push(tr);
        test.push(te);
    }
    save_dataset(&train, &a.train_out)?;
    save_dataset(&test, &a.test_out)
}

struct TrainSettings {
    layers: usize,
    hidden: usize,
    cfg: TrainConfig,
}

fn resolve_train(a: &TrainArgs) -> TrainSettings {
    let (p_layers, p_iters) = match a.profile {
        Some(Profile::Car) => (Some(1), Some(200)),
        Some(Profile::Uno) => (Some(2), Some(1000)),
        None => (None, None),
    };
    let d = TrainConfig::default();
    let adam = AdamConfig {
        lr: a.lr.unwrap_or(d.adam.lr),
        beta1: a.beta1.unwrap_or(d.adam.beta1),
        beta2: a.beta2.unwrap_or(d.adam.beta2),
        eps: a.adam_eps.unwrap_or(d.adam.eps),
    };
    let cfg = TrainConfig {
        gamma: a.gamma.unwrap_or(d.gamma),
        max_iterations: a.max_iters.or(p_iters).unwrap_or(d.max_iterations),
        bptt_window: a.window.unwrap_or(d.bptt_window),
        dropout_rate: a.dropout.unwrap_or(DEFAULT_DROPOUT),
        adam,
        rng_seed: a.seed.wrapping_add(1),
        epochs: a.epochs.unwrap_or(d.epochs),
        clip_norm: match a.clip {
            Some(0.0) => None,
            Some(c) => Some(c),
            None => d.clip_norm,
        },
        val_every: if a.val.is_some() { a.val_every } else { 0 },
        smoothing: a.epsilon,
    };
    TrainSettings {
        layers: a.layers.or(p_layers).unwrap_or(1),
        hidden: a.hidden.unwrap_or(DEFAULT_HIDDEN),
        cfg,
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let s = resolve_train(&a);
    let c = &s.cfg;
    let data = load_dataset(&a.data)?;
    let (k, d) = dataset_shape(&data)?;
    if let Some(g) = a.grid {
        if g != k {
            return Err(Error::invalid(format!(
                "--grid {g} but the data uses K={k}"
            )));
        }
    }
    let mut out = io::stdout();
    echo(
        &mut out,
        &[
            (
                "profile",
                a.profile
                    .map_or_else(|| "none".into(), |p| format!("{p:?}").to_lowercase()),
            ),
            ("grid", k.to_string()),
            ("depth", d.to_string()),
            ("layers", s.layers.to_string()),
            ("hidden", s.hidden.to_string()),
            ("gamma", c.gamma.to_string()),
            ("max_iters", c.max_iterations.to_string()),
            ("window", c.bptt_window.to_string()),
            ("dropout", c.dropout_rate.to_string()),
            ("lr", c.adam.lr.to_string()),
            ("beta1", c.adam.beta1.to_string()),
            ("beta2", c.adam.beta2.to_string()),
            ("adam_eps", c.adam.eps.to_string()),
            ("epochs", c.epochs.to_string()),
            (
                "clip",
                c.clip_norm.map_or_else(|| "off".into(), |v| v.to_string()),
            ),
            ("seed", a.seed.to_string()),
        ],
    )?;
    let val = match &a.val {
        Some(p) => Some(load_dataset(p)?),
        None => None,
    };
    let config = ModelConfig::new(k, d, s.hidden, s.layers).with_dropout(c.dropout_rate);
    let model = ModelParams::init(config, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let (model, curve) = train_with_validation(&data, val.as_deref(), model, c)?;

    save_checkpoint(&model, &a.out)?;
    if let Some(p) = &a.curve {
        let mut w = create(p)?;
        curve.write_csv(&mut w)?;
        w.flush()?;
    }
    let last = curve.records.last().map_or(f64::NAN, |r| r.loss);
    echo(
        &mut out,
        &[
            ("iterations", curve.len().to_string()),
            ("final_loss", last.to_string()),
        ],
    )
}

fn load_pair(model: &Path, data: &Path) -> Result<(ModelParams, Vec<LabeledSequence>)> {
    let m = load_checkpoint(model)?;
    let d = load_dataset(data)?;
    let (k, depth) = dataset_shape(&d)?;
    if (k, depth) != (m.config.grid_side, m.config.depth) {
        return Err(Error::invalid(format!(
            "model expects K={} D={}, data has K={k} D={depth}",
            m.config.grid_side, m.config.depth
        )));
    }
    Ok((m, d))
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mut stdout = io::stdout();
    let mut stderr = io::stderr();
    let console: &mut dyn Write = if a.report.is_some() {
        &mut stdout
    } else {
        &mut stderr
    };
    echo(
        console,
        &[
            ("model", show(&a.model)),
            ("data", show(&a.data)),
            ("epsilon", a.epsilon.to_string()),
            ("window", a.window.to_string()),
        ],
    )?;
    let (model, data) = load_pair(&a.model, &a.data)?;
    let opts = EvalOptions {
        epsilon: a.epsilon,
        window: Some(a.window),
    };
    let report = evaluate(&model, &data, &opts)?;
    match &a.report {
        Some(p) => {
            let mut w = create(p)?;
            report.write_text(&mut w)?;
            w.flush()?;
        }
        None => report.write_text(io::stdout().lock())?,
    }
    if let Some(p) = &a.csv {
        let mut w = create(p)?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let mut stdout = io::stdout();
    let mut stderr = io::stderr();
    let console: &mut dyn Write = if a.out.is_some() {
        &mut stdout
    } else {
        &mut stderr
    };
    echo(
        console,
        &[
            ("model", show(&a.model)),
            ("data", show(&a.data)),
            ("window", a.window.to_string()),
        ],
    )?;
    let (model, data) = load_pair(&a.model, &a.data)?;
    let mut sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let n = model.config.regions();
    write!(sink, "sequence,frame,label,predicted")?;
    for i in 0..n {
        write!(sink, ",p_{i}")?;
    }
    writeln!(sink)?;
    for seq in &data {
        let maps = predict_sequence(&model, seq, Some(a.window))?;
        for (t, (m, label)) in maps.iter().zip(seq.labels()).enumerate() {
            write!(sink, "{},{t},{label},{}", csv_field(&seq.name), m.argmax())?;
            for p in m.probs() {
                write!(sink, ",{p:.16e}")?;
            }
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut out = io::stdout();
    echo(
        &mut out,
        &[
            ("grid", a.grid.to_string()),
            ("depth", a.depth.to_string()),
            ("hidden", a.hidden.to_string()),
            ("layers", a.layers.to_string()),
            ("frames", a.frames.to_string()),
            ("gamma", a.gamma.to_string()),
            ("coords", a.coords.to_string()),
            ("eps", a.eps.to_string()),
            ("tol", a.tol.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    if a.frames == 0 {
        return Err(Error::invalid("--frames must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let config = ModelConfig::new(a.grid, a.depth, a.hidden, a.layers).with_dropout(0.0);
    let model = ModelParams::init(config, &mut rng)?;
    let n = config.regions();
    let frames = (0..a.frames)
        .map(|_| FeatureCube::new(a.grid, Matrix::uniform(n, a.depth, 1.0, &mut rng)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = (0..a.frames).map(|_| rng.random_range(0..n)).collect();
    let report = check_gradients(&model, &frames, &labels, a.gamma, a.coords, a.eps, &mut rng)?;
    let worst = report
        .checks
        .iter()
        .max_by(|x, y| x.relative_error.total_cmp(&y.relative_error))
        .map_or_else(|| "none".into(), |c| c.tensor.clone());
    let pass = report.passes(a.tol);
    echo(
        &mut out,
        &[
            ("parameters", model.num_parameters().to_string()),
            ("coordinates checked", report.checks.len().to_string()),
            (
                "max relative error",
                format!("{:e}", report.max_relative_error),
            ),
            ("worst coordinate", worst),
            ("result", if pass { "pass" } else { "fail" }.into()),
        ],
    )?;
    if pass {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "gradient check failed: max relative error {:e} >= {:e}",
            report.max_relative_error, a.tol
        )))
    }
}

/// Plain-text P2 graymap, one pixel per region, row-major.
pub fn render_pgm(probs: &[f64]) -> Result<String> {
    let k = (probs.len() as f64).sqrt().round() as usize;
    if k == 0 || k * k != probs.len() {
        return Err(Error::invalid(format!(
            "{} probabilities do not form a square grid",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("probabilities must be finite and >= 0"));
    }
    let max = probs.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::invalid("attention map has no mass"));
    }
    let mut s = format!("P2\n{k} {k}\n255\n");
    for row in probs.chunks(k) {
        let line: Vec<String> = row
            .iter()
            .map(|p| ((255.0 * p / max).round() as u32).to_string())
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    Ok(s)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn render(a: RenderArgs) -> Result<()> {
    echo(
        &mut io::stdout(),
        &[("input", a.input.clone()), ("out_dir", show(&a.out_dir))],
    )?;
    let mut text = Vec::new();
    if a.input == "-" {
        io::stdin().lock().read_to_end(&mut text)?;
    } else {
        File::open(&a.input)?.read_to_end(&mut text)?;
    }
    fs::create_dir_all(&a.out_dir)?;

    let bad = |line: usize, reason: String| Error::Csv {
        file: a.input.clone(),
        line,
        reason,
    };
    let mut rd = csv::Reader::from_reader(&text[..]);
    let header = rd.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let fixed = ["sequence", "frame", "label", "predicted"];
    let n = header.len().saturating_sub(fixed.len());
    let expected_p = (0..n).map(|i| format!("p_{i}"));
    if n == 0 || header.iter().take(4).ne(fixed) || header.iter().skip(4).ne(expected_p) {
        return Err(bad(
            1,
            "expected header sequence,frame,label,predicted,p_0,...".into(),
        ));
    }
    let mut written = 0usize;
    for (i, row) in rd.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let frame: usize = row[1]
            .parse()
            .map_err(|_| bad(line, format!("bad frame {:?}", &row[1])))?;
        let probs = row
            .iter()
            .skip(4)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| bad(line, format!("bad probability {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pgm = render_pgm(&probs).map_err(|e| bad(line, e.to_string()))?;
        fs::write(
            a.out_dir
                .join(format!("{}_{frame:05}.pgm", file_stem(&row[0]))),
            pgm,
        )?;
        written += 1;
    }
    echo(
        &mut io::stdout(),
        &[("frames rendered", written.to_string())],
    )
}
