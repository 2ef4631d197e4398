use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use odvsr::bdrate::{bd_quality, bd_rate, RdCurve};
use odvsr::bench::{
    emit_leaderboard, evaluate_pair, parse_leaderboard_csv, score_surface, surface_csv, BenchConfig,
    LeaderboardEntry, LeaderboardFormat, ScoreOverrides, SurfaceGrid,
};
use odvsr::media::load_sequence;
use odvsr::metrics::MetricPlane;
use odvsr::models::{build, checkpoint, count_flops, count_params, Network, ARCHITECTURES};
use odvsr::score::{discrepancy_report, published, q_score, ScoreParams};
use odvsr::train::{synthetic_frame, train, LossKind, Schedule, TrainConfig};
use odvsr::{Error, Result};

#[derive(Parser)]
#[command(name = "odvsr", version, about = "360-degree video super-resolution benchmark toolkit")]
struct Cli {
    /// Write the command's output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a model over LR sequences, score it against HR references and time it.
    Run(RunArgs),
    /// WS-PSNR, WS-SSIM, PSNR and SSIM of a test sequence against a reference.
    Metrics(MetricsArgs),
    /// BD-rate and BD-PSNR between two 4-point RD curves (CSV: bitrate,quality).
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Challenge score Q for one (WS-PSNR, runtime) pair.
    ScoreQ {
        #[arg(long, allow_negative_numbers = true)]
        ws_psnr: f64,
        /// Seconds per 2K frame.
        #[arg(long, allow_negative_numbers = true)]
        runtime: f64,
        #[command(flatten)]
        score: ScoreArgs,
    },
    /// Rank leaderboard entries by recomputed Q.
    Leaderboard {
        /// CSV with method,scale,ws_psnr,ws_ssim,runtime_s and optional q,bd_br,g_flops,params.
        #[arg(long, conflicts_with = "published")]
        input: Option<PathBuf>,
        /// Use the published results of the x2 or x4 track.
        #[arg(long)]
        published: Option<usize>,
        /// markdown or csv.
        #[arg(long, default_value = "markdown")]
        format: LeaderboardFormat,
        #[command(flatten)]
        score: ScoreArgs,
    },
    /// Parameter counts of the built-in architectures.
    Params {
        /// Architecture name, or "all".
        #[arg(long, default_value = "all")]
        model: String,
        /// 2 or 4; both when omitted.
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Forward G-FLOPs for one frame.
    Flops {
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long)]
        scale: Option<usize>,
        /// Output width; the input is width / scale.
        #[arg(long, default_value_t = 1920)]
        width: usize,
        #[arg(long, default_value_t = 1080)]
        height: usize,
    },
    /// CSV grid of Q over WS-PSNR and runtime.
    Surface {
        #[arg(long, default_value_t = 28.8)]
        psnr_from: f64,
        #[arg(long, default_value_t = 31.0)]
        psnr_to: f64,
        #[arg(long, default_value_t = 23)]
        psnr_steps: usize,
        #[arg(long, default_value_t = 0.001)]
        runtime_from: f64,
        #[arg(long, default_value_t = 0.1)]
        runtime_to: f64,
        #[arg(long, default_value_t = 100)]
        runtime_steps: usize,
        #[command(flatten)]
        score: ScoreArgs,
    },
    /// Train a model on HR frames with synthetic (bicubic) LR inputs.
    Train(TrainArgs),
    /// Markdown note comparing the published scores with the score formula.
    Report,
}

#[derive(Args)]
struct ScoreArgs {
    /// Track whose default constants apply (2 or 4).
    #[arg(long = "track", default_value_t = 2)]
    track: usize,
    #[arg(long)]
    beta: Option<f64>,
    /// Runtime penalty slope B.
    #[arg(long)]
    bmax: Option<f64>,
    /// Runtime threshold in seconds.
    #[arg(long)]
    threshold: Option<f64>,
    /// WS-PSNR that maps to q_hat = 0.
    #[arg(long)]
    min: Option<f64>,
    /// WS-PSNR that maps to q_hat = 1.
    #[arg(long)]
    max: Option<f64>,
}

impl ScoreArgs {
    fn params(&self, track: usize) -> Result<ScoreParams> {
        let mut p = ScoreParams::for_scale(track)?;
        p.beta = self.beta.unwrap_or(p.beta);
        p.b = self.bmax.unwrap_or(p.b);
        p.rt_threshold = self.threshold.unwrap_or(p.rt_threshold);
        p.psnr_min = self.min.unwrap_or(p.psnr_min);
        p.psnr_max = self.max.unwrap_or(p.psnr_max);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML benchmark config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Architecture name, "bicubic" or "lanczos".
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    scale: Option<usize>,
    /// LR sequence (.y4m file or PPM directory); repeat for several.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// HR reference for each --input, in the same order.
    #[arg(long)]
    reference: Vec<PathBuf>,
    /// y or rgb-mean.
    #[arg(long)]
    plane: Option<String>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output frame size timed for the runtime, as WIDTHxHEIGHT.
    #[arg(long)]
    runtime_output: Option<String>,
    /// Directory for the upscaled sequences.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Print the leaderboard row as CSV instead of the markdown report.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// y or rgb-mean.
    #[arg(long, default_value = "y")]
    plane: MetricPlane,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    scale: usize,
    /// HR training frames (.y4m file or PPM directory).
    #[arg(long, conflicts_with = "synthetic")]
    frames: Option<PathBuf>,
    /// Generate this many synthetic HR frames instead.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Side of the synthetic frames.
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Start from these weights instead of a fresh init.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    /// charbonnier, charbonnier+fft or ws-weighted-l1.
    #[arg(long, default_value = "charbonnier")]
    loss: LossKind,
    #[arg(long, default_value_t = 2e-4)]
    lr: f64,
    /// Multiply the rate by --decay-factor every this many iterations.
    #[arg(long)]
    decay_every: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// LR patch side.
    #[arg(long, default_value_t = 32)]
    patch: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long)]
    no_flip: bool,
    #[arg(long)]
    no_rotate: bool,
    #[arg(long)]
    mixup: bool,
    #[arg(long, default_value_t = 1.2)]
    mixup_alpha: f64,
    /// Gaussian noise (in [0, 1] units) plus 8-bit quantization on LR patches.
    #[arg(long, default_value_t = 0.0)]
    lr_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to save the trained weights.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Where to write the per-iteration loss trace.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

fn scales(scale: Option<usize>) -> Vec<usize> {
    scale.map_or_else(|| vec![2, 4], |s| vec![s])
}

fn models(name: &str) -> Vec<&str> {
    if name == "all" {
        ARCHITECTURES.to_vec()
    } else {
        vec![name]
    }
}

fn parse_dims(s: &str) -> Result<[usize; 2]> {
    let bad = || Error::InvalidArgument(format!("expected WIDTHxHEIGHT, got {s:?}"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok([w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?])
}

fn run(args: RunArgs) -> Result<String> {
    let mut c = match &args.config {
        Some(path) => BenchConfig::from_file(path)?,
        None => BenchConfig {
            model: args
                .model
                .clone()
                .ok_or_else(|| Error::InvalidArgument("--model or --config is required".into()))?,
            checkpoint: None,
            init_seed: None,
            scale: args
                .scale
                .ok_or_else(|| Error::InvalidArgument("--scale or --config is required".into()))?,
            plane: "y".into(),
            inputs: Vec::new(),
            references: Vec::new(),
            warmup: 5,
            repetitions: 30,
            runtime_output: [1920, 1080],
            score: ScoreOverrides::default(),
            bd_rate: None,
            output_dir: None,
        },
    };
    if let Some(m) = args.model {
        c.model = m;
    }
    if args.checkpoint.is_some() {
        c.checkpoint = args.checkpoint;
    }
    if args.init_seed.is_some() {
        c.init_seed = args.init_seed;
    }
    if let Some(s) = args.scale {
        c.scale = s;
    }
    if !args.input.is_empty() {
        c.inputs = args.input;
        c.references = args.reference;
    }
    if let Some(p) = args.plane {
        c.plane = p;
    }
    if let Some(w) = args.warmup {
        c.warmup = w;
    }
    if let Some(r) = args.reps {
        c.repetitions = r;
    }
    if let Some(d) = args.runtime_output {
        c.runtime_output = parse_dims(&d)?;
    }
    if args.output_dir.is_some() {
        c.output_dir = args.output_dir;
    }
    c.validate()?;
    let report = c.run()?;
    if args.csv {
        emit_leaderboard(&[report.entry], LeaderboardFormat::Csv)
    } else {
        Ok(report.to_markdown())
    }
}

fn metrics(args: MetricsArgs) -> Result<String> {
    let reference = load_sequence(&args.reference)?;
    let test = load_sequence(&args.test)?;
    let r = evaluate_pair(&reference, &test, args.plane)?;
    let mut s = format!("plane: {}\n\n| Frame | WS-PSNR (dB) | WS-SSIM | PSNR (dB) | SSIM |\n|---|---|---|---|---|\n", r.plane);
    for (i, f) in r.frames.iter().enumerate() {
        let _ = writeln!(s, "| {i} | {:.4} | {:.4} | {:.4} | {:.4} |", f.ws_psnr, f.ws_ssim, f.psnr, f.ssim);
    }
    let _ = writeln!(s, "| mean | {:.4} | {:.4} | {:.4} | {:.4} |", r.ws_psnr, r.ws_ssim, r.psnr, r.ssim);
    Ok(s)
}

fn read_curve(path: &Path) -> Result<RdCurve> {
    RdCurve::from_csv(std::fs::File::open(path)?)
}

fn leaderboard(
    input: Option<PathBuf>,
    published_track: Option<usize>,
    format: LeaderboardFormat,
    score: ScoreArgs,
) -> Result<String> {
    let entries = match (input, published_track) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(&path)?;
            // score constants follow the scale of the first data row
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
            let scale_col = rdr.headers()?.iter().position(|h| h == "scale");
            let first_scale = match (scale_col, rdr.records().next()) {
                (Some(i), Some(rec)) => rec?.get(i).and_then(|v| v.parse().ok()).unwrap_or(score.track),
                _ => score.track,
            };
            parse_leaderboard_csv(&text, &score.params(first_scale)?)?
        }
        (None, Some(track)) => {
            let p = score.params(track)?;
            published(track)
                .filter(|r| r.runtime.is_some())
                .map(|r| LeaderboardEntry::from_published(r, &p))
                .collect::<Result<Vec<_>>>()?
        }
        (None, None) => {
            return Err(Error::InvalidArgument("pass --input <csv> or --published <2|4>".into()))
        }
    };
    emit_leaderboard(&entries, format)
}

fn train_cmd(a: TrainArgs) -> Result<String> {
    let frames = match (&a.frames, a.synthetic) {
        (Some(path), _) => load_sequence(path)?
            .frames()
            .iter()
            .map(|f| f.to_tensor())
            .collect::<Result<Vec<_>>>()?,
        (None, Some(n)) => (0..n as u64)
            .map(|i| synthetic_frame(a.size, a.size, i))
            .collect::<Result<Vec<_>>>()?,
        (None, None) => return Err(Error::InvalidArgument("pass --frames <path> or --synthetic <count>".into())),
    };
    let spec = build(&a.model, a.scale)?;
    let mut net = match &a.init {
        Some(path) => checkpoint::load_into(spec, &std::fs::read(path)?)?,
        None => Network::new(spec, a.init_seed)?,
    };
    let config = TrainConfig {
        loss: a.loss,
        lr: a.lr,
        schedule: match a.decay_every {
            Some(every) => Schedule::StepDecay {
                every,
                factor: a.decay_factor,
            },
            None => Schedule::Constant,
        },
        batch: a.batch,
        patch: a.patch,
        iterations: a.iterations,
        flip: !a.no_flip,
        rotate: !a.no_rotate,
        mixup: a.mixup,
        mixup_alpha: a.mixup_alpha,
        lr_noise: a.lr_noise,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &frames, &config)?;
    if let Some(path) = &a.checkpoint {
        std::fs::write(path, checkpoint::save(&net))?;
    }
    if let Some(path) = &a.loss_csv {
        report.write_csv(&mut std::fs::File::create(path)?)?;
    }
    let n = report.losses.len();
    let k = n.min(10);
    let mut s = format!(
        "{} x{}: {} iterations on {} frames, {} parameters\n",
        a.model,
        a.scale,
        n,
        frames.len(),
        net.num_params()
    );
    if n > 0 {
        let _ = writeln!(
            s,
            "mean loss, first {k} iterations: {:.6}\nmean loss, last {k} iterations: {:.6}",
            report.mean_loss(0..k),
            report.mean_loss(n - k..n)
        );
    }
    let _ = writeln!(
        s,
        "LR inputs are bicubic downscales of the HR frames (synthetic-LR mode{}), not codec-compressed video.",
        if a.lr_noise > 0.0 { ", with noise and 8-bit quantization" } else { "" }
    );
    Ok(s)
}

fn execute(command: Command) -> Result<String> {
    match command {
        Command::Run(args) => run(args),
        Command::Metrics(args) => metrics(args),
        Command::Bdrate { anchor, test } => {
            let (a, t) = (read_curve(&anchor)?, read_curve(&test)?);
            Ok(format!(
                "BD-rate: {:.6} %\nBD-PSNR: {:.6} dB\n",
                bd_rate(&a, &t)?,
                bd_quality(&a, &t)?
            ))
        }
        Command::ScoreQ { ws_psnr, runtime, score } => {
            Ok(format!("{:.2}\n", q_score(ws_psnr, runtime, &score.params(score.track)?)?))
        }
        Command::Leaderboard {
            input,
            published,
            format,
            score,
        } => leaderboard(input, published, format, score),
        Command::Params { model, scale } => {
            let mut s = String::from("| Model | Scale | Parameters |\n|---|---|---|\n");
            for m in models(&model) {
                for sc in scales(scale) {
                    let _ = writeln!(s, "| {m} | x{sc} | {} |", count_params(&build(m, sc)?));
                }
            }
            Ok(s)
        }
        Command::Flops {
            model,
            scale,
            width,
            height,
        } => {
            let mut s = String::from("| Model | Scale | Input | Output | G-FLOPs |\n|---|---|---|---|---|\n");
            for m in models(&model) {
                for sc in scales(scale) {
                    if width % sc != 0 || height % sc != 0 {
                        return Err(Error::InvalidArgument(format!(
                            "{width}x{height} is not divisible by the scale {sc}"
                        )));
                    }
                    let (iw, ih) = (width / sc, height / sc);
                    let g = count_flops(&build(m, sc)?, ih, iw)?;
                    let _ = writeln!(s, "| {m} | x{sc} | {iw}x{ih} | {width}x{height} | {g:.3} |");
                }
            }
            Ok(s)
        }
        Command::Surface {
            psnr_from,
            psnr_to,
            psnr_steps,
            runtime_from,
            runtime_to,
            runtime_steps,
            score,
        } => {
            let grid = SurfaceGrid {
                psnr_range: (psnr_from, psnr_to),
                psnr_steps,
                runtime_range: (runtime_from, runtime_to),
                runtime_steps,
            };
            Ok(surface_csv(&score_surface(&score.params(score.track)?, &grid)?))
        }
        Command::Train(args) => train_cmd(args),
        Command::Report => discrepancy_report(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = execute(cli.command).and_then(|text| match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
