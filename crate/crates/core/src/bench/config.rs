use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    evaluate_pair, measure_runtime, run_sequence, Interpolator, LeaderboardEntry, ModelUpscaler, RuntimeStats,
    Upscaler,
};
use crate::bdrate::{bd_rate, RdCurve};
use crate::error::{Error, Result};
use crate::media::{load_sequence, save_sequence};
use crate::metrics::{MetricPlane, MetricReport};
use crate::models::{build, checkpoint, count_flops, count_params, Filter, Network};
use crate::score::ScoreParams;
use crate::train::synthetic_frame;

/// Overrides for the per-scale score constants.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreOverrides {
    pub beta: Option<f64>,
    pub b: Option<f64>,
    pub threshold: Option<f64>,
    pub psnr_min: Option<f64>,
    pub psnr_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdFiles {
    pub anchor: PathBuf,
    pub test: PathBuf,
}

fn default_warmup() -> usize {
    5
}

fn default_repetitions() -> usize {
    30
}

fn default_output() -> [usize; 2] {
    [1920, 1080]
}

/// A benchmark run, read from TOML. Relative paths resolve against the
/// config file's directory.
///
/// ```toml
/// model = "athena"              # architecture, "bicubic" or "lanczos"
/// checkpoint = "athena_x2.odw"  # required for architectures
/// scale = 2
/// plane = "y"                   # or "rgb-mean"
/// inputs = ["lr/clip01.y4m"]
/// references = ["hr/clip01.y4m"]
/// warmup = 5
/// repetitions = 30
/// runtime_output = [1920, 1080] # output size timed and counted for FLOPs
///
/// [score]                       # optional overrides
/// psnr_min = 28.8
///
/// [bd_rate]                     # optional RD curves for the BD-BR column
/// anchor = "rd/bicubic.csv"
/// test = "rd/athena.csv"
/// ```
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub model: String,
    pub checkpoint: Option<PathBuf>,
    /// Seed for randomly initialised weights when no checkpoint is given.
    pub init_seed: Option<u64>,
    pub scale: usize,
    #[serde(default)]
    pub plane: String,
    pub inputs: Vec<PathBuf>,
    pub references: Vec<PathBuf>,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_output")]
    pub runtime_output: [usize; 2],
    #[serde(default)]
    pub score: ScoreOverrides,
    pub bd_rate: Option<RdFiles>,
    /// Directory to write the upscaled sequences into.
    pub output_dir: Option<PathBuf>,
}

impl BenchConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut c: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        c.inputs.iter_mut().for_each(resolve);
        c.references.iter_mut().for_each(resolve);
        if let Some(p) = c.checkpoint.as_mut() {
            resolve(p);
        }
        if let Some(rd) = c.bd_rate.as_mut() {
            resolve(&mut rd.anchor);
            resolve(&mut rd.test);
        }
        if let Some(p) = c.output_dir.as_mut() {
            resolve(p);
        }
        if c.plane.is_empty() {
            c.plane = "y".into();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 3 {
            return Err(Error::Config(format!(
                "repetitions must be at least 3, got {}",
                self.repetitions
            )));
        }
        if self.inputs.len() != self.references.len() {
            return Err(Error::Config(format!(
                "{} input sequences but {} references",
                self.inputs.len(),
                self.references.len()
            )));
        }
        if self.inputs.is_empty() {
            return Err(Error::Config("no input sequences".into()));
        }
        let [w, h] = self.runtime_output;
        if w == 0 || h == 0 || w % self.scale != 0 || h % self.scale != 0 {
            return Err(Error::Config(format!(
                "runtime_output {w}x{h} must be a positive multiple of the scale {}",
                self.scale
            )));
        }
        self.metric_plane()?;
        self.score_params()?;
        Ok(())
    }

    pub fn metric_plane(&self) -> Result<MetricPlane> {
        self.plane.parse()
    }

    pub fn score_params(&self) -> Result<ScoreParams> {
        let mut p = ScoreParams::for_scale(self.scale)?;
        let o = &self.score;
        p.beta = o.beta.unwrap_or(p.beta);
        p.b = o.b.unwrap_or(p.b);
        p.rt_threshold = o.threshold.unwrap_or(p.rt_threshold);
        p.psnr_min = o.psnr_min.unwrap_or(p.psnr_min);
        p.psnr_max = o.psnr_max.unwrap_or(p.psnr_max);
        p.validate()?;
        Ok(p)
    }

    /// The configured model; checkpoints must match the configured scale.
    pub fn upscaler(&self) -> Result<Box<dyn Upscaler>> {
        let filter = match self.model.as_str() {
            "bicubic" => Some(Filter::Bicubic),
            "lanczos" => Some(Filter::Lanczos),
            _ => None,
        };
        if let Some(filter) = filter {
            return Ok(Box::new(Interpolator {
                filter,
                scale: self.scale,
            }));
        }
        let net = match (&self.checkpoint, self.init_seed) {
            (Some(path), _) => {
                let net = checkpoint::load_into(build(&self.model, self.scale)?, &std::fs::read(path)?)?;
                if net.scale() != self.scale {
                    return Err(Error::Config(format!(
                        "checkpoint is x{}, config asks for x{}",
                        net.scale(),
                        self.scale
                    )));
                }
                net
            }
            (None, Some(seed)) => Network::new(build(&self.model, self.scale)?, seed)?,
            (None, None) => {
                return Err(Error::Config(format!(
                    "{} needs a checkpoint (or init_seed for untrained weights)",
                    self.model
                )))
            }
        };
        Ok(Box::new(ModelUpscaler::new(net)))
    }

    pub fn run(&self) -> Result<BenchReport> {
        let model = self.upscaler()?;
        let plane = self.metric_plane()?;
        let mut sequences = Vec::new();
        let mut all_frames = Vec::new();
        for (i, (input, reference)) in self.inputs.iter().zip(&self.references).enumerate() {
            let lr = load_sequence(input)?;
            let hr = load_sequence(reference)?;
            let sr = run_sequence(model.as_ref(), &lr)?;
            let report = evaluate_pair(&hr, &sr, plane)?;
            all_frames.extend(report.frames.iter().copied());
            if let Some(dir) = &self.output_dir {
                std::fs::create_dir_all(dir)?;
                let name = input.file_name().map_or_else(|| format!("seq{i}"), |n| n.to_string_lossy().into_owned());
                let target = if name.ends_with(".y4m") {
                    dir.join(name)
                } else {
                    dir.join(format!("{name}_sr"))
                };
                save_sequence(&sr, &target)?;
            }
            sequences.push(SequenceResult {
                input: input.clone(),
                reference: reference.clone(),
                report,
            });
        }
        let overall = MetricReport::from_frames(plane, all_frames)?;

        let [ow, oh] = self.runtime_output;
        let (lw, lh) = (ow / self.scale, oh / self.scale);
        let probe = synthetic_frame(lh, lw, 0)?;
        let runtime = measure_runtime(model.as_ref(), &probe, self.warmup, self.repetitions)?;

        let spec = build(&self.model, self.scale).ok();
        let g_flops = spec.as_ref().map(|s| count_flops(s, lh, lw)).transpose()?;
        let params = spec.as_ref().map(count_params);
        let bd_br = match &self.bd_rate {
            Some(rd) => {
                let anchor = RdCurve::from_csv(std::fs::File::open(&rd.anchor)?)?;
                let test = RdCurve::from_csv(std::fs::File::open(&rd.test)?)?;
                Some(bd_rate(&anchor, &test)?)
            }
            None => None,
        };
        let entry = LeaderboardEntry::new(
            model.name(),
            self.scale,
            overall.ws_psnr,
            overall.ws_ssim,
            runtime.median,
            &self.score_params()?,
        )?
        .with_costs(bd_br, g_flops, params);
        Ok(BenchReport {
            sequences,
            overall,
            runtime,
            entry,
            host: host_label(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceResult {
    pub input: PathBuf,
    pub reference: PathBuf,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub sequences: Vec<SequenceResult>,
    /// Means over every frame of every sequence.
    pub overall: MetricReport,
    pub runtime: RuntimeStats,
    pub entry: LeaderboardEntry,
    pub host: String,
}

impl BenchReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let e = &self.entry;
        let _ = writeln!(s, "# Benchmark: {} x{}\n", e.id(), e.scale());
        let _ = writeln!(s, "Metric plane: {}. Peak 255.\n", self.overall.plane);
        let _ = writeln!(s, "| Sequence | Frames | WS-PSNR (dB) | WS-SSIM | PSNR (dB) | SSIM |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for r in &self.sequences {
            let m = &r.report;
            let _ = writeln!(
                s,
                "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
                r.input.display(),
                m.frames.len(),
                m.ws_psnr,
                m.ws_ssim,
                m.psnr,
                m.ssim
            );
        }
        let m = &self.overall;
        let _ = writeln!(
            s,
            "| all | {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            m.frames.len(),
            m.ws_psnr,
            m.ws_ssim,
            m.psnr,
            m.ssim
        );
        let (w, h) = self.runtime.output_dims;
        let _ = writeln!(
            s,
            "Runtime: median {:.6} s per {w}x{h} output frame over {} passes (CV {:.3}), CPU on {}. \
             Model inference only; colour conversion and file IO are excluded. \
             Not comparable with GPU runtimes.\n",
            self.runtime.median,
            self.runtime.samples.len(),
            self.runtime.cv,
            self.host
        );
        let _ = writeln!(s, "Score Q: {:.2}", e.q());
        if let Some(v) = e.g_flops() {
            let _ = writeln!(s, "G-FLOPs ({}x{} input): {v:.3}", w / e.scale(), h / e.scale());
        }
        if let Some(v) = e.params() {
            let _ = writeln!(s, "Parameters: {v}");
        }
        if let Some(v) = e.bd_br() {
            let _ = writeln!(s, "BD-BR: {v:.2} %");
        }
        s
    }
}

/// OS, architecture, core count and (on Linux) the CPU model.
pub fn host_label() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| format!(", {}", m.trim()))
        })
        .unwrap_or_default();
    format!(
        "{}-{} ({cores} threads{cpu})",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
