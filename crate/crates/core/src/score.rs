//! Composite quality/runtime score: a weighted sum of the normalized
//! WS-PSNR and an exponential runtime penalty, scaled to 0..100.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreParams {
    /// Weight of the quality term.
    pub beta: f64,
    /// Penalty slope per second over the threshold.
    pub b: f64,
    /// Seconds per 2K frame that still earn the full runtime score.
    pub rt_threshold: f64,
    pub psnr_min: f64,
    pub psnr_max: f64,
}

impl ScoreParams {
    /// Challenge defaults: 28.8 to 31 dB at x2, bicubic's 27.790 dB to 30 dB
    /// at x4.
    pub fn for_scale(scale: usize) -> Result<Self> {
        let (psnr_min, psnr_max) = match scale {
            2 => (28.8, 31.0),
            4 => (27.790, 30.0),
            _ => return Err(Error::invalid(format!("no score defaults for x{scale}"))),
        };
        Ok(ScoreParams {
            beta: 0.5,
            b: 30.0,
            rt_threshold: 0.016,
            psnr_min,
            psnr_max,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::invalid("penalty slope must be positive"));
        }
        if !(self.rt_threshold > 0.0 && self.rt_threshold.is_finite()) {
            return Err(Error::invalid("runtime threshold must be positive"));
        }
        if !(self.psnr_max > self.psnr_min) || !self.psnr_min.is_finite() || !self.psnr_max.is_finite() {
            return Err(Error::invalid(format!(
                "psnr_max ({}) must exceed psnr_min ({})",
                self.psnr_max, self.psnr_min
            )));
        }
        Ok(())
    }
}

/// `(ws_psnr - min) / (max - min)`, deliberately unclamped.
pub fn q_hat(ws_psnr: f64, params: &ScoreParams) -> Result<f64> {
    if !(params.psnr_max > params.psnr_min) {
        return Err(Error::invalid("psnr_max must exceed psnr_min"));
    }
    Ok((ws_psnr - params.psnr_min) / (params.psnr_max - params.psnr_min))
}

/// 1 up to the threshold, `exp(B * (threshold - runtime))` beyond it.
pub fn runtime_score(runtime: f64, params: &ScoreParams) -> Result<f64> {
    if !(runtime >= 0.0) {
        return Err(Error::invalid(format!("runtime {runtime} must be non-negative")));
    }
    if runtime <= params.rt_threshold {
        Ok(1.0)
    } else {
        Ok((params.b * (params.rt_threshold - runtime)).exp())
    }
}

pub fn q_score(ws_psnr: f64, runtime: f64, params: &ScoreParams) -> Result<f64> {
    params.validate()?;
    let q = q_hat(ws_psnr, params)?;
    let c = runtime_score(runtime, params)?;
    Ok((params.beta * q + (1.0 - params.beta) * c) * 100.0)
}

/// One row of the published challenge results; `None` where the table has
/// no entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedResult {
    pub scale: usize,
    pub method: &'static str,
    pub ws_psnr: f64,
    pub ws_ssim: f64,
    pub runtime: Option<f64>,
    pub q: Option<f64>,
    pub bd_br: Option<f64>,
    pub g_flops: Option<f64>,
    pub params: Option<usize>,
}

const fn row(
    scale: usize,
    method: &'static str,
    ws_psnr: f64,
    ws_ssim: f64,
    runtime: f64,
    q: f64,
    bd_br: f64,
    g_flops: f64,
    params: usize,
) -> PublishedResult {
    PublishedResult {
        scale,
        method,
        ws_psnr,
        ws_ssim,
        runtime: Some(runtime),
        q: Some(q),
        bd_br: Some(bd_br),
        g_flops: Some(g_flops),
        params: Some(params),
    }
}

const fn handcrafted(scale: usize, method: &'static str, ws_psnr: f64, ws_ssim: f64, bd_br: Option<f64>) -> PublishedResult {
    PublishedResult {
        scale,
        method,
        ws_psnr,
        ws_ssim,
        runtime: None,
        q: None,
        bd_br,
        g_flops: None,
        params: None,
    }
}

/// The published results for both tracks (runtimes in seconds per 2K frame,
/// BD-BR in percent against bicubic, which is the anchor).
pub const PUBLISHED: &[PublishedResult] = &[
    row(2, "VACV", 29.589, 0.8217, 0.0057, 81.25, -15.32, 45.641, 315_120),
    row(2, "ATHENA", 29.422, 0.8177, 0.0009, 79.03, -14.62, 15.340, 105_216),
    row(2, "IVCL", 29.645, 0.8219, 0.0298, 58.26, -16.91, 122.297, 212_652),
    row(2, "FFCIR", 29.761, 0.8224, 0.0420, 45.61, -17.85, 216.608, 383_124),
    row(2, "FSRCNN", 29.280, 0.8149, 0.0042, 77.14, -9.88, 38.102, 24_683),
    row(2, "RT4KSR", 29.367, 0.8192, 0.0046, 78.29, -14.11, 22.423, 151_992),
    row(2, "SwinIR", 29.761, 0.8250, 1.5232, 13.53, -18.01, 544.667, 910_152),
    handcrafted(2, "Lanczos", 28.797, 0.8110, Some(-1.04)),
    handcrafted(2, "Bicubic", 28.743, 0.8117, None),
    row(4, "FFCIR", 29.083, 0.8090, 0.0120, 79.25, -42.82, 55.857, 394_824),
    row(4, "IVCL", 28.920, 0.8061, 0.0050, 75.57, -38.78, 33.409, 232_128),
    row(4, "VACV", 28.918, 0.8047, 0.0058, 75.52, -38.76, 45.641, 315_120),
    row(4, "ATHENA", 28.425, 0.7960, 0.0004, 64.37, -26.77, 6.858, 188_160),
    row(4, "FSRCNN", 28.317, 0.7912, 0.0010, 61.92, -12.51, 33.334, 24_683),
    row(4, "RT4KSR", 28.602, 0.7991, 0.0032, 68.37, -32.97, 6.739, 183_240),
    row(4, "SwinIR", 29.065, 0.8099, 0.4458, 28.85, -41.12, 136.167, 929_628),
    handcrafted(4, "Lanczos", 27.795, 0.7814, Some(-3.96)),
    handcrafted(4, "Bicubic", 27.790, 0.7831, None),
];

/// Published rows of one track.
pub fn published(scale: usize) -> impl Iterator<Item = &'static PublishedResult> {
    PUBLISHED.iter().filter(move |r| r.scale == scale)
}

/// Comparison of one scored published row against the formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recomputed {
    pub row: &'static PublishedResult,
    pub printed: f64,
    pub formula: f64,
    /// The normalized quality the printed score would require given the
    /// runtime term.
    pub implied_q_hat: f64,
}

pub fn recompute(scale: usize, params: &ScoreParams) -> Result<Vec<Recomputed>> {
    published(scale)
        .filter_map(|r| Some((r, r.runtime?, r.q?)))
        .map(|(r, rt, printed)| {
            let c = runtime_score(rt, params)?;
            Ok(Recomputed {
                row: r,
                printed,
                formula: q_score(r.ws_psnr, rt, params)?,
                implied_q_hat: (printed / 100.0 - (1.0 - params.beta) * c) / params.beta,
            })
        })
        .collect()
}

/// Pairs `(a, b)` where `a` has the higher WS-PSNR but needs the lower
/// normalized quality to produce its printed score, which no increasing
/// normalization can do.
pub fn ordering_conflicts(rows: &[Recomputed]) -> Vec<(&'static str, &'static str)> {
    let mut out = Vec::new();
    for a in rows {
        for b in rows {
            if a.row.ws_psnr > b.row.ws_psnr && a.implied_q_hat < b.implied_q_hat - 1e-3 {
                out.push((a.row.method, b.row.method));
            }
        }
    }
    out
}

/// Markdown note comparing the printed scores with the formula under the
/// default constants of each track.
pub fn discrepancy_report() -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# Score discrepancy report\n");
    let _ = writeln!(
        s,
        "Scores recomputed as Q = (beta * q_hat + (1 - beta) * C) * 100 with q_hat = (WS-PSNR - min) / (max - min) \
         and C = 1 for runtime <= threshold, exp(B * (threshold - runtime)) otherwise. \
         `implied q_hat` is the normalized quality the printed score requires given C.\n"
    );
    for scale in [2, 4] {
        let p = ScoreParams::for_scale(scale)?;
        let rows = recompute(scale, &p)?;
        let _ = writeln!(
            s,
            "## x{scale} track\n\nConstants: beta {}, B {}, threshold {} s, min {} dB, max {} dB.\n",
            p.beta, p.b, p.rt_threshold, p.psnr_min, p.psnr_max
        );
        let _ = writeln!(s, "| Method | WS-PSNR | Runtime (s) | C | Printed Q | Formula Q | Difference | Implied q_hat | Formula q_hat |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
        let mut worst = 0.0f64;
        for r in &rows {
            let rt = r.row.runtime.unwrap_or(0.0);
            let diff = r.formula - r.printed;
            worst = worst.max(diff.abs());
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.4} | {:.4} | {:.2} | {:.2} | {:+.2} | {:.4} | {:.4} |",
                r.row.method,
                r.row.ws_psnr,
                rt,
                runtime_score(rt, &p)?,
                r.printed,
                r.formula,
                diff,
                r.implied_q_hat,
                q_hat(r.row.ws_psnr, &p)?
            );
        }
        let conflicts = ordering_conflicts(&rows);
        let _ = writeln!(s);
        if worst <= 0.01 {
            let _ = writeln!(
                s,
                "All printed scores reproduce within 0.01 (largest difference {worst:.4}).\n"
            );
        } else {
            let _ = write!(
                s,
                "Printed scores do NOT reproduce: largest difference {worst:.2} points."
            );
            if conflicts.is_empty() {
                let _ = writeln!(s, "\n");
            } else {
                let pairs: Vec<String> = conflicts.iter().map(|(a, b)| format!("{a} over {b}")).collect();
                let _ = writeln!(
                    s,
                    " No choice of (min, max) can fix this, because the implied normalized quality is not increasing \
                     in WS-PSNR: {}.\n",
                    pairs.join(", ")
                );
            }
        }
    }
    let _ = writeln!(
        s,
        "The implementation follows the formula as written; rankings built from it are reported alongside the printed ones."
    );
    Ok(s)
}
