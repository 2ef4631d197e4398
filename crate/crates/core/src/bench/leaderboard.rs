use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{q_score, PublishedResult, ScoreParams};

/// One leaderboard row. The score is always derived from the stored WS-PSNR
/// and runtime, so it cannot go stale.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderboardEntry {
    id: String,
    scale: usize,
    ws_psnr: f64,
    ws_ssim: f64,
    runtime: f64,
    bd_br: Option<f64>,
    g_flops: Option<f64>,
    params: Option<usize>,
    q: f64,
}

impl LeaderboardEntry {
    pub fn new(
        id: impl Into<String>,
        scale: usize,
        ws_psnr: f64,
        ws_ssim: f64,
        runtime: f64,
        score: &ScoreParams,
    ) -> Result<Self> {
        Ok(LeaderboardEntry {
            id: id.into(),
            scale,
            ws_psnr,
            ws_ssim,
            runtime,
            bd_br: None,
            g_flops: None,
            params: None,
            q: q_score(ws_psnr, runtime, score)?,
        })
    }

    /// BD-BR in percent against bicubic, G-FLOPs and parameter count.
    pub fn with_costs(mut self, bd_br: Option<f64>, g_flops: Option<f64>, params: Option<usize>) -> Self {
        self.bd_br = bd_br;
        self.g_flops = g_flops;
        self.params = params;
        self
    }

    /// A published row rescored with `score`; rows without a runtime are
    /// rejected.
    pub fn from_published(row: &PublishedResult, score: &ScoreParams) -> Result<Self> {
        let runtime = row
            .runtime
            .ok_or_else(|| Error::invalid(format!("{} has no published runtime", row.method)))?;
        Ok(LeaderboardEntry::new(row.method, row.scale, row.ws_psnr, row.ws_ssim, runtime, score)?
            .with_costs(row.bd_br, row.g_flops, row.params))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn ws_psnr(&self) -> f64 {
        self.ws_psnr
    }

    pub fn ws_ssim(&self) -> f64 {
        self.ws_ssim
    }

    /// Seconds per 2K frame.
    pub fn runtime(&self) -> f64 {
        self.runtime
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn bd_br(&self) -> Option<f64> {
        self.bd_br
    }

    pub fn g_flops(&self) -> Option<f64> {
        self.g_flops
    }

    pub fn params(&self) -> Option<usize> {
        self.params
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LeaderboardFormat {
    #[default]
    Markdown,
    Csv,
}

impl FromStr for LeaderboardFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(LeaderboardFormat::Markdown),
            "csv" => Ok(LeaderboardFormat::Csv),
            other => Err(Error::invalid(format!("leaderboard format {other:?} (expected markdown or csv)"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    rank: Option<usize>,
    scale: usize,
    method: String,
    ws_psnr: f64,
    ws_ssim: f64,
    runtime_s: f64,
    q: Option<f64>,
    bd_br: Option<f64>,
    g_flops: Option<f64>,
    params: Option<usize>,
}

fn ranked(entries: &[LeaderboardEntry]) -> Result<Vec<&LeaderboardEntry>> {
    if let Some(first) = entries.first() {
        if let Some(other) = entries.iter().find(|e| e.scale != first.scale) {
            return Err(Error::invalid(format!(
                "mixed scales: {} is x{}, {} is x{}",
                first.id, first.scale, other.id, other.scale
            )));
        }
    }
    let mut sorted: Vec<&LeaderboardEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| {
        b.q.total_cmp(&a.q)
            .then(a.runtime.total_cmp(&b.runtime))
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(sorted)
}

fn opt<T: std::fmt::Display>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map_or_else(|| "-".to_string(), f)
}

/// Rows sorted by Q descending, ties going to the faster entry. Markdown
/// marks the winner in bold; CSV keeps full float precision.
pub fn emit_leaderboard(entries: &[LeaderboardEntry], format: LeaderboardFormat) -> Result<String> {
    let sorted = ranked(entries)?;
    match format {
        LeaderboardFormat::Markdown => {
            let mut s = String::new();
            if let Some(e) = sorted.first() {
                let _ = writeln!(s, "Scale x{}\n", e.scale);
            }
            let _ = writeln!(
                s,
                "| Rank | Method | WS-PSNR (dB) | WS-SSIM | Runtime / 2K frame (s) | Score Q | BD-BR vs Bicubic (%) | G-FLOPs | Parameters |"
            );
            let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
            for (i, e) in sorted.iter().enumerate() {
                let cells = [
                    (i + 1).to_string(),
                    e.id.clone(),
                    format!("{:.3}", e.ws_psnr),
                    format!("{:.4}", e.ws_ssim),
                    format!("{:.4}", e.runtime),
                    format!("{:.2}", e.q),
                    opt(e.bd_br, |v| format!("{v:.2}")),
                    opt(e.g_flops, |v| format!("{v:.3}")),
                    opt(e.params, |v| v.to_string()),
                ];
                let cells: Vec<String> = if i == 0 {
                    cells.into_iter().map(|c| format!("**{c}**")).collect()
                } else {
                    cells.into()
                };
                let _ = writeln!(s, "| {} |", cells.join(" | "));
            }
            Ok(s)
        }
        LeaderboardFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for (i, e) in sorted.iter().enumerate() {
                w.serialize(CsvRow {
                    rank: Some(i + 1),
                    scale: e.scale,
                    method: e.id.clone(),
                    ws_psnr: e.ws_psnr,
                    ws_ssim: e.ws_ssim,
                    runtime_s: e.runtime,
                    q: Some(e.q),
                    bd_br: e.bd_br,
                    g_flops: e.g_flops,
                    params: e.params,
                })?;
            }
            if sorted.is_empty() {
                w.write_record(["rank", "scale", "method", "ws_psnr", "ws_ssim", "runtime_s", "q", "bd_br", "g_flops", "params"])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
    }
}

/// Reads entries back from CSV (`rank` and `q` columns optional). A `q`
/// that disagrees with the recomputed score is an error.
pub fn parse_leaderboard_csv(text: &str, score: &ScoreParams) -> Result<Vec<LeaderboardEntry>> {
    let mut out = Vec::new();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    for row in reader.deserialize() {
        let row: CsvRow = row?;
        let e = LeaderboardEntry::new(row.method, row.scale, row.ws_psnr, row.ws_ssim, row.runtime_s, score)?
            .with_costs(row.bd_br, row.g_flops, row.params);
        if let Some(q) = row.q {
            if (q - e.q).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "{}: stored Q {q} does not match the recomputed {:.6}",
                    e.id, e.q
                )));
            }
        }
        out.push(e);
    }
    Ok(out)
}
