//! Bjøntegaard delta rate and delta quality between two four-point
//! rate-distortion curves.

use std::io::Read;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    /// Kilobits per second.
    pub bitrate: f64,
    /// dB.
    pub quality: f64,
}

impl RdPoint {
    pub fn new(bitrate: f64, quality: f64) -> Self {
        RdPoint { bitrate, quality }
    }
}

/// Four rate points with strictly increasing bitrate and quality.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: [RdPoint; 4],
}

impl RdCurve {
    pub fn new(points: &[RdPoint]) -> Result<Self> {
        let points: [RdPoint; 4] = points.try_into().map_err(|_| {
            Error::invalid(format!("an RD curve needs exactly 4 points, got {}", points.len()))
        })?;
        for p in &points {
            if !(p.bitrate > 0.0 && p.bitrate.is_finite()) {
                return Err(Error::invalid(format!("bitrate {} must be positive", p.bitrate)));
            }
            if !p.quality.is_finite() {
                return Err(Error::invalid("quality must be finite"));
            }
        }
        for w in points.windows(2) {
            if w[1].bitrate <= w[0].bitrate {
                return Err(Error::invalid("bitrates must be strictly increasing"));
            }
            if w[1].quality <= w[0].quality {
                return Err(Error::invalid(
                    "qualities must be strictly increasing (duplicate or falling quality makes the fit degenerate)",
                ));
            }
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[RdPoint; 4] {
        &self.points
    }

    /// Reads `bitrate,quality` rows; a first row that does not parse as
    /// numbers is taken as a header.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::invalid(format!(
                    "row {}: expected 2 fields (bitrate, quality), got {}",
                    i + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(b), Ok(q)) => points.push(RdPoint::new(b, q)),
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::invalid(format!("row {}: non-numeric field", i + 1)));
                }
            }
        }
        RdCurve::new(&points)
    }

    fn log_rates(&self) -> [f64; 4] {
        self.points.map(|p| p.bitrate.log10())
    }

    fn qualities(&self) -> [f64; 4] {
        self.points.map(|p| p.quality)
    }
}

/// The cubic through four points, held in the shifted variable `x - center`
/// to keep the Vandermonde system well conditioned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cubic {
    pub center: f64,
    /// `c0 + c1 t + c2 t^2 + c3 t^3` with `t = x - center`.
    pub coeffs: [f64; 4],
}

impl Cubic {
    /// Exact interpolation through four points with distinct `xs`.
    pub fn through(xs: [f64; 4], ys: [f64; 4]) -> Result<Self> {
        let center = xs.iter().sum::<f64>() / 4.0;
        let mut a = [[0.0f64; 5]; 4];
        for i in 0..4 {
            let t = xs[i] - center;
            a[i] = [1.0, t, t * t, t * t * t, ys[i]];
        }
        // Gaussian elimination with partial pivoting
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
                .expect("non-empty range");
            if a[pivot][col].abs() < 1e-300 {
                return Err(Error::invalid("degenerate fit: repeated abscissae"));
            }
            a.swap(col, pivot);
            for row in col + 1..4 {
                let f = a[row][col] / a[col][col];
                for k in col..5 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        let mut c = [0.0f64; 4];
        for row in (0..4).rev() {
            let s: f64 = (row + 1..4).map(|k| a[row][k] * c[k]).sum();
            c[row] = (a[row][4] - s) / a[row][row];
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("degenerate fit"));
        }
        Ok(Cubic { center, coeffs: c })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.center;
        let [c0, c1, c2, c3] = self.coeffs;
        ((c3 * t + c2) * t + c1) * t + c0
    }

    fn antiderivative(&self, x: f64) -> f64 {
        let t = x - self.center;
        let [c0, c1, c2, c3] = self.coeffs;
        (((c3 / 4.0 * t + c2 / 3.0) * t + c1 / 2.0) * t + c0) * t
    }

    /// Closed-form integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }
}

fn overlap(a: [f64; 4], b: [f64; 4], what: &str) -> Result<(f64, f64)> {
    let lo = a[0].max(b[0]);
    let hi = a[3].min(b[3]);
    if hi <= lo {
        return Err(Error::invalid(format!("{what} ranges do not overlap")));
    }
    Ok((lo, hi))
}

/// Average bitrate difference in percent at equal quality; negative means
/// the test curve needs less bitrate.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (qa, qt) = (anchor.qualities(), test.qualities());
    let (lo, hi) = overlap(qa, qt, "quality")?;
    let fa = Cubic::through(qa, anchor.log_rates())?;
    let ft = Cubic::through(qt, test.log_rates())?;
    let delta = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(delta) - 1.0) * 100.0)
}

/// Average quality difference in dB at equal bitrate.
pub fn bd_quality(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (ra, rt) = (anchor.log_rates(), test.log_rates());
    let (lo, hi) = overlap(ra, rt, "bitrate")?;
    let fa = Cubic::through(ra, anchor.qualities())?;
    let ft = Cubic::through(rt, test.qualities())?;
    Ok((ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo))
}
