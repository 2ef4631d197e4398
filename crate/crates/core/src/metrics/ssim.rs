use super::{same_dims, Plane, WeightMap};
use crate::error::{Error, Result};

/// SSIM constants; the defaults are the canonical 11x11 Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03 on 8-bit range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            range: 255.0,
        }
    }
}

impl SsimParams {
    pub fn with_range(range: f64) -> Self {
        SsimParams {
            range,
            ..Self::default()
        }
    }

    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let g: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }
}

/// Valid-region SSIM map; entry `(i, j)` is centred on pixel
/// `(i + window/2, j + window/2)`.
pub(crate) fn ssim_map(a: &Plane, b: &Plane, p: SsimParams) -> Result<(usize, usize, Vec<f64>)> {
    same_dims(a, b)?;
    let k = p.window;
    if a.width < k || a.height < k {
        return Err(Error::shape(format!(
            "{}x{} frame smaller than the {k}x{k} SSIM window",
            a.width, a.height
        )));
    }
    let g = p.kernel();
    let (w, h) = (a.width, a.height);
    let (mw, mh) = (w - k + 1, h - k + 1);
    // moments: x, y, x^2, y^2, xy
    let mut horiz = vec![[0.0f64; 5]; h * mw];
    for y in 0..h {
        for x in 0..mw {
            let mut m = [0.0f64; 5];
            for (t, &gt) in g.iter().enumerate() {
                let u = a.data[y * w + x + t];
                let v = b.data[y * w + x + t];
                m[0] += gt * u;
                m[1] += gt * v;
                m[2] += gt * u * u;
                m[3] += gt * v * v;
                m[4] += gt * u * v;
            }
            horiz[y * mw + x] = m;
        }
    }
    let c1 = (p.k1 * p.range).powi(2);
    let c2 = (p.k2 * p.range).powi(2);
    let mut out = Vec::with_capacity(mw * mh);
    for y in 0..mh {
        for x in 0..mw {
            let mut m = [0.0f64; 5];
            for (t, &gt) in g.iter().enumerate() {
                let h = &horiz[(y + t) * mw + x];
                for q in 0..5 {
                    m[q] += gt * h[q];
                }
            }
            let (mx, my) = (m[0], m[1]);
            let vx = m[2] - mx * mx;
            let vy = m[3] - my * my;
            let cov = m[4] - mx * my;
            out.push(
                ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2)),
            );
        }
    }
    Ok((mw, mh, out))
}

/// WS-SSIM: the SSIM map averaged with the weight of each window centre row.
pub fn ws_ssim(reference: &Plane, test: &Plane) -> Result<f64> {
    let map = WeightMap::new(reference.width, reference.height);
    ws_ssim_with(reference, test, &map, SsimParams::default())
}

pub fn ws_ssim_with(reference: &Plane, test: &Plane, weights: &WeightMap, p: SsimParams) -> Result<f64> {
    weights.check(reference)?;
    let (mw, mh, map) = ssim_map(reference, test, p)?;
    let half = p.window / 2;
    let mut num = 0.0;
    let mut den = 0.0;
    for y in 0..mh {
        let wt = weights.weight(y + half, 0);
        let row: f64 = map[y * mw..][..mw].iter().sum();
        num += wt * row;
        den += wt * mw as f64;
    }
    Ok(num / den)
}

pub fn ssim(reference: &Plane, test: &Plane) -> Result<f64> {
    ssim_with(reference, test, SsimParams::default())
}

pub fn ssim_with(reference: &Plane, test: &Plane, p: SsimParams) -> Result<f64> {
    let (_, _, map) = ssim_map(reference, test, p)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}
