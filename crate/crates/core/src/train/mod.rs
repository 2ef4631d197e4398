//! Desk-scale training: Adam, paired patch sampling, augmentation, loss
//! selection and learning-rate schedules.

mod synthetic;

pub use synthetic::synthetic_frame;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::metrics::{self, WeightMap};
use crate::models::{bicubic_downscale, Network};
use crate::tensor::{stack_batch, Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    Charbonnier,
    /// Charbonnier plus `weight` times the spectral L1 loss.
    CharbonnierFft { weight: f64 },
    /// Latitude-weighted L1 with weights from the crop's source rows.
    WsWeightedL1,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "charbonnier" => Ok(LossKind::Charbonnier),
            "charbonnier+fft" => Ok(LossKind::CharbonnierFft { weight: 0.05 }),
            "ws-weighted-l1" => Ok(LossKind::WsWeightedL1),
            other => Err(Error::invalid(format!(
                "loss {other:?} (charbonnier, charbonnier+fft, ws-weighted-l1)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Constant,
    /// Multiply the rate by `factor` every `every` iterations.
    StepDecay { every: usize, factor: f64 },
}

impl Schedule {
    pub fn rate(&self, base: f64, iteration: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::StepDecay { every, factor } => {
                base * factor.powi((iteration / every.max(1)) as i32)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub charbonnier_eps: f64,
    pub lr: f64,
    pub schedule: Schedule,
    pub batch: usize,
    /// LR patch side in pixels.
    pub patch: usize,
    pub iterations: usize,
    pub flip: bool,
    pub rotate: bool,
    pub mixup: bool,
    /// Both shape parameters of the mixup Beta distribution.
    pub mixup_alpha: f64,
    /// Standard deviation of Gaussian noise added to synthetic LR patches
    /// before 8-bit quantization; 0 disables both.
    pub lr_noise: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Charbonnier,
            charbonnier_eps: 1e-3,
            lr: 2e-4,
            schedule: Schedule::Constant,
            batch: 4,
            patch: 32,
            iterations: 200,
            flip: true,
            rotate: true,
            mixup: false,
            mixup_alpha: 1.2,
            lr_noise: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if self.batch == 0 || self.patch == 0 {
            return Err(Error::invalid("batch and patch size must be at least 1"));
        }
        if let Schedule::StepDecay { every, factor } = self.schedule {
            if every == 0 || !(factor > 0.0) {
                return Err(Error::invalid("step decay needs every >= 1 and factor > 0"));
            }
        }
        if self.mixup && !(self.mixup_alpha > 0.0) {
            return Err(Error::invalid("mixup alpha must be positive"));
        }
        Ok(())
    }
}

/// First and second moment estimates of Adam.
#[derive(Clone, Debug)]
pub struct AdamState<T: Scalar = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Result<Self> {
        let zeros: Vec<Tensor<T>> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.dims()))
            .collect::<Result<_>>()?;
        Ok(AdamState {
            v: zeros.clone(),
            m: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.dims() != g.dims() || p.dims() != m.dims() {
            return Err(Error::shape(format!(
                "adam: parameter {:?}, gradient {:?}, moment {:?}",
                p.dims(),
                g.dims(),
                m.dims()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (b1t, b2t, eps) = (T::lit(b1), T::lit(b2), T::lit(state.eps));
    let (one_b1, one_b2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
    let step = T::lit(lr / c1);
    let inv_c2 = T::lit(1.0 / c2);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mv, &gv) in m.iter_mut().zip(g) {
            *mv = b1t * *mv + one_b1 * gv;
        }
        let v = state.v[i].data_mut();
        for (vv, &gv) in v.iter_mut().zip(g) {
            *vv = b2t * *vv + one_b2 * gv * gv;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((pv, &mv), &vv) in p.data_mut().iter_mut().zip(m).zip(v) {
            *pv = *pv - step * mv / ((vv * inv_c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// An aligned LR/HR crop pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub lr: Tensor<f32>,
    pub hr: Tensor<f32>,
    /// HR row of the crop's top edge in the source frame.
    pub hr_top: usize,
    pub hr_left: usize,
    /// Height of the source frame, for latitude weights.
    pub frame_height: usize,
}

fn crop(x: &Tensor<f32>, top: usize, left: usize, h: usize, w: usize) -> Tensor<f32> {
    let [n, c, _, _] = x.dims();
    Tensor::from_fn([n, c, h, w], |[s, ch, y, xx]| x.at([s, ch, top + y, left + xx]))
        .expect("crop dims are non-zero")
}

/// Uniformly placed `patch x patch` LR crop and its `scale`-times HR partner
/// (at `scale` times the LR offset). The LR side is the bicubic reduction of
/// the HR crop.
pub fn sample_patch(hr_frame: &Tensor<f32>, scale: usize, patch: usize, rng: &mut impl Rng) -> Result<PatchPair> {
    let [_, _, h, w] = hr_frame.dims();
    let side = patch * scale;
    if patch == 0 || scale == 0 || side > h || side > w {
        return Err(Error::invalid(format!(
            "patch {patch} at x{scale} does not fit a {w}x{h} frame"
        )));
    }
    let oy = rng.random_range(0..=(h / scale - patch));
    let ox = rng.random_range(0..=(w / scale - patch));
    let (top, left) = (oy * scale, ox * scale);
    let hr = crop(hr_frame, top, left, side, side);
    let lr = bicubic_downscale(&hr, scale)?;
    Ok(PatchPair {
        lr,
        hr,
        hr_top: top,
        hr_left: left,
        frame_height: h,
    })
}

pub fn hflip<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    Tensor::from_fn([n, c, h, w], |[s, ch, y, xx]| x.at([s, ch, y, w - 1 - xx])).unwrap()
}

pub fn vflip<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    Tensor::from_fn([n, c, h, w], |[s, ch, y, xx]| x.at([s, ch, h - 1 - y, xx])).unwrap()
}

/// Counter-clockwise rotation by 90 degrees.
pub fn rot90<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    Tensor::from_fn([n, c, w, h], |[s, ch, y, xx]| x.at([s, ch, xx, w - 1 - y])).unwrap()
}

/// `lambda * a + (1 - lambda) * b`.
pub fn mix<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, lambda: f64) -> Result<Tensor<T>> {
    let l = T::lit(lambda);
    a.zip_map(b, |x, y| l * x + (T::one() - l) * y)
}

/// Random flips and quarter turns, applied identically to both patches.
/// Mixup is applied by [`mixup`] since it needs a second pair.
pub fn augment(lr: Tensor<f32>, hr: Tensor<f32>, rng: &mut impl Rng, config: &TrainConfig) -> (Tensor<f32>, Tensor<f32>) {
    let (mut lr, mut hr) = (lr, hr);
    if config.flip {
        if rng.random_bool(0.5) {
            lr = hflip(&lr);
            hr = hflip(&hr);
        }
        if rng.random_bool(0.5) {
            lr = vflip(&lr);
            hr = vflip(&hr);
        }
    }
    if config.rotate {
        for _ in 0..rng.random_range(0..4) {
            lr = rot90(&lr);
            hr = rot90(&hr);
        }
    }
    (lr, hr)
}

/// Blend two pairs with `lambda ~ Beta(alpha, alpha)`; returns the blend and
/// the drawn `lambda`.
pub fn mixup(
    a: (&Tensor<f32>, &Tensor<f32>),
    b: (&Tensor<f32>, &Tensor<f32>),
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<((Tensor<f32>, Tensor<f32>), f64)> {
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::invalid(format!("mixup: {e}")))?;
    let lambda = beta.sample(rng);
    Ok(((mix(a.0, b.0, lambda)?, mix(a.1, b.1, lambda)?), lambda))
}

fn quantize_with_noise(x: &Tensor<f32>, sigma: f64, rng: &mut impl Rng) -> Tensor<f32> {
    let normal = rand_distr::Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let data = x
        .data()
        .iter()
        .map(|&v| {
            let n = normal.sample(rng) as f32;
            ((v + n).clamp(0.0, 1.0) * 255.0).round() / 255.0
        })
        .collect();
    Tensor::from_parts(x.dims(), data)
}

/// Loss trace and learning-rate sequence of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
}

impl TrainReport {
    /// Mean of `losses[range]`.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let s = &self.losses[range];
        s.iter().sum::<f64>() / s.len() as f64
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "lr", "loss"])?;
        for (i, (l, r)) in self.losses.iter().zip(&self.lrs).enumerate() {
            w.write_record([i.to_string(), format!("{r:e}"), format!("{l:.8}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn loss_on_tape(
    tape: &mut Tape<f32>,
    pred: &Var<f32>,
    target: &Var<f32>,
    config: &TrainConfig,
    weights: Option<&WeightMap>,
) -> Result<Var<f32>> {
    match config.loss {
        LossKind::Charbonnier => metrics::tape_charbonnier(tape, pred, target, config.charbonnier_eps),
        LossKind::CharbonnierFft { weight } => {
            let c = metrics::tape_charbonnier(tape, pred, target, config.charbonnier_eps)?;
            let f = metrics::tape_fft_loss(tape, pred, target)?;
            let f = tape.scale(&f, weight)?;
            tape.add(&c, &f)
        }
        LossKind::WsWeightedL1 => {
            let map = weights.ok_or_else(|| Error::invalid("weighted loss without weights"))?;
            metrics::tape_ws_weighted_l1(tape, pred, target, map)
        }
    }
}

/// Builds one training batch: patches, augmentation, optional mixup and LR
/// noise. Returns the LR and HR batches and the latitude weights of the HR
/// patch rows (averaged over the batch).
pub fn make_batch(
    frames: &[Tensor<f32>],
    scale: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<f32>, Tensor<f32>, WeightMap)> {
    let side = config.patch * scale;
    let mut lrs = Vec::with_capacity(config.batch);
    let mut hrs = Vec::with_capacity(config.batch);
    let mut rows = vec![0.0; side];
    for _ in 0..config.batch {
        let frame = &frames[rng.random_range(0..frames.len())];
        let p = sample_patch(frame, scale, config.patch, rng)?;
        let map = WeightMap::for_rows(side, p.frame_height, p.hr_top, side)?;
        for (acc, w) in rows.iter_mut().zip(map.rows()) {
            *acc += w / config.batch as f64;
        }
        let (mut lr, mut hr) = augment(p.lr, p.hr, rng, config);
        if config.mixup {
            let other = sample_patch(&frames[rng.random_range(0..frames.len())], scale, config.patch, rng)?;
            let ((l, h), _) = mixup((&lr, &hr), (&other.lr, &other.hr), config.mixup_alpha, rng)?;
            lr = l;
            hr = h;
        }
        if config.lr_noise > 0.0 {
            lr = quantize_with_noise(&lr, config.lr_noise, rng);
        }
        lrs.push(lr);
        hrs.push(hr);
    }
    Ok((stack_batch(&lrs)?, stack_batch(&hrs)?, WeightMap::from_rows(side, rows)?))
}

/// Trains `net` in place on HR `frames` (`[1, 3, h, w]` each, values in
/// `[0, 1]`) with synthetic LR inputs, recording the loss and rate of every
/// iteration. Deterministic for a given seed, configuration and initial
/// weights.
pub fn train(net: &mut Network<f32>, frames: &[Tensor<f32>], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("training needs at least one frame"));
    }
    let scale = net.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(net.params())?;
    let mut report = TrainReport::default();
    for it in 0..config.iterations {
        let lr_now = config.schedule.rate(config.lr, it);
        let (lr, hr, weights) = make_batch(frames, scale, config, &mut rng)?;
        let grads = {
            let mut tape = Tape::new();
            let leaves = net.leaves(&mut tape);
            let x = Var::constant(lr);
            let y = Var::constant(hr);
            let pred = net.forward_with(&mut tape, &leaves, &x)?;
            let loss = loss_on_tape(&mut tape, &pred, &y, config, Some(&weights))?;
            report.losses.push(loss.value().data()[0] as f64);
            let g = tape.backward(&loss)?;
            leaves
                .iter()
                .map(|v| g.get_or_zeros(v))
                .collect::<Result<Vec<_>>>()?
        };
        report.lrs.push(lr_now);
        let mut params = net.params_mut();
        adam_step(&mut params, &grads, &mut adam, lr_now)?;
    }
    Ok(report)
}
