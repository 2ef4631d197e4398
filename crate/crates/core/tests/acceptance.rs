//! Acceptance run: one PASS/FAIL line per criterion, with every tolerance
//! pinned below. Criteria run one after another in a single test so the
//! timing checks do not compete with the heavy ones for the CPU.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::cases::{net_case, op_cases};
use odvsr::bdrate::{bd_quality, bd_rate, RdCurve, RdPoint};
use odvsr::bench::{
    emit_leaderboard, measure_runtime, parse_leaderboard_csv, LeaderboardEntry, LeaderboardFormat, ModelUpscaler,
    SleepStub,
};
use odvsr::media::{read_ppm, read_y4m, write_ppm, write_y4m, FrameBuffer, Layout, VideoSequence};
use odvsr::metrics::{ws_psnr, ws_psnr_with, Plane, WeightMap};
use odvsr::models::{bicubic_upscale, build, count_params, Network, ARCHITECTURES};
use odvsr::score::{discrepancy_report, published, q_score, runtime_score, ScoreParams};
use odvsr::tensor::fft::{fft2, ifft2};
use odvsr::tensor::ops::{pixel_shuffle, pixel_unshuffle};
use odvsr::tensor::Tensor;
use odvsr::train::{sample_patch, synthetic_frame, train, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// criterion 1
const Q_EXACT_TOL: f64 = 0.005;
const Q_TOL: f64 = 0.01;
const RUNTIME_SCORE_TOL: f64 = 1e-4;
// criterion 2
const WS_PSNR_ORACLE_TOL: f64 = 1e-9;
const ONE_LEVEL_DB: f64 = 48.1308;
const ONE_LEVEL_TOL: f64 = 1e-4;
// criterion 3
const BD_TOL: f64 = 1e-6;
const ANTISYMMETRY_TOL: f64 = 1e-9;
// criterion 5
const OP_TOL: f64 = 1e-6;
const NET_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(300);
// criterion 6
const LOSS_RATIO_MAX: f64 = 0.5;
const TRAIN_BUDGET: Duration = Duration::from_secs(600);
// criterion 7
const PROPERTY_CASES: u32 = 256;
// criterion 10
const STUB_DELAY: Duration = Duration::from_millis(20);
const STUB_TOL: f64 = 0.15;
const REAL_CV_MAX: f64 = 0.10;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: u32, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    // written straight to stdout so the lines show without --nocapture
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {id:>2} {tag}  {title}: {detail} [{:.1} s]",
        start.elapsed().as_secs_f64()
    );
    outcome.is_ok()
}

fn challenge_constants() -> ScoreParams {
    ScoreParams {
        beta: 0.5,
        b: 30.0,
        rt_threshold: 0.016,
        psnr_min: 28.8,
        psnr_max: 31.0,
    }
}

fn q_score_fidelity() -> Outcome {
    let p = challenge_constants();
    check(ScoreParams::for_scale(2).unwrap() == p, || "x2 track constants differ".into())?;
    let top = q_score(31.0, 0.010, &p).unwrap();
    check((top - 100.0).abs() < Q_EXACT_TOL, || format!("q(31, 0.010) = {top}"))?;
    let vacv = q_score(29.589, 0.0057, &p).unwrap();
    check((vacv - 67.93).abs() <= Q_TOL, || format!("q(29.589, 0.0057) = {vacv}"))?;
    let c = runtime_score(0.0298, &p).unwrap();
    check((c - 0.6611).abs() <= RUNTIME_SCORE_TOL, || format!("C(0.0298) = {c}"))?;

    let report = discrepancy_report().unwrap();
    check(report.contains("Printed scores do NOT reproduce"), || {
        "report does not flag the x2 scores".into()
    })?;
    let artifact = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/score_discrepancy.md");
    let stored = std::fs::read_to_string(&artifact).map_err(|e| format!("{}: {e}", artifact.display()))?;
    check(stored == report, || "docs/score_discrepancy.md is stale".into())?;
    Ok(format!("Q = {top:.2}, {vacv:.2}; C = {c:.4}; discrepancy report current"))
}

fn random_plane(rng: &mut ChaCha8Rng, w: usize, h: usize, max: u8) -> Vec<u8> {
    (0..w * h).map(|_| rng.random_range(0..=max)).collect()
}

/// Double loop over rows and columns, cosine latitude weights, f64 throughout.
fn brute_ws_psnr(a: &[u8], b: &[u8], w: usize, h: usize) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for j in 0..h {
        let wt = ((j as f64 + 0.5 - h as f64 / 2.0) * std::f64::consts::PI / h as f64).cos();
        for i in 0..w {
            let d = a[j * w + i] as f64 - b[j * w + i] as f64;
            num += wt * d * d;
            den += wt;
        }
    }
    10.0 * (255.0f64 * 255.0 / (num / den)).log10()
}

fn ws_psnr_oracle() -> Outcome {
    let (w, h) = (64, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = random_plane(&mut rng, w, h, 255);
        let b = random_plane(&mut rng, w, h, 255);
        let fast = ws_psnr(&Plane::from_u8(w, h, &a).unwrap(), &Plane::from_u8(w, h, &b).unwrap(), 255.0).unwrap();
        worst = worst.max((fast - brute_ws_psnr(&a, &b, w, h)).abs());
    }
    check(worst < WS_PSNR_ORACLE_TOL, || format!("oracle gap {worst:e} dB"))?;
    let a = random_plane(&mut rng, w, h, 254);
    let b: Vec<u8> = a.iter().map(|v| v + 1).collect();
    let one = ws_psnr(&Plane::from_u8(w, h, &a).unwrap(), &Plane::from_u8(w, h, &b).unwrap(), 255.0).unwrap();
    check((one - ONE_LEVEL_DB).abs() < ONE_LEVEL_TOL, || format!("one-level error gives {one} dB"))?;
    Ok(format!("100 pairs, max gap {worst:.1e} dB; one level {one:.4} dB"))
}

fn curve(rates: [f64; 4], quality: [f64; 4]) -> RdCurve {
    let pts: Vec<RdPoint> = rates.iter().zip(quality).map(|(&r, q)| RdPoint::new(r, q)).collect();
    RdCurve::new(&pts).unwrap()
}

fn bd_rate_cases() -> Outcome {
    let rates = [120.0, 260.0, 610.0, 1400.0];
    let quality = [27.1, 28.6, 30.4, 31.9];
    let anchor = curve(rates, quality);
    let down = bd_rate(&anchor, &curve(rates.map(|r| 0.8 * r), quality)).unwrap();
    check((down + 20.0).abs() < BD_TOL, || format!("x0.8 gives {down}"))?;
    let up = bd_rate(&anchor, &curve(rates.map(|r| 1.25 * r), quality)).unwrap();
    check((up - 25.0).abs() < BD_TOL, || format!("x1.25 gives {up}"))?;

    let other = curve([100.0, 300.0, 500.0, 1500.0], [27.4, 29.0, 29.9, 32.3]);
    let ab = bd_rate(&anchor, &other).unwrap();
    let ba = bd_rate(&other, &anchor).unwrap();
    let product = (1.0 + ab / 100.0) * (1.0 + ba / 100.0) - 1.0;
    check(product.abs() < ANTISYMMETRY_TOL, || format!("rate antisymmetry off by {product:e}"))?;
    let q = bd_quality(&anchor, &other).unwrap() + bd_quality(&other, &anchor).unwrap();
    check(q.abs() < ANTISYMMETRY_TOL, || format!("quality antisymmetry off by {q:e}"))?;
    Ok(format!("{down:.6} %, {up:+.6} %, antisymmetry {:.1e}", product.abs().max(q.abs())))
}

fn parameter_anchors() -> Outcome {
    // (architecture, scale, published count, relative tolerance)
    let anchors = [
        ("ffcir", 4, 394_824.0, 0.10),
        ("ffcir", 2, 383_124.0, 0.10),
        ("cspsr", 4, 232_128.0, 0.15),
        ("vacv", 4, 315_120.0, 0.15),
        ("athena", 4, 188_160.0, 0.15),
        ("fsrcnn", 2, 24_683.0, 0.20),
        ("fsrcnn", 4, 24_683.0, 0.20),
    ];
    let mut parts = Vec::new();
    for (name, scale, target, tol) in anchors {
        let n = count_params(&build(name, scale).unwrap());
        let rel = (n as f64 - target) / target;
        check(rel.abs() <= tol, || format!("{name} x{scale}: {n} vs {target} ({:+.1}%)", 100.0 * rel))?;
        parts.push(format!("{name} x{scale} {:+.1}%", 100.0 * rel));
    }
    Ok(parts.join(", "))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let ops = op_cases();
    let worst_op = ops.iter().cloned().fold(("".to_string(), 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    for (name, err) in &ops {
        check(*err < OP_TOL, || format!("{name}: {err:e}"))?;
    }
    let mut worst_net = ("".to_string(), 0.0f64);
    for name in ARCHITECTURES {
        for scale in [2, 4] {
            let err = net_case(name, scale);
            check(err < NET_TOL, || format!("{name} x{scale}: {err:e}"))?;
            if err > worst_net.1 {
                worst_net = (format!("{name} x{scale}"), err);
            }
        }
    }
    let took = start.elapsed();
    check(took < GRAD_BUDGET, || format!("took {:.0} s", took.as_secs_f64()))?;
    Ok(format!(
        "{} op cases (worst {} {:.1e}), 10 nets (worst {} {:.1e})",
        ops.len(),
        worst_op.0,
        worst_op.1,
        worst_net.0,
        worst_net.1
    ))
}

fn luma_ws_psnr(reference: &Tensor<f32>, test: &Tensor<f32>, map: &WeightMap) -> f64 {
    let r = Plane::luma_from_tensor(reference, 0, 255.0).unwrap();
    let t = Plane::luma_from_tensor(&test.map(|v| v.clamp(0.0, 1.0)), 0, 255.0).unwrap();
    ws_psnr_with(&r, &t, 255.0, map).unwrap()
}

fn desk_convergence() -> Outcome {
    let start = Instant::now();
    let frames: Vec<Tensor<f32>> = (0..8).map(|i| synthetic_frame(128, 128, i).unwrap()).collect();
    let mut net = Network::<f32>::new(build("athena", 2).unwrap(), 1).unwrap();
    let cfg = TrainConfig {
        lr: 4e-3,
        batch: 16,
        patch: 64,
        iterations: 200,
        flip: false,
        rotate: false,
        seed: 3,
        ..Default::default()
    };
    let report = train(&mut net, &frames, &cfg).unwrap();
    let n = report.losses.len();
    let (first, last) = (report.mean_loss(0..10), report.mean_loss(n - 10..n));
    check(last <= LOSS_RATIO_MAX * first, || format!("loss {first:.4} -> {last:.4}"))?;

    // a 64-pixel LR patch at x2 covers the whole 128x128 frame
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut model_db, mut bicubic_db) = (0.0, 0.0);
    for f in &frames {
        let p = sample_patch(f, 2, cfg.patch, &mut rng).unwrap();
        let map = WeightMap::for_rows(128, 128, p.hr_top, 128).unwrap();
        model_db += luma_ws_psnr(&p.hr, &net.forward(&p.lr).unwrap(), &map) / frames.len() as f64;
        bicubic_db += luma_ws_psnr(&p.hr, &bicubic_upscale(&p.lr, 2).unwrap(), &map) / frames.len() as f64;
    }
    check(model_db > bicubic_db, || format!("model {model_db:.3} dB vs bicubic {bicubic_db:.3} dB"))?;
    let took = start.elapsed();
    check(took < TRAIN_BUDGET, || format!("took {:.0} s", took.as_secs_f64()))?;
    Ok(format!(
        "loss {first:.4} -> {last:.4} ({:.0}%), WS-PSNR {model_db:.3} dB vs bicubic {bicubic_db:.3} dB",
        100.0 * last / first
    ))
}

fn random_tensor(dims: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0)).unwrap()
}

fn fail<T: std::fmt::Debug>(name: &str, e: proptest::test_runner::TestError<T>) -> String {
    format!("{name}: {e}")
}

fn properties() -> Outcome {
    let runner = || TestRunner::new(Config::with_cases(PROPERTY_CASES));

    runner()
        .run(
            &(1usize..=4, 1usize..4, 1usize..7, 1usize..7, any::<u64>()),
            |(r, c, h, w, seed)| {
                let x = random_tensor([1, c * r * r, h, w], seed);
                prop_assert_eq!(&pixel_unshuffle(&pixel_shuffle(&x, r).unwrap(), r).unwrap(), &x);
                let y = random_tensor([1, c, h * r, w * r], seed ^ 1);
                prop_assert_eq!(&pixel_shuffle(&pixel_unshuffle(&y, r).unwrap(), r).unwrap(), &y);
                Ok(())
            },
        )
        .map_err(|e| fail("shuffle inverse", e))?;

    runner()
        .run(
            &(0..ARCHITECTURES.len(), prop::sample::select(vec![2usize, 4]), 1usize..7, 1usize..7, any::<u64>()),
            |(arch, scale, hh, hw, seed)| {
                // even sizes: the strided ATHENA head requires them
                let (h, w) = (2 * hh, 2 * hw);
                let net = Network::<f32>::new(build(ARCHITECTURES[arch], scale).unwrap(), seed).unwrap();
                let x: Tensor<f32> = random_tensor([1, 3, h, w], seed).map(|v| 0.5 + 0.5 * v).cast();
                prop_assert_eq!(net.forward(&x).unwrap().dims(), [1, 3, scale * h, scale * w]);
                Ok(())
            },
        )
        .map_err(|e| fail("scale contract", e))?;

    runner()
        .run(&(1usize..20, 1usize..20, any::<u64>()), |(h, w, seed)| {
            let x = random_tensor([1, 1, h, w], seed);
            let spec = fft2(x.data(), h, w);
            let back = ifft2(&spec, h, w);
            for (a, b) in back.iter().zip(x.data()) {
                prop_assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
            }
            let energy: f64 = x.data().iter().map(|v| v * v).sum();
            let spectral = spec.iter().map(|v| v.norm_sqr()).sum::<f64>() / (h * w) as f64;
            prop_assert!((energy - spectral).abs() <= 1e-10 * energy.max(1.0));
            Ok(())
        })
        .map_err(|e| fail("fft round trip / Parseval", e))?;
    Ok(format!("3 properties x {PROPERTY_CASES} cases"))
}

fn media_round_trips() -> Outcome {
    let mut runner = TestRunner::new(Config::with_cases(PROPERTY_CASES));
    let frame = (prop::sample::select(vec![Layout::Rgb8, Layout::Y8]), 1usize..24, 1usize..24, any::<u64>());
    runner
        .run(&frame, |(layout, w, h, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..layout.payload_len(w, h)).map(|_| rng.random()).collect();
            let f = FrameBuffer::new(layout, w, h, data).unwrap();
            prop_assert_eq!(read_ppm(&write_ppm(&f).unwrap()).unwrap(), f);
            Ok(())
        })
        .map_err(|e| format!("ppm: {e}"))?;

    let clip = (1usize..12, 1usize..12, 1usize..4, 1u32..61, any::<u64>());
    runner
        .run(&clip, |(hw, hh, n, fps, seed)| {
            let (w, h) = (2 * hw, 2 * hh);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = (0..n)
                .map(|_| {
                    let data = (0..Layout::Yuv420.payload_len(w, h)).map(|_| rng.random()).collect();
                    FrameBuffer::new(Layout::Yuv420, w, h, data).unwrap()
                })
                .collect();
            let seq = VideoSequence::new(frames, (fps, 1)).unwrap();
            let bytes = write_y4m(&seq).unwrap();
            let back = read_y4m(&bytes).unwrap();
            prop_assert_eq!(back.frames(), seq.frames());
            prop_assert_eq!(back.fps, seq.fps);
            prop_assert_eq!(write_y4m(&back).unwrap(), bytes);
            Ok(())
        })
        .map_err(|e| format!("y4m: {e}"))?;

    let mut example = b"YUV4MPEG2 W4 H2 F30:1\nFRAME\n".to_vec();
    example.extend([0u8; 12]);
    let seq = read_y4m(&example).map_err(|e| e.to_string())?;
    check(seq.dims() == Some((4, 2)) && seq.fps == (30, 1) && seq.len() == 1, || {
        format!("12-byte example parsed as {:?} @ {:?}, {} frames", seq.dims(), seq.fps, seq.len())
    })?;
    Ok(format!("PPM and Y4M x {PROPERTY_CASES} cases bitwise; 12-byte example 4x2 @ 30 fps"))
}

fn ranking_reproduction() -> Outcome {
    let p = ScoreParams::for_scale(4).unwrap();
    let teams = ["FFCIR", "IVCL", "VACV", "ATHENA"];
    let entries: Vec<LeaderboardEntry> = published(4)
        .filter(|r| teams.contains(&r.method))
        .map(|r| LeaderboardEntry::from_published(r, &p).unwrap())
        .collect();
    check(entries.len() == 4, || format!("{} published team rows", entries.len()))?;
    let csv = emit_leaderboard(&entries, LeaderboardFormat::Csv).unwrap();
    let order: Vec<String> = parse_leaderboard_csv(&csv, &p)
        .unwrap()
        .iter()
        .map(|e| e.id().to_string())
        .collect();
    check(order == teams, || format!("order {order:?}"))?;
    let md = emit_leaderboard(&entries, LeaderboardFormat::Markdown).unwrap();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).collect();
    let pos: Vec<usize> = teams
        .iter()
        .map(|t| rows.iter().position(|l| l.contains(t)).unwrap_or(usize::MAX))
        .collect();
    check(pos.windows(2).all(|w| w[0] < w[1]), || "markdown rows out of order".into())?;
    Ok(order.join(" > "))
}

fn runtime_stability() -> Outcome {
    let stub = SleepStub {
        scale: 2,
        delay: STUB_DELAY,
    };
    let small = Tensor::<f32>::zeros([1, 3, 8, 8]).unwrap();
    let mut stub_medians = Vec::new();
    for _ in 0..3 {
        let s = measure_runtime(&stub, &small, 2, 15).unwrap();
        let rel = (s.median - STUB_DELAY.as_secs_f64()) / STUB_DELAY.as_secs_f64();
        check(rel.abs() <= STUB_TOL, || format!("stub median {:.2} ms", 1e3 * s.median))?;
        stub_medians.push(1e3 * s.median);
    }

    // a x4 model on a quarter-2K input, measured five times independently
    let model = ModelUpscaler::new(Network::new(build("athena", 4).unwrap(), 1).unwrap());
    let frame = Tensor::<f32>::full([1, 3, 270, 480], 0.5).unwrap();
    let medians: Vec<f64> = (0..5)
        .map(|_| measure_runtime(&model, &frame, 2, 7).unwrap().median)
        .collect();
    let mean = medians.iter().sum::<f64>() / medians.len() as f64;
    let sd = (medians.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / medians.len() as f64).sqrt();
    let cv = sd / mean;
    check(cv < REAL_CV_MAX, || format!("real-model medians {medians:?} (CV {:.1}%)", 100.0 * cv))?;
    Ok(format!(
        "stub medians {:.2}/{:.2}/{:.2} ms; athena x4 medians CV {:.1}% around {:.1} ms",
        stub_medians[0],
        stub_medians[1],
        stub_medians[2],
        100.0 * cv,
        1e3 * mean
    ))
}

#[test]
fn acceptance() {
    // libtest has already printed "test acceptance ... " without a newline
    let _ = writeln!(std::io::stdout().lock());
    let results = [
        run(1, "Q-score formula fidelity", q_score_fidelity),
        run(2, "WS-PSNR oracle equivalence", ws_psnr_oracle),
        run(3, "BD-rate analytic cases", bd_rate_cases),
        run(4, "parameter-count anchors", parameter_anchors),
        run(5, "gradient suite", gradient_suite),
        run(6, "desk-scale convergence", desk_convergence),
        run(7, "shape/inverse properties", properties),
        run(8, "media round trips", media_round_trips),
        run(9, "ranking reproduction", ranking_reproduction),
        run(10, "runtime harness stability", runtime_stability),
    ];
    let failed: Vec<usize> = (1..=10).filter(|i| !results[i - 1]).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
