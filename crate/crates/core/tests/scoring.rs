use odvsr::bdrate::*;
use odvsr::score::*;

fn curve(rates: [f64; 4], qualities: [f64; 4]) -> RdCurve {
    let pts: Vec<RdPoint> = rates.iter().zip(qualities).map(|(&r, q)| RdPoint::new(r, q)).collect();
    RdCurve::new(&pts).unwrap()
}

fn anchor() -> RdCurve {
    curve([250.0, 500.0, 1000.0, 2000.0], [27.1, 28.3, 29.2, 29.9])
}

fn scaled(c: &RdCurve, k: f64) -> RdCurve {
    let pts: Vec<RdPoint> = c.points().iter().map(|p| RdPoint::new(p.bitrate * k, p.quality)).collect();
    RdCurve::new(&pts).unwrap()
}

#[test]
fn identical_curves_have_zero_deltas() {
    assert!(bd_rate(&anchor(), &anchor()).unwrap().abs() < 1e-12);
    assert!(bd_quality(&anchor(), &anchor()).unwrap().abs() < 1e-12);
}

#[test]
fn constant_rate_factor_is_recovered() {
    let r = bd_rate(&anchor(), &scaled(&anchor(), 0.8)).unwrap();
    assert!((r + 20.0).abs() < 1e-6, "{r}");
    let r = bd_rate(&anchor(), &scaled(&anchor(), 1.25)).unwrap();
    assert!((r - 25.0).abs() < 1e-6, "{r}");
}

#[test]
fn bd_rate_antisymmetry() {
    let test = curve([260.0, 480.0, 1100.0, 2100.0], [27.4, 28.5, 29.3, 30.2]);
    let ab = bd_rate(&anchor(), &test).unwrap();
    let ba = bd_rate(&test, &anchor()).unwrap();
    assert!(((1.0 + ab / 100.0) * (1.0 + ba / 100.0) - 1.0).abs() < 1e-9);
    let qab = bd_quality(&anchor(), &test).unwrap();
    let qba = bd_quality(&test, &anchor()).unwrap();
    assert!((qab + qba).abs() < 1e-9);
}

#[test]
fn bd_rate_ignores_common_rate_scaling() {
    let test = curve([260.0, 480.0, 1100.0, 2100.0], [27.4, 28.5, 29.3, 30.2]);
    let base = bd_rate(&anchor(), &test).unwrap();
    for k in [0.001, 3.0, 1e4] {
        let r = bd_rate(&scaled(&anchor(), k), &scaled(&test, k)).unwrap();
        assert!((r - base).abs() < 1e-9, "k={k}: {r} vs {base}");
    }
}

#[test]
fn constant_quality_offset_is_recovered() {
    let up: Vec<RdPoint> = anchor().points().iter().map(|p| RdPoint::new(p.bitrate, p.quality + 0.5)).collect();
    let d = bd_quality(&anchor(), &RdCurve::new(&up).unwrap()).unwrap();
    assert!((d - 0.5).abs() < 1e-9, "{d}");
}

#[test]
fn cubic_interpolates_exactly() {
    let xs = [27.1, 28.3, 29.2, 29.9];
    let ys = [250f64.log10(), 500f64.log10(), 1000f64.log10(), 2000f64.log10()];
    let c = Cubic::through(xs, ys).unwrap();
    for (x, y) in xs.iter().zip(ys) {
        assert!((c.eval(*x) - y).abs() < 1e-9);
    }
    // antiderivative against a fine midpoint sum
    let (a, b) = (27.5, 29.5);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mid: f64 = (0..n).map(|i| c.eval(a + (i as f64 + 0.5) * h) * h).sum();
    assert!((c.integral(a, b) - mid).abs() < 1e-8);
    assert!(Cubic::through([1.0, 1.0, 2.0, 3.0], ys).is_err());
}

#[test]
fn bd_rate_matches_an_independent_lagrange_fit() {
    let test = curve([260.0, 480.0, 1100.0, 2100.0], [27.4, 28.5, 29.3, 30.2]);
    // Lagrange form evaluated pointwise and integrated by Simpson's rule
    fn lagrange(xs: [f64; 4], ys: [f64; 4], x: f64) -> f64 {
        (0..4)
            .map(|i| {
                let mut l = ys[i];
                for j in 0..4 {
                    if i != j {
                        l *= (x - xs[j]) / (xs[i] - xs[j]);
                    }
                }
                l
            })
            .sum()
    }
    let q = |c: &RdCurve| c.points().map(|p| p.quality);
    let r = |c: &RdCurve| c.points().map(|p| p.bitrate.log10());
    let (lo, hi) = (27.4f64, 29.9f64);
    let simpson = |f: &dyn Fn(f64) -> f64| {
        let n = 1000;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let (a, t) = (anchor(), test.clone());
    let ia = simpson(&|x| lagrange(q(&a), r(&a), x));
    let it = simpson(&|x| lagrange(q(&t), r(&t), x));
    let expected = (10f64.powf((it - ia) / (hi - lo)) - 1.0) * 100.0;
    let got = bd_rate(&anchor(), &test).unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn invalid_curves_are_rejected() {
    assert!(RdCurve::new(&[RdPoint::new(1.0, 1.0); 3]).is_err());
    let flat = [
        RdPoint::new(250.0, 28.0),
        RdPoint::new(500.0, 28.0),
        RdPoint::new(1000.0, 29.0),
        RdPoint::new(2000.0, 30.0),
    ];
    assert!(RdCurve::new(&flat).is_err());
    let negative = [
        RdPoint::new(-1.0, 27.0),
        RdPoint::new(500.0, 28.0),
        RdPoint::new(1000.0, 29.0),
        RdPoint::new(2000.0, 30.0),
    ];
    assert!(RdCurve::new(&negative).is_err());
    let far = curve([250.0, 500.0, 1000.0, 2000.0], [35.0, 36.0, 37.0, 38.0]);
    assert!(bd_rate(&anchor(), &far).is_err());
    let disjoint = scaled(&anchor(), 100.0);
    assert!(bd_quality(&anchor(), &disjoint).is_err());
}

#[test]
fn curve_csv() {
    let text = "bitrate,quality\n250, 27.1\n500,28.3\n1000,29.2\n2000,29.9\n";
    assert_eq!(RdCurve::from_csv(text.as_bytes()).unwrap(), anchor());
    let headerless = "250,27.1\n500,28.3\n1000,29.2\n2000,29.9\n";
    assert_eq!(RdCurve::from_csv(headerless.as_bytes()).unwrap(), anchor());
    assert!(RdCurve::from_csv("250,27.1\n500,x\n1000,29.2\n2000,29.9\n".as_bytes()).is_err());
    assert!(RdCurve::from_csv("250,27.1,3\n".as_bytes()).is_err());
}

fn fig() -> ScoreParams {
    ScoreParams::for_scale(2).unwrap()
}

#[test]
fn score_reference_values() {
    let p = fig();
    assert!((q_score(31.0, 0.010, &p).unwrap() - 100.0).abs() < 1e-12);
    let q = q_score(29.589, 0.0057, &p).unwrap();
    assert!((q - 67.93).abs() < 0.01, "{q}");
    // exp(-0.414) evaluated independently in extended precision
    let c = runtime_score(0.0298, &p).unwrap();
    assert!((c - 0.661_000_951_265_912_5).abs() < 1e-12, "{c}");
    assert!((c - 0.6611).abs() < 1e-4);
    assert!((q_hat(29.589, &p).unwrap() - 0.358_636).abs() < 1e-6);
    assert_eq!(runtime_score(0.016, &p).unwrap(), 1.0);
    assert_eq!(runtime_score(0.0057, &p).unwrap(), 1.0);
    assert_eq!(q_hat(31.0, &p).unwrap(), 1.0);
    assert_eq!(q_hat(28.8, &p).unwrap(), 0.0);
}

#[test]
fn q_hat_is_not_clamped() {
    let p = fig();
    assert!(q_hat(27.0, &p).unwrap() < 0.0);
    assert!(q_hat(32.0, &p).unwrap() > 1.0);
}

#[test]
fn beta_zero_uses_runtime_only() {
    let p = ScoreParams { beta: 0.0, ..fig() };
    let a = q_score(28.0, 0.03, &p).unwrap();
    let b = q_score(31.0, 0.03, &p).unwrap();
    assert_eq!(a, b);
    assert!((a - 100.0 * runtime_score(0.03, &p).unwrap()).abs() < 1e-12);
}

#[test]
fn runtime_score_is_continuous_at_the_threshold() {
    let p = fig();
    let just_over = runtime_score(0.016 + 1e-12, &p).unwrap();
    assert!((just_over - 1.0).abs() < 1e-9);
}

#[test]
fn score_monotonicity() {
    let p = fig();
    let mut last = f64::NEG_INFINITY;
    for i in 0..50 {
        let q = q_score(28.0 + i as f64 * 0.07, 0.02, &p).unwrap();
        assert!(q >= last);
        last = q;
    }
    let mut last = f64::INFINITY;
    for i in 0..50 {
        let q = q_score(29.5, i as f64 * 0.002, &p).unwrap();
        assert!(q <= last);
        last = q;
    }
}

#[test]
fn ranking_survives_a_common_shift() {
    let p = fig();
    let entries = [(29.6, 0.005), (29.4, 0.001), (29.7, 0.03), (29.76, 0.042)];
    let order = |p: &ScoreParams, shift: f64| {
        let mut idx: Vec<usize> = (0..entries.len()).collect();
        let q: Vec<f64> = entries.iter().map(|&(w, r)| q_score(w + shift, r, p).unwrap()).collect();
        idx.sort_by(|&a, &b| q[b].total_cmp(&q[a]));
        idx
    };
    let shifted = ScoreParams {
        psnr_min: p.psnr_min + 1.5,
        psnr_max: p.psnr_max + 1.5,
        ..p
    };
    assert_eq!(order(&p, 0.0), order(&shifted, 1.5));
}

#[test]
fn invalid_parameters() {
    let p = fig();
    assert!(q_score(29.0, -0.1, &p).is_err());
    assert!(q_score(29.0, 0.01, &ScoreParams { beta: 1.5, ..p }).is_err());
    assert!(q_score(29.0, 0.01, &ScoreParams { psnr_max: 28.8, ..p }).is_err());
    assert!(q_score(29.0, 0.01, &ScoreParams { b: 0.0, ..p }).is_err());
    assert!(q_score(29.0, 0.01, &ScoreParams { rt_threshold: 0.0, ..p }).is_err());
    assert!(q_hat(29.0, &ScoreParams { psnr_max: 28.8, ..p }).is_err());
    assert!(ScoreParams::for_scale(3).is_err());
}

#[test]
fn x4_printed_scores_reproduce() {
    let p = ScoreParams::for_scale(4).unwrap();
    for r in recompute(4, &p).unwrap() {
        assert!((r.formula - r.printed).abs() < 0.01, "{}: {} vs {}", r.row.method, r.formula, r.printed);
    }
}

#[test]
fn x2_printed_scores_do_not_reproduce() {
    let p = ScoreParams::for_scale(2).unwrap();
    let rows = recompute(2, &p).unwrap();
    let vacv = rows.iter().find(|r| r.row.method == "VACV").unwrap();
    assert!((vacv.formula - 67.93).abs() < 0.01);
    assert_eq!(vacv.printed, 81.25);
    // IVCL has the higher WS-PSNR yet needs a lower normalized quality
    let conflicts = ordering_conflicts(&rows);
    assert!(conflicts.contains(&("IVCL", "VACV")), "{conflicts:?}");
}

#[test]
fn discrepancy_report_content() {
    let md = discrepancy_report().unwrap();
    assert!(md.starts_with("# Score discrepancy report"));
    assert!(md.contains("## x2 track"));
    assert!(md.contains("| VACV | 29.589 | 0.0057 | 1.0000 | 81.25 | 67.93 |"));
    assert!(md.contains("do NOT reproduce"));
    assert!(md.contains("All printed scores reproduce within 0.01"));
}
