//! Acceptance suite. Runs every criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use jetext::lmi::{self, band_width, dyadic_ladder, markov_factor, spanning_rho, spanning_rho_exhaustive, LmiConfig, Verdict};
use jetext::moments::{self, blowup_sample, solve_moment_lp, ExtensionOperator, RadialWeight, WeightConfig};
use jetext::sets::{generate, PointCloud, SetSpec};
use jetext::stats::fit_log_log;
use jetext::whitney::{decompose, extend_finite, DecomposeOptions, Extension, WhitneyDecomposition};
use jetext::{multiindex, trig, Jet, MultiIndex, MultiPolynomial};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn cloud(spec: SetSpec) -> Arc<PointCloud> {
    Arc::new(generate(&spec).expect("set generation"))
}

fn dec(c: Arc<PointCloud>) -> Arc<WhitneyDecomposition> {
    Arc::new(decompose(c, &DecomposeOptions::default()).expect("decomposition"))
}

fn unit_weight(d: usize) -> Arc<RadialWeight> {
    Arc::new(RadialWeight::unit(d, &WeightConfig::default()).expect("weight"))
}

fn corpus_jets(c: &Arc<PointCloud>, count: usize, seed: u64, order: u32) -> Vec<Arc<Jet>> {
    trig::corpus(c.dim(), count, 1, seed)
        .iter()
        .map(|f| Arc::new(Jet::from_function(c.clone(), order, |a, x| Ok(f.derivative(a, x))).expect("jet")))
        .collect()
}

fn test_polynomial(d: usize, degree: u32) -> MultiPolynomial {
    let terms: Vec<_> = multiindex::enumerate(d, degree)
        .into_iter()
        .enumerate()
        .map(|(i, a)| (a, ((i as f64 + 1.0) * 0.618_033_988_75).fract() * 2.0 - 1.0))
        .collect();
    MultiPolynomial::from_terms(d, &terms)
}

/// Greedy spanning constant within 10% of the exhaustive search on balls of at most 60 points.
fn greedy_agrees(c: &PointCloud) -> Result<usize, String> {
    let mut compared = 0;
    for &i in c.boundary_sample(24, 9).iter() {
        let x0 = c.point(i);
        let mut eps = 4.0 * c.resolution();
        while c.ball_indices(x0, eps).len() > 60 && eps > 1e-9 {
            eps *= 0.7;
        }
        if c.ball_indices(x0, eps).len() < c.dim() + 1 {
            continue;
        }
        let g = spanning_rho(c, x0, eps).rho_span;
        let e = spanning_rho_exhaustive(c, x0, eps).map_err(|e| e.to_string())?.rho_span;
        check(g >= 0.9 * e - 1e-12 && g <= e + 1e-12, format!("{}: greedy {g} vs exhaustive {e} at {x0:?}", c.label()))?;
        compared += 1;
    }
    Ok(compared)
}

fn criterion_1() -> Outcome {
    let h = 2f64.powi(-8);
    let ladder = dyadic_ladder(3, 8);
    let cfg = LmiConfig { eps_ladder: ladder.clone(), ..LmiConfig::default() };
    let mut notes = Vec::new();
    let budget = Duration::from_secs(60);
    let specs = [
        SetSpec::square(h),
        SetSpec::disk(h),
        SetSpec::segment(h),
        SetSpec::cusp_out(2.0, h),
        SetSpec::cantor(8),
        SetSpec::sierpinski(7),
    ];
    for spec in specs {
        let t = Instant::now();
        let c = generate(&spec).map_err(|e| e.to_string())?;
        let v = lmi::lmi1_verdict(&c, &cfg).map_err(|e| e.to_string())?;
        let label = c.label().to_string();
        let note = match label.split(':').next().unwrap_or("") {
            "square" => {
                check(v.verdict == Verdict::Pass && v.min_rho >= 0.5, format!("square: {:?} min rho {}", v.verdict, v.min_rho))?;
                format!("square pass rho {:.3}", v.min_rho)
            }
            "disk" => {
                check(v.verdict == Verdict::Pass, format!("disk: {:?} min rho {}", v.verdict, v.min_rho))?;
                format!("disk pass rho {:.3}", v.min_rho)
            }
            "segment" => {
                check(v.verdict == Verdict::Fail, format!("segment: {:?}", v.verdict))?;
                for &i in &c.boundary_sample(cfg.max_points, cfg.seed) {
                    for &eps in &ladder {
                        let r = spanning_rho(&c, c.point(i), eps).rho_span;
                        check(r == 0.0, format!("segment: rho {r} at {:?}, eps {eps}", c.point(i)))?;
                    }
                }
                "segment fail rho 0".to_string()
            }
            "cusp_out" => {
                check(v.verdict == Verdict::Fail, format!("cusp: {:?}", v.verdict))?;
                let resolved = cfg.valid_ladder(&c);
                let rho: Vec<f64> = resolved.iter().map(|&e| spanning_rho(&c, &[0.0, 0.0], e).rho_span).collect();
                let fit = fit_log_log(&resolved, &rho).map_err(|e| e.to_string())?;
                check((fit.slope - 1.0).abs() <= 0.2, format!("cusp: tip slope {} from {rho:?}", fit.slope))?;
                format!("cusp fail tip slope {:.3}", fit.slope)
            }
            "cantor" => {
                check(v.verdict == Verdict::Pass, format!("cantor: {:?}", v.verdict))?;
                let mut worst = f64::INFINITY;
                let mut eps = 1.0;
                while eps >= 3f64.powi(-6) {
                    for &i in &c.boundary_sample(cfg.max_points, cfg.seed) {
                        worst = worst.min(spanning_rho(&c, c.point(i), eps).rho_span);
                    }
                    eps /= 1.5;
                }
                check(worst >= 1.0 / 6.0 - 0.02, format!("cantor: rho {worst}"))?;
                format!("cantor pass rho {worst:.3}")
            }
            "sierpinski" => {
                check(v.verdict == Verdict::Pass && v.min_rho >= 0.1, format!("sierpinski: {:?} min rho {}", v.verdict, v.min_rho))?;
                format!("sierpinski pass rho {:.3}", v.min_rho)
            }
            other => return Err(format!("unexpected label {other}")),
        };
        let compared = greedy_agrees(&c)?;
        let elapsed = t.elapsed();
        check(elapsed <= budget, format!("{label}: {elapsed:?} over budget"))?;
        notes.push(format!("{note} ({compared} oracle balls, {:.1}s)", elapsed.as_secs_f64()));
    }
    Ok(notes.join("; "))
}

fn criterion_2() -> Outcome {
    let c = generate(&SetSpec::interval(2f64.powi(-12)).with_size(0.5)).map_err(|e| e.to_string())?;
    check(c.len() >= 2001, format!("grid of {} points", c.len()))?;
    let mut out = Vec::new();
    for k in 1..=5u32 {
        let m = markov_factor(&c, &[0.25], 0.5, k).map_err(|e| e.to_string())?;
        let canonical = m.factor * 0.25;
        let k2 = (k * k) as f64;
        check(canonical >= k2 * (1.0 - 1e-9) && canonical <= 1.05 * k2, format!("k = {k}: {canonical}"))?;
        out.push(format!("{canonical:.4}"));
    }
    Ok(format!("canonical factors {} on {} points", out.join(", "), c.len()))
}

fn criterion_3() -> Outcome {
    let ladder = dyadic_ladder(3, 9);
    let h = 2f64.powi(-12);
    let sq = generate(&SetSpec::square(h).with_size(0.25)).map_err(|e| e.to_string())?;
    let cusp = generate(&SetSpec::cusp_out(2.0, h).with_size(0.25)).map_err(|e| e.to_string())?;
    let corner = sq.find(&[-0.125, -0.125]).ok_or("square corner missing")?;
    let tip = cusp.find(&[0.0, 0.0]).ok_or("cusp tip missing")?;
    let mut notes = Vec::new();
    for (name, c, i, target, tol) in [("square", &sq, corner, 1.0, 0.15), ("cusp", &cusp, tip, 2.0, 0.3)] {
        let fit = lmi::markov_exponent(c, 2, &ladder, &[i]).map_err(|e| e.to_string())?;
        let f = fit.fit.ok_or(format!("{name}: inconclusive"))?;
        check((f.slope - target).abs() <= tol && f.r_squared >= 0.95, format!("{name}: slope {} R2 {}", f.slope, f.r_squared))?;
        let widths: Vec<f64> = ladder.iter().map(|&e| band_width(c, c.point(i), e)).collect();
        let w = fit_log_log(&ladder, &widths).map_err(|e| e.to_string())?;
        check((w.slope - target).abs() <= tol, format!("{name}: band width slope {}", w.slope))?;
        notes.push(format!("{name} slope {:.3} (R2 {:.4}, band slope {:.3})", f.slope, f.r_squared, w.slope));
    }
    Ok(notes.join("; "))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut notes = Vec::new();
    let mut c_beta: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (spec, cap) in [
        (SetSpec::interval(2f64.powi(-8)), 2),
        (SetSpec::square(2f64.powi(-6)), 12),
        (SetSpec::square(2f64.powi(-7)), 12),
    ] {
        let d = dec(cloud(spec));
        let label = d.cloud().label().to_string();
        let r = d.verify_partition(10_000, 3).map_err(|e| e.to_string())?;
        check(r.samples == 10_000, format!("{label}: only {} collar samples", r.samples))?;
        check(r.max_sum_error <= 1e-10, format!("{label}: partition sum error {}", r.max_sum_error))?;
        check(r.support_ratio <= 2.0, format!("{label}: support ratio {}", r.support_ratio))?;
        check(r.overlap <= cap, format!("{label}: overlap {}", r.overlap))?;
        check(r.reach_ratio <= 3.0, format!("{label}: reach ratio {}", r.reach_ratio))?;
        if d.cloud().dim() == 2 {
            for (b, v) in &r.c_beta {
                c_beta.entry(b.clone()).or_default().push(*v);
            }
        }
        notes.push(format!("{label} h {}: sum err {:.1e}, (iii) {:.3}, N {}, reach {:.3}", d.cloud().resolution(), r.max_sum_error, r.support_ratio, r.overlap, r.reach_ratio));
    }
    let worst = c_beta
        .values()
        .map(|v| (v[0] / v[1]).max(v[1] / v[0]))
        .fold(0.0, f64::max);
    check(worst <= 2.0, format!("c_beta changes by {worst} under h-halving: {c_beta:?}"))?;
    let elapsed = t.elapsed();
    check(elapsed <= Duration::from_secs(120), format!("{elapsed:?} over budget"))?;
    notes.push(format!("c_beta ratio {worst:.3}, {:.1}s", elapsed.as_secs_f64()));
    Ok(notes.join("; "))
}

fn criterion_5() -> Outcome {
    let sq = dec(cloud(SetSpec::square(2f64.powi(-6))));
    let samples = sq.collar_samples(2000, 5);
    let mut worst: f64 = 0.0;
    let mut worst_derivative: f64 = 0.0;
    for n in 0..=4u32 {
        let p = test_polynomial(2, n);
        let jet = Arc::new(Jet::from_polynomial(sq.cloud().clone(), n, &p).map_err(|e| e.to_string())?);
        let e = extend_finite(jet, n, sq.clone()).map_err(|e| e.to_string())?;
        for x in &samples {
            let Ok(v) = e.derivatives(x, n) else { continue };
            worst = worst.max((v[0] - p.eval(x).map_err(|e| e.to_string())?).abs());
            for (k, b) in multiindex::enumerate(2, n).iter().enumerate().skip(1) {
                let exact = p.derivative(b).eval(x).map_err(|e| e.to_string())?;
                worst_derivative = worst_derivative.max((v[k] - exact).abs() / (1.0 + exact.abs()));
            }
        }
    }
    check(worst <= 1e-8, format!("E_n reproduction error {worst}"))?;

    let c = cloud(SetSpec::cantor(8));
    let d = dec(c.clone());
    let op = ExtensionOperator::build(d, unit_weight(1), 4).map_err(|e| e.to_string())?;
    let jets = corpus_jets(&c, 20, 11, 2);
    let (near, far) = (2f64.powi(-9), 2f64.powi(-5));
    let rows = moments::closedgraph_proxy(&op, &jets, 2, &[far, near], 64, 5).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for r in rows.iter().filter(|r| r.dist == near) {
        let coarse = rows
            .iter()
            .find(|q| q.dist == far && q.n == r.n && q.beta == r.beta)
            .ok_or(format!("no coarse row for n {} beta {:?}", r.n, r.beta))?;
        check(r.points > 0 && coarse.points > 0, format!("n {} beta {:?}: empty sample", r.n, r.beta))?;
        check(r.ratio < coarse.ratio, format!("n {} beta {:?}: {} at 2^-9 vs {} at 2^-5", r.n, r.beta, r.ratio, coarse.ratio))?;
        notes.push(format!("n{} b{:?} {:.3}->{:.3}", r.n, r.beta, coarse.ratio, r.ratio));
    }
    Ok(format!("reproduction error {worst:.1e} (derivatives {worst_derivative:.1e}); proxy {}", notes.join(", ")))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let w = unit_weight(2);
    let sq = generate(&SetSpec::square(2f64.powi(-8))).map_err(|e| e.to_string())?;
    let eps = 0.125;
    let mut worst_res: f64 = 0.0;
    let mut worst_tv0: f64 = 0.0;
    let mut probes: Vec<usize> = sq.landmarks().to_vec();
    probes.extend(sq.boundary_sample(4, 2));
    probes.push(sq.nearest(&[0.0, 0.0]).0);
    for &i in &probes {
        let s = blowup_sample(&sq, sq.point(i), eps, &w, 4).map_err(|e| e.to_string())?;
        for a in multiindex::enumerate(2, 4) {
            let m = solve_moment_lp(&s, &w, &a, 4).map_err(|e| format!("alpha {:?} at {:?}: {e}", a.entries(), sq.point(i)))?;
            worst_res = worst_res.max(m.max_residual);
            if a.is_zero() {
                worst_tv0 = worst_tv0.max(m.total_variation);
            }
        }
    }
    check(worst_res <= 1e-6, format!("square residual {worst_res}"))?;
    check(worst_tv0 <= w.eps0() / 2.0 + 1e-6, format!("alpha = 0 total variation {worst_tv0}"))?;

    let seg = generate(&SetSpec::segment(2f64.powi(-8))).map_err(|e| e.to_string())?;
    let mid = seg.nearest(&[0.0, 0.0]).0;
    let alpha = MultiIndex::new(vec![0, 1]);
    let tv = |eps: f64| -> Result<f64, String> {
        let s = blowup_sample(&seg, seg.point(mid), eps, &w, 4).map_err(|e| e.to_string())?;
        Ok(solve_moment_lp(&s, &w, &alpha, 4).map_err(|e| e.to_string())?.total_variation)
    };
    let (coarse, fine) = (tv(0.125)?, tv(2f64.powi(-6))?);
    check(fine >= 4.0 * coarse, format!("segment TV {fine} at 2^-6 vs {coarse} at 2^-3"))?;
    let elapsed = t.elapsed();
    check(elapsed <= Duration::from_secs(180), format!("{elapsed:?} over budget"))?;
    Ok(format!(
        "square residual {worst_res:.1e}, TV(alpha=0) {worst_tv0:.4}; segment TV {coarse:.3e} -> {fine:.3e} ({:.1}s)",
        elapsed.as_secs_f64()
    ))
}

/// Largest `|E p - p|` on collar samples whose active cubes all have index at
/// least the degree.
fn full_reproduction(op: &ExtensionOperator, degree: u32) -> Result<f64, String> {
    let d = op.decomposition();
    let p = test_polynomial(d.cloud().dim(), degree);
    let jet = Arc::new(Jet::from_polynomial(d.cloud().clone(), degree, &p).map_err(|e| e.to_string())?);
    let e = op.apply(jet).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for x in d.collar_samples(1000, 2) {
        if d.active(&x).iter().any(|&i| i < degree as usize) {
            continue;
        }
        if let Ok(v) = e.value(&x) {
            worst = worst.max((v - p.eval(&x).map_err(|e| e.to_string())?).abs());
            checked += 1;
        }
    }
    check(checked >= 100, format!("only {checked} reproduction samples"))?;
    Ok(worst)
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let w = unit_weight(2);
    let levels = [2f64.powi(-6), 2f64.powi(-7), 2f64.powi(-8)];
    let mut notes = Vec::new();
    let mut growth = Vec::new();
    for (name, make) in [("square", SetSpec::square as fn(f64) -> SetSpec), ("cusp", |h| SetSpec::cusp_out(2.0, h))] {
        let mut ratios = Vec::new();
        for (li, &h) in levels.iter().enumerate() {
            let c = cloud(make(h));
            let op = ExtensionOperator::build(dec(c.clone()), w.clone(), 4).map_err(|e| e.to_string())?;
            if li == 0 {
                let worst = (0..=4).map(|k| full_reproduction(&op, k)).collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max);
                check(worst <= 1e-5, format!("{name}: E reproduction error {worst}"))?;
                notes.push(format!("{name} reproduction {worst:.1e}"));
            }
            let jets = corpus_jets(&c, 20, 11, 2);
            let grid = moments::continuity_grid(op.decomposition(), 9);
            let reports = moments::continuity_reports(&op, &jets, 2, &grid).map_err(|e| e.to_string())?;
            let level_max = reports.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
            ratios.push(level_max);
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        growth.push((name, hi / lo, ratios[2] / ratios[0]));
        notes.push(format!("{name} ratios {}", ratios.iter().map(|r| format!("{r:.0}")).collect::<Vec<_>>().join("/")));
    }
    let (_, square_spread, _) = growth[0];
    let (_, _, cusp_growth) = growth[1];
    let elapsed = t.elapsed();
    notes.push(format!("square spread {square_spread:.3}, cusp growth {cusp_growth:.3} ({:.0}s)", elapsed.as_secs_f64()));
    let mut failures = Vec::new();
    if square_spread >= 2.0 {
        failures.push(format!("square max ratio varies by {square_spread:.3}"));
    }
    if cusp_growth <= 2.0 {
        failures.push(format!("cusp max ratio grows by only {cusp_growth:.3}"));
    }
    if elapsed > Duration::from_secs(300) {
        failures.push(format!("{elapsed:?} over budget"));
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{}; {}", failures.join("; "), notes.join("; ")))
    }
}

fn criterion_8() -> Outcome {
    let c = cloud(SetSpec::square(2f64.powi(-8)));
    let w = unit_weight(2);
    let ladder = [2f64.powi(-4), 2f64.powi(-6), 2f64.powi(-8)];
    let pts = c.boundary_sample(6, 3);
    let jets: Vec<Jet> = corpus_jets(&c, 5, 7, 2).into_iter().map(|j| (*j).clone()).collect();
    let rep = moments::convergence_report(&jets, &w, 2, 4, &ladder, &pts).map_err(|e| e.to_string())?;
    check(rep.rows.iter().all(|r| r.infeasible == 0), "infeasible moment problems".to_string())?;
    check(rep.monotone, format!("not monotone: {:?}", rep.rows.iter().map(|r| (r.sup_low, r.sup_high)).collect::<Vec<_>>()))?;
    let p = test_polynomial(2, 2);
    let pj = vec![Jet::from_polynomial(c.clone(), 2, &p).map_err(|e| e.to_string())?];
    let prep = moments::convergence_report(&pj, &w, 2, 4, &ladder, &pts).map_err(|e| e.to_string())?;
    let pworst = prep.rows.iter().map(|r| r.sup_low.max(r.sup_high)).fold(0.0, f64::max);
    check(pworst <= 1e-5, format!("polynomial jets give {pworst}"))?;
    Ok(format!(
        "trig {}; polynomial max {pworst:.1e}",
        rep.rows.iter().map(|r| format!("({:.2e}, {:.2e})", r.sup_low, r.sup_high)).collect::<Vec<_>>().join(" > ")
    ))
}

fn criterion_9() -> Outcome {
    let dir = std::env::temp_dir().join(format!("jetext-acceptance-{}", std::process::id()));
    let run = |tag: &str, cmd: &str| -> Result<std::path::PathBuf, String> {
        let out_dir = dir.join(tag);
        let out = Command::new(env!("CARGO_BIN_EXE_jetext"))
            .args([cmd, "--set", "cusp_out:2", "--h", "2^-6", "--eps_ladder", "2^-2..2^-5", "--max_points", "32"])
            .args(["--points", "2", "--jets", "2", "--grid", "3", "--samples", "500", "--n_max", "3", "--out"])
            .arg(&out_dir)
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), format!("{cmd}: {}", String::from_utf8_lossy(&out.stderr)))?;
        Ok(out_dir)
    };
    let payload = |path: &std::path::Path| -> Result<serde_json::Value, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        v["provenance"].as_object_mut().ok_or("no provenance")?.remove("timestamp");
        v["config"].as_object_mut().ok_or("no config")?.remove("out");
        Ok(v)
    };
    let mut files = 0;
    for (cmd, csvs) in [
        ("lmi", &["lmi.csv"][..]),
        ("markov", &["markov.csv"]),
        ("decompose", &["cubes.csv"]),
        ("extend", &["continuity.csv", "extend_grid.csv"]),
        ("moments", &["measures.csv", "convergence.csv"]),
    ] {
        let (a, b) = (run("a", cmd)?, run("b", cmd)?);
        for csv in csvs {
            let (x, y) = (std::fs::read(a.join(csv)).map_err(|e| e.to_string())?, std::fs::read(b.join(csv)).map_err(|e| e.to_string())?);
            check(x == y, format!("{csv} differs between runs"))?;
            files += 1;
        }
        let json = format!("{cmd}.json");
        check(payload(&a.join(&json))? == payload(&b.join(&json))?, format!("{json} differs between runs"))?;
        files += 1;
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{files} files identical across two runs"))
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "geometric verdict table", criterion_1),
        (2, "Markov factor vs Chebyshev", criterion_2),
        (3, "exponent regression", criterion_3),
        (4, "partition suite", criterion_4),
        (5, "E_n reproduction and decay", criterion_5),
        (6, "moment LP", criterion_6),
        (7, "full operator", criterion_7),
        (8, "convergence", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut failed = 0;
    for (k, name, f) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {k} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {k} ({name}): FAIL [{secs:.1}s] {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
