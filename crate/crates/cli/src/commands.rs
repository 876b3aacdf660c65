use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use jetext::lmi::{self, LmiConfig, Verdict};
use jetext::moments::{self, CkConfig, ExtensionOperator, RadialWeight, WeightConfig};
use jetext::sets::{generate, PointCloud, SetFamily, SetSpec};
use jetext::whitney::{self, DecomposeOptions, Extension, WhitneyDecomposition};
use jetext::{multiindex, Jet, MultiPolynomial};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{coord_names, num, write_report, Csv};

pub fn load_set(cfg: &RunConfig, h: f64) -> CliResult<PointCloud> {
    let family = SetFamily::parse(&cfg.set)?;
    if let SetFamily::PointsFile { path } = &family {
        return Ok(PointCloud::load_points(path, cfg.dim)?);
    }
    let mut spec = SetSpec::new(family, h);
    if let Some(s) = cfg.size {
        spec = spec.with_size(s);
    }
    Ok(generate(&spec)?)
}

fn lmi_config(cfg: &RunConfig) -> LmiConfig {
    LmiConfig {
        eps_ladder: cfg.eps_ladder.clone(),
        pass_floor: cfg.pass_floor,
        decay_slope: cfg.decay_slope,
        max_points: cfg.max_points,
        seed: cfg.seed,
        markov_degree: cfg.k,
        markov_points: Some(cfg.points),
        ..LmiConfig::default()
    }
}

fn weight(cfg: &RunConfig, dim: usize) -> CliResult<RadialWeight> {
    let wc = WeightConfig { eps0: cfg.eps0, delta: cfg.delta, k_max: cfg.k_max, ..WeightConfig::default() };
    Ok(RadialWeight::unit(dim, &wc)?)
}

fn decomposition(cloud: PointCloud) -> CliResult<Arc<WhitneyDecomposition>> {
    Ok(Arc::new(whitney::decompose(Arc::new(cloud), &DecomposeOptions::default())?))
}

fn corpus_jets(cfg: &RunConfig, carrier: &Arc<PointCloud>, order: u32) -> CliResult<Vec<Arc<Jet>>> {
    jetext::trig::corpus(carrier.dim(), cfg.jets, cfg.max_freq, cfg.seed)
        .iter()
        .map(|f| Ok(Arc::new(Jet::from_function(carrier.clone(), order, |a, x| Ok(f.derivative(a, x)))?)))
        .collect()
}

/// Writes the point file to `output`, or to stdout.
pub fn gen(cfg: &RunConfig, output: Option<&std::path::Path>) -> CliResult<()> {
    let cloud = load_set(cfg, cfg.h)?;
    match output {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
            cloud.write_points(std::io::BufWriter::new(f))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            cloud.write_points(&mut lock)?;
            lock.flush().map_err(|e| CliError::io("stdout", e))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct LmiPayload {
    points: usize,
    valid_ladder: Vec<f64>,
    verdict: lmi::LmiVerdict,
    table_rows: usize,
}

/// Returns the verdict.
pub fn lmi(cfg: &RunConfig) -> CliResult<Verdict> {
    let cloud = load_set(cfg, cfg.h)?;
    let lc = lmi_config(cfg);
    let valid_ladder = lc.valid_ladder(&cloud);
    let verdict = lmi::lmi1_verdict(&cloud, &lc)?;
    let rows = lmi::lmi_table(&cloud, &lc)?;
    let d = cloud.dim();
    let mut header = coord_names("x0_", d);
    header.extend(["eps", "rho_span", "band_width", &format!("M_{}", cfg.k)].map(String::from));
    let mut csv = Csv::create(cfg, "lmi.csv", &header)?;
    for r in &rows {
        let mut cells: Vec<String> = r.x0.iter().map(|&v| num(v)).collect();
        cells.extend([r.eps, r.rho_span, r.band_width, r.markov].map(num));
        csv.row(&cells)?;
    }
    csv.finish()?;
    let v = verdict.verdict;
    write_report(cfg, "lmi", LmiPayload { points: verdict.points, valid_ladder, verdict, table_rows: rows.len() })?;
    eprintln!("lmi: {} {:?} (min rho {:.3e})", cloud.label(), v, rows.iter().map(|r| r.rho_span).fold(f64::INFINITY, f64::min));
    Ok(v)
}

#[derive(Serialize)]
struct MarkovPayload {
    degree: u32,
    probes: usize,
    fit: lmi::ExponentFit,
}

pub fn markov(cfg: &RunConfig) -> CliResult<()> {
    let cloud = load_set(cfg, cfg.h)?;
    let ladder = lmi_config(cfg).valid_ladder(&cloud);
    if ladder.is_empty() {
        return Err(CliError::BadValue { key: "eps_ladder".into(), message: format!("no scale is resolved at h = {}", cloud.resolution()) });
    }
    let probes = cloud.boundary_sample(cfg.points, cfg.seed);
    let d = cloud.dim();
    let mut header = coord_names("x0_", d);
    header.extend(["eps", "degree", "factor", "unbounded"].map(String::from));
    let mut csv = Csv::create(cfg, "markov.csv", &header)?;
    for &eps in &ladder {
        for &i in &probes {
            let r = lmi::markov_factor(&cloud, cloud.point(i), eps, cfg.k)?;
            let mut cells: Vec<String> = cloud.point(i).iter().map(|&v| num(v)).collect();
            cells.extend([num(eps), cfg.k.to_string(), num(r.factor), r.unbounded.to_string()]);
            csv.row(&cells)?;
        }
    }
    csv.finish()?;
    let fit = lmi::markov_exponent(&cloud, cfg.k, &ladder, &probes)?;
    write_report(cfg, "markov", MarkovPayload { degree: cfg.k, probes: probes.len(), fit })?;
    Ok(())
}

#[derive(Serialize)]
struct DecomposePayload {
    cubes: usize,
    dropped: usize,
    min_side: f64,
    collar_width: f64,
    partition: whitney::PartitionReport,
    estimates: moments::EstimateChain,
}

pub fn decompose(cfg: &RunConfig) -> CliResult<()> {
    let dec = decomposition(load_set(cfg, cfg.h)?)?;
    let mut w = Vec::new();
    dec.write_csv(&mut w)?;
    let path = cfg.out.join("cubes.csv");
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    std::fs::write(&path, w).map_err(|e| CliError::io(&path, e))?;
    let partition = dec.verify_partition(cfg.samples, cfg.seed)?;
    let estimates = moments::estimate_chain(&dec, cfg.n, cfg.n_max, cfg.samples, cfg.seed)?;
    let payload = DecomposePayload {
        cubes: dec.cubes().len(),
        dropped: dec.dropped(),
        min_side: dec.min_side(),
        collar_width: dec.collar_width(),
        partition,
        estimates,
    };
    write_report(cfg, "decompose", payload)?;
    Ok(())
}

#[derive(Serialize)]
struct Reproduction {
    operator: String,
    degree: u32,
    samples: usize,
    checked: usize,
    max_error: f64,
    max_error_on_k: f64,
}

#[derive(Serialize)]
struct ContinuityEntry {
    level: f64,
    n: u32,
    jet: usize,
    norm: f64,
    sup: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct LevelSummary {
    level: f64,
    cubes: usize,
    lattice_points: usize,
    flagged_cubes: Vec<usize>,
    operator: moments::OperatorStats,
    max_ratio: Vec<f64>,
}

#[derive(Serialize)]
struct ExtendPayload {
    source: String,
    jets: usize,
    seed: u64,
    reproduction: Vec<Reproduction>,
    levels: Vec<LevelSummary>,
    continuity: Vec<ContinuityEntry>,
    grid_points: usize,
}

/// A fixed dense polynomial of the given degree with coefficients in [-1, 1].
fn test_polynomial(dim: usize, degree: u32) -> MultiPolynomial {
    let terms: Vec<_> = multiindex::enumerate(dim, degree)
        .into_iter()
        .enumerate()
        .map(|(i, a)| (a, ((i as f64 + 1.0) * 0.618_033_988_75).fract() * 2.0 - 1.0))
        .collect();
    MultiPolynomial::from_terms(dim, &terms)
}

fn reproduction(
    name: &str,
    e: &dyn Extension,
    p: &MultiPolynomial,
    dec: &WhitneyDecomposition,
    cfg: &RunConfig,
) -> CliResult<Reproduction> {
    let samples = dec.collar_samples(cfg.samples, cfg.seed);
    let mut checked = 0;
    let mut max_error: f64 = 0.0;
    for x in &samples {
        if name == "E" && dec.active(x).iter().any(|&i| i < p.degree() as usize) {
            continue;
        }
        if let Ok(v) = e.value(x) {
            max_error = max_error.max((v - p.eval(x)?).abs());
            checked += 1;
        }
    }
    let cloud = dec.cloud();
    let mut max_error_on_k: f64 = 0.0;
    for x in cloud.points() {
        max_error_on_k = max_error_on_k.max((e.value(x)? - p.eval(x)?).abs());
    }
    Ok(Reproduction { operator: name.to_string(), degree: p.degree(), samples: samples.len(), checked, max_error, max_error_on_k })
}

pub fn extend(cfg: &RunConfig) -> CliResult<()> {
    let (source, base) = match &cfg.jet_file {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            let jet = Jet::read(std::io::BufReader::new(f), None)?;
            if jet.order() < cfg.n {
                return Err(CliError::BadValue { key: "n".into(), message: format!("jet file has order {} < n", jet.order()) });
            }
            (path.display().to_string(), Some(Arc::new(jet)))
        }
        None => (format!("trig corpus ({} jets, max_freq {})", cfg.jets, cfg.max_freq), None),
    };
    let levels = if base.is_some() { vec![cfg.h] } else { cfg.level_list() };
    let mut reproduction_rows = Vec::new();
    let mut summaries = Vec::new();
    let mut continuity = Vec::new();
    let mut jet_count = 0;
    let mut grid_points = 0;
    for (li, &level) in levels.iter().enumerate() {
        let cloud = match &base {
            Some(j) => (**j.carrier()).clone(),
            None => load_set(cfg, level)?,
        };
        let dec = decomposition(cloud)?;
        let carrier = dec.cloud().clone();
        let w = Arc::new(weight(cfg, carrier.dim())?);
        let op = ExtensionOperator::build(dec.clone(), w, cfg.n_max)?;
        let jets = match &base {
            Some(j) => vec![Arc::new(Jet::new(carrier.clone(), j.order(), (0..j.carrier().len()).flat_map(|i| j.at(i).to_vec()).collect())?)],
            None => corpus_jets(cfg, &carrier, cfg.n)?,
        };
        jet_count = jets.len();
        if li == 0 {
            let d = carrier.dim();
            for (name, degree) in [("E_n", cfg.n), ("E", cfg.n_max)] {
                let p = test_polynomial(d, degree);
                let jet = Arc::new(Jet::from_polynomial(carrier.clone(), degree, &p)?);
                let ext: Box<dyn Extension> = if name == "E" {
                    Box::new(op.apply(jet)?)
                } else {
                    Box::new(whitney::extend_finite(jet, cfg.n, dec.clone())?)
                };
                reproduction_rows.push(reproduction(name, ext.as_ref(), &p, &dec, cfg)?);
            }
            grid_points = write_grid(cfg, &dec, &op, &jets[0])?;
        }
        let lattice = moments::continuity_grid(&dec, cfg.grid);
        let mut max_ratio = Vec::new();
        for rep in moments::continuity_reports(&op, &jets, cfg.n, &lattice)? {
            max_ratio.push(rep.max_ratio);
            let n = rep.n;
            continuity.extend(rep.rows.iter().map(|r| ContinuityEntry { level, n, jet: r.jet, norm: r.norm, sup: r.sup, ratio: r.ratio }));
        }
        summaries.push(LevelSummary {
            level,
            cubes: dec.cubes().len(),
            lattice_points: lattice.len(),
            flagged_cubes: op.flagged().to_vec(),
            operator: op.stats().clone(),
            max_ratio,
        });
    }
    let mut csv = Csv::create(cfg, "continuity.csv", &["level", "n", "jet", "norm", "sup", "ratio"].map(String::from))?;
    for c in &continuity {
        csv.row(&[num(c.level), c.n.to_string(), c.jet.to_string(), num(c.norm), num(c.sup), num(c.ratio)])?;
    }
    csv.finish()?;
    let payload = ExtendPayload {
        source,
        jets: jet_count,
        seed: cfg.seed,
        reproduction: reproduction_rows,
        levels: summaries,
        continuity,
        grid_points,
    };
    write_report(cfg, "extend", payload)?;
    Ok(())
}

/// Values of `E_n f` and `E f` with the derivatives of `E f` up to order `n`,
/// on collar samples followed by carrier points.
fn write_grid(cfg: &RunConfig, dec: &Arc<WhitneyDecomposition>, op: &ExtensionOperator, jet: &Arc<Jet>) -> CliResult<usize> {
    let cloud = dec.cloud();
    let d = cloud.dim();
    let en = whitney::extend_finite(jet.clone(), cfg.n, dec.clone())?;
    let e = op.apply(jet.clone())?;
    let basis = multiindex::enumerate(d, cfg.n);
    let mut header = coord_names("x", d);
    header.extend(["in_k", "en", "e"].map(String::from));
    header.extend(basis.iter().map(|b| format!("d{}", b.entries().iter().map(u32::to_string).collect::<Vec<_>>().join("_"))));
    let mut csv = Csv::create(cfg, "extend_grid.csv", &header)?;
    let mut pts = dec.collar_samples(cfg.samples, cfg.seed);
    let stride = (cloud.len() / 64).max(1);
    pts.extend((0..cloud.len()).step_by(stride).map(|i| cloud.point(i).to_vec()));
    let mut written = 0;
    for x in &pts {
        let (Ok(vn), Ok(dv)) = (en.value(x), e.derivatives(x, cfg.n)) else { continue };
        let mut cells: Vec<String> = x.iter().map(|&v| num(v)).collect();
        cells.push(cloud.find(x).is_some().to_string());
        cells.push(num(vn));
        cells.push(num(dv[0]));
        cells.extend(dv.iter().map(|&v| num(v)));
        csv.row(&cells)?;
        written += 1;
    }
    csv.finish()?;
    Ok(written)
}

#[derive(Serialize)]
struct MeasureSummary {
    alpha: Vec<u32>,
    atoms: usize,
    total_variation: f64,
    max_residual: f64,
    uses_far: bool,
}

#[derive(Serialize)]
struct MomentsPayload {
    weight: RadialWeight,
    cutoff: f64,
    annulus: Vec<moments::AnnulusConstant>,
    ck: Option<moments::CkEstimate>,
    ck_error: Option<String>,
    probe: Vec<f64>,
    probe_eps: f64,
    measures: Vec<MeasureSummary>,
    convergence: moments::ConvergenceReport,
}

pub fn moments(cfg: &RunConfig) -> CliResult<()> {
    let cloud = Arc::new(load_set(cfg, cfg.h)?);
    let d = cloud.dim();
    let w = weight(cfg, d)?;
    let annulus = (1..=cfg.k).map(|k| moments::annulus_markov_constant(d, k)).collect::<jetext::Result<Vec<_>>>()?;
    let ck_cfg = CkConfig { points: cfg.points, seed: cfg.seed, ..CkConfig::default() };
    let (ck, ck_error) = match moments::estimate_ck(&cloud, cfg.k, &ck_cfg) {
        Ok(c) => (Some(c), None),
        Err(e @ jetext::Error::Infeasible(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };

    let probes = cloud.boundary_sample(cfg.points, cfg.seed);
    let x = cloud.point(probes[0]).to_vec();
    let eps = cfg.moment_ladder[0];
    let sample = moments::blowup_sample(&cloud, &x, eps, &w, cfg.n_max)?;
    let mut measures = Vec::new();
    let mut buf = Vec::new();
    for alpha in multiindex::enumerate(d, cfg.n_max) {
        let m = moments::solve_moment_lp(&sample, &w, &alpha, cfg.n_max)?;
        m.write_csv(&mut buf)?;
        measures.push(MeasureSummary {
            alpha: alpha.entries().to_vec(),
            atoms: m.atoms.len(),
            total_variation: m.total_variation,
            max_residual: m.max_residual,
            uses_far: m.uses_far,
        });
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let path = cfg.out.join("measures.csv");
    std::fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;

    let jets: Vec<Jet> = corpus_jets(cfg, &cloud, cfg.n)?.into_iter().map(|j| (*j).clone()).collect();
    let convergence = moments::convergence_report(&jets, &w, cfg.n, cfg.n_max, &cfg.moment_ladder, &probes)?;
    let mut csv = Csv::create(cfg, "convergence.csv", &["eps", "sup_low", "sup_high", "max_total_variation", "far_measures", "infeasible"].map(String::from))?;
    for r in &convergence.rows {
        csv.row(&[num(r.eps), num(r.sup_low), num(r.sup_high), num(r.max_total_variation), r.far_measures.to_string(), r.infeasible.to_string()])?;
    }
    csv.finish()?;

    let payload = MomentsPayload {
        cutoff: w.cutoff(cfg.n_max),
        weight: w,
        annulus,
        ck,
        ck_error,
        probe: x,
        probe_eps: eps,
        measures,
        convergence,
    };
    write_report(cfg, "moments", payload)?;
    Ok(())
}
