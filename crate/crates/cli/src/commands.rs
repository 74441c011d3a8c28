use crate::config::{InitConfig, NetConfig, Resolved};
use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array2, ArrayView2};
use pathgeo::data::{Dataset, Source};
use pathgeo::invariance::{balance_per_unit, balance_weights, check_function_equal, random_rescaling};
use pathgeo::measures::{margin_of, max_sharpness, norm_measures, pac_bayes_curve, phi_p, ComplexityReport, PacBayesConfig, SharpnessEstimate};
use pathgeo::netgraph::{NetJson, Structure};
use pathgeo::optim::{path_sgd_step, Batch, Labels, LossKind, Method, OptimizerConfig};
use pathgeo::pathnorm::{kappa, kappa_bruteforce, path_reg_bruteforce, path_reg_dp};
use pathgeo::rng::stream;
use pathgeo::train::{EpochMetrics, TrainState, Trainer};
use pathgeo::{NetworkGraph, ParamVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct MetricsRow<'a> {
    config_hash: &'a str,
    seed: u64,
    step: usize,
    epoch: usize,
    train_loss: f64,
    train_err: f64,
    test_err: Option<f64>,
    kappa_min: f64,
    kappa_max: f64,
    gamma2_net: f64,
}

impl<'a> MetricsRow<'a> {
    fn new(config_hash: &'a str, seed: u64, m: &EpochMetrics) -> Self {
        MetricsRow {
            config_hash,
            seed,
            step: m.step,
            epoch: m.epoch,
            train_loss: m.train_loss,
            train_err: m.train_err,
            test_err: m.test_err,
            kappa_min: m.kappa_min,
            kappa_max: m.kappa_max,
            gamma2_net: m.gamma2_net,
        }
    }
}

fn csv_writer(path: &Path, append: bool) -> Result<csv::Writer<File>> {
    let exists = append && path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(csv::WriterBuilder::new().has_headers(!exists).from_writer(file))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Envelope that stamps every JSON output with the config hash and seed.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub struct TrainArgs {
    pub resume: Option<PathBuf>,
}

pub fn train(r: &Resolved, args: TrainArgs) -> Result<()> {
    let cfg = &r.cfg;
    let tcfg = r.train_config()?;
    let net = cfg.net.build()?;
    let (train, test) = cfg.data.load(cfg.seed)?;
    prepare_out(&cfg.out_dir)?;
    let mut trainer = match &args.resume {
        Some(p) => {
            let state: TrainState = serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
            Trainer::resume(&net, tcfg, state)?
        }
        None => Trainer::new(&net, tcfg, cfg.init.init(&net, cfg.seed)?)?,
    };
    let metrics = cfg.out_dir.join("metrics.csv");
    let mut w = csv_writer(&metrics, args.resume.is_some())?;
    while !trainer.done() {
        let m = trainer.run_epoch(&train, test.as_ref())?;
        w.serialize(MetricsRow::new(&r.hash, cfg.seed, &m))?;
        w.flush()?;
        eprintln!(
            "epoch {} step {} loss {:.6} train_err {:.4}{}",
            m.epoch,
            m.step,
            m.train_loss,
            m.train_err,
            m.test_err.map(|e| format!(" test_err {e:.4}")).unwrap_or_default()
        );
    }
    trainer.eval_params(&train)?.save(cfg.out_dir.join("weights.pgw"))?;
    NetJson::save(&net, cfg.out_dir.join("net.json"))?;
    write_json(&cfg.out_dir.join("state.json"), &trainer.state())?;
    write_json(&cfg.out_dir.join("config.json"), &Stamped { config_hash: &r.hash, seed: cfg.seed, body: cfg })?;
    Ok(())
}

#[derive(Serialize)]
struct MeasureReport {
    complexity: ComplexityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sharpness: Option<SharpnessEstimate>,
}

#[derive(Serialize)]
struct PacRow<'a> {
    config_hash: &'a str,
    seed: u64,
    alpha: f64,
    kl: f64,
    expected_sharpness: f64,
}

fn load_net_weights(r: &Resolved, net_path: Option<&Path>, weights: &Path) -> Result<(NetworkGraph, ParamVector)> {
    let net = match net_path {
        Some(p) => NetJson::load(p).with_context(|| format!("loading net {}", p.display()))?,
        None => r.cfg.net.build()?,
    };
    let theta = ParamVector::load(weights).with_context(|| format!("loading weights {}", weights.display()))?;
    if theta.len() != net.n_params() {
        bail!("weights have {} values but the net has {} parameters", theta.len(), net.n_params());
    }
    Ok((net, theta))
}

fn measure_one(net: &NetworkGraph, theta: &[f64], data: &Dataset, m: &crate::config::MeasureConfig) -> Result<ComplexityReport> {
    let gamma = margin_of(net, theta, data.inputs.view(), data.labels(), m.eps)?;
    Ok(norm_measures(net, theta, gamma, &m.pq_grid, &m.phi_grid)?)
}

pub fn measure(r: &Resolved, net_path: Option<&Path>, weights: &Path) -> Result<()> {
    let cfg = &r.cfg;
    let (net, theta) = load_net_weights(r, net_path, weights)?;
    let (train, _) = cfg.data.load(cfg.seed)?;
    let m = &cfg.measure;
    let complexity = measure_one(&net, &theta, &train, m)?;
    let sharpness = match m.sharpness_alpha {
        Some(a) => {
            let mut asc = m.ascent.clone();
            asc.seed = cfg.seed;
            Some(max_sharpness(&net, &theta, &train, a, &asc)?)
        }
        None => None,
    };
    let pac_cfg = PacBayesConfig { n_perturb: m.n_perturb, seed: cfg.seed, loss: m.ascent.loss };
    let curve = pac_bayes_curve(&net, &theta, &train, &m.alpha_grid, &pac_cfg)?;
    prepare_out(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("report.json"), &Stamped { config_hash: &r.hash, seed: cfg.seed, body: MeasureReport { complexity, sharpness } })?;
    let mut w = csv_writer(&cfg.out_dir.join("pac_bayes.csv"), false)?;
    for p in curve.points {
        w.serialize(PacRow { config_hash: &r.hash, seed: cfg.seed, alpha: p.alpha, kl: p.kl, expected_sharpness: p.expected_sharpness })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub max_deviation: f64,
    pub tol: f64,
}

impl Check {
    fn new(name: &str, max_deviation: f64, tol: f64) -> Self {
        Check { name: name.into(), passed: max_deviation <= tol, max_deviation, tol }
    }
}

#[derive(Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn gaussian_rows(rows: usize, cols: usize, seed: u64, name: &str) -> Array2<f64> {
    let mut rng = stream(seed, name);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

/// One Path-SGD step from θ and from T(θ) on the same batch; returns the output deviation.
fn path_sgd_step_deviation(net: &NetworkGraph, theta: &[f64], scaled: &[f64], probes: ArrayView2<f64>, seed: u64) -> Result<f64> {
    let targets = gaussian_rows(probes.nrows(), net.n_outputs(), seed, "targets");
    let batch = Batch { inputs: probes, labels: Labels::Values(targets.view()) };
    let mut cfg = OptimizerConfig::new(Method::PathSgd, 1e-3);
    // The default floor is relative to max κ and so not rescaling-invariant.
    cfg.kappa_floor = Some(f64::MIN_POSITIVE);
    let a = path_sgd_step(net, theta, batch, LossKind::Squared, &cfg)?;
    let b = path_sgd_step(net, scaled, batch, LossKind::Squared, &cfg)?;
    Ok(check_function_equal(net, &a, &b, probes, 0.0)?.max_deviation)
}

pub fn invariance_checks(net: &NetworkGraph, theta: &ParamVector, seed: u64, n_probes: usize) -> Result<CheckReport> {
    let probes = gaussian_rows(n_probes, net.n_inputs(), seed, "probes");
    let map = random_rescaling(net, seed, 1.0)?;
    let scaled = map.apply(net, theta)?;
    let mut checks = vec![Check::new(
        "rescaling_preserves_function",
        check_function_equal(net, theta, &scaled, probes.view(), 0.0)?.max_deviation,
        1e-9,
    )];
    checks.push(Check::new("rescaling_preserves_phi2", rel(phi_p(net, theta, 2.0)?, phi_p(net, &scaled, 2.0)?), 1e-10));
    checks.push(Check::new(
        "path_sgd_step_invariant",
        path_sgd_step_deviation(net, theta, &scaled, probes.view(), seed)?,
        1e-6,
    ));
    if matches!(net.structure(), Structure::Layered { bias: false, .. }) {
        let unit = balance_per_unit(net, theta, 2.0)?;
        checks.push(Check::new(
            "per_unit_balance_preserves_function",
            check_function_equal(net, theta, &unit, probes.view(), 0.0)?.max_deviation,
            1e-9,
        ));
        checks.push(Check::new("per_unit_balance_preserves_phi2", rel(phi_p(net, theta, 2.0)?, phi_p(net, &unit, 2.0)?), 1e-12));
        if let Ok(layer) = balance_weights(net, theta, 2.0, 2.0) {
            checks.push(Check::new(
                "layer_balance_preserves_function",
                check_function_equal(net, theta, &layer, probes.view(), 0.0)?.max_deviation,
                1e-9,
            ));
        }
    }
    Ok(CheckReport { seed, passed: checks.iter().all(|c| c.passed), checks })
}

pub fn kappa_checks(net: &NetworkGraph, theta: &[f64], cap: usize) -> Result<CheckReport> {
    let dp = kappa(net, theta, true);
    let bf = kappa_bruteforce(net, theta, cap)?;
    let worst = |a: &[f64], b: &[f64]| {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0f64, f64::max)
    };
    let checks = vec![
        Check::new("path_regularizer", rel(path_reg_dp(net, theta).net, path_reg_bruteforce(net, theta, cap)?), 1e-12),
        Check::new("kappa1", worst(&dp.kappa1, &bf.kappa1), 1e-9),
        Check::new("kappa2", worst(&dp.kappa2, &bf.kappa2), 1e-9),
    ];
    Ok(CheckReport { seed: 0, passed: checks.iter().all(|c| c.passed), checks })
}

#[derive(Serialize)]
struct SweepRow<'a> {
    config_hash: &'a str,
    seed: u64,
    hidden: usize,
    train_loss: f64,
    train_err: f64,
    test_err: Option<f64>,
    gamma_margin: Option<f64>,
    l2_measure: Option<f64>,
    l1_path_measure: Option<f64>,
    l2_path_measure: Option<f64>,
    spectral_measure: Option<f64>,
}

struct SweepPoint {
    seed: u64,
    hidden: usize,
    last: EpochMetrics,
    /// None when the trained net does not separate the data.
    report: Option<ComplexityReport>,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("PATHGEO_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow!("PATHGEO_THREADS must be a positive integer, got {v:?}"))?;
        b = b.num_threads(n.max(1));
    }
    Ok(b.build()?)
}

pub fn sweep_hidden(r: &Resolved, hidden: &[usize], seeds: &[u64]) -> Result<()> {
    let cfg = &r.cfg;
    let tcfg = r.train_config()?;
    let jobs: Vec<(usize, u64)> = hidden.iter().flat_map(|&h| seeds.iter().map(move |&s| (h, s))).collect();
    let points: Vec<Result<SweepPoint>> = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(h, seed)| {
                let net = cfg.net.with_hidden(h)?.build()?;
                let (train, test) = cfg.data.load(seed)?;
                let mut t = tcfg.clone();
                t.optimizer.seed = seed;
                let mut trainer = Trainer::new(&net, t, cfg.init.init(&net, seed)?)?;
                let rows = trainer.run(&train, test.as_ref())?;
                let last = rows.last().cloned().ok_or_else(|| anyhow!("no epochs configured"))?;
                let theta = trainer.eval_params(&train)?;
                let report = match measure_one(&net, &theta, &train, &cfg.measure) {
                    Ok(rep) => Some(rep),
                    Err(e) if matches!(e.downcast_ref::<pathgeo::Error>(), Some(pathgeo::Error::MarginDegenerate(_))) => None,
                    Err(e) => return Err(e),
                };
                Ok(SweepPoint { seed, hidden: h, last, report })
            })
            .collect()
    });
    prepare_out(&cfg.out_dir)?;
    let mut w = csv_writer(&cfg.out_dir.join("sweep_hidden.csv"), false)?;
    for p in points {
        let p = p?;
        w.serialize(SweepRow {
            config_hash: &r.hash,
            seed: p.seed,
            hidden: p.hidden,
            train_loss: p.last.train_loss,
            train_err: p.last.train_err,
            test_err: p.last.test_err,
            gamma_margin: p.report.as_ref().map(|m| m.gamma_margin),
            l2_measure: p.report.as_ref().map(|m| m.l2_measure),
            l1_path_measure: p.report.as_ref().map(|m| m.l1_path_measure),
            l2_path_measure: p.report.as_ref().map(|m| m.l2_path_measure),
            spectral_measure: p.report.as_ref().map(|m| m.spectral_measure),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BenchRow<'a> {
    config_hash: &'a str,
    seed: u64,
    steps: usize,
    method: Method,
    train_mse: f64,
    test_mse: Option<f64>,
}

pub fn addition_bench(r: &Resolved, steps_list: &[usize], methods: &[Method]) -> Result<()> {
    let cfg = &r.cfg;
    let NetConfig::Rnn { spec } = &cfg.net else { bail!("addition-bench needs an `rnn` net") };
    let Source::Addition { m, seed: data_seed, .. } = cfg.data.dataset.source else {
        bail!("addition-bench needs an `addition` dataset source")
    };
    let tcfg = r.train_config()?;
    let jobs: Vec<(usize, Method)> = steps_list.iter().flat_map(|&t| methods.iter().map(move |&k| (t, k))).collect();
    let results: Vec<Result<(usize, Method, EpochMetrics)>> = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(steps, method)| {
                let mut spec = spec.clone();
                spec.steps = steps;
                let net = NetConfig::Rnn { spec }.build()?;
                let mut data = cfg.data.clone();
                data.dataset.source = Source::Addition { steps, m, seed: data_seed };
                if let Some(Source::Addition { m: mt, seed: st, .. }) = data.test.as_ref().map(|t| t.source.clone()) {
                    data.test.as_mut().unwrap().source = Source::Addition { steps, m: mt, seed: st };
                }
                let (train, test) = data.load(cfg.seed)?;
                let mut t = tcfg.clone();
                t.optimizer.method = method;
                let init = match &cfg.init {
                    InitConfig::File { .. } => bail!("addition-bench builds nets of several lengths; use a generated init"),
                    other => other.clone(),
                };
                let mut trainer = Trainer::new(&net, t, init.init(&net, cfg.seed)?)?;
                let rows = trainer.run(&train, test.as_ref())?;
                Ok((steps, method, rows.last().cloned().ok_or_else(|| anyhow!("no epochs configured"))?))
            })
            .collect()
    });
    prepare_out(&cfg.out_dir)?;
    let mut w = csv_writer(&cfg.out_dir.join("addition_bench.csv"), false)?;
    for res in results {
        let (steps, method, m) = res?;
        w.serialize(BenchRow { config_hash: &r.hash, seed: cfg.seed, steps, method, train_mse: m.train_err, test_mse: m.test_err })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_check_report(path: Option<&Path>, hash: Option<&str>, report: &CheckReport) -> Result<()> {
    let text = match hash {
        Some(h) => serde_json::to_string_pretty(&Stamped { config_hash: h, seed: report.seed, body: report })?,
        None => serde_json::to_string_pretty(report)?,
    };
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}
