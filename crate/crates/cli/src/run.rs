//! One experiment run: shared objects are built once, the requested
//! analyses run in order, and each writes `<analysis>.json` to the output
//! directory next to a `manifest.json`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context as _, Result};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cocycle_core::cocycle::{two_sided_to_one_sided, AnchorRule, MatrixCocycle};
use cocycle_core::gibbs::{ruelle_matrix, GibbsModel, LocallyConstantPotential};
use cocycle_core::linalg::Matrix;
use cocycle_core::limits::{
    clt_test, exponent_curve, ldp_empirical, ldp_rate, legendre_at, lyapunov_furstenberg, lyapunov_mc,
    lyapunov_spectral, rates_trend_toward, variance_mc, variance_spectral, TailSampling,
};
use cocycle_core::perron::{
    convergence_ratios, cyclic_normal_form, pf_decomposition, random_irreducible, rotation_symmetry_check,
};
use cocycle_core::rng::{derive_seed, task_rng};
use cocycle_core::sft::Word;
use cocycle_core::transfer::{
    block_structure_check, build_grid, lasota_yorke_estimate, peripheral_spectrum, spectral_radius,
    ProjectiveGrid, SpectralOptions, TransferSkeleton,
};
use cocycle_core::typicality::is_one_typical;

use crate::config::{self, Analysis, Diagnostic, ExperimentConfig, Resolved};

/// `|rho(0) - 1|` accepted as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Tolerance of the spectral rotation check in the perron analysis.
pub const ROTATION_TOL: f64 = 1e-8;
/// Holonomy tolerance when reducing a two-sided cocycle.
const REDUCTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub grid_n: Option<usize>,
    pub threads: Option<usize>,
}

/// Configuration rejected before any computation.
#[derive(Debug, Clone)]
pub struct ConfigError(pub Vec<Diagnostic>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for d in &self.0 {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisEntry {
    pub analysis: String,
    pub status: Status,
    pub report: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub config_file: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub grid_n: usize,
    pub threads: usize,
    /// The configuration after overrides, with every default filled in.
    pub config: ExperimentConfig,
    pub analyses: Vec<AnalysisEntry>,
    pub started_at_unix: f64,
    pub finished_at_unix: f64,
}

impl Manifest {
    pub fn all_completed(&self) -> bool {
        self.analyses.iter().all(|a| a.status == Status::Completed)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Reads and parses a config file, applying no overrides.
pub fn load_config(path: &Path) -> Result<(String, ExperimentConfig)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = config::parse(&text).map_err(ConfigError)?;
    Ok((text, cfg))
}

/// Every violation in the file at `path`; empty when the config is valid.
pub fn validate_file(path: &Path) -> Result<Vec<Diagnostic>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(validate_text(&text))
}

pub fn validate_text(text: &str) -> Vec<Diagnostic> {
    match config::parse(text) {
        Err(d) => d,
        Ok(cfg) => config::validate(&cfg).0,
    }
}

/// Runs the config at `path`. Fails only on invalid configs and I/O
/// errors; failures inside an analysis are recorded in the manifest.
pub fn run(path: &Path, opts: &RunOptions) -> Result<Manifest> {
    let (text, mut cfg) = load_config(path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = Some(seed);
    }
    if let Some(n) = opts.grid_n {
        cfg.grid.n = n;
    }
    let body = |cfg: ExperimentConfig| run_config(cfg, &text, path, &opts.out);
    match opts.threads {
        None => body(cfg),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .context("building thread pool")?
            .install(|| body(cfg)),
    }
}

fn run_config(cfg: ExperimentConfig, text: &str, path: &Path, out: &Path) -> Result<Manifest> {
    let (diagnostics, resolved) = config::validate(&cfg);
    let resolved = match resolved {
        Some(r) if diagnostics.is_empty() => r,
        _ => return Err(ConfigError(diagnostics).into()),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let started_at_unix = unix_now();
    let mut ctx = Context::new(&cfg, &resolved, out);
    let mut analyses = Vec::new();
    for &analysis in &cfg.analyses {
        let clock = Instant::now();
        let outcome = ctx.run_analysis(analysis);
        let wall_time_s = clock.elapsed().as_secs_f64();
        let (status, doc) = match outcome {
            Ok(result) => (
                Status::Completed,
                json!({ "analysis": analysis.name(), "status": Status::Completed, "result": result }),
            ),
            Err(e) => (
                Status::Failed,
                json!({ "analysis": analysis.name(), "status": Status::Failed, "error": format!("{e:#}") }),
            ),
        };
        let report = format!("{}.json", analysis.name());
        write_json(&out.join(&report), &doc)?;
        analyses.push(AnalysisEntry {
            analysis: analysis.name().to_string(),
            status,
            report,
            wall_time_s,
        });
    }
    let manifest = Manifest {
        tool: "cocycle".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: cocycle_core::VERSION.into(),
        config_file: path.display().to_string(),
        config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        seed: cfg.seed,
        grid_n: cfg.grid.n,
        threads: rayon::current_num_threads(),
        config: cfg.clone(),
        analyses,
        started_at_unix,
        finished_at_unix: unix_now(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Shared, lazily built state. Grid-dependent quantities are memoized for
/// the configured grid and for the refined grid of twice the resolution.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    res: &'a Resolved,
    out: &'a Path,
    reduced: Option<Rc<(MatrixCocycle, f64)>>,
    skeleton: [Option<Rc<TransferSkeleton>>; 2],
    lambda1: [Option<f64>; 2],
    sigma2: [Option<f64>; 2],
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig, res: &'a Resolved, out: &'a Path) -> Self {
        Self {
            cfg,
            res,
            out,
            reduced: None,
            skeleton: [None, None],
            lambda1: [None, None],
            sigma2: [None, None],
        }
    }

    fn run_analysis(&mut self, analysis: Analysis) -> Result<Value> {
        match analysis {
            Analysis::Spectrum => self.spectrum(),
            Analysis::Typicality => self.typicality(),
            Analysis::Lyapunov => self.lyapunov(),
            Analysis::Variance => self.variance(),
            Analysis::Clt => self.clt(),
            Analysis::Ldp => self.ldp(),
            Analysis::Analyticity => self.analyticity(),
            Analysis::Perron => self.perron(),
        }
    }

    fn seed(&self, label: &str) -> Result<u64> {
        let seed = self.cfg.seed.ok_or_else(|| anyhow!("seed is required"))?;
        Ok(derive_seed(seed, label))
    }

    fn spectral_options(&self) -> SpectralOptions {
        SpectralOptions {
            tol: self.cfg.numerics.tol,
            max_iter: self.cfg.numerics.max_iter,
            subleading: false,
        }
    }

    fn model(&self) -> Result<&'a GibbsModel> {
        self.res.model.as_ref().ok_or_else(|| anyhow!("potential is required"))
    }

    fn start_vector(&self, alternate: bool) -> Result<Option<Vec<f64>>> {
        let d = self.original()?.dim();
        let v = if alternate {
            self.cfg.numerics.alternate_vector.clone()
        } else {
            Some(self.cfg.numerics.start_vector.clone().unwrap_or_else(|| {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            }))
        };
        Ok(v)
    }

    fn original(&self) -> Result<&'a MatrixCocycle> {
        self.res.cocycle.as_ref().ok_or_else(|| anyhow!("cocycle is required"))
    }

    /// The cocycle as a function of the future, with the holonomy tail bound
    /// of the reduction (zero for one-sided input).
    fn reduced(&mut self) -> Result<Rc<(MatrixCocycle, f64)>> {
        if let Some(r) = &self.reduced {
            return Ok(r.clone());
        }
        let sys = self.res.system.as_ref().ok_or_else(|| anyhow!("system is required"))?;
        let r = two_sided_to_one_sided(sys, self.original()?, AnchorRule::LexFirst, REDUCTION_TOL)?;
        let r = Rc::new((r.cocycle, r.tail_bound));
        self.reduced = Some(r.clone());
        Ok(r)
    }

    fn grid_n(&self, level: usize) -> usize {
        self.cfg.grid.n << level
    }

    fn grid(&mut self, level: usize) -> Result<ProjectiveGrid> {
        let d = self.reduced()?.0.dim();
        Ok(build_grid(d, self.grid_n(level))?)
    }

    fn skeleton_at(&mut self, level: usize) -> Result<Rc<TransferSkeleton>> {
        if let Some(s) = &self.skeleton[level] {
            return Ok(s.clone());
        }
        let reduced = self.reduced()?;
        let grid = self.grid(level)?;
        let max = self.cfg.grid.max_covering_radius.unwrap_or(f64::INFINITY);
        let s = Rc::new(TransferSkeleton::with_max_radius(self.model()?, &reduced.0, &grid, max)?);
        self.skeleton[level] = Some(s.clone());
        Ok(s)
    }

    fn skeleton(&mut self) -> Result<Rc<TransferSkeleton>> {
        self.skeleton_at(0)
    }

    fn lambda1_at(&mut self, level: usize) -> Result<f64> {
        if let Some(v) = self.lambda1[level] {
            return Ok(v);
        }
        let sk = self.skeleton_at(level)?;
        let v = lyapunov_spectral(&sk, self.cfg.numerics.delta, &self.spectral_options())?;
        self.lambda1[level] = Some(v);
        Ok(v)
    }

    fn sigma2_at(&mut self, level: usize) -> Result<f64> {
        if let Some(v) = self.sigma2[level] {
            return Ok(v);
        }
        let sk = self.skeleton_at(level)?;
        let v = variance_spectral(&sk, self.cfg.numerics.delta, &self.spectral_options())?;
        self.sigma2[level] = Some(v);
        Ok(v)
    }

    /// Drift of a grid-dependent quantity between resolutions `N` and `2N`,
    /// or `None` when refinement is off. One-dimensional grids are exact.
    fn grid_budget(&mut self, f: fn(&mut Self, usize) -> Result<f64>) -> Result<Option<f64>> {
        if !self.cfg.grid.refine {
            return Ok(None);
        }
        if self.reduced()?.0.dim() == 1 {
            return Ok(Some(0.0));
        }
        let coarse = f(self, 0)?;
        let fine = f(self, 1)?;
        Ok(Some((coarse - fine).abs()))
    }

    fn grid_info(&self, sk: &TransferSkeleton) -> Value {
        let g = sk.grid();
        json!({
            "dim": g.dim(),
            "n": g.resolution(),
            "points": g.len(),
            "covering_radius": g.covering_radius(),
            "word_states": sk.sampler().n_states(),
            "states": sk.n_states(),
            "period": sk.period(),
        })
    }

    fn spectrum(&mut self) -> Result<Value> {
        let sk = self.skeleton()?;
        let op = sk.operator(0.0);
        let sr = spectral_radius(&op, &self.spectral_options())?;
        let block = block_structure_check(&op);
        let peripheral = peripheral_spectrum(&op, sk.period(), &self.cfg.numerics.peripheral)?;
        if self.cfg.grid.export_operator {
            let path = self.out.join("operator.coo");
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            op.matrix.write_coo(BufWriter::new(f))?;
        }
        let contraction = match &self.cfg.contraction {
            None => Value::Null,
            Some(c) => {
                let mut rows = Vec::new();
                let mut log_w = Vec::new();
                // One stream for all lengths: the path of length n + 1 extends the path of length n.
                let seed = self.seed("contraction")?;
                for &n in &c.lengths {
                    let e = lasota_yorke_estimate(sk.sampler(), c.alpha, n, c.samples, c.pairs, seed)?;
                    let l = e.w_hat.ln() / n as f64;
                    log_w.push(l);
                    rows.push(json!({
                        "n": n,
                        "w_hat": e.w_hat,
                        "log_w_over_n": l,
                        "tau_hat": e.tau_hat,
                        "samples": e.samples,
                        "line_pairs": e.line_pairs,
                    }));
                }
                // The slack is a relative error on w_hat, hence ln(1 + slack) / n on (1/n) log w_hat.
                let non_increasing = log_w
                    .windows(2)
                    .zip(c.lengths.windows(2))
                    .all(|(w, n)| w[1] <= w[0] + (1.0 + c.slack).ln() / n[1] as f64 + 1e-12);
                json!({
                    "alpha": c.alpha,
                    "slack": c.slack,
                    "estimates": rows,
                    "negative_for_some_n": log_w.iter().any(|&l| l < -1e-9),
                    "non_increasing": non_increasing,
                    "identically_zero": log_w.iter().all(|l| l.abs() <= 1e-9),
                })
            }
        };
        let normalization_error = (sr.rho - 1.0).abs();
        Ok(json!({
            "grid": self.grid_info(&sk),
            "rho_at_zero": sr.rho,
            "normalization_error": normalization_error,
            "normalized": normalization_error <= NORMALIZATION_TOL,
            "power_iterations": sr.iterations,
            "residual": sr.residual,
            "block_structure": block,
            "peripheral": peripheral,
            "contraction": contraction,
        }))
    }

    fn typicality(&mut self) -> Result<Value> {
        let sys = self.res.system.as_ref().ok_or_else(|| anyhow!("system is required"))?;
        let report = is_one_typical(sys, self.original()?, &self.cfg.typicality)?;
        Ok(json!({
            "options": self.cfg.typicality,
            "report": report,
        }))
    }

    fn lyapunov(&mut self) -> Result<Value> {
        let n = &self.cfg.numerics;
        let sk = self.skeleton()?;
        let spectral = self.lambda1_at(0)?;
        let furstenberg = lyapunov_furstenberg(&sk, &self.spectral_options())?;
        let drift = self.grid_budget(Self::lambda1_at)?;
        let tail = self.reduced()?.1;
        let budget = drift.unwrap_or(0.0) + tail;
        let u = self.start_vector(false)?.expect("default start vector");
        let mc = lyapunov_mc(sk.sampler(), n.mc_n, n.mc_trials, &u, self.seed("lyapunov")?)?;
        let alternate = match self.start_vector(true)? {
            None => None,
            Some(v) => Some(lyapunov_mc(sk.sampler(), n.mc_n, n.mc_trials, &v, self.seed("lyapunov-alternate")?)?),
        };
        let mc_tol = 3.0 * mc.std_error + budget;
        Ok(json!({
            "grid": self.grid_info(&sk),
            "spectral": spectral,
            "furstenberg": furstenberg,
            "monte_carlo": mc,
            "monte_carlo_alternate": alternate,
            "grid_drift": drift,
            "reduction_tail_bound": tail,
            "budget": budget,
            "checks": {
                "spectral_vs_furstenberg": {
                    "difference": (spectral - furstenberg).abs(),
                    "tolerance": 1e-6 + budget,
                    "passed": (spectral - furstenberg).abs() <= 1e-6 + budget,
                },
                "spectral_vs_monte_carlo": {
                    "difference": (spectral - mc.estimate).abs(),
                    "tolerance": mc_tol,
                    "passed": (spectral - mc.estimate).abs() <= mc_tol,
                },
                "direction_independence": alternate.map(|a| {
                    let tol = 3.0 * (a.std_error.powi(2) + mc.std_error.powi(2)).sqrt();
                    json!({
                        "difference": (a.estimate - mc.estimate).abs(),
                        "tolerance": tol,
                        "passed": (a.estimate - mc.estimate).abs() <= tol,
                    })
                }),
            },
        }))
    }

    fn variance(&mut self) -> Result<Value> {
        let n = &self.cfg.numerics;
        let sk = self.skeleton()?;
        let lambda1 = self.lambda1_at(0)?;
        let spectral = self.sigma2_at(0)?;
        let drift = self.grid_budget(Self::sigma2_at)?;
        let u = self.start_vector(false)?.expect("default start vector");
        let mc = variance_mc(sk.sampler(), n.variance_n, n.variance_trials, &u, lambda1, self.seed("variance")?)?;
        let tol = (0.05 * spectral).max(3.0 * mc.std_error) + drift.unwrap_or(0.0);
        Ok(json!({
            "grid": self.grid_info(&sk),
            "lambda1": lambda1,
            "spectral": spectral,
            "monte_carlo": mc,
            "grid_drift": drift,
            "checks": {
                "spectral_vs_monte_carlo": {
                    "difference": (spectral - mc.estimate).abs(),
                    "tolerance": tol,
                    "passed": (spectral - mc.estimate).abs() <= tol,
                },
            },
        }))
    }

    fn clt(&mut self) -> Result<Value> {
        let n = &self.cfg.numerics;
        let sk = self.skeleton()?;
        let lambda1 = self.lambda1_at(0)?;
        let sigma2 = self.sigma2_at(0)?.max(0.0);
        let u = self.start_vector(false)?.expect("default start vector");
        let result = clt_test(sk.sampler(), n.clt_n, n.clt_trials, &u, lambda1, sigma2, self.seed("clt")?)?;
        let csv = if n.clt_csv {
            let path = self.out.join("clt_statistics.csv");
            let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            writeln!(w, "trial,statistic")?;
            for (i, s) in result.statistics.iter().enumerate() {
                writeln!(w, "{i},{s}")?;
            }
            w.flush()?;
            Some("clt_statistics.csv")
        } else {
            None
        };
        let passed = if result.degenerate {
            result.max_abs_statistic <= 1e-6 * (n.clt_n as f64).sqrt()
        } else {
            result.ks_statistic <= n.clt_ks_max
        };
        Ok(json!({
            "grid": self.grid_info(&sk),
            "lambda1": lambda1,
            "result": result,
            "ks_max": n.clt_ks_max,
            "passed": passed,
            "statistics_file": csv,
        }))
    }

    fn ldp(&mut self) -> Result<Value> {
        let n = &self.cfg.numerics;
        let opts = self.spectral_options();
        let sk = self.skeleton()?;
        let lambda1 = self.lambda1_at(0)?;
        let rate = ldp_rate(&sk, lambda1, n.eta, n.ldp_nodes, &opts)?;
        let (t_up, r_up) = legendre_at(&sk, lambda1, n.ldp_eps, rate.eta, &opts)?;
        let (t_down, r_down) = legendre_at(&sk, lambda1, -n.ldp_eps, rate.eta, &opts)?;
        let target = r_up.min(r_down);
        let sampling = match n.ldp_sampling {
            TailSampling::Tilted if t_up > 1e-9 && t_down < -1e-9 => TailSampling::Tilted,
            _ => TailSampling::Naive,
        };
        let u = self.start_vector(false)?.expect("default start vector");
        let tails = ldp_empirical(
            &sk,
            &n.ldp_lengths,
            n.ldp_eps,
            lambda1,
            n.ldp_trials,
            &u,
            sampling,
            [t_up, t_down],
            self.seed("ldp")?,
            &opts,
        )?;
        let rates: Vec<f64> = tails.iter().filter(|t| t.vector.usable).filter_map(|t| t.vector.rate).collect();
        let all_usable = rates.len() == tails.len();
        let trending = all_usable && rates_trend_toward(&rates, target, n.ldp_relative_tolerance);
        let relative_error = match (all_usable, rates.last()) {
            (true, Some(r)) if target > 0.0 => Some((r - target).abs() / target),
            _ => None,
        };
        let norm_rates: Vec<Option<f64>> =
            tails.iter().map(|t| if t.norm.usable { t.norm.rate } else { None }).collect();
        let norm_positive = norm_rates.iter().all(|r| matches!(r, Some(r) if *r > 0.0));
        Ok(json!({
            "grid": self.grid_info(&sk),
            "lambda1": lambda1,
            "log_mgf": rate,
            "eps": n.ldp_eps,
            "cramer": {
                "upper": { "tilt": t_up, "rate": r_up },
                "lower": { "tilt": t_down, "rate": r_down },
                "two_sided": target,
            },
            "eps_within_domain": n.ldp_eps < rate.domain_end,
            "sampling": sampling,
            "tails": tails,
            "empirical_rates": rates,
            "norm_rates": norm_rates,
            "checks": {
                "trending": trending,
                "relative_error_at_longest": relative_error,
                "within_tolerance": relative_error.is_some_and(|e| e <= n.ldp_relative_tolerance),
                "tolerance": n.ldp_relative_tolerance,
                "norm_tail_positive_rate": norm_positive,
            },
        }))
    }

    fn analyticity(&mut self) -> Result<Value> {
        let a = self.cfg.analyticity.as_ref().ok_or_else(|| anyhow!("analyticity section is required"))?;
        let sys = self.res.system.as_ref().ok_or_else(|| anyhow!("system is required"))?;
        let base = self.model()?.potential();
        let pairs = a
            .direction
            .iter()
            .map(|(k, v)| Ok((Word::parse(k)?, *v)))
            .collect::<Result<Vec<_>>>()?;
        let direction = LocallyConstantPotential::from_pairs(sys, a.memory, &pairs)?;
        let family = a
            .t
            .iter()
            .map(|&t| Ok((t, GibbsModel::new(sys, &base.add_scaled(sys, &direction, t)?)?)))
            .collect::<Result<Vec<_>>>()?;
        let reduced = self.reduced()?;
        let grid = self.grid(0)?;
        let curve = exponent_curve(&family, &reduced.0, &grid, self.cfg.numerics.delta, &self.spectral_options())?;
        Ok(json!({
            "grid_n": self.grid_n(0),
            "curve": curve,
        }))
    }

    fn perron(&mut self) -> Result<Value> {
        let p = &self.cfg.perron;
        let mut cases = Vec::new();
        if p.include_potential {
            let sys = self.res.system.as_ref().ok_or_else(|| anyhow!("system is required"))?;
            let (m, _) = ruelle_matrix(self.model()?.potential(), sys)?;
            cases.push(("potential".to_string(), m.to_dense()));
        }
        for (i, rows) in p.matrices.iter().enumerate() {
            let n = rows.len();
            cases.push((format!("matrices[{i}]"), Matrix::from_fn(n, n, |r, c| rows[r][c])));
        }
        if p.random_instances > 0 {
            let mut rng = task_rng(self.seed("perron")?, 0);
            let hi = p.max_size.max(2);
            for i in 0..p.random_instances {
                let q = rng.random_range(2..=hi);
                cases.push((format!("random[{i}]"), random_irreducible(q, &mut rng)));
            }
        }
        let mut reports = Vec::new();
        let mut all_passed = true;
        for (k, (label, m)) in cases.iter().enumerate() {
            let report = match perron_case(m, p.powers, derive_seed(0x7065_7272, &format!("case-{k}"))) {
                Ok((passed, mut v)) => {
                    all_passed &= passed;
                    v["label"] = json!(label);
                    v
                }
                Err(e) => {
                    all_passed = false;
                    json!({ "label": label, "error": format!("{e:#}") })
                }
            };
            reports.push(report);
        }
        Ok(json!({
            "powers": p.powers,
            "rotation_tol": ROTATION_TOL,
            "cases": reports,
            "passed": all_passed,
        }))
    }
}

/// Normal form, rotation symmetry and the decomposition of the matrix, or
/// of the diagonal block of `T^h` on the first class when `h > 1`.
fn perron_case(m: &Matrix, powers: usize, seed: u64) -> Result<(bool, Value)> {
    let form = cyclic_normal_form(m)?;
    let rotation = rotation_symmetry_check(m, form.period, ROTATION_TOL);
    let (target_kind, target) = if form.period == 1 {
        ("matrix", m.clone())
    } else {
        let product = form.blocks.iter().skip(1).fold(form.blocks[0].clone(), |acc, b| acc * b);
        ("diagonal_block_of_power", product)
    };
    let pf = pf_decomposition(&target, powers)?;
    let ratios = convergence_ratios(&target, &pf, powers, 8, seed);
    let root_below_one = pf.root_norms.last().is_some_and(|&r| r < 1.0);
    let max_ratio = ratios.iter().copied().fold(0.0f64, f64::max);
    let passed = rotation.passed && form.off_pattern_nonzeros == 0 && root_below_one;
    Ok((
        passed,
        json!({
            "size": m.nrows(),
            "period": form.period,
            "class_sizes": form.class_sizes,
            "permutation": form.permutation,
            "off_pattern_nonzeros": form.off_pattern_nonzeros,
            "diagonal_blocks_primitive": form.diagonal_blocks_primitive,
            "rotation": rotation,
            "decomposition": {
                "target": target_kind,
                "rho": pf.rho,
                "gamma_hat": pf.gamma_hat,
                "s_norms": pf.s_norms,
                "root_norms": pf.root_norms,
                "reconstruction_residual": pf.reconstruction_residual,
                "annihilation_residual": pf.annihilation_residual,
                "root_norm_below_one": root_below_one,
            },
            "convergence_ratios": ratios,
            "max_convergence_ratio": max_ratio,
            "passed": passed,
        }),
    ))
}
