//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::Value;
use statrs::distribution::{ContinuousCDF, Normal};

use cocycle_cli::config;
use cocycle_cli::{run, RunOptions};
use cocycle_core::cocycle::{diag, MatrixCocycle};
use cocycle_core::gibbs::GibbsModel;
use cocycle_core::limits::{lyapunov_spectral, variance_spectral};
use cocycle_core::linalg::Matrix;
use cocycle_core::perron::{
    convergence_ratios, cyclic_normal_form, pf_decomposition, random_irreducible, rotation_symmetry_check,
};
use cocycle_core::rng::task_rng;
use cocycle_core::sft::SymbolicSystem;
use cocycle_core::transfer::{build_grid, lasota_yorke_estimate, SpectralOptions, TransferSkeleton};
use cocycle_core::typicality::{is_one_typical, TypicalityOptions, Verdict};

const CONFIGS: [&str; 5] = ["scalar_oracle", "conformal_oracle", "typical_showcase", "period_two", "period_three"];

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// All shipped configs run once; reports are read back as JSON.
struct Runs {
    dirs: BTreeMap<&'static str, PathBuf>,
    _root: tempfile::TempDir,
}

impl Runs {
    fn new() -> Self {
        let root = tempfile::tempdir().unwrap();
        let mut dirs = BTreeMap::new();
        for name in CONFIGS {
            let out = root.path().join(name);
            let manifest = run(
                &config_path(name),
                &RunOptions {
                    out: out.clone(),
                    ..Default::default()
                },
            )
            .unwrap_or_else(|e| panic!("{name}: {e:#}"));
            assert!(manifest.all_completed(), "{name}: {:?}", manifest.analyses);
            dirs.insert(name, out);
        }
        Self { dirs, _root: root }
    }

    fn report(&self, config: &str, analysis: &str) -> Value {
        let text = fs::read_to_string(self.dirs[config].join(format!("{analysis}.json"))).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["status"], "completed", "{config}/{analysis}: {v}");
        v["result"].clone()
    }

    fn wall_time(&self, config: &str, analyses: &[&str]) -> f64 {
        let text = fs::read_to_string(self.dirs[config].join("manifest.json")).unwrap();
        let m: Value = serde_json::from_str(&text).unwrap();
        m["analyses"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|a| analyses.contains(&a["analysis"].as_str().unwrap()))
            .map(|a| a["wall_time_s"].as_f64().unwrap())
            .sum()
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

/// Largest eigenvalue of a nonnegative primitive matrix by plain power
/// iteration run to machine precision.
fn perron_root(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut x = vec![1.0; n];
    let mut rho = 0.0;
    for _ in 0..5000 {
        let y: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * x[j]).sum()).collect();
        let s: f64 = y.iter().sum();
        rho = s / x.iter().sum::<f64>();
        x = y.iter().map(|v| v / s).collect();
    }
    rho
}

fn five_point(g: impl Fn(f64) -> f64, h: f64) -> (f64, f64) {
    let (m2, m1, c, p1, p2) = (g(-2.0 * h), g(-h), g(0.0), g(h), g(2.0 * h));
    (
        (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h),
        (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h),
    )
}

/// Scalar oracle: pressure of `psi + z log|a|` for two-word functions is
/// the log of the Perron root of `B[ab, bc] = exp(psi(ab) + z log|a(ab)|)`.
fn scalar_oracle() -> Outcome {
    let text = fs::read_to_string(config_path("scalar_oracle")).unwrap();
    let cfg = config::parse(&text).unwrap();
    let (diags, resolved) = config::validate(&cfg);
    assert!(diags.is_empty(), "{diags:?}");
    let resolved = resolved.unwrap();
    let table = cfg.potential.as_ref().unwrap().table.clone().unwrap();
    let generators = &cfg.cocycle.as_ref().unwrap().generators;
    let words: Vec<&String> = table.keys().collect();
    let pressure = |z: f64| {
        let b: Vec<Vec<f64>> = words
            .iter()
            .map(|w1| {
                words
                    .iter()
                    .map(|w2| {
                        if w1.as_bytes()[1] == w2.as_bytes()[0] {
                            (table[*w1] + z * generators[*w1][0][0].abs().ln()).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        perron_root(&b).ln()
    };
    let (d1, d2) = five_point(pressure, 2e-3);

    let clock = Instant::now();
    let model = resolved.model.as_ref().unwrap();
    let cocycle = resolved.cocycle.as_ref().unwrap();
    let grid = build_grid(1, 1).unwrap();
    let sk = TransferSkeleton::new(model, cocycle, &grid).unwrap();
    let opts = SpectralOptions::default();
    let lambda1 = lyapunov_spectral(&sk, cfg.numerics.delta, &opts).unwrap();
    let sigma2 = variance_spectral(&sk, cfg.numerics.delta, &opts).unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    let (e1, e2) = ((lambda1 - d1).abs(), (sigma2 - d2).abs());
    outcome(
        e1 <= 1e-6 && e2 <= 1e-5 && elapsed < 5.0,
        format!("lambda1 {lambda1:.10} vs {d1:.10} (err {e1:.1e}), sigma2 {sigma2:.10} vs {d2:.10} (err {e2:.1e}), {elapsed:.2}s"),
    )
}

fn conformal_oracle(runs: &Runs) -> Outcome {
    let ln2 = 2f64.ln();
    let ly = runs.report("conformal_oracle", "lyapunov");
    let budget = f(&ly["budget"]);
    let spectral = f(&ly["spectral"]);
    let furst = f(&ly["furstenberg"]);
    let mc = f(&ly["monte_carlo"]["estimate"]);
    let se = f(&ly["monte_carlo"]["std_error"]);
    let grid_n = ly["grid"]["n"].as_u64().unwrap();
    let mc_n = ly["monte_carlo"]["n"].as_u64().unwrap();
    let mc_trials = ly["monte_carlo"]["trials"].as_u64().unwrap();
    let lambda_ok = grid_n == 256
        && spectral.abs() <= 1e-6 + budget
        && furst.abs() <= 1e-6 + budget
        && mc.abs() <= 3.0 * se
        && mc_n == 2000
        && mc_trials == 2000;

    let va = runs.report("conformal_oracle", "variance");
    let s_spec = f(&va["spectral"]);
    let s_mc = f(&va["monte_carlo"]["estimate"]);
    let target = ln2 * ln2;
    let sigma_ok = (s_spec - target).abs() <= 0.05 * target && (s_mc - target).abs() <= 0.05 * target;

    let ldp = runs.report("conformal_oracle", "ldp");
    let t = ldp["log_mgf"]["t_nodes"].as_array().unwrap();
    let l = ldp["log_mgf"]["log_mgf"].as_array().unwrap();
    let mgf_err = t
        .iter()
        .zip(l)
        .map(|(t, l)| (f(l) - ((2f64.powf(f(t)) + 2f64.powf(-f(t))) / 2.0).ln()).abs())
        .fold(0.0, f64::max);
    let mgf_ok = t.len() == 11 && mgf_err <= 1e-5 + budget;

    let elapsed = runs.wall_time("conformal_oracle", &["spectrum", "lyapunov", "variance"]);
    outcome(
        lambda_ok && sigma_ok && mgf_ok && elapsed < 60.0,
        format!(
            "lambda1 spectral {spectral:.1e} furstenberg {furst:.1e} mc {mc:.1e}+-{se:.1e}; \
             sigma2 {s_spec:.5}/{s_mc:.5} vs {target:.5}; Lambda max err {mgf_err:.1e} at {} nodes; {elapsed:.1}s",
            t.len()
        ),
    )
}

fn normalization(runs: &Runs) -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for name in CONFIGS {
        let rho = f(&runs.report(name, "spectrum")["rho_at_zero"]);
        worst = worst.max((rho - 1.0).abs());
        parts.push(format!("{name} {:.1e}", (rho - 1.0).abs()));
    }
    outcome(worst <= 1e-6, format!("|rho(0) - 1|: {}", parts.join(", ")))
}

/// Peripheral estimates are exactly the `h`-th roots of unity, one each.
fn peripheral_matches(report: &Value, h: usize) -> (bool, String) {
    let p = &report["peripheral"];
    let est: Vec<(f64, f64)> = p["peripheral"]
        .as_array()
        .unwrap()
        .iter()
        .map(|z| (f(&z[0]), f(&z[1])))
        .collect();
    let mut err = 0.0f64;
    let mut simple = est.len() == h;
    for k in 0..h {
        let a = 2.0 * std::f64::consts::PI * k as f64 / h as f64;
        let close: Vec<f64> = est
            .iter()
            .map(|(re, im)| ((re - a.cos()).powi(2) + (im - a.sin()).powi(2)).sqrt())
            .filter(|d| *d <= 1e-6)
            .collect();
        simple &= close.len() == 1;
        err = err.max(close.first().copied().unwrap_or(f64::INFINITY));
    }
    let gap = f(&p["gap"]);
    let sub = f(&p["subleading_modulus"]);
    let ok = simple && gap > 0.0 && sub <= 1.0 - gap + 1e-12;
    (ok, format!("h={h}: {} estimates, root err {err:.1e}, subleading {sub:.3}, gap {gap:.3}", est.len()))
}

fn peripheral(runs: &Runs) -> Outcome {
    let (ok2, d2) = peripheral_matches(&runs.report("period_two", "spectrum"), 2);
    let (ok3, d3) = peripheral_matches(&runs.report("period_three", "spectrum"), 3);
    let t2 = runs.wall_time("period_two", &["spectrum"]);
    let t3 = runs.wall_time("period_three", &["spectrum"]);
    outcome(ok2 && ok3 && t2 < 30.0 && t3 < 30.0, format!("{d2} ({t2:.1}s); {d3} ({t3:.1}s)"))
}

fn clt(runs: &Runs) -> Outcome {
    let show = runs.report("typical_showcase", "clt");
    let r = &show["result"];
    let ks_show = f(&r["ks_statistic"]);
    let sizes_ok = r["n"] == 2000 && r["trials"] == 5000;

    // Conformal: exact limit N(0, (log 2)^2), recomputed from the CSV dump.
    let csv = fs::read_to_string(runs.dirs["conformal_oracle"].join("clt_statistics.csv")).unwrap();
    let mut xs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    xs.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 2f64.ln()).unwrap();
    let m = xs.len() as f64;
    let ks_conf = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal.cdf(x);
            (c - i as f64 / m).max((i + 1) as f64 / m - c)
        })
        .fold(0.0, f64::max);
    let conf = runs.report("conformal_oracle", "clt");
    let conf_sizes = conf["result"]["n"] == 2000 && conf["result"]["trials"] == 5000 && xs.len() == 5000;
    let t1 = runs.wall_time("typical_showcase", &["clt"]);
    let t2 = runs.wall_time("conformal_oracle", &["clt"]);
    outcome(
        sizes_ok && conf_sizes && ks_show <= 0.03 && ks_conf <= 0.03 && t1 < 120.0 && t2 < 120.0,
        format!("KS showcase {ks_show:.4} ({t1:.1}s), conformal {ks_conf:.4} ({t2:.1}s)"),
    )
}

/// Legendre transform of `log cosh(t log 2)` at `eps`.
fn coin_rate(eps: f64) -> f64 {
    let x = eps / 2f64.ln();
    0.5 * (1.0 + x) * (1.0 + x).ln() + 0.5 * (1.0 - x) * (1.0 - x).ln()
}

fn ldp(runs: &Runs) -> Outcome {
    let r = runs.report("conformal_oracle", "ldp");
    let eps = f(&r["eps"]);
    let target = coin_rate(eps);
    let tails = r["tails"].as_array().unwrap();
    let lengths: Vec<u64> = tails.iter().map(|t| t["n"].as_u64().unwrap()).collect();
    let rates: Vec<Option<f64>> = tails.iter().map(|t| t["vector"]["rate"].as_f64()).collect();
    let norm_rates: Vec<Option<f64>> = tails.iter().map(|t| t["norm"]["rate"].as_f64()).collect();
    let all = rates.iter().all(Option::is_some) && tails.iter().all(|t| t["vector"]["usable"] == true);
    let rates: Vec<f64> = rates.into_iter().flatten().collect();
    let trending = all && rates.windows(2).all(|w| (w[1] - target).abs() <= (w[0] - target).abs());
    let last = rates.last().copied().unwrap_or(f64::NAN);
    let rel = (last - target).abs() / target;
    let norm_ok = norm_rates.iter().all(|r| matches!(r, Some(r) if *r > 0.0));
    let elapsed = runs.wall_time("conformal_oracle", &["ldp"]);
    outcome(
        eps == 0.1 && lengths == [500, 1000, 2000, 5000] && trending && rel <= 0.2 && norm_ok && elapsed < 300.0,
        format!(
            "rates {:?} -> Lambda*(0.1) = {target:.6}, rel err at n=5000 {rel:.3}, norm rates positive: {norm_ok}, {elapsed:.1}s",
            rates.iter().map(|r| format!("{r:.5}")).collect::<Vec<_>>()
        ),
    )
}

fn typicality(runs: &Runs) -> Outcome {
    let clock = Instant::now();
    let sys = SymbolicSystem::full_shift(2);
    let opts = TypicalityOptions::default();
    let d = is_one_typical(&sys, &MatrixCocycle::constant(&sys, diag(&[2.0, 0.5])).unwrap(), &opts).unwrap();
    let diag_ok = d.verdict == Verdict::Inconclusive && d.log.iter().any(|l| l.contains("duplicated column"));
    let id = is_one_typical(&sys, &MatrixCocycle::identity(&sys, 2).unwrap(), &opts).unwrap();
    let id_ok = id.verdict == Verdict::Inconclusive
        && id.pinching_failures > 0
        && id.pinching_failures == id.periodic_words_tried
        && id.log.iter().any(|l| l.contains("pinching"));
    let elapsed = clock.elapsed().as_secs_f64() + runs.wall_time("typical_showcase", &["typicality"]);
    let r = runs.report("typical_showcase", "typicality");
    let rep = &r["report"];
    let w = &rep["witness"];
    let show_ok = rep["verdict"] == "ACCEPT"
        && f(&w["pinching"]["margin"]) >= f(&r["options"]["gap_tol"])
        && f(&w["twisting"]["margin"]) >= f(&r["options"]["sv_floor"])
        && f(&rep["fiber_bunching_margin"]) > 0.0;
    outcome(
        diag_ok && id_ok && show_ok && elapsed < 30.0,
        format!(
            "diagonal {:?} (duplicated column logged: {diag_ok}), identity {:?} ({} pinching failures), showcase {} \
             (pinching {:.3}, twisting {:.3}); {elapsed:.2}s",
            d.verdict,
            id.verdict,
            id.pinching_failures,
            rep["verdict"],
            f(&w["pinching"]["margin"]),
            f(&w["twisting"]["margin"]),
        ),
    )
}

/// Period as the gcd of closed-walk lengths up to `q^2 + q`.
fn walk_gcd(m: &Matrix) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let q = m.nrows();
    let step: Vec<Vec<bool>> = (0..q).map(|i| (0..q).map(|j| m[(i, j)] > 0.0).collect()).collect();
    let mut reach = step.clone();
    let mut g = 0;
    for k in 1..=q * q + q {
        if (0..q).any(|i| reach[i][i]) {
            g = gcd(g, k);
        }
        reach = (0..q)
            .map(|i| (0..q).map(|j| (0..q).any(|l| reach[i][l] && step[l][j])).collect())
            .collect();
    }
    g
}

fn matrix_suite() -> Outcome {
    let clock = Instant::now();
    let mut rng = task_rng(0xacce, 8);
    let (mut period_ok, mut rotation_ok, mut primitive, mut decay_ok) = (0, 0, 0, 0);
    let mut worst_root = 0.0f64;
    let mut worst_rotation = 0.0f64;
    for _ in 0..50 {
        let q = rand::Rng::random_range(&mut rng, 2..=8);
        let m = random_irreducible(q, &mut rng);
        let form = cyclic_normal_form(&m).unwrap();
        period_ok += usize::from(form.period == walk_gcd(&m));
        let rot = rotation_symmetry_check(&m, form.period, 1e-8);
        worst_rotation = worst_rotation.max(rot.max_pairing_error);
        rotation_ok += usize::from(rot.passed);
        if form.period == 1 {
            primitive += 1;
            let pf = pf_decomposition(&m, 30).unwrap();
            let root = pf.root_norms[29];
            worst_root = worst_root.max(root);
            let ratios = convergence_ratios(&m, &pf, 30, 8, 1);
            decay_ok += usize::from(root < 1.0 && ratios.iter().all(|r| r.is_finite()));
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    outcome(
        period_ok == 50 && rotation_ok == 50 && decay_ok == primitive && primitive > 0 && elapsed < 20.0,
        format!(
            "period {period_ok}/50, rotation {rotation_ok}/50 (worst {worst_rotation:.1e}), \
             |S^30|^(1/30) < 1 for {decay_ok}/{primitive} primitive (worst {worst_root:.3}); {elapsed:.2}s"
        ),
    )
}

fn contraction(runs: &Runs) -> Outcome {
    let s = runs.report("typical_showcase", "spectrum");
    let c = &s["contraction"];
    let est = c["estimates"].as_array().unwrap();
    let ns: Vec<f64> = est.iter().map(|e| f(&e["n"])).collect();
    let l: Vec<f64> = est.iter().map(|e| f(&e["w_hat"]).ln() / f(&e["n"])).collect();
    let negative = ns.iter().zip(&l).any(|(n, l)| *n <= 20.0 && *l < 0.0);
    let non_increasing = l.windows(2).zip(ns.windows(2)).all(|(w, n)| w[1] <= w[0] + 1.2f64.ln() / n[1]);
    let show_ok = f(&c["alpha"]) == 0.1 && ns.last() == Some(&20.0) && negative && non_increasing;

    let sys = SymbolicSystem::full_shift(2);
    let model = GibbsModel::bernoulli(&sys, &[0.5, 0.5]).unwrap();
    let id = MatrixCocycle::identity(&sys, 2).unwrap();
    let grid = build_grid(2, 16).unwrap();
    let sk = TransferSkeleton::new(&model, &id, &grid).unwrap();
    let id_max = (1..=20)
        .map(|n| (lasota_yorke_estimate(sk.sampler(), 0.1, n, 50, 16, 5).unwrap().w_hat.ln() / n as f64).abs())
        .fold(0.0, f64::max);
    outcome(
        show_ok && id_max <= 1e-12,
        format!(
            "showcase (1/n) log w_hat from {:.4} to {:.4}, negative: {negative}, non-increasing: {non_increasing}; \
             identity max |(1/n) log w_hat| {id_max:.1e}",
            l[0],
            l[l.len() - 1]
        ),
    )
}

/// Every report file of a second run matches the first byte for byte;
/// in the manifest only timing fields may differ.
fn determinism(runs: &Runs) -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    let mut files = 0;
    for name in CONFIGS {
        let out = root.path().join(name);
        run(
            &config_path(name),
            &RunOptions {
                out: out.clone(),
                ..Default::default()
            },
        )
        .unwrap();
        for entry in fs::read_dir(&runs.dirs[name]).unwrap() {
            let path = entry.unwrap().path();
            let file = path.file_name().unwrap().to_owned();
            let a = fs::read(&path).unwrap();
            let b = fs::read(out.join(&file)).unwrap_or_default();
            files += 1;
            let same = if file == "manifest.json" {
                strip_timing(&a) == strip_timing(&b)
            } else {
                a == b
            };
            if !same {
                mismatches.push(format!("{name}/{}", file.to_string_lossy()));
            }
        }
    }
    outcome(
        mismatches.is_empty() && files > 0,
        format!("{files} files compared across {} configs, mismatches: {mismatches:?}", CONFIGS.len()),
    )
}

fn strip_timing(bytes: &[u8]) -> Value {
    let mut v: Value = serde_json::from_slice(bytes).unwrap_or(Value::Null);
    if let Some(o) = v.as_object_mut() {
        o.remove("started_at_unix");
        o.remove("finished_at_unix");
        if let Some(list) = o.get_mut("analyses").and_then(Value::as_array_mut) {
            for a in list {
                a.as_object_mut().unwrap().remove("wall_time_s");
            }
        }
    }
    v
}

#[test]
fn acceptance() {
    let runs = Runs::new();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("scalar oracle", Box::new(scalar_oracle)),
        ("conformal oracle", Box::new(|| conformal_oracle(&runs))),
        ("spectral radius normalization", Box::new(|| normalization(&runs))),
        ("peripheral spectrum", Box::new(|| peripheral(&runs))),
        ("central limit theorem", Box::new(|| clt(&runs))),
        ("large deviations", Box::new(|| ldp(&runs))),
        ("typicality checker", Box::new(|| typicality(&runs))),
        ("nonnegative matrix suite", Box::new(matrix_suite)),
        ("contraction estimates", Box::new(|| contraction(&runs))),
        ("determinism", Box::new(|| determinism(&runs))),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let line = format!("{} {:>2} {name}: {}\n", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
        // Written to the raw handle so the line shows without --nocapture.
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        if !o.passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
