//! Experiment configuration: TOML schema, defaults and validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use cocycle_core::gibbs::{GibbsModel, LocallyConstantPotential};
use cocycle_core::cocycle::MatrixCocycle;
use cocycle_core::linalg::Matrix;
use cocycle_core::limits::TailSampling;
use cocycle_core::sft::{AdjacencyMatrix, SymbolicSystem, Word, WordIndex};
use cocycle_core::transfer::PeripheralOptions;
use cocycle_core::typicality::TypicalityOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Spectrum,
    Typicality,
    Lyapunov,
    Variance,
    Clt,
    Ldp,
    Analyticity,
    Perron,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Spectrum => "spectrum",
            Analysis::Typicality => "typicality",
            Analysis::Lyapunov => "lyapunov",
            Analysis::Variance => "variance",
            Analysis::Clt => "clt",
            Analysis::Ldp => "ldp",
            Analysis::Analyticity => "analyticity",
            Analysis::Perron => "perron",
        }
    }

    pub fn needs_cocycle(self) -> bool {
        !matches!(self, Analysis::Perron)
    }

    pub fn samples(self) -> bool {
        matches!(self, Analysis::Lyapunov | Analysis::Variance | Analysis::Clt | Analysis::Ldp)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: Option<u64>,
    pub analyses: Vec<Analysis>,
    pub system: Option<SystemSection>,
    pub potential: Option<PotentialSection>,
    pub cocycle: Option<CocycleSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub typicality: TypicalityOptions,
    #[serde(default)]
    pub contraction: Option<ContractionSection>,
    #[serde(default)]
    pub analyticity: Option<AnalyticitySection>,
    #[serde(default)]
    pub perron: PerronSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub adjacency: Vec<Vec<u8>>,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Bernoulli,
    Markov,
    Constant,
    Table,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: PotentialKind,
    /// Symbol weights for `bernoulli`.
    pub probabilities: Option<Vec<f64>>,
    /// Transition weights for `markov`.
    pub transitions: Option<Vec<Vec<f64>>>,
    /// Value for `constant`.
    pub value: Option<f64>,
    /// Word length of `table` keys.
    pub memory: Option<usize>,
    /// `word = value` for `table`.
    pub table: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleSection {
    pub dimension: usize,
    #[serde(default = "one")]
    pub memory: usize,
    /// Symbols before position 0 that the generator reads.
    #[serde(default)]
    pub past: usize,
    /// `window = [[row], [row], ...]` for every admissible window.
    pub generators: BTreeMap<String, Vec<Vec<f64>>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub max_covering_radius: Option<f64>,
    /// Write `operator.coo` with the operator at `z = 0`.
    pub export_operator: bool,
    /// Also solve on the grid of size `2n` to measure discretization drift.
    pub refine: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: 128,
            max_covering_radius: None,
            export_operator: false,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub tol: f64,
    pub max_iter: usize,
    pub delta: f64,
    pub eta: f64,
    pub ldp_nodes: usize,
    /// Start vector for sampled statistics; the first basis vector if absent.
    pub start_vector: Option<Vec<f64>>,
    /// Second start vector for the direction-independence check.
    pub alternate_vector: Option<Vec<f64>>,
    pub mc_n: usize,
    pub mc_trials: usize,
    pub variance_n: usize,
    pub variance_trials: usize,
    pub clt_n: usize,
    pub clt_trials: usize,
    pub clt_csv: bool,
    /// Largest Kolmogorov-Smirnov distance the CLT report accepts.
    pub clt_ks_max: f64,
    pub ldp_eps: f64,
    pub ldp_lengths: Vec<usize>,
    pub ldp_trials: usize,
    pub ldp_sampling: TailSampling,
    /// Relative tolerance of the empirical rate at the longest path, and
    /// slack of the trend check.
    pub ldp_relative_tolerance: f64,
    pub peripheral: PeripheralOptions,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200_000,
            delta: 1e-3,
            eta: 0.5,
            ldp_nodes: 11,
            start_vector: None,
            alternate_vector: None,
            mc_n: 2000,
            mc_trials: 2000,
            variance_n: 2000,
            variance_trials: 2000,
            clt_n: 2000,
            clt_trials: 5000,
            clt_csv: true,
            clt_ks_max: 0.03,
            ldp_eps: 0.1,
            ldp_lengths: vec![500, 1000, 2000, 5000],
            ldp_trials: 2000,
            ldp_sampling: TailSampling::Tilted,
            ldp_relative_tolerance: 0.2,
            peripheral: PeripheralOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractionSection {
    pub alpha: f64,
    pub lengths: Vec<usize>,
    pub samples: usize,
    pub pairs: usize,
    /// Relative sampling error allowed on `w_hat` when checking that
    /// `(1/n) log w_hat` does not increase.
    pub slack: f64,
}

impl Default for ContractionSection {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            lengths: (1..=20).collect(),
            samples: 200,
            pairs: 16,
            slack: 0.2,
        }
    }
}

/// The family `psi + t * direction` of potentials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticitySection {
    pub memory: usize,
    pub direction: BTreeMap<String, f64>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerronSection {
    /// Also analyse the transfer matrix of the potential.
    pub include_potential: bool,
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub random_instances: usize,
    pub max_size: usize,
    pub powers: usize,
}

impl Default for PerronSection {
    fn default() -> Self {
        Self {
            include_potential: true,
            matrices: Vec::new(),
            random_instances: 0,
            max_size: 8,
            powers: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn diag(field: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        field: field.into(),
        message: message.into(),
    }
}

/// Parses TOML text. Syntax and schema errors come back as a single
/// diagnostic carrying the parser's line and column.
pub fn parse(text: &str) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    toml::from_str(text).map_err(|e| {
        let field = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "config".to_string(),
        };
        vec![diag(field, e.message().to_string())]
    })
}

/// Everything built from a valid configuration.
pub struct Resolved {
    pub system: Option<SymbolicSystem>,
    pub model: Option<GibbsModel>,
    pub cocycle: Option<MatrixCocycle>,
}

fn parse_word(s: &str) -> Option<Vec<usize>> {
    Word::parse(s).ok().map(Word::into_inner)
}

/// Full validation. Returns the built objects when there are no
/// diagnostics.
pub fn validate(cfg: &ExperimentConfig) -> (Vec<Diagnostic>, Option<Resolved>) {
    let mut out = Vec::new();
    if cfg.analyses.is_empty() {
        out.push(diag("analyses", "no analyses requested"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for a in &cfg.analyses {
        if !seen.insert(*a) {
            out.push(diag("analyses", format!("{} is listed twice", a.name())));
        }
    }
    let needs_cocycle = cfg.analyses.iter().any(|a| a.needs_cocycle());
    let needs_potential = needs_cocycle || (cfg.analyses.contains(&Analysis::Perron) && cfg.perron.include_potential);
    let sampled = cfg.analyses.iter().any(|a| a.samples())
        || (cfg.analyses.contains(&Analysis::Spectrum) && cfg.contraction.is_some());
    if sampled && cfg.seed.is_none() {
        out.push(diag("seed", "required by the sampled analyses"));
    }
    if cfg.analyses.contains(&Analysis::Perron) && cfg.perron.random_instances > 0 && cfg.seed.is_none() {
        out.push(diag("seed", "required for random perron instances"));
    }

    let system = match &cfg.system {
        None => {
            if needs_potential {
                out.push(diag("system", "missing section"));
            }
            None
        }
        Some(s) => validate_system(s, &mut out),
    };
    let model = match (&cfg.potential, &system) {
        (None, _) => {
            if needs_potential {
                out.push(diag("potential", "missing section"));
            }
            None
        }
        (Some(p), Some(sys)) => validate_potential(p, sys, &mut out),
        (Some(_), None) => None,
    };
    let cocycle = match (&cfg.cocycle, &system) {
        (None, _) => {
            if needs_cocycle {
                let which: Vec<&str> = cfg.analyses.iter().filter(|a| a.needs_cocycle()).map(|a| a.name()).collect();
                out.push(diag("cocycle", format!("missing section, required by {}", which.join(", "))));
            }
            None
        }
        (Some(c), Some(sys)) => validate_cocycle(c, sys, &mut out),
        (Some(_), None) => None,
    };
    validate_numerics(cfg, cocycle.as_ref().map(|c| c.dim()), &mut out);
    if cfg.analyses.contains(&Analysis::Analyticity) {
        match (&cfg.analyticity, &system) {
            (None, _) => out.push(diag("analyticity", "missing section, required by analyticity")),
            (Some(a), Some(sys)) => {
                if a.t.len() < 3 {
                    out.push(diag("analyticity.t", "need at least three parameter values"));
                }
                let pairs: Vec<(String, f64)> = a.direction.iter().map(|(k, v)| (k.clone(), *v)).collect();
                table_potential(sys, a.memory, &pairs, "analyticity.direction", &mut out);
            }
            _ => {}
        }
    }
    if cfg.analyses.contains(&Analysis::Perron) {
        for (i, m) in cfg.perron.matrices.iter().enumerate() {
            let n = m.len();
            if n == 0 || m.iter().any(|r| r.len() != n) {
                out.push(diag(format!("perron.matrices[{i}]"), "matrix is not square"));
            } else if m.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                out.push(diag(format!("perron.matrices[{i}]"), "entries must be finite and nonnegative"));
            }
        }
        if cfg.perron.max_size < 1 {
            out.push(diag("perron.max_size", "must be positive"));
        }
    }
    if out.is_empty() {
        (out, Some(Resolved { system, model, cocycle }))
    } else {
        (out, None)
    }
}

fn validate_system(s: &SystemSection, out: &mut Vec<Diagnostic>) -> Option<SymbolicSystem> {
    let q = s.adjacency.len();
    if q == 0 {
        out.push(diag("system.adjacency", "empty matrix"));
        return None;
    }
    for (i, row) in s.adjacency.iter().enumerate() {
        if row.len() != q {
            out.push(diag(
                format!("system.adjacency[{i}]"),
                format!("row has {} entries; the matrix must be square ({q} x {q})", row.len()),
            ));
            return None;
        }
        if row.iter().any(|&v| v > 1) {
            out.push(diag(format!("system.adjacency[{i}]"), "entries must be 0 or 1"));
            return None;
        }
    }
    if q > 10 {
        out.push(diag("system.adjacency", "at most 10 symbols are supported (words are digit strings)"));
        return None;
    }
    if !(s.theta > 0.0) {
        out.push(diag("system.theta", "must be positive"));
        return None;
    }
    let adjacency = match AdjacencyMatrix::from_rows(&s.adjacency) {
        Ok(a) => a,
        Err(e) => {
            out.push(diag("system.adjacency", e.to_string()));
            return None;
        }
    };
    match SymbolicSystem::new(adjacency, s.theta) {
        Ok(sys) => Some(sys),
        Err(e) => {
            out.push(diag("system.adjacency", e.to_string()));
            None
        }
    }
}

fn table_potential(
    sys: &SymbolicSystem,
    memory: usize,
    pairs: &[(String, f64)],
    field: &str,
    out: &mut Vec<Diagnostic>,
) -> Option<LocallyConstantPotential> {
    let index = match WordIndex::new(sys, memory) {
        Ok(i) => i,
        Err(e) => {
            out.push(diag(field, e.to_string()));
            return None;
        }
    };
    let before = out.len();
    let mut words = Vec::new();
    for (k, v) in pairs {
        match parse_word(k) {
            Some(w) if w.len() != memory => {
                out.push(diag(format!("{field}.{k}"), format!("word length {} differs from memory {memory}", w.len())))
            }
            Some(w) if index.get(&w).is_none() => out.push(diag(format!("{field}.{k}"), "word is not admissible")),
            Some(w) => {
                if !v.is_finite() {
                    out.push(diag(format!("{field}.{k}"), "value must be finite"));
                }
                words.push((Word::new(w), *v));
            }
            None => out.push(diag(format!("{field}.{k}"), "not a word of digit symbols")),
        }
    }
    for w in index.words() {
        if !words.iter().any(|(x, _)| x == w) {
            out.push(diag(field, format!("missing value for admissible word {w}")));
        }
    }
    if out.len() > before {
        return None;
    }
    match LocallyConstantPotential::from_pairs(sys, memory, &words) {
        Ok(p) => Some(p),
        Err(e) => {
            out.push(diag(field, e.to_string()));
            None
        }
    }
}

pub fn build_potential(
    p: &PotentialSection,
    sys: &SymbolicSystem,
    out: &mut Vec<Diagnostic>,
) -> Option<LocallyConstantPotential> {
    let q = sys.q();
    let built = match p.kind {
        PotentialKind::Bernoulli => match &p.probabilities {
            None => {
                out.push(diag("potential.probabilities", "required for kind = \"bernoulli\""));
                return None;
            }
            Some(v) if v.len() != q => {
                out.push(diag("potential.probabilities", format!("expected {q} entries, got {}", v.len())));
                return None;
            }
            Some(v) => LocallyConstantPotential::bernoulli(sys, v),
        },
        PotentialKind::Markov => match &p.transitions {
            None => {
                out.push(diag("potential.transitions", "required for kind = \"markov\""));
                return None;
            }
            Some(m) => LocallyConstantPotential::markov(sys, m),
        },
        PotentialKind::Constant => LocallyConstantPotential::constant(sys, p.value.unwrap_or(0.0)),
        PotentialKind::Table => {
            let (Some(memory), Some(table)) = (p.memory, &p.table) else {
                out.push(diag("potential", "kind = \"table\" needs memory and table"));
                return None;
            };
            let pairs: Vec<(String, f64)> = table.iter().map(|(k, v)| (k.clone(), *v)).collect();
            return table_potential(sys, memory, &pairs, "potential.table", out);
        }
    };
    match built {
        Ok(p) => Some(p),
        Err(e) => {
            out.push(diag("potential", e.to_string()));
            None
        }
    }
}

fn validate_potential(p: &PotentialSection, sys: &SymbolicSystem, out: &mut Vec<Diagnostic>) -> Option<GibbsModel> {
    let pot = build_potential(p, sys, out)?;
    match GibbsModel::new(sys, &pot) {
        Ok(m) => Some(m),
        Err(e) => {
            out.push(diag("potential", e.to_string()));
            None
        }
    }
}

fn validate_cocycle(c: &CocycleSection, sys: &SymbolicSystem, out: &mut Vec<Diagnostic>) -> Option<MatrixCocycle> {
    let before = out.len();
    if c.dimension == 0 {
        out.push(diag("cocycle.dimension", "must be positive"));
    }
    if c.memory == 0 {
        out.push(diag("cocycle.memory", "must be at least 1"));
    }
    if out.len() > before {
        return None;
    }
    let window = c.past + c.memory;
    let index = match WordIndex::new(sys, window) {
        Ok(i) => i,
        Err(e) => {
            out.push(diag("cocycle", e.to_string()));
            return None;
        }
    };
    let mut table: Vec<Option<Matrix>> = vec![None; index.len()];
    for (key, rows) in &c.generators {
        let field = format!("cocycle.generators.{key}");
        let Some(w) = parse_word(key) else {
            out.push(diag(field, "not a word of digit symbols"));
            continue;
        };
        if w.len() != window {
            out.push(diag(field, format!("word length {} differs from past + memory = {window}", w.len())));
            continue;
        }
        if w.iter().any(|&s| s >= sys.q()) || !sys.is_admissible(&w) {
            out.push(diag(field, format!("word {key} is not admissible")));
            continue;
        }
        if rows.len() != c.dimension || rows.iter().any(|r| r.len() != c.dimension) {
            out.push(diag(field, format!("expected a {0} x {0} matrix", c.dimension)));
            continue;
        }
        let m = Matrix::from_fn(c.dimension, c.dimension, |i, j| rows[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            out.push(diag(field, "entries must be finite"));
            continue;
        }
        if let Some(i) = index.get(&w) {
            table[i] = Some(m);
        }
    }
    for (i, slot) in table.iter().enumerate() {
        if slot.is_none() {
            out.push(diag("cocycle.generators", format!("missing generator for admissible word {}", index.word(i))));
        }
    }
    if out.len() > before {
        return None;
    }
    let result = MatrixCocycle::two_sided(sys, c.past, c.memory, |w| {
        table[index.get(w).expect("window is admissible")].clone().expect("checked above")
    });
    match result {
        Ok(a) => Some(a),
        Err(e) => {
            out.push(diag("cocycle.generators", e.to_string()));
            None
        }
    }
}

fn validate_numerics(cfg: &ExperimentConfig, dim: Option<usize>, out: &mut Vec<Diagnostic>) {
    let n = &cfg.numerics;
    if !(n.tol > 0.0) {
        out.push(diag("numerics.tol", "must be positive"));
    }
    if !(1e-4..=1e-2).contains(&n.delta) {
        out.push(diag("numerics.delta", "must lie in [1e-4, 1e-2]"));
    }
    if !(n.eta > 0.0) {
        out.push(diag("numerics.eta", "must be positive"));
    }
    if n.ldp_nodes < 5 || n.ldp_nodes % 2 == 0 {
        out.push(diag("numerics.ldp_nodes", "must be odd and at least 5"));
    }
    if !(n.clt_ks_max > 0.0) {
        out.push(diag("numerics.clt_ks_max", "must be positive"));
    }
    if !(n.ldp_relative_tolerance > 0.0) {
        out.push(diag("numerics.ldp_relative_tolerance", "must be positive"));
    }
    if !(n.ldp_eps > 0.0) {
        out.push(diag("numerics.ldp_eps", "must be positive"));
    }
    if cfg.grid.n == 0 {
        out.push(diag("grid.n", "must be positive"));
    }
    for (field, v) in [("numerics.start_vector", &n.start_vector), ("numerics.alternate_vector", &n.alternate_vector)] {
        if let (Some(v), Some(d)) = (v, dim) {
            if v.len() != d {
                out.push(diag(field, format!("expected {d} entries, got {}", v.len())));
            } else if v.iter().all(|x| *x == 0.0) || v.iter().any(|x| !x.is_finite()) {
                out.push(diag(field, "must be a finite nonzero vector"));
            }
        }
    }
    if cfg.analyses.contains(&Analysis::Ldp) && n.ldp_lengths.is_empty() {
        out.push(diag("numerics.ldp_lengths", "must not be empty"));
    }
    if let Some(c) = &cfg.contraction {
        if !(c.alpha > 0.0 && c.alpha <= 1.0) {
            out.push(diag("contraction.alpha", "must lie in (0, 1]"));
        }
        if c.lengths.is_empty() || c.lengths.contains(&0) {
            out.push(diag("contraction.lengths", "must be a non-empty list of positive lengths"));
        }
    }
}
