//! Witness search for 1-typicality: a periodic point whose return matrix
//! has simple eigenvalues of distinct moduli (pinching) and a homoclinic
//! loop that puts the eigendirections in general position (twisting).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{matrix_rows, stable_holonomy, unstable_holonomy, BiSequence, MatrixCocycle};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, min_singular_value, real_eigenvector, Matrix, Vector};
use crate::sft::{SymbolicSystem, Word};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TypicalityOptions {
    pub max_period: usize,
    pub max_connector: usize,
    pub depth: usize,
    pub holonomy_tol: f64,
    pub sv_floor: f64,
    pub gap_tol: f64,
    /// Upper bound on the number of (periodic word, connector) pairs tried.
    pub max_candidates: usize,
}

impl Default for TypicalityOptions {
    fn default() -> Self {
        Self {
            max_period: 6,
            max_connector: 8,
            depth: 60,
            holonomy_tol: 1e-9,
            sv_floor: 1e-8,
            gap_tol: 1e-6,
            max_candidates: 200_000,
        }
    }
}

/// Lyndon words of length at most `max_period` that are cyclically
/// admissible, shortest first and lexicographic within a length. Each
/// primitive periodic orbit appears exactly once.
pub fn find_periodic_words(sys: &SymbolicSystem, max_period: usize) -> Vec<Word> {
    let q = sys.q();
    let mut out = Vec::new();
    if max_period == 0 {
        return out;
    }
    // Duval's generation of Lyndon words in lexicographic order.
    let mut w: Vec<usize> = vec![0];
    loop {
        if sys.is_cyclically_admissible(&w) {
            out.push(Word::new(w.clone()));
        }
        let n = w.len();
        while w.len() < max_period {
            w.push(w[w.len() - n]);
        }
        while let Some(&last) = w.last() {
            if last + 1 == q {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.symbols().cmp(b.symbols())));
    out
}

/// `A^n(p)` for the periodic point `p = (block)^infinity`, `n = |block|`.
pub fn periodic_matrix(a: &MatrixCocycle, block: &[usize]) -> Result<Matrix> {
    let seq = BiSequence::periodic(block);
    let w = seq.window(-(a.past() as i64), block.len() + a.window() - 1)?;
    a.product_n(&w, block.len())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinchingResult {
    pub passed: bool,
    /// Smallest relative gap `(|l_i| - |l_{i+1}|) / |l_i|` between
    /// consecutive eigenvalue moduli.
    pub margin: f64,
    #[serde(with = "matrix_rows")]
    pub p_matrix: Matrix,
    #[serde(with = "complex_list")]
    pub eigenvalues: Vec<Complex64>,
    /// Unit eigenvectors in the order of `eigenvalues`; empty unless passed.
    pub eigenvectors: Vec<Vec<f64>>,
}

pub fn pinching_check(a: &MatrixCocycle, block: &[usize], gap_tol: f64) -> Result<PinchingResult> {
    if block.is_empty() {
        return Err(Error::InvalidArgument("periodic word is empty".into()));
    }
    let p = periodic_matrix(a, block)?;
    let scale = p.norm();
    let scaled = &p / scale;
    let ev = eigenvalues(&scaled);
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("eigenvalue solver returned non-finite values".into()));
    }
    let margin = ev
        .windows(2)
        .map(|w| (w[0].norm() - w[1].norm()) / w[0].norm())
        .fold(1.0f64, f64::min);
    let passed = margin >= gap_tol;
    let eigenvectors = if passed {
        ev.iter()
            .map(|z| real_eigenvector(&scaled, z.re).iter().copied().collect())
            .collect()
    } else {
        Vec::new()
    };
    Ok(PinchingResult {
        passed,
        margin,
        p_matrix: p,
        eigenvalues: ev.iter().map(|z| z * scale).collect(),
        eigenvectors,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolonomyLoop {
    #[serde(with = "matrix_rows")]
    pub matrix: Matrix,
    pub unstable_tail: f64,
    pub stable_tail: f64,
    pub depth: usize,
}

/// `H^s_{z,p} H^u_{p,z}` for `z = ... p p . connector p p ...`.
pub fn build_holonomy_loop(
    a: &MatrixCocycle,
    block: &[usize],
    connector: &[usize],
    depth: usize,
    tol: f64,
) -> Result<HolonomyLoop> {
    if connector.is_empty() || connector.len() % block.len() != 0 {
        return Err(Error::InvalidArgument(format!(
            "connector length {} is not a positive multiple of the period {}",
            connector.len(),
            block.len()
        )));
    }
    let p = BiSequence::periodic(block);
    let z = BiSequence::homoclinic(block, connector);
    let hu = unstable_holonomy(a, &p, &z, depth, tol)?;
    let hs = stable_holonomy(a, &z, &p, depth, tol)?;
    Ok(HolonomyLoop {
        matrix: &hs.matrix * &hu.matrix,
        unstable_tail: hu.tail_bound,
        stable_tail: hs.tail_bound,
        depth,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwistingResult {
    pub passed: bool,
    pub margin: f64,
    /// Index sets `(I, J)` (zero-based) attaining the margin.
    pub worst: (Vec<usize>, Vec<usize>),
}

/// Checks that `{loop v_i : i in I} U {v_j : j in J}` has smallest singular
/// value at least `sv_floor` for every `I, J` with `1 <= |I| + |J| <= d`.
pub fn twisting_check(holonomy_loop: &Matrix, eigenvectors: &[Vec<f64>], sv_floor: f64) -> Result<TwistingResult> {
    let d = eigenvectors.len();
    if holonomy_loop.nrows() != d || holonomy_loop.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: holonomy_loop.nrows(),
        });
    }
    let unit = |v: Vector| {
        let n = v.norm();
        v / n
    };
    let v: Vec<Vector> = eigenvectors.iter().map(|e| unit(Vector::from_column_slice(e))).collect();
    let moved: Vec<Vector> = v.iter().map(|e| unit(holonomy_loop * e)).collect();
    let mut margin = f64::INFINITY;
    let mut worst = (Vec::new(), Vec::new());
    for imask in 0u32..(1 << d) {
        for jmask in 0u32..(1 << d) {
            let k = (imask.count_ones() + jmask.count_ones()) as usize;
            if k == 0 || k > d {
                continue;
            }
            let mut cols = Vec::with_capacity(k);
            let set = |mask: u32| (0..d).filter(move |i| mask & (1 << i) != 0);
            cols.extend(set(imask).map(|i| moved[i].clone()));
            cols.extend(set(jmask).map(|j| v[j].clone()));
            let s = min_singular_value(&Matrix::from_columns(&cols));
            if s < margin {
                margin = s;
                worst = (set(imask).collect(), set(jmask).collect());
            }
        }
    }
    Ok(TwistingResult {
        passed: margin >= sv_floor,
        margin,
        worst,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypicalityWitness {
    pub periodic_word: String,
    /// The homoclinic point agrees with the periodic point on all negative
    /// coordinates, reads the connector on `0..|connector|`, then returns to
    /// the periodic orbit.
    pub past_connector: String,
    pub future_connector: String,
    pub pinching: PinchingResult,
    pub holonomy_loop: HolonomyLoop,
    pub twisting: TwistingResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Accept,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypicalityReport {
    pub verdict: Verdict,
    pub witness: Option<TypicalityWitness>,
    pub fiber_bunching_margin: f64,
    pub periodic_words_tried: usize,
    pub pinching_failures: usize,
    pub candidates_tried: usize,
    pub twisting_failures: usize,
    pub holonomy_failures: usize,
    /// Human-readable reasons, at most a few per failure kind.
    pub log: Vec<String>,
}

const LOG_PER_KIND: usize = 5;

/// Connectors `c` of length `len` with `p_last -> c_0`, `c_last -> p_0`
/// allowed, excluding powers of `block`, in lexicographic order.
fn connectors(sys: &SymbolicSystem, block: &[usize], len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    let adj = sys.adjacency();
    let first = block[0];
    let last = block[block.len() - 1];
    while let Some(w) = stack.pop() {
        if w.len() == len {
            if adj.allowed(w[len - 1], first) && !w.chunks(block.len()).all(|c| c == block) {
                out.push(w);
            }
            continue;
        }
        let prev = *w.last().unwrap_or(&last);
        let mut next: Vec<usize> = adj.successors(prev).collect();
        next.reverse();
        for s in next {
            let mut x = w.clone();
            x.push(s);
            stack.push(x);
        }
    }
    out
}

enum Outcome {
    Accept(TypicalityWitness),
    Twist(String),
    Holonomy(String),
}

/// Searches for a typicality witness within the budgets of `opts`. The
/// search never rejects: without a witness the verdict is inconclusive.
pub fn is_one_typical(sys: &SymbolicSystem, a: &MatrixCocycle, opts: &TypicalityOptions) -> Result<TypicalityReport> {
    let mut report = TypicalityReport {
        verdict: Verdict::Inconclusive,
        witness: None,
        fiber_bunching_margin: a.fiber_bunching_margin(sys.theta()),
        periodic_words_tried: 0,
        pinching_failures: 0,
        candidates_tried: 0,
        twisting_failures: 0,
        holonomy_failures: 0,
        log: Vec::new(),
    };
    if report.fiber_bunching_margin >= 1.0 {
        report.log.push(format!(
            "warning: cocycle is not fiber-bunched (margin {:.4})",
            report.fiber_bunching_margin
        ));
    }
    let mut logged = [0usize; 3];
    let mut note = |report: &mut TypicalityReport, kind: usize, msg: String| {
        if logged[kind] < LOG_PER_KIND {
            report.log.push(msg);
            logged[kind] += 1;
        }
    };
    for block in find_periodic_words(sys, opts.max_period) {
        report.periodic_words_tried += 1;
        let pinch = pinching_check(a, &block, opts.gap_tol)?;
        if !pinch.passed {
            report.pinching_failures += 1;
            note(
                &mut report,
                0,
                format!("pinching failed at {block}: relative modulus gap {:.3e}", pinch.margin),
            );
            continue;
        }
        let mut len = block.len();
        while len <= opts.max_connector {
            if report.candidates_tried >= opts.max_candidates {
                report.log.push(format!("candidate budget {} exhausted", opts.max_candidates));
                return Ok(report);
            }
            let mut cands = connectors(sys, &block, len);
            cands.truncate(opts.max_candidates - report.candidates_tried);
            let outcomes: Vec<Outcome> = cands
                .par_iter()
                .map(|c| evaluate(a, &block, c, &pinch, opts))
                .collect();
            for out in outcomes {
                report.candidates_tried += 1;
                match out {
                    Outcome::Accept(w) => {
                        report.verdict = Verdict::Accept;
                        report.witness = Some(w);
                        return Ok(report);
                    }
                    Outcome::Twist(msg) => {
                        report.twisting_failures += 1;
                        note(&mut report, 1, msg);
                    }
                    Outcome::Holonomy(msg) => {
                        report.holonomy_failures += 1;
                        note(&mut report, 2, msg);
                    }
                }
            }
            len += block.len();
        }
    }
    Ok(report)
}

fn evaluate(
    a: &MatrixCocycle,
    block: &Word,
    connector: &[usize],
    pinch: &PinchingResult,
    opts: &TypicalityOptions,
) -> Outcome {
    let cword = Word::new(connector.to_vec());
    let depth = opts.depth.max(connector.len() + a.window() + 1);
    let lp = match build_holonomy_loop(a, block, connector, depth, opts.holonomy_tol) {
        Ok(lp) => lp,
        Err(e) => return Outcome::Holonomy(format!("holonomy at {block} via {cword}: {e}")),
    };
    let twist = match twisting_check(&lp.matrix, &pinch.eigenvectors, opts.sv_floor) {
        Ok(t) => t,
        Err(e) => return Outcome::Holonomy(format!("twisting at {block} via {cword}: {e}")),
    };
    if !twist.passed {
        let (i, j) = &twist.worst;
        let kind = if i.iter().any(|x| j.contains(x)) && twist.margin < opts.sv_floor {
            "duplicated column"
        } else {
            "dependent columns"
        };
        return Outcome::Twist(format!(
            "twisting failed at {block} via {cword}: I={i:?} J={j:?} smallest singular value {:.3e} ({kind})",
            twist.margin
        ));
    }
    Outcome::Accept(TypicalityWitness {
        periodic_word: block.to_string(),
        past_connector: String::new(),
        future_connector: cword.to_string(),
        pinching: pinch.clone(),
        holonomy_loop: lp,
        twisting: twist,
    })
}

/// Serializes complex numbers as `[re, im]` pairs.
pub mod complex_list {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}
