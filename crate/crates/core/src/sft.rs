//! Subshifts of finite type given by a 0/1 transition matrix.
//!
//! Symbols are `0..q`. A word is admissible when every adjacent pair
//! `(s_i, s_{i+1})` is an allowed transition. Two-sided objects are never
//! stored; consumers work with finite past/future words.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of words produced by [`SymbolicSystem::enumerate_words`].
pub const DEFAULT_WORD_CAP: u64 = 10_000_000;

/// A square 0/1 matrix with no stranded symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    q: usize,
    entries: Vec<u8>,
}

impl AdjacencyMatrix {
    /// Builds the matrix from row lists, rejecting non-square input,
    /// entries other than 0/1, and all-zero rows or columns.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let q = rows.len();
        if q == 0 {
            return Err(Error::InvalidAdjacency("matrix is empty".into()));
        }
        let mut entries = Vec::with_capacity(q * q);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != q {
                return Err(Error::InvalidAdjacency(format!(
                    "row {i} has {} entries, expected {q}",
                    row.len()
                )));
            }
            for (j, &e) in row.iter().enumerate() {
                if e > 1 {
                    return Err(Error::InvalidAdjacency(format!(
                        "entry ({i},{j}) is {e}, expected 0 or 1"
                    )));
                }
                entries.push(e);
            }
        }
        let m = Self { q, entries };
        for i in 0..q {
            if (0..q).all(|j| !m.allowed(i, j)) {
                return Err(Error::InvalidAdjacency(format!("row {i} is all zero")));
            }
            if (0..q).all(|j| !m.allowed(j, i)) {
                return Err(Error::InvalidAdjacency(format!("column {i} is all zero")));
            }
        }
        Ok(m)
    }

    /// The full shift on `q` symbols.
    pub fn full(q: usize) -> Self {
        Self {
            q,
            entries: vec![1; q * q],
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.entries[from * self.q + to] == 1
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.entries.chunks(self.q).map(|r| r.to_vec()).collect()
    }

    /// Successors of `s` in increasing order.
    pub fn successors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.q).filter(move |&t| self.allowed(s, t))
    }

    /// Predecessors of `s` in increasing order.
    pub fn predecessors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.q).filter(move |&t| self.allowed(t, s))
    }

    /// Sum of the entries of `T^power`, saturating at `u128::MAX`.
    pub fn power_entry_sum(&self, power: usize) -> u128 {
        // Row vector of path counts ending at each symbol.
        let mut counts = vec![1u128; self.q];
        for _ in 0..power {
            let mut next = vec![0u128; self.q];
            for (i, &c) in counts.iter().enumerate() {
                for j in self.successors(i) {
                    next[j] = next[j].saturating_add(c);
                }
            }
            counts = next;
        }
        counts.iter().fold(0u128, |a, &b| a.saturating_add(b))
    }
}

/// True iff the transition graph is strongly connected.
pub fn check_irreducible(t: &AdjacencyMatrix) -> bool {
    let reach = |forward: bool| {
        let mut seen = vec![false; t.q];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            for n in 0..t.q {
                let edge = if forward { t.allowed(s, n) } else { t.allowed(n, s) };
                if edge && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen.into_iter().all(|b| b)
    };
    reach(true) && reach(false)
}

/// Period and cyclic classes of an irreducible matrix.
///
/// Classes are ordered so that every transition leads from class `p` into
/// class `p + 1 mod h`, and class 0 contains symbol 0.
pub fn period_and_classes(t: &AdjacencyMatrix) -> Result<(usize, Vec<Vec<usize>>)> {
    if !check_irreducible(t) {
        return Err(Error::Reducible);
    }
    let q = t.q;
    let mut level = vec![usize::MAX; q];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        for n in t.successors(s) {
            if level[n] == usize::MAX {
                level[n] = level[s] + 1;
                queue.push_back(n);
            }
        }
    }
    let mut h = 0usize;
    for s in 0..q {
        for n in t.successors(s) {
            let diff = (level[s] + 1).abs_diff(level[n]);
            h = gcd(h, diff);
        }
    }
    // A strongly connected graph has at least one cycle, so h > 0.
    debug_assert!(h > 0);
    let mut classes = vec![Vec::new(); h];
    for (s, &l) in level.iter().enumerate() {
        classes[l % h].push(s);
    }
    Ok((h, classes))
}

pub(crate) fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A finite sequence of symbols.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(symbols: Vec<usize>) -> Self {
        Self(symbols)
    }

    /// Parses a string of decimal digits, e.g. `"0110"`. Only valid for `q <= 10`.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad symbol {c:?} in word {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for Word {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Word {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&s| s < 10) {
            for s in &self.0 {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

/// An irreducible subshift of finite type with its cyclic structure.
#[derive(Debug, Clone)]
pub struct SymbolicSystem {
    adjacency: AdjacencyMatrix,
    primitive: bool,
    period: usize,
    cyclic_classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
    theta: f64,
    word_cap: u64,
}

impl SymbolicSystem {
    /// Requires an irreducible matrix and `theta` in `(0, 1]`.
    pub fn new(adjacency: AdjacencyMatrix, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("theta {theta} not in (0, 1]")));
        }
        let (period, cyclic_classes) = period_and_classes(&adjacency)?;
        let mut class_of = vec![0; adjacency.q()];
        for (p, class) in cyclic_classes.iter().enumerate() {
            for &s in class {
                class_of[s] = p;
            }
        }
        Ok(Self {
            adjacency,
            primitive: period == 1,
            period,
            cyclic_classes,
            class_of,
            theta,
            word_cap: DEFAULT_WORD_CAP,
        })
    }

    pub fn with_word_cap(mut self, cap: u64) -> Self {
        self.word_cap = cap;
        self
    }

    pub fn full_shift(q: usize) -> Self {
        Self::new(AdjacencyMatrix::full(q), 1.0).expect("full shift is irreducible")
    }

    /// The golden-mean shift: `11` forbidden.
    pub fn golden_mean() -> Self {
        Self::new(
            AdjacencyMatrix::from_rows(&[[1u8, 1], [1, 0]]).expect("valid matrix"),
            1.0,
        )
        .expect("golden mean shift is irreducible")
    }

    /// `period` classes of `size` symbols each; every symbol of class `p`
    /// may be followed by every symbol of class `p + 1`.
    pub fn cyclic_blocks(period: usize, size: usize) -> Self {
        let q = period * size;
        let rows: Vec<Vec<u8>> = (0..q)
            .map(|i| (0..q).map(|j| u8::from(j / size == (i / size + 1) % period)).collect())
            .collect();
        Self::new(AdjacencyMatrix::from_rows(&rows).expect("valid matrix"), 1.0)
            .expect("cyclic block shift is irreducible")
    }

    pub fn adjacency(&self) -> &AdjacencyMatrix {
        &self.adjacency
    }

    pub fn q(&self) -> usize {
        self.adjacency.q()
    }

    pub fn is_primitive(&self) -> bool {
        self.primitive
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn cyclic_classes(&self) -> &[Vec<usize>] {
        &self.cyclic_classes
    }

    pub fn class_of(&self, symbol: usize) -> usize {
        self.class_of[symbol]
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn word_cap(&self) -> u64 {
        self.word_cap
    }

    pub fn is_admissible(&self, w: &[usize]) -> bool {
        w.iter().all(|&s| s < self.q()) && w.windows(2).all(|p| self.adjacency.allowed(p[0], p[1]))
    }

    /// Admissible as a periodic word: also the wrap-around transition.
    pub fn is_cyclically_admissible(&self, w: &[usize]) -> bool {
        !w.is_empty()
            && self.is_admissible(w)
            && self.adjacency.allowed(w[w.len() - 1], w[0])
    }

    /// Number of admissible words of length `n >= 1`.
    pub fn count_words(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        self.adjacency.power_entry_sum(n - 1)
    }

    /// All admissible words of length `n` in lexicographic order.
    pub fn enumerate_words(&self, n: usize) -> Result<Vec<Word>> {
        if n == 0 {
            return Err(Error::InvalidArgument("word length must be at least 1".into()));
        }
        let count = self.count_words(n);
        if count > self.word_cap as u128 {
            return Err(Error::WordCap {
                count,
                cap: self.word_cap,
            });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut stack = Vec::with_capacity(n);
        self.extend_words(n, &mut stack, &mut out);
        Ok(out)
    }

    fn extend_words(&self, n: usize, prefix: &mut Vec<usize>, out: &mut Vec<Word>) {
        if prefix.len() == n {
            out.push(Word(prefix.clone()));
            return;
        }
        for s in 0..self.q() {
            if prefix.last().is_none_or(|&l| self.adjacency.allowed(l, s)) {
                prefix.push(s);
                self.extend_words(n, prefix, out);
                prefix.pop();
            }
        }
    }

    /// Overlapping concatenation of `past` and `future` on their shared symbol.
    pub fn splice(&self, past: &[usize], future: &[usize]) -> Result<Word> {
        let (Some(&last), Some(&first)) = (past.last(), future.first()) else {
            return Err(Error::Splice("empty word".into()));
        };
        if last != first {
            return Err(Error::Splice(format!(
                "last symbol {last} of the past differs from first symbol {first} of the future"
            )));
        }
        let mut w = past.to_vec();
        w.extend_from_slice(&future[1..]);
        if !self.is_admissible(&w) {
            return Err(Error::Inadmissible { word: w });
        }
        Ok(Word(w))
    }

    /// Lexicographically smallest admissible word of length `len` whose last
    /// symbol may be followed by `next`.
    pub fn first_word_into(&self, len: usize, next: usize) -> Option<Word> {
        fn go(sys: &SymbolicSystem, len: usize, next: usize, w: &mut Vec<usize>) -> bool {
            if w.len() == len {
                return sys.adjacency.allowed(*w.last().expect("len > 0"), next);
            }
            for s in 0..sys.q() {
                if w.last().is_none_or(|&l| sys.adjacency.allowed(l, s)) {
                    w.push(s);
                    if go(sys, len, next, w) {
                        return true;
                    }
                    w.pop();
                }
            }
            false
        }
        if len == 0 {
            return Some(Word(Vec::new()));
        }
        let mut w = Vec::with_capacity(len);
        go(self, len, next, &mut w).then_some(Word(w))
    }

    /// Lexicographically smallest admissible continuation of length `len`
    /// after `last`.
    pub fn first_word_after(&self, last: usize, len: usize) -> Option<Word> {
        fn go(sys: &SymbolicSystem, len: usize, prev: usize, w: &mut Vec<usize>) -> bool {
            if w.len() == len {
                return true;
            }
            for s in sys.adjacency.successors(prev).collect::<Vec<_>>() {
                w.push(s);
                if go(sys, len, s, w) {
                    return true;
                }
                w.pop();
            }
            false
        }
        let mut w = Vec::with_capacity(len);
        go(self, len, last, &mut w).then_some(Word(w))
    }
}

/// Distance `2^{-k theta}` between words of equal length, where `k` is the
/// length of the longest common prefix; 0 for identical words.
pub fn word_distance(x: &[usize], y: &[usize], theta: f64) -> f64 {
    let k = x.iter().zip(y).take_while(|(a, b)| a == b).count();
    if k == x.len() && x.len() == y.len() {
        0.0
    } else {
        2f64.powf(-(k as f64) * theta)
    }
}

/// Dense index over the admissible words of a fixed length.
#[derive(Debug, Clone)]
pub struct WordIndex {
    len: usize,
    words: Vec<Word>,
    index: HashMap<Vec<usize>, usize>,
}

impl WordIndex {
    pub fn new(sys: &SymbolicSystem, len: usize) -> Result<Self> {
        let words = sys.enumerate_words(len)?;
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.0.clone(), i))
            .collect();
        Ok(Self { len, words, index })
    }

    pub fn word_len(&self) -> usize {
        self.len
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &Word {
        &self.words[i]
    }

    pub fn get(&self, w: &[usize]) -> Option<usize> {
        self.index.get(w).copied()
    }
}
