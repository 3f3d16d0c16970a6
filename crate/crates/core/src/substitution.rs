//! Substitutions on a finite alphabet: block structure, Perron–Frobenius
//! data and limit word frequencies.
//!
//! Frequencies of length-`k` words are driven by a [`WindowChain`]: every
//! length-`k` window of `ζ^{t+1}(a)` is produced by exactly one window of
//! `ζᵗ(a)` (the one whose first letter's image it starts in), up to `k − 1`
//! boundary windows. Iterating window counts therefore continues the direct
//! count past any length that could be materialized.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, IntMatrix};

pub use crate::matrix::{pf_data, PfData};

/// Default cap on materialized symbols.
pub const DEFAULT_BUDGET: u64 = 100_000_000;
/// Symbols materialized by the direct frequency method before switching to
/// iterated window counts.
pub const DIRECT_BUDGET: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    rules: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl Substitution {
    pub fn new(rules: Vec<Vec<usize>>) -> Result<Self> {
        let n = rules.len();
        if n == 0 {
            return Err(Error::InvalidSubstitution("empty alphabet".into()));
        }
        for (a, r) in rules.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::InvalidSubstitution(format!("image of letter {a} is empty")));
            }
            if let Some(&b) = r.iter().find(|&&b| b >= n) {
                return Err(Error::InvalidSubstitution(format!("letter {b} outside the alphabet")));
            }
        }
        let names = (0..n).map(default_name).collect();
        Ok(Substitution { rules, names })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.rules.len() {
            return Err(Error::InvalidSubstitution("name count mismatch".into()));
        }
        self.names = names;
        Ok(self)
    }

    /// Parses rules like `["ab", "a"]`, one lowercase letter per symbol.
    pub fn from_compact(rules: &[&str]) -> Result<Self> {
        let parsed = rules
            .iter()
            .map(|r| {
                r.bytes()
                    .map(|c| {
                        if c.is_ascii_lowercase() {
                            Ok((c - b'a') as usize)
                        } else {
                            Err(Error::InvalidSubstitution(format!("bad symbol {:?}", c as char)))
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Substitution::new(parsed)
    }

    pub fn size(&self) -> usize {
        self.rules.len()
    }

    pub fn rules(&self) -> &[Vec<usize>] {
        &self.rules
    }

    pub fn rule(&self, a: usize) -> &[usize] {
        &self.rules[a]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn apply(&self, w: &[usize]) -> Vec<usize> {
        w.iter().flat_map(|&a| self.rules[a].iter().copied()).collect()
    }

    /// `M[a][b]` = occurrences of `b` in the image of `a`.
    pub fn matrix(&self) -> IntMatrix {
        let n = self.size();
        let mut m = vec![vec![0u64; n]; n];
        for (a, r) in self.rules.iter().enumerate() {
            for &b in r {
                m[a][b] += 1;
            }
        }
        m
    }

    /// `ξ^s`; fails with `LengthCap` if an image would pass `budget`.
    pub fn power(&self, s: usize, budget: u64) -> Result<Substitution> {
        let rules = (0..self.size())
            .map(|a| iterate(self, &[a], s, budget))
            .collect::<Result<Vec<_>>>()?;
        Ok(Substitution {
            rules,
            names: self.names.clone(),
        })
    }

    /// Exact lengths `|ξᵗ(a)|` for every letter, saturating.
    pub fn lengths_after(&self, t: usize) -> Vec<u64> {
        let mut len = vec![1u64; self.size()];
        for _ in 0..t {
            len = self
                .rules
                .iter()
                .map(|r| r.iter().fold(0u64, |acc, &b| acc.saturating_add(len[b])))
                .collect();
        }
        len
    }

    /// Letters occurring in some `ξᵗ(a)`, `t ≥ 0`.
    pub fn reachable(&self, a: usize) -> Vec<bool> {
        let mut seen = vec![false; self.size()];
        let mut stack = vec![a];
        seen[a] = true;
        while let Some(x) = stack.pop() {
            for &y in &self.rules[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    }
}

fn default_name(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("x{i}")
    }
}

pub fn iterate(s: &Substitution, w: &[usize], t: usize, budget: u64) -> Result<Vec<usize>> {
    let mut cur = w.to_vec();
    for _ in 0..t {
        let len: u64 = cur.iter().map(|&a| s.rules[a].len() as u64).sum();
        if len > budget {
            return Err(Error::LengthCap(budget));
        }
        cur = s.apply(&cur);
    }
    Ok(cur)
}

/// Overlapping occurrences of `pattern` as a factor of `text`.
pub fn count_occurrences<T: PartialEq>(pattern: &[T], text: &[T]) -> usize {
    if pattern.is_empty() || pattern.len() > text.len() {
        return 0;
    }
    text.windows(pattern.len()).filter(|w| *w == pattern).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    Primitive {
        eigenvalue: f64,
    },
    /// Irreducible but not primitive, with eigenvalue above 1.
    Periodic {
        period: usize,
        eigenvalue: f64,
    },
    Bounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub letters: Vec<usize>,
    pub matrix: IntMatrix,
    pub kind: BlockKind,
}

impl Block {
    pub fn eigenvalue(&self) -> f64 {
        match self.kind {
            BlockKind::Primitive { eigenvalue } | BlockKind::Periodic { eigenvalue, .. } => eigenvalue,
            BlockKind::Bounded => {
                if self.matrix.iter().flatten().any(|&x| x > 0) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Diagonal blocks, lowest (invariant) first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub blocks: Vec<Block>,
    block_of: Vec<usize>,
}

impl BlockStructure {
    pub fn block_of(&self, a: usize) -> usize {
        self.block_of[a]
    }

    /// Union of blocks `0..=i`, each of which is an invariant sub-alphabet.
    pub fn chain(&self) -> Vec<Vec<usize>> {
        let mut acc = Vec::new();
        self.blocks
            .iter()
            .map(|b| {
                acc.extend_from_slice(&b.letters);
                let mut c = acc.clone();
                c.sort_unstable();
                c
            })
            .collect()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible nonnegative matrix: gcd of its cycle lengths.
fn period(m: &[Vec<u64>]) -> usize {
    let n = m.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut p = 0usize;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if m[u][v] == 0 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                p = gcd(p, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    p.max(1)
}

pub fn block_structure(s: &Substitution) -> BlockStructure {
    let m = s.matrix();
    let n = s.size();
    let adj: Vec<Vec<usize>> = m.iter().map(|r| (0..n).filter(|&j| r[j] > 0).collect()).collect();
    let comps = matrix::strongly_connected_components(&adj);
    let mut block_of = vec![0; n];
    let blocks = comps
        .into_iter()
        .enumerate()
        .map(|(i, letters)| {
            for &a in &letters {
                block_of[a] = i;
            }
            let sub: IntMatrix = letters
                .iter()
                .map(|&x| letters.iter().map(|&y| m[x][y]).collect())
                .collect();
            let kind = classify(&sub);
            Block {
                letters,
                matrix: sub,
                kind,
            }
        })
        .collect();
    BlockStructure { blocks, block_of }
}

fn classify(sub: &IntMatrix) -> BlockKind {
    if matrix::powers_bounded(sub, 4096) == Some(true) {
        return BlockKind::Bounded;
    }
    let pf = matrix::pf_data(sub).expect("unbounded diagonal block of a condensation is irreducible");
    if matrix::is_primitive(sub) {
        BlockKind::Primitive {
            eigenvalue: pf.eigenvalue,
        }
    } else {
        BlockKind::Periodic {
            period: period(sub),
            eigenvalue: pf.eigenvalue,
        }
    }
}

/// Sparse linear map on length-`k` windows of a substitution's iterates.
#[derive(Clone, Debug)]
pub struct WindowChain<'a> {
    rules: &'a [Vec<usize>],
    k: usize,
    windows: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    children: Vec<Option<Vec<(usize, f64)>>>,
}

impl<'a> WindowChain<'a> {
    pub fn new(rules: &'a [Vec<usize>], k: usize) -> Self {
        assert!(k >= 1);
        WindowChain {
            rules,
            k,
            windows: Vec::new(),
            index: HashMap::new(),
            children: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window(&self, i: usize) -> &[usize] {
        &self.windows[i]
    }

    pub fn windows(&self) -> &[Vec<usize>] {
        &self.windows
    }

    pub fn find(&self, w: &[usize]) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn intern(&mut self, w: &[usize]) -> usize {
        debug_assert_eq!(w.len(), self.k);
        if let Some(&i) = self.index.get(w) {
            return i;
        }
        let i = self.windows.len();
        self.windows.push(w.to_vec());
        self.index.insert(w.to_vec(), i);
        self.children.push(None);
        i
    }

    /// Counts of length-`k` windows in a linear word.
    pub fn count_linear(&mut self, word: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.len()];
        for w in word.windows(self.k) {
            let i = self.intern(w);
            if i >= counts.len() {
                counts.resize(i + 1, 0.0);
            }
            counts[i] += 1.0;
        }
        counts
    }

    /// Counts of length-`k` windows in a cyclic word, wrapping around.
    pub fn count_cyclic(&mut self, word: &[usize]) -> Vec<f64> {
        let n = word.len();
        let mut counts = vec![0.0; self.len()];
        let mut buf = Vec::with_capacity(self.k);
        for i in 0..n {
            buf.clear();
            buf.extend((0..self.k).map(|j| word[(i + j) % n]));
            let idx = self.intern(&buf);
            if idx >= counts.len() {
                counts.resize(idx + 1, 0.0);
            }
            counts[idx] += 1.0;
        }
        counts
    }

    fn expand(&mut self, i: usize) {
        if self.children[i].is_some() {
            return;
        }
        let w = self.windows[i].clone();
        let head = self.rules[w[0]].len();
        let mut img = Vec::with_capacity(head + self.k);
        for &a in &w {
            if img.len() >= head + self.k - 1 {
                break;
            }
            img.extend_from_slice(&self.rules[a]);
        }
        let mut kids: BTreeMap<usize, f64> = BTreeMap::new();
        for s in 0..head {
            let j = self.intern(&img[s..s + self.k]);
            *kids.entry(j).or_insert(0.0) += 1.0;
        }
        self.children[i] = Some(kids.into_iter().collect());
    }

    /// One application of the substitution to a window count vector.
    pub fn step(&mut self, counts: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            self.expand(i);
            for &(j, m) in self.children[i].as_ref().expect("expanded") {
                if j >= out.len() {
                    out.resize(j + 1, 0.0);
                }
                out[j] += c * m;
            }
        }
        out
    }
}

pub fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum()
}

const STABLE_TOL: f64 = 1e-9;
const STABLE_STEPS: usize = 200_000;

/// Normalized window frequencies along `ξᵗ(seed)`, `t = 0..=steps`.
fn trajectory(s: &Substitution, seed: usize, k: usize, steps: usize) -> Option<Vec<Vec<f64>>> {
    // grow the seed until it holds a window of length k
    let mut x = vec![seed];
    let mut offset = 0;
    while x.len() < k {
        let y = s.apply(&x);
        if y.len() == x.len() || offset > 64 {
            return None;
        }
        x = y;
        offset += 1;
    }
    let mut chain = WindowChain::new(s.rules(), k);
    let mut cur = chain.count_linear(&x);
    normalize(&mut cur);
    let mut out = vec![cur.clone()];
    for _ in 0..steps {
        let mut next = chain.step(&cur);
        normalize(&mut next);
        cur = next;
        out.push(cur.clone());
    }
    Some(out)
}

/// Least power `s ≤ cap` along which letter and two-letter frequencies of
/// `ξ^{st}(a)` settle for every letter `a`.
pub fn stabilizing_power(s: &Substitution, cap: usize) -> Result<usize> {
    if cap == 0 {
        return Err(Error::InvalidArgument("cap must be at least 1".into()));
    }
    let mut ok = vec![vec![false; s.size()]; cap + 1];
    for a in 0..s.size() {
        for k in [1usize, 2] {
            let Some(traj) = settle_trajectory(s, a, k, cap) else {
                // the seed never reaches length k: only single letters matter
                if k == 2 {
                    continue;
                }
                unreachable!("k = 1 always has a trajectory");
            };
            for (p, row) in ok.iter_mut().enumerate().skip(1) {
                if k == 1 {
                    row[a] = stable_along(&traj, p);
                } else {
                    row[a] &= stable_along(&traj, p);
                }
            }
        }
    }
    for (p, row) in ok.iter().enumerate().skip(1) {
        if row.iter().all(|&x| x) {
            return Ok(p);
        }
    }
    let letters = (0..s.size()).filter(|&a| !ok[cap][a]).collect();
    Err(Error::CapExceeded { cap, letters })
}

fn settle_trajectory(s: &Substitution, a: usize, k: usize, cap: usize) -> Option<Vec<Vec<f64>>> {
    // enough steps that slowly converging (polynomial) blocks settle below
    // the tolerance while keeping a multiple of every candidate period
    let mut steps = 512 * cap;
    loop {
        let traj = trajectory(s, a, k, steps)?;
        let settled = (1..=cap).any(|p| stable_along(&traj, p));
        if settled || steps >= STABLE_STEPS {
            return Some(traj);
        }
        steps *= 4;
    }
}

fn stable_along(traj: &[Vec<f64>], p: usize) -> bool {
    let last = (traj.len() - 1) / p * p;
    last >= p && l1_diff(&traj[last], &traj[last - p]) < STABLE_TOL
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyMethod {
    /// Count occurrences in `ζᵗ(a)`.
    Direct,
    /// Read off a left Perron–Frobenius eigenvector (letters only).
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyOptions {
    pub budget: usize,
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Default for FrequencyOptions {
    fn default() -> Self {
        FrequencyOptions {
            budget: DIRECT_BUDGET,
            tolerance: 1e-8,
            max_steps: 100_000,
        }
    }
}

/// Limit frequency of `w` in `ζᵗ(a)`, where `s` is already the stabilized
/// power `ζ`.
pub fn frequency_limit(s: &Substitution, a: usize, w: &[usize], method: FrequencyMethod) -> Result<f64> {
    frequency_limit_with(s, a, w, method, &FrequencyOptions::default())
}

pub fn frequency_limit_with(
    s: &Substitution,
    a: usize,
    w: &[usize],
    method: FrequencyMethod,
    opts: &FrequencyOptions,
) -> Result<f64> {
    if a >= s.size() || w.iter().any(|&b| b >= s.size()) {
        return Err(Error::InvalidArgument("letter outside the alphabet".into()));
    }
    if w.is_empty() {
        return Err(Error::InvalidArgument("empty pattern".into()));
    }
    match method {
        FrequencyMethod::Direct => direct_frequency(s, a, w, opts),
        FrequencyMethod::Spectral => {
            if w.len() != 1 {
                return Err(Error::NonDominant);
            }
            Ok(spectral_letter_frequencies(s, a)?[w[0]])
        }
    }
}

fn direct_frequency(s: &Substitution, a: usize, w: &[usize], opts: &FrequencyOptions) -> Result<f64> {
    let k = w.len();
    // materialize ζᵗ(a) as far as the budget allows
    let mut x = vec![a];
    for _ in 0..256 {
        let next_len: usize = x.iter().map(|&b| s.rules[b].len()).sum();
        if next_len > opts.budget || next_len == x.len() && x.len() >= k {
            break;
        }
        x = s.apply(&x);
    }
    if x.len() < k {
        return Ok(0.0);
    }
    let mut chain = WindowChain::new(s.rules(), k);
    let mut counts = chain.count_linear(&x);
    let total: f64 = counts.iter().sum();
    let freq_of = |chain: &WindowChain, c: &[f64], total: f64| {
        chain.find(w).and_then(|i| c.get(i).copied()).unwrap_or(0.0) / total
    };
    let mut f = freq_of(&chain, &counts, total);
    normalize(&mut counts);
    for _ in 0..opts.max_steps {
        let mut next = chain.step(&counts);
        normalize(&mut next);
        let g = freq_of(&chain, &next, 1.0);
        let settled = (g - f).abs() < opts.tolerance && l1_diff(&next, &counts) < opts.tolerance;
        counts = next;
        f = g;
        if settled {
            break;
        }
    }
    Ok(f)
}

/// Letter frequencies in `ζᵗ(a)` from the left eigenvector of the dominant
/// primitive block containing `a`.
pub fn spectral_letter_frequencies(s: &Substitution, a: usize) -> Result<Vec<f64>> {
    let bs = block_structure(s);
    let home = bs.block_of(a);
    let lambda = match bs.blocks[home].kind {
        BlockKind::Primitive { eigenvalue } => eigenvalue,
        _ => return Err(Error::NonDominant),
    };
    let reach = s.reachable(a);
    for (i, b) in bs.blocks.iter().enumerate() {
        if i != home && reach[b.letters[0]] && b.eigenvalue() >= lambda - 1e-9 {
            return Err(Error::NonDominant);
        }
    }
    // y M = λ y on reachable letters, with y fixed on the home block by its
    // PF vector and solved below it (λ is not an eigenvalue there).
    let m = s.matrix();
    let n = s.size();
    let pf = matrix::pf_data(&bs.blocks[home].matrix)?;
    let mut y = vec![0.0; n];
    for (i, &b) in bs.blocks[home].letters.iter().enumerate() {
        y[b] = pf.left[i];
    }
    let lower: Vec<usize> = (0..n).filter(|&b| reach[b] && bs.block_of(b) != home).collect();
    if !lower.is_empty() {
        // (λ I − M_LLᵀ) y_L = M_HLᵀ y_H
        let l = lower.len();
        let mut mat = vec![vec![0.0; l + 1]; l];
        for (r, &j) in lower.iter().enumerate() {
            for (c, &i) in lower.iter().enumerate() {
                mat[r][c] = if r == c { lambda } else { 0.0 } - m[i][j] as f64;
            }
            mat[r][l] = bs.blocks[home].letters.iter().map(|&i| y[i] * m[i][j] as f64).sum();
        }
        let sol = solve(mat).ok_or(Error::NonDominant)?;
        for (r, &j) in lower.iter().enumerate() {
            y[j] = sol[r];
        }
    }
    normalize(&mut y);
    Ok(y)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        let pivot = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let factor = row[col] / pivot[col];
                if factor != 0.0 {
                    for (x, y) in row[col..].iter_mut().zip(&pivot[col..]) {
                        *x -= factor * y;
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Limit frequencies of every word up to a length, seeded at one letter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub letter: usize,
    pub entries: BTreeMap<Vec<usize>, f64>,
    pub residual: f64,
}

/// Direct-method table of all words of length `1..=max_len` that occur.
pub fn frequency_table(s: &Substitution, a: usize, max_len: usize) -> Result<FrequencyTable> {
    let opts = FrequencyOptions::default();
    let mut entries = BTreeMap::new();
    let mut residual: f64 = 0.0;
    for k in 1..=max_len {
        let mut x = vec![a];
        while x.len() < k.max(64) {
            let y = s.apply(&x);
            if y.len() == x.len() {
                break;
            }
            x = y;
        }
        if x.len() < k {
            break;
        }
        let mut chain = WindowChain::new(s.rules(), k);
        let mut counts = chain.count_linear(&x);
        normalize(&mut counts);
        let mut diff = f64::INFINITY;
        for _ in 0..opts.max_steps {
            let mut next = chain.step(&counts);
            normalize(&mut next);
            diff = l1_diff(&next, &counts);
            counts = next;
            if diff < opts.tolerance {
                break;
            }
        }
        residual = residual.max(diff);
        for (i, c) in counts.iter().enumerate() {
            if *c > 0.0 {
                entries.insert(chain.window(i).to_vec(), *c);
            }
        }
    }
    Ok(FrequencyTable {
        letter: a,
        entries,
        residual,
    })
}
