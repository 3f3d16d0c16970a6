//! Finite-order shadows of geodesic currents.
//!
//! A [`FrequencyVector`] of order `L` assigns to every reduced edge path `γ`
//! with `|γ| ≤ L` the value `⟨γ, μ⟩`, the number of occurrences of `γ` plus
//! those of `γ⁻¹`. Every edge has length 1, so the weighted length of `μ` is
//! the sum over positive edges.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_group::{inverse_letters, CyclicWord, Letter};
use crate::marked_graph::{gates, invariant_filtration, EdgePath, GraphMap, MarkedGraph};
use crate::splitting::{unit_substitution, InventoryOptions, UnitInventory};
use crate::substitution::{l1_diff, normalize, WindowChain};

pub const DEFAULT_ORDER: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    order: usize,
    /// Both orientations are stored, so flip symmetry is checkable.
    entries: BTreeMap<EdgePath, f64>,
}

/// Lexicographically least of `γ` and `γ⁻¹`.
pub fn canonical_orientation(p: &[Letter]) -> EdgePath {
    let inv = inverse_letters(p);
    if inv.as_slice() < p {
        inv
    } else {
        p.to_vec()
    }
}

impl FrequencyVector {
    /// Builds from one-sided occurrence values `F(γ)`, setting
    /// `entry(γ) = F(γ) + F(γ⁻¹)`.
    pub fn from_one_sided(order: usize, one_sided: &HashMap<EdgePath, f64>) -> Self {
        let mut entries = BTreeMap::new();
        for (p, &v) in one_sided {
            if v == 0.0 {
                continue;
            }
            *entries.entry(p.clone()).or_insert(0.0) += v;
            *entries.entry(inverse_letters(p)).or_insert(0.0) += v;
        }
        FrequencyVector { order, entries }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, p: &[Letter]) -> f64 {
        self.entries.get(p).copied().unwrap_or(0.0)
    }

    /// All stored entries, both orientations.
    pub fn entries(&self) -> &BTreeMap<EdgePath, f64> {
        &self.entries
    }

    /// One entry per unoriented path.
    pub fn canonical_entries(&self) -> impl Iterator<Item = (&EdgePath, f64)> {
        self.entries
            .iter()
            .filter(|(p, _)| canonical_orientation(p) == **p)
            .map(|(p, &v)| (p, v))
    }

    pub fn weighted_length(&self) -> f64 {
        self.entries
            .iter()
            .filter(|(p, _)| p.len() == 1 && !p[0].is_inverse())
            .map(|(_, v)| v)
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FrequencyVector {
            order: self.order,
            entries: self.entries.iter().map(|(p, v)| (p.clone(), v * factor)).collect(),
        }
    }

    /// Projective representative with weighted length 1.
    pub fn normalized(&self) -> Self {
        let w = self.weighted_length();
        if w > 0.0 {
            self.scaled(1.0 / w)
        } else {
            self.clone()
        }
    }

    /// Largest `|entry(γ) − entry(γ⁻¹)|`.
    pub fn flip_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|(p, &v)| (v - self.get(&inverse_letters(p))).abs())
            .fold(0.0, f64::max)
    }

    /// Largest violation of `entry(γ) = Σ entry(γe) = Σ entry(eγ)` over
    /// paths shorter than the order. Extensions range over all stored paths,
    /// which are reduced by construction.
    pub fn kirchhoff_defect(&self) -> f64 {
        let mut right: HashMap<&[Letter], f64> = HashMap::new();
        let mut left: HashMap<&[Letter], f64> = HashMap::new();
        for (p, &v) in &self.entries {
            if p.len() >= 2 {
                *right.entry(&p[..p.len() - 1]).or_insert(0.0) += v;
                *left.entry(&p[1..]).or_insert(0.0) += v;
            }
        }
        let mut worst: f64 = 0.0;
        for (p, &v) in self.entries.iter().filter(|(p, _)| p.len() < self.order) {
            let r = right.get(p.as_slice()).copied().unwrap_or(0.0);
            let l = left.get(p.as_slice()).copied().unwrap_or(0.0);
            worst = worst.max((v - r).abs()).max((v - l).abs());
        }
        // extensions of paths with zero entry must also vanish
        for (p, &s) in right.iter().chain(left.iter()) {
            if p.len() < self.order && !self.entries.contains_key(*p) {
                worst = worst.max(s.abs());
            }
        }
        worst
    }

    pub fn to_json(&self, g: &MarkedGraph) -> FrequencyVectorJson {
        FrequencyVectorJson {
            order: self.order,
            entries: self.canonical_entries().map(|(p, v)| (g.format_path(p), v)).collect(),
        }
    }
}

/// Serialized form: canonical orientations only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVectorJson {
    pub order: usize,
    pub entries: Vec<(String, f64)>,
}

/// L¹ distance over unoriented paths of every length up to the order.
pub fn l1_distance(a: &FrequencyVector, b: &FrequencyVector) -> Result<f64> {
    if a.order != b.order {
        return Err(Error::OrderMismatch(a.order, b.order));
    }
    let mut d = 0.0;
    for (p, v) in a.canonical_entries() {
        d += (v - b.get(p)).abs();
    }
    for (p, v) in b.canonical_entries() {
        if !a.entries.contains_key(p) {
            d += v.abs();
        }
    }
    Ok(d)
}

/// Counting current of a circuit with a nonnegative weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalCurrent {
    pub circuit: CyclicWord,
    pub weight: f64,
}

impl RationalCurrent {
    pub fn new(circuit: CyclicWord, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument("weight must be a nonnegative number".into()));
        }
        Ok(RationalCurrent { circuit, weight })
    }

    pub fn of(circuit: CyclicWord) -> Self {
        RationalCurrent { circuit, weight: 1.0 }
    }
}

const DENSE_LIMIT: usize = 1 << 22;

/// Occurrence counts of `γ` and `γ⁻¹` in a circuit, windows wrapping around
/// as often as needed; unnormalized.
pub fn freq_vector(g: &MarkedGraph, c: &CyclicWord, order: usize) -> FrequencyVector {
    debug_assert!(order >= 1);
    let letters = c.letters();
    let n = letters.len();
    let base = 2 * g.edge_count();
    let mut one_sided: HashMap<EdgePath, f64> = HashMap::new();
    let dense_size = base.checked_pow(order as u32).filter(|&s| s <= DENSE_LIMIT);
    if let Some(size) = dense_size {
        // per length, windows encoded in base 2m with the first letter most
        // significant
        for len in 1..=order {
            let size_len = size / base.pow((order - len) as u32);
            let mut counts = vec![0u32; size_len];
            for i in 0..n {
                let mut code = 0usize;
                for j in 0..len {
                    code = code * base + letters[(i + j) % n].code();
                }
                counts[code] += 1;
            }
            for (code, &cnt) in counts.iter().enumerate() {
                if cnt == 0 {
                    continue;
                }
                let mut p = vec![Letter::from_code(0); len];
                let mut x = code;
                for j in (0..len).rev() {
                    p[j] = Letter::from_code(x % base);
                    x /= base;
                }
                one_sided.insert(p, cnt as f64);
            }
        }
    } else {
        for len in 1..=order {
            for i in 0..n {
                let p: EdgePath = (0..len).map(|j| letters[(i + j) % n]).collect();
                *one_sided.entry(p).or_insert(0.0) += 1.0;
            }
        }
    }
    FrequencyVector::from_one_sided(order, &one_sided)
}

/// Frequency vector of a weighted counting current.
pub fn rational_freq_vector(g: &MarkedGraph, c: &RationalCurrent, order: usize) -> FrequencyVector {
    freq_vector(g, &c.circuit, order).scaled(c.weight)
}

pub fn weighted_length(mu: &FrequencyVector) -> f64 {
    mu.weighted_length()
}

pub fn push_current(f: &GraphMap, c: &RationalCurrent) -> Result<RationalCurrent> {
    Ok(RationalCurrent {
        circuit: f.map_circuit(&c.circuit)?,
        weight: c.weight,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimplexLabel {
    Attracting,
    Repelling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    pub label: SimplexLabel,
    pub order: usize,
    pub points: Vec<FrequencyVector>,
    /// The unit alphabet was not fully enumerated or some unit image did not
    /// split along legal turns; points are then a best effort.
    pub approximate: bool,
    /// EG strata whose seed edge produced each point, before deduplication.
    pub seeds: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub inventory: InventoryOptions,
    /// Fail with `UnverifiedAlphabet` instead of flagging.
    pub strict: bool,
    pub tolerance: f64,
    pub max_steps: usize,
    /// Largest oscillation period of the unit substitution looked for.
    pub max_period: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            inventory: InventoryOptions::default(),
            strict: false,
            tolerance: 1e-13,
            max_steps: 200_000,
            max_period: 12,
        }
    }
}

const DEDUPE_TOL: f64 = 1e-6;

/// Limit currents of the EG strata of `f`, computed at order `order`.
pub fn attracting_simplex(f: &GraphMap, order: usize) -> Result<Simplex> {
    attracting_simplex_with(f, order, &SimplexOptions::default())
}

pub fn attracting_simplex_with(f: &GraphMap, order: usize, opts: &SimplexOptions) -> Result<Simplex> {
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    let filt = invariant_filtration(f)?;
    let ls = gates(f);
    let inv = UnitInventory::build(f, &filt, &opts.inventory);
    let usub = unit_substitution(f, &inv, &ls)?;
    let approximate = !inv.is_complete() || usub.illegal_junctions > 0;
    if approximate && opts.strict {
        return Err(Error::UnverifiedAlphabet);
    }
    let mut points: Vec<FrequencyVector> = Vec::new();
    let mut seeds = Vec::new();
    for (r, stratum) in filt.eg_strata() {
        let e = stratum.edges[0];
        let seed = inv.find(&[Letter::positive(e)]).expect("EG edges are units");
        let mu = unit_limit(&inv, &usub.images, seed, order, opts)?;
        seeds.push(r);
        let dup = points
            .iter()
            .any(|p| l1_distance(p, &mu).map(|d| d < DEDUPE_TOL).unwrap_or(false));
        if !dup {
            points.push(mu);
        }
    }
    Ok(Simplex {
        label: SimplexLabel::Attracting,
        order,
        points,
        approximate,
        seeds,
    })
}

/// `Δ₋` of an automorphism is `Δ₊` of its inverse.
pub fn repelling_simplex(f_inv: &GraphMap, order: usize) -> Result<Simplex> {
    repelling_simplex_with(f_inv, order, &SimplexOptions::default())
}

pub fn repelling_simplex_with(f_inv: &GraphMap, order: usize, opts: &SimplexOptions) -> Result<Simplex> {
    let mut s = attracting_simplex_with(f_inv, order, opts)?;
    s.label = SimplexLabel::Repelling;
    Ok(s)
}

/// Normalized limit of edge-path frequencies along `ζᵗ(seed)`.
fn unit_limit(
    inv: &UnitInventory,
    rules: &[Vec<usize>],
    seed: usize,
    order: usize,
    opts: &SimplexOptions,
) -> Result<FrequencyVector> {
    let mut x = vec![seed];
    let mut grow = 0;
    while x.len() < order {
        let y: Vec<usize> = x.iter().flat_map(|&u| rules[u].iter().copied()).collect();
        if grow > 64 * order {
            return Err(Error::NonConvergence(grow));
        }
        x = y;
        grow += 1;
    }
    let mut chain = WindowChain::new(rules, order);
    let mut cur = chain.count_linear(&x);
    normalize(&mut cur);
    let mut history: Vec<Vec<f64>> = vec![cur.clone()];
    let mut converged = false;
    for _ in 0..opts.max_steps {
        let mut next = chain.step(&cur);
        normalize(&mut next);
        let hit = history
            .iter()
            .rev()
            .take(opts.max_period)
            .any(|h| l1_diff(h, &next) < opts.tolerance);
        history.push(next.clone());
        if history.len() > opts.max_period + 1 {
            history.remove(0);
        }
        cur = next;
        if hit {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(opts.max_steps));
    }

    let mut one_sided: HashMap<EdgePath, f64> = HashMap::new();
    let mut mass = 0.0;
    let mut path = Vec::new();
    for (i, &p) in cur.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let window = chain.window(i);
        path.clear();
        for &u in window {
            path.extend_from_slice(&inv.unit(u).path);
        }
        let head = inv.unit(window[0]).path.len();
        mass += p * head as f64;
        for s in 0..head {
            for len in 1..=order {
                *one_sided.entry(path[s..s + len].to_vec()).or_insert(0.0) += p;
            }
        }
    }
    for v in one_sided.values_mut() {
        *v /= mass;
    }
    Ok(FrequencyVector::from_one_sided(order, &one_sided))
}

/// Dense coordinates of several vectors over the union of their
/// unoriented paths.
fn dense(vectors: &[&FrequencyVector]) -> Vec<Vec<f64>> {
    let mut keys: BTreeMap<&EdgePath, usize> = BTreeMap::new();
    for v in vectors {
        for (p, _) in v.canonical_entries() {
            let n = keys.len();
            keys.entry(p).or_insert(n);
        }
    }
    vectors
        .iter()
        .map(|v| {
            let mut row = vec![0.0; keys.len()];
            for (p, x) in v.canonical_entries() {
                row[keys[p]] = x;
            }
            row
        })
        .collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `min_{t∈[0,1]} ‖d − t·e‖₁` by a weighted median of the breakpoints.
fn segment_min(d: &[f64], e: &[f64]) -> (f64, f64) {
    let mut bps: Vec<(f64, f64)> = d
        .iter()
        .zip(e)
        .filter(|(_, &ej)| ej != 0.0)
        .map(|(&dj, &ej)| (dj / ej, ej.abs()))
        .collect();
    bps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = bps.iter().map(|b| b.1).sum();
    let mut acc = 0.0;
    let mut t = 0.0;
    for &(r, w) in &bps {
        acc += w;
        if acc >= total / 2.0 {
            t = r;
            break;
        }
    }
    let t = t.clamp(0.0, 1.0);
    let val = d.iter().zip(e).map(|(dj, ej)| (dj - t * ej).abs()).sum();
    (val, t)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &x) in u.iter().enumerate() {
        css += x;
        let t = (css - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

fn combo(points: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; points[0].len()];
    for (p, &w) in points.iter().zip(c) {
        for (o, x) in out.iter_mut().zip(p) {
            *o += w * x;
        }
    }
    out
}

/// Projected subgradient descent on the weight simplex from one start.
fn pgd(mu: &[f64], points: &[Vec<f64>], start: Vec<f64>) -> f64 {
    let k = points.len();
    let mut c = start;
    let mut best = l1(mu, &combo(points, &c));
    let scale: f64 = points
        .iter()
        .map(|p| p.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    for it in 0..4000 {
        let r = combo(points, &c);
        let sign: Vec<f64> = mu.iter().zip(&r).map(|(m, x)| (x - m).signum()).collect();
        let grad: Vec<f64> = (0..k)
            .map(|i| points[i].iter().zip(&sign).map(|(p, s)| p * s).sum())
            .collect();
        let step = 0.5 / (scale * ((it + 1) as f64).sqrt());
        for i in 0..k {
            c[i] -= step * grad[i];
        }
        project_simplex(&mut c);
        let val = l1(mu, &combo(points, &c));
        if val < best {
            best = val;
        }
        if best < 1e-12 {
            break;
        }
    }
    best
}

/// L¹ distance from a normalized vector to the convex hull of the simplex's
/// points: exact on every edge of the hull, refined by projected subgradient
/// descent from several starts when there are more than two points.
pub fn simplex_distance(mu: &FrequencyVector, s: &Simplex) -> Result<f64> {
    if s.points.is_empty() {
        return Err(Error::InvalidArgument("empty simplex".into()));
    }
    if let Some(p) = s.points.iter().find(|p| p.order != mu.order) {
        return Err(Error::OrderMismatch(mu.order, p.order));
    }
    let mut all: Vec<&FrequencyVector> = vec![mu];
    all.extend(s.points.iter());
    let rows = dense(&all);
    let m = &rows[0];
    let pts = &rows[1..];
    let k = pts.len();
    let mut best = pts.iter().map(|p| l1(m, p)).fold(f64::INFINITY, f64::min);
    for i in 0..k {
        for j in i + 1..k {
            let d: Vec<f64> = m.iter().zip(&pts[i]).map(|(a, b)| a - b).collect();
            let e: Vec<f64> = pts[j].iter().zip(&pts[i]).map(|(a, b)| a - b).collect();
            best = best.min(segment_min(&d, &e).0);
        }
    }
    if k > 2 {
        let mut starts = vec![vec![1.0 / k as f64; k]];
        for i in 0..k {
            let mut v = vec![0.5 / (k - 1) as f64; k];
            v[i] = 0.5;
            starts.push(v);
        }
        for st in starts {
            best = best.min(pgd(m, pts, st));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_group::Word;

    fn cw(s: &str) -> CyclicWord {
        CyclicWord::parse_compact(s).unwrap()
    }

    fn w(s: &str) -> EdgePath {
        Word::parse_compact(s).unwrap().into_letters()
    }

    fn rose_map(images: &[&str]) -> GraphMap {
        GraphMap::new(
            MarkedGraph::rose(images.len()),
            vec![0],
            images.iter().map(|s| w(s)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn counting_examples() {
        let g = MarkedGraph::rose(2);
        let mu = freq_vector(&g, &cw("abab"), 2);
        assert_eq!(mu.get(&w("ab")), 2.0);
        assert_eq!(mu.get(&w("BA")), 2.0);
        assert_eq!(mu.weighted_length(), 4.0);
        let one = freq_vector(&g, &cw("a"), 1);
        assert_eq!(one.get(&w("a")), 1.0);
        assert_eq!(one.get(&w("A")), 1.0);
        let short = freq_vector(&g, &cw("ab"), 3);
        assert_eq!(short.get(&w("abb")), 0.0);
        assert_eq!(short.get(&w("aba")), 1.0);
    }

    #[test]
    fn rational_currents_are_exact() {
        let g = MarkedGraph::rose(3);
        for s in ["abcAB", "aabbCa", "a", "abAB"] {
            let mu = freq_vector(&g, &cw(s), 4);
            assert_eq!(mu.flip_defect(), 0.0);
            assert_eq!(mu.kirchhoff_defect(), 0.0);
        }
    }

    #[test]
    fn homogeneity() {
        let g = MarkedGraph::rose(2);
        let c = RationalCurrent::new(cw("aab"), 3.0).unwrap();
        assert_eq!(rational_freq_vector(&g, &c, 2).weighted_length(), 9.0);
        assert!((freq_vector(&g, &cw("aab"), 2).normalized().weighted_length() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_words_scale() {
        let g = MarkedGraph::rose(2);
        let a = freq_vector(&g, &cw("ab"), 3);
        let b = freq_vector(&g, &cw("ababab"), 3);
        assert_eq!(a.scaled(3.0), b);
    }

    #[test]
    fn push_examples() {
        let f = rose_map(&["ab", "a"]);
        let p = push_current(&f, &RationalCurrent::of(cw("a"))).unwrap();
        assert_eq!(p.circuit, cw("ab"));
        let q = push_current(&f, &RationalCurrent::new(cw("a"), 3.0).unwrap()).unwrap();
        assert_eq!(q.weight, 3.0);
        let finv = rose_map(&["b", "Ba"]);
        let back = push_current(&finv, &push_current(&f, &RationalCurrent::of(cw("abbA"))).unwrap()).unwrap();
        assert_eq!(back.circuit, cw("abbA"));
    }

    #[test]
    fn fibonacci_simplex() {
        let f = rose_map(&["ab", "a"]);
        let s = attracting_simplex(&f, 1).unwrap();
        assert_eq!(s.points.len(), 1);
        let inv_phi = 0.618_033_988_749_894_8;
        assert!((s.points[0].get(&w("a")) - inv_phi).abs() < 1e-9);
        assert!((s.points[0].get(&w("A")) - inv_phi).abs() < 1e-9);
        assert!((s.points[0].get(&w("b")) - (1.0 - inv_phi)).abs() < 1e-9);
        let s3 = attracting_simplex(&f, 3).unwrap();
        assert!(s3.points[0].kirchhoff_defect() < 1e-9);
        assert!(s3.points[0].flip_defect() < 1e-12);
    }

    #[test]
    fn disjoint_strata_give_two_points() {
        let f = rose_map(&["ab", "a", "cd", "c"]);
        let s = attracting_simplex(&f, 2).unwrap();
        assert_eq!(s.points.len(), 2);
        for p in &s.points {
            assert!(p.kirchhoff_defect() < 1e-9);
        }
    }

    #[test]
    fn distance_examples() {
        let f = rose_map(&["ab", "a", "cd", "c"]);
        let s = attracting_simplex(&f, 2).unwrap();
        assert!(simplex_distance(&s.points[0], &s).unwrap() < 1e-12);
        let mut mid = HashMap::new();
        for p in &s.points {
            for (k, v) in p.entries() {
                *mid.entry(k.clone()).or_insert(0.0) += v / 4.0;
            }
        }
        let mid = FrequencyVector::from_one_sided(2, &mid);
        assert!(simplex_distance(&mid, &s).unwrap() < 1e-8);
        let g = MarkedGraph::rose(4);
        let mu = freq_vector(&g, &cw("abcd"), 2).normalized();
        let one = Simplex {
            points: vec![s.points[0].clone()],
            ..s.clone()
        };
        assert!((simplex_distance(&mu, &one).unwrap() - l1_distance(&mu, &s.points[0]).unwrap()).abs() < 1e-12);
        let mu3 = freq_vector(&g, &cw("abcd"), 3).normalized();
        assert_eq!(simplex_distance(&mu3, &s), Err(Error::OrderMismatch(3, 2)));
    }

    #[test]
    fn projection_lands_on_simplex() {
        let mut v = vec![0.9, 0.8, -0.3];
        project_simplex(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|&x| x >= 0.0));
    }
}
