//! Marked graphs and graph self-maps: tightening, transition matrices,
//! invariant filtrations, gates, bounded cancellation, Nielsen paths and
//! relative train track checks.
//!
//! Oriented edges reuse [`Letter`]: edge `i` is `Letter::positive(i)` and
//! its reverse is `Letter::negative(i)`. On the rose this makes edge paths
//! and words the same thing.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_group::{inverse_letters, is_reduced_letters, push_reduced, Automorphism, CyclicWord, Letter, Word};
use crate::matrix::{self, IntMatrix};

pub type EdgePath = Vec<Letter>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedGraph {
    vertex_count: usize,
    /// `(origin, terminus)` of each positive edge.
    ends: Vec<(usize, usize)>,
    edge_names: Vec<String>,
    vertex_names: Vec<String>,
}

fn default_edge_name(i: usize) -> String {
    Letter::positive(i).ascii()
}

impl MarkedGraph {
    pub fn new(vertex_count: usize, ends: Vec<(usize, usize)>) -> Result<Self> {
        if vertex_count == 0 || ends.is_empty() {
            return Err(Error::InvalidArgument("graph needs vertices and edges".into()));
        }
        if let Some(&(o, t)) = ends.iter().find(|&&(o, t)| o >= vertex_count || t >= vertex_count) {
            return Err(Error::InvalidArgument(format!(
                "edge endpoint {} out of range",
                o.max(t)
            )));
        }
        let edge_names = (0..ends.len()).map(default_edge_name).collect();
        let vertex_names = (1..=vertex_count).map(|v| v.to_string()).collect();
        Ok(MarkedGraph {
            vertex_count,
            ends,
            edge_names,
            vertex_names,
        })
    }

    /// One vertex with `rank` loops.
    pub fn rose(rank: usize) -> Self {
        MarkedGraph::new(1, vec![(0, 0); rank]).expect("rose of positive rank")
    }

    pub fn with_names(mut self, edge_names: Vec<String>, vertex_names: Vec<String>) -> Result<Self> {
        if edge_names.len() != self.ends.len() || vertex_names.len() != self.vertex_count {
            return Err(Error::InvalidArgument("name list length mismatch".into()));
        }
        self.edge_names = edge_names;
        self.vertex_names = vertex_names;
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.ends.len()
    }

    pub fn is_rose(&self) -> bool {
        self.vertex_count == 1
    }

    pub fn origin(&self, e: Letter) -> usize {
        let (o, t) = self.ends[e.index()];
        if e.is_inverse() {
            t
        } else {
            o
        }
    }

    pub fn terminus(&self, e: Letter) -> usize {
        self.origin(e.inverse())
    }

    /// All oriented edges, in code order.
    pub fn directions(&self) -> impl Iterator<Item = Letter> {
        (0..2 * self.edge_count()).map(Letter::from_code)
    }

    pub fn directions_at(&self, v: usize) -> Vec<Letter> {
        self.directions().filter(|&d| self.origin(d) == v).collect()
    }

    /// Vertices of valence below 2; legal but usually a modelling mistake.
    pub fn valence_warnings(&self) -> Vec<usize> {
        (0..self.vertex_count)
            .filter(|&v| self.directions_at(v).len() < 2)
            .collect()
    }

    pub fn edge_name(&self, i: usize) -> &str {
        &self.edge_names[i]
    }

    pub fn edge_names(&self) -> &[String] {
        &self.edge_names
    }

    pub fn vertex_names(&self) -> &[String] {
        &self.vertex_names
    }

    pub fn letter_name(&self, e: Letter) -> String {
        let n = &self.edge_names[e.index()];
        if e.is_inverse() {
            if n.chars().all(|c| c.is_lowercase() || !c.is_alphabetic()) && n.chars().any(|c| c.is_alphabetic()) {
                n.to_uppercase()
            } else {
                format!("{n}^-1")
            }
        } else {
            n.clone()
        }
    }

    /// Space-separated edge names, inverses uppercased.
    pub fn format_path(&self, p: &[Letter]) -> String {
        p.iter().map(|&e| self.letter_name(e)).collect::<Vec<_>>().join(" ")
    }

    pub fn check_path(&self, p: &[Letter]) -> Result<()> {
        for (i, l) in p.iter().enumerate() {
            if l.index() >= self.edge_count() {
                return Err(Error::GeneratorOutOfRange {
                    index: l.index(),
                    rank: self.edge_count(),
                });
            }
            if i > 0 && self.terminus(p[i - 1]) != self.origin(*l) {
                return Err(Error::BrokenPath(i));
            }
        }
        Ok(())
    }

    pub fn is_closed(&self, p: &[Letter]) -> bool {
        !p.is_empty() && self.terminus(p[p.len() - 1]) == self.origin(p[0])
    }

    /// Rank of the fundamental group, assuming the graph is connected.
    pub fn rank(&self) -> usize {
        self.edge_count() + 1 - self.vertex_count
    }
}

pub fn tighten(g: &MarkedGraph, p: &[Letter]) -> Result<EdgePath> {
    g.check_path(p)?;
    let mut out = Vec::with_capacity(p.len());
    for &l in p {
        push_reduced(&mut out, l);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMap {
    graph: MarkedGraph,
    vertex_images: Vec<usize>,
    edge_images: Vec<EdgePath>,
    strata_hint: Option<Vec<Vec<usize>>>,
}

impl GraphMap {
    pub fn new(graph: MarkedGraph, vertex_images: Vec<usize>, edge_images: Vec<EdgePath>) -> Result<Self> {
        if vertex_images.len() != graph.vertex_count() || edge_images.len() != graph.edge_count() {
            return Err(Error::InvalidArgument("image table size mismatch".into()));
        }
        if vertex_images.iter().any(|&v| v >= graph.vertex_count()) {
            return Err(Error::InvalidArgument("vertex image out of range".into()));
        }
        for (i, img) in edge_images.iter().enumerate() {
            if img.is_empty() || !is_reduced_letters(img) {
                return Err(Error::BadImage(i));
            }
            graph.check_path(img)?;
            let (o, t) = graph.ends[i];
            if graph.origin(img[0]) != vertex_images[o] || graph.terminus(img[img.len() - 1]) != vertex_images[t] {
                return Err(Error::BadImage(i));
            }
        }
        Ok(GraphMap {
            graph,
            vertex_images,
            edge_images,
            strata_hint: None,
        })
    }

    /// Vertex images are read off from the edge images.
    pub fn from_edge_images(graph: MarkedGraph, edge_images: Vec<EdgePath>) -> Result<Self> {
        let mut vimg = vec![usize::MAX; graph.vertex_count()];
        for (i, img) in edge_images.iter().enumerate() {
            if img.is_empty() {
                return Err(Error::BadImage(i));
            }
            graph.check_path(img)?;
            let (o, t) = graph.ends[i];
            for (v, w) in [(o, graph.origin(img[0])), (t, graph.terminus(img[img.len() - 1]))] {
                if vimg[v] == usize::MAX {
                    vimg[v] = w;
                } else if vimg[v] != w {
                    return Err(Error::BadImage(i));
                }
            }
        }
        if vimg.contains(&usize::MAX) {
            return Err(Error::InvalidArgument("isolated vertex has no image".into()));
        }
        GraphMap::new(graph, vimg, edge_images)
    }

    pub fn from_automorphism(phi: &Automorphism) -> Self {
        let images = phi.images().iter().map(|w| w.letters().to_vec()).collect();
        GraphMap::new(MarkedGraph::rose(phi.rank()), vec![0], images).expect("automorphism images are valid rose paths")
    }

    pub fn to_automorphism(&self) -> Option<Automorphism> {
        if !self.graph.is_rose() {
            return None;
        }
        Automorphism::new(self.edge_images.iter().map(|p| Word::from_letters(p.clone())).collect()).ok()
    }

    /// Attach a user filtration; it is validated by [`invariant_filtration`].
    pub fn with_strata(mut self, strata: Vec<Vec<usize>>) -> Self {
        self.strata_hint = Some(strata);
        self
    }

    pub fn strata_hint(&self) -> Option<&[Vec<usize>]> {
        self.strata_hint.as_deref()
    }

    pub fn graph(&self) -> &MarkedGraph {
        &self.graph
    }

    pub fn vertex_image(&self, v: usize) -> usize {
        self.vertex_images[v]
    }

    pub fn edge_images(&self) -> &[EdgePath] {
        &self.edge_images
    }

    pub fn image(&self, e: Letter) -> EdgePath {
        let img = &self.edge_images[e.index()];
        if e.is_inverse() {
            inverse_letters(img)
        } else {
            img.clone()
        }
    }

    /// First direction of the image of `e`: the derivative map.
    pub fn df(&self, e: Letter) -> Letter {
        let img = &self.edge_images[e.index()];
        if e.is_inverse() {
            img[img.len() - 1].inverse()
        } else {
            img[0]
        }
    }

    /// Appends the image of `p` to the reduced stack `out`.
    pub fn map_into(&self, p: &[Letter], out: &mut Vec<Letter>) {
        for &e in p {
            let img = &self.edge_images[e.index()];
            if e.is_inverse() {
                for &l in img.iter().rev() {
                    push_reduced(out, l.inverse());
                }
            } else {
                for &l in img {
                    push_reduced(out, l);
                }
            }
        }
    }

    /// Image of a path, assumed valid.
    pub fn apply(&self, p: &[Letter]) -> EdgePath {
        let mut out = Vec::with_capacity(p.len() * 2);
        self.map_into(p, &mut out);
        out
    }

    pub fn map_path(&self, p: &[Letter]) -> Result<EdgePath> {
        self.graph.check_path(p)?;
        Ok(self.apply(p))
    }

    pub fn map_circuit(&self, c: &CyclicWord) -> Result<CyclicWord> {
        let img = self.apply(c.letters());
        CyclicWord::new(&crate::free_group::cyclic_core(&img)).map_err(|_| Error::TrivialImage)
    }

    /// Longest edge image, a Lipschitz constant for the map.
    pub fn lipschitz(&self) -> usize {
        self.edge_images.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &GraphMap) -> Result<GraphMap> {
        if self.graph != other.graph {
            return Err(Error::InvalidArgument("maps live on different graphs".into()));
        }
        let images: Vec<EdgePath> = other.edge_images.iter().map(|p| self.apply(p)).collect();
        let vimg = other.vertex_images.iter().map(|&v| self.vertex_images[v]).collect();
        GraphMap::new(self.graph.clone(), vimg, images)
    }

    pub fn power(&self, n: usize) -> Result<GraphMap> {
        if n == 0 {
            let g = &self.graph;
            return GraphMap::new(
                g.clone(),
                (0..g.vertex_count()).collect(),
                (0..g.edge_count()).map(|i| vec![Letter::positive(i)]).collect(),
            );
        }
        let mut acc = self.clone();
        acc.strata_hint = None;
        for _ in 1..n {
            acc = self.compose(&acc)?;
        }
        Ok(acc)
    }

    /// Full transition matrix: entry `(i, j)` counts `e_j` and `e_j⁻¹` in `f(e_i)`.
    pub fn transition_matrix(&self) -> IntMatrix {
        let m = self.graph.edge_count();
        let mut out = vec![vec![0u64; m]; m];
        for (i, img) in self.edge_images.iter().enumerate() {
            for l in img {
                out[i][l.index()] += 1;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StratumKind {
    Zero,
    Neg,
    Eg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub edges: Vec<usize>,
    pub entries: IntMatrix,
    pub kind: StratumKind,
    pub pf_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filtration {
    pub strata: Vec<TransitionMatrix>,
    stratum_of: Vec<usize>,
}

impl Filtration {
    pub fn stratum_of(&self, edge: usize) -> usize {
        self.stratum_of[edge]
    }

    pub fn kind_of(&self, edge: usize) -> StratumKind {
        self.strata[self.stratum_of[edge]].kind
    }

    pub fn eg_strata(&self) -> impl Iterator<Item = (usize, &TransitionMatrix)> {
        self.strata
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == StratumKind::Eg)
    }

    /// Edges of strata `0..=r`.
    pub fn below(&self, r: usize) -> Vec<bool> {
        self.stratum_of.iter().map(|&s| s <= r).collect()
    }
}

const EG_TOL: f64 = 1e-9;

/// Strata as strongly connected components of "the image of `e` crosses
/// `e'`", lowest first. A filtration attached with [`GraphMap::with_strata`]
/// must be invariant; it then decides the order among incomparable strata.
pub fn invariant_filtration(f: &GraphMap) -> Result<Filtration> {
    let m = f.graph.edge_count();
    let tm = f.transition_matrix();
    let adj: Vec<Vec<usize>> = tm.iter().map(|row| (0..m).filter(|&j| row[j] > 0).collect()).collect();

    let mut hint_rank = vec![0usize; m];
    if let Some(hint) = &f.strata_hint {
        let mut seen = vec![false; m];
        for (r, s) in hint.iter().enumerate() {
            for &e in s {
                if e >= m || seen[e] {
                    return Err(Error::InvalidFiltration(format!("edge {e} listed twice or unknown")));
                }
                seen[e] = true;
                hint_rank[e] = r;
            }
        }
        if let Some(e) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidFiltration(format!(
                "edge {} missing",
                f.graph.edge_name(e)
            )));
        }
        for e in 0..m {
            if let Some(&j) = adj[e].iter().find(|&&j| hint_rank[j] > hint_rank[e]) {
                return Err(Error::InvalidFiltration(format!(
                    "image of {} crosses higher edge {}",
                    f.graph.edge_name(e),
                    f.graph.edge_name(j)
                )));
            }
        }
    }

    let comps = matrix::strongly_connected_components(&adj);
    let mut comp_of = vec![0usize; m];
    for (c, comp) in comps.iter().enumerate() {
        for &e in comp {
            comp_of[e] = c;
        }
    }
    // Kahn's algorithm on the condensation, emitting dependencies first.
    let k = comps.len();
    let mut pending = vec![0usize; k];
    let mut dependents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for e in 0..m {
        for &j in &adj[e] {
            let (a, b) = (comp_of[e], comp_of[j]);
            if a != b && dependents[b].insert(a) {
                pending[a] += 1;
            }
        }
    }
    let key = |c: usize| (comps[c].iter().map(|&e| hint_rank[e]).min().unwrap_or(0), comps[c][0]);
    let mut ready: BTreeSet<((usize, usize), usize)> =
        (0..k).filter(|&c| pending[c] == 0).map(|c| (key(c), c)).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(first) = ready.iter().next().copied() {
        ready.remove(&first);
        let c = first.1;
        order.push(c);
        for &d in &dependents[c] {
            pending[d] -= 1;
            if pending[d] == 0 {
                ready.insert((key(d), d));
            }
        }
    }

    let mut strata = Vec::with_capacity(k);
    let mut stratum_of = vec![0usize; m];
    for (r, &c) in order.iter().enumerate() {
        let edges = comps[c].clone();
        let entries: IntMatrix = edges
            .iter()
            .map(|&i| edges.iter().map(|&j| tm[i][j]).collect())
            .collect();
        let (kind, lambda) = classify_block(&entries);
        for &e in &edges {
            stratum_of[e] = r;
        }
        strata.push(TransitionMatrix {
            edges,
            entries,
            kind,
            pf_eigenvalue: lambda,
        });
    }
    Ok(Filtration { strata, stratum_of })
}

fn classify_block(entries: &IntMatrix) -> (StratumKind, f64) {
    if entries.iter().flatten().all(|&x| x == 0) {
        return (StratumKind::Zero, 0.0);
    }
    // A nonzero diagonal block of an SCC is irreducible.
    if matrix::is_permutation_like(entries) {
        return (StratumKind::Neg, 1.0);
    }
    let pf = matrix::pf_data(entries).expect("strongly connected block");
    debug_assert!(pf.eigenvalue > 1.0 + EG_TOL);
    (StratumKind::Eg, pf.eigenvalue)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegEdgeClass {
    Fixed,
    Linear,
    Superlinear,
    Unknown(usize),
}

/// Growth type of an edge with `f(e) = e·u` in a non-exponential stratum.
pub fn classify_neg_edge(f: &GraphMap, filtration: &Filtration, e: usize, bound: usize) -> Result<NegEdgeClass> {
    let img = &f.edge_images[e];
    if img[0] != Letter::positive(e) {
        return Err(Error::ShapeMismatch);
    }
    let u = &img[1..];
    if u.is_empty() {
        return Ok(NegEdgeClass::Fixed);
    }
    if f.apply(u) == u {
        return Ok(NegEdgeClass::Linear);
    }
    let expanding = |l: &Letter| {
        let i = l.index();
        i != e
            && match filtration.kind_of(i) {
                StratumKind::Eg => true,
                StratumKind::Neg => f.edge_images[i].len() > 1,
                StratumKind::Zero => false,
            }
    };
    let mut cur = u.to_vec();
    for _ in 0..bound {
        cur = f.apply(&cur);
        if cur.len() > u.len() && cur.iter().any(expanding) {
            return Ok(NegEdgeClass::Superlinear);
        }
    }
    Ok(NegEdgeClass::Unknown(bound))
}

/// Gates at every vertex and the resulting illegal turns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalStructure {
    /// `Df` indexed by direction code.
    pub df: Vec<Letter>,
    /// Gate id of each direction.
    pub gate_of: Vec<usize>,
    pub gates: Vec<Vec<Letter>>,
    pub illegal_turns: Vec<(Letter, Letter)>,
}

impl LegalStructure {
    pub fn is_turn_legal(&self, d1: Letter, d2: Letter) -> bool {
        self.gate_of[d1.code()] != self.gate_of[d2.code()]
    }
}

pub fn gates(f: &GraphMap) -> LegalStructure {
    let g = &f.graph;
    let n = 2 * g.edge_count();
    let df: Vec<Letter> = (0..n).map(|c| f.df(Letter::from_code(c))).collect();
    // After `n` steps every orbit sits on its periodic part, where Df is a
    // bijection; two directions are ever identified iff they are by then.
    let mut eventual: Vec<Letter> = (0..n).map(Letter::from_code).collect();
    for _ in 0..n {
        for x in eventual.iter_mut() {
            *x = df[x.code()];
        }
    }
    let mut gate_of = vec![usize::MAX; n];
    let mut gates: Vec<Vec<Letter>> = Vec::new();
    for v in 0..g.vertex_count() {
        let dirs = g.directions_at(v);
        for &d in &dirs {
            if gate_of[d.code()] != usize::MAX {
                continue;
            }
            let id = gates.len();
            let members: Vec<Letter> = dirs
                .iter()
                .copied()
                .filter(|d2| eventual[d2.code()] == eventual[d.code()])
                .collect();
            for m in &members {
                gate_of[m.code()] = id;
            }
            gates.push(members);
        }
    }
    let mut illegal_turns = Vec::new();
    for gate in &gates {
        for (i, &a) in gate.iter().enumerate() {
            for &b in &gate[i + 1..] {
                illegal_turns.push((a, b));
            }
        }
    }
    LegalStructure {
        df,
        gate_of,
        gates,
        illegal_turns,
    }
}

/// Whether every turn of `p` is legal; with `stratum`, only turns with both
/// edges in the stratum are examined.
pub fn is_legal(p: &[Letter], ls: &LegalStructure, stratum: Option<&[usize]>) -> bool {
    p.windows(2).all(|w| {
        if let Some(s) = stratum {
            if !(s.contains(&w[0].index()) && s.contains(&w[1].index())) {
                return true;
            }
        }
        ls.is_turn_legal(w[0].inverse(), w[1])
    })
}

fn common_prefix(a: &[Letter], b: &[Letter]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Reduced paths of length `1..=max_len` starting at `v`, restricted to
/// edges allowed by `allowed`.
fn paths_from(
    g: &MarkedGraph,
    v: usize,
    max_len: usize,
    allowed: &dyn Fn(usize) -> bool,
    out: &mut Vec<EdgePath>,
    limit: usize,
) -> bool {
    let mut stack: Vec<EdgePath> = g
        .directions_at(v)
        .into_iter()
        .filter(|d| allowed(d.index()))
        .map(|d| vec![d])
        .collect();
    while let Some(p) = stack.pop() {
        if out.len() >= limit {
            return false;
        }
        if p.len() < max_len {
            let last = p[p.len() - 1];
            for d in g.directions_at(g.terminus(last)) {
                if d != last.inverse() && allowed(d.index()) {
                    let mut q = p.clone();
                    q.push(d);
                    stack.push(q);
                }
            }
        }
        out.push(p);
    }
    true
}

const BCC_PATH_LIMIT: usize = 2_000_000;

/// Least radius-stable bounded cancellation constant.
///
/// `C(r)` is the longest common prefix of `[f(p)]` and `[f(q)]` over reduced
/// paths `p`, `q` of length at most `r` from one vertex with different first
/// edges; this is the cancellation in `[f(p⁻¹)]·[f(q)]`. The first `r ≥ 2`
/// with `C(r) = C(r−1)` is returned.
pub fn bcc_constant(f: &GraphMap, cap: usize) -> Result<usize> {
    let g = &f.graph;
    let mut prev: Option<usize> = None;
    for r in 1..=cap.max(2) {
        let mut c = 0usize;
        for v in 0..g.vertex_count() {
            let mut paths = Vec::new();
            if !paths_from(g, v, r, &|_| true, &mut paths, BCC_PATH_LIMIT) {
                return Err(Error::NonConvergence(r));
            }
            let mut imgs: Vec<(EdgePath, Letter)> = paths.iter().map(|p| (f.apply(p), p[0])).collect();
            imgs.sort_unstable();
            for w in imgs.windows(2) {
                if w[0].1 != w[1].1 {
                    c = c.max(common_prefix(&w[0].0, &w[1].0));
                }
            }
        }
        if r >= 2 && prev == Some(c) {
            return Ok(c);
        }
        prev = Some(c);
    }
    Err(Error::NonConvergence(cap))
}

/// Period-one Nielsen paths up to a length bound, one orientation each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NielsenSearch {
    pub paths: Vec<EdgePath>,
    pub max_len: usize,
}

fn canonical_orientation(p: &[Letter]) -> EdgePath {
    let inv = inverse_letters(p);
    if inv.as_slice() < p {
        inv
    } else {
        p.to_vec()
    }
}

impl NielsenSearch {
    pub fn contains(&self, p: &[Letter]) -> bool {
        let c = canonical_orientation(p);
        self.paths
            .binary_search_by(|q| (q.len(), q.as_slice()).cmp(&(c.len(), c.as_slice())))
            .is_ok()
    }

    /// Paths that are not concatenations of two shorter Nielsen paths.
    pub fn indivisible(&self) -> Vec<EdgePath> {
        self.paths
            .iter()
            .filter(|p| (1..p.len()).all(|k| !self.contains(&p[..k])))
            .cloned()
            .collect()
    }

    /// Closed Nielsen paths: each one is a conjugacy class fixed by the map.
    pub fn closed(&self, g: &MarkedGraph) -> Vec<EdgePath> {
        self.paths.iter().filter(|p| g.is_closed(p)).cloned().collect()
    }

    pub fn longest(&self) -> usize {
        self.paths.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// A path was found at the length bound, so longer ones may exist.
    pub fn capped(&self) -> bool {
        self.longest() >= self.max_len
    }
}

pub fn nielsen_search(f: &GraphMap, max_len: usize) -> NielsenSearch {
    let g = &f.graph;
    let mut found = HashSet::new();
    for v in (0..g.vertex_count()).filter(|&v| f.vertex_image(v) == v) {
        let mut paths = Vec::new();
        paths_from(g, v, max_len, &|_| true, &mut paths, usize::MAX);
        for p in paths {
            if f.vertex_image(g.terminus(p[p.len() - 1])) != g.terminus(p[p.len() - 1]) {
                continue;
            }
            if f.apply(&p) == p {
                found.insert(canonical_orientation(&p));
            }
        }
    }
    let mut paths: Vec<EdgePath> = found.into_iter().collect();
    paths.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
    NielsenSearch { paths, max_len }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RttViolation {
    /// `Df` sends a direction of the stratum outside it.
    DirectionLeaves {
        stratum: usize,
        direction: Letter,
        image: Letter,
    },
    /// A connecting path for the stratum collapses.
    ConnectingCollapse { stratum: usize, path: EdgePath },
    /// An r-legal path has a non-r-legal image.
    LegalityLost {
        stratum: usize,
        path: EdgePath,
        image: EdgePath,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RttReport {
    pub depth: usize,
    pub violations: Vec<RttViolation>,
}

impl RttReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative train track conditions for every EG stratum, exact for
/// directions and up to `depth` for paths.
pub fn check_rtt(f: &GraphMap, filtration: &Filtration, ls: &LegalStructure, depth: usize) -> RttReport {
    let g = &f.graph;
    let mut violations = Vec::new();
    for (r, s) in filtration.eg_strata() {
        let in_stratum = |i: usize| filtration.stratum_of(i) == r;
        for &e in &s.edges {
            for d in [Letter::positive(e), Letter::negative(e)] {
                let img = ls.df[d.code()];
                if !in_stratum(img.index()) {
                    violations.push(RttViolation::DirectionLeaves {
                        stratum: r,
                        direction: d,
                        image: img,
                    });
                }
            }
        }

        // connecting paths: nontrivial paths in G_{r-1} with both ends on H_r
        let lower = |i: usize| filtration.stratum_of(i) < r;
        let mut touches = vec![false; g.vertex_count()];
        for &e in &s.edges {
            let (o, t) = g.ends[e];
            touches[o] = true;
            touches[t] = true;
        }
        for v in (0..g.vertex_count()).filter(|&v| touches[v]) {
            let mut paths = Vec::new();
            paths_from(g, v, depth, &lower, &mut paths, BCC_PATH_LIMIT);
            for p in paths {
                if touches[g.terminus(p[p.len() - 1])] && f.apply(&p).is_empty() {
                    violations.push(RttViolation::ConnectingCollapse { stratum: r, path: p });
                }
            }
        }

        let upto = |i: usize| filtration.stratum_of(i) <= r;
        let edges = &s.edges;
        for v in 0..g.vertex_count() {
            let mut paths = Vec::new();
            paths_from(g, v, depth, &upto, &mut paths, BCC_PATH_LIMIT);
            for p in paths {
                if !is_legal(&p, ls, Some(edges)) {
                    continue;
                }
                let img = f.apply(&p);
                if !is_legal(&img, ls, Some(edges)) {
                    violations.push(RttViolation::LegalityLost {
                        stratum: r,
                        path: p,
                        image: img,
                    });
                }
            }
        }
    }
    RttReport { depth, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_group::Word;

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
    fn tighten_examples() {
        let g = MarkedGraph::rose(2);
        assert_eq!(tighten(&g, &w("abB")).unwrap(), w("a"));
        assert_eq!(tighten(&g, &w("ab")).unwrap(), w("ab"));
        // a segment [0,1] plus a loop at 1
        let seg = MarkedGraph::new(2, vec![(0, 1), (1, 1)]).unwrap();
        assert_eq!(tighten(&seg, &w("b")).unwrap(), w("b"));
        assert_eq!(tighten(&seg, &w("ba")), Err(Error::BrokenPath(1)));
    }

    #[test]
    fn map_path_examples() {
        let f = rose_map(&["ab", "a"]);
        assert_eq!(f.map_path(&w("a")).unwrap(), w("ab"));
        assert_eq!(f.map_path(&w("aB")).unwrap(), w("abA"));
        let id = rose_map(&["a", "b"]);
        assert_eq!(id.map_path(&w("aaa")).unwrap(), w("aaa"));
    }

    #[test]
    fn fibonacci_filtration() {
        let f = rose_map(&["ab", "a"]);
        let filt = invariant_filtration(&f).unwrap();
        assert_eq!(filt.strata.len(), 1);
        assert_eq!(filt.strata[0].kind, StratumKind::Eg);
        assert!((filt.strata[0].pf_eigenvalue - 1.618_033_988_749_895).abs() < 1e-9);
    }

    #[test]
    fn neg_over_eg() {
        let f = rose_map(&["ab", "a", "cab"]);
        let filt = invariant_filtration(&f).unwrap();
        assert_eq!(filt.strata.len(), 2);
        assert_eq!(filt.strata[0].edges, vec![0, 1]);
        assert_eq!(filt.strata[1].edges, vec![2]);
        assert_eq!(filt.strata[1].kind, StratumKind::Neg);
        assert_eq!(classify_neg_edge(&f, &filt, 2, 5).unwrap(), NegEdgeClass::Superlinear);
        assert_eq!(classify_neg_edge(&f, &filt, 1, 5), Err(Error::ShapeMismatch));
    }

    #[test]
    fn identity_filtration() {
        let f = rose_map(&["a", "b", "c"]);
        let filt = invariant_filtration(&f).unwrap();
        assert_eq!(filt.strata.len(), 3);
        assert!(filt.strata.iter().all(|s| s.kind == StratumKind::Neg));
        assert_eq!(classify_neg_edge(&f, &filt, 1, 3).unwrap(), NegEdgeClass::Fixed);
    }

    #[test]
    fn linear_edge() {
        // surface map fixes abAB; c -> c abAB is linear
        let f = rose_map(&["ab", "bab", "cabAB"]);
        let filt = invariant_filtration(&f).unwrap();
        assert_eq!(classify_neg_edge(&f, &filt, 2, 5).unwrap(), NegEdgeClass::Linear);
    }

    #[test]
    fn strata_hint_orders_and_validates() {
        let f = rose_map(&["a", "b"]).with_strata(vec![vec![1], vec![0]]);
        let filt = invariant_filtration(&f).unwrap();
        assert_eq!(filt.strata[0].edges, vec![1]);
        let bad = rose_map(&["ab", "a"]).with_strata(vec![vec![0], vec![1]]);
        assert!(matches!(invariant_filtration(&bad), Err(Error::InvalidFiltration(_))));
    }

    #[test]
    fn fibonacci_gates() {
        let f = rose_map(&["ab", "a"]);
        let ls = gates(&f);
        let (a, ai, b, bi) = (w("a")[0], w("A")[0], w("b")[0], w("B")[0]);
        assert_eq!(ls.df[a.code()], a);
        assert_eq!(ls.df[b.code()], a);
        assert_eq!(ls.df[ai.code()], bi);
        assert_eq!(ls.df[bi.code()], ai);
        assert!(!ls.is_turn_legal(a, b));
        assert!(ls.is_turn_legal(ai, b));
        assert!(!ls.is_turn_legal(a, a));
        // path B a crosses the turn {b, a}
        assert!(!is_legal(&w("Ba"), &ls, None));
        assert!(is_legal(&w("ab"), &ls, None));
        assert!(is_legal(&w("a"), &ls, None));
    }

    #[test]
    fn identity_gates_all_legal() {
        let ls = gates(&rose_map(&["a", "b", "c"]));
        assert!(ls.illegal_turns.is_empty());
    }

    #[test]
    fn gates_are_df_coherent() {
        let f = rose_map(&["b", "c", "ab"]);
        let ls = gates(&f);
        for gate in &ls.gates {
            let imgs: HashSet<usize> = gate.iter().map(|d| ls.gate_of[ls.df[d.code()].code()]).collect();
            assert_eq!(imgs.len(), 1);
        }
    }

    #[test]
    fn bcc_examples() {
        assert_eq!(bcc_constant(&rose_map(&["a", "b"]), 10).unwrap(), 0);
        // positive images still cancel across A·b: f(A) f(b) = BA·a
        assert_eq!(bcc_constant(&rose_map(&["ab", "a"]), 10).unwrap(), 1);
        let c = bcc_constant(&rose_map(&["ab", "A"]), 10).unwrap();
        assert!(c >= 1);
    }

    #[test]
    fn nielsen_examples() {
        let id = rose_map(&["a", "b"]);
        let ns = nielsen_search(&id, 1);
        assert_eq!(ns.paths, vec![w("a"), w("b")]);
        let fib = rose_map(&["ab", "a"]);
        let ns = nielsen_search(&fib, 6);
        assert!(ns.closed(fib.graph()).is_empty());
        let f = rose_map(&["ab", "a", "c"]);
        assert!(nielsen_search(&f, 3).contains(&w("c")));
    }

    #[test]
    fn surface_map_has_closed_nielsen_path() {
        let f = rose_map(&["ab", "bab"]);
        let ns = nielsen_search(&f, 4);
        assert!(ns.contains(&w("abAB")));
        assert!(ns.indivisible().contains(&canonical_orientation(&w("abAB"))));
    }

    #[test]
    fn rtt_examples() {
        let fib = rose_map(&["ab", "a"]);
        let filt = invariant_filtration(&fib).unwrap();
        assert!(check_rtt(&fib, &filt, &gates(&fib), 6).is_clean());

        let bad = rose_map(&["ab", "Ba"]);
        let filt = invariant_filtration(&bad).unwrap();
        let rep = check_rtt(&bad, &filt, &gates(&bad), 4);
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, RttViolation::LegalityLost { path, .. } if path == &w("a"))));

        let id = rose_map(&["a", "b"]);
        let filt = invariant_filtration(&id).unwrap();
        assert!(check_rtt(&id, &filt, &gates(&id), 6).is_clean());
    }

    #[test]
    fn graph_map_on_theta_graph() {
        // two vertices, three edges from 0 to 1; swap-like map
        let g = MarkedGraph::new(2, vec![(0, 1), (0, 1), (0, 1)]).unwrap();
        let f = GraphMap::from_edge_images(g.clone(), vec![w("b"), w("c"), w("aBc")]).unwrap();
        assert_eq!(f.vertex_image(0), 0);
        assert_eq!(f.map_path(&w("aB")).unwrap(), w("bC"));
        assert!(GraphMap::from_edge_images(g, vec![w("B"), w("c"), w("a")]).is_err());
    }
}
