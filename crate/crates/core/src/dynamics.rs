//! Orbit experiments on circuits: goodness, convergence to the attracting
//! and repelling simplices, atoroidality scans, independence of simplices
//! and the flare certificate for pairs of automorphisms.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::currents::{
    attracting_simplex_with, freq_vector, repelling_simplex_with, simplex_distance, Simplex, SimplexOptions,
};
use crate::error::{Error, Result};
use crate::free_group::{cyclic_core, least_rotation, CyclicWord, Letter};
use crate::marked_graph::{
    bcc_constant, gates, invariant_filtration, nielsen_search, EdgePath, Filtration, GraphMap, LegalStructure,
    MarkedGraph,
};
use crate::splitting::{expansion_power, InventoryOptions, UnitInventory};

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Iterates inspected before a junction counts as a splitting point.
pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_ORBIT_BUDGET: usize = 10_000_000;
pub const DEFAULT_GROWTH: f64 = 2.0;

const BCC_RADIUS_CAP: usize = 16;
const POWER_CAP: usize = 64;

// ---------------------------------------------------------------------------
// Goodness

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    /// Position in the circuit; the last piece may wrap around.
    pub start: usize,
    pub len: usize,
    pub good: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodnessReport {
    /// The circuit, or the path for [`path_goodness`].
    pub circuit: EdgePath,
    /// Maximal good and bad segments, in circuit order starting at
    /// `pieces[0].start`.
    pub pieces: Vec<Piece>,
    pub goodness: f64,
    pub good_length: usize,
    pub bad_length: usize,
    pub depth: usize,
    /// All unit enumerations finished; otherwise `goodness` is a lower bound.
    pub inventory_complete: bool,
}

impl GoodnessReport {
    pub fn subpaths(&self) -> Vec<(EdgePath, bool)> {
        let n = self.circuit.len();
        self.pieces
            .iter()
            .map(|p| ((0..p.len).map(|i| self.circuit[(p.start + i) % n]).collect(), p.good))
            .collect()
    }
}

fn push_image(f: &GraphMap, l: Letter, out: &mut Vec<Letter>) {
    let img = &f.edge_images()[l.index()];
    if l.is_inverse() {
        out.extend(img.iter().rev().map(|x| x.inverse()));
    } else {
        out.extend_from_slice(img);
    }
}

/// Turns of the circuit (turn `i` sits between `c[i-1]` and `c[i]`) across
/// which no cancellation happens while tightening `fᵏ(c)`, `k ≤ depth`.
pub fn stable_turns(f: &GraphMap, c: &[Letter], depth: usize) -> Vec<bool> {
    stable_junctions(f, c, depth, true)
}

/// As [`stable_turns`] for a path; entry 0 (no junction) is false.
pub fn stable_path_junctions(f: &GraphMap, p: &[Letter], depth: usize) -> Vec<bool> {
    stable_junctions(f, p, depth, false)
}

fn stable_junctions(f: &GraphMap, c: &[Letter], depth: usize, cyclic: bool) -> Vec<bool> {
    let n = c.len();
    let mut track: Vec<Option<usize>> = (0..n).map(|i| (cyclic || i > 0).then_some(i)).collect();
    let mut cur = c.to_vec();
    let mut img = Vec::new();
    let mut jpos = Vec::new();
    for _ in 0..depth {
        if track.iter().all(Option::is_none) {
            break;
        }
        img.clear();
        jpos.clear();
        for &l in &cur {
            jpos.push(img.len());
            push_image(f, l, &mut img);
        }
        let len = img.len();
        let mut stack: Vec<(Letter, usize)> = Vec::with_capacity(len);
        // cancelling pair (q, p) straddles junctions q+1..=p
        let mut diff = vec![0i32; len + 2];
        for (p, &l) in img.iter().enumerate() {
            match stack.last() {
                Some(&(t, q)) if t == l.inverse() => {
                    stack.pop();
                    diff[q + 1] += 1;
                    diff[p + 1] -= 1;
                }
                _ => stack.push((l, p)),
            }
        }
        let (mut lo, mut hi) = (0, stack.len());
        while cyclic && hi - lo >= 2 && stack[lo].0 == stack[hi - 1].0.inverse() {
            lo += 1;
            hi -= 1;
        }
        if hi == lo {
            return vec![false; n];
        }
        let wrap = (lo > 0).then(|| (stack[lo - 1].1, stack[hi].1));
        let mut pre = vec![0i32; len + 1];
        let mut run = 0;
        for (p, x) in pre.iter_mut().enumerate() {
            run += diff[p];
            *x = run;
        }
        let survivors: Vec<usize> = stack[lo..hi].iter().map(|&(_, p)| p).collect();
        let k = survivors.len();
        let new_turn = |p: usize| -> Option<usize> {
            if pre[p] > 0 {
                return None;
            }
            if let Some((left, right)) = wrap {
                if p <= left || p > right {
                    return None;
                }
            }
            Some(survivors.partition_point(|&s| s < p) % k)
        };
        for t in track.iter_mut() {
            *t = t.and_then(|t| new_turn(jpos[t]));
        }
        cur = stack[lo..hi].iter().map(|&(l, _)| l).collect();
    }
    track.iter().map(Option::is_some).collect()
}

pub fn goodness(f: &GraphMap, ls: &LegalStructure, units: &UnitInventory, c: &CyclicWord) -> GoodnessReport {
    goodness_at_depth(f, ls, units, c, DEFAULT_DEPTH)
}

/// Maximal edge splitting of a circuit.
///
/// Split points are legal turns that stay unstraddled by cancellation for
/// `depth` iterates. A piece between split points is good when it is an
/// inventory unit; units may also span several split points. The cover
/// maximizing good length is found by dynamic programming.
pub fn goodness_at_depth(
    f: &GraphMap,
    ls: &LegalStructure,
    units: &UnitInventory,
    c: &CyclicWord,
    depth: usize,
) -> GoodnessReport {
    let letters = c.letters();
    let n = letters.len();
    let stable = stable_turns(f, letters, depth);
    let cuts: Vec<usize> = (0..n)
        .filter(|&i| stable[i] && ls.is_turn_legal(letters[(i + n - 1) % n].inverse(), letters[i]))
        .collect();
    let mut ext = letters.to_vec();
    ext.extend_from_slice(letters);
    let pieces = if cuts.is_empty() {
        let whole = (n <= units.max_unit_len())
            .then(|| (0..n).find(|&s| units.find(&ext[s..s + n]).is_some()))
            .flatten();
        vec![Piece {
            start: whole.unwrap_or(0),
            len: n,
            good: whole.is_some(),
        }]
    } else {
        best_split(&ext, n, &cuts, units)
    };
    report(letters, pieces, depth, units)
}

fn report(letters: &[Letter], pieces: Vec<Piece>, depth: usize, units: &UnitInventory) -> GoodnessReport {
    let n = letters.len();
    let good_length: usize = pieces.iter().filter(|p| p.good).map(|p| p.len).sum();
    GoodnessReport {
        circuit: letters.to_vec(),
        pieces,
        goodness: if n == 0 { 1.0 } else { good_length as f64 / n as f64 },
        good_length,
        bad_length: n - good_length,
        depth,
        inventory_complete: units.is_complete(),
    }
}

fn best_split(ext: &[Letter], n: usize, cuts: &[usize], units: &UnitInventory) -> Vec<Piece> {
    // some optimal boundary lies within one unit length of the first cut
    let reach = units.max_unit_len().max(1);
    let mut best: Option<(usize, Vec<Piece>)> = None;
    for s in 0..cuts.len() {
        if s > 0 && cuts[s] - cuts[0] >= reach {
            break;
        }
        let (good, pieces) = split_from(ext, n, cuts, s, units);
        let done = good == n;
        if best.as_ref().is_none_or(|b| good > b.0) {
            best = Some((good, pieces));
        }
        if done {
            break;
        }
    }
    best.expect("at least one cut").1
}

fn split_from(ext: &[Letter], n: usize, cuts: &[usize], s: usize, units: &UnitInventory) -> (usize, Vec<Piece>) {
    let k = cuts.len();
    let q: Vec<usize> = (0..=k)
        .map(|i| cuts[(s + i) % k] + if s + i >= k { n } else { 0 })
        .collect();
    split_points(ext, n, &q, units)
}

/// Best cover of `seq[q[0]..q[last]]` by pieces between split points `q`.
/// Piece starts are reported modulo `n`.
fn split_points(seq: &[Letter], n: usize, q: &[usize], units: &UnitInventory) -> (usize, Vec<Piece>) {
    let k = q.len() - 1;
    let maxu = units.max_unit_len();
    // dp[i] = (good length, previous index, good) covering q[0]..q[i]
    let mut dp: Vec<Option<(usize, usize, bool)>> = vec![None; k + 1];
    dp[0] = Some((0, 0, false));
    let unit_at = |start: usize, len: usize| len <= maxu && units.find(&seq[start..start + len]).is_some();
    for i in 0..k {
        let Some((g, _, _)) = dp[i] else { continue };
        let mut relax = |j: usize, val: usize, good: bool| {
            if dp[j].is_none_or(|d| val > d.0) {
                dp[j] = Some((val, i, good));
            }
        };
        let len = q[i + 1] - q[i];
        let good = unit_at(q[i], len);
        relax(i + 1, g + if good { len } else { 0 }, good);
        for &l in units.lengths() {
            if l <= len || q[i] + l > q[k] {
                continue;
            }
            if let Ok(j) = q.binary_search(&(q[i] + l)) {
                if unit_at(q[i], l) {
                    relax(j, g + l, true);
                }
            }
        }
    }
    let mut raw = Vec::new();
    let mut j = k;
    while j > 0 {
        let (_, i, good) = dp[j].expect("every index is reachable");
        raw.push(Piece {
            start: q[i] % n,
            len: q[j] - q[i],
            good,
        });
        j = i;
    }
    raw.reverse();
    let mut pieces: Vec<Piece> = Vec::with_capacity(raw.len());
    for p in raw {
        match pieces.last_mut() {
            Some(last) if last.good == p.good => last.len += p.len,
            _ => pieces.push(p),
        }
    }
    (dp[k].expect("end reachable").0, pieces)
}

/// Goodness of an edge path: its ends always count as split points.
pub fn path_goodness(
    f: &GraphMap,
    ls: &LegalStructure,
    units: &UnitInventory,
    p: &[Letter],
    depth: usize,
) -> GoodnessReport {
    let n = p.len();
    if n == 0 {
        return report(p, Vec::new(), depth, units);
    }
    let stable = stable_path_junctions(f, p, depth);
    let mut q = vec![0];
    q.extend((1..n).filter(|&i| stable[i] && ls.is_turn_legal(p[i - 1].inverse(), p[i])));
    q.push(n);
    let (_, pieces) = split_points(p, n, &q, units);
    report(p, pieces, depth, units)
}

/// Lower bound on goodness from the radius argument: every edge farther
/// than `radius` from an illegal turn is good, so at most `2·radius` edges
/// per illegal turn are bad.
pub fn radius_lower_bound(c: &CyclicWord, ls: &LegalStructure, radius: usize) -> f64 {
    let l = c.letters();
    let n = l.len();
    let illegal = (0..n)
        .filter(|&i| !ls.is_turn_legal(l[(i + n - 1) % n].inverse(), l[i]))
        .count();
    (n as f64 - (2 * radius * illegal) as f64).max(0.0) / n as f64
}

// ---------------------------------------------------------------------------
// Sampling

/// Closed nonbacktracking walk of roughly `len` edges, cyclically tightened.
/// On a rose this is a uniform reduced word, then cyclically reduced.
pub fn random_circuit(g: &MarkedGraph, len: usize, rng: &mut impl Rng) -> CyclicWord {
    let dirs: Vec<Letter> = g.directions().collect();
    loop {
        let mut walk: Vec<Letter> = Vec::with_capacity(len + g.vertex_count());
        let mut cur = dirs[rng.gen_range(0..dirs.len())];
        walk.push(cur);
        while walk.len() < len.max(1) {
            let v = g.terminus(cur);
            let opts: Vec<Letter> = g.directions_at(v).into_iter().filter(|&d| d != cur.inverse()).collect();
            if opts.is_empty() {
                break;
            }
            cur = opts[rng.gen_range(0..opts.len())];
            walk.push(cur);
        }
        walk.extend(return_path(g, g.terminus(cur), g.origin(walk[0])));
        let core = cyclic_core(&walk);
        if let Ok(c) = CyclicWord::new(&core) {
            return c;
        }
    }
}

fn return_path(g: &MarkedGraph, from: usize, to: usize) -> EdgePath {
    if from == to {
        return Vec::new();
    }
    let mut prev: Vec<Option<Letter>> = vec![None; g.vertex_count()];
    let mut seen = vec![false; g.vertex_count()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for d in g.directions_at(v) {
            let w = g.terminus(d);
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some(d);
                queue.push_back(w);
            }
        }
    }
    let mut path = Vec::new();
    let mut v = to;
    while v != from {
        let d = prev[v].expect("graph is connected");
        path.push(d);
        v = g.origin(d);
    }
    path.reverse();
    path
}

/// `count` circuits with target lengths uniform in `1..=max_len`.
pub fn sample_circuits(g: &MarkedGraph, count: usize, max_len: usize, seed: u64) -> Vec<CyclicWord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.gen_range(1..=max_len.max(1));
            random_circuit(g, len, &mut rng)
        })
        .collect()
}

/// Spot-checks `f_inv ∘ f` and `f ∘ f_inv` on seeded circuits.
pub fn check_inverse_pair(f: &GraphMap, f_inv: &GraphMap, samples: usize, seed: u64) -> Result<()> {
    if f.graph() != f_inv.graph() {
        return Err(Error::InvalidArgument("inverse pair must live on one graph".into()));
    }
    for c in sample_circuits(f.graph(), samples, 8, seed) {
        for (a, b) in [(f, f_inv), (f_inv, f)] {
            let back = b.map_circuit(&a.map_circuit(&c)?)?;
            if back != c {
                return Err(Error::NotInversePair(f.graph().format_path(c.letters())));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Context shared by the experiments

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOptions {
    pub order: usize,
    pub depth: usize,
    pub budget: usize,
    /// Raise both maps to the least power where expanding units grow by
    /// `2(2Z+1)`.
    pub auto_power: bool,
    pub simplex: SimplexOptions,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            order: crate::currents::DEFAULT_ORDER,
            depth: DEFAULT_DEPTH,
            budget: DEFAULT_ORBIT_BUDGET,
            auto_power: true,
            simplex: SimplexOptions::default(),
        }
    }
}

/// Everything the experiments need about one direction of iteration.
#[derive(Clone, Debug)]
pub struct Side {
    pub map: GraphMap,
    pub filtration: Filtration,
    pub legal: LegalStructure,
    pub units: UnitInventory,
    pub bcc: usize,
    /// `Δ₊` for the forward side, `Δ₋` for the backward side.
    pub simplex: Simplex,
}

impl Side {
    fn build(map: GraphMap, forward: bool, opts: &DynamicsOptions) -> Result<Side> {
        let filtration = invariant_filtration(&map)?;
        let legal = gates(&map);
        let units = UnitInventory::build(&map, &filtration, &opts.simplex.inventory);
        let bcc = bcc_constant(&map, BCC_RADIUS_CAP)?;
        let simplex = if forward {
            attracting_simplex_with(&map, opts.order, &opts.simplex)?
        } else {
            repelling_simplex_with(&map, opts.order, &opts.simplex)?
        };
        Ok(Side {
            map,
            filtration,
            legal,
            units,
            bcc,
            simplex,
        })
    }

    /// `C = max{C_f, 2Z+1}`.
    pub fn c_constant(&self) -> usize {
        self.bcc.max(2 * self.units.z() + 1)
    }

    pub fn goodness(&self, c: &CyclicWord, depth: usize) -> GoodnessReport {
        goodness_at_depth(&self.map, &self.legal, &self.units, c, depth)
    }

    /// Normalized distance to this side's simplex; `None` when it has no
    /// points (no EG stratum).
    pub fn distance(&self, c: &CyclicWord, order: usize) -> Result<Option<f64>> {
        if self.simplex.points.is_empty() {
            return Ok(None);
        }
        let mu = freq_vector(self.map.graph(), c, order).normalized();
        simplex_distance(&mu, &self.simplex).map(Some)
    }
}

#[derive(Clone, Debug)]
pub struct Dynamics {
    pub forward: Side,
    pub backward: Side,
    /// Power of the supplied maps actually iterated.
    pub power: usize,
    pub options: DynamicsOptions,
}

impl Dynamics {
    pub fn new(f: &GraphMap, f_inv: &GraphMap, options: DynamicsOptions) -> Result<Dynamics> {
        check_inverse_pair(f, f_inv, 16, 0)?;
        let mut power = 1;
        if options.auto_power {
            for m in [f, f_inv] {
                let filt = invariant_filtration(m)?;
                let units = UnitInventory::build(m, &filt, &options.simplex.inventory);
                power = power.max(expansion_power(m, &filt, &units, POWER_CAP)?);
            }
        }
        Ok(Dynamics {
            forward: Side::build(f.power(power)?, true, &options)?,
            backward: Side::build(f_inv.power(power)?, false, &options)?,
            power,
            options,
        })
    }

    pub fn graph(&self) -> &MarkedGraph {
        self.forward.map.graph()
    }

    /// Restricts both inventories to edges, dropping Nielsen and connecting
    /// units.
    pub fn with_inventory_options(mut self, inv: InventoryOptions) -> Dynamics {
        self.forward.units = UnitInventory::build(&self.forward.map, &self.forward.filtration, &inv);
        self.backward.units = UnitInventory::build(&self.backward.map, &self.backward.filtration, &inv);
        self
    }
}

// ---------------------------------------------------------------------------
// Orbits

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitOptions {
    pub n_max: usize,
    pub epsilon: f64,
    /// Record goodness at every step (costly on long circuits).
    pub goodness: bool,
    /// Stop once either direction is within `epsilon`.
    pub stop_at_hit: bool,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            n_max: 25,
            epsilon: DEFAULT_EPSILON,
            goodness: false,
            stop_at_hit: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitStep {
    pub n: usize,
    pub forward_length: Option<usize>,
    pub forward_goodness: Option<f64>,
    pub forward_distance: Option<f64>,
    pub backward_length: Option<usize>,
    pub backward_goodness: Option<f64>,
    pub backward_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub word: String,
    pub order: usize,
    pub n_max: usize,
    pub power: usize,
    pub epsilon: f64,
    pub steps: Vec<OrbitStep>,
    pub forward_hit: Option<usize>,
    pub backward_hit: Option<usize>,
    /// The class is fixed by the forward (backward) map.
    pub fixed_forward: bool,
    pub fixed_backward: bool,
    /// Some direction stopped at the symbol budget.
    pub capped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl OrbitReport {
    pub fn converged(&self) -> bool {
        self.forward_hit.is_some() || self.backward_hit.is_some()
    }

    /// The direction that got within `epsilon` first, with its step.
    pub fn achieved(&self) -> Option<(Direction, usize)> {
        match (self.forward_hit, self.backward_hit) {
            (Some(a), Some(b)) if b < a => Some((Direction::Backward, b)),
            (Some(a), _) => Some((Direction::Forward, a)),
            (None, Some(b)) => Some((Direction::Backward, b)),
            (None, None) => None,
        }
    }

    /// Distances of the achieving direction over the `window` steps ending
    /// at its hit.
    pub fn tail(&self, window: usize) -> Vec<f64> {
        let Some((dir, hit)) = self.achieved() else {
            return Vec::new();
        };
        self.steps[(hit + 1).saturating_sub(window)..=hit]
            .iter()
            .filter_map(|s| match dir {
                Direction::Forward => s.forward_distance,
                Direction::Backward => s.backward_distance,
            })
            .collect()
    }

    pub fn tail_monotone(&self, window: usize) -> bool {
        let t = self.tail(window);
        !t.is_empty() && t.windows(2).all(|w| w[1] <= w[0])
    }
}

struct Track<'a> {
    side: &'a Side,
    cur: Option<CyclicWord>,
    prev: Option<CyclicWord>,
    hit: Option<usize>,
}

impl Track<'_> {
    fn record(
        &mut self,
        n: usize,
        ctx: &Dynamics,
        opts: &OrbitOptions,
    ) -> Result<(Option<usize>, Option<f64>, Option<f64>)> {
        let Some(c) = &self.cur else {
            return Ok((None, None, None));
        };
        let d = self.side.distance(c, ctx.options.order)?;
        if self.hit.is_none() && d.is_some_and(|d| d < opts.epsilon) {
            self.hit = Some(n);
        }
        let g = opts.goodness.then(|| self.side.goodness(c, ctx.options.depth).goodness);
        Ok((Some(c.len()), g, d))
    }

    fn advance(&mut self, budget: usize) -> Result<bool> {
        let Some(c) = self.cur.take() else { return Ok(false) };
        let next = self.side.map.map_circuit(&c)?;
        self.prev = Some(c);
        if next.len() > budget {
            return Ok(true);
        }
        self.cur = Some(next);
        Ok(false)
    }
}

pub fn orbit_report(ctx: &Dynamics, w: &CyclicWord, opts: &OrbitOptions) -> Result<OrbitReport> {
    if w.len() > ctx.options.budget {
        return Err(Error::LengthCap(ctx.options.budget as u64));
    }
    let mut fwd = Track {
        side: &ctx.forward,
        cur: Some(w.clone()),
        prev: None,
        hit: None,
    };
    let mut bwd = Track {
        side: &ctx.backward,
        cur: Some(w.clone()),
        prev: None,
        hit: None,
    };
    let mut steps = Vec::new();
    let mut capped = false;
    let mut fixed = [false, false];
    for n in 0..=opts.n_max {
        let (fl, fg, fd) = fwd.record(n, ctx, opts)?;
        let (bl, bg, bd) = bwd.record(n, ctx, opts)?;
        steps.push(OrbitStep {
            n,
            forward_length: fl,
            forward_goodness: fg,
            forward_distance: fd,
            backward_length: bl,
            backward_goodness: bg,
            backward_distance: bd,
        });
        if n == 1 {
            fixed = [fwd.cur.as_ref() == Some(w), bwd.cur.as_ref() == Some(w)];
        }
        if n == opts.n_max || (opts.stop_at_hit && (fwd.hit.is_some() || bwd.hit.is_some())) {
            break;
        }
        capped |= fwd.advance(ctx.options.budget)?;
        capped |= bwd.advance(ctx.options.budget)?;
        if fwd.cur.is_none() && bwd.cur.is_none() {
            break;
        }
    }
    Ok(OrbitReport {
        word: ctx.graph().format_path(w.letters()),
        order: ctx.options.order,
        n_max: opts.n_max,
        power: ctx.power,
        epsilon: opts.epsilon,
        steps,
        forward_hit: fwd.hit,
        backward_hit: bwd.hit,
        fixed_forward: fixed[0],
        fixed_backward: fixed[1],
        capped,
    })
}

/// Orbit reports for many words in parallel, returned in input order.
pub fn orbit_reports(ctx: &Dynamics, words: &[CyclicWord], opts: &OrbitOptions) -> Vec<Result<OrbitReport>> {
    words.par_iter().map(|w| orbit_report(ctx, w, opts)).collect()
}

// ---------------------------------------------------------------------------
// Goodness dichotomy

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dichotomy {
    ForwardGood {
        t: usize,
        goodness: f64,
    },
    BackwardGood {
        t: usize,
        goodness: f64,
    },
    Undecided {
        t_max: usize,
        forward: Vec<f64>,
        backward: Vec<f64>,
    },
}

impl Dichotomy {
    pub fn is_decided(&self) -> bool {
        !matches!(self, Dichotomy::Undecided { .. })
    }
}

/// Iterates `w` both ways until its forward goodness (for `f`) or backward
/// goodness (for `f⁻¹`) reaches `delta`.
pub fn goodness_dichotomy(ctx: &Dynamics, w: &CyclicWord, delta: f64, t_max: usize) -> Result<Dichotomy> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let depth = ctx.options.depth;
    let budget = ctx.options.budget;
    let (mut fc, mut bc) = (w.clone(), w.clone());
    let (mut fwd, mut bwd) = (Vec::new(), Vec::new());
    for t in 0..=t_max {
        if fc.len() > budget || bc.len() > budget {
            return Err(Error::LengthCap(budget as u64));
        }
        let g = ctx.forward.goodness(&fc, depth).goodness;
        if g >= delta {
            return Ok(Dichotomy::ForwardGood { t, goodness: g });
        }
        let h = ctx.backward.goodness(&bc, depth).goodness;
        if h >= delta {
            return Ok(Dichotomy::BackwardGood { t, goodness: h });
        }
        fwd.push(g);
        bwd.push(h);
        if t < t_max {
            fc = ctx.forward.map.map_circuit(&fc)?;
            bc = ctx.backward.map.map_circuit(&bc)?;
        }
    }
    Ok(Dichotomy::Undecided {
        t_max,
        forward: fwd,
        backward: bwd,
    })
}

// ---------------------------------------------------------------------------
// Atoroidality

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtoroidalVerdict {
    /// `fᵏ` fixes the circuit: a proof of non-atoroidality.
    NonAtoroidal { witness: EdgePath, power: usize },
    /// Only a report on the bounded search.
    NoneFoundUpTo { max_len: usize, max_pow: usize },
}

impl AtoroidalVerdict {
    pub fn is_non_atoroidal(&self) -> bool {
        matches!(self, AtoroidalVerdict::NonAtoroidal { .. })
    }
}

fn periodic_power(f: &GraphMap, c: &CyclicWord, max_pow: usize) -> Option<usize> {
    let mut cur = c.letters().to_vec();
    for k in 1..=max_pow {
        cur = cyclic_core(&f.apply(&cur));
        if cur.len() == c.len() && CyclicWord::new(&cur).as_ref() == Ok(c) {
            return Some(k);
        }
    }
    None
}

pub fn atoroidal_scan(f: &GraphMap, max_len: usize, max_pow: usize) -> AtoroidalVerdict {
    atoroidal_scan_with(f, max_len, max_pow, max_len.min(6))
}

/// Closed Nielsen paths up to `nielsen_len` are tried first, then every
/// circuit up to `max_len` (one per rotation and orientation class) against
/// `f, …, f^max_pow`.
pub fn atoroidal_scan_with(f: &GraphMap, max_len: usize, max_pow: usize, nielsen_len: usize) -> AtoroidalVerdict {
    let g = f.graph();
    for p in nielsen_search(f, nielsen_len).closed(g) {
        if let Ok(c) = CyclicWord::new(&cyclic_core(&p)) {
            if let Some(k) = periodic_power(f, &c, max_pow) {
                return AtoroidalVerdict::NonAtoroidal {
                    witness: c.letters().to_vec(),
                    power: k,
                };
            }
        }
    }
    let circuits = enumerate_circuits(g, max_len);
    let found = circuits
        .par_iter()
        .map(|c| periodic_power(f, c, max_pow).map(|k| (c.clone(), k)))
        .find_first(Option::is_some)
        .flatten();
    match found {
        Some((c, k)) => AtoroidalVerdict::NonAtoroidal {
            witness: c.letters().to_vec(),
            power: k,
        },
        None => AtoroidalVerdict::NoneFoundUpTo { max_len, max_pow },
    }
}

/// Circuits of length `≤ max_len`, one per unoriented rotation class,
/// shortest first.
pub fn enumerate_circuits(g: &MarkedGraph, max_len: usize) -> Vec<CyclicWord> {
    let mut out = Vec::new();
    let dirs: Vec<Letter> = g.directions().collect();
    for &first in &dirs {
        let mut path = vec![first];
        extend_circuits(g, first, &mut path, max_len, &mut out);
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn extend_circuits(g: &MarkedGraph, first: Letter, path: &mut Vec<Letter>, max_len: usize, out: &mut Vec<CyclicWord>) {
    let last = *path.last().expect("nonempty");
    let end = g.terminus(last);
    if end == g.origin(first) && (path.len() == 1 || last != first.inverse()) && least_rotation(path) == 0 {
        if let Ok(c) = CyclicWord::new(path) {
            if c.letters() == path.as_slice() && c <= c.inverse() {
                out.push(c);
            }
        }
    }
    if path.len() == max_len {
        return;
    }
    // the least rotation starts with its smallest letter
    for d in g.directions_at(end) {
        if d < first || d == last.inverse() {
            continue;
        }
        path.push(d);
        extend_circuits(g, first, path, max_len, out);
        path.pop();
    }
}

// ---------------------------------------------------------------------------
// Independence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub independent: bool,
    pub tolerance: f64,
    /// `(A+,B+), (A+,B−), (A−,B+), (A−,B−)`.
    pub distances: [f64; 4],
}

/// Smallest distance from an extremal point of one simplex to the other,
/// taken in both directions.
pub fn simplex_gap(s: &Simplex, t: &Simplex) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (a, b) in [(s, t), (t, s)] {
        for p in &a.points {
            best = best.min(simplex_distance(&p.normalized(), b)?);
        }
    }
    Ok(best)
}

/// Empty simplices (maps without an EG stratum) are never independent.
pub fn independence_check(a: (&Simplex, &Simplex), b: (&Simplex, &Simplex), tol: f64) -> Result<IndependenceReport> {
    let nonempty = [a.0, a.1, b.0, b.1].iter().all(|s| !s.points.is_empty());
    let distances = [
        simplex_gap(a.0, b.0)?,
        simplex_gap(a.0, b.1)?,
        simplex_gap(a.1, b.0)?,
        simplex_gap(a.1, b.1)?,
    ];
    Ok(IndependenceReport {
        independent: nonempty && distances.iter().all(|&d| d > tol),
        tolerance: tol,
        distances,
    })
}

// ---------------------------------------------------------------------------
// Flaring

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlareSample {
    pub word: String,
    pub length: usize,
    /// `|φⁿw|, |φ⁻ⁿw|, |ψᵐw|, |ψ⁻ᵐw|` over `|w|`. A ratio that was
    /// certified early by the Lipschitz bound is that lower bound.
    pub ratios: [f64; 4],
    pub passing: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlareCertificate {
    pub n: usize,
    pub m: usize,
    pub growth: f64,
    pub samples: Vec<FlareSample>,
    pub verdict: bool,
    /// First failing sample.
    pub witness: Option<usize>,
}

/// Two automorphisms as inverse pairs of graph maps on a common graph.
#[derive(Clone, Copy, Debug)]
pub struct FlarePair<'a> {
    pub f: &'a GraphMap,
    pub f_inv: &'a GraphMap,
    pub h: &'a GraphMap,
    pub h_inv: &'a GraphMap,
}

/// `|fᵏ(c)| / |c|`, stopping once `|fʲ(c)| / Lip(f⁻¹)^{k−j}` already
/// guarantees the threshold.
fn growth_ratio(f: &GraphMap, inv_lip: usize, c: &CyclicWord, k: usize, growth: f64, budget: usize) -> Result<f64> {
    let base = c.len() as f64;
    let mut cur = c.letters().to_vec();
    for j in 1..=k {
        cur = cyclic_core(&f.apply(&cur));
        if cur.is_empty() {
            return Err(Error::TrivialImage);
        }
        if cur.len() > budget {
            return Err(Error::LengthCap(budget as u64));
        }
        let shrink = (inv_lip as f64).powi((k - j) as i32);
        let bound = cur.len() as f64 / shrink / base;
        if j < k && bound >= growth {
            return Ok(bound);
        }
    }
    Ok(cur.len() as f64 / base)
}

pub fn flare_check(
    pair: FlarePair<'_>,
    n: usize,
    m: usize,
    samples: &[CyclicWord],
    growth: f64,
    budget: usize,
) -> Result<FlareCertificate> {
    if samples.is_empty() || n == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "flare check needs samples and positive exponents".into(),
        ));
    }
    let maps = [
        (pair.f, pair.f_inv.lipschitz(), n),
        (pair.f_inv, pair.f.lipschitz(), n),
        (pair.h, pair.h_inv.lipschitz(), m),
        (pair.h_inv, pair.h.lipschitz(), m),
    ];
    let rows: Result<Vec<FlareSample>> = samples
        .par_iter()
        .map(|c| {
            let mut ratios = [0.0; 4];
            for (r, &(map, lip, k)) in ratios.iter_mut().zip(&maps) {
                *r = growth_ratio(map, lip, c, k, growth, budget)?;
            }
            let passing = ratios.iter().filter(|&&r| r >= growth).count();
            Ok(FlareSample {
                word: pair.f.graph().format_path(c.letters()),
                length: c.len(),
                ratios,
                passing,
                ok: passing >= 3,
            })
        })
        .collect();
    let samples = rows?;
    let witness = samples.iter().position(|s| !s.ok);
    Ok(FlareCertificate {
        n,
        m,
        growth,
        verdict: witness.is_none(),
        samples,
        witness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Escalation {
    Found(FlareCertificate),
    /// Last certificate tried, or `None` when the symbol budget stopped the
    /// search first.
    Failure {
        n: usize,
        m: usize,
        certificate: Option<FlareCertificate>,
        reason: String,
    },
}

/// Doubles a common exponent until the flare rule holds, then bisects the
/// common exponent, `n`, and `m` in turn.
pub fn escalate_exponents(
    pair: FlarePair<'_>,
    samples: &[CyclicWord],
    growth: f64,
    cap: usize,
    budget: usize,
) -> Result<Escalation> {
    if cap == 0 {
        return Err(Error::InvalidArgument("cap must be at least 1".into()));
    }
    let check = |n: usize, m: usize| -> Result<Option<FlareCertificate>> {
        match flare_check(pair, n, m, samples, growth, budget) {
            Ok(c) => Ok(Some(c)),
            Err(Error::LengthCap(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut k = 1;
    let mut below = 0;
    let mut best = loop {
        match check(k, k)? {
            Some(c) if c.verdict => break c,
            Some(c) if k >= cap => {
                return Ok(Escalation::Failure {
                    n: k,
                    m: k,
                    certificate: Some(c),
                    reason: format!("no passing exponent up to {cap}"),
                })
            }
            None => {
                return Ok(Escalation::Failure {
                    n: k,
                    m: k,
                    certificate: None,
                    reason: format!("symbol budget {budget} exceeded at exponent {k}"),
                })
            }
            Some(_) => {
                below = k;
                k = (2 * k).min(cap);
            }
        }
    };
    let passes = |n: usize, m: usize| -> Result<Option<FlareCertificate>> { Ok(check(n, m)?.filter(|c| c.verdict)) };
    let (mut lo, mut hi) = (below, k);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        match passes(mid, mid)? {
            Some(c) => {
                hi = mid;
                best = c;
            }
            None => lo = mid,
        }
    }
    let (mut lo, mut hi) = (0, best.n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        match passes(mid, best.m)? {
            Some(c) => {
                hi = mid;
                best = c;
            }
            None => lo = mid,
        }
    }
    let (mut lo, mut hi) = (0, best.m);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        match passes(best.n, mid)? {
            Some(c) => {
                hi = mid;
                best = c;
            }
            None => lo = mid,
        }
    }
    Ok(Escalation::Found(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_group::{Automorphism, Word};

    fn w(s: &str) -> Word {
        Word::parse_compact(s).unwrap()
    }

    fn cyc(s: &str) -> CyclicWord {
        CyclicWord::parse_compact(s).unwrap()
    }

    /// a→ab, b→bc, c→cab: the cube of a→b, b→c, c→ab.
    fn candidate() -> (GraphMap, GraphMap) {
        let phi = Automorphism::new(vec![w("b"), w("c"), w("ab")])
            .unwrap()
            .with_inverse(vec![w("cA"), w("a"), w("b")])
            .unwrap()
            .power(3);
        let inv = phi.inverse().unwrap();
        (GraphMap::from_automorphism(&phi), GraphMap::from_automorphism(&inv))
    }

    fn surface() -> (GraphMap, GraphMap) {
        let phi = Automorphism::new(vec![w("ab"), w("bab"), w("cabAB")])
            .unwrap()
            .with_inverse(vec![w("aaB"), w("bA"), w("cbaBA")])
            .unwrap();
        let inv = phi.inverse().unwrap();
        (GraphMap::from_automorphism(&phi), GraphMap::from_automorphism(&inv))
    }

    fn linear() -> (GraphMap, GraphMap) {
        let phi = Automorphism::new(vec![w("a"), w("ab"), w("c")])
            .unwrap()
            .with_inverse(vec![w("a"), w("Ab"), w("c")])
            .unwrap();
        let inv = phi.inverse().unwrap();
        (GraphMap::from_automorphism(&phi), GraphMap::from_automorphism(&inv))
    }

    fn side_parts(f: &GraphMap) -> (LegalStructure, UnitInventory) {
        let filt = invariant_filtration(f).unwrap();
        (gates(f), UnitInventory::build(f, &filt, &InventoryOptions::default()))
    }

    #[test]
    fn legal_circuit_is_good() {
        let (f, _) = candidate();
        let (ls, units) = side_parts(&f);
        // the image of a legal circuit is legal
        let c = f.map_circuit(&f.map_circuit(&cyc("abc")).unwrap()).unwrap();
        let r = goodness(&f, &ls, &units, &c);
        assert_eq!(r.goodness, 1.0);
        assert_eq!(r.bad_length, 0);
    }

    #[test]
    fn units_score_one() {
        for (f, _) in [candidate(), surface(), linear()] {
            let (ls, units) = side_parts(&f);
            for u in units.units() {
                assert_eq!(path_goodness(&f, &ls, &units, &u.path, 3).goodness, 1.0, "{:?}", u.path);
            }
        }
    }

    #[test]
    fn legal_path_and_empty_inventory() {
        let (f, _) = candidate();
        let (ls, units) = side_parts(&f);
        // every turn of abc is legal for a→ab, b→bc, c→cab
        let r = path_goodness(&f, &ls, &units, &Word::parse_compact("abc").unwrap().into_letters(), 3);
        assert_eq!(r.goodness, 1.0);
        let r = path_goodness(
            &f,
            &ls,
            &UnitInventory::empty(),
            &Word::parse_compact("ab").unwrap().into_letters(),
            3,
        );
        assert_eq!(r.goodness, 0.0);
    }

    #[test]
    fn empty_inventory_scores_zero() {
        let (f, _) = candidate();
        let (ls, _) = side_parts(&f);
        let r = goodness(&f, &ls, &UnitInventory::empty(), &cyc("abcAbC"));
        assert_eq!(r.goodness, 0.0);
    }

    #[test]
    fn pieces_concatenate_to_a_rotation() {
        let (f, _) = candidate();
        let (ls, units) = side_parts(&f);
        for c in sample_circuits(f.graph(), 50, 30, 7) {
            let r = goodness(&f, &ls, &units, &c);
            let joined: Vec<Letter> = r.subpaths().into_iter().flat_map(|(p, _)| p).collect();
            assert_eq!(CyclicWord::new(&joined).unwrap(), c);
            assert_eq!(r.good_length + r.bad_length, c.len());
            assert!((0.0..=1.0).contains(&r.goodness));
        }
    }

    #[test]
    fn illegal_turn_respects_radius_bound() {
        let (f, _) = candidate();
        let (ls, units) = side_parts(&f);
        let radius = f
            .lipschitz()
            .max(bcc_constant(&f, BCC_RADIUS_CAP).unwrap())
            .max(2 * units.z() + 1);
        for c in sample_circuits(f.graph(), 100, 30, 11) {
            let r = goodness(&f, &ls, &units, &c);
            assert!(r.goodness + 1e-12 >= radius_lower_bound(&c, &ls, radius), "{c:?}");
        }
    }

    #[test]
    fn stable_turns_of_fixed_circuit() {
        // abAB is fixed but every turn of it cancels under the surface map
        let (f, _) = surface();
        let st = stable_turns(&f, cyc("abAB").letters(), 1);
        assert_eq!(st.len(), 4);
        let (ls, units) = side_parts(&f);
        let r = goodness(&f, &ls, &units, &cyc("abAB"));
        assert_eq!(r.goodness, 1.0, "closed Nielsen path is a unit");
    }

    #[test]
    fn orbit_zero_steps() {
        let (f, fi) = candidate();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default()).unwrap();
        let r = orbit_report(
            &ctx,
            &cyc("abC"),
            &OrbitOptions {
                n_max: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].forward_length, Some(3));
    }

    #[test]
    fn fixed_class_does_not_converge() {
        let (f, fi) = linear();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default()).unwrap();
        let r = orbit_report(
            &ctx,
            &cyc("ac"),
            &OrbitOptions {
                n_max: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.fixed_forward && r.fixed_backward);
        assert!(r.steps.iter().all(|s| s.forward_length == Some(2)));
        assert!(!r.converged());
    }

    #[test]
    fn dichotomy_branches() {
        let (f, fi) = candidate();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default()).unwrap();
        let good = ctx.forward.map.map_circuit(&cyc("abc")).unwrap();
        assert!(matches!(
            goodness_dichotomy(&ctx, &good, 0.5, 5).unwrap(),
            Dichotomy::ForwardGood { t: 0, .. }
        ));
        let mut back = cyc("abc");
        for _ in 0..4 {
            back = ctx.backward.map.map_circuit(&back).unwrap();
        }
        assert!(matches!(
            goodness_dichotomy(&ctx, &back, 0.5, 5).unwrap(),
            Dichotomy::BackwardGood { .. }
        ));
        assert!(goodness_dichotomy(&ctx, &good, 1.5, 5).is_err());
    }

    #[test]
    fn fixed_nielsen_circuit_is_undecided_without_nielsen_units() {
        let (f, fi) = surface();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default())
            .unwrap()
            .with_inventory_options(InventoryOptions {
                include_nielsen: false,
                ..Default::default()
            });
        let d = goodness_dichotomy(&ctx, &cyc("abAB"), 0.5, 10).unwrap();
        match d {
            Dichotomy::Undecided { forward, backward, .. } => {
                assert_eq!(forward.len(), 11);
                assert!(forward.windows(2).all(|x| x[0] == x[1]));
                assert!(backward.windows(2).all(|x| x[0] == x[1]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scan_finds_fixed_letter() {
        let (f, _) = linear();
        assert_eq!(
            atoroidal_scan(&f, 4, 2),
            AtoroidalVerdict::NonAtoroidal {
                witness: vec![Letter::positive(0)],
                power: 1
            }
        );
    }

    #[test]
    fn scan_uses_closed_nielsen_paths() {
        let (f, _) = surface();
        match atoroidal_scan(&f, 4, 1) {
            AtoroidalVerdict::NonAtoroidal { witness, power } => {
                assert_eq!(power, 1);
                let c = CyclicWord::new(&witness).unwrap();
                assert_eq!(c.len(), 4);
                assert_eq!(f.map_circuit(&c).unwrap(), c);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn circuit_enumeration_counts() {
        // rank 1: a, aa, aaa up to orientation
        let g = MarkedGraph::rose(1);
        assert_eq!(enumerate_circuits(&g, 3).len(), 3);
        // rank 2 length 2 classes: aa, ab, aB, bb (and inverses identified)
        let g = MarkedGraph::rose(2);
        let two: Vec<_> = enumerate_circuits(&g, 2).into_iter().filter(|c| c.len() == 2).collect();
        assert_eq!(two.len(), 4);
    }

    #[test]
    fn self_pair_is_not_independent() {
        let (f, fi) = candidate();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default()).unwrap();
        let s = (&ctx.forward.simplex, &ctx.backward.simplex);
        let r = independence_check(s, s, DEFAULT_TOL).unwrap();
        assert!(!r.independent);
        assert!(!independence_check(s, s, f64::INFINITY).unwrap().independent);
    }

    #[test]
    fn empty_simplices_are_not_independent() {
        let (f, fi) = linear();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default()).unwrap();
        assert!(ctx.forward.simplex.points.is_empty());
        let s = (&ctx.forward.simplex, &ctx.backward.simplex);
        assert!(!independence_check(s, s, DEFAULT_TOL).unwrap().independent);
    }

    #[test]
    fn fixed_sample_does_not_flare() {
        let (f, fi) = linear();
        let pair = FlarePair {
            f: &f,
            f_inv: &fi,
            h: &f,
            h_inv: &fi,
        };
        let cert = flare_check(pair, 3, 3, &[cyc("a"), cyc("bc")], 2.0, 1000).unwrap();
        assert!(!cert.verdict);
        assert_eq!(cert.witness, Some(0));
        assert_eq!(cert.samples[0].ratios, [1.0; 4]);
    }

    #[test]
    fn sampler_is_deterministic() {
        let g = MarkedGraph::rose(3);
        assert_eq!(sample_circuits(&g, 20, 10, 5), sample_circuits(&g, 20, 10, 5));
        let g = MarkedGraph::new(2, vec![(0, 0), (0, 1), (1, 1)]).unwrap();
        for c in sample_circuits(&g, 20, 10, 5) {
            g.check_path(c.letters()).unwrap();
            assert!(g.is_closed(c.letters()));
        }
    }

    #[test]
    fn inverse_pair_is_checked() {
        let (f, _) = candidate();
        let (g, _) = surface();
        assert!(matches!(
            check_inverse_pair(&f, &g, 8, 0),
            Err(Error::NotInversePair(_))
        ));
    }
}
