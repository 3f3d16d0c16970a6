//! Splitting units: edges of irreducible strata, indivisible Nielsen paths
//! and taken connecting paths in zero strata, plus the substitution a graph
//! map induces on them.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_group::{inverse_letters, Letter};
use crate::marked_graph::{
    classify_neg_edge, nielsen_search, EdgePath, Filtration, GraphMap, LegalStructure, NegEdgeClass, StratumKind,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitKind {
    /// Edge of an EG or NEG stratum.
    Edge,
    /// Edge of a zero stratum that no taken connecting path covers; kept so
    /// every path parses, and marks the inventory as approximate.
    LooseEdge,
    Nielsen,
    Connecting,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub path: EdgePath,
    pub kind: UnitKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryOptions {
    pub nielsen_max_len: usize,
    /// Iterates of irreducible edges scanned for connecting paths.
    pub connecting_depth: usize,
    pub include_nielsen: bool,
}

impl Default for InventoryOptions {
    fn default() -> Self {
        InventoryOptions {
            nielsen_max_len: 6,
            connecting_depth: 4,
            include_nielsen: true,
        }
    }
}

const CONNECTING_SCAN_LIMIT: usize = 200_000;

/// Both orientations of every unit are stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitInventory {
    units: Vec<Unit>,
    #[serde(skip)]
    lookup: HashMap<EdgePath, usize>,
    lengths: Vec<usize>,
    /// Longest connecting path found.
    pub z_connecting: usize,
    /// Longest Nielsen path found.
    pub z_nielsen: usize,
    pub nielsen_capped: bool,
    pub connecting_capped: bool,
}

impl UnitInventory {
    /// No units at all; every piece is bad.
    pub fn empty() -> Self {
        UnitInventory::default()
    }

    pub fn build(f: &GraphMap, filtration: &Filtration, opts: &InventoryOptions) -> Self {
        let mut inv = UnitInventory::default();
        let g = f.graph();
        let mut covered = vec![false; g.edge_count()];
        for (e, cov) in covered.iter_mut().enumerate() {
            if filtration.kind_of(e) != StratumKind::Zero {
                inv.add(vec![Letter::positive(e)], UnitKind::Edge);
                *cov = true;
            }
        }

        if opts.include_nielsen {
            let ns = nielsen_search(f, opts.nielsen_max_len);
            inv.z_nielsen = ns.longest();
            inv.nielsen_capped = ns.capped();
            for p in ns.indivisible().into_iter().filter(|p| p.len() > 1) {
                inv.add(p, UnitKind::Nielsen);
            }
        }

        let has_zero = filtration.strata.iter().any(|s| s.kind == StratumKind::Zero);
        if has_zero {
            let zero = |l: &Letter| filtration.kind_of(l.index()) == StratumKind::Zero;
            let mut found: BTreeSet<EdgePath> = BTreeSet::new();
            let mut new_at_last = false;
            for e in (0..g.edge_count()).filter(|&e| covered[e]) {
                let mut img = vec![Letter::positive(e)];
                for k in 1..=opts.connecting_depth {
                    img = f.apply(&img);
                    if img.len() > CONNECTING_SCAN_LIMIT {
                        new_at_last = true;
                        break;
                    }
                    let mut i = 0;
                    while i < img.len() {
                        if !zero(&img[i]) {
                            i += 1;
                            continue;
                        }
                        let j = (i..img.len()).find(|&j| !zero(&img[j])).unwrap_or(img.len());
                        let run = canonical(&img[i..j]);
                        if found.insert(run) && k == opts.connecting_depth {
                            new_at_last = true;
                        }
                        i = j;
                    }
                }
            }
            inv.connecting_capped = new_at_last;
            for p in found {
                inv.z_connecting = inv.z_connecting.max(p.len());
                if p.len() == 1 {
                    covered[p[0].index()] = true;
                }
                inv.add(p, UnitKind::Connecting);
            }
        }
        for e in (0..g.edge_count()).filter(|&e| !covered[e]) {
            inv.add(vec![Letter::positive(e)], UnitKind::LooseEdge);
        }
        inv
    }

    /// Only edges of irreducible strata (and loose zero edges).
    pub fn edges_only(f: &GraphMap, filtration: &Filtration) -> Self {
        let opts = InventoryOptions {
            include_nielsen: false,
            connecting_depth: 0,
            ..InventoryOptions::default()
        };
        UnitInventory::build(f, filtration, &opts)
    }

    fn add(&mut self, path: EdgePath, kind: UnitKind) {
        for p in [path.clone(), inverse_letters(&path)] {
            if self.lookup.contains_key(&p) {
                continue;
            }
            self.lookup.insert(p.clone(), self.units.len());
            if !self.lengths.contains(&p.len()) {
                self.lengths.push(p.len());
                self.lengths.sort_unstable_by(|a, b| b.cmp(a));
            }
            self.units.push(Unit { path: p, kind });
        }
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn unit(&self, i: usize) -> &Unit {
        &self.units[i]
    }

    pub fn find(&self, p: &[Letter]) -> Option<usize> {
        self.lookup.get(p).copied()
    }

    /// Distinct unit lengths, longest first.
    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn max_unit_len(&self) -> usize {
        self.lengths.first().copied().unwrap_or(0)
    }

    /// Bound on connecting and Nielsen path lengths.
    pub fn z(&self) -> usize {
        self.z_connecting.max(self.z_nielsen)
    }

    pub fn has_loose_edges(&self) -> bool {
        self.units.iter().any(|u| u.kind == UnitKind::LooseEdge)
    }

    /// Every enumeration finished below its cap.
    pub fn is_complete(&self) -> bool {
        !self.nielsen_capped && !self.connecting_capped && !self.has_loose_edges()
    }

    /// Splits a path into units, minimizing illegal junctions and then the
    /// number of units. Returns `None` when some stretch is not covered.
    pub fn parse(&self, p: &[Letter], ls: &LegalStructure) -> Option<(Vec<usize>, usize)> {
        let n = p.len();
        if n == 0 {
            return Some((Vec::new(), 0));
        }
        // best[i] = (illegal junctions, units, previous cut, unit id) for p[..i]
        let mut best: Vec<Option<(usize, usize, usize, usize)>> = vec![None; n + 1];
        best[0] = Some((0, 0, 0, usize::MAX));
        for i in 0..n {
            let Some((bad, cnt, _, _)) = best[i] else { continue };
            let penalty = usize::from(i > 0 && !ls.is_turn_legal(p[i - 1].inverse(), p[i]));
            for &len in &self.lengths {
                if i + len > n {
                    continue;
                }
                if let Some(u) = self.find(&p[i..i + len]) {
                    let cand = (bad + penalty, cnt + 1, i, u);
                    if best[i + len].is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                        best[i + len] = Some(cand);
                    }
                }
            }
        }
        let (bad, _, _, _) = best[n]?;
        let mut ids = Vec::new();
        let mut i = n;
        while i > 0 {
            let (_, _, prev, u) = best[i].expect("reachable cut");
            ids.push(u);
            i = prev;
        }
        ids.reverse();
        Some((ids, bad))
    }
}

fn canonical(p: &[Letter]) -> EdgePath {
    let inv = inverse_letters(p);
    if inv.as_slice() < p {
        inv
    } else {
        p.to_vec()
    }
}

/// The substitution a graph map induces on splitting units.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSubstitution {
    pub images: Vec<Vec<usize>>,
    /// Illegal junctions summed over all unit images; zero when every image
    /// splits into units along legal turns.
    pub illegal_junctions: usize,
}

pub fn unit_substitution(f: &GraphMap, inv: &UnitInventory, ls: &LegalStructure) -> Result<UnitSubstitution> {
    let mut images = Vec::with_capacity(inv.len());
    let mut illegal = 0;
    for u in inv.units() {
        let img = f.apply(&u.path);
        let (ids, bad) = inv.parse(&img, ls).ok_or(Error::UnverifiedAlphabet)?;
        if ids.is_empty() {
            return Err(Error::TrivialImage);
        }
        illegal += bad;
        images.push(ids);
    }
    Ok(UnitSubstitution {
        images,
        illegal_junctions: illegal,
    })
}

const EXPANSION_LENGTH_CAP: usize = 10_000_000;

/// Least `p ≤ cap` with `|[fᵖ(u)]| > 2(2Z+1)|u|` for every expanding unit:
/// EG edges, superlinear NEG edges, and connecting paths whose images reach
/// an EG stratum.
pub fn expansion_power(f: &GraphMap, filtration: &Filtration, inv: &UnitInventory, cap: usize) -> Result<usize> {
    let factor = 2 * (2 * inv.z() + 1);
    let is_eg = |l: &Letter| filtration.kind_of(l.index()) == StratumKind::Eg;
    let mut expanding: Vec<EdgePath> = Vec::new();
    for u in inv
        .units()
        .iter()
        .filter(|u| u.path[0] <= u.path[u.path.len() - 1].inverse() || u.path.len() == 1)
    {
        let take = match u.kind {
            UnitKind::Edge => {
                let e = u.path[0].index();
                !u.path[0].is_inverse()
                    && match filtration.kind_of(e) {
                        StratumKind::Eg => true,
                        StratumKind::Neg => {
                            matches!(classify_neg_edge(f, filtration, e, 8), Ok(NegEdgeClass::Superlinear))
                        }
                        StratumKind::Zero => false,
                    }
            }
            UnitKind::Connecting => f.apply(&u.path).iter().any(is_eg),
            UnitKind::Nielsen | UnitKind::LooseEdge => false,
        };
        if take {
            expanding.push(u.path.clone());
        }
    }
    if expanding.is_empty() {
        return Ok(1);
    }
    let mut cur = expanding.clone();
    for p in 1..=cap {
        for c in cur.iter_mut() {
            if c.len() <= EXPANSION_LENGTH_CAP {
                *c = f.apply(c);
            }
        }
        if cur.iter().zip(&expanding).all(|(c, u)| c.len() > factor * u.len()) {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence(cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_group::Word;
    use crate::marked_graph::{gates, invariant_filtration, MarkedGraph};

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
    fn fibonacci_inventory_is_edges() {
        let f = rose_map(&["ab", "a"]);
        let filt = invariant_filtration(&f).unwrap();
        let inv = UnitInventory::build(&f, &filt, &InventoryOptions::default());
        assert!(inv.units().iter().all(|u| u.path.len() == 1));
        assert_eq!(inv.len(), 4);
        let ls = gates(&f);
        let us = unit_substitution(&f, &inv, &ls).unwrap();
        assert_eq!(us.illegal_junctions, 0);
        let a = inv.find(&w("a")).unwrap();
        let b = inv.find(&w("b")).unwrap();
        assert_eq!(us.images[a], vec![a, b]);
    }

    #[test]
    fn surface_map_inventory_has_nielsen_unit() {
        let f = rose_map(&["ab", "bab"]);
        let filt = invariant_filtration(&f).unwrap();
        let inv = UnitInventory::build(&f, &filt, &InventoryOptions::default());
        let ls = gates(&f);
        let id = inv.find(&w("abAB")).or_else(|| inv.find(&w("baBA")));
        assert!(
            inv.units().iter().any(|u| u.kind == UnitKind::Nielsen),
            "{:?}",
            inv.units()
        );
        assert!(
            id.is_some()
                || inv
                    .units()
                    .iter()
                    .any(|u| u.kind == UnitKind::Nielsen && u.path.len() == 4)
        );
        // every unit image parses
        unit_substitution(&f, &inv, &ls).unwrap();
    }

    #[test]
    fn parse_prefers_legal_junctions() {
        let f = rose_map(&["ab", "bab"]);
        let filt = invariant_filtration(&f).unwrap();
        let ls = gates(&f);
        let inv = UnitInventory::build(&f, &filt, &InventoryOptions::default());
        let np = inv
            .units()
            .iter()
            .find(|u| u.kind == UnitKind::Nielsen)
            .unwrap()
            .path
            .clone();
        let (ids, _) = inv.parse(&np, &ls).unwrap();
        assert_eq!(ids.len(), 1);
        assert!(UnitInventory::empty().parse(&np, &ls).is_none());
    }

    #[test]
    fn connecting_paths_on_zero_stratum() {
        // loop a at 0, edge b from 0 to 1, loop c at 1; both vertices go to 0,
        // b collapses onto a and c is conjugated around the loop bcB
        let g = MarkedGraph::new(2, vec![(0, 0), (0, 1), (1, 1)]).unwrap();
        let f = GraphMap::new(g, vec![0, 0], vec![w("a"), w("a"), w("bcB")]).unwrap();
        let filt = invariant_filtration(&f).unwrap();
        assert_eq!(filt.kind_of(1), StratumKind::Zero);
        let inv = UnitInventory::build(&f, &filt, &InventoryOptions::default());
        assert_eq!(inv.unit(inv.find(&w("b")).unwrap()).kind, UnitKind::Connecting);
        assert_eq!(inv.z_connecting, 1);
        assert!(!inv.has_loose_edges());
        let edges = UnitInventory::edges_only(&f, &filt);
        assert!(edges.has_loose_edges());
    }

    #[test]
    fn expansion_power_for_plastic_map() {
        let f = rose_map(&["b", "c", "ab"]);
        let filt = invariant_filtration(&f).unwrap();
        let inv = UnitInventory::build(&f, &filt, &InventoryOptions::default());
        let p = expansion_power(&f, &filt, &inv, 32).unwrap();
        let fp = f.power(p).unwrap();
        let factor = 2 * (2 * inv.z() + 1);
        assert!(fp.edge_images().iter().all(|img| img.len() > factor));
        if p > 1 {
            let fq = f.power(p - 1).unwrap();
            assert!(fq.edge_images().iter().any(|img| img.len() <= factor));
        }
    }
}
