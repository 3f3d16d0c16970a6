//! Small dense nonnegative matrices: strongly connected components,
//! Perron–Frobenius data and exact tests on integer power sequences.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type IntMatrix = Vec<Vec<u64>>;

/// Strongly connected components of a digraph given by adjacency lists.
///
/// Components come out in reverse topological order: every component is
/// listed after all components reachable from it.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // explicit DFS frames: (node, next child position)
        let mut frames: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(u, _)) = frames.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

fn support_adjacency(m: &[Vec<u64>]) -> Vec<Vec<usize>> {
    m.iter()
        .map(|row| (0..row.len()).filter(|&j| row[j] > 0).collect())
        .collect()
}

pub fn is_irreducible(m: &[Vec<u64>]) -> bool {
    let n = m.len();
    if n == 0 {
        return false;
    }
    if n == 1 {
        return m[0][0] > 0;
    }
    strongly_connected_components(&support_adjacency(m)).len() == 1
}

fn bool_mul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] {
                for j in 0..n {
                    out[i][j] |= b[k][j];
                }
            }
        }
    }
    out
}

/// Some power strictly positive; tested at the Wielandt exponent `n² − 2n + 2`.
pub fn is_primitive(m: &[Vec<u64>]) -> bool {
    let n = m.len();
    if !is_irreducible(m) {
        return false;
    }
    let exp = n * n - 2 * n + 2;
    let base: Vec<Vec<bool>> = m.iter().map(|r| r.iter().map(|&x| x > 0).collect()).collect();
    // square-and-multiply on boolean matrices
    let mut result: Option<Vec<Vec<bool>>> = None;
    let mut p = base;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => p.clone(),
                Some(r) => bool_mul(&r, &p),
            });
        }
        e >>= 1;
        if e > 0 {
            p = bool_mul(&p, &p);
        }
    }
    result.is_some_and(|r| r.iter().all(|row| row.iter().all(|&x| x)))
}

pub fn int_mul(a: &[Vec<u64>], b: &[Vec<u64>]) -> IntMatrix {
    let n = a.len();
    let p = b.first().map_or(0, |r| r.len());
    let mut out = vec![vec![0u64; p]; n];
    for i in 0..n {
        for k in 0..a[i].len() {
            let x = a[i][k];
            if x == 0 {
                continue;
            }
            for j in 0..p {
                out[i][j] = out[i][j].saturating_add(x.saturating_mul(b[k][j]));
            }
        }
    }
    out
}

/// Whether the entries of `Mᵗ`, `t ≥ 1`, stay bounded.
///
/// Decided by waiting for the power sequence to repeat (bounded integer
/// matrices form a finite set) or for an entry to pass `2^40`.
pub fn powers_bounded(m: &[Vec<u64>], cap: usize) -> Option<bool> {
    let mut seen: HashSet<IntMatrix> = HashSet::new();
    let mut p: IntMatrix = m.to_vec();
    for _ in 0..cap {
        if p.iter().flatten().any(|&x| x > 1 << 40) {
            return Some(false);
        }
        if !seen.insert(p.clone()) {
            return Some(true);
        }
        p = int_mul(&p, m);
    }
    None
}

/// Perron–Frobenius eigenvalue with right and left eigenvectors, each
/// normalized to sum 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfData {
    pub eigenvalue: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

const PF_TOL: f64 = 1e-12;
const PF_MAX_ITER: usize = 2_000_000;

fn normalize_l1(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Power iteration on `I + M`, which shares eigenvectors with `M` and is
/// primitive whenever `M` is irreducible.
fn shifted_power(m: &[Vec<f64>], transpose: bool) -> (f64, Vec<f64>, f64, usize) {
    let n = m.len();
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let a = if transpose { m[j][i] } else { m[i][j] };
                y[i] += a * x[j];
            }
        }
        y
    };
    let mut x = vec![1.0 / n as f64; n];
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut it = 0;
    while it < PF_MAX_ITER {
        it += 1;
        let mx = apply(&x);
        let mut y: Vec<f64> = mx.iter().zip(&x).map(|(a, b)| a + b).collect();
        normalize_l1(&mut y);
        x = y;
        if it % 8 == 0 || it < 8 {
            let mx = apply(&x);
            lambda = mx.iter().sum::<f64>() / x.iter().sum::<f64>();
            residual = mx.iter().zip(&x).map(|(a, b)| (a - lambda * b).abs()).sum::<f64>() / lambda.max(1e-300);
            if residual <= PF_TOL {
                break;
            }
        }
    }
    (lambda, x, residual, it)
}

pub fn pf_data(m: &[Vec<u64>]) -> Result<PfData> {
    if !is_irreducible(m) {
        return Err(Error::NotIrreducible);
    }
    let mf: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
    let (lambda, right, res_r, it_r) = shifted_power(&mf, false);
    let (_, left, res_l, it_l) = shifted_power(&mf, true);
    Ok(PfData {
        eigenvalue: lambda,
        right,
        left,
        residual: res_r.max(res_l),
        iterations: it_r.max(it_l),
    })
}

/// Irreducible integer matrices have PF eigenvalue exactly 1 iff every row
/// sums to 1 (they are then permutation matrices).
pub fn is_permutation_like(m: &[Vec<u64>]) -> bool {
    m.iter().all(|r| r.iter().sum::<u64>() == 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scc_reverse_topological() {
        // 0 -> 1 -> 2 -> 1, 3 isolated
        let adj = vec![vec![1], vec![2], vec![1], vec![]];
        let comps = strongly_connected_components(&adj);
        let pos = |x: usize| comps.iter().position(|c| c.contains(&x)).unwrap();
        assert_eq!(comps.len(), 3);
        assert!(pos(1) < pos(0));
        assert_eq!(comps[pos(1)], vec![1, 2]);
    }

    #[test]
    fn golden_ratio() {
        let pf = pf_data(&[vec![1, 1], vec![1, 0]]).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((pf.eigenvalue - phi).abs() < 1e-10);
        // right eigenvector proportional to (λ, 1)
        assert!((pf.right[0] / pf.right[1] - phi).abs() < 1e-9);
        assert!((pf.right.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plastic_number() {
        let pf = pf_data(&[vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 0]]).unwrap();
        assert!((pf.eigenvalue - 1.324_717_957_244_746).abs() < 1e-10);
    }

    #[test]
    fn permutation_has_unit_eigenvalue() {
        let pf = pf_data(&[vec![0, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).unwrap();
        assert!((pf.eigenvalue - 1.0).abs() < 1e-10);
        assert!(is_permutation_like(&[vec![0, 1], vec![1, 0]]));
    }

    #[test]
    fn reducible_rejected() {
        assert_eq!(pf_data(&[vec![1, 1], vec![0, 1]]), Err(Error::NotIrreducible));
        assert_eq!(pf_data(&[vec![0]]), Err(Error::NotIrreducible));
    }

    #[test]
    fn primitivity() {
        assert!(is_primitive(&[vec![1, 1], vec![1, 0]]));
        assert!(!is_primitive(&[vec![0, 1], vec![1, 0]]));
        assert!(!is_primitive(&[vec![0, 1], vec![2, 0]]));
    }

    #[test]
    fn bounded_powers() {
        assert_eq!(powers_bounded(&[vec![0, 1], vec![1, 0]], 100), Some(true));
        assert_eq!(powers_bounded(&[vec![1, 1], vec![0, 1]], 100), None);
        assert_eq!(powers_bounded(&[vec![1, 1], vec![1, 0]], 100), Some(false));
        assert_eq!(powers_bounded(&[vec![0]], 100), Some(true));
    }
}
