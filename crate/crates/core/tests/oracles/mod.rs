//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use bcast_consensus::graph::Graph;
use bcast_consensus::matrix::DenseMatrix;
use num_complex::Complex64;

/// All unordered pairs `(i, j)`, `i < j`, of `0..n`.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Bitmask adjacency for the edge subset `mask` of `pairs(n)`.
pub fn adjacency_bits(n: usize, pairs: &[(usize, usize)], mask: u64) -> Vec<u32> {
    let mut adj = vec![0u32; n];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if mask >> k & 1 == 1 {
            adj[i] |= 1 << j;
            adj[j] |= 1 << i;
        }
    }
    adj
}

pub fn connected_bits(adj: &[u32]) -> bool {
    let n = adj.len();
    let mut seen = 1u32;
    let mut frontier = 1u32;
    while frontier != 0 {
        let mut next = 0;
        for v in 0..n {
            if frontier >> v & 1 == 1 {
                next |= adj[v];
            }
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen == (1u32 << n) - 1
}

pub fn graph_from_bits(adj: &[u32]) -> Graph {
    let n = adj.len();
    let edges: Vec<(usize, usize)> =
        pairs(n).into_iter().filter(|&(i, j)| adj[i] >> j & 1 == 1).collect();
    Graph::from_edges(n, &edges).unwrap()
}

/// Every labeled connected graph on `n` nodes.
pub fn connected_graphs(n: usize) -> Vec<Vec<u32>> {
    let ps = pairs(n);
    (0..1u64 << ps.len())
        .map(|mask| adjacency_bits(n, &ps, mask))
        .filter(|adj| connected_bits(adj))
        .collect()
}

/// Betweenness by walking every geodesic explicitly: for each unordered pair
/// `(s, t)` count all shortest paths and, per interior node, those through it.
pub fn betweenness_by_enumeration(adj: &[u32]) -> Vec<f64> {
    let n = adj.len();
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[i] >> j & 1 == 1 {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut bc = vec![0.0; n];
    let mut through = vec![0u64; n];
    let mut path = Vec::with_capacity(n);
    for s in 0..n {
        for t in s + 1..n {
            if d[s][t] >= INF {
                continue;
            }
            through.iter_mut().for_each(|c| *c = 0);
            path.clear();
            let total = walk(adj, &d, s, t, &mut path, &mut through);
            for v in 0..n {
                if v != s && v != t {
                    bc[v] += through[v] as f64 / total as f64;
                }
            }
        }
    }
    bc
}

fn walk(adj: &[u32], d: &[Vec<usize>], v: usize, t: usize, path: &mut Vec<usize>, through: &mut [u64]) -> u64 {
    if v == t {
        for &u in path.iter() {
            through[u] += 1;
        }
        return 1;
    }
    let mut count = 0;
    for w in 0..adj.len() {
        if adj[v] >> w & 1 == 1 && d[w][t] + 1 == d[v][t] {
            if w != t {
                path.push(w);
            }
            count += walk(adj, d, w, t, path, through);
            if w != t {
                path.pop();
            }
        }
    }
    count
}

/// Characteristic polynomial coefficients `c_0..c_n` (monic, `c_n = 1`) of
/// `det(zI - A)` by Faddeev-LeVerrier.
pub fn char_poly(a: &DenseMatrix) -> Vec<f64> {
    let n = a.dim();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = DenseMatrix::zeros(n);
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = a.matmul(&m);
        for i in 0..n {
            next[(i, i)] += coeffs[n - k + 1];
        }
        m = next;
        let am = a.matmul(&m);
        let trace: f64 = (0..n).map(|i| am[(i, i)]).sum();
        coeffs[n - k] = -trace / k as f64;
    }
    coeffs
}

/// Roots of a monic polynomial by Durand-Kerner, polished with Newton steps.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex64| coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 {
            break;
        }
    }
    merge_clusters(coeffs, &mut roots, 1e-3);
    roots
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect()
}

fn newton(coeffs: &[f64], mut z: Complex64, steps: usize) -> Complex64 {
    let d = derivative(coeffs);
    let eval = |c: &[f64], z: Complex64| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * z + v);
    for _ in 0..steps {
        let dp = eval(&d, z);
        if dp.norm() < 1e-300 {
            break;
        }
        z -= eval(coeffs, z) / dp;
    }
    z
}

/// Newton polish. A root of multiplicity m is only found to about
/// eps^(1/m), but it is a simple root of the (m-1)-th derivative, so each
/// cluster of roots closer than `radius` is polished on that derivative from
/// its centroid. The merge is kept only if the lower derivatives vanish there
/// too; otherwise the members are distinct roots and are polished one by one.
fn merge_clusters(coeffs: &[f64], roots: &mut [Complex64], radius: f64) {
    let n = roots.len();
    let eval = |c: &[f64], z: Complex64| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * z + v);
    let scale = coeffs.iter().map(|c| c.abs()).fold(1.0, f64::max);
    let mut group: Vec<usize> = (0..n).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..n {
                if group[j] < group[i] && (roots[i] - roots[j]).norm() < radius {
                    group[i] = group[j];
                    changed = true;
                }
            }
        }
    }
    for g in 0..n {
        let members: Vec<usize> = (0..n).filter(|&k| group[k] == g).collect();
        if members.is_empty() {
            continue;
        }
        let mut derivs = vec![coeffs.to_vec()];
        for _ in 1..members.len() {
            derivs.push(derivative(derivs.last().unwrap()));
        }
        let centroid = members.iter().map(|&k| roots[k]).sum::<Complex64>() / members.len() as f64;
        let c = newton(derivs.last().unwrap(), centroid, 20);
        let multiple = derivs[..derivs.len() - 1].iter().all(|d| eval(d, c).norm() <= 1e-10 * scale);
        for k in members {
            roots[k] = if multiple { c } else { newton(coeffs, roots[k], 5) };
        }
    }
}

/// Largest distance in a greedy nearest-neighbour matching of two root sets.
pub fn match_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut free: Vec<Complex64> = b.to_vec();
    let mut worst = 0.0f64;
    for x in a {
        let (k, dist) = free
            .iter()
            .enumerate()
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|l, r| l.1.partial_cmp(&r.1).unwrap())
            .unwrap();
        worst = worst.max(dist);
        free.swap_remove(k);
    }
    worst
}

/// Nearest point of `{p : sum p = budget, lo <= p_i <= hi}` to `y` by
/// coarse-to-fine grid search over the free coordinates (n <= 3).
pub fn projection_by_grid(y: &[f64], budget: f64, lo: f64, hi: f64) -> Option<Vec<f64>> {
    let n = y.len();
    let dist = |p: &[f64]| p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let complete = |free: &[f64]| -> Option<Vec<f64>> {
        let last = budget - free.iter().sum::<f64>();
        if last < lo - 1e-12 || last > hi + 1e-12 {
            return None;
        }
        let mut p = free.to_vec();
        p.push(last.clamp(lo, hi));
        Some(p)
    };
    if n == 1 {
        return complete(&[]);
    }
    let dims = n - 1;
    let mut center = vec![(lo + hi) / 2.0; dims];
    let mut half = (hi - lo) / 2.0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let steps = 40i64;
    while half > 1e-10 {
        let h = half / steps as f64 * 2.0;
        let mut local: Option<(f64, Vec<f64>)> = None;
        let mut idx = vec![-steps; dims];
        loop {
            let free: Vec<f64> =
                (0..dims).map(|d| (center[d] + idx[d] as f64 * h / 2.0).clamp(lo, hi)).collect();
            if let Some(p) = complete(&free) {
                let v = dist(&p);
                if local.as_ref().map_or(true, |(b, _)| v < *b) {
                    local = Some((v, free.clone()));
                }
            }
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = -steps;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        let (v, free) = local?;
        center = free;
        if best.as_ref().map_or(true, |(b, _)| v <= *b) {
            best = Some((v, center.clone()));
        }
        half /= 4.0;
    }
    best.and_then(|(_, free)| complete(&free))
}
