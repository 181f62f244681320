//! Exact solver for small unregularized transport problems.

use ndarray::Array2;

use super::{CostMatrix, MarginalWeights, TransportPlan};
use crate::error::{Error, Result};

/// Largest `K * L` accepted for general margins.
pub const ORACLE_MAX_CELLS: usize = 36;
/// Largest square size enumerated by permutation when both margins are uniform.
pub const ORACLE_MAX_PERMUTATION: usize = 6;

const FEASIBILITY_TOL: f64 = 1e-12;

/// Exact minimizer of `<plan, cost>` over the transportation polytope.
///
/// Uniform square instances enumerate permutations (the optimum is a vertex of
/// the Birkhoff polytope scaled by `1/K`). A 2x2 instance has one free variable
/// and is solved at an endpoint of its feasible interval. Instances with at most
/// three rows and columns enumerate every basic feasible solution. Anything else
/// up to [`ORACLE_MAX_CELLS`] cells is solved by successive shortest paths.
pub fn exact_emd_oracle(
    cost: &CostMatrix,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
) -> Result<(TransportPlan, f64)> {
    let (k, l) = cost.shape();
    if alpha.len() != k || beta.len() != l {
        return Err(Error::shape(
            format!("{k}x{l} margins"),
            format!("{}x{}", alpha.len(), beta.len()),
        ));
    }
    let uniform_square = k == l && alpha.is_uniform() && beta.is_uniform();
    if k * l > ORACLE_MAX_CELLS && !(uniform_square && k <= ORACLE_MAX_PERMUTATION) {
        return Err(Error::UnsupportedSize { rows: k, cols: l });
    }

    let plan = if uniform_square && k <= ORACLE_MAX_PERMUTATION {
        by_permutation(cost)
    } else if k == 2 && l == 2 {
        two_by_two(cost, alpha, beta)
    } else if k <= 3 && l <= 3 {
        by_basis_enumeration(cost, alpha, beta)?
    } else {
        by_shortest_paths(cost, alpha, beta)?
    };
    let distance = plan.iter().zip(cost.view().iter()).map(|(w, c)| w * c).sum();
    Ok((TransportPlan::new(plan, true, 0), distance))
}

fn by_permutation(cost: &CostMatrix) -> Array2<f64> {
    let n = cost.rows();
    let c = cost.view();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
        if total < best.0 {
            best = (total, p.to_vec());
        }
    });
    let mut plan = Array2::zeros((n, n));
    for (i, &j) in best.1.iter().enumerate() {
        plan[[i, j]] = 1.0 / n as f64;
    }
    plan
}

fn permute(p: &mut [usize], at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == p.len() {
        visit(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permute(p, at + 1, visit);
        p.swap(at, i);
    }
}

fn two_by_two(cost: &CostMatrix, alpha: &MarginalWeights, beta: &MarginalWeights) -> Array2<f64> {
    let c = cost.view();
    let (a1, b1) = (alpha.as_slice()[0], beta.as_slice()[0]);
    let lo = (a1 + b1 - 1.0).max(0.0);
    let hi = a1.min(b1);
    let slope = c[[0, 0]] - c[[0, 1]] - c[[1, 0]] + c[[1, 1]];
    let t = if slope < 0.0 { hi } else { lo };
    ndarray::array![[t, a1 - t], [b1 - t, 1.0 - a1 - b1 + t]].mapv(|w: f64| w.max(0.0))
}

fn by_basis_enumeration(cost: &CostMatrix, alpha: &MarginalWeights, beta: &MarginalWeights) -> Result<Array2<f64>> {
    let (k, l) = cost.shape();
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..l).map(move |j| (i, j))).collect();
    let basis_size = k + l - 1;
    let mut best: Option<(f64, Array2<f64>)> = None;
    for_each_combination(cells.len(), basis_size, &mut |chosen| {
        let basis: Vec<(usize, usize)> = chosen.iter().map(|&c| cells[c]).collect();
        if let Some(plan) = solve_basis(&basis, alpha.as_slice(), beta.as_slice(), k, l) {
            let value: f64 = plan.iter().zip(cost.view().iter()).map(|(w, c)| w * c).sum();
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, plan));
            }
        }
    });
    best.map(|(_, plan)| plan)
        .ok_or_else(|| Error::invalid("no basic feasible solution found"))
}

fn for_each_combination(n: usize, r: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, r: usize, acc: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if acc.len() == r {
            visit(acc);
            return;
        }
        for i in start..=n - (r - acc.len()) {
            acc.push(i);
            rec(i + 1, n, r, acc, visit);
            acc.pop();
        }
    }
    if r <= n {
        rec(0, n, r, &mut Vec::with_capacity(r), visit);
    }
}

/// Solves the flows on a candidate spanning-tree basis by peeling leaves.
/// Returns `None` for cyclic bases or infeasible (negative) solutions.
fn solve_basis(basis: &[(usize, usize)], alpha: &[f64], beta: &[f64], k: usize, l: usize) -> Option<Array2<f64>> {
    let mut row_left = alpha.to_vec();
    let mut col_left = beta.to_vec();
    let mut active = basis.to_vec();
    let mut plan = Array2::zeros((k, l));
    while !active.is_empty() {
        let row_leaf = (0..k).find(|&i| active.iter().filter(|c| c.0 == i).count() == 1);
        let (pos, flow) = if let Some(i) = row_leaf {
            let pos = active.iter().position(|c| c.0 == i)?;
            (pos, row_left[i])
        } else {
            let j = (0..l).find(|&j| active.iter().filter(|c| c.1 == j).count() == 1)?;
            let pos = active.iter().position(|c| c.1 == j)?;
            (pos, col_left[j])
        };
        let (i, j) = active.swap_remove(pos);
        if flow < -FEASIBILITY_TOL {
            return None;
        }
        plan[[i, j]] = flow.max(0.0);
        row_left[i] -= flow;
        col_left[j] -= flow;
    }
    let residual = row_left
        .iter()
        .chain(col_left.iter())
        .map(|r| r.abs())
        .fold(0.0, f64::max);
    (residual <= 1e-9).then_some(plan)
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

fn by_shortest_paths(cost: &CostMatrix, alpha: &MarginalWeights, beta: &MarginalWeights) -> Result<Array2<f64>> {
    let (k, l) = cost.shape();
    let source = 0;
    let sink = k + l + 1;
    let n = k + l + 2;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut add = |edges: &mut Vec<Edge>, from: usize, to: usize, cap: f64, cost: f64| {
        adj[from].push(edges.len());
        edges.push(Edge { to, cap, cost });
        adj[to].push(edges.len());
        edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
    };
    for (i, &a) in alpha.as_slice().iter().enumerate() {
        add(&mut edges, source, 1 + i, a, 0.0);
    }
    let mut cell_edge = Array2::<usize>::zeros((k, l));
    for i in 0..k {
        for j in 0..l {
            cell_edge[[i, j]] = edges.len();
            add(&mut edges, 1 + i, 1 + k + j, f64::INFINITY, cost.view()[[i, j]]);
        }
    }
    for (j, &b) in beta.as_slice().iter().enumerate() {
        add(&mut edges, 1 + k + j, sink, b, 0.0);
    }

    let mut shipped = 0.0;
    while shipped < 1.0 - FEASIBILITY_TOL {
        // Bellman-Ford; the residual graph has negative reverse arcs
        let mut dist = vec![f64::INFINITY; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut relaxed = false;
            for u in 0..n {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > 1e-15 && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = Some(e);
                        relaxed = true;
                    }
                }
            }
            if !relaxed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        let mut path = Vec::new();
        let mut node = sink;
        while node != source {
            let e = via[node].ok_or_else(|| Error::invalid("broken augmenting path"))?;
            path.push(e);
            node = edges[e ^ 1].to;
        }
        let push = path.iter().map(|&e| edges[e].cap).fold(f64::INFINITY, f64::min);
        for &e in &path {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
        }
        shipped += push;
    }
    if (shipped - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("min-cost flow shipped {shipped} of unit mass")));
    }
    // flow on a forward arc is the capacity of its reverse arc
    Ok(cell_edge.mapv(|e| edges[e ^ 1].cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn margins(w: &[f64]) -> MarginalWeights {
        MarginalWeights::new(ndarray::Array1::from(w.to_vec())).unwrap()
    }

    #[test]
    fn zero_cost_diagonal() {
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let (p, d) = exact_emd_oracle(&c, &margins(&[0.5, 0.5]), &margins(&[0.5, 0.5])).unwrap();
        assert_eq!(p.values, array![[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn zero_cost_anti_diagonal() {
        let c = CostMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (p, d) = exact_emd_oracle(&c, &margins(&[0.5, 0.5]), &margins(&[0.5, 0.5])).unwrap();
        assert_eq!(p.values, array![[0.0, 0.5], [0.5, 0.0]]);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn unbalanced_two_by_two_matches_interval_scan() {
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let alpha = margins(&[0.7, 0.3]);
        let beta = margins(&[0.5, 0.5]);
        let (p, d) = exact_emd_oracle(&c, &alpha, &beta).unwrap();
        // scan the single free variable over its feasible interval [0.2, 0.5]
        let scanned = (0..=3000)
            .map(|s| 0.2 + 0.3 * s as f64 / 3000.0)
            .map(|t| (t * 0.0 + (0.7 - t) * 1.0 + (0.5 - t) * 1.0 + (t - 0.2) * 0.0, t))
            .fold(
                (f64::INFINITY, 0.0),
                |best, cur| if cur.0 < best.0 { cur } else { best },
            );
        assert_abs_diff_eq!(scanned.0, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(scanned.1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.2, epsilon = 1e-12);
        let expected = array![[0.5, 0.2], [0.0, 0.3]];
        for (a, b) in p.values.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn strategies_agree_on_shared_instances() {
        let c = CostMatrix::new(array![[0.3, 1.2, 0.8], [0.5, 0.1, 1.9], [1.4, 0.6, 0.2]]).unwrap();
        let alpha = margins(&[0.2, 0.5, 0.3]);
        let beta = margins(&[0.4, 0.35, 0.25]);
        let enumerated = by_basis_enumeration(&c, &alpha, &beta).unwrap();
        let flowed = by_shortest_paths(&c, &alpha, &beta).unwrap();
        let value = |p: &Array2<f64>| p.iter().zip(c.view().iter()).map(|(w, c)| w * c).sum::<f64>();
        assert_abs_diff_eq!(value(&enumerated), value(&flowed), epsilon = 1e-12);

        let u = margins(&[1.0 / 3.0; 3]);
        let permuted = by_permutation(&c);
        let enumerated = by_basis_enumeration(&c, &u, &u).unwrap();
        assert_abs_diff_eq!(value(&permuted), value(&enumerated), epsilon = 1e-12);
    }

    #[test]
    fn rejects_large_instances() {
        let c = CostMatrix::new(Array2::zeros((5, 8))).unwrap();
        let err = exact_emd_oracle(
            &c,
            &MarginalWeights::uniform(5).unwrap(),
            &MarginalWeights::uniform(8).unwrap(),
        );
        assert!(matches!(err, Err(Error::UnsupportedSize { rows: 5, cols: 8 })));
        let c = CostMatrix::new(Array2::zeros((7, 7))).unwrap();
        let u = MarginalWeights::uniform(7).unwrap();
        assert!(matches!(
            exact_emd_oracle(&c, &u, &u),
            Err(Error::UnsupportedSize { .. })
        ));
    }

    #[test]
    fn general_margins_on_larger_instance() {
        let c = CostMatrix::new(Array2::from_shape_fn((4, 5), |(i, j)| {
            ((i * 7 + j * 3) % 5) as f64 / 4.0
        }))
        .unwrap();
        let alpha = margins(&[0.1, 0.2, 0.3, 0.4]);
        let beta = margins(&[0.3, 0.1, 0.2, 0.25, 0.15]);
        let (p, _) = exact_emd_oracle(&c, &alpha, &beta).unwrap();
        let (rows, cols) = p.marginal_error(&alpha, &beta);
        assert!(rows < 1e-12 && cols < 1e-12);
        assert!(p.values.iter().all(|&w| w >= 0.0));
    }
}
