//! Rectangular linear assignment with real costs (Hungarian method with
//! potentials), shared by data association and the OSPA metric.

use nalgebra::DMatrix;

/// Minimum-cost matching of every row of the smaller side.
///
/// Returns, for each row, the assigned column. When there are more rows than
/// columns some rows stay `None`. Costs must be finite.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let cols = solve_assignment(&cost.transpose());
        let mut rows = vec![None; n];
        for (c, r) in cols.into_iter().enumerate() {
            if let Some(r) = r {
                rows[r] = Some(c);
            }
        }
        return rows;
    }
    // 1-based potentials formulation, n <= m
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            rows[p[j] - 1] = Some(j - 1);
        }
    }
    rows
}

/// Assignment where a row may also stay unmatched at cost `gate`; entries
/// above `gate` are never matched. An infinite gate matches as many rows as
/// possible.
pub fn solve_gated(cost: &DMatrix<f64>, gate: f64) -> Vec<Option<usize>> {
    if gate == f64::INFINITY {
        return solve_assignment(cost);
    }
    let (n, m) = cost.shape();
    let big = gate * 4.0 + 1.0 + cost.iter().filter(|c| c.is_finite()).fold(0.0f64, |a, c| a.max(c.abs())) * 2.0;
    let mut ext = DMatrix::from_element(n, m + n, big);
    for i in 0..n {
        for j in 0..m {
            let c = cost[(i, j)];
            if c.is_finite() && c <= gate {
                ext[(i, j)] = c;
            }
        }
        ext[(i, m + i)] = gate;
    }
    solve_assignment(&ext).into_iter().enumerate().map(|(i, j)| j.filter(|&j| j < m && cost[(i, j)] <= gate)).collect()
}

/// Total cost of a matching.
pub fn assignment_cost(cost: &DMatrix<f64>, rows: &[Option<usize>]) -> f64 {
    rows.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost[(i, j)])).sum()
}
