//! Minimum-cost bipartite assignment (Jonker–Volgenant shortest augmenting
//! path with potentials, O(n²m)).

use crate::error::{Error, Result};

/// Solve the rectangular assignment problem for an n×m cost matrix,
/// returning min(n, m) pairs (row, col) of a globally minimal-cost
/// one-to-one assignment, sorted by row.
///
/// Ties between equal-cost optima resolve deterministically (the scan order
/// prefers lower column indices), so repeated calls agree bit-for-bit.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = cost[0].len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != m {
            return Err(Error::Invalid(format!(
                "cost matrix is ragged: row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
        for (j, c) in row.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::Invalid(format!(
                    "cost matrix entry ({i}, {j}) is not finite"
                )));
            }
        }
    }
    if m == 0 {
        return Ok(Vec::new());
    }

    // the augmenting-path loop needs rows ≤ cols; transpose otherwise
    if n > m {
        let transposed: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..n).map(|i| cost[i][j]).collect())
            .collect();
        let mut pairs: Vec<(usize, usize)> = hungarian(&transposed)?
            .into_iter()
            .map(|(r, c)| (c, r))
            .collect();
        pairs.sort_unstable();
        return Ok(pairs);
    }

    // assignment[j] = row assigned to column j; column m is a virtual slot
    let mut assignment: Vec<Option<usize>> = vec![None; m + 1];
    let mut row_potential = vec![0.0f64; n];
    let mut col_potential = vec![0.0f64; m + 1];

    for row in 0..n {
        let mut j_cur = m;
        assignment[m] = Some(row);
        let mut min_reduced = vec![f64::INFINITY; m + 1];
        let mut previous: Vec<Option<usize>> = vec![None; m + 1];
        let mut visited = vec![false; m + 1];

        while let Some(i_cur) = assignment[j_cur] {
            visited[j_cur] = true;
            let mut delta = f64::INFINITY;
            let mut j_next = m;
            for j in 0..m {
                if visited[j] {
                    continue;
                }
                let reduced = cost[i_cur][j] - row_potential[i_cur] - col_potential[j];
                if reduced < min_reduced[j] {
                    min_reduced[j] = reduced;
                    previous[j] = Some(j_cur);
                }
                if min_reduced[j] < delta {
                    delta = min_reduced[j];
                    j_next = j;
                }
            }
            for j in 0..=m {
                if visited[j] {
                    row_potential[assignment[j].expect("visited columns are assigned")] += delta;
                    col_potential[j] -= delta;
                } else {
                    min_reduced[j] -= delta;
                }
            }
            j_cur = j_next;
        }

        // walk the alternating path back, shifting assignments
        while j_cur != m {
            let j_prev = previous[j_cur].expect("path reaches the virtual column");
            assignment[j_cur] = assignment[j_prev];
            j_cur = j_prev;
        }
    }

    let mut pairs: Vec<(usize, usize)> = assignment[..m]
        .iter()
        .enumerate()
        .filter_map(|(j, i)| i.map(|i| (i, j)))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Total cost of an assignment, summed in pair order.
pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}
