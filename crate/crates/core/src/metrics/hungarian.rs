//! Optimal assignment with a lexicographic tie-break.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMode {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Assignment {
    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

const TIE_TOL: f64 = 1e-9;

/// Shortest augmenting path on a square minimization matrix. Returns `col_of_row`.
fn solve_square(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    col_of_row
}

fn optimum(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let sub: Vec<Vec<f64>> = rows.iter().map(|&r| cols.iter().map(|&c| cost[r][c]).collect()).collect();
    let a = solve_square(&sub);
    a.iter().enumerate().map(|(i, &j)| sub[i][j]).sum()
}

/// Optimal assignment of a rectangular matrix. Missing rows or columns are
/// padded with the worst entry; only real pairs are returned. Among optimal
/// assignments the lexicographically smallest column sequence wins.
pub fn hungarian(cost: &[Vec<f64>], mode: AssignMode) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Assignment { pairs: Vec::new(), total: 0.0 };
    }
    let sign = match mode {
        AssignMode::Minimize => 1.0,
        AssignMode::Maximize => -1.0,
    };
    let worst = cost.iter().flatten().map(|&x| sign * x).fold(f64::NEG_INFINITY, f64::max);
    let n = rows.max(cols);
    let square: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i < rows && j < cols { sign * cost[i][j] } else { worst })
                .collect()
        })
        .collect();

    let best = optimum(&square, &(0..n).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>());
    let tol = TIE_TOL * (1.0 + best.abs());
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed = 0.0;
    let mut col_of_row = Vec::with_capacity(n);
    for i in 0..n {
        let rest_rows: Vec<usize> = (i + 1..n).collect();
        let pick = free_cols
            .iter()
            .copied()
            .find(|&j| {
                let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&c| c != j).collect();
                fixed + square[i][j] + optimum(&square, &rest_rows, &rest_cols) <= best + tol
            })
            .expect("some column extends an optimal assignment");
        fixed += square[i][pick];
        free_cols.retain(|&c| c != pick);
        col_of_row.push(pick);
    }

    let pairs: Vec<(usize, usize)> = col_of_row
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < rows && j < cols)
        .collect();
    let total = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Assignment { pairs, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let a = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]], AssignMode::Minimize);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total, 2.0);
        let a = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]], AssignMode::Maximize);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn diagonal_is_identity() {
        let c: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 0.0 } else { 5.0 }).collect()).collect();
        assert_eq!(hungarian(&c, AssignMode::Minimize).pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let c = vec![vec![1.0; 3]; 3];
        assert_eq!(hungarian(&c, AssignMode::Minimize).pairs, vec![(0, 0), (1, 1), (2, 2)]);
        let c = vec![vec![0.0, 0.0, 1.0]];
        assert_eq!(hungarian(&c, AssignMode::Minimize).pairs, vec![(0, 0)]);
    }

    #[test]
    fn rectangular_returns_real_pairs() {
        let c = vec![vec![3.0], vec![1.0], vec![2.0]];
        let a = hungarian(&c, AssignMode::Minimize);
        assert_eq!(a.pairs, vec![(1, 0)]);
        let a = hungarian(&c, AssignMode::Maximize);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(hungarian(&[], AssignMode::Minimize).pairs, vec![]);
    }
}
