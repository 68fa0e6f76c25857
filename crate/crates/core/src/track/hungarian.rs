//! Kuhn–Munkres assignment on a rectangular cost matrix with forbidden pairs.

/// Result of a gated assignment. Indices refer to rows (tracks) and columns
/// (detections) of the cost matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs, sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, costs: &[Vec<Option<f64>>]) -> f64 {
        self.matches.iter().map(|&(r, c)| costs[r][c].expect("matched pairs are allowed")).sum()
    }
}

/// Minimum-cost assignment where `None` marks a forbidden pair.
///
/// Forbidden pairs carry a penalty larger than any feasible total, so the
/// solution first maximizes the number of allowed matches and then minimizes
/// their summed cost. Matches landing on a forbidden pair are discarded.
pub fn solve_gated(costs: &[Vec<Option<f64>>], rows: usize, cols: usize) -> Assignment {
    if rows == 0 || cols == 0 {
        return Assignment { matches: vec![], unmatched_rows: (0..rows).collect(), unmatched_cols: (0..cols).collect() };
    }
    let max_allowed = costs.iter().flatten().flatten().fold(0.0f64, |m, &c| m.max(c.abs()));
    let big = (max_allowed + 1.0) * (rows.min(cols) as f64 + 1.0);
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let cost = |i: usize, j: usize| {
        let c = if transpose { costs[j][i] } else { costs[i][j] };
        c.unwrap_or(big)
    };

    // Potentials formulation, 1-based with a virtual column 0.
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
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
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

    let mut matches = Vec::new();
    for j in 1..=m {
        if p[j] == 0 {
            continue;
        }
        let (r, c) = if transpose { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) };
        if costs[r][c].is_some() {
            matches.push((r, c));
        }
    }
    matches.sort_unstable();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        matches,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}
