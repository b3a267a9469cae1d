//! Cluster-to-class contingency tables and optimal one-to-one matching.

/// `counts[cluster][class]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn from_assignments(clusters: &[usize], labels: &[usize], k: usize, classes: usize) -> Self {
        let mut counts = vec![vec![0u64; classes]; k];
        for (&c, &y) in clusters.iter().zip(labels) {
            counts[c][y] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Samples covered by the best one-to-one cluster-to-class matching.
    pub fn matched(&self) -> u64 {
        let assignment = max_weight_assignment(&self.counts);
        assignment
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| self.counts[r][c]))
            .sum()
    }
}

/// Maximum-weight matching of rows to columns (Hungarian method on the
/// zero-padded square matrix). Returns the matched column for each row, or
/// `None` for rows left unmatched when there are more rows than columns.
pub fn max_weight_assignment(weights: &[Vec<u64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max_w = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| -> i64 {
        let w = if i < rows && j < cols { weights[i][j] as i64 } else { 0 };
        max_w - w
    };
    // Potentials formulation, 1-based with a virtual column 0.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
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
            for j in 0..=n {
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
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_example() {
        let w = vec![vec![1, 9, 0], vec![8, 2, 0], vec![0, 0, 5]];
        assert_eq!(max_weight_assignment(&w), vec![Some(1), Some(0), Some(2)]);
        assert_eq!(ContingencyTable { counts: w }.matched(), 22);
    }

    #[test]
    fn rectangular_tables() {
        // more clusters than classes
        let t = ContingencyTable { counts: vec![vec![4, 0], vec![3, 1], vec![0, 6]] };
        assert_eq!(t.matched(), 10);
        // more classes than clusters
        let t = ContingencyTable { counts: vec![vec![4, 5, 0], vec![0, 6, 1]] };
        assert_eq!(t.matched(), 10);
    }
}
