//! Minimum-cost bipartite assignment via the Hungarian algorithm with
//! potentials and shortest augmenting paths, O(n^2 m).

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// One-to-one assignment of predictions to ground truths.
///
/// `pairs` holds `(prediction index, ground-truth index)` entries sorted by
/// prediction index; its length is `min(K, G)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pairs: Vec<(usize, usize)>,
    unmatched_predictions: Vec<usize>,
}

impl Assignment {
    pub fn new(pairs: Vec<(usize, usize)>, unmatched_predictions: Vec<usize>) -> Self {
        Self {
            pairs,
            unmatched_predictions,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn unmatched_predictions(&self) -> &[usize] {
        &self.unmatched_predictions
    }

    /// Ground-truth index matched to a prediction, if any.
    pub fn target_of(&self, prediction: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|(p, _)| *p == prediction)
            .map(|&(_, g)| g)
    }

    /// Sum of the matrix entries selected by the pairs.
    pub fn total_cost(&self, cost: &DenseTensor) -> f64 {
        self.pairs.iter().map(|&(p, g)| cost.at2(p, g)).sum()
    }
}

/// Solve the assignment on a cost matrix with rows <= cols; returns, for
/// each row, the chosen column. Classic potentials formulation.
fn solve_rows(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(rows <= cols);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut row_of = vec![0usize; cols + 1]; // row matched to column j, 1-based; 0 = free
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
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
            for j in 0..=cols {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![usize::MAX; rows];
    for j in 1..=cols {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Canonicalize ties toward the lexicographically smallest pair list:
/// column swaps between matched pairs and row substitutions with unmatched
/// predictions are applied whenever they keep the total cost bit-identical
/// and make the sorted pair list smaller.
fn canonicalize(cost: &Matrix<'_>, pairs: &mut Vec<(usize, usize)>, k: usize) {
    let max_passes = pairs.len() * pairs.len() + k + 4;
    for _ in 0..max_passes {
        pairs.sort_unstable();
        let mut changed = false;
        for i in 0..pairs.len() {
            for j in i + 1..pairs.len() {
                let (ri, ci) = pairs[i];
                let (rj, cj) = pairs[j];
                if cj < ci
                    && cost.at(ri, cj) + cost.at(rj, ci) == cost.at(ri, ci) + cost.at(rj, cj)
                {
                    pairs[i] = (ri, cj);
                    pairs[j] = (rj, ci);
                    changed = true;
                }
            }
        }
        let matched: std::collections::BTreeSet<usize> =
            pairs.iter().map(|&(p, _)| p).collect();
        for idx in 0..pairs.len() {
            let (r, c) = pairs[idx];
            for q in 0..r {
                if !matched.contains(&q) && cost.at(q, c) == cost.at(r, c) {
                    pairs[idx] = (q, c);
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }
    pairs.sort_unstable();
}

/// Minimum-cost one-to-one assignment over a K x G cost matrix.
///
/// Matches `min(K, G)` pairs; ties between equal-cost assignments resolve
/// toward the lexicographically smallest pair list.
pub fn hungarian(cost: &DenseTensor) -> Result<Assignment> {
    cost.expect_rank(2, "hungarian cost")?;
    hungarian_raw(cost.shape()[0], cost.shape()[1], cost.data())
}

/// [`hungarian`] over a raw row-major cost buffer, for costs that arrive
/// from outside the tensor constructors (whose invariants already forbid
/// non-finite values).
pub fn hungarian_raw(k: usize, g: usize, data: &[f64]) -> Result<Assignment> {
    if data.len() != k * g {
        return Err(Error::ShapeMismatch {
            context: "hungarian cost".into(),
            expected: format!("{} entries", k * g),
            actual: format!("{}", data.len()),
        });
    }
    if let Some(flat) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCost {
            row: flat / g.max(1),
            col: flat % g.max(1),
        });
    }
    let cost = Matrix { data, cols: g };
    let mut pairs: Vec<(usize, usize)> = if k <= g {
        solve_rows(k, g, |i, j| cost.at(i, j))
            .into_iter()
            .enumerate()
            .collect()
    } else {
        solve_rows(g, k, |i, j| cost.at(j, i))
            .into_iter()
            .enumerate()
            .map(|(gt, pred)| (pred, gt))
            .collect()
    };
    canonicalize(&cost, &mut pairs, k);
    let matched: std::collections::BTreeSet<usize> = pairs.iter().map(|&(p, _)| p).collect();
    let unmatched = (0..k).filter(|p| !matched.contains(p)).collect();
    Ok(Assignment::new(pairs, unmatched))
}

struct Matrix<'a> {
    data: &'a [f64],
    cols: usize,
}

impl Matrix<'_> {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::rng::SceneRng;

    fn matrix(rows: &[Vec<f64>]) -> DenseTensor {
        DenseTensor::from_rows(rows).unwrap()
    }

    /// Exhaustive minimum over all permutations, for square matrices.
    pub(crate) fn brute_force_min_cost(cost: &DenseTensor) -> f64 {
        let n = cost.shape()[0];
        assert_eq!(n, cost.shape()[1]);
        let mut cols: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut cols, 0, &mut |perm| {
            let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost.at2(i, j)).sum();
            if total < best {
                best = total;
            }
        });
        best
    }

    fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
        if start == items.len() {
            visit(items);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, visit);
            items.swap(start, i);
        }
    }

    #[test]
    fn hand_examples() {
        let a = hungarian(&matrix(&[vec![1.0, 2.0], vec![3.0, 1.0]])).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);
        assert!((a.total_cost(&matrix(&[vec![1.0, 2.0], vec![3.0, 1.0]])) - 2.0).abs() < 1e-12);

        let a = hungarian(&matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);

        let a = hungarian(&matrix(&[vec![7.0]])).unwrap();
        assert_eq!(a.pairs(), &[(0, 0)]);
        assert!(a.unmatched_predictions().is_empty());
    }

    #[test]
    fn rejects_non_finite_costs() {
        // tensor constructors already forbid non-finite values, so the raw
        // entry is where the check is observable
        let err = hungarian_raw(1, 2, &[1.0, f64::INFINITY]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCost { row: 0, col: 1 }));
        let err = hungarian_raw(2, 2, &[1.0, 2.0, f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCost { row: 1, col: 0 }));
    }

    #[test]
    fn rectangular_matches_min_side() {
        // more predictions than ground truths: one prediction stays unmatched
        let cost = matrix(&[vec![5.0], vec![1.0], vec![3.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs(), &[(1, 0)]);
        assert_eq!(a.unmatched_predictions(), &[0, 2]);

        // more ground truths than predictions
        let cost = matrix(&[vec![5.0, 1.0, 3.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs(), &[(0, 1)]);
        assert!(a.unmatched_predictions().is_empty());
    }

    #[test]
    fn ties_resolve_to_lexicographically_smallest() {
        let cost = matrix(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);

        let cost = matrix(&[vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1), (2, 2)]);

        // tied rows competing for one column prefer the earliest prediction
        let cost = matrix(&[vec![2.0], vec![2.0], vec![2.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs(), &[(0, 0)]);
        assert_eq!(a.unmatched_predictions(), &[1, 2]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = SceneRng::seed_from(1234);
        for trial in 0..200 {
            let n = 2 + (trial % 5);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.normal() * 4.0).collect())
                .collect();
            let cost = matrix(&rows);
            let a = hungarian(&cost).unwrap();
            assert_eq!(a.pairs().len(), n);
            let expected = brute_force_min_cost(&cost);
            let got = a.total_cost(&cost);
            assert!(
                (got - expected).abs() < 1e-9,
                "trial {trial}: hungarian {got} vs brute force {expected}"
            );
        }
    }
}
