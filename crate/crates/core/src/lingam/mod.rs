//! ICA-based LiNGAM: recovers the instantaneous DAG of `x = A x + e` from
//! samples with non-Gaussian disturbances.
//!
//! The chain is FastICA, row permutation and scaling of the unmixing matrix
//! so that its diagonal is one, `B = I - W`, a causal order minimizing the
//! mass above the diagonal, and threshold pruning.

mod ica;
mod perm;

use nalgebra::DMatrix;
use rand::Rng;

pub use ica::{
    excess_kurtosis, fastica, fastica_with, symmetric_decorrelation, IcaOptions, IcaResult,
};

use crate::error::{Error, Result};
use crate::graph::DagMatrix;
use crate::scalar::Real;

/// Permutation searches are exhaustive up to this many nodes.
pub const EXHAUSTIVE_MAX_NODES: usize = 8;

pub const DEFAULT_PRUNE_THRESH: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct LingamResult<T: Real> {
    pub dag: DagMatrix<T>,
    /// `causal_order[p]` is the node at position `p`; parents come first.
    pub causal_order: Vec<usize>,
    /// Entries of the unpruned estimate that pruning set to zero.
    pub pruned_mask: DMatrix<bool>,
    /// `B = I - W` before pruning.
    pub b_unpruned: DMatrix<T>,
    pub gaussian_warning: bool,
}

/// Row assignment `rows[i]` (row of `W` placed at position `i`) minimizing
/// `sum_i 1 / |W[rows[i], i]|`. Infinite cost means a zero diagonal is forced.
pub fn best_row_assignment<T: Real>(w: &DMatrix<T>) -> (Vec<usize>, f64) {
    let n = w.nrows();
    let inv_abs = w.map(|v| {
        let a = v.abs().as_f64();
        if a > 0.0 {
            1.0 / a
        } else {
            f64::INFINITY
        }
    });
    if n <= EXHAUSTIVE_MAX_NODES {
        return perm::argmin_permutation(n, |p| {
            p.iter().enumerate().map(|(i, &r)| inv_abs[(r, i)]).sum()
        });
    }
    // greedy: repeatedly fix the largest remaining |W_rc|
    let mut rows = vec![usize::MAX; n];
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; n];
    for _ in 0..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for r in (0..n).filter(|&r| !row_used[r]) {
            for c in (0..n).filter(|&c| !col_used[c]) {
                if best.is_none_or(|b| inv_abs[(r, c)] < b.2) {
                    best = Some((r, c, inv_abs[(r, c)]));
                }
            }
        }
        let (r, c, _) = best.expect("an unassigned pair remains");
        rows[c] = r;
        row_used[r] = true;
        col_used[c] = true;
    }
    let cost = rows.iter().enumerate().map(|(i, &r)| inv_abs[(r, i)]).sum();
    (rows, cost)
}

/// Permutes the rows of `W` to avoid small diagonal entries and rescales each
/// row to a unit diagonal.
pub fn resolve_permutation_scaling<T: Real>(w: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !w.is_square() {
        return Err(Error::dims(
            "resolve_permutation_scaling",
            "square",
            format!("{:?}", w.shape()),
        ));
    }
    let (rows, cost) = best_row_assignment(w);
    if !cost.is_finite() {
        return Err(Error::Identifiability(
            "every row permutation leaves a zero on the diagonal".into(),
        ));
    }
    let n = w.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &r) in rows.iter().enumerate() {
        let d = w[(r, i)];
        out.set_row(i, &(w.row(r) / d));
    }
    Ok(out)
}

/// `B = I - W'` for a unit-diagonal `W'`.
pub fn estimate_b_matrix<T: Real>(w_resolved: &DMatrix<T>) -> DMatrix<T> {
    let n = w_resolved.nrows();
    let mut b = DMatrix::identity(n, n) - w_resolved;
    // exact zeros on the diagonal
    b.fill_diagonal(T::zero());
    b
}

/// Squared mass on or above the diagonal of `B` in the frame of `order`.
pub fn upper_mass<T: Real>(b: &DMatrix<T>, order: &[usize]) -> f64 {
    let mut acc = 0.0;
    for a in 0..order.len() {
        for c in a + 1..order.len() {
            acc += b[(order[a], order[c])].as_f64().powi(2);
        }
    }
    acc
}

/// Causal order minimizing [`upper_mass`]: exhaustive search (lexicographically
/// first optimum) up to [`EXHAUSTIVE_MAX_NODES`], otherwise greedy peeling of
/// the node with the smallest incoming mass.
pub fn find_causal_order<T: Real>(b: &DMatrix<T>) -> Vec<usize> {
    let n = b.nrows();
    if n <= EXHAUSTIVE_MAX_NODES {
        return perm::argmin_permutation(n, |p| upper_mass(b, p)).0;
    }
    let sq = b.map(|v| v.as_f64().powi(2));
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .map(|(idx, &i)| {
                (
                    idx,
                    remaining
                        .iter()
                        .filter(|&&j| j != i)
                        .map(|&j| sq[(i, j)])
                        .sum::<f64>(),
                )
            })
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        order.push(remaining.remove(idx));
    }
    order
}

/// Zeroes edges that point backwards in `order` and edges weaker than `thresh`.
pub fn prune_edges<T: Real>(b: &DMatrix<T>, order: &[usize], thresh: T) -> Result<DagMatrix<T>> {
    let n = b.nrows();
    if order.len() != n {
        return Err(Error::dims("prune_edges", n, order.len()));
    }
    let mut pos = vec![usize::MAX; n];
    for (p, &node) in order.iter().enumerate() {
        if node >= n || pos[node] != usize::MAX {
            return Err(Error::InvalidArgument(format!(
                "{order:?} is not a permutation of 0..{n}"
            )));
        }
        pos[node] = p;
    }
    let pruned = DMatrix::from_fn(n, n, |i, j| {
        let v = b[(i, j)];
        if pos[j] < pos[i] && v.abs() >= thresh {
            v
        } else {
            T::zero()
        }
    });
    DagMatrix::new(pruned)
}

/// Full ICA-LiNGAM on an `N x K` sample matrix.
pub fn lingam_fit<T: Real, R: Rng + ?Sized>(
    data: &DMatrix<T>,
    thresh: T,
    rng: &mut R,
) -> Result<LingamResult<T>> {
    let (n, k) = data.shape();
    if k < 10 * n {
        log::warn!("lingam_fit: {k} samples for {n} nodes; estimates will be noisy");
    }
    let ica = fastica(data, rng)?;
    let w = resolve_permutation_scaling(&ica.unmixing)?;
    let b = estimate_b_matrix(&w);
    let causal_order = find_causal_order(&b);
    let dag = prune_edges(&b, &causal_order, thresh)?;
    let pruned_mask = DMatrix::from_fn(n, n, |i, j| {
        b[(i, j)] != T::zero() && dag.weights()[(i, j)] == T::zero() && i != j
    });
    Ok(LingamResult {
        dag,
        causal_order,
        pruned_mask,
        b_unpruned: b,
        gaussian_warning: ica.gaussian_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn permuted_diagonal_resolves_to_identity() {
        let w = dmatrix![0.0, 3.0, 0.0; 0.0, 0.0, -2.0; 0.5, 0.0, 0.0];
        let r = resolve_permutation_scaling(&w).unwrap();
        assert_eq!(r, DMatrix::identity(3, 3));
    }

    #[test]
    fn shuffled_scaled_chain_recovers_identity_minus_a() {
        let a = dmatrix![0.0, 0.0, 0.0; 0.7, 0.0, 0.0; 0.0, -0.4, 0.0];
        let w0 = DMatrix::identity(3, 3) - &a;
        let scales = [2.0, -0.5, 3.0];
        let perm = [2, 0, 1];
        let w = DMatrix::from_fn(3, 3, |r, c| scales[r] * w0[(perm[r], c)]);
        let r = resolve_permutation_scaling(&w).unwrap();
        assert!((r - &w0).amax() < 1e-12);
        assert!((estimate_b_matrix(&w0) - a).amax() == 0.0);
    }

    #[test]
    fn zero_column_is_unidentifiable() {
        let w = dmatrix![1.0, 0.0; 2.0, 0.0];
        assert!(matches!(
            resolve_permutation_scaling(&w),
            Err(Error::Identifiability(_))
        ));
    }

    #[test]
    fn identity_gives_empty_b() {
        assert_eq!(
            estimate_b_matrix(&DMatrix::<f64>::identity(4, 4)),
            DMatrix::zeros(4, 4)
        );
    }

    #[test]
    fn causal_order_examples() {
        let lower = dmatrix![0.0, 0.0, 0.0; 0.5, 0.0, 0.0; 0.2, 0.3, 0.0];
        assert_eq!(find_causal_order(&lower), vec![0, 1, 2]);
        let upper = lower.transpose();
        assert_eq!(find_causal_order(&upper), vec![2, 1, 0]);
    }

    #[test]
    fn prune_examples() {
        let b = dmatrix![0.0, 0.2, 0.0; 0.5, 0.0, 0.01; 0.2, 0.3, 0.0];
        let d = prune_edges(&b, &[0, 1, 2], 0.0).unwrap();
        assert_eq!(
            d.weights(),
            &dmatrix![0.0, 0.0, 0.0; 0.5, 0.0, 0.0; 0.2, 0.3, 0.0]
        );
        let empty = prune_edges(&b, &[0, 1, 2], f64::INFINITY).unwrap();
        assert_eq!(empty.n_edges(), 0);
        assert!(prune_edges(&b, &[0, 0, 2], 0.0).is_err());
    }

    #[test]
    fn greedy_paths_agree_with_exhaustive_on_easy_input() {
        // 10 nodes forces the greedy branches
        let n = 10;
        let b = DMatrix::from_fn(n, n, |i, j| if i > j { 0.5 } else { 0.0 });
        assert_eq!(find_causal_order(&b), (0..n).collect::<Vec<_>>());
        let w = DMatrix::<f64>::identity(n, n) - &b;
        let (rows, cost) = best_row_assignment(&w);
        assert_eq!(rows, (0..n).collect::<Vec<_>>());
        assert_eq!(cost, n as f64);
    }
}
