//! Exhaustive and greedy searches over node permutations.

/// Advances `p` to the next permutation in lexicographic order; returns
/// `false` (leaving `p` sorted ascending) after the last one.
pub(crate) fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        p.reverse();
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Lexicographically first permutation of `0..n` minimizing `cost`.
pub(crate) fn argmin_permutation(
    n: usize,
    mut cost: impl FnMut(&[usize]) -> f64,
) -> (Vec<usize>, f64) {
    let mut p: Vec<usize> = (0..n).collect();
    let mut best = p.clone();
    let mut best_cost = cost(&p);
    while next_permutation(&mut p) {
        let c = cost(&p);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&p);
        }
    }
    (best, best_cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_all_permutations_in_order() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        let mut prev = p.clone();
        while next_permutation(&mut p) {
            assert!(p > prev);
            prev = p.clone();
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(p, vec![0, 1, 2, 3]);
    }

    #[test]
    fn ties_go_to_lexicographically_first() {
        let (best, c) = argmin_permutation(3, |_| 1.0);
        assert_eq!(best, vec![0, 1, 2]);
        assert_eq!(c, 1.0);
    }
}
