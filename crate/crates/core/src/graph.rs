//! Dense graph primitives: the shared causal DAG, graph polynomial filters,
//! spectral checks and the `vec`/Kronecker identities used by the stage-1
//! solver.
//!
//! Edge convention: `A[(i, j)] != 0` means node `j` is a parent of node `i`
//! (row = effect, column = cause), so that a structural equation reads
//! `x = A x + e`. Every module and every exported file uses this convention.

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Entries with magnitude below this are structural zeros in graph tests.
pub const STRUCTURAL_ZERO: f64 = 1e-12;

/// Tolerance on the accumulated trace of matrix powers in [`is_dag`].
pub const NILPOTENCY_TOL: f64 = 1e-8;

/// Dense square matrix. Used for lag filters, `I - A` and intermediates.
pub type SquareMatrix<T> = DMatrix<T>;

/// Weighted adjacency matrix certified to be acyclic with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DagMatrix<T: Real> {
    weights: DMatrix<T>,
}

impl<T: Real> DagMatrix<T> {
    /// Validates `weights` as a DAG: square, exactly zero diagonal, acyclic support.
    pub fn new(weights: DMatrix<T>) -> Result<Self> {
        ensure_square("DagMatrix::new", &weights)?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("DAG weights must be finite".into()));
        }
        if (0..weights.nrows()).any(|i| weights[(i, i)] != T::zero()) {
            return Err(Error::InvalidArgument(
                "DAG diagonal must be exactly zero".into(),
            ));
        }
        if !is_dag(&weights, T::lit(NILPOTENCY_TOL)) {
            return Err(Error::InvalidArgument(
                "weights contain a directed cycle".into(),
            ));
        }
        Ok(Self { weights })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.weights
    }

    /// Boolean support `|A_ij| > thresh`.
    pub fn support(&self, thresh: T) -> DMatrix<bool> {
        self.weights.map(|w| w.abs() > thresh)
    }

    pub fn n_edges(&self) -> usize {
        self.weights
            .iter()
            .filter(|w| w.abs() >= T::lit(STRUCTURAL_ZERO))
            .count()
    }

    /// `I - A`.
    pub fn identity_minus(&self) -> DMatrix<T> {
        DMatrix::identity(self.n(), self.n()) - &self.weights
    }

    /// `(I - A)^{-1}`, exact for a DAG as the finite sum `sum_{r<N} A^r`.
    pub fn inverse_identity_minus(&self) -> DMatrix<T> {
        let n = self.n();
        // Horner form of I + A + ... + A^{n-1}
        let mut acc = DMatrix::identity(n, n);
        for _ in 1..n {
            acc = DMatrix::identity(n, n) + &self.weights * acc;
        }
        acc
    }

    /// A topological order (parents before children); ties go to the lowest index.
    pub fn topological_order(&self) -> Vec<usize> {
        topological_order(&self.weights).expect("DagMatrix is acyclic by construction")
    }

    /// Applies the node relabeling `perm` (new index `a` is old node `perm[a]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: permute_similar(&self.weights, perm),
        }
    }
}

/// Polynomial coefficients `c = (c_10, c_11, c_20, c_21, c_22, ..., c_MM)`,
/// stored lag-major with `1 <= i <= M` and `0 <= j <= i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct PolyCoeffs<T: Real> {
    order: usize,
    coeffs: Vec<T>,
}

impl<T: Real> PolyCoeffs<T> {
    /// Number of coefficients for lag order `m`, `m(m+3)/2`.
    pub const fn len_for(order: usize) -> usize {
        order * (order + 3) / 2
    }

    const fn offset(i: usize) -> usize {
        (i - 1) * (i + 2) / 2
    }

    pub fn new(order: usize, coeffs: Vec<T>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "polynomial order must be at least 1".into(),
            ));
        }
        if coeffs.len() != Self::len_for(order) {
            return Err(Error::dims(
                "PolyCoeffs::new",
                Self::len_for(order),
                coeffs.len(),
            ));
        }
        Ok(Self { order, coeffs })
    }

    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "polynomial order must be at least 1");
        Self {
            order,
            coeffs: vec![T::zero(); Self::len_for(order)],
        }
    }

    /// Builds the stacked vector from per-lag vectors `c_1, ..., c_M`.
    pub fn from_lags(lags: &[Vec<T>]) -> Result<Self> {
        let order = lags.len();
        for (k, c) in lags.iter().enumerate() {
            if c.len() != k + 2 {
                return Err(Error::dims("PolyCoeffs::from_lags", k + 2, c.len()));
            }
        }
        Self::new(order, lags.iter().flatten().copied().collect())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficients `(c_i0, ..., c_ii)` of lag `i` (1-based).
    pub fn lag(&self, i: usize) -> &[T] {
        assert!(
            (1..=self.order).contains(&i),
            "lag {i} out of range 1..={}",
            self.order
        );
        &self.coeffs[Self::offset(i)..Self::offset(i + 1)]
    }

    pub fn lag_mut(&mut self, i: usize) -> &mut [T] {
        assert!(
            (1..=self.order).contains(&i),
            "lag {i} out of range 1..={}",
            self.order
        );
        &mut self.coeffs[Self::offset(i)..Self::offset(i + 1)]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.lag(i)[j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.coeffs
    }

    /// `P_i(A, c)` for every lag, in order.
    pub fn filters(&self, a: &DMatrix<T>) -> Result<Vec<DMatrix<T>>> {
        (1..=self.order)
            .map(|i| graph_polynomial(a, self.lag(i)))
            .collect()
    }
}

pub(crate) fn ensure_square<T: Real>(op: &'static str, m: &DMatrix<T>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(
            op,
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// `sum_j c[j] A^j`, evaluated in Horner form.
pub fn graph_polynomial<T: Real>(a: &DMatrix<T>, c: &[T]) -> Result<DMatrix<T>> {
    ensure_square("graph_polynomial", a)?;
    let Some((&last, rest)) = c.split_last() else {
        return Err(Error::InvalidArgument("empty coefficient vector".into()));
    };
    let n = a.nrows();
    let mut acc = DMatrix::identity(n, n) * last;
    for &cj in rest.iter().rev() {
        acc = a * acc;
        for d in 0..n {
            acc[(d, d)] += cj;
        }
    }
    Ok(acc)
}

/// Kahn topological sort of the support `|A_ij| >= STRUCTURAL_ZERO`.
/// Returns `None` when the support has a cycle (self-loops included).
pub fn topological_order<T: Real>(a: &DMatrix<T>) -> Option<Vec<usize>> {
    let n = a.nrows();
    let eps = T::lit(STRUCTURAL_ZERO);
    let mut indegree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| a[(i, j)].abs() >= eps).count())
        .collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&i| !placed[i] && indegree[i] == 0)?;
        placed[next] = true;
        order.push(next);
        for (child, deg) in indegree.iter_mut().enumerate() {
            if !placed[child] && a[(child, next)].abs() >= eps {
                *deg -= 1;
            }
        }
    }
    Some(order)
}

/// `sum_{k=1..N} |trace(A^k)|`; zero for nilpotent matrices.
pub fn nilpotency_residual<T: Real>(a: &DMatrix<T>) -> T {
    let n = a.nrows();
    let mut power = a.clone();
    let mut acc = T::zero();
    for k in 1..=n {
        if k > 1 {
            power = &power * a;
        }
        acc += power.trace().abs();
    }
    acc
}

/// True iff the support admits a topological order and the accumulated
/// trace of powers stays below `tol`.
pub fn is_dag<T: Real>(a: &DMatrix<T>, tol: T) -> bool {
    a.is_square() && topological_order(a).is_some() && nilpotency_residual(a) < tol
}

/// Largest eigenvalue modulus. Structurally acyclic inputs are nilpotent and
/// return exactly zero without an eigen-solve.
pub fn spectral_radius<T: Real>(a: &DMatrix<T>) -> Result<T> {
    ensure_square("spectral_radius", a)?;
    if a.nrows() == 0 || topological_order(a).is_some() {
        return Ok(T::zero());
    }
    let schur = Schur::try_new(a.clone(), T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let radius = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |m, v| m.max(v));
    Ok(radius)
}

/// Frobenius norm of `Ri Rj - Rj Ri`.
pub fn commutator_norm<T: Real>(ri: &DMatrix<T>, rj: &DMatrix<T>) -> Result<T> {
    ensure_square("commutator_norm", ri)?;
    if ri.shape() != rj.shape() {
        return Err(Error::dims(
            "commutator_norm",
            format!("{:?}", ri.shape()),
            format!("{:?}", rj.shape()),
        ));
    }
    Ok((ri * rj - rj * ri).norm())
}

/// Column-stacking `vec`.
pub fn vec<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec<T: Real>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// `(C^T kron A) vec(B)`, computed as `vec(A B C)` without forming the
/// Kronecker product.
pub fn kron_vec_apply<T: Real>(
    c: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<DVector<T>> {
    if a.ncols() != b.nrows() {
        return Err(Error::dims("kron_vec_apply (A B)", a.ncols(), b.nrows()));
    }
    if b.ncols() != c.nrows() {
        return Err(Error::dims("kron_vec_apply (B C)", b.ncols(), c.nrows()));
    }
    Ok(vec(&(a * b * c)))
}

/// `||(I - A)^{-1} - sum_{r=0..terms} A^r||_F`.
pub fn geometric_inverse_check<T: Real>(a: &DMatrix<T>, terms: usize) -> Result<T> {
    ensure_square("geometric_inverse_check", a)?;
    let n = a.nrows();
    let id = DMatrix::<T>::identity(n, n);
    let inv = (&id - a)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I - A is singular".into()))?;
    let mut series = id.clone();
    let mut power = id;
    for _ in 0..terms {
        power = &power * a;
        series += &power;
    }
    Ok((inv - series).norm())
}

/// `P A P^T` for the relabeling where new index `k` is old node `perm[k]`.
pub fn permute_similar<T: Real>(a: &DMatrix<T>, perm: &[usize]) -> DMatrix<T> {
    let n = perm.len();
    DMatrix::from_fn(n, n, |r, c| a[(perm[r], perm[c])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn polynomial_identity_coefficients_give_a() {
        let a = dmatrix![0.0, 0.2, 0.0; 0.0, 0.0, 0.0; -0.7, 0.4, 0.0];
        let p = graph_polynomial(&a, &[0.0, 1.0]).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn polynomial_of_zero_matrix_is_scaled_identity() {
        let a = DMatrix::<f64>::zeros(3, 3);
        let p = graph_polynomial(&a, &[0.3, -2.0, 5.0]).unwrap();
        assert_eq!(p, DMatrix::identity(3, 3) * 0.3);
    }

    #[test]
    fn polynomial_hand_computed_two_node_case() {
        let a = dmatrix![0.0, 0.0; 0.5, 0.0];
        let p = graph_polynomial(&a, &[1.0, 2.0, 3.0]).unwrap();
        // power accumulation: I + 2A + 3A^2
        let direct = DMatrix::identity(2, 2) + &a * 2.0 + &a * &a * 3.0;
        assert_eq!(p, dmatrix![1.0, 0.0; 1.0, 1.0]);
        assert!((p - direct).norm() < 1e-15);
    }

    #[test]
    fn polynomial_rejects_bad_input() {
        let a = DMatrix::<f64>::zeros(2, 3);
        assert!(graph_polynomial(&a, &[1.0]).is_err());
        assert!(graph_polynomial(&DMatrix::<f64>::zeros(2, 2), &[]).is_err());
    }

    #[test]
    fn dag_detection() {
        let lower = dmatrix![0.0, 0.0, 0.0; 0.5, 0.0, 0.0; 0.1, -0.3, 0.0];
        assert!(is_dag(&lower, NILPOTENCY_TOL));
        let cycle = dmatrix![0.0, 1.0; 1.0, 0.0];
        assert!(!is_dag(&cycle, NILPOTENCY_TOL));
        let self_loop = dmatrix![0.1, 0.0; 0.0, 0.0];
        assert!(!is_dag(&self_loop, NILPOTENCY_TOL));
    }

    #[test]
    fn dag_matrix_rejects_cycles_and_diagonal() {
        assert!(DagMatrix::new(dmatrix![0.0, 1.0; 1.0, 0.0]).is_err());
        assert!(DagMatrix::new(dmatrix![0.5, 0.0; 0.0, 0.0]).is_err());
        assert!(DagMatrix::new(dmatrix![0.0, 0.0; 0.5, 0.0]).is_ok());
    }

    #[test]
    fn spectral_radius_examples() {
        let nil = dmatrix![0.0, 0.0, 0.0; 0.8, 0.0, 0.0; 0.3, -0.9, 0.0];
        assert!(spectral_radius(&nil).unwrap() < 1e-8);
        let scaled = DMatrix::<f64>::identity(3, 3) * 0.9;
        assert!((spectral_radius(&scaled).unwrap() - 0.9).abs() < 1e-12);
        // lambda^2 = 0.12
        let swap = dmatrix![0.0, 0.3; 0.4, 0.0];
        assert!((spectral_radius(&swap).unwrap() - 0.12f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn commutator_examples() {
        let a = dmatrix![0.0, 0.0; 0.7, 0.0];
        assert_eq!(commutator_norm(&a, &(&a * &a)).unwrap(), 0.0);
        let e12 = dmatrix![0.0, 1.0; 0.0, 0.0];
        let e21 = dmatrix![0.0, 0.0; 1.0, 0.0];
        // [E12, E21] = diag(1, -1)
        assert!((commutator_norm(&e12, &e21).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(commutator_norm(&a, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn kron_vec_apply_trivial_cases() {
        let b = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0];
        let i2 = DMatrix::identity(2, 2);
        let i3 = DMatrix::identity(3, 3);
        assert_eq!(kron_vec_apply(&i3, &i2, &b).unwrap(), vec(&b));
        let zero = DMatrix::<f64>::zeros(2, 3);
        assert_eq!(kron_vec_apply(&i3, &i2, &zero).unwrap(), DVector::zeros(6));
        assert!(kron_vec_apply(&i2, &i2, &b).is_err());
    }

    #[test]
    fn geometric_inverse_examples() {
        assert_eq!(
            geometric_inverse_check(&DMatrix::<f64>::zeros(3, 3), 0).unwrap(),
            0.0
        );
        let shift = dmatrix![0.0, 0.0, 0.0; 0.5, 0.0, 0.0; 0.0, 0.5, 0.0];
        assert!(geometric_inverse_check(&shift, 2).unwrap() < 1e-12);
        assert!(geometric_inverse_check(&shift, 1).unwrap() > 0.1);
    }

    #[test]
    fn inverse_identity_minus_matches_dense_inverse() {
        let dag = DagMatrix::new(dmatrix![0.0, 0.0, 0.0; 0.8, 0.0, 0.0; 0.3, -0.9, 0.0]).unwrap();
        let dense = dag.identity_minus().try_inverse().unwrap();
        assert!((dag.inverse_identity_minus() - dense).norm() < 1e-14);
    }

    #[test]
    fn poly_coeffs_layout() {
        let c = PolyCoeffs::new(3, (0..9).map(f64::from).collect()).unwrap();
        assert_eq!(c.lag(1), &[0.0, 1.0]);
        assert_eq!(c.lag(2), &[2.0, 3.0, 4.0]);
        assert_eq!(c.lag(3), &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(c.get(3, 2), 7.0);
        assert!(PolyCoeffs::<f64>::new(3, vec![0.0; 8]).is_err());
        assert_eq!(PolyCoeffs::<f64>::len_for(10), 65);
    }

    #[test]
    fn permuted_dag_stays_acyclic() {
        let dag = DagMatrix::new(dmatrix![0.0, 0.0, 0.0; 0.8, 0.0, 0.0; 0.3, -0.9, 0.0]).unwrap();
        let p = dag.permuted(&[2, 0, 1]);
        assert!(is_dag(p.weights(), NILPOTENCY_TOL));
        assert_eq!(p.n_edges(), 3);
    }

    #[test]
    fn generic_over_f32() {
        let a = dmatrix![0.0f32, 0.0; 0.5, 0.0];
        let p = graph_polynomial(&a, &[1.0f32, 2.0, 3.0]).unwrap();
        assert_eq!(p, dmatrix![1.0f32, 0.0; 1.0, 1.0]);
        assert!(is_dag(&a, 1e-6f32));
    }
}
