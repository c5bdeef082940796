//! Voltage-to-injection sensitivity matrices of a radial feeder.
//!
//! `X[i][j]` (and `R[i][j]`) is the total reactance (resistance) of the lines
//! shared by the root paths of nodes `i` and `j`. Its inverse is sparse: the
//! weighted Laplacian of the inverse tree plus a `1/x` term on the root child.

mod operator;

pub use operator::TreeOperator;

use nalgebra::{DMatrix, DVector};

use crate::topology::{RadialNetwork, ROOT};
use crate::{Error, Result};

/// `X`, `R`, `D = diag(X)` and `Xbar = X - D`, possibly restricted to a
/// subset of buses (`nodes` holds their 0-based indices).
#[derive(Debug, Clone)]
pub struct SensitivitySet {
    pub x: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub d: DVector<f64>,
    pub xbar: DMatrix<f64>,
    pub nodes: Vec<usize>,
}

impl SensitivitySet {
    pub fn from_matrices(x: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        let d = x.diagonal();
        let mut xbar = x.clone();
        xbar.fill_diagonal(0.0);
        let nodes = (0..x.nrows()).collect();
        Self { x, r, d, xbar, nodes }
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Principal submatrices on the given (0-based, relative) indices.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
        let mut set = Self::from_matrices(pick(&self.x), pick(&self.r));
        set.nodes = idx.iter().map(|&k| self.nodes[k]).collect();
        set
    }

    /// `D` as a diagonal matrix.
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }
}

/// Builds the full `X`, `R` over all non-root nodes in `O(n^2)`.
pub fn build_sensitivity(net: &RadialNetwork) -> SensitivitySet {
    let x = path_sum_matrix(net, |l| l.x);
    let r = path_sum_matrix(net, |l| l.r);
    SensitivitySet::from_matrices(x, r)
}

/// Row `u` equals the parent's row except on the subtree of `u`, where it is
/// the root-path total of `u`.
fn path_sum_matrix(net: &RadialNetwork, weight: impl Fn(&crate::topology::Line) -> f64) -> DMatrix<f64> {
    let n = net.n();
    let order = net.preorder();
    let mut m = DMatrix::zeros(n, n);
    let mut total = vec![0.0; n + 1];
    for &u in order {
        let p = net.parent(u);
        total[u] = total[p] + weight(net.feeder_line(u));
        if p != ROOT {
            let parent_row = m.row(p - 1).into_owned();
            m.row_mut(u - 1).copy_from(&parent_row);
        }
        for &w in &order[net.subtree_range(u)] {
            m[(u - 1, w - 1)] = total[u];
        }
    }
    m
}

/// `X^{-1}` from the inverse-tree Laplacian plus `1/a` on the root child,
/// `a` being the reactance of the root line.
pub fn x_inverse_analytic(net: &RadialNetwork) -> DMatrix<f64> {
    let mut inv = net.inverse_tree_laplacian();
    let c = net.root_child();
    inv[(c - 1, c - 1)] += 1.0 / net.feeder_line(c).x;
    inv
}

/// Tridiagonal `X^{-1}` of the chain `0 -> 1 -> ... -> n` with line
/// reactances `xs[k]` on `(k, k+1)`.
pub fn chain_x_inverse(xs: &[f64]) -> Result<DMatrix<f64>> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::EmptyChain);
    }
    if let Some(&x) = xs.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::InvalidControl(format!(
            "chain reactance {x} must be positive"
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let up = 1.0 / xs[i];
        let down = if i + 1 < n { 1.0 / xs[i + 1] } else { 0.0 };
        m[(i, i)] = up + down;
        if i + 1 < n {
            m[(i, i + 1)] = -down;
            m[(i + 1, i)] = -down;
        }
    }
    Ok(m)
}

/// Closed-form eigenvalues of `X^{-1}` for a uniform chain, largest first:
/// `(2/a)(1 + cos(2k*pi/(2n+1)))`, `k = 1..n`.
pub fn uniform_chain_eigenvalues(n: usize, a: f64) -> Vec<f64> {
    (1..=n)
        .map(|k| 2.0 / a * (1.0 + (2.0 * k as f64 * std::f64::consts::PI / (2 * n + 1) as f64).cos()))
        .collect()
}

/// Smallest eigenvalue of `X` for a uniform chain.
pub fn uniform_chain_lambda_min(n: usize, a: f64) -> f64 {
    a / (2.0 + 2.0 * (2.0 * std::f64::consts::PI / (2 * n + 1) as f64).cos())
}

/// Bracket on the `k`-th largest eigenvalue of `X` for a chain whose line
/// reactances all lie in `[a, b]`.
pub fn chain_eigen_bounds(n: usize, a: f64, b: f64, k: usize) -> Result<(f64, f64)> {
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange { k, n });
    }
    if !(a > 0.0 && a <= b) {
        return Err(Error::InvalidControl(format!(
            "need 0 < a <= b, got a={a}, b={b}"
        )));
    }
    let denom = 2.0 + 2.0 * (2.0 * (n - k + 1) as f64 * std::f64::consts::PI / (2 * n + 1) as f64).cos();
    Ok((a / denom, b / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_frobenius, sym_eigenvalues};
    use crate::testutil::{four_bus_tree, random_instance};
    use crate::topology::chain;

    #[test]
    fn chain_and_single_bus_matrices() {
        let (a, b) = (0.3, 1.7);
        let s = build_sensitivity(&chain(&[a, b]).unwrap());
        assert_eq!(s.x, DMatrix::from_row_slice(2, 2, &[a, a, a, a + b]));
        let s1 = build_sensitivity(&chain(&[a]).unwrap());
        assert_eq!(s1.x, DMatrix::from_element(1, 1, a));
    }

    #[test]
    fn four_bus_reactance_matrix() {
        let (a, b, c, d) = (1.1, 0.6, 2.5, 0.9);
        let s = build_sensitivity(&four_bus_tree(a, b, c, d));
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                a,
                a,
                a,
                a,
                a,
                a + b,
                a + b,
                a,
                a,
                a + b,
                a + b + c,
                a,
                a,
                a,
                a,
                a + d,
            ],
        );
        assert!((s.x - expected).amax() < 1e-14);
    }

    #[test]
    fn four_bus_inverse_entry() {
        let (a, b, c, d) = (1.1, 0.6, 2.5, 0.9);
        let inv = x_inverse_analytic(&four_bus_tree(a, b, c, d));
        assert!((inv[(0, 0)] - ((b + d) / (b * d) + 1.0 / a)).abs() < 1e-13);
        assert!((inv[(0, 1)] + 1.0 / b).abs() < 1e-14);
        assert_eq!(inv[(0, 2)], 0.0);
    }

    #[test]
    fn chain_inverse_by_hand() {
        let (a, b) = (0.4, 2.0);
        let inv = x_inverse_analytic(&chain(&[a, b]).unwrap());
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / a + 1.0 / b, -1.0 / b, -1.0 / b, 1.0 / b]);
        assert!((&inv - &expected).amax() < 1e-14);
        assert!((chain_x_inverse(&[a, b]).unwrap() - expected).amax() < 1e-14);
    }

    #[test]
    fn chain_inverse_printed_unit_case() {
        let m = chain_x_inverse(&[1.0, 1.0, 1.0]).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(m, expected);
        assert_eq!(chain_x_inverse(&[0.5]).unwrap()[(0, 0)], 2.0);
        assert!(matches!(chain_x_inverse(&[]), Err(Error::EmptyChain)));
    }

    #[test]
    fn laplacian_row_sums_and_root_correction() {
        let inst = random_instance(&[0.4, 0.6], 6, 11);
        let net = &inst.network;
        let ones = DVector::from_element(net.n(), 1.0);
        let lap_sum = net.inverse_tree_laplacian() * &ones;
        assert!(lap_sum.amax() < 1e-9);
        let inv_sum = x_inverse_analytic(net) * &ones;
        let c = net.root_child() - 1;
        for (k, v) in inv_sum.iter().enumerate() {
            let expected = if k == c {
                1.0 / net.feeder_line(c + 1).x
            } else {
                0.0
            };
            assert!((v - expected).abs() < 1e-9, "row {k}: {v}");
        }
    }

    #[test]
    fn analytic_inverse_on_random_trees() {
        for seed in 0..10 {
            let inst = random_instance(&[0.5, 0.5], 7, seed);
            let s = build_sensitivity(&inst.network);
            let prod = &s.x * x_inverse_analytic(&inst.network);
            let eye = DMatrix::identity(s.dim(), s.dim());
            assert!(rel_frobenius(&prod, &eye) < 1e-10);
        }
    }

    #[test]
    fn structural_invariants() {
        let inst = random_instance(&[0.3, 0.3, 0.4], 5, 4);
        let s = build_sensitivity(&inst.network);
        let n = s.dim();
        assert_eq!(s.x, s.x.transpose());
        assert_eq!(s.d_matrix() + &s.xbar, s.x);
        for i in 0..n {
            let path: f64 = inst
                .network
                .path_to_root(i + 1)
                .unwrap()
                .iter()
                .map(|l| l.x)
                .sum();
            assert!((s.d[i] - path).abs() < 1e-9 * path);
            for j in 0..n {
                assert!(s.x[(i, j)] <= s.x[(i, i)].min(s.x[(j, j)]) + 1e-12);
            }
        }
        let eig = sym_eigenvalues(&s.x);
        assert!(eig[0] > 1e-12 * eig[n - 1]);
    }

    #[test]
    fn restriction_is_submatrix_of_path_definition() {
        let inst = random_instance(&[0.5, 0.5], 6, 2);
        let net = &inst.network;
        let s = build_sensitivity(net);
        let idx: Vec<usize> = (0..net.n()).step_by(3).collect();
        let sub = s.restrict(&idx);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let shared: f64 = net
                    .path_intersection(i + 1, j + 1)
                    .unwrap()
                    .iter()
                    .map(|l| l.x)
                    .sum();
                assert!((sub.x[(a, b)] - shared).abs() < 1e-9);
            }
        }
        assert_eq!(sub.nodes, idx);
    }

    #[test]
    fn uniform_eigenvalues_small_cases() {
        assert!((uniform_chain_eigenvalues(1, 1.0)[0] - 1.0).abs() < 1e-12);
        let closed = uniform_chain_eigenvalues(3, 1.0);
        let numeric = sym_eigenvalues(&chain_x_inverse(&[1.0; 3]).unwrap());
        for k in 0..3 {
            assert!((closed[k] - numeric[2 - k]).abs() < 1e-12);
        }
        let lmin = uniform_chain_lambda_min(3, 2.0);
        assert!((lmin - 2.0 / closed[0] * 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_bounds_collapse_and_index_check() {
        let n = 6;
        let closed = uniform_chain_eigenvalues(n, 1.5);
        for k in 1..=n {
            let (lo, hi) = chain_eigen_bounds(n, 1.5, 1.5, k).unwrap();
            assert_eq!(lo, hi);
            // k-th largest of X is the reciprocal of the k-th smallest of X^{-1}.
            assert!((lo - 1.0 / closed[n - k]).abs() < 1e-12);
        }
        assert!(matches!(
            chain_eigen_bounds(n, 1.0, 2.0, 7),
            Err(Error::IndexOutOfRange { k: 7, n: 6 })
        ));
    }
}
