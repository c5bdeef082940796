use nalgebra::DVector;

use crate::topology::{RadialNetwork, ROOT};

/// Matrix-free products and solves with `X` on a full (unrestricted) tree.
///
/// Every operation is `O(n)`: products walk the preorder once or twice and
/// solves eliminate leaves towards the root, which creates no fill on a tree.
#[derive(Debug, Clone)]
pub struct TreeOperator<'a> {
    net: &'a RadialNetwork,
    /// Root-path reactance per node (index 0 is the root).
    path_x: Vec<f64>,
    /// Diagonal of `X^{-1}` (index `i - 1` for node `i`).
    inv_diag: Vec<f64>,
}

impl<'a> TreeOperator<'a> {
    pub fn new(net: &'a RadialNetwork) -> Self {
        let n = net.n();
        let mut path_x = vec![0.0; n + 1];
        for &u in net.preorder() {
            path_x[u] = path_x[net.parent(u)] + net.feeder_line(u).x;
        }
        let mut inv_diag = vec![0.0; n];
        for line in net.lines() {
            let w = 1.0 / line.x;
            inv_diag[line.to - 1] += w;
            if line.from != ROOT {
                inv_diag[line.from - 1] += w;
            }
        }
        Self {
            net,
            path_x,
            inv_diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.net.n()
    }

    /// `D = diag(X)`.
    pub fn diag(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.path_x[1..].iter().copied())
    }

    /// `X v`.
    pub fn apply_x(&self, v: &DVector<f64>) -> DVector<f64> {
        let net = self.net;
        let n = self.dim();
        let mut below = vec![0.0; n + 1];
        for &u in net.preorder().iter().rev() {
            below[u] += v[u - 1];
            let p = net.parent(u);
            if p != ROOT {
                below[p] += below[u];
            }
        }
        let mut acc = vec![0.0; n + 1];
        for &u in net.preorder() {
            acc[u] = acc[net.parent(u)] + net.feeder_line(u).x * below[u];
        }
        DVector::from_iterator(n, acc[1..].iter().copied())
    }

    /// `(X - D) v`.
    pub fn apply_xbar(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.apply_x(v);
        for (k, o) in out.iter_mut().enumerate() {
            *o -= self.path_x[k + 1] * v[k];
        }
        out
    }

    /// `X^{-1} v`, grounded Laplacian of the inverse tree.
    pub fn apply_x_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out =
            DVector::from_iterator(self.dim(), self.inv_diag.iter().zip(v.iter()).map(|(d, x)| d * x));
        for line in self.net.lines() {
            if line.from != ROOT {
                let w = 1.0 / line.x;
                let (p, c) = (line.from - 1, line.to - 1);
                out[p] -= w * v[c];
                out[c] -= w * v[p];
            }
        }
        out
    }

    /// Solves `(X^{-1} + diag(g)) z = b` by leaf-to-root elimination.
    pub fn solve_inverse_shifted(&self, g: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let net = self.net;
        let n = self.dim();
        let mut piv: Vec<f64> = (0..n).map(|k| self.inv_diag[k] + g[k]).collect();
        let mut rhs: Vec<f64> = b.iter().copied().collect();
        for &u in net.preorder().iter().rev() {
            let p = net.parent(u);
            if p != ROOT {
                let w = 1.0 / net.feeder_line(u).x;
                let (pu, pp) = (u - 1, p - 1);
                piv[pp] -= w * w / piv[pu];
                rhs[pp] += w * rhs[pu] / piv[pu];
            }
        }
        let mut z = DVector::zeros(n);
        for &u in net.preorder() {
            let p = net.parent(u);
            let coupling = if p == ROOT {
                0.0
            } else {
                z[p - 1] / net.feeder_line(u).x
            };
            z[u - 1] = (rhs[u - 1] + coupling) / piv[u - 1];
        }
        z
    }

    /// Solves `(X + diag(e)) z = b` for a positive diagonal `e`.
    ///
    /// Uses `(X + E)^{-1} = E^{-1} (X^{-1} + E^{-1})^{-1} X^{-1}`, which keeps
    /// every step a tree solve or a sparse product.
    pub fn solve_shifted(&self, e: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let e_inv = e.map(|v| 1.0 / v);
        let lb = self.apply_x_inverse(b);
        let u = self.solve_inverse_shifted(&e_inv, &lb);
        u.component_mul(&e_inv)
    }
}
