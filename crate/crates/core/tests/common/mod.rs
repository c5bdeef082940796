//! Test-side oracles, kept independent of the library's own routines.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use voltgame::topology::{BusData, Line, RadialNetwork};

/// Tree with `n` non-root nodes; node `i` hangs off a uniformly chosen
/// earlier node (node 1 hangs off the root).
pub fn random_parent_tree<R: Rng>(rng: &mut R, n: usize, x: (f64, f64), r: (f64, f64)) -> RadialNetwork {
    let mut lines = Vec::with_capacity(n);
    for i in 1..=n {
        let parent = if i == 1 { 0 } else { rng.gen_range(1..i) };
        lines.push(Line::new(
            parent,
            i,
            rng.gen_range(r.0..=r.1),
            rng.gen_range(x.0..=x.1),
        ));
    }
    RadialNetwork::new(1.0, vec![BusData::default(); n], lines).unwrap()
}

fn ancestors(net: &RadialNetwork, mut i: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while i != 0 {
        out.push(i);
        i = net.feeder_line(i).from;
    }
    out
}

/// `X_ij` as the reactance summed over lines on both root paths.
pub fn path_matrix(net: &RadialNetwork, resistance: bool) -> DMatrix<f64> {
    let n = net.n();
    let paths: Vec<Vec<usize>> = (1..=n).map(|i| ancestors(net, i)).collect();
    DMatrix::from_fn(n, n, |a, b| {
        paths[a]
            .iter()
            .filter(|u| paths[b].contains(u))
            .map(|&u| {
                let l = net.feeder_line(u);
                if resistance {
                    l.r
                } else {
                    l.x
                }
            })
            .sum()
    })
}

/// Droop map `f(u)` written out directly.
pub fn droop(alpha: f64, delta: f64, u: f64) -> f64 {
    -alpha * (u - delta / 2.0).max(0.0) + alpha * (-u - delta / 2.0).max(0.0)
}

/// `C(q) = q²/(2α) + (δ/2)|q|`.
pub fn droop_cost(alpha: f64, delta: f64, q: f64) -> f64 {
    q * q / (2.0 * alpha) + 0.5 * delta * q.abs()
}

pub struct DeskProblem {
    pub x: DMatrix<f64>,
    pub dv: DVector<f64>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DeskProblem {
    pub fn f(&self, q: &[f64]) -> f64 {
        let qv = DVector::from_column_slice(q);
        let cost: f64 = (0..q.len())
            .map(|i| droop_cost(self.alpha[i], self.delta[i], q[i]))
            .sum();
        cost + 0.5 * qv.dot(&(&self.x * &qv)) + qv.dot(&self.dv)
    }

    pub fn w(&self, q: &[f64]) -> f64 {
        self.f(q) + 0.5 * (0..q.len()).map(|i| self.x[(i, i)] * q[i] * q[i]).sum::<f64>()
    }

    /// Minimizes `obj` over the box by nested golden-section searches:
    /// the outer search runs over `q_0` and each evaluation minimizes over
    /// the remaining coordinates. Exact up to `tol` for convex objectives.
    pub fn nested_min(&self, obj: &dyn Fn(&[f64]) -> f64, tol: f64) -> (Vec<f64>, f64) {
        let mut q = vec![0.0; self.x.nrows()];
        let v = self.nested(obj, &mut q, 0, tol);
        (q, v)
    }

    fn nested(&self, obj: &dyn Fn(&[f64]) -> f64, q: &mut Vec<f64>, k: usize, tol: f64) -> f64 {
        if k == q.len() {
            return obj(q);
        }
        let eval = |t: f64, q: &mut Vec<f64>| {
            q[k] = t;
            self.nested(obj, q, k + 1, tol)
        };
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (self.lo[k], self.hi[k]);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = eval(c, q);
        let mut fd = eval(d, q);
        while b - a > tol {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = eval(c, q);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = eval(d, q);
            }
        }
        // The last evaluation leaves the inner coordinates at their minimizers.
        eval(0.5 * (a + b), q)
    }
}
