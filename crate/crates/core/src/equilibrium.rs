//! Network and Nash equilibria, the price of signal-anticipation and its
//! spectral bounds.
//!
//! `F(q) = Σ C_i(q_i) + ½ qᵀXq + qᵀΔṽ` is minimized by the signal-taking
//! fixed point and `W(q) = F(q) + ½ qᵀDq` by the anticipating one. With
//! quadratic costs `Y = diag(y)` and no boxes the efficiency loss is
//! `½ Δṽᵀ Π Δṽ`, `Π = (X+D+Y)⁻¹ D (X+Y)⁻¹ D (X+D+Y)⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{voltage_from_q, LinearModel};
use crate::linalg::{lanczos_largest, spd_inverse, spd_solve, sym_eigen, LanczosOptions};
use crate::sensitivity::{SensitivitySet, TreeOperator};
use crate::topology::RadialNetwork;
use crate::{Error, Result};

/// Relative slack for the bound ordering checks. The scalar case has exact
/// equalities (`posa_max == refined_upper`, `upper - lower == gap_bound`).
pub const ORDERING_RTOL: f64 = 1e-9;

/// Above this size `posa_report_auto` switches to the matrix-free path.
pub const DENSE_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Network objective, minimized at the signal-taking equilibrium.
    F,
    /// Potential of the voltage-control game, minimized at the Nash point.
    W,
}

impl Objective {
    /// Weight on `X_ii` in the coordinate subproblem.
    fn self_weight(self) -> f64 {
        match self {
            Objective::F => 1.0,
            Objective::W => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solver {
    ClosedForm,
    Iterative { sweeps: usize, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub objective: Objective,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub f_value: f64,
    pub w_value: f64,
    pub solver: Solver,
}

pub fn objective_f(model: &LinearModel, q: &DVector<f64>) -> Result<f64> {
    check(model, q)?;
    let quad = 0.5 * q.dot(&(&model.s.x * q));
    Ok(model.ctrl.total_cost(q.as_slice())? + quad + q.dot(&model.vt.delta_v_tilde))
}

pub fn objective_w(model: &LinearModel, q: &DVector<f64>) -> Result<f64> {
    let f = objective_f(model, q)?;
    Ok(f + 0.5 * q.dot(&model.s.d.component_mul(q)))
}

pub fn objective(model: &LinearModel, which: Objective, q: &DVector<f64>) -> Result<f64> {
    match which {
        Objective::F => objective_f(model, q),
        Objective::W => objective_w(model, q),
    }
}

fn check(model: &LinearModel, q: &DVector<f64>) -> Result<()> {
    if q.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: q.len(),
        });
    }
    Ok(())
}

fn finish(
    model: &LinearModel,
    which: Objective,
    q: DVector<f64>,
    solver: Solver,
) -> Result<EquilibriumResult> {
    let v = voltage_from_q(&model.s, &q, &model.vt)?;
    Ok(EquilibriumResult {
        objective: which,
        f_value: objective_f(model, &q)?,
        w_value: objective_w(model, &q)?,
        q,
        v,
        solver,
    })
}

/// `q* = -(X+Y)⁻¹Δṽ` or `qᵃ = -(X+D+Y)⁻¹Δṽ`.
pub fn solve_quadratic(model: &LinearModel, which: Objective) -> Result<EquilibriumResult> {
    let y = model.ctrl.quadratic_costs().ok_or(Error::NotUnconstrained)?;
    let mut m = model.s.x.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += y[i];
        if which == Objective::W {
            m[(i, i)] += model.s.d[i];
        }
    }
    let q = -spd_solve(&m, &model.vt.delta_v_tilde, "equilibrium system")?;
    finish(model, which, q, Solver::ClosedForm)
}

#[derive(Debug, Clone, Copy)]
pub struct IterativeOptions {
    /// Target for `max_i |q_i - T_i(q)|`, `T_i` the exact coordinate minimizer.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_sweeps: 200_000,
        }
    }
}

/// Projected Gauss-Seidel coordinate descent on `F` or `W`.
///
/// Each coordinate subproblem is a convex scalar problem solved exactly by
/// the control's response map and clamped onto its box.
pub fn solve_iterative(
    model: &LinearModel,
    which: Objective,
    q0: &DVector<f64>,
    opts: &IterativeOptions,
) -> Result<EquilibriumResult> {
    check(model, q0)?;
    let n = model.dim();
    let x = &model.s.x;
    let w = which.self_weight();
    let mut q = DVector::from_fn(n, |i, _| model.ctrl.controls[i].project(q0[i]));
    // c_i = Σ_{j≠i} X_ij q_j + Δṽ_i, kept current as q changes.
    let mut c = &model.s.xbar * &q + &model.vt.delta_v_tilde;
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        for i in 0..n {
            let ctl = &model.ctrl.controls[i];
            let new = ctl.project(ctl.response(w * x[(i, i)], c[i]));
            let step = new - q[i];
            if step != 0.0 {
                q[i] = new;
                c.axpy(step, &x.column(i), 1.0);
                c[i] -= step * x[(i, i)];
            }
        }
        if sweep % 8 == 0 || sweep == opts.max_sweeps {
            c = &model.s.xbar * &q + &model.vt.delta_v_tilde;
        }
        residual = (0..n)
            .map(|i| {
                let ctl = &model.ctrl.controls[i];
                (ctl.project(ctl.response(w * x[(i, i)], c[i])) - q[i]).abs()
            })
            .fold(0.0, f64::max);
        if residual < opts.tol {
            return finish(
                model,
                which,
                q,
                Solver::Iterative {
                    sweeps: sweep,
                    residual,
                },
            );
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_sweeps,
        residual,
    })
}

/// Closed form when available, coordinate descent otherwise.
pub fn solve(model: &LinearModel, which: Objective) -> Result<EquilibriumResult> {
    match solve_quadratic(model, which) {
        Err(Error::NotUnconstrained) => solve_iterative(
            model,
            which,
            &DVector::zeros(model.dim()),
            &IterativeOptions::default(),
        ),
        other => other,
    }
}

/// `F(qᵃ) - F(q*)` for any cost model.
pub fn posa(model: &LinearModel) -> Result<f64> {
    let star = solve(model, Objective::F)?;
    let nash = solve(model, Objective::W)?;
    Ok(nash.f_value - star.f_value)
}

fn shifted(x: &DMatrix<f64>, diag: &DVector<f64>) -> DMatrix<f64> {
    let mut m = x.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += diag[i];
    }
    m
}

fn check_costs(n: usize, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if y.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidControl("cost coefficients must be positive".into()));
    }
    Ok(DVector::from_column_slice(y))
}

pub fn pi_matrix(s: &SensitivitySet, y: &[f64]) -> Result<DMatrix<f64>> {
    let y = check_costs(s.dim(), y)?;
    let k = spd_inverse(&shifted(&s.x, &y), "X+Y")?;
    let m = spd_inverse(&shifted(&s.x, &(&s.d + &y)), "X+D+Y")?;
    let dm = DMatrix::from_diagonal(&s.d) * &m;
    let pi = dm.transpose() * k * dm;
    Ok((&pi + pi.transpose()) * 0.5)
}

/// Worst-case efficiency loss per unit `‖Δṽ‖²` and its bounds, all on the
/// `½ λ` scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosaReport {
    pub n: usize,
    /// `½ λ_max(Π)`.
    pub posa_max: f64,
    /// `½ λ_max((X+Y)⁻¹)`.
    pub upper: f64,
    /// `½ d²/(λ_min(X)+d+y)² · λ_max((X+Y)⁻¹)`.
    pub refined_upper: f64,
    /// `½ λ_max((X+Y)⁻¹ - 2(X+D+Y)⁻¹)`, possibly negative.
    pub lower: f64,
    pub lower_clamped: f64,
    /// `λ_max((X+D+Y)⁻¹)`: bounds `upper - lower`.
    pub gap_bound: f64,
    pub lambda_min_x: f64,
    pub d: f64,
    pub y: f64,
    /// Unit eigenvector of `Π` for `λ_max`.
    pub worst_direction: Vec<f64>,
}

impl PosaReport {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        lambda_pi: f64,
        lambda_k: f64,
        lambda_low: f64,
        lambda_m: f64,
        lambda_min_x: f64,
        d: f64,
        y: f64,
        worst_direction: Vec<f64>,
    ) -> Result<Self> {
        let factor = d * d / (lambda_min_x + d + y).powi(2);
        let lower = 0.5 * lambda_low;
        let report = Self {
            n: worst_direction.len(),
            posa_max: 0.5 * lambda_pi,
            upper: 0.5 * lambda_k,
            refined_upper: 0.5 * factor * lambda_k,
            lower,
            lower_clamped: lower.max(0.0),
            gap_bound: lambda_m,
            lambda_min_x,
            d,
            y,
            worst_direction,
        };
        report.check_ordering(ORDERING_RTOL)?;
        Ok(report)
    }

    /// `lower <= posa_max <= refined_upper <= upper` and
    /// `upper - lower <= gap_bound`, with relative slack `rtol`.
    pub fn check_ordering(&self, rtol: f64) -> Result<()> {
        let slack = rtol * self.upper.abs().max(self.gap_bound.abs());
        let le = |a: f64, b: f64, what: &str| {
            if a <= b + slack {
                Ok(())
            } else {
                Err(Error::Invariant(format!("{what}: {a:e} > {b:e}")))
            }
        };
        le(self.lower, self.posa_max, "lower <= posa_max")?;
        le(self.posa_max, self.refined_upper, "posa_max <= refined_upper")?;
        le(self.refined_upper, self.upper, "refined_upper <= upper")?;
        le(
            self.upper - self.lower,
            self.gap_bound,
            "upper - lower <= gap_bound",
        )
    }

    /// `½ eᵀΠe` for a direction `e`, given `Π`.
    pub fn posa_for(pi: &DMatrix<f64>, dv: &DVector<f64>) -> f64 {
        0.5 * dv.dot(&(pi * dv))
    }
}

fn d_and_y(d: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    (d.max(), y.min())
}

/// Dense report for quadratic costs `y` on the buses of `s`.
pub fn posa_report(s: &SensitivitySet, y: &[f64]) -> Result<PosaReport> {
    let yv = check_costs(s.dim(), y)?;
    let k = spd_inverse(&shifted(&s.x, &yv), "X+Y")?;
    let m = spd_inverse(&shifted(&s.x, &(&s.d + &yv)), "X+D+Y")?;
    let pi = pi_matrix(s, y)?;
    let (pi_vals, pi_vecs) = sym_eigen(&pi);
    let top = pi_vals.len() - 1;
    let mut e = pi_vecs.column(top).into_owned();
    orient(&mut e);
    let top_of = |a: &DMatrix<f64>| sym_eigen(a).0.max();
    let (d, ymin) = d_and_y(&s.d, &yv);
    PosaReport::assemble(
        pi_vals[top],
        top_of(&k),
        top_of(&(&k - &m * 2.0)),
        top_of(&m),
        sym_eigen(&s.x).0.min(),
        d,
        ymin,
        e.as_slice().to_vec(),
    )
}

/// Sign convention for eigenvectors: largest-magnitude entry positive.
fn orient(e: &mut DVector<f64>) {
    let k = e.iamax();
    if e[k] < 0.0 {
        e.neg_mut();
    }
}

/// Matrix-free report with every bus of `net` an actuator. Each product
/// with `(X+Y)⁻¹` or `(X+D+Y)⁻¹` is an `O(n)` tree solve and the extreme
/// eigenvalues come from Lanczos.
pub fn posa_report_tree(net: &RadialNetwork, y: &[f64], opts: LanczosOptions) -> Result<PosaReport> {
    let n = net.n();
    let yv = check_costs(n, y)?;
    let op = TreeOperator::new(net);
    let d = op.diag();
    let dy = &d + &yv;
    let k = |v: &DVector<f64>| op.solve_shifted(&yv, v);
    let m = |v: &DVector<f64>| op.solve_shifted(&dy, v);
    let pi = |v: &DVector<f64>| {
        let a = m(v).component_mul(&d);
        let b = k(&a).component_mul(&d);
        m(&b)
    };
    let top_pi = lanczos_largest(n, pi, opts)?;
    let top_k = lanczos_largest(n, k, opts)?;
    let top_low = lanczos_largest(n, |v| k(v) - m(v) * 2.0, opts)?;
    let top_m = lanczos_largest(n, m, opts)?;
    let top_xinv = lanczos_largest(n, |v| op.apply_x_inverse(v), opts)?;
    let mut e = top_pi.vector;
    orient(&mut e);
    let (dmax, ymin) = d_and_y(&d, &yv);
    PosaReport::assemble(
        top_pi.value,
        top_k.value,
        top_low.value,
        top_m.value,
        1.0 / top_xinv.value,
        dmax,
        ymin,
        e.as_slice().to_vec(),
    )
}

/// Dense below `DENSE_LIMIT` buses, matrix-free above.
pub fn posa_report_auto(net: &RadialNetwork, s: Option<&SensitivitySet>, y: &[f64]) -> Result<PosaReport> {
    if net.n() <= DENSE_LIMIT {
        match s {
            Some(s) => posa_report(s, y),
            None => posa_report(&crate::sensitivity::build_sensitivity(net), y),
        }
    } else {
        posa_report_tree(net, y, LanczosOptions::default())
    }
}

fn chain_lambda_min(n: usize, a: f64) -> f64 {
    let c = (2.0 * std::f64::consts::PI / (2.0 * n as f64 + 1.0)).cos();
    a / (2.0 + 2.0 * c)
}

fn chain_bound(d: f64, lambda: f64, y: f64) -> f64 {
    0.5 * d * d / ((lambda + d + y).powi(2) * (y + lambda))
}

/// Closed-form bound on `posa_max` for a chain of `n` lines of reactance `a`
/// and cost coefficients at least `y`.
pub fn chain_upper_bound_uniform(n: usize, a: f64, y: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyChain);
    }
    if !(a > 0.0 && y > 0.0) {
        return Err(Error::InvalidControl(
            "reactance and cost must be positive".into(),
        ));
    }
    Ok(chain_bound(a * n as f64, chain_lambda_min(n, a), y))
}

/// Bound for any chain with reactances in `[a, b]`, largest self-sensitivity
/// `d` and smallest cost coefficient `y`.
pub fn chain_upper_bound_range(n: usize, a: f64, b: f64, d: f64, y: f64) -> Result<f64> {
    let (lambda_lower, _) = crate::sensitivity::chain_eigen_bounds(n, a, b, n)?;
    if !(d > 0.0 && y > 0.0) {
        return Err(Error::InvalidControl("d and y must be positive".into()));
    }
    Ok(chain_bound(d, lambda_lower, y))
}
