//! Signal-taking and signal-anticipating control iterations on the linear
//! model, and the spectral conditions under which they contract.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controls::ControlSpec;
use crate::linalg::{lanczos_largest, sigma_max, LanczosOptions};
use crate::sensitivity::{build_sensitivity, SensitivitySet, TreeOperator};
use crate::topology::{RadialNetwork, ROOT};
use crate::{Error, Result};

/// `ṽ = v0 + R(p_g - p_c) - X q_c` and the deviation `Δṽ = ṽ - v_nom`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingConstants {
    pub v_tilde: DVector<f64>,
    pub v_nom: DVector<f64>,
    pub delta_v_tilde: DVector<f64>,
}

impl OperatingConstants {
    pub fn new(v_tilde: DVector<f64>, v_nom: DVector<f64>) -> Result<Self> {
        check_dim(v_nom.len(), v_tilde.len())?;
        let delta_v_tilde = &v_tilde - &v_nom;
        Ok(Self {
            v_tilde,
            v_nom,
            delta_v_tilde,
        })
    }

    /// Nominal voltage 1 everywhere and `ṽ = 1 + Δṽ`.
    pub fn from_deviation(delta: DVector<f64>) -> Self {
        let v_nom = DVector::from_element(delta.len(), 1.0);
        Self {
            v_tilde: &v_nom + &delta,
            v_nom,
            delta_v_tilde: delta,
        }
    }

    /// Constants of every non-root bus; `full` must be the unrestricted set.
    pub fn from_network(net: &RadialNetwork, full: &SensitivitySet) -> Result<Self> {
        check_dim(full.dim(), net.n())?;
        let buses = net.buses();
        let p = DVector::from_iterator(net.n(), buses.iter().map(|b| b.p_g - b.p_c));
        let qc = DVector::from_iterator(net.n(), buses.iter().map(|b| b.q_c));
        let v_tilde = DVector::from_element(net.n(), net.v0()) + &full.r * p - &full.x * qc;
        let v_nom = DVector::from_iterator(net.n(), buses.iter().map(|b| b.v_nom));
        Self::new(v_tilde, v_nom)
    }

    /// Rows picked by `idx`. Fixed injections elsewhere are already folded in.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        let pick = |v: &DVector<f64>| DVector::from_iterator(idx.len(), idx.iter().map(|&k| v[k]));
        Self {
            v_tilde: pick(&self.v_tilde),
            v_nom: pick(&self.v_nom),
            delta_v_tilde: pick(&self.delta_v_tilde),
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `v = X q + ṽ`.
pub fn voltage_from_q(s: &SensitivitySet, q: &DVector<f64>, vt: &OperatingConstants) -> Result<DVector<f64>> {
    check_dim(s.dim(), q.len())?;
    check_dim(s.dim(), vt.v_tilde.len())?;
    Ok(&s.x * q + &vt.v_tilde)
}

/// Which local law the actuators run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// Reacts to the measured voltage as an exogenous signal.
    Taking,
    /// Best response that accounts for the bus's own effect on its voltage.
    Anticipating,
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Law::Taking => "taking",
            Law::Anticipating => "anticipating",
        })
    }
}

impl FromStr for Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taking" => Ok(Law::Taking),
            "anticipating" => Ok(Law::Anticipating),
            other => Err(Error::parse("law", format!("unknown law {other:?}"))),
        }
    }
}

/// Sensitivities, controls and constants on the actuator set.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub s: SensitivitySet,
    pub ctrl: ControlSpec,
    pub vt: OperatingConstants,
}

impl LinearModel {
    pub fn new(s: SensitivitySet, ctrl: ControlSpec, vt: OperatingConstants) -> Result<Self> {
        check_dim(s.dim(), ctrl.len())?;
        check_dim(s.dim(), vt.v_tilde.len())?;
        Ok(Self { s, ctrl, vt })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn stepper(&self, law: Law) -> LinearStepper<'_> {
        LinearStepper { model: self, law }
    }
}

/// One synchronous update from the local measurement `v`.
///
/// The anticipating law recovers its aggregate signal as
/// `v_i - v_nom_i - X_ii q_i`, so it needs only local quantities.
pub fn local_update(
    law: Law,
    ctrl: &ControlSpec,
    self_sens: &DVector<f64>,
    v_nom: &DVector<f64>,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(q.len(), |i, _| {
        let c = &ctrl.controls[i];
        let dev = v[i] - v_nom[i];
        match law {
            Law::Taking => c.project(c.eval(dev)),
            Law::Anticipating => {
                let xii = self_sens[i];
                c.project(c.response(2.0 * xii, dev - xii * q[i]))
            }
        }
    })
}

/// `q'_i = [f_i(v_i - v_nom_i)]` with `v = X q + ṽ`.
pub fn signal_taking_step(model: &LinearModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    let v = voltage_from_q(&model.s, q, &model.vt)?;
    Ok(local_update(
        Law::Taking,
        &model.ctrl,
        &model.s.d,
        &model.vt.v_nom,
        q,
        &v,
    ))
}

/// `q'_i = [g_i(Σ_{j≠i} X_ij q_j + Δṽ_i)]`.
pub fn signal_anticipating_step(model: &LinearModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(model.dim(), q.len())?;
    let c = &model.s.xbar * q + &model.vt.delta_v_tilde;
    Ok(DVector::from_fn(q.len(), |i, _| {
        let ctl = &model.ctrl.controls[i];
        ctl.project(ctl.response(2.0 * model.s.d[i], c[i]))
    }))
}

/// A plant plus a local control law.
pub trait Stepper {
    fn dim(&self) -> usize;
    /// Voltages produced by the injections `q`.
    fn observe(&self, q: &DVector<f64>) -> Result<DVector<f64>>;
    /// Next injections from the current ones and the observed voltages.
    fn update(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct LinearStepper<'a> {
    model: &'a LinearModel,
    law: Law,
}

impl Stepper for LinearStepper<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn observe(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        voltage_from_q(&self.model.s, q, &self.model.vt)
    }

    fn update(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let m = self.model;
        local_update(self.law, &m.ctrl, &m.s.d, &m.vt.v_nom, q, v)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_bound: f64,
    /// Store every k-th iterate; 0 stores only the first and last.
    pub record_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            divergence_bound: 1e6,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Converged { iterations: usize },
    MaxIter,
    Diverged { iteration: usize },
}

impl Verdict {
    pub fn converged(&self) -> bool {
        matches!(self, Verdict::Converged { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Converged { .. } => "converged",
            Verdict::MaxIter => "max_iter",
            Verdict::Diverged { .. } => "diverged",
        }
    }
}

/// Stored iterates. `residuals[t] = ‖q(t+1) - q(t)‖_∞`.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub times: Vec<usize>,
    pub q: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
    pub verdict: Verdict,
}

impl SimulationTrace {
    pub fn final_q(&self) -> &DVector<f64> {
        self.q.last().expect("trace holds at least the initial iterate")
    }

    pub fn final_v(&self) -> &DVector<f64> {
        self.v.last().expect("trace holds at least the initial iterate")
    }
}

/// Iterates `stepper` from `q0` until the step falls below `tol`, the
/// iteration budget runs out or `‖q‖_∞` exceeds the divergence bound. An
/// iterate at which the stepper cannot observe a voltage (collapse or a
/// failed power-flow solve) also counts as divergence.
pub fn run<S: Stepper + ?Sized>(
    stepper: &S,
    q0: &DVector<f64>,
    opts: &RunOptions,
) -> Result<SimulationTrace> {
    check_dim(stepper.dim(), q0.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidControl("run tolerance must be positive".into()));
    }
    let mut trace = SimulationTrace {
        times: Vec::new(),
        q: Vec::new(),
        v: Vec::new(),
        residuals: Vec::new(),
        verdict: Verdict::MaxIter,
    };
    let mut q = q0.clone();
    let mut v = stepper.observe(&q)?;
    let mut t = 0;
    loop {
        let keep = t == 0 || (opts.record_every > 0 && t % opts.record_every == 0);
        if keep {
            trace.times.push(t);
            trace.q.push(q.clone());
            trace.v.push(v.clone());
        }
        if t == opts.max_iter {
            break;
        }
        let next = stepper.update(&q, &v);
        let residual = (&next - &q).amax();
        trace.residuals.push(residual);
        q = next;
        t += 1;
        let norm = q.amax();
        if !norm.is_finite() || norm > opts.divergence_bound || residual.is_nan() {
            trace.verdict = Verdict::Diverged { iteration: t };
            push_last(&mut trace, t, &q, None);
            return Ok(trace);
        }
        v = match stepper.observe(&q) {
            Ok(v) => v,
            // The physical model has no operating point at this iterate.
            Err(Error::VoltageCollapse { .. } | Error::NoConvergence { .. }) => {
                trace.verdict = Verdict::Diverged { iteration: t };
                push_last(&mut trace, t, &q, None);
                return Ok(trace);
            }
            Err(e) => return Err(e),
        };
        if residual < opts.tol {
            trace.verdict = Verdict::Converged { iterations: t };
            push_last(&mut trace, t, &q, Some(&v));
            return Ok(trace);
        }
    }
    Ok(trace)
}

fn push_last(trace: &mut SimulationTrace, t: usize, q: &DVector<f64>, v: Option<&DVector<f64>>) {
    if trace.times.last() != Some(&t) {
        trace.times.push(t);
        trace.q.push(q.clone());
        trace.v.push(
            v.cloned()
                .unwrap_or_else(|| DVector::from_element(q.len(), f64::NAN)),
        );
    }
}

/// Spectral contraction conditions for both laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `σ_max(A X)`, `A = diag(α)`.
    pub sigma_taking: f64,
    /// `σ_max(B Xbar)`, `B = diag(β)`.
    pub sigma_anticipating: f64,
    /// `max β_i · max_i Σ_j Xbar_ij`.
    pub sufficient_lhs: f64,
    pub taking_contracts: bool,
    pub anticipating_contracts: bool,
    pub sufficient_holds: bool,
}

impl ConditionReport {
    fn assemble(sigma_taking: f64, sigma_anticipating: f64, sufficient_lhs: f64) -> Result<Self> {
        if sigma_anticipating > sufficient_lhs * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::Invariant(format!(
                "sigma_anticipating {sigma_anticipating:e} exceeds the row-sum bound {sufficient_lhs:e}"
            )));
        }
        Ok(Self {
            sigma_taking,
            sigma_anticipating,
            sufficient_lhs,
            taking_contracts: sigma_taking < 1.0,
            anticipating_contracts: sigma_anticipating < 1.0,
            sufficient_holds: sufficient_lhs < 1.0,
        })
    }
}

pub fn betas(d: &DVector<f64>, alphas: &[f64]) -> Vec<f64> {
    alphas
        .iter()
        .zip(d.iter())
        .map(|(&a, &x)| 1.0 / (1.0 / a + 2.0 * x))
        .collect()
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.iter().all(|&a| a > 0.0 && a.is_finite()) {
        Ok(())
    } else {
        Err(Error::ZeroSlope)
    }
}

/// Dense condition report on the sensitivity set's buses.
pub fn condition_report(s: &SensitivitySet, alphas: &[f64]) -> Result<ConditionReport> {
    check_dim(s.dim(), alphas.len())?;
    check_alphas(alphas)?;
    let beta = betas(&s.d, alphas);
    let ax = DMatrix::from_fn(s.dim(), s.dim(), |i, j| alphas[i] * s.x[(i, j)]);
    let bxbar = DMatrix::from_fn(s.dim(), s.dim(), |i, j| beta[i] * s.xbar[(i, j)]);
    let row_max = s.xbar.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let beta_max = beta.iter().copied().fold(0.0, f64::max);
    ConditionReport::assemble(sigma_max(&ax), sigma_max(&bxbar), beta_max * row_max)
}

/// Matrix-free condition report with every bus an actuator.
///
/// `σ_max(M)² = λ_max(MᵀM)` is computed by Lanczos on `X A² X` and
/// `Xbar B² Xbar`, each applied in `O(n)`.
pub fn condition_report_tree(
    net: &RadialNetwork,
    alphas: &[f64],
    opts: LanczosOptions,
) -> Result<ConditionReport> {
    let n = net.n();
    check_dim(n, alphas.len())?;
    check_alphas(alphas)?;
    let op = TreeOperator::new(net);
    let d = op.diag();
    let beta = betas(&d, alphas);
    let a2 = DVector::from_iterator(n, alphas.iter().map(|a| a * a));
    let b2 = DVector::from_iterator(n, beta.iter().map(|b| b * b));
    let taking = lanczos_largest(n, |v| op.apply_x(&op.apply_x(v).component_mul(&a2)), opts)?;
    let antic = lanczos_largest(n, |v| op.apply_xbar(&op.apply_xbar(v).component_mul(&b2)), opts)?;

    // Row sums of Xbar: Σ_j X_ij = Σ over lines e on the root path of i of
    // x_e · (subtree size below e), minus X_ii.
    let mut size = vec![0usize; n + 1];
    for &u in net.preorder().iter().rev() {
        size[u] += 1;
        let p = net.parent(u);
        if p != ROOT {
            size[p] += size[u];
        }
    }
    let mut row = vec![0.0; n + 1];
    for &u in net.preorder() {
        row[u] = row[net.parent(u)] + net.feeder_line(u).x * size[u] as f64;
    }
    let row_max = (1..=n).map(|u| row[u] - d[u - 1]).fold(0.0, f64::max);
    let beta_max = beta.iter().copied().fold(0.0, f64::max);
    ConditionReport::assemble(
        taking.value.max(0.0).sqrt(),
        antic.value.max(0.0).sqrt(),
        beta_max * row_max,
    )
}

/// Convenience: linear model over the network's actuator buses.
pub fn actuator_model(net: &RadialNetwork, ctrl: ControlSpec) -> Result<LinearModel> {
    let full = build_sensitivity(net);
    let vt = OperatingConstants::from_network(net, &full)?;
    let idx = net.actuator_indices();
    LinearModel::new(full.restrict(&idx), ctrl, vt.restrict(&idx))
}
