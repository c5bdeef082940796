//! DistFlow power flow by backward/forward sweep, and closed-loop control
//! against it.

use nalgebra::DVector;

use crate::controls::ControlSpec;
use crate::dynamics::{local_update, run, Law, RunOptions, SimulationTrace, Stepper};
use crate::sensitivity::build_sensitivity;
use crate::topology::RadialNetwork;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Bound on the largest absolute residual over all four equation families.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Line quantities are indexed by the receiving node (`p[j]` is the flow on
/// the line into `j`; entry 0 is unused). `v_sq[0]` is the root.
#[derive(Debug, Clone)]
pub struct BranchFlowState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub ell: Vec<f64>,
    pub v_sq: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl BranchFlowState {
    /// Voltage magnitudes of the non-root buses.
    pub fn voltages(&self) -> DVector<f64> {
        DVector::from_iterator(self.v_sq.len() - 1, self.v_sq[1..].iter().map(|v| v.sqrt()))
    }
}

fn check_len(net: &RadialNetwork, v: &[f64]) -> Result<()> {
    if v.len() == net.n() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: net.n(),
            found: v.len(),
        })
    }
}

/// Largest absolute residual of each equation family: real balance,
/// reactive balance, voltage drop, current.
pub fn residuals(net: &RadialNetwork, p_inj: &[f64], q_inj: &[f64], s: &BranchFlowState) -> [f64; 4] {
    let mut out = [0.0f64; 4];
    for j in 1..=net.n() {
        let line = net.feeder_line(j);
        let i = line.from;
        let (sp, sq) = net
            .children(j)
            .iter()
            .fold((0.0, 0.0), |(a, b), &k| (a + s.p[k], b + s.q[k]));
        let r1 = s.p[j] - (-p_inj[j - 1] + sp + line.r * s.ell[j]);
        let r2 = s.q[j] - (-q_inj[j - 1] + sq + line.x * s.ell[j]);
        let z2 = line.r * line.r + line.x * line.x;
        let r3 = s.v_sq[j] - (s.v_sq[i] - 2.0 * (line.r * s.p[j] + line.x * s.q[j]) + z2 * s.ell[j]);
        let r4 = s.ell[j] * s.v_sq[i] - (s.p[j] * s.p[j] + s.q[j] * s.q[j]);
        for (o, r) in out.iter_mut().zip([r1, r2, r3, r4]) {
            *o = o.max(r.abs());
        }
    }
    out
}

/// Solves the branch-flow equations for net injections `p_inj`, `q_inj`
/// (generation minus consumption, per bus `1..=n`) from a flat start.
pub fn sweep_solve(
    net: &RadialNetwork,
    p_inj: &[f64],
    q_inj: &[f64],
    opts: &SweepOptions,
) -> Result<BranchFlowState> {
    check_len(net, p_inj)?;
    check_len(net, q_inj)?;
    let n = net.n();
    let v0sq = net.v0() * net.v0();
    let mut s = BranchFlowState {
        p: vec![0.0; n + 1],
        q: vec![0.0; n + 1],
        ell: vec![0.0; n + 1],
        v_sq: vec![v0sq; n + 1],
        iterations: 0,
        residual: f64::INFINITY,
    };
    for it in 1..=opts.max_iter {
        for &j in net.preorder().iter().rev() {
            let line = net.feeder_line(j);
            let (sp, sq) = net
                .children(j)
                .iter()
                .fold((0.0, 0.0), |(a, b), &k| (a + s.p[k], b + s.q[k]));
            s.p[j] = -p_inj[j - 1] + sp + line.r * s.ell[j];
            s.q[j] = -q_inj[j - 1] + sq + line.x * s.ell[j];
        }
        for &j in net.preorder() {
            let line = net.feeder_line(j);
            let i = line.from;
            let z2 = line.r * line.r + line.x * line.x;
            let v = s.v_sq[i] - 2.0 * (line.r * s.p[j] + line.x * s.q[j]) + z2 * s.ell[j];
            if !(v > 0.0) {
                return Err(Error::VoltageCollapse { node: j });
            }
            s.v_sq[j] = v;
            s.ell[j] = (s.p[j] * s.p[j] + s.q[j] * s.q[j]) / s.v_sq[i];
        }
        s.iterations = it;
        s.residual = residuals(net, p_inj, q_inj, &s).into_iter().fold(0.0, f64::max);
        if s.residual < opts.tol {
            return Ok(s);
        }
        if !s.residual.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: s.iterations,
        residual: s.residual,
    })
}

/// Net injections implied by the bus data, before any controller output.
pub fn base_injections(net: &RadialNetwork) -> (Vec<f64>, Vec<f64>) {
    net.buses().iter().map(|b| (b.p_g - b.p_c, -b.q_c)).unzip()
}

/// The feeder under DistFlow with the actuators running a local law. The
/// anticipating law keeps using the linearized `X_ii` as its internal model.
#[derive(Debug, Clone)]
pub struct AcStepper<'a> {
    net: &'a RadialNetwork,
    ctrl: &'a ControlSpec,
    law: Law,
    actuators: Vec<usize>,
    self_sens: DVector<f64>,
    v_nom: DVector<f64>,
    p_inj: Vec<f64>,
    q_base: Vec<f64>,
    opts: SweepOptions,
}

impl<'a> AcStepper<'a> {
    pub fn new(net: &'a RadialNetwork, ctrl: &'a ControlSpec, law: Law, opts: SweepOptions) -> Result<Self> {
        let actuators = net.actuator_indices();
        if actuators.len() != ctrl.len() {
            return Err(Error::DimensionMismatch {
                expected: actuators.len(),
                found: ctrl.len(),
            });
        }
        // X_ii is the total root-path reactance of bus i.
        let full = build_sensitivity(net);
        let self_sens = DVector::from_iterator(actuators.len(), actuators.iter().map(|&k| full.d[k]));
        let v_nom = DVector::from_iterator(actuators.len(), actuators.iter().map(|&k| net.buses()[k].v_nom));
        let (p_inj, q_base) = base_injections(net);
        Ok(Self {
            net,
            ctrl,
            law,
            actuators,
            self_sens,
            v_nom,
            p_inj,
            q_base,
            opts,
        })
    }

    /// Full power-flow state for actuator outputs `q`.
    pub fn solve(&self, q: &DVector<f64>) -> Result<BranchFlowState> {
        let mut q_inj = self.q_base.clone();
        for (&k, &qk) in self.actuators.iter().zip(q.iter()) {
            q_inj[k] += qk;
        }
        sweep_solve(self.net, &self.p_inj, &q_inj, &self.opts)
    }
}

impl Stepper for AcStepper<'_> {
    fn dim(&self) -> usize {
        self.actuators.len()
    }

    fn observe(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let state = self.solve(q)?;
        Ok(DVector::from_iterator(
            self.actuators.len(),
            self.actuators.iter().map(|&k| state.v_sq[k + 1].sqrt()),
        ))
    }

    fn update(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        local_update(self.law, self.ctrl, &self.self_sens, &self.v_nom, q, v)
    }
}

/// Runs `law` on the network's actuators against the DistFlow model.
pub fn closed_loop_ac(
    net: &RadialNetwork,
    ctrl: &ControlSpec,
    law: Law,
    q0: &DVector<f64>,
    run_opts: &RunOptions,
    sweep_opts: SweepOptions,
) -> Result<SimulationTrace> {
    let stepper = AcStepper::new(net, ctrl, law, sweep_opts)?;
    run(&stepper, q0, run_opts)
}
