//! Local Volt/Var control laws, their provisioning costs and the
//! anticipating response map.
//!
//! A control `f` maps a voltage deviation to a reactive setpoint and is
//! nonincreasing. The associated cost is `C(q) = -∫₀^q f⁻¹(s) ds`. Every
//! per-node decision in this crate reduces to the scalar fixed point
//! `q = f(w q + c)`: `w = 0` is the signal-taking update, `w = X_ii` a
//! coordinate step on the network objective and `w = 2 X_ii` the
//! signal-anticipating best response.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Clamp `q` onto `[lo, hi]`.
pub fn project_box(q: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::EmptyBox { lo, hi });
    }
    Ok(q.clamp(lo, hi))
}

/// Piecewise-linear droop with a symmetric deadband:
/// `f(u) = -α[u - δ/2]⁺ + α[-u - δ/2]⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroopParams {
    pub alpha: f64,
    pub delta: f64,
    #[serde(default = "neg_inf")]
    pub q_min: f64,
    #[serde(default = "pos_inf")]
    pub q_max: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

impl DroopParams {
    pub fn new(alpha: f64, delta: f64) -> Self {
        Self {
            alpha,
            delta,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
        }
    }

    /// Quadratic cost `½ y q²`, i.e. a linear droop of slope `1/y`.
    pub fn quadratic(y: f64) -> Self {
        Self::new(1.0 / y, 0.0)
    }

    pub fn with_box(mut self, q_min: f64, q_max: f64) -> Self {
        self.q_min = q_min;
        self.q_max = q_max;
        self
    }

    pub fn half_band(&self) -> f64 {
        0.5 * self.delta
    }

    /// Setpoint before projection.
    pub fn eval(&self, u: f64) -> f64 {
        let h = self.half_band();
        -self.alpha * (u - h).max(0.0) + self.alpha * (-u - h).max(0.0)
    }

    /// `½ y q² + (δ/2)|q|` with `y = 1/α`.
    pub fn cost(&self, q: f64) -> Result<f64> {
        if self.alpha <= 0.0 {
            return Err(Error::ZeroSlope);
        }
        Ok(0.5 * q * q / self.alpha + self.half_band() * q.abs())
    }

    /// Slope bound of the anticipating response: `1 / (1/α + 2 X_ii)`.
    pub fn beta(&self, xii: f64) -> f64 {
        1.0 / (1.0 / self.alpha + 2.0 * xii)
    }

    /// Solution of `q = f(w q + c)` in closed form.
    pub fn response(&self, w: f64, c: f64) -> f64 {
        let slope = 1.0 / (1.0 / self.alpha + w);
        let h = self.half_band();
        -slope * (c - h).max(0.0) + slope * (-c - h).max(0.0)
    }

    /// Projected signal-anticipating setpoint for aggregate signal `c`.
    pub fn anticipating_response(&self, xii: f64, c: f64) -> f64 {
        self.response(2.0 * xii, c).clamp(self.q_min, self.q_max)
    }
}

/// A monotone control curve given by samples, linearly interpolated and
/// extended past the end points with the end-segment slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedControl {
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(default = "neg_inf")]
    pub q_min: f64,
    #[serde(default = "pos_inf")]
    pub q_max: f64,
}

impl TabulatedControl {
    pub fn new(u: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let ctl = Self {
            u,
            q,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
        };
        ctl.validate()?;
        Ok(ctl)
    }

    pub fn with_box(mut self, q_min: f64, q_max: f64) -> Self {
        self.q_min = q_min;
        self.q_max = q_max;
        self
    }

    /// Samples a droop curve at its break points.
    pub fn from_droop(p: &DroopParams, span: f64) -> Self {
        let h = p.half_band();
        let u = vec![-span, -h, h, span];
        let q = u.iter().map(|&v| p.eval(v)).collect();
        Self {
            u,
            q,
            q_min: p.q_min,
            q_max: p.q_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.len() < 2 || self.u.len() != self.q.len() {
            return Err(Error::InvalidControl(
                "tabulated control needs at least two (u, q) samples".into(),
            ));
        }
        if self.u.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidControl(
                "u samples must be strictly increasing".into(),
            ));
        }
        if self.q.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidControl(
                "control curve must be nonincreasing".into(),
            ));
        }
        if self.q.iter().chain(&self.u).any(|v| !v.is_finite()) {
            return Err(Error::InvalidControl("samples must be finite".into()));
        }
        Ok(())
    }

    fn slope(&self, k: usize) -> f64 {
        (self.q[k + 1] - self.q[k]) / (self.u[k + 1] - self.u[k])
    }

    pub fn eval(&self, u: f64) -> f64 {
        let m = self.u.len();
        let k = match self.u.partition_point(|&x| x <= u) {
            0 => 0,
            p if p >= m => m - 2,
            p => p - 1,
        };
        self.q[k] + self.slope(k) * (u - self.u[k])
    }

    /// Largest absolute slope.
    pub fn alpha(&self) -> f64 {
        (0..self.u.len() - 1)
            .map(|k| self.slope(k).abs())
            .fold(0.0, f64::max)
    }

    /// A voltage deviation `u` with `f(u) = s`, by bisection.
    fn pseudo_inverse(&self, s: f64) -> f64 {
        let mut lo = -1.0;
        let mut hi = 1.0;
        while self.eval(lo) < s {
            lo *= 2.0;
        }
        while self.eval(hi) > s {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) > s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// `-∫₀^q f⁻¹(s) ds` by composite Gauss-Legendre quadrature.
    pub fn cost(&self, q: f64) -> f64 {
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let panels = 400;
        let h = q / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (t, w) in NODES.iter().zip(WEIGHTS) {
                total += w * self.pseudo_inverse(mid + 0.5 * h * t);
            }
        }
        -0.5 * h * total
    }

    /// Solution of `q = f(w q + c)` by bisection on the increasing map
    /// `q - f(w q + c)`.
    pub fn response(&self, w: f64, c: f64) -> f64 {
        let phi = |q: f64| q - self.eval(w * q + c);
        let mut lo = -1.0;
        let mut hi = 1.0;
        while phi(lo) > 0.0 {
            lo *= 2.0;
        }
        while phi(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Control law of one actuator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalControl {
    Droop(DroopParams),
    Tabulated(TabulatedControl),
}

impl From<DroopParams> for LocalControl {
    fn from(p: DroopParams) -> Self {
        LocalControl::Droop(p)
    }
}

impl LocalControl {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            LocalControl::Droop(p) => p.eval(u),
            LocalControl::Tabulated(t) => t.eval(u),
        }
    }

    pub fn cost(&self, q: f64) -> Result<f64> {
        match self {
            LocalControl::Droop(p) => p.cost(q),
            LocalControl::Tabulated(t) => Ok(t.cost(q)),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            LocalControl::Droop(p) => p.alpha,
            LocalControl::Tabulated(t) => t.alpha(),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            LocalControl::Droop(p) => (p.q_min, p.q_max),
            LocalControl::Tabulated(t) => (t.q_min, t.q_max),
        }
    }

    pub fn project(&self, q: f64) -> f64 {
        let (lo, hi) = self.bounds();
        q.clamp(lo, hi)
    }

    /// Unprojected solution of `q = f(w q + c)`.
    pub fn response(&self, w: f64, c: f64) -> f64 {
        match self {
            LocalControl::Droop(p) => p.response(w, c),
            LocalControl::Tabulated(t) => t.response(w, c),
        }
    }

    /// Quadratic-cost coefficient `y = 1/α` when the law is a plain linear
    /// droop without deadband or box.
    pub fn quadratic_coefficient(&self) -> Option<f64> {
        match self {
            LocalControl::Droop(p)
                if p.delta == 0.0
                    && p.alpha > 0.0
                    && p.q_min == f64::NEG_INFINITY
                    && p.q_max == f64::INFINITY =>
            {
                Some(1.0 / p.alpha)
            }
            _ => None,
        }
    }
}

/// One control law per actuator, in the order of the actuator index set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpec {
    pub controls: Vec<LocalControl>,
}

impl ControlSpec {
    pub fn new(controls: Vec<LocalControl>) -> Result<Self> {
        for c in &controls {
            if let LocalControl::Tabulated(t) = c {
                t.validate()?;
            }
            let (lo, hi) = c.bounds();
            if !(lo <= 0.0 && 0.0 <= hi) {
                return Err(Error::EmptyBox { lo, hi });
            }
            if !(c.alpha() > 0.0) {
                return Err(Error::ZeroSlope);
            }
        }
        Ok(Self { controls })
    }

    pub fn uniform(n: usize, p: DroopParams) -> Self {
        Self {
            controls: vec![LocalControl::Droop(p); n],
        }
    }

    pub fn quadratic(y: &[f64]) -> Self {
        Self {
            controls: y.iter().map(|&y| DroopParams::quadratic(y).into()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.controls.iter().map(LocalControl::alpha).collect()
    }

    /// `y_i` for every actuator if all laws are unconstrained quadratics.
    pub fn quadratic_costs(&self) -> Option<Vec<f64>> {
        self.controls
            .iter()
            .map(LocalControl::quadratic_coefficient)
            .collect()
    }

    pub fn total_cost(&self, q: &[f64]) -> Result<f64> {
        self.controls.iter().zip(q).map(|(c, &v)| c.cost(v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn droop_values() {
        let p = DroopParams::new(2.0, 0.02);
        assert!((p.eval(0.05) + 0.08).abs() < 1e-15);
        assert_eq!(p.eval(0.01), 0.0);
        assert_eq!(p.eval(-0.004), 0.0);
        assert!((p.eval(-0.05) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn droop_cost_values() {
        let p = DroopParams::new(1.0, 0.02);
        assert_eq!(p.cost(0.0).unwrap(), 0.0);
        assert!((p.cost(0.1).unwrap() - 0.006).abs() < 1e-15);
        assert_eq!(p.cost(0.1).unwrap(), p.cost(-0.1).unwrap());
        assert!(matches!(
            DroopParams::new(0.0, 0.0).cost(1.0),
            Err(Error::ZeroSlope)
        ));
    }

    #[test]
    fn box_projection() {
        assert_eq!(project_box(0.3, -1.0, 1.0).unwrap(), 0.3);
        assert_eq!(project_box(3.0, -1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(project_box(0.0, 1.0, -1.0), Err(Error::EmptyBox { .. })));
    }

    #[test]
    fn anticipating_response_by_hand() {
        let p = DroopParams::new(1.0, 0.0);
        assert!((p.anticipating_response(0.5, 1.0) + 0.5).abs() < 1e-15);
        let band = DroopParams::new(3.0, 0.1);
        assert_eq!(band.anticipating_response(0.2, 0.04), 0.0);
        assert!((band.beta(0.2) - 1.0 / (1.0 / 3.0 + 0.4)).abs() < 1e-15);
    }

    #[test]
    fn cost_derivative_is_negated_inverse() {
        let p = DroopParams::new(2.5, 0.04);
        let h = 1e-6;
        for &q in &[-0.7, -0.2, 0.05, 0.3, 1.1] {
            let fd = (p.cost(q + h).unwrap() - p.cost(q - h).unwrap()) / (2.0 * h);
            // Inverse of the droop outside the deadband.
            let inv = if q > 0.0 {
                -q / p.alpha - p.half_band()
            } else {
                -q / p.alpha + p.half_band()
            };
            assert!((p.eval(inv) - q).abs() < 1e-12);
            assert!((fd + inv).abs() < 1e-4, "q={q}: fd={fd}, -f^-1={}", -inv);
        }
    }

    #[test]
    fn tabulated_droop_agrees_with_closed_form() {
        let p = DroopParams::new(4.0, 0.03);
        let t = TabulatedControl::from_droop(&p, 1.0);
        for &u in &[-2.0, -0.3, -0.01, 0.0, 0.014, 0.2, 3.0] {
            assert!((t.eval(u) - p.eval(u)).abs() < 1e-12);
        }
        assert!((t.alpha() - 4.0).abs() < 1e-12);
        for &(w, c) in &[(0.0, 0.1), (0.3, -0.5), (1.2, 0.01), (0.7, 2.0)] {
            assert!((t.response(w, c) - p.response(w, c)).abs() < 1e-12);
        }
        for &q in &[-0.4, 0.0, 0.25] {
            assert!((t.cost(q) - p.cost(q).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn tabulated_rejects_increasing_curve() {
        assert!(TabulatedControl::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(TabulatedControl::new(vec![0.0, 0.0], vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn quadratic_detection() {
        let spec = ControlSpec::quadratic(&[2.0, 0.5]);
        assert_eq!(spec.quadratic_costs(), Some(vec![2.0, 0.5]));
        let banded = ControlSpec::uniform(2, DroopParams::new(1.0, 0.01));
        assert_eq!(banded.quadratic_costs(), None);
    }

    proptest! {
        #[test]
        fn droop_is_odd_and_nonincreasing(alpha in 0.01f64..50.0, delta in 0.0f64..0.1, u in -1.0f64..1.0, du in 0.0f64..0.5) {
            let p = DroopParams::new(alpha, delta);
            prop_assert!((p.eval(-u) + p.eval(u)).abs() < 1e-12);
            prop_assert!(p.eval(u + du) <= p.eval(u) + 1e-15);
            prop_assert!((p.eval(u + du) - p.eval(u)).abs() <= alpha * du + 1e-12);
        }

        #[test]
        fn projection_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, lo in -5.0f64..0.0, hi in 0.0f64..5.0) {
            let pa = project_box(a, lo, hi).unwrap();
            let pb = project_box(b, lo, hi).unwrap();
            prop_assert!((pa - pb).abs() <= (a - b).abs() + 1e-15);
        }

        #[test]
        fn response_lipschitz_by_beta(alpha in 0.05f64..30.0, delta in 0.0f64..0.1, xii in 0.001f64..2.0,
                                       c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
            let p = DroopParams::new(alpha, delta);
            let (g1, g2) = (p.response(2.0 * xii, c1), p.response(2.0 * xii, c2));
            let beta = p.beta(xii);
            prop_assert!(beta < alpha);
            prop_assert!((g1 - g2).abs() <= beta * (c1 - c2).abs() + 1e-14);
            if c1 <= c2 {
                prop_assert!(g2 <= g1 + 1e-15);
            }
        }
    }
}
