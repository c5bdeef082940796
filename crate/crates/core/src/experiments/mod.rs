//! Parameter sweeps over chains, random trees and the SCE feeder.
//!
//! A [`SweepSpec`] expands into a list of instances. Instances run on a
//! worker pool (capped by `VOLTGAME_THREADS`) and rows come back in
//! instance order, so a fixed spec and seed always produce the same CSV.

pub mod sce42;

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acflow::{closed_loop_ac, SweepOptions};
use crate::controls::{ControlSpec, DroopParams, LocalControl};
use crate::dynamics::{
    actuator_model, condition_report, condition_report_tree, run, ConditionReport, Law, LinearModel,
    OperatingConstants, RunOptions, Verdict,
};
use crate::equilibrium::{
    chain_upper_bound_range, chain_upper_bound_uniform, posa, posa_report, posa_report_tree, PosaReport,
    DENSE_LIMIT, ORDERING_RTOL,
};
use crate::linalg::LanczosOptions;
use crate::sensitivity::build_sensitivity;
use crate::topology::{chain, random_tree, uniform_open_closed, DegreeDistribution, RadialNetwork};
use crate::{Error, Result};

pub use sce42::{load_sce42, Sce42, Sce42Options};

pub const THREADS_ENV: &str = "VOLTGAME_THREADS";

/// A value drawn from `(lo, hi]`, or fixed when `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_fixed(&self) -> bool {
        self.lo == self.hi
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.lo.is_finite() && self.hi.is_finite() && 0.0 <= self.lo && self.lo <= self.hi && self.hi > 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "{what} range must satisfy 0 <= lo <= hi, hi > 0"
            )))
        }
    }

    fn draw<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        if self.is_fixed() {
            self.lo
        } else {
            uniform_open_closed(rng, self.lo, self.hi)
        }
    }
}

/// Explicit list, or `start..=end` in steps of `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    List(Vec<usize>),
    Range { start: usize, end: usize, step: usize },
}

impl Sizes {
    pub fn expand(&self) -> Result<Vec<usize>> {
        let v: Vec<usize> = match self {
            Sizes::List(v) => v.clone(),
            Sizes::Range { start, end, step } => {
                if *step == 0 {
                    return Err(Error::InvalidSpec("range step must be positive".into()));
                }
                (*start..=*end).step_by(*step).collect()
            }
        };
        if v.is_empty() {
            return Err(Error::InvalidSpec("empty size list".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepKind {
    /// Chains of each size with line reactances and costs from the ranges.
    ChainSize {
        sizes: Sizes,
        reactance: ParamRange,
        cost: ParamRange,
    },
    /// Random trees of each maximum depth.
    RandomTreeDepth {
        probabilities: Vec<f64>,
        depths: Sizes,
        #[serde(default = "default_reactance")]
        reactance: ParamRange,
        #[serde(default = "default_cost")]
        cost: ParamRange,
    },
    /// The SCE feeder under uniform quadratic-plus-deadband costs `y`.
    CostCoefficient {
        y_values: Vec<f64>,
        #[serde(default)]
        case: Sce42Options,
    },
    /// The SCE feeder under droop slopes `alpha`, both laws, linear and AC.
    Alpha {
        alphas: Vec<f64>,
        #[serde(default)]
        case: Sce42Options,
        #[serde(default = "default_true")]
        ac: bool,
    },
}

fn default_reactance() -> ParamRange {
    ParamRange { lo: 0.0, hi: 200.0 }
}

fn default_cost() -> ParamRange {
    ParamRange { lo: 0.0, hi: 100.0 }
}

fn default_true() -> bool {
    true
}

fn default_repetitions() -> usize {
    1
}

fn default_max_iter() -> usize {
    100_000
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(flatten)]
    pub kind: SweepKind,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Iteration budget for closed-loop runs.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl SweepSpec {
    pub fn new(kind: SweepKind) -> Self {
        Self {
            kind,
            repetitions: 1,
            seed: 0,
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::parse("sweep spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidSpec("repetitions must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidSpec("tol must be positive".into()));
        }
        match &self.kind {
            SweepKind::ChainSize {
                sizes,
                reactance,
                cost,
            } => {
                if sizes.expand()?.contains(&0) {
                    return Err(Error::InvalidSpec("chain sizes must be positive".into()));
                }
                reactance.validate("reactance")?;
                cost.validate("cost")?;
            }
            SweepKind::RandomTreeDepth {
                probabilities,
                depths,
                reactance,
                cost,
            } => {
                for d in depths.expand()? {
                    DegreeDistribution::from_weights(probabilities, d)
                        .with_reactance(reactance.lo, reactance.hi)
                        .with_cost(cost.lo, cost.hi)
                        .validate()?;
                }
            }
            SweepKind::CostCoefficient { y_values, .. } => {
                if y_values.is_empty() || y_values.iter().any(|&y| !(y > 0.0 && y.is_finite())) {
                    return Err(Error::InvalidSpec("y_values must be positive".into()));
                }
            }
            SweepKind::Alpha { alphas, .. } => {
                if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(Error::InvalidSpec("alphas must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn label(&self) -> &'static str {
        match self.kind {
            SweepKind::ChainSize { .. } => "chain-size",
            SweepKind::RandomTreeDepth { .. } => "random-tree-depth",
            SweepKind::CostCoefficient { .. } => "cost-coefficient",
            SweepKind::Alpha { .. } => "alpha",
        }
    }
}

/// One CSV row. Fields that do not apply to a sweep kind are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: String,
    pub instance: usize,
    pub repetition: usize,
    pub seed: u64,
    pub param: f64,
    pub n: usize,
    pub depth: usize,
    pub topology_hash: String,
    pub posa_max: Option<f64>,
    pub upper: Option<f64>,
    pub refined_upper: Option<f64>,
    pub lower: Option<f64>,
    pub lower_clamped: Option<f64>,
    pub gap_bound: Option<f64>,
    pub lambda_min_x: Option<f64>,
    pub d: Option<f64>,
    pub y: Option<f64>,
    pub chain_bound: Option<f64>,
    /// `F(qᵃ) - F(q*)` for the instance's own voltage deviation.
    pub posa: Option<f64>,
    pub sigma_taking: Option<f64>,
    pub sigma_anticipating: Option<f64>,
    pub sufficient_lhs: Option<f64>,
    pub taking_verdict: Option<String>,
    pub taking_iterations: Option<usize>,
    pub anticipating_verdict: Option<String>,
    pub anticipating_iterations: Option<usize>,
    pub ac_taking_verdict: Option<String>,
    pub ac_taking_iterations: Option<usize>,
    pub ac_anticipating_verdict: Option<String>,
    pub ac_anticipating_iterations: Option<usize>,
}

impl SweepRow {
    fn new(
        kind: &str,
        instance: usize,
        repetition: usize,
        seed: u64,
        param: f64,
        net: &RadialNetwork,
    ) -> Self {
        Self {
            kind: kind.to_string(),
            instance,
            repetition,
            seed,
            param,
            n: net.n(),
            depth: net.max_depth(),
            topology_hash: net.topology_hash(),
            posa_max: None,
            upper: None,
            refined_upper: None,
            lower: None,
            lower_clamped: None,
            gap_bound: None,
            lambda_min_x: None,
            d: None,
            y: None,
            chain_bound: None,
            posa: None,
            sigma_taking: None,
            sigma_anticipating: None,
            sufficient_lhs: None,
            taking_verdict: None,
            taking_iterations: None,
            anticipating_verdict: None,
            anticipating_iterations: None,
            ac_taking_verdict: None,
            ac_taking_iterations: None,
            ac_anticipating_verdict: None,
            ac_anticipating_iterations: None,
        }
    }

    fn set_posa(&mut self, r: &PosaReport) {
        self.posa_max = Some(r.posa_max);
        self.upper = Some(r.upper);
        self.refined_upper = Some(r.refined_upper);
        self.lower = Some(r.lower);
        self.lower_clamped = Some(r.lower_clamped);
        self.gap_bound = Some(r.gap_bound);
        self.lambda_min_x = Some(r.lambda_min_x);
        self.d = Some(r.d);
        self.y = Some(r.y);
    }

    fn set_condition(&mut self, c: &ConditionReport) {
        self.sigma_taking = Some(c.sigma_taking);
        self.sigma_anticipating = Some(c.sigma_anticipating);
        self.sufficient_lhs = Some(c.sufficient_lhs);
    }

    /// The bound fields as a report, if present, for re-checking.
    fn posa_report(&self) -> Option<PosaReport> {
        Some(PosaReport {
            n: self.n,
            posa_max: self.posa_max?,
            upper: self.upper?,
            refined_upper: self.refined_upper?,
            lower: self.lower?,
            lower_clamped: self.lower_clamped?,
            gap_bound: self.gap_bound?,
            lambda_min_x: self.lambda_min_x?,
            d: self.d?,
            y: self.y?,
            worst_direction: Vec::new(),
        })
    }
}

fn verdict_parts(v: &Verdict) -> (Option<String>, Option<usize>) {
    let it = match v {
        Verdict::Converged { iterations } => Some(*iterations),
        Verdict::Diverged { iteration } => Some(*iteration),
        Verdict::MaxIter => None,
    };
    (Some(v.label().to_string()), it)
}

/// Deterministic per-instance seed (SplitMix64 finalizer).
pub fn instance_seed(base: u64, instance: usize, repetition: usize) -> u64 {
    let mut z = base
        .wrapping_add((instance as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((repetition as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct Job {
    instance: usize,
    repetition: usize,
    param: f64,
}

fn jobs(spec: &SweepSpec) -> Result<Vec<Job>> {
    let params: Vec<f64> = match &spec.kind {
        SweepKind::ChainSize { sizes, .. } => sizes.expand()?.into_iter().map(|s| s as f64).collect(),
        SweepKind::RandomTreeDepth { depths, .. } => depths.expand()?.into_iter().map(|s| s as f64).collect(),
        SweepKind::CostCoefficient { y_values, .. } => y_values.clone(),
        SweepKind::Alpha { alphas, .. } => alphas.clone(),
    };
    // Deterministic SCE sweeps gain nothing from repetition.
    let reps = match spec.kind {
        SweepKind::CostCoefficient { .. } | SweepKind::Alpha { .. } => 1,
        _ => spec.repetitions,
    };
    Ok(params
        .iter()
        .enumerate()
        .flat_map(|(instance, &param)| {
            (0..reps).map(move |repetition| Job {
                instance,
                repetition,
                param,
            })
        })
        .collect())
}

fn bound_report(net: &RadialNetwork, y: &[f64]) -> Result<(PosaReport, ConditionReport)> {
    let alphas: Vec<f64> = y.iter().map(|v| 1.0 / v).collect();
    if net.n() <= DENSE_LIMIT {
        let s = build_sensitivity(net);
        Ok((posa_report(&s, y)?, condition_report(&s, &alphas)?))
    } else {
        let opts = LanczosOptions::default();
        Ok((
            posa_report_tree(net, y, opts)?,
            condition_report_tree(net, &alphas, opts)?,
        ))
    }
}

fn run_chain(job: Job, seed: u64, reactance: &ParamRange, cost: &ParamRange) -> Result<SweepRow> {
    use rand::SeedableRng;
    let n = job.param as usize;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| reactance.draw(&mut rng)).collect();
    let ys: Vec<f64> = (0..n).map(|_| cost.draw(&mut rng)).collect();
    let net = chain(&xs)?;
    let (report, cond) = bound_report(&net, &ys)?;
    let mut row = SweepRow::new("chain-size", job.instance, job.repetition, seed, job.param, &net);
    row.set_posa(&report);
    row.set_condition(&cond);
    row.chain_bound = Some(if reactance.is_fixed() && cost.is_fixed() {
        chain_upper_bound_uniform(n, reactance.lo, cost.lo)?
    } else {
        let a = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let b = xs.iter().copied().fold(0.0, f64::max);
        chain_upper_bound_range(n, a, b, report.d, report.y)?
    });
    Ok(row)
}

fn run_tree(
    job: Job,
    seed: u64,
    probabilities: &[f64],
    reactance: &ParamRange,
    cost: &ParamRange,
) -> Result<SweepRow> {
    let dist = DegreeDistribution::from_weights(probabilities, job.param as usize)
        .with_reactance(reactance.lo, reactance.hi)
        .with_cost(cost.lo, cost.hi);
    let inst = random_tree(&dist, seed)?;
    let (report, cond) = bound_report(&inst.network, &inst.costs)?;
    let mut row = SweepRow::new(
        "random-tree-depth",
        job.instance,
        job.repetition,
        seed,
        job.param,
        &inst.network,
    );
    row.set_posa(&report);
    row.set_condition(&cond);
    Ok(row)
}

fn sce_controls(case: &Sce42, f: impl Fn(&DroopParams) -> DroopParams) -> Result<ControlSpec> {
    let laws = case
        .controls
        .controls
        .iter()
        .map(|c| match c {
            LocalControl::Droop(p) => Ok(LocalControl::Droop(f(p))),
            LocalControl::Tabulated(_) => Err(Error::InvalidSpec("SCE sweeps expect droop controls".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    ControlSpec::new(laws)
}

/// Rows for the cost-coefficient sweep: `Π` bounds for quadratic costs `y`
/// on the actuator buses, and the realized loss for the feeder's own
/// voltage deviation under the configured deadband and capacity limits.
fn run_cost(job: Job, opts: &Sce42Options) -> Result<SweepRow> {
    let y = job.param;
    let o = Sce42Options {
        alpha: 1.0 / y,
        ..*opts
    };
    let case = load_sce42(None, &o)?;
    let model = actuator_model(&case.network, case.controls.clone())?;
    let ys = vec![y; model.dim()];
    let report = posa_report(&model.s, &ys)?;
    let cond = condition_report(&model.s, &model.ctrl.alphas())?;
    let mut row = SweepRow::new("cost-coefficient", job.instance, 0, 0, y, &case.network);
    row.set_posa(&report);
    row.set_condition(&cond);
    row.posa = Some(posa(&model)?);
    Ok(row)
}

fn run_alpha(job: Job, opts: &Sce42Options, ac: bool, run_opts: &RunOptions) -> Result<SweepRow> {
    let case = load_sce42(None, opts)?;
    let ctrl = sce_controls(&case, |p| DroopParams {
        alpha: job.param,
        ..*p
    })?;
    let model = actuator_model(&case.network, ctrl.clone())?;
    let cond = condition_report(&model.s, &model.ctrl.alphas())?;
    let mut row = SweepRow::new("alpha", job.instance, 0, 0, job.param, &case.network);
    row.set_condition(&cond);
    let q0 = DVector::zeros(model.dim());
    let taking = run(&model.stepper(Law::Taking), &q0, run_opts)?;
    let antic = run(&model.stepper(Law::Anticipating), &q0, run_opts)?;
    (row.taking_verdict, row.taking_iterations) = verdict_parts(&taking.verdict);
    (row.anticipating_verdict, row.anticipating_iterations) = verdict_parts(&antic.verdict);
    row.posa = Some(posa(&model)?);
    if ac {
        let sweep = SweepOptions::default();
        let t = closed_loop_ac(&case.network, &ctrl, Law::Taking, &q0, run_opts, sweep)?;
        let a = closed_loop_ac(&case.network, &ctrl, Law::Anticipating, &q0, run_opts, sweep)?;
        (row.ac_taking_verdict, row.ac_taking_iterations) = verdict_parts(&t.verdict);
        (row.ac_anticipating_verdict, row.ac_anticipating_iterations) = verdict_parts(&a.verdict);
    }
    Ok(row)
}

fn run_job(spec: &SweepSpec, job: Job) -> Result<SweepRow> {
    let seed = instance_seed(spec.seed, job.instance, job.repetition);
    let run_opts = RunOptions {
        tol: spec.tol,
        max_iter: spec.max_iter,
        record_every: 0,
        ..RunOptions::default()
    };
    match &spec.kind {
        SweepKind::ChainSize { reactance, cost, .. } => run_chain(job, seed, reactance, cost),
        SweepKind::RandomTreeDepth {
            probabilities,
            reactance,
            cost,
            ..
        } => run_tree(job, seed, probabilities, reactance, cost),
        SweepKind::CostCoefficient { case, .. } => run_cost(job, case),
        SweepKind::Alpha { case, ac, .. } => run_alpha(job, case, *ac, &run_opts),
    }
}

/// Worker count from `VOLTGAME_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Runs every instance of the sweep and returns rows in instance order.
/// Each row's bound ordering is checked again before it is returned.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let jobs = jobs(spec)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let rows: Vec<Result<SweepRow>> = pool.install(|| jobs.par_iter().map(|&j| run_job(spec, j)).collect());
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let row = row?;
        if let Some(r) = row.posa_report() {
            r.check_ordering(ORDERING_RTOL)?;
        }
        debug_assert_eq!(row.kind, spec.label());
        out.push(row);
    }
    Ok(out)
}

/// Runs the sweep and writes the CSV with the schema header.
pub fn write_sweep_csv<W: Write>(w: W, spec: &SweepSpec) -> Result<()> {
    let rows = run_sweep(spec)?;
    crate::io::write_rows_csv(w, &rows)
}

/// Linear model of the SCE feeder with a uniform droop law.
pub fn sce42_model(opts: &Sce42Options) -> Result<(Sce42, LinearModel)> {
    let case = load_sce42(None, opts)?;
    let model = actuator_model(&case.network, case.controls.clone())?;
    Ok((case, model))
}

/// Voltage deviation of the SCE feeder at the actuator buses with `q = 0`.
pub fn sce42_deviation(model: &LinearModel) -> DVector<f64> {
    let OperatingConstants { v_tilde, v_nom, .. } = &model.vt;
    v_tilde - v_nom
}
