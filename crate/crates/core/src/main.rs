use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use voltgame::acflow::{closed_loop_ac, SweepOptions};
use voltgame::controls::{ControlSpec, DroopParams, LocalControl};
use voltgame::dynamics::{actuator_model, run, Law, RunOptions};
use voltgame::equilibrium::{posa_report, posa_report_auto, solve, Objective, PosaReport};
use voltgame::experiments::sce42::{build_sce42, write_lines_csv, Sce42Data};
use voltgame::experiments::{write_sweep_csv, Sce42Options, SweepSpec};
use voltgame::io::{
    load_network, write_matrix_csv, write_rows_csv, write_trace_csv, Case, ControlBlock, ControlEntry,
    NetworkFile,
};
use voltgame::sensitivity::{build_sensitivity, x_inverse_analytic};
use voltgame::topology::{random_tree, DegreeDistribution, RadialNetwork};
use voltgame::{Error, Result};

#[derive(Parser)]
#[command(
    name = "voltgame",
    version,
    about = "Local Volt/Var control on radial feeders"
)]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and print a one-row summary.
    Validate { net: PathBuf },
    /// Dump a sensitivity matrix.
    Matrices {
        net: PathBuf,
        #[arg(long, value_enum, default_value_t = MatrixKind::X)]
        kind: MatrixKind,
    },
    /// Run the closed loop and print the trace.
    Simulate {
        net: PathBuf,
        #[arg(long, value_enum)]
        law: LawArg,
        #[command(flatten)]
        droop: DroopArgs,
        /// Observe voltages from the AC branch-flow solution.
        #[arg(long)]
        ac: bool,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Keep every k-th iterate (0 keeps first and last only).
        #[arg(long, default_value_t = 1)]
        record_every: usize,
    },
    /// Solve for the equilibrium of a law.
    Equilibrium {
        net: PathBuf,
        #[arg(long, value_enum)]
        law: LawArg,
        #[command(flatten)]
        droop: DroopArgs,
    },
    /// Worst-case efficiency loss and its bounds, as JSON.
    Posa {
        net: PathBuf,
        /// Uniform quadratic cost coefficient; defaults to `1/alpha` from the file.
        #[arg(long)]
        y: Option<f64>,
        /// Seed to record in the report; defaults to the one stored in the file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a parameter sweep described by a JSON spec.
    Sweep { spec: PathBuf },
    /// Generate a random feeder as network JSON.
    RandomTree {
        /// Child-count probabilities for 1, 2, ... children.
        #[arg(long, value_delimiter = ',', required = true)]
        dist: Vec<f64>,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        reactance_max: f64,
        #[arg(long, default_value_t = 100.0)]
        cost_max: f64,
    },
    /// Emit the SCE 42-bus feeder.
    Sce42(Sce42Args),
}

#[derive(Args)]
struct DroopArgs {
    /// Uniform droop slope, replacing the file's control block.
    #[arg(long)]
    alpha: Option<f64>,
    /// Deadband width used with --alpha.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
}

#[derive(Args)]
struct Sce42Args {
    /// Directory with sce42_lines.csv and sce42_buses.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    /// CSV with from,to,r_ohm,x_ohm replacing line impedances.
    #[arg(long)]
    overrides: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    loading: f64,
    #[arg(long, default_value_t = 0.9)]
    power_factor: f64,
    #[arg(long, default_value_t = 1.0)]
    pv_output: f64,
    #[arg(long)]
    capacity_limits: bool,
    #[arg(long, default_value_t = 1.1)]
    inverter_oversize: f64,
    #[arg(long, default_value_t = 1e-3)]
    min_reactance_ohm: f64,
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    #[arg(long, default_value_t = 9.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = Sce42Format::Json)]
    format: Sce42Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixKind {
    X,
    R,
    Xbar,
    Xinv,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Taking,
    Anticipating,
}

impl From<LawArg> for Law {
    fn from(l: LawArg) -> Self {
        match l {
            LawArg::Taking => Law::Taking,
            LawArg::Anticipating => Law::Anticipating,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Sce42Format {
    /// Network JSON with a control block.
    Json,
    /// Line table in ohms.
    Lines,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn controls_for(case: &Case, droop: &DroopArgs) -> Result<ControlSpec> {
    let net = &case.network;
    match (droop.alpha, &case.controls) {
        (Some(alpha), _) => ControlSpec::new(
            net.actuator_indices()
                .iter()
                .map(|&k| {
                    let b = net.bus(k + 1);
                    LocalControl::Droop(DroopParams::new(alpha, droop.delta).with_box(b.q_min, b.q_max))
                })
                .collect(),
        ),
        (None, Some(c)) => Ok(c.clone()),
        (None, None) => Err(Error::InvalidControl(
            "network has no control block; pass --alpha".into(),
        )),
    }
}

fn actuator_labels(net: &RadialNetwork) -> Vec<String> {
    net.actuator_indices()
        .iter()
        .map(|&k| net.label(k + 1).to_string())
        .collect()
}

#[derive(Serialize)]
struct Summary {
    n: usize,
    lines: usize,
    actuators: usize,
    max_depth: usize,
    v0: f64,
    topology_hash: String,
}

#[derive(Serialize)]
struct PosaOutput {
    /// Buses in the network; the report's `n` counts actuators.
    buses: usize,
    topology_hash: String,
    seed: Option<u64>,
    /// Loss for the network's own voltage deviation, when computed densely.
    posa: Option<f64>,
    #[serde(flatten)]
    report: PosaReport,
}

#[derive(Serialize)]
struct EquilibriumRow {
    bus: String,
    q: f64,
    v: f64,
}

fn cmd_validate(net: &Path, w: &mut dyn Write) -> Result<()> {
    let case = load_network(net)?;
    let n = &case.network;
    let row = Summary {
        n: n.n(),
        lines: n.lines().len(),
        actuators: n.actuator_indices().len(),
        max_depth: n.max_depth(),
        v0: n.v0(),
        topology_hash: n.topology_hash(),
    };
    write_rows_csv(w, &[row])
}

fn cmd_matrices(net: &Path, kind: MatrixKind, w: &mut dyn Write) -> Result<()> {
    let net = load_network(net)?.network;
    let (name, m) = match kind {
        MatrixKind::X => ("X", build_sensitivity(&net).x),
        MatrixKind::R => ("R", build_sensitivity(&net).r),
        MatrixKind::Xbar => ("Xbar", build_sensitivity(&net).xbar),
        MatrixKind::Xinv => ("Xinv", x_inverse_analytic(&net)),
    };
    write_matrix_csv(w, name, &m)
}

fn cmd_simulate(
    net: &Path,
    law: Law,
    droop: &DroopArgs,
    ac: bool,
    opts: RunOptions,
    w: &mut dyn Write,
) -> Result<()> {
    let case = load_network(net)?;
    let ctrl = controls_for(&case, droop)?;
    let q0 = DVector::zeros(ctrl.len());
    let trace = if ac {
        closed_loop_ac(&case.network, &ctrl, law, &q0, &opts, SweepOptions::default())?
    } else {
        let model = actuator_model(&case.network, ctrl)?;
        run(&model.stepper(law), &q0, &opts)?
    };
    eprintln!("{law}: {}", trace.verdict.label());
    write_trace_csv(w, &trace, &actuator_labels(&case.network), true)
}

fn cmd_equilibrium(net: &Path, law: Law, droop: &DroopArgs, w: &mut dyn Write) -> Result<()> {
    let case = load_network(net)?;
    let ctrl = controls_for(&case, droop)?;
    let model = actuator_model(&case.network, ctrl)?;
    let which = match law {
        Law::Taking => Objective::F,
        Law::Anticipating => Objective::W,
    };
    let eq = solve(&model, which)?;
    eprintln!("F = {:e}, W = {:e}", eq.f_value, eq.w_value);
    let rows: Vec<EquilibriumRow> = actuator_labels(&case.network)
        .into_iter()
        .enumerate()
        .map(|(k, bus)| EquilibriumRow {
            bus,
            q: eq.q[k],
            v: eq.v[k],
        })
        .collect();
    write_rows_csv(w, &rows)
}

fn cmd_posa(net: &Path, y: Option<f64>, seed: Option<u64>, w: &mut dyn Write) -> Result<()> {
    let case = load_network(net)?;
    let network = &case.network;
    let idx = network.actuator_indices();
    let ys = match (y, case.controls.as_ref().and_then(|c| c.quadratic_costs())) {
        (Some(y), _) => vec![y; idx.len()],
        (None, Some(ys)) => ys,
        (None, None) => {
            return Err(Error::InvalidControl(
                "posa needs quadratic costs: pass --y or a control block with delta = 0".into(),
            ))
        }
    };
    let (report, posa) = if idx.len() == network.n() && network.n() > voltgame::equilibrium::DENSE_LIMIT {
        (posa_report_auto(network, None, &ys)?, None)
    } else {
        let full = build_sensitivity(network);
        let vt = voltgame::dynamics::OperatingConstants::from_network(network, &full)?.restrict(&idx);
        let s = full.restrict(&idx);
        let pi = voltgame::equilibrium::pi_matrix(&s, &ys)?;
        let dv = &vt.v_tilde - &vt.v_nom;
        (posa_report(&s, &ys)?, Some(PosaReport::posa_for(&pi, &dv)))
    };
    let out = PosaOutput {
        buses: network.n(),
        topology_hash: network.topology_hash(),
        seed: seed.or(case.seed),
        posa,
        report,
    };
    serde_json::to_writer_pretty(&mut *w, &out).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    Ok(())
}

fn cmd_random_tree(
    dist: &[f64],
    depth: usize,
    seed: u64,
    reactance_max: f64,
    cost_max: f64,
    w: &mut dyn Write,
) -> Result<()> {
    let d = DegreeDistribution::from_weights(dist, depth)
        .with_reactance(0.0, reactance_max)
        .with_cost(0.0, cost_max);
    let inst = random_tree(&d, seed)?;
    let net = &inst.network;
    let control = ControlBlock {
        default: None,
        per_bus: (1..=net.n())
            .map(|i| {
                (
                    net.label(i).to_string(),
                    ControlEntry::droop(1.0 / inst.costs[i - 1], 0.0),
                )
            })
            .collect(),
    };
    let mut file = NetworkFile::from_network(net, Some(control));
    file.seed = Some(seed);
    writeln!(w, "{}", file.to_json()?)?;
    Ok(())
}

fn cmd_sce42(a: &Sce42Args, w: &mut dyn Write) -> Result<()> {
    let mut data = match &a.data {
        Some(dir) => Sce42Data::from_dir(dir)?,
        None => Sce42Data::bundled()?,
    };
    if let Some(path) = &a.overrides {
        data.apply_overrides(fs::File::open(path)?)?;
    }
    let opts = Sce42Options {
        loading: a.loading,
        power_factor: a.power_factor,
        pv_output: a.pv_output,
        capacity_limits: a.capacity_limits,
        inverter_oversize: a.inverter_oversize,
        min_reactance_ohm: a.min_reactance_ohm,
        v0: a.v0,
        alpha: a.alpha,
        delta: a.delta,
    };
    let case = build_sce42(&data, &opts)?;
    for (from, to) in &case.floored {
        eprintln!(
            "line {from}-{to}: zero reactance replaced by {} ohm",
            opts.min_reactance_ohm
        );
    }
    match a.format {
        Sce42Format::Lines => write_lines_csv(w, &case.network),
        Sce42Format::Json => {
            let control = ControlBlock {
                default: Some(ControlEntry::droop(opts.alpha, opts.delta)),
                per_bus: Default::default(),
            };
            let file = NetworkFile::from_network(&case.network, Some(control));
            writeln!(w, "{}", file.to_json()?)?;
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut w = output(cli.out.as_deref())?;
    let w: &mut dyn Write = &mut *w;
    match cli.command {
        Command::Validate { net } => cmd_validate(&net, w)?,
        Command::Matrices { net, kind } => cmd_matrices(&net, kind, w)?,
        Command::Simulate {
            net,
            law,
            droop,
            ac,
            max_iter,
            tol,
            record_every,
        } => {
            let opts = RunOptions {
                tol,
                max_iter,
                record_every,
                ..RunOptions::default()
            };
            cmd_simulate(&net, law.into(), &droop, ac, opts, w)?
        }
        Command::Equilibrium { net, law, droop } => cmd_equilibrium(&net, law.into(), &droop, w)?,
        Command::Posa { net, y, seed } => cmd_posa(&net, y, seed, w)?,
        Command::Sweep { spec } => {
            let spec = SweepSpec::from_json(&fs::read_to_string(spec)?)?;
            write_sweep_csv(&mut *w, &spec)?
        }
        Command::RandomTree {
            dist,
            depth,
            seed,
            reactance_max,
            cost_max,
        } => cmd_random_tree(&dist, depth, seed, reactance_max, cost_max, w)?,
        Command::Sce42(a) => cmd_sce42(&a, w)?,
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
