//! Network files, matrix dumps and CSV/JSON report output.
//!
//! Network JSON:
//!
//! ```json
//! {
//!   "v0": 1.0,
//!   "root": "0",
//!   "buses": [{"id": "1", "p_c": 0.1, "q_c": 0.05, "actuator": true, "q_min": -1, "q_max": 1}],
//!   "lines": [{"from": "0", "to": "1", "r": 0.01, "x": 0.02}],
//!   "control": {"default": {"alpha": 2.0, "delta": 0.02}, "per_bus": {"1": {"alpha": 3.0}}}
//! }
//! ```
//!
//! Bus ids may be numbers or strings. Lines may be listed in either
//! direction; they are oriented away from the root. A `null` or missing box
//! limit means unbounded.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::controls::{ControlSpec, DroopParams, LocalControl, TabulatedControl};
use crate::dynamics::SimulationTrace;
use crate::topology::{BusData, Line, RadialNetwork};
use crate::{Error, Result};

/// Header line of every CSV this crate writes.
pub const SCHEMA_HEADER: &str = "# voltgame-schema=1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Num(u64),
    Str(String),
}

impl Label {
    pub fn key(&self) -> String {
        match self {
            Label::Num(n) => n.to_string(),
            Label::Str(s) => s.clone(),
        }
    }
}

fn default_v0() -> f64 {
    1.0
}

fn default_vnom() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: Label,
    #[serde(default)]
    pub p_c: f64,
    #[serde(default)]
    pub p_g: f64,
    #[serde(default)]
    pub q_c: f64,
    #[serde(default = "default_vnom")]
    pub v_nom: f64,
    #[serde(default)]
    pub q_min: Option<f64>,
    #[serde(default)]
    pub q_max: Option<f64>,
    #[serde(default)]
    pub actuator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: Label,
    pub to: Label,
    #[serde(default)]
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlEntry {
    Droop {
        alpha: f64,
        #[serde(default)]
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q_min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q_max: Option<f64>,
    },
    Tabulated {
        u: Vec<f64>,
        q: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q_min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q_max: Option<f64>,
    },
}

impl ControlEntry {
    pub fn droop(alpha: f64, delta: f64) -> Self {
        ControlEntry::Droop {
            alpha,
            delta,
            q_min: None,
            q_max: None,
        }
    }

    /// Law for a bus; limits missing here fall back to the bus box.
    fn resolve(&self, bus: &BusData) -> Result<LocalControl> {
        let lim = |v: Option<f64>, fallback: f64| v.unwrap_or(fallback);
        Ok(match self {
            ControlEntry::Droop {
                alpha,
                delta,
                q_min,
                q_max,
            } => {
                if *alpha < 0.0 || *delta < 0.0 {
                    return Err(Error::InvalidControl(
                        "alpha and delta must be non-negative".into(),
                    ));
                }
                LocalControl::Droop(
                    DroopParams::new(*alpha, *delta).with_box(lim(*q_min, bus.q_min), lim(*q_max, bus.q_max)),
                )
            }
            ControlEntry::Tabulated { u, q, q_min, q_max } => LocalControl::Tabulated(
                TabulatedControl::new(u.clone(), q.clone())?
                    .with_box(lim(*q_min, bus.q_min), lim(*q_max, bus.q_max)),
            ),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ControlEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_bus: BTreeMap<String, ControlEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default = "default_v0")]
    pub v0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<Label>,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlBlock>,
    /// Generator seed, for networks produced by `random_tree`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A loaded network and, if the file carried a control block, the laws of
/// its actuators.
#[derive(Debug, Clone)]
pub struct Case {
    pub network: RadialNetwork,
    pub controls: Option<ControlSpec>,
    pub seed: Option<u64>,
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("network json", e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("network json", e))
    }

    /// Remaps labels to dense ids (root 0, other buses in input order),
    /// orients lines away from the root and validates the tree.
    pub fn into_case(self) -> Result<Case> {
        let root = self.root.clone().unwrap_or(Label::Num(0)).key();
        let mut ids: HashMap<String, usize> = HashMap::new();
        ids.insert(root.clone(), 0);
        let mut labels = vec![root.clone()];
        let mut records = Vec::new();
        for (row, b) in self.buses.iter().enumerate() {
            let key = b.id.key();
            if key == root {
                continue;
            }
            if ids.insert(key.clone(), labels.len()).is_some() {
                return Err(Error::parse(
                    format!("bus {row}"),
                    format!("duplicate id {key:?}"),
                ));
            }
            labels.push(key);
            records.push(b);
        }
        let lookup = |l: &Label, row: usize| {
            ids.get(&l.key())
                .copied()
                .ok_or_else(|| Error::parse(format!("line {row}"), format!("unknown bus {:?}", l.key())))
        };
        let mut raw = Vec::with_capacity(self.lines.len());
        for (row, l) in self.lines.iter().enumerate() {
            raw.push(Line::new(lookup(&l.from, row)?, lookup(&l.to, row)?, l.r, l.x));
        }
        let lines = orient_from_root(labels.len(), raw);
        let buses: Vec<BusData> = records
            .iter()
            .map(|b| BusData {
                p_c: b.p_c,
                p_g: b.p_g,
                q_c: b.q_c,
                v_nom: b.v_nom,
                q_min: b.q_min.unwrap_or(f64::NEG_INFINITY),
                q_max: b.q_max.unwrap_or(f64::INFINITY),
                is_actuator: b.actuator,
            })
            .collect();
        let network = RadialNetwork::with_labels(self.v0, buses, lines, labels)?;
        let controls = match &self.control {
            None => None,
            Some(block) => Some(resolve_controls(&network, block)?),
        };
        // A zero slope means the bus has no controller.
        let network = match &controls {
            Some((_, passive)) if !passive.is_empty() => {
                let mut buses = network.buses().to_vec();
                for &k in passive {
                    buses[k].is_actuator = false;
                }
                network.with_buses(buses)?
            }
            _ => network,
        };
        Ok(Case {
            network,
            controls: controls.map(|(spec, _)| spec),
            seed: self.seed,
        })
    }

    /// File representation of a network, optionally with a control block.
    pub fn from_network(net: &RadialNetwork, control: Option<ControlBlock>) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            v0: net.v0(),
            root: Some(Label::Str(net.label(0).to_string())),
            buses: net
                .buses()
                .iter()
                .enumerate()
                .map(|(k, b)| BusRecord {
                    id: Label::Str(net.label(k + 1).to_string()),
                    p_c: b.p_c,
                    p_g: b.p_g,
                    q_c: b.q_c,
                    v_nom: b.v_nom,
                    q_min: finite(b.q_min),
                    q_max: finite(b.q_max),
                    actuator: b.is_actuator,
                })
                .collect(),
            lines: net
                .lines()
                .iter()
                .map(|l| LineRecord {
                    from: Label::Str(net.label(l.from).to_string()),
                    to: Label::Str(net.label(l.to).to_string()),
                    r: l.r,
                    x: l.x,
                })
                .collect(),
            control,
            seed: None,
        }
    }
}

/// Controls for every actuator, plus the 0-based indices of actuators whose
/// slope is zero.
fn resolve_controls(net: &RadialNetwork, block: &ControlBlock) -> Result<(ControlSpec, Vec<usize>)> {
    for key in block.per_bus.keys() {
        if !net.labels().iter().skip(1).any(|l| l == key) {
            return Err(Error::parse("control", format!("unknown bus {key:?}")));
        }
    }
    let mut laws = Vec::new();
    let mut passive = Vec::new();
    for k in net.actuator_indices() {
        let label = net.label(k + 1);
        let entry = block
            .per_bus
            .get(label)
            .or(block.default.as_ref())
            .ok_or_else(|| Error::parse("control", format!("no control for actuator bus {label:?}")))?;
        let law = entry.resolve(net.bus(k + 1))?;
        if law.alpha() == 0.0 {
            passive.push(k);
        } else {
            laws.push(law);
        }
    }
    Ok((ControlSpec::new(laws)?, passive))
}

/// Breadth-first orientation from node 0. Lines that are not tree edges of
/// the search keep their direction so that validation can report them.
fn orient_from_root(nodes: usize, lines: Vec<Line>) -> Vec<Line> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
    for (k, l) in lines.iter().enumerate() {
        if l.from < nodes && l.to < nodes {
            adj[l.from].push((l.to, k));
            adj[l.to].push((l.from, k));
        }
    }
    let mut via: Vec<Option<usize>> = vec![None; nodes];
    let mut seen = vec![false; nodes];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &(w, k) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                via[w] = Some(k);
                queue.push_back(w);
            }
        }
    }
    lines
        .into_iter()
        .enumerate()
        .map(|(k, l)| {
            if via[l.from] == Some(k) && via[l.to] != Some(k) {
                Line::new(l.to, l.from, l.r, l.x)
            } else {
                l
            }
        })
        .collect()
}

pub fn load_network_json(path: &Path) -> Result<Case> {
    let text = fs::read_to_string(path)?;
    NetworkFile::from_json(&text)?.into_case()
}

#[derive(Debug, Deserialize)]
struct BusRow {
    id: String,
    #[serde(default)]
    p_c: Option<f64>,
    #[serde(default)]
    p_g: Option<f64>,
    #[serde(default)]
    q_c: Option<f64>,
    #[serde(default)]
    v_nom: Option<f64>,
    #[serde(default)]
    q_min: Option<f64>,
    #[serde(default)]
    q_max: Option<f64>,
    #[serde(default)]
    actuator: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LineRow {
    from: String,
    to: String,
    #[serde(default)]
    r: Option<f64>,
    x: f64,
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_flag(s: &str, ctx: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" => Ok(false),
        "1" | "true" | "yes" => Ok(true),
        other => Err(Error::parse(ctx, format!("bad actuator flag {other:?}"))),
    }
}

/// Network from a `buses.csv` / `lines.csv` pair with the JSON columns.
/// Empty limit cells mean unbounded.
pub fn network_from_csv<B: Read, L: Read>(buses: B, lines: L, v0: f64, root: &str) -> Result<Case> {
    let mut bus_records = Vec::new();
    for (row, rec) in csv_reader(buses).deserialize::<BusRow>().enumerate() {
        let ctx = format!("buses.csv row {}", row + 1);
        let b = rec.map_err(|e| Error::parse(&ctx, e))?;
        bus_records.push(BusRecord {
            id: Label::Str(b.id),
            p_c: b.p_c.unwrap_or(0.0),
            p_g: b.p_g.unwrap_or(0.0),
            q_c: b.q_c.unwrap_or(0.0),
            v_nom: b.v_nom.unwrap_or(1.0),
            q_min: b.q_min,
            q_max: b.q_max,
            actuator: parse_flag(b.actuator.as_deref().unwrap_or(""), &ctx)?,
        });
    }
    let mut line_records = Vec::new();
    for (row, rec) in csv_reader(lines).deserialize::<LineRow>().enumerate() {
        let l = rec.map_err(|e| Error::parse(format!("lines.csv row {}", row + 1), e))?;
        line_records.push(LineRecord {
            from: Label::Str(l.from),
            to: Label::Str(l.to),
            r: l.r.unwrap_or(0.0),
            x: l.x,
        });
    }
    NetworkFile {
        v0,
        root: Some(Label::Str(root.to_string())),
        buses: bus_records,
        lines: line_records,
        control: None,
        seed: None,
    }
    .into_case()
}

pub fn load_network_csv_dir(dir: &Path, v0: f64, root: &str) -> Result<Case> {
    network_from_csv(
        fs::File::open(dir.join("buses.csv"))?,
        fs::File::open(dir.join("lines.csv"))?,
        v0,
        root,
    )
}

/// A JSON file, or a directory holding `buses.csv` and `lines.csv`.
pub fn load_network(path: &Path) -> Result<Case> {
    if path.is_dir() {
        load_network_csv_dir(path, 1.0, "0")
    } else {
        load_network_json(path)
    }
}

/// Writes `buses.csv` and `lines.csv` for a network.
pub fn write_network_csv(net: &RadialNetwork, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let opt = |v: f64| {
        if v.is_finite() {
            v.to_string()
        } else {
            String::new()
        }
    };
    let mut b = String::from("id,p_c,p_g,q_c,v_nom,q_min,q_max,actuator\n");
    for (k, bus) in net.buses().iter().enumerate() {
        b += &format!(
            "{},{},{},{},{},{},{},{}\n",
            net.label(k + 1),
            bus.p_c,
            bus.p_g,
            bus.q_c,
            bus.v_nom,
            opt(bus.q_min),
            opt(bus.q_max),
            bus.is_actuator
        );
    }
    let mut l = String::from("from,to,r,x\n");
    for line in net.lines() {
        l += &format!(
            "{},{},{},{}\n",
            net.label(line.from),
            net.label(line.to),
            line.r,
            line.x
        );
    }
    fs::write(dir.join("buses.csv"), b)?;
    fs::write(dir.join("lines.csv"), l)?;
    Ok(())
}

/// Dense matrix as CSV under a `# n=<n> kind=<kind>` header.
pub fn write_matrix_csv<W: Write>(mut w: W, kind: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "# n={} kind={}", m.nrows(), kind)?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Parses a matrix dump, returning the kind and the matrix.
pub fn read_matrix_csv(text: &str) -> Result<(String, DMatrix<f64>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("matrix", "empty input"))?;
    let mut n = None;
    let mut kind = None;
    for tok in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("n=") {
            n = Some(v.parse::<usize>().map_err(|e| Error::parse("matrix header", e))?);
        } else if let Some(v) = tok.strip_prefix("kind=") {
            kind = Some(v.to_string());
        }
    }
    let (n, kind) = match (n, kind) {
        (Some(n), Some(k)) => (n, k),
        _ => {
            return Err(Error::parse(
                "matrix header",
                format!("malformed header {header:?}"),
            ))
        }
    };
    let mut data = Vec::with_capacity(n * n);
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let before = data.len();
        for cell in line.split(',') {
            data.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(format!("matrix row {}", row + 1), e))?,
            );
        }
        if data.len() - before != n {
            return Err(Error::parse(
                format!("matrix row {}", row + 1),
                "wrong column count",
            ));
        }
    }
    if data.len() != n * n {
        return Err(Error::parse("matrix", format!("expected {n} rows")));
    }
    Ok((kind, DMatrix::from_row_slice(n, n, &data)))
}

/// Trace rows `t, residual, q_<bus>..., [v_<bus>...]`. The residual of row
/// `t` is `‖q(t+1) - q(t)‖_∞` and is empty on the final row.
pub fn write_trace_csv<W: Write>(
    mut w: W,
    trace: &SimulationTrace,
    labels: &[String],
    with_voltages: bool,
) -> Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "residual".to_string()];
    header.extend(labels.iter().map(|l| format!("q_{l}")));
    if with_voltages {
        header.extend(labels.iter().map(|l| format!("v_{l}")));
    }
    out.write_record(&header).map_err(csv_err)?;
    for (k, &t) in trace.times.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.push(trace.residuals.get(t).map(|r| r.to_string()).unwrap_or_default());
        rec.extend(trace.q[k].iter().map(|v| v.to_string()));
        if with_voltages {
            rec.extend(trace.v[k].iter().map(|v| v.to_string()));
        }
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::parse("csv", format!("{other:?}")),
    }
}

/// Writes `rows` as CSV (with the schema header) using serde field names.
pub fn write_rows_csv<W: Write, T: Serialize>(mut w: W, rows: &[T]) -> Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
