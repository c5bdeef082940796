//! The SCE 42-bus feeder with five PV inverters.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controls::{ControlSpec, DroopParams};
use crate::io::csv_err;
use crate::topology::{BusData, Line, RadialNetwork};
use crate::{Error, Result};

pub const V_BASE_KV: f64 = 12.35;
pub const S_BASE_KVA: f64 = 1000.0;
pub const Z_BASE_OHM: f64 = 152.52;

const LINES_CSV: &str = include_str!("../../data/sce42_lines.csv");
const BUSES_CSV: &str = include_str!("../../data/sce42_buses.csv");

pub const LINE_COUNT: usize = 41;
pub const PV_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineOhm {
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default, deserialize_with = "flag")]
    pub ambiguous: bool,
}

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    Ok(!s.trim().is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusOhm {
    pub bus: String,
    pub peak_mva: Option<f64>,
    pub pv_mw: Option<f64>,
}

/// Raw table data in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Sce42Data {
    pub lines: Vec<LineOhm>,
    pub buses: Vec<BusOhm>,
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

impl Sce42Data {
    pub fn bundled() -> Result<Self> {
        Self::from_readers(LINES_CSV.as_bytes(), BUSES_CSV.as_bytes())
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        Self::from_readers(
            fs::File::open(dir.join("sce42_lines.csv"))?,
            fs::File::open(dir.join("sce42_buses.csv"))?,
        )
    }

    pub fn from_readers<L: Read, B: Read>(lines: L, buses: B) -> Result<Self> {
        let lines = reader(lines)
            .deserialize()
            .enumerate()
            .map(|(k, r)| r.map_err(|e| Error::parse(format!("sce42 line row {}", k + 1), e)))
            .collect::<Result<Vec<LineOhm>>>()?;
        let buses = reader(buses)
            .deserialize()
            .enumerate()
            .map(|(k, r)| r.map_err(|e| Error::parse(format!("sce42 bus row {}", k + 1), e)))
            .collect::<Result<Vec<BusOhm>>>()?;
        let data = Self { lines, buses };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lines.len() != LINE_COUNT {
            return Err(Error::parse(
                "sce42 lines",
                format!("expected {LINE_COUNT} lines, found {}", self.lines.len()),
            ));
        }
        let pvs = self.buses.iter().filter(|b| b.pv_mw.is_some()).count();
        if pvs != PV_COUNT {
            return Err(Error::parse(
                "sce42 buses",
                format!("expected {PV_COUNT} PV buses, found {pvs}"),
            ));
        }
        Ok(())
    }

    /// Replaces impedances from an override CSV with columns
    /// `from,to,r_ohm,x_ohm`. Overridden rows are no longer ambiguous.
    pub fn apply_overrides<R: Read>(&mut self, overrides: R) -> Result<()> {
        #[derive(Deserialize)]
        struct Row {
            from: String,
            to: String,
            r_ohm: f64,
            x_ohm: f64,
        }
        for (k, rec) in reader(overrides).deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::parse(format!("override row {}", k + 1), e))?;
            let line = self
                .lines
                .iter_mut()
                .find(|l| (l.from == row.from && l.to == row.to) || (l.from == row.to && l.to == row.from))
                .ok_or_else(|| {
                    Error::parse(
                        format!("override row {}", k + 1),
                        format!("no line {}-{}", row.from, row.to),
                    )
                })?;
            line.r_ohm = row.r_ohm;
            line.x_ohm = row.x_ohm;
            line.ambiguous = false;
        }
        Ok(())
    }

    pub fn ambiguous_lines(&self) -> Vec<(String, String)> {
        self.lines
            .iter()
            .filter(|l| l.ambiguous)
            .map(|l| (l.from.clone(), l.to.clone()))
            .collect()
    }
}

/// Operating point and controller settings for the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sce42Options {
    /// Fraction of peak load.
    pub loading: f64,
    /// Lagging load power factor.
    pub power_factor: f64,
    /// PV real output as a fraction of nameplate.
    pub pv_output: f64,
    /// Limit inverter reactive output to `sqrt(S² - p²)`.
    pub capacity_limits: bool,
    /// Inverter apparent-power rating relative to PV nameplate.
    pub inverter_oversize: f64,
    /// Reactance used for ambiguous zero-reactance rows.
    pub min_reactance_ohm: f64,
    pub v0: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl Default for Sce42Options {
    fn default() -> Self {
        Self {
            loading: 1.0,
            power_factor: 0.9,
            pv_output: 1.0,
            capacity_limits: false,
            inverter_oversize: 1.1,
            min_reactance_ohm: 1e-3,
            v0: 1.0,
            alpha: 9.0,
            delta: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sce42 {
    pub network: RadialNetwork,
    pub controls: ControlSpec,
    /// Rows whose reactance was replaced by the floor value.
    pub floored: Vec<(String, String)>,
}

pub fn ohm_to_pu(z: f64) -> f64 {
    z / Z_BASE_OHM
}

pub fn pu_to_ohm(z: f64) -> f64 {
    z * Z_BASE_OHM
}

/// MVA or MW on the 1000 kVA base.
pub fn mega_to_pu(v: f64) -> f64 {
    v * 1000.0 / S_BASE_KVA
}

/// Builds the per-unit network. Bus 1 becomes the root; the PV buses are
/// the only actuators.
pub fn build_sce42(data: &Sce42Data, opts: &Sce42Options) -> Result<Sce42> {
    let mut labels = vec!["1".to_string()];
    let mut index = std::collections::HashMap::from([("1".to_string(), 0usize)]);
    for l in &data.lines {
        for b in [&l.from, &l.to] {
            if !index.contains_key(b) {
                index.insert(b.clone(), labels.len());
                labels.push(b.clone());
            }
        }
    }
    let mut floored = Vec::new();
    let mut lines = Vec::with_capacity(data.lines.len());
    for (k, l) in data.lines.iter().enumerate() {
        let mut x = l.x_ohm;
        if !(x > 0.0) {
            if !l.ambiguous {
                return Err(Error::parse(
                    format!("sce42 line row {}", k + 1),
                    format!("nonpositive reactance on {}-{}", l.from, l.to),
                ));
            }
            x = opts.min_reactance_ohm;
            floored.push((l.from.clone(), l.to.clone()));
        }
        lines.push(Line::new(
            index[&l.from],
            index[&l.to],
            ohm_to_pu(l.r_ohm),
            ohm_to_pu(x),
        ));
    }
    let n = labels.len() - 1;
    let q_share = (1.0 - opts.power_factor * opts.power_factor).max(0.0).sqrt();
    let mut buses = vec![BusData::passive(); n];
    let mut laws = Vec::new();
    let mut pv_nodes = Vec::new();
    for (k, b) in data.buses.iter().enumerate() {
        let node = *index.get(&b.bus).ok_or_else(|| {
            Error::parse(
                format!("sce42 bus row {}", k + 1),
                format!("unknown bus {}", b.bus),
            )
        })?;
        if node == 0 {
            return Err(Error::parse(
                format!("sce42 bus row {}", k + 1),
                "data on the substation bus",
            ));
        }
        let bus = &mut buses[node - 1];
        if let Some(s) = b.peak_mva {
            let s = mega_to_pu(s) * opts.loading;
            bus.p_c = s * opts.power_factor;
            bus.q_c = s * q_share;
        }
        if let Some(p) = b.pv_mw {
            let nameplate = mega_to_pu(p);
            bus.p_g = nameplate * opts.pv_output;
            bus.is_actuator = true;
            if opts.capacity_limits {
                let rating = nameplate * opts.inverter_oversize;
                let cap = (rating * rating - bus.p_g * bus.p_g).max(0.0).sqrt();
                bus.q_min = -cap;
                bus.q_max = cap;
            }
            pv_nodes.push(node);
        }
    }
    pv_nodes.sort_unstable();
    for &node in &pv_nodes {
        let bus = &buses[node - 1];
        laws.push(
            DroopParams::new(opts.alpha, opts.delta)
                .with_box(bus.q_min, bus.q_max)
                .into(),
        );
    }
    let network = RadialNetwork::with_labels(opts.v0, buses, lines, labels)?;
    Ok(Sce42 {
        network,
        controls: ControlSpec::new(laws)?,
        floored,
    })
}

/// Bundled data, or the two CSV files in `dir` if given.
pub fn load_sce42(dir: Option<&Path>, opts: &Sce42Options) -> Result<Sce42> {
    let data = match dir {
        Some(d) => Sce42Data::from_dir(d)?,
        None => Sce42Data::bundled()?,
    };
    build_sce42(&data, opts)
}

/// The per-unit line table converted back to ohms.
pub fn lines_in_ohms(net: &RadialNetwork) -> Vec<LineOhm> {
    net.lines()
        .iter()
        .map(|l| LineOhm {
            from: net.label(l.from).to_string(),
            to: net.label(l.to).to_string(),
            r_ohm: pu_to_ohm(l.r),
            x_ohm: pu_to_ohm(l.x),
            ambiguous: false,
        })
        .collect()
}

/// Writes the feeder's lines in ohms as CSV.
pub fn write_lines_csv<W: std::io::Write>(w: W, net: &RadialNetwork) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for l in lines_in_ohms(net) {
        out.serialize((&l.from, &l.to, l.r_ohm, l.x_ohm))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
