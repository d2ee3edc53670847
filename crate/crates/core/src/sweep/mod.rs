//! Parameter sweeps: the JSON configuration, figure presets and the CSV
//! runner.

mod run;

pub use run::{run_figure, run_sweep, CsvTable};

use std::f64::consts::FRAC_PI_2;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::states::{check_loss, check_r_m, solve_r_for_energy, M_MAX};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Parity,
    Sensitivity,
    Cfi,
    QfiLinear,
    QfiKerr,
    QcrbLinear,
    QcrbKerr,
    Limits,
}

impl Quantity {
    const ALL: [(&'static str, Quantity); 8] = [
        ("parity", Quantity::Parity),
        ("sensitivity", Quantity::Sensitivity),
        ("cfi", Quantity::Cfi),
        ("qfi_linear", Quantity::QfiLinear),
        ("qfi_kerr", Quantity::QfiKerr),
        ("qcrb_linear", Quantity::QcrbLinear),
        ("qcrb_kerr", Quantity::QcrbKerr),
        ("limits", Quantity::Limits),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, q)| *q == self).map(|(n, _)| *n).unwrap_or("?")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Alpha,
    R,
    Phi,
    Loss,
    NbarTotal,
}

impl Param {
    const ALL: [(&'static str, Param); 5] = [
        ("alpha", Param::Alpha),
        ("r", Param::R),
        ("phi", Param::Phi),
        ("loss", Param::Loss),
        ("nbar_total", Param::NbarTotal),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, q)| *q == self).map(|(n, _)| *n).unwrap_or("?")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    /// `count` evenly spaced points from `start` to `stop` inclusive.
    Range { start: f64, stop: f64, count: usize },
    List(Vec<f64>),
}

impl Axis {
    /// Axis values in ascending order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = match self {
            Axis::Range { start, stop, count } => (0..*count)
                .map(|i| start + (stop - start) * i as f64 / (*count - 1) as f64)
                .collect(),
            Axis::List(v) => v.clone(),
        };
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: Param,
    pub axis: Axis,
}

/// Parameters held constant along the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixed {
    pub alpha: f64,
    pub r: f64,
    pub phi: f64,
    pub nbar_total: Option<f64>,
}

impl Default for Fixed {
    fn default() -> Self {
        Fixed {
            alpha: 2.0,
            r: 0.5,
            phi: 0.0,
            nbar_total: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyMode {
    /// `alpha` and `r` are taken as given.
    FixedR,
    /// `alpha^2 + nbar_b = nbar_total`, with `solve_for` re-solved per row.
    FixedTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveFor {
    R,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    Fixed,
    /// Minimise the sensitivity over `phi_window` at every row.
    Optimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub label: String,
    pub quantity: Quantity,
    pub fixed: Fixed,
    pub sweep: Sweep,
    pub m_list: Vec<u32>,
    pub energy_mode: EnergyMode,
    pub solve_for: SolveFor,
    /// Loss rates; each gets a full pass over the axis.
    pub loss: Vec<f64>,
    pub phase: PhaseMode,
    pub phi_window: (f64, f64),
    /// Adds the linear QCRB column to sensitivity rows.
    pub with_qcrb: bool,
    pub oracle_check: bool,
}

impl SweepSpec {
    /// A spec with every optional field at its default.
    pub fn new(quantity: Quantity, sweep: Sweep) -> Self {
        SweepSpec {
            label: "sweep".into(),
            quantity,
            fixed: Fixed::default(),
            sweep,
            m_list: vec![0, 1, 2, 3],
            energy_mode: EnergyMode::FixedR,
            solve_for: SolveFor::R,
            loss: vec![0.0],
            phase: PhaseMode::Fixed,
            phi_window: (0.0, FRAC_PI_2),
            with_qcrb: false,
            oracle_check: false,
        }
    }

    /// The fully resolved spec as a configuration document.
    pub fn to_json(&self) -> Value {
        let axis = match &self.sweep.axis {
            Axis::Range { start, stop, count } => {
                json!({"param": self.sweep.param.name(), "start": start, "stop": stop, "count": count})
            }
            Axis::List(v) => json!({"param": self.sweep.param.name(), "values": v}),
        };
        let mut fixed = json!({"alpha": self.fixed.alpha, "r": self.fixed.r, "phi": self.fixed.phi});
        if let Some(n) = self.fixed.nbar_total {
            fixed["nbar_total"] = json!(n);
        }
        let mut doc = json!({
            "schema_version": SCHEMA_VERSION,
            "label": self.label,
            "quantity": self.quantity.name(),
            "fixed": fixed,
            "sweep": axis,
            "m_list": self.m_list,
            "energy_mode": match self.energy_mode {
                EnergyMode::FixedR => "fixed_r",
                EnergyMode::FixedTotal => "fixed_total",
            },
            "solve_for": match self.solve_for {
                SolveFor::R => "r",
                SolveFor::Alpha => "alpha",
            },
            "phase": match self.phase {
                PhaseMode::Fixed => "fixed",
                PhaseMode::Optimize => "optimize",
            },
            "phi_window": [self.phi_window.0, self.phi_window.1],
            "with_qcrb": self.with_qcrb,
            "oracle_check": self.oracle_check,
        });
        if self.sweep.param != Param::Loss {
            doc["loss"] = json!(self.loss);
        }
        doc
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::SpecInvalid(msg));
        if self.label.is_empty()
            || !self
                .label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
        {
            return bad(format!("label `{}` must be non-empty [A-Za-z0-9_.-]", self.label));
        }
        let values = self.sweep.axis.values();
        match &self.sweep.axis {
            Axis::Range { count, start, stop } => {
                if *count < 2 {
                    return bad("sweep count must be at least 2".into());
                }
                if !(start.is_finite() && stop.is_finite()) {
                    return bad("sweep bounds must be finite".into());
                }
            }
            Axis::List(v) if v.is_empty() => return bad("sweep values must not be empty".into()),
            Axis::List(_) => {}
        }
        for &x in &values {
            self.check_param(self.sweep.param, x)?;
        }
        self.check_param(Param::Alpha, self.fixed.alpha)?;
        self.check_param(Param::R, self.fixed.r)?;
        self.check_param(Param::Phi, self.fixed.phi)?;
        if let Some(n) = self.fixed.nbar_total {
            self.check_param(Param::NbarTotal, n)?;
        }
        if self.m_list.is_empty() {
            return bad("m_list must not be empty".into());
        }
        if let Some(m) = self.m_list.iter().find(|&&m| m > M_MAX) {
            return bad(format!("m = {m} exceeds {M_MAX}"));
        }
        if self.loss.is_empty() {
            return bad("loss list must not be empty".into());
        }
        for &l in &self.loss {
            self.check_param(Param::Loss, l)?;
        }

        if self.quantity == Quantity::Limits {
            if self.sweep.param != Param::NbarTotal {
                return bad("limits sweeps nbar_total".into());
            }
            return Ok(());
        }
        let swept = self.sweep.param;
        match self.energy_mode {
            EnergyMode::FixedR => {
                if swept == Param::NbarTotal || self.fixed.nbar_total.is_some() {
                    return bad("nbar_total requires energy_mode fixed_total".into());
                }
            }
            EnergyMode::FixedTotal => {
                if self.fixed.nbar_total.is_none() && swept != Param::NbarTotal {
                    return bad("fixed_total needs nbar_total, fixed or swept".into());
                }
                if self.fixed.nbar_total.is_some() && swept == Param::NbarTotal {
                    return bad("nbar_total is both fixed and swept".into());
                }
                let solved = match self.solve_for {
                    SolveFor::R => Param::R,
                    SolveFor::Alpha => Param::Alpha,
                };
                if swept == solved {
                    return bad(format!("{} is solved for and cannot be swept", solved.name()));
                }
                if let (Some(n), SolveFor::R, false) =
                    (self.fixed.nbar_total, self.solve_for, swept == Param::Alpha)
                {
                    for &m in &self.m_list {
                        let target = n - self.fixed.alpha * self.fixed.alpha;
                        if let Err(e) = solve_r_for_energy(m, target) {
                            return bad(format!("energy matching for m = {m}: {e}"));
                        }
                    }
                }
            }
        }
        let phase_quantity = matches!(self.quantity, Quantity::Sensitivity | Quantity::Cfi);
        if self.phase == PhaseMode::Optimize {
            if !phase_quantity {
                return bad("phase optimize applies to sensitivity and cfi only".into());
            }
            if swept == Param::Phi {
                return bad("phi cannot be swept and optimised".into());
            }
            let (lo, hi) = self.phi_window;
            if !(0.0 <= lo && lo < hi && hi <= FRAC_PI_2) {
                return bad(format!("phi_window ({lo}, {hi}) must satisfy 0 <= lo < hi <= pi/2"));
            }
        }
        if self.with_qcrb && self.quantity != Quantity::Sensitivity {
            return bad("with_qcrb applies to sensitivity only".into());
        }
        Ok(())
    }

    fn check_param(&self, param: Param, x: f64) -> Result<()> {
        let ok = x.is_finite()
            && match param {
                Param::Alpha => x >= 0.0,
                Param::R => check_r_m(x, 0).is_ok(),
                Param::Phi => true,
                Param::Loss => check_loss(x).is_ok(),
                Param::NbarTotal => x > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::SpecInvalid(format!("{} = {x} out of range", param.name())))
        }
    }
}

fn violation(path: &str, message: impl Into<String>) -> Error {
    Error::SchemaViolation {
        path: path.to_string(),
        message: message.into(),
    }
}

fn object<'a>(v: &'a Value, path: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>> {
    let map = v.as_object().ok_or_else(|| violation(path, "expected an object"))?;
    if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(violation(&format!("{path}.{k}"), "unknown key"));
    }
    Ok(map)
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| violation(path, "expected a number"))
}

fn string<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| violation(path, "expected a string"))
}

fn boolean(v: &Value, path: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| violation(path, "expected a boolean"))
}

fn numbers(v: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| violation(path, "expected an array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{path}[{i}]")))
        .collect()
}

fn choice<T: Copy>(v: &Value, path: &str, options: &[(&str, T)]) -> Result<T> {
    let s = string(v, path)?;
    options.iter().find(|(n, _)| *n == s).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        violation(path, format!("`{s}` is not one of {}", names.join(", ")))
    })
}

/// Parses and validates a configuration document. Schema errors carry a
/// JSON path (`$.key`); semantic errors are `SpecInvalid`.
pub fn parse_config(text: &str) -> Result<SweepSpec> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| violation("$", format!("invalid JSON: {e}")))?;
    let top = object(
        &doc,
        "$",
        &[
            "schema_version",
            "label",
            "quantity",
            "fixed",
            "sweep",
            "m_list",
            "energy_mode",
            "solve_for",
            "loss",
            "phase",
            "phi_window",
            "with_qcrb",
            "oracle_check",
        ],
    )?;
    let required = |k: &str| top.get(k).ok_or_else(|| violation(&format!("$.{k}"), "missing required key"));
    match required("schema_version")?.as_u64() {
        Some(SCHEMA_VERSION) => {}
        _ => return Err(violation("$.schema_version", format!("must be {SCHEMA_VERSION}"))),
    }
    let quantity = choice(required("quantity")?, "$.quantity", &Quantity::ALL)?;

    let sw = object(required("sweep")?, "$.sweep", &["param", "start", "stop", "count", "values"])?;
    let param = choice(
        sw.get("param").ok_or_else(|| violation("$.sweep.param", "missing required key"))?,
        "$.sweep.param",
        &Param::ALL,
    )?;
    let axis = match (sw.get("values"), sw.get("start"), sw.get("stop"), sw.get("count")) {
        (Some(v), None, None, None) => Axis::List(numbers(v, "$.sweep.values")?),
        (None, Some(a), Some(b), Some(c)) => Axis::Range {
            start: number(a, "$.sweep.start")?,
            stop: number(b, "$.sweep.stop")?,
            count: c
                .as_u64()
                .ok_or_else(|| violation("$.sweep.count", "expected a non-negative integer"))?
                as usize,
        },
        _ => {
            return Err(violation(
                "$.sweep",
                "give either `values` or all of `start`, `stop`, `count`",
            ))
        }
    };
    let mut spec = SweepSpec::new(quantity, Sweep { param, axis });

    if let Some(v) = top.get("label") {
        spec.label = string(v, "$.label")?.to_string();
    }
    if let Some(v) = top.get("fixed") {
        let f = object(v, "$.fixed", &["alpha", "r", "phi", "nbar_total"])?;
        if let Some(x) = f.get("alpha") {
            spec.fixed.alpha = number(x, "$.fixed.alpha")?;
        }
        if let Some(x) = f.get("r") {
            spec.fixed.r = number(x, "$.fixed.r")?;
        }
        if let Some(x) = f.get("phi") {
            spec.fixed.phi = number(x, "$.fixed.phi")?;
        }
        if let Some(x) = f.get("nbar_total") {
            spec.fixed.nbar_total = Some(number(x, "$.fixed.nbar_total")?);
        }
    }
    if let Some(v) = top.get("m_list") {
        let arr = v.as_array().ok_or_else(|| violation("$.m_list", "expected an array"))?;
        let mut ms = arr
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_u64()
                    .filter(|&m| m <= u32::MAX as u64)
                    .map(|m| m as u32)
                    .ok_or_else(|| violation(&format!("$.m_list[{i}]"), "expected a non-negative integer"))
            })
            .collect::<Result<Vec<u32>>>()?;
        ms.sort_unstable();
        ms.dedup();
        spec.m_list = ms;
    }
    if let Some(v) = top.get("energy_mode") {
        spec.energy_mode = choice(
            v,
            "$.energy_mode",
            &[("fixed_r", EnergyMode::FixedR), ("fixed_total", EnergyMode::FixedTotal)],
        )?;
    }
    if let Some(v) = top.get("solve_for") {
        spec.solve_for = choice(v, "$.solve_for", &[("r", SolveFor::R), ("alpha", SolveFor::Alpha)])?;
    }
    if let Some(v) = top.get("loss") {
        if param == Param::Loss {
            return Err(violation("$.loss", "loss is the sweep axis"));
        }
        spec.loss = match v {
            Value::Array(_) => numbers(v, "$.loss")?,
            _ => vec![number(v, "$.loss")?],
        };
        spec.loss.sort_by(f64::total_cmp);
        spec.loss.dedup();
    }
    if let Some(v) = top.get("phase") {
        spec.phase = choice(
            v,
            "$.phase",
            &[("fixed", PhaseMode::Fixed), ("optimize", PhaseMode::Optimize)],
        )?;
    }
    if let Some(v) = top.get("phi_window") {
        let w = numbers(v, "$.phi_window")?;
        if w.len() != 2 {
            return Err(violation("$.phi_window", "expected [lo, hi]"));
        }
        spec.phi_window = (w[0], w[1]);
    }
    if let Some(v) = top.get("with_qcrb") {
        spec.with_qcrb = boolean(v, "$.with_qcrb")?;
    }
    if let Some(v) = top.get("oracle_check") {
        spec.oracle_check = boolean(v, "$.oracle_check")?;
    }
    spec.validate()?;
    Ok(spec)
}

/// The panels behind one figure, run in order into a single table.
#[derive(Debug, Clone, PartialEq)]
pub struct FigurePreset {
    pub figure: u32,
    pub panels: Vec<SweepSpec>,
}

const PRESETS: &str = include_str!("presets.json");

/// Sweep specification for figure `n`. Figures 1 and 6 are schematics with
/// no data and have no preset.
pub fn figure_preset(n: u32) -> Result<FigurePreset> {
    let doc: Value = serde_json::from_str(PRESETS).expect("bundled presets are valid JSON");
    let panels = doc
        .get(n.to_string())
        .and_then(Value::as_array)
        .ok_or(Error::UnknownFigure(n))?;
    let panels = panels
        .iter()
        .map(|p| parse_config(&p.to_string()))
        .collect::<Result<Vec<_>>>()?;
    Ok(FigurePreset { figure: n, panels })
}

/// Figures that have a preset.
pub fn preset_figures() -> Vec<u32> {
    (2..=12).filter(|n| figure_preset(*n).is_ok()).collect()
}
