use rayon::prelude::*;

use super::{EnergyMode, FigurePreset, Param, PhaseMode, Quantity, SolveFor, SweepSpec};
use crate::error::{Error, Result};
use crate::moments::moment_set;
use crate::oracle::{parity_signal_oracle, CqEvaluator};
use crate::parity::{classical_fisher, fisher_from_signal, optimal_phase, parity_expectation};
use crate::qfi_kerr::{kerr_optimum, qfi_ideal_kerr};
use crate::qfi_linear::{benchmark_limits, qfi_lossy_linear};
use crate::states::{pasvs_mean_photons, solve_r_for_energy, ProbeParams};

const BASE_COLUMNS: [&str; 11] = [
    "label", "loss", "alpha", "r", "m", "phi", "nbar_total", "sql", "hl", "sub_hl", "shl",
];

/// Sweep output: `#` metadata lines, a header, data rows and `#` trailer
/// lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub metadata: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub trailer: Vec<String>,
    /// Largest `|primary - oracle|` over rows where both are finite.
    pub oracle_max_abs_deviation: Option<f64>,
    pub oracle_max_rel_deviation: Option<f64>,
}

impl CsvTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.metadata {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        for line in &self.trailer {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of column `name` parsed as floats; blank cells become NaN.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[c].parse().unwrap_or(f64::NAN))
                .collect(),
        )
    }
}

pub(crate) fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

fn quantity_columns(spec: &SweepSpec) -> Vec<&'static str> {
    match spec.quantity {
        Quantity::Parity => vec!["parity"],
        Quantity::Sensitivity if spec.with_qcrb => vec!["sensitivity", "qcrb_linear"],
        Quantity::Sensitivity => vec!["sensitivity"],
        Quantity::Cfi => vec!["cfi"],
        Quantity::QfiLinear => vec!["qfi_linear", "qcrb_linear"],
        Quantity::QcrbLinear => vec!["qcrb_linear", "qfi_linear"],
        Quantity::QfiKerr => vec!["qfi_kerr", "qcrb_kerr", "mu1", "mu2", "numeric_fallback"],
        Quantity::QcrbKerr => vec!["qcrb_kerr", "qfi_kerr", "mu1", "mu2", "numeric_fallback"],
        Quantity::Limits => vec![],
    }
}

fn header(spec: &SweepSpec) -> Vec<String> {
    let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(quantity_columns(spec).iter().map(|s| s.to_string()));
    if spec.oracle_check {
        h.push("oracle".into());
    }
    h.push("error".into());
    h
}

/// One evaluation point.
#[derive(Debug, Clone, Copy)]
struct Job {
    loss: f64,
    x: f64,
    m: u32,
}

fn jobs(spec: &SweepSpec) -> Vec<Job> {
    let xs = spec.sweep.axis.values();
    if spec.quantity == Quantity::Limits {
        return xs.into_iter().map(|x| Job { loss: f64::NAN, x, m: 0 }).collect();
    }
    if spec.sweep.param == Param::Loss {
        return xs
            .iter()
            .flat_map(|&x| spec.m_list.iter().map(move |&m| Job { loss: x, x, m }))
            .collect();
    }
    let mut out = Vec::new();
    for &loss in &spec.loss {
        for &x in &xs {
            for &m in &spec.m_list {
                out.push(Job { loss, x, m });
            }
        }
    }
    out
}

struct Resolved {
    p: ProbeParams,
    nbar_total: Option<f64>,
}

/// Applies the swept value and the energy constraint to the fixed
/// parameters. On failure the partially resolved point is returned with the
/// error so the row can still show what was requested.
fn resolve(spec: &SweepSpec, job: Job) -> (ProbeParams, Option<f64>, Result<Resolved>) {
    let mut p = ProbeParams {
        alpha: spec.fixed.alpha,
        r: spec.fixed.r,
        m: job.m,
        loss: job.loss,
        phi: spec.fixed.phi,
    };
    let mut nbar = spec.fixed.nbar_total;
    match spec.sweep.param {
        Param::Alpha => p.alpha = job.x,
        Param::R => p.r = job.x,
        Param::Phi => p.phi = job.x,
        Param::Loss => {}
        Param::NbarTotal => nbar = Some(job.x),
    }
    let solved = (|| -> Result<Resolved> {
        let mut p = p;
        if spec.energy_mode == EnergyMode::FixedTotal {
            let total = nbar.ok_or_else(|| Error::SpecInvalid("nbar_total missing".into()))?;
            match spec.solve_for {
                SolveFor::R => p.r = solve_r_for_energy(p.m, total - p.alpha * p.alpha)?,
                SolveFor::Alpha => {
                    let nb = pasvs_mean_photons(p.r, p.m)?;
                    if total < nb {
                        return Err(Error::InfeasibleTarget { target: total, floor: nb });
                    }
                    p.alpha = (total - nb).sqrt();
                }
            }
        }
        p.validate()?;
        let total = p.alpha * p.alpha + pasvs_mean_photons(p.r, p.m)?;
        Ok(Resolved { p, nbar_total: Some(total) })
    })();
    (p, nbar, solved)
}

/// Primary values for the quantity columns plus the value the oracle is
/// compared against, and the phase actually used.
struct Evaluated {
    values: Vec<f64>,
    phi: f64,
}

fn evaluate(spec: &SweepSpec, p: &ProbeParams) -> Result<Evaluated> {
    let l = p.loss;
    let mut phi = p.phi;
    let values = match spec.quantity {
        Quantity::Parity => vec![parity_expectation(p)?.value],
        Quantity::Sensitivity | Quantity::Cfi => {
            let fisher = if spec.phase == PhaseMode::Optimize {
                let (phi_star, _) = optimal_phase(p, spec.phi_window)?;
                phi = phi_star;
                classical_fisher(&p.with_phi(phi))?
            } else {
                classical_fisher(p)?
            };
            let mut v = vec![if spec.quantity == Quantity::Cfi {
                fisher
            } else {
                1.0 / fisher.sqrt()
            }];
            if spec.with_qcrb {
                v.push(qfi_lossy_linear(&moment_set(p.alpha, p.r, p.m)?, l)?.qcrb);
            }
            v
        }
        Quantity::QfiLinear | Quantity::QcrbLinear => {
            let q = qfi_lossy_linear(&moment_set(p.alpha, p.r, p.m)?, l)?;
            if spec.quantity == Quantity::QfiLinear {
                vec![q.fq, q.qcrb]
            } else {
                vec![q.qcrb, q.fq]
            }
        }
        Quantity::QfiKerr | Quantity::QcrbKerr => {
            let ms = moment_set(p.alpha, p.r, p.m)?;
            let (fq, mu1, mu2, fallback) = if l == 0.0 {
                (qfi_ideal_kerr(&ms).fq, f64::NAN, f64::NAN, false)
            } else {
                let (b, fb) = kerr_optimum(&ms, l)?;
                (b.cq.max(0.0), b.mu1, b.mu2, fb)
            };
            let qcrb = if fq > 0.0 { 1.0 / fq.sqrt() } else { f64::INFINITY };
            let fb = if fallback { 1.0 } else { 0.0 };
            if spec.quantity == Quantity::QfiKerr {
                vec![fq, qcrb, mu1, mu2, fb]
            } else {
                vec![qcrb, fq, mu1, mu2, fb]
            }
        }
        Quantity::Limits => vec![],
    };
    Ok(Evaluated { values, phi })
}

/// Independent Fock-space value of the primary column.
fn oracle_value(spec: &SweepSpec, p: &ProbeParams) -> Result<f64> {
    let l = p.loss;
    match spec.quantity {
        Quantity::Parity => Ok(parity_signal_oracle(p)?.value),
        Quantity::Sensitivity | Quantity::Cfi => {
            let fisher = fisher_from_signal(&parity_signal_oracle(p)?)?;
            Ok(if spec.quantity == Quantity::Cfi {
                fisher
            } else {
                1.0 / fisher.sqrt()
            })
        }
        Quantity::QfiLinear | Quantity::QcrbLinear => {
            let ev = CqEvaluator::new(p)?;
            let fq = if l == 0.0 { 4.0 * ev.moments().var_n } else { ev.min_linear(l)?.1 };
            Ok(if spec.quantity == Quantity::QfiLinear { fq } else { 1.0 / fq.sqrt() })
        }
        Quantity::QfiKerr | Quantity::QcrbKerr => {
            let ev = CqEvaluator::new(p)?;
            let fq = if l == 0.0 { 4.0 * ev.moments().var_n2 } else { ev.min_kerr(l)?.2 };
            Ok(if spec.quantity == Quantity::QfiKerr { fq } else { 1.0 / fq.sqrt() })
        }
        Quantity::Limits => Ok(f64::NAN),
    }
}

struct Row {
    cells: Vec<String>,
    deviation: Option<(f64, f64)>,
    solved: Option<(u32, f64, f64, f64)>,
}

fn run_row(spec: &SweepSpec, job: Job) -> Row {
    let ncols = quantity_columns(spec).len();
    let blank = |x: f64| if x.is_nan() { String::new() } else { fmt_f(x) };

    if spec.quantity == Quantity::Limits {
        let mut cells = vec![spec.label.clone(), String::new(), String::new(), String::new()];
        cells.extend([String::new(), String::new(), fmt_f(job.x)]);
        match benchmark_limits(job.x) {
            Ok(b) => cells.extend([b.sql, b.hl, b.sub_hl, b.shl].map(fmt_f)),
            Err(_) => cells.extend(std::iter::repeat("nan".to_string()).take(4)),
        }
        if spec.oracle_check {
            cells.push(String::new());
        }
        cells.push(String::new());
        return Row { cells, deviation: None, solved: None };
    }

    let (requested, nbar_req, resolved) = resolve(spec, job);
    let mut error = String::new();
    let mut deviation = None;
    let mut solved = None;
    let (p, nbar, values, oracle) = match resolved {
        Err(e) => {
            error = e.code().to_string();
            let mut p = requested;
            if spec.energy_mode == EnergyMode::FixedTotal {
                match spec.solve_for {
                    SolveFor::R => p.r = f64::NAN,
                    SolveFor::Alpha => p.alpha = f64::NAN,
                }
            }
            let oracle = spec.oracle_check.then_some(f64::NAN);
            (p, nbar_req, vec![f64::NAN; ncols], oracle)
        }
        Ok(Resolved { p, nbar_total }) => {
            if spec.energy_mode == EnergyMode::FixedTotal {
                solved = Some((p.m, nbar_total.unwrap_or(f64::NAN), p.alpha, p.r));
            }
            match evaluate(spec, &p) {
                Err(e) => {
                    error = e.code().to_string();
                    let oracle = spec.oracle_check.then_some(f64::NAN);
                    (p, nbar_total, vec![f64::NAN; ncols], oracle)
                }
                Ok(ev) => {
                    let p = p.with_phi(ev.phi);
                    let oracle = if spec.oracle_check {
                        match oracle_value(spec, &p) {
                            Ok(o) => {
                                let a = ev.values[0];
                                let abs = (a - o).abs();
                                if abs.is_finite() {
                                    deviation = Some((abs, abs / o.abs().max(f64::MIN_POSITIVE)));
                                } else if a != o {
                                    deviation = Some((f64::INFINITY, f64::INFINITY));
                                }
                                Some(o)
                            }
                            Err(e) => {
                                error = format!("oracle:{}", e.code());
                                Some(f64::NAN)
                            }
                        }
                    } else {
                        None
                    };
                    (p, nbar_total, ev.values, oracle)
                }
            }
        }
    };

    let mut cells = vec![
        spec.label.clone(),
        fmt_f(p.loss),
        fmt_f(p.alpha),
        fmt_f(p.r),
        p.m.to_string(),
        fmt_f(p.phi),
        nbar.map_or("nan".into(), fmt_f),
    ];
    match nbar.map(benchmark_limits) {
        Some(Ok(b)) => cells.extend([b.sql, b.hl, b.sub_hl, b.shl].map(fmt_f)),
        _ => cells.extend(std::iter::repeat("nan".to_string()).take(4)),
    }
    let kerr_mu = matches!(spec.quantity, Quantity::QfiKerr | Quantity::QcrbKerr);
    for (i, v) in values.iter().enumerate() {
        // mu columns are blank where C_Q does not depend on them.
        cells.push(if kerr_mu && (i == 2 || i == 3) { blank(*v) } else { fmt_f(*v) });
    }
    if let Some(o) = oracle {
        cells.push(fmt_f(o));
    }
    cells.push(error);
    Row { cells, deviation, solved }
}

fn panel_metadata(spec: &SweepSpec, rows: &[Row]) -> Vec<String> {
    let label = &spec.label;
    let mut meta = vec![format!("spec[{label}]={}", spec.to_json())];
    if spec.quantity == Quantity::Limits {
        return meta;
    }
    if let Some(n) = spec.fixed.nbar_total {
        if let Ok(b) = benchmark_limits(n) {
            meta.push(format!("limits[{label}].nbar_total={}", fmt_f(n)));
            for (k, v) in [("sql", b.sql), ("hl", b.hl), ("sub_hl", b.sub_hl), ("shl", b.shl)] {
                meta.push(format!("limits[{label}].{k}={}", fmt_f(v)));
            }
        }
    }
    let mut seen: Vec<String> = Vec::new();
    for (m, n, alpha, r) in rows.iter().filter_map(|r| r.solved) {
        let line = match spec.solve_for {
            SolveFor::R => format!(
                "solved_r[{label},m={m},nbar_total={},alpha={}]={}",
                fmt_f(n),
                fmt_f(alpha),
                fmt_f(r)
            ),
            SolveFor::Alpha => format!(
                "solved_alpha[{label},m={m},nbar_total={},r={}]={}",
                fmt_f(n),
                fmt_f(r),
                fmt_f(alpha)
            ),
        };
        if !seen.contains(&line) {
            seen.push(line);
        }
    }
    meta.extend(seen);
    let lossy_bound = matches!(
        spec.quantity,
        Quantity::QfiLinear | Quantity::QfiKerr | Quantity::QcrbLinear | Quantity::QcrbKerr
    ) || spec.with_qcrb;
    let any_loss = spec.loss.iter().any(|&l| l > 0.0) || spec.sweep.param == Param::Loss;
    if lossy_bound && any_loss {
        meta.push(format!("lossy_bound[{label}]=QFI bound (Escher)"));
    }
    meta
}

fn run_panels(specs: &[SweepSpec], mut metadata: Vec<String>) -> Result<CsvTable> {
    let header = header(&specs[0]);
    let mut rows = Vec::new();
    let mut max_abs: Option<f64> = None;
    let mut max_rel: Option<f64> = None;
    for spec in specs {
        spec.validate()?;
        if header != self::header(spec) {
            return Err(Error::SpecInvalid(format!("panel {} has different columns", spec.label)));
        }
        let computed: Vec<Row> = jobs(spec).into_par_iter().map(|j| run_row(spec, j)).collect();
        metadata.extend(panel_metadata(spec, &computed));
        for row in computed {
            if let Some((a, r)) = row.deviation {
                max_abs = Some(max_abs.map_or(a, |m| m.max(a)));
                max_rel = Some(max_rel.map_or(r, |m| m.max(r)));
            }
            rows.push(row.cells);
        }
    }
    let mut trailer = Vec::new();
    if specs.iter().any(|s| s.oracle_check) {
        trailer.push(format!("oracle_max_abs_deviation={}", fmt_f(max_abs.unwrap_or(f64::NAN))));
        trailer.push(format!("oracle_max_rel_deviation={}", fmt_f(max_rel.unwrap_or(f64::NAN))));
    }
    Ok(CsvTable {
        metadata,
        header,
        rows,
        trailer,
        oracle_max_abs_deviation: max_abs,
        oracle_max_rel_deviation: max_rel,
    })
}

fn tool_lines() -> Vec<String> {
    vec!["tool=pasvs".into(), format!("tool_version={}", env!("CARGO_PKG_VERSION"))]
}

/// Runs one sweep on the current rayon pool. Rows are ordered by loss,
/// then the swept value, then `m`, independent of the thread count.
/// Numeric failures become per-row error codes; only an invalid spec fails
/// the whole run.
pub fn run_sweep(spec: &SweepSpec) -> Result<CsvTable> {
    run_panels(std::slice::from_ref(spec), tool_lines())
}

/// Runs every panel of a preset into one table, optionally with the oracle
/// column.
pub fn run_figure(preset: &FigurePreset, oracle_check: bool) -> Result<CsvTable> {
    let mut panels = preset.panels.clone();
    for p in &mut panels {
        p.oracle_check |= oracle_check;
    }
    let mut meta = tool_lines();
    meta.push(format!("figure={}", preset.figure));
    run_panels(&panels, meta)
}
