//! Quantum Fisher information for the linear phase shifter `exp(i phi n_b)`,
//! with and without photon loss, and the precision benchmarks it is compared
//! against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::optim::scan_then_golden;
use crate::oracle::{CqEvaluator, KrausFamily, KrausKind};
use crate::states::{check_loss, ProbeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Ideal,
    Lossy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiResult {
    pub fq: f64,
    /// `1/sqrt(fq)`; infinite when `fq = 0`.
    pub qcrb: f64,
    pub regime: Regime,
    /// Set when the optimum came from numeric minimization instead of the
    /// closed form.
    pub numeric_fallback: bool,
}

impl QfiResult {
    pub(crate) fn new(fq: f64, regime: Regime) -> Self {
        let fq = fq.max(0.0);
        QfiResult {
            fq,
            qcrb: if fq > 0.0 { 1.0 / fq.sqrt() } else { f64::INFINITY },
            regime,
            numeric_fallback: false,
        }
    }
}

/// `F_Q = 4 <Delta^2 n_b>`.
pub fn qfi_ideal_linear(ms: &MomentSet) -> QfiResult {
    QfiResult::new(4.0 * ms.var_n, Regime::Ideal)
}

/// `F_Q = 4(1-l)<n><Delta^2 n> / (l <Delta^2 n> + (1-l)<n>)`.
pub fn qfi_lossy_linear(ms: &MomentSet, l: f64) -> Result<QfiResult> {
    check_loss(l)?;
    let regime = if l == 0.0 { Regime::Ideal } else { Regime::Lossy };
    let (n, var) = (ms.m1, ms.var_n);
    let denom = l * var + (1.0 - l) * n;
    if denom == 0.0 {
        if l == 0.0 {
            return Ok(qfi_ideal_linear(ms));
        }
        return Err(Error::DegenerateState);
    }
    Ok(QfiResult::new(4.0 * (1.0 - l) * n * var / denom, regime))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkLimits {
    pub sql: f64,
    pub hl: f64,
    pub sub_hl: f64,
    pub shl: f64,
}

pub fn benchmark_limits(nbar_total: f64) -> Result<BenchmarkLimits> {
    if !(nbar_total.is_finite() && nbar_total > 0.0) {
        return Err(Error::ParamOutOfRange {
            name: "nbar_total",
            value: nbar_total,
            allowed: "(0, inf)",
        });
    }
    let n = nbar_total;
    Ok(BenchmarkLimits {
        sql: 1.0 / n.sqrt(),
        hl: 1.0 / n,
        sub_hl: n.powf(-1.5),
        shl: 1.0 / (n * n),
    })
}

/// 41 evenly spaced points on `[-1, 0]`.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..=40).map(|i| -1.0 + i as f64 / 40.0).collect()
}

/// Minimum over `gamma` of the operator-level `C_Q` for the linear Kraus
/// family on a prepared state: grid scan (widened if the minimum sits on
/// an edge) plus golden-section refinement. Returns `(gamma, C_Q)`.
pub fn min_cq_over_gamma(eval: &CqEvaluator, l: f64, gamma_grid: &[f64]) -> Result<(f64, f64)> {
    check_loss(l)?;
    if gamma_grid.len() < 3 {
        return Err(Error::SpecInvalid("gamma grid needs at least 3 points".into()));
    }
    let mut grid = gamma_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let cq = |gamma: f64| eval.cq(&KrausFamily { kind: KrausKind::Linear { gamma }, loss: l });
    Ok(scan_then_golden(cq, &grid, 1e-10))
}

/// `min_gamma C_Q` computed in the Fock oracle, for validating
/// [`qfi_lossy_linear`].
pub fn qfi_lossy_numeric_check(p: &ProbeParams, gamma_grid: &[f64]) -> Result<f64> {
    let eval = CqEvaluator::new(p)?;
    Ok(min_cq_over_gamma(&eval, p.loss, gamma_grid)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::moment_set;

    #[test]
    fn ideal_examples() {
        assert_eq!(qfi_ideal_linear(&MomentSet::vacuum()).fq, 0.0);
        assert!(qfi_ideal_linear(&MomentSet::vacuum()).qcrb.is_infinite());
        let ms = moment_set(2.0, 0.0, 0).unwrap();
        let q = qfi_ideal_linear(&ms);
        assert!((q.fq - 8.0).abs() < 1e-10);
        assert!((q.qcrb * q.fq.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossy_examples() {
        let ms = MomentSet::from_moments_unchecked(1.0, 3.0, 0.0, 0.0);
        let q = qfi_lossy_linear(&ms, 0.5).unwrap();
        assert!((q.fq - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(q.regime, Regime::Lossy);

        let ms = moment_set(2.0, 0.5, 1).unwrap();
        let ideal = qfi_ideal_linear(&ms).fq;
        assert!((qfi_lossy_linear(&ms, 0.0).unwrap().fq - ideal).abs() < 1e-12 * ideal);
        let lossy = qfi_lossy_linear(&ms, 0.1).unwrap().fq;
        assert!(lossy > 0.0 && lossy < ideal);

        assert_eq!(qfi_lossy_linear(&MomentSet::vacuum(), 0.0).unwrap().fq, 0.0);
        assert_eq!(qfi_lossy_linear(&MomentSet::vacuum(), 0.2), Err(Error::DegenerateState));
        assert!(qfi_lossy_linear(&ms, 1.0).is_err());
    }

    #[test]
    fn limit_examples() {
        let b = benchmark_limits(8.0).unwrap();
        assert!((b.sql - 0.353553).abs() < 1e-6);
        assert_eq!(b.hl, 0.125);
        assert!((b.sub_hl - 0.0441942).abs() < 1e-7);
        assert_eq!(b.shl, 0.015625);
        let b = benchmark_limits(1.0).unwrap();
        assert_eq!((b.sql, b.hl, b.sub_hl, b.shl), (1.0, 1.0, 1.0, 1.0));
        let b = benchmark_limits(4.0).unwrap();
        assert_eq!((b.sql, b.hl), (0.5, 0.25));
        assert!(benchmark_limits(0.0).is_err());
    }

    #[test]
    fn gamma_scan_matches_closed_form() {
        let p = ProbeParams::new(2.0, 0.5, 0).with_loss(0.1);
        let numeric = qfi_lossy_numeric_check(&p, &default_gamma_grid()).unwrap();
        let closed = qfi_lossy_linear(&moment_set(2.0, 0.5, 0).unwrap(), 0.1).unwrap().fq;
        assert!((numeric - closed).abs() < 1e-6 * closed, "{numeric} vs {closed}");
        let (_, exact) = CqEvaluator::new(&p).unwrap().min_linear(0.1).unwrap();
        assert!((exact - closed).abs() < 1e-8 * closed);
    }
}
