//! Quantum Fisher information for the Kerr phase shifter
//! `exp[i phi (b^dag b)^2]`.
//!
//! Under loss the bound `C_Q` depends on where the loss is placed relative
//! to the phase shifter, parameterised by `(mu1, mu2)` in the Kraus
//! generator `n^2 - 2 mu1 n j - mu2 j^2` (`n` surviving, `j` lost photons).
//! `C_Q` is quadratic in `(mu1, mu2)`; its minimum is the lossy QFI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::optim::grid_then_simplex;
use crate::oracle::{cq_numeric, KrausFamily, KrausKind};
use crate::qfi_linear::{QfiResult, Regime};
use crate::states::{check_loss, ProbeParams};

/// Box seeding the numeric search over `(mu1, mu2)`. It contains both
/// physical placements, loss before (`0`) and after (`-1`) the phase.
pub const MU_BOX: (f64, f64) = (-2.0, 1.0);
pub const MU_GRID: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrBound {
    pub cq: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Transmissivity `1 - l`.
    pub eta: f64,
}

/// `F_Q = 4 <Delta^2 n_b^2>`.
pub fn qfi_ideal_kerr(ms: &MomentSet) -> QfiResult {
    QfiResult::new(4.0 * ms.var_n2, Regime::Ideal)
}

/// Closed-form `C_Q` at the given purification parameters.
///
/// The coefficients `K1..K6` are expanded in powers of `l` (Horner form), so
/// `K2..K6` vanish exactly at `l = 0` and the lossless value is free of
/// cancellation between large `mu`-dependent terms.
pub fn kerr_cq(ms: &MomentSet, l: f64, mu1: f64, mu2: f64) -> Result<KerrBound> {
    check_loss(l)?;
    let eta = 1.0 - l;
    let w1 = 1.0 + 2.0 * mu1 - mu2;
    let w1sq = w1 * w1;
    let a = mu1 + 1.0;
    let k1 = 1.0 + l * (-2.0 * a + l * w1);
    let k2 = l
        * (-2.0 * (2.0 * mu1 * mu1 + 6.0 * mu1 - mu2 + 3.0)
            + l * (2.0 * (14.0 * mu1 * mu1 - 6.0 * mu1 * mu2 + 24.0 * mu1 - 7.0 * mu2 + 9.0)
                + l * (-6.0 * w1 * (4.0 * mu1 - mu2 + 3.0) + l * 6.0 * w1sq)));
    let k3 = l
        * (-4.0 * a * w1
            + l * (w1 * (26.0 * mu1 - 7.0 * mu2 + 19.0)
                + l * (-2.0 * w1 * (22.0 * mu1 - 9.0 * mu2 + 13.0) + l * 11.0 * w1sq)));
    let k4 = l * w1sq * (-1.0 + l * (7.0 + l * (-12.0 + l * 6.0)));
    let k5 = 2.0 * l * eta * w1 * k1;
    let k6 = l * l * eta * eta * w1sq;
    let (n1, n2, n3) = (ms.m1, ms.m2, ms.m3);
    let cq = 4.0
        * (k1 * k1 * ms.var_n2 - k2 * n3 + k3 * n2 - k4 * n1 - k5 * n2 * n1 - k6 * n1 * n1);
    Ok(KerrBound { cq, mu1, mu2, eta })
}

/// Stationary point of `C_Q` over `(mu1, mu2)` in closed form.
pub fn kerr_mu_opt(ms: &MomentSet, l: f64) -> Result<(f64, f64)> {
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::ParamOutOfRange {
            name: "loss",
            value: l,
            allowed: "(0, 1)",
        });
    }
    let e = 1.0 - l;
    let (v, n1, n2, n3) = (ms.var_n2, ms.m1, ms.m2, ms.m3);
    let q = 6.0 * e * e - 6.0 * e + 1.0;
    let g1 = 2.0
        * (-(1.0 - e) * e * (v + 2.0 * n2 * n1 - n1 * n1) - q * (n3 + n1)
            + (11.0 * e * e - 11.0 * e + 2.0) * n2);
    let g2 = (1.0 - e).powi(2) * v + 3.0 * (1.0 - e) * (2.0 * e - 1.0) * n3
        + (11.0 * e * e - 13.0 * e + 3.0) * n2
        - q * n1
        - (1.0 - e) * (2.0 * e - 1.0) * n2 * n1
        + e * (1.0 - e) * n1 * n1;
    let g3 = e * e * v - 3.0 * e * (2.0 * e - 1.0) * n3 + (11.0 * e * e - 9.0 * e + 1.0) * n2 - q * n1
        + e * (2.0 * e - 1.0) * n2 * n1
        + e * (1.0 - e) * n1 * n1;
    let g4 = -(1.0 - e).powi(3) * v - 6.0 * e * (1.0 - e).powi(2) * n3
        - e * (1.0 - e) * (11.0 * e - 4.0) * n2
        - e * q * n1
        + 2.0 * e * (1.0 - e).powi(2) * n2 * n1
        + e * e * (1.0 - e) * n1 * n1;
    let g5 = e
        * (-e * (1.0 - e) * (v - n1 * n1) - q * (n3 + n1)
            + (11.0 * e * e - 11.0 * e + 2.0) * n2
            + (2.0 * e * e - 2.0 * e + 1.0) * n2 * n1);
    let det = g1 * g4 - 2.0 * e * g2 * g2;
    let scale = (g1 * g4).abs() + 2.0 * e * g2 * g2;
    if !(det.abs() >= 1e-12 * scale) || scale == 0.0 {
        return Err(Error::SingularNormalEquations { det });
    }
    Ok(((g2 * g5 - g3 * g4) / det, (g1 * g5 - 2.0 * e * g2 * g3) / det))
}

/// Minimum of the closed-form `C_Q` found numerically: a 41 x 41 grid over
/// [`MU_BOX`] followed by an unconstrained simplex from the best grid point.
pub fn kerr_mu_numeric(ms: &MomentSet, l: f64) -> Result<KerrBound> {
    check_loss(l)?;
    let f = |mu: [f64; 2]| kerr_cq(ms, l, mu[0], mu[1]).map_or(f64::INFINITY, |b| b.cq);
    let (mu, _) = grid_then_simplex(f, MU_BOX.0, MU_BOX.1, MU_GRID);
    kerr_cq(ms, l, mu[0], mu[1])
}

/// Optimal bound and whether it needed the numeric fallback.
pub fn kerr_optimum(ms: &MomentSet, l: f64) -> Result<(KerrBound, bool)> {
    check_loss(l)?;
    if l == 0.0 {
        return Ok((kerr_cq(ms, 0.0, 0.0, 0.0)?, false));
    }
    match kerr_mu_opt(ms, l) {
        Ok((mu1, mu2)) => Ok((kerr_cq(ms, l, mu1, mu2)?, false)),
        Err(Error::SingularNormalEquations { .. }) => Ok((kerr_mu_numeric(ms, l)?, true)),
        Err(e) => Err(e),
    }
}

/// Lossy Kerr QFI, `min_mu C_Q`.
pub fn qfi_lossy_kerr(ms: &MomentSet, l: f64) -> Result<QfiResult> {
    check_loss(l)?;
    if l == 0.0 {
        return Ok(qfi_ideal_kerr(ms));
    }
    let (bound, fallback) = kerr_optimum(ms, l)?;
    let mut q = QfiResult::new(bound.cq, Regime::Lossy);
    q.numeric_fallback = fallback;
    Ok(q)
}

/// Operator-level `C_Q` for the Kerr Kraus family, from the Fock oracle.
pub fn kerr_cq_numeric(p: &ProbeParams, mu1: f64, mu2: f64) -> Result<f64> {
    cq_numeric(p, &KrausFamily::new(KrausKind::Kerr { mu1, mu2 }, p.loss)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::moment_set;

    #[test]
    fn ideal_examples() {
        assert_eq!(qfi_ideal_kerr(&MomentSet::vacuum()).fq, 0.0);
        let one = moment_set(0.0, 0.0, 1).unwrap();
        assert!((qfi_ideal_kerr(&one).fq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossless_bound_ignores_mu() {
        let ms = moment_set(2.0, 0.5, 2).unwrap();
        let want = 4.0 * ms.var_n2;
        for (a, b) in [(0.0, 0.0), (-1.0, -1.0), (0.7, -3.2), (5.0, 2.0)] {
            let got = kerr_cq(&ms, 0.0, a, b).unwrap().cq;
            assert!((got - want).abs() < 1e-10 * want, "{a} {b}: {got} vs {want}");
        }
    }

    #[test]
    fn closed_form_matches_operator_sum() {
        let p = ProbeParams::new(2.0, 0.5, 0).with_loss(0.1);
        let ms = moment_set(2.0, 0.5, 0).unwrap();
        for (a, b) in [(0.0, 0.0), (-1.0, -1.0)] {
            let closed = kerr_cq(&ms, 0.1, a, b).unwrap().cq;
            let numeric = kerr_cq_numeric(&p, a, b).unwrap();
            assert!((closed - numeric).abs() < 1e-6 * closed, "{closed} vs {numeric}");
        }
        let p = ProbeParams::new(0.0, 0.0, 1).with_loss(0.5);
        let ms = moment_set(0.0, 0.0, 1).unwrap();
        let closed = kerr_cq(&ms, 0.5, -1.0, -1.0).unwrap().cq;
        let numeric = kerr_cq_numeric(&p, -1.0, -1.0).unwrap();
        assert!((closed - numeric).abs() < 1e-6 * closed.abs().max(1e-12));
    }

    #[test]
    fn optimum_beats_numeric_search() {
        for (alpha, r, m, l) in [(2.0, 0.5, 0, 0.1), (1.0, 0.5, 2, 0.3)] {
            let ms = moment_set(alpha, r, m).unwrap();
            let (mu1, mu2) = kerr_mu_opt(&ms, l).unwrap();
            let closed = kerr_cq(&ms, l, mu1, mu2).unwrap().cq;
            let numeric = kerr_mu_numeric(&ms, l).unwrap().cq;
            assert!((closed - numeric).abs() < 1e-6 * closed, "{closed} vs {numeric}");
        }
    }

    #[test]
    fn regression_minimum_agrees_with_closed_form() {
        let p = ProbeParams::new(1.0, 0.5, 2).with_loss(0.3);
        let ms = moment_set(1.0, 0.5, 2).unwrap();
        let (b, fallback) = kerr_optimum(&ms, 0.3).unwrap();
        assert!(!fallback);
        let (mu1, mu2, cq) = crate::oracle::CqEvaluator::new(&p).unwrap().min_kerr(0.3).unwrap();
        assert!((cq - b.cq).abs() < 1e-8 * b.cq, "{cq} vs {}", b.cq);
        assert!((mu1 - b.mu1).abs() < 1e-6 && (mu2 - b.mu2).abs() < 1e-6);
    }

    #[test]
    fn small_loss_is_continuous() {
        let ms = moment_set(2.0, 0.5, 1).unwrap();
        let ideal = qfi_ideal_kerr(&ms).fq;
        let lossy = qfi_lossy_kerr(&ms, 1e-6).unwrap().fq;
        assert!((lossy - ideal).abs() < 1e-4 * ideal);
        assert_eq!(qfi_lossy_kerr(&ms, 0.0).unwrap(), qfi_ideal_kerr(&ms));
        assert!(kerr_mu_opt(&ms, 0.0).is_err());
    }
}
