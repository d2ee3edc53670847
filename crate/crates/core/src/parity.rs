//! Parity detection at the `b` output port of the lossy interferometer.
//!
//! The signal `<Pi_b>` is evaluated from the normal-ordered form of the lossy
//! parity operator. The phase enters through the loss coefficients `X1..X3`;
//! carrying `phi` as an order-2 jet variable yields the signal and its first
//! two phase derivatives in a single pass, so the error-propagation formula
//! never divides by a finite-difference estimate.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jet::{JetShape, MultiJet};
use crate::states::{check_loss, pasvs_norm, ProbeParams};

/// Below this value of `1 - <Pi>^2` the signal sits on a +-1 extremum and the
/// Fisher information is taken from the second-order series.
const STATIONARY_GAP: f64 = 1e-9;
const IMAG_TOLERANCE: f64 = 1e-9;

/// Coefficients of the normal-ordered lossy parity operator,
/// `:exp[X1 a^dag a + X2 b^dag b + X3 a^dag b + X3^* a b^dag]:`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCoefficients {
    pub x1: MultiJet,
    pub x2: MultiJet,
    pub x3: MultiJet,
}

/// Loss coefficients as functions of the phase jet `phi` (a jet whose
/// coefficients are real).
pub fn loss_coefficients(phi: &MultiJet, l: f64) -> Result<LossCoefficients> {
    check_loss(l)?;
    let eiphi = phi.scale(Complex64::i()).exp();
    let emiphi = eiphi.conj();
    let cos = (&eiphi + &emiphi).scale(0.5);
    let sin = (&eiphi - &emiphi).scale(Complex64::new(0.0, -0.5));
    let t = (1.0 - l).sqrt();
    let half = (l - 2.0) / 2.0;
    Ok(LossCoefficients {
        x1: cos.scale(t).add_scalar(half),
        x2: cos.scale(-t).add_scalar(half),
        x3: sin.scale(-t).add_scalar(Complex64::new(0.0, l / 2.0)),
    })
}

/// Scalar loss coefficients `(X1, X2, X3)` at a fixed phase.
pub fn loss_coefficients_at(phi: f64, l: f64) -> Result<[Complex64; 3]> {
    let shape = JetShape::new(&[])?;
    let lc = loss_coefficients(&MultiJet::constant(&shape, phi), l)?;
    Ok([
        lc.x1.constant_term(),
        lc.x2.constant_term(),
        lc.x3.constant_term(),
    ])
}

/// `<Pi_b>` and its first two phase derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParitySignal {
    pub value: f64,
    pub dvalue: f64,
    pub ddvalue: f64,
}

/// Intermediate jets of the parity expectation: `A_bar`, `A1` (functions of
/// phi only) and `A2`, `A3` (also carrying t, tau).
#[derive(Debug, Clone)]
pub struct ParityTerms {
    pub a_bar: MultiJet,
    pub a1: MultiJet,
    pub a2: MultiJet,
    pub a3: MultiJet,
}

fn var_or_zero(shape: &Arc<JetShape>, name: &str) -> Result<MultiJet> {
    let v = shape.index_of(name)?;
    if shape.caps()[v] == 0 {
        Ok(MultiJet::zero(shape))
    } else {
        MultiJet::variable(shape, name)
    }
}

/// Shape `(t: m, tau: m, phi: phi_order)` used by the parity evaluation.
pub fn parity_shape(m: u32, phi_order: usize) -> Result<Arc<JetShape>> {
    JetShape::new(&[("t", m as usize), ("tau", m as usize), ("phi", phi_order)])
}

pub fn parity_terms(p: &ProbeParams, shape: &Arc<JetShape>) -> Result<ParityTerms> {
    let t = var_or_zero(shape, "t")?;
    let tau = var_or_zero(shape, "tau")?;
    let phi = var_or_zero(shape, "phi")?.add_scalar(p.phi);
    let LossCoefficients { x1, x2, x3 } = loss_coefficients(&phi, p.loss)?;
    let th = p.r.tanh();
    let x3c = x3.conj();

    let one_x2 = x2.add_scalar(1.0);
    let a_bar = (&one_x2 * &one_x2).scale(-th * th).add_scalar(1.0);
    let a0 = a_bar.constant_term();
    if a0.norm() < 1e-14 {
        return Err(Error::DegenerateDenominator { what: "A_bar" });
    }
    let inv_a_bar = a_bar.recip()?;

    let x3_abs2 = &x3 * &x3c;
    let a1 = &x1 + (&one_x2 * &x3_abs2 * &inv_a_bar).scale(th * th)
        - ((&x3 * &x3 + &x3c * &x3c) * &inv_a_bar).scale(th / 2.0);
    let a2 = &one_x2 * &t * &tau - (&one_x2 * &one_x2 * (&t * &t + &tau * &tau)).scale(th / 2.0);
    let a3 = &x3c * &t + &x3 * &tau - (&one_x2 * (&x3 * &t + &x3c * &tau)).scale(th);
    Ok(ParityTerms { a_bar, a1, a2, a3 })
}

/// Evaluates the parity expectation with `phi` as a jet variable of order
/// `phi_order` and returns the phase-derivative series
/// `d^k <Pi_b> / dphi^k`, `k = 0..=phi_order`.
pub fn parity_phase_series(p: &ProbeParams, phi_order: usize) -> Result<Vec<f64>> {
    p.validate()?;
    let shape = parity_shape(p.m, phi_order)?;
    let ParityTerms { a_bar, a1, a2, a3 } = parity_terms(p, &shape)?;
    let alpha = p.alpha;
    let exponent = a1.scale(alpha * alpha) + (&a2 + a3.scale(alpha)) * a_bar.recip()?;
    let prefactor = 1.0 / (pasvs_norm(p.r, p.m)? * p.r.cosh());
    let full = exponent.exp() * a_bar.sqrt()?.recip()?;
    let m = p.m as usize;
    let mut out = Vec::with_capacity(phi_order + 1);
    for k in 0..=phi_order {
        let d = full.derivative(&[m, m, k])? * prefactor;
        if d.im.abs() > IMAG_TOLERANCE * d.re.abs().max(1.0) {
            return Err(Error::ImaginaryResidue {
                what: "<Pi_b>",
                residue: d.im,
            });
        }
        out.push(d.re);
    }
    Ok(out)
}

pub fn parity_expectation(p: &ProbeParams) -> Result<ParitySignal> {
    let s = parity_phase_series(p, 2)?;
    Ok(ParitySignal {
        value: s[0],
        dvalue: s[1],
        ddvalue: s[2],
    })
}

/// Fisher information of the even/odd outcome distribution,
/// `(d<Pi>/dphi)^2 / (1 - <Pi>^2)`. On a +-1 extremum of the signal the
/// ratio is replaced by its limit `|d^2<Pi>/dphi^2|`.
pub fn classical_fisher(p: &ProbeParams) -> Result<f64> {
    let s = parity_expectation(p)?;
    fisher_from_signal(&s)
}

pub(crate) fn fisher_from_signal(s: &ParitySignal) -> Result<f64> {
    if s.dvalue.abs() < 1e-12 && s.ddvalue.abs() < 1e-12 {
        return Err(Error::DegenerateSignal);
    }
    let gap = (1.0 - s.value) * (1.0 + s.value);
    if gap < STATIONARY_GAP {
        return Ok(s.ddvalue.abs());
    }
    Ok(s.dvalue * s.dvalue / gap)
}

/// Error-propagation phase sensitivity `1/sqrt(F_C)`. Returns infinity where
/// the signal has a zero slope away from +-1.
pub fn phase_sensitivity(p: &ProbeParams) -> Result<f64> {
    Ok(1.0 / classical_fisher(p)?.sqrt())
}

/// Phase in `window` minimising the sensitivity: a 1001-point scan followed
/// by golden-section refinement of the best bracket.
pub fn optimal_phase(p: &ProbeParams, window: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= FRAC_PI_2) {
        return Err(Error::InvalidWindow { lo, hi });
    }
    let eval = |phi: f64| -> Option<f64> {
        match phase_sensitivity(&p.with_phi(phi)) {
            Ok(v) if v.is_finite() => Some(v),
            _ => None,
        }
    };
    const SCAN: usize = 1001;
    let step = (hi - lo) / (SCAN - 1) as f64;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..SCAN {
        let phi = lo + step * i as f64;
        if let Some(v) = eval(phi) {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    let (i, v) = best.ok_or(Error::DegenerateSignal)?;
    let mut a = lo + step * i.saturating_sub(1) as f64;
    let mut b = (lo + step * (i + 1) as f64).min(hi);
    let f = |x: f64| eval(x).unwrap_or(f64::INFINITY);
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(lo + step * i as f64, v), (mid, f(mid)), (c, fc), (d, fd)];
    let (phi_star, dphi) = candidates
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    Ok((phi_star, dphi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: f64) -> bool {
        (a - Complex64::new(b, 0.0)).norm() < 1e-12
    }

    #[test]
    fn loss_coefficient_examples() {
        let [x1, x2, x3] = loss_coefficients_at(0.0, 0.0).unwrap();
        assert!(close(x1, 0.0) && close(x2, -2.0) && close(x3, 0.0));
        let [x1, x2, x3] = loss_coefficients_at(PI / 2.0, 0.0).unwrap();
        assert!(close(x1, -1.0) && close(x2, -1.0) && close(x3, -1.0));
        let [x1, x2, _] = loss_coefficients_at(0.15, 0.1).unwrap();
        assert!(close(x1 + x2, -1.9));
        assert!(loss_coefficients_at(0.1, 1.0).is_err());
    }

    #[test]
    fn loss_coefficient_sum_holds_for_jets() {
        let shape = JetShape::new(&[("phi", 2)]).unwrap();
        let phi = MultiJet::variable(&shape, "phi").unwrap().add_scalar(0.4);
        let lc = loss_coefficients(&phi, 0.25).unwrap();
        let sum = &lc.x1 + &lc.x2;
        assert!(close(sum.constant_term(), -1.75));
        assert!(sum.coeffs()[1..].iter().all(|c| c.norm() < 1e-15));
        // d X3 / dphi = -sqrt(1 - l) cos(phi)
        let d = lc.x3.derivative(&[1]).unwrap();
        assert!(close(d, -(0.75f64).sqrt() * 0.4f64.cos()));
    }

    #[test]
    fn parity_at_origin_is_state_parity() {
        let s = parity_expectation(&ProbeParams::new(2.0, 0.5, 1)).unwrap();
        assert!((s.value + 1.0).abs() < 1e-10);
        let vac = ProbeParams::new(0.0, 0.0, 0).with_loss(0.3).with_phi(0.7);
        assert!((parity_expectation(&vac).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intermediates_at_origin() {
        let p = ProbeParams::new(1.0, 0.5, 1);
        let shape = parity_shape(1, 0).unwrap();
        let terms = parity_terms(&p, &shape).unwrap();
        let sech2 = 1.0 / 0.5f64.cosh().powi(2);
        assert!(close(terms.a_bar.constant_term(), sech2));
        // X1 = 0, X3 = 0 at the origin, so A1 vanishes.
        assert!(close(terms.a1.constant_term(), 0.0));
        assert!(close(terms.a2.coeff(&[1, 1, 0]).unwrap(), -1.0));
    }

    #[test]
    fn vacuum_is_degenerate() {
        for l in [0.0, 0.4] {
            let p = ProbeParams::new(0.0, 0.0, 0).with_loss(l).with_phi(0.3);
            assert_eq!(classical_fisher(&p).unwrap_err(), Error::DegenerateSignal);
            assert_eq!(phase_sensitivity(&p).unwrap_err(), Error::DegenerateSignal);
        }
    }

    #[test]
    fn fisher_and_sensitivity_are_reciprocal() {
        let p = ProbeParams::new(2.0, 0.5, 0).with_phi(1e-4);
        let f = classical_fisher(&p).unwrap();
        let d = phase_sensitivity(&p).unwrap();
        assert!((f - 1.0 / (d * d)).abs() < 1e-12 * f);
    }

    #[test]
    fn stationary_limit_matches_small_offset() {
        let p = ProbeParams::new(2.0, 0.5, 2);
        let at_zero = classical_fisher(&p).unwrap();
        let near = classical_fisher(&p.with_phi(1e-4)).unwrap();
        assert!((at_zero - near).abs() < 1e-5 * at_zero, "{at_zero} {near}");
    }

    #[test]
    fn window_validation() {
        let p = ProbeParams::new(2.0, 0.5, 0);
        assert!(optimal_phase(&p, (0.5, 0.2)).is_err());
        assert!(optimal_phase(&p, (0.0, 2.0)).is_err());
    }

    #[test]
    fn lossy_optimum_moves_off_zero() {
        let p = ProbeParams::new(2.0, 0.5, 1).with_loss(0.1);
        let (phi, dphi) = optimal_phase(&p, (0.0, FRAC_PI_2)).unwrap();
        assert!(phi > 1e-3, "{phi}");
        assert!(dphi.is_finite());
        let heavy = ProbeParams::new(2.0, 0.5, 0).with_loss(0.9);
        let (_, d) = optimal_phase(&heavy, (0.0, FRAC_PI_2)).unwrap();
        assert!(d.is_finite());
    }
}
