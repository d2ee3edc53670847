//! Photon statistics of the interferometer inputs: a real coherent state on
//! mode `a` and an m-photon-added squeezed vacuum (PASVS) on mode `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{JetShape, MultiJet};

pub const R_MAX: f64 = 3.0;
pub const M_MAX: u32 = 10;

/// Tail probability tolerated when truncating a Fock expansion.
pub const FOCK_TAIL_TOLERANCE: f64 = 1e-10;

/// Physical configuration consumed by every formula.
///
/// The coherent amplitude is real (coherent phase fixed at zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub alpha: f64,
    pub r: f64,
    pub m: u32,
    pub loss: f64,
    pub phi: f64,
}

impl ProbeParams {
    /// Lossless configuration at zero phase.
    pub fn new(alpha: f64, r: f64, m: u32) -> Self {
        ProbeParams {
            alpha,
            r,
            m,
            loss: 0.0,
            phi: 0.0,
        }
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::ParamOutOfRange {
                name: "alpha",
                value: self.alpha,
                allowed: "[0, inf)",
            });
        }
        check_r_m(self.r, self.m)?;
        check_loss(self.loss)?;
        if !self.phi.is_finite() {
            return Err(Error::ParamOutOfRange {
                name: "phi",
                value: self.phi,
                allowed: "finite reals",
            });
        }
        Ok(())
    }
}

pub(crate) fn check_r_m(r: f64, m: u32) -> Result<()> {
    if !(0.0..=R_MAX).contains(&r) {
        return Err(Error::ParamOutOfRange {
            name: "r",
            value: r,
            allowed: "[0, 3]",
        });
    }
    if m > M_MAX {
        return Err(Error::ParamOutOfRange {
            name: "m",
            value: m as f64,
            allowed: "{0, ..., 10}",
        });
    }
    Ok(())
}

pub(crate) fn check_loss(l: f64) -> Result<()> {
    if !(0.0..1.0).contains(&l) {
        return Err(Error::ParamOutOfRange {
            name: "loss",
            value: l,
            allowed: "[0, 1)",
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub p_m: f64,
    pub nbar_a: f64,
    pub nbar_b: f64,
    pub nbar_total: f64,
}

/// `d^{2m}/dt^m dtau^m exp[-(sinh 2r / 4)(t^2 + tau^2) + t tau cosh^2 r]` at 0,
/// without range checks (the mean photon number needs order m + 1).
fn norm_unchecked(r: f64, m: u32) -> Result<f64> {
    let m = m as usize;
    if m == 0 {
        return Ok(1.0);
    }
    let shape = JetShape::new(&[("t", m), ("tau", m)])?;
    let t = MultiJet::variable(&shape, "t")?;
    let tau = MultiJet::variable(&shape, "tau")?;
    let quad = (&t * &t + &tau * &tau).scale(-(2.0 * r).sinh() / 4.0);
    let cross = (&t * &tau).scale(r.cosh().powi(2));
    let d = (quad + cross).exp().derivative(&[m, m])?;
    if d.im.abs() > 1e-12 * d.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue {
            what: "P_m",
            residue: d.im,
        });
    }
    Ok(d.re)
}

/// Normalisation `P_m = <0|S^dag b^m b^dag^m S|0>` of the photon-added squeezed vacuum.
pub fn pasvs_norm(r: f64, m: u32) -> Result<f64> {
    check_r_m(r, m)?;
    norm_unchecked(r, m)
}

/// Mean photon number `P_{m+1}/P_m - 1` of the PASVS.
pub fn pasvs_mean_photons(r: f64, m: u32) -> Result<f64> {
    check_r_m(r, m)?;
    Ok(norm_unchecked(r, m + 1)? / norm_unchecked(r, m)? - 1.0)
}

pub fn energy_report(p: &ProbeParams) -> Result<EnergyReport> {
    p.validate()?;
    let p_m = pasvs_norm(p.r, p.m)?;
    let nbar_b = pasvs_mean_photons(p.r, p.m)?;
    let nbar_a = p.alpha * p.alpha;
    Ok(EnergyReport {
        p_m,
        nbar_a,
        nbar_b,
        nbar_total: nbar_a + nbar_b,
    })
}

/// Squeezing that gives the PASVS of order `m` the mean photon number
/// `nbar_b_target`, by bisection on `[0, 3]`.
pub fn solve_r_for_energy(m: u32, nbar_b_target: f64) -> Result<f64> {
    check_r_m(0.0, m)?;
    let floor = m as f64;
    if !nbar_b_target.is_finite() || nbar_b_target < floor {
        return Err(Error::InfeasibleTarget {
            target: nbar_b_target,
            floor,
        });
    }
    let f = |r: f64| pasvs_mean_photons(r, m).map(|n| n - nbar_b_target);
    if f(0.0)?.abs() < 1e-10 {
        return Ok(0.0);
    }
    let hi_val = f(R_MAX)?;
    if hi_val < 0.0 {
        return Err(Error::BracketExceeded {
            target: nbar_b_target,
            r_max: R_MAX,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, R_MAX);
    let mut best = (hi, hi_val.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.abs() < best.1 {
            best = (mid, v.abs());
        }
        if v.abs() < 1e-10 || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

/// Truncated Fock expansion of a single-mode state.
#[derive(Debug, Clone, PartialEq)]
pub struct FockAmplitudes {
    /// Normalised amplitudes `c_0..=c_cutoff` (real for the states used here).
    pub amps: Vec<f64>,
    /// Squared norm of the expansion before normalisation, summed to convergence.
    pub raw_norm_sq: f64,
    /// Probability mass beyond the cutoff.
    pub tail: f64,
}

impl FockAmplitudes {
    pub fn cutoff(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn mean_photons(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(k, c)| k as f64 * c * c)
            .sum()
    }
}

/// Raw (unnormalised) PASVS amplitudes `b^dag^m S(r)|0>`, extended until the
/// remaining terms are negligible or `min_len` is reached, whichever is later.
pub(crate) fn pasvs_raw_series(r: f64, m: u32, min_len: usize) -> Vec<f64> {
    let m = m as usize;
    let th = r.tanh();
    // s_{2n} = sech^{1/2} r (-tanh r)^n sqrt((2n)!) / (2^n n!)
    let mut s = (1.0 / r.cosh()).sqrt();
    let mut out = vec![0.0; m];
    let mut total = 0.0;
    let mut n = 0usize;
    loop {
        let k = 2 * n;
        if n > 0 {
            let kf = k as f64;
            s *= -th * (kf * (kf - 1.0)).sqrt() / kf;
        }
        let lift: f64 = (1..=m).map(|i| ((k + i) as f64).sqrt()).product();
        let c = s * lift;
        out.push(c);
        out.push(0.0);
        total += c * c;
        n += 1;
        let done_len = out.len() >= min_len;
        let negligible = c * c <= 1e-40 * total.max(1e-300) || th == 0.0;
        if (done_len && negligible && n > 2) || n > 200_000 {
            break;
        }
    }
    out.truncate(out.len().max(min_len));
    if out.len() < min_len {
        out.resize(min_len, 0.0);
    }
    out
}

pub(crate) fn truncate_series(raw: Vec<f64>, cutoff: usize) -> Result<FockAmplitudes> {
    let raw_norm_sq: f64 = raw.iter().map(|c| c * c).sum();
    let beyond: f64 = raw.iter().skip(cutoff + 1).map(|c| c * c).sum();
    let tail = beyond / raw_norm_sq;
    if tail >= FOCK_TAIL_TOLERANCE {
        return Err(Error::CutoffTooSmall { cutoff, tail });
    }
    let scale = raw_norm_sq.sqrt();
    let amps = raw.iter().take(cutoff + 1).map(|c| c / scale).collect();
    Ok(FockAmplitudes {
        amps,
        raw_norm_sq,
        tail,
    })
}

/// Fock amplitudes of the normalised PASVS up to `cutoff`.
pub fn pasvs_fock_amplitudes(r: f64, m: u32, cutoff: usize) -> Result<FockAmplitudes> {
    check_r_m(r, m)?;
    if cutoff < m as usize + 2 {
        return Err(Error::CutoffTooSmall {
            cutoff,
            tail: 1.0,
        });
    }
    truncate_series(pasvs_raw_series(r, m, cutoff + 1), cutoff)
}

/// Raw coherent-state amplitudes `e^{-a^2/2} a^k / sqrt(k!)`, extended past
/// the Poisson peak until negligible.
pub(crate) fn coherent_raw_series(alpha: f64, min_len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(min_len);
    let mut c = (-alpha * alpha / 2.0).exp();
    let mut total = 0.0;
    let mut k = 0usize;
    loop {
        if k > 0 {
            c *= alpha / (k as f64).sqrt();
        }
        out.push(c);
        total += c * c;
        k += 1;
        let past_peak = (k as f64) > alpha * alpha + 1.0;
        let negligible = c * c <= 1e-40 * total;
        if (out.len() >= min_len && past_peak && negligible) || alpha == 0.0 && out.len() >= min_len
        {
            break;
        }
        if k > 1_000_000 {
            break;
        }
    }
    out
}

pub fn coherent_fock_amplitudes(alpha: f64, cutoff: usize) -> Result<FockAmplitudes> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::ParamOutOfRange {
            name: "alpha",
            value: alpha,
            allowed: "[0, inf)",
        });
    }
    truncate_series(coherent_raw_series(alpha, cutoff + 1), cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        assert_eq!(pasvs_norm(0.5, 0).unwrap(), 1.0);
        assert!((pasvs_norm(0.0, 3).unwrap() - 6.0).abs() < 1e-12);
        let c2 = 0.5f64.cosh().powi(2);
        assert!((pasvs_norm(0.5, 1).unwrap() - c2).abs() < 1e-12);
        assert!((c2 - 1.27154).abs() < 1e-5);
        assert!(pasvs_norm(3.5, 1).is_err());
        assert!(pasvs_norm(0.5, 11).is_err());
    }

    #[test]
    fn mean_photon_examples() {
        let s2 = 0.5f64.sinh().powi(2);
        assert!((pasvs_mean_photons(0.5, 0).unwrap() - s2).abs() < 1e-12);
        assert!((pasvs_mean_photons(0.0, 2).unwrap() - 2.0).abs() < 1e-12);
        // P_2 = 2 cosh^4 r + sinh^2 r cosh^2 r, P_1 = cosh^2 r.
        let c2 = 0.5f64.cosh().powi(2);
        let expect = 2.0 * c2 + s2 - 1.0;
        assert!((pasvs_mean_photons(0.5, 1).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 1.81462).abs() < 1e-5);
    }

    #[test]
    fn energy_examples() {
        let e = energy_report(&ProbeParams::new(2.0, 0.0, 0)).unwrap();
        assert_eq!(e.nbar_total, 4.0);
        let e = energy_report(&ProbeParams::new(0.0, 0.0, 1)).unwrap();
        assert!((e.nbar_total - 1.0).abs() < 1e-12);
        let e = energy_report(&ProbeParams::new(2.0, 0.5, 1)).unwrap();
        assert!((e.nbar_total - 5.81462).abs() < 1e-5);
        assert_eq!(e.nbar_a, 4.0);
        assert_eq!(e.nbar_total, e.nbar_a + e.nbar_b);
    }

    #[test]
    fn energy_matching() {
        let r = solve_r_for_energy(0, 4.0).unwrap();
        assert!((r - 2.0f64.asinh()).abs() < 1e-9);
        assert!((r - 1.44363548).abs() < 1e-8);
        assert_eq!(
            solve_r_for_energy(2, 1.0).unwrap_err(),
            Error::InfeasibleTarget {
                target: 1.0,
                floor: 2.0
            }
        );
        let r = solve_r_for_energy(1, 4.0).unwrap();
        assert!((pasvs_mean_photons(r, 1).unwrap() - 4.0).abs() < 1e-10);
        assert!(matches!(
            solve_r_for_energy(0, 1e4),
            Err(Error::BracketExceeded { .. })
        ));
        assert_eq!(solve_r_for_energy(3, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn fock_amplitude_examples() {
        let f = pasvs_fock_amplitudes(0.0, 1, 8).unwrap();
        assert_eq!(f.amps.len(), 9);
        for (k, c) in f.amps.iter().enumerate() {
            assert_eq!(*c, if k == 1 { 1.0 } else { 0.0 });
        }

        let f = pasvs_fock_amplitudes(0.5, 0, 40).unwrap();
        assert!(f.amps.iter().skip(1).step_by(2).all(|c| *c == 0.0));

        let f = pasvs_fock_amplitudes(0.5, 1, 40).unwrap();
        let c2 = 0.5f64.cosh().powi(2);
        assert!((f.raw_norm_sq - c2).abs() < 1e-8 * c2);

        assert!(matches!(
            pasvs_fock_amplitudes(0.5, 3, 4),
            Err(Error::CutoffTooSmall { .. })
        ));
        assert!(matches!(
            pasvs_fock_amplitudes(1.5, 0, 20),
            Err(Error::CutoffTooSmall { .. })
        ));
    }

    #[test]
    fn coherent_examples() {
        let v = coherent_fock_amplitudes(0.0, 10).unwrap();
        assert_eq!(v.amps[0], 1.0);
        assert!(v.amps[1..].iter().all(|c| *c == 0.0));

        let c = coherent_fock_amplitudes(2.0, 40).unwrap();
        assert!((c.mean_photons() - 4.0).abs() < 1e-9);

        assert!(matches!(
            coherent_fock_amplitudes(2.0, 5),
            Err(Error::CutoffTooSmall { .. })
        ));
    }

    #[test]
    fn validation() {
        assert!(ProbeParams::new(-1.0, 0.0, 0).validate().is_err());
        assert!(ProbeParams::new(1.0, 0.0, 0).with_loss(1.0).validate().is_err());
        assert!(ProbeParams::new(1.0, 0.0, 0)
            .with_phi(f64::NAN)
            .validate()
            .is_err());
        assert!(ProbeParams::new(1.0, 3.0, 10).with_loss(0.99).validate().is_ok());
    }
}
