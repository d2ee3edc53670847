//! Photon-number moments `<n_b^w>` of mode `b` after the first beam splitter,
//! extracted from a closed-form generating function.
//!
//! The generating function `E_M(t, tau, x)` carries the photon addition in
//! `t`, `tau` (order m each) and the moment order in `x`; `<n_b^w>` is its
//! mixed derivative `d^{2m+w}/dt^m dtau^m dx^w` at the origin divided by
//! `P_m cosh r`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{JetShape, MultiJet};
use crate::states::{check_r_m, pasvs_norm};

/// First four moments of the post-splitter photon number in mode `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    /// `<n^2> - <n>^2`
    pub var_n: f64,
    /// `<n^4> - <n^2>^2`
    pub var_n2: f64,
}

const MOMENT_TOLERANCE: f64 = 1e-9;

impl MomentSet {
    /// Builds a moment set and checks that it can come from a distribution
    /// on the non-negative integers.
    pub fn new(m1: f64, m2: f64, m3: f64, m4: f64) -> Result<Self> {
        let ms = Self::from_moments_unchecked(m1, m2, m3, m4);
        ms.check()?;
        Ok(ms)
    }

    /// Builds a moment set without the consistency checks, for feeding raw
    /// values into the QFI formulas.
    pub fn from_moments_unchecked(m1: f64, m2: f64, m3: f64, m4: f64) -> Self {
        MomentSet {
            m1,
            m2,
            m3,
            m4,
            var_n: m2 - m1 * m1,
            var_n2: m4 - m2 * m2,
        }
    }

    pub fn vacuum() -> Self {
        Self::from_moments_unchecked(0.0, 0.0, 0.0, 0.0)
    }

    pub fn check(&self) -> Result<()> {
        let tol = |scale: f64| MOMENT_TOLERANCE * scale.abs().max(1.0);
        if self.m1 < -tol(self.m1) {
            return Err(Error::InvalidMoments("<n> >= 0"));
        }
        if self.var_n < -tol(self.m2) {
            return Err(Error::InvalidMoments("<n^2> >= <n>^2"));
        }
        if self.var_n2 < -tol(self.m4) {
            return Err(Error::InvalidMoments("<n^4> >= <n^2>^2"));
        }
        if self.m2 < self.m1 - tol(self.m2) {
            return Err(Error::InvalidMoments("<n^2> >= <n>"));
        }
        // Hankel matrix [[1, m1, m2], [m1, m2, m3], [m2, m3, m4]] must be PSD.
        // Minors are compared after scaling by their diagonal products.
        let h = [
            [1.0, self.m1, self.m2],
            [self.m1, self.m2, self.m3],
            [self.m2, self.m3, self.m4],
        ];
        let d = [1.0, self.m2.max(f64::MIN_POSITIVE), self.m4.max(f64::MIN_POSITIVE)];
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let minor = h[i][i] * h[j][j] - h[i][j] * h[j][i];
            if minor < -MOMENT_TOLERANCE * d[i] * d[j] {
                return Err(Error::InvalidMoments("Hankel matrix PSD"));
            }
        }
        let det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
            - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
            + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
        if det < -MOMENT_TOLERANCE * d[0] * d[1] * d[2] {
            return Err(Error::InvalidMoments("Hankel matrix PSD"));
        }
        Ok(())
    }

    pub fn get(&self, w: u32) -> f64 {
        match w {
            0 => 1.0,
            1 => self.m1,
            2 => self.m2,
            3 => self.m3,
            4 => self.m4,
            _ => panic!("moment order {w} not stored"),
        }
    }
}

/// `<n_b^w>` for `w = 1..=max_w`, all read off one generating-function jet.
fn moments_up_to(alpha: f64, r: f64, m: u32, max_w: usize) -> Result<Vec<f64>> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::ParamOutOfRange {
            name: "alpha",
            value: alpha,
            allowed: "[0, inf)",
        });
    }
    check_r_m(r, m)?;
    let mu = m as usize;
    let shape = JetShape::new(&[("t", mu), ("tau", mu), ("x", max_w)])?;
    let var = |name: &str, cap: usize| {
        if cap == 0 {
            Ok(MultiJet::zero(&shape))
        } else {
            MultiJet::variable(&shape, name)
        }
    };
    let t = var("t", mu)?;
    let tau = var("tau", mu)?;
    let x = var("x", max_w)?;
    let i = Complex64::i();
    let th = r.tanh();

    let ex = x.exp();
    let s = ex.add_scalar(-1.0).scale(0.5);
    let s1 = s.add_scalar(1.0);
    let s1_sq = &s1 * &s1;

    let m0 = s1_sq.scale(-th * th).add_scalar(1.0);
    if m0.constant_term().norm() < 1e-14 {
        return Err(Error::DegenerateDenominator { what: "M0" });
    }
    let inv_m0 = m0.recip()?;

    // M1 = exp[s a (a + i tau + s a tanh r / 2)]
    let m1_arg = &s.scale(alpha) * (tau.scale(i) + s.scale(alpha * th / 2.0)).add_scalar(alpha);
    let big_m1 = m1_arg.exp();
    // M2 = -i s a + (e^x - s)(tau - i s a tanh r)
    let big_m2 = s.scale(-i * alpha) + (&ex - &s) * (&tau - s.scale(i * alpha * th));

    let arg = (&big_m2 * &t).scale(2.0) - (&big_m2 * &big_m2).scale(th) - (&s1_sq * &t * &t).scale(th);
    let e_m = big_m1 * m0.sqrt()?.recip()? * (arg * inv_m0.scale(0.5)).exp();

    let denom = pasvs_norm(r, m)? * r.cosh();
    let mut out = Vec::with_capacity(max_w);
    for w in 1..=max_w {
        let d = e_m.derivative(&[mu, mu, w])? / denom;
        if d.im.abs() > 1e-9 * d.re.abs().max(1.0) {
            return Err(Error::ImaginaryResidue {
                what: "<n_b^w>",
                residue: d.im,
            });
        }
        out.push(d.re);
    }
    Ok(out)
}

/// `<n_b^w>` on the state after the first beam splitter, `w` in `1..=4`.
pub fn nb_moment(alpha: f64, r: f64, m: u32, w: u32) -> Result<f64> {
    if !(1..=4).contains(&w) {
        return Err(Error::ParamOutOfRange {
            name: "w",
            value: w as f64,
            allowed: "{1, 2, 3, 4}",
        });
    }
    Ok(moments_up_to(alpha, r, m, w as usize)?[w as usize - 1])
}

pub fn moment_set(alpha: f64, r: f64, m: u32) -> Result<MomentSet> {
    let v = moments_up_to(alpha, r, m, 4)?;
    MomentSet::new(v[0], v[1], v[2], v[3])
}
