//! Brute-force reference engine: the interferometer simulated literally in
//! a truncated two-mode Fock space.
//!
//! States live on the triangle `n_a + n_b <= cutoff` of a square
//! `(cutoff+1)^2` grid (row-major, `n_a` major). The beam splitters conserve
//! the total photon number, so on the triangle they act exactly, one
//! fixed-total block at a time. Mixed states are kept as ensembles of
//! unnormalised pure branches, one per Kraus trajectory.

pub mod linalg;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::parity::ParitySignal;
use crate::states::{
    check_loss, coherent_fock_amplitudes, coherent_raw_series, pasvs_fock_amplitudes, pasvs_raw_series,
    ProbeParams,
};

use linalg::{parity_block, splitter_block};

/// Cutoff search starts here and doubles.
pub const INITIAL_CUTOFF: usize = 40;
pub const MAX_CUTOFF: usize = 640;
/// Bounds on the total-photon tail beyond the cutoff: plain probability, and
/// probability weighted by `n^w` relative to `<n^w>`.
const TAIL_PROBABILITY: f64 = 1e-12;
const TAIL_MOMENT: f64 = 1e-12;
const BRANCH_TRACE_FLOOR: f64 = 1e-14;
const TRACE_TOLERANCE: f64 = 1e-9;
const DENSE_LIMIT: usize = 2000;

/// Two-mode pure state on the photon-number triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct FockGrid {
    cutoff: usize,
    amps: Vec<Complex64>,
}

impl FockGrid {
    pub fn zeros(cutoff: usize) -> Self {
        FockGrid {
            cutoff,
            amps: vec![Complex64::new(0.0, 0.0); (cutoff + 1) * (cutoff + 1)],
        }
    }

    /// `|a> (x) |b>` restricted to the triangle.
    pub fn product(a: &[f64], b: &[f64], cutoff: usize) -> Self {
        let mut g = Self::zeros(cutoff);
        for (na, ca) in a.iter().enumerate().take(cutoff + 1) {
            for (nb, cb) in b.iter().enumerate().take(cutoff + 1 - na) {
                g.set(na, nb, Complex64::new(ca * cb, 0.0));
            }
        }
        g
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn index(&self, na: usize, nb: usize) -> usize {
        na * (self.cutoff + 1) + nb
    }

    pub fn get(&self, na: usize, nb: usize) -> Complex64 {
        self.amps[self.index(na, nb)]
    }

    /// Panics if `(na, nb)` lies off the triangle.
    pub fn set(&mut self, na: usize, nb: usize, v: Complex64) {
        assert!(na + nb <= self.cutoff, "({na}, {nb}) outside the photon triangle");
        let i = self.index(na, nb);
        self.amps[i] = v;
    }

    /// Row-major amplitudes, `n_a` major.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    fn scale(&mut self, s: f64) {
        self.amps.iter_mut().for_each(|c| *c *= s);
    }

    /// Photon-number distribution of mode `b` (unnormalised).
    pub fn b_marginal(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.cutoff + 1];
        for na in 0..=self.cutoff {
            for (nb, pk) in p.iter_mut().enumerate().take(self.cutoff + 1 - na) {
                *pk += self.get(na, nb).norm_sqr();
            }
        }
        p
    }

    /// `sum n_b^w |amp|^2`.
    pub fn b_moment(&self, w: u32) -> f64 {
        self.b_marginal()
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64).powi(w as i32) * p)
            .sum()
    }

    /// `sum (-1)^{n_b} |amp|^2`.
    pub fn parity_b(&self) -> f64 {
        self.b_marginal()
            .iter()
            .enumerate()
            .map(|(k, p)| if k % 2 == 0 { *p } else { -*p })
            .sum()
    }

    /// Multiplies amplitude `(n_a, n_b)` by `f(n_b)`.
    fn map_b(&self, f: impl Fn(usize) -> Complex64) -> FockGrid {
        let mut out = self.clone();
        for na in 0..=self.cutoff {
            for nb in 0..=self.cutoff - na {
                let i = self.index(na, nb);
                out.amps[i] *= f(nb);
            }
        }
        out
    }

    fn inner(&self, other: &FockGrid, weight: impl Fn(usize) -> f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for na in 0..=self.cutoff {
            for nb in 0..=self.cutoff - na {
                let i = self.index(na, nb);
                acc += self.amps[i].conj() * other.amps[i] * weight(nb);
            }
        }
        acc
    }
}

/// Mixed state `sum_i |v_i><v_i|` over unnormalised pure branches.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    cutoff: usize,
    branches: Vec<FockGrid>,
}

impl From<FockGrid> for DensityGrid {
    fn from(g: FockGrid) -> Self {
        DensityGrid {
            cutoff: g.cutoff,
            branches: vec![g],
        }
    }
}

impl DensityGrid {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn branches(&self) -> &[FockGrid] {
        &self.branches
    }

    pub fn trace(&self) -> f64 {
        self.branches.iter().map(FockGrid::norm_sq).sum()
    }

    pub fn parity_b(&self) -> f64 {
        self.branches.iter().map(FockGrid::parity_b).sum()
    }

    pub fn b_marginal(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.cutoff + 1];
        for b in &self.branches {
            p.iter_mut().zip(b.b_marginal()).for_each(|(x, y)| *x += y);
        }
        p
    }

    /// Dense matrix over the full square grid, row-major. Only for small
    /// cutoffs; larger requests are refused.
    pub fn to_dense(&self) -> Option<Vec<Complex64>> {
        let d = (self.cutoff + 1) * (self.cutoff + 1);
        if d > DENSE_LIMIT {
            return None;
        }
        let mut rho = vec![Complex64::new(0.0, 0.0); d * d];
        for b in &self.branches {
            for (i, x) in b.amps.iter().enumerate() {
                if *x == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (j, y) in b.amps.iter().enumerate() {
                    rho[i * d + j] += x * y.conj();
                }
            }
        }
        Some(rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitter {
    /// `exp[-i pi (a^dag b + a b^dag) / 4]`
    First,
    /// `exp[+i pi (a^dag b + a b^dag) / 4]`
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    /// `exp(i phi n_b)`
    Linear,
    /// `exp(i phi n_b^2)`
    Kerr,
}

impl PhaseKind {
    fn generator(self, nb: usize) -> f64 {
        let n = nb as f64;
        match self {
            PhaseKind::Linear => n,
            PhaseKind::Kerr => n * n,
        }
    }
}

pub fn apply_beam_splitter(s: &FockGrid, which: Splitter) -> Result<FockGrid> {
    let sign = match which {
        Splitter::First => 1.0,
        Splitter::Second => -1.0,
    };
    let n = s.cutoff;
    let mut out = FockGrid::zeros(n);
    let mut v = Vec::with_capacity(n + 1);
    let mut w = vec![Complex64::new(0.0, 0.0); n + 1];
    for total in 0..=n {
        v.clear();
        v.extend((0..=total).map(|k| s.get(total - k, k)));
        if v.iter().all(|c| c.norm_sqr() == 0.0) {
            continue;
        }
        let block = splitter_block(total)?;
        block.apply(&v, sign, &mut w[..=total]);
        for (k, c) in w[..=total].iter().enumerate() {
            out.set(total - k, k, *c);
        }
    }
    let (before, after) = (s.norm_sq(), out.norm_sq());
    let drift = (after - before).abs();
    if drift > TRACE_TOLERANCE {
        return Err(Error::UnitarityDrift { block: n, drift });
    }
    if after > 0.0 {
        out.scale((before / after).sqrt());
    }
    Ok(out)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// `C(k, j) l^j (1-l)^(k-j)`: probability that `j` of `k` photons are lost.
fn loss_weight(lnf: &[f64], k: usize, j: usize, l: f64) -> f64 {
    if j > k {
        return 0.0;
    }
    if l == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    let eta = 1.0 - l;
    (lnf[k] - lnf[j] - lnf[k - j] + j as f64 * l.ln() + (k - j) as f64 * eta.ln()).exp()
}

/// `rho -> sum_j A_j rho A_j^dag` with
/// `A_j = sqrt(l^j/j!) (1-l)^{n_b/2} b^j` on mode `b`.
pub fn apply_loss_channel(s: &DensityGrid, l: f64) -> Result<DensityGrid> {
    check_loss(l)?;
    let n = s.cutoff;
    if l == 0.0 {
        return Ok(s.clone());
    }
    let lnf = ln_factorials(n);
    let mut out = Vec::new();
    for psi in &s.branches {
        let total = psi.norm_sq();
        let mut kept = 0.0;
        for j in 0..=n {
            if total - kept < BRANCH_TRACE_FLOOR {
                break;
            }
            let mut v = FockGrid::zeros(n);
            for na in 0..=n {
                for nb in 0..=(n - na).saturating_sub(j) {
                    if na + nb + j > n {
                        continue;
                    }
                    let amp = psi.get(na, nb + j);
                    if amp.norm_sqr() == 0.0 {
                        continue;
                    }
                    let c = loss_weight(&lnf, nb + j, j, l).sqrt();
                    v.set(na, nb, amp * c);
                }
            }
            let w = v.norm_sq();
            kept += w;
            if w > 0.0 {
                out.push(v);
            }
        }
    }
    let result = DensityGrid {
        cutoff: n,
        branches: out,
    };
    let drift = (result.trace() - s.trace()).abs();
    if drift > TRACE_TOLERANCE {
        return Err(Error::TraceDrift { drift });
    }
    Ok(result)
}

pub fn apply_phase(s: &DensityGrid, phi: f64, kind: PhaseKind) -> DensityGrid {
    DensityGrid {
        cutoff: s.cutoff,
        branches: s
            .branches
            .iter()
            .map(|b| b.map_b(|nb| Complex64::from_polar(1.0, phi * kind.generator(nb))))
            .collect(),
    }
}

/// Highest power of the photon number an oracle observable is sensitive to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailWeight {
    /// Parity and its phase derivatives (up to `n_b^2`).
    Second,
    /// Moments up to `n_b^4`, as needed by the Kerr variance.
    Fourth,
}

impl TailWeight {
    fn power(self) -> i32 {
        match self {
            TailWeight::Second => 2,
            TailWeight::Fourth => 4,
        }
    }
}

/// [`auto_cutoff_for`] with [`TailWeight::Fourth`], safe for every oracle
/// observable.
pub fn auto_cutoff(p: &ProbeParams) -> Result<usize> {
    auto_cutoff_for(p, TailWeight::Fourth)
}

/// Smallest cutoff in the doubling sequence from [`INITIAL_CUTOFF`] whose
/// total-photon tail is negligible both in probability and weighted by
/// `n^w`, relative to `<n^w>`.
pub fn auto_cutoff_for(p: &ProbeParams, weight: TailWeight) -> Result<usize> {
    p.validate()?;
    let len = 2 * MAX_CUTOFF + 2;
    let sq = |v: Vec<f64>| -> Vec<f64> {
        let s: f64 = v.iter().map(|c| c * c).sum();
        v.iter().take(len).map(|c| c * c / s).collect()
    };
    let pa = sq(coherent_raw_series(p.alpha, len));
    let pb = sq(pasvs_raw_series(p.r, p.m, len));
    let mut total = vec![0.0; len];
    for (i, x) in pa.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in pb.iter().enumerate().take(len - i) {
            total[i + j] += x * y;
        }
    }
    let w = weight.power();
    let moment: f64 = total.iter().enumerate().map(|(n, q)| (n as f64).powi(w) * q).sum();
    let mut cutoff = INITIAL_CUTOFF;
    loop {
        let tail: f64 = total[cutoff + 1..].iter().sum();
        let tail_w: f64 = total
            .iter()
            .enumerate()
            .skip(cutoff + 1)
            .map(|(n, q)| (n as f64).powi(w) * q)
            .sum();
        if tail <= TAIL_PROBABILITY && tail_w <= TAIL_MOMENT * moment.max(1.0) {
            return Ok(cutoff);
        }
        if cutoff >= MAX_CUTOFF {
            return Err(Error::CutoffTooSmall { cutoff, tail });
        }
        cutoff *= 2;
    }
}

/// `|alpha>_a (x) |r, m>_b` on the photon triangle, renormalised.
pub fn build_input_state(p: &ProbeParams, cutoff: usize) -> Result<FockGrid> {
    p.validate()?;
    let a = coherent_fock_amplitudes(p.alpha, cutoff)?;
    let b = pasvs_fock_amplitudes(p.r, p.m, cutoff)?;
    let mut g = FockGrid::product(&a.amps, &b.amps, cutoff);
    let norm = g.norm_sq();
    let dropped = 1.0 - norm;
    if dropped >= crate::states::FOCK_TAIL_TOLERANCE {
        return Err(Error::CutoffTooSmall {
            cutoff,
            tail: dropped,
        });
    }
    g.scale(1.0 / norm.sqrt());
    Ok(g)
}

/// `B1 |psi_in>` at the automatically chosen cutoff.
pub fn post_splitter_state(p: &ProbeParams) -> Result<FockGrid> {
    post_splitter_state_at(p, auto_cutoff(p)?)
}

pub fn post_splitter_state_at(p: &ProbeParams, cutoff: usize) -> Result<FockGrid> {
    apply_beam_splitter(&build_input_state(p, cutoff)?, Splitter::First)
}

/// Parity signal and its first two phase derivatives from the pipeline
/// `B1 -> loss -> phase -> B2 -> (-1)^{n_b}`. The derivatives come from
/// differentiating the diagonal phase factor, not from finite differences.
pub fn parity_signal_oracle_at(p: &ProbeParams, cutoff: usize) -> Result<ParitySignal> {
    let psi = post_splitter_state_at(p, cutoff)?;
    let rho = apply_loss_channel(&psi.into(), p.loss)?;
    let rho = apply_phase(&rho, p.phi, PhaseKind::Linear);
    let parity = |nb: usize| if nb % 2 == 0 { 1.0 } else { -1.0 };
    let (mut value, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for u0 in rho.branches() {
        let u1 = u0.map_b(|nb| Complex64::new(0.0, nb as f64));
        let u2 = u0.map_b(|nb| Complex64::new(-((nb * nb) as f64), 0.0));
        let w0 = apply_beam_splitter(u0, Splitter::Second)?;
        let w1 = apply_beam_splitter(&u1, Splitter::Second)?;
        let w2 = apply_beam_splitter(&u2, Splitter::Second)?;
        value += w0.parity_b();
        d1 += 2.0 * w0.inner(&w1, parity).re;
        d2 += 2.0 * (w1.inner(&w1, parity).re + w0.inner(&w2, parity).re);
    }
    Ok(ParitySignal {
        value,
        dvalue: d1,
        ddvalue: d2,
    })
}

/// Parity of the lossy state as a trigonometric polynomial in the phase,
/// `<Pi>(phi) = Re sum_d c_d exp(i phi d)`, with `d = n_b' - n_b` ranging
/// over `-cutoff..=cutoff`. The parity after the second splitter is block
/// diagonal in the total photon number, so only the fixed-total blocks of
/// the state enter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityFourier {
    cutoff: usize,
    coeffs: Vec<Complex64>,
}

impl ParityFourier {
    /// Builds the coefficients from `B1 -> loss` at the given cutoff; the
    /// phase in `p` is ignored.
    pub fn new(p: &ProbeParams, cutoff: usize) -> Result<Self> {
        let psi = post_splitter_state_at(p, cutoff)?;
        let rho = apply_loss_channel(&psi.into(), p.loss)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * cutoff + 1];
        let mut v = Vec::with_capacity(cutoff + 1);
        for total in 0..=cutoff {
            let block = parity_block(total)?;
            let dim = block.dim;
            for u in rho.branches() {
                v.clear();
                v.extend((0..=total).map(|k| u.get(total - k, k)));
                if v.iter().all(|c| c.norm_sqr() == 0.0) {
                    continue;
                }
                for k in 0..dim {
                    let vk = v[k].conj();
                    let (re, im) = (&block.re[k * dim..(k + 1) * dim], &block.im[k * dim..(k + 1) * dim]);
                    for kp in 0..dim {
                        let o = Complex64::new(re[kp], im[kp]);
                        coeffs[cutoff + kp - k] += vk * o * v[kp];
                    }
                }
            }
        }
        Ok(ParityFourier { cutoff, coeffs })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn at(&self, phi: f64) -> ParitySignal {
        let (mut value, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for (i, c) in self.coeffs.iter().enumerate() {
            let d = i as f64 - self.cutoff as f64;
            let t = c * Complex64::from_polar(1.0, phi * d);
            value += t.re;
            d1 -= d * t.im;
            d2 -= d * d * t.re;
        }
        ParitySignal {
            value,
            dvalue: d1,
            ddvalue: d2,
        }
    }
}

type FourierKey = (u64, u64, u32, u64, usize);

fn fourier_cache() -> &'static Mutex<HashMap<FourierKey, Arc<ParityFourier>>> {
    static CACHE: OnceLock<Mutex<HashMap<FourierKey, Arc<ParityFourier>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// [`ParityFourier`] at the automatic cutoff, memoised per state so phase
/// sweeps pay for the state preparation once.
pub fn parity_fourier(p: &ProbeParams) -> Result<Arc<ParityFourier>> {
    let cutoff = auto_cutoff_for(p, TailWeight::Second)?;
    let key = (p.alpha.to_bits(), p.r.to_bits(), p.m, p.loss.to_bits(), cutoff);
    if let Some(f) = fourier_cache().lock().expect("fourier cache poisoned").get(&key) {
        return Ok(Arc::clone(f));
    }
    let f = Arc::new(ParityFourier::new(p, cutoff)?);
    let mut cache = fourier_cache().lock().expect("fourier cache poisoned");
    Ok(Arc::clone(cache.entry(key).or_insert(f)))
}

/// Parity signal at the automatic cutoff via the memoised [`ParityFourier`].
pub fn parity_signal_oracle(p: &ProbeParams) -> Result<ParitySignal> {
    p.validate()?;
    Ok(parity_fourier(p)?.at(p.phi))
}

/// `Tr[rho_out (-1)^{n_b}]`.
pub fn parity_expectation_oracle(p: &ProbeParams) -> Result<f64> {
    let psi = post_splitter_state_at(p, auto_cutoff_for(p, TailWeight::Second)?)?;
    let rho = apply_loss_channel(&psi.into(), p.loss)?;
    let rho = apply_phase(&rho, p.phi, PhaseKind::Linear);
    let mut value = 0.0;
    for b in rho.branches() {
        value += apply_beam_splitter(b, Splitter::Second)?.parity_b();
    }
    Ok(value)
}

/// `<n_b^w>` on `B1 |psi_in>`, `w` in `1..=4`.
pub fn moments_oracle(p: &ProbeParams, w: u32) -> Result<f64> {
    if !(1..=4).contains(&w) {
        return Err(Error::ParamOutOfRange {
            name: "w",
            value: w as f64,
            allowed: "{1, 2, 3, 4}",
        });
    }
    Ok(post_splitter_state(p)?.b_moment(w))
}

pub fn moment_set_oracle(p: &ProbeParams) -> Result<MomentSet> {
    CqEvaluator::new(p).map(|e| e.moments())
}

/// Purification parameters of the loss channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KrausKind {
    /// `Pi_j` carries `exp[i phi (n - gamma j)]`.
    Linear { gamma: f64 },
    /// `Pi_j` carries `exp[i phi (n^2 - 2 mu1 n j - mu2 j^2)]`.
    Kerr { mu1: f64, mu2: f64 },
}

impl KrausKind {
    /// Phase generator for `j` lost photons and `n` survivors.
    pub fn generator(&self, j: usize, n: usize) -> f64 {
        let (j, n) = (j as f64, n as f64);
        match *self {
            KrausKind::Linear { gamma } => n - gamma * j,
            KrausKind::Kerr { mu1, mu2 } => n * n - 2.0 * mu1 * n * j - mu2 * j * j,
        }
    }
}

/// `Pi_j(phi) = sqrt(l^j/j!) exp[i phi h_j(n)] (1-l)^{n/2} b^j` on mode `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausFamily {
    pub kind: KrausKind,
    pub loss: f64,
}

impl KrausFamily {
    pub fn new(kind: KrausKind, loss: f64) -> Result<Self> {
        check_loss(loss)?;
        Ok(KrausFamily { kind, loss })
    }

    /// Dense matrix of `Pi_j(phi)` on the `b` mode up to `cutoff`, row-major.
    pub fn operator(&self, j: usize, phi: f64, cutoff: usize) -> Vec<Complex64> {
        let d = cutoff + 1;
        let lnf = ln_factorials(cutoff);
        let mut op = vec![Complex64::new(0.0, 0.0); d * d];
        for k in j..=cutoff {
            let n = k - j;
            let mag = loss_weight(&lnf, k, j, self.loss).sqrt();
            op[n * d + k] = Complex64::from_polar(mag, phi * self.kind.generator(j, n));
        }
        op
    }

    /// Diagonals of `Pi_j^dag Pi_j` summed over `j`, and of
    /// `H1 = sum_j dPi_j^dag dPi_j` and `H2 = i sum_j dPi_j^dag Pi_j`.
    ///
    /// Every term maps `|k>` to `|k-j>` and back, so all three sums are
    /// diagonal; the `j` sum is finite on the truncated space and is taken
    /// in full.
    pub fn diagonals(&self, cutoff: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let lnf = ln_factorials(cutoff);
        let mut ident = vec![0.0; cutoff + 1];
        let mut h1 = vec![0.0; cutoff + 1];
        let mut h2 = vec![0.0; cutoff + 1];
        for k in 0..=cutoff {
            for j in 0..=k {
                let w = loss_weight(&lnf, k, j, self.loss);
                if w == 0.0 {
                    continue;
                }
                let h = self.kind.generator(j, k - j);
                ident[k] += w;
                h1[k] += w * h * h;
                h2[k] += w * h;
            }
        }
        (ident, h1, h2)
    }

    /// `max_k |sum_j <k|Pi_j^dag Pi_j|k> - 1|`.
    pub fn completeness_defect(&self, cutoff: usize) -> f64 {
        self.diagonals(cutoff)
            .0
            .iter()
            .fold(0.0, |m, x| m.max((x - 1.0).abs()))
    }
}

/// Evaluates `C_Q = 4[<H1> - <H2>^2]` on one fixed `|Psi_S>` for many
/// Kraus families.
#[derive(Debug, Clone)]
pub struct CqEvaluator {
    marginal: Vec<f64>,
}

impl CqEvaluator {
    pub fn new(p: &ProbeParams) -> Result<Self> {
        let psi = post_splitter_state(p)?;
        Ok(Self::from_marginal(psi.b_marginal()))
    }

    /// From a `b`-mode photon distribution; renormalised to unit mass.
    pub fn from_marginal(marginal: Vec<f64>) -> Self {
        let s: f64 = marginal.iter().sum();
        CqEvaluator {
            marginal: marginal.into_iter().map(|p| p / s).collect(),
        }
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn moments(&self) -> MomentSet {
        let m = |w: i32| -> f64 {
            self.marginal
                .iter()
                .enumerate()
                .map(|(k, p)| (k as f64).powi(w) * p)
                .sum()
        };
        MomentSet::from_moments_unchecked(m(1), m(2), m(3), m(4))
    }

    /// `<H1>` and `<H2>` for `family`.
    pub fn expectations(&self, family: &KrausFamily) -> (f64, f64) {
        let (_, h1, h2) = family.diagonals(self.marginal.len() - 1);
        let e = |h: &[f64]| self.marginal.iter().zip(h).map(|(p, x)| p * x).sum();
        (e(&h1), e(&h2))
    }

    /// `C_Q`, evaluated as `4 sum_k p_k sum_j w_kj (h_j - <H2>)^2`, which
    /// equals `4[<H1> - <H2>^2]` and avoids the cancellation.
    pub fn cq(&self, family: &KrausFamily) -> f64 {
        let cutoff = self.marginal.len() - 1;
        let lnf = ln_factorials(cutoff);
        let (_, mean) = self.expectations(family);
        let mut acc = 0.0;
        for (k, p) in self.marginal.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for j in 0..=k {
                let w = loss_weight(&lnf, k, j, family.loss);
                if w == 0.0 {
                    continue;
                }
                let d = family.kind.generator(j, k - j) - mean;
                acc += p * w * d * d;
            }
        }
        4.0 * acc
    }
}

impl CqEvaluator {
    /// Loss-weighted outcomes `(p_k w_kj, n = k - j, j)`.
    fn joint(&self, l: f64) -> Vec<(f64, f64, f64)> {
        let cutoff = self.marginal.len() - 1;
        let lnf = ln_factorials(cutoff);
        let mut out = Vec::new();
        for (k, p) in self.marginal.iter().enumerate() {
            for j in 0..=k {
                let w = p * loss_weight(&lnf, k, j, l);
                if w > 0.0 {
                    out.push((w, (k - j) as f64, j as f64));
                }
            }
        }
        out
    }

    /// Least-squares minimum of `C_Q` over the linear-family `gamma`. Since
    /// `C_Q = 4 Var(n - gamma j)` under the loss-weighted distribution, the
    /// minimiser is `Cov(n, j)/Var(j)`. Returns `(gamma, C_Q)`.
    pub fn min_linear(&self, l: f64) -> Result<(f64, f64)> {
        check_loss(l)?;
        let joint = self.joint(l);
        let mean = |f: &dyn Fn(f64, f64) -> f64| joint.iter().map(|(w, n, j)| w * f(*n, *j)).sum::<f64>();
        let (mn, mj) = (mean(&|n, _| n), mean(&|_, j| j));
        let vj = mean(&|_, j| (j - mj) * (j - mj));
        let gamma = if vj > 0.0 {
            mean(&|n, j| (n - mn) * (j - mj)) / vj
        } else {
            0.0
        };
        let family = KrausFamily { kind: KrausKind::Linear { gamma }, loss: l };
        Ok((gamma, self.cq(&family)))
    }

    /// Least-squares minimum of `C_Q` over the Kerr-family `(mu1, mu2)`:
    /// `C_Q = 4 Var(n^2 - mu1 (2nj) - mu2 j^2)`. Returns `(mu1, mu2, C_Q)`.
    pub fn min_kerr(&self, l: f64) -> Result<(f64, f64, f64)> {
        check_loss(l)?;
        let joint = self.joint(l);
        let feats = |n: f64, j: f64| [n * n, 2.0 * n * j, j * j];
        let mut mu = [0.0; 3];
        for (w, n, j) in &joint {
            let f = feats(*n, *j);
            (0..3).for_each(|i| mu[i] += w * f[i]);
        }
        let mut c = [[0.0; 3]; 3];
        for (w, n, j) in &joint {
            let f = feats(*n, *j);
            for a in 0..3 {
                for b in 0..3 {
                    c[a][b] += w * (f[a] - mu[a]) * (f[b] - mu[b]);
                }
            }
        }
        let det = c[1][1] * c[2][2] - c[1][2] * c[2][1];
        let (m1, m2) = if det.abs() > 1e-14 * (c[1][1] * c[2][2]).abs().max(f64::MIN_POSITIVE) {
            (
                (c[0][1] * c[2][2] - c[0][2] * c[1][2]) / det,
                (c[0][2] * c[1][1] - c[0][1] * c[2][1]) / det,
            )
        } else {
            (0.0, 0.0)
        };
        let family = KrausFamily { kind: KrausKind::Kerr { mu1: m1, mu2: m2 }, loss: l };
        Ok((m1, m2, self.cq(&family)))
    }
}

/// Operator-level `C_Q[|Psi_S>, Pi_j]` for the family.
pub fn cq_numeric(p: &ProbeParams, family: &KrausFamily) -> Result<f64> {
    if family.loss != p.loss {
        return Err(Error::ParamOutOfRange {
            name: "l",
            value: family.loss,
            allowed: "equal to the probe loss",
        });
    }
    Ok(CqEvaluator::new(p)?.cq(family))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn input_state_examples() {
        let g = build_input_state(&ProbeParams::new(0.0, 0.0, 0), 40).unwrap();
        assert_eq!(g.get(0, 0), c(1.0));
        let g = build_input_state(&ProbeParams::new(0.0, 0.0, 2), 40).unwrap();
        assert!((g.get(0, 2) - c(1.0)).norm() < 1e-15);
        let g = build_input_state(&ProbeParams::new(2.0, 0.5, 1), 40).unwrap();
        assert!((g.norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn splitter_round_trip_and_single_photon() {
        let g = build_input_state(&ProbeParams::new(1.5, 0.5, 2), 40).unwrap();
        let back = apply_beam_splitter(
            &apply_beam_splitter(&g, Splitter::First).unwrap(),
            Splitter::Second,
        )
        .unwrap();
        let err = g
            .amplitudes()
            .iter()
            .zip(back.amplitudes())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
        assert!(err < 1e-9);

        let one = build_input_state(&ProbeParams::new(0.0, 0.0, 1), 4).unwrap();
        let out = apply_beam_splitter(&one, Splitter::First).unwrap();
        assert!((out.get(1, 0).norm_sqr() - 0.5).abs() < 1e-14);
        assert!(out.get(1, 0).re.abs() < 1e-15 && out.get(1, 0).im < 0.0);
    }

    #[test]
    fn post_splitter_mean_is_half_the_energy() {
        let psi = post_splitter_state(&ProbeParams::new(2.0, 0.5, 1)).unwrap();
        let nbar_b = 2.0 * 0.5f64.cosh().powi(2) + 0.5f64.sinh().powi(2) - 1.0;
        assert!((psi.b_moment(1) - (4.0 + nbar_b) / 2.0).abs() < 1e-10);
    }

    #[test]
    fn loss_channel_examples() {
        let one: DensityGrid = build_input_state(&ProbeParams::new(0.0, 0.0, 1), 6)
            .unwrap()
            .into();
        assert_eq!(apply_loss_channel(&one, 0.0).unwrap(), one);
        let out = apply_loss_channel(&one, 0.3).unwrap();
        let p = out.b_marginal();
        assert!((p[0] - 0.3).abs() < 1e-14 && (p[1] - 0.7).abs() < 1e-14);
        assert!((out.trace() - 1.0).abs() < 1e-12);
        assert!(apply_loss_channel(&one, 1.0).is_err());
    }

    #[test]
    fn coherent_state_loses_amplitude() {
        // Coherent state placed directly in mode b.
        let beta: f64 = 1.2;
        let l = 0.25;
        let amps = coherent_fock_amplitudes(beta, 40).unwrap().amps;
        let g = FockGrid::product(&[1.0], &amps, 40);
        let out = apply_loss_channel(&g.into(), l).unwrap();
        let target = coherent_fock_amplitudes(beta * (1.0 - l).sqrt(), 40).unwrap().amps;
        let fidelity: f64 = out
            .branches()
            .iter()
            .map(|b| {
                (0..=40)
                    .map(|k| b.get(0, k) * target[k])
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum();
        assert!(fidelity > 1.0 - 1e-9, "{fidelity}");
    }

    #[test]
    fn phase_examples() {
        let amps = coherent_fock_amplitudes(1.0, 30).unwrap().amps;
        let rho: DensityGrid = FockGrid::product(&[1.0], &amps, 30).into();
        assert_eq!(apply_phase(&rho, 0.0, PhaseKind::Linear), rho);
        let flipped = apply_phase(&rho, std::f64::consts::PI, PhaseKind::Linear);
        for (k, a) in amps.iter().enumerate() {
            let want = if k % 2 == 0 { *a } else { -*a };
            assert!((flipped.branches()[0].get(0, k) - c(want)).norm() < 1e-14);
        }
        let fock: DensityGrid = FockGrid::product(&[1.0], &[0.0, 1.0], 3).into();
        let rotated = apply_phase(&fock, 0.7, PhaseKind::Kerr);
        assert!((rotated.branches()[0].get(0, 1).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_grid_is_hermitian_with_unit_trace() {
        let psi = post_splitter_state_at(&ProbeParams::new(0.5, 0.2, 1), 18).unwrap();
        let rho = apply_loss_channel(&psi.into(), 0.2).unwrap();
        let d = (rho.cutoff() + 1).pow(2);
        let m = rho.to_dense().unwrap();
        let mut herm: f64 = 0.0;
        let mut tr = 0.0;
        for i in 0..d {
            tr += m[i * d + i].re;
            for j in 0..d {
                herm = herm.max((m[i * d + j] - m[j * d + i].conj()).norm());
            }
        }
        assert!(herm < 1e-12);
        assert!((tr - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parity_pipeline_examples() {
        let v = parity_expectation_oracle(&ProbeParams::new(2.0, 0.5, 1)).unwrap();
        assert!((v + 1.0).abs() < 1e-10);
        let v = parity_expectation_oracle(&ProbeParams::new(0.0, 0.5, 0)).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fourier_form_matches_literal_pipeline() {
        for (a, r, m, l) in [(2.0, 0.5, 1, 0.0), (1.0, 0.3, 2, 0.2), (0.0, 0.5, 0, 0.1)] {
            let p = ProbeParams::new(a, r, m).with_loss(l);
            let f = ParityFourier::new(&p, 40).unwrap();
            for phi in [0.0, 0.4, -1.1] {
                let lit = parity_signal_oracle_at(&p.with_phi(phi), 40).unwrap();
                let four = f.at(phi);
                assert!((lit.value - four.value).abs() < 1e-11);
                assert!((lit.dvalue - four.dvalue).abs() < 1e-10);
                assert!((lit.ddvalue - four.ddvalue).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn moment_examples() {
        assert!((moments_oracle(&ProbeParams::new(2.0, 0.0, 0), 1).unwrap() - 2.0).abs() < 1e-10);
        assert!((moments_oracle(&ProbeParams::new(0.0, 0.0, 1), 4).unwrap() - 0.5).abs() < 1e-12);
        assert!(moments_oracle(&ProbeParams::new(0.0, 0.0, 1), 5).is_err());
    }

    #[test]
    fn kraus_families_are_complete() {
        for kind in [
            KrausKind::Linear { gamma: -0.4 },
            KrausKind::Kerr { mu1: -1.0, mu2: 0.3 },
        ] {
            for l in [0.0, 0.1, 0.5, 0.9] {
                let f = KrausFamily::new(kind, l).unwrap();
                assert!(f.completeness_defect(80) < 1e-9);
            }
        }
    }

    #[test]
    fn diagonal_sums_match_dense_operators() {
        let cutoff = 6;
        let f = KrausFamily::new(KrausKind::Kerr { mu1: -0.5, mu2: -0.3 }, 0.35).unwrap();
        let d = cutoff + 1;
        let mut h1 = vec![Complex64::new(0.0, 0.0); d * d];
        let mut h2 = vec![Complex64::new(0.0, 0.0); d * d];
        let phi = 0.4;
        for j in 0..=cutoff {
            let op = f.operator(j, phi, cutoff);
            // dPi_j/dphi = i h Pi_j with h acting on the output index.
            let mut dop = op.clone();
            for n in 0..d {
                let h = if n + j <= cutoff { f.kind.generator(j, n) } else { 0.0 };
                for k in 0..d {
                    dop[n * d + k] *= Complex64::new(0.0, h);
                }
            }
            for a in 0..d {
                for b in 0..d {
                    for n in 0..d {
                        h1[a * d + b] += dop[n * d + a].conj() * dop[n * d + b];
                        h2[a * d + b] += Complex64::i() * dop[n * d + a].conj() * op[n * d + b];
                    }
                }
            }
        }
        let (_, g1, g2) = f.diagonals(cutoff);
        for a in 0..d {
            for b in 0..d {
                let (w1, w2) = if a == b { (g1[a], g2[a]) } else { (0.0, 0.0) };
                assert!((h1[a * d + b] - c(w1)).norm() < 1e-12);
                assert!((h2[a * d + b] - c(w2)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn lossless_cq_is_four_variances() {
        let p = ProbeParams::new(2.0, 0.5, 1);
        let e = CqEvaluator::new(&p).unwrap();
        let ms = e.moments();
        for gamma in [0.0, -1.0, 0.7] {
            let f = KrausFamily::new(KrausKind::Linear { gamma }, 0.0).unwrap();
            assert!((e.cq(&f) - 4.0 * ms.var_n).abs() < 1e-9 * ms.var_n);
        }
        let f = KrausFamily::new(KrausKind::Kerr { mu1: 0.2, mu2: -1.0 }, 0.0).unwrap();
        assert!((e.cq(&f) - 4.0 * ms.var_n2).abs() < 1e-9 * ms.var_n2);
        let (h1, h2) = e.expectations(&f);
        assert!((4.0 * (h1 - h2 * h2) - e.cq(&f)).abs() < 1e-8 * e.cq(&f));
    }

    #[test]
    fn cutoff_doubles_from_forty() {
        assert_eq!(auto_cutoff(&ProbeParams::new(1.0, 0.0, 0)).unwrap(), 40);
        assert_eq!(auto_cutoff(&ProbeParams::new(2.0, 1.0, 3)).unwrap(), 320);
        assert_eq!(auto_cutoff_for(&ProbeParams::new(2.0, 1.0, 3), TailWeight::Second).unwrap(), 160);
    }
}
