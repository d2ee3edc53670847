//! Beam-splitter blocks.
//!
//! `a^dag b + a b^dag` conserves the total photon number, so on the
//! two-mode space it splits into blocks of fixed total `T`. In the block
//! basis `|T-k, k>` (`k = n_b`) the generator is real symmetric tridiagonal
//! with `J[k][k+1] = sqrt((k+1)(T-k))`. Each block exponential
//! `exp(-+i pi J/4) = C -+ i S` is computed in real arithmetic by
//! scaling and squaring of the cosine/sine pair.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

use crate::error::{Error, Result};

const UNITARITY_TOLERANCE: f64 = 1e-10;

/// `cos(pi J/4)` and `sin(pi J/4)` on one fixed-total block, row-major.
#[derive(Debug)]
pub struct SplitterBlock {
    pub dim: usize,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    /// `max(|C^2 + S^2 - I|, |CS - SC|)`, the deviation of `U^dag U` from
    /// the identity.
    pub unitarity_defect: f64,
}

fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    // SAFETY: all three buffers are n*n, row-major with row stride n.
    unsafe {
        matrixmultiply::dgemm(
            n,
            n,
            n,
            1.0,
            a.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn symmetrize(n: usize, a: &mut [f64]) {
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
}

/// Generator of block `total` as a dense row-major matrix.
pub fn generator_block(total: usize) -> Vec<f64> {
    let n = total + 1;
    let mut j = vec![0.0; n * n];
    for k in 0..total {
        let v = (((k + 1) * (total - k)) as f64).sqrt();
        j[k * n + k + 1] = v;
        j[(k + 1) * n + k] = v;
    }
    j
}

/// Cosine and sine of `theta * X` for a real symmetric `X`.
pub fn cos_sin(n: usize, x: &[f64], theta: f64) -> (Vec<f64>, Vec<f64>) {
    let norm1 = (0..n)
        .map(|c| (0..n).map(|r| x[r * n + c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * theta.abs();
    let mut squarings = 0u32;
    while norm1 / 2f64.powi(squarings as i32) > 0.5 {
        squarings += 1;
    }
    let scale = theta / 2f64.powi(squarings as i32);
    let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
    let y2 = matmul(n, &y, &y);

    let mut cos = vec![0.0; n * n];
    for i in 0..n {
        cos[i * n + i] = 1.0;
    }
    let mut sin = y.clone();
    // Even and odd powers of y, carried with their Taylor weights.
    let mut even = cos.clone();
    let mut odd = y;
    let mut k = 1usize;
    loop {
        let a = (2 * k - 1) as f64 * (2 * k) as f64;
        let b = (2 * k) as f64 * (2 * k + 1) as f64;
        even = matmul(n, &even, &y2);
        even.iter_mut().for_each(|v| *v /= -a);
        odd = matmul(n, &odd, &y2);
        odd.iter_mut().for_each(|v| *v /= -b);
        cos.iter_mut().zip(&even).for_each(|(c, e)| *c += e);
        sin.iter_mut().zip(&odd).for_each(|(s, o)| *s += o);
        if max_abs(&even).max(max_abs(&odd)) < 1e-18 || k > 30 {
            break;
        }
        k += 1;
    }
    for _ in 0..squarings {
        let diff: Vec<f64> = cos.iter().zip(&sin).map(|(c, s)| c - s).collect();
        let sum: Vec<f64> = cos.iter().zip(&sin).map(|(c, s)| c + s).collect();
        let mut next_sin = matmul(n, &cos, &sin);
        next_sin.iter_mut().for_each(|v| *v *= 2.0);
        cos = matmul(n, &diff, &sum);
        sin = next_sin;
        symmetrize(n, &mut cos);
        symmetrize(n, &mut sin);
    }
    (cos, sin)
}

fn unitarity_defect(n: usize, cos: &[f64], sin: &[f64]) -> f64 {
    let cc = matmul(n, cos, cos);
    let ss = matmul(n, sin, sin);
    let cs = matmul(n, cos, sin);
    let sc = matmul(n, sin, cos);
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            defect = defect
                .max((cc[i * n + j] + ss[i * n + j] - id).abs())
                .max((cs[i * n + j] - sc[i * n + j]).abs());
        }
    }
    defect
}

fn compute_block(total: usize) -> Result<SplitterBlock> {
    let n = total + 1;
    let (cos, sin) = cos_sin(n, &generator_block(total), FRAC_PI_4);
    let defect = unitarity_defect(n, &cos, &sin);
    if defect >= UNITARITY_TOLERANCE {
        return Err(Error::UnitarityDrift {
            block: total,
            drift: defect,
        });
    }
    Ok(SplitterBlock {
        dim: n,
        cos,
        sin,
        unitarity_defect: defect,
    })
}

fn cache() -> &'static RwLock<HashMap<usize, Arc<SplitterBlock>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<SplitterBlock>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Block for total photon number `total`, computed once per process.
pub fn splitter_block(total: usize) -> Result<Arc<SplitterBlock>> {
    if let Some(b) = cache().read().expect("block cache poisoned").get(&total) {
        return Ok(Arc::clone(b));
    }
    let block = Arc::new(compute_block(total)?);
    let mut w = cache().write().expect("block cache poisoned");
    Ok(Arc::clone(w.entry(total).or_insert(block)))
}

impl SplitterBlock {
    /// `out = (C - sign * i S) v`; `sign = +1` for the first splitter.
    pub fn apply(&self, v: &[Complex64], sign: f64, out: &mut [Complex64]) {
        let n = self.dim;
        for i in 0..n {
            let (c_row, s_row) = (&self.cos[i * n..(i + 1) * n], &self.sin[i * n..(i + 1) * n]);
            let mut cv = Complex64::new(0.0, 0.0);
            let mut sv = Complex64::new(0.0, 0.0);
            for k in 0..n {
                cv += v[k] * c_row[k];
                sv += v[k] * s_row[k];
            }
            out[i] = cv - Complex64::new(0.0, sign) * sv;
        }
    }
}

/// `B2^dag (-1)^{n_b} B2` on one fixed-total block, split into real and
/// imaginary parts (row-major).
#[derive(Debug)]
pub struct ParityBlock {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

fn compute_parity_block(total: usize) -> Result<ParityBlock> {
    let b = splitter_block(total)?;
    let n = b.dim;
    let signed = |m: &[f64]| -> Vec<f64> {
        let mut out = m.to_vec();
        for k in (1..n).step_by(2) {
            for x in &mut out[k * n..(k + 1) * n] {
                *x = -*x;
            }
        }
        out
    };
    let (pc, ps) = (signed(&b.cos), signed(&b.sin));
    // C and S are symmetric, so B2^dag = C - iS and the transposes drop out.
    let (cpc, sps) = (matmul(n, &b.cos, &pc), matmul(n, &b.sin, &ps));
    let (cps, spc) = (matmul(n, &b.cos, &ps), matmul(n, &b.sin, &pc));
    Ok(ParityBlock {
        dim: n,
        re: cpc.iter().zip(&sps).map(|(x, y)| x + y).collect(),
        im: cps.iter().zip(&spc).map(|(x, y)| x - y).collect(),
    })
}

fn parity_cache() -> &'static RwLock<HashMap<usize, Arc<ParityBlock>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<ParityBlock>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

pub fn parity_block(total: usize) -> Result<Arc<ParityBlock>> {
    if let Some(b) = parity_cache().read().expect("parity cache poisoned").get(&total) {
        return Ok(Arc::clone(b));
    }
    let block = Arc::new(compute_parity_block(total)?);
    let mut w = parity_cache().write().expect("parity cache poisoned");
    Ok(Arc::clone(w.entry(total).or_insert(block)))
}
