//! Derivative-free minimizers used by the numeric cross-checks.

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[a, b]` down to bracket width `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Scans `grid` (ascending), widens the range while the best point sits on
/// an edge, then refines the bracket around it by golden section.
pub fn scan_then_golden(f: impl Fn(f64) -> f64, grid: &[f64], tol: f64) -> (f64, f64) {
    assert!(grid.len() >= 3, "scan needs at least three points");
    let mut pts: Vec<(f64, f64)> = grid.iter().map(|&x| (x, f(x))).collect();
    for _ in 0..60 {
        let best = argmin(&pts);
        let span = pts[pts.len() - 1].0 - pts[0].0;
        if best == 0 {
            let x = pts[0].0 - span;
            pts.insert(0, (x, f(x)));
        } else if best == pts.len() - 1 {
            let x = pts[best].0 + span;
            pts.push((x, f(x)));
        } else {
            break;
        }
    }
    let best = argmin(&pts);
    let lo = pts[best.saturating_sub(1)].0;
    let hi = pts[(best + 1).min(pts.len() - 1)].0;
    let (x, fx) = golden_section(&f, lo, hi, tol);
    if fx <= pts[best].1 {
        (x, fx)
    } else {
        pts[best]
    }
}

fn argmin(pts: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, p) in pts.iter().enumerate() {
        if p.1 < pts[best].1 {
            best = i;
        }
    }
    best
}

/// Nelder-Mead in two dimensions, stopping when the simplex values agree
/// to `ftol` relative and its diameter is below `xtol`.
pub fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    start: [f64; 2],
    step: f64,
    ftol: f64,
    xtol: f64,
    max_iter: usize,
) -> ([f64; 2], f64) {
    let mut s: Vec<([f64; 2], f64)> = [
        start,
        [start[0] + step, start[1]],
        [start[0], start[1] + step],
    ]
    .into_iter()
    .map(|x| (x, f(x)))
    .collect();
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = (s[2].1 - s[0].1).abs();
        let diam = s
            .iter()
            .map(|p| (p.0[0] - s[0].0[0]).abs().max((p.0[1] - s[0].0[1]).abs()))
            .fold(0.0, f64::max);
        if spread <= ftol * s[0].1.abs().max(1e-300) && diam < xtol {
            break;
        }
        let centroid = [(s[0].0[0] + s[1].0[0]) / 2.0, (s[0].0[1] + s[1].0[1]) / 2.0];
        let xr = lerp(centroid, s[2].0, -1.0);
        let fr = f(xr);
        if fr < s[0].1 {
            let xe = lerp(centroid, s[2].0, -2.0);
            let fe = f(xe);
            s[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < s[1].1 {
            s[2] = (xr, fr);
        } else {
            let xc = if fr < s[2].1 {
                lerp(centroid, xr, 0.5)
            } else {
                lerp(centroid, s[2].0, 0.5)
            };
            let fc = f(xc);
            if fc < s[2].1.min(fr) {
                s[2] = (xc, fc);
            } else {
                for i in 1..3 {
                    let x = lerp(s[0].0, s[i].0, 0.5);
                    s[i] = (x, f(x));
                }
            }
        }
    }
    s.sort_by(|a, b| a.1.total_cmp(&b.1));
    s[0]
}

/// Best point of an `n x n` grid over `[lo, hi]^2` refined by Nelder-Mead.
pub fn grid_then_simplex(f: impl Fn([f64; 2]) -> f64, lo: f64, hi: f64, n: usize) -> ([f64; 2], f64) {
    let h = (hi - lo) / (n - 1) as f64;
    let mut best = ([lo, lo], f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            let x = [lo + h * i as f64, lo + h * j as f64];
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    let refined = nelder_mead(&f, best.0, h, 1e-15, 1e-12, 20_000);
    if refined.1 <= best.1 {
        refined
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2), -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-9 && fx < 1e-18);
    }

    #[test]
    fn scan_expands_past_the_grid() {
        let grid: Vec<f64> = (0..=10).map(|i| -1.0 + 0.1 * i as f64).collect();
        let (x, _) = scan_then_golden(|x| (x - 2.7).powi(2), &grid, 1e-10);
        assert!((x - 2.7).abs() < 1e-8);
    }

    #[test]
    fn simplex_on_rosenbrock_and_quadratic() {
        let (x, _) = nelder_mead(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            [-1.2, 1.0],
            0.5,
            1e-15,
            1e-12,
            20_000,
        );
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
        let (x, _) = grid_then_simplex(|p| (p[0] - 3.0).powi(2) + 2.0 * (p[1] + 0.4).powi(2) + 5.0, -2.0, 1.0, 41);
        assert!((x[0] - 3.0).abs() < 1e-6 && (x[1] + 0.4).abs() < 1e-6);
    }
}
