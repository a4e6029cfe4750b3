//! Numeric kernels: adaptive Gauss-Legendre quadrature, fixed-step RK4,
//! log-log power-law fits and small dense linear algebra.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("quadrature did not converge within {panels} panels (estimate {value}, error {error})")]
    NonConvergence { value: f64, error: f64, panels: usize },
    #[error("non-finite integrand value at {0}")]
    NonFinite(f64),
    #[error("ODE solution escaped at t = {t} (|y| = {norm})")]
    BlowUp { t: f64, norm: f64 },
    #[error("{0}")]
    Evaluation(String),
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn cached_rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static R16: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R32: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R8: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        8 => R8.get_or_init(|| gauss_legendre(8)),
        16 => R16.get_or_init(|| gauss_legendre(16)),
        32 => R32.get_or_init(|| gauss_legendre(32)),
        _ => panic!("unsupported panel order {n}; use 8, 16 or 32"),
    }
}

/// Fixed Gauss-Legendre rule of the given order on [a, b].
pub fn gl_fixed(f: &dyn Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let (xs, ws) = cached_rule(order);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    xs.iter().zip(ws).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

#[derive(Clone, Debug)]
pub struct QuadratureSpec {
    pub order: usize,
    /// Relative to the integral of |f|.
    pub tol: f64,
    pub max_panels: usize,
    /// Points where the integrand varies rapidly; panels are split there first.
    pub breakpoints: Vec<f64>,
    /// Lower bound for the tolerance scale, for integrands computed with
    /// their own error (iterated quadrature).
    pub abs_floor: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            order: 16,
            tol: 1e-10,
            max_panels: 1 << 14,
            breakpoints: Vec::new(),
            abs_floor: 0.0,
        }
    }
}

impl QuadratureSpec {
    pub fn with_breakpoints(mut self, pts: Vec<f64>) -> Self {
        self.breakpoints = pts;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    /// Integral of |f| over the domain; the scale the tolerance refers to.
    pub abs_value: f64,
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    halves: (f64, f64),
    abs: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn rule_with_abs(f: &dyn Fn(f64) -> f64, a: f64, b: f64, order: usize) -> Result<(f64, f64), NumericsError> {
    let (xs, ws) = cached_rule(order);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let mut s = 0.0;
    let mut sa = 0.0;
    for (x, w) in xs.iter().zip(ws) {
        let p = c + h * x;
        let v = f(p);
        if !v.is_finite() {
            return Err(NumericsError::NonFinite(p));
        }
        s += w * v;
        sa += w * v.abs();
    }
    Ok((s * h, sa * h.abs()))
}

/// Panel estimate: the full rule compared against the rule on both halves.
fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: Option<f64>, order: usize) -> Result<Panel, NumericsError> {
    let m = 0.5 * (a + b);
    let whole = match whole {
        Some(w) => w,
        None => rule_with_abs(f, a, b, order)?.0,
    };
    let (l, la) = rule_with_abs(f, a, m, order)?;
    let (r, ra) = rule_with_abs(f, m, b, order)?;
    Ok(Panel {
        a,
        b,
        value: l + r,
        halves: (l, r),
        abs: la + ra,
        error: (whole - (l + r)).abs(),
    })
}

/// Adaptive Gauss-Legendre quadrature over [a, b].
///
/// Each panel is checked against its two halves; the panel with the largest
/// error is split until the summed error is within `tol` times the integral
/// of |f|.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Quad, NumericsError> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0, abs_value: 0.0, panels: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts = vec![lo];
    let mut bps: Vec<f64> = spec.breakpoints.iter().copied().filter(|p| *p > lo && *p < hi).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    cuts.extend(bps);
    cuts.push(hi);
    let mut heap = BinaryHeap::new();
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            heap.push(panel(f, w[0], w[1], None, spec.order)?);
        }
    }
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let abs: f64 = heap.iter().map(|p| p.abs).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= spec.tol * abs.max(spec.abs_floor) || error == 0.0 {
            return Ok(Quad { value: sign * value, error, abs_value: abs, panels: heap.len() });
        }
        if heap.len() >= spec.max_panels {
            return Err(NumericsError::NonConvergence { value: sign * value, error, panels: heap.len() });
        }
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // interval exhausted in floating point; accept what we have
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(panel(f, worst.a, m, Some(worst.halves.0), spec.order)?);
        heap.push(panel(f, m, worst.b, Some(worst.halves.1), spec.order)?);
    }
}

/// Iterated adaptive quadrature over t in [t0, t1] and x in [x0, x1].
/// `inner_breaks(t)` supplies x-breakpoints (e.g. a moving layer).
pub fn integrate_2d(
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    (t0, t1): (f64, f64),
    (x0, x1): (f64, f64),
    inner_breaks: &dyn Fn(f64) -> Vec<f64>,
    outer: &QuadratureSpec,
    inner: &QuadratureSpec,
) -> Result<Quad, NumericsError> {
    let failure = std::cell::RefCell::new(None);
    // lines whose integral is negligible against the whole integrand are
    // settled absolutely, so rounding noise far from the layers cannot stall them
    let peak = sample_peak(f, (t0, t1), (x0, x1), inner_breaks);
    let inner_floor = inner.abs_floor.max(1e-3 * peak * (x1 - x0).abs());
    let inner_at = |t: f64| -> Option<Quad> {
        let spec = QuadratureSpec {
            breakpoints: inner_breaks(t),
            abs_floor: inner_floor,
            ..inner.clone()
        };
        match integrate(&|x| f(x, t), x0, x1, &spec) {
            Ok(q) => Some(q),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                None
            }
        }
    };
    // scale of the double integral of |f|, so that the outer rule does not
    // chase the inner rules' error when the signed integral cancels
    let abs_scale = gl_fixed(&|t| inner_at(t).map_or(0.0, |q| q.abs_value), t0, t1, 16);
    let g = |t: f64| inner_at(t).map_or(f64::NAN, |q| q.value);
    let spec = QuadratureSpec {
        abs_floor: outer.abs_floor.max(abs_scale),
        ..outer.clone()
    };
    let res = integrate(&g, t0, t1, &spec);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    res
}

/// max |f| on a 33 x 33 lattice plus the inner breakpoints of each lattice line.
fn sample_peak(
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    (t0, t1): (f64, f64),
    (x0, x1): (f64, f64),
    inner_breaks: &dyn Fn(f64) -> Vec<f64>,
) -> f64 {
    const N: usize = 32;
    let mut peak: f64 = 0.0;
    for i in 0..=N {
        let t = t0 + (t1 - t0) * i as f64 / N as f64;
        let xs = (0..=N).map(|j| x0 + (x1 - x0) * j as f64 / N as f64).chain(inner_breaks(t).into_iter().filter(|x| (x - x0) * (x - x1) <= 0.0));
        for x in xs {
            let v = f(x, t);
            if v.is_finite() {
                peak = peak.max(v.abs());
            }
        }
    }
    peak
}

/// Classical fourth-order Runge-Kutta with `steps` fixed steps from t0 to t1.
/// Fails if the state becomes non-finite or exceeds 1e12 in magnitude.
pub fn rk4_solve<F>(rhs: F, y0: &[f64], t0: f64, t1: f64, steps: usize) -> Result<Vec<f64>, NumericsError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, NumericsError>,
{
    let h = (t1 - t0) / steps as f64;
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut tmp = vec![0.0; n];
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let k1 = rhs(t, &y)?;
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        let k2 = rhs(t + 0.5 * h, &tmp)?;
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        let k3 = rhs(t + 0.5 * h, &tmp)?;
        for j in 0..n {
            tmp[j] = y[j] + h * k3[j];
        }
        let k4 = rhs(t + h, &tmp)?;
        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() || norm > 1e12 {
            return Err(NumericsError::BlowUp { t: t + h, norm });
        }
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    /// NaN when the fit is undefined (some datum non-positive).
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
    /// log10 of max(xs)/min(xs).
    pub span: f64,
}

impl PowerLawFit {
    pub fn is_defined(&self) -> bool {
        self.slope.is_finite()
    }
}

/// Least-squares fit of log y = slope * log x + intercept.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> PowerLawFit {
    assert_eq!(xs.len(), ys.len());
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi / lo).log10();
    if xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return PowerLawFit { slope: f64::NAN, intercept: f64::NAN, residual_norm: f64::NAN, span };
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    let residual_norm = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        .sqrt();
    PowerLawFit { slope, intercept, residual_norm, span }
}

/// Ordinary least squares line through (x, y); returns (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Real eigen-decomposition of a 2x2 matrix with distinct real eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen2 {
    /// Ascending.
    pub values: [f64; 2],
    pub right: [[f64; 2]; 2],
    /// Normalized so that left[i] . right[i] = 1.
    pub left: [[f64; 2]; 2],
}

pub fn eig2x2(a: [[f64; 2]; 2]) -> Option<Eigen2> {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr / 4.0 - det;
    if !(disc > 0.0) {
        return None;
    }
    let s = disc.sqrt();
    let values = [tr / 2.0 - s, tr / 2.0 + s];
    let mut right = [[0.0; 2]; 2];
    let mut left = [[0.0; 2]; 2];
    for (i, &l) in values.iter().enumerate() {
        // (A - l) r = 0: pick the better conditioned row
        let r1 = [a[0][1], l - a[0][0]];
        let r2 = [l - a[1][1], a[1][0]];
        let r = if r1[0].hypot(r1[1]) >= r2[0].hypot(r2[1]) { r1 } else { r2 };
        let lv1 = [a[1][0], l - a[0][0]];
        let lv2 = [l - a[1][1], a[0][1]];
        let lv = if lv1[0].hypot(lv1[1]) >= lv2[0].hypot(lv2[1]) { lv1 } else { lv2 };
        let nr = r[0].hypot(r[1]);
        let r = [r[0] / nr, r[1] / nr];
        let dot = lv[0] * r[0] + lv[1] * r[1];
        right[i] = r;
        left[i] = [lv[0] / dot, lv[1] / dot];
    }
    Some(Eigen2 { values, right, left })
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, bi)| {
        let mut r = row.clone();
        r.push(*bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, |r| r.len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Largest absolute entry of A - B.
pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gl16_exact_for_degree_31() {
        let (xs, ws) = gauss_legendre(16);
        assert_abs_diff_eq!(ws.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        for deg in 0..=31 {
            let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert_abs_diff_eq!(q, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn adaptive_examples() {
        let s = QuadratureSpec::default();
        let q = integrate(&|x| x * x, 0.0, 1.0, &s).unwrap();
        assert_abs_diff_eq!(q.value, 1.0 / 3.0, epsilon = 1e-12);
        let q = integrate(&|t| (1.0 - t) * (1.0 - t), 0.0, 1.0, &s).unwrap();
        assert_abs_diff_eq!(q.value, 1.0 / 3.0, epsilon = 1e-12);
        let q = integrate(&|x| x.sqrt(), 0.0, 1.0, &s).unwrap();
        assert_abs_diff_eq!(q.value, 2.0 / 3.0, epsilon = 1e-10);
        let q = integrate(&|x| x, 1.0, 0.0, &s).unwrap();
        assert_abs_diff_eq!(q.value, -0.5, epsilon = 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let s = QuadratureSpec { max_panels: 4, ..Default::default() };
        let r = integrate(&|x: f64| (1.0 / x).sin(), 1e-3, 1.0, &s);
        assert!(matches!(r, Err(NumericsError::NonConvergence { .. })));
        let r = integrate(&|x: f64| 1.0 / x, 0.0, 1.0, &QuadratureSpec::default());
        assert!(r.is_err());
    }

    #[test]
    fn narrow_bump_with_breakpoint() {
        let eps = 1e-3;
        let f = |x: f64| {
            let y = x / eps;
            if y.abs() < 1.0 { (1.0 - y * y).powi(2) * 15.0 / 16.0 / eps } else { 0.0 }
        };
        let s = QuadratureSpec::default().with_breakpoints(vec![-eps, 0.0, eps]);
        let q = integrate(&f, -1.0, 1.0, &s).unwrap();
        assert_abs_diff_eq!(q.value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn two_dimensional() {
        let q = integrate_2d(
            &|x, t| x * t,
            (0.0, 1.0),
            (0.0, 2.0),
            &|_| vec![],
            &QuadratureSpec::default(),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(q.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rk4_examples() {
        let y = rk4_solve(|_, y| Ok(vec![y[0]]), &[1.0], 0.0, 1.0, 1024).unwrap();
        assert_abs_diff_eq!(y[0], std::f64::consts::E, epsilon = 1e-8);
        let y = rk4_solve(|e, q| Ok(vec![-3.0 / (1.0 - e) * q[0]]), &[1.0], 0.0, 0.1, 1024).unwrap();
        assert_abs_diff_eq!(y[0], 0.729, epsilon = 1e-9);
        let y = rk4_solve(|_, _| Ok(vec![0.0, 0.0]), &[0.3, -2.0], 0.0, 5.0, 7).unwrap();
        assert_eq!(y, vec![0.3, -2.0]);
        assert!(matches!(
            rk4_solve(|_, y| Ok(vec![y[0] * y[0]]), &[1.0], 0.0, 2.0, 1024),
            Err(NumericsError::BlowUp { .. })
        ));
    }

    #[test]
    fn rk4_fourth_order() {
        let err = |steps| {
            let y = rk4_solve(|t, y| Ok(vec![-2.0 * t * y[0]]), &[1.0], 0.0, 2.0, steps).unwrap();
            (y[0] - (-4.0f64).exp()).abs()
        };
        let ratio = err(64) / err(128);
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn power_law() {
        let xs: Vec<f64> = (1..8).map(|i| 0.5f64.powi(i)).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_abs_diff_eq!(fit_power_law(&xs, &sq).slope, 2.0, epsilon = 1e-10);
        let inv: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert_abs_diff_eq!(fit_power_law(&xs, &inv).slope, -1.0, epsilon = 1e-10);
        let mut bad = inv.clone();
        bad[2] = 0.0;
        assert!(!fit_power_law(&xs, &bad).is_defined());
    }

    #[test]
    fn eigen_pairs() {
        let e = eig2x2([[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(e.values[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-15);
        let a = [[0.3, 2.0], [0.7, -1.1]];
        let e = eig2x2(a).unwrap();
        for i in 0..2 {
            let (r, l, lam) = (e.right[i], e.left[i], e.values[i]);
            for k in 0..2 {
                assert_abs_diff_eq!(a[k][0] * r[0] + a[k][1] * r[1], lam * r[k], epsilon = 1e-12);
                assert_abs_diff_eq!(l[0] * a[0][k] + l[1] * a[1][k], lam * l[k], epsilon = 1e-12);
            }
            assert_abs_diff_eq!(l[0] * r[0] + l[1] * r[1], 1.0, epsilon = 1e-12);
        }
        assert!(eig2x2([[0.0, -1.0], [1.0, 0.0]]).is_none());
    }

    #[test]
    fn linear_solve() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_linear(&a, &[3.0, 5.0]).unwrap();
        assert_abs_diff_eq!(x[0], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 1.4, epsilon = 1e-14);
        assert!(solve_linear(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 2.0]).is_none());
    }
}
