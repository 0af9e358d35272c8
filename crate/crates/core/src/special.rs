//! Special functions and quadrature rules used by the analytics module.

use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this argument Bessel functions come from the trapezoidal rule on
/// the integral representation; above it from the Hankel expansion.
const BESSEL_SWITCH: f64 = 25.0;
const BESSEL_TRAPEZOID_NODES: usize = 96;

/// Bessel function of the first kind J_n(x) for n in {0, 1}.
fn bessel_jn(n: u32, x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < BESSEL_SWITCH {
        bessel_trapezoid(n, ax)
    } else {
        bessel_hankel(n, ax)
    };
    if n % 2 == 1 && x < 0.0 { -v } else { v }
}

/// J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt. The integrand is smooth and
/// periodic, so the trapezoidal rule converges geometrically.
fn bessel_trapezoid(n: u32, x: f64) -> f64 {
    let m = BESSEL_TRAPEZOID_NODES;
    let h = PI / m as f64;
    let nf = n as f64;
    let mut s = 0.5 * ((0.0f64).cos() + (nf * PI).cos());
    for k in 1..m {
        let t = k as f64 * h;
        s += (nf * t - x * t.sin()).cos();
    }
    s * h / PI
}

/// Hankel asymptotic expansion, summed until the terms stop decreasing.
fn bessel_hankel(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n as f64).powi(2);
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        // term = a_k(n) / x^k
        if term.abs() > last || term.abs() < 1e-18 {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let odd = (2 * k + 1) as f64;
        term *= (mu - odd * odd) / ((k + 1) as f64 * 8.0 * x);
    }
    let w = x - (n as f64) * PI / 2.0 - PI / 4.0;
    (2.0 / (PI * x)).sqrt() * (p * w.cos() - q * w.sin())
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_jn(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_jn(1, x)
}

/// Exponential integral E1(x) for x > 0.
pub fn exp_int_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires a positive argument");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let c = term / k as f64;
            sum += c;
            if c.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // Modified Lentz on the continued fraction e^{-x}/(x+1-1/(x+3-4/(x+5-...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on [a, b] with `panels` equal panels.
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = NeumaierSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.value()
    }
}

/// Riemann zeta at even positive arguments 2..=8.
pub fn zeta_even(n: u32) -> f64 {
    match n {
        2 => PI.powi(2) / 6.0,
        4 => PI.powi(4) / 90.0,
        6 => PI.powi(6) / 945.0,
        8 => PI.powi(8) / 9450.0,
        _ => panic!("zeta_even supports 2, 4, 6, 8"),
    }
}

/// Compensated (Kahan-Babuska-Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<'a>(xs: impl IntoIterator<Item = &'a f64>) -> f64 {
    let mut s = NeumaierSum::default();
    for x in xs {
        s.add(*x);
    }
    s.value()
}

/// Least-squares line y = a + b x; returns (a, b, r_squared).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = neumaier_sum(x) / n;
    let my = neumaier_sum(y) / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power series, accurate for small arguments.
    fn j_series(n: u32, x: f64) -> f64 {
        let mut term = (x / 2.0).powi(n as i32);
        for k in 1..=n {
            term /= k as f64;
        }
        let mut s = term;
        for k in 1..80 {
            term *= -(x * x / 4.0) / (k as f64 * (k + n) as f64);
            s += term;
        }
        s
    }

    #[test]
    fn bessel_matches_series_at_small_argument() {
        for &x in &[0.0, 0.1, 1.0, 2.5, 5.0, 8.0] {
            assert!((bessel_j0(x) - j_series(0, x)).abs() < 1e-13, "J0({x})");
            assert!((bessel_j1(x) - j_series(1, x)).abs() < 1e-13, "J1({x})");
        }
    }

    #[test]
    fn bessel_branches_agree_at_switch() {
        for &x in &[24.0, 25.0, 30.0] {
            assert!((bessel_trapezoid(0, x) - bessel_hankel(0, x)).abs() < 1e-13);
            assert!((bessel_trapezoid(1, x) - bessel_hankel(1, x)).abs() < 1e-13);
        }
    }

    #[test]
    fn bessel_known_values() {
        // First zero of J0 and tabulated J1(1).
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-14);
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j1(-1.0) + 0.440_050_585_744_933_5).abs() < 1e-14);
    }

    #[test]
    fn e1_known_values() {
        assert!((exp_int_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((exp_int_e1(0.1) - 1.822_923_958_419_390_7).abs() < 1e-13);
        assert!((exp_int_e1(5.0) - 1.148_295_591_275_325_9e-3).abs() < 1e-16);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(&xs), 2.0);
    }
}
