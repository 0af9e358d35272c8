//! Equal-time density correlator on a ring and the weak-localization analysis
//! of the running coupling g(q) = C(q)/q.

use crate::error::{invalid, Error, Result};
use crate::special::linear_fit;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Connected correlator C(x), x = 0..L, translation-averaged over the ring.
pub fn correlator_x(d: &DMatrix<C64>) -> Vec<f64> {
    let l = d.nrows();
    let mut c = vec![0.0; l];
    for x0 in 0..l {
        let n = d[(x0, x0)].re;
        c[0] += n * (1.0 - n);
        for (x, cx) in c.iter_mut().enumerate().skip(1) {
            *cx -= d[((x0 + x) % l, x0)].norm_sqr();
        }
    }
    for v in c.iter_mut() {
        *v /= l as f64;
    }
    c
}

/// C(q_k) = sum_x C(x) e^{-i q_k x} for q_k = 2 pi k / L, k = 1..=L/2.
pub fn correlator_q(cx: &[f64]) -> Vec<f64> {
    let l = cx.len();
    (1..=l / 2)
        .map(|k| {
            let q = 2.0 * PI * k as f64 / l as f64;
            cx.iter().enumerate().map(|(x, c)| c * (q * x as f64).cos()).sum()
        })
        .collect()
}

/// g(q_k) = C(q_k)/q_k.
pub fn coupling_g(cq: &[f64], l: usize) -> Vec<f64> {
    cq.iter()
        .enumerate()
        .map(|(i, c)| c / (2.0 * PI * (i + 1) as f64 / l as f64))
        .collect()
}

/// Collapse window in s = q ell0 for the crossover fit.
pub const WL_FIT_WINDOW: (f64, f64) = (0.5, 3.0);
/// Weak-localization regression uses s below this value.
pub const WL_SLOPE_CUTOFF: f64 = 0.5;
const MAX_COLLAPSE_RESIDUAL: f64 = 0.2;

/// Crossover from the diffusive plateau g0 to the ballistic tail g0/(2s).
pub fn g_reference(s: f64, p: f64) -> f64 {
    (1.0 + (2.0 * s).powf(p)).powf(-1.0 / p)
}

/// Measured coupling for one measurement rate.
#[derive(Clone, Debug, PartialEq)]
pub struct GCurve {
    pub gamma: f64,
    pub ell0: f64,
    pub g0: f64,
    pub q: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossoverFit {
    pub p: f64,
    /// Root-mean-square relative deviation of the collapsed data from the fit.
    pub residual: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WlCurve {
    pub gamma: f64,
    pub s: Vec<f64>,
    pub ln_inv_s: Vec<f64>,
    pub delta_g: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakLocalization {
    pub fit: CrossoverFit,
    pub curves: Vec<WlCurve>,
    /// Slope of -delta g against ln(1/s), pooled over all curves with s < 0.5.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn collapse_residual(curves: &[GCurve], window: (f64, f64), p: f64) -> (f64, usize) {
    let mut acc = 0.0;
    let mut n = 0;
    for c in curves {
        for (q, g) in c.q.iter().zip(&c.g) {
            let s = q * c.ell0;
            if s >= window.0 && s <= window.1 {
                let r = g_reference(s, p);
                acc += ((g / c.g0 - r) / r).powi(2);
                n += 1;
            }
        }
    }
    if n == 0 {
        (f64::INFINITY, 0)
    } else {
        ((acc / n as f64).sqrt(), n)
    }
}

/// Fit the crossover exponent p on the collapsed data by golden-section search.
pub fn fit_crossover(curves: &[GCurve], window: (f64, f64)) -> Result<CrossoverFit> {
    let (_, n) = collapse_residual(curves, window, 2.0);
    if n == 0 {
        return Err(Error::FitFailure("no data inside the collapse window".into()));
    }
    let f = |p: f64| collapse_residual(curves, window, p).0;
    let (mut a, mut b) = (0.3_f64, 12.0_f64);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if (b - a) < 1e-10 {
            break;
        }
    }
    let p = 0.5 * (a + b);
    let residual = f(p);
    if !(residual <= MAX_COLLAPSE_RESIDUAL) {
        return Err(Error::FitFailure(format!(
            "collapse residual {residual:.3} exceeds {MAX_COLLAPSE_RESIDUAL}"
        )));
    }
    Ok(CrossoverFit { p, residual, n_points: n })
}

/// delta g(q) = g(q) - g0 g_ref(q ell0) after fitting g_ref on the collapse window.
pub fn weak_localization_delta(curves: &[GCurve]) -> Result<WeakLocalization> {
    let mut gammas: Vec<f64> = curves.iter().map(|c| c.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    if gammas.len() < 2 {
        return invalid("weak-localization analysis needs at least two measurement rates");
    }
    for c in curves {
        if c.q.len() != c.g.len() || !(c.ell0 > 0.0) || !(c.g0 > 0.0) {
            return invalid("malformed coupling curve");
        }
    }
    let fit = fit_crossover(curves, WL_FIT_WINDOW)?;
    let mut out = Vec::with_capacity(curves.len());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for c in curves {
        let mut w = WlCurve { gamma: c.gamma, s: vec![], ln_inv_s: vec![], delta_g: vec![] };
        for (q, g) in c.q.iter().zip(&c.g) {
            let s = q * c.ell0;
            let dg = g - c.g0 * g_reference(s, fit.p);
            w.s.push(s);
            w.ln_inv_s.push((1.0 / s).ln());
            w.delta_g.push(dg);
            if s < WL_SLOPE_CUTOFF {
                xs.push((1.0 / s).ln());
                ys.push(-dg);
            }
        }
        out.push(w);
    }
    if xs.len() < 2 {
        return Err(Error::FitFailure("fewer than two points below the slope cutoff".into()));
    }
    let (intercept, slope, r_squared) = linear_fit(&xs, &ys);
    Ok(WeakLocalization { fit, curves: out, slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_pure_d;
    use super::*;

    #[test]
    fn correlator_sums_to_zero_for_fixed_particle_number() {
        let d = random_pure_d(16, 7, 8);
        let c = correlator_x(&d);
        assert!(c.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn uncorrelated_diagonal_state() {
        // Diagonal D with n0 on every site: C(x) = n0(1-n0) delta_x0.
        let d = DMatrix::from_diagonal_element(10, 10, C64::new(0.3, 0.0));
        let c = correlator_x(&d);
        assert!((c[0] - 0.21).abs() < 1e-15);
        assert!(c[1..].iter().all(|&v| v == 0.0));
        let cq = correlator_q(&c);
        assert!(cq.iter().all(|&v| (v - 0.21).abs() < 1e-14));
    }

    #[test]
    fn reference_limits() {
        assert!((g_reference(1e-6, 2.0) - 1.0).abs() < 1e-9);
        let s = 1e4;
        assert!((g_reference(s, 2.0) * 2.0 * s - 1.0).abs() < 1e-6);
    }

    fn synthetic(gamma: f64, p: f64, wl: f64) -> GCurve {
        let ell0 = 2f64.sqrt() / (2.0 * gamma);
        let g0 = 2f64.sqrt() * 0.25 / gamma;
        let l = 512;
        let q: Vec<f64> = (1..=l / 2).map(|k| 2.0 * PI * k as f64 / l as f64).collect();
        let g = q
            .iter()
            .map(|q| {
                let s = q * ell0;
                let corr = if s < 0.5 { -wl * (0.5 / s).ln() } else { 0.0 };
                g0 * g_reference(s, p) + corr
            })
            .collect();
        GCurve { gamma, ell0, g0, q, g }
    }

    #[test]
    fn exact_reference_gives_zero_delta() {
        let curves = vec![synthetic(0.2, 1.7, 0.0), synthetic(0.3, 1.7, 0.0)];
        let wl = weak_localization_delta(&curves).unwrap();
        assert!((wl.fit.p - 1.7).abs() < 1e-6);
        for c in &wl.curves {
            assert!(c.delta_g.iter().all(|d| d.abs() < 1e-6));
        }
        assert!(wl.slope.abs() < 1e-6);
    }

    #[test]
    fn recovers_injected_log_slope() {
        let k = 1.0 / (2.0 * PI);
        let curves = vec![synthetic(0.1, 2.0, k), synthetic(0.2, 2.0, k)];
        let wl = weak_localization_delta(&curves).unwrap();
        assert!((wl.slope - k).abs() < 1e-6, "slope {}", wl.slope);
    }

    #[test]
    fn rejects_single_rate_and_bad_collapse() {
        assert!(weak_localization_delta(&[synthetic(0.2, 2.0, 0.0)]).is_err());
        let mut bad = synthetic(0.2, 2.0, 0.0);
        for g in bad.g.iter_mut() {
            *g *= 3.0;
        }
        let r = weak_localization_delta(&[bad, synthetic(0.3, 2.0, 0.0)]);
        assert!(matches!(r, Err(Error::FitFailure(_))));
    }
}
