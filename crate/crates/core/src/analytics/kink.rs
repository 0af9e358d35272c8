//! Domain wall of the elliptic sine-Gordon equation phi'' = m^2 sin(phi)
//! with phi(0) = 2 pi and phi(y_max) = 0, solved on a uniform grid.

use crate::error::{invalid, Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinkOptions {
    /// Domain length in units of 1/m.
    pub y_max_m: f64,
    /// Grid spacing in units of 1/m.
    pub h_m: f64,
    /// Newton convergence threshold on the update.
    pub tol: f64,
}

impl Default for KinkOptions {
    fn default() -> Self {
        Self { y_max_m: 40.0, h_m: 0.01, tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KinkSolution {
    pub m: f64,
    pub g: f64,
    pub n: u32,
    pub y0: f64,
    pub y: Vec<f64>,
    pub phi: Vec<f64>,
    /// int [phi'^2/2 + m^2 (1 - cos phi)] dy.
    pub energy: f64,
    /// (g/12)(N - 1/N) times the energy.
    pub action_per_area: f64,
    /// action_per_area / (N - 1).
    pub entropy_density: f64,
    /// Max |phi'' - m^2 sin(phi)| with phi'' from a five-point stencil.
    pub residual: f64,
    /// Max deviation from 4 arctan(exp(-m (y - y0))).
    pub profile_error: f64,
}

/// Analytic wall centred at y0, decreasing from 2 pi to 0.
pub fn kink_profile(m: f64, y0: f64, y: f64) -> f64 {
    4.0 * (-m * (y - y0)).exp().atan()
}

/// Solves the Numerov discretization
/// (phi_{i+1} - 2 phi_i + phi_{i-1})/h^2 = (m^2/12)(sin phi_{i+1} + 10 sin phi_i + sin phi_{i-1})
/// by damped Newton iteration with a tridiagonal Jacobian, the centre held at pi.
pub fn sine_gordon_kink(m: f64, g: f64, n: u32, o: &KinkOptions) -> Result<KinkSolution> {
    if !(m > 0.0 && g > 0.0) || n < 2 {
        return invalid("sine_gordon_kink requires m, g > 0 and N >= 2");
    }
    if o.y_max_m < 20.0 {
        return invalid("y_max must be at least 20/m");
    }
    let y_max = o.y_max_m / m;
    // Even number of intervals so the centre is a grid node.
    let intervals = 2 * ((y_max / (o.h_m / m)) / 2.0).round() as usize;
    let h = y_max / intervals as f64;
    let y0 = 0.5 * y_max;
    let ys: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
    // Smooth step from 2 pi to 0 as the starting guess.
    let mut phi: Vec<f64> = ys.iter().map(|y| PI * (1.0 - (0.5 * m * (y - y0)).tanh())).collect();
    phi[0] = 2.0 * PI;
    phi[intervals] = 0.0;
    // Pinning the centre removes the translation zero mode.
    let centre = intervals / 2;
    phi[centre] = PI;
    let k = m * m * h * h / 12.0;
    let ni = intervals - 1;
    let (mut a, mut b, mut c, mut r) = (vec![0.0; ni], vec![0.0; ni], vec![0.0; ni], vec![0.0; ni]);
    let mut converged = false;
    for _ in 0..100 {
        for j in 0..ni {
            let i = j + 1;
            if i == centre {
                (a[j], b[j], c[j], r[j]) = (0.0, 1.0, 0.0, 0.0);
                continue;
            }
            let (pm, p0, pp) = (phi[i - 1], phi[i], phi[i + 1]);
            r[j] = pp - 2.0 * p0 + pm - k * (pp.sin() + 10.0 * p0.sin() + pm.sin());
            a[j] = 1.0 - k * pm.cos();
            b[j] = -2.0 - 10.0 * k * p0.cos();
            c[j] = 1.0 - k * pp.cos();
        }
        let dx = solve_tridiagonal(&a, &b, &c, &r);
        let step = dx.iter().fold(0.0f64, |s, d| s.max(d.abs()));
        let damp = if step > 0.5 { 0.5 / step } else { 1.0 };
        for j in 0..ni {
            phi[j + 1] -= damp * dx[j];
        }
        if step < o.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence("Newton iteration for the kink did not converge".into()));
    }

    // Energy from fourth-order derivatives and the composite Simpson rule.
    let dphi: Vec<f64> = (0..=intervals).map(|i| derivative(&phi, i, h)).collect();
    let density: Vec<f64> =
        phi.iter().zip(&dphi).map(|(p, d)| 0.5 * d * d + m * m * (1.0 - p.cos())).collect();
    let mut energy = density[0] + density[intervals];
    for (i, e) in density.iter().enumerate().take(intervals).skip(1) {
        energy += if i % 2 == 1 { 4.0 * e } else { 2.0 * e };
    }
    energy *= h / 3.0;

    let mut residual: f64 = 0.0;
    for i in 2..phi.len() - 2 {
        let d2 = (-phi[i - 2] + 16.0 * phi[i - 1] - 30.0 * phi[i] + 16.0 * phi[i + 1] - phi[i + 2]) / (12.0 * h * h);
        residual = residual.max((d2 - m * m * phi[i].sin()).abs());
    }
    let profile_error = ys.iter().zip(&phi).fold(0.0f64, |e, (y, p)| e.max((p - kink_profile(m, y0, *y)).abs()));
    let nf = n as f64;
    let action = g / 12.0 * (nf - 1.0 / nf) * energy;
    Ok(KinkSolution {
        m,
        g,
        n,
        y0,
        y: ys,
        phi,
        energy,
        action_per_area: action,
        entropy_density: action / (nf - 1.0),
        residual,
        profile_error,
    })
}

/// Fourth-order first derivative, one-sided at the ends.
fn derivative(f: &[f64], i: usize, h: f64) -> f64 {
    let n = f.len() - 1;
    if i >= 2 && i + 2 <= n {
        (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
    } else if i < 2 {
        (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3] - 3.0 * f[i + 4]) / (12.0 * h)
    } else {
        (25.0 * f[i] - 48.0 * f[i - 1] + 36.0 * f[i - 2] - 16.0 * f[i - 3] + 3.0 * f[i - 4]) / (12.0 * h)
    }
}

/// Thomas algorithm for a_j x_{j-1} + b_j x_j + c_j x_{j+1} = r_j.
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut rp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    rp[0] = r[0] / b[0];
    for j in 1..n {
        let den = b[j] - a[j] * cp[j - 1];
        cp[j] = c[j] / den;
        rp[j] = (r[j] - a[j] * rp[j - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rp[n - 1];
    for j in (0..n - 1).rev() {
        x[j] = rp[j] - cp[j] * x[j + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kink_energy_is_eight_m() {
        for &m in &[0.5, 1.0, 2.0] {
            let k = sine_gordon_kink(m, 1.0, 2, &KinkOptions::default()).unwrap();
            assert!((k.energy / (8.0 * m) - 1.0).abs() < 1e-6, "m={m}: {}", k.energy);
            assert!(k.residual < 1e-6, "m={m}: residual {}", k.residual);
            assert!(k.profile_error < 1e-6, "m={m}: profile {}", k.profile_error);
        }
    }

    #[test]
    fn boundary_values_and_centre() {
        let k = sine_gordon_kink(1.0, 1.0, 3, &KinkOptions::default()).unwrap();
        assert!((k.phi[0] - 2.0 * PI).abs() < 1e-6);
        assert!(k.phi.last().unwrap().abs() < 1e-6);
        let c = k.phi.len() / 2;
        assert_eq!(k.y[c], k.y0);
        assert!((k.phi[c] - PI).abs() < 1e-12);
        assert!((kink_profile(1.0, 0.0, 0.0) - PI).abs() < 1e-15);
    }

    #[test]
    fn action_prefactors() {
        let k = sine_gordon_kink(1.0, 1.0, 2, &KinkOptions::default()).unwrap();
        assert!((k.action_per_area - 1.0).abs() < 1e-3);
        for n in [2u32, 3, 4] {
            let (m, g) = (0.7, 1.3);
            let k = sine_gordon_kink(m, g, n, &KinkOptions::default()).unwrap();
            let nf = n as f64;
            let expect = 2.0 / 3.0 * (nf - 1.0 / nf) * g * m;
            assert!((k.action_per_area / expect - 1.0).abs() < 1e-3);
            assert!((k.entropy_density / (2.0 / 3.0 * (1.0 + 1.0 / nf) * g * m) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(sine_gordon_kink(0.0, 1.0, 2, &KinkOptions::default()).is_err());
        assert!(sine_gordon_kink(1.0, 1.0, 1, &KinkOptions::default()).is_err());
        assert!(sine_gordon_kink(1.0, 1.0, 2, &KinkOptions { y_max_m: 10.0, ..Default::default() }).is_err());
    }
}
