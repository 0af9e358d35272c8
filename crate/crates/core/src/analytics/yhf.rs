//! Hartree-Fock mass integral Y_HF = (V^2/J) int_0^inf dtau e^{-z tau} I(tau),
//! I(tau) = 2 d I0(tau)^(d-1) I1(tau).

use crate::error::{invalid, Error, Result};
use crate::special::{bessel_j0, bessel_j1, CompositeRule, NeumaierSum};
use std::f64::consts::PI;

const ANGLE_ORDER: usize = 16;
const TAU_ORDER: usize = 16;
/// Width of the quadrature panels in tau.
const TAU_PANEL: f64 = 4.0;
/// Candidate tail switch points; the first where the numeric and asymptotic
/// forms agree within 1% is used, the last otherwise.
const TAU_SWITCH_CANDIDATES: [f64; 7] = [32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0];
const SWITCH_AGREEMENT: f64 = 0.01;

/// (2/pi) int_0^{pi/2} f(tau cos(theta)) dtheta, panels scaled with tau.
fn angle_average(tau: f64, f: impl Fn(f64) -> f64) -> f64 {
    let panels = 4 + (tau / 8.0).ceil() as usize;
    let rule = CompositeRule::new(0.0, PI / 2.0, panels, ANGLE_ORDER);
    2.0 / PI * rule.integrate(|th| f(tau * th.cos()))
}

fn j1_over_x(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 - x * x / 16.0
    } else {
        bessel_j1(x) / x
    }
}

/// I0(tau) = int dk/2pi J0^2(tau cos(k/2)).
pub fn i0(tau: f64) -> f64 {
    if tau == 0.0 {
        // Constant integrand.
        return 1.0;
    }
    angle_average(tau, |x| bessel_j0(x).powi(2))
}

/// I1(tau) = int dk/2pi [J1(tau cos(k/2)) / (tau cos(k/2))]^2.
pub fn i1(tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.25;
    }
    angle_average(tau, |x| j1_over_x(x).powi(2))
}

pub fn i_tau(tau: f64, d: u32) -> f64 {
    let base = 2.0 * d as f64 * i1(tau);
    if d == 1 { base } else { base * i0(tau).powi(d as i32 - 1) }
}

/// Large-tau form d 2^(d+3) / (3 pi^(2d)) ln^(d-1)(tau) / tau^d.
pub fn i_tau_asymptotic(tau: f64, d: u32) -> f64 {
    let df = d as f64;
    df * 2f64.powi(d as i32 + 3) / (3.0 * PI.powi(2 * d as i32)) * tau.ln().powi(d as i32 - 1) / tau.powi(d as i32)
}

/// Cached I(tau) on the quadrature nodes of [0, tau_switch] plus the
/// matching factor of the asymptotic tail.
#[derive(Clone, Debug)]
pub struct YhfIntegrator {
    pub d: u32,
    pub tau_switch: f64,
    /// Window-averaged ratio numeric/asymptotic near tau_switch.
    pub tail_scale: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl YhfIntegrator {
    pub fn new(d: u32) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return invalid("Y_HF supports d in {1, 2, 3}");
        }
        let (mut nodes, mut weights, mut values) = (Vec::new(), Vec::new(), Vec::new());
        let mut covered = 0.0;
        let mut tau_switch = 0.0;
        let mut tail_scale = 1.0;
        // Extend the grid candidate by candidate; node values are reused by the window test.
        for &t in &TAU_SWITCH_CANDIDATES {
            let rule = CompositeRule::new(covered, t, ((t - covered) / TAU_PANEL) as usize, TAU_ORDER);
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push(x);
                weights.push(w);
                values.push(i_tau(x, d));
            }
            covered = t;
            let (mut num, mut den) = (NeumaierSum::default(), NeumaierSum::default());
            for ((&x, &w), &v) in nodes.iter().zip(&weights).zip(&values) {
                if x >= 0.5 * t {
                    num.add(w * v);
                    den.add(w * i_tau_asymptotic(x, d));
                }
            }
            tau_switch = t;
            tail_scale = num.value() / den.value();
            if (tail_scale - 1.0).abs() < SWITCH_AGREEMENT {
                break;
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence("non-finite I(tau) on the quadrature grid".into()));
        }
        Ok(Self { d, tau_switch, tail_scale, nodes, weights, values })
    }

    /// int_0^inf dtau e^{-z tau} I(tau).
    pub fn integral(&self, z: f64) -> Result<f64> {
        if !(z > 0.0 && z <= 1.0) {
            return invalid(format!("z = {z} must lie in (0, 1]"));
        }
        let mut acc = NeumaierSum::default();
        for ((t, w), v) in self.nodes.iter().zip(&self.weights).zip(&self.values) {
            acc.add(w * (-z * t).exp() * v);
        }
        acc.add(self.tail_scale * self.asymptotic_tail(z));
        Ok(acc.value())
    }

    /// int_{tau_s}^inf e^{-z tau} I_asym(tau) dtau, on a logarithmic grid.
    fn asymptotic_tail(&self, z: f64) -> f64 {
        let ts = self.tau_switch;
        let upper = ts + 60.0 / z;
        let rule = CompositeRule::new(ts.ln(), upper.ln(), 400, ANGLE_ORDER);
        rule.integrate(|s| {
            let t = s.exp();
            (-z * t).exp() * i_tau_asymptotic(t, self.d) * t
        })
    }
}

/// Y_HF for z = gamma/J in dimension d.
pub fn yhf(z: f64, d: u32, v: f64, j: f64) -> Result<f64> {
    if !(j > 0.0) {
        return invalid("J must be positive");
    }
    Ok(v * v / j * YhfIntegrator::new(d)?.integral(z)?)
}
