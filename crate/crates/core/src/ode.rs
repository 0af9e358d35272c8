//! Dormand-Prince 5(4) integrator with step-size control.
//!
//! The state is a slice of any scalar with a magnitude, so the same code
//! drives the real RG flows and the complex Hartree-Fock equations.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Sub};

pub trait OdeScalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl OdeScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// How the scaled component errors of a trial step are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorNorm {
    /// Root mean square over components.
    Rms,
    /// Largest component: every component meets the tolerance.
    Max,
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Initial step guess; zero selects max(h_max, span)/100.
    pub h_init: f64,
    pub max_steps: usize,
    pub norm: ErrorNorm,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-8,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            h_init: 0.0,
            max_steps: 10_000_000,
            norm: ErrorNorm::Rms,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Reusable integrator with preallocated stage buffers.
pub struct Dopri5<T: OdeScalar> {
    pub opts: OdeOptions,
    k: [Vec<T>; 7],
    tmp: Vec<T>,
    y_new: Vec<T>,
    /// Last accepted step size, carried across calls.
    pub h_last: f64,
    pub accepted: usize,
    pub rejected: usize,
}

/// Outcome of an integration that may stop at an event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop {
    Reached,
    Event(f64),
}

impl<T: OdeScalar> Dopri5<T> {
    pub fn new(n: usize, opts: OdeOptions) -> Self {
        let z = || vec![T::zero(); n];
        Self {
            opts,
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            y_new: z(),
            h_last: opts.h_init,
            accepted: 0,
            rejected: 0,
        }
    }

    /// One trial step of size h from (t, y). Writes the result to `y_new`
    /// and returns the scaled error norm. Requires k[0] = f(t, y).
    fn trial<F: FnMut(f64, &[T], &mut [T])>(&mut self, f: &mut F, t: f64, y: &[T], h: f64) -> f64 {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(t + h, tmp, k6);
        let y_new = &mut self.y_new;
        for i in 0..n {
            y_new[i] = y[i] + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * h;
        }
        f(t + h, y_new, k7);
        let (mut acc, mut max) = (0.0, 0.0f64);
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = self.opts.atol + self.opts.rtol * y[i].magnitude().max(y_new[i].magnitude());
            let r = e.magnitude() / sc;
            acc += r * r;
            max = max.max(r);
        }
        match self.opts.norm {
            ErrorNorm::Rms => (acc / n.max(1) as f64).sqrt(),
            ErrorNorm::Max => max,
        }
    }

    /// Integrate y from t0 to t1 in place.
    pub fn integrate<F>(&mut self, mut f: F, t0: f64, t1: f64, y: &mut [T]) -> Result<()>
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        self.integrate_with(&mut f, t0, t1, y, |_, _| f64::INFINITY, |_, _| {})
            .map(|_| ())
    }

    /// Integrate from t0 toward t1, calling `observe` after every accepted
    /// step and stopping early at the first downward zero crossing of `event`.
    pub fn integrate_with<F, G, O>(
        &mut self,
        f: &mut F,
        t0: f64,
        t1: f64,
        y: &mut [T],
        event: G,
        mut observe: O,
    ) -> Result<Stop>
    where
        F: FnMut(f64, &[T], &mut [T]),
        G: Fn(f64, &[T]) -> f64,
        O: FnMut(f64, &[T]),
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(Stop::Reached);
        }
        let opts = self.opts;
        let mut h = if self.h_last > 0.0 {
            self.h_last
        } else if opts.h_init > 0.0 {
            opts.h_init
        } else {
            span.min(opts.h_max) / 100.0
        };
        h = h.min(opts.h_max);
        let mut t = t0;
        let mut g_prev = event(t, y);
        let mut ybak = y.to_vec();
        f(t, y, &mut self.k[0]);
        let mut steps = 0usize;
        while t < t1 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::NoConvergence(format!("step budget exhausted at t = {t}")));
            }
            let last = t + h * (1.0 + 1e-12) >= t1;
            let hs = if last { t1 - t } else { h };
            let err = self.trial(f, t, y, hs);
            if err.is_finite() && err <= 1.0 {
                ybak.copy_from_slice(y);
                y.copy_from_slice(&self.y_new);
                let t_prev = t;
                t = if last { t1 } else { t + hs };
                self.accepted += 1;
                let g = event(t, y);
                if g_prev > 0.0 && g <= 0.0 {
                    let t_ev = self.locate_event(f, t_prev, &ybak, hs, &event, g_prev, g, y);
                    observe(t_ev, y);
                    return Ok(Stop::Event(t_ev));
                }
                g_prev = g;
                observe(t, y);
                // FSAL: the last stage is f at the new point.
                let k7 = std::mem::take(&mut self.k[6]);
                self.k[0].copy_from_slice(&k7);
                self.k[6] = k7;
                let fac = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
                if !last {
                    h = (hs * fac.clamp(0.2, 5.0)).min(opts.h_max);
                    self.h_last = h;
                } else {
                    self.h_last = (h * fac.clamp(0.2, 5.0)).min(opts.h_max).max(hs);
                }
            } else {
                self.rejected += 1;
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.1) } else { 0.1 };
                h = hs * fac;
                if h < opts.h_min {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        Ok(Stop::Reached)
    }

    /// Illinois root search on the step fraction, re-stepping from `y0`.
    #[allow(clippy::too_many_arguments)]
    fn locate_event<F, G>(
        &mut self,
        f: &mut F,
        t0: f64,
        y0: &[T],
        h: f64,
        event: &G,
        g0: f64,
        g1: f64,
        y_out: &mut [T],
    ) -> f64
    where
        F: FnMut(f64, &[T], &mut [T]),
        G: Fn(f64, &[T]) -> f64,
    {
        let (mut a, mut b) = (0.0, 1.0);
        let (mut ga, mut gb) = (g0, g1);
        let mut side = 0i32;
        let mut best = 1.0;
        for _ in 0..100 {
            let c = (a * gb - b * ga) / (gb - ga);
            let c = if c.is_finite() && c > a && c < b { c } else { 0.5 * (a + b) };
            f(t0, y0, &mut self.k[0]);
            self.trial(f, t0, y0, c * h);
            let gc = event(t0 + c * h, &self.y_new);
            best = c;
            if gc.abs() < 1e-14 || (b - a) < 1e-15 {
                break;
            }
            if gc > 0.0 {
                a = c;
                ga = gc;
                if side == -1 {
                    gb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                gb = gc;
                if side == 1 {
                    ga *= 0.5;
                }
                side = 1;
            }
        }
        y_out.copy_from_slice(&self.y_new);
        t0 + best * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_tolerance() {
        let mut ode = Dopri5::new(1, OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() });
        let mut y = [1.0];
        ode.integrate(|_, y, dy| dy[0] = -y[0], 0.0, 5.0, &mut y).unwrap();
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn complex_rotation_preserves_norm() {
        let mut ode = Dopri5::new(1, OdeOptions { rtol: 1e-10, atol: 1e-12, h_max: 0.1, ..Default::default() });
        let mut y = [C64::new(1.0, 0.0)];
        ode.integrate(|_, y, dy| dy[0] = y[0] * C64::new(0.0, 2.0), 0.0, 3.0, &mut y).unwrap();
        let exact = C64::new(0.0, 6.0).exp();
        assert!((y[0] - exact).norm() < 1e-9);
    }

    #[test]
    fn event_located_on_linear_descent() {
        let mut ode = Dopri5::new(1, OdeOptions { rtol: 1e-12, atol: 1e-12, ..Default::default() });
        let mut y = [2.0];
        let stop = ode
            .integrate_with(&mut |_, _, dy: &mut [f64]| dy[0] = -0.5, 0.0, 10.0, &mut y, |_, y| y[0] - 1.0, |_, _| {})
            .unwrap();
        match stop {
            Stop::Event(t) => assert!((t - 2.0).abs() < 1e-12),
            Stop::Reached => panic!("event missed"),
        }
        assert!((y[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn respects_step_cap() {
        let mut ode = Dopri5::new(1, OdeOptions { h_max: 0.1, ..Default::default() });
        let mut y = [0.0];
        ode.integrate(|_, _, dy| dy[0] = 1.0, 0.0, 1.0, &mut y).unwrap();
        assert!(ode.accepted >= 10);
        assert!((y[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn max_norm_is_stricter_than_rms() {
        // One fast component among many idle ones: RMS dilutes its error.
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
            dy.iter_mut().for_each(|d| *d = 0.0);
            dy[0] = -3.0 * y[0];
        };
        let run = |norm| {
            let mut ode = Dopri5::new(64, OdeOptions { rtol: 1e-6, atol: 1e-6, norm, ..Default::default() });
            let mut y = [1.0; 64];
            ode.integrate(rhs, 0.0, 4.0, &mut y).unwrap();
            (ode.accepted, (y[0] - (-12.0f64).exp()).abs())
        };
        let (n_rms, e_rms) = run(ErrorNorm::Rms);
        let (n_max, e_max) = run(ErrorNorm::Max);
        assert!(n_max > n_rms);
        assert!(e_max < e_rms);
    }
}
