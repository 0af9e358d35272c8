//! Interaction length scale and the boundary ell_int(gamma, V) = ell_loc(gamma).

use super::flows::{flow_free, FreeFlowOptions};
use super::yhf::YhfIntegrator;
use crate::error::{invalid, Result};
use crate::model::{characteristic_scales, ModelParams};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InteractionScales {
    pub yhf: f64,
    /// Inverse interaction length; zero without interaction.
    pub m: f64,
    /// 1/m, absent when m = 0.
    pub ell_int: Option<f64>,
    /// Density entering the mass, taken equal to n0.
    pub rho: f64,
}

/// m = sqrt(2 n0 (1 - n0) Y_HF / D).
pub fn interaction_scales(p: &ModelParams, yhf: f64) -> Result<InteractionScales> {
    if !(yhf >= 0.0) || !yhf.is_finite() {
        return invalid(format!("Y_HF = {yhf} must be non-negative"));
    }
    let sc = characteristic_scales(p)?;
    let m = (2.0 * p.n0 * (1.0 - p.n0) * yhf / sc.ddiff).sqrt();
    Ok(InteractionScales { yhf, m, ell_int: if m > 0.0 { Some(1.0 / m) } else { None }, rho: p.n0 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseBoundaryOptions {
    /// Multiplies the localization length from the free flow.
    pub ell_loc_prefactor: f64,
    /// Multiplies 1/m.
    pub ell_int_prefactor: f64,
    pub g_stop: f64,
    /// Search window for ln V.
    pub ln_v_range: (f64, f64),
}

impl Default for PhaseBoundaryOptions {
    fn default() -> Self {
        Self { ell_loc_prefactor: 1.0, ell_int_prefactor: 1.0, g_stop: 1.0, ln_v_range: (-700.0, 10f64.ln()) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub gamma: f64,
    pub ln_ell_loc: f64,
    /// Critical interaction; None if no crossing lies in the search window.
    pub v_c: Option<f64>,
    pub ln_v_c: Option<f64>,
}

/// For each gamma solves ell_int(gamma, V) = ell_loc(gamma) for V by
/// bisection in ln V. The template supplies J1, J2 and n0; d = 1.
pub fn phase_boundary(gammas: &[f64], template: &ModelParams, o: &PhaseBoundaryOptions) -> Result<Vec<BoundaryPoint>> {
    if gammas.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
        return invalid("gamma grid must lie in (0, 1]");
    }
    if !(o.ell_loc_prefactor > 0.0 && o.ell_int_prefactor > 0.0) {
        return invalid("length prefactors must be positive");
    }
    let yi = YhfIntegrator::new(1)?;
    let j = template.j1.abs();
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let p = ModelParams { gamma, v: 1.0, ..template.clone() };
        let sc = characteristic_scales(&p)?;
        let free = flow_free(sc.g0, &FreeFlowOptions { ell0: sc.ell0, g_stop: o.g_stop, ..Default::default() })?;
        let ln_ell_loc = sc.ell0.ln() + free.curve.ln_ell.last().copied().unwrap_or(0.0) + o.ell_loc_prefactor.ln();
        // Y_HF scales as V^2, so m = V m1.
        let y1 = yi.integral(gamma / j)? / j;
        let m1 = interaction_scales(&p, y1)?.m;
        let f = |ln_v: f64| o.ell_int_prefactor.ln() - ln_v - m1.ln() - ln_ell_loc;
        let (mut lo, mut hi) = o.ln_v_range;
        let ln_v_c = if f(lo) > 0.0 && f(hi) < 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-13 * hi.abs().max(1.0) {
                    break;
                }
            }
            Some(0.5 * (lo + hi))
        } else {
            None
        };
        out.push(BoundaryPoint { gamma, ln_ell_loc, v_c: ln_v_c.map(f64::exp), ln_v_c });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::linear_fit;
    use std::f64::consts::PI;

    #[test]
    fn scales_without_interaction() {
        let p = ModelParams { gamma: 0.1, ..Default::default() };
        let s = interaction_scales(&p, 0.0).unwrap();
        assert_eq!(s.m, 0.0);
        assert!(s.ell_int.is_none());
        assert!(interaction_scales(&p, -1.0).is_err());
    }

    #[test]
    fn mass_formula() {
        // Nearest-neighbour chain: <v^2> = 2, D = 1/gamma.
        let p = ModelParams { gamma: 0.25, ..Default::default() };
        let s = interaction_scales(&p, 0.8).unwrap();
        assert!((s.m - (2.0 * 0.25 * 0.8 * 0.25f64).sqrt()).abs() < 1e-12);
        assert!((s.ell_int.unwrap() * s.m - 1.0).abs() < 1e-15);
    }

    #[test]
    fn regression_baseline() {
        let p = ModelParams { gamma: 0.1, v: 0.5, ..Default::default() };
        let y = super::super::yhf(0.1, 1, 0.5, 1.0).unwrap();
        let s = interaction_scales(&p, y).unwrap();
        assert!(s.m > 0.0 && s.m < 0.5);
        // m scales as sqrt(gamma) V up to the logarithm of J/gamma.
        let q = ModelParams { gamma: 0.1, v: 1.0, ..Default::default() };
        let t = interaction_scales(&q, super::super::yhf(0.1, 1, 1.0, 1.0).unwrap()).unwrap();
        assert!((t.m / s.m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interaction_length_scaling() {
        let yi = YhfIntegrator::new(1).unwrap();
        let gammas = [0.01, 0.02, 0.05, 0.1];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &g in &gammas {
            let p = ModelParams { gamma: g, ..Default::default() };
            let y = yi.integral(g).unwrap();
            let l = interaction_scales(&p, y).unwrap().ell_int.unwrap();
            // Remove the d = 1 logarithm: ell_int sqrt(ln(1/gamma)) ~ gamma^(-1/2).
            xs.push(g.ln());
            ys.push((l * (1.0 / g).ln().sqrt()).ln());
        }
        let (_, slope, _) = linear_fit(&xs, &ys);
        assert!((slope + 0.5).abs() < 0.1, "{slope}");
    }

    #[test]
    fn boundary_slope_and_monotonicity() {
        let gammas: Vec<f64> = (0..8).map(|k| 0.05 + 0.15 * k as f64 / 7.0).collect();
        let pts = phase_boundary(&gammas, &ModelParams::default(), &PhaseBoundaryOptions::default()).unwrap();
        let xs: Vec<f64> = pts.iter().map(|p| 1.0 / p.gamma).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.ln_v_c.unwrap() - 0.5 * p.gamma.ln()).collect();
        let (_, slope, _) = linear_fit(&xs, &ys);
        let expect = -(2f64).sqrt() * PI;
        assert!((slope / expect - 1.0).abs() < 0.15, "{slope}");
        assert!(pts.windows(2).all(|w| w[1].v_c.unwrap() > w[0].v_c.unwrap()));
    }

    #[test]
    fn prefactor_shift_is_uniform() {
        let gammas = [0.05, 0.1, 0.2];
        let a = phase_boundary(&gammas, &ModelParams::default(), &PhaseBoundaryOptions::default()).unwrap();
        let o = PhaseBoundaryOptions { ell_loc_prefactor: 2.0, ..Default::default() };
        let b = phase_boundary(&gammas, &ModelParams::default(), &o).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.ln_v_c.unwrap() - y.ln_v_c.unwrap() - 2f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn reports_missing_crossing() {
        let o = PhaseBoundaryOptions { ln_v_range: (-5.0, 0.0), ..Default::default() };
        let pts = phase_boundary(&[0.05], &ModelParams::default(), &o).unwrap();
        assert!(pts[0].v_c.is_none());
        assert!(phase_boundary(&[0.0], &ModelParams::default(), &o).is_err());
    }
}
