//! One-loop flows of the free and interacting theories and the BKT flow of
//! the charge sector, integrated in ln(ell).

use super::FLOW_RTOL;
use crate::error::{invalid, Error, Result};
use crate::model::SymmetryClass;
use crate::ode::{Dopri5, OdeOptions, Stop};
use serde::Serialize;
use std::f64::consts::PI;

/// Critical stiffness of the replicated BKT transition.
pub const G_C: f64 = 1.0 / PI;
/// Value of the conserved quantity on the separatrix, pi^3/3.
pub const BKT_SEPARATRIX: f64 = PI * PI * PI / 3.0;
const CRITICAL_BAND: f64 = 1e-9;

fn opts() -> OdeOptions {
    OdeOptions { rtol: FLOW_RTOL, atol: FLOW_RTOL * 1e-2, h_max: 0.5, h_init: 1e-3, ..Default::default() }
}

/// Sampled flow: ln(ell/ell0) and the state vector at each accepted step.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FlowCurve {
    pub ln_ell: Vec<f64>,
    pub state: Vec<Vec<f64>>,
}

impl FlowCurve {
    fn push(&mut self, t: f64, y: &[f64]) {
        self.ln_ell.push(t);
        self.state.push(y.to_vec());
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeFlowOptions {
    pub class: SymmetryClass,
    /// d - 1.
    pub eps: f64,
    /// Replica number.
    pub r: f64,
    pub ell0: f64,
    pub g_stop: f64,
    pub ell_max: f64,
}

impl Default for FreeFlowOptions {
    fn default() -> Self {
        Self { class: SymmetryClass::Aiii, eps: 0.0, r: 1.0, ell0: 1.0, g_stop: 1.0, ell_max: 1e300 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FreeFlow {
    pub curve: FlowCurve,
    /// Scale where G reaches g_stop; None if the flow never gets there.
    pub ell_loc: Option<f64>,
}

/// One-loop coefficient of the class: 1/(4 pi) for AIII, 1/(2 pi) for BDI.
fn class_coefficient(class: SymmetryClass) -> f64 {
    match class {
        SymmetryClass::Aiii => 1.0 / (4.0 * PI),
        SymmetryClass::Bdi => 1.0 / (2.0 * PI),
    }
}

/// dG/dln(ell) = eps G - R c_class until G <= g_stop or ell >= ell_max.
pub fn flow_free(g0: f64, o: &FreeFlowOptions) -> Result<FreeFlow> {
    if !(g0 > 0.0) || !(o.ell0 > 0.0) || !(o.ell_max > o.ell0) {
        return invalid("flow_free requires G0 > 0 and ell_max > ell0 > 0");
    }
    let c = o.r * class_coefficient(o.class);
    let mut curve = FlowCurve::default();
    curve.push(0.0, &[g0]);
    if g0 <= o.g_stop {
        return Ok(FreeFlow { curve, ell_loc: Some(o.ell0) });
    }
    let t_max = (o.ell_max / o.ell0).ln();
    let mut y = [g0];
    let mut ode = Dopri5::new(1, opts());
    let stop = ode.integrate_with(
        &mut |_, y: &[f64], dy: &mut [f64]| dy[0] = o.eps * y[0] - c,
        0.0,
        t_max,
        &mut y,
        |_, y| y[0] - o.g_stop,
        |t, y| curve.push(t, y),
    )?;
    match stop {
        Stop::Event(t) => Ok(FreeFlow { curve, ell_loc: Some(o.ell0 * t.exp()) }),
        Stop::Reached => {
            Err(Error::NoConvergence(format!("G stays above {} up to ell_max = {:e}", o.g_stop, o.ell_max)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractingRegime {
    /// G reached 1 first: localized, Gaussian-like behaviour.
    CouplingDominated,
    /// u reached 1 first: symmetry broken by the interaction.
    MassDominated,
}

impl InteractingRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractingRegime::CouplingDominated => "coupling-dominated",
            InteractingRegime::MassDominated => "mass-dominated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteractingFlow {
    pub regime: InteractingRegime,
    /// Stopping scale ell* in units of ell0.
    pub ell_star: f64,
    /// State columns: G, u.
    pub curve: FlowCurve,
}

/// dG/dln(ell) = (d-1) G - 1/(4 pi), dln(u)/dln(ell) = 1 - 7/(8 pi G);
/// stops at G <= 1 or u >= 1.
pub fn flow_interacting(g0: f64, u0: f64, d: u32, ell_max: f64) -> Result<InteractingFlow> {
    if !(g0 > 0.0) || !(u0 >= 0.0) || d == 0 {
        return invalid("flow_interacting requires G0 > 0, u0 >= 0 and d >= 1");
    }
    let eps = d as f64 - 1.0;
    if u0 == 0.0 {
        // Invariant subspace: the free class-AIII flow.
        let free = flow_free(g0, &FreeFlowOptions { eps, ell_max, ..Default::default() })?;
        let mut curve = FlowCurve::default();
        for (t, s) in free.curve.ln_ell.iter().zip(&free.curve.state) {
            curve.push(*t, &[s[0], 0.0]);
        }
        return Ok(InteractingFlow {
            regime: InteractingRegime::CouplingDominated,
            ell_star: free.ell_loc.unwrap_or(f64::INFINITY),
            curve,
        });
    }
    let mut curve = FlowCurve::default();
    curve.push(0.0, &[g0, u0]);
    if g0 <= 1.0 {
        return Ok(InteractingFlow { regime: InteractingRegime::CouplingDominated, ell_star: 1.0, curve });
    }
    if u0 >= 1.0 {
        return Ok(InteractingFlow { regime: InteractingRegime::MassDominated, ell_star: 1.0, curve });
    }
    // y = (G, ln u)
    let mut y = [g0, u0.ln()];
    let mut ode = Dopri5::new(2, opts());
    let stop = ode.integrate_with(
        &mut |_, y: &[f64], dy: &mut [f64]| {
            dy[0] = eps * y[0] - 1.0 / (4.0 * PI);
            dy[1] = 1.0 - 7.0 / (8.0 * PI * y[0]);
        },
        0.0,
        ell_max.ln(),
        &mut y,
        |_, y| (y[0] - 1.0).min(-y[1]),
        |t, y| curve.push(t, &[y[0], y[1].exp()]),
    )?;
    match stop {
        Stop::Event(t) => {
            let regime =
                if -y[1] <= y[0] - 1.0 { InteractingRegime::MassDominated } else { InteractingRegime::CouplingDominated };
            Ok(InteractingFlow { regime, ell_star: t.exp(), curve })
        }
        Stop::Reached => Err(Error::NoConvergence(format!("neither G <= 1 nor u >= 1 by ell_max = {ell_max:e}"))),
    }
}

/// Conserved quantity c = kappa^2/2 + (3 pi g - 2)/(3 g^3) of the BKT flow.
pub fn bkt_constant(g: f64, kappa: f64) -> f64 {
    0.5 * kappa * kappa + (3.0 * PI * g - 2.0) / (3.0 * g.powi(3))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BktSide {
    Delocalized,
    Localized,
    Critical,
}

impl BktSide {
    pub fn as_str(self) -> &'static str {
        match self {
            BktSide::Delocalized => "delocalized",
            BktSide::Localized => "localized",
            BktSide::Critical => "critical",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BktFlow {
    pub side: BktSide,
    pub c: f64,
    /// Fixed-point stiffness on the delocalized side.
    pub g_infinity: Option<f64>,
    /// Scale (units of the initial scale) where kappa reaches 1 on the localized side.
    pub ell_c: Option<f64>,
    /// State columns: g, kappa.
    pub curve: FlowCurve,
    /// Largest |c - c0| along the integrated curve.
    pub max_c_drift: f64,
}

/// Root g > 1/pi of (3 pi g - 2)/(3 g^3) = c for 0 < c < pi^3/3.
pub fn bkt_g_infinity(c: f64) -> Result<f64> {
    if !(c > 0.0 && c < BKT_SEPARATRIX - CRITICAL_BAND) {
        return Err(Error::NoConvergence(format!("no delocalized fixed point for c = {c}")));
    }
    let f = |g: f64| bkt_constant(g, 0.0) - c;
    let mut lo = G_C;
    let mut hi = 2.0 * G_C;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// dkappa/dln(ell) = 2 (1 - pi g) kappa, dg/dln(ell) = -kappa^2 g^4 over
/// ln(ell) in [0, ln_ell_max]; localized flows stop where kappa = 1.
pub fn flow_bkt(g0: f64, kappa0: f64, ln_ell_max: f64) -> Result<BktFlow> {
    flow_bkt_banded(g0, kappa0, ln_ell_max, CRITICAL_BAND)
}

/// As [`flow_bkt`], with initial conditions within the relative `band` of
/// the critical point or separatrix classified as critical.
pub fn flow_bkt_banded(g0: f64, kappa0: f64, ln_ell_max: f64, band: f64) -> Result<BktFlow> {
    if !(band >= 0.0) {
        return invalid("critical band must be non-negative");
    }
    if !(g0 > 0.0) || !(kappa0 >= 0.0) || !(ln_ell_max > 0.0) {
        return invalid("flow_bkt requires g0 > 0, kappa0 >= 0 and a positive range");
    }
    let c = bkt_constant(g0, kappa0);
    let side = if kappa0 == 0.0 {
        if (g0 - G_C).abs() <= band * G_C {
            BktSide::Critical
        } else if g0 > G_C {
            BktSide::Delocalized
        } else {
            BktSide::Localized
        }
    } else if (c - BKT_SEPARATRIX).abs() <= band * BKT_SEPARATRIX {
        BktSide::Critical
    } else if c < BKT_SEPARATRIX && g0 > G_C {
        BktSide::Delocalized
    } else {
        BktSide::Localized
    };
    let mut curve = FlowCurve::default();
    curve.push(0.0, &[g0, kappa0]);
    if kappa0 >= 1.0 && side == BktSide::Localized {
        // Already at the strong-coupling scale.
        return Ok(BktFlow { side, c, g_infinity: None, ell_c: Some(1.0), curve, max_c_drift: 0.0 });
    }
    let mut max_drift: f64 = 0.0;
    let mut y = [g0, kappa0];
    let mut ode = Dopri5::new(2, opts());
    let stop = ode.integrate_with(
        &mut |_, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[1] * y[1] * y[0].powi(4);
            dy[1] = 2.0 * (1.0 - PI * y[0]) * y[1];
        },
        0.0,
        ln_ell_max,
        &mut y,
        |_, y| 1.0 - y[1],
        |t, y| {
            max_drift = max_drift.max((bkt_constant(y[0], y[1]) - c).abs());
            curve.push(t, y);
        },
    )?;
    let ell_c = match stop {
        Stop::Event(t) if side == BktSide::Localized => Some(t.exp()),
        _ => None,
    };
    let g_infinity = match side {
        BktSide::Delocalized if kappa0 == 0.0 => Some(g0),
        BktSide::Delocalized => Some(bkt_g_infinity(c)?),
        BktSide::Critical => Some(G_C),
        BktSide::Localized => None,
    };
    Ok(BktFlow { side, c, g_infinity, ell_c, curve, max_c_drift: max_drift })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flow_matches_closed_form() {
        let o = FreeFlowOptions { g_stop: 0.0, ..Default::default() };
        let f = flow_free(1.0, &o).unwrap();
        assert!((f.ell_loc.unwrap() / (4.0 * PI).exp() - 1.0).abs() < 1e-8);
        for (t, s) in f.curve.ln_ell.iter().zip(&f.curve.state) {
            assert!((s[0] - (1.0 - t / (4.0 * PI))).abs() < 1e-8);
        }
        let b = flow_free(1.0, &FreeFlowOptions { class: SymmetryClass::Bdi, ..o }).unwrap();
        assert!((b.ell_loc.unwrap() - 535.491_655_524_764_7).abs() < 1e-8 * 535.5);
    }

    #[test]
    fn free_flow_default_stop_and_errors() {
        let f = flow_free(3.0, &FreeFlowOptions { ell0: 2.0, ..Default::default() }).unwrap();
        assert!((f.ell_loc.unwrap() / (2.0 * (8.0 * PI).exp()) - 1.0).abs() < 1e-8);
        // In d = 2 a large coupling flows to infinity.
        let d2 = FreeFlowOptions { eps: 1.0, ell_max: 1e6, ..Default::default() };
        assert!(matches!(flow_free(2.0, &d2), Err(Error::NoConvergence(_))));
        assert!(flow_free(-1.0, &FreeFlowOptions::default()).is_err());
    }

    #[test]
    fn replica_factor_scales_rate() {
        let o = FreeFlowOptions { g_stop: 0.0, r: 2.0, ..Default::default() };
        assert!((flow_free(1.0, &o).unwrap().ell_loc.unwrap().ln() - 2.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn interacting_flow_without_mass_is_free_flow() {
        let a = flow_interacting(2.0, 0.0, 1, 1e300).unwrap();
        let b = flow_free(2.0, &FreeFlowOptions::default()).unwrap();
        assert_eq!(a.regime, InteractingRegime::CouplingDominated);
        assert_eq!(a.ell_star, b.ell_loc.unwrap());
        assert_eq!(a.curve.ln_ell, b.curve.ln_ell);
        assert!(a.curve.state.iter().all(|s| s[1] == 0.0));
    }

    /// Closed-form one-loop solution in d = 1: G = G0 - t/(4 pi),
    /// ln u = ln u0 + t + (7/2) ln(G/G0).
    fn closed_form_stop(g0: f64, u0: f64) -> (InteractingRegime, f64) {
        let t_g = 4.0 * PI * (g0 - 1.0);
        let h = |t: f64| u0.ln() + t + 3.5 * (1.0 - t / (4.0 * PI * g0)).ln();
        if h(t_g) < 0.0 {
            return (InteractingRegime::CouplingDominated, t_g);
        }
        // h is concave on [0, t_g] with h(0) < 0 <= h(t_g): the first root.
        let mut tm = 0.0;
        let mut best = (h(0.0), 0.0);
        for k in 1..=10_000 {
            let t = t_g * k as f64 / 10_000.0;
            if h(t) > best.0 {
                best = (h(t), t);
            }
        }
        if best.0 < 0.0 {
            return (InteractingRegime::CouplingDominated, t_g);
        }
        let (mut lo, mut hi) = (tm, best.1);
        for _ in 0..200 {
            tm = 0.5 * (lo + hi);
            if h(tm) < 0.0 {
                lo = tm;
            } else {
                hi = tm;
            }
        }
        (InteractingRegime::MassDominated, tm)
    }

    #[test]
    fn interacting_flow_matches_closed_form_event_order() {
        for &(g0, u0) in &[(10.0, 1e-6), (3.0, 1e-3), (1.5, 1e-4), (20.0, 1e-30), (5.0, 1e-12)] {
            let f = flow_interacting(g0, u0, 1, 1e300).unwrap();
            let (regime, t) = closed_form_stop(g0, u0);
            assert_eq!(f.regime, regime, "G0={g0} u0={u0}");
            assert!((f.ell_star.ln() - t).abs() < 1e-6, "G0={g0}: {} vs {t}", f.ell_star.ln());
        }
    }

    #[test]
    fn interacting_flow_examples() {
        let f = flow_interacting(10.0, 1e-6, 1, 1e300).unwrap();
        assert_eq!(f.regime, InteractingRegime::MassDominated);
        let ln_int = (1e6f64).ln();
        assert!((f.ell_star.ln() - ln_int).abs() < 0.1 * ln_int);
        let g = flow_interacting(0.5, 1e-12, 1, 1e300).unwrap();
        assert_eq!(g.regime, InteractingRegime::CouplingDominated);
    }

    #[test]
    fn bkt_constant_values() {
        assert!((bkt_constant(G_C, 0.0) - BKT_SEPARATRIX).abs() < 1e-12);
        assert!((BKT_SEPARATRIX - 10.335_425_560_099_94).abs() < 1e-10);
        assert!((bkt_constant(0.5, 0.01) - 7.233_09).abs() < 1e-4);
    }

    #[test]
    fn bkt_fixed_line() {
        let f = flow_bkt(0.4, 0.0, 20.0).unwrap();
        assert_eq!(f.side, BktSide::Delocalized);
        assert!(f.curve.state.iter().all(|s| s[0] == 0.4));
        assert_eq!(flow_bkt(0.3, 0.0, 20.0).unwrap().side, BktSide::Localized);
        assert_eq!(flow_bkt(G_C, 0.0, 20.0).unwrap().side, BktSide::Critical);
        assert_eq!(flow_bkt(G_C * (1.0 + 1e-6), 0.0, 20.0).unwrap().side, BktSide::Delocalized);
        assert_eq!(flow_bkt(G_C * (1.0 - 1e-6), 0.0, 20.0).unwrap().side, BktSide::Localized);
        assert_eq!(flow_bkt_banded(0.3183, 0.0, 20.0, 1e-4).unwrap().side, BktSide::Critical);
        assert!(flow_bkt_banded(0.3, 0.0, 20.0, -1.0).is_err());
    }

    #[test]
    fn bkt_delocalized_flow_reaches_root() {
        let f = flow_bkt(0.5, 0.01, 20.0).unwrap();
        assert_eq!(f.side, BktSide::Delocalized);
        assert!(f.max_c_drift < 1e-6, "{}", f.max_c_drift);
        let gi = f.g_infinity.unwrap();
        assert!(gi > G_C && gi < 0.5);
        assert!((bkt_constant(gi, 0.0) - f.c).abs() < 1e-12);
        let long = flow_bkt(0.5, 0.01, 60.0).unwrap();
        assert!((long.curve.state.last().unwrap()[0] - gi).abs() < 1e-8);
    }

    #[test]
    fn bkt_localized_flow_reports_scale() {
        let f = flow_bkt(0.3, 0.01, 200.0).unwrap();
        assert_eq!(f.side, BktSide::Localized);
        let ell = f.ell_c.unwrap();
        assert!(ell > 1.0);
        assert!((f.curve.state.last().unwrap()[1] - 1.0).abs() < 1e-9);
        assert!(f.max_c_drift < 1e-6);
        // Above the separatrix with g0 > g_c.
        let above = flow_bkt(0.4, 3.0, 200.0).unwrap();
        assert!(above.c > BKT_SEPARATRIX);
        assert_eq!(above.side, BktSide::Localized);
    }
}
