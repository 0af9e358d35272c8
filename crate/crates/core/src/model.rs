//! Lattice model: parameters, single-particle Hamiltonian, symmetry class
//! and characteristic scales.

use crate::error::{invalid, Result};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(format!("unknown boundary '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub l: usize,
    pub j1: f64,
    pub j2: C64,
    /// Density-density coupling per unordered nearest-neighbour pair.
    pub v: f64,
    pub gamma: f64,
    pub n0: f64,
    pub boundary: Boundary,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            l: 8,
            j1: 1.0,
            j2: C64::new(0.0, 0.0),
            v: 0.0,
            gamma: 0.5,
            n0: 0.5,
            boundary: Boundary::Open,
        }
    }
}

impl ModelParams {
    pub fn chain(l: usize, gamma: f64, boundary: Boundary) -> Self {
        Self { l, gamma, boundary, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return invalid(format!("L = {} < 2", self.l));
        }
        if !self.j1.is_finite() || !self.j2.re.is_finite() || !self.j2.im.is_finite() {
            return invalid("hoppings must be finite");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return invalid(format!("gamma = {} must be positive", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.n0) {
            return invalid(format!("n0 = {} outside [0, 1]", self.n0));
        }
        let n = self.l as f64 * self.n0;
        if (n - n.round()).abs() > 1e-9 {
            return invalid(format!("L*n0 = {n} is not an integer"));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return invalid(format!("V = {} must be non-negative", self.v));
        }
        self.check_lattice()
    }

    fn check_lattice(&self) -> Result<()> {
        if self.l < 2 {
            return invalid(format!("L = {} < 2", self.l));
        }
        if self.boundary == Boundary::Periodic {
            if self.l < 3 && self.j1 != 0.0 {
                return invalid("periodic chain with L < 3 double-counts the nearest-neighbour bond");
            }
            if self.l < 5 && self.j2.norm() != 0.0 {
                return invalid("periodic chain with L < 5 and J2 != 0 has colliding bonds");
            }
        }
        Ok(())
    }

    pub fn particle_number(&self) -> usize {
        (self.l as f64 * self.n0).round() as usize
    }

    /// Hopping amplitudes t_r on the bond (x, x+r), r = 1, 2.
    fn hoppings(&self) -> [(usize, C64); 2] {
        [(1, C64::new(-self.j1, 0.0)), (2, -self.j2)]
    }

    /// Unordered nearest-neighbour pairs (i, j) with i < j.
    pub fn nn_bonds(&self) -> Vec<(usize, usize)> {
        let l = self.l;
        let mut bonds: Vec<(usize, usize)> = (0..l - 1).map(|x| (x, x + 1)).collect();
        if self.boundary == Boundary::Periodic && l >= 3 {
            bonds.push((0, l - 1));
        }
        bonds
    }
}

/// Single-particle Hamiltonian h with h[x, x+1] = -J1 and h[x, x+2] = -J2.
pub fn build_hamiltonian(p: &ModelParams) -> Result<DMatrix<C64>> {
    p.check_lattice()?;
    let l = p.l;
    let mut h = DMatrix::<C64>::zeros(l, l);
    for (r, t) in p.hoppings() {
        if t.norm() == 0.0 {
            continue;
        }
        for x in 0..l {
            let y = x + r;
            let y = if y < l {
                y
            } else if p.boundary == Boundary::Periodic {
                y - l
            } else {
                continue;
            };
            h[(x, y)] += t;
            h[(y, x)] += t.conj();
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryClass {
    #[serde(rename = "AIII")]
    Aiii,
    #[serde(rename = "BDI")]
    Bdi,
}

impl SymmetryClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SymmetryClass::Aiii => "AIII",
            SymmetryClass::Bdi => "BDI",
        }
    }
}

impl std::str::FromStr for SymmetryClass {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "AIII" => Ok(SymmetryClass::Aiii),
            "BDI" => Ok(SymmetryClass::Bdi),
            other => Err(format!("unknown symmetry class '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub class: SymmetryClass,
    /// Set when V > 0; the class then refers to the interacting AIII problem.
    pub interacting: bool,
}

/// BDI iff conjugation by diag(i^x) makes the bulk hopping matrix skew-symmetric.
///
/// The test runs on an open chain of the same hoppings: on a ring whose
/// length is not a multiple of four the gauge transform does not respect
/// the boundary, while the class is a bulk property.
pub fn classify_symmetry(p: &ModelParams) -> Classification {
    if p.v > 0.0 {
        return Classification { class: SymmetryClass::Aiii, interacting: true };
    }
    let bulk = ModelParams { l: p.l.max(6), boundary: Boundary::Open, ..p.clone() };
    let h = build_hamiltonian(&bulk).expect("open chain with L >= 6 is always valid");
    let skew = is_gauge_skew(&h, 1e-12);
    Classification {
        class: if skew { SymmetryClass::Bdi } else { SymmetryClass::Aiii },
        interacting: false,
    }
}

/// h' = G h G^dagger with G = diag(i^x); returns whether h'^T = -h'.
pub fn is_gauge_skew(h: &DMatrix<C64>, tol: f64) -> bool {
    let hp = gauge_transform(h);
    let n = h.nrows();
    (0..n).all(|a| (0..n).all(|b| (hp[(a, b)] + hp[(b, a)]).norm() <= tol))
}

pub fn gauge_transform(h: &DMatrix<C64>) -> DMatrix<C64> {
    let n = h.nrows();
    let ipow = |k: i64| -> C64 {
        match k.rem_euclid(4) {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        }
    };
    DMatrix::from_fn(n, n, |a, b| ipow(a as i64 - b as i64) * h[(a, b)])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicScales {
    pub v0: f64,
    pub ell0: f64,
    pub g0: f64,
    pub ddiff: f64,
}

pub const DEFAULT_BZ_POINTS: usize = 4096;

/// Band velocity dε/dk of the translation-invariant chain.
pub fn band_velocity(p: &ModelParams, k: f64) -> f64 {
    // ε(k) = Σ_r (t_r e^{irk} + c.c.)  =>  ε'(k) = -2 Σ_r r Im(t_r e^{irk})
    p.hoppings()
        .iter()
        .map(|&(r, t)| {
            let rf = r as f64;
            -2.0 * rf * (t * C64::from_polar(1.0, rf * k)).im
        })
        .sum()
}

/// Brillouin-zone average of (dε/dk)^2 on a uniform grid of `points`.
pub fn mean_square_velocity(p: &ModelParams, points: usize) -> f64 {
    let mut acc = crate::special::NeumaierSum::default();
    for n in 0..points {
        let k = 2.0 * PI * n as f64 / points as f64 - PI;
        acc.add(band_velocity(p, k).powi(2));
    }
    acc.value() / points as f64
}

pub fn characteristic_scales(p: &ModelParams) -> Result<CharacteristicScales> {
    characteristic_scales_with(p, DEFAULT_BZ_POINTS)
}

pub fn characteristic_scales_with(p: &ModelParams, points: usize) -> Result<CharacteristicScales> {
    if !(p.gamma > 0.0) {
        return invalid(format!("gamma = {} must be positive", p.gamma));
    }
    let v2 = mean_square_velocity(p, points);
    let v0 = v2.sqrt();
    Ok(CharacteristicScales {
        v0,
        ell0: v0 / (2.0 * p.gamma),
        g0: p.n0 * (1.0 - p.n0) * v0 / p.gamma,
        ddiff: v2 / (2.0 * p.gamma),
    })
}
