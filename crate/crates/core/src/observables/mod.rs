//! Observables evaluated on a correlation matrix D_ij = <c_i^dagger c_j>.

mod correlator;
mod cumulants;
mod ids;

pub use correlator::{
    correlator_q, correlator_x, coupling_g, fit_crossover, g_reference, weak_localization_delta, CrossoverFit,
    GCurve, WeakLocalization, WlCurve, WL_FIT_WINDOW,
};
pub use cumulants::{bernoulli_cumulant, BERNOULLI_CUMULANTS, MAX_CUMULANT_ORDER};
pub use ids::{Channel, ObservableId, ObservableSet};

use crate::error::{invalid, Error, Result};
use crate::linalg::hermitian_eigenvalues;
use crate::special::zeta_even;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Eigenvalues within this distance outside [0, 1] are clamped; beyond it
/// the state is considered corrupted.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-6;
/// Eigenvalues closer than this to 0 or 1 do not contribute to logarithms.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    sites: Vec<usize>,
}

impl Region {
    pub fn new(mut sites: Vec<usize>, l: usize) -> Result<Self> {
        sites.sort_unstable();
        sites.dedup();
        if let Some(&s) = sites.last() {
            if s >= l {
                return invalid(format!("site {s} outside lattice of {l} sites"));
            }
        }
        Ok(Self { sites })
    }

    pub fn range(lo: usize, hi: usize) -> Self {
        Self { sites: (lo..hi).collect() }
    }

    /// A = first L/2 sites.
    pub fn half_cut(l: usize) -> Self {
        Self::range(0, l / 2)
    }

    /// B = first L/3 sites, C = last L/3 sites.
    pub fn thirds(l: usize) -> (Self, Self) {
        let k = l / 3;
        (Self::range(0, k), Self::range(l - k, l))
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.sites.iter().any(|s| other.sites.binary_search(s).is_ok())
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut s = self.sites.clone();
        s.extend_from_slice(&other.sites);
        s.sort_unstable();
        s.dedup();
        Region { sites: s }
    }

    pub fn complement(&self, l: usize) -> Region {
        Region { sites: (0..l).filter(|s| self.sites.binary_search(s).is_err()).collect() }
    }
}

pub fn restrict(d: &DMatrix<C64>, region: &Region) -> DMatrix<C64> {
    let s = region.sites();
    DMatrix::from_fn(s.len(), s.len(), |a, b| d[(s[a], s[b])])
}

/// Eigenvalues of D restricted to a region.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub lambdas: Vec<f64>,
}

impl SpectralData {
    pub fn from_lambdas(mut lambdas: Vec<f64>) -> Result<Self> {
        for l in lambdas.iter_mut() {
            if !l.is_finite() || *l < -EIGENVALUE_TOLERANCE || *l > 1.0 + EIGENVALUE_TOLERANCE {
                return Err(Error::InvariantViolation(format!("eigenvalue {l:e} outside [0, 1]")));
            }
            *l = l.clamp(0.0, 1.0);
        }
        Ok(Self { lambdas })
    }

    pub fn of(d: &DMatrix<C64>, region: &Region) -> Result<Self> {
        if region.is_empty() {
            return Ok(Self { lambdas: Vec::new() });
        }
        Self::from_lambdas(hermitian_eigenvalues(&restrict(d, region)))
    }

    pub fn entropy(&self, n: u32) -> Result<f64> {
        entropy_from_spectrum(&self.lambdas, n)
    }

    pub fn cumulant(&self, order: usize) -> f64 {
        self.lambdas.iter().map(|&p| bernoulli_cumulant(order, p)).sum()
    }

    pub fn fcs(&self, chi: f64) -> C64 {
        let e = C64::from_polar(1.0, chi);
        self.lambdas.iter().map(|&p| (C64::new(1.0 - p, 0.0) + e * p).ln()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.lambdas.iter().sum()
    }
}

fn is_floor(p: f64) -> bool {
    p < EIGENVALUE_FLOOR || p > 1.0 - EIGENVALUE_FLOOR
}

/// Rényi entropy of index n (n = 1: von Neumann), in nats.
pub fn entropy_from_spectrum(lambdas: &[f64], n: u32) -> Result<f64> {
    if n < 1 {
        return invalid("Renyi index must be at least 1");
    }
    let mut s = 0.0;
    for &p in lambdas {
        if is_floor(p) {
            continue;
        }
        if n == 1 {
            s -= p * p.ln() + (1.0 - p) * (1.0 - p).ln();
        } else {
            s += (p.powi(n as i32) + (1.0 - p).powi(n as i32)).ln() / (1.0 - n as f64);
        }
    }
    Ok(s)
}

pub fn entanglement_entropy(d: &DMatrix<C64>, region: &Region, n: u32) -> Result<f64> {
    if n < 1 {
        return invalid("Renyi index must be at least 1");
    }
    SpectralData::of(d, region)?.entropy(n)
}

/// Even cumulants C^(2), C^(4), ... up to `max_order` of the region's particle number.
pub fn charge_cumulants(d: &DMatrix<C64>, region: &Region, max_order: usize) -> Result<Vec<f64>> {
    if max_order % 2 != 0 || max_order < 2 || max_order > MAX_CUMULANT_ORDER {
        return invalid(format!("cumulant order {max_order} must be even and in [2, {MAX_CUMULANT_ORDER}]"));
    }
    let spec = SpectralData::of(d, region)?;
    Ok((2..=max_order).step_by(2).map(|k| spec.cumulant(k)).collect())
}

/// C^(2) = tr D_A - tr D_A^2, without diagonalisation.
pub fn second_cumulant_trace(d: &DMatrix<C64>, region: &Region) -> f64 {
    let s = region.sites();
    let mut acc = 0.0;
    for &i in s {
        acc += d[(i, i)].re;
        for &j in s {
            acc -= d[(i, j)].norm_sqr();
        }
    }
    acc
}

/// ln <e^{i chi N_A}> on each grid point.
pub fn fcs_log_generating(d: &DMatrix<C64>, region: &Region, chis: &[f64]) -> Result<Vec<C64>> {
    let spec = SpectralData::of(d, region)?;
    Ok(chis.iter().map(|&c| spec.fcs(c)).collect())
}

/// Minus the number covariance between disjoint regions: sum over B x C of |D_ij|^2.
pub fn covariance_g(d: &DMatrix<C64>, b: &Region, c: &Region) -> Result<f64> {
    if b.overlaps(c) {
        return invalid("regions overlap");
    }
    let mut acc = crate::special::NeumaierSum::default();
    for &i in b.sites() {
        for &j in c.sites() {
            acc.add(d[(i, j)].norm_sqr());
        }
    }
    Ok(acc.value())
}

pub fn mutual_information(d: &DMatrix<C64>, b: &Region, c: &Region) -> Result<f64> {
    if b.overlaps(c) {
        return invalid("regions overlap");
    }
    let sb = entanglement_entropy(d, b, 1)?;
    let sc = entanglement_entropy(d, c, 1)?;
    let sbc = entanglement_entropy(d, &b.union(c), 1)?;
    Ok(sb + sc - sbc)
}

/// Truncated series sum_{q=1}^{q_max} 2 zeta(2q) C^(2q).
pub fn klich_levitov_from_spectrum(spec: &SpectralData, q_max: usize) -> Result<f64> {
    if q_max > MAX_CUMULANT_ORDER / 2 {
        return invalid(format!("q_max = {q_max} exceeds {}", MAX_CUMULANT_ORDER / 2));
    }
    Ok((1..=q_max).map(|q| 2.0 * zeta_even(2 * q as u32) * spec.cumulant(2 * q)).sum())
}

pub fn klich_levitov_sum(d: &DMatrix<C64>, region: &Region, q_max: usize) -> Result<f64> {
    klich_levitov_from_spectrum(&SpectralData::of(d, region)?, q_max)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random pure Gaussian state: projector onto n random orthonormal vectors.
    pub fn random_pure_d(l: usize, n: usize, seed: u64) -> DMatrix<C64> {
        let m = random_orbitals(l, n, seed);
        &m * m.adjoint()
    }

    pub fn random_orbitals(l: usize, n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(l, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        a.qr().q()
    }
}
