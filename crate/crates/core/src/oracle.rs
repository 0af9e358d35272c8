//! Exact many-body reference in a fixed particle-number sector (L <= 12).

use crate::error::{invalid, Error, Result};
use crate::gaussian::{check_branch, Outcome, TrajectoryState};
use crate::linalg::hermitian_eigen;
use crate::model::{build_hamiltonian, ModelParams};
use crate::observables::{entropy_from_spectrum, Region};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::sync::Arc;

pub const MAX_ORACLE_SITES: usize = 12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Occupation basis |s> = c^dagger_{s1} ... c^dagger_{sN}|0> with s1 < ... < sN.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    pub l: usize,
    pub n: usize,
    pub states: Vec<u32>,
    index: Vec<usize>,
}

impl SectorBasis {
    pub fn new(l: usize, n: usize) -> Result<Self> {
        if l > MAX_ORACLE_SITES {
            return Err(Error::DimensionOverflow(format!("L = {l} exceeds {MAX_ORACLE_SITES}")));
        }
        if n > l {
            return invalid("more particles than sites");
        }
        let states: Vec<u32> = (0u32..(1 << l)).filter(|s| s.count_ones() as usize == n).collect();
        let mut index = vec![usize::MAX; 1 << l];
        for (k, &s) in states.iter().enumerate() {
            index[s as usize] = k;
        }
        Ok(Self { l, n, states, index })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, s: u32) -> usize {
        self.index[s as usize]
    }
}

fn parity_below(s: u32, i: usize) -> f64 {
    if (s & ((1u32 << i) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 }
}

/// c_i^dagger c_j |s> = sign |s'>, or None if it annihilates the state.
pub fn hop(s: u32, i: usize, j: usize) -> Option<(u32, f64)> {
    if s & (1 << j) == 0 {
        return None;
    }
    if i == j {
        return Some((s, 1.0));
    }
    let s1 = s & !(1 << j);
    if s1 & (1 << i) != 0 {
        return None;
    }
    let sign = parity_below(s, j) * parity_below(s1, i);
    Some((s1 | (1 << i), sign))
}

pub fn many_body_hamiltonian(p: &ModelParams, basis: &SectorBasis) -> Result<DMatrix<C64>> {
    if p.l != basis.l {
        return invalid("basis size does not match the model");
    }
    let h = build_hamiltonian(p)?;
    let dim = basis.dim();
    let mut hm = DMatrix::<C64>::zeros(dim, dim);
    let bonds = p.nn_bonds();
    for (b, &s) in basis.states.iter().enumerate() {
        for i in 0..p.l {
            for j in 0..p.l {
                let hij = h[(i, j)];
                if hij == ZERO {
                    continue;
                }
                if let Some((s2, sign)) = hop(s, i, j) {
                    hm[(basis.index_of(s2), b)] += hij * sign;
                }
            }
        }
        let mut e = 0.0;
        for &(i, j) in &bonds {
            if s & (1 << i) != 0 && s & (1 << j) != 0 {
                e += p.v;
            }
        }
        hm[(b, b)] += C64::new(e, 0.0);
    }
    Ok(hm)
}

/// Cached eigendecomposition of the many-body Hamiltonian.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    pub h: DMatrix<C64>,
    evals: Vec<f64>,
    evecs: DMatrix<C64>,
}

impl ExactPropagator {
    pub fn new(p: &ModelParams, basis: &SectorBasis) -> Result<Self> {
        let h = many_body_hamiltonian(p, basis)?;
        let (evals, evecs) = hermitian_eigen(&h);
        Ok(Self { h, evals, evecs })
    }

    pub fn evolve(&self, psi: &DVector<C64>, dt: f64) -> DVector<C64> {
        let mut c = self.evecs.adjoint() * psi;
        for (k, e) in self.evals.iter().enumerate() {
            c[k] *= C64::from_polar(1.0, -e * dt);
        }
        &self.evecs * c
    }
}

#[derive(Clone, Debug)]
pub struct ExactState {
    pub basis: Arc<SectorBasis>,
    pub prop: Arc<ExactPropagator>,
    pub psi: DVector<C64>,
}

impl ExactState {
    pub fn from_occupations(occ: &[bool], basis: Arc<SectorBasis>, prop: Arc<ExactPropagator>) -> Result<Self> {
        let s: u32 = occ.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| 1u32 << i).sum();
        if occ.len() != basis.l || s.count_ones() as usize != basis.n {
            return invalid("occupations do not match the sector");
        }
        let mut psi = DVector::zeros(basis.dim());
        psi[basis.index_of(s)] = C64::new(1.0, 0.0);
        Ok(Self { basis, prop, psi })
    }

    /// Slater determinant of the orbitals M (D = M M^dagger): amplitude
    /// on |s> is det(conj(M)[s, :]).
    pub fn from_orbitals(m: &DMatrix<C64>, basis: Arc<SectorBasis>, prop: Arc<ExactPropagator>) -> Result<Self> {
        if m.nrows() != basis.l || m.ncols() != basis.n {
            return invalid("orbital matrix does not match the sector");
        }
        let n = basis.n;
        let psi = DVector::from_iterator(
            basis.dim(),
            basis.states.iter().map(|&s| {
                if n == 0 {
                    return C64::new(1.0, 0.0);
                }
                let rows: Vec<usize> = (0..basis.l).filter(|i| s & (1 << i) != 0).collect();
                DMatrix::from_fn(n, n, |a, b| m[(rows[a], b)].conj()).determinant()
            }),
        );
        Ok(Self { basis, prop, psi })
    }

    pub fn norm(&self) -> f64 {
        self.psi.norm()
    }

    pub fn energy(&self) -> f64 {
        self.psi.dotc(&(&self.prop.h * &self.psi)).re
    }

    /// <psi| c_i^dagger c_j |phi> for all i, j.
    fn two_point(&self, bra: &DVector<C64>, ket: &DVector<C64>) -> DMatrix<C64> {
        let l = self.basis.l;
        let mut d = DMatrix::<C64>::zeros(l, l);
        for (b, &s) in self.basis.states.iter().enumerate() {
            let amp = ket[b];
            if amp == ZERO {
                continue;
            }
            for i in 0..l {
                for j in 0..l {
                    if let Some((s2, sign)) = hop(s, i, j) {
                        d[(i, j)] += bra[self.basis.index_of(s2)].conj() * amp * sign;
                    }
                }
            }
        }
        d
    }

    /// D_ij = <c_i^dagger c_j>.
    pub fn correlation_matrix(&self) -> DMatrix<C64> {
        self.two_point(&self.psi, &self.psi)
    }

    /// dD_ij/dt = i <[H, c_i^dagger c_j]>.
    pub fn correlation_derivative(&self) -> DMatrix<C64> {
        let phi = &self.prop.h * &self.psi;
        let a = self.two_point(&phi, &self.psi);
        let b = self.two_point(&self.psi, &phi);
        (a - b) * C64::new(0.0, 1.0)
    }

    pub fn click_probability(&self, x: usize) -> f64 {
        self.basis
            .states
            .iter()
            .zip(self.psi.iter())
            .filter(|(s, _)| *s & (1 << x) != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn project(&mut self, x: usize, outcome: Outcome) -> Result<f64> {
        let p = self.click_probability(x);
        check_branch(x, p, outcome)?;
        let keep = outcome == Outcome::Click;
        let norm = if keep { p.sqrt() } else { (1.0 - p).sqrt() };
        for (a, &s) in self.psi.iter_mut().zip(&self.basis.states) {
            if (s & (1 << x) != 0) == keep {
                *a /= norm;
            } else {
                *a = ZERO;
            }
        }
        Ok(p)
    }

    /// Reduced density matrix on a region, basis ordered by bit patterns of
    /// the region's sites.
    pub fn reduced_density_matrix(&self, region: &Region) -> DMatrix<C64> {
        let l = self.basis.l;
        let a = region.sites();
        let comp = region.complement(l);
        let b = comp.sites();
        let mut psi_ab = DMatrix::<C64>::zeros(1 << a.len(), 1 << b.len());
        for (amp, &s) in self.psi.iter().zip(&self.basis.states) {
            let (mut ia, mut ib) = (0usize, 0usize);
            for (k, &x) in a.iter().enumerate() {
                if s & (1 << x) != 0 {
                    ia |= 1 << k;
                }
            }
            for (k, &x) in b.iter().enumerate() {
                if s & (1 << x) != 0 {
                    ib |= 1 << k;
                }
            }
            // Sign of moving region modes in front of complement modes.
            let mut swaps = 0;
            for &x in a {
                if s & (1 << x) != 0 {
                    swaps += b.iter().filter(|&&y| y < x && s & (1 << y) != 0).count();
                }
            }
            let sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
            psi_ab[(ia, ib)] = *amp * sign;
        }
        &psi_ab * psi_ab.adjoint()
    }

    /// Von Neumann (n = 1) or Rényi entropy of a region from its reduced density matrix.
    pub fn region_entropy(&self, region: &Region, n: u32) -> Result<f64> {
        let rho = self.reduced_density_matrix(region);
        let ev = crate::linalg::hermitian_eigenvalues(&rho);
        let mut s = 0.0;
        for p in ev {
            if p <= 1e-14 {
                continue;
            }
            if n == 1 {
                s -= p * p.ln();
            } else {
                s += p.powi(n as i32);
            }
        }
        if n == 1 {
            Ok(s)
        } else {
            Ok(s.ln() / (1.0 - n as f64))
        }
    }

    fn count_in(s: u32, region: &Region) -> f64 {
        region.sites().iter().filter(|&&x| s & (1 << x) != 0).count() as f64
    }

    /// Cumulants C2, C4 of the particle number in a region.
    pub fn number_cumulants(&self, region: &Region) -> (f64, f64) {
        let mut mean = 0.0;
        for (a, &s) in self.psi.iter().zip(&self.basis.states) {
            mean += a.norm_sqr() * Self::count_in(s, region);
        }
        let (mut m2, mut m4) = (0.0, 0.0);
        for (a, &s) in self.psi.iter().zip(&self.basis.states) {
            let d = Self::count_in(s, region) - mean;
            m2 += a.norm_sqr() * d * d;
            m4 += a.norm_sqr() * d.powi(4);
        }
        (m2, m4 - 3.0 * m2 * m2)
    }

    /// Minus the covariance of the particle numbers in b and c.
    pub fn number_covariance(&self, b: &Region, c: &Region) -> f64 {
        let (mut nb, mut nc, mut nbc) = (0.0, 0.0, 0.0);
        for (a, &s) in self.psi.iter().zip(&self.basis.states) {
            let w = a.norm_sqr();
            let (x, y) = (Self::count_in(s, b), Self::count_in(s, c));
            nb += w * x;
            nc += w * y;
            nbc += w * x * y;
        }
        -(nbc - nb * nc)
    }

    pub fn rdm_observables(&self, a: &Region, b: &Region, c: &Region) -> Result<RdmObservables> {
        let (c2, c4) = self.number_cumulants(a);
        let sb = self.region_entropy(b, 1)?;
        let sc = self.region_entropy(c, 1)?;
        let sbc = self.region_entropy(&b.union(c), 1)?;
        Ok(RdmObservables {
            s1: self.region_entropy(a, 1)?,
            s2: self.region_entropy(a, 2)?,
            c2,
            c4,
            cov_g: self.number_covariance(b, c),
            mutinfo: sb + sc - sbc,
        })
    }
}

/// Observables computed from the many-body state directly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdmObservables {
    pub s1: f64,
    pub s2: f64,
    pub c2: f64,
    pub c4: f64,
    pub cov_g: f64,
    pub mutinfo: f64,
}

impl RdmObservables {
    /// The same quantities from a correlation matrix, for cross-checks.
    pub fn from_correlation(d: &DMatrix<C64>, a: &Region, b: &Region, c: &Region) -> Result<Self> {
        let spec = crate::observables::SpectralData::of(d, a)?;
        Ok(Self {
            s1: entropy_from_spectrum(&spec.lambdas, 1)?,
            s2: entropy_from_spectrum(&spec.lambdas, 2)?,
            c2: spec.cumulant(2),
            c4: spec.cumulant(4),
            cov_g: crate::observables::covariance_g(d, b, c)?,
            mutinfo: crate::observables::mutual_information(d, b, c)?,
        })
    }

    pub fn max_deviation(&self, other: &Self) -> f64 {
        [
            self.s1 - other.s1,
            self.s2 - other.s2,
            self.c2 - other.c2,
            self.c4 - other.c4,
            self.cov_g - other.cov_g,
            self.mutinfo - other.mutinfo,
        ]
        .iter()
        .fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl TrajectoryState for ExactState {
    fn dim(&self) -> usize {
        self.basis.l
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        if dt < 0.0 {
            return invalid("negative time step");
        }
        if dt > 0.0 {
            self.psi = self.prop.evolve(&self.psi, dt);
        }
        Ok(())
    }

    fn measure(&mut self, x: usize, choose: &mut dyn FnMut(f64) -> Result<Outcome>) -> Result<(f64, Outcome)> {
        let p = self.click_probability(x);
        let o = choose(p)?;
        self.project(x, o)?;
        Ok((p, o))
    }

    fn correlation(&self) -> DMatrix<C64> {
        self.correlation_matrix()
    }

    fn check(&self) -> Result<()> {
        let dn = (self.norm() - 1.0).abs();
        if dn > 1e-10 {
            return Err(Error::InvariantViolation(format!("state norm drift {dn:e}")));
        }
        Ok(())
    }
}

/// Tolerances of the engine-versus-oracle checks.
pub const OBSERVABLE_TOL: f64 = 1e-8;
pub const RHS_TOL: f64 = 1e-10;
pub const ENERGY_TOL: f64 = 1e-10;

/// Result of shared-record comparisons against the exact reference.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleReport {
    pub n_trajectories: usize,
    pub n_probes: usize,
    /// Largest observable deviation, Gaussian engine vs exact (V = 0 only).
    pub max_observable_dev: f64,
    /// Largest |D_gauss - D_exact| entry (V = 0 only).
    pub max_correlation_dev: f64,
    /// Largest |dD/dt| deviation, TDHF right-hand side vs exact, on Slater states.
    pub max_rhs_dev: f64,
    /// Largest drift of <H> over free exact evolution between probes.
    pub max_energy_drift: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_observable_dev < OBSERVABLE_TOL
            && self.max_correlation_dev < OBSERVABLE_TOL
            && self.max_rhs_dev < RHS_TOL
            && self.max_energy_drift < ENERGY_TOL
    }
}

/// Runs `n_traj` standard-protocol trajectories of the orbital Gaussian engine
/// (on the quadratic part of the model) and replays each event record on the
/// exact state. For V = 0 every probe compares observables; for any V the
/// TDHF right-hand side (with the given exchange sign) is compared with the
/// exact equation of motion on the Gaussian engine's Slater states.
pub fn oracle_check(params: &ModelParams, master_seed: u64, n_traj: usize, fock_sign: f64) -> Result<OracleReport> {
    use crate::ensemble::{random_occupations, sample_schedule, trajectory_rng, ProtocolConfig};
    use crate::gaussian::{run_trajectory, BornSampler, OrbitalFrame, Replay};
    use crate::tdhf::{TdhfOptions, TdhfState};

    params.validate()?;
    let l = params.l;
    let n = params.particle_number();
    let free = ModelParams { v: 0.0, ..params.clone() };
    let h0 = build_hamiltonian(params)?;
    let prop = Arc::new(crate::linalg::Propagator::new(&h0)?);
    let basis = Arc::new(SectorBasis::new(l, n)?);
    let exact_free = Arc::new(ExactPropagator::new(&free, &basis)?);
    let exact_full = Arc::new(ExactPropagator::new(params, &basis)?);
    let proto = ProtocolConfig::standard(params.gamma, n_traj, master_seed, crate::ensemble::Engine::Gaussian);
    let probes = proto.probe_times();
    let a = Region::half_cut(l);
    let (b, c) = Region::thirds(l);
    let mut rep = OracleReport { n_trajectories: n_traj, ..Default::default() };

    for index in 0..n_traj as u64 {
        let mut rng = trajectory_rng(master_seed, index);
        let schedule = sample_schedule(&mut rng, l, params.gamma, proto.t_max);
        let occ = random_occupations(&mut rng, l, n);
        let mut g = OrbitalFrame::from_occupations(&occ, prop.clone())?;
        let mut snaps = Vec::with_capacity(probes.len());
        let events = run_trajectory(&mut g, &schedule, &probes, &mut BornSampler { rng: &mut rng }, |_, s| {
            s.check()?;
            snaps.push(s.orbitals());
            Ok(())
        })?;

        if params.v == 0.0 {
            let outcomes: Vec<Outcome> = events.iter().map(|e| e.outcome).collect();
            let mut ex = ExactState::from_occupations(&occ, basis.clone(), exact_free.clone())?;
            let mut k = 0;
            run_trajectory(&mut ex, &schedule, &probes, &mut Replay::new(&outcomes), |_, s| {
                s.check()?;
                let m = &snaps[k];
                let dg = m * m.adjoint();
                let de = s.correlation_matrix();
                rep.max_correlation_dev = rep.max_correlation_dev.max(crate::linalg::max_abs_diff(&dg, &de));
                let og = RdmObservables::from_correlation(&dg, &a, &b, &c)?;
                let oe = s.rdm_observables(&a, &b, &c)?;
                rep.max_observable_dev = rep.max_observable_dev.max(og.max_deviation(&oe));
                k += 1;
                Ok(())
            })?;
        }

        for m in &snaps {
            let mut ex = ExactState::from_orbitals(m, basis.clone(), exact_full.clone())?;
            let exact_rhs = ex.correlation_derivative();
            let mut hf = TdhfState::from_params(
                crate::gaussian::CorrelationMatrix::from_orbitals(m),
                params,
                TdhfOptions { fock_sign, ..Default::default() },
            )?;
            rep.max_rhs_dev = rep.max_rhs_dev.max(crate::linalg::max_abs_diff(&hf.derivative(), &exact_rhs));
            let e0 = ex.energy();
            ex.advance(proto.obs_interval)?;
            rep.max_energy_drift = rep.max_energy_drift.max((ex.energy() - e0).abs());
        }
        rep.n_probes += snaps.len();
    }
    Ok(rep)
}
