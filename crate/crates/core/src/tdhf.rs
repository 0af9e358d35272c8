//! Time-dependent Hartree-Fock trajectories of the interacting chain.
//!
//! The state is the correlation matrix D, evolved by
//! dD/dt = i [h_eff(D)^T, D] with
//! h_eff_ij = h0_ij + delta_ij sum_l V_il D_ll - V_ij D_ji.
//! Measurements use the Gaussian projective update. Ensembles run the
//! equivalent orbital form, which keeps the particle number exact.

use crate::error::{invalid, Error, Result};
use crate::gaussian::{check_branch, CorrelationMatrix, Outcome, TrajectoryState, DRIFT_ABORT};
use crate::linalg::{hermitize, max_abs_diff, trace_re};
use crate::model::ModelParams;
use crate::ode::{Dopri5, ErrorNorm, OdeOptions};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Internal step cap of the integrator, in units of 1/J1.
pub const MAX_STEP: f64 = 0.1;
/// Local error bound per component of the integrated state.
pub const DEFAULT_TOL: f64 = 1e-8;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Vmat with V on every unordered nearest-neighbour pair (both orderings set).
pub fn interaction_matrix(p: &ModelParams) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(p.l, p.l);
    for (i, j) in p.nn_bonds() {
        v[(i, j)] = p.v;
        v[(j, i)] = p.v;
    }
    v
}

/// Mean-field Hamiltonian with a configurable sign on the exchange term
/// (+1 is physical; -1 exists only for mutation testing).
pub fn hf_hamiltonian_signed(d: &DMatrix<C64>, vmat: &DMatrix<f64>, h0: &DMatrix<C64>, fock_sign: f64) -> DMatrix<C64> {
    let l = d.nrows();
    let mut h = h0.clone();
    for i in 0..l {
        let mut hartree = 0.0;
        for k in 0..l {
            hartree += vmat[(i, k)] * d[(k, k)].re;
        }
        h[(i, i)] += C64::new(hartree, 0.0);
        for j in 0..l {
            if vmat[(i, j)] != 0.0 {
                h[(i, j)] -= d[(j, i)] * (fock_sign * vmat[(i, j)]);
            }
        }
    }
    hermitize(&mut h);
    h
}

pub fn hf_hamiltonian(d: &DMatrix<C64>, vmat: &DMatrix<f64>, h0: &DMatrix<C64>) -> DMatrix<C64> {
    hf_hamiltonian_signed(d, vmat, h0, 1.0)
}

/// Mean-field energy tr(h0 D^T) + (1/2) sum_ij V_ij (D_ii D_jj - |D_ij|^2).
pub fn hf_energy(d: &DMatrix<C64>, vmat: &DMatrix<f64>, h0: &DMatrix<C64>) -> f64 {
    let l = d.nrows();
    let mut e = 0.0;
    for i in 0..l {
        for j in 0..l {
            e += (h0[(i, j)] * d[(i, j)]).re;
            let v = vmat[(i, j)];
            if v != 0.0 {
                e += 0.5 * v * (d[(i, i)].re * d[(j, j)].re - d[(i, j)].norm_sqr());
            }
        }
    }
    e
}

/// Sparse right-hand side of the TDHF equations.
#[derive(Clone, Debug)]
struct Rhs {
    l: usize,
    h0: Vec<(usize, usize, C64)>,
    /// (i, j, V_ij) for V_ij != 0, both orderings.
    bonds: Vec<(usize, usize, f64)>,
    fock_sign: f64,
    entries: Vec<(usize, usize, C64)>,
}

impl Rhs {
    fn new(h0: &DMatrix<C64>, vmat: &DMatrix<f64>, fock_sign: f64) -> Self {
        let l = h0.nrows();
        let mut e = Vec::new();
        let mut bonds = Vec::new();
        for j in 0..l {
            for i in 0..l {
                if h0[(i, j)] != C64::new(0.0, 0.0) {
                    e.push((i, j, h0[(i, j)]));
                }
                if vmat[(i, j)] != 0.0 {
                    bonds.push((i, j, vmat[(i, j)]));
                }
            }
        }
        Self { l, h0: e, bonds, fock_sign, entries: Vec::new() }
    }

    /// Nonzero entries of h_eff(D), D column-major.
    fn build(&mut self, d: &[C64]) {
        let l = self.l;
        self.entries.clear();
        self.entries.extend_from_slice(&self.h0);
        let mut hartree = vec![0.0; l];
        for &(i, j, v) in &self.bonds {
            hartree[i] += v * d[j + j * l].re;
            // -V_ij D_ji
            self.entries.push((i, j, -d[j + i * l] * (self.fock_sign * v)));
        }
        for (i, h) in hartree.into_iter().enumerate() {
            if h != 0.0 {
                self.entries.push((i, i, C64::new(h, 0.0)));
            }
        }
    }

    /// dD = i (h^T D - D h^T).
    fn eval(&mut self, d: &[C64], out: &mut [C64]) {
        let l = self.l;
        self.build(d);
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for &(c, a, v) in &self.entries {
            // (h^T D)_{ab} += h_ca D_cb
            let iv = I * v;
            for b in 0..l {
                out[a + b * l] += iv * d[c + b * l];
            }
        }
        for &(b, c, v) in &self.entries {
            // (D h^T)_{ab} += D_ac h_bc
            let iv = I * v;
            let (dc, ob) = (c * l, b * l);
            for a in 0..l {
                out[ob + a] -= iv * d[dc + a];
            }
        }
    }
}

/// TDHF trajectory state.
pub struct TdhfState {
    state: CorrelationMatrix,
    h0: DMatrix<C64>,
    vmat: DMatrix<f64>,
    rhs: Rhs,
    ode: Dopri5<C64>,
    n: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct TdhfOptions {
    pub tol: f64,
    pub fock_sign: f64,
}

impl Default for TdhfOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, fock_sign: 1.0 }
    }
}

impl TdhfState {
    pub fn new(state: CorrelationMatrix, h0: DMatrix<C64>, vmat: DMatrix<f64>, opts: TdhfOptions) -> Result<Self> {
        let l = state.dim();
        if h0.nrows() != l || vmat.nrows() != l {
            return invalid("dimension mismatch between state and Hamiltonian");
        }
        if (0..l).any(|i| vmat[(i, i)] != 0.0) || vmat != vmat.transpose() {
            return invalid("interaction matrix must be symmetric with zero diagonal");
        }
        let rhs = Rhs::new(&h0, &vmat, opts.fock_sign);
        let ode = Dopri5::new(
            l * l,
            OdeOptions { rtol: opts.tol, atol: opts.tol, h_max: MAX_STEP, h_min: 1e-12, norm: ErrorNorm::Max, ..Default::default() },
        );
        let n = state.particle_number();
        Ok(Self { state, h0, vmat, rhs, ode, n })
    }

    pub fn from_params(state: CorrelationMatrix, p: &ModelParams, opts: TdhfOptions) -> Result<Self> {
        let h0 = crate::model::build_hamiltonian(p)?;
        Self::new(state, h0, interaction_matrix(p), opts)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        self.state.matrix()
    }

    pub fn energy(&self) -> f64 {
        hf_energy(self.state.matrix(), &self.vmat, &self.h0)
    }

    pub fn hamiltonian(&self) -> DMatrix<C64> {
        hf_hamiltonian_signed(self.state.matrix(), &self.vmat, &self.h0, self.rhs.fock_sign)
    }

    /// Right-hand side dD/dt at the current state.
    pub fn derivative(&mut self) -> DMatrix<C64> {
        let l = self.state.dim();
        let mut out = vec![C64::new(0.0, 0.0); l * l];
        self.rhs.eval(self.state.matrix().as_slice(), &mut out);
        DMatrix::from_column_slice(l, l, &out)
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        if dt < 0.0 {
            return invalid("negative time step");
        }
        if dt == 0.0 {
            return Ok(());
        }
        let rhs = &mut self.rhs;
        let mut d = std::mem::replace(&mut self.state, CorrelationMatrix::from_occupations(&[])).into_matrix();
        let res = self.ode.integrate(|_, y, dy| rhs.eval(y, dy), 0.0, dt, d.as_mut_slice());
        hermitize(&mut d);
        self.state = CorrelationMatrix::from_matrix(d)?;
        res
    }

    pub fn project(&mut self, x: usize, outcome: Outcome) -> Result<f64> {
        self.state.project(x, outcome)
    }
}

impl TrajectoryState for TdhfState {
    fn dim(&self) -> usize {
        self.state.dim()
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        self.step(dt)
    }

    fn measure(&mut self, x: usize, choose: &mut dyn FnMut(f64) -> Result<Outcome>) -> Result<(f64, Outcome)> {
        let p = self.state.click_probability(x);
        let o = choose(p)?;
        self.state.project(x, o)?;
        Ok((p, o))
    }

    fn correlation(&self) -> DMatrix<C64> {
        self.state.matrix().clone()
    }

    fn check(&self) -> Result<()> {
        self.state.check_invariants(self.n)?;
        let drift = (trace_re(self.state.matrix()) - self.n).abs();
        if drift > 1e-8 {
            return Err(Error::InvariantViolation(format!("particle number drift {drift:e}")));
        }
        Ok(())
    }
}

/// Sparse right-hand side in the orbital representation D = M M^dagger.
#[derive(Clone, Debug)]
struct OrbitalRhs {
    l: usize,
    n: usize,
    h0: Vec<(usize, usize, C64)>,
    bonds: Vec<(usize, usize, f64)>,
    fock_sign: f64,
    entries: Vec<(usize, usize, C64)>,
    hartree: Vec<f64>,
}

impl OrbitalRhs {
    fn new(base: &Rhs, n: usize) -> Self {
        Self {
            l: base.l,
            n,
            h0: base.h0.clone(),
            bonds: base.bonds.clone(),
            fock_sign: base.fock_sign,
            entries: Vec::new(),
            hartree: vec![0.0; base.l],
        }
    }

    /// D_ij = sum_b M_ib conj(M_jb), M column-major.
    fn d_entry(&self, m: &[C64], i: usize, j: usize) -> C64 {
        let l = self.l;
        (0..self.n).map(|b| m[i + b * l] * m[j + b * l].conj()).sum()
    }

    fn build(&mut self, m: &[C64]) {
        let l = self.l;
        self.entries.clear();
        self.entries.extend_from_slice(&self.h0);
        let dens: Vec<f64> = (0..l).map(|i| (0..self.n).map(|b| m[i + b * l].norm_sqr()).sum()).collect();
        self.hartree.iter_mut().for_each(|h| *h = 0.0);
        for k in 0..self.bonds.len() {
            let (i, j, v) = self.bonds[k];
            self.hartree[i] += v * dens[j];
            let dji = self.d_entry(m, j, i);
            self.entries.push((i, j, -dji * (self.fock_sign * v)));
        }
        for i in 0..l {
            if self.hartree[i] != 0.0 {
                self.entries.push((i, i, C64::new(self.hartree[i], 0.0)));
            }
        }
    }

    /// dM = i h^T M.
    fn eval(&mut self, m: &[C64], out: &mut [C64]) {
        let l = self.l;
        self.build(m);
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for &(c, a, v) in &self.entries {
            let iv = I * v;
            for b in 0..self.n {
                out[a + b * l] += iv * m[c + b * l];
            }
        }
    }
}

/// TDHF trajectory carried by N orthonormal orbitals, D = M M^dagger.
/// The flow dM/dt = i h_eff(D)^T M reproduces the TDHF equation for D while
/// keeping D a projector; measurements rotate the orbitals so that the
/// particle number stays exactly N.
pub struct TdhfOrbitals {
    l: usize,
    n: usize,
    m: Vec<C64>,
    h0: DMatrix<C64>,
    vmat: DMatrix<f64>,
    rhs: OrbitalRhs,
    ode: Dopri5<C64>,
    since_reorth: usize,
    reorth_interval: usize,
}

impl TdhfOrbitals {
    /// Columns of `m` must be orthonormal.
    pub fn new(m: &DMatrix<C64>, h0: DMatrix<C64>, vmat: DMatrix<f64>, opts: TdhfOptions) -> Result<Self> {
        let (l, n) = m.shape();
        if h0.nrows() != l || vmat.nrows() != l {
            return invalid("dimension mismatch between state and Hamiltonian");
        }
        if (0..l).any(|i| vmat[(i, i)] != 0.0) || vmat != vmat.transpose() {
            return invalid("interaction matrix must be symmetric with zero diagonal");
        }
        let defect = max_abs_diff(&(m.adjoint() * m), &DMatrix::identity(n, n));
        if defect > 1e-10 {
            return invalid(format!("orbitals are not orthonormal (defect {defect:e})"));
        }
        let rhs = OrbitalRhs::new(&Rhs::new(&h0, &vmat, opts.fock_sign), n);
        let ode = Dopri5::new(
            l * n,
            OdeOptions { rtol: opts.tol, atol: opts.tol, h_max: MAX_STEP, h_min: 1e-12, norm: ErrorNorm::Max, ..Default::default() },
        );
        Ok(Self { l, n, m: m.as_slice().to_vec(), h0, vmat, rhs, ode, since_reorth: 0, reorth_interval: l.max(16) })
    }

    pub fn from_occupations(occ: &[bool], h0: DMatrix<C64>, vmat: DMatrix<f64>, opts: TdhfOptions) -> Result<Self> {
        let l = occ.len();
        let sites: Vec<usize> = (0..l).filter(|&x| occ[x]).collect();
        let mut m = DMatrix::zeros(l, sites.len());
        for (b, &x) in sites.iter().enumerate() {
            m[(x, b)] = C64::new(1.0, 0.0);
        }
        Self::new(&m, h0, vmat, opts)
    }

    pub fn from_params(m: &DMatrix<C64>, p: &ModelParams, opts: TdhfOptions) -> Result<Self> {
        let h0 = crate::model::build_hamiltonian(p)?;
        Self::new(m, h0, interaction_matrix(p), opts)
    }

    pub fn particle_number(&self) -> usize {
        self.n
    }

    pub fn orbitals(&self) -> DMatrix<C64> {
        DMatrix::from_column_slice(self.l, self.n, &self.m)
    }

    pub fn energy(&self) -> f64 {
        hf_energy(&self.correlation(), &self.vmat, &self.h0)
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        if dt < 0.0 {
            return invalid("negative time step");
        }
        if dt == 0.0 || self.n == 0 {
            return Ok(());
        }
        let rhs = &mut self.rhs;
        self.ode.integrate(|_, y, dy| rhs.eval(y, dy), 0.0, dt, &mut self.m)?;
        self.normalize_columns();
        Ok(())
    }

    /// The exact maps are isometries; restoring column norms keeps tr D = N.
    fn normalize_columns(&mut self) {
        for col in self.m.chunks_mut(self.l) {
            let s = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            col.iter_mut().for_each(|z| *z /= s);
        }
    }

    pub fn click_probability(&self, x: usize) -> f64 {
        (0..self.n).map(|b| self.m[x + b * self.l].norm_sqr()).sum()
    }

    /// Householder rotation of the columns leaving weight on site x only in
    /// column 0, then the projection of that column.
    pub fn project(&mut self, x: usize, outcome: Outcome) -> Result<f64> {
        let (l, n) = (self.l, self.n);
        let p = self.click_probability(x);
        check_branch(x, p, outcome)?;
        if n == 0 {
            return Ok(p);
        }
        let norm = p.sqrt();
        if norm > 1e-150 {
            let v: Vec<C64> = (0..n).map(|b| self.m[x + b * l].conj()).collect();
            let alpha = if v[0].norm() > 0.0 { -v[0] / v[0].norm() } else { C64::new(-1.0, 0.0) };
            let mut w = v;
            w[0] -= alpha * norm;
            let ww: f64 = w.iter().map(|z| z.norm_sqr()).sum();
            if ww > 0.0 {
                let mut y = vec![C64::new(0.0, 0.0); l];
                for (b, wb) in w.iter().enumerate() {
                    for k in 0..l {
                        y[k] += self.m[k + b * l] * wb;
                    }
                }
                for (b, wb) in w.iter().enumerate() {
                    let f = wb.conj() * (2.0 / ww);
                    for k in 0..l {
                        self.m[k + b * l] -= y[k] * f;
                    }
                }
            }
        }
        for b in 1..n {
            self.m[x + b * l] = C64::new(0.0, 0.0);
        }
        match outcome {
            Outcome::Click => {
                self.m[..l].iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                self.m[x] = C64::new(1.0, 0.0);
            }
            Outcome::NoClick => self.m[x] = C64::new(0.0, 0.0),
        }
        self.normalize_columns();
        self.since_reorth += 1;
        if self.since_reorth >= self.reorth_interval {
            self.reorthonormalize();
        }
        Ok(p)
    }

    /// Modified Gram-Schmidt on the columns.
    fn reorthonormalize(&mut self) {
        let l = self.l;
        for b in 0..self.n {
            for a in 0..b {
                let (head, tail) = self.m.split_at_mut(b * l);
                let ca = &head[a * l..(a + 1) * l];
                let cb = &mut tail[..l];
                let ov: C64 = ca.iter().zip(cb.iter()).map(|(u, v)| u.conj() * v).sum();
                for k in 0..l {
                    cb[k] -= ca[k] * ov;
                }
            }
            let col = &mut self.m[b * l..(b + 1) * l];
            let s = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            col.iter_mut().for_each(|z| *z /= s);
        }
        self.since_reorth = 0;
    }

    /// max |M^dagger M - 1|.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.orbitals();
        max_abs_diff(&(m.adjoint() * &m), &DMatrix::identity(self.n, self.n))
    }
}

impl TrajectoryState for TdhfOrbitals {
    fn dim(&self) -> usize {
        self.l
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        self.step(dt)
    }

    fn measure(&mut self, x: usize, choose: &mut dyn FnMut(f64) -> Result<Outcome>) -> Result<(f64, Outcome)> {
        let p = self.click_probability(x);
        let o = choose(p)?;
        self.project(x, o)?;
        Ok((p, o))
    }

    fn correlation(&self) -> DMatrix<C64> {
        let m = self.orbitals();
        let mut d = &m * m.adjoint();
        hermitize(&mut d);
        d
    }

    fn check(&self) -> Result<()> {
        let defect = self.orthonormality_defect();
        if !(defect <= DRIFT_ABORT) {
            return Err(Error::InvariantViolation(format!("orbital orthonormality defect {defect:e}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{born_outcome, run_trajectory, BornSampler, DenseGaussian, Replay};
    use crate::linalg::Propagator;
    use crate::model::{build_hamiltonian, Boundary};
    use crate::observables::testutil::{random_orbitals, random_pure_d};
    use crate::oracle::{ExactPropagator, ExactState, SectorBasis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn free_limit_is_bare_hamiltonian() {
        let p = ModelParams { l: 6, ..Default::default() };
        let h0 = build_hamiltonian(&p).unwrap();
        let d = random_pure_d(6, 3, 1);
        assert_eq!(hf_hamiltonian(&d, &interaction_matrix(&p), &h0), h0);
    }

    #[test]
    fn two_site_hartree_shift() {
        let p = ModelParams { l: 2, v: 1.0, ..Default::default() };
        let h0 = build_hamiltonian(&p).unwrap();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(0.0)]));
        let h = hf_hamiltonian(&d, &interaction_matrix(&p), &h0);
        assert_eq!(h[(1, 1)], c(1.0));
        assert_eq!(h[(0, 0)], c(0.0));
        assert_eq!(h[(0, 1)], c(-1.0));
    }

    #[test]
    fn hf_hamiltonian_is_hermitian() {
        let p = ModelParams { l: 9, v: 1.3, j2: C64::new(0.2, 0.1), boundary: Boundary::Periodic, ..Default::default() };
        let h0 = build_hamiltonian(&p).unwrap();
        let h = hf_hamiltonian(&random_pure_d(9, 4, 2), &interaction_matrix(&p), &h0);
        assert_eq!(h.adjoint(), h);
    }

    #[test]
    fn energy_examples() {
        let p = ModelParams { l: 2, v: 1.0, ..Default::default() };
        let h0 = build_hamiltonian(&p).unwrap();
        let vm = interaction_matrix(&p);
        let full = DMatrix::from_diagonal_element(2, 2, c(1.0));
        assert!((hf_energy(&full, &vm, &h0) - 1.0).abs() < 1e-15);
        // Free eigenstate: sum of occupied eigenvalues.
        let q = ModelParams { l: 8, ..Default::default() };
        let prop = Propagator::new(&build_hamiltonian(&q).unwrap()).unwrap();
        let mut occ = DMatrix::<C64>::zeros(8, 8);
        for k in 0..3 {
            occ[(k, k)] = c(1.0);
        }
        let d = prop.w.map(|z| z.conj()) * occ * prop.w.transpose();
        let e = hf_energy(&d, &interaction_matrix(&q), &build_hamiltonian(&q).unwrap());
        assert!((e - prop.eps[..3].iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn free_tdhf_matches_unitary_evolution() {
        let p = ModelParams { l: 10, j2: C64::new(0.0, 0.3), ..Default::default() };
        let m = random_orbitals(10, 5, 3);
        let mut hf = TdhfState::from_params(CorrelationMatrix::from_orbitals(&m), &p, TdhfOptions::default()).unwrap();
        let mut d = CorrelationMatrix::from_orbitals(&m);
        let prop = Propagator::new(&build_hamiltonian(&p).unwrap()).unwrap();
        hf.step(10.0).unwrap();
        d.evolve(&prop, 10.0).unwrap();
        assert!(max_abs_diff(hf.matrix(), d.matrix()) < 1e-6);
    }

    #[test]
    fn energy_and_number_conserved() {
        let p = ModelParams { l: 8, v: 1.0, ..Default::default() };
        let m = random_orbitals(8, 4, 4);
        let mut hf = TdhfState::from_params(CorrelationMatrix::from_orbitals(&m), &p, TdhfOptions::default()).unwrap();
        let e0 = hf.energy();
        let n0 = trace_re(hf.matrix());
        hf.step(5.0).unwrap();
        assert!((hf.energy() - e0).abs() < 1e-6, "drift {}", hf.energy() - e0);
        assert!((trace_re(hf.matrix()) - n0).abs() < 1e-10);
    }

    #[test]
    fn derivative_matches_exact_for_slater_states() {
        // For a Slater determinant the mean-field equation of motion of D is exact at t = 0.
        let p = ModelParams { l: 8, v: 0.7, j2: C64::new(0.1, 0.2), boundary: Boundary::Periodic, ..Default::default() };
        let basis = Arc::new(SectorBasis::new(8, 4).unwrap());
        let prop = Arc::new(ExactPropagator::new(&p, &basis).unwrap());
        let m = random_orbitals(8, 4, 8);
        let exact = ExactState::from_orbitals(&m, basis, prop).unwrap().correlation_derivative();
        let mut hf = TdhfState::from_params(CorrelationMatrix::from_orbitals(&m), &p, TdhfOptions::default()).unwrap();
        assert!(max_abs_diff(&hf.derivative(), &exact) < 1e-12);
        let flipped = TdhfOptions { fock_sign: -1.0, ..Default::default() };
        let mut bad = TdhfState::from_params(CorrelationMatrix::from_orbitals(&m), &p, flipped).unwrap();
        assert!(max_abs_diff(&bad.derivative(), &exact) > 1e-3);
    }

    #[test]
    fn short_time_error_grows_monotonically() {
        let p = ModelParams { l: 8, v: 0.5, ..Default::default() };
        let basis = Arc::new(SectorBasis::new(8, 4).unwrap());
        let prop = Arc::new(ExactPropagator::new(&p, &basis).unwrap());
        let occ = [true, false, true, false, true, false, true, false];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sched: Vec<(f64, usize)> = (0..6).map(|_| (rng.random::<f64>(), rng.random_range(0..8))).collect();
        sched.sort_by(|a, b| a.0.total_cmp(&b.0));
        let probes: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
        let mut ex = ExactState::from_occupations(&occ, basis, prop).unwrap();
        let mut dens_ex = Vec::new();
        let events = run_trajectory(&mut ex, &sched, &probes, &mut BornSampler { rng: &mut rng }, |_, s| {
            dens_ex.push(s.correlation().diagonal().map(|z| z.re));
            Ok(())
        })
        .unwrap();
        let outcomes: Vec<Outcome> = events.iter().map(|e| e.outcome).collect();
        let mut hf = TdhfState::from_params(CorrelationMatrix::from_occupations(&occ), &p, TdhfOptions::default()).unwrap();
        let mut errs = Vec::new();
        let mut k = 0;
        run_trajectory(&mut hf, &sched, &probes, &mut Replay::new(&outcomes), |_, s| {
            let dn = s.correlation().diagonal().map(|z| z.re);
            errs.push((dn - &dens_ex[k]).amax());
            k += 1;
            Ok(())
        })
        .unwrap();
        // Error is second order in V t: small at t = 0.1, bounded by C V^2 t^2 up to t = 1.
        assert!(errs[0] < 1e-2, "{errs:?}");
        for (i, e) in errs.iter().enumerate() {
            let t = probes[i];
            assert!(*e <= 2.0 * p.v * p.v * t * t + 1e-12, "t={t} err={e}");
        }
        assert!(errs[9] > errs[0]);
    }

    #[test]
    fn free_tdhf_trajectory_matches_gaussian_engine() {
        let p = ModelParams { l: 12, gamma: 0.5, ..Default::default() };
        let prop = Arc::new(Propagator::new(&build_hamiltonian(&p).unwrap()).unwrap());
        let occ: Vec<bool> = (0..12).map(|x| x < 6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sched: Vec<(f64, usize)> = (0..60).map(|_| (rng.random::<f64>() * 10.0, rng.random_range(0..12))).collect();
        sched.sort_by(|a, b| a.0.total_cmp(&b.0));
        let probes = [2.0, 5.0, 10.0];
        let mut g = DenseGaussian::new(CorrelationMatrix::from_occupations(&occ), prop);
        let mut snaps = Vec::new();
        let events = run_trajectory(&mut g, &sched, &probes, &mut BornSampler { rng: &mut rng }, |_, s| {
            snaps.push(s.correlation());
            Ok(())
        })
        .unwrap();
        let outcomes: Vec<Outcome> = events.iter().map(|e| e.outcome).collect();
        let mut hf = TdhfState::from_params(CorrelationMatrix::from_occupations(&occ), &p, TdhfOptions::default()).unwrap();
        let mut k = 0;
        run_trajectory(&mut hf, &sched, &probes, &mut Replay::new(&outcomes), |_, s| {
            assert!(max_abs_diff(&s.correlation(), &snaps[k]) < 1e-6);
            k += 1;
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn orbital_form_matches_matrix_form() {
        let p = ModelParams { l: 10, v: 1.0, gamma: 0.5, j2: C64::new(0.1, 0.2), ..Default::default() };
        let occ: Vec<bool> = (0..10).map(|x| x % 2 == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sched: Vec<(f64, usize)> = (0..50).map(|_| (rng.random::<f64>() * 10.0, rng.random_range(0..10))).collect();
        sched.sort_by(|a, b| a.0.total_cmp(&b.0));
        let probes = [1.0, 4.0, 10.0];
        let tight = TdhfOptions { tol: 1e-11, ..Default::default() };
        let mut d = TdhfState::from_params(CorrelationMatrix::from_occupations(&occ), &p, tight).unwrap();
        let mut snaps = Vec::new();
        let events = run_trajectory(&mut d, &sched, &probes, &mut BornSampler { rng: &mut rng }, |_, s| {
            snaps.push(s.correlation());
            Ok(())
        })
        .unwrap();
        let outcomes: Vec<Outcome> = events.iter().map(|e| e.outcome).collect();
        let h0 = build_hamiltonian(&p).unwrap();
        let mut o = TdhfOrbitals::from_occupations(&occ, h0, interaction_matrix(&p), tight).unwrap();
        let mut k = 0;
        run_trajectory(&mut o, &sched, &probes, &mut Replay::new(&outcomes), |_, s| {
            let dev = max_abs_diff(&s.correlation(), &snaps[k]);
            assert!(dev < 1e-7, "probe {k}: {dev:e}");
            k += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(k, 3);
    }

    #[test]
    fn orbital_form_keeps_number_and_energy() {
        let p = ModelParams { l: 24, v: 1.0, gamma: 0.3, ..Default::default() };
        let occ: Vec<bool> = (0..24).map(|x| x % 2 == 0).collect();
        let h0 = build_hamiltonian(&p).unwrap();
        let mut o = TdhfOrbitals::from_occupations(&occ, h0, interaction_matrix(&p), TdhfOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..400 {
            let e0 = o.energy();
            o.step(0.37).unwrap();
            assert!((o.energy() - e0).abs() < 1e-6 * 0.37);
            let x = rng.random_range(0..24);
            let pc = o.click_probability(x);
            let out = born_outcome(pc, rng.random());
            o.project(x, out).unwrap();
            let tr = trace_re(&o.correlation());
            assert!((tr - 12.0).abs() < 1e-10, "{tr}");
        }
        // Orthogonality drifts at the integrator tolerance between Gram-Schmidt passes.
        let defect = o.orthonormality_defect();
        assert!(defect < 1e-7, "{defect:e}");
        o.check().unwrap();
        let d = o.correlation();
        assert!(max_abs_diff(&(&d * &d), &d) < 1e-7);
    }

    #[test]
    fn orbital_form_rejects_bad_input() {
        let p = ModelParams { l: 4, v: 1.0, ..Default::default() };
        let m = DMatrix::from_element(4, 2, C64::new(1.0, 0.0));
        assert!(TdhfOrbitals::from_params(&m, &p, TdhfOptions::default()).is_err());
        let mut o = TdhfOrbitals::from_params(&random_orbitals(4, 2, 1), &p, TdhfOptions::default()).unwrap();
        assert!(o.step(-1.0).is_err());
    }
}
