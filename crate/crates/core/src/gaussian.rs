//! Exact evolution of Gaussian (Slater-determinant) trajectories under
//! unitary hopping and projective density measurements.

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_hermitian, hermitize, max_hermiticity_defect, trace_re, Propagator};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Probabilities closer than this to 0 or 1 force the outcome.
pub const BRANCH_EPS: f64 = 1e-12;
/// Hermiticity or trace drift beyond this aborts a trajectory.
pub const DRIFT_ABORT: f64 = 1e-6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Click,
    NoClick,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub t: f64,
    pub site: usize,
    pub outcome: Outcome,
    pub p_click: f64,
}

/// Born-rule outcome for a uniform draw u in [0, 1).
pub fn born_outcome(p: f64, u: f64) -> Outcome {
    if p < BRANCH_EPS {
        Outcome::NoClick
    } else if p > 1.0 - BRANCH_EPS || u < p {
        Outcome::Click
    } else {
        Outcome::NoClick
    }
}

pub fn check_branch(site: usize, p: f64, outcome: Outcome) -> Result<()> {
    let forbidden = match outcome {
        Outcome::Click => p < BRANCH_EPS,
        Outcome::NoClick => p > 1.0 - BRANCH_EPS,
    };
    if forbidden {
        Err(Error::ForbiddenBranch { site, p_click: p })
    } else {
        Ok(())
    }
}

/// A trajectory state that can be advanced in time and measured.
pub trait TrajectoryState {
    fn dim(&self) -> usize;
    fn advance(&mut self, dt: f64) -> Result<()>;
    /// Measure n_x. `choose` maps p_click to an outcome; returns (p_click, outcome).
    fn measure(&mut self, x: usize, choose: &mut dyn FnMut(f64) -> Result<Outcome>) -> Result<(f64, Outcome)>;
    fn correlation(&self) -> DMatrix<C64>;
    /// Verify state invariants; called at probe times.
    fn check(&self) -> Result<()> {
        Ok(())
    }
}

/// Source of measurement outcomes: Born sampling or a replayed record.
pub trait OutcomeSource {
    fn next_outcome(&mut self, p_click: f64) -> Result<Outcome>;
}

pub struct BornSampler<'a, R: rand::Rng> {
    pub rng: &'a mut R,
}

impl<R: rand::Rng> OutcomeSource for BornSampler<'_, R> {
    fn next_outcome(&mut self, p: f64) -> Result<Outcome> {
        let u: f64 = self.rng.random();
        Ok(born_outcome(p, u))
    }
}

/// Replays a fixed outcome list in order.
pub struct Replay<'a> {
    outcomes: &'a [Outcome],
    pos: usize,
}

impl<'a> Replay<'a> {
    pub fn new(outcomes: &'a [Outcome]) -> Self {
        Self { outcomes, pos: 0 }
    }
}

impl OutcomeSource for Replay<'_> {
    fn next_outcome(&mut self, _p: f64) -> Result<Outcome> {
        let o = self
            .outcomes
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::InvalidParams("replayed outcome record exhausted".into()))?;
        self.pos += 1;
        Ok(o)
    }
}

/// Drive a state through a measurement schedule, calling `on_probe` at each
/// probe time. Events at a probe time are applied before the probe.
pub fn run_trajectory<S, F>(
    state: &mut S,
    schedule: &[(f64, usize)],
    probes: &[f64],
    outcomes: &mut dyn OutcomeSource,
    mut on_probe: F,
) -> Result<Vec<MeasurementEvent>>
where
    S: TrajectoryState + ?Sized,
    F: FnMut(f64, &S) -> Result<()>,
{
    if schedule.windows(2).any(|w| w[1].0 < w[0].0) || schedule.first().is_some_and(|e| e.0 < 0.0) {
        return invalid("schedule must be sorted by non-negative time");
    }
    if probes.windows(2).any(|w| w[1] < w[0]) || probes.first().is_some_and(|&t| t < 0.0) {
        return invalid("probe times must be sorted and non-negative");
    }
    let l = state.dim();
    if let Some(&(_, x)) = schedule.iter().find(|e| e.1 >= l) {
        return invalid(format!("scheduled site {x} outside lattice"));
    }
    let mut events = Vec::with_capacity(schedule.len());
    let mut t = 0.0;
    let mut next = 0;
    for &tp in probes {
        while next < schedule.len() && schedule[next].0 <= tp {
            let (te, x) = schedule[next];
            state.advance(te - t)?;
            t = te;
            let (p_click, outcome) = state.measure(x, &mut |p| outcomes.next_outcome(p))?;
            events.push(MeasurementEvent { t, site: x, outcome, p_click });
            next += 1;
        }
        state.advance(tp - t)?;
        t = tp;
        on_probe(t, state)?;
    }
    Ok(events)
}

/// Dense correlation matrix D_ij = <c_i^dagger c_j>.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    d: DMatrix<C64>,
}

impl CorrelationMatrix {
    pub fn from_occupations(occ: &[bool]) -> Self {
        let l = occ.len();
        let mut d = DMatrix::zeros(l, l);
        for (i, &o) in occ.iter().enumerate() {
            if o {
                d[(i, i)] = ONE;
            }
        }
        Self { d }
    }

    pub fn from_matrix(d: DMatrix<C64>) -> Result<Self> {
        check_hermitian(&d, 1e-10)?;
        Ok(Self { d })
    }

    pub fn from_orbitals(m: &DMatrix<C64>) -> Self {
        let mut d = m * m.adjoint();
        hermitize(&mut d);
        Self { d }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.d
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn particle_number(&self) -> f64 {
        trace_re(&self.d)
    }

    /// D' = E D E^dagger with E = exp(i h^T dt).
    pub fn evolve(&mut self, prop: &Propagator, dt: f64) -> Result<()> {
        if dt < 0.0 {
            return invalid("negative time step");
        }
        if dt == 0.0 {
            return Ok(());
        }
        let e = prop.evolution_matrix(dt);
        self.d = &e * &self.d * e.adjoint();
        hermitize(&mut self.d);
        Ok(())
    }

    pub fn click_probability(&self, x: usize) -> f64 {
        self.d[(x, x)].re
    }

    /// Apply the projector for a given outcome; fails on a forbidden branch.
    pub fn project(&mut self, x: usize, outcome: Outcome) -> Result<f64> {
        let l = self.dim();
        let p = self.click_probability(x);
        check_branch(x, p, outcome)?;
        let col: Vec<C64> = (0..l).map(|i| self.d[(i, x)]).collect();
        let (scale, fill) = match outcome {
            Outcome::Click => (-1.0 / p, ONE),
            Outcome::NoClick => (1.0 / (1.0 - p), ZERO),
        };
        for j in 0..l {
            // D_xj = conj(D_jx)
            let f = col[j].conj() * scale;
            for i in 0..l {
                self.d[(i, j)] += col[i] * f;
            }
        }
        for i in 0..l {
            self.d[(i, x)] = ZERO;
            self.d[(x, i)] = ZERO;
        }
        self.d[(x, x)] = fill;
        Ok(p)
    }

    /// Born-rule measurement with uniform draw u.
    pub fn measure_site(&mut self, x: usize, u: f64, t: f64) -> Result<MeasurementEvent> {
        let p = self.click_probability(x);
        let outcome = born_outcome(p, u);
        self.project(x, outcome)?;
        Ok(MeasurementEvent { t, site: x, outcome, p_click: p })
    }

    pub fn check_invariants(&self, n_expected: f64) -> Result<()> {
        let herm = max_hermiticity_defect(&self.d);
        let drift = (self.particle_number() - n_expected).abs();
        if herm > DRIFT_ABORT || drift > DRIFT_ABORT || !herm.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "hermiticity defect {herm:e}, trace drift {drift:e}"
            )));
        }
        Ok(())
    }
}

/// evolve_unitary with an explicit Hamiltonian (rejects non-Hermitian h).
pub fn evolve_unitary(d: &CorrelationMatrix, h: &DMatrix<C64>, dt: f64) -> Result<CorrelationMatrix> {
    check_hermitian(h, 1e-12)?;
    let prop = Propagator::new(h)?;
    let mut out = d.clone();
    out.evolve(&prop, dt)?;
    Ok(out)
}

/// Dense-D engine state: the correlation matrix plus a shared propagator.
#[derive(Clone, Debug)]
pub struct DenseGaussian {
    pub state: CorrelationMatrix,
    prop: Arc<Propagator>,
    n: f64,
}

impl DenseGaussian {
    pub fn new(state: CorrelationMatrix, prop: Arc<Propagator>) -> Self {
        let n = state.particle_number();
        Self { state, prop, n }
    }
}

impl TrajectoryState for DenseGaussian {
    fn dim(&self) -> usize {
        self.state.dim()
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        self.state.evolve(&self.prop, dt)
    }

    fn measure(&mut self, x: usize, choose: &mut dyn FnMut(f64) -> Result<Outcome>) -> Result<(f64, Outcome)> {
        let p = self.state.click_probability(x);
        let o = choose(p)?;
        self.state.project(x, o)?;
        Ok((p, o))
    }

    fn correlation(&self) -> DMatrix<C64> {
        self.state.d.clone()
    }

    fn check(&self) -> Result<()> {
        self.state.check_invariants(self.n)
    }
}

/// Orbital representation D = M M^dagger with M of size L x N.
///
/// M is stored in the interaction frame A = Phi(t)^{-1} W^T M with
/// Phi(t) = diag(e^{i eps t}), so unitary steps only advance the clock.
#[derive(Clone, Debug)]
pub struct OrbitalFrame {
    l: usize,
    n: usize,
    /// Column-major L x N.
    a: Vec<C64>,
    t: f64,
    prop: Arc<Propagator>,
    since_reorth: usize,
    pub reorth_interval: usize,
}

impl OrbitalFrame {
    pub fn from_occupations(occ: &[bool], prop: Arc<Propagator>) -> Result<Self> {
        let l = occ.len();
        if prop.dim() != l {
            return invalid("propagator dimension mismatch");
        }
        let sites: Vec<usize> = (0..l).filter(|&x| occ[x]).collect();
        let n = sites.len();
        let mut a = vec![ZERO; l * n];
        for (j, &x) in sites.iter().enumerate() {
            a[j * l..(j + 1) * l].copy_from_slice(prop.w_row(x));
        }
        Ok(Self { l, n, a, t: 0.0, prop, since_reorth: 0, reorth_interval: 4 * l.max(16) })
    }

    /// Start from explicit orthonormal orbitals M (site frame) at t = 0.
    pub fn from_orbitals(m: &DMatrix<C64>, prop: Arc<Propagator>) -> Result<Self> {
        let l = m.nrows();
        if prop.dim() != l {
            return invalid("propagator dimension mismatch");
        }
        let n = m.ncols();
        let at = prop.w.transpose() * m;
        let a = at.as_slice().to_vec();
        let mut f = Self { l, n, a, t: 0.0, prop, since_reorth: 0, reorth_interval: 4 * l.max(16) };
        f.reorthonormalize();
        Ok(f)
    }

    pub fn particle_number(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    fn phases(&self) -> Vec<C64> {
        self.prop.eps.iter().map(|e| C64::from_polar(1.0, e * self.t)).collect()
    }

    /// Phi(t)^{-1} W^T e_x, the interaction-frame image of site x.
    fn site_vector(&self, x: usize) -> Vec<C64> {
        self.prop
            .w_row(x)
            .iter()
            .zip(&self.prop.eps)
            .map(|(w, e)| *w * C64::from_polar(1.0, -e * self.t))
            .collect()
    }

    /// Row x of M in the site frame.
    fn site_row(&self, x: usize) -> Vec<C64> {
        let l = self.l;
        let phi: Vec<C64> = self
            .prop
            .w_row(x)
            .iter()
            .zip(&self.prop.eps)
            .map(|(w, e)| w.conj() * C64::from_polar(1.0, e * self.t))
            .collect();
        (0..self.n)
            .map(|j| {
                let col = &self.a[j * l..(j + 1) * l];
                let mut s = ZERO;
                for k in 0..l {
                    s += phi[k] * col[k];
                }
                s
            })
            .collect()
    }

    pub fn click_probability(&self, x: usize) -> f64 {
        self.site_row(x).iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn project(&mut self, x: usize, outcome: Outcome) -> Result<f64> {
        let row = self.site_row(x);
        self.project_row(x, row, outcome)
    }

    /// Projection given row x of M in the site frame.
    fn project_row(&mut self, x: usize, row: Vec<C64>, outcome: Outcome) -> Result<f64> {
        let l = self.l;
        let p: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        check_branch(x, p, outcome)?;
        if self.n == 0 {
            return Ok(p);
        }
        let norm = p.sqrt();
        if norm > 1e-150 {
            // Householder on columns so that only column 0 has weight on site x.
            // v = r^dagger, H v = alpha |v| e_1, w = v - alpha |v| e_1.
            let v: Vec<C64> = row.iter().map(|z| z.conj()).collect();
            let alpha = if v[0].norm() > 0.0 { -v[0] / v[0].norm() } else { -ONE };
            let mut w = v;
            w[0] -= alpha * norm;
            let ww: f64 = w.iter().map(|z| z.norm_sqr()).sum();
            if ww > 0.0 {
                let mut y = vec![ZERO; l];
                for (j, wj) in w.iter().enumerate() {
                    if *wj == ZERO {
                        continue;
                    }
                    let col = &self.a[j * l..(j + 1) * l];
                    for k in 0..l {
                        y[k] += col[k] * wj;
                    }
                }
                for (j, wj) in w.iter().enumerate() {
                    let f = wj.conj() * (2.0 / ww);
                    if f == ZERO {
                        continue;
                    }
                    let col = &mut self.a[j * l..(j + 1) * l];
                    for k in 0..l {
                        col[k] -= y[k] * f;
                    }
                }
            }
        }
        let ex = self.site_vector(x);
        match outcome {
            Outcome::Click => {
                self.a[..l].copy_from_slice(&ex);
            }
            Outcome::NoClick => {
                // Column 0 currently has x-component c with |c|^2 = p.
                let col0 = &self.a[..l];
                let phi: Vec<C64> = self.phases();
                let w = self.prop.w_row(x);
                let mut c = ZERO;
                for k in 0..l {
                    c += w[k].conj() * phi[k] * col0[k];
                }
                let s = 1.0 / (1.0 - p).sqrt();
                let col0 = &mut self.a[..l];
                for k in 0..l {
                    col0[k] = (col0[k] - c * ex[k]) * s;
                }
            }
        }
        self.since_reorth += 1;
        if self.since_reorth >= self.reorth_interval {
            self.reorthonormalize();
        }
        Ok(p)
    }

    /// Modified Gram-Schmidt on the columns (norms are frame-independent).
    pub fn reorthonormalize(&mut self) {
        let l = self.l;
        for j in 0..self.n {
            for i in 0..j {
                let (lo, hi) = self.a.split_at_mut(j * l);
                let ci = &lo[i * l..(i + 1) * l];
                let cj = &mut hi[..l];
                let mut dot = ZERO;
                for k in 0..l {
                    dot += ci[k].conj() * cj[k];
                }
                for k in 0..l {
                    cj[k] -= ci[k] * dot;
                }
            }
            let cj = &mut self.a[j * l..(j + 1) * l];
            let nrm: f64 = cj.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for z in cj.iter_mut() {
                *z /= nrm;
            }
        }
        self.since_reorth = 0;
    }

    /// max |M^dagger M - 1|.
    pub fn orthonormality_defect(&self) -> f64 {
        let l = self.l;
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..=i {
                let ci = &self.a[i * l..(i + 1) * l];
                let cj = &self.a[j * l..(j + 1) * l];
                let dot: C64 = ci.iter().zip(cj).map(|(a, b)| a.conj() * b).sum();
                let target = if i == j { ONE } else { ZERO };
                m = m.max((dot - target).norm());
            }
        }
        m
    }

    /// Site-frame orbitals M = W* Phi(t) A.
    pub fn orbitals(&self) -> DMatrix<C64> {
        let phi = self.phases();
        let mut a = DMatrix::from_column_slice(self.l, self.n, &self.a);
        for k in 0..self.l {
            let ph = phi[k];
            for j in 0..self.n {
                a[(k, j)] *= ph;
            }
        }
        self.prop.w.map(|z| z.conj()) * a
    }

    pub fn correlation_matrix(&self) -> CorrelationMatrix {
        CorrelationMatrix::from_orbitals(&self.orbitals())
    }
}

impl TrajectoryState for OrbitalFrame {
    fn dim(&self) -> usize {
        self.l
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        if dt < 0.0 {
            return invalid("negative time step");
        }
        self.t += dt;
        Ok(())
    }

    fn measure(&mut self, x: usize, choose: &mut dyn FnMut(f64) -> Result<Outcome>) -> Result<(f64, Outcome)> {
        let row = self.site_row(x);
        let p: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        let o = choose(p)?;
        self.project_row(x, row, o)?;
        Ok((p, o))
    }

    fn correlation(&self) -> DMatrix<C64> {
        self.correlation_matrix().into_matrix()
    }

    fn check(&self) -> Result<()> {
        let defect = self.orthonormality_defect();
        if defect > DRIFT_ABORT || !defect.is_finite() {
            return Err(Error::InvariantViolation(format!("orbital orthonormality defect {defect:e}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::model::{build_hamiltonian, Boundary, ModelParams};
    use crate::observables::testutil::random_orbitals;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn bell() -> CorrelationMatrix {
        CorrelationMatrix::from_matrix(DMatrix::from_element(2, 2, c(0.5))).unwrap()
    }

    #[test]
    fn product_state_initialisation() {
        let d = CorrelationMatrix::from_occupations(&[true, false, true, false]);
        let diag: Vec<f64> = (0..4).map(|i| d.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(max_abs_diff(d.matrix(), &DMatrix::from_diagonal(&d.matrix().diagonal())), 0.0);
        let empty = CorrelationMatrix::from_occupations(&[false; 5]);
        assert_eq!(empty.particle_number(), 0.0);
    }

    #[test]
    fn two_site_rabi_oscillation() {
        let h = DMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(-1.0), c(0.0)]);
        let d0 = CorrelationMatrix::from_occupations(&[true, false]);
        for &t in &[0.3, 1.0, 2.2] {
            let d = evolve_unitary(&d0, &h, t).unwrap();
            assert!((d.matrix()[(1, 1)].re - t.sin().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_non_hermitian_h() {
        let h = DMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        assert!(evolve_unitary(&bell(), &h, 0.1).is_err());
    }

    #[test]
    fn stationary_state_is_invariant() {
        let p = ModelParams { l: 8, ..Default::default() };
        let h = build_hamiltonian(&p).unwrap();
        let prop = Propagator::new(&h).unwrap();
        // D = f(h^T) commutes with h^T: occupy the four lowest modes, D = W* P W^T.
        let mut occ = DMatrix::<C64>::zeros(8, 8);
        for k in 0..4 {
            occ[(k, k)] = ONE;
        }
        let d = prop.w.map(|z| z.conj()) * occ * prop.w.transpose();
        let mut s = CorrelationMatrix::from_matrix(d.clone()).unwrap();
        s.evolve(&prop, 3.7).unwrap();
        assert!(max_abs_diff(s.matrix(), &d) < 1e-12);
    }

    #[test]
    fn two_site_measurement_examples() {
        let mut d = bell();
        d.project(0, Outcome::Click).unwrap();
        assert_eq!(*d.matrix(), DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]));
        let mut d = bell();
        d.project(0, Outcome::NoClick).unwrap();
        assert_eq!(*d.matrix(), DMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]));
    }

    #[test]
    fn certain_click_leaves_state_unchanged() {
        let mut d = CorrelationMatrix::from_occupations(&[true, false, true]);
        let before = d.clone();
        for u in [0.0, 0.5, 0.999_999] {
            let ev = d.measure_site(0, u, 0.0).unwrap();
            assert_eq!(ev.outcome, Outcome::Click);
            assert_eq!(d, before);
        }
        assert!(matches!(d.project(1, Outcome::Click), Err(Error::ForbiddenBranch { .. })));
        assert!(matches!(d.project(0, Outcome::NoClick), Err(Error::ForbiddenBranch { .. })));
    }

    #[test]
    fn projection_is_idempotent() {
        let m = random_orbitals(8, 3, 2);
        for o in [Outcome::Click, Outcome::NoClick] {
            let mut d = CorrelationMatrix::from_orbitals(&m);
            d.project(4, o).unwrap();
            let once = d.clone();
            d.project(4, o).unwrap();
            assert_eq!(d, once);
        }
    }

    #[test]
    fn measurement_preserves_purity_and_trace() {
        let m = random_orbitals(10, 4, 7);
        let mut d = CorrelationMatrix::from_orbitals(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let x = rng.random_range(0..10);
            d.measure_site(x, rng.random(), 0.0).unwrap();
            let ev = crate::linalg::hermitian_eigenvalues(d.matrix());
            assert!(ev.iter().all(|&l| l.abs() < 1e-9 || (l - 1.0).abs() < 1e-9));
            assert!((d.particle_number() - 4.0).abs() < 1e-10);
            assert!(max_hermiticity_defect(d.matrix()) < 1e-12);
        }
    }

    #[test]
    fn unitary_steps_preserve_spectrum() {
        let p = ModelParams { l: 9, j2: C64::new(0.2, 0.3), ..Default::default() };
        let prop = Propagator::new(&build_hamiltonian(&p).unwrap()).unwrap();
        let m = random_orbitals(9, 4, 1);
        let mut d = CorrelationMatrix::from_orbitals(&m);
        d.project(2, Outcome::NoClick).unwrap();
        let before = crate::linalg::hermitian_eigenvalues(d.matrix());
        d.evolve(&prop, 1.3).unwrap();
        let after = crate::linalg::hermitian_eigenvalues(d.matrix());
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn random_schedule(rng: &mut ChaCha8Rng, l: usize, n: usize, t_max: f64) -> Vec<(f64, usize)> {
        let mut s: Vec<(f64, usize)> = (0..n).map(|_| (rng.random::<f64>() * t_max, rng.random_range(0..l))).collect();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        s
    }

    #[test]
    fn orbital_and_dense_paths_agree() {
        for (l, seed) in [(12usize, 1u64), (33, 2), (64, 3)] {
            let p = ModelParams { l, j1: 0.6, j2: C64::new(0.4, 0.0), boundary: Boundary::Periodic, ..Default::default() };
            let prop = Arc::new(Propagator::new(&build_hamiltonian(&p).unwrap()).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let occ: Vec<bool> = (0..l).map(|x| x % 2 == 0).collect();
            let schedule = random_schedule(&mut rng, l, 4 * l, 20.0);
            let probes = [5.0, 10.0, 20.0];
            let mut orb = OrbitalFrame::from_occupations(&occ, prop.clone()).unwrap();
            orb.reorth_interval = 7;
            let mut snaps_o = Vec::new();
            let mut sampler = BornSampler { rng: &mut rng };
            let events = run_trajectory(&mut orb, &schedule, &probes, &mut sampler, |_, s| {
                snaps_o.push(s.correlation());
                Ok(())
            })
            .unwrap();
            let outcomes: Vec<Outcome> = events.iter().map(|e| e.outcome).collect();
            let mut dense = DenseGaussian::new(CorrelationMatrix::from_occupations(&occ), prop.clone());
            let mut snaps_d = Vec::new();
            let replayed = run_trajectory(&mut dense, &schedule, &probes, &mut Replay::new(&outcomes), |_, s| {
                snaps_d.push(s.correlation());
                Ok(())
            })
            .unwrap();
            for (a, b) in events.iter().zip(&replayed) {
                assert!((a.p_click - b.p_click).abs() < 1e-8);
            }
            for (a, b) in snaps_o.iter().zip(&snaps_d) {
                assert!(max_abs_diff(a, b) < 1e-8, "L={l}: {}", max_abs_diff(a, b));
            }
            assert!(orb.orthonormality_defect() < 1e-9);
        }
    }

    #[test]
    fn empty_schedule_is_pure_hamiltonian_evolution() {
        let p = ModelParams { l: 6, ..Default::default() };
        let h = build_hamiltonian(&p).unwrap();
        let prop = Arc::new(Propagator::new(&h).unwrap());
        let occ = [true, true, true, false, false, false];
        let mut st = DenseGaussian::new(CorrelationMatrix::from_occupations(&occ), prop);
        let mut snap = None;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_trajectory(&mut st, &[], &[2.5], &mut BornSampler { rng: &mut rng }, |_, s| {
            snap = Some(s.correlation());
            Ok(())
        })
        .unwrap();
        let direct = evolve_unitary(&CorrelationMatrix::from_occupations(&occ), &h, 2.5).unwrap();
        assert!(max_abs_diff(&snap.unwrap(), direct.matrix()) < 1e-12);
    }

    #[test]
    fn tie_break_measures_before_probe() {
        let prop = Arc::new(Propagator::new(&DMatrix::zeros(2, 2)).unwrap());
        let mut st = DenseGaussian::new(bell(), prop);
        let mut seen = None;
        run_trajectory(&mut st, &[(1.0, 0)], &[1.0], &mut Replay::new(&[Outcome::Click]), |_, s| {
            seen = Some(s.correlation()[(0, 0)].re);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, Some(1.0));
    }

    #[test]
    fn rejects_unsorted_schedule() {
        let prop = Arc::new(Propagator::new(&DMatrix::zeros(2, 2)).unwrap());
        let mut st = DenseGaussian::new(bell(), prop);
        let r = run_trajectory(&mut st, &[(1.0, 0), (0.5, 1)], &[2.0], &mut Replay::new(&[]), |_, _| Ok(()));
        assert!(r.is_err());
    }
}
