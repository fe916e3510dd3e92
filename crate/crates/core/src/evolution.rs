//! Piecewise-constant time evolution of the annealer and adjoint-mode
//! gradients of the training losses with respect to the embedding matrix.
//!
//! Each step applies `exp(-i H(s_n) dt)` through the eigendecomposition of the
//! (real symmetric) step Hamiltonian. The backward pass replays the same
//! spectra: in the eigenbasis the derivative of a step unitary is the
//! Hadamard product of the perturbation with the divided differences
//!
//! ```text
//! Phi(a, b) = (e^{-i la dt} - e^{-i lb dt}) / (la - lb)
//!           = -i dt e^{-i (la + lb) dt / 2} sinc((la - lb) dt / 2)
//! ```
//!
//! The second form is used; it is exact and has no cancellation when the
//! eigenvalues nearly coincide.

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::classifier::loss::{evaluate_loss, LossKind};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::linalg::{herm_eig, real_sym_eig, ComplexMatrix, PauliTerm, QuantumState, RealSymEigen};
use crate::schedule::{
    embed_coefficients, real_hamiltonian, sine_basis, AnnealSpec, CoeffSource, EmbeddingMap,
    ScheduleCoefficients, StepSampling,
};

/// Gap below which a ground state is reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-9;
const NORM_DRIFT_TOL: f64 = 1e-10;
/// Retained spectra above this size are recomputed in the backward pass instead.
const RETAIN_BUDGET_BYTES: usize = 256 << 20;

/// Time discretization of `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionGrid {
    pub steps: usize,
    pub t_max: f64,
    pub dt: f64,
    /// Annealing fraction at which each step's Hamiltonian is frozen.
    pub points: Vec<f64>,
}

impl EvolutionGrid {
    pub fn new(t_max: f64, steps: usize, sampling: StepSampling) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSpec("grid needs at least one step".into()));
        }
        if !(t_max.is_finite() && t_max >= 0.0) {
            return Err(Error::InvalidSpec(format!("t_max = {t_max}")));
        }
        let n = steps as f64;
        let points = (0..steps)
            .map(|k| match sampling {
                StepSampling::Midpoint => (k as f64 + 0.5) / n,
                StepSampling::LeftEndpoint => k as f64 / n,
            })
            .collect();
        Ok(Self {
            steps,
            t_max,
            dt: t_max / n,
            points,
        })
    }

    pub fn for_spec(spec: &AnnealSpec) -> Self {
        Self::new(spec.t_max, spec.steps, spec.step_sampling).expect("validated spec")
    }
}

/// States along one evolution: the initial ground state and one per step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<QuantumState>,
    /// Per-step spectra, kept when the trajectory is meant for gradient replay.
    pub spectra: Vec<RealSymEigen>,
    initial: Option<RealSymEigen>,
}

impl Trajectory {
    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Worst entry-wise disagreement between an analytic gradient and a
/// finite-difference estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    /// Max relative error over entries whose finite-difference magnitude exceeds `1e-6`.
    pub max_rel_err: f64,
    /// Max absolute error over the remaining entries.
    pub max_abs_err_small: f64,
    pub entries: usize,
}

impl FdCheck {
    pub const MAGNITUDE_FLOOR: f64 = 1e-6;

    pub fn compare(analytic: &[f64], fd: &[f64]) -> Self {
        assert_eq!(analytic.len(), fd.len());
        let mut max_rel_err: f64 = 0.0;
        let mut max_abs_err_small: f64 = 0.0;
        for (a, f) in analytic.iter().zip(fd) {
            let err = (a - f).abs();
            if f.abs() > Self::MAGNITUDE_FLOOR {
                max_rel_err = max_rel_err.max(err / f.abs());
            } else {
                max_abs_err_small = max_abs_err_small.max(err);
            }
        }
        Self {
            max_rel_err,
            max_abs_err_small,
            entries: fd.len(),
        }
    }

    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_err < rel_tol && self.max_abs_err_small < abs_tol
    }
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    /// Same shape as the embedding matrix.
    pub grad_w: EmbeddingMap,
    pub loss_value: f64,
    pub fd_check: Option<FdCheck>,
}

impl GradientReport {
    pub fn attach_fd(&mut self, fd: &[f64]) -> FdCheck {
        let check = FdCheck::compare(&self.grad_w.w, fd);
        self.fd_check = Some(check);
        check
    }
}

/// Scalar objective over the final embedded states of a batch.
#[derive(Debug, Clone)]
pub enum Objective {
    Loss(LossKind),
    /// `sum_k <psi_k| O |psi_k>` for a Hermitian observable `O`.
    Expectation(ComplexMatrix),
}

/// Ground state of a Hermitian matrix. A gap below `1e-9` is logged and the
/// lowest-index eigenvector of the deterministic ordering is returned.
pub fn ground_state(h: &ComplexMatrix) -> Result<QuantumState> {
    let eig = herm_eig(h)?;
    if let Some(l1) = eig.eigenvalues.get(1) {
        let gap = l1 - eig.eigenvalues[0];
        if gap < DEGENERACY_GAP {
            warn!("degenerate ground state (gap {gap:e}); using the first eigenvector");
        }
    }
    QuantumState::new(eig.eigenvector(0))
}

/// `V^T psi`
fn project(v: &DMatrix<f64>, psi: &[Complex64]) -> Vec<Complex64> {
    (0..v.ncols())
        .map(|k| {
            v.column(k)
                .iter()
                .zip(psi)
                .map(|(a, b)| b * *a)
                .sum()
        })
        .collect()
}

/// `V x`
fn lift(v: &DMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); v.nrows()];
    for (k, xk) in x.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(v.column(k).iter()) {
            *o += xk * *a;
        }
    }
    out
}

/// `V diag(exp(sign * i * lambda * dt)) V^T psi`
fn propagate(eig: &RealSymEigen, dt: f64, psi: &[Complex64], sign: f64) -> Vec<Complex64> {
    if dt == 0.0 {
        return psi.to_vec();
    }
    let mut t = project(&eig.eigenvectors, psi);
    for (z, l) in t.iter_mut().zip(&eig.eigenvalues) {
        *z *= Complex64::from_polar(1.0, sign * l * dt);
    }
    lift(&eig.eigenvectors, &t)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn check_norm(psi: &[Complex64]) -> Result<()> {
    let norm = crate::linalg::norm2(psi);
    if (norm - 1.0).abs() >= NORM_DRIFT_TOL {
        return Err(Error::NonFinite(format!("state norm drifted to {norm}")));
    }
    Ok(())
}

/// Evolution engine bound to one annealer and grid.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    pub spec: &'a AnnealSpec,
    pub grid: &'a EvolutionGrid,
    terms: Vec<PauliTerm>,
    basis: Vec<Vec<f64>>,
    fixed_initial: Option<RealSymEigen>,
}

impl<'a> Engine<'a> {
    pub fn new(spec: &'a AnnealSpec, grid: &'a EvolutionGrid) -> Result<Self> {
        spec.validate()?;
        let terms = spec.layout().terms();
        let basis = grid.points.iter().map(|&s| sine_basis(spec.n_sines, s)).collect();
        let mut engine = Self {
            spec,
            grid,
            terms,
            basis,
            fixed_initial: None,
        };
        if spec.coeff_source == CoeffSource::FieldsFixed {
            let zero = ScheduleCoefficients::zeros(spec);
            engine.fixed_initial = Some(engine.initial_spectrum(&zero)?);
        }
        Ok(engine)
    }

    fn initial_spectrum(&self, coeffs: &ScheduleCoefficients) -> Result<RealSymEigen> {
        let amps = self.spec.term_amplitudes(coeffs, 0.0)?;
        let eig = real_sym_eig(real_hamiltonian(self.spec.n_qubits, &self.terms, &amps))?;
        if let Some(l1) = eig.eigenvalues.get(1) {
            let gap = l1 - eig.eigenvalues[0];
            if gap < DEGENERACY_GAP {
                warn!("H(0) ground state is degenerate (gap {gap:e}); using the first eigenvector");
            }
        }
        Ok(eig)
    }

    fn step_spectrum(&self, coeffs: &ScheduleCoefficients, step: usize) -> Result<RealSymEigen> {
        let amps = self.spec.term_amplitudes(coeffs, self.grid.points[step])?;
        real_sym_eig(real_hamiltonian(self.spec.n_qubits, &self.terms, &amps))
    }

    /// Runs the evolution; `retain` keeps per-step spectra for [`Engine::backward`].
    pub fn evolve(&self, coeffs: &ScheduleCoefficients, retain: bool) -> Result<Trajectory> {
        self.spec.check_coeffs(coeffs)?;
        let initial = match &self.fixed_initial {
            Some(e) => e.clone(),
            None => self.initial_spectrum(coeffs)?,
        };
        let psi0: Vec<Complex64> = initial
            .eigenvectors
            .column(0)
            .iter()
            .map(|&a| Complex64::new(a, 0.0))
            .collect();
        let mut states = Vec::with_capacity(self.grid.steps + 1);
        let mut spectra = Vec::with_capacity(if retain { self.grid.steps } else { 0 });
        let mut psi = psi0;
        states.push(QuantumState::from_unchecked(psi.clone()));
        for step in 0..self.grid.steps {
            let eig = self.step_spectrum(coeffs, step)?;
            psi = propagate(&eig, self.grid.dt, &psi, -1.0);
            check_norm(&psi)?;
            states.push(QuantumState::from_unchecked(psi.clone()));
            if retain {
                spectra.push(eig);
            }
        }
        Ok(Trajectory {
            states,
            spectra,
            initial: retain.then_some(initial),
        })
    }

    /// Final state only, without keeping the intermediate states.
    pub fn final_state(&self, coeffs: &ScheduleCoefficients) -> Result<Vec<Complex64>> {
        self.spec.check_coeffs(coeffs)?;
        let mut psi: Vec<Complex64> = match &self.fixed_initial {
            Some(e) => e.eigenvectors.column(0).iter().map(|&a| Complex64::new(a, 0.0)).collect(),
            None => self
                .initial_spectrum(coeffs)?
                .eigenvectors
                .column(0)
                .iter()
                .map(|&a| Complex64::new(a, 0.0))
                .collect(),
        };
        for step in 0..self.grid.steps {
            let eig = self.step_spectrum(coeffs, step)?;
            psi = propagate(&eig, self.grid.dt, &psi, -1.0);
            check_norm(&psi)?;
        }
        Ok(psi)
    }

    /// `dL/dH_t` for every Pauli term `t` of one step, given the state entering
    /// the step and the costate leaving it.
    fn step_term_grads(&self, eig: &RealSymEigen, psi_in: &[Complex64], chi_out: &[Complex64]) -> Vec<f64> {
        let v = &eig.eigenvectors;
        let lam = &eig.eigenvalues;
        let dim = lam.len();
        let dt = self.grid.dt;
        let n = self.spec.n_qubits;
        let psi_t = project(v, psi_in);
        let chi_t = project(v, chi_out);

        // Re B_ab = Re(conj(chi_a) Phi_ab psi_b)
        let mut b_re = DMatrix::<f64>::zeros(dim, dim);
        for bcol in 0..dim {
            for a in 0..dim {
                let x = 0.5 * (lam[a] - lam[bcol]) * dt;
                let phase = Complex64::from_polar(1.0, -0.5 * (lam[a] + lam[bcol]) * dt);
                let phi = Complex64::new(0.0, -dt * sinc(x)) * phase;
                b_re[(a, bcol)] = (chi_t[a].conj() * phi * psi_t[bcol]).re;
            }
        }
        // Re C = V Re(B) V^T; only the entries touched by the Pauli terms are needed.
        let vb = v * &b_re;
        let vb_t = vb.transpose();
        let v_t = v.transpose();
        let entry = |i: usize, j: usize| vb_t.column(i).dot(&v_t.column(j));
        let diag: Vec<f64> = (0..dim).map(|i| entry(i, i)).collect();
        self.terms
            .iter()
            .map(|t| {
                let mask = t.flip_mask(n);
                let sum: f64 = if mask == 0 {
                    (0..dim).map(|i| t.sign(i, n) * diag[i]).sum()
                } else {
                    (0..dim).map(|i| entry(i, i ^ mask)).sum()
                };
                2.0 * sum
            })
            .collect()
    }

    /// Gradient of a scalar with respect to the coefficient vector, given the
    /// final costate `chi` (`dL = 2 Re <chi | d psi_N>`). Spectra missing from
    /// `traj` are recomputed.
    pub fn backward(
        &self,
        coeffs: &ScheduleCoefficients,
        traj: &Trajectory,
        chi_final: Vec<Complex64>,
    ) -> Result<Vec<f64>> {
        let spec = self.spec;
        let n = spec.n_qubits;
        let m = spec.term_count();
        let n_s = spec.n_sines;
        let mut grad = vec![0.0; spec.coeff_len()];
        let data_driven = spec.coeff_source == CoeffSource::FieldsDataDriven;
        let tail = n_s * m;

        let mut chi = chi_final;
        for step in (0..self.grid.steps).rev() {
            let recomputed;
            let eig = match traj.spectra.get(step) {
                Some(e) => e,
                None => {
                    recomputed = self.step_spectrum(coeffs, step)?;
                    &recomputed
                }
            };
            let psi_in = traj.states[step].amplitudes();
            let g = self.step_term_grads(eig, psi_in, &chi);
            let s = self.grid.points[step];
            let basis = &self.basis[step];
            for (t, gt) in g.iter().enumerate() {
                for (k, b) in basis.iter().enumerate() {
                    grad[t * n_s + k] += gt * b;
                }
            }
            if data_driven {
                // tail layout: hx (n), hz (n), J (n - 1); term layout: Z (n), X (n), ZZ (n - 1)
                for i in 0..n {
                    grad[tail + i] += g[n + i] * (1.0 - s);
                    grad[tail + n + i] += g[i] * s;
                }
                for i in 0..n - 1 {
                    grad[tail + 2 * n + i] += g[2 * n + i] * s;
                }
            }
            chi = propagate(eig, self.grid.dt, &chi, 1.0);
        }

        if data_driven {
            // first-order perturbation of the H(0) ground state in the hx fields
            let recomputed;
            let init = match &traj.initial {
                Some(e) => e,
                None => {
                    recomputed = self.initial_spectrum(coeffs)?;
                    &recomputed
                }
            };
            let e = &init.eigenvalues;
            let v = &init.eigenvectors;
            if e.len() > 1 {
                let gap = e[1] - e[0];
                if gap < DEGENERACY_GAP {
                    return Err(Error::DegenerateGroundState(gap));
                }
                let chi_t = project(v, &chi);
                let weights: Vec<Complex64> = (0..e.len())
                    .map(|k| {
                        if k == 0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            chi_t[k].conj() / (e[k] - e[0])
                        }
                    })
                    .collect();
                let u = lift(v, &weights);
                let v0 = v.column(0);
                for i in 0..n {
                    let mask = PauliTerm::X(i).flip_mask(n);
                    let s: Complex64 = (0..e.len()).map(|r| u[r] * v0[r ^ mask]).sum();
                    grad[tail + i] += -2.0 * s.re;
                }
            }
        }
        Ok(grad)
    }
}

fn class_indices(batch: &[Sample]) -> (Vec<usize>, Vec<usize>) {
    let mut labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    labels.sort_unstable();
    labels.dedup();
    let class_of = batch
        .iter()
        .map(|s| labels.binary_search(&s.label).expect("label present"))
        .collect();
    (labels, class_of)
}

/// Everything one full-batch pass produces.
#[derive(Debug, Clone)]
pub(crate) struct BatchPass {
    pub value: f64,
    /// Flattened like the embedding matrix; empty when no gradient was requested.
    pub grad: Vec<f64>,
    pub final_states: Vec<Vec<Complex64>>,
    pub centroids: Vec<ComplexMatrix>,
}

pub(crate) fn batch_pass(
    engine: &Engine<'_>,
    w: &EmbeddingMap,
    batch: &[Sample],
    objective: &Objective,
    want_grad: bool,
) -> Result<BatchPass> {
    w.check_spec(engine.spec)?;
    if batch.is_empty() {
        return Err(Error::EmptyClass("empty batch".into()));
    }
    let coeffs: Vec<ScheduleCoefficients> = batch
        .iter()
        .map(|s| embed_coefficients(w, &s.features))
        .collect::<Result<_>>()?;
    let dim = engine.spec.dim();
    let retain = want_grad
        && batch.len() * engine.grid.steps * dim * dim * std::mem::size_of::<f64>() <= RETAIN_BUDGET_BYTES;

    let trajectories: Vec<Trajectory> = coeffs
        .par_iter()
        .map(|c| engine.evolve(c, retain))
        .collect::<Result<_>>()?;
    let finals: Vec<&[Complex64]> = trajectories.iter().map(|t| t.final_state().amplitudes()).collect();

    let (value, costates, centroids) = match objective {
        Objective::Loss(kind) => {
            let (labels, class_of) = class_indices(batch);
            let out = evaluate_loss(&finals, &class_of, labels.len(), *kind, want_grad)?;
            (out.value, out.costates, out.centroids)
        }
        Objective::Expectation(obs) => {
            let value = finals.iter().map(|psi| obs.expectation(psi).re).sum();
            let chis = want_grad.then(|| finals.iter().map(|psi| obs.mul_vec(psi)).collect());
            (value, chis, Vec::new())
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite("objective value".into()));
    }

    let mut grad = Vec::new();
    if let Some(chis) = costates {
        let per_sample: Vec<Vec<f64>> = trajectories
            .par_iter()
            .zip(coeffs.par_iter())
            .zip(chis.into_par_iter())
            .map(|((traj, c), chi)| engine.backward(c, traj, chi))
            .collect::<Result<_>>()?;
        grad = vec![0.0; w.len()];
        // index-ordered reduction
        for (g, sample) in per_sample.iter().zip(batch) {
            for (r, gr) in g.iter().enumerate() {
                let row = &mut grad[r * w.cols..(r + 1) * w.cols];
                for (dst, x) in row.iter_mut().zip(&sample.features) {
                    *dst += gr * x;
                }
            }
        }
        if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {bad}")));
        }
    }
    let final_states = trajectories
        .into_iter()
        .map(|t| t.states.into_iter().last().expect("nonempty").into_amplitudes())
        .collect();
    Ok(BatchPass {
        value,
        grad,
        final_states,
        centroids,
    })
}

/// `evolve` for one coefficient vector.
pub fn evolve(spec: &AnnealSpec, coeffs: &ScheduleCoefficients, grid: &EvolutionGrid) -> Result<Trajectory> {
    Engine::new(spec, grid)?.evolve(coeffs, false)
}

/// Final embedded state of sample `x`.
pub fn embed_state(spec: &AnnealSpec, w: &EmbeddingMap, x: &[f64], grid: &EvolutionGrid) -> Result<QuantumState> {
    w.check_spec(spec)?;
    let coeffs = embed_coefficients(w, x)?;
    Ok(QuantumState::from_unchecked(Engine::new(spec, grid)?.final_state(&coeffs)?))
}

/// Exact gradient of an objective with respect to every entry of `w`.
pub fn grad_objective_wrt_w(
    spec: &AnnealSpec,
    w: &EmbeddingMap,
    batch: &[Sample],
    grid: &EvolutionGrid,
    objective: &Objective,
) -> Result<GradientReport> {
    let engine = Engine::new(spec, grid)?;
    let pass = batch_pass(&engine, w, batch, objective, true)?;
    Ok(GradientReport {
        grad_w: EmbeddingMap {
            rows: w.rows,
            cols: w.cols,
            w: pass.grad,
        },
        loss_value: pass.value,
        fd_check: None,
    })
}

pub fn grad_loss_wrt_w(
    spec: &AnnealSpec,
    w: &EmbeddingMap,
    batch: &[Sample],
    grid: &EvolutionGrid,
    kind: LossKind,
) -> Result<GradientReport> {
    grad_objective_wrt_w(spec, w, batch, grid, &Objective::Loss(kind))
}

/// Objective value only.
pub fn objective_value(
    spec: &AnnealSpec,
    w: &EmbeddingMap,
    batch: &[Sample],
    grid: &EvolutionGrid,
    objective: &Objective,
) -> Result<f64> {
    let engine = Engine::new(spec, grid)?;
    Ok(batch_pass(&engine, w, batch, objective, false)?.value)
}

/// Central differences of `f` at every coordinate of `x`.
pub fn central_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step {step} must be positive")));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe)?;
        probe[i] = orig - step;
        let down = f(&probe)?;
        probe[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Brute-force central-difference gradient of the loss, one entry of `w` at a time.
pub fn fd_gradient_oracle(
    spec: &AnnealSpec,
    w: &EmbeddingMap,
    batch: &[Sample],
    grid: &EvolutionGrid,
    objective: &Objective,
    step: f64,
) -> Result<Vec<f64>> {
    let engine = Engine::new(spec, grid)?;
    central_difference(&w.w, step, |entries| {
        let probe = EmbeddingMap {
            rows: w.rows,
            cols: w.cols,
            w: entries.to_vec(),
        };
        Ok(batch_pass(&engine, &probe, batch, objective, false)?.value)
    })
}
