//! Annealer description, CRAB sine schedules, and the linear data embedding.
//!
//! The Hamiltonian at annealing fraction `s` is
//!
//! ```text
//! H(s) = (1 - s) sum_i hx_i X_i
//!      + s (sum_i hz_i Z_i + sum_i J_i Z_i Z_{i+1})
//!      + sum_i P_i(s) Z_i + sum_i R_i(s) X_i + sum_i V_i(s) Z_i Z_{i+1}
//! ```
//!
//! where every schedule `P`, `R`, `V` is a truncated sine series
//! `sum_k c_k sin((k + 1) pi s)`, so the extra drive vanishes at both ends.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{herm_eig, ComplexMatrix, PauliTerm};

const GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffSource {
    /// `hx`, `hz`, `J` are run constants from the spec.
    FieldsFixed,
    /// `hx`, `hz`, `J` are produced per sample by extra rows of the embedding.
    FieldsDataDriven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSampling {
    /// `s_n = (n + 1/2) / N`
    Midpoint,
    /// `s_n = n / N`
    LeftEndpoint,
}

/// Static machine description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSpec {
    pub n_qubits: usize,
    pub n_sines: usize,
    pub steps: usize,
    pub t_max: f64,
    pub hx: Vec<f64>,
    pub hz: Vec<f64>,
    pub j: Vec<f64>,
    pub coeff_source: CoeffSource,
    pub step_sampling: StepSampling,
}

/// Default transverse field on every site.
pub fn default_hx(n: usize) -> Vec<f64> {
    vec![-1.0; n]
}

/// Site-dependent longitudinal field, `0.5 + 0.1 i`.
pub fn default_hz(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 + 0.1 * i as f64).collect()
}

pub fn default_j(n: usize) -> Vec<f64> {
    vec![1.0; n.saturating_sub(1)]
}

impl AnnealSpec {
    /// Spec with the default fixed fields. Validated.
    pub fn new(
        n_qubits: usize,
        n_sines: usize,
        steps: usize,
        t_max: f64,
        coeff_source: CoeffSource,
    ) -> Result<Self> {
        Self {
            n_qubits,
            n_sines,
            steps,
            t_max,
            hx: default_hx(n_qubits),
            hz: default_hz(n_qubits),
            j: default_j(n_qubits),
            coeff_source,
            step_sampling: StepSampling::Midpoint,
        }
        .validated()
    }

    pub fn with_fields(mut self, hx: Vec<f64>, hz: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        self.hx = hx;
        self.hz = hz;
        self.j = j;
        self.validated()
    }

    pub fn with_sampling(mut self, sampling: StepSampling) -> Self {
        self.step_sampling = sampling;
        self
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits;
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if n == 0 || n > 12 {
            return bad(format!("qubit count {n} must be in 1..=12"));
        }
        if self.n_sines == 0 {
            return bad("at least one sine term is required".into());
        }
        if self.steps == 0 {
            return bad("at least one time step is required".into());
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return bad(format!("t_max = {} must be finite and nonnegative", self.t_max));
        }
        if self.hx.len() != n || self.hz.len() != n || self.j.len() != n - 1 {
            return bad(format!(
                "field lengths (hx {}, hz {}, J {}) do not match {n} qubits",
                self.hx.len(),
                self.hz.len(),
                self.j.len()
            ));
        }
        if self.hx.iter().chain(&self.hz).chain(&self.j).any(|v| !v.is_finite()) {
            return bad("non-finite field value".into());
        }
        if self.coeff_source == CoeffSource::FieldsFixed {
            for (s, name) in [(0.0, "H(0)"), (1.0, "H(1)")] {
                let amps = self.base_amplitudes(&self.hx, &self.hz, &self.j, s);
                let h = real_hamiltonian(n, &self.layout().terms(), &amps);
                let gap = ground_gap(&h)?;
                if gap <= GAP_TOL {
                    return bad(format!("{name} has a degenerate ground state (gap {gap:e})"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Number of Pauli terms, `m = 2n + (n - 1)`.
    pub fn term_count(&self) -> usize {
        3 * self.n_qubits - 1
    }

    pub fn layout(&self) -> TermLayout {
        TermLayout {
            n_qubits: self.n_qubits,
            n_sines: self.n_sines,
        }
    }

    /// Length of a per-sample coefficient vector (rows of the embedding).
    pub fn coeff_len(&self) -> usize {
        let fourier = self.n_sines * self.term_count();
        match self.coeff_source {
            CoeffSource::FieldsFixed => fourier,
            CoeffSource::FieldsDataDriven => fourier + self.term_count(),
        }
    }

    /// Fields-only amplitudes `(1 - s) hx`, `s hz`, `s J` in layout order.
    fn base_amplitudes(&self, hx: &[f64], hz: &[f64], j: &[f64], s: f64) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.term_count());
        a.extend(hz.iter().map(|h| s * h));
        a.extend(hx.iter().map(|h| (1.0 - s) * h));
        a.extend(j.iter().map(|h| s * h));
        a
    }

    /// Coefficient multiplying each Pauli term of `H(s)`, in layout order.
    pub fn term_amplitudes(&self, coeffs: &ScheduleCoefficients, s: f64) -> Result<Vec<f64>> {
        check_s(s)?;
        self.check_coeffs(coeffs)?;
        let (hx, hz, j) = coeffs.fields(self);
        let mut amps = self.base_amplitudes(hx, hz, j, s);
        let basis = sine_basis(self.n_sines, s);
        for (t, a) in amps.iter_mut().enumerate() {
            let c = coeffs.fourier(self, t);
            *a += c.iter().zip(&basis).map(|(c, b)| c * b).sum::<f64>();
        }
        Ok(amps)
    }

    pub fn check_coeffs(&self, coeffs: &ScheduleCoefficients) -> Result<()> {
        if coeffs.values.len() != self.coeff_len() {
            return Err(Error::CoefficientLength {
                expected: self.coeff_len(),
                found: coeffs.values.len(),
            });
        }
        Ok(())
    }

    /// Number of trainable entries for `d`-dimensional data.
    pub fn param_count(&self, d: usize) -> usize {
        self.coeff_len() * d
    }
}

/// `n_s * m * d`, plus `(3n - 1) d` when the fields are data-driven.
pub fn param_count(spec: &AnnealSpec, d: usize) -> usize {
    spec.param_count(d)
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::ScheduleOutOfRange(s))
    }
}

/// `sin((k + 1) pi s)` for `k = 0..n_s`, exactly zero at both endpoints.
pub fn sine_basis(n_sines: usize, s: f64) -> Vec<f64> {
    (0..n_sines)
        .map(|k| {
            if s == 0.0 || s == 1.0 {
                0.0
            } else {
                ((k + 1) as f64 * PI * s).sin()
            }
        })
        .collect()
}

/// `sum_k c_k sin((k + 1) pi s)`
pub fn schedule_value(c: &[f64], s: f64) -> Result<f64> {
    check_s(s)?;
    Ok(c.iter().zip(sine_basis(c.len(), s)).map(|(c, b)| c * b).sum())
}

/// Ordering of Pauli terms and their Fourier slots: Z block, X block, ZZ block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermLayout {
    pub n_qubits: usize,
    pub n_sines: usize,
}

impl TermLayout {
    pub fn terms(&self) -> Vec<PauliTerm> {
        let n = self.n_qubits;
        (0..n)
            .map(PauliTerm::Z)
            .chain((0..n).map(PauliTerm::X))
            .chain((0..n.saturating_sub(1)).map(|i| PauliTerm::ZZ(i, i + 1)))
            .collect()
    }

    pub fn term_count(&self) -> usize {
        3 * self.n_qubits - 1
    }

    /// Position of Fourier coefficient `k` of term `t` in the flat vector.
    pub fn slot(&self, term: usize, k: usize) -> usize {
        term * self.n_sines + k
    }

    pub fn fourier_len(&self) -> usize {
        self.term_count() * self.n_sines
    }

    pub fn flatten(&self, per_term: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(per_term.len(), self.term_count());
        per_term
            .iter()
            .flat_map(|c| {
                assert_eq!(c.len(), self.n_sines);
                c.iter().copied()
            })
            .collect()
    }

    pub fn unflatten(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(flat.len(), self.fourier_len());
        flat.chunks(self.n_sines).map(<[f64]>::to_vec).collect()
    }
}

/// Per-sample schedule vector in layout order, optionally followed by
/// data-driven `hx`, `hz`, `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleCoefficients {
    pub values: Vec<f64>,
}

impl ScheduleCoefficients {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(spec: &AnnealSpec) -> Self {
        Self {
            values: vec![0.0; spec.coeff_len()],
        }
    }

    pub fn fourier(&self, spec: &AnnealSpec, term: usize) -> &[f64] {
        let start = term * spec.n_sines;
        &self.values[start..start + spec.n_sines]
    }

    /// `(hx, hz, J)` in effect for this sample.
    pub fn fields<'a>(&'a self, spec: &'a AnnealSpec) -> (&'a [f64], &'a [f64], &'a [f64]) {
        match spec.coeff_source {
            CoeffSource::FieldsFixed => (&spec.hx, &spec.hz, &spec.j),
            CoeffSource::FieldsDataDriven => {
                let n = spec.n_qubits;
                let tail = &self.values[spec.n_sines * spec.term_count()..];
                (&tail[..n], &tail[n..2 * n], &tail[2 * n..])
            }
        }
    }
}

/// Trainable linear map `W` from `d`-dimensional data to schedule coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows x cols`.
    pub w: Vec<f64>,
}

impl EmbeddingMap {
    pub fn zeros(spec: &AnnealSpec, d: usize) -> Self {
        Self {
            rows: spec.coeff_len(),
            cols: d,
            w: vec![0.0; spec.coeff_len() * d],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding entry".into()));
        }
        Ok(Self { rows, cols, w })
    }

    /// I.i.d. `N(0, std^2)` entries.
    pub fn random<R: Rng>(spec: &AnnealSpec, d: usize, std: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(spec, d);
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite positive std");
            for v in &mut m.w {
                *v = normal.sample(rng);
            }
        }
        m
    }

    pub fn check_spec(&self, spec: &AnnealSpec) -> Result<()> {
        if self.rows != spec.coeff_len() {
            return Err(Error::DimensionMismatch {
                expected: spec.coeff_len(),
                found: self.rows,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.w[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `V_c = W x`
pub fn embed_coefficients(w: &EmbeddingMap, x: &[f64]) -> Result<ScheduleCoefficients> {
    if x.len() != w.cols {
        return Err(Error::DimensionMismatch {
            expected: w.cols,
            found: x.len(),
        });
    }
    let values = w
        .w
        .chunks(w.cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    Ok(ScheduleCoefficients { values })
}

/// Real symmetric `sum_t amps[t] P_t`.
pub fn real_hamiltonian(n: usize, terms: &[PauliTerm], amps: &[f64]) -> DMatrix<f64> {
    let dim = 1usize << n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (t, &a) in terms.iter().zip(amps) {
        if a == 0.0 {
            continue;
        }
        let mask = t.flip_mask(n);
        for r in 0..dim {
            h[(r, r ^ mask)] += a * t.sign(r, n);
        }
    }
    h
}

/// `H(s)` for one sample.
pub fn assemble_hamiltonian(
    spec: &AnnealSpec,
    coeffs: &ScheduleCoefficients,
    s: f64,
) -> Result<ComplexMatrix> {
    let amps = spec.term_amplitudes(coeffs, s)?;
    let h = real_hamiltonian(spec.n_qubits, &spec.layout().terms(), &amps);
    let dim = spec.dim();
    ComplexMatrix::hermitian(
        (0..dim * dim)
            .map(|k| num_complex::Complex64::new(h[(k / dim, k % dim)], 0.0))
            .collect(),
    )
}

fn ground_gap(h: &DMatrix<f64>) -> Result<f64> {
    if h.nrows() == 1 {
        return Ok(f64::INFINITY);
    }
    let eig = crate::linalg::real_sym_eig(h.clone())?;
    Ok(eig.eigenvalues[1] - eig.eigenvalues[0])
}

/// Ground gap of a complex Hermitian matrix; `inf` for 1x1.
pub fn spectral_gap(h: &ComplexMatrix) -> Result<f64> {
    let e = herm_eig(h)?;
    Ok(e.eigenvalues.get(1).map_or(f64::INFINITY, |l1| l1 - e.eigenvalues[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli_chain_op;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixed(n: usize, n_s: usize) -> AnnealSpec {
        AnnealSpec::new(n, n_s, 10, 2.0, CoeffSource::FieldsFixed).unwrap()
    }

    /// Dense reference: sum of explicit Kronecker-product operators.
    fn dense_reference(spec: &AnnealSpec, coeffs: &ScheduleCoefficients, s: f64) -> ComplexMatrix {
        let n = spec.n_qubits;
        let (hx, hz, j) = coeffs.fields(spec);
        let mut h = ComplexMatrix::zeros(spec.dim());
        let sched = |t: usize| schedule_value(coeffs.fourier(spec, t), s).unwrap();
        for i in 0..n {
            let x = pauli_chain_op(PauliTerm::X(i), n).unwrap();
            let z = pauli_chain_op(PauliTerm::Z(i), n).unwrap();
            h.axpy((1.0 - s) * hx[i] + sched(n + i), &x);
            h.axpy(s * hz[i] + sched(i), &z);
        }
        for i in 0..n - 1 {
            let zz = pauli_chain_op(PauliTerm::ZZ(i, i + 1), n).unwrap();
            h.axpy(s * j[i] + sched(2 * n + i), &zz);
        }
        h
    }

    #[test]
    fn param_count_examples() {
        assert_eq!(fixed(5, 3).term_count(), 14);
        assert_eq!(param_count(&fixed(5, 3), 64), 2688);
        assert_eq!(param_count(&fixed(1, 1), 1), 2);
        let dd = AnnealSpec::new(3, 3, 10, 2.0, CoeffSource::FieldsDataDriven).unwrap();
        assert_eq!(param_count(&dd, 2), 64);
    }

    #[test]
    fn schedule_boundaries() {
        let c = [0.3, -1.7, 2.2];
        assert_eq!(schedule_value(&c, 0.0).unwrap(), 0.0);
        assert_eq!(schedule_value(&c, 1.0).unwrap(), 0.0);
        // the raw floating-point sine is within 1e-12 of zero as well
        for k in 1..=3 {
            assert!((k as f64 * PI).sin().abs() < 1e-12);
        }
        assert_abs_diff_eq!(schedule_value(&[1.0, 0.0, 0.0], 0.5).unwrap(), 1.0);
        assert!(matches!(schedule_value(&c, 1.01), Err(Error::ScheduleOutOfRange(_))));
        assert!(schedule_value(&c, -0.2).is_err());
    }

    #[test]
    fn embed_examples() {
        let w = EmbeddingMap::from_rows(2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(embed_coefficients(&w, &[3.0, -1.0]).unwrap().values, vec![0.0, 0.0]);
        let id = EmbeddingMap::from_rows(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(embed_coefficients(&id, &[1.5, -2.0, 0.25]).unwrap().values, vec![1.5, -2.0, 0.25]);
        let w = EmbeddingMap::from_rows(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(embed_coefficients(&w, &[1.0, 1.0]).unwrap().values, vec![3.0, 7.0]);
        assert!(matches!(
            embed_coefficients(&w, &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn hamiltonian_single_qubit_hand_value() {
        let spec = fixed(1, 1).with_fields(vec![-1.0], vec![0.5], vec![]).unwrap();
        // layout for n = 1: [Z0, X0]
        let coeffs = ScheduleCoefficients::new(vec![1.0, 0.0]);
        let h = assemble_hamiltonian(&spec, &coeffs, 0.5).unwrap();
        let expected = ComplexMatrix::from_real_rows(&[&[1.25, -0.5], &[-0.5, -1.25]]);
        assert!(h.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn hamiltonian_endpoints_ignore_fourier_terms() {
        let spec = fixed(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coeffs = ScheduleCoefficients::new((0..spec.coeff_len()).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let zero = ScheduleCoefficients::zeros(&spec);
        let n = 3;
        let mut h0 = ComplexMatrix::zeros(8);
        let mut h1 = ComplexMatrix::zeros(8);
        for i in 0..n {
            h0.axpy(spec.hx[i], &pauli_chain_op(PauliTerm::X(i), n).unwrap());
            h1.axpy(spec.hz[i], &pauli_chain_op(PauliTerm::Z(i), n).unwrap());
        }
        for i in 0..n - 1 {
            h1.axpy(spec.j[i], &pauli_chain_op(PauliTerm::ZZ(i, i + 1), n).unwrap());
        }
        for c in [&coeffs, &zero] {
            assert_eq!(assemble_hamiltonian(&spec, c, 0.0).unwrap(), h0);
            assert_eq!(assemble_hamiltonian(&spec, c, 1.0).unwrap(), h1);
        }
    }

    #[test]
    fn data_driven_fields_come_from_tail() {
        let spec = AnnealSpec::new(2, 1, 4, 1.0, CoeffSource::FieldsDataDriven).unwrap();
        // fourier (5 terms x 1) then hx(2), hz(2), J(1)
        let mut v = vec![0.0; 5];
        v.extend([0.7, -0.2, 0.3, 0.4, -0.9]);
        let coeffs = ScheduleCoefficients::new(v);
        let (hx, hz, j) = coeffs.fields(&spec);
        assert_eq!((hx, hz, j), (&[0.7, -0.2][..], &[0.3, 0.4][..], &[-0.9][..]));
        let h = assemble_hamiltonian(&spec, &coeffs, 0.3).unwrap();
        assert!(h.max_abs_diff(&dense_reference(&spec, &coeffs, 0.3)) < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = fixed(2, 2);
        let short = ScheduleCoefficients::new(vec![0.0; 3]);
        assert!(matches!(
            assemble_hamiltonian(&spec, &short, 0.5),
            Err(Error::CoefficientLength { .. })
        ));
        assert!(assemble_hamiltonian(&spec, &ScheduleCoefficients::zeros(&spec), 1.5).is_err());
        let degenerate = AnnealSpec::new(2, 2, 10, 1.0, CoeffSource::FieldsFixed)
            .unwrap()
            .with_fields(vec![-1.0, -1.0], vec![0.0, 0.0], vec![0.0]);
        assert!(matches!(degenerate, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn default_fields_are_non_degenerate() {
        for n in 1..=8 {
            fixed(n, 3);
        }
    }

    #[test]
    fn layout_order_is_z_x_zz() {
        let l = fixed(3, 2).layout();
        assert_eq!(
            l.terms(),
            vec![
                PauliTerm::Z(0),
                PauliTerm::Z(1),
                PauliTerm::Z(2),
                PauliTerm::X(0),
                PauliTerm::X(1),
                PauliTerm::X(2),
                PauliTerm::ZZ(0, 1),
                PauliTerm::ZZ(1, 2)
            ]
        );
        assert_eq!(l.slot(3, 1), 7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hamiltonian_matches_dense_reference_and_is_hermitian(
            seed in 0u64..1_000_000, n in 1usize..4, s in 0.0f64..=1.0, data_driven in any::<bool>()
        ) {
            let src = if data_driven { CoeffSource::FieldsDataDriven } else { CoeffSource::FieldsFixed };
            let spec = AnnealSpec::new(n, 3, 10, 2.0, src).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs = ScheduleCoefficients::new((0..spec.coeff_len()).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let h = assemble_hamiltonian(&spec, &coeffs, s).unwrap();
            prop_assert!(h.hermiticity_defect() < 1e-12);
            prop_assert!(h.max_abs_diff(&dense_reference(&spec, &coeffs, s)) < 1e-12);
        }

        #[test]
        fn hamiltonian_is_affine_in_coefficients(seed in 0u64..1_000_000, slot in 0usize..15, s in 0.01f64..0.99) {
            let spec = fixed(2, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base: Vec<f64> = (0..spec.coeff_len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let h_at = |delta: f64| {
                let mut v = base.clone();
                v[slot] += delta;
                assemble_hamiltonian(&spec, &ScheduleCoefficients::new(v), s).unwrap()
            };
            let h0 = h_at(0.0);
            let d1 = h_at(1.0).sub(&h0);
            let d2 = h_at(10.0).sub(&h0).scale_real(0.1);
            prop_assert!(d1.max_abs_diff(&d2) < 1e-12);
        }

        #[test]
        fn layout_round_trip(n in 1usize..6, n_s in 1usize..5, seed in 0u64..1000) {
            let l = TermLayout { n_qubits: n, n_sines: n_s };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let flat: Vec<f64> = (0..l.fourier_len()).map(|_| rng.gen::<f64>()).collect();
            prop_assert_eq!(l.flatten(&l.unflatten(&flat)), flat);
        }

        #[test]
        fn embedding_is_linear(seed in 0u64..100_000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let spec = fixed(2, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = EmbeddingMap::random(&spec, 4, 1.0, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = embed_coefficients(&w, &mix).unwrap().values;
            let ex = embed_coefficients(&w, &x).unwrap().values;
            let ey = embed_coefficients(&w, &y).unwrap().values;
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (alpha * ex[i] + beta * ey[i])).abs() < 1e-12);
            }
        }
    }
}
