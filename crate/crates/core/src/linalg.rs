//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything here is sized for at most a few hundred basis states, so
//! matrices are stored densely in row-major order. Qubit 0 is the leftmost
//! Kronecker factor, i.e. the most significant bit of a basis index.

use std::fmt;
use std::ops::{Index, IndexMut};

use faer::complex_native::c64;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-10;

#[inline]
fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = c(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major entries. Panics unless `entries.len()` is a
    /// nonzero perfect square.
    pub fn from_row_major(entries: Vec<Complex64>) -> Self {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        assert!(dim >= 1 && dim * dim == entries.len(), "entry count must be a square");
        Self { dim, data: entries }
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |i, j| {
            assert_eq!(rows[i].len(), dim, "ragged rows");
            c(rows[i][j], 0.0)
        })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = c(v, 0.0);
        }
        m
    }

    /// Constructs a matrix that must be Hermitian; the result is exactly
    /// Hermitian (the lower triangle is mirrored from the upper one).
    pub fn hermitian(entries: Vec<Complex64>) -> Result<Self> {
        let mut m = Self::from_row_major(entries);
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        for i in 0..m.dim {
            m[(i, i)].im = 0.0;
            for j in i + 1..m.dim {
                let upper = m[(i, j)];
                m[(j, i)] = upper.conj();
            }
        }
        debug_assert!(m.hermiticity_defect() < 1e-12);
        Ok(m)
    }

    /// `|psi><psi|`
    pub fn outer(psi: &[Complex64]) -> Self {
        Self::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.dim, v.len(), "mul_vec dimension mismatch");
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c(s, 0.0))
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |A - A^H|`
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() < tol
    }

    /// `<psi| A |psi>`
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        let a_psi = self.mul_vec(psi);
        psi.iter().zip(&a_psi).map(|(p, q)| p.conj() * q).sum()
    }

    fn to_faer(&self) -> faer::Mat<c64> {
        faer::Mat::from_fn(self.dim, self.dim, |i, j| {
            let z = self[(i, j)];
            c64::new(z.re, z.im)
        })
    }
}

/// Unit-norm state vector of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amps: Vec<Complex64>,
}

impl QuantumState {
    /// Wraps amplitudes that are already normalized (within `1e-10`).
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let norm = norm2(&amps);
        if (norm - 1.0).abs() >= NORM_TOL {
            return Err(Error::NonFinite(format!("state norm {norm} is not 1")));
        }
        Ok(Self { amps })
    }

    pub fn normalized(mut amps: Vec<Complex64>) -> Result<Self> {
        let norm = norm2(&amps);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonFinite("cannot normalize a zero or non-finite vector".into()));
        }
        for a in &mut amps {
            *a /= norm;
        }
        Ok(Self { amps })
    }

    /// Computational basis state `|index>` in a space of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut amps = vec![c(0.0, 0.0); dim];
        amps[index] = c(1.0, 0.0);
        Self { amps }
    }

    pub(crate) fn from_unchecked(amps: Vec<Complex64>) -> Self {
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.amps)
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.dim(), other.dim());
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn with_global_phase(&self, phi: f64) -> Self {
        let p = Complex64::from_polar(1.0, phi);
        Self {
            amps: self.amps.iter().map(|a| a * p).collect(),
        }
    }

    pub fn apply(&self, u: &ComplexMatrix) -> Self {
        Self { amps: u.mul_vec(&self.amps) }
    }

    pub fn density_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amps)
    }
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl HermEigen {
    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        (0..self.eigenvectors.dim())
            .map(|i| self.eigenvectors[(i, k)])
            .collect()
    }

    /// `V diag(lambda) V^H`
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.spectral_map(|l| c(l, 0.0))
    }

    /// `V diag(f(lambda)) V^H`
    pub fn spectral_map(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = v.dim();
        let fl: Vec<Complex64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| v[(i, k)] * fl[k] * v[(j, k)].conj()).sum()
        })
    }
}

/// Index permutation sorting eigenvalues ascending; ties keep solver order.
fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Index of the first component whose magnitude is not negligible.
fn phase_anchor<T>(column: &[T], magnitude: impl Fn(&T) -> f64) -> usize {
    let largest = column.iter().map(&magnitude).fold(0.0, f64::max);
    let threshold = 1e-8 * largest.max(f64::MIN_POSITIVE);
    column
        .iter()
        .position(|z| magnitude(z) > threshold)
        .unwrap_or(0)
}

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues. The
/// phase of each eigenvector is fixed so its first non-negligible component
/// is real and positive.
pub fn herm_eig(a: &ComplexMatrix) -> Result<HermEigen> {
    let defect = a.hermiticity_defect();
    if defect >= HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let n = a.dim();
    if a.data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("Hermitian eigensolver input".into()));
    }
    let eig = a.to_faer().selfadjoint_eigendecomposition(faer::Side::Lower);
    let values: Vec<f64> = (0..n).map(|k| eig.s().column_vector().read(k).re).collect();
    let order = ascending_order(&values);
    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("eigenvalue".into()));
    }
    let u = eig.u();
    let mut vectors = ComplexMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let col: Vec<Complex64> = (0..n)
            .map(|i| {
                let z = u.read(i, src);
                c(z.re, z.im)
            })
            .collect();
        let anchor = phase_anchor(&col, |z| z.norm());
        let z = col[anchor];
        let fix = if z.norm() > 0.0 { z.conj() / z.norm() } else { c(1.0, 0.0) };
        let norm = norm2(&col);
        for (i, v) in col.iter().enumerate() {
            vectors[(i, dst)] = v * fix / norm;
        }
        vectors[(anchor, dst)].im = 0.0;
    }
    Ok(HermEigen {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// Eigendecomposition of a real symmetric matrix, same ordering and sign
/// conventions as [`herm_eig`]. Used on the hot path since the annealer
/// Hamiltonian only involves the real Pauli matrices X and Z.
#[derive(Debug, Clone)]
pub struct RealSymEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

pub fn real_sym_eig(a: DMatrix<f64>) -> Result<RealSymEigen> {
    let n = a.nrows();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("symmetric eigensolver input".into()));
    }
    let eig = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]).selfadjoint_eigendecomposition(faer::Side::Lower);
    let values: Vec<f64> = (0..n).map(|k| eig.s().column_vector().read(k)).collect();
    let order = ascending_order(&values);
    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("eigenvalue".into()));
    }
    let u = eig.u();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| u.read(i, src)).collect();
        let anchor = phase_anchor(&col, |x| x.abs());
        let sign = if col[anchor] < 0.0 { -1.0 } else { 1.0 };
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i] / norm;
        }
    }
    Ok(RealSymEigen {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// `kron(a, b)[(i*db + k), (j*db + l)] = a[i, j] * b[k, l]`
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim(), b.dim());
    ComplexMatrix::from_fn(da * db, |r, s| a[(r / db, s / db)] * b[(r % db, s % db)])
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::diag(&[1.0, -1.0])
}

/// A Pauli term on a nearest-neighbour chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliTerm {
    X(usize),
    Z(usize),
    /// `Z_i Z_j`, with `j == i + 1`.
    ZZ(usize, usize),
}

impl PauliTerm {
    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |site: usize| {
            if site < n {
                Ok(())
            } else {
                Err(Error::SiteOutOfRange { site, n })
            }
        };
        match *self {
            PauliTerm::X(i) | PauliTerm::Z(i) => check(i),
            PauliTerm::ZZ(i, j) => {
                check(i)?;
                check(j)?;
                if j != i + 1 {
                    return Err(Error::NonAdjacentPair(i, j));
                }
                Ok(())
            }
        }
    }

    /// Basis-index bit mask the operator flips (0 for diagonal terms).
    #[inline]
    pub fn flip_mask(&self, n: usize) -> usize {
        match *self {
            PauliTerm::X(i) => 1 << (n - 1 - i),
            _ => 0,
        }
    }

    /// Matrix element `P[row, row ^ flip_mask]`; every other entry of the row is 0.
    #[inline]
    pub fn sign(&self, row: usize, n: usize) -> f64 {
        let z = |site: usize| {
            if row >> (n - 1 - site) & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        match *self {
            PauliTerm::X(_) => 1.0,
            PauliTerm::Z(i) => z(i),
            PauliTerm::ZZ(i, j) => z(i) * z(j),
        }
    }

    /// `P v` in `O(2^n)`.
    pub fn apply(&self, v: &[Complex64], n: usize) -> Vec<Complex64> {
        let mask = self.flip_mask(n);
        (0..v.len()).map(|r| v[r ^ mask] * self.sign(r, n)).collect()
    }
}

/// Dense `2^n`-dimensional operator for `term`, identity on all other sites.
pub fn pauli_chain_op(term: PauliTerm, n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::InvalidSpec("qubit count must be positive".into()));
    }
    term.validate(n)?;
    let id = ComplexMatrix::identity(2);
    let factor = |site: usize| match term {
        PauliTerm::X(i) if i == site => sigma_x(),
        PauliTerm::Z(i) if i == site => sigma_z(),
        PauliTerm::ZZ(i, j) if i == site || j == site => sigma_z(),
        _ => id.clone(),
    };
    let mut op = factor(0);
    for site in 1..n {
        op = kron(&op, &factor(site));
    }
    Ok(op)
}

/// `exp(-i h dt)` for Hermitian `h` (hbar = 1).
pub fn expm_minus_i(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    if !dt.is_finite() {
        return Err(Error::NonFinite(format!("time step {dt}")));
    }
    let eig = herm_eig(h)?;
    Ok(eig.spectral_map(|l| Complex64::from_polar(1.0, -l * dt)))
}

/// Hilbert-Schmidt distance `Tr((a - b)^2)`.
pub fn hs_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let n = a.dim();
    let mut acc = c(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] - b[(i, j)]) * (a[(j, i)] - b[(j, i)]);
        }
    }
    debug_assert!(acc.im.abs() < 1e-10 * (1.0 + acc.re.abs()));
    Ok(acc.re)
}

/// `Tr((|psi><psi| - m)^2)` without forming the outer product; `m` Hermitian.
pub fn pure_state_distance(psi: &[Complex64], m: &ComplexMatrix, m_purity: f64) -> f64 {
    let purity_psi = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().powi(2);
    purity_psi - 2.0 * m.expectation(psi).re + m_purity
}

/// `Tr(m^2)` for Hermitian `m`.
pub fn purity(m: &ComplexMatrix) -> f64 {
    m.entries().iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    pub(crate) fn random_hermitian(dim: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = ComplexMatrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = c(rng.gen_range(-1.0..1.0), 0.0);
            for j in i + 1..dim {
                let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn kron_identities() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
        assert_eq!(kron(&sigma_z(), &i2), ComplexMatrix::diag(&[1.0, 1.0, -1.0, -1.0]));
    }

    #[test]
    fn kron_xx_flips_both_qubits() {
        let xx = kron(&sigma_x(), &sigma_x());
        let out = QuantumState::basis(4, 0).apply(&xx);
        assert_eq!(out, QuantumState::basis(4, 3));
    }

    #[test]
    fn pauli_chain_examples() {
        assert_eq!(pauli_chain_op(PauliTerm::Z(0), 1).unwrap(), sigma_z());
        assert_eq!(
            pauli_chain_op(PauliTerm::X(1), 2).unwrap(),
            kron(&ComplexMatrix::identity(2), &sigma_x())
        );
        assert_eq!(
            pauli_chain_op(PauliTerm::ZZ(0, 1), 2).unwrap(),
            ComplexMatrix::diag(&[1.0, -1.0, -1.0, 1.0])
        );
    }

    #[test]
    fn pauli_chain_rejects_bad_sites() {
        assert!(matches!(
            pauli_chain_op(PauliTerm::X(3), 3),
            Err(Error::SiteOutOfRange { site: 3, n: 3 })
        ));
        assert!(matches!(
            pauli_chain_op(PauliTerm::ZZ(0, 2), 3),
            Err(Error::NonAdjacentPair(0, 2))
        ));
        assert!(pauli_chain_op(PauliTerm::ZZ(1, 0), 3).is_err());
    }

    #[test]
    fn paulis_square_to_identity_and_match_fast_apply() {
        let n = 3;
        let mut terms = vec![];
        for i in 0..n {
            terms.push(PauliTerm::X(i));
            terms.push(PauliTerm::Z(i));
        }
        terms.push(PauliTerm::ZZ(0, 1));
        terms.push(PauliTerm::ZZ(1, 2));
        let psi: Vec<Complex64> = (0..8).map(|k| c(k as f64, 0.5 - k as f64)).collect();
        for t in terms {
            let p = pauli_chain_op(t, n).unwrap();
            assert_eq!(p.matmul(&p), ComplexMatrix::identity(8));
            assert_eq!(p.mul_vec(&psi), t.apply(&psi, n));
        }
    }

    #[test]
    fn eig_sigma_x() {
        let e = herm_eig(&sigma_x()).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-14);
        let v0 = e.eigenvector(0);
        let v1 = e.eigenvector(1);
        // phase convention: first component real positive
        assert_abs_diff_eq!(v0[0].re, FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(v0[1].re, -FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(v1[0].re, FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(v1[1].re, FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn eig_diagonal_is_permutation() {
        let e = herm_eig(&ComplexMatrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
        let expected = ComplexMatrix::from_real_rows(&[
            &[0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
        ]);
        assert!(e.eigenvectors.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn eig_random_reconstruction_and_unitarity() {
        for seed in 0..5 {
            let a = random_hermitian(8, seed);
            let e = herm_eig(&a).unwrap();
            assert!(e.reconstruct().max_abs_diff(&a) < 1e-10);
            let v = &e.eigenvectors;
            assert!(v.adjoint().matmul(v).max_abs_diff(&ComplexMatrix::identity(8)) < 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let again = herm_eig(&a).unwrap();
            assert_eq!(again.eigenvectors, e.eigenvectors);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(herm_eig(&a), Err(Error::NotHermitian(_))));
        assert!(ComplexMatrix::hermitian(a.entries().to_vec()).is_err());
    }

    #[test]
    fn real_sym_eig_matches_complex_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = rng.gen_range(-1.0..1.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        let re = real_sym_eig(a.clone()).unwrap();
        let ce = herm_eig(&ComplexMatrix::from_fn(n, |i, j| c(a[(i, j)], 0.0))).unwrap();
        for k in 0..n {
            assert_abs_diff_eq!(re.eigenvalues[k], ce.eigenvalues[k], epsilon = 1e-12);
            for i in 0..n {
                assert_abs_diff_eq!(re.eigenvectors[(i, k)], ce.eigenvectors[(i, k)].re, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn expm_examples() {
        let z = expm_minus_i(&ComplexMatrix::zeros(4), 3.7).unwrap();
        assert!(z.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-14);

        let u = expm_minus_i(&sigma_x(), PI / 2.0).unwrap();
        let expected = sigma_x().scale(c(0.0, -1.0));
        assert!(u.max_abs_diff(&expected) < 1e-12);
        let out = QuantumState::basis(2, 0).apply(&u);
        assert!((out.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-12);

        let d = expm_minus_i(&ComplexMatrix::diag(&[1.0, 2.0]), 1.0).unwrap();
        let expected = ComplexMatrix::from_row_major(vec![
            Complex64::from_polar(1.0, -1.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            Complex64::from_polar(1.0, -2.0),
        ]);
        assert!(d.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn expm_composition() {
        let h = random_hermitian(8, 3);
        let a = expm_minus_i(&h, 0.3).unwrap();
        let b = expm_minus_i(&h, 0.55).unwrap();
        let ab = expm_minus_i(&h, 0.85).unwrap();
        assert!(a.matmul(&b).max_abs_diff(&ab) < 1e-9);
    }

    #[test]
    fn hs_distance_examples() {
        let p0 = QuantumState::basis(2, 0).density_matrix();
        let p1 = QuantumState::basis(2, 1).density_matrix();
        let plus = QuantumState::normalized(vec![c(1.0, 0.0), c(1.0, 0.0)])
            .unwrap()
            .density_matrix();
        assert_eq!(hs_distance(&p0, &p0).unwrap(), 0.0);
        assert_abs_diff_eq!(hs_distance(&p0, &p1).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hs_distance(&p0, &plus).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            hs_distance(&p0, &ComplexMatrix::identity(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pure_state_distance_agrees_with_outer_product() {
        let a = random_hermitian(4, 8);
        let psi = QuantumState::normalized((0..4).map(|k| c(1.0 + k as f64, -0.3 * k as f64)).collect())
            .unwrap();
        let direct = hs_distance(&psi.density_matrix(), &a).unwrap();
        let fast = pure_state_distance(psi.amplitudes(), &a, purity(&a));
        assert_abs_diff_eq!(direct, fast, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn expm_is_unitary_and_preserves_norm(seed in 0u64..10_000, dim in 1usize..9, dt in -5.0f64..5.0) {
                let h = random_hermitian(dim, seed);
                let u = expm_minus_i(&h, dt).unwrap();
                prop_assert!(u.adjoint().matmul(&u).max_abs_diff(&ComplexMatrix::identity(dim)) < 1e-10);
                let psi = QuantumState::normalized((0..dim).map(|k| c((k as f64).sin() + 0.1, k as f64 * 0.2)).collect()).unwrap();
                prop_assert!((psi.apply(&u).norm() - 1.0).abs() < 1e-10);
            }

            #[test]
            fn hs_distance_symmetric_nonnegative(s1 in 0u64..10_000, s2 in 0u64..10_000, dim in 1usize..9) {
                let a = random_hermitian(dim, s1);
                let b = random_hermitian(dim, s2.wrapping_add(77_777));
                let ab = hs_distance(&a, &b).unwrap();
                let ba = hs_distance(&b, &a).unwrap();
                prop_assert_eq!(ab.to_bits(), ba.to_bits());
                prop_assert!(ab >= -1e-12);
            }

            // transverse-field Ising matrices once tripped a solver into 1e-9 residuals
            #[test]
            fn ising_eigenpairs_are_accurate(n in 1usize..6, amps in prop::collection::vec(-3.0f64..3.0, 14)) {
                let dim = 1 << n;
                let mut h = DMatrix::<f64>::zeros(dim, dim);
                let mut terms: Vec<PauliTerm> = (0..n).flat_map(|i| [PauliTerm::X(i), PauliTerm::Z(i)]).collect();
                terms.extend((0..n - 1).map(|i| PauliTerm::ZZ(i, i + 1)));
                for (t, a) in terms.iter().zip(&amps) {
                    let op = pauli_chain_op(*t, n).unwrap();
                    for i in 0..dim {
                        for j in 0..dim {
                            h[(i, j)] += a * op[(i, j)].re;
                        }
                    }
                }
                let eig = real_sym_eig(h.clone()).unwrap();
                let v = &eig.eigenvectors;
                let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig.eigenvalues.clone()));
                prop_assert!((&h * v - v * lam).amax() < 1e-12);
                prop_assert!((v.transpose() * v - DMatrix::<f64>::identity(dim, dim)).amax() < 1e-12);
            }
        }
    }
}
