//! Centroids, Hilbert-Schmidt distance matrices, and the four training losses
//! together with their gradients with respect to the embedded states.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hs_distance, pure_state_distance, purity, ComplexMatrix, QuantumState};

/// Samples whose spread is below this are treated as sitting on the centroid.
const SPREAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `-D_12`, two classes only.
    BinaryNegDistance,
    /// `-prod_{i<j} D_ij`
    NegProduct,
    /// `-sum_{i<j} D_ij`
    NegSum,
    /// `-D_min / r_max`
    NegMinOverSpread,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::BinaryNegDistance,
        LossKind::NegProduct,
        LossKind::NegSum,
        LossKind::NegMinOverSpread,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::BinaryNegDistance => "binary_neg_distance",
            LossKind::NegProduct => "neg_product",
            LossKind::NegSum => "neg_sum",
            LossKind::NegMinOverSpread => "neg_min_over_spread",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown loss kind '{s}'")))
    }
}

/// Averaged density matrix of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCentroid {
    pub label: usize,
    pub matrix: ComplexMatrix,
    pub count: usize,
}

impl ClassCentroid {
    /// Hermiticity, unit trace, and positivity defects.
    pub fn invariant_defects(&self) -> Result<(f64, f64, f64)> {
        let herm = self.matrix.hermiticity_defect();
        let trace = (self.matrix.trace() - Complex64::new(1.0, 0.0)).norm();
        let min_eig = crate::linalg::herm_eig(&self.matrix)?.eigenvalues[0];
        Ok((herm, trace, min_eig))
    }
}

/// `(1/K) sum_k |psi_k><psi_k|`, summed in index order.
pub(crate) fn average_outer<'a>(states: impl Iterator<Item = &'a [Complex64]>, dim: usize) -> (ComplexMatrix, usize) {
    let mut m = ComplexMatrix::zeros(dim);
    let mut count = 0usize;
    for psi in states {
        for i in 0..dim {
            let a = psi[i];
            for j in 0..dim {
                m[(i, j)] += a * psi[j].conj();
            }
        }
        count += 1;
    }
    if count > 0 {
        let k = count as f64;
        m = ComplexMatrix::from_row_major(m.entries().iter().map(|z| z / k).collect());
    }
    (m, count)
}

pub fn centroid(states: &[QuantumState], label: usize) -> Result<ClassCentroid> {
    let first = states
        .first()
        .ok_or_else(|| Error::EmptyClass(format!("label {label} has no states")))?;
    let dim = first.dim();
    if let Some(bad) = states.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let (matrix, count) = average_outer(states.iter().map(QuantumState::amplitudes), dim);
    Ok(ClassCentroid { label, matrix, count })
}

/// Symmetric matrix of pairwise Hilbert-Schmidt distances, zero diagonal.
pub fn distance_matrix(centroids: &[ClassCentroid]) -> Result<Vec<Vec<f64>>> {
    if centroids.len() < 2 {
        return Err(Error::TooFewClasses(centroids.len()));
    }
    let mats: Vec<&ComplexMatrix> = centroids.iter().map(|c| &c.matrix).collect();
    pairwise_distances(&mats)
}

fn pairwise_distances(mats: &[&ComplexMatrix]) -> Result<Vec<Vec<f64>>> {
    let k = mats.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = hs_distance(mats[i], mats[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

fn pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Loss value and, optionally, per-sample costates.
#[derive(Debug, Clone)]
pub(crate) struct LossOutput {
    pub value: f64,
    pub centroids: Vec<ComplexMatrix>,
    /// `chi_k = G_k psi_k` with `dL = 2 Re sum_k <chi_k | d psi_k>`.
    pub costates: Option<Vec<Vec<Complex64>>>,
}

/// Evaluates `kind` on final states grouped by class index
/// (`class_of[k] < n_classes`).
pub(crate) fn evaluate_loss(
    states: &[&[Complex64]],
    class_of: &[usize],
    n_classes: usize,
    kind: LossKind,
    want_grad: bool,
) -> Result<LossOutput> {
    assert_eq!(states.len(), class_of.len());
    if n_classes < 2 {
        return Err(Error::TooFewClasses(n_classes));
    }
    if kind == LossKind::BinaryNegDistance && n_classes != 2 {
        return Err(Error::BinaryLossClassCount {
            kind: kind.name(),
            classes: n_classes,
        });
    }
    let dim = states.first().map(|s| s.len()).ok_or(Error::TooFewClasses(0))?;

    let mut centroids = Vec::with_capacity(n_classes);
    let mut counts = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let members = states
            .iter()
            .zip(class_of)
            .filter(|(_, &cl)| cl == c)
            .map(|(s, _)| *s);
        let (m, count) = average_outer(members, dim);
        if count == 0 {
            return Err(Error::EmptyClass(format!("class index {c} has no samples")));
        }
        centroids.push(m);
        counts.push(count);
    }

    let refs: Vec<&ComplexMatrix> = centroids.iter().collect();
    let dist = pairwise_distances(&refs)?;
    let pair_list = pairs(n_classes);
    let dvals: Vec<f64> = pair_list.iter().map(|&(i, j)| dist[i][j]).collect();

    // dL/dD for every pair, and the spread term when present
    let mut d_loss_d_pair = vec![0.0; pair_list.len()];
    let mut spread: Option<(usize, f64)> = None; // (sample index, dL/dr_max)
    let value = match kind {
        LossKind::BinaryNegDistance => {
            d_loss_d_pair[0] = -1.0;
            -dvals[0]
        }
        LossKind::NegSum => {
            d_loss_d_pair.iter_mut().for_each(|g| *g = -1.0);
            -dvals.iter().sum::<f64>()
        }
        LossKind::NegProduct => {
            let p = dvals.len();
            let mut prefix = vec![1.0; p + 1];
            let mut suffix = vec![1.0; p + 1];
            for q in 0..p {
                prefix[q + 1] = prefix[q] * dvals[q];
                suffix[p - 1 - q] = suffix[p - q] * dvals[p - 1 - q];
            }
            for q in 0..p {
                d_loss_d_pair[q] = -(prefix[q] * suffix[q + 1]);
            }
            -prefix[p]
        }
        LossKind::NegMinOverSpread => {
            let (qmin, dmin) = dvals
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (q, v)| if v < best.1 { (q, v) } else { best });
            let purities: Vec<f64> = centroids.iter().map(purity).collect();
            let (kmax, rmax) = states
                .iter()
                .zip(class_of)
                .enumerate()
                .map(|(k, (psi, &c))| (k, pure_state_distance(psi, &centroids[c], purities[c])))
                .fold((0, f64::NEG_INFINITY), |best, (k, r)| if r > best.1 { (k, r) } else { best });
            if !(rmax > SPREAD_FLOOR) {
                return Err(Error::DegenerateSpread);
            }
            d_loss_d_pair[qmin] = -1.0 / rmax;
            spread = Some((kmax, dmin / (rmax * rmax)));
            -dmin / rmax
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{kind} loss value")));
    }

    let costates = if want_grad {
        // Gamma_c = dL/dM_c
        let mut gamma: Vec<ComplexMatrix> = (0..n_classes).map(|_| ComplexMatrix::zeros(dim)).collect();
        for (&(i, j), &g) in pair_list.iter().zip(&d_loss_d_pair) {
            if g == 0.0 {
                continue;
            }
            let diff = centroids[i].sub(&centroids[j]);
            gamma[i].axpy(2.0 * g, &diff);
            gamma[j].axpy(-2.0 * g, &diff);
        }
        let mut extra: Option<(usize, ComplexMatrix)> = None;
        if let Some((k, g)) = spread {
            let c = class_of[k];
            let rho_minus_m = ComplexMatrix::outer(states[k]).sub(&centroids[c]);
            gamma[c].axpy(-2.0 * g, &rho_minus_m);
            extra = Some((k, rho_minus_m.scale_real(2.0 * g)));
        }
        for (c, g) in gamma.iter_mut().enumerate() {
            *g = g.scale_real(1.0 / counts[c] as f64);
        }
        let chis = states
            .iter()
            .zip(class_of)
            .enumerate()
            .map(|(k, (psi, &c))| {
                let mut chi = gamma[c].mul_vec(psi);
                if let Some((ke, ref delta)) = extra {
                    if ke == k {
                        for (a, b) in chi.iter_mut().zip(delta.mul_vec(psi)) {
                            *a += b;
                        }
                    }
                }
                chi
            })
            .collect();
        Some(chis)
    } else {
        None
    };

    Ok(LossOutput {
        value,
        centroids,
        costates,
    })
}

/// Loss from per-class state lists. `centroids[c]` must be the average of
/// `per_class_states[c]`; distances use the centroids, the spread uses the states.
pub fn loss_value(
    centroids: &[ClassCentroid],
    per_class_states: &[Vec<QuantumState>],
    kind: LossKind,
) -> Result<f64> {
    if centroids.len() < 2 {
        return Err(Error::TooFewClasses(centroids.len()));
    }
    if kind == LossKind::BinaryNegDistance && centroids.len() != 2 {
        return Err(Error::BinaryLossClassCount {
            kind: kind.name(),
            classes: centroids.len(),
        });
    }
    let d = distance_matrix(centroids)?;
    let dvals: Vec<f64> = pairs(centroids.len()).iter().map(|&(i, j)| d[i][j]).collect();
    let value = match kind {
        LossKind::NegMinOverSpread => {
            if per_class_states.len() != centroids.len() {
                return Err(Error::DimensionMismatch {
                    expected: centroids.len(),
                    found: per_class_states.len(),
                });
            }
            let dmin = dvals.iter().copied().fold(f64::INFINITY, f64::min);
            let mut rmax = f64::NEG_INFINITY;
            for (c, states) in centroids.iter().zip(per_class_states) {
                if states.is_empty() {
                    return Err(Error::EmptyClass(format!("label {}", c.label)));
                }
                for s in states {
                    rmax = rmax.max(hs_distance(&s.density_matrix(), &c.matrix)?);
                }
            }
            if !(rmax > SPREAD_FLOOR) {
                return Err(Error::DegenerateSpread);
            }
            -dmin / rmax
        }
        _ => pairwise_loss(&d, kind)?,
    };
    Ok(value)
}

/// Loss computed from a distance matrix alone (every kind except the spread ratio).
pub fn pairwise_loss(distances: &[Vec<f64>], kind: LossKind) -> Result<f64> {
    let k = distances.len();
    if k < 2 {
        return Err(Error::TooFewClasses(k));
    }
    let dvals = pairs(k).into_iter().map(|(i, j)| distances[i][j]);
    match kind {
        LossKind::BinaryNegDistance if k == 2 => Ok(-distances[0][1]),
        LossKind::BinaryNegDistance => Err(Error::BinaryLossClassCount {
            kind: kind.name(),
            classes: k,
        }),
        LossKind::NegProduct => Ok(-dvals.product::<f64>()),
        LossKind::NegSum => Ok(-dvals.sum::<f64>()),
        LossKind::NegMinOverSpread => Err(Error::InvalidConfig(
            "neg_min_over_spread needs the per-class states".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ket(v: &[f64]) -> QuantumState {
        QuantumState::normalized(v.iter().map(|&x| Complex64::new(x, 0.0)).collect()).unwrap()
    }

    fn cent(m: ComplexMatrix, label: usize) -> ClassCentroid {
        ClassCentroid { label, matrix: m, count: 1 }
    }

    #[test]
    fn centroid_examples() {
        let zero = ket(&[1.0, 0.0]);
        let one = ket(&[0.0, 1.0]);
        let plus = ket(&[1.0, 1.0]);
        assert_eq!(centroid(&[zero.clone()], 0).unwrap().matrix, zero.density_matrix());
        let mix = centroid(&[zero.clone(), one], 0).unwrap();
        assert!(mix.matrix.max_abs_diff(&ComplexMatrix::diag(&[0.5, 0.5])) < 1e-15);
        let m = centroid(&[zero, plus], 1).unwrap();
        let expected = ComplexMatrix::from_real_rows(&[&[0.75, 0.25], &[0.25, 0.25]]);
        assert!(m.matrix.max_abs_diff(&expected) < 1e-15);
        assert_eq!(m.count, 2);
        assert!(matches!(centroid(&[], 3), Err(Error::EmptyClass(_))));
    }

    #[test]
    fn distance_matrix_examples() {
        let p0 = ket(&[1.0, 0.0]).density_matrix();
        let p1 = ket(&[0.0, 1.0]).density_matrix();
        let pp = ket(&[1.0, 1.0]).density_matrix();
        let d = distance_matrix(&[cent(p0.clone(), 0), cent(p0.clone(), 1)]).unwrap();
        assert_eq!(d[0][1], 0.0);
        let d = distance_matrix(&[cent(p0.clone(), 0), cent(p1.clone(), 1)]).unwrap();
        assert_abs_diff_eq!(d[0][1], 2.0, epsilon = 1e-15);
        let d = distance_matrix(&[cent(p0, 0), cent(p1, 1), cent(pp, 2)]).unwrap();
        let expected = [[0.0, 2.0, 1.0], [2.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(d[i][j], expected[i][j], epsilon = 1e-15);
                assert_eq!(d[i][j], d[j][i]);
            }
        }
    }

    #[test]
    fn product_and_sum_of_given_distances() {
        let d = vec![vec![0.0, 0.5, 0.2], vec![0.5, 0.0, 0.1], vec![0.2, 0.1, 0.0]];
        assert_abs_diff_eq!(pairwise_loss(&d, LossKind::NegProduct).unwrap(), -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(pairwise_loss(&d, LossKind::NegSum).unwrap(), -0.8, epsilon = 1e-15);
        assert!(pairwise_loss(&d, LossKind::BinaryNegDistance).is_err());
        assert!(pairwise_loss(&d, LossKind::NegMinOverSpread).is_err());
    }

    #[test]
    fn loss_kinds_on_orthogonal_pair() {
        let s0 = ket(&[1.0, 0.0]);
        let s1 = ket(&[0.0, 1.0]);
        let c = [centroid(&[s0.clone()], 0).unwrap(), centroid(&[s1.clone()], 1).unwrap()];
        let groups = vec![vec![s0], vec![s1]];
        assert_abs_diff_eq!(loss_value(&c, &groups, LossKind::BinaryNegDistance).unwrap(), -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(loss_value(&c, &groups, LossKind::NegProduct).unwrap(), -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(loss_value(&c, &groups, LossKind::NegSum).unwrap(), -2.0, epsilon = 1e-15);
        assert!(matches!(
            loss_value(&c, &groups, LossKind::NegMinOverSpread),
            Err(Error::DegenerateSpread)
        ));
    }

    #[test]
    fn binary_loss_rejects_three_classes() {
        let s: Vec<QuantumState> = (0..3).map(|k| QuantumState::basis(4, k)).collect();
        let c: Vec<ClassCentroid> = s.iter().enumerate().map(|(k, x)| centroid(&[x.clone()], k).unwrap()).collect();
        let groups: Vec<Vec<QuantumState>> = s.iter().map(|x| vec![x.clone()]).collect();
        assert!(matches!(
            loss_value(&c, &groups, LossKind::BinaryNegDistance),
            Err(Error::BinaryLossClassCount { classes: 3, .. })
        ));
        // three orthogonal pure states: every D = 2
        assert_abs_diff_eq!(loss_value(&c, &groups, LossKind::NegProduct).unwrap(), -8.0, epsilon = 1e-14);
        assert_abs_diff_eq!(loss_value(&c, &groups, LossKind::NegSum).unwrap(), -6.0, epsilon = 1e-14);
    }

    #[test]
    fn min_over_spread_hand_value() {
        // class 0: |0>, |+>  -> M0 = [[3/4,1/4],[1/4,1/4]], spread of each member = 1/4
        // class 1: |1>       -> M1 = |1><1|, spread 0
        // D01 = (3/4)^2 + 2 (1/4)^2 + (1/4 - 1)^2 = 9/16 + 2/16 + 9/16 = 20/16
        let s0 = ket(&[1.0, 0.0]);
        let sp = ket(&[1.0, 1.0]);
        let s1 = ket(&[0.0, 1.0]);
        let c = [centroid(&[s0.clone(), sp.clone()], 0).unwrap(), centroid(&[s1.clone()], 1).unwrap()];
        let groups = vec![vec![s0, sp], vec![s1]];
        let v = loss_value(&c, &groups, LossKind::NegMinOverSpread).unwrap();
        assert_abs_diff_eq!(v, -(20.0 / 16.0) / 0.25, epsilon = 1e-14);
    }

    #[test]
    fn evaluate_loss_matches_public_value() {
        let states = [ket(&[1.0, 0.0]), ket(&[1.0, 1.0]), ket(&[0.2, 1.0]), ket(&[0.0, 1.0])];
        let class_of = [0, 0, 1, 1];
        let amps: Vec<&[Complex64]> = states.iter().map(|s| s.amplitudes()).collect();
        let groups = vec![vec![states[0].clone(), states[1].clone()], vec![states[2].clone(), states[3].clone()]];
        let c = [centroid(&groups[0], 0).unwrap(), centroid(&groups[1], 1).unwrap()];
        for kind in LossKind::ALL {
            let out = evaluate_loss(&amps, &class_of, 2, kind, true).unwrap();
            let v = loss_value(&c, &groups, kind).unwrap();
            assert_abs_diff_eq!(out.value, v, epsilon = 1e-14);
            assert_eq!(out.costates.unwrap().len(), 4);
        }
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("nope".parse::<LossKind>().is_err());
    }
}
