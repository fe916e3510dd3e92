//! Nearest-centroid prediction, overlap diagnostics, and the raw-feature baseline.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::evolution::{EvolutionGrid, Engine};
use crate::linalg::{pure_state_distance, purity, QuantumState};
use crate::schedule::{embed_coefficients, AnnealSpec, EmbeddingMap};

use super::ClassCentroid;

/// Centroids with their purities cached for repeated distance queries.
#[derive(Debug, Clone)]
pub struct CentroidSet {
    centroids: Vec<ClassCentroid>,
    purities: Vec<f64>,
}

impl CentroidSet {
    /// Sorted by label.
    pub fn new(mut centroids: Vec<ClassCentroid>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::TooFewClasses(0));
        }
        centroids.sort_by_key(|c| c.label);
        if centroids.windows(2).any(|p| p[0].label == p[1].label) {
            return Err(Error::InvalidConfig("duplicate centroid labels".into()));
        }
        let dim = centroids[0].matrix.dim();
        if let Some(c) = centroids.iter().find(|c| c.matrix.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.matrix.dim(),
            });
        }
        let purities = centroids.iter().map(|c| purity(&c.matrix)).collect();
        Ok(Self { centroids, purities })
    }

    pub fn centroids(&self) -> &[ClassCentroid] {
        &self.centroids
    }

    pub fn labels(&self) -> Vec<usize> {
        self.centroids.iter().map(|c| c.label).collect()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].matrix.dim()
    }

    /// Distances from `|psi><psi|` to every centroid.
    pub fn distances(&self, psi: &[Complex64]) -> Vec<f64> {
        self.centroids
            .iter()
            .zip(&self.purities)
            .map(|(c, &p)| pure_state_distance(psi, &c.matrix, p))
            .collect()
    }

    /// Nearest label; ties go to the smaller label.
    pub fn nearest(&self, psi: &[Complex64]) -> usize {
        let mut best = (f64::INFINITY, self.centroids[0].label);
        for (d, c) in self.distances(psi).into_iter().zip(&self.centroids) {
            if d < best.0 {
                best = (d, c.label);
            }
        }
        best.1
    }
}

/// Final embedded states of every sample, in order.
pub fn embed_all(engine: &Engine<'_>, w: &EmbeddingMap, samples: &[Sample]) -> Result<Vec<Vec<Complex64>>> {
    w.check_spec(engine.spec)?;
    samples
        .par_iter()
        .map(|s| engine.final_state(&embed_coefficients(w, &s.features)?))
        .collect()
}

pub fn predict(
    x: &[f64],
    w: &EmbeddingMap,
    centroids: &CentroidSet,
    spec: &AnnealSpec,
    grid: &EvolutionGrid,
) -> Result<usize> {
    check_dims(w, centroids, spec)?;
    let engine = Engine::new(spec, grid)?;
    let psi = engine.final_state(&embed_coefficients(w, x)?)?;
    Ok(centroids.nearest(&psi))
}

pub fn predict_all(
    samples: &[Sample],
    w: &EmbeddingMap,
    centroids: &CentroidSet,
    spec: &AnnealSpec,
    grid: &EvolutionGrid,
) -> Result<Vec<usize>> {
    check_dims(w, centroids, spec)?;
    let engine = Engine::new(spec, grid)?;
    Ok(embed_all(&engine, w, samples)?
        .iter()
        .map(|psi| centroids.nearest(psi))
        .collect())
}

fn check_dims(w: &EmbeddingMap, centroids: &CentroidSet, spec: &AnnealSpec) -> Result<()> {
    w.check_spec(spec)?;
    if centroids.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: centroids.dim(),
        });
    }
    Ok(())
}

/// Accuracy together with a confusion matrix over `labels` (true label rows).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub labels: Vec<usize>,
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    pub fn from_predictions(truth: &[usize], predictions: Vec<usize>) -> Self {
        let mut labels: Vec<usize> = truth.iter().chain(&predictions).copied().collect();
        labels.sort_unstable();
        labels.dedup();
        let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
        let pos = |l: usize| labels.binary_search(&l).expect("label collected");
        let mut correct = 0usize;
        for (&t, &p) in truth.iter().zip(&predictions) {
            confusion[pos(t)][pos(p)] += 1;
            correct += usize::from(t == p);
        }
        let accuracy = if truth.is_empty() {
            0.0
        } else {
            correct as f64 / truth.len() as f64
        };
        Self {
            accuracy,
            labels,
            confusion,
            predictions,
        }
    }
}

pub fn evaluate(
    dataset: &Dataset,
    w: &EmbeddingMap,
    centroids: &CentroidSet,
    spec: &AnnealSpec,
    grid: &EvolutionGrid,
) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    if dataset.d != w.cols {
        return Err(Error::DimensionMismatch {
            expected: w.cols,
            found: dataset.d,
        });
    }
    let predictions = predict_all(&dataset.samples, w, centroids, spec, grid)?;
    let truth: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();
    Ok(Evaluation::from_predictions(&truth, predictions))
}

/// `|<psi_a|psi_b>|^2` over an ordered sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    pub n: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl OverlapMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    /// Mean off-diagonal overlap within classes and mean overlap between classes.
    pub fn block_means(&self, labels: &[usize]) -> (f64, f64) {
        assert_eq!(labels.len(), self.n);
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for a in 0..self.n {
            for b in 0..self.n {
                if a == b {
                    continue;
                }
                if labels[a] == labels[b] {
                    within += self.get(a, b);
                    nw += 1;
                } else {
                    between += self.get(a, b);
                    nb += 1;
                }
            }
        }
        let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
        (mean(within, nw), mean(between, nb))
    }
}

pub fn overlap_matrix(states: &[QuantumState]) -> Result<OverlapMatrix> {
    let amps: Vec<&[Complex64]> = states.iter().map(QuantumState::amplitudes).collect();
    overlap_from_amplitudes(&amps)
}

pub(crate) fn overlap_from_amplitudes(states: &[&[Complex64]]) -> Result<OverlapMatrix> {
    let n = states.len();
    if n == 0 {
        return Err(Error::Dataset("overlap matrix of an empty state list".into()));
    }
    let dim = states[0].len();
    if let Some(s) = states.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: s.len(),
        });
    }
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let ip: Complex64 = states[a].iter().zip(states[b]).map(|(x, y)| x.conj() * y).sum();
            let v = ip.norm_sqr();
            values[a * n + b] = v;
            values[b * n + a] = v;
        }
    }
    Ok(OverlapMatrix { n, values })
}

/// Overlap matrices of `samples` at every recorded evolution point, from
/// `s = 0` to `s = 1`. Samples are reordered by label then dataset index; the
/// returned labels follow that order.
pub fn overlap_sequence(
    samples: &[Sample],
    w: &EmbeddingMap,
    spec: &AnnealSpec,
    grid: &EvolutionGrid,
) -> Result<(Vec<OverlapMatrix>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&k| (samples[k].label, k));
    let engine = Engine::new(spec, grid)?;
    w.check_spec(spec)?;
    let trajectories = order
        .par_iter()
        .map(|&k| engine.evolve(&embed_coefficients(w, &samples[k].features)?, false))
        .collect::<Result<Vec<_>>>()?;
    let frames = (0..=grid.steps)
        .map(|step| {
            let states: Vec<&[Complex64]> = trajectories.iter().map(|t| t.states[step].amplitudes()).collect();
            overlap_from_amplitudes(&states)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, order.iter().map(|&k| samples[k].label).collect()))
}

/// Nearest class mean in raw feature space, Euclidean distance, ties to the smaller label.
pub fn raw_linear_baseline(train: &Dataset, test: &Dataset) -> Result<(f64, f64)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Dataset("baseline needs nonempty train and test sets".into()));
    }
    if train.d != test.d {
        return Err(Error::DimensionMismatch {
            expected: train.d,
            found: test.d,
        });
    }
    let means: Vec<(usize, Vec<f64>)> = train
        .labels_present
        .iter()
        .map(|&l| {
            let members: Vec<&Sample> = train.samples.iter().filter(|s| s.label == l).collect();
            let mut mean = vec![0.0; train.d];
            for s in &members {
                for (m, x) in mean.iter_mut().zip(&s.features) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= members.len() as f64);
            (l, mean)
        })
        .collect();
    let accuracy = |set: &Dataset| {
        let correct = set
            .samples
            .iter()
            .filter(|s| {
                let mut best = (f64::INFINITY, usize::MAX);
                for (l, m) in &means {
                    let d: f64 = m.iter().zip(&s.features).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, *l);
                    }
                }
                best.1 == s.label
            })
            .count();
        correct as f64 / set.len() as f64
    };
    Ok((accuracy(train), accuracy(test)))
}
