//! Datasets: synthetic generators, CSV ingestion, splitting, normalization.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub d: usize,
    /// Sorted, unique.
    pub labels_present: Vec<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let d = samples
            .first()
            .map(|s| s.features.len())
            .ok_or_else(|| Error::Dataset("dataset is empty".into()))?;
        Self::with_dim(samples, d)
    }

    /// Like [`Dataset::new`] but allows an empty sample list of known width.
    pub fn with_dim(samples: Vec<Sample>, d: usize) -> Result<Self> {
        for (k, s) in samples.iter().enumerate() {
            if s.features.len() != d {
                return Err(Error::Dataset(format!(
                    "sample {k} has {} features, expected {d}",
                    s.features.len()
                )));
            }
            if s.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::Dataset(format!("sample {k} has a non-finite feature")));
            }
        }
        let mut labels_present: Vec<usize> = samples.iter().map(|s| s.label).collect();
        labels_present.sort_unstable();
        labels_present.dedup();
        Ok(Self {
            samples,
            d,
            labels_present,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: usize) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Indices ordered by label, then by position in the dataset.
    pub fn label_major_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by_key(|&k| (self.samples[k].label, k));
        idx
    }

    /// CSV text: features with 17 significant digits, then the integer label.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            for x in &s.features {
                write!(out, "{},", fmt_f64(*x)).expect("write to String");
            }
            writeln!(out, "{}", s.label).expect("write to String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// 17 significant digits, round-trippable.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_seedable_count(n_points: usize, classes: usize) -> Result<usize> {
    if classes == 0 || n_points % classes != 0 {
        return Err(Error::Dataset(format!(
            "{n_points} points cannot be divided evenly among {classes} classes"
        )));
    }
    Ok(n_points / classes)
}

fn noise(std: f64) -> Result<Option<Normal<f64>>> {
    if std == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, std)
        .map(Some)
        .map_err(|e| Error::Dataset(format!("noise std {std}: {e}")))
}

/// Default radii for 2 and 3 concentric classes.
pub fn default_radii(classes: usize) -> Vec<f64> {
    match classes {
        2 => vec![1.0, 0.5],
        3 => vec![1.0, 0.65, 0.3],
        _ => (0..classes).map(|c| 1.0 - c as f64 / classes as f64).collect(),
    }
}

pub const DEFAULT_NOISE_STD: f64 = 0.05;

/// Concentric circles; class `c` lies on radius `radii[c]`. Samples
/// alternate classes: index `k` has label `k % classes`.
pub fn gen_circles(classes: usize, n_points: usize, radii: &[f64], noise_std: f64, seed: u64) -> Result<Dataset> {
    if !(2..=3).contains(&classes) {
        return Err(Error::Dataset(format!("circles support 2 or 3 classes, got {classes}")));
    }
    if radii.len() != classes {
        return Err(Error::Dataset(format!("{} radii given for {classes} classes", radii.len())));
    }
    if radii.windows(2).any(|w| !(w[0] > w[1])) || radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::Dataset(format!("radii {radii:?} must be strictly decreasing and nonnegative")));
    }
    let per_class = check_seedable_count(n_points, classes)?;
    let noise = noise(noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_points);
    for _ in 0..per_class {
        for (label, &r) in radii.iter().enumerate() {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let mut p = [r * theta.cos(), r * theta.sin()];
            if let Some(n) = &noise {
                p[0] += n.sample(&mut rng);
                p[1] += n.sample(&mut rng);
            }
            samples.push(Sample {
                features: p.to_vec(),
                label,
            });
        }
    }
    Dataset::with_dim(samples, 2)
}

/// Two interleaved Archimedean spirals `r = a t`, `theta = t + label * pi`,
/// `t ~ U[0.25, 2 pi turns]`, scaled so the outer radius is 1.
pub fn gen_spirals(n_points: usize, turns: f64, noise_std: f64, seed: u64) -> Result<Dataset> {
    let per_class = check_seedable_count(n_points, 2)?;
    let t_end = 2.0 * PI * turns;
    if !(t_end > 0.25) {
        return Err(Error::Dataset(format!("spiral turns {turns} too small")));
    }
    let a = 1.0 / t_end;
    let noise = noise(noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_points);
    for _ in 0..per_class {
        let t = rng.gen_range(0.25..=t_end);
        for label in 0..2 {
            let theta = t + label as f64 * PI;
            let mut p = [a * t * theta.cos(), a * t * theta.sin()];
            if let Some(n) = &noise {
                p[0] += n.sample(&mut rng);
                p[1] += n.sample(&mut rng);
            }
            samples.push(Sample {
                features: p.to_vec(),
                label,
            });
        }
    }
    Dataset::with_dim(samples, 2)
}

/// Parses CSV rows of features followed by an integer label. Row numbers in
/// errors are 1-based line numbers.
pub fn parse_csv(text: &str, header: bool, expected_cols: Option<usize>) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut width = expected_cols;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if header && idx == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let w = *width.get_or_insert(cells.len());
        if cells.len() != w {
            return Err(Error::Parse {
                row,
                msg: format!("expected {w} columns, found {}", cells.len()),
            });
        }
        if w < 2 {
            return Err(Error::Parse {
                row,
                msg: "need at least one feature and a label".into(),
            });
        }
        let features = cells[..w - 1]
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        msg: format!("column {}: '{cell}' is not a finite number", c + 1),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = parse_label(cells[w - 1]).ok_or_else(|| Error::Parse {
            row,
            msg: format!("label '{}' is not a nonnegative integer", cells[w - 1]),
        })?;
        samples.push(Sample { features, label });
    }
    Ok(samples)
}

fn parse_label(cell: &str) -> Option<usize> {
    cell.parse::<usize>().ok().or_else(|| {
        let x = cell.parse::<f64>().ok()?;
        (x >= 0.0 && x.fract() == 0.0 && x < 1e15).then_some(x as usize)
    })
}

pub fn load_csv(path: &Path, header: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let samples = parse_csv(&text, header, None)?;
    Dataset::new(samples)
}

pub const DIGITS_FEATURES: usize = 64;

/// 8x8 digit images flattened to 64 features, optionally restricted to a label set.
pub fn load_digits_csv(path: &Path, label_filter: Option<&[usize]>, header: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    digits_from_str(&text, label_filter, header)
}

pub fn digits_from_str(text: &str, label_filter: Option<&[usize]>, header: bool) -> Result<Dataset> {
    let samples: Vec<Sample> = parse_csv(text, header, Some(DIGITS_FEATURES + 1))?
        .into_iter()
        .filter(|s| label_filter.map_or(true, |f| f.contains(&s.label)))
        .collect();
    if samples.is_empty() {
        return Err(Error::Dataset("no digits left after filtering".into()));
    }
    Dataset::with_dim(samples, DIGITS_FEATURES)
}

/// Training-set size for a fraction: `round(fraction * total)`, halves rounded up.
pub fn train_size(total: usize, train_fraction: f64) -> usize {
    (train_fraction * total as f64).round() as usize
}

/// Seeded shuffle followed by a prefix split. Both halves must contain every label.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Dataset(format!("train fraction {train_fraction} must be in (0, 1)")));
    }
    let n_train = train_size(dataset.len(), train_fraction);
    if n_train == 0 || n_train >= dataset.len() {
        return Err(Error::Dataset(format!(
            "fraction {train_fraction} of {} samples leaves an empty split",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ids: &[usize]| -> Result<Dataset> {
        Dataset::with_dim(ids.iter().map(|&k| dataset.samples[k].clone()).collect(), dataset.d)
    };
    let train = pick(&idx[..n_train])?;
    let test = pick(&idx[n_train..])?;
    for (name, part) in [("train", &train), ("test", &test)] {
        if part.labels_present != dataset.labels_present {
            return Err(Error::Dataset(format!(
                "{name} split is missing labels (has {:?}, expected {:?})",
                part.labels_present, dataset.labels_present
            )));
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NormalizationMode {
    None,
    /// Divide every feature by a constant.
    ScaleToUnit { constant: f64 },
    /// Per-feature zero mean and unit variance from training statistics.
    Standardize,
}

/// Everything needed to repeat a normalization at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mode: NormalizationMode,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Zero-variance features left unscaled under `Standardize`.
    pub passthrough: Vec<usize>,
}

impl NormStats {
    pub fn identity(d: usize) -> Self {
        Self {
            mode: NormalizationMode::None,
            mean: vec![0.0; d],
            scale: vec![1.0; d],
            passthrough: Vec::new(),
        }
    }

    pub fn fit(train: &Dataset, mode: NormalizationMode) -> Result<Self> {
        let d = train.d;
        match mode {
            NormalizationMode::None => Ok(Self::identity(d)),
            NormalizationMode::ScaleToUnit { constant } => {
                if !(constant.is_finite() && constant != 0.0) {
                    return Err(Error::Dataset(format!("scale constant {constant} must be finite and nonzero")));
                }
                Ok(Self {
                    mode,
                    mean: vec![0.0; d],
                    scale: vec![constant; d],
                    passthrough: Vec::new(),
                })
            }
            NormalizationMode::Standardize => {
                if train.is_empty() {
                    return Err(Error::Dataset("cannot standardize an empty training set".into()));
                }
                let n = train.len() as f64;
                let mut mean = vec![0.0; d];
                for s in &train.samples {
                    for (m, x) in mean.iter_mut().zip(&s.features) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; d];
                for s in &train.samples {
                    for ((v, x), m) in var.iter_mut().zip(&s.features).zip(&mean) {
                        *v += (x - m) * (x - m);
                    }
                }
                let mut passthrough = Vec::new();
                let mut scale = vec![1.0; d];
                for j in 0..d {
                    let sd = (var[j] / n).sqrt();
                    if sd > 0.0 {
                        scale[j] = sd;
                    } else {
                        passthrough.push(j);
                        mean[j] = 0.0;
                    }
                }
                if !passthrough.is_empty() {
                    log::warn!("{} zero-variance feature(s) left unscaled", passthrough.len());
                }
                Ok(Self {
                    mode,
                    mean,
                    scale,
                    passthrough,
                })
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset> {
        if data.d != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: data.d,
            });
        }
        if self.mode == NormalizationMode::None {
            return Ok(data.clone());
        }
        Dataset::with_dim(
            data.samples
                .iter()
                .map(|s| Sample {
                    features: self.apply(&s.features),
                    label: s.label,
                })
                .collect(),
            data.d,
        )
    }
}

/// Fits on `train` and applies the same statistics to both splits.
pub fn normalize(train: &Dataset, test: &Dataset, mode: NormalizationMode) -> Result<(Dataset, Dataset, NormStats)> {
    if train.d != test.d {
        return Err(Error::DimensionMismatch {
            expected: train.d,
            found: test.d,
        });
    }
    let stats = NormStats::fit(train, mode)?;
    Ok((stats.apply_dataset(train)?, stats.apply_dataset(test)?, stats))
}
