//! Checkpoints, metrics, overlap images and provenance files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classifier::{CentroidSet, ClassCentroid, EpochMetrics, LossKind, OverlapMatrix};
use crate::data::{fmt_f64, NormStats};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::schedule::{AnnealSpec, EmbeddingMap};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "epoch,loss,train_accuracy,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub row_major: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentroidRecord {
    pub label: usize,
    pub count: usize,
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub data_seed: u64,
    pub train_seed: u64,
    pub epochs_completed: usize,
    pub loss_kind: LossKind,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: AnnealSpec,
    pub embedding: MatrixRecord,
    pub normalization: NormStats,
    pub metadata: TrainingMetadata,
    pub centroids: Vec<CentroidRecord>,
}

impl Checkpoint {
    pub fn new(
        spec: &AnnealSpec,
        w: &EmbeddingMap,
        normalization: &NormStats,
        metadata: TrainingMetadata,
        centroids: &CentroidSet,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            spec: spec.clone(),
            embedding: MatrixRecord {
                rows: w.rows,
                cols: w.cols,
                row_major: w.w.clone(),
            },
            normalization: normalization.clone(),
            metadata,
            centroids: centroids
                .centroids()
                .iter()
                .map(|c| CentroidRecord {
                    label: c.label,
                    count: c.count,
                    dim: c.matrix.dim(),
                    re: c.matrix.entries().iter().map(|z| z.re).collect(),
                    im: c.matrix.entries().iter().map(|z| z.im).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        ck.spec.validate()?;
        ck.embedding_map()?.check_spec(&ck.spec)?;
        if ck.normalization.mean.len() != ck.embedding.cols || ck.normalization.scale.len() != ck.embedding.cols {
            return Err(Error::Checkpoint("normalization width differs from the embedding".into()));
        }
        ck.centroid_set()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn embedding_map(&self) -> Result<EmbeddingMap> {
        EmbeddingMap::from_rows(self.embedding.rows, self.embedding.cols, self.embedding.row_major.clone())
            .map_err(|e| Error::Checkpoint(format!("embedding: {e}")))
    }

    pub fn centroid_set(&self) -> Result<CentroidSet> {
        let dim = self.spec.dim();
        let centroids = self
            .centroids
            .iter()
            .map(|r| {
                if r.dim != dim || r.re.len() != dim * dim || r.im.len() != dim * dim {
                    return Err(Error::Checkpoint(format!("centroid {} has the wrong shape", r.label)));
                }
                let entries = r.re.iter().zip(&r.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
                Ok(ClassCentroid {
                    label: r.label,
                    matrix: ComplexMatrix::from_row_major(entries),
                    count: r.count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CentroidSet::new(centroids)
    }
}

/// Streams metrics rows to disk so a failed run keeps what it finished.
pub struct MetricsWriter {
    file: std::io::BufWriter<std::fs::File>,
    wall_clock: bool,
}

impl MetricsWriter {
    pub fn create(path: &Path, wall_clock: bool) -> Result<Self> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "{METRICS_HEADER}")?;
        Ok(Self { file, wall_clock })
    }

    pub fn row(&mut self, m: &EpochMetrics) -> Result<()> {
        let wall = if self.wall_clock { m.wall_ms } else { 0 };
        writeln!(self.file, "{}", metrics_line(m.epoch, m.loss, m.train_accuracy, wall))?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn metrics_line(epoch: usize, loss: f64, acc: f64, wall_ms: u64) -> String {
    format!("{epoch},{},{},{wall_ms}", fmt_f64(loss), fmt_f64(acc))
}

pub fn overlap_csv(m: &OverlapMatrix) -> String {
    let mut out = String::new();
    for a in 0..m.n {
        let row: Vec<String> = (0..m.n).map(|b| fmt_f64(m.get(a, b))).collect();
        writeln!(out, "{}", row.join(",")).expect("write to String");
    }
    out
}

/// Binary 8-bit grayscale image, one pixel per entry, `[0, 1] -> [0, 255]`.
pub fn overlap_pgm(m: &OverlapMatrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.n, m.n).into_bytes();
    out.extend(m.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Writes `<stem>.csv` and `<stem>.pgm`.
pub fn write_overlap(dir: &Path, stem: &str, m: &OverlapMatrix) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.csv")), overlap_csv(m))?;
    std::fs::write(dir.join(format!("{stem}.pgm")), overlap_pgm(m))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Sidecar describing how an output was produced. Contains no timestamps.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub details: T,
}

impl<'a, T: Serialize> Provenance<'a, T> {
    pub fn new(command: &'a str, details: T) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            details,
        }
    }
}
