//! Built-in synthetic datasets and file loaders.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hamlearn::stream::Sequence;
use hamlearn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Feature rows with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Table {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self, HarnessError> {
        if features.is_empty() {
            return Err(HarnessError::Data("table has no rows".into()));
        }
        if features.len() != labels.len() {
            return Err(HarnessError::Data("feature and label counts differ".into()));
        }
        let width = features[0].len();
        if width == 0 || features.iter().any(|r| r.len() != width) {
            return Err(HarnessError::Data("rows must have the same non-zero width".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { features, labels, classes })
    }

    pub fn input_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(features, one-hot label)` pairs.
    pub fn samples(&self) -> Vec<(Tensor, Tensor)> {
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(x, &y)| {
                (Tensor::vector(x.clone()), Tensor::one_hot(y, self.classes).expect("label below class count"))
            })
            .collect()
    }
}

/// 150 rows, 4 features, 3 classes of 50, shaped after the classic iris
/// measurements (values rounded to one decimal).
pub fn iris_like(seed: u64) -> Table {
    const MEANS: [[f64; 4]; 3] = [[5.0, 3.4, 1.5, 0.25], [5.9, 2.8, 4.3, 1.3], [6.6, 3.0, 5.6, 2.0]];
    const STDS: [[f64; 4]; 3] = [[0.35, 0.38, 0.17, 0.1], [0.5, 0.3, 0.47, 0.2], [0.63, 0.32, 0.55, 0.27]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(150);
    let mut labels = Vec::with_capacity(150);
    for class in 0..3 {
        for _ in 0..50 {
            let row = (0..4)
                .map(|j| {
                    let v = Normal::new(MEANS[class][j], STDS[class][j]).expect("valid normal").sample(&mut rng);
                    (v.max(0.1) * 10.0).round() / 10.0
                })
                .collect();
            features.push(row);
            labels.push(class);
        }
    }
    Table::new(features, labels).expect("well-formed table")
}

/// 4×4 glyphs of four classes with Gaussian pixel noise, 50 rows per class.
pub fn digits_like(seed: u64) -> Table {
    #[rustfmt::skip]
    const GLYPHS: [[u8; 16]; 4] = [
        [0,1,1,0, 1,0,0,1, 1,0,0,1, 0,1,1,0],
        [0,0,1,0, 0,1,1,0, 0,0,1,0, 0,1,1,1],
        [1,1,1,1, 0,0,0,1, 0,0,1,0, 0,1,0,0],
        [0,1,0,0, 1,1,1,1, 0,1,0,0, 0,1,0,0],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.25).expect("valid normal");
    let mut features = Vec::with_capacity(200);
    let mut labels = Vec::with_capacity(200);
    for (class, glyph) in GLYPHS.iter().enumerate() {
        for _ in 0..50 {
            let row = glyph.iter().map(|&p| ((p as f64 + noise.sample(&mut rng)) * 100.0).round() / 100.0).collect();
            features.push(row);
            labels.push(class);
        }
    }
    Table::new(features, labels).expect("well-formed table")
}

/// Shape of the synthetic sequence task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceTask {
    pub count: usize,
    pub length: usize,
    pub input_dim: usize,
    pub target_dim: usize,
}

impl Default for SequenceTask {
    fn default() -> Self {
        Self { count: 20, length: 6, input_dim: 2, target_dim: 3 }
    }
}

/// Random token sequences labelled by a fixed random teacher RNN: the
/// target of token `κ` is the teacher state after reading it.
pub fn token_sequences(seed: u64, task: SequenceTask) -> Result<Vec<Sequence>, HarnessError> {
    let SequenceTask { count, length, input_dim, target_dim } = task;
    if count == 0 || length == 0 || input_dim == 0 || target_dim == 0 {
        return Err(HarnessError::Data("sequence task sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wx: Vec<f64> = (0..target_dim * input_dim).map(|_| rng.random_range(-0.8..0.8)).collect();
    let scale = 0.9 / (target_dim as f64).sqrt();
    let wh: Vec<f64> = (0..target_dim * target_dim).map(|_| rng.random_range(-scale..scale)).collect();
    let normal = Normal::<f64>::new(0.0, 1.0).expect("valid normal");
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut h = vec![0.0; target_dim];
        let mut tokens = Vec::with_capacity(length);
        let mut targets = Vec::with_capacity(length);
        for _ in 0..length {
            let u: Vec<f64> = (0..input_dim).map(|_| (normal.sample(&mut rng) * 100.0).round() / 100.0).collect();
            h = (0..target_dim)
                .map(|i| {
                    let a: f64 = (0..input_dim).map(|j| wx[i * input_dim + j] * u[j]).sum();
                    let b: f64 = (0..target_dim).map(|j| wh[i * target_dim + j] * h[j]).sum();
                    (a + b).tanh()
                })
                .collect();
            tokens.push(Tensor::vector(u));
            targets.push(Tensor::vector(h.clone()));
        }
        out.push(Sequence::fully_supervised(tokens, targets).map_err(|e| HarnessError::Data(e.to_string()))?);
    }
    Ok(out)
}

/// CSV with a header row; every column but the last is a feature, the last
/// is a non-negative integer label.
pub fn read_table_csv(path: &Path) -> Result<Table, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::io(path, e))?;
        let line = i + 2;
        let n = record.len();
        if n < 2 {
            return Err(HarnessError::Data(format!(
                "{}:{line}: need at least one feature and a label",
                path.display()
            )));
        }
        let row = record
            .iter()
            .take(n - 1)
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Data(format!("{}:{line}: {e}", path.display())))?;
        let label = record[n - 1]
            .trim()
            .parse::<usize>()
            .map_err(|e| HarnessError::Data(format!("{}:{line}: label: {e}", path.display())))?;
        features.push(row);
        labels.push(label);
    }
    Table::new(features, labels)
}

pub fn write_table_csv(table: &Table, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    let mut header: Vec<String> = (0..table.input_dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| HarnessError::io(path, e))?;
    for (x, y) in table.features.iter().zip(&table.labels) {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceLine {
    tokens: Vec<Vec<f64>>,
    #[serde(default)]
    targets: Option<Vec<Option<Vec<f64>>>>,
}

/// One JSON object per line: `{"tokens": [[..], ..], "targets": [[..] | null, ..]}`.
pub fn read_sequences_jsonl(path: &Path) -> Result<Vec<Sequence>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| HarnessError::Data(format!("{}:{}: {msg}", path.display(), i + 1));
        let parsed: SequenceLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let n = parsed.tokens.len();
        let targets = parsed.targets.unwrap_or_else(|| vec![None; n]);
        let seq = Sequence::new(
            parsed.tokens.into_iter().map(Tensor::vector).collect(),
            targets.into_iter().map(|t| t.map(Tensor::vector)).collect(),
        )
        .map_err(|e| at(e.to_string()))?;
        out.push(seq);
    }
    if out.is_empty() {
        return Err(HarnessError::Data(format!("{}: no sequences", path.display())));
    }
    let shape = |s: &Sequence| (s.tokens[0].len(), s.targets.iter().flatten().next().map(Tensor::len));
    let first = shape(&out[0]);
    if let Some(i) = out.iter().position(|s| {
        let (u, y) = shape(s);
        u != first.0 || (y.is_some() && first.1.is_some() && y != first.1)
    }) {
        return Err(HarnessError::Data(format!(
            "{}: sequence {} has a different token or target width",
            path.display(),
            i + 1
        )));
    }
    Ok(out)
}

pub fn write_sequences_jsonl(seqs: &[Sequence], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in seqs {
        let line = SequenceLine {
            tokens: s.tokens.iter().map(|t| t.data().to_vec()).collect(),
            targets: Some(s.targets.iter().map(|t| t.as_ref().map(|t| t.data().to_vec())).collect()),
        };
        let text = serde_json::to_string(&line).map_err(|e| HarnessError::Data(e.to_string()))?;
        writeln!(w, "{text}").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iris_like_shape_and_determinism() {
        let a = iris_like(0);
        assert_eq!((a.len(), a.input_dim(), a.classes), (150, 4, 3));
        assert_eq!(a, iris_like(0));
        assert_ne!(a, iris_like(1));
        for c in 0..3 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 50);
        }
    }

    #[test]
    fn digits_like_shape() {
        let d = digits_like(3);
        assert_eq!((d.len(), d.input_dim(), d.classes), (200, 16, 4));
    }

    #[test]
    fn sequences_are_deterministic() {
        let task = SequenceTask { count: 3, length: 4, input_dim: 2, target_dim: 3 };
        let a = token_sequences(5, task).unwrap();
        assert_eq!(a, token_sequences(5, task).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|s| s.len() == 4 && s.targets.iter().all(|t| t.as_ref().unwrap().len() == 3)));
        assert!(token_sequences(5, SequenceTask { count: 0, ..task }).is_err());
    }
}
