use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NetKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Train and validation shares; test takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.60, val: 0.25 }
    }
}

impl SplitFractions {
    /// Seeded shuffle of `0..n` partitioned into train / val / test.
    pub fn assign(&self, n: usize, seed: u64) -> Result<Vec<Split>> {
        if !(self.train > 0.0 && self.val >= 0.0 && self.train + self.val <= 1.0) {
            return Err(Error::InvalidArgument(format!("bad split fractions {self:?}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (self.train * n as f64).round() as usize;
        let n_val = ((self.val * n as f64).round() as usize).min(n - n_train);
        let mut split = vec![Split::Test; n];
        for (rank, &i) in order.iter().enumerate() {
            split[i] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        Ok(split)
    }
}

/// Supervised samples for one network, with normalisation fit on the
/// training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: NetKind,
    /// Raw features, one row per sample.
    pub features: DMatrix<f64>,
    /// Raw (physical) targets, one row per sample.
    pub targets: DMatrix<f64>,
    pub split: Vec<Split>,
    pub in_mean: DVector<f64>,
    pub in_std: DVector<f64>,
    pub out_mean: Vector3<f64>,
    pub out_std: Vector3<f64>,
}

fn column_stats(m: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DVector<f64>) {
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(m.ncols());
    let mut std = DVector::zeros(m.ncols());
    for j in 0..m.ncols() {
        let mu = rows.iter().map(|&i| m[(i, j)]).sum::<f64>() / n;
        let var = rows.iter().map(|&i| (m[(i, j)] - mu).powi(2)).sum::<f64>() / n;
        mean[j] = mu;
        std[j] = var.sqrt();
    }
    (mean, std)
}

impl Dataset {
    pub fn new(kind: NetKind, features: DMatrix<f64>, targets: DMatrix<f64>, split: Vec<Split>) -> Result<Self> {
        let t = features.nrows();
        if features.ncols() != kind.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: kind.input_dim(),
                got: features.ncols(),
            });
        }
        if targets.ncols() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: targets.ncols(),
            });
        }
        for (what, got) in [("targets", targets.nrows()), ("split", split.len())] {
            if got != t {
                return Err(Error::LengthMismatch {
                    what: what.into(),
                    expected: t,
                    got,
                });
            }
        }
        let train: Vec<usize> = (0..t).filter(|&i| split[i] == Split::Train).collect();
        if train.is_empty() {
            return Err(Error::DegenerateData(format!("{kind} dataset has an empty training split")));
        }
        let (in_mean, mut in_std) = column_stats(&features, &train);
        in_std.iter_mut().filter(|s| **s <= 1e-12).for_each(|s| *s = 1.0);
        let (out_mean, out_std) = column_stats(&targets, &train);
        for (j, s) in out_std.iter().enumerate() {
            if !(*s > 1e-12) {
                return Err(Error::DegenerateData(format!(
                    "{kind} target `{}` has zero variance on the training split",
                    kind.target_names()[j]
                )));
            }
        }
        Ok(Dataset {
            kind,
            features,
            targets,
            split,
            in_mean,
            in_std,
            out_mean: Vector3::new(out_mean[0], out_mean[1], out_mean[2]),
            out_std: Vector3::new(out_std[0], out_std[1], out_std[2]),
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// Standardised inputs of one split, one row per sample.
    pub fn normalized_inputs(&self, split: Split) -> DMatrix<f64> {
        let rows = self.indices(split);
        DMatrix::from_fn(rows.len(), self.features.ncols(), |r, j| {
            (self.features[(rows[r], j)] - self.in_mean[j]) / self.in_std[j]
        })
    }

    /// Standardised targets of one split, one row per sample.
    pub fn normalized_targets(&self, split: Split) -> DMatrix<f64> {
        let rows = self.indices(split);
        DMatrix::from_fn(rows.len(), 3, |r, j| (self.targets[(rows[r], j)] - self.out_mean[j]) / self.out_std[j])
    }

    pub fn csv_path(dir: &Path, kind: NetKind, split: Split) -> PathBuf {
        dir.join(format!("{kind}_{split}.csv"))
    }

    /// Writes `<kind>_<split>.csv` for each split: feature columns then the
    /// three raw target columns.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut header: Vec<&str> = self.kind.layout();
        header.extend(self.kind.target_names());
        for split in Split::ALL {
            let mut w = BufWriter::new(File::create(Self::csv_path(dir, self.kind, split))?);
            writeln!(w, "{}", header.join(","))?;
            for i in self.indices(split) {
                let row: Vec<String> = self
                    .features
                    .row(i)
                    .iter()
                    .chain(self.targets.row(i).iter())
                    .map(|x| x.to_string())
                    .collect();
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Reads the three split files written by [`Dataset::write_csv`].
    pub fn read_csv(dir: &Path, kind: NetKind) -> Result<Self> {
        let mut expected: Vec<&str> = kind.layout();
        expected.extend(kind.target_names());
        let width = expected.len();
        let mut values = Vec::new();
        let mut split = Vec::new();
        for s in Split::ALL {
            let path = Self::csv_path(dir, kind, s);
            let reader = BufReader::new(File::open(&path).map_err(|e| Error::unreadable(&path, e))?);
            let mut lines = reader.lines();
            let header = lines.next().ok_or_else(|| Error::parse(&path, "missing header"))??;
            if header.trim() != expected.join(",") {
                return Err(Error::parse(&path, format!("unexpected header `{header}`")));
            }
            for (n, line) in lines.enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Vec<f64> = line
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(&path, format!("line {}: {e}", n + 2)))?;
                if row.len() != width {
                    return Err(Error::parse(&path, format!("line {}: {} columns, expected {width}", n + 2, row.len())));
                }
                values.extend(row);
                split.push(s);
            }
        }
        let t = split.len();
        let all = DMatrix::from_row_slice(t, width, &values);
        let d = kind.input_dim();
        Dataset::new(kind, all.columns(0, d).into_owned(), all.columns(d, 3).into_owned(), split)
    }
}
