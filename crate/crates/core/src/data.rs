//! Data shards, federated collections and the shard file format.
//!
//! A shard CSV has header `y,x1,...,xp` where `x1` is the all-ones
//! intercept column. A manifest is a text file listing shard paths one per
//! line, master shard first; relative paths resolve against the manifest's
//! directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ConquerError, Result};

/// One machine's data: responses and a row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    id: usize,
    n: usize,
    p: usize,
    y: Vec<f64>,
    x: Vec<f64>,
}

impl DataShard {
    /// Builds a shard from a response vector and a row-major `n x p` design
    /// whose first column must be identically one.
    pub fn new(id: usize, y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        let shard = Self::from_parts(id, y, x, p)?;
        if let Some(i) = (0..shard.n).find(|&i| shard.row(i)[0] != 1.0) {
            return Err(ConquerError::InvalidData(format!(
                "shard {id}: first design column must be 1 (row {i})"
            )));
        }
        Ok(shard)
    }

    /// Builds a shard without the intercept-column requirement. Used for
    /// derived problems (slope-only designs, dropped columns).
    pub fn from_parts(id: usize, y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        let n = y.len();
        if n == 0 || p == 0 {
            return Err(ConquerError::InvalidData(format!(
                "shard {id}: need n >= 1 and p >= 1 (n={n}, p={p})"
            )));
        }
        if x.len() != n * p {
            return Err(ConquerError::DimensionMismatch {
                expected: n * p,
                got: x.len(),
                context: "design entries",
            });
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(ConquerError::InvalidData(format!(
                "shard {id}: non-finite entry"
            )));
        }
        Ok(Self { id, n, p, y, x })
    }

    pub fn from_matrix(id: usize, y: &DVector<f64>, x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(ConquerError::DimensionMismatch {
                expected: y.len(),
                got: x.nrows(),
                context: "design rows",
            });
        }
        let p = x.ncols();
        let mut rows = Vec::with_capacity(x.len());
        for i in 0..x.nrows() {
            rows.extend(x.row(i).iter());
        }
        Self::new(id, y.as_slice().to_vec(), rows, p)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row-major design entries.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn design_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.p, &self.x)
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    /// Residuals `y - X beta`.
    pub fn residuals(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(beta.len())?;
        Ok((0..self.n)
            .map(|i| self.y[i] - dot(self.row(i), beta))
            .collect())
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.p {
            return Err(ConquerError::DimensionMismatch {
                expected: self.p,
                got: len,
                context: "coefficient vector",
            });
        }
        Ok(())
    }

    /// Rows `start..end` as a new shard.
    pub fn slice_rows(&self, id: usize, start: usize, end: usize) -> Result<Self> {
        Self::from_parts(
            id,
            self.y[start..end].to_vec(),
            self.x[start * self.p..end * self.p].to_vec(),
            self.p,
        )
    }

    /// Responses replaced by `y - offset`, keeping the design.
    pub fn with_offset_responses(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.n {
            return Err(ConquerError::DimensionMismatch {
                expected: self.n,
                got: offset.len(),
                context: "response offset",
            });
        }
        let y = self.y.iter().zip(offset).map(|(a, b)| a - b).collect();
        Self::from_parts(self.id, y, self.x.clone(), self.p)
    }

    /// Drops design column `k` and subtracts `value * x_k` from the
    /// responses, so that `x'beta` with `beta_k = value` equals the reduced
    /// linear predictor plus the offset.
    pub fn fix_column(&self, k: usize, value: f64) -> Result<Self> {
        if k >= self.p {
            return Err(ConquerError::InvalidArgument(format!(
                "column {k} out of range for p = {}",
                self.p
            )));
        }
        if self.p == 1 {
            return Err(ConquerError::InvalidArgument(
                "cannot drop the only design column".into(),
            ));
        }
        let q = self.p - 1;
        let mut x = Vec::with_capacity(self.n * q);
        let mut y = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let row = self.row(i);
            y.push(self.y[i] - value * row[k]);
            x.extend(row.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| *v));
        }
        Self::from_parts(self.id, y, x, q)
    }

    /// Concatenates rows of shards sharing the same width.
    pub fn concat(id: usize, shards: &[DataShard]) -> Result<Self> {
        let p = shards
            .first()
            .ok_or_else(|| ConquerError::InvalidArgument("no shards to concatenate".into()))?
            .p;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for s in shards {
            if s.p != p {
                return Err(ConquerError::DimensionMismatch {
                    expected: p,
                    got: s.p,
                    context: "shard width",
                });
            }
            y.extend_from_slice(&s.y);
            x.extend_from_slice(&s.x);
        }
        Self::from_parts(id, y, x, p)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.p).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.p + 1);
        for i in 0..self.n {
            rec.clear();
            rec.push(format_float(self.y[i]));
            rec.extend(self.row(i).iter().map(|v| format_float(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(id: usize, path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let p = header.len().saturating_sub(1);
        let expected: Vec<String> = std::iter::once("y".to_string())
            .chain((1..=p).map(|j| format!("x{j}")))
            .collect();
        if header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(ConquerError::InvalidData(format!(
                "{}: header must be y,x1,...,xp",
                path.display()
            )));
        }
        let mut y = Vec::new();
        let mut x = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut vals = rec.iter().map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    ConquerError::InvalidData(format!("{}: bad number '{s}': {e}", path.display()))
                })
            });
            y.push(vals.next().unwrap()?);
            for v in vals {
                x.push(v?);
            }
        }
        Self::new(id, y, x, p)
    }
}

/// Shortest round-trip decimal representation.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ordered shards; index 0 is the master machine.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    shards: Vec<DataShard>,
    weights: Vec<f64>,
    total: usize,
}

impl FederatedDataset {
    pub fn new(shards: Vec<DataShard>) -> Result<Self> {
        let p = shards
            .first()
            .ok_or_else(|| ConquerError::InvalidArgument("need at least one shard".into()))?
            .p();
        if let Some(s) = shards.iter().find(|s| s.p() != p) {
            return Err(ConquerError::DimensionMismatch {
                expected: p,
                got: s.p(),
                context: "shard width",
            });
        }
        let total: usize = shards.iter().map(DataShard::n).sum();
        let weights = shards.iter().map(|s| s.n() as f64 / total as f64).collect();
        Ok(Self {
            shards,
            weights,
            total,
        })
    }

    pub fn shards(&self) -> &[DataShard] {
        &self.shards
    }

    pub fn master(&self) -> &DataShard {
        &self.shards[0]
    }

    /// Per-shard weights `n_j / N`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_machines(&self) -> usize {
        self.shards.len()
    }

    pub fn total_rows(&self) -> usize {
        self.total
    }

    pub fn p(&self) -> usize {
        self.shards[0].p()
    }

    /// Rows per shard when all shards are equally sized, else the master's.
    pub fn local_rows(&self) -> usize {
        self.shards[0].n()
    }

    pub fn is_balanced(&self) -> bool {
        self.shards.iter().all(|s| s.n() == self.shards[0].n())
    }

    pub fn pooled(&self) -> Result<DataShard> {
        DataShard::concat(0, &self.shards)
    }

    /// Applies `f` to every shard, keeping order.
    pub fn map_shards<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&DataShard) -> Result<DataShard>,
    {
        Self::new(self.shards.iter().map(f).collect::<Result<Vec<_>>>()?)
    }

    /// Writes `shard_XXXX.csv` files plus `manifest.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let width = self.shards.len().to_string().len().max(4);
        let mut names = Vec::with_capacity(self.shards.len());
        for (j, s) in self.shards.iter().enumerate() {
            let name = format!("shard_{j:0width$}.csv");
            s.write_csv(&dir.join(&name))?;
            names.push(name);
        }
        let manifest = dir.join("manifest.txt");
        let mut f = fs::File::create(&manifest)?;
        for name in names {
            writeln!(f, "{name}")?;
        }
        Ok(manifest)
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let shards = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(j, line)| {
                let p = Path::new(line);
                let full = if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base.join(p)
                };
                DataShard::read_csv(j, &full)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(shards)
    }
}

/// Shuffles rows deterministically by `seed`, then cuts them into `m`
/// contiguous shards. Unless `allow_unequal`, `N` must be divisible by `m`;
/// otherwise shard sizes differ by at most one.
pub fn partition(
    y: &[f64],
    x: &[f64],
    p: usize,
    m: usize,
    seed: u64,
    allow_unequal: bool,
) -> Result<FederatedDataset> {
    let total = y.len();
    if m == 0 || total < m {
        return Err(ConquerError::InvalidArgument(format!(
            "cannot split {total} rows into {m} shards"
        )));
    }
    if x.len() != total * p {
        return Err(ConquerError::DimensionMismatch {
            expected: total * p,
            got: x.len(),
            context: "design entries",
        });
    }
    if total % m != 0 && !allow_unequal {
        return Err(ConquerError::InvalidArgument(format!(
            "{total} rows are not divisible into {m} equal shards"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = total / m;
    let extra = total % m;
    let mut shards = Vec::with_capacity(m);
    let mut cursor = 0;
    for j in 0..m {
        let size = base + usize::from(j < extra);
        let idx = &order[cursor..cursor + size];
        cursor += size;
        let ys = idx.iter().map(|&i| y[i]).collect();
        let mut xs = Vec::with_capacity(size * p);
        for &i in idx {
            xs.extend_from_slice(&x[i * p..(i + 1) * p]);
        }
        shards.push(DataShard::new(j, ys, xs, p)?);
    }
    FederatedDataset::new(shards)
}
