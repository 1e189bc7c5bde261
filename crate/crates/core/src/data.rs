//! Sparse datasets: LIBSVM ingestion, unit-norm scaling, partitioning across
//! workers, and synthetic generators.
//!
//! Indices are 0-based everywhere except at the LIBSVM text boundary, which is
//! 1-based. `Dataset` and `Partition` are immutable after construction and can
//! be shared across workers by reference.

use crate::error::{CoreError, Result};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};

/// Sparse feature vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(CoreError::InvalidData(format!(
                "index/value length mismatch: {} vs {}",
                indices.len(),
                values.len()
            )));
        }
        for pair in indices.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CoreError::InvalidData(format!(
                    "indices not strictly increasing at {} -> {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(CoreError::InvalidData(format!(
                    "index {last} out of bounds for dim {dim}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidData("non-finite feature value".into()));
        }
        if values.contains(&0.0) {
            return Err(CoreError::InvalidData("explicitly stored zero".into()));
        }
        Ok(Self {
            indices,
            values,
            dim,
        })
    }

    /// Builds a vector from dense coefficients, dropping zeros.
    pub fn from_dense(coeffs: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in coeffs.iter().enumerate() {
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        }
        Self {
            indices,
            values,
            dim: coeffs.len(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Inner product with a dense vector of length `dim`.
    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.dim);
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * w[i])
            .sum()
    }

    /// Inner product with another sparse vector (merge on sorted indices).
    pub fn dot_sparse(&self, other: &SparseVector) -> f64 {
        let mut acc = 0.0;
        let (mut a, mut b) = (0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    /// `out += scale * self`, with `out` dense of length `dim`.
    pub fn add_scaled_into(&self, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] += scale * v;
        }
    }

    fn scale_values(&mut self, scale: f64) {
        for v in &mut self.values {
            *v *= scale;
        }
    }
}

/// Labeled sparse dataset. `max_norm` is the largest Euclidean point norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<SparseVector>,
    labels: Vec<f64>,
    dim: usize,
    max_norm: f64,
}

impl Dataset {
    pub fn new(points: Vec<SparseVector>, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(CoreError::InvalidData(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(CoreError::InvalidData("non-finite label".into()));
        }
        let dim = points.iter().map(|p| p.dim()).max().unwrap_or(0);
        if points.iter().any(|p| p.dim() != dim) {
            return Err(CoreError::InvalidData(
                "inconsistent point dimensions".into(),
            ));
        }
        let max_norm = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        Ok(Self {
            points,
            labels,
            dim,
            max_norm,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &SparseVector {
        &self.points[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn points(&self) -> &[SparseVector] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    /// Classification losses require labels in {-1, +1}.
    pub fn require_binary_labels(&self) -> Result<()> {
        match self.labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            None => Ok(()),
            Some(i) => Err(CoreError::InvalidData(format!(
                "label {} at index {i} is not in {{-1, +1}}",
                self.labels[i]
            ))),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Divides every point by the single global scalar `M = max_i ||x_i||`, so the
/// data geometry is preserved up to a constant and `max_norm` becomes 1.
/// Returns the scaled dataset together with `M` for lambda/label bookkeeping.
pub fn scale_to_unit_norm(ds: &Dataset) -> Result<(Dataset, f64)> {
    if ds.is_empty() {
        return Err(CoreError::InvalidData("empty dataset".into()));
    }
    let m = ds.max_norm();
    if m == 0.0 {
        return Err(CoreError::InvalidData("zero data".into()));
    }
    if m == 1.0 {
        return Ok((ds.clone(), 1.0));
    }
    let mut scaled = ds.clone();
    for p in &mut scaled.points {
        p.scale_values(1.0 / m);
    }
    scaled.max_norm = scaled.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    Ok((scaled, m))
}

/// Disjoint assignment of the `n` coordinate/data indices to `K` worker blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    n: usize,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(CoreError::InvalidConfig(
                "partition needs at least one block".into(),
            ));
        }
        let mut seen = vec![false; n];
        let mut total = 0usize;
        for block in &blocks {
            for &i in block {
                if i >= n {
                    return Err(CoreError::InvalidData(format!(
                        "index {i} out of range for n = {n}"
                    )));
                }
                if seen[i] {
                    return Err(CoreError::InvalidData(format!("index {i} assigned twice")));
                }
                seen[i] = true;
                total += 1;
            }
        }
        if total != n {
            return Err(CoreError::InvalidData(format!(
                "blocks cover {total} of {n} indices"
            )));
        }
        Ok(Self { blocks, n })
    }

    /// Single block holding all of `0..n`.
    pub fn whole(n: usize) -> Self {
        Self {
            blocks: vec![(0..n).collect()],
            n,
        }
    }

    /// Random balanced assignment: shuffled indices split into contiguous
    /// chunks whose sizes differ by at most one. Deterministic given `seed`.
    pub fn uniform(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(CoreError::InvalidConfig(format!(
                "need 1 <= K <= n, got K = {k}, n = {n}"
            )));
        }
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        Ok(Self::contiguous_chunks(indices, n, k))
    }

    /// Balanced contiguous chunks in as-stored order (no shuffle).
    pub fn contiguous(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(CoreError::InvalidConfig(format!(
                "need 1 <= K <= n, got K = {k}, n = {n}"
            )));
        }
        Ok(Self::contiguous_chunks((0..n).collect(), n, k))
    }

    fn contiguous_chunks(indices: Vec<usize>, n: usize, k: usize) -> Self {
        let base = n / k;
        let extra = n % k;
        let mut blocks = Vec::with_capacity(k);
        let mut start = 0;
        for b in 0..k {
            let size = base + usize::from(b < extra);
            blocks.push(indices[start..start + size].to_vec());
            start += size;
        }
        Self { blocks, n }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Size of the largest block.
    pub fn n_tilde(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Block owning index `i`.
    pub fn block_of(&self, i: usize) -> usize {
        for (k, block) in self.blocks.iter().enumerate() {
            if block.contains(&i) {
                return k;
            }
        }
        panic!("index {i} not covered by partition");
    }

    /// Index -> owning block, as a lookup table.
    pub fn owner_table(&self) -> Vec<usize> {
        let mut owner = vec![0usize; self.n];
        for (k, block) in self.blocks.iter().enumerate() {
            for &i in block {
                owner[i] = k;
            }
        }
        owner
    }
}

/// Parses LIBSVM text: each nonempty line is `<label> <idx>:<val> ...` with
/// 1-based, strictly ascending indices. The feature dimension is the largest
/// index seen unless `forced_dim` overrides it (to align multiple files).
pub fn parse_libsvm<R: BufRead>(reader: R, forced_dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<(f64, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut max_idx = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| CoreError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label: f64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|_| CoreError::Parse {
                line: lineno,
                msg: "bad label".into(),
            })?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev = 0usize;
        for field in fields {
            let (idx, val) = field.split_once(':').ok_or_else(|| CoreError::Parse {
                line: lineno,
                msg: format!("expected idx:val, got `{field}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| CoreError::Parse {
                line: lineno,
                msg: format!("bad index `{idx}`"),
            })?;
            let val: f64 = val.parse().map_err(|_| CoreError::Parse {
                line: lineno,
                msg: format!("bad value `{val}`"),
            })?;
            if idx == 0 {
                return Err(CoreError::Parse {
                    line: lineno,
                    msg: "indices are 1-based".into(),
                });
            }
            if idx <= prev {
                return Err(CoreError::Parse {
                    line: lineno,
                    msg: format!("non-ascending index {idx} after {prev}"),
                });
            }
            prev = idx;
            if val != 0.0 {
                indices.push(idx - 1);
                values.push(val);
            }
            max_idx = max_idx.max(idx);
        }
        rows.push((label, indices, values));
    }
    let dim = forced_dim.unwrap_or(max_idx);
    if max_idx > dim {
        return Err(CoreError::InvalidData(format!(
            "forced dim {dim} below largest observed index {max_idx}"
        )));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (label, indices, values) in rows {
        points.push(SparseVector::new(indices, values, dim)?);
        labels.push(label);
    }
    Dataset::new(points, labels)
}

pub fn parse_libsvm_str(text: &str, forced_dim: Option<usize>) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), forced_dim)
}

/// Writes LIBSVM text that `parse_libsvm` reads back to an identical dataset
/// (given the same dim override).
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    for i in 0..ds.n() {
        let p = ds.point(i);
        write!(out, "{}", ds.label(i))?;
        for (&j, &v) in p.indices().iter().zip(p.values()) {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Gaussian sparse points at expected density `sparsity`, labels from the sign
/// of a random hyperplane with flip probability `label_noise`, scaled to unit
/// max norm. Deterministic given `seed`.
pub fn gen_synthetic(
    n: usize,
    d: usize,
    sparsity: f64,
    label_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(CoreError::InvalidConfig("n and d must be positive".into()));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "sparsity {sparsity} not in (0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&label_noise) {
        return Err(CoreError::InvalidConfig(format!(
            "label_noise {label_noise} not in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyperplane: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for j in 0..d {
            if sparsity >= 1.0 || rng.random::<f64>() < sparsity {
                let v: f64 = rng.sample(StandardNormal);
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
        }
        let point = SparseVector::new(indices, values, d)?;
        let margin = point.dot_dense(&hyperplane);
        let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
        if label_noise > 0.0 && rng.random::<f64>() < label_noise {
            y = -y;
        }
        points.push(point);
        labels.push(y);
    }
    let (scaled, _) = scale_to_unit_norm(&Dataset::new(points, labels)?)?;
    Ok(scaled)
}

/// Dataset whose blocks live on disjoint coordinate slices, so points from
/// different blocks are exactly orthogonal. Block k of the returned partition
/// owns points `k*n_per_block .. (k+1)*n_per_block`, each supported only on
/// coordinates `k*d_per_block .. (k+1)*d_per_block`.
pub fn gen_orthogonal_blocks(
    k: usize,
    n_per_block: usize,
    d_per_block: usize,
    seed: u64,
) -> Result<(Dataset, Partition)> {
    if k == 0 || n_per_block == 0 || d_per_block == 0 {
        return Err(CoreError::InvalidConfig(
            "k, n_per_block, d_per_block must be positive".into(),
        ));
    }
    let dim = k * d_per_block;
    let n = k * n_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyperplane: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(k);
    for b in 0..k {
        blocks.push((b * n_per_block..(b + 1) * n_per_block).collect::<Vec<_>>());
        for _ in 0..n_per_block {
            let mut indices = Vec::with_capacity(d_per_block);
            let mut values = Vec::with_capacity(d_per_block);
            for j in 0..d_per_block {
                let v: f64 = rng.sample(StandardNormal);
                if v != 0.0 {
                    indices.push(b * d_per_block + j);
                    values.push(v);
                }
            }
            let point = SparseVector::new(indices, values, dim)?;
            let margin = point.dot_dense(&hyperplane);
            labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
            points.push(point);
        }
    }
    let (scaled, _) = scale_to_unit_norm(&Dataset::new(points, labels)?)?;
    Ok((scaled, Partition::new(blocks, n)?))
}
