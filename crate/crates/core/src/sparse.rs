//! Compressed sparse row matrices and their on-disk triple format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::container::KeyValues;
use crate::error::{Error, Result};

/// Row-compressed sparse matrix with `u32` column ids. Column ids within a
/// row are strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            offsets: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from raw CSR arrays, checking shape and column ordering.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        offsets: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != nrows + 1 || offsets[0] != 0 {
            return Err(Error::InvalidArgument("bad CSR offsets".into()));
        }
        if *offsets.last().unwrap() != indices.len() || indices.len() != values.len() {
            return Err(Error::InvalidArgument("CSR arrays disagree on nnz".into()));
        }
        for r in 0..nrows {
            if offsets[r] > offsets[r + 1] {
                return Err(Error::InvalidArgument(format!("CSR offsets decrease at row {r}")));
            }
            let cols = &indices[offsets[r]..offsets[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "row {r} columns not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c as usize >= ncols) {
                return Err(Error::InvalidArgument(format!("row {r} column out of range")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from per-row entry lists; entries are sorted and duplicates summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let nrows = rows.len();
        let mut offsets = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!((c as usize) < ncols);
                if indices.len() > *offsets.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            offsets,
            indices,
            values,
        }
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        let ncols = dense.first().map_or(0, Vec::len);
        let rows = dense
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c as u32, v))
                    .collect()
            })
            .collect();
        Self::from_rows(ncols, rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).1.iter().sum()
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Scales every non-empty row to unit sum. Rows with zero sum are left as is.
    pub fn normalize_rows(&mut self) {
        for r in 0..self.nrows {
            let span = self.offsets[r]..self.offsets[r + 1];
            let sum: f64 = self.values[span.clone()].iter().sum();
            if sum > 0.0 {
                for v in &mut self.values[span] {
                    *v /= sum;
                }
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c as usize];
                indices[slot] = r as u32;
                values[slot] = v;
                next[c as usize] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            offsets,
            indices,
            values,
        }
    }

    /// Entry-wise `f(a, b)` over the union of both supports, with missing
    /// entries read as zero. Results equal to zero are dropped.
    pub fn zip_union(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut offsets = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        fn emit(indices: &mut Vec<u32>, values: &mut Vec<f64>, c: u32, v: f64) {
            if v != 0.0 {
                indices.push(c);
                values.push(v);
            }
        }
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                if j == cb.len() || (i < ca.len() && ca[i] < cb[j]) {
                    emit(&mut indices, &mut values, ca[i], f(va[i], 0.0));
                    i += 1;
                } else if i == ca.len() || cb[j] < ca[i] {
                    emit(&mut indices, &mut values, cb[j], f(0.0, vb[j]));
                    j += 1;
                } else {
                    emit(&mut indices, &mut values, ca[i], f(va[i], vb[j]));
                    i += 1;
                    j += 1;
                }
            }
            offsets.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            offsets,
            indices,
            values,
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Restricts to the given rows and columns (both as sorted id lists) and
    /// relabels them `0..ids.len()`.
    pub fn submatrix(&self, ids: &[u32]) -> Self {
        let mut local = vec![u32::MAX; self.ncols.max(self.nrows)];
        for (i, &id) in ids.iter().enumerate() {
            local[id as usize] = i as u32;
        }
        let rows = ids
            .iter()
            .map(|&id| {
                let (cols, vals) = self.row(id as usize);
                cols.iter()
                    .zip(vals)
                    .filter(|(&c, _)| local[c as usize] != u32::MAX)
                    .map(|(&c, &v)| (local[c as usize], v))
                    .collect()
            })
            .collect();
        Self::from_rows(ids.len(), rows)
    }
}

const SPARSE_MAGIC: &[u8; 8] = b"SPHXCSR1";

/// Sparse matrix file: `SPHXCSR1` magic, a length-prefixed `key=value`
/// metadata block, then `rows`, `cols`, `nnz` (u64), row offsets (u64),
/// column ids (u32), one or more f32 value planes of length `nnz`, and
/// optional dense f32 per-row vectors. All little-endian.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFile {
    pub meta: KeyValues,
    pub nrows: usize,
    pub ncols: usize,
    pub offsets: Vec<u64>,
    pub indices: Vec<u32>,
    pub planes: Vec<(String, Vec<f32>)>,
    pub row_vectors: Vec<(String, Vec<f32>)>,
}

impl SparseFile {
    /// Wraps a single matrix as a one-plane file named `plane`.
    pub fn from_matrix(matrix: &CsrMatrix, plane: &str, meta: KeyValues) -> Self {
        Self {
            meta,
            nrows: matrix.nrows,
            ncols: matrix.ncols,
            offsets: matrix.offsets.iter().map(|&o| o as u64).collect(),
            indices: matrix.indices.clone(),
            planes: vec![(plane.to_string(), matrix.values.iter().map(|&v| v as f32).collect())],
            row_vectors: Vec::new(),
        }
    }

    pub fn plane(&self, name: &str) -> Option<&[f32]> {
        self.planes.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn row_vector(&self, name: &str) -> Option<&[f32]> {
        self.row_vectors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Materializes plane `name` as an f64 matrix.
    pub fn matrix(&self, name: &str) -> Result<CsrMatrix> {
        let plane = self
            .plane(name)
            .ok_or_else(|| Error::InvalidArgument(format!("sparse file has no plane '{name}'")))?;
        CsrMatrix::from_raw(
            self.nrows,
            self.ncols,
            self.offsets.iter().map(|&o| o as usize).collect(),
            self.indices.clone(),
            plane.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.meta.clone();
        meta.set(
            "planes",
            self.planes
                .iter()
                .map(|(n, _)| n.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        meta.set(
            "row_vectors",
            self.row_vectors
                .iter()
                .map(|(n, _)| n.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        let meta_text = meta.to_text();
        let mut out = Vec::new();
        out.extend_from_slice(SPARSE_MAGIC);
        out.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
        out.extend_from_slice(meta_text.as_bytes());
        for v in [self.nrows as u64, self.ncols as u64, self.indices.len() as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &o in &self.offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        for &c in &self.indices {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for (_, plane) in &self.planes {
            for &v in plane {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (_, vector) in &self.row_vectors {
            for &v in vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut cursor = bytes;
        let bad = |reason: &str| Error::format(path, reason.to_string());
        let mut magic = [0u8; 8];
        cursor.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != SPARSE_MAGIC {
            return Err(bad("bad magic"));
        }
        let meta_len = read_u32(&mut cursor).ok_or_else(|| bad("truncated header"))? as usize;
        if cursor.len() < meta_len {
            return Err(bad("truncated metadata"));
        }
        let meta_text = std::str::from_utf8(&cursor[..meta_len]).map_err(|_| bad("metadata not UTF-8"))?;
        let mut meta = KeyValues::parse(meta_text).map_err(|r| Error::format(path, r))?;
        cursor = &cursor[meta_len..];
        let nrows = read_u64(&mut cursor).ok_or_else(|| bad("truncated shape"))? as usize;
        let ncols = read_u64(&mut cursor).ok_or_else(|| bad("truncated shape"))? as usize;
        let nnz = read_u64(&mut cursor).ok_or_else(|| bad("truncated shape"))? as usize;
        let names = |key: &str| -> Vec<String> {
            meta.get(key)
                .map(|s| s.split(',').filter(|x| !x.is_empty()).map(str::to_string).collect())
                .unwrap_or_default()
        };
        let plane_names = names("planes");
        let vector_names = names("row_vectors");
        let expected = 8 * (nrows + 1) + 4 * nnz + 4 * nnz * plane_names.len() + 4 * nrows * vector_names.len();
        if cursor.len() != expected {
            return Err(Error::PayloadSize {
                expected,
                found: cursor.len(),
            });
        }
        let offsets: Vec<u64> = (0..=nrows).map(|_| read_u64(&mut cursor).unwrap()).collect();
        let indices: Vec<u32> = (0..nnz).map(|_| read_u32(&mut cursor).unwrap()).collect();
        let mut read_f32s = |len: usize| -> Vec<f32> {
            (0..len)
                .map(|_| f32::from_bits(read_u32(&mut cursor).unwrap()))
                .collect()
        };
        let planes = plane_names.into_iter().map(|n| (n, read_f32s(nnz))).collect();
        let row_vectors = vector_names.into_iter().map(|n| (n, read_f32s(nrows))).collect();
        if offsets.first() != Some(&0) || offsets.last() != Some(&(nnz as u64)) {
            return Err(bad("inconsistent row offsets"));
        }
        // bookkeeping keys are regenerated on write
        let mut cleaned = KeyValues::new();
        for (k, v) in meta.iter() {
            if k != "planes" && k != "row_vectors" {
                cleaned.set(k, v);
            }
        }
        meta = cleaned;
        Ok(Self {
            meta,
            nrows,
            ncols,
            offsets,
            indices,
            planes,
            row_vectors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn read_u32(cursor: &mut &[u8]) -> Option<u32> {
    let (head, rest) = cursor.split_first_chunk::<4>()?;
    *cursor = rest;
    Some(u32::from_le_bytes(*head))
}

fn read_u64(cursor: &mut &[u8]) -> Option<u64> {
    let (head, rest) = cursor.split_first_chunk::<8>()?;
    *cursor = rest;
    Some(u64::from_le_bytes(*head))
}
