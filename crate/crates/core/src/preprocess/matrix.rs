use std::collections::BTreeMap;
use std::io::Write;

use super::Vocabulary;
use crate::par::Exec;

/// Row-compressed sparse matrix of TF-IDF weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentMatrix {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    row_ids: Vec<String>,
}

impl DocumentMatrix {
    /// Builds from per-row `(column, value)` lists; columns must be
    /// strictly increasing within a row.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>, row_ids: Vec<String>) -> Self {
        assert_eq!(rows.len(), row_ids.len(), "one id per row");
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < n_cols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n_cols,
            indptr,
            indices,
            values,
            row_ids,
        }
    }

    /// Dense constructor, mostly for tests and toy problems.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, v)| (c, *v)).collect())
            .collect();
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::from_rows(n_cols, sparse, ids)
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DocumentMatrix {
        let data = rows
            .iter()
            .map(|&r| {
                let (c, v) = self.row(r);
                c.iter().copied().zip(v.iter().copied()).collect()
            })
            .collect();
        let ids = rows.iter().map(|&r| self.row_ids[r].clone()).collect();
        Self::from_rows(self.n_cols, data, ids)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows())
            .map(|r| {
                let mut out = vec![0.0; self.n_cols];
                let (c, v) = self.row(r);
                for (&c, &v) in c.iter().zip(v) {
                    out[c] = v;
                }
                out
            })
            .collect()
    }

    /// Writes `row col value` triplets after a header naming the shape and
    /// the vocabulary checksum.
    pub fn write_triplets<W: Write>(&self, mut w: W, vocab_checksum: &str) -> std::io::Result<()> {
        writeln!(w, "# vocabulary_sha256 {vocab_checksum}")?;
        writeln!(w, "# shape {} {}", self.n_rows(), self.n_cols)?;
        for r in 0..self.n_rows() {
            let (c, v) = self.row(r);
            for (c, v) in c.iter().zip(v) {
                writeln!(w, "{r} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}

/// TF-IDF rows: raw counts times smoothed idf, scaled to unit Euclidean
/// norm. Out-of-vocabulary tokens are ignored and empty rows stay zero.
pub fn tfidf_transform<D, S>(docs: &[D], row_ids: &[S], vocab: &Vocabulary, exec: Exec) -> DocumentMatrix
where
    D: AsRef<[String]> + Sync,
    S: AsRef<str>,
{
    let rows = exec.map(docs, |doc| {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in doc.as_ref() {
            if let Some(j) = vocab.index_of(tok) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        let mut row: Vec<(usize, f64)> = counts.into_iter().map(|(j, tf)| (j, tf * vocab.idf(j))).collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut row {
                *v /= norm;
            }
        }
        row
    });
    let ids = row_ids.iter().map(|s| s.as_ref().to_string()).collect();
    DocumentMatrix::from_rows(vocab.len(), rows, ids)
}
