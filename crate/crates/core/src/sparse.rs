//! Sparse binary rows and datasets, plus the on-disk formats they are read from.
//!
//! Rows store the sorted coordinates of their non-zero bits. Coordinates are
//! 0-based in memory; the svmlight-style format is 1-based on disk.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary vector stored as the strictly increasing list of its non-zero coordinates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseRow {
    indices: Vec<u32>,
}

impl SparseRow {
    /// Builds a row from indices that must already be strictly increasing.
    pub fn new(indices: Vec<u32>) -> Result<Self> {
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRow(format!(
                "indices must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        Ok(SparseRow { indices })
    }

    /// Builds a row from arbitrary indices, sorting and dropping duplicates.
    pub fn from_unsorted(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        SparseRow { indices }
    }

    pub fn empty() -> Self {
        SparseRow::default()
    }

    /// Row with bit 1 wherever `bits` is true.
    pub fn from_dense(bits: &[bool]) -> Self {
        let indices = bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j as u32))
            .collect();
        SparseRow { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: u32) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Largest stored coordinate, if any.
    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<bool> {
        let mut bits = vec![false; dim];
        for &j in &self.indices {
            bits[j as usize] = true;
        }
        bits
    }

    /// Number of coordinates set in both rows.
    pub fn intersection_len(&self, other: &SparseRow) -> usize {
        let (a, b) = (&self.indices, &other.indices);
        let (mut i, mut j, mut common) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        common
    }

    /// Hamming distance between the two binary vectors.
    pub fn hamming(&self, other: &SparseRow) -> usize {
        self.nnz() + other.nnz() - 2 * self.intersection_len(other)
    }
}

impl fmt::Display for SparseRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (pos, j) in self.indices.iter().enumerate() {
            if pos > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

/// Coordinate-wise XOR: the positions where `x` and `m` differ.
pub fn xor_row(x: &SparseRow, m: &SparseRow) -> SparseRow {
    let (a, b) = (&x.indices, &m.indices);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    SparseRow { indices: out }
}

/// Immutable collection of sparse binary rows of a fixed dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseBinaryDataset {
    dim: usize,
    rows: Vec<SparseRow>,
}

impl SparseBinaryDataset {
    pub fn new(dim: usize, rows: Vec<SparseRow>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if let Some(max) = row.max_index() {
                if max as usize >= dim {
                    return Err(Error::IndexOutOfRange {
                        line: i + 1,
                        index: max as usize,
                        dim,
                    });
                }
            }
        }
        Ok(SparseBinaryDataset { dim, rows })
    }

    /// Convenience constructor from index lists; indices are sorted and deduplicated.
    pub fn from_index_lists(dim: usize, lists: Vec<Vec<u32>>) -> Result<Self> {
        Self::new(dim, lists.into_iter().map(SparseRow::from_unsorted).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    /// The rows at `picks`, in the given order.
    pub fn select_rows(&self, picks: &[usize]) -> SparseBinaryDataset {
        SparseBinaryDataset {
            dim: self.dim,
            rows: picks.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Keeps only the listed columns, renumbered 0.. in the order given.
    pub fn select_columns(&self, columns: &[u32]) -> Result<SparseBinaryDataset> {
        let mut remap = vec![u32::MAX; self.dim];
        for (new, &old) in columns.iter().enumerate() {
            let slot = remap
                .get_mut(old as usize)
                .ok_or_else(|| Error::Invalid(format!("column {old} out of range")))?;
            *slot = new as u32;
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                SparseRow::from_unsorted(
                    row.indices()
                        .iter()
                        .map(|&j| remap[j as usize])
                        .filter(|&j| j != u32::MAX)
                        .collect(),
                )
            })
            .collect();
        SparseBinaryDataset::new(columns.len(), rows)
    }
}

/// Summary counts of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct NnzStats {
    pub mean_nnz: f64,
    pub column_counts: Vec<u64>,
}

pub fn nnz_stats(data: &SparseBinaryDataset) -> Result<NnzStats> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut column_counts = vec![0u64; data.dim()];
    let mut total = 0usize;
    for row in data.rows() {
        total += row.nnz();
        for &j in row.indices() {
            column_counts[j as usize] += 1;
        }
    }
    Ok(NnzStats {
        mean_nnz: total as f64 / data.len() as f64,
        column_counts,
    })
}

/// On-disk layouts understood by [`load_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// `[label] index:1 index:1 ...` with 1-based indices.
    #[default]
    SvmlightSparse,
    /// Comma-separated 0/1 values, no header.
    DenseCsv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svmlight" | "svmlight-sparse" | "sparse" => Ok(Format::SvmlightSparse),
            "dense-csv" | "csv" | "dense" => Ok(Format::DenseCsv),
            other => Err(Error::Invalid(format!("unknown format {other:?}"))),
        }
    }
}

/// A parsed input file: the rows and any labels that were stored alongside them.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub dataset: SparseBinaryDataset,
    pub labels: Option<Vec<i64>>,
}

pub fn load_dataset(path: impl AsRef<Path>, format: Format, dim: Option<usize>) -> Result<LoadedData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        Format::SvmlightSparse => parse_svmlight(reader, dim),
        Format::DenseCsv => parse_dense_csv(reader, dim),
    }
    .map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses one svmlight line into an optional label and 0-based indices.
fn parse_svmlight_line(text: &str, line: usize) -> Result<(Option<i64>, Vec<u32>)> {
    let body = text.split('#').next().unwrap_or("");
    let mut tokens = body.split_whitespace().peekable();
    let mut label = None;
    if let Some(first) = tokens.peek() {
        if !first.contains(':') {
            let value = first
                .parse::<i64>()
                .map_err(|_| parse_err(line, format!("bad label {first:?}")))?;
            label = Some(value);
            tokens.next();
        }
    }
    let mut indices = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("expected index:value, found {tok:?}")))?;
        let idx: u64 = idx
            .parse()
            .map_err(|_| parse_err(line, format!("bad index {idx:?}")))?;
        if idx == 0 || idx > u32::MAX as u64 {
            return Err(parse_err(line, format!("index {idx} outside 1..={}", u32::MAX)));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(line, format!("bad value {val:?}")))?;
        if val == 1.0 {
            indices.push((idx - 1) as u32);
        } else if val != 0.0 {
            return Err(parse_err(line, format!("expected binary value, found {val}")));
        }
    }
    indices.sort_unstable();
    if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
        return Err(parse_err(line, format!("index {} given twice", w[0] + 1)));
    }
    Ok((label, indices))
}

pub fn parse_svmlight<R: BufRead>(reader: R, dim: Option<usize>) -> Result<LoadedData> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut labelled = 0usize;
    let mut max_seen: Option<u32> = None;
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| Error::io("<input>", e))?;
        let (label, indices) = parse_svmlight_line(&text, line)?;
        if let (Some(d), Some(&last)) = (dim, indices.last()) {
            if last as usize >= d {
                return Err(Error::IndexOutOfRange {
                    line,
                    index: last as usize + 1,
                    dim: d,
                });
            }
        }
        max_seen = max_seen.max(indices.last().copied());
        if label.is_some() {
            labelled += 1;
        }
        labels.push(label.unwrap_or_default());
        rows.push(SparseRow { indices });
    }
    if labelled != 0 && labelled != rows.len() {
        return Err(Error::Invalid(format!(
            "only {labelled} of {} rows carry a label",
            rows.len()
        )));
    }
    let dim = dim.unwrap_or_else(|| max_seen.map_or(1, |m| m as usize + 1));
    Ok(LoadedData {
        dataset: SparseBinaryDataset::new(dim, rows)?,
        labels: (labelled > 0).then_some(labels),
    })
}

pub fn parse_dense_csv<R: BufRead>(reader: R, dim: Option<usize>) -> Result<LoadedData> {
    let mut width = dim;
    let mut rows = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| Error::io("<input>", e))?;
        let text = text.trim();
        if text.is_empty() {
            rows.push(SparseRow::empty());
            continue;
        }
        let mut indices = Vec::new();
        let mut count = 0usize;
        for (j, cell) in text.split(',').enumerate() {
            count += 1;
            match cell.trim() {
                "0" => {}
                "1" => indices.push(j as u32),
                other => {
                    return Err(parse_err(line, format!("expected 0 or 1, found {other:?}")))
                }
            }
        }
        match width {
            Some(w) if w != count => {
                return Err(parse_err(line, format!("expected {w} columns, found {count}")))
            }
            Some(_) => {}
            None => width = Some(count),
        }
        rows.push(SparseRow { indices });
    }
    Ok(LoadedData {
        dataset: SparseBinaryDataset::new(width.unwrap_or(1), rows)?,
        labels: None,
    })
}

/// Writes rows in the 1-based svmlight layout, with a leading label when given.
pub fn write_svmlight<W: Write>(
    mut out: W,
    data: &SparseBinaryDataset,
    labels: Option<&[i64]>,
) -> std::io::Result<()> {
    for (i, row) in data.rows().iter().enumerate() {
        let mut first = true;
        if let Some(labels) = labels {
            write!(out, "{}", labels[i])?;
            first = false;
        }
        for &j in row.indices() {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{}:1", j + 1)?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_svmlight(path: impl AsRef<Path>, data: &SparseBinaryDataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_svmlight(&mut out, data, None)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads one integer label per line; blank lines are rejected.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, text) in BufReader::new(file).lines().enumerate() {
        let text = text.map_err(|e| Error::io(path, e))?;
        let value = text
            .trim()
            .parse::<i64>()
            .map_err(|_| parse_err(i + 1, format!("bad label {:?}", text.trim())))?;
        labels.push(value);
    }
    Ok(labels)
}

pub fn save_labels<T: fmt::Display>(path: impl AsRef<Path>, labels: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    labels
        .iter()
        .try_for_each(|l| writeln!(out, "{l}"))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(ix: &[u32]) -> SparseRow {
        SparseRow::new(ix.to_vec()).unwrap()
    }

    #[test]
    fn dense_csv_reads_bits() {
        let loaded = parse_dense_csv("0,1,0,1,1\n".as_bytes(), None).unwrap();
        assert_eq!(loaded.dataset.dim(), 5);
        assert_eq!(loaded.dataset.row(0).indices(), &[1, 3, 4]);
    }

    #[test]
    fn dense_csv_rejects_non_binary() {
        let err = parse_dense_csv("0,1\n0,2\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn dense_csv_rejects_ragged_rows() {
        let err = parse_dense_csv("0,1,1\n0,1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn svmlight_is_one_based() {
        let loaded = parse_svmlight("2:1 4:1\n".as_bytes(), Some(9)).unwrap();
        assert_eq!(loaded.dataset.dim(), 9);
        assert_eq!(loaded.dataset.row(0).indices(), &[1, 3]);
        assert!(loaded.labels.is_none());
    }

    #[test]
    fn svmlight_empty_line_is_zero_row() {
        let loaded = parse_svmlight("1:1\n\n3:1\n".as_bytes(), None).unwrap();
        assert_eq!(loaded.dataset.len(), 3);
        assert!(loaded.dataset.row(1).is_empty());
        assert_eq!(loaded.dataset.dim(), 3);
    }

    #[test]
    fn svmlight_labels_are_split_off() {
        let loaded = parse_svmlight("1 1:1 3:1\n-1 2:1\n0\n".as_bytes(), None).unwrap();
        assert_eq!(loaded.labels, Some(vec![1, -1, 0]));
        assert_eq!(loaded.dataset.row(0).indices(), &[0, 2]);
        assert!(loaded.dataset.row(2).is_empty());
    }

    #[test]
    fn svmlight_errors_carry_line_numbers() {
        let err = parse_svmlight("1:1\n2:x\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let err = parse_svmlight("1:1\n12:1\n".as_bytes(), Some(10)).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { line: 2, index: 12, dim: 10 }));

        let err = parse_svmlight("0:1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));

        let err = parse_svmlight("3:1 3:1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));

        let err = parse_svmlight("3:0.5\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn svmlight_explicit_zero_is_skipped() {
        let loaded = parse_svmlight("1:1 2:0 3:1\n".as_bytes(), None).unwrap();
        assert_eq!(loaded.dataset.row(0).indices(), &[0, 2]);
    }

    #[test]
    fn xor_matches_figure_example() {
        // 1-based {2,5,9} xor {2,4,5} = {4,9}
        let x = row(&[1, 4, 8]);
        let m = row(&[1, 3, 4]);
        assert_eq!(xor_row(&x, &m).indices(), &[3, 8]);
    }

    #[test]
    fn xor_degenerate_cases() {
        let x = row(&[0, 7, 11]);
        assert!(xor_row(&x, &x).is_empty());
        assert_eq!(xor_row(&x, &SparseRow::empty()), x);
    }

    #[test]
    fn nnz_stats_counts() {
        let data = SparseBinaryDataset::new(2, vec![row(&[0]), row(&[0, 1])]).unwrap();
        let stats = nnz_stats(&data).unwrap();
        assert_eq!(stats.mean_nnz, 1.5);
        assert_eq!(stats.column_counts, vec![2, 1]);

        let zeros = SparseBinaryDataset::new(4, vec![SparseRow::empty(); 3]).unwrap();
        assert_eq!(nnz_stats(&zeros).unwrap().mean_nnz, 0.0);

        let none = SparseBinaryDataset::new(4, vec![]).unwrap();
        assert!(matches!(nnz_stats(&none), Err(Error::EmptyDataset)));
    }

    #[test]
    fn rows_must_be_sorted() {
        assert!(SparseRow::new(vec![3, 1]).is_err());
        assert!(SparseRow::new(vec![1, 1]).is_err());
        assert!(SparseBinaryDataset::new(3, vec![row(&[3])]).is_err());
    }

    #[test]
    fn select_columns_renumbers() {
        let data = SparseBinaryDataset::new(5, vec![row(&[0, 2, 4]), row(&[1])]).unwrap();
        let sub = data.select_columns(&[4, 1]).unwrap();
        assert_eq!(sub.dim(), 2);
        assert_eq!(sub.row(0).indices(), &[0]);
        assert_eq!(sub.row(1).indices(), &[1]);
    }

    fn arb_row(dim: u32) -> impl Strategy<Value = SparseRow> {
        proptest::collection::btree_set(0..dim, 0..12)
            .prop_map(|s| SparseRow::new(s.into_iter().collect()).unwrap())
    }

    proptest! {
        #[test]
        fn xor_is_an_involution(x in arb_row(40), m in arb_row(40)) {
            prop_assert_eq!(xor_row(&xor_row(&x, &m), &m), x);
        }

        #[test]
        fn xor_nnz_identity(x in arb_row(40), m in arb_row(40)) {
            let d = xor_row(&x, &m);
            prop_assert_eq!(d.nnz(), x.nnz() + m.nnz() - 2 * x.intersection_len(&m));
        }

        #[test]
        fn svmlight_round_trip(rows in proptest::collection::vec(arb_row(30), 1..20)) {
            let data = SparseBinaryDataset::new(30, rows).unwrap();
            let mut buf = Vec::new();
            write_svmlight(&mut buf, &data, None).unwrap();
            let back = parse_svmlight(buf.as_slice(), Some(30)).unwrap();
            prop_assert_eq!(back.dataset, data);
        }
    }
}
