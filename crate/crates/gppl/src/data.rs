//! Delimited-text ingestion: item feature tables and preference pair lists.
//!
//! Both formats are comma-separated with a `.` decimal point. An items file
//! has one row per item — `id, x_1, …, x_D` — with an optional header row
//! (detected, not declared: a first row whose feature cells don't all parse
//! as numbers is treated as a header). A pairs file has no header; each row
//! is `id_i, id_j, label` with labels coded 2 (first preferred),
//! 0 (second preferred), 1 (undecided).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::likelihood::{PreferenceLabel, PreferencePair};
use crate::model;

/// Items with stable positions: row k of `features()` belongs to `ids()[k]`.
#[derive(Clone, Debug)]
pub struct ItemSet {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    x: DMatrix<f64>,
}

impl ItemSet {
    pub fn new(ids: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        if ids.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "item ids vs feature rows",
                expected: x.nrows(),
                got: ids.len(),
            });
        }
        if ids.is_empty() {
            return Err(Error::InvalidArgument("no items given".into()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (k, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), k).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate item id \"{id}\"")));
            }
        }
        for v in x.iter() {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(
                    "item features must be finite".into(),
                ));
            }
        }
        Ok(ItemSet { ids, index, x })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Feature dimension D.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Order-sensitive digest of the id vocabulary, stored in model files.
    pub fn vocab_hash(&self) -> String {
        model::vocab_hash(&self.ids)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Split one CSV row into trimmed cells. Blank rows return an empty vec.
fn split_row(raw: &str) -> Vec<&str> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    trimmed.split(',').map(str::trim).collect()
}

/// Read a whole file, naming it in the error (a bare "No such file or
/// directory" helps nobody at the command line).
pub(crate) fn read_named(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Load an items file. Line numbers in errors are 1-based physical lines.
pub fn load_items(path: &Path) -> Result<ItemSet> {
    let text = read_named(path)?;
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let cells = split_row(raw);
        if !cells.is_empty() {
            rows.push((k + 1, cells));
        }
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "items file is empty"));
    }
    if rows[0].1.len() < 2 {
        return Err(parse_err(
            path,
            rows[0].0,
            "expected an id column plus at least one feature column",
        ));
    }
    // Header detection: a first row whose feature cells are not all numeric.
    let has_header = rows[0].1[1..].iter().any(|c| c.parse::<f64>().is_err());
    let data = if has_header { &rows[1..] } else { &rows[..] };
    if data.is_empty() {
        return Err(parse_err(path, rows[0].0, "items file has a header but no rows"));
    }
    let ncols = data[0].1.len();
    let dim = ncols - 1;
    let mut ids = Vec::with_capacity(data.len());
    let mut values = Vec::with_capacity(data.len() * dim);
    for (line, cells) in data {
        if cells.len() != ncols {
            return Err(parse_err(
                path,
                *line,
                format!("expected {ncols} columns, found {}", cells.len()),
            ));
        }
        ids.push(cells[0].to_string());
        for cell in &cells[1..] {
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(path, *line, format!("\"{cell}\" is not a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, *line, format!("non-finite feature {v}")));
            }
            values.push(v);
        }
    }
    let n = ids.len();
    // Re-check uniqueness here so the error carries the offending line.
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(n);
    for ((line, _), id) in data.iter().zip(&ids) {
        if let Some(prev) = seen.insert(id.as_str(), *line) {
            return Err(parse_err(
                path,
                *line,
                format!("duplicate item id \"{id}\" (first seen at line {prev})"),
            ));
        }
    }
    ItemSet::new(ids, DMatrix::from_row_iterator(n, dim, values))
}

fn resolve_id(path: &Path, line: usize, items: &ItemSet, id: &str) -> Result<usize> {
    items
        .index_of(id)
        .ok_or_else(|| parse_err(path, line, format!("unknown item id \"{id}\"")))
}

/// Load a labeled pairs file (three columns, no header). Duplicate rows are
/// preserved: repeated labels are repeated evidence.
pub fn load_pairs(path: &Path, items: &ItemSet) -> Result<Vec<PreferencePair>> {
    let text = read_named(path)?;
    let mut pairs = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let cells = split_row(raw);
        if cells.is_empty() {
            continue;
        }
        if cells.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 columns (id_i, id_j, label), found {}", cells.len()),
            ));
        }
        let i = resolve_id(path, line, items, cells[0])?;
        let j = resolve_id(path, line, items, cells[1])?;
        let raw_label: u8 = cells[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid label \"{}\"", cells[2])))?;
        let label = PreferenceLabel::from_raw(raw_label)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let pair = PreferencePair::new(i, j, label)
            .map_err(|_| parse_err(path, line, "a pair must compare two distinct items"))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Load unlabeled pair queries: two columns, or three with the label
/// column ignored (so a training pairs file doubles as a query file).
pub fn load_pair_ids(path: &Path, items: &ItemSet) -> Result<Vec<(usize, usize)>> {
    let text = read_named(path)?;
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let cells = split_row(raw);
        if cells.is_empty() {
            continue;
        }
        if cells.len() != 2 && cells.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 or 3 columns, found {}", cells.len()),
            ));
        }
        let i = resolve_id(path, line, items, cells[0])?;
        let j = resolve_id(path, line, items, cells[1])?;
        if i == j {
            return Err(parse_err(path, line, "a pair must compare two distinct items"));
        }
        out.push((i, j));
    }
    Ok(out)
}

/// Arithmetic mean of a nonempty list of equal-length vectors, for pooling
/// per-token embeddings into one item feature vector.
pub fn mean_pool(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean_pool of an empty list".into()))?;
    let d = first.len();
    let mut acc = vec![0.0; d];
    for row in rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                context: "mean_pool rows",
                expected: d,
                got: row.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(acc)
}

/// Render one CSV row; floats use shortest round-trip formatting so written
/// tables parse back to identical bits.
pub fn csv_row(id_cells: &[&str], value_cells: &[f64]) -> String {
    let mut parts: Vec<String> = id_cells.iter().map(|s| s.to_string()).collect();
    parts.extend(value_cells.iter().map(|v| format!("{v}")));
    parts.join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn items_abc() -> ItemSet {
        let f = write_tmp("a,0.0,1.0\nb,1.0,0.0\nc,0.5,0.5\n");
        load_items(f.path()).unwrap()
    }

    #[test]
    fn loads_items_and_pairs() {
        let items = items_abc();
        assert_eq!((items.len(), items.dim()), (3, 2));
        assert_eq!(items.ids(), &["a", "b", "c"]);
        assert_eq!(items.index_of("c"), Some(2));
        assert_eq!(items.index_of("z"), None);

        let pf = write_tmp("a,b,2\nc,a,0\n");
        let pairs = load_pairs(pf.path(), &items).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].i, pairs[0].j), (0, 1));
        assert_eq!(pairs[0].label, PreferenceLabel::FirstPreferred);
        assert_eq!(pairs[1].label, PreferenceLabel::SecondPreferred);
    }

    #[test]
    fn header_detection() {
        let with = write_tmp("id,f1,f2\na,0.0,1.0\nb,1.0,0.0\n");
        assert_eq!(load_items(with.path()).unwrap().len(), 2);
        // Numeric-looking ids don't confuse detection: only feature cells count.
        let ids_numeric = write_tmp("101,0.0,1.0\n102,1.0,0.0\n");
        let items = load_items(ids_numeric.path()).unwrap();
        assert_eq!(items.ids(), &["101", "102"]);
    }

    #[test]
    fn blank_lines_are_skipped_but_counted() {
        let f = write_tmp("a,0.0\n\nb,1.0\n\nc,oops\n");
        match load_items(f.path()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("oops"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let f = write_tmp("a,0.0,1.0\nb,1.0\n");
        match load_items(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected_with_line() {
        let f = write_tmp("a,0.0\nb,1.0\na,2.0\n");
        match load_items(f.path()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains('a'));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_feature_rejected() {
        let f = write_tmp("a,inf\nb,1.0\n");
        assert!(load_items(f.path()).is_err());
    }

    #[test]
    fn unknown_id_error_names_id_and_line() {
        let items = items_abc();
        let pf = write_tmp("a,b,2\nq,a,0\n");
        match load_pairs(pf.path(), &items) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("\"q\""));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_label_rejected() {
        let items = items_abc();
        for bad in ["a,b,3", "a,b,-1", "a,b,x"] {
            let pf = write_tmp(bad);
            assert!(load_pairs(pf.path(), &items).is_err(), "{bad}");
        }
    }

    #[test]
    fn self_pair_rejected() {
        let items = items_abc();
        let pf = write_tmp("a,a,2\n");
        assert!(load_pairs(pf.path(), &items).is_err());
    }

    #[test]
    fn duplicate_pair_rows_preserved() {
        let items = items_abc();
        let pf = write_tmp("a,b,2\na,b,2\na,b,2\n");
        assert_eq!(load_pairs(pf.path(), &items).unwrap().len(), 3);
    }

    #[test]
    fn pair_ids_accept_two_or_three_columns() {
        let items = items_abc();
        let pf = write_tmp("a,b\nb,c,2\n");
        let q = load_pair_ids(pf.path(), &items).unwrap();
        assert_eq!(q, vec![(0, 1), (1, 2)]);
        let bad = write_tmp("a,b,2,9\n");
        assert!(load_pair_ids(bad.path(), &items).is_err());
    }

    #[test]
    fn mean_pool_examples() {
        assert_eq!(mean_pool(&[vec![3.0, -1.0]]).unwrap(), vec![3.0, -1.0]);
        assert_eq!(
            mean_pool(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap(),
            vec![1.0, 1.0]
        );
        let v = vec![0.25, -7.5, 2.0];
        let five: Vec<Vec<f64>> = (0..5).map(|_| v.clone()).collect();
        assert_eq!(mean_pool(&five).unwrap(), v);
        assert!(mean_pool(&[]).is_err());
        assert!(mean_pool(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let vals = [0.1 + 0.2, 1.0 / 3.0, -1e-300, 6.02214076e23];
        let row = csv_row(&["x"], &vals);
        let f = write_tmp(&format!("{row}\n"));
        let items = load_items(f.path()).unwrap();
        for (k, v) in vals.iter().enumerate() {
            assert_eq!(items.features()[(0, k)].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        match load_items(Path::new("/nonexistent/items.csv")) {
            Err(Error::Io(e)) => assert!(
                e.to_string().contains("/nonexistent/items.csv"),
                "error must name the file: {e}"
            ),
            other => panic!("{other:?}"),
        }
    }
}
