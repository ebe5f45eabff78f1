//! Sparse text format: one example per line, `<label> <index>:<value> ...`,
//! whitespace separated, 0-based indices. Blank lines are skipped.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{DomainDataset, Features, SparseRows};
use crate::error::{DarnError, Result};

fn parse_error(line: usize, msg: impl Into<String>) -> DarnError {
    DarnError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses the format from a reader. With `dim = None` the dimension is one
/// past the largest index seen.
pub fn parse_sparse_text<R: Read>(input: R, dim: Option<usize>, name: &str) -> Result<DomainDataset> {
    let reader = BufReader::new(input);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = None::<usize>;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_error(lineno, format!("bad label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(parse_error(lineno, "label is not finite"));
        }
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(lineno, format!("expected index:value, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_error(lineno, format!("bad feature index `{idx}`")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_error(lineno, format!("bad feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(parse_error(lineno, format!("feature {idx} is not finite")));
            }
            if let Some(d) = dim {
                if idx >= d {
                    return Err(parse_error(
                        lineno,
                        format!("feature index {idx} out of range for dimension {d}"),
                    ));
                }
            }
            if row.iter().any(|(i, _)| *i == idx) {
                return Err(parse_error(lineno, format!("feature {idx} given twice")));
            }
            max_index = Some(max_index.map_or(idx, |m| m.max(idx)));
            row.push((idx, val));
        }
        row.sort_by_key(|(i, _)| *i);
        rows.push(row);
        labels.push(label);
    }
    let dim = dim.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    DomainDataset::new(
        name,
        Features::Sparse(SparseRows::new(dim, rows)?),
        Some(labels),
    )
}

pub fn load_sparse_text(path: &Path, dim: Option<usize>) -> Result<DomainDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_sparse_text(fs::File::open(path)?, dim, &name)
}

/// Writes a labelled dataset; dense rows are written without their zeros.
pub fn write_sparse_text<W: Write>(dataset: &DomainDataset, mut out: W) -> Result<()> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| DarnError::invalid("cannot write an unlabelled dataset"))?;
    for (r, label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        match &dataset.features {
            Features::Sparse(s) => {
                for (i, v) in s.row(r) {
                    write!(out, " {i}:{v}")?;
                }
            }
            Features::Dense(m) => {
                for (i, v) in m.row(r).iter().enumerate().filter(|(_, v)| **v != 0.0) {
                    write!(out, " {i}:{v}")?;
                }
            }
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_line() {
        let d = parse_sparse_text("1 0:2.0 4:1.0\n".as_bytes(), Some(5), "x").unwrap();
        assert_eq!(d.labels, Some(vec![1.0]));
        assert_eq!(d.features.to_dense().row(0), &[2.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_input_gives_empty_dataset() {
        let d = parse_sparse_text("".as_bytes(), Some(3), "empty").unwrap();
        assert!(d.is_empty());
        assert!(crate::data::batch_iter(&d, 4, 0).is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "1 0:1\n0 2:x\n";
        match parse_sparse_text(bad.as_bytes(), None, "b") {
            Err(DarnError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_sparse_text("1 0:1\n\n1 7:1\n".as_bytes(), Some(5), "b") {
            Err(DarnError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("out of range"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_sparse_text("1 3\n".as_bytes(), None, "b").is_err());
        assert!(parse_sparse_text("one 3:1\n".as_bytes(), None, "b").is_err());
        assert!(parse_sparse_text("1 3:1 3:2\n".as_bytes(), None, "b").is_err());
    }

    #[test]
    fn infers_dimension() {
        let d = parse_sparse_text("-1 2:0.5\n1 9:1\n".as_bytes(), None, "i").unwrap();
        assert_eq!(d.dim(), 10);
        assert_eq!(d.class_labels().unwrap(), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn write_then_load_reproduces_matrix(
            rows in prop::collection::vec(
                (prop::sample::select(vec![-1.0, 0.0, 1.0, 2.5]),
                 prop::collection::btree_map(0usize..30, -1e6..1e6f64, 0..8)),
                0..20,
            )
        ) {
            let labels: Vec<f64> = rows.iter().map(|(l, _)| *l).collect();
            let sparse: Vec<Vec<(usize, f64)>> = rows
                .iter()
                .map(|(_, r)| r.iter().map(|(i, v)| (*i, *v)).collect())
                .collect();
            let d = DomainDataset::new(
                "p",
                Features::Sparse(SparseRows::new(30, sparse).unwrap()),
                Some(labels),
            ).unwrap();
            let mut buf = Vec::new();
            write_sparse_text(&d, &mut buf).unwrap();
            let back = parse_sparse_text(&buf[..], Some(30), "p").unwrap();
            prop_assert_eq!(back.features.to_dense(), d.features.to_dense());
            prop_assert_eq!(back.labels, d.labels);
        }
    }
}
