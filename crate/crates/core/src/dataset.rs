//! Delimited-text ingestion: header-addressed numeric rows with optional
//! label and chunk-id columns.
//!
//! Files are CSV by default; `.tsv`/`.tab` extensions switch to tabs. The
//! header row is required. Two column names are special (both renameable):
//! a label column carrying class labels and a chunk column carrying chunk
//! ids; when present they are pulled out of the numeric feature block.
//! Every other cell must parse as a finite real, and errors carry the file
//! name and 1-based line number so they can be fixed in an editor.

use std::path::Path;

use nalgebra::DMatrix;

use crate::classify::LabeledChunk;
use crate::error::{Error, Result};

/// Column-name configuration for [`read_delimited`]. A column whose header
/// matches `label_column` is read as labels, one matching `chunk_column` as
/// chunk ids; neither is required to be present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadOptions {
    pub label_column: String,
    pub chunk_column: String,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            chunk_column: "chunk".into(),
        }
    }
}

/// A parsed dataset: row-per-observation features plus whatever role
/// columns the file carried.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: DMatrix<f64>,
    labels: Option<Vec<String>>,
    chunk_ids: Option<Vec<String>>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn chunk_ids(&self) -> Option<&[String]> {
        self.chunk_ids.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    /// Groups rows into chunks by chunk id, ordered by id. Requires a chunk
    /// column; rows of one chunk must agree on their label when labels are
    /// present (the chunk's label is that shared value).
    pub fn into_chunks(&self) -> Result<Vec<LabeledChunk>> {
        let Some(chunk_ids) = &self.chunk_ids else {
            return Err(Error::InvalidConfig {
                detail: "dataset has no chunk column to group by".into(),
            });
        };
        let mut groups: std::collections::BTreeMap<&str, Vec<usize>> =
            std::collections::BTreeMap::new();
        for (row, id) in chunk_ids.iter().enumerate() {
            groups.entry(id).or_default().push(row);
        }
        let mut chunks = Vec::with_capacity(groups.len());
        for (id, rows) in groups {
            let label = match &self.labels {
                Some(labels) => {
                    let first = &labels[rows[0]];
                    if let Some(&odd) = rows.iter().find(|&&r| labels[r] != *first) {
                        return Err(Error::InvalidConfig {
                            detail: format!(
                                "chunk {id:?} mixes labels {first:?} and {:?}",
                                labels[odd]
                            ),
                        });
                    }
                    Some(first.clone())
                }
                None => None,
            };
            let data = self.data.select_rows(rows.iter());
            chunks.push(LabeledChunk::new(id.to_string(), label, data)?);
        }
        Ok(chunks)
    }
}

fn dataset_error(path: &Path, line: u64, message: String) -> Error {
    Error::Dataset {
        file: path.display().to_string(),
        line,
        message,
    }
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    }
}

/// Reads a delimited file into a [`Dataset`]. The first row is the header;
/// every non-role cell must parse as a finite real.
pub fn read_delimited(path: &Path, options: &ReadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(format!(
                "{}: {e}",
                path.display()
            ))),
            _ => dataset_error(path, 0, e.to_string()),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| dataset_error(path, 1, e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(dataset_error(
            path,
            0,
            "file is empty or missing a header row".into(),
        ));
    }

    let find_role = |name: &str| -> Result<Option<usize>> {
        let matches: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match matches.len() {
            0 => Ok(None),
            1 => Ok(Some(matches[0])),
            n => Err(dataset_error(
                path,
                1,
                format!("column {name:?} appears {n} times in the header"),
            )),
        }
    };
    let label_index = find_role(&options.label_column)?;
    let chunk_index = find_role(&options.chunk_column)?;
    let feature_indices: Vec<usize> = (0..headers.len())
        .filter(|i| Some(*i) != label_index && Some(*i) != chunk_index)
        .collect();
    if feature_indices.is_empty() {
        return Err(dataset_error(
            path,
            1,
            "no numeric feature columns remain after the label/chunk columns".into(),
        ));
    }
    let feature_names: Vec<String> = feature_indices
        .iter()
        .map(|&i| headers[i].to_string())
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut chunk_ids: Vec<String> = Vec::new();
    let mut n_rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            dataset_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        for &index in &feature_indices {
            let cell = &record[index];
            let value: f64 = cell.parse().map_err(|_| {
                dataset_error(
                    path,
                    line,
                    format!("column {:?}: cannot parse {cell:?} as a number", &headers[index]),
                )
            })?;
            if !value.is_finite() {
                return Err(dataset_error(
                    path,
                    line,
                    format!("column {:?}: value {cell:?} is not finite", &headers[index]),
                ));
            }
            values.push(value);
        }
        if let Some(index) = label_index {
            labels.push(record[index].to_string());
        }
        if let Some(index) = chunk_index {
            chunk_ids.push(record[index].to_string());
        }
        n_rows += 1;
    }

    Ok(Dataset {
        data: DMatrix::from_row_slice(n_rows, feature_indices.len(), &values),
        labels: label_index.map(|_| labels),
        chunk_ids: chunk_index.map(|_| chunk_ids),
        feature_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut file = std::fs::File::create(&path).unwrap();
        file.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn reads_plain_numeric_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "plain.csv", "x1,x2\n1.5,2.5\n-3.0,4.0\n");
        let ds = read_delimited(&path, &ReadOptions::default()).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.data()[(0, 0)], 1.5);
        assert_eq!(ds.data()[(1, 1)], 4.0);
        assert_eq!(ds.feature_names(), &["x1".to_string(), "x2".to_string()]);
        assert!(ds.labels().is_none());
        assert!(ds.chunk_ids().is_none());
    }

    #[test]
    fn label_column_is_split_out_of_the_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "labeled.csv", "x1,x2,label\n1,2,a\n3,4,b\n");
        let ds = read_delimited(&path, &ReadOptions::default()).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn role_columns_can_be_renamed() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "renamed.csv", "x,klass\n7,yes\n8,no\n");
        let options = ReadOptions {
            label_column: "klass".into(),
            ..ReadOptions::default()
        };
        let ds = read_delimited(&path, &options).unwrap();
        assert_eq!(ds.labels().unwrap(), &["yes".to_string(), "no".to_string()]);
        assert_eq!(ds.n_features(), 1);
    }

    #[test]
    fn tsv_extension_switches_to_tabs() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "tabs.tsv", "x1\tx2\n1.0\t2.0\n");
        let ds = read_delimited(&path, &ReadOptions::default()).unwrap();
        assert_eq!(ds.n_rows(), 1);
        assert_eq!(ds.data()[(0, 1)], 2.0);
    }

    #[test]
    fn parse_failures_carry_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "bad.csv", "x1,x2\n1,2\noops,4\n");
        let err = read_delimited(&path, &ReadOptions::default()).unwrap_err();
        match err {
            Error::Dataset { file, line, message } => {
                assert!(file.ends_with("bad.csv"));
                assert_eq!(line, 3);
                assert!(message.contains("oops"), "{message}");
                assert!(message.contains("x1"), "{message}");
            }
            other => panic!("expected Dataset error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_cells_are_rejected_with_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "inf.csv", "x1\n1\ninf\n");
        let err = read_delimited(&path, &ReadOptions::default()).unwrap_err();
        match err {
            Error::Dataset { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("not finite"), "{message}");
            }
            other => panic!("expected Dataset error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_rejected_with_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "ragged.csv", "x1,x2\n1,2\n3\n");
        let err = read_delimited(&path, &ReadOptions::default()).unwrap_err();
        match err {
            Error::Dataset { line, .. } => assert_eq!(line, 3),
            other => panic!("expected Dataset error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_named_in_the_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "empty.csv", "");
        let err = read_delimited(&path, &ReadOptions::default()).unwrap_err();
        match err {
            Error::Dataset { file, message, .. } => {
                assert!(file.ends_with("empty.csv"));
                assert!(message.contains("empty"), "{message}");
            }
            other => panic!("expected Dataset error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err =
            read_delimited(Path::new("/nonexistent/nope.csv"), &ReadOptions::default())
                .unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err:?}");
    }

    #[test]
    fn duplicate_role_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "dup.csv", "label,x,label\na,1,b\n");
        let err = read_delimited(&path, &ReadOptions::default()).unwrap_err();
        match err {
            Error::Dataset { message, .. } => {
                assert!(message.contains("label"), "{message}")
            }
            other => panic!("expected Dataset error, got {other:?}"),
        }
    }

    #[test]
    fn all_columns_consumed_by_roles_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "roles.csv", "label,chunk\na,c1\n");
        let err = read_delimited(&path, &ReadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Dataset { .. }), "{err:?}");
    }

    #[test]
    fn chunk_grouping_sorts_by_id_and_keeps_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "chunks.csv",
            "x1,chunk,label\n1,beta,b\n2,alpha,a\n3,beta,b\n4,alpha,a\n",
        );
        let ds = read_delimited(&path, &ReadOptions::default()).unwrap();
        let chunks = ds.into_chunks().unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].id(), "alpha");
        assert_eq!(chunks[0].label(), Some("a"));
        assert_eq!(chunks[0].data().nrows(), 2);
        assert_eq!(chunks[0].data()[(0, 0)], 2.0);
        assert_eq!(chunks[0].data()[(1, 0)], 4.0);
        assert_eq!(chunks[1].id(), "beta");
    }

    #[test]
    fn mixed_labels_within_a_chunk_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "mixed.csv",
            "x1,chunk,label\n1,c1,a\n2,c1,b\n",
        );
        let ds = read_delimited(&path, &ReadOptions::default()).unwrap();
        let err = ds.into_chunks().unwrap_err();
        match err {
            Error::InvalidConfig { detail } => {
                assert!(detail.contains("c1"), "{detail}");
            }
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }

    #[test]
    fn grouping_without_a_chunk_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "nochunk.csv", "x1\n1\n");
        let ds = read_delimited(&path, &ReadOptions::default()).unwrap();
        assert!(ds.into_chunks().is_err());
    }
}
