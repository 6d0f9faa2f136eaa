//! Comma-delimited dataset files.
//!
//! ```text
//! # odmn-dataset format_version=1
//! channel,device,...,active_minutes,ltv30,ltv90
//! ads,ios,...,0;12.5;0;0;3;0;41.2,3,11
//! ```
//!
//! The optional first line is a `#` comment carrying the format version.
//! The header names every schema column (any order, extra columns are
//! ignored). Sequence cells hold exactly `length` values separated by `;`.
//! Label columns are named `ltv<N>` per horizon. Numbers are written in
//! Rust's shortest round-trip form, so write-then-read is lossless.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::schema::{Dataset, FeatureRow, FeatureSchema};
use crate::error::{Error, LineIssue, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const SEQUENCE_DELIMITER: char = ';';

/// Whether `ltv<N>` columns must be present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    Required,
    /// Label columns are read when present and left empty otherwise.
    Optional,
}

pub fn write_delimited(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# odmn-dataset format_version={DATASET_FORMAT_VERSION}"
    )?;
    let mut writer = csv::Writer::from_writer(out);
    let schema = &dataset.schema;
    let with_labels = dataset.has_labels() && !dataset.is_empty();
    let mut header: Vec<String> = schema.feature_names().map(str::to_string).collect();
    if with_labels {
        header.extend(schema.label_columns());
    }
    writer.write_record(&header)?;
    for row in &dataset.rows {
        let mut record: Vec<String> = row.categorical.clone();
        record.extend(row.numeric.iter().map(|v| v.to_string()));
        record.extend(row.sequences.iter().map(|s| {
            s.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(&SEQUENCE_DELIMITER.to_string())
        }));
        if with_labels {
            record.extend(row.labels.iter().map(|v| v.to_string()));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a dataset whose rows must carry every label.
pub fn load_delimited(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    load_delimited_with(path, schema, Labels::Required)
}

pub fn load_delimited_with(path: &Path, schema: &FeatureSchema, labels: Labels) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)?;
    let header_line = reader.position().line().max(1);
    let headers = reader.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let mut missing = Vec::new();
    let mut locate = |name: &str| -> usize {
        match index.get(name) {
            Some(&i) => i,
            None => {
                missing.push(name.to_string());
                usize::MAX
            }
        }
    };
    let cat_cols: Vec<usize> = schema.categorical.iter().map(|f| locate(&f.name)).collect();
    let num_cols: Vec<usize> = schema.numeric.iter().map(|f| locate(&f.name)).collect();
    let seq_cols: Vec<usize> = schema.sequence.iter().map(|f| locate(&f.name)).collect();
    let label_names = schema.label_columns();
    let present_labels = label_names
        .iter()
        .filter(|n| index.contains_key(n.as_str()))
        .count();
    let read_labels = match labels {
        Labels::Required => true,
        Labels::Optional => present_labels > 0,
    };
    let label_cols: Vec<usize> = if read_labels {
        label_names.iter().map(|n| locate(n)).collect()
    } else {
        Vec::new()
    };
    if !missing.is_empty() {
        return Err(Error::Ingestion(vec![LineIssue {
            line: header_line,
            message: format!("missing column(s): {}", missing.join(", ")),
        }]));
    }

    let mut rows = Vec::new();
    let mut issues = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                issues.push(LineIssue {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let mut problems = Vec::new();
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let categorical = cat_cols.iter().map(|&i| field(i).to_string()).collect();
        let mut numeric = Vec::with_capacity(num_cols.len());
        for (f, &i) in schema.numeric.iter().zip(&num_cols) {
            match parse_finite(field(i)) {
                Some(v) => numeric.push(v),
                None => problems.push(format!(
                    "`{}` is not a finite number: {:?}",
                    f.name,
                    field(i)
                )),
            }
        }
        let mut sequences = Vec::with_capacity(seq_cols.len());
        for (f, &i) in schema.sequence.iter().zip(&seq_cols) {
            let parsed: Option<Vec<f64>> = field(i)
                .split(SEQUENCE_DELIMITER)
                .map(|s| parse_finite(s.trim()))
                .collect();
            match parsed {
                Some(v) if v.len() == f.length => sequences.push(v),
                Some(v) => problems.push(format!(
                    "`{}` has {} elements, expected {}",
                    f.name,
                    v.len(),
                    f.length
                )),
                None => problems.push(format!("`{}` has a non-numeric element", f.name)),
            }
        }
        let mut row_labels = Vec::with_capacity(label_cols.len());
        for (name, &i) in label_names.iter().zip(&label_cols) {
            match parse_finite(field(i)) {
                Some(v) if v >= 0.0 => row_labels.push(v),
                Some(v) => problems.push(format!("`{name}` is negative: {v}")),
                None => problems.push(format!("`{name}` is not a finite number: {:?}", field(i))),
            }
        }
        if row_labels.len() == label_cols.len() {
            for (w, names) in row_labels.windows(2).zip(label_names.windows(2)) {
                if w[0] > w[1] {
                    problems.push(format!(
                        "labels not monotone across horizons: {}={} > {}={}",
                        names[0], w[0], names[1], w[1]
                    ));
                }
            }
        }

        if problems.is_empty() {
            rows.push(FeatureRow {
                categorical,
                numeric,
                sequences,
                labels: row_labels,
            });
        } else {
            issues.extend(
                problems
                    .into_iter()
                    .map(|message| LineIssue { line, message }),
            );
        }
    }
    if !issues.is_empty() {
        return Err(Error::Ingestion(issues));
    }
    Ok(Dataset {
        schema: schema.clone(),
        rows,
    })
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{CategoricalFeature, NumericFeature, SequenceFeature};
    use std::fs;

    fn schema() -> FeatureSchema {
        FeatureSchema {
            categorical: vec![CategoricalFeature {
                name: "channel".into(),
                vocabulary: vec!["ads".into(), "organic".into()],
            }],
            numeric: vec![NumericFeature {
                name: "freq".into(),
                bins: 4,
            }],
            sequence: vec![SequenceFeature {
                name: "mins".into(),
                length: 3,
                bins: 3,
            }],
            horizons: vec![30, 365],
        }
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn reads_well_formed_rows() {
        let f = write(
            "channel,freq,mins,ltv30,ltv365\n\
             ads,1,0;1;2,0,4\n\
             organic,2.5,1;1;1,3,3\n\
             other,0,0;0;0,0,0\n",
        );
        let d = load_delimited(f.path(), &schema()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.rows[0].sequences[0], vec![0.0, 1.0, 2.0]);
        assert_eq!(d.rows[1].labels, vec![3.0, 3.0]);
        assert_eq!(d.rows[2].categorical[0], "other");
    }

    #[test]
    fn negative_label_names_line() {
        let f = write("channel,freq,mins,ltv30,ltv365\nads,1,0;1;2,-1,4\n");
        match load_delimited(f.path(), &schema()).unwrap_err() {
            Error::Ingestion(issues) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].line, 2);
                assert!(issues[0].message.contains("negative"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_monotone_labels_rejected() {
        let f = write("channel,freq,mins,ltv30,ltv365\nads,1,0;1;2,1,1\nads,1,0;1;2,5,4\n");
        let err = load_delimited(f.path(), &schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("monotone"), "{msg}");
    }

    #[test]
    fn missing_column_and_bad_numbers() {
        let f = write("channel,freq,ltv30,ltv365\nads,1,0,1\n");
        let msg = load_delimited(f.path(), &schema()).unwrap_err().to_string();
        assert!(msg.contains("mins"), "{msg}");

        let f = write("channel,freq,mins,ltv30,ltv365\nads,x,0;1,zz,1\n");
        match load_delimited(f.path(), &schema()).unwrap_err() {
            Error::Ingestion(issues) => {
                assert_eq!(issues.len(), 3);
                assert!(issues.iter().all(|i| i.line == 2));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn optional_labels_and_version_comment() {
        let f = write("# odmn-dataset format_version=1\nchannel,freq,mins\nads,1,0;1;2\n");
        let d = load_delimited_with(f.path(), &schema(), Labels::Optional).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.rows[0].labels.is_empty());
        assert!(load_delimited(f.path(), &schema()).is_err());
    }

    #[test]
    fn comment_line_counts_toward_line_numbers() {
        let f = write(
            "# odmn-dataset format_version=1\nchannel,freq,mins,ltv30,ltv365\nads,1,0;1;2,-1,4\n",
        );
        match load_delimited(f.path(), &schema()).unwrap_err() {
            Error::Ingestion(issues) => assert_eq!(issues[0].line, 3),
            e => panic!("unexpected {e}"),
        }
    }
}
