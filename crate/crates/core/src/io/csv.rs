//! CSV interop for embeddings: one row per embedding, with an optional leading
//! label column.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::container::RawEmbeddings;

pub fn parse(text: &str) -> Result<RawEmbeddings> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut dim: Option<usize> = None;
    let mut has_labels: Option<bool> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::UnsupportedFormat(format!("csv row {row}: {e}")))?;
        let mut fields = record.iter();
        let first = fields
            .next()
            .ok_or_else(|| Error::UnsupportedFormat(format!("csv row {row} is empty")))?;
        let labelled = first.parse::<f32>().is_err();
        match has_labels {
            None => has_labels = Some(labelled),
            Some(expected) if expected != labelled => {
                return Err(Error::UnsupportedFormat(format!(
                    "csv row {row}: label column present in some rows only"
                )))
            }
            _ => {}
        }
        let values: Vec<&str> = if labelled {
            labels.push(first.to_owned());
            fields.collect()
        } else {
            record.iter().collect()
        };
        let width = values.len();
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: width,
                })
            }
            _ => {}
        }
        for v in values {
            let x = v.parse::<f32>().map_err(|_| {
                Error::UnsupportedFormat(format!("csv row {row}: {v:?} is not a number"))
            })?;
            data.push(x);
        }
    }
    let dim = dim.unwrap_or(0);
    if dim == 0 && !data.is_empty() {
        return Err(Error::UnsupportedFormat("csv rows have no values".into()));
    }
    let labels = has_labels.unwrap_or(false).then_some(labels);
    RawEmbeddings::new(dim, data, labels)
}

pub fn read(path: impl AsRef<Path>) -> Result<RawEmbeddings> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}
