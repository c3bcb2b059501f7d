use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        return Error::Io(e.to_string());
    }
    let offset = e.position().map_or(0, |p| p.byte());
    Error::Format {
        offset,
        msg: e.to_string(),
    }
}

/// Reads a CSV with header `label,f0,f1,...`. The class count is one more
/// than the largest label.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(Error::Format {
            offset: 0,
            msg: "header must be `label,f0,f1,...`".into(),
        });
    }
    let dims = header.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let offset = record.position().map_or(0, |p| p.byte());
        let bad = |what: &str| Error::Format {
            offset,
            msg: format!("unparsable {what}"),
        };
        labels.push(record[0].trim().parse::<usize>().map_err(|_| bad("label"))?);
        for field in record.iter().skip(1) {
            features.push(field.trim().parse::<f32>().map_err(|_| bad("feature"))?);
        }
    }
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(features, dims, labels, num_classes)
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dims()).map(|j| format!("f{j}")));
    writer.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.len() {
        let mut row = vec![ds.label(i).to_string()];
        row.extend(ds.features(i).iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
