use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RawDataset, Severity};
use crate::error::{Error, Result};

/// Column mapping for [`load_csv`].
///
/// With `feature_columns = None` every column other than the three label
/// columns is a feature, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub feature_columns: Option<Vec<String>>,
    pub fms_column: String,
    pub severity_column: String,
    pub session_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            feature_columns: None,
            fms_column: "FMS".into(),
            severity_column: "Severity".into(),
            session_column: "SessionID".into(),
        }
    }
}

/// Read a sensor table. Lines starting with `#` are comments.
///
/// Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<RawDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub(crate) fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let fms_col = find(&schema.fms_column)?;
    let sev_col = find(&schema.severity_column)?;
    let ses_col = find(&schema.session_column)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|c| ![fms_col, sev_col, ses_col].contains(c))
            .collect(),
    };

    let mut raw = RawDataset {
        feature_names: feature_cols.iter().map(|&c| header[c].clone()).collect(),
        rows: Vec::new(),
        fms: Vec::new(),
        severity: Vec::new(),
        session_ids: Vec::new(),
    };
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            let s = cell(c);
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: header[c].clone(),
                    value: s.to_string(),
                }),
            }
        };
        let values = feature_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        let fms = number(fms_col)?;
        if !(0.0..=10.0).contains(&fms) {
            return Err(Error::Range {
                row,
                column: header[fms_col].clone(),
                value: fms,
                reason: "FMS must lie in [0, 10]".into(),
            });
        }
        let severity = Severity::parse(cell(sev_col)).ok_or_else(|| Error::Parse {
            row,
            column: header[sev_col].clone(),
            value: cell(sev_col).to_string(),
        })?;
        raw.rows.push(values);
        raw.fms.push(fms);
        raw.severity.push(severity);
        raw.session_ids.push(cell(ses_col).to_string());
    }
    Ok(raw)
}

/// Write `raw` with the default column names. Each entry of `comments`
/// becomes a leading `# ` line. Floats use the shortest round-trip form.
pub fn write_csv<W: Write>(raw: &RawDataset, mut out: W, comments: &[String]) -> Result<()> {
    raw.validate()?;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let schema = CsvSchema::default();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = raw.feature_names.iter().map(String::as_str).collect();
    header.extend([
        schema.fms_column.as_str(),
        schema.severity_column.as_str(),
        schema.session_column.as_str(),
    ]);
    w.write_record(&header)?;
    for i in 0..raw.len() {
        let mut rec: Vec<String> = raw.rows[i].iter().map(|v| v.to_string()).collect();
        rec.push(raw.fms[i].to_string());
        rec.push(raw.severity[i].name().to_string());
        rec.push(raw.session_ids[i].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
