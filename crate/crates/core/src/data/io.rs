use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalysisDataset, SubjectRecord};
use crate::error::{Error, Result};

/// Maps dataset roles onto file columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub time: String,
    pub event: String,
    pub complete: String,
    pub cause: String,
    /// Stratum column; a single stratum is assumed when absent.
    pub stratum: Option<String>,
    pub covariates: Vec<String>,
    pub aux: Option<String>,
    /// Cell content that marks a missing cause or mark. Empty by default.
    pub missing: String,
    pub delimiter: char,
    /// Explicit cause order. Without it labels are sorted (numerically when
    /// every label parses as a number).
    pub cause_levels: Option<Vec<String>>,
    pub tau: Option<f64>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            time: "x".into(),
            event: "delta".into(),
            complete: "r".into(),
            cause: "v".into(),
            stratum: Some("stratum".into()),
            covariates: Vec::new(),
            aux: None,
            missing: String::new(),
            delimiter: ',',
            cause_levels: None,
            tau: None,
        }
    }
}

impl Schema {
    pub fn with_covariates<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariates = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_aux(mut self, name: impl Into<String>) -> Self {
        self.aux = Some(name.into());
        self
    }
}

struct RawRow {
    time: f64,
    event: bool,
    complete: bool,
    cause: Option<String>,
    covariates: Vec<f64>,
    aux: Option<f64>,
    stratum: String,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_f64(cell: &str, what: &str) -> std::result::Result<f64, String> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| format!("cannot parse {what} from `{cell}`"))
}

fn parse_flag(cell: &str, what: &str) -> std::result::Result<bool, String> {
    match cell.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        other => Err(format!("cannot parse {what} from `{other}`")),
    }
}

/// Orders labels numerically when all of them are numbers, otherwise
/// lexicographically.
fn ordered_labels(labels: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = labels.into_iter().collect();
    let numeric: Option<Vec<f64>> = v.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(v).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        v = pairs.into_iter().map(|(_, s)| s).collect();
    }
    v
}

/// Reads a delimited file with a header row into a validated dataset.
///
/// Cause and stratum labels are remapped onto `1..=J` and `1..=K`; the
/// original labels are kept on the dataset.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<AnalysisDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

pub(crate) fn read_dataset<R: std::io::Read>(reader: R, schema: &Schema) -> Result<AnalysisDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let time_col = column(&headers, &schema.time)?;
    let event_col = column(&headers, &schema.event)?;
    let complete_col = column(&headers, &schema.complete)?;
    let cause_col = column(&headers, &schema.cause)?;
    let stratum_col = schema
        .stratum
        .as_deref()
        .map(|s| column(&headers, s))
        .transpose()?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let aux_col = schema.aux.as_deref().map(|s| column(&headers, s)).transpose()?;

    let is_missing = |cell: &str| {
        let c = cell.trim();
        c.is_empty() || c == schema.missing
    };

    let mut raw = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // Data rows are numbered from 1; the header is row 0.
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Row {
            row: row_no,
            message: format!("malformed row: {e}"),
        })?;
        let parsed = (|| -> std::result::Result<RawRow, String> {
            let time = parse_f64(&row[time_col], "time")?;
            if time < 0.0 {
                return Err(format!("negative time {time}"));
            }
            let event = parse_flag(&row[event_col], "event indicator")?;
            let complete = parse_flag(&row[complete_col], "completeness indicator")?;
            let cause_cell = &row[cause_col];
            let cause = if is_missing(cause_cell) {
                None
            } else {
                Some(cause_cell.trim().to_string())
            };
            if !event && !complete {
                return Err("censored record marked incomplete".into());
            }
            if event && complete && cause.is_none() {
                return Err("complete failure without a cause".into());
            }
            if !complete && cause.is_some() {
                return Err("incomplete record carries a cause".into());
            }
            let covariates = cov_cols
                .iter()
                .zip(&schema.covariates)
                .map(|(&c, name)| parse_f64(&row[c], name))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let aux = match aux_col {
                Some(c) if !is_missing(&row[c]) => Some(parse_f64(&row[c], "auxiliary mark")?),
                _ => None,
            };
            let stratum = stratum_col
                .map(|c| row[c].trim().to_string())
                .unwrap_or_else(|| "1".to_string());
            Ok(RawRow {
                time,
                event,
                complete,
                // Censored records carry no cause even if a cell is filled.
                cause: if event { cause } else { None },
                covariates,
                aux,
                stratum,
            })
        })();
        raw.push(parsed.map_err(|message| Error::Row {
            row: row_no,
            message,
        })?);
    }
    if raw.is_empty() {
        return Err(Error::Invalid("file has no data rows".into()));
    }

    let cause_labels = match &schema.cause_levels {
        Some(levels) => {
            for (i, r) in raw.iter().enumerate() {
                if let Some(c) = &r.cause {
                    if !levels.contains(c) {
                        return Err(Error::Row {
                            row: i + 1,
                            message: format!("cause `{c}` not among declared levels"),
                        });
                    }
                }
            }
            levels.clone()
        }
        None => ordered_labels(raw.iter().filter_map(|r| r.cause.clone()).collect()),
    };
    if cause_labels.is_empty() {
        return Err(Error::Invalid("no observed causes".into()));
    }
    let stratum_labels = ordered_labels(raw.iter().map(|r| r.stratum.clone()).collect());

    let records = raw
        .into_iter()
        .map(|r| SubjectRecord {
            time: r.time,
            event: r.event,
            complete: r.complete,
            cause: r
                .cause
                .map(|c| cause_labels.iter().position(|l| *l == c).unwrap() + 1),
            covariates: r.covariates,
            aux: r.aux,
            stratum: stratum_labels.iter().position(|l| *l == r.stratum).unwrap() + 1,
        })
        .collect();
    AnalysisDataset::with_labels(
        records,
        schema.covariates.clone(),
        cause_labels,
        stratum_labels,
        schema.tau,
    )
}

/// Writes a dataset using the column names of `schema`. Floats are written
/// in shortest round-trip form so that reading the file back reproduces the
/// records exactly.
pub fn write_dataset(ds: &AnalysisDataset, path: impl AsRef<Path>, schema: &Schema) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(ds, file, schema)
}

pub(crate) fn write_to<W: std::io::Write>(ds: &AnalysisDataset, writer: W, schema: &Schema) -> Result<()> {
    if schema.covariates.len() != ds.p() {
        return Err(Error::Config(format!(
            "schema names {} covariates, dataset has {}",
            schema.covariates.len(),
            ds.p()
        )));
    }
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_writer(writer);
    let mut header = vec![
        schema.time.clone(),
        schema.event.clone(),
        schema.complete.clone(),
        schema.cause.clone(),
    ];
    header.extend(schema.covariates.iter().cloned());
    if let Some(a) = &schema.aux {
        header.push(a.clone());
    }
    if let Some(s) = &schema.stratum {
        header.push(s.clone());
    }
    wtr.write_record(&header)?;
    let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for r in ds.records() {
        let mut row = vec![
            r.time.to_string(),
            flag(r.event),
            flag(r.complete),
            r.cause
                .map(|c| ds.cause_labels()[c - 1].clone())
                .unwrap_or_else(|| schema.missing.clone()),
        ];
        row.extend(r.covariates.iter().map(|z| z.to_string()));
        if schema.aux.is_some() {
            row.push(
                r.aux
                    .map(|a| a.to_string())
                    .unwrap_or_else(|| schema.missing.clone()),
            );
        }
        if schema.stratum.is_some() {
            row.push(ds.stratum_labels()[r.stratum - 1].clone());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<dataset writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::default().with_covariates(["z1", "z2"])
    }

    #[test]
    fn parses_four_rows() {
        let text = "x,delta,r,v,z1,z2,stratum\n\
                    0.5,1,1,2,1,0.3,1\n\
                    0.7,0,1,,0,0.1,1\n\
                    0.9,1,0,,1,0.7,2\n\
                    1.2,1,1,1,0,0.2,2\n";
        let ds = read_dataset(text.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.n_causes(), 2);
        assert_eq!(ds.n_strata(), 2);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.records()[0].cause, Some(2));
        assert_eq!(ds.records()[2].cause, None);
        assert_eq!(ds.tau(), 1.2);
    }

    #[test]
    fn censored_incomplete_is_fatal() {
        let text = "x,delta,r,v,z1,z2,stratum\n0.5,1,1,1,1,0.3,1\n0.7,0,0,,0,0.1,1\n";
        let err = read_dataset(text.as_bytes(), &schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("censored record marked incomplete"), "{msg}");
    }

    #[test]
    fn complete_failure_needs_cause() {
        let text = "x,delta,r,v,z1,z2,stratum\n0.5,1,1,,1,0.3,1\n";
        let err = read_dataset(text.as_bytes(), &schema()).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn negative_time_and_garbage_are_fatal() {
        let text = "x,delta,r,v,z1,z2,stratum\n-0.5,1,1,1,1,0.3,1\n";
        assert!(read_dataset(text.as_bytes(), &schema())
            .unwrap_err()
            .to_string()
            .contains("negative time"));
        let text = "x,delta,r,v,z1,z2,stratum\n0.5,1,1,1,abc,0.3,1\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), &schema()),
            Err(Error::Row { row: 1, .. })
        ));
        let text = "x,delta,r,v,z1,z2,stratum\n0.5,1,1,1,1,0.3\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), &schema()),
            Err(Error::Row { row: 1, .. })
        ));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "x,delta,r,v,z1,stratum\n0.5,1,1,1,1,1\n";
        match read_dataset(text.as_bytes(), &schema()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "z2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn remaps_arbitrary_labels_and_sentinel() {
        let mut s = schema();
        s.missing = "NA".into();
        let text = "x,delta,r,v,z1,z2,stratum\n\
                    0.5,1,1,10,1,0.3,b\n\
                    0.7,0,1,NA,0,0.1,a\n\
                    0.9,1,1,3,1,0.7,b\n";
        let ds = read_dataset(text.as_bytes(), &s).unwrap();
        assert_eq!(ds.cause_labels(), &["3".to_string(), "10".to_string()]);
        assert_eq!(ds.stratum_labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.records()[0].cause, Some(2));
        assert_eq!(ds.records()[0].stratum, 2);
    }

    #[test]
    fn write_then_read_is_identity() {
        let text = "x,delta,r,v,z1,z2,a,stratum\n\
                    0.123456789012345,1,1,2,1,0.3,1.75,1\n\
                    0.7,0,1,,0,0.1,,1\n\
                    0.9,1,0,,1,0.7,0.2,2\n";
        let s = schema().with_aux("a");
        let ds = read_dataset(text.as_bytes(), &s).unwrap();
        let mut buf = Vec::new();
        write_to(&ds, &mut buf, &s).unwrap();
        let back = read_dataset(buf.as_slice(), &s).unwrap();
        assert_eq!(ds.records(), back.records());
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }
}
