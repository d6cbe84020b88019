use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::RawSeries;
use crate::error::{Error, Result};
use crate::variable::{VariableId, VARIABLE_COUNT};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn load_raw_csv(path: impl AsRef<Path>) -> Result<Vec<RawSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_csv(file)
}

/// Reads `participant,timestamp,G,B_I,I_B,F_ch,HR,C,S` rows (any column
/// order, extra columns ignored, `#` lines skipped). Empty cells are
/// missing samples. Participants keep their order of first appearance.
pub fn read_raw_csv<R: Read>(reader: R) -> Result<Vec<RawSeries>> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name}")))
    };
    let participant_col = find("participant")?;
    let time_col = find("timestamp")?;
    let mut value_cols = [0usize; VARIABLE_COUNT];
    for v in VariableId::ALL {
        value_cols[v.index()] = find(v.symbol())?;
    }

    let mut series: Vec<RawSeries> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize| record.get(col).unwrap_or("");
        let pid = field(participant_col);
        if pid.is_empty() {
            return Err(Error::DataAt {
                line,
                message: "empty participant".into(),
            });
        }
        let t = parse_timestamp(field(time_col)).ok_or_else(|| Error::DataAt {
            line,
            message: format!("bad timestamp `{}`", field(time_col)),
        })?;
        let mut row = [f64::NAN; VARIABLE_COUNT];
        for v in VariableId::ALL {
            let text = field(value_cols[v.index()]);
            if text.is_empty() {
                continue;
            }
            row[v.index()] = text
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::DataAt {
                    line,
                    message: format!("bad {} value `{text}`", v.symbol()),
                })?;
        }
        let slot = *index.entry(pid.to_string()).or_insert_with(|| {
            series.push(RawSeries::new(pid));
            series.len() - 1
        });
        let s = &mut series[slot];
        if let Some(&last) = s.timestamps.last() {
            if t <= last {
                return Err(Error::DataAt {
                    line,
                    message: format!(
                        "timestamp {} for participant {pid} does not follow {}",
                        t.format(TIMESTAMP_FORMAT),
                        last.format(TIMESTAMP_FORMAT)
                    ),
                });
            }
        }
        s.push(t, row);
    }
    Ok(series)
}

fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(text).ok().map(|d| d.naive_utc()))
}

/// Writes series in the format `read_raw_csv` accepts. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_raw_csv<W: Write>(writer: W, series: &[RawSeries]) -> Result<()> {
    let mut wtr = ::csv::Writer::from_writer(writer);
    let mut header = vec!["participant", "timestamp"];
    header.extend(VariableId::ALL.iter().map(|v| v.symbol()));
    wtr.write_record(&header)?;
    for s in series {
        for i in 0..s.len() {
            let mut record = vec![
                s.participant_id.clone(),
                s.timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
            ];
            record.extend(s.channels.iter().map(|c| {
                let x = c[i];
                if x.is_nan() {
                    String::new()
                } else {
                    format!("{x}")
                }
            }));
            wtr.write_record(&record)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
