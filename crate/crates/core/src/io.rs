//! CSV file formats used by the command-line tool.
//!
//! Every file has a header row. Parse errors carry the 1-based line number.
//!
//! | file          | columns                                                        |
//! |---------------|----------------------------------------------------------------|
//! | trigger log   | `member_id,program_id,day`                                     |
//! | selections    | `member_id,program_id,day,weight,seed`                         |
//! | ledger        | `member_id,program_id,day`                                     |
//! | sends         | `day,member_id,program_id,channel,weight`                      |
//! | survey log    | `day,member_id,program_id,channel,score,weight`                |
//! | ring states   | `day,channel,tick,bucket`                                      |
//! | responses     | `member_id,country,score,weight,<covariate>...`                |
//! | strata        | `country,stratum_key,count` with keys like `a=1;b=0`           |
//!
//! A response covariate header `name:continuous` marks a continuous variable;
//! plain names are categorical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    Population, PopulationCell, Response, ResponseSet, Schema, Variable, VariableKind,
};
use crate::hash_alloc::MemberId;
use crate::mot::{Selection, TriggerEvent, TriggerLog};
use crate::ring::{Day, LedgerEntry, ProgramId, SendRecord};
use crate::sim::{Channel, ResponseEntry, RingState, SendEntry, SurveyLog};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Format {
        file: String,
        line: u64,
        message: String,
    },
}

impl IoError {
    /// Line number for format errors.
    pub fn line(&self) -> Option<u64> {
        match self {
            IoError::Format { line, .. } => Some(*line),
            IoError::Io { .. } => None,
        }
    }

    fn format(file: &str, line: u64, message: impl ToString) -> Self {
        IoError::Format {
            file: file.to_string(),
            line,
            message: message.to_string(),
        }
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Io {
        file: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::Io {
        file: path.display().to_string(),
        source,
    })
}

fn csv_error(file: &str, e: csv::Error) -> IoError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::Io {
            file: file.to_string(),
            source,
        },
        csv::ErrorKind::Deserialize { err, .. } => IoError::format(file, line, err),
        other => IoError::format(file, line, format!("{other:?}")),
    }
}

/// Deserializes every row of `reader` into `T`, tagging each with its line.
fn read_rows<T: DeserializeOwned, R: Read>(
    reader: R,
    file: &str,
) -> Result<Vec<(u64, T)>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(file, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .deserialize(Some(&headers))
            .map_err(|e| csv_error(file, e))?;
        out.push((line, row));
    }
    Ok(out)
}

fn write_rows<T: Serialize, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = T>,
    file: &str,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(file, e))?;
    }
    w.flush().map_err(|source| IoError::Io {
        file: file.to_string(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TriggerRow {
    member_id: u64,
    program_id: u32,
    day: u32,
}

pub fn read_trigger_log<R: Read>(
    reader: R,
    file: &str,
    month_start: Day,
) -> Result<TriggerLog, IoError> {
    let mut log = TriggerLog::new(month_start);
    for (line, row) in read_rows::<TriggerRow, _>(reader, file)? {
        log.push(TriggerEvent {
            member: MemberId(row.member_id),
            program: ProgramId(row.program_id),
            day: row.day,
        })
        .map_err(|e| IoError::format(file, line, e))?;
    }
    log.normalize();
    Ok(log)
}

pub fn write_trigger_log<W: Write>(out: W, log: &TriggerLog) -> Result<(), IoError> {
    let rows = log.events().map(|e| TriggerRow {
        member_id: e.member.0,
        program_id: e.program.0,
        day: e.day,
    });
    write_rows(out, rows, "trigger log")
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionRow {
    member_id: u64,
    program_id: u32,
    day: u32,
    weight: f64,
    seed: u64,
}

pub fn write_selections<W: Write>(out: W, selections: &[Selection]) -> Result<(), IoError> {
    let rows = selections.iter().map(|s| SelectionRow {
        member_id: s.member.0,
        program_id: s.program.0,
        day: s.day,
        weight: s.weight,
        seed: s.seed,
    });
    write_rows(out, rows, "selections")
}

pub fn read_ledger<R: Read>(reader: R, file: &str) -> Result<Vec<LedgerEntry>, IoError> {
    Ok(read_rows::<TriggerRow, _>(reader, file)?
        .into_iter()
        .map(|(_, r)| LedgerEntry {
            member: MemberId(r.member_id),
            program: ProgramId(r.program_id),
            day: r.day,
        })
        .collect())
}

pub fn write_ledger<W: Write>(out: W, entries: &[LedgerEntry]) -> Result<(), IoError> {
    let rows = entries.iter().map(|e| TriggerRow {
        member_id: e.member.0,
        program_id: e.program.0,
        day: e.day,
    });
    write_rows(out, rows, "ledger")
}

#[derive(Debug, Serialize, Deserialize)]
struct SendRow {
    day: u32,
    member_id: u64,
    program_id: u32,
    #[serde(default)]
    channel: Option<String>,
    #[serde(default)]
    weight: Option<f64>,
}

/// Reads sends from a sends file or a ledger file. Rows without a channel
/// column are filed under `email`.
pub fn read_sends<R: Read>(
    reader: R,
    file: &str,
) -> Result<BTreeMap<Channel, Vec<SendRecord>>, IoError> {
    let mut out: BTreeMap<Channel, Vec<SendRecord>> = BTreeMap::new();
    for (line, row) in read_rows::<SendRow, _>(reader, file)? {
        let channel = match row.channel.as_deref() {
            None | Some("") => Channel::Email,
            Some(c) => c
                .parse()
                .map_err(|e: String| IoError::format(file, line, e))?,
        };
        out.entry(channel).or_default().push(SendRecord {
            member: MemberId(row.member_id),
            program: ProgramId(row.program_id),
            day: row.day,
        });
    }
    Ok(out)
}

pub fn write_sends<W: Write>(out: W, sends: &[SendEntry]) -> Result<(), IoError> {
    let rows = sends.iter().map(|s| SendRow {
        day: s.day,
        member_id: s.member.0,
        program_id: s.program.0,
        channel: Some(s.channel.as_str().to_string()),
        weight: Some(s.weight),
    });
    write_rows(out, rows, "sends")
}

#[derive(Debug, Serialize, Deserialize)]
struct LogResponseRow {
    day: u32,
    member_id: u64,
    program_id: u32,
    channel: String,
    score: u8,
    weight: f64,
}

pub fn write_log_responses<W: Write>(out: W, responses: &[ResponseEntry]) -> Result<(), IoError> {
    let rows = responses.iter().map(|r| LogResponseRow {
        day: r.day,
        member_id: r.member.0,
        program_id: r.program.0,
        channel: r.channel.as_str().to_string(),
        score: r.score,
        weight: r.weight,
    });
    write_rows(out, rows, "survey log responses")
}

#[derive(Debug, Serialize, Deserialize)]
struct RingStateRow {
    day: u32,
    channel: String,
    tick: u64,
    bucket: u32,
}

pub fn write_ring_states<W: Write>(out: W, states: &[RingState]) -> Result<(), IoError> {
    let rows = states.iter().map(|s| RingStateRow {
        day: s.day,
        channel: s.channel.as_str().to_string(),
        tick: s.tick,
        bucket: s.bucket.get(),
    });
    write_rows(out, rows, "ring states")
}

/// Writes `sends.csv`, `survey_responses.csv` and `ring_states.csv` into `dir`.
pub fn write_survey_log(dir: &Path, log: &SurveyLog) -> Result<(), IoError> {
    write_sends(create(&dir.join("sends.csv"))?, &log.sends)?;
    write_log_responses(create(&dir.join("survey_responses.csv"))?, &log.responses)?;
    write_ring_states(create(&dir.join("ring_states.csv"))?, &log.ring_states)
}

const FIXED_RESPONSE_COLUMNS: [&str; 4] = ["member_id", "country", "score", "weight"];

fn parse_field<T: std::str::FromStr>(
    file: &str,
    line: u64,
    column: &str,
    value: &str,
) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| IoError::format(file, line, format!("column {column}: {value:?}: {e}")))
}

pub fn read_responses<R: Read>(reader: R, file: &str) -> Result<ResponseSet, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < FIXED_RESPONSE_COLUMNS.len() || names[..4] != FIXED_RESPONSE_COLUMNS {
        return Err(IoError::format(
            file,
            1,
            format!(
                "header must start with {}",
                FIXED_RESPONSE_COLUMNS.join(",")
            ),
        ));
    }
    let variables = names[4..]
        .iter()
        .map(|h| match h.split_once(':') {
            Some((name, "continuous")) => Ok(Variable {
                name: name.to_string(),
                kind: VariableKind::Continuous,
            }),
            Some((name, "categorical")) | Some((name, "")) => Ok(Variable {
                name: name.to_string(),
                kind: VariableKind::Categorical,
            }),
            Some((_, kind)) => Err(IoError::format(
                file,
                1,
                format!("unknown variable kind {kind:?}"),
            )),
            None => Ok(Variable {
                name: h.to_string(),
                kind: VariableKind::Categorical,
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let schema = Schema::new(variables);
    let mut responses = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(file, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let member: u64 = parse_field(file, line, "member_id", &record[0])?;
        let score: u8 = parse_field(file, line, "score", &record[2])?;
        let weight: f64 = parse_field(file, line, "weight", &record[3])?;
        let covariates = (4..record.len())
            .map(|i| parse_field::<f64>(file, line, &headers[i], &record[i]))
            .collect::<Result<Vec<_>, _>>()?;
        let r = Response::new(MemberId(member), score, &record[1], covariates)
            .map_err(|e| IoError::format(file, line, e))?
            .with_weight(weight);
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(IoError::format(
                file,
                line,
                format!("weight {weight} must be positive"),
            ));
        }
        responses.push(r);
    }
    ResponseSet::new(schema, responses).map_err(|e| IoError::format(file, 0, e))
}

pub fn write_responses<W: Write>(out: W, set: &ResponseSet) -> Result<(), IoError> {
    let file = "responses";
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_RESPONSE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .collect();
    for v in &set.schema.variables {
        header.push(match v.kind {
            VariableKind::Categorical => v.name.clone(),
            VariableKind::Continuous => format!("{}:continuous", v.name),
        });
    }
    w.write_record(&header).map_err(|e| csv_error(file, e))?;
    for r in &set.responses {
        let mut row = vec![
            r.member.0.to_string(),
            r.country.clone(),
            r.score.to_string(),
            r.weight.to_string(),
        ];
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(file, e))?;
    }
    w.flush().map_err(|source| IoError::Io {
        file: file.into(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct StratumRow {
    country: String,
    stratum_key: String,
    count: f64,
}

/// Reads population cells; every key must name each schema variable exactly once.
pub fn read_population<R: Read>(
    reader: R,
    file: &str,
    schema: &Schema,
) -> Result<Population, IoError> {
    let mut cells = Vec::new();
    for (line, row) in read_rows::<StratumRow, _>(reader, file)? {
        let mut values: Vec<Option<f64>> = vec![None; schema.len()];
        for part in row.stratum_key.split(';').filter(|p| !p.is_empty()) {
            let (name, value) = part.split_once('=').ok_or_else(|| {
                IoError::format(
                    file,
                    line,
                    format!("stratum key part {part:?} is not name=value"),
                )
            })?;
            let idx = schema
                .index_of(name)
                .map_err(|e| IoError::format(file, line, e))?;
            if values[idx].is_some() {
                return Err(IoError::format(
                    file,
                    line,
                    format!("variable {name} appears twice"),
                ));
            }
            values[idx] = Some(parse_field(file, line, name, value)?);
        }
        let covariates = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    IoError::format(
                        file,
                        line,
                        format!("stratum key lacks {}", schema.variables[i].name),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !(row.count >= 0.0 && row.count.is_finite()) {
            return Err(IoError::format(
                file,
                line,
                format!("count {} must be non-negative", row.count),
            ));
        }
        cells.push(PopulationCell {
            country: row.country,
            covariates,
            count: row.count,
        });
    }
    Population::new(schema.clone(), cells).map_err(|e| IoError::format(file, 0, e))
}

pub fn stratum_key(schema: &Schema, covariates: &[f64]) -> String {
    schema
        .variables
        .iter()
        .zip(covariates)
        .map(|(v, x)| format!("{}={}", v.name, x))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_population<W: Write>(out: W, population: &Population) -> Result<(), IoError> {
    let rows = population.cells.iter().map(|c| StratumRow {
        country: c.country.clone(),
        stratum_key: stratum_key(&population.schema, &c.covariates),
        count: c.count,
    });
    write_rows(out, rows, "strata")
}

/// Opens `path` for reading, for use with the `read_*` functions.
pub fn reader(path: &Path) -> Result<File, IoError> {
    open(path)
}

/// Creates `path` for writing, for use with the `write_*` functions.
pub fn writer(path: &Path) -> Result<File, IoError> {
    create(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigger_log_errors_name_the_line() {
        let data = "member_id,program_id,day\n1,1,3\n2,1,40\n";
        let err = read_trigger_log(data.as_bytes(), "t.csv", 0).unwrap_err();
        assert_eq!(err.line(), Some(3));
        let data = "member_id,program_id,day\n1,1,3\nx,1,4\n";
        let err = read_trigger_log(data.as_bytes(), "t.csv", 0).unwrap_err();
        assert_eq!(err.line(), Some(3));
    }

    #[test]
    fn responses_round_trip() {
        let data =
            "member_id,country,score,weight,js,tenure:continuous\n1,US,9,1,1,3.5\n2,US,0,2,0,1\n";
        let set = read_responses(data.as_bytes(), "r.csv").unwrap();
        assert_eq!(set.schema.variables[1].kind, VariableKind::Continuous);
        let mut buf = Vec::new();
        write_responses(&mut buf, &set).unwrap();
        assert_eq!(read_responses(buf.as_slice(), "r.csv").unwrap(), set);
    }

    #[test]
    fn bad_score_reports_line() {
        let data = "member_id,country,score,weight,js\n1,US,9,1,1\n2,US,11,1,0\n";
        let err = read_responses(data.as_bytes(), "r.csv").unwrap_err();
        assert_eq!(err.line(), Some(3));
    }

    #[test]
    fn population_round_trip_and_missing_variable() {
        let schema = Schema::categorical(&["a", "b"]);
        let data = "country,stratum_key,count\nUS,a=1;b=0,10\nUS,b=1;a=0,5\n";
        let pop = read_population(data.as_bytes(), "s.csv", &schema).unwrap();
        assert_eq!(pop.cells[1].covariates, vec![0.0, 1.0]);
        let mut buf = Vec::new();
        write_population(&mut buf, &pop).unwrap();
        assert_eq!(
            read_population(buf.as_slice(), "s.csv", &schema).unwrap(),
            pop
        );
        let bad = "country,stratum_key,count\nUS,a=1;b=0,10\nUS,a=1,5\n";
        assert_eq!(
            read_population(bad.as_bytes(), "s.csv", &schema)
                .unwrap_err()
                .line(),
            Some(3)
        );
    }

    #[test]
    fn sends_default_to_email() {
        let data = "member_id,program_id,day\n1,0,5\n";
        let sends = read_sends(data.as_bytes(), "l.csv").unwrap();
        assert_eq!(sends[&Channel::Email].len(), 1);
    }
}
