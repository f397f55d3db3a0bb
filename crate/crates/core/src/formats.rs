//! Text formats: count, joint and record CSVs and `key = value` files.
//!
//! CSV errors report the 1-based line and the 1-based field index as the
//! column. Header names must be identifiers; covariate columns sit between
//! the fixed leading and trailing columns.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::exact::{format, parse_nonneg};
use crate::logistic::{Record, RecordSet};
use crate::model::{is_identifier, PopulationId, StratifiedCounts, Stratum};
use crate::simgen::{JointCounterfactualCell, PotentialOutcomeTable};

/// Rows longer than this are refused before any parsing.
const MAX_FIELDS: usize = 64;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.position() {
            Some(pos) => Error::parse(pos.line() as usize, 1, e.to_string()),
            None => Error::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

struct Layout {
    covariates: Vec<String>,
    // index of the first trailing column
    tail: usize,
}

fn header_layout(
    header: &csv::StringRecord,
    leading: &[&str],
    trailing: &[&str],
    optional_last: Option<&str>,
) -> Result<(Layout, bool)> {
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() > MAX_FIELDS {
        return Err(Error::parse(1, MAX_FIELDS + 1, "too many columns"));
    }
    let has_optional = optional_last.is_some_and(|o| fields.last() == Some(&o));
    let body = if has_optional {
        &fields[..fields.len() - 1]
    } else {
        &fields[..]
    };
    let expected = leading.len() + trailing.len();
    if body.len() < expected {
        return Err(Error::parse(
            1,
            body.len() + 1,
            format!(
                "header must be {}",
                describe(leading, trailing, optional_last)
            ),
        ));
    }
    for (i, name) in leading.iter().enumerate() {
        if body[i] != *name {
            return Err(Error::parse(
                1,
                i + 1,
                format!("expected column {name:?}, found {:?}", body[i]),
            ));
        }
    }
    let tail = body.len() - trailing.len();
    for (j, name) in trailing.iter().enumerate() {
        if body[tail + j] != *name {
            return Err(Error::parse(
                1,
                tail + j + 1,
                format!("expected column {name:?}, found {:?}", body[tail + j]),
            ));
        }
    }
    let reserved: BTreeSet<&str> = leading
        .iter()
        .chain(trailing)
        .copied()
        .chain(optional_last)
        .collect();
    let mut covariates = Vec::new();
    for (i, name) in body.iter().enumerate().take(tail).skip(leading.len()) {
        if !is_identifier(name) || reserved.contains(name) {
            return Err(Error::parse(
                1,
                i + 1,
                format!("invalid covariate column {name:?}"),
            ));
        }
        if covariates.iter().any(|c| c == name) {
            return Err(Error::parse(
                1,
                i + 1,
                format!("duplicate covariate column {name:?}"),
            ));
        }
        covariates.push(name.to_string());
    }
    Ok((Layout { covariates, tail }, has_optional))
}

fn describe(leading: &[&str], trailing: &[&str], optional: Option<&str>) -> String {
    let mut parts: Vec<String> = leading.iter().map(|s| s.to_string()).collect();
    parts.push("<covariates...>".into());
    parts.extend(trailing.iter().map(|s| s.to_string()));
    if let Some(o) = optional {
        parts.push(format!("[{o}]"));
    }
    parts.join(",")
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Iterates data rows after the header, checking the field count.
fn rows<R: Read>(
    rdr: &mut csv::Reader<R>,
    width: usize,
    mut each: impl FnMut(usize, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(Error::parse(
                line,
                record.len().min(width) + 1,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        each(line, &record)?;
    }
    Ok(())
}

fn header<R: Read>(rdr: &mut csv::Reader<R>) -> Result<csv::StringRecord> {
    let mut record = csv::StringRecord::new();
    if !rdr.read_record(&mut record)? {
        return Err(Error::parse(1, 1, "missing header"));
    }
    Ok(record)
}

fn binary(line: usize, column: usize, s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::parse(
            line,
            column,
            format!("expected 0 or 1, found {s:?}"),
        )),
    }
}

fn stratum_at(
    line: usize,
    first: usize,
    names: &[String],
    rec: &csv::StringRecord,
) -> Result<Stratum> {
    let levels: Vec<&str> = (0..names.len()).map(|i| &rec[first + i]).collect();
    Stratum::new(
        names
            .iter()
            .cloned()
            .zip(levels.iter().map(|s| s.to_string())),
    )
    .map_err(|_| {
        let bad = levels
            .iter()
            .position(|l| Stratum::new([("x", *l)]).is_err())
            .unwrap_or(0);
        Error::parse(
            line,
            first + bad + 1,
            format!("invalid level {:?}", levels[bad]),
        )
    })
}

fn population_at(line: usize, column: usize, s: &str) -> Result<PopulationId> {
    PopulationId::new(s)
        .map_err(|_| Error::parse(line, column, format!("invalid population label {s:?}")))
}

/// Reads `population,<covariates...>,a,y,count`; duplicate keys are summed.
pub fn read_counts_csv<R: Read>(input: R) -> Result<StratifiedCounts> {
    let mut rdr = reader(input);
    let (layout, _) = header_layout(
        &header(&mut rdr)?,
        &["population"],
        &["a", "y", "count"],
        None,
    )?;
    let mut counts = StratifiedCounts::new(layout.covariates.clone())?;
    let tail = layout.tail;
    rows(&mut rdr, tail + 3, |line, rec| {
        let p = population_at(line, 1, &rec[0])?;
        let v = stratum_at(line, 1, &layout.covariates, rec)?;
        let a = binary(line, tail + 1, &rec[tail])?;
        let y = binary(line, tail + 2, &rec[tail + 1])?;
        let n: u64 = rec[tail + 2].parse().map_err(|_| {
            Error::parse(
                line,
                tail + 3,
                format!("invalid count {:?}", &rec[tail + 2]),
            )
        })?;
        counts
            .add(p, v, a, y, n)
            .map_err(|e| Error::parse(line, tail + 3, e.to_string()))
    })?;
    Ok(counts)
}

fn level_fields(v: &Stratum) -> impl Iterator<Item = &str> {
    v.assignments().iter().map(|(_, l)| l.as_str())
}

pub fn write_counts_csv<W: Write>(counts: &StratifiedCounts, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["population"];
    head.extend(counts.covariates().iter().map(String::as_str));
    head.extend(["a", "y", "count"]);
    w.write_record(&head)?;
    for (p, v, c) in counts.iter() {
        for a in [false, true] {
            for y in [false, true] {
                let n = c.get(a, y).to_string();
                let mut row = vec![p.as_str()];
                row.extend(level_fields(v));
                row.extend([
                    if a { "1" } else { "0" },
                    if y { "1" } else { "0" },
                    n.as_str(),
                ]);
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `population,<covariates...>,y0,y1,mass`. Masses are non-negative
/// integers, decimals or fractions; each population is normalized.
pub fn read_joint_csv<R: Read>(input: R) -> Result<PotentialOutcomeTable> {
    let mut rdr = reader(input);
    let (layout, _) = header_layout(
        &header(&mut rdr)?,
        &["population"],
        &["y0", "y1", "mass"],
        None,
    )?;
    let tail = layout.tail;
    let mut cells = Vec::new();
    rows(&mut rdr, tail + 3, |line, rec| {
        cells.push(JointCounterfactualCell {
            population: population_at(line, 1, &rec[0])?,
            stratum: stratum_at(line, 1, &layout.covariates, rec)?,
            y0: binary(line, tail + 1, &rec[tail])?,
            y1: binary(line, tail + 2, &rec[tail + 1])?,
            mass: parse_nonneg(&rec[tail + 2]).ok_or_else(|| {
                Error::parse(line, tail + 3, format!("invalid mass {:?}", &rec[tail + 2]))
            })?,
        });
        Ok(())
    })?;
    if cells.is_empty() {
        return Err(Error::parse(1, 1, "no data rows"));
    }
    PotentialOutcomeTable::from_cells(layout.covariates, cells)
}

/// Writes exact masses as integers or `p/q` fractions.
pub fn write_joint_csv<W: Write>(table: &PotentialOutcomeTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["population"];
    head.extend(table.covariates().iter().map(String::as_str));
    head.extend(["y0", "y1", "mass"]);
    w.write_record(&head)?;
    for c in table.cells() {
        let mass = format(&c.mass);
        let mut row = vec![c.population.as_str()];
        row.extend(level_fields(&c.stratum));
        row.extend([
            if c.y0 { "1" } else { "0" },
            if c.y1 { "1" } else { "0" },
            mass.as_str(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `y,a,p,<covariates...>[,weight]`.
pub fn read_records_csv<R: Read>(input: R) -> Result<RecordSet> {
    let mut rdr = reader(input);
    let (layout, weighted) =
        header_layout(&header(&mut rdr)?, &["y", "a", "p"], &[], Some("weight"))?;
    let mut set = RecordSet::new(layout.covariates.clone())?;
    let k = layout.covariates.len();
    rows(&mut rdr, 3 + k + weighted as usize, |line, rec| {
        let weight = if weighted {
            let s = &rec[3 + k];
            match s.parse::<f64>() {
                Ok(w) if w.is_finite() && w >= 0.0 => w,
                _ => return Err(Error::parse(line, 4 + k, format!("invalid weight {s:?}"))),
            }
        } else {
            1.0
        };
        let levels = stratum_at(line, 3, &layout.covariates, rec)?;
        set.push(Record {
            y: binary(line, 1, &rec[0])?,
            a: binary(line, 2, &rec[1])?,
            p: binary(line, 3, &rec[2])?,
            levels: level_fields(&levels).map(str::to_owned).collect(),
            weight,
        })
        .map_err(|e| Error::parse(line, 1, e.to_string()))
    })?;
    Ok(set)
}

/// Writes records; the weight column appears only when some weight is
/// not 1.
pub fn write_records_csv<W: Write>(records: &RecordSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let weighted = records.records().iter().any(|r| r.weight != 1.0);
    let mut head = vec!["y", "a", "p"];
    head.extend(records.covariates().iter().map(String::as_str));
    if weighted {
        head.push("weight");
    }
    w.write_record(&head)?;
    let bit = |b: bool| if b { "1" } else { "0" };
    for r in records.records() {
        let weight = r.weight.to_string();
        let mut row = vec![bit(r.y), bit(r.a), bit(r.p)];
        row.extend(r.levels.iter().map(String::as_str));
        if weighted {
            row.push(&weight);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyValue {
    pub line: usize,
    pub key: String,
    pub value: String,
    /// 1-based character column where the value starts.
    pub value_column: usize,
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// skipped; keys are identifiers and may appear once.
pub fn parse_key_values(text: &str) -> Result<Vec<KeyValue>> {
    let mut out: Vec<KeyValue> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let code = raw.split('#').next().unwrap_or("");
        if code.trim().is_empty() {
            continue;
        }
        let Some((k, v)) = code.split_once('=') else {
            let col = code.chars().take_while(|c| c.is_whitespace()).count() + 1;
            return Err(Error::parse(line, col, "expected `key = value`"));
        };
        let key = k.trim();
        let key_col = k.chars().take_while(|c| c.is_whitespace()).count() + 1;
        if !is_identifier(key) {
            return Err(Error::parse(line, key_col, format!("invalid key {key:?}")));
        }
        if out.iter().any(|kv| kv.key == key) {
            return Err(Error::parse(
                line,
                key_col,
                format!("duplicate key {key:?}"),
            ));
        }
        let value = v.trim();
        let value_column =
            k.chars().count() + 1 + v.chars().take_while(|c| c.is_whitespace()).count() + 1;
        if value.is_empty() {
            return Err(Error::parse(
                line,
                value_column,
                format!("missing value for {key:?}"),
            ));
        }
        out.push(KeyValue {
            line,
            key: key.to_owned(),
            value: value.to_owned(),
            value_column,
        });
    }
    Ok(out)
}
