use std::io::{Read, Write};

use super::{DatasetBuilder, RawRow, StudyDataset};
use crate::error::{Error, Result};

/// Maps CSV columns to their roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub study: String,
    pub arm: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub proxies: Vec<String>,
}

impl Schema {
    /// Derives roles from the conventional names `study`, `arm`, `y`,
    /// `w<i>` and `t<i>`. Any other column is an error.
    pub fn infer<S: AsRef<str>>(headers: &[S]) -> Result<Self> {
        let mut covariates = Vec::new();
        let mut proxies = Vec::new();
        for h in headers {
            let h = h.as_ref();
            match h {
                "study" | "arm" | "y" => {}
                _ if is_indexed(h, 'w') => covariates.push(h.to_string()),
                _ if is_indexed(h, 't') => proxies.push(h.to_string()),
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("column {h:?} has no role"),
                    })
                }
            }
        }
        Ok(Self {
            study: "study".into(),
            arm: "arm".into(),
            outcome: "y".into(),
            covariates,
            proxies,
        })
    }

    fn roles(&self) -> impl Iterator<Item = &String> {
        [&self.study, &self.arm, &self.outcome]
            .into_iter()
            .chain(&self.covariates)
            .chain(&self.proxies)
    }

    /// Position of each role in `headers`; every header must map to exactly
    /// one role and every role must be present.
    fn resolve(&self, headers: &csv::StringRecord) -> Result<Vec<usize>> {
        let mut positions = Vec::new();
        let mut used = vec![false; headers.len()];
        for role in self.roles() {
            let found: Vec<usize> = headers
                .iter()
                .enumerate()
                .filter(|(_, h)| *h == role)
                .map(|(i, _)| i)
                .collect();
            match found.as_slice() {
                [i] if !used[*i] => {
                    used[*i] = true;
                    positions.push(*i);
                }
                [] => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("missing column {role:?}"),
                    })
                }
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("column {role:?} is mapped more than once"),
                    })
                }
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::Parse {
                line: 1,
                message: format!("column {:?} has no role", &headers[i]),
            });
        }
        Ok(positions)
    }
}

fn is_indexed(h: &str, prefix: char) -> bool {
    h.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source)
}

/// Loads a dataset, inferring the schema from the header.
pub fn read_dataset<R: Read>(source: R) -> Result<StudyDataset> {
    load_dataset(source, None)
}

/// Loads a dataset from CSV. Lines starting with `#` are metadata and are
/// skipped. Missing outcomes and unavailable proxies are empty fields.
pub fn load_dataset<R: Read>(source: R, schema: Option<&Schema>) -> Result<StudyDataset> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let inferred;
    let schema = match schema {
        Some(s) => s,
        None => {
            let names: Vec<&str> = headers.iter().collect();
            inferred = Schema::infer(&names)?;
            &inferred
        }
    };
    let pos = schema.resolve(&headers)?;
    let p = schema.covariates.len();
    let k = schema.proxies.len();

    let mut builder = DatasetBuilder::new(schema.covariates.clone(), schema.proxies.clone());
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |role: usize| &record[pos[role]];
        let bad = |message: String| Error::Parse { line, message };

        let study = field(0)
            .parse::<i64>()
            .map_err(|_| bad(format!("study {:?} is not an integer", field(0))))?;
        let arm = match field(1) {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("arm {other:?} is not 0 or 1"))),
        };
        let outcome = parse_optional(field(2)).map_err(|m| bad(format!("y: {m}")))?;
        let mut covariates = Vec::with_capacity(p);
        for (j, name) in schema.covariates.iter().enumerate() {
            match parse_optional(field(3 + j)).map_err(|m| bad(format!("{name}: {m}")))? {
                Some(v) => covariates.push(v),
                None => return Err(bad(format!("{name} is empty"))),
            }
        }
        let mut proxies = Vec::with_capacity(k);
        for (j, name) in schema.proxies.iter().enumerate() {
            proxies.push(parse_optional(field(3 + p + j)).map_err(|m| bad(format!("{name}: {m}")))?);
        }
        builder
            .push(RawRow {
                study,
                arm,
                covariates,
                proxies,
                outcome,
            })
            .map_err(|e| bad(e.to_string()))?;
    }
    builder.build()
}

fn parse_optional(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Err(format!("{s:?} is not finite")),
        Err(_) => Err(format!("{s:?} is not a number")),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

impl StudyDataset {
    /// Writes the dataset in the loader's format: `study,arm,y,w..,t..`,
    /// original labels, stored row order. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["study".to_string(), "arm".into(), "y".into()];
        header.extend(self.covariate_names().iter().cloned());
        header.extend(self.proxy_names().iter().cloned());
        w.write_record(&header).map_err(csv_write_error)?;

        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        for row in self.raw_rows() {
            fields.clear();
            fields.push(row.study.to_string());
            fields.push(row.arm.to_string());
            fields.push(row.outcome.map(|v| v.to_string()).unwrap_or_default());
            fields.extend(row.covariates.iter().map(f64::to_string));
            fields.extend(
                row.proxies
                    .iter()
                    .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
            );
            w.write_record(&fields).map_err(csv_write_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Structural(format!("{other:?}")),
    }
}
