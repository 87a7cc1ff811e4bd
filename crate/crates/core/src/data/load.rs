use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{InteractionMatrix, Observation};
use crate::error::{Error, Result};

/// Field separator of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Tab,
    /// MovieLens `::` style.
    DoubleColon,
    Comma,
}

impl Delimiter {
    pub fn as_str(&self) -> &'static str {
        match self {
            Delimiter::Tab => "\t",
            Delimiter::DoubleColon => "::",
            Delimiter::Comma => ",",
        }
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab" | "\t" | "\\t" => Ok(Delimiter::Tab),
            "::" | "doublecolon" => Ok(Delimiter::DoubleColon),
            "," | "comma" => Ok(Delimiter::Comma),
            other => Err(Error::Config(format!("unknown delimiter `{}`", other))),
        }
    }
}

pub fn load_ratings(path: &Path, delimiter: Delimiter) -> Result<InteractionMatrix> {
    let file = File::open(path)?;
    parse_ratings(BufReader::new(file), delimiter)
}

/// Parses `user<sep>item<sep>rating[<sep>timestamp]` lines. Blank lines and
/// lines starting with `#` are skipped. Users and items get contiguous
/// indices in order of first appearance.
pub fn parse_ratings<R: BufRead>(reader: R, delimiter: Delimiter) -> Result<InteractionMatrix> {
    let sep = delimiter.as_str();
    let mut users: HashMap<String, usize> = HashMap::new();
    let mut items: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut observations = Vec::new();
    let mut first_line: HashMap<(usize, usize), usize> = HashMap::new();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(sep).map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty user or item id".into(),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad rating `{}`", fields[2]),
        })?;
        if !value.is_finite() || value == 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("rating must be finite and non-zero, got `{}`", fields[2]),
            });
        }
        let timestamp = match fields.get(3) {
            Some(ts) => Some(ts.parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad timestamp `{}`", ts),
            })?),
            None => None,
        };

        let user = *users.entry(fields[0].to_string()).or_insert_with(|| {
            user_ids.push(fields[0].to_string());
            user_ids.len() - 1
        });
        let item = *items.entry(fields[1].to_string()).or_insert_with(|| {
            item_ids.push(fields[1].to_string());
            item_ids.len() - 1
        });
        if let Some(prev) = first_line.insert((user, item), line_no) {
            return Err(Error::Data(format!(
                "duplicate rating for user `{}` item `{}` on lines {} and {}",
                fields[0], fields[1], prev, line_no
            )));
        }
        observations.push((
            user,
            Observation {
                item,
                value,
                timestamp,
                seq: observations.len() as u64,
            },
        ));
    }

    InteractionMatrix::from_observations(user_ids.len(), item_ids.len(), observations)?
        .with_ids(user_ids, item_ids)
}
