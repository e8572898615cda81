use std::collections::HashMap;
use std::io::BufRead;
use std::str::FromStr;

use super::{Bounds, RatingMatrix};
use crate::error::{Error, Result};

/// Supported ratings file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `user::item::rating::timestamp`, no header.
    MovielensDat,
    /// `user,item,rating[,timestamp]` with a header row.
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" | "dat" => Ok(Format::MovielensDat),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidArgument(format!("unknown ratings format {other:?}"))),
        }
    }
}

impl Format {
    pub fn as_str(&self) -> &'static str {
        match self {
            Format::MovielensDat => "movielens_dat",
            Format::Csv => "csv",
        }
    }
}

/// Parses a ratings stream into a [`RatingMatrix`].
///
/// Line numbers in errors are 1-based and count the CSV header. Blank lines
/// are skipped. Timestamps are validated as integers and then dropped.
pub fn parse_ratings<R: BufRead>(source: R, format: Format, bounds: Bounds) -> Result<RatingMatrix> {
    let mut matrix = RatingMatrix::empty(bounds);
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if format == Format::Csv && line_no == 1 {
            check_header(line)?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }

        let fields: Vec<&str> = match format {
            Format::MovielensDat => line.split("::").collect(),
            Format::Csv => line.split(',').collect(),
        };
        let expected = match format {
            Format::MovielensDat => fields.len() == 4,
            Format::Csv => fields.len() == 3 || fields.len() == 4,
        };
        if !expected {
            return Err(Error::Malformed {
                line: line_no,
                message: format!("expected {} fields, found {}", field_hint(format), fields.len()),
            });
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(Error::Malformed {
                line: line_no,
                message: "empty user or item id".into(),
            });
        }
        let rating: f64 = fields[2].trim().parse().map_err(|_| Error::Malformed {
            line: line_no,
            message: format!("rating {:?} is not a number", fields[2]),
        })?;
        if !rating.is_finite() || !bounds.contains(rating) {
            return Err(Error::OutOfRange {
                line: line_no,
                rating,
                low: bounds.low,
                high: bounds.high,
            });
        }
        if let Some(ts) = fields.get(3) {
            ts.trim().parse::<i64>().map_err(|_| Error::Malformed {
                line: line_no,
                message: format!("timestamp {ts:?} is not an integer"),
            })?;
        }

        let u = matrix.users_mut().get_or_insert(user);
        let i = matrix.items_mut().get_or_insert(item);
        if let Some(&first) = seen.get(&(u, i)) {
            return Err(Error::Duplicate {
                line: line_no,
                first,
                user: user.to_owned(),
                item: item.to_owned(),
            });
        }
        seen.insert((u, i), line_no);
        matrix.push(u, i, rating);
    }
    matrix.finish();
    Ok(matrix)
}

fn field_hint(format: Format) -> &'static str {
    match format {
        Format::MovielensDat => "4",
        Format::Csv => "3 or 4",
    }
}

fn check_header(line: &str) -> Result<()> {
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    let ok = matches!(
        cols.as_slice(),
        ["user", "item", "rating"] | ["user", "item", "rating", "timestamp"]
    );
    if ok {
        Ok(())
    } else {
        Err(Error::Malformed {
            line: 1,
            message: format!("expected header `user,item,rating[,timestamp]`, found {line:?}"),
        })
    }
}
