//! Categorical facets derived from birth and death dates.

use thiserror::Error;

pub const LIFESPAN_FACET: &str = "lifespan_range";
pub const CENTURY_FACET: &str = "century_of_birth";
pub const LIFESPAN_BUCKET_YEARS: i64 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DateError {
    #[error("unparseable date '{0}'")]
    Unparseable(String),
    #[error("death year {death} precedes birth year {birth}")]
    DeathBeforeBirth { birth: i64, death: i64 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DerivedDates {
    pub lifespan: Option<String>,
    pub century: Option<String>,
}

/// Parse the year out of `YYYY`, `YYYY-MM-DD`, or a signed variant (`-0044-03-15`).
pub fn parse_year(date: &str) -> Result<i64, DateError> {
    let s = date.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let year_part = body.split('-').next().unwrap_or("");
    if year_part.is_empty() || !year_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DateError::Unparseable(date.to_string()));
    }
    let rest = &body[year_part.len()..];
    if !rest.is_empty() {
        let mut parts = rest[1..].split('-');
        let ok = parts.all(|p| !p.is_empty() && p.len() <= 2 && p.bytes().all(|b| b.is_ascii_digit()));
        if !ok {
            return Err(DateError::Unparseable(date.to_string()));
        }
    }
    let y: i64 = year_part
        .parse()
        .map_err(|_| DateError::Unparseable(date.to_string()))?;
    Ok(if neg { -y } else { y })
}

fn ordinal(n: i64) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// `⌈year/100⌉` as an ordinal label; years ≤ 0 (astronomical numbering) get a BCE label.
pub fn century_label(year: i64) -> String {
    if year >= 1 {
        ordinal((year + 99) / 100)
    } else {
        // year 0 is 1 BCE
        let bce = 1 - year;
        format!("{} BCE", ordinal((bce + 99) / 100))
    }
}

/// Five-year bucket `[5k,5k+5)` of a lifespan in years.
pub fn lifespan_label(years: i64) -> String {
    let lo = years.div_euclid(LIFESPAN_BUCKET_YEARS) * LIFESPAN_BUCKET_YEARS;
    format!("[{lo},{})", lo + LIFESPAN_BUCKET_YEARS)
}

/// Derive lifespan-range and century-of-birth labels. Missing inputs give
/// missing outputs; a death before birth is an error.
pub fn derive_date_facets(
    birth: Option<&str>,
    death: Option<&str>,
) -> Result<DerivedDates, DateError> {
    let birth_year = birth.map(parse_year).transpose()?;
    let death_year = death.map(parse_year).transpose()?;
    match (birth_year, death_year) {
        (Some(b), Some(d)) if d < b => Err(DateError::DeathBeforeBirth { birth: b, death: d }),
        (Some(b), Some(d)) => Ok(DerivedDates {
            lifespan: Some(lifespan_label(d - b)),
            century: Some(century_label(b)),
        }),
        (Some(b), None) => Ok(DerivedDates {
            lifespan: None,
            century: Some(century_label(b)),
        }),
        _ => Ok(DerivedDates::default()),
    }
}
