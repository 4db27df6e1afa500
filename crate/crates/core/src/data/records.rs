use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RATING: f32 = 1.0;
pub const MAX_RATING: f32 = 5.0;

const SECONDS_PER_DAY: i64 = 86_400;

/// One `user,item,rating,timestamp` line. Timestamps are UTC epoch seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: String,
    pub item: String,
    pub rating: f32,
    pub timestamp: i64,
}

impl RatingRecord {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f32, timestamp: i64) -> Self {
        RatingRecord {
            user: user.into(),
            item: item.into(),
            rating,
            timestamp,
        }
    }

    pub fn date(&self) -> NaiveDate {
        day_of(self.timestamp)
    }
}

/// Calendar day (UTC) containing an epoch-seconds timestamp.
pub fn day_of(timestamp: i64) -> NaiveDate {
    // 719_163 days from 0001-01-01 to 1970-01-01
    let days = timestamp.div_euclid(SECONDS_PER_DAY) + 719_163;
    i32::try_from(days)
        .ok()
        .and_then(NaiveDate::from_num_days_from_ce_opt)
        .unwrap_or(if days < 0 { NaiveDate::MIN } else { NaiveDate::MAX })
}

/// Epoch seconds of midnight UTC starting `date`.
pub fn day_start(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Csv,
    Tsv,
}

impl Delimiter {
    pub fn byte(self) -> char {
        match self {
            Delimiter::Csv => ',',
            Delimiter::Tsv => '\t',
        }
    }

    /// `.tsv`/`.tab` files are tab-separated, everything else comma-separated.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => Delimiter::Tsv,
            _ => Delimiter::Csv,
        }
    }
}

/// Accepts epoch seconds, `YYYY-MM-DD`, `YYYY-MM-DD[T ]HH:MM:SS`, or RFC 3339.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(day_start(d));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.timestamp())
}

fn parse_line(line: &str, delimiter: Delimiter, lineno: usize) -> Result<RatingRecord> {
    let err = |message: String| Error::Parse { line: lineno, message };
    let fields: Vec<&str> = line.split(delimiter.byte()).map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(format!(
            "expected 4 fields user,item,rating,timestamp, found {}",
            fields.len()
        )));
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err(err("empty user or item token".into()));
    }
    let rating: f32 = fields[2]
        .parse()
        .map_err(|_| err(format!("unparseable rating {:?}", fields[2])))?;
    if !(MIN_RATING..=MAX_RATING).contains(&rating) {
        return Err(err(format!("rating {rating} outside [{MIN_RATING}, {MAX_RATING}]")));
    }
    let timestamp = parse_timestamp(fields[3]).ok_or_else(|| err(format!("unparseable timestamp {:?}", fields[3])))?;
    Ok(RatingRecord {
        user: fields[0].to_string(),
        item: fields[1].to_string(),
        rating,
        timestamp,
    })
}

fn is_header(line: &str, delimiter: Delimiter) -> bool {
    line.split(delimiter.byte())
        .nth(2)
        .is_some_and(|f| f.trim().eq_ignore_ascii_case("rating"))
}

/// Reads rating lines (LF or CRLF), skipping blank lines and an optional
/// `user,item,rating,timestamp` header, then drops duplicate (user, item)
/// pairs keeping the latest timestamp. Survivors keep their input order.
pub fn parse_ratings<R: BufRead>(mut reader: R, delimiter: Delimiter) -> Result<Vec<RatingRecord>> {
    let mut records = Vec::new();
    let mut buf = String::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        lineno += 1;
        let read = reader.read_line(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::Parse {
                line: lineno,
                message: "invalid UTF-8".into(),
            },
            _ => Error::Io(e),
        })?;
        if read == 0 {
            break;
        }
        let line = buf.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || (records.is_empty() && is_header(line, delimiter)) {
            continue;
        }
        records.push(parse_line(line, delimiter, lineno)?);
    }
    Ok(dedup_latest(records))
}

pub fn parse_ratings_str(text: &str, delimiter: Delimiter) -> Result<Vec<RatingRecord>> {
    parse_ratings(text.as_bytes(), delimiter)
}

pub fn read_ratings_file(path: &Path) -> Result<Vec<RatingRecord>> {
    let file = File::open(path)?;
    parse_ratings(BufReader::new(file), Delimiter::for_path(path))
}

/// Keeps one record per (user, item): the latest by timestamp, ties going to
/// the later line.
pub fn dedup_latest(records: Vec<RatingRecord>) -> Vec<RatingRecord> {
    let mut winner: HashMap<(&str, &str), usize> = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        winner
            .entry((r.user.as_str(), r.item.as_str()))
            .and_modify(|w| {
                if records[*w].timestamp <= r.timestamp {
                    *w = i;
                }
            })
            .or_insert(i);
    }
    if winner.len() == records.len() {
        return records;
    }
    let mut keep = vec![false; records.len()];
    for &i in winner.values() {
        keep[i] = true;
    }
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

/// Writes records with a header line and epoch-seconds timestamps.
pub fn write_ratings<W: Write>(mut out: W, records: &[RatingRecord], delimiter: Delimiter) -> Result<()> {
    let d = delimiter.byte();
    writeln!(out, "user{d}item{d}rating{d}timestamp")?;
    for r in records {
        writeln!(out, "{}{d}{}{d}{}{d}{}", r.user, r.item, r.rating, r.timestamp)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_iso_date_line() {
        let recs = parse_ratings_str("1,10,5,2005-09-14\n", Delimiter::Csv).unwrap();
        assert_eq!(recs, vec![RatingRecord::new("1", "10", 5.0, 1_126_656_000)]);
        assert_eq!(recs[0].date(), NaiveDate::from_ymd_opt(2005, 9, 14).unwrap());
    }

    #[test]
    fn rating_out_of_range_reports_line() {
        let err = parse_ratings_str("1,10,4,2005-09-14\n1,10,7,2005-09-14\n", Delimiter::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_ratings_str("1,10,0.5,1\n", Delimiter::Csv).is_err());
        assert!(parse_ratings_str("1,10,NaN,1\n", Delimiter::Csv).is_err());
    }

    #[test]
    fn bad_timestamp_and_field_count() {
        let err = parse_ratings_str("a,b,3,yesterday\n", Delimiter::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_ratings_str("\n\na,b,3\n", Delimiter::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn duplicate_keeps_latest() {
        let text = "1,10,2,2005-01-01\n1,11,4,2005-01-02\n1,10,5,2005-03-01\n";
        let recs = parse_ratings_str(text, Delimiter::Csv).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].item, "11");
        assert_eq!(recs[1].rating, 5.0);
        // latest wins even when it comes first
        let text = "1,10,5,2005-03-01\n1,10,2,2005-01-01\n";
        let recs = parse_ratings_str(text, Delimiter::Csv).unwrap();
        assert_eq!(
            recs,
            vec![RatingRecord::new(
                "1",
                "10",
                5.0,
                day_start(NaiveDate::from_ymd_opt(2005, 3, 1).unwrap())
            )]
        );
    }

    #[test]
    fn crlf_tsv_header_and_timestamp_forms() {
        let text = "user\titem\trating\ttimestamp\r\nu1\ti1\t3.5\t1000\r\nu2\ti1\t1\t2005-12-01T10:00:00\r\nu3\ti2\t2\t2005-12-01T10:00:00+02:00\r\n";
        let recs = parse_ratings_str(text, Delimiter::Tsv).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].timestamp, 1000);
        assert_eq!(recs[1].timestamp - recs[2].timestamp, 7200);
    }

    #[test]
    fn write_then_parse() {
        let recs = vec![
            RatingRecord::new("a", "x", 4.5, 17),
            RatingRecord::new("b", "y", 1.0, -3600),
        ];
        let mut buf = Vec::new();
        write_ratings(&mut buf, &recs, Delimiter::Csv).unwrap();
        assert_eq!(parse_ratings(&buf[..], Delimiter::Csv).unwrap(), recs);
    }

    #[test]
    fn invalid_utf8_is_a_parse_error() {
        let bytes = b"1,2,3,4\n\xff\xfe,2,3,4\n";
        assert!(matches!(
            parse_ratings(&bytes[..], Delimiter::Csv),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn day_boundaries() {
        assert_eq!(day_of(0), NaiveDate::from_ymd_opt(1970, 1, 1).unwrap());
        assert_eq!(day_of(-1), NaiveDate::from_ymd_opt(1969, 12, 31).unwrap());
        assert_eq!(day_of(86_399), NaiveDate::from_ymd_opt(1970, 1, 1).unwrap());
        let d = NaiveDate::from_ymd_opt(2005, 12, 1).unwrap();
        assert_eq!(day_of(day_start(d)), d);
    }
}
