//! Reading lifetime datasets from CSV files with sampling-frame metadata.
//!
//! Columns: `id`, one of `entry_date` / `birth_date`, one of
//! `event_age_days` / `event_age_years`, `event_type` (`death` or `alive`)
//! and `frame_id`; any further column is kept as a covariate. Ages are
//! total ages; records hold excess lifetimes in years above the frame's
//! threshold age. Ages given as whole years are interval-censored to the
//! year of age.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexis::{days_to_years, excess_interval, idl_observable_set, years_to_days, CalendarDate, FrameKind, SamplingFrame};
use crate::record::{Event, LifetimeRecord, TruncationSet};

/// Problem with one data row; the row is left out of the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    /// Line number in the file (the header is line 1).
    pub line: usize,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: Vec<LifetimeRecord>,
    pub diagnostics: Vec<RowDiagnostic>,
    pub rows: usize,
}

pub type Frames = BTreeMap<String, SamplingFrame>;

pub fn parse_frames(text: &str) -> Result<Frames> {
    let frames: Frames = serde_json::from_str(text).map_err(|e| Error::input(format!("frame metadata: {e}")))?;
    for (id, f) in &frames {
        f.validate().map_err(|e| Error::input(format!("frame '{id}': {e}")))?;
    }
    Ok(frames)
}

pub fn load_frames(path: impl AsRef<Path>) -> Result<Frames> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p).map_err(|e| Error::input(format!("cannot read frame metadata {}: {e}", p.display())))?;
    parse_frames(&text)
}

pub fn ingest_csv(path: impl AsRef<Path>, frames: &Frames) -> Result<IngestReport> {
    let p = path.as_ref();
    let file = std::fs::File::open(p).map_err(|e| Error::input(format!("cannot read {}: {e}", p.display())))?;
    ingest_reader(file, frames)
}

/// Reads a JSON array of records.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<LifetimeRecord>> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p).map_err(|e| Error::input(format!("cannot read {}: {e}", p.display())))?;
    let records: Vec<LifetimeRecord> =
        serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", p.display())))?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

struct Columns {
    id: usize,
    date: (usize, bool),
    age: (usize, bool),
    event: usize,
    frame: usize,
    covariates: Vec<(usize, String)>,
}

fn columns(header: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::input(format!("CSV header lacks column '{name}'")));
    let date = match (find("entry_date"), find("birth_date")) {
        (Some(i), _) => (i, true),
        (None, Some(i)) => (i, false),
        _ => return Err(Error::input("CSV header needs 'entry_date' or 'birth_date'")),
    };
    let age = match (find("event_age_days"), find("event_age_years")) {
        (Some(i), _) => (i, true),
        (None, Some(i)) => (i, false),
        _ => return Err(Error::input("CSV header needs 'event_age_days' or 'event_age_years'")),
    };
    let id = need("id")?;
    let event = need("event_type")?;
    let frame = need("frame_id")?;
    let used = [id, date.0, age.0, event, frame];
    let covariates = header
        .iter()
        .enumerate()
        .filter(|(i, _)| !used.contains(i))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();
    Ok(Columns { id, date, age, event, frame, covariates })
}

pub fn ingest_reader<R: Read>(reader: R, frames: &Frames) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::input(format!("unreadable CSV header: {e}")))?.clone();
    let cols = columns(&header)?;
    let mut report = IngestReport { records: Vec::new(), diagnostics: Vec::new(), rows: 0 };
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        report.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.diagnostics.push(RowDiagnostic { line, id: String::new(), message: format!("unreadable row: {e}") });
                continue;
            }
        };
        let id = row.get(cols.id).unwrap_or("").to_string();
        match convert(&row, &cols, frames) {
            Ok(r) => report.records.push(r.with_id(id)),
            Err(message) => report.diagnostics.push(RowDiagnostic { line, id, message }),
        }
    }
    Ok(report)
}

fn field<'a>(row: &'a csv::StringRecord, i: usize, name: &str) -> std::result::Result<&'a str, String> {
    match row.get(i) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("missing {name}")),
    }
}

/// Excess lifetime as either a point or a year-of-age interval, in years.
enum Excess {
    Point(f64),
    Year(f64, f64),
}

fn convert(row: &csv::StringRecord, cols: &Columns, frames: &Frames) -> std::result::Result<LifetimeRecord, String> {
    let frame_id = field(row, cols.frame, "frame_id")?;
    let frame = frames.get(frame_id).ok_or_else(|| format!("unknown frame '{frame_id}'"))?;
    let u0 = frame.u0;
    let date_name = if cols.date.1 { "entry_date" } else { "birth_date" };
    let date: CalendarDate = field(row, cols.date.0, date_name)?.parse().map_err(|e: Error| e.to_string())?;
    let (x, birth) = if cols.date.1 { (date, None) } else { (date.add_age(u0), Some(date)) };
    let age_text = field(row, cols.age.0, "event age")?;
    let age: f64 = age_text.parse().map_err(|_| format!("event age '{age_text}' is not a number"))?;
    if !(age >= 0.0) || !age.is_finite() {
        return Err(format!("event age {age} must be finite and nonnegative"));
    }
    let death = match field(row, cols.event, "event_type")? {
        "death" => true,
        "alive" => false,
        other => return Err(format!("event_type '{other}' is neither 'death' nor 'alive'")),
    };
    let excess = if cols.age.1 {
        let offset = match birth {
            Some(b) => x.days_after(b) as f64,
            None => years_to_days(u0),
        };
        Excess::Point(days_to_years(age - offset))
    } else if death && age.fract() == 0.0 {
        Excess::Year(age - u0, age + 1.0 - u0)
    } else {
        Excess::Point(age - u0)
    };
    let lower = match excess {
        Excess::Point(t) => t,
        Excess::Year(l, _) => l,
    };
    if lower < 0.0 {
        return Err(format!("event age {age} is below the threshold age {u0}"));
    }
    let event = match excess {
        Excess::Point(time) => Event::Observed { time },
        Excess::Year(lower, upper) => Event::IntervalCensored { lower, upper },
    };
    let mut record = match frame.kind {
        FrameKind::IntervalTruncated | FrameKind::LeftTruncRightCens => {
            let (a, b) = excess_interval(x, frame).map_err(|e| e.to_string())?;
            let (a, b) = (days_to_years(a), days_to_years(b));
            if frame.kind == FrameKind::IntervalTruncated {
                if !death {
                    return Err("alive record in an interval-truncated frame".into());
                }
                LifetimeRecord::new(event, TruncationSet::single(a, b))
            } else if death {
                let mut r = LifetimeRecord::new(event, TruncationSet::single(a, f64::INFINITY));
                r.censor_at = Some(b);
                if lower > b {
                    return Err(format!("death at excess {lower:.4}y after the frame end {b:.4}y"));
                }
                r
            } else {
                if lower > b + days_to_years(1.0) {
                    return Err(format!("alive at excess {lower:.4}y after the frame end {b:.4}y"));
                }
                let mut r = LifetimeRecord::new(Event::RightCensored { time: b }, TruncationSet::single(a, f64::INFINITY));
                r.censor_at = Some(b);
                r
            }
        }
        FrameKind::IdlDual => {
            if !death {
                return Err("alive record in a dual-window frame".into());
            }
            let set = idl_observable_set(x, frame).map_err(|e| e.to_string())?.scale(1.0 / crate::lexis::DAYS_PER_YEAR);
            if set.is_empty() {
                return Err("excluded: trajectory misses both observation windows".into());
            }
            LifetimeRecord::new(event, set)
        }
    };
    record.origin_age = u0;
    record.entry_date = Some(x);
    for (i, name) in &cols.covariates {
        if let Some(v) = row.get(*i).filter(|v| !v.is_empty()) {
            record.covariates.insert(name.clone(), v.to_string());
        }
    }
    record.validate().map_err(|e| match e {
        Error::Input(m) if m.contains("outside its truncation set") || m.contains("disjoint from truncation") => {
            format!("death falls outside the sampling frame ({m})")
        }
        other => other.to_string(),
    })?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAMES: &str = r#"{
        "fr": {"kind": "interval_truncated", "c1": "1987-01-01", "c2": "2017-12-31", "u0": 105},
        "lt": {"kind": "left_trunc_right_cens", "c1": "2000-01-01", "c2": "2010-01-01", "u0": 110},
        "idl": {"kind": "idl_dual", "c1": "1990-01-01", "c2": "2015-12-31", "d1": "2000-01-01", "d2": "2015-12-31"}
    }"#;

    fn ingest(csv: &str) -> IngestReport {
        ingest_reader(csv.as_bytes(), &parse_frames(FRAMES).unwrap()).unwrap()
    }

    #[test]
    fn observed_death_gets_its_window() {
        let r = ingest("id,birth_date,event_age_years,event_type,frame_id,sex\na,1890-06-01,111.2,death,fr,F\n");
        assert!(r.diagnostics.is_empty(), "{:?}", r.diagnostics);
        let rec = &r.records[0];
        assert_eq!(rec.id, "a");
        assert_eq!(rec.covariates["sex"], "F");
        match rec.event {
            Event::Observed { time } => assert!((time - 6.2).abs() < 1e-12),
            _ => panic!(),
        }
        let x = "1995-06-01".parse::<CalendarDate>().unwrap();
        assert_eq!(rec.entry_date, Some(x));
        assert_eq!(rec.truncation.lower(), 0.0);
        let c2: CalendarDate = "2017-12-31".parse().unwrap();
        assert!((rec.truncation.upper() - days_to_years(c2.days_after(x) as f64)).abs() < 1e-12);
    }

    #[test]
    fn whole_years_are_interval_censored() {
        let r = ingest("id,entry_date,event_age_years,event_type,frame_id\nb,1995-06-01,108,death,fr\n");
        assert_eq!(r.records[0].event, Event::IntervalCensored { lower: 3.0, upper: 4.0 });
    }

    #[test]
    fn rows_outside_the_frame_are_reported() {
        let csv = "id,entry_date,event_age_days,event_type,frame_id\n\
                   ok,2000-01-01,40000,death,fr\n\
                   late,1980-01-01,38717,death,fr\n\
                   young,2000-01-01,100,death,fr\n\
                   nodate,,40000,death,fr\n\
                   bad,2000-01-01,40000,death,zz\n\
                   cens,2001-01-01,41000,alive,lt\n";
        let r = ingest(csv);
        assert_eq!(r.rows, 6);
        assert_eq!(r.records.len(), 2);
        let ids: Vec<_> = r.diagnostics.iter().map(|d| (d.line, d.id.as_str())).collect();
        assert_eq!(ids, vec![(3, "late"), (4, "young"), (5, "nodate"), (6, "bad")]);
        assert!(r.diagnostics[0].message.contains("outside the sampling frame"));
        let c = &r.records[1];
        assert!(matches!(c.event, Event::RightCensored { .. }));
        assert_eq!(Some(c.event.support_floor()), c.censor_at);
        for rec in &r.records {
            rec.validate().unwrap();
        }
    }

    #[test]
    fn dual_frame_gives_two_windows() {
        // Turns 105 in 1997 and 110 in 2002: observable in [2000, 2002) and
        // [2002, 2015].
        let r = ingest("id,entry_date,event_age_days,event_type,frame_id\nd,1997-01-01,39885,death,idl\n");
        assert!(r.diagnostics.is_empty(), "{:?}", r.diagnostics);
        assert!(!r.records[0].truncation.is_empty());
        assert!(r.records[0].truncation.lower() > 2.9);
    }

    #[test]
    fn header_problems_are_hard_errors() {
        let frames = parse_frames(FRAMES).unwrap();
        assert!(ingest_reader("id,entry_date,event_type,frame_id\n".as_bytes(), &frames).is_err());
        assert!(parse_frames(r#"{"x": {"kind": "interval_truncated", "c1": "2000-01-01", "c2": "1999-01-01"}}"#).is_err());
    }
}
