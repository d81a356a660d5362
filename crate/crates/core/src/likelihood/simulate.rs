use rand::Rng;

use crate::error::Result;
use crate::models::Params;
use crate::record::{Event, LifetimeRecord};

/// Draws a new record from `p` with the same observation scheme as `r`:
/// the same truncation set, the same censoring time, and for binned
/// records the same bin grid (anchored at the original lower bound).
pub fn simulate_like<R: Rng + ?Sized>(p: &Params, r: &LifetimeRecord, rng: &mut R) -> Result<LifetimeRecord> {
    let t = p.sample_in_set(&r.truncation, rng)?;
    let censor = r.censor_at.or(match r.event {
        Event::RightCensored { time } => Some(time),
        _ => None,
    });
    let event = match (r.event, censor) {
        (_, Some(c)) => {
            if t <= c {
                Event::Observed { time: t }
            } else {
                Event::RightCensored { time: c }
            }
        }
        (Event::IntervalCensored { lower, upper }, None) => {
            if upper.is_infinite() {
                if t >= lower {
                    Event::IntervalCensored { lower, upper }
                } else {
                    Event::IntervalCensored { lower: 0.0, upper: lower }
                }
            } else {
                let w = upper - lower;
                let k = ((t - lower) / w).floor();
                let lo = (lower + k * w).max(0.0);
                Event::IntervalCensored { lower: lo, upper: lower + (k + 1.0) * w }
            }
        }
        _ => Event::Observed { time: t },
    };
    let mut out = r.clone();
    out.event = event;
    Ok(out)
}

/// A full replicate dataset with each record's configuration reused.
pub fn simulate_dataset<R: Rng + ?Sized>(p: &Params, records: &[LifetimeRecord], rng: &mut R) -> Result<Vec<LifetimeRecord>> {
    records.iter().map(|r| simulate_like(p, r, rng)).collect()
}
