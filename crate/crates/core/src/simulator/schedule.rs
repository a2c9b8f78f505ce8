use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Season;

/// A value that takes effect at `at` and holds until the next change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Change<T> {
    pub at: DateTime<Utc>,
    pub value: T,
}

/// Half-open interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Span {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

/// Scripted occupancy and window opening over `[start, end)`.
///
/// Both signals are piecewise constant and start at zero (empty room,
/// windows closed). Sensors only report inside `recording` spans; the
/// physics runs throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub occupancy: Vec<Change<u32>>,
    /// Fraction of window area open, in [0, 1].
    pub opening: Vec<Change<f64>>,
    pub recording: Vec<Span>,
    #[serde(default)]
    pub seasons: BTreeMap<NaiveDate, Season>,
}

fn value_at<T: Copy>(changes: &[Change<T>], t: DateTime<Utc>, initial: T) -> T {
    let idx = changes.partition_point(|c| c.at <= t);
    if idx == 0 {
        initial
    } else {
        changes[idx - 1].value
    }
}

fn check_sorted<T>(changes: &[Change<T>], field: &str, sched: &Schedule) -> Result<()> {
    for (k, c) in changes.iter().enumerate() {
        if c.at < sched.start || c.at >= sched.end {
            return Err(Error::invalid(
                field,
                format!("change #{k} lies outside the schedule"),
            ));
        }
        if k > 0 && changes[k - 1].at >= c.at {
            return Err(Error::invalid(
                field,
                format!("change #{k} is not strictly after its predecessor"),
            ));
        }
    }
    Ok(())
}

impl Schedule {
    pub fn occupants_at(&self, t: DateTime<Utc>) -> u32 {
        value_at(&self.occupancy, t, 0)
    }

    pub fn opening_at(&self, t: DateTime<Utc>) -> f64 {
        value_at(&self.opening, t, 0.0)
    }

    pub fn is_recording(&self, t: DateTime<Utc>) -> bool {
        let idx = self.recording.partition_point(|s| s.start <= t);
        idx > 0 && self.recording[idx - 1].contains(t)
    }

    pub fn season_of(&self, t: DateTime<Utc>) -> Season {
        self.seasons
            .get(&t.date_naive())
            .copied()
            .unwrap_or_else(|| Season::of(&t))
    }

    pub fn validate(&self) -> Result<()> {
        if self.end - self.start < chrono::Duration::days(1) {
            return Err(Error::invalid("end", "schedule must span at least one day"));
        }
        check_sorted(&self.occupancy, "occupancy", self)?;
        check_sorted(&self.opening, "opening", self)?;
        for (k, c) in self.opening.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.value) {
                return Err(Error::invalid(
                    "opening",
                    format!("change #{k}: {} outside [0, 1]", c.value),
                ));
            }
            if self.occupants_at(c.at) == 0 {
                return Err(Error::invalid(
                    "opening",
                    format!("change #{k} happens while the room is empty"),
                ));
            }
        }
        for (k, s) in self.recording.iter().enumerate() {
            if s.start >= s.end || s.start < self.start || s.end > self.end {
                return Err(Error::invalid(
                    "recording",
                    format!("span #{k} is empty or outside the schedule"),
                ));
            }
            if k > 0 && self.recording[k - 1].end > s.start {
                return Err(Error::invalid(
                    "recording",
                    format!("span #{k} overlaps its predecessor"),
                ));
            }
        }
        if self.recording.is_empty() {
            return Err(Error::invalid("recording", "no recording spans"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Schedule = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub(crate) fn cursor(&self) -> Cursor<'_> {
        Cursor {
            schedule: self,
            occ: 0,
            open: 0,
        }
    }
}

/// Forward-only lookup for monotonically increasing query times.
pub(crate) struct Cursor<'a> {
    schedule: &'a Schedule,
    occ: usize,
    open: usize,
}

impl Cursor<'_> {
    pub(crate) fn at(&mut self, t: DateTime<Utc>) -> (u32, f64) {
        let s = self.schedule;
        while self.occ < s.occupancy.len() && s.occupancy[self.occ].at <= t {
            self.occ += 1;
        }
        while self.open < s.opening.len() && s.opening[self.open].at <= t {
            self.open += 1;
        }
        let n = if self.occ == 0 {
            0
        } else {
            s.occupancy[self.occ - 1].value
        };
        let o = if self.open == 0 {
            0.0
        } else {
            s.opening[self.open - 1].value
        };
        (n, o)
    }
}
