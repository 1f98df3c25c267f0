//! Diagnostic output schedules.
//!
//! A schedule lists groups of fields with an output period. The first output
//! of a group happens one period into the run (never at hour zero) and the
//! last at the largest multiple of the period not past the end of the run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const GIB: f64 = (1u64 << 30) as f64;
const TIB: f64 = (1u64 << 40) as f64;

/// Output times are compared on a nano-hour grid so that, say, `3 × 3.0` and
/// `1 × 9.0` land on the same instant.
const TIME_QUANTUM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("run_hours must be finite and ≥ 0")]
    RunHours,
    #[error("entry {0}: field_count must be positive")]
    FieldCount(usize),
    #[error("entry {0}: period_hours must be finite and positive")]
    Period(usize),
    #[error("entry {0}: bytes_per_field must be positive")]
    Bytes(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub field_count: u32,
    pub period_hours: f64,
    pub bytes_per_field: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticSchedule {
    pub run_hours: f64,
    pub entries: Vec<ScheduleEntry>,
}

/// One field written at one output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmissionEvent {
    pub time_hours: f64,
    pub entry: usize,
    /// Index of the field across the whole schedule (entry offset + position).
    pub field_index: u32,
    pub bytes: u64,
}

impl EmissionEvent {
    pub fn time_key(&self) -> i64 {
        quantize(self.time_hours)
    }
}

pub(crate) fn quantize(hours: f64) -> i64 {
    (hours / TIME_QUANTUM).round() as i64
}

impl ScheduleEntry {
    pub fn new(field_count: u32, period_hours: f64, bytes_per_field: u64) -> Self {
        ScheduleEntry { field_count, period_hours, bytes_per_field }
    }

    /// Number of outputs within `run_hours`.
    pub fn outputs(&self, run_hours: f64) -> u64 {
        let ratio = run_hours / self.period_hours;
        // Absorb representation error such as 0.3 / 0.1 = 2.9999999999999996.
        (ratio + ratio.abs() * 1e-12 + 1e-12).floor().max(0.0) as u64
    }
}

impl DiagnosticSchedule {
    pub fn new(run_hours: f64, entries: Vec<ScheduleEntry>) -> Self {
        DiagnosticSchedule { run_hours, entries }
    }

    pub fn empty(run_hours: f64) -> Self {
        DiagnosticSchedule { run_hours, entries: Vec::new() }
    }

    /// The C192 diagnostic load test: 48 hours, five output streams, about
    /// 400 GiB in total.
    pub fn c192() -> Self {
        let bytes = (400.0 * GIB / 5329.0).floor() as u64;
        DiagnosticSchedule::new(
            48.0,
            [(38, 18.0), (6, 12.0), (9, 9.0), (27, 3.0), (99, 1.0)]
                .into_iter()
                .map(|(n, p)| ScheduleEntry::new(n, p, bytes))
                .collect(),
        )
    }

    /// Hourly-heavy C896 load: 100 fields every hour for a day, 1.1 TiB.
    pub fn c896_hourly() -> Self {
        let bytes = (1.1 * TIB / 2400.0).round() as u64;
        DiagnosticSchedule::new(24.0, vec![ScheduleEntry::new(100, 1.0, bytes)])
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.run_hours.is_finite() && self.run_hours >= 0.0) {
            return Err(ScheduleError::RunHours);
        }
        for (k, e) in self.entries.iter().enumerate() {
            if e.field_count == 0 {
                return Err(ScheduleError::FieldCount(k));
            }
            if !(e.period_hours.is_finite() && e.period_hours > 0.0) {
                return Err(ScheduleError::Period(k));
            }
            if e.bytes_per_field == 0 {
                return Err(ScheduleError::Bytes(k));
            }
        }
        Ok(())
    }

    /// Σ field_count × ⌊run_hours / period⌋.
    pub fn total_fields(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.field_count) * e.outputs(self.run_hours)).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| u64::from(e.field_count) * e.outputs(self.run_hours) * e.bytes_per_field)
            .sum()
    }

    pub fn largest_field_bytes(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.outputs(self.run_hours) > 0)
            .map(|e| e.bytes_per_field)
            .max()
            .unwrap_or(0)
    }

    /// Every field output, ordered by time, then entry, then field index.
    pub fn emission_events(&self) -> Vec<EmissionEvent> {
        let mut events = Vec::with_capacity(self.total_fields() as usize);
        let mut offset = 0u32;
        for (entry, e) in self.entries.iter().enumerate() {
            for k in 1..=e.outputs(self.run_hours) {
                let time_hours = (k as f64 * e.period_hours).min(self.run_hours);
                events.extend((0..e.field_count).map(|f| EmissionEvent {
                    time_hours,
                    entry,
                    field_index: offset + f,
                    bytes: e.bytes_per_field,
                }));
            }
            offset += e.field_count;
        }
        events.sort_by_key(|ev| (ev.time_key(), ev.entry, ev.field_index));
        events
    }

    pub fn total_gib(&self) -> f64 {
        self.total_bytes() as f64 / GIB
    }

    pub fn total_tib(&self) -> f64 {
        self.total_bytes() as f64 / TIB
    }
}

pub fn total_fields(schedule: &DiagnosticSchedule) -> u64 {
    schedule.total_fields()
}

pub fn total_bytes(schedule: &DiagnosticSchedule) -> u64 {
    schedule.total_bytes()
}

pub fn emission_events(schedule: &DiagnosticSchedule) -> Vec<EmissionEvent> {
    schedule.emission_events()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c192_field_count() {
        assert_eq!(DiagnosticSchedule::c192().total_fields(), 5329);
        assert_eq!(DiagnosticSchedule::c192().emission_events().len(), 5329);
    }

    #[test]
    fn c192_is_about_400_gib() {
        let gib = DiagnosticSchedule::c192().total_gib();
        assert!((gib - 400.0).abs() < 0.01, "{gib}");
    }

    #[test]
    fn c896_is_1_1_tib() {
        let tib = DiagnosticSchedule::c896_hourly().total_tib();
        assert!((tib - 1.1).abs() < 1e-6, "{tib}");
    }

    #[test]
    fn empty_schedule() {
        let s = DiagnosticSchedule::empty(48.0);
        assert_eq!(s.total_fields(), 0);
        assert_eq!(s.total_bytes(), 0);
        assert!(s.emission_events().is_empty());
    }

    #[test]
    fn first_output_is_one_period_in() {
        let s = DiagnosticSchedule::new(48.0, vec![ScheduleEntry::new(1, 12.0, 1)]);
        let times: Vec<f64> = s.emission_events().iter().map(|e| e.time_hours).collect();
        assert_eq!(times, vec![12.0, 24.0, 36.0, 48.0]);
    }

    #[test]
    fn decimal_periods_count_fully() {
        let e = ScheduleEntry::new(1, 0.1, 1);
        assert_eq!(e.outputs(0.3), 3);
        assert_eq!(e.outputs(48.0), 480);
        assert_eq!(ScheduleEntry::new(1, 18.0, 1).outputs(48.0), 2);
        assert_eq!(ScheduleEntry::new(1, 50.0, 1).outputs(48.0), 0);
    }

    #[test]
    fn coincident_times_order_by_entry() {
        let s = DiagnosticSchedule::new(
            9.0,
            vec![ScheduleEntry::new(2, 9.0, 1), ScheduleEntry::new(1, 3.0, 1)],
        );
        let ev = s.emission_events();
        let at9: Vec<(usize, u32)> =
            ev.iter().filter(|e| e.time_hours == 9.0).map(|e| (e.entry, e.field_index)).collect();
        assert_eq!(at9, vec![(0, 0), (0, 1), (1, 2)]);
    }

    #[test]
    fn validation() {
        let mut s = DiagnosticSchedule::c192();
        assert!(s.validate().is_ok());
        s.entries[1].period_hours = 0.0;
        assert_eq!(s.validate(), Err(ScheduleError::Period(1)));
        s.entries[1].period_hours = 1.0;
        s.entries[2].field_count = 0;
        assert_eq!(s.validate(), Err(ScheduleError::FieldCount(2)));
        s.entries[2].field_count = 1;
        s.entries[0].bytes_per_field = 0;
        assert_eq!(s.validate(), Err(ScheduleError::Bytes(0)));
        s.run_hours = f64::NAN;
        assert_eq!(s.validate(), Err(ScheduleError::RunHours));
    }
}
