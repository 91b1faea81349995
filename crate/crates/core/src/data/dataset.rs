use std::collections::{BTreeSet, HashMap};

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gsod::StationRecord;
use super::store::RecordStore;
use super::{NormStats, Variable};
use crate::error::{Error, Result};
use crate::snapshot::{Sample, StationSnapshot};

/// Inclusive calendar-day interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Validation(format!(
                "date range {start}..{end} is reversed"
            )));
        }
        Ok(DateRange { start, end })
    }

    /// January 1 through December 31 of `first..=last`.
    pub fn years(first: i32, last: i32) -> Self {
        DateRange {
            start: NaiveDate::from_ymd_opt(first, 1, 1).expect("valid year"),
            end: NaiveDate::from_ymd_opt(last, 12, 31).expect("valid year"),
        }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn n_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        self.start.iter_days().take(self.n_days())
    }
}

/// Temporal train / validation / test partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: DateRange,
    pub val: DateRange,
    pub test: DateRange,
}

impl Default for Splits {
    fn default() -> Self {
        Splits {
            train: DateRange::years(2017, 2022),
            val: DateRange::years(2023, 2023),
            test: DateRange::years(2024, 2024),
        }
    }
}

/// Number of consecutive input and forecast days per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub input_days: usize,
    pub output_days: usize,
}

impl Window {
    pub const SINGLE: Window = Window {
        input_days: 1,
        output_days: 1,
    };

    pub fn span(&self) -> usize {
        self.input_days + self.output_days
    }
}

impl Default for Window {
    fn default() -> Self {
        Self::SINGLE
    }
}

/// Station accounting for one snapshot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SnapshotReport {
    pub stations: usize,
    /// Extra records for a station already present that day.
    pub duplicates: usize,
    /// Records without a usable value for the variable.
    pub missing: usize,
}

/// Stations reporting a valid `variable` value on `date`, sorted by id.
///
/// When a station appears twice the first record wins. Values are
/// normalized when `norm` is given.
pub fn build_snapshot(
    records: &[StationRecord],
    date: NaiveDate,
    variable: Variable,
    norm: Option<NormStats>,
) -> Result<(StationSnapshot, SnapshotReport)> {
    let mut day: Vec<&StationRecord> = records.iter().filter(|r| r.date == date).collect();
    day.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    let mut report = SnapshotReport::default();
    let (mut ids, mut coords, mut values) = (Vec::new(), Vec::new(), Vec::new());
    let mut last: Option<&str> = None;
    for r in day {
        if last == Some(r.station_id.as_str()) {
            report.duplicates += 1;
            continue;
        }
        last = Some(&r.station_id);
        match r.value(variable).filter(|&v| variable.in_bounds(v)) {
            Some(v) => {
                ids.push(r.station_id.clone());
                coords.push(r.coord);
                values.push(norm.map_or(v, |n| n.normalize(v)));
            }
            None => report.missing += 1,
        }
    }
    if ids.is_empty() {
        return Err(Error::Empty(format!(
            "no station reports {variable} on {date}"
        )));
    }
    if report.duplicates > 0 {
        log::warn!(
            "{date}: {} duplicate station records ignored",
            report.duplicates
        );
    }
    report.stations = ids.len();
    Ok((
        StationSnapshot::new(date, variable, ids, coords, values)?,
        report,
    ))
}

/// Samples of one variable in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleIndex {
    pub variable: Variable,
    pub window: Window,
    pub samples: Vec<Sample>,
}

impl SampleIndex {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Restricts every day to stations satisfying `keep`; samples left with
    /// an empty day are dropped.
    pub fn filter_stations(&self, keep: impl Fn(&str) -> bool) -> SampleIndex {
        let samples = self
            .samples
            .iter()
            .map(|s| s.filter(&keep))
            .filter(|s| s.validate().is_ok())
            .collect();
        SampleIndex {
            variable: self.variable,
            window: self.window,
            samples,
        }
    }
}

/// One sample per run of `window.span()` consecutive days inside `range`
/// in which every day has at least one reporting station.
pub fn build_dataset(
    store: &RecordStore,
    variable: Variable,
    range: DateRange,
    window: Window,
) -> Result<SampleIndex> {
    if window.input_days == 0 || window.output_days == 0 {
        return Err(Error::Config(
            "windows need at least one input and one output day".into(),
        ));
    }
    let mut cache: HashMap<NaiveDate, Option<StationSnapshot>> = HashMap::new();
    let mut snapshot = |d: NaiveDate| -> Option<StationSnapshot> {
        cache
            .entry(d)
            .or_insert_with(|| {
                build_snapshot(store.day(d), d, variable, None)
                    .ok()
                    .map(|(s, _)| s)
            })
            .clone()
    };
    let span = window.span();
    let mut samples = Vec::new();
    if range.n_days() >= span {
        for start in range.days().take(range.n_days() - span + 1) {
            let days: Option<Vec<StationSnapshot>> = (0..span as u64)
                .map(|i| snapshot(start + Days::new(i)))
                .collect();
            if let Some(mut days) = days {
                let targets = days.split_off(window.input_days);
                samples.push(Sample {
                    inputs: days,
                    targets,
                });
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::Empty(format!(
            "no {variable} samples between {} and {}",
            range.start, range.end
        )));
    }
    Ok(SampleIndex {
        variable,
        window,
        samples,
    })
}

/// Seeded partition of the distinct ids; the first set gets
/// `ceil(fraction * n)` of them.
pub fn split_stations<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Validation(format!(
            "split fraction {fraction} not in (0, 1)"
        )));
    }
    let mut all: Vec<&str> = ids
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_a = (fraction * all.len() as f64).ceil() as usize;
    let a = all[..n_a].iter().map(|s| s.to_string()).collect();
    let b = all[n_a..].iter().map(|s| s.to_string()).collect();
    Ok((a, b))
}

/// Population mean and standard deviation (floored at 1e-6) of every valid
/// station-day value inside `range`.
pub fn compute_norm_stats(
    records: &[StationRecord],
    variable: Variable,
    range: DateRange,
) -> Result<NormStats> {
    let values = records
        .iter()
        .filter(|r| range.contains(r.date))
        .filter_map(|r| r.value(variable))
        .filter(|&v| variable.in_bounds(v));
    norm_stats_of(values).ok_or_else(|| {
        Error::Empty(format!(
            "fewer than two {variable} values between {} and {}",
            range.start, range.end
        ))
    })
}

pub(crate) fn norm_stats_of(values: impl Iterator<Item = f64>) -> Option<NormStats> {
    // Welford accumulation keeps the variance accurate for large offsets.
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    (n >= 2).then(|| NormStats {
        mean,
        std: (m2 / n as f64).sqrt().max(1e-6),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::make_geo;

    fn rec(id: &str, date: NaiveDate, max: Option<f64>, slp: Option<f64>) -> StationRecord {
        let mut values = [None; 6];
        values[Variable::Max.index()] = max;
        values[Variable::Slp.index()] = slp;
        StationRecord {
            station_id: id.into(),
            date,
            coord: make_geo(id.len() as f64, 10.0).unwrap(),
            values,
        }
    }

    fn day(n: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, n).unwrap()
    }

    #[test]
    fn snapshot_filters_and_dedups() {
        let recs = vec![
            rec("c", day(1), Some(280.0), Some(1000.0)),
            rec("a", day(1), Some(281.0), None),
            rec("b", day(1), Some(282.0), Some(1010.0)),
            rec("b", day(1), Some(999.0), Some(1020.0)),
            rec("d", day(1), Some(400.0), Some(1001.0)),
            rec("e", day(2), Some(283.0), Some(1002.0)),
        ];
        let (s, rep) = build_snapshot(&recs[..3], day(1), Variable::Slp, None).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.station_ids(), &["b".to_string(), "c".to_string()]);
        assert_eq!(rep.missing, 1);

        let (s, rep) = build_snapshot(&recs, day(1), Variable::Max, None).unwrap();
        assert_eq!(s.station_ids(), &["a", "b", "c"]);
        assert_eq!(s.values(), &[281.0, 282.0, 280.0]);
        assert_eq!(rep.duplicates, 1);
        // 400 K is out of bounds
        assert_eq!(rep.missing, 1);

        let norm = NormStats {
            mean: 280.0,
            std: 2.0,
        };
        let (s, _) = build_snapshot(&recs, day(1), Variable::Max, Some(norm)).unwrap();
        assert_eq!(s.values(), &[0.5, 1.0, 0.0]);
        assert!(build_snapshot(&recs, day(3), Variable::Max, None).is_err());
    }

    fn store_with_days(days: &[u32]) -> RecordStore {
        RecordStore::new(
            days.iter()
                .map(|&d| rec("s1", day(d), Some(280.0 + d as f64), None))
                .collect(),
        )
    }

    #[test]
    fn sample_counting() {
        let range = DateRange::new(day(1), day(10)).unwrap();
        let s = build_dataset(
            &store_with_days(&[1, 2, 3]),
            Variable::Max,
            range,
            Window::SINGLE,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.samples[0].inputs[0].values(), &[281.0]);
        assert_eq!(s.samples[0].targets[0].values(), &[282.0]);

        let s = build_dataset(
            &store_with_days(&[1, 2, 4, 5]),
            Variable::Max,
            range,
            Window::SINGLE,
        )
        .unwrap();
        let dates: Vec<_> = s.samples.iter().map(|x| x.issue_date()).collect();
        assert_eq!(dates, vec![day(1), day(4)]);

        let all: Vec<u32> = (1..=10).collect();
        let w = Window {
            input_days: 3,
            output_days: 3,
        };
        let s = build_dataset(&store_with_days(&all), Variable::Max, range, w).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.samples[4].targets[2].date(), day(10));
        assert!(
            build_dataset(&store_with_days(&[1]), Variable::Max, range, Window::SINGLE).is_err()
        );
    }

    #[test]
    fn station_split() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let (a, b) = split_stations(ids.iter().map(String::as_str), 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        assert!(a.is_disjoint(&b));
        assert_eq!(a.union(&b).count(), 10);
        let again = split_stations(ids.iter().map(String::as_str), 0.5, 3).unwrap();
        assert_eq!(again.0, a);
        let other = split_stations(ids.iter().map(String::as_str), 0.5, 4).unwrap();
        assert_ne!(other.0, a);
        let eleven: Vec<String> = (0..11).map(|i| i.to_string()).collect();
        let (a, _) = split_stations(eleven.iter().map(String::as_str), 0.5, 0).unwrap();
        assert_eq!(a.len(), 6);
        assert!(split_stations(["x"], 1.0, 0).is_err());
    }

    #[test]
    fn norm_stats() {
        let all = DateRange::years(2024, 2024);
        let recs = vec![
            rec("a", day(1), Some(200.0), None),
            rec("b", day(1), Some(202.0), None),
        ];
        let n = compute_norm_stats(&recs, Variable::Max, all).unwrap();
        assert_eq!((n.mean, n.std), (201.0, 1.0));
        let flat = vec![
            rec("a", day(1), Some(250.0), None),
            rec("b", day(2), Some(250.0), None),
        ];
        assert_eq!(
            compute_norm_stats(&flat, Variable::Max, all).unwrap().std,
            1e-6
        );
        assert!(compute_norm_stats(&recs[..1], Variable::Max, all).is_err());
        let outside = DateRange::years(2023, 2023);
        assert!(compute_norm_stats(&recs, Variable::Max, outside).is_err());
    }
}
