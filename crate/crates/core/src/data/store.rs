use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use chrono::NaiveDate;

use super::gsod::StationRecord;

/// Station-day records sorted by date, then station id.
///
/// The sort key covers every field, so the order (and which of two
/// conflicting duplicates comes first) does not depend on the order in
/// which files were read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordStore {
    records: Vec<StationRecord>,
    days: BTreeMap<NaiveDate, Range<usize>>,
}

fn sort_key(r: &StationRecord) -> (NaiveDate, &str, [u64; 2], [Option<u64>; 6]) {
    (
        r.date,
        r.station_id.as_str(),
        [r.coord.lat().to_bits(), r.coord.lon().to_bits()],
        r.values.map(|v| v.map(f64::to_bits)),
    )
}

impl RecordStore {
    pub fn new(mut records: Vec<StationRecord>) -> Self {
        records.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
        let mut days = BTreeMap::new();
        let mut start = 0;
        for i in 1..=records.len() {
            if i == records.len() || records[i].date != records[start].date {
                days.insert(records[start].date, start..i);
                start = i;
            }
        }
        RecordStore { records, days }
    }

    pub fn records(&self) -> &[StationRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<StationRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one day; empty when nothing was reported.
    pub fn day(&self, date: NaiveDate) -> &[StationRecord] {
        self.days
            .get(&date)
            .map_or(&[], |r| &self.records[r.clone()])
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.days.keys().copied()
    }

    pub fn date_span(&self) -> Option<(NaiveDate, NaiveDate)> {
        Some((*self.days.keys().next()?, *self.days.keys().next_back()?))
    }

    pub fn station_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.station_id.as_str()).collect()
    }

    /// Records whose station id satisfies `keep`.
    pub fn filter_stations(&self, keep: impl Fn(&str) -> bool) -> RecordStore {
        RecordStore::new(
            self.records
                .iter()
                .filter(|r| keep(&r.station_id))
                .cloned()
                .collect(),
        )
    }
}
