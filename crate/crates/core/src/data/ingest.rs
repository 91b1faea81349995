use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use flate2::read::GzDecoder;

use super::cache::{read_cache, write_cache, CacheKey};
use super::gsod::{parse_gsod_file, ParseOutput, ParseReport};
use super::store::RecordStore;
use super::Variable;
use crate::error::{Error, Result};
use crate::par::{map_slice, Execution};

/// Per-year station coverage: mean number of stations reporting each
/// variable per day.
#[derive(Clone, Debug, PartialEq)]
pub struct YearCoverage {
    pub year: i32,
    pub days: usize,
    /// Indexed in [`Variable::ALL`] order.
    pub daily_stations: [f64; 6],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub parse: ParseReport,
    /// Files skipped because their header could not be used.
    pub failed_files: Vec<String>,
    pub years: Vec<YearCoverage>,
    pub from_cache: bool,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.parse;
        writeln!(f, "files           {}", p.files)?;
        writeln!(f, "failed files    {}", self.failed_files.len())?;
        writeln!(f, "rows            {}", p.rows)?;
        writeln!(f, "records         {}", p.records)?;
        writeln!(f, "malformed rows  {}", p.malformed_rows)?;
        writeln!(f, "bad coordinates {}", p.bad_coordinates)?;
        writeln!(f, "missing markers {}", p.sentinels)?;
        writeln!(f, "unparsable      {}", p.unparsable_values)?;
        writeln!(f, "out of bounds   {}", p.out_of_bounds)?;
        if self.from_cache {
            writeln!(f, "(records loaded from cache)")?;
        }
        write!(f, "\n{:>6} {:>5}", "year", "days")?;
        for v in Variable::ALL {
            write!(f, " {:>8}", v.column())?;
        }
        writeln!(f)?;
        for y in &self.years {
            write!(f, "{:>6} {:>5}", y.year, y.days)?;
            for s in y.daily_stations {
                write!(f, " {s:>8.1}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn year_coverage(store: &RecordStore) -> Vec<YearCoverage> {
    let mut out: Vec<YearCoverage> = Vec::new();
    for d in store.dates() {
        if out.last().is_none_or(|y| y.year != d.year()) {
            out.push(YearCoverage {
                year: d.year(),
                days: 0,
                daily_stations: [0.0; 6],
            });
        }
        let y = out.last_mut().expect("pushed above");
        y.days += 1;
        for v in Variable::ALL {
            let n = store
                .day(d)
                .iter()
                .filter(|r| r.value(v).is_some())
                .map(|r| r.station_id.as_str())
                .collect::<BTreeSet<_>>()
                .len();
            y.daily_stations[v.index()] += n as f64;
        }
    }
    for y in &mut out {
        for s in &mut y.daily_stations {
            *s /= y.days as f64;
        }
    }
    out
}

fn is_tar(p: &Path) -> bool {
    let name = p.to_string_lossy().to_ascii_lowercase();
    name.ends_with(".tar") || name.ends_with(".tar.gz") || name.ends_with(".tgz")
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Every `.csv`, `.tar`, `.tar.gz` and `.tgz` file below `dir`, sorted.
pub fn list_input_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if is_csv(&path) || is_tar(&path) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

type FileResult = std::result::Result<ParseOutput, String>;

fn parse_text(bytes: Vec<u8>, name: &str) -> FileResult {
    let text = String::from_utf8_lossy(&bytes);
    parse_gsod_file(&text, name).map_err(|e| e.to_string())
}

fn parse_path(path: &Path) -> Result<Vec<FileResult>> {
    let io = |e: std::io::Error| Error::io(path, e);
    let name = path.display().to_string();
    if !is_tar(path) {
        return Ok(vec![parse_text(std::fs::read(path).map_err(io)?, &name)]);
    }
    let file = File::open(path).map_err(io)?;
    let reader: Box<dyn Read> = if name.to_ascii_lowercase().ends_with(".tar") {
        Box::new(file)
    } else {
        Box::new(GzDecoder::new(file))
    };
    let mut archive = tar::Archive::new(reader);
    let mut out = Vec::new();
    for entry in archive.entries().map_err(io)? {
        let mut entry = entry.map_err(io)?;
        let inner = entry.path().map_err(io)?.into_owned();
        if !entry.header().entry_type().is_file() || !is_csv(&inner) {
            continue;
        }
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes).map_err(io)?;
        out.push(parse_text(bytes, &format!("{name}:{}", inner.display())));
    }
    Ok(out)
}

fn ingest_files(files: &[PathBuf], exec: Execution) -> Result<(RecordStore, IngestReport)> {
    let parsed = map_slice(exec, files, |p| parse_path(p));
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for file in parsed {
        for result in file? {
            match result {
                Ok(out) => {
                    report.parse.merge(&out.report);
                    records.extend(out.records);
                }
                Err(msg) => {
                    log::warn!("skipping {msg}");
                    report.failed_files.push(msg);
                }
            }
        }
    }
    let store = RecordStore::new(records);
    report.years = year_coverage(&store);
    Ok((store, report))
}

/// Parses every GSOD file below `dir`; files are read in parallel when
/// `exec` allows it.
pub fn ingest_dir(dir: &Path, exec: Execution) -> Result<(RecordStore, IngestReport)> {
    let files = list_input_files(dir)?;
    if files.is_empty() {
        return Err(Error::Empty(format!(
            "no GSOD files below {}",
            dir.display()
        )));
    }
    ingest_files(&files, exec)
}

/// Reuses `cache` when it was built from identical files by the same parser
/// version; otherwise ingests `dir` and rewrites the cache.
pub fn load_or_ingest(
    dir: &Path,
    cache: &Path,
    exec: Execution,
) -> Result<(RecordStore, IngestReport)> {
    let files = list_input_files(dir)?;
    if files.is_empty() {
        return Err(Error::Empty(format!(
            "no GSOD files below {}",
            dir.display()
        )));
    }
    let key = CacheKey::for_files(dir, &files)?;
    if cache.exists() {
        match read_cache(cache) {
            Ok((k, store, parse)) if k == key => {
                let years = year_coverage(&store);
                let report = IngestReport {
                    parse,
                    failed_files: Vec::new(),
                    years,
                    from_cache: true,
                };
                return Ok((store, report));
            }
            Ok(_) => log::info!("cache {} is stale; re-ingesting", cache.display()),
            Err(e) => log::warn!("ignoring unreadable cache: {e}"),
        }
    }
    let (store, report) = ingest_files(&files, exec)?;
    write_cache(cache, &key, &store, &report.parse)?;
    Ok((store, report))
}
