//! Columnar binary cache of parsed records.
//!
//! ```text
//! magic            8 bytes "MIGNRECS"
//! parser_version   u32
//! digest           32 bytes, SHA-256 over the source files
//! report_len       u64, then that many bytes of JSON (ParseReport)
//! n_ids            u64, then per id: u32 byte length + UTF-8 bytes
//! n_records        u64, then the columns, each n_records long:
//!                  id index u32 | days since 0001-01-01 i32 | lat f64 |
//!                  lon f64 | six value columns f64 (NaN = missing)
//! ```
//!
//! Integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{Datelike, NaiveDate};
use sha2::{Digest, Sha256};

use super::gsod::{ParseReport, StationRecord};
use super::store::RecordStore;
use crate::error::{Error, Result};
use crate::geo::GeoCoord;

/// Bumped whenever parsing rules change, invalidating old caches.
pub const PARSER_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MIGNRECS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheKey {
    pub parser_version: u32,
    pub digest: [u8; 32],
}

impl CacheKey {
    /// Digest over each file's path relative to `root` and its bytes, in
    /// sorted path order.
    pub fn for_files(root: &Path, files: &[PathBuf]) -> Result<CacheKey> {
        let mut sorted: Vec<&PathBuf> = files.iter().collect();
        sorted.sort();
        let mut hasher = Sha256::new();
        for f in sorted {
            let rel = f.strip_prefix(root).unwrap_or(f);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            let mut file = File::open(f).map_err(|e| Error::io(f, e))?;
            let mut buf = vec![0u8; 1 << 16];
            loop {
                let n = file.read(&mut buf).map_err(|e| Error::io(f, e))?;
                if n == 0 {
                    break;
                }
                hasher.update(&buf[..n]);
            }
        }
        Ok(CacheKey {
            parser_version: PARSER_VERSION,
            digest: hasher.finalize().into(),
        })
    }

    pub fn hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn encode(
    w: &mut impl Write,
    key: &CacheKey,
    store: &RecordStore,
    report: &ParseReport,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(key.parser_version)?;
    w.write_all(&key.digest)?;
    let json = serde_json::to_vec(report).map_err(std::io::Error::other)?;
    w.write_u64::<LittleEndian>(json.len() as u64)?;
    w.write_all(&json)?;

    let mut ids: BTreeMap<&str, u32> = BTreeMap::new();
    for r in store.records() {
        let next = ids.len() as u32;
        ids.entry(&r.station_id).or_insert(next);
    }
    let mut by_index: Vec<&str> = vec![""; ids.len()];
    for (id, &i) in &ids {
        by_index[i as usize] = id;
    }
    w.write_u64::<LittleEndian>(by_index.len() as u64)?;
    for id in by_index {
        w.write_u32::<LittleEndian>(id.len() as u32)?;
        w.write_all(id.as_bytes())?;
    }
    let records = store.records();
    w.write_u64::<LittleEndian>(records.len() as u64)?;
    for r in records {
        w.write_u32::<LittleEndian>(ids[r.station_id.as_str()])?;
    }
    for r in records {
        w.write_i32::<LittleEndian>(r.date.num_days_from_ce())?;
    }
    for r in records {
        w.write_f64::<LittleEndian>(r.coord.lat())?;
    }
    for r in records {
        w.write_f64::<LittleEndian>(r.coord.lon())?;
    }
    for col in 0..6 {
        for r in records {
            w.write_f64::<LittleEndian>(r.values[col].unwrap_or(f64::NAN))?;
        }
    }
    w.flush()
}

pub fn write_cache(
    path: &Path,
    key: &CacheKey,
    store: &RecordStore,
    report: &ParseReport,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode(&mut BufWriter::new(file), key, store, report).map_err(|e| Error::io(path, e))
}

fn read_col<R: Read, T>(
    r: &mut R,
    n: usize,
    mut f: impl FnMut(&mut R) -> std::io::Result<T>,
) -> std::io::Result<Vec<T>> {
    (0..n).map(|_| f(r)).collect()
}

pub fn read_cache(path: &Path) -> Result<(CacheKey, RecordStore, ParseReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    let bad = |m: &str| Error::format(path, m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a record cache"));
    }
    let parser_version = r.read_u32::<LittleEndian>().map_err(io)?;
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest).map_err(io)?;
    let key = CacheKey {
        parser_version,
        digest,
    };
    let len = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let report: ParseReport =
        serde_json::from_slice(&json).map_err(|e| Error::format(path, e.to_string()))?;

    let n_ids = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut ids = Vec::with_capacity(n_ids);
    for _ in 0..n_ids {
        let len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(io)?;
        ids.push(String::from_utf8(buf).map_err(|_| bad("station id is not UTF-8"))?);
    }
    let n = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let id_col = read_col(&mut r, n, |r| r.read_u32::<LittleEndian>()).map_err(io)?;
    let day_col = read_col(&mut r, n, |r| r.read_i32::<LittleEndian>()).map_err(io)?;
    let lat_col = read_col(&mut r, n, |r| r.read_f64::<LittleEndian>()).map_err(io)?;
    let lon_col = read_col(&mut r, n, |r| r.read_f64::<LittleEndian>()).map_err(io)?;
    let mut value_cols = Vec::with_capacity(6);
    for _ in 0..6 {
        value_cols.push(read_col(&mut r, n, |r| r.read_f64::<LittleEndian>()).map_err(io)?);
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let station_id = ids
            .get(id_col[i] as usize)
            .ok_or_else(|| bad("station index out of range"))?
            .clone();
        let date =
            NaiveDate::from_num_days_from_ce_opt(day_col[i]).ok_or_else(|| bad("invalid date"))?;
        let coord = GeoCoord::new(lon_col[i], lat_col[i]).map_err(|_| bad("invalid coordinate"))?;
        let values = std::array::from_fn(|c| Some(value_cols[c][i]).filter(|v| !v.is_nan()));
        records.push(StationRecord {
            station_id,
            date,
            coord,
            values,
        });
    }
    Ok((key, RecordStore::new(records), report))
}
