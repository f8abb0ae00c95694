//! Per-day GPS stores with group commit.
//!
//! A day store is an 8-byte magic followed by fixed 36-byte rows: the
//! 32-byte [`GpsFix`] record plus its crc32. Rows are strictly ascending by
//! timestamp, so range lookups binary-search the file. Appends are buffered
//! and made durable together once `commit_rows` rows are pending or the
//! oldest pending row is `commit_window` old.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use avs_core::faults::Faults;
use avs_core::{CalendarDay, GpsFix, Modality, TimestampMs};
use parking_lot::Mutex;

use crate::error::{Error, IoAt, Result};
use crate::fsutil::{create_dir_durable, fsync_dir};

pub const DAY_MAGIC: [u8; 8] = *b"AVSGPS01";
pub const ROW_LEN: u64 = 36;
const HEADER_LEN: u64 = DAY_MAGIC.len() as u64;

pub fn encode_row(fix: &GpsFix) -> [u8; ROW_LEN as usize] {
    let mut row = [0u8; ROW_LEN as usize];
    let rec = fix.to_record();
    row[..32].copy_from_slice(&rec);
    row[32..].copy_from_slice(&crc32fast::hash(&rec).to_le_bytes());
    row
}

fn decode_row(path: &Path, row: &[u8]) -> Result<GpsFix> {
    let crc = u32::from_le_bytes(row[32..36].try_into().unwrap());
    if crc32fast::hash(&row[..32]) != crc {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            reason: "gps row checksum mismatch".into(),
        });
    }
    Ok(GpsFix::from_record(&row[..32])?)
}

/// Read access to a day store holding `rows` committed rows.
#[derive(Debug)]
pub struct DayReader {
    path: PathBuf,
    file: File,
    rows: u64,
}

impl DayReader {
    /// Opens a store; `rows` limits the view to a committed prefix.
    pub fn open(path: &Path, rows: Option<u64>) -> Result<Self> {
        let file = File::open(path).at(path)?;
        let len = file.metadata().at(path)?.len();
        let mut magic = [0u8; 8];
        if len < HEADER_LEN {
            return Err(Error::Integrity {
                path: path.to_path_buf(),
                reason: "gps store shorter than its header".into(),
            });
        }
        file.read_exact_at(&mut magic, 0).at(path)?;
        if magic != DAY_MAGIC {
            return Err(Error::Integrity {
                path: path.to_path_buf(),
                reason: "bad gps store magic".into(),
            });
        }
        let on_disk = (len - HEADER_LEN) / ROW_LEN;
        Ok(DayReader {
            path: path.to_path_buf(),
            file,
            rows: rows.map_or(on_disk, |r| r.min(on_disk)),
        })
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Raw 36-byte rows `[lo, hi)`.
    pub fn read_raw(&self, lo: u64, hi: u64) -> Result<Vec<u8>> {
        let hi = hi.min(self.rows);
        if lo >= hi {
            return Ok(Vec::new());
        }
        let mut buf = vec![0u8; ((hi - lo) * ROW_LEN) as usize];
        self.file
            .read_exact_at(&mut buf, HEADER_LEN + lo * ROW_LEN)
            .at(&self.path)?;
        Ok(buf)
    }

    pub fn row(&self, i: u64) -> Result<GpsFix> {
        decode_row(&self.path, &self.read_raw(i, i + 1)?)
    }

    /// Checked fixes `[lo, hi)`.
    pub fn fixes(&self, lo: u64, hi: u64) -> Result<Vec<GpsFix>> {
        self.read_raw(lo, hi)?
            .chunks_exact(ROW_LEN as usize)
            .map(|r| decode_row(&self.path, r))
            .collect()
    }

    fn ts_at(&self, i: u64) -> Result<TimestampMs> {
        Ok(self.row(i)?.ts)
    }

    /// Index of the first row with ts >= `t` (or with ts > `t` if `after`).
    fn bound(&self, t: TimestampMs, after: bool) -> Result<u64> {
        let (mut lo, mut hi) = (0, self.rows);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let ts = self.ts_at(mid)?;
            if ts < t || (after && ts == t) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Row span `[lo, hi)` with `t0 <= ts <= t1`.
    pub fn span(&self, t0: TimestampMs, t1: TimestampMs) -> Result<(u64, u64)> {
        Ok((self.bound(t0, false)?, self.bound(t1, true)?))
    }

    pub fn contains(&self, ts: TimestampMs) -> Result<bool> {
        let i = self.bound(ts, false)?;
        Ok(i < self.rows && self.ts_at(i)? == ts)
    }

    /// Every row, checked, plus first/last timestamps.
    pub fn verify_all(&self) -> Result<Option<(TimestampMs, TimestampMs)>> {
        let fixes = self.fixes(0, self.rows)?;
        if fixes.windows(2).any(|w| w[0].ts >= w[1].ts) {
            return Err(Error::Integrity {
                path: self.path.clone(),
                reason: "gps rows out of order".into(),
            });
        }
        Ok(fixes.first().map(|f| (f.ts, fixes.last().unwrap().ts)))
    }
}

#[derive(Debug)]
struct OpenDay {
    path: PathBuf,
    file: File,
    committed: u64,
    last: Option<TimestampMs>,
}

#[derive(Debug, Default)]
struct State {
    days: BTreeMap<CalendarDay, OpenDay>,
    pending: Vec<(CalendarDay, GpsFix)>,
    oldest_pending: Option<Instant>,
}

#[derive(Debug)]
pub struct GpsStore {
    dir: PathBuf,
    commit_rows: usize,
    commit_window: Duration,
    faults: Faults,
    state: Mutex<State>,
}

/// Outcome of a single append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Appended {
    /// Rows made durable by this call (0 if the row is still pending).
    pub committed_rows: usize,
}

pub fn day_file_name(day: CalendarDay) -> String {
    format!("{day}.db")
}

impl GpsStore {
    /// Opens every day store under `dir`, trimming torn trailing rows.
    pub(crate) fn open(dir: &Path, commit_rows: usize, commit_window: Duration, faults: Faults) -> Result<(Self, u64)> {
        create_dir_durable(dir)?;
        let mut state = State::default();
        let mut trimmed = 0;
        for entry in fs::read_dir(dir).at(dir)? {
            let entry = entry.at(dir)?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let path = entry.path();
            if name.ends_with(".tmp") {
                fs::remove_file(&path).at(&path)?;
                continue;
            }
            let Some(day) = name.strip_suffix(".db").and_then(|d| d.parse::<CalendarDay>().ok()) else {
                tracing::warn!(path = %path.display(), "ignoring foreign file in gps dir");
                continue;
            };
            let (open, cut) = Self::recover_day(&path)?;
            trimmed += cut;
            state.days.insert(day, open);
        }
        let store = GpsStore {
            dir: dir.to_path_buf(),
            commit_rows: commit_rows.max(1),
            commit_window,
            faults,
            state: Mutex::new(state),
        };
        Ok((store, trimmed))
    }

    /// Keeps the longest prefix of intact, ascending rows.
    fn recover_day(path: &Path) -> Result<(OpenDay, u64)> {
        let file = OpenOptions::new().read(true).append(true).open(path).at(path)?;
        let len = file.metadata().at(path)?.len();
        if len < HEADER_LEN {
            // crashed while creating; rewrite the header
            file.set_len(0).at(path)?;
            (&file).write_all(&DAY_MAGIC).at(path)?;
            file.sync_all().at(path)?;
            return Ok((
                OpenDay {
                    path: path.to_path_buf(),
                    file,
                    committed: 0,
                    last: None,
                },
                len,
            ));
        }
        let reader = DayReader::open(path, None)?;
        let raw = reader.read_raw(0, reader.rows())?;
        let mut good = 0u64;
        let mut last = None;
        for row in raw.chunks_exact(ROW_LEN as usize) {
            match decode_row(path, row) {
                Ok(fix) if last.is_none_or(|l| fix.ts > l) => {
                    last = Some(fix.ts);
                    good += 1;
                }
                _ => break,
            }
        }
        let keep = HEADER_LEN + good * ROW_LEN;
        if keep < len {
            tracing::warn!(path = %path.display(), bytes = len - keep, "trimming gps store tail");
            file.set_len(keep).at(path)?;
            file.sync_all().at(path)?;
        }
        Ok((
            OpenDay {
                path: path.to_path_buf(),
                file,
                committed: good,
                last,
            },
            len - keep,
        ))
    }

    pub fn day_path(&self, day: CalendarDay) -> PathBuf {
        self.dir.join(day_file_name(day))
    }

    fn open_day<'a>(&self, days: &'a mut BTreeMap<CalendarDay, OpenDay>, day: CalendarDay) -> Result<&'a mut OpenDay> {
        if !days.contains_key(&day) {
            let path = self.day_path(day);
            let tmp = self.dir.join(format!("{}.tmp", day_file_name(day)));
            crate::fsutil::write_synced(&tmp, &DAY_MAGIC)?;
            fs::rename(&tmp, &path).at(&path)?;
            fsync_dir(&self.dir)?;
            let file = OpenOptions::new().read(true).append(true).open(&path).at(&path)?;
            days.insert(
                day,
                OpenDay {
                    path,
                    file,
                    committed: 0,
                    last: None,
                },
            );
        }
        Ok(days.get_mut(&day).unwrap())
    }

    /// Queues `fix`, committing the pending batch when a threshold is hit.
    pub fn append(&self, fix: &GpsFix) -> Result<Appended> {
        fix.validate()?;
        let day = fix.ts.day();
        let mut st = self.state.lock();
        let pending_last = st.pending.iter().rev().find(|(d, _)| *d == day).map(|(_, f)| f.ts);
        let committed_last = st.days.get(&day).and_then(|d| d.last);
        if let Some(last) = pending_last.or(committed_last) {
            if fix.ts <= last {
                let dup = fix.ts == last
                    || st.pending.iter().any(|(_, f)| f.ts == fix.ts)
                    || match st.days.get(&day) {
                        Some(d) => DayReader::open(&d.path, Some(d.committed))?.contains(fix.ts)?,
                        None => false,
                    };
                return Err(if dup {
                    Error::Duplicate {
                        modality: Modality::Gps,
                        ts: fix.ts,
                    }
                } else {
                    Error::TimestampRegression {
                        modality: Modality::Gps,
                        ts: fix.ts,
                        last,
                    }
                });
            }
        }
        st.pending.push((day, *fix));
        let now = Instant::now();
        let oldest = *st.oldest_pending.get_or_insert(now);
        let committed_rows = if st.pending.len() >= self.commit_rows || now.duration_since(oldest) >= self.commit_window {
            self.commit_locked(&mut st)?
        } else {
            0
        };
        Ok(Appended { committed_rows })
    }

    /// Commits if the oldest pending row has waited a full window.
    pub fn tick(&self) -> Result<usize> {
        let mut st = self.state.lock();
        match st.oldest_pending {
            Some(t) if t.elapsed() >= self.commit_window => self.commit_locked(&mut st),
            _ => Ok(0),
        }
    }

    /// Time until the pending batch is due, if any.
    pub fn next_deadline(&self) -> Option<Duration> {
        let st = self.state.lock();
        st.oldest_pending
            .map(|t| self.commit_window.saturating_sub(t.elapsed()))
    }

    pub fn flush(&self) -> Result<usize> {
        let mut st = self.state.lock();
        self.commit_locked(&mut st)
    }

    pub fn pending(&self) -> usize {
        self.state.lock().pending.len()
    }

    fn commit_locked(&self, st: &mut State) -> Result<usize> {
        if st.pending.is_empty() {
            return Ok(0);
        }
        let pending = std::mem::take(&mut st.pending);
        st.oldest_pending = None;
        let mut by_day: BTreeMap<CalendarDay, Vec<u8>> = BTreeMap::new();
        for (day, fix) in &pending {
            by_day.entry(*day).or_default().extend_from_slice(&encode_row(fix));
        }
        for (day, bytes) in by_day {
            let res = self.commit_day(&mut st.days, day, &bytes);
            if let Err(e) = res {
                // rows of this and later days stay queued for the next attempt
                st.pending = pending.iter().filter(|(d, _)| *d >= day).copied().collect();
                st.oldest_pending = Some(Instant::now());
                return Err(e);
            }
            let open = st.days.get_mut(&day).expect("day opened by commit_day");
            open.committed += bytes.len() as u64 / ROW_LEN;
            open.last = pending.iter().rev().find(|(d, _)| *d == day).map(|(_, f)| f.ts);
        }
        Ok(pending.len())
    }

    fn commit_day(&self, days: &mut BTreeMap<CalendarDay, OpenDay>, day: CalendarDay, bytes: &[u8]) -> Result<()> {
        let open = self.open_day(days, day)?;
        let before = HEADER_LEN + open.committed * ROW_LEN;
        // drop rows left behind by an earlier failed commit
        if open.file.metadata().at(&open.path)?.len() != before {
            open.file.set_len(before).at(&open.path)?;
        }
        let res = (|| {
            (&open.file).write_all(bytes).at(&open.path)?;
            self.faults.hit("gps.rows_written")?;
            open.file.sync_data().at(&open.path)?;
            self.faults.hit("gps.rows_synced")?;
            Ok::<(), Error>(())
        })();
        if let Err(e) = &res {
            if !e.is_injected() {
                let _ = open.file.set_len(before);
            }
        }
        res
    }

    pub fn days(&self) -> Vec<CalendarDay> {
        self.state.lock().days.keys().copied().collect()
    }

    /// Path and committed row count of a day store.
    pub fn snapshot(&self, day: CalendarDay) -> Option<(PathBuf, u64)> {
        self.state.lock().days.get(&day).map(|d| (d.path.clone(), d.committed))
    }

    /// Total committed bytes and rows.
    pub fn usage(&self) -> (u64, u64) {
        let st = self.state.lock();
        st.days.values().fold((0, 0), |(b, r), d| {
            (b + HEADER_LEN + d.committed * ROW_LEN, r + d.committed)
        })
    }

    /// Commits pending rows so `day` is complete on disk, returning its snapshot.
    pub fn seal(&self, day: CalendarDay) -> Result<Option<(PathBuf, u64)>> {
        let mut st = self.state.lock();
        if st.pending.iter().any(|(d, _)| *d == day) {
            self.commit_locked(&mut st)?;
        }
        Ok(st.days.get(&day).map(|d| (d.path.clone(), d.committed)))
    }

    /// Deletes a day store after archival.
    pub fn remove_day(&self, day: CalendarDay) -> Result<()> {
        let mut st = self.state.lock();
        if let Some(d) = st.days.remove(&day) {
            match fs::remove_file(&d.path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(&d.path, e)),
            }
            fsync_dir(&self.dir)?;
        }
        Ok(())
    }
}

impl Drop for GpsStore {
    fn drop(&mut self) {
        let st = self.state.get_mut();
        if !st.pending.is_empty() {
            let mut st = std::mem::take(st);
            if let Err(e) = self.commit_locked(&mut st) {
                tracing::warn!(error = %e, "gps rows lost at shutdown");
            }
            *self.state.get_mut() = st;
        }
    }
}
