//! Dataset manifest and on-disk layout.
//!
//! ```text
//! <data>/manifest.json
//! <data>/<YYYY-MM-DD>/cam1/<YYYYMMDDTHHMMSSZ>.png
//! <data>/<YYYY-MM-DD>/cam2/<YYYYMMDDTHHMMSSZ>.png
//! <data>/<YYYY-MM-DD>/ghi.csv            timestamp,ghi_wm2
//! ```

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SplitBoundaries;
use crate::solar::IrradianceSeries;
use crate::synth::Split;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
const FRAME_TIME_FORMAT: &str = "%Y%m%dT%H%M%SZ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayEntry {
    pub date: NaiveDate,
    pub split: Split,
    /// Frame file names, identical for both cameras.
    pub frames: Vec<String>,
}

impl DayEntry {
    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(self.date.to_string())
    }

    pub fn camera_dir(&self, root: &Path, camera: &str) -> PathBuf {
        self.dir(root).join(camera)
    }

    pub fn ghi_path(&self, root: &Path) -> PathBuf {
        self.dir(root).join("ghi.csv")
    }

    pub fn timestamps(&self) -> Result<Vec<DateTime<Utc>>> {
        self.frames.iter().map(|f| parse_frame_time(f)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub cadence_s: i64,
    pub days: Vec<DayEntry>,
}

pub fn frame_file_name(t: DateTime<Utc>) -> String {
    format!("{}.png", t.format(FRAME_TIME_FORMAT))
}

pub fn parse_frame_time(name: &str) -> Result<DateTime<Utc>> {
    let stem = name
        .strip_suffix(".png")
        .ok_or_else(|| Error::InvalidInput(format!("frame file '{name}' is not a .png")))?;
    NaiveDateTime::parse_from_str(stem, FRAME_TIME_FORMAT)
        .map(|t| t.and_utc())
        .map_err(|e| Error::InvalidInput(format!("frame file '{name}': {e}")))
}

impl DatasetManifest {
    /// Days strictly increasing; every train day precedes every val day,
    /// which precedes every test day; frame lists sorted and on their day.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::InvalidInput(format!("unsupported manifest version {}", self.version)));
        }
        if self.cadence_s <= 0 {
            return Err(Error::InvalidInput("manifest cadence must be positive".into()));
        }
        if let Some(w) = self.days.windows(2).find(|w| w[1].date <= w[0].date) {
            return Err(Error::InvalidInput(format!("manifest days not increasing at {}", w[1].date)));
        }
        let rank = |s: Split| match s {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        };
        if let Some(w) = self.days.windows(2).find(|w| rank(w[1].split) < rank(w[0].split)) {
            return Err(Error::Split(format!(
                "{} ({:?}) follows {} ({:?}); splits must be chronological",
                w[1].date, w[1].split, w[0].date, w[0].split
            )));
        }
        for d in &self.days {
            let ts = d.timestamps()?;
            if let Some(w) = ts.windows(2).find(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(format!("{}: frames not increasing at {}", d.date, w[1])));
            }
            if let Some(t) = ts.iter().find(|t| t.date_naive() != d.date) {
                return Err(Error::InvalidInput(format!("{}: frame {t} belongs to another day", d.date)));
            }
        }
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        self.validate()?;
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn days_in(&self, split: Split) -> impl Iterator<Item = &DayEntry> {
        self.days.iter().filter(move |d| d.split == split)
    }

    /// Midnight UTC of the first validation and first test day. A split
    /// without days starts after the last day.
    pub fn boundaries(&self) -> Result<SplitBoundaries> {
        let after_last = self
            .days
            .last()
            .ok_or_else(|| Error::InsufficientData("manifest lists no days".into()))?
            .date
            .succ_opt()
            .expect("date in range");
        let first = |s: Split| self.days_in(s).next().map(|d| d.date);
        let test = first(Split::Test).unwrap_or(after_last);
        let val = first(Split::Val).unwrap_or(test);
        let midnight = |d: NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        Ok(SplitBoundaries {
            val_start: midnight(val),
            test_start: midnight(test),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GhiRow {
    timestamp: DateTime<Utc>,
    ghi_wm2: f64,
}

pub fn write_ghi_csv(path: &Path, times: &[DateTime<Utc>], ghi: &[f64]) -> Result<()> {
    if times.len() != ghi.len() {
        return Err(Error::shape("ghi csv", times.len(), ghi.len()));
    }
    let mut w = csv::Writer::from_path(path)?;
    for (t, g) in times.iter().zip(ghi) {
        w.serialize(GhiRow {
            timestamp: *t,
            ghi_wm2: *g,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ghi_csv(path: &Path) -> Result<IrradianceSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<GhiRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    IrradianceSeries::new(
        rows.iter().map(|r| r.timestamp).collect(),
        rows.iter().map(|r| r.ghi_wm2).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn day(d: u32, split: Split) -> DayEntry {
        let t = Utc.with_ymd_and_hms(2023, 6, d, 9, 0, 0).unwrap();
        DayEntry {
            date: t.date_naive(),
            split,
            frames: vec![frame_file_name(t), frame_file_name(t + chrono::Duration::seconds(10))],
        }
    }

    fn manifest(days: Vec<DayEntry>) -> DatasetManifest {
        DatasetManifest {
            version: MANIFEST_VERSION,
            cadence_s: 10,
            days,
        }
    }

    #[test]
    fn frame_names_roundtrip() {
        let t = Utc.with_ymd_and_hms(2023, 6, 1, 9, 5, 30).unwrap();
        assert_eq!(frame_file_name(t), "20230601T090530Z.png");
        assert_eq!(parse_frame_time(&frame_file_name(t)).unwrap(), t);
        assert!(parse_frame_time("x.jpg").is_err());
    }

    #[test]
    fn chronological_split_enforced() {
        let ok = manifest(vec![day(1, Split::Train), day(2, Split::Val), day(3, Split::Test)]);
        ok.validate().unwrap();
        let b = ok.boundaries().unwrap();
        assert_eq!(b.val_start, Utc.with_ymd_and_hms(2023, 6, 2, 0, 0, 0).unwrap());
        assert_eq!(b.test_start, Utc.with_ymd_and_hms(2023, 6, 3, 0, 0, 0).unwrap());
        let bad = manifest(vec![day(1, Split::Train), day(2, Split::Test), day(3, Split::Val)]);
        assert!(matches!(bad.validate(), Err(Error::Split(_))));
        let bad = manifest(vec![day(2, Split::Train), day(1, Split::Train)]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(vec![day(1, Split::Train), day(2, Split::Test)]);
        m.save(dir.path()).unwrap();
        assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);
    }
}
