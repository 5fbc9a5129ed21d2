//! Demonstration data: PD walks split into train/val/test files and cut into
//! fixed-length overlapping windows.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{run_closed_loop, PdController, RunLog, SimConfig, TickRecord};
use crate::plant::SlopePreset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub name: String,
    pub split: Split,
    pub log: RunLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub files: Vec<DatasetFile>,
    /// Window length in ticks.
    pub seq_len: usize,
    pub stride: usize,
}

/// Overlapping windows over one run log.
#[derive(Debug, Clone)]
pub struct Windows<'a> {
    records: &'a [TickRecord],
    seq_len: usize,
    stride: usize,
    next: usize,
    count: usize,
}

impl<'a> Windows<'a> {
    pub fn count(&self) -> usize {
        self.count
    }
}

impl<'a> Iterator for Windows<'a> {
    type Item = &'a [TickRecord];

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let start = self.next * self.stride;
        self.next += 1;
        Some(&self.records[start..start + self.seq_len])
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Windows<'_> {}

pub fn window_count(len: usize, seq_len: usize, stride: usize) -> Result<usize> {
    if seq_len == 0 || stride == 0 {
        return Err(Error::Config("seq_len and stride must be >= 1".into()));
    }
    if len < seq_len {
        return Err(Error::TooShort { len, need: seq_len });
    }
    Ok((len - seq_len) / stride + 1)
}

/// Window `k` starts at tick `k * stride`.
pub fn window(log: &RunLog, seq_len: usize, stride: usize) -> Result<Windows<'_>> {
    let count = window_count(log.len(), seq_len, stride)?;
    Ok(Windows {
        records: &log.records,
        seq_len,
        stride,
        next: 0,
        count,
    })
}

/// A batch of windows, stored time-major: element `(t, b, k)` of the inputs is
/// at `(t * batch + b) * 5 + k`, and likewise for the two label channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub batch: usize,
    pub seq_len: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
}

impl SequenceBatch {
    pub fn from_windows(windows: &[&[TickRecord]]) -> Result<Self> {
        let batch = windows.len();
        if batch == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let seq_len = windows[0].len();
        if windows.iter().any(|w| w.len() != seq_len) {
            return Err(Error::Shape("windows of unequal length".into()));
        }
        let mut inputs = vec![0.0; seq_len * batch * 5];
        let mut labels = vec![0.0; seq_len * batch * 2];
        for (b, w) in windows.iter().enumerate() {
            for (t, r) in w.iter().enumerate() {
                let i = (t * batch + b) * 5;
                inputs[i..i + 5].copy_from_slice(&r.input().to_array());
                let o = (t * batch + b) * 2;
                labels[o] = r.tau_pk;
                labels[o + 1] = r.tau_pa;
            }
        }
        Ok(Self {
            batch,
            seq_len,
            inputs,
            labels,
        })
    }
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        window_count(self.seq_len.max(1), self.seq_len, self.stride)?;
        for f in &self.files {
            if f.log.len() < self.seq_len {
                return Err(Error::TooShort {
                    len: f.log.len(),
                    need: self.seq_len,
                });
            }
        }
        for split in [Split::Train, Split::Val, Split::Test] {
            if !self.files.iter().any(|f| f.split == split) {
                return Err(Error::Config(format!("dataset has no {split:?} file")));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetFile> {
        self.files.iter().filter(move |f| f.split == split)
    }

    /// All windows of one split, in file order.
    pub fn windows(&self, split: Split) -> Result<Vec<&[TickRecord]>> {
        let mut out = Vec::new();
        for f in self.split(split) {
            out.extend(window(&f.log, self.seq_len, self.stride)?);
        }
        Ok(out)
    }

    pub fn total_ticks(&self) -> usize {
        self.files.iter().map(|f| f.log.len()).sum()
    }

    /// Writes each log as CSV with its sidecar plus `manifest.toml` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for f in &self.files {
            let file = format!("{}.csv", f.name);
            f.log.save(&dir.join(&file))?;
            entries.push(ManifestEntry {
                path: file,
                split: f.split,
            });
        }
        let manifest = Manifest {
            seq_len: self.seq_len,
            stride: self.stride,
            files: entries,
        };
        let path = dir.join("manifest.toml");
        fs::write(&path, toml::to_string(&manifest)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: Manifest = toml::from_str(&text)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let mut files = Vec::new();
        for e in manifest.files {
            let log = RunLog::load(&dir.join(&e.path))?;
            let name = e.path.trim_end_matches(".csv").to_string();
            files.push(DatasetFile {
                name,
                split: e.split,
                log,
            });
        }
        let ds = Dataset {
            files,
            seq_len: manifest.seq_len,
            stride: manifest.stride,
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seq_len: usize,
    pub stride: usize,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub n_walks: usize,
    /// Seconds per walk.
    pub walk_duration: f64,
    /// Per-walk hip speed scale is drawn uniformly from 1 ± this.
    pub speed_jitter: f64,
    pub seq_len: usize,
    pub stride: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            n_walks: 5,
            walk_duration: 70.0,
            speed_jitter: 0.1,
            seq_len: 100,
            stride: 1,
        }
    }
}

/// `n - 2` train files, then one validation and one test file.
pub fn split_for(index: usize, n_walks: usize) -> Split {
    if index + 2 < n_walks {
        Split::Train
    } else if index + 2 == n_walks {
        Split::Val
    } else {
        Split::Test
    }
}

/// Seed of walk `i` given the experiment seed.
pub fn walk_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// Records `n_walks` flat-ground PD walks.
pub fn collect(sim: &SimConfig, cc: &CollectConfig, seed: u64) -> Result<Dataset> {
    if cc.n_walks < 3 {
        return Err(Error::Config("collection needs at least 3 walks".into()));
    }
    let mut files = Vec::with_capacity(cc.n_walks);
    for i in 0..cc.n_walks {
        let ws = walk_seed(seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(ws ^ 0x9e37_79b9_7f4a_7c15);
        let mut walk = sim.clone();
        walk.hip.speed_scale = 1.0 + rng.gen_range(-cc.speed_jitter..=cc.speed_jitter);
        let mut pd = PdController::new(walk.gait.clone());
        let log = run_closed_loop(&mut pd, &walk, SlopePreset::Flat, cc.walk_duration, ws)?;
        files.push(DatasetFile {
            name: format!("walk_{i}"),
            split: split_for(i, cc.n_walks),
            log,
        });
    }
    let ds = Dataset {
        files,
        seq_len: cc.seq_len,
        stride: cc.stride,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::RunMeta;

    fn log_of(len: usize) -> RunLog {
        RunLog {
            meta: RunMeta {
                controller: "pd".into(),
                slope: SlopePreset::Flat,
                seed: 0,
                config_hash: String::new(),
                duration: len as f64 * 0.005,
                ticks: len,
            },
            records: (0..len)
                .map(|i| TickRecord {
                    t: i as f64 * 0.005,
                    e_pk: i as f64,
                    ..Default::default()
                })
                .collect(),
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(window(&log_of(100), 100, 1).unwrap().count(), 1);
        assert_eq!(window_count(14_000, 100, 1).unwrap(), 13_901);
        assert_eq!(window_count(1000, 100, 7).unwrap(), (1000 - 100) / 7 + 1);
        assert!(matches!(
            window(&log_of(50), 100, 1),
            Err(Error::TooShort { len: 50, need: 100 })
        ));
    }

    #[test]
    fn full_scale_counts() {
        // five files totalling ~70k ticks give len - 99 windows each at T = 100
        let lens = [14_016, 14_016, 14_016, 14_016, 14_015];
        assert_eq!(lens.iter().sum::<usize>(), 70_079);
        for len in lens {
            assert_eq!(window_count(len, 100, 1).unwrap(), len - 99);
        }
    }

    #[test]
    fn window_starts_follow_stride() {
        let log = log_of(50);
        let starts: Vec<f64> = window(&log, 10, 3).unwrap().map(|w| w[0].e_pk).collect();
        assert_eq!(starts.len(), (50 - 10) / 3 + 1);
        for (k, s) in starts.iter().enumerate() {
            assert_eq!(*s, (k * 3) as f64);
        }
    }

    #[test]
    fn stride_one_covers_all_but_tail() {
        let log = log_of(60);
        let starts: Vec<usize> = window(&log, 10, 1).unwrap().map(|w| w[0].e_pk as usize).collect();
        assert_eq!(starts, (0..=50).collect::<Vec<_>>());
    }

    #[test]
    fn split_rule() {
        let s: Vec<Split> = (0..5).map(|i| split_for(i, 5)).collect();
        assert_eq!(s, [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test]);
        let s: Vec<Split> = (0..3).map(|i| split_for(i, 3)).collect();
        assert_eq!(s, [Split::Train, Split::Val, Split::Test]);
    }

    #[test]
    fn batch_layout_is_time_major() {
        let a = log_of(5);
        let mut b = log_of(5);
        for r in &mut b.records {
            r.e_pk += 100.0;
            r.tau_pa = -1.0;
        }
        let batch = SequenceBatch::from_windows(&[&a.records[1..4], &b.records[0..3]]).unwrap();
        assert_eq!((batch.batch, batch.seq_len), (2, 3));
        // t = 2, b = 1, channel 0
        assert_eq!(batch.inputs[(2 * 2 + 1) * 5], 102.0);
        assert_eq!(batch.inputs[(2 * 2) * 5], 3.0);
        assert_eq!(batch.labels[(2 * 2 + 1) * 2 + 1], -1.0);
    }

    #[test]
    fn collect_small_is_deterministic_and_disjoint() {
        let cc = CollectConfig {
            n_walks: 3,
            walk_duration: 1.0,
            seq_len: 50,
            ..Default::default()
        };
        let sim = SimConfig::default();
        let a = collect(&sim, &cc, 7).unwrap();
        let b = collect(&sim, &cc, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.files.len(), 3);
        assert_eq!(a.total_ticks(), 600);
        let seeds: Vec<u64> = a.files.iter().map(|f| f.log.meta.seed).collect();
        assert_eq!(seeds, [7, 8, 9]);
        assert_ne!(a.files[0].log.records, a.files[1].log.records);

        let dir = tempfile::tempdir().unwrap();
        let manifest = a.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(&manifest).unwrap(), a);
    }

    #[test]
    fn collect_needs_three_walks() {
        let cc = CollectConfig {
            n_walks: 2,
            walk_duration: 1.0,
            ..Default::default()
        };
        assert!(collect(&SimConfig::default(), &cc, 0).is_err());
    }
}
