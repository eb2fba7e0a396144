//! Result persistence: append-only line-delimited JSON records, one file per
//! (system, workload), plus the output-directory lock.
//!
//! Appends are line-atomic, so an interrupted sweep leaves a readable file
//! and the missing (concurrency, repetition) cells can be computed from what
//! is already on disk.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

use kvbench_core::metrics::RunResult;

pub struct ResultStore {
    results_dir: PathBuf,
}

impl ResultStore {
    pub fn open(output_dir: &Path) -> anyhow::Result<Self> {
        let results_dir = output_dir.join("results");
        fs::create_dir_all(&results_dir)
            .with_context(|| format!("creating {}", results_dir.display()))?;
        Ok(Self { results_dir })
    }

    fn file_for(&self, system: &str, workload: &str) -> PathBuf {
        self.results_dir.join(format!("{system}__{workload}.jsonl"))
    }

    pub fn append(&self, result: &RunResult) -> anyhow::Result<()> {
        let path = self.file_for(&result.system, &result.workload);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut line = result.to_json_line();
        line.push('\n');
        file.write_all(line.as_bytes())
            .with_context(|| format!("appending to {}", path.display()))?;
        file.flush()?;
        Ok(())
    }

    /// Every persisted record, ordered by file name then file position.
    pub fn load_all(&self) -> anyhow::Result<Vec<RunResult>> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.results_dir)
            .with_context(|| format!("reading {}", self.results_dir.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        let mut results = Vec::new();
        for path in paths {
            let raw = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            for (lineno, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record = RunResult::from_json_line(line).with_context(|| {
                    format!("{}:{}", path.display(), lineno + 1)
                })?;
                results.push(record);
            }
        }
        Ok(results)
    }

    /// (concurrency, repetition) cells already persisted for one grid.
    pub fn existing_cells(
        &self,
        system: &str,
        workload: &str,
    ) -> anyhow::Result<HashSet<(u32, u32)>> {
        let path = self.file_for(system, workload);
        if !path.exists() {
            return Ok(HashSet::new());
        }
        let raw =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut cells = HashSet::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = RunResult::from_json_line(line)
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
            cells.insert((record.concurrency, record.repetition));
        }
        Ok(cells)
    }
}

/// Exclusive-creation lock file guarding an output directory against
/// concurrent writers. Removed on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(output_dir: &Path) -> anyhow::Result<DirLock> {
        fs::create_dir_all(output_dir)
            .with_context(|| format!("creating {}", output_dir.display()))?;
        let path = output_dir.join(".kvbench.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(anyhow::anyhow!(
                "output directory is locked by another invocation ({} exists; remove it if stale)",
                path.display()
            )),
            Err(e) => Err(e).with_context(|| format!("creating lock {}", path.display())),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kvbench_core::metrics::{
        RecorderMode, RunParams, SeedRecord, SCHEMA_VERSION,
    };

    pub(crate) fn sample_result(system: &str, workload: &str, concurrency: u32, repetition: u32) -> RunResult {
        let ops = 1000;
        let elapsed = 2.0;
        RunResult {
            schema_version: SCHEMA_VERSION,
            system: system.to_string(),
            workload: workload.to_string(),
            concurrency,
            repetition,
            params: RunParams {
                set_ratio: 0.5,
                get_ratio: 0.5,
                skew: 0.9,
                key_count: 100,
                value_size: 64,
                duration_secs: 3.0,
                warmup_secs: 1.0,
                pipeline_depth: 1,
            },
            ops_total: ops,
            gets_total: ops / 2,
            sets_total: ops - ops / 2,
            errors_total: 0,
            misses_total: 0,
            commands_sent: ops + 50,
            replies_received: ops + 50,
            commands_lost: 0,
            connections_dropped: 0,
            elapsed_measured_s: elapsed,
            throughput_ops_s: ops as f64 / elapsed,
            p50_us: 100,
            p99_us: 450,
            p999_us: 900,
            latency_mode: RecorderMode::Exact,
            overflow_samples: 0,
            warmup_ops: 50,
            warmup_ops_per_sec: vec![50, 0],
            resource_series: vec![],
            failed: false,
            warnings: vec![],
            seed_record: SeedRecord {
                base_seed: 42,
                run_seed: 7,
            },
        }
    }

    #[test]
    fn append_load_round_trip_is_field_exact() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::open(dir.path()).unwrap();
        let a = sample_result("base", "A", 50, 1);
        let b = sample_result("cand", "A", 50, 1);
        store.append(&a).unwrap();
        store.append(&b).unwrap();
        let loaded = store.load_all().unwrap();
        assert_eq!(loaded.len(), 2);
        // Files scan in name order: base__A before cand__A.
        assert_eq!(loaded[0], a);
        assert_eq!(loaded[1], b);
    }

    #[test]
    fn existing_cells_reflect_appends() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::open(dir.path()).unwrap();
        assert!(store.existing_cells("base", "A").unwrap().is_empty());
        store.append(&sample_result("base", "A", 50, 1)).unwrap();
        store.append(&sample_result("base", "A", 100, 2)).unwrap();
        let cells = store.existing_cells("base", "A").unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells.contains(&(50, 1)));
        assert!(cells.contains(&(100, 2)));
    }

    #[test]
    fn lock_excludes_second_holder() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(lock);
        let _relock = DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn corrupt_record_is_reported_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::open(dir.path()).unwrap();
        store.append(&sample_result("base", "A", 50, 1)).unwrap();
        let path = dir.path().join("results").join("base__A.jsonl");
        let mut raw = fs::read_to_string(&path).unwrap();
        raw.push_str("{not json\n");
        fs::write(&path, raw).unwrap();
        let err = store.load_all().unwrap_err().to_string();
        assert!(err.contains(":2"), "error should cite line 2: {err}");
    }
}
