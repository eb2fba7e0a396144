//! Microbenchmarks for the per-operation hot paths: rank sampling, latency
//! recording, RESP framing, and the significance test.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use kvbench_core::metrics::LatencyRecorder;
use kvbench_core::resp::{read_reply, write_command, Command};
use kvbench_core::rng::SplitMix64;
use kvbench_core::stats::{welch_test, SampleSet};
use kvbench_core::zipf::{ZipfianParams, ZipfianTable};

fn bench_zipf(c: &mut Criterion) {
    let mut group = c.benchmark_group("zipf");
    for &n in &[1_000u64, 100_000, 4_865_899] {
        let table = ZipfianTable::build(ZipfianParams::new(n, 0.9).unwrap()).unwrap();
        group.throughput(Throughput::Elements(1));
        group.bench_with_input(BenchmarkId::new("sample_rank", n), &table, |b, table| {
            let mut rng = SplitMix64::new(7);
            b.iter(|| table.sample_rank(rng.next_f64()).unwrap());
        });
    }
    group.bench_function("build_table_100k", |b| {
        b.iter(|| ZipfianTable::build(ZipfianParams::new(100_000, 0.9).unwrap()).unwrap());
    });
    group.finish();
}

fn bench_recorder(c: &mut Criterion) {
    let mut group = c.benchmark_group("recorder");
    group.throughput(Throughput::Elements(1));
    group.bench_function("record_exact", |b| {
        let mut recorder = LatencyRecorder::new();
        let mut rng = SplitMix64::new(3);
        b.iter(|| recorder.record(Duration::from_nanos(1_000 + rng.next_below(10_000_000))));
    });
    group.bench_function("record_bucketed", |b| {
        let mut recorder = LatencyRecorder::bucketed();
        let mut rng = SplitMix64::new(3);
        b.iter(|| recorder.record(Duration::from_nanos(1_000 + rng.next_below(10_000_000))));
    });
    group.finish();
}

fn bench_resp_codec(c: &mut Criterion) {
    let mut group = c.benchmark_group("resp");
    let key = b"key:4865899".to_vec();
    let value = vec![b'x'; 1024];
    group.throughput(Throughput::Elements(1));
    group.bench_function("encode_set_1k", |b| {
        let mut buf = Vec::with_capacity(1200);
        b.iter(|| {
            buf.clear();
            write_command(&mut buf, &Command::Set(key.clone(), value.clone()));
            buf.len()
        });
    });
    group.bench_function("parse_bulk_reply_1k", |b| {
        let mut frame = format!("${}\r\n", value.len()).into_bytes();
        frame.extend_from_slice(&value);
        frame.extend_from_slice(b"\r\n");
        b.iter(|| {
            let mut cursor = std::io::Cursor::new(frame.as_slice());
            read_reply(&mut cursor).unwrap()
        });
    });
    group.finish();
}

fn bench_welch(c: &mut Criterion) {
    let mut rng = SplitMix64::new(11);
    let a = SampleSet::new("a", (0..5).map(|_| 1e5 + rng.next_f64() * 1e3).collect(), "ops/s");
    let b = SampleSet::new("b", (0..5).map(|_| 1.1e5 + rng.next_f64() * 1e3).collect(), "ops/s");
    c.bench_function("welch_test_n5", |bench| {
        bench.iter(|| welch_test(&a, &b).unwrap());
    });
}

criterion_group!(benches, bench_zipf, bench_recorder, bench_resp_codec, bench_welch);
criterion_main!(benches);
