//! Frozen rank-stream vectors, generated once by the independent oracle in
//! `tools/zipf_oracle.py`. Any drift in the generator, the table builder, or
//! the inverse-CDF lookup shows up here as an exact mismatch.

use kvbench_core::zipf::{ZipfianParams, ZipfianTable};

fn fixture_lines() -> Vec<(u64, u64, f64, Vec<u64>)> {
    let raw = include_str!("fixtures/zipf_vectors.txt");
    raw.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|line| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            assert!(fields.len() == 3 + 16, "malformed fixture line: {line}");
            let seed: u64 = fields[0].parse().unwrap();
            let n: u64 = fields[1].parse().unwrap();
            let alpha: f64 = fields[2].parse().unwrap();
            let ranks: Vec<u64> = fields[3..].iter().map(|f| f.parse().unwrap()).collect();
            (seed, n, alpha, ranks)
        })
        .collect()
}

#[test]
fn stream_matches_oracle_vectors_exactly() {
    let cases = fixture_lines();
    assert!(cases.len() >= 4, "fixture file unexpectedly small");
    for (seed, n, alpha, expected) in cases {
        let table = ZipfianTable::build(ZipfianParams::new(n, alpha).unwrap()).unwrap();
        let got = table.sample_stream(seed, 16);
        assert_eq!(
            got, expected,
            "rank stream diverged for seed={seed} N={n} alpha={alpha}"
        );
    }
}
