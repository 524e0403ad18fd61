#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use lq_transfer::scores::IngestOptions;
use lq_transfer::ScoreStore;

pub const SOURCES: [&str; 9] = [
    "English",
    "Arabic",
    "Korean",
    "Vietnamese",
    "Tamil",
    "Chinese",
    "Japanese",
    "Coptic",
    "Hindi",
];

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(data(name)).unwrap()
}

pub fn golden_store() -> ScoreStore {
    let mut store = ScoreStore::new();
    let report = store
        .ingest_path(&data("pixel_pos_scores.tsv"), IngestOptions::default())
        .unwrap();
    assert!(report.rejected.is_empty());
    store
}

/// The golden PIXEL grid read with plain string splitting: (source, target, steps) -> value.
pub fn raw_cells() -> BTreeMap<(String, String, u32), f64> {
    let text = read("pixel_pos_scores.tsv");
    let mut out = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        out.insert(
            (f[2].to_string(), f[3].to_string(), f[4].parse().unwrap()),
            f[6].parse().unwrap(),
        );
    }
    out
}

/// Straight-line evaluation of the LQ formula.
pub fn oracle_lq(f: f64, z0: f64, za: f64, eps: f64) -> f64 {
    let gap = f - za;
    let boost = f + z0;
    let denom = za + eps;
    gap * boost / denom
}

/// Mean zero-shot score of `target`, summed in the order of `SOURCES`.
pub fn oracle_za(cells: &BTreeMap<(String, String, u32), f64>, target: &str) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for s in SOURCES {
        if let Some(v) = cells.get(&(s.to_string(), target.to_string(), 0)) {
            sum += v;
            n += 1.0;
        }
    }
    sum / n
}

/// Textbook Spearman for distinct values: 1 - 6 sum d^2 / (n (n^2 - 1)).
pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64)
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
