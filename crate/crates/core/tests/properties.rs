mod common;

use common::brute_spearman;
use lq_transfer::analysis::{average_lq_by_source, average_ranks, pearson, rank_targets, spearman};
use lq_transfer::lq::{self, lq_expression, LqInputs, LqMatrix, PublishedLq, DEFAULT_EPSILON};
use lq_transfer::registry::{Registry, ResourceClass, BUNDLED_REGISTRY};
use lq_transfer::scores::{IngestOptions, MetricKind};
use lq_transfer::{learning_quotient, simplified_lq, EvalRecord, ScoreStore, Task};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn positive_unit() -> impl Strategy<Value = f64> {
    1e-6..=1.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn simplified_form_agrees(f in positive_unit(), z0 in unit(), za in positive_unit()) {
        let full = lq_expression(f, z0, za, 1e-15);
        let short = simplified_lq(f, z0, za).unwrap();
        prop_assert!((full - short).abs() <= 1e-9 * full.abs().max(1.0));
    }

    #[test]
    fn sign_follows_gap(f in unit(), z0 in unit(), za in unit()) {
        prop_assume!(f + z0 > 0.0);
        let v = learning_quotient(&LqInputs::new(f, z0, za, DEFAULT_EPSILON).unwrap()).unwrap();
        prop_assert_eq!(v > 0.0, f > za);
        prop_assert_eq!(v == 0.0, f == za);
    }

    #[test]
    fn scale_covariant(f in unit(), z0 in unit(), za in positive_unit(), k in prop::sample::select(vec![0.01, 0.5, 2.0, 100.0])) {
        let base = lq_expression(f, z0, za, 0.0);
        let scaled = lq_expression(k * f, k * z0, k * za, 0.0);
        prop_assert!((scaled - k * base).abs() <= 1e-12 * (k * base).abs().max(1e-300));
    }

    #[test]
    fn increasing_in_few_shot(f in unit(), df in 1e-6..=0.5f64, z0 in unit(), za in positive_unit()) {
        prop_assume!(2.0 * f + z0 > za);
        let hi = (f + df).min(1.0);
        prop_assume!(hi > f);
        let a = lq_expression(f, z0, za, DEFAULT_EPSILON);
        let b = lq_expression(hi, z0, za, DEFAULT_EPSILON);
        prop_assert!(b > a);
    }

    #[test]
    fn zero_shot_average_ignores_source_order(
        z0s in prop::collection::vec(unit(), 1..10),
        seed in any::<u64>(),
    ) {
        let sources: Vec<String> = (0..z0s.len()).map(|i| format!("S{i}")).collect();
        let mut store = ScoreStore::new();
        for (s, &z) in sources.iter().zip(&z0s) {
            store.insert(rec(s, "T", 0, z)).unwrap();
        }
        let mut shuffled = sources.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = store.build_profile("M", Task::Pos, "T", &sources, 10).unwrap();
        let b = store.build_profile("M", Task::Pos, "T", &shuffled, 10).unwrap();
        prop_assert_eq!(a.za.to_bits(), b.za.to_bits());
        prop_assert_eq!(a.source_set_hash(), b.source_set_hash());
    }

    #[test]
    fn removing_a_source_at_the_average_keeps_it(a in unit(), b in unit()) {
        // three sources whose middle value is exactly the mean of all three
        let mid = (a + b) / 2.0;
        let mut store = ScoreStore::new();
        for (s, z) in [("A", a), ("B", b), ("C", mid)] {
            store.insert(rec(s, "T", 0, z)).unwrap();
        }
        let all = store.build_profile("M", Task::Pos, "T", &["A", "B", "C"], 10).unwrap();
        prop_assume!((all.za - mid).abs() < 1e-15);
        let fewer = store.build_profile("M", Task::Pos, "T", &["A", "B"], 10).unwrap();
        prop_assert!((fewer.za - all.za).abs() < 1e-15);
    }

    #[test]
    fn export_then_ingest_is_identity(vals in prop::collection::vec((0usize..4, 0usize..4, prop::bool::ANY, unit()), 0..30)) {
        let mut store = ScoreStore::new();
        for (s, t, few, v) in vals {
            let _ = store.insert(rec(&format!("S{s}"), &format!("T{t}"), if few { 10 } else { 0 }, v));
        }
        let mut buf = Vec::new();
        store.export(&mut buf).unwrap();
        let mut back = ScoreStore::new();
        let r = back.ingest_reader(buf.as_slice(), IngestOptions::default()).unwrap();
        prop_assert!(r.rejected.is_empty());
        let a: Vec<EvalRecord> = store.records().collect();
        let b: Vec<EvalRecord> = back.records().collect();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.key(), y.key());
            prop_assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }

    #[test]
    fn registry_stats_ignore_row_order(seed in any::<u64>()) {
        let mut lines: Vec<&str> = BUNDLED_REGISTRY.lines().collect();
        let header = lines.remove(0);
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = std::iter::once(header).chain(lines).collect::<Vec<_>>().join("\n");
        let shuffled = Registry::parse_str(&text).unwrap();
        prop_assert_eq!(shuffled.len(), 123);
        prop_assert_eq!(shuffled.stats(), Registry::bundled().stats());
    }

    #[test]
    fn ranks_are_a_permutation(lqs in prop::collection::vec(-2.0..2.0f64, 1..20)) {
        let m = matrix_of(&lqs);
        let list = rank_targets(&m, "S").unwrap();
        let mut ranks: Vec<usize> = list.entries.iter().map(|e| e.rank).collect();
        ranks.sort();
        prop_assert_eq!(ranks, (1..=lqs.len()).collect::<Vec<_>>());
        for w in list.entries.windows(2) {
            prop_assert!(w[0].lq > w[1].lq || (w[0].lq == w[1].lq && w[0].language < w[1].language));
        }
    }

    #[test]
    fn source_average_ignores_cell_order(lqs in prop::collection::vec(-2.0..2.0f64, 1..20), seed in any::<u64>()) {
        let mut shuffled = lqs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        // same multiset of values attached to targets in a different order
        let a = average_lq_by_source(&matrix_of(&lqs))["S"];
        let b = average_lq_by_source(&matrix_of(&shuffled))["S"];
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn spearman_is_bounded(pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3..25)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(r) = spearman(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
        if let Some(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn spearman_with_itself_is_one(x in prop::collection::btree_set(-1000i32..1000, 2..20)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        prop_assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_matches_textbook_formula(
        x in prop::collection::btree_set(-1000i32..1000, 3..15),
        seed in any::<u64>(),
    ) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let mut y = x.iter().map(|v| v * 0.5 + 3.0).collect::<Vec<_>>();
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let r = spearman(&x, &y).unwrap();
        prop_assert!((r - brute_spearman(&x, &y)).abs() < 1e-12);
    }
}

fn rec(source: &str, target: &str, steps: u32, value: f64) -> EvalRecord {
    EvalRecord {
        model_id: "M".into(),
        task: Task::Pos,
        source: source.into(),
        target: target.into(),
        steps,
        metric_kind: MetricKind::Accuracy,
        value,
    }
}

fn matrix_of(lqs: &[f64]) -> LqMatrix {
    let values: Vec<PublishedLq> = lqs
        .iter()
        .enumerate()
        .map(|(i, &lq)| PublishedLq {
            model_id: "M".into(),
            task: Task::Pos,
            source: "S".into(),
            target: format!("T{i:02}"),
            steps: 10,
            lq,
        })
        .collect();
    LqMatrix::from_published("M", Task::Pos, 10, &["S".to_owned()], &values)
}

#[test]
fn five_target_fixture_against_textbook_spearman() {
    let lq = [0.42, -0.10, 0.05, 0.31, 0.77];
    let sim = [0.60, 0.12, 0.35, 0.20, 0.81];
    let want = brute_spearman(&lq, &sim);
    assert!((spearman(&lq, &sim).unwrap() - want).abs() < 1e-12);
    // ranks 4,1,2,3,5 vs 4,1,3,2,5: sum d^2 = 2, so 1 - 12/120
    assert!((want - 0.9).abs() < 1e-12);
}

#[test]
fn tied_values_share_average_ranks() {
    assert_eq!(average_ranks(&[2.0, 2.0, 1.0]), [2.5, 2.5, 1.0]);
}

#[test]
fn ranking_survives_uniform_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    use rand::Rng;
    let sources = ["A", "B", "C"];
    let targets: Vec<String> = (0..8).map(|i| format!("T{i}")).collect();
    for _ in 0..20 {
        let mut base = ScoreStore::new();
        let mut scaled = ScoreStore::new();
        for s in sources {
            for t in &targets {
                for steps in [0, 10] {
                    let v: f64 = rng.random_range(0.05..0.9);
                    base.insert(rec(s, t, steps, v)).unwrap();
                    scaled.insert(rec(s, t, steps, v / 2.0)).unwrap();
                }
            }
        }
        let a = lq::lq_matrix(&base, "M", Task::Pos, &sources, &targets, 10, 1e-300).unwrap();
        let b = lq::lq_matrix(&scaled, "M", Task::Pos, &sources, &targets, 10, 1e-300).unwrap();
        assert_eq!(rank_targets(&a, "A").unwrap().order(), rank_targets(&b, "A").unwrap().order());
    }
}

#[test]
fn twelve_language_fixture_finds_weakest_source() {
    let langs: Vec<String> = (0..12).map(|i| format!("L{i:02}")).collect();
    let mut values = Vec::new();
    for (si, s) in langs.iter().enumerate() {
        for (ti, t) in langs.iter().enumerate() {
            let lq = if si == 7 { -0.5 - ti as f64 * 0.01 } else { 0.1 + ((si * 7 + ti * 3) % 11) as f64 * 0.02 };
            values.push(PublishedLq {
                model_id: "M".into(),
                task: Task::Ner,
                source: s.clone(),
                target: t.clone(),
                steps: 10,
                lq,
            });
        }
    }
    let m = LqMatrix::from_published("M", Task::Ner, 10, &langs, &values);
    let avg = average_lq_by_source(&m);
    assert_eq!(avg.len(), 12);
    let weakest = avg.iter().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(weakest, "L07");
    let oracle: f64 = (0..12).map(|ti| -0.5 - ti as f64 * 0.01).sum::<f64>() / 12.0;
    assert!((avg["L07"] - oracle).abs() < 1e-12);
}

#[test]
fn high_resource_rows_are_the_nine_sources() {
    let reg = Registry::bundled();
    let high: std::collections::BTreeSet<&str> = reg
        .records()
        .iter()
        .filter(|r| r.resource_class == ResourceClass::High)
        .map(|r| r.base_language.as_str())
        .collect();
    assert_eq!(high.len(), 9);
}
