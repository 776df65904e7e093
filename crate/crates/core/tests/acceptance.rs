//! Acceptance suite. Each check prints one `PASS` or `FAIL` line; the process
//! exits non-zero if any check fails.
//!
//! Run with: cargo test -p urca-core --test acceptance

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{harness, run_log_bytes};
use urca_core::clustering::gmm::{fit_gmm, select_components_bic};
use urca_core::clustering::{adjusted_rand_index, default_max_components};
use urca_core::evaluation::{confusion, fleiss_kappa, levenshtein, mean_coverage, micro_metrics, per_label_metrics};
use urca_core::generation::{order_clusters, OrderingKind, OrderingStrategy, PromptTemplate};
use urca_core::labels::{label_from_ci, EffectEstimate, EffectKind};
use urca_core::retrieval::allocate_per_source;
use urca_core::synthetic::{
    coverage_record, five_record_fixture, five_record_script, fixture_config, skewed_source_record, two_blobs,
};
use urca_core::{ConclusionLabel, Prediction, VariantSpec};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

/// Smallest m >= 1 with m * s >= min(k + beta ln s, n_max).
fn allocation_oracle(k: usize, beta: f64, n_max: usize, s: usize) -> usize {
    let target = (k as f64 + beta * (s as f64).ln()).min(n_max as f64);
    let mut m = 1;
    while ((m * s) as f64) < target {
        m += 1;
    }
    m
}

fn check_allocation() -> Outcome {
    let start = Instant::now();
    for (k, beta, n_max, s, want) in [(10, 2.0, 40, 1, 10), (10, 2.0, 40, 5, 3), (10, 2.0, 12, 4, 3)] {
        let got = allocate_per_source(k, beta, n_max, s);
        ensure(got == want, || format!("({k}, {beta}, {n_max}, {s}) gave {got}, expected {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let k = rng.gen_range(1..=60);
        let beta = rng.gen_range(0.0..6.0);
        let n_max = rng.gen_range(1..=80);
        let s = rng.gen_range(1..=25);
        let (got, want) = (allocate_per_source(k, beta, n_max, s), allocation_oracle(k, beta, n_max, s));
        ensure(got == want, || format!("({k}, {beta}, {n_max}, {s}) gave {got}, oracle {want}"))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok("3 worked examples + 50 random cases".into())
}

fn check_ci_labels() -> Outcome {
    use ConclusionLabel::*;
    for (lo, hi, want) in [(0.2, 0.8, FavoursLeft), (1.2, 1.8, FavoursRight), (0.8, 1.2, NoDifference)] {
        let est = EffectEstimate::new((lo + hi) / 2.0, lo, hi, EffectKind::Ratio);
        let got = label_from_ci(&est).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("ratio [{lo}, {hi}] gave {got}, expected {want}"))?;
    }
    Ok("[0.2,0.8] favours_left, [1.2,1.8] favours_right, [0.8,1.2] no_difference".into())
}

fn check_clustering() -> Outcome {
    let start = Instant::now();
    let mut selecting = 0;
    let mut min_ari = f64::INFINITY;
    for seed in 0..20 {
        let (points, truth) = two_blobs(seed, 2, 40, 5.0, 0.1);
        let model = select_components_bic(&points, default_max_components(points.len()), seed)
            .map_err(|e| e.to_string())?;
        if model.n_components == 2 {
            selecting += 1;
            let ari = adjusted_rand_index(&model.predict(&points), &truth);
            min_ari = min_ari.min(ari);
            ensure(ari >= 0.9, || format!("seed {seed}: ARI {ari:.4} < 0.9"))?;
        }
    }
    ensure(selecting >= 19, || format!("BIC chose 2 components in {selecting}/20 runs"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("2 components in {selecting}/20 runs, min ARI {min_ari:.4}"))
}

fn check_em_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for fit in 0..100 {
        let n = rng.gen_range(10..60);
        let dim = rng.gen_range(1..=4);
        let c = rng.gen_range(1..=4);
        let centres: Vec<Vec<f64>> = (0..c).map(|_| (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
        let points: Vec<Vec<f64>> = (0..n)
            .map(|i| centres[i % c].iter().map(|m| m + rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let model = fit_gmm(&points, rng.gen_range(1..=c.min(n)), fit).map_err(|e| e.to_string())?;
        for w in model.log_likelihood_trace.windows(2) {
            worst = worst.max(w[0] - w[1]);
            ensure(w[1] >= w[0] - 1e-9, || format!("fit {fit}: log-likelihood fell from {} to {}", w[0], w[1]))?;
        }
    }
    Ok(format!("100 fits, largest decrease {worst:.3e}"))
}

fn random_pred(rng: &mut ChaCha8Rng) -> Prediction {
    [Prediction::FavoursLeft, Prediction::FavoursRight, Prediction::NoDifference, Prediction::Unparsed][rng.gen_range(0..4)]
}

fn safe_div(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_metrics() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for set in 0..100 {
        let n = rng.gen_range(1..40);
        let pairs: Vec<(Prediction, ConclusionLabel)> = (0..n)
            .map(|_| (random_pred(&mut rng), ConclusionLabel::ALL[rng.gen_range(0..3)]))
            .collect();
        let c = confusion(&pairs).map_err(|e| e.to_string())?;
        let m = micro_metrics(&c);

        let tp = pairs.iter().filter(|(p, g)| p.label() == Some(*g)).count();
        let fp = pairs.iter().filter(|(p, g)| p.label().is_some_and(|l| l != *g)).count();
        let fn_ = pairs.iter().filter(|(p, g)| p.label() != Some(*g)).count();
        let (p, r) = (safe_div(tp, tp + fp), safe_div(tp, tp + fn_));
        let want = [p, r, f1(p, r), safe_div(tp, n)];
        let got = [m.precision, m.recall, m.f1, m.accuracy];
        ensure(want.iter().zip(&got).all(|(a, b)| close(*a, *b)), || {
            format!("set {set}: micro {got:?}, oracle {want:?}")
        })?;

        let per = per_label_metrics(&c);
        for l in ConclusionLabel::ALL {
            let ltp = pairs.iter().filter(|(p, g)| p.label() == Some(l) && *g == l).count();
            let lfp = pairs.iter().filter(|(p, g)| p.label() == Some(l) && *g != l).count();
            let lfn = pairs.iter().filter(|(p, g)| *g == l && p.label() != Some(l)).count();
            let (lp, lr) = (safe_div(ltp, ltp + lfp), safe_div(ltp, ltp + lfn));
            let got = per[&l];
            ensure(close(got.precision, lp) && close(got.recall, lr) && close(got.f1, f1(lp, lr)), || {
                format!("set {set}: {l} got {got:?}, oracle ({lp}, {lr})")
            })?;
        }
    }

    let l = ConclusionLabel::FavoursLeft;
    let r = ConclusionLabel::FavoursRight;
    let c = confusion(&[(Prediction::FavoursLeft, l), (Prediction::Unparsed, l), (Prediction::FavoursRight, r)])
        .map_err(|e| e.to_string())?;
    let m = micro_metrics(&c);
    ensure(m.precision == 1.0 && m.recall == 2.0 / 3.0 && m.f1 == 0.8, || format!("unparsed example gave {m:?}"))?;
    Ok("100 random sets match recount; unparsed example P=1, R=2/3, F1=0.8".into())
}

#[allow(clippy::needless_range_loop)]
fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn check_agreement() -> Outcome {
    let perfect = fleiss_kappa(&[vec![2, 0], vec![0, 2]], 2).map_err(|e| e.to_string())?;
    ensure((perfect - 1.0).abs() <= 1e-9, || format!("perfect agreement gave {perfect}"))?;
    let worked = fleiss_kappa(&[vec![2, 0], vec![1, 1]], 2).map_err(|e| e.to_string())?;
    ensure((worked + 1.0 / 3.0).abs() <= 1e-9, || format!("worked table gave {worked}"))?;

    let alphabet: Vec<char> = "abcdé ü".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let word = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.gen_range(0..14);
        (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
    };
    for _ in 0..500 {
        let (a, b) = (word(&mut rng), word(&mut rng));
        let (got, want) = (levenshtein(&a, &b), levenshtein_oracle(&a, &b));
        ensure(got == want, || format!("levenshtein({a:?}, {b:?}) = {got}, oracle {want}"))?;
    }
    Ok(format!("kappa {perfect} and {worked:.6}; 500 edit distances match"))
}

fn check_coverage() -> Outcome {
    let record = skewed_source_record();
    let h = harness(fixture_config(), common::catch_all_script("ANSWER: drug A"));
    let uniform = h.pipeline.run_dataset(std::slice::from_ref(&record), VariantSpec::RagUniform, 1).remove(0);
    let global = h.pipeline.run_dataset(std::slice::from_ref(&record), VariantSpec::Rag, 1).remove(0);
    ensure(uniform.coverage() == 1.0, || format!("uniform coverage {}", uniform.coverage()))?;
    ensure(global.coverage() < 1.0, || format!("global coverage {}", global.coverage()))?;

    for seed in 0..10 {
        let rec = coverage_record(seed);
        let urca = h.pipeline.run_dataset(std::slice::from_ref(&rec), VariantSpec::Urca, 1);
        let rag = h.pipeline.run_dataset(std::slice::from_ref(&rec), VariantSpec::Rag, 1);
        let (cu, cr) = (mean_coverage(&urca), mean_coverage(&rag));
        ensure(urca[0].error.is_none() && rag[0].error.is_none(), || format!("seed {seed}: run failed"))?;
        ensure(cu >= cr, || format!("seed {seed}: urca coverage {cu} < rag {cr}"))?;
    }
    Ok(format!(
        "skewed fixture uniform {:.2} vs global {:.2}; urca >= rag on 10 seeds",
        uniform.coverage(),
        global.coverage()
    ))
}

fn check_determinism() -> Outcome {
    let start = Instant::now();
    let records = five_record_fixture();
    let logs: Vec<Vec<u8>> = [1, 4]
        .iter()
        .map(|&par| {
            let h = harness(fixture_config(), five_record_script(&[]));
            let out = h.pipeline.run_dataset(&records, VariantSpec::Urca, par);
            run_log_bytes(&h.pipeline, VariantSpec::Urca, &out)
        })
        .collect();
    ensure(logs[0] == logs[1], || "run logs differ between parallelism 1 and 4".into())?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{} identical bytes at parallelism 1 and 4", logs[0].len()))
}

fn check_orderings() -> Outcome {
    let items: Vec<(usize, f64)> = [0.5, 0.9, 0.3, 0.7].iter().copied().enumerate().collect();
    let scores = |v: &[(usize, f64)]| v.iter().map(|x| x.1).collect::<Vec<_>>();
    let mut runs = BTreeMap::new();
    for kind in OrderingKind::ALL {
        let out = order_clusters(&items, OrderingStrategy::new(kind, 3));
        let mut ids: Vec<usize> = out.iter().map(|x| x.0).collect();
        ids.sort_unstable();
        ensure(ids == vec![0, 1, 2, 3], || format!("{kind} is not a permutation"))?;
        runs.insert(kind.as_str(), scores(&out));
    }
    let mut asc = runs["ascending"].clone();
    asc.reverse();
    ensure(asc == runs["descending"], || "ascending is not the reverse of descending".into())?;
    ensure(runs["pingpong_desc_top"] == vec![0.9, 0.5, 0.3, 0.7], || {
        format!("pingpong_desc_top gave {:?}", runs["pingpong_desc_top"])
    })?;
    let mut bottom = runs["pingpong_desc_bottom"].clone();
    bottom.reverse();
    ensure(bottom == runs["pingpong_desc_top"], || "pingpong_desc_bottom is not the reverse of top".into())?;
    let again = order_clusters(&items, OrderingStrategy::new(OrderingKind::Random, 3));
    ensure(scores(&again) == runs["random"], || "random ordering is not seed-stable".into())?;
    Ok("5 permutations; reverse pairs, pingpong example and seeded shuffle hold".into())
}

fn check_ablation_calls() -> Outcome {
    let record = five_record_fixture().remove(0);
    let system = PromptTemplate::default_extraction().system_text;

    let h = harness(fixture_config(), five_record_script(&[]));
    let flat = h.pipeline.run_dataset(std::slice::from_ref(&record), VariantSpec::UrcaNoClustering, 1).remove(0);
    let flat_calls = h.chat.calls_with_system(&system);
    ensure(flat.error.is_none() && flat_calls == 1, || format!("urca_no_clustering made {flat_calls} extraction calls"))?;

    let h = harness(fixture_config(), five_record_script(&[]));
    let full = h.pipeline.run_dataset(std::slice::from_ref(&record), VariantSpec::Urca, 1).remove(0);
    let full_calls = h.chat.calls_with_system(&system);
    ensure(full.error.is_none() && full_calls == full.n_clusters, || {
        format!("urca made {full_calls} extraction calls for {} clusters", full.n_clusters)
    })?;
    Ok(format!("urca_no_clustering 1 call; urca {full_calls} calls for {} clusters", full.n_clusters))
}

fn main() -> ExitCode {
    let checks: [Check; 10] = [
        ("allocation_formula", check_allocation),
        ("ci_labeling", check_ci_labels),
        ("clustering_recovery", check_clustering),
        ("em_monotonicity", check_em_monotone),
        ("metric_oracles", check_metrics),
        ("agreement_metrics", check_agreement),
        ("coverage_direction", check_coverage),
        ("end_to_end_determinism", check_determinism),
        ("ordering_strategies", check_orderings),
        ("ablation_wiring", check_ablation_calls),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
