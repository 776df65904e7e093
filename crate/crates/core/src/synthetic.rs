//! Deterministic fixture generators for tests, benches, and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::PipelineConfig;
use crate::corpus::{ChunkingConfig, EvidenceRecord, Paper, ResearchQuestion, Study};
use crate::generation::{Script, ScriptRule};
use crate::labels::ConclusionLabel;

/// Two Gaussian blobs centred at `+mean` and `-mean` on every axis.
/// Returns points and ground-truth blob ids (first half 0, second half 1).
pub fn two_blobs(seed: u64, dim: usize, per_blob: usize, mean: f64, sigma: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut points = Vec::with_capacity(2 * per_blob);
    let mut truth = Vec::with_capacity(2 * per_blob);
    for (blob, centre) in [(0, mean), (1, -mean)] {
        for _ in 0..per_blob {
            points.push((0..dim).map(|_| centre + noise.sample(&mut rng)).collect());
            truth.push(blob);
        }
    }
    (points, truth)
}

const FILLER: &[&str] = &[
    "participants", "were", "randomised", "across", "centres", "baseline", "characteristics", "similar",
    "follow", "up", "weeks", "months", "allocation", "concealed", "blinded", "assessors", "protocol",
    "registered", "withdrawals", "reported", "analysis", "intention", "treat", "secondary", "measures",
    "adverse", "events", "recorded", "trial", "site", "recruitment", "completed", "eligible", "screened",
];

const OFF_TOPIC: &[&str] = &[
    "weather", "forecast", "cloudy", "rainfall", "harbour", "sailing", "regatta", "telescope", "orbit",
    "granite", "quarry", "violin", "orchestra", "recipe", "saffron", "lantern", "glacier", "tundra",
];

fn filler(rng: &mut ChaCha8Rng, vocab: &[&str], words: usize) -> String {
    (0..words)
        .map(|_| *vocab.choose(rng).expect("vocabulary is non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A body of roughly `target_chars` characters alternating `topic` sentences
/// with filler drawn from `vocab`.
fn body(rng: &mut ChaCha8Rng, topic: &str, vocab: &[&str], target_chars: usize) -> String {
    let mut out = String::new();
    while out.len() < target_chars {
        out.push_str(topic);
        out.push_str(". ");
        let n = rng.gen_range(8..16);
        out.push_str(&filler(rng, vocab, n));
        out.push_str(". ");
    }
    out.trim_end().to_string()
}

struct Entry {
    question_id: &'static str,
    study_id: &'static str,
    left: &'static str,
    right: &'static str,
    outcome: &'static str,
    papers: usize,
    gold: ConclusionLabel,
    answer: &'static str,
}

const FIVE: [Entry; 5] = [
    Entry { question_id: "q1", study_id: "s1", left: "drug A", right: "drug B", outcome: "pain", papers: 3, gold: ConclusionLabel::FavoursLeft, answer: "ANSWER: drug A" },
    Entry { question_id: "q2", study_id: "s2", left: "acupuncture", right: "sham acupuncture", outcome: "nausea", papers: 2, gold: ConclusionLabel::FavoursRight, answer: "ANSWER: sham acupuncture" },
    Entry { question_id: "q3", study_id: "s3", left: "early mobilisation", right: "bed rest", outcome: "length of stay", papers: 3, gold: ConclusionLabel::NoDifference, answer: "ANSWER: no difference" },
    Entry { question_id: "q4", study_id: "s4", left: "vitamin D", right: "placebo", outcome: "fracture", papers: 2, gold: ConclusionLabel::NoDifference, answer: "The trials favour supplementation.\nANSWER: vitamin D" },
    Entry { question_id: "q5", study_id: "s1", left: "drug A", right: "drug B", outcome: "sleep quality", papers: 3, gold: ConclusionLabel::FavoursLeft, answer: "I am not sure" },
];

fn question_text(s: &Entry) -> String {
    format!("Does {} improve {} compared with {}?", s.left, s.outcome, s.right)
}

/// Study bodies are a function of the study id only, so records sharing a
/// study id share identical studies.
fn study_for(entry: &Entry) -> Study {
    let base = FIVE.iter().find(|s| s.study_id == entry.study_id).expect("study is declared");
    let seed = entry.study_id.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let papers = (1..=base.papers)
        .map(|i| {
            let topic = format!(
                "In paper {i} patients receiving {} versus {} showed changes in {}",
                base.left, base.right, base.outcome
            );
            Paper {
                id: format!("{}-p{i}", base.study_id),
                title: format!("Trial {i} of {} versus {}", base.left, base.right),
                body: body(&mut rng, &topic, FILLER, 900 + 300 * i),
                is_abstract_only: i == 2,
            }
        })
        .collect();
    Study {
        id: base.study_id.into(),
        gold_conclusion: Some(base.gold),
        papers,
    }
}

/// Five records over four studies; records 1 and 5 share study `s1`.
pub fn five_record_fixture() -> Vec<EvidenceRecord> {
    FIVE.iter()
        .map(|s| EvidenceRecord {
            review_id: format!("CD{:06}", 100 + s.question_id[1..].parse::<u32>().unwrap_or(0)),
            forest_plot_id: format!("fp-{}", s.question_id),
            question: ResearchQuestion {
                id: s.question_id.into(),
                text: question_text(s),
                left_intervention: s.left.into(),
                right_intervention: s.right.into(),
                outcome: Some(s.outcome.into()),
            },
            study: Study {
                gold_conclusion: Some(s.gold),
                ..study_for(s)
            },
            direction_flipped: false,
        })
        .collect()
}

/// Scripted responses for [`five_record_fixture`] under the default
/// templates. Answer prompts are recognised by the ANSWER instruction line;
/// every other prompt mentioning the question is an extraction prompt.
/// Question ids in `omit` get no rules, so their prompts are unmapped.
pub fn five_record_script(omit: &[&str]) -> Script {
    let mut rules = Vec::new();
    for s in FIVE.iter().filter(|s| !omit.contains(&s.question_id)) {
        rules.push(ScriptRule {
            all_of: vec![question_text(s), "ANSWER: no difference".into()],
            response: s.answer.into(),
        });
    }
    for s in FIVE.iter().filter(|s| !omit.contains(&s.question_id)) {
        rules.push(ScriptRule {
            all_of: vec![question_text(s)],
            response: format!(
                "Patients given {} had better {} (mean difference -1.2, 95% CI -2.0 to -0.4) than those given {}.",
                s.left, s.outcome, s.right
            ),
        });
    }
    Script {
        responses: Default::default(),
        rules,
    }
}

/// Config used with the synthetic fixtures: hash embedder, scripted chat,
/// 400-character chunks.
pub fn fixture_config() -> PipelineConfig {
    PipelineConfig {
        chunking: ChunkingConfig {
            chunk_size: 400,
            overlap: 50,
        },
        ..PipelineConfig::default()
    }
}

/// Question for the coverage fixtures.
pub fn skewed_question() -> ResearchQuestion {
    ResearchQuestion {
        id: "qskew".into(),
        text: "Does drug A reduce pain compared with drug B".into(),
        left_intervention: "drug A".into(),
        right_intervention: "drug B".into(),
        outcome: Some("pain".into()),
    }
}

/// Three papers: `a` repeats the question's wording in every chunk, `b` and
/// `c` share none of it. At 400-char chunks `a` yields at least ten chunks.
pub fn skewed_source_record() -> EvidenceRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q = skewed_question();
    let relevant = body(&mut rng, "drug A reduce pain compared with drug B does", &["drug", "pain", "reduce"], 4200);
    let papers = vec![
        Paper { id: "a".into(), title: "A".into(), body: relevant, is_abstract_only: false },
        Paper { id: "b".into(), title: "B".into(), body: body(&mut rng, "harbour regatta", OFF_TOPIC, 1600), is_abstract_only: false },
        Paper { id: "c".into(), title: "C".into(), body: body(&mut rng, "glacier tundra", OFF_TOPIC, 1600), is_abstract_only: false },
    ];
    EvidenceRecord {
        review_id: "CD999001".into(),
        forest_plot_id: "fp-skew".into(),
        question: q,
        study: Study { id: "skew".into(), gold_conclusion: Some(ConclusionLabel::FavoursLeft), papers },
        direction_flipped: false,
    }
}

/// Random multi-source record: 2 to 5 papers with varying relevance to
/// [`skewed_question`].
pub fn coverage_record(seed: u64) -> EvidenceRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_papers = rng.gen_range(2..=5);
    let papers = (0..n_papers)
        .map(|i| {
            let relevance: f64 = rng.gen();
            let vocab: Vec<&str> = if relevance > 0.5 {
                FILLER.iter().chain(["drug", "pain", "reduce", "compared"].iter()).copied().collect()
            } else {
                OFF_TOPIC.to_vec()
            };
            let topic = if i == 0 { "drug A reduce pain compared with drug B" } else { "trial participants reported outcomes" };
            let len = rng.gen_range(800..3600);
            Paper {
                id: format!("p{i}"),
                title: format!("Paper {i}"),
                body: body(&mut rng, topic, &vocab, len),
                is_abstract_only: false,
            }
        })
        .collect();
    EvidenceRecord {
        review_id: format!("CD{seed:06}"),
        forest_plot_id: format!("fp-cov-{seed}"),
        question: skewed_question(),
        study: Study { id: format!("cov{seed}"), gold_conclusion: Some(ConclusionLabel::FavoursLeft), papers },
        direction_flipped: false,
    }
}
