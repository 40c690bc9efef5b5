//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::panic;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use ctrleval::aspects::{
    attribute_patterns, coherence_patterns, consistency_patterns, score_aspect, score_attribute_relevance,
    AspectCatalog, AspectResources, Placement, PromptTemplate, Verbalizer,
};
use ctrleval::cli::{cmd_score, ScoreArgs};
use ctrleval::corpus_stats::{build_iwf_from_reader, build_iwf_table, build_iwf_table_sharded, CorpusMode, IwfTable};
use ctrleval::metaeval::{
    evaluator_subsample_report, inclusion_probability, kendall, krippendorff_alpha, pearson,
    quality_drift_subsets, spearman, EvalSetRecord, InstanceRecord, MeasurementLevel,
};
use ctrleval::scorer::protocol::{Handshake, WireResponse, PROTOCOL};
use ctrleval::scorer::{InfillRequest, LabelWordsRequest, MockScorer, Scorer, ScorerError};
use ctrleval::textproc::tokenize_words;
use ctrleval::{Aspect, EvalInstance, Exec, OutputTarget, MASK};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

struct Check {
    required: bool,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let kind = |c: &Check| if c.required { "" } else { " (optional)" };
    let secs = |s| Some(Duration::from_secs(s));
    let checks = [
        Check { required: true, name: "weight-distribution invariants", limit: secs(10), run: weight_invariants },
        Check { required: true, name: "attribute-relevance identity", limit: secs(10), run: attribute_identity },
        Check { required: true, name: "worked attribute-relevance example", limit: None, run: worked_example },
        Check { required: true, name: "IWF/ISF/NISF oracle equivalence", limit: None, run: iwf_oracles },
        Check { required: true, name: "correlation and agreement oracles", limit: secs(30), run: correlation_oracles },
        Check { required: true, name: "pattern-rendering goldens", limit: None, run: rendering_goldens },
        Check { required: true, name: "quality-drift sampler frequencies", limit: secs(20), run: quality_drift_mc },
        Check { required: true, name: "end-to-end determinism", limit: None, run: determinism },
        Check { required: true, name: "direction sanity", limit: None, run: direction_sanity },
        Check { required: false, name: "stdio protocol conformance", limit: None, run: protocol_conformance },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &checks {
        let start = Instant::now();
        let outcome = panic::catch_unwind(c.run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(d), Some(limit)) if took > limit => Err(format!("{d}; took {took:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {}{}: {detail} ({took:.2?})", c.name, kind(c)),
            Err(why) => {
                failed += 1;
                println!("FAIL {}{}: {why} ({took:.2?})", c.name, kind(c));
            }
        }
    }
    println!(
        "SKIP published-correlation integration (optional): needs model weights and the annotated evaluation set"
    );
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// synthetic data

const WORDS: &[&str] = &[
    "food", "service", "movie", "plot", "market", "vote", "church", "science", "computer", "good", "bad",
    "slow", "quick", "bright", "dark", "river", "city", "night", "music", "story", "actor", "price", "table",
    "garden", "window", "paper", "engine", "signal", "planet", "doctor", "stone", "letter", "bridge", "winter",
];

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<&'static str> {
    (0..rng.random_range(lo..=hi)).map(|_| *WORDS.choose(rng).unwrap()).collect()
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let w = words(rng, 2, 8);
    let end = if rng.random_bool(0.8) { "." } else { "!" };
    format!("{} {}{end}", capitalize(w[0]), w[1..].join(" "))
}

/// Prefix, then the rest of its sentence, then up to four more sentences.
fn random_instance(rng: &mut ChaCha8Rng, label: &str) -> EvalInstance {
    let p = words(rng, 1, 3);
    let prefix = format!("{}{}", capitalize(p[0]), p[1..].iter().map(|w| format!(" {w}")).collect::<String>());
    let mut text = format!("{prefix} {}.", words(rng, 1, 6).join(" "));
    for _ in 0..rng.random_range(0..=4) {
        text.push(' ');
        text.push_str(&sentence(rng));
    }
    EvalInstance::new(prefix, label, text).expect("generated instance is valid")
}

fn toy_iwf() -> IwfTable {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let lines: Vec<String> = (0..300).map(|_| words(&mut rng, 1, 10).join(" ")).collect();
    // a few vocabulary words stay unseen so the unseen-word path is exercised
    let lines: Vec<String> = lines.into_iter().filter(|l| !l.contains("winter")).collect();
    build_iwf_table(&lines, CorpusMode::SentencePerLine).unwrap()
}

// ---------------------------------------------------------------------------
// criteria

fn weight_invariants() -> Outcome {
    let iwf = toy_iwf();
    let catalog = AspectCatalog::builtin("sentiment").unwrap();
    let mocks: Vec<MockScorer> = (0..8).map(MockScorer::with_default_vocab).collect();
    let resources = AspectResources { iwf: Some(&iwf), catalog: Some(&catalog) };
    let mut checked = 0usize;
    for aspect in Aspect::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(aspect as u64 + 1);
        let instances: Vec<EvalInstance> = (0..1000)
            .map(|_| {
                let label = if rng.random_bool(0.5) { "Positive" } else { "Negative" };
                random_instance(&mut rng, label)
            })
            .collect();
        let results = Exec::Parallel.map(&instances, |i, inst| {
            score_aspect(aspect, inst, resources, &mocks[i % mocks.len()], Exec::Sequential)
        });
        for (i, r) in results.into_iter().enumerate() {
            let s = r.map_err(|e| format!("{aspect} instance {i}: {e}"))?;
            let sum: f64 = s.parts.iter().map(|p| p.weight).sum();
            ensure!((sum - 1.0).abs() <= 1e-9, "{aspect} instance {i}: weights sum to {sum}");
            ensure!(s.parts.iter().all(|p| p.weight >= 0.0), "{aspect} instance {i}: negative weight");
            checked += 1;
        }
    }
    Ok(format!("{checked} instances, |sum - 1| <= 1e-9, all weights >= 0"))
}

fn attribute_identity() -> Outcome {
    let pool = ["Alpha", "Beta", "Gamma", "Delta"];
    let vocab: Vec<String> = MockScorer::with_default_vocab(0)
        .vocab()
        .iter()
        .filter(|w| w.chars().all(|c| c.is_ascii_lowercase()))
        .cloned()
        .collect();
    let templates = [
        ("{text} It was {mask}.", Placement::TextFirst),
        ("{mask} news: {text}", Placement::PromptFirst),
        ("{text} So {mask}!", Placement::TextFirst),
        ("About {mask}. {text}", Placement::PromptFirst),
    ];
    let mut worst: f64 = 0.0;
    let cases: Vec<u64> = (0..500).collect();
    let results = Exec::Parallel.map(&cases, |_, &case| -> Result<f64, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let n_labels = rng.random_range(2..=4);
        let labels: Vec<String> = pool[..n_labels].iter().map(|s| s.to_string()).collect();
        let n_prompts = rng.random_range(1..=3);
        let prompts: Vec<PromptTemplate> = templates
            .choose_multiple(&mut rng, n_prompts)
            .enumerate()
            .map(|(i, (t, p))| PromptTemplate { id: format!("p{i}"), template: t.to_string(), placement: *p })
            .collect();
        let verbalizers: Vec<Verbalizer> = (0..rng.random_range(1..=3))
            .map(|v| {
                let chosen: Vec<&String> = vocab.choose_multiple(&mut rng, n_labels).collect();
                let mapping = labels.iter().cloned().zip(chosen.into_iter().cloned()).collect();
                Verbalizer { id: format!("v{v}"), mapping }
            })
            .collect();
        let catalog = AspectCatalog::new("synthetic".into(), Some(labels.clone()), prompts, verbalizers)
            .map_err(|e| format!("case {case}: {e}"))?;
        let mock = MockScorer::with_default_vocab(rng.random());
        let inst = random_instance(&mut rng, &labels[0]);
        let mut total = 0.0;
        for l in &labels {
            let s = score_attribute_relevance(&catalog, &inst.with_label(l.as_str()), &mock, Exec::Sequential)
                .map_err(|e| format!("case {case}: {e}"))?;
            total += s.value;
        }
        Ok((total - 1.0).abs())
    });
    for r in results {
        worst = worst.max(r?);
    }
    ensure!(worst <= 1e-6, "max |sum - 1| = {worst:e}");
    Ok(format!("500 cases with 2-4 labels, max |sum - 1| = {worst:.1e}"))
}

/// Label-word probabilities chosen by which prompt the input carries.
struct ByPrompt(Vec<(&'static str, Vec<f64>)>);

impl Scorer for ByPrompt {
    fn model_name(&self) -> String {
        "by-prompt".into()
    }
    fn infill_log_prob(&self, _: &InfillRequest) -> Result<f64, ScorerError> {
        Ok(-1.0)
    }
    fn label_word_probs(&self, req: &LabelWordsRequest) -> Result<Vec<f64>, ScorerError> {
        self.0
            .iter()
            .find(|(cue, _)| req.input_pattern.contains(cue))
            .map(|(_, p)| p.clone())
            .ok_or_else(|| ScorerError::InvalidRequest {
                request_id: req.request_id.clone(),
                message: "unknown prompt".into(),
            })
    }
}

fn worked_example() -> Outcome {
    let catalog = AspectCatalog::from_json_str(
        r#"{"task":"t","labels":["Positive","Negative"],
            "prompts":[{"id":"one","template":"{text} First {mask}.","placement":"text_first"},
                       {"id":"two","template":"{text} Second {mask}.","placement":"text_first"}],
            "verbalizers":[{"id":"v","mapping":{"Positive":"good","Negative":"bad"}}]}"#,
    )
    .unwrap();
    // masses 0.4 and 0.1, true-label shares 0.75 and 0.5
    let backend = ByPrompt(vec![("First", vec![0.3, 0.1]), ("Second", vec![0.05, 0.05])]);
    let inst = EvalInstance::new("The food", "Positive", "The food was good.").unwrap();
    let s = score_attribute_relevance(&catalog, &inst, &backend, Exec::Sequential).map_err(|e| e.to_string())?;
    let w: Vec<f64> = s.parts.iter().map(|p| p.weight).collect();
    let r: Vec<f64> = s.parts.iter().map(|p| p.raw_score).collect();
    ensure!((w[0] - 0.8).abs() <= 1e-12 && (w[1] - 0.2).abs() <= 1e-12, "weights {w:?}");
    ensure!((r[0] - 0.75).abs() <= 1e-12 && (r[1] - 0.5).abs() <= 1e-12, "scores {r:?}");
    ensure!((s.value - 0.70).abs() <= 1e-12, "S_AR = {}", s.value);
    Ok(format!("S_AR = {} (|err| = {:.1e})", s.value, (s.value - 0.70).abs()))
}

fn iwf_oracles() -> Outcome {
    let mut corpora = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let lines: Vec<String> = (0..1000).map(|_| words(&mut rng, 1, 12).join(" ")).collect();

        // brute-force sentence frequencies
        let mut oracle: HashMap<&str, u64> = HashMap::new();
        for l in &lines {
            for w in l.split_whitespace().collect::<HashSet<_>>() {
                *oracle.entry(w).or_default() += 1;
            }
        }
        let n = lines.len() as u64;
        let corpus = lines.join("\n");

        let single = build_iwf_table(&lines, CorpusMode::SentencePerLine).unwrap();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let streamed = build_iwf_from_reader(corpus.as_bytes(), CorpusMode::SentencePerLine, exec).unwrap();
            ensure!(streamed == single, "streamed build differs ({exec:?}, seed {seed})");
            for shards in [1, 3, 7, 64] {
                let sharded = build_iwf_table_sharded(&lines, CorpusMode::SentencePerLine, shards, exec).unwrap();
                ensure!(sharded == single, "{shards}-shard build differs ({exec:?}, seed {seed})");
            }
        }
        ensure!(single.corpus_sentence_count() == n, "corpus size {}", single.corpus_sentence_count());
        ensure!(single.vocab_size() == oracle.len(), "vocabulary {} vs {}", single.vocab_size(), oracle.len());
        for (w, &f) in &oracle {
            ensure!(single.frequency(w) == f, "frequency of {w}: {} vs {f}", single.frequency(w));
        }

        // direct evaluation of the weight formulas
        let iwf = |w: &str| ((1 + n) as f64).ln() / oracle.get(w).copied().unwrap_or(0).max(1) as f64;
        for w in WORDS.iter().chain(["unseen"].iter()) {
            ensure!((single.iwf(w) - iwf(w)).abs() <= 1e-12, "iwf({w})");
        }
        let units: Vec<String> = (0..6).map(|_| words(&mut rng, 1, 9).join(" ")).collect();
        let isf: Vec<f64> = units
            .iter()
            .map(|u| u.split_whitespace().map(iwf).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for (u, &want) in units.iter().zip(&isf) {
            let got = single.isf(u).unwrap();
            ensure!((got - want).abs() <= 1e-12, "isf({u:?}) = {got}, oracle {want}");
        }
        let total: f64 = isf.iter().sum();
        let got = single.nisf_weights(&units).unwrap();
        for (g, i) in got.iter().zip(&isf) {
            ensure!((g - i / total).abs() <= 1e-12, "nisf {g} vs {}", i / total);
        }
        // the library tokenizer agrees with whitespace splitting on this alphabet
        ensure!(tokenize_words(&units[0]).len() == units[0].split_whitespace().count(), "tokenizer mismatch");
        corpora += 1;
    }
    Ok(format!("{corpora} corpora of 1000 sentences: exact counts, sharded and streamed builds equal"))
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let mx = sx / n;
    let my = sy / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Rank = values strictly below + half of the ties (self included) + 1/2.
fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_kendall(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    let den = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    (den > 0.0).then(|| (c - d) as f64 / den)
}

/// Pairwise form: observed disagreement within items over expected
/// disagreement across all pairable values.
fn oracle_alpha(units: &[Vec<f64>], level: MeasurementLevel) -> Option<f64> {
    let pairable: Vec<&Vec<f64>> = units.iter().filter(|u| u.len() >= 2).collect();
    let pool: Vec<f64> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let n = pool.len() as f64;
    let count = |v: f64| pool.iter().filter(|&&p| p == v).count() as f64;
    let delta = |a: f64, b: f64| -> f64 {
        match level {
            MeasurementLevel::Nominal => (a != b) as u8 as f64,
            MeasurementLevel::Interval => (a - b) * (a - b),
            MeasurementLevel::Ordinal => {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let mut distinct: Vec<f64> = pool.iter().copied().filter(|&g| g >= lo && g <= hi).collect();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                let s: f64 = distinct.iter().map(|&g| count(g)).sum::<f64>() - (count(a) + count(b)) / 2.0;
                s * s
            }
        }
    };
    let mut d_o = 0.0;
    for u in &pairable {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    d_o += delta(u[i], u[j]) / (m - 1.0);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..pool.len() {
        for j in 0..pool.len() {
            if i != j {
                d_e += delta(pool[i], pool[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    (d_e > 0.0).then(|| 1.0 - d_o / d_e)
}

fn correlation_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for case in 0..200 {
        let n = rng.random_range(2..=50);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..=5))).collect();
        let y: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| (rng.random_range(-20..=20) as f64) / 4.0).collect()
        } else {
            (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
        };
        let pairs = [
            (pearson(&x, &y).ok(), oracle_pearson(&x, &y), "pearson"),
            (spearman(&x, &y).ok(), oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y)), "spearman"),
            (kendall(&x, &y).ok(), oracle_kendall(&x, &y), "kendall"),
        ];
        for (got, want, name) in pairs {
            match (got, want) {
                (Some(g), Some(w)) => {
                    worst = worst.max((g - w).abs());
                    ensure!((g - w).abs() <= 1e-12, "{name} case {case}: {g} vs {w}");
                    compared += 1;
                }
                (None, None) => {}
                (g, w) => return Err(format!("{name} case {case}: degenerate mismatch {g:?} vs {w:?}")),
            }
        }
    }

    let mut alpha_worst: f64 = 0.0;
    let mut matrices = 0;
    let levels = [MeasurementLevel::Interval, MeasurementLevel::Ordinal, MeasurementLevel::Nominal];
    while matrices < 50 {
        let raters = rng.random_range(2..=5);
        let items = rng.random_range(2..=8);
        let units: Vec<Vec<f64>> = (0..items)
            .map(|_| {
                let mut unit = Vec::new();
                for _ in 0..raters {
                    if rng.random_bool(0.85) {
                        unit.push(f64::from(rng.random_range(1..=5)));
                    }
                }
                unit
            })
            .collect();
        let level = levels[matrices % 3];
        let (got, want) = (krippendorff_alpha(&units, level).ok(), oracle_alpha(&units, level));
        match (got, want) {
            (Some(g), Some(w)) => {
                alpha_worst = alpha_worst.max((g - w).abs());
                ensure!((g - w).abs() <= 1e-12, "alpha ({level:?}) {g} vs {w} on {units:?}");
                // relabeling items and raters leaves alpha unchanged
                let mut shuffled = units.clone();
                shuffled.shuffle(&mut rng);
                shuffled.iter_mut().for_each(|u| u.shuffle(&mut rng));
                let s = krippendorff_alpha(&shuffled, level).unwrap();
                ensure!((s - g).abs() <= 1e-12, "alpha not invariant under relabeling: {s} vs {g}");
                matrices += 1;
            }
            (None, None) => {}
            (g, w) => return Err(format!("alpha degenerate mismatch {g:?} vs {w:?} on {units:?}")),
        }
    }
    Ok(format!(
        "{compared} coefficient comparisons (max err {worst:.1e}); {matrices} alpha matrices (max err {alpha_worst:.1e})"
    ))
}

const SENTIMENT_PHRASES: [(&str, &str); 12] = [
    ("in-summary", "In summary, it was «MASK»."),
    ("to-sum-up", "To sum up, it was «MASK»."),
    ("all-in-all", "All in all, it was «MASK»."),
    ("in-brief", "In brief, it was «MASK»."),
    ("it-was", "It was «MASK»."),
    ("it-seems", "It seems «MASK»."),
    ("it-appears", "It appears «MASK»."),
    ("it-becomes", "It becomes «MASK»."),
    ("really", "Really «MASK»!"),
    ("just", "Just «MASK»!"),
    ("actually", "Actually «MASK»!"),
    ("so", "So «MASK»!"),
];

const TOPIC_PHRASES: [(&str, &str); 16] = [
    ("news", "News: «MASK»"),
    ("article", "Article: «MASK»"),
    ("summary", "Summary: «MASK»"),
    ("report", "Report: «MASK»"),
    ("about", "It was about «MASK»."),
    ("around", "It was around «MASK»."),
    ("related-to", "It was related to «MASK»."),
    ("towards", "It was towards «MASK»."),
    ("piece-of-news", "It was a piece of «MASK» news."),
    ("a-article", "It was a «MASK» article."),
    ("a-summary", "It was a «MASK» summary."),
    ("a-report", "It was a «MASK» report."),
    ("what-news", "What «MASK» news!"),
    ("what-article", "What a «MASK» article!"),
    ("what-summary", "What a «MASK» summary!"),
    ("what-report", "What a «MASK» report!"),
];

fn rendering_goldens() -> Outcome {
    let inst = EvalInstance::new("The food", "Positive", "The food was good. I liked it. We left.").unwrap();
    let target = |p: &ctrleval::PatternEvaluator| match &p.output_target {
        OutputTarget::Text(t) => t.clone(),
        OutputTarget::LabelWords(_) => String::new(),
    };
    let coh: Vec<(String, String)> =
        coherence_patterns(&inst).iter().map(|p| (p.input_pattern.clone(), target(p))).collect();
    let want = [
        ("«MASK» I liked it. We left.", "The food was good."),
        ("The food was good. «MASK» We left.", "I liked it."),
        ("The food was good. I liked it. «MASK»", "We left."),
    ];
    ensure!(coh.len() == 3, "coherence evaluators: {}", coh.len());
    for ((gi, gt), (wi, wt)) in coh.iter().zip(want) {
        ensure!(gi == wi && gt == wt, "coherence {gi:?} -> {gt:?}");
    }
    let cons: Vec<(String, String)> =
        consistency_patterns(&inst).iter().map(|p| (p.input_pattern.clone(), target(p))).collect();
    let want = [
        ("The food «MASK»", "was good. I liked it. We left."),
        ("«MASK» was good. I liked it. We left.", "The food"),
    ];
    for ((gi, gt), (wi, wt)) in cons.iter().zip(want) {
        ensure!(gi == wi && gt == wt, "consistency {gi:?} -> {gt:?}");
    }

    let y = "Y is here.";
    let mut rendered = 0;
    for (name, phrases, labels, evaluators) in [
        ("sentiment", &SENTIMENT_PHRASES[..], vec!["Positive", "Negative"], 72),
        ("topic", &TOPIC_PHRASES[..], vec!["Computers", "Politics", "Religion", "Science"], 32),
    ] {
        let catalog = AspectCatalog::builtin(name).unwrap();
        ensure!(catalog.evaluator_count() == evaluators, "{name}: {} evaluators", catalog.evaluator_count());
        ensure!(catalog.prompts().len() == phrases.len() * 2, "{name}: {} prompts", catalog.prompts().len());
        ensure!(catalog.labels().labels() == labels.as_slice(), "{name}: labels {:?}", catalog.labels());
        let inst = EvalInstance::new("Y", labels[0], y).unwrap();
        let (_, patterns) = attribute_patterns(&catalog, &inst).map_err(|e| e.to_string())?;
        let by_prompt: BTreeMap<&str, &str> = patterns
            .iter()
            .map(|(p, _)| (p.id.split('/').next().unwrap(), p.input_pattern.as_str()))
            .collect();
        for (id, phrase) in phrases {
            for (suffix, golden) in [("tf", format!("{y} {phrase}")), ("pf", format!("{phrase} {y}"))] {
                let key = format!("{id}.{suffix}");
                let got = by_prompt.get(key.as_str()).ok_or(format!("{name}: missing prompt {key}"))?;
                ensure!(*got == golden, "{name} {key}: {got:?} != {golden:?}");
                rendered += 1;
            }
        }
    }
    ensure!(MASK == "«MASK»", "mask placeholder changed");
    Ok(format!("3 coherence + 2 consistency + {rendered} prompt goldens; catalogs 72 and 32 evaluators"))
}

fn quality_drift_mc() -> Outcome {
    const TRIALS: usize = 100_000;
    let items: Vec<(String, f64)> = (0..8).map(|i| (format!("s{i}"), f64::from(i * 3 % 8))).collect();
    let chunks = 100;
    let per = TRIALS / chunks;
    let counts = Exec::Parallel.map_range(chunks, |c| {
        let mut hits = [[0u64; 4]; 4];
        let mut sizes = [0u64; 4];
        for t in c * per..(c + 1) * per {
            let d = quality_drift_subsets(&items, t as u64).unwrap();
            let source: HashMap<&str, usize> = d
                .sources
                .iter()
                .enumerate()
                .flat_map(|(i, ids)| ids.iter().map(move |id| (id.as_str(), i)))
                .collect();
            for (i, ids) in d.sources.iter().enumerate() {
                sizes[i] += ids.len() as u64;
            }
            for (j, sub) in d.subsets.iter().enumerate() {
                for id in sub {
                    hits[source[id.as_str()]][j] += 1;
                }
            }
        }
        (hits, sizes)
    });
    let mut hits = [[0u64; 4]; 4];
    let mut sizes = [0u64; 4];
    for (h, s) in counts {
        for (i, row) in h.iter().enumerate() {
            sizes[i] += s[i];
            for (j, v) in row.iter().enumerate() {
                hits[i][j] += v;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (i, row) in hits.iter().enumerate() {
        for (j, &h) in row.iter().enumerate() {
            let freq = h as f64 / sizes[i] as f64;
            let dev = (freq - inclusion_probability(i, j)).abs();
            worst = worst.max(dev);
            ensure!(dev <= 0.02, "(i={i}, j={j}): frequency {freq:.4}, expected {}", inclusion_probability(i, j));
        }
    }
    Ok(format!("{} trials, 16 pairs, max deviation {worst:.4}", chunks * per))
}

fn synthetic_records(n: usize, seed: u64) -> Vec<InstanceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = ["CTRL", "PPLM", "GeDi", "CoCon"];
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { "Positive" } else { "Negative" };
            let inst = random_instance(&mut rng, label);
            let mut ratings = BTreeMap::new();
            for a in Aspect::ALL {
                ratings.insert(a, (0..3).map(|_| rng.random_range(1..=5)).collect());
            }
            InstanceRecord {
                id: format!("r{i:03}"),
                prefix: inst.prefix().to_string(),
                label: label.to_string(),
                text: inst.generated_text().to_string(),
                model: Some(models[i % 4].to_string()),
                ratings,
            }
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let records = synthetic_records(100, 77);
    let input = dir.path().join("in.jsonl");
    let body: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    std::fs::write(&input, body).unwrap();
    let iwf_path = dir.path().join("toy.iwf");
    let mut f = std::fs::File::create(&iwf_path).unwrap();
    toy_iwf().write_to(&mut f).unwrap();
    f.flush().unwrap();

    let run = |out: &str, exec: Exec| -> Result<String, String> {
        let args = ScoreArgs {
            aspect: Aspect::ALL.to_vec(),
            input: input.clone(),
            scorer: Some("mock:1234".into()),
            iwf: Some(iwf_path.clone()),
            catalog: Some("builtin:sentiment".into()),
            out: dir.path().join(out),
            concurrency: 4,
            timeout: 30,
            strict: true,
            trim_incomplete_last_sentence: false,
        };
        cmd_score(&args, exec).map_err(|e| e.to_string())?;
        std::fs::read_to_string(dir.path().join(out)).map_err(|e| e.to_string())
    };
    let a = run("a.jsonl", Exec::Parallel)?;
    let b = run("b.jsonl", Exec::Parallel)?;
    let c = run("c.jsonl", Exec::Sequential)?;
    ensure!(a == b, "two parallel runs differ");
    ensure!(a == c, "parallel and sequential runs differ");
    let lines = a.lines().count();
    ensure!(lines == 1 + 300, "{lines} output lines");

    let catalog = AspectCatalog::builtin("sentiment").unwrap();
    let eval: Vec<EvalSetRecord> =
        records.iter().map(|r| EvalSetRecord::from_record(r, &[Aspect::AttributeRelevance]).unwrap()).collect();
    let mock = MockScorer::with_default_vocab(1234);
    let n_ar = catalog.evaluator_count();
    let rep = evaluator_subsample_report(&catalog, &eval, &mock, &[n_ar], 5, 3, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let row = &rep.rows[0];
    ensure!(row.std_pearson == 0.0, "std at k = N_AR is {}", row.std_pearson);
    ensure!(row.mean_pearson == rep.full_pearson, "mean {} vs full {}", row.mean_pearson, rep.full_pearson);
    Ok(format!("{} bytes identical over 3 runs; k = {n_ar} std = 0", a.len()))
}

/// Puts most mass on the label words of whichever cue the text contains.
struct Biased;

const CUES: [(&str, [&str; 3]); 2] = [("sunny", ["good", "positive", "great"]), ("gloomy", ["bad", "negative", "terrible"])];

impl Scorer for Biased {
    fn model_name(&self) -> String {
        "biased".into()
    }
    fn infill_log_prob(&self, _: &InfillRequest) -> Result<f64, ScorerError> {
        Ok(-1.0)
    }
    fn label_word_probs(&self, req: &LabelWordsRequest) -> Result<Vec<f64>, ScorerError> {
        let favored: Vec<&str> = CUES
            .iter()
            .filter(|(cue, _)| req.input_pattern.contains(cue))
            .flat_map(|(_, w)| w.iter().copied())
            .collect();
        Ok(req
            .candidate_words
            .iter()
            .map(|w| if favored.contains(&w.as_str()) { 0.3 } else { 0.02 })
            .collect())
    }
}

fn direction_sanity() -> Outcome {
    let catalog = AspectCatalog::builtin("sentiment").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut right, mut wrong) = (0.0, 0.0);
    let n = 100usize;
    for i in 0..n {
        let (label, other, cue) = if i.is_multiple_of(2) {
            ("Positive", "Negative", "sunny")
        } else {
            ("Negative", "Positive", "gloomy")
        };
        let base = random_instance(&mut rng, label);
        let text = format!("{} It was {cue} there.", base.generated_text());
        let inst = EvalInstance::new(base.prefix(), label, text).unwrap();
        let s = |inst: &EvalInstance| {
            score_attribute_relevance(&catalog, inst, &Biased, Exec::Sequential).map(|s| s.value)
        };
        right += s(&inst).map_err(|e| e.to_string())?;
        wrong += s(&inst.with_label(other)).map_err(|e| e.to_string())?;
    }
    let (right, wrong) = (right / n as f64, wrong / n as f64);
    ensure!(right > wrong, "mean S_AR correct {right} <= mislabeled {wrong}");
    Ok(format!("mean S_AR correct {right:.4} > mislabeled {wrong:.4}"))
}

fn protocol_conformance() -> Outcome {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ctrleval"))
        .args(["mock-sidecar", "--seed", "21"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut stdin = child.stdin.take().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let hello: Handshake = serde_json::from_str(&lines.next().unwrap().unwrap()).map_err(|e| e.to_string())?;
    ensure!(hello.protocol == PROTOCOL, "handshake {:?}", hello.protocol);

    let writer = std::thread::spawn(move || {
        for i in 0..1000 {
            let line = if i % 2 == 0 {
                format!(r#"{{"id":"r{i}","op":"infill","input":"Text {i}. {MASK}","target":"the food was good"}}"#)
            } else {
                format!(r#"{{"id":"r{i}","op":"label_words","input":"Text {i}. It was {MASK}.","candidates":["good","bad","great"]}}"#)
            };
            writeln!(stdin, "{line}").unwrap();
        }
    });
    let mut seen = HashSet::new();
    for line in lines {
        let r: WireResponse = serde_json::from_str(&line.unwrap()).map_err(|e| e.to_string())?;
        let i: usize = r.id[1..].parse().map_err(|_| format!("bad id {}", r.id))?;
        ensure!(seen.insert(i), "duplicate response for {}", r.id);
        ensure!(r.error.is_none(), "error for {}: {:?}", r.id, r.error);
        if i.is_multiple_of(2) {
            let lp = r.log_prob.ok_or(format!("{} has no log_prob", r.id))?;
            ensure!(lp <= 0.0 && lp.is_finite(), "log_prob {lp}");
        } else {
            let p = r.probs.ok_or(format!("{} has no probs", r.id))?;
            ensure!(p.len() == 3 && p.iter().all(|&v| v > 0.0 && v <= 1.0), "probs {p:?}");
        }
    }
    writer.join().unwrap();
    child.wait().map_err(|e| e.to_string())?;
    ensure!(seen.len() == 1000, "{} responses", seen.len());
    Ok("1000 mixed requests, one in-range response per id".into())
}
