//! Acceptance criteria 2 through 10, one PASS/FAIL line each.
//!
//! Runs with its own harness so that every line is printed even when all
//! criteria pass.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use fairprobe::analysis::{default_rules, misplaced_year_rule, scan_hallucinations, CompiledRules};
use fairprobe::config::RunConfig;
use fairprobe::corpus::{self, Corpus};
use fairprobe::generation::{DecodingParams, GenerationRecord, Status};
use fairprobe::pipeline;
use fairprobe::preprocess::{
    build_vocabulary, mask_identity, prepare_documents, tfidf_transform, MaskingLexicon, Tokenizer, VocabConfig,
};
use fairprobe::probe::{
    chance_level, evaluate, exceeds_chance, null_band, ovr_attributions, split, train_multiclass, BinaryLoss, Init,
    MultinomialLoss, Objective, SplitSpec, TrainOptions,
};
use fairprobe::prompt_factory::{default_factor_space, FactorAssignment};
use fairprobe::synth::{generate_corpus, SignalSpec};
use fairprobe::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- helpers

fn docs_of(texts: &[&str]) -> Vec<Vec<String>> {
    texts.iter().map(|t| t.split_whitespace().map(str::to_string).collect()).collect()
}

/// TF-IDF recomputed from scratch on whitespace tokens.
fn brute_tfidf(docs: &[Vec<String>], terms: &[String]) -> Vec<Vec<f64>> {
    let n = docs.len() as f64;
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    docs.iter()
        .map(|d| {
            let raw: Vec<f64> = terms
                .iter()
                .zip(&idf)
                .map(|(t, w)| d.iter().filter(|x| *x == t).count() as f64 * w)
                .collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect()
        })
        .collect()
}

fn record(id: &str, assignment: FactorAssignment, response: &str) -> GenerationRecord {
    GenerationRecord {
        id: id.to_string(),
        model: "fixture".into(),
        assignment,
        system: String::new(),
        user: String::new(),
        response: response.to_string(),
        created_at: chrono::DateTime::UNIX_EPOCH,
        params: DecodingParams::default(),
        status: Status::Ok,
        error: None,
    }
}

fn persona(destination: &str, gender: &str) -> FactorAssignment {
    FactorAssignment::from_pairs([("ethnicity", "Asian"), ("gender", gender), ("destination", destination)])
}

struct Fit {
    accuracy: f64,
    n_test: usize,
    attributions: Option<Vec<fairprobe::probe::FeatureAttribution>>,
}

/// mask → vocabulary → TF-IDF → split → train → evaluate on one corpus.
fn fit(corpus: &Corpus, target: &str, lexicon: Option<&MaskingLexicon>, seed: u64, top_k: Option<usize>) -> Fit {
    let labels = corpus::labels(corpus, target).unwrap();
    let texts: Vec<&str> = corpus.records.iter().map(|r| r.response.as_str()).collect();
    let tok = Tokenizer::default();
    let docs = prepare_documents(&texts, lexicon, &tok, Exec::default());
    let exclude: Vec<&str> = tok.placeholder.as_deref().into_iter().collect();
    let vocab = build_vocabulary(&docs, &VocabConfig::default(), &exclude).unwrap();
    let ids: Vec<&str> = corpus.records.iter().map(|r| r.id.as_str()).collect();
    let x = tfidf_transform(&docs, &ids, &vocab, Exec::default());
    let (train, test) = split(x.n_rows(), &SplitSpec::new(seed), None).unwrap();
    let pick = |rows: &[usize]| rows.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>();
    let (ytr, yte) = (pick(&train), pick(&test));
    let (xtr, xte) = (x.select_rows(&train), x.select_rows(&test));
    let opts = TrainOptions::default();
    let model = train_multiclass(&xtr, &ytr, &opts).unwrap();
    let accuracy = evaluate(&model, &xte, &yte).unwrap();
    let attributions = top_k.map(|k| ovr_attributions(&xtr, &ytr, &vocab, &opts, k).unwrap());
    Fit {
        accuracy,
        n_test: yte.len(),
        attributions,
    }
}

/// Central `c` interval of Binomial(n, p) / n from statrs quantiles.
fn statrs_band(n: u64, p: f64, c: f64) -> (f64, f64) {
    let b = Binomial::new(p, n).unwrap();
    let quantile = |q: f64| (0..=n).find(|&k| b.cdf(k) >= q - 1e-12).unwrap();
    (quantile((1.0 - c) / 2.0) as f64 / n as f64, quantile((1.0 + c) / 2.0) as f64 / n as f64)
}

// -------------------------------------------------------------- criteria

fn tfidf_oracle() -> Outcome {
    let fixture = docs_of(&["x y", "x"]);
    let cfg = VocabConfig {
        max_df: 1.0,
        min_count: 1,
        ..VocabConfig::default()
    };
    let vocab = build_vocabulary(&fixture, &cfg, &[]).unwrap();
    let m = tfidf_transform(&fixture, &["0", "1"], &vocab, Exec::default());
    let idf_y = 1.5f64.ln() + 1.0;
    let norm = (1.0 + idf_y * idf_y).sqrt();
    let hand = [[1.0 / norm, idf_y / norm], [1.0, 0.0]];
    for (r, row) in hand.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            ensure!((m.get(r, c) - v).abs() < 1e-9, "fixture ({r},{c}) = {} vs {v}", m.get(r, c));
        }
    }

    let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_docs = rng.random_range(2..=10);
        let docs: Vec<Vec<String>> = (0..n_docs)
            .map(|_| {
                (0..rng.random_range(0..12))
                    .map(|_| words[rng.random_range(0..words.len())].to_string())
                    .collect()
            })
            .collect();
        if docs.iter().all(Vec::is_empty) {
            continue;
        }
        let Ok(vocab) = build_vocabulary(&docs, &cfg, &[]) else {
            continue;
        };
        let terms: Vec<String> = (0..vocab.len()).map(|j| vocab.term(j).to_string()).collect();
        let ids: Vec<String> = (0..docs.len()).map(|i| i.to_string()).collect();
        let got = tfidf_transform(&docs, &ids, &vocab, Exec::default()).to_dense();
        let want = brute_tfidf(&docs, &terms);
        checked += 1;
        for (gr, wr) in got.iter().zip(&want) {
            for (g, w) in gr.iter().zip(wr) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    ensure!(checked == 5, "only {checked} random corpora were usable");
    ensure!(worst < 1e-9, "max deviation from brute force {worst:e}");
    Ok(format!("fixture exact, random corpora max deviation {worst:.1e}"))
}

fn vocabulary_filters() -> Outcome {
    let six = docs_of(&["a b", "a c", "a d", "a e", "a f", "b c"]);
    let cfg = VocabConfig {
        max_df: 0.8,
        min_count: 2,
        ..VocabConfig::default()
    };
    let v = build_vocabulary(&six, &cfg, &[]).unwrap();
    let kept: Vec<&str> = (0..v.len()).map(|j| v.term(j)).collect();
    ensure!(kept == ["b", "c"], "six-document fixture kept {kept:?}");

    let corpus = generate_corpus(&SignalSpec::ethnicity(0.5, 250, 17), Exec::default()).unwrap();
    let texts: Vec<&str> = corpus.records.iter().map(|r| r.response.as_str()).collect();
    let docs = prepare_documents(&texts, None, &Tokenizer::default(), Exec::default());
    let n = docs.len();
    let cfg = VocabConfig::default();
    let v = build_vocabulary(&docs, &cfg, &[]).unwrap();
    let mut count: HashMap<&str, u64> = HashMap::new();
    let mut df: HashMap<&str, u64> = HashMap::new();
    for d in &docs {
        for t in d {
            *count.entry(t).or_default() += 1;
        }
        for t in d.iter().map(String::as_str).collect::<HashSet<_>>() {
            *df.entry(t).or_default() += 1;
        }
    }
    let passes = |t: &str| count[t] >= 5 && df[t] as f64 / n as f64 <= 0.8;
    let kept: HashSet<&str> = (0..v.len()).map(|j| v.term(j)).collect();
    for t in &kept {
        ensure!(passes(t), "kept term `{t}` fails a threshold (count {}, df {})", count[t], df[t]);
    }
    for t in count.keys() {
        ensure!(kept.contains(t) || !passes(t), "term `{t}` passes both thresholds but was dropped");
    }
    Ok(format!("fixture {{b, c}}; {n} docs, {} kept terms recounted", kept.len()))
}

/// Softmax loss written out densely, independent of the library.
fn dense_objective(x: &[Vec<f64>], y: &[usize], k: usize, lambda: f64, w: &[f64], b: &[f64]) -> f64 {
    let v = x[0].len();
    let mut f = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let z: Vec<f64> = (0..k)
            .map(|c| b[c] + (0..v).map(|j| w[c * v + j] * row[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|zc| (zc - m).exp()).sum::<f64>().ln();
        f += lse - z[yi];
    }
    f + 0.5 * lambda * w.iter().map(|a| a * a).sum::<f64>()
}

fn optimizer_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let dense: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..8).map(|_| if rng.random_bool(0.6) { rng.random_range(0.0..1.0) } else { 0.0 }).collect())
            .collect();
        let x = fairprobe::preprocess::DocumentMatrix::from_dense(&dense);
        let y: Vec<usize> = (0..5).map(|i| i % 3).collect();
        let positive: Vec<bool> = y.iter().map(|&c| c == 0).collect();
        let multi = MultinomialLoss {
            x: &x,
            y: &y,
            n_classes: 3,
            lambda: 0.7,
            exec: Exec::default(),
        };
        let binary = BinaryLoss {
            x: &x,
            positive: &positive,
            lambda: 0.7,
            exec: Exec::default(),
        };
        for obj in [&multi as &dyn Objective, &binary] {
            let theta: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; obj.dim()];
            obj.eval(&theta, &mut g);
            let mut scratch = vec![0.0; obj.dim()];
            let h = 1e-5;
            for i in 0..obj.dim() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (obj.eval(&tp, &mut scratch) - obj.eval(&tm, &mut scratch)) / (2.0 * h);
                worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-4));
            }
        }
    }
    ensure!(worst < 1e-5, "gradient relative error {worst:e}");

    // Tiny problem against a brute-force multi-start gradient descent on the
    // dense objective.
    let dense = vec![
        vec![1.0, 0.2, 0.0],
        vec![0.8, 0.0, 0.3],
        vec![0.1, 0.9, 0.2],
        vec![0.0, 1.0, 0.5],
        vec![0.5, 0.5, 0.9],
        vec![0.3, 0.1, 1.0],
    ];
    let labels = ["a", "a", "b", "b", "a", "b"];
    let y: Vec<usize> = labels.iter().map(|l| usize::from(*l == "b")).collect();
    let lambda = 0.5;
    let x = fairprobe::preprocess::DocumentMatrix::from_dense(&dense);
    let opts = TrainOptions {
        lambda,
        ..TrainOptions::default()
    };
    let model = train_multiclass(&x, &labels, &opts).unwrap();
    let ours = dense_objective(&dense, &y, 2, lambda, &model.weights, &model.bias);
    let mut best = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut b: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        for _ in 0..20_000 {
            let h = 1e-7;
            let f0 = dense_objective(&dense, &y, 2, lambda, &w, &b);
            let gw: Vec<f64> = (0..6)
                .map(|i| {
                    let mut wp = w.clone();
                    wp[i] += h;
                    (dense_objective(&dense, &y, 2, lambda, &wp, &b) - f0) / h
                })
                .collect();
            let gb: Vec<f64> = (0..2)
                .map(|i| {
                    let mut bp = b.clone();
                    bp[i] += h;
                    (dense_objective(&dense, &y, 2, lambda, &w, &bp) - f0) / h
                })
                .collect();
            w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= 0.2 * g);
            b.iter_mut().zip(&gb).for_each(|(a, g)| *a -= 0.2 * g);
        }
        best = best.min(dense_objective(&dense, &y, 2, lambda, &w, &b));
    }
    ensure!((ours - best).abs() < 1e-6, "objective {ours} vs brute force {best}");

    // Two initializations on a realistic problem.
    let corpus = generate_corpus(&SignalSpec::ethnicity(0.3, 100, 5), Exec::default()).unwrap();
    let labels = corpus::labels(&corpus, "ethnicity").unwrap();
    let texts: Vec<&str> = corpus.records.iter().map(|r| r.response.as_str()).collect();
    let docs = prepare_documents(&texts, None, &Tokenizer::default(), Exec::default());
    let vocab = build_vocabulary(&docs, &VocabConfig::default(), &[]).unwrap();
    let ids: Vec<&str> = corpus.records.iter().map(|r| r.id.as_str()).collect();
    let xm = tfidf_transform(&docs, &ids, &vocab, Exec::default());
    let zeros = train_multiclass(&xm, &labels, &TrainOptions::default()).unwrap();
    let random = train_multiclass(
        &xm,
        &labels,
        &TrainOptions {
            init: Init::Random { seed: 3, scale: 1.0 },
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let gap = (zeros.trace.objective - random.trace.objective).abs();
    ensure!(gap < 1e-6, "objectives differ by {gap:e} across initializations");
    let (pz, pr) = (zeros.predict(&xm), random.predict(&xm));
    ensure!(pz == pr, "predictions differ across initializations");
    Ok(format!(
        "gradient rel. error {worst:.1e}; tiny objective gap {:.1e}; init gap {gap:.1e} ({} vs {} iterations)",
        (ours - best).abs(),
        zeros.trace.iterations,
        random.trace.iterations
    ))
}

fn null_calibration() -> Outcome {
    let mut inside = 0;
    let mut accs = Vec::new();
    for seed in 0..20u64 {
        let corpus = generate_corpus(&SignalSpec::ethnicity(0.0, 1500, 1000 + seed), Exec::default()).unwrap();
        let f = fit(&corpus, "ethnicity", None, seed, None);
        let band = null_band(4, f.n_test as u64, 0.99).unwrap();
        let oracle = statrs_band(f.n_test as u64, 0.25, 0.99);
        ensure!(
            (band.0 - oracle.0).abs() < 1e-12 && (band.1 - oracle.1).abs() < 1e-12,
            "null band {band:?} vs statrs {oracle:?}"
        );
        if band.0 <= f.accuracy && f.accuracy <= band.1 {
            inside += 1;
        }
        accs.push(f.accuracy);
    }
    let lo = accs.iter().cloned().fold(1.0, f64::min);
    let hi = accs.iter().cloned().fold(0.0, f64::max);
    ensure!(inside >= 19, "only {inside}/20 inside the 99% band (accuracy {lo:.4}..{hi:.4})");
    Ok(format!("{inside}/20 inside the band, accuracy {lo:.4}..{hi:.4}"))
}

fn sensitivity_and_recovery() -> Outcome {
    let spec = SignalSpec::ethnicity(1.0, 1500, 42);
    let corpus = generate_corpus(&spec, Exec::default()).unwrap();
    let f = fit(&corpus, "ethnicity", None, 42, Some(20));
    ensure!(f.accuracy >= 0.95, "accuracy {}", f.accuracy);
    let t = exceeds_chance(f.accuracy, f.n_test as u64, 0.25, 0.01).unwrap();
    ensure!(t.significant, "not significant (p = {})", t.p_value);
    let attributions = f.attributions.unwrap();
    let (mut own, mut total, mut foreign) = (0, 0, 0);
    for a in &attributions {
        let positive: HashSet<&str> =
            a.features.iter().filter(|w| w.weight > 0.0).map(|w| w.term.as_str()).collect();
        for (group, markers) in &spec.markers {
            for m in markers {
                if group == &a.group {
                    total += 1;
                    own += usize::from(positive.contains(m.as_str()));
                } else {
                    foreign += usize::from(positive.contains(m.as_str()));
                }
            }
        }
    }
    ensure!(own == total, "{own}/{total} markers in their group's top-20 with positive weight");
    ensure!(foreign == 0, "{foreign} markers positive in another group's top-20");
    Ok(format!(
        "accuracy {:.4}, p = {:.1e}, markers recovered {own}/{total}, foreign 0",
        f.accuracy, t.p_value
    ))
}

fn masking_leakage() -> Outcome {
    let mut cfg = RunConfig::default().with_seed(11);
    cfg.n = 600;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    let items = pipeline::generate(&cfg).unwrap();
    pipeline::collect(&cfg, &items, &out, None).unwrap();
    let corpus = corpus::load(&[&out], false).unwrap();

    let space = default_factor_space();
    let lex = MaskingLexicon::from_space(&space);
    let levels: Vec<String> = ["ethnicity", "gender"]
        .iter()
        .flat_map(|d| space.dimension(d).unwrap().levels.clone())
        .collect();
    let finders: Vec<regex::Regex> = levels
        .iter()
        .map(|l| regex::Regex::new(&format!(r"(?i)\b{}\b", regex::escape(l).replace(' ', r"\s+"))).unwrap())
        .collect();
    let mut before = 0;
    for r in &corpus.records {
        before += finders.iter().filter(|f| f.is_match(&r.response)).count();
        let masked = mask_identity(&r.response, &lex);
        for (f, l) in finders.iter().zip(&levels) {
            ensure!(!f.is_match(&masked), "`{l}` survives masking in {}", r.id);
        }
    }
    ensure!(before > 0, "stub corpus never mentions an identity level");

    let run = pipeline::probe(&cfg, &corpus, None, false, Exec::default()).unwrap();
    let level_tokens: HashSet<String> = levels.iter().map(|l| l.to_lowercase()).collect();
    for a in &run.report.attributions {
        for w in &a.features {
            ensure!(!level_tokens.contains(&w.term), "`{}` in {}'s attribution table", w.term, a.group);
        }
    }
    for j in 0..run.vocabulary.len() {
        let t = run.vocabulary.term(j);
        ensure!(!level_tokens.contains(t) && !t.contains("mask"), "`{t}` in the vocabulary");
    }

    let mut spec = SignalSpec::ethnicity(0.0, 300, 23);
    spec.echo_labels = true;
    let echo = generate_corpus(&spec, Exec::default()).unwrap();
    let unmasked = fit(&echo, "ethnicity", None, 1, None).accuracy;
    let masked = fit(&echo, "ethnicity", Some(&lex), 1, None).accuracy;
    ensure!(masked < unmasked, "masked accuracy {masked} not below unmasked {unmasked}");
    Ok(format!(
        "{before} identity mentions masked, none in features; echo corpus accuracy {unmasked:.3} -> {masked:.3}"
    ))
}

fn write_gazetteer(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let ny = ["Central Park", "Brooklyn Botanic Garden", "The Metropolitan Museum of Art", "New York Botanical Garden"];
    let chi = ["The Purple Pig", "Girl & the Goat", "Art Institute of Chicago", "Lincoln Park Zoo"];
    std::fs::write(dir.join("New York.json"), serde_json::to_string(&ny).unwrap()).unwrap();
    std::fs::write(dir.join("Chicago.json"), serde_json::to_string(&chi).unwrap()).unwrap();
}

fn hallucination_scanner() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let gaz = dir.path().join("gazetteer");
    write_gazetteer(&gaz);
    let rules = CompiledRules::compile(&default_rules(Some(&gaz))).unwrap();
    let dims = vec!["ethnicity".to_string(), "gender".to_string()];

    let year = "I recommend making reservations in advance, 2019, especially for The Purple Pig and Girl & the Goat, as they can get quite busy during the summer months.";
    let garden = "One of the best places to see cherry blossoms in New York City is the Floral Springs Garden in downtown Manhattan.";
    for (dest, text, rule, matched) in [
        ("Chicago", year, "misplaced-year", "2019"),
        ("New York", garden, "unverified-venue", "Floral Springs Garden"),
    ] {
        let c = Corpus::from_records(vec![record("s", persona(dest, "gender minority"), text)]);
        let r = scan_hallucinations(&c, &rules, &dims, Exec::default());
        ensure!(r.total == 1, "{} findings in {text:?}: {:?}", r.total, r.findings);
        let f = &r.findings[0];
        ensure!(f.rule_id == rule && f.matched == matched, "unexpected finding {f:?}");
        ensure!(text[f.start..f.end] == f.matched, "span does not relocate");
    }

    let mut records = Vec::new();
    let clean = "Start at Central Park, then visit the Brooklyn Botanic Garden.";
    for (gender, hits) in [("gender minority", 95), ("woman", 5), ("man", 4)] {
        for i in 0..120 {
            let text = if i < hits { year } else { clean };
            records.push(record(&format!("{gender}-{i}"), persona("New York", gender), text));
        }
    }
    let corpus = Corpus::from_records(records);
    let year_only = [misplaced_year_rule()];
    let r = scan_hallucinations(&corpus, &CompiledRules::compile(&year_only).unwrap(), &dims, Exec::default());
    let want = BTreeMap::from([("gender minority".to_string(), 95), ("man".to_string(), 4), ("woman".to_string(), 5)]);
    ensure!(r.counts["gender"] == want, "gender table {:?}", r.counts["gender"]);
    ensure!(r.total == 104, "total {}", r.total);
    for d in &dims {
        ensure!(r.counts[d].values().sum::<usize>() == r.total, "{d} counts do not sum to total");
    }
    Ok("1 finding per sentence; gender table (95, 5, 4)".into())
}

fn end_to_end_determinism() -> Outcome {
    let mut cfg = RunConfig::default().with_seed(2024);
    cfg.n = 2000;
    let mut reports = Vec::new();
    for exec in [Exec::default(), Exec::default(), Exec::Sequential] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg.clone();
        cfg.out = dir.path().to_path_buf();
        let items = pipeline::generate(&cfg).unwrap();
        let prompts = dir.path().join("prompts.jsonl");
        pipeline::write_prompts(&prompts, &items).unwrap();
        let items = pipeline::read_prompts(&prompts).unwrap();
        let out = dir.path().join("corpus.jsonl");
        pipeline::collect(&cfg, &items, &out, None).unwrap();
        let corpus = corpus::load(&[&out], false).unwrap();
        let fp = pipeline::Manifest::read_for(&out).unwrap().map(|m| m.generation_fingerprint);
        let run = pipeline::probe(&cfg, &corpus, fp, false, exec).unwrap();
        pipeline::write_probe_outputs(&run, dir.path()).unwrap();
        reports.push(std::fs::read(dir.path().join("report.json")).unwrap());
    }
    ensure!(reports[0] == reports[1], "report.json differs between identical runs");
    ensure!(reports[0] == reports[2], "report.json differs between parallel and sequential runs");
    Ok(format!("report.json identical across 3 runs ({} bytes)", reports[0].len()))
}

fn chance_thresholds() -> Outcome {
    let four = chance_level(&["a", "b", "c", "d", "a"]).unwrap();
    let three = chance_level(&["man", "woman", "gender minority"]).unwrap();
    ensure!(four == 0.25, "4 groups -> {four}");
    ensure!(three == 1.0 / 3.0, "3 groups -> {three}");
    Ok(format!("{:.2}% and {:.2}%", 100.0 * four, 100.0 * three))
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Duration); 9] = [
        (2, "tf-idf oracle", tfidf_oracle, Duration::from_secs(1)),
        (3, "vocabulary filters", vocabulary_filters, Duration::from_secs(5)),
        (4, "optimizer correctness", optimizer_correctness, Duration::from_secs(30)),
        (5, "null calibration", null_calibration, Duration::from_secs(300)),
        (6, "sensitivity and attribution recovery", sensitivity_and_recovery, Duration::from_secs(120)),
        (7, "masking leakage", masking_leakage, Duration::from_secs(300)),
        (8, "hallucination scanner", hallucination_scanner, Duration::from_secs(1)),
        (9, "end-to-end determinism", end_to_end_determinism, Duration::from_secs(300)),
        (10, "chance thresholds", chance_thresholds, Duration::from_secs(1)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
