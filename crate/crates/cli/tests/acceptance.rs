//! Acceptance gate. Each check below exercises one release criterion and
//! prints a single PASS/FAIL line; the process exits non-zero if any fails.
//!
//! Run with `cargo test -p memeguard-cli --test acceptance`.

#[path = "../../augment/tests/common/mod.rs"]
mod fixtures;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use memeguard_annotate::{
    agreement_rate, init_store, quality_distributions, router, sample_tasks, Ratings, Stats, Store, StoreConfig,
    TaskKind, Verdict, EVENTS_FILE,
};
use memeguard_augment::{
    render_overlay, AttributionResult, HateModality, OverlayStyle, Pipeline, PipelineOptions, RenderMode,
    SimilarityMode, Status,
};
use memeguard_core::{
    compose_prompt, enumerate_configs, filter_consistent, load_manifest, scale_to_binary, sha256_hex, ImageStore,
    Label, LabelFormat, Manifest, MemeRecord, Origin, ScaledLabel, Split, Strategy, Typology,
};
use memeguard_eval::{
    accuracy, bootstrap_interval, run_matrix, weighted_f1, Classifiers, EvalOptions, EvalReport, Metric, Parsed,
    Prediction,
};
use memeguard_gateway::{mock_backend, AgentProfile, Gateway, MockScript, RequestParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// Hash of the local overlay render of [`render_source`] with
/// [`RENDER_CAPTION`] and the default style.
const FROZEN_RENDER_SHA256: &str = "90d05d731e6fac8282c31b9afa878ed63505332292ecead47a42e430b247a779";
const RENDER_CAPTION: &str = "when the monday meeting could have been an email";

fn main() {
    let checks: [Check; 10] = [
        ("prompt golden files", prompt_golden),
        ("score mapping and filter", mapping_and_filter),
        ("attribution truth table", attribution),
        ("metric oracle", metric_oracle),
        ("factorial completeness", factorial),
        ("end-to-end mock pipeline", end_to_end),
        ("renderer determinism", renderer_determinism),
        ("bootstrap determinism", bootstrap),
        ("annotation statistics", annotation_stats),
        ("service contract", service_contract),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2} {name:<26} {detail} [{secs:.2}s]", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {:>2} {name:<26} {reason} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn prompt_golden() -> Outcome {
    let start = Instant::now();
    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let headings = [
        "1. Sexual aggression",
        "2. Hate based on ideology",
        "3. Racism and xenophobia",
        "4. Bigotry",
        "5. Miscellaneous Hate Speech",
    ];
    for strategy in Strategy::ALL {
        for label in LabelFormat::ALL {
            let text = compose_prompt(strategy, label).text;
            let path = golden_dir.join(format!("{strategy}_{label}.txt"));
            let golden = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            ensure!(text.as_bytes() == golden.as_slice(), "{strategy}/{label} differs from {}", path.display());
            if strategy == Strategy::Category {
                for h in headings {
                    ensure!(text.matches(h).count() == 1, "{strategy}/{label}: {h:?} not present exactly once");
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok("4 cells byte-identical, 5 taxonomy headings once each".into())
}

fn mapping_and_filter() -> Outcome {
    for score in 0..=9 {
        let expected = if score >= 5 { Label::Hateful } else { Label::NotHateful };
        ensure!(scale_to_binary(score).ok() == Some(expected), "score {score}");
    }
    ensure!(scale_to_binary(-1).is_err() && scale_to_binary(10).is_err(), "out-of-range scores accepted");

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let records: Vec<MemeRecord> = (0..100)
        .map(|i| MemeRecord {
            id: format!("m{i}"),
            image_ref: format!("images/{i}.png"),
            caption: format!("caption {i}"),
            label: Label::from_bool(rng.random_bool(0.5)),
            split: Split::Train,
            origin: Origin::Original,
            source_id: None,
        })
        .collect();
    let scaled: Vec<ScaledLabel> = (0..100)
        .map(|i| ScaledLabel {
            meme_id: format!("m{i}"),
            score: rng.random_range(0..10),
            teacher_id: "teacher".into(),
            consistent: false,
        })
        .collect();
    let manifest = Manifest::new(records.clone());
    let outcome = filter_consistent(&scaled, &manifest).map_err(|e| e.to_string())?;
    // Brute force: a score survives iff its 5-9 / 0-4 bucket equals the gold label.
    let expected: Vec<&str> = scaled
        .iter()
        .zip(&records)
        .filter(|(s, r)| (s.score >= 5) == (r.label == Label::Hateful))
        .map(|(s, _)| s.meme_id.as_str())
        .collect();
    let kept: Vec<&str> = outcome.kept.iter().map(|s| s.meme_id.as_str()).collect();
    ensure!(kept == expected, "kept {} entries, brute force {}", kept.len(), expected.len());
    let flagged = outcome.annotated.iter().filter(|s| s.consistent).count();
    ensure!(flagged == expected.len(), "consistent flags disagree");
    Ok(format!("10/10 scores bucketed, filter kept {}/100 as brute force", kept.len()))
}

fn attribution() -> Outcome {
    let table = [
        (true, true, Typology::HH, HateModality::Both),
        (false, true, Typology::HN, HateModality::Image),
        (true, false, Typology::NH, HateModality::Text),
        (false, false, Typology::NN, HateModality::None),
    ];
    for (caption, background, typology, modality) in table {
        let a = AttributionResult::from_verdicts("m", caption, background);
        ensure!(a.typology == typology && a.modality == modality, "caption={caption} background={background}");
        ensure!(a.is_eligible() == (typology == Typology::NH), "eligibility of {typology}");
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut augmented_total = 0;
    for case in 0..1000 {
        let specs: Vec<fixtures::Spec> = (0..rng.random_range(1..=5))
            .map(|_| fixtures::Spec {
                caption_hateful: rng.random_bool(0.6),
                background_hateful: rng.random_bool(0.4),
                rewrite_ok: rng.random_bool(0.8),
                similar: rng.random_bool(0.8),
            })
            .collect();
        let dir = tmp.path().join(format!("c{case}"));
        let corpus = fixtures::corpus(&dir, &specs, rng.random_range(0..3));
        let gateway = fixtures::gateway(&corpus, None);
        let options = PipelineOptions {
            workers: 1,
            ..fixtures::local_options()
        };
        let pipeline = Pipeline::new(&gateway, fixtures::agents(), options).map_err(|e| e.to_string())?;
        let input = load_manifest(&dir.join("manifest.jsonl")).map_err(|e| e.to_string())?;
        let out = pipeline.run(&input, &dir.join("out")).map_err(|e| e.to_string())?;
        let mut augmented = 0;
        for r in out.manifest.records.iter().filter(|r| r.origin == Origin::Augmented) {
            let source = r.source_id.as_deref().ok_or("augmented record without source")?;
            let i: usize = source[1..].parse().map_err(|_| format!("unexpected source {source}"))?;
            let spec = specs[i];
            ensure!(
                spec.caption_hateful && !spec.background_hateful,
                "case {case}: {} augmented from a non-NH source {source}",
                r.id
            );
            augmented += 1;
        }
        for rec in &out.records {
            if rec.status == Status::Verified {
                let typology = rec.attribution.as_ref().map(|a| a.typology);
                ensure!(typology == Some(Typology::NH), "case {case}: verified record typed {typology:?}");
            }
        }
        let expected = specs.iter().filter(|s| s.expect_verified()).count();
        ensure!(augmented == expected, "case {case}: {augmented} augmented, expected {expected}");
        augmented_total += augmented;
        std::fs::remove_dir_all(&dir).ok();
    }
    Ok(format!("4/4 verdict combinations; 1000 random corpora, {augmented_total} augmentations all from NH sources"))
}

/// Independent reference: per-class F1 as 2tp / (2tp + fp + fn), weighted by support.
fn reference_scores(gold: &[bool], pred: &[bool]) -> (f64, f64) {
    let n = gold.len() as f64;
    let mut m = [[0usize; 2]; 2];
    for (g, p) in gold.iter().zip(pred) {
        m[*g as usize][*p as usize] += 1;
    }
    let acc = (m[0][0] + m[1][1]) as f64 / n;
    let mut f1 = 0.0;
    for c in 0..2 {
        let tp = m[c][c] as f64;
        let fp = m[1 - c][c] as f64;
        let fneg = m[c][1 - c] as f64;
        let support = (m[c][0] + m[c][1]) as f64;
        let denom = 2.0 * tp + fp + fneg;
        if denom > 0.0 {
            f1 += support * (2.0 * tp / denom);
        }
    }
    (acc, f1 / n)
}

fn to_pairs(gold: &[bool], pred: &[bool]) -> Vec<(Label, Label)> {
    gold.iter()
        .zip(pred)
        .map(|(g, p)| (Label::from_bool(*g), Label::from_bool(*p)))
        .collect()
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(1..=20);
        let gold: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let pairs = to_pairs(&gold, &pred);
        let (acc, f1) = reference_scores(&gold, &pred);
        let da = (accuracy(&pairs).map_err(|e| e.to_string())? - acc).abs();
        let df = (weighted_f1(&pairs).map_err(|e| e.to_string())? - f1).abs();
        ensure!(da <= 1e-12 && df <= 1e-12, "case {case}: accuracy diff {da}, F1 diff {df}");
        worst = worst.max(da).max(df);
    }
    let a = weighted_f1(&to_pairs(&[true, false, true, false], &[true, false, false, false])).map_err(|e| e.to_string())?;
    ensure!((a - 11.0 / 15.0).abs() < 1e-15, "hand case 11/15 gave {a}");
    let b = weighted_f1(&to_pairs(&[true, true, false, false], &[false; 4])).map_err(|e| e.to_string())?;
    ensure!((b - 1.0 / 3.0).abs() < 1e-15, "hand case 1/3 gave {b}");
    Ok(format!("1000 instances, max deviation {worst:.1e}; hand cases 0.7333 and 0.3333"))
}

fn small_png(seed: u32) -> Vec<u8> {
    let img = image::RgbImage::from_pixel(4, 4, image::Rgb([seed as u8, (seed >> 8) as u8, 9]));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("encode png");
    out.into_inner()
}

fn factorial() -> Outcome {
    let configs = enumerate_configs();
    let distinct: HashSet<_> = configs.iter().collect();
    ensure!(configs.len() == 12 && distinct.len() == 12, "{} configs, {} distinct", configs.len(), distinct.len());

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = ImageStore::open(tmp.path()).map_err(|e| e.to_string())?;
    let records = (0..50)
        .map(|i| {
            let hateful = i % 2 == 0;
            MemeRecord {
                id: format!("m{i}"),
                image_ref: store.put(&small_png(i), "png").expect("store image"),
                caption: if hateful { format!("meme {i} «H»") } else { format!("meme {i}") },
                label: Label::from_bool(hateful),
                split: Split::Test,
                origin: Origin::Original,
                source_id: None,
            }
        })
        .collect();
    let path = tmp.path().join("manifest.jsonl");
    Manifest::new(records).save(&path).map_err(|e| e.to_string())?;
    let input = load_manifest(&path).map_err(|e| e.to_string())?;
    // Answers in both formats at once: the binary parser reads the verdict,
    // the scale parser the first integer.
    let oracle = MockScript::with_default("FALSE 1").rule("«H»", "TRUE 8");
    let gateway = Gateway::builder().route("clf", Arc::new(mock_backend(oracle))).build();
    let classifiers = Classifiers::uniform(AgentProfile::new("clf", RequestParams::default()));
    let options = EvalOptions {
        resamples: 200,
        ..EvalOptions::default()
    };
    let runs = run_matrix(&gateway, &classifiers, &input, &configs, &options).map_err(|e| e.to_string())?;
    ensure!(runs.len() == 12, "{} reports", runs.len());
    for run in &runs {
        let r = &run.report;
        ensure!(
            r.n == 50 && r.accuracy == Some(1.0) && r.weighted_f1 == Some(1.0),
            "{}: n={} acc={:?} f1={:?}",
            r.config,
            r.n,
            r.accuracy,
            r.weighted_f1
        );
    }
    Ok("12 distinct cells, 12 reports with accuracy = F1 = 1.0 on 50 memes".into())
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("read dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").display().to_string();
                out.insert(rel, std::fs::read(&path).expect("read file"));
            }
        }
    }
    out
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut specs = Vec::new();
    specs.extend(std::iter::repeat_n(fixtures::Spec::typed(true, false), 6));
    specs.extend(std::iter::repeat_n(fixtures::Spec::typed(true, true), 4));
    specs.extend(std::iter::repeat_n(fixtures::Spec::typed(false, true), 2));
    specs.extend(std::iter::repeat_n(fixtures::Spec::typed(false, false), 8));
    let corpus = fixtures::corpus(tmp.path(), &specs, 0);
    let input = load_manifest(&tmp.path().join("manifest.jsonl")).map_err(|e| e.to_string())?;
    let cache = tmp.path().join("cache");
    let options = PipelineOptions {
        render: RenderMode::Remote { fallback: true },
        similarity: SimilarityMode::Judge,
        ..PipelineOptions::default()
    };

    let cold = fixtures::gateway(&corpus, Some(&cache));
    let first = Pipeline::new(&cold, fixtures::agents(), options.clone())
        .and_then(|p| p.run(&input, &tmp.path().join("run1")))
        .map_err(|e| e.to_string())?;
    let augmented: Vec<&MemeRecord> = first
        .manifest
        .records
        .iter()
        .filter(|r| r.origin == Origin::Augmented)
        .collect();
    ensure!(augmented.len() == 6, "{} augmented records", augmented.len());
    for r in &augmented {
        let source = r.source_id.as_deref().unwrap_or_default();
        let i: usize = source.trim_start_matches('h').parse().map_err(|_| format!("bad source {source:?}"))?;
        ensure!(r.label == Label::NotHateful, "{} has label {:?}", r.id, r.label);
        ensure!(i < 6, "{} derived from {source}, which is not NH", r.id);
        ensure!(first.manifest.get(source).is_some(), "source {source} missing from the output");
    }
    let funnel = &first.funnel;
    ensure!(funnel.is_conserved(), "funnel not conserved: {funnel:?}");
    ensure!(funnel.inputs == 20, "{} funnel inputs", funnel.inputs);
    let verified = funnel.counts.get(&Status::Verified).copied().unwrap_or(0);
    let ineligible = funnel.counts.get(&Status::Ineligible).copied().unwrap_or(0);
    ensure!(verified == 6 && ineligible == 14, "verified {verified}, ineligible {ineligible}");
    let cold_calls = cold.backend_calls();

    let warm = fixtures::gateway(&corpus, Some(&cache));
    Pipeline::new(&warm, fixtures::agents(), options)
        .and_then(|p| p.run(&input, &tmp.path().join("run2")))
        .map_err(|e| e.to_string())?;
    ensure!(warm.backend_calls() == 0, "warm run made {} backend calls", warm.backend_calls());
    let a = read_tree(&tmp.path().join("run1"));
    let b = read_tree(&tmp.path().join("run2"));
    ensure!(a.keys().eq(b.keys()), "output file sets differ");
    for (name, bytes) in &a {
        ensure!(b[name] == *bytes, "{name} differs between cold and warm runs");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "6/20 verified (label 0, NH lineage), funnel conserved; warm replay of {} files byte-identical, 0 of {cold_calls} calls repeated",
        a.len()
    ))
}

fn render_source() -> Vec<u8> {
    let img = image::RgbImage::from_fn(240, 180, |x, y| image::Rgb([(x % 256) as u8, (y * 2 % 256) as u8, ((x + y) % 97) as u8]));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("encode png");
    out.into_inner()
}

fn renderer_determinism() -> Outcome {
    let source = render_source();
    let style = OverlayStyle::default();
    let hashes: Vec<String> = (0..5)
        .map(|_| render_overlay(&source, RENDER_CAPTION, &style).map(|b| sha256_hex(&b)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure!(hashes.iter().all(|h| *h == hashes[0]), "renders differ across runs: {hashes:?}");
    ensure!(
        hashes[0] == FROZEN_RENDER_SHA256,
        "render hash {} does not match the frozen {FROZEN_RENDER_SHA256}",
        hashes[0]
    );
    Ok(format!(
        "5 identical renders, sha256 {} matches the frozen hash ({} {})",
        &hashes[0][..16],
        std::env::consts::OS,
        std::env::consts::ARCH
    ))
}

fn predictions(rng: &mut ChaCha8Rng) -> Vec<Prediction> {
    let config = enumerate_configs()[0];
    let accuracy = rng.random_range(0.3..1.0);
    (0..rng.random_range(5..80))
        .map(|i| {
            let gold = rng.random_bool(0.5);
            let pred = if rng.random_bool(accuracy) { gold } else { !gold };
            Prediction {
                meme_id: format!("m{i}"),
                config,
                gold: Label::from_bool(gold),
                raw: String::new(),
                parsed: Some(Parsed::Verdict(pred)),
                mapped: Some(Label::from_bool(pred)),
                valid: true,
                attempts: 1,
                error: None,
            }
        })
        .collect()
}

fn bootstrap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut widened = 0;
    for case in 0..100 {
        let preds = predictions(&mut rng);
        let seed = rng.random();
        let a = EvalReport::from_predictions(preds[0].config, &preds, seed, 1000);
        let b = EvalReport::from_predictions(preds[0].config, &preds, seed, 1000);
        ensure!(a == b, "case {case}: same seed gave different reports");
        let (acc, f1) = (a.accuracy.unwrap_or(f64::NAN), a.weighted_f1.unwrap_or(f64::NAN));
        let (ia, i_f) = (a.interval_accuracy.ok_or("no interval")?, a.interval_f1.ok_or("no interval")?);
        ensure!(ia.lo <= acc && acc <= ia.hi, "case {case}: accuracy {acc} outside {ia:?}");
        ensure!(i_f.lo <= f1 && f1 <= i_f.hi, "case {case}: F1 {f1} outside {i_f:?}");
        let pairs: Vec<(Label, Label)> = preds.iter().map(|p| (p.gold, p.mapped.unwrap())).collect();
        let (lo, hi) = bootstrap_interval(&pairs, Metric::WeightedF1, 1000, seed).map_err(|e| e.to_string())?;
        if !(lo <= f1 && f1 <= hi) {
            widened += 1;
        }
    }
    Ok(format!(
        "100 sets reproducible under a fixed seed, every interval contains its point ({widened} raw F1 percentile intervals widened)"
    ))
}

fn annotation_stats() -> Outcome {
    let mut verdicts = vec![Verdict::Agree; 178];
    verdicts.extend(vec![Verdict::Disagree; 22]);
    let rate = agreement_rate(&verdicts).map_err(|e| e.to_string())?;
    ensure!(rate == 0.89, "agreement rate {rate}");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut items = Vec::new();
    for i in 0..200 {
        let missing = i % 29 == 3 && items.iter().filter(|(_, m)| *m).count() < 7;
        let mut score = || rng.random_range(0..=5u8);
        let ratings = Ratings {
            formatting: score(),
            background_alignment: score(),
            caption_alignment: if missing { None } else { Some(score()) },
            overall: score(),
        };
        items.push((ratings, missing));
    }
    ensure!(items.iter().filter(|(_, m)| *m).count() == 7, "fixture should flag 7 missing captions");
    let d = quality_distributions(&items).map_err(|e| e.to_string())?;
    let caption: usize = d.caption_alignment.iter().sum();
    ensure!(caption == 193 && d.caption_missing == 7, "caption histogram {caption}, missing {}", d.caption_missing);
    for (name, h) in [("formatting", d.formatting), ("background", d.background_alignment), ("overall", d.overall)] {
        ensure!(h.iter().sum::<usize>() == 200, "{name} histogram does not sum to 200");
    }
    Ok("178/200 agree = 0.89; caption_alignment histogram 193 + 7 missing".into())
}

fn annotation_store(dir: &Path) -> Result<Arc<Store>, String> {
    let src = dir.join("src");
    let images = ImageStore::open(&src).map_err(|e| e.to_string())?;
    let mut records = Vec::new();
    for i in 0..3u32 {
        let original = format!("m{i}");
        records.push(MemeRecord {
            id: original.clone(),
            image_ref: images.put(&small_png(i), "png").map_err(|e| e.to_string())?,
            caption: format!("original caption {i}"),
            label: Label::Hateful,
            split: Split::Test,
            origin: Origin::Original,
            source_id: None,
        });
        records.push(MemeRecord {
            id: format!("{original}_aug"),
            image_ref: images.put(&small_png(100 + i), "png").map_err(|e| e.to_string())?,
            caption: format!("rewritten caption {i}"),
            label: Label::NotHateful,
            split: Split::Test,
            origin: Origin::Augmented,
            source_id: Some(original),
        });
    }
    let path = src.join("manifest.jsonl");
    Manifest::new(records).save(&path).map_err(|e| e.to_string())?;
    let input = load_manifest(&path).map_err(|e| e.to_string())?;
    let tasks = sample_tasks(&input.manifest, TaskKind::PairQuality, 2, 42).map_err(|e| e.to_string())?;
    let store_dir = dir.join("store");
    init_store(&store_dir, &input, &tasks, &StoreConfig::default()).map_err(|e| e.to_string())?;
    Store::open(&store_dir).map(Arc::new).map_err(|e| e.to_string())
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.expect("router is infallible");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("body").to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .expect("request")
}

fn service_contract() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = annotation_store(tmp.path())?;
    let app = router(store.clone());
    let log = store.dir().join(EVENTS_FILE);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let (status, next) = send(&app, Request::get("/tasks/next?annotator=ann&kind=pair_quality").body(Body::empty()).unwrap()).await;
        ensure!(status == StatusCode::OK, "next task: {status}");
        let task = &next["task"];
        let task_id = task["task_id"].as_str().ok_or("no task served")?.to_string();
        ensure!(task["media"].as_array().map(Vec::len) == Some(2), "pair task should show two images");
        let uri = format!("/tasks/{task_id}/response");

        let bad = json!({"annotator": "ann", "ratings": {"formatting": 4, "background_alignment": 5, "caption_alignment": 3, "overall": 7}});
        let (status, _) = send(&app, post(&uri, &bad)).await;
        ensure!(status == StatusCode::UNPROCESSABLE_ENTITY, "rating 7 gave {status}");

        let good = json!({"annotator": "ann", "ratings": {"formatting": 4, "background_alignment": 5, "caption_alignment": 3, "overall": 4}});
        let (status, body) = send(&app, post(&uri, &good)).await;
        ensure!(status == StatusCode::OK && body["status"] == "stored", "first submission: {status} {body}");
        let persisted = std::fs::read(&log).map_err(|e| e.to_string())?;

        let (status, body) = send(&app, post(&uri, &good)).await;
        ensure!(status == StatusCode::OK && body["status"] == "unchanged", "resubmission: {status} {body}");
        ensure!(std::fs::read(&log).map_err(|e| e.to_string())? == persisted, "resubmission changed the store");

        let conflicting = json!({"annotator": "ann", "ratings": {"formatting": 1, "background_alignment": 5, "caption_alignment": 3, "overall": 4}});
        let (status, _) = send(&app, post(&uri, &conflicting)).await;
        ensure!(status == StatusCode::CONFLICT, "conflicting resubmission gave {status}");
        let (status, _) = send(&app, post("/tasks/none/response", &good)).await;
        ensure!(status == StatusCode::NOT_FOUND, "unknown task gave {status}");

        let (status, body) = send(&app, Request::get("/stats").body(Body::empty()).unwrap()).await;
        ensure!(status == StatusCode::OK, "stats: {status}");
        let stats: Stats = serde_json::from_value(body).map_err(|e| e.to_string())?;
        let q = stats.pair_quality.ok_or("no pair statistics")?;
        ensure!(stats.pair_tasks.completed == 1 && q.overall == [0, 0, 0, 0, 1, 0], "stats {q:?}");
        let reopened = Store::open(store.dir()).map_err(|e| e.to_string())?.stats();
        ensure!(reopened == store.stats(), "stats rebuilt from disk differ");
        Ok("fetch, 422 on rating 7, store, idempotent resubmit, 409, 404, stats match reload".to_string())
    })
}
