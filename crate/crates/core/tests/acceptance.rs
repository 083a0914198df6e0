//! Acceptance gate: one PASS/FAIL line per criterion. Exits non-zero if any fail.
//!
//! cargo test --release --test acceptance

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcia::corpus::{degraded_quality_set, desk_corpus, synthesize, CorpusSpec};
use qcia::degrade::{
    assign_mixed_classes, degrade, enumerate_classes, DatasetManifest, ManifestEntry, QualityClass, QualityKind,
    QualityTaxonomy,
};
use qcia::eval::{
    adjacent_accuracy, confusion, cross_quality_matrix, mixed_quality_experiment, routed_setting, CrossQualityConfig,
    EvalItem, ExperimentReport, MixedExperimentConfig, SyntheticAnalyzer, SyntheticAnalyzerProfile, MIXED, ORACLE,
    STANDARD,
};
use qcia::imageio::{decode_pnm, encode_pnm, jpeg_quant_table, QuantTable, Raster};
use qcia::neuralnet::{
    argmax, build_network, decode_checkpoint, encode_checkpoint, grad_check, random_check_case, train, ArchSpec,
    LabeledPatch, TrainConfig,
};
use qcia::qualitynet::{
    fuse_quality, predict_quality, train_predictor, ArchProfile, LevelScores, PredictorConfig, QualityPrediction,
    QualityPredictor, TypeScores,
};
use qcia::routing::{nms, AnalyzerRegistry, Detection, Task};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: qcia::Error) -> String {
    e.to_string()
}

// 1

fn gradients() -> Outcome {
    let nets = 24;
    let mut worst = 0.0f64;
    for i in 0..nets {
        let case = random_check_case(1000 + i).map_err(err)?;
        let e = grad_check(&case.net, &case.batch, &case.labels, 1e-5).map_err(err)?;
        worst = worst.max(e);
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:.3e} over {nets} nets"))?;
    Ok(format!("{nets} random nets, worst relative error {worst:.2e} < 1e-4"))
}

// 2

/// Keeps a box exactly when no kept box with a higher score (or an equal score and
/// earlier position) overlaps it by more than the threshold. Tries every subset.
fn exhaustive_nms(dets: &[Detection], thresh: f64) -> Vec<Detection> {
    let overlap = |a: &[f64; 4], b: &[f64; 4]| {
        let (ax2, ay2, bx2, by2) = (a[0] + a[2], a[1] + a[3], b[0] + b[2], b[1] + b[3]);
        let w = ax2.min(bx2) - a[0].max(b[0]);
        let h = ay2.min(by2) - a[1].max(b[1]);
        if w <= 0.0 || h <= 0.0 {
            return 0.0;
        }
        let inter = w * h;
        inter / (a[2] * a[3] + b[2] * b[3] - inter)
    };
    let n = dets.len();
    let ahead = |j: usize, i: usize| dets[j].score > dets[i].score || (dets[j].score == dets[i].score && j < i);
    for mask in 0u32..(1 << n) {
        let kept = |i: usize| mask >> i & 1 == 1;
        let consistent = (0..n).all(|i| {
            let blocked = (0..n).any(|j| j != i && kept(j) && ahead(j, i) && overlap(&dets[j].bbox, &dets[i].bbox) > thresh);
            kept(i) != blocked
        });
        if consistent {
            let mut out: Vec<usize> = (0..n).filter(|&i| kept(i)).collect();
            out.sort_by(|&a, &b| if ahead(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
            return out.into_iter().map(|i| dets[i]).collect();
        }
    }
    unreachable!()
}

fn nms_oracle() -> Outcome {
    let trials = 12_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let thresholds = [0.3, 0.5, 0.7];
    for t in 0..trials {
        let n = rng.random_range(0..=8);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let b = [
                    rng.random_range(0..40) as f64,
                    rng.random_range(0..40) as f64,
                    rng.random_range(1..30) as f64,
                    rng.random_range(1..30) as f64,
                ];
                Detection::new(b, rng.random_range(0..6) as f64 / 5.0)
            })
            .collect();
        let thresh = thresholds[t % 3];
        let (got, want) = (nms(&dets, thresh), exhaustive_nms(&dets, thresh));
        ensure(got == want, || format!("trial {t}: {dets:?} at {thresh} gave {got:?}, oracle {want:?}"))?;
    }
    Ok(format!("{trials} seeded trials with up to 8 boxes match the exhaustive oracle"))
}

// 3

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn fusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 10_000;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (m, n) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let t = simplex(&mut rng, 3);
        let lj = LevelScores { family: QualityKind::BJ, probs: simplex(&mut rng, m + 1) };
        let ll = LevelScores { family: QualityKind::BL, probs: simplex(&mut rng, n + 1) };
        let p = fuse_quality(&TypeScores::new(t[0], t[1], t[2]), &lj, &ll).map_err(err)?;
        ensure(p.probs.len() == 1 + m + n && p.probs.iter().all(|&x| x >= 0.0), || format!("bad vector {:?}", p.probs))?;
        worst = worst.max((p.probs.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst <= 1e-6, || format!("sum off by {worst:e}"))?;

    let levels = |family, probs: Vec<f64>| LevelScores { family, probs };
    let uniform = |family| levels(family, [vec![0.0], vec![0.1; 10]].concat());

    let pure_g = fuse_quality(&TypeScores::new(1.0, 0.0, 0.0), &uniform(QualityKind::BJ), &uniform(QualityKind::BL)).map_err(err)?;
    let mut one_hot = vec![0.0; 21];
    one_hot[0] = 1.0;
    ensure(pure_g.probs == one_hot, || format!("pure G gave {:?}", pure_g.probs))?;

    let split = fuse_quality(&TypeScores::new(0.2, 0.8, 0.0), &uniform(QualityKind::BJ), &uniform(QualityKind::BL)).map_err(err)?;
    ensure(split.probs[0] == 0.2, || format!("G entry {}", split.probs[0]))?;
    ensure(split.probs[1..11].iter().all(|&x| (x - 0.08).abs() < 1e-15), || format!("BJ entries {:?}", &split.probs[1..11]))?;
    ensure((split.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12, || "split does not sum to 1".into())?;

    let renorm = fuse_quality(
        &TypeScores::new(0.0, 1.0, 0.0),
        &levels(QualityKind::BJ, [vec![0.2], vec![0.08; 10]].concat()),
        &uniform(QualityKind::BL),
    )
    .map_err(err)?;
    ensure(renorm.probs[1..11].iter().all(|&x| (x - 0.1).abs() < 1e-15), || format!("renormalized {:?}", &renorm.probs[1..11]))?;
    Ok(format!("{trials} random simplices sum to 1 within {worst:.1e}; three worked examples match"))
}

// 4

fn quant_tables() -> Outcome {
    for base in [QuantTable::standard_luma(), QuantTable::standard_chroma()] {
        let q50 = jpeg_quant_table(&base, 50).map_err(err)?;
        ensure(q50 == base, || "Q=50 differs from the base table".into())?;
        let q100 = jpeg_quant_table(&base, 100).map_err(err)?;
        ensure(q100.values().iter().all(|&v| v == 1), || "Q=100 is not all ones".into())?;
        let mut prev = jpeg_quant_table(&base, 1).map_err(err)?;
        for q in 2..=100 {
            let cur = jpeg_quant_table(&base, q).map_err(err)?;
            ensure(cur.values().iter().zip(prev.values()).all(|(c, p)| c <= p), || format!("table grows at Q={q}"))?;
            prev = cur;
        }
    }
    let q10 = jpeg_quant_table(&QuantTable::standard_luma(), 10).map_err(err)?;
    ensure(q10.get(0, 0) == 80, || format!("Q=10 DC entry {}", q10.get(0, 0)))?;
    Ok("Q=50 identity, Q=100 all ones, nonincreasing over Q=1..100 for both tables".into())
}

// 5

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn severity() -> Outcome {
    let tax = QualityTaxonomy::default();
    let corpus = desk_corpus(&CorpusSpec { count: 12, ..CorpusSpec::default() });
    let mut summary = Vec::new();
    for (family, levels) in [("BJ", tax.m()), ("BL", tax.n())] {
        let mut mae = Vec::with_capacity(levels);
        for level in 1..=levels {
            let c = if family == "BJ" { QualityClass::BJ(level) } else { QualityClass::BL(level) };
            let mut total = 0.0;
            for img in &corpus {
                total += degrade(&img.image, c, &tax).map_err(err)?.mean_abs_diff(&img.image);
            }
            mae.push(total / corpus.len() as f64);
        }
        let severity: Vec<f64> = (1..=levels).map(|l| l as f64).collect();
        let rho = spearman(&severity, &mae);
        ensure(rho >= 0.9, || format!("{family} Spearman {rho:.3}, errors {mae:?}"))?;
        summary.push(format!("{family} rho {rho:.3}"));
    }
    Ok(format!("{} over {} images", summary.join(", "), corpus.len()))
}

// 6, 7, 8 share one trained predictor

struct Trained {
    predictor: QualityPredictor,
    test: Vec<(Raster, QualityClass)>,
    elapsed: Duration,
}

fn train_desk_predictor() -> qcia::Result<Trained> {
    let start = Instant::now();
    let tax = QualityTaxonomy::desk();
    let train_set = degraded_quality_set(&CorpusSpec { count: 1200, seed: 1, ..CorpusSpec::default() }, &tax)?;
    let tcfg = TrainConfig { epochs: 12, batch_size: 16, seed: 7, ..TrainConfig::default() };
    let (predictor, _) = train_predictor(&train_set, &tax, &PredictorConfig::default(), ArchProfile::Desk, &tcfg, 2)?;
    let test = degraded_quality_set(&CorpusSpec { count: 330, seed: 2, ..CorpusSpec::default() }, &tax)?;
    Ok(Trained { predictor, test, elapsed: start.elapsed() })
}

fn predictions(t: &Trained) -> qcia::Result<Vec<QualityPrediction>> {
    t.test.iter().map(|(img, _)| predict_quality(&t.predictor, img, &t.predictor.config)).collect()
}

fn type_accuracy(t: &Trained, preds: &[QualityPrediction]) -> Outcome {
    let correct = preds.iter().zip(&t.test).filter(|(p, (_, c))| p.type_scores.argmax() == c.kind()).count();
    let acc = correct as f64 / preds.len() as f64;
    ensure(acc >= 0.95, || format!("held-out type accuracy {acc:.3}"))?;
    ensure(t.elapsed < Duration::from_secs(20 * 60), || format!("training took {:.0?}", t.elapsed))?;
    Ok(format!("held-out type accuracy {acc:.3} on {} images (>= 0.95), trained in {:.0?}", preds.len(), t.elapsed))
}

fn level_accuracy(t: &Trained, preds: &[QualityPrediction]) -> Outcome {
    let mut summary = Vec::new();
    for family in [QualityKind::BJ, QualityKind::BL] {
        let (mut guess, mut truth) = (Vec::new(), Vec::new());
        for (p, (_, c)) in preds.iter().zip(&t.test) {
            let label = match *c {
                QualityClass::G => 0,
                c if c.kind() == family => c.level().unwrap(),
                _ => continue,
            };
            let scores = if family == QualityKind::BJ { &p.bj_levels } else { &p.bl_levels };
            guess.push(argmax(&scores.probs));
            truth.push(label);
        }
        let cm = confusion(&guess, &truth, 6).map_err(err)?;
        let adj = adjacent_accuracy(&cm, 1);
        ensure(adj >= 0.9, || format!("{family:?} adjacent accuracy {adj:.3}"))?;
        summary.push(format!("{family:?} {adj:.3} on {}", truth.len()));
    }
    Ok(format!("held-out adjacent accuracy (radius 1): {} (>= 0.90)", summary.join(", ")))
}

fn routing_order(t: &Trained) -> Outcome {
    let tax = QualityTaxonomy::desk();
    let count = 600;
    let spec = CorpusSpec { count, seed: 3, ..CorpusSpec::default() };
    let classes = assign_mixed_classes(count, &tax, 11);
    let items = (0..count)
        .map(|i| {
            let src = synthesize(&spec, i);
            let img = degrade(&src.image, classes[i], &tax)?;
            Ok(EvalItem { width: img.width(), height: img.height(), image: Some(img), truth: src.payload, class: classes[i], key: i as u64 })
        })
        .collect::<qcia::Result<Vec<_>>>()
        .map_err(err)?;
    let mut lines = Vec::new();
    for task in [Task::Detect, Task::Recognize] {
        let profile = SyntheticAnalyzerProfile { seed: 21, ..SyntheticAnalyzerProfile::default() };
        let registry = AnalyzerRegistry::synthetic(task, &tax, &profile).map_err(err)?;
        let pooled = SyntheticAnalyzer::pooled(profile, task, &tax).map_err(err)?;
        let cfg = MixedExperimentConfig { seed: 21, ..MixedExperimentConfig::default() };
        let r = mixed_quality_experiment(&cfg, &items, &registry, Some(&pooled), &t.predictor).map_err(err)?;
        let m = |s: &str| r.metric(s).unwrap();
        let (k1, k3, k5) = (m(&routed_setting(1)), m(&routed_setting(3)), m(&routed_setting(5)));
        let shape = format!(
            "{task:?}: standard {:.3} < mixed {:.3} < oracle {:.3}; K1 {k1:.3}, K3 {k3:.3}, K5 {k5:.3}",
            m(STANDARD),
            m(MIXED),
            m(ORACLE)
        );
        let required =
            ["standard < mixed", "mixed < oracle", "routed K=3 >= mixed", "routed K=1 <= K=3 within tolerance", "routed K=3 <= K=5 within tolerance"];
        for name in required {
            ensure(r.check(name) == Some(true), || format!("{shape}: `{name}` fails"))?;
        }
        lines.push(shape);
    }
    Ok(format!("{count} mixed images with the trained predictor; {}", lines.join("; ")))
}

// 9

fn cross_quality() -> Outcome {
    let mut lines = Vec::new();
    for task in [Task::Detect, Task::Recognize] {
        let r: ExperimentReport = cross_quality_matrix(&CrossQualityConfig { task, seed: 5, ..CrossQualityConfig::default() }).map_err(err)?;
        let failing: Vec<&str> = r.checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
        ensure(failing.is_empty(), || format!("{task:?}: {failing:?}"))?;
        let l = r.matrix.as_ref().unwrap().labels.len();
        lines.push(format!("{task:?} {l}x{l} matched {:.3} vs mismatched {:.3}", r.metric("matched").unwrap(), r.metric("mismatched").unwrap()));
    }
    Ok(format!("every row diagonally dominant: {}", lines.join(", ")))
}

// 10

fn determinism() -> Outcome {
    let arch = ArchSpec::desk_scale(1, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data: Vec<LabeledPatch> = (0..48)
        .map(|i| LabeledPatch { data: (0..arch.input.len()).map(|_| rng.random_range(-1.0..1.0)).collect(), label: i % 3 })
        .collect();
    let cfg = TrainConfig { epochs: 2, batch_size: 8, seed: 4, ..TrainConfig::default() };
    let net = build_network(&arch, 12).map_err(err)?;
    let (straight, _) = train(net.clone(), &data, &cfg).map_err(err)?;
    let (half, _) = train(net, &data, &TrainConfig { epochs: 1, ..cfg.clone() }).map_err(err)?;
    let bytes = encode_checkpoint(&half).map_err(err)?;
    let reloaded = decode_checkpoint(&bytes).map_err(err)?;
    ensure(reloaded == half && encode_checkpoint(&reloaded).map_err(err)? == bytes, || "checkpoint round trip is not exact".into())?;
    let (resumed, _) = train(reloaded, &data, &TrainConfig { epochs: 1, ..cfg }).map_err(err)?;
    ensure(
        encode_checkpoint(&resumed).map_err(err)? == encode_checkpoint(&straight).map_err(err)?,
        || "resumed training differs from an uninterrupted run".into(),
    )?;

    for channels in [1, 3] {
        let pixels = (0..37 * 23 * channels).map(|_| rng.random()).collect();
        let r = Raster::new(37, 23, channels, pixels).map_err(err)?;
        ensure(decode_pnm(&encode_pnm(&r)).map_err(err)? == r, || format!("{channels}-channel PNM round trip"))?;
    }

    let corpus = desk_corpus(&CorpusSpec { count: 4, ..CorpusSpec::default() });
    let tax = QualityTaxonomy::desk();
    let manifest = DatasetManifest {
        seed: 8,
        taxonomy: tax.clone(),
        entries: corpus
            .iter()
            .zip(enumerate_classes(&tax).into_iter().cycle())
            .map(|(img, class)| ManifestEntry {
                path: format!("{}.ppm", img.name),
                class,
                boxes: img.payload.boxes.clone(),
                identity: img.payload.identity,
            })
            .collect(),
    };
    let json = manifest.to_json().map_err(err)?;
    let back = DatasetManifest::from_json(&json).map_err(err)?;
    ensure(back == manifest && back.to_json().map_err(err)? == json, || "manifest round trip is not exact".into())?;

    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (log_a, log_b) = (common::pipeline(a.path()), common::pipeline(b.path()));
    ensure(log_a == log_b, || "CLI stdout differs between identical runs".into())?;
    let (sa, sb) = (common::snapshot(a.path()), common::snapshot(b.path()));
    ensure(sa == sb, || {
        let differing: Vec<_> = sa.keys().filter(|k| sb.get(*k) != sa.get(*k)).collect();
        format!("CLI artifacts differ: {differing:?}")
    })?;
    Ok(format!(
        "checkpoint bit-exact and resume-equivalent; PNM and manifest round trips exact; {} CLI artifacts byte-identical across two runs",
        sa.len()
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{id:>2}] {name}: {detail} ({secs:.1}s)");
            }
        }
    };

    report(1, "gradient correctness", &mut gradients);
    report(2, "NMS oracle equivalence", &mut nms_oracle);
    report(3, "fusion arithmetic", &mut fusion);
    report(4, "quant-table law", &mut quant_tables);
    report(5, "degradation severity monotonicity", &mut severity);

    let trained = catch_unwind(train_desk_predictor);
    let trained = match trained {
        Ok(Ok(t)) => Ok(t),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err("training panicked".to_string()),
    };
    let preds = trained.as_ref().map_err(Clone::clone).and_then(|t| predictions(t).map_err(err));
    let with = |f: &dyn Fn(&Trained, &[QualityPrediction]) -> Outcome| match (&trained, &preds) {
        (Ok(t), Ok(p)) => f(t, p),
        (Err(e), _) | (_, Err(e)) => Err(format!("predictor unavailable: {e}")),
    };
    report(6, "desk-scale type prediction", &mut || with(&type_accuracy));
    report(7, "desk-scale level near-diagonality", &mut || with(&level_accuracy));
    report(8, "routing ordering", &mut || with(&|t, _| routing_order(t)));
    report(9, "cross-quality diagonal dominance", &mut cross_quality);
    report(10, "determinism and round trips", &mut determinism);

    println!("{} of 10 criteria pass", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
