use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::mean_ap;
use super::synthetic::{SyntheticAnalyzer, SyntheticAnalyzerProfile};
use crate::degrade::{enumerate_classes, load_entry, DatasetManifest, Payload, QualityClass, QualityTaxonomy};
use crate::error::{Error, Result};
use crate::imageio::Raster;
use crate::neuralnet::network::par_map;
use crate::routing::{
    route, select_top_k, Analyzer, AnalyzerInput, AnalyzerOutput, AnalyzerRegistry, QualityEstimator, RoutingConfig, Task,
};
use crate::seed;

/// One labeled test item. Simulated analyzers need no pixels, so `image` is optional.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub image: Option<Raster>,
    pub width: usize,
    pub height: usize,
    pub truth: Payload,
    pub class: QualityClass,
    pub key: u64,
}

impl EvalItem {
    pub fn input(&self) -> AnalyzerInput<'_> {
        AnalyzerInput {
            image: self.image.as_ref(),
            width: self.width,
            height: self.height,
            truth: Some(&self.truth),
            true_class: Some(self.class),
            key: self.key,
        }
    }
}

/// Pixel-free items with one random face box and identity each.
pub fn synthetic_items(classes: &[QualityClass], size: usize, identities: u32, seed: u64) -> Vec<EvalItem> {
    classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let key = seed::derive(seed, &[seed::hash_str("item"), i as u64]);
            let mut rng = seed::rng(key, &[]);
            let s = size as f64;
            let side = (rng.random_range(0.2..0.45) * s).round();
            let b = [(rng.random_range(0.0..s - side)).round(), (rng.random_range(0.0..s - side)).round(), side, side];
            EvalItem {
                image: None,
                width: size,
                height: size,
                truth: Payload { boxes: Some(vec![b]), identity: Some(rng.random_range(0..identities.max(1))) },
                class,
                key,
            }
        })
        .collect()
}

/// Loads every manifest entry with its pixels; item keys are entry indices.
pub fn items_from_manifest(manifest: &DatasetManifest, manifest_dir: Option<&Path>) -> Result<Vec<EvalItem>> {
    manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let img = load_entry(e, manifest_dir)?;
            Ok(EvalItem { width: img.width(), height: img.height(), image: Some(img), truth: e.payload(), class: e.class, key: i as u64 })
        })
        .collect()
}

/// mAP at `iou_thresh` for detection, rank-1 identity accuracy for recognition.
pub fn task_metric(task: Task, items: &[EvalItem], outputs: &[AnalyzerOutput], iou_thresh: f64) -> Result<f64> {
    if items.len() != outputs.len() {
        return Err(Error::LengthMismatch(items.len(), outputs.len()));
    }
    if items.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    match task {
        Task::Detect => {
            let mut dets = Vec::with_capacity(outputs.len());
            let mut gts = Vec::with_capacity(items.len());
            for (item, out) in items.iter().zip(outputs) {
                let AnalyzerOutput::Detections(d) = out else {
                    return Err(Error::DimensionMismatch("expected detections".into()));
                };
                dets.push(d.clone());
                gts.push(item.truth.boxes.clone().ok_or_else(|| Error::MissingGroundTruth("boxes".into()))?);
            }
            mean_ap(&dets, &gts, iou_thresh)
        }
        Task::Recognize => {
            let mut correct = 0usize;
            for (item, out) in items.iter().zip(outputs) {
                let AnalyzerOutput::Identities(s) = out else {
                    return Err(Error::DimensionMismatch("expected identity scores".into()));
                };
                let id = item.truth.identity.ok_or_else(|| Error::MissingGroundTruth("identity".into()))?;
                correct += (s.top() == id as usize) as usize;
            }
            Ok(correct as f64 / items.len() as f64)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingMetric {
    pub setting: String,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    /// Row labels are training classes, column labels test classes.
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    pub holds: bool,
}

/// Result of one experiment: the config it ran with, a metric per setting, and the
/// orderings it checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub settings: Vec<SettingMetric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MetricMatrix>,
    pub checks: Vec<OrderingCheck>,
}

impl ExperimentReport {
    pub fn metric(&self, setting: &str) -> Option<f64> {
        self.settings.iter().find(|s| s.setting == setting).map(|s| s.metric)
    }

    pub fn check(&self, name: &str) -> Option<bool> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.holds)
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `setting,metric` table.
    pub fn settings_csv(&self) -> String {
        let mut s = String::from("setting,metric\n");
        for m in &self.settings {
            let _ = writeln!(s, "{},{}", m.setting, m.metric);
        }
        s
    }

    /// Matrix grid with a header row of test classes and a leading column of training classes.
    pub fn matrix_csv(&self) -> Option<String> {
        let m = self.matrix.as_ref()?;
        let mut s = format!("train\\test,{}\n", m.labels.join(","));
        for (label, row) in m.labels.iter().zip(&m.values) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{label},{}", cells.join(","));
        }
        Some(s)
    }

    /// Writes the JSON report to `path` and the CSV tables next to it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?)?;
        fs::write(path.with_extension("csv"), self.settings_csv())?;
        if let Some(csv) = self.matrix_csv() {
            fs::write(path.with_extension("matrix.csv"), csv)?;
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }
}

fn check(name: impl Into<String>, holds: bool) -> OrderingCheck {
    OrderingCheck { name: name.into(), holds }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossQualityConfig {
    pub taxonomy: QualityTaxonomy,
    pub task: Task,
    /// Shared by every class model; each gets its own class swapped in.
    pub profile: SyntheticAnalyzerProfile,
    pub items_per_class: usize,
    pub image_size: usize,
    pub iou_thresh: f64,
    pub seed: u64,
}

impl Default for CrossQualityConfig {
    fn default() -> Self {
        Self {
            taxonomy: QualityTaxonomy::desk(),
            task: Task::Detect,
            profile: SyntheticAnalyzerProfile::default(),
            items_per_class: 200,
            image_size: 128,
            iou_thresh: 0.5,
            seed: 0,
        }
    }
}

/// Metric of every class model on every class's test items.
pub fn cross_quality_matrix(cfg: &CrossQualityConfig) -> Result<ExperimentReport> {
    cfg.taxonomy.validate()?;
    if cfg.items_per_class == 0 {
        return Err(Error::IncompleteInputs("items_per_class is 0".into()));
    }
    if cfg.image_size < 16 {
        return Err(Error::IncompleteInputs(format!("image_size {} below 16", cfg.image_size)));
    }
    let classes = enumerate_classes(&cfg.taxonomy);
    let analyzers = classes
        .iter()
        .map(|&c| SyntheticAnalyzer::new(SyntheticAnalyzerProfile { model_class: c, ..cfg.profile.clone() }, cfg.task, &cfg.taxonomy))
        .collect::<Result<Vec<_>>>()?;
    let test_sets: Vec<Vec<EvalItem>> = classes
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let seed = seed::derive(cfg.seed, &[seed::hash_str("cross-test"), j as u64]);
            synthetic_items(&vec![c; cfg.items_per_class], cfg.image_size, cfg.profile.identities as u32, seed)
        })
        .collect();
    let l = classes.len();
    let cells = par_map(l * l, |idx| {
        let (i, j) = (idx / l, idx % l);
        let items = &test_sets[j];
        let outs = items.iter().map(|it| analyzers[i].run(&it.input())).collect::<Result<Vec<_>>>()?;
        task_metric(cfg.task, items, &outs, cfg.iou_thresh)
    });
    let flat = cells.into_iter().collect::<Result<Vec<f64>>>()?;
    let values: Vec<Vec<f64>> = flat.chunks(l).map(<[f64]>::to_vec).collect();
    let labels: Vec<String> = classes.iter().map(ToString::to_string).collect();
    let checks = (0..l)
        .map(|i| check(format!("row {}: matched quality beats every mismatch", labels[i]), (0..l).all(|j| j == i || values[i][i] > values[i][j])))
        .collect();
    let diag = (0..l).map(|i| values[i][i]).sum::<f64>() / l as f64;
    let off = if l > 1 { (0..l * l).filter(|k| k / l != k % l).map(|k| values[k / l][k % l]).sum::<f64>() / (l * l - l) as f64 } else { diag };
    Ok(ExperimentReport {
        name: "cross_quality_matrix".into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        settings: vec![
            SettingMetric { setting: "matched".into(), metric: diag },
            SettingMetric { setting: "mismatched".into(), metric: off },
        ],
        matrix: Some(MetricMatrix { labels, values }),
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedExperimentConfig {
    pub ks: Vec<usize>,
    pub routing: RoutingConfig,
    pub iou_thresh: f64,
    /// How far below the oracle routed K ≥ 3 may fall and still count as matching it.
    pub epsilon: f64,
    /// Slack allowed when checking that the metric does not drop as K grows.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MixedExperimentConfig {
    fn default() -> Self {
        Self { ks: vec![1, 3, 5], routing: RoutingConfig::default(), iou_thresh: 0.5, epsilon: 0.05, tolerance: 0.01, seed: 0 }
    }
}

pub const STANDARD: &str = "standard";
pub const MIXED: &str = "mixed";
pub const ORACLE: &str = "oracle";

pub fn routed_setting(k: usize) -> String {
    format!("routed_k{k}")
}

/// Compares a G-only analyzer, an optional pooled-data analyzer, routing by the true
/// class, and routing by the estimator's top-K classes on one mixed test set.
pub fn mixed_quality_experiment(
    cfg: &MixedExperimentConfig,
    items: &[EvalItem],
    registry: &AnalyzerRegistry,
    pooled: Option<&dyn Analyzer>,
    estimator: &dyn QualityEstimator,
) -> Result<ExperimentReport> {
    if items.is_empty() {
        return Err(Error::IncompleteInputs("empty mixed test set".into()));
    }
    registry.check_complete().map_err(|e| Error::IncompleteInputs(e.to_string()))?;
    let tax = registry.taxonomy();
    for &k in &cfg.ks {
        if k == 0 || k > tax.class_count() {
            return Err(Error::InvalidK { k, classes: tax.class_count() });
        }
    }
    let standard = registry.get(QualityClass::G)?;
    // per item: standard, [mixed], oracle, then one output per K
    let rows = par_map(items.len(), |i| -> Result<Vec<AnalyzerOutput>> {
        let item = &items[i];
        let input = item.input();
        let mut outs = vec![standard.run(&input)?];
        if let Some(p) = pooled {
            outs.push(p.run(&input)?);
        }
        outs.push(registry.get(item.class)?.run(&input)?);
        let fused = estimator.estimate(&input)?;
        for &k in &cfg.ks {
            let selected = select_top_k(&fused, k, tax)?;
            outs.push(route(registry, &selected, &input, &RoutingConfig { k, ..cfg.routing.clone() })?);
        }
        Ok(outs)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut names = vec![STANDARD.to_string()];
    if pooled.is_some() {
        names.push(MIXED.into());
    }
    names.push(ORACLE.into());
    names.extend(cfg.ks.iter().map(|&k| routed_setting(k)));
    let mut settings = Vec::with_capacity(names.len());
    for (col, name) in names.into_iter().enumerate() {
        let outs: Vec<AnalyzerOutput> = rows.iter().map(|r| r[col].clone()).collect();
        settings.push(SettingMetric { setting: name, metric: task_metric(registry.task(), items, &outs, cfg.iou_thresh)? });
    }
    let get = |n: &str| settings.iter().find(|s| s.setting == n).map(|s| s.metric).unwrap_or(f64::NAN);
    let (std_m, oracle) = (get(STANDARD), get(ORACLE));
    let mut checks = Vec::new();
    if pooled.is_some() {
        let mixed = get(MIXED);
        checks.push(check("standard < mixed", std_m < mixed));
        checks.push(check("mixed < oracle", mixed < oracle));
        for &k in cfg.ks.iter().filter(|&&k| k >= 3) {
            checks.push(check(format!("routed K={k} >= mixed"), get(&routed_setting(k)) >= mixed));
        }
    } else {
        checks.push(check("standard < oracle", std_m < oracle));
    }
    for &k in cfg.ks.iter().filter(|&&k| k >= 3) {
        checks.push(check(format!("routed K={k} within epsilon of oracle"), get(&routed_setting(k)) >= oracle - cfg.epsilon));
    }
    let mut ks = cfg.ks.clone();
    ks.sort_unstable();
    for w in ks.windows(2) {
        let (a, b) = (get(&routed_setting(w[0])), get(&routed_setting(w[1])));
        checks.push(check(format!("routed K={} <= K={} within tolerance", w[0], w[1]), a <= b + cfg.tolerance));
    }
    Ok(ExperimentReport {
        name: "mixed_quality_experiment".into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        settings,
        matrix: None,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::assign_mixed_classes;
    use crate::eval::synthetic::{LinearCurve, SimulatedEstimator};

    fn small_tax() -> QualityTaxonomy {
        QualityTaxonomy::new(vec![27], vec![64]).unwrap()
    }

    #[test]
    fn two_by_two_diagonal_wins() {
        let tax = QualityTaxonomy::new(vec![27], vec![]).unwrap_or_else(|_| small_tax());
        let cfg = CrossQualityConfig { taxonomy: tax, items_per_class: 150, ..Default::default() };
        let r = cross_quality_matrix(&cfg).unwrap();
        let m = r.matrix.as_ref().unwrap();
        for i in 0..m.values.len() {
            for j in 0..m.values.len() {
                if i != j {
                    assert!(m.values[i][i] > m.values[i][j], "{:?}", m.values);
                }
            }
        }
        assert!(r.all_hold());
    }

    #[test]
    fn identical_profiles_give_a_flat_matrix() {
        let profile = SyntheticAnalyzerProfile {
            hit_rate: LinearCurve::constant(0.8),
            localization_noise_sigma: LinearCurve::constant(1.0),
            false_positive_rate: LinearCurve::constant(0.1),
            ..Default::default()
        };
        let cfg = CrossQualityConfig { taxonomy: small_tax(), profile, items_per_class: 400, ..Default::default() };
        let r = cross_quality_matrix(&cfg).unwrap();
        let all: Vec<f64> = r.matrix.unwrap().values.into_iter().flatten().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!(all.iter().all(|v| (v - mean).abs() < 0.06), "{all:?}");
    }

    #[test]
    fn report_round_trips() {
        let cfg = CrossQualityConfig { taxonomy: small_tax(), items_per_class: 20, ..Default::default() };
        let r = cross_quality_matrix(&cfg).unwrap();
        assert_eq!(ExperimentReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cross.json");
        r.write(&path).unwrap();
        assert_eq!(ExperimentReport::read(&path).unwrap(), r);
        assert!(fs::read_to_string(dir.path().join("cross.matrix.csv")).unwrap().starts_with("train\\test,G,BJ:1,BL:1\n"));
        assert_eq!(cross_quality_matrix(&cfg).unwrap(), r);
    }

    #[test]
    fn empty_inputs() {
        let cfg = CrossQualityConfig { items_per_class: 0, ..Default::default() };
        assert!(matches!(cross_quality_matrix(&cfg), Err(Error::IncompleteInputs(_))));
        let tax = small_tax();
        let reg = AnalyzerRegistry::synthetic(Task::Detect, &tax, &Default::default()).unwrap();
        let est = SimulatedEstimator { taxonomy: tax, ..Default::default() };
        let r = mixed_quality_experiment(&Default::default(), &[], &reg, None, &est);
        assert!(matches!(r, Err(Error::IncompleteInputs(_))));
    }

    #[test]
    fn matched_model_beats_distant_one_on_average() {
        let tax = QualityTaxonomy::desk();
        let a0 = SyntheticAnalyzer::new(SyntheticAnalyzerProfile { model_class: QualityClass::BJ(1), ..Default::default() }, Task::Detect, &tax).unwrap();
        let a5 = SyntheticAnalyzer::new(SyntheticAnalyzerProfile { model_class: QualityClass::G, ..Default::default() }, Task::Detect, &tax).unwrap();
        let items = synthetic_items(&[QualityClass::BJ(1); 200], 128, 8, 3);
        let score = |a: &SyntheticAnalyzer| {
            let outs: Vec<_> = items.iter().map(|it| a.run(&it.input()).unwrap()).collect();
            task_metric(Task::Detect, &items, &outs, 0.5).unwrap()
        };
        assert!(score(&a0) > score(&a5));
    }

    fn mixed_run(task: Task, n: usize) -> ExperimentReport {
        let tax = QualityTaxonomy::desk();
        let base = SyntheticAnalyzerProfile::default();
        let reg = AnalyzerRegistry::synthetic(task, &tax, &base).unwrap();
        let pooled = SyntheticAnalyzer::pooled(base, task, &tax).unwrap();
        let items = synthetic_items(&assign_mixed_classes(n, &tax, 11), 128, 8, 12);
        let est = SimulatedEstimator { taxonomy: tax, ..Default::default() };
        mixed_quality_experiment(&Default::default(), &items, &reg, Some(&pooled), &est).unwrap()
    }

    #[test]
    fn mixed_detection_ordering() {
        let r = mixed_run(Task::Detect, 600);
        assert!(r.all_hold(), "{r:#?}");
        assert_eq!(r, mixed_run(Task::Detect, 600));
    }

    #[test]
    fn mixed_recognition_ordering() {
        let r = mixed_run(Task::Recognize, 600);
        assert!(r.check("standard < mixed").unwrap() && r.check("mixed < oracle").unwrap(), "{r:#?}");
        assert!(r.check("routed K=3 >= mixed").unwrap(), "{r:#?}");
    }

    #[test]
    fn single_class_routing_with_perfect_estimates_is_the_oracle() {
        struct Exact(QualityTaxonomy);
        impl QualityEstimator for Exact {
            fn estimate(&self, input: &AnalyzerInput) -> Result<crate::qualitynet::FusedQualityVector> {
                let mut probs = vec![0.0; self.0.class_count()];
                probs[self.0.index_of(input.true_class.unwrap())?] = 1.0;
                Ok(crate::qualitynet::FusedQualityVector { probs })
            }
        }
        let tax = QualityTaxonomy::desk();
        let reg = AnalyzerRegistry::synthetic(Task::Detect, &tax, &Default::default()).unwrap();
        let items = synthetic_items(&assign_mixed_classes(100, &tax, 1), 96, 8, 2);
        let cfg = MixedExperimentConfig { ks: vec![1], ..Default::default() };
        let r = mixed_quality_experiment(&cfg, &items, &reg, None, &Exact(tax)).unwrap();
        assert_eq!(r.metric(ORACLE), r.metric(&routed_setting(1)));
    }
}
