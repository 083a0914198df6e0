//! The `qcia` command line: argument parsing, work-dir confinement and the
//! subcommand drivers.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{parse_config, parse_config_in, PathsConfig, RunConfig, SimulationConfig};

use crate::corpus::{synthesize, CorpusSpec};
use crate::degrade::{
    assign_mixed_classes, build_class_dataset, build_mixed_dataset, build_per_class_datasets, load_entry,
    DatasetManifest, LabeledImage, ManifestEntry, Payload, QualityClass, QualityKind,
};
use crate::error::{Error, Result};
use crate::eval::{
    cross_quality_matrix, items_from_manifest, mixed_quality_experiment, synthetic_items, ExperimentReport,
    SyntheticAnalyzer,
};
use crate::imageio::{encode_image, load_image, ImageFormat};
use crate::neuralnet::{grad_check, load_checkpoint, random_check_case, save_checkpoint, set_threads, TrainConfig};
use crate::qualitynet::{
    head_label, head_samples, init_head_network, load_predictor, predict_quality, train_quality_net, write_predictor_file,
    PredictorFile, QualityHead,
};
use crate::routing::{AnalyzerRegistry, QualityEstimator, RoutingConfig, Task};
use crate::seed;

/// Environment variable that overrides the work directory.
pub const WORKDIR_ENV: &str = "QCIA_WORKDIR";

/// Gradient checks fail at or above this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

const GRADCHECK_STEP: f64 = 1e-5;

/// Name of the source manifest `degrade` looks for inside `--in`.
pub const CORPUS_MANIFEST: &str = "corpus.json";

#[derive(Parser, Debug)]
#[command(name = "qcia", version, about = "Quality-classified image analysis")]
struct Cli {
    /// Worker threads; 1 keeps every run bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write degraded copies of a directory of images plus a manifest.
    Degrade(DegradeArgs),
    /// Train one of the three quality networks.
    TrainQuality(TrainArgs),
    /// Predict the quality class of one image with a trained bundle.
    PredictQuality(PredictArgs),
    /// Evaluate quality-routed analyzers on a manifest.
    Eval(EvalArgs),
    /// Run the synthetic-analyzer experiments described by a config.
    Simulate(SimulateArgs),
    /// Check backpropagation against central differences on random small networks.
    Gradcheck(GradcheckArgs),
    /// Generate a procedural desk corpus.
    Corpus(CorpusArgs),
}

#[derive(Args, Debug)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// A single class such as BJ:3; every class when neither this nor --mixed is given.
    #[arg(long, conflicts_with = "mixed")]
    class: Option<String>,
    /// One uniformly drawn class per image.
    #[arg(long)]
    mixed: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NetArg {
    Type,
    BjLevel,
    BlLevel,
}

impl NetArg {
    fn head(self) -> QualityHead {
        match self {
            NetArg::Type => QualityHead::Type,
            NetArg::BjLevel => QualityHead::Level(QualityKind::BJ),
            NetArg::BlLevel => QualityHead::Level(QualityKind::BL),
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    net: NetArg,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Continue from this checkpoint up to the configured total epoch count.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Detect,
    Recognize,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Detect => Task::Detect,
            TaskArg::Recognize => Task::Recognize,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    report: PathBuf,
    /// Trained predictor bundle; without one a simulated estimator is used.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    nets: usize,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    count: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`dispatch`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "qcia-error: usage: {}", e.render());
                    2
                }
            };
        }
    };
    if cli.threads == 0 {
        let _ = writeln!(err, "qcia-error: usage: --threads must be at least 1");
        return 2;
    }
    set_threads(cli.threads);
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "qcia-error: {e}");
            1
        }
    }
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Degrade(a) => degrade_cmd(a, out),
        Command::TrainQuality(a) => train_cmd(a, out),
        Command::PredictQuality(a) => predict_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Simulate(a) => simulate_cmd(a, out),
        Command::Gradcheck(a) => gradcheck_cmd(a, out),
        Command::Corpus(a) => corpus_cmd(a, out),
    }
}

/// The directory every relative path resolves against and every output must stay in.
struct WorkDir {
    root: PathBuf,
}

impl WorkDir {
    /// `QCIA_WORKDIR` if set, else the config's work dir, else the current directory.
    fn locate(config_work_dir: Option<&Path>) -> Result<Self> {
        let root = match std::env::var_os(WORKDIR_ENV) {
            Some(dir) => PathBuf::from(dir),
            None => match config_work_dir {
                Some(dir) => dir.to_path_buf(),
                None => std::env::current_dir()?,
            },
        };
        let root = root.canonicalize().map_err(|_| Error::FileNotFound(root.clone()))?;
        Ok(Self { root })
    }

    fn input(&self, p: &Path) -> PathBuf {
        normalize(&self.root.join(p))
    }

    /// Absolute form of an output path, refused if it leaves the work dir.
    fn output(&self, p: &Path) -> Result<PathBuf> {
        let abs = normalize(&self.root.join(p));
        let mut existing = abs.as_path();
        let mut rest = Vec::new();
        while !existing.exists() {
            match (existing.parent(), existing.file_name()) {
                (Some(parent), Some(name)) => {
                    rest.push(name.to_os_string());
                    existing = parent;
                }
                _ => break,
            }
        }
        let mut real = existing.canonicalize().unwrap_or_else(|_| existing.to_path_buf());
        for name in rest.into_iter().rev() {
            real.push(name);
        }
        if !real.starts_with(&self.root) {
            return Err(Error::OutsideWorkDir(abs));
        }
        Ok(real)
    }
}

/// Removes `.` and `..` components without touching the filesystem.
fn normalize(p: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

/// `target` relative to `base`, both absolute and normalized.
fn relative_to(target: &Path, base: &Path) -> PathBuf {
    let t: Vec<_> = target.components().collect();
    let b: Vec<_> = base.components().collect();
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    for c in &t[common..] {
        rel.push(c);
    }
    rel
}

/// Rewrites entry paths relative to the manifest's directory so the manifest does
/// not depend on where the work dir lives.
fn relativize(manifest: &mut DatasetManifest, manifest_path: &Path) {
    let base = manifest_path.parent().unwrap_or(Path::new("/"));
    for e in &mut manifest.entries {
        let p = normalize(Path::new(&e.path));
        if p.is_absolute() {
            e.path = relative_to(&p, base).to_string_lossy().replace('\\', "/");
        }
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Loads `--config` (if any) and locates the work dir it names.
fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<(RunConfig, WorkDir)> {
    let env_root = std::env::var_os(WORKDIR_ENV).map(PathBuf::from);
    let cfg = match path {
        Some(p) => {
            let base = env_root.clone().map(Ok).unwrap_or_else(std::env::current_dir)?;
            let p = if p.is_relative() { base.join(p) } else { p.to_path_buf() };
            parse_config_in(&p, Some(p.parent().unwrap_or(&base)))?
        }
        None => RunConfig::default(),
    };
    let work = WorkDir::locate(path.map(|_| cfg.paths.work_dir.as_path()))?;
    let cfg = match seed {
        Some(s) => RunConfig { seed: s, ..cfg }.seeded(),
        None => cfg,
    };
    Ok((cfg, work))
}

/// What a report echoes of the run config: everything but machine-specific paths.
fn echoed(cfg: &RunConfig) -> RunConfig {
    RunConfig { paths: PathsConfig::default(), ..cfg.clone() }
}

fn source_images(dir: &Path) -> Result<Vec<LabeledImage>> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let manifest_path = dir.join(CORPUS_MANIFEST);
    if manifest_path.exists() {
        let m = DatasetManifest::read(&manifest_path)?;
        return m
            .entries
            .iter()
            .map(|e| {
                let name = Path::new(&e.path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Ok(LabeledImage { name, image: load_entry(e, Some(dir))?, payload: e.payload() })
            })
            .collect();
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().and_then(|x| x.to_str()).is_some_and(|x| {
                    matches!(x.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "jpg" | "jpeg")
                })
        })
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(LabeledImage { name, image: load_image(p)?, payload: Payload::default() })
        })
        .collect()
}

fn degrade_cmd(a: DegradeArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, work) = load_config(a.config.as_deref(), a.seed)?;
    let tax = &cfg.taxonomy;
    let corpus = source_images(&work.input(&a.input))?;
    let out_dir = work.output(&a.out)?;
    let manifest_path = work.output(&a.manifest)?;
    let mut manifest = match (&a.class, a.mixed) {
        (Some(tag), _) => {
            let c: QualityClass = tag.parse()?;
            build_class_dataset(&corpus, tax, c, &out_dir)?
        }
        (None, true) => build_mixed_dataset(&corpus, tax, cfg.seed, &out_dir)?,
        (None, false) => DatasetManifest::merge(&build_per_class_datasets(&corpus, tax, &out_dir)?)?,
    };
    manifest.seed = cfg.seed;
    relativize(&mut manifest, &manifest_path);
    ensure_parent(&manifest_path)?;
    manifest.write(&manifest_path)?;
    writeln!(out, "wrote {} images and {}", manifest.entries.len(), manifest_path.display())?;
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, work) = load_config(Some(&a.config), a.seed)?;
    let manifest_path = work.input(&a.manifest);
    let manifest = DatasetManifest::read(&manifest_path)?;
    if manifest.taxonomy != cfg.taxonomy {
        return Err(Error::InvalidManifest("manifest taxonomy differs from the config taxonomy".into()));
    }
    let tax = &cfg.taxonomy;
    let head = a.net.head();
    let dir = manifest_path.parent();
    let images = manifest
        .entries
        .iter()
        .filter(|e| head_label(head, e.class).is_some())
        .map(|e| Ok((load_entry(e, dir)?, e.class)))
        .collect::<Result<Vec<_>>>()?;
    let samples = head_samples(&images, head, tax);
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let net = match &a.resume {
        Some(p) => load_checkpoint(work.input(p))?,
        None => init_head_network(head, tax, first.0.channels(), &cfg.predictor, cfg.arch, cfg.seed)?,
    };
    let done = net.epochs_trained() as usize;
    let remaining = cfg.train.epochs.saturating_sub(done);
    let tcfg = TrainConfig { epochs: remaining, ..cfg.train.clone() };
    let out_path = work.output(&a.out)?;
    let (net, history) = train_quality_net(net, &samples, &cfg.predictor, &tcfg, cfg.crops_per_image)?;
    for (i, s) in history.iter().enumerate() {
        writeln!(out, "{} epoch {} loss {:.6} accuracy {:.4}", head.name(), done + i + 1, s.loss, s.accuracy)?;
    }
    ensure_parent(&out_path)?;
    save_checkpoint(&net, &out_path)?;
    let bundle_dir = out_path.parent().unwrap_or(Path::new("."));
    write_predictor_file(&PredictorFile { config: cfg.predictor.clone(), taxonomy: tax.clone() }, bundle_dir)?;
    writeln!(out, "wrote {}", out_path.display())?;
    Ok(())
}

fn predict_cmd(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let work = WorkDir::locate(None)?;
    let pred = load_predictor(work.input(&a.bundle))?;
    let mut pcfg = pred.config.clone();
    if let Some(p) = a.patches {
        pcfg.patches_per_image = p;
    }
    if let Some(s) = a.seed {
        pcfg.seed = s;
    }
    pcfg.validate()?;
    let img = load_image(work.input(&a.image))?;
    let p = predict_quality(&pred, &img, &pcfg)?;
    if a.json {
        let doc = serde_json::json!({
            "P_C": p.fused.probs,
            "argmax": p.class,
            "type_scores": p.type_scores.to_array(),
            "bj_levels": p.bj_levels.probs,
            "bl_levels": p.bl_levels.probs,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    } else {
        let t = p.type_scores;
        writeln!(out, "class {}", p.class)?;
        writeln!(out, "type G {:.4} BJ {:.4} BL {:.4}", t.p_g, t.p_bj, t.p_bl)?;
        writeln!(out, "confidence {:.4}", p.fused.probs[p.fused.argmax()])?;
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, work) = load_config(a.config.as_deref(), a.seed)?;
    let manifest_path = work.input(&a.manifest);
    let manifest = DatasetManifest::read(&manifest_path)?;
    let tax = &manifest.taxonomy;
    let registry = AnalyzerRegistry::load(work.input(&a.registry), tax)?;
    let task = Task::from(a.task);
    if registry.task() != task {
        return Err(Error::InvalidManifest(format!("registry is for {:?}, --task asked for {task:?}", registry.task())));
    }
    let items = items_from_manifest(&manifest, manifest_path.parent())?;
    let k = a.k.unwrap_or(cfg.routing.k);
    let report_path = work.output(&a.report)?;
    let run_cfg = RunConfig { taxonomy: tax.clone(), routing: RoutingConfig { k, ..cfg.routing.clone() }, ..cfg };
    let predictor;
    let simulated;
    let estimator: &dyn QualityEstimator = match &a.bundle {
        Some(b) => {
            predictor = load_predictor(work.input(b))?;
            if &predictor.taxonomy != tax {
                return Err(Error::InvalidManifest("bundle taxonomy differs from the manifest taxonomy".into()));
            }
            &predictor
        }
        None => {
            simulated = run_cfg.estimator();
            &simulated
        }
    };
    let mut report = mixed_quality_experiment(&run_cfg.experiment(vec![k]), &items, &registry, None, estimator)?;
    report.name = "eval".into();
    report.config = serde_json::json!({
        "run": echoed(&run_cfg),
        "task": task,
        "estimator": if a.bundle.is_some() { "bundle" } else { "simulated" },
        "items": items.len(),
    });
    ensure_parent(&report_path)?;
    report.write(&report_path)?;
    print_report(&report, out)?;
    Ok(())
}

/// Runs the mixed-quality and cross-quality experiments for `cfg` and merges them
/// into one report.
pub fn simulate(cfg: &RunConfig) -> Result<ExperimentReport> {
    let sim = &cfg.simulation;
    let tax = &cfg.taxonomy;
    let profile = &sim.profile;
    let classes = assign_mixed_classes(sim.items, tax, cfg.seed);
    let items = synthetic_items(&classes, sim.image_size, sim.identities, seed::derive(cfg.seed, &[seed::hash_str("mixed-items")]));
    let registry = AnalyzerRegistry::synthetic(sim.task, tax, profile)?;
    let pooled = SyntheticAnalyzer::pooled(profile.clone(), sim.task, tax)?;
    let mixed = mixed_quality_experiment(&cfg.experiment(sim.ks.clone()), &items, &registry, Some(&pooled), &cfg.estimator())?;
    let cross = cross_quality_matrix(&cfg.cross_quality())?;
    let mut settings = mixed.settings;
    settings.extend(cross.settings.into_iter().map(|mut s| {
        s.setting = format!("cross_{}", s.setting);
        s
    }));
    let mut checks = mixed.checks;
    checks.extend(cross.checks);
    Ok(ExperimentReport {
        name: "simulate".into(),
        seed: cfg.seed,
        config: serde_json::to_value(echoed(cfg))?,
        settings,
        matrix: cross.matrix,
        checks,
    })
}

fn simulate_cmd(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, work) = load_config(Some(&a.config), a.seed)?;
    let report_path = work.output(&a.report)?;
    let report = simulate(&cfg)?;
    ensure_parent(&report_path)?;
    report.write(&report_path)?;
    print_report(&report, out)
}

fn print_report(report: &ExperimentReport, out: &mut dyn Write) -> Result<()> {
    for s in &report.settings {
        writeln!(out, "{:<24} {:.4}", s.setting, s.metric)?;
    }
    for c in &report.checks {
        writeln!(out, "[{}] {}", if c.holds { "ok" } else { "FAIL" }, c.name)?;
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let mut worst = 0.0f64;
    for i in 0..a.nets {
        let case = random_check_case(seed::derive(a.seed, &[i as u64]))?;
        let err = grad_check(&case.net, &case.batch, &case.labels, GRADCHECK_STEP)?;
        writeln!(out, "net {i:>3} params {:>5} max relative error {err:.3e}", case.net.param_count())?;
        worst = worst.max(err);
    }
    writeln!(out, "worst {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")?;
    if worst >= GRADCHECK_TOLERANCE {
        return Err(Error::NonFinite(format!("gradient check failed: worst relative error {worst:.3e}")));
    }
    Ok(())
}

fn corpus_cmd(a: CorpusArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, work) = load_config(a.config.as_deref(), None)?;
    if a.count == 0 {
        return Err(Error::EmptyCorpus);
    }
    if a.size < 16 || !matches!(a.channels, 1 | 3) {
        return Err(Error::ValidationErrors(vec![format!(
            "corpus images need size >= 16 and 1 or 3 channels, got {}x{} with {} channels",
            a.size, a.size, a.channels
        )]));
    }
    let dir = work.output(&a.out)?;
    fs::create_dir_all(&dir)?;
    let spec = CorpusSpec { count: a.count, size: a.size, channels: a.channels, seed: a.seed, ..CorpusSpec::default() };
    let mut entries = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let img = synthesize(&spec, i);
        let fmt = ImageFormat::lossless_for(&img.image);
        let name = format!("{}.{}", img.name, fmt.extension());
        fs::write(dir.join(&name), encode_image(&img.image, fmt)?)?;
        entries.push(ManifestEntry { path: name, class: QualityClass::G, boxes: img.payload.boxes, identity: img.payload.identity });
    }
    let manifest = DatasetManifest { seed: a.seed, taxonomy: cfg.taxonomy, entries };
    manifest.write(dir.join(CORPUS_MANIFEST))?;
    writeln!(out, "wrote {} images to {}", a.count, dir.display())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_with(std::iter::once("qcia").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, 0);
        for sub in ["degrade", "train-quality", "predict-quality", "eval", "simulate", "gradcheck"] {
            assert!(out.contains(sub), "{out}");
        }
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, _, err) = run(&["frobnicate"]);
        assert_eq!(code, 2);
        assert!(err.starts_with("qcia-error:"));
    }

    #[test]
    fn gradcheck_is_deterministic() {
        let a = run(&["gradcheck", "--seed", "7", "--nets", "3"]);
        let b = run(&["gradcheck", "--seed", "7", "--nets", "3"]);
        assert_eq!(a.0, 0, "{}", a.2);
        assert_eq!(a, b);
    }

    #[test]
    fn normalize_drops_dots() {
        assert_eq!(normalize(Path::new("/a/./b/../c")), PathBuf::from("/a/c"));
    }

    #[test]
    fn relative_paths() {
        assert_eq!(relative_to(Path::new("/w/out/x.pgm"), Path::new("/w")), PathBuf::from("out/x.pgm"));
        assert_eq!(relative_to(Path::new("/w/out/x.pgm"), Path::new("/w/m")), PathBuf::from("../out/x.pgm"));
    }

    #[test]
    fn outputs_stay_in_work_dir() {
        let dir = tempfile::tempdir().unwrap();
        let work = WorkDir { root: dir.path().canonicalize().unwrap() };
        assert!(work.output(Path::new("a/b.json")).is_ok());
        assert!(matches!(work.output(Path::new("../escape.json")), Err(Error::OutsideWorkDir(_))));
        assert!(matches!(work.output(Path::new("/qcia-elsewhere/x.json")), Err(Error::OutsideWorkDir(_))));
    }
}
