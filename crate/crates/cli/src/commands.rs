use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use serde_json::json;

use echodiet::analytics::{build_report, to_frame_timeline};
use echodiet::classifier::{load_model, predict, save_model, train as fit, Model};
use echodiet::dataset::{
    assign_labels, augment, class_counts, load_dataset, save_dataset, slice_windows, split_indices,
    validation_holdout, SplitManifest, WindowedSample,
};
use echodiet::formats::{load_audio, load_profile, save_audio, save_profile, ProfileKind};
use echodiet::metrics::{cohens_kappa, confusion, macro_f1, ConfusionMatrix};
use echodiet::pipeline::{fit_timeline, process_audio, run_benchmark, BenchmarkConfig, FoldOutput};
use echodiet::signal::SensingConfig;
use echodiet::sim::{render_scene, synthetic_participant, ActivityScript, ParticipantProfile, Scene};
use echodiet::{ActivityClass, Error, FrameTimeline, NUM_CLASSES};

use crate::config::{ConfigFile, SettingsLog};
use crate::manifest::Outputs;
use crate::plot::Grid;
use crate::{CliError, CliResult, Global, Summary};

fn frame_rate() -> f64 {
    SensingConfig::default().frames_per_second as f64
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(Error::Io)?;
    Ok(serde_json::from_reader(BufReader::new(file)).map_err(Error::Json)?)
}

fn read_timeline(path: &Path) -> CliResult<FrameTimeline> {
    let file = File::open(path).map_err(Error::Io)?;
    Ok(FrameTimeline::read_csv(BufReader::new(file))?)
}

fn write_timeline(outs: &mut Outputs, name: &str, timeline: &FrameTimeline) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(outs.file(name)?).map_err(Error::Io)?);
    timeline.write_csv(&mut w)?;
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn class_names() -> Vec<String> {
    ActivityClass::ALL.iter().map(|c| c.name().to_string()).collect()
}

fn counts_json(counts: &[usize; NUM_CLASSES]) -> serde_json::Value {
    ActivityClass::ALL
        .iter()
        .map(|c| (c.name().to_string(), json!(counts[c.index()])))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

/// `{prefix}confusion.png` with its row-normalized values in
/// `{prefix}confusion.csv`, plus raw counts in `{prefix}confusion_counts.csv`.
fn write_confusion(outs: &mut Outputs, prefix: &str, cm: &ConfusionMatrix) -> CliResult<()> {
    let norm = cm.normalized();
    let grid = Grid::new(NUM_CLASSES, NUM_CLASSES, norm.iter().flatten().copied().collect())?;
    let names = class_names();
    grid.write_png(&outs.file(&format!("{prefix}confusion.png"))?, 48, 48)?;
    grid.write_csv(&outs.file(&format!("{prefix}confusion.csv"))?, &names, &names)?;
    let mut w = BufWriter::new(File::create(outs.file(&format!("{prefix}confusion_counts.csv"))?).map_err(Error::Io)?);
    cm.write_csv(&mut w)?;
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> CliResult<serde_json::Value> {
    Ok(serde_json::to_value(v).map_err(Error::Json)?)
}

fn load_samples(paths: &[PathBuf]) -> CliResult<Vec<WindowedSample>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_dataset(p)?);
    }
    if all.is_empty() {
        return Err(Error::Argument("the datasets contain no windows".into()).into());
    }
    Ok(all)
}

/// Keeps the nearest `n_bins` range rows of every window.
fn crop_bins(samples: &mut [WindowedSample], n_bins: usize) -> CliResult<()> {
    for s in samples {
        let [c, b, f] = s.shape;
        if n_bins > b {
            return Err(Error::Config(format!("cannot crop {n_bins} range bins from {b}-bin windows")).into());
        }
        if n_bins == b {
            continue;
        }
        let mut t = Vec::with_capacity(c * n_bins * f);
        for ch in 0..c {
            t.extend_from_slice(&s.tensor[ch * b * f..][..n_bins * f]);
        }
        s.tensor = t;
        s.shape = [c, n_bins, f];
    }
    Ok(())
}

/// Common shape of all windows after an optional crop; a requested window
/// length must match the windows' frame count.
fn window_geometry(
    samples: &mut [WindowedSample],
    window_s: Option<f64>,
    range_bins: Option<usize>,
) -> CliResult<[usize; 3]> {
    let first = samples[0].shape;
    if let Some(bad) = samples.iter().find(|s| s.shape != first) {
        return Err(Error::Argument(format!("windows of shapes {first:?} and {:?} mixed", bad.shape)).into());
    }
    if let Some(n) = range_bins {
        if n == 0 {
            return Err(Error::Config("range bins must be positive".into()).into());
        }
        crop_bins(samples, n)?;
    }
    let shape = samples[0].shape;
    if let Some(w) = window_s {
        let frames = (w * frame_rate()).round() as usize;
        if frames != shape[2] {
            return Err(Error::Config(format!(
                "{w} s windows have {frames} frames, the dataset has {}",
                shape[2]
            ))
            .into());
        }
    }
    Ok(shape)
}

/// Window length and range flags, falling back to the config file. `None`
/// means "take it from the data".
fn geometry_overrides(
    log: &mut SettingsLog,
    file: &ConfigFile,
    cfg: &BenchmarkConfig,
    window_s: Option<f64>,
    range_bins: Option<usize>,
) -> (Option<f64>, Option<usize>) {
    let w = window_s.or(file.has("/window/window_s").then_some(cfg.window.window_s));
    let r = range_bins.or(file.has("/window/n_bins").then_some(cfg.window.n_bins));
    let src = |flag: bool, v: bool| match (flag, v) {
        (true, _) => "flag",
        (false, true) => "file",
        _ => "dataset",
    };
    log.note(format!("window_s = {w:?} ({})", src(window_s.is_some(), w.is_some())));
    log.note(format!("range_bins = {r:?} ({})", src(range_bins.is_some(), r.is_some())));
    (w, r)
}

fn apply_seed(log: &mut SettingsLog, file: &ConfigFile, cfg: &mut BenchmarkConfig, g: &Global) {
    log.apply(file, "seed", "/seed", &mut cfg.seed, g.seed);
    log.apply(file, "train.seed", "/train/seed", &mut cfg.train.seed, g.seed);
    if let Some(a) = cfg.augment.as_mut() {
        log.apply(file, "augment.seed", "/augment/seed", &mut a.seed, g.seed);
    }
    log.apply(
        file,
        "train.parallel",
        "/train/parallel",
        &mut cfg.train.parallel,
        g.deterministic.then_some(false),
    );
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["scene", "participant"])))]
pub struct SimulateArgs {
    /// Scene JSON (reflectors, body model, noise, seed, sensing).
    #[arg(long, requires = "script")]
    scene: Option<PathBuf>,
    /// Activity script JSON.
    #[arg(long, requires = "scene")]
    script: Option<PathBuf>,
    /// Generate synthetic participant ID instead of reading a scene.
    #[arg(long, conflicts_with = "script")]
    participant: Option<u32>,
    /// Recording length of a synthetic participant.
    #[arg(long, requires = "participant")]
    duration_s: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn simulate(a: &SimulateArgs, g: &Global) -> CliResult<Summary> {
    let none = ConfigFile::none();
    let mut log = SettingsLog::new("simulate", &none);
    let mut inputs = Vec::new();
    let (mut scene, script) = match (&a.scene, &a.script, a.participant) {
        (Some(s), Some(t), _) => {
            inputs.extend([s.clone(), t.clone()]);
            let scene: Scene = read_json(s)?;
            let script: ActivityScript = read_json(t)?;
            (scene, script)
        }
        (_, _, Some(id)) => {
            let mut profile = ParticipantProfile::default();
            log.apply(&none, "duration_s", "/duration_s", &mut profile.duration_s, a.duration_s);
            synthetic_participant(id, g.seed.unwrap_or(0), &profile)
        }
        _ => return Err(CliError::Usage("give --scene and --script, or --participant".into())),
    };
    let mut seed = scene.seed;
    log.apply(&none, "scene.seed", "/seed", &mut seed, g.seed);
    scene.seed = seed;
    log.emit();

    let (audio, truth) = render_scene(&scene, &script)?;
    let mut outs = Outputs::create(&a.out)?;
    save_audio(&audio, outs.file("audio.mspc")?)?;
    write_timeline(&mut outs, "truth.csv", &truth)?;
    outs.write_json("scene.json", &scene)?;
    outs.write_json("script.json", &script)?;
    let params = json!({ "seed": scene.seed, "participant": a.participant, "duration_s": script.total_duration_s });
    let outputs = outs.finish("simulate", params, &inputs)?;
    Ok(Summary {
        command: "simulate",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({
            "channels": audio.n_channels(),
            "samples": audio.len(),
            "duration_s": audio.duration_s(),
            "truth_seconds": truth.len(),
        }),
        message: format!(
            "rendered {:.1} s of {}-channel audio",
            audio.duration_s(),
            audio.n_channels()
        ),
    })
}

// ----------------------------------------------------------------- process

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Raw audio (MSPC).
    #[arg(long)]
    audio: PathBuf,
    /// Sensing configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Range bins to keep, nearest first [default: 150].
    #[arg(long)]
    range_bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn process(a: &ProcessArgs, _g: &Global) -> CliResult<Summary> {
    let (mut sensing, file): (SensingConfig, _) = ConfigFile::load(a.config.as_deref())?;
    if !file.has("/profile_bins") {
        sensing.profile_bins = echodiet::dataset::WindowConfig::default().n_bins;
    }
    let mut log = SettingsLog::new("process", &file);
    log.apply(&file, "range_bins", "/profile_bins", &mut sensing.profile_bins, a.range_bins);
    log.emit();
    sensing.validate()?;

    let audio = load_audio(&a.audio)?;
    if audio.sample_rate != sensing.sample_rate {
        return Err(Error::Config(format!(
            "audio is sampled at {} Hz, sensing expects {} Hz",
            audio.sample_rate, sensing.sample_rate
        ))
        .into());
    }
    let (echo, diff) = process_audio(&audio, &sensing)?;
    drop(audio);
    let mut outs = Outputs::create(&a.out)?;
    save_profile(&echo, ProfileKind::Echo, outs.file("echo.msep")?)?;
    save_profile(&diff, ProfileKind::Differential, outs.file("diff.msep")?)?;
    let energy = diff.data.iter().map(|v| v * v).sum::<f64>() / diff.data.len().max(1) as f64;
    let outputs = outs.finish("process", to_value(&sensing)?, std::slice::from_ref(&a.audio))?;
    Ok(Summary {
        command: "process",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({
            "echo_shape": echo.shape(),
            "diff_shape": diff.shape(),
            "diff_mean_square": energy,
        }),
        message: format!("echo profile {:?}, differential {:?}", echo.shape(), diff.shape()),
    })
}

// ----------------------------------------------------------------- dataset

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Differential profile (MSEP); repeat once per recording.
    #[arg(long, required = true)]
    profile: Vec<PathBuf>,
    /// Per-second truth CSV, one per --profile.
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// Group id per --profile [default: 0, 1, 2, ...].
    #[arg(long)]
    group: Vec<u32>,
    /// Pipeline configuration JSON (the `window` section is used).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    range_bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn dataset(a: &DatasetArgs, _g: &Global) -> CliResult<Summary> {
    if a.profile.len() != a.truth.len() {
        return Err(CliError::Usage(format!(
            "{} --profile but {} --truth",
            a.profile.len(),
            a.truth.len()
        )));
    }
    if !a.group.is_empty() && a.group.len() != a.profile.len() {
        return Err(CliError::Usage("give one --group per --profile, or none".into()));
    }
    let (mut cfg, file): (BenchmarkConfig, _) = ConfigFile::load(a.config.as_deref())?;
    let mut log = SettingsLog::new("dataset", &file);
    log.apply(&file, "window_s", "/window/window_s", &mut cfg.window.window_s, a.window_s);
    log.apply(&file, "overlap", "/window/overlap", &mut cfg.window.overlap, a.overlap);
    log.apply(&file, "range_bins", "/window/n_bins", &mut cfg.window.n_bins, a.range_bins);
    log.emit();
    cfg.window.validate()?;

    let mut samples = Vec::new();
    for (i, (p, t)) in a.profile.iter().zip(&a.truth).enumerate() {
        let group = a.group.get(i).copied().unwrap_or(i as u32);
        let diff = load_profile(p)?.into_differential()?;
        let truth = read_timeline(t)?;
        let windows = slice_windows(&diff, &cfg.window)?;
        samples.extend(assign_labels(windows, &truth, group)?);
    }
    let mut outs = Outputs::create(&a.out)?;
    save_dataset(&samples, outs.file("dataset.msds")?)?;
    let counts = class_counts(&samples);
    let shape = samples.first().map(|s| s.shape);
    let inputs: Vec<PathBuf> = a.profile.iter().chain(&a.truth).cloned().collect();
    let outputs = outs.finish("dataset", to_value(&cfg.window)?, &inputs)?;
    Ok(Summary {
        command: "dataset",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({ "windows": samples.len(), "shape": shape, "class_counts": counts_json(&counts) }),
        message: format!("{} windows of shape {:?}", samples.len(), shape),
    })
}

// ------------------------------------------------------------------- train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Window dataset (MSDS); repeat to concatenate.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Group kept out of training and validation.
    #[arg(long)]
    holdout: u32,
    /// Pipeline configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Expected window length; must match the dataset.
    #[arg(long)]
    window_s: Option<f64>,
    /// Keep only the nearest N range bins of each window.
    #[arg(long)]
    range_bins: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Train on the windows as they are.
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    out: PathBuf,
}

pub fn train(a: &TrainArgs, g: &Global) -> CliResult<Summary> {
    let (mut cfg, file): (BenchmarkConfig, _) = ConfigFile::load(a.config.as_deref())?;
    let mut log = SettingsLog::new("train", &file);
    apply_seed(&mut log, &file, &mut cfg, g);
    log.apply(&file, "epochs", "/train/epochs", &mut cfg.train.epochs, a.epochs);
    if a.no_augment {
        cfg.augment = None;
    }
    log.note(format!("augment = {} ({})", cfg.augment.is_some(), if a.no_augment { "flag" } else { "config" }));
    log.note(format!("holdout = {} (flag)", a.holdout));
    let (window_s, range_bins) = geometry_overrides(&mut log, &file, &cfg, a.window_s, a.range_bins);
    log.emit();

    let mut samples = load_samples(&a.data)?;
    let shape = window_geometry(&mut samples, window_s, range_bins)?;
    cfg.train.model.input_shape = shape;
    cfg.train.validate()?;

    let groups: Vec<u32> = samples.iter().map(|s| s.group).collect();
    let (pool, test) = split_indices(&groups, a.holdout)?;
    let (train_idx, val_idx) = validation_holdout(&groups, &pool, cfg.validation_fraction, cfg.seed ^ u64::from(a.holdout))?;
    let mut train_set: Vec<WindowedSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let val_set: Vec<WindowedSample> = val_idx.iter().map(|&i| samples[i].clone()).collect();
    drop(samples);
    let mut augmented = None;
    if let Some(aug) = &cfg.augment {
        let aug = echodiet::dataset::AugmentConfig {
            seed: aug.seed ^ u64::from(a.holdout),
            ..aug.clone()
        };
        let (set, alog) = augment(train_set, &aug)?;
        train_set = set;
        augmented = Some(alog);
    }
    let outcome = fit(&train_set, &val_set, &cfg.train)?;

    let mut outs = Outputs::create(&a.out)?;
    save_model(&outcome.model, outs.file("model.msmd")?)?;
    outs.write_json(
        "split.json",
        &SplitManifest {
            holdout: a.holdout,
            train: train_idx.clone(),
            validation: val_idx.clone(),
            test,
        },
    )?;
    let train_log = json!({
        "best_epoch": outcome.best_epoch,
        "alpha": outcome.alpha,
        "epochs": outcome.log,
        "augmentation": augmented,
        "n_train": train_set.len(),
        "n_validation": val_set.len(),
    });
    outs.write_json("train_log.json", &train_log)?;
    let outputs = outs.finish("train", to_value(&cfg)?, &a.data)?;
    let best = outcome.log.iter().find(|l| l.epoch == outcome.best_epoch).and_then(|l| l.val_macro_f1);
    Ok(Summary {
        command: "train",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({
            "input_shape": shape,
            "best_epoch": outcome.best_epoch,
            "best_val_macro_f1": best,
            "n_train": train_set.len(),
            "n_validation": val_set.len(),
        }),
        message: format!(
            "trained on {} windows of shape {shape:?}; best epoch {} (validation macro-F1 {})",
            train_set.len(),
            outcome.best_epoch,
            best.map_or("n/a".into(), |f| format!("{f:.4}"))
        ),
    })
}

// -------------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Classifier checkpoint (MSMD).
    #[arg(long)]
    model: PathBuf,
    /// Window dataset (MSDS); repeat to concatenate.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Evaluate only this group.
    #[arg(long)]
    holdout: Option<u32>,
    /// Per-second truth of the evaluated recording, for the episode report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Pipeline configuration JSON (window and segment sections are used).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    range_bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn eval(a: &EvalArgs, _g: &Global) -> CliResult<Summary> {
    let (cfg, file): (BenchmarkConfig, _) = ConfigFile::load(a.config.as_deref())?;
    let mut log = SettingsLog::new("eval", &file);
    let (window_s, mut range_bins) = geometry_overrides(&mut log, &file, &cfg, a.window_s, a.range_bins);
    let model: Model = load_model(&a.model)?;
    let input = model.config().input_shape;
    if range_bins.is_none() {
        range_bins = Some(input[1]);
        log.note(format!("cropping windows to the model's {} range bins", input[1]));
    }
    log.emit();

    let mut samples = load_samples(&a.data)?;
    if let Some(h) = a.holdout {
        samples.retain(|s| s.group == h);
        if samples.is_empty() {
            return Err(Error::Argument(format!("group {h} does not occur in the data")).into());
        }
    }
    let shape = window_geometry(&mut samples, window_s, range_bins)?;
    if shape != input {
        return Err(Error::Argument(format!("windows have shape {shape:?}, the model expects {input:?}")).into());
    }
    let window_s = window_s.unwrap_or(shape[2] as f64 / frame_rate());

    let predictions = predict(&model, window_s, samples.iter().map(|s| (s.start_time_s, s.tensor.as_slice())))?;
    let truth_labels: Vec<ActivityClass> = samples.iter().map(|s| s.label).collect();
    let cm = confusion(&truth_labels, &predictions.labels())?;
    let f1 = macro_f1(&cm);

    let mut outs = Outputs::create(&a.out)?;
    outs.write_json("predictions.json", &predictions)?;
    outs.write_json("metrics.json", &json!({ "n_windows": samples.len(), "confusion": cm, "f1": f1 }))?;
    write_confusion(&mut outs, "", &cm)?;

    let mut groups: Vec<u32> = samples.iter().map(|s| s.group).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut episodes = None;
    let mut inputs = vec![a.model.clone()];
    inputs.extend(a.data.iter().cloned());
    if groups.len() == 1 {
        let mut timeline = to_frame_timeline(&predictions);
        if let Some(t) = &a.truth {
            let truth = read_timeline(t)?;
            timeline = fit_timeline(timeline, truth.len());
            let report = build_report(&timeline, &truth, &cfg.segment)?;
            outs.write_json("report.json", &report)?;
            episodes = Some(report);
            inputs.push(t.clone());
        }
        write_timeline(&mut outs, "timeline.csv", &timeline)?;
    } else if a.truth.is_some() {
        return Err(CliError::Usage("--truth needs the evaluation to cover a single group (use --holdout)".into()));
    }
    let outputs = outs.finish(
        "eval",
        json!({ "window_s": window_s, "holdout": a.holdout, "segment": cfg.segment }),
        &inputs,
    )?;
    Ok(Summary {
        command: "eval",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({
            "n_windows": samples.len(),
            "macro_f1": f1.macro_f1,
            "fnr": episodes.as_ref().and_then(|e| e.fnr),
            "fpr": episodes.as_ref().and_then(|e| e.fpr),
        }),
        message: format!("{} windows, macro-F1 {:.4}", samples.len(), f1.macro_f1),
    })
}

// ------------------------------------------------------------------ report

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Predicted per-second timeline CSV.
    #[arg(long)]
    pred: PathBuf,
    /// True per-second timeline CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Pipeline configuration JSON (the `segment` section is used).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Segment length in seconds.
    #[arg(long)]
    segment_s: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn report(a: &ReportArgs, _g: &Global) -> CliResult<Summary> {
    let (mut cfg, file): (BenchmarkConfig, _) = ConfigFile::load(a.config.as_deref())?;
    let mut log = SettingsLog::new("report", &file);
    log.apply(&file, "segment_s", "/segment/segment_len_s", &mut cfg.segment.segment_len_s, a.segment_s);
    let truth = read_timeline(&a.truth)?;
    let mut pred = read_timeline(&a.pred)?;
    if pred.len() != truth.len() {
        log.note(format!(
            "predicted timeline has {} s, truth {} s; padding with null or truncating",
            pred.len(),
            truth.len()
        ));
        pred = fit_timeline(pred, truth.len());
    }
    log.emit();
    let report = build_report(&pred, &truth, &cfg.segment)?;
    let mut outs = Outputs::create(&a.out)?;
    outs.write_json("report.json", &report)?;
    let outputs = outs.finish("report", to_value(&cfg.segment)?, &[a.pred.clone(), a.truth.clone()])?;
    Ok(Summary {
        command: "report",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({
            "segments": report.segments.len(),
            "truth_eating_segments": report.truth_eating_segments,
            "fnr": report.fnr,
            "fpr": report.fpr,
            "mae_intakes_eating": report.mae_intakes_eating,
            "mae_chew_seconds_eating": report.mae_chew_seconds_eating,
        }),
        message: format!(
            "{} segments, {} eating; FNR {:?}, FPR {:?}",
            report.segments.len(),
            report.truth_eating_segments,
            report.fnr,
            report.fpr
        ),
    })
}

// ------------------------------------------------------------------- kappa

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// First per-second timeline CSV.
    first: PathBuf,
    /// Second per-second timeline CSV.
    second: PathBuf,
}

pub fn kappa(a: &KappaArgs, _g: &Global) -> CliResult<Summary> {
    let x = read_timeline(&a.first)?;
    let y = read_timeline(&a.second)?;
    let k = cohens_kappa(&x.labels, &y.labels)?;
    Ok(Summary {
        command: "kappa",
        out_dir: None,
        outputs: Vec::new(),
        result: json!({ "kappa": k, "seconds": x.len() }),
        message: format!("kappa = {k:.6} over {} s", x.len()),
    })
}

// ------------------------------------------------------- benchmark / sweep

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// Pipeline configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    participants: Option<u32>,
    /// Recording length per participant.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Participant to hold out; repeat for several folds [default: all].
    #[arg(long)]
    holdout: Vec<u32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    range_bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn benchmark_config(a: &BenchmarkArgs, g: &Global, command: &'static str) -> CliResult<(BenchmarkConfig, SettingsLog)> {
    let (mut cfg, file): (BenchmarkConfig, _) = ConfigFile::load(a.config.as_deref())?;
    let mut log = SettingsLog::new(command, &file);
    apply_seed(&mut log, &file, &mut cfg, g);
    log.apply(&file, "participants", "/participants", &mut cfg.participants, a.participants);
    log.apply(&file, "duration_s", "/participant/duration_s", &mut cfg.participant.duration_s, a.duration_s);
    log.apply(&file, "epochs", "/train/epochs", &mut cfg.train.epochs, a.epochs);
    let holdouts = (!a.holdout.is_empty()).then(|| a.holdout.clone());
    log.apply(&file, "holdouts", "/holdouts", &mut cfg.holdouts, holdouts);
    log.apply(&file, "window_s", "/window/window_s", &mut cfg.window.window_s, a.window_s);
    log.apply(&file, "range_bins", "/window/n_bins", &mut cfg.window.n_bins, a.range_bins);
    Ok((cfg, log))
}

fn with_window_shape(cfg: &mut BenchmarkConfig) -> CliResult<()> {
    cfg.window.validate()?;
    let channels = SensingConfig::default().channel_layout().len();
    cfg.train.model.input_shape = cfg.window.shape(channels, frame_rate());
    cfg.validate()?;
    Ok(())
}

fn write_fold(outs: &mut Outputs, dir: &str, fold: &FoldOutput) -> CliResult<()> {
    save_model(&fold.model, outs.file(&format!("{dir}/model.msmd"))?)?;
    outs.write_json(&format!("{dir}/report.json"), &fold.report)?;
    outs.write_json(&format!("{dir}/predictions.json"), &fold.predictions)?;
    write_timeline(outs, &format!("{dir}/timeline.csv"), &fold.predicted_timeline)?;
    write_confusion(outs, &format!("{dir}/"), &fold.report.confusion)?;
    Ok(())
}

pub fn benchmark(a: &BenchmarkArgs, g: &Global) -> CliResult<Summary> {
    let (mut cfg, mut log) = benchmark_config(a, g, "benchmark")?;
    with_window_shape(&mut cfg)?;
    log.note(format!("input_shape = {:?} (window)", cfg.train.model.input_shape));
    log.emit();

    let mut outs = Outputs::create(&a.out)?;
    let mut fold_err = None;
    let report = run_benchmark(&cfg, |fold| {
        let h = fold.report.holdout;
        eprintln!("[benchmark] holdout {h}: macro-F1 {:.4}", fold.report.f1.macro_f1);
        if fold_err.is_none() {
            fold_err = write_fold(&mut outs, &format!("fold{h}"), fold).err();
        }
    })?;
    if let Some(e) = fold_err {
        return Err(e);
    }
    outs.write_json("summary.json", &report)?;
    write_confusion(&mut outs, "pooled_", &report.pooled_confusion)?;
    let outputs = outs.finish("benchmark", to_value(&cfg)?, &[])?;
    Ok(Summary {
        command: "benchmark",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({
            "mean_macro_f1": report.mean_macro_f1,
            "std_macro_f1": report.std_macro_f1,
            "fold_macro_f1": report.folds.iter().map(|f| (f.holdout, f.f1.macro_f1)).collect::<Vec<_>>(),
        }),
        message: format!(
            "macro-F1 {:.4} ± {:.4} over {} fold(s)",
            report.mean_macro_f1,
            report.std_macro_f1,
            report.folds.len()
        ),
    })
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    base: BenchmarkArgs,
    /// Window lengths in seconds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    windows: Vec<f64>,
    /// Sensing ranges in centimetres.
    #[arg(long, value_delimiter = ',', default_value = "30,50,80,100")]
    ranges_cm: Vec<f64>,
}

pub fn sweep(a: &SweepArgs, g: &Global) -> CliResult<Summary> {
    if a.base.window_s.is_some() || a.base.range_bins.is_some() {
        return Err(CliError::Usage("sweep takes --windows and --ranges-cm instead of --window-s and --range-bins".into()));
    }
    let (base, mut log) = benchmark_config(&a.base, g, "sweep")?;
    log.note(format!("windows = {:?} s, ranges = {:?} cm", a.windows, a.ranges_cm));
    log.emit();
    let sensing = SensingConfig::default();

    let mut outs = Outputs::create(&a.base.out)?;
    let mut table = Vec::new();
    let mut grid = Vec::new();
    for &w in &a.windows {
        for &cm in &a.ranges_cm {
            let mut cfg = base.clone();
            cfg.window.window_s = w;
            cfg.window.n_bins = sensing.bin_for_distance(cm / 100.0);
            with_window_shape(&mut cfg)?;
            let cell = format!("w{w}s_r{cm}cm");
            eprintln!("[sweep] {cell}: {} range bins, input {:?}", cfg.window.n_bins, cfg.train.model.input_shape);
            let mut fold_err = None;
            let report = run_benchmark(&cfg, |fold| {
                let h = fold.report.holdout;
                eprintln!("[sweep] {cell} holdout {h}: macro-F1 {:.4}", fold.report.f1.macro_f1);
                if fold_err.is_none() {
                    fold_err = outs.write_json(&format!("{cell}/holdout{h}.json"), &fold.report).err();
                }
            })?;
            if let Some(e) = fold_err {
                return Err(e);
            }
            grid.push(report.mean_macro_f1);
            table.push(json!({
                "window_s": w,
                "range_cm": cm,
                "n_bins": cfg.window.n_bins,
                "mean_macro_f1": report.mean_macro_f1,
                "std_macro_f1": report.std_macro_f1,
            }));
        }
    }

    let mut w = BufWriter::new(File::create(outs.file("sweep.csv")?).map_err(Error::Io)?);
    writeln!(w, "window_s,range_cm,n_bins,mean_macro_f1,std_macro_f1").map_err(Error::Io)?;
    for row in &table {
        writeln!(
            w,
            "{},{},{},{},{}",
            row["window_s"], row["range_cm"], row["n_bins"], row["mean_macro_f1"], row["std_macro_f1"]
        )
        .map_err(Error::Io)?;
    }
    w.flush().map_err(Error::Io)?;
    drop(w);
    outs.write_json("sweep.json", &table)?;
    let g = Grid::new(a.windows.len(), a.ranges_cm.len(), grid)?;
    let rows: Vec<String> = a.windows.iter().map(|w| format!("{w}s")).collect();
    let cols: Vec<String> = a.ranges_cm.iter().map(|c| format!("{c}cm")).collect();
    g.write_png(&outs.file("sweep.png")?, 64, 64)?;
    g.write_csv(&outs.file("sweep_grid.csv")?, &rows, &cols)?;
    let outputs = outs.finish("sweep", json!({ "base": base, "windows": a.windows, "ranges_cm": a.ranges_cm }), &[])?;
    Ok(Summary {
        command: "sweep",
        out_dir: Some(a.base.out.clone()),
        outputs,
        result: json!({ "cells": table }),
        message: format!("{} cells", table.len()),
    })
}

// -------------------------------------------------------------------- plot

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).args(["profile", "metrics"])))]
pub struct PlotArgs {
    /// Echo or differential profile (MSEP) to draw as a range-time heatmap.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// JSON with a `confusion` field (eval metrics, benchmark fold report).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Profile channel.
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Frames are averaged in blocks so the image is at most this wide.
    #[arg(long, default_value_t = 2000)]
    max_cols: usize,
    #[arg(long)]
    out: PathBuf,
}

pub fn plot(a: &PlotArgs, _g: &Global) -> CliResult<Summary> {
    let mut outs = Outputs::create(&a.out)?;
    let (input, message) = if let Some(p) = &a.profile {
        let stored = load_profile(p)?;
        let t = stored.tensor();
        if a.channel >= t.n_channels {
            return Err(Error::Argument(format!("channel {} of {}", a.channel, t.n_channels)).into());
        }
        if a.max_cols == 0 || t.n_frames == 0 {
            return Err(Error::Argument("nothing to draw".into()).into());
        }
        let block = t.n_frames.div_ceil(a.max_cols);
        let cols = t.n_frames.div_ceil(block);
        let mut values = Vec::with_capacity(t.n_bins * cols);
        for b in 0..t.n_bins {
            for c in 0..cols {
                let frames = c * block..((c + 1) * block).min(t.n_frames);
                let n = frames.len() as f64;
                values.push(frames.map(|f| t.get(a.channel, b, f).abs()).sum::<f64>() / n);
            }
        }
        let grid = Grid::new(t.n_bins, cols, values)?;
        let rows: Vec<String> = (0..t.n_bins).map(|b| format!("{:.4}", b as f64 * t.bin_resolution_m)).collect();
        let names: Vec<String> = (0..cols).map(|c| format!("{:.4}", (c * block) as f64 / t.frame_rate)).collect();
        grid.write_png(&outs.file("heatmap.png")?, 1, 1)?;
        grid.write_csv(&outs.file("heatmap.csv")?, &rows, &names)?;
        (p.clone(), format!("heatmap of {} bins x {cols} columns", t.n_bins))
    } else {
        let p = a.metrics.as_ref().expect("clap enforces one input");
        let value: serde_json::Value = read_json(p)?;
        let cm: ConfusionMatrix = serde_json::from_value(
            value
                .get("confusion")
                .cloned()
                .ok_or_else(|| Error::Format { format: "metrics json", reason: "no `confusion` field".into() })?,
        )
        .map_err(Error::Json)?;
        write_confusion(&mut outs, "", &cm)?;
        (p.clone(), format!("confusion matrix over {} windows", cm.total()))
    };
    let outputs = outs.finish("plot", json!({ "channel": a.channel, "max_cols": a.max_cols }), &[input])?;
    Ok(Summary {
        command: "plot",
        out_dir: Some(a.out.clone()),
        outputs,
        result: json!({}),
        message,
    })
}
