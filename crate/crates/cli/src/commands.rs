use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use heterodet::angle::{self, classify_by_angle, AngleConfig, AngleModel, FrameSample, DEFAULT_ANGLE_THRESHOLD};
use heterodet::datagen::{self, FaultMenu, SceneStyle, SyntheticRunSpec};
use heterodet::fusion::{FusionConfig, FusionWeights};
use heterodet::harness::log::FrameRef;
use heterodet::harness::tables::{self, FeatureTable};
use heterodet::harness::{self, align, evaluate, pca_diagnostic, standardize, PipelineConfig, SensorLog, DEFAULT_TOLERANCE};
use heterodet::imu::{self, ImuConfig, DATA_FEATURE_NAMES, MAG_FEATURE_NAMES};
use heterodet::GrayImage;

#[derive(Debug, Parser)]
#[command(name = "heterodet", version, about = "Heterogeneous anomaly detection for drone telemetry")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic run: sensor log, frames, ground truth and features.
    Generate(GenerateArgs),
    /// Train the rotation network on an image corpus.
    PretrainAngle(PretrainArgs),
    /// Continue training the rotation network on normal frames of a log.
    FinetuneAngle(FinetuneArgs),
    /// Train both IMU autoencoders on a normal log.
    TrainImu(TrainImuArgs),
    /// Score a log with trained checkpoints.
    Score(ScoreArgs),
    /// Compare scores or angle predictions with ground truth.
    Evaluate(EvaluateArgs),
    /// Project a feature table onto its principal components.
    Pca(PcaArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the camera scene; runs sharing it watch the same ground.
    #[arg(long, default_value_t = 0)]
    scene_seed: u64,
    /// Number of timestamps.
    #[arg(long, default_value_t = 1000)]
    duration: usize,
    #[arg(long, default_value_t = 0.3)]
    abnormal_fraction: f64,
    #[arg(long, default_value_t = 30.0)]
    tilt_min: f32,
    #[arg(long, default_value_t = 90.0)]
    tilt_max: f32,
    /// Gyro (rad/s) and accelerometer (m/s²) bias at faulty timestamps.
    #[arg(long, default_value_t = FaultMenu::default().imu_bias)]
    imu_bias: f64,
    /// Magnetometer spike at faulty timestamps, raw units.
    #[arg(long, default_value_t = FaultMenu::default().mag_spike)]
    mag_spike: f64,
    /// Side of the square camera scene before preprocessing.
    #[arg(long, default_value_t = 96)]
    scene_size: usize,
    /// Also write this many procedural pretraining images to `corpus/`.
    #[arg(long, default_value_t = 0)]
    corpus_size: usize,
}

#[derive(Debug, Args)]
struct AngleTrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    pairs_per_epoch: Option<usize>,
    #[arg(long)]
    validation_pairs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Pairs cut from each augmented view, sharing its reference frame.
    #[arg(long)]
    pairs_per_view: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f32>,
    /// Train on plain pairs only, without mirrored or pre-rotated views.
    #[arg(long)]
    no_augment: bool,
    /// Write a one-row training report CSV here.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl AngleTrainArgs {
    /// Flags given on the command line override `d`.
    fn config(&self, d: AngleConfig) -> AngleConfig {
        AngleConfig {
            seed: self.seed,
            epochs: self.epochs.unwrap_or(d.epochs),
            pairs_per_epoch: self.pairs_per_epoch.unwrap_or(d.pairs_per_epoch),
            validation_pairs: self.validation_pairs.unwrap_or(d.validation_pairs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            pairs_per_view: self.pairs_per_view.unwrap_or(d.pairs_per_view),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            head_lr_factor: d.head_lr_factor,
            final_lr_factor: d.final_lr_factor,
            augment: !self.no_augment,
        }
    }
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// Directory of png, jpeg or bmp images, read in file-name order.
    #[arg(long, conflicts_with = "procedural", required_unless_present = "procedural")]
    corpus: Option<PathBuf>,
    /// Use this many built-in procedural images instead of a directory.
    #[arg(long)]
    procedural: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: AngleTrainArgs,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    /// Pretrained angle checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Sensor log whose frames are all normal.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: AngleTrainArgs,
}

#[derive(Debug, Args)]
struct TrainImuArgs {
    /// Sensor log recorded during normal operation.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ImuConfig::default().epochs)]
    epochs: u32,
    #[arg(long, default_value_t = ImuConfig::default().learning_rate)]
    learning_rate: f32,
    /// Mag samples pair with data samples within this many seconds.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct FusionArgs {
    /// Fusion weights for the IMU data, IMU mag and image degrees.
    #[arg(long, value_parser = parse_weights, default_value = "1,0.9,0.75")]
    weights: [f64; 3],
    /// Combined degree at or above which a timestamp is abnormal.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
}

fn parse_weights(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [d, m, a] = parts.as_slice() else {
        return Err(format!("expected three comma-separated weights, got `{s}`"));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    Ok([num(d)?, num(m)?, num(a)?])
}

impl FusionArgs {
    fn config(&self) -> Result<FusionConfig> {
        let [d, m, a] = self.weights;
        let cfg = FusionConfig {
            weights: FusionWeights::new(d, m, a)?,
            threshold: self.threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    log: PathBuf,
    /// IMU anomaly checkpoint.
    #[arg(long)]
    imu: Option<PathBuf>,
    /// Angle network checkpoint.
    #[arg(long)]
    angle: Option<PathBuf>,
    /// Reference image; defaults to the one stored by fine-tuning.
    #[arg(long)]
    reference_frame: Option<PathBuf>,
    /// Score CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Timestamps lacking a modality are listed here.
    #[arg(long)]
    unscorable: Option<PathBuf>,
    /// Per-frame angle predictions are written here.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Ground truth CSV; enables the evaluation summary.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Evaluation report CSV (requires --truth).
    #[arg(long, requires = "truth")]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[command(flatten)]
    fusion: FusionArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Fused score CSV.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    scores: Option<PathBuf>,
    /// Angle prediction CSV, classified with --angle-threshold.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    truth: PathBuf,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ANGLE_THRESHOLD)]
    angle_threshold: f32,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct PcaArgs {
    /// Feature CSV; `timestamp` and `label` columns are passed through.
    #[arg(long)]
    input: PathBuf,
    /// Projection CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// Skip per-column standardization before projecting.
    #[arg(long)]
    raw: bool,
    /// Explained-variance CSV to write.
    #[arg(long)]
    variance: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::PretrainAngle(a) => pretrain_angle(a),
        Command::FinetuneAngle(a) => finetune_angle(a),
        Command::TrainImu(a) => train_imu(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Pca(a) => pca(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = SyntheticRunSpec {
        seed: a.seed,
        duration: a.duration,
        abnormal_fraction: a.abnormal_fraction,
        faults: FaultMenu {
            tilt_degrees: (a.tilt_min, a.tilt_max),
            imu_bias: a.imu_bias,
            mag_spike: a.mag_spike,
        },
    };
    let (data, mag, labels) = datagen::make_imu_stream(&spec)?;
    let base = datagen::procedural_corpus(1, a.scene_size, SceneStyle::Aerial, a.scene_seed).remove(0);
    let frames = datagen::make_frame_stream(&base, &labels, a.seed.wrapping_add(1))?;

    let frame_dir = a.out.join("frames");
    fs::create_dir_all(&frame_dir).with_context(|| format!("creating {}", frame_dir.display()))?;
    base.save_png(a.out.join("base.png"))?;
    let mut refs = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let rel = PathBuf::from("frames").join(format!("{i:06}.png"));
        f.image().save_png(a.out.join(&rel))?;
        refs.push(FrameRef {
            timestamp: f.timestamp,
            path: rel,
        });
    }
    let log = SensorLog {
        data: data.clone(),
        mag: mag.clone(),
        frames: refs,
    };
    log.save(a.out.join("log.txt"))?;
    tables::write_truth(a.out.join("truth.csv"), &labels)?;
    tables::write_features(a.out.join("features.csv"), &feature_table(&data, &mag, &labels))?;

    if a.corpus_size > 0 {
        let dir = a.out.join("corpus");
        fs::create_dir_all(&dir)?;
        for (i, img) in datagen::procedural_corpus(a.corpus_size, a.scene_size, SceneStyle::Objects, a.scene_seed.wrapping_add(1))
            .iter()
            .enumerate()
        {
            img.save_png(dir.join(format!("{i:05}.png")))?;
        }
    }
    let abnormal = labels.iter().filter(|l| l.label.is_abnormal()).count();
    println!(
        "wrote {} timestamps ({abnormal} abnormal) to {}",
        labels.len(),
        a.out.display()
    );
    Ok(())
}

fn feature_table(data: &[imu::ImuDataSample], mag: &[imu::ImuMagSample], labels: &[datagen::LabeledTimestamp]) -> FeatureTable {
    FeatureTable {
        columns: DATA_FEATURE_NAMES.iter().chain(&MAG_FEATURE_NAMES).map(|s| s.to_string()).collect(),
        rows: data
            .iter()
            .zip(mag)
            .map(|(d, m)| d.features().iter().chain(&m.features()).copied().collect())
            .collect(),
        timestamps: Some(data.iter().map(|d| d.timestamp).collect()),
        labels: Some(labels.iter().map(|l| l.label.to_string()).collect()),
    }
}

fn load_corpus(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading corpus directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "bmp"))
        })
        .collect();
    paths.sort();
    Ok(paths.iter().map(GrayImage::load).collect::<heterodet::Result<_>>()?)
}

fn print_angle_report(what: &str, r: &angle::AngleReport, report: Option<&Path>) -> Result<()> {
    println!(
        "{what}: {} epochs, {} pairs, train mse {:.5}, validation mse {:.5}, validation mae {:.2} deg",
        r.epochs, r.pairs_seen, r.train_mse, r.validation_mse, r.validation_mae
    );
    if let Some(p) = report {
        let t = FeatureTable {
            columns: ["epochs", "pairs_seen", "train_mse", "validation_mse", "validation_mae"].map(String::from).to_vec(),
            rows: vec![vec![r.epochs as f64, r.pairs_seen as f64, r.train_mse as f64, r.validation_mse as f64, r.validation_mae as f64]],
            timestamps: None,
            labels: None,
        };
        tables::write_features(p, &t)?;
    }
    Ok(())
}

fn pretrain_angle(a: PretrainArgs) -> Result<()> {
    let corpus = match (&a.corpus, a.procedural) {
        (Some(dir), _) => load_corpus(dir)?,
        (None, Some(n)) => datagen::procedural_corpus(n, 96, SceneStyle::Objects, a.train.seed),
        (None, None) => bail!("either --corpus or --procedural is required"),
    };
    let (model, report) = angle::pretrain(&corpus, &a.train.config(AngleConfig::default()))?;
    model.save(&a.out)?;
    print_angle_report("pretrain", &report, a.train.report.as_deref())
}

fn log_frames(log_path: &Path, log: &SensorLog) -> Result<Vec<FrameSample>> {
    let base = log_path.parent().unwrap_or(Path::new(""));
    log.frames
        .iter()
        .map(|f| {
            let p = if f.path.is_absolute() { f.path.clone() } else { base.join(&f.path) };
            Ok(angle::load_frame(p, f.timestamp)?)
        })
        .collect()
}

fn finetune_angle(a: FinetuneArgs) -> Result<()> {
    let model = AngleModel::load(&a.model)?;
    let log = harness::load_log(&a.log)?;
    let frames = log_frames(&a.log, &log)?;
    let (tuned, report) = angle::finetune(&model, &frames, &a.train.config(AngleConfig::finetune()))?;
    tuned.save(&a.out)?;
    print_angle_report("finetune", &report, a.train.report.as_deref())
}

fn train_imu(a: TrainImuArgs) -> Result<()> {
    let log = harness::load_log(&a.log)?;
    let aligned = align(&log, a.tolerance)?;
    let (data, mag): (Vec<_>, Vec<_>) = aligned.rows.iter().filter_map(|r| r.mag.map(|m| (r.data, m))).unzip();
    if !aligned.missing_mag.is_empty() {
        eprintln!("skipping {} data samples without a mag sample in range", aligned.missing_mag.len());
    }
    let cfg = ImuConfig {
        seed: a.seed,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
    };
    let (model, report) = imu::train_joint(&data, &mag, &cfg)?;
    model.save(&a.out)?;
    println!(
        "train-imu: {} samples, loss {:.6} -> {:.6}, L_max data {:.6}, L_max mag {:.6}",
        data.len(),
        report.initial_loss,
        report.final_loss,
        report.l_max_data,
        report.l_max_mag
    );
    Ok(())
}

fn print_report(r: &harness::EvalReport) {
    println!(
        "tp {} fp {} tn {} fn {} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}",
        r.true_positives, r.false_positives, r.true_negatives, r.false_negatives, r.accuracy, r.precision, r.recall, r.f1
    );
}

fn score(a: ScoreArgs) -> Result<()> {
    let config = PipelineConfig {
        log: a.log.clone(),
        imu_checkpoint: a.imu.clone(),
        angle_checkpoint: a.angle.clone(),
        reference_frame: a.reference_frame.clone(),
        truth: a.truth.clone(),
        tolerance: a.tolerance,
        fusion: a.fusion.config()?,
    };
    let out = harness::run_pipeline(&config)?;
    tables::write_scores(&a.out, &out.scores)?;
    if let Some(p) = &a.unscorable {
        tables::write_unscorable(p, &out.unscorable)?;
    }
    if let Some(p) = &a.predictions {
        tables::write_predictions(p, &out.angles)?;
    }
    let abnormal = out.scores.iter().filter(|s| s.label.is_abnormal()).count();
    println!(
        "scored {} timestamps ({abnormal} abnormal), {} unscorable",
        out.scores.len(),
        out.unscorable.len()
    );
    if let Some(r) = &out.report {
        print_report(r);
        if let Some(p) = &a.report {
            tables::write_report(p, r)?;
        }
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let truth = tables::read_truth(&a.truth)?;
    let report = match (&a.scores, &a.predictions) {
        (Some(p), _) => harness::evaluate_scores(&tables::read_scores(p)?, &truth, a.tolerance)?,
        (None, Some(p)) => {
            let preds = tables::read_predictions(p)?;
            let times: Vec<f64> = truth.iter().map(|t| t.timestamp).collect();
            let mut predicted = Vec::with_capacity(preds.len());
            let mut actual = Vec::with_capacity(preds.len());
            for p in &preds {
                let j = harness::align::nearest_within(&times, p.timestamp, a.tolerance)
                    .with_context(|| format!("prediction at {} has no ground truth", p.timestamp))?;
                predicted.push(classify_by_angle(p.angle_degrees, a.angle_threshold)?);
                actual.push(truth[j].label);
            }
            evaluate(&predicted, &actual)?
        }
        (None, None) => bail!("either --scores or --predictions is required"),
    };
    tables::write_report(&a.out, &report)?;
    print_report(&report);
    Ok(())
}

fn pca(a: PcaArgs) -> Result<()> {
    let table = tables::read_features(&a.input)?;
    let rows = if a.raw { table.rows.clone() } else { standardize(&table.rows) };
    let projection = pca_diagnostic(&rows, a.components)?;
    tables::write_projection(&a.out, &table, &projection)?;
    if let Some(p) = &a.variance {
        tables::write_explained_variance(p, &projection)?;
    }
    let ratios: Vec<String> = projection.explained_variance_ratio.iter().map(|r| format!("{r:.4}")).collect();
    println!("explained variance ratios: {}", ratios.join(", "));
    Ok(())
}
