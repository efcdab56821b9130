use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::angle::{load_frame, sigma_angle, AngleModel, FrameSample};
use crate::datagen::LabeledTimestamp;
use crate::error::{Error, Result};
use crate::fusion::{fuse_stream, AnomalyScore, DegreeTriple, FusionConfig, Unscorable};
use crate::harness::align::{align, nearest_within, DEFAULT_TOLERANCE};
use crate::harness::eval::{evaluate, EvalReport};
use crate::harness::log::{load_log, FrameRef, SensorLog};
use crate::harness::tables::{read_truth, AnglePrediction};
use crate::imu::ImuAnomalyModel;

const FRAME_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub log: PathBuf,
    pub imu_checkpoint: Option<PathBuf>,
    pub angle_checkpoint: Option<PathBuf>,
    /// Overrides the reference frame stored with the angle model.
    pub reference_frame: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub tolerance: f64,
    pub fusion: FusionConfig,
}

impl PipelineConfig {
    pub fn new(log: impl Into<PathBuf>) -> Self {
        Self {
            log: log.into(),
            imu_checkpoint: None,
            angle_checkpoint: None,
            reference_frame: None,
            truth: None,
            tolerance: DEFAULT_TOLERANCE,
            fusion: FusionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    pub scores: Vec<AnomalyScore>,
    pub unscorable: Vec<Unscorable>,
    pub angles: Vec<AnglePrediction>,
    pub report: Option<EvalReport>,
}

/// Scores every IMU/data timestamp of `log`. Frames are obtained through
/// `load` so callers decide how paths resolve.
pub fn score_log<F>(
    log: &SensorLog,
    mut load: F,
    imu: &ImuAnomalyModel,
    angle: &AngleModel,
    reference: &FrameSample,
    tolerance: f64,
    fusion: &FusionConfig,
) -> Result<PipelineOutput>
where
    F: FnMut(&FrameRef) -> Result<FrameSample>,
{
    fusion.validate()?;
    let aligned = align(log, tolerance)?;
    if aligned.rows.is_empty() {
        return Ok(PipelineOutput::default());
    }
    let data: Vec<_> = aligned.rows.iter().map(|r| r.data).collect();
    let sigma_d = imu.score_data(&data)?;
    let mags: Vec<_> = aligned.rows.iter().filter_map(|r| r.mag).collect();
    let mut sigma_m = imu.score_mag(&mags)?.into_iter();

    // each matched frame is scored once, however many rows it serves
    let mut frame_ids: HashMap<u64, usize> = HashMap::new();
    let mut frames: Vec<&FrameRef> = Vec::new();
    for f in aligned.rows.iter().filter_map(|r| r.frame.as_ref()) {
        frame_ids.entry(f.timestamp.to_bits()).or_insert_with(|| {
            frames.push(f);
            frames.len() - 1
        });
    }
    let reference_embedding = angle.embed(std::slice::from_ref(reference))?.remove(0);
    let mut angles = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(FRAME_BATCH) {
        let samples = chunk.iter().map(|f| load(f)).collect::<Result<Vec<_>>>()?;
        let embeddings = angle.embed(&samples)?;
        for (f, a) in chunk.iter().zip(angle.predict_from_embeddings(&reference_embedding, &embeddings)?) {
            angles.push(AnglePrediction {
                timestamp: f.timestamp,
                angle_degrees: a,
                sigma_l: sigma_angle(a)?,
            });
        }
    }

    let triples: Vec<DegreeTriple> = aligned
        .rows
        .iter()
        .zip(&sigma_d)
        .map(|(r, &d)| DegreeTriple {
            timestamp: r.timestamp,
            sigma_data: Some(d as f64),
            sigma_mag: r.mag.map(|_| sigma_m.next().expect("one score per matched mag sample") as f64),
            sigma_angle: r
                .frame
                .as_ref()
                .map(|f| angles[frame_ids[&f.timestamp.to_bits()]].sigma_l as f64),
        })
        .collect();
    let fused = fuse_stream(&triples, fusion)?;
    Ok(PipelineOutput {
        scores: fused.scores,
        unscorable: fused.unscorable,
        angles,
        report: None,
    })
}

/// Matches each score to the nearest ground-truth timestamp and evaluates.
pub fn evaluate_scores(scores: &[AnomalyScore], truth: &[LabeledTimestamp], tolerance: f64) -> Result<EvalReport> {
    let times: Vec<f64> = truth.iter().map(|t| t.timestamp).collect();
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("ground-truth timestamps must be strictly increasing".into()));
    }
    let mut predicted = Vec::with_capacity(scores.len());
    let mut actual = Vec::with_capacity(scores.len());
    let mut orphans = Vec::new();
    for s in scores {
        match nearest_within(&times, s.timestamp, tolerance) {
            Some(j) => {
                predicted.push(s.label);
                actual.push(truth[j].label);
            }
            None => orphans.push(s.timestamp),
        }
    }
    if !orphans.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} scored timestamps have no ground truth within {tolerance} s (first: {})",
            orphans.len(),
            orphans[0]
        )));
    }
    evaluate(&predicted, &actual)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing_checkpoint<'a>(path: &'a Option<PathBuf>, what: &'static str) -> Result<&'a PathBuf> {
    path.as_ref().filter(|p| p.exists()).ok_or(Error::MissingCheckpoint(what))
}

/// Loads checkpoints and the log named in `config`, scores it and, when a
/// truth file is given, evaluates the labels.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    let imu_path = existing_checkpoint(&config.imu_checkpoint, "IMU anomaly")?;
    let angle_path = existing_checkpoint(&config.angle_checkpoint, "angle")?;
    let imu = ImuAnomalyModel::load(imu_path)?;
    let angle = AngleModel::load(angle_path)?;
    let reference = match &config.reference_frame {
        Some(p) => load_frame(p, 0.0)?,
        None => angle
            .reference_frame()
            .cloned()
            .ok_or_else(|| Error::InvalidInput("no reference frame: pass one or fine-tune the angle model first".into()))?,
    };
    let log = load_log(&config.log)?;
    let base = config.log.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = score_log(
        &log,
        |f| load_frame(resolve(&base, &f.path), f.timestamp),
        &imu,
        &angle,
        &reference,
        config.tolerance,
        &config.fusion,
    )?;
    if let Some(truth) = &config.truth {
        if !out.scores.is_empty() {
            out.report = Some(evaluate_scores(&out.scores, &read_truth(truth)?, config.tolerance)?);
        }
    }
    Ok(out)
}
