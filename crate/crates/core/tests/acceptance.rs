//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Trained models are shared between criteria; timings are measured per
//! criterion and include only the work that criterion needs on its own.

#[path = "../../nn/tests/support/reference.rs"]
mod reference;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use heterodet::angle::{self, classify_by_angle, preprocess, AngleConfig, AngleModel, FrameSample, DEFAULT_ANGLE_THRESHOLD};
use heterodet::datagen::pairs::split_sources;
use heterodet::datagen::{self, rotate_image, LabeledTimestamp, SceneStyle, SyntheticRunSpec};
use heterodet::fusion::{fuse, FusionConfig};
use heterodet::harness::{self, pca_diagnostic, standardize, FrameRef, PipelineConfig, SensorLog};
use heterodet::imu::{self, ImuConfig, ImuDataSample, ImuMagSample};
use heterodet::{Label, GrayImage};
use heterodet_nn::{Checkpoint, LayerSpec, Metadata, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCENE_SIZE: usize = 96;
const CORPUS_IMAGES: usize = 6000;
const TRAIN_RUN_SEED: u64 = 101;
const TEST_RUN_SEED: u64 = 202;
const SCENE_SEED: u64 = 303;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------- 1

fn gradients() -> Outcome {
    let start = Instant::now();
    let (worst, done, skipped, params) = reference::sweep(24, 500, 1e-3);
    let mut kinds: Vec<&str> = (0..24)
        .flat_map(|s| reference::random_config(s, 500).0.specs().iter().map(LayerSpec::kind).collect::<Vec<_>>())
        .collect();
    kinds.sort();
    kinds.dedup();
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-3 && done >= 20 && within(elapsed, 60),
        format!(
            "max relative error {worst:.2e} over {done} configs ({params} parameters, {skipped} kinked draws redrawn), layer kinds {kinds:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn fusion_grid() -> Outcome {
    let start = Instant::now();
    let cfg = FusionConfig::default();
    let mut worst = 0.0f64;
    let mut label_errors = 0;
    let mut boundary = 0;
    for a in 0..=10i64 {
        for b in 0..=10i64 {
            for c in 0..=10i64 {
                let (n, label) = fuse(a as f64 / 10.0, b as f64 / 10.0, c as f64 / 10.0, &cfg).unwrap();
                // in twentieths of a tenth: 20a + 18b + 15c against 200
                let scaled = 20 * a + 18 * b + 15 * c;
                let exact = scaled as f64 / 200.0;
                worst = worst.max((n - exact).abs());
                let expected = if scaled >= 200 { Label::Abnormal } else { Label::Normal };
                if label != expected {
                    label_errors += 1;
                }
                if scaled == 200 {
                    boundary += 1;
                }
            }
        }
    }
    let (_, unit) = fuse(1.0, 0.0, 0.0, &cfg).unwrap();
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && label_errors == 0 && boundary > 0 && unit == Label::Abnormal && within(elapsed, 10),
        format!("1331 triples, max |N - exact| {worst:.1e}, {label_errors} label mismatches, {boundary} triples with N exactly 1 all abnormal"),
    )
}

// ---------------------------------------------------------------- 3

fn angle_config() -> AngleConfig {
    AngleConfig {
        seed: 7,
        ..AngleConfig::default()
    }
}

/// Held-out source images rotated by the normal-frame jitter.
fn jitter_accuracy(model: &AngleModel, corpus: &[GrayImage], seed: u64) -> (f64, usize) {
    let (_, held_out) = split_sources(corpus.len(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut correct = 0;
    let mut total = 0;
    for _ in 0..2 {
        for &i in &held_out {
            let square = corpus[i].center_crop_square();
            let jitter = rng.random_range(-datagen::streams::FRAME_JITTER_DEGREES..=datagen::streams::FRAME_JITTER_DEGREES);
            let reference = preprocess(&square, 0.0);
            let candidate = preprocess(&rotate_image(&square, jitter).unwrap(), 0.0);
            let a = model.predict_angle(&reference, &candidate).unwrap();
            if classify_by_angle(a, DEFAULT_ANGLE_THRESHOLD).unwrap() == Label::Normal {
                correct += 1;
            }
            total += 1;
        }
    }
    (correct as f64 / total as f64, total)
}

fn angle_regression(corpus: &[GrayImage]) -> (Outcome, AngleModel) {
    let start = Instant::now();
    let cfg = angle_config();
    let (model, report) = angle::pretrain(corpus, &cfg).unwrap();
    let (accuracy, frames) = jitter_accuracy(&model, corpus, cfg.seed);
    let elapsed = start.elapsed();
    let pass = report.pairs_seen >= 1000
        && corpus.len() >= 100
        && report.validation_mae <= 5.0
        && accuracy >= 0.94
        && within(elapsed, 15 * 60);
    (
        outcome(
            pass,
            format!(
                "{} training pairs from {} images, validation MAE {:.2} deg on {} held-out pairs, jittered-normal accuracy {:.1}% on {frames} frames, {:.0}s",
                report.pairs_seen,
                corpus.len(),
                report.validation_mae,
                cfg.validation_pairs,
                100.0 * accuracy,
                elapsed.as_secs_f64()
            ),
        ),
        model,
    )
}

// ---------------------------------------------------------------- 4

struct Run {
    data: Vec<ImuDataSample>,
    mag: Vec<ImuMagSample>,
    labels: Vec<LabeledTimestamp>,
    frames: Vec<FrameSample>,
}

fn make_run(seed: u64, fraction: f64, scene: &GrayImage) -> Run {
    let spec = SyntheticRunSpec::new(seed, 1000, fraction);
    let (data, mag, labels) = datagen::make_imu_stream(&spec).unwrap();
    let frames = datagen::make_frame_stream(scene, &labels, seed ^ 0xf4a3e).unwrap();
    Run {
        data,
        mag,
        labels,
        frames,
    }
}

fn imu_separation(train: &Run, test: &Run) -> (Outcome, imu::ImuAnomalyModel) {
    let start = Instant::now();
    let (model, _) = imu::train_joint(&train.data, &train.mag, &ImuConfig::default()).unwrap();
    let train_d = model.score_data(&train.data).unwrap();
    let train_m = model.score_mag(&train.mag).unwrap();
    let max_train = train_d.iter().chain(&train_m).fold(0.0f32, |a, &v| a.max(v));
    let elapsed = start.elapsed();

    let test_d = model.score_data(&test.data).unwrap();
    let test_m = model.score_mag(&test.mag).unwrap();
    let split = |s: &[f32], abnormal: bool| -> Vec<f32> {
        s.iter()
            .zip(&test.labels)
            .filter(|(_, l)| l.label.is_abnormal() == abnormal)
            .map(|(v, _)| *v)
            .collect()
    };
    let (nd, fd) = (median(split(&test_d, false)), median(split(&test_d, true)));
    let (nm, fm) = (median(split(&test_m, false)), median(split(&test_m, true)));
    let pass = train.data.len() >= 900 && max_train <= 1.0 && fd >= 3.0 * nd && fm >= 3.0 * nm && within(elapsed, 5 * 60);
    (
        outcome(
            pass,
            format!(
                "{} training samples, max training sigma {max_train:.4}; median sigma data {fd:.3} faulty vs {nd:.3} normal ({:.1}x), mag {fm:.3} vs {nm:.3} ({:.1}x), training {:.0}s",
                train.data.len(),
                fd / nd,
                fm / nm,
                elapsed.as_secs_f64()
            ),
        ),
        model,
    )
}

// ---------------------------------------------------------------- 5

fn write_run(run: &Run, dir: &Path) -> PathBuf {
    std::fs::create_dir_all(dir.join("frames")).unwrap();
    let frames = run
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let rel = PathBuf::from("frames").join(format!("{i:06}.png"));
            f.image().save_png(dir.join(&rel)).unwrap();
            FrameRef {
                timestamp: f.timestamp,
                path: rel,
            }
        })
        .collect();
    let log = SensorLog {
        data: run.data.clone(),
        mag: run.mag.clone(),
        frames,
    };
    let path = dir.join("log.txt");
    log.save(&path).unwrap();
    harness::tables::write_truth(dir.join("truth.csv"), &run.labels).unwrap();
    path
}

fn finetune_config() -> AngleConfig {
    AngleConfig {
        seed: 8,
        ..AngleConfig::finetune()
    }
}

fn end_to_end(pretrained: &AngleModel, imu_model: &imu::ImuAnomalyModel, train: &Run, test: &Run, pretrain_time: Duration, imu_time: Duration) -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (tuned, _) = angle::finetune(pretrained, &train.frames, &finetune_config()).unwrap();
    let angle_path = dir.path().join("angle.ckpt");
    let imu_path = dir.path().join("imu.ckpt");
    tuned.save(&angle_path).unwrap();
    imu_model.save(&imu_path).unwrap();
    let run_dir = dir.path().join("run");
    let log = write_run(test, &run_dir);

    let mut cfg = PipelineConfig::new(&log);
    cfg.imu_checkpoint = Some(imu_path);
    cfg.angle_checkpoint = Some(angle_path);
    cfg.truth = Some(run_dir.join("truth.csv"));
    let out = harness::run_pipeline(&cfg).unwrap();
    let r = out.report.expect("truth given");
    let elapsed = start.elapsed() + pretrain_time + imu_time;
    outcome(
        r.accuracy >= 0.95 && r.f1 >= 0.95 && out.unscorable.is_empty() && within(elapsed, 20 * 60),
        format!(
            "{} timestamps scored: accuracy {:.4}, F1 {:.4} (tp {} fp {} tn {} fn {}), {:.0}s including training",
            r.total(),
            r.accuracy,
            r.f1,
            r.true_positives,
            r.false_positives,
            r.true_negatives,
            r.false_negatives,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6

/// Fisher discriminant on 2-D points followed by the best threshold along
/// the discriminant direction.
fn linear_separability(points: &[Vec<f64>], abnormal: &[bool]) -> f64 {
    let class_mean = |want: bool| {
        let sel: Vec<&Vec<f64>> = points.iter().zip(abnormal).filter(|(_, &a)| a == want).map(|(p, _)| p).collect();
        let n = sel.len() as f64;
        (
            [sel.iter().map(|p| p[0]).sum::<f64>() / n, sel.iter().map(|p| p[1]).sum::<f64>() / n],
            sel,
        )
    };
    let (m0, s0) = class_mean(false);
    let (m1, s1) = class_mean(true);
    let mut sw = [[0.0f64; 2]; 2];
    for (sel, m) in [(&s0, m0), (&s1, m1)] {
        for p in sel.iter() {
            let d = [p[0] - m[0], p[1] - m[1]];
            for i in 0..2 {
                for j in 0..2 {
                    sw[i][j] += d[i] * d[j];
                }
            }
        }
    }
    sw[0][0] += 1e-9;
    sw[1][1] += 1e-9;
    let det = sw[0][0] * sw[1][1] - sw[0][1] * sw[1][0];
    let dm = [m1[0] - m0[0], m1[1] - m0[1]];
    let w = [(sw[1][1] * dm[0] - sw[0][1] * dm[1]) / det, (-sw[1][0] * dm[0] + sw[0][0] * dm[1]) / det];
    let mut proj: Vec<(f64, bool)> = points.iter().zip(abnormal).map(|(p, &a)| (w[0] * p[0] + w[1] * p[1], a)).collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0));
    // everything at or above the cut is called abnormal
    let total_abnormal = abnormal.iter().filter(|&&a| a).count();
    let mut best = total_abnormal.max(abnormal.len() - total_abnormal);
    let mut normals_below = 0;
    let mut abnormals_below = 0;
    for &(_, a) in &proj {
        if a {
            abnormals_below += 1;
        } else {
            normals_below += 1;
        }
        best = best.max(normals_below + (total_abnormal - abnormals_below));
    }
    best as f64 / points.len() as f64
}

fn pca_separation(test: &Run) -> Outcome {
    let start = Instant::now();
    let rows: Vec<Vec<f64>> = test
        .data
        .iter()
        .zip(&test.mag)
        .map(|(d, m)| d.features().iter().chain(&m.features()).copied().collect())
        .collect();
    let abnormal: Vec<bool> = test.labels.iter().map(|l| l.label.is_abnormal()).collect();
    let p = pca_diagnostic(&standardize(&rows), 2).unwrap();
    let accuracy = linear_separability(&p.projected, &abnormal);
    let elapsed = start.elapsed();
    outcome(
        accuracy >= 0.9 && within(elapsed, 10),
        format!(
            "{} samples, 13 standardized features, explained variance {:.3}/{:.3}, linear accuracy {:.1}%",
            rows.len(),
            p.explained_variance_ratio[0],
            p.explained_variance_ratio[1],
            100.0 * accuracy
        ),
    )
}

// ---------------------------------------------------------------- 7

fn run_bytes(seed: u64, scene: &GrayImage) -> Vec<u8> {
    let run = make_run(seed, 0.3, scene);
    let dir = tempfile::tempdir().unwrap();
    let log = write_run(&run, dir.path());
    let mut bytes = std::fs::read(&log).unwrap();
    bytes.extend(std::fs::read(dir.path().join("truth.csv")).unwrap());
    for i in 0..run.frames.len() {
        bytes.extend(std::fs::read(dir.path().join(format!("frames/{i:06}.png"))).unwrap());
    }
    bytes
}

fn determinism(scene: &GrayImage, train: &Run, corpus: &[GrayImage]) -> Outcome {
    let mut failures = Vec::new();
    if run_bytes(TEST_RUN_SEED, scene) != run_bytes(TEST_RUN_SEED, scene) {
        failures.push("generated run");
    }
    if datagen::procedural_corpus(20, SCENE_SIZE, SceneStyle::Objects, 1) != datagen::procedural_corpus(20, SCENE_SIZE, SceneStyle::Objects, 1) {
        failures.push("procedural corpus");
    }
    let imu_cfg = ImuConfig {
        epochs: 3,
        ..ImuConfig::default()
    };
    let imu_bytes = || imu::train_joint(&train.data, &train.mag, &imu_cfg).unwrap().0.to_checkpoint().to_bytes();
    if imu_bytes() != imu_bytes() {
        failures.push("IMU checkpoint");
    }
    let small = AngleConfig {
        epochs: 2,
        pairs_per_epoch: 48,
        validation_pairs: 16,
        ..AngleConfig::default()
    };
    let pretrained = || angle::pretrain(&corpus[..120], &small).unwrap().0;
    let a = pretrained();
    if a.to_checkpoint().to_bytes() != pretrained().to_checkpoint().to_bytes() {
        failures.push("pretrained angle checkpoint");
    }
    let tuned = || angle::finetune(&a, &train.frames[..50], &small).unwrap().0.to_checkpoint().to_bytes();
    if tuned() != tuned() {
        failures.push("fine-tuned angle checkpoint");
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "generated logs, frames, truth, corpus and all three checkpoint kinds are bit-identical on rerun".into()
        } else {
            format!("differs on rerun: {failures:?}")
        },
    )
}

// ---------------------------------------------------------------- 8

const ROUNDTRIP_CASES: usize = 128;

fn random_metadata(rng: &mut ChaCha8Rng) -> Metadata {
    Metadata {
        seed: rng.random(),
        epochs: rng.random(),
        final_loss: f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff),
        scalars: (0..rng.random_range(0..4)).map(|i| (format!("s{i}"), rng.random_range(-1e9..1e9))).collect(),
        vectors: (0..rng.random_range(0..3))
            .map(|i| (format!("v{i}"), (0..rng.random_range(0..50)).map(|_| rng.random_range(-5.0..5.0)).collect()))
            .collect(),
    }
}

fn random_log(rng: &mut ChaCha8Rng) -> SensorLog {
    let mut log = SensorLog::default();
    let mut t = rng.random_range(-10.0..10.0);
    for _ in 0..rng.random_range(0..30) {
        t += rng.random_range(1e-6..1.0);
        let mut q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
        q.iter_mut().for_each(|v| *v /= n);
        if q.iter().all(|v| *v == 0.0) {
            q[0] = 1.0;
        }
        let g = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
        let a = std::array::from_fn(|_| rng.random_range(-100.0..100.0));
        log.data.push(ImuDataSample::new(t, q, g, a).unwrap());
    }
    let mut t = rng.random_range(-10.0..10.0);
    for _ in 0..rng.random_range(0..30) {
        t += rng.random_range(1e-6..1.0);
        log.mag.push(ImuMagSample::new(t, std::array::from_fn(|_| rng.random_range(-1e6..1e6))).unwrap());
    }
    let mut t = rng.random_range(-10.0..10.0);
    for i in 0..rng.random_range(0..10) {
        t += rng.random_range(1e-6..1.0);
        log.frames.push(FrameRef {
            timestamp: t,
            path: PathBuf::from(format!("frames/{i}_{}.png", rng.random::<u16>())),
        });
    }
    log
}

fn roundtrips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checkpoint_failures = 0;
    for case in 0..ROUNDTRIP_CASES {
        let networks = (0..rng.random_range(1..=3))
            .map(|i| (format!("net{i}"), reference::random_config(case as u64 * 7 + i, 500).0))
            .collect::<Vec<(String, Network)>>();
        let c = Checkpoint {
            kind: format!("kind-{case}"),
            networks,
            metadata: random_metadata(&mut rng),
        };
        let bytes = c.to_bytes();
        match Checkpoint::from_bytes(&bytes) {
            Ok(back) if back == c && back.to_bytes() == bytes => {}
            _ => checkpoint_failures += 1,
        }
    }
    let mut log_failures = 0;
    let path = Path::new("roundtrip.log");
    for _ in 0..ROUNDTRIP_CASES {
        let log = random_log(&mut rng);
        match harness::parse_log(&log.to_text(), path) {
            Ok(back) if back == log => {}
            _ => log_failures += 1,
        }
    }
    outcome(
        checkpoint_failures == 0 && log_failures == 0,
        format!(
            "{ROUNDTRIP_CASES} random checkpoints ({checkpoint_failures} lossy), {ROUNDTRIP_CASES} random sensor logs ({log_failures} lossy)"
        ),
    )
}

// ----------------------------------------------------------------

fn report(results: &mut Vec<bool>, number: usize, name: &str, o: Outcome) {
    println!("{} {number} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    results.push(o.pass);
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    report(&mut results, 1, "gradient correctness", gradients());
    report(&mut results, 2, "fusion arithmetic", fusion_grid());

    let corpus = datagen::procedural_corpus(CORPUS_IMAGES, SCENE_SIZE, SceneStyle::Objects, 11);
    let t = Instant::now();
    let (o, pretrained) = angle_regression(&corpus);
    let pretrain_time = t.elapsed();
    report(&mut results, 3, "angle regression", o);

    let scene = datagen::procedural_corpus(1, SCENE_SIZE, SceneStyle::Aerial, SCENE_SEED).remove(0);
    let train = make_run(TRAIN_RUN_SEED, 0.0, &scene);
    let test = make_run(TEST_RUN_SEED, 0.3, &scene);
    let t = Instant::now();
    let (o, imu_model) = imu_separation(&train, &test);
    let imu_time = t.elapsed();
    report(&mut results, 4, "IMU autoencoders", o);

    report(
        &mut results,
        5,
        "end-to-end benchmark",
        end_to_end(&pretrained, &imu_model, &train, &test, pretrain_time, imu_time),
    );
    report(&mut results, 6, "PCA diagnostic", pca_separation(&test));
    report(&mut results, 7, "determinism", determinism(&scene, &train, &corpus));
    report(&mut results, 8, "roundtrips", roundtrips());

    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
