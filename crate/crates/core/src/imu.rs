//! Reconstruction-error anomaly scores for the two IMU streams.
//!
//! Each stream has its own small autoencoder. Both are trained in one loop
//! on the summed loss, and a sample's degree of abnormality is its
//! reconstruction error divided by the largest error seen on the training
//! set.

use std::path::Path;

use heterodet_nn::{Adam, Checkpoint, LayerSpec, Metadata, Network, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DATA_FEATURES: usize = 10;
pub const MAG_FEATURES: usize = 3;
pub const DATA_FEATURE_NAMES: [&str; DATA_FEATURES] = ["qw", "qx", "qy", "qz", "wx", "wy", "wz", "ax", "ay", "az"];
pub const MAG_FEATURE_NAMES: [&str; MAG_FEATURES] = ["mx", "my", "mz"];
/// Accepted deviation of a quaternion's norm from 1 at ingestion.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;
/// Largest timestamp gap accepted between paired data and mag samples.
pub const PAIRING_TOLERANCE: f64 = 0.05;

const CHECKPOINT_KIND: &str = "imu-anomaly";

/// Orientation, angular velocity (rad/s) and linear acceleration (m/s²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuDataSample {
    pub timestamp: f64,
    /// `[w, x, y, z]`, unit norm with `w >= 0`.
    orientation: [f64; 4],
    pub angular_velocity: [f64; 3],
    pub linear_acceleration: [f64; 3],
}

impl ImuDataSample {
    /// Validates finiteness and the quaternion norm, renormalizes the
    /// quaternion and flips its sign so that `w >= 0`.
    pub fn new(timestamp: f64, orientation: [f64; 4], angular_velocity: [f64; 3], linear_acceleration: [f64; 3]) -> Result<Self> {
        let all = orientation.iter().chain(&angular_velocity).chain(&linear_acceleration);
        if !timestamp.is_finite() || all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite IMU data sample at t={timestamp}")));
        }
        let norm = orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "orientation quaternion norm {norm} at t={timestamp} is outside 1 ± {QUATERNION_NORM_TOLERANCE}"
            )));
        }
        let mut q = orientation;
        // already-normalized input is left bit-identical
        if (norm - 1.0).abs() > 1e-12 {
            q.iter_mut().for_each(|v| *v /= norm);
        }
        if q[0] < 0.0 {
            q.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(Self {
            timestamp,
            orientation: q,
            angular_velocity,
            linear_acceleration,
        })
    }

    pub fn orientation(&self) -> [f64; 4] {
        self.orientation
    }

    pub fn features(&self) -> [f64; DATA_FEATURES] {
        let mut f = [0.0; DATA_FEATURES];
        f[..4].copy_from_slice(&self.orientation);
        f[4..7].copy_from_slice(&self.angular_velocity);
        f[7..].copy_from_slice(&self.linear_acceleration);
        f
    }
}

/// Raw magnetometer reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuMagSample {
    pub timestamp: f64,
    field: [f64; 3],
}

impl ImuMagSample {
    pub fn new(timestamp: f64, field: [f64; 3]) -> Result<Self> {
        if !timestamp.is_finite() || field.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite IMU mag sample at t={timestamp}")));
        }
        Ok(Self { timestamp, field })
    }

    pub fn field(&self) -> [f64; 3] {
        self.field
    }

    pub fn features(&self) -> [f64; MAG_FEATURES] {
        self.field
    }
}

/// Per-feature min-max scaling fitted on training data. Features that were
/// constant during fitting map to 0. Values outside the fitted range are not
/// clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit<const N: usize>(rows: &[[f64; N]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("cannot fit normalization on zero samples".into()));
        }
        let mut min = vec![f64::INFINITY; N];
        let mut max = vec![f64::NEG_INFINITY; N];
        for r in rows {
            for j in 0..N {
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        Ok(Self { min, max })
    }

    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.iter().zip(&max).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidInput("normalization bounds must pair up with min <= max".into()));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn is_constant(&self, feature: usize) -> bool {
        self.max[feature] <= self.min[feature]
    }

    pub fn normalize(&self, features: &[f64]) -> Result<Vec<f32>> {
        if features.len() != self.len() {
            return Err(Error::FeatureCount {
                what: "normalize",
                expected: self.len(),
                actual: features.len(),
            });
        }
        Ok(features
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.is_constant(j) {
                    0.0
                } else {
                    ((v - self.min[j]) / (self.max[j] - self.min[j])) as f32
                }
            })
            .collect())
    }

    /// Inverse of [`normalize`](Self::normalize) on non-constant features;
    /// constant features return the fitted value.
    pub fn denormalize(&self, values: &[f32]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::FeatureCount {
                what: "denormalize",
                expected: self.len(),
                actual: values.len(),
            });
        }
        Ok(values
            .iter()
            .enumerate()
            .map(|(j, &v)| self.min[j] + v as f64 * (self.max[j] - self.min[j]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuConfig {
    pub seed: u64,
    pub epochs: u32,
    pub learning_rate: f32,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 40,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuReport {
    /// Mean per-sample `L1 + L2` before the first update.
    pub initial_loss: f32,
    /// Mean per-sample `L1 + L2` after the last epoch.
    pub final_loss: f32,
    pub l_max_data: f32,
    pub l_max_mag: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuAnomalyModel {
    data_net: Network,
    mag_net: Network,
    data_stats: NormalizationStats,
    mag_stats: NormalizationStats,
    l_max_data: f32,
    l_max_mag: f32,
    seed: u64,
    epochs: u32,
    final_loss: f32,
}

fn data_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(8),
        LayerSpec::tanh(),
        LayerSpec::dense(4),
        LayerSpec::tanh(),
        LayerSpec::dense(8),
        LayerSpec::tanh(),
        LayerSpec::dense(DATA_FEATURES),
    ]
}

fn mag_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(8),
        LayerSpec::tanh(),
        LayerSpec::dense(2),
        LayerSpec::tanh(),
        LayerSpec::dense(8),
        LayerSpec::tanh(),
        LayerSpec::dense(MAG_FEATURES),
    ]
}

/// Per-row mean squared reconstruction error of a `[n, features]` batch.
fn reconstruction_errors(net: &Network, rows: &[Vec<f32>]) -> Result<Vec<f32>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let width = rows[0].len();
    let input = Tensor::new(vec![rows.len(), width], rows.concat())?;
    let out = net.forward_batch(&input)?;
    Ok(rows
        .iter()
        .zip(out.data().chunks(width))
        .map(|(x, y)| heterodet_nn::mse(x, y))
        .collect())
}

fn check_pairing(data: &[ImuDataSample], mag: &[ImuMagSample]) -> Result<()> {
    let mut offenders: Vec<(f64, f64)> = data
        .iter()
        .zip(mag)
        .filter(|(d, m)| (d.timestamp - m.timestamp).abs() > PAIRING_TOLERANCE)
        .map(|(d, m)| (d.timestamp, m.timestamp))
        .collect();
    let n = data.len().min(mag.len());
    offenders.extend(data[n..].iter().map(|d| (d.timestamp, f64::NAN)));
    offenders.extend(mag[n..].iter().map(|m| (f64::NAN, m.timestamp)));
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(Error::Unpaired(offenders))
    }
}

impl ImuAnomalyModel {
    /// Untrained model; scoring is rejected until it is trained.
    pub fn init(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            data_net: Network::new(&[DATA_FEATURES], &data_specs(), &mut rng)?,
            mag_net: Network::new(&[MAG_FEATURES], &mag_specs(), &mut rng)?,
            data_stats: NormalizationStats::from_bounds(vec![0.0; DATA_FEATURES], vec![0.0; DATA_FEATURES])?,
            mag_stats: NormalizationStats::from_bounds(vec![0.0; MAG_FEATURES], vec![0.0; MAG_FEATURES])?,
            l_max_data: 0.0,
            l_max_mag: 0.0,
            seed,
            epochs: 0,
            final_loss: f32::NAN,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.l_max_data > 0.0 && self.l_max_mag > 0.0
    }

    pub fn l_max_data(&self) -> f32 {
        self.l_max_data
    }

    pub fn l_max_mag(&self) -> f32 {
        self.l_max_mag
    }

    pub fn data_stats(&self) -> &NormalizationStats {
        &self.data_stats
    }

    pub fn mag_stats(&self) -> &NormalizationStats {
        &self.mag_stats
    }

    pub fn data_net(&self) -> &Network {
        &self.data_net
    }

    pub fn mag_net(&self) -> &Network {
        &self.mag_net
    }

    fn require_trained(&self) -> Result<()> {
        if !self.is_trained() {
            return Err(Error::Untrained("IMU autoencoders have not been trained"));
        }
        Ok(())
    }

    fn data_rows(&self, data: &[ImuDataSample]) -> Result<Vec<Vec<f32>>> {
        data.iter().map(|s| self.data_stats.normalize(&s.features())).collect()
    }

    fn mag_rows(&self, mag: &[ImuMagSample]) -> Result<Vec<Vec<f32>>> {
        mag.iter().map(|s| self.mag_stats.normalize(&s.features())).collect()
    }

    /// Mean squared reconstruction error of each normalized data sample.
    pub fn data_errors(&self, data: &[ImuDataSample]) -> Result<Vec<f32>> {
        reconstruction_errors(&self.data_net, &self.data_rows(data)?)
    }

    pub fn mag_errors(&self, mag: &[ImuMagSample]) -> Result<Vec<f32>> {
        reconstruction_errors(&self.mag_net, &self.mag_rows(mag)?)
    }

    /// `σ_d = L1 / L_max_data` for each sample; may exceed 1.
    pub fn score_data(&self, data: &[ImuDataSample]) -> Result<Vec<f32>> {
        self.require_trained()?;
        Ok(self.data_errors(data)?.into_iter().map(|e| e / self.l_max_data).collect())
    }

    /// `σ_m = L2 / L_max_mag` for each sample; may exceed 1.
    pub fn score_mag(&self, mag: &[ImuMagSample]) -> Result<Vec<f32>> {
        self.require_trained()?;
        Ok(self.mag_errors(mag)?.into_iter().map(|e| e / self.l_max_mag).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut scalars = vec![
            ("l_max_data".to_string(), self.l_max_data as f64),
            ("l_max_mag".to_string(), self.l_max_mag as f64),
        ];
        for (prefix, stats) in [("data", &self.data_stats), ("mag", &self.mag_stats)] {
            for j in 0..stats.len() {
                scalars.push((format!("{prefix}_min_{j}"), stats.min[j]));
                scalars.push((format!("{prefix}_max_{j}"), stats.max[j]));
            }
        }
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            networks: vec![("data".into(), self.data_net.clone()), ("mag".into(), self.mag_net.clone())],
            metadata: Metadata {
                seed: self.seed,
                epochs: self.epochs,
                final_loss: self.final_loss,
                scalars,
                vectors: Vec::new(),
            },
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != CHECKPOINT_KIND {
            return Err(Error::WrongModelKind {
                expected: CHECKPOINT_KIND,
                found: c.kind.clone(),
            });
        }
        let m = &c.metadata;
        let net = |name: &str, specs: Vec<LayerSpec>, width: usize| -> Result<Network> {
            let n = c
                .network(name)
                .ok_or_else(|| Error::InvalidInput(format!("IMU checkpoint lacks `{name}` network")))?;
            if n.specs() != specs.as_slice() || n.input_shape() != [width] {
                return Err(Error::InvalidInput(format!("IMU checkpoint `{name}` network has the wrong architecture")));
            }
            Ok(n.clone())
        };
        let scalar = |name: &str| {
            m.scalar(name)
                .ok_or_else(|| Error::InvalidInput(format!("IMU checkpoint lacks `{name}`")))
        };
        let stats = |prefix: &str, width: usize| -> Result<NormalizationStats> {
            let mut min = Vec::with_capacity(width);
            let mut max = Vec::with_capacity(width);
            for j in 0..width {
                min.push(scalar(&format!("{prefix}_min_{j}"))?);
                max.push(scalar(&format!("{prefix}_max_{j}"))?);
            }
            NormalizationStats::from_bounds(min, max)
        };
        let model = Self {
            data_net: net("data", data_specs(), DATA_FEATURES)?,
            mag_net: net("mag", mag_specs(), MAG_FEATURES)?,
            data_stats: stats("data", DATA_FEATURES)?,
            mag_stats: stats("mag", MAG_FEATURES)?,
            l_max_data: scalar("l_max_data")? as f32,
            l_max_mag: scalar("l_max_mag")? as f32,
            seed: m.seed,
            epochs: m.epochs,
            final_loss: m.final_loss,
        };
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Fits normalization on the training samples, then trains both
/// autoencoders with one optimizer step per paired sample on `L1 + L2`.
/// `data[i]` and `mag[i]` must share a timestamp (within
/// [`PAIRING_TOLERANCE`]).
pub fn train_joint(data: &[ImuDataSample], mag: &[ImuMagSample], config: &ImuConfig) -> Result<(ImuAnomalyModel, ImuReport)> {
    if data.is_empty() || mag.is_empty() {
        return Err(Error::InvalidInput("IMU training needs at least one data and one mag sample".into()));
    }
    check_pairing(data, mag)?;
    let mut model = ImuAnomalyModel::init(config.seed)?;
    model.data_stats = NormalizationStats::fit(&data.iter().map(ImuDataSample::features).collect::<Vec<_>>())?;
    model.mag_stats = NormalizationStats::fit(&mag.iter().map(ImuMagSample::features).collect::<Vec<_>>())?;
    let xd = model.data_rows(data)?;
    let xm = model.mag_rows(mag)?;
    let td: Vec<Tensor> = xd.iter().map(|r| Tensor::from_vec(r.clone())).collect();
    let tm: Vec<Tensor> = xm.iter().map(|r| Tensor::from_vec(r.clone())).collect();

    let mean_loss = |model: &ImuAnomalyModel| -> Result<f32> {
        let ld = reconstruction_errors(&model.data_net, &xd)?;
        let lm = reconstruction_errors(&model.mag_net, &xm)?;
        Ok((ld.iter().zip(&lm).map(|(a, b)| (a + b) as f64).sum::<f64>() / ld.len() as f64) as f32)
    };
    let initial_loss = mean_loss(&model)?;

    let mut opt_data = Adam::new(config.learning_rate)?;
    let mut opt_mag = Adam::new(config.learning_rate)?;
    let mut order: Vec<usize> = (0..td.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x1a0_5eed);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            // the summed loss splits into independent gradients for the two
            // disjoint parameter sets
            heterodet_nn::train_step(&mut model.data_net, &[(td[i].clone(), td[i].clone())], &mut opt_data)?;
            heterodet_nn::train_step(&mut model.mag_net, &[(tm[i].clone(), tm[i].clone())], &mut opt_mag)?;
        }
    }
    let final_loss = mean_loss(&model)?;
    let max = |v: Vec<f32>| v.into_iter().fold(0.0f32, f32::max).max(f32::MIN_POSITIVE);
    model.l_max_data = max(reconstruction_errors(&model.data_net, &xd)?);
    model.l_max_mag = max(reconstruction_errors(&model.mag_net, &xm)?);
    model.epochs = config.epochs;
    model.final_loss = final_loss;
    let report = ImuReport {
        initial_loss,
        final_loss,
        l_max_data: model.l_max_data,
        l_max_mag: model.l_max_mag,
    };
    Ok((model, report))
}
