use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::angle::{preprocess, FrameSample};
use crate::datagen::rotate::rotate_image;
use crate::error::{Error, Result};
use crate::imu::{ImuDataSample, ImuMagSample};
use crate::label::Label;
use crate::raster::GrayImage;

/// Seconds between consecutive synthetic timestamps.
pub const TIMESTEP: f64 = 0.1;
/// Heading turn rate in rad/s; runs of 63 s or more see every heading.
pub const YAW_RATE: f64 = 0.1;
/// Normal camera frames wobble uniformly within this many degrees.
pub const FRAME_JITTER_DEGREES: f32 = 3.0;

const GRAVITY: f64 = 9.81;
/// World-frame magnetic field in raw sensor units.
const EARTH_FIELD: [f64; 3] = [250_000.0, 0.0, -300_000.0];
const GYRO_NOISE: f64 = 0.01;
const ACCEL_NOISE: f64 = 0.05;
const MAG_NOISE: f64 = 2_000.0;
/// Amplitude of the slow roll and pitch wander of a hovering craft, radians.
const WANDER: f64 = 0.05;

/// Fault magnitudes injected at abnormal timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultMenu {
    /// Roll added to the attitude, drawn uniformly from this range (degrees).
    pub tilt_degrees: (f32, f32),
    /// Bias added along a random direction to angular velocity (rad/s) and
    /// linear acceleration (m/s²).
    pub imu_bias: f64,
    /// Spike added along a random direction to the magnetometer, raw units.
    pub mag_spike: f64,
}

impl Default for FaultMenu {
    fn default() -> Self {
        Self {
            tilt_degrees: (30.0, 90.0),
            imu_bias: 1.0,
            mag_spike: 150_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRunSpec {
    pub seed: u64,
    /// Number of timestamps.
    pub duration: usize,
    pub abnormal_fraction: f64,
    pub faults: FaultMenu,
}

impl SyntheticRunSpec {
    pub fn new(seed: u64, duration: usize, abnormal_fraction: f64) -> Self {
        Self {
            seed,
            duration,
            abnormal_fraction,
            faults: FaultMenu::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration < 1 {
            return Err(Error::InvalidInput("duration must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.abnormal_fraction) {
            return Err(Error::InvalidInput(format!("abnormal fraction {} is outside [0, 1)", self.abnormal_fraction)));
        }
        let (lo, hi) = self.faults.tilt_degrees;
        if !(0.0 <= lo && lo <= hi && hi <= 90.0) {
            return Err(Error::InvalidInput(format!("tilt range [{lo}, {hi}] must lie within [0, 90]")));
        }
        if !(self.faults.imu_bias >= 0.0 && self.faults.mag_spike >= 0.0) {
            return Err(Error::InvalidInput("fault magnitudes must be nonnegative".into()));
        }
        Ok(())
    }

    /// Exact number of abnormal timestamps the generator emits.
    pub fn abnormal_count(&self) -> usize {
        (self.abnormal_fraction * self.duration as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledTimestamp {
    pub timestamp: f64,
    pub label: Label,
    /// Injected tilt; 0 for normal timestamps.
    pub tilt_degrees: f32,
}

fn noise3<R: Rng>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    let n = Normal::new(0.0, sigma).expect("finite noise level");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

fn unit3<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = noise3(rng, 1.0);
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn canonical(q: &UnitQuaternion<f64>) -> [f64; 4] {
    let c = q.as_ref().coords; // (x, y, z, w)
    let s = if c[3] < 0.0 { -1.0 } else { 1.0 };
    [s * c[3], s * c[0], s * c[1], s * c[2]]
}

/// Hovering-craft IMU streams with faults injected at an exact number of
/// random timestamps. Both streams share the timestamp grid
/// `0, 0.1, 0.2, ...`. The returned labels are ground truth for evaluation.
pub fn make_imu_stream(spec: &SyntheticRunSpec) -> Result<(Vec<ImuDataSample>, Vec<ImuMagSample>, Vec<LabeledTimestamp>)> {
    spec.validate()?;
    let n = spec.duration;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut abnormal = vec![false; n];
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    for &i in &idx[..spec.abnormal_count()] {
        abnormal[i] = true;
    }

    let yaw0: f64 = rng.random_range(0.0..TAU);
    let (roll_phase, pitch_phase): (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let field = Vector3::from(EARTH_FIELD);
    let gravity = Vector3::new(0.0, 0.0, GRAVITY);
    let yaw_rate = YAW_RATE;
    let (wr, wp) = (0.7, 0.45);

    let mut data = Vec::with_capacity(n);
    let mut mag = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (i, &is_abnormal) in abnormal.iter().enumerate() {
        let t = i as f64 * TIMESTEP;
        let roll = WANDER * (wr * t + roll_phase).sin();
        let pitch = WANDER * (wp * t + pitch_phase).sin();
        let yaw = yaw0 + yaw_rate * t;
        let mut attitude = UnitQuaternion::from_euler_angles(roll, pitch, yaw);
        let mut gyro = Vector3::new(WANDER * wr * (wr * t + roll_phase).cos(), WANDER * wp * (wp * t + pitch_phase).cos(), yaw_rate)
            + noise3(&mut rng, GYRO_NOISE);
        let mut accel_bias = Vector3::zeros();
        let mut mag_spike = Vector3::zeros();
        let mut tilt = 0.0f32;
        if is_abnormal {
            let (lo, hi) = spec.faults.tilt_degrees;
            tilt = if lo < hi { rng.random_range(lo..=hi) } else { lo };
            attitude *= UnitQuaternion::from_euler_angles((tilt as f64).to_radians(), 0.0, 0.0);
            gyro += unit3(&mut rng) * spec.faults.imu_bias;
            accel_bias = unit3(&mut rng) * spec.faults.imu_bias;
            mag_spike = unit3(&mut rng) * spec.faults.mag_spike;
        }
        let inv = attitude.inverse();
        let accel = inv * gravity + accel_bias + noise3(&mut rng, ACCEL_NOISE);
        let body_field = inv * field + mag_spike + noise3(&mut rng, MAG_NOISE);
        data.push(ImuDataSample::new(t, canonical(&attitude), gyro.into(), accel.into())?);
        mag.push(ImuMagSample::new(t, body_field.into())?);
        labels.push(LabeledTimestamp {
            timestamp: t,
            label: if is_abnormal { Label::Abnormal } else { Label::Normal },
            tilt_degrees: tilt,
        });
    }
    Ok((data, mag, labels))
}

/// One camera frame per label: normal timestamps get the base image rotated
/// by a small jitter, abnormal ones the base rotated by the injected tilt.
pub fn make_frame_stream(base: &GrayImage, labels: &[LabeledTimestamp], seed: u64) -> Result<Vec<FrameSample>> {
    if base.width() != base.height() {
        return Err(Error::InvalidInput(format!(
            "frame base image must be square, got {}x{}",
            base.width(),
            base.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels
        .iter()
        .map(|l| {
            let theta = match l.label {
                Label::Normal if l.tilt_degrees != 0.0 => {
                    return Err(Error::InvalidInput(format!(
                        "normal timestamp {} carries tilt {}",
                        l.timestamp, l.tilt_degrees
                    )))
                }
                Label::Normal => rng.random_range(-FRAME_JITTER_DEGREES..=FRAME_JITTER_DEGREES),
                Label::Abnormal if !(0.0..=90.0).contains(&l.tilt_degrees) => {
                    return Err(Error::InvalidInput(format!(
                        "abnormal timestamp {} has tilt {} outside [0, 90]",
                        l.timestamp, l.tilt_degrees
                    )))
                }
                Label::Abnormal => l.tilt_degrees,
            };
            Ok(preprocess(&rotate_image(base, theta)?, l.timestamp))
        })
        .collect()
}
