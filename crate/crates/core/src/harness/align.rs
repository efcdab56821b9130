use crate::error::{Error, Result};
use crate::harness::log::{FrameRef, SensorLog};
use crate::imu::{ImuDataSample, ImuMagSample};

/// Default nearest-neighbour matching window, seconds.
pub const DEFAULT_TOLERANCE: f64 = 0.05;

/// One IMU/data timestamp with its nearest mag sample and frame, if any lies
/// within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRow {
    pub timestamp: f64,
    pub data: ImuDataSample,
    pub mag: Option<ImuMagSample>,
    pub frame: Option<FrameRef>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alignment {
    pub rows: Vec<AlignedRow>,
    /// Data timestamps with no mag sample in range.
    pub missing_mag: Vec<f64>,
    /// Data timestamps with no frame in range.
    pub missing_frame: Vec<f64>,
}

/// Index of the element of the sorted `times` nearest to `t`, if within
/// `tolerance`. Ties go to the earlier element.
pub fn nearest_within(times: &[f64], t: f64, tolerance: f64) -> Option<usize> {
    let i = times.partition_point(|&x| x < t);
    let candidates = [i.checked_sub(1), (i < times.len()).then_some(i)];
    candidates
        .into_iter()
        .flatten()
        .map(|j| (j, (times[j] - t).abs()))
        .filter(|&(_, d)| d <= tolerance)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
}

/// Attaches the nearest mag sample and frame to every data sample. Missing
/// matches are recorded, not fatal.
pub fn align(log: &SensorLog, tolerance: f64) -> Result<Alignment> {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::InvalidInput(format!("alignment tolerance must be positive, got {tolerance}")));
    }
    let mag_t: Vec<f64> = log.mag.iter().map(|m| m.timestamp).collect();
    let frame_t: Vec<f64> = log.frames.iter().map(|f| f.timestamp).collect();
    let mut out = Alignment::default();
    for d in &log.data {
        let mag = nearest_within(&mag_t, d.timestamp, tolerance).map(|j| log.mag[j]);
        let frame = nearest_within(&frame_t, d.timestamp, tolerance).map(|j| log.frames[j].clone());
        if mag.is_none() {
            out.missing_mag.push(d.timestamp);
        }
        if frame.is_none() {
            out.missing_frame.push(d.timestamp);
        }
        out.rows.push(AlignedRow {
            timestamp: d.timestamp,
            data: *d,
            mag,
            frame,
        });
    }
    Ok(out)
}
