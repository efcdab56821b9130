//! Weighted combination of the three per-modality degrees of abnormality.

use crate::error::{Error, Result};
use crate::label::Label;

/// Nonnegative multipliers for the IMU data, IMU mag and image degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub data: f64,
    pub mag: f64,
    pub angle: f64,
}

impl FusionWeights {
    pub const DEFAULT: FusionWeights = FusionWeights {
        data: 1.0,
        mag: 0.9,
        angle: 0.75,
    };

    pub fn new(data: f64, mag: f64, angle: f64) -> Result<Self> {
        let w = Self { data, mag, angle };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.data, self.mag, self.angle];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!("fusion weights must be finite and nonnegative, got {all:?}")));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidInput("at least one fusion weight must be positive".into()));
        }
        Ok(())
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub weights: FusionWeights,
    /// A combined degree at or above this value is abnormal.
    pub threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            weights: FusionWeights::DEFAULT,
            threshold: 1.0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidInput(format!("fusion threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyScore {
    pub timestamp: f64,
    pub sigma_data: f64,
    pub sigma_mag: f64,
    pub sigma_angle: f64,
    /// Combined degree of abnormality.
    pub combined: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Data,
    Mag,
    Angle,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Data => "imu_data",
            Modality::Mag => "imu_mag",
            Modality::Angle => "image",
        }
    }
}

/// Degrees available at one timestamp; `None` marks a missing modality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeTriple {
    pub timestamp: f64,
    pub sigma_data: Option<f64>,
    pub sigma_mag: Option<f64>,
    pub sigma_angle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unscorable {
    pub timestamp: f64,
    pub missing: Vec<Modality>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusedStream {
    pub scores: Vec<AnomalyScore>,
    pub unscorable: Vec<Unscorable>,
}

fn check_degree(modality: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0) || v.is_infinite() {
        return Err(Error::NegativeDegree {
            modality,
            value: v as f32,
        });
    }
    Ok(())
}

/// Relative slack in the threshold comparison, so that sums which equal the
/// threshold in exact arithmetic are not lost to rounding.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Combined degree and its label.
pub fn fuse(sigma_data: f64, sigma_mag: f64, sigma_angle: f64, config: &FusionConfig) -> Result<(f64, Label)> {
    config.validate()?;
    check_degree("imu_data", sigma_data)?;
    check_degree("imu_mag", sigma_mag)?;
    check_degree("image", sigma_angle)?;
    let w = config.weights;
    let combined = w.data * sigma_data + w.mag * sigma_mag + w.angle * sigma_angle;
    let label = if combined >= config.threshold * (1.0 - BOUNDARY_SLACK) {
        Label::Abnormal
    } else {
        Label::Normal
    };
    Ok((combined, label))
}

/// Fuses each complete triple in order. Triples missing any degree are
/// reported as unscorable rather than dropped.
pub fn fuse_stream(triples: &[DegreeTriple], config: &FusionConfig) -> Result<FusedStream> {
    config.validate()?;
    if let Some(w) = triples.windows(2).find(|w| !(w[0].timestamp < w[1].timestamp)) {
        return Err(Error::InvalidInput(format!(
            "degree triples must be time-ordered: {} then {}",
            w[0].timestamp, w[1].timestamp
        )));
    }
    let mut out = FusedStream::default();
    for t in triples {
        match (t.sigma_data, t.sigma_mag, t.sigma_angle) {
            (Some(d), Some(m), Some(a)) => {
                let (combined, label) = fuse(d, m, a, config)?;
                out.scores.push(AnomalyScore {
                    timestamp: t.timestamp,
                    sigma_data: d,
                    sigma_mag: m,
                    sigma_angle: a,
                    combined,
                    label,
                });
            }
            (d, m, a) => {
                let missing = [(d, Modality::Data), (m, Modality::Mag), (a, Modality::Angle)]
                    .into_iter()
                    .filter(|(v, _)| v.is_none())
                    .map(|(_, k)| k)
                    .collect();
                out.unscorable.push(Unscorable {
                    timestamp: t.timestamp,
                    missing,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_fuse(d: f64, m: f64, a: f64) -> (f64, Label) {
        fuse(d, m, a, &FusionConfig::default()).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(default_fuse(0.0, 0.0, 0.0), (0.0, Label::Normal));
        assert_eq!(default_fuse(1.0, 0.0, 0.0), (1.0, Label::Abnormal));
        let (n, l) = default_fuse(0.5, 0.5, 0.5);
        assert!((n - 1.325).abs() < 1e-12);
        assert_eq!(l, Label::Abnormal);
        let (n, l) = default_fuse(0.2, 0.1, 0.9);
        assert!((n - 0.965).abs() < 1e-12);
        assert_eq!(l, Label::Normal);
    }

    #[test]
    fn negative_or_nan_degree_rejected() {
        assert!(matches!(
            fuse(-0.1, 0.0, 0.0, &FusionConfig::default()),
            Err(Error::NegativeDegree { modality: "imu_data", .. })
        ));
        assert!(fuse(0.0, f64::NAN, 0.0, &FusionConfig::default()).is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(FusionWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(FusionWeights::new(-1.0, 1.0, 1.0).is_err());
        let bad = FusionConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(fuse(0.1, 0.1, 0.1, &bad).is_err());
    }

    #[test]
    fn stream_reports_missing_modalities() {
        let cfg = FusionConfig::default();
        assert_eq!(fuse_stream(&[], &cfg).unwrap(), FusedStream::default());
        let triples = [
            DegreeTriple { timestamp: 0.0, sigma_data: Some(0.2), sigma_mag: Some(0.1), sigma_angle: Some(0.9) },
            DegreeTriple { timestamp: 0.1, sigma_data: Some(0.2), sigma_mag: None, sigma_angle: Some(0.9) },
            DegreeTriple { timestamp: 0.2, sigma_data: Some(2.0), sigma_mag: Some(0.1), sigma_angle: Some(0.0) },
        ];
        let out = fuse_stream(&triples, &cfg).unwrap();
        assert_eq!(out.scores.len(), 2);
        assert_eq!(out.scores[0].label, Label::Normal);
        assert_eq!(out.scores[1].label, Label::Abnormal);
        assert_eq!(out.unscorable, vec![Unscorable { timestamp: 0.1, missing: vec![Modality::Mag] }]);
    }

    #[test]
    fn stream_must_be_time_ordered() {
        let t = |ts| DegreeTriple { timestamp: ts, sigma_data: Some(0.0), sigma_mag: Some(0.0), sigma_angle: Some(0.0) };
        assert!(fuse_stream(&[t(1.0), t(0.5)], &FusionConfig::default()).is_err());
    }

    fn degree() -> impl Strategy<Value = f64> {
        0.0f64..3.0
    }

    proptest! {
        #[test]
        fn monotone_in_each_degree(d in degree(), m in degree(), a in degree(), bump in 0.0f64..2.0, which in 0usize..3) {
            let (n0, l0) = default_fuse(d, m, a);
            let mut v = [d, m, a];
            v[which] += bump;
            let (n1, l1) = default_fuse(v[0], v[1], v[2]);
            prop_assert!(n1 >= n0);
            prop_assert!(!(l0.is_abnormal() && !l1.is_abnormal()));
        }

        #[test]
        fn data_only_weights_threshold_sigma_data(d in degree()) {
            let cfg = FusionConfig { weights: FusionWeights::new(1.0, 0.0, 0.0).unwrap(), threshold: 1.0 };
            let (n, l) = fuse(d, 2.0, 2.0, &cfg).unwrap();
            prop_assert_eq!(n, d);
            prop_assert_eq!(l.is_abnormal(), d >= 1.0);
        }

        #[test]
        fn linear_in_degrees(d in degree(), m in degree(), a in degree(), k in 0.0f64..4.0) {
            let (n, _) = default_fuse(d, m, a);
            let (nk, _) = default_fuse(k * d, k * m, k * a);
            prop_assert!((nk - k * n).abs() <= 1e-12 * (1.0 + nk.abs()));
        }

        #[test]
        fn scaling_weights_and_threshold_keeps_labels(
            d in degree(), m in degree(), a in degree(), c in 0.01f64..100.0,
            wd in 0.0f64..2.0, wm in 0.0f64..2.0, wa in 0.1f64..2.0,
        ) {
            let base = FusionConfig { weights: FusionWeights::new(wd, wm, wa).unwrap(), threshold: 1.0 };
            let scaled = FusionConfig { weights: FusionWeights::new(c * wd, c * wm, c * wa).unwrap(), threshold: c };
            prop_assert_eq!(fuse(d, m, a, &base).unwrap().1, fuse(d, m, a, &scaled).unwrap().1);
        }
    }
}
