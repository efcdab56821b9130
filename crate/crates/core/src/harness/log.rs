//! Line-oriented sensor log.
//!
//! One record per line, comma separated, first field is the stream tag:
//!
//! ```text
//! imu_data,<t>,<qw>,<qx>,<qy>,<qz>,<wx>,<wy>,<wz>,<ax>,<ay>,<az>
//! imu_mag,<t>,<mx>,<my>,<mz>
//! frame,<t>,<image path relative to the log file>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Timestamps must be
//! strictly increasing within each stream; streams may interleave freely.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imu::{ImuDataSample, ImuMagSample};

pub const LOG_HEADER: &str = "# heterodet sensor log v1";

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRef {
    pub timestamp: f64,
    /// As written in the log; relative paths resolve against the log's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorLog {
    pub data: Vec<ImuDataSample>,
    pub mag: Vec<ImuMagSample>,
    pub frames: Vec<FrameRef>,
}

impl SensorLog {
    /// Record counts as (data, mag, frames).
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.data.len(), self.mag.len(), self.frames.len())
    }

    pub fn is_empty(&self) -> bool {
        self.counts() == (0, 0, 0)
    }

    /// Text form: all data records, then mag, then frames.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(LOG_HEADER);
        s.push('\n');
        for d in &self.data {
            let q = d.orientation();
            let (w, a) = (d.angular_velocity, d.linear_acceleration);
            let _ = writeln!(
                s,
                "imu_data,{},{},{},{},{},{},{},{},{},{},{}",
                d.timestamp, q[0], q[1], q[2], q[3], w[0], w[1], w[2], a[0], a[1], a[2]
            );
        }
        for m in &self.mag {
            let f = m.field();
            let _ = writeln!(s, "imu_mag,{},{},{},{}", m.timestamp, f[0], f[1], f[2]);
        }
        for f in &self.frames {
            let _ = writeln!(s, "frame,{},{}", f.timestamp, f.path.display());
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

fn numbers<const N: usize>(fields: &[&str], path: &Path, line: usize) -> Result<[f64; N]> {
    if fields.len() != N {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("expected {N} numeric fields, found {}", fields.len()),
        });
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("`{}` is not a number", f.trim()),
        })?;
    }
    Ok(out)
}

struct Monotonic {
    stream: &'static str,
    last: Option<(f64, usize)>,
}

impl Monotonic {
    fn check(&mut self, t: f64, line: usize, path: &Path) -> Result<()> {
        if let Some((prev, prev_line)) = self.last {
            if !(t > prev) {
                return Err(Error::NonMonotonic {
                    path: path.to_path_buf(),
                    stream: self.stream,
                    previous: prev,
                    previous_line: prev_line,
                    current: t,
                    line,
                });
            }
        }
        self.last = Some((t, line));
        Ok(())
    }
}

/// Parses log text; `path` only labels diagnostics.
pub fn parse_log(text: &str, path: &Path) -> Result<SensorLog> {
    let mut log = SensorLog::default();
    let mut order = [
        Monotonic { stream: "imu_data", last: None },
        Monotonic { stream: "imu_mag", last: None },
        Monotonic { stream: "frame", last: None },
    ];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let (tag, rest) = trimmed
            .split_once(',')
            .ok_or_else(|| parse_err(format!("expected `<stream>,<timestamp>,...`, found `{trimmed}`")))?;
        let wrap = |e: Error| match e {
            Error::InvalidInput(reason) => parse_err(reason),
            e => e,
        };
        match tag.trim() {
            "imu_data" => {
                let fields: Vec<&str> = rest.split(',').collect();
                let v: [f64; 11] = numbers(&fields, path, line)?;
                order[0].check(v[0], line, path)?;
                let s = ImuDataSample::new(v[0], [v[1], v[2], v[3], v[4]], [v[5], v[6], v[7]], [v[8], v[9], v[10]]).map_err(wrap)?;
                log.data.push(s);
            }
            "imu_mag" => {
                let fields: Vec<&str> = rest.split(',').collect();
                let v: [f64; 4] = numbers(&fields, path, line)?;
                order[1].check(v[0], line, path)?;
                log.mag.push(ImuMagSample::new(v[0], [v[1], v[2], v[3]]).map_err(wrap)?);
            }
            "frame" => {
                let (t, file) = rest
                    .split_once(',')
                    .ok_or_else(|| parse_err("frame record needs a timestamp and an image path".into()))?;
                let [t] = numbers::<1>(&[t], path, line)?;
                if !t.is_finite() {
                    return Err(parse_err(format!("non-finite frame timestamp {t}")));
                }
                let file = file.trim();
                if file.is_empty() {
                    return Err(parse_err("frame record has an empty image path".into()));
                }
                order[2].check(t, line, path)?;
                log.frames.push(FrameRef {
                    timestamp: t,
                    path: PathBuf::from(file),
                });
            }
            other => return Err(parse_err(format!("unknown stream tag `{other}`"))),
        }
    }
    Ok(log)
}

pub fn load_log(path: impl AsRef<Path>) -> Result<SensorLog> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    parse_log(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SensorLog> {
        parse_log(text, Path::new("run.log"))
    }

    #[test]
    fn empty_text_is_empty_log() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn one_record_per_stream() {
        let log = parse(
            "imu_data,0.5,1,0,0,0,0.1,0.2,0.3,0,0,9.81\nimu_mag,0.5,1000,-2000,300000\nframe,0.52,frames/000001.png\n",
        )
        .unwrap();
        assert_eq!(log.counts(), (1, 1, 1));
        assert_eq!(log.data[0].linear_acceleration, [0.0, 0.0, 9.81]);
        assert_eq!(log.mag[0].field(), [1000.0, -2000.0, 300000.0]);
        assert_eq!(log.frames[0].path, PathBuf::from("frames/000001.png"));
    }

    #[test]
    fn missing_field_cites_line() {
        let err = parse("# header\nimu_mag,0.5,1000,-2000\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        assert!(err_line(parse("imu_data,0,1,0,0,0,0,0,0,0,0,x\n")) == 1);
        assert!(err_line(parse("\nbogus,1,2\n")) == 2);
        assert!(err_line(parse("frame,1\n")) == 1);
        // quaternion far from unit norm
        assert!(err_line(parse("imu_data,0,2,0,0,0,0,0,0,0,0,9.8\n")) == 1);
    }

    fn err_line(r: Result<SensorLog>) -> usize {
        match r {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_monotonic_names_the_pair() {
        let err = parse("imu_mag,1.0,0,0,0\nframe,0.2,a.png\nimu_mag,0.5,0,0,0\n").unwrap_err();
        match &err {
            Error::NonMonotonic { stream, previous, previous_line, current, line, .. } => {
                assert_eq!((*stream, *previous, *previous_line, *current, *line), ("imu_mag", 1.0, 1, 0.5, 3));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(err.to_string().contains("1 (line 1) then 0.5 (line 3)"));
        assert!(matches!(parse("frame,1,a.png\nframe,1,b.png\n"), Err(Error::NonMonotonic { .. })));
    }

    #[test]
    fn text_roundtrip() {
        let log = parse("imu_data,0.1,0.6,0.8,0,0,1e-3,-2,3,4,5,6\nimu_mag,0.1,-399999.5,0,12\nframe,0.1,x/y z.png\n").unwrap();
        assert_eq!(parse(&log.to_text()).unwrap(), log);
    }
}
