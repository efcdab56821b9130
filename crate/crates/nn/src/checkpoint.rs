//! Versioned little-endian checkpoint container.
//!
//! ```text
//! magic      4 bytes  "HDNN"
//! version    u32      FORMAT_VERSION
//! kind       str      free-form tag naming the model family
//! metadata   seed u64, epochs u32, final_loss f32,
//!            n_scalars u32 × (name str, value f64),
//!            n_vectors u32 × (name str, len u32, len × f32)
//! networks   n u32 × (name str,
//!                     input rank u32, rank × u32,
//!                     n_layers u32 × layer,
//!                     n_params u32 × (rank u32, rank × u32, data f32…))
//! crc32      u32      over every preceding byte
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8. A layer is a tag byte
//! followed by its fields as u32: 0 dense(units), 1 conv2d(filters, kernel,
//! stride), 2 maxpool2d(size, stride), 3 flatten, 4 activation(code u8:
//! 0 relu, 1 tanh, 2 linear).

use std::fs;
use std::path::Path;

use crate::error::{NnError, Result};
use crate::layer::{Activation, LayerSpec};
use crate::network::Network;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"HDNN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub seed: u64,
    pub epochs: u32,
    pub final_loss: f32,
    pub scalars: Vec<(String, f64)>,
    pub vectors: Vec<(String, Vec<f32>)>,
}

impl Metadata {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn vector(&self, name: &str) -> Option<&[f32]> {
        self.vectors.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub networks: Vec<(String, Network)>,
    pub metadata: Metadata,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Option<&Network> {
        self.networks.iter().find(|(k, _)| k == name).map(|(_, n)| n)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(&MAGIC);
        w.u32(FORMAT_VERSION);
        w.str(&self.kind);
        let m = &self.metadata;
        w.u64(m.seed);
        w.u32(m.epochs);
        w.f32(m.final_loss);
        w.len(m.scalars.len());
        for (name, v) in &m.scalars {
            w.str(name);
            w.buf.extend_from_slice(&v.to_le_bytes());
        }
        w.len(m.vectors.len());
        for (name, v) in &m.vectors {
            w.str(name);
            w.len(v.len());
            v.iter().for_each(|x| w.f32(*x));
        }
        w.len(self.networks.len());
        for (name, net) in &self.networks {
            w.str(name);
            w.dims(net.input_shape());
            w.len(net.specs().len());
            for spec in net.specs() {
                w.layer(spec);
            }
            w.len(net.params().len());
            for p in net.params() {
                w.dims(p.shape());
                p.data().iter().for_each(|x| w.f32(*x));
            }
        }
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.corrupt_at(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NnError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 {
            return Err(r.corrupt_at(bytes.len(), "truncated before checksum"));
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[..body_end]) != stored {
            return Err(r.corrupt_at(body_end, "checksum mismatch"));
        }
        r.bytes = &bytes[..body_end];

        let kind = r.str()?;
        let seed = r.u64()?;
        let epochs = r.u32()?;
        let final_loss = r.f32()?;
        let mut scalars = Vec::new();
        for _ in 0..r.count(12)? {
            let name = r.str()?;
            let v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            scalars.push((name, v));
        }
        let mut vectors = Vec::new();
        for _ in 0..r.count(8)? {
            let name = r.str()?;
            let n = r.count(4)?;
            let v = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            vectors.push((name, v));
        }
        let mut networks = Vec::new();
        for _ in 0..r.count(16)? {
            let name = r.str()?;
            let start = r.pos;
            let input_shape = r.dims()?;
            let specs = (0..r.count(1)?).map(|_| r.layer()).collect::<Result<Vec<_>>>()?;
            let mut params = Vec::new();
            for _ in 0..r.count(4)? {
                let shape = r.dims()?;
                let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                let n = match n {
                    Some(n) if n <= r.remaining() / 4 => n,
                    _ => return Err(r.corrupt_at(r.pos, "parameter tensor larger than remaining stream")),
                };
                let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
                params.push(Tensor::new(shape, data)?);
            }
            let net = Network::from_parts(&input_shape, &specs, params).map_err(|e| NnError::Corrupt {
                offset: start,
                reason: format!("network `{name}` is inconsistent: {e}"),
            })?;
            networks.push((name, net));
        }
        if r.remaining() != 0 {
            return Err(r.corrupt_at(r.pos, "trailing bytes after last network"));
        }
        Ok(Self {
            kind,
            networks,
            metadata: Metadata {
                seed,
                epochs,
                final_loss,
                scalars,
                vectors,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("checkpoint sections hold fewer than 2^32 items"));
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn dims(&mut self, dims: &[usize]) {
        self.len(dims.len());
        dims.iter().for_each(|&d| self.len(d));
    }

    fn layer(&mut self, spec: &LayerSpec) {
        match *spec {
            LayerSpec::Dense { units } => {
                self.buf.push(0);
                self.len(units);
            }
            LayerSpec::Conv2d { filters, kernel, stride } => {
                self.buf.push(1);
                self.len(filters);
                self.len(kernel);
                self.len(stride);
            }
            LayerSpec::MaxPool2d { size, stride } => {
                self.buf.push(2);
                self.len(size);
                self.len(stride);
            }
            LayerSpec::Flatten => self.buf.push(3),
            LayerSpec::Activation(a) => {
                self.buf.push(4);
                self.buf.push(match a {
                    Activation::Relu => 0,
                    Activation::Tanh => 1,
                    Activation::Linear => 2,
                });
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt_at(&self, offset: usize, reason: &str) -> NnError {
        NnError::Corrupt {
            offset,
            reason: reason.to_string(),
        }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.corrupt_at(self.pos, &format!("truncated: needed {n} bytes, {} left", self.remaining())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.u32()?))
    }

    /// Element count whose items occupy at least `min_item_bytes` each.
    fn count(&mut self, min_item_bytes: usize) -> Result<usize> {
        let at = self.pos;
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_bytes) > self.remaining() {
            return Err(self.corrupt_at(at, &format!("count {n} exceeds remaining stream")));
        }
        Ok(n)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.count(1)?;
        let at = self.pos;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt_at(at, "invalid UTF-8 in string"))
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let n = self.count(4)?;
        (0..n).map(|_| self.u32().map(|d| d as usize)).collect()
    }

    fn layer(&mut self) -> Result<LayerSpec> {
        let at = self.pos;
        Ok(match self.u8()? {
            0 => LayerSpec::Dense { units: self.u32()? as usize },
            1 => LayerSpec::Conv2d {
                filters: self.u32()? as usize,
                kernel: self.u32()? as usize,
                stride: self.u32()? as usize,
            },
            2 => LayerSpec::MaxPool2d {
                size: self.u32()? as usize,
                stride: self.u32()? as usize,
            },
            3 => LayerSpec::Flatten,
            4 => LayerSpec::Activation(match self.u8()? {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                2 => Activation::Linear,
                code => return Err(self.corrupt_at(at + 1, &format!("unknown activation code {code}"))),
            }),
            tag => return Err(self.corrupt_at(at, &format!("unknown layer tag {tag}"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = Network::new(
            &[1, 8, 8],
            &[LayerSpec::conv2d(2, 3), LayerSpec::relu(), LayerSpec::maxpool(2), LayerSpec::Flatten, LayerSpec::dense(3), LayerSpec::tanh()],
            &mut rng,
        )
        .unwrap();
        let mlp = Network::new(&[4], &[LayerSpec::dense(2), LayerSpec::linear()], &mut rng).unwrap();
        Checkpoint {
            kind: "test".into(),
            networks: vec![("conv".into(), conv), ("mlp".into(), mlp)],
            metadata: Metadata {
                seed: 3,
                epochs: 12,
                final_loss: 0.125,
                scalars: vec![("l_max".into(), 0.5)],
                vectors: vec![("min".into(), vec![-1.0, 2.0])],
            },
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn single_parameter_value_survives() {
        let net = Network::from_parts(&[1], &[LayerSpec::Dense { units: 1 }], vec![
            Tensor::new(vec![1, 1], vec![0.5]).unwrap(),
            Tensor::zeros(&[1]),
        ])
        .unwrap();
        let c = Checkpoint {
            kind: "one".into(),
            networks: vec![("n".into(), net)],
            metadata: Metadata::default(),
        };
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.networks[0].1.params()[0].data()[0], 0.5);
    }

    #[test]
    fn flipped_version_is_a_version_error() {
        let mut bytes = sample().to_bytes();
        bytes[4] ^= 0x02;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, NnError::UnsupportedVersion { found: 3, supported: 1 }), "{err}");
    }

    #[test]
    fn truncation_reports_position() {
        let bytes = sample().to_bytes();
        for cut in [2, 6, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, NnError::Corrupt { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn payload_corruption_detected() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        match err {
            NnError::Corrupt { offset, .. } => assert_eq!(offset, bytes.len() - 4),
            other => panic!("unexpected {other}"),
        }
    }
}
