//! Procedural grayscale scenes with oriented structure (bars, roads,
//! elongated blobs, gratings). They stand in for photographic corpora so the
//! rotation regressor can be trained and tested without external downloads.

use std::f32::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::raster::GrayImage;

/// Scene family. `Objects` is the pretraining domain; `Aerial` imitates a
/// downward-looking drone camera and is used as the deployment domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneStyle {
    Objects,
    Aerial,
}

#[derive(Debug, Clone, Copy)]
enum Primitive {
    /// Soft-edged segment from `a` to `b`.
    Bar { ax: f32, ay: f32, bx: f32, by: f32, half_width: f32, amp: f32 },
    /// Anisotropic gaussian.
    Blob { cx: f32, cy: f32, cos: f32, sin: f32, sx: f32, sy: f32, amp: f32 },
    /// Rotated rectangle with soft edges.
    Patch { cx: f32, cy: f32, cos: f32, sin: f32, hx: f32, hy: f32, amp: f32 },
    Grating { kx: f32, ky: f32, phase: f32, amp: f32 },
    Ramp { gx: f32, gy: f32 },
}

fn smooth_edge(d: f32) -> f32 {
    // 1 inside, 0 outside, ~1px transition (coordinates are in pixels)
    (0.5 - d).clamp(0.0, 1.0)
}

impl Primitive {
    fn eval(&self, x: f32, y: f32) -> f32 {
        match *self {
            Primitive::Bar { ax, ay, bx, by, half_width, amp } => {
                let (dx, dy) = (bx - ax, by - ay);
                let len2 = dx * dx + dy * dy;
                let t = (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0);
                let (px, py) = (ax + t * dx - x, ay + t * dy - y);
                let d = (px * px + py * py).sqrt();
                amp * smooth_edge(d - half_width)
            }
            Primitive::Blob { cx, cy, cos, sin, sx, sy, amp } => {
                let (u, v) = (x - cx, y - cy);
                let a = (u * cos + v * sin) / sx;
                let b = (-u * sin + v * cos) / sy;
                amp * (-0.5 * (a * a + b * b)).exp()
            }
            Primitive::Patch { cx, cy, cos, sin, hx, hy, amp } => {
                let (u, v) = (x - cx, y - cy);
                let a = (u * cos + v * sin).abs() - hx;
                let b = (-u * sin + v * cos).abs() - hy;
                amp * smooth_edge(a.max(b))
            }
            Primitive::Grating { kx, ky, phase, amp } => amp * (kx * x + ky * y + phase).sin(),
            Primitive::Ramp { gx, gy } => gx * x + gy * y,
        }
    }
}

fn angle<R: Rng>(rng: &mut R) -> (f32, f32) {
    let a: f32 = rng.random_range(0.0..std::f32::consts::PI);
    (a.cos(), a.sin())
}

fn signed<R: Rng>(rng: &mut R, lo: f32, hi: f32) -> f32 {
    let v = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

fn primitives<R: Rng>(style: SceneStyle, n: f32, rng: &mut R) -> Vec<Primitive> {
    let mut out = Vec::new();
    let half = n / 2.0;
    let (gc, gs) = angle(rng);
    let g = rng.random_range(0.1..0.35) / n;
    out.push(Primitive::Ramp { gx: g * gc, gy: g * gs });
    let (kc, ks) = angle(rng);
    let k = rng.random_range(0.15..0.6);
    out.push(Primitive::Grating {
        kx: k * kc,
        ky: k * ks,
        phase: rng.random_range(0.0..TAU),
        amp: rng.random_range(0.02..0.08),
    });
    let (bars, blobs, patches) = match style {
        SceneStyle::Objects => (rng.random_range(2..=4), rng.random_range(2..=4), rng.random_range(0..=1)),
        SceneStyle::Aerial => (rng.random_range(1..=3), rng.random_range(0..=2), rng.random_range(2..=4)),
    };
    for _ in 0..patches {
        let (c, s) = angle(rng);
        out.push(Primitive::Patch {
            cx: rng.random_range(-0.6..0.6) * half,
            cy: rng.random_range(-0.6..0.6) * half,
            cos: c,
            sin: s,
            hx: rng.random_range(0.15..0.5) * half,
            hy: rng.random_range(0.05..0.25) * half,
            amp: signed(rng, 0.12, 0.3),
        });
    }
    for _ in 0..blobs {
        let (c, s) = angle(rng);
        out.push(Primitive::Blob {
            cx: rng.random_range(-0.7..0.7) * half,
            cy: rng.random_range(-0.7..0.7) * half,
            cos: c,
            sin: s,
            sx: rng.random_range(0.12..0.35) * half,
            sy: rng.random_range(0.04..0.12) * half,
            amp: signed(rng, 0.15, 0.4),
        });
    }
    for _ in 0..bars {
        let (c, s) = angle(rng);
        let (cx, cy) = (rng.random_range(-0.5..0.5) * half, rng.random_range(-0.5..0.5) * half);
        let len = match style {
            SceneStyle::Objects => rng.random_range(0.4..1.2) * half,
            SceneStyle::Aerial => rng.random_range(1.2..2.5) * half,
        };
        out.push(Primitive::Bar {
            ax: cx - c * len / 2.0,
            ay: cy - s * len / 2.0,
            bx: cx + c * len / 2.0,
            by: cy + s * len / 2.0,
            half_width: rng.random_range(0.012..0.04) * n,
            amp: signed(rng, 0.2, 0.45),
        });
    }
    out
}

/// Renders one `size`×`size` scene, values clamped to `[0, 1]`.
pub fn procedural_scene<R: Rng>(size: usize, style: SceneStyle, rng: &mut R) -> GrayImage {
    let n = size as f32;
    let prims = primitives(style, n, rng);
    let base = rng.random_range(0.35..0.65);
    let center = (n - 1.0) / 2.0;
    GrayImage::from_fn(size, size, |x, y| {
        let (px, py) = (x as f32 - center, y as f32 - center);
        let v: f32 = prims.iter().map(|p| p.eval(px, py)).sum();
        (base + v).clamp(0.0, 1.0)
    })
}

/// Deterministic corpus of `count` scenes.
pub fn procedural_corpus(count: usize, size: usize, style: SceneStyle, seed: u64) -> Vec<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| procedural_scene(size, style, &mut rng)).collect()
}
