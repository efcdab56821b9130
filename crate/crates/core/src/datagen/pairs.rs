use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angle::{preprocess, AnglePair, FrameSample};
use crate::datagen::rotate::rotate_image;
use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Upper end of the training label range, in degrees.
pub const MAX_PAIR_ANGLE: f32 = 90.0;

/// Fraction of source images held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct AnglePairSplit {
    pub train: Vec<AnglePair>,
    pub validation: Vec<AnglePair>,
    pub train_sources: Vec<usize>,
    pub validation_sources: Vec<usize>,
}

/// Shuffles source indices and holds out 20% of them (at least one when
/// there are two or more sources).
pub fn split_sources(count: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = (count as f64 * VALIDATION_FRACTION).round() as usize;
    if count >= 2 {
        held = held.clamp(1, count - 1);
    } else {
        held = 0;
    }
    let validation = idx.split_off(count - held);
    (idx, validation)
}

fn square_view(source: &GrayImage) -> GrayImage {
    if source.width() == source.height() {
        source.clone()
    } else {
        source.center_crop_square()
    }
}

/// The square source with a random mirror flip and a random base rotation.
fn augmented_view<R: Rng>(source: &GrayImage, rng: &mut R) -> Result<GrayImage> {
    let mut view = square_view(source);
    if rng.random_bool(0.5) {
        let w = view.width();
        view = GrayImage::from_fn(w, view.height(), |x, y| view.get(w - 1 - x, y));
    }
    rotate_image(&view, rng.random_range(-180.0..180.0))
}

fn rotated_pair<R: Rng>(view: &GrayImage, reference: FrameSample, rng: &mut R) -> Result<AnglePair> {
    let theta = rng.random_range(0.0..=MAX_PAIR_ANGLE);
    Ok(AnglePair {
        reference,
        candidate: preprocess(&rotate_image(view, theta)?, 0.0),
        label: Some(theta),
    })
}

/// One labeled pair: the source itself and its rotation by a uniform angle
/// in `[0, 90]` degrees.
pub fn make_pair<R: Rng>(source: &GrayImage, rng: &mut R) -> Result<AnglePair> {
    let view = square_view(source);
    let reference = preprocess(&view, 0.0);
    rotated_pair(&view, reference, rng)
}

/// Like [`make_pair`], but the source is first given a random mirror flip
/// and a random base rotation, so every draw shows a new view. The pair is
/// still `(view, rotate(view, θ))`.
pub fn make_augmented_pair<R: Rng>(source: &GrayImage, rng: &mut R) -> Result<AnglePair> {
    let view = augmented_view(source, rng)?;
    let reference = preprocess(&view, 0.0);
    rotated_pair(&view, reference, rng)
}

/// `count` pairs drawn with replacement from `sources` (indices into `corpus`).
pub fn sample_pairs<R: Rng>(corpus: &[GrayImage], sources: &[usize], count: usize, rng: &mut R) -> Result<Vec<AnglePair>> {
    sample_pairs_with(corpus, sources, count, false, 1, rng)
}

/// [`sample_pairs`] with optional view augmentation. Each drawn view yields
/// `per_view` consecutive pairs that share its reference frame and differ
/// in the rotation.
pub fn sample_pairs_with<R: Rng>(
    corpus: &[GrayImage],
    sources: &[usize],
    count: usize,
    augment: bool,
    per_view: usize,
    rng: &mut R,
) -> Result<Vec<AnglePair>> {
    if sources.is_empty() {
        return Err(Error::InvalidInput("no source images to draw pairs from".into()));
    }
    if per_view == 0 {
        return Err(Error::InvalidInput("at least one pair per view is required".into()));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let src = &corpus[sources[rng.random_range(0..sources.len())]];
        let view = if augment { augmented_view(src, rng)? } else { square_view(src) };
        let reference = preprocess(&view, 0.0);
        for _ in 0..per_view.min(count - out.len()) {
            out.push(rotated_pair(&view, reference.clone(), rng)?);
        }
    }
    Ok(out)
}

/// Splits `corpus` 80/20 by source image and draws `count` pairs in total,
/// 80% from training sources and 20% from validation sources.
pub fn make_angle_pairs(corpus: &[GrayImage], count: usize, seed: u64) -> Result<AnglePairSplit> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("angle-pair corpus is empty".into()));
    }
    if count == 0 {
        return Err(Error::InvalidInput("pair count must be at least 1".into()));
    }
    let (train_sources, validation_sources) = split_sources(corpus.len(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let n_val = if validation_sources.is_empty() {
        0
    } else {
        ((count as f64 * VALIDATION_FRACTION).round() as usize).min(count.saturating_sub(1))
    };
    let train = sample_pairs(corpus, &train_sources, count - n_val, &mut rng)?;
    let validation = if n_val > 0 {
        sample_pairs(corpus, &validation_sources, n_val, &mut rng)?
    } else {
        Vec::new()
    };
    Ok(AnglePairSplit {
        train,
        validation,
        train_sources,
        validation_sources,
    })
}
