use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Exact cosine/sine for quarter turns so 90° multiples permute pixels
/// without interpolation error.
fn cos_sin(theta_degrees: f32) -> (f32, f32) {
    let quarter = theta_degrees / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = (theta_degrees as f64).to_radians();
        (r.cos() as f32, r.sin() as f32)
    }
}

/// Side of the largest centered square fully covered by a square of side
/// `side` rotated by `theta_degrees`, as a fraction of `side`.
pub fn inscribed_scale(theta_degrees: f32) -> f32 {
    let (c, s) = cos_sin(theta_degrees);
    1.0 / (c.abs() + s.abs())
}

/// Rotates a square image about its center by `theta_degrees` (clockwise on
/// screen, so a quarter turn sends pixel `(r, c)` to `(c, H−1−r)`), keeps the
/// largest square free of out-of-frame corners, and resamples it back to the
/// source size. Rotation, crop and resample are folded into one bilinear
/// inverse mapping.
pub fn rotate_image(image: &GrayImage, theta_degrees: f32) -> Result<GrayImage> {
    if image.width() != image.height() {
        return Err(Error::InvalidInput(format!(
            "rotation needs a square image, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    if !theta_degrees.is_finite() || theta_degrees.abs() > 180.0 {
        return Err(Error::InvalidInput(format!("rotation angle {theta_degrees} outside [-180, 180]")));
    }
    let n = image.width();
    let center = (n as f32 - 1.0) / 2.0;
    let (c, s) = cos_sin(theta_degrees);
    let k = 1.0 / (c.abs() + s.abs());
    let out = GrayImage::from_fn(n, n, |col, row| {
        let u = (col as f32 - center) * k;
        let v = (row as f32 - center) * k;
        let x = u * c + v * s + center;
        let y = -u * s + v * c + center;
        image.sample_bilinear(x, y)
    });
    Ok(out)
}
