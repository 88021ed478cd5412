use rand::Rng;

use super::GrayImage;

/// Parameters drawn for one training-time augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    /// Rotation in degrees, counter-clockwise.
    pub angle: f64,
}

impl AugmentParams {
    /// Always consumes exactly two draws so streams stay aligned.
    pub fn sample(rng: &mut impl Rng, flip_probability: f64, rotation_limit: f64) -> Self {
        let u: f64 = rng.random();
        let r: f64 = rng.random();
        Self {
            flip: u < flip_probability,
            angle: rotation_limit * (2.0 * r - 1.0),
        }
    }
}

/// Random horizontal flip followed by a small random rotation.
pub fn augment(
    img: &GrayImage,
    rng: &mut impl Rng,
    flip_probability: f64,
    rotation_limit: f64,
) -> GrayImage {
    apply_augmentation(img, AugmentParams::sample(rng, flip_probability, rotation_limit))
}

pub fn apply_augmentation(img: &GrayImage, params: AugmentParams) -> GrayImage {
    let flipped;
    let img = if params.flip {
        flipped = flip_horizontal(img);
        &flipped
    } else {
        img
    };
    if params.angle == 0.0 {
        img.clone()
    } else {
        rotate(img, params.angle)
    }
}

pub fn flip_horizontal(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    for row in img.pixels().chunks_exact(w) {
        out.extend(row.iter().rev());
    }
    GrayImage::new(w, h, out).expect("same shape")
}

/// Rotates about the image centre with bilinear sampling; pixels that map
/// outside the source are filled with 0.
pub fn rotate(img: &GrayImage, degrees: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let fetch = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            img.get(x as usize, y as usize) as f64
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse map: rotate the destination point back by -angle
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = fetch(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + fetch(x0 + 1, y0) * fx * (1.0 - fy)
                + fetch(x0, y0 + 1) * (1.0 - fx) * fy
                + fetch(x0 + 1, y0 + 1) * fx * fy;
            out.push(to_u8(v));
        }
    }
    GrayImage::new(w, h, out).expect("same shape")
}

/// Bilinear resize to `target x target` using pixel-centre alignment with
/// edge clamping.
pub fn resize(img: &GrayImage, target: usize) -> GrayImage {
    assert!(target > 0, "resize target must be positive");
    let (w, h) = (img.width(), img.height());
    if w == target && h == target {
        return img.clone();
    }
    let xs = axis_weights(w, target);
    let ys = axis_weights(h, target);
    let mut out = Vec::with_capacity(target * target);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
            let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
            out.push(to_u8(top * (1.0 - fy) + bottom * fy));
        }
    }
    GrayImage::new(target, target, out).expect("target shape")
}

fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Image scaled to [-1, 1] via `((p / 255) - 0.5) / 0.5`, shape (1, H, W).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTensor {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

pub const NORM_MEAN: f64 = 0.5;
pub const NORM_STD: f64 = 0.5;

impl NormalizedTensor {
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width, "tensor shape mismatch");
        Self {
            height,
            width,
            values,
        }
    }

    /// (channels, height, width)
    pub fn shape(&self) -> (usize, usize, usize) {
        (1, self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Maps back to intensities in [0, 1].
    pub fn denormalize(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * NORM_STD + NORM_MEAN).collect()
    }
}

pub fn normalize(img: &GrayImage) -> NormalizedTensor {
    let values = img
        .pixels()
        .iter()
        .map(|&p| (p as f64 / 255.0 - NORM_MEAN) / NORM_STD)
        .collect();
    NormalizedTensor::from_values(img.height(), img.width(), values)
}
