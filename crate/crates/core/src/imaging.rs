//! RGB images and bilinear resampling.

use crate::error::{Error, Result};

/// Interleaved RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape("image must be non-empty".into()));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixel_at(&self, idx: usize) -> [f32; 3] {
        let i = 3 * idx;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel-major copy (`3 × H × W`).
    pub fn to_planar(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 3 * n];
        for i in 0..n {
            for c in 0..3 {
                out[c * n + i] = self.data[3 * i + c];
            }
        }
        out
    }

    pub fn resized(&self, width: usize, height: usize) -> Result<RgbImage> {
        let planar = self.to_planar();
        let scaled = resize_planar(&planar, 3, self.width, self.height, width, height)?;
        let n = width * height;
        let mut data = vec![0.0; 3 * n];
        for i in 0..n {
            for c in 0..3 {
                data[3 * i + c] = scaled[c * n + i];
            }
        }
        RgbImage::new(width, height, data)
    }

    /// Rounds every channel to the nearest 8-bit level.
    pub fn quantized(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| f32::from(to_u8(v)) / 255.0)
                .collect(),
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        RgbImage::new(
            width,
            height,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Source coordinate and blend weight for half-pixel-centre bilinear sampling.
pub(crate) fn bilinear_taps(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (pos.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    let t = if i1 == i0 { 0.0 } else { pos - i0 as f64 };
    (i0, i1, t)
}

/// Bilinear resize of a channel-major buffer, sampling at pixel centres with
/// edge clamping.
pub fn resize_planar(
    src: &[f32],
    channels: usize,
    width: usize,
    height: usize,
    new_width: usize,
    new_height: usize,
) -> Result<Vec<f32>> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::Shape(format!(
            "resize target {new_width}x{new_height} is empty"
        )));
    }
    if src.len() != channels * width * height {
        return Err(Error::Shape("planar buffer size mismatch".into()));
    }
    if (new_width, new_height) == (width, height) {
        return Ok(src.to_vec());
    }
    let xs: Vec<_> = (0..new_width)
        .map(|x| bilinear_taps(x, width, new_width))
        .collect();
    let ys: Vec<_> = (0..new_height)
        .map(|y| bilinear_taps(y, height, new_height))
        .collect();
    let mut out = vec![0.0f32; channels * new_width * new_height];
    for c in 0..channels {
        let plane = &src[c * width * height..(c + 1) * width * height];
        let dst = &mut out[c * new_width * new_height..(c + 1) * new_width * new_height];
        for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                let v00 = f64::from(plane[y0 * width + x0]);
                let v01 = f64::from(plane[y0 * width + x1]);
                let v10 = f64::from(plane[y1 * width + x0]);
                let v11 = f64::from(plane[y1 * width + x1]);
                let top = v00 + (v01 - v00) * tx;
                let bottom = v10 + (v11 - v10) * tx;
                dst[oy * new_width + ox] = (top + (bottom - top) * ty) as f32;
            }
        }
    }
    Ok(out)
}
