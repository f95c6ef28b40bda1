//! Dense multi-channel rasters and the bilinear sampler shared by all
//! resampling and warping code.

use crate::error::{Error, Result};

/// Row-major, channel-interleaved `f64` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Raster::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "raster data has {} samples, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a raster by evaluating `f(col, row, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(c, r, k));
                }
            }
        }
        Raster {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize, channel: usize) -> f64 {
        self.data[self.index(col, row) + channel]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, channel: usize, value: f64) {
        let i = self.index(col, row) + channel;
        self.data[i] = value;
    }

    pub fn pixel(&self, col: usize, row: usize) -> &[f64] {
        let i = self.index(col, row);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, col: usize, row: usize) -> &mut [f64] {
        let i = self.index(col, row);
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Bilinear sample at fractional `(row, col)` using the taps of
    /// [`bilinear_taps`]. Evaluated as nested lerps so constant neighborhoods
    /// reproduce their value exactly.
    pub fn sample(&self, row: f64, col: f64, wrap_cols: bool, out: &mut [f64]) {
        let [(i00, _), (i01, _), (i10, _), (i11, _)] =
            bilinear_taps(self.width, self.height, row, col, wrap_cols);
        let fr = row - row.floor();
        let fc = col - col.floor();
        let c = self.channels;
        for (k, o) in out.iter_mut().enumerate() {
            let a = self.data[i00 * c + k];
            let b = self.data[i01 * c + k];
            let d = self.data[i10 * c + k];
            let e = self.data[i11 * c + k];
            let top = a + fc * (b - a);
            let bot = d + fc * (e - d);
            *o = top + fr * (bot - top);
        }
    }

    /// Single-channel bilinear sample that returns `None` when any texel with
    /// nonzero weight is an invalid (zero) depth.
    pub fn sample_depth(&self, row: f64, col: f64, wrap_cols: bool) -> Option<f64> {
        debug_assert_eq!(self.channels, 1);
        let mut acc = 0.0;
        for (idx, w) in bilinear_taps(self.width, self.height, row, col, wrap_cols) {
            if w == 0.0 {
                continue;
            }
            let v = self.data[idx];
            if v <= 0.0 {
                return None;
            }
            acc += w * v;
        }
        Some(acc)
    }
}

/// The four `(pixel index, weight)` taps of a bilinear lookup at fractional
/// `(row, col)`, where integer coordinates are pixel centers.
///
/// Rows always clamp to the raster. Columns wrap modulo `width` when
/// `wrap_cols` is set and clamp otherwise.
#[inline]
pub fn bilinear_taps(
    width: usize,
    height: usize,
    row: f64,
    col: f64,
    wrap_cols: bool,
) -> [(usize, f64); 4] {
    let r0f = row.floor();
    let c0f = col.floor();
    let fr = row - r0f;
    let fc = col - c0f;
    let clamp = |i: f64, n: usize| -> usize { i.max(0.0).min((n - 1) as f64) as usize };
    let r0 = clamp(r0f, height);
    let r1 = clamp(r0f + 1.0, height);
    let (c0, c1) = if wrap_cols {
        let w = width as i64;
        let c = c0f as i64;
        (c.rem_euclid(w) as usize, (c + 1).rem_euclid(w) as usize)
    } else {
        (clamp(c0f, width), clamp(c0f + 1.0, width))
    };
    [
        (r0 * width + c0, (1.0 - fr) * (1.0 - fc)),
        (r0 * width + c1, (1.0 - fr) * fc),
        (r1 * width + c0, fr * (1.0 - fc)),
        (r1 * width + c1, fr * fc),
    ]
}

/// Scalar convenience wrapper around [`Raster::sample`] for one channel.
pub fn bilinear_sample(raster: &Raster, row: f64, col: f64, wrap_cols: bool) -> Vec<f64> {
    let mut out = vec![0.0; raster.channels()];
    raster.sample(row, col, wrap_cols, &mut out);
    out
}
