//! Minimal owned raster used by the warp, tracker and simulator code.

use alloc::vec;
use alloc::vec::Vec;

/// Interleaved 8-bit raster with 1 (gray) or 3 (RGB) channels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image {
    /// Wraps a pixel buffer. Returns `None` when the buffer length does not
    /// match `width * height * channels` or `channels` is not 1 or 3.
    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Option<Self> {
        if channels != 1 && channels != 3 {
            return None;
        }
        if data.len() != width as usize * height as usize * channels as usize {
            return None;
        }
        Some(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        let len = width as usize * height as usize * channels as usize;
        Self {
            width,
            height,
            channels,
            data: vec![value; len],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Channel values of one pixel.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        &mut self.data[o..o + c]
    }

    /// Luma with ITU-R BT.601 weights; gray images return the raw value.
    #[inline]
    pub fn luma(&self, x: u32, y: u32) -> f64 {
        let p = self.pixel(x, y);
        if p.len() == 1 {
            f64::from(p[0])
        } else {
            0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
        }
    }

    /// Largest absolute per-sample difference, or `None` for mismatched shapes.
    pub fn max_abs_diff(&self, other: &Image) -> Option<u8> {
        if self.width != other.width
            || self.height != other.height
            || self.channels != other.channels
        {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.abs_diff(*b))
                .max()
                .unwrap_or(0),
        )
    }
}
