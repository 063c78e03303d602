//! Horizontally periodic equirectangular rasters.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Semantic class label. `0` is background.
pub type ClassId = u8;

/// W×H raster over the full sphere, `W == 2H`, columns taken modulo `W`.
///
/// Data is channel-major, then row-major: `data[(c * H + row) * W + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectGrid<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

pub type BinaryMask = EquirectGrid<bool>;
pub type SemanticMap = EquirectGrid<ClassId>;

pub(crate) fn check_dims(width: usize, height: usize) -> Result<()> {
    if height == 0 || width != 2 * height {
        return Err(Error::ShapeMismatch("equirectangular grids need width == 2 * height"));
    }
    Ok(())
}

impl<T: Copy> EquirectGrid<T> {
    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Result<Self> {
        check_dims(width, height)?;
        if channels == 0 {
            return Err(Error::InvalidParameter("channels must be >= 1"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        })
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::ShapeMismatch("data length does not match width*height*channels"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel grid filled from `f(col, row)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Ok(Self {
            width,
            height,
            channels: 1,
            data,
        })
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &EquirectGrid<U>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn index(&self, channel: usize, col: usize, row: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: T) {
        let w = self.width;
        self.data[row * w + col] = value;
    }

    #[inline]
    pub fn get_ch(&self, channel: usize, col: usize, row: usize) -> T {
        self.data[self.index(channel, col, row)]
    }

    /// Value at a column given modulo the width.
    #[inline]
    pub fn get_wrapped(&self, channel: usize, col: i64, row: usize) -> T {
        let c = col.rem_euclid(self.width as i64) as usize;
        self.data[self.index(channel, c, row)]
    }

    /// One channel as a row-major slice.
    pub fn plane(&self, channel: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [T] {
        let n = self.width * self.height;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    /// Copy with every column moved right by `k` (mod W): `out[(c + k) % W] = self[c]`.
    pub fn shift_columns(&self, k: i64) -> Self {
        let w = self.width as i64;
        let k = k.rem_euclid(w) as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for line in self.data.chunks(self.width) {
            data.extend_from_slice(&line[self.width - k..]);
            data.extend_from_slice(&line[..self.width - k]);
        }
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> EquirectGrid<U> {
        EquirectGrid {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 1, false)
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Smallest wrapped run of columns holding every set pixel, as
    /// `(first column, number of columns)`: the complement of the widest
    /// run of empty columns (the first one on ties). `None` for an empty
    /// mask; a mask touching every column gives `(0, W)`.
    pub fn column_span(&self) -> Option<(usize, usize)> {
        let w = self.width;
        let occupied: Vec<bool> = (0..w).map(|c| (0..self.height).any(|r| self.get(c, r))).collect();
        let first = (0..w).find(|&c| occupied[c])?;
        let (mut best_len, mut best_end, mut run) = (0usize, 0usize, 0usize);
        for i in 1..=w {
            let c = (first + i) % w;
            if occupied[c] {
                if run > best_len {
                    best_len = run;
                    best_end = c;
                }
                run = 0;
            } else {
                run += 1;
            }
        }
        Some(if best_len == 0 { (0, w) } else { (best_end, w - best_len) })
    }

    /// First and last rows holding a set pixel.
    pub fn row_span(&self) -> Option<(usize, usize)> {
        let rows: Vec<bool> = (0..self.height).map(|r| (0..self.width).any(|c| self.get(c, r))).collect();
        let top = rows.iter().position(|&b| b)?;
        let bottom = rows.iter().rposition(|&b| b)?;
        Some((top, bottom))
    }
}
