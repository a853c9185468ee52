//! Dense row-major 2D storage shared by heatmaps, masks and gradients.

use crate::error::{Error, Result};

/// A dense `height x width` grid stored in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            values: vec![value; height * width],
        })
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        check_dims(height, width)?;
        if values.len() != height * width {
            return Err(Error::Value(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        check_dims(height, width)?;
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.values[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.values[row * self.width + col]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(f).collect(),
        }
    }

    pub(crate) fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(self.dims(), other.dims()));
        }
        Ok(())
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Value(format!(
            "grid dimensions must be at least 1x1, got {height}x{width}"
        )));
    }
    height
        .checked_mul(width)
        .ok_or_else(|| Error::Value(format!("grid {height}x{width} is too large")))?;
    Ok(())
}
