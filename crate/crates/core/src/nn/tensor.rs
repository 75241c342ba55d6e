use super::Real;
use crate::error::{Error, Result};

/// `rows x cols x channels` volume, channel index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols * channels {
            return Err(Error::LengthMismatch {
                expected: rows * cols * channels,
                actual: data.len(),
            });
        }
        Ok(Tensor3 {
            rows,
            cols,
            channels,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        Tensor3 {
            rows,
            cols,
            channels,
            data: vec![T::zero(); rows * cols * channels],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[(row * self.cols + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, v: T) {
        self.data[(row * self.cols + col) * self.channels + channel] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor3 {
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
