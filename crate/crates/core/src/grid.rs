//! Complex sample grids for the delay-Doppler and time-frequency domains.
//!
//! Both grids are `N x M` and stored row-major with the second index fastest:
//! DD sample `[k, l]` lives at `l + k*M`, TF sample `[n, m]` at `m + n*M`.

use std::fmt;
use std::marker::PhantomData;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Delay-Doppler domain marker. Rows are Doppler bins `k`, columns delay bins `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dd;

/// Time-frequency domain marker. Rows are subsymbols `n`, columns subcarriers `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tf;

#[derive(Clone, PartialEq)]
pub struct Grid<D> {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    _domain: PhantomData<D>,
}

pub type DdGrid = Grid<Dd>;
pub type TfGrid = Grid<Tf>;

/// A `(row, col)` bin position: `(k, l)` for DD grids, `(n, m)` for TF grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bin {
    pub row: usize,
    pub col: usize,
}

impl Bin {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    #[inline]
    pub fn linear(self, cols: usize) -> usize {
        self.col + self.row * cols
    }
}

impl From<(usize, usize)> for Bin {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

impl<D> Grid<D> {
    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
            _domain: PhantomData,
        }
    }

    /// # Panics
    /// If `data.len() != rows * cols` or a dimension is zero.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        assert_eq!(data.len(), rows * cols, "sample count must equal rows*cols");
        Self {
            rows,
            cols,
            data,
            _domain: PhantomData,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut g = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                g.data[c + r * cols] = f(r, c);
            }
        }
        g
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<E>(&self, other: &Grid<E>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, bin: Bin) -> Complex64 {
        self.data[bin.linear(self.cols)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: Complex64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: Complex64, other: &Self) {
        assert!(self.same_shape(other));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
    }

    /// Reinterprets the samples as belonging to another domain. Only used where
    /// the algebra requires it (e.g. the TF-level channel check in tests).
    pub fn cast<E>(self) -> Grid<E> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data,
            _domain: PhantomData,
        }
    }
}

impl<D> Index<(usize, usize)> for Grid<D> {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[c + r * self.cols]
    }
}

impl<D> IndexMut<(usize, usize)> for Grid<D> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[c + r * self.cols]
    }
}

impl<D> fmt::Debug for Grid<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("domain", &std::any::type_name::<D>().rsplit("::").next().unwrap_or("?"))
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}
