//! DD <-> TF transforms.
//!
//! The ISFFT carries the `1/(NM)` factor:
//!
//! ```text
//! X[n,m] = 1/(NM) * sum_k sum_l x[k,l] exp(j2pi(kn/N - ml/M))
//! ```
//!
//! and the SFFT is its exact inverse when used with [`SfftScale::Unit`].
//! [`SfftScale::OneOverNm`] reproduces the convention used for the closed-form
//! DD channel `h[k', l']`, where the channel's TF response is transformed with
//! the same `1/(NM)` factor.
//!
//! Both transforms are separable: an `N`-point DFT along the Doppler/time axis
//! and an `M`-point DFT along the delay/frequency axis.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Bin, DdGrid, Grid, TfGrid};

/// Relative threshold on the smallest singular value of the reduced ISFFT
/// matrix, measured against the largest singular value of the full one.
pub const SINGULARITY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfftScale {
    /// Exact inverse of [`isfft`].
    Unit,
    /// `1/(NM)` scaling, as in the DD channel derivation.
    OneOverNm,
}

/// Cached FFT plans for one `N x M` grid size.
#[derive(Clone)]
pub struct SfftPlan {
    n: usize,
    m: usize,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SfftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SfftPlan").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl SfftPlan {
    pub fn new(n: usize, m: usize) -> Self {
        assert!(n > 0 && m > 0);
        let mut planner = FftPlanner::new();
        Self {
            n,
            m,
            fwd_n: planner.plan_fft_forward(n),
            inv_n: planner.plan_fft_inverse(n),
            fwd_m: planner.plan_fft_forward(m),
            inv_m: planner.plan_fft_inverse(m),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn isfft(&self, dd: &DdGrid) -> TfGrid {
        self.check(dd);
        let mut data = dd.as_slice().to_vec();
        self.separable(&mut data, &self.fwd_m, &self.inv_n);
        let s = 1.0 / (self.n * self.m) as f64;
        data.iter_mut().for_each(|z| *z *= s);
        Grid::from_vec(self.n, self.m, data)
    }

    pub fn sfft(&self, tf: &TfGrid, scale: SfftScale) -> DdGrid {
        self.check(tf);
        let mut data = tf.as_slice().to_vec();
        self.separable(&mut data, &self.inv_m, &self.fwd_n);
        if scale == SfftScale::OneOverNm {
            let s = 1.0 / (self.n * self.m) as f64;
            data.iter_mut().for_each(|z| *z *= s);
        }
        Grid::from_vec(self.n, self.m, data)
    }

    fn check<D>(&self, g: &Grid<D>) {
        assert!(
            g.rows() == self.n && g.cols() == self.m,
            "grid {}x{} does not match plan {}x{}",
            g.rows(),
            g.cols(),
            self.n,
            self.m
        );
    }

    /// Applies `along_rows` to every row (length M) and `along_cols` to every
    /// column (length N), in place.
    fn separable(&self, data: &mut [Complex64], along_rows: &Arc<dyn Fft<f64>>, along_cols: &Arc<dyn Fft<f64>>) {
        let (n, m) = (self.n, self.m);
        along_rows.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..m {
            for r in 0..n {
                col[r] = data[c + r * m];
            }
            along_cols.process(&mut col);
            for r in 0..n {
                data[c + r * m] = col[r];
            }
        }
    }
}

pub fn isfft(dd: &DdGrid) -> TfGrid {
    SfftPlan::new(dd.rows(), dd.cols()).isfft(dd)
}

pub fn sfft(tf: &TfGrid, scale: SfftScale) -> DdGrid {
    SfftPlan::new(tf.rows(), tf.cols()).sfft(tf, scale)
}

/// Kernel of the unit-scale SFFT: coefficient of `X[n,m]` in `x[k,l]`.
#[inline]
fn sfft_kernel(dd: Bin, tf: Bin, n: usize, m: usize) -> Complex64 {
    let phase = -2.0 * PI * ((dd.row * tf.row) as f64 / n as f64 - (tf.col * dd.col) as f64 / m as f64);
    Complex64::from_polar(1.0, phase)
}

/// Inverse of the ISFFT matrix with the zero-forced TF rows and the empty DD
/// columns removed.
///
/// The reduced system is never materialized. A TF vector with its zeroed
/// entries filled by unknowns `u` maps back to DD through the ordinary SFFT;
/// requiring the result to vanish on the empty DD bins gives the small system
/// `K u = -x0[E]` with `K = SFFT[E, Z]`. By the complementary-minor identity
/// the reduced matrix is invertible iff `K` is, and (the full ISFFT being a
/// scaled unitary) their smallest singular values coincide up to the
/// `sqrt(NM)` scale.
#[derive(Debug, Clone)]
pub struct ModifiedSfft {
    plan: SfftPlan,
    zeroed_tf: Vec<Bin>,
    empty_dd: Vec<Bin>,
    kernel_inv: DMatrix<Complex64>,
    sigma_rel: f64,
}

impl ModifiedSfft {
    pub fn build(n: usize, m: usize, zeroed_tf: &[Bin], empty_dd: &[Bin]) -> Result<Self> {
        let zeroed: Vec<Bin> = zeroed_tf.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let empty: Vec<Bin> = empty_dd.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if zeroed.len() != zeroed_tf.len() || empty.len() != empty_dd.len() {
            return Err(Error::DimensionMismatch("duplicate bins in zeroed/empty sets".into()));
        }
        if zeroed.len() != empty.len() {
            return Err(Error::DimensionMismatch(format!(
                "|zeroed_tf| = {} but |empty_dd| = {}",
                zeroed.len(),
                empty.len()
            )));
        }
        for b in zeroed.iter().chain(&empty) {
            if b.row >= n || b.col >= m {
                return Err(Error::BinOutOfRange(b.row, b.col));
            }
        }

        let r = zeroed.len();
        let (kernel_inv, sigma_rel) = if r == 0 {
            (DMatrix::zeros(0, 0), 1.0)
        } else {
            let k = DMatrix::from_fn(r, r, |i, j| sfft_kernel(empty[i], zeroed[j], n, m));
            let sv = k.clone().singular_values();
            let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
            let sigma_rel = (sigma_min / ((n * m) as f64).sqrt()).min(1.0);
            if !(sigma_rel >= SINGULARITY_THRESHOLD) {
                return Err(Error::SingularReducedMatrix { sigma_rel });
            }
            let inv = k.try_inverse().ok_or(Error::SingularReducedMatrix { sigma_rel })?;
            (inv, sigma_rel)
        };

        Ok(Self {
            plan: SfftPlan::new(n, m),
            zeroed_tf: zeroed,
            empty_dd: empty,
            kernel_inv,
            sigma_rel,
        })
    }

    pub fn zeroed_tf(&self) -> &[Bin] {
        &self.zeroed_tf
    }

    pub fn empty_dd(&self) -> &[Bin] {
        &self.empty_dd
    }

    /// `(rows, cols)` of the reduced inverse operator.
    pub fn dims(&self) -> (usize, usize) {
        let nm = self.plan.n() * self.plan.m();
        (nm - self.empty_dd.len(), nm - self.zeroed_tf.len())
    }

    /// Smallest singular value of the reduced ISFFT matrix relative to the
    /// largest singular value of the full one.
    pub fn relative_sigma_min(&self) -> f64 {
        self.sigma_rel
    }

    /// Recovers the information symbols (DD row-major order, empty bins
    /// skipped). Samples at the zeroed TF bins are ignored.
    pub fn recover_dd(&self, tf: &TfGrid) -> Vec<Complex64> {
        let (n, m) = (self.plan.n(), self.plan.m());
        assert!(tf.rows() == n && tf.cols() == m);
        let mut masked = tf.clone();
        for b in &self.zeroed_tf {
            masked[(b.row, b.col)] = Complex64::new(0.0, 0.0);
        }
        let mut x = self.plan.sfft(&masked, SfftScale::Unit);

        if !self.zeroed_tf.is_empty() {
            let rhs = nalgebra::DVector::from_iterator(self.empty_dd.len(), self.empty_dd.iter().map(|b| -x.get(*b)));
            let u = &self.kernel_inv * rhs;
            for (z, uz) in self.zeroed_tf.iter().zip(u.iter()) {
                for k in 0..n {
                    for l in 0..m {
                        x[(k, l)] += uz * sfft_kernel(Bin::new(k, l), *z, n, m);
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(n * m - self.empty_dd.len());
        let mut skip = self.empty_dd.iter().peekable();
        for k in 0..n {
            for l in 0..m {
                if skip.peek().is_some_and(|b| b.row == k && b.col == l) {
                    skip.next();
                    continue;
                }
                out.push(x[(k, l)]);
            }
        }
        out
    }

    /// Like [`recover_dd`](Self::recover_dd) but rejects input whose zeroed
    /// bins are not zero to within `tol`.
    pub fn recover_dd_strict(&self, tf: &TfGrid, tol: f64) -> Result<Vec<Complex64>> {
        for b in &self.zeroed_tf {
            let v = tf.get(*b);
            if v.norm() > tol {
                return Err(Error::DimensionMismatch(format!(
                    "TF bin ({}, {}) should be zero-forced but holds |{:.3e}|",
                    b.row,
                    b.col,
                    v.norm()
                )));
            }
        }
        Ok(self.recover_dd(tf))
    }

    /// Places information symbols on the DD grid, leaving the empty bins at zero.
    pub fn place_symbols(&self, symbols: &[Complex64]) -> Result<DdGrid> {
        let (n, m) = (self.plan.n(), self.plan.m());
        let expected = n * m - self.empty_dd.len();
        if symbols.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} information symbols, got {}",
                symbols.len()
            )));
        }
        Ok(place_around(n, m, &self.empty_dd, symbols))
    }

    /// Materializes the reduced inverse as a dense `(NM-|E|) x (NM-|Z|)` matrix.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<Complex64>> {
        let (rows, cols) = self.dims();
        if rows.max(cols) > cap {
            return Err(Error::GridTooLargeForExplicitOperator { dim: rows.max(cols), cap });
        }
        let (n, m) = (self.plan.n(), self.plan.m());
        let kept: Vec<Bin> = (0..n)
            .flat_map(|r| (0..m).map(move |c| Bin::new(r, c)))
            .filter(|b| self.zeroed_tf.binary_search(b).is_err())
            .collect();
        let mut out = DMatrix::zeros(rows, cols);
        for (j, b) in kept.iter().enumerate() {
            let mut e = TfGrid::zeros(n, m);
            e[(b.row, b.col)] = Complex64::new(1.0, 0.0);
            for (i, v) in self.recover_dd(&e).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Fills an `n x m` DD grid in row-major order with `symbols`, skipping the
/// (sorted) `empty` bins.
pub(crate) fn place_around(n: usize, m: usize, empty: &[Bin], symbols: &[Complex64]) -> DdGrid {
    let mut g = DdGrid::zeros(n, m);
    let mut it = symbols.iter();
    let mut skip = empty.iter().peekable();
    for k in 0..n {
        for l in 0..m {
            if skip.peek().is_some_and(|b| b.row == k && b.col == l) {
                skip.next();
                continue;
            }
            g[(k, l)] = *it.next().expect("symbol count checked by caller");
        }
    }
    g
}
