//! Low-complexity coarse estimation.
//!
//! Angles come from a zero-padded DFT across the receive array, averaged
//! non-coherently over every DD bin. Each detected angle is then isolated by
//! least squares over the steering matrix, and its profile is circularly
//! cross-correlated against the transmit-side reference to find delay and
//! Doppler indices.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::channel::{SystemConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::grid::{Bin, DdGrid};

pub const DEFAULT_PAD_FACTOR: usize = 16;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Largest steering-matrix condition number accepted by
/// [`extract_angle_profiles`].
pub const STEERING_COND_LIMIT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoarseEstimate {
    pub angle: f64,
    /// Signed Doppler index in `(-N/2, N/2]`.
    pub doppler_index: i64,
    pub delay_index: usize,
    pub doppler: f64,
    pub delay: f64,
    pub range: f64,
    pub velocity: f64,
    pub peak_strength: f64,
}

/// How many peaks to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakMode {
    /// Exactly this many (error if fewer exist).
    Count(usize),
    /// Every peak at or above `fraction * max`.
    Threshold(f64),
}

impl Default for PeakMode {
    fn default() -> Self {
        PeakMode::Threshold(DEFAULT_THRESHOLD)
    }
}

/// Which DD bins feed the angle spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectrumStrategy {
    /// Average `|DFT|^2` over all `NM` bins.
    #[default]
    Averaged,
    /// One bin only; `None` picks the bin with the most received energy.
    SingleBin(Option<Bin>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpectrum {
    /// Spatial frequencies of the padded DFT bins, wrapped into `(-pi, pi]`.
    pub omegas: Vec<f64>,
    pub power: Vec<f64>,
    /// Detected peaks as padded-DFT indices, strongest first.
    pub peaks: Vec<usize>,
    /// Spatial frequency of each peak.
    pub peak_omegas: Vec<f64>,
    /// Angle of each peak in radians.
    pub angles: Vec<f64>,
}

fn check_antennas(rx_dd: &[DdGrid]) -> Result<(usize, usize)> {
    let first = rx_dd.first().ok_or_else(|| Error::DimensionMismatch("no receive antennas".into()))?;
    if rx_dd.iter().any(|g| !g.same_shape(first)) {
        return Err(Error::DimensionMismatch("receive grids differ in shape".into()));
    }
    Ok((first.rows(), first.cols()))
}

/// Sample covariance `sum_bins y y^H` of the `N_r`-snapshots.
fn array_covariance(rx_dd: &[DdGrid], bins: impl Iterator<Item = usize>) -> DMatrix<Complex64> {
    let nr = rx_dd.len();
    let mut r = DMatrix::<Complex64>::zeros(nr, nr);
    let mut y = vec![Complex64::new(0.0, 0.0); nr];
    for b in bins {
        for (yi, g) in y.iter_mut().zip(rx_dd) {
            *yi = g.as_slice()[b];
        }
        for i in 0..nr {
            for j in i..nr {
                r[(i, j)] += y[i] * y[j].conj();
            }
        }
    }
    for i in 0..nr {
        for j in 0..i {
            r[(i, j)] = r[(j, i)].conj();
        }
    }
    r
}

fn wrap_omega(w: f64) -> f64 {
    let mut w = w.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Circular local maxima of `v`, strongest first, at least `min_sep` indices
/// apart.
fn pick_peaks_1d(v: &[f64], min_sep: usize, mode: PeakMode) -> Vec<usize> {
    let n = v.len();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut cand: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = v[(i + n - 1) % n];
            let next = v[(i + 1) % n];
            v[i] >= prev && v[i] >= next && (v[i] > prev || v[i] > next || n == 1)
        })
        .collect();
    cand.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = Vec::new();
    for c in cand {
        let far = out.iter().all(|&p| {
            let d = c.abs_diff(p);
            d.min(n - d) >= min_sep
        });
        if far {
            out.push(c);
        }
    }
    match mode {
        PeakMode::Count(k) => out.truncate(k),
        PeakMode::Threshold(f) => out.retain(|&i| v[i] >= f * max),
    }
    out
}

/// Averaged (or single-bin) angle spectrum and its peaks.
///
/// The non-coherent average over bins equals `a(w)^H R a(w) / NM` where `R`
/// is the sample covariance, so the spectrum is evaluated from `R` directly.
pub fn angle_spectrum(rx_dd: &[DdGrid], cfg: &SystemConfig, mode: PeakMode, pad_factor: usize, strategy: SpectrumStrategy) -> Result<AngleSpectrum> {
    let (n, m) = check_antennas(rx_dd)?;
    let nr = rx_dd.len();
    if let PeakMode::Count(k) = mode {
        if k >= nr {
            return Err(Error::TooManyTargets { requested: k, n_rx: nr });
        }
    }
    let pad = pad_factor.max(1);
    let p = pad * nr;
    let (r, count) = match strategy {
        SpectrumStrategy::Averaged => (array_covariance(rx_dd, 0..n * m), n * m),
        SpectrumStrategy::SingleBin(bin) => {
            let idx = match bin {
                Some(b) => {
                    if b.row >= n || b.col >= m {
                        return Err(Error::BinOutOfRange(b.row, b.col));
                    }
                    b.linear(m)
                }
                None => (0..n * m)
                    .max_by(|&a, &b| {
                        let ea: f64 = rx_dd.iter().map(|g| g.as_slice()[a].norm_sqr()).sum();
                        let eb: f64 = rx_dd.iter().map(|g| g.as_slice()[b].norm_sqr()).sum();
                        ea.total_cmp(&eb)
                    })
                    .unwrap_or(0),
            };
            (array_covariance(rx_dd, std::iter::once(idx)), 1)
        }
    };

    // a(w)^H R a(w) = sum_d c_d e^{-j d w} with c_d the sum of the d-th diagonal.
    let mut lag = vec![Complex64::new(0.0, 0.0); p];
    for i in 0..nr {
        for j in 0..nr {
            let d = (i as isize - j as isize).rem_euclid(p as isize) as usize;
            lag[d] += r[(i, j)];
        }
    }
    FftPlanner::new().plan_fft_forward(p).process(&mut lag);
    let power: Vec<f64> = lag.iter().map(|z| z.re.max(0.0) / count as f64).collect();
    let omegas: Vec<f64> = (0..p).map(|q| wrap_omega(2.0 * PI * q as f64 / p as f64)).collect();

    // Only spatial frequencies that map to a real angle are candidates.
    let visible: Vec<f64> = power
        .iter()
        .zip(&omegas)
        .map(|(v, w)| if cfg.angle_from_spatial_frequency(*w).is_some() { *v } else { 0.0 })
        .collect();
    let peaks = pick_peaks_1d(&visible, pad, mode);
    if let PeakMode::Count(k) = mode {
        if peaks.len() < k {
            return Err(Error::PeakSeparationFailure {
                found: peaks.len(),
                expected: k,
            });
        }
    }
    let peak_omegas: Vec<f64> = peaks.iter().map(|&q| omegas[q]).collect();
    let angles = peak_omegas
        .iter()
        .map(|&w| cfg.angle_from_spatial_frequency(w).expect("visible region"))
        .collect();
    Ok(AngleSpectrum {
        omegas,
        power,
        peaks,
        peak_omegas,
        angles,
    })
}

/// Bin-averaged angle estimates for a known number of targets.
pub fn estimate_angles(rx_dd: &[DdGrid], cfg: &SystemConfig, n_targets: usize, pad_factor: usize) -> Result<AngleSpectrum> {
    angle_spectrum(rx_dd, cfg, PeakMode::Count(n_targets), pad_factor, SpectrumStrategy::Averaged)
}

fn rx_steering_matrix(cfg: &SystemConfig, nr: usize, angles: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(nr, angles.len(), |r, c| Complex64::from_polar(1.0, r as f64 * cfg.spatial_frequency(angles[c])))
}

/// Per-bin least-squares split of the receive snapshot into per-angle grids.
pub fn extract_angle_profiles(rx_dd: &[DdGrid], cfg: &SystemConfig, angles: &[f64]) -> Result<Vec<DdGrid>> {
    let (n, m) = check_antennas(rx_dd)?;
    let nr = rx_dd.len();
    if angles.len() >= nr {
        return Err(Error::TooManyTargets {
            requested: angles.len(),
            n_rx: nr,
        });
    }
    if angles.is_empty() {
        return Ok(Vec::new());
    }
    let s = rx_steering_matrix(cfg, nr, angles);
    let sv = s.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > STEERING_COND_LIMIT {
        return Err(Error::IllConditionedSteering {
            cond,
            limit: STEERING_COND_LIMIT,
        });
    }
    let sh = s.adjoint();
    let pinv = (&sh * &s).try_inverse().ok_or(Error::IllConditionedSteering {
        cond: f64::INFINITY,
        limit: STEERING_COND_LIMIT,
    })? * sh;

    let mut out = vec![DdGrid::zeros(n, m); angles.len()];
    for b in 0..n * m {
        for (j, a) in out.iter_mut().enumerate() {
            a.as_mut_slice()[b] = rx_dd.iter().enumerate().map(|(r, g)| pinv[(j, r)] * g.as_slice()[b]).sum();
        }
    }
    Ok(out)
}

/// `A'[k,l] = sum_nt exp(-j2pi nt g_t sin(phi)/lambda) x_nt[k,l]`.
pub fn reference_profile(tx_dd: &[DdGrid], cfg: &SystemConfig, angle_rad: f64) -> DdGrid {
    let first = tx_dd.first().expect("at least one transmit antenna");
    let mut out = DdGrid::zeros(first.rows(), first.cols());
    for (nt, x) in tx_dd.iter().enumerate() {
        let a = Complex64::from_polar(1.0, -2.0 * PI * nt as f64 * cfg.tx_spacing_wavelengths * angle_rad.sin());
        out.add_scaled(a, x);
    }
    out
}

fn fft2(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    row_fft.process(data);
    let mut col = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[c + r * cols];
        }
        col_fft.process(&mut col);
        for r in 0..rows {
            data[c + r * cols] = col[r];
        }
    }
}

/// `C[k,l] = sum A[k',l'] conj(A_ref[k'-k, l'-l])` (circular), via FFT.
pub fn cross_correlation(a: &DdGrid, a_ref: &DdGrid) -> DdGrid {
    assert!(a.same_shape(a_ref), "grids must have the same shape");
    let (n, m) = (a.rows(), a.cols());
    let mut fa = a.as_slice().to_vec();
    let mut fr = a_ref.as_slice().to_vec();
    fft2(&mut fa, n, m, false);
    fft2(&mut fr, n, m, false);
    for (x, y) in fa.iter_mut().zip(&fr) {
        *x *= y.conj();
    }
    fft2(&mut fa, n, m, true);
    let s = 1.0 / (n * m) as f64;
    fa.iter_mut().for_each(|z| *z *= s);
    DdGrid::from_vec(n, m, fa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DdPeak {
    pub k: usize,
    pub l: usize,
    /// `|C[k,l]| / ||A_ref||^2`, about `|beta|` for an on-grid target.
    pub strength: f64,
}

/// Peaks of the delay-Doppler cross-correlation, strongest first.
pub fn delay_doppler_peaks(a: &DdGrid, a_ref: &DdGrid, mode: PeakMode) -> Vec<DdPeak> {
    let c = cross_correlation(a, a_ref);
    let (n, m) = (c.rows(), c.cols());
    let norm = a_ref.norm_sqr();
    let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    let mag: Vec<f64> = c.as_slice().iter().map(|z| z.norm() * scale).collect();
    let max = mag.iter().copied().fold(0.0, f64::max);
    let mut peaks: Vec<DdPeak> = Vec::new();
    for k in 0..n {
        for l in 0..m {
            let v = mag[l + k * m];
            if v == 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dk in [n - 1, 0, 1] {
                for dl in [m - 1, 0, 1] {
                    if dk == 0 && dl == 0 {
                        continue;
                    }
                    let (kk, ll) = ((k + dk) % n, (l + dl) % m);
                    if (kk, ll) == (k, l) {
                        continue;
                    }
                    let w = mag[ll + kk * m];
                    // Ties go to the earlier linear index.
                    if w > v || (w == v && ll + kk * m < l + k * m) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push(DdPeak { k, l, strength: v });
            }
        }
    }
    peaks.sort_by(|a, b| b.strength.total_cmp(&a.strength).then((a.k, a.l).cmp(&(b.k, b.l))));
    match mode {
        PeakMode::Count(j) => peaks.truncate(j),
        PeakMode::Threshold(f) => peaks.retain(|p| p.strength >= f * max),
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionReport {
    pub range_resolution_m: f64,
    pub max_range_m: f64,
    pub velocity_resolution_mps: f64,
    pub max_velocity_mps: f64,
}

pub fn resolution_report(cfg: &SystemConfig) -> ResolutionReport {
    let df = cfg.subcarrier_spacing_hz;
    let dt = cfg.subsymbol_duration_s();
    let lambda = cfg.wavelength_m();
    ResolutionReport {
        range_resolution_m: SPEED_OF_LIGHT / (2.0 * cfg.m_delay as f64 * df),
        max_range_m: SPEED_OF_LIGHT / (2.0 * df),
        velocity_resolution_mps: lambda / (2.0 * cfg.n_doppler as f64 * dt),
        max_velocity_mps: lambda / (2.0 * dt),
    }
}

/// Maps a Doppler row index to `(-N/2, N/2]`.
pub fn signed_doppler_index(k: usize, n: usize) -> i64 {
    let k = k as i64;
    let n = n as i64;
    if k > n / 2 {
        k - n
    } else {
        k
    }
}

impl CoarseEstimate {
    pub fn from_indices(angle: f64, k: usize, l: usize, strength: f64, cfg: &SystemConfig) -> Self {
        let doppler_index = signed_doppler_index(k, cfg.n_doppler);
        let doppler = doppler_index as f64 * cfg.doppler_resolution_hz();
        let delay = l as f64 * cfg.delay_resolution_s();
        Self {
            angle,
            doppler_index,
            delay_index: l,
            doppler,
            delay,
            range: SPEED_OF_LIGHT * delay / 2.0,
            velocity: cfg.wavelength_m() * doppler / 2.0,
            peak_strength: strength,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseConfig {
    /// Keep the strongest `J` detections; `None` keeps every detection.
    pub n_targets: Option<usize>,
    pub pad_factor: usize,
    pub angle_threshold: f64,
    pub dd_threshold: f64,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            n_targets: None,
            pad_factor: DEFAULT_PAD_FACTOR,
            angle_threshold: DEFAULT_THRESHOLD,
            dd_threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Full coarse pipeline: angles, per-angle profiles, DD correlation peaks.
pub fn coarse_estimate(rx_dd: &[DdGrid], tx_dd: &[DdGrid], cfg: &SystemConfig, opts: &CoarseConfig) -> Result<Vec<CoarseEstimate>> {
    let spec = angle_spectrum(
        rx_dd,
        cfg,
        PeakMode::Threshold(opts.angle_threshold),
        opts.pad_factor,
        SpectrumStrategy::Averaged,
    )?;
    let mut angles = spec.angles.clone();
    angles.truncate(rx_dd.len() - 1);
    let profiles = extract_angle_profiles(rx_dd, cfg, &angles)?;
    let mut out = Vec::new();
    for (phi, a) in angles.iter().zip(&profiles) {
        let a_ref = reference_profile(tx_dd, cfg, *phi);
        for p in delay_doppler_peaks(a, &a_ref, PeakMode::Threshold(opts.dd_threshold)) {
            out.push(CoarseEstimate::from_indices(*phi, p.k, p.l, p.strength, cfg));
        }
    }
    out.sort_by(|a, b| b.peak_strength.total_cmp(&a.peak_strength));
    if let Some(j) = opts.n_targets {
        if out.len() < j {
            return Err(Error::PeakSeparationFailure { found: out.len(), expected: j });
        }
        out.truncate(j);
    }
    Ok(out)
}
