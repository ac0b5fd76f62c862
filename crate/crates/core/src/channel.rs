//! Multi-target MIMO channel applied at the TF level.
//!
//! With bi-orthogonal transmit/receive pulses a path with delay `tau` and
//! Doppler `nu` multiplies TF sample `[n, m]` by
//! `beta * exp(-j2pi nu tau) * exp(j2pi(nu n dt - m df tau))`. Applying the
//! channel there is exact and handles fractional delay and Doppler directly.
//!
//! Noise is referenced to the DD domain: a DD sample carries unit-power
//! symbols and noise of variance `N0 = 1 / SNR`. Because the unit-scale SFFT
//! multiplies energy by `NM`, the equivalent TF-domain noise variance is
//! `N0 / (NM)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DdGrid, Grid, TfGrid};
use crate::transforms::{SfftPlan, SfftScale};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default cap on `NM` for explicitly materialized DD channel operators.
pub const EXPLICIT_OPERATOR_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// `N`, subsymbols per frame (Doppler bins).
    pub n_doppler: usize,
    /// `M`, subcarriers (delay bins).
    pub m_delay: usize,
    pub subcarrier_spacing_hz: f64,
    pub carrier_frequency_hz: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_comm: usize,
    pub tx_spacing_wavelengths: f64,
    pub rx_spacing_wavelengths: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_doppler: 64,
            m_delay: 128,
            subcarrier_spacing_hz: 120e3,
            carrier_frequency_hz: 24.25e9,
            n_tx: 4,
            n_rx: 16,
            n_comm: 8,
            tx_spacing_wavelengths: 0.5,
            rx_spacing_wavelengths: 0.5,
            snr_db: 20.0,
            seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_doppler", self.n_doppler),
            ("m_delay", self.m_delay),
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_comm", self.n_comm),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("system.{name}"), "must be positive"));
            }
        }
        let positive = [
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("tx_spacing_wavelengths", self.tx_spacing_wavelengths),
            ("rx_spacing_wavelengths", self.rx_spacing_wavelengths),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("system.{name}"), "must be finite and positive"));
            }
        }
        if self.snr_db.is_nan() {
            return Err(Error::config("system.snr_db", "must not be NaN"));
        }
        Ok(())
    }

    pub fn nm(&self) -> usize {
        self.n_doppler * self.m_delay
    }

    /// `dt = 1/df` (orthogonality).
    pub fn subsymbol_duration_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    /// `dnu = 1/(N dt)`.
    pub fn doppler_resolution_hz(&self) -> f64 {
        1.0 / (self.n_doppler as f64 * self.subsymbol_duration_s())
    }

    /// `dtau = 1/(M df)`.
    pub fn delay_resolution_s(&self) -> f64 {
        1.0 / (self.m_delay as f64 * self.subcarrier_spacing_hz)
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn tx_spacing_m(&self) -> f64 {
        self.tx_spacing_wavelengths * self.wavelength_m()
    }

    pub fn rx_spacing_m(&self) -> f64 {
        self.rx_spacing_wavelengths * self.wavelength_m()
    }

    /// Receive-array spatial frequency `omega = 2pi g_r sin(phi) / lambda`.
    pub fn spatial_frequency(&self, angle_rad: f64) -> f64 {
        2.0 * PI * self.rx_spacing_wavelengths * angle_rad.sin()
    }

    /// Inverse of [`spatial_frequency`](Self::spatial_frequency); `None` when
    /// `|sin(phi)| > 1`.
    pub fn angle_from_spatial_frequency(&self, omega: f64) -> Option<f64> {
        let s = omega / (2.0 * PI * self.rx_spacing_wavelengths);
        (s.abs() <= 1.0 + 1e-12).then(|| s.clamp(-1.0, 1.0).asin())
    }

    /// DD-referenced noise variance `N0 = P_avg / SNR` with `P_avg = 1`.
    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.snr_db)
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self { snr_db, ..self.clone() }
    }
}

/// `N0 = 1 / 10^(snr_db/10)`; `+inf` dB means noiseless.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// One propagation path / point scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub angle_rad: f64,
    /// Round-trip delay.
    pub delay_s: f64,
    /// Round-trip Doppler.
    pub doppler_hz: f64,
    pub gain: Complex64,
}

impl Target {
    pub fn new(angle_rad: f64, delay_s: f64, doppler_hz: f64, gain: Complex64) -> Self {
        assert!(delay_s >= 0.0, "delay must be non-negative");
        assert!(angle_rad.abs() < PI / 2.0, "angle must lie in (-pi/2, pi/2)");
        Self {
            angle_rad,
            delay_s,
            doppler_hz,
            gain,
        }
    }

    /// `tau = 2R/c`, `nu = 2 v f_c / c`.
    pub fn from_range_velocity(angle_deg: f64, range_m: f64, velocity_mps: f64, gain: Complex64, carrier_hz: f64) -> Self {
        Self::new(
            angle_deg.to_radians(),
            2.0 * range_m / SPEED_OF_LIGHT,
            2.0 * velocity_mps * carrier_hz / SPEED_OF_LIGHT,
            gain,
        )
    }

    pub fn range_m(&self) -> f64 {
        self.delay_s * SPEED_OF_LIGHT / 2.0
    }

    pub fn velocity_mps(&self, carrier_hz: f64) -> f64 {
        self.doppler_hz * SPEED_OF_LIGHT / (2.0 * carrier_hz)
    }

    /// Doppler in units of the Doppler resolution (`k_j + kappa_j`).
    pub fn doppler_bins(&self, cfg: &SystemConfig) -> f64 {
        self.doppler_hz / cfg.doppler_resolution_hz()
    }

    /// Delay in units of the delay resolution.
    pub fn delay_bins(&self, cfg: &SystemConfig) -> f64 {
        self.delay_s / cfg.delay_resolution_s()
    }
}

/// Per-path TF response `exp(-j2pi nu tau) exp(j2pi(nu n dt - m df tau))`
/// (without the complex gain), factored into its `n` and `m` parts.
pub(crate) struct PathResponse {
    pub doppler: Vec<Complex64>,
    pub delay: Vec<Complex64>,
}

impl PathResponse {
    pub fn new(delay_s: f64, doppler_hz: f64, cfg: &SystemConfig) -> Self {
        let dt = cfg.subsymbol_duration_s();
        let df = cfg.subcarrier_spacing_hz;
        let common = Complex64::from_polar(1.0, -2.0 * PI * doppler_hz * delay_s);
        let doppler = (0..cfg.n_doppler)
            .map(|n| common * Complex64::from_polar(1.0, 2.0 * PI * doppler_hz * n as f64 * dt))
            .collect();
        let delay = (0..cfg.m_delay)
            .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 * df * delay_s))
            .collect();
        Self { doppler, delay }
    }

    #[inline]
    pub fn at(&self, n: usize, m: usize) -> Complex64 {
        self.doppler[n] * self.delay[m]
    }
}

/// `H^j[n, m]` for one target, including its gain.
pub fn tf_channel_coeff(target: &Target, n: usize, m: usize, cfg: &SystemConfig) -> Complex64 {
    assert!(n < cfg.n_doppler && m < cfg.m_delay);
    let dt = cfg.subsymbol_duration_s();
    let df = cfg.subcarrier_spacing_hz;
    let (nu, tau) = (target.doppler_hz, target.delay_s);
    target.gain * Complex64::from_polar(1.0, -2.0 * PI * nu * tau) * Complex64::from_polar(1.0, 2.0 * PI * (nu * n as f64 * dt - m as f64 * df * tau))
}

fn tx_steering(cfg: &SystemConfig, angle_rad: f64) -> Vec<Complex64> {
    (0..cfg.n_tx)
        .map(|nt| Complex64::from_polar(1.0, -2.0 * PI * nt as f64 * cfg.tx_spacing_wavelengths * angle_rad.sin()))
        .collect()
}

fn rx_steering(cfg: &SystemConfig, angle_rad: f64) -> Vec<Complex64> {
    (0..cfg.n_rx)
        .map(|nr| Complex64::from_polar(1.0, 2.0 * PI * nr as f64 * cfg.rx_spacing_wavelengths * angle_rad.sin()))
        .collect()
}

/// Noiseless monostatic receive signal, one TF grid per receive antenna:
///
/// `Y_nr[n,m] = sum_j sum_nt exp(j2pi(nr g_r - nt g_t) sin(phi_j)/lambda) X_nt[n,m] H^j[n,m]`
pub fn radar_receive(tx_tf: &[TfGrid], targets: &[Target], cfg: &SystemConfig) -> Vec<TfGrid> {
    assert_eq!(tx_tf.len(), cfg.n_tx, "one TX grid per transmit antenna");
    let (n, m) = (cfg.n_doppler, cfg.m_delay);
    for g in tx_tf {
        assert!(g.rows() == n && g.cols() == m);
    }
    let mut rx = vec![TfGrid::zeros(n, m); cfg.n_rx];
    let mut steered = TfGrid::zeros(n, m);
    for t in targets {
        // Sum over TX antennas first; the RX steering is a per-antenna scalar.
        steered.as_mut_slice().fill(Complex64::new(0.0, 0.0));
        for (a, x) in tx_steering(cfg, t.angle_rad).iter().zip(tx_tf) {
            steered.add_scaled(*a, x);
        }
        let resp = PathResponse::new(t.delay_s, t.doppler_hz, cfg);
        for ni in 0..n {
            for mi in 0..m {
                steered[(ni, mi)] *= t.gain * resp.at(ni, mi);
            }
        }
        for (y, b) in rx.iter_mut().zip(rx_steering(cfg, t.angle_rad)) {
            y.add_scaled(b, &steered);
        }
    }
    rx
}

/// [`radar_receive`] plus circular Gaussian noise at the configured SNR.
pub fn radar_receive_noisy<R: Rng + ?Sized>(tx_tf: &[TfGrid], targets: &[Target], cfg: &SystemConfig, rng: &mut R) -> Vec<TfGrid> {
    let mut rx = radar_receive(tx_tf, targets, cfg);
    add_noise(&mut rx, tf_noise_variance(cfg), rng);
    rx
}

/// TF-domain noise variance equivalent to `N0` per DD sample.
pub fn tf_noise_variance(cfg: &SystemConfig) -> f64 {
    cfg.noise_variance() / cfg.nm() as f64
}

/// Adds i.i.d. `CN(0, variance)` samples. A zero variance leaves the grids
/// untouched and draws nothing.
pub fn add_noise<D, R: Rng + ?Sized>(grids: &mut [Grid<D>], variance: f64, rng: &mut R) {
    if variance == 0.0 {
        return;
    }
    let sigma = (variance / 2.0).sqrt();
    for g in grids {
        for z in g.as_mut_slice() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *z += Complex64::new(sigma * re, sigma * im);
        }
    }
}

/// Doppler spreading kernel for a fractional Doppler `k_j + kappa`:
///
/// `G = sum_{n=0}^{N-1} exp(-j2pi (k' - k_j - kappa) n / N)`
///
/// evaluated in closed form as
/// `exp(-j pi x (N-1)/N) sin(pi x) / sin(pi x / N)` with `x = k' - k_j - kappa`.
pub fn g_function(k_prime: f64, k_j: f64, kappa: f64, n: usize) -> Complex64 {
    let nf = n as f64;
    let x = k_prime - k_j - kappa;
    let den = (PI * x / nf).sin();
    if den.abs() < 1e-12 {
        // x is a multiple of N: every term of the sum is 1.
        return Complex64::new(nf, 0.0);
    }
    Complex64::from_polar((PI * x).sin() / den, -PI * x * (nf - 1.0) / nf)
}

/// A communication path. Gains are per antenna pair and live in [`CommChannel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommPath {
    pub delay_s: f64,
    pub doppler_hz: f64,
}

/// MIMO communication channel: shared path delays/Dopplers, independent
/// unit-magnitude complex gains for every (comm antenna, TX antenna, path).
#[derive(Debug, Clone, PartialEq)]
pub struct CommChannel {
    paths: Vec<CommPath>,
    n_comm: usize,
    n_tx: usize,
    gains: Vec<Complex64>,
}

impl CommChannel {
    /// Gains indexed `[(nc * n_tx + nt) * n_paths + j]`.
    pub fn new(paths: Vec<CommPath>, n_comm: usize, n_tx: usize, gains: Vec<Complex64>) -> Self {
        assert_eq!(gains.len(), n_comm * n_tx * paths.len());
        Self { paths, n_comm, n_tx, gains }
    }

    pub fn random<R: Rng + ?Sized>(paths: Vec<CommPath>, n_comm: usize, n_tx: usize, rng: &mut R) -> Self {
        let gains = (0..n_comm * n_tx * paths.len())
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        Self::new(paths, n_comm, n_tx, gains)
    }

    pub fn paths(&self) -> &[CommPath] {
        &self.paths
    }

    pub fn n_comm(&self) -> usize {
        self.n_comm
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn gain(&self, nc: usize, nt: usize, path: usize) -> Complex64 {
        self.gains[(nc * self.n_tx + nt) * self.paths.len() + path]
    }

    /// Diagonal TF response between TX antenna `nt` and comm antenna `nc`.
    pub fn tf_response(&self, nc: usize, nt: usize, cfg: &SystemConfig) -> TfGrid {
        let (n, m) = (cfg.n_doppler, cfg.m_delay);
        let mut h = TfGrid::zeros(n, m);
        for (j, p) in self.paths.iter().enumerate() {
            let g = self.gain(nc, nt, j);
            let resp = PathResponse::new(p.delay_s, p.doppler_hz, cfg);
            for ni in 0..n {
                for mi in 0..m {
                    h[(ni, mi)] += g * resp.at(ni, mi);
                }
            }
        }
        h
    }

    /// All `n_comm x n_tx` responses, indexed `[nc * n_tx + nt]`.
    pub fn tf_responses(&self, cfg: &SystemConfig) -> Vec<TfGrid> {
        (0..self.n_comm)
            .flat_map(|nc| (0..self.n_tx).map(move |nt| (nc, nt)))
            .map(|(nc, nt)| self.tf_response(nc, nt, cfg))
            .collect()
    }

    /// Noiseless TF samples at every comm antenna.
    pub fn apply(&self, tx_tf: &[TfGrid], cfg: &SystemConfig) -> Vec<TfGrid> {
        assert_eq!(tx_tf.len(), self.n_tx);
        let responses = self.tf_responses(cfg);
        (0..self.n_comm)
            .map(|nc| {
                let mut y = TfGrid::zeros(cfg.n_doppler, cfg.m_delay);
                for (nt, x) in tx_tf.iter().enumerate() {
                    let h = &responses[nc * self.n_tx + nt];
                    for ((yi, xi), hi) in y.as_mut_slice().iter_mut().zip(x.as_slice()).zip(h.as_slice()) {
                        *yi += xi * hi;
                    }
                }
                y
            })
            .collect()
    }
}

/// Explicit `NM x NM` DD operator `h_(nc, nt)` with `y = h x` (row-major
/// vectorization), built by composing ISFFT, the TF path response and the
/// unit-scale SFFT.
pub fn dd_channel_operator(channel: &CommChannel, cfg: &SystemConfig, pair: (usize, usize), cap: usize) -> Result<DMatrix<Complex64>> {
    let nm = cfg.nm();
    if nm > cap {
        return Err(Error::GridTooLargeForExplicitOperator { dim: nm, cap });
    }
    let (n, m) = (cfg.n_doppler, cfg.m_delay);
    let plan = SfftPlan::new(n, m);
    let h = channel.tf_response(pair.0, pair.1, cfg);
    let mut op = DMatrix::zeros(nm, nm);
    for col in 0..nm {
        let mut e = DdGrid::zeros(n, m);
        e.as_mut_slice()[col] = Complex64::new(1.0, 0.0);
        let mut tf = plan.isfft(&e);
        for (x, hi) in tf.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *x *= hi;
        }
        let y = plan.sfft(&tf, SfftScale::Unit);
        for (row, v) in y.as_slice().iter().enumerate() {
            op[(row, col)] = *v;
        }
    }
    Ok(op)
}

/// Closed-form operator for paths on integer DD bins: each path is a circular
/// shift by `(k_j, l_j)` weighted by `g exp(-j2pi k_j l_j / (NM))`. Returns
/// `None` if any path is off-grid.
pub fn dd_channel_operator_on_grid(channel: &CommChannel, cfg: &SystemConfig, pair: (usize, usize)) -> Option<DMatrix<Complex64>> {
    let (n, m) = (cfg.n_doppler, cfg.m_delay);
    let nm = n * m;
    let mut op = DMatrix::zeros(nm, nm);
    for (j, p) in channel.paths().iter().enumerate() {
        let kf = p.doppler_hz / cfg.doppler_resolution_hz();
        let lf = p.delay_s / cfg.delay_resolution_s();
        if (kf - kf.round()).abs() > 1e-9 || (lf - lf.round()).abs() > 1e-9 {
            return None;
        }
        let (kj, lj) = (kf.round() as i64, lf.round() as i64);
        let w = channel.gain(pair.0, pair.1, j) * Complex64::from_polar(1.0, -2.0 * PI * (kj * lj) as f64 / nm as f64);
        for k in 0..n as i64 {
            for l in 0..m as i64 {
                let src_k = (k - kj).rem_euclid(n as i64) as usize;
                let src_l = (l - lj).rem_euclid(m as i64) as usize;
                op[(l as usize + k as usize * m, src_l + src_k * m)] += w;
            }
        }
    }
    Some(op)
}
