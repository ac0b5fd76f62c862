//! Cramér-Rao bounds for one target's `(tau, nu, omega, phase)` with
//! `omega = 2pi g_r sin(phi) / lambda` (`pi sin(phi)` at half-wavelength
//! spacing).
//!
//! The per-antenna DD response is modelled as
//!
//! `h[n_r,k,l] = (1/NM) e^{j n_r omega} beta e^{j phase}
//!               sum_n e^{-j2pi(k - nu N dt) n/N} sum_m e^{j2pi m (l - tau M df)/M}`
//!
//! and for on-grid targets its Fisher information is `2|beta|^2 SNR N_r C`
//! with the 4x4 matrix `C` from [`c_matrix`].
//!
//! Inverting `C` gives exactly the delay and Doppler closed forms. The angle
//! entry of `C^-1` is `12 / (N_r^2 - 1)`. [`CrlbClosedForm::omega`] keeps the
//! widely quoted `84 / ((N_r - 1)(7 N_r - 1))` and
//! [`CrlbClosedForm::omega_exact`] carries the exact inverse.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{SystemConfig, SPEED_OF_LIGHT};

/// Dimensions entering the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbDims {
    pub n: usize,
    pub m: usize,
    pub n_rx: usize,
    pub subcarrier_spacing_hz: f64,
    pub subsymbol_duration_s: f64,
}

impl CrlbDims {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            n: cfg.n_doppler,
            m: cfg.m_delay,
            n_rx: cfg.n_rx,
            subcarrier_spacing_hz: cfg.subcarrier_spacing_hz,
            subsymbol_duration_s: cfg.subsymbol_duration_s(),
        }
    }
}

/// `SNR = |beta|^2 P_avg / N0` as a linear ratio.
pub fn snr_linear(snr_db: f64, beta_mag: f64) -> f64 {
    beta_mag * beta_mag * 10f64.powf(snr_db / 10.0)
}

/// The on-grid matrix `C`, parameter order `(tau, nu, omega, phase)`.
pub fn c_matrix(d: &CrlbDims) -> Matrix4<f64> {
    let (n, m, nr) = (d.n as f64, d.m as f64, d.n_rx as f64);
    let (df, dt) = (d.subcarrier_spacing_hz, d.subsymbol_duration_s);
    let pi2 = PI * PI;
    let a = 4.0 * pi2 * df * df * (m - 1.0) * (2.0 * m - 1.0) / 6.0;
    let b = -pi2 * (n - 1.0) * (m - 1.0);
    let c = -PI * (nr - 1.0) / 2.0 * df * (m - 1.0);
    let e = -PI * df * (m - 1.0);
    let f = 4.0 * pi2 * dt * dt * (n - 1.0) * (2.0 * n - 1.0) / 6.0;
    let g = PI * (nr - 1.0) / 2.0 * dt * (n - 1.0);
    let h = PI * dt * (n - 1.0);
    let i = (nr - 1.0) * (2.0 * nr - 1.0) / 6.0;
    let j = (nr - 1.0) / 2.0;
    #[rustfmt::skip]
    let out = Matrix4::new(
        a, b, c, e,
        b, f, g, h,
        c, g, i, j,
        e, h, j, 1.0,
    );
    out
}

/// `I = 2 |beta|^2 (P_avg / N0) N_r C`.
pub fn asymptotic_fim(d: &CrlbDims, snr_db: f64, beta_mag: f64) -> Matrix4<f64> {
    c_matrix(d) * (2.0 * snr_linear(snr_db, beta_mag) * d.n_rx as f64)
}

/// Inverse of a symmetric positive definite 4x4 matrix whose diagonal spans
/// many orders of magnitude. Scaling to unit diagonal first keeps the solve
/// well conditioned.
pub fn equilibrated_inverse(a: &Matrix4<f64>) -> Option<Matrix4<f64>> {
    let s = Matrix4::from_diagonal(&a.diagonal().map(|x| 1.0 / x.sqrt()));
    let scaled = s * a * s;
    let inv = scaled.cholesky().map(|c| c.inverse()).or_else(|| scaled.try_inverse())?;
    Some(s * inv * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbClosedForm {
    /// s^2
    pub tau: f64,
    /// Hz^2
    pub nu: f64,
    /// rad^2, commonly quoted form `84 / ((N_r - 1)(7 N_r - 1))`.
    pub omega: f64,
    /// rad^2, exact `[C^-1]_(2,2) = 12 / (N_r^2 - 1)`.
    pub omega_exact: f64,
}

pub fn crlb_closed_form(d: &CrlbDims, snr_db: f64, beta_mag: f64) -> CrlbClosedForm {
    let (n, m, nr) = (d.n as f64, d.m as f64, d.n_rx as f64);
    let (df, dt) = (d.subcarrier_spacing_hz, d.subsymbol_duration_s);
    let k = 1.0 / (2.0 * snr_linear(snr_db, beta_mag) * nr);
    CrlbClosedForm {
        tau: k * 3.0 / (PI * PI * df * df * (m * m - 1.0)),
        nu: k * 3.0 / (PI * PI * dt * dt * (n * n - 1.0)),
        omega: k * 84.0 / ((nr - 1.0) * (7.0 * nr - 1.0)),
        omega_exact: k * 12.0 / (nr * nr - 1.0),
    }
}

/// Diagonal of the numeric inverse of [`asymptotic_fim`].
pub fn crlb_numeric(d: &CrlbDims, snr_db: f64, beta_mag: f64) -> Option<[f64; 4]> {
    let inv = equilibrated_inverse(&asymptotic_fim(d, snr_db, beta_mag))?;
    Some([inv[(0, 0)], inv[(1, 1)], inv[(2, 2)], inv[(3, 3)]])
}

/// Parameters of the single-target response model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetParams {
    pub tau: f64,
    pub nu: f64,
    pub omega: f64,
    pub phase: f64,
    pub beta: Complex64,
}

impl TargetParams {
    pub fn as_array(&self) -> [f64; 4] {
        [self.tau, self.nu, self.omega, self.phase]
    }

    pub fn with(&self, index: usize, value: f64) -> Self {
        let mut p = *self;
        match index {
            0 => p.tau = value,
            1 => p.nu = value,
            2 => p.omega = value,
            3 => p.phase = value,
            _ => panic!("parameter index out of range"),
        }
        p
    }
}

/// `(sum_n w(n) e^{-j2pi(k - nu N dt) n/N}, sum_m w(m) e^{j2pi m(l - tau M df)/M})`
/// style partial sums with weights 1 and the index itself.
fn partial_sums(p: &TargetParams, d: &CrlbDims, k: usize, l: usize) -> [Complex64; 4] {
    let (n, m) = (d.n as f64, d.m as f64);
    let kx = k as f64 - p.nu * n * d.subsymbol_duration_s;
    let lx = l as f64 - p.tau * m * d.subcarrier_spacing_hz;
    let mut s = [Complex64::new(0.0, 0.0); 4];
    for ni in 0..d.n {
        let e = Complex64::from_polar(1.0, -2.0 * PI * kx * ni as f64 / n);
        s[0] += e;
        s[1] += e * ni as f64;
    }
    for mi in 0..d.m {
        let e = Complex64::from_polar(1.0, 2.0 * PI * mi as f64 * lx / m);
        s[2] += e;
        s[3] += e * mi as f64;
    }
    s
}

fn prefactor(p: &TargetParams, d: &CrlbDims, nr: usize) -> Complex64 {
    Complex64::from_polar(1.0 / (d.n * d.m) as f64, nr as f64 * p.omega + p.phase) * p.beta
}

pub fn h_entry(p: &TargetParams, d: &CrlbDims, nr: usize, k: usize, l: usize) -> Complex64 {
    let s = partial_sums(p, d, k, l);
    prefactor(p, d, nr) * s[0] * s[2]
}

/// Analytic `dh/d(tau, nu, omega, phase)`.
pub fn h_derivatives(p: &TargetParams, d: &CrlbDims, nr: usize, k: usize, l: usize) -> [Complex64; 4] {
    let s = partial_sums(p, d, k, l);
    let a = prefactor(p, d, nr);
    let j = Complex64::new(0.0, 1.0);
    [
        a * s[0] * s[3] * (-j * 2.0 * PI * d.subcarrier_spacing_hz),
        a * s[1] * s[2] * (j * 2.0 * PI * d.subsymbol_duration_s),
        a * s[0] * s[2] * (j * nr as f64),
        a * s[0] * s[2] * j,
    ]
}

/// Central difference of `h` in parameter `index` with step `step`.
pub fn h_finite_difference(p: &TargetParams, d: &CrlbDims, index: usize, step: f64, nr: usize, k: usize, l: usize) -> Complex64 {
    let v = p.as_array()[index];
    let plus = h_entry(&p.with(index, v + step), d, nr, k, l);
    let minus = h_entry(&p.with(index, v - step), d, nr, k, l);
    (plus - minus) / (2.0 * step)
}

/// `Re{ sum (dh)^H dh }` over all antennas and DD bins, without the
/// `2 P_avg / N0` factor.
pub fn assembled_information(p: &TargetParams, d: &CrlbDims) -> Matrix4<f64> {
    let mut a = Matrix4::<f64>::zeros();
    for nr in 0..d.n_rx {
        for k in 0..d.n {
            for l in 0..d.m {
                let g = h_derivatives(p, d, nr, k, l);
                for r in 0..4 {
                    for c in 0..4 {
                        a[(r, c)] += (g[r].conj() * g[c]).re;
                    }
                }
            }
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbRow {
    pub snr_db: f64,
    pub tau_s2: f64,
    pub nu_hz2: f64,
    pub omega_rad2: f64,
    pub omega_exact_rad2: f64,
    pub range_m2: f64,
    pub velocity_m2ps2: f64,
    /// `omega` bound mapped to the angle at the reference angle.
    pub angle_rad2: f64,
    pub angle_exact_rad2: f64,
}

/// Bounds versus SNR. The angle bound uses the first-order mapping
/// `d omega = 2pi g_r cos(phi) / lambda d phi` at `reference_angle_rad`.
pub fn crlb_curve(cfg: &SystemConfig, snrs_db: &[f64], beta_mag: f64, reference_angle_rad: f64) -> Vec<CrlbRow> {
    let d = CrlbDims::from_config(cfg);
    let lambda = cfg.wavelength_m();
    let slope = 2.0 * PI * cfg.rx_spacing_wavelengths * reference_angle_rad.cos();
    snrs_db
        .iter()
        .map(|&snr_db| {
            let b = crlb_closed_form(&d, snr_db, beta_mag);
            CrlbRow {
                snr_db,
                tau_s2: b.tau,
                nu_hz2: b.nu,
                omega_rad2: b.omega,
                omega_exact_rad2: b.omega_exact,
                range_m2: (SPEED_OF_LIGHT / 2.0).powi(2) * b.tau,
                velocity_m2ps2: (lambda / 2.0).powi(2) * b.nu,
                angle_rad2: b.omega / (slope * slope),
                angle_exact_rad2: b.omega_exact / (slope * slope),
            }
        })
        .collect()
}
