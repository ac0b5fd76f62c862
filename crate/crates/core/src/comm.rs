//! Communication chain: QPSK mapping, DD placement around the empty bins,
//! ISFFT and zero-forcing at the transmitter; LMMSE equalization, modified
//! SFFT and hard demapping at the receiver.
//!
//! The equalizer works per TF bin. The DD channel of every antenna pair is
//! `U^H D U` with `U` the unitary 2D DFT and `D` the diagonal TF response, so
//! the DD-domain LMMSE estimate `(H^H H + N0 I)^-1 H^H y` maps to the TF
//! domain as `(D^H D + N0 I)^-1 D^H Y` solved independently for each bin.
//! [`lmmse_equalize`] keeps the dense form for small problems and tests.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::allocation::{zero_force, BinAllocation};
use crate::channel::{dd_channel_operator, CommChannel, SystemConfig};
use crate::error::{Error, Result};
use crate::grid::{DdGrid, TfGrid};
use crate::transforms::{place_around, ModifiedSfft, SfftPlan};

pub const QPSK_BITS_PER_SYMBOL: u32 = 2;

/// Gray-mapped QPSK: `((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn qpsk_map(bits: &[u8]) -> Vec<Complex64> {
    assert!(bits.len().is_multiple_of(2), "QPSK needs an even number of bits");
    bits.chunks_exact(2)
        .map(|b| Complex64::new(1.0 - 2.0 * b[0] as f64, 1.0 - 2.0 * b[1] as f64) * FRAC_1_SQRT_2)
        .collect()
}

/// Nearest-point hard decision.
pub fn qpsk_demap(symbols: &[Complex64]) -> Vec<u8> {
    symbols.iter().flat_map(|s| [u8::from(s.re < 0.0), u8::from(s.im < 0.0)]).collect()
}

pub fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.random::<bool>())).collect()
}

/// Bits carried by one frame.
pub fn frame_bits(alloc: &BinAllocation, cfg: &SystemConfig) -> usize {
    QPSK_BITS_PER_SYMBOL as usize * alloc.total_info_symbols(cfg.n_doppler, cfg.m_delay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    /// Per antenna: information symbols placed around the empty bins.
    pub dd: Vec<DdGrid>,
    /// Per antenna: ISFFT of `dd` with the zero set forced to zero.
    pub tf: Vec<TfGrid>,
}

pub fn transmit_chain(bits: &[u8], alloc: &BinAllocation, cfg: &SystemConfig) -> Result<TxFrame> {
    let (n, m) = (cfg.n_doppler, cfg.m_delay);
    let expected = frame_bits(alloc, cfg);
    if bits.len() != expected {
        return Err(Error::BitCountMismatch { expected, got: bits.len() });
    }
    alloc.validate_grid(n, m)?;
    let plan = SfftPlan::new(n, m);
    let symbols = qpsk_map(bits);
    let mut offset = 0;
    let mut dd = Vec::with_capacity(alloc.n_tx());
    let mut tf = Vec::with_capacity(alloc.n_tx());
    for i in 0..alloc.n_tx() {
        let count = alloc.info_symbols(i, n, m);
        let x = place_around(n, m, alloc.empty_dd_bins(i), &symbols[offset..offset + count]);
        offset += count;
        tf.push(zero_force(&plan.isfft(&x), alloc, i));
        dd.push(x);
    }
    Ok(TxFrame { dd, tf })
}

/// Dense DD LMMSE: `x = (H^H H + s I)^-1 H^H y` via Cholesky.
pub fn lmmse_equalize(y: &DVector<Complex64>, h: &DMatrix<Complex64>, noise_var: f64) -> Result<DVector<Complex64>> {
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator has {} rows, receive vector {} entries",
            h.nrows(),
            y.len()
        )));
    }
    if !(noise_var > 0.0) {
        return Err(Error::config("noise_var", "must be positive"));
    }
    let hh = h.adjoint();
    let mut a = &hh * h;
    for i in 0..a.nrows() {
        a[(i, i)] += Complex64::new(noise_var, 0.0);
    }
    let b = hh * y;
    match a.clone().cholesky() {
        Some(c) => Ok(c.solve(&b)),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::DimensionMismatch("regularized normal matrix is singular".into())),
    }
}

/// Block DD operator `[h_(nc, nt)]` of size `(N_c NM) x (N_t NM)`.
pub fn block_channel_operator(channel: &CommChannel, cfg: &SystemConfig, cap: usize) -> Result<DMatrix<Complex64>> {
    let nm = cfg.nm();
    let (nc, nt) = (channel.n_comm(), channel.n_tx());
    let mut h = DMatrix::zeros(nc * nm, nt * nm);
    for c in 0..nc {
        for t in 0..nt {
            let blk = dd_channel_operator(channel, cfg, (c, t), cap)?;
            h.view_mut((c * nm, t * nm), (nm, nm)).copy_from(&blk);
        }
    }
    Ok(h)
}

/// Per-TF-bin LMMSE. `rx_tf` has one grid per comm antenna and `responses`
/// is indexed `[nc * n_tx + nt]`. `noise_var` is the DD-referenced `N0`.
pub fn lmmse_equalize_tf(rx_tf: &[TfGrid], responses: &[TfGrid], n_tx: usize, noise_var: f64) -> Result<Vec<TfGrid>> {
    let nc = rx_tf.len();
    if responses.len() != nc * n_tx {
        return Err(Error::DimensionMismatch(format!("{} responses for {nc} x {n_tx} antennas", responses.len())));
    }
    let first = rx_tf.first().ok_or_else(|| Error::DimensionMismatch("no receive antennas".into()))?;
    let (n, m) = (first.rows(), first.cols());
    let reg = noise_var.max(0.0);
    let mut out = vec![TfGrid::zeros(n, m); n_tx];
    let mut d = DMatrix::<Complex64>::zeros(nc, n_tx);
    let mut y = DVector::<Complex64>::zeros(nc);
    for b in 0..n * m {
        for c in 0..nc {
            y[c] = rx_tf[c].as_slice()[b];
            for t in 0..n_tx {
                d[(c, t)] = responses[c * n_tx + t].as_slice()[b];
            }
        }
        let dh = d.adjoint();
        let mut a = &dh * &d;
        for i in 0..n_tx {
            a[(i, i)] += Complex64::new(reg, 0.0);
        }
        let rhs = dh * &y;
        let x = match a.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            // Noiseless with a rank-deficient bin: minimum-norm solution.
            None => a.svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::DimensionMismatch(e.into()))?,
        };
        for (t, g) in out.iter_mut().enumerate() {
            g.as_mut_slice()[b] = x[t];
        }
    }
    Ok(out)
}

/// Receiver state that only depends on the allocation and grid size.
#[derive(Debug, Clone)]
pub struct Receiver {
    recover: Vec<ModifiedSfft>,
    plan: SfftPlan,
}

impl Receiver {
    pub fn new(alloc: &BinAllocation, cfg: &SystemConfig) -> Result<Self> {
        let (n, m) = (cfg.n_doppler, cfg.m_delay);
        alloc.validate_grid(n, m)?;
        let recover = (0..alloc.n_tx()).map(|i| alloc.modified_sfft(i, n, m)).collect::<Result<_>>()?;
        Ok(Self {
            recover,
            plan: SfftPlan::new(n, m),
        })
    }

    /// Equalized TF grids (one per transmit antenna) to bits.
    pub fn demap_tf(&self, tf_est: &[TfGrid]) -> Vec<u8> {
        assert_eq!(tf_est.len(), self.recover.len());
        tf_est.iter().zip(&self.recover).flat_map(|(tf, r)| qpsk_demap(&r.recover_dd(tf))).collect()
    }

    /// Equalized DD grids to bits: ISFFT, then the modified SFFT that ignores
    /// the zero-forced samples.
    pub fn recover_and_demap(&self, dd_est: &[DdGrid]) -> Vec<u8> {
        let tf: Vec<TfGrid> = dd_est.iter().map(|x| self.plan.isfft(x)).collect();
        self.demap_tf(&tf)
    }
}

pub fn bit_errors(a: &[u8], b: &[u8]) -> usize {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}
