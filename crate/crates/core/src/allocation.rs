//! Shared/private bin bookkeeping.
//!
//! Antenna `i` owns the private TF bins `P_i`. Every other antenna zero-forces
//! them, so `Z_i` is the union of the other antennas' private bins. To keep the
//! DD information recoverable after zero-forcing, antenna `i` leaves
//! `|E_i| = |Z_i|` DD bins empty.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Bin, TfGrid};
use crate::transforms::ModifiedSfft;
use num_complex::Complex64;

/// How the empty DD bins `E_i` are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmptyBinPolicy {
    /// `E_i` holds the same `(row, col)` pairs as `Z_i`.
    #[default]
    MirrorZeroed,
    /// `E_i` is the first `|Z_i|` diagonal bins `(0,0), (1,1), ...`.
    LeadingDiagonal,
    /// Bins chosen greedily so the `Z_i x E_i` block of the 2D DFT is as close
    /// to orthogonal as possible, which keeps the modified SFFT well
    /// conditioned. Needs the grid size.
    Conditioned { n_doppler: usize, m_delay: usize },
    /// Caller-supplied sets, one per antenna.
    Explicit(Vec<Vec<Bin>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinAllocation {
    n_tx: usize,
    private: Vec<Vec<Bin>>,
    zero: Vec<Vec<Bin>>,
    empty_dd: Vec<Vec<Bin>>,
}

impl BinAllocation {
    /// All-shared allocation: no private bins, nothing zero-forced.
    pub fn shared(n_tx: usize) -> Self {
        Self {
            n_tx,
            private: vec![Vec::new(); n_tx],
            zero: vec![Vec::new(); n_tx],
            empty_dd: vec![Vec::new(); n_tx],
        }
    }

    pub fn new(n_tx: usize, assignments: &[(usize, Bin)]) -> Result<Self> {
        Self::with_policy(n_tx, assignments, &EmptyBinPolicy::default())
    }

    pub fn with_policy(n_tx: usize, assignments: &[(usize, Bin)], policy: &EmptyBinPolicy) -> Result<Self> {
        let mut private = vec![BTreeSet::new(); n_tx];
        let mut seen = BTreeSet::new();
        for &(antenna, bin) in assignments {
            if antenna >= n_tx {
                return Err(Error::AntennaOutOfRange { index: antenna, n_tx });
            }
            if !seen.insert(bin) {
                return Err(Error::DuplicatePrivateBin(bin.row, bin.col));
            }
            private[antenna].insert(bin);
        }

        let zero: Vec<Vec<Bin>> = (0..n_tx)
            .map(|i| {
                let mut z: Vec<Bin> = private
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .flat_map(|(_, p)| p.iter().copied())
                    .collect();
                z.sort();
                z
            })
            .collect();

        let empty_dd = match policy {
            EmptyBinPolicy::MirrorZeroed => zero.clone(),
            EmptyBinPolicy::LeadingDiagonal => zero.iter().map(|z| (0..z.len()).map(|d| Bin::new(d, d)).collect()).collect(),
            &EmptyBinPolicy::Conditioned { n_doppler, m_delay } => {
                for z in zero.iter().flatten() {
                    if z.row >= n_doppler || z.col >= m_delay {
                        return Err(Error::BinOutOfRange(z.row, z.col));
                    }
                }
                zero.iter().map(|z| conditioned_empty_bins(z, n_doppler, m_delay)).collect()
            }
            EmptyBinPolicy::Explicit(sets) => {
                if sets.len() != n_tx {
                    return Err(Error::config("allocation.empty_dd", format!("expected {n_tx} sets, got {}", sets.len())));
                }
                let mut out = Vec::with_capacity(n_tx);
                for (i, s) in sets.iter().enumerate() {
                    let sorted: BTreeSet<Bin> = s.iter().copied().collect();
                    if sorted.len() != zero[i].len() {
                        return Err(Error::config(
                            "allocation.empty_dd",
                            format!("antenna {i}: |E_i| = {} but |Z_i| = {}", sorted.len(), zero[i].len()),
                        ));
                    }
                    out.push(sorted.into_iter().collect());
                }
                out
            }
        };

        Ok(Self {
            n_tx,
            private: private.into_iter().map(|p| p.into_iter().collect()).collect(),
            zero,
            empty_dd,
        })
    }

    /// `n_private` private bins on the TF diagonal: bin `(p, p)` belongs to
    /// antenna `p mod n_tx`.
    pub fn diagonal(n_tx: usize, n_private: usize, policy: &EmptyBinPolicy) -> Result<Self> {
        let assignments: Vec<(usize, Bin)> = (0..n_private).map(|p| (p % n_tx, Bin::new(p, p))).collect();
        Self::with_policy(n_tx, &assignments, policy)
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    /// `N_p`, the total number of private bins.
    pub fn n_private(&self) -> usize {
        self.private.iter().map(Vec::len).sum()
    }

    pub fn private_bins(&self, antenna: usize) -> &[Bin] {
        &self.private[antenna]
    }

    pub fn zero_bins(&self, antenna: usize) -> &[Bin] {
        &self.zero[antenna]
    }

    pub fn empty_dd_bins(&self, antenna: usize) -> &[Bin] {
        &self.empty_dd[antenna]
    }

    /// Private bins with their owners, ordered by owner then bin. This is the
    /// row order of the virtual array.
    pub fn private_bins_by_owner(&self) -> Vec<(usize, Bin)> {
        self.private.iter().enumerate().flat_map(|(i, p)| p.iter().map(move |b| (i, *b))).collect()
    }

    /// Information symbols antenna `antenna` carries on an `n x m` grid.
    pub fn info_symbols(&self, antenna: usize, n: usize, m: usize) -> usize {
        n * m - self.empty_dd[antenna].len()
    }

    pub fn total_info_symbols(&self, n: usize, m: usize) -> usize {
        (0..self.n_tx).map(|i| self.info_symbols(i, n, m)).sum()
    }

    /// Checks every bin lies on the `n x m` grid.
    pub fn validate_grid(&self, n: usize, m: usize) -> Result<()> {
        for b in self.private.iter().chain(&self.empty_dd).flatten() {
            if b.row >= n || b.col >= m {
                return Err(Error::BinOutOfRange(b.row, b.col));
            }
        }
        Ok(())
    }

    pub fn modified_sfft(&self, antenna: usize, n: usize, m: usize) -> Result<ModifiedSfft> {
        if antenna >= self.n_tx {
            return Err(Error::AntennaOutOfRange {
                index: antenna,
                n_tx: self.n_tx,
            });
        }
        ModifiedSfft::build(n, m, &self.zero[antenna], &self.empty_dd[antenna])
    }
}

/// Greedy pivoted Gram-Schmidt over all DD bins in row-major order: each step
/// takes the bin whose DFT row restricted to `zero` has the largest component
/// orthogonal to the rows already taken.
fn conditioned_empty_bins(zero: &[Bin], n: usize, m: usize) -> Vec<Bin> {
    use std::f64::consts::PI;
    let r = zero.len();
    let row = |k: usize, l: usize| -> Vec<Complex64> {
        zero.iter()
            .map(|z| {
                let ph = -2.0 * PI * ((k * z.row) as f64 / n as f64 - (l * z.col) as f64 / m as f64);
                Complex64::from_polar(1.0, ph)
            })
            .collect()
    };
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(r);
    let mut chosen: Vec<Bin> = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best: Option<(f64, Bin, Vec<Complex64>)> = None;
        for k in 0..n {
            for l in 0..m {
                let b = Bin::new(k, l);
                if chosen.contains(&b) {
                    continue;
                }
                let mut v = row(k, l);
                for q in &basis {
                    let c: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= c * qi;
                    }
                }
                let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                if best.as_ref().is_none_or(|(bn, _, _)| norm > bn + 1e-9) {
                    best = Some((norm, b, v));
                }
            }
        }
        let (norm, b, v) = best.expect("grid has more bins than zero-forced samples");
        basis.push(v.into_iter().map(|x| x / norm).collect());
        chosen.push(b);
    }
    chosen.sort();
    chosen
}

/// Zeroes antenna `antenna`'s TF samples at `Z_antenna`.
pub fn zero_force(tf: &TfGrid, alloc: &BinAllocation, antenna: usize) -> TfGrid {
    assert!(antenna < alloc.n_tx(), "antenna out of range");
    let mut out = tf.clone();
    for b in alloc.zero_bins(antenna) {
        out[(b.row, b.col)] = Complex64::new(0.0, 0.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    pub symbols_total: usize,
    pub symbols_lost: usize,
    /// `N_p (N_t - 1) * bits_per_symbol * subcarrier spacing`.
    pub rate_loss_bits_per_s: f64,
    /// `(N_t - 1) * bits_per_symbol * subcarrier spacing`.
    pub rate_loss_per_private_bin_bits_per_s: f64,
    pub loss_fraction: f64,
}

pub fn rate_accounting(alloc: &BinAllocation, n: usize, m: usize, bits_per_symbol: u32, subcarrier_spacing_hz: f64) -> RateReport {
    let n_tx = alloc.n_tx();
    let n_p = alloc.n_private();
    let full = n_tx * n * m;
    let lost = n_p * n_tx.saturating_sub(1);
    let per_bin = n_tx.saturating_sub(1) as f64 * bits_per_symbol as f64 * subcarrier_spacing_hz;
    RateReport {
        symbols_total: full - lost,
        symbols_lost: lost,
        rate_loss_bits_per_s: n_p as f64 * per_bin,
        rate_loss_per_private_bin_bits_per_s: per_bin,
        loss_fraction: lost as f64 / full as f64,
    }
}
