//! Virtual-array sparse recovery.
//!
//! On a private TF bin only its owner transmits, so the ratio `Y_nr / X_p`
//! is a clean array response in which the transmit steering phase of the
//! owner shows up. Stacking those ratios over private bins and receive
//! antennas gives a virtual array. Targets are refined by matching it against
//! a dictionary of responses on a fine angle/Doppler/delay grid around each
//! coarse estimate, using OMP, and several randomly offset grids are combined
//! by voting.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::BinAllocation;
use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::grid::{Bin, TfGrid};
use crate::par;
use crate::rng::{sub_stream, Stream};

/// Private symbols smaller than this cannot be divided out.
pub const PRIVATE_SYMBOL_EPS: f64 = 1e-9;
pub const DEFAULT_DICTIONARY_CAP: usize = 250_000;
pub const DEFAULT_N_SOLVERS: usize = 64;
const RANK_TOL: f64 = 1e-10;

/// Row layout of a virtual array: private bins (with owners) outer, receive
/// antennas inner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VaLayout {
    pub private: Vec<(usize, Bin)>,
    pub n_rx: usize,
}

impl VaLayout {
    pub fn new(alloc: &BinAllocation, n_rx: usize) -> Self {
        Self {
            private: alloc.private_bins_by_owner(),
            n_rx,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.private.len() * self.n_rx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSnapshot {
    /// Entry `p * N_r + n_r` is `Y_nr[n_p, m_p] / X_p[n_p, m_p]`.
    pub values: Vec<Complex64>,
    pub layout: VaLayout,
}

/// Builds the virtual snapshot from the received TF grids and the transmitted
/// (zero-forced) TF grids.
pub fn build_virtual_snapshot(rx_tf: &[TfGrid], tx_tf: &[TfGrid], alloc: &BinAllocation) -> Result<VirtualSnapshot> {
    if tx_tf.len() != alloc.n_tx() {
        return Err(Error::DimensionMismatch(format!(
            "{} transmit grids for {} antennas",
            tx_tf.len(),
            alloc.n_tx()
        )));
    }
    let layout = VaLayout::new(alloc, rx_tf.len());
    let mut values = Vec::with_capacity(layout.n_rows());
    for &(owner, bin) in &layout.private {
        let g = &tx_tf[owner];
        if bin.row >= g.rows() || bin.col >= g.cols() {
            return Err(Error::BinOutOfRange(bin.row, bin.col));
        }
        let x = g.get(bin);
        if x.norm() < PRIVATE_SYMBOL_EPS {
            return Err(Error::ZeroPrivateSymbol(bin.row, bin.col));
        }
        values.extend(rx_tf.iter().map(|y| y.get(bin) / x));
    }
    Ok(VirtualSnapshot { values, layout })
}

/// One axis of a discretized neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub center: f64,
    pub step: f64,
    /// Zero pins the axis to `center`.
    pub width: f64,
}

impl Axis {
    pub fn new(center: f64, step: f64, width: f64) -> Self {
        Self { center, step, width }
    }

    pub fn pinned(center: f64) -> Self {
        Self { center, step: 1.0, width: 0.0 }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::config(format!("{name}.step"), "must be positive"));
        }
        if !(self.width == 0.0 || self.width >= self.step) {
            return Err(Error::config(format!("{name}.width"), "must be zero or at least one step"));
        }
        Ok(())
    }

    /// Number of steps spanning the width; there are `intervals + 1` points and
    /// `intervals + 1` admissible offsets.
    pub fn intervals(&self) -> usize {
        (self.width / self.step).round() as usize
    }

    /// Grid for offset `lambda = i * step / width`: the window
    /// `[center - lambda W, center + (1 - lambda) W]`.
    pub fn points(&self, offset_index: usize) -> Vec<f64> {
        let n = self.intervals();
        let i = offset_index.min(n) as f64;
        (0..=n).map(|q| self.center + (q as f64 - i) * self.step).collect()
    }

    /// Centered window, used by a single solver.
    pub fn centered_offset(&self) -> usize {
        self.intervals() / 2
    }

    /// Lattice index of `v` relative to `center`.
    pub fn lattice_index(&self, v: f64) -> i64 {
        ((v - self.center) / self.step).round() as i64
    }
}

/// Neighbourhood of one coarse target. Angle in radians, Doppler in Hz,
/// delay in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub angle: Axis,
    pub doppler: Axis,
    pub delay: Axis,
}

impl DiscretizationSpec {
    pub fn validate(&self) -> Result<()> {
        self.angle.validate("angle")?;
        self.doppler.validate("doppler")?;
        self.delay.validate("delay")
    }

    pub fn n_points(&self) -> usize {
        (self.angle.intervals() + 1) * (self.doppler.intervals() + 1) * (self.delay.intervals() + 1)
    }

    pub fn centered_offsets(&self) -> Offsets {
        [self.angle.centered_offset(), self.doppler.centered_offset(), self.delay.centered_offset()]
    }

    fn axes(&self) -> [&Axis; 3] {
        [&self.angle, &self.doppler, &self.delay]
    }
}

/// Offset indices `i` (so `lambda = i * step / width`) for angle, Doppler, delay.
pub type Offsets = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    /// Which neighbourhood the column belongs to.
    pub target: usize,
    pub angle: f64,
    pub doppler: f64,
    pub delay: f64,
}

#[derive(Debug, Clone)]
struct TargetGrid {
    angles: Vec<f64>,
    dopplers: Vec<f64>,
    delays: Vec<f64>,
}

impl TargetGrid {
    fn len(&self) -> usize {
        self.angles.len() * self.dopplers.len() * self.delays.len()
    }
}

/// Column ordering shared by the dictionary variants: target, then angle,
/// Doppler, delay (fastest).
#[derive(Debug, Clone)]
struct GridSet {
    targets: Vec<TargetGrid>,
    starts: Vec<usize>,
    total: usize,
}

impl GridSet {
    fn new(specs: &[DiscretizationSpec], offsets: &[Offsets], cap: usize) -> Result<Self> {
        assert_eq!(specs.len(), offsets.len(), "one offset triple per target");
        let mut targets = Vec::with_capacity(specs.len());
        let mut starts = Vec::with_capacity(specs.len());
        let mut total = 0usize;
        for (s, o) in specs.iter().zip(offsets) {
            s.validate()?;
            let t = TargetGrid {
                angles: s.angle.points(o[0]),
                dopplers: s.doppler.points(o[1]),
                delays: s.delay.points(o[2]),
            };
            starts.push(total);
            total += t.len();
            targets.push(t);
        }
        if total == 0 {
            return Err(Error::config("ssr.neighbourhoods", "dictionary grid is empty"));
        }
        if total > cap {
            return Err(Error::DictionaryTooLarge { columns: total, cap });
        }
        Ok(Self { targets, starts, total })
    }

    fn locate(&self, col: usize) -> (usize, usize, usize, usize) {
        let t = self.starts.partition_point(|&s| s <= col) - 1;
        let g = &self.targets[t];
        let r = col - self.starts[t];
        let nd = g.delays.len();
        let nv = g.dopplers.len();
        (t, r / (nv * nd), (r / nd) % nv, r % nd)
    }

    fn point(&self, col: usize) -> GridPoint {
        let (t, a, v, d) = self.locate(col);
        let g = &self.targets[t];
        GridPoint {
            target: t,
            angle: g.angles[a],
            doppler: g.dopplers[v],
            delay: g.delays[d],
        }
    }
}

/// Angle part of a column: `exp(j2pi(n_r g_r - p g_t) sin(phi) / lambda)`,
/// with `p` the owner antenna of the private bin.
fn angle_vector(layout: &VaLayout, cfg: &SystemConfig, angle: f64) -> Vec<Complex64> {
    let s = angle.sin();
    let mut out = Vec::with_capacity(layout.n_rows());
    for &(owner, _) in &layout.private {
        for nr in 0..layout.n_rx {
            let phase = 2.0 * PI * (nr as f64 * cfg.rx_spacing_wavelengths - owner as f64 * cfg.tx_spacing_wavelengths) * s;
            out.push(Complex64::from_polar(1.0, phase));
        }
    }
    out
}

/// Delay-Doppler part per private bin:
/// `exp(-j2pi nu tau) exp(j2pi(nu n_p dt - m_p df tau))`.
fn dd_vector(layout: &VaLayout, cfg: &SystemConfig, doppler: f64, delay: f64) -> Vec<Complex64> {
    let dt = cfg.subsymbol_duration_s();
    let df = cfg.subcarrier_spacing_hz;
    layout
        .private
        .iter()
        .map(|&(_, b)| {
            let phase = -2.0 * PI * doppler * delay + 2.0 * PI * (doppler * b.row as f64 * dt - b.col as f64 * df * delay);
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

/// Un-normalized dictionary entry for row `(p, n_r)` and a grid point.
pub fn dictionary_entry(layout: &VaLayout, cfg: &SystemConfig, row: usize, point: &GridPoint) -> Complex64 {
    let (p, nr) = (row / layout.n_rx, row % layout.n_rx);
    let (owner, b) = layout.private[p];
    let dt = cfg.subsymbol_duration_s();
    let df = cfg.subcarrier_spacing_hz;
    let (phi, nu, tau) = (point.angle, point.doppler, point.delay);
    let a = 2.0 * PI * (nr as f64 * cfg.rx_spacing_wavelengths - owner as f64 * cfg.tx_spacing_wavelengths) * phi.sin();
    Complex64::from_polar(1.0, a)
        * Complex64::from_polar(1.0, -2.0 * PI * nu * tau)
        * Complex64::from_polar(1.0, 2.0 * PI * (nu * b.row as f64 * dt - b.col as f64 * df * tau))
}

/// Column-normalized dictionary.
pub trait Dictionary {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn point(&self, col: usize) -> GridPoint;
    /// Norm of column `col` before normalization.
    fn column_norm(&self, col: usize) -> f64;
    /// Normalized column.
    fn column(&self, col: usize) -> Vec<Complex64>;
    /// `out[c] = column(c)^H r`.
    fn correlate(&self, r: &[Complex64], out: &mut [Complex64]);
}

/// Explicit matrix; used for small problems and as the reference in tests.
#[derive(Debug, Clone)]
pub struct DenseDictionary {
    pub points: Vec<GridPoint>,
    pub matrix: DMatrix<Complex64>,
    pub column_norms: Vec<f64>,
}

fn normalize_columns(matrix: &mut DMatrix<Complex64>) -> Vec<f64> {
    matrix
        .column_iter_mut()
        .map(|mut col| {
            let n = col.norm();
            if n > 0.0 {
                col.unscale_mut(n);
            }
            n
        })
        .collect()
}

impl DenseDictionary {
    pub fn build(layout: &VaLayout, cfg: &SystemConfig, specs: &[DiscretizationSpec], offsets: &[Offsets], cap: usize) -> Result<Self> {
        let grid = GridSet::new(specs, offsets, cap)?;
        let rows = layout.n_rows();
        let points: Vec<GridPoint> = (0..grid.total).map(|c| grid.point(c)).collect();
        let mut matrix = DMatrix::from_fn(rows, grid.total, |r, c| dictionary_entry(layout, cfg, r, &points[c]));
        let column_norms = normalize_columns(&mut matrix);
        Ok(Self { points, matrix, column_norms })
    }

    /// Arbitrary matrix with columns normalized in place. Grid points are
    /// placeholders carrying the column index in `angle`.
    pub fn from_matrix(mut matrix: DMatrix<Complex64>) -> Self {
        let column_norms = normalize_columns(&mut matrix);
        let points = (0..matrix.ncols())
            .map(|c| GridPoint {
                target: 0,
                angle: c as f64,
                doppler: 0.0,
                delay: 0.0,
            })
            .collect();
        Self { points, matrix, column_norms }
    }
}

impl Dictionary for DenseDictionary {
    fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn point(&self, col: usize) -> GridPoint {
        self.points[col]
    }

    fn column_norm(&self, col: usize) -> f64 {
        self.column_norms[col]
    }

    fn column(&self, col: usize) -> Vec<Complex64> {
        self.matrix.column(col).iter().copied().collect()
    }

    fn correlate(&self, r: &[Complex64], out: &mut [Complex64]) {
        for (o, col) in out.iter_mut().zip(self.matrix.column_iter()) {
            *o = col.iter().zip(r).map(|(a, b)| a.conj() * b).sum();
        }
    }
}

/// Factored dictionary: every column is `angle part (x) per-bin DD part`, so
/// correlation first beamforms over receive antennas per private bin and then
/// combines `N_p` values per DD point. Every entry has unit modulus, so every
/// column norm is `sqrt(rows)`.
#[derive(Debug, Clone)]
pub struct SeparableDictionary {
    grid: GridSet,
    n_rx: usize,
    n_private: usize,
    /// Per target, per angle: `rows` values.
    angle_parts: Vec<Vec<Vec<Complex64>>>,
    /// Per target, per (Doppler, delay): `N_p` values.
    dd_parts: Vec<Vec<Vec<Complex64>>>,
}

impl SeparableDictionary {
    pub fn build(layout: &VaLayout, cfg: &SystemConfig, specs: &[DiscretizationSpec], offsets: &[Offsets], cap: usize) -> Result<Self> {
        let grid = GridSet::new(specs, offsets, cap)?;
        let angle_parts = grid
            .targets
            .iter()
            .map(|t| t.angles.iter().map(|&a| angle_vector(layout, cfg, a)).collect())
            .collect();
        let dd_parts = grid
            .targets
            .iter()
            .map(|t| {
                t.dopplers
                    .iter()
                    .flat_map(|&v| t.delays.iter().map(move |&d| (v, d)))
                    .map(|(v, d)| dd_vector(layout, cfg, v, d))
                    .collect()
            })
            .collect();
        Ok(Self {
            grid,
            n_rx: layout.n_rx,
            n_private: layout.private.len(),
            angle_parts,
            dd_parts,
        })
    }

    fn norm(&self) -> f64 {
        ((self.n_rx * self.n_private) as f64).sqrt()
    }
}

impl Dictionary for SeparableDictionary {
    fn n_rows(&self) -> usize {
        self.n_rx * self.n_private
    }

    fn n_cols(&self) -> usize {
        self.grid.total
    }

    fn point(&self, col: usize) -> GridPoint {
        self.grid.point(col)
    }

    fn column_norm(&self, _col: usize) -> f64 {
        self.norm()
    }

    fn column(&self, col: usize) -> Vec<Complex64> {
        let (t, a, v, d) = self.grid.locate(col);
        let nd = self.grid.targets[t].delays.len();
        let ap = &self.angle_parts[t][a];
        let dp = &self.dd_parts[t][v * nd + d];
        let s = 1.0 / self.norm();
        ap.iter().enumerate().map(|(row, x)| x * dp[row / self.n_rx] * s).collect()
    }

    fn correlate(&self, r: &[Complex64], out: &mut [Complex64]) {
        let s = 1.0 / self.norm();
        let mut beam = vec![Complex64::new(0.0, 0.0); self.n_private];
        for (t, tg) in self.grid.targets.iter().enumerate() {
            let n_dd = tg.dopplers.len() * tg.delays.len();
            for (a, ap) in self.angle_parts[t].iter().enumerate() {
                for (p, b) in beam.iter_mut().enumerate() {
                    let rows = p * self.n_rx..(p + 1) * self.n_rx;
                    *b = ap[rows.clone()].iter().zip(&r[rows]).map(|(x, y)| x.conj() * y).sum();
                }
                let base = self.grid.starts[t] + a * n_dd;
                for (j, dp) in self.dd_parts[t].iter().enumerate() {
                    out[base + j] = dp.iter().zip(&beam).map(|(x, y)| x.conj() * y).sum::<Complex64>() * s;
                }
            }
        }
    }
}

/// OMP stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Exactly `K` atoms.
    Sparsity(usize),
    /// Until the residual norm drops to `eps` (at most `rows` atoms).
    Residual(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub support: Vec<usize>,
    /// Coefficients on the normalized columns.
    pub coefficients: Vec<Complex64>,
    /// Coefficients on the un-normalized columns, i.e. amplitude estimates.
    pub amplitudes: Vec<Complex64>,
    /// Residual norm before the first and after every iteration.
    pub residual_history: Vec<f64>,
    /// The selected columns were linearly dependent; the pseudo-inverse was used.
    pub rank_deficient: bool,
}

impl OmpResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }
}

/// Least squares on the selected columns via SVD. Returns the coefficients and
/// whether the columns were rank deficient.
fn least_squares(cols: &[Vec<Complex64>], r: &[Complex64]) -> (Vec<Complex64>, bool) {
    let a = DMatrix::from_fn(r.len(), cols.len(), |i, j| cols[j][i]);
    let b = DMatrix::from_column_slice(r.len(), 1, r);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let deficient = svd.singular_values.iter().any(|&s| s <= tol);
    let x = svd.solve(&b, tol).expect("U and V were computed");
    (x.iter().copied().collect(), deficient)
}

pub fn omp<D: Dictionary + ?Sized>(snapshot: &[Complex64], dict: &D, stop: StopRule) -> Result<OmpResult> {
    let rows = dict.n_rows();
    if snapshot.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "snapshot has {} entries, dictionary {} rows",
            snapshot.len(),
            rows
        )));
    }
    let max_atoms = match stop {
        StopRule::Sparsity(k) => {
            if k > rows {
                return Err(Error::config("ssr.sparsity", format!("K = {k} exceeds {rows} rows")));
            }
            k
        }
        StopRule::Residual(_) => rows,
    }
    .min(dict.n_cols());

    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut residual = snapshot.to_vec();
    let mut history = vec![norm(&residual)];
    let mut support: Vec<usize> = Vec::new();
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    let mut coefficients = Vec::new();
    let mut rank_deficient = false;
    let mut corr = vec![Complex64::new(0.0, 0.0); dict.n_cols()];

    while support.len() < max_atoms {
        if let StopRule::Residual(eps) = stop {
            if *history.last().unwrap() <= eps {
                break;
            }
        }
        dict.correlate(&residual, &mut corr);
        let best = corr
            .iter()
            .enumerate()
            .filter(|(c, _)| !support.contains(c))
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c);
        let Some(best) = best else { break };
        support.push(best);
        cols.push(dict.column(best));
        let (x, deficient) = least_squares(&cols, snapshot);
        rank_deficient |= deficient;
        residual.copy_from_slice(snapshot);
        for (col, xi) in cols.iter().zip(&x) {
            for (r, c) in residual.iter_mut().zip(col) {
                *r -= c * xi;
            }
        }
        coefficients = x;
        // The projection can only shrink the residual; clamp rounding noise.
        let prev = *history.last().unwrap();
        history.push(norm(&residual).min(prev));
    }
    let amplitudes = support
        .iter()
        .zip(&coefficients)
        .map(|(&c, x)| {
            let n = dict.column_norm(c);
            if n > 0.0 {
                x / n
            } else {
                *x
            }
        })
        .collect();
    Ok(OmpResult {
        support,
        coefficients,
        amplitudes,
        residual_history: history,
        rank_deficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsrConfig {
    pub n_solvers: usize,
    pub stop: Option<StopRule>,
    pub dictionary_cap: usize,
}

impl Default for SsrConfig {
    fn default() -> Self {
        Self {
            n_solvers: DEFAULT_N_SOLVERS,
            stop: None,
            dictionary_cap: DEFAULT_DICTIONARY_CAP,
        }
    }
}

/// One solver's view of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverPick {
    pub solver: usize,
    pub point: GridPoint,
    pub amplitude: Complex64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsrEstimate {
    pub target: usize,
    pub angle: f64,
    pub doppler: f64,
    pub delay: f64,
    pub amplitude: Complex64,
    /// Votes behind the angle, Doppler and delay modes.
    pub votes: [usize; 3],
    /// Solvers that placed an atom in this target's neighbourhood.
    pub voters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedSsrResult {
    /// One entry per neighbourhood that received at least one vote.
    pub estimates: Vec<SsrEstimate>,
    pub picks: Vec<SolverPick>,
}

/// Draws the per-target, per-axis offsets of one solver.
pub fn draw_offsets<R: Rng + ?Sized>(specs: &[DiscretizationSpec], rng: &mut R) -> Vec<Offsets> {
    specs
        .iter()
        .map(|s| {
            let [a, v, d] = s.axes();
            [
                rng.random_range(0..=a.intervals()),
                rng.random_range(0..=v.intervals()),
                rng.random_range(0..=d.intervals()),
            ]
        })
        .collect()
}

/// Strongest atom per target and its amplitude, `None` if OMP chose none.
pub type TargetPicks = Vec<Option<(GridPoint, Complex64)>>;

/// One solver: dictionary with the given offsets, OMP, and per-target picks
/// (the strongest atom inside each target's neighbourhood).
pub fn solve_once(
    snapshot: &VirtualSnapshot,
    cfg: &SystemConfig,
    specs: &[DiscretizationSpec],
    offsets: &[Offsets],
    ssr: &SsrConfig,
) -> Result<(OmpResult, TargetPicks)> {
    let dict = SeparableDictionary::build(&snapshot.layout, cfg, specs, offsets, ssr.dictionary_cap)?;
    let stop = ssr.stop.unwrap_or(StopRule::Sparsity(specs.len()));
    let res = omp(&snapshot.values, &dict, stop)?;
    let mut picks: TargetPicks = vec![None; specs.len()];
    for (&c, amp) in res.support.iter().zip(&res.amplitudes) {
        let p = dict.point(c);
        let slot = &mut picks[p.target];
        if slot.is_none_or(|(_, a)| amp.norm() > a.norm()) {
            *slot = Some((p, *amp));
        }
    }
    Ok((res, picks))
}

/// Bagged SSR: `n_solvers` OMP runs on randomly offset grids, combined per
/// target by the most frequent lattice value on each axis. Ties go to the
/// value backed by the solver with the smallest final residual.
pub fn averaged_ssr(
    snapshot: &VirtualSnapshot,
    cfg: &SystemConfig,
    specs: &[DiscretizationSpec],
    ssr: &SsrConfig,
    seed: u64,
    trial: u64,
) -> Result<AveragedSsrResult> {
    if ssr.n_solvers == 0 {
        return Err(Error::config("ssr.n_solvers", "must be at least 1"));
    }
    let runs = par::map_indexed(ssr.n_solvers, |s| {
        let mut rng = sub_stream(seed, trial, Stream::SsrOffsets, s as u64);
        let offsets = draw_offsets(specs, &mut rng);
        solve_once(snapshot, cfg, specs, &offsets, ssr)
    });
    let mut picks = Vec::new();
    for (s, run) in runs.into_iter().enumerate() {
        let (res, per_target) = run?;
        let residual = res.final_residual();
        for (point, amplitude) in per_target.into_iter().flatten() {
            picks.push(SolverPick {
                solver: s,
                point,
                amplitude,
                residual,
            });
        }
    }
    let estimates = (0..specs.len()).filter_map(|t| vote(t, &specs[t], &picks)).collect();
    Ok(AveragedSsrResult { estimates, picks })
}

fn vote(target: usize, spec: &DiscretizationSpec, picks: &[SolverPick]) -> Option<SsrEstimate> {
    let mine: Vec<&SolverPick> = picks.iter().filter(|p| p.point.target == target).collect();
    if mine.is_empty() {
        return None;
    }
    // Marginal mode on one axis: (lattice index, votes, best residual).
    let mode = |axis: &Axis, get: fn(&GridPoint) -> f64| -> (i64, usize) {
        let mut tally: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
        for p in &mine {
            let e = tally.entry(axis.lattice_index(get(&p.point))).or_insert((0, f64::INFINITY));
            e.0 += 1;
            e.1 = e.1.min(p.residual);
        }
        let (q, (n, _)) = tally
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.total_cmp(&a.1 .1)))
            .expect("non-empty");
        (q, n)
    };
    let (qa, na) = mode(&spec.angle, |p| p.angle);
    let (qv, nv) = mode(&spec.doppler, |p| p.doppler);
    let (qd, nd) = mode(&spec.delay, |p| p.delay);
    let at = |axis: &Axis, q: i64| axis.center + q as f64 * axis.step;
    let amplitude = mine
        .iter()
        .filter(|p| spec.angle.lattice_index(p.point.angle) == qa)
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .map(|p| p.amplitude)
        .unwrap_or_default();
    Some(SsrEstimate {
        target,
        angle: at(&spec.angle, qa),
        doppler: at(&spec.doppler, qv),
        delay: at(&spec.delay, qd),
        amplitude,
        votes: [na, nv, nd],
        voters: mine.len(),
    })
}
