//! Monte Carlo experiments. Each one flattens its sweep into independent
//! `(point, trial)` jobs, runs them through [`par::map_indexed`] and keeps
//! the results in job order, so the output does not depend on scheduling.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::scenario::{Center, EstimatorSettings, ExperimentKind, Scenario};
use crate::allocation::BinAllocation;
use crate::channel::{add_noise, radar_receive, tf_noise_variance, CommChannel, CommPath, SystemConfig, Target};
use crate::coarse::{angle_spectrum, coarse_estimate, AngleSpectrum, CoarseConfig, CoarseEstimate, PeakMode, SpectrumStrategy};
use crate::comm::{bit_errors, frame_bits, lmmse_equalize_tf, random_bits, transmit_chain, Receiver};
use crate::crlb::crlb_curve;
use crate::error::Result;
use crate::grid::{Bin, DdGrid, TfGrid};
use crate::par;
use crate::rng::{stream, sub_stream, Stream};
use crate::ssr::{averaged_ssr, build_virtual_snapshot, AveragedSsrResult, DiscretizationSpec, SsrConfig};
use crate::transforms::{SfftPlan, SfftScale};

/// One long-format row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub snr_db: f64,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
}

/// An extra CSV written next to the long-format file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub file: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, headers: &[&str]) -> Self {
        Self {
            file: file.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub records: Vec<Record>,
    pub tables: Vec<Table>,
}

/// Knobs that override the scenario from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub threads: Option<usize>,
}

/// Scenario with overrides applied.
pub fn resolve(scenario: &Scenario, opts: &RunOptions) -> Scenario {
    let mut s = scenario.clone();
    if let Some(seed) = opts.seed {
        s.system.seed = seed;
    }
    if let Some(t) = opts.trials {
        s.trials = t;
    }
    s
}

pub fn run_experiment(scenario: &Scenario, opts: &RunOptions) -> Result<ExperimentOutput> {
    let s = resolve(scenario, opts);
    s.validate()?;
    par::with_threads(opts.threads, || match s.experiment {
        ExperimentKind::Crlb => Ok(crlb_experiment(&s)),
        ExperimentKind::CoarseAngleMse => coarse_angle_experiment(&s),
        ExperimentKind::DdCorrelation => dd_correlation_experiment(&s),
        ExperimentKind::SsrAngle => ssr_angle_experiment(&s),
        ExperimentKind::SsrVelocity => ssr_velocity_experiment(&s),
        ExperimentKind::CommBer => comm_ber_experiment(&s),
        ExperimentKind::DemoSpectrum => demo_experiment(&s),
    })
}

/// Transmitted and received grids of one radar frame.
#[derive(Debug, Clone)]
pub struct RadarFrame {
    /// DD view of the transmitted TF grids (after zero-forcing).
    pub tx_dd: Vec<DdGrid>,
    pub tx_tf: Vec<TfGrid>,
    pub rx_tf: Vec<TfGrid>,
    pub rx_dd: Vec<DdGrid>,
}

/// Random QPSK frame through the monostatic channel plus noise at `cfg.snr_db`.
/// `noise_index` separates noise realizations of one trial.
pub fn simulate_radar(cfg: &SystemConfig, targets: &[Target], alloc: &BinAllocation, trial: u64, noise_index: u64) -> Result<RadarFrame> {
    let mut sym_rng = stream(cfg.seed, trial, Stream::Symbols);
    let bits = random_bits(frame_bits(alloc, cfg), &mut sym_rng);
    let frame = transmit_chain(&bits, alloc, cfg)?;
    let plan = SfftPlan::new(cfg.n_doppler, cfg.m_delay);
    let mut rx_tf = radar_receive(&frame.tf, targets, cfg);
    let mut noise_rng = sub_stream(cfg.seed, trial, Stream::RadarNoise, noise_index);
    add_noise(&mut rx_tf, tf_noise_variance(cfg), &mut noise_rng);
    let tx_dd = frame.tf.iter().map(|x| plan.sfft(x, SfftScale::Unit)).collect();
    let rx_dd = rx_tf.iter().map(|y| plan.sfft(y, SfftScale::Unit)).collect();
    Ok(RadarFrame {
        tx_dd,
        tx_tf: frame.tf,
        rx_tf,
        rx_dd,
    })
}

fn wrap_pi(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Uniform draw on `lo, lo + step, ..., <= hi`.
fn stepped<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2], step: f64) -> f64 {
    let n = ((hi - lo) / step).floor() as usize;
    lo + step * rng.random_range(0..=n) as f64
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn crlb_experiment(s: &Scenario) -> ExperimentOutput {
    let rows = crlb_curve(&s.system, &s.snr_db, 1.0, s.sweep.reference_angle_deg.to_radians());
    let mut table = Table::new(
        "crlb.csv",
        &[
            "snr_db",
            "tau_s2",
            "nu_hz2",
            "omega_rad2",
            "omega_exact_rad2",
            "range_m2",
            "velocity_m2ps2",
            "angle_rad2",
            "angle_exact_rad2",
        ],
    );
    let mut records = Vec::new();
    for r in &rows {
        let vals = [
            ("crlb_tau_s2", r.tau_s2),
            ("crlb_nu_hz2", r.nu_hz2),
            ("crlb_omega_rad2", r.omega_rad2),
            ("crlb_omega_exact_rad2", r.omega_exact_rad2),
            ("crlb_range_m2", r.range_m2),
            ("crlb_velocity_m2ps2", r.velocity_m2ps2),
            ("crlb_angle_rad2", r.angle_rad2),
            ("crlb_angle_exact_rad2", r.angle_exact_rad2),
        ];
        let mut row = vec![fmt(r.snr_db)];
        for (name, v) in vals {
            records.push(Record {
                snr_db: r.snr_db,
                trial: 0,
                metric: name.to_string(),
                value: v,
            });
            row.push(fmt(v));
        }
        table.push(row);
    }
    ExperimentOutput { records, tables: vec![table] }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Bounds table shared by the estimation experiments: `(snr_db, metric, value)`.
fn bounds_table(rows: impl IntoIterator<Item = (f64, String, f64)>) -> Table {
    let mut t = Table::new("bounds.csv", &["snr_db", "metric", "value"]);
    for (snr, m, v) in rows {
        t.push(vec![fmt(snr), m, fmt(v)]);
    }
    t
}

/// Squared spatial-frequency errors of the averaged and single-bin angle
/// estimates for one random target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseAngleTrial {
    pub omega_true: f64,
    pub omega_averaged: f64,
    pub omega_single: f64,
}

impl CoarseAngleTrial {
    pub fn sq_err_averaged(&self) -> f64 {
        wrap_pi(self.omega_averaged - self.omega_true).powi(2)
    }

    pub fn sq_err_single(&self) -> f64 {
        wrap_pi(self.omega_single - self.omega_true).powi(2)
    }
}

/// Bin used by the single-bin estimator.
pub const SINGLE_BIN: Bin = Bin { row: 0, col: 0 };

/// Random single-target draw for `trial`: angle uniform in the sweep range,
/// range and velocity on the sweep steps, unit gain with random phase.
pub fn random_target(s: &Scenario, trial: u64) -> Target {
    let mut rng = stream(s.system.seed, trial, Stream::Scenario);
    let angle = uniform(&mut rng, s.sweep.angle_range_deg);
    let range = stepped(&mut rng, s.sweep.range_range_m, s.sweep.range_step_m);
    let velocity = stepped(&mut rng, s.sweep.velocity_range_mps, s.sweep.velocity_step_mps);
    let phase = rng.random_range(0.0..2.0 * PI);
    Target::from_range_velocity(angle, range, velocity, Complex64::from_polar(1.0, phase), s.system.carrier_frequency_hz)
}

pub fn coarse_angle_trial(cfg: &SystemConfig, target: &Target, pad: usize, trial: u64, noise_index: u64) -> Result<CoarseAngleTrial> {
    let alloc = BinAllocation::shared(cfg.n_tx);
    let f = simulate_radar(cfg, std::slice::from_ref(target), &alloc, trial, noise_index)?;
    let avg = angle_spectrum(&f.rx_dd, cfg, PeakMode::Count(1), pad, SpectrumStrategy::Averaged)?;
    let single = angle_spectrum(&f.rx_dd, cfg, PeakMode::Count(1), pad, SpectrumStrategy::SingleBin(Some(SINGLE_BIN)))?;
    Ok(CoarseAngleTrial {
        omega_true: cfg.spatial_frequency(target.angle_rad),
        omega_averaged: avg.peak_omegas[0],
        omega_single: single.peak_omegas[0],
    })
}

/// Mean squared spatial-frequency error of rounding a uniform value to the
/// padded DFT grid.
pub fn omega_discretization_floor(n_rx: usize, pad: usize) -> f64 {
    let d = 2.0 * PI / (n_rx * pad) as f64;
    d * d / 12.0
}

fn coarse_angle_experiment(s: &Scenario) -> Result<ExperimentOutput> {
    let nrs = s.n_rx_values();
    let pad = s.estimator.pad_factor;
    let points: Vec<(usize, f64)> = nrs.iter().flat_map(|&nr| s.snr_db.iter().map(move |&snr| (nr, snr))).collect();
    let n_jobs = points.len() * s.trials;
    let results = par::map_indexed(n_jobs, |j| {
        let (p, trial) = (j / s.trials, j % s.trials);
        let (nr, snr) = points[p];
        let cfg = SystemConfig {
            n_rx: nr,
            snr_db: snr,
            ..s.system.clone()
        };
        let t = random_target(s, trial as u64);
        coarse_angle_trial(&cfg, &t, pad, trial as u64, p as u64)
    });
    let mut records = Vec::with_capacity(n_jobs * 2);
    for (j, r) in results.into_iter().enumerate() {
        let r = r?;
        let (p, trial) = (j / s.trials, j % s.trials);
        let (nr, snr) = points[p];
        for (name, v) in [("averaged", r.sq_err_averaged()), ("single_bin", r.sq_err_single())] {
            records.push(Record {
                snr_db: snr,
                trial,
                metric: format!("nr{nr}_{name}_omega_sq_err"),
                value: v,
            });
        }
    }
    let mut bounds = Vec::new();
    for &nr in &nrs {
        let cfg = SystemConfig { n_rx: nr, ..s.system.clone() };
        for row in crlb_curve(&cfg, &s.snr_db, 1.0, 0.0) {
            bounds.push((row.snr_db, format!("nr{nr}_crlb_omega_rad2"), row.omega_rad2));
            bounds.push((row.snr_db, format!("nr{nr}_crlb_omega_exact_rad2"), row.omega_exact_rad2));
            bounds.push((row.snr_db, format!("nr{nr}_discretization_floor_rad2"), omega_discretization_floor(nr, pad)));
        }
    }
    Ok(ExperimentOutput {
        records,
        tables: vec![bounds_table(bounds)],
    })
}

fn coarse_config(e: &EstimatorSettings, n_targets: Option<usize>) -> CoarseConfig {
    CoarseConfig {
        n_targets,
        pad_factor: e.pad_factor,
        angle_threshold: e.angle_threshold,
        dd_threshold: e.dd_threshold,
    }
}

fn dd_correlation_experiment(s: &Scenario) -> Result<ExperimentOutput> {
    let n_jobs = s.snr_db.len() * s.trials;
    let alloc = BinAllocation::shared(s.system.n_tx);
    let results = par::map_indexed(n_jobs, |j| -> Result<Option<(Target, CoarseEstimate)>> {
        let (p, trial) = (j / s.trials, j % s.trials);
        let cfg = s.system.with_snr_db(s.snr_db[p]);
        let t = random_target(s, trial as u64);
        let f = simulate_radar(&cfg, std::slice::from_ref(&t), &alloc, trial as u64, p as u64)?;
        match coarse_estimate(&f.rx_dd, &f.tx_dd, &cfg, &coarse_config(&s.estimator, Some(1))) {
            Ok(est) => Ok(Some((t, est[0]))),
            Err(crate::Error::PeakSeparationFailure { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let fc = s.system.carrier_frequency_hz;
    let mut records = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        let (p, trial) = (j / s.trials, j % s.trials);
        let snr = s.snr_db[p];
        let mut push = |metric: &str, value: f64| {
            records.push(Record {
                snr_db: snr,
                trial,
                metric: metric.to_string(),
                value,
            })
        };
        match r? {
            Some((t, e)) => {
                push("detected", 1.0);
                push("range_sq_err", (e.range - t.range_m()).powi(2));
                push("velocity_sq_err", (e.velocity - t.velocity_mps(fc)).powi(2));
                push("angle_sq_err", (e.angle - t.angle_rad).powi(2));
            }
            None => push("detected", 0.0),
        }
    }
    let bounds = crlb_curve(&s.system, &s.snr_db, 1.0, 0.0)
        .into_iter()
        .flat_map(|r| {
            [
                (r.snr_db, "crlb_range_m2".to_string(), r.range_m2),
                (r.snr_db, "crlb_velocity_m2ps2".to_string(), r.velocity_m2ps2),
            ]
        })
        .collect::<Vec<_>>();
    Ok(ExperimentOutput {
        records,
        tables: vec![bounds_table(bounds)],
    })
}

/// For each true target, the index of the coarse estimate nearest in the DD
/// plane (greedy on wrapped bin distance). Each estimate is used once.
pub fn associate(coarse: &[CoarseEstimate], truth: &[Target], cfg: &SystemConfig) -> Vec<Option<usize>> {
    let (n, m) = (cfg.n_doppler as f64, cfg.m_delay as f64);
    let wrap = |d: f64, p: f64| {
        let d = d.rem_euclid(p);
        d.min(p - d)
    };
    let mut pairs = Vec::new();
    for (ti, t) in truth.iter().enumerate() {
        for (ci, c) in coarse.iter().enumerate() {
            let dk = wrap(c.doppler_index as f64 - t.doppler_bins(cfg), n);
            let dl = wrap(c.delay_index as f64 - t.delay_bins(cfg), m);
            pairs.push((dk * dk + dl * dl, ti, ci));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; coarse.len()];
    for (_, ti, ci) in pairs {
        if out[ti].is_none() && !used[ci] {
            out[ti] = Some(ci);
            used[ci] = true;
        }
    }
    out
}

/// Outcome of coarse estimation followed by averaged SSR, aligned with the
/// true target list.
#[derive(Debug, Clone)]
pub struct SsrTrial {
    /// Averaged angle spectrum with its threshold-mode peaks.
    pub spectrum: AngleSpectrum,
    /// Whether the coarse stage produced an estimate for every target.
    pub coarse_ok: bool,
    pub specs: Vec<DiscretizationSpec>,
    pub result: AveragedSsrResult,
    /// `(angle rad, doppler Hz, delay s)` per true target. Falls back to the
    /// neighbourhood center when no solver voted for it.
    pub estimates: Vec<[f64; 3]>,
}

/// Coarse pipeline, neighbourhoods per target, averaged SSR on the
/// virtual-array snapshot. A target the coarse stage misses keeps its true
/// parameters as center on every axis and `coarse_ok` is cleared.
pub fn ssr_trial(cfg: &SystemConfig, targets: &[Target], alloc: &BinAllocation, est: &EstimatorSettings, trial: u64, noise_index: u64) -> Result<SsrTrial> {
    let f = simulate_radar(cfg, targets, alloc, trial, noise_index)?;
    let spectrum = angle_spectrum(
        &f.rx_dd,
        cfg,
        PeakMode::Threshold(est.angle_threshold),
        est.pad_factor,
        SpectrumStrategy::Averaged,
    )?;
    let coarse = match coarse_estimate(&f.rx_dd, &f.tx_dd, cfg, &coarse_config(est, Some(targets.len()))) {
        Ok(c) => c,
        Err(crate::Error::PeakSeparationFailure { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let assoc = associate(&coarse, targets, cfg);
    let coarse_ok = assoc.iter().all(Option::is_some);
    let c = est.centers;
    let specs: Vec<DiscretizationSpec> = targets
        .iter()
        .zip(&assoc)
        .map(|(t, a)| {
            let ce = a.map(|i| &coarse[i]);
            let pick = |src: Center, truth: f64, from: fn(&CoarseEstimate) -> f64| match (src, ce) {
                (Center::Coarse, Some(e)) => from(e),
                _ => truth,
            };
            est.neighbourhood.around(
                cfg,
                pick(c.angle, t.angle_rad, |e| e.angle),
                pick(c.doppler, t.doppler_hz, |e| e.doppler),
                pick(c.delay, t.delay_s, |e| e.delay),
            )
        })
        .collect();
    let snapshot = build_virtual_snapshot(&f.rx_tf, &f.tx_tf, alloc)?;
    let ssr = SsrConfig {
        n_solvers: est.n_solvers,
        stop: est.omp_stop,
        dictionary_cap: est.dictionary_cap,
    };
    let result = averaged_ssr(&snapshot, cfg, &specs, &ssr, cfg.seed, trial.wrapping_mul(1 << 20).wrapping_add(noise_index))?;
    let estimates = specs
        .iter()
        .enumerate()
        .map(|(i, sp)| match result.estimates.iter().find(|e| e.target == i) {
            Some(e) => [e.angle, e.doppler, e.delay],
            None => [sp.angle.center, sp.doppler.center, sp.delay.center],
        })
        .collect();
    Ok(SsrTrial {
        spectrum,
        coarse_ok,
        specs,
        result,
        estimates,
    })
}

fn private_allocation(s: &Scenario, n_private: usize) -> Result<BinAllocation> {
    if s.allocation.bins.is_empty() {
        s.allocation.with_private(n_private).build(&s.system)
    } else {
        s.allocation.build(&s.system)
    }
}

fn ssr_angle_experiment(s: &Scenario) -> Result<ExperimentOutput> {
    let mut points = Vec::new();
    for np in s.n_private_values() {
        for nr in s.n_rx_values() {
            for &snr in &s.snr_db {
                points.push((np, nr, snr));
            }
        }
    }
    let allocs: Vec<BinAllocation> = s.n_private_values().into_iter().map(|np| private_allocation(s, np)).collect::<Result<_>>()?;
    let np_index = |np: usize| s.n_private_values().iter().position(|&v| v == np).expect("listed");
    let n_jobs = points.len() * s.trials;
    let results = par::map_indexed(n_jobs, |j| {
        let (p, trial) = (j / s.trials, j % s.trials);
        let (np, nr, snr) = points[p];
        let cfg = SystemConfig {
            n_rx: nr,
            snr_db: snr,
            ..s.system.clone()
        };
        let targets: Vec<Target> = s.targets.iter().map(|t| t.to_target(&cfg)).collect();
        ssr_trial(&cfg, &targets, &allocs[np_index(np)], &s.estimator, trial as u64, p as u64).map(|r| (targets, r))
    });
    let mut records = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        let (targets, r) = r?;
        let (p, trial) = (j / s.trials, j % s.trials);
        let (np, nr, snr) = points[p];
        let tag = format!("np{np}_nr{nr}");
        let mut push = |metric: String, value: f64| {
            records.push(Record {
                snr_db: snr,
                trial,
                metric,
                value,
            })
        };
        let mut num = 0.0;
        let mut den = 0.0;
        let mut max_err: f64 = 0.0;
        for (t, e) in targets.iter().zip(&r.estimates) {
            let err = e[0] - t.angle_rad;
            num += err * err;
            den += t.angle_rad * t.angle_rad;
            max_err = max_err.max(err.abs());
        }
        push(format!("{tag}_angle_nmse"), num / den);
        push(format!("{tag}_angle_max_abs_err_deg"), max_err.to_degrees());
        push(format!("{tag}_spectrum_peaks"), r.spectrum.peaks.len() as f64);
        push(format!("{tag}_coarse_ok"), f64::from(u8::from(r.coarse_ok)));
    }
    Ok(ExperimentOutput { records, tables: Vec::new() })
}

/// The single target of trial `trial` in the velocity experiment: the first
/// scenario target with a uniform random velocity (off the Doppler grid).
pub fn velocity_target(s: &Scenario, trial: u64) -> Target {
    let mut rng = stream(s.system.seed, trial, Stream::Scenario);
    let base = s.targets[0];
    let v = uniform(&mut rng, s.sweep.velocity_range_mps);
    Target::from_range_velocity(
        base.angle_deg,
        base.range_m,
        v,
        Complex64::new(base.gain_re, base.gain_im),
        s.system.carrier_frequency_hz,
    )
}

fn ssr_velocity_experiment(s: &Scenario) -> Result<ExperimentOutput> {
    let alloc = private_allocation(s, s.allocation.n_private)?;
    let n_jobs = s.snr_db.len() * s.trials;
    let results = par::map_indexed(n_jobs, |j| {
        let (p, trial) = (j / s.trials, j % s.trials);
        let cfg = s.system.with_snr_db(s.snr_db[p]);
        let t = velocity_target(s, trial as u64);
        ssr_trial(&cfg, std::slice::from_ref(&t), &alloc, &s.estimator, trial as u64, p as u64).map(|r| (t, r))
    });
    let lambda = s.system.wavelength_m();
    let dv = s.system.doppler_resolution_hz();
    let mut records = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        let (t, r) = r?;
        let (p, trial) = (j / s.trials, j % s.trials);
        let snr = s.snr_db[p];
        let err_hz = r.estimates[0][1] - t.doppler_hz;
        let v_err = err_hz * lambda / 2.0;
        for (metric, value) in [
            ("velocity_sq_err", v_err * v_err),
            ("doppler_bins_sq_err", (err_hz / dv).powi(2)),
            ("coarse_ok", f64::from(u8::from(r.coarse_ok))),
        ] {
            records.push(Record {
                snr_db: snr,
                trial,
                metric: metric.to_string(),
                value,
            });
        }
    }
    let bounds = crlb_curve(&s.system, &s.snr_db, 1.0, 0.0)
        .into_iter()
        .map(|r| (r.snr_db, "crlb_velocity_m2ps2".to_string(), r.velocity_m2ps2))
        .collect::<Vec<_>>();
    Ok(ExperimentOutput {
        records,
        tables: vec![bounds_table(bounds)],
    })
}

/// Bit errors and bit count of one communication frame.
pub fn comm_trial(cfg: &SystemConfig, paths: &[CommPath], alloc: &BinAllocation, trial: u64, point: u64) -> Result<(usize, usize)> {
    let mut sym_rng = sub_stream(cfg.seed, trial, Stream::Symbols, point);
    let bits = random_bits(frame_bits(alloc, cfg), &mut sym_rng);
    let frame = transmit_chain(&bits, alloc, cfg)?;
    let mut gain_rng = sub_stream(cfg.seed, trial, Stream::CommGains, point);
    let channel = CommChannel::random(paths.to_vec(), cfg.n_comm, cfg.n_tx, &mut gain_rng);
    let mut rx = channel.apply(&frame.tf, cfg);
    let mut noise_rng = sub_stream(cfg.seed, trial, Stream::CommNoise, point);
    add_noise(&mut rx, tf_noise_variance(cfg), &mut noise_rng);
    let responses = channel.tf_responses(cfg);
    let tf_est = lmmse_equalize_tf(&rx, &responses, cfg.n_tx, cfg.noise_variance())?;
    let decided = Receiver::new(alloc, cfg)?.demap_tf(&tf_est);
    Ok((bit_errors(&bits, &decided), bits.len()))
}

/// Paths of the communication channel: the scenario targets' delays and
/// Dopplers.
pub fn comm_paths(s: &Scenario) -> Vec<CommPath> {
    s.targets()
        .iter()
        .map(|t| CommPath {
            delay_s: t.delay_s,
            doppler_hz: t.doppler_hz,
        })
        .collect()
}

fn comm_ber_experiment(s: &Scenario) -> Result<ExperimentOutput> {
    let paths = comm_paths(s);
    let mut points = Vec::new();
    for nc in s.n_comm_values() {
        for np in s.n_private_values() {
            for &snr in &s.snr_db {
                points.push((nc, np, snr));
            }
        }
    }
    let nps = s.n_private_values();
    let allocs: Vec<BinAllocation> = nps.iter().map(|&np| private_allocation(s, np)).collect::<Result<_>>()?;
    let n_jobs = points.len() * s.trials;
    let results = par::map_indexed(n_jobs, |j| {
        let (p, trial) = (j / s.trials, j % s.trials);
        let (nc, np, snr) = points[p];
        let cfg = SystemConfig {
            n_comm: nc,
            snr_db: snr,
            ..s.system.clone()
        };
        let a = &allocs[nps.iter().position(|&v| v == np).expect("listed")];
        comm_trial(&cfg, &paths, a, trial as u64, p as u64)
    });
    let mut records = Vec::new();
    let mut totals = vec![(0usize, 0usize); points.len()];
    for (j, r) in results.into_iter().enumerate() {
        let (errors, bits) = r?;
        let (p, trial) = (j / s.trials, j % s.trials);
        let (nc, np, snr) = points[p];
        totals[p].0 += errors;
        totals[p].1 += bits;
        records.push(Record {
            snr_db: snr,
            trial,
            metric: format!("nc{nc}_np{np}_ber"),
            value: errors as f64 / bits as f64,
        });
    }
    let mut table = Table::new("ber.csv", &["snr_db", "n_tx", "n_comm", "n_private", "trials", "bits", "bit_errors", "ber"]);
    for (&(nc, np, snr), &(errors, bits)) in points.iter().zip(&totals) {
        table.push(vec![
            fmt(snr),
            s.system.n_tx.to_string(),
            nc.to_string(),
            np.to_string(),
            s.trials.to_string(),
            bits.to_string(),
            errors.to_string(),
            fmt(errors as f64 / bits as f64),
        ]);
    }
    Ok(ExperimentOutput { records, tables: vec![table] })
}

fn demo_experiment(s: &Scenario) -> Result<ExperimentOutput> {
    let alloc = private_allocation(s, s.allocation.n_private)?;
    let targets = s.targets();
    let mut spectrum = Table::new("spectrum.csv", &["snr_db", "trial", "omega_rad", "angle_deg", "power_db"]);
    let mut picks = Table::new(
        "ssr_picks.csv",
        &[
            "snr_db",
            "trial",
            "solver",
            "target",
            "angle_deg",
            "velocity_mps",
            "range_m",
            "amplitude_abs",
            "residual",
        ],
    );
    let mut votes = Table::new("ssr_votes.csv", &["snr_db", "trial", "target", "angle_deg", "votes"]);
    let mut estimates = Table::new(
        "estimates.csv",
        &[
            "snr_db",
            "trial",
            "target",
            "true_angle_deg",
            "ssr_angle_deg",
            "true_velocity_mps",
            "ssr_velocity_mps",
            "true_range_m",
            "ssr_range_m",
        ],
    );
    let mut records = Vec::new();
    let lambda = s.system.wavelength_m();
    let c = crate::channel::SPEED_OF_LIGHT;
    for (p, &snr) in s.snr_db.iter().enumerate() {
        let cfg = s.system.with_snr_db(snr);
        let runs = par::map_indexed(s.trials, |trial| ssr_trial(&cfg, &targets, &alloc, &s.estimator, trial as u64, p as u64));
        for (trial, run) in runs.into_iter().enumerate() {
            let r = run?;
            let sp = &r.spectrum;
            let peak = sp.power.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
            let mut order: Vec<usize> = (0..sp.omegas.len()).collect();
            order.sort_by(|&a, &b| sp.omegas[a].total_cmp(&sp.omegas[b]));
            for i in order {
                let angle = cfg.angle_from_spatial_frequency(sp.omegas[i]);
                spectrum.push(vec![
                    fmt(snr),
                    trial.to_string(),
                    fmt(sp.omegas[i]),
                    angle.map_or_else(|| "nan".into(), |a| fmt(a.to_degrees())),
                    fmt(10.0 * (sp.power[i] / peak).max(1e-30).log10()),
                ]);
            }
            let mut hist = std::collections::BTreeMap::new();
            for pk in &r.result.picks {
                picks.push(vec![
                    fmt(snr),
                    trial.to_string(),
                    pk.solver.to_string(),
                    pk.point.target.to_string(),
                    fmt(pk.point.angle.to_degrees()),
                    fmt(pk.point.doppler * lambda / 2.0),
                    fmt(pk.point.delay * c / 2.0),
                    fmt(pk.amplitude.norm()),
                    fmt(pk.residual),
                ]);
                let q = r.specs[pk.point.target].angle.lattice_index(pk.point.angle);
                *hist.entry((pk.point.target, q)).or_insert(0usize) += 1;
            }
            for ((t, q), n) in hist {
                let ax = &r.specs[t].angle;
                votes.push(vec![
                    fmt(snr),
                    trial.to_string(),
                    t.to_string(),
                    fmt((ax.center + q as f64 * ax.step).to_degrees()),
                    n.to_string(),
                ]);
            }
            for (i, (t, e)) in targets.iter().zip(&r.estimates).enumerate() {
                estimates.push(vec![
                    fmt(snr),
                    trial.to_string(),
                    i.to_string(),
                    fmt(t.angle_rad.to_degrees()),
                    fmt(e[0].to_degrees()),
                    fmt(t.doppler_hz * lambda / 2.0),
                    fmt(e[1] * lambda / 2.0),
                    fmt(t.range_m()),
                    fmt(e[2] * c / 2.0),
                ]);
                records.push(Record {
                    snr_db: snr,
                    trial,
                    metric: format!("target{i}_angle_abs_err_deg"),
                    value: (e[0] - t.angle_rad).abs().to_degrees(),
                });
            }
            records.push(Record {
                snr_db: snr,
                trial,
                metric: "spectrum_peaks".into(),
                value: sp.peaks.len() as f64,
            });
        }
    }
    Ok(ExperimentOutput {
        records,
        tables: vec![spectrum, votes, picks, estimates],
    })
}
