//! Scenario files: everything an experiment needs, with units in field names.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::allocation::{BinAllocation, EmptyBinPolicy};
use crate::channel::{SystemConfig, Target};
use crate::error::{Error, Result};
use crate::grid::Bin;
use crate::ssr::{Axis, DiscretizationSpec, StopRule, DEFAULT_DICTIONARY_CAP, DEFAULT_N_SOLVERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Crlb,
    CoarseAngleMse,
    DdCorrelation,
    SsrAngle,
    SsrVelocity,
    CommBer,
    DemoSpectrum,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Crlb => "crlb",
            Self::CoarseAngleMse => "coarse-angle-mse",
            Self::DdCorrelation => "dd-correlation",
            Self::SsrAngle => "ssr-angle",
            Self::SsrVelocity => "ssr-velocity",
            Self::CommBer => "comm-ber",
            Self::DemoSpectrum => "demo-spectrum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub angle_deg: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    #[serde(default = "one")]
    pub gain_re: f64,
    #[serde(default)]
    pub gain_im: f64,
}

fn one() -> f64 {
    1.0
}

impl TargetSpec {
    pub fn to_target(&self, cfg: &SystemConfig) -> Target {
        Target::from_range_velocity(
            self.angle_deg,
            self.range_m,
            self.velocity_mps,
            Complex64::new(self.gain_re, self.gain_im),
            cfg.carrier_frequency_hz,
        )
    }
}

/// The three targets of the reference channel.
pub fn reference_targets() -> Vec<TargetSpec> {
    [(7.0, 73.48, 54.54), (-14.0, 64.29, -98.17), (22.0, 45.92, 76.36)]
        .into_iter()
        .map(|(angle_deg, range_m, velocity_mps)| TargetSpec {
            angle_deg,
            range_m,
            velocity_mps,
            gain_re: 1.0,
            gain_im: 0.0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivateBinSpec {
    pub antenna: usize,
    pub row: usize,
    pub col: usize,
}

/// Choice of the empty DD bins `E_i`, resolved against the grid size.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyDdSpec {
    MirrorZeroed,
    LeadingDiagonal,
    #[default]
    Conditioned,
    Explicit(Vec<Vec<Bin>>),
}

impl EmptyDdSpec {
    pub fn policy(&self, cfg: &SystemConfig) -> EmptyBinPolicy {
        match self {
            Self::MirrorZeroed => EmptyBinPolicy::MirrorZeroed,
            Self::LeadingDiagonal => EmptyBinPolicy::LeadingDiagonal,
            Self::Conditioned => EmptyBinPolicy::Conditioned {
                n_doppler: cfg.n_doppler,
                m_delay: cfg.m_delay,
            },
            Self::Explicit(sets) => EmptyBinPolicy::Explicit(sets.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationSpec {
    /// Private bins on the TF diagonal, `(p, p)` owned by antenna `p mod N_t`.
    /// Ignored when `bins` is non-empty.
    #[serde(default)]
    pub n_private: usize,
    #[serde(default)]
    pub bins: Vec<PrivateBinSpec>,
    #[serde(default)]
    pub empty_dd: EmptyDdSpec,
}

impl Default for AllocationSpec {
    fn default() -> Self {
        Self {
            n_private: 0,
            bins: Vec::new(),
            empty_dd: EmptyDdSpec::Conditioned,
        }
    }
}

impl AllocationSpec {
    pub fn with_private(&self, n_private: usize) -> Self {
        Self {
            n_private,
            bins: Vec::new(),
            empty_dd: self.empty_dd.clone(),
        }
    }

    pub fn build(&self, cfg: &SystemConfig) -> Result<BinAllocation> {
        let policy = self.empty_dd.policy(cfg);
        if self.bins.is_empty() {
            BinAllocation::diagonal(cfg.n_tx, self.n_private, &policy)
        } else {
            let a: Vec<(usize, Bin)> = self.bins.iter().map(|b| (b.antenna, Bin::new(b.row, b.col))).collect();
            BinAllocation::with_policy(cfg.n_tx, &a, &policy)
        }
    }
}

/// Neighbourhood widths and steps around each coarse estimate. Doppler and
/// delay are in units of their resolutions; a width of zero pins the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighbourhoodSpec {
    pub angle_step_deg: f64,
    pub angle_width_deg: f64,
    pub doppler_step_bins: f64,
    pub doppler_width_bins: f64,
    pub delay_step_bins: f64,
    pub delay_width_bins: f64,
}

impl Default for NeighbourhoodSpec {
    fn default() -> Self {
        Self {
            angle_step_deg: 1.0,
            angle_width_deg: 10.0,
            doppler_step_bins: 0.1,
            doppler_width_bins: 2.0,
            delay_step_bins: 0.1,
            delay_width_bins: 2.0,
        }
    }
}

impl NeighbourhoodSpec {
    /// Neighbourhood around `(angle rad, doppler Hz, delay s)`.
    pub fn around(&self, cfg: &SystemConfig, angle: f64, doppler: f64, delay: f64) -> DiscretizationSpec {
        let dv = cfg.doppler_resolution_hz();
        let dtau = cfg.delay_resolution_s();
        let axis = |c: f64, step: f64, width: f64| if width == 0.0 { Axis::pinned(c) } else { Axis::new(c, step, width) };
        DiscretizationSpec {
            angle: axis(angle, self.angle_step_deg.to_radians(), self.angle_width_deg.to_radians()),
            doppler: axis(doppler, self.doppler_step_bins * dv, self.doppler_width_bins * dv),
            delay: axis(delay, self.delay_step_bins * dtau, self.delay_width_bins * dtau),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("angle", self.angle_step_deg, self.angle_width_deg),
            ("doppler", self.doppler_step_bins, self.doppler_width_bins),
            ("delay", self.delay_step_bins, self.delay_width_bins),
        ];
        for (name, step, width) in pairs {
            Axis::new(0.0, step, width).validate(&format!("estimator.neighbourhood.{name}"))?;
        }
        Ok(())
    }

    pub fn points_per_target(&self) -> usize {
        let n = |s: f64, w: f64| (w / s).round() as usize + 1;
        n(self.angle_step_deg, self.angle_width_deg) * n(self.doppler_step_bins, self.doppler_width_bins) * n(self.delay_step_bins, self.delay_width_bins)
    }
}

/// Where an SSR neighbourhood is centered on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Center {
    /// The coarse estimate associated with the target.
    #[default]
    Coarse,
    /// The true parameter (for isolating the refinement stage).
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CenterSources {
    pub angle: Center,
    pub doppler: Center,
    pub delay: Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    pub pad_factor: usize,
    pub angle_threshold: f64,
    pub dd_threshold: f64,
    pub n_solvers: usize,
    pub omp_stop: Option<StopRule>,
    pub dictionary_cap: usize,
    pub neighbourhood: NeighbourhoodSpec,
    pub centers: CenterSources,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            pad_factor: crate::coarse::DEFAULT_PAD_FACTOR,
            angle_threshold: crate::coarse::DEFAULT_THRESHOLD,
            dd_threshold: crate::coarse::DEFAULT_THRESHOLD,
            n_solvers: DEFAULT_N_SOLVERS,
            omp_stop: None,
            dictionary_cap: DEFAULT_DICTIONARY_CAP,
            neighbourhood: NeighbourhoodSpec::default(),
            centers: CenterSources::default(),
        }
    }
}

/// Experiment-specific sweeps and random-target ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    /// Receive array sizes; empty means `system.n_rx`.
    pub n_rx: Vec<usize>,
    /// Private-bin counts; empty means `allocation`.
    pub n_private: Vec<usize>,
    /// Comm antenna counts; empty means `system.n_comm`.
    pub n_comm: Vec<usize>,
    pub angle_range_deg: [f64; 2],
    pub range_range_m: [f64; 2],
    pub range_step_m: f64,
    pub velocity_range_mps: [f64; 2],
    pub velocity_step_mps: f64,
    /// Reference angle for mapping spatial-frequency bounds to angle.
    pub reference_angle_deg: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            n_rx: Vec::new(),
            n_private: Vec::new(),
            n_comm: Vec::new(),
            angle_range_deg: [-60.0, 60.0],
            range_range_m: [50.0, 100.0],
            range_step_m: 0.5,
            velocity_range_mps: [-100.0, 100.0],
            velocity_step_mps: 2.0,
            reference_angle_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default = "reference_targets")]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub allocation: AllocationSpec,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_snrs")]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_trials() -> usize {
    100
}

fn default_snrs() -> Vec<f64> {
    (-20..=20).step_by(5).map(f64::from).collect()
}

impl Scenario {
    pub fn new(name: impl Into<String>, experiment: ExperimentKind) -> Self {
        Self {
            name: name.into(),
            experiment,
            system: SystemConfig::default(),
            targets: reference_targets(),
            allocation: AllocationSpec::default(),
            estimator: EstimatorSettings::default(),
            sweep: SweepSettings::default(),
            trials: default_trials(),
            snr_db: default_snrs(),
            output_dir: None,
        }
    }

    /// Three targets 2 deg apart seen by 16 receive antennas with 4 private
    /// bins: one DFT peak, three SSR solutions.
    pub fn demo() -> Self {
        let mut s = Self::new("demo", ExperimentKind::DemoSpectrum);
        for (t, a) in s.targets.iter_mut().zip([12.0, 14.0, 16.0]) {
            t.angle_deg = a;
        }
        s.system.n_rx = 16;
        s.allocation.n_private = 4;
        s.trials = 1;
        s.snr_db = vec![20.0];
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn targets(&self) -> Vec<Target> {
        self.targets.iter().map(|t| t.to_target(&self.system)).collect()
    }

    pub fn n_rx_values(&self) -> Vec<usize> {
        if self.sweep.n_rx.is_empty() {
            vec![self.system.n_rx]
        } else {
            self.sweep.n_rx.clone()
        }
    }

    pub fn n_private_values(&self) -> Vec<usize> {
        if self.sweep.n_private.is_empty() {
            vec![self.allocation.n_private]
        } else {
            self.sweep.n_private.clone()
        }
    }

    pub fn n_comm_values(&self) -> Vec<usize> {
        if self.sweep.n_comm.is_empty() {
            vec![self.system.n_comm]
        } else {
            self.sweep.n_comm.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "must list at least one SNR"));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::config("snr_db", "must not contain NaN"));
        }
        if self.trials == 0 && self.experiment != ExperimentKind::Crlb {
            return Err(Error::config("trials", "must be at least 1"));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !(t.angle_deg.abs() < 90.0) {
                return Err(Error::config(format!("targets[{i}].angle_deg"), "must lie in (-90, 90)"));
            }
            if !(t.range_m >= 0.0) || !t.velocity_mps.is_finite() {
                return Err(Error::config(format!("targets[{i}]"), "range must be non-negative and velocity finite"));
            }
        }
        let e = &self.estimator;
        if e.pad_factor == 0 {
            return Err(Error::config("estimator.pad_factor", "must be positive"));
        }
        for (name, v) in [("angle_threshold", e.angle_threshold), ("dd_threshold", e.dd_threshold)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("estimator.{name}"), "must lie in (0, 1]"));
            }
        }
        if e.n_solvers == 0 {
            return Err(Error::config("estimator.n_solvers", "must be at least 1"));
        }
        if e.n_solvers > self.system.nm() {
            return Err(Error::config("estimator.n_solvers", "must not exceed N*M"));
        }
        e.neighbourhood.validate()?;
        let sw = &self.sweep;
        if sw.n_rx.iter().chain(&sw.n_comm).any(|&v| v == 0) {
            return Err(Error::config("sweep", "antenna counts must be positive"));
        }
        if sw.angle_range_deg[0] > sw.angle_range_deg[1] || sw.angle_range_deg.iter().any(|a| a.abs() >= 90.0) {
            return Err(Error::config("sweep.angle_range_deg", "must be an increasing range inside (-90, 90)"));
        }
        if sw.range_range_m[0] > sw.range_range_m[1] || sw.range_range_m[0] < 0.0 || !(sw.range_step_m > 0.0) {
            return Err(Error::config(
                "sweep.range_range_m",
                "must be an increasing non-negative range with a positive step",
            ));
        }
        if sw.velocity_range_mps[0] > sw.velocity_range_mps[1] || !(sw.velocity_step_mps > 0.0) {
            return Err(Error::config("sweep.velocity_range_mps", "must be increasing with a positive step"));
        }

        let uses_alloc = matches!(
            self.experiment,
            ExperimentKind::SsrAngle | ExperimentKind::SsrVelocity | ExperimentKind::CommBer | ExperimentKind::DemoSpectrum
        );
        if uses_alloc {
            let (n, m) = (self.system.n_doppler, self.system.m_delay);
            for np in self.n_private_values() {
                let alloc = self.allocation.with_private(np);
                let alloc = if self.allocation.bins.is_empty() { alloc } else { self.allocation.clone() };
                let a = alloc.build(&self.system).map_err(|err| Error::config("allocation", err.to_string()))?;
                a.validate_grid(n, m).map_err(|err| Error::config("allocation", err.to_string()))?;
                for i in 0..a.n_tx() {
                    a.modified_sfft(i, n, m)
                        .map_err(|err| Error::config(format!("allocation (antenna {i})"), err.to_string()))?;
                }
            }
        }
        if matches!(
            self.experiment,
            ExperimentKind::SsrAngle | ExperimentKind::SsrVelocity | ExperimentKind::DemoSpectrum
        ) {
            if self.n_private_values().contains(&0) {
                return Err(Error::config("allocation.n_private", "sparse recovery needs at least one private bin"));
            }
            let cols = e.neighbourhood.points_per_target() * self.targets.len();
            if cols > e.dictionary_cap {
                return Err(Error::config(
                    "estimator.neighbourhood",
                    format!("{cols} dictionary columns exceed the cap of {}", e.dictionary_cap),
                ));
            }
        }
        if matches!(self.experiment, ExperimentKind::SsrAngle | ExperimentKind::DemoSpectrum) {
            for nr in self.n_rx_values() {
                if self.targets.len() >= nr {
                    return Err(Error::config(
                        "targets",
                        format!("{} targets need more than {nr} receive antennas", self.targets.len()),
                    ));
                }
            }
        }
        if self.experiment == ExperimentKind::CommBer && self.system.nm() > crate::channel::EXPLICIT_OPERATOR_CAP * 16 {
            return Err(Error::config("system", "communication grid is too large"));
        }
        Ok(())
    }
}
