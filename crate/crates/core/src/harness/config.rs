//! Experiment configuration: a flat TOML document over a named preset.
//!
//! ```toml
//! preset = "desk"        # optional, "full" (default) or "desk"
//! trials = 20
//! snr_grid_db = [0.0, 10.0]
//! estimators = ["ring_bayes", "ls"]
//! ```
//!
//! Keys not listed in [`ExperimentConfig`] are rejected.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codebook::{
    build_dictionary, build_ring_codebook, build_ula_grid, r_min_for_ring_count,
    radius_for_angle_count, ring_constant, RingCodebook, SparsifyingDictionary, UlaGrid,
};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSettings, FocussOptions, OmpOptions, SblOptions};
use crate::geometry::{wavelength_for, DistanceModel, UcaGeometry, UlaGeometry};
use crate::sensing::FrameDims;
use crate::specfun::{inv_j0_mainlobe, J0_FIRST_ZERO};

/// How the Bessel argument that spaces the codebook is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingRule {
    /// Adjacent codewords sit at the first zero of `J0`; the worst-case
    /// cross gain is then the first side-lobe peak, about 0.403.
    #[default]
    FirstZero,
    /// Adjacent codewords sit where `J0 = delta` on the main lobe.
    InverseDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n_r: usize,
    pub n_t: usize,
    pub n_rf_r: usize,
    pub n_rf_t: usize,
    /// Data streams in the BER sweep.
    pub n_s: usize,
    /// Pilot frames `M`.
    pub frames: usize,
    /// Scatterers `L`.
    pub paths: usize,
    pub n_angles: usize,
    pub n_rings: usize,
    /// UCA radius in meters; derived from `n_angles` when absent.
    pub radius: Option<f64>,
    /// Smallest codebook range in meters; derived from `n_rings` when absent.
    pub r_min: Option<f64>,
    /// User-side angular grid size `G_T`.
    pub g_t: usize,
    pub carrier_freq: f64,
    /// Adjacent-codeword coherence level.
    pub delta: f64,
    pub sampling: SamplingRule,
    /// Explicit Bessel argument; overrides `sampling` when set.
    pub sampling_arg: Option<f64>,
    pub distance_model: DistanceModel,
    /// Scatterer range interval; defaults to `[r_min, 4 r_delta]`.
    pub path_r_min: Option<f64>,
    pub path_r_max: Option<f64>,
    pub on_grid: bool,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<String>,
    pub output_path: Option<String>,

    pub epsilon: f64,
    pub k_max: usize,
    pub prune_threshold: f64,
    pub woodbury: bool,
    /// Defaults to `2 L`.
    pub omp_max_atoms: Option<usize>,
    pub omp_residual_tol: f64,
    pub focuss_p: f64,
    /// Defaults to the noise variance of each trial.
    pub focuss_reg_lambda: Option<f64>,
    pub focuss_max_iter: usize,
    pub focuss_tol: f64,
    /// QPSK vectors sent per trial in the BER sweep.
    pub ber_symbols: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ExperimentConfig {
    /// Full-size simulation parameters.
    pub fn full() -> Self {
        Self {
            n_r: 64,
            n_t: 8,
            n_rf_r: 16,
            n_rf_t: 2,
            n_s: 2,
            frames: 20,
            paths: 5,
            n_angles: 125,
            n_rings: 4,
            radius: None,
            r_min: None,
            g_t: 16,
            carrier_freq: 30e9,
            delta: 0.403,
            sampling: SamplingRule::FirstZero,
            sampling_arg: None,
            distance_model: DistanceModel::Taylor,
            path_r_min: None,
            path_r_max: None,
            on_grid: false,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 100,
            seed: 1,
            estimators: vec!["ring_bayes".into(), "omp".into(), "ls".into()],
            output_path: None,
            epsilon: 1.0,
            k_max: 30,
            prune_threshold: 1e-6,
            woodbury: true,
            omp_max_atoms: None,
            omp_residual_tol: 1e-3,
            focuss_p: 0.8,
            focuss_reg_lambda: None,
            focuss_max_iter: 100,
            focuss_tol: 1e-4,
            ber_symbols: 1000,
        }
    }

    /// Reduced size for quick runs: 32 antennas, 63 angles, 10 frames,
    /// 50 trials.
    pub fn desk() -> Self {
        Self {
            n_r: 32,
            frames: 10,
            n_angles: 63,
            trials: 50,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected \"full\" or \"desk\""
            ))),
        }
    }

    /// Parses a TOML document; an optional `preset` key picks the base
    /// that the remaining keys override.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let base = match table.remove("preset") {
            None => Self::full(),
            Some(toml::Value::String(name)) => Self::preset(&name)?,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in table {
            merged.insert(k, v);
        }
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn estimator_kinds(&self) -> Result<Vec<EstimatorKind>> {
        self.estimators.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_r", self.n_r),
            ("n_t", self.n_t),
            ("n_rf_r", self.n_rf_r),
            ("n_rf_t", self.n_rf_t),
            ("n_s", self.n_s),
            ("frames", self.frames),
            ("paths", self.paths),
            ("n_angles", self.n_angles),
            ("n_rings", self.n_rings),
            ("g_t", self.g_t),
            ("trials", self.trials),
            ("k_max", self.k_max),
            ("focuss_max_iter", self.focuss_max_iter),
            ("ber_symbols", self.ber_symbols),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_s > self.n_r.min(self.n_t) {
            return Err(Error::Config(format!(
                "n_s = {} exceeds min(n_r, n_t) = {}",
                self.n_s,
                self.n_r.min(self.n_t)
            )));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_grid_db must be a non-empty list of finite values".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        self.estimator_kinds()?;
        if !(self.carrier_freq > 0.0 && self.carrier_freq.is_finite()) {
            return Err(Error::Config(format!("invalid carrier_freq {}", self.carrier_freq)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("delta must be in (0, 1], got {}", self.delta)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.prune_threshold >= 0.0 && self.prune_threshold < 1.0) {
            return Err(Error::Config("prune_threshold must be in [0, 1)".into()));
        }
        if self.omp_max_atoms == Some(0) {
            return Err(Error::Config("omp_max_atoms must be positive".into()));
        }
        if !(self.focuss_p > 0.0 && self.focuss_p <= 1.0) {
            return Err(Error::Config(format!("focuss_p must be in (0, 1], got {}", self.focuss_p)));
        }
        for (name, v) in [("radius", self.radius), ("r_min", self.r_min), ("sampling_arg", self.sampling_arg)] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive, got {x}")));
                }
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        wavelength_for(self.carrier_freq)
    }

    pub fn resolved_sampling_arg(&self) -> Result<f64> {
        match (self.sampling_arg, self.sampling) {
            (Some(x), _) => Ok(x),
            (None, SamplingRule::FirstZero) => Ok(J0_FIRST_ZERO),
            (None, SamplingRule::InverseDelta) => inv_j0_mainlobe(self.delta),
        }
    }

    pub fn frame_dims(&self) -> FrameDims {
        FrameDims {
            n_t: self.n_t,
            n_r: self.n_r,
            n_rf_t: self.n_rf_t,
            n_rf_r: self.n_rf_r,
        }
    }

    pub fn estimator_settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            sbl: SblOptions {
                epsilon: self.epsilon,
                k_max: self.k_max,
                woodbury: self.woodbury,
                prune_threshold: self.prune_threshold,
            },
            omp: OmpOptions {
                max_atoms: self.omp_max_atoms.unwrap_or(2 * self.paths),
                residual_tol: self.omp_residual_tol,
            },
            focuss: FocussOptions {
                p: self.focuss_p,
                reg_lambda: self.focuss_reg_lambda,
                max_iter: self.focuss_max_iter,
                tol: self.focuss_tol,
                ..FocussOptions::default()
            },
        }
    }

    /// Builds the geometry, codebook, user grid and dictionary.
    pub fn build_setup(&self) -> Result<Setup> {
        self.validate()?;
        let wavelength = self.wavelength();
        let x = self.resolved_sampling_arg()?;
        let radius = match self.radius {
            Some(r) => r,
            None => radius_for_angle_count(self.n_angles, wavelength, x)?,
        };
        let bs = UcaGeometry::new(self.n_r, radius, wavelength)?;
        let r_delta = ring_constant(&bs, x);
        let r_min = match self.r_min {
            Some(r) => r,
            None => r_min_for_ring_count(self.n_rings, r_delta)?,
        };
        let codebook = build_ring_codebook(&bs, r_min, x, self.distance_model)?;
        let ue = UlaGeometry::half_wavelength(self.n_t, wavelength)?;
        let ue_grid = build_ula_grid(&ue, self.g_t)?;
        let dictionary = Arc::new(build_dictionary(&codebook, &ue_grid));
        let path_range = (
            self.path_r_min.unwrap_or(r_min),
            self.path_r_max.unwrap_or(4.0 * r_delta),
        );
        if !(path_range.0 > 0.0 && path_range.1 > path_range.0 && path_range.1.is_finite()) {
            return Err(Error::Config(format!(
                "scatterer range [{}, {}] is empty",
                path_range.0, path_range.1
            )));
        }
        Ok(Setup {
            bs,
            ue,
            codebook,
            ue_grid,
            dictionary,
            path_range,
        })
    }
}

/// Immutable objects shared by every trial of a sweep.
#[derive(Debug, Clone)]
pub struct Setup {
    pub bs: UcaGeometry,
    pub ue: UlaGeometry,
    pub codebook: RingCodebook,
    pub ue_grid: UlaGrid,
    pub dictionary: Arc<SparsifyingDictionary>,
    pub path_range: (f64, f64),
}
