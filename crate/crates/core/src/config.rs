//! Run configuration, read from TOML. Unknown keys are rejected and every
//! value is checked by [`RunConfig::validate`] before any computation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, SpaceProfile, TimeProfile};
use crate::geometry::{ExplicitCoefficients, MetricData, ModelCoefficients, ModelSource};
use crate::grid::SpatialGrid;
use crate::oracle::OracleOptions;
use crate::parametrix::ParametrixOptions;
use crate::states::SmoothingCheck;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L", default = "two_pi")]
    pub length: f64,
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub t_max: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Exact identities, relative.
    pub identity: f64,
    pub hermitian: f64,
    pub propagator: f64,
    pub oracle: f64,
    /// Slack on smoothing slopes.
    pub slope_slack: f64,
    pub positivity: f64,
    pub purity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { identity: 1e-10, hermitian: 1e-10, propagator: 1e-10, oracle: 1e-10, slope_slack: 0.5, positivity: 1e-10, purity: 1e-9 }
    }
}

/// Numerical settings of the symbol time representation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ContourConfig {
    pub centers: usize,
    pub points: usize,
    pub radius: f64,
    pub r_cutoff_max: Option<f64>,
    pub spectral_floor: f64,
    pub low_band_weight: f64,
}

impl Default for ContourConfig {
    fn default() -> Self {
        let p = ParametrixOptions::default();
        Self {
            centers: p.time_centers,
            points: p.contour_points,
            radius: p.contour_radius,
            r_cutoff_max: p.r_cutoff_max,
            spectral_floor: p.spectral_floor,
            low_band_weight: p.low_band_weight,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    StaticMassive,
    BreathingMetric,
    GaugePotential,
}

impl Preset {
    pub fn metric(self) -> MetricData {
        let sp = |mean: f64, cos: Vec<f64>, sin: Vec<f64>| SpaceProfile { mean, cos, sin };
        match self {
            Preset::StaticMassive => MetricData {
                c: FieldSpec::spatial(sp(1.0, vec![0.2], vec![])),
                h: FieldSpec::spatial(sp(1.0, vec![], vec![0.1])),
                v: FieldSpec::zero(),
                a1: FieldSpec::zero(),
                rho: FieldSpec::constant(1.0),
            },
            // h = (1 + 0.2 sin 1.5t)^{-2} (1 + 0.1 sin x)
            Preset::BreathingMetric => MetricData {
                c: FieldSpec::spatial(sp(1.0, vec![0.2], vec![])),
                h: FieldSpec {
                    time: TimeProfile { poly: vec![1.0], sin_amp: 0.2, sin_freq: 1.5, sin_phase: 0.0 },
                    time_power: -2.0,
                    space: sp(1.0, vec![], vec![0.1]),
                    space_power: 1.0,
                },
                v: FieldSpec::zero(),
                a1: FieldSpec::zero(),
                rho: FieldSpec::constant(1.0),
            },
            Preset::GaugePotential => MetricData {
                c: FieldSpec::spatial(sp(1.0, vec![0.1], vec![])),
                h: FieldSpec::constant(1.0),
                v: FieldSpec::spatial(sp(0.0, vec![0.3], vec![])),
                a1: FieldSpec::spatial(sp(0.0, vec![], vec![0.2])),
                rho: FieldSpec::constant(1.0),
            },
        }
    }
}

/// Exactly one of the three sources.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Option<Preset>,
    pub metric: Option<MetricData>,
    pub explicit: Option<ExplicitCoefficients>,
}

impl ModelConfig {
    pub fn source(&self) -> Result<ModelSource> {
        match (&self.preset, &self.metric, &self.explicit) {
            (Some(p), None, None) => Ok(ModelSource::Metric(p.metric())),
            (None, Some(m), None) => Ok(ModelSource::Metric(m.clone())),
            (None, None, Some(e)) => Ok(ModelSource::Explicit(e.clone())),
            _ => Err(Error::Config("model needs exactly one of preset, metric, explicit".into())),
        }
    }

    /// Metric data when the model has it (the factorization check needs it).
    pub fn metric_data(&self) -> Option<MetricData> {
        match self.source() {
            Ok(ModelSource::Metric(m)) => Some(m),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StateConfig {
    /// Number of seeded Hadamard-family specs.
    pub count: usize,
    /// Entry scale of the seeded smoothing operators.
    pub scale: f64,
    pub beta: f64,
    pub bands: Vec<usize>,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self { count: 20, scale: 0.5, beta: 1.0, bands: vec![8, 16, 32, 64] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GroupConfig {
    pub count: usize,
    pub scale: f64,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self { count: 10, scale: 0.2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GlueConfig {
    pub charts: usize,
    pub overlap: f64,
}

impl Default for GlueConfig {
    fn default() -> Self {
        Self { charts: 2, overlap: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Data bands `K` (modes `K..2K`).
    pub bands: Vec<usize>,
    pub times: Vec<f64>,
    /// Split data for the charge and frequency checks.
    pub split_count: usize,
    pub frequency_bands: Vec<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { bands: vec![8, 16, 32], times: vec![0.25, 0.5, 1.0], split_count: 10, frequency_bands: vec![16, 32] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub truncations: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { truncations: vec![4, 6, 8], sizes: vec![256] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EgorovConfig {
    pub t: f64,
    pub base_mode: usize,
    pub points: usize,
    /// `a11` of the static explicit model the check runs on.
    pub a11: FieldSpec,
    pub truncation: usize,
    /// Window nodes of the Egorov bundle.
    pub nodes: usize,
}

impl Default for EgorovConfig {
    fn default() -> Self {
        Self { t: 0.8, base_mode: 16, points: 4, a11: FieldSpec::spatial(SpaceProfile { mean: 1.0, cos: vec![0.3], sin: vec![] }), truncation: 4, nodes: 17 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub window: WindowConfig,
    pub truncation: usize,
    #[serde(rename = "R_cutoff", default = "default_r_cutoff")]
    pub r_cutoff: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub model: ModelConfig,
    #[serde(default)]
    pub contour: ContourConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default)]
    pub group: GroupConfig,
    #[serde(default)]
    pub glue: GlueConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub egorov: EgorovConfig,
}

fn default_r_cutoff() -> f64 {
    2.0
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Desk-scale defaults for a preset: n = 256, N = 6, window [0, 1].
    pub fn preset(p: Preset) -> Self {
        Self {
            seed: 0,
            grid: GridConfig { n: 256, length: two_pi() },
            window: WindowConfig { t_max: 1.0, nodes: 65 },
            truncation: 6,
            r_cutoff: default_r_cutoff(),
            tolerances: Tolerances::default(),
            model: ModelConfig { preset: Some(p), ..Default::default() },
            contour: ContourConfig::default(),
            state: StateConfig::default(),
            group: GroupConfig::default(),
            glue: GlueConfig::default(),
            verify: VerifyConfig::default(),
            sweep: SweepConfig::default(),
            egorov: EgorovConfig::default(),
        }
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        SpatialGrid::new(self.grid.n, self.grid.length).map_err(|e| Error::Config(e.to_string()))?;
        self.parametrix_options().validate()?;
        self.model.source()?;
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.identity", t.identity),
            ("tolerances.hermitian", t.hermitian),
            ("tolerances.propagator", t.propagator),
            ("tolerances.oracle", t.oracle),
            ("tolerances.slope_slack", t.slope_slack),
            ("tolerances.positivity", t.positivity),
            ("tolerances.purity", t.purity),
            ("state.scale", self.state.scale),
            ("state.beta", self.state.beta),
            ("group.scale", self.group.scale),
            ("egorov.t", self.egorov.t),
        ] {
            positive(name, v)?;
        }
        let bands_ok = |b: &[usize]| b.len() >= 2 && b.windows(2).all(|w| w[0] < w[1]) && b[0] >= 1 && 2 * b[b.len() - 1] <= self.grid.n / 2;
        if !bands_ok(&self.state.bands) {
            return Err(Error::Config("state.bands must be at least two increasing bands with 2·max ≤ n/2".into()));
        }
        if !bands_ok(&self.verify.bands) {
            return Err(Error::Config("verify.bands must be at least two increasing bands with 2·max ≤ n/2".into()));
        }
        if self.verify.frequency_bands.iter().any(|&b| b == 0 || 2 * b > self.grid.n / 2) {
            return Err(Error::Config("verify.frequency_bands must lie in 1..=n/4".into()));
        }
        if self.verify.times.is_empty() || self.verify.times.iter().any(|&s| !(s > 0.0 && s <= self.window.t_max)) {
            return Err(Error::Config("verify.times must be non-empty and lie in (0, t_max]".into()));
        }
        if self.glue.charts == 0 || !(self.glue.overlap > 0.0 && self.glue.overlap <= 1.0) {
            return Err(Error::Config("glue needs at least one chart and overlap in (0, 1]".into()));
        }
        if self.sweep.truncations.iter().any(|&n| n < 2) || self.sweep.sizes.iter().any(|&n| n < 16 || n % 2 != 0) {
            return Err(Error::Config("sweep truncations must be ≥ 2 and sizes even and ≥ 16".into()));
        }
        if self.egorov.truncation < 2 || self.egorov.nodes < 5 {
            return Err(Error::Config("egorov needs truncation ≥ 2 and nodes ≥ 5".into()));
        }
        if self.egorov.t > self.window.t_max || self.egorov.base_mode == 0 || 10 * self.egorov.base_mode > self.grid.n {
            return Err(Error::Config(
                "egorov needs t ≤ t_max and 0 < 10·base_mode ≤ n (packets at twice the base mode must stay inside n/4 along the flow)".into(),
            ));
        }
        self.egorov.a11.validate("egorov.a11", self.window.t_max).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.grid.n, self.grid.length)
    }

    pub fn parametrix_options(&self) -> ParametrixOptions {
        ParametrixOptions {
            truncation: self.truncation,
            t_max: self.window.t_max,
            window_nodes: self.window.nodes,
            time_centers: self.contour.centers,
            contour_points: self.contour.points,
            contour_radius: self.contour.radius,
            r_cutoff: self.r_cutoff,
            r_cutoff_max: self.contour.r_cutoff_max,
            spectral_floor: self.contour.spectral_floor,
            low_band_weight: self.contour.low_band_weight,
            herm_tol: self.tolerances.hermitian,
            propagator_tol: self.tolerances.propagator,
        }
    }

    pub fn oracle_options(&self) -> OracleOptions {
        OracleOptions { tol: self.tolerances.oracle, ..Default::default() }
    }

    /// Smoothing threshold `-(N-1) + slack` over the state bands.
    pub fn smoothing_check(&self) -> SmoothingCheck {
        SmoothingCheck { bands: self.state.bands.clone(), threshold: -(self.truncation as f64 - 1.0) + self.tolerances.slope_slack, floor: 1e-12 }
    }

    pub fn model(&self) -> Result<ModelCoefficients> {
        ModelCoefficients::new(&self.spatial_grid()?, self.model.source()?, self.window.t_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
truncation = 4
[grid]
n = 64
[window]
t_max = 1.0
nodes = 17
[model]
preset = "breathing-metric"
[verify]
bands = [4, 8]
frequency_bands = [8]
[state]
bands = [4, 8]
[egorov]
base_mode = 6
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.grid.length, two_pi());
        assert_eq!(c.r_cutoff, 2.0);
        assert_eq!(c.parametrix_options().window_nodes, 17);
        assert_eq!(c.smoothing_check().threshold, -2.5);
        assert_eq!(c.model.metric_data(), Some(Preset::BreathingMetric.metric()));
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for extra in ["bogus = 1\n", "[grid]\nn = 64\nwidth = 2\n"] {
            let s = format!("{extra}{MINIMAL}");
            assert!(matches!(RunConfig::from_toml(&s), Err(Error::Config(_))), "{extra}");
        }
        let s = MINIMAL.replace("preset = \"breathing-metric\"", "preset = \"breathing\"");
        assert!(RunConfig::from_toml(&s).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (from, to) in [
            ("n = 64", "n = 63"),
            ("truncation = 4", "truncation = 1"),
            ("t_max = 1.0", "t_max = -1.0"),
            ("bands = [4, 8]\nfrequency", "bands = [8, 4]\nfrequency"),
            ("base_mode = 6", "base_mode = 8"),
        ] {
            let s = MINIMAL.replacen(from, to, 1);
            assert!(RunConfig::from_toml(&s).is_err(), "{to}");
        }
        let two = MINIMAL.replace(
            "preset = \"breathing-metric\"",
            "preset = \"static-massive\"\n[model.explicit]\na11 = { space = { mean = 1.0 } }\nm = { space = { mean = 1.0 } }",
        );
        assert!(RunConfig::from_toml(&two).is_err());
    }

    #[test]
    fn presets_build_models() {
        for p in [Preset::StaticMassive, Preset::BreathingMetric, Preset::GaugePotential] {
            let mut c = RunConfig::preset(p);
            c.grid.n = 32;
            c.state.bands = vec![2, 4];
            c.verify.bands = vec![2, 4];
            c.verify.frequency_bands = vec![4];
            c.egorov.base_mode = 3;
            c.validate().unwrap();
            let m = c.model().unwrap();
            assert_eq!(m.is_static(), p == Preset::StaticMassive, "{p:?}");
        }
    }
}
