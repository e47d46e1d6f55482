use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::fem::AnalyticWind;
use crate::geometry::{Point, Rect};
use crate::sources::{Atom, ShapeModel};
use crate::transport::TransportConfig;

/// Full description of a synthetic identification experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mesh: MeshSpec,
    pub wind: WindSpec,
    pub transport: TransportConfig,
    #[serde(default)]
    pub truth: TruthSpec,
    pub sensors: SensorSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub inversion: InversionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    /// Structured mesh; holes are snapped to grid lines.
    Generated {
        bounds: Rect,
        nx: usize,
        ny: usize,
        #[serde(default)]
        holes: Vec<Rect>,
    },
    /// ASCII mesh file; its boundary markers are recomputed from the wind.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindSpec {
    /// Analytic stream-function field. With `blocking_length` set, the
    /// stream function is bent around the mesh holes.
    Analytic {
        field: AnalyticWind,
        #[serde(default)]
        blocking_length: Option<f64>,
    },
    /// Nodal wind file matching the mesh.
    File { path: PathBuf },
}

/// Sources of one kind sharing a shape model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceGroup {
    pub shape: ShapeModel,
    pub atoms: Vec<Atom>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    #[serde(default)]
    pub initial: Option<SourceGroup>,
    #[serde(default)]
    pub continuous: Option<SourceGroup>,
}

impl TruthSpec {
    pub fn n_atoms(&self) -> usize {
        self.initial.as_ref().map_or(0, |g| g.atoms.len()) + self.continuous.as_ref().map_or(0, |g| g.atoms.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorLayout {
    /// Tensor grid of static sensors; points inside holes are dropped.
    Grid { xs: Vec<f64>, ys: Vec<f64> },
    /// Explicit static sensor positions.
    List { points: Vec<Point> },
    /// One sensor on `c0 + t c1 + t^2 c2`.
    Moving { c0: Point, c1: Point, c2: Point },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub layout: SensorLayout,
    /// Sampling window `[T0, T_end]` in seconds.
    pub window: [f64; 2],
    /// Sampling rate in Hz.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise standard deviation relative to the largest clean observation.
    pub level: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { level: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pdap,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionSpec {
    pub method: Method,
    pub alpha: f64,
    /// Likelihood scale; defaults to the generated noise level.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub tol_abs: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_prune_rel")]
    pub prune_rel: f64,
    /// Defaults to three maximal element diameters.
    #[serde(default)]
    pub merge_radius: Option<f64>,
    /// Shape models used for inversion; default to the truth shapes.
    #[serde(default)]
    pub shape_i: Option<ShapeModel>,
    #[serde(default)]
    pub shape_c: Option<ShapeModel>,
    #[serde(default)]
    pub l2: Option<L2Spec>,
}

fn default_max_iter() -> usize {
    50
}

fn default_prune_rel() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Spec {
    pub eta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max")]
    pub cg_max: usize,
    /// Local maxima of the reconstruction above this fraction of its
    /// maximum count as recovered sources.
    #[serde(default = "default_peak_fraction")]
    pub peak_fraction: f64,
}

fn default_cg_tol() -> f64 {
    1e-6
}

fn default_cg_max() -> usize {
    200
}

fn default_peak_fraction() -> f64 {
    0.2
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        self.transport.validate()?;
        let t_end = self.transport.final_time();
        let [t0, t1] = self.sensors.window;
        if !(t0 > 0.0) || !(t1 >= t0) || t1 > t_end * (1.0 + 1e-12) {
            return bad(format!("sampling window [{t0}, {t1}] must satisfy 0 < T0 <= T_end <= {t_end}"));
        }
        if !(self.sensors.rate > 0.0) || !self.sensors.rate.is_finite() {
            return bad(format!("sampling rate must be positive, got {}", self.sensors.rate));
        }
        if !(self.noise.level >= 0.0) || !self.noise.level.is_finite() {
            return bad(format!("noise level must be >= 0, got {}", self.noise.level));
        }
        let inv = &self.inversion;
        if !(inv.alpha > 0.0) || !inv.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", inv.alpha));
        }
        if let Some(s) = inv.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return bad(format!("sigma must be positive, got {s}"));
            }
        }
        if matches!(inv.merge_radius, Some(r) if !(r >= 0.0)) {
            return bad("merge radius must be >= 0".into());
        }
        if inv.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        for group in [&self.truth.initial, &self.truth.continuous].into_iter().flatten() {
            group.shape.validate()?;
        }
        for shape in [&inv.shape_i, &inv.shape_c].into_iter().flatten() {
            shape.validate()?;
        }
        if inv.method == Method::L2 {
            if inv.l2.is_none() {
                return bad("method l2 needs an `l2` block".into());
            }
            if self.truth.continuous.is_some() {
                return bad("the l2 baseline identifies initial conditions only".into());
            }
        }
        Ok(())
    }

    /// Shape models of the kinds being identified. Without any truth or
    /// explicit choice, initial-type Dirac sources are sought.
    pub fn inversion_shapes(&self) -> (Option<ShapeModel>, Option<ShapeModel>) {
        let si = self.inversion.shape_i.or(self.truth.initial.as_ref().map(|g| g.shape));
        let sc = self.inversion.shape_c.or(self.truth.continuous.as_ref().map(|g| g.shape));
        match (si, sc) {
            (None, None) => (Some(ShapeModel::Dirac), None),
            other => other,
        }
    }
}
