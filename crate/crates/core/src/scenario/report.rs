use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Measurements, Method, Scenario, ScenarioConfig, ScenarioError, TruthSpec};
use crate::geometry::dist;
use crate::inversion::{InversionResult, L2Result, Status};
use crate::mesh::TriMesh;
use crate::sources::{Atom, MeasureKind, SparseMeasure};
use crate::transport::write_series_csv;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMetric {
    pub kind: MeasureKind,
    pub truth: Atom,
    /// Nearest recovered atom of the same kind.
    pub nearest: Option<Atom>,
    pub distance: Option<f64>,
    pub intensity_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub sources: Vec<SourceMetric>,
    pub max_distance: Option<f64>,
    pub mean_distance: Option<f64>,
}

impl RecoveryMetrics {
    /// Every truth atom has a recovered atom within `radius`.
    pub fn all_within(&self, radius: f64) -> bool {
        self.sources.iter().all(|s| matches!(s.distance, Some(d) if d <= radius))
    }
}

/// Matches every truth atom with the nearest recovered atom of its kind.
pub fn recovery_metrics(truth: &TruthSpec, rec_i: &SparseMeasure, rec_c: &SparseMeasure) -> RecoveryMetrics {
    let mut sources = Vec::new();
    for (group, rec, kind) in [(&truth.initial, rec_i, MeasureKind::Initial), (&truth.continuous, rec_c, MeasureKind::Continuous)] {
        let Some(group) = group else { continue };
        for t in &group.atoms {
            let nearest = rec
                .atoms
                .iter()
                .min_by(|a, b| dist(a.location(), t.location()).total_cmp(&dist(b.location(), t.location())))
                .copied();
            sources.push(SourceMetric {
                kind,
                truth: *t,
                nearest,
                distance: nearest.map(|a| dist(a.location(), t.location())),
                intensity_ratio: nearest.filter(|_| t.intensity > 0.0).map(|a| a.intensity / t.intensity),
            });
        }
    }
    let distances: Vec<f64> = sources.iter().filter_map(|s| s.distance).collect();
    let complete = distances.len() == sources.len() && !sources.is_empty();
    RecoveryMetrics {
        max_distance: complete.then(|| distances.iter().copied().fold(0.0, f64::max)),
        mean_distance: complete.then(|| distances.iter().sum::<f64>() / distances.len() as f64),
        sources,
    }
}

/// Local maxima of a nodal field above `fraction` of its maximum, as atoms
/// carrying the nodal value, strongest first. Plateaus report their lowest
/// node.
pub fn l2_peaks(mesh: &TriMesh, m: &[f64], fraction: f64) -> SparseMeasure {
    let max = m.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return SparseMeasure::empty(MeasureKind::Initial);
    }
    let neighbors = mesh.node_neighbors();
    let mut peaks: Vec<(usize, f64)> = (0..m.len())
        .filter(|&k| m[k] >= fraction * max)
        .filter(|&k| neighbors[k].iter().all(|&j| if j < k { m[k] > m[j] } else { m[k] >= m[j] }))
        .map(|k| (k, m[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let atoms = peaks.into_iter().map(|(k, v)| Atom::new(mesh.nodes()[k], v)).collect();
    SparseMeasure::new(MeasureKind::Initial, atoms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    pub result: L2Result,
    pub peaks: SparseMeasure,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub setup_s: f64,
    pub data_s: f64,
    pub inversion_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub name: String,
    pub method: Method,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_sensors: usize,
    pub n_data: usize,
    pub wind: String,
    /// Applied noise standard deviation.
    pub noise_sigma: f64,
    pub snr: Option<f64>,
    /// Likelihood scale used by the inversion.
    pub sigma: f64,
    pub alpha: f64,
    pub merge_radius: f64,
    pub pdap: Option<InversionResult>,
    pub l2: Option<L2Report>,
    pub metrics: RecoveryMetrics,
    /// Forward plus adjoint transport solves of the inversion.
    pub online_pde_solves: usize,
    pub timing: RunTiming,
}

impl RunReport {
    pub(super) fn new(cfg: &ScenarioConfig, seed: u64, scenario: &Scenario, data: &Measurements, sigma: f64) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            name: cfg.name.clone(),
            method: cfg.inversion.method,
            seed,
            n_nodes: scenario.model.n_nodes(),
            n_sensors: data.plan.n_sensors(),
            n_data: data.plan.len(),
            wind: scenario.wind.provenance().to_string(),
            noise_sigma: data.sigma,
            snr: data.snr(),
            sigma,
            alpha: cfg.inversion.alpha,
            merge_radius: scenario.merge_radius(),
            pdap: None,
            l2: None,
            metrics: RecoveryMetrics::default(),
            online_pde_solves: 0,
            timing: RunTiming::default(),
        }
    }

    /// PDAP runs stopped by the iteration cap without a certificate.
    pub fn hit_max_iter(&self) -> bool {
        self.pdap.as_ref().is_some_and(|r| r.status == Status::MaxIter && !r.certified())
    }

    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.timing = RunTiming::default();
        if let Some(p) = r.pdap.as_mut() {
            p.timing = Default::default();
        }
        r
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Report plus the data it was computed from.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub data: Measurements,
}

impl RunOutcome {
    /// Writes `report.json`, `observed.csv` and `clean.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("report.json"))?), &self.report)?;
        write_series_csv(&self.data.plan, &self.data.d, BufWriter::new(File::create(dir.join("observed.csv"))?))?;
        write_series_csv(&self.data.plan, &self.data.clean, BufWriter::new(File::create(dir.join("clean.csv"))?))?;
        Ok(())
    }
}
