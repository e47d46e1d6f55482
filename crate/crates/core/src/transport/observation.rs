use serde::{Deserialize, Serialize};

use super::{StateTrajectory, TransportConfig, TransportError};
use crate::geometry::Point;
use crate::mesh::TriMesh;

/// Observation times within this many steps of a grid point snap onto it.
const TIME_SNAP: f64 = 1e-9;

/// One space-time sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub sensor: usize,
    pub t: f64,
    pub x: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPlan {
    pub observations: Vec<Observation>,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl SensorPlan {
    pub fn new(observations: Vec<Observation>) -> Self {
        Self { observations, noise_sigma: 0.0 }
    }

    /// Static sensors sampled at common times.
    pub fn static_sensors(positions: &[Point], times: &[f64]) -> Self {
        let mut obs = Vec::with_capacity(positions.len() * times.len());
        for (s, &x) in positions.iter().enumerate() {
            for &t in times {
                obs.push(Observation { sensor: s, t, x });
            }
        }
        Self::new(obs)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_sensors(&self) -> usize {
        let mut ids: Vec<_> = self.observations.iter().map(|o| o.sensor).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Sample times `t0, t0 + 1/rate, ...` up to and including `t1`.
pub fn sample_times(t0: f64, t1: f64, rate: f64) -> Vec<f64> {
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 / rate).collect()
}

/// Linear-in-time, barycentric-in-space sampling weights per observation.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    space: Vec<([usize; 3], [f64; 3])>,
    time: Vec<[(usize, f64); 2]>,
    n_steps: usize,
}

impl ObservationOperator {
    pub fn new(mesh: &TriMesh, plan: &SensorPlan, cfg: &TransportConfig) -> Result<Self, TransportError> {
        let mut space = Vec::with_capacity(plan.len());
        let mut time = Vec::with_capacity(plan.len());
        for (i, o) in plan.observations.iter().enumerate() {
            let loc = mesh.locate(o.x).map_err(|_| TransportError::SensorOutside { index: i, x: o.x })?;
            space.push((loc.nodes, loc.weights));
            time.push(time_weights(o.t, cfg).ok_or(TransportError::ObservationTime { index: i, t: o.t })?);
        }
        Ok(Self { space, time, n_steps: cfg.n_steps })
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn apply(&self, traj: &StateTrajectory) -> Vec<f64> {
        assert_eq!(traj.states.len(), self.n_steps + 1);
        self.space
            .iter()
            .zip(&self.time)
            .map(|((nodes, w), tw)| {
                tw.iter()
                    .filter(|(_, a)| *a != 0.0)
                    .map(|&(n, a)| {
                        let u = &traj.states[n];
                        a * (w[0] * u[nodes[0]] + w[1] * u[nodes[1]] + w[2] * u[nodes[2]])
                    })
                    .sum()
            })
            .collect()
    }

    /// Adds `sum_i y_i w_{i,n} b_i` into `out` for step `n`.
    pub fn add_load(&self, y: &[f64], step: usize, out: &mut [f64]) {
        for (i, ((nodes, w), tw)) in self.space.iter().zip(&self.time).enumerate() {
            for &(n, a) in tw {
                if n == step && a != 0.0 {
                    for k in 0..3 {
                        out[nodes[k]] += y[i] * a * w[k];
                    }
                }
            }
        }
    }

    /// Steps that carry any observation weight.
    pub fn loaded_steps(&self) -> Vec<bool> {
        let mut s = vec![false; self.n_steps + 1];
        for tw in &self.time {
            for &(n, a) in tw {
                if a != 0.0 {
                    s[n] = true;
                }
            }
        }
        s
    }
}

/// Bracketing steps and weights for time `t`, or `None` outside `[0, T]`.
pub fn time_weights(t: f64, cfg: &TransportConfig) -> Option<[(usize, f64); 2]> {
    let s = t / cfg.dt;
    let n = cfg.n_steps as f64;
    if !s.is_finite() || s < -TIME_SNAP || s > n + TIME_SNAP {
        return None;
    }
    let nearest = s.round();
    if (s - nearest).abs() <= TIME_SNAP {
        let k = nearest as usize;
        return Some([(k, 1.0), (k, 0.0)]);
    }
    let k = s.floor() as usize;
    let theta = s - k as f64;
    Some([(k, 1.0 - theta), (k + 1, theta)])
}
