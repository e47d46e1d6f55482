use std::io::Write;

use super::{SensorPlan, StateTrajectory, TransportError};

/// CSV with header `step,time,node,value`, one row per node and step.
pub fn write_trajectory_csv<W: Write>(traj: &StateTrajectory, mut w: W) -> Result<(), TransportError> {
    writeln!(w, "step,time,node,value")?;
    for (n, u) in traj.states.iter().enumerate() {
        let t = n as f64 * traj.dt;
        for (k, v) in u.iter().enumerate() {
            writeln!(w, "{n},{t},{k},{v}")?;
        }
    }
    Ok(())
}

/// CSV with header `sensor_id,t,value`, one row per observation.
pub fn write_series_csv<W: Write>(plan: &SensorPlan, values: &[f64], mut w: W) -> Result<(), TransportError> {
    if values.len() != plan.len() {
        return Err(TransportError::SizeMismatch { expected: plan.len(), got: values.len() });
    }
    writeln!(w, "sensor_id,t,value")?;
    for (o, v) in plan.observations.iter().zip(values) {
        writeln!(w, "{},{},{}", o.sensor, o.t, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layouts() {
        let traj = StateTrajectory { dt: 0.5, states: vec![vec![1.0, 2.0], vec![3.0, 4.0]] };
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().nth(4).unwrap(), "1,0.5,1,4");

        let plan = SensorPlan::static_sensors(&[[0.1, 0.2]], &[1.0, 1.5]);
        let mut buf = Vec::new();
        write_series_csv(&plan, &[0.25, 0.5], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sensor_id,t,value\n0,1,0.25\n0,1.5,0.5\n");
        assert!(write_series_csv(&plan, &[1.0], Vec::new()).is_err());
    }
}
