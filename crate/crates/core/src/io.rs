//! Ledger CSV, per-step snapshots, and JSON summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! trajectory read back from its snapshots is bit-identical to the one
//! that was written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::audit::LedgerRow;
use crate::error::{Error, Result};
use crate::stepper::{Simulation, StepState, Trajectory};

pub const LEDGER_HEADER: &str = "m,t,F,K,D,Wext_1,Wext_2,Wext_3,Wext_4,Wext_5,E1,E2,slack,xi_min,vi_min";
pub const SNAPSHOT_HEADER: &str = "node,u,u_slope,v,z";
pub const SNAPSHOT_DIR: &str = "snapshots";

pub fn snapshot_path(dir: &Path, m: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("step_{m:05}.csv"))
}

pub fn ledger_csv(rows: &[LedgerRow]) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for r in rows {
        let mut fields = vec![r.m.to_string()];
        let values = [r.t, r.stored, r.kinetic, r.dissipated]
            .into_iter()
            .chain(r.wext)
            .chain([r.e1, r.e2, r.slack, r.xi_min, r.vi_min]);
        fields.extend(values.map(|v| format!("{v:e}")));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    write_file(path, &ledger_csv(rows))
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format {
        path: path.display().to_string(),
        message: msg,
    };
    let mut lines = text.lines();
    if lines.next() != Some(LEDGER_HEADER) {
        return Err(bad("unexpected ledger header".into()));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 15 {
                return Err(bad(format!("line {}: expected 15 fields, found {}", k + 2, cells.len())));
            }
            let m = cells[0]
                .parse()
                .map_err(|_| bad(format!("line {}: bad step index", k + 2)))?;
            let v = cells[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| bad(format!("line {}: bad number `{c}`", k + 2))))
                .collect::<Result<Vec<f64>>>()?;
            Ok(LedgerRow {
                m,
                t: v[0],
                stored: v[1],
                kinetic: v[2],
                dissipated: v[3],
                wext: [v[4], v[5], v[6], v[7], v[8]],
                e1: v[9],
                e2: v[10],
                slack: v[11],
                xi_min: v[12],
                vi_min: v[13],
            })
        })
        .collect()
}

fn snapshot_csv(state: &StepState) -> String {
    let mut out = String::from(SNAPSHOT_HEADER);
    out.push('\n');
    for (i, z) in state.z.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{:e},{:e},{:e},{z:e}",
            state.u[2 * i],
            state.u[2 * i + 1],
            state.v[2 * i]
        );
    }
    out
}

/// Writes every `stride`-th state and always the last one.
pub fn write_snapshots(dir: &Path, traj: &Trajectory, stride: usize) -> Result<usize> {
    let sub = dir.join(SNAPSHOT_DIR);
    fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    let last = traj.states.len() - 1;
    let mut written = 0;
    for s in traj.states.iter().filter(|s| s.m % stride.max(1) == 0 || s.m == last) {
        write_file(&snapshot_path(dir, s.m), &snapshot_csv(s))?;
        written += 1;
    }
    Ok(written)
}

/// Displacement (values and slopes) and damage of one snapshot file.
pub fn read_snapshot(path: &Path, n_nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format {
        path: path.display().to_string(),
        message: msg,
    };
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err(bad("unexpected snapshot header".into()));
    }
    let mut u = vec![0.0; 2 * n_nodes];
    let mut z = vec![0.0; n_nodes];
    let mut count = 0;
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(bad(format!("line {}: expected 5 fields", k + 2)));
        }
        let num = |c: &str| c.parse::<f64>().map_err(|_| bad(format!("line {}: bad number `{c}`", k + 2)));
        let i: usize = cells[0]
            .parse()
            .map_err(|_| bad(format!("line {}: bad node index", k + 2)))?;
        if i >= n_nodes {
            return Err(bad(format!("node {i} outside the mesh of {n_nodes} nodes")));
        }
        u[2 * i] = num(cells[1])?;
        u[2 * i + 1] = num(cells[2])?;
        z[i] = num(cells[4])?;
        count += 1;
    }
    if count != n_nodes {
        return Err(bad(format!("expected {n_nodes} nodes, found {count}")));
    }
    Ok((u, z))
}

/// Rebuilds a trajectory from a complete set of snapshots. Velocities are
/// recomputed from the displacements and the initial velocity of the
/// scenario; the data are re-evaluated.
pub fn read_trajectory(dir: &Path, sim: &Simulation) -> Result<Trajectory> {
    let n = sim.spaces.mesh.n_nodes();
    let tau = sim.grid.tau();
    let mut traj = sim.initial()?;
    traj.states.clear();
    traj.data.clear();
    for m in 0..=sim.grid.steps {
        let path = snapshot_path(dir, m);
        if !path.exists() {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: "missing snapshot; auditing needs snapshot_stride = 1".into(),
            });
        }
        let (u, z) = read_snapshot(&path, n)?;
        let v = if m == 0 {
            sim.scenario.initial_velocity(&sim.spaces)
        } else {
            u.iter()
                .zip(&traj.states[m - 1].u)
                .map(|(a, b)| (a - b) / tau)
                .collect()
        };
        traj.states.push(StepState {
            m,
            t: sim.grid.time(m),
            u,
            v,
            z,
            diagnostics: None,
        });
        traj.data.push(sim.scenario.eval_data(&sim.spaces, sim.grid.time(m))?);
    }
    Ok(traj)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    write_file(path, &(text + "\n"))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(m: usize) -> LedgerRow {
        LedgerRow {
            m,
            t: 0.1 * m as f64,
            stored: 1.0 / 3.0,
            kinetic: 2e-300,
            dissipated: 0.0,
            wext: [1.5, -0.25, 1e10, std::f64::consts::PI, -0.0],
            e1: 1e-17,
            e2: 0.0,
            slack: 3.3e-12,
            xi_min: -1.0,
            vi_min: 0.0,
        }
    }

    #[test]
    fn ledger_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        let rows = vec![row(0), row(1), row(2)];
        write_ledger(&path, &rows).unwrap();
        assert_eq!(read_ledger(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), LEDGER_HEADER);
    }

    #[test]
    fn malformed_ledger_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        fs::write(&path, format!("{LEDGER_HEADER}\n0,1,2\n")).unwrap();
        assert!(matches!(read_ledger(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn snapshot_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let state = StepState {
            m: 7,
            t: 0.7,
            u: vec![0.1, 1.0 / 7.0, -2e-20, 3.0],
            v: vec![1.0, 0.0, 2.0, 0.0],
            z: vec![1.0, 0.123456789012345],
            diagnostics: None,
        };
        let path = snapshot_path(dir.path(), 7);
        write_file(&path, &snapshot_csv(&state)).unwrap();
        assert!(path.ends_with("snapshots/step_00007.csv"));
        let (u, z) = read_snapshot(&path, 2).unwrap();
        assert_eq!(u, state.u);
        assert_eq!(z, state.z);
        assert!(read_snapshot(&path, 3).is_err());
    }
}
