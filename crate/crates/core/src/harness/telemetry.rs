//! Per-cycle telemetry CSV.

use crate::vehicle::{ControlInput, VehicleState};

use super::{CycleRecord, CycleStatus, HarnessError};

pub const TELEMETRY_HEADER: &str =
    "t_s,x_m,y_m,heading_rad,s_m,v_l_cmd,delta_cmd,v_p_cmd,xi_con_m,xi_lag_m,beta,solve_time_s,status";

/// Floats are written in shortest round-trip form.
pub fn write_telemetry(records: &[CycleRecord]) -> String {
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(TELEMETRY_HEADER);
    out.push('\n');
    for r in records {
        let s = &r.state;
        let u = &r.command;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            s.x,
            s.y,
            s.heading,
            s.progress,
            u.v_l,
            u.delta,
            u.v_p,
            r.xi_con,
            r.xi_lag,
            r.beta,
            r.solve_time,
            r.status.label()
        ));
    }
    out
}

pub fn parse_telemetry(src: &str) -> Result<Vec<CycleRecord>, HarnessError> {
    let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == TELEMETRY_HEADER => {}
        Some((i, _)) => return Err(HarnessError::Parse { line: i + 1, message: "unexpected header".into() }),
        None => return Err(HarnessError::Parse { line: 0, message: "empty telemetry".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let err = |message: String| HarnessError::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 13 {
            return Err(err(format!("expected 13 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 12];
        for (k, f) in fields[..12].iter().enumerate() {
            v[k] = f.parse().map_err(|_| err(format!("field {} is not a number: `{f}`", k + 1)))?;
        }
        let status = CycleStatus::parse(fields[12]).ok_or_else(|| err(format!("unknown status `{}`", fields[12])))?;
        out.push(CycleRecord {
            t: v[0],
            state: VehicleState::new(v[1], v[2], v[3], v[4]),
            command: ControlInput::new(v[5], v[6], v[7]),
            xi_con: v[8],
            xi_lag: v[9],
            beta: v[10],
            solve_time: v[11],
            status,
            iterations: 0,
            cold_iterations: None,
        });
    }
    if out.is_empty() {
        return Err(HarnessError::Parse { line: 1, message: "telemetry has no cycles".into() });
    }
    Ok(out)
}
