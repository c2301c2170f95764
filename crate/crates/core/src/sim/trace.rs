//! Per-step simulation records and their CSV form.
//!
//! CSV columns, in order: `step, vehicle_id, x, v, u, delta_u, g_slack, dx_err,
//! dv_err, solver_status, objective, fallback_flag`. Vehicle 0 is the leader; its
//! control-related columns are empty, as are the control columns of the final row.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{control_uncertainty, desired_spacing, step_cav, PlatoonState, VehicleState};
use crate::error::{Error, Result};
use crate::feasibility::g_slack;
use crate::params::{GlobalParams, VehicleParams};

pub const CSV_COLUMNS: [&str; 12] = [
    "step",
    "vehicle_id",
    "x",
    "v",
    "u",
    "delta_u",
    "g_slack",
    "dx_err",
    "dv_err",
    "solver_status",
    "objective",
    "fallback_flag",
];

/// What happened at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub controls: Vec<f64>,
    pub leader_accel: f64,
    pub status: String,
    pub objective: Option<f64>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub vps: Vec<VehicleParams>,
    pub gp: GlobalParams,
    /// `states[k]` is the platoon before `records[k]`; one more state than records.
    pub states: Vec<PlatoonState>,
    pub records: Vec<StepRecord>,
}

impl Trace {
    pub fn new(initial: PlatoonState, vps: Vec<VehicleParams>, gp: GlobalParams) -> Self {
        Self { vps, gp, states: vec![initial], records: Vec::new() }
    }

    pub fn push(&mut self, record: StepRecord, next: PlatoonState) {
        self.records.push(record);
        self.states.push(next);
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn last_state(&self) -> &PlatoonState {
        self.states.last().expect("trace holds the initial state")
    }

    /// Steps whose solve failed and used the fallback control.
    pub fn fallback_steps(&self) -> Vec<usize> {
        self.records.iter().enumerate().filter(|(_, r)| r.fallback).map(|(k, _)| k).collect()
    }

    pub fn first_fallback(&self) -> Option<usize> {
        self.records.iter().position(|r| r.fallback)
    }

    /// Largest deviation between logged states and a replay of the logged controls.
    pub fn replay_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, rec) in self.records.iter().enumerate() {
            let s = &self.states[k];
            for (i, (cav, vp)) in s.cavs.iter().zip(&self.vps).enumerate() {
                let next = step_cav(cav, rec.controls[i], vp, &self.gp);
                let logged = &self.states[k + 1].cavs[i];
                worst = worst.max((next.x - logged.x).abs()).max((next.v - logged.v).abs());
            }
        }
        worst
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        for (k, state) in self.states.iter().enumerate() {
            let rec = self.records.get(k);
            let status = rec.map(|r| r.status.clone()).unwrap_or_default();
            let objective = rec.and_then(|r| r.objective);
            let fallback = rec.is_some_and(|r| r.fallback);
            rows.push(TraceRow {
                step: state.step,
                vehicle_id: 0,
                x: state.leader.x,
                v: state.leader.v,
                u: None,
                delta_u: None,
                g_slack: None,
                dx_err: None,
                dv_err: None,
                solver_status: status.clone(),
                objective,
                fallback_flag: u8::from(fallback),
            });
            let mut lead = &state.leader;
            for (i, (cav, vp)) in state.cavs.iter().zip(&self.vps).enumerate() {
                let u = rec.map(|r| r.controls[i]);
                rows.push(TraceRow {
                    step: state.step,
                    vehicle_id: i + 1,
                    x: cav.x,
                    v: cav.v,
                    u,
                    delta_u: u.map(|u| control_uncertainty(cav, u, vp)),
                    g_slack: Some(g_slack(lead, cav, vp, &self.gp)),
                    dx_err: Some(lead.x - cav.x - desired_spacing(cav.v, lead.v, vp, &self.gp)),
                    dv_err: Some(lead.v - cav.v),
                    solver_status: status.clone(),
                    objective,
                    fallback_flag: u8::from(fallback),
                });
                lead = cav;
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: i64,
    pub vehicle_id: usize,
    pub x: f64,
    pub v: f64,
    pub u: Option<f64>,
    pub delta_u: Option<f64>,
    pub g_slack: Option<f64>,
    pub dx_err: Option<f64>,
    pub dv_err: Option<f64>,
    pub solver_status: String,
    pub objective: Option<f64>,
    pub fallback_flag: u8,
}

/// Reads trace rows, naming any column missing from the header.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let malformed = |e: csv::Error| Error::InvalidParams { name: "trace", reason: e.to_string() };
    let headers = r.headers().map_err(malformed)?.clone();
    let missing: Vec<&str> = CSV_COLUMNS.iter().copied().filter(|c| !headers.iter().any(|h| h == *c)).collect();
    if !missing.is_empty() {
        return Err(Error::InvalidParams { name: "trace", reason: format!("missing column(s): {}", missing.join(", ")) });
    }
    r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>().map_err(malformed)
}

/// Replays the logged controls of a CSV trace and returns the largest state deviation.
///
/// The previous control needed by the uncertainty term is recovered from the
/// logged `delta_u` when it matters (`eta > 0`).
pub fn replay_rows(rows: &[TraceRow], vps: &[VehicleParams], gp: &GlobalParams) -> Result<f64> {
    use std::collections::BTreeMap;
    let mut by_step: BTreeMap<i64, BTreeMap<usize, &TraceRow>> = BTreeMap::new();
    for row in rows {
        by_step.entry(row.step).or_default().insert(row.vehicle_id, row);
    }
    let mut worst: f64 = 0.0;
    for (step, vehicles) in &by_step {
        let Some(next) = by_step.get(&(step + 1)) else { continue };
        for (&id, row) in vehicles.iter().filter(|(&id, _)| id > 0) {
            let Some(u) = row.u else { continue };
            let vp = vps.get(id - 1).ok_or(Error::InvalidParams {
                name: "trace",
                reason: format!("vehicle {id} has no parameter block"),
            })?;
            let u_prev = match (vp.eta > 0.0, row.delta_u) {
                (true, Some(du)) => (vp.eps * row.v + vp.eta * u - du) / vp.eta,
                _ => 0.0,
            };
            let s = step_cav(&VehicleState::new(row.x, row.v, u_prev), u, vp, gp);
            let logged = next.get(&id).ok_or(Error::InvalidParams {
                name: "trace",
                reason: format!("vehicle {id} missing at step {}", step + 1),
            })?;
            worst = worst.max((s.x - logged.x).abs()).max((s.v - logged.v).abs());
        }
    }
    Ok(worst)
}
