//! Closed-loop time-domain simulation of the averaged boost converter.
//!
//! States are the averaged inductor current, the output voltage, the filtered
//! current measurement and the PI integrator. The duty command is clamped to
//! ±[`DUTY_LIMIT`]; trajectories that touch the clamp or leave continuous
//! conduction are rejected rather than repaired.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::PiGains;
use crate::converter::{averaged_dynamics, dc_steady_state, AveragedState, ConverterParams};
use crate::error::{Error, Result};
use crate::ode::rk4_step;

pub const DUTY_LIMIT: f64 = 0.9;
/// Internal integration steps per output sample.
pub const SUBSTEPS: usize = 10;
const SATURATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u64,
    pub params: ConverterParams,
    /// Target output voltage (V).
    pub v_target: f64,
    pub gains: PiGains,
    /// Reference step amplitude (A).
    pub i_step: f64,
    /// Reference step time (s).
    pub t_step: f64,
    pub t_end: f64,
    pub sample_dt: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.v_target < self.params.v_g {
            return Err(Error::InvalidBoostRatio {
                v: self.v_target,
                v_g: self.params.v_g,
            });
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::Domain(format!("sample_dt = {}", self.sample_dt)));
        }
        if !(0.0 < self.t_step && self.t_step < self.t_end) {
            return Err(Error::Domain(format!(
                "need 0 < t_step < t_end, got t_step = {}, t_end = {}",
                self.t_step, self.t_end
            )));
        }
        if !(self.gains.k_p > 0.0 && self.gains.k_i > 0.0) {
            return Err(Error::Domain("PI gains must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.t_end / self.sample_dt).round() as usize + 1
    }

    fn reference(&self, i_l0: f64, after_step: bool) -> f64 {
        if after_step {
            i_l0 + self.i_step
        } else {
            i_l0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    Saturation,
    Dcm,
    Diverged,
    InfeasiblePi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validation {
    Accept,
    Reject(RejectReason),
}

/// Uniformly sampled closed-loop waveforms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub i: Vec<f64>,
    pub v: Vec<f64>,
    pub i_filt: Vec<f64>,
    pub eps: Vec<f64>,
    pub d: Vec<f64>,
    pub i_ref: Vec<f64>,
    pub i_out: Vec<f64>,
}

pub const TRAJECTORY_COLUMNS: [&str; 8] = ["t", "i", "v", "i_filt", "eps", "d", "i_ref", "i_out"];

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Trajectory {
            time: v(),
            i: v(),
            v: v(),
            i_filt: v(),
            eps: v(),
            d: v(),
            i_ref: v(),
            i_out: v(),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Comma-separated dump with a header row, SI units, round-trip precision.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", TRAJECTORY_COLUMNS.join(","))?;
        for n in 0..self.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.time[n],
                self.i[n],
                self.v[n],
                self.i_filt[n],
                self.eps[n],
                self.d[n],
                self.i_ref[n],
                self.i_out[n]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn clamp_duty(d: f64) -> f64 {
    d.clamp(-DUTY_LIMIT, DUTY_LIMIT)
}

/// Integrates the closed loop from its ideal steady state.
pub fn simulate_closed_loop(scenario: &Scenario) -> Result<Trajectory> {
    simulate_closed_loop_substeps(scenario, SUBSTEPS)
}

/// [`simulate_closed_loop`] with `substeps` RK4 steps per output sample.
pub fn simulate_closed_loop_substeps(scenario: &Scenario, substeps: usize) -> Result<Trajectory> {
    scenario.validate()?;
    if substeps == 0 {
        return Err(Error::Domain("substeps must be positive".into()));
    }
    let p = scenario.params;
    let ss = dc_steady_state(&p, scenario.v_target)?;
    let PiGains { k_p, k_i } = scenario.gains;
    let w_f = p.filter_omega();

    // i_ref is held fixed across a (sub)step; steps straddling t_step are split.
    let rhs = |i_ref: f64| {
        move |_t: f64, y: &[f64; 4]| {
            let [i, v, i_f, z] = *y;
            let eps = i_ref - i_f;
            let d = clamp_duty(k_p * eps + z);
            let (di, dv) = averaged_dynamics(AveragedState { i, v }, d, &p);
            [di, dv, w_f * (i - i_f), k_i * eps]
        }
    };
    let before = rhs(scenario.reference(ss.i_l, false));
    let after = rhs(scenario.reference(ss.i_l, true));

    let n_samples = scenario.sample_count();
    let dt = scenario.sample_dt;
    let h = dt / substeps as f64;
    let mut y = [ss.i_l, ss.v, ss.i_l, ss.duty];
    let mut traj = Trajectory::with_capacity(n_samples);

    for n in 0..n_samples {
        let t = n as f64 * dt;
        let i_ref = scenario.reference(ss.i_l, t >= scenario.t_step);
        let [i, v, i_f, z] = y;
        let eps = i_ref - i_f;
        let d = clamp_duty(k_p * eps + z);
        traj.time.push(t);
        traj.i.push(i);
        traj.v.push(v);
        traj.i_filt.push(i_f);
        traj.eps.push(eps);
        traj.d.push(d);
        traj.i_ref.push(i_ref);
        traj.i_out.push((1.0 - d) * i);

        if n + 1 == n_samples {
            break;
        }
        for j in 0..substeps {
            let t0 = t + j as f64 * h;
            let t1 = t0 + h;
            y = if t1 <= scenario.t_step {
                rk4_step(&before, t0, &y, h)
            } else if t0 >= scenario.t_step {
                rk4_step(&after, t0, &y, h)
            } else {
                let first = scenario.t_step - t0;
                let mid = rk4_step(&before, t0, &y, first);
                rk4_step(&after, scenario.t_step, &mid, h - first)
            };
            if y.iter().any(|s| !s.is_finite()) {
                return Err(Error::SimulationDiverged { time: t1 });
            }
        }
    }
    Ok(traj)
}

/// Rejection filters: duty saturation, loss of continuous conduction, non-finite samples.
pub fn validate_trajectory(traj: &Trajectory, params: &ConverterParams) -> Validation {
    let finite = [&traj.i, &traj.v, &traj.d]
        .iter()
        .all(|col| col.iter().all(|x| x.is_finite()));
    if !finite {
        return Validation::Reject(RejectReason::Diverged);
    }
    if traj.d.iter().any(|d| d.abs() >= DUTY_LIMIT - SATURATION_TOL) {
        return Validation::Reject(RejectReason::Saturation);
    }
    let dcm = traj
        .i
        .iter()
        .zip(&traj.d)
        .any(|(&i, &d)| i - params.current_ripple(d) <= 0.0);
    if dcm {
        return Validation::Reject(RejectReason::Dcm);
    }
    Validation::Accept
}

/// Sampled response of the averaged model with the duty held constant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpenLoopTrajectory {
    pub time: Vec<f64>,
    pub i: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn simulate_open_loop(
    params: &ConverterParams,
    duty: f64,
    initial: AveragedState,
    t_end: f64,
    sample_dt: f64,
) -> Result<OpenLoopTrajectory> {
    params.validate()?;
    if !(sample_dt > 0.0 && t_end > 0.0) {
        return Err(Error::Domain("t_end and sample_dt must be positive".into()));
    }
    let f = |_t: f64, y: &[f64; 2]| {
        let (di, dv) = averaged_dynamics(AveragedState { i: y[0], v: y[1] }, duty, params);
        [di, dv]
    };
    let n_samples = (t_end / sample_dt).round() as usize + 1;
    let h = sample_dt / SUBSTEPS as f64;
    let mut y = [initial.i, initial.v];
    let mut out = OpenLoopTrajectory::default();
    for n in 0..n_samples {
        let t = n as f64 * sample_dt;
        out.time.push(t);
        out.i.push(y[0]);
        out.v.push(y[1]);
        for j in 0..SUBSTEPS {
            y = rk4_step(&f, t + j as f64 * h, &y, h);
        }
        if y.iter().any(|s| !s.is_finite()) {
            return Err(Error::SimulationDiverged { time: t + sample_dt });
        }
    }
    Ok(out)
}
