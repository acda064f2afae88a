//! PI current-controller design by loop shaping at a target crossover.
//!
//! Given the plant's magnitude and phase at the crossover frequency, the
//! controller must supply the phase needed for the requested margin and the
//! magnitude that brings the loop gain to unity there. A PI stage can only
//! contribute phase in (−90°, 0°]; outside that window the design is infeasible.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::converter::FrequencyPoint;
use crate::error::{Error, Result};

/// Largest `K_i/K_p` ratio the designer will produce (rad/s).
pub const ALPHA_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub k_p: f64,
    pub k_i: f64,
}

impl PiGains {
    pub fn alpha(&self) -> f64 {
        self.k_i / self.k_p
    }
}

/// Every intermediate quantity of one design, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiDesignRecord {
    pub f_phi_m: f64,
    pub phi_m: f64,
    pub required_gc_phase_deg: f64,
    pub required_gc_mag_db: f64,
    pub alpha: f64,
    pub k_p_prime: f64,
    pub gc_prime_mag_db: f64,
    /// `None` when no PI controller can meet the specification.
    pub gains: Option<PiGains>,
}

impl PiDesignRecord {
    pub fn is_feasible(&self) -> bool {
        self.gains.is_some()
    }
}

/// Wraps an angle in degrees into (−180°, 180°].
pub fn wrap_degrees(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

pub fn design_pi(plant_at_crossover: &FrequencyPoint, f_phi_m: f64, phi_m: f64) -> PiDesignRecord {
    let omega = 2.0 * PI * f_phi_m;
    let gc_phase = wrap_degrees(-(plant_at_crossover.phase_deg + (180.0 - phi_m)));
    let gc_mag_db = -plant_at_crossover.magnitude_db;

    let alpha = (omega / (gc_phase + 90.0).to_radians().tan()).min(ALPHA_CAP);
    let k_p_prime = 1.0 / alpha;
    // |G_c'| with K_i' = 1.
    let gc_prime_mag_db = 20.0 * (((omega * k_p_prime).powi(2) + 1.0).sqrt() / omega).log10();
    let k_i = 10f64.powf((gc_mag_db - gc_prime_mag_db) / 20.0);
    let k_p = k_i / alpha;

    let phase_ok = gc_phase > -90.0 && gc_phase <= 0.0;
    let gains_ok = [alpha, k_i, k_p].iter().all(|g| g.is_finite() && *g > 0.0);
    PiDesignRecord {
        f_phi_m,
        phi_m,
        required_gc_phase_deg: gc_phase,
        required_gc_mag_db: gc_mag_db,
        alpha,
        k_p_prime,
        gc_prime_mag_db,
        gains: (phase_ok && gains_ok).then_some(PiGains { k_p, k_i }),
    }
}

/// `G_c(jω) = K_p + K_i/(jω)`.
pub fn pi_frequency_response(gains: &PiGains, omega: f64) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!(
            "PI response is undefined at omega = {omega} (integrator pole)"
        )));
    }
    Ok(Complex64::new(gains.k_p, -gains.k_i / omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopCheck {
    /// `| |G_c·G|(ω_φm) − 1 |`.
    pub crossover_error: f64,
    /// Absolute phase-margin error in degrees.
    pub margin_error: f64,
}

/// Evaluates the designed loop at the target crossover.
pub fn verify_loop<F>(gains: &PiGains, plant: F, f_phi_m: f64, phi_m: f64) -> LoopCheck
where
    F: Fn(f64) -> Complex64,
{
    let omega = 2.0 * PI * f_phi_m;
    let controller = Complex64::new(gains.k_p, -gains.k_i / omega);
    let loop_gain = controller * plant(omega);
    let margin = wrap_degrees(180.0 + loop_gain.arg().to_degrees());
    LoopCheck {
        crossover_error: (loop_gain.norm() - 1.0).abs(),
        margin_error: (margin - phi_m).abs(),
    }
}
