//! Parameter-grid enumeration, simulation sweeps and the training dataset.
//!
//! Every grid point gets its reference-step amplitude and timing from a
//! ChaCha stream keyed by `(seed, grid index)`, so any subset of the grid can
//! be regenerated independently and in any order.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::design_pi;
use crate::converter::{dc_steady_state, plant_frequency_response, ConverterParams, SteadyState};
use crate::error::{Error, LoadError, Result};
use crate::simulate::{
    simulate_closed_loop, validate_trajectory, RejectReason, Scenario, Trajectory, Validation,
};

pub const N_FEATURES: usize = 18;
pub const N_TARGETS: usize = 2;

/// Canonical feature order, stored in every dataset file.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "t", "L", "C", "R", "R_s", "V_g", "V0", "dv0", "I_L0", "di_L0", "I_step", "t_step", "K_p",
    "K_i", "f_s", "f_c", "i_ref", "d",
];
pub const TARGET_NAMES: [&str; N_TARGETS] = ["i", "i_out"];
pub const AUX_NAMES: [&str; 2] = ["v", "d"];

/// Index of the duty feature in [`FEATURE_NAMES`].
pub const FEATURE_DUTY: usize = 17;

/// Inclusive range `lower, lower + step, …, ≤ upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl GridRange {
    pub fn fixed(value: f64) -> Self {
        GridRange {
            lower: value,
            upper: value,
            step: 1.0,
        }
    }

    pub fn count(&self) -> usize {
        ((self.upper - self.lower) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn value(&self, k: usize) -> f64 {
        self.lower + k as f64 * self.step
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.lower.is_finite()
            && self.upper.is_finite()
            && self.lower <= self.upper
            && self.step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid range for {name}: {self:?}")))
        }
    }
}

/// Sweep definition, in the units and names of the configuration file.
/// Fields missing from a serialized spec take the full reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "C_uF")]
    pub c_uf: GridRange,
    #[serde(rename = "L_mH")]
    pub l_mh: GridRange,
    #[serde(rename = "R_ohm")]
    pub r_ohm: GridRange,
    #[serde(rename = "V")]
    pub v: GridRange,
    #[serde(rename = "V_g")]
    pub v_g: GridRange,
    #[serde(rename = "f_s_kHz")]
    pub f_s_khz: f64,
    #[serde(rename = "f_c_kHz")]
    pub f_c_khz: f64,
    #[serde(rename = "f_phi_m_Hz")]
    pub f_phi_m_hz: f64,
    #[serde(rename = "phi_m_deg")]
    pub phi_m_deg: f64,
    #[serde(rename = "R_s_ohm")]
    pub r_s_ohm: f64,
    /// Bounds of the uniform law for the reference step time (s).
    #[serde(rename = "t_step_s")]
    pub t_step: [f64; 2],
    #[serde(rename = "t_end_s")]
    pub t_end: f64,
    #[serde(rename = "dt_s")]
    pub sample_dt: f64,
    #[serde(rename = "warmup_s")]
    pub warmup: f64,
    pub seed: u64,
    /// Keep roughly one grid point in `subsample` (1 keeps the whole grid).
    #[serde(default = "one")]
    pub subsample: u64,
}

fn one() -> u64 {
    1
}

impl Default for GridSpec {
    /// The full reference sweep.
    fn default() -> Self {
        GridSpec {
            c_uf: GridRange {
                lower: 1000.0,
                upper: 7000.0,
                step: 1000.0,
            },
            l_mh: GridRange {
                lower: 1.0,
                upper: 7.0,
                step: 1.0,
            },
            r_ohm: GridRange {
                lower: 1.0,
                upper: 500.0,
                step: 10.0,
            },
            v: GridRange {
                lower: 200.0,
                upper: 400.0,
                step: 10.0,
            },
            v_g: GridRange {
                lower: 100.0,
                upper: 200.0,
                step: 10.0,
            },
            f_s_khz: 70.0,
            f_c_khz: 5.0,
            f_phi_m_hz: 255.0,
            phi_m_deg: 50.0,
            r_s_ohm: 30e-3,
            t_step: [0.011, 0.021],
            t_end: 0.03,
            sample_dt: 250e-7,
            warmup: 0.01,
            seed: 0,
            subsample: 1,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.c_uf.validate("C")?;
        self.l_mh.validate("L")?;
        self.r_ohm.validate("R")?;
        self.v.validate("V")?;
        self.v_g.validate("V_g")?;
        let positive = [
            ("f_s", self.f_s_khz),
            ("f_c", self.f_c_khz),
            ("f_phi_m", self.f_phi_m_hz),
            ("t_end", self.t_end),
            ("dt", self.sample_dt),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.phi_m_deg > 0.0 && self.phi_m_deg < 90.0) {
            return Err(Error::Config(format!("phi_m must lie in (0, 90), got {}", self.phi_m_deg)));
        }
        if !(self.r_s_ohm >= 0.0) {
            return Err(Error::Config("R_s must be nonnegative".into()));
        }
        let [lo, hi] = self.t_step;
        if !(0.0 < lo && lo <= hi && hi < self.t_end) {
            return Err(Error::Config(format!("t_step bounds {lo}..{hi} must lie inside (0, t_end)")));
        }
        if !(0.0 <= self.warmup && self.warmup < self.t_end) {
            return Err(Error::Config("warmup must lie in [0, t_end)".into()));
        }
        if self.subsample == 0 {
            return Err(Error::Config("subsample must be at least 1".into()));
        }
        Ok(())
    }

    fn axes(&self) -> [GridRange; 5] {
        [self.c_uf, self.l_mh, self.r_ohm, self.v, self.v_g]
    }

    /// Size of the full Cartesian product (before subsampling).
    pub fn full_size(&self) -> usize {
        self.axes().iter().map(GridRange::count).product()
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("grid spec serializes");
        hex(&Sha256::digest(json))
    }

    #[allow(clippy::manual_is_multiple_of)] // is_multiple_of needs a newer toolchain than rust-version
    fn keeps(&self, index: usize) -> bool {
        self.subsample == 1 || splitmix64(self.seed ^ splitmix64(index as u64)) % self.subsample == 0
    }

    pub fn sample_count(&self) -> usize {
        (self.t_end / self.sample_dt).round() as usize + 1
    }

    pub fn warmup_index(&self) -> usize {
        (self.warmup / self.sample_dt).round() as usize
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One enumerated operating point, before controller design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub params: ConverterParams,
    pub v_target: f64,
    pub steady: SteadyState,
    pub i_step: f64,
    pub t_step: f64,
}

impl GridPoint {
    /// Designs the PI controller for this point; `Err` when infeasible.
    pub fn scenario(&self, spec: &GridSpec) -> std::result::Result<Scenario, RejectReason> {
        let w = 2.0 * PI * spec.f_phi_m_hz;
        let fp = plant_frequency_response(&self.params, &self.steady, w);
        let gains = design_pi(&fp, spec.f_phi_m_hz, spec.phi_m_deg)
            .gains
            .ok_or(RejectReason::InfeasiblePi)?;
        Ok(Scenario {
            id: self.index as u64,
            params: self.params,
            v_target: self.v_target,
            gains,
            i_step: self.i_step,
            t_step: self.t_step,
            t_end: spec.t_end,
            sample_dt: spec.sample_dt,
        })
    }
}

/// Lazily walks the grid in C, L, R, V, V_g nesting order (V_g fastest).
pub fn grid_points(spec: &GridSpec) -> Result<impl Iterator<Item = GridPoint> + '_> {
    spec.validate()?;
    let total = spec.full_size();
    if total == 0 {
        return Err(Error::Empty("parameter grid".into()));
    }
    Ok((0..total)
        .filter(move |&idx| spec.keeps(idx))
        .map(move |idx| grid_point(spec, idx)))
}

/// The point at `index` of the full (unsubsampled) grid.
pub fn grid_point(spec: &GridSpec, index: usize) -> GridPoint {
    let axes = spec.axes();
    let mut rem = index;
    let mut vals = [0.0; 5];
    for a in (0..5).rev() {
        let n = axes[a].count();
        vals[a] = axes[a].value(rem % n);
        rem /= n;
    }
    let [c_uf, l_mh, r, v, v_g] = vals;
    let params = ConverterParams {
        l: l_mh * 1e-3,
        c: c_uf * 1e-6,
        r,
        r_s: spec.r_s_ohm,
        v_g,
        f_s: spec.f_s_khz * 1e3,
        f_c: spec.f_c_khz * 1e3,
    };
    let steady = dc_steady_state(&params, v).expect("grid point is a valid boost operating point");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let i_step = rng.random_range(-1.0..=1.0) * steady.i_l;
    let [lo, hi] = spec.t_step;
    let t_step = lo + (hi - lo) * rng.random::<f64>();
    GridPoint {
        index,
        params,
        v_target: v,
        steady,
        i_step,
        t_step,
    }
}

pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<GridPoint>> {
    Ok(grid_points(spec)?.collect())
}

/// Number of points [`enumerate_grid`] would return, without simulating.
pub fn count_grid(spec: &GridSpec) -> Result<usize> {
    Ok(grid_points(spec)?.count())
}

/// One sample of an accepted curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub x: [f64; N_FEATURES],
    pub y: [f64; N_TARGETS],
    /// Simulated `(v, d)` at the same instant, used by the power-balance term.
    pub aux: [f64; 2],
    pub curve_id: u64,
}

/// Feature rows for every sample at or after the warm-up cutoff.
pub fn build_rows(
    scenario: &Scenario,
    traj: &Trajectory,
    warmup: f64,
) -> Result<Vec<FeatureRow>> {
    match validate_trajectory(traj, &scenario.params) {
        Validation::Accept => {}
        Validation::Reject(reason) => return Err(Error::Rejected(reason)),
    }
    let p = &scenario.params;
    let ss = dc_steady_state(p, scenario.v_target)?;
    let start = (warmup / scenario.sample_dt).round() as usize;
    let end = traj.len().saturating_sub(1);
    let rows = (start..end)
        .map(|n| FeatureRow {
            x: [
                traj.time[n],
                p.l,
                p.c,
                p.r,
                p.r_s,
                p.v_g,
                ss.v,
                ss.delta_v_c,
                ss.i_l,
                ss.delta_i_l,
                scenario.i_step,
                scenario.t_step,
                scenario.gains.k_p,
                scenario.gains.k_i,
                p.f_s,
                p.f_c,
                traj.i_ref[n],
                traj.d[n],
            ],
            y: [traj.i[n], traj.i_out[n]],
            aux: [traj.v[n], traj.d[n]],
            curve_id: scenario.id,
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub id: u64,
    /// First row of this curve in the dataset.
    pub start: usize,
    pub len: usize,
    pub split: Split,
    pub scenario: Scenario,
}

impl CurveMeta {
    pub fn rows(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RejectionCounts {
    pub enumerated: usize,
    pub accepted: usize,
    pub saturation: usize,
    pub dcm: usize,
    pub infeasible_pi: usize,
    pub diverged: usize,
}

impl RejectionCounts {
    pub fn record(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::Saturation => self.saturation += 1,
            RejectReason::Dcm => self.dcm += 1,
            RejectReason::InfeasiblePi => self.infeasible_pi += 1,
            RejectReason::Diverged => self.diverged += 1,
        }
    }

    pub fn rejected(&self) -> usize {
        self.saturation + self.dcm + self.infeasible_pi + self.diverged
    }

    pub fn is_balanced(&self) -> bool {
        self.accepted + self.rejected() == self.enumerated
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub grid_hash: String,
    pub seed: u64,
    pub split_seed: u64,
    pub counts: RejectionCounts,
}

/// Per-column z-score statistics, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub x_mean: [f64; N_FEATURES],
    pub x_std: [f64; N_FEATURES],
    pub y_mean: [f64; N_TARGETS],
    pub y_std: [f64; N_TARGETS],
}

fn column_stats<const N: usize>(rows: impl Iterator<Item = [f64; N]> + Clone) -> ([f64; N], [f64; N]) {
    let mut mean = [0.0; N];
    let mut count = 0usize;
    let rows_first = rows.clone().next();
    let mut constant = [true; N];
    for r in rows.clone() {
        count += 1;
        if let Some(f) = &rows_first {
            for k in 0..N {
                constant[k] &= r[k] == f[k];
            }
        }
        for k in 0..N {
            mean[k] += r[k];
        }
    }
    let n = count.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; N];
    for r in rows {
        for k in 0..N {
            var[k] += (r[k] - mean[k]).powi(2);
        }
    }
    let mut std = var.map(|v| (v / n).sqrt());
    // Rounding in the mean leaves constant columns with a tiny nonzero spread.
    if let Some(first) = rows_first {
        for k in 0..N {
            if constant[k] {
                mean[k] = first[k];
                std[k] = 0.0;
            }
        }
    }
    (mean, std)
}

#[inline]
fn z(value: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (value - mean) / std
    } else {
        0.0
    }
}

impl Scaler {
    pub fn fit<'a>(rows: impl Iterator<Item = (&'a [f64; N_FEATURES], &'a [f64; N_TARGETS])> + Clone) -> Result<Self> {
        if rows.clone().next().is_none() {
            return Err(Error::Empty("scaler needs at least one training row".into()));
        }
        let (x_mean, x_std) = column_stats(rows.clone().map(|(x, _)| *x));
        let (y_mean, y_std) = column_stats(rows.map(|(_, y)| *y));
        Ok(Scaler {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    pub fn fit_rows(rows: &[FeatureRow]) -> Result<Self> {
        Self::fit(rows.iter().map(|r| (&r.x, &r.y)))
    }

    pub fn transform_x(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|k| z(x[k], self.x_mean[k], self.x_std[k]))
    }

    /// Zero-variance columns map back to their mean.
    pub fn inverse_x(&self, zx: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|k| self.x_mean[k] + self.x_std[k] * zx[k])
    }

    pub fn transform_y(&self, y: &[f64; N_TARGETS]) -> [f64; N_TARGETS] {
        std::array::from_fn(|k| z(y[k], self.y_mean[k], self.y_std[k]))
    }

    pub fn inverse_y(&self, zy: &[f64; N_TARGETS]) -> [f64; N_TARGETS] {
        std::array::from_fn(|k| self.y_mean[k] + self.y_std[k] * zy[k])
    }

    pub fn transform(&self, rows: &[FeatureRow]) -> Vec<FeatureRow> {
        rows.iter()
            .map(|r| FeatureRow {
                x: self.transform_x(&r.x),
                y: self.transform_y(&r.y),
                ..*r
            })
            .collect()
    }

    pub fn inverse_transform(&self, rows: &[FeatureRow]) -> Vec<FeatureRow> {
        rows.iter()
            .map(|r| FeatureRow {
                x: self.inverse_x(&r.x),
                y: self.inverse_y(&r.y),
                ..*r
            })
            .collect()
    }

    /// SHA-256 over the little-endian statistics, hex.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        for v in self.x_mean.iter().chain(&self.x_std).chain(&self.y_mean).chain(&self.y_std) {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

/// Accepted curves laid out contiguously, one row per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub features: Vec<[f64; N_FEATURES]>,
    pub targets: Vec<[f64; N_TARGETS]>,
    pub aux: Vec<[f64; 2]>,
    pub curves: Vec<CurveMeta>,
    pub scaler: Option<Scaler>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn push_curve(&mut self, scenario: Scenario, rows: Vec<FeatureRow>) {
        let start = self.features.len();
        let len = rows.len();
        for r in rows {
            self.features.push(r.x);
            self.targets.push(r.y);
            self.aux.push(r.aux);
        }
        self.curves.push(CurveMeta {
            id: scenario.id,
            start,
            len,
            split: Split::Train,
            scenario,
        });
    }

    pub fn row(&self, n: usize, curve_id: u64) -> FeatureRow {
        FeatureRow {
            x: self.features[n],
            y: self.targets[n],
            aux: self.aux[n],
            curve_id,
        }
    }

    pub fn curves_in(&self, split: Split) -> impl Iterator<Item = &CurveMeta> {
        self.curves.iter().filter(move |c| c.split == split)
    }

    /// Refits the scaler on the current training curves.
    pub fn fit_scaler(&mut self) -> Result<&Scaler> {
        let idx: Vec<usize> = self.curves_in(Split::Train).flat_map(|c| c.rows()).collect();
        let scaler = Scaler::fit(idx.iter().map(|&n| (&self.features[n], &self.targets[n])))?;
        Ok(self.scaler.insert(scaler))
    }

    pub fn export_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<&str> = FEATURE_NAMES
            .iter()
            .chain(&TARGET_NAMES)
            .chain(&["aux_v", "aux_d", "curve_id", "split"])
            .copied()
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for c in &self.curves {
            let split = match c.split {
                Split::Train => "train",
                Split::Test => "test",
            };
            for n in c.rows() {
                let nums: Vec<String> = self.features[n]
                    .iter()
                    .chain(&self.targets[n])
                    .chain(&self.aux[n])
                    .map(|v| format!("{v:e}"))
                    .collect();
                writeln!(out, "{},{},{}", nums.join(","), c.id, split)?;
            }
        }
        Ok(())
    }
}

/// Assigns whole curves to train/test; the first `round(n·fraction)` curves of
/// a seeded shuffle go to test.
pub fn split_holdout(dataset: &mut Dataset, test_fraction: f64, seed: u64) -> Result<()> {
    let n = dataset.curves.len();
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::Domain(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n < 5 || n_test == 0 || n_test == n {
        return Err(Error::Empty(format!(
            "{n} curves cannot be split {:.0}/{:.0}",
            100.0 * (1.0 - test_fraction),
            100.0 * test_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in (1..n).rev() {
        let j = rng.random_range(0..=k);
        order.swap(k, j);
    }
    for c in dataset.curves.iter_mut() {
        c.split = Split::Train;
    }
    for &k in &order[..n_test] {
        dataset.curves[k].split = Split::Test;
    }
    dataset.provenance.split_seed = seed;
    Ok(())
}

/// Simulates every enumerated point, applying the rejection filters.
///
/// Curves are appended in grid order; the split and scaler are left unset.
pub fn generate(spec: &GridSpec) -> Result<Dataset> {
    let mut ds = Dataset {
        provenance: Provenance {
            grid_hash: spec.hash_hex(),
            seed: spec.seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut counts = RejectionCounts::default();
    for point in grid_points(spec)? {
        counts.enumerated += 1;
        let scenario = match point.scenario(spec) {
            Ok(s) => s,
            Err(reason) => {
                counts.record(reason);
                continue;
            }
        };
        let traj = match simulate_closed_loop(&scenario) {
            Ok(t) => t,
            Err(Error::SimulationDiverged { .. }) => {
                counts.record(RejectReason::Diverged);
                continue;
            }
            Err(e) => return Err(e),
        };
        match build_rows(&scenario, &traj, spec.warmup) {
            Ok(rows) => {
                counts.accepted += 1;
                ds.push_curve(scenario, rows);
            }
            Err(Error::Rejected(reason)) => counts.record(reason),
            Err(e) => return Err(e),
        }
    }
    log::info!(
        "generated {} curves from {} grid points ({} rejected)",
        counts.accepted,
        counts.enumerated,
        counts.rejected()
    );
    ds.provenance.counts = counts;
    Ok(ds)
}

/// Generate, split and fit the scaler in one go.
pub fn build_dataset(spec: &GridSpec, test_fraction: f64, split_seed: u64) -> Result<Dataset> {
    let mut ds = generate(spec)?;
    split_holdout(&mut ds, test_fraction, split_seed)?;
    ds.fit_scaler()?;
    Ok(ds)
}

// ---------------------------------------------------------------------------
// Binary container.
//
//   magic "BNDS" | version u32 | total length u64 | header length u64
//   | header (JSON: manifest, curves, scaler, provenance)
//   | rows: (18 features, 2 targets, 2 aux) as little-endian f64
//   | SHA-256 of every preceding byte
// ---------------------------------------------------------------------------

const DATASET_MAGIC: &[u8; 4] = b"BNDS";
pub const DATASET_VERSION: u32 = 1;
const ROW_WIDTH: usize = N_FEATURES + N_TARGETS + 2;

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    feature_names: Vec<String>,
    target_names: Vec<String>,
    aux_names: Vec<String>,
    n_rows: usize,
    curves: Vec<CurveMeta>,
    scaler: Option<Scaler>,
    provenance: Provenance,
}

pub(crate) struct Container;

impl Container {
    pub(crate) fn seal(magic: &[u8; 4], version: u32, header: &[u8], body: &[u8]) -> Vec<u8> {
        let total = 4 + 4 + 8 + 8 + header.len() + body.len() + 32;
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(magic);
        out.extend_from_slice(&version.to_le_bytes());
        out.extend_from_slice(&(total as u64).to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header);
        out.extend_from_slice(body);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Returns `(header, body)` after checking magic, version, length and checksum.
    pub(crate) fn open<'a>(
        bytes: &'a [u8],
        magic: &[u8; 4],
        kind: &'static str,
        version: u32,
    ) -> std::result::Result<(&'a [u8], &'a [u8]), LoadError> {
        if bytes.len() < 24 {
            return Err(if bytes.len() >= 4 && &bytes[..4] != magic {
                LoadError::BadMagic { expected: kind }
            } else {
                LoadError::Truncated
            });
        }
        if &bytes[..4] != magic {
            return Err(LoadError::BadMagic { expected: kind });
        }
        let found = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if found != version {
            return Err(LoadError::VersionMismatch {
                found,
                expected: version,
            });
        }
        let total = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < total {
            return Err(LoadError::Truncated);
        }
        if bytes.len() > total || total < 24 + 32 {
            return Err(LoadError::Malformed("length field disagrees with file size".into()));
        }
        let (payload, digest) = bytes.split_at(total - 32);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(LoadError::Checksum);
        }
        let header_len = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        if 24 + header_len > payload.len() {
            return Err(LoadError::Malformed("header overruns payload".into()));
        }
        Ok((&payload[24..24 + header_len], &payload[24 + header_len..]))
    }
}

pub(crate) fn f64s_from_le(bytes: &[u8]) -> impl Iterator<Item = f64> + '_ {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = DatasetHeader {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            target_names: TARGET_NAMES.iter().map(|s| s.to_string()).collect(),
            aux_names: AUX_NAMES.iter().map(|s| s.to_string()).collect(),
            n_rows: self.n_rows(),
            curves: self.curves.clone(),
            scaler: self.scaler.clone(),
            provenance: self.provenance.clone(),
        };
        let header = serde_json::to_vec(&header).expect("dataset header serializes");
        let mut body = Vec::with_capacity(self.n_rows() * ROW_WIDTH * 8);
        for n in 0..self.n_rows() {
            for v in self.features[n].iter().chain(&self.targets[n]).chain(&self.aux[n]) {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        Container::seal(DATASET_MAGIC, DATASET_VERSION, &header, &body)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, LoadError> {
        let (header, body) = Container::open(bytes, DATASET_MAGIC, "dataset", DATASET_VERSION)?;
        let header: DatasetHeader = serde_json::from_slice(header)
            .map_err(|e| LoadError::Malformed(format!("dataset header: {e}")))?;
        if header.feature_names != FEATURE_NAMES
            || header.target_names != TARGET_NAMES
            || header.aux_names != AUX_NAMES
        {
            return Err(LoadError::FeatureOrder(format!(
                "file has {:?} -> {:?}",
                header.feature_names, header.target_names
            )));
        }
        if body.len() != header.n_rows * ROW_WIDTH * 8 {
            return Err(LoadError::Malformed("row block size disagrees with header".into()));
        }
        let mut ds = Dataset {
            features: Vec::with_capacity(header.n_rows),
            targets: Vec::with_capacity(header.n_rows),
            aux: Vec::with_capacity(header.n_rows),
            curves: header.curves,
            scaler: header.scaler,
            provenance: header.provenance,
        };
        let vals: Vec<f64> = f64s_from_le(body).collect();
        for row in vals.chunks_exact(ROW_WIDTH) {
            ds.features.push(row[..N_FEATURES].try_into().unwrap());
            ds.targets.push(row[N_FEATURES..N_FEATURES + N_TARGETS].try_into().unwrap());
            ds.aux.push(row[N_FEATURES + N_TARGETS..].try_into().unwrap());
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}
