use std::collections::HashSet;
use std::f64::consts::PI;

use boostnet_core::control::{design_pi, verify_loop, wrap_degrees};
use boostnet_core::converter::{
    averaged_dynamics, dc_steady_state, plant_frequency_response, plant_pole_frequencies, AveragedState,
    FrequencyPoint,
};
use boostnet_core::dataset::{
    generate, grid_point, split_holdout, Dataset, FeatureRow, GridRange, GridSpec, Scaler, Split, N_FEATURES,
};
use boostnet_core::eval::{box_stats, curve_rmse, step_metrics};
use boostnet_core::simulate::{simulate_closed_loop, simulate_closed_loop_substeps, validate_trajectory, Validation};
use num_complex::Complex64;
use proptest::prelude::*;

const F_PHI_M: f64 = 255.0;
const PHI_M: f64 = 50.0;

fn full_grid_index() -> impl Strategy<Value = usize> {
    0..GridSpec::default().full_size()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn steady_state_is_an_equilibrium(idx in full_grid_index()) {
        let p = grid_point(&GridSpec::default(), idx);
        let params = p.params.lossless();
        let (di, dv) = averaged_dynamics(AveragedState { i: p.steady.i_l, v: p.steady.v }, p.steady.duty, &params);
        prop_assert!(di.abs() < 1e-9 && dv.abs() < 1e-9, "di {di:e} dv {dv:e}");
    }

    #[test]
    fn duty_and_ratio_grow_with_output_voltage(idx in full_grid_index(), dv in 0.1f64..100.0) {
        let p = grid_point(&GridSpec::default(), idx);
        let lo = dc_steady_state(&p.params, p.v_target).unwrap();
        let hi = dc_steady_state(&p.params, p.v_target + dv).unwrap();
        prop_assert!(hi.duty > lo.duty && hi.ratio > lo.ratio);
        for s in [lo, hi] {
            let m = 1.0 / (1.0 - s.duty);
            prop_assert!((m - s.v / p.params.v_g).abs() <= 1e-12 * m);
            prop_assert!((0.0..1.0).contains(&s.duty) && s.i_l >= 0.0);
        }
    }

    #[test]
    fn plant_magnitude_falls_beyond_the_poles(idx in full_grid_index()) {
        let p = grid_point(&GridSpec::default(), idx);
        let (w0, wf) = plant_pole_frequencies(&p.params, &p.steady);
        let start = w0.max(wf);
        let mut last = f64::INFINITY;
        for n in 0..=200 {
            let w = start * 10f64.powf(n as f64 * 4.0 / 200.0);
            let mag = plant_frequency_response(&p.params, &p.steady, w).gain.norm();
            prop_assert!(mag <= last * (1.0 + 1e-12), "magnitude rises at {w} rad/s");
            last = mag;
        }
    }
}

/// Synthetic plant with the phase drawn so the required controller phase lies
/// anywhere in (-135°, 45°).
fn synthetic_plant() -> impl Strategy<Value = (f64, f64)> {
    (-3.0f64..3.0, -135.0f64..45.0).prop_map(|(log_mag, gc_phase)| {
        let plant_phase = wrap_degrees(-180.0 + PHI_M - gc_phase);
        (10f64.powf(log_mag), plant_phase)
    })
}

fn plant_point(mag: f64, phase_deg: f64) -> FrequencyPoint {
    FrequencyPoint::from_gain(2.0 * PI * F_PHI_M, Complex64::from_polar(mag, phase_deg.to_radians()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn design_then_verify((mag, phase) in synthetic_plant()) {
        let fp = plant_point(mag, phase);
        let record = design_pi(&fp, F_PHI_M, PHI_M);
        let required = record.required_gc_phase_deg;
        prop_assert_eq!(record.is_feasible(), -90.0 < required && required <= 0.0, "required {}", required);
        if let Some(gains) = record.gains {
            prop_assert!(gains.k_p > 0.0 && gains.k_i > 0.0);
            let check = verify_loop(&gains, |_| fp.gain, F_PHI_M, PHI_M);
            prop_assert!(check.crossover_error < 1e-6 && check.margin_error < 1e-6, "{check:?}");
        }
    }

    #[test]
    fn gains_scale_inversely_with_plant_magnitude((mag, phase) in synthetic_plant(), g in 1e-2f64..1e2) {
        let a = design_pi(&plant_point(mag, phase), F_PHI_M, PHI_M);
        let b = design_pi(&plant_point(mag * g, phase), F_PHI_M, PHI_M);
        match (a.gains, b.gains) {
            (Some(a), Some(b)) => {
                prop_assert!((b.k_p * g - a.k_p).abs() <= 1e-9 * a.k_p);
                prop_assert!((b.k_i * g - a.k_i).abs() <= 1e-9 * a.k_i);
                prop_assert!((b.alpha() - a.alpha()).abs() <= 1e-9 * a.alpha());
            }
            (None, None) => {}
            _ => prop_assert!(false, "feasibility changed with magnitude"),
        }
    }
}

/// Accepted scenarios drawn from a coarse subsample of the full grid.
fn accepted_scenarios(count: usize) -> Vec<boostnet_core::Scenario> {
    let spec = GridSpec::default();
    (0..spec.full_size())
        .step_by(7919)
        .filter_map(|idx| grid_point(&spec, idx).scenario(&spec).ok())
        .filter(|s| {
            simulate_closed_loop(s).is_ok_and(|t| validate_trajectory(&t, &s.params) == Validation::Accept)
        })
        .take(count)
        .collect()
}

#[test]
fn refinement_converges() {
    let scenarios = accepted_scenarios(8);
    assert_eq!(scenarios.len(), 8);
    for s in &scenarios {
        let coarse = simulate_closed_loop(s).unwrap();
        let fine = simulate_closed_loop_substeps(s, 20).unwrap();
        for (a, b) in coarse.i.iter().chain(&coarse.v).zip(fine.i.iter().chain(&fine.v)) {
            assert!((a - b).abs() <= 1e-7 * b.abs(), "scenario {}: {a} vs {b}", s.id);
        }
    }
}

#[test]
fn series_resistance_dissipates_power() {
    for s in accepted_scenarios(8) {
        let mut s = s;
        s.i_step = 0.0;
        let t = simulate_closed_loop(&s).unwrap();
        let p = s.params;
        let n0 = t.len() / 2;
        let loss: f64 = (n0..t.len()).map(|n| p.v_g * t.i[n] - t.v[n] * t.v[n] / p.r).sum::<f64>() / (t.len() - n0) as f64;
        assert!(loss > 0.0, "scenario {}: mean loss {loss}", s.id);
    }
}

fn toy_spec() -> GridSpec {
    GridSpec {
        c_uf: GridRange { lower: 1000.0, upper: 2000.0, step: 1000.0 },
        l_mh: GridRange { lower: 1.0, upper: 2.0, step: 1.0 },
        r_ohm: GridRange { lower: 41.0, upper: 51.0, step: 10.0 },
        v: GridRange { lower: 200.0, upper: 210.0, step: 10.0 },
        v_g: GridRange { lower: 140.0, upper: 150.0, step: 10.0 },
        seed: 11,
        ..GridSpec::default()
    }
}

#[test]
fn accepted_rows_stay_in_ccm_below_saturation() {
    let ds = generate(&toy_spec()).unwrap();
    let c = ds.provenance.counts;
    assert_eq!(c.accepted + c.saturation + c.dcm + c.infeasible_pi + c.diverged, c.enumerated);
    assert_eq!(ds.curves.len(), c.accepted);
    for curve in &ds.curves {
        for n in curve.rows() {
            let d = ds.aux[n][1];
            assert!(d.abs() < 0.9);
            assert!(ds.targets[n][0] - curve.scenario.params.current_ripple(d) > 0.0);
            assert!(ds.features[n].iter().all(|x| x.is_finite()));
        }
    }
}

fn one_row_curves(n: usize) -> Dataset {
    let spec = GridSpec::default();
    let template = grid_point(&spec, 0).scenario(&spec).unwrap();
    let mut ds = Dataset::default();
    for id in 0..n as u64 {
        let row = FeatureRow {
            x: [id as f64; N_FEATURES],
            y: [1.0, 0.5],
            aux: [200.0, 0.5],
            curve_id: id,
        };
        ds.push_curve(boostnet_core::Scenario { id, ..template }, vec![row]);
    }
    ds
}

#[test]
fn holdout_splits_are_disjoint_over_many_seeds() {
    let mut ds = one_row_curves(57);
    for seed in 0..1000 {
        split_holdout(&mut ds, 0.2, seed).unwrap();
        let train: HashSet<u64> = ds.curves_in(Split::Train).map(|c| c.id).collect();
        let test: HashSet<u64> = ds.curves_in(Split::Test).map(|c| c.id).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 57);
        assert_eq!(test.len(), 11);
    }
}

proptest! {
    #[test]
    fn scaler_round_trip(
        rows in prop::collection::vec((prop::array::uniform18(-1e3f64..1e3), prop::array::uniform2(-50.0f64..50.0)), 1..40),
        constant in -10.0f64..10.0,
    ) {
        let mut rows = rows;
        for (x, _) in rows.iter_mut() {
            x[5] = constant;
        }
        let scaler = Scaler::fit(rows.iter().map(|(x, y)| (x, y))).unwrap();
        prop_assert!(scaler.x_std.iter().chain(&scaler.y_std).all(|s| *s >= 0.0));
        for (x, y) in &rows {
            let zx = scaler.transform_x(x);
            prop_assert_eq!(zx[5], 0.0);
            let back = scaler.inverse_x(&zx);
            for j in (0..N_FEATURES).filter(|&j| j != 5) {
                prop_assert!((back[j] - x[j]).abs() <= 1e-12 * x[j].abs().max(1.0));
            }
            let by = scaler.inverse_y(&scaler.transform_y(y));
            for j in 0..2 {
                prop_assert!((by[j] - y[j]).abs() <= 1e-12 * y[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn rmse_is_metric_like(
        pairs in prop::collection::vec((prop::array::uniform2(-5.0f64..5.0), prop::array::uniform2(-5.0f64..5.0)), 1..60),
        g in 0.01f64..100.0,
        rot in 0usize..60,
    ) {
        let (a, b): (Vec<[f64; 2]>, Vec<[f64; 2]>) = pairs.into_iter().unzip();
        let base = curve_rmse(&a, &b).unwrap();
        prop_assert_eq!(curve_rmse(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(base == 0.0, a == b);

        let (mut ra, mut rb) = (a.clone(), b.clone());
        let k = rot % a.len();
        ra.rotate_left(k);
        rb.rotate_left(k);
        ra.reverse();
        rb.reverse();
        prop_assert!((curve_rmse(&ra, &rb).unwrap() - base).abs() <= 1e-12 * base.max(1e-300));

        let scaled: Vec<[f64; 2]> = a.iter().zip(&b).map(|(p, t)| [t[0] + g * (p[0] - t[0]), t[1] + g * (p[1] - t[1])]).collect();
        prop_assert!((curve_rmse(&scaled, &b).unwrap() - g * base).abs() <= 1e-9 * g * base.max(1e-300));
    }

    #[test]
    fn step_metrics_translation_and_amplitude(
        tau in 2e-4f64..3e-3,
        zeta in 0.2f64..1.5,
        shift in -0.5f64..0.5,
        g in 0.1f64..10.0,
        y0 in -2.0f64..2.0,
        amp in prop_oneof![-3.0f64..-0.5, 0.5f64..3.0],
    ) {
        let dt = 25e-6;
        let t_step = 5e-3;
        let time: Vec<f64> = (0..1200).map(|n| n as f64 * dt).collect();
        let wn = 1.0 / tau;
        let y: Vec<f64> = time.iter().map(|&t| {
            let s = (t - t_step).max(0.0);
            let resp = if zeta < 1.0 {
                let wd = wn * (1.0 - zeta * zeta).sqrt();
                1.0 - (-zeta * wn * s).exp() * ((wd * s).cos() + zeta * wn / wd * (wd * s).sin())
            } else {
                1.0 - (-s / tau).exp()
            };
            y0 + amp * resp
        }).collect();
        let y_final = y0 + amp;
        let base = step_metrics(&time, &y, t_step, y0, y_final).unwrap();

        let shifted: Vec<f64> = time.iter().map(|t| t + shift).collect();
        let moved = step_metrics(&shifted, &y, t_step + shift, y0, y_final).unwrap();
        // Times are compared relative to 1 µs at the smallest; percentages to 1e-6 %.
        let close = |a: Option<f64>, b: Option<f64>, tol: f64| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= tol * a.abs().max(1e-6),
            (None, None) => true,
            _ => false,
        };
        for (a, b) in [
            (base.rise_time, moved.rise_time),
            (base.settling_time, moved.settling_time),
            (base.transient_time, moved.transient_time),
        ] {
            prop_assert!(close(a, b, 1e-6), "{a:?} vs {b:?}");
        }
        prop_assert_eq!(base.peak, moved.peak);
        if zeta < 0.9 {
            prop_assert!(close(Some(base.peak_time), Some(moved.peak_time), 1e-6));
        }

        let ys: Vec<f64> = y.iter().map(|v| g * v).collect();
        let scaled = step_metrics(&time, &ys, t_step, g * y0, g * y_final).unwrap();
        prop_assert!(close(Some(g * base.peak), Some(scaled.peak), 1e-9));
        prop_assert!(close(base.settling_min.map(|v| g * v), scaled.settling_min, 1e-9));
        prop_assert!(close(base.settling_max.map(|v| g * v), scaled.settling_max, 1e-9));
        for (a, b) in [
            (base.rise_time, scaled.rise_time),
            (base.settling_time, scaled.settling_time),
            (base.transient_time, scaled.transient_time),
        ] {
            prop_assert!(close(a, b, 1e-9), "{a:?} vs {b:?}");
        }
        // Without overshoot the peak is a flat settled tail and its argmax is a rounding tie.
        if zeta < 0.9 {
            prop_assert!(close(Some(base.peak_time), Some(scaled.peak_time), 1e-9));
        }
        for (a, b) in [(base.overshoot, scaled.overshoot), (base.undershoot, scaled.undershoot)] {
            prop_assert!(close(a.map(|v| v.max(1e-6)), b.map(|v| v.max(1e-6)), 1e-6), "{a:?} vs {b:?}");
        }
        if let (Some(lo), Some(hi)) = (base.settling_min, base.settling_max) {
            prop_assert!(lo <= hi);
        }
        prop_assert!(base.peak >= 0.0);
    }

    #[test]
    fn box_outliers_lie_outside_the_fences(values in prop::collection::vec(-1e3f64..1e3, 1..80), spikes in prop::collection::vec(-1e6f64..1e6, 0..4)) {
        let mut values = values;
        values.extend(spikes);
        let b = box_stats(&values).unwrap();
        prop_assert!(b.q1 <= b.median && b.median <= b.q3);
        let (lo, hi) = (b.q1 - 1.5 * b.iqr, b.q3 + 1.5 * b.iqr);
        let expected: Vec<f64> = values.iter().copied().filter(|v| *v < lo || *v > hi).collect();
        prop_assert_eq!(&b.outliers, &expected);
        prop_assert!(lo <= b.whisker_low && b.whisker_high <= hi);
    }
}
