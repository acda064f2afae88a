//! Per-curve error, step-response metrics, their aggregation across curves,
//! and box-plot statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root mean squared error over all samples and both current components.
pub fn curve_rmse(pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "curve lengths differ: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("curve has no samples".into()));
    }
    let sq: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum();
    Ok((sq / (2 * pred.len()) as f64).sqrt())
}

/// Fraction of the record averaged for the settled value.
pub const FINAL_FRACTION: f64 = 0.05;
/// Settling band relative to the transition (or peak deviation for the transient time).
pub const SETTLING_BAND: f64 = 0.02;
/// Below this `|y_final|` the percentage metrics are not reported.
pub const TINY_FINAL: f64 = 1e-9;

/// Mean of the final 5% of samples (at least one).
pub fn settled_value(y: &[f64]) -> f64 {
    let n = ((y.len() as f64 * FINAL_FRACTION).ceil() as usize).clamp(1, y.len().max(1));
    y[y.len() - n..].iter().sum::<f64>() / n as f64
}

/// Mean of the samples strictly before `t_step`, or the first sample if there are none.
pub fn initial_value(time: &[f64], y: &[f64], t_step: f64) -> f64 {
    let n = time.iter().take_while(|&&t| t < t_step).count();
    if n == 0 {
        y[0]
    } else {
        y[..n].iter().sum::<f64>() / n as f64
    }
}

/// Step-response characteristics. Times are measured from the step instant.
/// `None` marks a metric the record does not define: a threshold never
/// reached, a band never entered, or a percentage over a near-zero final value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub rise_time: Option<f64>,
    pub transient_time: Option<f64>,
    pub settling_time: Option<f64>,
    pub settling_min: Option<f64>,
    pub settling_max: Option<f64>,
    /// Percent of `|y_final|`.
    pub overshoot: Option<f64>,
    pub undershoot: Option<f64>,
    pub peak: f64,
    pub peak_time: f64,
    /// Set when `y_final == y_init`; times and percentages are then zero.
    pub zero_transition: bool,
}

/// First time `g` crosses up through zero, linearly interpolated.
fn first_crossing(t: &[f64], g: impl Fn(usize) -> f64) -> Option<(f64, usize)> {
    if g(0) >= 0.0 {
        return Some((t[0], 0));
    }
    (1..t.len()).find(|&n| g(n) >= 0.0).map(|n| {
        let (a, b) = (g(n - 1), g(n));
        (t[n - 1] + (t[n] - t[n - 1]) * (-a) / (b - a), n)
    })
}

/// Earliest time after which `|y − y_final| ≤ band` holds for the rest of the record.
fn settle_time(t: &[f64], y: &[f64], y_final: f64, band: f64) -> Option<f64> {
    let outside = |n: usize| (y[n] - y_final).abs() - band;
    match (0..y.len()).rev().find(|&n| outside(n) > 0.0) {
        None => Some(t[0]),
        Some(n) if n + 1 == y.len() => None,
        Some(n) => {
            let (a, b) = (outside(n), outside(n + 1));
            Some(t[n] + (t[n + 1] - t[n]) * a / (a - b))
        }
    }
}

/// Metrics of the part of `(time, y)` at or after `t_step`.
pub fn step_metrics(time: &[f64], y: &[f64], t_step: f64, y_init: f64, y_final: f64) -> Result<StepMetrics> {
    if time.len() != y.len() {
        return Err(Error::Shape(format!("time has {} samples, y has {}", time.len(), y.len())));
    }
    let first = time.iter().take_while(|&&t| t < t_step).count();
    if first == time.len() {
        return Err(Error::Empty("no samples after the step".into()));
    }
    let t: Vec<f64> = time[first..].iter().map(|&t| t - t_step).collect();
    let y = &y[first..];

    let (peak_n, peak) = y
        .iter()
        .map(|v| (v - y_init).abs())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (n, d)| if d > best.1 { (n, d) } else { best });
    let peak_time = t[peak_n];
    let delta = y_final - y_init;
    let (y_min, y_max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    if delta == 0.0 {
        return Ok(StepMetrics {
            rise_time: Some(0.0),
            transient_time: Some(0.0),
            settling_time: Some(0.0),
            settling_min: Some(y_min),
            settling_max: Some(y_max),
            overshoot: Some(0.0),
            undershoot: Some(0.0),
            peak,
            peak_time,
            zero_transition: true,
        });
    }

    let progress = |n: usize| (y[n] - y_init) / delta;
    let t10 = first_crossing(&t, |n| progress(n) - 0.1);
    let t90 = first_crossing(&t, |n| progress(n) - 0.9);
    let rise_time = match (t10, t90) {
        (Some((a, _)), Some((b, _))) => Some(b - a),
        _ => None,
    };
    let (settling_min, settling_max) = match t10 {
        Some((_, n)) => {
            let (lo, hi) = y[n..].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            (Some(lo), Some(hi))
        }
        None => (None, None),
    };
    let settling_time = settle_time(&t, y, y_final, SETTLING_BAND * delta.abs());
    let transient_time = settle_time(&t, y, y_final, SETTLING_BAND * peak);

    let (overshoot, undershoot) = if y_final.abs() < TINY_FINAL {
        (None, None)
    } else {
        let base = y_final.abs();
        let (beyond, behind) = if delta > 0.0 {
            (y_max - y_final, y_init - y_min)
        } else {
            (y_final - y_min, y_max - y_init)
        };
        (Some(100.0 * beyond.max(0.0) / base), Some(100.0 * behind.max(0.0) / base))
    };

    Ok(StepMetrics {
        rise_time,
        transient_time,
        settling_time,
        settling_min,
        settling_max,
        overshoot,
        undershoot,
        peak,
        peak_time,
        zero_transition: false,
    })
}

/// Metrics with `y_init` from the pre-step samples and `y_final` from the settled tail.
pub fn step_metrics_auto(time: &[f64], y: &[f64], t_step: f64) -> Result<StepMetrics> {
    if y.is_empty() {
        return Err(Error::Empty("empty record".into()));
    }
    step_metrics(time, y, t_step, initial_value(time, y, t_step), settled_value(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    RiseTime,
    TransientTime,
    SettlingTime,
    SettlingMin,
    SettlingMax,
    Overshoot,
    Undershoot,
    Peak,
    PeakTime,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::Rmse,
        Metric::RiseTime,
        Metric::TransientTime,
        Metric::SettlingTime,
        Metric::SettlingMin,
        Metric::SettlingMax,
        Metric::Overshoot,
        Metric::Undershoot,
        Metric::Peak,
        Metric::PeakTime,
    ];

    /// Overshoot and undershoot summaries omit mean and spread.
    pub fn median_only(self) -> bool {
        matches!(self, Metric::Overshoot | Metric::Undershoot)
    }

    fn of(self, m: &StepMetrics) -> Option<f64> {
        match self {
            Metric::Rmse => None,
            Metric::RiseTime => m.rise_time,
            Metric::TransientTime => m.transient_time,
            Metric::SettlingTime => m.settling_time,
            Metric::SettlingMin => m.settling_min,
            Metric::SettlingMax => m.settling_max,
            Metric::Overshoot => m.overshoot,
            Metric::Undershoot => m.undershoot,
            Metric::Peak => Some(m.peak),
            Metric::PeakTime => Some(m.peak_time),
        }
    }
}

/// Predicted and simulated currents of one curve, `(i, i_out)` per sample.
#[derive(Debug, Clone, Copy)]
pub struct CurvePair<'a> {
    pub time: &'a [f64],
    pub t_step: f64,
    pub pred: &'a [[f64; 2]],
    pub target: &'a [[f64; 2]],
}

/// Per-curve error `e` for every metric: the curve RMSE for [`Metric::Rmse`],
/// otherwise `|m(ŷ_in) − m(y_in)| + |m(ŷ_out) − m(y_out)|`.
pub fn curve_errors(pair: &CurvePair) -> Result<Vec<(Metric, Option<f64>)>> {
    let rmse = curve_rmse(pair.pred, pair.target)?;
    let component = |c: &[[f64; 2]], k: usize| c.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let mut metrics = Vec::with_capacity(2);
    for k in 0..2 {
        let p = step_metrics_auto(pair.time, &component(pair.pred, k), pair.t_step)?;
        let t = step_metrics_auto(pair.time, &component(pair.target, k), pair.t_step)?;
        metrics.push((p, t));
    }
    Ok(Metric::ALL
        .iter()
        .map(|&m| {
            if m == Metric::Rmse {
                return (m, Some(rmse));
            }
            let e = metrics.iter().try_fold(0.0, |acc, (p, t)| Some(acc + (m.of(p)? - m.of(t)?).abs()));
            (m, e)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("no values to summarize".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Summary {
        mean,
        std,
        median: quantile(&sorted(values), 0.5),
    })
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear interpolation between order statistics at rank `(n − 1)·p`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One line of a [`MetricReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub metric: Metric,
    /// Curves on which the metric is defined for both prediction and target.
    pub curves: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub rows: Vec<MetricRow>,
    /// Per-curve RMSE in input order.
    pub curve_rmse: Vec<f64>,
}

pub fn metric_error_report(model: &str, curves: &[CurvePair]) -> Result<MetricReport> {
    if curves.is_empty() {
        return Err(Error::Empty("no curves to evaluate".into()));
    }
    let per_curve: Vec<Vec<(Metric, Option<f64>)>> = curves.iter().map(curve_errors).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(Metric::ALL.len());
    for (k, &metric) in Metric::ALL.iter().enumerate() {
        let values: Vec<f64> = per_curve.iter().filter_map(|c| c[k].1).collect();
        let summary = summarize(&values).ok();
        let keep_spread = !metric.median_only();
        rows.push(MetricRow {
            model: model.to_string(),
            metric,
            curves: values.len(),
            mean: summary.filter(|_| keep_spread).map(|s| s.mean),
            std: summary.filter(|_| keep_spread).map(|s| s.std),
            median: summary.map(|s| s.median),
        });
    }
    let curve_rmse = per_curve.iter().map(|c| c[0].1.expect("rmse is always defined")).collect();
    Ok(MetricReport {
        model: model.to_string(),
        rows,
        curve_rmse,
    })
}

impl MetricReport {
    /// One JSON object per line, one line per metric.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Most extreme values inside the `1.5·iqr` fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("box statistics need at least one value".into()));
    }
    let s = sorted(values);
    let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |v: &&f64| (lo_fence..=hi_fence).contains(*v);
    let whisker_low = *s.iter().find(inside).expect("the median lies inside the fences");
    let whisker_high = *s.iter().rev().find(inside).expect("the median lies inside the fences");
    let outliers = values.iter().copied().filter(|v| !(lo_fence..=hi_fence).contains(v)).collect();
    Ok(BoxStats {
        q1,
        median,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Box-plot data line: `{"model": ..., "q1": ..., ...}`.
pub fn write_box_jsonl<W: Write>(model: &str, stats: &BoxStats, mut out: W) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        model: &'a str,
        #[serde(flatten)]
        stats: &'a BoxStats,
    }
    serde_json::to_writer(&mut out, &Line { model, stats })?;
    writeln!(out)
}
