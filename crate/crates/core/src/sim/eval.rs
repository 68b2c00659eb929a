use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Scene, SimError};
use crate::geometry::{euler_decompose, lce_angle, RigidTransform};
use crate::numfmt::{fmt6, sig6};
use crate::pose::{status_str, EstimateStatus, FragmentPoseEstimate, StageTimings};

/// Pose error decomposed about the anatomical axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rot_total_deg: f64,
    pub rot_lr_deg: f64,
    pub rot_is_deg: f64,
    pub rot_ap_deg: f64,
    pub trans_total_mm: f64,
    pub trans_lr_mm: f64,
    pub trans_is_mm: f64,
    pub trans_ap_mm: f64,
    pub lce_error_deg: f64,
    pub status: EstimateStatus,
    pub timings: StageTimings,
}

/// Error of an estimated relative motion against the truth, via
/// `E = Δ_est · Δ_true⁻¹`. Per-axis values are magnitudes.
pub fn pose_error(estimate: &RigidTransform, truth: &RigidTransform) -> Result<(f64, [f64; 3], f64, [f64; 3]), SimError> {
    let e = estimate.compose(&truth.inverse())?;
    let eu = euler_decompose(e.rotation())?;
    let t = e.translation();
    Ok((e.rotation_angle_deg(), [eu.lr.abs(), eu.is.abs(), eu.ap.abs()], t.norm(), [t.x.abs(), t.y.abs(), t.z.abs()]))
}

pub fn evaluate(estimate: &FragmentPoseEstimate, scene: &Scene) -> Result<ErrorReport, SimError> {
    let delta = match (&estimate.status, &estimate.delta_app) {
        (EstimateStatus::Success, Some(d)) => d,
        _ => return Err(SimError::EstimateFailed(estimate.status)),
    };
    evaluate_delta(delta, scene, estimate.timings)
}

/// Error report of a successful relative-motion estimate.
pub fn evaluate_delta(delta: &RigidTransform, scene: &Scene, timings: StageTimings) -> Result<ErrorReport, SimError> {
    let (rot, r_ax, trans, t_ax) = pose_error(delta, &scene.true_delta_app)?;
    let lce_est = lce_angle(delta, &scene.lce_landmarks)?;
    let lce_true = lce_angle(&scene.true_delta_app, &scene.lce_landmarks)?;
    Ok(ErrorReport {
        rot_total_deg: rot,
        rot_lr_deg: r_ax[0],
        rot_is_deg: r_ax[1],
        rot_ap_deg: r_ax[2],
        trans_total_mm: trans,
        trans_lr_mm: t_ax[0],
        trans_is_mm: t_ax[1],
        trans_ap_mm: t_ax[2],
        lce_error_deg: (lce_est - lce_true).abs(),
        status: EstimateStatus::Success,
        timings,
    })
}

impl ErrorReport {
    pub fn values(&self) -> [f64; 9] {
        [
            self.rot_total_deg,
            self.rot_lr_deg,
            self.rot_is_deg,
            self.rot_ap_deg,
            self.trans_total_mm,
            self.trans_lr_mm,
            self.trans_is_mm,
            self.trans_ap_mm,
            self.lce_error_deg,
        ]
    }
}

pub const ERROR_COLUMNS: [&str; 9] = [
    "rot_total_deg",
    "rot_lr_deg",
    "rot_is_deg",
    "rot_ap_deg",
    "trans_total_mm",
    "trans_lr_mm",
    "trans_is_mm",
    "trans_ap_mm",
    "lce_error_deg",
];

/// One row of a batch summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub status: EstimateStatus,
    pub error: Option<ErrorReport>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Column means and sample standard deviations over successful rows.
pub fn summary_stats(rows: &[SummaryRow]) -> ([f64; 9], [f64; 9]) {
    let ok: Vec<[f64; 9]> = rows.iter().filter_map(|r| r.error.as_ref().map(ErrorReport::values)).collect();
    let mut mean = [f64::NAN; 9];
    let mut std = [f64::NAN; 9];
    for c in 0..9 {
        let col: Vec<f64> = ok.iter().map(|v| v[c]).collect();
        (mean[c], std[c]) = mean_std(&col);
    }
    (mean, std)
}

/// CSV with one row per trial followed by `Mean` and `Std.` rows.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("trial,status");
    for c in ERROR_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.label, status_str(r.status));
        match &r.error {
            Some(e) => e.values().iter().for_each(|v| {
                let _ = write!(out, ",{}", fmt6(*v));
            }),
            None => out.push_str(&",".repeat(9)),
        }
        out.push('\n');
    }
    let (mean, std) = summary_stats(rows);
    for (name, vals) in [("Mean", mean), ("Std.", std)] {
        let _ = write!(out, "{name},");
        vals.iter().for_each(|v| {
            let _ = write!(out, ",{}", fmt6(*v));
        });
        out.push('\n');
    }
    out
}

/// Fixed-width text table in the same layout as [`summary_csv`].
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<16} | {:>7} {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} {:>7} | {:>7}",
        "", "", "Rot", "LR", "IS", "AP", "Trans", "LR", "IS", "AP", "LCE"
    );
    let line = |label: &str, status: &str, v: Option<[f64; 9]>| {
        let cells: Vec<String> = match v {
            Some(v) => v.iter().map(|x| format!("{:>7.2}", sig6(*x))).collect(),
            None => vec![format!("{:>7}", "-"); 9],
        };
        format!(
            "{:<8} {:<16} | {} {} {} {} | {} {} {} {} | {}",
            label, status, cells[0], cells[1], cells[2], cells[3], cells[4], cells[5], cells[6], cells[7], cells[8]
        )
    };
    for r in rows {
        let _ = writeln!(out, "{}", line(&r.label, status_str(r.status), r.error.as_ref().map(ErrorReport::values)));
    }
    let (mean, std) = summary_stats(rows);
    let _ = writeln!(out, "{}", line("Mean", "", Some(mean)));
    let _ = writeln!(out, "{}", line("Std.", "", Some(std)));
    out
}
