use serde_json::{json, Value};

use super::{EstimateStatus, FragmentPoseEstimate};
use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::geometry::{euler_decompose, Frame, RigidTransform};
use crate::numfmt::sig6;

pub const EULER_CONVENTION: &str = "extrinsic LR then IS then AP: R = Rz(ap) Ry(is) Rx(lr), degrees";

fn matrix_json(t: &RigidTransform) -> Value {
    let r = t.rotation();
    Value::from((0..3).map(|i| (0..3).map(|j| sig6(r[(i, j)])).collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn vec_json(v: &nalgebra::Vector3<f64>) -> Value {
    json!([sig6(v.x), sig6(v.y), sig6(v.z)])
}

pub fn transform_json(t: &RigidTransform) -> Value {
    let mut out = json!({
        "from": t.from_frame(),
        "to": t.to_frame(),
        "rotation": matrix_json(t),
        "translation_mm": vec_json(t.translation()),
    });
    if let Ok(e) = euler_decompose(t.rotation()) {
        out["euler_deg"] = json!({"lr": sig6(e.lr), "is": sig6(e.is), "ap": sig6(e.ap)});
    }
    out
}

/// Inverse of [`transform_json`]. The rounded rotation is projected back onto
/// the nearest rotation.
pub fn transform_from_json(v: &Value) -> Option<RigidTransform> {
    let from: Frame = serde_json::from_value(v.get("from")?.clone()).ok()?;
    let to: Frame = serde_json::from_value(v.get("to")?.clone()).ok()?;
    let rows = v.get("rotation")?.as_array()?;
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        let row = rows.get(i)?.as_array()?;
        for j in 0..3 {
            m[(i, j)] = row.get(j)?.as_f64()?;
        }
    }
    let t = v.get("translation_mm")?.as_array()?;
    let t = Vector3::new(t.first()?.as_f64()?, t.get(1)?.as_f64()?, t.get(2)?.as_f64()?);
    let r = Rotation3::from_matrix(&m);
    Some(RigidTransform::from_rotation(&r, t, from, to))
}

pub fn status_from_str(s: &str) -> Option<EstimateStatus> {
    match s {
        "success" => Some(EstimateStatus::Success),
        "failed_ilium" => Some(EstimateStatus::FailedIlium),
        "failed_fragment" => Some(EstimateStatus::FailedFragment),
        _ => None,
    }
}

pub fn status_str(s: EstimateStatus) -> &'static str {
    match s {
        EstimateStatus::Success => "success",
        EstimateStatus::FailedIlium => "failed_ilium",
        EstimateStatus::FailedFragment => "failed_fragment",
    }
}

impl FragmentPoseEstimate {
    /// Report JSON with every number rounded to 6 significant digits.
    /// Wall times are left out when `deterministic` is set so that reports
    /// are byte-identical across runs.
    pub fn report_json(&self, deterministic: bool) -> Value {
        let opt = |t: &Option<RigidTransform>| t.as_ref().map(transform_json).unwrap_or(Value::Null);
        let matches = |m: &[super::BbMatch]| {
            Value::from(
                m.iter()
                    .map(|m| json!({"bb": m.bb, "detection": m.det, "distance_px": sig6(m.distance)}))
                    .collect::<Vec<_>>(),
            )
        };
        let mut out = json!({
            "status": status_str(self.status),
            "euler_convention": EULER_CONVENTION,
            "delta_app": opt(&self.delta_app),
            "lce_deg": self.lce_deg.map(sig6),
            "n_ilium_matched": self.n_ilium_matched(),
            "n_frag_matched": self.n_frag_matched(),
            "ilium_matches": matches(&self.ilium_matches),
            "fragment_matches": matches(&self.fragment_matches),
            "ilium_pose": opt(&self.ilium_pose),
            "fragment_pose": opt(&self.fragment_pose),
            "candidate_counts": {
                "ilium": {
                    "before_pruning": self.ilium_counts.max,
                    "after_p3p": self.ilium_counts.after_p3p,
                    "after_anatomical": self.ilium_counts.after_filter,
                },
                "fragment": {
                    "before_pruning": self.fragment_counts.max,
                    "after_p3p": self.fragment_counts.after_p3p,
                    "after_relative_pose": self.fragment_counts.after_filter,
                },
            },
        });
        if !deterministic {
            let t = &self.timings;
            out["timings_ms"] = json!({
                "detect": sig6(t.detect_ms),
                "ilium": sig6(t.ilium_ms),
                "fragment": sig6(t.fragment_ms),
                "total": sig6(t.total_ms),
            });
        }
        out
    }
}
