use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{render_view, trial_rng, SimError, TrialInputs, TruthKind, ViewObservation};
use crate::detect::save_grayscale16;
use crate::geometry::CArmCamera;

/// Cameras of a simulated case, indexed by view id. Views 0–2 are the
/// reconstruction views; view 3 is the postoperative view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSet {
    pub schema_version: u32,
    pub cameras: Vec<CArmCamera>,
}

impl CameraSet {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(cameras: Vec<CArmCamera>) -> Self {
        Self { schema_version: Self::SCHEMA_VERSION, cameras }
    }
}

pub fn write_cameras_json(set: &CameraSet, path: &Path) -> Result<(), SimError> {
    let text = serde_json::to_string_pretty(set).map_err(|e| SimError::Json(e.to_string()))?;
    fs::write(path, text).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

pub fn read_cameras_json(path: &Path) -> Result<CameraSet, SimError> {
    let text = fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    let set: CameraSet = serde_json::from_str(&text).map_err(|e| SimError::Json(e.to_string()))?;
    if set.schema_version != CameraSet::SCHEMA_VERSION {
        return Err(SimError::SchemaVersion(set.schema_version));
    }
    Ok(set)
}

fn kind_cells(k: TruthKind) -> (&'static str, String) {
    match k {
        TruthKind::Ilium(i) => ("ilium", i.to_string()),
        TruthKind::Fragment(i) => ("fragment", i.to_string()),
        TruthKind::Contralateral(i) => ("contralateral", i.to_string()),
        TruthKind::False => ("false", String::new()),
    }
}

/// CSV `view,x,y,exact_x,exact_y,kind,index`; occluded BBs are listed with
/// kind `occluded:<label>` and empty coordinates.
pub fn write_truth_csv<W: Write>(views: &[&ViewObservation], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| SimError::Io(e.to_string());
    w.write_record(["view", "x", "y", "exact_x", "exact_y", "kind", "index"]).map_err(io)?;
    for v in views {
        for t in &v.truth {
            let (kind, idx) = kind_cells(t.kind);
            w.write_record([
                v.view_id.to_string(),
                crate::numfmt::fmt6(t.pos.x),
                crate::numfmt::fmt6(t.pos.y),
                crate::numfmt::fmt6(t.exact.x),
                crate::numfmt::fmt6(t.exact.y),
                kind.to_string(),
                idx,
            ])
            .map_err(io)?;
        }
        for k in &v.occluded {
            let (kind, idx) = kind_cells(*k);
            w.write_record([v.view_id.to_string(), String::new(), String::new(), String::new(), String::new(), format!("occluded:{kind}"), idx])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))
}

/// Write a simulated case to `dir`: `scene.json`, `cameras.json` (as known to
/// the estimator), `cameras_true.json`, `truth.csv` and `view{0..3}.png`.
pub fn write_simulation(dir: &Path, inputs: &TrialInputs, seed: u64) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
    let views: Vec<&ViewObservation> = inputs.recon_views.iter().chain(std::iter::once(&inputs.estimation_view)).collect();
    let path = dir.join("scene.json");
    fs::write(&path, inputs.scene.to_json()?).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    write_cameras_json(&CameraSet::new(views.iter().map(|v| v.camera_used.clone()).collect()), &dir.join("cameras.json"))?;
    write_cameras_json(&CameraSet::new(views.iter().map(|v| v.camera_true.clone()).collect()), &dir.join("cameras_true.json"))?;
    let path = dir.join("truth.csv");
    let f = fs::File::create(&path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    write_truth_csv(&views, f)?;
    for (k, v) in inputs.recon_views.iter().enumerate() {
        let img = render_view(&inputs.scene, v, &mut trial_rng(seed, 9 + k as u64))?;
        save_grayscale16(&img, &dir.join(format!("view{k}.png")))?;
    }
    save_grayscale16(&inputs.estimation_image, &dir.join("view3.png"))?;
    Ok(())
}
