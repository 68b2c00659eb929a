//! BB detection in grayscale fluoroscopy using a fast radial symmetry
//! variant followed by windowed local-maximum extraction.

mod image;
mod peaks;
mod radial;

pub use self::image::{load_grayscale, save_grayscale16, Grid};
pub use peaks::{detect_bbs, Detection, DetectionSet};
pub use radial::{radial_symmetry_map, radial_symmetry_map_with, DetectorConfig, Polarity};
pub(crate) use radial::gaussian_blur;

use std::io::{Read, Write};

use nalgebra::Point2;
use thiserror::Error;

use crate::numfmt::fmt6;
use crate::Execution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("image contains non-finite values")]
    NonFinite,
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("buffer size does not match dimensions")]
    ShapeMismatch,
    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Radial symmetry map followed by peak extraction.
pub fn detect_image(image: &Grid, config: &DetectorConfig, view_id: usize, exec: Execution) -> Result<DetectionSet, DetectError> {
    let s = radial_symmetry_map_with(image, config, exec)?;
    let mut d = detect_bbs(&s, config);
    d.view_id = view_id;
    Ok(d)
}

/// CSV with header `view_id,x,y,score`.
pub fn write_detections_csv<W: Write>(sets: &[DetectionSet], out: W) -> Result<(), DetectError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| DetectError::Csv(e.to_string());
    w.write_record(["view_id", "x", "y", "score"]).map_err(err)?;
    for set in sets {
        for d in &set.detections {
            w.write_record([set.view_id.to_string(), fmt6(d.pos.x), fmt6(d.pos.y), fmt6(d.score)])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| DetectError::Io(e.to_string()))
}

/// Parse detection CSV; one set per distinct `view_id`, in first-seen order.
pub fn read_detections_csv<R: Read>(input: R) -> Result<Vec<DetectionSet>, DetectError> {
    let mut r = csv::Reader::from_reader(input);
    let mut sets: Vec<DetectionSet> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| DetectError::Csv(e.to_string()))?;
        let field = |i: usize| -> Result<&str, DetectError> {
            rec.get(i).ok_or_else(|| DetectError::Csv(format!("missing column {i}")))
        };
        let num = |i: usize| -> Result<f64, DetectError> {
            field(i)?.trim().parse::<f64>().map_err(|e| DetectError::Csv(e.to_string()))
        };
        let view_id: usize = field(0)?.trim().parse().map_err(|e: std::num::ParseIntError| DetectError::Csv(e.to_string()))?;
        let det = Detection {
            pos: Point2::new(num(1)?, num(2)?),
            score: num(3)?,
        };
        match sets.iter_mut().find(|s| s.view_id == view_id) {
            Some(s) => s.detections.push(det),
            None => sets.push(DetectionSet::new(view_id, vec![det])),
        }
    }
    Ok(sets)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let sets = vec![
            DetectionSet::new(
                0,
                vec![Detection {
                    pos: Point2::new(10.25, 20.5),
                    score: 3.0,
                }],
            ),
            DetectionSet::from_points(2, [Point2::new(1.0, 2.0), Point2::new(3.5, 4.0)]),
        ];
        let mut buf = Vec::new();
        write_detections_csv(&sets, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("view_id,x,y,score\n0,10.25,20.5,3\n"));
        let back = read_detections_csv(buf.as_slice()).unwrap();
        assert_eq!(back, sets);
    }

    #[test]
    fn csv_rejects_garbage() {
        let bad = "view_id,x,y,score\n0,abc,1,1\n";
        assert!(read_detections_csv(bad.as_bytes()).is_err());
    }
}
