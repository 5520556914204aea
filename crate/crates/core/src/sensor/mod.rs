//! Simulated vision: renders detector output from a ground-truth scene and
//! checks frames against what the current subtask expects.
//!
//! The detector output mirrors an object detector's schema (class label,
//! corner box, confidence). Faults are injected at render time:
//!
//! * missing parts produce no detection,
//! * overlapping parts produce two boxes of the same class,
//! * misassembled parts produce a box whose long axis is rotated by 90°.

mod geometry;
mod scene;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use geometry::{
    camera_to_robot, iou, midpoint, orientation_from_bbox, BBox, CameraTransform, Point,
    RobotPoint, MIN_ABS_DET,
};
pub use scene::{resolve_fault, CameraId, CellScene, Fault, FaultKind, PartPlacement};

use crate::model::{ErrorKind, Orientation, PartClass, Subtask};

/// Confidence reported for every simulated detection.
pub const DETECTION_CONFIDENCE: f64 = 0.95;

/// Shift of the duplicate box emitted for an overlap fault, as a fraction of
/// the box width. A shift `s` gives IoU `(1 - s) / (1 + s)`, here 0.6.
const OVERLAP_SHIFT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: u32,
    pub part_class: PartClass,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub camera_id: CameraId,
    pub timestamp_ms: u64,
    pub detections: Vec<Detection>,
}

/// Renders what the detector would report for `camera`.
///
/// Deterministic in `(scene, camera)`: jitter, when enabled, draws from a
/// generator seeded by the scene seed, camera and placement index.
pub fn render_frame(scene: &CellScene, camera: CameraId) -> SensorFrame {
    let mut detections = Vec::new();
    let mut next_id = 0u32;
    let mut push = |part_class, bbox| {
        detections.push(Detection {
            id: next_id,
            part_class,
            bbox,
            confidence: DETECTION_CONFIDENCE,
        });
        next_id += 1;
    };

    for (index, placement) in scene.placements.iter().enumerate() {
        if placement.camera != camera || !placement.present {
            continue;
        }
        let fault = scene.fault_for(placement.part_class).map(|f| f.kind);
        if fault == Some(FaultKind::Missing) {
            continue;
        }

        let orientation = match fault {
            Some(FaultKind::Misassembled) => placement.orientation.flipped(),
            _ => placement.orientation,
        };
        let (w, h) = match orientation {
            Orientation::Parallel => (placement.length, placement.width),
            Orientation::Perpendicular => (placement.width, placement.length),
        };

        let mut center = placement.center;
        if scene.jitter_px > 0.0 {
            let seed = scene.rng_seed
                ^ ((camera as u64) << 32)
                ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            center.x += rng.gen_range(-scene.jitter_px..=scene.jitter_px);
            center.y += rng.gen_range(-scene.jitter_px..=scene.jitter_px);
        }

        // Sizes are checked positive when the scene is loaded.
        let Ok(bbox) = BBox::centered(center, w, h) else {
            continue;
        };
        push(placement.part_class, bbox);
        if fault == Some(FaultKind::Overlap) {
            push(placement.part_class, bbox.translated(OVERLAP_SHIFT * w, 0.0));
        }
    }

    SensorFrame {
        camera_id: camera,
        timestamp_ms: 0,
        detections,
    }
}

/// Thresholds for the validity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityCriteria {
    pub min_confidence: f64,
    /// Same-class pairs with IoU strictly above this count as overlapping.
    pub overlap_iou: f64,
}

impl Default for ValidityCriteria {
    fn default() -> Self {
        Self {
            min_confidence: 0.5,
            overlap_iou: 0.1,
        }
    }
}

/// Where the gripper should pick the part up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickupPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ValidityResult {
    Valid {
        detection_id: u32,
        pose: PickupPose,
    },
    Invalid {
        kind: ErrorKind,
        part: PartClass,
        #[serde(default)]
        detection_ids: Vec<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl ValidityResult {
    pub fn is_valid(&self) -> bool {
        matches!(self, ValidityResult::Valid { .. })
    }
}

/// Checks a frame for the part `expected` needs.
///
/// Checks run in a fixed order and the first failure wins: missing part,
/// then same-class overlap, then orientation mismatch.
pub fn validate_frame(
    frame: &SensorFrame,
    expected: &Subtask,
    criteria: &ValidityCriteria,
    transform: &CameraTransform,
) -> ValidityResult {
    let part = expected.expected_part;

    // Highest confidence wins; ties go to the lowest id.
    let best = frame
        .detections
        .iter()
        .filter(|d| d.part_class == part && d.confidence >= criteria.min_confidence)
        .fold(None::<&Detection>, |best, d| match best {
            Some(b) if b.confidence >= d.confidence => Some(b),
            _ => Some(d),
        });
    let Some(best) = best else {
        return ValidityResult::Invalid {
            kind: ErrorKind::MissingComponent,
            part,
            detection_ids: Vec::new(),
            reason: None,
        };
    };

    for (i, a) in frame.detections.iter().enumerate() {
        for b in &frame.detections[i + 1..] {
            if a.part_class == b.part_class && iou(&a.bbox, &b.bbox) > criteria.overlap_iou {
                return ValidityResult::Invalid {
                    kind: ErrorKind::Overlap,
                    part: a.part_class,
                    detection_ids: vec![a.id, b.id],
                    reason: None,
                };
            }
        }
    }

    let orientation = orientation_from_bbox(&best.bbox);
    if orientation != expected.target_pose.orientation {
        return ValidityResult::Invalid {
            kind: ErrorKind::Misassembled,
            part,
            detection_ids: vec![best.id],
            reason: Some(format!(
                "detected at {}°, expected {}°",
                orientation.degrees(),
                expected.target_pose.orientation.degrees()
            )),
        };
    }

    match camera_to_robot(midpoint(&best.bbox), transform) {
        Ok(p) => ValidityResult::Valid {
            detection_id: best.id,
            pose: PickupPose {
                x: p.x,
                y: p.y,
                z: p.z,
                orientation,
            },
        },
        Err(e) => ValidityResult::Invalid {
            kind: ErrorKind::InvalidSensorData,
            part,
            detection_ids: vec![best.id],
            reason: Some(e.to_string()),
        },
    }
}
