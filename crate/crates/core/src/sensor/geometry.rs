//! Bounding-box geometry and the camera-to-robot mapping.

use serde::{Deserialize, Serialize};

use crate::error::SensorError;
use crate::model::Orientation;

/// Determinants at or below this magnitude are treated as singular.
pub const MIN_ABS_DET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned box in camera pixels, given by its top-left `(x1, y1)` and
/// bottom-right `(x2, y2)` corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, SensorError> {
        let b = Self { x1, y1, x2, y2 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(SensorError::InvalidBBox { x1, y1, x2, y2 })
        }
    }

    /// Box of the given size centred on `center`.
    pub fn centered(center: Point, width: f64, height: f64) -> Result<Self, SensorError> {
        Self::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            center.x + width / 2.0,
            center.y + height / 2.0,
        )
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

/// Centre of the box: the pick-up target.
pub fn midpoint(bbox: &BBox) -> Point {
    Point::new((bbox.x1 + bbox.x2) / 2.0, (bbox.y1 + bbox.y2) / 2.0)
}

/// Orientation of the part's long axis. Square boxes count as parallel.
pub fn orientation_from_bbox(bbox: &BBox) -> Orientation {
    if bbox.width() >= bbox.height() {
        Orientation::Parallel
    } else {
        Orientation::Perpendicular
    }
}

/// Intersection over union; 0 for disjoint or edge-touching boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Affine map from camera pixels to robot-frame millimetres with a fixed
/// approach height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct CameraTransform {
    matrix: [[f64; 2]; 2],
    translation: [f64; 2],
    fixed_z: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    matrix: [[f64; 2]; 2],
    translation: [f64; 2],
    fixed_z: f64,
}

impl TryFrom<RawTransform> for CameraTransform {
    type Error = SensorError;

    fn try_from(raw: RawTransform) -> Result<Self, Self::Error> {
        CameraTransform::new(raw.matrix, raw.translation, raw.fixed_z)
    }
}

impl From<CameraTransform> for RawTransform {
    fn from(t: CameraTransform) -> Self {
        RawTransform {
            matrix: t.matrix,
            translation: t.translation,
            fixed_z: t.fixed_z,
        }
    }
}

impl CameraTransform {
    pub fn new(
        matrix: [[f64; 2]; 2],
        translation: [f64; 2],
        fixed_z: f64,
    ) -> Result<Self, SensorError> {
        let t = Self::new_unchecked(matrix, translation, fixed_z);
        let det = t.determinant();
        if det.abs() <= MIN_ABS_DET || !det.is_finite() {
            return Err(SensorError::DegenerateTransform { det });
        }
        Ok(t)
    }

    /// Skips the invertibility check; `camera_to_robot` still refuses
    /// singular matrices.
    pub const fn new_unchecked(matrix: [[f64; 2]; 2], translation: [f64; 2], fixed_z: f64) -> Self {
        Self {
            matrix,
            translation,
            fixed_z,
        }
    }

    pub fn identity(fixed_z: f64) -> Self {
        Self::new_unchecked([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], fixed_z)
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.matrix
    }

    pub fn translation(&self) -> [f64; 2] {
        self.translation
    }

    pub fn fixed_z(&self) -> f64 {
        self.fixed_z
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Robot-frame coordinates in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub fn camera_to_robot(point: Point, t: &CameraTransform) -> Result<RobotPoint, SensorError> {
    let det = t.determinant();
    if det.abs() <= MIN_ABS_DET || !det.is_finite() {
        return Err(SensorError::DegenerateTransform { det });
    }
    let m = &t.matrix;
    Ok(RobotPoint {
        x: m[0][0] * point.x + m[0][1] * point.y + t.translation[0],
        y: m[1][0] * point.x + m[1][1] * point.y + t.translation[1],
        z: t.fixed_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn midpoint_examples() {
        assert_eq!(midpoint(&b(0.0, 0.0, 10.0, 10.0)), Point::new(5.0, 5.0));
        assert_eq!(midpoint(&b(2.0, 4.0, 10.0, 8.0)), Point::new(6.0, 6.0));
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(orientation_from_bbox(&b(0.0, 0.0, 40.0, 10.0)), Orientation::Parallel);
        assert_eq!(orientation_from_bbox(&b(0.0, 0.0, 10.0, 40.0)), Orientation::Perpendicular);
        assert_eq!(orientation_from_bbox(&b(0.0, 0.0, 10.0, 10.0)), Orientation::Parallel);
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&a, &b(10.0, 0.0, 20.0, 10.0)), 0.0);
        assert!((iou(&a, &b(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
        // 6 x 10 overlap, union 200 - 60
        assert!((iou(&a, &b(4.0, 0.0, 14.0, 10.0)) - 60.0 / 140.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(5.0, 0.0, 5.0, 10.0).is_err());
        assert!(BBox::new(0.0, 10.0, 5.0, 2.0).is_err());
    }

    #[test]
    fn transform_examples() {
        let id = CameraTransform::identity(30.0);
        assert_eq!(
            camera_to_robot(Point::new(5.0, 5.0), &id).unwrap(),
            RobotPoint { x: 5.0, y: 5.0, z: 30.0 }
        );
        let shift = CameraTransform::new([[1.0, 0.0], [0.0, 1.0]], [100.0, 50.0], 12.5).unwrap();
        assert_eq!(
            camera_to_robot(Point::new(0.0, 0.0), &shift).unwrap(),
            RobotPoint { x: 100.0, y: 50.0, z: 12.5 }
        );
    }

    #[test]
    fn degenerate_transform_rejected() {
        assert!(matches!(
            CameraTransform::new([[1.0, 2.0], [2.0, 4.0]], [0.0, 0.0], 0.0),
            Err(SensorError::DegenerateTransform { .. })
        ));
        let singular = CameraTransform::new_unchecked([[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0], 0.0);
        assert!(camera_to_robot(Point::new(1.0, 1.0), &singular).is_err());
        let json = r#"{"matrix": [[1, 1], [1, 1]], "translation": [0, 0], "fixed_z": 0}"#;
        assert!(serde_json::from_str::<CameraTransform>(json).is_err());
    }
}
