//! Ground-truth cell state and scripted faults.

use serde::{Deserialize, Serialize};

use crate::error::SensorError;
use crate::model::{ErrorEvent, ErrorKind, Orientation, PartClass};

use super::geometry::{CameraTransform, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraId {
    MatCamera,
    AssemblyCamera,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Overlap,
    Misassembled,
    Missing,
}

impl FaultKind {
    /// The error kind validation reports for this fault.
    pub fn error_kind(self) -> ErrorKind {
        match self {
            FaultKind::Overlap => ErrorKind::Overlap,
            FaultKind::Misassembled => ErrorKind::Misassembled,
            FaultKind::Missing => ErrorKind::MissingComponent,
        }
    }

    pub fn from_error_kind(kind: ErrorKind) -> Option<Self> {
        match kind {
            ErrorKind::Overlap => Some(FaultKind::Overlap),
            ErrorKind::Misassembled => Some(FaultKind::Misassembled),
            ErrorKind::MissingComponent => Some(FaultKind::Missing),
            ErrorKind::InvalidSensorData => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fault {
    pub kind: FaultKind,
    pub part: PartClass,
}

/// Where a part physically lies, in camera pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartPlacement {
    pub part_class: PartClass,
    #[serde(default = "default_camera")]
    pub camera: CameraId,
    pub center: Point,
    /// Extent along the part's long axis, pixels.
    pub length: f64,
    /// Extent across the long axis, pixels.
    pub width: f64,
    pub orientation: Orientation,
    #[serde(default = "default_present")]
    pub present: bool,
}

fn default_camera() -> CameraId {
    CameraId::MatCamera
}

fn default_present() -> bool {
    true
}

fn default_transform() -> CameraTransform {
    CameraTransform::identity(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScene {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<u8>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub placements: Vec<PartPlacement>,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub rng_seed: u64,
    /// Uniform positional noise amplitude in pixels; 0 disables noise.
    #[serde(default)]
    pub jitter_px: f64,
    #[serde(default = "default_transform")]
    pub camera_transform: CameraTransform,
}

impl CellScene {
    pub fn from_json(text: &str) -> Result<Self, SensorError> {
        let scene: CellScene =
            serde_json::from_str(text).map_err(|e| SensorError::Scene(e.to_string()))?;
        scene.check()?;
        Ok(scene)
    }

    /// Shipped preset for scenario 1, 2 or 3.
    pub fn preset(id: u8) -> Option<Self> {
        crate::data::SCENE_PRESETS
            .iter()
            .find(|(n, _)| *n == id)
            .map(|(_, text)| Self::from_json(text).expect("bundled scene is valid"))
    }

    /// The scenario-1 layout with every fault removed and every part present.
    pub fn fault_free() -> Self {
        let mut scene = Self::preset(1).expect("preset 1 exists");
        scene.scenario_id = None;
        scene.name = "fault free".into();
        scene.faults.clear();
        for p in &mut scene.placements {
            p.present = true;
        }
        scene
    }

    fn check(&self) -> Result<(), SensorError> {
        for (i, f) in self.faults.iter().enumerate() {
            if self.faults[..i].iter().any(|g| g.part == f.part) {
                return Err(SensorError::DuplicateFault(f.part));
            }
        }
        for p in &self.placements {
            if !(p.length > 0.0 && p.width > 0.0) {
                return Err(SensorError::Scene(format!(
                    "{} placement has non-positive size",
                    p.part_class
                )));
            }
        }
        Ok(())
    }

    pub fn fault_for(&self, part: PartClass) -> Option<Fault> {
        self.faults.iter().copied().find(|f| f.part == part)
    }

    pub fn inject(&mut self, fault: Fault) -> Result<(), SensorError> {
        if self.fault_for(fault.part).is_some() {
            return Err(SensorError::DuplicateFault(fault.part));
        }
        if fault.kind == FaultKind::Missing {
            self.set_present(fault.part, false);
        }
        self.faults.push(fault);
        Ok(())
    }

    fn set_present(&mut self, part: PartClass, present: bool) {
        for p in self.placements.iter_mut().filter(|p| p.part_class == part) {
            p.present = present;
        }
    }
}

/// Models the operator physically fixing the cell: removes the fault that
/// produced `error`.
pub fn resolve_fault(scene: &CellScene, error: &ErrorEvent) -> Result<CellScene, SensorError> {
    let no_such = || SensorError::NoSuchFault {
        kind: error.kind,
        part: error.details.part,
    };
    let kind = FaultKind::from_error_kind(error.kind).ok_or_else(no_such)?;
    let part = error.details.part.ok_or_else(no_such)?;
    let target = Fault { kind, part };
    let pos = scene
        .faults
        .iter()
        .position(|f| *f == target)
        .ok_or_else(no_such)?;

    let mut fixed = scene.clone();
    fixed.faults.remove(pos);
    if kind == FaultKind::Missing {
        fixed.set_present(part, true);
    }
    Ok(fixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ErrorDetails;

    fn err(kind: ErrorKind, part: PartClass, index: usize) -> ErrorEvent {
        ErrorEvent {
            kind,
            task_id: "t1".into(),
            subtask_index: index,
            details: ErrorDetails {
                part: Some(part),
                ..Default::default()
            },
        }
    }

    #[test]
    fn presets_carry_their_faults() {
        let s1 = CellScene::preset(1).unwrap();
        assert_eq!(s1.faults, vec![Fault { kind: FaultKind::Overlap, part: PartClass::Housing }]);
        let s2 = CellScene::preset(2).unwrap();
        assert_eq!(s2.faults, vec![Fault { kind: FaultKind::Misassembled, part: PartClass::Wedge }]);
        let s3 = CellScene::preset(3).unwrap();
        assert_eq!(s3.faults, vec![Fault { kind: FaultKind::Missing, part: PartClass::Spring }]);
        assert!(CellScene::preset(4).is_none());
    }

    #[test]
    fn resolve_overlap_removes_fault() {
        let s1 = CellScene::preset(1).unwrap();
        let fixed = resolve_fault(&s1, &err(ErrorKind::Overlap, PartClass::Housing, 1)).unwrap();
        assert!(fixed.faults.is_empty());
    }

    #[test]
    fn resolve_missing_restores_part() {
        let s3 = CellScene::preset(3).unwrap();
        let spring = |s: &CellScene| {
            s.placements
                .iter()
                .find(|p| p.part_class == PartClass::Spring)
                .unwrap()
                .present
        };
        assert!(!spring(&s3));
        let fixed =
            resolve_fault(&s3, &err(ErrorKind::MissingComponent, PartClass::Spring, 3)).unwrap();
        assert!(spring(&fixed));
        assert!(fixed.faults.is_empty());
    }

    #[test]
    fn resolve_on_clean_scene_fails() {
        let clean = CellScene::fault_free();
        for kind in ErrorKind::ALL {
            assert!(matches!(
                resolve_fault(&clean, &err(kind, PartClass::Wedge, 2)),
                Err(SensorError::NoSuchFault { .. })
            ));
        }
    }

    #[test]
    fn one_fault_per_part() {
        let mut s = CellScene::preset(1).unwrap();
        assert_eq!(
            s.inject(Fault { kind: FaultKind::Missing, part: PartClass::Housing }),
            Err(SensorError::DuplicateFault(PartClass::Housing))
        );
        s.inject(Fault { kind: FaultKind::Missing, part: PartClass::EndCap }).unwrap();
        assert!(!s.placements.iter().find(|p| p.part_class == PartClass::EndCap).unwrap().present);
    }

    #[test]
    fn duplicate_faults_rejected_on_load() {
        let mut s = CellScene::preset(1).unwrap();
        s.faults.push(Fault { kind: FaultKind::Missing, part: PartClass::Housing });
        let text = serde_json::to_string(&s).unwrap();
        assert!(CellScene::from_json(&text).is_err());
    }
}
