//! Core data model: sensor constants, annotation taxonomy, radar points,
//! frames and sequences.
//!
//! All types are immutable values after construction and safe to share
//! across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::WallSegment;

// ---------------------------------------------------------------------------
// Sensor specification
// ---------------------------------------------------------------------------

/// Physical characteristics of the (virtual) radar sensor.
///
/// The default values describe a 77 GHz automotive Doppler radar cycling at
/// 10 Hz with a range of 0.15–153 m, a ±70° azimuth field of view and a
/// Doppler window of ±44.3 m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Carrier frequency in GHz.
    pub carrier_frequency_ghz: f64,
    /// Minimum measurable range in m.
    pub range_min: f64,
    /// Maximum measurable range in m.
    pub range_max: f64,
    /// Azimuth field of view half-angle in degrees.
    pub azimuth_fov_deg: f64,
    /// Maximum measurable absolute Doppler velocity in m/s.
    pub doppler_max: f64,
    /// Range resolution in m.
    pub res_range: f64,
    /// Azimuth resolution in degrees.
    pub res_azimuth_deg: f64,
    /// Doppler resolution in m/s.
    pub res_doppler: f64,
    /// Measurement cycle time in s.
    pub cycle_time: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            carrier_frequency_ghz: 77.0,
            range_min: 0.15,
            range_max: 153.0,
            azimuth_fov_deg: 70.0,
            doppler_max: 44.3,
            res_range: 0.15,
            res_azimuth_deg: 1.8,
            res_doppler: 0.087,
            cycle_time: 0.1,
        }
    }
}

impl SensorSpec {
    /// Check the internal consistency of the specification.
    pub fn validate(&self) -> Result<()> {
        if !(self.range_min < self.range_max) {
            return Err(Error::InvalidConfig("range_min must be < range_max".into()));
        }
        for (name, v) in [
            ("res_range", self.res_range),
            ("res_azimuth_deg", self.res_azimuth_deg),
            ("res_doppler", self.res_doppler),
            ("cycle_time", self.cycle_time),
            ("azimuth_fov_deg", self.azimuth_fov_deg),
            ("doppler_max", self.doppler_max),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Azimuth field of view half-angle in radians.
    pub fn azimuth_fov_rad(&self) -> f64 {
        self.azimuth_fov_deg.to_radians()
    }

    /// Azimuth resolution in radians.
    pub fn res_azimuth_rad(&self) -> f64 {
        self.res_azimuth_deg.to_radians()
    }

    /// True if a detection at `(range, azimuth_rad, doppler)` lies inside the
    /// measurable region.
    pub fn in_bounds(&self, range: f64, azimuth_rad: f64, doppler: f64) -> bool {
        range >= self.range_min
            && range <= self.range_max
            && azimuth_rad.abs() <= self.azimuth_fov_rad()
            && doppler.abs() <= self.doppler_max
    }

    /// Snap a polar measurement to the nearest resolution bin.
    pub fn quantize(&self, range: f64, azimuth_rad: f64, doppler: f64) -> (f64, f64, f64) {
        let q = |v: f64, step: f64| (v / step).round() * step;
        (
            q(range, self.res_range),
            q(azimuth_rad, self.res_azimuth_rad()),
            q(doppler, self.res_doppler),
        )
    }
}

// ---------------------------------------------------------------------------
// Annotation taxonomy
// ---------------------------------------------------------------------------

/// Ground-truth label kind of a radar detection.
///
/// Multi-path labels follow the `MP-<type><order>` convention: the first
/// digit is the reflection type (1 = last bounce on the object, 2 = last
/// bounce on the reflective surface) and the second digit the bounce order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    /// Direct (first order) reflection of an object.
    Real,
    /// Type-1 second order bounce.
    Mp12,
    /// Type-2 second order bounce.
    Mp22,
    /// Type-2 third order bounce.
    Mp23,
    /// Other multi-path: unspecific higher order or other-object multi-path.
    Omp,
    /// Multi-path whose bounce type/order cannot be determined.
    Indistinguishable,
    /// Unannotated point.
    Background,
    /// Indeterminable region, excluded from loss and evaluation.
    Ignore,
}

impl Label {
    /// All label kinds in a fixed order.
    pub const ALL: [Label; 8] = [
        Label::Real,
        Label::Mp12,
        Label::Mp22,
        Label::Mp23,
        Label::Omp,
        Label::Indistinguishable,
        Label::Background,
        Label::Ignore,
    ];

    /// True for the three specific multi-path kinds (MP-12, MP-22, MP-23).
    pub fn is_specific_multipath(self) -> bool {
        matches!(self, Label::Mp12 | Label::Mp22 | Label::Mp23)
    }

    /// True for any kind of annotated object detection (real or multi-path).
    pub fn is_foreground(self) -> bool {
        !matches!(self, Label::Background | Label::Ignore)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Label::Real => "REAL",
            Label::Mp12 => "MP12",
            Label::Mp22 => "MP22",
            Label::Mp23 => "MP23",
            Label::Omp => "OMP",
            Label::Indistinguishable => "INDISTINGUISHABLE",
            Label::Background => "BACKGROUND",
            Label::Ignore => "IGNORE",
        };
        write!(f, "{s}")
    }
}

/// Object class tag of an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectClass {
    Pedestrian,
    Cyclist,
    Car,
    Truck,
    Motorbike,
    None,
}

impl ObjectClass {
    /// True for the vulnerable-road-user classes the models are trained on.
    pub fn is_vru(self) -> bool {
        matches!(self, ObjectClass::Pedestrian | ObjectClass::Cyclist)
    }
}

/// Per-point ground-truth annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Instance id; 0 means "no instance" (background / ignore).
    pub instance_id: u32,
    /// Label kind.
    pub label: Label,
    /// Object class of the (causing) object.
    #[serde(rename = "class")]
    pub object_class: ObjectClass,
    /// Id of the reflective surface causing a specific multi-path bounce.
    pub surface_id: Option<u32>,
    /// Ambiguous annotation; excluded from loss and evaluation.
    pub sketchy: bool,
}

impl Annotation {
    /// Background annotation (no instance, no class).
    pub fn background() -> Self {
        Self {
            instance_id: 0,
            label: Label::Background,
            object_class: ObjectClass::None,
            surface_id: None,
            sketchy: false,
        }
    }

    /// Check the label/instance/class consistency rules.
    pub fn validate(&self) -> Result<()> {
        match self.label {
            Label::Background | Label::Ignore => {
                if self.instance_id != 0 || self.object_class != ObjectClass::None {
                    return Err(Error::InvalidSequence(format!(
                        "{} annotation must have instance_id 0 and class NONE",
                        self.label
                    )));
                }
            }
            Label::Mp12 | Label::Mp22 | Label::Mp23 => {
                if self.surface_id.is_none() {
                    return Err(Error::InvalidSequence(format!(
                        "{} annotation requires a surface_id",
                        self.label
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Points, frames, sequences
// ---------------------------------------------------------------------------

/// One radar detection in the ego frame (sensor at the origin, +x forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    /// Position in m, +x forward.
    pub x: f64,
    /// Position in m, +y left.
    pub y: f64,
    /// Doppler (radial) velocity in m/s; positive = receding.
    pub doppler: f64,
    /// Relative amplitude in dB.
    pub amplitude: f64,
    /// Measurement cycle (frame) the point belongs to.
    #[serde(rename = "cycle")]
    pub cycle_index: u32,
    /// Ground-truth annotation, flattened into the serialized record.
    #[serde(flatten)]
    pub annotation: Annotation,
}

impl RadarPoint {
    /// Range from the sensor in m.
    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Azimuth (bearing) from the sensor boresight in rad.
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }
}

/// All detections of one measurement cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(rename = "cycle")]
    pub cycle_index: u32,
    /// Time since sequence start in s.
    pub timestamp: f64,
    pub points: Vec<RadarPoint>,
}

/// Dataset split a sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "TRAIN"),
            Split::Val => write!(f, "VAL"),
            Split::Test => write!(f, "TEST"),
        }
    }
}

/// A labeled recording: scenario metadata plus a list of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub scenario_id: String,
    pub sensor: SensorSpec,
    pub walls: Vec<WallSegment>,
    pub split: Split,
    pub frames: Vec<Frame>,
}

impl Sequence {
    /// Validate every sequence invariant: sensor consistency, frame spacing,
    /// per-point bounds, annotation rules and instance consistency across
    /// frames.
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        for wall in &self.walls {
            wall.validate()?;
        }

        let mut instance_info: std::collections::BTreeMap<u32, (Label, ObjectClass, Option<u32>)> =
            std::collections::BTreeMap::new();

        for (i, frame) in self.frames.iter().enumerate() {
            if i > 0 {
                let prev = &self.frames[i - 1];
                if frame.cycle_index != prev.cycle_index + 1 {
                    return Err(Error::InvalidSequence(format!(
                        "cycle indices not consecutive at frame {i}"
                    )));
                }
                let dt = frame.timestamp - prev.timestamp;
                if (dt - self.sensor.cycle_time).abs() > 1e-9 {
                    return Err(Error::InvalidSequence(format!(
                        "timestamp step {dt} at frame {i} differs from cycle_time"
                    )));
                }
            }
            for p in &frame.points {
                p.annotation.validate()?;
                if !self.sensor.in_bounds(p.range(), p.azimuth(), p.doppler) {
                    return Err(Error::InvalidSequence(format!(
                        "point ({}, {}) doppler {} out of sensor bounds in frame {i}",
                        p.x, p.y, p.doppler
                    )));
                }
                if p.annotation.instance_id != 0 {
                    let key = (
                        p.annotation.label,
                        p.annotation.object_class,
                        p.annotation.surface_id,
                    );
                    let entry = instance_info.entry(p.annotation.instance_id).or_insert(key);
                    if *entry != key {
                        return Err(Error::InvalidSequence(format!(
                            "instance {} changes annotation across frames",
                            p.annotation.instance_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Additionally check that every frame's point count lies in
    /// `[min_points, max_points]`.
    pub fn validate_point_counts(&self, min_points: usize, max_points: usize) -> Result<()> {
        for frame in &self.frames {
            let n = frame.points.len();
            if n < min_points || n > max_points {
                return Err(Error::InvalidSequence(format!(
                    "frame {} has {} points, outside [{min_points}, {max_points}]",
                    frame.cycle_index, n
                )));
            }
        }
        Ok(())
    }

    /// Mean number of points per frame; 0 for an empty sequence.
    pub fn mean_points_per_frame(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().map(|f| f.points.len()).sum::<usize>() as f64
            / self.frames.len() as f64
    }
}
