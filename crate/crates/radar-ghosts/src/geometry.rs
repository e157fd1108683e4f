//! Closed-form specular multi-path geometry.
//!
//! Given the sensor position, a moving point object and a reflective wall
//! segment, this module predicts position, range, bearing and Doppler
//! velocity of the three single-surface ghost detections:
//!
//! - MP-12: type-1 second order (wall → object → sensor, last bounce on the
//!   object),
//! - MP-22: type-2 second order (object → wall → sensor, last bounce on the
//!   wall),
//! - MP-23: type-2 third order (wall → object → wall → sensor).
//!
//! All derivations use the mirror construction: a specular bounce off a wall
//! is equivalent to a straight ray to/from the mirrored endpoint. A
//! prediction is only `valid` when all required specular points fall inside
//! the finite wall segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// 2D vector
// ---------------------------------------------------------------------------

/// Plain 2D vector / point in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn unit(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 {
            Some(self / n)
        } else {
            None
        }
    }

    /// Bearing (azimuth) of the point seen from the origin, in rad.
    pub fn bearing(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn from_polar(range: f64, bearing: f64) -> Vec2 {
        Vec2::new(range * bearing.cos(), range * bearing.sin())
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl std::ops::Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

// ---------------------------------------------------------------------------
// Wall segment
// ---------------------------------------------------------------------------

/// A reflective surface, adjustable via its two end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    pub id: u32,
    pub a: Vec2,
    pub b: Vec2,
}

impl WallSegment {
    pub fn new(id: u32, a: Vec2, b: Vec2) -> Self {
        Self { id, a, b }
    }

    pub fn validate(&self) -> Result<()> {
        if self.direction().norm_sq() <= 0.0 || !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::DegenerateWall);
        }
        Ok(())
    }

    fn direction(&self) -> Vec2 {
        self.b - self.a
    }

    /// Signed side of `p` relative to the infinite wall line; the sign is
    /// consistent for a fixed wall, zero on the line.
    pub fn side(&self, p: Vec2) -> f64 {
        self.direction().cross(p - self.a)
    }

    /// Orthogonal projection of `p` onto the infinite wall line, as
    /// `(point, parameter)` with parameter 0 at `a` and 1 at `b`.
    pub fn project(&self, p: Vec2) -> (Vec2, f64) {
        let d = self.direction();
        let t = (p - self.a).dot(d) / d.norm_sq();
        (self.a + d * t, t)
    }

    /// Perpendicular distance from `p` to the infinite wall line.
    pub fn line_distance(&self, p: Vec2) -> f64 {
        let (foot, _) = self.project(p);
        p.distance(foot)
    }
}

// ---------------------------------------------------------------------------
// Mirror and specular constructions
// ---------------------------------------------------------------------------

/// Reflect `p` across the infinite line through the wall segment.
pub fn mirror_point(p: Vec2, wall: &WallSegment) -> Result<Vec2> {
    wall.validate()?;
    let (foot, _) = wall.project(p);
    Ok(foot * 2.0 - p)
}

/// The point on the wall line where a ray from `a` reflects specularly
/// towards `b` (equal incidence and emergence angles).
///
/// Returns `Ok(None)` when the reflection point falls outside the finite
/// wall segment, and an error when `a` and `b` are not strictly on the same
/// side of the wall line (no specular path exists).
pub fn specular_point(a: Vec2, b: Vec2, wall: &WallSegment) -> Result<Option<Vec2>> {
    wall.validate()?;
    let side_a = wall.side(a);
    let side_b = wall.side(b);
    if side_a == 0.0 || side_b == 0.0 || side_a.signum() != side_b.signum() {
        return Err(Error::NoSpecularPath);
    }

    // Straighten the path: reflect b, then intersect segment a—b' with the
    // wall line. a and b' are on opposite sides, so the intersection exists.
    let b_mirrored = mirror_point(b, wall)?;
    let d = wall.direction();
    let u = b_mirrored - a;
    let denom = u.cross(d);
    // denom == 0 would require a—b' parallel to the wall, impossible for
    // points strictly on opposite sides.
    let s = (wall.a - a).cross(d) / denom;
    let p = a + u * s;
    let (_, t) = wall.project(p);

    if (0.0..=1.0).contains(&t) {
        Ok(Some(p))
    } else {
        Ok(None)
    }
}

// ---------------------------------------------------------------------------
// Ghost predictions
// ---------------------------------------------------------------------------

/// A point object with a velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingPoint {
    pub pos: Vec2,
    pub vel: Vec2,
}

/// The three single-surface ghost kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GhostKind {
    Mp12,
    Mp22,
    Mp23,
}

impl GhostKind {
    pub const ALL: [GhostKind; 3] = [GhostKind::Mp12, GhostKind::Mp22, GhostKind::Mp23];
}

impl std::fmt::Display for GhostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GhostKind::Mp12 => write!(f, "MP12"),
            GhostKind::Mp22 => write!(f, "MP22"),
            GhostKind::Mp23 => write!(f, "MP23"),
        }
    }
}

/// Round-trip propagation path kind, including the direct (real) return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Real,
    Ghost(GhostKind),
}

/// Predicted ghost detection for one wall and one object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhostPrediction {
    pub kind: GhostKind,
    /// Measured range in m (half the round-trip path length).
    pub range: f64,
    /// Arrival bearing in rad.
    pub bearing: f64,
    /// Apparent position `range * (cos bearing, sin bearing)`.
    pub pos: Vec2,
    /// Measured Doppler velocity in m/s.
    pub doppler: f64,
    /// False when a required specular point lies outside the wall segment.
    pub valid: bool,
    pub surface_id: u32,
}

/// Predict the three ghost detections a wall produces for a moving object.
///
/// The object must be strictly on the sensor's side of the wall line.
pub fn ghost_detections(
    sensor: Vec2,
    obj: &MovingPoint,
    wall: &WallSegment,
) -> Result<[GhostPrediction; 3]> {
    wall.validate()?;
    if !obj.pos.is_finite() || !obj.vel.is_finite() {
        return Err(Error::InvalidScenario("non-finite object state".into()));
    }

    let sensor_mirrored = mirror_point(sensor, wall)?;
    let obj_mirrored = mirror_point(obj.pos, wall)?;

    // All three paths bounce at the specular point of (sensor, object); a
    // missing specular path (object behind or on the wall line) is an error,
    // a specular point outside the segment merely invalidates the prediction.
    let valid = specular_point(sensor, obj.pos, wall)?.is_some();

    let direct = obj.pos - sensor;
    let via_wall = obj.pos - sensor_mirrored;
    let dist_direct = direct.norm();
    let dist_via_wall = via_wall.norm();
    let unit_direct = direct / dist_direct;
    let unit_via_wall = via_wall / dist_via_wall;

    // Half the round-trip path-length rate; the reflection point contributes
    // nothing to first order (Fermat stationarity).
    let doppler_second = 0.5 * (obj.vel.dot(unit_via_wall) + obj.vel.dot(unit_direct));
    let doppler_third = obj.vel.dot(unit_via_wall);

    let range_second = 0.5 * (dist_via_wall + dist_direct);
    let bearing_obj = (obj.pos - sensor).bearing();
    let bearing_mirrored = (obj_mirrored - sensor).bearing();

    let mp12 = GhostPrediction {
        kind: GhostKind::Mp12,
        range: range_second,
        bearing: bearing_obj,
        pos: sensor + Vec2::from_polar(range_second, bearing_obj),
        doppler: doppler_second,
        valid,
        surface_id: wall.id,
    };
    let mp22 = GhostPrediction {
        kind: GhostKind::Mp22,
        range: range_second,
        bearing: bearing_mirrored,
        pos: sensor + Vec2::from_polar(range_second, bearing_mirrored),
        doppler: doppler_second,
        valid,
        surface_id: wall.id,
    };
    let mp23 = GhostPrediction {
        kind: GhostKind::Mp23,
        range: (obj_mirrored - sensor).norm(),
        bearing: bearing_mirrored,
        pos: obj_mirrored,
        doppler: doppler_third,
        valid,
        surface_id: wall.id,
    };

    Ok([mp12, mp22, mp23])
}

/// Round-trip path length of a propagation kind, in m.
///
/// The measured range is half this value. For the ghost kinds the bounce
/// point is the specular point on the infinite wall line; segment membership
/// is a validity question handled by [`ghost_detections`].
pub fn path_length(kind: PathKind, sensor: Vec2, obj_pos: Vec2, wall: &WallSegment) -> Result<f64> {
    let direct = (obj_pos - sensor).norm();
    match kind {
        PathKind::Real => Ok(2.0 * direct),
        PathKind::Ghost(kind) => {
            wall.validate()?;
            let side_s = wall.side(sensor);
            let side_o = wall.side(obj_pos);
            if side_s == 0.0 || side_o == 0.0 || side_s.signum() != side_o.signum() {
                return Err(Error::NoSpecularPath);
            }
            let via_wall = (obj_pos - mirror_point(sensor, wall)?).norm();
            match kind {
                GhostKind::Mp12 | GhostKind::Mp22 => Ok(via_wall + direct),
                GhostKind::Mp23 => Ok(2.0 * via_wall),
            }
        }
    }
}
