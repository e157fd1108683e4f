//! Labeled sequence generation and multi-object overlay synthesis.
//!
//! A scenario holds one main VRU object that walks a waypoint path
//! (out-and-back by default) near one or more reflective walls while the ego
//! vehicle stands still. Every frame contains the real detection cluster,
//! ghost clusters at the positions predicted by [`crate::geometry`], sparse
//! higher-order multi-path points, and uniform clutter. All points are
//! quantized to the sensor resolution bins and gated by the field of view.
//!
//! Frame generation is seeded per frame, so generating frames in parallel is
//! bit-identical to sequential generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ghost_detections, GhostKind, MovingPoint, Vec2, WallSegment};
use crate::types::{
    Annotation, Frame, Label, ObjectClass, RadarPoint, SensorSpec, Sequence, Split,
};

// ---------------------------------------------------------------------------
// Scenario description
// ---------------------------------------------------------------------------

/// Per-label-kind scalar parameters (cluster sizes, detection probabilities).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindParams {
    pub real: f64,
    pub mp12: f64,
    pub mp22: f64,
    pub mp23: f64,
    pub omp: f64,
}

impl KindParams {
    pub fn get(&self, kind: GhostKind) -> f64 {
        match kind {
            GhostKind::Mp12 => self.mp12,
            GhostKind::Mp22 => self.mp22,
            GhostKind::Mp23 => self.mp23,
        }
    }
}

/// Waypoint path walked by the main object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Vec2>,
    /// Walking speed in m/s.
    pub speed: f64,
    /// Walk the path forward, then return, repeatedly.
    #[serde(default = "default_true")]
    pub out_and_back: bool,
}

fn default_true() -> bool {
    true
}

/// Range-law amplitude model; every extra bounce costs `bounce_penalty_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeModel {
    /// Amplitude of a first-order object detection at 1 m, in dB.
    pub a0_db: f64,
    /// Offset applied to clutter points, in dB.
    pub clutter_offset_db: f64,
    /// Amplitude loss per additional bounce, in dB.
    pub bounce_penalty_db: f64,
    /// Standard deviation of the per-point amplitude noise, in dB.
    pub sigma_db: f64,
}

impl Default for AmplitudeModel {
    fn default() -> Self {
        Self {
            a0_db: 60.0,
            clutter_offset_db: -12.0,
            bounce_penalty_db: 10.0,
            sigma_db: 2.0,
        }
    }
}

impl AmplitudeModel {
    fn sample(&self, range: f64, extra_bounces: u32, offset: f64, rng: &mut impl Rng) -> f64 {
        self.a0_db - 40.0 * range.max(0.1).log10() - self.bounce_penalty_db * extra_bounces as f64
            + offset
            + gauss(rng, self.sigma_db)
    }
}

/// Generative description of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub scenario_id: String,
    pub sensor: SensorSpec,
    pub walls: Vec<WallSegment>,
    pub object_class: ObjectClass,
    pub trajectory: Trajectory,
    /// Half-width (m) of the uniform per-sequence waypoint perturbation;
    /// models run-to-run variation of the walked path within one scenario
    /// while keeping the path inside a known envelope.
    pub trajectory_jitter: f64,
    /// Mean cluster size per frame, by label kind.
    pub points_per_frame_mean: KindParams,
    /// Probability that a cluster of the kind shows up in a frame.
    pub detection_prob: KindParams,
    /// Spatial scatter of cluster points, in m.
    pub spatial_sigma: f64,
    /// Doppler noise of cluster points, in m/s.
    pub doppler_sigma: f64,
    /// Mean number of uniform background points per frame.
    pub clutter_rate: f64,
    pub amplitude: AmplitudeModel,
    pub n_frames: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::corridor()
    }
}

impl Scenario {
    /// The default scenario: a wall at x = 5 m and an object walking +x at
    /// 1.5 m/s, out and back between x = 1 m and x = 4 m.
    pub fn corridor() -> Self {
        Self {
            scenario_id: "corridor".into(),
            sensor: SensorSpec::default(),
            walls: vec![WallSegment::new(1, Vec2::new(5.0, -5.0), Vec2::new(5.0, 5.0))],
            object_class: ObjectClass::Pedestrian,
            trajectory: Trajectory {
                waypoints: vec![Vec2::new(1.0, 0.0), Vec2::new(4.0, 0.0)],
                speed: 1.5,
                out_and_back: true,
            },
            trajectory_jitter: 0.0,
            points_per_frame_mean: KindParams {
                real: 14.0,
                mp12: 2.0,
                mp22: 2.0,
                mp23: 1.8,
                omp: 0.6,
            },
            detection_prob: KindParams {
                real: 1.0,
                mp12: 0.7,
                mp22: 0.7,
                mp23: 0.5,
                omp: 0.05,
            },
            spatial_sigma: 0.25,
            doppler_sigma: 0.08,
            clutter_rate: 780.0,
            amplitude: AmplitudeModel::default(),
            n_frames: 385,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        if self.scenario_id.is_empty() {
            return Err(Error::InvalidScenario("empty scenario_id".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for wall in &self.walls {
            wall.validate()?;
            if !ids.insert(wall.id) {
                return Err(Error::InvalidScenario(format!(
                    "duplicate wall id {}",
                    wall.id
                )));
            }
        }
        if self.trajectory.waypoints.is_empty() {
            return Err(Error::InvalidScenario("trajectory has no waypoints".into()));
        }
        if !self.trajectory.waypoints.iter().all(|w| w.is_finite()) {
            return Err(Error::InvalidScenario("non-finite waypoint".into()));
        }
        if !(self.trajectory.speed >= 0.0) {
            return Err(Error::InvalidScenario("negative speed".into()));
        }
        if !self.object_class.is_vru() {
            return Err(Error::InvalidScenario(
                "main object must be a pedestrian or cyclist".into(),
            ));
        }
        for (name, p) in [
            ("real", self.detection_prob.real),
            ("mp12", self.detection_prob.mp12),
            ("mp22", self.detection_prob.mp22),
            ("mp23", self.detection_prob.mp23),
            ("omp", self.detection_prob.omp),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidScenario(format!(
                    "detection_prob.{name} = {p} outside [0, 1]"
                )));
            }
        }
        for v in [
            self.points_per_frame_mean.real,
            self.points_per_frame_mean.mp12,
            self.points_per_frame_mean.mp22,
            self.points_per_frame_mean.mp23,
            self.points_per_frame_mean.omp,
            self.clutter_rate,
            self.spatial_sigma,
            self.doppler_sigma,
            self.trajectory_jitter,
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidScenario(
                    "rates and spreads must be non-negative".into(),
                ));
            }
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidScenario("n_frames must be >= 1".into()));
        }

        // The walked path must start and end inside the field of view so the
        // sequence has usable prefix and suffix frames.
        let path = self.motion_path()?;
        for t in [0.0, (self.n_frames - 1) as f64 * self.sensor.cycle_time] {
            let state = path.state(t);
            let range = state.pos.norm();
            if !self
                .sensor
                .in_bounds(range, state.pos.bearing(), state.vel.dot(state.pos / range))
            {
                return Err(Error::InvalidScenario(format!(
                    "object outside the field of view at t = {t} s"
                )));
            }
        }
        Ok(())
    }

    /// The jittered motion path of this scenario instance (deterministic in
    /// the seed).
    pub fn motion_path(&self) -> Result<MotionPath> {
        let mut waypoints = self.trajectory.waypoints.clone();
        if self.trajectory_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, TRAJECTORY_STREAM));
            let j = self.trajectory_jitter;
            for w in &mut waypoints {
                w.x += rng.gen_range(-j..=j);
                w.y += rng.gen_range(-j..=j);
            }
        }
        MotionPath::new(waypoints, self.trajectory.speed, self.trajectory.out_and_back)
    }
}

// ---------------------------------------------------------------------------
// Motion along a waypoint path
// ---------------------------------------------------------------------------

/// Arc-length parametrized polyline motion, optionally out-and-back.
#[derive(Debug, Clone)]
pub struct MotionPath {
    waypoints: Vec<Vec2>,
    cumulative: Vec<f64>,
    speed: f64,
    out_and_back: bool,
}

impl MotionPath {
    pub fn new(waypoints: Vec<Vec2>, speed: f64, out_and_back: bool) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidScenario("trajectory has no waypoints".into()));
        }
        let mut cumulative = vec![0.0];
        for pair in waypoints.windows(2) {
            let d = pair[0].distance(pair[1]);
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Ok(Self {
            waypoints,
            cumulative,
            speed,
            out_and_back,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position and velocity at time `t`.
    pub fn state(&self, t: f64) -> MovingPoint {
        let total = self.length();
        if total <= 0.0 || self.speed <= 0.0 {
            return MovingPoint {
                pos: self.waypoints[0],
                vel: Vec2::ZERO,
            };
        }
        let distance = self.speed * t;
        let (arc, sign) = if self.out_and_back {
            let period = 2.0 * total;
            let m = distance.rem_euclid(period);
            if m <= total {
                (m, 1.0)
            } else {
                (period - m, -1.0)
            }
        } else {
            (distance.min(total), if distance < total { 1.0 } else { 0.0 })
        };

        // Find the segment containing `arc`.
        let mut i = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&arc).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        i = i.min(self.waypoints.len().saturating_sub(2));
        let seg_start = self.waypoints[i];
        let seg_end = self.waypoints[i + 1];
        let seg_len = seg_start.distance(seg_end);
        let frac = if seg_len > 0.0 {
            ((arc - self.cumulative[i]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dir = if seg_len > 0.0 {
            (seg_end - seg_start) / seg_len
        } else {
            Vec2::ZERO
        };
        MovingPoint {
            pos: seg_start + (seg_end - seg_start) * frac,
            vel: dir * (self.speed * sign),
        }
    }
}

// ---------------------------------------------------------------------------
// Seeding helpers
// ---------------------------------------------------------------------------

const TRAJECTORY_STREAM: u64 = u64::MAX;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent sub-stream seed; stable across platforms and thread counts.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

fn gauss(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).unwrap().sample(rng) as usize
}

// ---------------------------------------------------------------------------
// Frame generation
// ---------------------------------------------------------------------------

/// Instance id of the main object; ghost instances derive from the wall
/// index and kind so ids are stable across frames.
const MAIN_INSTANCE: u32 = 1;

fn ghost_instance_id(wall_index: usize, slot: usize) -> u32 {
    2 + (wall_index as u32) * 4 + slot as u32
}

/// Generate the frame at `frame_index`. The caller provides the per-frame
/// RNG; see [`frame_rng`].
pub fn generate_frame(
    scenario: &Scenario,
    path: &MotionPath,
    frame_index: u32,
    rng: &mut impl Rng,
) -> Frame {
    let sensor = &scenario.sensor;
    let t = frame_index as f64 * sensor.cycle_time;
    let obj = path.state(t);
    let mut raw: Vec<RadarPoint> = Vec::new();

    let object_annotation = |label: Label, instance_id: u32, surface_id: Option<u32>| Annotation {
        instance_id,
        label,
        object_class: scenario.object_class,
        surface_id,
        sketchy: false,
    };

    // Real cluster.
    if scenario.detection_prob.real > 0.0 && rng.gen::<f64>() < scenario.detection_prob.real {
        let n = poisson(rng, scenario.points_per_frame_mean.real);
        let radial = obj.pos.unit().map(|u| obj.vel.dot(u)).unwrap_or(0.0);
        for _ in 0..n {
            let pos = obj.pos
                + Vec2::new(
                    gauss(rng, scenario.spatial_sigma),
                    gauss(rng, scenario.spatial_sigma),
                );
            let doppler = radial + gauss(rng, scenario.doppler_sigma);
            let amplitude = scenario.amplitude.sample(pos.norm(), 0, 0.0, rng);
            raw.push(RadarPoint {
                x: pos.x,
                y: pos.y,
                doppler,
                amplitude,
                cycle_index: frame_index,
                annotation: object_annotation(Label::Real, MAIN_INSTANCE, None),
            });
        }
    }

    // Ghost clusters and sparse higher-order points, one group per wall.
    for (wall_index, wall) in scenario.walls.iter().enumerate() {
        let predictions = match ghost_detections(Vec2::ZERO, &obj, wall) {
            Ok(p) => p,
            Err(_) => continue, // object behind or on the wall line
        };
        for (slot, prediction) in predictions.iter().enumerate() {
            if !prediction.valid {
                continue;
            }
            let p_detect = scenario.detection_prob.get(prediction.kind);
            if p_detect <= 0.0 || rng.gen::<f64>() >= p_detect {
                continue;
            }
            let n = poisson(rng, scenario.points_per_frame_mean.get(prediction.kind));
            let extra_bounces = match prediction.kind {
                GhostKind::Mp12 | GhostKind::Mp22 => 1,
                GhostKind::Mp23 => 2,
            };
            let label = match prediction.kind {
                GhostKind::Mp12 => Label::Mp12,
                GhostKind::Mp22 => Label::Mp22,
                GhostKind::Mp23 => Label::Mp23,
            };
            for _ in 0..n {
                let pos = prediction.pos
                    + Vec2::new(
                        gauss(rng, scenario.spatial_sigma),
                        gauss(rng, scenario.spatial_sigma),
                    );
                let doppler = prediction.doppler + gauss(rng, scenario.doppler_sigma);
                let amplitude = scenario.amplitude.sample(pos.norm(), extra_bounces, 0.0, rng);
                raw.push(RadarPoint {
                    x: pos.x,
                    y: pos.y,
                    doppler,
                    amplitude,
                    cycle_index: frame_index,
                    annotation: object_annotation(
                        label,
                        ghost_instance_id(wall_index, slot),
                        Some(wall.id),
                    ),
                });
            }
        }

        // Other multi-path: sparse points behind the wall along the mirrored
        // bearing, standing in for higher order bounces.
        if scenario.detection_prob.omp > 0.0 && rng.gen::<f64>() < scenario.detection_prob.omp {
            let mp23 = &predictions[2];
            let n = poisson(rng, scenario.points_per_frame_mean.omp.max(1.0));
            for _ in 0..n {
                let range = mp23.range * rng.gen_range(1.15..1.9);
                let bearing = mp23.bearing + gauss(rng, 2.0f64.to_radians());
                let pos = Vec2::from_polar(range, bearing);
                let doppler = mp23.doppler + gauss(rng, 3.0 * scenario.doppler_sigma);
                let amplitude = scenario.amplitude.sample(pos.norm(), 3, 0.0, rng);
                raw.push(RadarPoint {
                    x: pos.x,
                    y: pos.y,
                    doppler,
                    amplitude,
                    cycle_index: frame_index,
                    annotation: object_annotation(
                        Label::Omp,
                        ghost_instance_id(wall_index, 3),
                        None,
                    ),
                });
            }
        }
    }

    // Uniform clutter across the field of view, stationary up to noise.
    let n_clutter = poisson(rng, scenario.clutter_rate);
    let fov = sensor.azimuth_fov_rad();
    for _ in 0..n_clutter {
        // Uniform in area: radius density proportional to r.
        let r2 = rng.gen_range(sensor.range_min.powi(2)..sensor.range_max.powi(2));
        let range = r2.sqrt();
        let bearing = rng.gen_range(-fov..fov);
        let pos = Vec2::from_polar(range, bearing);
        let doppler = gauss(rng, 0.1);
        let amplitude = scenario
            .amplitude
            .sample(range, 0, scenario.amplitude.clutter_offset_db, rng);
        raw.push(RadarPoint {
            x: pos.x,
            y: pos.y,
            doppler,
            amplitude,
            cycle_index: frame_index,
            annotation: Annotation::background(),
        });
    }

    // Quantize to sensor bins, then gate by range / azimuth / Doppler.
    let points = raw
        .into_iter()
        .filter_map(|p| {
            let range = p.range();
            let (range, azimuth, doppler) = sensor.quantize(range, p.azimuth(), p.doppler);
            if !sensor.in_bounds(range, azimuth, doppler) {
                return None;
            }
            let pos = Vec2::from_polar(range, azimuth);
            Some(RadarPoint {
                x: pos.x,
                y: pos.y,
                doppler,
                ..p
            })
        })
        .collect();

    Frame {
        cycle_index: frame_index,
        timestamp: t,
        points,
    }
}

/// The RNG driving the frame at `frame_index`; independent per frame.
pub fn frame_rng(scenario_seed: u64, frame_index: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(scenario_seed, frame_index as u64))
}

/// Generate the full sequence described by a scenario. Deterministic in the
/// scenario seed; frames are generated in parallel.
pub fn generate_sequence(scenario: &Scenario, split: Split) -> Result<Sequence> {
    scenario.validate()?;
    let path = scenario.motion_path()?;
    let frames: Vec<Frame> = (0..scenario.n_frames as u32)
        .into_par_iter()
        .map(|i| {
            let mut rng = frame_rng(scenario.seed, i);
            generate_frame(scenario, &path, i, &mut rng)
        })
        .collect();
    Ok(Sequence {
        scenario_id: scenario.scenario_id.clone(),
        sensor: scenario.sensor.clone(),
        walls: scenario.walls.clone(),
        split,
        frames,
    })
}

// ---------------------------------------------------------------------------
// Overlay synthesis
// ---------------------------------------------------------------------------

/// Minimum length of a synthesized sequence, in frames.
pub const MIN_OVERLAY_FRAMES: usize = 10;

/// Overlay 2–5 sequences of the same scenario into one multi-object
/// sequence.
///
/// Source `k` contributes its frames `offsets[k] .. offsets[k] + out_len`.
/// Instance ids are remapped to be unique in the output. The overlay is
/// rejected when two annotated instances from different sources come closer
/// than `min_separation` (centroid distance) in any frame.
pub fn overlay_sequences(
    sources: &[&Sequence],
    offsets: &[usize],
    min_separation: f64,
    out_len: usize,
) -> Result<Sequence> {
    if sources.len() < 2 || sources.len() > 5 {
        return Err(Error::InvalidOverlay(format!(
            "need 2 to 5 source sequences, got {}",
            sources.len()
        )));
    }
    if offsets.len() != sources.len() {
        return Err(Error::InvalidOverlay(
            "offsets and sources must have the same length".into(),
        ));
    }
    if out_len < MIN_OVERLAY_FRAMES {
        return Err(Error::InvalidOverlay(format!(
            "synthesized sequences must have at least {MIN_OVERLAY_FRAMES} frames"
        )));
    }
    let first = sources[0];
    for s in &sources[1..] {
        if s.scenario_id != first.scenario_id {
            return Err(Error::ScenarioMismatch(
                first.scenario_id.clone(),
                s.scenario_id.clone(),
            ));
        }
        if s.sensor != first.sensor || s.split != first.split {
            return Err(Error::InvalidOverlay(
                "sources differ in sensor spec or split".into(),
            ));
        }
    }
    for (k, (s, &off)) in sources.iter().zip(offsets).enumerate() {
        if off + out_len > s.frames.len() {
            return Err(Error::InvalidOverlay(format!(
                "source {k}: offset {off} + {out_len} frames exceeds its {} frames",
                s.frames.len()
            )));
        }
    }

    // Deterministic instance remapping: first encounter order.
    let mut remap: std::collections::BTreeMap<(usize, u32), u32> = std::collections::BTreeMap::new();
    let mut next_id: u32 = 1;
    let mut frames = Vec::with_capacity(out_len);

    for i in 0..out_len {
        let mut points = Vec::new();
        // (source, new instance id) -> (sum, count) for centroid checks.
        let mut centroids: std::collections::BTreeMap<(usize, u32), (Vec2, usize)> =
            std::collections::BTreeMap::new();

        for (k, (source, &off)) in sources.iter().zip(offsets).enumerate() {
            for p in &source.frames[off + i].points {
                let mut ann = p.annotation;
                if ann.instance_id != 0 {
                    let id = *remap.entry((k, ann.instance_id)).or_insert_with(|| {
                        let id = next_id;
                        next_id += 1;
                        id
                    });
                    ann.instance_id = id;
                    let entry = centroids.entry((k, id)).or_insert((Vec2::ZERO, 0));
                    entry.0 = entry.0 + Vec2::new(p.x, p.y);
                    entry.1 += 1;
                }
                points.push(RadarPoint {
                    cycle_index: i as u32,
                    annotation: ann,
                    ..p.clone()
                });
            }
        }

        // Reject if any two instances from different sources are too close.
        let entries: Vec<((usize, u32), Vec2)> = centroids
            .iter()
            .map(|(&key, &(sum, count))| (key, sum / count as f64))
            .collect();
        for (a, &((src_a, id_a), ca)) in entries.iter().enumerate() {
            for &((src_b, id_b), cb) in &entries[a + 1..] {
                if src_a == src_b {
                    continue;
                }
                let distance = ca.distance(cb);
                if distance < min_separation {
                    return Err(Error::OverlapViolation {
                        frame: i,
                        instance_a: id_a,
                        instance_b: id_b,
                        distance,
                        min_separation,
                    });
                }
            }
        }

        frames.push(Frame {
            cycle_index: i as u32,
            timestamp: i as f64 * first.sensor.cycle_time,
            points,
        });
    }

    Ok(Sequence {
        scenario_id: first.scenario_id.clone(),
        sensor: first.sensor.clone(),
        walls: first.walls.clone(),
        split: first.split,
        frames,
    })
}

/// An accepted random overlay together with the sources and offsets that
/// produced it.
#[derive(Debug, Clone)]
pub struct OverlayDraw {
    pub sequence: Sequence,
    /// Index into the source slice, one entry per overlaid sequence.
    pub source_indices: Vec<usize>,
    pub offsets: Vec<usize>,
}

/// Keep drawing random source subsets and offsets until an overlay is
/// accepted; used to synthesize multi-object training data.
pub fn overlay_random(
    sources: &[&Sequence],
    n_sources: usize,
    min_separation: f64,
    out_len: usize,
    rng: &mut impl Rng,
    max_tries: usize,
) -> Result<OverlayDraw> {
    if sources.is_empty() {
        return Err(Error::EmptyInput("overlay sources"));
    }
    let mut last_err = Error::InvalidOverlay("no attempt made".into());
    for _ in 0..max_tries {
        let mut indices = Vec::with_capacity(n_sources);
        let mut offsets = Vec::with_capacity(n_sources);
        for _ in 0..n_sources {
            let idx = rng.gen_range(0..sources.len());
            let s = sources[idx];
            if s.frames.len() < out_len {
                return Err(Error::InvalidOverlay(
                    "a source is shorter than the requested overlay length".into(),
                ));
            }
            offsets.push(rng.gen_range(0..=(s.frames.len() - out_len)));
            indices.push(idx);
        }
        let chosen: Vec<&Sequence> = indices.iter().map(|&i| sources[i]).collect();
        match overlay_sequences(&chosen, &offsets, min_separation, out_len) {
            Ok(sequence) => {
                return Ok(OverlayDraw {
                    sequence,
                    source_indices: indices,
                    offsets,
                })
            }
            Err(e @ Error::OverlapViolation { .. }) => last_err = e,
            Err(e) => return Err(e),
        }
    }
    Err(last_err)
}
