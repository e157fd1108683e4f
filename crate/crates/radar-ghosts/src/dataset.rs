//! JSON Lines dataset serialization.
//!
//! A sequence file starts with one metadata line (schema version, scenario,
//! sensor spec, walls, split) followed by one line per frame. Floats are
//! written in decimal with the shortest representation that round-trips
//! exactly, so `read(write(s)) == s` field for field and re-serialization is
//! byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::WallSegment;
use crate::types::{Frame, SensorSpec, Sequence, Split};

/// Version of the on-disk schema.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    scenario_id: String,
    split: Split,
    sensor: SensorSpec,
    walls: Vec<WallSegment>,
}

/// Write a sequence as JSONL. The parent directory must exist.
pub fn write_sequence(seq: &Sequence, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_sequence_to(seq, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Write a sequence to any writer; used for in-memory round-trip checks.
pub fn write_sequence_to(seq: &Sequence, w: &mut impl Write) -> Result<()> {
    let header = Header {
        schema: "radar-ghosts/sequence".into(),
        version: SCHEMA_VERSION,
        scenario_id: seq.scenario_id.clone(),
        split: seq.split,
        sensor: seq.sensor.clone(),
        walls: seq.walls.clone(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for frame in &seq.frames {
        serde_json::to_writer(&mut *w, frame)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Serialize a sequence to a JSONL string.
pub fn sequence_to_string(seq: &Sequence) -> Result<String> {
    let mut buf = Vec::new();
    write_sequence_to(seq, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Read and validate a sequence from a JSONL file.
pub fn read_sequence(path: impl AsRef<Path>) -> Result<Sequence> {
    let file = File::open(path)?;
    read_sequence_from(BufReader::new(file))
}

/// Read a sequence from any buffered reader.
pub fn read_sequence_from(r: impl BufRead) -> Result<Sequence> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::InvalidSequence("missing header line".into()))??;
    let header: Header = serde_json::from_str(&header_line)?;
    if header.version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: header.version,
            expected: SCHEMA_VERSION,
        });
    }

    let mut frames = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(serde_json::from_str::<Frame>(&line)?);
    }

    let seq = Sequence {
        scenario_id: header.scenario_id,
        sensor: header.sensor,
        walls: header.walls,
        split: header.split,
        frames,
    };
    seq.validate()?;
    Ok(seq)
}

/// Read every `*.jsonl` sequence in a directory, sorted by file name.
pub fn read_sequence_dir(dir: impl AsRef<Path>) -> Result<Vec<Sequence>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    paths.sort();
    paths.iter().map(read_sequence).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::types::{Annotation, RadarPoint};

    fn empty_sequence() -> Sequence {
        Sequence {
            scenario_id: "empty".into(),
            sensor: SensorSpec::default(),
            walls: vec![WallSegment::new(1, Vec2::new(5.0, -5.0), Vec2::new(5.0, 5.0))],
            split: Split::Train,
            frames: vec![],
        }
    }

    #[test]
    fn test_empty_sequence_single_header_line() {
        let s = sequence_to_string(&empty_sequence()).unwrap();
        assert_eq!(s.lines().count(), 1);
        let back = read_sequence_from(s.as_bytes()).unwrap();
        assert_eq!(back, empty_sequence());
    }

    #[test]
    fn test_single_point_round_trip() {
        let mut seq = empty_sequence();
        seq.frames.push(Frame {
            cycle_index: 0,
            timestamp: 0.0,
            points: vec![RadarPoint {
                x: 1.0,
                y: 0.0,
                doppler: 0.5,
                amplitude: 12.25,
                cycle_index: 0,
                annotation: Annotation::background(),
            }],
        });
        let s = sequence_to_string(&seq).unwrap();
        let back = read_sequence_from(s.as_bytes()).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn test_fixed_field_names_on_wire() {
        let mut seq = empty_sequence();
        seq.frames.push(Frame {
            cycle_index: 3,
            timestamp: 0.0,
            points: vec![RadarPoint {
                x: 1.5,
                y: -0.25,
                doppler: 0.5,
                amplitude: 3.0,
                cycle_index: 3,
                annotation: Annotation::background(),
            }],
        });
        let s = sequence_to_string(&seq).unwrap();
        let frame_line = s.lines().nth(1).unwrap();
        for key in [
            "\"x\"",
            "\"y\"",
            "\"doppler\"",
            "\"amplitude\"",
            "\"cycle\"",
            "\"instance_id\"",
            "\"label\"",
            "\"class\"",
            "\"surface_id\"",
            "\"sketchy\"",
        ] {
            assert!(frame_line.contains(key), "missing {key} in {frame_line}");
        }
        assert!(frame_line.contains("\"BACKGROUND\""));
        assert!(frame_line.contains("\"NONE\""));
    }

    #[test]
    fn test_schema_version_mismatch() {
        let s = sequence_to_string(&empty_sequence())
            .unwrap()
            .replace("\"version\":1", "\"version\":99");
        match read_sequence_from(s.as_bytes()) {
            Err(Error::SchemaVersion { found: 99, .. }) => {}
            other => panic!("expected schema version error, got {other:?}"),
        }
    }

    #[test]
    fn test_invariant_violation_on_read() {
        let mut seq = empty_sequence();
        seq.frames.push(Frame {
            cycle_index: 0,
            timestamp: 0.0,
            points: vec![RadarPoint {
                x: 500.0, // beyond range_max
                y: 0.0,
                doppler: 0.0,
                amplitude: 0.0,
                cycle_index: 0,
                annotation: Annotation::background(),
            }],
        });
        let s = sequence_to_string(&seq).unwrap();
        assert!(matches!(
            read_sequence_from(s.as_bytes()),
            Err(Error::InvalidSequence(_))
        ));
    }

    #[test]
    fn test_reserialization_is_byte_identical() {
        let mut seq = empty_sequence();
        for i in 0..4u32 {
            seq.frames.push(Frame {
                cycle_index: i,
                timestamp: i as f64 * 0.1,
                points: vec![RadarPoint {
                    x: 1.0 + i as f64 * 0.333333,
                    y: (i as f64).sin(),
                    doppler: -0.087 * i as f64,
                    amplitude: 7.123456789,
                    cycle_index: i,
                    annotation: Annotation::background(),
                }],
            });
        }
        let s1 = sequence_to_string(&seq).unwrap();
        let back = read_sequence_from(s1.as_bytes()).unwrap();
        let s2 = sequence_to_string(&back).unwrap();
        assert_eq!(s1, s2);
    }
}
