//! Per-camera, per-frame pixel observations and the tracks CSV format.
//!
//! Tracks file: header `cam,frame,feature,u,v`, one row per observation. Cameras are
//! numbered from 1 (camera 1 is the reference); frames from 0.

use std::io::{Read, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub feature: u64,
    pub pixel: Vector2<f64>,
}

/// Observations of one frame, indexed by camera.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameObservations {
    pub cameras: Vec<Vec<Observation>>,
}

impl FrameObservations {
    pub fn new(n_cameras: usize) -> Self {
        Self {
            cameras: vec![Vec::new(); n_cameras],
        }
    }

    pub fn camera(&self, k: usize) -> &[Observation] {
        self.cameras.get(k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find(&self, k: usize, feature: u64) -> Option<&Observation> {
        self.camera(k).iter().find(|o| o.feature == feature)
    }
}

/// A whole multi-camera observation stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequence {
    pub n_cameras: usize,
    pub frames: Vec<FrameObservations>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keeps only the listed cameras, renumbered in the given order.
    pub fn select_cameras(&self, cameras: &[usize]) -> Sequence {
        Sequence {
            n_cameras: cameras.len(),
            frames: self
                .frames
                .iter()
                .map(|f| FrameObservations {
                    cameras: cameras.iter().map(|&k| f.camera(k).to_vec()).collect(),
                })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["cam", "frame", "feature", "u", "v"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (frame, obs) in self.frames.iter().enumerate() {
            for (k, cam) in obs.cameras.iter().enumerate() {
                for o in cam {
                    w.serialize(TrackRow {
                        cam: k + 1,
                        frame,
                        feature: o.feature,
                        u: o.pixel.x,
                        v: o.pixel.y,
                    })
                    .map_err(|e| Error::Io(e.to_string()))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a tracks file. `n_cameras` is the rig size; rows naming a camera outside
    /// the rig are rejected. Frames with no rows become empty frames.
    pub fn read_csv<R: Read>(reader: R, n_cameras: usize, path: &str) -> Result<Sequence> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| parse_error(path, 1, e.to_string()))?
            .clone();
        let expected = ["cam", "frame", "feature", "u", "v"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(parse_error(
                path,
                1,
                format!("expected header `cam,frame,feature,u,v`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        let mut seq = Sequence {
            n_cameras,
            frames: Vec::new(),
        };
        for (i, row) in r.deserialize::<TrackRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| parse_error(path, line, e.to_string()))?;
            if row.cam == 0 || row.cam > n_cameras {
                return Err(parse_error(
                    path,
                    line,
                    format!("camera {} not in a rig of {n_cameras} cameras", row.cam),
                ));
            }
            if !(row.u.is_finite() && row.v.is_finite()) {
                return Err(parse_error(path, line, "pixel coordinates must be finite".into()));
            }
            if seq.frames.len() <= row.frame {
                seq.frames.resize(row.frame + 1, FrameObservations::new(n_cameras));
            }
            let cam = &mut seq.frames[row.frame].cameras[row.cam - 1];
            if cam.iter().any(|o| o.feature == row.feature) {
                return Err(parse_error(
                    path,
                    line,
                    format!("feature {} observed twice by camera {} in frame {}", row.feature, row.cam, row.frame),
                ));
            }
            cam.push(Observation {
                feature: row.feature,
                pixel: Vector2::new(row.u, row.v),
            });
        }
        Ok(seq)
    }
}

fn parse_error(path: &str, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    cam: usize,
    frame: usize,
    feature: u64,
    u: f64,
    v: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Sequence {
        let mut f0 = FrameObservations::new(2);
        f0.cameras[0].push(Observation { feature: 3, pixel: Vector2::new(0.1 + 0.2, 1.0 / 3.0) });
        f0.cameras[1].push(Observation { feature: 3, pixel: Vector2::new(12.5, 7e-17) });
        let mut f1 = FrameObservations::new(2);
        f1.cameras[0].push(Observation { feature: 4, pixel: Vector2::new(639.999, 479.5) });
        Sequence { n_cameras: 2, frames: vec![f0, f1] }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let seq = sample();
        let mut buf = Vec::new();
        seq.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cam,frame,feature,u,v\n"));
        let back = Sequence::read_csv(buf.as_slice(), 2, "mem").unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn missing_header_is_reported_on_line_one() {
        let text = "1,0,3,1.0,2.0\n";
        match Sequence::read_csv(text.as_bytes(), 2, "t.csv") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(path, "t.csv");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_rows_carry_line_numbers() {
        let text = "cam,frame,feature,u,v\n1,0,3,1.0,2.0\n3,0,3,1.0,2.0\n";
        assert!(matches!(Sequence::read_csv(text.as_bytes(), 2, "t"), Err(Error::Parse { line: 3, .. })));
        let text = "cam,frame,feature,u,v\n1,0,3,abc,2.0\n";
        assert!(matches!(Sequence::read_csv(text.as_bytes(), 2, "t"), Err(Error::Parse { line: 2, .. })));
        let text = "cam,frame,feature,u,v\n1,0,3,1,2\n1,0,3,1,2\n";
        assert!(matches!(Sequence::read_csv(text.as_bytes(), 2, "t"), Err(Error::Parse { line: 3, .. })));
    }
}
