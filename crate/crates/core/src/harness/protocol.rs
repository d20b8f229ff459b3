//! Newline-delimited JSON messages exchanged with the ego agent.
//!
//! The harness sends one `init`, then alternates `observe` → `act` once per tick, and closes
//! with one `end`. Unknown fields are ignored on decode; encoding always emits fields in
//! declaration order, so `encode(decode(encode(m))) == encode(m)`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::grid::{Pose, VoxelLabel};
use crate::metrics::Scores;
use crate::project::{CameraModel, Mat3, SemanticImage, Vec3};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("message has a non-finite {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} message, got {got}")]
    UnexpectedMessage {
        expected: &'static str,
        got: &'static str,
    },
    #[error("act for tick {got} while tick {expected} is pending")]
    TickMismatch { expected: u64, got: u64 },
    #[error("inline raster: {0}")]
    Raster(String),
}

/// Calibration of one view as sent in `init`. Extrinsics map ego-frame points into the
/// camera frame (x right, y down, z forward).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewInfo {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl ViewInfo {
    pub fn new(name: &str, cam: &CameraModel) -> Self {
        let k = cam.intrinsics;
        Self {
            name: name.to_string(),
            width: k.width,
            height: k.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            rotation: cam.extrinsics.rotation,
            translation: cam.extrinsics.translation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterMode {
    File,
    Inline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Init {
    pub version: u32,
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub max_ticks: u64,
    pub route: Vec<Point2>,
    pub raster: RasterMode,
    pub views: Vec<ViewInfo>,
}

/// Where a raster lives: a file written by the harness, or base64 bytes inline.
///
/// Label rasters hold one class code per pixel; depth rasters hold little-endian `f32`
/// meters per pixel with `+∞` for misses. Both are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Raster {
    File(String),
    Inline(String),
}

impl Raster {
    pub fn inline_labels(img: &SemanticImage) -> Self {
        Self::Inline(STANDARD.encode(img.labels.iter().map(|l| l.code()).collect::<Vec<u8>>()))
    }

    pub fn inline_depth(img: &SemanticImage) -> Self {
        let bytes: Vec<u8> = img
            .depth
            .iter()
            .flat_map(|&d| (d as f32).to_le_bytes())
            .collect();
        Self::Inline(STANDARD.encode(bytes))
    }

    fn inline_bytes(&self) -> Result<Vec<u8>, ProtocolError> {
        match self {
            Raster::Inline(b) => STANDARD
                .decode(b)
                .map_err(|e| ProtocolError::Raster(e.to_string())),
            Raster::File(_) => Err(ProtocolError::Raster("raster is a file reference".into())),
        }
    }

    pub fn decode_labels(&self) -> Result<Vec<VoxelLabel>, ProtocolError> {
        self.inline_bytes()?
            .into_iter()
            .map(|c| VoxelLabel::new(c).map_err(|e| ProtocolError::Raster(e.to_string())))
            .collect()
    }

    pub fn decode_depth(&self) -> Result<Vec<f32>, ProtocolError> {
        let bytes = self.inline_bytes()?;
        if bytes.len() % 4 != 0 {
            return Err(ProtocolError::Raster(
                "depth length is not a multiple of 4".into(),
            ));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewFrame {
    pub name: String,
    pub labels: Raster,
    pub depth: Raster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoObservation {
    pub pose: Pose,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observe {
    pub tick: u64,
    pub time: f64,
    pub ego: EgoObservation,
    pub views: Vec<ViewFrame>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Act {
    /// Tick being answered; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick: Option<u64>,
    pub accel: f64,
    pub yaw_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct End {
    pub reason: String,
    pub ticks: u64,
    pub scores: Option<Scores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Init(Init),
    Observe(Observe),
    Act(Act),
    End(End),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Init(_) => "init",
            Message::Observe(_) => "observe",
            Message::Act(_) => "act",
            Message::End(_) => "end",
        }
    }

    /// One JSON line, without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    pub fn decode(line: &str) -> Result<Self, ProtocolError> {
        let msg: Message = serde_json::from_str(line.trim_end_matches(['\r', '\n']))?;
        match &msg {
            Message::Act(a) if !(a.accel.is_finite() && a.yaw_rate.is_finite()) => {
                Err(ProtocolError::NonFinite("control"))
            }
            Message::Init(i) if !i.dt.is_finite() => Err(ProtocolError::NonFinite("dt")),
            Message::Observe(o) if !(o.ego.pose.is_finite() && o.ego.speed.is_finite()) => {
                Err(ProtocolError::NonFinite("ego state"))
            }
            _ => Ok(msg),
        }
    }

    /// Decode a reply that must be an `act` for `tick`.
    pub fn decode_act(line: &str, tick: u64) -> Result<Act, ProtocolError> {
        match Self::decode(line)? {
            Message::Act(a) => match a.tick {
                Some(t) if t != tick => Err(ProtocolError::TickMismatch {
                    expected: tick,
                    got: t,
                }),
                _ => Ok(a),
            },
            other => Err(ProtocolError::UnexpectedMessage {
                expected: "act",
                got: other.kind(),
            }),
        }
    }
}
