use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraModel, CameraRig, Extrinsics, Intrinsics, ProjectError, SemanticImage};
use crate::grid::VoxelLabel;

/// One camera of a rig config, mounted on the ego (x forward, y left, z up).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in degrees; ignored when `fx` is given.
    #[serde(default)]
    pub hfov_deg: Option<f64>,
    #[serde(default)]
    pub fx: Option<f64>,
    /// Defaults to `fx`.
    #[serde(default)]
    pub fy: Option<f64>,
    /// Defaults to `width / 2`.
    #[serde(default)]
    pub cx: Option<f64>,
    /// Defaults to `height / 2`.
    #[serde(default)]
    pub cy: Option<f64>,
    pub position: [f64; 3],
    pub yaw_deg: f64,
    /// Positive tilts the camera down.
    #[serde(default)]
    pub pitch_deg: f64,
}

impl CameraSpec {
    pub fn build(&self) -> Result<CameraModel, ProjectError> {
        let fx = match (self.fx, self.hfov_deg) {
            (Some(fx), _) => fx,
            (None, Some(h)) if h > 0.0 && h < 180.0 => {
                self.width as f64 / 2.0 / (h.to_radians() / 2.0).tan()
            }
            _ => {
                return Err(ProjectError::Config(format!(
                    "camera {:?} needs fx or a horizontal fov in (0, 180)",
                    self.name
                )))
            }
        };
        CameraModel::new(
            Intrinsics {
                fx,
                fy: self.fy.unwrap_or(fx),
                cx: self.cx.unwrap_or(self.width as f64 / 2.0),
                cy: self.cy.unwrap_or(self.height as f64 / 2.0),
                width: self.width,
                height: self.height,
            },
            Extrinsics::look(
                self.position,
                self.yaw_deg.to_radians(),
                self.pitch_deg.to_radians(),
            ),
        )
    }
}

/// TOML rig description: a list of `[[camera]]` tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub camera: Vec<CameraSpec>,
}

impl RigConfig {
    pub fn surround(width: usize, height: usize) -> Self {
        let views = [
            ("front", 0.0, [1.5, 0.0]),
            ("front-left", 55.0, [1.3, 0.5]),
            ("front-right", -55.0, [1.3, -0.5]),
            ("back", 180.0, [-1.5, 0.0]),
            ("back-left", 110.0, [-1.3, 0.5]),
            ("back-right", -110.0, [-1.3, -0.5]),
        ];
        Self {
            camera: views
                .into_iter()
                .map(|(name, yaw, [x, y])| CameraSpec {
                    name: name.into(),
                    width,
                    height,
                    hfov_deg: Some(70.0),
                    fx: None,
                    fy: None,
                    cx: None,
                    cy: None,
                    position: [x, y, 1.6],
                    yaw_deg: yaw,
                    pitch_deg: 0.0,
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ProjectError> {
        toml::from_str(text).map_err(|e| ProjectError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ProjectError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<CameraRig, ProjectError> {
        CameraRig::new(
            self.camera
                .iter()
                .map(|c| Ok((c.name.clone(), c.build()?)))
                .collect::<Result<_, ProjectError>>()?,
        )
    }
}

/// Binary PGM (P5) with one label code per pixel.
pub fn write_pgm(path: &Path, img: &SemanticImage) -> Result<(), ProjectError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", img.width, img.height)?;
    f.write_all(&img.labels.iter().map(|l| l.code()).collect::<Vec<u8>>())?;
    f.flush()?;
    Ok(())
}

/// Read a P5 label image written by [`write_pgm`]: `(width, height, labels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<VoxelLabel>), ProjectError> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| ProjectError::Format(m.to_string());
    // Header: magic, width, height, maxval separated by whitespace, then one whitespace byte.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let data = bytes
        .get(pos..)
        .filter(|d| d.len() == w * h)
        .ok_or_else(|| bad("pixel count mismatch"))?;
    let labels = data
        .iter()
        .map(|&c| VoxelLabel::new(c).map_err(|_| bad("invalid label code")))
        .collect::<Result<_, _>>()?;
    Ok((w, h, labels))
}

/// Raw little-endian f32 depth raster, row-major; misses are `+∞`.
pub fn write_depth(path: &Path, img: &SemanticImage) -> Result<(), ProjectError> {
    let bytes: Vec<u8> = img
        .depth
        .iter()
        .flat_map(|&d| (d as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_depth(path: &Path, width: usize, height: usize) -> Result<Vec<f32>, ProjectError> {
    let bytes = fs::read(path)?;
    if bytes.len() != width * height * 4 {
        return Err(ProjectError::Format(format!(
            "depth file holds {} bytes, expected {}",
            bytes.len(),
            width * height * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
