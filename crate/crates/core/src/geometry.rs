//! Microphone-array topologies and their placement in a room.
//!
//! All arrays are built in an array-local frame whose origin is the centroid
//! of the microphones, with linear arrays laid out along the local x axis and
//! circular arrays in the local xy plane. The order of `mic_positions` is the
//! channel order used everywhere else (channel 1 in reports is index 0 here).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn sub(&self, other: &Point3) -> Point3 {
        Point3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn norm(&self) -> f64 {
        self.distance(&Point3::ORIGIN)
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// True when the point lies strictly inside the box `[0, dims]`.
    pub fn strictly_inside(&self, dims: &Point3) -> bool {
        self.x > 0.0
            && self.x < dims.x
            && self.y > 0.0
            && self.y < dims.y
            && self.z > 0.0
            && self.z < dims.z
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.as_array()
    }
}

/// Centroid of a non-empty point set.
pub fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len() as f64;
    let (sx, sy, sz) = points
        .iter()
        .fold((0.0, 0.0, 0.0), |(x, y, z), p| (x + p.x, y + p.y, z + p.z));
    Point3::new(sx / n, sy / n, sz / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "circular16")]
    Circular16,
    #[serde(rename = "linear-uniform8")]
    LinearUniform8,
    #[serde(rename = "linear-nonuniform8")]
    LinearNonuniform8,
    #[serde(rename = "dual-linear16")]
    DualLinear16,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::Circular16,
        Topology::LinearUniform8,
        Topology::LinearNonuniform8,
        Topology::DualLinear16,
    ];

    pub fn num_mics(self) -> usize {
        match self {
            Topology::Circular16 | Topology::DualLinear16 => 16,
            Topology::LinearUniform8 | Topology::LinearNonuniform8 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Circular16 => "circular16",
            Topology::LinearUniform8 => "linear-uniform8",
            Topology::LinearNonuniform8 => "linear-nonuniform8",
            Topology::DualLinear16 => "dual-linear16",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "circular16" | "circular" => Ok(Topology::Circular16),
            "linearuniform8" | "linearuniform" => Ok(Topology::LinearUniform8),
            "linearnonuniform8" | "linearnonuniform" => Ok(Topology::LinearNonuniform8),
            "duallinear16" | "duallinear" => Ok(Topology::DualLinear16),
            _ => Err(Error::Parameter(format!("unknown topology '{s}'"))),
        }
    }
}

/// Default radius of the 16-mic circular array, meters.
pub const CIRCULAR_RADIUS: f64 = 0.05;
/// Default spacing of the uniform 8-mic linear array, meters.
pub const LINEAR_SPACING: f64 = 0.011;
/// Default gaps of the non-uniform linear array. The published layout only
/// gives this pictorially, so it is always treated as configuration.
pub const NONUNIFORM_GAPS: [f64; 7] = [0.02, 0.03, 0.05, 0.08, 0.05, 0.03, 0.02];
/// Default distance between the last mic of sub-array A and the first mic
/// of sub-array B in the dual linear array, meters.
pub const DUAL_LINEAR_GAP: f64 = 0.05;

/// Shape parameters for each topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArrayParams {
    Circular { radius: f64 },
    LinearUniform { spacing: f64 },
    LinearNonuniform { gaps: Vec<f64> },
    DualLinear { spacing: f64, gap: f64 },
}

impl ArrayParams {
    pub fn default_for(topology: Topology) -> Self {
        match topology {
            Topology::Circular16 => ArrayParams::Circular {
                radius: CIRCULAR_RADIUS,
            },
            Topology::LinearUniform8 => ArrayParams::LinearUniform {
                spacing: LINEAR_SPACING,
            },
            Topology::LinearNonuniform8 => ArrayParams::LinearNonuniform {
                gaps: NONUNIFORM_GAPS.to_vec(),
            },
            Topology::DualLinear16 => ArrayParams::DualLinear {
                spacing: LINEAR_SPACING,
                gap: DUAL_LINEAR_GAP,
            },
        }
    }

    pub fn topology(&self) -> Topology {
        match self {
            ArrayParams::Circular { .. } => Topology::Circular16,
            ArrayParams::LinearUniform { .. } => Topology::LinearUniform8,
            ArrayParams::LinearNonuniform { .. } => Topology::LinearNonuniform8,
            ArrayParams::DualLinear { .. } => Topology::DualLinear16,
        }
    }
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Parameter(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub topology: Topology,
    pub params: ArrayParams,
    pub mic_positions: Vec<Point3>,
}

impl ArrayGeometry {
    /// Builds the default geometry for a topology.
    pub fn default_for(topology: Topology) -> Self {
        build_array(topology, &ArrayParams::default_for(topology))
            .expect("default array parameters are valid")
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    /// Reference microphone (channel 1), 0-based.
    pub fn reference_mic(&self) -> usize {
        0
    }

    /// Largest distance of any microphone from the array-local origin.
    pub fn extent(&self) -> f64 {
        self.mic_positions
            .iter()
            .map(Point3::norm)
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("geometry serializes")
    }

    /// Parses a geometry document and checks that it is consistent with its
    /// topology. Positions are taken verbatim so that channel order survives.
    pub fn from_json(text: &str) -> Result<Self> {
        let geometry: ArrayGeometry = serde_json::from_str(text)
            .map_err(|e| Error::Parameter(format!("geometry document: {e}")))?;
        if geometry.params.topology() != geometry.topology {
            return Err(Error::Parameter(format!(
                "params describe {} but topology is {}",
                geometry.params.topology(),
                geometry.topology
            )));
        }
        if geometry.mic_positions.len() != geometry.topology.num_mics() {
            return Err(Error::Parameter(format!(
                "{} expects {} positions, document has {}",
                geometry.topology,
                geometry.topology.num_mics(),
                geometry.mic_positions.len()
            )));
        }
        Ok(geometry)
    }
}

fn centered_line(offsets: &[f64]) -> Vec<Point3> {
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    offsets
        .iter()
        .map(|&x| Point3::new(x - mean, 0.0, 0.0))
        .collect()
}

fn cumulative(gaps: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut offsets = vec![0.0];
    let mut acc = 0.0;
    for gap in gaps {
        acc += gap;
        offsets.push(acc);
    }
    offsets
}

/// Builds an array geometry. `params` must describe the requested topology.
pub fn build_array(topology: Topology, params: &ArrayParams) -> Result<ArrayGeometry> {
    if params.topology() != topology {
        return Err(Error::Parameter(format!(
            "{} parameters given for topology {}",
            params.topology(),
            topology
        )));
    }
    let mic_positions = match params {
        ArrayParams::Circular { radius } => {
            let radius = positive("radius", *radius)?;
            let n = topology.num_mics();
            (0..n)
                .map(|k| {
                    let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    Point3::new(radius * angle.cos(), radius * angle.sin(), 0.0)
                })
                .collect()
        }
        ArrayParams::LinearUniform { spacing } => {
            let spacing = positive("spacing", *spacing)?;
            centered_line(&cumulative(std::iter::repeat_n(spacing, 7)))
        }
        ArrayParams::LinearNonuniform { gaps } => {
            if gaps.len() != 7 {
                return Err(Error::Parameter(format!(
                    "non-uniform linear array needs 7 gaps, got {}",
                    gaps.len()
                )));
            }
            for &gap in gaps {
                positive("gap", gap)?;
            }
            centered_line(&cumulative(gaps.iter().copied()))
        }
        ArrayParams::DualLinear { spacing, gap } => {
            let spacing = positive("spacing", *spacing)?;
            let gap = positive("gap", *gap)?;
            let gaps = std::iter::repeat_n(spacing, 7)
                .chain(std::iter::once(gap))
                .chain(std::iter::repeat_n(spacing, 7));
            centered_line(&cumulative(gaps))
        }
    };
    Ok(ArrayGeometry {
        topology,
        params: params.clone(),
        mic_positions,
    })
}

/// Position and heading of an array in the room frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayPose {
    pub position: Point3,
    /// Rotation about the vertical axis, radians.
    pub yaw: f64,
}

impl ArrayPose {
    pub fn identity() -> Self {
        ArrayPose {
            position: Point3::ORIGIN,
            yaw: 0.0,
        }
    }
}

/// Rigid transform of the array into the room frame: rotate by `yaw`, then
/// translate to `pose.position`.
pub fn place_array(geometry: &ArrayGeometry, pose: &ArrayPose) -> Vec<Point3> {
    let (sin, cos) = pose.yaw.sin_cos();
    geometry
        .mic_positions
        .iter()
        .map(|p| {
            Point3::new(
                cos * p.x - sin * p.y + pose.position.x,
                sin * p.x + cos * p.y + pose.position.y,
                p.z + pose.position.z,
            )
        })
        .collect()
}

/// Like [`place_array`], but fails unless every microphone lies strictly
/// inside the room `[0, room_dims]`.
pub fn place_array_in_room(
    geometry: &ArrayGeometry,
    pose: &ArrayPose,
    room_dims: &Point3,
) -> Result<Vec<Point3>> {
    let placed = place_array(geometry, pose);
    if let Some((idx, p)) = placed
        .iter()
        .enumerate()
        .find(|(_, p)| !p.strictly_inside(room_dims))
    {
        return Err(Error::Placement(format!(
            "mic {} at ({:.4}, {:.4}, {:.4}) lies outside room {:?}",
            idx + 1,
            p.x,
            p.y,
            p.z,
            room_dims.as_array()
        )));
    }
    Ok(placed)
}
