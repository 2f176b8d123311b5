use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acoustics;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ArrayPose, Point3};

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.min.is_finite() && self.max.is_finite() && self.min <= self.max {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "{name}: min {} must not exceed max {}",
                self.min, self.max
            )))
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// Constraints for [`sample_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerBounds {
    pub room_x: Range,
    pub room_y: Range,
    pub room_z: Range,
    pub array_height: Range,
    pub source_height: Range,
    /// Distance from the array centroid to each source.
    pub source_distance: Range,
    /// Minimum angle (degrees, exclusive) between any two sources seen from
    /// the array centroid.
    pub min_source_angle_deg: f64,
    pub t60: Range,
    pub num_sources: usize,
    /// Clearance between walls and any microphone or source.
    pub wall_margin: f64,
    pub max_attempts: usize,
    pub speed_of_sound: f64,
}

impl Default for SamplerBounds {
    fn default() -> Self {
        SamplerBounds {
            room_x: Range::new(3.0, 8.0),
            room_y: Range::new(3.0, 8.0),
            room_z: Range::new(3.0, 3.0),
            array_height: Range::new(1.0, 1.5),
            source_height: Range::new(1.2, 1.9),
            source_distance: Range::new(0.5, 5.0),
            min_source_angle_deg: 20.0,
            t60: Range::new(0.2, 1.0),
            num_sources: 2,
            wall_margin: 0.1,
            max_attempts: 10_000,
            speed_of_sound: 340.0,
        }
    }
}

impl SamplerBounds {
    pub fn validate(&self) -> Result<()> {
        self.room_x.check("room_x")?;
        self.room_y.check("room_y")?;
        self.room_z.check("room_z")?;
        self.array_height.check("array_height")?;
        self.source_height.check("source_height")?;
        self.source_distance.check("source_distance")?;
        self.t60.check("t60")?;
        if self.room_x.min <= 0.0 || self.room_y.min <= 0.0 || self.room_z.min <= 0.0 {
            return Err(Error::Configuration(
                "room dimensions must be positive".into(),
            ));
        }
        if self.t60.min <= 0.0 {
            return Err(Error::Configuration("t60 must be positive".into()));
        }
        if self.num_sources == 0 {
            return Err(Error::Configuration(
                "num_sources must be at least 1".into(),
            ));
        }
        if !(0.0..180.0).contains(&self.min_source_angle_deg) {
            return Err(Error::Configuration(
                "min_source_angle_deg must be in [0, 180)".into(),
            ));
        }
        if self.wall_margin < 0.0 || self.max_attempts == 0 || self.speed_of_sound <= 0.0 {
            return Err(Error::Configuration(
                "wall_margin, max_attempts and speed_of_sound must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Wall absorption, either given per surface or implied by a target T60.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absorption {
    /// Energy absorption coefficients `[x0, x1, y0, y1, z0, z1]` in `[0, 1]`.
    Surfaces([f64; 6]),
    /// Target reverberation time (s); resolved to a uniform coefficient via
    /// Eyring's formula.
    T60(f64),
}

impl Absorption {
    pub fn uniform(alpha: f64) -> Self {
        Absorption::Surfaces([alpha; 6])
    }

    pub fn coefficients(&self, dims: &Point3, speed_of_sound: f64) -> Result<[f64; 6]> {
        let coeffs = match *self {
            Absorption::Surfaces(a) => a,
            Absorption::T60(t60) => {
                if !(t60.is_finite() && t60 > 0.0) {
                    return Err(Error::Configuration(format!(
                        "target T60 {t60} must be positive"
                    )));
                }
                [acoustics::eyring_absorption(dims, t60, speed_of_sound); 6]
            }
        };
        if coeffs.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Configuration(format!(
                "absorption coefficients {coeffs:?} must lie in [0, 1]"
            )));
        }
        Ok(coeffs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScenario {
    pub room_dims: Point3,
    pub absorption: Absorption,
    pub array_pose: ArrayPose,
    pub source_positions: Vec<Point3>,
    pub seed: u64,
}

impl RoomScenario {
    pub fn array_centroid(&self) -> Point3 {
        self.array_pose.position
    }
}

const ATTEMPTS_PER_ROOM: usize = 1000;

/// Angle in degrees between the directions from `center` to `a` and `b`.
pub fn subtended_angle_deg(center: &Point3, a: &Point3, b: &Point3) -> f64 {
    let u = a.sub(center);
    let v = b.sub(center);
    let cos = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

/// Draws a scenario that satisfies every constraint in `bounds`.
///
/// The array is kept `wall_margin + extent` away from the walls so any yaw
/// is valid; sources are rejection-sampled until the distance and
/// separation constraints hold.
pub fn sample_scenario(
    seed: u64,
    bounds: &SamplerBounds,
    geometry: &ArrayGeometry,
) -> Result<RoomScenario> {
    bounds.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = geometry.extent();
    let array_clearance = bounds.wall_margin + extent;
    let mut attempts = 0usize;

    loop {
        let room_dims = Point3::new(
            bounds.room_x.sample(&mut rng),
            bounds.room_y.sample(&mut rng),
            bounds.room_z.sample(&mut rng),
        );
        let t60 = bounds.t60.sample(&mut rng);
        if room_dims.x <= 2.0 * array_clearance || room_dims.y <= 2.0 * array_clearance {
            return Err(Error::Configuration(format!(
                "room {:?} too small for array extent {extent} m plus margin",
                room_dims.as_array()
            )));
        }
        let array_z = Range::new(
            bounds.array_height.min.max(bounds.wall_margin),
            bounds
                .array_height
                .max
                .min(room_dims.z - bounds.wall_margin),
        );
        let source_z = Range::new(
            bounds.source_height.min.max(bounds.wall_margin),
            bounds
                .source_height
                .max
                .min(room_dims.z - bounds.wall_margin),
        );
        if array_z.min > array_z.max || source_z.min > source_z.max {
            return Err(Error::Configuration(
                "height bounds do not fit inside the room".into(),
            ));
        }
        let array_pose = ArrayPose {
            position: Point3::new(
                rng.random_range(array_clearance..room_dims.x - array_clearance),
                rng.random_range(array_clearance..room_dims.y - array_clearance),
                array_z.sample(&mut rng),
            ),
            yaw: rng.random_range(0.0..std::f64::consts::TAU),
        };
        let centroid = array_pose.position;

        let mut sources: Vec<Point3> = Vec::with_capacity(bounds.num_sources);
        let mut room_attempts = 0usize;
        while sources.len() < bounds.num_sources && room_attempts < ATTEMPTS_PER_ROOM {
            attempts += 1;
            room_attempts += 1;
            if attempts > bounds.max_attempts {
                return Err(Error::SamplingExhausted {
                    attempts: bounds.max_attempts,
                    reason: format!("placed {} of {} sources", sources.len(), bounds.num_sources),
                });
            }
            let m = bounds.wall_margin;
            let candidate = Point3::new(
                rng.random_range(m..room_dims.x - m),
                rng.random_range(m..room_dims.y - m),
                source_z.sample(&mut rng),
            );
            let distance = candidate.distance(&centroid);
            if !bounds.source_distance.contains(distance) {
                continue;
            }
            let separated = sources.iter().all(|s| {
                subtended_angle_deg(&centroid, s, &candidate) > bounds.min_source_angle_deg
            });
            if separated {
                sources.push(candidate);
            }
        }

        // Rooms where the sources do not fit are redrawn; the global attempt
        // budget still bounds the whole search.
        if sources.len() == bounds.num_sources {
            return Ok(RoomScenario {
                room_dims,
                absorption: Absorption::T60(t60),
                array_pose,
                source_positions: sources,
                seed,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{place_array_in_room, Topology};

    #[test]
    fn default_scenario_is_within_bounds() {
        let g = ArrayGeometry::default_for(Topology::Circular16);
        let s = sample_scenario(0, &SamplerBounds::default(), &g).unwrap();
        assert!((3.0..=8.0).contains(&s.room_dims.x));
        assert!((3.0..=8.0).contains(&s.room_dims.y));
        assert_eq!(s.room_dims.z, 3.0);
        assert!(place_array_in_room(&g, &s.array_pose, &s.room_dims).is_ok());
        assert_eq!(s.source_positions.len(), 2);
        let angle = subtended_angle_deg(
            &s.array_centroid(),
            &s.source_positions[0],
            &s.source_positions[1],
        );
        assert!(angle > 20.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = ArrayGeometry::default_for(Topology::LinearUniform8);
        let b = SamplerBounds::default();
        assert_eq!(
            sample_scenario(42, &b, &g).unwrap(),
            sample_scenario(42, &b, &g).unwrap()
        );
        assert_ne!(
            sample_scenario(42, &b, &g).unwrap(),
            sample_scenario(43, &b, &g).unwrap()
        );
    }

    #[test]
    fn inconsistent_bounds_are_rejected() {
        let g = ArrayGeometry::default_for(Topology::LinearUniform8);
        let b = SamplerBounds {
            room_x: Range::new(8.0, 3.0),
            ..SamplerBounds::default()
        };
        assert!(matches!(
            sample_scenario(0, &b, &g),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn impossible_constraints_exhaust() {
        let g = ArrayGeometry::default_for(Topology::LinearUniform8);
        let b = SamplerBounds {
            source_distance: Range::new(20.0, 30.0),
            max_attempts: 500,
            ..SamplerBounds::default()
        };
        assert!(matches!(
            sample_scenario(0, &b, &g),
            Err(Error::SamplingExhausted { attempts: 500, .. })
        ));
    }

    #[test]
    fn t60_resolves_to_uniform_absorption() {
        let dims = Point3::new(4.0, 5.0, 3.0);
        let a = Absorption::T60(0.5).coefficients(&dims, 340.0).unwrap();
        assert!(a.iter().all(|&v| v == a[0]));
        let t = acoustics::eyring_t60(&dims, a[0], 340.0);
        assert!((t - 0.5).abs() < 1e-12);
        assert!(Absorption::uniform(1.5).coefficients(&dims, 340.0).is_err());
    }
}
