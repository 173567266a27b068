//! Adaptive multi-view camera placement.
//!
//! Cameras orbit the bounding-box center at a distance derived from the
//! bounding sphere, so the whole asset stays in frame for any scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance used when the scene has no spatial extent.
pub const FALLBACK_DISTANCE: f64 = 5.0;
pub const DEFAULT_MARGIN: f64 = 1.2;
pub const DEFAULT_FOV_DEG: f64 = 50.0;

const ORBIT_ELEVATION_DEG: f64 = 30.0;
const TOP_ELEVATION_DEG: f64 = 85.0;
const FIRST_AZIMUTH_DEG: f64 = 45.0;

/// Axis-aligned bounding box in scene units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BBox {
    pub const EMPTY: BBox = BBox { min: [0.0; 3], max: [0.0; 3] };

    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|i| 0.5 * (self.min[i] + self.max[i]))
    }

    /// Half the length of the diagonal: radius of the bounding sphere.
    pub fn half_diagonal(&self) -> f64 {
        let sq: f64 = (0..3).map(|i| (self.max[i] - self.min[i]).powi(2)).sum();
        0.5 * sq.sqrt()
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        std::array::from_fn(|k| {
            [
                if k & 1 == 0 { self.min[0] } else { self.max[0] },
                if k & 2 == 0 { self.min[1] } else { self.max[1] },
                if k & 4 == 0 { self.min[2] } else { self.max[2] },
            ]
        })
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min: std::array::from_fn(|i| self.min[i].min(other.min[i])),
            max: std::array::from_fn(|i| self.max[i].max(other.max[i])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewAngle {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl ViewAngle {
    /// Unit vector from the target towards the camera (Z up).
    pub fn direction(&self) -> [f64; 3] {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
    }

    pub fn camera_position(&self, target: [f64; 3], distance: f64) -> [f64; 3] {
        let d = self.direction();
        std::array::from_fn(|i| target[i] + distance * d[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPlan {
    pub views: Vec<ViewAngle>,
    pub distance: f64,
    pub target: [f64; 3],
    pub fov_deg: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("view count must be at least 1")]
    NoViews,
    #[error("field of view {0} is outside (0, 180) degrees")]
    InvalidFov(f64),
    #[error("margin {0} must be positive and finite")]
    InvalidMargin(f64),
}

/// Places `m` cameras around `bbox`.
///
/// Five views give four orbit cameras at 45/135/225/315 degrees azimuth plus
/// a near-top view; other counts spread the orbit evenly and append the top
/// view once there are at least five cameras.
pub fn plan_cameras(bbox: &BBox, m: usize, fov_deg: f64, margin: f64) -> Result<CameraPlan, CameraError> {
    if m == 0 {
        return Err(CameraError::NoViews);
    }
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(CameraError::InvalidFov(fov_deg));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(CameraError::InvalidMargin(margin));
    }

    let r = bbox.half_diagonal();
    let distance = if r > 0.0 {
        margin * r / (fov_deg.to_radians() / 2.0).sin()
    } else {
        FALLBACK_DISTANCE
    };

    let orbit = if m >= 5 { m - 1 } else { m };
    let mut views: Vec<ViewAngle> = (0..orbit)
        .map(|k| ViewAngle {
            azimuth_deg: FIRST_AZIMUTH_DEG + 360.0 * k as f64 / orbit as f64,
            elevation_deg: ORBIT_ELEVATION_DEG,
        })
        .collect();
    if m >= 5 {
        views.push(ViewAngle { azimuth_deg: 0.0, elevation_deg: TOP_ELEVATION_DEG });
    }

    Ok(CameraPlan { views, distance, target: bbox.center(), fov_deg })
}
