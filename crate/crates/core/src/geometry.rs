//! Pinhole cameras, two-view relative pose and epipolar geometry.
//!
//! Poses are world-to-camera: `x_cam = R * x_world + t`. Pixel coordinates
//! put the center of pixel `(i, j)` at `(i, j)`.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depth at or below which a point counts as behind the camera.
pub const Z_MIN: f64 = 1e-6;

const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("focal lengths must be positive (fx={fx}, fy={fy})")]
    NonPositiveFocal { fx: f64, fy: f64 },
    #[error("image size must be at least 1x1 (got {width}x{height})")]
    EmptyImage { width: u32, height: u32 },
    #[error("rotation is not orthonormal with det +1 (max deviation {deviation:e})")]
    InvalidRotation { deviation: f64 },
    #[error("non-finite pose component")]
    NonFinitePose,
    #[error("scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(GeometryError::NonPositiveFocal { fx, fy });
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyImage { width, height });
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square image with the principal point at the center and the given
    /// horizontal field of view.
    pub fn centered(size: u32, fov_x_radians: f64) -> Self {
        let f = 0.5 * size as f64 / (0.5 * fov_x_radians).tan();
        let c = 0.5 * (size as f64 - 1.0);
        Self {
            fx: f,
            fy: f,
            cx: c,
            cy: c,
            width: size,
            height: size,
        }
    }

    /// `fx = fy = 1`, `cx = cy = 0`: pixels coincide with normalized coordinates.
    pub fn unit() -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 1,
            height: 1,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// True when `p` lies inside `[0, W-1] x [0, H-1]`.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    /// Projects an approximately orthonormal matrix onto the nearest rotation
    /// (polar decomposition) before building the pose. Used for poses read
    /// from text files that carry only a few significant digits.
    pub fn from_approx_rotation(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinitePose);
        }
        let svd = rotation.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(GeometryError::InvalidRotation {
                    deviation: f64::INFINITY,
                })
            }
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            return Err(GeometryError::InvalidRotation {
                deviation: (r.determinant() - 1.0).abs(),
            });
        }
        // One Newton polish step keeps the result orthonormal to machine precision.
        r = 0.5 * (r + r.transpose().try_inverse().unwrap_or(r));
        Self::new(r, translation)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self
            .rotation
            .iter()
            .chain(self.translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GeometryError::NonFinitePose);
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        let det = (self.rotation.determinant() - 1.0).abs();
        let deviation = ortho.max(det);
        if deviation > ROTATION_TOL {
            return Err(GeometryError::InvalidRotation { deviation });
        }
        Ok(())
    }

    #[inline]
    pub fn transform(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }
}

/// Pose mapping camera-`a` coordinates to camera-`b` coordinates.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    let rotation = b.rotation * a.rotation.transpose();
    let translation = b.translation - rotation * a.translation;
    Pose { rotation, translation }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose) -> Self {
        Self { intrinsics, pose }
    }

    /// Pixel of a world point, or `None` when it is at or behind `Z_MIN`.
    pub fn project(&self, point: &Vector3<f64>) -> Option<Vector2<f64>> {
        self.project_with_depth(point).map(|(p, _)| p)
    }

    pub fn project_with_depth(&self, point: &Vector3<f64>) -> Option<(Vector2<f64>, f64)> {
        let xc = self.pose.transform(point);
        if !(xc.z > Z_MIN) {
            return None;
        }
        let k = &self.intrinsics;
        Some((Vector2::new(k.fx * xc.x / xc.z + k.cx, k.fy * xc.y / xc.z + k.cy), xc.z))
    }

    /// World point at camera depth `depth` (z in camera frame) behind `pixel`.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let xc = Vector3::new((pixel.x - k.cx) / k.fx * depth, (pixel.y - k.cy) / k.fy * depth, depth);
        self.pose.rotation.transpose() * (xc - self.pose.translation)
    }

    /// World-space direction of the ray through `pixel` (not normalized,
    /// unit z-component in the camera frame).
    pub fn ray_direction(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let k = &self.intrinsics;
        let dc = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        self.pose.rotation.transpose() * dc
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.center()
    }
}

/// Multiplies the camera translation by `s`; rotation and intrinsics untouched.
pub fn scale_translation(cam: &Camera, s: f64) -> Result<Camera, GeometryError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(GeometryError::NonPositiveScale(s));
    }
    Ok(Camera {
        intrinsics: cam.intrinsics,
        pose: Pose {
            rotation: cam.pose.rotation,
            translation: cam.pose.translation * s,
        },
    })
}

/// The camera reached from `reference` by the relative motion
/// `reference -> target` with its translation scaled by `s`.
///
/// When `reference` sits at the world origin this is exactly
/// [`scale_translation`] of `target`.
pub fn scale_relative_motion(reference: &Camera, target: &Camera, s: f64) -> Result<Camera, GeometryError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(GeometryError::NonPositiveScale(s));
    }
    let rel = relative_pose(&reference.pose, &target.pose);
    let scaled = Pose {
        rotation: rel.rotation,
        translation: rel.translation * s,
    };
    Ok(Camera {
        intrinsics: target.intrinsics,
        pose: scaled.compose(&reference.pose),
    })
}

/// Cross-product matrix `[v]_x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `E = [t]_x R` for the relative pose from view 1 to view 2.
pub fn essential_matrix(rel: &Pose) -> Matrix3<f64> {
    skew(&rel.translation) * rel.rotation
}

/// `F = K2^-T E K1^-1`.
pub fn fundamental_matrix(e: &Matrix3<f64>, k1: &Intrinsics, k2: &Intrinsics) -> Matrix3<f64> {
    k2.inverse_matrix().transpose() * e * k1.inverse_matrix()
}

/// Fundamental matrix of the pair `(a, b)` from their poses.
pub fn fundamental_between(a: &Camera, b: &Camera) -> Matrix3<f64> {
    let rel = relative_pose(&a.pose, &b.pose);
    fundamental_matrix(&essential_matrix(&rel), &a.intrinsics, &b.intrinsics)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMatch {
    pub p1: Vector2<f64>,
    pub p2: Vector2<f64>,
}

impl PixelMatch {
    pub fn new(p1: Vector2<f64>, p2: Vector2<f64>) -> Self {
        Self { p1, p2 }
    }

    pub fn swapped(&self) -> Self {
        Self {
            p1: self.p2,
            p2: self.p1,
        }
    }
}

/// How the two directional point-to-line distances are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SedAggregation {
    #[default]
    Mean,
    Max,
    Sum,
}

impl SedAggregation {
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            SedAggregation::Mean => 0.5 * (a + b),
            SedAggregation::Max => a.max(b),
            SedAggregation::Sum => a + b,
        }
    }
}

fn point_line_distance(line: &Vector3<f64>, p: &Vector2<f64>) -> f64 {
    let norm2 = line.x * line.x + line.y * line.y;
    if norm2 == 0.0 {
        return f64::INFINITY;
    }
    (line.x * p.x + line.y * p.y + line.z).abs() / norm2.sqrt()
}

/// Symmetric epipolar distance in pixels (mean of both directions).
pub fn symmetric_epipolar_distance(f: &Matrix3<f64>, m: &PixelMatch) -> f64 {
    symmetric_epipolar_distance_with(f, m, SedAggregation::Mean)
}

pub fn symmetric_epipolar_distance_with(f: &Matrix3<f64>, m: &PixelMatch, agg: SedAggregation) -> f64 {
    let x1 = m.p1.push(1.0);
    let x2 = m.p2.push(1.0);
    let d2 = point_line_distance(&(f * x1), &m.p2);
    let d1 = point_line_distance(&(f.transpose() * x2), &m.p1);
    agg.combine(d1, d2)
}
