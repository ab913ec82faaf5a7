//! Small geometric helpers shared by the stages.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Position plus orientation; used as turtle state by the vessel generator.
///
/// The orientation columns are the local heading (`H`), left (`L`) and up
/// (`U`) axes expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub position: Vec3,
    pub orientation: Mat3,
}

impl Pose3 {
    pub fn new(position: Vec3, orientation: Mat3) -> Result<Self> {
        let pose = Self { position, orientation };
        if !pose.is_orthonormal(1e-9) {
            return Err(Error::invalid("pose orientation is not a proper rotation"));
        }
        Ok(pose)
    }

    /// Pose at `position` heading along +z with left = +x and up = +y.
    pub fn heading_z(position: Vec3) -> Self {
        // columns: H = z, L = x, U = H x L = y
        let orientation = Mat3::from_columns(&[Vec3::z(), Vec3::x(), Vec3::y()]);
        Self { position, orientation }
    }

    pub fn heading(&self) -> Vec3 {
        self.orientation.column(0).into()
    }

    pub fn left(&self) -> Vec3 {
        self.orientation.column(1).into()
    }

    pub fn up(&self) -> Vec3 {
        self.orientation.column(2).into()
    }

    /// Rotate about the local axis `local` (0 = heading, 1 = left, 2 = up) by `angle` rad.
    pub fn rotate_local(&mut self, local: usize, angle: f64) {
        let axis = Unit::new_normalize(self.orientation.column(local).into_owned());
        let r = Rotation3::from_axis_angle(&axis, angle);
        self.orientation = r.matrix() * self.orientation;
        self.reorthonormalize();
    }

    pub fn advance(&mut self, distance: f64) {
        self.position += self.heading() * distance;
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let m = &self.orientation;
        let gram = m.transpose() * m;
        (gram - Mat3::identity()).abs().max() <= tol && (m.determinant() - 1.0).abs() <= tol
    }

    /// Gram-Schmidt cleanup so long turtle walks stay a proper rotation.
    fn reorthonormalize(&mut self) {
        let h = self.heading().normalize();
        let l = (self.left() - h * h.dot(&self.left())).normalize();
        let u = h.cross(&l);
        self.orientation = Mat3::from_columns(&[h, l, u]);
    }
}

/// Rotation matrix about a unit axis.
pub fn axis_rotation(axis: &Vec3, angle: f64) -> Mat3 {
    let axis = Unit::new_normalize(*axis);
    *Rotation3::from_axis_angle(&axis, angle).matrix()
}

/// Distance from `p` to the segment `[a, b]` and the clamped segment parameter.
#[inline]
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((a + ab * t - p).norm(), t)
}

/// Any unit vector perpendicular to `v`.
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let helper = if v[0].abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&helper).normalize()
}
