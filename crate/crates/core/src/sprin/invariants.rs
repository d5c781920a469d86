use crate::geometry::Vec3;

/// Sides below this length make the triangle angles undefined.
pub const DEGENERATE_SIDE: f64 = 1e-12;

/// Rotation-invariant description of a neighbor `x_i` seen from a center
/// `x_j`, relative to the cloud centroid `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeInvariant {
    /// Angle between the directions of `x_i` and `x_j` from the origin.
    pub beta_rel: f64,
    /// `‖x_i‖`.
    pub h_rel: f64,
    /// `‖x_i − x_j‖`
    pub s1: f64,
    /// `‖x_i − c‖`
    pub s2: f64,
    /// `‖x_j − c‖`
    pub s3: f64,
    /// Inner angle at `x_i`.
    pub a1: f64,
    /// Inner angle at `x_j`.
    pub a2: f64,
    /// Inner angle at `c`.
    pub a3: f64,
}

impl RelativeInvariant {
    pub const LEN: usize = 8;

    pub fn to_array(&self) -> [f64; 8] {
        [self.beta_rel, self.h_rel, self.s1, self.s2, self.s3, self.a1, self.a2, self.a3]
    }

    pub fn max_abs_diff(&self, other: &RelativeInvariant) -> f64 {
        self.to_array().iter().zip(other.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// The eight invariants of the pair `(x_i, x_j)`.
///
/// `beta_rel` is the polar angle of `T(x_j)⁻¹·x_i`, which reduces to the angle
/// between the two position vectors (0 when either sits at the origin). When
/// any triangle side is shorter than [`DEGENERATE_SIDE`] the angles are
/// `(0, π/2, π/2)`.
pub fn relative_invariants(x_i: Vec3, x_j: Vec3, c: Vec3) -> RelativeInvariant {
    let s1 = x_i.distance(x_j);
    let s2 = x_i.distance(c);
    let s3 = x_j.distance(c);
    let (a1, a2, a3) = if s1.min(s2).min(s3) < DEGENERATE_SIDE {
        (0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
    } else {
        (angle(x_j - x_i, c - x_i), angle(x_i - x_j, c - x_j), angle(x_i - c, x_j - c))
    };
    RelativeInvariant { beta_rel: angle(x_i, x_j), h_rel: x_i.norm(), s1, s2, s3, a1, a2, a3 }
}

fn angle(u: Vec3, v: Vec3) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}
