//! Unit-sphere geometry under the equirectangular projection.
//!
//! Conventions used throughout the crate:
//!
//! * Pixel `(i, j)` is addressed by its index; its center is the continuous
//!   coordinate `(u, v) = (i, j)` and it covers `[i - 0.5, i + 0.5)`.
//! * Longitude `λ = 2π(u + 0.5)/W − π`, latitude `φ = π/2 − π(v + 0.5)/H`.
//!   `+z` is up (image row 0), the image center looks along `+x`.
//! * The poles map to `u = W/2`.

use alloc::vec::Vec;

use crate::math::{self, Vec3, FRAC_PI_2, PI, TAU};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// A unit 3-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDir(Vec3);

impl SphereDir {
    /// Normalizes `v`; `None` for the zero vector.
    pub fn new(v: Vec3) -> Option<Self> {
        v.normalized().map(SphereDir)
    }

    pub fn from_lon_lat(lon: f64, lat: f64) -> Self {
        let c = math::cos(lat);
        SphereDir(Vec3::new(c * math::cos(lon), c * math::sin(lon), math::sin(lat)))
    }

    #[inline]
    pub fn vec(self) -> Vec3 {
        self.0
    }

    pub fn dot(self, o: SphereDir) -> f64 {
        self.0.dot(o.0)
    }

    pub fn lon(self) -> f64 {
        math::atan2(self.0.y, self.0.x)
    }

    pub fn lat(self) -> f64 {
        math::atan2(self.0.z, math::hypot(self.0.x, self.0.y))
    }

    pub fn rotate_z(self, angle: f64) -> Self {
        SphereDir(self.0.rotate_z(angle))
    }
}

pub fn lon_of_u(u: f64, width: usize) -> f64 {
    TAU * (u + 0.5) / width as f64 - PI
}

pub fn lat_of_v(v: f64, height: usize) -> f64 {
    FRAC_PI_2 - PI * (v + 0.5) / height as f64
}

/// Direction of a (continuous) pixel coordinate. `u` wraps; the latitude is
/// clamped to `[−π/2, π/2]`, i.e. `v` to `[−0.5, H − 0.5]`.
pub fn pixel_to_dir(p: PixelCoord, width: usize, height: usize) -> SphereDir {
    let lon = lon_of_u(p.u, width);
    let lat = lat_of_v(p.v, height).clamp(-FRAC_PI_2, FRAC_PI_2);
    SphereDir::from_lon_lat(lon, lat)
}

/// Inverse of [`pixel_to_dir`]. `u` is returned in `[0, W)`.
pub fn dir_to_pixel(d: SphereDir, width: usize, height: usize) -> PixelCoord {
    let v3 = d.vec();
    let w = width as f64;
    let h = height as f64;
    let r = math::hypot(v3.x, v3.y);
    let lat = math::atan2(v3.z, r);
    let vpx = (FRAC_PI_2 - lat) * h / PI - 0.5;
    if r < 1e-12 {
        return PixelCoord::new(w / 2.0, vpx);
    }
    let lon = math::atan2(v3.y, v3.x);
    let u = (lon + PI) * w / TAU - 0.5;
    PixelCoord::new(math::rem_euclid(u, w), vpx)
}

/// `n` points along the minor great-circle arc from `a` to `b` (spherical
/// linear interpolation). Endpoints are returned exactly.
pub fn geodesic_arc(a: SphereDir, b: SphereDir, n: usize) -> Result<Vec<SphereDir>> {
    if n < 2 {
        return Err(Error::InvalidParameter("geodesic_arc needs n >= 2"));
    }
    let dot = a.dot(b);
    if math::abs(dot + 1.0) < 1e-9 {
        return Err(Error::AntipodalEndpoints);
    }
    let (av, bv) = (a.vec(), b.vec());
    let theta = math::atan2(av.cross(bv).norm(), dot);
    let mut out = Vec::with_capacity(n);
    out.push(a);
    if theta < 1e-15 {
        out.extend(core::iter::repeat_n(a, n - 1));
        return Ok(out);
    }
    let s = math::sin(theta);
    for i in 1..n - 1 {
        let t = i as f64 / (n - 1) as f64;
        let p = av * (math::sin((1.0 - t) * theta) / s) + bv * (math::sin(t * theta) / s);
        // renormalize away the rounding error of the two sines
        out.push(SphereDir::new(p).unwrap_or(a));
    }
    out.push(b);
    Ok(out)
}

/// Great-circle angle between two directions, in radians.
pub fn angular_distance(a: SphereDir, b: SphereDir) -> f64 {
    let (av, bv) = (a.vec(), b.vec());
    math::atan2(av.cross(bv).norm(), av.dot(bv))
}

/// A column interval `[start, start + len)` on the periodic axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnSpan {
    pub start: f64,
    pub len: f64,
}

impl ColumnSpan {
    pub const fn new(start: f64, len: f64) -> Self {
        Self { start, len }
    }
}

/// Length of the intersection of two column spans, columns modulo `width`.
/// Both spans must have `len <= width`.
pub fn wrap_interval_overlap(a: ColumnSpan, b: ColumnSpan, width: usize) -> f64 {
    let w = width as f64;
    let a0 = math::rem_euclid(a.start, w);
    let b0 = math::rem_euclid(b.start, w);
    let (la, lb) = (a.len.clamp(0.0, w), b.len.clamp(0.0, w));
    // with both starts in [0, W) and lengths <= W, the copies of b at
    // -W, 0, +W are disjoint and cover every possible intersection with a
    let mut total = 0.0;
    for k in [-1.0, 0.0, 1.0] {
        let s = b0 + k * w;
        let lo = if a0 > s { a0 } else { s };
        let hi = if a0 + la < s + lb { a0 + la } else { s + lb };
        if hi > lo {
            total += hi - lo;
        }
    }
    total
}

/// Signed column difference `to − from` reduced to `[−W/2, W/2)`.
pub fn wrapped_delta(from: f64, to: f64, width: usize) -> f64 {
    let w = width as f64;
    math::rem_euclid(to - from + w / 2.0, w) - w / 2.0
}

/// East and north unit vectors of the tangent plane at `d`.
/// At the poles east is taken as `+y` (longitude 0).
pub fn tangent_basis(d: SphereDir) -> (Vec3, Vec3) {
    let v = d.vec();
    let r = math::hypot(v.x, v.y);
    let east = if r < 1e-12 {
        Vec3::Y
    } else {
        Vec3::new(-v.y / r, v.x / r, 0.0)
    };
    let north = v.cross(east);
    (east, north)
}

/// Inverse gnomonic projection: the direction through tangent-plane point
/// `(x, y)` (east, north) at `d`.
pub fn inverse_gnomonic(d: SphereDir, x: f64, y: f64) -> SphereDir {
    let (east, north) = tangent_basis(d);
    let p = d.vec() + east * x + north * y;
    // |p| >= 1 so normalization cannot fail
    SphereDir::new(p).unwrap_or(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const W: usize = 512;
    const H: usize = 256;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn image_center_is_plus_x() {
        let d = pixel_to_dir(PixelCoord::new(W as f64 / 2.0 - 0.5, H as f64 / 2.0 - 0.5), W, H);
        assert!(close(d.vec(), Vec3::X, 1e-15));
    }

    #[test]
    fn plus_x_maps_to_image_center() {
        let p = dir_to_pixel(SphereDir::new(Vec3::X).unwrap(), W, H);
        assert!((p.u - 255.5).abs() < 1e-12 && (p.v - 127.5).abs() < 1e-12);
    }

    #[test]
    fn pole_convention() {
        let p = dir_to_pixel(SphereDir::new(Vec3::Z).unwrap(), W, H);
        assert_eq!(p.u, W as f64 / 2.0);
        assert!((p.v + 0.5).abs() < 1e-12);
        let s = dir_to_pixel(SphereDir::new(-Vec3::Z).unwrap(), W, H);
        assert_eq!(s.u, W as f64 / 2.0);
        assert!((s.v - (H as f64 - 0.5)).abs() < 1e-12);
        // pixel_to_dir of the pole row boundary comes back to the pole
        let back = pixel_to_dir(p, W, H);
        assert!(close(back.vec(), Vec3::Z, 1e-12));
    }

    #[test]
    fn latitude_is_clamped() {
        let d = pixel_to_dir(PixelCoord::new(3.0, -7.0), W, H);
        assert!(close(d.vec(), Vec3::Z, 1e-12));
        let d = pixel_to_dir(PixelCoord::new(3.0, H as f64 + 4.0), W, H);
        assert!(close(d.vec(), -Vec3::Z, 1e-12));
    }

    #[test]
    fn arc_midpoint() {
        let a = SphereDir::new(Vec3::X).unwrap();
        let b = SphereDir::new(Vec3::Y).unwrap();
        let arc = geodesic_arc(a, b, 3).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!(close(arc[1].vec(), Vec3::new(h, h, 0.0), 1e-15));
        assert_eq!(arc[0], a);
        assert_eq!(arc[2], b);
    }

    #[test]
    fn arc_degenerate_and_antipodal() {
        let a = SphereDir::new(Vec3::new(0.3, -0.2, 0.9)).unwrap();
        assert!(geodesic_arc(a, a, 5).unwrap().iter().all(|p| *p == a));
        let b = SphereDir::new(-a.vec()).unwrap();
        assert_eq!(geodesic_arc(a, b, 5), Err(Error::AntipodalEndpoints));
        assert!(geodesic_arc(a, a, 1).is_err());
    }

    #[test]
    fn overlap_across_seam() {
        // brute force over integer columns: {502..511} ∪ {0..9} vs {0..4}
        let brute = (0..W as i64)
            .filter(|c| {
                let in_a = (c - (W as i64 - 10)).rem_euclid(W as i64) < 20;
                let in_b = *c < 5;
                in_a && in_b
            })
            .count();
        assert_eq!(brute, 5);
        let got = wrap_interval_overlap(
            ColumnSpan::new(W as f64 - 10.0, 20.0),
            ColumnSpan::new(0.0, 5.0),
            W,
        );
        assert_eq!(got, 5.0);
    }

    #[test]
    fn overlap_trivial_cases() {
        let a = ColumnSpan::new(100.0, 37.5);
        assert_eq!(wrap_interval_overlap(a, a, W), 37.5);
        let b = ColumnSpan::new(200.0, 10.0);
        assert_eq!(wrap_interval_overlap(a, b, W), 0.0);
        let full = ColumnSpan::new(0.0, W as f64);
        let shifted = ColumnSpan::new(0.5, W as f64);
        assert_eq!(wrap_interval_overlap(full, shifted, W), W as f64);
    }

    #[test]
    fn wrapped_delta_picks_short_way() {
        assert_eq!(wrapped_delta(510.0, 1.0, W), 3.0);
        assert_eq!(wrapped_delta(1.0, 510.0, W), -3.0);
    }

    #[test]
    fn gnomonic_center_and_equator_step() {
        let d = pixel_to_dir(PixelCoord::new(255.0, 127.0), W, H);
        assert!(close(inverse_gnomonic(d, 0.0, 0.0).vec(), d.vec(), 1e-15));
    }

    fn unit() -> impl Strategy<Value = SphereDir> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter_map("non-zero", |(x, y, z)| {
                let v = Vec3::new(x, y, z);
                if v.norm() > 0.1 {
                    SphereDir::new(v)
                } else {
                    None
                }
            })
    }

    proptest! {
        #[test]
        fn round_trip_dir_pixel_dir(d in unit()) {
            let p = dir_to_pixel(d, W, H);
            prop_assert!((0.0..W as f64).contains(&p.u));
            let back = pixel_to_dir(p, W, H);
            prop_assert!(close(back.vec(), d.vec(), 1e-9));
        }

        #[test]
        fn round_trip_pixel_dir_pixel(u in 0.0f64..512.0, v in 0.0f64..255.0) {
            let p = dir_to_pixel(pixel_to_dir(PixelCoord::new(u, v), W, H), W, H);
            prop_assert!((wrapped_delta(u, p.u, W)).abs() < 1e-9);
            prop_assert!((p.v - v).abs() < 1e-9);
        }

        #[test]
        fn periodic_in_u(u in -1000.0f64..1000.0, v in 0.0f64..256.0) {
            let a = pixel_to_dir(PixelCoord::new(u, v), W, H);
            let b = pixel_to_dir(PixelCoord::new(u + W as f64, v), W, H);
            prop_assert!(close(a.vec(), b.vec(), 1e-9));
        }

        #[test]
        fn column_shift_is_z_rotation(u in 0.0f64..512.0, v in 0.0f64..256.0, k in -600i32..600) {
            let a = pixel_to_dir(PixelCoord::new(u, v), W, H);
            let b = pixel_to_dir(PixelCoord::new(u + k as f64, v), W, H);
            let rot = a.rotate_z(TAU * k as f64 / W as f64);
            prop_assert!(close(b.vec(), rot.vec(), 1e-9));
        }

        #[test]
        fn arc_points_are_unit(a in unit(), b in unit(), n in 2usize..40) {
            prop_assume!(a.dot(b) > -0.999);
            for p in geodesic_arc(a, b, n).unwrap() {
                prop_assert!((p.vec().norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn arc_commutes_with_rotation(a in unit(), b in unit(), angle in -7.0f64..7.0) {
            prop_assume!(a.dot(b) > -0.999);
            let plain = geodesic_arc(a, b, 9).unwrap();
            let rotated = geodesic_arc(a.rotate_z(angle), b.rotate_z(angle), 9).unwrap();
            for (p, q) in plain.iter().zip(&rotated) {
                prop_assert!(close(p.rotate_z(angle).vec(), q.vec(), 1e-9));
            }
        }

        #[test]
        fn overlap_matches_brute_force(a0 in 0i64..64, la in 0i64..=64, b0 in 0i64..64, lb in 0i64..=64) {
            let w = 64usize;
            let brute = (0..64i64).filter(|c| {
                (c - a0).rem_euclid(64) < la && (c - b0).rem_euclid(64) < lb
            }).count() as f64;
            let fast = wrap_interval_overlap(
                ColumnSpan::new(a0 as f64, la as f64),
                ColumnSpan::new(b0 as f64, lb as f64),
                w,
            );
            prop_assert_eq!(fast, brute);
            let sym = wrap_interval_overlap(
                ColumnSpan::new(b0 as f64, lb as f64),
                ColumnSpan::new(a0 as f64, la as f64),
                w,
            );
            prop_assert_eq!(fast, sym);
        }
    }
}
