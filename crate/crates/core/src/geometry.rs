//! Small fixed-size vector helpers for points in three-space.

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Unit vector from spherical angles (polar cosine, azimuth).
#[inline]
pub fn direction(cos_theta: f64, phi: f64) -> Vec3 {
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    [sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta]
}

/// Two unit vectors completing `axis` (assumed unit) to an orthonormal frame.
pub fn orthonormal_complement(axis: Vec3) -> (Vec3, Vec3) {
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = cross(axis, helper);
    let e1 = scale(e1, 1.0 / norm(e1));
    let e2 = cross(axis, e1);
    (e1, e2)
}

/// Distance from the origin to the closed segment `[x, y]`.
pub fn segment_distance_to_origin(x: Vec3, y: Vec3) -> f64 {
    let d = sub(y, x);
    let len2 = dot(d, d);
    if len2 == 0.0 {
        return norm(x);
    }
    let t = (-dot(x, d) / len2).clamp(0.0, 1.0);
    norm(add(x, scale(d, t)))
}

/// Parameters `(t_in, t_out)` where the ray `origin + t * dir` (unit `dir`)
/// crosses the sphere `|z - center| = radius`, clipped to `t >= 0`.
pub fn ray_ball_chord(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<(f64, f64)> {
    let oc = sub(origin, center);
    let b = dot(oc, dir);
    let c = dot(oc, oc) - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t0 = (-b - s).max(0.0);
    let t1 = -b + s;
    if t1 <= t0 {
        None
    } else {
        Some((t0, t1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_cases() {
        assert!((segment_distance_to_origin([1.0, -1.0, 0.0], [1.0, 1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((segment_distance_to_origin([2.0, 0.0, 0.0], [3.0, 0.0, 0.0]) - 2.0).abs() < 1e-15);
        assert!((segment_distance_to_origin([0.0, 0.0, 4.0], [0.0, 0.0, 4.0]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn complement_is_orthonormal() {
        for axis in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.6, 0.0, 0.8]] {
            let (e1, e2) = orthonormal_complement(axis);
            assert!(dot(e1, axis).abs() < 1e-14);
            assert!(dot(e2, axis).abs() < 1e-14);
            assert!(dot(e1, e2).abs() < 1e-14);
            assert!((norm(e1) - 1.0).abs() < 1e-14 && (norm(e2) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn chord_through_center() {
        let (a, b) = ray_ball_chord([-3.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3], 1.0).unwrap();
        assert!((a - 2.0).abs() < 1e-14 && (b - 4.0).abs() < 1e-14);
        assert!(ray_ball_chord([0.0, 2.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3], 1.0).is_none());
        let (a, b) = ray_ball_chord([0.0; 3], [0.0, 0.0, 1.0], [0.0; 3], 2.0).unwrap();
        assert_eq!(a, 0.0);
        assert!((b - 2.0).abs() < 1e-14);
    }
}
