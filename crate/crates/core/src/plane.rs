//! Ground-plane geometry: oriented rectangles and convex polygons.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type V2 = Vector2<f64>;

/// Rectangle on the ground; `heading` (radians) is the direction of the
/// `length` side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: [f64; 2],
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn center(&self) -> V2 {
        V2::from(self.center)
    }

    pub fn axis(&self) -> V2 {
        V2::new(self.heading.cos(), self.heading.sin())
    }

    pub fn normal(&self) -> V2 {
        V2::new(-self.heading.sin(), self.heading.cos())
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [V2; 4] {
        let c = self.center();
        let a = self.axis() * (self.length / 2.0);
        let n = self.normal() * (self.width / 2.0);
        [c - a - n, c + a - n, c + a + n, c - a + n]
    }

    /// Coordinates of `p` along (axis, normal) relative to the center.
    pub fn local(&self, p: &V2) -> V2 {
        let d = p - self.center();
        V2::new(d.dot(&self.axis()), d.dot(&self.normal()))
    }

    pub fn contains(&self, p: &V2) -> bool {
        let l = self.local(p);
        l.x.abs() <= self.length / 2.0 && l.y.abs() <= self.width / 2.0
    }

    /// Whether every corner of `other` lies inside, with tolerance `eps`.
    pub fn contains_rect(&self, other: &OrientedRect, eps: f64) -> bool {
        other.corners().iter().all(|p| {
            let l = self.local(p);
            l.x.abs() <= self.length / 2.0 + eps && l.y.abs() <= self.width / 2.0 + eps
        })
    }

    pub fn expanded(&self, margin: f64) -> OrientedRect {
        OrientedRect {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            ..*self
        }
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }
}

/// Point-in-convex-polygon test for counter-clockwise vertices (boundary inclusive).
pub fn convex_contains(poly: &[V2], p: &V2) -> bool {
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        (b - a).perp(&(p - a)) >= -1e-12
    })
}

pub fn segment_distance(p: &V2, a: &V2, b: &V2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (p - (a + ab * t)).norm()
}

fn projection_range(poly: &[V2], axis: &V2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

/// Separating-axis overlap test for convex polygons.
pub fn convex_overlap(a: &[V2], b: &[V2]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let edge = poly[(i + 1) % poly.len()] - poly[i];
            let axis = V2::new(-edge.y, edge.x);
            let (a_lo, a_hi) = projection_range(a, &axis);
            let (b_lo, b_hi) = projection_range(b, &axis);
            if a_hi < b_lo || b_hi < a_lo {
                return false;
            }
        }
    }
    true
}

/// Euclidean distance between convex polygons, zero when they overlap.
pub fn convex_distance(a: &[V2], b: &[V2]) -> f64 {
    if convex_overlap(a, b) {
        return 0.0;
    }
    let one_way = |p: &[V2], q: &[V2]| {
        p.iter()
            .flat_map(|v| (0..q.len()).map(move |i| segment_distance(v, &q[i], &q[(i + 1) % q.len()])))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

/// Distance from a disc to a convex polygon, zero on overlap.
pub fn disc_distance(center: &V2, radius: f64, poly: &[V2]) -> f64 {
    if convex_contains(poly, center) {
        return 0.0;
    }
    let edge = (0..poly.len())
        .map(|i| segment_distance(center, &poly[i], &poly[(i + 1) % poly.len()]))
        .fold(f64::INFINITY, f64::min);
    (edge - radius).max(0.0)
}

/// Smallest signed angle difference wrapped to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = a.rem_euclid(two_pi);
    if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Angle between two undirected lines, in [0, π/2].
pub fn line_angle(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b).abs();
    d.min(std::f64::consts::PI - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, y: f64, heading: f64) -> OrientedRect {
        OrientedRect {
            center: [x, y],
            heading,
            length: 4.0,
            width: 2.0,
        }
    }

    #[test]
    fn corners_are_counter_clockwise() {
        let r = rect(0.0, 0.0, 0.3);
        let c = r.corners();
        for i in 0..4 {
            let e1 = c[(i + 1) % 4] - c[i];
            let e2 = c[(i + 2) % 4] - c[(i + 1) % 4];
            assert!(e1.perp(&e2) > 0.0);
        }
        assert!(convex_contains(&c, &V2::new(0.0, 0.0)));
        assert!(!convex_contains(&c, &V2::new(5.0, 0.0)));
    }

    #[test]
    fn distances() {
        let a = rect(0.0, 0.0, 0.0).corners();
        let b = rect(5.0, 0.0, 0.0).corners();
        assert!((convex_distance(&a, &b) - 1.0).abs() < 1e-12);
        let c = rect(1.0, 0.5, 0.7).corners();
        assert_eq!(convex_distance(&a, &c), 0.0);
        assert!((disc_distance(&V2::new(0.0, 3.0), 0.5, &a) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn containment() {
        let slot = OrientedRect {
            center: [0.0, 0.0],
            heading: 0.8,
            length: 5.0,
            width: 3.4,
        };
        let car = OrientedRect {
            length: 4.5,
            width: 1.8,
            ..slot
        };
        assert!(slot.contains_rect(&car, 0.0));
        assert!(!car.contains_rect(&slot, 0.0));
    }

    #[test]
    fn angles() {
        assert!((line_angle(0.0, std::f64::consts::PI) - 0.0).abs() < 1e-12);
        assert!((line_angle(0.1, -0.1) - 0.2).abs() < 1e-12);
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
    }
}
