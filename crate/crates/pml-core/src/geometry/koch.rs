use super::{JordanCurve, Point};
use crate::error::{Error, Result};

/// Standard outward von Koch prefractal of the equilateral triangle,
/// counterclockwise, with `3 * 4^level` edges of length `side / 3^level`.
pub fn koch_snowflake(level: u32, side: f64) -> Result<JordanCurve> {
    if level > 8 {
        return Err(Error::Resource(format!(
            "koch level {level} exceeds 8 (vertex count 3*4^level)"
        )));
    }
    if !(side > 0.0) || !side.is_finite() {
        return Err(Error::Geometry(format!("koch side must be positive, got {side}")));
    }
    // Base triangle, CCW, centered so the centroid sits at the origin.
    let h = side * 3f64.sqrt() / 2.0;
    let mut verts = vec![
        Point::new(-side / 2.0, -h / 3.0),
        Point::new(side / 2.0, -h / 3.0),
        Point::new(0.0, 2.0 * h / 3.0),
    ];
    for _ in 0..level {
        let mut next = Vec::with_capacity(verts.len() * 4);
        let n = verts.len();
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let ab = b.sub(a);
            let p = a.add(ab.scale(1.0 / 3.0));
            let q = a.add(ab.scale(2.0 / 3.0));
            // Outward apex: rotate the middle third by -60 degrees so the
            // bump points away from the interior of a CCW polygon.
            let apex = rotate(q.sub(p), -std::f64::consts::FRAC_PI_3).add(p);
            next.extend_from_slice(&[a, p, apex, q]);
        }
        verts = next;
    }
    JordanCurve::new(verts)
}

fn rotate(v: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    Point::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_area;

    #[test]
    fn base_case_is_triangle() {
        let c = koch_snowflake(0, 1.0).unwrap();
        assert_eq!(c.len(), 3);
        assert!((c.perimeter() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn level_two_counts_and_perimeter() {
        let c = koch_snowflake(2, 1.0).unwrap();
        assert_eq!(c.len(), 48);
        assert!((c.perimeter() - 16.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_is_linear() {
        let c = koch_snowflake(1, 3.0).unwrap();
        assert_eq!(c.len(), 12);
        assert!((c.perimeter() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn edge_lengths_and_orientation() {
        let level = 3;
        let c = koch_snowflake(level, 1.0).unwrap();
        assert_eq!(c.len(), 3 * 4usize.pow(level));
        let expect = 1.0 / 3f64.powi(level as i32);
        for i in 0..c.len() {
            let (a, b) = c.segment(i);
            assert!((a.dist(b) - expect).abs() < 1e-12);
        }
        assert!(signed_area(c.vertices()) > 0.0);
        let perim = 3.0 * (4f64 / 3.0).powi(level as i32);
        assert!((c.perimeter() - perim).abs() < 1e-12);
    }

    #[test]
    fn apex_points_outward() {
        // The level-1 star must contain the base triangle's vertices and
        // reach further out than the base edge midpoints.
        let c = koch_snowflake(1, 1.0).unwrap();
        let bottom_apex = c
            .vertices()
            .iter()
            .cloned()
            .min_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
            .unwrap();
        let h = 3f64.sqrt() / 2.0;
        assert!(bottom_apex.y < -h / 3.0 - 1e-9);
    }

    #[test]
    fn level_too_large_errors() {
        assert!(matches!(koch_snowflake(9, 1.0), Err(Error::Resource(_))));
    }
}
