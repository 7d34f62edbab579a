//! Planar domains: Jordan polylines, prefractals, distances, gauge
//! functions and the quasihyperbolic metric.

mod gauge;
mod koch;
mod quasihyperbolic;

pub use gauge::{covering_sum, Gauge, GaugeKind};
pub use koch::koch_snowflake;
pub use quasihyperbolic::quasihyperbolic_distance;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A point of the plane. Coordinates are dimensionless plane units and
/// must stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn add(&self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(&self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(&self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn dot(&self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product, twice the signed triangle area
    /// with the origin.
    pub fn cross(&self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// An open ball `B(z, r)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !center.is_finite() {
            return Err(Error::Domain(format!(
                "ball requires a finite center and radius > 0, got r = {radius}"
            )));
        }
        Ok(Ball { center, radius })
    }
}

/// A closed simple polyline, stored counterclockwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JordanCurve {
    vertices: Vec<Point>,
    /// Prefix arclengths: `prefix[i]` is the length of the path from
    /// vertex 0 to vertex i; the final entry is the perimeter.
    prefix: Vec<f64>,
}

impl JordanCurve {
    /// Builds a closed curve from its vertices. The orientation is
    /// normalized to counterclockwise; simplicity is checked.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry(format!(
                "a Jordan polyline needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("non-finite vertex coordinate".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i].dist(vertices[(i + 1) % n]) == 0.0 {
                return Err(Error::Geometry(format!(
                    "consecutive vertices {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let curve = JordanCurve {
            prefix: prefix_arclengths(&vertices),
            vertices,
        };
        if !curve.is_simple() {
            return Err(Error::Geometry("polyline intersects itself".into()));
        }
        Ok(curve)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn perimeter(&self) -> f64 {
        *self.prefix.last().unwrap()
    }

    /// Arclength of the path from vertex 0 up to vertex i.
    pub fn prefix_arclength(&self, i: usize) -> f64 {
        self.prefix[i]
    }

    pub fn segment(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    /// The point at arclength `s` along the curve (s taken mod perimeter).
    pub fn point_at(&self, s: f64) -> Point {
        let total = self.perimeter();
        let mut s = s % total;
        if s < 0.0 {
            s += total;
        }
        let i = match self
            .prefix
            .binary_search_by(|p| p.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.vertices.len() - 1),
            Err(i) => i - 1,
        };
        let (a, b) = self.segment(i);
        let seg = self.prefix[i + 1] - self.prefix[i];
        let t = if seg > 0.0 { (s - self.prefix[i]) / seg } else { 0.0 };
        a.add(b.sub(a).scale(t))
    }

    /// Exact Euclidean distance from `z` to the polyline.
    pub fn distance(&self, z: Point) -> f64 {
        self.closest_point(z).0
    }

    /// Distance together with the foot of the projection:
    /// `(distance, segment index, parameter on segment)`.
    pub fn closest_point(&self, z: Point) -> (f64, usize, f64) {
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..self.vertices.len() {
            let (a, b) = self.segment(i);
            let (d2, t) = point_segment_dist2(z, a, b);
            if d2 < best.0 {
                best = (d2, i, t);
            }
        }
        (best.0.sqrt(), best.1, best.2)
    }

    /// Arclength coordinate of the projection of `z` onto the curve.
    pub fn arclength_of(&self, z: Point) -> f64 {
        let (_, i, t) = self.closest_point(z);
        let seg = self.prefix[i + 1] - self.prefix[i];
        self.prefix[i] + t * seg
    }

    /// Winding-number point-in-polygon test; boundary points count as
    /// outside "strictly inside".
    pub fn contains(&self, z: Point) -> bool {
        let mut winding = 0i32;
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if a.y <= z.y {
                if b.y > z.y && b.sub(a).cross(z.sub(a)) > 0.0 {
                    winding += 1;
                }
            } else if b.y <= z.y && b.sub(a).cross(z.sub(a)) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Diagonal of the bounding box, used as the diameter scale.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        hi.sub(lo).norm()
    }

    /// Conservative lower bound on the true diameter: the larger
    /// bounding-box side (the width of a set never exceeds its
    /// diameter).
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi.x - lo.x).max(hi.y - lo.y)
    }

    /// Grid-accelerated check that no two non-adjacent segments intersect.
    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let (lo, hi) = self.bounding_box();
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
        let mean_len = self.perimeter() / n as f64;
        let cell = mean_len.max(span / 512.0);
        let cols = ((hi.x - lo.x) / cell).ceil() as i64 + 1;
        let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> =
            std::collections::HashMap::new();
        let key = |p: Point| -> (i64, i64) {
            (((p.x - lo.x) / cell) as i64, ((p.y - lo.y) / cell) as i64)
        };
        let _ = cols;
        for i in 0..n {
            let (a, b) = self.segment(i);
            let (ka, kb) = (key(a), key(b));
            for gx in ka.0.min(kb.0)..=ka.0.max(kb.0) {
                for gy in ka.1.min(kb.1)..=ka.1.max(kb.1) {
                    buckets.entry((gx, gy)).or_default().push(i);
                }
            }
        }
        for segs in buckets.values() {
            for (k, &i) in segs.iter().enumerate() {
                for &j in &segs[k + 1..] {
                    let gap = (i as i64 - j as i64).rem_euclid(n as i64);
                    if gap <= 1 || gap >= n as i64 - 1 {
                        continue; // adjacent segments share a vertex
                    }
                    let (a, b) = self.segment(i);
                    let (c, d) = self.segment(j);
                    if segments_intersect(a, b, c, d) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// The capacitary ring substrate: a Jordan boundary with an interior
/// basepoint. `inner_radius` is half the distance from the basepoint to
/// the boundary, so the ring is the domain minus the closed inner disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Domain {
    boundary: JordanCurve,
    basepoint: Point,
    inner_radius: f64,
}

impl Domain {
    pub fn new(boundary: JordanCurve, basepoint: Point) -> Result<Self> {
        if !boundary.contains(basepoint) {
            return Err(Error::Geometry(
                "basepoint is not strictly inside the boundary".into(),
            ));
        }
        let d = boundary.distance(basepoint);
        if d <= 0.0 {
            return Err(Error::Geometry("basepoint lies on the boundary".into()));
        }
        Ok(Domain {
            boundary,
            basepoint,
            inner_radius: d / 2.0,
        })
    }

    pub fn boundary(&self) -> &JordanCurve {
        &self.boundary
    }

    pub fn basepoint(&self) -> Point {
        self.basepoint
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// Exact distance from `z` to the outer boundary polyline.
    pub fn distance_to_boundary(&self, z: Point) -> f64 {
        self.boundary.distance(z)
    }

    /// Strictly inside the outer boundary.
    pub fn contains(&self, z: Point) -> bool {
        self.boundary.contains(z)
    }

    /// Inside the ring D: in the domain and outside the closed inner disk.
    pub fn in_ring(&self, z: Point) -> bool {
        self.contains(z) && z.dist(self.basepoint) > self.inner_radius
    }
}

/// On-disk domain description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<[f64; 2]>,
}

impl DomainSpec {
    pub fn to_domain(&self) -> Result<Domain> {
        let curve = match self.kind.as_str() {
            "koch" => {
                let level = self.level.unwrap_or(3);
                let side = self.side.unwrap_or(1.0);
                koch_snowflake(level, side)?
            }
            "regular_ngon" => {
                let n = self.level.unwrap_or(256) as usize;
                let r = self.side.unwrap_or(1.0);
                regular_ngon(n, r)?
            }
            "polygon" => {
                let verts = self.vertices.as_ref().ok_or_else(|| {
                    Error::Format("polygon domain requires \"vertices\"".into())
                })?;
                JordanCurve::new(verts.iter().map(|v| Point::new(v[0], v[1])).collect())?
            }
            other => {
                return Err(Error::Format(format!(
                    "unknown domain kind {other:?}, expected koch | polygon | regular_ngon"
                )))
            }
        };
        let basepoint = match self.basepoint {
            Some([x, y]) => Point::new(x, y),
            None => centroid(&curve),
        };
        Domain::new(curve, basepoint)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("domain spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("domain spec serializes")
    }
}

/// Regular n-gon of circumradius `r` centered at the origin.
pub fn regular_ngon(n: usize, r: f64) -> Result<JordanCurve> {
    if n < 3 {
        return Err(Error::Geometry("regular_ngon needs n >= 3".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Geometry("regular_ngon needs radius > 0".into()));
    }
    let verts = (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Point::new(r * t.cos(), r * t.sin())
        })
        .collect();
    JordanCurve::new(verts)
}

/// Vertex centroid of the polygon (area centroid of the region).
pub fn centroid(curve: &JordanCurve) -> Point {
    let verts = curve.vertices();
    let n = verts.len();
    let mut a = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = verts[i];
        let q = verts[(i + 1) % n];
        let w = p.cross(q);
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    a *= 0.5;
    Point::new(cx / (6.0 * a), cy / (6.0 * a))
}

pub(crate) fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut a = 0.0;
    for i in 0..n {
        a += vertices[i].cross(vertices[(i + 1) % n]);
    }
    a / 2.0
}

fn prefix_arclengths(vertices: &[Point]) -> Vec<f64> {
    let n = vertices.len();
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for i in 0..n {
        acc += vertices[i].dist(vertices[(i + 1) % n]);
        prefix.push(acc);
    }
    prefix
}

/// Squared distance from `z` to segment `ab` and the projection parameter.
fn point_segment_dist2(z: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        (z.sub(a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let foot = a.add(ab.scale(t));
    let d = z.sub(foot);
    (d.dot(d), t)
}

/// Proper or touching intersection of closed segments, for the
/// simplicity check (adjacent segments are excluded by the caller).
fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = b.sub(a).cross(c.sub(a));
    let d2 = b.sub(a).cross(d.sub(a));
    let d3 = d.sub(c).cross(a.sub(c));
    let d4 = d.sub(c).cross(b.sub(c));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point, q: Point, r: Point, cr: f64| -> bool {
        cr == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(a, b, c, d1) || on(a, b, d, d2) || on(c, d, a, d3) || on(c, d, b, d4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> JordanCurve {
        JordanCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn square_distance_to_nearest_side() {
        let sq = unit_square();
        assert_eq!(sq.distance(Point::new(0.5, 0.25)), 0.25);
        assert_eq!(sq.distance(Point::new(0.0, 0.0)), 0.0);
    }

    #[test]
    fn ngon_inradius_matches_cosine() {
        let curve = regular_ngon(256, 1.0).unwrap();
        let d = curve.distance(Point::new(0.0, 0.0));
        let inradius = (std::f64::consts::PI / 256.0).cos();
        assert!((d - inradius).abs() < 1e-12);
        assert!((d - 1.0).abs() <= 2e-4);
    }

    #[test]
    fn orientation_is_normalized() {
        let cw = JordanCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(signed_area(cw.vertices()) > 0.0);
    }

    #[test]
    fn self_intersection_rejected() {
        let bowtie = JordanCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ]);
        assert!(bowtie.is_err());
    }

    #[test]
    fn containment_and_ring() {
        let dom = Domain::new(unit_square(), Point::new(0.5, 0.5)).unwrap();
        assert!((dom.inner_radius() - 0.25).abs() < 1e-15);
        assert!(dom.contains(Point::new(0.9, 0.9)));
        assert!(!dom.contains(Point::new(1.1, 0.5)));
        assert!(dom.in_ring(Point::new(0.9, 0.9)));
        assert!(!dom.in_ring(Point::new(0.5, 0.6)));
    }

    #[test]
    fn basepoint_outside_rejected() {
        let err = Domain::new(unit_square(), Point::new(2.0, 0.5));
        assert!(err.is_err());
    }

    #[test]
    fn point_at_walks_the_perimeter() {
        let sq = unit_square();
        let p = sq.point_at(1.5);
        assert!((p.x - 1.0).abs() < 1e-15 && (p.y - 0.5).abs() < 1e-15);
        let q = sq.point_at(4.0 + 0.5);
        assert!((q.x - 0.5).abs() < 1e-15 && q.y.abs() < 1e-15);
    }

    #[test]
    fn domain_spec_round_trip() {
        let spec = DomainSpec {
            kind: "koch".into(),
            level: Some(2),
            side: Some(1.0),
            vertices: None,
            basepoint: None,
        };
        let text = spec.to_json();
        let back = DomainSpec::from_json(&text).unwrap();
        let dom = back.to_domain().unwrap();
        assert_eq!(dom.boundary().len(), 48);
    }
}
