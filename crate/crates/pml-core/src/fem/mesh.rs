use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::hash::Hasher;
use serde::{Deserialize, Serialize};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

/// Target minimum interior angle of the triangulation, degrees.
const MIN_ANGLE_DEG: f64 = 25.0;
/// Hard invariant checked on the final mesh, degrees.
const MIN_ANGLE_INVARIANT_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeTag {
    Interior,
    InnerCircle,
    OuterBoundary,
}

/// Conforming triangulation of the capacitary ring
/// `D = domain \ closed inner disk`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: Domain,
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub node_tags: Vec<NodeTag>,
    /// Longest edge of the final mesh.
    pub h_max: f64,
    /// Requested target edge length.
    pub h: f64,
    pub grading: f64,
    locator: Locator,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        pa.dist(pb).max(pb.dist(pc)).max(pc.dist(pa))
    }

    /// Triangle containing `z`; shared-edge ties resolve to the lowest
    /// triangle index. Returns the index and barycentric coordinates.
    pub fn locate(&self, z: Point) -> Option<(usize, [f64; 3])> {
        self.locator.locate(self, z)
    }

    /// Deterministic content hash over nodes, connectivity and tags.
    pub fn content_hash(&self) -> String {
        let mut h = Hasher::new();
        for p in &self.nodes {
            h = h.f64(p.x).f64(p.y);
        }
        for t in &self.triangles {
            h = h.usizes(t);
        }
        for tag in &self.node_tags {
            h = h.bytes(&[match tag {
                NodeTag::Interior => 0u8,
                NodeTag::InnerCircle => 1,
                NodeTag::OuterBoundary => 2,
            }]);
        }
        h.finish()
    }

    /// Local mesh size at `z`: diameter of the containing triangle.
    pub fn local_size(&self, z: Point) -> Option<f64> {
        self.locate(z).map(|(t, _)| self.triangle_diameter(t))
    }

    /// Checks the structural mesh invariants, used by tests and after
    /// construction.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9 * self.domain.boundary().diameter().max(1.0);
        for (t, tri) in self.triangles.iter().enumerate() {
            let (a, b, c) = (self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]);
            let area = triangle_area(a, b, c);
            if area <= 0.0 {
                return Err(Error::Geometry(format!("triangle {t} has area {area}")));
            }
            let ang = min_angle_deg(a, b, c);
            if ang < MIN_ANGLE_INVARIANT_DEG {
                return Err(Error::Geometry(format!(
                    "triangle {t} has min angle {ang:.2} deg"
                )));
            }
        }
        let r_in = self.domain.inner_radius();
        let z0 = self.domain.basepoint();
        for (i, p) in self.nodes.iter().enumerate() {
            match self.node_tags[i] {
                NodeTag::OuterBoundary => {
                    if self.domain.distance_to_boundary(*p) > tol {
                        return Err(Error::Geometry(format!(
                            "outer node {i} off the boundary polyline"
                        )));
                    }
                }
                NodeTag::InnerCircle => {
                    if (p.dist(z0) - r_in).abs() > self.h_max * self.h_max {
                        return Err(Error::Geometry(format!(
                            "inner node {i} off the circle by {:.3e}",
                            (p.dist(z0) - r_in).abs()
                        )));
                    }
                }
                NodeTag::Interior => {}
            }
        }
        // Conformity: every edge is shared by at most two triangles and
        // appears with both orientations when interior.
        let mut edge_count: std::collections::HashMap<(usize, usize), i32> =
            std::collections::HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = (u.min(v), u.max(v));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        if edge_count.values().any(|&c| c > 2) {
            return Err(Error::Geometry("non-conforming edge".into()));
        }
        Ok(())
    }
}

/// Graded target edge length. At grading 1 the target is uniformly `h`;
/// at grading 0.5 the target shrinks like the square root of the
/// distance to the outer boundary.
pub(crate) fn target_size(domain: &Domain, h: f64, grading: f64, z: Point) -> f64 {
    let diam = domain.boundary().diameter();
    let d = domain.distance_to_boundary(z).max(h / 4.0);
    h * (d / diam).powf(1.0 - grading)
}

/// Triangulates the ring between the domain boundary and the inner
/// circle, refining for a minimum angle and the graded size target.
pub fn build_ring_mesh(domain: &Domain, h: f64, grading: f64) -> Result<Mesh> {
    let r_in = domain.inner_radius();
    if !(h > 0.0) || h >= r_in / 4.0 {
        return Err(Error::Domain(format!(
            "mesh size h = {h} must satisfy 0 < h < inner_radius/4 = {}",
            r_in / 4.0
        )));
    }
    if !(0.5..=1.0).contains(&grading) {
        return Err(Error::Domain(format!("grading {grading} outside [0.5, 1]")));
    }

    let z0 = domain.basepoint();
    let boundary = domain.boundary();
    let bsize = target_size(domain, h, grading, boundary.vertices()[0]);

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();

    // Outer boundary, densified to the boundary size target.
    let mut outer_loop = Vec::new();
    for i in 0..boundary.len() {
        let (a, b) = boundary.segment(i);
        let pieces = (a.dist(b) / bsize).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let t = k as f64 / pieces as f64;
            outer_loop.push(a.add(b.sub(a).scale(t)));
        }
    }
    // Inner circle, densified to the local size target.
    let mut circle_size = f64::INFINITY;
    let probes = 64;
    for k in 0..probes {
        let t = 2.0 * std::f64::consts::PI * k as f64 / probes as f64;
        let p = Point::new(z0.x + r_in * t.cos(), z0.y + r_in * t.sin());
        circle_size = circle_size.min(target_size(domain, h, grading, p));
    }
    let n_circle = ((2.0 * std::f64::consts::PI * r_in) / circle_size).ceil().max(12.0) as usize;
    let inner_loop: Vec<Point> = (0..n_circle)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n_circle as f64;
            Point::new(z0.x + r_in * t.cos(), z0.y + r_in * t.sin())
        })
        .collect();

    let insert_loop = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>,
                           pts: &[Point]|
     -> Result<()> {
        let handles: Vec<_> = pts
            .iter()
            .map(|p| cdt.insert(Point2::new(p.x, p.y)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Geometry(format!("boundary insertion failed: {e:?}")))?;
        for k in 0..handles.len() {
            let (u, v) = (handles[k], handles[(k + 1) % handles.len()]);
            if u != v {
                cdt.add_constraint(u, v);
            }
        }
        Ok(())
    };
    insert_loop(&mut cdt, &outer_loop)?;
    insert_loop(&mut cdt, &inner_loop)?;

    let in_ring = |p: Point| domain.in_ring(p);
    let refine_params = || {
        RefinementParameters::<f64>::new()
            .with_angle_limit(AngleLimit::from_deg(MIN_ANGLE_DEG))
            .with_max_additional_vertices(2_000_000)
            .exclude_outer_faces(true)
    };

    let inner_dist = |p: Point| (p.dist(z0) - r_in).abs();
    for _pass in 0..60 {
        let result = cdt.refine(refine_params());
        if !result.refinement_complete {
            return Err(Error::Geometry(
                "angle-driven refinement hit the vertex budget".into(),
            ));
        }
        // Size pass: split ring triangles whose circumradius exceeds the
        // graded target. Candidates are thinned to a Poisson-like
        // spacing so one pass cannot cluster points at tiny scales.
        let excluded: std::collections::HashSet<_> =
            result.excluded_faces.iter().copied().collect();
        let mut candidates: Vec<(Point, f64)> = Vec::new();
        for face in cdt.inner_faces() {
            if excluded.contains(&face.fix()) {
                continue;
            }
            let [a, b, c] = face.positions();
            let centroid = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
            let cc = face.circumcenter();
            let pa = Point::new(a.x, a.y);
            let circumradius = pa.dist(Point::new(cc.x, cc.y));
            let target = target_size(domain, h, grading, centroid) / 3f64.sqrt();
            if circumradius > target * 1.25 {
                let candidate = Point::new(cc.x, cc.y);
                let pick = if in_ring(candidate) {
                    candidate
                } else {
                    // Circumcenter escaped the ring: bisect the longest
                    // edge instead, which stays on the closure.
                    let mut best = (0.0, Point::new(0.0, 0.0));
                    for (u, v) in [(a, b), (b, c), (c, a)] {
                        let len = (u.x - v.x).hypot(u.y - v.y);
                        if len > best.0 {
                            best = (len, Point::new((u.x + v.x) / 2.0, (u.y + v.y) / 2.0));
                        }
                    }
                    best.1
                };
                let local = target_size(domain, h, grading, pick);
                // Keep clear of the constraint layers; the angle pass
                // shapes those.
                if domain.distance_to_boundary(pick) > 0.5 * local && inner_dist(pick) > 0.5 * local
                {
                    candidates.push((pick, local));
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let accepted = thin_candidates(&candidates);
        if accepted.is_empty() {
            break;
        }
        for p in accepted {
            cdt.insert(Point2::new(p.x, p.y))
                .map_err(|e| Error::Geometry(format!("refinement insertion failed: {e:?}")))?;
        }
    }
    let result = cdt.refine(refine_params());
    if !result.refinement_complete {
        return Err(Error::Geometry(
            "final angle-driven refinement hit the vertex budget".into(),
        ));
    }

    extract(domain, &cdt, &result.excluded_faces, h, grading, &inner_loop)
}

fn extract(
    domain: &Domain,
    cdt: &ConstrainedDelaunayTriangulation<Point2<f64>>,
    excluded: &[spade::handles::FixedFaceHandle<spade::handles::InnerTag>],
    h: f64,
    grading: f64,
    inner_loop: &[Point],
) -> Result<Mesh> {
    let excluded: std::collections::HashSet<_> = excluded.iter().copied().collect();
    let mut keep: Vec<[usize; 3]> = Vec::new();
    for face in cdt.inner_faces() {
        if !excluded.contains(&face.fix()) {
            let idx = face.vertices().map(|v| v.index());
            keep.push(idx);
        }
    }
    if keep.is_empty() {
        return Err(Error::Geometry("no ring triangles were produced".into()));
    }

    let all_positions: Vec<Point> = cdt
        .vertices()
        .map(|v| Point::new(v.position().x, v.position().y))
        .collect();

    // Compact to the nodes actually used.
    let mut remap = vec![usize::MAX; all_positions.len()];
    let mut nodes = Vec::new();
    let mut triangles = Vec::with_capacity(keep.len());
    for tri in keep {
        let mut out = [0usize; 3];
        for (k, &old) in tri.iter().enumerate() {
            if remap[old] == usize::MAX {
                remap[old] = nodes.len();
                nodes.push(all_positions[old]);
            }
            out[k] = remap[old];
        }
        triangles.push(out);
    }
    // Orient CCW.
    for tri in &mut triangles {
        let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        if triangle_area(a, b, c) < 0.0 {
            tri.swap(1, 2);
        }
    }
    triangles.sort_unstable();

    let tol = 1e-9 * domain.boundary().diameter().max(1.0);
    let inner_poly_dist = |p: Point| polyline_distance(inner_loop, p);
    let node_tags: Vec<NodeTag> = nodes
        .iter()
        .map(|p| {
            if domain.distance_to_boundary(*p) <= tol {
                NodeTag::OuterBoundary
            } else if inner_poly_dist(*p) <= tol {
                NodeTag::InnerCircle
            } else {
                NodeTag::Interior
            }
        })
        .collect();

    let mut h_max: f64 = 0.0;
    for tri in &triangles {
        let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        h_max = h_max.max(a.dist(b)).max(b.dist(c)).max(c.dist(a));
    }

    let locator = Locator::build(&nodes, &triangles);
    let mesh = Mesh {
        domain: domain.clone(),
        nodes,
        triangles,
        node_tags,
        h_max,
        h,
        grading,
        locator,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Greedy min-spacing filter: accept candidates in order, rejecting any
/// closer than 0.6 of its target size to an accepted one.
fn thin_candidates(candidates: &[(Point, f64)]) -> Vec<Point> {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut min_s = f64::INFINITY;
    for (p, s) in candidates {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        min_s = min_s.min(*s);
    }
    let cell = (0.6 * min_s).max(1e-12);
    let mut grid: std::collections::HashMap<(i64, i64), Vec<usize>> =
        std::collections::HashMap::new();
    let mut accepted: Vec<Point> = Vec::new();
    'outer: for (p, s) in candidates {
        let radius = 0.6 * s;
        let key = (((p.x - lo.x) / cell) as i64, ((p.y - lo.y) / cell) as i64);
        let reach = (radius / cell).ceil() as i64;
        for gx in key.0 - reach..=key.0 + reach {
            for gy in key.1 - reach..=key.1 + reach {
                if let Some(ids) = grid.get(&(gx, gy)) {
                    for &id in ids {
                        if accepted[id].dist(*p) < radius {
                            continue 'outer;
                        }
                    }
                }
            }
        }
        grid.entry(key).or_default().push(accepted.len());
        accepted.push(*p);
    }
    accepted
}

fn polyline_distance(loop_pts: &[Point], p: Point) -> f64 {
    let n = loop_pts.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (loop_pts[i], loop_pts[(i + 1) % n]);
        let ab = b.sub(a);
        let len2 = ab.dot(ab);
        let t = if len2 > 0.0 { (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min(p.dist(a.add(ab.scale(t))));
    }
    best
}

pub(crate) fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * (b.sub(a).cross(c.sub(a)))
}

fn min_angle_deg(a: Point, b: Point, c: Point) -> f64 {
    let mut min = f64::INFINITY;
    for (p, q, r) in [(a, b, c), (b, c, a), (c, a, b)] {
        let u = q.sub(p);
        let v = r.sub(p);
        let ang = (u.dot(v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
        min = min.min(ang);
    }
    min.to_degrees()
}

/// Uniform-grid triangle locator with deterministic tie-breaking.
#[derive(Debug, Clone)]
struct Locator {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn build(nodes: &[Point], triangles: &[[usize; 3]]) -> Locator {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in nodes {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
        let target_cells = (triangles.len() as f64).sqrt().ceil().max(8.0);
        let cell = span / target_cells;
        let nx = ((hi.x - lo.x) / cell).ceil() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            let bx0 = ((a.x.min(b.x).min(c.x) - lo.x) / cell) as usize;
            let bx1 = ((a.x.max(b.x).max(c.x) - lo.x) / cell) as usize;
            let by0 = ((a.y.min(b.y).min(c.y) - lo.y) / cell) as usize;
            let by1 = ((a.y.max(b.y).max(c.y) - lo.y) / cell) as usize;
            for by in by0..=by1.min(ny - 1) {
                for bx in bx0..=bx1.min(nx - 1) {
                    buckets[by * nx + bx].push(t);
                }
            }
        }
        for b in &mut buckets {
            b.sort_unstable();
        }
        Locator { lo, cell, nx, ny, buckets }
    }

    fn locate(&self, mesh: &Mesh, z: Point) -> Option<(usize, [f64; 3])> {
        let bx = ((z.x - self.lo.x) / self.cell).floor();
        let by = ((z.y - self.lo.y) / self.cell).floor();
        if bx < 0.0 || by < 0.0 {
            return None;
        }
        let (bx, by) = (bx as usize, by as usize);
        if bx >= self.nx || by >= self.ny {
            return None;
        }
        // Ascending triangle index gives the documented tie-break on
        // shared edges.
        for &t in &self.buckets[by * self.nx + bx] {
            let [i, j, k] = mesh.triangles[t];
            if let Some(bary) = barycentric(mesh.nodes[i], mesh.nodes[j], mesh.nodes[k], z) {
                return Some((t, bary));
            }
        }
        None
    }
}

fn barycentric(a: Point, b: Point, c: Point, z: Point) -> Option<[f64; 3]> {
    let area = triangle_area(a, b, c);
    if area <= 0.0 {
        return None;
    }
    let wa = triangle_area(z, b, c) / area;
    let wb = triangle_area(a, z, c) / area;
    let wc = triangle_area(a, b, z) / area;
    let eps = -1e-12;
    if wa >= eps && wb >= eps && wc >= eps {
        Some([wa.max(0.0), wb.max(0.0), wc.max(0.0)])
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::regular_ngon;

    fn disk_domain() -> Domain {
        Domain::new(regular_ngon(256, 1.0).unwrap(), Point::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn disk_smoke_mesh() {
        let dom = disk_domain();
        let mesh = build_ring_mesh(&dom, 0.05, 1.0).unwrap();
        assert!(mesh.node_count() > 100, "nodes: {}", mesh.node_count());
        mesh.validate().unwrap();
        // All three tags present.
        assert!(mesh.node_tags.iter().any(|t| *t == NodeTag::OuterBoundary));
        assert!(mesh.node_tags.iter().any(|t| *t == NodeTag::InnerCircle));
        assert!(mesh.node_tags.iter().any(|t| *t == NodeTag::Interior));
    }

    #[test]
    fn grading_shrinks_boundary_triangles() {
        let dom = disk_domain();
        let mesh = build_ring_mesh(&dom, 0.05, 0.5).unwrap();
        let mut boundary_max: f64 = 0.0;
        let mut interior_max: f64 = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let centroid = tri
                .iter()
                .fold(Point::new(0.0, 0.0), |acc, &i| acc.add(mesh.nodes[i]))
                .scale(1.0 / 3.0);
            let d = mesh.domain.distance_to_boundary(centroid);
            let diam = mesh.triangle_diameter(t);
            if d < 0.02 {
                boundary_max = boundary_max.max(diam);
            }
            if d > 0.3 {
                interior_max = interior_max.max(diam);
            }
        }
        assert!(
            interior_max >= 4.0 * boundary_max,
            "interior {interior_max} vs boundary {boundary_max}"
        );
    }

    #[test]
    fn oversized_h_is_rejected() {
        let dom = disk_domain();
        // inner_radius is about 0.5, so h must stay below 0.125.
        assert!(build_ring_mesh(&dom, 0.5, 1.0).is_err());
        assert!(build_ring_mesh(&dom, 0.2, 1.0).is_err());
    }

    #[test]
    fn locate_inside_and_outside() {
        let dom = disk_domain();
        let mesh = build_ring_mesh(&dom, 0.06, 1.0).unwrap();
        let (t, bary) = mesh.locate(Point::new(0.75, 0.0)).unwrap();
        assert!(t < mesh.triangle_count());
        assert!((bary[0] + bary[1] + bary[2] - 1.0).abs() < 1e-9);
        assert!(mesh.locate(Point::new(2.0, 0.0)).is_none());
        // Center of the inner disk is not part of the ring.
        assert!(mesh.locate(Point::new(0.0, 0.0)).is_none());
    }

    #[test]
    fn koch_ring_mesh_builds() {
        let dom = Domain::new(
            crate::geometry::koch_snowflake(2, 1.0).unwrap(),
            Point::new(0.0, 0.0),
        )
        .unwrap();
        let mesh = build_ring_mesh(&dom, 0.04, 0.5).unwrap();
        mesh.validate().unwrap();
        assert!(mesh.triangle_count() > 500);
    }
}
