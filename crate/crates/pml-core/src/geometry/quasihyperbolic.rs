use super::{Domain, Point};
use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Quasihyperbolic distance, approximated from above on a graph of
/// interior lattice points with 8-neighbor connectivity. Edge weight is
/// the Euclidean edge length divided by the smaller endpoint distance
/// to the boundary, so every graph path dominates the path integral of
/// 1/d and the value converges to Q from above as `resolution` shrinks.
pub fn quasihyperbolic_distance(
    domain: &Domain,
    z1: Point,
    z2: Point,
    resolution: f64,
) -> Result<f64> {
    if !(resolution > 0.0) {
        return Err(Error::Domain(format!(
            "quasihyperbolic resolution must be positive, got {resolution}"
        )));
    }
    for (name, z) in [("z1", z1), ("z2", z2)] {
        if !domain.contains(z) {
            return Err(Error::Domain(format!("{name} = ({}, {}) is outside the domain", z.x, z.y)));
        }
    }
    if z1.dist(z2) == 0.0 {
        return Ok(0.0);
    }

    let (lo, hi) = domain.boundary().bounding_box();
    let nx = ((hi.x - lo.x) / resolution).ceil() as usize + 2;
    let ny = ((hi.y - lo.y) / resolution).ceil() as usize + 2;
    if nx.saturating_mul(ny) > 40_000_000 {
        return Err(Error::Resource(format!(
            "quasihyperbolic lattice {nx}x{ny} too large at resolution {resolution}"
        )));
    }

    // Lattice nodes strictly inside the domain, then the two endpoints.
    let mut nodes: Vec<Point> = Vec::new();
    let mut index = vec![usize::MAX; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let p = Point::new(lo.x + ix as f64 * resolution, lo.y + iy as f64 * resolution);
            if domain.contains(p) && domain.distance_to_boundary(p) > 0.0 {
                index[iy * nx + ix] = nodes.len();
                nodes.push(p);
            }
        }
    }
    let lattice_len = nodes.len();
    let src = nodes.len();
    nodes.push(z1);
    let dst = nodes.len();
    nodes.push(z2);

    let dist_to_bdry: Vec<f64> = nodes.iter().map(|p| domain.distance_to_boundary(*p)).collect();

    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes.len()];
    let connect = |adj: &mut Vec<Vec<(usize, f64)>>, a: usize, b: usize| {
        let len = nodes[a].dist(nodes[b]);
        let dmin = dist_to_bdry[a].min(dist_to_bdry[b]);
        if dmin > 0.0 && len > 0.0 {
            let w = len / dmin;
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
    };
    for iy in 0..ny {
        for ix in 0..nx {
            let a = index[iy * nx + ix];
            if a == usize::MAX {
                continue;
            }
            // Half of the 8-neighborhood; the reverse edges come from symmetry.
            let steps: [(i64, i64); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
            for (dx, dy) in steps {
                let jx = ix as i64 + dx;
                let jy = iy as i64 + dy;
                if jx < 0 || jy < 0 || jx as usize >= nx || jy as usize >= ny {
                    continue;
                }
                let b = index[jy as usize * nx + jx as usize];
                if b != usize::MAX {
                    connect(&mut adj, a, b);
                }
            }
        }
    }
    // Tie the free endpoints into the lattice.
    for free in [src, dst] {
        let p = nodes[free];
        let ix = ((p.x - lo.x) / resolution).floor() as i64;
        let iy = ((p.y - lo.y) / resolution).floor() as i64;
        for jy in iy - 1..=iy + 2 {
            for jx in ix - 1..=ix + 2 {
                if jx < 0 || jy < 0 || jx as usize >= nx || jy as usize >= ny {
                    continue;
                }
                let b = index[jy as usize * nx + jx as usize];
                if b != usize::MAX && b < lattice_len {
                    connect(&mut adj, free, b);
                }
            }
        }
    }
    if z1.dist(z2) <= 2.0 * resolution * std::f64::consts::SQRT_2 {
        connect(&mut adj, src, dst);
    }

    dijkstra(&adj, src, dst).ok_or_else(|| {
        Error::Resolution(format!(
            "quasihyperbolic graph disconnected at resolution {resolution}"
        ))
    })
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance; ties broken by node index for determinism.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize, dst: usize) -> Option<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapItem { dist: 0.0, node: src });
    while let Some(HeapItem { dist: d, node }) = heap.pop() {
        if node == dst {
            return Some(d);
        }
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(HeapItem { dist: nd, node: next });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::regular_ngon;

    fn disk_domain() -> Domain {
        Domain::new(regular_ngon(512, 1.0).unwrap(), Point::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn coincident_points_give_zero() {
        let dom = disk_domain();
        let z = Point::new(0.2, 0.1);
        assert_eq!(quasihyperbolic_distance(&dom, z, z, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn disk_radial_oracle() {
        // Radial path in the unit disk: Q(0, (r,0)) = log(R/(R-r)).
        let dom = disk_domain();
        let z1 = Point::new(0.0, 0.0);
        let z2 = Point::new(0.5, 0.0);
        let q = quasihyperbolic_distance(&dom, z1, z2, 0.01).unwrap();
        let exact = (1.0f64 / 0.5).ln();
        assert!(
            (q - exact).abs() / exact < 0.02,
            "graph {q} vs exact {exact}"
        );
        assert!(q >= exact - 1e-9, "graph value must dominate the infimum");
    }

    #[test]
    fn symmetry() {
        let dom = disk_domain();
        let z1 = Point::new(-0.3, 0.2);
        let z2 = Point::new(0.4, -0.1);
        let a = quasihyperbolic_distance(&dom, z1, z2, 0.03).unwrap();
        let b = quasihyperbolic_distance(&dom, z2, z1, 0.03).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn refinement_decreases_within_slack() {
        let dom = disk_domain();
        let z1 = Point::new(0.1, 0.55);
        let z2 = Point::new(-0.5, -0.2);
        let coarse = quasihyperbolic_distance(&dom, z1, z2, 0.08).unwrap();
        let mid = quasihyperbolic_distance(&dom, z1, z2, 0.04).unwrap();
        let fine = quasihyperbolic_distance(&dom, z1, z2, 0.02).unwrap();
        assert!(mid <= coarse * 1.05);
        assert!(fine <= mid * 1.05);
    }

    #[test]
    fn outside_point_rejected() {
        let dom = disk_domain();
        let err = quasihyperbolic_distance(&dom, Point::new(2.0, 0.0), Point::new(0.0, 0.0), 0.05);
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
