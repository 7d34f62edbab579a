use crate::error::{Error, Result};
use crate::fem::PHField;
use crate::geometry::Point;
use std::collections::HashMap;

/// A traced level set `{u = t}`: closed chains separating the inner
/// circle from the boundary.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub t: f64,
    pub polylines: Vec<Vec<Point>>,
    pub total_length: f64,
    /// Per-segment data: owning triangle and endpoints.
    pub(crate) segments: Vec<(usize, Point, Point)>,
}

/// Level-set flux diagnostics in the small-t regime.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LevelSetDiagnostic {
    pub t: f64,
    pub flux: f64,
    pub weighted_flux: f64,
    pub f_flux: f64,
    pub c_plus: f64,
    pub xi: f64,
}

/// Marching-triangles extraction of `{u = t}`.
pub fn trace_level_set(field: &PHField, t: f64) -> Result<LevelSet> {
    if !(0.02..=0.98).contains(&t) {
        return Err(Error::Domain(format!("level t = {t} outside [0.02, 0.98]")));
    }
    let mesh = &field.mesh;
    // Crossing edges keyed by (low node, high node); the interpolation
    // point is computed canonically so adjacent triangles agree exactly.
    let mut crossing: HashMap<(usize, usize), Point> = HashMap::new();
    let mut tri_edges: Vec<(usize, [(usize, usize); 2])> = Vec::new();
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let mut keys: Vec<(usize, usize)> = Vec::new();
        for k in 0..3 {
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            let above_i = field.u[i] > t;
            let above_j = field.u[j] > t;
            if above_i != above_j {
                let (lo, hi) = (i.min(j), i.max(j));
                let tau = (t - field.u[lo]) / (field.u[hi] - field.u[lo]);
                let p = mesh.nodes[lo].add(mesh.nodes[hi].sub(mesh.nodes[lo]).scale(tau));
                crossing.insert((lo, hi), p);
                keys.push((lo, hi));
            }
        }
        match keys.len() {
            0 => {}
            2 => tri_edges.push((ti, [keys[0], keys[1]])),
            n => {
                return Err(Error::Topology(format!(
                    "triangle {ti} crossed by {n} level edges"
                )))
            }
        }
    }

    // Edge -> adjacent crossing triangles.
    let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (idx, (_, keys)) in tri_edges.iter().enumerate() {
        for k in keys {
            edge_tris.entry(*k).or_default().push(idx);
        }
    }
    if edge_tris.values().any(|v| v.len() > 2) {
        return Err(Error::Topology("level edge shared by more than two triangles".into()));
    }

    // Walk closed chains deterministically from the lowest unvisited edge.
    let mut edge_list: Vec<(usize, usize)> = edge_tris.keys().copied().collect();
    edge_list.sort_unstable();
    let mut visited_tri = vec![false; tri_edges.len()];
    let mut polylines = Vec::new();
    let mut segments = Vec::new();
    let mut total_length = 0.0;
    for start_edge in edge_list {
        let adjacency = &edge_tris[&start_edge];
        if adjacency.iter().all(|&ti| visited_tri[ti]) {
            continue;
        }
        if adjacency.len() != 2 {
            return Err(Error::Topology(format!(
                "open level chain at edge {start_edge:?}; mesh defect"
            )));
        }
        let mut chain = vec![crossing[&start_edge]];
        let mut cur_edge = start_edge;
        let mut cur_tri = adjacency[0];
        loop {
            visited_tri[cur_tri] = true;
            let (tri_id, keys) = tri_edges[cur_tri];
            let next_edge = if keys[0] == cur_edge { keys[1] } else { keys[0] };
            let a = crossing[&cur_edge];
            let b = crossing[&next_edge];
            segments.push((tri_id, a, b));
            total_length += a.dist(b);
            chain.push(b);
            cur_edge = next_edge;
            let adj = &edge_tris[&cur_edge];
            if adj.len() != 2 {
                return Err(Error::Topology(format!(
                    "open level chain at edge {cur_edge:?}; mesh defect"
                )));
            }
            let next_tri = if adj[0] == cur_tri { adj[1] } else { adj[0] };
            if visited_tri[next_tri] {
                // Closed the loop.
                if cur_edge != start_edge {
                    // Append the final connecting segment back to start.
                    let (tri_id2, keys2) = tri_edges[next_tri];
                    let last = if keys2[0] == cur_edge { keys2[1] } else { keys2[0] };
                    if last == start_edge {
                        let a2 = crossing[&cur_edge];
                        let b2 = crossing[&start_edge];
                        segments.push((tri_id2, a2, b2));
                        total_length += a2.dist(b2);
                        chain.push(b2);
                    }
                }
                break;
            }
            cur_tri = next_tri;
        }
        // Orient counterclockwise by signed area.
        if signed_area(&chain) < 0.0 {
            chain.reverse();
        }
        polylines.push(chain);
    }
    if polylines.is_empty() {
        return Err(Error::Topology(format!("level {t} produced no chains")));
    }
    Ok(LevelSet { t, polylines, total_length, segments })
}

fn signed_area(chain: &[Point]) -> f64 {
    let n = chain.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += chain[i].cross(chain[(i + 1) % n]);
    }
    acc / 2.0
}

/// `int_{u=t} |grad u|^{p-1} dH^1` by the midpoint rule with the
/// per-triangle constant gradient.
pub fn level_flux(field: &PHField, t: f64) -> Result<f64> {
    let ls = trace_level_set(field, t)?;
    Ok(flux_of(field, &ls.segments, |_| 1.0))
}

fn flux_of(field: &PHField, segments: &[(usize, Point, Point)], weight: impl Fn(f64) -> f64) -> f64 {
    let pm1 = field.p - 1.0;
    let mut acc = 0.0;
    for &(tri, a, b) in segments {
        let g = field.grad[tri];
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gn > 0.0 {
            acc += gn.powf(pm1) * weight(gn) * a.dist(b);
        }
    }
    acc
}

/// Level-set concentration diagnostic: the exponentially weighted flux
/// and the flux restricted to the set where the log-gradient exceeds
/// the threshold `xi(t) = 2 sqrt(c_plus log(1/t) loglog(1/t))`.
pub fn makarov_diagnostic(field: &PHField, t: f64, c_plus: f64) -> Result<LevelSetDiagnostic> {
    if !(t < 0.1) || !(t > 0.0) {
        return Err(Error::Domain(format!(
            "diagnostic level t = {t} must sit in (0, 0.1)"
        )));
    }
    if !(c_plus > 0.0) {
        return Err(Error::Domain("c_plus must be positive".into()));
    }
    let ls = trace_level_set(field, t)?;
    let log1t = (1.0 / t).ln();
    let xi = 2.0 * (c_plus * log1t * log1t.ln()).sqrt();
    // Sign convention of the log-gradient: positive part of log|grad u|
    // below p = 2, of -log|grad u| above.
    let v = |gn: f64| -> f64 {
        if field.p < 2.0 {
            gn.ln().max(0.0)
        } else {
            (-gn.ln()).max(0.0)
        }
    };
    let flux = flux_of(field, &ls.segments, |_| 1.0);
    let weighted_flux = flux_of(field, &ls.segments, |gn| {
        (v(gn) * v(gn) / (2.0 * c_plus * log1t)).exp()
    });
    let f_flux = flux_of(field, &ls.segments, |gn| if v(gn) >= xi { 1.0 } else { 0.0 });
    Ok(LevelSetDiagnostic { t, flux, weighted_flux, f_flux, c_plus, xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_ring_mesh, solve_p_capacitary, SolverConfig};
    use crate::geometry::{regular_ngon, Domain};
    use std::sync::Arc;

    fn annulus_field(p: f64, h: f64) -> PHField {
        let dom = Domain::new(regular_ngon(256, 2.0).unwrap(), Point::new(0.0, 0.0)).unwrap();
        let mesh = Arc::new(build_ring_mesh(&dom, h, 1.0).unwrap());
        solve_p_capacitary(mesh, p, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn annulus_level_circle() {
        let field = annulus_field(2.0, 0.03);
        let ls = trace_level_set(&field, 0.5).unwrap();
        assert_eq!(ls.polylines.len(), 1);
        // u = 1/2 on the circle of radius 2^{1/2}; frozen length
        // 2*pi*sqrt(2) = 8.8857658763.
        let exact = 8.885765876316732;
        assert!(
            (ls.total_length - exact).abs() / exact < 0.01,
            "length {}",
            ls.total_length
        );
        for chain in &ls.polylines {
            for p in chain {
                assert!((p.norm() - 2f64.sqrt()).abs() < 0.02);
            }
        }
    }

    #[test]
    fn distinct_levels_do_not_cross() {
        let field = annulus_field(2.0, 0.05);
        let a = trace_level_set(&field, 0.4).unwrap();
        let b = trace_level_set(&field, 0.6).unwrap();
        // Radii 2^{0.6} vs 2^{0.4}: chains stay strictly apart.
        let min_a = a.polylines[0].iter().map(|p| p.norm()).fold(f64::MAX, f64::min);
        let max_b = b.polylines[0].iter().map(|p| p.norm()).fold(f64::MIN, f64::max);
        assert!(max_b < min_a);
    }

    #[test]
    fn level_range_is_guarded() {
        let field = annulus_field(2.0, 0.06);
        assert!(trace_level_set(&field, 0.01).is_err());
        assert!(trace_level_set(&field, 0.99).is_err());
    }

    #[test]
    fn flux_is_conserved_and_matches_measure() {
        let field = annulus_field(2.0, 0.03);
        let exact = 2.0 * std::f64::consts::PI / 2f64.ln();
        let fluxes: Vec<f64> = [0.2, 0.5, 0.8]
            .iter()
            .map(|&t| level_flux(&field, t).unwrap())
            .collect();
        for f in &fluxes {
            assert!((f - exact).abs() / exact < 0.01, "flux {f}");
        }
        let m = crate::measure::extract_boundary_measure(&field, 64).unwrap();
        for f in &fluxes {
            assert!((f - m.total).abs() / m.total < 0.02);
        }
    }

    #[test]
    fn conservation_for_p_three_halves() {
        let field = annulus_field(1.5, 0.04);
        let exact = 4.0 * std::f64::consts::PI / 2f64.sqrt();
        for t in [0.25, 0.5, 0.75] {
            let f = level_flux(&field, t).unwrap();
            assert!((f - exact).abs() / exact < 0.01, "flux {f} at t={t}");
        }
    }

    #[test]
    fn makarov_on_annulus() {
        let field = annulus_field(1.5, 0.04);
        // |grad u| is order one on the annulus, so a large c_plus pushes
        // the threshold above every sampled log-gradient.
        let d = makarov_diagnostic(&field, 0.05, 4.0).unwrap();
        assert_eq!(d.f_flux, 0.0);
        assert!(d.weighted_flux >= d.flux);
        assert!(d.f_flux <= d.flux);
        assert!(d.xi > 0.0);
        assert!(makarov_diagnostic(&field, 0.5, 1.0).is_err());
        // Small c_plus lowers the threshold; the weighted flux can only grow.
        let d2 = makarov_diagnostic(&field, 0.05, 0.01).unwrap();
        assert!(d2.weighted_flux >= d.weighted_flux);
    }
}
