use super::boxes::{good_abscissas, refine_scale};
use super::quad::vertical_integral;
use super::{hyperbolic_distance_h, HalfPlaneMap};
use crate::error::{Error, Result};
use crate::fem::PHField;
use crate::geometry::Point;
use num_complex::Complex64 as Cx;

/// Staircase path in the half-plane descending to a boundary abscissa,
/// with its image curve and the measured decay and cigar constants.
#[derive(Debug, Clone)]
pub struct CigarPath {
    /// Box apexes a_0, a_1, ... of the construction.
    pub anchors: Vec<Cx>,
    pub delta: f64,
    /// Theoretical per-level floor exp(-c_star/delta); usually
    /// underflows to zero and is recorded for reporting only.
    pub delta_star: f64,
    /// 4 (C*)^2 with the measured 99th-percentile constant.
    pub c_star: f64,
    /// Half-plane polyline of the staircase.
    pub path_h: Vec<Cx>,
    /// Image polyline tau = f(path).
    pub image: Vec<Point>,
    /// Landing abscissa and its image.
    pub x0: f64,
    pub w0: Point,
    /// d(z_{k+1}, boundary) / d(z_k, boundary) per level.
    pub decay_ratios: Vec<f64>,
    /// Vertical integral at t_k over delta * d(z_{k-1}, boundary).
    pub vertical_margins: Vec<f64>,
    /// Measured cigar constant of the image curve.
    pub c3: f64,
    pub levels: usize,
}

/// Builds the descending path from apex `a`; levels are produced until
/// `max_levels` or until scale refinement runs out of resolution.
pub fn build_cigar_path(
    map: &HalfPlaneMap,
    a: Cx,
    delta: f64,
    max_levels: usize,
) -> Result<CigarPath> {
    build_cigar_path_from(map, a, delta, max_levels, None)
}

/// Variant with a forced first abscissa (used by the shifted box, whose
/// path starts at its center foot).
pub(crate) fn build_cigar_path_from(
    map: &HalfPlaneMap,
    a: Cx,
    delta: f64,
    max_levels: usize,
    first_abscissa: Option<f64>,
) -> Result<CigarPath> {
    if !(0.0 < delta && delta < 0.5) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 0.5)")));
    }
    if max_levels > 30 {
        return Err(Error::Domain(format!("max_levels {max_levels} beyond 30")));
    }
    if !(a.im > 0.0) {
        return Err(Error::Domain(format!("apex {a} must lie in the half-plane")));
    }
    let base = good_abscissas(map, a, 64)?;
    let c_star_hat = base.c_star_hat.max(1.0);

    let mut anchors = vec![a];
    let mut decay_ratios = Vec::new();
    let mut vertical_margins = Vec::new();
    let mut b = a;
    let mut d_prev = map.image_boundary_distance(a);
    for level in 0..max_levels {
        // Descend at an abscissa of the current box: the forced foot on
        // the first level, afterwards the good abscissa nearest the
        // center (ties to the smaller).
        let x_descend = if level == 0 {
            if let Some(x) = first_abscissa {
                x
            } else {
                nearest_abscissa(&base.e_sample, b.re)?
            }
        } else {
            let survey = good_abscissas(map, b, 64)?;
            nearest_abscissa(&survey.e_sample, b.re)?
        };
        let rs = match refine_scale(map, b, x_descend, delta, c_star_hat) {
            Ok(rs) => rs,
            // Resolution exhausted: the path simply stops here.
            Err(Error::Scale(_)) => break,
            Err(e) => return Err(e),
        };
        // Next anchor: the sub-box abscissa nearest the center of J
        // whose own vertical integral verifies the bound; the
        // percentile survey is only a pre-filter.
        let mut by_center = rs.f_sample.clone();
        by_center.sort_by(|a, b| {
            let da = (a - x_descend).abs();
            let db = (b - x_descend).abs();
            da.partial_cmp(&db).unwrap().then(a.partial_cmp(b).unwrap())
        });
        let mut chosen: Option<(f64, f64)> = None;
        let mut fallback: Option<(f64, f64)> = None;
        for (tried, &t) in by_center.iter().enumerate() {
            let v = vertical_integral(map, t, 0.0, rs.y1)?;
            if v <= delta * d_prev * 1.05 {
                chosen = Some((t, v));
                break;
            }
            if fallback.map_or(true, |(_, fv)| v < fv) {
                fallback = Some((t, v));
            }
            if tried >= 15 {
                break;
            }
        }
        let Some((t_next, v)) = chosen.or(fallback) else {
            break;
        };
        let b_next = Cx::new(t_next, rs.y1);
        let d_next = map.image_boundary_distance(b_next);
        if d_next < 4.0 * map.accuracy {
            // The scale fell below the boundary interpolation accuracy
            // of the map; distances are no longer trustworthy there.
            break;
        }
        vertical_margins.push(v / (delta * d_prev));
        decay_ratios.push(d_next / d_prev);
        anchors.push(b_next);
        d_prev = d_next;
        b = b_next;
    }
    if anchors.len() < 2 {
        return Err(Error::Scale("no cigar level could be built".into()));
    }

    // Staircase polyline in the half-plane: horizontal then vertical
    // per level, with geometric grading along the vertical legs.
    let mut path_h: Vec<Cx> = vec![anchors[0]];
    for k in 1..anchors.len() {
        let from = anchors[k - 1];
        let to = anchors[k];
        let n_h = 12;
        for j in 1..=n_h {
            path_h.push(Cx::new(
                from.re + (to.re - from.re) * j as f64 / n_h as f64,
                from.im,
            ));
        }
        let n_v = 24;
        for j in 1..=n_v {
            let y = from.im * (to.im / from.im).powf(j as f64 / n_v as f64);
            path_h.push(Cx::new(to.re, y));
        }
    }
    let image: Vec<Point> = path_h.iter().map(|w| map.eval(*w)).collect();
    let x0 = anchors.last().unwrap().re;
    let w0 = map.eval(Cx::new(x0, anchors.last().unwrap().im * 1e-3));

    // Cigar constant over the sampled image curve.
    let mut cum = vec![0.0f64; image.len()];
    for i in 1..image.len() {
        cum[i] = cum[i - 1] + image[i - 1].dist(image[i]);
    }
    let total = *cum.last().unwrap();
    let mut c3: f64 = 0.0;
    for i in 1..image.len() - 1 {
        let shorter = cum[i].min(total - cum[i]);
        let d = map.domain.distance_to_boundary(image[i]);
        if d > 0.0 {
            c3 = c3.max(shorter / d);
        }
    }

    let c_star = 4.0 * c_star_hat * c_star_hat;
    let levels = decay_ratios.len();
    Ok(CigarPath {
        anchors,
        delta,
        delta_star: (-c_star / delta).exp(),
        c_star,
        path_h,
        image,
        x0,
        w0,
        decay_ratios,
        vertical_margins,
        c3,
        levels,
    })
}

fn nearest_abscissa(candidates: &[f64], center: f64) -> Result<f64> {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| {
            let da = (a - center).abs();
            let db = (b - center).abs();
            da.partial_cmp(&db)
                .unwrap()
                .then(a.partial_cmp(b).unwrap())
        })
        .ok_or_else(|| Error::Selection("no good abscissa available".into()))
}

/// A located half-value point along a cigar path.
#[derive(Debug, Clone)]
pub struct Lemma47Result {
    pub z1: Point,
    pub z_star: Point,
    /// Hyperbolic distance between z1 and z_star.
    pub rho: f64,
    pub levels: usize,
}

/// Walks a cigar path from z1's preimage and bisects the last crossing
/// of u = u(z1)/2 along the image curve, returning the located point
/// and its hyperbolic distance from z1.
pub fn lemma47_verify(
    field: &PHField,
    map: &HalfPlaneMap,
    z1: Point,
    delta: f64,
    max_levels: usize,
) -> Result<Lemma47Result> {
    let dom = &field.mesh.domain;
    let (u1, _) = field.evaluate(z1)?;
    if !(0.05..0.5).contains(&u1) {
        return Err(Error::Domain(format!(
            "u(z1) = {u1:.4} outside the (0.05, 0.5) window"
        )));
    }
    if z1.dist(dom.basepoint()) <= 1.5 * dom.inner_radius() {
        return Err(Error::Domain(
            "z1 must sit outside B(z0, 3 d(z0, boundary)/4)".into(),
        ));
    }
    let a = map.forward(z1)?;
    let path = build_cigar_path_from(map, a, delta, max_levels, None)?;
    let target = u1 / 2.0;

    // u along the image polyline decays to zero at the landing point;
    // find the last downward crossing of the target.
    let values: Vec<f64> = path.image.iter().map(|p| field.extended_value(*p)).collect();
    let mut last_cross = None;
    for i in 0..values.len() - 1 {
        if values[i] >= target && values[i + 1] < target {
            last_cross = Some(i);
        }
    }
    let Some(i) = last_cross else {
        return Err(Error::Search(format!(
            "level u(z1)/2 = {target:.4} not attained on the truncated path ({} levels); extend max_levels",
            path.levels
        )));
    };
    // Bisect along the half-plane segment for the exact crossing.
    let (mut wa, mut wb) = (path.path_h[i], path.path_h[i + 1]);
    for _ in 0..60 {
        let mid = 0.5 * (wa + wb);
        let v = field.extended_value(map.eval(mid));
        if v >= target {
            wa = mid;
        } else {
            wb = mid;
        }
    }
    let w_star = 0.5 * (wa + wb);
    let z_star = map.eval(w_star);
    let rho = hyperbolic_distance_h(a, w_star);
    Ok(Lemma47Result {
        z1,
        z_star,
        rho,
        levels: path.levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::build_riemann_map;
    use crate::fem::{build_ring_mesh, solve_p_capacitary, SolverConfig};
    use crate::geometry::{regular_ngon, Domain};
    use std::sync::Arc;

    fn disk_map() -> HalfPlaneMap {
        let dom = Domain::new(regular_ngon(128, 1.0).unwrap(), Point::new(0.0, 0.0)).unwrap();
        build_riemann_map(&dom, 512).unwrap()
    }

    #[test]
    fn cigar_path_descends_on_the_disk() {
        let map = disk_map();
        let path = build_cigar_path(&map, Cx::i(), 0.2, 10).unwrap();
        assert!(path.levels >= 4, "levels {}", path.levels);
        for (k, r) in path.decay_ratios.iter().enumerate() {
            assert!(*r <= 0.5, "decay ratio {r} at level {k}");
        }
        for m in &path.vertical_margins {
            assert!(*m <= 1.1, "vertical margin {m}");
        }
        // Anchor heights shrink strictly.
        for w in path.anchors.windows(2) {
            assert!(w[1].im < w[0].im);
        }
        // |t_k - t_{k-1}| <= s_{k-1}.
        for w in path.anchors.windows(2) {
            assert!((w[1].re - w[0].re).abs() <= w[0].im * (1.0 + 1e-9));
        }
        assert!(path.c3.is_finite() && path.c3 > 0.0);
        // The landing point is near the boundary.
        assert!(map.domain.distance_to_boundary(path.w0) < 1e-2);
    }

    #[test]
    fn cigar_constant_stable_under_resolution() {
        let dom = Domain::new(regular_ngon(128, 1.0).unwrap(), Point::new(0.0, 0.0)).unwrap();
        let coarse = build_riemann_map(&dom, 512).unwrap();
        let fine = build_riemann_map(&dom, 1024).unwrap();
        let p1 = build_cigar_path(&coarse, Cx::i(), 0.2, 8).unwrap();
        let p2 = build_cigar_path(&fine, Cx::i(), 0.2, 8).unwrap();
        assert!(
            (p2.c3 - p1.c3).abs() / p1.c3 <= 0.3,
            "c3 {} vs {}",
            p1.c3,
            p2.c3
        );
    }

    #[test]
    fn lemma47_on_the_annulus() {
        let dom = Domain::new(regular_ngon(256, 2.0).unwrap(), Point::new(0.0, 0.0)).unwrap();
        let mesh = Arc::new(build_ring_mesh(&dom, 0.04, 1.0).unwrap());
        let field = solve_p_capacitary(mesh, 2.0, &SolverConfig::default()).unwrap();
        let map = build_riemann_map(&dom, 1024).unwrap();
        let z1 = Point::new(1.9, 0.0);
        let out = lemma47_verify(&field, &map, z1, 0.2, 16).unwrap();
        // Radial oracle: u = t/2 on the circle of radius 2 (1.9/2)^(1/2)
        // = 1.949358869.
        let r_star = out.z_star.norm();
        assert!(
            (r_star - 1.9493588689617927).abs() < 0.01,
            "|z_star| = {r_star}"
        );
        let (u_star, _) = field.evaluate(out.z_star).unwrap();
        let (u1, _) = field.evaluate(z1).unwrap();
        assert!((u_star - u1 / 2.0).abs() < 5e-3, "u* {u_star} vs {}", u1 / 2.0);
        assert!(out.rho.is_finite() && out.rho > 0.0);
    }
}
