use super::quad::vertical_integral;
use super::{cigar, HalfPlaneMap};
use crate::error::{Error, Result};
use crate::geometry::Point;
use num_complex::Complex64 as Cx;
use rayon::prelude::*;

/// A half-plane box seen from its apex point b: the base interval
/// I(b) = [Re b - Im b, Re b + Im b] and the square above it.
#[derive(Debug, Clone, Copy)]
pub struct BoxSpec {
    pub b: Cx,
}

impl BoxSpec {
    pub fn new(b: Cx) -> Result<Self> {
        if !(b.im > 0.0) {
            return Err(Error::Domain(format!("box apex {b} must lie in the half-plane")));
        }
        Ok(BoxSpec { b })
    }

    pub fn size(&self) -> f64 {
        self.b.im
    }

    /// Base interval on the real line, of length 2 Im b.
    pub fn interval(&self) -> (f64, f64) {
        (self.b.re - self.b.im, self.b.re + self.b.im)
    }

    pub fn contains_abscissa(&self, x: f64) -> bool {
        let (lo, hi) = self.interval();
        x >= lo && x <= hi
    }
}

/// Vertical-integral survey over the base interval of a box.
#[derive(Debug, Clone)]
pub struct GoodAbscissas {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    /// Abscissas below the 99th-percentile vertical integral.
    pub e_sample: Vec<f64>,
    /// 99th-percentile vertical integral over d(f(b), boundary).
    pub c_star_hat: f64,
    pub failed: usize,
}

/// Evaluates the vertical integral at `grid` abscissas across I(b) and
/// keeps the ones below the 99th-percentile value.
pub fn good_abscissas(map: &HalfPlaneMap, b: Cx, grid: usize) -> Result<GoodAbscissas> {
    if grid < 64 {
        return Err(Error::Domain(format!("abscissa grid {grid} below 64")));
    }
    let spec = BoxSpec::new(b)?;
    let s = spec.size();
    let (lo, _) = spec.interval();
    let d_b = map.image_boundary_distance(b);
    if !(d_b > 0.0) {
        return Err(Error::Domain("box apex maps onto the boundary".into()));
    }
    let xs: Vec<f64> = (0..grid)
        .map(|j| lo + (j as f64 + 0.5) * 2.0 * s / grid as f64)
        .collect();
    let raw: Vec<Result<f64>> = xs
        .par_iter()
        .map(|&x| vertical_integral(map, x, 0.0, s))
        .collect();
    let mut values = Vec::with_capacity(grid);
    let mut kept_xs = Vec::with_capacity(grid);
    let mut failed = 0usize;
    for (x, v) in xs.iter().zip(raw) {
        match v {
            Ok(v) if v.is_finite() => {
                kept_xs.push(*x);
                values.push(v);
            }
            _ => failed += 1,
        }
    }
    if kept_xs.len() < grid / 2 {
        return Err(Error::Quadrature(format!(
            "{failed} of {grid} vertical integrals failed"
        )));
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((0.99 * (sorted.len() - 1) as f64).ceil() as usize).min(sorted.len() - 1);
    let threshold = sorted[idx];
    let e_sample: Vec<f64> = kept_xs
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v <= threshold)
        .map(|(x, _)| *x)
        .collect();
    Ok(GoodAbscissas {
        xs: kept_xs,
        values,
        e_sample,
        c_star_hat: threshold / d_b,
        failed,
    })
}

/// One scale-refinement step at an abscissa of the box.
#[derive(Debug, Clone)]
pub struct RefineScale {
    /// Largest height where the image distance first drops to
    /// (delta / c_star) d(f(b), boundary).
    pub y1: f64,
    /// The centered interval J = I(x + i y1).
    pub j: (f64, f64),
    /// Good abscissas of the sub-box.
    pub f_sample: Vec<f64>,
    /// Measured 99th-percentile constant of the sub-box.
    pub c_star_sub: f64,
}

/// Descends at abscissa `x` until the image reaches the target distance
/// (delta / c_star) of d(f(b), boundary) and surveys the sub-box there.
pub fn refine_scale(
    map: &HalfPlaneMap,
    b: Cx,
    x: f64,
    delta: f64,
    c_star: f64,
) -> Result<RefineScale> {
    let spec = BoxSpec::new(b)?;
    if !spec.contains_abscissa(x) {
        return Err(Error::Domain(format!("abscissa {x} outside I(b)")));
    }
    if !(0.0 < delta && delta < 0.5) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 0.5)")));
    }
    if !(c_star >= 1.0) {
        return Err(Error::Domain(format!("c_star {c_star} below 1")));
    }
    let s = spec.size();
    let d_b = map.image_boundary_distance(b);
    let target = delta / c_star * d_b;

    // Walk down geometrically to bracket the first crossing.
    let dist_at = |y: f64| map.domain.distance_to_boundary(map.eval(Cx::new(x, y)));
    let floor = 1e-13 * s;
    let mut y_hi = s;
    let mut d_hi = dist_at(y_hi);
    if d_hi <= target {
        // Already below the target at the top of the box.
        return Err(Error::Scale(format!(
            "distance {d_hi:.3e} at the box top already below target {target:.3e}"
        )));
    }
    let mut y_lo;
    loop {
        y_lo = y_hi * 0.7;
        let d_lo = dist_at(y_lo);
        if d_lo <= target {
            break;
        }
        y_hi = y_lo;
        d_hi = d_lo;
        if y_lo < floor {
            return Err(Error::Scale(format!(
                "stopping level {target:.3e} not reached above the boundary resolution"
            )));
        }
    }
    let _ = d_hi;
    // Bisection refinement of the crossing height.
    for _ in 0..80 {
        let mid = 0.5 * (y_lo + y_hi);
        if dist_at(mid) <= target {
            y_lo = mid;
        } else {
            y_hi = mid;
        }
        if (y_hi - y_lo) <= 1e-9 * y_hi {
            break;
        }
    }
    let y1 = y_hi;
    // Theoretical floor from the hyperbolic-length estimate; with the
    // exponential this is vacuous in floats for realistic c_star, but a
    // violation would flag a broken map.
    let y_floor_theory = (-4.0 * c_star * c_star / delta).exp() * s;
    if y1 < y_floor_theory {
        return Err(Error::Scale(format!(
            "refined height {y1:.3e} fell below the theoretical floor {y_floor_theory:.3e}"
        )));
    }
    let sub = good_abscissas(map, Cx::new(x, y1), 64)?;
    Ok(RefineScale {
        y1,
        j: (x - y1, x + y1),
        f_sample: sub.e_sample,
        c_star_sub: sub.c_star_hat,
    })
}

/// The shifted box: three good abscissas in the prescribed sub-intervals
/// with well-separated boundary images, the box boundary xi through two
/// of them, its image sigma, and the landing point of the path started
/// at the third.
#[derive(Debug, Clone)]
pub struct ShiftedBox {
    pub a: Cx,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    /// Polyline of xi in the half-plane.
    pub xi_path: Vec<Cx>,
    /// Image sigma = f(xi).
    pub sigma: Vec<Point>,
    pub h1_sigma: f64,
    /// Boundary images of x1, x2, x3.
    pub w_points: [Point; 3],
    /// Path limit from x3 and its distance to sigma.
    pub w0: Point,
    pub d_w0_sigma: f64,
    /// min(|w1 - w3|, |w2 - w3|) achieved by the selection.
    pub separation: f64,
    /// d(f(a), boundary), the scale all ratios refer to.
    pub d_a: f64,
    /// Vertical integrals at the refined heights of x1, x2, x3.
    pub vertical_integrals: [f64; 3],
}

/// Builds the shifted box at apex `a`. Candidate feet come from the
/// good abscissas of the box, restricted to the stated sub-intervals
/// and to the (5.1)-style vertical-integral bound at the refined
/// height; the triple maximizes the pairwise image separation.
pub fn shifted_box(map: &HalfPlaneMap, a: Cx, delta: f64) -> Result<ShiftedBox> {
    if !(0.0 < delta && delta < 0.5) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 0.5)")));
    }
    let spec = BoxSpec::new(a)?;
    let s = spec.size();
    let d_a = map.image_boundary_distance(a);
    let survey = good_abscissas(map, a, 128)?;
    let c_star = survey.c_star_hat.max(1.0);

    // Admissible abscissas per sub-interval, with their refined data;
    // at most a dozen candidates per interval keep the refinement cost
    // bounded.
    let collect = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        let in_range: Vec<f64> = survey
            .e_sample
            .iter()
            .copied()
            .filter(|x| {
                let rel = x - a.re;
                rel > lo && rel < hi
            })
            .collect();
        let stride = (in_range.len() / 12).max(1);
        let mut out = Vec::new();
        for x in in_range.into_iter().step_by(stride) {
            if let Ok(rs) = refine_scale(map, a, x, delta, c_star) {
                if let Ok(v) = vertical_integral(map, x, 0.0, rs.y1) {
                    if v <= delta * d_a * 1.1 {
                        out.push((x, v));
                    }
                }
            }
        }
        out
    };
    let c1 = collect(-s, -s / 2.0);
    let c2 = collect(s / 2.0, s);
    let c3 = collect(-s / 8.0, s / 8.0);
    for (name, c) in [("(-s, -s/2)", &c1), ("(s/2, s)", &c2), ("(-s/8, s/8)", &c3)] {
        if c.is_empty() {
            return Err(Error::Selection(format!(
                "no admissible abscissa in the sub-interval {name}"
            )));
        }
    }

    // Boundary images, probed just above the real line.
    let probe = |x: f64| map.eval(Cx::new(x, 1e-7 * s));
    let im1: Vec<Point> = c1.iter().map(|(x, _)| probe(*x)).collect();
    let im2: Vec<Point> = c2.iter().map(|(x, _)| probe(*x)).collect();
    let im3: Vec<Point> = c3.iter().map(|(x, _)| probe(*x)).collect();

    // Max-min pairwise separation, ties to the leftmost abscissas.
    let mut best: Option<(f64, usize, usize, usize)> = None;
    for (i, wi) in im1.iter().enumerate() {
        for (j, wj) in im2.iter().enumerate() {
            for (k, wk) in im3.iter().enumerate() {
                let sep = wi.dist(*wj).min(wi.dist(*wk)).min(wj.dist(*wk));
                let better = match &best {
                    None => true,
                    Some((s0, i0, j0, k0)) => {
                        sep > *s0 + 1e-15
                            || ((sep - *s0).abs() <= 1e-15
                                && (c1[i].0, c2[j].0, c3[k].0)
                                    < (c1[*i0].0, c2[*j0].0, c3[*k0].0))
                    }
                };
                if better {
                    best = Some((sep, i, j, k));
                }
            }
        }
    }
    let (_, i1, i2, i3) = best.unwrap();
    let (x1, v1) = c1[i1];
    let (x2, v2) = c2[i2];
    let (x3, v3) = c3[i3];
    let w_points = [im1[i1], im2[i2], im3[i3]];

    // xi: up from x1, across the top, down to x2; graded sampling of
    // the vertical legs toward the boundary.
    let y_min = 1e-7 * s;
    let mut xi_path: Vec<Cx> = Vec::new();
    let vertical_leg = |x: f64, upward: bool| -> Vec<Cx> {
        let n = 80;
        let mut ys: Vec<f64> = (0..=n)
            .map(|k| y_min * (s / y_min).powf(k as f64 / n as f64))
            .collect();
        if !upward {
            ys.reverse();
        }
        ys.into_iter().map(|y| Cx::new(x, y)).collect()
    };
    xi_path.extend(vertical_leg(x1, true));
    let n_top = 96;
    for k in 1..n_top {
        xi_path.push(Cx::new(x1 + (x2 - x1) * k as f64 / n_top as f64, s));
    }
    xi_path.extend(vertical_leg(x2, false));

    let sigma: Vec<Point> = xi_path.iter().map(|w| map.eval(*w)).collect();
    let mut h1_sigma = 0.0;
    for pair in sigma.windows(2) {
        h1_sigma += pair[0].dist(pair[1]);
    }
    // Boundary tails under the probe height.
    h1_sigma += vertical_integral(map, x1, 0.0, y_min)?;
    h1_sigma += vertical_integral(map, x2, 0.0, y_min)?;

    // Path limit from the center abscissa.
    let path = cigar::build_cigar_path_from(map, a, delta, 24, Some(x3))?;
    let w0 = path.w0;
    let d_w0_sigma = sigma
        .iter()
        .map(|p| p.dist(w0))
        .fold(f64::INFINITY, f64::min);

    let separation = w_points[0]
        .dist(w_points[2])
        .min(w_points[1].dist(w_points[2]));
    Ok(ShiftedBox {
        a,
        x1,
        x2,
        x3,
        xi_path,
        sigma,
        h1_sigma,
        w_points,
        w0,
        d_w0_sigma,
        separation,
        d_a,
        vertical_integrals: [v1, v2, v3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::build_riemann_map;
    use crate::geometry::{regular_ngon, Domain};

    fn disk_map() -> HalfPlaneMap {
        let dom = Domain::new(regular_ngon(128, 1.0).unwrap(), Point::new(0.0, 0.0)).unwrap();
        build_riemann_map(&dom, 512).unwrap()
    }

    #[test]
    fn good_abscissas_on_the_disk() {
        let map = disk_map();
        let g = good_abscissas(&map, Cx::i(), 128).unwrap();
        assert!(g.failed == 0);
        assert!(g.e_sample.len() >= (0.99 * 128.0) as usize - 1);
        // All vertical integrals comparable to the center distance.
        assert!(g.c_star_hat <= 4.0, "c_star {}", g.c_star_hat);
        assert!(g.c_star_hat >= 0.5);
        // Stability under grid doubling.
        let g2 = good_abscissas(&map, Cx::i(), 256).unwrap();
        assert!(
            (g2.c_star_hat - g.c_star_hat).abs() / g.c_star_hat < 0.2,
            "{} vs {}",
            g.c_star_hat,
            g2.c_star_hat
        );
    }

    #[test]
    fn refine_scale_bracket_on_the_disk() {
        let map = disk_map();
        let survey = good_abscissas(&map, Cx::i(), 64).unwrap();
        let c_star = survey.c_star_hat.max(1.0);
        let delta = 0.2;
        let x = survey.e_sample[survey.e_sample.len() / 2];
        let rs = refine_scale(&map, Cx::i(), x, delta, c_star).unwrap();
        assert!(rs.y1 > 0.0 && rs.y1 < 1.0);
        // H1(J) = 2 y1 by construction.
        assert!(((rs.j.1 - rs.j.0) - 2.0 * rs.y1).abs() < 1e-12);
        // The distance at y1 is near the target.
        let d_b = map.image_boundary_distance(Cx::i());
        let d_here = map
            .domain
            .distance_to_boundary(map.eval(Cx::new(x, rs.y1)));
        let target = delta / c_star * d_b;
        assert!(
            (d_here - target).abs() / target < 0.05,
            "distance {d_here} vs target {target}"
        );
        // Sub-box abscissas obey the refined vertical bound.
        for &t in rs.f_sample.iter().take(8) {
            let v = vertical_integral(&map, t, 0.0, rs.y1).unwrap();
            assert!(v <= delta * d_b * 1.1, "integral {v} vs {}", delta * d_b);
        }
    }

    #[test]
    fn shifted_box_on_the_disk() {
        let map = disk_map();
        let sb = shifted_box(&map, Cx::i(), 0.2).unwrap();
        assert!(sb.x1 - 1e-12 < -0.5 && sb.x1 > -1.0 - 1e-12);
        assert!(sb.x2 + 1e-12 > 0.5 && sb.x2 < 1.0 + 1e-12);
        assert!(sb.x3.abs() < 0.125 + 1e-12);
        // sigma is a connected curve with near-boundary endpoints.
        let first = sb.sigma.first().unwrap();
        let last = sb.sigma.last().unwrap();
        assert!(map.domain.distance_to_boundary(*first) < 1e-2);
        assert!(map.domain.distance_to_boundary(*last) < 1e-2);
        // Measured constants for the disk.
        assert!(sb.h1_sigma / sb.d_a <= 10.0, "H1(sigma)/d = {}", sb.h1_sigma / sb.d_a);
        assert!(sb.d_w0_sigma / sb.d_a >= 1e-2, "d(w0, sigma)/d = {}", sb.d_w0_sigma / sb.d_a);
        for v in sb.vertical_integrals {
            assert!(v <= 0.2 * sb.d_a * 1.1);
        }
    }
}
