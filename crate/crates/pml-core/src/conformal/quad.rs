use super::HalfPlaneMap;
use crate::error::{Error, Result};
use num_complex::Complex64 as Cx;

/// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_X: [f64; 8] = [
    -0.9602898564975363,
    -0.7966664774136267,
    -0.5255324099163290,
    -0.1834346424956498,
    0.1834346424956498,
    0.5255324099163290,
    0.7966664774136267,
    0.9602898564975363,
];
const GL_W: [f64; 8] = [
    0.1012285362903763,
    0.2223810344533745,
    0.3137066458778873,
    0.3626837833783620,
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

fn gl8(map: &HalfPlaneMap, x: f64, y0: f64, y1: f64) -> f64 {
    let mid = 0.5 * (y0 + y1);
    let half = 0.5 * (y1 - y0);
    let mut acc = 0.0;
    for k in 0..8 {
        let y = mid + half * GL_X[k];
        acc += GL_W[k] * map.derivative_abs(Cx::new(x, y));
    }
    acc * half
}

/// Arclength of the vertical segment x + i[y0, y1] under the map:
/// the integral of |f'| with geometric grading toward y0 when the
/// segment reaches down to the boundary.
pub(crate) fn vertical_integral(map: &HalfPlaneMap, x: f64, y0: f64, y1: f64) -> Result<f64> {
    if !(y1 > y0) || y0 < 0.0 {
        return Err(Error::Quadrature(format!(
            "bad vertical integral range [{y0}, {y1}]"
        )));
    }
    let mut total = 0.0;
    if y0 > 0.0 && y1 / y0 < 16.0 {
        // Away from the boundary: a few uniform panels suffice.
        let panels = 8;
        for k in 0..panels {
            let a = y0 + (y1 - y0) * k as f64 / panels as f64;
            let b = y0 + (y1 - y0) * (k + 1) as f64 / panels as f64;
            total += gl8(map, x, a, b);
        }
        return Ok(total);
    }
    // Geometric bands down to the boundary; |f'| has at worst an
    // integrable power singularity at y = 0, so the band contributions
    // decay geometrically and the loop can stop early.
    let floor = (y0.max(y1 * 1e-14)).max(1e-300);
    let mut hi = y1;
    for _ in 0..120 {
        let lo = (hi / 2.0).max(floor);
        total += gl8(map, x, lo, hi);
        hi = lo;
        if hi <= floor * (1.0 + 1e-12) {
            break;
        }
        if total.is_finite() && hi < y1 * 1e-6 {
            let band = gl8(map, x, hi / 2.0, hi);
            if band < 1e-9 * total {
                // Remaining geometric tail is negligible.
                total += band * 2.0;
                break;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::Quadrature(format!(
            "vertical integral diverged at x = {x}"
        )));
    }
    Ok(total)
}

/// Conformally normalized area integral of |f'(w)| / |f(w) - f(b)|
/// over the half-plane: the integrand carries the hyperbolic weight
/// 2 Im b / |w - conj(b)|^2 that makes the quantity a Moebius-invariant
/// version of the bound (evaluated in the b-centered disk chart), and
/// the returned value is the truncation to |w| <= r_cut plus nothing:
/// the tail estimate is checked against the 20% budget and the total is
/// already per-Im b normalized.
pub fn lemma420_integral(map: &HalfPlaneMap, b: Cx, r_cut: f64) -> Result<f64> {
    if !(b.im > 0.0) {
        return Err(Error::Domain(format!("b = {b} must lie in the half-plane")));
    }
    if !(r_cut > 4.0 * b.norm().max(1.0)) {
        return Err(Error::Quadrature(format!(
            "r_cut {r_cut} too small against |b| = {}",
            b.norm()
        )));
    }
    let fb = super::cx(map.eval(b));
    let integrand = |w: Cx| -> f64 {
        let (z, d) = map.eval_with_derivative(w);
        let dz = (super::cx(z) - fb).norm();
        if dz == 0.0 {
            return 0.0;
        }
        let weight = 2.0 * b.im / (w - b.conj()).norm_sqr();
        d.norm() / dz * weight
    };

    // Adaptive quadtree over [-r_cut, r_cut] x (0, r_cut].
    struct Cell {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        depth: u32,
    }
    let mut stack = vec![Cell { x: -r_cut, y: 0.0, w: 2.0 * r_cut, h: r_cut, depth: 0 }];
    let mut total: f64 = 0.0;
    let mut evals = 0usize;
    while let Some(c) = stack.pop() {
        evals += 5;
        if evals > 3_000_000 {
            return Err(Error::Quadrature("area quadrature budget exhausted".into()));
        }
        let midpoint = integrand(Cx::new(c.x + 0.5 * c.w, c.y + 0.5 * c.h));
        let coarse = midpoint * c.w * c.h;
        let mut fine = 0.0;
        for (dx, dy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
            fine += integrand(Cx::new(c.x + dx * c.w, c.y + dy * c.h));
        }
        let fine = fine * 0.25 * c.w * c.h;
        let contains_b = b.re >= c.x && b.re <= c.x + c.w && b.im >= c.y && b.im <= c.y + c.h;
        let tol = 1e-4 * (1.0 + total.abs());
        if c.depth < 14 && ((fine - coarse).abs() > tol || (contains_b && c.depth < 8)) {
            let (hw, hh) = (0.5 * c.w, 0.5 * c.h);
            for (dx, dy) in [(0.0, 0.0), (hw, 0.0), (0.0, hh), (hw, hh)] {
                stack.push(Cell {
                    x: c.x + dx,
                    y: c.y + dy,
                    w: hw,
                    h: hh,
                    depth: c.depth + 1,
                });
            }
        } else {
            total += fine;
        }
    }

    // Tail bound beyond the truncation radius: the weighted integrand
    // decays like |w|^-4 once |w| >> |b| and f(w) sits near the seam
    // image, so sample the rim and extrapolate.
    let mut rim: f64 = 0.0;
    for k in 0..16 {
        let t = std::f64::consts::PI * (k as f64 + 0.5) / 16.0;
        let w = Cx::new(r_cut * t.cos() * 0.98, (r_cut * t.sin()).max(1e-3 * r_cut) * 0.98);
        rim = rim.max(integrand(w) * w.norm_sqr() * w.norm_sqr());
    }
    let tail = rim * std::f64::consts::PI / (2.0 * r_cut * r_cut);
    if !(tail <= 0.2 * total.abs().max(1e-300)) {
        return Err(Error::Quadrature(format!(
            "tail bound {tail:.3e} exceeds 20% of the truncated integral {total:.3e}"
        )));
    }
    Ok(total + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::build_riemann_map;
    use crate::geometry::{regular_ngon, Domain, Point};

    fn disk_map(r: f64) -> crate::conformal::HalfPlaneMap {
        let dom = Domain::new(regular_ngon(128, r).unwrap(), Point::new(0.0, 0.0)).unwrap();
        build_riemann_map(&dom, 512).unwrap()
    }

    #[test]
    fn vertical_integral_is_an_arclength() {
        // For the disk map, the segment x=0, y in [1, 2] is carried to a
        // curve inside the disk; its length must match a dense polyline.
        let map = disk_map(1.0);
        let quad = vertical_integral(&map, 0.0, 1.0, 2.0).unwrap();
        let mut poly = 0.0;
        let n = 4000;
        let mut prev = map.eval(Cx::new(0.0, 1.0));
        for k in 1..=n {
            let y = 1.0 + k as f64 / n as f64;
            let cur = map.eval(Cx::new(0.0, y));
            poly += prev.dist(cur);
            prev = cur;
        }
        assert!((quad - poly).abs() / poly < 1e-4, "quad {quad} vs poly {poly}");
    }

    #[test]
    fn vertical_integral_reaches_the_boundary() {
        // Down to y = 0 the image lands on the boundary; the length
        // stays finite and dominates the straight-line distance.
        let map = disk_map(1.0);
        let len = vertical_integral(&map, 0.3, 0.0, 1.0).unwrap();
        let top = map.eval(Cx::new(0.3, 1.0));
        let bottom = map.eval(Cx::new(0.3, 1e-12));
        assert!(len >= top.dist(bottom) * (1.0 - 1e-6));
        assert!(len < 10.0 * top.dist(bottom));
    }

    #[test]
    fn lemma420_finite_and_truncation_stable() {
        let map = disk_map(1.0);
        let b = Cx::i();
        let v1 = lemma420_integral(&map, b, 8.0).unwrap();
        let v2 = lemma420_integral(&map, b, 16.0).unwrap();
        assert!(v1 > 0.0);
        assert!(
            (v2 - v1).abs() / v1 < 0.05,
            "truncation drift {v1} -> {v2}"
        );
    }

    #[test]
    fn lemma420_scale_covariance() {
        // Scaling the domain leaves the normalized integral unchanged:
        // f_2R = 2 f_R pointwise in the same chart.
        let m1 = disk_map(1.0);
        let m2 = disk_map(2.0);
        let v1 = lemma420_integral(&m1, Cx::i(), 8.0).unwrap();
        let v2 = lemma420_integral(&m2, Cx::i(), 8.0).unwrap();
        assert!((v1 - v2).abs() / v1 < 0.02, "{v1} vs {v2}");
    }
}
