//! Geodesic-composition construction of the half-plane Riemann map: the
//! boundary is absorbed point by point through explicit elementary
//! conformal maps, giving exact forward (domain to half-plane) and
//! inverse (half-plane to domain) evaluation in O(steps).

use crate::error::{Error, Result};
use num_complex::Complex64 as C;

/// Side of the slit base taken by the previous tip when a new arc is
/// absorbed; fixed by the counterclockwise orientation convention.
const TIP_SIDE: f64 = 1.0;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub(crate) enum Step {
    /// w = i sqrt((z - p1)/(z - p0)): opens the first chord.
    Initial { p0: [f64; 2], p1: [f64; 2] },
    /// Absorbs the geodesic from 0 to xi: s = m(w), out = sqrt(s^2 + l^2)
    /// with m(w) = w x0/(x0 - w), or m = w when the geodesic is the
    /// vertical segment itself.
    Unzip { x0: f64, l: f64, vertical: bool },
    /// Final closing map out = sign * (w c / (c - w))^2.
    Close { c: f64, sign: f64 },
    /// out = (w - re)/im, sending the basepoint image to i.
    Normalize { re: f64, im: f64 },
    /// out = w / factor: keeps intermediate magnitudes of order one.
    Rescale { factor: f64 },
}

/// A point of the extended real line while the boundary is pushed
/// through the construction.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RealPos {
    Finite(f64),
    Infinity,
}

/// Square root with image in the closed upper half-plane.
fn sqrt_h(z: C) -> C {
    let r = z.sqrt();
    if r.im < 0.0 || (r.im == 0.0 && r.re < 0.0) {
        -r
    } else {
        r
    }
}

impl Step {
    /// Forward directions (toward the half-plane) for interior points.
    pub(crate) fn forward(&self, z: C) -> C {
        match *self {
            Step::Initial { p0, p1 } => {
                let p0 = C::new(p0[0], p0[1]);
                let p1 = C::new(p1[0], p1[1]);
                C::i() * ((z - p1) / (z - p0)).sqrt()
            }
            Step::Unzip { x0, l, vertical } => {
                let m = if vertical { z } else { z * x0 / (x0 - z) };
                sqrt_h(m * m + l * l)
            }
            Step::Close { c, sign } => {
                let v = z * c / (c - z);
                sign * v * v
            }
            Step::Normalize { re, im } => (z - re) / im,
            Step::Rescale { factor } => z / factor,
        }
    }

    /// Inverse directions (from the half-plane into the domain).
    pub(crate) fn inverse(&self, w: C) -> C {
        match *self {
            Step::Initial { p0, p1 } => {
                let p0 = C::new(p0[0], p0[1]);
                let p1 = C::new(p1[0], p1[1]);
                let r = -w * w;
                (p1 - p0 * r) / (C::new(1.0, 0.0) - r)
            }
            Step::Unzip { x0, l, vertical } => {
                let s = invert_slit(w, l);
                if vertical {
                    s
                } else {
                    s * x0 / (x0 + s)
                }
            }
            Step::Close { c, sign } => {
                let v = if sign > 0.0 {
                    let r = w.sqrt();
                    if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) {
                        -r
                    } else {
                        r
                    }
                } else {
                    let r = (-w).sqrt();
                    let r = if r.re > 0.0 || (r.re == 0.0 && r.im < 0.0) { -r } else { r };
                    r
                };
                v * c / (c + v)
            }
            Step::Normalize { re, im } => w * im + re,
            Step::Rescale { factor } => w * factor,
        }
    }

    /// Derivative of the inverse direction at `w`.
    pub(crate) fn inverse_derivative(&self, w: C) -> C {
        match *self {
            Step::Initial { p0, p1 } => {
                let p0 = C::new(p0[0], p0[1]);
                let p1 = C::new(p1[0], p1[1]);
                let r = -w * w;
                let dz_dr = (p1 - p0) / ((C::new(1.0, 0.0) - r) * (C::new(1.0, 0.0) - r));
                dz_dr * (-2.0 * w)
            }
            Step::Unzip { x0, l, vertical } => {
                let s = invert_slit(w, l);
                let ds_dw = w / s;
                if vertical {
                    ds_dw
                } else {
                    let den = x0 + s;
                    ds_dw * x0 * x0 / (den * den)
                }
            }
            Step::Close { c, sign } => {
                let v = if sign > 0.0 {
                    let r = w.sqrt();
                    if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) {
                        -r
                    } else {
                        r
                    }
                } else {
                    let r = (-w).sqrt();
                    if r.re > 0.0 || (r.re == 0.0 && r.im < 0.0) {
                        -r
                    } else {
                        r
                    }
                };
                let dv_dw = 0.5 / (sign * v);
                let den = c + v;
                dv_dw * c * c / (den * den)
            }
            Step::Normalize { re: _, im } => C::new(im, 0.0),
            Step::Rescale { factor } => C::new(factor, 0.0),
        }
    }
}

/// Inverse of the vertical-slit opening s -> sqrt(s^2 + l^2): picks the
/// root of w^2 - l^2 in the closed upper half-plane, with the real-axis
/// tie broken by continuity from the right.
fn invert_slit(w: C, l: f64) -> C {
    let q = w * w - l * l;
    if w.im == 0.0 {
        // Boundary evaluation.
        if q.re >= 0.0 {
            return C::new(w.re.signum() * q.re.sqrt(), 0.0);
        }
        return C::new(0.0, (-q.re).sqrt());
    }
    let r = q.sqrt();
    if r.im >= 0.0 {
        r
    } else {
        -r
    }
}

/// Push a real-line position through a forward unzip.
fn push_real(pos: RealPos, x0: f64, l: f64, vertical: bool) -> RealPos {
    match pos {
        RealPos::Infinity => {
            if vertical {
                RealPos::Infinity
            } else {
                // m(inf) = -x0.
                let m = -x0;
                RealPos::Finite(m.signum() * (m * m + l * l).sqrt())
            }
        }
        RealPos::Finite(x) => {
            let m = if vertical {
                x
            } else {
                if x == x0 {
                    return RealPos::Infinity;
                }
                x * x0 / (x0 - x)
            };
            if !vertical && m.is_infinite() {
                return RealPos::Infinity;
            }
            RealPos::Finite(m.signum() * (m * m + l * l).sqrt())
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Zipper {
    pub steps: Vec<Step>,
    /// Prevertex of each input boundary point; index 0 is the wrap
    /// point at infinity.
    pub prevertices: Vec<f64>,
}

impl Zipper {
    /// Builds the composition absorbing `points` in order (a closed
    /// counterclockwise boundary chain) and normalizing the interior
    /// point `z0` to i.
    pub fn build(points: &[C], z0: C) -> Result<Zipper> {
        let n = points.len();
        if n < 8 {
            return Err(Error::Construction(format!(
                "need at least 8 boundary points, got {n}"
            )));
        }
        let scale = points
            .iter()
            .map(|p| (*p - z0).norm())
            .fold(0.0f64, f64::max);

        let mut steps = Vec::with_capacity(n + 2);
        let initial = Step::Initial {
            p0: [points[0].re, points[0].im],
            p1: [points[1].re, points[1].im],
        };
        let mut pos: Vec<RealPos> = vec![RealPos::Finite(0.0); n];
        pos[0] = RealPos::Infinity;
        pos[1] = RealPos::Finite(0.0);
        let mut pending: Vec<C> = points.to_vec();
        for (j, p) in points.iter().enumerate().skip(2) {
            pending[j] = initial.forward(*p);
        }
        let mut z0_img = initial.forward(z0);
        steps.push(initial);

        for k in 2..n {
            let xi = pending[k];
            if !(xi.im > 0.0) || !xi.is_finite() {
                return Err(Error::Construction(format!(
                    "boundary point {k} left the half-plane during unzipping (image {xi})"
                )));
            }
            let vertical = xi.re.abs() <= 1e-14 * xi.norm();
            let (x0, l) = if vertical {
                (0.0, xi.im)
            } else {
                (xi.norm_sqr() / xi.re, xi.norm_sqr() / xi.im)
            };
            let step = Step::Unzip { x0, l, vertical };
            // Not-yet-absorbed points move as interior points.
            for item in pending.iter_mut().skip(k + 1) {
                *item = step.forward(*item);
            }
            z0_img = step.forward(z0_img);
            // Already-absorbed points move along the real line; the
            // previous tip at 0 takes the oriented side of the base.
            for item in pos.iter_mut().take(k) {
                *item = push_real(*item, x0, l, vertical);
            }
            pos[k - 1] = RealPos::Finite(TIP_SIDE * l);
            pos[k] = RealPos::Finite(0.0);
            steps.push(step);
            // Renormalize the working scale to the latest slit height;
            // without this the coordinates blow up exponentially under
            // crowding and complex divisions overflow.
            let rescale = Step::Rescale { factor: l };
            for item in pending.iter_mut().skip(k + 1) {
                *item = rescale.forward(*item);
            }
            z0_img = rescale.forward(z0_img);
            for item in pos.iter_mut().take(k + 1) {
                if let RealPos::Finite(x) = item {
                    *item = RealPos::Finite(*x / l);
                }
            }
            steps.push(rescale);
        }

        let c = match pos[0] {
            RealPos::Finite(c) if c != 0.0 => c,
            _ => {
                return Err(Error::Construction(
                    "seam point degenerated during unzipping".into(),
                ))
            }
        };
        // Pick the closing sign that keeps the interior in the upper
        // half-plane.
        let close_plus = Step::Close { c, sign: 1.0 };
        let sign = if close_plus.forward(z0_img).im > 0.0 { 1.0 } else { -1.0 };
        let close = Step::Close { c, sign };
        z0_img = close.forward(z0_img);
        if !(z0_img.im > 0.0) {
            return Err(Error::Construction(
                "basepoint left the half-plane at the closing step".into(),
            ));
        }
        // Close the real positions: x -> sign * (x c/(c - x))^2.
        let mut prevertices = vec![0.0f64; n];
        for j in 0..n {
            prevertices[j] = match pos[j] {
                RealPos::Infinity => {
                    let v = -c;
                    sign * v * v
                }
                RealPos::Finite(x) => {
                    if x == c {
                        f64::INFINITY
                    } else {
                        let v = x * c / (c - x);
                        sign * v * v
                    }
                }
            };
        }
        steps.push(close);

        let norм = Step::Normalize { re: z0_img.re, im: z0_img.im };
        for p in prevertices.iter_mut() {
            if p.is_finite() {
                *p = (*p - z0_img.re) / z0_img.im;
            }
        }
        steps.push(norм);
        let _ = scale;

        Ok(Zipper { steps, prevertices })
    }

    /// Forward map: domain point to the half-plane.
    pub fn forward(&self, z: C) -> C {
        let mut w = z;
        for step in &self.steps {
            w = step.forward(w);
        }
        w
    }

    /// Inverse map f: half-plane to the domain.
    pub fn inverse(&self, w: C) -> C {
        let mut z = w;
        for step in self.steps.iter().rev() {
            z = step.inverse(z);
        }
        z
    }

    /// f and f' together.
    pub fn inverse_with_derivative(&self, w: C) -> (C, C) {
        let mut z = w;
        let mut d = C::new(1.0, 0.0);
        for step in self.steps.iter().rev() {
            d *= step.inverse_derivative(z);
            z = step.inverse(z);
        }
        (z, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_points(n: usize, r: f64) -> Vec<C> {
        (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                C::new(r * t.cos(), r * t.sin())
            })
            .collect()
    }

    #[test]
    fn disk_map_basics() {
        let pts = circle_points(128, 1.0);
        let z = Zipper::build(&pts, C::new(0.0, 0.0)).unwrap();
        // Normalization: i maps to the basepoint.
        let center = z.inverse(C::i());
        assert!(center.norm() < 1e-9, "f(i) = {center}");
        // Prevertices of the absorbed points are finite and strictly
        // monotone (one wrap at the seam).
        let finite: Vec<f64> = z.prevertices[1..].to_vec();
        assert!(finite.iter().all(|x| x.is_finite()));
        let increasing = finite.windows(2).all(|w| w[1] > w[0]);
        let decreasing = finite.windows(2).all(|w| w[1] < w[0]);
        assert!(
            increasing || decreasing,
            "prevertices not monotone: {:?}",
            &finite[..6]
        );
        // Round trip through the map.
        for w in [C::new(0.3, 0.8), C::new(-1.2, 2.0), C::new(0.0, 0.2)] {
            let zz = z.inverse(w);
            assert!(zz.norm() < 1.0 + 1e-9);
            let back = z.forward(zz);
            assert!((back - w).norm() < 1e-6 * (1.0 + w.norm()), "{w} -> {zz} -> {back}");
        }
        // Conformal derivative at i: |f'(i)| should be R/2 for the disk.
        let (_, d) = z.inverse_with_derivative(C::i());
        assert!(
            (d.norm() - 0.5).abs() < 0.01,
            "|f'(i)| = {} (expect 0.5)",
            d.norm()
        );
        // Boundary goes to the boundary.
        let img = z.inverse(C::new(0.7, 1e-9));
        assert!((img.norm() - 1.0).abs() < 1e-3, "|f(x)| = {}", img.norm());
    }

    #[test]
    fn square_map_round_trip() {
        // Unit square boundary, densified.
        let mut pts = Vec::new();
        let corners = [
            C::new(0.0, 0.0),
            C::new(1.0, 0.0),
            C::new(1.0, 1.0),
            C::new(0.0, 1.0),
        ];
        for e in 0..4 {
            let a = corners[e];
            let b = corners[(e + 1) % 4];
            for k in 0..24 {
                pts.push(a + (b - a) * (k as f64 / 24.0));
            }
        }
        let z0 = C::new(0.5, 0.5);
        let z = Zipper::build(&pts, z0).unwrap();
        assert!((z.inverse(C::i()) - z0).norm() < 1e-9);
        for w in [C::new(0.4, 1.3), C::new(-2.0, 0.7), C::new(3.0, 2.0)] {
            let inside = z.inverse(w);
            assert!(inside.re > -1e-6 && inside.re < 1.0 + 1e-6);
            assert!(inside.im > -1e-6 && inside.im < 1.0 + 1e-6);
            let back = z.forward(inside);
            assert!((back - w).norm() < 1e-6 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let pts = circle_points(96, 2.0);
        let z = Zipper::build(&pts, C::new(0.0, 0.0)).unwrap();
        for w in [C::new(0.5, 1.0), C::new(-1.0, 0.4), C::new(2.0, 3.0)] {
            let (_, d) = z.inverse_with_derivative(w);
            let h = 1e-6;
            let fd = (z.inverse(w + C::new(h, 0.0)) - z.inverse(w - C::new(h, 0.0)))
                / C::new(2.0 * h, 0.0);
            assert!(
                (d - fd).norm() <= 1e-5 * d.norm().max(1e-12),
                "analytic {d} vs fd {fd}"
            );
        }
    }
}
