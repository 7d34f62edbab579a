//! Discrete Riemann map f from the upper half-plane onto the domain
//! with f(i) at the basepoint, plus the Koebe and hyperbolic-metric
//! checks and the boundary-box constructions built on the map.

mod boxes;
mod cigar;
mod quad;
pub(crate) mod zipper;

pub use boxes::{
    good_abscissas, refine_scale, shifted_box, BoxSpec, GoodAbscissas, RefineScale, ShiftedBox,
};
pub use cigar::{build_cigar_path, lemma47_verify, CigarPath, Lemma47Result};
pub use quad::lemma420_integral;

use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainSpec, Point};
use crate::hash::Hasher;
use num_complex::Complex64 as Cx;
use std::io::{Read, Write};
use zipper::Zipper;

/// Discrete conformal map of the upper half-plane onto the domain.
#[derive(Debug, Clone)]
pub struct HalfPlaneMap {
    pub domain: Domain,
    zipper: Zipper,
    /// Densified boundary points absorbed by the construction.
    pub boundary_points: Vec<Point>,
    /// Prevertex of each densified boundary point (index 0 sits at the
    /// seam, mapped from infinity).
    pub boundary_prevertices: Vec<f64>,
    /// Prevertices of the polygon vertices, strictly increasing.
    pub vertex_prevertices: Vec<f64>,
    /// Measured boundary placement error of the interpolating curve.
    pub accuracy: f64,
    pub resolution: usize,
}

pub(crate) fn cx(p: Point) -> Cx {
    Cx::new(p.x, p.y)
}

pub(crate) fn pt(z: Cx) -> Point {
    Point::new(z.re, z.im)
}

impl HalfPlaneMap {
    /// f(w) for w strictly inside the upper half-plane (or within
    /// rounding of the real line, approaching the boundary).
    pub fn eval(&self, w: Cx) -> Point {
        pt(self.zipper.inverse(w))
    }

    /// f(w) and f'(w).
    pub fn eval_with_derivative(&self, w: Cx) -> (Point, Cx) {
        let (z, d) = self.zipper.inverse_with_derivative(w);
        (pt(z), d)
    }

    pub fn derivative_abs(&self, w: Cx) -> f64 {
        self.zipper.inverse_with_derivative(w).1.norm()
    }

    /// Preimage of an interior domain point.
    pub fn forward(&self, z: Point) -> Result<Cx> {
        if !self.domain.contains(z) {
            return Err(Error::Domain(format!(
                "({}, {}) is outside the domain",
                z.x, z.y
            )));
        }
        let w = self.zipper.forward(cx(z));
        if !(w.im > 0.0) || !w.is_finite() {
            return Err(Error::Inversion(format!(
                "forward image of ({}, {}) left the half-plane",
                z.x, z.y
            )));
        }
        Ok(w)
    }

    /// Distance from f(w) to the boundary.
    pub fn image_boundary_distance(&self, w: Cx) -> f64 {
        self.domain.distance_to_boundary(self.eval(w))
    }

    /// Winding number of the absorbed boundary chain around the
    /// basepoint.
    pub fn winding_number(&self) -> i32 {
        let z0 = self.domain.basepoint();
        let mut total = 0.0;
        let n = self.boundary_points.len();
        for i in 0..n {
            let a = self.boundary_points[i].sub(z0);
            let b = self.boundary_points[(i + 1) % n].sub(z0);
            total += a.cross(b).atan2(a.dot(b));
        }
        (total / (2.0 * std::f64::consts::PI)).round() as i32
    }

    /// Prints where the derivative chain first degenerates.
    #[doc(hidden)]
    pub fn debug_derivative_chain(&self, w: Cx) -> String {
        let mut z = w;
        let mut d = Cx::new(1.0, 0.0);
        for (k, step) in self.zipper.steps.iter().rev().enumerate() {
            let f = step.inverse_derivative(z);
            let z_next = step.inverse(z);
            if !f.is_finite() || !d.is_finite() || f.norm() == 0.0 {
                return format!(
                    "step {k} (reverse): factor {f}, acc {d}, z {z}, step {:?}",
                    step
                );
            }
            d *= f;
            z = z_next;
        }
        format!("chain clean: d = {d}")
    }

    pub fn content_hash(&self) -> String {
        Hasher::new()
            .f64s(&self.boundary_prevertices)
            .f64(self.accuracy)
            .finish()
    }
}

/// Builds the discrete Riemann map. `resolution` controls the boundary
/// densification: the polyline is split into roughly that many points.
pub fn build_riemann_map(domain: &Domain, resolution: usize) -> Result<HalfPlaneMap> {
    build_riemann_map_inner(domain, resolution, true)
}

fn build_riemann_map_inner(domain: &Domain, resolution: usize, gates: bool) -> Result<HalfPlaneMap> {
    let boundary = domain.boundary();
    if boundary.len() > 100_000 {
        return Err(Error::Resource(format!(
            "boundary has {} vertices, beyond the 1e5 budget",
            boundary.len()
        )));
    }
    let resolution = resolution.max(4 * boundary.len()).max(64);
    let target = boundary.perimeter() / resolution as f64;

    // Densified chain; every polygon vertex is kept and the chain is
    // rotated to start inside the last edge, so the seam (which maps to
    // infinity) is never a polygon vertex.
    let n_vert = boundary.len();
    let mut chain: Vec<Point> = Vec::with_capacity(resolution + n_vert);
    let mut vertex_chain_index: Vec<usize> = Vec::with_capacity(n_vert);
    let mut seam_index = 0usize;
    for i in 0..n_vert {
        let (a, b) = boundary.segment(i);
        let pieces =
            ((a.dist(b) / target).ceil() as usize).max(if i + 1 == n_vert { 2 } else { 1 });
        vertex_chain_index.push(chain.len());
        for k in 0..pieces {
            if i + 1 == n_vert && k == pieces / 2 {
                seam_index = chain.len();
            }
            chain.push(a.add(b.sub(a).scale(k as f64 / pieces as f64)));
        }
    }
    let n = chain.len();
    let rotate = |idx: usize| (idx + n - seam_index) % n;
    let mut points: Vec<Cx> = Vec::with_capacity(n);
    for k in 0..n {
        points.push(cx(chain[(seam_index + k) % n]));
    }

    let z0 = cx(domain.basepoint());
    let zipper = Zipper::build(&points, z0).map_err(|e| {
        Error::Construction(format!(
            "map construction failed on the densified boundary: {e}"
        ))
    })?;

    // Boundary order on the real line must be increasing; the direction
    // is fixed by the branch conventions, so a decreasing run is
    // re-absorbed in reverse.
    let finite = &zipper.prevertices[1..];
    let increasing = finite.windows(2).all(|w| w[1] > w[0]);
    let decreasing = finite.windows(2).all(|w| w[1] < w[0]);
    if !increasing && !decreasing {
        return Err(Error::Construction(
            "boundary prevertices are not monotone along the real line".into(),
        ));
    }
    let (zipper, points, flipped) = if increasing {
        (zipper, points, false)
    } else {
        let mut rev: Vec<Cx> = points.clone();
        rev[1..].reverse();
        let z = Zipper::build(&rev, z0)
            .map_err(|e| Error::Construction(format!("reversed construction failed: {e}")))?;
        (z, rev, true)
    };
    if !zipper.prevertices[1..].windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Construction(
            "prevertices not increasing after orientation fix".into(),
        ));
    }

    let boundary_points: Vec<Point> = points.iter().map(|z| pt(*z)).collect();
    let boundary_prevertices = zipper.prevertices.clone();

    let mut vertex_prevertices = Vec::with_capacity(n_vert);
    for i in 0..n_vert {
        let k = rotate(vertex_chain_index[i]);
        let k = if flipped && k != 0 { n - k } else { k };
        if k == 0 {
            return Err(Error::Construction("seam landed on a polygon vertex".into()));
        }
        vertex_prevertices.push(boundary_prevertices[k]);
    }
    vertex_prevertices.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut map = HalfPlaneMap {
        domain: domain.clone(),
        zipper,
        boundary_points,
        boundary_prevertices,
        vertex_prevertices,
        accuracy: 0.0,
        resolution,
    };
    map.accuracy = estimate_accuracy(&map);
    if !gates {
        return Ok(map);
    }

    // Normalization and Koebe gates.
    let center = map.eval(Cx::i());
    let basepoint = domain.basepoint();
    if center.dist(basepoint) > map.accuracy.max(1e-9 * boundary.diameter()) * 10.0 {
        return Err(Error::Construction(format!(
            "normalization drift: f(i) = ({}, {})",
            center.x, center.y
        )));
    }
    let koebe = koebe_check(&map, &default_koebe_probes())?;
    if !koebe.pass {
        return Err(Error::Construction(format!(
            "Koebe gate failed: ratios [{:.3}, {:.3}]",
            koebe.min_ratio, koebe.max_ratio
        )));
    }
    Ok(map)
}

/// Test-only constructor that skips the normalization and Koebe gates.
#[doc(hidden)]
pub fn debug_build_unchecked(domain: &Domain, resolution: usize) -> Result<HalfPlaneMap> {
    build_riemann_map_inner(domain, resolution, false)
}

/// Placement error of the interpolating boundary: distance from the
/// image of mid-prevertex points to the input polyline.
fn estimate_accuracy(map: &HalfPlaneMap) -> f64 {
    let prev = &map.boundary_prevertices;
    let n = prev.len();
    let mut worst: f64 = 0.0;
    let stride = (n / 128).max(1);
    for j in (1..n - 1).step_by(stride) {
        let x0 = prev[j];
        let x1 = prev[j + 1];
        let gap = x1 - x0;
        if !(gap > 0.0) || !gap.is_finite() {
            continue;
        }
        let w = Cx::new(0.5 * (x0 + x1), 1e-3 * gap);
        let img = map.eval(w);
        worst = worst.max(map.domain.distance_to_boundary(img));
    }
    worst
}

/// Koebe sandwich report over unit-disk sample points.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KoebeReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub count: usize,
    pub pass: bool,
}

pub fn default_koebe_probes() -> Vec<Point> {
    let mut probes = Vec::new();
    for &radius in &[0.0, 0.3, 0.6, 0.85] {
        let spokes = if radius == 0.0 { 1 } else { 16 };
        for k in 0..spokes {
            let t = 2.0 * std::f64::consts::PI * k as f64 / spokes as f64 + 0.13;
            probes.push(Point::new(radius * t.cos(), radius * t.sin()));
        }
    }
    probes
}

/// Evaluates d(F(zeta), boundary) / (|F'(zeta)| (1 - |zeta|^2)) over
/// unit-disk samples, F being the map composed with the Cayley
/// transform. The untangled value lies in [1/4, 1].
pub fn koebe_check(map: &HalfPlaneMap, disk_samples: &[Point]) -> Result<KoebeReport> {
    const SLACK: f64 = 0.1;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut count = 0usize;
    for zeta in disk_samples {
        let r2 = zeta.x * zeta.x + zeta.y * zeta.y;
        if r2 >= 1.0 {
            return Err(Error::Domain(format!(
                "koebe sample ({}, {}) outside the unit disk",
                zeta.x, zeta.y
            )));
        }
        let zc = Cx::new(zeta.x, zeta.y);
        let one = Cx::new(1.0, 0.0);
        let w = Cx::i() * (one + zc) / (one - zc);
        let (img, df) = map.eval_with_derivative(w);
        let dt = 2.0 * Cx::i() / ((one - zc) * (one - zc));
        let denom = df.norm() * dt.norm() * (1.0 - r2);
        if !(denom > 0.0) {
            continue;
        }
        let ratio = map.domain.distance_to_boundary(img) / denom;
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Domain("no usable koebe samples".into()));
    }
    Ok(KoebeReport {
        min_ratio,
        max_ratio,
        count,
        pass: min_ratio >= 0.25 - SLACK && max_ratio <= 1.0 + SLACK,
    })
}

/// Hyperbolic distance between interior points, computed in the
/// half-plane chart: arccosh(1 + |w1 - w2|^2 / (2 Im w1 Im w2)).
pub fn hyperbolic_distance(map: &HalfPlaneMap, z1: Point, z2: Point) -> Result<f64> {
    let w1 = map.forward(z1)?;
    let w2 = map.forward(z2)?;
    Ok(hyperbolic_distance_h(w1, w2))
}

pub(crate) fn hyperbolic_distance_h(w1: Cx, w2: Cx) -> f64 {
    let t = 1.0 + (w1 - w2).norm_sqr() / (2.0 * w1.im * w2.im);
    // arccosh via the log form, stable for t near 1.
    (t + (t * t - 1.0).sqrt()).ln()
}

/// Cauchy-Riemann residual of f at a probe, relative to |f'|.
pub fn conformality_residual(map: &HalfPlaneMap, w: Cx) -> f64 {
    let h = 1e-6 * w.im.max(1e-3);
    let fxp = cx(map.eval(w + Cx::new(h, 0.0)));
    let fxm = cx(map.eval(w - Cx::new(h, 0.0)));
    let fyp = cx(map.eval(w + Cx::new(0.0, h)));
    let fym = cx(map.eval(w - Cx::new(0.0, h)));
    let dx = (fxp - fxm) / Cx::new(2.0 * h, 0.0);
    let dy = (fyp - fym) / Cx::new(2.0 * h, 0.0);
    // Holomorphic: d/dy = i d/dx.
    let residual = (dy - Cx::i() * dx).norm();
    residual / dx.norm().max(1e-300)
}

/// Map snapshot: JSON header line, then the step parameters and the
/// prevertex array in little-endian binary.
#[derive(serde::Serialize, serde::Deserialize)]
struct MapHeader {
    domain: DomainSpec,
    domain_hash: String,
    accuracy: f64,
    resolution: usize,
    n_steps: usize,
    n_points: usize,
}

pub fn write_map(map: &HalfPlaneMap, domain_spec: &DomainSpec, out: &mut dyn Write) -> Result<()> {
    let header = MapHeader {
        domain: domain_spec.clone(),
        domain_hash: domain_hash(&map.domain),
        accuracy: map.accuracy,
        resolution: map.resolution,
        n_steps: map.zipper.steps.len(),
        n_points: map.boundary_points.len(),
    };
    let mut line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    line.push('\n');
    out.write_all(line.as_bytes())?;
    for step in &map.zipper.steps {
        let vals: [f64; 5] = match *step {
            zipper::Step::Initial { p0, p1 } => [0.0, p0[0], p0[1], p1[0], p1[1]],
            zipper::Step::Unzip { x0, l, vertical } => {
                [1.0, x0, l, if vertical { 1.0 } else { 0.0 }, 0.0]
            }
            zipper::Step::Close { c, sign } => [2.0, c, sign, 0.0, 0.0],
            zipper::Step::Normalize { re, im } => [3.0, re, im, 0.0, 0.0],
            zipper::Step::Rescale { factor } => [4.0, factor, 0.0, 0.0, 0.0],
        };
        for v in vals {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for p in &map.boundary_points {
        out.write_all(&p.x.to_le_bytes())?;
        out.write_all(&p.y.to_le_bytes())?;
    }
    for x in &map.boundary_prevertices {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_map(input: &mut dyn Read) -> Result<HalfPlaneMap> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("map file has no header line".into()))?;
    let header: MapHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Format(format!("map header: {e}")))?;
    let domain = header.domain.to_domain()?;
    if domain_hash(&domain) != header.domain_hash {
        return Err(Error::Format("map domain hash mismatch".into()));
    }
    let mut cursor = nl + 1;
    let mut next = || -> Result<f64> {
        if cursor + 8 > bytes.len() {
            return Err(Error::Format("map payload truncated".into()));
        }
        let v = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
        cursor += 8;
        Ok(v)
    };
    let mut steps = Vec::with_capacity(header.n_steps);
    for _ in 0..header.n_steps {
        let tag = next()?;
        let a = next()?;
        let b = next()?;
        let c = next()?;
        let d = next()?;
        steps.push(match tag as u8 {
            0 => zipper::Step::Initial { p0: [a, b], p1: [c, d] },
            1 => zipper::Step::Unzip { x0: a, l: b, vertical: c > 0.5 },
            2 => zipper::Step::Close { c: a, sign: b },
            3 => zipper::Step::Normalize { re: a, im: b },
            4 => zipper::Step::Rescale { factor: a },
            t => return Err(Error::Format(format!("unknown step tag {t}"))),
        });
    }
    let mut boundary_points = Vec::with_capacity(header.n_points);
    for _ in 0..header.n_points {
        let x = next()?;
        let y = next()?;
        boundary_points.push(Point::new(x, y));
    }
    let mut boundary_prevertices = Vec::with_capacity(header.n_points);
    for _ in 0..header.n_points {
        boundary_prevertices.push(next()?);
    }
    let zipper = Zipper {
        steps,
        prevertices: boundary_prevertices.clone(),
    };
    let vertex_prevertices = {
        // Nearest chain slot per polygon vertex.
        let mut vp = Vec::new();
        for v in domain.boundary().vertices() {
            let mut best = (f64::INFINITY, 0usize);
            for (k, p) in boundary_points.iter().enumerate() {
                let d = p.dist(*v);
                if d < best.0 {
                    best = (d, k);
                }
            }
            if best.1 != 0 {
                vp.push(boundary_prevertices[best.1]);
            }
        }
        vp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vp
    };
    Ok(HalfPlaneMap {
        domain,
        zipper,
        boundary_points,
        boundary_prevertices,
        vertex_prevertices,
        accuracy: header.accuracy,
        resolution: header.resolution,
    })
}

pub fn domain_hash(domain: &Domain) -> String {
    let mut h = Hasher::new();
    for v in domain.boundary().vertices() {
        h = h.f64(v.x).f64(v.y);
    }
    h.f64(domain.basepoint().x)
        .f64(domain.basepoint().y)
        .finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::regular_ngon;

    fn disk_domain(r: f64) -> Domain {
        Domain::new(regular_ngon(256, r).unwrap(), Point::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn disk_map_against_moebius_oracle() {
        let dom = disk_domain(1.0);
        let map = build_riemann_map(&dom, 1024).unwrap();
        let c = map.eval(Cx::i());
        assert!(c.norm() < 1e-8, "f(i) = ({}, {})", c.x, c.y);
        // |f'(i)| = R/2 for the disk, up to the polygon approximation.
        let (_, d) = map.eval_with_derivative(Cx::i());
        assert!((d.norm() - 0.5).abs() / 0.5 < 0.01, "|f'(i)| = {}", d.norm());
        assert_eq!(map.winding_number(), 1);
        assert!(map.vertex_prevertices.windows(2).all(|w| w[1] > w[0]));
        assert!(map.accuracy < 2e-4, "accuracy {}", map.accuracy);
    }

    #[test]
    fn koebe_gate_on_disk_and_koch() {
        let dom = disk_domain(1.0);
        let map = build_riemann_map(&dom, 512).unwrap();
        let report = koebe_check(&map, &default_koebe_probes()).unwrap();
        assert!(report.pass);
        // At the center the ratio is exactly 1 for the disk.
        let center = koebe_check(&map, &[Point::new(0.0, 0.0)]).unwrap();
        assert!((center.min_ratio - 1.0).abs() < 0.02, "{}", center.min_ratio);
        assert!(center.min_ratio > 0.2);

        let snow = crate::geometry::koch_snowflake(3, 1.0).unwrap();
        let base = crate::geometry::centroid(&snow);
        let koch = Domain::new(snow, base).unwrap();
        let kmap = build_riemann_map(&koch, 1024).unwrap();
        let kreport = koebe_check(&kmap, &default_koebe_probes()).unwrap();
        assert!(
            kreport.min_ratio >= 0.225 && kreport.max_ratio <= 1.1,
            "koch ratios [{}, {}]",
            kreport.min_ratio,
            kreport.max_ratio
        );
    }

    #[test]
    fn hyperbolic_distance_disk_oracle() {
        let dom = disk_domain(1.0);
        let map = build_riemann_map(&dom, 512).unwrap();
        let rho = hyperbolic_distance(&map, Point::new(0.0, 0.0), Point::new(0.5, 0.0)).unwrap();
        let exact = 3f64.ln();
        assert!((rho - exact).abs() / exact < 0.01, "rho {rho} vs {exact}");
        let same = hyperbolic_distance(&map, Point::new(0.3, 0.1), Point::new(0.3, 0.1)).unwrap();
        assert!(same.abs() < 1e-9);
    }

    #[test]
    fn conformality_residual_small() {
        let dom = disk_domain(1.0);
        let map = build_riemann_map(&dom, 512).unwrap();
        for w in [Cx::new(0.0, 1.0), Cx::new(0.7, 0.4), Cx::new(-1.5, 2.0)] {
            let r = conformality_residual(&map, w);
            assert!(r < 1e-3, "CR residual {r} at {w}");
        }
    }

    #[test]
    fn map_snapshot_round_trip() {
        let spec = DomainSpec {
            kind: "regular_ngon".into(),
            level: Some(64),
            side: Some(1.0),
            vertices: None,
            basepoint: Some([0.0, 0.0]),
        };
        let dom = spec.to_domain().unwrap();
        let map = build_riemann_map(&dom, 256).unwrap();
        let mut buf = Vec::new();
        write_map(&map, &spec, &mut buf).unwrap();
        let back = read_map(&mut buf.as_slice()).unwrap();
        assert_eq!(back.boundary_prevertices, map.boundary_prevertices);
        let w = Cx::new(0.3, 0.9);
        assert!(back.eval(w).dist(map.eval(w)) < 1e-14);
    }
}
