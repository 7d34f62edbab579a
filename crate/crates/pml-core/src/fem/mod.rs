//! Nonlinear finite elements for the p-capacitary problem on the ring
//! between the domain boundary and the inner circle, plus the pointwise
//! gradient diagnostics built on the solved field.

mod mesh;
pub(crate) mod solver;

pub use mesh::{build_ring_mesh, Mesh, NodeTag};

use crate::error::{Error, Result};
use crate::geometry::{Ball, DomainSpec, Point};
use crate::hash::Hasher;
use serde::{Deserialize, Serialize};
use solver::ElementData;
use std::io::{Read, Write};
use std::sync::Arc;

/// Solver knobs. `epsilon` is the final gradient-regularization scale;
/// the solve starts at 1e-2 and tightens geometrically.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub newton_tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub continuation_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-8,
            newton_tol: 1e-8,
            max_iters: 200,
            damping: 0.5,
            continuation_steps: 6,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(1e-10..=1e-2).contains(&self.epsilon) {
            return Err(Error::Domain(format!(
                "epsilon {} outside [1e-10, 1e-2]",
                self.epsilon
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Domain("newton_tol must be positive".into()));
        }
        if !(0.0 < self.damping && self.damping < 1.0) {
            return Err(Error::Domain("damping must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Discrete p-capacitary solution: piecewise-linear nodal values with
/// the per-triangle constant gradient field.
#[derive(Debug, Clone)]
pub struct PHField {
    pub mesh: Arc<Mesh>,
    pub p: f64,
    pub u: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub energy: f64,
    /// Epsilon-free weak residual (max over interior hats) of the final
    /// iterate.
    pub residual: f64,
    pub epsilon: f64,
}

/// Summary statistics of the Theorem-2 style ratio over a sample set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioStats {
    pub count: usize,
    pub discarded: usize,
    pub min: f64,
    pub max: f64,
    /// Quantiles at 0.1, 0.25, 0.5, 0.75, 0.9.
    pub quantiles: [f64; 5],
}

pub fn solve_p_capacitary(mesh: Arc<Mesh>, p: f64, cfg: &SolverConfig) -> Result<PHField> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p must lie in (1, inf), got {p}")));
    }
    cfg.validate()?;
    let out = solver::solve_capacitary_values(
        &mesh,
        p,
        cfg.epsilon,
        cfg.newton_tol,
        cfg.max_iters,
        cfg.damping,
        cfg.continuation_steps,
    )?;
    let elems = ElementData::new(&mesh);
    let grad: Vec<[f64; 2]> = (0..mesh.triangle_count())
        .map(|t| elems.gradient(&mesh, &out.u, t))
        .collect();
    let residual = solver::weak_residual_linf(&mesh, &elems, &out.u, p);
    let field = PHField {
        mesh,
        p,
        u: out.u,
        grad,
        energy: out.energy,
        residual,
        epsilon: cfg.epsilon,
    };
    field.check_range()?;
    Ok(field)
}

impl PHField {
    fn check_range(&self) -> Result<()> {
        for (i, &v) in self.u.iter().enumerate() {
            if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(Error::Solver {
                    residual: (v - 0.5).abs() - 0.5,
                    iters: i,
                });
            }
        }
        Ok(())
    }

    /// Piecewise-linear value and per-triangle gradient at `z`.
    pub fn evaluate(&self, z: Point) -> Result<(f64, [f64; 2])> {
        let (t, bary) = self
            .mesh
            .locate(z)
            .ok_or_else(|| Error::Domain(format!("point ({}, {}) outside the ring", z.x, z.y)))?;
        let tri = self.mesh.triangles[t];
        let v = bary[0] * self.u[tri[0]] + bary[1] * self.u[tri[1]] + bary[2] * self.u[tri[2]];
        Ok((v, self.grad[t]))
    }

    /// Value of the capacitary extension: 1 on the closed inner disk,
    /// 0 outside the domain, interpolated on the ring.
    pub fn extended_value(&self, z: Point) -> f64 {
        let dom = &self.mesh.domain;
        if z.dist(dom.basepoint()) <= dom.inner_radius() {
            return 1.0;
        }
        if !dom.contains(z) {
            return 0.0;
        }
        match self.evaluate(z) {
            Ok((v, _)) => v,
            // Points squeezed between the mesh and the exact boundary.
            Err(_) => {
                if z.dist(dom.basepoint()) < dom.inner_radius() * 1.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn content_hash(&self) -> String {
        Hasher::new()
            .bytes(self.mesh.content_hash().as_bytes())
            .f64(self.p)
            .f64(self.epsilon)
            .f64s(&self.u)
            .finish()
    }

    /// R(z) = |grad u| d(z, boundary) / u(z) over retained samples.
    /// Samples closer than twice the local mesh size to the outer
    /// boundary are discarded and counted.
    pub fn theorem2_ratio(&self, samples: &[Point]) -> Result<RatioStats> {
        let mut ratios = Vec::new();
        let mut discarded = 0usize;
        for &z in samples {
            let Some((t, bary)) = self.mesh.locate(z) else {
                discarded += 1;
                continue;
            };
            let local = self.mesh.triangle_diameter(t);
            let d = self.mesh.domain.distance_to_boundary(z);
            if d < 2.0 * local {
                discarded += 1;
                continue;
            }
            let tri = self.mesh.triangles[t];
            let u = bary[0] * self.u[tri[0]] + bary[1] * self.u[tri[1]] + bary[2] * self.u[tri[2]];
            let g = self.grad[t];
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if u <= 0.0 {
                discarded += 1;
                continue;
            }
            let r = gn * d / u;
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::Sampling(format!(
                    "non-finite ratio at ({}, {})",
                    z.x, z.y
                )));
            }
            ratios.push(r);
        }
        if ratios.is_empty() {
            return Err(Error::Sampling("no retained theorem-2 samples".into()));
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |f: f64| ratios[((ratios.len() - 1) as f64 * f).round() as usize];
        Ok(RatioStats {
            count: ratios.len(),
            discarded,
            min: ratios[0],
            max: *ratios.last().unwrap(),
            quantiles: [q(0.1), q(0.25), q(0.5), q(0.75), q(0.9)],
        })
    }

    /// (max u)/(min u) over mesh nodes in the ball; requires
    /// B(center, 2 radius) inside the ring.
    pub fn harnack_ratio(&self, ball: &Ball) -> Result<f64> {
        let dom = &self.mesh.domain;
        let c = ball.center;
        let r2 = 2.0 * ball.radius;
        if dom.distance_to_boundary(c) <= r2
            || c.dist(dom.basepoint()) - dom.inner_radius() <= r2
            || !dom.in_ring(c)
        {
            return Err(Error::Domain(
                "harnack ball must satisfy B(center, 2r) inside the ring".into(),
            ));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut found = false;
        for (i, p) in self.mesh.nodes.iter().enumerate() {
            if p.dist(c) < ball.radius {
                lo = lo.min(self.u[i]);
                hi = hi.max(self.u[i]);
                found = true;
            }
        }
        if !found {
            // Ball smaller than the mesh: fall back to the center value.
            let (v, _) = self.evaluate(c)?;
            lo = v;
            hi = v;
        }
        if lo <= 0.0 {
            return Err(Error::Sampling("nonpositive nodal value in harnack ball".into()));
        }
        Ok(hi / lo)
    }

    /// Least-squares slope of log max_{B(w,s)} u against log s over
    /// s in [r/8, r]: the empirical boundary Hoelder exponent at w.
    pub fn boundary_decay_probe(&self, w: Point, r: f64) -> Result<f64> {
        let dom = &self.mesh.domain;
        if dom.distance_to_boundary(w) > 1e-6 * dom.boundary().diameter() {
            return Err(Error::Domain("probe point must lie on the boundary".into()));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 0..=12 {
            let s = r / 8.0 * (8f64).powf(k as f64 / 12.0);
            let mut max_u: f64 = 0.0;
            for (i, p) in self.mesh.nodes.iter().enumerate() {
                if p.dist(w) < s {
                    max_u = max_u.max(self.u[i]);
                }
            }
            // The sup is typically attained on the sphere; dense angular
            // samples remove the node-quantization bias.
            for a in 0..256 {
                let t = 2.0 * std::f64::consts::PI * a as f64 / 256.0;
                let z = Point::new(w.x + s * t.cos(), w.y + s * t.sin());
                if dom.contains(z) {
                    max_u = max_u.max(self.extended_value(z));
                }
            }
            if max_u > 0.0 {
                xs.push(s.ln());
                ys.push(max_u.ln());
            }
        }
        if xs.len() < 6 {
            return Err(Error::Resolution(format!(
                "only {} usable radii in the decay window at ({}, {})",
                xs.len(),
                w.x,
                w.y
            )));
        }
        let alpha = least_squares_slope(&xs, &ys);
        if alpha <= 0.0 {
            return Err(Error::Resolution(format!("nonpositive decay slope {alpha}")));
        }
        Ok(alpha)
    }

    /// Exhaustive discrete-maximum-principle check over node stars:
    /// no interior node is a strict local extremum.
    pub fn check_max_principle(&self) -> Result<()> {
        let n = self.mesh.node_count();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for tri in &self.mesh.triangles {
            for &i in tri {
                for &j in tri {
                    if i != j {
                        lo[i] = lo[i].min(self.u[j]);
                        hi[i] = hi[i].max(self.u[j]);
                    }
                }
            }
        }
        let tol = 1e-10;
        for i in 0..n {
            if self.mesh.node_tags[i] != NodeTag::Interior {
                continue;
            }
            if self.u[i] > hi[i] + tol || self.u[i] < lo[i] - tol {
                return Err(Error::Solver { residual: self.u[i], iters: i });
            }
        }
        Ok(())
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// JSON header of the field snapshot file; the nodal values follow as
/// little-endian f64.
#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    p: f64,
    epsilon: f64,
    residual: f64,
    energy: f64,
    mesh_hash: String,
    node_count: usize,
    h: f64,
    grading: f64,
    domain: DomainSpec,
}

/// Writes the snapshot: one JSON header line, then the raw value array.
pub fn write_field(field: &PHField, domain_spec: &DomainSpec, out: &mut dyn Write) -> Result<()> {
    let header = FieldHeader {
        p: field.p,
        epsilon: field.epsilon,
        residual: field.residual,
        energy: field.energy,
        mesh_hash: field.mesh.content_hash(),
        node_count: field.u.len(),
        h: field.mesh.h,
        grading: field.mesh.grading,
        domain: domain_spec.clone(),
    };
    let mut line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    line.push('\n');
    out.write_all(line.as_bytes())?;
    for v in &field.u {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot back, rebuilding the mesh from the embedded domain
/// spec and checking the recorded mesh hash.
pub fn read_field(input: &mut dyn Read) -> Result<PHField> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("field file has no header line".into()))?;
    let header: FieldHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Format(format!("field header: {e}")))?;
    let payload = &bytes[nl + 1..];
    if payload.len() != header.node_count * 8 {
        return Err(Error::Format(format!(
            "field payload holds {} bytes, expected {}",
            payload.len(),
            header.node_count * 8
        )));
    }
    let u: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let domain = header.domain.to_domain()?;
    let mesh = Arc::new(build_ring_mesh(&domain, header.h, header.grading)?);
    if mesh.content_hash() != header.mesh_hash {
        return Err(Error::Format(
            "rebuilt mesh hash differs from the snapshot header".into(),
        ));
    }
    let elems = ElementData::new(&mesh);
    let grad: Vec<[f64; 2]> = (0..mesh.triangle_count())
        .map(|t| elems.gradient(&mesh, &u, t))
        .collect();
    Ok(PHField {
        mesh,
        p: header.p,
        u,
        grad,
        energy: header.energy,
        residual: header.residual,
        epsilon: header.epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{regular_ngon, Domain};

    /// Radial oracle for the annulus 1 < |z| < 2 (outer boundary a fine
    /// polygon): u_p(r) with u(1) = 1, u(2) = 0.
    pub(crate) fn radial_u(p: f64, r: f64) -> f64 {
        if (p - 2.0).abs() < 1e-12 {
            (2.0 / r).ln() / 2f64.ln()
        } else {
            let beta = (p - 2.0) / (p - 1.0);
            (r.powf(beta) - 2f64.powf(beta)) / (1.0 - 2f64.powf(beta))
        }
    }

    pub(crate) fn annulus_domain() -> Domain {
        Domain::new(regular_ngon(256, 2.0).unwrap(), Point::new(0.0, 0.0)).unwrap()
    }

    fn solve_annulus(p: f64, h: f64) -> PHField {
        let dom = annulus_domain();
        let mesh = Arc::new(build_ring_mesh(&dom, h, 1.0).unwrap());
        solve_p_capacitary(mesh, p, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn annulus_p2_matches_log_oracle() {
        let field = solve_annulus(2.0, 0.05);
        let mut max_err: f64 = 0.0;
        for (i, node) in field.mesh.nodes.iter().enumerate() {
            let r = node.norm().clamp(1.0, 2.0);
            max_err = max_err.max((field.u[i] - radial_u(2.0, r)).abs());
        }
        assert!(max_err < 3e-3, "nodal max error {max_err}");
    }

    #[test]
    fn annulus_p15_matches_radial_oracle() {
        let field = solve_annulus(1.5, 0.05);
        let mut max_err: f64 = 0.0;
        for (i, node) in field.mesh.nodes.iter().enumerate() {
            let r = node.norm().clamp(1.0, 2.0);
            max_err = max_err.max((field.u[i] - (2.0 / r - 1.0)).abs());
        }
        assert!(max_err < 5e-3, "nodal max error {max_err}");
    }

    #[test]
    fn annulus_p3_matches_radial_oracle() {
        let field = solve_annulus(3.0, 0.05);
        let mut max_err: f64 = 0.0;
        for (i, node) in field.mesh.nodes.iter().enumerate() {
            let r = node.norm().clamp(1.0, 2.0);
            max_err = max_err.max((field.u[i] - radial_u(3.0, r)).abs());
        }
        assert!(max_err < 5e-3, "nodal max error {max_err}");
    }

    #[test]
    fn boundary_data_is_exact_and_bounded() {
        let field = solve_annulus(1.5, 0.06);
        for i in 0..field.mesh.node_count() {
            match field.mesh.node_tags[i] {
                NodeTag::InnerCircle => assert_eq!(field.u[i], 1.0),
                NodeTag::OuterBoundary => assert_eq!(field.u[i], 0.0),
                NodeTag::Interior => {
                    assert!(field.u[i] > 0.0 && field.u[i] < 1.0)
                }
            }
        }
        field.check_max_principle().unwrap();
    }

    #[test]
    fn evaluate_interpolates_against_oracle() {
        let field = solve_annulus(2.0, 0.05);
        let (v, _) = field.evaluate(Point::new(1.5, 0.0)).unwrap();
        assert!((v - 0.41503749927884382).abs() < 1e-2);
        // Nodal exactness.
        let i = field
            .mesh
            .node_tags
            .iter()
            .position(|t| *t == NodeTag::Interior)
            .unwrap();
        let (vn, _) = field.evaluate(field.mesh.nodes[i]).unwrap();
        assert!((vn - field.u[i]).abs() < 1e-12);
        // Inner circle reads back 1 through the extension.
        assert_eq!(field.extended_value(Point::new(0.0, 0.0)), 1.0);
    }

    #[test]
    fn theorem2_ratio_tracks_radial_formula() {
        let field = solve_annulus(2.0, 0.03);
        // R(r) = (2 - r) / (r log(2/r)); frozen value at r = 1.5 is
        // 1.15868649892740230.
        let stats = field.theorem2_ratio(&[Point::new(1.5, 0.0)]).unwrap();
        assert_eq!(stats.count, 1);
        assert!((stats.min - 1.15868649892740230).abs() < 0.02 * 1.1587);

        let field15 = solve_annulus(1.5, 0.03);
        let stats15 = field15
            .theorem2_ratio(&[Point::new(1.5, 0.0), Point::new(0.0, -1.5)])
            .unwrap();
        // p = 3/2 oracle: R = 2/r = 4/3 at r = 1.5.
        assert!((stats15.min - 4.0 / 3.0).abs() < 0.02 * 1.333);
        assert!((stats15.max - 4.0 / 3.0).abs() < 0.02 * 1.333);
    }

    #[test]
    fn theorem2_near_inner_circle_is_finite() {
        let field = solve_annulus(2.0, 0.06);
        let stats = field.theorem2_ratio(&[Point::new(1.02, 0.0)]).unwrap();
        assert!(stats.min.is_finite() && stats.min > 0.0);
    }

    #[test]
    fn harnack_ratio_oracle_and_limits() {
        // Nodes-in-ball quantization needs a fine mesh for the 3% check.
        let field = solve_annulus(2.0, 0.02);
        let ball = Ball::new(Point::new(1.5, 0.0), 0.1).unwrap();
        let ratio = field.harnack_ratio(&ball).unwrap();
        // log(2/1.4)/log(2/1.6) = 1.59841.
        assert!((ratio - 1.59841).abs() / 1.59841 < 0.03, "ratio {ratio}");
        assert!(ratio >= 1.0);
        let tiny = Ball::new(Point::new(1.5, 0.0), 0.02).unwrap();
        let small_ratio = field.harnack_ratio(&tiny).unwrap();
        assert!(small_ratio < 1.1);
        // Precondition: ball touching the boundary is rejected.
        let bad = Ball::new(Point::new(1.9, 0.0), 0.08).unwrap();
        assert!(field.harnack_ratio(&bad).is_err());
    }

    #[test]
    fn energy_stable_under_refinement() {
        let coarse = solve_annulus(2.0, 0.06);
        let fine = solve_annulus(2.0, 0.03);
        // Exact p=2 energy of the annulus ring is pi/ln 2 (half the
        // Dirichlet integral).
        let exact = std::f64::consts::PI / 2f64.ln();
        assert!((coarse.energy - exact).abs() / exact < 0.01);
        assert!((fine.energy - exact).abs() / exact < 0.005);
        assert!((fine.energy - coarse.energy).abs() / exact < 5e-3);
    }

    #[test]
    fn rotational_symmetry_of_interpolant() {
        let field = solve_annulus(2.0, 0.05);
        let mut vals = Vec::new();
        for k in 0..8 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            let (v, _) = field
                .evaluate(Point::new(1.4 * t.cos(), 1.4 * t.sin()))
                .unwrap();
            vals.push(v);
        }
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max)
            - vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 2e-3, "symmetry spread {spread}");
    }

    #[test]
    fn field_snapshot_round_trip() {
        let dom_spec = DomainSpec {
            kind: "regular_ngon".into(),
            level: Some(64),
            side: Some(2.0),
            vertices: None,
            basepoint: Some([0.0, 0.0]),
        };
        let dom = dom_spec.to_domain().unwrap();
        let mesh = Arc::new(build_ring_mesh(&dom, 0.1, 1.0).unwrap());
        let field = solve_p_capacitary(mesh, 2.0, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_field(&field, &dom_spec, &mut buf).unwrap();
        let back = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back.u, field.u);
        assert_eq!(back.p, field.p);
        assert_eq!(back.mesh.content_hash(), field.mesh.content_hash());
    }

    #[test]
    fn decay_probe_flat_boundary() {
        // Harmonic vanishing on a straight segment is comparable to the
        // distance: expect slope near 1.
        let square = crate::geometry::JordanCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let dom = Domain::new(square, Point::new(0.5, 0.5)).unwrap();
        let mesh = Arc::new(build_ring_mesh(&dom, 0.04, 0.5).unwrap());
        let field = solve_p_capacitary(mesh, 2.0, &SolverConfig::default()).unwrap();
        let alpha = field
            .boundary_decay_probe(Point::new(0.5, 0.0), 0.12)
            .unwrap();
        assert!((alpha - 1.0).abs() <= 0.15, "flat slope {alpha}");
    }

    #[test]
    fn decay_probe_sixty_degree_corner() {
        // Wedge of opening pi/3: harmonic decay exponent pi/angle = 3.
        let tri = crate::geometry::JordanCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 3f64.sqrt()),
        ])
        .unwrap();
        let dom = Domain::new(tri, Point::new(1.0, 1.0 / 3f64.sqrt())).unwrap();
        let mesh = Arc::new(build_ring_mesh(&dom, 0.05, 0.5).unwrap());
        let field = solve_p_capacitary(mesh, 2.0, &SolverConfig::default()).unwrap();
        let alpha = field
            .boundary_decay_probe(Point::new(0.0, 0.0), 0.4)
            .unwrap();
        assert!((alpha - 3.0).abs() / 3.0 <= 0.15, "corner slope {alpha}");
    }

    #[test]
    fn invalid_p_rejected() {
        let dom = annulus_domain();
        let mesh = Arc::new(build_ring_mesh(&dom, 0.1, 1.0).unwrap());
        assert!(solve_p_capacitary(mesh, 1.0, &SolverConfig::default()).is_err());
    }
}
