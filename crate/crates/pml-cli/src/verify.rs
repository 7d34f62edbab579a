//! Verification artifacts: each subcommand measures one family of
//! inequalities on solved artifacts and writes a JSON record with the
//! raw samples, the measured constants and a pass flag where the check
//! has a fixed gate.

use crate::{atomic_write, load_field, load_map, Config};
use clap::{Args, Subcommand};
use num_complex::Complex64 as Cx;
use pml_core::conformal::{
    self, build_cigar_path, koebe_check, lemma420_integral, lemma47_verify, shifted_box,
};
use pml_core::error::Error;
use pml_core::geometry::{quasihyperbolic_distance, Point};
use pml_core::measure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum VerifyCommand {
    /// Pointwise gradient-ratio statistics of a field.
    Theorem2(FieldArgs),
    /// Level-flux conservation across levels.
    Conservation(FieldArgs),
    /// Measure-versus-supremum comparison at random boundary points.
    Lemma23(FieldArgs),
    /// Koebe sandwich ratios of a map.
    Koebe(MapArgs),
    /// Hyperbolic/quasihyperbolic sandwich on random pairs.
    Sandwich(MapArgs),
    /// Normalized area-integral stability under truncation doubling.
    Lemma420(MapArgs),
    /// Staircase path decay and cigar constant.
    Cigar(MapArgs),
    /// Shifted-box constants, optionally with the field maximum on the
    /// box image.
    Shiftedbox(MapFieldArgs),
    /// Half-value point search over sampled starts.
    Lemma47(MapFieldArgs),
}

#[derive(Args)]
pub struct FieldArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct MapArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct MapFieldArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Artifact<T: Serialize> {
    check: &'static str,
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pass: Option<bool>,
    data: T,
}

#[derive(Serialize, Default)]
struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    map: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
}

fn write_artifact<T: Serialize>(
    out: &PathBuf,
    check: &'static str,
    provenance: Provenance,
    pass: Option<bool>,
    data: T,
) -> Result<(), Error> {
    let artifact = Artifact { check, provenance, pass, data };
    let json =
        serde_json::to_string_pretty(&artifact).map_err(|e| Error::Format(e.to_string()))?;
    atomic_write(out, json.as_bytes())?;
    match pass {
        Some(true) => println!("{check}: PASS -> {}", out.display()),
        Some(false) => println!("{check}: FAIL -> {}", out.display()),
        None => println!("{check}: recorded -> {}", out.display()),
    }
    Ok(())
}

fn rng_for(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Interior points of the ring, drawn by rejection from the bounding box.
fn ring_points(
    domain: &pml_core::geometry::Domain,
    count: usize,
    seed: u64,
    margin: f64,
) -> Vec<Point> {
    let (lo, hi) = domain.boundary().bounding_box();
    let mut rng = rng_for(seed, 0xA11CE);
    let mut out = Vec::with_capacity(count);
    let mut guard = 0usize;
    while out.len() < count && guard < 100_000 {
        guard += 1;
        let p = Point::new(
            lo.x + rng.gen::<f64>() * (hi.x - lo.x),
            lo.y + rng.gen::<f64>() * (hi.y - lo.y),
        );
        if domain.in_ring(p) && domain.distance_to_boundary(p) > margin {
            out.push(p);
        }
    }
    out
}

pub fn run(cmd: VerifyCommand, _config: &Config) -> Result<(), Error> {
    match cmd {
        VerifyCommand::Theorem2(args) => {
            let field = load_field(&args.field)?;
            let count = args.samples.unwrap_or(400);
            let seed = args.seed.or(crate::env_seed_pub()).unwrap_or(3);
            let h_scale = field.mesh.h_max;
            let pts = ring_points(&field.mesh.domain, count, seed, 2.0 * h_scale);
            let stats = field.theorem2_ratio(&pts)?;
            #[derive(Serialize)]
            struct Data {
                p: f64,
                stats: pml_core::fem::RatioStats,
                spread: f64,
            }
            let spread = stats.max / stats.min;
            write_artifact(
                &args.out,
                "theorem2",
                Provenance { field: Some(field.content_hash()), ..Default::default() },
                Some(spread <= 50.0),
                Data { p: field.p, stats, spread },
            )
        }
        VerifyCommand::Conservation(args) => {
            let field = load_field(&args.field)?;
            let levels = [0.2, 0.35, 0.5, 0.65, 0.8];
            let fluxes: Vec<f64> = levels
                .iter()
                .map(|&t| measure::level_flux(&field, t))
                .collect::<Result<_, _>>()?;
            let m = measure::extract_boundary_measure(&field, 1024)?;
            let fmax = fluxes.iter().cloned().fold(f64::MIN, f64::max);
            let fmin = fluxes.iter().cloned().fold(f64::MAX, f64::min);
            let drift = fmax / fmin - 1.0;
            let vs_total = (fluxes[2] - m.total).abs() / m.total;
            #[derive(Serialize)]
            struct Data {
                p: f64,
                levels: Vec<f64>,
                fluxes: Vec<f64>,
                measure_total: f64,
                drift: f64,
                vs_total: f64,
            }
            write_artifact(
                &args.out,
                "conservation",
                Provenance { field: Some(field.content_hash()), ..Default::default() },
                Some(drift <= 0.03 && vs_total <= 0.02),
                Data {
                    p: field.p,
                    levels: levels.to_vec(),
                    fluxes,
                    measure_total: m.total,
                    drift,
                    vs_total,
                },
            )
        }
        VerifyCommand::Lemma23(args) => {
            let field = load_field(&args.field)?;
            let count = args.samples.unwrap_or(50);
            let seed = args.seed.or(crate::env_seed_pub()).unwrap_or(5);
            let m = measure::extract_boundary_measure(&field, 4096)?;
            let curve = field.mesh.domain.boundary().clone();
            let perim = curve.perimeter();
            let diam = curve.extent();
            let r_lo = 4.0 * m.arc_resolution() * 2.0;
            let r_hi = diam / 8.0;
            let mut rng = rng_for(seed, 0x23);
            let mut rows = Vec::new();
            let mut c_needed: f64 = 0.0;
            let mut attempts = 0;
            while rows.len() < count && attempts < 40 * count {
                attempts += 1;
                let w = curve.point_at(rng.gen::<f64>() * perim);
                let r = r_lo * (r_hi / r_lo).powf(rng.gen::<f64>());
                match measure::lemma23_check(&field, &m, w, r) {
                    Ok((left, mid, right)) => {
                        if left > 0.0 && mid > 0.0 && right > 0.0 {
                            c_needed = c_needed.max(left / mid).max(mid / right);
                            rows.push((w.x, w.y, r, left, mid, right));
                        }
                    }
                    Err(_) => continue,
                }
            }
            if rows.len() < count {
                return Err(Error::Sampling(format!(
                    "only {} usable comparison points of {count}",
                    rows.len()
                )));
            }
            #[derive(Serialize)]
            struct Data {
                p: f64,
                rows: Vec<(f64, f64, f64, f64, f64, f64)>,
                c_needed: f64,
            }
            write_artifact(
                &args.out,
                "lemma23",
                Provenance { field: Some(field.content_hash()), ..Default::default() },
                Some(c_needed <= 100.0),
                Data { p: field.p, rows, c_needed },
            )
        }
        VerifyCommand::Koebe(args) => {
            let map = load_map(&args.map)?;
            let count = args.samples.unwrap_or(96);
            let seed = args.seed.or(crate::env_seed_pub()).unwrap_or(11);
            let mut rng = rng_for(seed, 0xC0EBE);
            let mut probes = conformal::default_koebe_probes();
            while probes.len() < count {
                let r = 0.92 * rng.gen::<f64>().sqrt();
                let t = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                probes.push(Point::new(r * t.cos(), r * t.sin()));
            }
            let report = koebe_check(&map, &probes)?;
            let samples: Vec<(f64, f64, f64)> = probes
                .iter()
                .map(|z| {
                    let single = koebe_check(&map, std::slice::from_ref(z)).unwrap();
                    (z.x, z.y, single.min_ratio)
                })
                .collect();
            #[derive(Serialize)]
            struct Data {
                report: conformal::KoebeReport,
                samples: Vec<(f64, f64, f64)>,
            }
            let pass = report.min_ratio >= 0.225 && report.max_ratio <= 1.1;
            write_artifact(
                &args.out,
                "koebe",
                Provenance { map: Some(map.content_hash()), ..Default::default() },
                Some(pass),
                Data { report, samples },
            )
        }
        VerifyCommand::Sandwich(args) => {
            let map = load_map(&args.map)?;
            let pairs = args.samples.unwrap_or(20);
            let seed = args.seed.or(crate::env_seed_pub()).unwrap_or(13);
            let dom = &map.domain;
            let margin = 0.05 * dom.inner_radius();
            let pts = ring_points(dom, 2 * pairs, seed, margin);
            let resolution = dom.inner_radius() / 4.0;
            let mut rows = Vec::new();
            let mut pass = true;
            for k in 0..pairs {
                let (z1, z2) = (pts[2 * k], pts[2 * k + 1]);
                let rho = conformal::hyperbolic_distance(&map, z1, z2)?;
                let q = quasihyperbolic_distance(dom, z1, z2, resolution)?;
                // rho <= Q always; the graph overestimates Q so the
                // upper comparison carries the documented slack.
                if !(rho <= q + 1e-9) || !(q <= 4.0 * rho * 1.2 + 0.75) {
                    pass = false;
                }
                rows.push((z1.x, z1.y, z2.x, z2.y, rho, q));
            }
            #[derive(Serialize)]
            struct Data {
                rows: Vec<(f64, f64, f64, f64, f64, f64)>,
                resolution: f64,
            }
            write_artifact(
                &args.out,
                "sandwich",
                Provenance { map: Some(map.content_hash()), ..Default::default() },
                Some(pass),
                Data { rows, resolution },
            )
        }
        VerifyCommand::Lemma420(args) => {
            let map = load_map(&args.map)?;
            let r_cut = 8.0;
            let v1 = lemma420_integral(&map, Cx::i(), r_cut)?;
            let v2 = lemma420_integral(&map, Cx::i(), 2.0 * r_cut)?;
            let drift = (v2 - v1).abs() / v1;
            #[derive(Serialize)]
            struct Data {
                value: f64,
                value_doubled_cut: f64,
                drift: f64,
            }
            write_artifact(
                &args.out,
                "lemma420",
                Provenance { map: Some(map.content_hash()), ..Default::default() },
                Some(v1.is_finite() && drift <= 0.05),
                Data { value: v1, value_doubled_cut: v2, drift },
            )
        }
        VerifyCommand::Cigar(args) => {
            let map = load_map(&args.map)?;
            let delta = args.delta.unwrap_or(0.2);
            let path = build_cigar_path(&map, Cx::i(), delta, 20)?;
            let max_decay = path
                .decay_ratios
                .iter()
                .cloned()
                .fold(0.0f64, f64::max);
            #[derive(Serialize)]
            struct Data {
                delta: f64,
                levels: usize,
                decay_ratios: Vec<f64>,
                vertical_margins: Vec<f64>,
                c3: f64,
                c_star: f64,
                image: Vec<[f64; 2]>,
            }
            write_artifact(
                &args.out,
                "cigar",
                Provenance { map: Some(map.content_hash()), ..Default::default() },
                Some(path.levels >= 6 && max_decay <= 0.5),
                Data {
                    delta,
                    levels: path.levels,
                    decay_ratios: path.decay_ratios.clone(),
                    vertical_margins: path.vertical_margins.clone(),
                    c3: path.c3,
                    c_star: path.c_star,
                    image: path.image.iter().map(|p| [p.x, p.y]).collect(),
                },
            )
        }
        VerifyCommand::Shiftedbox(args) => {
            let map = load_map(&args.map)?;
            let delta = args.delta.unwrap_or(0.2);
            let sb = shifted_box(&map, Cx::i(), delta)?;
            // Maximum principle surrogate: max u on sigma, when a field
            // is supplied.
            let max_u_on_sigma = match args.field.as_deref() {
                Some(path) => {
                    let field = load_field(&path.to_path_buf())?;
                    Some(
                        sb.sigma
                            .iter()
                            .map(|p| field.extended_value(*p))
                            .fold(0.0f64, f64::max),
                    )
                }
                None => None,
            };
            #[derive(Serialize)]
            struct Data {
                delta: f64,
                x1: f64,
                x2: f64,
                x3: f64,
                h1_sigma_over_d: f64,
                separation_over_d: f64,
                d_w0_sigma_over_d: f64,
                vertical_integrals: [f64; 3],
                #[serde(skip_serializing_if = "Option::is_none")]
                max_u_on_sigma: Option<f64>,
            }
            let pass = sb.h1_sigma / sb.d_a <= 20.0 && sb.d_w0_sigma / sb.d_a >= 1e-3;
            write_artifact(
                &args.out,
                "shiftedbox",
                Provenance { map: Some(map.content_hash()), ..Default::default() },
                Some(pass),
                Data {
                    delta,
                    x1: sb.x1,
                    x2: sb.x2,
                    x3: sb.x3,
                    h1_sigma_over_d: sb.h1_sigma / sb.d_a,
                    separation_over_d: sb.separation / sb.d_a,
                    d_w0_sigma_over_d: sb.d_w0_sigma / sb.d_a,
                    vertical_integrals: sb.vertical_integrals,
                    max_u_on_sigma,
                },
            )
        }
        VerifyCommand::Lemma47(args) => {
            let map = load_map(&args.map)?;
            let field_path = args.field.ok_or_else(|| {
                Error::Domain("lemma47 requires --field".into())
            })?;
            let field = load_field(&field_path)?;
            let count = args.samples.unwrap_or(20);
            let seed = args.seed.or(crate::env_seed_pub()).unwrap_or(3);
            let delta = args.delta.unwrap_or(0.2);
            let dom = &field.mesh.domain;
            let mut rng = rng_for(seed, 0x47);
            let (lo, hi) = dom.boundary().bounding_box();
            let mut rows = Vec::new();
            let mut c_hat: f64 = 0.0;
            let mut attempts = 0usize;
            while rows.len() < count && attempts < 500 * count {
                attempts += 1;
                let z1 = Point::new(
                    lo.x + rng.gen::<f64>() * (hi.x - lo.x),
                    lo.y + rng.gen::<f64>() * (hi.y - lo.y),
                );
                if !dom.in_ring(z1)
                    || z1.dist(dom.basepoint()) <= 1.5 * dom.inner_radius()
                    || dom.distance_to_boundary(z1) < 2.0 * field.mesh.h_max
                {
                    continue;
                }
                let Ok((u1, _)) = field.evaluate(z1) else { continue };
                if !(0.05..0.5).contains(&u1) {
                    continue;
                }
                let out = lemma47_verify(&field, &map, z1, delta, 24)?;
                c_hat = c_hat.max(out.rho);
                rows.push((z1.x, z1.y, out.z_star.x, out.z_star.y, out.rho));
            }
            if rows.len() < count {
                return Err(Error::Sampling(format!(
                    "only {} usable start points of {count}",
                    rows.len()
                )));
            }
            #[derive(Serialize)]
            struct Data {
                p: f64,
                delta: f64,
                rows: Vec<(f64, f64, f64, f64, f64)>,
                c_hat: f64,
            }
            write_artifact(
                &args.out,
                "lemma47",
                Provenance {
                    map: Some(map.content_hash()),
                    field: Some(field.content_hash()),
                    ..Default::default()
                },
                Some(c_hat.is_finite()),
                Data { p: field.p, delta, rows, c_hat },
            )
        }
    }
    .and(Ok(()))
}
