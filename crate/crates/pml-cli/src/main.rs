//! `pml` — batch pipelines over the p-harmonic measure laboratory:
//! domain construction, capacitary solves, boundary measures, dimension
//! reports, conformal maps, verification artifacts and plot bundles.

mod plots;
mod report;
mod verify;

use clap::{Args, Parser, Subcommand};
use pml_core::error::Error;
use pml_core::fem::{build_ring_mesh, solve_p_capacitary, SolverConfig};
use pml_core::geometry::{DomainSpec, Point};
use pml_core::{conformal, dimension, measure};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "pml", version, about = "p-harmonic measure laboratory")]
struct Cli {
    /// Worker threads (default: PML_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// key = value file supplying defaults for numeric flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a domain spec file.
    Domain(DomainArgs),
    /// Solve the p-capacitary problem on a domain.
    Solve(SolveArgs),
    /// Extract the boundary measure of a solved field.
    Measure(MeasureArgs),
    /// Estimate local dimensions of a boundary measure.
    Dimension(DimensionArgs),
    /// Build the half-plane conformal map of a domain.
    Conformal(ConformalArgs),
    /// Run verification checks, writing JSON artifacts.
    #[command(subcommand)]
    Verify(verify::VerifyCommand),
    /// Bundle artifacts from a directory into tables and SVG plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct DomainArgs {
    /// koch | regular_ngon | polygon
    #[arg(long)]
    kind: String,
    /// Prefractal level (koch) or vertex count (regular_ngon).
    #[arg(long)]
    level: Option<u32>,
    /// Side length (koch) or circumradius (regular_ngon).
    #[arg(long)]
    side: Option<f64>,
    /// Basepoint "x,y"; defaults to the centroid.
    #[arg(long)]
    basepoint: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    grading: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    arcs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DimensionArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Smallest ladder radius; default 4.5 arc lengths.
    #[arg(long)]
    rmin: Option<f64>,
    /// Largest ladder radius; default an eighth of the diameter.
    #[arg(long)]
    rmax: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConformalArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding pipeline artifacts.
    #[arg(long)]
    all: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's version/help paths exit cleanly.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("PML_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let config = match cli.config.as_deref().map(load_config).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => fail(e),
    };
    if let Err(e) = run(cli.command, &config) {
        fail(e);
    }
}

fn fail(e: Error) -> ! {
    eprintln!("pml: {e}");
    std::process::exit(e.exit_code());
}

#[derive(Default)]
struct Config(std::collections::HashMap<String, String>);

impl Config {
    fn get_f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(|v| v.parse().ok())
    }
    fn get_usize(&self, key: &str) -> Option<usize> {
        self.0.get(key).and_then(|v| v.parse().ok())
    }
}

fn load_config(path: &Path) -> Result<Config, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut map = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Format(format!("config line {line:?} is not key = value")));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(Config(map))
}

pub(crate) fn env_seed_pub() -> Option<u64> {
    std::env::var("PML_SEED").ok().and_then(|v| v.parse().ok())
}

/// Writes bytes atomically: a temp file in the target directory, then a
/// rename, so failed stages never leave partial output.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_point(text: &str) -> Result<Point, Error> {
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| Error::Format(format!("expected \"x,y\", got {text:?}")))?;
    Ok(Point::new(
        x.trim().parse().map_err(|_| Error::Format(format!("bad coordinate {x:?}")))?,
        y.trim().parse().map_err(|_| Error::Format(format!("bad coordinate {y:?}")))?,
    ))
}

pub(crate) fn load_domain_spec(path: &Path) -> Result<DomainSpec, Error> {
    DomainSpec::from_json(&std::fs::read_to_string(path)?)
}

pub(crate) fn load_field(path: &Path) -> Result<pml_core::fem::PHField, Error> {
    let mut file = std::fs::File::open(path)?;
    pml_core::fem::read_field(&mut file)
}

pub(crate) fn load_map(path: &Path) -> Result<conformal::HalfPlaneMap, Error> {
    let mut file = std::fs::File::open(path)?;
    conformal::read_map(&mut file)
}

pub(crate) fn load_measure(path: &Path) -> Result<measure::BoundaryMeasure, Error> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    measure::read_measure(&mut reader)
}

fn run(command: Command, config: &Config) -> Result<(), Error> {
    match command {
        Command::Domain(args) => {
            let spec = DomainSpec {
                kind: args.kind,
                level: args.level,
                side: args.side,
                vertices: None,
                basepoint: match args.basepoint.as_deref() {
                    Some(text) => {
                        let p = parse_point(text)?;
                        Some([p.x, p.y])
                    }
                    None => None,
                },
            };
            // Validate before writing.
            let domain = spec.to_domain()?;
            let spec = DomainSpec {
                basepoint: Some([domain.basepoint().x, domain.basepoint().y]),
                ..spec
            };
            atomic_write(&args.out, spec.to_json().as_bytes())?;
            println!(
                "domain {} vertices, inner radius {:.6} -> {}",
                domain.boundary().len(),
                domain.inner_radius(),
                args.out.display()
            );
            Ok(())
        }
        Command::Solve(args) => {
            let p = args.p.or(config.get_f64("p")).unwrap_or(2.0);
            let h = args.h.or(config.get_f64("h")).unwrap_or(0.02);
            let grading = args.grading.or(config.get_f64("grading")).unwrap_or(1.0);
            let spec = load_domain_spec(&args.domain)?;
            let domain = spec.to_domain()?;
            let mesh = Arc::new(build_ring_mesh(&domain, h, grading)?);
            let mut cfg = SolverConfig::default();
            if let Some(eps) = args.epsilon.or(config.get_f64("epsilon")) {
                cfg.epsilon = eps;
            }
            let field = solve_p_capacitary(mesh, p, &cfg)?;
            let mut bytes = Vec::new();
            pml_core::fem::write_field(&field, &spec, &mut bytes)?;
            atomic_write(&args.out, &bytes)?;
            println!(
                "solved p={p} on {} nodes, residual {:.2e}, energy {:.6} -> {}",
                field.mesh.node_count(),
                field.residual,
                field.energy,
                args.out.display()
            );
            Ok(())
        }
        Command::Measure(args) => {
            let arcs = args.arcs.or(config.get_usize("arcs")).unwrap_or(4096);
            let field = load_field(&args.field)?;
            let m = measure::extract_boundary_measure(&field, arcs)?;
            let mut bytes = Vec::new();
            measure::write_measure(&m, &mut bytes)?;
            atomic_write(&args.out, &bytes)?;
            println!(
                "measure on {} arcs, total {:.6}, clipped {} -> {}",
                m.arc_count(),
                m.total,
                m.clipped,
                args.out.display()
            );
            Ok(())
        }
        Command::Dimension(args) => {
            let samples = args.samples.or(config.get_usize("samples")).unwrap_or(500);
            let seed = args.seed.or(env_seed_pub()).unwrap_or(7);
            let m = load_measure(&args.measure)?;
            let r_max = args
                .rmax
                .or(config.get_f64("rmax"))
                .unwrap_or(m.curve().extent() / 8.0);
            let r_min = args
                .rmin
                .or(config.get_f64("rmin"))
                .unwrap_or((4.5 * m.arc_resolution()).max(r_max / 256.0));
            let profile = dimension::local_dimension_profile(&m, samples, r_min, r_max, seed)?;
            let mut report = dimension::hdim_estimate(&profile.samples)?;
            report.p = m.p;
            report.provenance = m.provenance.clone();
            report.resampled = profile.resampled;
            for g in [
                pml_core::geometry::Gauge::power(1.0).unwrap(),
                pml_core::geometry::Gauge::power(0.5).unwrap(),
            ] {
                report
                    .gauge_verdicts
                    .push(dimension::gauge_comparison(&m, &g, samples.min(200), seed)?);
            }
            atomic_write(&args.out, dimension::report_to_json(&report)?.as_bytes())?;
            println!(
                "dimension report: weighted median {:.4} over {} samples -> {}",
                report.weighted_median,
                report.samples.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Conformal(args) => {
            let resolution = args
                .resolution
                .or(config.get_usize("resolution"))
                .unwrap_or(2048);
            let spec = load_domain_spec(&args.domain)?;
            let domain = spec.to_domain()?;
            let map = conformal::build_riemann_map(&domain, resolution)?;
            let mut bytes = Vec::new();
            conformal::write_map(&map, &spec, &mut bytes)?;
            atomic_write(&args.out, &bytes)?;
            println!(
                "map with {} boundary points, accuracy {:.2e} -> {}",
                map.boundary_points.len(),
                map.accuracy,
                args.out.display()
            );
            Ok(())
        }
        Command::Verify(cmd) => verify::run(cmd, config),
        Command::Report(args) => report::run(&args.all, &args.out),
    }
}
