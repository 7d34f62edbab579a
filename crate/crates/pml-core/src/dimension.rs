//! Local-dimension estimation of a boundary measure and gauge-ratio
//! trend diagnostics.

use crate::error::{Error, Result};
use crate::geometry::{Gauge, Point};
use crate::measure::BoundaryMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Mass-scaling record at one boundary sample point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalDimSample {
    pub z: Point,
    /// Dyadic radius ladder, descending from r_max.
    pub r_values: Vec<f64>,
    /// mu(B(z, r)) per ladder radius; nondecreasing in r.
    pub masses: Vec<f64>,
    /// Least-squares slope of log mass against log r.
    pub slope: f64,
    pub fit_residual: f64,
}

impl LocalDimSample {
    /// Weight used in the mu-weighted statistics: mass at the smallest
    /// ladder radius.
    pub fn weight(&self) -> f64 {
        *self.masses.last().unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaugeTrend {
    pub gauge: String,
    /// Set when the requested gauge was out of numeric range and the
    /// identity power gauge was substituted.
    pub substituted: bool,
    pub increasing_fraction: f64,
    pub decreasing_fraction: f64,
    pub flat_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionReport {
    pub samples: Vec<LocalDimSample>,
    pub weighted_median: f64,
    /// Keys p10, p25, p50, p75, p90.
    pub weighted_quantiles: BTreeMap<String, f64>,
    pub gauge_verdicts: Vec<GaugeTrend>,
    pub p: f64,
    pub provenance: String,
    /// Zero-mass windows that were redrawn during sampling.
    pub resampled: usize,
}

pub struct ProfileOutcome {
    pub samples: Vec<LocalDimSample>,
    pub resampled: usize,
}

fn sample_rng(seed: u64, k: u64, attempt: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&k.to_le_bytes());
    key[16..24].copy_from_slice(&attempt.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws one boundary point mu-proportionally.
fn draw_point(m: &BoundaryMeasure, cumulative: &[f64], rng: &mut ChaCha8Rng) -> Point {
    let total = *cumulative.last().unwrap();
    let x: f64 = rng.gen::<f64>() * total;
    let arc = match cumulative
        .binary_search_by(|v| v.partial_cmp(&x).unwrap())
    {
        Ok(i) => (i + 1).min(m.arc_count() - 1),
        Err(i) => i.min(m.arc_count() - 1),
    };
    let (s0, s1) = m.arc_bounds(arc);
    let s = s0 + rng.gen::<f64>() * (s1 - s0);
    m.curve().point_at(s)
}

/// Samples boundary points mu-proportionally and fits the local mass
/// scaling over a dyadic radius ladder.
pub fn local_dimension_profile(
    m: &BoundaryMeasure,
    sample_count: usize,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Result<ProfileOutcome> {
    let arc_res = m.arc_resolution();
    if !(r_min > 4.0 * arc_res) {
        return Err(Error::Resolution(format!(
            "r_min {r_min} must exceed four arc lengths ({})",
            4.0 * arc_res
        )));
    }
    let diam = m.curve().extent();
    if !(r_max < diam / 4.0) {
        return Err(Error::Domain(format!("r_max {r_max} must stay below diam/4 = {}", diam / 4.0)));
    }
    if !(r_max / r_min >= 16.0) {
        return Err(Error::Domain(format!(
            "ladder ratio {} below 16",
            r_max / r_min
        )));
    }
    if m.total <= 0.0 {
        return Err(Error::Sampling("measure has zero total mass".into()));
    }

    let mut ladder = Vec::new();
    let mut r = r_max;
    while r >= r_min {
        ladder.push(r);
        r /= 2.0;
    }

    let mut cumulative = Vec::with_capacity(m.arc_count());
    let mut acc = 0.0;
    for w in &m.weights {
        acc += w;
        cumulative.push(acc);
    }

    let mut samples = Vec::with_capacity(sample_count);
    let mut resampled = 0usize;
    for k in 0..sample_count {
        let mut attempt = 0u64;
        loop {
            let mut rng = sample_rng(seed, k as u64, attempt);
            let z = draw_point(m, &cumulative, &mut rng);
            let masses: Vec<f64> = ladder.iter().map(|&r| m.ball_mass_unchecked(z, r)).collect();
            if masses.iter().any(|&v| v <= 0.0) {
                resampled += 1;
                attempt += 1;
                if attempt > 50 {
                    return Err(Error::Sampling(format!(
                        "sample {k}: no positive-mass window after 50 redraws"
                    )));
                }
                continue;
            }
            for w in masses.windows(2) {
                // Ladder is descending in r, so masses must not increase.
                if w[1] > w[0] + 1e-12 * m.total {
                    return Err(Error::Sampling("ball mass not monotone in r".into()));
                }
            }
            let xs: Vec<f64> = ladder.iter().map(|r| r.ln()).collect();
            let ys: Vec<f64> = masses.iter().map(|v| v.ln()).collect();
            let (slope, fit_residual) = fit_line(&xs, &ys);
            samples.push(LocalDimSample {
                z,
                r_values: ladder.clone(),
                masses,
                slope,
                fit_residual,
            });
            break;
        }
    }
    Ok(ProfileOutcome { samples, resampled })
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, rms)
}

/// mu-weighted median and quantiles of the local slopes.
pub fn hdim_estimate(samples: &[LocalDimSample]) -> Result<DimensionReport> {
    if samples.len() < 30 {
        return Err(Error::Statistics(format!(
            "need at least 30 valid samples, got {}",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].slope.partial_cmp(&samples[b].slope).unwrap());
    let total_w: f64 = samples.iter().map(|s| s.weight()).sum();
    if total_w <= 0.0 {
        return Err(Error::Statistics("all sample weights vanish".into()));
    }
    let quantile = |q: f64| -> f64 {
        let mut acc = 0.0;
        for &i in &order {
            acc += samples[i].weight() / total_w;
            if acc >= q {
                return samples[i].slope;
            }
        }
        samples[*order.last().unwrap()].slope
    };
    let mut weighted_quantiles = BTreeMap::new();
    for (label, q) in [("p10", 0.1), ("p25", 0.25), ("p50", 0.5), ("p75", 0.75), ("p90", 0.9)] {
        weighted_quantiles.insert(label.to_string(), quantile(q));
    }
    Ok(DimensionReport {
        samples: samples.to_vec(),
        weighted_median: quantile(0.5),
        weighted_quantiles,
        gauge_verdicts: Vec::new(),
        p: f64::NAN,
        provenance: String::new(),
        resampled: 0,
    })
}

/// Trend of q_k = mu(B(z, r_k)) / lambda(r_k) as r shrinks, classified
/// by the Spearman rank correlation of q against -r at +-0.5.
pub fn gauge_comparison(
    m: &BoundaryMeasure,
    g: &Gauge,
    sample_count: usize,
    seed: u64,
) -> Result<GaugeTrend> {
    let arc_res = m.arc_resolution();
    let diam = m.curve().extent();
    let r_max = diam / 8.0;
    let r_min = (4.5 * arc_res).max(r_max / 2f64.powi(8));
    if r_max / r_min < 16.0 {
        return Err(Error::Resolution(format!(
            "arc resolution {arc_res} too coarse for a 16x gauge ladder"
        )));
    }
    // The iterated-log gauges are only defined far below any physical
    // arc resolution; fall back to the identity gauge and flag it.
    let (gauge, substituted) = if r_max <= g.valid_below {
        (*g, false)
    } else {
        (Gauge::power(1.0).unwrap(), true)
    };
    let profile = local_dimension_profile(m, sample_count, r_min, r_max, seed)?;
    let mut trend = trend_from_profiles(
        &gauge,
        profile
            .samples
            .iter()
            .map(|s| (s.weight(), s.r_values.as_slice(), s.masses.as_slice())),
    )?;
    trend.substituted = substituted;
    Ok(trend)
}

/// Trend classification over explicit (weight, radii, masses) rows.
/// This is the entry point for synthetic measures with analytically
/// evaluable masses, where the iterated-log gauges are usable directly.
pub fn trend_from_profiles<'a>(
    gauge: &Gauge,
    rows: impl Iterator<Item = (f64, &'a [f64], &'a [f64])>,
) -> Result<GaugeTrend> {
    let mut w_inc = 0.0;
    let mut w_dec = 0.0;
    let mut w_flat = 0.0;
    let mut total = 0.0;
    for (weight, radii, masses) in rows {
        let mut q = Vec::with_capacity(radii.len());
        for (r, mass) in radii.iter().zip(masses) {
            q.push(mass / gauge.eval(*r)?);
        }
        let neg_r: Vec<f64> = radii.iter().map(|r| -r).collect();
        // A rank correlation is +-1 for any strictly monotone drift, so
        // gate it on the ratio sequence actually moving: below a 5%
        // total range the sample is flat.
        let q_lo = q.iter().cloned().fold(f64::MAX, f64::min);
        let q_hi = q.iter().cloned().fold(f64::MIN, f64::max);
        let rho = if q_lo > 0.0 && q_hi / q_lo - 1.0 <= 0.05 {
            0.0
        } else {
            spearman(&q, &neg_r)
        };
        total += weight;
        if rho > 0.5 {
            w_inc += weight;
        } else if rho < -0.5 {
            w_dec += weight;
        } else {
            w_flat += weight;
        }
    }
    if total <= 0.0 {
        return Err(Error::Statistics("no weighted rows for the gauge trend".into()));
    }
    Ok(GaugeTrend {
        gauge: gauge.label(),
        substituted: false,
        increasing_fraction: w_inc / total,
        decreasing_fraction: w_dec / total,
        flat_fraction: w_flat / total,
    })
}

fn ranks(vals: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    let mut out = vec![0.0; vals.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && vals[order[j + 1]] == vals[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..ra.len() {
        let da = ra[i] - ma;
        let db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        // A constant sequence carries no trend.
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

pub fn report_to_json(report: &DimensionReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))
}

pub fn report_from_json(text: &str) -> Result<DimensionReport> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("dimension report: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{regular_ngon, JordanCurve};
    use std::sync::Arc;

    /// Uniform measure on a fine polygonal circle: the exact harmonic
    /// measure of the disk seen from the center.
    fn uniform_disk_measure(radius: f64, arcs: usize) -> BoundaryMeasure {
        let curve = Arc::new(regular_ngon(1024, radius).unwrap());
        let w = curve.perimeter() / arcs as f64;
        BoundaryMeasure::from_arc_weights(curve, vec![w; arcs], 2.0, "uniform".into()).unwrap()
    }

    /// Cantor middle-thirds measure on the bottom side of the unit
    /// square, at triadic level `k`: arcs of length 3^-k, weight 2^-k on
    /// retained intervals.
    fn cantor_measure(level: u32) -> BoundaryMeasure {
        let curve = Arc::new(
            JordanCurve::new(vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ])
            .unwrap(),
        );
        let n_side = 3usize.pow(level);
        let arcs = 4 * n_side;
        let mut weights = vec![0.0; arcs];
        let w = 0.5f64.powi(level as i32);
        // A triadic interval index is retained when no base-3 digit is 1.
        for i in 0..n_side {
            let mut x = i;
            let mut keep = true;
            for _ in 0..level {
                if x % 3 == 1 {
                    keep = false;
                    break;
                }
                x /= 3;
            }
            if keep {
                weights[i] = w;
            }
        }
        BoundaryMeasure::from_arc_weights(curve, weights, 2.0, "cantor".into()).unwrap()
    }

    #[test]
    fn uniform_measure_has_dimension_one() {
        let m = uniform_disk_measure(1.0, 4096);
        let profile = local_dimension_profile(&m, 200, 0.008, 0.45, 7).unwrap();
        let close = profile
            .samples
            .iter()
            .filter(|s| (s.slope - 1.0).abs() <= 0.05)
            .count();
        assert!(
            close as f64 >= 0.9 * profile.samples.len() as f64,
            "only {close}/{} slopes near 1",
            profile.samples.len()
        );
        let report = hdim_estimate(&profile.samples).unwrap();
        assert!((report.weighted_median - 1.0).abs() <= 0.05);
    }

    #[test]
    fn cantor_measure_recovers_log2_over_log3() {
        let m = cantor_measure(7);
        // arc resolution 3^-7 = 4.57e-4; ladder [2.5e-3, 0.33].
        let profile = local_dimension_profile(&m, 150, 2.5e-3, 0.2, 11).unwrap();
        let report = hdim_estimate(&profile.samples).unwrap();
        let d = 2f64.ln() / 3f64.ln();
        assert!(
            (report.weighted_median - d).abs() <= 0.05,
            "median {} vs {d}",
            report.weighted_median
        );
    }

    #[test]
    fn point_mass_has_dimension_zero() {
        let curve = Arc::new(regular_ngon(1024, 1.0).unwrap());
        let mut weights = vec![0.0; 2048];
        weights[0] = 1.0;
        let m = BoundaryMeasure::from_arc_weights(curve, weights, 2.0, "atom".into()).unwrap();
        let profile = local_dimension_profile(&m, 50, 0.014, 0.45, 3).unwrap();
        let report = hdim_estimate(&profile.samples).unwrap();
        assert!(report.weighted_median.abs() <= 0.05);
        // Atom against the identity gauge: q grows without bound.
        let g = Gauge::power(1.0).unwrap();
        let trend = gauge_comparison(&m, &g, 50, 3).unwrap();
        assert_eq!(trend.increasing_fraction, 1.0);
    }

    #[test]
    fn mixture_median_follows_the_heavy_atom() {
        let curve = Arc::new(regular_ngon(1024, 1.0).unwrap());
        let arcs = 2048;
        let uniform_w = 0.1 / arcs as f64;
        let mut weights = vec![uniform_w; arcs];
        weights[100] += 0.9;
        let m = BoundaryMeasure::from_arc_weights(curve, weights, 2.0, "mix".into()).unwrap();
        let profile = local_dimension_profile(&m, 120, 0.014, 0.45, 19).unwrap();
        let report = hdim_estimate(&profile.samples).unwrap();
        assert!(report.weighted_median.abs() <= 0.1, "median {}", report.weighted_median);
    }

    #[test]
    fn gauge_trends_on_uniform_measure() {
        let m = uniform_disk_measure(1.0, 4096);
        let flat = gauge_comparison(&m, &Gauge::power(1.0).unwrap(), 100, 5).unwrap();
        assert!(flat.flat_fraction >= 0.9, "flat {}", flat.flat_fraction);
        // mu(B)/sqrt(r) ~ c sqrt(r) -> 0 as r -> 0: a decreasing trend.
        let dec = gauge_comparison(&m, &Gauge::power(0.5).unwrap(), 100, 5).unwrap();
        assert!(dec.decreasing_fraction >= 0.9, "dec {}", dec.decreasing_fraction);
        // The loglog gauge is out of range here and must substitute.
        let sub = gauge_comparison(&m, &Gauge::log_log(1.0).unwrap(), 50, 5).unwrap();
        assert!(sub.substituted);
    }

    #[test]
    fn loglog_gauge_on_synthetic_masses() {
        // Analytic mass profile mu(B(z,r)) = r at radii inside the
        // iterated-log range: q = r / lambda(r) is monotone there.
        let g = Gauge::log_log(1.0).unwrap();
        let radii: Vec<f64> = (0..8).map(|k| 1e-7 / 2f64.powi(k)).collect();
        let masses: Vec<f64> = radii.clone();
        let rows = [(1.0, radii.as_slice(), masses.as_slice())];
        let trend = trend_from_profiles(&g, rows.into_iter()).unwrap();
        // lambda(r) >> r, and the gap widens as r -> 0.
        assert_eq!(trend.decreasing_fraction, 1.0);
    }

    #[test]
    fn determinism_and_scale_invariance() {
        let m = uniform_disk_measure(1.0, 2048);
        let a = local_dimension_profile(&m, 60, 0.025, 0.45, 42).unwrap();
        let b = local_dimension_profile(&m, 60, 0.025, 0.45, 42).unwrap();
        let ja = serde_json::to_string(&hdim_estimate(&a.samples).unwrap()).unwrap();
        let jb = serde_json::to_string(&hdim_estimate(&b.samples).unwrap()).unwrap();
        assert_eq!(ja, jb);

        let m3 = uniform_disk_measure(3.0, 2048);
        let c = local_dimension_profile(&m3, 60, 3.0 * 0.025, 3.0 * 0.45, 42).unwrap();
        let ma = hdim_estimate(&a.samples).unwrap().weighted_median;
        let mc = hdim_estimate(&c.samples).unwrap().weighted_median;
        assert!((ma - mc).abs() < 1e-6, "{ma} vs {mc}");
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let m = uniform_disk_measure(1.0, 2048);
        let profile = local_dimension_profile(&m, 10, 0.014, 0.45, 1).unwrap();
        assert!(hdim_estimate(&profile.samples).is_err());
    }

    #[test]
    fn ladder_preconditions() {
        let m = uniform_disk_measure(1.0, 64);
        // r_min below four arc lengths (arc length is 2 pi / 64).
        assert!(local_dimension_profile(&m, 10, 0.01, 0.45, 1).is_err());
        // ladder ratio below 16.
        assert!(local_dimension_profile(&m, 10, 0.4, 0.45, 1).is_err());
        // r_max beyond a quarter of the diameter.
        assert!(local_dimension_profile(&m, 10, 0.4, 2.9, 1).is_err());
    }
}
