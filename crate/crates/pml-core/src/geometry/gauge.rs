use super::Ball;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Gauge families used to build Hausdorff-type covering sums. The
/// double- and triple-log kinds are only defined for radii below 1e-6,
/// where the iterated logarithms stay positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GaugeKind {
    /// `r^alpha`, `alpha > 0`.
    Power { alpha: f64 },
    /// `r * exp(A * sqrt(log(1/r) * log log(1/r)))`.
    LogLog { a: f64 },
    /// `r * exp(A * sqrt(log(1/r) * log log log(1/r)))`.
    LogLogLog { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub kind: GaugeKind,
    /// Radii must stay strictly below this cutoff.
    pub valid_below: f64,
}

/// Cutoff below which `log log log(1/r)` is safely positive.
const ITERATED_LOG_CUTOFF: f64 = 1e-6;

impl Gauge {
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("power gauge needs alpha > 0, got {alpha}")));
        }
        Ok(Gauge {
            kind: GaugeKind::Power { alpha },
            valid_below: f64::INFINITY,
        })
    }

    pub fn log_log(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Domain("loglog gauge needs finite A".into()));
        }
        Ok(Gauge {
            kind: GaugeKind::LogLog { a },
            valid_below: ITERATED_LOG_CUTOFF,
        })
    }

    pub fn log_log_log(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Domain("logloglog gauge needs finite A".into()));
        }
        Ok(Gauge {
            kind: GaugeKind::LogLogLog { a },
            valid_below: ITERATED_LOG_CUTOFF,
        })
    }

    /// Evaluates the gauge at radius `r`, `0 < r <= valid_below`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) || !(r <= self.valid_below) {
            return Err(Error::Domain(format!(
                "gauge radius {r} outside (0, {})",
                self.valid_below
            )));
        }
        let value = match self.kind {
            GaugeKind::Power { alpha } => r.powf(alpha),
            GaugeKind::LogLog { a } => {
                let l = (1.0 / r).ln();
                r * (a * (l * l.ln()).sqrt()).exp()
            }
            GaugeKind::LogLogLog { a } => {
                let l = (1.0 / r).ln();
                r * (a * (l * l.ln().ln()).sqrt()).exp()
            }
        };
        debug_assert!(value > 0.0);
        Ok(value)
    }

    pub fn label(&self) -> String {
        match self.kind {
            GaugeKind::Power { alpha } => format!("power({alpha})"),
            GaugeKind::LogLog { a } => format!("loglog({a})"),
            GaugeKind::LogLogLog { a } => format!("logloglog({a})"),
        }
    }
}

/// Covering sum `sum_i lambda(r_i)` over one candidate cover. The
/// infimum over covers is the caller's search loop.
pub fn covering_sum(g: &Gauge, balls: &[Ball]) -> Result<f64> {
    let mut sum = 0.0;
    for b in balls {
        sum += g.eval(b.radius)?;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn power_one_is_identity() {
        let g = Gauge::power(1.0).unwrap();
        assert_eq!(g.eval(1e-3).unwrap(), 1e-3);
    }

    #[test]
    fn loglog_zero_amplitude_is_identity() {
        let g = Gauge::log_log(0.0).unwrap();
        for r in [1e-7, 1e-9, 1e-12] {
            assert_eq!(g.eval(r).unwrap(), r);
        }
    }

    #[test]
    fn loglog_reference_values() {
        // Frozen from a 30-digit evaluation of r*exp(sqrt(log(1/r)*log log(1/r))).
        let g = Gauge::log_log(1.0).unwrap();
        let v6 = g.eval(1e-6).unwrap();
        assert!((v6 - 4.12819534938494925e-4).abs() / 4.128e-4 < 1e-12);
        let v7 = g.eval(1e-7).unwrap();
        assert!((v7 - 8.07409953760799550e-5).abs() / 8.074e-5 < 1e-12);
        let gm = Gauge::log_log(-1.0).unwrap();
        let v6m = gm.eval(1e-6).unwrap();
        assert!((v6m - 2.42236598650542979e-9).abs() / 2.42e-9 < 1e-12);
    }

    #[test]
    fn logloglog_reference_value() {
        let g = Gauge::log_log_log(1.0).unwrap();
        let v = g.eval(1e-6).unwrap();
        assert!((v - 3.85524765471652123e-5).abs() / 3.855e-5 < 1e-12);
    }

    #[test]
    fn out_of_range_radius_errors() {
        let g = Gauge::log_log(1.0).unwrap();
        assert!(g.eval(1e-5).is_err());
        assert!(g.eval(0.0).is_err());
        assert!(Gauge::power(1.0).unwrap().eval(-1.0).is_err());
    }

    #[test]
    fn monotone_increasing_on_dense_ladder() {
        // d/dr log(lambda) > 0 requires 2*sqrt(L log L) > A*(log L + 1),
        // L = log(1/r); at the 1e-6 cutoff that bounds A by about 3.3.
        for a in [-10.0, -3.0, -1.0, 0.5, 1.0, 3.0] {
            let g = Gauge::log_log(a).unwrap();
            let mut prev = 0.0;
            for k in 0..600 {
                // Dense geometric ladder over (1e-30, 1e-6).
                let r = 1e-30 * (1e24f64).powf(k as f64 / 599.0) * 0.999;
                let v = g.eval(r).unwrap();
                assert!(v > prev, "gauge not increasing at a={a}, r={r}");
                prev = v;
            }
        }
    }

    #[test]
    fn covering_sum_additivity() {
        let g = Gauge::power(1.0).unwrap();
        let b = |r| Ball::new(Point::new(0.0, 0.0), r).unwrap();
        let sum = covering_sum(&g, &[b(0.5e-6), b(0.5e-6)]).unwrap();
        assert!((sum - 1e-6).abs() < 1e-20);
        assert_eq!(covering_sum(&g, &[]).unwrap(), 0.0);
        let gl = Gauge::log_log(1.0).unwrap();
        let single = covering_sum(&gl, &[b(0.99e-6)]).unwrap();
        assert_eq!(single, gl.eval(0.99e-6).unwrap());
        assert!(covering_sum(&gl, &[b(1e-5)]).is_err());
    }
}
