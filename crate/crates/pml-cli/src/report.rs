//! Report bundling: scans a run directory for pipeline artifacts,
//! refuses mixed provenance, and emits a verdict table plus SVG plots.

use crate::{atomic_write, plots};
use pml_core::error::Error;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;

pub fn run(dir: &Path, out: &Path) -> Result<(), Error> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();

    let mut verdicts: Vec<Value> = Vec::new();
    let mut figures: Vec<(String, String)> = Vec::new();
    let mut tables: Vec<(String, Vec<u8>)> = Vec::new();
    // check name -> set of provenance hashes seen per artifact kind.
    let mut provenance_seen: BTreeMap<String, String> = BTreeMap::new();
    let mut track = |kind: &str, hash: &str| -> Result<(), Error> {
        if hash.is_empty() {
            return Ok(());
        }
        match provenance_seen.get(kind) {
            Some(prev) if prev != hash => Err(Error::Format(format!(
                "mixed provenance in bundle: {kind} {prev} vs {hash}"
            ))),
            _ => {
                provenance_seen.insert(kind.to_string(), hash.to_string());
                Ok(())
            }
        }
    };

    for path in &entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "json" => {
                let text = std::fs::read_to_string(path)?;
                let value: Value = match serde_json::from_str(&text) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                if let Some(check) = value.get("check").and_then(|c| c.as_str()) {
                    // Verification artifact.
                    if let Some(prov) = value.get("provenance") {
                        for key in ["field", "map", "domain"] {
                            if let Some(h) = prov.get(key).and_then(|v| v.as_str()) {
                                track(key, h)?;
                            }
                        }
                    }
                    verdicts.push(serde_json::json!({
                        "check": check,
                        "source": name,
                        "pass": value.get("pass").cloned().unwrap_or(Value::Null),
                    }));
                    render_check(&name, check, &value, &mut figures);
                } else if value.get("weighted_median").is_some() {
                    // Dimension report.
                    let prov = value
                        .get("provenance")
                        .and_then(|v| v.as_str())
                        .unwrap_or("");
                    track("field", prov)?;
                    let p = value.get("p").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
                    let slopes: Vec<f64> = value
                        .get("samples")
                        .and_then(|s| s.as_array())
                        .map(|arr| {
                            arr.iter()
                                .filter_map(|s| s.get("slope").and_then(|v| v.as_f64()))
                                .collect()
                        })
                        .unwrap_or_default();
                    figures.push((
                        format!("{name}.localdim.svg"),
                        plots::histogram(
                            &slopes,
                            &format!("local dimension, p = {p}"),
                            "fitted slope",
                            prov,
                        ),
                    ));
                    verdicts.push(serde_json::json!({
                        "check": "dimension",
                        "source": name,
                        "weighted_median": value.get("weighted_median").cloned(),
                        "pass": Value::Null,
                    }));
                }
            }
            "csv" => {
                tables.push((name.clone(), std::fs::read(path)?));
            }
            _ => {}
        }
    }

    if verdicts.is_empty() && tables.is_empty() {
        return Err(Error::Domain(format!(
            "no artifacts found under {}",
            dir.display()
        )));
    }

    std::fs::create_dir_all(out)?;
    for (name, svg) in &figures {
        atomic_write(&out.join(name), svg.as_bytes())?;
    }
    for (name, bytes) in &tables {
        atomic_write(&out.join(name), bytes)?;
    }
    let summary = serde_json::json!({
        "verdicts": verdicts,
        "provenance": provenance_seen,
        "figures": figures.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        "tables": tables.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    atomic_write(
        &out.join("report.json"),
        serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Format(e.to_string()))?
            .as_bytes(),
    )?;
    println!(
        "report: {} verdicts, {} figures, {} tables -> {}",
        verdicts.len(),
        figures.len(),
        tables.len(),
        out.display()
    );
    Ok(())
}

fn render_check(name: &str, check: &str, value: &Value, figures: &mut Vec<(String, String)>) {
    let prov = value
        .get("provenance")
        .map(|p| {
            ["field", "map", "domain"]
                .iter()
                .filter_map(|k| p.get(k).and_then(|v| v.as_str()))
                .collect::<Vec<_>>()
                .join("+")
        })
        .unwrap_or_default();
    let data = &value["data"];
    match check {
        "theorem2" => {
            if let Some(q) = data
                .get("stats")
                .and_then(|s| s.get("quantiles"))
                .and_then(|q| q.as_array())
            {
                let vals: Vec<f64> = q.iter().filter_map(|v| v.as_f64()).collect();
                figures.push((
                    format!("{name}.svg"),
                    plots::histogram(&vals, "gradient ratio quantiles", "R", &prov),
                ));
            }
        }
        "conservation" => {
            let ts = data
                .get("levels")
                .and_then(|v| v.as_array())
                .map(|a| a.iter().filter_map(|v| v.as_f64()).collect::<Vec<_>>())
                .unwrap_or_default();
            let fs = data
                .get("fluxes")
                .and_then(|v| v.as_array())
                .map(|a| a.iter().filter_map(|v| v.as_f64()).collect::<Vec<_>>())
                .unwrap_or_default();
            let series: Vec<(f64, f64)> = ts.into_iter().zip(fs).collect();
            figures.push((
                format!("{name}.svg"),
                plots::line_plot(&series, "level flux", "t", "flux", &prov),
            ));
        }
        "koebe" => {
            if let Some(samples) = data.get("samples").and_then(|v| v.as_array()) {
                let pts: Vec<(f64, f64)> = samples
                    .iter()
                    .filter_map(|row| {
                        let row = row.as_array()?;
                        let x = row.first()?.as_f64()?;
                        let y = row.get(1)?.as_f64()?;
                        let r = row.get(2)?.as_f64()?;
                        Some(((x * x + y * y).sqrt(), r))
                    })
                    .collect();
                figures.push((
                    format!("{name}.svg"),
                    plots::scatter(&pts, "Koebe ratios", "|zeta|", "ratio", &prov),
                ));
            }
        }
        "cigar" => {
            if let Some(img) = data.get("image").and_then(|v| v.as_array()) {
                let path: Vec<[f64; 2]> = img
                    .iter()
                    .filter_map(|p| {
                        let p = p.as_array()?;
                        Some([p.first()?.as_f64()?, p.get(1)?.as_f64()?])
                    })
                    .collect();
                // The outline is not stored in the artifact; plot the
                // path alone on its own extent.
                figures.push((
                    format!("{name}.svg"),
                    plots::path_overlay(&path, &path, "descending path", &prov),
                ));
            }
        }
        _ => {}
    }
}
