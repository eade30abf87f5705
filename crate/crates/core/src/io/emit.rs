//! Result files: long CSV, summary CSV, JSON manifest and optional SVG figures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::config_echo;
use super::svg::{render, Panel, Series};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, ExperimentKind, ExperimentResult, COMPARISONS};

pub const RECORDS_HEADER: [&str; 6] = ["experiment", "score", "threshold_p", "label", "replicate", "value"];
pub const SUMMARY_HEADER: [&str; 6] = ["experiment", "score", "threshold_p", "label", "stat", "value"];

/// Paths written by [`emit_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
    pub plot: Option<PathBuf>,
}

/// Reals are written with 17 significant digits so that they read back exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = [String; 6]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Write `<experiment>_records.csv`, `<experiment>_summary.csv`,
/// `<experiment>_manifest.json` and, with `plots`, `<experiment>.svg` into `out_dir`.
pub fn emit_results(result: &ExperimentResult, cfg: &ExperimentConfig, out_dir: &Path, plots: bool) -> Result<EmittedFiles> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let name = result.kind.name();
    let records = out_dir.join(format!("{name}_records.csv"));
    let summary = out_dir.join(format!("{name}_summary.csv"));
    let manifest = out_dir.join(format!("{name}_manifest.json"));

    write_csv(
        &records,
        &RECORDS_HEADER,
        result.records.iter().map(|r| {
            [
                name.to_string(),
                r.score.clone(),
                r.threshold_p.clone(),
                r.label.clone(),
                r.replicate.map_or(String::new(), |i| i.to_string()),
                format_value(r.value),
            ]
        }),
    )?;
    write_csv(
        &summary,
        &SUMMARY_HEADER,
        result.summary.iter().map(|r| {
            [
                name.to_string(),
                r.score.clone(),
                r.threshold_p.clone(),
                r.label.clone(),
                r.stat.clone(),
                format_value(r.value),
            ]
        }),
    )?;

    let plot = if plots {
        let path = out_dir.join(format!("{name}.svg"));
        fs::write(&path, figure(result)).map_err(|e| Error::io(&path, e))?;
        Some(path)
    } else {
        None
    };

    let inputs = result
        .inputs
        .iter()
        .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": file_digest(p)? })))
        .collect::<Result<Vec<_>>>()?;
    let config: serde_json::Map<String, serde_json::Value> =
        config_echo(cfg).into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let file_name = |p: &Path| p.file_name().map(|f| f.to_string_lossy().into_owned());
    let doc = json!({
        "tool": "extremescore",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": name,
        "master_seed": result.master_seed,
        "config": config,
        "inputs": inputs,
        "dropped_rows": result.dropped_rows,
        "warnings": result.warnings,
        "files": [file_name(&records), file_name(&summary), plot.as_deref().and_then(file_name)],
        "created_unix_secs": created,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::io(&manifest, e.into()))?;
    fs::write(&manifest, text + "\n").map_err(|e| Error::io(&manifest, e))?;

    Ok(EmittedFiles {
        records,
        summary,
        manifest,
        plot,
    })
}

/// Number after `key=` in a `|`-separated label.
fn label_value(label: &str, key: &str) -> Option<f64> {
    label
        .split('|')
        .find_map(|part| part.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

/// Summary values grouped by `score p=threshold`, in first-seen order.
fn grouped<'a>(
    result: &'a ExperimentResult,
    stat: &str,
    mut point: impl FnMut(&str) -> Option<f64>,
) -> Vec<Series> {
    let mut order: Vec<String> = Vec::new();
    let mut map: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in result.summary.iter().filter(|r| r.stat == stat) {
        if let Some(x) = point(&r.label) {
            let key = format!("{} p={}", r.score, r.threshold_p);
            if !map.contains_key(&key) {
                order.push(key.clone());
            }
            map.entry(key).or_default().push((x, r.value));
        }
    }
    order
        .into_iter()
        .map(|name| {
            let points = map.remove(&name).unwrap_or_default();
            Series { name, points }
        })
        .collect()
}

fn lines(title: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Panel {
    Panel::Lines {
        title: title.into(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        series,
        scatter: false,
        diagonal: false,
    }
}

fn sorted_records(result: &ExperimentResult, matches: impl Fn(&str) -> bool) -> Vec<Series> {
    let mut map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in result.records.iter().filter(|r| matches(&r.label)) {
        let key = format!("{} p={}", r.score, r.threshold_p);
        if !map.contains_key(&key) {
            order.push(key.clone());
        }
        map.entry(key).or_default().push(r.value);
    }
    order
        .into_iter()
        .map(|name| {
            let mut v = map.remove(&name).unwrap_or_default();
            v.sort_by(f64::total_cmp);
            let points = v.into_iter().enumerate().map(|(i, y)| ((i + 1) as f64, y)).collect();
            Series { name, points }
        })
        .collect()
}

/// SVG analogue of the experiment's figure.
pub fn figure(result: &ExperimentResult) -> String {
    let kind = result.kind;
    let panels = match kind {
        ExperimentKind::Benchmark => {
            let nu = |l: &str| label_value(l, "nu");
            let mut quartiles = Vec::new();
            for stat in ["p_q1", "p_median", "p_q3"] {
                for mut s in grouped(result, stat, nu) {
                    s.name = format!("{} {stat}", s.name);
                    quartiles.push(s);
                }
            }
            vec![
                lines("p-value quartiles", "nu", "p-value", quartiles),
                lines("Wilcoxon power", "nu", "power", grouped(result, "power", nu)),
            ]
        }
        ExperimentKind::ScaleThreshold => {
            let sigma = |l: &str| label_value(l, "sigma");
            vec![
                lines("mean score difference", "sigma", "mean", grouped(result, "mean", sigma)),
                lines("sd of score difference", "sigma", "sd", grouped(result, "sd", sigma)),
            ]
        }
        ExperimentKind::PairedScale => {
            let mut cells: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
            let mut order = Vec::new();
            for r in result.summary.iter().filter(|r| r.stat == "mean") {
                if let (Some(k1), Some(k2)) = (label_value(&r.label, "k1"), label_value(&r.label, "k2")) {
                    let key = format!("{} p={}", r.score, r.threshold_p);
                    if !cells.contains_key(&key) {
                        order.push(key.clone());
                    }
                    cells.entry(key).or_default().push((k1, k2, r.value));
                }
            }
            order
                .into_iter()
                .map(|name| {
                    let c = cells.remove(&name).unwrap_or_default();
                    let mut xs: Vec<f64> = c.iter().map(|t| t.0).collect();
                    let mut ys: Vec<f64> = c.iter().map(|t| t.1).collect();
                    for v in [&mut xs, &mut ys] {
                        v.sort_by(f64::total_cmp);
                        v.dedup();
                    }
                    let mut z = vec![vec![f64::NAN; xs.len()]; ys.len()];
                    for (k1, k2, v) in c {
                        let i = xs.iter().position(|&x| x == k1).unwrap_or(0);
                        let j = ys.iter().position(|&y| y == k2).unwrap_or(0);
                        z[j][i] = v;
                    }
                    Panel::Heat {
                        title: format!("{name} combined score"),
                        x_label: "k1".into(),
                        y_label: "k2".into(),
                        xs,
                        ys,
                        z,
                    }
                })
                .collect()
        }
        ExperimentKind::LakesSim => {
            let lakes: Vec<String> = {
                let mut seen = Vec::new();
                for r in &result.summary {
                    if r.stat == "mean" && !seen.contains(&r.label) {
                        seen.push(r.label.clone());
                    }
                }
                seen
            };
            let idx = |l: &str| lakes.iter().position(|x| x == l).map(|i| (i + 1) as f64);
            let mut prop = Vec::new();
            for stat in ["prop_A", "wilson_lo", "wilson_hi"] {
                let mut pts: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
                let mut n: BTreeMap<String, f64> = BTreeMap::new();
                for r in result.summary.iter().filter(|r| r.stat == stat && r.label == "A-B") {
                    let c = n.entry(r.score.clone()).or_insert(0.0);
                    *c += 1.0;
                    pts.entry(r.score.clone()).or_default().push((*c, r.value));
                }
                prop.extend(pts.into_iter().map(|(s, points)| Series {
                    name: format!("{s} {stat}"),
                    points,
                }));
            }
            vec![
                lines(&format!("mean difference by lake ({})", lakes.join(", ")), "lake", "mean", grouped(result, "mean", idx)),
                lines("sd of difference by lake", "lake", "sd", grouped(result, "sd", idx)),
                lines("share preferring model A", "threshold index", "proportion", prop),
            ]
        }
        ExperimentKind::StationEval => COMPARISONS
            .iter()
            .map(|(code, a, b)| {
                let prefix = format!("{code}|");
                lines(
                    &format!("{code}: {a} vs {b}"),
                    "station (sorted)",
                    "mean score difference",
                    sorted_records(result, |l| l.starts_with(&prefix)),
                )
            })
            .collect(),
        ExperimentKind::PermTrend => {
            let orig = sorted_records(result, |l| l == "original");
            let perm = sorted_records(result, |l| l == "permuted 1");
            let series = orig
                .iter()
                .zip(&perm)
                .map(|(o, p)| Series {
                    name: o.name.clone(),
                    points: o.points.iter().zip(&p.points).map(|(a, b)| (b.1, a.1)).collect(),
                })
                .collect();
            vec![Panel::Lines {
                title: "sorted station mean scores".into(),
                x_label: "permuted covariate".into(),
                y_label: "original covariate".into(),
                series,
                scatter: true,
                diagonal: true,
            }]
        }
    };
    render(&format!("{kind} (seed {})", result.master_seed), &panels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_result_gives_headers_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::defaults(ExperimentKind::LakesSim, 5);
        let res = ExperimentResult::new(ExperimentKind::LakesSim, 5);
        let files = emit_results(&res, &cfg, dir.path(), true).unwrap();
        assert_eq!(
            fs::read_to_string(&files.records).unwrap(),
            "experiment,score,threshold_p,label,replicate,value\n"
        );
        assert_eq!(
            fs::read_to_string(&files.summary).unwrap(),
            "experiment,score,threshold_p,label,stat,value\n"
        );
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.manifest).unwrap()).unwrap();
        assert_eq!(manifest["master_seed"], 5);
        assert_eq!(manifest["config"]["k"], "1.5");
        assert!(files.plot.unwrap().exists());
    }

    #[test]
    fn values_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, f64::MIN_POSITIVE] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn labels_parse() {
        assert_eq!(label_value("k1=1.5|k2=0.7", "k2"), Some(0.7));
        assert_eq!(label_value("xi=0.25|ideal", "nu"), None);
    }
}
