//! On-disk artifacts: trace and objective CSVs, Pareto JSON, overlays and the
//! run manifest.
//!
//! Floats are written in shortest round-trip form, so artifacts produced
//! from identical inputs are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objectives::{self, ObjectivePoint, ObjectiveSource, TheoryParams};
use crate::pareto::{ParamPoint, ParetoSet};
use crate::svg::{Plot, Series, SeriesStyle};
use crate::theory::{self, AnalyticalSolution};

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Format(format!("csv flush: {e}")))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub mean_test_loss: f64,
    pub n_participants: usize,
}

/// `round,mean_test_loss,n_participants` with 1-based rounds.
pub fn trace_csv(loss: &[f64], participants: &[usize]) -> Result<Vec<u8>> {
    if loss.len() != participants.len() {
        return Err(Error::Shape(format!(
            "{} losses but {} participant counts",
            loss.len(),
            participants.len()
        )));
    }
    csv_bytes(
        loss.iter()
            .zip(participants)
            .enumerate()
            .map(|(i, (&l, &n))| TraceRow {
                round: i + 1,
                mean_test_loss: l,
                n_participants: n,
            }),
    )
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    read_csv(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    #[serde(rename = "T")]
    pub rounds: u32,
    pub sigma: f64,
    pub q: f64,
    pub utility: f64,
    pub privacy: f64,
    pub efficiency: f64,
    pub feasible: bool,
}

/// `T,sigma,q,utility,privacy,efficiency,feasible`, one row per point.
pub fn objective_csv(points: &[ObjectivePoint], tp: &TheoryParams) -> Result<Vec<u8>> {
    csv_bytes(points.iter().map(|p| ObjectiveRow {
        rounds: p.origin.rounds,
        sigma: p.origin.sigma,
        q: p.origin.q,
        utility: p.utility,
        privacy: p.privacy,
        efficiency: objectives::efficiency(p.origin.rounds, tp.c_t),
        feasible: tp.is_feasible(p.origin.rounds),
    }))
}

/// Reads an objective table back; infeasible rows are skipped.
pub fn read_objective_csv(path: &Path, source: ObjectiveSource) -> Result<Vec<ObjectivePoint>> {
    let rows: Vec<ObjectiveRow> = read_csv(path)?;
    Ok(rows
        .into_iter()
        .filter(|r| r.feasible)
        .map(|r| {
            ObjectivePoint::new(
                r.utility,
                r.privacy,
                source,
                ParamPoint::new(r.rounds, r.sigma, r.q),
            )
        })
        .collect())
}

/// A Pareto member as stored in Pareto JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    #[serde(rename = "T")]
    pub rounds: u32,
    pub sigma: f64,
    pub q: f64,
    pub utility: f64,
    pub privacy: f64,
}

impl ParetoEntry {
    pub fn origin(&self) -> ParamPoint {
        ParamPoint::new(self.rounds, self.sigma, self.q)
    }
}

pub fn pareto_entries(set: &ParetoSet) -> Vec<ParetoEntry> {
    set.members
        .iter()
        .map(|m| ParetoEntry {
            rounds: m.origin.rounds,
            sigma: m.origin.sigma,
            q: m.origin.q,
            utility: m.utility,
            privacy: m.privacy,
        })
        .collect()
}

pub fn read_pareto_json(path: &Path) -> Result<Vec<ParetoEntry>> {
    read_json(path)
}

/// Written by the `design` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignManifest {
    pub tool_version: String,
    pub k: f64,
    pub q_r: f64,
    #[serde(rename = "K")]
    pub clients: usize,
    pub points: Vec<DesignedPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignedPoint {
    #[serde(rename = "T_r")]
    pub rounds: u32,
    pub sigma_r: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Index of one command's outputs.
///
/// Timings are wall-clock and vary between runs; every other field is
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub files: Vec<ManifestEntry>,
    pub timings: BTreeMap<String, f64>,
}

/// Collects artifacts in memory and commits them together, manifest last.
#[derive(Debug)]
pub struct ArtifactSet {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl ArtifactSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            files: BTreeMap::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn add_json<T: Serialize + ?Sized>(
        &mut self,
        name: impl Into<String>,
        value: &T,
    ) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    /// Writes every file, then `manifest-<command>.json` listing them.
    pub fn commit(
        self,
        command: &str,
        config: serde_json::Value,
        timings: BTreeMap<String, f64>,
    ) -> Result<RunManifest> {
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            write_bytes(&self.dir.join(name), bytes)?;
            entries.push(ManifestEntry {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = RunManifest {
            tool_version: crate::VERSION.into(),
            command: command.into(),
            config,
            files: entries,
            timings,
        };
        write_json(&self.dir.join(manifest_name(command)), &manifest)?;
        Ok(manifest)
    }
}

/// Commands sharing an output directory keep separate manifests.
pub fn manifest_name(command: &str) -> String {
    format!("manifest-{command}.json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Checks every file listed in `dir`'s manifest for `command` exists with
/// the recorded digest.
pub fn verify_manifest(dir: &Path, command: &str) -> Result<RunManifest> {
    let manifest: RunManifest = read_json(&dir.join(manifest_name(command)))?;
    for entry in &manifest.files {
        let path = dir.join(&entry.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Format(format!(
                "{} does not match manifest",
                entry.path
            )));
        }
    }
    Ok(manifest)
}

pub const SERIES_EXPERIMENTAL: &str = "experimental";
pub const SERIES_THEORETICAL: &str = "theoretical";

/// One point of the `(T, σ)` overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlayRow {
    pub series: &'static str,
    #[serde(rename = "T")]
    pub rounds: u32,
    pub sigma: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub experimental: Vec<ParamPoint>,
    pub theoretical: Vec<ParamPoint>,
    /// Median of `|k·σ²·T − q·K| / (q·K)` over experimental points.
    pub median_residual: f64,
}

impl Overlay {
    pub fn rows(&self) -> Vec<OverlayRow> {
        let tag = |series| {
            move |p: &ParamPoint| OverlayRow {
                series,
                rounds: p.rounds,
                sigma: p.sigma,
                q: p.q,
            }
        };
        self.experimental
            .iter()
            .map(tag(SERIES_EXPERIMENTAL))
            .chain(self.theoretical.iter().map(tag(SERIES_THEORETICAL)))
            .collect()
    }

    pub fn csv(&self) -> Result<Vec<u8>> {
        csv_bytes(self.rows())
    }

    /// Experimental points as a scatter, each theoretical `q` as a line.
    pub fn svg(&self) -> String {
        let xy = |p: &ParamPoint| (f64::from(p.rounds), p.sigma);
        let mut series = vec![Series {
            label: SERIES_EXPERIMENTAL.into(),
            color: "black".into(),
            style: SeriesStyle::Scatter,
            points: self.experimental.iter().map(xy).collect(),
        }];
        let mut start = 0;
        while start < self.theoretical.len() {
            let q = self.theoretical[start].q;
            let end = self.theoretical[start..]
                .iter()
                .position(|p| p.q != q)
                .map_or(self.theoretical.len(), |n| start + n);
            series.push(Series {
                label: if start == 0 {
                    SERIES_THEORETICAL.into()
                } else {
                    format!("{SERIES_THEORETICAL} q={q}")
                },
                color: "green".into(),
                style: SeriesStyle::Line,
                points: self.theoretical[start..end].iter().map(xy).collect(),
            });
            start = end;
        }
        Plot {
            title: format!(
                "Pareto solutions (median residual {:.4})",
                self.median_residual
            ),
            x_label: "T".into(),
            y_label: "sigma".into(),
            series,
        }
        .render()
    }
}

/// Median of `|k·σ²·T − q·K| / (q·K)`.
pub fn median_relative_residual(points: &[ParamPoint], k: f64, clients: usize) -> Option<f64> {
    let mut r: Vec<f64> = points
        .iter()
        .map(|p| (theory::manifold_residual(p, k, clients) / (p.q * clients as f64)).abs())
        .filter(|r| !r.is_nan())
        .collect();
    if r.is_empty() {
        return None;
    }
    r.sort_by(f64::total_cmp);
    let n = r.len();
    Some(if n % 2 == 1 {
        r[n / 2]
    } else {
        0.5 * (r[n / 2 - 1] + r[n / 2])
    })
}

/// Experimental Pareto origins against the analytical solution curves, one
/// per distinct `q` among the members.
pub fn overlay(
    members: &[ParamPoint],
    k: f64,
    clients: usize,
    sigma_max: Option<f64>,
    t_max: u32,
) -> Result<Overlay> {
    if members.is_empty() {
        return Err(Error::Config(
            "Pareto set is empty; nothing to report".into(),
        ));
    }
    let mut experimental = members.to_vec();
    experimental.sort_by(|a, b| a.grid_cmp(b));
    let mut qs: Vec<f64> = experimental.iter().map(|p| p.q).collect();
    qs.dedup();
    let mut theoretical = Vec::new();
    for q in qs {
        let sol: AnalyticalSolution =
            theory::analytical_solutions(q, clients, k, sigma_max, t_max)?;
        theoretical.extend(
            sol.rows()
                .into_iter()
                .map(|r| ParamPoint::new(r.rounds, r.sigma, q)),
        );
    }
    let median_residual = median_relative_residual(&experimental, k, clients)
        .ok_or_else(|| Error::Config("no finite residuals".into()))?;
    Ok(Overlay {
        experimental,
        theoretical,
        median_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_csv_format() {
        let bytes = trace_csv(&[0.5, 0.25], &[3, 3]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "round,mean_test_loss,n_participants\n1,0.5,3\n2,0.25,3\n"
        );
        assert!(trace_csv(&[0.5], &[]).is_err());
    }

    #[test]
    fn objective_csv_round_trip() {
        let tp = TheoryParams {
            k: 25.0,
            clients: 10,
            c_t: 2.0,
            eff_budget: 4.0,
        };
        let pts = [
            ObjectivePoint::new(
                0.1,
                3.0,
                ObjectiveSource::Empirical,
                ParamPoint::new(2, 0.1, 0.5),
            ),
            ObjectivePoint::new(
                0.2,
                1.0,
                ObjectiveSource::Empirical,
                ParamPoint::new(3, 0.1, 0.5),
            ),
        ];
        let bytes = objective_csv(&pts, &tp).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with(
            "T,sigma,q,utility,privacy,efficiency,feasible\n2,0.1,0.5,0.1,3.0,4.0,true\n"
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.csv");
        fs::write(&path, bytes).unwrap();
        let back = read_objective_csv(&path, ObjectiveSource::Empirical).unwrap();
        assert_eq!(back, pts[..1]);
    }

    #[test]
    fn manifest_lists_existing_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = ArtifactSet::new(dir.path().join("run"));
        set.add("a.csv", b"x\n1\n".to_vec());
        set.add_json("b.json", &[1, 2]).unwrap();
        let m = set
            .commit("test", serde_json::json!({}), BTreeMap::new())
            .unwrap();
        assert_eq!(m.files.len(), 2);
        let back = verify_manifest(&dir.path().join("run"), "test").unwrap();
        assert_eq!(back, m);
        fs::write(dir.path().join("run/a.csv"), "tampered").unwrap();
        assert!(verify_manifest(&dir.path().join("run"), "test").is_err());
    }

    #[test]
    fn median_residual_values() {
        let pts = [
            ParamPoint::new(40, 0.1, 1.0),
            ParamPoint::new(20, 0.1, 1.0),
            ParamPoint::new(80, 0.1, 1.0),
        ];
        // residuals / qK: 0, 0.5, 1.0
        assert!((median_relative_residual(&pts, 25.0, 10).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(median_relative_residual(&[], 25.0, 10), None);
    }

    #[test]
    fn overlay_has_both_series() {
        let o = overlay(&[ParamPoint::new(40, 0.1, 1.0)], 25.0, 10, None, 50).unwrap();
        let text = String::from_utf8(o.csv().unwrap()).unwrap();
        assert!(text.contains("experimental,40,0.1,1.0"));
        assert_eq!(text.matches("theoretical").count(), 50);
        assert!(o.svg().contains(">theoretical<"));
        assert!(overlay(&[], 25.0, 10, None, 50).is_err());
    }
}
