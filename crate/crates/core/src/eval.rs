//! Reconstruction-error and pairwise-distance comparisons between global
//! PCA, atlas charts and external embeddings.
//!
//! The JSON reports written from these types are described in
//! `docs/report-schema.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{ambient_to_chart, nearest_chart_with_residual, Atlas, Chart};
use crate::cloud::{dot, euclidean, norm, PointCloud};
use crate::error::{Error, Result};
use crate::graph::{geodesic_distances, knn_graph};
use crate::io::{parse_csv_rows, write_row};
use crate::linalg::{center_rows, right_singular_pairs};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_GEODESIC_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBasis {
    pub mean: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl GlobalBasis {
    pub fn d(&self) -> usize {
        self.basis.len()
    }

    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        let off: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.basis.iter().map(|v| dot(&off, v)).collect()
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut off: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for v in &self.basis {
            let c = dot(&off, v);
            off.iter_mut().zip(v).for_each(|(o, vi)| *o -= c * vi);
        }
        norm(&off)
    }
}

/// Top-`d` principal directions of the whole cloud, sign-normalized.
pub fn global_pca(cloud: &PointCloud, d: usize) -> Result<GlobalBasis> {
    let limit = (cloud.len().saturating_sub(1)).min(cloud.dim());
    if d == 0 || d > limit {
        return Err(Error::param(format!(
            "global PCA dimension must be in 1..={limit}, got {d}"
        )));
    }
    let (mean, centered) = center_rows(&cloud.to_matrix());
    let basis = right_singular_pairs(centered).into_iter().take(d).map(|p| p.1).collect();
    Ok(GlobalBasis { mean, basis })
}

pub enum Projector<'a> {
    Global(&'a GlobalBasis),
    /// Each point uses its minimal-residual chart.
    Atlas(&'a Atlas),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(&sorted, 0.5),
            p5: quantile(&sorted, 0.05),
            p95: quantile(&sorted, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub method: String,
    pub d: usize,
    pub errors: Vec<f64>,
    pub summary: Summary,
    /// Atlas projector only: the chart each point was projected onto.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charts: Option<Vec<usize>>,
}

/// Per-point residuals under `projector`. For an atlas the method label
/// defaults to `local-pca` and `d` is the atlas `d_max`.
pub fn reconstruction_errors(cloud: &PointCloud, projector: &Projector<'_>) -> Result<ErrorDistribution> {
    let (method, d, errors, charts) = match projector {
        Projector::Global(g) => {
            if g.mean.len() != cloud.dim() {
                return Err(Error::Input(format!(
                    "global basis lives in R^{}, cloud in R^{}",
                    g.mean.len(),
                    cloud.dim()
                )));
            }
            let errors: Vec<f64> = (0..cloud.len()).into_par_iter().map(|i| g.residual(cloud.point(i))).collect();
            ("global-pca".to_string(), g.d(), errors, None)
        }
        Projector::Atlas(a) => {
            let best: Vec<(usize, f64)> = (0..cloud.len())
                .into_par_iter()
                .map(|i| nearest_chart_with_residual(a, cloud.point(i)))
                .collect::<Result<_>>()?;
            let (charts, errors) = best.into_iter().unzip();
            ("local-pca".to_string(), a.d_max, errors, Some(charts))
        }
    };
    let summary = Summary::of(&errors);
    Ok(ErrorDistribution {
        method,
        d,
        errors,
        summary,
        charts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Geodesic,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Geodesic => "geodesic",
        }
    }
}

/// Coordinates of (some of) the cloud's points under one method, keyed by
/// point row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub label: String,
    pub coords: BTreeMap<usize, Vec<f64>>,
}

impl Representation {
    /// One coordinate row per cloud point, in row order.
    pub fn from_rows(label: impl Into<String>, rows: &[Vec<f64>]) -> Self {
        Representation {
            label: label.into(),
            coords: rows.iter().cloned().enumerate().collect(),
        }
    }

    /// The raw ambient coordinates.
    pub fn identity(cloud: &PointCloud) -> Self {
        Representation {
            label: "ambient".into(),
            coords: cloud.points().map(<[f64]>::to_vec).enumerate().collect(),
        }
    }

    /// Local-PC coordinates of the chart's members.
    pub fn chart(label: impl Into<String>, cloud: &PointCloud, chart: &Chart) -> Result<Self> {
        let mut coords = BTreeMap::new();
        for &m in &chart.members {
            coords.insert(m, ambient_to_chart(chart, cloud.point(m))?.0);
        }
        Ok(Representation {
            label: label.into(),
            coords,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodHistogram {
    pub method: String,
    pub counts: Vec<usize>,
    /// Finite pairs, equal to the total histogram mass.
    pub pair_count: usize,
    /// Disconnected geodesic pairs, left out of the histogram.
    pub infinite_pairs: usize,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdistReport {
    pub neighborhood_id: usize,
    pub metric: Metric,
    pub member_count: usize,
    pub bin_edges: Vec<f64>,
    pub methods: Vec<MethodHistogram>,
}

impl PdistReport {
    pub fn median_of(&self, method: &str) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).and_then(|m| m.median)
    }
}

fn pairwise(points: &[&[f64]], metric: Metric, k: usize) -> Result<Vec<f64>> {
    let m = points.len();
    match metric {
        Metric::Euclidean => {
            let mut out = Vec::with_capacity(m * (m - 1) / 2);
            for a in 0..m {
                for b in a + 1..m {
                    out.push(euclidean(points[a], points[b]));
                }
            }
            Ok(out)
        }
        Metric::Geodesic => {
            let local = PointCloud::from_rows(points)?;
            let graph = knn_graph(&local, k.min(m - 1).max(1))?;
            let ids: Vec<usize> = (0..m).collect();
            let g = geodesic_distances(&graph, &ids)?;
            let mut out = Vec::with_capacity(m * (m - 1) / 2);
            for a in 0..m {
                for b in a + 1..m {
                    out.push(g[(a, b)]);
                }
            }
            Ok(out)
        }
    }
}

/// Histograms of pairwise distances among `neighborhood` for each
/// representation on shared bin edges spanning the pooled finite range.
/// Geodesic distances run over a `k`-NN graph built inside each
/// representation's coordinates of the neighborhood.
pub fn pdist_report(
    neighborhood_id: usize,
    neighborhood: &[usize],
    representations: &[Representation],
    metric: Metric,
    bins: usize,
    geodesic_k: usize,
) -> Result<PdistReport> {
    if bins == 0 {
        return Err(Error::param("histogram needs at least one bin"));
    }
    if neighborhood.len() < 2 {
        return Err(Error::Input("a neighborhood needs at least 2 members for pairwise distances".into()));
    }
    let mut all = Vec::with_capacity(representations.len());
    for rep in representations {
        let mut pts = Vec::with_capacity(neighborhood.len());
        for &m in neighborhood {
            let c = rep.coords.get(&m).ok_or_else(|| {
                Error::Input(format!("representation `{}` has no coordinates for member {m}", rep.label))
            })?;
            pts.push(c.as_slice());
        }
        all.push(pairwise(&pts, metric, geodesic_k)?);
    }
    let finite = all.iter().flatten().copied().filter(|d| d.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(d), h.max(d)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut bin_edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
    bin_edges[bins] = hi;

    let methods = representations
        .iter()
        .zip(all)
        .map(|(rep, dists)| {
            let mut counts = vec![0usize; bins];
            let mut finite: Vec<f64> = dists.iter().copied().filter(|d| d.is_finite()).collect();
            for &d in &finite {
                let b = (((d - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            finite.sort_by(f64::total_cmp);
            MethodHistogram {
                method: rep.label.clone(),
                counts,
                pair_count: finite.len(),
                infinite_pairs: dists.len() - finite.len(),
                median: (!finite.is_empty()).then(|| quantile(&finite, 0.5)),
            }
        })
        .collect();
    Ok(PdistReport {
        neighborhood_id,
        metric,
        member_count: neighborhood.len(),
        bin_edges,
        methods,
    })
}

/// Fraction of reports in which `reference`'s median is at most `other`'s.
/// Reports missing either median are counted as failures.
pub fn locality_fraction(reports: &[PdistReport], reference: &str, other: &str) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    let wins = reports
        .iter()
        .filter(|r| matches!((r.median_of(reference), r.median_of(other)), (Some(a), Some(b)) if a <= b))
        .count();
    wins as f64 / reports.len() as f64
}

/// Per-point 2D coordinates from a CSV of N rows by 2 columns.
pub fn import_embedding(path: &Path, cloud: &PointCloud) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding(&text, cloud.len())
}

pub fn parse_embedding(text: &str, expected_rows: usize) -> Result<Vec<Vec<f64>>> {
    let rows = parse_csv_rows(text)?;
    if rows.len() != expected_rows {
        return Err(Error::Input(format!(
            "embedding has {} rows but the cloud has {expected_rows} points",
            rows.len()
        )));
    }
    rows.into_iter()
        .map(|(line, v)| {
            if v.len() == 2 {
                Ok(v)
            } else {
                Err(Error::Parse {
                    row: line,
                    column: 0,
                    message: format!("embedding rows need 2 columns, got {}", v.len()),
                })
            }
        })
        .collect()
}

pub fn export_embedding(path: &Path, coords: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    for row in coords {
        write_row(&mut out, row);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub schema_version: u32,
    pub cloud_checksum: String,
    pub distributions: Vec<ErrorDistribution>,
}

/// `(reference, other, metric, fraction)` entries of a pairwise report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityEntry {
    pub metric: Metric,
    pub reference: String,
    pub other: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdistSummaryReport {
    pub schema_version: u32,
    pub cloud_checksum: String,
    pub bins: usize,
    pub geodesic_k: usize,
    pub locality: Vec<LocalityEntry>,
    pub neighborhoods: Vec<PdistReport>,
}

/// CSV columns `method,d,point_id,error`.
pub fn reconstruction_csv(cloud: &PointCloud, distributions: &[ErrorDistribution]) -> String {
    let mut out = String::from("method,d,point_id,error\n");
    for dist in distributions {
        for (id, e) in cloud.ids().iter().zip(&dist.errors) {
            let _ = writeln!(out, "{},{},{id},{e}", dist.method, dist.d);
        }
    }
    out
}

/// CSV columns `neighborhood,metric,method,bin_lo,bin_hi,count`.
pub fn pdist_csv(reports: &[PdistReport]) -> String {
    let mut out = String::from("neighborhood,metric,method,bin_lo,bin_hi,count\n");
    for r in reports {
        for m in &r.methods {
            for (b, c) in m.counts.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{c}",
                    r.neighborhood_id,
                    r.metric.as_str(),
                    m.method,
                    r.bin_edges[b],
                    r.bin_edges[b + 1]
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = Summary::of(&v);
        assert_eq!((s.mean, s.median), (3.0, 3.0));
        assert!((s.p5 - 1.2).abs() < 1e-12 && (s.p95 - 4.8).abs() < 1e-12);
    }

    #[test]
    fn global_pca_range_and_rank_one() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, -2.0 * i as f64]).collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        assert!(global_pca(&c, 0).is_err());
        assert!(global_pca(&c, 3).is_err());
        let g = global_pca(&c, 1).unwrap();
        let e = reconstruction_errors(&c, &Projector::Global(&g)).unwrap();
        assert!(e.errors.iter().all(|v| *v < 1e-12));
        assert_eq!(e.method, "global-pca");
    }

    #[test]
    fn two_member_histogram() {
        let rep = Representation::from_rows("a", &[vec![0.0, 0.0], vec![3.0, 4.0]]);
        let rep2 = Representation::from_rows("b", &[vec![0.0], vec![1.0]]);
        let r = pdist_report(0, &[0, 1], &[rep, rep2], Metric::Euclidean, 40, 10).unwrap();
        for m in &r.methods {
            assert_eq!(m.counts.iter().filter(|c| **c > 0).count(), 1);
            assert_eq!(m.pair_count, 1);
        }
        assert_eq!(r.median_of("a"), Some(5.0));
        assert_eq!(r.bin_edges.first(), Some(&1.0));
        assert_eq!(r.bin_edges.last(), Some(&5.0));
    }

    #[test]
    fn missing_member_names_method() {
        let rep = Representation::from_rows("umap", &[vec![0.0, 0.0]]);
        let err = pdist_report(0, &[0, 1], &[rep], Metric::Euclidean, 4, 10).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("umap") && msg.contains("member 1"), "{msg}");
    }

    #[test]
    fn embedding_rows() {
        assert_eq!(parse_embedding("1,2\n3,4\n5,6\n", 3).unwrap().len(), 3);
        assert!(parse_embedding("1,2\n3,4\n", 3).is_err());
        assert!(parse_embedding("1,2,3\n", 1).is_err());
    }
}
