//! Ball coverings of a point cloud with one local-PCA chart per ball.
//!
//! Member and center references are row indices into the source cloud.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{dot, norm, PointCloud};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::linalg::{center_rows, right_singular_pairs};

pub const ATLAS_SCHEMA_VERSION: u32 = 1;
/// Cumulative variance fraction that fixes a chart's local dimension.
pub const VARIANCE_FRACTION: f64 = 0.95;
pub const SHRINK_FACTOR: f64 = 0.8;
pub const DEFAULT_D_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub chart_id: usize,
    pub center_id: usize,
    pub radius: f64,
    pub members: Vec<usize>,
    pub mean: Vec<f64>,
    /// `d` orthonormal rows of length `D`, by descending variance.
    pub basis: Vec<Vec<f64>>,
    /// Standard deviation along each basis row.
    pub sing_values: Vec<f64>,
    pub d: usize,
}

impl Chart {
    pub fn ambient_dim(&self) -> usize {
        self.mean.len()
    }

    /// True for charts without any spread (singletons, coincident members).
    pub fn is_degenerate(&self) -> bool {
        self.sing_values.iter().all(|s| *s == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartCoords {
    pub chart_id: usize,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub shared_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atlas {
    pub schema_version: u32,
    pub cloud_checksum: String,
    pub point_count: usize,
    pub dim: usize,
    /// Covering radius the atlas was requested with.
    pub radius: f64,
    pub d_max: usize,
    pub covering_seed: u64,
    pub charts: Vec<Chart>,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
}

impl Atlas {
    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn chart(&self, id: usize) -> Option<&Chart> {
        self.charts.get(id)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Atlas> {
        let atlas: Atlas = serde_json::from_str(text)?;
        if atlas.schema_version != ATLAS_SCHEMA_VERSION {
            return Err(Error::Input(format!(
                "atlas schema version {} is not supported (expected {ATLAS_SCHEMA_VERSION})",
                atlas.schema_version
            )));
        }
        if atlas.charts.iter().enumerate().any(|(i, c)| c.chart_id != i) {
            return Err(Error::Input("chart ids must be dense 0..C-1 in order".into()));
        }
        Ok(atlas)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Atlas> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Atlas::from_json(&text)
    }
}

fn ball(cloud: &PointCloud, center: usize, r: f64) -> Vec<usize> {
    cloud
        .distances_from(center)
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d <= r)
        .map(|(i, _)| i)
        .collect()
}

/// Draws centers from the uncovered pool until every point is covered,
/// marking ball members as covered.
fn cover_pool(cloud: &PointCloud, r: f64, rng: &mut ChaCha8Rng, covered: &mut [bool]) -> Vec<(usize, Vec<usize>)> {
    let mut balls = Vec::new();
    loop {
        let pool: Vec<usize> = (0..covered.len()).filter(|&i| !covered[i]).collect();
        if pool.is_empty() {
            return balls;
        }
        let center = pool[rng.random_range(0..pool.len())];
        let members = ball(cloud, center, r);
        for &m in &members {
            covered[m] = true;
        }
        balls.push((center, members));
    }
}

/// Seeded greedy covering by radius-`r` balls. Only center eligibility is
/// exclusive; memberships of different balls may overlap.
pub fn cover(cloud: &PointCloud, r: f64, seed: u64) -> Result<Vec<(usize, Vec<usize>)>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param(format!("covering radius must be positive and finite, got {r}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = vec![false; cloud.len()];
    Ok(cover_pool(cloud, r, &mut rng, &mut covered))
}

/// Chart plus the uncapped variance dimension.
fn fit(cloud: &PointCloud, center_id: usize, members: Vec<usize>, radius: f64, d_max: usize) -> (Chart, usize) {
    let dim = cloud.dim();
    let degenerate = |mean: Vec<f64>, members: Vec<usize>| {
        let mut e0 = vec![0.0; dim];
        e0[0] = 1.0;
        Chart {
            chart_id: 0,
            center_id,
            radius,
            members,
            mean,
            basis: vec![e0],
            sing_values: vec![0.0],
            d: 1,
        }
    };
    let (mean, centered) = center_rows(&cloud.select(&members));
    let m = members.len();
    if m < 2 {
        return (degenerate(mean, members), 1);
    }
    let pairs = right_singular_pairs(centered);
    let top = pairs.first().map_or(0.0, |p| p.0);
    let tol = top * (m.max(dim) as f64) * f64::EPSILON;
    let pairs: Vec<(f64, Vec<f64>)> = pairs.into_iter().filter(|p| p.0 > tol).collect();
    if pairs.is_empty() {
        return (degenerate(mean, members), 1);
    }
    let total: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let mut acc = 0.0;
    let mut var_dim = pairs.len();
    for (i, p) in pairs.iter().enumerate() {
        acc += p.0 * p.0;
        if acc >= VARIANCE_FRACTION * total * (1.0 - 1e-12) {
            var_dim = i + 1;
            break;
        }
    }
    let d = var_dim.min(d_max);
    let scale = 1.0 / ((m - 1) as f64).sqrt();
    let (sing_values, basis) = pairs.into_iter().take(d).map(|(s, v)| (s * scale, v)).unzip();
    let chart = Chart {
        chart_id: 0,
        center_id,
        radius,
        members,
        mean,
        basis,
        sing_values,
        d,
    };
    (chart, var_dim)
}

/// Local PCA over `members`: the basis keeps the fewest leading directions
/// reaching 95% of the member variance, at most `d_max`. Singleton or
/// spread-free member sets give a one-dimensional chart along `e_0` with a
/// zero singular value.
pub fn fit_chart(cloud: &PointCloud, center_id: usize, members: &[usize], radius: f64, d_max: usize) -> Result<Chart> {
    cloud.check_index(center_id)?;
    if d_max == 0 {
        return Err(Error::param("d_max must be at least 1"));
    }
    if members.is_empty() {
        return Err(Error::Input("a chart needs at least one member".into()));
    }
    for &m in members {
        cloud.check_index(m)?;
    }
    Ok(fit(cloud, center_id, members.to_vec(), radius, d_max).0)
}

/// Fits the ball and shrinks it while its variance dimension exceeds
/// `d_max` and the shrunk ball still holds `d_max + 2` members.
fn fit_shrinking(cloud: &PointCloud, center: usize, members: Vec<usize>, r: f64, d_max: usize) -> Chart {
    let (mut chart, mut var_dim) = fit(cloud, center, members, r, d_max);
    while var_dim > d_max {
        let radius = chart.radius * SHRINK_FACTOR;
        let members = ball(cloud, center, radius);
        if members.len() < d_max + 2 {
            break;
        }
        (chart, var_dim) = fit(cloud, center, members, radius, d_max);
    }
    chart
}

/// Covers the cloud, fits and auto-shrinks one chart per ball, re-covers
/// points orphaned by shrinking and links charts sharing members.
pub fn build_atlas(cloud: &PointCloud, r: f64, d_max: usize, seed: u64) -> Result<Atlas> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param(format!("covering radius must be positive and finite, got {r}")));
    }
    if d_max == 0 {
        return Err(Error::param("d_max must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = vec![false; cloud.len()];
    let mut charts: Vec<Chart> = Vec::new();
    loop {
        let balls = cover_pool(cloud, r, &mut rng, &mut covered);
        if balls.is_empty() {
            break;
        }
        log::debug!("covering round: {} new balls at r={r}", balls.len());
        let fitted: Vec<Chart> = balls
            .into_par_iter()
            .map(|(center, members)| fit_shrinking(cloud, center, members, r, d_max))
            .collect();
        charts.extend(fitted);
        // only points inside a final (possibly shrunk) chart count as covered
        covered.iter_mut().for_each(|c| *c = false);
        for chart in &charts {
            for &m in &chart.members {
                covered[m] = true;
            }
        }
    }
    for (i, chart) in charts.iter_mut().enumerate() {
        chart.chart_id = i;
    }
    let edges = overlap_edges(&charts, cloud.len());
    let shrunk = charts.iter().filter(|c| c.radius < r).count();
    log::info!("atlas: {} charts, {} edges, {shrunk} shrunk", charts.len(), edges.len());
    Ok(Atlas {
        schema_version: ATLAS_SCHEMA_VERSION,
        cloud_checksum: cloud.checksum(),
        point_count: cloud.len(),
        dim: cloud.dim(),
        radius: r,
        d_max,
        covering_seed: seed,
        charts,
        edges,
        layout: None,
    })
}

/// One edge per chart pair with intersecting members, sorted by `(a, b)`.
pub fn overlap_edges(charts: &[Chart], point_count: usize) -> Vec<Edge> {
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); point_count];
    for chart in charts {
        for &m in &chart.members {
            owners[m].push(chart.chart_id);
        }
    }
    let mut shared: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for list in &owners {
        for (i, &a) in list.iter().enumerate() {
            for &b in &list[i + 1..] {
                let key = if a < b { (a, b) } else { (b, a) };
                *shared.entry(key).or_default() += 1;
            }
        }
    }
    shared
        .into_iter()
        .map(|((a, b), shared_count)| Edge { a, b, shared_count })
        .collect()
}

/// `mean + sum_k coeffs[k] * basis[k]`.
pub fn chart_to_ambient(chart: &Chart, coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.len() != chart.d {
        return Err(Error::param(format!(
            "chart {} has d={} but {} coefficients were given",
            chart.chart_id,
            chart.d,
            coeffs.len()
        )));
    }
    let mut x = chart.mean.clone();
    for (c, v) in coeffs.iter().zip(&chart.basis) {
        x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
    }
    Ok(x)
}

/// Coordinates of `x` along the chart basis and the distance from `x` to
/// the chart's affine span.
pub fn ambient_to_chart(chart: &Chart, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.len() != chart.ambient_dim() {
        return Err(Error::Input(format!(
            "vector has length {}, chart lives in R^{}",
            x.len(),
            chart.ambient_dim()
        )));
    }
    Ok(project(chart, x))
}

fn project(chart: &Chart, x: &[f64]) -> (Vec<f64>, f64) {
    let mut offset: Vec<f64> = x.iter().zip(&chart.mean).map(|(a, b)| a - b).collect();
    let coeffs: Vec<f64> = chart.basis.iter().map(|v| dot(&offset, v)).collect();
    for (c, v) in coeffs.iter().zip(&chart.basis) {
        offset.iter_mut().zip(v).for_each(|(o, vi)| *o -= c * vi);
    }
    (coeffs, norm(&offset))
}

/// Chart with the smallest residual for `x` and that residual. Ties go to
/// the smaller chart id.
pub fn nearest_chart_with_residual(atlas: &Atlas, x: &[f64]) -> Result<(usize, f64)> {
    if atlas.is_empty() {
        return Err(Error::Input("atlas has no charts".into()));
    }
    if x.len() != atlas.dim {
        return Err(Error::Input(format!(
            "vector has length {}, atlas lives in R^{}",
            x.len(),
            atlas.dim
        )));
    }
    let residuals: Vec<f64> = atlas.charts.par_iter().map(|c| project(c, x).1).collect();
    let mut best = (0, residuals[0]);
    for (i, &r) in residuals.iter().enumerate().skip(1) {
        if r < best.1 {
            best = (i, r);
        }
    }
    Ok(best)
}

pub fn nearest_chart(atlas: &Atlas, x: &[f64]) -> Result<usize> {
    nearest_chart_with_residual(atlas, x).map(|(id, _)| id)
}
