//! Multiscale SVD estimation of intrinsic dimension.
//!
//! For sampled centers `z` and radii `r`, the members of the ball
//! `X(z, r)` are centered and their singular values (scaled to standard
//! deviations) recorded. Averaging over centers gives one spectrum per
//! scale. Dimensions whose averaged singular value keeps growing at large
//! scales are signal; signal dimensions with dominant quadratic growth are
//! curvature; the rest are noise.
//!
//! Dimension indices in this module are 0-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::linalg::{center_rows, ols_slope, quadratic_fit, singular_values};

/// Strictly ascending positive radii, at least four of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleGrid {
    radii: Vec<f64>,
}

impl ScaleGrid {
    pub const MIN_SCALES: usize = 4;

    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.len() < Self::MIN_SCALES {
            return Err(Error::param(format!(
                "scale grid needs at least {} radii, got {}",
                Self::MIN_SCALES,
                radii.len()
            )));
        }
        if radii.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::param("scale radii must be finite and positive"));
        }
        if radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("scale radii must be strictly ascending"));
        }
        Ok(ScaleGrid { radii })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn largest(&self) -> f64 {
        *self.radii.last().unwrap()
    }
}

impl TryFrom<Vec<f64>> for ScaleGrid {
    type Error = Error;

    fn try_from(radii: Vec<f64>) -> Result<Self> {
        ScaleGrid::new(radii)
    }
}

impl From<ScaleGrid> for Vec<f64> {
    fn from(g: ScaleGrid) -> Self {
        g.radii
    }
}

/// Averaged singular values over a scale grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub grid: ScaleGrid,
    /// `sigma[s][i]`: mean `i`-th singular value at radius `grid[s]`.
    pub sigma: Vec<Vec<f64>>,
    pub centers_used: Vec<usize>,
    /// Smallest neighborhood size met at each scale, skipped centers included.
    pub min_members: Vec<usize>,
    pub cloud_checksum: String,
}

impl SpectrumTable {
    pub fn dim(&self) -> usize {
        self.sigma.first().map_or(0, Vec::len)
    }

    /// `sigma[.][i]` across scales.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.sigma.iter().map(|row| row[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimClass {
    Signal,
    Curvature,
    Noise,
}

impl DimClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DimClass::Signal => "signal",
            DimClass::Curvature => "curvature",
            DimClass::Noise => "noise",
        }
    }
}

impl std::str::FromStr for DimClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal" => Ok(DimClass::Signal),
            "curvature" => Ok(DimClass::Curvature),
            "noise" => Ok(DimClass::Noise),
            other => Err(Error::Input(format!("unknown dimension class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub k: usize,
    /// Retained signal dimensions (curvature already removed).
    pub signal_dims: Vec<usize>,
    pub curvature_dims: Vec<usize>,
    pub noise_dims: Vec<usize>,
    /// Large-scale slope per dimension.
    pub slopes: Vec<f64>,
    /// `a * r_max^2 / sigma_i(r_max)` from the quadratic fit, per dimension.
    pub quadratic_ratio: Vec<f64>,
    pub r_max: f64,
    /// Lower end of the slope window.
    pub r_large: f64,
    pub slope_threshold: f64,
    pub optimal_range: [f64; 2],
    /// True when no scale interval met the optimal-range rule and the slope
    /// window was reported instead.
    pub optimal_range_fallback: bool,
    pub epsilon: f64,
    pub quad_threshold: f64,
}

impl DimEstimate {
    pub fn class_of(&self, i: usize) -> DimClass {
        if self.signal_dims.contains(&i) {
            DimClass::Signal
        } else if self.curvature_dims.contains(&i) {
            DimClass::Curvature
        } else {
            DimClass::Noise
        }
    }

    pub fn optimal_midpoint(&self) -> f64 {
        0.5 * (self.optimal_range[0] + self.optimal_range[1])
    }
}

/// Tunables with the defaults used throughout the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsvdParams {
    pub epsilon: f64,
    pub quad_threshold: f64,
    pub scales: usize,
    pub centers: usize,
    /// Neighbor rank whose median distance sets the smallest radius.
    pub r_min_neighbor: usize,
    pub seed: u64,
}

impl Default for MsvdParams {
    fn default() -> Self {
        MsvdParams {
            epsilon: 0.1,
            quad_threshold: 0.25,
            scales: 24,
            centers: 64,
            r_min_neighbor: 10,
            seed: 0,
        }
    }
}

/// `min_z max_x |x_z - x|` over the sampled centers.
pub fn compute_r_max(cloud: &PointCloud, sample: &[usize]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::param("r_max needs a non-empty center sample"));
    }
    for &z in sample {
        cloud.check_index(z)?;
    }
    Ok(sample
        .par_iter()
        .map(|&z| cloud.distances_from(z).into_iter().fold(0.0, f64::max))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// `count` geometrically spaced radii from `r_min` to `r_max` inclusive.
pub fn build_scale_grid(r_min: f64, r_max: f64, count: usize) -> Result<ScaleGrid> {
    if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
        return Err(Error::param(format!(
            "scale grid needs 0 < r_min < r_max (got r_min={r_min}, r_max={r_max})"
        )));
    }
    if count < ScaleGrid::MIN_SCALES {
        return Err(Error::param(format!(
            "scale grid needs at least {} radii, got {count}",
            ScaleGrid::MIN_SCALES
        )));
    }
    let ratio = (r_max / r_min).ln() / (count - 1) as f64;
    let mut radii: Vec<f64> = (0..count).map(|s| r_min * (ratio * s as f64).exp()).collect();
    radii[0] = r_min;
    radii[count - 1] = r_max;
    ScaleGrid::new(radii)
}

/// Draws `min(N, count)` distinct centers, returned in ascending order.
pub fn sample_centers(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = rand::seq::index::sample(&mut rng, n, count.min(n)).into_vec();
    c.sort_unstable();
    c
}

/// Median over `centers` of the distance to the `rank`-th nearest neighbor.
pub fn median_neighbor_distance(cloud: &PointCloud, centers: &[usize], rank: usize) -> f64 {
    let rank = rank.clamp(1, cloud.len().saturating_sub(1).max(1));
    let mut d: Vec<f64> = centers
        .par_iter()
        .map(|&z| {
            let mut dist = cloud.distances_from(z);
            if dist.len() <= rank {
                return dist.into_iter().fold(0.0, f64::max);
            }
            // index 0 after selection is the center itself (distance 0)
            let (_, kth, _) = dist.select_nth_unstable_by(rank, f64::total_cmp);
            *kth
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Standard-deviation spectrum of the given members, zero-padded to `D`.
fn member_spectrum(cloud: &PointCloud, members: &[usize]) -> Vec<f64> {
    let m = members.len();
    let (_, centered) = center_rows(&cloud.select(members));
    let scale = 1.0 / ((m - 1) as f64).sqrt();
    let mut s: Vec<f64> = singular_values(centered).into_iter().map(|v| v * scale).collect();
    s.resize(cloud.dim(), 0.0);
    s
}

/// Singular values of the centered members of `X(z, r)`, scaled by
/// `1/sqrt(m-1)`, descending, padded with zeros to length `D`.
pub fn local_spectrum(cloud: &PointCloud, z: usize, r: f64) -> Result<Vec<f64>> {
    cloud.check_index(z)?;
    let members: Vec<usize> = cloud
        .distances_from(z)
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d <= r)
        .map(|(i, _)| i)
        .collect();
    if members.len() < 2 {
        return Err(Error::InsufficientNeighborhood {
            members: members.len(),
        });
    }
    Ok(member_spectrum(cloud, &members))
}

/// Per-center spectra at every scale; `None` where the ball has fewer than
/// two members. The second element is the member count.
fn center_spectra(cloud: &PointCloud, z: usize, grid: &ScaleGrid) -> Vec<(usize, Option<Vec<f64>>)> {
    let dist = cloud.distances_from(z);
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut end = 0;
    grid.radii()
        .iter()
        .map(|&r| {
            while end < order.len() && dist[order[end]] <= r {
                end += 1;
            }
            let spectrum = (end >= 2).then(|| member_spectrum(cloud, &order[..end]));
            (end, spectrum)
        })
        .collect()
}

/// Mean local spectrum over `centers` at each radius of `grid`. Centers
/// whose ball has fewer than two members are skipped at that scale.
pub fn average_spectrum(cloud: &PointCloud, centers: &[usize], grid: &ScaleGrid) -> Result<SpectrumTable> {
    if centers.is_empty() {
        return Err(Error::param("average_spectrum needs at least one center"));
    }
    let mut centers: Vec<usize> = centers.to_vec();
    centers.sort_unstable();
    centers.dedup();
    for &z in &centers {
        cloud.check_index(z)?;
    }
    // Collected in center order, then reduced per scale in that order, so
    // the sums do not depend on how rayon split the work.
    let per_center: Vec<Vec<(usize, Option<Vec<f64>>)>> =
        centers.par_iter().map(|&z| center_spectra(cloud, z, grid)).collect();

    let dim = cloud.dim();
    let mut sigma = Vec::with_capacity(grid.len());
    let mut min_members = Vec::with_capacity(grid.len());
    for (s, &r) in grid.radii().iter().enumerate() {
        let mut acc = vec![0.0; dim];
        let mut used = 0usize;
        let mut smallest = usize::MAX;
        for spectra in &per_center {
            let (count, spectrum) = &spectra[s];
            smallest = smallest.min(*count);
            if let Some(v) = spectrum {
                used += 1;
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            }
        }
        if used == 0 {
            return Err(Error::EmptyScale { radius: r });
        }
        acc.iter_mut().for_each(|a| *a /= used as f64);
        sigma.push(acc);
        min_members.push(smallest);
    }
    Ok(SpectrumTable {
        grid: grid.clone(),
        sigma,
        centers_used: centers,
        min_members,
        cloud_checksum: cloud.checksum(),
    })
}

/// Classifies every dimension of `table` and derives `k`.
///
/// The slope of each averaged singular value is fitted over the radii at or
/// above half the largest radius. A dimension is signal when its slope
/// exceeds `epsilon * sigma_top(r_max) / r_max`, with `sigma_top` the
/// largest averaged singular value at `r_max`. Signal dimensions whose
/// quadratic term contributes more than `quad_threshold` of their value at
/// `r_max` are reclassified as curvature.
pub fn estimate_intrinsic_dim(table: &SpectrumTable, epsilon: f64, quad_threshold: f64) -> Result<DimEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !quad_threshold.is_finite() {
        return Err(Error::param("quad_threshold must be finite"));
    }
    let radii = table.grid.radii();
    let s_count = radii.len();
    if s_count < ScaleGrid::MIN_SCALES {
        return Err(Error::param("spectrum table needs at least 4 scales"));
    }
    let dim = table.dim();
    let r_max = table.grid.largest();
    let last = &table.sigma[s_count - 1];

    let mut window_start = radii.iter().position(|&r| r >= 0.5 * r_max).unwrap_or(s_count - 1);
    window_start = window_start.min(s_count - 2);
    let window_r = &radii[window_start..];

    let slopes: Vec<f64> = (0..dim)
        .map(|i| {
            let ys: Vec<f64> = table.sigma[window_start..].iter().map(|row| row[i]).collect();
            ols_slope(window_r, &ys)
        })
        .collect();
    let sigma_top = last.iter().copied().fold(0.0, f64::max);
    let slope_threshold = epsilon * sigma_top / r_max;

    let quadratic_ratio: Vec<f64> = (0..dim)
        .map(|i| {
            let [a, _, _] = quadratic_fit(radii, &table.series(i));
            if last[i] > 0.0 {
                a * r_max * r_max / last[i]
            } else {
                0.0
            }
        })
        .collect();

    let mut signal_dims = Vec::new();
    let mut curvature_dims = Vec::new();
    let mut noise_dims = Vec::new();
    for i in 0..dim {
        if slopes[i] > slope_threshold {
            if quadratic_ratio[i] > quad_threshold {
                curvature_dims.push(i);
            } else {
                signal_dims.push(i);
            }
        } else {
            noise_dims.push(i);
        }
    }
    if signal_dims.is_empty() {
        let reason = if curvature_dims.is_empty() {
            "no singular value grows at large scales".to_string()
        } else {
            format!("all {} growing dimensions look like curvature", curvature_dims.len())
        };
        return Err(Error::DegenerateEstimate { reason });
    }

    let (optimal_range, optimal_range_fallback) =
        match optimal_scale_range(table, &signal_dims, &curvature_dims, &noise_dims, epsilon) {
            Some(range) => (range, false),
            None => ([radii[window_start], r_max], true),
        };

    Ok(DimEstimate {
        k: signal_dims.len(),
        signal_dims,
        curvature_dims,
        noise_dims,
        slopes,
        quadratic_ratio,
        r_max,
        r_large: radii[window_start],
        slope_threshold,
        optimal_range,
        optimal_range_fallback,
        epsilon,
        quad_threshold,
    })
}

/// Widest run of consecutive scales (at least two) where every noise value
/// is below `epsilon * sigma_k` and every curvature value is below the
/// smallest retained signal value. Ties prefer the larger radii.
fn optimal_scale_range(
    table: &SpectrumTable,
    signal: &[usize],
    curvature: &[usize],
    noise: &[usize],
    epsilon: f64,
) -> Option<[f64; 2]> {
    let kth = *signal.last()?;
    let ok: Vec<bool> = table
        .sigma
        .iter()
        .map(|row| {
            let floor = signal.iter().map(|&i| row[i]).fold(f64::INFINITY, f64::min);
            noise.iter().all(|&i| row[i] < epsilon * row[kth]) && curvature.iter().all(|&i| row[i] < floor)
        })
        .collect();
    let mut best: Option<(usize, usize)> = None;
    let mut s = 0;
    while s < ok.len() {
        if !ok[s] {
            s += 1;
            continue;
        }
        let start = s;
        while s + 1 < ok.len() && ok[s + 1] {
            s += 1;
        }
        if s > start && best.is_none_or(|(a, b)| s - start >= b - a) {
            best = Some((start, s));
        }
        s += 1;
    }
    let radii = table.grid.radii();
    best.map(|(a, b)| [radii[a], radii[b]])
}

/// Default pipeline: seeded centers, `r_max` from those centers, a geometric
/// grid from the median `r_min_neighbor`-th neighbor distance, averaging and
/// classification.
pub fn analyze(cloud: &PointCloud, params: &MsvdParams) -> Result<(SpectrumTable, DimEstimate)> {
    if cloud.len() < 3 {
        return Err(Error::Input(format!(
            "dimension estimation needs at least 3 points, got {}",
            cloud.len()
        )));
    }
    let centers = sample_centers(cloud.len(), params.centers.max(1), params.seed);
    let r_max = compute_r_max(cloud, &centers)?;
    let mut r_min = median_neighbor_distance(cloud, &centers, params.r_min_neighbor);
    if !(r_min > 0.0 && r_min < r_max) {
        r_min = 0.25 * r_max;
    }
    let grid = build_scale_grid(r_min, r_max, params.scales)?;
    log::debug!("scale grid {r_min}..{r_max} over {} centers", centers.len());
    let table = average_spectrum(cloud, &centers, &grid)?;
    let estimate = estimate_intrinsic_dim(&table, params.epsilon, params.quad_threshold)?;
    Ok((table, estimate))
}

/// Spectrum CSV: a header `r,sigma_1..sigma_D`, one row per scale, a
/// `class` row, then `#`-prefixed sidecar lines for the optimal range and
/// the estimate parameters.
pub fn format_spectrum_csv(table: &SpectrumTable, estimate: &DimEstimate) -> String {
    let dim = table.dim();
    let mut out = String::from("r");
    for i in 1..=dim {
        let _ = write!(out, ",sigma_{i}");
    }
    out.push('\n');
    for (r, row) in table.grid.radii().iter().zip(&table.sigma) {
        let _ = write!(out, "{r}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out.push_str("class");
    for i in 0..dim {
        let _ = write!(out, ",{}", estimate.class_of(i).as_str());
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "# optimal_range,{},{}",
        estimate.optimal_range[0], estimate.optimal_range[1]
    );
    let _ = writeln!(
        out,
        "# k,{},epsilon,{},quad_threshold,{},r_max,{},r_large,{}",
        estimate.k, estimate.epsilon, estimate.quad_threshold, estimate.r_max, estimate.r_large
    );
    let _ = writeln!(out, "# cloud_checksum,{}", table.cloud_checksum);
    out
}

pub fn export_spectrum(table: &SpectrumTable, estimate: &DimEstimate, sink: &Path) -> Result<()> {
    fs::write(sink, format_spectrum_csv(table, estimate)).map_err(|e| Error::io(sink, e))
}

/// Contents of a spectrum CSV read back.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCsv {
    pub radii: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub classes: Vec<DimClass>,
    pub optimal_range: Option<[f64; 2]>,
    pub cloud_checksum: Option<String>,
}

pub fn parse_spectrum_csv(text: &str) -> Result<SpectrumCsv> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        row: 1,
        column: 0,
        message: "empty spectrum file".into(),
    })?;
    let width = header.split(',').count();
    let mut radii = Vec::new();
    let mut sigma = Vec::new();
    let mut classes = Vec::new();
    let mut optimal_range = None;
    let mut cloud_checksum = None;
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if let Some(rest) = line.strip_prefix("# optimal_range,") {
            let v: Vec<f64> = rest.split(',').filter_map(|f| f.trim().parse().ok()).collect();
            if v.len() == 2 {
                optimal_range = Some([v[0], v[1]]);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("# cloud_checksum,") {
            cloud_checksum = Some(rest.trim().to_string());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if fields.len() != width {
            return Err(Error::Parse {
                row: i + 1,
                column: 0,
                message: format!("expected {width} fields, got {}", fields.len()),
            });
        }
        if fields[0] == "class" {
            classes = fields[1..].iter().map(|f| f.parse()).collect::<Result<_>>()?;
            continue;
        }
        let mut row = Vec::with_capacity(width);
        for (j, f) in fields.iter().enumerate() {
            row.push(f.parse::<f64>().map_err(|_| Error::Parse {
                row: i + 1,
                column: j + 1,
                message: format!("`{f}` is not a number"),
            })?);
        }
        radii.push(row[0]);
        sigma.push(row[1..].to_vec());
    }
    Ok(SpectrumCsv {
        radii,
        sigma,
        classes,
        optimal_range,
        cloud_checksum,
    })
}
