//! Force-directed 2D placement of atlas charts and overlap removal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::Atlas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub chart_id: usize,
    pub position: [f64; 2],
    pub render_radius: f64,
}

/// The layout block stored alongside an atlas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub nodes: Vec<LayoutNode>,
    pub iterations: usize,
    pub seed: u64,
    pub collision_sweeps: usize,
    /// Overlapping pairs left when collision removal gave up; 0 normally.
    pub remaining_overlaps: usize,
}

pub const LAYOUT_SCHEMA_VERSION: u32 = 1;

/// Standalone layout file, tied to its source cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub schema_version: u32,
    pub cloud_checksum: String,
    pub layout: Layout,
}

impl LayoutFile {
    pub fn new(cloud_checksum: impl Into<String>, layout: Layout) -> Self {
        LayoutFile {
            schema_version: LAYOUT_SCHEMA_VERSION,
            cloud_checksum: cloud_checksum.into(),
            layout,
        }
    }

    pub fn to_json(&self) -> crate::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let file: LayoutFile = serde_json::from_str(text)?;
        if file.schema_version != LAYOUT_SCHEMA_VERSION {
            return Err(crate::Error::Input(format!(
                "layout schema version {} is not supported (expected {LAYOUT_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceParams {
    pub rest_length: f64,
    pub repulsion: f64,
    pub attraction: f64,
    /// Displacement per unit force before the temperature cap.
    pub step: f64,
    pub initial_temperature: f64,
    pub cooling: f64,
}

impl Default for ForceParams {
    fn default() -> Self {
        ForceParams {
            rest_length: 1.0,
            repulsion: 0.5,
            attraction: 10.0,
            step: 0.05,
            initial_temperature: 1.0,
            cooling: 0.99,
        }
    }
}

impl ForceParams {
    /// Separation at which a lone edge balances its endpoints' repulsion.
    pub fn two_node_equilibrium(&self) -> f64 {
        // repulsion / x = attraction * (x - L)  =>  k x^2 - k L x - c = 0
        let (k, l, c) = (self.attraction, self.rest_length, self.repulsion);
        (k * l + (k * k * l * l + 4.0 * k * c).sqrt()) / (2.0 * k)
    }
}

pub const DEFAULT_ITERATIONS: usize = 300;
pub const MAX_COLLISION_SWEEPS: usize = 200;
const COLLISION_MARGIN: f64 = 1e-7;

/// Unit direction for two coincident nodes, fixed by their indices.
fn tie_direction(i: usize, j: usize) -> [f64; 2] {
    let angle = 2.399_963_229_728_653 * (i * 31 + j) as f64;
    [angle.cos(), angle.sin()]
}

/// Runs the force simulation from explicit starting positions. Forces use
/// only position differences, so translating the input translates the
/// output.
pub fn relax(initial: &[[f64; 2]], edges: &[(usize, usize)], iterations: usize, params: &ForceParams) -> Vec<[f64; 2]> {
    let n = initial.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    adjacency.iter_mut().for_each(|l| {
        l.sort_unstable();
        l.dedup();
    });
    let mut pos = initial.to_vec();
    let mut temperature = params.initial_temperature;
    for _ in 0..iterations {
        let moves: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut f = [0.0, 0.0];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let dx = pos[i][0] - pos[j][0];
                    let dy = pos[i][1] - pos[j][1];
                    let d = (dx * dx + dy * dy).sqrt();
                    let (ux, uy, d) = if d > 1e-12 {
                        (dx / d, dy / d, d)
                    } else {
                        let [x, y] = tie_direction(i.min(j), i.max(j));
                        let s = if i < j { -1.0 } else { 1.0 };
                        (s * x, s * y, 1e-12)
                    };
                    let mut mag = params.repulsion / d.max(1e-3);
                    if adjacency[i].binary_search(&j).is_ok() {
                        mag -= params.attraction * (d - params.rest_length);
                    }
                    f[0] += mag * ux;
                    f[1] += mag * uy;
                }
                let mut step = [f[0] * params.step, f[1] * params.step];
                let len = (step[0] * step[0] + step[1] * step[1]).sqrt();
                if len > temperature {
                    step = [step[0] * temperature / len, step[1] * temperature / len];
                }
                step
            })
            .collect();
        for (p, m) in pos.iter_mut().zip(&moves) {
            p[0] += m[0];
            p[1] += m[1];
        }
        temperature *= params.cooling;
    }
    pos
}

/// `sqrt(member_count)` scaled so the largest chart has radius 1.
pub fn render_radii(atlas: &Atlas) -> Vec<f64> {
    let raw: Vec<f64> = atlas.charts.iter().map(|c| (c.members.len().max(1) as f64).sqrt()).collect();
    let top = raw.iter().copied().fold(0.0, f64::max);
    raw.into_iter().map(|r| r / top).collect()
}

/// Seeded starting positions, uniform in a square of side `2 sqrt(C)`,
/// shifted so their centroid is the origin.
pub fn initial_positions(count: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (count as f64).sqrt();
    let mut pos: Vec<[f64; 2]> = (0..count)
        .map(|_| [rng.random_range(-half..=half), rng.random_range(-half..=half)])
        .collect();
    if count > 0 {
        let cx = pos.iter().map(|p| p[0]).sum::<f64>() / count as f64;
        let cy = pos.iter().map(|p| p[1]).sum::<f64>() / count as f64;
        pos.iter_mut().for_each(|p| {
            p[0] -= cx;
            p[1] -= cy;
        });
    }
    pos
}

/// Force-directed positions for every chart, connected by overlap edges.
pub fn force_layout(atlas: &Atlas, iterations: usize, seed: u64) -> Vec<LayoutNode> {
    force_layout_with(atlas, iterations, seed, &ForceParams::default())
}

pub fn force_layout_with(atlas: &Atlas, iterations: usize, seed: u64, params: &ForceParams) -> Vec<LayoutNode> {
    let edges: Vec<(usize, usize)> = atlas.edges.iter().map(|e| (e.a, e.b)).collect();
    let start = initial_positions(atlas.len(), seed);
    let pos = relax(&start, &edges, iterations, params);
    let radii = render_radii(atlas);
    pos.into_iter()
        .zip(radii)
        .enumerate()
        .map(|(chart_id, (position, render_radius))| LayoutNode {
            chart_id,
            position,
            render_radius,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionOutcome {
    pub nodes: Vec<LayoutNode>,
    pub sweeps: usize,
    pub remaining_overlaps: usize,
}

fn overlapping(a: &LayoutNode, b: &LayoutNode) -> bool {
    let dx = a.position[0] - b.position[0];
    let dy = a.position[1] - b.position[1];
    (dx * dx + dy * dy).sqrt() < a.render_radius + b.render_radius - 1e-6
}

pub fn count_overlaps(nodes: &[LayoutNode]) -> usize {
    let mut count = 0;
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if overlapping(&nodes[i], &nodes[j]) {
                count += 1;
            }
        }
    }
    count
}

/// Scales positions about the box centre when the nodes need more room
/// than their bounding box offers, so dense clusters start unjammed.
fn decompress(nodes: &mut [LayoutNode]) {
    if nodes.len() < 2 || count_overlaps(nodes) == 0 {
        return;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for node in nodes.iter() {
        for k in 0..2 {
            lo[k] = lo[k].min(node.position[k]);
            hi[k] = hi[k].max(node.position[k]);
        }
    }
    let area = (hi[0] - lo[0]).max(1e-9) * (hi[1] - lo[1]).max(1e-9);
    // random arrangements jam well before the square-packing density
    let needed: f64 = nodes.iter().map(|n| 8.0 * n.render_radius * n.render_radius).sum();
    if needed <= area {
        return;
    }
    let scale = (needed / area).sqrt();
    let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    for node in nodes.iter_mut() {
        for k in 0..2 {
            node.position[k] = c[k] + (node.position[k] - c[k]) * scale;
        }
    }
}

/// Pushes overlapping pairs apart symmetrically, sweeping until a sweep
/// moves nothing or `MAX_COLLISION_SWEEPS` is reached. Overcrowded inputs
/// are first spread uniformly about their centre, which keeps the relative
/// arrangement.
pub fn resolve_collisions(nodes: &[LayoutNode]) -> CollisionOutcome {
    let mut nodes = nodes.to_vec();
    decompress(&mut nodes);
    let n = nodes.len();
    let mut sweeps = 0;
    while sweeps < MAX_COLLISION_SWEEPS {
        let mut moved = false;
        for i in 0..n {
            for j in i + 1..n {
                let need = nodes[i].render_radius + nodes[j].render_radius;
                let dx = nodes[j].position[0] - nodes[i].position[0];
                let dy = nodes[j].position[1] - nodes[i].position[1];
                let d = (dx * dx + dy * dy).sqrt();
                if d >= need {
                    continue;
                }
                let (ux, uy) = if d > 1e-12 { (dx / d, dy / d) } else { tie_direction(i, j).into() };
                let push = 0.5 * (need - d) + COLLISION_MARGIN;
                nodes[i].position[0] -= push * ux;
                nodes[i].position[1] -= push * uy;
                nodes[j].position[0] += push * ux;
                nodes[j].position[1] += push * uy;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        sweeps += 1;
    }
    let remaining_overlaps = count_overlaps(&nodes);
    if remaining_overlaps > 0 {
        log::warn!("{remaining_overlaps} overlapping pairs left after {sweeps} collision sweeps");
    }
    CollisionOutcome {
        nodes,
        sweeps,
        remaining_overlaps,
    }
}

/// Force layout followed by collision removal.
pub fn compute_layout(atlas: &Atlas, iterations: usize, seed: u64) -> Layout {
    let nodes = force_layout(atlas, iterations, seed);
    let outcome = resolve_collisions(&nodes);
    Layout {
        nodes: outcome.nodes,
        iterations,
        seed,
        collision_sweeps: outcome.sweeps,
        remaining_overlaps: outcome.remaining_overlaps,
    }
}
