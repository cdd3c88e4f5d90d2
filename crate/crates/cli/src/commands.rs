use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use latmap_core::atlas::build_atlas;
use latmap_core::eval::{
    export_embedding, global_pca, locality_fraction, pdist_csv, pdist_report, reconstruction_csv, reconstruction_errors,
    LocalityEntry, Metric, PdistReport, PdistSummaryReport, Projector, ReconstructionReport, Representation,
    REPORT_SCHEMA_VERSION,
};
use latmap_core::io::{load_point_cloud, save_point_cloud, Format};
use latmap_core::layout::{compute_layout, LayoutFile};
use latmap_core::msvd::{analyze, export_spectrum, parse_spectrum_csv, MsvdParams};
use latmap_core::synth::{generate_detailed, unroll, GeneratorKind, GeneratorSpec};
use latmap_core::{with_workers, Atlas, PointCloud};
use latmap_service::{DatasetConfig, ServiceConfig};
use rayon::prelude::*;
use serde_json::json;

use crate::args::*;
use crate::Failure;

fn load_cloud(path: &Path) -> Result<PointCloud, Failure> {
    Ok(load_point_cloud(path, Format::from_path(path))?)
}

fn load_matching_atlas(path: &Path, cloud: &PointCloud) -> Result<Atlas, Failure> {
    let atlas = Atlas::load(path)?;
    if atlas.cloud_checksum != cloud.checksum() {
        return Err(Failure::Usage(format!("{} was built from a different cloud", path.display())));
    }
    Ok(atlas)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

pub fn generate(a: &GenerateArgs) -> Result<(), Failure> {
    let kind = match a.kind {
        Kind::Sphere => GeneratorKind::Sphere,
        Kind::Linear => GeneratorKind::Linear,
        Kind::SwissRoll => GeneratorKind::SwissRoll,
    };
    if a.embedding_output.is_some() && kind != GeneratorKind::SwissRoll {
        return Err(Failure::Usage("--embedding-output is only available for the swiss roll".into()));
    }
    let spec = GeneratorSpec {
        kind,
        intrinsic_dim: a.k,
        ambient_dim: a.ambient_dim,
        count: a.count,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let g = generate_detailed(&spec)?;
    save_point_cloud(&g.cloud, &a.output, Format::from_path(&a.output))?;
    if let (Some(path), Some(params)) = (&a.embedding_output, &g.parameters) {
        let rows: Vec<Vec<f64>> = unroll(params).iter().map(|p| p.to_vec()).collect();
        export_embedding(path, &rows)?;
    }
    // The file may hold f32 values, so report the checksum of what was written.
    let written = load_cloud(&a.output)?;
    println!(
        "wrote {} points in R^{} to {} (checksum {})",
        written.len(),
        written.dim(),
        a.output.display(),
        written.checksum()
    );
    Ok(())
}

pub fn estimate_dim(a: &EstimateArgs, workers: usize) -> Result<(), Failure> {
    let cloud = load_cloud(&a.input)?;
    let params = MsvdParams {
        epsilon: a.epsilon,
        quad_threshold: a.quad_threshold,
        scales: a.scales,
        centers: a.centers,
        r_min_neighbor: a.r_min_neighbor,
        seed: a.seed,
    };
    let (table, est) = with_workers(workers, || analyze(&cloud, &params))??;
    export_spectrum(&table, &est, &a.spectrum_output)?;
    if a.json {
        print_json(&json!({
            "estimate": est,
            "centers_used": table.centers_used,
            "spectrum": a.spectrum_output,
        }));
    } else {
        println!("k={}", est.k);
        println!(
            "signal={} curvature={} noise={}",
            est.signal_dims.len(),
            est.curvature_dims.len(),
            est.noise_dims.len()
        );
        println!(
            "optimal_range=[{}, {}]{} midpoint={}",
            est.optimal_range[0],
            est.optimal_range[1],
            if est.optimal_range_fallback { " (fallback window)" } else { "" },
            est.optimal_midpoint()
        );
        println!("r_max={} spectrum={}", est.r_max, a.spectrum_output.display());
    }
    Ok(())
}

fn atlas_radius(a: &BuildAtlasArgs, cloud: &PointCloud) -> Result<f64, Failure> {
    if let Some(r) = a.r {
        return Ok(r);
    }
    let Some(path) = &a.spectrum else {
        return Err(Failure::Usage("build-atlas needs --r or --spectrum".into()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let csv = parse_spectrum_csv(&text)?;
    if csv.cloud_checksum.as_deref().is_some_and(|c| c != cloud.checksum()) {
        return Err(Failure::Usage(format!("{} describes a different cloud", path.display())));
    }
    match a.r_rule {
        RadiusRule::Midpoint => csv
            .optimal_range
            .map(|[lo, hi]| 0.5 * (lo + hi))
            .ok_or_else(|| Failure::Usage(format!("{} has no optimal range", path.display()))),
        RadiusRule::RMin => csv
            .radii
            .first()
            .copied()
            .ok_or_else(|| Failure::Usage(format!("{} has no radii", path.display()))),
    }
}

pub fn build(a: &BuildAtlasArgs, workers: usize) -> Result<(), Failure> {
    let cloud = load_cloud(&a.input)?;
    let r = atlas_radius(a, &cloud)?;
    let atlas = with_workers(workers, || build_atlas(&cloud, r, a.dmax, a.seed))??;
    atlas.save(&a.output)?;
    let mut dims = BTreeMap::<usize, usize>::new();
    for c in &atlas.charts {
        *dims.entry(c.d).or_default() += 1;
    }
    if a.json {
        print_json(&json!({
            "radius": r,
            "charts": atlas.len(),
            "edges": atlas.edges.len(),
            "d_max": atlas.d_max,
            "chart_dims": dims,
            "output": a.output,
        }));
    } else {
        let mut hist = String::new();
        for (d, n) in &dims {
            let _ = write!(hist, " d{d}:{n}");
        }
        println!(
            "{} charts, {} edges at r={r} (d_max {}); dims{hist}; wrote {}",
            atlas.len(),
            atlas.edges.len(),
            atlas.d_max,
            a.output.display()
        );
    }
    Ok(())
}

pub fn layout(a: &LayoutArgs, workers: usize) -> Result<(), Failure> {
    let mut atlas = Atlas::load(&a.atlas)?;
    let layout = with_workers(workers, || compute_layout(&atlas, a.iterations, a.seed))?;
    if layout.remaining_overlaps > 0 {
        log::warn!("{} overlapping node pairs remain", layout.remaining_overlaps);
    }
    let file = LayoutFile::new(atlas.cloud_checksum.clone(), layout.clone());
    write(&a.output, &file.to_json()?)?;
    if a.attach {
        atlas.layout = Some(layout.clone());
        atlas.save(&a.atlas)?;
    }
    if a.json {
        print_json(&json!({
            "nodes": layout.nodes.len(),
            "iterations": layout.iterations,
            "collision_sweeps": layout.collision_sweeps,
            "remaining_overlaps": layout.remaining_overlaps,
            "output": a.output,
        }));
    } else {
        println!(
            "{} nodes after {} iterations, {} collision sweeps, {} overlaps left; wrote {}",
            layout.nodes.len(),
            layout.iterations,
            layout.collision_sweeps,
            layout.remaining_overlaps,
            a.output.display()
        );
    }
    Ok(())
}

pub fn eval_recon(a: &EvalReconArgs, workers: usize) -> Result<(), Failure> {
    let cloud = load_cloud(&a.input)?;
    let atlas = load_matching_atlas(&a.atlas, &cloud)?;
    let distributions = with_workers(workers, || -> Result<_, Failure> {
        let mut out = vec![reconstruction_errors(&cloud, &Projector::Atlas(&atlas))?];
        for &d in &a.global_d {
            let g = global_pca(&cloud, d)?;
            out.push(reconstruction_errors(&cloud, &Projector::Global(&g))?);
        }
        Ok(out)
    })??;
    write(&a.csv, &reconstruction_csv(&cloud, &distributions))?;
    let report = ReconstructionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        cloud_checksum: cloud.checksum(),
        distributions,
    };
    write(&a.report, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if a.json {
        let rows: Vec<_> = report
            .distributions
            .iter()
            .map(|d| json!({ "method": d.method, "d": d.d, "summary": d.summary }))
            .collect();
        print_json(&json!({
            "cloud_checksum": report.cloud_checksum,
            "distributions": rows,
            "csv": a.csv,
            "report": a.report,
        }));
    } else {
        println!("{:<12} {:>3} {:>12} {:>12} {:>12} {:>12}", "method", "d", "mean", "median", "p5", "p95");
        for d in &report.distributions {
            let s = &d.summary;
            println!(
                "{:<12} {:>3} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                d.method, d.d, s.mean, s.median, s.p5, s.p95
            );
        }
    }
    Ok(())
}

pub const LOCAL_LABEL: &str = "local-pca";
pub const EMBEDDING_LABEL: &str = "embedding";

pub fn eval_pdist(a: &EvalPdistArgs, workers: usize) -> Result<(), Failure> {
    let cloud = load_cloud(&a.input)?;
    let atlas = load_matching_atlas(&a.atlas, &cloud)?;
    let global_label = format!("global-pca-{}", a.global_d);
    let embedding = a
        .embedding
        .as_deref()
        .map(|p| latmap_core::eval::import_embedding(p, &cloud))
        .transpose()?;

    let reports = with_workers(workers, || -> Result<Vec<PdistReport>, Failure> {
        let g = global_pca(&cloud, a.global_d)?;
        let global_rows: Vec<Vec<f64>> = cloud.points().map(|p| g.coords(p)).collect();
        let mut shared = vec![Representation::from_rows(&global_label, &global_rows)];
        if let Some(rows) = &embedding {
            shared.push(Representation::from_rows(EMBEDDING_LABEL, rows));
        }
        let per_chart: Vec<Vec<PdistReport>> = atlas
            .charts
            .par_iter()
            .filter(|c| c.members.len() >= 2)
            .map(|c| -> Result<_, Failure> {
                let mut reps = vec![Representation::chart(LOCAL_LABEL, &cloud, c)?];
                reps.extend(shared.iter().cloned());
                [Metric::Euclidean, Metric::Geodesic]
                    .into_iter()
                    .map(|m| Ok(pdist_report(c.chart_id, &c.members, &reps, m, a.bins, a.geodesic_k)?))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        Ok(per_chart.into_iter().flatten().collect())
    })??;

    let mut others = vec![global_label.clone()];
    if embedding.is_some() {
        others.push(EMBEDDING_LABEL.to_string());
    }
    let mut locality = Vec::new();
    for metric in [Metric::Euclidean, Metric::Geodesic] {
        let of_metric: Vec<PdistReport> = reports.iter().filter(|r| r.metric == metric).cloned().collect();
        for other in &others {
            locality.push(LocalityEntry {
                metric,
                reference: LOCAL_LABEL.into(),
                other: other.clone(),
                fraction: locality_fraction(&of_metric, LOCAL_LABEL, other),
            });
        }
    }
    write(&a.csv, &pdist_csv(&reports))?;
    let report = PdistSummaryReport {
        schema_version: REPORT_SCHEMA_VERSION,
        cloud_checksum: cloud.checksum(),
        bins: a.bins,
        geodesic_k: a.geodesic_k,
        locality,
        neighborhoods: reports,
    };
    write(&a.report, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let neighborhoods = report.neighborhoods.len() / 2;
    if a.json {
        print_json(&json!({
            "cloud_checksum": report.cloud_checksum,
            "neighborhoods": neighborhoods,
            "locality": report.locality,
            "csv": a.csv,
            "report": a.report,
        }));
    } else {
        println!("{neighborhoods} neighborhoods with at least 2 members");
        for e in &report.locality {
            println!(
                "{:<9} median({}) <= median({}) in {:.1}% of charts",
                e.metric.as_str(),
                e.reference,
                e.other,
                100.0 * e.fraction
            );
        }
    }
    Ok(())
}

pub fn serve(a: &ServeArgs, datasets: Option<toml::Table>) -> Result<(), Failure> {
    let mut config = ServiceConfig::new(DatasetConfig {
        cloud_path: a.cloud_path.clone(),
        atlas_path: a.atlas_path.clone(),
        spectrum_path: a.spectrum_path.clone(),
        layout_path: a.layout_path.clone(),
        history_path: a.history_path.clone(),
    });
    config.host = a.host.clone();
    config.port = a.port;
    config.decoder_url = a.decoder_url.clone();
    config.decoder_timeout_ms = a.decoder_timeout_ms;
    for (name, value) in datasets.unwrap_or_default() {
        if name.is_empty() || name == "api" || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Failure::Usage(format!("invalid dataset name `{name}`")));
        }
        let ds: DatasetConfig = value
            .try_into()
            .map_err(|e| Failure::Usage(format!("config: dataset `{name}`: {e}")))?;
        config.datasets.insert(name, ds);
    }
    latmap_service::run_blocking(&config, |addr| {
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
    })
    .map_err(|e| Failure::Usage(e.to_string()))
}
