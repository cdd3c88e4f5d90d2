use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

/// Latent-space atlas pipeline.
///
/// Every flag can also be set in the `--config` TOML file: key `foo_bar`
/// (or `foo-bar`) sets flag `--foo-bar`. Top-level keys apply to every
/// subcommand that has that flag; keys inside a `[subcommand]` table apply to
/// that subcommand only. Flags given on the command line win.
#[derive(Debug, Parser)]
#[command(name = "latmap", version, args_override_self = true)]
pub struct Cli {
    /// TOML file of flag defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Rayon worker threads; 0 uses one per core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Log verbosity: -v info, -vv debug. `RUST_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic manifold cloud.
    Generate(GenerateArgs),
    /// Multiscale spectrum and intrinsic dimension of a cloud.
    EstimateDim(EstimateArgs),
    /// Cover a cloud with local PCA charts.
    BuildAtlas(BuildAtlasArgs),
    /// Force-directed 2D layout of an atlas' chart graph.
    Layout(LayoutArgs),
    /// Reconstruction error of local charts against global PCA.
    EvalRecon(EvalReconArgs),
    /// Pairwise-distance distributions inside each chart, per method.
    EvalPdist(EvalPdistArgs),
    /// Serve an atlas over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Sphere,
    Linear,
    SwissRoll,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Intrinsic dimension k.
    #[arg(long, short = 'k')]
    pub k: usize,
    /// Ambient dimension D.
    #[arg(long)]
    pub ambient_dim: usize,
    /// Number of points N.
    #[arg(long)]
    pub count: usize,
    /// Per-coordinate Gaussian noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `.csv` writes CSV, anything else lgpc.
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Swiss roll only: write the unrolled (arc length, height) coordinates
    /// as a 2-column CSV, usable as a reference 2D embedding.
    #[arg(long)]
    pub embedding_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Signal slope threshold as a fraction of the top sigma per unit radius.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Growth whose quadratic share exceeds this is classed as curvature.
    #[arg(long, default_value_t = 0.25)]
    pub quad_threshold: f64,
    /// Number of radii on the scale grid.
    #[arg(long, default_value_t = 24)]
    pub scales: usize,
    /// Number of sampled centers.
    #[arg(long, default_value_t = 64)]
    pub centers: usize,
    /// Neighbor rank whose median distance is the smallest radius.
    #[arg(long, default_value_t = 10)]
    pub r_min_neighbor: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spectrum CSV destination.
    #[arg(long, default_value = "spectrum.csv")]
    pub spectrum_output: PathBuf,
    /// Print the estimate as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RadiusRule {
    /// Midpoint of the optimal scale range.
    Midpoint,
    /// Smallest radius of the scale grid.
    RMin,
}

#[derive(Debug, Args)]
pub struct BuildAtlasArgs {
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Ball radius. Required unless `--spectrum` is given.
    #[arg(long)]
    pub r: Option<f64>,
    /// Spectrum CSV from `estimate-dim` to take the radius from.
    #[arg(long, conflicts_with = "r")]
    pub spectrum: Option<PathBuf>,
    /// How the radius is read off `--spectrum`.
    #[arg(long, value_enum, default_value_t = RadiusRule::Midpoint)]
    pub r_rule: RadiusRule,
    /// Largest chart dimension.
    #[arg(long, default_value_t = 8)]
    pub dmax: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short = 'o', default_value = "atlas.json")]
    pub output: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    #[arg(long)]
    pub atlas: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short = 'o', default_value = "layout.json")]
    pub output: PathBuf,
    /// Also store the layout inside the atlas file.
    #[arg(long)]
    pub attach: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalReconArgs {
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    #[arg(long)]
    pub atlas: PathBuf,
    /// Global PCA dimensions to compare against, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub global_d: Vec<usize>,
    /// Per-point CSV (`method,d,point_id,error`).
    #[arg(long, default_value = "recon.csv")]
    pub csv: PathBuf,
    /// Report JSON.
    #[arg(long, default_value = "recon.json")]
    pub report: PathBuf,
    /// Print the report summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalPdistArgs {
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    #[arg(long)]
    pub atlas: PathBuf,
    /// Externally produced 2D embedding, one row per point.
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    /// Dimension of the global PCA comparison.
    #[arg(long, default_value_t = 2)]
    pub global_d: usize,
    #[arg(long, default_value_t = latmap_core::eval::DEFAULT_BINS)]
    pub bins: usize,
    /// Neighbor count of the per-representation geodesic graphs.
    #[arg(long, default_value_t = latmap_core::eval::DEFAULT_GEODESIC_K)]
    pub geodesic_k: usize,
    /// Histogram CSV (`neighborhood,metric,method,bin_lo,bin_hi,count`).
    #[arg(long, default_value = "pdist.csv")]
    pub csv: PathBuf,
    #[arg(long, default_value = "pdist.json")]
    pub report: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub cloud_path: PathBuf,
    #[arg(long)]
    pub atlas_path: PathBuf,
    #[arg(long)]
    pub spectrum_path: Option<PathBuf>,
    #[arg(long)]
    pub layout_path: Option<PathBuf>,
    /// Append synthesis history here as JSON lines.
    #[arg(long)]
    pub history_path: Option<PathBuf>,
    #[arg(long, default_value = latmap_service::config::DEFAULT_HOST)]
    pub host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = latmap_service::config::DEFAULT_PORT)]
    pub port: u16,
    /// External decoder; without one `/api/decode` returns a placeholder.
    #[arg(long)]
    pub decoder_url: Option<String>,
    #[arg(long, default_value_t = latmap_service::config::DEFAULT_DECODER_TIMEOUT_MS)]
    pub decoder_timeout_ms: u64,
}

/// Parsed command line plus the `[datasets.*]` tables of the config file,
/// which only `serve` reads.
pub struct Invocation {
    pub cli: Cli,
    pub datasets: Option<toml::Table>,
}

/// Splices config-file values in as flags ahead of the user's own, so the
/// later command-line occurrence wins.
pub fn parse(raw: Vec<OsString>) -> Result<Invocation, clap::Error> {
    let cmd = Cli::command();
    let Some(config_path) = find_config(&raw) else {
        return Ok(Invocation {
            cli: Cli::try_parse_from(raw)?,
            datasets: None,
        });
    };
    let usage = |msg: String| Cli::command().error(clap::error::ErrorKind::InvalidValue, msg);
    let text = std::fs::read_to_string(&config_path).map_err(|e| usage(format!("config {}: {e}", config_path.display())))?;
    let mut table: toml::Table = text.parse().map_err(|e| usage(format!("config {}: {e}", config_path.display())))?;
    let datasets = match table.remove("datasets") {
        Some(toml::Value::Table(t)) => Some(t),
        Some(_) => return Err(usage("config: `datasets` must be a table".into())),
        None => None,
    };

    let subcommands: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(sub_pos) = raw.iter().skip(1).position(|a| a.to_str().is_some_and(|s| subcommands.iter().any(|n| n == s))) else {
        return Ok(Invocation {
            cli: Cli::try_parse_from(raw)?,
            datasets,
        });
    };
    let sub_pos = sub_pos + 1;
    let sub_name = raw[sub_pos].to_str().unwrap().to_string();
    let sub = cmd.find_subcommand(&sub_name).unwrap();
    let longs = |c: &clap::Command| -> Vec<String> { c.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect() };
    let sub_flags = longs(sub);
    let all_flags: Vec<String> = cmd
        .get_subcommands()
        .flat_map(|s| longs(s))
        .chain(longs(&cmd))
        .collect();

    let mut injected = Vec::new();
    let mut section = None;
    for (key, value) in &table {
        if let toml::Value::Table(t) = value {
            if !subcommands.contains(key) {
                return Err(usage(format!("config: unknown section `[{key}]`")));
            }
            if *key == sub_name {
                section = Some(t.clone());
            }
            continue;
        }
        let flag = key.replace('_', "-");
        if flag == "config" {
            continue;
        }
        if !all_flags.contains(&flag) {
            return Err(usage(format!("config: unknown key `{key}`")));
        }
        if sub_flags.contains(&flag) {
            push_flag(&mut injected, &flag, value).map_err(usage)?;
        }
    }
    for (key, value) in section.iter().flatten() {
        let flag = key.replace('_', "-");
        if !sub_flags.contains(&flag) {
            return Err(usage(format!("config: `{sub_name}` has no option `{key}`")));
        }
        push_flag(&mut injected, &flag, value).map_err(usage)?;
    }

    let mut argv: Vec<OsString> = raw[..=sub_pos].to_vec();
    argv.extend(injected.into_iter().map(OsString::from));
    argv.extend(raw[sub_pos + 1..].iter().cloned());
    Ok(Invocation {
        cli: Cli::try_parse_from(argv)?,
        datasets,
    })
}

fn find_config(raw: &[OsString]) -> Option<PathBuf> {
    let mut it = raw.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_str()?;
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn push_flag(out: &mut Vec<String>, flag: &str, value: &toml::Value) -> Result<(), String> {
    let scalar = |v: &toml::Value| -> Result<String, String> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(format!("config: `{flag}` has unsupported value {other}")),
        }
    };
    match value {
        toml::Value::Boolean(true) => out.push(format!("--{flag}")),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, String> = items.iter().map(scalar).collect();
            out.push(format!("--{flag}={}", parts?.join(",")));
        }
        v => out.push(format!("--{flag}={}", scalar(v)?)),
    }
    Ok(())
}
