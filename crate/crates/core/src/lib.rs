//! Latent-space exploration engine: multiscale dimension estimation, local
//! PCA atlases over point clouds, chart layout and evaluation helpers.

pub mod atlas;
pub mod cloud;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod layout;
pub mod linalg;
pub mod msvd;
pub mod synth;

pub use atlas::{Atlas, Chart, ChartCoords};
pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use graph::NeighborGraph;
pub use msvd::{DimEstimate, MsvdParams, ScaleGrid, SpectrumTable};

/// Runs `f` inside a rayon pool with `workers` threads; `0` uses the global
/// pool. Results never depend on the worker count.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}
