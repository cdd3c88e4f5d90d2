//! Seeded generators for manifolds with known intrinsic dimension.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Unit `S^k` in the first `k+1` coordinates.
    Sphere,
    /// Unit box `[0,1]^k` in the first `k` coordinates.
    Linear,
    /// `(t cos t, h, t sin t)` with `t in [1.5pi, 4.5pi]`, `h in [0, 21]`.
    SwissRoll,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(GeneratorKind::Sphere),
            "linear" => Ok(GeneratorKind::Linear),
            "swiss-roll" | "swissroll" => Ok(GeneratorKind::SwissRoll),
            other => Err(Error::param(format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub count: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.intrinsic_dim;
        if k == 0 || k >= self.ambient_dim {
            return Err(Error::param(format!(
                "need 1 <= k < D (k={k}, D={})",
                self.ambient_dim
            )));
        }
        if self.count < k + 2 {
            return Err(Error::param(format!("need N >= k+2 (N={}, k={k})", self.count)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma must be finite and non-negative"));
        }
        match self.kind {
            GeneratorKind::Sphere if k + 1 > self.ambient_dim => {
                Err(Error::param("sphere S^k needs D >= k+1"))
            }
            GeneratorKind::SwissRoll if k != 2 || self.ambient_dim < 3 => {
                Err(Error::param("swiss roll has k = 2 and needs D >= 3"))
            }
            _ => Ok(()),
        }
    }
}

/// A generated cloud together with its construction data.
#[derive(Debug, Clone)]
pub struct Generated {
    pub cloud: PointCloud,
    /// Points before rotation and noise, one row per point, in the
    /// construction coordinates (`k+1` for the sphere, `k` for linear, 3 for
    /// the swiss roll).
    pub construction: Vec<Vec<f64>>,
    /// Swiss roll only: `(t, h)` per point.
    pub parameters: Option<Vec<[f64; 2]>>,
}

pub fn generate(spec: &GeneratorSpec) -> Result<PointCloud> {
    generate_detailed(spec).map(|g| g.cloud)
}

pub fn generate_detailed(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, k) = (spec.count, spec.intrinsic_dim);
    let mut parameters = None;
    let construction: Vec<Vec<f64>> = match spec.kind {
        GeneratorKind::Sphere => (0..n)
            .map(|_| loop {
                let g: Vec<f64> = (0..=k).map(|_| rng.sample(StandardNormal)).collect();
                let len = crate::cloud::norm(&g);
                if len > 1e-12 {
                    break g.into_iter().map(|v| v / len).collect();
                }
            })
            .collect(),
        GeneratorKind::Linear => (0..n).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect(),
        GeneratorKind::SwissRoll => {
            let th: Vec<[f64; 2]> = (0..n)
                .map(|_| {
                    let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                    let h = 21.0 * rng.random::<f64>();
                    [t, h]
                })
                .collect();
            let pts = th.iter().map(|&[t, h]| vec![t * t.cos(), h, t * t.sin()]).collect();
            parameters = Some(th);
            pts
        }
    };

    let d = spec.ambient_dim;
    let q = random_orthogonal(d, &mut rng);
    let mut data = Vec::with_capacity(n * d);
    for p in &construction {
        for row in 0..d {
            let mut v: f64 = p.iter().enumerate().map(|(j, x)| q[(row, j)] * x).sum();
            if spec.noise_sigma > 0.0 {
                v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            data.push(v);
        }
    }
    Ok(Generated {
        cloud: PointCloud::new(n, d, data)?,
        construction,
        parameters,
    })
}

/// `D x D` orthogonal matrix from the QR factorization of a Gaussian
/// matrix, with columns flipped so `R` has a positive diagonal.
pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Arc length along the roll spiral from `t = 0`, i.e. the flattened first
/// coordinate of a swiss-roll point.
pub fn swiss_roll_arc_length(t: f64) -> f64 {
    0.5 * (t * (1.0 + t * t).sqrt() + t.asinh())
}

/// Isometric 2D unrolling `(arc_length(t), h)` of swiss-roll parameters.
pub fn unroll(parameters: &[[f64; 2]]) -> Vec<[f64; 2]> {
    parameters
        .iter()
        .map(|&[t, h]| [swiss_roll_arc_length(t), h])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;

    fn spec(kind: GeneratorKind, k: usize, d: usize, n: usize, noise: f64) -> GeneratorSpec {
        GeneratorSpec {
            kind,
            intrinsic_dim: k,
            ambient_dim: d,
            count: n,
            noise_sigma: noise,
            seed: 11,
        }
    }

    fn rank(cloud: &PointCloud) -> usize {
        let (_, c) = crate::linalg::center_rows(&cloud.to_matrix());
        let s = singular_values(c);
        s.iter().filter(|v| **v > 1e-9).count()
    }

    #[test]
    fn sphere_points_unit_norm_before_embedding() {
        let g = generate_detailed(&spec(GeneratorKind::Sphere, 2, 10, 200, 0.0)).unwrap();
        for p in &g.construction {
            assert!((crate::cloud::norm(p) - 1.0).abs() < 1e-12);
        }
        // rotation preserves the norm
        for p in g.cloud.points() {
            assert!((crate::cloud::norm(p) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn construction_rank() {
        assert_eq!(rank(&generate(&spec(GeneratorKind::Linear, 3, 12, 50, 0.0)).unwrap()), 3);
        assert_eq!(rank(&generate(&spec(GeneratorKind::Sphere, 2, 12, 50, 0.0)).unwrap()), 3);
        assert_eq!(rank(&generate(&spec(GeneratorKind::SwissRoll, 2, 12, 50, 0.0)).unwrap()), 3);
    }

    #[test]
    fn orthogonal_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(7, &mut rng);
        let e = (q.transpose() * &q - DMatrix::identity(7, 7)).abs().max();
        assert!(e < 1e-12);
    }

    #[test]
    fn seeds() {
        let a = spec(GeneratorKind::Sphere, 3, 8, 30, 0.01);
        let mut b = a.clone();
        assert_eq!(generate(&a).unwrap(), generate(&a).unwrap());
        b.seed = 12;
        assert_ne!(generate(&a).unwrap(), generate(&b).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&spec(GeneratorKind::Linear, 5, 5, 50, 0.0)).is_err());
        assert!(generate(&spec(GeneratorKind::Linear, 3, 5, 4, 0.0)).is_err());
        assert!(generate(&spec(GeneratorKind::SwissRoll, 3, 5, 40, 0.0)).is_err());
        assert!(generate(&spec(GeneratorKind::Sphere, 2, 5, 40, -1.0)).is_err());
    }

    #[test]
    fn arc_length_derivative() {
        // d/dt arc = sqrt(1 + t^2)
        let t = 7.3;
        let h = 1e-6;
        let num = (swiss_roll_arc_length(t + h) - swiss_roll_arc_length(t - h)) / (2.0 * h);
        assert!((num - (1.0 + t * t).sqrt()).abs() < 1e-6);
    }
}
