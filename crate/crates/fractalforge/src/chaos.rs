//! The chaos game and point-cloud statistics.
//!
//! Starting from a fixed point, repeatedly apply a randomly chosen map
//! (weighted by the system's selection probabilities). After a burn-in the
//! iterate has converged onto the attractor; the recorded tail of the orbit is
//! a point-cloud approximation of it.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::IfsSystem;
use crate::linalg::{sym_eigenvalues, Mat3, Vec3};

pub const DEFAULT_POINT_COUNT: usize = 10_000;
pub const DEFAULT_BURN_IN: usize = 100;
pub const DEFAULT_DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosConfig {
    /// Points recorded after burn-in.
    pub point_count: usize,
    /// Iterations discarded while the orbit falls onto the attractor.
    pub burn_in: usize,
    pub start: Vec3,
    /// Any coordinate magnitude beyond this aborts with [`Error::Diverged`].
    pub divergence_limit: f64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        ChaosConfig {
            point_count: DEFAULT_POINT_COUNT,
            burn_in: DEFAULT_BURN_IN,
            start: Vec3::ZERO,
            divergence_limit: DEFAULT_DIVERGENCE_LIMIT,
        }
    }
}

impl ChaosConfig {
    pub fn with_points(point_count: usize) -> Self {
        ChaosConfig {
            point_count,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self
            .points
            .iter()
            .fold(Vec3::ZERO, |acc, &p| acc + p);
        sum * (1.0 / self.points.len().max(1) as f64)
    }
}

/// Run the chaos game. Exactly `cfg.point_count` points are returned.
///
/// One uniform draw selects a map per iteration, so the orbit is a pure
/// function of (system, config, rng stream). Divergence is checked on every
/// iterate, burn-in included; the reported step is the 0-based iteration
/// index at which the orbit escaped.
pub fn chaos_game<R: Rng + ?Sized>(
    system: &IfsSystem,
    cfg: &ChaosConfig,
    rng: &mut R,
) -> Result<PointCloud> {
    if cfg.point_count == 0 {
        return Err(Error::InvalidInput("point_count must be positive".into()));
    }
    // Cumulative distribution over maps.
    let mut cdf = Vec::with_capacity(system.n());
    let mut acc = 0.0;
    for p in system.probs() {
        acc += p;
        cdf.push(acc);
    }

    let maps = system.maps();
    let mut p = cfg.start;
    let mut points = Vec::with_capacity(cfg.point_count);
    for step in 0..cfg.burn_in + cfg.point_count {
        let u: f64 = rng.random();
        let k = cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(system.n() - 1);
        p = maps[k].apply(p);
        if !p.is_finite() || p.abs_max() > cfg.divergence_limit {
            return Err(Error::Diverged { step });
        }
        if step >= cfg.burn_in {
            points.push(p);
        }
    }
    Ok(PointCloud { points })
}

/// Per-axis population variance.
pub fn axis_variances(cloud: &PointCloud) -> Vec3 {
    let n = cloud.len().max(1) as f64;
    let mean = cloud.centroid();
    let sum = cloud.points.iter().fold(Vec3::ZERO, |acc, &p| {
        let d = p - mean;
        acc + d.mul_elem(d)
    });
    sum * (1.0 / n)
}

/// Population covariance matrix of the cloud.
pub fn covariance_matrix(cloud: &PointCloud) -> Mat3 {
    let n = cloud.len().max(1) as f64;
    let mean = cloud.centroid();
    let mut cov = Mat3::ZERO;
    for &p in &cloud.points {
        let d = (p - mean).to_array();
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    for v in 0..9 {
        cov[(v / 3, v % 3)] /= n;
    }
    cov
}

/// Eigenvalues of the covariance matrix, descending, clamped at zero.
///
/// These are the squared principal-axis spreads; a near-zero smallest value
/// means the cloud collapsed onto a plane or line.
pub fn covariance_eigenvalues(cloud: &PointCloud) -> [f64; 3] {
    let e = sym_eigenvalues(&covariance_matrix(cloud));
    [e[0].max(0.0), e[1].max(0.0), e[2].max(0.0)]
}

/// Write a cloud to disk. A `.ply` extension selects ASCII PLY (readable by
/// standard mesh viewers); any other extension gets flat little-endian f64
/// triples in point order.
pub fn write_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let is_ply = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        write!(
            w,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
            cloud.len()
        )
        .map_err(|e| Error::io(path, e))?;
        for p in &cloud.points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(|e| Error::io(path, e))?;
        }
    } else {
        for p in &cloud.points {
            for v in p.to_array() {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{sample_naive, AffineMap3, Provenance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_map(scale: f64, b: Vec3) -> IfsSystem {
        IfsSystem::from_maps(
            vec![AffineMap3::new(Mat3::scale(scale), b)],
            Provenance::Naive,
        )
        .unwrap()
    }

    /// Four half-scale maps pulling toward tetrahedron vertices.
    pub(crate) fn sierpinski_tetrahedron() -> (IfsSystem, [Vec3; 4]) {
        let verts = [
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ];
        let maps = verts
            .iter()
            .map(|&v| AffineMap3::new(Mat3::scale(0.5), v * 0.5))
            .collect();
        (
            IfsSystem::from_maps(maps, Provenance::Naive).unwrap(),
            verts,
        )
    }

    /// Barycentric hull membership against the tetrahedron, via Cramer's rule.
    fn in_tetrahedron(p: Vec3, verts: &[Vec3; 4], tol: f64) -> bool {
        let m = {
            let mut m = Mat3::ZERO;
            for (c, v) in verts[1..].iter().enumerate() {
                m.set_col(c, *v - verts[0]);
            }
            m
        };
        let det = m.determinant();
        let rhs = p - verts[0];
        let mut lambda = [0.0f64; 4];
        for i in 0..3 {
            let mut mi = m;
            mi.set_col(i, rhs);
            lambda[i + 1] = mi.determinant() / det;
        }
        lambda[0] = 1.0 - lambda[1] - lambda[2] - lambda[3];
        lambda.iter().all(|&l| l >= -tol)
    }

    #[test]
    fn contraction_converges_to_fixed_point() {
        let sys = single_map(0.5, Vec3::ZERO);
        let cfg = ChaosConfig {
            point_count: 50,
            burn_in: 100,
            start: Vec3::new(0.99, 0.99, 0.99),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = chaos_game(&sys, &cfg, &mut rng).unwrap();
        assert_eq!(cloud.len(), 50);
        // After 100 halvings the orbit is at the fixed point to ~1e-31.
        for p in &cloud.points {
            assert!(p.abs_max() < 1e-25);
        }
    }

    #[test]
    fn point_count_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = sample_naive(&mut ChaCha8Rng::seed_from_u64(3), 2).unwrap();
        // A naive system may diverge; use a known-contractive one instead.
        let _ = sys;
        let (tetra, _) = sierpinski_tetrahedron();
        for m in [1usize, 7, 1000] {
            let cfg = ChaosConfig {
                point_count: m,
                ..Default::default()
            };
            assert_eq!(chaos_game(&tetra, &cfg, &mut rng).unwrap().len(), m);
        }
        assert!(chaos_game(&tetra, &ChaosConfig::with_points(0), &mut rng).is_err());
    }

    #[test]
    fn sierpinski_points_stay_in_hull() {
        let (sys, verts) = sierpinski_tetrahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cloud = chaos_game(&sys, &ChaosConfig::default(), &mut rng).unwrap();
        assert_eq!(cloud.len(), DEFAULT_POINT_COUNT);
        for &p in &cloud.points {
            assert!(in_tetrahedron(p, &verts, 1e-9), "{p:?} escaped the hull");
        }
    }

    #[test]
    fn chaos_game_is_deterministic() {
        let (sys, _) = sierpinski_tetrahedron();
        let cfg = ChaosConfig::with_points(500);
        let a = chaos_game(&sys, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = chaos_game(&sys, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expansive_map_diverges() {
        let sys = single_map(2.0, Vec3::new(1.0, 1.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        match chaos_game(&sys, &ChaosConfig::default(), &mut rng) {
            Err(Error::Diverged { step }) => assert!(step < 100, "escaped during burn-in"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn variance_of_degenerate_clouds() {
        // Dyadic coordinates so the mean is exact and the variance is a hard zero.
        let same = PointCloud {
            points: vec![Vec3::new(0.25, -0.5, 0.75); 64],
        };
        assert_eq!(axis_variances(&same), Vec3::ZERO);

        let pair = PointCloud {
            points: vec![Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)],
        };
        assert_eq!(axis_variances(&pair), Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn variance_matches_moment_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cloud = PointCloud {
            points: (0..5000)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-1.0..2.0),
                    )
                })
                .collect(),
        };
        // Independent route: E[x^2] - E[x]^2.
        let n = cloud.len() as f64;
        let mut mean = Vec3::ZERO;
        let mut sq = Vec3::ZERO;
        for &p in &cloud.points {
            mean = mean + p;
            sq = sq + p.mul_elem(p);
        }
        mean = mean * (1.0 / n);
        sq = sq * (1.0 / n);
        let reference = sq - mean.mul_elem(mean);
        let got = axis_variances(&cloud);
        assert!((got - reference).abs_max() < 1e-10);
    }

    #[test]
    fn covariance_eigenvalues_flag_collapse() {
        let line = PointCloud {
            points: (0..1000)
                .map(|i| Vec3::new(i as f64 / 1000.0, 0.0, 0.0))
                .collect(),
        };
        let e = covariance_eigenvalues(&line);
        assert!(e[0] > 0.0);
        assert!(e[1] < 1e-12 && e[2] < 1e-12);
    }

    #[test]
    fn covariance_eigenvalues_are_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cloud = PointCloud {
            points: (0..10_000)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        };
        let e = covariance_eigenvalues(&cloud);
        // Isotropic cube: all three within ~10 percent of each other.
        assert!(e[0] / e[2] < 1.1, "{e:?}");

        let r = crate::linalg::rotation_from_euler(0.7, -0.4, 1.9);
        let rotated = PointCloud {
            points: cloud.points.iter().map(|&p| r.mul_vec(p)).collect(),
        };
        let er = covariance_eigenvalues(&rotated);
        for i in 0..3 {
            assert!((e[i] - er[i]).abs() < 1e-9);
        }

        // Trace identity: eigenvalue sum equals total variance.
        let var = axis_variances(&cloud);
        assert!((e.iter().sum::<f64>() - (var.x + var.y + var.z)).abs() < 1e-12);
    }

    #[test]
    fn ply_export_has_valid_header_and_coordinates() {
        let cloud = PointCloud {
            points: vec![
                Vec3::new(0.25, -1.5, 3.0),
                Vec3::new(0.0, 0.5, -0.125),
                Vec3::new(1e-3, 2.0, 0.0),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        write_point_cloud(&cloud, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("ply"));
        assert_eq!(lines.next(), Some("format ascii 1.0"));
        assert_eq!(lines.next(), Some("element vertex 3"));
        let body: Vec<&str> = text.lines().skip_while(|l| *l != "end_header").skip(1).collect();
        assert_eq!(body.len(), 3);
        let first: Vec<f64> = body[0]
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(first, vec![0.25, -1.5, 3.0]);
    }

    #[test]
    fn binary_export_is_row_major_f64() {
        let cloud = PointCloud {
            points: vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.0, 4.25)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.bin");
        write_point_cloud(&cloud, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 2 * 3 * 8);
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, -0.5, 0.0, 4.25]);
    }
}
