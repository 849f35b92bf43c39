//! Iterated function systems: affine maps in R^3, selection probabilities, and
//! the two parameter samplers.
//!
//! A system is a set of maps `x -> A x + b`. The naive sampler draws every
//! entry uniformly and leaves quality control to a downstream filter; the
//! SVD-controlled sampler composes each `A` from two rotations and a sampled
//! singular spectrum, so contractivity holds by construction.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rotation_from_euler, rotation_from_quaternion, Mat3, Vec3};

/// Smallest map count the samplers will draw.
pub const MIN_MAPS: usize = 2;
/// Largest map count the samplers will draw.
pub const MAX_MAPS: usize = 8;

/// Below this total |det| mass, selection probabilities fall back to uniform.
const DET_SUM_FLOOR: f64 = 1e-12;

/// One affine map `x -> a x + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap3 {
    pub a: Mat3,
    pub b: Vec3,
}

impl AffineMap3 {
    pub fn new(a: Mat3, b: Vec3) -> Self {
        AffineMap3 { a, b }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.a.mul_vec(p) + self.b
    }
}

/// How a system's parameters were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Naive,
    SvdControlled,
}

/// Rotation sampling mode for [`sample_svd_controlled`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// Three Euler angles, each uniform over its natural range.
    #[default]
    Euler,
    /// Random unit quaternion (Haar-uniform rotations).
    Quaternion,
}

impl FromStr for RotationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(RotationMode::Euler),
            "quaternion" => Ok(RotationMode::Quaternion),
            other => Err(Error::InvalidInput(format!(
                "unknown rotation mode {other:?} (expected \"euler\" or \"quaternion\")"
            ))),
        }
    }
}

impl fmt::Display for RotationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RotationMode::Euler => "euler",
            RotationMode::Quaternion => "quaternion",
        })
    }
}

/// An IFS plus its per-map selection probabilities.
///
/// `maps` and `probs` always have equal length and `probs` is normalized;
/// construct through [`IfsSystem::from_maps`] (or deserialization, which
/// validates) to keep that true.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRecord", into = "SystemRecord")]
pub struct IfsSystem {
    maps: Vec<AffineMap3>,
    probs: Vec<f64>,
    pub provenance: Provenance,
    /// Seed of the substream that produced this system, when known.
    pub seed: Option<u64>,
}

impl IfsSystem {
    /// Build a system from maps, deriving selection probabilities.
    ///
    /// Sampling always produces between [`MIN_MAPS`] and [`MAX_MAPS`] maps;
    /// single-map systems are accepted here so hand-built demonstration
    /// attractors stay expressible.
    pub fn from_maps(maps: Vec<AffineMap3>, provenance: Provenance) -> Result<Self> {
        if maps.is_empty() || maps.len() > MAX_MAPS {
            return Err(Error::InvalidInput(format!(
                "system needs 1..={MAX_MAPS} maps, got {}",
                maps.len()
            )));
        }
        let probs = selection_probabilities(&maps);
        Ok(IfsSystem {
            maps,
            probs,
            provenance,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[AffineMap3] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// On-disk shape: map count made explicit, seed optional.
#[derive(Serialize, Deserialize)]
struct SystemRecord {
    n: usize,
    maps: Vec<AffineMap3>,
    probs: Vec<f64>,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl From<IfsSystem> for SystemRecord {
    fn from(s: IfsSystem) -> Self {
        SystemRecord {
            n: s.maps.len(),
            maps: s.maps,
            probs: s.probs,
            provenance: s.provenance,
            seed: s.seed,
        }
    }
}

impl TryFrom<SystemRecord> for IfsSystem {
    type Error = String;

    fn try_from(r: SystemRecord) -> std::result::Result<Self, String> {
        if r.n != r.maps.len() {
            return Err(format!("n = {} but {} maps present", r.n, r.maps.len()));
        }
        if r.maps.is_empty() || r.maps.len() > MAX_MAPS {
            return Err(format!("map count {} outside 1..={MAX_MAPS}", r.maps.len()));
        }
        if r.probs.len() != r.maps.len() {
            return Err(format!(
                "{} probabilities for {} maps",
                r.probs.len(),
                r.maps.len()
            ));
        }
        let sum: f64 = r.probs.iter().sum();
        if r.probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(format!("selection probabilities do not normalize (sum {sum})"));
        }
        for m in &r.maps {
            if m.a.to_row_major().iter().any(|v| !v.is_finite()) || !m.b.is_finite() {
                return Err("non-finite map parameter".into());
            }
        }
        Ok(IfsSystem {
            maps: r.maps,
            probs: r.probs,
            provenance: r.provenance,
            seed: r.seed,
        })
    }
}

/// Selection probabilities proportional to |det A_i|.
///
/// A map's determinant magnitude is the volume of its image of the unit cube,
/// so this weights maps by how much of the attractor they generate. When the
/// total mass is negligible (all maps nearly singular) the weights fall back
/// to uniform rather than dividing by ~zero.
pub fn selection_probabilities(maps: &[AffineMap3]) -> Vec<f64> {
    let dets: Vec<f64> = maps.iter().map(|m| m.a.determinant().abs()).collect();
    let total: f64 = dets.iter().sum();
    if total <= DET_SUM_FLOOR {
        vec![1.0 / maps.len() as f64; maps.len()]
    } else {
        dets.iter().map(|d| d / total).collect()
    }
}

/// Uniform map count in `MIN_MAPS..=MAX_MAPS`.
pub fn sample_system_size<R: Rng + ?Sized>(rng: &mut R) -> usize {
    rng.random_range(MIN_MAPS..=MAX_MAPS)
}

fn check_n(n: usize) -> Result<()> {
    if !(MIN_MAPS..=MAX_MAPS).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "map count {n} outside {MIN_MAPS}..={MAX_MAPS}"
        )));
    }
    Ok(())
}

/// Naive sampler: all 12 parameters of every map drawn uniformly from [-1, 1).
///
/// Draw order per map is the 9 matrix entries row-major, then the 3
/// translation components. Most systems produced this way are degenerate;
/// that is the point — downstream filters decide what survives.
pub fn sample_naive<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<IfsSystem> {
    check_n(n)?;
    let span = Uniform::new(-1.0, 1.0).expect("constant bounds");
    let maps = (0..n)
        .map(|_| {
            let a = Mat3::from_row_major(core::array::from_fn(|_| span.sample(rng)));
            let b = Vec3::new(span.sample(rng), span.sample(rng), span.sample(rng));
            AffineMap3::new(a, b)
        })
        .collect();
    IfsSystem::from_maps(maps, Provenance::Naive)
}

/// SVD-controlled sampler: each map is `U diag(sigma) V^T` with `U`, `V`
/// random rotations and `sigma` uniform on [0, 1) per component, plus a
/// translation uniform on [-1, 1)^3.
///
/// Every singular value is below 1, so every map — and the whole system — is
/// contractive by construction; generation never rejects.
pub fn sample_svd_controlled<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    mode: RotationMode,
) -> Result<IfsSystem> {
    check_n(n)?;
    let unit = Uniform::new(0.0, 1.0).expect("constant bounds");
    let span = Uniform::new(-1.0, 1.0).expect("constant bounds");
    let maps = (0..n)
        .map(|_| {
            let u = sample_rotation(rng, mode);
            let v = sample_rotation(rng, mode);
            let sigma = Mat3::diagonal(unit.sample(rng), unit.sample(rng), unit.sample(rng));
            let b = Vec3::new(span.sample(rng), span.sample(rng), span.sample(rng));
            AffineMap3::new(u * sigma * v.transpose(), b)
        })
        .collect();
    IfsSystem::from_maps(maps, Provenance::SvdControlled)
}

/// One random rotation. Euler mode draws yaw in [-pi, pi), pitch in
/// [-pi/2, pi/2), roll in [-pi, pi); quaternion mode normalizes a 4D standard
/// normal draw (redrawing in the measure-zero degenerate case).
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R, mode: RotationMode) -> Mat3 {
    match mode {
        RotationMode::Euler => rotation_from_euler(
            rng.random_range(-PI..PI),
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            rng.random_range(-PI..PI),
        ),
        RotationMode::Quaternion => loop {
            let q: [f64; 4] = core::array::from_fn(|_| rng.sample(StandardNormal));
            if let Some(r) = rotation_from_quaternion(q) {
                break r;
            }
        },
    }
}
