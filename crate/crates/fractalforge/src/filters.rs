//! Every parameter-filtering strategy behind one verdict type, plus the
//! rejection-sampling driver that turns a strategy into an accepted system.
//!
//! Three families coexist here. Cloud filters (axis variance, PCA) must run
//! the chaos game per candidate and are slow. Parameter filters (two-stage
//! spectral, statistical thresholds, the learned gate) judge the matrices
//! directly. The constructive sampler sidesteps filtering entirely.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::{axis_variances, chaos_game, covariance_eigenvalues, ChaosConfig, PointCloud};
use crate::classifier::ForestModel;
use crate::error::{Error, Result};
use crate::features::extract;
use crate::ifs::{
    sample_naive, sample_svd_controlled, sample_system_size, IfsSystem, RotationMode,
};

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_EIGEN_THRESHOLD: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 0.2;
/// Acceptance band for the mean determinant magnitude.
pub const DEFAULT_STAT_BOUNDS: (f64, f64) = (0.0276, 0.26);
pub const DEFAULT_PROBA_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

/// Why a candidate was turned away.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// An axis variance at or below threshold.
    VarianceCollapse,
    /// Some map has sigma_max >= 1 — not a contraction.
    Stage1NotContractive,
    /// Some map has sigma_min below epsilon — collapses toward a plane.
    Stage2Collapse,
    /// Determinant statistics outside the configured bounds.
    StatOutOfRange,
    /// Smallest covariance eigenvalue at or below threshold.
    PcaCollapse,
    /// The learned gate scored the candidate at or below the cutoff.
    RfRejected,
    /// The chaos game escaped the divergence guard.
    Diverged,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::VarianceCollapse => "variance_collapse",
            RejectReason::Stage1NotContractive => "stage1_not_contractive",
            RejectReason::Stage2Collapse => "stage2_collapse",
            RejectReason::StatOutOfRange => "stat_out_of_range",
            RejectReason::PcaCollapse => "pca_collapse",
            RejectReason::RfRejected => "rf_rejected",
            RejectReason::Diverged => "diverged",
        };
        f.write_str(s)
    }
}

/// Outcome of one filter applied to one candidate. Acceptance and reason
/// cannot disagree: a verdict either passes or carries its rejection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterVerdict {
    Pass,
    Reject(RejectReason),
}

impl FilterVerdict {
    pub fn accepted(self) -> bool {
        self == FilterVerdict::Pass
    }

    pub fn reason(self) -> Option<RejectReason> {
        match self {
            FilterVerdict::Pass => None,
            FilterVerdict::Reject(r) => Some(r),
        }
    }
}

/// Baseline cloud check: every axis variance must be strictly above the
/// threshold.
pub fn variance_filter(cloud: &PointCloud, threshold: f64) -> FilterVerdict {
    let v = axis_variances(cloud);
    if v.x > threshold && v.y > threshold && v.z > threshold {
        FilterVerdict::Pass
    } else {
        FilterVerdict::Reject(RejectReason::VarianceCollapse)
    }
}

/// Two-stage spectral filter, a pure function of the map matrices.
///
/// Stage 1 rejects if any map has sigma_max >= 1.0 (boundary inclusive);
/// stage 2 rejects if any map has sigma_min < epsilon. Stage 1 wins when both
/// would fire. One spectral decomposition per map serves both stages — the
/// staging is logical, not computational — and no chaos game is involved.
pub fn tsf_filter(system: &IfsSystem, epsilon: f64) -> FilterVerdict {
    let mut collapse = false;
    for map in system.maps() {
        let sigma = map.a.singular_values();
        if sigma[0] >= 1.0 {
            return FilterVerdict::Reject(RejectReason::Stage1NotContractive);
        }
        // A strictly singular map is a collapse no matter how small epsilon
        // is; epsilon = 0 therefore still rejects rank-deficient maps.
        collapse |= sigma[2] < epsilon || sigma[2] == 0.0;
    }
    if collapse {
        FilterVerdict::Reject(RejectReason::Stage2Collapse)
    } else {
        FilterVerdict::Pass
    }
}

/// Bounds for the determinant-statistics filter: a strict open interval on
/// the mean of |det A|, plus optional per-system-size intervals on the sum.
/// The per-size table defaults to empty (mean-only filtering).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatFilterConfig {
    pub mean_bounds: (f64, f64),
    pub sum_bounds: BTreeMap<usize, (f64, f64)>,
}

impl Default for StatFilterConfig {
    fn default() -> Self {
        StatFilterConfig {
            mean_bounds: DEFAULT_STAT_BOUNDS,
            sum_bounds: BTreeMap::new(),
        }
    }
}

impl StatFilterConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "{name} bounds ({lo}, {hi}) must be finite with lower < upper"
                )));
            }
            Ok(())
        };
        check("mean", self.mean_bounds)?;
        for (n, &b) in &self.sum_bounds {
            check(&format!("sum (n={n})"), b)?;
        }
        Ok(())
    }
}

/// Accept systems whose mean |det A| lies strictly inside the configured
/// interval, and — when a bound for the system's size is configured — whose
/// sum of |det A| lies strictly inside that too.
pub fn statistical_threshold_filter(system: &IfsSystem, config: &StatFilterConfig) -> FilterVerdict {
    let sum: f64 = system
        .maps()
        .iter()
        .map(|m| m.a.determinant().abs())
        .sum();
    let mean = sum / system.n() as f64;
    let (lo, hi) = config.mean_bounds;
    if !(lo < mean && mean < hi) {
        return FilterVerdict::Reject(RejectReason::StatOutOfRange);
    }
    if let Some(&(slo, shi)) = config.sum_bounds.get(&system.n()) {
        if !(slo < sum && sum < shi) {
            return FilterVerdict::Reject(RejectReason::StatOutOfRange);
        }
    }
    FilterVerdict::Pass
}

/// Symmetric-trim bounds of a sample: the `trim` and `1 - trim` quantiles,
/// linearly interpolated between order statistics.
pub fn percentile_bounds(values: &[f64], trim: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "percentile bounds need at least 2 values, got {}",
            values.len()
        )));
    }
    if !(trim > 0.0 && trim < 0.5) {
        return Err(Error::InvalidInput(format!(
            "trim {trim} outside (0, 0.5)"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |p: f64| {
        let h = p * (sorted.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    Ok((quantile(trim), quantile(1.0 - trim)))
}

/// PCA cloud check: the smallest eigenvalue of the point covariance must be
/// strictly above the threshold. Catches clouds collapsed onto a plane that
/// is not axis-aligned, which the per-axis variance filter misses.
pub fn pca_variance_filter(cloud: &PointCloud, eigen_threshold: f64) -> FilterVerdict {
    let eig = covariance_eigenvalues(cloud);
    if eig[2] > eigen_threshold {
        FilterVerdict::Pass
    } else {
        FilterVerdict::Reject(RejectReason::PcaCollapse)
    }
}

/// Learned gate: accept iff the model's Good-probability is strictly above
/// `proba_threshold`. Features come from the map parameters alone — no chaos
/// game. Fails if the model's schema does not cover the extracted features.
pub fn rf_filter(
    system: &IfsSystem,
    model: &ForestModel,
    proba_threshold: f64,
) -> Result<FilterVerdict> {
    let proba = model.predict_proba(&extract(system))?;
    Ok(if proba > proba_threshold {
        FilterVerdict::Pass
    } else {
        FilterVerdict::Reject(RejectReason::RfRejected)
    })
}

/// The sampling strategies the dataset generator and benchmark compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Naive parameters, accept on the axis-variance cloud check.
    BaselineVariance,
    /// Constructive spectral sampling; nothing to filter.
    SvdControl,
    /// Naive parameters, determinant-statistics bounds.
    StatThreshold,
    /// Naive parameters, PCA cloud check.
    PcaNaive,
    /// Constructive spectral sampling, then the PCA cloud check.
    PcaSvd,
    /// Naive parameters, learned gate.
    RfFilter,
    /// Naive parameters, two-stage spectral filter.
    Tsf,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::BaselineVariance,
        Strategy::SvdControl,
        Strategy::StatThreshold,
        Strategy::PcaNaive,
        Strategy::PcaSvd,
        Strategy::RfFilter,
        Strategy::Tsf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::BaselineVariance => "baseline-variance",
            Strategy::SvdControl => "svd-control",
            Strategy::StatThreshold => "stat-threshold",
            Strategy::PcaNaive => "pca-naive",
            Strategy::PcaSvd => "pca-svd",
            Strategy::RfFilter => "rf-filter",
            Strategy::Tsf => "tsf",
        }
    }

    /// Stable numeric identity, used to derive per-strategy random substreams.
    pub fn id(self) -> u64 {
        match self {
            Strategy::BaselineVariance => 1,
            Strategy::SvdControl => 2,
            Strategy::StatThreshold => 3,
            Strategy::PcaNaive => 4,
            Strategy::PcaSvd => 5,
            Strategy::RfFilter => 6,
            Strategy::Tsf => 7,
        }
    }

    /// Whether candidates come from the constructive spectral sampler
    /// (otherwise from the naive sampler).
    pub fn samples_constructively(self) -> bool {
        matches!(self, Strategy::SvdControl | Strategy::PcaSvd)
    }

    /// Whether judging a candidate requires running the chaos game.
    pub fn needs_cloud(self) -> bool {
        matches!(
            self,
            Strategy::BaselineVariance | Strategy::PcaNaive | Strategy::PcaSvd
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidInput(format!(
                    "unknown strategy {s:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Knobs shared by every strategy. A single config drives [`generate_valid`]
/// regardless of which strategy runs; strategies read only their own fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub variance_threshold: f64,
    pub eigen_threshold: f64,
    pub epsilon: f64,
    pub stat: StatFilterConfig,
    pub proba_threshold: f64,
    pub rotation_mode: RotationMode,
    pub chaos: ChaosConfig,
    pub max_attempts: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            eigen_threshold: DEFAULT_EIGEN_THRESHOLD,
            epsilon: DEFAULT_EPSILON,
            stat: StatFilterConfig::default(),
            proba_threshold: DEFAULT_PROBA_THRESHOLD,
            rotation_mode: RotationMode::Euler,
            chaos: ChaosConfig::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
        }
        for (name, v) in [
            ("variance_threshold", self.variance_threshold),
            ("eigen_threshold", self.eigen_threshold),
            ("epsilon", self.epsilon),
            ("proba_threshold", self.proba_threshold),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        self.stat.validate()
    }
}

/// One accepted system plus the cost of finding it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub system: IfsSystem,
    /// Candidates rejected before the accepted one.
    pub rejections: u64,
    /// Rejections broken out by reason; values sum to `rejections`.
    pub rejection_reasons: BTreeMap<RejectReason, u64>,
    /// Wall-clock seconds on a monotonic clock.
    pub elapsed: f64,
}

/// Rejection-sample until `strategy` accepts a candidate.
///
/// Per candidate the draw order is: system size, then map parameters, then —
/// for strategies that judge the rendered cloud — the chaos-game selections,
/// all from the one `rng` stream. The learned gate requires `model`; other
/// strategies ignore it. Errors with [`Error::AttemptsExhausted`] after
/// `max_attempts` rejections.
pub fn generate_valid<R: Rng + ?Sized>(
    strategy: Strategy,
    cfg: &GeneratorConfig,
    model: Option<&ForestModel>,
    rng: &mut R,
) -> Result<GenerationRecord> {
    cfg.validate()?;
    if strategy == Strategy::RfFilter && model.is_none() {
        return Err(Error::InvalidConfig(
            "strategy rf-filter requires a trained model".into(),
        ));
    }
    let start = Instant::now();
    let mut rejections: u64 = 0;
    let mut rejection_reasons: BTreeMap<RejectReason, u64> = BTreeMap::new();
    loop {
        if rejections >= cfg.max_attempts {
            return Err(Error::AttemptsExhausted {
                attempts: rejections,
            });
        }
        let n = sample_system_size(rng);
        let system = if strategy.samples_constructively() {
            sample_svd_controlled(rng, n, cfg.rotation_mode)?
        } else {
            sample_naive(rng, n)?
        };
        let verdict = match strategy {
            Strategy::SvdControl => FilterVerdict::Pass,
            Strategy::Tsf => tsf_filter(&system, cfg.epsilon),
            Strategy::StatThreshold => statistical_threshold_filter(&system, &cfg.stat),
            Strategy::RfFilter => {
                rf_filter(&system, model.expect("checked above"), cfg.proba_threshold)?
            }
            Strategy::BaselineVariance | Strategy::PcaNaive | Strategy::PcaSvd => {
                match chaos_game(&system, &cfg.chaos, rng) {
                    Ok(cloud) => {
                        if strategy == Strategy::BaselineVariance {
                            variance_filter(&cloud, cfg.variance_threshold)
                        } else {
                            pca_variance_filter(&cloud, cfg.eigen_threshold)
                        }
                    }
                    Err(Error::Diverged { .. }) => FilterVerdict::Reject(RejectReason::Diverged),
                    Err(e) => return Err(e),
                }
            }
        };
        match verdict {
            FilterVerdict::Pass => {
                return Ok(GenerationRecord {
                    system,
                    rejections,
                    rejection_reasons,
                    elapsed: start.elapsed().as_secs_f64(),
                });
            }
            FilterVerdict::Reject(reason) => {
                rejections += 1;
                *rejection_reasons.entry(reason).or_default() += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{AffineMap3, Provenance};
    use crate::linalg::{rotation_from_euler, Mat3, Vec3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag_system(diags: &[[f64; 3]]) -> IfsSystem {
        diag_system_with_b(diags, Vec3::ZERO)
    }

    fn diag_system_with_b(diags: &[[f64; 3]], b: Vec3) -> IfsSystem {
        let maps = diags
            .iter()
            .map(|d| AffineMap3::new(Mat3::diagonal(d[0], d[1], d[2]), b))
            .collect();
        IfsSystem::from_maps(maps, Provenance::Naive).unwrap()
    }

    #[test]
    fn variance_filter_boundaries() {
        let spread = PointCloud {
            points: vec![
                Vec3::new(1.0, 1.0, 1.0),
                Vec3::new(-1.0, -1.0, -1.0),
                Vec3::new(1.0, -1.0, 1.0),
                Vec3::new(-1.0, 1.0, -1.0),
            ],
        };
        assert!(variance_filter(&spread, 0.05).accepted());

        // Collapse onto the z = 0 plane: x and y spread, z exactly zero.
        let flat = PointCloud {
            points: vec![
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(-1.0, -1.0, 0.0),
                Vec3::new(1.0, -1.0, 0.0),
                Vec3::new(-1.0, 1.0, 0.0),
            ],
        };
        assert_eq!(
            variance_filter(&flat, 0.05).reason(),
            Some(RejectReason::VarianceCollapse)
        );

        // Strictly-above semantics: variance exactly at threshold rejects.
        let at = PointCloud {
            points: vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(-1.0, -1.0, -1.0)],
        };
        // Each axis variance is exactly 1.0 here.
        assert!(!variance_filter(&at, 1.0).accepted());
        assert!(variance_filter(&at, 1.0 - 1e-12).accepted());
    }

    #[test]
    fn tsf_stage_semantics() {
        // All maps 0.5 I: sigma = 0.5 everywhere.
        assert!(tsf_filter(&diag_system(&[[0.5; 3], [0.5; 3]]), 0.2).accepted());

        // Identity map: sigma_max = 1.0, boundary-inclusive stage-1 reject.
        let v = tsf_filter(&diag_system(&[[1.0; 3], [0.5; 3]]), 0.2);
        assert_eq!(v.reason(), Some(RejectReason::Stage1NotContractive));

        // Thin map: stage 2.
        let v = tsf_filter(&diag_system(&[[0.5, 0.5, 0.1], [0.5; 3]]), 0.2);
        assert_eq!(v.reason(), Some(RejectReason::Stage2Collapse));

        // Boundary: sigma_min exactly epsilon passes (strict <).
        assert!(tsf_filter(&diag_system(&[[0.5, 0.5, 0.2]]), 0.2).accepted());

        // Stage 1 wins even when an earlier map already flagged stage 2.
        let v = tsf_filter(&diag_system(&[[0.5, 0.5, 0.1], [1.5; 3]]), 0.2);
        assert_eq!(v.reason(), Some(RejectReason::Stage1NotContractive));
    }

    #[test]
    fn tsf_with_zero_epsilon_only_rejects_singular_maps() {
        // Full-rank contractive maps pass with epsilon = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..200 {
            let sys = sample_svd_controlled(&mut rng, 3, RotationMode::Euler).unwrap();
            let v = tsf_filter(&sys, 0.0);
            // sigma_min < 0 is impossible, so stage 2 can only fire on exact
            // singularity (measure zero for these draws).
            assert!(v.accepted() || v.reason() == Some(RejectReason::Stage2Collapse));
            assert_ne!(v.reason(), Some(RejectReason::Stage1NotContractive));
        }
        // Exactly singular map still fails stage 2.
        let v = tsf_filter(&diag_system(&[[0.5, 0.5, 0.0]]), 0.0);
        assert_eq!(v.reason(), Some(RejectReason::Stage2Collapse));
    }

    #[test]
    fn scaling_across_one_flips_stage1() {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        for _ in 0..50 {
            let sys = sample_svd_controlled(&mut rng, 2, RotationMode::Quaternion).unwrap();
            let sigma_max = sys
                .maps()
                .iter()
                .map(|m| m.a.spectral_norm())
                .fold(0.0, f64::max);
            assert!(sigma_max < 1.0);
            // Scale every map so the largest sigma crosses 1.0.
            let c = 1.000001 / sigma_max;
            let scaled = IfsSystem::from_maps(
                sys.maps()
                    .iter()
                    .map(|m| AffineMap3::new(m.a * c, m.b))
                    .collect(),
                Provenance::Naive,
            )
            .unwrap();
            assert_eq!(
                tsf_filter(&scaled, 1e-9).reason(),
                Some(RejectReason::Stage1NotContractive)
            );
        }
    }

    // Nested so the proptest prelude's `Strategy` trait cannot shadow the
    // strategy enum used by the rest of the tests.
    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// The verdict is a function of the matrices alone: translating
            /// every map arbitrarily never changes it.
            #[test]
            fn tsf_ignores_translation(
                d in prop::array::uniform3(-1.2f64..1.2),
                e in prop::array::uniform3(-1.2f64..1.2),
                b in prop::array::uniform3(-100.0f64..100.0),
            ) {
                let zero = diag_system(&[d, e]);
                let moved = diag_system_with_b(&[d, e], Vec3::new(b[0], b[1], b[2]));
                prop_assert_eq!(tsf_filter(&zero, 0.2), tsf_filter(&moved, 0.2));
            }
        }
    }

    #[test]
    fn stat_filter_bounds_are_strict_and_per_size_bounds_apply() {
        // Single map with |det| = 0.1: inside the default band.
        let sys = diag_system(&[[0.5, 0.5, 0.4]]);
        assert!(statistical_threshold_filter(&sys, &StatFilterConfig::default()).accepted());

        // |det| = 0.5: outside.
        let big = diag_system(&[[1.0, 1.0, 0.5]]);
        assert_eq!(
            statistical_threshold_filter(&big, &StatFilterConfig::default()).reason(),
            Some(RejectReason::StatOutOfRange)
        );

        // Exactly at the lower bound: strict inequality rejects.
        let cfg = StatFilterConfig {
            mean_bounds: (0.1, 0.26),
            ..StatFilterConfig::default()
        };
        let at = diag_system(&[[0.5, 0.5, 0.4]]);
        assert!(!statistical_threshold_filter(&at, &cfg).accepted());

        // Per-size sum bound: two maps, sum 0.2, mean 0.1.
        let two = diag_system(&[[0.5, 0.5, 0.4], [0.5, 0.5, 0.4]]);
        let mut with_sum = StatFilterConfig::default();
        with_sum.sum_bounds.insert(2, (0.25, 0.5));
        assert_eq!(
            statistical_threshold_filter(&two, &with_sum).reason(),
            Some(RejectReason::StatOutOfRange)
        );
        with_sum.sum_bounds.insert(2, (0.1, 0.5));
        assert!(statistical_threshold_filter(&two, &with_sum).accepted());
        // A bound registered for a different size is ignored.
        let mut other_n = StatFilterConfig::default();
        other_n.sum_bounds.insert(5, (10.0, 11.0));
        assert!(statistical_threshold_filter(&two, &other_n).accepted());

        // Inverted bounds fail validation.
        let bad = StatFilterConfig {
            mean_bounds: (0.3, 0.2),
            ..StatFilterConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn percentile_bounds_match_the_interpolated_quantiles() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let (lo, hi) = percentile_bounds(&values, 0.05).unwrap();
        assert!((lo - 5.95).abs() < 1e-12);
        assert!((hi - 95.05).abs() < 1e-12);

        // Order must not matter.
        let mut shuffled = values.clone();
        shuffled.reverse();
        assert_eq!(percentile_bounds(&shuffled, 0.05).unwrap(), (lo, hi));

        let constant = vec![3.5; 10];
        assert_eq!(percentile_bounds(&constant, 0.05).unwrap(), (3.5, 3.5));

        assert!(percentile_bounds(&[1.0], 0.05).is_err());
        assert!(percentile_bounds(&values, 0.0).is_err());
        assert!(percentile_bounds(&values, 0.5).is_err());
        assert!(percentile_bounds(&[1.0, f64::NAN], 0.05).is_err());
    }

    #[test]
    fn pca_filter_catches_rotated_collapse_that_axis_variance_misses() {
        // Points on a diagonal plane, rotated 45 degrees off-axis: every axis
        // variance is healthy but the cloud is flat.
        let rot = rotation_from_euler(0.0, 0.0, std::f64::consts::FRAC_PI_4);
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let points: Vec<Vec3> = (0..2000)
            .map(|_| {
                let u: f64 = rng.random_range(-2.0..2.0);
                let w: f64 = rng.random_range(-2.0..2.0);
                rot.mul_vec(Vec3::new(u, 0.0, w))
            })
            .collect();
        let cloud = PointCloud { points };

        assert!(variance_filter(&cloud, 0.05).accepted(), "axis filter fooled");
        assert_eq!(
            pca_variance_filter(&cloud, 0.05).reason(),
            Some(RejectReason::PcaCollapse)
        );

        // Isotropic cloud passes.
        let iso = PointCloud {
            points: (0..2000)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                    )
                })
                .collect(),
        };
        assert!(pca_variance_filter(&iso, 0.05).accepted());
    }

    #[test]
    fn rf_gate_is_strict_at_the_threshold() {
        let sys = diag_system(&[[0.5; 3], [0.4; 3]]);
        let schema: Vec<&str> = crate::features::FEATURE_COLUMNS.to_vec();
        let always = ForestModel::from_leaf_votes(&schema, &[true]).unwrap();
        assert!(rf_filter(&sys, &always, 0.5).unwrap().accepted());

        // Exactly 0.5 is not strictly above 0.5.
        let half = ForestModel::from_leaf_votes(&schema, &[true, false]).unwrap();
        assert_eq!(
            rf_filter(&sys, &half, 0.5).unwrap().reason(),
            Some(RejectReason::RfRejected)
        );

        let wrong_schema = ForestModel::from_leaf_votes(&["not_a_feature"], &[true]).unwrap();
        assert!(rf_filter(&sys, &wrong_schema, 0.5).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(
                serde_json::to_string(&s).unwrap(),
                format!("\"{}\"", s.name())
            );
        }
        assert!("montecarlo".parse::<Strategy>().is_err());
        // Stable ids, all distinct.
        let ids: Vec<u64> = Strategy::ALL.iter().map(|s| s.id()).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn svd_control_accepts_immediately_and_deterministically() {
        let cfg = GeneratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        for _ in 0..20 {
            let rec = generate_valid(Strategy::SvdControl, &cfg, None, &mut rng).unwrap();
            assert_eq!(rec.rejections, 0);
            assert!(rec.rejection_reasons.is_empty());
            // Constructive candidates always clear TSF stage 1.
            let v = tsf_filter(&rec.system, cfg.epsilon);
            assert_ne!(v.reason(), Some(RejectReason::Stage1NotContractive));
        }

        let a = generate_valid(
            Strategy::SvdControl,
            &cfg,
            None,
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        let b = generate_valid(
            Strategy::SvdControl,
            &cfg,
            None,
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        assert_eq!(a.system, b.system);
        assert_eq!(a.rejections, b.rejections);
    }

    #[test]
    fn tsf_generation_is_deterministic_and_accounts_all_rejections() {
        let cfg = GeneratorConfig::default();
        let run = |seed| {
            generate_valid(
                Strategy::Tsf,
                &cfg,
                None,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap()
        };
        let a = run(3);
        let b = run(3);
        assert_eq!(a.system, b.system);
        assert_eq!(a.rejections, b.rejections);
        assert_eq!(a.rejection_reasons, b.rejection_reasons);
        assert_eq!(a.rejection_reasons.values().sum::<u64>(), a.rejections);
        // The accepted system itself passes the filter.
        assert!(tsf_filter(&a.system, cfg.epsilon).accepted());
        assert!(a.rejections > 0, "naive candidates essentially never pass");
        assert!(a.elapsed >= 0.0);
    }

    #[test]
    fn exhaustion_reports_the_attempt_count() {
        // Epsilon just under 1 forces stage 2 to reject almost everything;
        // stage 1 already rejects most naive draws.
        let cfg = GeneratorConfig {
            epsilon: 0.999,
            max_attempts: 200,
            ..GeneratorConfig::default()
        };
        let err = generate_valid(
            Strategy::Tsf,
            &cfg,
            None,
            &mut ChaCha8Rng::seed_from_u64(105),
        )
        .unwrap_err();
        match err {
            Error::AttemptsExhausted { attempts } => assert_eq!(attempts, 200),
            other => panic!("unexpected error: {other}"),
        }
        assert_eq!(err.exit_code(), 2);

        let rf_missing = generate_valid(
            Strategy::RfFilter,
            &GeneratorConfig::default(),
            None,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(rf_missing, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn baseline_counts_divergence_as_a_rejection_reason() {
        // A small chaos budget keeps this fast while still exercising the
        // full candidate loop; naive candidates frequently diverge.
        let cfg = GeneratorConfig {
            chaos: ChaosConfig::with_points(300),
            ..GeneratorConfig::default()
        };
        let mut seen: BTreeMap<RejectReason, u64> = BTreeMap::new();
        for seed in 0..20 {
            let rec = generate_valid(
                Strategy::BaselineVariance,
                &cfg,
                None,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
            assert_eq!(rec.rejection_reasons.values().sum::<u64>(), rec.rejections);
            assert!((2..=8).contains(&rec.system.n()));
            for (&r, &c) in &rec.rejection_reasons {
                *seen.entry(r).or_default() += c;
            }
        }
        // Over this many candidates both failure modes must appear: expansive
        // systems blow past the divergence guard, flat ones fail the
        // variance check.
        assert!(seen.contains_key(&RejectReason::Diverged), "{seen:?}");
        assert!(seen.contains_key(&RejectReason::VarianceCollapse), "{seen:?}");
    }
}
