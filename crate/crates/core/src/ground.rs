//! Soil-surface detection.
//!
//! The filtered cloud is split into z-bins, each bin is scored by its count
//! weighted by the contrast against its neighbours, and the cloud is cut down
//! to a band around the best bin. The bin width shrinks every pass until it
//! falls under `dz_min`. A RANSAC plane is fitted on what remains and the
//! ground center / closest point / approach point are read off its inliers.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::parse_value;
use crate::error::{require, Error, Result};
use crate::pointcloud::{workspace_filter, Point3, PointCloud, WorkspaceBounds};

/// Offset from `g_min` along +y (towards the pot) so the probe lands on soil
/// instead of the pot edge.
pub const APPROACH_OFFSET_Y: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningSchedule {
    pub dz_init: f64,
    /// Fraction removed from the bin width after each pass.
    pub shrink: f64,
    pub dz_min: f64,
}

impl Default for BinningSchedule {
    fn default() -> Self {
        Self {
            dz_init: 0.07,
            shrink: 0.25,
            dz_min: 0.01,
        }
    }
}

impl BinningSchedule {
    pub fn validate(&self) -> Result<()> {
        require(
            self.shrink > 0.0 && self.shrink < 1.0,
            "shrink",
            "must lie in (0, 1)",
        )?;
        require(self.dz_min > 0.0, "dz_min", "must be positive")?;
        require(self.dz_min < self.dz_init, "dz_init", "must exceed dz_min")
    }

    /// Bin widths of every refinement pass, in order.
    pub fn widths(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut dz = self.dz_init;
        while dz >= self.dz_min {
            out.push(dz);
            dz *= 1.0 - self.shrink;
        }
        out
    }
}

/// Contiguous z-slab of a sorted cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub z_lo: f64,
    pub z_hi: f64,
    /// Indices into the (z-sorted) parent cloud.
    pub members: Range<usize>,
}

impl Bin {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

fn check_sorted_valid(cloud: &PointCloud) -> Result<()> {
    require(
        cloud.iter().all(Point3::is_valid),
        "cloud",
        "contains invalid points",
    )?;
    require(
        cloud.is_sorted_by_z(),
        "cloud",
        "must be sorted by ascending z",
    )
}

/// Partitions `[z_min, z_max]` of a z-sorted cloud into bins of width `dz`
/// anchored at the minimum z. Empty interior bins are kept.
pub fn bin_points(cloud: &PointCloud, dz: f64) -> Result<Vec<Bin>> {
    if cloud.is_empty() {
        return Err(Error::NoPoints);
    }
    require(dz > 0.0 && dz.is_finite(), "dz", "must be positive")?;
    check_sorted_valid(cloud)?;

    let pts = &cloud.points;
    let z0 = pts[0].z;
    let z_max = pts[pts.len() - 1].z;
    let index_of = |z: f64| ((z - z0) / dz).floor() as usize;
    let n_bins = index_of(z_max) + 1;

    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for i in 0..n_bins {
        let mut end = start;
        while end < pts.len() && index_of(pts[end].z) == i {
            end += 1;
        }
        let z_lo = z0 + i as f64 * dz;
        let z_hi = if i + 1 == n_bins && z_max > z_lo {
            z_max
        } else {
            z_lo + dz
        };
        bins.push(Bin {
            z_lo,
            z_hi,
            members: start..end,
        });
        start = end;
    }
    debug_assert_eq!(start, pts.len());
    Ok(bins)
}

/// Bin score: the count of the current bin weighted by its relative contrast
/// against each neighbour, averaged over both sides.
pub fn score_bin(prev_count: usize, cur_count: usize, next_count: usize) -> f64 {
    let (p, c, n) = (prev_count as f64, cur_count as f64, next_count as f64);
    let s1 = (p - c).abs() / (p + c + 1.0) * c;
    let s2 = (c - n).abs() / (c + n + 1.0) * c;
    (s1 + s2) / 2.0
}

/// Scores every bin (missing edge neighbours count as empty) and returns the
/// index of the best one. Ties go to the lowest bin.
pub fn select_best_bin(bins: &[Bin]) -> Option<(usize, f64)> {
    let count = |i: Option<usize>| i.and_then(|i| bins.get(i)).map_or(0, Bin::count);
    let mut best: Option<(usize, f64)> = None;
    for (i, bin) in bins.iter().enumerate() {
        let s = score_bin(count(i.checked_sub(1)), bin.count(), count(Some(i + 1)));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementPass {
    pub dz: f64,
    pub bins: Vec<Bin>,
    pub best: usize,
    pub score: f64,
    /// Open z-interval kept by this pass.
    pub band: (f64, f64),
    pub retained: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRefinement {
    pub passes: Vec<RefinementPass>,
    pub cloud: PointCloud,
}

/// Iterative bin / score / band-cut refinement; see [`refine_ground_band_traced`].
pub fn refine_ground_band(cloud: &PointCloud, sched: &BinningSchedule) -> Result<PointCloud> {
    refine_ground_band_traced(cloud, sched).map(|r| r.cloud)
}

/// Same as [`refine_ground_band`] but keeps every intermediate pass.
pub fn refine_ground_band_traced(
    cloud: &PointCloud,
    sched: &BinningSchedule,
) -> Result<BandRefinement> {
    if cloud.is_empty() {
        return Err(Error::NoPoints);
    }
    sched.validate()?;
    check_sorted_valid(cloud)?;

    let mut current = cloud.clone();
    let mut passes = Vec::new();
    for dz in sched.widths() {
        let bins = bin_points(&current, dz)?;
        // bins is non-empty whenever current is.
        let (best, score) = select_best_bin(&bins).ok_or(Error::NoPoints)?;
        let members = bins[best].members.clone();
        // All-zero scores can land on an empty bin; fall back to its bounds.
        let (zb_min, zb_max) = if members.is_empty() {
            (bins[best].z_lo, bins[best].z_hi)
        } else {
            (
                current.points[members.start].z,
                current.points[members.end - 1].z,
            )
        };
        let band = (zb_min - dz / 2.0, zb_max + dz / 2.0);
        let retained = PointCloud {
            points: current
                .points
                .iter()
                .copied()
                .filter(|p| band.0 < p.z && p.z < band.1)
                .collect(),
            frame: current.frame.clone(),
        };
        current = retained.clone();
        passes.push(RefinementPass {
            dz,
            bins,
            best,
            score,
            band,
            retained,
        });
        if current.is_empty() {
            return Err(Error::NoPoints);
        }
    }
    Ok(BandRefinement {
        passes,
        cloud: current,
    })
}

/// Plane `normal · p + d = 0` with its inlier set.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub d: f64,
    /// Indices into the cloud the plane was fitted on.
    pub inliers: Vec<usize>,
    pub threshold: f64,
}

impl PlaneModel {
    pub fn distance(&self, p: &Point3) -> f64 {
        (self.normal.dot(&p.coords()) + self.d).abs()
    }

    /// Angle between the plane normal and `axis`, ignoring orientation.
    pub fn tilt_from(&self, axis: &Vector3<f64>) -> f64 {
        self.normal.dot(&axis.normalize()).abs().min(1.0).acos()
    }
}

pub const DEFAULT_RANSAC_THRESHOLD: f64 = 0.005;
pub const DEFAULT_RANSAC_ITERS: usize = 500;

fn inliers_of(points: &[Point3], normal: &Vector3<f64>, d: f64, threshold: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (normal.dot(&p.coords()) + d).abs() <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Total-least-squares plane through `points[idx]`: centroid plus the
/// eigenvector of the smallest covariance eigenvalue. The normal is oriented
/// so its largest-magnitude component is positive.
pub fn least_squares_plane(points: &[Point3], idx: &[usize]) -> Option<(Vector3<f64>, f64)> {
    if idx.len() < 3 {
        return None;
    }
    let n = idx.len() as f64;
    let centroid = idx
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + points[i].coords())
        / n;
    let cov = idx.iter().fold(Matrix3::zeros(), |acc, &i| {
        let r = points[i].coords() - centroid;
        acc + r * r.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut normal: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    let norm = normal.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return None;
    }
    normal /= norm;
    if normal[normal.iamax()] < 0.0 {
        normal = -normal;
    }
    Some((normal, -normal.dot(&centroid)))
}

/// Three-point RANSAC, followed by a least-squares refit over the winning
/// consensus set and a final inlier recount against the refitted plane.
/// Deterministic for a fixed `seed`.
pub fn fit_plane_ransac(
    points: &PointCloud,
    threshold: f64,
    max_iters: usize,
    seed: u64,
) -> Result<PlaneModel> {
    require(
        threshold > 0.0 && threshold.is_finite(),
        "threshold",
        "must be positive",
    )?;
    let pts: Vec<Point3> = points.iter().copied().filter(Point3::is_valid).collect();
    if pts.len() < 3 || pts.len() != points.len() {
        return Err(Error::PlaneFitFailed(if pts.len() < 3 {
            "fewer than 3 valid points".into()
        } else {
            "input contains invalid points".into()
        }));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..max_iters {
        let s = rand::seq::index::sample(&mut rng, pts.len(), 3);
        let (a, b, c) = (
            pts[s.index(0)].coords(),
            pts[s.index(1)].coords(),
            pts[s.index(2)].coords(),
        );
        let cross = (b - a).cross(&(c - a));
        let norm = cross.norm();
        // collinear sample
        if norm <= 1e-12 {
            continue;
        }
        let normal = cross / norm;
        let d = -normal.dot(&a);
        let count = pts
            .iter()
            .filter(|p| (normal.dot(&p.coords()) + d).abs() <= threshold)
            .count();
        if best.as_ref().is_none_or(|(n, _, _)| count > *n) {
            best = Some((count, normal, d));
        }
    }
    let (_, normal, d) =
        best.ok_or_else(|| Error::PlaneFitFailed("all samples were collinear".into()))?;

    let consensus = inliers_of(&pts, &normal, d, threshold);
    let (normal, d) = least_squares_plane(&pts, &consensus).unwrap_or((normal, d));
    let mut inliers = inliers_of(&pts, &normal, d, threshold);
    if inliers.is_empty() {
        inliers = consensus;
    }
    Ok(PlaneModel {
        normal,
        d,
        inliers,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundEstimate {
    pub plane: PlaneModel,
    /// Per-coordinate median of the plane inliers.
    pub g_c: Point3,
    /// `g_c` with y replaced by the smallest inlier y (closest to the robot).
    pub g_min: Point3,
    /// Sampling target: `g_min` shifted by [`APPROACH_OFFSET_Y`] along +y.
    pub approach: Point3,
}

impl GroundEstimate {
    /// `key=value` record, one key per line.
    pub fn to_record(&self) -> String {
        let v = |p: &Point3| format!("{},{},{}", p.x, p.y, p.z);
        let n = &self.plane.normal;
        let mut out = String::new();
        let _ = writeln!(out, "normal={},{},{}", n.x, n.y, n.z);
        let _ = writeln!(out, "d={}", self.plane.d);
        let _ = writeln!(out, "g_c={}", v(&self.g_c));
        let _ = writeln!(out, "g_min={}", v(&self.g_min));
        let _ = writeln!(out, "approach={}", v(&self.approach));
        let _ = writeln!(out, "inlier_count={}", self.plane.inliers.len());
        out
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Reads `g_c`, `g_min` and the approach point off the inliers of `plane`,
/// whose indices refer to `cloud`.
pub fn extract_ground_estimate(plane: &PlaneModel, cloud: &PointCloud) -> Result<GroundEstimate> {
    if plane.inliers.is_empty() {
        return Err(Error::NoInliers);
    }
    let inl: Vec<Point3> = plane
        .inliers
        .iter()
        .map(|&i| {
            cloud.points.get(i).copied().ok_or_else(|| {
                crate::error::invalid("plane", format!("inlier index {i} out of range"))
            })
        })
        .collect::<Result<_>>()?;

    let mut xs: Vec<f64> = inl.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = inl.iter().map(|p| p.y).collect();
    let mut zs: Vec<f64> = inl.iter().map(|p| p.z).collect();
    let g_c = Point3::new(median(&mut xs), median(&mut ys), median(&mut zs));
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let g_min = Point3::new(g_c.x, y_min, g_c.z);
    let approach = Point3::new(g_min.x, g_min.y + APPROACH_OFFSET_Y, g_min.z);
    Ok(GroundEstimate {
        plane: plane.clone(),
        g_c,
        g_min,
        approach,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub bounds: WorkspaceBounds,
    pub schedule: BinningSchedule,
    pub ransac_threshold: f64,
    pub ransac_max_iters: usize,
}

impl Default for DetectionConfig {
    /// Matches the default synthetic pot cell (table at z = 0, 13 cm pot).
    fn default() -> Self {
        Self {
            bounds: WorkspaceBounds {
                x_min: -0.3,
                x_max: 0.3,
                y_max: 0.3,
                z_table: 0.0,
                z_pot: 0.13,
                epsilon: 0.02,
            },
            schedule: BinningSchedule::default(),
            ransac_threshold: DEFAULT_RANSAC_THRESHOLD,
            ransac_max_iters: DEFAULT_RANSAC_ITERS,
        }
    }
}

impl DetectionConfig {
    /// Sets one parameter by its config key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = || parse_value::<f64>(key, value);
        let b = &mut self.bounds;
        match key {
            "x_min" => b.x_min = f()?,
            "x_max" => b.x_max = f()?,
            "y_max" => b.y_max = f()?,
            "z_table" => b.z_table = f()?,
            "z_pot" => b.z_pot = f()?,
            "epsilon" => b.epsilon = f()?,
            "dz_init" => self.schedule.dz_init = f()?,
            "shrink" => self.schedule.shrink = f()?,
            "dz_min" => self.schedule.dz_min = f()?,
            "ransac_threshold" => self.ransac_threshold = f()?,
            "ransac_max_iters" => self.ransac_max_iters = parse_value(key, value)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.schedule.validate()?;
        require(
            self.ransac_threshold > 0.0,
            "ransac_threshold",
            "must be positive",
        )?;
        require(
            self.ransac_max_iters > 0,
            "ransac_max_iters",
            "must be positive",
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub estimate: GroundEstimate,
    /// Points surviving the workspace filter.
    pub filtered: usize,
    pub refinement: BandRefinement,
}

/// Full chain on a cloud already expressed in the robot base frame:
/// workspace filter, band refinement, RANSAC, estimate extraction.
pub fn detect_ground(world: &PointCloud, cfg: &DetectionConfig, seed: u64) -> Result<Detection> {
    let filtered = workspace_filter(world, &cfg.bounds)?;
    let refinement = refine_ground_band_traced(&filtered, &cfg.schedule)?;
    let plane = fit_plane_ransac(
        &refinement.cloud,
        cfg.ransac_threshold,
        cfg.ransac_max_iters,
        seed,
    )?;
    let estimate = extract_ground_estimate(&plane, &refinement.cloud)?;
    Ok(Detection {
        estimate,
        filtered: filtered.len(),
        refinement,
    })
}
