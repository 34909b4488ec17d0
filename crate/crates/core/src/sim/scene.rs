//! Synthetic depth-camera view of a potted plant on a table.
//!
//! Plant geometry (soil relief, leaves) is fixed by `plant_seed`; the
//! per-call seed picks the camera viewpoint and the measurement noise. The
//! cloud is returned in the camera optical frame together with the
//! base-from-flange and flange-from-camera transforms needed to bring it back
//! into the robot base frame, where the table is the plane z = 0.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::parse_value;
use crate::error::{require, Error, Result};
use crate::ground::{GroundEstimate, PlaneModel, APPROACH_OFFSET_Y, DEFAULT_RANSAC_THRESHOLD};
use crate::pointcloud::{Point3, PointCloud, RigidTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct PotSceneParams {
    pub pot_radius: f64,
    pub pot_height: f64,
    pub wall_thickness: f64,
    /// Pot axis position on the table.
    pub center: (f64, f64),
    /// Nominal soil height above the table.
    pub soil_height: f64,
    /// Peak deviation of the soil relief from the nominal height (≤ 1 cm).
    pub roughness: f64,
    /// Per-point depth noise (m).
    pub depth_noise_std: f64,
    pub foliage: bool,
    pub leaf_count: usize,
    pub leaf_radius: f64,
    /// Camera occlusion by the pot walls and leaves.
    pub occlusion: bool,
    pub soil_points: usize,
    pub wall_points: usize,
    pub table_points: usize,
    pub points_per_leaf: usize,
    /// Fraction of returns replaced by NaN (missing depth).
    pub invalid_fraction: f64,
    pub camera_distance: (f64, f64),
    /// Camera elevation above the table plane (rad).
    pub camera_elevation: (f64, f64),
    /// Maximum camera azimuth away from the −y axis (rad).
    pub camera_azimuth: f64,
    pub plant_seed: u64,
}

impl Default for PotSceneParams {
    fn default() -> Self {
        Self {
            pot_radius: 0.10,
            pot_height: 0.13,
            wall_thickness: 0.006,
            center: (0.0018, 0.0008),
            soil_height: 0.1102,
            roughness: 0.005,
            depth_noise_std: 0.0005,
            foliage: true,
            leaf_count: 5,
            leaf_radius: 0.02,
            occlusion: true,
            soil_points: 6000,
            wall_points: 2500,
            table_points: 5000,
            points_per_leaf: 300,
            invalid_fraction: 0.02,
            camera_distance: (0.45, 0.65),
            camera_elevation: (50f64.to_radians(), 80f64.to_radians()),
            camera_azimuth: 45f64.to_radians(),
            plant_seed: 2024,
        }
    }
}

impl PotSceneParams {
    /// A flat, uncluttered, noise-free pot.
    pub fn clean() -> Self {
        Self {
            roughness: 0.0,
            depth_noise_std: 0.0,
            foliage: false,
            invalid_fraction: 0.0,
            ..Self::default()
        }
    }

    /// Sets one parameter by its config key. Angles are given in degrees.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = || parse_value::<f64>(key, value);
        let range = |v: &str| -> Result<(f64, f64)> {
            let (a, b) = v.split_once(',').ok_or_else(|| Error::InvalidValue {
                key: key.to_string(),
                message: format!("`{v}`: expected `lo,hi`"),
            })?;
            Ok((parse_value(key, a.trim())?, parse_value(key, b.trim())?))
        };
        match key {
            "pot_radius" => self.pot_radius = f()?,
            "pot_height" => self.pot_height = f()?,
            "wall_thickness" => self.wall_thickness = f()?,
            "pot_center" => self.center = range(value)?,
            "soil_height" => self.soil_height = f()?,
            "roughness" => self.roughness = f()?,
            "depth_noise_std" => self.depth_noise_std = f()?,
            "foliage" => self.foliage = parse_value(key, value)?,
            "leaf_count" => self.leaf_count = parse_value(key, value)?,
            "leaf_radius" => self.leaf_radius = f()?,
            "occlusion" => self.occlusion = parse_value(key, value)?,
            "soil_points" => self.soil_points = parse_value(key, value)?,
            "wall_points" => self.wall_points = parse_value(key, value)?,
            "table_points" => self.table_points = parse_value(key, value)?,
            "points_per_leaf" => self.points_per_leaf = parse_value(key, value)?,
            "invalid_fraction" => self.invalid_fraction = f()?,
            "camera_distance" => self.camera_distance = range(value)?,
            "camera_elevation_deg" => {
                let (a, b) = range(value)?;
                self.camera_elevation = (a.to_radians(), b.to_radians());
            }
            "camera_azimuth_deg" => self.camera_azimuth = f()?.to_radians(),
            "plant_seed" => self.plant_seed = parse_value(key, value)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        require(self.pot_radius > 0.0, "pot_radius", "must be positive")?;
        require(self.pot_height > 0.0, "pot_height", "must be positive")?;
        require(
            self.wall_thickness >= 0.0 && self.wall_thickness < self.pot_radius,
            "wall_thickness",
            "must lie in [0, pot_radius)",
        )?;
        require(
            self.soil_height > 0.0 && self.soil_height < self.pot_height,
            "soil_height",
            "must lie inside the pot",
        )?;
        require(
            (0.0..=0.01).contains(&self.roughness),
            "roughness",
            "must lie in [0, 0.01] m",
        )?;
        require(
            self.depth_noise_std >= 0.0,
            "depth_noise_std",
            "must be non-negative",
        )?;
        require(self.leaf_radius > 0.0, "leaf_radius", "must be positive")?;
        require(
            (0.0..1.0).contains(&self.invalid_fraction),
            "invalid_fraction",
            "must lie in [0, 1)",
        )?;
        require(
            0.0 < self.camera_distance.0 && self.camera_distance.0 <= self.camera_distance.1,
            "camera_distance",
            "must be a positive, ordered range",
        )?;
        require(
            0.0 < self.camera_elevation.0
                && self.camera_elevation.0 <= self.camera_elevation.1
                && self.camera_elevation.1 <= PI / 2.0,
            "camera_elevation",
            "must be an ordered range within (0, π/2]",
        )?;
        require(
            (0.0..PI).contains(&self.camera_azimuth),
            "camera_azimuth",
            "must lie in [0, π)",
        )
    }
}

/// Smooth soil relief: a normalised sum of plane waves, bounded by the
/// roughness amplitude.
#[derive(Debug, Clone, PartialEq)]
struct Relief {
    waves: Vec<(f64, f64, f64, f64)>,
    amplitude: f64,
}

impl Relief {
    fn new(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let waves: Vec<_> = (0..5)
            .map(|_| {
                let dir = rng.random_range(0.0..TAU);
                let freq = rng.random_range(15.0..60.0);
                (
                    freq * dir.cos(),
                    freq * dir.sin(),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.3..1.0),
                )
            })
            .collect();
        Self { waves, amplitude }
    }

    fn height(&self, x: f64, y: f64) -> f64 {
        let total: f64 = self.waves.iter().map(|w| w.3).sum();
        let h: f64 = self
            .waves
            .iter()
            .map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin())
            .sum();
        self.amplitude * h / total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Leaf {
    center: Vector3<f64>,
    normal: Vector3<f64>,
    radius: f64,
}

impl Leaf {
    /// Whether the segment `a → b` passes through the leaf disc.
    fn blocks(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        let d = b - a;
        let denom = self.normal.dot(&d);
        if denom.abs() < 1e-12 {
            return false;
        }
        let s = self.normal.dot(&(self.center - a)) / denom;
        s > 1e-6 && s < 1.0 && (a + d * s - self.center).norm() < self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotScene {
    /// Points in the camera optical frame.
    pub cloud: PointCloud,
    pub base_from_flange: RigidTransform,
    pub flange_from_camera: RigidTransform,
    /// Soil surface reference: plane z = soil height, `g_c` on the pot axis,
    /// `g_min` at the near edge of the soil disc. Carries no inliers.
    pub truth: GroundEstimate,
    pub params: PotSceneParams,
    relief: Relief,
}

impl PotScene {
    pub fn base_from_camera(&self) -> RigidTransform {
        self.base_from_flange.compose(&self.flange_from_camera)
    }

    /// The cloud expressed in the robot base frame.
    pub fn world_cloud(&self) -> PointCloud {
        self.cloud.transformed(&self.base_from_camera(), "base")
    }

    /// Actual soil height at `(x, y)` including the relief.
    pub fn surface_height(&self, x: f64, y: f64) -> f64 {
        self.params.soil_height + self.relief.height(x, y)
    }
}

struct Geometry<'a> {
    p: &'a PotSceneParams,
    eye: Vector3<f64>,
    leaves: Vec<Leaf>,
}

impl Geometry<'_> {
    fn radial(&self, v: &Vector3<f64>) -> (f64, f64) {
        (v.x - self.p.center.0, v.y - self.p.center.1)
    }

    /// Largest ray parameter in `[0, 1]` at which the segment to the eye is
    /// still within horizontal distance `r` of the pot axis.
    fn exit_param(&self, a: &Vector3<f64>, r: f64) -> Option<f64> {
        let d = self.eye - a;
        let (px, py) = self.radial(a);
        let qa = d.x * d.x + d.y * d.y;
        let qb = 2.0 * (px * d.x + py * d.y);
        let qc = px * px + py * py - r * r;
        if qa < 1e-15 {
            return (qc <= 0.0).then_some(1.0);
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let s_hi = (-qb + disc.sqrt()) / (2.0 * qa);
        (s_hi >= 0.0).then(|| s_hi.min(1.0))
    }

    /// Point inside the pot sees the camera only through the opening.
    fn sees_out_of_pot(&self, a: &Vector3<f64>) -> bool {
        let r_in = self.p.pot_radius - self.p.wall_thickness;
        match self.exit_param(a, r_in) {
            Some(s) => a.z + s * (self.eye.z - a.z) >= self.p.pot_height,
            None => true,
        }
    }

    /// Point outside the pot is hidden if its ray crosses the pot body.
    fn blocked_by_pot(&self, a: &Vector3<f64>) -> bool {
        let d = self.eye - a;
        let (px, py) = self.radial(a);
        let r = self.p.pot_radius;
        let qa = d.x * d.x + d.y * d.y;
        if qa < 1e-15 {
            return false;
        }
        let qb = 2.0 * (px * d.x + py * d.y);
        let qc = px * px + py * py - r * r;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return false;
        }
        let s0 = ((-qb - disc.sqrt()) / (2.0 * qa)).max(1e-9);
        let s1 = ((-qb + disc.sqrt()) / (2.0 * qa)).min(1.0);
        // height is monotone along the ray, so checking the entry suffices
        s0 < s1 && a.z + s0 * d.z <= self.p.pot_height
    }

    fn blocked_by_leaf(&self, a: &Vector3<f64>) -> bool {
        self.leaves.iter().any(|l| l.blocks(a, &self.eye))
    }
}

fn build_leaves(p: &PotSceneParams, rng: &mut ChaCha8Rng) -> Vec<Leaf> {
    if !p.foliage {
        return Vec::new();
    }
    (0..p.leaf_count)
        .map(|i| {
            let ang = TAU * i as f64 / p.leaf_count as f64 + rng.random_range(-0.3..0.3);
            let reach = rng.random_range(0.03..0.09);
            let z = p.pot_height + rng.random_range(0.02..0.10);
            let tilt = rng.random_range(0.2..0.7);
            let normal = Vector3::new(tilt * ang.cos(), tilt * ang.sin(), 1.0).normalize();
            Leaf {
                center: Vector3::new(
                    p.center.0 + reach * ang.cos(),
                    p.center.1 + reach * ang.sin(),
                    z,
                ),
                normal,
                radius: p.leaf_radius * rng.random_range(0.7..1.0),
            }
        })
        .collect()
}

fn disc_sample(rng: &mut ChaCha8Rng, r: f64) -> (f64, f64) {
    let rho = r * rng.random::<f64>().sqrt();
    let th = rng.random_range(0.0..TAU);
    (rho * th.cos(), rho * th.sin())
}

/// Fixed hand-eye calibration: camera 6 cm ahead of and 3 cm beside the
/// flange, looking along the flange z axis.
fn hand_eye() -> RigidTransform {
    RigidTransform::from_axis_angle(Vector3::z(), PI / 2.0, Vector3::new(0.03, 0.0, 0.06))
}

pub fn generate_pot_scene(params: &PotSceneParams, seed: u64) -> Result<PotScene> {
    params.validate()?;
    let p = params;
    let mut plant_rng = ChaCha8Rng::seed_from_u64(p.plant_seed);
    let relief = Relief::new(&mut plant_rng, p.roughness);
    let leaves = build_leaves(p, &mut plant_rng);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = rng.random_range(p.camera_distance.0..=p.camera_distance.1);
    let elev = rng.random_range(p.camera_elevation.0..=p.camera_elevation.1);
    let azim = if p.camera_azimuth > 0.0 {
        rng.random_range(-p.camera_azimuth..=p.camera_azimuth)
    } else {
        0.0
    };
    let target = Vector3::new(p.center.0, p.center.1, p.soil_height);
    let horiz = Vector3::new(azim.sin(), -azim.cos(), 0.0);
    let eye = target + dist * (elev.cos() * horiz + elev.sin() * Vector3::z());

    let base_from_camera =
        RigidTransform::look_at(Point3::from(eye), Point3::from(target), -Vector3::z()).or_else(
            |_| RigidTransform::look_at(Point3::from(eye), Point3::from(target), Vector3::y()),
        )?;
    let flange_from_camera = hand_eye();
    let base_from_flange = base_from_camera.compose(&flange_from_camera.inverse());
    let camera_from_base = base_from_camera.inverse();

    let geo = Geometry { p, eye, leaves };
    let noise = Normal::new(0.0, p.depth_noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut pts: Vec<Vector3<f64>> = Vec::new();
    let (cx, cy) = p.center;
    let r_in = p.pot_radius - p.wall_thickness;
    let occl = p.occlusion;

    for _ in 0..p.soil_points {
        let (dx, dy) = disc_sample(&mut rng, r_in);
        let (x, y) = (cx + dx, cy + dy);
        let v = Vector3::new(x, y, p.soil_height + relief.height(x, y));
        if !occl || (geo.sees_out_of_pot(&v) && !geo.blocked_by_leaf(&v)) {
            pts.push(v);
        }
    }

    let wall_band = p.pot_height - p.soil_height;
    for _ in 0..p.wall_points {
        let th = rng.random_range(0.0..TAU);
        let (c, s) = (th.cos(), th.sin());
        match rng.random_range(0..3u8) {
            0 => {
                let v = Vector3::new(
                    cx + r_in * c,
                    cy + r_in * s,
                    p.soil_height + wall_band * rng.random::<f64>(),
                );
                let to_eye = geo.eye - v;
                let faces = -(c * to_eye.x + s * to_eye.y) > 0.0;
                if !occl || (faces && geo.sees_out_of_pot(&v) && !geo.blocked_by_leaf(&v)) {
                    pts.push(v);
                }
            }
            1 => {
                let r = rng.random_range(r_in..=p.pot_radius);
                let v = Vector3::new(cx + r * c, cy + r * s, p.pot_height);
                if !occl || !geo.blocked_by_leaf(&v) {
                    pts.push(v);
                }
            }
            _ => {
                let v = Vector3::new(
                    cx + p.pot_radius * c,
                    cy + p.pot_radius * s,
                    p.pot_height * rng.random::<f64>(),
                );
                let to_eye = geo.eye - v;
                if !occl || (c * to_eye.x + s * to_eye.y > 0.0 && !geo.blocked_by_leaf(&v)) {
                    pts.push(v);
                }
            }
        }
    }

    for _ in 0..p.table_points {
        let v = Vector3::new(
            cx + rng.random_range(-0.35..0.35),
            cy + rng.random_range(-0.35..0.35),
            0.0,
        );
        let (dx, dy) = geo.radial(&v);
        if dx.hypot(dy) <= p.pot_radius {
            continue;
        }
        if !occl || (!geo.blocked_by_pot(&v) && !geo.blocked_by_leaf(&v)) {
            pts.push(v);
        }
    }

    if p.foliage {
        let stem_top = geo
            .leaves
            .iter()
            .map(|l| l.center.z)
            .fold(p.pot_height, f64::max);
        for _ in 0..p.points_per_leaf / 2 {
            let z = rng.random_range(p.soil_height..stem_top);
            let th = rng.random_range(0.0..TAU);
            pts.push(Vector3::new(
                cx + 0.004 * th.cos(),
                cy + 0.004 * th.sin(),
                z,
            ));
        }
        for leaf in &geo.leaves {
            let u = leaf.normal.cross(&Vector3::x()).normalize();
            let w = leaf.normal.cross(&u);
            for _ in 0..p.points_per_leaf {
                let (a, b) = disc_sample(&mut rng, leaf.radius);
                let v = leaf.center + a * u + b * w;
                let facing = leaf.normal.dot(&(geo.eye - v)) > 0.0;
                if !occl || facing {
                    pts.push(v);
                }
            }
        }
    }

    let mut cam: Vec<Point3> = pts
        .iter()
        .map(|v| {
            let mut c = camera_from_base.apply(&Point3::from(*v));
            if p.depth_noise_std > 0.0 {
                // range noise along the viewing ray
                let ray = c.coords();
                let n = ray.norm();
                let scaled = ray * ((n + noise.sample(&mut rng)) / n);
                c = Point3::from(scaled);
            }
            c
        })
        .collect();
    for pt in cam.iter_mut() {
        if rng.random::<f64>() < p.invalid_fraction {
            *pt = Point3::new(f64::NAN, f64::NAN, f64::NAN);
        }
    }

    let g_c = Point3::new(cx, cy, p.soil_height);
    let g_min = Point3::new(cx, cy - r_in, p.soil_height);
    let truth = GroundEstimate {
        plane: PlaneModel {
            normal: Vector3::z(),
            d: -p.soil_height,
            inliers: Vec::new(),
            threshold: DEFAULT_RANSAC_THRESHOLD,
        },
        g_c,
        g_min,
        approach: Point3::new(g_min.x, g_min.y + APPROACH_OFFSET_Y, g_min.z),
    };

    Ok(PotScene {
        cloud: PointCloud::with_frame(cam, "camera"),
        base_from_flange,
        flange_from_camera,
        truth,
        params: p.clone(),
        relief,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relief_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Relief::new(&mut rng, 0.005);
        for i in 0..200 {
            for j in 0..200 {
                let h = r.height(-0.1 + i as f64 * 1e-3, -0.1 + j as f64 * 1e-3);
                assert!(h.abs() <= 0.005);
            }
        }
    }

    #[test]
    fn frames_chain_back_to_base() {
        let scene = generate_pot_scene(&PotSceneParams::default(), 3).unwrap();
        let world = scene.world_cloud();
        assert_eq!(world.len(), scene.cloud.len());
        let valid: Vec<_> = world.iter().filter(|p| p.is_valid()).collect();
        assert!(valid.iter().all(|p| p.z > -0.01 && p.z < 0.3));
        assert!(valid.iter().any(|p| p.z.abs() < 0.003));
        assert_eq!(scene.cloud.frame.as_deref(), Some("camera"));
    }

    #[test]
    fn same_seed_same_scene() {
        let p = PotSceneParams::default();
        let a = generate_pot_scene(&p, 11).unwrap();
        let b = generate_pot_scene(&p, 11).unwrap();
        assert_eq!(a.cloud.to_text(), b.cloud.to_text());
        let c = generate_pot_scene(&p, 12).unwrap();
        assert_ne!(a.cloud.to_text(), c.cloud.to_text());
        assert_eq!(a.surface_height(0.01, 0.02), c.surface_height(0.01, 0.02));
    }

    #[test]
    fn occlusion_hides_near_soil() {
        let p = PotSceneParams {
            foliage: false,
            ..PotSceneParams::default()
        };
        let open = PotSceneParams {
            occlusion: false,
            ..p.clone()
        };
        let seen = generate_pot_scene(&p, 4).unwrap().world_cloud();
        let all = generate_pot_scene(&open, 4).unwrap().world_cloud();
        let soil = |c: &PointCloud| {
            c.iter()
                .filter(|q| (q.z - p.soil_height).abs() < 0.008)
                .count()
        };
        assert!(soil(&seen) < soil(&all));
    }

    #[test]
    fn rejects_bad_params() {
        let bad = PotSceneParams {
            pot_radius: 0.0,
            ..Default::default()
        };
        assert!(generate_pot_scene(&bad, 0).is_err());
        let bad = PotSceneParams {
            roughness: 0.02,
            ..Default::default()
        };
        assert!(generate_pot_scene(&bad, 0).is_err());
    }
}
