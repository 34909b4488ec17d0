//! Geometric primitives: points, rigid transforms, the structured-workspace
//! pass-through filter, and the plain-text point-cloud format.
//!
//! Text format: one point per line as `x,y,z` in meters. Lines starting with
//! `#` are comments; a `# frame=<tag>` comment carries the source-frame tag.
//! `nan` is accepted for any field. Values are written with 9 significant
//! digits, so `write(read(write(c))) == write(c)` byte for byte.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{require, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// A point is valid iff all three coordinates are finite.
    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.coords() - other.coords()).norm()
    }
}

impl From<Vector3<f64>> for Point3 {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Orthonormality tolerance accepted by [`RigidTransform::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

impl RigidTransform {
    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1 within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        require(
            rotation
                .iter()
                .chain(translation.iter())
                .all(|v| v.is_finite()),
            "rotation",
            "entries must be finite",
        )?;
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        require(
            defect <= ROTATION_TOLERANCE,
            "rotation",
            "matrix is not orthonormal",
        )?;
        require(
            (rotation.determinant() - 1.0).abs() <= ROTATION_TOLERANCE,
            "rotation",
            "determinant must be +1",
        )?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation of `angle` radians about `axis` followed by translation `t`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, t: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation: t,
        }
    }

    /// Camera-style pose at `eye` whose +z axis looks at `target`, with +y
    /// pointing as close to `down` as possible (optical frame convention).
    pub fn look_at(eye: Point3, target: Point3, down: Vector3<f64>) -> Result<Self> {
        let forward = target.coords() - eye.coords();
        require(forward.norm() > 1e-12, "target", "must differ from eye")?;
        let z = forward.normalize();
        let x = down.cross(&z);
        require(
            x.norm() > 1e-12,
            "down",
            "must not be parallel to the view axis",
        )?;
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Self::new(rotation, eye.coords())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        compose(self, other)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        transform_point(self, p)
    }
}

/// `R·p + t`. NaN coordinates propagate to the output.
pub fn transform_point(t: &RigidTransform, p: &Point3) -> Point3 {
    Point3::from(t.rotation * p.coords() + t.translation)
}

/// Chained transform with `compose(a, b).apply(p) == a.apply(b.apply(p))`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

/// Reachable-workspace box of the structured greenhouse cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    /// Table-top height.
    pub z_table: f64,
    /// Pot height above the table.
    pub z_pot: f64,
    /// Slack above the pot rim.
    pub epsilon: f64,
}

impl WorkspaceBounds {
    pub fn new(
        x_min: f64,
        x_max: f64,
        y_max: f64,
        z_table: f64,
        z_pot: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let b = Self {
            x_min,
            x_max,
            y_max,
            z_table,
            z_pot,
            epsilon,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            [
                self.x_min,
                self.x_max,
                self.y_max,
                self.z_table,
                self.z_pot,
                self.epsilon,
            ]
            .iter()
            .all(|v| v.is_finite()),
            "bounds",
            "all bounds must be finite",
        )?;
        require(self.x_min < self.x_max, "x_min", "must be below x_max")?;
        require(self.z_pot > 0.0, "z_pot", "must be positive")?;
        require(self.epsilon > 0.0, "epsilon", "must be positive")
    }

    /// Strict-inequality membership test; boundary points are outside.
    pub fn contains(&self, p: &Point3) -> bool {
        p.is_valid()
            && self.x_min < p.x
            && p.x < self.x_max
            && p.y < self.y_max
            && self.z_table < p.z
            && p.z < self.z_table + self.z_pot + self.epsilon
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            frame: None,
        }
    }

    pub fn with_frame(points: Vec<Point3>, frame: impl Into<String>) -> Self {
        Self {
            points,
            frame: Some(frame.into()),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Stable ascending sort on z. Invalid points are moved to the end.
    pub fn sort_by_z(&mut self) {
        self.points
            .sort_by(|a, b| match (a.is_valid(), b.is_valid()) {
                (true, true) => a.z.total_cmp(&b.z),
                (true, false) => std::cmp::Ordering::Less,
                (false, true) => std::cmp::Ordering::Greater,
                (false, false) => std::cmp::Ordering::Equal,
            });
    }

    pub fn is_sorted_by_z(&self) -> bool {
        self.points.windows(2).all(|w| w[0].z <= w[1].z)
    }

    /// Applies `t` to every point; the result is tagged with `frame`.
    pub fn transformed(&self, t: &RigidTransform, frame: impl Into<String>) -> PointCloud {
        PointCloud::with_frame(self.points.iter().map(|p| t.apply(p)).collect(), frame)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 40);
        if let Some(frame) = &self.frame {
            let _ = writeln!(out, "# frame={frame}");
        }
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{}",
                format_sig9(p.x),
                format_sig9(p.y),
                format_sig9(p.z)
            );
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cloud = PointCloud::default();
        for (idx, raw) in text.lines().enumerate() {
            parse_line(&mut cloud, idx + 1, raw)?;
        }
        Ok(cloud)
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut cloud = PointCloud::default();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            parse_line(&mut cloud, idx + 1, &line)?;
        }
        Ok(cloud)
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

fn parse_line(cloud: &mut PointCloud, line: usize, raw: &str) -> Result<()> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(());
    }
    if let Some(comment) = trimmed.strip_prefix('#') {
        if let Some(tag) = comment.trim().strip_prefix("frame=") {
            cloud.frame = Some(tag.trim().to_string());
        }
        return Ok(());
    }
    let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(Error::Parse {
            line,
            message: format!("expected 3 comma-separated fields, found {}", fields.len()),
        });
    }
    let mut xyz = [0.0; 3];
    for (slot, field) in xyz.iter_mut().zip(&fields) {
        *slot = field.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("`{field}` is not a number"),
        })?;
    }
    cloud.points.push(Point3::from(xyz));
    Ok(())
}

/// Plain-decimal rendering with 9 significant digits (`nan` for NaN).
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".to_string();
    }
    // Take the exponent after rounding so 9.9999999996 renders as 10.0000000.
    let sci = format!("{v:.8e}");
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    let decimals = (8 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Pass-through filter: keeps valid points inside `bounds`, sorted by z.
pub fn workspace_filter(cloud: &PointCloud, bounds: &WorkspaceBounds) -> Result<PointCloud> {
    bounds.validate()?;
    let mut out = PointCloud {
        points: cloud
            .points
            .iter()
            .copied()
            .filter(|p| bounds.contains(p))
            .collect(),
        frame: cloud.frame.clone(),
    };
    out.sort_by_z();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn bounds() -> WorkspaceBounds {
        WorkspaceBounds::new(-0.5, 0.5, 0.9, 0.70, 0.20, 0.02).unwrap()
    }

    #[test]
    fn identity_and_translation() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&RigidTransform::identity(), &p), p);
        let t = RigidTransform::from_translation(0.0, 0.0, 0.5);
        assert_eq!(
            transform_point(&t, &Point3::origin()),
            Point3::new(0.0, 0.0, 0.5)
        );
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let q = t.apply(&Point3::new(1.0, 0.0, 0.0));
        assert!((q.x - 0.0).abs() < 1e-12 && (q.y - 1.0).abs() < 1e-12 && q.z.abs() < 1e-12);
    }

    #[test]
    fn nan_propagates() {
        let t = RigidTransform::from_axis_angle(Vector3::x(), 0.3, Vector3::new(1.0, 2.0, 3.0));
        let q = t.apply(&Point3::new(f64::NAN, 0.0, 0.0));
        assert!(!q.is_valid());
    }

    #[test]
    fn compose_cases() {
        let t = RigidTransform::from_axis_angle(
            Vector3::new(1.0, 2.0, 0.5),
            0.7,
            Vector3::new(0.1, -0.2, 0.3),
        );
        let c = compose(&RigidTransform::identity(), &t);
        assert!((c.rotation() - t.rotation()).amax() < 1e-15);
        let ident = compose(&t, &t.inverse());
        assert!((ident.rotation() - Matrix3::identity()).amax() < 1e-10);
        assert!(ident.translation().amax() < 1e-10);
        let sum = compose(
            &RigidTransform::from_translation(0.0, 0.0, 0.1),
            &RigidTransform::from_translation(0.0, 0.0, 0.2),
        );
        assert!((sum.translation().z - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        let s = Matrix3::identity() * 1.01;
        assert!(RigidTransform::new(s, Vector3::zeros()).is_err());
    }

    #[test]
    fn filter_examples() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.4, 0.69),
            Point3::new(0.0, f64::NAN, 0.8),
            Point3::new(0.0, 0.4, 0.85),
            Point3::new(0.0, 0.4, 0.75),
            // exactly on the table top / x bound: excluded
            Point3::new(0.0, 0.4, 0.70),
            Point3::new(0.5, 0.4, 0.80),
            Point3::new(0.0, 0.9, 0.80),
            Point3::new(0.0, 0.4, 0.93),
        ]);
        let out = workspace_filter(&cloud, &bounds()).unwrap();
        assert_eq!(
            out.points,
            vec![Point3::new(0.0, 0.4, 0.75), Point3::new(0.0, 0.4, 0.85)]
        );
    }

    #[test]
    fn filter_may_be_empty() {
        let out = workspace_filter(
            &PointCloud::new(vec![Point3::new(9.0, 9.0, 9.0)]),
            &bounds(),
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(WorkspaceBounds::new(0.5, -0.5, 0.9, 0.7, 0.2, 0.02).is_err());
        assert!(WorkspaceBounds::new(-0.5, 0.5, 0.9, 0.7, 0.0, 0.02).is_err());
        assert!(WorkspaceBounds::new(-0.5, 0.5, 0.9, 0.7, 0.2, 0.0).is_err());
    }

    #[test]
    fn text_format_parses_comments_and_nan() {
        let text = "# frame=camera\n# a comment\n0.1,0.2,0.3\n\nnan, 1e-3 ,-2\nNaN,0,0\n";
        let c = PointCloud::from_text(text).unwrap();
        assert_eq!(c.frame.as_deref(), Some("camera"));
        assert_eq!(c.len(), 3);
        assert!(c.points[1].x.is_nan());
        assert_eq!(c.points[1].y, 1e-3);
        assert!(PointCloud::from_text("1,2\n").is_err());
        assert!(matches!(
            PointCloud::from_text("1,2,x\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.85), "0.850000000");
        assert_eq!(format_sig9(-123.456), "-123.456000");
        assert_eq!(format_sig9(9.9999999996), "10.0000000");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(f64::NAN), "nan");
    }

    fn finite() -> impl Strategy<Value = f64> {
        -1.0e3f64..1.0e3
    }

    fn point() -> impl Strategy<Value = Point3> {
        (finite(), finite(), finite()).prop_map(|(x, y, z)| Point3::new(x, y, z))
    }

    fn transform() -> impl Strategy<Value = RigidTransform> {
        (
            (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
            -3.1f64..3.1,
            (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        )
            .prop_map(|((ax, ay, az), ang, (tx, ty, tz))| {
                RigidTransform::from_axis_angle(
                    Vector3::new(ax, ay, az),
                    ang,
                    Vector3::new(tx, ty, tz),
                )
            })
    }

    proptest! {
        #[test]
        fn text_round_trip_is_stable(pts in proptest::collection::vec(point(), 0..20)) {
            let once = PointCloud::new(pts).to_text();
            let twice = PointCloud::from_text(&once).unwrap().to_text();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn transform_preserves_distances(t in transform(), a in point(), b in point()) {
            let d0 = a.distance(&b);
            let d1 = t.apply(&a).distance(&t.apply(&b));
            prop_assert!((d0 - d1).abs() <= 1e-10 * d0.max(1.0));
        }

        #[test]
        fn compose_matches_sequential(t1 in transform(), t2 in transform(), p in point()) {
            let a = compose(&t1, &t2).apply(&p);
            let b = t1.apply(&t2.apply(&p));
            prop_assert!(a.distance(&b) <= 1e-10 * p.coords().norm().max(1.0));
        }

        #[test]
        fn filter_idempotent_and_permutation_invariant(
            pts in proptest::collection::vec(
                (-0.7f64..0.7, 0.5f64..1.1, 0.6f64..1.0).prop_map(|(x, y, z)| Point3::new(x, y, z)),
                0..60,
            ),
            seed in any::<u64>(),
        ) {
            let b = bounds();
            let cloud = PointCloud::new(pts.clone());
            let once = workspace_filter(&cloud, &b).unwrap();
            let twice = workspace_filter(&once, &b).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.is_sorted_by_z());

            let mut shuffled = pts;
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let other = workspace_filter(&PointCloud::new(shuffled), &b).unwrap();
            let key = |p: &Point3| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
            let mut l: Vec<_> = once.points.iter().map(key).collect();
            let mut r: Vec<_> = other.points.iter().map(key).collect();
            l.sort();
            r.sort();
            prop_assert_eq!(l, r);
        }
    }
}
