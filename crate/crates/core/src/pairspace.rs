//! The 8-dimensional feature space of a pair of Gaussian components.
//!
//! A pair `(u, v)` is described by `(tau, mu, su_x, su_y, sv_x, sv_y,
//! theta_u, theta_v)`: the weight ratio, the distance between centers, and
//! the rotation/scale decomposition `cov = R S^2 R^T` of each covariance.
//! Alignment rotates the pair so the centers lie along the y-axis and
//! rescales it so the largest length equals one.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{Covariance2, MixtureModel, Point2D};

/// Relative eigenvalue gap under which a covariance is treated as isotropic.
const ISOTROPY_GAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    /// Orientation of the first axis, radians.
    pub theta: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl ShapeParams {
    pub const fn new(theta: f64, sigma_x: f64, sigma_y: f64) -> Self {
        Self { theta, sigma_x, sigma_y }
    }

    pub fn is_valid(&self) -> bool {
        self.sigma_x > 0.0 && self.sigma_y > 0.0 && self.theta.is_finite() && self.sigma_x.is_finite() && self.sigma_y.is_finite()
    }
}

/// Wrap an angle into `(-pi/2, pi/2]`; ellipse orientation has period pi.
pub fn wrap_half_turn(theta: f64) -> f64 {
    if theta > -FRAC_PI_2 && theta <= FRAC_PI_2 {
        return theta;
    }
    let r = theta.rem_euclid(PI);
    if r > FRAC_PI_2 {
        r - PI
    } else {
        r
    }
}

/// `R S^2 R^T` for rotation angle `theta` and axis scales `sigma_x`, `sigma_y`.
pub fn compose_covariance(shape: &ShapeParams) -> Covariance2 {
    let (s, c) = shape.theta.sin_cos();
    let (a, b) = (shape.sigma_x * shape.sigma_x, shape.sigma_y * shape.sigma_y);
    Covariance2::new(c * c * a + s * s * b, c * s * (a - b), s * s * a + c * c * b)
}

/// Inverse of [`compose_covariance`] with a canonical representative:
/// `sigma_x >= sigma_y`, `theta` in `(-pi/2, pi/2]` is the orientation of the
/// larger axis, and isotropic matrices get `theta = 0`.
pub fn decompose_covariance(cov: &Covariance2) -> Result<ShapeParams> {
    if !cov.is_positive_definite() {
        return Err(Error::Domain(format!("covariance {cov:?} is not positive definite")));
    }
    let half_trace = 0.5 * (cov.xx + cov.yy);
    let half_diff = 0.5 * (cov.xx - cov.yy);
    let radius = half_diff.hypot(cov.xy);
    let major = half_trace + radius;
    // det / major is exact where half_trace - radius cancels.
    let minor = cov.det() / major;
    let theta = if radius <= ISOTROPY_GAP * half_trace {
        0.0
    } else {
        wrap_half_turn(0.5 * cov.xy.atan2(half_diff))
    };
    Ok(ShapeParams::new(theta, major.sqrt(), minor.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub tau: f64,
    pub mu: f64,
    pub shape_u: ShapeParams,
    pub shape_v: ShapeParams,
}

/// Column order of the feature vector.
pub const FEATURE_NAMES: [&str; 8] =
    ["tau", "mu", "sigma_ux", "sigma_uy", "sigma_vx", "sigma_vy", "theta_u", "theta_v"];

impl PairFeatures {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.tau,
            self.mu,
            self.shape_u.sigma_x,
            self.shape_u.sigma_y,
            self.shape_v.sigma_x,
            self.shape_v.sigma_y,
            self.shape_u.theta,
            self.shape_v.theta,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            tau: a[0],
            mu: a[1],
            shape_u: ShapeParams::new(a[6], a[2], a[3]),
            shape_v: ShapeParams::new(a[7], a[4], a[5]),
        }
    }

    /// Domain check: `tau` in (0,1), `mu >= 0`, positive finite scales.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Domain(format!("tau = {} outside (0, 1)", self.tau)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Domain(format!("mu = {} must be finite and >= 0", self.mu)));
        }
        if !self.shape_u.is_valid() || !self.shape_v.is_valid() {
            return Err(Error::Domain("component scales must be finite and > 0".into()));
        }
        Ok(())
    }

    fn max_length(&self) -> f64 {
        [self.mu, self.shape_u.sigma_x, self.shape_u.sigma_y, self.shape_v.sigma_x, self.shape_v.sigma_y]
            .into_iter()
            .fold(0.0, f64::max)
    }

    fn rescaled(&self, s: f64) -> Self {
        Self {
            tau: self.tau,
            mu: self.mu / s,
            shape_u: ShapeParams::new(self.shape_u.theta, self.shape_u.sigma_x / s, self.shape_u.sigma_y / s),
            shape_v: ShapeParams::new(self.shape_v.theta, self.shape_v.sigma_x / s, self.shape_v.sigma_y / s),
        }
    }
}

/// Pair features in the classifier's frame: centers along the y-axis, the
/// largest of `mu` and the four scales equal to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlignedPairFeatures(PairFeatures);

impl AlignedPairFeatures {
    /// Accept an already-aligned vector (corpus files, replicas). Angles may
    /// sit anywhere in `[-pi/2, pi/2]`; values up to 1e-8 outside, as left by
    /// 9-digit text output, are clamped onto the bounds.
    pub fn from_array(mut a: [f64; 8]) -> Result<Self> {
        for t in &mut a[6..] {
            if t.abs() > FRAC_PI_2 && t.abs() <= FRAC_PI_2 + 1e-8 {
                *t = FRAC_PI_2.copysign(*t);
            }
        }
        let f = PairFeatures::from_array(a);
        f.validate()?;
        let m = f.max_length();
        if (m - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("aligned features must have max length 1, got {m}")));
        }
        for t in [f.shape_u.theta, f.shape_v.theta] {
            if !(-FRAC_PI_2 - 1e-12..=FRAC_PI_2 + 1e-12).contains(&t) {
                return Err(Error::Domain(format!("aligned angle {t} outside [-pi/2, pi/2]")));
            }
        }
        Ok(Self(f))
    }

    /// Wrap features produced by a symmetry of an aligned vector. Reflection,
    /// component swap and angle substitution preserve the scale invariant.
    pub(crate) fn from_symmetry(f: PairFeatures) -> Self {
        Self(f)
    }

    pub fn features(&self) -> &PairFeatures {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 8] {
        self.0.to_array()
    }
}

/// Extract `(features, mean_u, mean_v)` for components `u` and `v`.
pub fn extract_pair_features(
    model: &MixtureModel,
    u: usize,
    v: usize,
) -> Result<(PairFeatures, Point2D, Point2D)> {
    let k = model.k();
    if u == v {
        return Err(Error::InvalidArgument(format!("pair needs two distinct components, got {u} twice")));
    }
    if u >= k || v >= k {
        return Err(Error::InvalidArgument(format!("component index out of range for K = {k}")));
    }
    let (cu, cv) = (&model.components[u], &model.components[v]);
    let features = PairFeatures {
        tau: cu.weight / (cu.weight + cv.weight),
        mu: cu.mean.distance(&cv.mean),
        shape_u: decompose_covariance(&cu.cov)?,
        shape_v: decompose_covariance(&cv.cov)?,
    };
    Ok((features, cu.mean, cv.mean))
}

/// Signed angle turning the `mean_u -> mean_v` direction onto the positive
/// y-axis; zero for coincident means.
pub fn correcting_angle(mean_u: Point2D, mean_v: Point2D) -> f64 {
    let (dx, dy) = (mean_v.x - mean_u.x, mean_v.y - mean_u.y);
    if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        dx.atan2(dy)
    }
}

/// Rotate the pair so its centers lie along the y-axis and scale it so the
/// largest of `mu` and the four sigmas is one.
pub fn align(features: &PairFeatures, mean_u: Point2D, mean_v: Point2D) -> AlignedPairFeatures {
    let beta = correcting_angle(mean_u, mean_v);
    let s = features.max_length();
    let mut out = features.rescaled(s);
    out.shape_u.theta = wrap_half_turn(features.shape_u.theta + beta);
    out.shape_v.theta = wrap_half_turn(features.shape_v.theta + beta);
    AlignedPairFeatures(out)
}

/// Align a generator-convention record: each `(theta, sigma_x, sigma_y)` goes
/// through compose/decompose, then the lengths are rescaled. The generator
/// already places the centers on the y-axis, so no rotation is applied.
pub fn align_training_record(raw: &PairFeatures) -> Result<AlignedPairFeatures> {
    raw.validate()?;
    let round_trip = |shape: &ShapeParams| decompose_covariance(&compose_covariance(shape));
    let canonical = PairFeatures {
        tau: raw.tau,
        mu: raw.mu,
        shape_u: round_trip(&raw.shape_u)?,
        shape_v: round_trip(&raw.shape_v)?,
    };
    Ok(AlignedPairFeatures(canonical.rescaled(canonical.max_length())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::GaussianComponent;
    use std::f64::consts::FRAC_PI_4;

    fn close(a: &Covariance2, b: &Covariance2, tol: f64) -> bool {
        (a.xx - b.xx).abs() < tol && (a.xy - b.xy).abs() < tol && (a.yy - b.yy).abs() < tol
    }

    #[test]
    fn compose_examples() {
        let c = compose_covariance(&ShapeParams::new(0.0, 2.0, 1.0));
        assert!(close(&c, &Covariance2::diagonal(4.0, 1.0), 1e-15));
        let c = compose_covariance(&ShapeParams::new(FRAC_PI_2, 2.0, 1.0));
        assert!(close(&c, &Covariance2::diagonal(1.0, 4.0), 1e-15));
        let c = compose_covariance(&ShapeParams::new(FRAC_PI_4, 1.0, 1.0));
        assert!(close(&c, &Covariance2::IDENTITY, 1e-15));
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(decompose_covariance(&Covariance2::IDENTITY).unwrap(), ShapeParams::new(0.0, 1.0, 1.0));
        let s = decompose_covariance(&Covariance2::diagonal(4.0, 1.0)).unwrap();
        assert_eq!(s, ShapeParams::new(0.0, 2.0, 1.0));
        let s = decompose_covariance(&Covariance2::diagonal(1.0, 4.0)).unwrap();
        assert_eq!(s, ShapeParams::new(FRAC_PI_2, 2.0, 1.0));
        // Negative zero off-diagonal must not escape to -pi/2.
        let s = decompose_covariance(&Covariance2::new(1.0, -0.0, 4.0)).unwrap();
        assert_eq!(s.theta, FRAC_PI_2);
        assert!(matches!(
            decompose_covariance(&Covariance2::new(1.0, 2.0, 1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn swapped_axes_compose_identically() {
        let a = ShapeParams::new(0.3, 2.0, 0.5);
        let b = ShapeParams::new(wrap_half_turn(0.3 + FRAC_PI_2), 0.5, 2.0);
        assert!(close(&compose_covariance(&a), &compose_covariance(&b), 1e-12));
        assert_eq!(
            decompose_covariance(&compose_covariance(&b)).unwrap().sigma_x,
            decompose_covariance(&compose_covariance(&a)).unwrap().sigma_x
        );
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_half_turn(0.0), 0.0);
        assert!((wrap_half_turn(-FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
        assert!((wrap_half_turn(PI) - 0.0).abs() < 1e-15);
        assert!((wrap_half_turn(3.0 * FRAC_PI_4) + FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn pair_extraction() {
        let comp = |w, x, y| GaussianComponent { weight: w, mean: Point2D::new(x, y), cov: Covariance2::IDENTITY };
        let model = MixtureModel::from_components(vec![comp(0.5, 0.0, 0.0), comp(0.5, 0.0, 3.0)]).unwrap();
        let (f, mu_u, mu_v) = extract_pair_features(&model, 0, 1).unwrap();
        assert_eq!(f.tau, 0.5);
        assert_eq!(f.mu, 3.0);
        assert_eq!(f.shape_u, ShapeParams::new(0.0, 1.0, 1.0));
        assert_eq!(f.shape_v, ShapeParams::new(0.0, 1.0, 1.0));
        assert_eq!((mu_u, mu_v), (Point2D::new(0.0, 0.0), Point2D::new(0.0, 3.0)));
        assert!(matches!(extract_pair_features(&model, 1, 1), Err(Error::InvalidArgument(_))));

        let model = MixtureModel::from_components(vec![
            comp(0.3, 1.0, 1.0),
            comp(0.6, 1.0, 1.0),
            comp(0.1, 5.0, 1.0),
        ])
        .unwrap();
        let (f, _, _) = extract_pair_features(&model, 0, 1).unwrap();
        assert!((f.tau - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.mu, 0.0);
    }

    #[test]
    fn align_on_axis_keeps_angles() {
        let f = PairFeatures {
            tau: 0.3,
            mu: 5.0,
            shape_u: ShapeParams::new(0.2, 2.0, 1.0),
            shape_v: ShapeParams::new(-0.4, 1.0, 0.5),
        };
        let a = align(&f, Point2D::new(0.0, 0.0), Point2D::new(0.0, 5.0));
        assert_eq!(a.features().shape_u.theta, 0.2);
        assert_eq!(a.features().shape_v.theta, -0.4);
        assert_eq!(a.features().mu, 1.0);
        assert_eq!(a.features().shape_u.sigma_x, 0.4);

        let scaled = PairFeatures {
            mu: 50.0,
            shape_u: ShapeParams::new(0.2, 20.0, 10.0),
            shape_v: ShapeParams::new(-0.4, 10.0, 5.0),
            ..f
        };
        let b = align(&scaled, Point2D::new(0.0, 0.0), Point2D::new(0.0, 50.0));
        assert_eq!(a, b);
    }

    #[test]
    fn coincident_means_use_zero_correction() {
        let f = PairFeatures {
            tau: 0.5,
            mu: 0.0,
            shape_u: ShapeParams::new(0.1, 1.0, 0.5),
            shape_v: ShapeParams::new(0.2, 2.0, 0.5),
        };
        let p = Point2D::new(3.0, 3.0);
        let a = align(&f, p, p);
        assert_eq!(a.features().shape_u.theta, 0.1);
        assert_eq!(a.features().shape_v.sigma_x, 1.0);
    }

    #[test]
    fn training_record_alignment() {
        let raw = PairFeatures {
            tau: 0.5,
            mu: 3.0,
            shape_u: ShapeParams::new(0.0, 2.0, 1.0),
            shape_v: ShapeParams::new(0.0, 1.0, 1.0),
        };
        let a = align_training_record(&raw).unwrap().to_array();
        let expected = [0.5, 1.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0];
        for (x, y) in a.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12, "{a:?}");
        }

        // Fixed point and quarter-turn canonicalization.
        let raw = PairFeatures {
            tau: 0.2,
            mu: 1.0,
            shape_u: ShapeParams::new(0.0, 1.0, 1.0),
            shape_v: ShapeParams::new(FRAC_PI_2, 2.0, 1.0),
        };
        let a = align_training_record(&raw).unwrap();
        assert_eq!(a.features().shape_u, ShapeParams::new(0.0, 0.5, 0.5));
        let before = compose_covariance(&raw.shape_v);
        let v = a.features().shape_v;
        let after = compose_covariance(&ShapeParams::new(v.theta, v.sigma_x * 2.0, v.sigma_y * 2.0));
        assert!(close(&before, &after, 1e-12));
        assert!(close(&after, &Covariance2::diagonal(1.0, 4.0), 1e-12));
    }

    #[test]
    fn isotropic_generator_angles_collapse_to_zero() {
        for t in [0.0, PI / 8.0, FRAC_PI_4, 3.0 * PI / 8.0, FRAC_PI_2] {
            let s = decompose_covariance(&compose_covariance(&ShapeParams::new(t, 1.5, 1.5))).unwrap();
            assert_eq!(s.theta, 0.0);
            assert!((s.sigma_x - 1.5).abs() < 1e-12 && (s.sigma_y - 1.5).abs() < 1e-12);
        }
    }
}
