//! Oscillatory interface, its rescaled finger variant, and the simpler
//! layered and flat geometries used by the cell problems.
//!
//! Every geometry answers the same question: which medium owns a point. The
//! solvers never mesh the interface; they only query membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec2::Vec2;

/// Tolerance for recognizing a fast-variable phase as a cap position.
pub const CAP_SNAP: f64 = 1e-9;
/// Absolute tolerance for membership ties against a graph threshold.
pub const TIE_SNAP: f64 = 1e-14;

/// Base shape of one tooth period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ToothShape<T> {
    /// Half sine waves of height `h`: positive on `[a, b]`, negative on the
    /// complement. For `b - a = 1/2` this is `h sin(2 pi (t - a))`.
    Sine { h: T, a: T, b: T },
    /// Uniform samples of one period, linearly interpolated.
    Sampled(Vec<T>),
}

impl<T: Real> ToothShape<T> {
    fn eval(&self, t: T) -> T {
        match self {
            ToothShape::Sine { h, a, b } => {
                let pi = T::PI();
                let mut s = t;
                if s < *a {
                    s = s + T::one();
                }
                if s <= *b {
                    *h * (pi * (s - *a) / (*b - *a)).sin()
                } else {
                    -*h * (pi * (s - *b) / (T::one() - (*b - *a))).sin()
                }
            }
            ToothShape::Sampled(v) => {
                let n = v.len();
                let x = t * T::from_usize_lossy(n);
                let i = x.floor().to_usize().unwrap_or(0).min(n - 1);
                let w = x - T::from_usize_lossy(i);
                v[i] * (T::one() - w) + v[(i + 1) % n] * w
            }
        }
    }

    fn slope(&self, t: T) -> T {
        match self {
            ToothShape::Sine { h, a, b } => {
                let pi = T::PI();
                let mut s = t;
                if s < *a {
                    s = s + T::one();
                }
                if s <= *b {
                    let w = *b - *a;
                    *h * pi / w * (pi * (s - *a) / w).cos()
                } else {
                    let w = T::one() - (*b - *a);
                    -*h * pi / w * (pi * (s - *b) / w).cos()
                }
            }
            ToothShape::Sampled(v) => {
                let n = v.len();
                let nn = T::from_usize_lossy(n);
                let i = (t * nn).floor().to_usize().unwrap_or(0).min(n - 1);
                (v[(i + 1) % n] - v[i]) * nn
            }
        }
    }

    fn max_abs(&self) -> T {
        match self {
            ToothShape::Sine { h, .. } => h.abs(),
            ToothShape::Sampled(v) => v.iter().fold(T::zero(), |m, x| m.max(x.abs())),
        }
    }
}

/// Tooth profile `(a, b, g)`: `g` is 1-periodic, vanishes at `a` and `b`.
///
/// `g(t) = sign * shape(frac(t + shift))`; `shift` and `sign` are only
/// changed by [`ToothProfile::mirrored`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToothProfile<T> {
    pub a: T,
    pub b: T,
    pub shape: ToothShape<T>,
    shift: T,
    sign: T,
}

impl<T: Real> ToothProfile<T> {
    pub fn sine(a: T, b: T, h: T) -> Result<Self> {
        Self::checked(a, b, ToothShape::Sine { h, a, b })
    }

    /// The default tooth: `a = 1/4`, `b = 3/4`, `h = 1/4`.
    pub fn standard() -> Self {
        Self::sine(T::lit(0.25), T::lit(0.75), T::lit(0.25)).expect("standard profile is valid")
    }

    /// Profile from `n` uniform samples of `g` over one period.
    pub fn sampled(a: T, b: T, samples: Vec<T>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArguments(
                "profile.samples: need at least 2 samples".into(),
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArguments("profile.samples: non-finite sample".into()));
        }
        Self::checked(a, b, ToothShape::Sampled(samples))
    }

    fn checked(a: T, b: T, shape: ToothShape<T>) -> Result<Self> {
        if !(a > T::zero() && a < T::one()) {
            return Err(Error::InvalidArguments(format!("profile.a = {a} must lie in (0, 1)")));
        }
        if !(b > a && b < T::one()) {
            return Err(Error::InvalidArguments(format!(
                "profile.b = {b} must lie in (a, 1) with a = {a}"
            )));
        }
        let p = Self {
            a,
            b,
            shape,
            shift: T::zero(),
            sign: T::one(),
        };
        let tol = T::tol(1e-9) * (T::one() + p.max_abs());
        for (name, t) in [("a", a), ("b", b)] {
            if p.g(t).abs() > tol {
                return Err(Error::InvalidArguments(format!(
                    "profile.{name}: g({t}) = {} must vanish",
                    p.g(t)
                )));
            }
        }
        Ok(p)
    }

    #[inline]
    pub fn g(&self, t: T) -> T {
        self.sign * self.shape.eval((t + self.shift).frac01())
    }

    #[inline]
    pub fn g_prime(&self, t: T) -> T {
        self.sign * self.shape.slope((t + self.shift).frac01())
    }

    pub fn max_abs(&self) -> T {
        self.shape.max_abs()
    }

    /// Largest value of `g` (finger tip position of the left medium).
    pub fn max_value(&self) -> T {
        let n = 512;
        (0..=n)
            .map(|k| self.g(T::from_usize_lossy(k) / T::from_usize_lossy(n)))
            .fold(T::neg_infinity(), T::max)
    }

    /// Width `b - a` of the left-medium band in one period.
    pub fn left_fraction(&self) -> T {
        self.b - self.a
    }

    /// Profile of the reflected geometry `x1 -> -x1` with sides exchanged:
    /// the teeth of the complement become the new left fingers. The phase is
    /// shifted so that the new band stays inside `(0, 1)`.
    pub fn mirrored(&self) -> Self {
        let s = (self.a + self.b) / (T::one() + T::one());
        Self {
            a: self.b - s,
            b: T::one() + self.a - s,
            shape: self.shape.clone(),
            shift: (self.shift + s).frac01(),
            sign: -self.sign,
        }
    }

    fn phase_class(&self, t: T) -> Phase {
        let snap = T::tol(CAP_SNAP);
        let near = |c: T| {
            let d = (t - c).abs();
            d <= snap || (T::one() - d) <= snap
        };
        if near(self.a) {
            Phase::CapA
        } else if near(self.b) {
            Phase::CapB
        } else if t > self.a && t < self.b {
            Phase::Inside
        } else {
            Phase::Outside
        }
    }

    pub fn cast<U: Real>(&self) -> ToothProfile<U> {
        let c = |x: T| U::lit(x.as_f64());
        let shape = match &self.shape {
            ToothShape::Sine { h, a, b } => ToothShape::Sine {
                h: c(*h),
                a: c(*a),
                b: c(*b),
            },
            ToothShape::Sampled(v) => ToothShape::Sampled(v.iter().map(|&x| c(x)).collect()),
        };
        ToothProfile {
            a: c(self.a),
            b: c(self.b),
            shape,
            shift: c(self.shift),
            sign: c(self.sign),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    CapA,
    CapB,
    Inside,
    Outside,
}

/// Which medium owns a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Left,
    Right,
    OnInterface,
    OutsideTruncation,
}

/// Membership and normals for any of the geometries.
pub trait RegionOracle<T: Real>: Sync {
    fn region(&self, x: Vec2<T>) -> Region;
    fn normal(&self, x: Vec2<T>) -> Result<Vec2<T>>;
}

/// Oscillatory interface at scales `(eta, eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec<T> {
    pub profile: ToothProfile<T>,
    pub eta: T,
    pub eps: T,
}

impl<T: Real> InterfaceSpec<T> {
    pub fn new(profile: ToothProfile<T>, eta: T, eps: T) -> Result<Self> {
        if !(eta > T::zero()) {
            return Err(Error::InvalidArguments(format!("eta = {eta} must be positive")));
        }
        if !(eps > T::zero()) {
            return Err(Error::InvalidArguments(format!("eps = {eps} must be positive")));
        }
        Ok(Self { profile, eta, eps })
    }

    /// Tooth period `eta * eps` along `x2`.
    pub fn period(&self) -> T {
        self.eta * self.eps
    }

    /// Largest `|x1|` reached by the interface.
    pub fn amplitude(&self) -> T {
        self.eta * (T::one() + self.eps * self.profile.max_abs())
    }
}

/// Membership in the oscillatory geometry.
pub fn region_of<T: Real>(spec: &InterfaceSpec<T>, x: Vec2<T>) -> Region {
    let t = (x.y / spec.period()).frac01();
    let p = &spec.profile;
    let lift = spec.eta * spec.eps * p.g(t);
    match p.phase_class(t) {
        Phase::CapA | Phase::CapB => {
            let s = x.x - lift;
            if s < -spec.eta {
                Region::Left
            } else if s > spec.eta {
                Region::Right
            } else {
                Region::OnInterface
            }
        }
        phase => {
            let big = if phase == Phase::Inside { spec.eta } else { -spec.eta };
            compare(x.x, big + lift)
        }
    }
}

fn compare<T: Real>(x1: T, threshold: T) -> Region {
    let d = x1 - threshold;
    if d.abs() <= T::tol(TIE_SNAP) {
        Region::OnInterface
    } else if d > T::zero() {
        Region::Right
    } else {
        Region::Left
    }
}

fn graph_normal<T: Real>(slope: T) -> Vec2<T> {
    let s = (T::one() + slope * slope).sqrt().recip();
    Vec2::new(s, -slope * s)
}

/// Unit normal at an interface point, oriented from left to right.
pub fn normal<T: Real>(spec: &InterfaceSpec<T>, x: Vec2<T>) -> Result<Vec2<T>> {
    if region_of(spec, x) != Region::OnInterface {
        return Err(Error::InvalidArguments(format!(
            "({}, {}) is not on the interface",
            x.x, x.y
        )));
    }
    let t = (x.y / spec.period()).frac01();
    let p = &spec.profile;
    let s = x.x - spec.eta * spec.eps * p.g(t);
    cap_or_graph_normal(p, t, x, || (s + spec.eta).abs() <= T::tol(TIE_SNAP) || (s - spec.eta).abs() <= T::tol(TIE_SNAP))
}

fn cap_or_graph_normal<T: Real>(
    p: &ToothProfile<T>,
    t: T,
    x: Vec2<T>,
    at_cap_end: impl Fn() -> bool,
) -> Result<Vec2<T>> {
    let phase = p.phase_class(t);
    if matches!(phase, Phase::CapA | Phase::CapB) {
        if at_cap_end() {
            return Err(Error::UndefinedNormal {
                x: x.x.as_f64(),
                y: x.y.as_f64(),
                reason: "corner where a cap meets a tooth graph".into(),
            });
        }
        let sgn = if phase == Phase::CapA { -T::one() } else { T::one() };
        return Ok(Vec2::new(T::zero(), sgn));
    }
    Ok(graph_normal(p.g_prime(t)))
}

impl<T: Real> RegionOracle<T> for InterfaceSpec<T> {
    fn region(&self, x: Vec2<T>) -> Region {
        region_of(self, x)
    }
    fn normal(&self, x: Vec2<T>) -> Result<Vec2<T>> {
        normal(self, x)
    }
}

/// Rescaled finger geometry: period `eta` in `y2`, truncated at `|y1| <= rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerGeometry<T> {
    pub profile: ToothProfile<T>,
    pub eta: T,
    /// Truncation half-width; `T::infinity()` for the untruncated geometry.
    pub rho: T,
}

impl<T: Real> FingerGeometry<T> {
    pub fn new(profile: ToothProfile<T>, eta: T, rho: T) -> Result<Self> {
        if !(eta > T::zero()) {
            return Err(Error::InvalidArguments(format!("eta = {eta} must be positive")));
        }
        let tip = eta * profile.max_abs();
        if !(rho > tip) {
            return Err(Error::InvalidArguments(format!(
                "rho = {rho} must exceed the finger extent {tip}"
            )));
        }
        Ok(Self { profile, eta, rho })
    }

    /// Geometry of the opposite strip edge, expressed in the orientation of
    /// this one (see [`ToothProfile::mirrored`]).
    pub fn mirrored(&self) -> Self {
        Self {
            profile: self.profile.mirrored(),
            eta: self.eta,
            rho: self.rho,
        }
    }
}

pub fn finger_region_of<T: Real>(fg: &FingerGeometry<T>, y: Vec2<T>) -> Region {
    if y.x.abs() > fg.rho {
        return Region::OutsideTruncation;
    }
    let t = (y.y / fg.eta).frac01();
    let p = &fg.profile;
    let tip = fg.eta * p.g(t);
    match p.phase_class(t) {
        Phase::CapA | Phase::CapB => {
            if y.x - tip <= T::tol(TIE_SNAP) {
                Region::OnInterface
            } else {
                Region::Right
            }
        }
        Phase::Inside => compare(y.x, tip),
        Phase::Outside => Region::Right,
    }
}

pub fn finger_normal<T: Real>(fg: &FingerGeometry<T>, y: Vec2<T>) -> Result<Vec2<T>> {
    if finger_region_of(fg, y) != Region::OnInterface {
        return Err(Error::InvalidArguments(format!(
            "({}, {}) is not on the finger interface",
            y.x, y.y
        )));
    }
    let t = (y.y / fg.eta).frac01();
    let p = &fg.profile;
    let tip = fg.eta * p.g(t);
    cap_or_graph_normal(p, t, y, || (y.x - tip).abs() <= T::tol(TIE_SNAP))
}

impl<T: Real> RegionOracle<T> for FingerGeometry<T> {
    fn region(&self, x: Vec2<T>) -> Region {
        finger_region_of(self, x)
    }
    fn normal(&self, x: Vec2<T>) -> Result<Vec2<T>> {
        finger_normal(self, x)
    }
}

/// Horizontal layers: left medium for `frac(x2 / eta)` in `(a, b)`, right
/// medium elsewhere, interfaces on the lines `t = a` and `t = b`. Used by the
/// one-dimensional cell problem defining the effective strip Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredStrip<T> {
    pub profile: ToothProfile<T>,
    pub eta: T,
}

impl<T: Real> RegionOracle<T> for LayeredStrip<T> {
    fn region(&self, x: Vec2<T>) -> Region {
        let t = (x.y / self.eta).frac01();
        match self.profile.phase_class(t) {
            Phase::CapA | Phase::CapB => Region::OnInterface,
            Phase::Inside => Region::Left,
            Phase::Outside => Region::Right,
        }
    }

    fn normal(&self, x: Vec2<T>) -> Result<Vec2<T>> {
        let t = (x.y / self.eta).frac01();
        match self.profile.phase_class(t) {
            Phase::CapA => Ok(Vec2::new(T::zero(), -T::one())),
            Phase::CapB => Ok(Vec2::new(T::zero(), T::one())),
            _ => Err(Error::InvalidArguments("point is not on a layer boundary".into())),
        }
    }
}

/// Flat interface `{x1 = 0}`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlatInterface;

impl<T: Real> RegionOracle<T> for FlatInterface {
    fn region(&self, x: Vec2<T>) -> Region {
        compare(x.x, T::zero())
    }
    fn normal(&self, x: Vec2<T>) -> Result<Vec2<T>> {
        if compare(x.x, T::zero()) == Region::OnInterface {
            Ok(Vec2::e1())
        } else {
            Err(Error::InvalidArguments("point is not on the flat interface".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(eps: f64) -> InterfaceSpec<f64> {
        InterfaceSpec::new(ToothProfile::standard(), 1.0, eps).unwrap()
    }

    fn fg(rho: f64) -> FingerGeometry<f64> {
        FingerGeometry::new(ToothProfile::standard(), 1.0, rho).unwrap()
    }

    #[test]
    fn standard_profile_is_the_shifted_sine() {
        let p = ToothProfile::<f64>::standard();
        for k in 0..100 {
            let t = k as f64 / 100.0;
            let want = 0.25 * (2.0 * std::f64::consts::PI * (t - 0.25)).sin();
            assert_abs_diff_eq!(p.g(t), want, epsilon = 1e-14);
            let dwant = 0.5 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * (t - 0.25)).cos();
            assert_abs_diff_eq!(p.g_prime(t), dwant, epsilon = 1e-12);
        }
    }

    #[test]
    fn region_examples() {
        assert_eq!(region_of(&spec(0.1), Vec2::new(0.5, 0.0125)), Region::Right);
        assert_eq!(region_of(&spec(0.1), Vec2::new(0.0, 0.05)), Region::Left);
        for y in [-3.0, 0.0, 0.025, 0.07, 11.3] {
            assert_eq!(region_of(&spec(0.1), Vec2::new(10.0, y)), Region::Right);
        }
    }

    #[test]
    fn region_caps() {
        let s = spec(0.1);
        // t = a
        assert_eq!(region_of(&s, Vec2::new(0.3, 0.025)), Region::OnInterface);
        assert_eq!(region_of(&s, Vec2::new(-1.5, 0.025)), Region::Left);
        assert_eq!(region_of(&s, Vec2::new(1.5, 0.025)), Region::Right);
    }

    #[test]
    fn finger_examples() {
        assert_eq!(finger_region_of(&fg(5.0), Vec2::new(-2.0, 0.5)), Region::Left);
        assert_eq!(finger_region_of(&fg(5.0), Vec2::new(-2.0, 0.1)), Region::Right);
        assert_eq!(finger_region_of(&fg(5.0), Vec2::new(6.0, 0.0)), Region::OutsideTruncation);
        assert_eq!(finger_region_of(&fg(5.0), Vec2::new(-2.0, 0.25)), Region::OnInterface);
        assert_eq!(finger_region_of(&fg(5.0), Vec2::new(0.1, 0.25)), Region::Right);
    }

    #[test]
    fn normal_examples() {
        let s = spec(0.1);
        // tooth top: g'(1/2) = 0
        let n = normal(&s, Vec2::new(1.0 + 0.025, 0.05)).unwrap();
        assert_abs_diff_eq!(n.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.y, 0.0, epsilon = 1e-12);
        let n = normal(&s, Vec2::new(0.0, 0.025)).unwrap();
        assert_eq!(n, Vec2::new(0.0, -1.0));
        let n = normal(&s, Vec2::new(0.0, 0.075)).unwrap();
        assert_eq!(n, Vec2::new(0.0, 1.0));
        assert!(matches!(
            normal(&s, Vec2::new(1.0, 0.025)),
            Err(Error::UndefinedNormal { .. })
        ));
    }

    #[test]
    fn graph_normal_unit_slope() {
        let n = graph_normal(1.0f64);
        assert_abs_diff_eq!(n.x, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(n.y, -1.0 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn bad_profiles_name_the_field() {
        let e = ToothProfile::<f64>::sine(0.5, 0.4, 0.1).unwrap_err();
        assert!(e.to_string().contains("profile.b"));
        let e = ToothProfile::<f64>::sine(0.0, 0.4, 0.1).unwrap_err();
        assert!(e.to_string().contains("profile.a"));
        let e = ToothProfile::<f64>::sampled(0.25, 0.75, vec![1.0, 1.0, 1.0, 1.0]).unwrap_err();
        assert!(e.to_string().contains("must vanish"));
    }

    #[test]
    fn sampled_profile_interpolates() {
        let samples = vec![0.0, -0.1, 0.0, 0.2, 0.0, -0.1];
        // a = 1/3 and b = 2/3 are sample nodes with value 0
        let p = ToothProfile::<f64>::sampled(1.0 / 3.0, 2.0 / 3.0, samples).unwrap();
        assert_abs_diff_eq!(p.g(0.5), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(p.g(7.0 / 12.0), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn mirrored_profile_swaps_bands() {
        let p = ToothProfile::<f64>::standard();
        let m = p.mirrored();
        assert_abs_diff_eq!(m.a, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m.b, 0.75, epsilon = 1e-15);
        for k in 0..50 {
            let t = k as f64 / 50.0;
            assert_abs_diff_eq!(m.g(t), -p.g(t + 0.5), epsilon = 1e-14);
        }
        assert_abs_diff_eq!(m.g(m.a), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.g(m.b), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn layered_strip_bands() {
        let l = LayeredStrip {
            profile: ToothProfile::<f64>::standard(),
            eta: 1.0,
        };
        assert_eq!(l.region(Vec2::new(0.0, 0.5)), Region::Left);
        assert_eq!(l.region(Vec2::new(0.0, 0.9)), Region::Right);
        assert_eq!(l.region(Vec2::new(0.0, 0.25)), Region::OnInterface);
    }

    #[test]
    fn finger_needs_rho_beyond_tips() {
        assert!(FingerGeometry::new(ToothProfile::<f64>::standard(), 1.0, 0.2).is_err());
    }
}
