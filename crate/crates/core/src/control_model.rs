//! Control sets, dynamics and running costs of the two media, and every
//! Hamiltonian built from them.
//!
//! A medium is described by a finite list of controls `(f(a), l(a))`. All
//! optimizations below are linear in `(f, l)`, so maximizing over the finite
//! list is the same as maximizing over its convex hull.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec2::{Axis, Vec2};

/// One control: a velocity and its running cost per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control<T> {
    pub velocity: Vec2<T>,
    pub cost: T,
}

impl<T: Real> Control<T> {
    pub fn new(fx: T, fy: T, cost: T) -> Self {
        Self {
            velocity: Vec2::new(fx, fy),
            cost,
        }
    }

    /// `-p.f - l`, the term maximized by every Hamiltonian.
    #[inline]
    pub fn payoff(&self, p: Vec2<T>) -> T {
        -p.dot(self.velocity) - self.cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SideLabel {
    Left,
    Right,
}

impl SideLabel {
    pub fn other(self) -> Self {
        match self {
            SideLabel::Left => SideLabel::Right,
            SideLabel::Right => SideLabel::Left,
        }
    }
}

impl fmt::Display for SideLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SideLabel::Left => write!(f, "L"),
            SideLabel::Right => write!(f, "R"),
        }
    }
}

/// Monotone branch of a Hamiltonian along one momentum axis.
///
/// `Plus` is the nondecreasing part (controls with `f . e <= 0`), `Minus` the
/// nonincreasing part (controls with `f . e >= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// Finite control set of one medium.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlSide<T> {
    pub label: SideLabel,
    pub controls: Vec<Control<T>>,
    /// Radius of the largest origin-centred ball inside the velocity hull.
    pub delta0: T,
}

impl<T: Real> ControlSide<T> {
    /// Builds a side and certifies its controllability radius. Empty or
    /// degenerate sets are accepted here and rejected by [`check_assumptions`].
    pub fn new(label: SideLabel, controls: Vec<Control<T>>) -> Self {
        let velocities: Vec<_> = controls.iter().map(|c| c.velocity).collect();
        let delta0 = inscribed_radius(&velocities).max(T::zero());
        Self {
            label,
            controls,
            delta0,
        }
    }

    /// The five-control reference set: velocities `{0, +-s e1, +-s e2}`, all
    /// with the same cost.
    pub fn cross(label: SideLabel, speed: T, cost: T) -> Self {
        let z = T::zero();
        Self::new(
            label,
            vec![
                Control::new(z, z, cost),
                Control::new(speed, z, cost),
                Control::new(-speed, z, cost),
                Control::new(z, speed, cost),
                Control::new(z, -speed, cost),
            ],
        )
    }

    /// Largest speed `M_f` of the side.
    pub fn max_speed(&self) -> T {
        self.controls
            .iter()
            .map(|c| c.velocity.norm())
            .fold(T::zero(), T::max)
    }

    /// Largest absolute cost `M_l` of the side.
    pub fn max_cost(&self) -> T {
        self.controls
            .iter()
            .map(|c| c.cost.abs())
            .fold(T::zero(), T::max)
    }

    /// Reflection `x1 -> -x1` of the dynamics, keeping the label.
    pub fn mirrored(&self) -> Self {
        let controls = self
            .controls
            .iter()
            .map(|c| Control {
                velocity: c.velocity.mirror_x(),
                cost: c.cost,
            })
            .collect();
        Self {
            label: self.label,
            controls,
            delta0: self.delta0,
        }
    }

    pub fn relabeled(mut self, label: SideLabel) -> Self {
        self.label = label;
        self
    }

    pub fn cast<U: Real>(&self) -> ControlSide<U> {
        ControlSide {
            label: self.label,
            controls: self
                .controls
                .iter()
                .map(|c| Control {
                    velocity: c.velocity.cast(),
                    cost: U::lit(c.cost.as_f64()),
                })
                .collect(),
            delta0: U::lit(self.delta0.as_f64()),
        }
    }
}

/// Additive, x1-dependent running cost switched off on the strip `|x1| < 1`.
#[derive(Clone)]
pub enum FarFieldCost<T> {
    /// `min(slope * (|x1| - 1)^+, cap)`.
    Ramp { slope: T, cap: T },
    /// User function; `bound` must dominate `sup |c|`.
    Custom {
        f: Arc<dyn Fn(T) -> T + Send + Sync>,
        bound: T,
    },
}

impl<T: Real> FarFieldCost<T> {
    pub fn saturating_ramp(cap: T) -> Self {
        FarFieldCost::Ramp {
            slope: T::one(),
            cap,
        }
    }

    #[inline]
    pub fn eval(&self, x1: T) -> T {
        if x1.abs() < T::one() {
            return T::zero();
        }
        match self {
            FarFieldCost::Ramp { slope, cap } => (*slope * (x1.abs() - T::one()).pos()).min(*cap),
            FarFieldCost::Custom { f, .. } => f(x1),
        }
    }

    pub fn bound(&self) -> T {
        match self {
            FarFieldCost::Ramp { cap, .. } => cap.abs(),
            FarFieldCost::Custom { bound, .. } => *bound,
        }
    }

    fn mirrored(&self) -> Self {
        match self {
            FarFieldCost::Ramp { .. } => self.clone(),
            FarFieldCost::Custom { f, bound } => {
                let f = Arc::clone(f);
                FarFieldCost::Custom {
                    f: Arc::new(move |x| f(-x)),
                    bound: *bound,
                }
            }
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for FarFieldCost<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FarFieldCost::Ramp { slope, cap } => write!(f, "Ramp {{ slope: {slope:?}, cap: {cap:?} }}"),
            FarFieldCost::Custom { bound, .. } => write!(f, "Custom {{ bound: {bound:?} }}"),
        }
    }
}

/// The two media plus the optional far-field cost.
#[derive(Debug, Clone)]
pub struct MediumPair<T> {
    pub left: ControlSide<T>,
    pub right: ControlSide<T>,
    pub far_field_cost: Option<FarFieldCost<T>>,
}

impl<T: Real> MediumPair<T> {
    pub fn new(left: ControlSide<T>, right: ControlSide<T>) -> Self {
        Self {
            left: left.relabeled(SideLabel::Left),
            right: right.relabeled(SideLabel::Right),
            far_field_cost: None,
        }
    }

    pub fn with_far_field_cost(mut self, cost: FarFieldCost<T>) -> Self {
        self.far_field_cost = Some(cost);
        self
    }

    pub fn side(&self, label: SideLabel) -> &ControlSide<T> {
        match label {
            SideLabel::Left => &self.left,
            SideLabel::Right => &self.right,
        }
    }

    /// Both media use the unit-speed cross with unit costs.
    pub fn identical() -> Self {
        let one = T::one();
        Self::new(
            ControlSide::cross(SideLabel::Left, one, one),
            ControlSide::cross(SideLabel::Right, one, one),
        )
    }

    /// Left medium twice as fast as the right one, all costs 1.
    pub fn asymmetric() -> Self {
        let one = T::one();
        Self::new(
            ControlSide::cross(SideLabel::Left, one + one, one),
            ControlSide::cross(SideLabel::Right, one, one),
        )
    }

    /// `M_f` over both sides.
    pub fn max_speed(&self) -> T {
        self.left.max_speed().max(self.right.max_speed())
    }

    /// `M_l` over both sides.
    pub fn max_cost(&self) -> T {
        self.left.max_cost().max(self.right.max_cost())
    }

    pub fn far_field_bound(&self) -> T {
        self.far_field_cost
            .as_ref()
            .map(FarFieldCost::bound)
            .unwrap_or_else(T::zero)
    }

    #[inline]
    pub fn far_field(&self, x1: T) -> T {
        match &self.far_field_cost {
            Some(c) => c.eval(x1),
            None => T::zero(),
        }
    }

    /// Reflection `x1 -> -x1` with the side roles exchanged: the old right
    /// medium becomes the new left one.
    pub fn mirrored(&self) -> Self {
        Self {
            left: self.right.mirrored().relabeled(SideLabel::Left),
            right: self.left.mirrored().relabeled(SideLabel::Right),
            far_field_cost: self.far_field_cost.as_ref().map(FarFieldCost::mirrored),
        }
    }

    /// Parses the plain-text medium format: `[left]` / `[right]` headers
    /// followed by `fx fy cost` records. `#` starts a comment.
    pub fn from_spec_text(text: &str) -> Result<Self> {
        let mut current: Option<SideLabel> = None;
        let mut left = Vec::new();
        let mut right = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[left]" => current = Some(SideLabel::Left),
                "[right]" => current = Some(SideLabel::Right),
                _ => {
                    let side = current.ok_or_else(|| {
                        Error::InvalidArguments(format!(
                            "line {}: control record before any [left]/[right] header",
                            lineno + 1
                        ))
                    })?;
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() != 3 {
                        return Err(Error::InvalidArguments(format!(
                            "line {}: expected `fx fy cost`, got {:?}",
                            lineno + 1,
                            line
                        )));
                    }
                    let mut vals = [T::zero(); 3];
                    for (v, s) in vals.iter_mut().zip(&fields) {
                        let x: f64 = s.parse().map_err(|_| {
                            Error::InvalidArguments(format!("line {}: bad number {:?}", lineno + 1, s))
                        })?;
                        *v = T::lit(x);
                    }
                    let c = Control::new(vals[0], vals[1], vals[2]);
                    match side {
                        SideLabel::Left => left.push(c),
                        SideLabel::Right => right.push(c),
                    }
                }
            }
        }
        Ok(Self::new(
            ControlSide::new(SideLabel::Left, left),
            ControlSide::new(SideLabel::Right, right),
        ))
    }

    pub fn to_spec_text(&self) -> String {
        let mut out = String::new();
        for (hdr, side) in [("[left]", &self.left), ("[right]", &self.right)] {
            out.push_str(hdr);
            out.push('\n');
            for c in &side.controls {
                out.push_str(&format!("{} {} {}\n", c.velocity.x, c.velocity.y, c.cost));
            }
        }
        out
    }
}

/// `H(p) = max_a (-p.f(a) - l(a))`.
pub fn hamiltonian<T: Real>(side: &ControlSide<T>, p: Vec2<T>) -> T {
    side.controls
        .iter()
        .map(|c| c.payoff(p))
        .fold(T::neg_infinity(), T::max)
}

fn restricted_max<T: Real>(
    controls: &[Control<T>],
    p: Vec2<T>,
    keep: impl Fn(&Control<T>) -> bool,
) -> Option<T> {
    controls
        .iter()
        .filter(|c| keep(c))
        .map(|c| c.payoff(p))
        .fold(None, |acc, v| Some(acc.map_or(v, |a: T| a.max(v))))
}

/// Monotone part of `H` along `axis`: `Minus` keeps controls with
/// `f . e_axis >= 0`, `Plus` those with `f . e_axis <= 0`.
pub fn half_hamiltonian<T: Real>(
    side: &ControlSide<T>,
    p: Vec2<T>,
    axis: Axis,
    branch: Branch,
) -> Result<T> {
    let keep = |c: &Control<T>| {
        let f = c.velocity.axis(axis);
        match branch {
            Branch::Minus => f >= T::zero(),
            Branch::Plus => f <= T::zero(),
        }
    };
    restricted_max(&side.controls, p, keep).ok_or_else(|| {
        Error::Feasibility(format!(
            "side {} has no control with the sign required by the {:?} branch on axis {:?}",
            side.label, branch, axis
        ))
    })
}

/// Interface Hamiltonian `max(H^{+,L}(pL), H^{-,R}(pR))` relative to `normal`.
pub fn interface_hamiltonian<T: Real>(
    pair: &MediumPair<T>,
    p_left: Vec2<T>,
    p_right: Vec2<T>,
    normal: Vec2<T>,
) -> Result<T> {
    if (normal.norm() - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::InvalidArguments(format!(
            "normal must be a unit vector, |n| = {}",
            normal.norm()
        )));
    }
    let jump = p_left - p_right;
    let tol = T::lit(1e-12) * (p_left.norm() + p_right.norm() + T::one());
    if jump.cross(normal).abs() > tol {
        return Err(Error::InvalidArguments(
            "p_left - p_right is not colinear to the normal".into(),
        ));
    }
    let left = restricted_max(&pair.left.controls, p_left, |c| c.velocity.dot(normal) <= T::zero());
    let right = restricted_max(&pair.right.controls, p_right, |c| c.velocity.dot(normal) >= T::zero());
    match (left, right) {
        (Some(a), Some(b)) => Ok(a.max(b)),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::Feasibility(
            "no control of either side points into its own medium".into(),
        )),
    }
}

/// `min_q H(q e1 + p2 e2)` with the end points of the minimizing interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E0<T> {
    pub value: T,
    pub p1_minus: T,
    pub p1_plus: T,
}

/// Exact minimum over `q` of the convex piecewise-linear `q -> H(q, p2)`.
pub fn e0<T: Real>(side: &ControlSide<T>, p2: T) -> E0<T> {
    // H(q, p2) = max_a (slope_a q + icpt_a)
    let lines: Vec<(T, T)> = side
        .controls
        .iter()
        .map(|c| (-c.velocity.x, -p2 * c.velocity.y - c.cost))
        .collect();
    let phi = |q: T| {
        lines
            .iter()
            .map(|&(s, b)| s * q + b)
            .fold(T::neg_infinity(), T::max)
    };
    let rising = lines.iter().any(|l| l.0 > T::zero());
    let falling = lines.iter().any(|l| l.0 < T::zero());
    let flat_level = lines
        .iter()
        .filter(|l| l.0 == T::zero())
        .map(|l| l.1)
        .fold(T::neg_infinity(), T::max);
    if !(rising && falling) {
        // Unbounded direction: the infimum is attained only at infinity.
        let (lo, hi) = match (rising, falling) {
            (true, false) => (T::neg_infinity(), T::neg_infinity()),
            (false, true) => (T::infinity(), T::infinity()),
            _ => (T::neg_infinity(), T::infinity()),
        };
        return E0 {
            value: flat_level,
            p1_minus: lo,
            p1_plus: hi,
        };
    }
    let mut best = T::infinity();
    let mut arg = T::zero();
    for &(si, bi) in lines.iter().filter(|l| l.0 > T::zero()) {
        for &(sj, bj) in lines.iter().filter(|l| l.0 < T::zero()) {
            let q = (bj - bi) / (si - sj);
            let v = phi(q);
            if v < best {
                best = v;
                arg = q;
            }
        }
    }
    let slack = T::lit(1e-12) * (T::one() + best.abs());
    let above = |q: T| phi(q) > best + slack;
    let p1_minus = bisect_edge(arg, -T::one(), &above);
    let p1_plus = bisect_edge(arg, T::one(), &above);
    E0 {
        value: best,
        p1_minus,
        p1_plus,
    }
}

/// Starting from `inside` (where `above` is false), walks in direction
/// `dir` until `above` holds, then bisects the transition to 1e-10.
pub(crate) fn bisect_edge<T: Real>(inside: T, dir: T, above: &impl Fn(T) -> bool) -> T {
    let mut step = T::one();
    let mut outer = inside + dir * step;
    let mut inner = inside;
    let mut guard = 0;
    while !above(outer) {
        inner = outer;
        step = step + step;
        outer = inside + dir * step;
        guard += 1;
        if guard > 200 {
            return dir * T::infinity();
        }
    }
    let tol = T::lit(1e-10);
    while (outer - inner).abs() > tol {
        let mid = (outer + inner) / (T::one() + T::one());
        if mid == inner || mid == outer {
            break;
        }
        if above(mid) {
            outer = mid;
        } else {
            inner = mid;
        }
    }
    inner
}

/// Anything that behaves like a convex coercive Hamiltonian on momenta.
///
/// Implemented by control sides (exact formulas) and by tabulated effective
/// Hamiltonians (interpolated).
pub trait Hamiltonian<T: Real>: Sync {
    fn eval(&self, p: Vec2<T>) -> T;

    /// Nondecreasing (`Plus`) or nonincreasing (`Minus`) part in `p1`.
    fn half_p1(&self, p: Vec2<T>, branch: Branch) -> T;

    fn e0(&self, p2: T) -> E0<T>;

    /// Upper bound of the Lipschitz constant in `p`.
    fn lipschitz_bound(&self) -> T;
}

impl<T: Real> Hamiltonian<T> for ControlSide<T> {
    fn eval(&self, p: Vec2<T>) -> T {
        hamiltonian(self, p)
    }

    fn half_p1(&self, p: Vec2<T>, branch: Branch) -> T {
        half_hamiltonian(self, p, Axis::One, branch).unwrap_or_else(|_| T::neg_infinity())
    }

    fn e0(&self, p2: T) -> E0<T> {
        e0(self, p2)
    }

    fn lipschitz_bound(&self) -> T {
        self.max_speed()
    }
}

/// `max(E0(a), E0(b))` for two evaluators.
pub fn e0_pair<T: Real>(a: &dyn Hamiltonian<T>, b: &dyn Hamiltonian<T>, p2: T) -> T {
    a.e0(p2).value.max(b.e0(p2).value)
}

/// Slice `q -> H(q e1 + p2 e2)` of a planar Hamiltonian.
pub struct Slice<'a, T> {
    pub h: &'a dyn Hamiltonian<T>,
    pub p2: T,
    e0: E0<T>,
}

impl<'a, T: Real> Slice<'a, T> {
    pub fn new(h: &'a dyn Hamiltonian<T>, p2: T) -> Self {
        let e0 = h.e0(p2);
        Self { h, p2, e0 }
    }

    pub fn e0(&self) -> E0<T> {
        self.e0
    }
}

/// One-dimensional convex Hamiltonian with its monotone parts.
pub trait Hamiltonian1d<T: Real>: Sync {
    fn eval(&self, q: T) -> T;
    /// Nondecreasing part.
    fn plus(&self, q: T) -> T;
    /// Nonincreasing part.
    fn minus(&self, q: T) -> T;
    fn lipschitz(&self) -> T;
}

impl<T: Real> Hamiltonian1d<T> for Slice<'_, T> {
    fn eval(&self, q: T) -> T {
        self.h.eval(Vec2::new(q, self.p2))
    }
    fn plus(&self, q: T) -> T {
        self.h.half_p1(Vec2::new(q, self.p2), Branch::Plus)
    }
    fn minus(&self, q: T) -> T {
        self.h.half_p1(Vec2::new(q, self.p2), Branch::Minus)
    }
    fn lipschitz(&self) -> T {
        self.h.lipschitz_bound()
    }
}

/// Outcome of checking the standing assumptions on a pair of media.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub max_speed: f64,
    pub max_cost: f64,
    pub radius_left: f64,
    pub radius_right: f64,
    /// `min(radius_left, radius_right)`, the certified `delta_0`.
    pub delta0: f64,
    pub h0_nonempty: bool,
    pub h1_bounded: bool,
    pub h2_convex: bool,
    pub h3_controllable: bool,
}

impl AssumptionReport {
    pub fn failed(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.h0_nonempty {
            out.push("[H0] control set empty".to_string());
        }
        if !self.h1_bounded {
            out.push("[H1] non-finite dynamics or cost".to_string());
        }
        if !self.h2_convex {
            out.push("[H2]".to_string());
        }
        if !self.h3_controllable {
            out.push(format!(
                "[H3] velocity hull radius {:.3e} about the origin is not positive",
                self.delta0
            ));
        }
        out
    }
}

/// Checks [H0]-[H3]; the error carries the full report.
pub fn check_assumptions<T: Real>(pair: &MediumPair<T>) -> Result<AssumptionReport> {
    let radius_left = pair.left.delta0.as_f64();
    let radius_right = pair.right.delta0.as_f64();
    let finite = |s: &ControlSide<T>| {
        s.controls
            .iter()
            .all(|c| c.velocity.x.is_finite() && c.velocity.y.is_finite() && c.cost.is_finite())
    };
    let h0 = !pair.left.controls.is_empty() && !pair.right.controls.is_empty();
    let delta0 = radius_left.min(radius_right);
    let report = AssumptionReport {
        max_speed: pair.max_speed().as_f64(),
        max_cost: pair.max_cost().as_f64(),
        radius_left,
        radius_right,
        delta0,
        h0_nonempty: h0,
        h1_bounded: finite(&pair.left) && finite(&pair.right),
        // finite sets are convexified implicitly; nothing can fail here
        h2_convex: true,
        h3_controllable: h0 && delta0 > 0.0,
    };
    let failed = report.failed();
    if failed.is_empty() {
        Ok(report)
    } else {
        Err(Error::AssumptionViolation {
            failed,
            report: Box::new(report),
        })
    }
}

/// Counter-clockwise convex hull (monotone chain). Collinear points dropped.
pub fn convex_hull<T: Real>(points: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let mut pts: Vec<Vec2<T>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Vec2<T>, a: Vec2<T>, b: Vec2<T>| (a - o).cross(b - o);
    let mut hull: Vec<Vec2<T>> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Signed radius of the largest ball centred at the origin inside the
/// convex hull of `points`: the minimum over hull facets of the facet
/// constraint slack `b_k - a_k . 0` normalized by `|a_k|`. Non-positive when
/// the origin is not interior.
pub fn inscribed_radius<T: Real>(points: &[Vec2<T>]) -> T {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return T::zero();
    }
    let mut r = T::infinity();
    for k in 0..hull.len() {
        let a = hull[k];
        let b = hull[(k + 1) % hull.len()];
        let edge = b - a;
        // distance from the origin to the edge line, positive on the inner side
        let d = edge.cross(-a) / edge.norm();
        r = r.min(d);
    }
    r
}
