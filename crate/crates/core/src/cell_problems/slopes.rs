use serde::{Deserialize, Serialize};

use crate::control_model::{bisect_edge, Branch, Hamiltonian};
use crate::error::{Error, Result};
use crate::hj_engines::{Grid, ValueField};
use crate::scalar::Real;
use crate::vec2::Vec2;

/// Which medium a threshold pair belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdSide {
    L,
    M,
    R,
}

/// Extreme slopes `q` at which `H(q e1 + p2 e2)` and its monotone branch
/// both equal `level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeThresholds<T> {
    pub side: ThresholdSide,
    pub p2: T,
    pub level: T,
    pub lo: T,
    pub hi: T,
    /// `level` lies strictly above `E0`, so `lo = hi`.
    pub degenerate: bool,
}

const LEVEL_TOL: f64 = 1e-8;

/// Thresholds of `evaluator` at `level`. At `level = E0` the set is the
/// whole minimizing interval; above it, the single crossing on `branch`.
pub fn slope_thresholds<T: Real>(
    evaluator: &dyn Hamiltonian<T>,
    side: ThresholdSide,
    p2: T,
    level: T,
    branch: Branch,
) -> Result<SlopeThresholds<T>> {
    let m = evaluator.e0(p2);
    let tol = T::lit(LEVEL_TOL) * (T::one() + m.value.abs());
    if level < m.value - tol {
        return Err(Error::EmptyLevelSet {
            level: level.as_f64(),
            e0: m.value.as_f64(),
        });
    }
    let mut out = SlopeThresholds {
        side,
        p2,
        level,
        lo: m.p1_minus,
        hi: m.p1_plus,
        degenerate: false,
    };
    if level > m.value + tol {
        let above = |q: T| evaluator.eval(Vec2::new(q, p2)) > level;
        let q = match branch {
            Branch::Plus => bisect_edge(m.p1_plus, T::one(), &above),
            Branch::Minus => bisect_edge(m.p1_minus, -T::one(), &above),
        };
        out.lo = q;
        out.hi = q;
        out.degenerate = true;
    }
    Ok(out)
}

/// Hull of the thresholds over the levels `[level - delta, level + delta]`
/// (the lower end clamped at `E0`), for levels known only to within `delta`.
pub fn slope_band<T: Real>(
    evaluator: &dyn Hamiltonian<T>,
    side: ThresholdSide,
    p2: T,
    level: T,
    delta: T,
    branch: Branch,
) -> Result<SlopeThresholds<T>> {
    let floor = evaluator.e0(p2).value;
    let low = slope_thresholds(evaluator, side, p2, (level - delta).max(floor), branch)?;
    let high = slope_thresholds(evaluator, side, p2, (level + delta).max(floor), branch)?;
    Ok(SlopeThresholds {
        side,
        p2,
        level,
        lo: low.lo.min(high.lo),
        hi: low.hi.max(high.hi),
        degenerate: false,
    })
}

/// A corrector `chi` (zero at `anchor`) and an optional blow-down scale `s`
/// under which it is read as `W(y) = s chi(y / s)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorProfile<T> {
    pub field: ValueField<T>,
    pub rescale: Option<T>,
    pub anchor: Vec2<T>,
}

impl<T: Real> CorrectorProfile<T> {
    /// Shifts the field so that it vanishes at `anchor`.
    pub fn new(mut field: ValueField<T>, anchor: Vec2<T>, rescale: Option<T>) -> Result<Self> {
        let base = field.interpolate(anchor)?;
        field.values.iter_mut().for_each(|v| *v = *v - base);
        Ok(Self {
            field,
            rescale,
            anchor,
        })
    }

    /// The profile after `y1 -> -y1`.
    pub fn reflected(&self) -> Self {
        let g = &self.field.grid;
        let (n1, n2) = (g.counts[0], g.counts[1]);
        let hi = g.origin.x + g.spacing[0] * T::from_usize_lossy(n1 - 1);
        let grid = Grid {
            origin: Vec2::new(-hi, g.origin.y),
            ..g.clone()
        };
        let values = (0..n1 * n2)
            .map(|k| {
                let (i, j) = (k % n1, k / n1);
                self.field.values[(n1 - 1 - i) + n1 * j]
            })
            .collect();
        Self {
            field: ValueField {
                grid,
                values,
                meta: self.field.meta.clone(),
            },
            rescale: self.rescale,
            anchor: Vec2::new(-self.anchor.x, self.anchor.y),
        }
    }
}

/// Piecewise wedge: left of `kink_left` the slopes are bounded by `left`,
/// right of `kink_right` by `right`, each side anchored at the profile's
/// (row-averaged) value at its kink. Equal kinks at the anchor give the
/// centred form `-hi_L y1^- + lo_R y1^+ <= W <= -lo_L y1^- + hi_R y1^+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wedge<T> {
    pub left: SlopeThresholds<T>,
    pub right: SlopeThresholds<T>,
    pub kink_left: T,
    pub kink_right: T,
}

/// Lower growth bounds fitted on the outer regions `|y1| >= rho_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport<T> {
    pub rho_star: T,
    /// Smallest `M` with `chi(y') - chi(y) >= lo_R (y1' - y1) - M` for
    /// `rho_star <= y1 <= y1'`.
    pub m_right: T,
    /// Smallest `M` with `chi(y') - chi(y) >= hi_L (y1' - y1) - M` for
    /// `y1' <= y1 <= -rho_star`.
    pub m_left: T,
}

/// Min and max forward difference quotient along `y1` within a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeRange<T> {
    pub min: T,
    pub max: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheckReport<T> {
    pub checked: usize,
    pub violations: usize,
    /// Largest violation of the (rescaled) wedge.
    pub max_violation: T,
    pub violation_rate: T,
    pub tol: T,
    pub pass: bool,
    /// Discrete slopes left of, between and right of the kinks.
    pub slopes: [Option<SlopeRange<T>>; 3],
    pub growth: GrowthReport<T>,
}

/// Nodewise check of the wedge on `W = s chi(. / s)` (report only).
///
/// A node violates the wedge when `W` leaves it by more than `tol`; the
/// check passes when fewer than 1% of the checked nodes do.
pub fn corrector_slope_check<T: Real>(
    profile: &CorrectorProfile<T>,
    wedge: &Wedge<T>,
    tol: T,
) -> SlopeCheckReport<T> {
    let f = &profile.field;
    let g = &f.grid;
    let (n1, n2) = (g.counts[0], g.counts[1]);
    let s = profile.rescale.unwrap_or_else(T::one);
    let x1 = |i: usize| g.origin.x + g.spacing[0] * T::from_usize_lossy(i);
    let mean_at = |y1: T| -> T {
        let total: T = (0..n2)
            .map(|j| {
                let y2 = g.origin.y + g.spacing[1] * T::from_usize_lossy(j);
                f.interpolate(Vec2::new(y1, y2)).unwrap_or_else(|_| T::nan())
            })
            .sum();
        total / T::from_usize_lossy(n2)
    };
    let base_l = mean_at(wedge.kink_left);
    let base_r = mean_at(wedge.kink_right);
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut worst = T::zero();
    for i in 0..n1 {
        let y1 = x1(i);
        let bounds = if y1 <= wedge.kink_left {
            let d = y1 - wedge.kink_left;
            Some((base_l + wedge.left.hi * d, base_l + wedge.left.lo * d))
        } else if y1 >= wedge.kink_right {
            let d = y1 - wedge.kink_right;
            Some((base_r + wedge.right.lo * d, base_r + wedge.right.hi * d))
        } else {
            None
        };
        let Some((lower, upper)) = bounds else { continue };
        for j in 0..n2 {
            let v = f.values[i + n1 * j];
            let excess = s * (lower - v).max(v - upper).max(T::zero());
            let excess = if excess.is_finite() { excess } else { T::infinity() };
            checked += 1;
            worst = worst.max(excess);
            if excess > tol {
                violations += 1;
            }
        }
    }
    let rate = if checked == 0 {
        T::zero()
    } else {
        T::from_usize_lossy(violations) / T::from_usize_lossy(checked)
    };
    let mut slopes = [None; 3];
    for i in 0..n1.saturating_sub(1) {
        let mid = (x1(i) + x1(i + 1)) * T::lit(0.5);
        let region = if mid < wedge.kink_left {
            0
        } else if mid > wedge.kink_right {
            2
        } else {
            1
        };
        for j in 0..n2 {
            let q = (f.values[i + 1 + n1 * j] - f.values[i + n1 * j]) / g.spacing[0];
            let r: &mut Option<SlopeRange<T>> = &mut slopes[region];
            *r = Some(match *r {
                None => SlopeRange { min: q, max: q },
                Some(sr) => SlopeRange {
                    min: sr.min.min(q),
                    max: sr.max.max(q),
                },
            });
        }
    }
    SlopeCheckReport {
        checked,
        violations,
        max_violation: worst,
        violation_rate: rate,
        tol,
        pass: checked > 0 && rate < T::lit(0.01),
        slopes,
        growth: growth_report(f, wedge),
    }
}

/// Fits `M*` on `|y1| >= rho/2` by a sweep over column extremes.
fn growth_report<T: Real>(f: &ValueField<T>, wedge: &Wedge<T>) -> GrowthReport<T> {
    let g = &f.grid;
    let (n1, n2) = (g.counts[0], g.counts[1]);
    let x1 = |i: usize| g.origin.x + g.spacing[0] * T::from_usize_lossy(i);
    let rho = x1(0).abs().max(x1(n1 - 1).abs());
    let rho_star = rho * T::lit(0.5);
    let col = |i: usize| {
        (0..n2).fold((T::infinity(), T::neg_infinity()), |(a, b), j| {
            let v = f.values[i + n1 * j];
            (a.min(v), b.max(v))
        })
    };
    // right: max over i <= k of [lo (x_k - x_i) - (min_k - max_i)]
    let pi = wedge.right.lo;
    let mut best_prefix = T::neg_infinity();
    let mut m_right = T::zero();
    for i in (0..n1).filter(|&i| x1(i) >= rho_star) {
        let (mn, mx) = col(i);
        best_prefix = best_prefix.max(mx - pi * x1(i));
        m_right = m_right.max(pi * x1(i) - mn + best_prefix);
    }
    // left: max over k <= i of [hi (x_k - x_i) - (min_k - max_i)]
    let pi = wedge.left.hi;
    let mut best_suffix = T::neg_infinity();
    let mut m_left = T::zero();
    for i in (0..n1).rev().filter(|&i| x1(i) <= -rho_star) {
        let (mn, mx) = col(i);
        best_suffix = best_suffix.max(mx - pi * x1(i));
        m_left = m_left.max(pi * x1(i) - mn + best_suffix);
    }
    GrowthReport {
        rho_star,
        m_right,
        m_left,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_model::{ControlSide, SideLabel};
    use crate::hj_engines::FieldMeta;
    use approx::assert_abs_diff_eq;

    fn c5() -> ControlSide<f64> {
        ControlSide::cross(SideLabel::Right, 1.0, 1.0)
    }

    #[test]
    fn threshold_examples() {
        let s = c5();
        let t = slope_thresholds(&s, ThresholdSide::R, 0.0, -1.0, Branch::Plus).unwrap();
        assert_abs_diff_eq!(t.lo, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(t.hi, 0.0, epsilon = 1e-8);
        let t = slope_thresholds(&s, ThresholdSide::R, 0.0, 0.0, Branch::Plus).unwrap();
        assert_abs_diff_eq!(t.lo, 1.0, epsilon = 1e-8);
        assert!(t.degenerate && t.lo == t.hi);
        let t = slope_thresholds(&s, ThresholdSide::L, 0.0, 0.0, Branch::Minus).unwrap();
        assert_abs_diff_eq!(t.hi, -1.0, epsilon = 1e-8);
    }

    #[test]
    fn flat_minimum_gives_interval() {
        let t = slope_thresholds(&c5(), ThresholdSide::R, 1.0, 0.0, Branch::Plus).unwrap();
        assert_abs_diff_eq!(t.lo, -1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(t.hi, 1.0, epsilon = 1e-8);
        assert!(!t.degenerate);
    }

    #[test]
    fn level_below_minimum_is_empty() {
        let err = slope_thresholds(&c5(), ThresholdSide::R, 0.0, -1.5, Branch::Plus).unwrap_err();
        assert!(matches!(err, Error::EmptyLevelSet { .. }));
    }

    fn line_profile(f: impl Fn(f64) -> f64) -> CorrectorProfile<f64> {
        let grid = Grid::line(-4.0, 4.0, 81).unwrap();
        let values = (0..81).map(|i| f(grid.coord(i).x)).collect();
        let field = ValueField::new(grid, values, FieldMeta::default()).unwrap();
        CorrectorProfile::new(field, Vec2::zero(), None).unwrap()
    }

    fn wedge(level: f64) -> Wedge<f64> {
        let s = c5();
        Wedge {
            left: slope_thresholds(&s, ThresholdSide::L, 0.0, level, Branch::Minus).unwrap(),
            right: slope_thresholds(&s, ThresholdSide::R, 0.0, level, Branch::Plus).unwrap(),
            kink_left: 0.0,
            kink_right: 0.0,
        }
    }

    #[test]
    fn v_shaped_corrector_passes() {
        // |q| - 1 = 0: slopes -1 and +1
        let r = corrector_slope_check(&line_profile(|x| x.abs()), &wedge(0.0), 0.05);
        assert!(r.pass, "{r:?}");
        assert_eq!(r.violations, 0);
        let right = r.slopes[2].unwrap();
        assert_abs_diff_eq!(right.min, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.growth.m_right, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constructed_violation_fails() {
        let r = corrector_slope_check(&line_profile(|x| x.abs() + if x > 1.0 { 1.0 } else { 0.0 }), &wedge(0.0), 0.05);
        assert!(!r.pass);
        assert_abs_diff_eq!(r.max_violation, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rescaling_shrinks_bounded_defects() {
        let bump = |x: f64| x.abs() + 0.3 * (3.0 * x).sin().abs();
        let plain = corrector_slope_check(&line_profile(bump), &wedge(0.0), 0.05);
        assert!(!plain.pass);
        let mut p = line_profile(bump);
        p.rescale = Some(0.1);
        assert!(corrector_slope_check(&p, &wedge(0.0), 0.05).pass);
    }

    #[test]
    fn reflection_mirrors_values() {
        let p = line_profile(|x| x * x + x);
        let r = p.reflected();
        for x in [-3.0, 0.5, 2.0] {
            let a = p.field.interpolate(Vec2::new(x, 0.0)).unwrap();
            let b = r.field.interpolate(Vec2::new(-x, 0.0)).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
