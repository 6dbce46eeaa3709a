use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{FieldMeta, Grid, Stencil, ValueField};
use crate::control_model::MediumPair;
use crate::error::{Error, Result};
use crate::geometry::{Region, RegionOracle};
use crate::scalar::Real;
use crate::vec2::Vec2;

/// Stopping rule shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverControl<T> {
    /// Target accuracy of the returned values (value iteration) or of the
    /// returned constant (ergodic solvers).
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SolverControl<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9),
            max_iter: 2_000_000,
        }
    }
}

/// Discounted infinite-horizon control problem on a geometry.
#[derive(Clone, Copy)]
pub struct DpProblem<'a, T: Real> {
    pub pair: &'a MediumPair<T>,
    pub oracle: &'a dyn RegionOracle<T>,
    /// Momentum `p`; the running cost becomes `l + p . f`.
    pub momentum: Vec2<T>,
    /// Admissible `x1` interval (state constraint); `None` clamps Euler feet
    /// to the grid window instead.
    pub constraint: Option<(T, T)>,
    pub lambda: T,
    pub dt: T,
    /// Normalization point of correctors.
    pub anchor: Vec2<T>,
    pub control: SolverControl<T>,
}

impl<'a, T: Real> DpProblem<'a, T> {
    pub fn new(pair: &'a MediumPair<T>, oracle: &'a dyn RegionOracle<T>, lambda: T, dt: T) -> Self {
        Self {
            pair,
            oracle,
            momentum: Vec2::zero(),
            constraint: None,
            lambda,
            dt,
            anchor: Vec2::zero(),
            control: SolverControl::default(),
        }
    }

    pub fn with_tangential_momentum(mut self, p2: T) -> Self {
        self.momentum = Vec2::new(T::zero(), p2);
        self
    }

    pub fn with_momentum(mut self, p: Vec2<T>) -> Self {
        self.momentum = p;
        self
    }

    pub fn with_constraint(mut self, lo: T, hi: T) -> Self {
        self.constraint = Some((lo, hi));
        self
    }

    pub fn with_anchor(mut self, anchor: Vec2<T>) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn with_control(mut self, control: SolverControl<T>) -> Self {
        self.control = control;
        self
    }

    /// Bound `(M_l + sup c + |p| M_f) / lambda` on the value function.
    pub fn value_bound(&self) -> T {
        (self.pair.max_cost() + self.pair.far_field_bound() + self.momentum.norm() * self.pair.max_speed())
            / self.lambda
    }
}

/// `0.4 h_min / M_f`.
pub fn default_time_step<T: Real>(grid: &Grid<T>, pair: &MediumPair<T>) -> T {
    T::lit(0.4) * grid.min_spacing() / pair.max_speed().max(T::epsilon())
}

#[derive(Debug, Clone, Copy)]
struct Transition<T> {
    cost: T,
    stencil: Stencil<T>,
}

/// The semi-Lagrangian Bellman operator with its transitions precomputed:
/// `(TV)(x) = min_k [cost_k(x) + beta * Interp V(foot_k(x))]`.
pub struct DpOperator<T> {
    offsets: Vec<usize>,
    transitions: Vec<Transition<T>>,
    pub dt: T,
}

impl<T: Real> DpOperator<T> {
    pub fn build(problem: &DpProblem<'_, T>, grid: &Grid<T>) -> Result<Self> {
        let dt = problem.dt;
        if !(dt > T::zero()) {
            return Err(Error::InvalidArguments(format!("time step {dt} must be positive")));
        }
        let slack = T::lit(1e-12) * (T::one() + grid.min_spacing());
        let per_node: Vec<Result<Vec<Transition<T>>>> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let x = grid.coord(k);
                let region = problem.oracle.region(x);
                let mut out = Vec::new();
                let far = problem.pair.far_field(x.x);
                for (side, allowed) in [
                    (&problem.pair.left, matches!(region, Region::Left | Region::OnInterface)),
                    (&problem.pair.right, matches!(region, Region::Right | Region::OnInterface)),
                ] {
                    if !allowed {
                        continue;
                    }
                    for c in &side.controls {
                        let foot = x + c.velocity * dt;
                        if let Some((lo, hi)) = problem.constraint {
                            if foot.x < lo - slack || foot.x > hi + slack {
                                continue;
                            }
                        }
                        let Some(stencil) = grid.stencil(grid.clamp(foot)) else {
                            continue;
                        };
                        let cost = dt * (c.cost + far + problem.momentum.dot(c.velocity));
                        out.push(Transition { cost, stencil });
                    }
                }
                if out.is_empty() {
                    Err(Error::NoAdmissibleControl {
                        node: k,
                        dt: dt.as_f64(),
                    })
                } else {
                    Ok(out)
                }
            })
            .collect();
        let mut offsets = Vec::with_capacity(grid.len() + 1);
        let mut transitions = Vec::new();
        offsets.push(0);
        for node in per_node {
            transitions.extend(node?);
            offsets.push(transitions.len());
        }
        Ok(Self {
            offsets,
            transitions,
            dt,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out = T_beta(v)`; ties keep the first minimum.
    pub fn apply(&self, v: &[T], beta: T, out: &mut [T]) {
        out.par_iter_mut()
            .with_min_len(512)
            .enumerate()
            .for_each(|(k, o)| {
                let mut best = T::infinity();
                for t in &self.transitions[self.offsets[k]..self.offsets[k + 1]] {
                    let mut acc = T::zero();
                    for &(i, w) in &t.stencil {
                        acc = acc + w * v[i as usize];
                    }
                    let cand = t.cost + beta * acc;
                    if cand < best {
                        best = cand;
                    }
                }
                *o = best;
            });
    }
}

/// Smallest and largest entry of `TV - V`.
pub(crate) fn macqueen_bounds<T: Real>(tv: &[T], v: &[T]) -> (T, T) {
    tv.iter()
        .zip(v)
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), (a, b)| {
            let d = *a - *b;
            (lo.min(d), hi.max(d))
        })
}

/// Discounted value function by semi-Lagrangian value iteration.
pub fn value_iteration<T: Real>(problem: &DpProblem<'_, T>, grid: &Grid<T>) -> Result<ValueField<T>> {
    value_iteration_from(problem, grid, None)
}

/// As [`value_iteration`], starting from `init`.
///
/// Stops with the MacQueen bounds: for `d = TV - V` the fixed point lies in
/// `TV + beta/(1-beta) [min d, max d]`; the midpoint is returned once that
/// interval is shorter than `2 tol`.
pub fn value_iteration_from<T: Real>(
    problem: &DpProblem<'_, T>,
    grid: &Grid<T>,
    init: Option<Vec<T>>,
) -> Result<ValueField<T>> {
    let lambda = problem.lambda;
    if !(lambda > T::zero()) {
        return Err(Error::InvalidArguments(format!("discount {lambda} must be positive")));
    }
    if !(lambda * problem.dt < T::one()) {
        return Err(Error::InvalidArguments(format!(
            "lambda * dt = {} must be below 1",
            lambda * problem.dt
        )));
    }
    let op = DpOperator::build(problem, grid)?;
    let beta = T::one() - lambda * problem.dt;
    let factor = beta / (T::one() - beta);
    let two = T::one() + T::one();
    let mut v = match init {
        Some(v) if v.len() == grid.len() => v,
        Some(v) => {
            return Err(Error::InvalidArguments(format!(
                "initial field has {} values for {} nodes",
                v.len(),
                grid.len()
            )))
        }
        None => vec![T::zero(); grid.len()],
    };
    let mut tv = vec![T::zero(); grid.len()];
    let mut residual = T::infinity();
    for it in 1..=problem.control.max_iter {
        op.apply(&v, beta, &mut tv);
        let (lo, hi) = macqueen_bounds(&tv, &v);
        residual = lo.abs().max(hi.abs());
        if factor * (hi - lo) / two <= problem.control.tol {
            let shift = factor * (lo + hi) / two;
            let values = tv.iter().map(|&x| x + shift).collect();
            return ValueField::new(
                grid.clone(),
                values,
                FieldMeta {
                    scheme: "semi-lagrangian".into(),
                    step: problem.dt.as_f64(),
                    discount: lambda.as_f64(),
                    residual: (factor * (hi - lo) / two).as_f64(),
                    iterations: it,
                },
            );
        }
        std::mem::swap(&mut v, &mut tv);
    }
    Err(Error::NonConvergence {
        iterations: problem.control.max_iter,
        residual: residual.as_f64(),
    })
}

/// How the ergodic limit is extracted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErgodicMethod<T> {
    /// Discounted solves along a decreasing schedule, then Richardson
    /// extrapolation of `-lambda V_lambda(anchor)`.
    Discounted { schedule: Vec<T> },
    /// Undiscounted relative value iteration: the discrete long-run average
    /// with two-sided bounds.
    Relative,
}

impl<T: Real> ErgodicMethod<T> {
    pub fn default_schedule() -> Self {
        ErgodicMethod::Discounted {
            schedule: vec![T::lit(0.02), T::lit(0.01), T::lit(0.005)],
        }
    }
}

/// Ergodic level with its corrector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicResult<T> {
    /// Level `E` such that `H(Du + p) = E` admits the corrector.
    pub constant: T,
    /// Corrector, zero at the anchor node.
    pub corrector: ValueField<T>,
    pub anchor: usize,
    /// Discounts actually used (empty for relative value iteration).
    pub schedule: Vec<T>,
    /// `-lambda_k V_k(anchor)` per discount.
    pub levels: Vec<T>,
    /// Richardson extrapolants, one per consecutive pair of levels.
    pub extrapolants: Vec<T>,
    /// `|c_k - c_{k-1}|`.
    pub gaps: Vec<T>,
    /// Certified bracket of the discrete constant (relative iteration only).
    pub bracket: Option<(T, T)>,
    pub converged: bool,
}

/// Limit of `(r c_k - c_{k-1}) / (r - 1)` with `r = lambda_{k-1}/lambda_k`.
pub(crate) fn richardson<T: Real>(lam_prev: T, c_prev: T, lam: T, c: T) -> T {
    let r = lam_prev / lam;
    (r * c - c_prev) / (r - T::one())
}

/// Corrector `V - V(anchor)` of the last discounted solve, Richardson
/// extrapolated nodewise against the previous one when there is one.
pub(crate) fn extrapolated_corrector<T: Real>(
    prev: Option<(T, Vec<T>)>,
    lam: T,
    mut field: ValueField<T>,
    anchor: usize,
) -> ValueField<T> {
    let base = field.values[anchor];
    field.values.iter_mut().for_each(|v| *v = *v - base);
    if let Some((lam_prev, w_prev)) = prev {
        for (v, &p) in field.values.iter_mut().zip(&w_prev) {
            *v = richardson(lam_prev, p, lam, *v);
        }
    }
    field
}

/// Discounted ergodic approximation with Richardson extrapolation of both
/// the constant and the corrector.
///
/// Each solve is warm-started from the previous corrector shifted to the
/// expected level. Stops early when two successive extrapolants agree within
/// `5e-3`.
pub fn ergodic_constant<T: Real>(
    problem: &DpProblem<'_, T>,
    grid: &Grid<T>,
    schedule: &[T],
) -> Result<ErgodicResult<T>> {
    if schedule.len() < 2 {
        return Err(Error::InvalidArguments("discount schedule needs at least 2 entries".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|l| !(*l > T::zero())) {
        return Err(Error::InvalidArguments(
            "discount schedule must be positive and strictly decreasing".into(),
        ));
    }
    let anchor = grid.nearest(problem.anchor);
    let stop = T::lit(5e-3);
    let mut levels: Vec<T> = Vec::new();
    let mut extrapolants: Vec<T> = Vec::new();
    let mut gaps: Vec<T> = Vec::new();
    let mut used = Vec::new();
    let mut last: Option<ValueField<T>> = None;
    let mut prev: Option<(T, Vec<T>)> = None;
    let mut converged = false;
    for &lam in schedule {
        let mut p = *problem;
        p.lambda = lam;
        p.control.tol = problem.control.tol / lam;
        let init = last.as_ref().map(|f| {
            let c = *levels.last().expect("level recorded with field");
            let base = f.values[anchor];
            f.values.iter().map(|&v| v - base - c / lam).collect()
        });
        let field = value_iteration_from(&p, grid, init)?;
        let c = -lam * field.values[anchor];
        if let (Some(&c_prev), Some(&lam_prev)) = (levels.last(), used.last()) {
            let gap = (c - c_prev).abs();
            if let Some(&g_prev) = gaps.last() {
                if gap > T::lit(10.0) * g_prev + T::lit(2.0) * problem.control.tol {
                    gaps.push(gap);
                    return Err(Error::ExtrapolationUnstable {
                        gaps: gaps.iter().map(|g| g.as_f64()).collect(),
                    });
                }
            }
            gaps.push(gap);
            extrapolants.push(richardson(lam_prev, c_prev, lam, c));
        }
        if let (Some(f), Some(&l)) = (&last, used.last()) {
            let base = f.values[anchor];
            prev = Some((l, f.values.iter().map(|&v| v - base).collect()));
        }
        levels.push(c);
        used.push(lam);
        last = Some(field);
        if let [.., a, b] = extrapolants[..] {
            if (a - b).abs() < stop {
                converged = true;
                break;
            }
        }
    }
    if extrapolants.len() == 1 {
        converged = gaps[0] < stop;
    }
    let corrector = extrapolated_corrector(prev, *used.last().expect("nonempty"), last.expect("nonempty"), anchor);
    Ok(ErgodicResult {
        constant: *extrapolants.last().expect("at least two discounts"),
        corrector,
        anchor,
        schedule: used,
        levels,
        extrapolants,
        gaps,
        bracket: None,
        converged,
    })
}

/// Undiscounted relative value iteration for the semi-Lagrangian chain.
///
/// With `d = T h - h` the per-step average cost lies in `[min d, max d]`
/// (Odoni bounds); iteration stops once that bracket, converted to a rate,
/// is shorter than `tol`. A half-step relaxation removes periodicity.
pub fn relative_value_iteration<T: Real>(
    problem: &DpProblem<'_, T>,
    grid: &Grid<T>,
    init: Option<Vec<T>>,
) -> Result<ErgodicResult<T>> {
    let op = DpOperator::build(problem, grid)?;
    let anchor = grid.nearest(problem.anchor);
    let dt = problem.dt;
    let half = T::lit(0.5);
    let mut h = match init {
        Some(v) if v.len() == grid.len() => v,
        _ => vec![T::zero(); grid.len()],
    };
    let mut th = vec![T::zero(); grid.len()];
    let mut bracket = (T::neg_infinity(), T::infinity());
    for it in 1..=problem.control.max_iter {
        op.apply(&h, T::one(), &mut th);
        let (lo, hi) = macqueen_bounds(&th, &h);
        // level E = -(average cost rate)
        let (e_lo, e_hi) = (-hi / dt, -lo / dt);
        bracket = (bracket.0.max(e_lo), bracket.1.min(e_hi));
        if (hi - lo) / dt <= problem.control.tol {
            let base = th[anchor];
            let values = th.iter().map(|&x| x - base).collect();
            let corrector = ValueField::new(
                grid.clone(),
                values,
                FieldMeta {
                    scheme: "semi-lagrangian-relative".into(),
                    step: dt.as_f64(),
                    discount: 0.0,
                    residual: ((hi - lo) / dt).as_f64(),
                    iterations: it,
                },
            )?;
            let constant = (e_lo + e_hi) * half;
            return Ok(ErgodicResult {
                constant,
                corrector,
                anchor,
                schedule: Vec::new(),
                levels: vec![constant],
                extrapolants: Vec::new(),
                gaps: Vec::new(),
                bracket: Some((e_lo, e_hi)),
                converged: true,
            });
        }
        let base = (T::one() - half) * h[anchor] + half * th[anchor];
        h.iter_mut()
            .zip(&th)
            .for_each(|(a, b)| *a = (T::one() - half) * *a + half * *b - base);
    }
    Err(Error::NonConvergence {
        iterations: problem.control.max_iter,
        residual: (bracket.1 - bracket.0).as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_model::{Control, ControlSide, FarFieldCost, SideLabel};
    use crate::geometry::FlatInterface;
    use approx::assert_abs_diff_eq;

    fn still(cost: f64) -> MediumPair<f64> {
        let s = |l| ControlSide::new(l, vec![Control::new(0.0, 0.0, cost)]);
        MediumPair::new(s(SideLabel::Left), s(SideLabel::Right))
    }

    #[test]
    fn zero_velocity_gives_cost_over_lambda() {
        let pair = still(1.0);
        let g = Grid::strip(-1.0, 1.0, 9, 0.0, 1.0, 4).unwrap();
        let p = DpProblem::new(&pair, &FlatInterface, 1.0, 0.05);
        let v = value_iteration(&p, &g).unwrap();
        for x in &v.values {
            assert_abs_diff_eq!(*x, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn cross_medium_gives_one_over_lambda() {
        let pair = MediumPair::<f64>::identical();
        let g = Grid::strip(-2.0, 2.0, 33, 0.0, 1.0, 8).unwrap();
        let dt = default_time_step(&g, &pair);
        let v = value_iteration(&DpProblem::new(&pair, &FlatInterface, 1.0, dt), &g).unwrap();
        for x in &v.values {
            assert_abs_diff_eq!(*x, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn far_field_cost_brackets_origin_value() {
        let pair = MediumPair::<f64>::identical().with_far_field_cost(FarFieldCost::saturating_ramp(2.0));
        let g = Grid::strip(-6.0, 6.0, 97, 0.0, 1.0, 4).unwrap();
        let dt = default_time_step(&g, &pair);
        let p = DpProblem::new(&pair, &FlatInterface, 1.0, dt);
        let v = value_iteration(&p, &g).unwrap();
        let v0 = v.interpolate(Vec2::new(0.0, 0.0)).unwrap();
        assert!((1.0 - 1e-8..=3.0).contains(&v0), "v(0) = {v0}");
        assert!(v.sup_abs() <= p.value_bound() + 1e-9);
    }

    #[test]
    fn state_constraint_with_outward_only_dynamics_fails() {
        let s = |l| ControlSide::new(l, vec![Control::new(1.0, 0.0, 1.0)]);
        let pair = MediumPair::new(s(SideLabel::Left), s(SideLabel::Right));
        let g = Grid::strip(-1.0, 1.0, 5, 0.0, 1.0, 2).unwrap();
        let p = DpProblem::new(&pair, &FlatInterface, 1.0, 0.1).with_constraint(-1.0, 1.0);
        assert!(matches!(
            value_iteration(&p, &g),
            Err(Error::NoAdmissibleControl { .. })
        ));
    }

    #[test]
    fn non_convergence_reported() {
        let pair = MediumPair::<f64>::identical().with_far_field_cost(FarFieldCost::saturating_ramp(2.0));
        let g = Grid::strip(-3.0, 3.0, 25, 0.0, 1.0, 4).unwrap();
        let p = DpProblem::new(&pair, &FlatInterface, 1.0, 0.01).with_control(SolverControl {
            tol: 1e-12,
            max_iter: 3,
        });
        assert!(matches!(
            value_iteration(&p, &g),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn ergodic_examples() {
        let pair = MediumPair::<f64>::identical();
        let g = Grid::strip(-1.0, 1.0, 17, 0.0, 1.0, 16).unwrap();
        let dt = default_time_step(&g, &pair);
        let sched = [0.02, 0.01, 0.005];
        let base = DpProblem::new(&pair, &FlatInterface, 1.0, dt).with_control(SolverControl {
            tol: 1e-7,
            max_iter: 10_000_000,
        });
        let r = ergodic_constant(&base, &g, &sched).unwrap();
        assert_abs_diff_eq!(r.constant, -1.0, epsilon = 1e-6);
        assert!(r.corrector.sup_abs() < 1e-6);
        let r = ergodic_constant(&base.with_tangential_momentum(0.5), &g, &sched).unwrap();
        assert_abs_diff_eq!(r.constant, -0.5, epsilon = 1e-3);
        let pair3 = still(3.0);
        let r = ergodic_constant(&DpProblem::new(&pair3, &FlatInterface, 1.0, dt), &g, &sched).unwrap();
        assert_abs_diff_eq!(r.constant, -3.0, epsilon = 1e-6);
    }

    #[test]
    fn relative_iteration_examples() {
        let pair = MediumPair::<f64>::identical();
        let g = Grid::strip(-1.0, 1.0, 17, 0.0, 1.0, 16).unwrap();
        let dt = default_time_step(&g, &pair);
        let base = DpProblem::new(&pair, &FlatInterface, 1.0, dt).with_control(SolverControl {
            tol: 1e-9,
            max_iter: 1_000_000,
        });
        let r = relative_value_iteration(&base, &g, None).unwrap();
        assert_abs_diff_eq!(r.constant, -1.0, epsilon = 1e-9);
        let r = relative_value_iteration(&base.with_tangential_momentum(0.5), &g, None).unwrap();
        assert_abs_diff_eq!(r.constant, -0.5, epsilon = 1e-8);
        let (lo, hi) = r.bracket.unwrap();
        assert!(lo <= -0.5 + 1e-8 && hi >= -0.5 - 1e-8);
    }

    #[test]
    fn schedule_validation() {
        let pair = MediumPair::<f64>::identical();
        let g = Grid::strip(-1.0, 1.0, 5, 0.0, 1.0, 4).unwrap();
        let p = DpProblem::new(&pair, &FlatInterface, 1.0, 0.1);
        assert!(ergodic_constant(&p, &g, &[0.1]).is_err());
        assert!(ergodic_constant(&p, &g, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn richardson_removes_linear_term() {
        let c = |l: f64| -0.7 + 3.0 * l;
        assert_abs_diff_eq!(richardson(0.02, c(0.02), 0.01, c(0.01)), -0.7, epsilon = 1e-14);
    }
}
