use rayon::prelude::*;

use super::grid::{FieldMeta, Grid, ValueField};
use super::semi_lagrangian::{
    extrapolated_corrector, macqueen_bounds, richardson, ErgodicMethod, ErgodicResult, SolverControl,
};
use crate::control_model::Hamiltonian1d;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec2::Axis;

/// One Hamiltonian on the interval `(lo, hi)`; infinite ends are allowed.
#[derive(Clone, Copy)]
pub struct Piece<'a, T> {
    pub lo: T,
    pub hi: T,
    pub h: &'a dyn Hamiltonian1d<T>,
}

/// Flux-limited junction at a grid node.
#[derive(Clone, Copy)]
pub struct Junction<'a, T> {
    pub position: T,
    pub limiter: T,
    pub left: &'a dyn Hamiltonian1d<T>,
    pub right: &'a dyn Hamiltonian1d<T>,
}

/// Closure at the two ends of the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero-gradient ghost node.
    Outflow,
    /// Only the inward-pointing monotone branch is kept.
    StateConstraint,
}

/// `lambda u + F(u) = source` on a line of pieces and junctions.
pub struct JunctionProblem<'a, T: Real> {
    pub pieces: Vec<Piece<'a, T>>,
    pub junctions: Vec<Junction<'a, T>>,
    pub lambda: T,
    pub grid: Grid<T>,
    pub boundary: Boundary,
    /// Right-hand side per node (the far-field cost); empty means zero.
    pub source: Vec<T>,
    pub control: SolverControl<T>,
}

#[derive(Clone, Copy)]
enum Node<'a, T> {
    Interior(&'a dyn Hamiltonian1d<T>),
    Junction(&'a dyn Hamiltonian1d<T>, &'a dyn Hamiltonian1d<T>, T),
    Seam(&'a dyn Hamiltonian1d<T>, &'a dyn Hamiltonian1d<T>),
    LeftEnd(&'a dyn Hamiltonian1d<T>),
    RightEnd(&'a dyn Hamiltonian1d<T>),
}

struct Scheme<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
    source: Vec<T>,
    inv_h: T,
    boundary: Boundary,
    lipschitz: T,
}

impl<'a, T: Real> Scheme<'a, T> {
    fn build(p: &JunctionProblem<'a, T>) -> Result<Self> {
        let g = &p.grid;
        if g.counts[1] != 1 || g.counts[0] < 3 || g.is_periodic(Axis::One) {
            return Err(Error::InvalidArguments(
                "junction scheme needs a non-periodic line grid with at least 3 nodes".into(),
            ));
        }
        if p.pieces.is_empty() {
            return Err(Error::InvalidArguments("no Hamiltonian pieces".into()));
        }
        let h = g.spacing[0];
        let tol = h * T::lit(1e-6);
        let (x_lo, x_hi) = g.bounds(Axis::One);
        let mut pieces = p.pieces.clone();
        pieces.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap_or(std::cmp::Ordering::Equal));
        if pieces[0].lo > x_lo + tol || pieces[pieces.len() - 1].hi < x_hi - tol {
            return Err(Error::InvalidArguments("pieces do not cover the grid".into()));
        }
        for w in pieces.windows(2) {
            if (w[0].hi - w[1].lo).abs() > tol {
                return Err(Error::InvalidArguments(format!(
                    "pieces leave a gap or overlap between {} and {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        for (k, piece) in pieces.iter().enumerate() {
            if !coercive(piece.h) {
                return Err(Error::NonCoerciveHamiltonian { piece: k });
            }
        }
        let n = g.counts[0];
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let x = g.coord(i).x;
            let inside = pieces.iter().find(|pc| x > pc.lo + tol && x < pc.hi - tol);
            let node = if i == 0 {
                let pc = inside.or_else(|| pieces.iter().find(|pc| (pc.lo - x).abs() <= tol));
                Node::LeftEnd(pc.expect("coverage checked").h)
            } else if i == n - 1 {
                let pc = inside.or_else(|| pieces.iter().find(|pc| (pc.hi - x).abs() <= tol));
                Node::RightEnd(pc.expect("coverage checked").h)
            } else if let Some(pc) = inside {
                Node::Interior(pc.h)
            } else {
                let l = pieces.iter().find(|pc| (pc.hi - x).abs() <= tol);
                let r = pieces.iter().find(|pc| (pc.lo - x).abs() <= tol);
                match (l, r) {
                    (Some(l), Some(r)) => Node::Seam(l.h, r.h),
                    _ => return Err(Error::InvalidArguments(format!("node {x} not covered"))),
                }
            };
            nodes.push(node);
        }
        for j in &p.junctions {
            let s = (j.position - x_lo) / h;
            let i = s.round().to_usize().unwrap_or(usize::MAX);
            if i == 0 || i >= n - 1 || (s - s.round()).abs() > T::lit(1e-6) {
                return Err(Error::InvalidArguments(format!(
                    "junction at {} is not an interior grid node",
                    j.position
                )));
            }
            nodes[i] = Node::Junction(j.left, j.right, j.limiter);
        }
        let source = if p.source.is_empty() {
            vec![T::zero(); n]
        } else if p.source.len() == n {
            p.source.clone()
        } else {
            return Err(Error::InvalidArguments(format!(
                "source has {} entries for {} nodes",
                p.source.len(),
                n
            )));
        };
        let mut lipschitz = T::zero();
        for pc in &pieces {
            lipschitz = lipschitz.max(pc.h.lipschitz());
        }
        for j in &p.junctions {
            lipschitz = lipschitz.max(j.left.lipschitz()).max(j.right.lipschitz());
        }
        Ok(Self {
            nodes,
            source,
            inv_h: h.recip(),
            boundary: p.boundary,
            lipschitz,
        })
    }

    #[inline]
    fn flux(&self, u: &[T], i: usize) -> T {
        let n = u.len();
        let dm = if i > 0 { (u[i] - u[i - 1]) * self.inv_h } else { T::zero() };
        let dp = if i + 1 < n { (u[i + 1] - u[i]) * self.inv_h } else { T::zero() };
        match self.nodes[i] {
            Node::Interior(h) => h.plus(dm).max(h.minus(dp)),
            Node::Junction(l, r, lim) => lim.max(l.plus(dm)).max(r.minus(dp)),
            Node::Seam(l, r) => l.plus(dm).max(r.minus(dp)),
            Node::LeftEnd(h) => match self.boundary {
                Boundary::Outflow => h.plus(T::zero()).max(h.minus(dp)),
                Boundary::StateConstraint => h.minus(dp),
            },
            Node::RightEnd(h) => match self.boundary {
                Boundary::Outflow => h.plus(dm).max(h.minus(T::zero())),
                Boundary::StateConstraint => h.plus(dm),
            },
        }
    }

    /// `out_i = F_i(u) - source_i`.
    fn residual(&self, u: &[T], out: &mut [T]) {
        out.par_iter_mut()
            .with_min_len(256)
            .enumerate()
            .for_each(|(i, o)| *o = self.flux(u, i) - self.source[i]);
    }

    /// Largest monotone pseudo-time step for discount `lambda`.
    fn tau(&self, lambda: T) -> T {
        let two = T::one() + T::one();
        T::lit(0.9) / (lambda + two * self.lipschitz * self.inv_h)
    }
}

/// Growth probe: `H(q) - H(0)` must be positive and grow at least linearly
/// in both directions.
fn coercive<T: Real>(h: &dyn Hamiltonian1d<T>) -> bool {
    let big = T::lit(1e3) * (T::one() + h.lipschitz());
    let h0 = h.eval(T::zero());
    let slope_min = T::lit(1e-6);
    [big, -big].iter().all(|&q| {
        let v = h.eval(q);
        v.is_finite() && (v - h0) / big > slope_min
    })
}

/// Discounted solve of the monotone upwind scheme with flux-limited
/// junctions. Explicit pseudo-time stepping with MacQueen stopping.
pub fn junction_solve_1d<T: Real>(problem: &JunctionProblem<'_, T>) -> Result<ValueField<T>> {
    junction_solve_from(problem, None)
}

fn junction_solve_from<T: Real>(
    problem: &JunctionProblem<'_, T>,
    init: Option<Vec<T>>,
) -> Result<ValueField<T>> {
    let lambda = problem.lambda;
    if !(lambda > T::zero()) {
        return Err(Error::InvalidArguments(format!("discount {lambda} must be positive")));
    }
    let scheme = Scheme::build(problem)?;
    let n = scheme.nodes.len();
    let tau = scheme.tau(lambda);
    let beta = T::one() - lambda * tau;
    let factor = beta / (T::one() - beta);
    let two = T::one() + T::one();
    let mut u = init.filter(|v| v.len() == n).unwrap_or_else(|| vec![T::zero(); n]);
    let mut r = vec![T::zero(); n];
    let mut gu = vec![T::zero(); n];
    let mut residual = T::infinity();
    for it in 1..=problem.control.max_iter {
        scheme.residual(&u, &mut r);
        for i in 0..n {
            gu[i] = u[i] - tau * (lambda * u[i] + r[i]);
        }
        let (lo, hi) = macqueen_bounds(&gu, &u);
        residual = lo.abs().max(hi.abs()) / tau;
        if factor * (hi - lo) / two <= problem.control.tol {
            let shift = factor * (lo + hi) / two;
            let values = gu.iter().map(|&x| x + shift).collect();
            return ValueField::new(
                problem.grid.clone(),
                values,
                FieldMeta {
                    scheme: "godunov-junction".into(),
                    step: tau.as_f64(),
                    discount: lambda.as_f64(),
                    residual: (factor * (hi - lo) / two).as_f64(),
                    iterations: it,
                },
            );
        }
        std::mem::swap(&mut u, &mut gu);
    }
    Err(Error::NonConvergence {
        iterations: problem.control.max_iter,
        residual: residual.as_f64(),
    })
}

/// Ergodic level of the junction scheme: `F(w) - source = E`, normalized by
/// `w(anchor) = 0`.
pub fn junction_ergodic_1d<T: Real>(
    problem: &JunctionProblem<'_, T>,
    anchor: T,
    method: &ErgodicMethod<T>,
) -> Result<ErgodicResult<T>> {
    let g = &problem.grid;
    let ia = g.nearest(crate::vec2::Vec2::new(anchor, T::zero()));
    match method {
        ErgodicMethod::Discounted { schedule } => discounted(problem, ia, schedule),
        ErgodicMethod::Relative => relative(problem, ia),
    }
}

fn discounted<T: Real>(
    problem: &JunctionProblem<'_, T>,
    ia: usize,
    schedule: &[T],
) -> Result<ErgodicResult<T>> {
    if schedule.len() < 2 || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArguments(
            "discount schedule must have at least 2 strictly decreasing entries".into(),
        ));
    }
    let stop = T::lit(5e-3);
    let mut levels: Vec<T> = Vec::new();
    let mut used: Vec<T> = Vec::new();
    let mut gaps: Vec<T> = Vec::new();
    let mut extrapolants: Vec<T> = Vec::new();
    let mut last: Option<ValueField<T>> = None;
    let mut prev: Option<(T, Vec<T>)> = None;
    let mut converged = false;
    for &lam in schedule {
        let sub = JunctionProblem {
            pieces: problem.pieces.clone(),
            junctions: problem.junctions.clone(),
            lambda: lam,
            grid: problem.grid.clone(),
            boundary: problem.boundary,
            source: problem.source.clone(),
            control: SolverControl {
                tol: problem.control.tol / lam,
                max_iter: problem.control.max_iter,
            },
        };
        let init = last.as_ref().map(|f| {
            let c = *levels.last().expect("level recorded");
            let base = f.values[ia];
            f.values.iter().map(|&v| v - base - c / lam).collect()
        });
        let field = junction_solve_from(&sub, init)?;
        let c = -lam * field.values[ia];
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
            let base = f.values[ia];
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
    let corrector = extrapolated_corrector(prev, *used.last().expect("nonempty"), last.expect("nonempty"), ia);
    Ok(ErgodicResult {
        constant: *extrapolants.last().expect("two discounts"),
        corrector,
        anchor: ia,
        schedule: used,
        levels,
        extrapolants,
        gaps,
        bracket: None,
        converged,
    })
}

fn relative<T: Real>(problem: &JunctionProblem<'_, T>, ia: usize) -> Result<ErgodicResult<T>> {
    let scheme = Scheme::build(problem)?;
    let n = scheme.nodes.len();
    // half the monotone step keeps a self-weight of at least 1/2
    let tau = scheme.tau(T::zero()) * T::lit(0.5);
    let mut w = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut bracket = (T::neg_infinity(), T::infinity());
    for it in 1..=problem.control.max_iter {
        scheme.residual(&w, &mut r);
        let (lo, hi) = r
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(a, b), &x| (a.min(x), b.max(x)));
        bracket = (bracket.0.max(lo), bracket.1.min(hi));
        if hi - lo <= problem.control.tol {
            let base = w[ia];
            let values = w.iter().map(|&x| x - base).collect();
            let corrector = ValueField::new(
                problem.grid.clone(),
                values,
                FieldMeta {
                    scheme: "godunov-junction-relative".into(),
                    step: tau.as_f64(),
                    discount: 0.0,
                    residual: (hi - lo).as_f64(),
                    iterations: it,
                },
            )?;
            let constant = (lo + hi) / (T::one() + T::one());
            return Ok(ErgodicResult {
                constant,
                corrector,
                anchor: ia,
                schedule: Vec::new(),
                levels: vec![constant],
                extrapolants: Vec::new(),
                gaps: Vec::new(),
                bracket: Some((lo, hi)),
                converged: true,
            });
        }
        let shift = w[ia] - tau * r[ia];
        for i in 0..n {
            w[i] = w[i] - tau * r[i] - shift;
        }
    }
    Err(Error::NonConvergence {
        iterations: problem.control.max_iter,
        residual: (bracket.1 - bracket.0).as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_model::{ControlSide, Hamiltonian, SideLabel, Slice};
    use approx::assert_abs_diff_eq;

    fn c5() -> ControlSide<f64> {
        ControlSide::cross(SideLabel::Left, 1.0, 1.0)
    }

    fn control() -> SolverControl<f64> {
        SolverControl {
            tol: 1e-11,
            max_iter: 2_000_000,
        }
    }

    fn two_piece<'a>(h: &'a Slice<'a, f64>, limiter: Option<f64>, n: usize) -> JunctionProblem<'a, f64> {
        JunctionProblem {
            pieces: vec![
                Piece { lo: f64::NEG_INFINITY, hi: 0.0, h },
                Piece { lo: 0.0, hi: f64::INFINITY, h },
            ],
            junctions: limiter
                .map(|limiter| Junction {
                    position: 0.0,
                    limiter,
                    left: h,
                    right: h,
                })
                .into_iter()
                .collect(),
            lambda: 1.0,
            grid: Grid::line(-4.0, 4.0, n).unwrap(),
            boundary: Boundary::Outflow,
            source: Vec::new(),
            control: control(),
        }
    }

    #[test]
    fn single_piece_constant_solution() {
        let side = c5();
        let h = Slice::new(&side as &dyn Hamiltonian<f64>, 0.0);
        let p = JunctionProblem {
            pieces: vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                h: &h,
            }],
            junctions: vec![],
            lambda: 1.0,
            grid: Grid::line(-2.0, 2.0, 41).unwrap(),
            boundary: Boundary::Outflow,
            source: vec![],
            control: control(),
        };
        let u = junction_solve_1d(&p).unwrap();
        for v in &u.values {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn limiter_at_e0_is_inactive() {
        let side = c5();
        let h = Slice::new(&side as &dyn Hamiltonian<f64>, 0.0);
        let u = junction_solve_1d(&two_piece(&h, Some(-1.0), 81)).unwrap();
        let plain = junction_solve_1d(&two_piece(&h, None, 81)).unwrap();
        for (a, b) in u.values.iter().zip(&plain.values) {
            assert_abs_diff_eq!(*a, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn active_limiter_matches_exponential_profile() {
        // exact solution 1 - exp(-|x|): travel to the junction, rest there for free
        let side = c5();
        let h = Slice::new(&side as &dyn Hamiltonian<f64>, 0.0);
        let u = junction_solve_1d(&two_piece(&h, Some(0.0), 321)).unwrap();
        let g = &u.grid;
        let mid = g.nearest(crate::vec2::Vec2::new(0.0, 0.0));
        assert_abs_diff_eq!(u.values[mid], 0.0, epsilon = 1e-9);
        for i in 0..g.len() {
            let x: f64 = g.coord(i).x;
            if x.abs() < 3.0 {
                assert_abs_diff_eq!(u.values[i], 1.0 - (-x.abs()).exp(), epsilon = 0.03);
            }
        }
        for i in mid..g.len() - 1 {
            assert!(u.values[i + 1] >= u.values[i] - 1e-12);
        }
    }

    #[test]
    fn minus_infinity_limiter_equals_plain_solve() {
        let side = c5();
        let h = Slice::new(&side as &dyn Hamiltonian<f64>, 0.3);
        let a = junction_solve_1d(&two_piece(&h, Some(f64::NEG_INFINITY), 81)).unwrap();
        let b = junction_solve_1d(&two_piece(&h, None, 81)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn non_coercive_piece_rejected() {
        struct Flat;
        impl Hamiltonian1d<f64> for Flat {
            fn eval(&self, _: f64) -> f64 {
                -1.0
            }
            fn plus(&self, _: f64) -> f64 {
                -1.0
            }
            fn minus(&self, _: f64) -> f64 {
                -1.0
            }
            fn lipschitz(&self) -> f64 {
                0.0
            }
        }
        let p = JunctionProblem {
            pieces: vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                h: &Flat,
            }],
            junctions: vec![],
            lambda: 1.0,
            grid: Grid::line(-1.0, 1.0, 11).unwrap(),
            boundary: Boundary::Outflow,
            source: vec![],
            control: control(),
        };
        assert!(matches!(
            junction_solve_1d(&p),
            Err(Error::NonCoerciveHamiltonian { piece: 0 })
        ));
    }

    #[test]
    fn ergodic_level_of_state_constrained_line() {
        let side = c5();
        let h = Slice::new(&side as &dyn Hamiltonian<f64>, 0.5);
        let mut p = two_piece(&h, None, 65);
        p.boundary = Boundary::StateConstraint;
        p.control.tol = 1e-9;
        let r = junction_ergodic_1d(&p, 0.0, &ErgodicMethod::Relative).unwrap();
        assert_abs_diff_eq!(r.constant, -0.5, epsilon = 1e-8);
        let r = junction_ergodic_1d(&p, 0.0, &ErgodicMethod::default_schedule()).unwrap();
        assert_abs_diff_eq!(r.constant, -0.5, epsilon = 1e-4);
    }

    #[test]
    fn junction_off_grid_rejected() {
        let side = c5();
        let h = Slice::new(&side as &dyn Hamiltonian<f64>, 0.0);
        let mut p = two_piece(&h, Some(0.0), 81);
        p.junctions[0].position = 0.01;
        p.pieces[0].hi = 0.01;
        p.pieces[1].lo = 0.01;
        assert!(matches!(junction_solve_1d(&p), Err(Error::InvalidArguments(_))));
    }
}
