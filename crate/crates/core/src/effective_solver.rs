//! The effective transmission problems (strip of width `2 eta`, flat limit)
//! and the direct oscillatory problem behind one interface.

use serde::{Deserialize, Serialize};

use crate::cell_problems::{EffectiveTable, FluxLimiterCurve};
use crate::control_model::{Hamiltonian, MediumPair, Slice};
use crate::error::{Error, Result};
use crate::geometry::{InterfaceSpec, ToothProfile};
use crate::hj_engines::{
    default_time_step, junction_solve_1d, value_iteration, Boundary, DpProblem, Grid, Junction,
    JunctionProblem, Piece, SolverControl, ValueField,
};
use crate::scalar::Real;
use crate::vec2::Vec2;

/// Which problem [`solve_effective`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EffectiveKind<T> {
    /// `H^L | H^M | H^R` with limited junctions at `-eta` and `eta`.
    EtaStrip { eta: T },
    /// `H^L | H^R` with one limited junction at the origin.
    FlatLimit,
    /// The oscillatory problem itself at scales `(eta, eps)`.
    Direct { eta: T, eps: T },
    /// Two-dimensional junction with the limiter evaluated at the discrete
    /// tangential gradient. Not implemented.
    TangentialJunction,
}

/// Limiter curves per junction; the solvers evaluate them at `p2 = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct JunctionLimiters<'a, T> {
    pub lm: Option<&'a FluxLimiterCurve<T>>,
    pub mr: Option<&'a FluxLimiterCurve<T>>,
    /// Flat-interface limiter; defaults to `max(lm, mr)`.
    pub limit: Option<&'a FluxLimiterCurve<T>>,
}

#[derive(Debug, Clone)]
pub struct EffectiveProblemSpec<'a, T> {
    pub kind: EffectiveKind<T>,
    pub pair: &'a MediumPair<T>,
    /// Tooth profile (direct problems).
    pub profile: ToothProfile<T>,
    /// Strip Hamiltonian (strip problems).
    pub hm: Option<&'a EffectiveTable<T>>,
    pub limiters: JunctionLimiters<'a, T>,
    pub lambda: T,
    /// Window `[lo, hi]` in `x1`.
    pub window: (T, T),
    /// Spacing of the one-dimensional effective problems.
    pub h: T,
    /// Direct problems: cells per period `eta eps` in `x2`.
    pub cells_per_period: usize,
    /// Direct problems: cells per `eps` in `x1`.
    pub cells_per_eps: usize,
    pub control: SolverControl<T>,
}

impl<'a, T: Real> EffectiveProblemSpec<'a, T> {
    /// Window `[-6, 6]`, `h = 1/80`, 8 cells per period, `h1 = eps / 8`.
    pub fn new(kind: EffectiveKind<T>, pair: &'a MediumPair<T>, lambda: T) -> Self {
        Self {
            kind,
            pair,
            profile: ToothProfile::standard(),
            hm: None,
            limiters: JunctionLimiters {
                lm: None,
                mr: None,
                limit: None,
            },
            lambda,
            window: (T::lit(-6.0), T::lit(6.0)),
            h: T::lit(1.0 / 80.0),
            cells_per_period: 8,
            cells_per_eps: 8,
            control: SolverControl::default(),
        }
    }
}

fn limiter_at_zero<T: Real>(curve: Option<&FluxLimiterCurve<T>>, what: &str) -> Result<T> {
    curve
        .ok_or_else(|| Error::InvalidArguments(format!("missing {what} limiter curve")))?
        .at(T::zero())
}

fn line_grid<T: Real>(window: (T, T), h: T) -> Result<Grid<T>> {
    let cells = ((window.1 - window.0) / h).round();
    Grid::line(window.0, window.1, cells.to_usize().unwrap_or(0) + 1)
}

/// Solves the configured problem on the window.
pub fn solve_effective<T: Real>(spec: &EffectiveProblemSpec<'_, T>) -> Result<ValueField<T>> {
    let pair = spec.pair;
    let zero = T::zero();
    match spec.kind {
        EffectiveKind::FlatLimit => {
            let limit = match spec.limiters.limit {
                Some(c) => c.at(zero)?,
                None => limiter_at_zero(spec.limiters.lm, "E^{L,M}")?
                    .max(limiter_at_zero(spec.limiters.mr, "E^{M,R}")?),
            };
            let hl = Slice::new(&pair.left as &dyn Hamiltonian<T>, zero);
            let hr = Slice::new(&pair.right as &dyn Hamiltonian<T>, zero);
            let grid = line_grid(spec.window, spec.h)?;
            let source = (0..grid.len()).map(|k| pair.far_field(grid.coord(k).x)).collect();
            let problem = JunctionProblem {
                pieces: vec![
                    Piece { lo: spec.window.0, hi: zero, h: &hl },
                    Piece { lo: zero, hi: spec.window.1, h: &hr },
                ],
                junctions: vec![Junction { position: zero, limiter: limit, left: &hl, right: &hr }],
                lambda: spec.lambda,
                grid,
                boundary: Boundary::Outflow,
                source,
                control: spec.control,
            };
            junction_solve_1d(&problem)
        }
        EffectiveKind::EtaStrip { eta } => {
            let hm = spec
                .hm
                .ok_or_else(|| Error::InvalidArguments("strip problems need the H^M table".into()))?;
            if !(eta > zero) || !(spec.window.0 < -eta && eta < spec.window.1) {
                return Err(Error::InvalidArguments(format!(
                    "strip half-width {eta} must be positive and inside the window"
                )));
            }
            let lm = limiter_at_zero(spec.limiters.lm, "E^{L,M}")?;
            let mr = limiter_at_zero(spec.limiters.mr, "E^{M,R}")?;
            let hl = Slice::new(&pair.left as &dyn Hamiltonian<T>, zero);
            let hmid = Slice::new(hm as &dyn Hamiltonian<T>, zero);
            let hr = Slice::new(&pair.right as &dyn Hamiltonian<T>, zero);
            let grid = line_grid(spec.window, spec.h)?;
            let source = (0..grid.len()).map(|k| pair.far_field(grid.coord(k).x)).collect();
            let problem = JunctionProblem {
                pieces: vec![
                    Piece { lo: spec.window.0, hi: -eta, h: &hl },
                    Piece { lo: -eta, hi: eta, h: &hmid },
                    Piece { lo: eta, hi: spec.window.1, h: &hr },
                ],
                junctions: vec![
                    Junction { position: -eta, limiter: lm, left: &hl, right: &hmid },
                    Junction { position: eta, limiter: mr, left: &hmid, right: &hr },
                ],
                lambda: spec.lambda,
                grid,
                boundary: Boundary::Outflow,
                source,
                control: spec.control,
            };
            junction_solve_1d(&problem)
        }
        EffectiveKind::Direct { eta, eps } => {
            let geo = InterfaceSpec::new(spec.profile.clone(), eta, eps)?;
            if spec.cells_per_period < 8 {
                return Err(Error::Resolution(format!(
                    "period eta*eps = {} spans {} cells; at least 8 are required",
                    geo.period(),
                    spec.cells_per_period
                )));
            }
            let h1 = eps / T::from_usize_lossy(spec.cells_per_eps.max(1));
            let n1 = ((spec.window.1 - spec.window.0) / h1).round().to_usize().unwrap_or(0) + 1;
            let n2 = spec.cells_per_period;
            let off = geo.period() * T::lit(0.5) / T::from_usize_lossy(n2);
            let grid = Grid::strip(spec.window.0, spec.window.1, n1, off, geo.period(), n2)?;
            let dt = default_time_step(&grid, pair);
            let problem = DpProblem::new(pair, &geo, spec.lambda, dt).with_control(spec.control);
            value_iteration(&problem, &grid)
        }
        EffectiveKind::TangentialJunction => Err(Error::InvalidArguments(
            "tangentially varying effective junctions are not implemented; use the x2-invariant kinds"
                .into(),
        )),
    }
}

/// Pointwise comparison of two fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport<T> {
    pub points: Vec<Vec2<T>>,
    pub errors: Vec<T>,
    pub max: T,
    pub mean: T,
}

/// `|a - b|` at each sample point (bilinear interpolation).
pub fn compare_fields<T: Real>(
    a: &ValueField<T>,
    b: &ValueField<T>,
    points: &[Vec2<T>],
) -> Result<CompareReport<T>> {
    let errors = points
        .iter()
        .map(|&x| Ok((a.interpolate(x)? - b.interpolate(x)?).abs()))
        .collect::<Result<Vec<T>>>()?;
    let max = errors.iter().copied().fold(T::zero(), T::max);
    let mean = if errors.is_empty() {
        T::zero()
    } else {
        errors.iter().copied().sum::<T>() / T::from_usize_lossy(errors.len())
    };
    Ok(CompareReport {
        points: points.to_vec(),
        errors,
        max,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_problems::LimiterKind;
    use approx::assert_abs_diff_eq;

    fn curve(v: f64) -> FluxLimiterCurve<f64> {
        FluxLimiterCurve::exact(LimiterKind::Limit, vec![0.0], vec![v])
    }

    fn tight() -> SolverControl<f64> {
        SolverControl {
            tol: 1e-10,
            max_iter: 5_000_000,
        }
    }

    #[test]
    fn flat_limit_inactive_limiter_is_constant() {
        let pair = MediumPair::<f64>::identical();
        let c = curve(-1.0);
        let mut spec = EffectiveProblemSpec::new(EffectiveKind::FlatLimit, &pair, 1.0);
        spec.limiters.limit = Some(&c);
        spec.control = tight();
        let v = solve_effective(&spec).unwrap();
        assert!(v.values.iter().all(|x| (x - 1.0).abs() < 1e-6));
    }

    #[test]
    fn flat_limit_active_limiter_lowers_junction() {
        let pair = MediumPair::<f64>::identical();
        let c = curve(0.0);
        let mut spec = EffectiveProblemSpec::new(EffectiveKind::FlatLimit, &pair, 1.0);
        spec.limiters.limit = Some(&c);
        spec.control = tight();
        let v = solve_effective(&spec).unwrap();
        let at = |x: f64| v.interpolate(Vec2::new(x, 0.0)).unwrap();
        assert!(at(0.0) < 0.1);
        assert!(at(-5.0) > 0.95 && at(5.0) > 0.95);
    }

    #[test]
    fn direct_identical_media_is_constant() {
        let pair = MediumPair::<f64>::identical();
        let mut spec = EffectiveProblemSpec::new(EffectiveKind::Direct { eta: 0.2, eps: 0.2 }, &pair, 1.0);
        spec.window = (-2.0, 2.0);
        spec.control = SolverControl { tol: 1e-6, max_iter: 1_000_000 };
        let v = solve_effective(&spec).unwrap();
        assert!(v.values.iter().all(|x| (x - 1.0).abs() < 0.02));
    }

    #[test]
    fn direct_under_resolved_period_rejected() {
        let pair = MediumPair::<f64>::identical();
        let mut spec = EffectiveProblemSpec::new(EffectiveKind::Direct { eta: 0.2, eps: 0.2 }, &pair, 1.0);
        spec.cells_per_period = 4;
        assert!(matches!(solve_effective(&spec), Err(Error::Resolution(_))));
    }

    #[test]
    fn strip_needs_table() {
        let pair = MediumPair::<f64>::identical();
        let spec = EffectiveProblemSpec::new(EffectiveKind::EtaStrip { eta: 0.2 }, &pair, 1.0);
        assert!(matches!(solve_effective(&spec), Err(Error::InvalidArguments(_))));
    }

    #[test]
    fn compare_constant_offset() {
        let g = Grid::line(-1.0, 1.0, 5).unwrap();
        let a = ValueField::constant(g.clone(), 1.0);
        let b = ValueField::constant(g, 1.3);
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(0.7, 0.0)];
        let r = compare_fields(&a, &b, &pts).unwrap();
        assert_abs_diff_eq!(r.max, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(compare_fields(&a, &a, &pts).unwrap().max, 0.0);
        let out = compare_fields(&a, &b, &[Vec2::new(2.0, 0.0)]);
        assert!(matches!(out, Err(Error::OutOfWindow { .. })));
    }
}
