use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellSettings, EffectiveTable};
use crate::control_model::{Hamiltonian, MediumPair, Slice};
use crate::error::{Error, Result};
use crate::geometry::{FingerGeometry, InterfaceSpec};
use crate::hj_engines::{
    default_time_step, ergodic_constant, junction_ergodic_1d, relative_value_iteration, Boundary,
    DpProblem, ErgodicMethod, ErgodicResult, Grid, Junction, JunctionProblem, Piece,
};
use crate::scalar::Real;
use crate::vec2::Vec2;

/// Which strip edge a finger problem describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Strip on the left, right medium beyond: `E^{M,R}`.
    MR,
    /// Left medium beyond, strip on the right: `E^{L,M}`, computed on the
    /// mirrored data.
    LM,
}

/// The sampled quantity of a [`FluxLimiterCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimiterKind<T> {
    E0Left,
    E0Right,
    E0Strip,
    LM,
    MR,
    Limit,
    Eps(T),
}

impl<T: Real> LimiterKind<T> {
    pub fn name(&self) -> String {
        match self {
            LimiterKind::E0Left => "E0_L".into(),
            LimiterKind::E0Right => "E0_R".into(),
            LimiterKind::E0Strip => "E0_M".into(),
            LimiterKind::LM => "E_LM".into(),
            LimiterKind::MR => "E_MR".into(),
            LimiterKind::Limit => "E".into(),
            LimiterKind::Eps(e) => format!("E_eps({e})"),
        }
    }
}

/// Result of a rho-schedule run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimiterOutcome<T> {
    /// Last computed constant.
    pub value: T,
    /// Truncation half-widths actually used.
    pub rho_schedule: Vec<T>,
    /// Constant per truncation.
    pub values: Vec<T>,
    /// Last `|value_k - value_{k-1}|` (infinite with a single entry).
    pub increment: T,
    /// Whether the increment dropped below the tolerance.
    pub converged: bool,
    /// Solve at the largest truncation (constant, corrector, diagnostics).
    pub last: ErgodicResult<T>,
}

/// Sampled map `p2 -> limiter`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxLimiterCurve<T> {
    pub kind: LimiterKind<T>,
    pub p2: Vec<T>,
    pub values: Vec<T>,
    pub rho_schedule: Vec<T>,
    /// Last rho increment per sample (zero for closed-form kinds).
    pub increments: Vec<T>,
    pub converged: Vec<bool>,
}

impl<T: Real> FluxLimiterCurve<T> {
    /// Closed-form curve (no truncation involved).
    pub fn exact(kind: LimiterKind<T>, p2: Vec<T>, values: Vec<T>) -> Self {
        let n = p2.len();
        Self {
            kind,
            p2,
            values,
            rho_schedule: Vec::new(),
            increments: vec![T::zero(); n],
            converged: vec![true; n],
        }
    }

    pub fn from_outcomes(kind: LimiterKind<T>, p2: Vec<T>, outcomes: &[LimiterOutcome<T>]) -> Self {
        Self {
            kind,
            p2,
            values: outcomes.iter().map(|o| o.value).collect(),
            rho_schedule: outcomes
                .iter()
                .max_by_key(|o| o.rho_schedule.len())
                .map(|o| o.rho_schedule.clone())
                .unwrap_or_default(),
            increments: outcomes.iter().map(|o| o.increment).collect(),
            converged: outcomes.iter().map(|o| o.converged).collect(),
        }
    }

    /// Linear interpolation in `p2` (constant beyond the samples).
    pub fn at(&self, p2: T) -> Result<T> {
        if self.p2.is_empty() {
            return Err(Error::InvalidArguments(format!("{} curve is empty", self.kind.name())));
        }
        if let Some(k) = self.p2.iter().position(|&s| (s - p2).abs() <= T::lit(1e-12)) {
            return Ok(self.values[k]);
        }
        let mut order: Vec<usize> = (0..self.p2.len()).collect();
        order.sort_by(|&a, &b| self.p2[a].partial_cmp(&self.p2[b]).expect("finite samples"));
        let first = order[0];
        let last = order[order.len() - 1];
        if p2 <= self.p2[first] {
            return Ok(self.values[first]);
        }
        if p2 >= self.p2[last] {
            return Ok(self.values[last]);
        }
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            if p2 <= self.p2[b] {
                let t = (p2 - self.p2[a]) / (self.p2[b] - self.p2[a]);
                return Ok(self.values[a] + t * (self.values[b] - self.values[a]));
            }
        }
        Ok(self.values[last])
    }

    /// CSV with columns `p2,value,increment,converged`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "p2,value,increment,converged")?;
        for k in 0..self.p2.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.p2[k], self.values[k], self.increments[k], self.converged[k]
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn run_ergodic<T: Real>(
    problem: &DpProblem<'_, T>,
    grid: &Grid<T>,
    method: &ErgodicMethod<T>,
) -> Result<ErgodicResult<T>> {
    match method {
        ErgodicMethod::Discounted { schedule } => ergodic_constant(problem, grid, schedule),
        ErgodicMethod::Relative => relative_value_iteration(problem, grid, None),
    }
}

/// Grid of a finger problem: `[-rho, rho]` with spacing `finger_h1`, one
/// period `eta` in `y2` offset by half a cell so no node sits on a cap.
pub fn finger_problem_grid<T: Real>(fg: &FingerGeometry<T>, settings: &CellSettings<T>) -> Result<Grid<T>> {
    let n2 = settings.finger_nodes_per_period;
    if n2 < 16 {
        return Err(Error::Resolution(format!(
            "finger problems need at least 16 nodes per period (got {n2})"
        )));
    }
    if !fg.rho.is_finite() {
        return Err(Error::InvalidArguments("finger problems need a finite rho".into()));
    }
    let cells = (T::lit(2.0) * fg.rho / settings.finger_h1).round();
    let n1 = cells.to_usize().unwrap_or(0) + 1;
    let off = fg.eta * T::lit(0.5) / T::from_usize_lossy(n2);
    Grid::strip(-fg.rho, fg.rho, n1, off, fg.eta, n2)
}

/// `lambda_rho(p2)`: ergodic constant of the state-constrained finger problem
/// on `|y1| <= rho`, with corrector anchored at the origin.
pub fn lambda_rho<T: Real>(
    pair: &MediumPair<T>,
    fg: &FingerGeometry<T>,
    p2: T,
    settings: &CellSettings<T>,
) -> Result<ErgodicResult<T>> {
    let grid = finger_problem_grid(fg, settings)?;
    let dt = default_time_step(&grid, pair);
    let problem = DpProblem::new(pair, fg, T::one(), dt)
        .with_tangential_momentum(p2)
        .with_constraint(-fg.rho, fg.rho)
        .with_anchor(Vec2::zero())
        .with_control(settings.control);
    run_ergodic(&problem, &grid, &settings.method)
}

fn validate_schedule<T: Real>(rho_schedule: &[T]) -> Result<()> {
    if rho_schedule.is_empty() || rho_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArguments(
            "rho schedule must be nonempty and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Runs `solve` along the schedule until the increment drops below `tol`.
fn along_schedule<T: Real>(
    rho_schedule: &[T],
    tol: T,
    mut solve: impl FnMut(T) -> Result<ErgodicResult<T>>,
) -> Result<LimiterOutcome<T>> {
    validate_schedule(rho_schedule)?;
    let mut values = Vec::new();
    let mut used = Vec::new();
    let mut increment = T::infinity();
    let mut last = None;
    for &rho in rho_schedule {
        let r = solve(rho)?;
        if let Some(&prev) = values.last() {
            increment = (r.constant - prev).abs();
        }
        values.push(r.constant);
        used.push(rho);
        last = Some(r);
        if increment < tol {
            break;
        }
    }
    let last = last.expect("nonempty schedule");
    Ok(LimiterOutcome {
        value: last.constant,
        rho_schedule: used,
        values,
        increment,
        converged: increment < tol,
        last,
    })
}

/// `E^{M,R}(p2)` or `E^{L,M}(p2)` as the rho-limit of [`lambda_rho`]. The
/// `LM` orientation runs the same code on the mirrored pair and profile; its
/// corrector lives in mirrored coordinates.
pub fn flux_limiter<T: Real>(
    pair: &MediumPair<T>,
    fg: &FingerGeometry<T>,
    orientation: Orientation,
    p2: T,
    rho_schedule: &[T],
    settings: &CellSettings<T>,
) -> Result<LimiterOutcome<T>> {
    let (pair, base) = match orientation {
        Orientation::MR => (pair.clone(), fg.clone()),
        Orientation::LM => (pair.mirrored(), fg.mirrored()),
    };
    along_schedule(rho_schedule, settings.rho_tol, |rho| {
        let fg = FingerGeometry::new(base.profile.clone(), base.eta, rho)?;
        lambda_rho(&pair, &fg, p2, settings)
    })
}

/// `mu_rho(p2)` of the three-piece line problem: `H^L` on `(-rho, -1)`,
/// `H^M` on `(-1, 1)`, `H^R` on `(1, rho)`, limiters at `-1` and `1`, state
/// constraints at `+-rho`.
pub fn mu_rho<T: Real>(
    pair: &MediumPair<T>,
    hm: &EffectiveTable<T>,
    limiters: (T, T),
    p2: T,
    rho: T,
    settings: &CellSettings<T>,
) -> Result<ErgodicResult<T>> {
    if !(rho > T::one()) {
        return Err(Error::InvalidArguments(format!("rho = {rho} must exceed the strip half-width 1")));
    }
    let hl = Slice::new(&pair.left as &dyn Hamiltonian<T>, p2);
    let hmid = Slice::new(hm as &dyn Hamiltonian<T>, p2);
    let hr = Slice::new(&pair.right as &dyn Hamiltonian<T>, p2);
    let cells = (T::lit(2.0) * rho / settings.line_h).round();
    let n = cells.to_usize().unwrap_or(0) + 1;
    let grid = Grid::line(-rho, rho, n)?;
    let one = T::one();
    let problem = JunctionProblem {
        pieces: vec![
            Piece { lo: -rho, hi: -one, h: &hl },
            Piece { lo: -one, hi: one, h: &hmid },
            Piece { lo: one, hi: rho, h: &hr },
        ],
        junctions: vec![
            Junction { position: -one, limiter: limiters.0, left: &hl, right: &hmid },
            Junction { position: one, limiter: limiters.1, left: &hmid, right: &hr },
        ],
        lambda: one,
        grid,
        boundary: Boundary::StateConstraint,
        source: Vec::new(),
        control: settings.control,
    };
    junction_ergodic_1d(&problem, T::zero(), &settings.method)
}

/// `E(p2)` as the rho-limit of [`mu_rho`].
pub fn flux_limiter_1d<T: Real>(
    pair: &MediumPair<T>,
    hm: &EffectiveTable<T>,
    limiters: (T, T),
    p2: T,
    rho_schedule: &[T],
    settings: &CellSettings<T>,
) -> Result<LimiterOutcome<T>> {
    along_schedule(rho_schedule, settings.rho_tol, |rho| {
        mu_rho(pair, hm, limiters, p2, rho, settings)
    })
}

/// Grid of the oscillatory truncated problem: `[-rho, rho]` with spacing
/// `eps / eps_nodes_per_eps_h1`, one period `eps` in `y2`.
pub fn epsilon_problem_grid<T: Real>(spec: &InterfaceSpec<T>, rho: T, settings: &CellSettings<T>) -> Result<Grid<T>> {
    let n2 = settings.eps_nodes_per_period;
    if n2 < 16 {
        return Err(Error::Resolution(format!(
            "period eps = {} needs at least 16 nodes (got {n2})",
            spec.eps
        )));
    }
    let period = spec.period();
    let h1 = spec.eps / T::from_usize_lossy(settings.eps_nodes_per_eps_h1.max(1));
    let n1 = (T::lit(2.0) * rho / h1).round().to_usize().unwrap_or(0) + 1;
    let off = period * T::lit(0.5) / T::from_usize_lossy(n2);
    Grid::strip(-rho, rho, n1, off, period, n2)
}

/// `E_eps(p2)`: rho-limit of the state-constrained ergodic constants on the
/// oscillatory geometry with `eta = 1`.
pub fn epsilon_flux_limiter<T: Real>(
    pair: &MediumPair<T>,
    spec: &InterfaceSpec<T>,
    p2: T,
    rho_schedule: &[T],
    settings: &CellSettings<T>,
) -> Result<LimiterOutcome<T>> {
    if (spec.eta - T::one()).abs() > T::lit(1e-12) {
        return Err(Error::InvalidArguments(format!(
            "the oscillatory cell problem uses eta = 1 (got {})",
            spec.eta
        )));
    }
    let reach = spec.amplitude();
    along_schedule(rho_schedule, settings.rho_tol, |rho| {
        if !(rho > reach) {
            return Err(Error::InvalidArguments(format!(
                "rho = {rho} must exceed the interface extent {reach}"
            )));
        }
        let grid = epsilon_problem_grid(spec, rho, settings)?;
        let dt = default_time_step(&grid, pair);
        let problem = DpProblem::new(pair, spec, T::one(), dt)
            .with_tangential_momentum(p2)
            .with_constraint(-rho, rho)
            .with_anchor(Vec2::zero())
            .with_control(settings.control);
        run_ergodic(&problem, &grid, &settings.method)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_model::e0;
    use crate::geometry::ToothProfile;
    use approx::assert_abs_diff_eq;

    fn fast() -> CellSettings<f64> {
        CellSettings {
            finger_h1: 1.0 / 8.0,
            finger_nodes_per_period: 16,
            ..CellSettings::default()
        }
    }

    #[test]
    fn identical_media_finger_levels_equal_e0() {
        let pair = MediumPair::<f64>::identical();
        let fg = FingerGeometry::new(ToothProfile::standard(), 1.0, 3.0).unwrap();
        for p2 in [0.0, 0.5] {
            let r = lambda_rho(&pair, &fg, p2, &fast()).unwrap();
            assert_abs_diff_eq!(r.constant, e0(&pair.right, p2).value, epsilon = 0.02);
            assert_abs_diff_eq!(r.corrector.values[r.anchor], 0.0);
        }
    }

    #[test]
    fn identical_media_limiter_converges() {
        let pair = MediumPair::<f64>::identical();
        let fg = FingerGeometry::new(ToothProfile::standard(), 1.0, 2.0).unwrap();
        let out = flux_limiter(&pair, &fg, Orientation::LM, 0.0, &[2.0, 3.0], &fast()).unwrap();
        assert!(out.converged);
        assert_abs_diff_eq!(out.value, -1.0, epsilon = 0.02);
    }

    #[test]
    fn line_problem_max_identity_on_identical_media() {
        let pair = MediumPair::<f64>::identical();
        let (a1, a2) = EffectiveTable::standard_axes();
        let hm = EffectiveTable::tabulate(&pair.right, a1, a2).unwrap();
        let out = flux_limiter_1d(&pair, &hm, (-1.0, -1.0), 0.0, &[4.0, 8.0], &fast()).unwrap();
        assert_abs_diff_eq!(out.value, -1.0, epsilon = 0.02);
        let out = flux_limiter_1d(&pair, &hm, (-1.0, 0.0), 0.0, &[4.0, 8.0], &fast()).unwrap();
        assert_abs_diff_eq!(out.value, 0.0, epsilon = 0.02);
    }

    #[test]
    fn under_resolved_epsilon_problem_rejected() {
        let pair = MediumPair::<f64>::identical();
        let spec = InterfaceSpec::new(ToothProfile::standard(), 1.0, 0.4).unwrap();
        let s = CellSettings {
            eps_nodes_per_period: 8,
            ..fast()
        };
        let err = epsilon_flux_limiter(&pair, &spec, 0.0, &[2.0], &s).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)));
    }

    #[test]
    fn curve_interpolates_between_samples() {
        let c = FluxLimiterCurve::exact(LimiterKind::MR, vec![1.0, -1.0, 0.0], vec![3.0, 1.0, 2.0]);
        assert_abs_diff_eq!(c.at(0.5).unwrap(), 2.5);
        assert_abs_diff_eq!(c.at(-3.0).unwrap(), 1.0);
        assert_abs_diff_eq!(c.at(0.0).unwrap(), 2.0);
    }
}
