//! The acceptance suite: ten criteria, each a list of numeric checks.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use twoscale_hj::cell_problems::{
    corrector_slope_check, effective_hm, hm_oracle, lambda_rho, slope_band, CorrectorProfile, EffectiveTable,
    FluxLimiterCurve, LimiterKind, LimiterOutcome, SlopeCheckReport, ThresholdSide, Wedge,
};
use twoscale_hj::control_model::{check_assumptions, e0, Branch, Hamiltonian, MediumPair, Slice};
use twoscale_hj::effective_solver::{solve_effective, EffectiveKind, JunctionLimiters};
use twoscale_hj::geometry::{FingerGeometry, InterfaceSpec};
use twoscale_hj::hj_engines::{
    default_time_step, junction_solve_1d, Boundary, DpOperator, DpProblem, Grid, Junction, JunctionProblem,
    Piece, SolverControl, ValueField,
};
use twoscale_hj::Vec2;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{sha256_file, Check};
use crate::pipeline::{largest_increase, LimiterSample, Study, SweepRow};

/// Tolerances of the suite.
pub mod tol {
    pub const MAX_IDENTITY: f64 = 0.05;
    pub const LOWER_BOUND: f64 = 0.02;
    pub const RHO_MONOTONE: f64 = 0.01;
    pub const CONVEXITY: f64 = 1e-6;
    pub const IDENTICAL_HM: f64 = 1e-3;
    pub const ORACLE: f64 = 1e-2;
    pub const SLOPE_NODE: f64 = 0.05;
    pub const SLOPE_RATE: f64 = 0.01;
    /// Half-width of the level band over which slope thresholds are hulled.
    pub const SLOPE_LEVEL_BAND: f64 = 0.02;
    pub const IDENTICAL_LIMITER: f64 = 0.02;
    pub const IDENTICAL_DIRECT: f64 = 0.02;
    pub const IDENTICAL_FLAT: f64 = 1e-6;
    /// Allowed increase between consecutive sweep errors.
    pub const SWEEP_SLACK: f64 = 1e-9;
    pub const SUP_SLACK: f64 = 1e-9;
    pub const LIPSCHITZ_SPREAD: f64 = 0.2;
    pub const JUNCTION_PLAIN: f64 = 1e-9;
}

/// Momenta of the solver-vs-oracle comparison.
pub const ORACLE_MOMENTA: [(f64, f64); 9] = [
    (0.0, 0.0),
    (0.0, 1.0),
    (1.0, 0.0),
    (0.6, 0.8),
    (2.0, 2.0),
    (-1.0, 0.0),
    (-0.5, -0.5),
    (1.5, -1.0),
    (-2.0, 1.0),
];

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Criterion {
    fn new(id: u8, title: &str) -> Self {
        Self {
            id,
            title: title.into(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// A criterion without checks (e.g. aborted by an error) fails.
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    /// The check with the smallest margin `limit - value`.
    pub fn worst(&self) -> Option<&Check> {
        self.checks.iter().max_by(|a, b| {
            let ma = if a.value.is_nan() { f64::INFINITY } else { a.value - a.limit };
            let mb = if b.value.is_nan() { f64::INFINITY } else { b.value - b.limit };
            ma.total_cmp(&mb)
        })
    }

    fn fail(&mut self, what: &str, err: impl std::fmt::Display) {
        self.notes.push(format!("{what} failed: {err}"));
        self.checks.push(Check::at_most(format!("{what} completed"), f64::NAN, 0.0));
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        let worst = self
            .worst()
            .map(|c| {
                let op = if c.strict { "<" } else { "<=" };
                format!("worst: {} = {:.3e} {op} {:.3e}", c.label, c.value, c.limit)
            })
            .unwrap_or_else(|| "no checks".into());
        format!("criterion {:>2} {verdict}  {}  ({} checks; {worst})", self.id, self.title, self.checks.len())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceReport {
    pub criteria: Vec<Criterion>,
}

impl AcceptanceReport {
    pub fn failed(&self) -> usize {
        self.criteria.iter().filter(|c| !c.pass()).count()
    }

    pub fn criterion(&self, id: u8) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.id == id)
    }

    /// One line per criterion, followed by every check.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            let _ = writeln!(s, "{}", c.line());
        }
        for c in &self.criteria {
            let _ = writeln!(s, "\n[{}] {}", c.id, c.title);
            for k in &c.checks {
                let op = if k.strict { "<" } else { "<=" };
                let mark = if k.pass { "ok  " } else { "FAIL" };
                let _ = writeln!(s, "  {mark} {} = {:.6e} {op} {:.3e}", k.label, k.value, k.limit);
            }
            for n in &c.notes {
                let _ = writeln!(s, "  note: {n}");
            }
        }
        s
    }
}

/// Everything the criteria share, computed once.
struct Shared {
    study: Study,
    hm: EffectiveTable<f64>,
    samples: Vec<LimiterSample>,
    zero: LimiterSample,
    eps_cell: Vec<(SweepRow, Option<LimiterOutcome<f64>>)>,
}

/// Runs all criteria on `cfg`. `out` receives scratch files of the
/// determinism check.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<AcceptanceReport, CliError> {
    let mut study = Study::new(cfg)?;
    // Walk every rho schedule to its end so monotonicity sees all entries.
    study.settings.rho_tol = 0.0;
    let hm = study.hm_table(&study.base)?;
    let samples: Vec<LimiterSample> = cfg
        .p2
        .par_iter()
        .map(|&p2| study.limiter_sample(&study.base, &hm, p2))
        .collect::<Result<_, _>>()?;
    let zero = match samples.iter().find(|s| s.p2 == 0.0) {
        Some(s) => s.clone(),
        None => study.limiter_sample(&study.base, &hm, 0.0)?,
    };
    let eps_cell = study.cell_sweep(zero.max_pair());
    let shared = Shared { study, hm, samples, zero, eps_cell };

    let mut criteria = vec![
        max_identity(&shared),
        lower_bounds(&shared),
        rho_monotonicity(&shared),
        hm_structure(&shared),
        oracle_agreement(&shared),
        slope_sandwich(&shared),
    ];
    let (c7, identical_fields) = identical_media(&shared);
    criteria.push(c7);
    let (c8, sweep_fields) = convergence(&shared);
    criteria.push(c8);
    criteria.push(uniform_bounds(&shared, &identical_fields, &sweep_fields));
    criteria.push(engine_properties(&shared, out));
    Ok(AcceptanceReport { criteria })
}

fn max_identity(s: &Shared) -> Criterion {
    let mut c = Criterion::new(1, "max-identity E = max(E_LM, E_MR)");
    for x in &s.samples {
        c.checks.push(Check::at_most(
            format!("|E - max(E_LM, E_MR)| at p2 = {}", x.p2),
            (x.e.value - x.max_pair()).abs(),
            tol::MAX_IDENTITY,
        ));
        c.notes.push(format!(
            "p2 = {}: E_LM = {:.5}, E_MR = {:.5}, E = {:.5}",
            x.p2, x.lm.value, x.mr.value, x.e.value
        ));
    }
    c
}

fn lower_bounds(s: &Shared) -> Criterion {
    let mut c = Criterion::new(2, "lower-bound chain against E0");
    let pair = &s.study.base;
    for x in &s.samples {
        let (l, r, m) = (e0(&pair.left, x.p2).value, e0(&pair.right, x.p2).value, s.hm.e0(x.p2).value);
        c.checks.push(Check::at_most(format!("E0_MR - E_MR at p2 = {}", x.p2), m.max(r) - x.mr.value, tol::LOWER_BOUND));
        c.checks.push(Check::at_most(format!("E0_LM - E_LM at p2 = {}", x.p2), l.max(m) - x.lm.value, tol::LOWER_BOUND));
        c.checks.push(Check::at_most(format!("max(E0_L, E0_R) - E at p2 = {}", x.p2), l.max(r) - x.e.value, tol::LOWER_BOUND));
    }
    c
}

/// Largest drop `v_{k-1} - v_k` along a schedule (negative if increasing).
fn largest_drop(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
}

fn rho_monotonicity(s: &Shared) -> Criterion {
    let mut c = Criterion::new(3, "rho-monotonicity of lambda_rho, mu_rho, E_eps_rho");
    for x in &s.samples {
        for (what, o) in [("lambda_rho (LM)", &x.lm), ("lambda_rho (MR)", &x.mr), ("mu_rho", &x.e)] {
            c.checks.push(Check::at_most(
                format!("largest drop of {what} at p2 = {}", x.p2),
                largest_drop(&o.values).max(0.0),
                tol::RHO_MONOTONE,
            ));
            c.notes.push(format!("{what} at p2 = {}: rho {:?} -> {:?}", x.p2, o.rho_schedule, o.values));
        }
    }
    for (row, out) in &s.eps_cell {
        match out {
            Some(o) => {
                c.checks.push(Check::at_most(
                    format!("largest drop of E_eps_rho at eps = {}", row.scale),
                    largest_drop(&o.values).max(0.0),
                    tol::RHO_MONOTONE,
                ));
                c.notes.push(format!("E_eps_rho at eps = {}: rho {:?} -> {:?}", row.scale, o.rho_schedule, o.values));
            }
            None => c.fail(&format!("E_eps at eps = {}", row.scale), row.failure.as_deref().unwrap_or("")),
        }
    }
    c
}

fn hm_structure(s: &Shared) -> Criterion {
    let mut c = Criterion::new(4, "H^M convexity, coercivity, identical-media reduction");
    let hm = &s.hm;
    c.checks.push(Check::at_most("midpoint-convexity defect", hm.convexity_defect(), tol::CONVEXITY));
    match check_assumptions(&s.study.base) {
        Ok(report) => {
            let big_c = report.max_cost + 1.0;
            let delta0 = report.delta0;
            let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for j in 0..hm.p2.n {
                for i in 0..hm.p1.n {
                    let p = Vec2::new(hm.p1.node(i), hm.p2.node(j));
                    let v = hm.at(i, j);
                    lower = lower.max(delta0 * p.norm() - big_c - v);
                    upper = upper.max(v - big_c * p.norm() - big_c);
                }
            }
            c.checks.push(Check::at_most("max of delta0|p| - C - H^M(p)", lower, 0.0));
            c.checks.push(Check::at_most("max of H^M(p) - C|p| - C", upper, 0.0));
            c.notes.push(format!("C = {big_c}, delta0 = {delta0}"));
        }
        Err(e) => c.fail("assumption check", e),
    }
    let identical = MediumPair::identical();
    match s.study.hm_table(&identical) {
        Ok(t) => {
            let gap = (0..t.p2.n)
                .flat_map(|j| (0..t.p1.n).map(move |i| (i, j)))
                .map(|(i, j)| (t.at(i, j) - identical.right.eval(Vec2::new(t.p1.node(i), t.p2.node(j)))).abs())
                .fold(0.0, f64::max);
            c.checks.push(Check::at_most("identical media: max |H^M - H| at nodes", gap, tol::IDENTICAL_HM));
        }
        Err(e) => c.fail("identical H^M table", e),
    }
    c
}

fn oracle_agreement(s: &Shared) -> Criterion {
    let mut c = Criterion::new(5, "H^M solver against the branch-selection oracle");
    for (name, pair) in [("identical", MediumPair::identical()), ("asymmetric", s.study.base.clone())] {
        let results: Vec<_> = ORACLE_MOMENTA
            .par_iter()
            .map(|&(p1, p2)| {
                let p = Vec2::new(p1, p2);
                effective_hm(&pair, &s.study.profile, 1.0, p, &s.study.settings)
                    .map(|v| (p, v, hm_oracle(&pair, &s.study.profile, p)))
            })
            .collect();
        for r in results {
            match r {
                Ok((p, v, o)) => c.checks.push(Check::at_most(
                    format!("{name}: |solver - oracle| at ({}, {})", p.x, p.y),
                    (v - o).abs(),
                    tol::ORACLE,
                )),
                Err(e) => c.fail(&format!("{name} H^M solve"), e),
            }
        }
    }
    c
}

fn slope_sandwich(s: &Shared) -> Criterion {
    let mut c = Criterion::new(6, "corrector slope sandwich");
    let scale = s.study.cfg.eps.iter().copied().fold(f64::INFINITY, f64::min);
    let band = tol::SLOPE_LEVEL_BAND;
    let base = &s.study.base;
    let mirrored_pair = base.mirrored();
    let mirrored_hm = s.hm.mirrored();
    c.notes.push(format!("blow-down scale {scale}, level band {band}"));
    let record = |c: &mut Criterion, label: String, r: Result<SlopeCheckReport<f64>, twoscale_hj::Error>| match r {
        Ok(r) => {
            c.checks.push(Check::below(format!("{label}: violation rate"), r.violation_rate, tol::SLOPE_RATE));
            c.notes.push(format!(
                "{label}: {}/{} nodes beyond {}, max excess {:.4}, growth M* = ({:.3}, {:.3})",
                r.violations, r.checked, r.tol, r.max_violation, r.growth.m_left, r.growth.m_right
            ));
        }
        Err(e) => c.fail(&label, e),
    };
    for x in &s.samples {
        let p2 = x.p2;
        let finger = |hm: &EffectiveTable<f64>, right: &dyn Hamiltonian<f64>, out: &LimiterOutcome<f64>| {
            let level = out.value;
            let left = slope_band(hm, ThresholdSide::M, p2, level, band, Branch::Minus)?;
            let right = slope_band(right, ThresholdSide::R, p2, level, band, Branch::Plus)?;
            let profile = CorrectorProfile::new(out.last.corrector.clone(), Vec2::zero(), Some(scale))?;
            let wedge = Wedge { left, right, kink_left: 0.0, kink_right: 0.0 };
            Ok(corrector_slope_check(&profile, &wedge, tol::SLOPE_NODE))
        };
        record(&mut c, format!("finger MR corrector at p2 = {p2}"), finger(&s.hm, &base.right, &x.mr));
        record(&mut c, format!("finger LM corrector at p2 = {p2}"), finger(&mirrored_hm, &mirrored_pair.right, &x.lm));
        let line = (|| {
            let level = x.e.value;
            let left = slope_band(&base.left, ThresholdSide::L, p2, level, band, Branch::Minus)?;
            let right = slope_band(&base.right, ThresholdSide::R, p2, level, band, Branch::Plus)?;
            let profile = CorrectorProfile::new(x.e.last.corrector.clone(), Vec2::zero(), Some(scale))?;
            let wedge = Wedge { left, right, kink_left: -1.0, kink_right: 1.0 };
            Ok(corrector_slope_check(&profile, &wedge, tol::SLOPE_NODE))
        })();
        record(&mut c, format!("line corrector at p2 = {p2}"), line);
    }
    c
}

fn sup_distance(field: &ValueField<f64>, value: f64) -> f64 {
    field.values.iter().map(|v| (v - value).abs()).fold(0.0, f64::max)
}

fn identical_media(s: &Shared) -> (Criterion, Vec<(String, ValueField<f64>)>) {
    let mut c = Criterion::new(7, "identical-media null tests");
    let mut fields = Vec::new();
    let pair = MediumPair::identical();
    let lambda = s.study.cfg.lambda;
    let results: Vec<_> = s
        .study
        .cfg
        .p2
        .par_iter()
        .map(|&p2| s.study.finger_limiters(&pair, p2).map(|(_, mr)| (p2, mr.value)))
        .collect();
    for r in results {
        match r {
            Ok((p2, v)) => {
                let e0v = e0(&pair.right, p2).value;
                c.checks.push(Check::at_most(format!("|E_MR - E0| at p2 = {p2}"), (v - e0v).abs(), tol::IDENTICAL_LIMITER));
            }
            Err(e) => c.fail("identical finger limiter", e),
        }
    }
    let none = JunctionLimiters { lm: None, mr: None, limit: None };
    let direct = s.study.effective_spec(EffectiveKind::Direct { eta: 0.2, eps: 0.2 }, &pair, None, none);
    match solve_effective(&direct) {
        Ok(f) => {
            c.checks.push(Check::at_most("Direct(0.2, 0.2): sup |u - 1/lambda|", sup_distance(&f, 1.0 / lambda), tol::IDENTICAL_DIRECT));
            fields.push(("identical direct".to_string(), f));
        }
        Err(e) => c.fail("identical direct solve", e),
    }
    let limit = FluxLimiterCurve::exact(LimiterKind::Limit, vec![0.0], vec![e0(&pair.right, 0.0).value]);
    let flat = s.study.effective_spec(
        EffectiveKind::FlatLimit,
        &pair,
        None,
        JunctionLimiters { lm: None, mr: None, limit: Some(&limit) },
    );
    match solve_effective(&flat) {
        Ok(f) => {
            c.checks.push(Check::at_most("FlatLimit with E0: sup |u - 1/lambda|", sup_distance(&f, 1.0 / lambda), tol::IDENTICAL_FLAT));
            fields.push(("identical flat".to_string(), f));
        }
        Err(e) => c.fail("identical flat solve", e),
    }
    (c, fields)
}

fn convergence(s: &Shared) -> (Criterion, Vec<(String, ValueField<f64>)>) {
    let mut c = Criterion::new(8, "convergence sweeps toward the flat limit");
    let lm = FluxLimiterCurve::from_outcomes(LimiterKind::LM, vec![0.0], std::slice::from_ref(&s.zero.lm));
    let mr = FluxLimiterCurve::from_outcomes(LimiterKind::MR, vec![0.0], std::slice::from_ref(&s.zero.mr));
    let sweeps = match s.study.sweeps(&s.hm, &lm, &mr) {
        Ok(sw) => sw,
        Err(e) => {
            c.fail("sweeps", e);
            return (c, Vec::new());
        }
    };
    let cell: Vec<SweepRow> = s.eps_cell.iter().map(|r| r.0.clone()).collect();
    for (what, rows) in [
        ("EtaStrip(eta) vs FlatLimit", &sweeps.eta),
        ("Direct(eps, eps) vs FlatLimit", &sweeps.eps),
        ("E_eps(0) vs max(E_LM, E_MR)(0)", &cell),
    ] {
        for r in rows.iter() {
            match &r.failure {
                Some(f) => c.fail(&format!("{what} at {}", r.scale), f),
                None => c.notes.push(format!("{what} at {}: max error {:.6e}, mean {:.6e}", r.scale, r.max_error, r.mean_error)),
            }
        }
        if rows.len() >= 2 {
            c.checks.push(Check::at_most(format!("{what}: largest error increase"), largest_increase(rows), tol::SWEEP_SLACK));
        }
    }
    for r in &sweeps.eta_fixed {
        c.notes.push(format!("Direct(eta0, {}) vs EtaStrip(eta0): max error {:.6e} (report only)", r.scale, r.max_error));
    }
    let mut fields = vec![("flat".to_string(), sweeps.flat.clone())];
    fields.extend(sweeps.fields);
    (c, fields)
}

fn uniform_bounds(
    s: &Shared,
    identical: &[(String, ValueField<f64>)],
    sweep: &[(String, ValueField<f64>)],
) -> Criterion {
    let mut c = Criterion::new(9, "uniform bounds and Lipschitz stability");
    let bound = (s.study.base.max_cost() + s.study.pair.far_field_bound()) / s.study.cfg.lambda;
    for (name, f) in identical.iter().chain(sweep) {
        c.checks.push(Check::at_most(format!("{name}: sup|V| - {bound}"), f.sup_abs() - bound, tol::SUP_SLACK));
    }
    let lips: Vec<f64> = sweep
        .iter()
        .filter(|(n, _)| n.starts_with("direct_"))
        .map(|(_, f)| f.lipschitz())
        .collect();
    if lips.len() >= 2 {
        let lo = lips.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = lips.iter().copied().fold(0.0, f64::max);
        c.checks.push(Check::below("Lipschitz spread (max - min) / min over the eps sweep", (hi - lo) / lo, tol::LIPSCHITZ_SPREAD));
        c.notes.push(format!("Lipschitz constants {lips:?}"));
    } else {
        c.fail("Lipschitz sweep", "fewer than two direct fields");
    }
    c
}

fn engine_properties(s: &Shared, out: &Path) -> Criterion {
    let mut c = Criterion::new(10, "engine properties: monotonicity, junction reduction, determinism");
    match dp_monotonicity(s) {
        Ok(v) => c.checks.push(Check::at_most("DP monotonicity: max (T u - T v)^+ over 100 pairs u <= v", v, 0.0)),
        Err(e) => c.fail("DP monotonicity", e),
    }
    match junction_reduction(s) {
        Ok(v) => c.checks.push(Check::at_most("junction with limiter -inf vs plain solve", v, tol::JUNCTION_PLAIN)),
        Err(e) => c.fail("junction reduction", e),
    }
    match determinism(s, &out.join("determinism")) {
        Ok(n) => c.checks.push(Check::at_most("artifacts whose hash differs between reruns", n as f64, 0.0)),
        Err(e) => c.fail("determinism", e),
    }
    c
}

fn dp_monotonicity(s: &Shared) -> Result<f64, CliError> {
    let spec = InterfaceSpec::new(s.study.profile.clone(), 0.4, 0.4)?;
    let grid = Grid::strip(-2.0, 2.0, 81, 0.005, spec.period(), 16)?;
    let dt = default_time_step(&grid, &s.study.pair);
    let problem = DpProblem::new(&s.study.pair, &spec, 1.0, dt).with_tangential_momentum(0.5);
    let op = DpOperator::build(&problem, &grid)?;
    let beta = 1.0 - dt;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut tu, mut tv) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let u: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v: Vec<f64> = u.iter().map(|x| x + rng.gen_range(0.0..1.0)).collect();
        op.apply(&u, beta, &mut tu);
        op.apply(&v, beta, &mut tv);
        worst = tu.iter().zip(&tv).map(|(a, b)| a - b).fold(worst, f64::max);
    }
    Ok(worst)
}

fn junction_reduction(s: &Shared) -> Result<f64, CliError> {
    let pair = &s.study.pair;
    let h = Slice::new(&pair.left as &dyn Hamiltonian<f64>, 0.3);
    let grid = Grid::line(-3.0, 3.0, 241)?;
    let source: Vec<f64> = (0..grid.len()).map(|k| pair.far_field(grid.coord(k).x)).collect();
    let control = SolverControl { tol: 1e-12, max_iter: 10_000_000 };
    let plain = JunctionProblem {
        pieces: vec![Piece { lo: -3.0, hi: 3.0, h: &h }],
        junctions: Vec::new(),
        lambda: 1.0,
        grid: grid.clone(),
        boundary: Boundary::Outflow,
        source: source.clone(),
        control,
    };
    let junction = JunctionProblem {
        pieces: vec![Piece { lo: -3.0, hi: 0.0, h: &h }, Piece { lo: 0.0, hi: 3.0, h: &h }],
        junctions: vec![Junction { position: 0.0, limiter: f64::NEG_INFINITY, left: &h, right: &h }],
        lambda: 1.0,
        grid,
        boundary: Boundary::Outflow,
        source,
        control,
    };
    let (a, b) = (junction_solve_1d(&plain)?, junction_solve_1d(&junction)?);
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Writes the same small pipeline twice and counts files whose hashes differ.
fn determinism(s: &Shared, dir: &Path) -> Result<usize, CliError> {
    let fg = FingerGeometry::new(s.study.profile.clone(), 1.0, 2.0)?;
    let lm = FluxLimiterCurve::exact(LimiterKind::LM, vec![0.0], vec![s.zero.lm.value]);
    let mr = FluxLimiterCurve::exact(LimiterKind::MR, vec![0.0], vec![s.zero.mr.value]);
    let lim = JunctionLimiters { lm: Some(&lm), mr: Some(&mr), limit: None };
    let mut hashes = Vec::new();
    for run in 0..2 {
        let d = dir.join(format!("run{run}"));
        std::fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        let cell = lambda_rho(&s.study.base, &fg, 0.5, &s.study.settings)?;
        cell.corrector.write_csv(&d.join("finger_corrector.csv"))?;
        let strip = s.study.effective_spec(EffectiveKind::EtaStrip { eta: 0.4 }, &s.study.pair, Some(&s.hm), lim);
        solve_effective(&strip)?.write_csv(&d.join("eta_strip.csv"))?;
        let direct = s.study.effective_spec(EffectiveKind::Direct { eta: 0.4, eps: 0.4 }, &s.study.pair, None, lim);
        solve_effective(&direct)?.write_csv(&d.join("direct.csv"))?;
        let mut h = Vec::new();
        for f in ["finger_corrector.csv", "eta_strip.csv", "direct.csv"] {
            h.push(sha256_file(&d.join(f))?.0);
        }
        hashes.push(h);
    }
    Ok(hashes[0].iter().zip(&hashes[1]).filter(|(a, b)| a != b).count())
}
