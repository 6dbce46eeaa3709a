//! Shared computations of the subcommands: the `H^M` table, the flux
//! limiters per `p2`, and the macroscopic solves.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use twoscale_hj::cell_problems::{
    epsilon_flux_limiter, flux_limiter, flux_limiter_1d, CellSettings, EffectiveTable, FluxLimiterCurve,
    LimiterKind, LimiterOutcome, Orientation, TableAxis,
};
use twoscale_hj::control_model::{e0, Hamiltonian, MediumPair};
use twoscale_hj::effective_solver::{
    compare_fields, solve_effective, EffectiveKind, EffectiveProblemSpec, JunctionLimiters,
};
use twoscale_hj::geometry::{FingerGeometry, InterfaceSpec, ToothProfile};
use twoscale_hj::hj_engines::ValueField;
use twoscale_hj::Vec2;

use crate::config::RunConfig;
use crate::error::CliError;

/// Resolved inputs of a run.
pub struct Study {
    pub cfg: RunConfig,
    /// Pair without far-field cost, used by all cell problems.
    pub base: MediumPair<f64>,
    /// Pair with the far-field cost, used by macroscopic solves.
    pub pair: MediumPair<f64>,
    pub profile: ToothProfile<f64>,
    pub settings: CellSettings<f64>,
}

/// Limiters at one tangential momentum.
#[derive(Debug, Clone)]
pub struct LimiterSample {
    pub p2: f64,
    pub lm: LimiterOutcome<f64>,
    pub mr: LimiterOutcome<f64>,
    pub e: LimiterOutcome<f64>,
}

impl LimiterSample {
    pub fn max_pair(&self) -> f64 {
        self.lm.value.max(self.mr.value)
    }
}

impl Study {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        Ok(Self {
            base: cfg.base_pair()?,
            pair: cfg.pair()?,
            profile: cfg.profile()?,
            settings: cfg.cell_settings(),
            cfg: cfg.clone(),
        })
    }

    pub fn axes(&self) -> Result<(TableAxis<f64>, TableAxis<f64>), CliError> {
        let r = self.cfg.table_range;
        let axis = TableAxis::span(-r, r, self.cfg.table_nodes)?;
        Ok((axis, axis))
    }

    /// `H^M` of `pair` tabulated on the configured momentum grid.
    pub fn hm_table(&self, pair: &MediumPair<f64>) -> Result<EffectiveTable<f64>, CliError> {
        let (a1, a2) = self.axes()?;
        Ok(EffectiveTable::build(pair, &self.profile, 1.0, a1, a2, &self.settings)?)
    }

    fn finger(&self) -> Result<FingerGeometry<f64>, CliError> {
        Ok(FingerGeometry::new(self.profile.clone(), 1.0, self.cfg.finger_rho[0])?)
    }

    /// `E^{L,M}(p2)` and `E^{M,R}(p2)` of `pair`.
    pub fn finger_limiters(
        &self,
        pair: &MediumPair<f64>,
        p2: f64,
    ) -> Result<(LimiterOutcome<f64>, LimiterOutcome<f64>), CliError> {
        let fg = self.finger()?;
        let rho = &self.cfg.finger_rho;
        let (lm, mr) = rayon::join(
            || flux_limiter(pair, &fg, Orientation::LM, p2, rho, &self.settings),
            || flux_limiter(pair, &fg, Orientation::MR, p2, rho, &self.settings),
        );
        Ok((lm?, mr?))
    }

    /// Finger limiters and the one-dimensional `E` at one `p2`.
    pub fn limiter_sample(
        &self,
        pair: &MediumPair<f64>,
        hm: &EffectiveTable<f64>,
        p2: f64,
    ) -> Result<LimiterSample, CliError> {
        let (lm, mr) = self.finger_limiters(pair, p2)?;
        let e = flux_limiter_1d(pair, hm, (lm.value, mr.value), p2, &self.cfg.line_rho, &self.settings)?;
        Ok(LimiterSample { p2, lm, mr, e })
    }

    /// `E_eps(p2)` of the oscillatory cell problem.
    pub fn epsilon_limiter(&self, eps: f64, p2: f64) -> Result<LimiterOutcome<f64>, CliError> {
        let spec = InterfaceSpec::new(self.profile.clone(), 1.0, eps)?;
        Ok(epsilon_flux_limiter(&self.base, &spec, p2, &self.cfg.eps_rho, &self.settings)?)
    }

    pub fn sample_points(&self) -> Vec<Vec2<f64>> {
        self.cfg.samples.iter().map(|&x| Vec2::new(x, 0.0)).collect()
    }

    /// A macroscopic problem on `pair` with the configured window and steps.
    pub fn effective_spec<'a>(
        &self,
        kind: EffectiveKind<f64>,
        pair: &'a MediumPair<f64>,
        hm: Option<&'a EffectiveTable<f64>>,
        limiters: JunctionLimiters<'a, f64>,
    ) -> EffectiveProblemSpec<'a, f64> {
        let mut spec = EffectiveProblemSpec::new(kind, pair, self.cfg.lambda);
        spec.profile = self.profile.clone();
        spec.hm = hm;
        spec.limiters = limiters;
        spec.window = self.cfg.window;
        spec.h = self.cfg.effective_h;
        spec.cells_per_period = self.cfg.cells_per_period;
        spec.control = self.cfg.solve_control();
        spec
    }
}

/// `H^L`, `H^R` and `H^M` (with its oracle) on the table nodes.
pub fn hamiltonian_csv(pair: &MediumPair<f64>, hm: &EffectiveTable<f64>) -> String {
    let mut s = String::from("p1,p2,h_left,h_right,h_m,h_m_oracle\n");
    for j in 0..hm.p2.n {
        for i in 0..hm.p1.n {
            let p = Vec2::new(hm.p1.node(i), hm.p2.node(j));
            let k = i + hm.p1.n * j;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.x,
                p.y,
                pair.left.eval(p),
                pair.right.eval(p),
                hm.values[k],
                hm.oracle.get(k).copied().unwrap_or(f64::NAN)
            );
        }
    }
    s
}

/// `E0` curves of the three Hamiltonians and the pairwise maxima.
pub fn e0_csv(pair: &MediumPair<f64>, hm: &EffectiveTable<f64>) -> String {
    let mut s = String::from("p2,e0_left,e0_right,e0_m,e0_lm,e0_mr,e0_lr\n");
    for j in 0..hm.p2.n {
        let p2 = hm.p2.node(j);
        let (l, r, m) = (e0(&pair.left, p2).value, e0(&pair.right, p2).value, hm.e0(p2).value);
        let _ = writeln!(s, "{p2},{l},{r},{m},{},{},{}", l.max(m), m.max(r), l.max(r));
    }
    s
}

/// Per-`p2` limiter table with the check column `max(E^{L,M}, E^{M,R}) - E`.
pub fn limiter_csv(pair: &MediumPair<f64>, hm: &EffectiveTable<f64>, samples: &[LimiterSample]) -> String {
    let mut s = String::from(
        "p2,e0_left,e0_right,e0_m,e_lm,e_mr,e,check,lm_converged,mr_converged,e_converged\n",
    );
    for x in samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            x.p2,
            e0(&pair.left, x.p2).value,
            e0(&pair.right, x.p2).value,
            hm.e0(x.p2).value,
            x.lm.value,
            x.mr.value,
            x.e.value,
            x.max_pair() - x.e.value,
            x.lm.converged,
            x.mr.converged,
            x.e.converged
        );
    }
    s
}

/// Curves of every limiter kind, keyed by file-friendly name.
pub fn limiter_curves(
    pair: &MediumPair<f64>,
    hm: &EffectiveTable<f64>,
    samples: &[LimiterSample],
) -> Vec<(String, FluxLimiterCurve<f64>)> {
    let p2: Vec<f64> = samples.iter().map(|s| s.p2).collect();
    let exact = |kind, f: &dyn Fn(f64) -> f64| FluxLimiterCurve::exact(kind, p2.clone(), p2.iter().map(|&q| f(q)).collect());
    let outcomes = |f: fn(&LimiterSample) -> &LimiterOutcome<f64>| samples.iter().map(|s| f(s).clone()).collect::<Vec<_>>();
    vec![
        ("e0_left".into(), exact(LimiterKind::E0Left, &|q| e0(&pair.left, q).value)),
        ("e0_right".into(), exact(LimiterKind::E0Right, &|q| e0(&pair.right, q).value)),
        ("e0_strip".into(), exact(LimiterKind::E0Strip, &|q| hm.e0(q).value)),
        ("lm".into(), FluxLimiterCurve::from_outcomes(LimiterKind::LM, p2.clone(), &outcomes(|s| &s.lm))),
        ("mr".into(), FluxLimiterCurve::from_outcomes(LimiterKind::MR, p2.clone(), &outcomes(|s| &s.mr))),
        ("limit".into(), FluxLimiterCurve::from_outcomes(LimiterKind::Limit, p2.clone(), &outcomes(|s| &s.e))),
    ]
}

/// One row of a convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub series: String,
    pub scale: f64,
    pub max_error: f64,
    pub mean_error: f64,
    pub sup_abs: f64,
    pub lipschitz: f64,
    /// Solver failure, if any (the row's numbers are then NaN).
    pub failure: Option<String>,
}

impl SweepRow {
    fn failed(series: &str, scale: f64, err: impl ToString) -> Self {
        Self {
            series: series.into(),
            scale,
            max_error: f64::NAN,
            mean_error: f64::NAN,
            sup_abs: f64::NAN,
            lipschitz: f64::NAN,
            failure: Some(err.to_string()),
        }
    }
}

/// Verdict of one sweep: `None` with fewer than two successful rows.
pub fn decreasing(rows: &[SweepRow], slack: f64) -> Option<bool> {
    let errs: Vec<f64> = rows.iter().filter(|r| r.failure.is_none()).map(|r| r.max_error).collect();
    (errs.len() >= 2).then(|| errs.windows(2).all(|w| w[1] <= w[0] + slack))
}

/// Largest increase `e_{k+1} - e_k` along a sweep (negative when strictly
/// decreasing).
pub fn largest_increase(rows: &[SweepRow]) -> f64 {
    rows.windows(2)
        .map(|w| w[1].max_error - w[0].max_error)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("series,scale,max_error,mean_error,sup_abs,lipschitz,failure\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.series,
            r.scale,
            r.max_error,
            r.mean_error,
            r.sup_abs,
            r.lipschitz,
            r.failure.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}

/// Field and sampled error against `reference` for one scale.
pub fn sweep_row(
    series: &str,
    scale: f64,
    field: Result<ValueField<f64>, CliError>,
    reference: &ValueField<f64>,
    points: &[Vec2<f64>],
) -> (SweepRow, Option<ValueField<f64>>) {
    let field = match field {
        Ok(f) => f,
        Err(e) => return (SweepRow::failed(series, scale, e), None),
    };
    match compare_fields(&field, reference, points) {
        Ok(rep) => (
            SweepRow {
                series: series.into(),
                scale,
                max_error: rep.max,
                mean_error: rep.mean,
                sup_abs: field.sup_abs(),
                lipschitz: field.lipschitz(),
                failure: None,
            },
            Some(field),
        ),
        Err(e) => (SweepRow::failed(series, scale, e), Some(field)),
    }
}

/// Convergence sweeps against the flat effective problem.
pub struct Sweeps {
    pub flat: ValueField<f64>,
    pub eta: Vec<SweepRow>,
    pub eps: Vec<SweepRow>,
    /// `Direct(eta0, eps)` against `EtaStrip(eta0)`, `eta0` the first entry.
    pub eta_fixed: Vec<SweepRow>,
    pub fields: Vec<(String, ValueField<f64>)>,
}

impl Study {
    /// Runs every sweep; `lm`, `mr` are the limiters at `p2 = 0`.
    pub fn sweeps(
        &self,
        hm: &EffectiveTable<f64>,
        lm: &FluxLimiterCurve<f64>,
        mr: &FluxLimiterCurve<f64>,
    ) -> Result<Sweeps, CliError> {
        let lim = JunctionLimiters { lm: Some(lm), mr: Some(mr), limit: None };
        let points = self.sample_points();
        let flat = solve_effective(&self.effective_spec(EffectiveKind::FlatLimit, &self.pair, None, lim))?;
        let strip = |eta: f64| -> Result<ValueField<f64>, CliError> {
            let spec = self.effective_spec(EffectiveKind::EtaStrip { eta }, &self.pair, Some(hm), lim);
            Ok(solve_effective(&spec)?)
        };
        let direct = |eta: f64, eps: f64| -> Result<ValueField<f64>, CliError> {
            let spec = self.effective_spec(EffectiveKind::Direct { eta, eps }, &self.pair, None, lim);
            Ok(solve_effective(&spec)?)
        };
        let eta: Vec<_> = self
            .cfg
            .eta
            .par_iter()
            .map(|&e| sweep_row("eta_strip", e, strip(e), &flat, &points))
            .collect();
        let eps: Vec<_> = self
            .cfg
            .eps
            .par_iter()
            .map(|&e| sweep_row("direct", e, direct(e, e), &flat, &points))
            .collect();
        let eta0 = self.cfg.eta[0];
        let eta_fixed = match strip(eta0) {
            Ok(reference) => self
                .cfg
                .eps
                .par_iter()
                .map(|&e| sweep_row("direct_fixed_eta", e, direct(eta0, e), &reference, &points).0)
                .collect(),
            Err(e) => vec![SweepRow::failed("direct_fixed_eta", eta0, e)],
        };
        let mut fields = Vec::new();
        let mut split = |rows: Vec<(SweepRow, Option<ValueField<f64>>)>| {
            rows.into_iter()
                .map(|(row, f)| {
                    if let Some(f) = f {
                        fields.push((format!("{}_{}", row.series, row.scale), f));
                    }
                    row
                })
                .collect::<Vec<_>>()
        };
        let eta = split(eta);
        let eps = split(eps);
        Ok(Sweeps { flat, eta, eps, eta_fixed, fields })
    }

    /// `|E_eps(0) - target|` per configured `eps`, with the outcomes.
    pub fn cell_sweep(&self, target: f64) -> Vec<(SweepRow, Option<LimiterOutcome<f64>>)> {
        self.cfg
            .eps
            .par_iter()
            .map(|&e| match self.epsilon_limiter(e, 0.0) {
                Ok(out) => {
                    let err = (out.value - target).abs();
                    let row = SweepRow {
                        series: "cell_eps".into(),
                        scale: e,
                        max_error: err,
                        mean_error: err,
                        sup_abs: f64::NAN,
                        lipschitz: f64::NAN,
                        failure: None,
                    };
                    (row, Some(out))
                }
                Err(err) => (SweepRow::failed("cell_eps", e, err), None),
            })
            .collect()
    }
}
