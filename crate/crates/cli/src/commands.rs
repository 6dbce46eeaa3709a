//! Subcommand implementations. Each writes its artifacts and `run.json`
//! under the output directory.

use std::path::Path;

use rayon::prelude::*;
use twoscale_hj::cell_problems::{FluxLimiterCurve, LimiterKind};
use twoscale_hj::effective_solver::{solve_effective, EffectiveKind, JunctionLimiters};

use crate::acceptance;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{Check, Recorder, RunManifest};
use crate::pipeline::{decreasing, e0_csv, hamiltonian_csv, limiter_csv, limiter_curves, sweep_csv, Study};

/// Macroscopic problem selected by `solve --kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveKind {
    Direct,
    Eta,
    Flat,
}

impl std::str::FromStr for SolveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Self::Direct),
            "eta" => Ok(Self::Eta),
            "flat" => Ok(Self::Flat),
            _ => Err(format!("unknown kind {s:?} (direct | eta | flat)")),
        }
    }
}

/// Writes `hamiltonians.csv` (`H^L`, `H^R`, `H^M` and its oracle on the
/// momentum grid) and `e0.csv`.
pub fn hamiltonian_table(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let study = Study::new(cfg)?;
    let mut rec = Recorder::new("hamiltonian-table", cfg, out)?;
    let hm = rec.time("hm_table", || study.hm_table(&study.base))?;
    rec.write_text("hamiltonians.csv", &hamiltonian_csv(&study.base, &hm))?;
    rec.write_text("e0.csv", &e0_csv(&study.base, &hm))?;
    rec.note(format!("H^M convexity defect {:e}", hm.convexity_defect()));
    if let Some(gap) = hm.oracle_gap() {
        rec.note(format!("H^M max |solver - oracle| {gap:e}"));
    }
    rec.finish()
}

/// Writes the limiter table with its check column, one curve CSV per kind
/// and one per `eps`.
pub fn flux_limiters(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let study = Study::new(cfg)?;
    let mut rec = Recorder::new("flux-limiters", cfg, out)?;
    let hm = rec.time("hm_table", || study.hm_table(&study.base))?;
    let samples = rec.time("limiters", || {
        cfg.p2
            .par_iter()
            .map(|&p2| study.limiter_sample(&study.base, &hm, p2))
            .collect::<Result<Vec<_>, _>>()
    })?;
    rec.write_text("limiters.csv", &limiter_csv(&study.base, &hm, &samples))?;
    for (name, curve) in limiter_curves(&study.base, &hm, &samples) {
        let file = format!("limiter_{name}.csv");
        curve.write_csv(&rec.path(&file))?;
        rec.artifact(&file)?;
    }
    for s in &samples {
        let check = s.max_pair() - s.e.value;
        rec.check(Check::at_most(format!("|max(E_LM, E_MR) - E| at p2 = {}", s.p2), check.abs(), 0.05));
        for (what, o) in [("E_LM", &s.lm), ("E_MR", &s.mr), ("E", &s.e)] {
            if !o.converged {
                rec.note(format!("{what} at p2 = {}: rho schedule not converged (increment {:e})", s.p2, o.increment));
            }
        }
    }
    let eps_runs: Vec<(f64, Vec<_>)> = rec.time("eps_limiters", || {
        cfg.eps
            .par_iter()
            .map(|&eps| (eps, cfg.p2.par_iter().map(|&p2| study.epsilon_limiter(eps, p2)).collect()))
            .collect()
    });
    for (eps, results) in eps_runs {
        let mut ok = Vec::new();
        let mut p2s = Vec::new();
        for (&p2, r) in cfg.p2.iter().zip(results) {
            match r {
                Ok(o) => {
                    if !o.converged {
                        rec.note(format!("E_eps (eps = {eps}) at p2 = {p2}: rho schedule not converged"));
                    }
                    ok.push(o);
                    p2s.push(p2);
                }
                Err(e) => rec.note(format!("E_eps (eps = {eps}) at p2 = {p2} failed: {e}")),
            }
        }
        let curve = FluxLimiterCurve::from_outcomes(LimiterKind::Eps(eps), p2s, &ok);
        let file = format!("limiter_eps_{eps}.csv");
        curve.write_csv(&rec.path(&file))?;
        rec.artifact(&file)?;
    }
    rec.finish()
}

/// Solves one macroscopic problem and writes its field.
pub fn solve(cfg: &RunConfig, out: &Path, kind: SolveKind) -> Result<RunManifest, CliError> {
    let study = Study::new(cfg)?;
    let mut rec = Recorder::new("solve", cfg, out)?;
    let (eta, eps) = (cfg.eta[0], cfg.eps[0]);
    let field = match kind {
        SolveKind::Direct => {
            let spec = study.effective_spec(
                EffectiveKind::Direct { eta, eps },
                &study.pair,
                None,
                JunctionLimiters { lm: None, mr: None, limit: None },
            );
            rec.time("solve", || solve_effective(&spec))?
        }
        SolveKind::Eta | SolveKind::Flat => {
            let (lm, mr) = rec.time("limiters", || study.finger_limiters(&study.base, 0.0))?;
            let lm = FluxLimiterCurve::from_outcomes(LimiterKind::LM, vec![0.0], &[lm]);
            let mr = FluxLimiterCurve::from_outcomes(LimiterKind::MR, vec![0.0], &[mr]);
            rec.note(format!("limiters at p2 = 0: E_LM = {}, E_MR = {}", lm.values[0], mr.values[0]));
            let lim = JunctionLimiters { lm: Some(&lm), mr: Some(&mr), limit: None };
            if kind == SolveKind::Eta {
                let hm = rec.time("hm_table", || study.hm_table(&study.base))?;
                let spec = study.effective_spec(EffectiveKind::EtaStrip { eta }, &study.pair, Some(&hm), lim);
                rec.time("solve", || solve_effective(&spec))?
            } else {
                let spec = study.effective_spec(EffectiveKind::FlatLimit, &study.pair, None, lim);
                rec.time("solve", || solve_effective(&spec))?
            }
        }
    };
    let name = match kind {
        SolveKind::Direct => "direct",
        SolveKind::Eta => "eta",
        SolveKind::Flat => "flat",
    };
    let csv = format!("field_{name}.csv");
    field.write_csv(&rec.path(&csv))?;
    rec.artifact(&csv)?;
    rec.note(format!(
        "{name}: sup|V| = {}, Lipschitz {}, iterations {}, residual {:e}",
        field.sup_abs(),
        field.lipschitz(),
        field.meta.iterations,
        field.meta.residual
    ));
    rec.finish()
}

/// Error-vs-scale tables against the flat effective problem, with verdicts.
pub fn converge(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let study = Study::new(cfg)?;
    let mut rec = Recorder::new("converge", cfg, out)?;
    let hm = rec.time("hm_table", || study.hm_table(&study.base))?;
    let (lm, mr) = rec.time("limiters", || study.finger_limiters(&study.base, 0.0))?;
    let lm = FluxLimiterCurve::from_outcomes(LimiterKind::LM, vec![0.0], &[lm]);
    let mr = FluxLimiterCurve::from_outcomes(LimiterKind::MR, vec![0.0], &[mr]);
    let sweeps = rec.time("sweeps", || study.sweeps(&hm, &lm, &mr))?;
    let target = lm.values[0].max(mr.values[0]);
    let cell: Vec<_> = rec.time("cell_sweep", || study.cell_sweep(target)).into_iter().map(|r| r.0).collect();
    let all: Vec<_> = [&sweeps.eta, &sweeps.eps, &sweeps.eta_fixed, &cell]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
    rec.write_text("converge.csv", &sweep_csv(&all))?;
    sweeps.flat.write_csv(&rec.path("field_flat.csv"))?;
    rec.artifact("field_flat.csv")?;
    for row in all.iter().filter(|r| r.failure.is_some()) {
        rec.note(format!("{} at scale {} failed: {}", row.series, row.scale, row.failure.as_deref().unwrap_or("")));
    }
    let mut verdicts = String::from("series,verdict\n");
    for (name, rows) in [
        ("eta_strip", &sweeps.eta),
        ("direct", &sweeps.eps),
        ("direct_fixed_eta", &sweeps.eta_fixed),
        ("cell_eps", &cell),
    ] {
        let v = match decreasing(rows, 0.0) {
            Some(true) => "decreasing",
            Some(false) => "not decreasing",
            None => "no verdict",
        };
        verdicts.push_str(&format!("{name},{v}\n"));
        rec.note(format!("{name}: {v}"));
    }
    rec.write_text("verdict.csv", &verdicts)?;
    rec.finish()
}

/// Runs the acceptance suite; fails when any check fails.
pub fn acceptance(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let mut rec = Recorder::new("acceptance", cfg, out)?;
    let report = rec.time("acceptance", || acceptance::run(cfg, out))?;
    rec.write_text("acceptance.txt", &report.summary())?;
    rec.write_text("acceptance.json", &serde_json::to_string_pretty(&report)?)?;
    for c in &report.criteria {
        for check in &c.checks {
            let mut check = check.clone();
            check.label = format!("[{}] {}", c.id, check.label);
            rec.check(check);
        }
        rec.manifest.diagnostics.extend(c.notes.iter().map(|n| format!("[{}] {n}", c.id)));
    }
    let failed = report.failed();
    let manifest = rec.finish()?;
    if failed > 0 {
        return Err(CliError::AcceptanceFailed { failed });
    }
    Ok(manifest)
}
