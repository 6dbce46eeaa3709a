//! Run configuration: a flat `key = value` file with `[section]` headers and
//! comma-separated lists.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twoscale_hj::cell_problems::CellSettings;
use twoscale_hj::control_model::{check_assumptions, FarFieldCost, MediumPair};
use twoscale_hj::geometry::ToothProfile;
use twoscale_hj::hj_engines::{ErgodicMethod, SolverControl};

use crate::error::CliError;

/// Where the two control sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MediumSource {
    Preset(String),
    File(PathBuf),
    Inline { left: Vec<[f64; 3]>, right: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileSource {
    Sine { a: f64, b: f64, h: f64 },
    Sampled { a: f64, b: f64, samples: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub medium: MediumSource,
    /// Cap of the saturating far-field cost `min((|x1| - 1)^+, cap)`.
    pub far_field_cap: Option<f64>,
    pub profile: ProfileSource,
    pub eta: Vec<f64>,
    pub eps: Vec<f64>,
    pub p2: Vec<f64>,
    pub finger_rho: Vec<f64>,
    pub line_rho: Vec<f64>,
    pub eps_rho: Vec<f64>,
    pub discounts: Vec<f64>,
    pub lambda: f64,
    pub window: (f64, f64),
    pub line_h: f64,
    pub effective_h: f64,
    pub finger_h1: f64,
    pub finger_nodes: usize,
    pub column_nodes: usize,
    pub eps_nodes: usize,
    pub cells_per_period: usize,
    pub ergodic_tol: f64,
    pub rho_tol: f64,
    pub solve_tol: f64,
    pub table_range: f64,
    pub table_nodes: usize,
    /// Sample abscissae for field comparisons.
    pub samples: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            medium: MediumSource::Preset("asymmetric".into()),
            far_field_cap: Some(2.0),
            profile: ProfileSource::Sine {
                a: 0.25,
                b: 0.75,
                h: 0.25,
            },
            eta: vec![0.4, 0.2, 0.1],
            eps: vec![0.4, 0.2, 0.1],
            p2: vec![-1.0, 0.0, 1.0],
            finger_rho: vec![2.0, 3.0, 4.0, 6.0],
            line_rho: vec![4.0, 8.0, 16.0],
            eps_rho: vec![2.0, 3.0, 4.0],
            discounts: vec![0.02, 0.01, 0.005],
            lambda: 1.0,
            window: (-6.0, 6.0),
            line_h: 1.0 / 32.0,
            effective_h: 1.0 / 80.0,
            finger_h1: 1.0 / 16.0,
            finger_nodes: 32,
            column_nodes: 64,
            eps_nodes: 16,
            cells_per_period: 8,
            ergodic_tol: 1e-4,
            rho_tol: 5e-3,
            solve_tol: 1e-8,
            table_range: 2.5,
            table_nodes: 21,
            samples: (-8..=8).map(|k| f64::from(k) * 0.5).collect(),
            out_dir: PathBuf::from("out"),
        }
    }
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str) -> Result<Sections, CliError> {
    let mut out: Sections = BTreeMap::new();
    let mut section = String::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            out.entry(section.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
            key: format!("line {}", k + 1),
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        if section.is_empty() {
            return Err(CliError::Config {
                key: format!("line {}", k + 1),
                message: "key outside of any [section]".into(),
            });
        }
        out.entry(section.clone())
            .or_default()
            .insert(key.trim().to_string(), (k + 1, value.trim().to_string()));
    }
    Ok(out)
}

fn num(key: &str, s: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| CliError::Config {
        key: key.into(),
        message: format!("not a number: {s:?}"),
    })
}

fn list(key: &str, s: &str) -> Result<Vec<f64>, CliError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| num(key, x)).collect()
}

fn count(key: &str, s: &str) -> Result<usize, CliError> {
    s.trim().parse().map_err(|_| CliError::Config {
        key: key.into(),
        message: format!("not a nonnegative integer: {s:?}"),
    })
}

fn triples(key: &str, s: &str) -> Result<Vec<[f64; 3]>, CliError> {
    s.split(',')
        .map(|rec| {
            let v: Vec<f64> = rec.split_whitespace().map(|x| num(key, x)).collect::<Result<_, _>>()?;
            <[f64; 3]>::try_from(v).map_err(|_| CliError::Config {
                key: key.into(),
                message: format!("expected `fx fy cost` records, got {rec:?}"),
            })
        })
        .collect()
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            key: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let sections = parse_sections(text)?;
        let mut cfg = Self::default();
        let mut medium_left = None;
        let mut medium_right = None;
        let mut profile = (0.25, 0.75, Some(0.25), None::<Vec<f64>>);
        for (section, entries) in &sections {
            for (key, (_line, value)) in entries {
                let full = format!("{section}.{key}");
                let v = value.as_str();
                match full.as_str() {
                    "medium.preset" => cfg.medium = MediumSource::Preset(v.to_string()),
                    "medium.file" => cfg.medium = MediumSource::File(base.join(v)),
                    "medium.left" => medium_left = Some(triples(&full, v)?),
                    "medium.right" => medium_right = Some(triples(&full, v)?),
                    "medium.far_field_cap" => {
                        let cap = num(&full, v)?;
                        cfg.far_field_cap = (cap > 0.0).then_some(cap);
                    }
                    "profile.a" => profile.0 = num(&full, v)?,
                    "profile.b" => profile.1 = num(&full, v)?,
                    "profile.h" => profile.2 = Some(num(&full, v)?),
                    "profile.samples" => profile.3 = Some(list(&full, v)?),
                    "scales.eta" => cfg.eta = list(&full, v)?,
                    "scales.eps" => cfg.eps = list(&full, v)?,
                    "cell.p2" => cfg.p2 = list(&full, v)?,
                    "cell.finger_rho" => cfg.finger_rho = list(&full, v)?,
                    "cell.line_rho" => cfg.line_rho = list(&full, v)?,
                    "cell.eps_rho" => cfg.eps_rho = list(&full, v)?,
                    "cell.discounts" => cfg.discounts = list(&full, v)?,
                    "cell.finger_h1" => cfg.finger_h1 = num(&full, v)?,
                    "cell.finger_nodes" => cfg.finger_nodes = count(&full, v)?,
                    "cell.column_nodes" => cfg.column_nodes = count(&full, v)?,
                    "cell.eps_nodes" => cfg.eps_nodes = count(&full, v)?,
                    "cell.line_h" => cfg.line_h = num(&full, v)?,
                    "cell.tol" => cfg.ergodic_tol = num(&full, v)?,
                    "cell.rho_tol" => cfg.rho_tol = num(&full, v)?,
                    "cell.table_range" => cfg.table_range = num(&full, v)?,
                    "cell.table_nodes" => cfg.table_nodes = count(&full, v)?,
                    "solve.lambda" => cfg.lambda = num(&full, v)?,
                    "solve.window" => {
                        let w = list(&full, v)?;
                        if w.len() != 2 {
                            return Err(CliError::Config {
                                key: full,
                                message: "expected `lo, hi`".into(),
                            });
                        }
                        cfg.window = (w[0], w[1]);
                    }
                    "solve.h" => cfg.effective_h = num(&full, v)?,
                    "solve.cells_per_period" => cfg.cells_per_period = count(&full, v)?,
                    "solve.tol" => cfg.solve_tol = num(&full, v)?,
                    "solve.samples" => cfg.samples = list(&full, v)?,
                    "output.dir" => cfg.out_dir = base.join(v),
                    _ => {
                        return Err(CliError::Config {
                            key: full,
                            message: "unknown key".into(),
                        })
                    }
                }
            }
        }
        match (medium_left, medium_right) {
            (Some(left), Some(right)) => cfg.medium = MediumSource::Inline { left, right },
            (None, None) => {}
            _ => {
                return Err(CliError::Config {
                    key: "medium.left".into(),
                    message: "inline media need both `left` and `right`".into(),
                })
            }
        }
        cfg.profile = match profile {
            (a, b, _, Some(samples)) => ProfileSource::Sampled { a, b, samples },
            (a, b, Some(h), None) => ProfileSource::Sine { a, b, h },
            (a, b, None, None) => ProfileSource::Sine { a, b, h: 0.25 },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks lists, tolerances and the profile; every error names its key.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, message: String| Err(CliError::Config { key: key.into(), message });
        for (key, l) in [
            ("scales.eta", &self.eta),
            ("scales.eps", &self.eps),
            ("cell.p2", &self.p2),
            ("cell.finger_rho", &self.finger_rho),
            ("cell.line_rho", &self.line_rho),
            ("cell.eps_rho", &self.eps_rho),
            ("cell.discounts", &self.discounts),
            ("solve.samples", &self.samples),
        ] {
            if l.is_empty() {
                return bad(key, "list must not be empty".into());
            }
            if l.iter().any(|x| !x.is_finite()) {
                return bad(key, "entries must be finite".into());
            }
        }
        for (key, t) in [
            ("cell.tol", self.ergodic_tol),
            ("cell.rho_tol", self.rho_tol),
            ("solve.tol", self.solve_tol),
        ] {
            if !(t > 0.0) {
                return bad(key, format!("tolerance must be > 0 (got {t})"));
            }
        }
        for (key, v) in [
            ("solve.lambda", self.lambda),
            ("solve.h", self.effective_h),
            ("cell.line_h", self.line_h),
            ("cell.finger_h1", self.finger_h1),
            ("cell.table_range", self.table_range),
        ] {
            if !(v > 0.0) {
                return bad(key, format!("must be > 0 (got {v})"));
            }
        }
        if self.eta.iter().chain(&self.eps).any(|&x| !(x > 0.0)) {
            return bad("scales", "eta and eps must be positive".into());
        }
        if !(self.window.0 < self.window.1) {
            return bad("solve.window", "need lo < hi".into());
        }
        if self.table_nodes < 3 {
            return bad("cell.table_nodes", "need at least 3 nodes".into());
        }
        if let MediumSource::File(p) = &self.medium {
            if !p.exists() {
                return bad("medium.file", format!("{} does not exist", p.display()));
            }
        }
        if let MediumSource::Preset(name) = &self.medium {
            if !matches!(name.as_str(), "asymmetric" | "identical") {
                return bad("medium.preset", format!("unknown preset {name:?} (asymmetric | identical)"));
            }
        }
        self.profile().map(|_| ())
    }

    pub fn profile(&self) -> Result<ToothProfile<f64>, CliError> {
        let p = match &self.profile {
            ProfileSource::Sine { a, b, h } => ToothProfile::sine(*a, *b, *h),
            ProfileSource::Sampled { a, b, samples } => ToothProfile::sampled(*a, *b, samples.clone()),
        };
        p.map_err(|e| CliError::Config {
            key: "profile".into(),
            message: e.to_string(),
        })
    }

    /// The configured pair without far-field cost, as used by every cell
    /// problem; the standing assumptions are checked.
    pub fn base_pair(&self) -> Result<MediumPair<f64>, CliError> {
        let pair = match &self.medium {
            MediumSource::Preset(name) if name == "identical" => MediumPair::identical(),
            MediumSource::Preset(_) => MediumPair::asymmetric(),
            MediumSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config {
                    key: "medium.file".into(),
                    message: format!("cannot read {}: {e}", p.display()),
                })?;
                MediumPair::from_spec_text(&text).map_err(|e| CliError::Config {
                    key: "medium.file".into(),
                    message: e.to_string(),
                })?
            }
            MediumSource::Inline { left, right } => {
                let mut text = String::from("[left]\n");
                left.iter().for_each(|c| text.push_str(&format!("{} {} {}\n", c[0], c[1], c[2])));
                text.push_str("[right]\n");
                right.iter().for_each(|c| text.push_str(&format!("{} {} {}\n", c[0], c[1], c[2])));
                MediumPair::from_spec_text(&text)?
            }
        };
        check_assumptions(&pair)?;
        Ok(pair)
    }

    /// The pair with the configured far-field cost, for macroscopic solves.
    pub fn pair(&self) -> Result<MediumPair<f64>, CliError> {
        let pair = self.base_pair()?;
        Ok(match self.far_field_cap {
            Some(cap) => pair.with_far_field_cost(FarFieldCost::saturating_ramp(cap)),
            None => pair,
        })
    }

    pub fn cell_settings(&self) -> CellSettings<f64> {
        CellSettings {
            column_nodes: self.column_nodes,
            finger_h1: self.finger_h1,
            finger_nodes_per_period: self.finger_nodes,
            line_h: self.line_h,
            eps_nodes_per_period: self.eps_nodes,
            eps_nodes_per_eps_h1: 8,
            method: ErgodicMethod::Discounted {
                schedule: self.discounts.clone(),
            },
            control: SolverControl {
                tol: self.ergodic_tol,
                max_iter: 20_000_000,
            },
            hm_control: SolverControl {
                tol: 1e-9,
                max_iter: 50_000_000,
            },
            rho_tol: self.rho_tol,
        }
    }

    pub fn solve_control(&self) -> SolverControl<f64> {
        SolverControl {
            tol: self.solve_tol,
            max_iter: 20_000_000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_default_matches_builtin() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.ini");
        let cfg = RunConfig::load(&path).unwrap();
        let want = RunConfig { out_dir: path.parent().unwrap().join("out"), ..RunConfig::default() };
        assert_eq!(cfg, want);
    }

    #[test]
    fn bad_profile_names_field() {
        let err = RunConfig::parse("[profile]\na = 0.6\nb = 0.5\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("profile.b"), "{err}");
    }

    #[test]
    fn empty_list_rejected() {
        let err = RunConfig::parse("[cell]\np2 =\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("cell.p2"), "{err}");
    }

    #[test]
    fn zero_tolerance_rejected() {
        let err = RunConfig::parse("[cell]\ntol = 0\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("tolerance"), "{err}");
    }

    #[test]
    fn inline_medium() {
        let cfg = RunConfig::parse(
            "[medium]\nleft = 0 0 1, 1 0 1, -1 0 1, 0 1 1, 0 -1 1\nright = 0 0 1, 2 0 1, -2 0 1, 0 2 1, 0 -2 1\n",
            Path::new("."),
        )
        .unwrap();
        let pair = cfg.pair().unwrap();
        assert_eq!(pair.right.max_speed(), 2.0);
    }

    #[test]
    fn missing_medium_file() {
        let err = RunConfig::parse("[medium]\nfile = nope.txt\n", Path::new("/nonexistent")).unwrap_err();
        assert!(err.to_string().contains("medium.file"), "{err}");
    }
}
