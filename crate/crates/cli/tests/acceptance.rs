//! Runs the full acceptance suite on the shipped default config and prints
//! one line per criterion.

use std::path::Path;

use twoscale_hj_cli::acceptance::{self, Criterion};
use twoscale_hj_cli::manifest::Check;
use twoscale_hj_cli::RunConfig;

/// Limit and strictness each check must be held to.
fn pinned(id: u8, label: &str) -> (f64, bool) {
    match id {
        1 => (0.05, false),
        2 => (0.02, false),
        3 => (0.01, false),
        4 if label.starts_with("midpoint-convexity") => (1e-6, false),
        4 if label.starts_with("identical media") => (1e-3, false),
        4 => (0.0, false),
        5 => (1e-2, false),
        6 => (0.01, true),
        7 if label.starts_with("FlatLimit") => (1e-6, false),
        7 => (0.02, false),
        8 => (1e-9, false),
        9 if label.starts_with("Lipschitz") => (0.2, true),
        9 => (1e-9, false),
        10 if label.starts_with("junction") => (1e-9, false),
        10 => (0.0, false),
        _ => panic!("unexpected criterion {id}"),
    }
}

fn holds(check: &Check, limit: f64, strict: bool) -> bool {
    if strict {
        check.value < limit
    } else {
        check.value <= limit
    }
}

fn verify(c: &Criterion) -> Vec<String> {
    let mut problems = Vec::new();
    if c.checks.is_empty() {
        problems.push(format!("criterion {} has no checks", c.id));
    }
    for check in &c.checks {
        let (limit, strict) = pinned(c.id, &check.label);
        if check.limit != limit || check.strict != strict {
            problems.push(format!("criterion {}: `{}` uses limit {} (pinned {limit})", c.id, check.label, check.limit));
        }
        if !holds(check, limit, strict) {
            problems.push(format!("criterion {}: `{}` = {:e} exceeds {limit:e}", c.id, check.label, check.value));
        }
    }
    problems
}

#[test]
fn acceptance_suite() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.ini");
    let cfg = RunConfig::load(&path).expect("shipped config");
    let dir = tempfile::tempdir().unwrap();
    let report = acceptance::run(&cfg, dir.path()).expect("acceptance run");
    assert_eq!(report.criteria.len(), 10);
    let mut problems = Vec::new();
    for c in &report.criteria {
        let mine = verify(c);
        let verdict = if mine.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {:>2}: {verdict}  {}", c.id, c.title);
        problems.extend(mine);
    }
    println!("\n{}", report.summary());
    assert!(problems.is_empty(), "acceptance failures:\n{}", problems.join("\n"));
}
