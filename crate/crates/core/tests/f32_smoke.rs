//! The generic core instantiated at `f32`.

use twoscale_hj::cell_problems::{hm_oracle, EffectiveTable, TableAxis};
use twoscale_hj::control_model::{e0, hamiltonian, MediumPair};
use twoscale_hj::geometry::{InterfaceSpec, ToothProfile};
use twoscale_hj::hj_engines::{default_time_step, value_iteration, DpProblem, Grid, SolverControl};
use twoscale_hj::Vec2;

#[test]
fn hamiltonians_in_single_precision() {
    let pair = MediumPair::<f32>::asymmetric();
    assert_eq!(hamiltonian(&pair.right, Vec2::new(2.0f32, 0.5)), 1.0);
    assert_eq!(e0(&pair.left, 1.0f32).value, 1.0);
    let profile = ToothProfile::<f32>::standard();
    assert!((hm_oracle(&pair, &profile, Vec2::new(0.0, 1.0)) - 1.0 / 3.0).abs() < 1e-5);
}

#[test]
fn value_iteration_in_single_precision() {
    let pair = MediumPair::<f32>::identical();
    let spec = InterfaceSpec::new(ToothProfile::standard(), 0.5f32, 0.5).unwrap();
    let grid = Grid::strip(-1.0f32, 1.0, 33, 0.0, spec.period(), 8).unwrap();
    let dt = default_time_step(&grid, &pair);
    let problem = DpProblem::new(&pair, &spec, 1.0, dt).with_control(SolverControl { tol: 1e-4, max_iter: 100_000 });
    let v = value_iteration(&problem, &grid).unwrap();
    assert!(v.values.iter().all(|x| (x - 1.0).abs() < 1e-3));
}

#[test]
fn tabulated_table_in_single_precision() {
    let pair = MediumPair::<f32>::identical();
    let axis = TableAxis::span(-1.0f32, 1.0, 5).unwrap();
    let t = EffectiveTable::tabulate(&pair.right, axis, axis).unwrap();
    assert!(t.convexity_defect() <= 1e-6);
}
