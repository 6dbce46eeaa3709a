//! Randomized invariants of the models, geometry and engines.

use proptest::prelude::*;
use twoscale_hj::control_model::{
    e0, half_hamiltonian, hamiltonian, Branch, Control, ControlSide, MediumPair, SideLabel,
};
use twoscale_hj::geometry::{region_of, InterfaceSpec, ToothProfile};
use twoscale_hj::hj_engines::{default_time_step, DpOperator, DpProblem, Grid};
use twoscale_hj::{Axis, Vec2};

/// A control set whose velocity hull contains a ball around the origin:
/// the four axis directions scaled randomly, plus random extras.
fn side() -> impl Strategy<Value = ControlSide<f64>> {
    (
        prop::array::uniform4(0.5f64..2.0),
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.1f64..2.0), 0..4),
        0.1f64..2.0,
    )
        .prop_map(|(s, extra, cost)| {
            let mut controls = vec![
                Control::new(s[0], 0.0, cost),
                Control::new(-s[1], 0.0, cost),
                Control::new(0.0, s[2], cost),
                Control::new(0.0, -s[3], cost),
            ];
            controls.extend(extra.into_iter().map(|(x, y, c)| Control::new(x, y, c)));
            ControlSide::new(SideLabel::Right, controls)
        })
}

fn momentum() -> impl Strategy<Value = Vec2<f64>> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #[test]
    fn hamiltonian_is_midpoint_convex(s in side(), p in momentum(), q in momentum()) {
        let mid = Vec2::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y));
        let lhs = hamiltonian(&s, mid);
        prop_assert!(lhs <= 0.5 * (hamiltonian(&s, p) + hamiltonian(&s, q)) + 1e-12);
    }

    #[test]
    fn hamiltonian_is_coercive(s in side(), p in momentum()) {
        let max_cost = s.controls.iter().map(|c| c.cost).fold(0.0, f64::max);
        prop_assert!(hamiltonian(&s, p) >= s.delta0 * p.norm() - max_cost - 1e-12);
    }

    #[test]
    fn half_hamiltonians_envelope(s in side(), p in momentum(), d in 0.0f64..2.0) {
        let plus = half_hamiltonian(&s, p, Axis::One, Branch::Plus).unwrap();
        let minus = half_hamiltonian(&s, p, Axis::One, Branch::Minus).unwrap();
        prop_assert!((plus.max(minus) - hamiltonian(&s, p)).abs() < 1e-12);
        let shifted = Vec2::new(p.x + d, p.y);
        prop_assert!(half_hamiltonian(&s, shifted, Axis::One, Branch::Plus).unwrap() >= plus - 1e-12);
        prop_assert!(half_hamiltonian(&s, shifted, Axis::One, Branch::Minus).unwrap() <= minus + 1e-12);
    }

    #[test]
    fn e0_is_the_minimum_over_p1(s in side(), p2 in -3.0f64..3.0, q in -5.0f64..5.0) {
        let m = e0(&s, p2);
        prop_assert!(m.p1_minus <= m.p1_plus);
        prop_assert!(hamiltonian(&s, Vec2::new(q, p2)) >= m.value - 1e-9);
        prop_assert!((hamiltonian(&s, Vec2::new(m.p1_minus, p2)) - m.value).abs() < 1e-8);
        prop_assert!((hamiltonian(&s, Vec2::new(m.p1_plus, p2)) - m.value).abs() < 1e-8);
    }

    #[test]
    fn geometry_is_periodic_in_x2(
        x1 in -1.5f64..1.5,
        k in 0u32..64,
        shift in -3i32..3,
        eta in prop::sample::select(vec![0.25, 0.5, 1.0]),
        eps in prop::sample::select(vec![0.125, 0.25, 0.5]),
    ) {
        let spec = InterfaceSpec::new(ToothProfile::standard(), eta, eps).unwrap();
        let y = spec.period() * (f64::from(k) + 0.5) / 64.0;
        let a = region_of(&spec, Vec2::new(x1, y));
        let b = region_of(&spec, Vec2::new(x1, y + f64::from(shift) * spec.period()));
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bellman_operator_is_monotone(
        seed in prop::collection::vec(-3.0f64..3.0, 21 * 8),
        bump in prop::collection::vec(0.0f64..1.0, 21 * 8),
        p2 in -1.0f64..1.0,
    ) {
        let pair = MediumPair::asymmetric();
        let spec = InterfaceSpec::new(ToothProfile::standard(), 0.5, 0.5).unwrap();
        let grid = Grid::strip(-1.0, 1.0, 21, 0.0, spec.period(), 8).unwrap();
        let dt = default_time_step(&grid, &pair);
        let problem = DpProblem::new(&pair, &spec, 1.0, dt).with_tangential_momentum(p2);
        let op = DpOperator::build(&problem, &grid).unwrap();
        let v: Vec<f64> = seed.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (mut tu, mut tv) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
        op.apply(&seed, 1.0 - dt, &mut tu);
        op.apply(&v, 1.0 - dt, &mut tv);
        prop_assert!(tu.iter().zip(&tv).all(|(a, b)| a <= b));
    }
}
