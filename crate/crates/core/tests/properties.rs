use std::sync::OnceLock;

use fsbp::basis::{boundary_product_moment, pair_derivative_rows, vandermonde, vandermonde_derivative};
use fsbp::diagnostics::burgers_reference;
use fsbp::operator::verify_norm_rule;
use fsbp::quadrature::{gauss_lobatto_rule, rule_with_nodes};
use fsbp::solver::{rhs_advection, rhs_burgers, run, BlockGrid, Boundary, ProblemSpec};
use fsbp::*;
use proptest::prelude::*;

fn rbf_centers() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.95, 0..=3).prop_map(|mut c| {
        c.push(0.0);
        c.push(1.0);
        c.sort_by(f64::total_cmp);
        c.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        c
    })
}

fn space_kind() -> impl Strategy<Value = SpaceKind> {
    prop_oneof![
        (1usize..=5).prop_map(SpaceKind::Poly),
        (1usize..=5).prop_map(SpaceKind::Trig),
        (1usize..=4).prop_map(SpaceKind::Exp),
        rbf_centers().prop_map(SpaceKind::RbfCubic),
    ]
}

fn interval() -> impl Strategy<Value = Interval> {
    (-2.0f64..2.0, 0.2f64..3.0).prop_map(|(a, len)| Interval::new(a, a + len).unwrap())
}

/// Space on `interval`, with RBF centers read on the unit interval.
fn space_on(kind: &SpaceKind, iv: Interval) -> FunctionSpace {
    make_space(kind.mapped(&Interval::unit(), &iv), iv).unwrap()
}

/// Operator on the smallest grid from the space default that admits a
/// positive exact rule.
fn smallest_operator(space: &FunctionSpace) -> FsbpOperator {
    let start = match space.kind() {
        SpaceKind::Poly(d) => d + 1,
        k => k.default_nodes(),
    };
    let rule = (start..=64)
        .find_map(|n| rule_with_nodes(space, n).ok())
        .expect("a positive exact rule");
    build_operator(space, &rule).unwrap()
}

fn sample_points(iv: Interval, count: usize) -> Vec<f64> {
    // Interior points avoiding the endpoints so central differences stay inside.
    let h = iv.length() / (count + 1) as f64;
    (1..=count).map(|i| iv.left() + i as f64 * h).collect()
}

fn operators() -> &'static [FsbpOperator] {
    static OPS: OnceLock<Vec<FsbpOperator>> = OnceLock::new();
    OPS.get_or_init(|| {
        [
            SpaceKind::Poly(1),
            SpaceKind::Poly(3),
            SpaceKind::Trig(1),
            SpaceKind::Trig(3),
            SpaceKind::Exp(2),
            SpaceKind::RbfCubic(vec![0.0, 0.5, 1.0]),
        ]
        .into_iter()
        .map(|k| smallest_operator(&make_space(k, Interval::unit()).unwrap()))
        .collect()
    })
}

fn norm_inf(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn p_dot(grid: &BlockGrid, u: &[f64], v: &[f64]) -> f64 {
    grid.weights().iter().zip(u).zip(v).map(|((p, a), b)| p * a * b).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn basis_derivatives_match_central_differences(kind in space_kind(), iv in interval()) {
        let space = space_on(&kind, iv);
        let h = 1e-5 * iv.length();
        for f in space.basis() {
            for x in sample_points(iv, 100) {
                let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
                let exact = f.derivative(x);
                prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                    "{} at {x}: {fd} vs {exact}", f.label());
            }
        }
    }

    #[test]
    fn rbf_cardinal_functions_sum_to_one(centers in rbf_centers()) {
        let space = make_space(SpaceKind::RbfCubic(centers), Interval::unit()).unwrap();
        prop_assert!(space.contains_constants());
        for x in Interval::unit().equidistant(100) {
            let sum: f64 = space.basis().iter().map(|c| c.value(x)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn boundary_moments_are_symmetric(kind in space_kind(), iv in interval()) {
        let space = space_on(&kind, iv);
        for k in 0..space.dim() {
            for l in 0..space.dim() {
                prop_assert_eq!(
                    boundary_product_moment(&space, k, l),
                    boundary_product_moment(&space, l, k)
                );
            }
        }
    }

    #[test]
    fn pair_rows_are_product_derivatives(kind in space_kind(), n in 2usize..12) {
        let iv = Interval::unit();
        let space = space_on(&kind, iv);
        let grid = iv.equidistant(n);
        let (rows, _) = pair_derivative_rows(&space, &grid).unwrap();
        let basis = space.basis();
        let h = 1e-6;
        let mut r = 0;
        for k in 0..basis.len() {
            for l in k..basis.len() {
                for (j, &x) in grid.iter().enumerate() {
                    let prod = |y: f64| basis[k].value(y) * basis[l].value(y);
                    let fd = (prod(x + h) - prod(x - h)) / (2.0 * h);
                    let v = rows[(r, j)];
                    prop_assert!((v - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "pair ({k},{l}) at {x}");
                }
                r += 1;
            }
        }
        prop_assert_eq!(r, rows.nrows());
    }

    #[test]
    fn rules_scale_with_the_interval(d in 1usize..=4, extra in 0usize..4, iv in interval()) {
        let unit = make_space(SpaceKind::Poly(d), Interval::unit()).unwrap();
        let mapped = make_space(SpaceKind::Poly(d), iv).unwrap();
        let n = 2 * d + extra;
        let a = least_squares_rule(&unit, n).unwrap();
        let b = least_squares_rule(&mapped, n).unwrap();
        let lambda = iv.length();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            prop_assert!((wa * lambda - wb).abs() <= 1e-10 * lambda);
        }
        let a = trapezoid_rule(n, Interval::unit()).unwrap();
        let b = trapezoid_rule(n, iv).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            prop_assert!((wa * lambda - wb).abs() <= 1e-14 * lambda);
        }
    }

    #[test]
    fn found_rules_satisfy_rule_invariants(kind in space_kind(), iv in interval()) {
        let space = space_on(&kind, iv);
        let start = kind.default_nodes().max(space.dim() + 1);
        let rule = find_positive_rule(&space, start, 64).unwrap();
        prop_assert!(rule.len() >= 2);
        prop_assert_eq!(rule.nodes[0], iv.left());
        prop_assert_eq!(rule.nodes[rule.len() - 1], iv.right());
        prop_assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rule.weights.iter().all(|&w| w > 0.0));
        prop_assert!(rule.exactness_residual.is_some_and(|r| r <= 1e-10));
        prop_assert!(verify_exactness(&rule, &space).passed());
    }

    #[test]
    fn exp2_weights_sum_to_length(extra in 0usize..4, iv in interval()) {
        let space = make_space(SpaceKind::Exp(2), iv).unwrap();
        let rule = least_squares_rule(&space, 5 + extra).unwrap();
        let sum: f64 = rule.weights.iter().sum();
        prop_assert!((sum - iv.length()).abs() <= 1e-12 * iv.length().max(1.0));
    }

    #[test]
    fn lobatto_integrates_monomials(n in 2usize..=30) {
        let rule = gauss_lobatto_rule(n, Interval::new(-1.0, 1.0).unwrap()).unwrap();
        for j in 0..=(2 * n - 3) {
            let exact = if j % 2 == 0 { 2.0 / (j + 1) as f64 } else { 0.0 };
            let q = rule.integrate(|x| x.powi(j as i32));
            prop_assert!((q - exact).abs() <= 1e-12, "N={n} j={j}: {q} vs {exact}");
        }
    }

    #[test]
    fn built_operators_carry_positive_exact_norms(kind in space_kind(), iv in interval()) {
        let space = space_on(&kind, iv);
        let op = smallest_operator(&space);
        prop_assert!(verify_sbp(&op).passed(), "{:?}", verify_sbp(&op));
        let rule = verify_norm_rule(&op);
        prop_assert!(rule.positive && rule.exact());
    }

    #[test]
    fn compatibility_relation_holds(kind in space_kind()) {
        let space = make_space(kind, Interval::unit()).unwrap();
        let op = smallest_operator(&space);
        let f = vandermonde(&space, op.nodes()).unwrap();
        let fx = vandermonde_derivative(&space, op.nodes()).unwrap();
        let p = op.weights();
        for k in 0..space.dim() {
            for l in 0..space.dim() {
                let lhs: f64 = (0..op.len())
                    .map(|i| p[i] * (f[(i, l)] * fx[(i, k)] + f[(i, k)] * fx[(i, l)]))
                    .sum();
                prop_assert!((lhs - boundary_product_moment(&space, k, l)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn builds_are_deterministic(kind in space_kind()) {
        let space = make_space(kind, Interval::unit()).unwrap();
        let a = smallest_operator(&space);
        let b = smallest_operator(&space);
        prop_assert_eq!(a.q(), b.q());
        prop_assert_eq!(a.d(), b.d());
        prop_assert_eq!(a.weights(), b.weights());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn advection_mass_and_energy_rates(
        which in 0usize..6,
        values in prop::collection::vec(-3.0f64..3.0, 64),
        g in -3.0f64..3.0,
        a in 0.1f64..4.0,
        sigma in 0.51f64..3.0,
    ) {
        let op = &operators()[which];
        let grid = BlockGrid::from_reference(op, Interval::unit(), 1);
        let u = &values[..grid.total_nodes()];
        let n = u.len();
        let (u1, un) = (u[0], u[n - 1]);
        let scale = 1.0 + norm_inf(u) + g.abs();
        let ones = vec![1.0; n];

        let spec = ProblemSpec::advection(Interval::unit(), a, |_| 0.0, Boundary::constant(g));
        let r = rhs_advection(&grid, u, 0.0, &spec);
        prop_assert!((p_dot(&grid, &ones, &r) + a * (un - g)).abs() <= 1e-12 * a * scale);

        let spec = spec.with_sigma(sigma);
        let r = rhs_advection(&grid, u, 0.0, &spec);
        let rate = 2.0 * p_dot(&grid, u, &r);
        let expected = a * (u1 * u1 - un * un - 2.0 * sigma * u1 * u1 + 2.0 * sigma * u1 * g);
        prop_assert!((rate - expected).abs() <= 1e-12 * a * sigma.max(1.0) * scale * scale);
        let bound = a * g * g * sigma * sigma / (2.0 * sigma - 1.0);
        prop_assert!(rate <= bound + 1e-10);
    }

    #[test]
    fn burgers_energy_rate(
        which in 0usize..6,
        values in prop::collection::vec(0.0f64..3.0, 64),
        g in 0.0f64..3.0,
        sigma in 1.0f64..3.0,
    ) {
        let op = &operators()[which];
        let grid = BlockGrid::from_reference(op, Interval::unit(), 1);
        let u = &values[..grid.total_nodes()];
        let (u1, un) = (u[0], u[u.len() - 1]);
        let spec = ProblemSpec::burgers(Interval::unit(), |_| 1.0, |_| 0.0, Boundary::constant(g))
            .with_sigma(sigma);
        let r = rhs_burgers(&grid, u, 0.0, &spec);
        let rate = 2.0 * p_dot(&grid, u, &r);
        let expected = 2.0 / 3.0 * (sigma * u1 * u1 * g - (sigma - 1.0) * u1.powi(3) - un.powi(3));
        let scale = 1.0 + norm_inf(u) + g;
        prop_assert!((rate - expected).abs() <= 1e-12 * sigma * scale.powi(3));
    }

    #[test]
    fn periodic_interfaces_telescope(
        which in 0usize..6,
        blocks in 1usize..5,
        values in prop::collection::vec(-2.0f64..2.0, 256),
        a in 0.1f64..4.0,
    ) {
        let grid = BlockGrid::from_reference(&operators()[which], Interval::unit(), blocks);
        let u = &values[..grid.total_nodes()];
        let spec = ProblemSpec::advection(Interval::unit(), a, |_| 0.0, Boundary::Periodic);
        let r = rhs_advection(&grid, u, 0.0, &spec);
        let ones = vec![1.0; u.len()];
        prop_assert!(p_dot(&grid, &ones, &r).abs() <= 1e-12 * a * (1.0 + norm_inf(u)) * blocks as f64);
    }

    /// Periodic multi-block Burgers: the energy rate is the sum over
    /// interfaces of ⅔[σ v² u − (σ−1) v³ − u³], with u the trace on the left
    /// and v the trace on the right of each interface.
    #[test]
    fn periodic_burgers_energy_rate_is_interface_sum(
        which in 0usize..6,
        blocks in 1usize..5,
        values in prop::collection::vec(0.0f64..2.0, 256),
        sigma in 1.0f64..3.0,
    ) {
        let grid = BlockGrid::from_reference(&operators()[which], Interval::unit(), blocks);
        let n = grid.nodes_per_block();
        let u = &values[..grid.total_nodes()];
        let spec = ProblemSpec::burgers(Interval::unit(), |_| 1.0, |_| 0.0, Boundary::Periodic)
            .with_sigma(sigma);
        let r = rhs_burgers(&grid, u, 0.0, &spec);
        let rate = 2.0 * p_dot(&grid, u, &r);
        let expected: f64 = (0..blocks)
            .map(|i| {
                let left = if i == 0 { u[u.len() - 1] } else { u[i * n - 1] };
                let right = u[i * n];
                2.0 / 3.0 * (sigma * right * right * left - (sigma - 1.0) * right.powi(3) - left.powi(3))
            })
            .sum();
        prop_assert!((rate - expected).abs() <= 1e-12 * sigma * (1.0 + norm_inf(u)).powi(3) * blocks as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn periodic_advection_conserves_mass_and_dissipates_energy(
        d in 1usize..=4,
        extra in 0usize..3,
        blocks in 1usize..4,
        a in 0.5f64..2.0,
    ) {
        let spec = ProblemSpec::advection(
            Interval::unit(),
            a,
            |x| (2.0 * std::f64::consts::PI * x).sin() + 0.3,
            Boundary::Periodic,
        );
        let out = run(&spec, &SpaceKind::Trig(d), 2 * d + 2 + extra, blocks, 0.5, 0.5).unwrap();
        let h = &out.history;
        let m0 = h[0].mass;
        prop_assert!((h[h.len() - 1].mass - m0).abs() <= 1e-10 * (1.0 + m0.abs()));
        for w in h.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy + 1e-10);
        }
    }

    #[test]
    fn burgers_reference_at_time_zero_is_identity(x in -3.0f64..3.0) {
        let spec = ProblemSpec::burgers_wave();
        let du = spec.initial_derivative.clone().unwrap();
        let u = burgers_reference(&*spec.initial_condition, &*du, x, 0.0).unwrap();
        prop_assert!((u - spec.initial(x)).abs() <= 1e-14);
    }
}
