use adhocgrid::certificates::{certify_envelope, check_feasibility, DesignEnvelope};
use adhocgrid::load_flow::{effective_impedance, solve_load_flow, LoadFlowOptions, SourceModel};
use adhocgrid::network::{Bus, LineParams, NetworkGraph};
use adhocgrid::random::{implication_check, random_certified_network, CertifiedCase};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Connected graph with at least one source and one load.
fn arb_graph() -> impl Strategy<Value = NetworkGraph> {
    (2usize..=10)
        .prop_flat_map(|n| {
            let tree = proptest::collection::vec((any::<prop::sample::Index>(), 0.01f64..1.0, 1e-5f64..1e-4, any::<bool>()), n - 1);
            let extra = proptest::collection::vec((0..n, 0..n, 0.01f64..1.0), 0..6);
            let loads = proptest::collection::vec(0.0f64..50.0, n);
            (Just(n), 1..n, tree, extra, loads)
        })
        .prop_map(|(n, n_s, tree, extra, loads)| {
            let buses = (0..n)
                .map(|k| if k < n_s { Bus::source(0.5, 48.0) } else { Bus::load(loads[k], 1e-3) })
                .collect();
            let mut lines: Vec<LineParams> = tree
                .into_iter()
                .enumerate()
                .map(|(j, (parent, r, tau, flip))| {
                    let a = j + 1;
                    let b = parent.index(a);
                    let (from, to) = if flip { (a, b) } else { (b, a) };
                    LineParams::with_time_constant(from, to, r, tau)
                })
                .collect();
            lines.extend(
                extra
                    .into_iter()
                    .filter(|(a, b, _)| a != b)
                    .map(|(a, b, r)| LineParams::with_time_constant(a, b, r, 5e-5)),
            );
            NetworkGraph::new(buses, lines)
        })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn incidence_is_adjoint(g in arb_graph(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..g.n()).map(|_| rand::Rng::random_range(&mut rng, -50.0..50.0)).collect();
        let i: Vec<f64> = (0..g.m()).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
        let lhs = dot(&g.incidence_apply(&v).unwrap(), &i);
        let rhs = dot(&v, &g.incidence_transpose_apply(&i).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn net_currents_sum_to_zero(g in arb_graph(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i: Vec<f64> = (0..g.m()).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
        let sum: f64 = g.incidence_transpose_apply(&i).unwrap().iter().sum();
        prop_assert!(sum.abs() <= 1e-12 * (1.0 + i.iter().map(|x| x.abs()).sum::<f64>()));
    }

    #[test]
    fn laplacian_kills_constants(g in arb_graph(), c in -100.0f64..100.0) {
        let l = g.laplacian().unwrap();
        let ones = nalgebra::DVector::from_element(g.n(), c);
        prop_assert!((&l * ones).amax() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn effective_resistance_below_total(g in arb_graph()) {
        let z = effective_impedance(&g).unwrap();
        prop_assert!(z.z_inf_star <= g.total_line_resistance() * (1.0 + 1e-12));
        prop_assert!(z.z_inf_star > 0.0);
    }

    #[test]
    fn feasibility_bound_falls_as_v_min_rises(r_sigma in 0.01f64..2.0, a in 0.5f64..0.97, b in 0.5f64..0.97) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let env = |pu: f64| DesignEnvelope {
            p_sigma: 0.0,
            r_sigma,
            v_ref: 48.0,
            v_min: pu * 48.0,
            r_max: 0.5,
            tau_max: 5e-5,
            loads: vec![],
        };
        // Above v_ref/2 the feasibility bound v(v_ref − v)/R shrinks with v.
        prop_assert!(check_feasibility(&env(hi)).rhs <= check_feasibility(&env(lo)).rhs);
    }

    #[test]
    fn newton_matches_quadratic_on_two_bus(r in 0.01f64..1.0, frac in 0.0f64..0.99) {
        let p = frac * 48.0 * 48.0 / (4.0 * r);
        let g = NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(p, 1e-3)],
            vec![LineParams::with_time_constant(0, 1, r, 5e-5)],
        );
        let sol = solve_load_flow(&g, 48.0, &SourceModel::Pinned, LoadFlowOptions::default()).unwrap();
        prop_assert!(sol.converged);
        let oracle = 0.5 * (48.0 + (48.0f64 * 48.0 - 4.0 * p * r).sqrt());
        // Near the fold the root is ill-conditioned in p.
        let slack = 1e-9 / (1.0 - frac).sqrt();
        prop_assert!((sol.v_star[1] - oracle).abs() / oracle <= slack, "{} vs {}", sol.v_star[1], oracle);
    }

    #[test]
    fn load_flow_power_balance(g in arb_graph()) {
        let sol = solve_load_flow(&g, 48.0, &SourceModel::Pinned, LoadFlowOptions::default()).unwrap();
        prop_assume!(sol.converged);
        let injected = sol.injected_power(&g).unwrap();
        let losses: f64 = g.lines().iter().zip(&sol.i_star).map(|(l, i)| l.resistance * i * i).sum();
        let net: f64 = injected.iter().sum();
        prop_assert!((net - losses).abs() <= 1e-6 * (1.0 + g.total_load_power()));
    }
}

#[test]
fn generated_cases_pass_design_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..300 {
        let c = random_certified_network(&mut rng);
        let env = DesignEnvelope::from_graph(&c.graph, c.v_ref, c.v_min).unwrap();
        assert!(certify_envelope(&env).pass);
    }
}

#[test]
fn implication_check_detects_overloaded_networks() {
    // Push certified networks far past their rules; the check must notice.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut caught = 0;
    for _ in 0..200 {
        let c = random_certified_network(&mut rng);
        let p: Vec<f64> = c.graph.load_powers().iter().map(|x| 20.0 * x).collect();
        let over = CertifiedCase {
            graph: c.graph.with_load_powers(&p).unwrap(),
            ..c
        };
        if !implication_check(&over).unwrap().is_empty() {
            caught += 1;
        }
    }
    assert!(caught > 50, "only {caught} of 200 overloaded networks failed");
}
