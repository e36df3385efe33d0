use bas_core::benchmarks::{build_discrete, BenchmarkId};
use bas_core::io::fmt17;
use bas_core::reach::{check_point, octagon_directions, reach_step, BoxSet, ReachSet, TemplatePolytope};
use bas_core::simulate::step;
use bas_core::stochastic::{
    action_grid, compose_guarantee, grid_abstraction, safety_value_iteration, GaussianKernel, GridMDP, SafetySpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct KernelCase {
    a: Vec<f64>,
    q: Vec<f64>,
    variance: Vec<f64>,
    cells: Vec<usize>,
    actions: usize,
}

fn kernel_case(max_dim: usize, max_cells: usize) -> impl Strategy<Value = KernelCase> {
    (1..=max_dim).prop_flat_map(move |n| {
        (
            prop::collection::vec(0.3..1.05f64, n * n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(0.002..0.3f64, n),
            prop::collection::vec(2..=max_cells, n),
            1..=3usize,
        )
            .prop_map(move |(a, q, variance, cells, actions)| KernelCase {
                a: a.iter()
                    .enumerate()
                    .map(|(i, v)| if i % (n + 1) == 0 { *v } else { v * 0.1 - 0.05 })
                    .collect(),
                q,
                variance,
                cells,
                actions,
            })
    })
}

fn build(case: &KernelCase) -> GridMDP {
    let n = case.q.len();
    let a = DMatrix::from_row_slice(n, n, &case.a);
    // shift the mean so the safe box [19, 21]^n sits near the fixed point
    let q = DVector::from_fn(n, |i, _| {
        20.0 - (0..n).map(|j| a[(i, j)] * 20.0).sum::<f64>() + case.q[i] * 0.3
    });
    let kernel = GaussianKernel {
        state_names: (0..n).map(|i| format!("x{i}")).collect(),
        a,
        b: DMatrix::from_element(n, 1, 0.02),
        q,
        variance: DVector::from_vec(case.variance.clone()),
        u_lo: vec![-10.0],
        u_hi: vec![10.0],
    };
    let spec = SafetySpec::new(vec![19.0; n], vec![21.0; n], 3).unwrap();
    grid_abstraction(&kernel, &spec, &case.cells, &action_grid(-10.0, 10.0, case.actions)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_rows_are_distributions(case in kernel_case(3, 5)) {
        let mdp = build(&case);
        let ones = vec![1.0; mdp.n_cells()];
        for i in 0..mdp.n_cells() {
            for a in 0..mdp.n_actions() {
                let row = mdp.dense_row(i, a);
                prop_assert!(row.iter().all(|p| (-1e-12..=1.0 + 1e-12).contains(p)));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let safe: f64 = row[..mdp.n_cells()].iter().sum();
                prop_assert!((safe - mdp.safe_mass(i, a)).abs() < 1e-12);
                prop_assert!((mdp.expect(i, a, &ones) - safe).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn safety_values_are_probabilities_and_shrink_with_horizon(case in kernel_case(2, 6), horizon in 1..6usize) {
        let mdp = build(&case);
        let res = safety_value_iteration(&mdp, horizon);
        prop_assert_eq!(res.values.len(), horizon + 1);
        for m in 0..horizon {
            for (now, next) in res.values[m].iter().zip(&res.values[m + 1]) {
                prop_assert!((0.0..=1.0).contains(next));
                prop_assert!(*next <= now + 1e-12);
            }
        }
    }

    #[test]
    fn single_action_values_match_matrix_powers(case in kernel_case(1, 5), horizon in 1..8usize) {
        let case = KernelCase { actions: 1, ..case };
        let mdp = build(&case);
        let n = mdp.n_cells();
        let p = DMatrix::from_fn(n, n, |i, j| mdp.dense_row(i, 0)[j]);
        let mut v = DVector::from_element(n, 1.0);
        for _ in 0..horizon {
            v = &p * v;
        }
        let res = safety_value_iteration(&mdp, horizon);
        for i in 0..n {
            prop_assert!((res.final_values()[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn composed_guarantee_is_bounded_and_monotone(
        p in 0.0..=1.0f64, eta in 0.0..0.5f64, extra in 0.0..0.2f64, n in 0..40usize, delta in 0.0..0.02f64,
    ) {
        let g = compose_guarantee(p, eta, n, delta).unwrap();
        prop_assert!((0.0..=p).contains(&g));
        prop_assert!(compose_guarantee(p, eta + extra, n, delta).unwrap() <= g);
        prop_assert!(compose_guarantee(p, eta, n + 1, delta).unwrap() <= g);
        prop_assert!(compose_guarantee(p, -eta - 1e-9, n, delta).is_err());
    }

    #[test]
    fn one_step_reach_contains_sampled_successors(
        c in prop::collection::vec(17.0..23.0f64, 2),
        w in prop::collection::vec(30.0..40.0f64, 2),
        half in 0.0..1.5f64,
        ul in 15.0..18.5f64, uw in 0.0..3.5f64,
        t in prop::collection::vec(0.0..=1.0f64, 4),
        tu in 0.0..=1.0f64,
        td in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let (m, _) = build_discrete(BenchmarkId::Cs1Dist).unwrap();
        let center = [c[0], c[1], w[0], w[1]];
        let x0 = BoxSet::new(center.iter().map(|v| v - half).collect(), center.iter().map(|v| v + half).collect()).unwrap();
        let u = BoxSet::new(vec![ul], vec![ul + uw]).unwrap();
        let d = BoxSet::new(vec![0.0; m.nd()], vec![1000.0; m.nd()]).unwrap();
        let dirs = octagon_directions(4);
        let poly = reach_step(&ReachSet::Box(x0.clone()), &m, &u, &d, &dirs).unwrap();

        let x = DVector::from_fn(4, |i, _| x0.lo[i] + t[i] * (x0.hi[i] - x0.lo[i]));
        let uv = DVector::from_element(1, ul + tu * uw);
        let dv = DVector::from_fn(m.nd(), |i, _| 1000.0 * td[i % td.len()]);
        let next = step(&m, &x, &uv, &dv, &DVector::zeros(4)).unwrap();
        prop_assert!(check_point(next.as_slice(), &poly, 1e-9).inside);

        // widening the input set can only loosen every facet
        let wider = BoxSet::new(vec![ul - 1.0], vec![ul + uw + 1.0]).unwrap();
        let loose = reach_step(&ReachSet::Box(x0), &m, &wider, &d, &dirs).unwrap();
        for (tight, wide) in poly.bounds.iter().zip(&loose.bounds) {
            prop_assert!(wide + 1e-9 >= *tight);
        }
    }

    #[test]
    fn polytope_csv_round_trips(bounds in prop::collection::vec(-1e6..1e6f64, 8)) {
        let poly = TemplatePolytope {
            directions: octagon_directions(2).iter().map(|d| d.as_slice().to_vec()).collect(),
            bounds,
        };
        let back = TemplatePolytope::from_csv(&poly.to_csv(&["a", "b"])).unwrap();
        prop_assert_eq!(back, poly);
    }

    #[test]
    fn seventeen_digit_format_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hybrid_flowpipe_encloses_trajectories(
        lo in (14.5..17.5f64, 15.0..17.5f64).prop_map(|(a, b)| vec![a, b]),
        w in 0.0..0.4f64,
        t in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        use bas_core::hybrid::{box_flowpipe, build_hybrid_cs3, integrate, HybridParams, Interval, Mode};
        let ha = build_hybrid_cs3(&HybridParams::default()).unwrap();
        let b = [Interval::new(lo[0], lo[0] + w), Interval::new(lo[1], lo[1] + w)];
        let fp = box_flowpipe(&ha, b, Mode::Off, 90.0, 0.5).unwrap();
        let x0 = [lo[0] + t[0] * w, lo[1] + t[1] * w];
        let tr = integrate(&ha, x0, Mode::Off, 90.0, 0.01).unwrap();
        for s in tr.samples.iter().step_by(7) {
            prop_assert!(fp.contains(s.t, s.x, 1e-9), "t = {} x = {:?}", s.t, s.x);
        }
    }
}
