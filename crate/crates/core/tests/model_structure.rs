use bas_core::benchmarks::{build_discrete, BenchmarkId};
use bas_core::components::{instantiate_zone, ComponentParams, ZoneLayout};
use bas_core::composer::{connect, flatten, NamedComponent, Wiring};
use bas_core::simulate::{monte_carlo, simulate_schedule, step, InputSchedule};
use nalgebra::{DMatrix, DVector};

/// Couplings above second-order fill in the identified model.
const STRUCTURAL: f64 = 1e-6;

#[test]
fn zone_component_reproduces_identified_coupling_pattern() {
    let p = ComponentParams::non_authoritative_defaults();
    let zone = instantiate_zone(&p, &ZoneLayout::two_zone()).unwrap();
    let comp = connect(
        vec![NamedComponent {
            name: "zone".into(),
            component: zone,
        }],
        Wiring::default(),
    )
    .unwrap();
    let flat = flatten(&comp).unwrap();
    let (cs2, _) = build_discrete(BenchmarkId::Cs2Full).unwrap();
    assert_eq!(flat.nx(), cs2.nx());

    let ours: Vec<String> = flat
        .states
        .names()
        .iter()
        .map(|n| n.trim_start_matches("zone.").to_string())
        .collect();
    let theirs = cs2.states.names();
    let perm: Vec<usize> = theirs
        .iter()
        .map(|n| {
            ours.iter()
                .position(|o| o == n)
                .unwrap_or_else(|| panic!("{n} missing"))
        })
        .collect();

    for (r, &pr) in perm.iter().enumerate() {
        for (c, &pc) in perm.iter().enumerate() {
            if r == c {
                continue;
            }
            let identified = cs2.a[(r, c)].abs() > STRUCTURAL;
            let structural = flat.drift_a[(pr, pc)] != 0.0;
            assert_eq!(identified, structural, "{} <- {}", theirs[r], theirs[c]);
        }
    }
}

#[test]
fn constant_input_equilibrium_is_a_fixed_point() {
    let (m, law) = build_discrete(BenchmarkId::Cs1Det).unwrap();
    let u = DVector::from_element(m.nu(), 20.0);
    let n = m.nx();
    let x_star = (DMatrix::identity(n, n) - &m.a)
        .lu()
        .solve(&(&m.b * &u + &m.q))
        .unwrap();
    let next = step(&m, &x_star, &u, &DVector::zeros(0), &DVector::zeros(n)).unwrap();
    for i in 0..n {
        assert!((next[i] - x_star[i]).abs() < 1e-9 * x_star[i].abs().max(1.0));
    }
    let tr = simulate_schedule(&m, &x_star, &InputSchedule::constant(20.0), &law, 0, 96).unwrap();
    for x in &tr.states {
        for i in 0..n {
            assert!((x[i] - x_star[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn state_perturbation_propagates_through_a_only() {
    let (m, law) = build_discrete(BenchmarkId::Cs1Det).unwrap();
    let sched = InputSchedule::named("cs1-weekday").unwrap();
    let x0 = DVector::from_vec(vec![18.0, 19.0, 33.0, 36.0]);
    let delta = DVector::from_vec(vec![0.7, -0.3, 1.1, 0.2]);
    let a = simulate_schedule(&m, &x0, &sched, &law, 0, 48).unwrap();
    let b = simulate_schedule(&m, &(&x0 + &delta), &sched, &law, 0, 48).unwrap();
    let mut expect = delta.clone();
    for k in 0..=48 {
        let diff = b.state(k) - a.state(k);
        assert!((diff - &expect).amax() < 1e-10, "step {k}");
        expect = &m.a * expect;
    }
}

#[test]
fn ensemble_mean_tracks_noise_free_trajectory() {
    let (m, law) = build_discrete(BenchmarkId::Cs1Stoch).unwrap();
    assert!(!m.is_deterministic());
    let sched = InputSchedule::named("cs1-weekday").unwrap();
    let x0 = DVector::from_vec(vec![18.0, 18.0, 35.0, 35.0]);
    let steps = 32;
    let n = 2000;
    let ctrl = |k: usize, _x: &DVector<f64>| sched.at(k, m.delta_minutes);
    let ens = monte_carlo(&m, &x0, &ctrl, &law, n, 99, steps).unwrap();

    let mut quiet = m.clone();
    quiet.sigma.fill(0.0);
    let det = simulate_schedule(&quiet, &x0, &sched, &law, 0, steps).unwrap();
    for k in 1..=steps {
        for j in 0..m.nx() {
            let se = ens.std_dev[k][j] / (n as f64).sqrt();
            assert!(se > 0.0);
            let z = (ens.mean[k][j] - det.states[k][j]) / se;
            assert!(z.abs() < 5.0, "step {k} state {j}: z = {z}");
        }
    }
    // trace 0 of the ensemble is the single seeded simulation
    let single = simulate_schedule(&m, &x0, &sched, &law, 99, steps).unwrap();
    assert_eq!(ens.traces[0].states, single.states);
}
