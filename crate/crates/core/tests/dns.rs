use vme_core::scenario::{build_initial_condition, build_modulus_field};
use vme_core::{
    dns_run, BoundaryConditions, DnsIntegrator, DnsProblem, InitialPulse, IntegratorConfig,
    Microstructure, RunOptions, RunResult, Scheme,
};

fn problem(n_el: usize, integrator: DnsIntegrator, cfl: f64) -> DnsProblem {
    DnsProblem {
        n_el,
        material: build_modulus_field(&Microstructure::homogeneous(), 10, n_el / 10).unwrap(),
        bc: BoundaryConditions::clamped(),
        integrator,
        cfl,
        p: IntegratorConfig::new(Scheme::EeSsm, 1.0).p,
    }
}

fn solve(p: &DnsProblem, pulse: &InitialPulse, end: f64, workers: Option<usize>) -> RunResult {
    let d0 = build_initial_condition(pulse, &p.nodes());
    let v0 = vec![0.0; d0.len()];
    let opts = RunOptions {
        end_time: end,
        output_times: vec![end],
        workers,
        land_on_outputs: true,
    };
    dns_run(p, &d0, &v0, &opts).unwrap()
}

/// Largest deviation from the split travelling pulse, relative to the amplitude.
fn oracle_error(r: &RunResult, pulse: &InitialPulse, a: f64) -> f64 {
    let s = r.snapshots.last().unwrap();
    s.nodes
        .iter()
        .zip(&s.u_total)
        .map(|(&x, &u)| {
            let exact = 0.5 * (pulse.displacement(x - s.time) + pulse.displacement(x + s.time));
            (u - exact).abs()
        })
        .fold(0.0, f64::max)
        / a
}

#[test]
fn small_pulse_splits_into_travelling_halves() {
    let a = 1e-5;
    let pulse = InitialPulse::new(a, 0.05).unwrap();
    for (integrator, cfl) in [(DnsIntegrator::Cdm, 0.9), (DnsIntegrator::SubStep, 1.0)] {
        let r = solve(&problem(800, integrator, cfl), &pulse, 0.2, None);
        let e = oracle_error(&r, &pulse, a);
        assert!(e < 1e-4, "{integrator:?}: {e:e}");
    }
}

#[test]
fn refinement_reduces_the_oracle_error() {
    let a = 1e-5;
    let pulse = InitialPulse::new(a, 0.05).unwrap();
    let errors: Vec<f64> = [200, 400, 800]
        .iter()
        .map(|&n| {
            oracle_error(
                &solve(&problem(n, DnsIntegrator::SubStep, 1.0), &pulse, 0.2, None),
                &pulse,
                a,
            )
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn central_differences_conserve_energy() {
    let pulse = InitialPulse::new(0.01, 0.05).unwrap();
    let r = solve(&problem(400, DnsIntegrator::Cdm, 0.9), &pulse, 0.3, None);
    let e0 = r.steps[1].total_energy();
    let drift = r
        .steps
        .iter()
        .skip(1)
        .map(|s| (s.total_energy() - e0).abs() / e0)
        .fold(0.0, f64::max);
    assert!(drift < 0.01, "{drift}");
}

#[test]
fn worker_count_is_bitwise_irrelevant() {
    let pulse = InitialPulse::new(0.04, 0.05).unwrap();
    let p = problem(400, DnsIntegrator::SubStep, 1.0);
    let a = solve(&p, &pulse, 0.1, Some(1));
    let b = solve(&p, &pulse, 0.1, Some(3));
    let bits = |r: &RunResult| -> Vec<u64> {
        r.snapshots
            .iter()
            .flat_map(|s| s.u_total.iter().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
}
