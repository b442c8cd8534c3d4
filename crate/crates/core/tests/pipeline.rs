use qdos_core::analysis::{build_certificate, check_lemma3_decay, estimate_roa, grid_points, CertificateConfig};
use qdos_core::dos::{generate_constrained, DoSParams, DoSSchedule, Strategy};
use qdos_core::numerics::{matrix_from_rows, InfNorm, Vector};
use qdos_core::plant::{lienard_plant, PlantSpec};
use qdos_core::simloop::{run_closed_loop, write_trace_csv, SimConfig, SimStatus};

fn lienard_cfg(x0: [f64; 2], e0: f64, steps: usize) -> SimConfig {
    let k = matrix_from_rows(&[vec![-1.81, -1.90]]).unwrap();
    SimConfig::new(
        lienard_plant(1.0 / 3.0, 1.0 / 50.0),
        k,
        0.1,
        6,
        e0,
        Vector::from_column_slice(&x0),
        steps,
    )
}

#[test]
fn schedule_survives_csv_round_trip_into_simulation() {
    let p = DoSParams::new(1.0, 0.3, 0.4, 0.2).unwrap();
    let sched = generate_constrained(&p, 0.1, 20.0, Strategy::Random, 11).unwrap();
    let mut buf = Vec::new();
    sched.write_csv(&mut buf).unwrap();
    let back = DoSSchedule::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, sched);

    let a = run_closed_loop(&lienard_cfg([0.1, 0.1], 0.15, 200).with_schedule(sched, p)).unwrap();
    let b = run_closed_loop(&lienard_cfg([0.1, 0.1], 0.15, 200).with_schedule(back, p)).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_trace_csv(&a, 2, 1, &mut ca).unwrap();
    write_trace_csv(&b, 2, 1, &mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn certified_run_from_spec_plant() {
    let spec: PlantSpec = serde_json::from_str(r#"{"kind": "lienard"}"#).unwrap();
    let plant = spec.build().unwrap();
    let p = DoSParams::new(1.0, 0.02, 0.1, 0.005).unwrap();
    let k = matrix_from_rows(&[vec![-1.81, -1.90]]).unwrap();
    let cert = build_certificate(&plant, &CertificateConfig::new(0.1, 6, k.clone(), p)).unwrap();
    assert!(cert.verdicts.theorem1.pass);
    let e0 = 0.5 * cert.verdicts.theorem2_e0_bound.unwrap();

    let sched = generate_constrained(&p, 0.1, 3.0, Strategy::FrontLoaded, 0).unwrap();
    let cfg = SimConfig::new(
        plant,
        k,
        0.1,
        6,
        e0,
        Vector::from_column_slice(&[0.6 * e0, -0.3 * e0]),
        30,
    )
    .with_schedule(sched, p);
    let trace = run_closed_loop(&cfg).unwrap();
    assert_eq!(trace.status, SimStatus::Completed);
    assert!(trace.records[0].theta == 1, "front-loaded attack hits the first sample");
    let report = check_lemma3_decay(&trace, &cert);
    assert!(report.pass, "{report:?}");
    assert!(trace.records.last().unwrap().x.inf_norm() < trace.records[0].x.inf_norm());
}

#[test]
fn attack_free_region_contains_small_states_only() {
    let template = lienard_cfg([0.0, 0.0], 0.0, 200);
    let grid = grid_points(&[vec![0.0, 0.2, 3.0], vec![0.0, 0.2]]);
    let roa = estimate_roa(&template, &grid, 1e-2, 20).unwrap();
    let at = |x1: f64, x2: f64| roa.iter().find(|p| p.x0 == [x1, x2]).unwrap();
    assert!(at(0.0, 0.0).converged);
    assert!(at(0.2, 0.2).converged);
    assert!(!at(3.0, 0.0).converged);
}
