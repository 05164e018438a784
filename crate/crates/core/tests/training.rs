use contact_pinn::benchmarks::{block_analytical, run_case, Case, CaseConfig, CaseRun, Mode, Preset};
use contact_pinn::elasticity::{ExperimentalData, Observation};

fn small(case: Case, mode: Mode) -> CaseConfig {
    let mut cfg = CaseConfig::defaults(case, mode, Preset::Desk);
    cfg.hidden = vec![20; 3];
    cfg.adam.epochs = 500;
    cfg.lbfgs.max_iters = 1500;
    cfg
}

fn run(cfg: &CaseConfig, data: Option<&ExperimentalData>) -> CaseRun {
    run_case(cfg, data, &mut |_, _| Ok(())).unwrap()
}

/// Analytical block displacements on a regular grid.
fn block_data(cfg: &CaseConfig, n: usize) -> ExperimentalData {
    let l = cfg.geometry.length;
    let mut observations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (l * (i as f64 + 0.5) / n as f64, l * (j as f64 + 0.5) / n as f64);
            let f = block_analytical(x, y, cfg.pressure, cfg.young, cfg.poisson);
            observations.push(Observation {
                input: vec![x, y],
                fields: [Some(f[0]), Some(f[1]), None, None, None],
            });
        }
    }
    ExperimentalData { observations }
}

#[test]
fn lame_loss_drops_by_four_orders() {
    let r = run(&small(Case::Lame, Mode::Forward), None);
    let first = r.records.first().unwrap().loss.total;
    let last = r.report.final_loss.total;
    assert!(last < 1e-4 * first, "{first} -> {last}");
    assert!(r.report.l2_vector.as_ref().unwrap().u < 0.01);
}

#[test]
fn block_oracle_data_does_not_degrade_displacements() {
    let fwd = small(Case::Block, Mode::Forward);
    let mut enh = small(Case::Block, Mode::DataEnhanced);
    enh.kkt = fwd.kkt;
    let data = block_data(&enh, 10);
    let e_fwd = run(&fwd, None).report.l2_vector.unwrap().u;
    let r = run(&enh, Some(&data));
    let e_enh = r.report.l2_vector.unwrap().u;
    assert!(r.report.final_loss.exp >= 0.0);
    assert!(e_enh <= 1.1 * e_fwd, "forward {e_fwd}, with data {e_enh}");
}

#[test]
fn block_inverse_recovers_the_load() {
    let mut cfg = small(Case::Block, Mode::Inverse);
    cfg.initial_guess = 0.5;
    let data = block_data(&cfg, 10);
    let r = run(&cfg, Some(&data));
    let p = r.report.identified["p"];
    assert!((p - cfg.pressure).abs() <= 0.05 * cfg.pressure, "identified {p}, true {}", cfg.pressure);
    let history: Vec<f64> = r.records.iter().map(|rec| rec.parameters["p"]).collect();
    assert_eq!(history[0], 0.5);
    assert!(r.records.iter().all(|rec| rec.loss.total.is_finite()));
}

#[test]
fn training_failures_surface_as_non_finite_errors() {
    let mut cfg = small(Case::Lame, Mode::Forward);
    cfg.adam.lr = 1e200;
    cfg.adam.epochs = 50;
    cfg.lbfgs.max_iters = 10;
    let err = run_case(&cfg, None, &mut |_, _| Ok(())).map(|_| ()).unwrap_err();
    assert!(matches!(err, contact_pinn::Error::NonFinite(_)), "{err}");
}
