use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn dedent(code: &str) -> String {
    let indent = code
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    code.lines().map(|l| l.get(indent..).unwrap_or("")).collect::<Vec<_>>().join("\n")
}

fn with_module(code: &str) {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(contact_pinn_py::contact_pinn_module)(py);
        let globals = PyDict::new(py);
        globals.set_item("cp", m).unwrap();
        let src = CString::new(dedent(code)).unwrap();
        if let Err(e) = py.run(&src, Some(&globals), None) {
            e.print(py);
            panic!("python check failed");
        }
    });
}

#[test]
fn analytical_helpers_are_exposed() {
    with_module(
        r#"
        b = cp.hertz_half_width(1.0, 0.5, 200.0, 0.3)
        assert abs(b - 0.0761) < 1e-3, b
        assert cp.hertz_pressure(2 * b, 1.0, 0.5, 200.0, 0.3) == 0.0
        assert cp.fischer_burmeister(0.0, 2.0) == 0.0
        assert cp.kkt_loss("fb", [0.0, 0.3], [-1.0, 0.0]) == 0.0
        f = cp.block_analytical(0.5, 0.5, 0.1, 1.33, 0.33)
        assert f[3] == -0.1 and f[1] < 0.0
        "#,
    );
}

#[test]
fn invalid_inputs_raise_value_error() {
    with_module(
        r#"
        for bad in (lambda: cp.MaterialParams(1.0, 0.5),
                    lambda: cp.CaseConfig("cube"),
                    lambda: cp.kkt_loss("fb", [0.0], []),
                    lambda: cp.CaseConfig.from_toml("case = 'block'\nbogus = 1\n")):
            try:
                bad()
            except ValueError:
                pass
            else:
                raise AssertionError("no error")
        "#,
    );
}

#[test]
fn config_round_trips_through_json() {
    with_module(
        r#"
        c = cp.CaseConfig("hertz", "inverse")
        c.seed = 9
        c.set_kkt("sigmoid", 10.0)
        back = cp.CaseConfig.from_json(c.to_json())
        assert back.seed == 9 and back.kkt == "sigmoid"
        assert back.to_json() == c.to_json()
        "#,
    );
}

#[test]
fn short_training_run_predicts_with_hard_constraints() {
    with_module(
        r#"
        c = cp.CaseConfig("block")
        c.hidden = [8, 8]
        c.adam_epochs = 30
        c.lbfgs_max_iters = 20
        c.points = (200, 80)
        m = cp.train(c)
        rows = m.predict([[0.0, 0.4], [0.5, 1.0]])
        assert rows[0][0] == 0.0 and rows[1][3] == -0.1, rows
        assert len(m.loss_history()) >= 30
        assert m.input_width == 2 and m.n_parameters > 0
        "#,
    );
}
