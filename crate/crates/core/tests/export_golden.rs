use std::path::PathBuf;

use netmaint::instance::load_instance;
use netmaint::milp::{export_model, write_lp, write_mps, ExportFormat, MilpModel, ObjSense, Sense, VarKind};
use netmaint::models::build_tdip_lb;
use netmaint::timegrid::unit_grid;
use netmaint::Rational;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, text: &str) {
    let path = root().join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, text).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, want, "{name} differs from the golden file");
}

fn small_model() -> MilpModel {
    let q = Rational::new;
    let mut m = MilpModel::new("small", ObjSense::Maximize);
    let x = m.add_nonneg("x", Some(q(7, 2)), "x").unwrap();
    let y = m.add_binary("y", "y").unwrap();
    let f = m.add_var("free var", VarKind::Continuous, None, None, "f").unwrap();
    let n = m.add_var("neg", VarKind::Continuous, Some(q(-2, 1)), Some(q(0, 1)), "f").unwrap();
    m.add_constraint("cap", [(x, q(1, 3)), (y, q(2, 1))], Sense::Le, q(5, 2));
    m.add_constraint("link", [(x, q(1, 1)), (f, q(-1, 1))], Sense::Eq, q(0, 1));
    m.add_constraint("floor", [(f, q(1, 1)), (n, q(1, 1))], Sense::Ge, q(-1, 4));
    m.set_objective([(x, q(3, 1)), (y, q(1, 7)), (n, q(1, 1))]);
    m
}

#[test]
fn small_model_lp() {
    check_golden("small.lp", &write_lp(&small_model()));
}

#[test]
fn small_model_mps() {
    check_golden("small.mps", &write_mps(&small_model()));
}

#[test]
fn fig1_lower_bound_model() {
    let inst = load_instance(root().join("../../data/fig1.json")).unwrap();
    let f = build_tdip_lb(&inst, &unit_grid(&inst).unwrap()).unwrap();
    check_golden("fig1_tdip_lb.lp", &write_lp(&f.model));
    check_golden("fig1_tdip_lb.mps", &write_mps(&f.model));
}

#[test]
fn export_model_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model();
    let lp = dir.path().join("m.lp");
    let mps = dir.path().join("m.mps");
    export_model(&m, ExportFormat::Lp, &lp).unwrap();
    export_model(&m, ExportFormat::Mps, &mps).unwrap();
    assert_eq!(std::fs::read_to_string(lp).unwrap(), write_lp(&m));
    assert_eq!(std::fs::read_to_string(mps).unwrap(), write_mps(&m));
}

#[test]
fn export_to_missing_directory_fails() {
    let m = small_model();
    assert!(export_model(&m, ExportFormat::Lp, "/nonexistent/dir/m.lp").is_err());
}
