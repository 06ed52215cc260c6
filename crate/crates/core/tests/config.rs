use diode_ring::params::{parse_config, parse_config_with_overrides, Mode, ParameterSet};
use std::path::Path;

fn load(name: &str) -> ParameterSet {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn shipped_configs_parse() {
    let c = load("classical.conf");
    assert_eq!(c.mode, Mode::Classical);
    assert_eq!(c.n_trajectories, 10_000);
    assert_eq!(load("classical_recoil.conf").v_rec, 0.035);

    let q = load("quantum_norecoil.conf");
    assert_eq!(q, ParameterSet::defaults(Mode::TwoLevel));
    let r = load("quantum_recoil.conf");
    assert_eq!(r, ParameterSet::recoil_defaults(Mode::TwoLevel));
    let t = load("quantum_three_level.conf");
    assert_eq!(t.mode, Mode::ThreeLevel);
    assert!((t.omega_q_hat.powi(2) / t.gamma3 - t.w_q_hat).abs() < 1e-6);
}

#[test]
fn overrides_win_and_are_validated() {
    let set = |k: &str, v: &str| (k.to_string(), v.to_string());
    let p = parse_config_with_overrides("mode = two_level\nv_rec = 0.01\n", &[set("v_rec", "0.02")]).unwrap();
    assert_eq!(p.v_rec, 0.02);
    assert!(parse_config_with_overrides("mode = two_level\n", &[set("grid_points", "3000")]).is_err());
    assert!(parse_config_with_overrides("mode = two_level\n", &[set("no_such_key", "1")]).is_err());
    assert!(parse_config("v_rec = 0.01\n").is_err());
}
