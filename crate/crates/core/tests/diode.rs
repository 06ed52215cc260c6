use diode_ring::diode::{scatter, working_range, DiodeError, Direction};
use diode_ring::params::{Mode, ParameterSet};

fn check_sum(r: &diode_ring::diode::ScatteringResult) {
    assert!((r.transmission + r.reflection + r.loss - 1.0).abs() < 1e-6, "{r:?}");
    assert!(r.transmission_excited <= r.transmission + 1e-12);
    assert!(r.reflection_ground <= r.reflection + 1e-12);
}

#[test]
fn slow_atoms_pass_from_the_left_and_bounce_from_the_right() {
    let p = ParameterSet::defaults(Mode::TwoLevel);
    let forward = scatter(&p, 0.05, Direction::LeftToRight).unwrap();
    check_sum(&forward);
    assert!(forward.transmission > 0.95, "{forward:?}");
    assert!(forward.transmission_excited > 0.95, "{forward:?}");
    let backward = scatter(&p, 0.05, Direction::RightToLeft).unwrap();
    check_sum(&backward);
    assert!(backward.reflection > 0.95, "{backward:?}");
    assert!(backward.qualifies() && forward.qualifies());
}

#[test]
fn without_pump_the_ground_mirror_blocks_both_ways() {
    let mut p = ParameterSet::defaults(Mode::TwoLevel);
    p.omega_p_hat = 0.0;
    let r = scatter(&p, 0.05, Direction::LeftToRight).unwrap();
    check_sum(&r);
    assert!(r.transmission < 1e-3, "{r:?}");
    assert!(r.reflection_ground > 0.999, "{r:?}");
}

#[test]
fn fast_atoms_cross_the_ground_mirror() {
    // Far above sqrt(ħŴ₁/m) ≈ 11 cm/s.
    let p = ParameterSet::defaults(Mode::TwoLevel);
    let r = scatter(&p, 0.2, Direction::RightToLeft).unwrap();
    check_sum(&r);
    assert!(r.transmission > 0.9, "{r:?}");
    assert!(!r.qualifies());
}

#[test]
fn bad_inputs() {
    let p = ParameterSet::defaults(Mode::TwoLevel);
    assert_eq!(working_range(&p, &[]).unwrap_err(), DiodeError::EmptyGrid);
    assert!(matches!(scatter(&p, -0.01, Direction::LeftToRight), Err(DiodeError::BadSpeed(_))));
    // Nothing qualifies well above the working range.
    assert_eq!(working_range(&p, &[-0.2]).unwrap_err(), DiodeError::NothingQualifies);
}
