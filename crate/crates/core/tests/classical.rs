use diode_ring::classical::{
    analytic_crossings, analytic_total_time, evolve_particle, run_classical_ensemble, ClassicalParticle,
};
use diode_ring::mcwf::trajectory_rng;
use diode_ring::params::{Mode, ParameterSet, SubtractionRule};
use proptest::prelude::*;

fn toy(rule: SubtractionRule) -> ParameterSet {
    let mut p = ParameterSet::defaults(Mode::Classical);
    p.v_rec = 0.0;
    p.subtraction_rule = rule;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn event_driven_matches_closed_form(v in 0.002f64..0.3, x in -200e-6f64..200e-6) {
        let p = toy(SubtractionRule::Velocity);
        let n = analytic_crossings(v, p.v_trap_classical).unwrap();
        // Skip speeds that land within float noise of a multiple of v_T.
        let frac = v / p.v_trap_classical;
        prop_assume!((frac - frac.round()).abs() > 1e-9);
        let total = analytic_total_time(v, x, &p).unwrap().total();
        let mut rng = trajectory_rng(0, 0);
        let end = evolve_particle(ClassicalParticle::new(x, v), &p, 1e3, &mut rng);
        prop_assert!(end.trapped);
        prop_assert_eq!(end.escapes(), n);
        let t = end.trap_time.unwrap();
        prop_assert!((t - total).abs() <= 1e-9 * total, "{} vs {}", t, total);
    }

    #[test]
    fn energy_rule_escape_count(v in 0.002f64..0.3) {
        let p = toy(SubtractionRule::Energy);
        let vt = p.v_trap_classical;
        let ratio = (v / vt).powi(2);
        prop_assume!((ratio - ratio.round()).abs() > 1e-6);
        let mut rng = trajectory_rng(0, 0);
        let end = evolve_particle(ClassicalParticle::new(p.x_d - 1e-6, v), &p, 1e3, &mut rng);
        // v² − n·v_T² < v_T² first holds at n = floor(v²/v_T²).
        prop_assert_eq!(end.escapes(), ratio.floor() as u32);
    }

    #[test]
    fn negative_velocity_is_reflected_not_trapped(v in 0.02f64..0.3) {
        let p = toy(SubtractionRule::Energy);
        let mut rng = trajectory_rng(0, 0);
        // Short horizon: only the first arrival, anticlockwise.
        let d = (p.x0 - p.x_d).rem_euclid(p.ring_length);
        let end = evolve_particle(ClassicalParticle::new(p.x0, -v), &p, 1.01 * d / v, &mut rng);
        prop_assert!(!end.trapped);
        prop_assert_eq!(end.crossings, 0);
        prop_assert!(end.v > 0.0);
    }

    #[test]
    fn ensemble_curve_is_a_cdf(seed in any::<u64>(), v_rec in 0.0f64..0.05) {
        let mut p = ParameterSet::defaults(Mode::Classical);
        p.n_trajectories = 300;
        p.t_final = 0.1;
        p.rng_seed = seed;
        p.v_rec = v_rec;
        let r = run_classical_ensemble(&p);
        prop_assert_eq!(r.times.len(), r.trapping_probability.len());
        prop_assert!(r.trapping_probability.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.trapping_probability.iter().all(|&q| (0.0..=1.0).contains(&q)));
        let trapped = r.records.iter().filter(|x| x.trap_time.is_some()).count() as f64;
        let last = *r.trapping_probability.last().unwrap();
        prop_assert!((last - trapped / 300.0).abs() < 1e-12);
    }
}

#[test]
fn recoil_changes_the_curve_but_not_its_range() {
    let mut p = ParameterSet::defaults(Mode::Classical);
    p.n_trajectories = 2000;
    let a = run_classical_ensemble(&p);
    p.v_rec = 0.035;
    let b = run_classical_ensemble(&p);
    assert_ne!(a.trapping_probability, b.trapping_probability);
    // Recoil speeds up early trapping.
    let i = (0.03 / p.sample_interval).round() as usize;
    assert!(b.trapping_probability[i] > a.trapping_probability[i]);
}
