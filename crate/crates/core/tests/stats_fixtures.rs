use retstat::interval::IntervalSet;
use retstat::maps::builtin;
use retstat::measures::invariant_mass;
use retstat::shift::{cylinder_hitting_law, cylinder_word, empirical_atoms, sup_distance};
use retstat::stats::{chebyshev_check, edf, sample_hitting_times, sample_return_times, short_return, EdfReport};

const Z: f64 = std::f64::consts::FRAC_1_SQRT_2;
const N_MAX: u64 = 10_000_000;

fn normalized_mean_ok(rep: &EdfReport) -> bool {
    (rep.mean() - 1.0).abs() <= 5.0 / (rep.n_effective as f64).sqrt()
}

#[test]
fn doubling_ball_returns_and_hits() {
    let d = builtin("doubling", &[]).unwrap();
    let u = IntervalSet::ball(Z, 2f64.powi(-10)).unwrap();
    let mu = invariant_mass(&d, &u, 20_000_000, d.default_burn_in(), 5).unwrap();
    // Lebesgue is invariant, so the estimate must agree with the length
    assert!((mu.mass - u.total_length()).abs() <= 4.0 * mu.stderr, "{mu:?}");

    let returns = edf(&sample_return_times(&d, &u, mu.mass, 20_000, N_MAX, 5).unwrap()).unwrap();
    let hits = edf(&sample_hitting_times(&d, &u, mu.mass, 20_000, N_MAX, 5).unwrap()).unwrap();
    for rep in [&returns, &hits] {
        assert_eq!(rep.n_effective, 20_000);
        assert!(rep.ks_distance <= 0.05, "ks {}", rep.ks_distance);
        assert!(normalized_mean_ok(rep), "mean {}", rep.mean());
        assert!(chebyshev_check(rep).ok);
    }
    let gap = sup_distance(&empirical_atoms(&returns.times), &empirical_atoms(&hits.times));
    assert!(gap <= 0.1, "{gap}");
}

#[test]
fn cylinder_hitting_times_match_exact_law() {
    let d = builtin("doubling", &[]).unwrap();
    let u = IntervalSet::dyadic_cylinder(Z, 10).unwrap();
    let hits = edf(&sample_hitting_times(&d, &u, u.total_length(), 20_000, N_MAX, 8).unwrap()).unwrap();
    let exact = cylinder_hitting_law(&cylinder_word(Z, 10).unwrap(), 1e-12, 1 << 20);
    let gap = sup_distance(&empirical_atoms(&hits.times), &exact.normalized_atoms());
    assert!(gap <= 0.03, "{gap}");
}

#[test]
fn lsv_returns_are_kac_normalized() {
    let m = builtin("lsv_alpha", &[0.5]).unwrap();
    let u = IntervalSet::ball(0.7, 1e-3).unwrap();
    let mu = invariant_mass(&m, &u, 40_000_000, m.default_burn_in(), 2).unwrap();
    let rep = edf(&sample_return_times(&m, &u, mu.mass, 20_000, N_MAX, 2).unwrap()).unwrap();
    assert!(rep.ks_distance <= 0.08, "ks {}", rep.ks_distance);
    // the mass estimate carries its own error into the normalization
    let slack = 5.0 / (rep.n_effective as f64).sqrt() + 3.0 * mu.stderr / mu.mass;
    assert!((rep.mean() - 1.0).abs() <= slack, "mean {}", rep.mean());
}

#[test]
fn fixed_point_depresses_the_law() {
    let tent = builtin("tent", &[]).unwrap();
    let u = IntervalSet::ball(2.0 / 3.0, 1e-3).unwrap();
    let mu = u.total_length();
    let tau = short_return(&tent, &u, 1_000, 64).unwrap();
    assert_eq!(tau, 1);
    let rep = edf(&sample_return_times(&tent, &u, mu, 20_000, N_MAX, 4).unwrap()).unwrap();
    let t = tau as f64 * mu;
    let s = rep.survival_at(t);
    let noise = (s * (1.0 - s) / rep.n_effective as f64).sqrt().max(1.0 / rep.n_effective as f64);
    assert!((-t).exp() - s > 3.0 * noise, "survival {s} at {t}");
    // half the ball maps back into itself in one step
    assert!((s - 0.5).abs() < 0.02, "{s}");
}
