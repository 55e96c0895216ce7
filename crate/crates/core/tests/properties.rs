mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use gaussprobe::bayes::{apv, gaussian_prior, posterior_update, summarize, QuadratureSpec};
use gaussprobe::fisher::{fisher_information, qfi};
use gaussprobe::gaussian::{rotated_moments, squeeze_from_energy};
use gaussprobe::homodyne::outcome_params;
use gaussprobe::ProbeState;
use proptest::prelude::*;

fn probe_strategy() -> impl Strategy<Value = ProbeState> {
    (0.0..3.0f64, 0.0..7.0f64, 0.0..1.5f64, 0.0..7.0f64)
        .prop_map(|(a, tau, r, phi)| ProbeState::new(a, tau, r, phi).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_are_pure_and_rotate_covariantly(p in probe_strategy(), theta in 0.0..PI) {
        let m = rotated_moments(&p, theta);
        prop_assert!((m.det() - 0.25).abs() < 1e-9 * (2.0 * p.r()).cosh().powi(2));
        prop_assert!((m.trace() - (2.0 * p.r()).cosh()).abs() < 1e-12 * (2.0 * p.r()).cosh());
        let r = rotated_moments(&p, 0.0).rotate(-theta);
        for i in 0..2 {
            prop_assert!((m.mean[i] - r.mean[i]).abs() < 1e-12 * (1.0 + p.alpha_mag()));
            for j in 0..2 {
                prop_assert!((m.cov[i][j] - r.cov[i][j]).abs() < 1e-12 * (2.0 * p.r()).cosh());
            }
        }
    }

    #[test]
    fn homodyne_reads_the_position_marginal(p in probe_strategy(), theta in 0.0..PI) {
        let m = rotated_moments(&p, theta);
        let h = outcome_params(&p, theta);
        prop_assert!((h.mu - m.mean[0]).abs() < 1e-12 * (1.0 + p.alpha_mag()));
        prop_assert!((h.sigma2 - m.cov[0][0]).abs() < 1e-9 * m.cov[0][0].max(1e-3));
    }

    #[test]
    fn energy_split_round_trips(e in 0.01..6.0f64, frac in 0.0..1.0f64) {
        let alpha = (frac * e).sqrt();
        let r = squeeze_from_energy(e, alpha).unwrap();
        let p = ProbeState::new(alpha, 0.3, r, 0.1).unwrap();
        prop_assert!((p.energy() - e).abs() < 1e-9 * e.max(1.0));
        prop_assert!(squeeze_from_energy(e, (e * 1.01).sqrt() + 1e-6).is_err());
    }

    #[test]
    fn fisher_matches_definition_and_stays_below_qfi(p in probe_strategy(), theta in 0.0..PI) {
        let fi = fisher_information(&p, theta);
        let oracle = common::fisher_oracle(&p, theta);
        let q = qfi(&p);
        prop_assert!((fi - oracle).abs() <= 1e-6 * oracle.max(1e-3 * q.max(1.0)), "fi {} oracle {}", fi, oracle);
        prop_assert!(fi <= q * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn qfi_matches_fidelity_oracle(p in probe_strategy(), theta in 0.0..PI) {
        let q = qfi(&p);
        let oracle = common::qfi_oracle(&p, theta);
        prop_assert!((q - oracle).abs() < 1e-4 * q.max(1.0), "qfi {} oracle {}", q, oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn posteriors_are_normalized(p in probe_strategy(), q in -4.0..4.0f64, s2 in 0.01..0.2f64) {
        let prior = gaussian_prior(FRAC_PI_2, s2, 1001).unwrap();
        let post = posterior_update(&prior, &p, q).unwrap();
        prop_assert!((post.mass() - 1.0).abs() < 1e-9);
        prop_assert!(post.density().iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn apv_is_bounded_and_shift_equivariant(
        a in 0.0..2.0f64, tau in 0.0..7.0f64, r in 0.0..1.2f64, phi in 0.0..7.0f64,
        s2 in 0.005..0.05f64, shift in -0.3..0.3f64,
    ) {
        let spec = QuadratureSpec::default();
        let p = ProbeState::new(a, tau, r, phi).unwrap();
        let prior = gaussian_prior(FRAC_PI_2, s2, 2001).unwrap();
        let base = apv(&p, &prior, &spec).unwrap();
        let v0 = summarize(&prior).variance;
        prop_assert!(base.apv >= 0.0 && base.apv <= v0 * (1.0 + 1e-9));

        let moved = ProbeState::new(a, tau + shift, r, phi - 2.0 * shift).unwrap();
        let prior2 = gaussian_prior(FRAC_PI_2 + shift, s2, 2001).unwrap();
        let other = apv(&moved, &prior2, &spec).unwrap();
        prop_assert!((base.apv - other.apv).abs() < 1e-4 * base.apv, "{} vs {}", base.apv, other.apv);
    }
}

#[test]
fn apv_converges_under_grid_refinement() {
    let p = ProbeState::with_energy(2.0, 1.0, 0.0, -PI).unwrap();
    let spec = QuadratureSpec::default();
    let coarse = apv(&p, &gaussian_prior(FRAC_PI_2, 0.05, 1001).unwrap(), &spec).unwrap().apv;
    let fine = apv(&p, &gaussian_prior(FRAC_PI_2, 0.05, 4001).unwrap(), &spec).unwrap().apv;
    let finer_q = apv(
        &p,
        &gaussian_prior(FRAC_PI_2, 0.05, 4001).unwrap(),
        &QuadratureSpec { n_q: 3201, ..spec },
    )
    .unwrap()
    .apv;
    assert!((coarse - fine).abs() < 1e-6 * fine, "{coarse} {fine}");
    assert!((fine - finer_q).abs() < 1e-8 * fine, "{fine} {finer_q}");
}
