use graphclip::theory::{
    alignment_loss_mc, risk_mc, verify_proposition, verify_theorem_bound, LinearRep, TheoremConfig, ToyDomain,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn proposition_values_at_zeta_0_04() {
    let r = verify_proposition(0.04, 1_000_000, 0).unwrap();
    assert!((r.t - 0.1).abs() < 1e-15);
    assert!((r.alignment.mean - 0.02).abs() <= 0.001, "{}", r.to_text());
    assert!((r.gap - 0.25).abs() <= 0.005, "{}", r.to_text());
    assert!(r.pass);
}

#[test]
fn proposition_holds_across_zeta() {
    assert!(verify_proposition(1.0, 200_000, 3).unwrap().pass);
    assert!(verify_proposition(1e-4, 400_000, 4).unwrap().pass);
}

#[test]
fn alignment_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..20 {
        let t: f64 = rng.random_range(0.01..1.0);
        let e = alignment_loss_mc(LinearRep::new(t).unwrap(), 100_000, i).unwrap();
        assert!((e.mean - 2.0 * t * t).abs() <= 3.0 * e.se + 1e-3 * 2.0 * t * t, "t={t}: {e:?}");
    }
}

#[test]
fn risk_on_rotated_domain_is_one_quarter() {
    let rep = LinearRep::new(0.2).unwrap();
    let r = risk_mc(rep, ToyDomain { m: 5.0 }, 1_000_000, 7).unwrap();
    assert!((r.mean - 0.25).abs() <= 0.005);
}

#[test]
fn theorem_grid_has_no_violations() {
    let r = verify_theorem_bound(&TheoremConfig::default()).unwrap();
    assert_eq!(r.points.len(), 25);
    assert!(r.passed(), "{}", r.to_text());
    for p in r.points.iter().filter(|p| p.t == 0.0) {
        assert_eq!(p.lhs, 0.0);
    }
}
