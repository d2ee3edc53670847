use pasvs::moments::moment_set;
use pasvs::oracle::{
    moment_set_oracle, parity_expectation_oracle, parity_signal_oracle, parity_signal_oracle_at,
};
use pasvs::parity::{classical_fisher, parity_expectation};
use pasvs::states::ProbeParams;

#[test]
fn parity_matches_oracle_on_spot_points() {
    let cases = [
        ProbeParams::new(2.0, 0.5, 2).with_loss(0.1).with_phi(0.15),
        ProbeParams::new(1.0, 1.0, 3).with_loss(0.3).with_phi(0.7),
        ProbeParams::new(0.0, 0.5, 1).with_loss(0.0).with_phi(1.4),
        ProbeParams::new(2.0, 0.0, 0).with_loss(0.3).with_phi(0.15),
    ];
    for p in cases {
        let a = parity_expectation(&p).unwrap();
        let o = parity_signal_oracle(&p).unwrap();
        assert!((a.value - o.value).abs() < 1e-8, "{p:?}: {a:?} vs {o:?}");
        assert!((a.dvalue - o.dvalue).abs() < 1e-7 * a.dvalue.abs().max(1.0), "{p:?}");
        assert!((a.ddvalue - o.ddvalue).abs() < 1e-7 * a.ddvalue.abs().max(1.0), "{p:?}");
        let v = parity_expectation_oracle(&p).unwrap();
        assert!((v - o.value).abs() < 1e-12);
    }
}

#[test]
fn fisher_matches_finite_differences_of_the_oracle() {
    let p = ProbeParams::new(2.0, 0.5, 1).with_loss(0.1).with_phi(0.15);
    let h = 1e-5;
    let at = |phi: f64| parity_expectation_oracle(&p.with_phi(phi)).unwrap();
    // Outcome probabilities are (1 +- <Pi>)/2.
    let fd = (at(0.15 + h) - at(0.15 - h)) / (2.0 * h);
    let v = at(0.15);
    let fisher_fd = fd * fd / (1.0 - v * v);
    let fisher = classical_fisher(&p).unwrap();
    assert!((fisher - fisher_fd).abs() < 1e-6 * fisher, "{fisher} vs {fisher_fd}");
}

#[test]
fn moments_match_oracle() {
    for (alpha, r, m) in [(2.0, 0.5, 2), (2.0, 0.5, 3), (1.0, 1.0, 1), (0.0, 0.5, 0)] {
        let a = moment_set(alpha, r, m).unwrap();
        let o = moment_set_oracle(&ProbeParams::new(alpha, r, m)).unwrap();
        for w in 1..=4 {
            let (x, y) = (a.get(w), o.get(w));
            assert!((x - y).abs() < 1e-8 * x.abs().max(1e-300), "{alpha} {r} {m} w={w}: {x} vs {y}");
        }
    }
}

#[test]
fn doubling_the_cutoff_changes_nothing() {
    let p = ProbeParams::new(2.0, 1.0, 3).with_loss(0.1).with_phi(0.15);
    let a = parity_signal_oracle_at(&p, 160).unwrap();
    let b = parity_signal_oracle_at(&p, 320).unwrap();
    assert!((a.value - b.value).abs() < 1e-9);
    assert!((a.dvalue - b.dvalue).abs() < 1e-9 * a.dvalue.abs().max(1.0));
}
