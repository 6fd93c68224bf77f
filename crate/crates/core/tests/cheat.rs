use otlab_core::cheat::*;
use otlab_core::model::{alice_label, Party};
use otlab_core::otcore::{
    cf_from_ot_protocol, qutrit_commitment_cf, qutrit_ot_with_inputs, qutrit_random_ot,
};
use otlab_core::qlin::{self, SubsystemLayout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn alice_basis_attack_values() {
    let rot = qutrit_random_ot().unwrap();
    let s = alice_basis_attack(&rot.protocol).unwrap();
    assert!((s.exact_value().unwrap() - 0.75).abs() < 1e-10);
    assert!(s.honest_abort_probability().unwrap().abs() < 1e-12);
    // Conditioned on outcome 2 the guess is a coin.
    let dist = s.distribution().unwrap();
    let (mut hit, mut all) = (0.0, 0.0);
    for ((a, b), p) in &dist.0 {
        if a.starts_with("2:") {
            all += p;
            if s.target.succeeded(Some(b), Some(a)) {
                hit += p;
            }
        }
    }
    assert!((all - 0.5).abs() < 1e-10 && (hit / all - 0.5).abs() < 1e-10);
    let ub = qutrit_ot_alice_upper_bound().unwrap();
    assert!((ub.value - 0.75).abs() < 1e-10);
}

#[test]
fn bob_superposition_attack_values() {
    let rot = qutrit_random_ot().unwrap();
    let s = bob_superposition_attack(&rot.protocol).unwrap();
    assert!((s.exact_value().unwrap() - 0.75).abs() < 1e-10);
    assert!(s.honest_abort_probability().unwrap().abs() < 1e-12);
    let ot = qutrit_ot_with_inputs().unwrap();
    for x0 in 0..2 {
        for x1 in 0..2 {
            let s = bob_superposition_attack(&ot.with_inputs(x0, x1, 0)).unwrap();
            assert!(
                (s.exact_value().unwrap() - 0.75).abs() < 1e-10,
                "({x0},{x1})"
            );
        }
    }
    let opt = optimal_discrimination(&superposition_states(), &[0.25; 4]).unwrap();
    assert!((opt.probability - 0.75).abs() < 1e-8);
    assert!(povm_violation(&opt.povm) < 1e-8);
    assert_eq!(nayak_bound(3, 4), 0.75);
}

#[test]
fn bob_parity_attack_values() {
    let rot = qutrit_random_ot().unwrap();
    let s = bob_parity_attack(&rot.protocol).unwrap();
    assert!((s.exact_value().unwrap() - 1.0).abs() < 1e-10);
    assert!((parity_attack_bit_guess().unwrap() - 0.5).abs() < 1e-10);
    let ip = parity_post_phase_state(0, 0).inner(&parity_post_phase_state(1, 0));
    assert!(ip.norm() < 1e-12);
    // The same program scored on a single bit.
    let mut bit = s.clone();
    bit.target = Target::Bit(0);
    assert!((bit.exact_value().unwrap() - 0.5).abs() < 1e-10);
}

#[test]
fn cf_attacks_reach_three_quarters() {
    let cf = qutrit_commitment_cf().unwrap();
    for coin in 0..2 {
        let bob = cf_commitment_bob_attack(&cf, coin).unwrap();
        assert!((bob.exact_value().unwrap() - 0.75).abs() < 1e-10);
        let alice = cf_commitment_alice_attack(&cf, coin, CF_ALICE_WEIGHTS).unwrap();
        assert!((alice.exact_value().unwrap() - 0.75).abs() < 1e-10);
    }
    // Honest commitment (weights 1/2, 0, 1/2 is |φ_0>) only wins when b' happens to match.
    let naive = cf_commitment_alice_attack(&cf, 0, [0.5, 0.0, 0.5]).unwrap();
    assert!((naive.exact_value().unwrap() - 0.625).abs() < 1e-10);

    let composed = cf_from_ot_protocol(&qutrit_random_ot().unwrap()).unwrap();
    for coin in 0..2 {
        let s = cf_from_ot_alice_attack(&composed, coin).unwrap();
        assert!((s.exact_value().unwrap() - 0.75).abs() < 1e-10);
    }
}

#[test]
fn honest_random_guess_is_half() {
    let rot = qutrit_random_ot().unwrap();
    let s =
        honest_guess_baseline(&rot.protocol, Party::Alice, Target::ChoiceBit, &["0", "1"]).unwrap();
    assert!((s.exact_value().unwrap() - 0.5).abs() < 1e-10);
    let labels: Vec<String> = (0..4u8).map(|i| alice_label(&[i >> 1, i & 1])).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let s = honest_guess_baseline(&rot.protocol, Party::Bob, Target::BothBits, &refs).unwrap();
    assert!((s.exact_value().unwrap() - 0.25).abs() < 1e-10);
}

#[test]
fn scripted_runs_match_exact_values() {
    let rot = qutrit_random_ot().unwrap();
    let cf = qutrit_commitment_cf().unwrap();
    let strategies = [
        alice_basis_attack(&rot.protocol).unwrap(),
        bob_superposition_attack(&rot.protocol).unwrap(),
        bob_parity_attack(&rot.protocol).unwrap(),
        cf_commitment_bob_attack(&cf, 1).unwrap(),
        cf_commitment_alice_attack(&cf, 0, CF_ALICE_WEIGHTS).unwrap(),
    ];
    for (i, s) in strategies.iter().enumerate() {
        let exact = s.exact_value().unwrap();
        let mc = s.monte_carlo(100 + i as u64, 20_000).unwrap();
        assert!(
            mc.consistent_with(exact, 3.0),
            "{}: {} vs {exact}",
            s.name,
            mc.rate
        );
    }
}

#[test]
fn helstrom_dominates_random_measurements() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let s0 = qlin::random_density(3, &mut rng);
        let s1 = qlin::random_density(3, &mut rng);
        let h = helstrom(&s0, &s1).unwrap();
        for _ in 0..500 {
            let u = qlin::haar_unitary(3, &mut rng);
            let k = rand::Rng::random_range(&mut rng, 0..=3);
            let p = qlin::diag(
                &(0..3)
                    .map(|i| if i < k { 1.0 } else { 0.0 })
                    .collect::<Vec<_>>(),
            );
            let m = &u * p * u.adjoint();
            assert!(two_outcome_success(&s0, &s1, &m) <= h.probability + 1e-9);
        }
    }
}

#[test]
fn lis_random_suite_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let (omega, meas, layout): (_, _, SubsystemLayout) =
            random_lis_instance(1, 4, &mut rng).unwrap();
        let rep = lis_compose(&omega, &meas, &layout).unwrap();
        assert!(rep.success >= rep.bound - 1e-10);
        assert!(rep.dc_norm >= rep.dc_bound - 1e-10, "{rep:?}");
        let (t, tp) = (rep.theta, rep.theta_prime);
        assert!((t + tp).cos() >= t.cos().powi(2) + tp.cos().powi(2) - 1.0 - 1e-12);
    }
}
