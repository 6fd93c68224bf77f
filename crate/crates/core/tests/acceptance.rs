//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, SQRT_2};
use std::time::{Duration, Instant};

use otlab_core::bounds::{
    epsilon_report, f, g, kitaev_product_check, ot_lower_bound_epsilon_bisection, required_delta,
};
use otlab_core::cheat::{
    alice_basis_attack, bob_parity_attack, bob_superposition_attack, lis_compose, nayak_bound,
    optimal_discrimination, purification_equivalence_check, qutrit_ot_alice_upper_bound,
    random_entangled_strategy, random_lis_instance, superposition_states, Strategy,
};
use otlab_core::fot::{fot_bound_vs_lower_c, fot_cheat_bounds, fot_cheat_bounds_c};
use otlab_core::fot::{CfPrimitive, FotAdversary};
use otlab_core::model::{bob_label, compile_with_deferred_measurement, Party};
use otlab_core::otcore::{
    derandomize, exact_distribution, qutrit_commitment_cf, qutrit_ot_run, qutrit_ot_with_inputs,
    qutrit_random_ot, McEstimate, RandomOtSample,
};
use otlab_core::qlin::{haar_state, projector_span, ComplexVector, PureState, C64};
use otlab_core::sdp::{
    brute_force_cheat, build_cheating_sdp, solve_sdp, verify_dual_certificate, BruteForceOptions,
    SolverOptions,
};
use otlab_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MC_TRIALS: u64 = 100_000;
const SIGMAS: f64 = 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

struct Criterion {
    id: u8,
    name: &'static str,
    tolerance: &'static str,
    limit: Duration,
    check: fn() -> Result<Outcome>,
}

fn c1_honest_qutrit_ot() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ot = qutrit_ot_with_inputs()?;
    let mut worst: f64 = 0.0;
    for i in 0..8u8 {
        let (b, x0, x1) = (i >> 2, (i >> 1) & 1, i & 1);
        let x_b = [x0, x1][b as usize];
        let (o, t) = qutrit_ot_run(b, x0, x1, &mut rng)?;
        worst = worst
            .max((t.probabilities[x_b as usize] - 1.0).abs())
            .max(t.probabilities[2]);
        if o.bob_out != Some([b, x_b]) {
            return outcome(false, format!("input {b}{x0}{x1}: bob got {:?}", o.bob_out));
        }
        // The same run through the interactive simulator.
        let dist = exact_distribution(&ot.with_inputs(x0, x1, b))?;
        let good: f64 = dist
            .0
            .iter()
            .filter(|((_, bob), _)| *bob == bob_label(&[b as usize], &[x_b]))
            .map(|(_, p)| p)
            .sum();
        worst = worst.max((good - 1.0).abs());
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.1e}"))
}

fn c2_alice_ot() -> Result<Outcome> {
    let s = alice_basis_attack(&qutrit_random_ot()?.protocol)?;
    let value = s.exact_value()?;
    let abort = s.honest_abort_probability()?;
    let helstrom = qutrit_ot_alice_upper_bound()?.value;
    outcome(
        (value - 0.75).abs() <= 1e-10 && (helstrom - 0.75).abs() <= 1e-10 && abort <= 1e-10,
        format!("attack {value:.12}, Helstrom {helstrom:.12}, Bob abort {abort:.1e}"),
    )
}

fn c3_bob_ot() -> Result<Outcome> {
    let rot = qutrit_random_ot()?;
    let value = bob_superposition_attack(&rot.protocol)?.exact_value()?;
    let sdp = optimal_discrimination(&superposition_states(), &[0.25; 4])?.probability;
    let nayak = nayak_bound(3, 4);
    let parity = bob_parity_attack(&rot.protocol)?.exact_value()?;
    outcome(
        (value - 0.75).abs() <= 1e-10
            && (sdp - 0.75).abs() <= 1e-6
            && nayak == 0.75
            && (parity - 1.0).abs() <= 1e-10,
        format!("attack {value:.12}, SDP {sdp:.9}, Nayak {nayak}, parity {parity:.12}"),
    )
}

fn c4_purification() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (alpha, enc) = random_entangled_strategy(2 + i % 4, &mut rng);
        let c = purification_equivalence_check(&alpha, &enc)?;
        worst = worst
            .max((c.prob_entangled - c.prob_purified).abs())
            .max(c.gram_difference);
    }
    outcome(
        worst <= 1e-10,
        format!("100 strategies, max gap {worst:.1e}"),
    )
}

fn c5_epsilon() -> Result<Outcome> {
    let e = epsilon_report();
    let root = ot_lower_bound_epsilon_bisection();
    let mut worst: f64 = 0.0;
    for i in 0..=10_000 {
        let x = 0.5 + 0.5 * i as f64 / 10_000.0;
        worst = worst.max((f(g(x)?)? - x).abs());
    }
    outcome(
        (e.closed_form - 0.0586).abs() <= 5e-5
            && (root - 0.0586).abs() <= 5e-5
            && e.difference <= 1e-9
            && worst <= 1e-9,
        format!(
            "closed {:.10}, bisection {root:.10}, |diff| {:.1e}, f(g(x)) err {worst:.1e}",
            e.closed_form, e.difference
        ),
    )
}

/// Unit vector orthogonal to `v`.
fn perpendicular(v: &ComplexVector, rng: &mut ChaCha8Rng) -> ComplexVector {
    loop {
        let w = haar_state(v.len(), rng).into_amplitudes();
        let p = &w - v * v.dotc(&w);
        if p.norm() > 1e-6 {
            return p.normalize();
        }
    }
}

fn c6_learning_in_sequence() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut sequential, mut dc, mut cosine) = (f64::MAX, f64::MAX, f64::MAX);
    for _ in 0..1000 {
        let (omega, meas, layout) = random_lis_instance(1, 4, &mut rng)?;
        let r = lis_compose(&omega, &meas, &layout)?;
        sequential = sequential.min(r.success - r.bound);
        dc = dc.min(r.dc_norm - r.dc_bound);
        let (t, tp) = (r.theta, r.theta_prime);
        cosine = cosine.min((t + tp).cos() - (t.cos().powi(2) + tp.cos().powi(2) - 1.0));
    }
    let (mut proj, mut angle) = (f64::MAX, f64::MAX);
    for i in 0..1000 {
        let d = 2 + i % 5;
        let (x, y) = (haar_state(d, &mut rng), haar_state(d, &mut rng));
        let mut span = vec![y.clone()];
        span.extend((0..i % d).map(|_| haar_state(d, &mut rng)));
        let q = projector_span(&span)?;
        proj = proj.min((&q * x.amplitudes()).norm_squared() - x.inner(&y).norm_sqr());

        let (t, tp) = (
            rng.random_range(0.0..=FRAC_PI_4),
            rng.random_range(0.0..=FRAC_PI_4),
        );
        let phi = haar_state(d, &mut rng).into_amplitudes();
        let rot = |angle: f64, w: ComplexVector| {
            PureState::normalized(&phi * C64::from(angle.cos()) + w * C64::from(angle.sin()))
        };
        let psi = rot(t, perpendicular(&phi, &mut rng))?;
        let xi = rot(tp, perpendicular(&phi, &mut rng))?;
        angle = angle.min(psi.inner(&xi).norm() - (t + tp).cos());
    }
    let n = 200;
    for i in 0..n {
        for j in 0..n {
            let (t, p) = (
                FRAC_PI_4 * i as f64 / (n - 1) as f64,
                FRAC_PI_4 * j as f64 / (n - 1) as f64,
            );
            cosine = cosine.min((t + p).cos() - (t.cos().powi(2) + p.cos().powi(2) - 1.0));
        }
    }
    let worst = sequential.min(dc).min(proj).min(angle).min(cosine);
    outcome(
        worst >= -1e-10,
        format!(
            "min slack: sequential {sequential:.1e}, dc {dc:.1e}, projection {proj:.1e}, angle {angle:.1e}, cosine {cosine:.1e}"
        ),
    )
}

fn c7_sdp_sandwich() -> Result<Outcome> {
    let spec = compile_with_deferred_measurement(&qutrit_commitment_cf()?)?;
    let mut duals = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for (party, target) in [
        (Party::Alice, bob_label(&[0], &[0])),
        (Party::Bob, "0".to_string()),
    ] {
        let problem = build_cheating_sdp(&spec, party, &target)?;
        let sol = solve_sdp(&problem, SolverOptions::default())?;
        let cert = verify_dual_certificate(&problem, &sol);
        let bf = brute_force_cheat(
            &spec,
            party,
            &target,
            BruteForceOptions {
                restarts: 4,
                ..Default::default()
            },
        )?;
        pass &= cert.pass
            && bf.value <= sol.primal_value + 1e-6
            && sol.primal_value <= sol.dual_value + 1e-6
            && [bf.value, sol.primal_value, sol.dual_value]
                .iter()
                .all(|v| (v - 0.75).abs() <= 2e-3);
        parts.push(format!(
            "{party}: oracle {:.6} <= primal {:.6} <= dual {:.6}",
            bf.value, sol.primal_value, sol.dual_value
        ));
        duals.push(sol.dual_value);
    }
    let k = kitaev_product_check(duals[0], duals[1]);
    pass &= k.pass && (k.margin - 1.0 / 16.0).abs() <= 2e-3;
    parts.push(format!("Kitaev margin {:.6}", k.margin));
    outcome(pass, parts.join("; "))
}

fn mc_within(estimate: &McEstimate, bound: f64) -> bool {
    let sigma =
        (bound.clamp(0.0, 1.0) * (1.0 - bound.clamp(0.0, 1.0)) / estimate.trials as f64).sqrt();
    estimate.rate <= bound + SIGMAS * sigma + 1e-12
}

fn c8_forcing_ot() -> Result<Outcome> {
    let mut pass = true;
    let mut worst_b: f64 = 0.0;
    for gamma in [1e-6, 0.01] {
        let c = FRAC_1_SQRT_2 + required_delta(1, gamma) / 2.0;
        let b = fot_cheat_bounds_c(2, 1, c)?.b_max;
        worst_b = worst_b.max((b - (1.0 + gamma) / 8f64.sqrt()).abs());
    }
    pass &= worst_b <= 1e-12;
    let mut worst_bias: f64 = 0.0;
    for k in 1..=6 {
        let r = fot_bound_vs_lower_c(6, k, FRAC_1_SQRT_2)?;
        worst_bias = worst_bias.max((r.bias - SQRT_2.powi(k as i32)).abs());
    }
    pass &= worst_bias <= 1e-12;
    let mut mc = Vec::new();
    let runs: [(usize, usize, CfPrimitive); 2] = [
        (2, 1, CfPrimitive::qutrit_commitment()?),
        (3, 2, CfPrimitive::ideal(0.8)?),
    ];
    for (i, (n, k, cf)) in runs.iter().enumerate() {
        let (n, k) = (*n, *k);
        let bounds = fot_cheat_bounds(n, k, cf)?;
        let alice = FotAdversary::alice(cf, (0..k).collect(), vec![0; k])?;
        let bob = FotAdversary::bob(cf, vec![1; n])?;
        for (adv, bound) in [(alice, bounds.a_max), (bob, bounds.b_max)] {
            let est = adv.monte_carlo(n, k, cf, 80 + i as u64, MC_TRIALS)?;
            pass &= mc_within(&est, bound);
            mc.push(format!("{:.4}/{bound:.4}", est.rate));
        }
    }
    outcome(
        pass,
        format!(
            "B_max err {worst_b:.1e}, bias err {worst_bias:.1e}, MC rate/bound {}",
            mc.join(" ")
        ),
    )
}

fn wrapped_rates(s: &Strategy, seed: u64) -> Result<(McEstimate, McEstimate, u64)> {
    let (mut inner, mut wrapped, mut mismatched) = (0, 0, 0);
    for t in 0..MC_TRIALS {
        let (i, w) = s.wrapped_trial(&mut otlab_core::otcore::trial_rng(seed, t))?;
        inner += i as u64;
        wrapped += w as u64;
        mismatched += (i != w) as u64;
    }
    Ok((
        McEstimate::new(inner, MC_TRIALS),
        McEstimate::new(wrapped, MC_TRIALS),
        mismatched,
    ))
}

fn c9_reductions() -> Result<Outcome> {
    let mut failures = 0;
    for big in 0..8u8 {
        let (x_in, b_in) = ([big & 1, (big >> 1) & 1], big >> 2);
        for inner in 0..8u8 {
            let (x, b) = ([inner & 1, (inner >> 1) & 1], inner >> 2);
            let d = derandomize(
                RandomOtSample {
                    x: Some(x),
                    bob: Some([b, x[b as usize]]),
                },
                x_in,
                b_in,
            );
            failures += (d.outcome.bob_out != Some([b_in, x_in[b_in as usize]])) as u32;
        }
    }
    let rot = qutrit_random_ot()?;
    let mut pass = failures == 0;
    let mut parts = vec![format!("64 exhaustive cases, {failures} failures")];
    for (i, s) in [
        alice_basis_attack(&rot.protocol)?,
        bob_superposition_attack(&rot.protocol)?,
    ]
    .iter()
    .enumerate()
    {
        let exact = s.exact_value()?;
        let (inner, wrapped, mismatched) = wrapped_rates(s, 90 + i as u64)?;
        pass &= inner.consistent_with(exact, SIGMAS) && wrapped.consistent_with(exact, SIGMAS);
        parts.push(format!(
            "{}: inner {:.4}, wrapped {:.4}, exact {exact:.4}, {mismatched} mismatched trials",
            s.party, inner.rate, wrapped.rate
        ));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "qutrit OT honest correctness",
            tolerance: "1e-10",
            limit: Duration::from_secs(1),
            check: c1_honest_qutrit_ot,
        },
        Criterion {
            id: 2,
            name: "Alice cheats OT with 3/4",
            tolerance: "1e-10",
            limit: Duration::from_secs(1),
            check: c2_alice_ot,
        },
        Criterion {
            id: 3,
            name: "Bob cheats OT with 3/4",
            tolerance: "1e-10 exact, 1e-6 SDP",
            limit: Duration::from_secs(10),
            check: c3_bob_ot,
        },
        Criterion {
            id: 4,
            name: "purified Bob strategies",
            tolerance: "1e-10",
            limit: Duration::from_secs(10),
            check: c4_purification,
        },
        Criterion {
            id: 5,
            name: "OT bias lower bound epsilon",
            tolerance: "5e-5 value, 1e-9 agreement",
            limit: Duration::from_secs(1),
            check: c5_epsilon,
        },
        Criterion {
            id: 6,
            name: "learning in sequence",
            tolerance: "1e-10",
            limit: Duration::from_secs(60),
            check: c6_learning_in_sequence,
        },
        Criterion {
            id: 7,
            name: "commitment CF SDP sandwich",
            tolerance: "2e-3",
            limit: Duration::from_secs(300),
            check: c7_sdp_sandwich,
        },
        Criterion {
            id: 8,
            name: "forcing OT bounds",
            tolerance: "1e-12, MC 3 sigma",
            limit: Duration::from_secs(120),
            check: c8_forcing_ot,
        },
        Criterion {
            id: 9,
            name: "reduction equivalences",
            tolerance: "exact, MC 3 sigma",
            limit: Duration::from_secs(120),
            check: c9_reductions,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.check)();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= c.limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as u32;
        println!(
            "criterion {} {:<30} {}  tol {:<26} {:>8.3}s (limit {}s)  {}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            c.tolerance,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() as u32 - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
