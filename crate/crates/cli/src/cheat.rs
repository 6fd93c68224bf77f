//! `otlab cheat`: scripted attacks, SDP optima and their certificates.

use clap::Args;
use otlab_core::bounds::binomial;
use otlab_core::cheat::{
    alice_basis_attack, bob_parity_attack, bob_superposition_attack, cf_commitment_alice_attack,
    cf_commitment_bob_attack, cf_from_ot_alice_attack, qutrit_ot_alice_upper_bound,
    qutrit_ot_bob_upper_bound, Certificate, CheatReport, LowerBound, Strategy, Target, UpperBound,
    CF_ALICE_WEIGHTS,
};
use otlab_core::fot::{fot_cheat_bounds, CfPrimitive, FotAdversary};
use otlab_core::model::{
    alice_label, bob_label, compile_with_deferred_measurement, Party, ProtocolSpec,
};
use otlab_core::otcore::{qutrit_random_ot, McEstimate};
use serde_json::{json, Value};

use crate::data::{builtin, load_spec};
use crate::sdp::{oracle, solve_party, target_for};
use crate::{par_successes, CliError, CliResult, Global, PartyArg};

/// Monte-Carlo agreement is judged at this many standard errors.
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Args)]
pub struct CheatArgs {
    /// qutrit-ot, cf-from-ot, qutrit-commitment-cf, announce-coin, fot, or a
    /// protocol spec (file or bundled name).
    pub protocol: String,
    #[arg(long, value_enum)]
    pub party: PartyArg,
    /// qutrit-ot: basis (Alice), superposition or parity (Bob).
    /// cf-from-ot: ot-basis (Alice). qutrit-commitment-cf: commitment (Alice),
    /// helstrom (Bob). Any compiled protocol: optimal.
    #[arg(long)]
    pub attack: Option<String>,
    /// Coin value the cheater tries to force.
    #[arg(long, default_value_t = 0)]
    pub coin: u8,
    /// Target label for spec files (see `otlab sdp --target`).
    #[arg(long)]
    pub target: Option<String>,
    /// fot: number of bits.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// fot: size of Bob's subset.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// fot: coin flip, `ideal:C` or `qutrit-commitment`.
    #[arg(long, default_value = "qutrit-commitment")]
    pub cf: String,
    /// Restarts of the parameterized search under --oracle.
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
}

fn target_name(t: &Target) -> String {
    match t {
        Target::ChoiceBit => "choice_bit".into(),
        Target::BothBits => "both_bits".into(),
        Target::Parity => "parity".into(),
        Target::Bit(i) => format!("bit {i}"),
        Target::ForceOutput(label) => format!("force {label}"),
    }
}

fn mc_value(estimate: McEstimate, exact: f64) -> Value {
    json!({
        "estimate": estimate,
        "exact": exact,
        "sigmas": MC_SIGMAS,
        "consistent": estimate.consistent_with(exact, MC_SIGMAS),
    })
}

fn finish(report: CheatReport, attack: &str, extra: Value) -> Value {
    let mut v = json!({ "attack": attack, "report": report });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, extra) {
        dst.extend(src);
    }
    v
}

pub fn run(args: &CheatArgs, g: &Global) -> CliResult<Value> {
    let party = Party::from(args.party);
    if args.coin > 1 {
        return Err(CliError::usage("--coin must be 0 or 1"));
    }
    if args.protocol == "fot" {
        return fot(args, party, g);
    }
    let default_attack = match (args.protocol.as_str(), party) {
        ("qutrit-ot", Party::Alice) => "basis",
        ("qutrit-ot", Party::Bob) => "superposition",
        ("cf-from-ot", Party::Alice) => "ot-basis",
        ("qutrit-commitment-cf", Party::Alice) => "commitment",
        ("qutrit-commitment-cf", Party::Bob) => "helstrom",
        _ => "optimal",
    };
    let attack = args.attack.as_deref().unwrap_or(default_attack);
    if attack == "optimal" {
        return optimal(args, party, g);
    }
    let (strategy, upper) = scripted(&args.protocol, party, attack, args.coin, g)?;
    run_strategy(&strategy, upper, attack, g)
}

/// Scripted strategy and the matching upper bound, if one is known.
fn scripted(
    protocol: &str,
    party: Party,
    attack: &str,
    coin: u8,
    g: &Global,
) -> CliResult<(Strategy, Option<UpperBound>)> {
    let unknown = || CliError::usage(format!("no `{attack}` attack for {party} on `{protocol}`"));
    Ok(match (protocol, party, attack) {
        ("qutrit-ot", Party::Alice, "basis") => (
            alice_basis_attack(&qutrit_random_ot()?.protocol)?,
            Some(qutrit_ot_alice_upper_bound()?),
        ),
        ("qutrit-ot", Party::Bob, "superposition") => (
            bob_superposition_attack(&qutrit_random_ot()?.protocol)?,
            Some(qutrit_ot_bob_upper_bound()),
        ),
        ("qutrit-ot", Party::Bob, "parity") => {
            (bob_parity_attack(&qutrit_random_ot()?.protocol)?, None)
        }
        ("cf-from-ot", Party::Alice, "ot-basis") => {
            let ip = builtin(protocol)?.expect("built in");
            // Alice's forcing probability equals her probability of learning b.
            (
                cf_from_ot_alice_attack(&ip, coin)?,
                Some(qutrit_ot_alice_upper_bound()?),
            )
        }
        ("qutrit-commitment-cf", _, "commitment" | "helstrom") => {
            let ip = builtin(protocol)?.expect("built in");
            let strategy = match (party, attack) {
                (Party::Alice, "commitment") => {
                    cf_commitment_alice_attack(&ip, coin, CF_ALICE_WEIGHTS)?
                }
                (Party::Bob, "helstrom") => cf_commitment_bob_attack(&ip, coin)?,
                _ => return Err(unknown()),
            };
            let spec = compile_with_deferred_measurement(&ip)?;
            (
                strategy,
                Some(sdp_upper(&spec, party, &coin_label(party, coin), g)?),
            )
        }
        _ => return Err(unknown()),
    })
}

/// Label of the honest party when the coin is forced to `coin`.
fn coin_label(cheater: Party, coin: u8) -> String {
    match cheater {
        Party::Bob => alice_label(&[coin]),
        Party::Alice => bob_label(&[0], &[coin]),
    }
}

fn sdp_upper(spec: &ProtocolSpec, party: Party, label: &str, g: &Global) -> CliResult<UpperBound> {
    let s = solve_party(spec, party, label, g.solver())?;
    Ok(UpperBound {
        value: s.solution.dual_value,
        certificate: Certificate::Sdp {
            dual_value: s.solution.dual_value,
            max_residual: s.check.max_residual,
            pass: s.check.pass,
        },
    })
}

fn run_strategy(
    strategy: &Strategy,
    upper: Option<UpperBound>,
    attack: &str,
    g: &Global,
) -> CliResult<Value> {
    let exact = strategy.exact_value()?;
    let abort = strategy.honest_abort_probability()?;
    let mc = (g.trials > 0)
        .then(|| par_successes(g.seed, g.trials, |rng| strategy.trial(rng)))
        .transpose()?
        .map(|s| mc_value(McEstimate::new(s, g.trials), exact));
    let report = CheatReport {
        party: strategy.party,
        target: target_name(&strategy.target),
        lower_bound: LowerBound {
            value: exact,
            strategy: strategy.name.clone(),
        },
        upper_bound: upper,
        seed: g.seed,
    };
    Ok(finish(
        report,
        attack,
        json!({ "honest_abort_probability": abort, "monte_carlo": mc }),
    ))
}

/// SDP optimum with its certificate; the primal value is attained by some
/// strategy, so it serves as the lower bound.
fn optimal(args: &CheatArgs, party: Party, g: &Global) -> CliResult<Value> {
    let (spec, label) = match builtin(&args.protocol)? {
        Some(ip) => {
            let spec = compile_with_deferred_measurement(&ip)?;
            let label = match &args.target {
                Some(t) => target_for(&spec, party, t)?,
                None => coin_label(party, args.coin),
            };
            (spec, label)
        }
        None => {
            let (_, spec) = load_spec(&args.protocol)?;
            let t = args
                .target
                .as_deref()
                .ok_or_else(|| CliError::usage("spec files need --target"))?;
            let label = target_for(&spec, party, t)?;
            (spec, label)
        }
    };
    let s = solve_party(&spec, party, &label, g.solver())?;
    let oracle_result = g
        .oracle
        .then(|| oracle(&spec, party, &label, args.restarts, g.seed))
        .transpose()?;
    let lower = match &oracle_result {
        Some(bf) => LowerBound {
            value: bf.value,
            strategy: "parameterized-unitaries".into(),
        },
        None => LowerBound {
            value: s.solution.primal_value,
            strategy: "sdp-primal".into(),
        },
    };
    let report = CheatReport {
        party,
        target: format!("force {label}"),
        lower_bound: lower,
        upper_bound: Some(UpperBound {
            value: s.solution.dual_value,
            certificate: Certificate::Sdp {
                dual_value: s.solution.dual_value,
                max_residual: s.check.max_residual,
                pass: s.check.pass,
            },
        }),
        seed: g.seed,
    };
    Ok(finish(
        report,
        "optimal",
        json!({
            "sdp": {
                "primal_value": s.solution.primal_value,
                "residuals": s.solution.residuals,
                "iterations": s.solution.iterations,
                "tolerance": g.tol,
                "certificate": s.check,
            },
            "oracle": oracle_result,
            "monte_carlo": Value::Null,
        }),
    ))
}

fn fot(args: &CheatArgs, party: Party, g: &Global) -> CliResult<Value> {
    let (n, k) = (args.n, args.k);
    let cf = CfPrimitive::parse(&args.cf)?;
    let bounds = fot_cheat_bounds(n, k, &cf)?;
    let bit = args.coin;
    let (adv, upper, target) = match party {
        Party::Alice => {
            let b: Vec<usize> = (0..k).collect();
            let x_b = vec![bit; k];
            let target = bob_label(&b, &x_b);
            let cert = Certificate::Composition {
                per_coin: cf.c(),
                coins: k,
                uncontrolled: 1.0 / binomial(n, k) as f64,
            };
            (
                FotAdversary::alice(&cf, b, x_b)?,
                UpperBound {
                    value: bounds.a_max,
                    certificate: cert,
                },
                target,
            )
        }
        Party::Bob => {
            let x = vec![bit; n];
            let target = alice_label(&x);
            let cert = Certificate::Composition {
                per_coin: cf.c(),
                coins: k,
                uncontrolled: 0.5f64.powi((n - k) as i32),
            };
            (
                FotAdversary::bob(&cf, x)?,
                UpperBound {
                    value: bounds.b_max,
                    certificate: cert,
                },
                target,
            )
        }
    };
    let exact = adv.exact_value(n, k, &cf)?;
    let mc = (g.trials > 0)
        .then(|| par_successes(g.seed, g.trials, |rng| adv.run(n, k, &cf, rng)))
        .transpose()?
        .map(|s| mc_value(McEstimate::new(s, g.trials), exact));
    let report = CheatReport {
        party,
        target: format!("force {target}"),
        lower_bound: LowerBound {
            value: exact,
            strategy: format!("per-coin forcing with {}", cf.describe()),
        },
        upper_bound: Some(upper),
        seed: g.seed,
    };
    Ok(finish(
        report,
        "composition",
        json!({ "n": n, "k": k, "cf": cf.describe(), "monte_carlo": mc }),
    ))
}
