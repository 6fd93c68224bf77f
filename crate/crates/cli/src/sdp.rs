//! `otlab sdp`: cheating SDPs with certificates.

use clap::{Args, ValueEnum};
use otlab_core::bounds::{fot_lower, kitaev_product_check, product_check};
use otlab_core::model::{bob_label, parse_alice_label, parse_bob_label, Party, ProtocolSpec};
use otlab_core::sdp::{
    brute_force_cheat, build_cheating_sdp, solve_sdp, verify_dual_certificate, BruteForceOptions,
    BruteForceResult, CertificateCheck, SdpProblem, SdpSolution, SolverOptions,
};
use serde_json::{json, Value};

use crate::data::{load_spec, spec_summary};
use crate::{to_value, CliError, CliResult, Global};

/// Slack allowed when comparing certified bounds against the fOT floor.
pub const PRODUCT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartySel {
    Alice,
    Bob,
    Both,
}

#[derive(Debug, Args)]
pub struct SdpArgs {
    /// Protocol spec: a JSON file or the name of a bundled spec.
    pub spec: String,
    #[arg(long, value_enum, default_value = "both")]
    pub party: PartySel,
    /// Output the cheater forces. Bob's target is an Alice label; for Alice a
    /// bit string names Bob's bits on the first k indices. Default: n zeros.
    #[arg(long)]
    pub target: Option<String>,
    /// Restarts of the parameterized search under --oracle.
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    /// Include the problem and the full primal and dual solution.
    #[arg(long)]
    pub full: bool,
}

/// The label the honest party must output when `party` cheats toward `target`.
pub fn target_for(spec: &ProtocolSpec, party: Party, target: &str) -> CliResult<String> {
    match party {
        Party::Bob => Ok(target.to_string()),
        Party::Alice => {
            if parse_bob_label(target).is_some() {
                return Ok(target.to_string());
            }
            let bits = parse_alice_label(target).ok_or_else(|| {
                CliError::usage(format!(
                    "`{target}` is neither a bit string nor a Bob label"
                ))
            })?;
            if bits.len() < spec.k {
                return Err(CliError::usage(format!(
                    "target `{target}` has fewer than k = {} bits",
                    spec.k
                )));
            }
            Ok(bob_label(&(0..spec.k).collect::<Vec<_>>(), &bits[..spec.k]))
        }
    }
}

pub struct Solved {
    pub problem: SdpProblem,
    pub solution: SdpSolution,
    pub check: CertificateCheck,
}

pub fn solve_party(
    spec: &ProtocolSpec,
    party: Party,
    label: &str,
    options: SolverOptions,
) -> CliResult<Solved> {
    let problem = build_cheating_sdp(spec, party, label)?;
    let solution = solve_sdp(&problem, options)?;
    let check = verify_dual_certificate(&problem, &solution);
    Ok(Solved {
        problem,
        solution,
        check,
    })
}

pub fn oracle(
    spec: &ProtocolSpec,
    party: Party,
    label: &str,
    restarts: usize,
    seed: u64,
) -> CliResult<BruteForceResult> {
    Ok(brute_force_cheat(
        spec,
        party,
        label,
        BruteForceOptions {
            restarts,
            seed,
            ..Default::default()
        },
    )?)
}

fn party_report(
    spec: &ProtocolSpec,
    party: Party,
    args: &SdpArgs,
    g: &Global,
) -> CliResult<(f64, Value)> {
    let zeros = "0".repeat(spec.n);
    let label = target_for(spec, party, args.target.as_deref().unwrap_or(&zeros))?;
    let s = solve_party(spec, party, &label, g.solver())?;
    let meta = &s.problem.meta;
    let mut v = json!({
        "party": party,
        "target": label,
        "primal_value": s.solution.primal_value,
        "dual_value": s.solution.dual_value,
        "residuals": s.solution.residuals,
        "iterations": s.solution.iterations,
        "tolerance": g.tol,
        "certificate": s.check,
        "sizes": {
            "blocks": s.problem.blocks,
            "constraints": meta.n_constraints,
            "unreduced_blocks": meta.unreduced_blocks,
            "unreduced_constraints": meta.unreduced_constraints,
        },
    });
    if g.oracle {
        let bf = oracle(spec, party, &label, args.restarts, g.seed)?;
        v["oracle"] = json!({
            "result": bf,
            "within_certificate": bf.value <= s.solution.dual_value + 1e-6,
            "gap_to_primal": s.solution.primal_value - bf.value,
        });
    }
    if args.full {
        v["problem"] = to_value(&s.problem)?;
        v["solution"] = to_value(&s.solution)?;
    }
    Ok((s.solution.dual_value, v))
}

pub fn run(args: &SdpArgs, g: &Global) -> CliResult<Value> {
    let (path, spec) = load_spec(&args.spec)?;
    let parties: &[Party] = match args.party {
        PartySel::Alice => &[Party::Alice],
        PartySel::Bob => &[Party::Bob],
        PartySel::Both => &[Party::Alice, Party::Bob],
    };
    let mut reports = Vec::new();
    let mut bounds = Vec::new();
    for &p in parties {
        let (bound, v) = party_report(&spec, p, args, g)?;
        bounds.push(bound);
        reports.push(v);
    }
    let mut out = json!({ "spec": path.display().to_string(), "protocol": spec_summary(&spec), "parties": reports });
    if let [a, b] = bounds[..] {
        out["product"] = if spec.n == 1 && spec.k == 1 {
            json!({ "kind": "kitaev", "check": kitaev_product_check(a, b) })
        } else {
            let floor = fot_lower(spec.n, spec.k)?.honest_joint;
            json!({ "kind": "fot_floor", "check": product_check(a, b, floor, PRODUCT_TOL) })
        };
    }
    Ok(out)
}
