//! `otlab simulate`: honest runs.

use std::collections::BTreeMap;

use clap::Args;
use otlab_core::bounds::binomial;
use otlab_core::fot::{fot_bound_vs_lower, fot_exact_distribution, fot_run, CfPrimitive};
use otlab_core::model::{consistent, run_honest, Distribution, ABORT};
use otlab_core::otcore::{exact_distribution, run_honest_sampled, trial_rng, InteractiveProtocol};
use rand::{Rng, RngCore};
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{builtin, load_spec, spec_summary};
use crate::{par_trials, to_value, CliResult, Global};

/// Outcomes below this probability are treated as impossible.
pub const SUPPORT_FLOOR: f64 = 1e-12;

/// Largest `C(n,k) 2^n` for which the fot distribution is enumerated.
const FOT_ENUMERATION_LIMIT: u64 = 1 << 16;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// qutrit-ot, qutrit-ot-inputs, cf-from-ot, qutrit-commitment-cf,
    /// announce-coin, fot, or a protocol spec (file or bundled name).
    pub protocol: String,
    /// fot: number of bits.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// fot: size of Bob's subset.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// fot: coin flip, `ideal:C` or `qutrit-commitment`.
    #[arg(long, default_value = "qutrit-commitment")]
    pub cf: String,
    /// Keep full transcripts of the first N sampled runs.
    #[arg(long, default_value_t = 0)]
    pub transcripts: u64,
}

pub fn run(args: &SimulateArgs, g: &Global) -> CliResult<Value> {
    if args.protocol == "fot" {
        return fot(args, g);
    }
    if let Some(ip) = builtin(&args.protocol)? {
        return interactive(&args.protocol, &ip, args, g);
    }
    spec_file(args, g)
}

#[derive(Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Serialize)]
pub struct CountEntry {
    pub alice: String,
    pub bob: String,
    pub count: u64,
    pub expected: f64,
}

#[derive(Debug, Serialize)]
pub struct Sampled {
    pub trials: u64,
    pub counts: Vec<CountEntry>,
    /// Sampled outcomes the exact distribution gives probability zero.
    pub unexpected: u64,
    pub chi_square: Option<ChiSquare>,
}

/// Tallies sampled labels against the exact distribution.
pub fn tally(exact: &Distribution, samples: &[(String, String)]) -> Sampled {
    let trials = samples.len() as u64;
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.clone()).or_default() += 1;
    }
    let support = exact.support(SUPPORT_FLOOR);
    let unexpected = counts
        .iter()
        .filter(|((a, b), _)| exact.get(a, b) <= SUPPORT_FLOOR)
        .map(|(_, c)| c)
        .sum();
    let entries: Vec<CountEntry> = support
        .iter()
        .map(|&(a, b, p)| CountEntry {
            alice: a.to_string(),
            bob: b.to_string(),
            count: counts
                .get(&(a.to_string(), b.to_string()))
                .copied()
                .unwrap_or(0),
            expected: p * trials as f64,
        })
        .collect();
    let chi_square = (entries.len() > 1 && trials > 0).then(|| {
        let statistic: f64 = entries
            .iter()
            .map(|e| (e.count as f64 - e.expected).powi(2) / e.expected)
            .sum();
        let dof = entries.len() - 1;
        let p_value = 1.0
            - ChiSquared::new(dof as f64)
                .expect("positive dof")
                .cdf(statistic);
        ChiSquare {
            statistic,
            dof,
            p_value,
        }
    });
    Sampled {
        trials,
        counts: entries,
        unexpected,
        chi_square,
    }
}

/// Probability of consistent, non-aborting outcomes and of any abort.
pub fn summary(d: &Distribution) -> Value {
    let consistent_p: f64 =
        d.0.iter()
            .filter(|((a, b), _)| consistent(a, b))
            .map(|(_, p)| p)
            .fold(0.0, |a, p| a + p);
    let abort_p: f64 =
        d.0.iter()
            .filter(|((a, b), _)| a == ABORT || b == ABORT)
            .map(|(_, p)| p)
            .fold(0.0, |a, p| a + p);
    json!({
        "total": d.total(),
        "consistent_probability": consistent_p,
        "abort_probability": abort_p,
        "tolerance": SUPPORT_FLOOR,
    })
}

fn label(o: &Option<String>) -> String {
    o.clone().unwrap_or_else(|| ABORT.to_string())
}

fn interactive(
    name: &str,
    ip: &InteractiveProtocol,
    args: &SimulateArgs,
    g: &Global,
) -> CliResult<Value> {
    let exact = exact_distribution(ip)?;
    let samples = par_trials(g.seed, g.trials, |rng| {
        let rec = run_honest_sampled(ip, rng, false)?;
        Ok((label(&rec.outcome.alice), label(&rec.outcome.bob)))
    })?;
    let transcripts = (0..args.transcripts)
        .map(|t| {
            let rec = run_honest_sampled(ip, &mut trial_rng(g.seed, t), true)?;
            Ok(json!({ "trial": t, "transcript": rec.into_transcript(g.seed) }))
        })
        .collect::<CliResult<Vec<Value>>>()?;
    Ok(json!({
        "protocol": name,
        "registers": ip.registers.iter().map(|r| json!({ "name": r.name, "dim": r.dim })).collect::<Vec<_>>(),
        "steps": ip.steps.len(),
        "exact": { "distribution": exact, "summary": summary(&exact) },
        "sampled": tally(&exact, &samples),
        "transcripts": transcripts,
    }))
}

fn fot(args: &SimulateArgs, g: &Global) -> CliResult<Value> {
    let (n, k) = (args.n, args.k);
    let cf = CfPrimitive::parse(&args.cf)?;
    let bounds = fot_bound_vs_lower(n, k, &cf)?;
    let runs = par_trials(g.seed, g.trials.max(args.transcripts), |rng| {
        fot_run(n, k, &cf, rng)
    })?;
    let enumerable = binomial(n, k).saturating_mul(1u64 << n.min(63)) <= FOT_ENUMERATION_LIMIT;
    let (exact, sampled) = if enumerable {
        let exact = fot_exact_distribution(n, k, &cf)?;
        let samples: Vec<(String, String)> = runs
            .iter()
            .take(g.trials as usize)
            .map(|r| (r.alice_output(), r.bob_output()))
            .collect();
        let sampled = tally(&exact, &samples);
        (
            json!({ "distribution": exact, "summary": summary(&exact) }),
            to_value(sampled)?,
        )
    } else {
        (Value::Null, Value::Null)
    };
    let example = runs.first().map(to_value).transpose()?;
    let transcripts: Vec<Value> = runs
        .iter()
        .take(args.transcripts as usize)
        .enumerate()
        .map(|(t, r)| json!({ "trial": t, "run": r }))
        .collect();
    Ok(json!({
        "protocol": "fot",
        "n": n,
        "k": k,
        "cf": cf.describe(),
        "honest_coin": cf.honest_coin()?,
        "exact": exact,
        "sampled": sampled,
        "fot_bounds": bounds,
        "example_run": example,
        "transcripts": transcripts,
    }))
}

fn spec_file(args: &SimulateArgs, g: &Global) -> CliResult<Value> {
    let (path, spec) = load_spec(&args.protocol)?;
    let honest = run_honest(&spec)?;
    let exact = honest.outcome_distribution;
    let support = exact.support(SUPPORT_FLOOR);
    let total: f64 = support.iter().map(|s| s.2).sum();
    let samples = par_trials(g.seed, g.trials, |rng| Ok(sample(&support, total, rng)))?;
    Ok(json!({
        "protocol": path.display().to_string(),
        "spec": spec_summary(&spec),
        "exact": {
            "distribution": exact,
            "summary": summary(&exact),
            "max_norm_drift": honest.max_norm_drift,
        },
        "sampled": tally(&exact, &samples),
    }))
}

fn sample(support: &[(&str, &str, f64)], total: f64, rng: &mut dyn RngCore) -> (String, String) {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for &(a, b, p) in support {
        acc += p;
        if u < acc {
            return (a.to_string(), b.to_string());
        }
    }
    let (a, b, _) = support.last().expect("honest runs have an outcome");
    (a.to_string(), b.to_string())
}
