//! `otlab bound`: closed-form quantities.

use clap::{Args, ValueEnum};
use otlab_core::bounds::{
    epsilon_report, f, f_bisection, fot_lower, fot_upper, g, kitaev_product_check, BoundSet,
    BISECTION_TOL, KITAEV_TOL,
};
use serde_json::{json, Value};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundName {
    /// Bias lower bound for OT.
    OtLower,
    /// `f(z)`: CF cheating bound from a Bob OT cheating probability.
    F,
    /// `g(x)`.
    G,
    /// Check `a b >= 1/2`.
    KitaevProduct,
    /// Honest joint probability and minimal forcing bias for (n, k) fOT.
    FotLower,
    /// fOT cheating bounds from a CF with bias `delta(k, gamma)`.
    FotUpper,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(value_enum)]
    pub name: BoundName,
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

fn need<T>(v: Option<T>, flag: &str, name: BoundName) -> CliResult<T> {
    let name = name.to_possible_value().expect("no skipped variants");
    v.ok_or_else(|| CliError::usage(format!("{} needs --{flag}", name.get_name())))
}

pub fn run(args: &BoundArgs) -> CliResult<Value> {
    let name = args.name;
    let bounds = match name {
        BoundName::OtLower => {
            let e = epsilon_report();
            json!({
                "ot_lower": {
                    "epsilon": e,
                    "max_cheat_lower_bound": 0.5 + e.closed_form,
                    "tolerance": BISECTION_TOL,
                },
            })
        }
        BoundName::F => {
            let z = need(args.z, "z", name)?;
            json!({ "f": { "z": z, "value": f(z)?, "bisection": f_bisection(z)?, "tolerance": BISECTION_TOL } })
        }
        BoundName::G => {
            let x = need(args.x, "x", name)?;
            json!({ "g": { "x": x, "value": g(x)? } })
        }
        BoundName::KitaevProduct => {
            let (a, b) = (need(args.a, "a", name)?, need(args.b, "b", name)?);
            json!({ "kitaev_product": { "a": a, "b": b, "check": kitaev_product_check(a, b), "tolerance": KITAEV_TOL } })
        }
        BoundName::FotLower => {
            let (n, k) = (need(args.n, "n", name)?, need(args.k, "k", name)?);
            json!({ "fot_lower": { "n": n, "k": k, "bounds": fot_lower(n, k)? } })
        }
        BoundName::FotUpper => {
            let (n, k, gamma) = (
                need(args.n, "n", name)?,
                need(args.k, "k", name)?,
                need(args.gamma, "gamma", name)?,
            );
            json!({
                "fot_upper": {
                    "n": n,
                    "k": k,
                    "gamma": gamma,
                    "bounds": fot_upper(n, k, gamma)?,
                    "set": BoundSet::new(n, k, gamma)?,
                    "tolerance": BISECTION_TOL,
                },
            })
        }
    };
    Ok(json!({ "bounds": bounds }))
}
