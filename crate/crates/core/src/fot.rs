//! Forcing OT built from k coin flips plus n−k free bits, with its cheating
//! bound accounting.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{binomial, fot_lower};
use crate::cheat::{
    cf_commitment_alice_attack, cf_commitment_bob_attack, Strategy, CF_ALICE_WEIGHTS,
};
use crate::model::{
    alice_label, bob_label, k_subsets, parse_alice_label, parse_bob_label, Distribution, Party,
    ABORT,
};
use crate::otcore::{
    exact_distribution, qutrit_commitment_cf, run_honest_sampled, scripted_adversary_run,
    InteractiveProtocol, McEstimate, Transcript,
};
use crate::{Error, Result};

/// Per-coin forcing probability of the qutrit commitment coin flip.
pub const COMMITMENT_CF_CHEAT: f64 = 0.75;

/// The coin-flipping subroutine used for each of Bob's k bits.
#[derive(Debug, Clone)]
pub enum CfPrimitive {
    /// A uniform coin that a cheater forces with probability `c`.
    Ideal { c: f64 },
    /// A concrete protocol whose best known attacks force either outcome with
    /// probability `c` for both parties.
    Simulated {
        protocol: InteractiveProtocol,
        c: f64,
    },
}

impl CfPrimitive {
    pub fn ideal(c: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&c) {
            return Err(Error::Domain {
                value: c,
                domain: "[1/2, 1]",
            });
        }
        Ok(CfPrimitive::Ideal { c })
    }

    pub fn qutrit_commitment() -> Result<Self> {
        Ok(CfPrimitive::Simulated {
            protocol: qutrit_commitment_cf()?,
            c: COMMITMENT_CF_CHEAT,
        })
    }

    /// Parses `ideal:C` or `qutrit-commitment`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(c) = s.strip_prefix("ideal:") {
            let c: f64 = c
                .parse()
                .map_err(|_| Error::Validation(format!("bad CF bias `{c}`")))?;
            return Self::ideal(c);
        }
        match s {
            "qutrit-commitment" | "qutrit-commitment-cf" => Self::qutrit_commitment(),
            _ => Err(Error::Validation(format!(
                "unknown CF primitive `{s}` (expected ideal:C or qutrit-commitment)"
            ))),
        }
    }

    pub fn c(&self) -> f64 {
        match self {
            CfPrimitive::Ideal { c } | CfPrimitive::Simulated { c, .. } => *c,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CfPrimitive::Ideal { c } => format!("ideal:{c}"),
            CfPrimitive::Simulated { protocol, .. } => protocol.name.clone(),
        }
    }

    /// Exact honest coin distribution: probabilities of 0, 1 and abort.
    pub fn honest_coin(&self) -> Result<[f64; 3]> {
        match self {
            CfPrimitive::Ideal { .. } => Ok([0.5, 0.5, 0.0]),
            CfPrimitive::Simulated { protocol, .. } => {
                let dist = exact_distribution(protocol)?;
                let mut out = [0.0; 3];
                for ((a, b), p) in &dist.0 {
                    match agreed_coin(
                        Some(a.as_str()).filter(|s| *s != ABORT),
                        Some(b.as_str()).filter(|s| *s != ABORT),
                    ) {
                        Some(c) => out[c as usize] += p,
                        None => out[2] += p,
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Coin agreed on by both CF outputs, if any.
fn agreed_coin(alice: Option<&str>, bob: Option<&str>) -> Option<u8> {
    let a = parse_alice_label(alice?)?;
    let (_, xb) = parse_bob_label(bob?)?;
    (a.len() == 1 && xb.len() == 1 && a[0] == xb[0]).then_some(a[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct CoinRecord {
    /// Index in `0..n` that this coin fixes.
    pub index: usize,
    pub alice: Option<String>,
    pub bob: Option<String>,
    pub coin: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FotRun {
    pub n: usize,
    pub k: usize,
    pub cf: String,
    /// Sorted index set chosen by Bob.
    pub b: Vec<usize>,
    pub x_b: Vec<u8>,
    pub x: Vec<u8>,
    pub coins: Vec<CoinRecord>,
    pub abort: Option<String>,
}

impl FotRun {
    pub fn alice_output(&self) -> String {
        if self.abort.is_some() {
            ABORT.into()
        } else {
            alice_label(&self.x)
        }
    }

    pub fn bob_output(&self) -> String {
        if self.abort.is_some() {
            ABORT.into()
        } else {
            bob_label(&self.b, &self.x_b)
        }
    }
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    fot_lower(n, k).map(|_| ())
}

/// Uniform k-subset by a partial Fisher-Yates shuffle, returned sorted.
pub fn sample_subset(n: usize, k: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut b = idx[..k].to_vec();
    b.sort_unstable();
    b
}

/// One honest execution: Bob picks `b`, the parties flip k coins for `x_b`,
/// Alice fills in the remaining bits.
pub fn fot_run(n: usize, k: usize, cf: &CfPrimitive, rng: &mut dyn RngCore) -> Result<FotRun> {
    check_nk(n, k)?;
    let b = sample_subset(n, k, rng);
    let mut coins = Vec::with_capacity(k);
    let mut abort = None;
    for &index in &b {
        // Each coin gets a fresh RNG stream and fresh registers.
        let seed = rng.next_u64();
        let mut coin_rng = ChaCha8Rng::seed_from_u64(seed);
        let record = match cf {
            CfPrimitive::Ideal { .. } => {
                let v: u8 = coin_rng.random_range(0..2);
                CoinRecord {
                    index,
                    alice: Some(alice_label(&[v])),
                    bob: Some(bob_label(&[0], &[v])),
                    coin: Some(v),
                    transcript: None,
                }
            }
            CfPrimitive::Simulated { protocol, .. } => {
                let rec = run_honest_sampled(protocol, &mut coin_rng, false)?;
                let coin = agreed_coin(rec.outcome.alice.as_deref(), rec.outcome.bob.as_deref());
                CoinRecord {
                    index,
                    alice: rec.outcome.alice.clone(),
                    bob: rec.outcome.bob.clone(),
                    coin,
                    transcript: Some(rec.into_transcript(seed)),
                }
            }
        };
        if record.coin.is_none() {
            abort = Some(format!("coin flip for index {index} aborted"));
        }
        coins.push(record);
        if abort.is_some() {
            break;
        }
    }
    if abort.is_some() {
        return Ok(FotRun {
            n,
            k,
            cf: cf.describe(),
            b,
            x_b: vec![],
            x: vec![],
            coins,
            abort,
        });
    }
    let x_b: Vec<u8> = coins.iter().map(|c| c.coin.unwrap_or(0)).collect();
    let mut x = vec![0u8; n];
    for (&i, &v) in b.iter().zip(&x_b) {
        x[i] = v;
    }
    for (i, xi) in x.iter_mut().enumerate() {
        if !b.contains(&i) {
            *xi = rng.random_range(0..2);
        }
    }
    Ok(FotRun {
        n,
        k,
        cf: cf.describe(),
        b,
        x_b,
        x,
        coins,
        abort: None,
    })
}

/// Exact honest joint distribution, composing the CF's exact coin distribution.
pub fn fot_exact_distribution(n: usize, k: usize, cf: &CfPrimitive) -> Result<Distribution> {
    check_nk(n, k)?;
    let coin = cf.honest_coin()?;
    let p_b = 1.0 / binomial(n, k) as f64;
    let p_free = 0.5f64.powi((n - k) as i32);
    let mut dist = Distribution::default();
    for b in k_subsets(n, k) {
        for x in crate::model::bit_strings(n) {
            let x_b: Vec<u8> = b.iter().map(|&i| x[i]).collect();
            let p: f64 = x_b.iter().map(|&v| coin[v as usize]).product();
            dist.add(&alice_label(&x), &bob_label(&b, &x_b), p_b * p * p_free);
        }
    }
    let aborted = 1.0 - (coin[0] + coin[1]).powi(k as i32);
    if aborted > 1e-15 {
        dist.add(ABORT, ABORT, aborted);
    }
    Ok(dist)
}

/// Maximum cheating probabilities given a per-coin forcing probability `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FotCheatBounds {
    pub a_max: f64,
    pub b_max: f64,
}

pub fn fot_cheat_bounds(n: usize, k: usize, cf: &CfPrimitive) -> Result<FotCheatBounds> {
    fot_cheat_bounds_c(n, k, cf.c())
}

pub fn fot_cheat_bounds_c(n: usize, k: usize, c: f64) -> Result<FotCheatBounds> {
    check_nk(n, k)?;
    let ck = c.powi(k as i32);
    Ok(FotCheatBounds {
        a_max: ck / binomial(n, k) as f64,
        b_max: ck / 2f64.powi((n - k) as i32),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FotBoundReport {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub product: f64,
    /// `1/(C(n,k) 2^n)`, the smallest product any fOT protocol can have.
    pub floor: f64,
    pub bias_a: f64,
    pub bias_b: f64,
    /// `c^k 2^k`.
    pub bias: f64,
    /// `sqrt2^k`.
    pub optimal_bias: f64,
    /// False when `c < 1/sqrt2`: no CF with that bias exists, and the
    /// product falls below the floor.
    pub above_floor: bool,
}

pub fn fot_bound_vs_lower(n: usize, k: usize, cf: &CfPrimitive) -> Result<FotBoundReport> {
    fot_bound_vs_lower_c(n, k, cf.c())
}

pub fn fot_bound_vs_lower_c(n: usize, k: usize, c: f64) -> Result<FotBoundReport> {
    let bounds = fot_cheat_bounds_c(n, k, c)?;
    let lower = fot_lower(n, k)?;
    let product = bounds.a_max * bounds.b_max;
    Ok(FotBoundReport {
        n,
        k,
        c,
        a_max: bounds.a_max,
        b_max: bounds.b_max,
        product,
        floor: lower.honest_joint,
        bias_a: bounds.a_max * binomial(n, k) as f64 * 2f64.powi(k as i32),
        bias_b: bounds.b_max * 2f64.powi(n as i32),
        bias: c.powi(k as i32) * 2f64.powi(k as i32),
        optimal_bias: lower.min_forcing_bias,
        above_floor: c >= FRAC_1_SQRT_2 - 1e-12 && product >= lower.honest_joint * (1.0 - 1e-12),
    })
}

/// A product-form fOT adversary: it attacks each coin independently towards
/// the target, and as Bob picks the subset itself.
#[derive(Debug, Clone)]
pub struct FotAdversary {
    pub party: Party,
    /// Target subset (Alice attacking Bob's output) or ignored (Bob chooses it).
    pub b: Vec<usize>,
    /// Target bits: `x_b` when Alice cheats, the full `x` when Bob cheats.
    pub bits: Vec<u8>,
    coin_attacks: Option<[Strategy; 2]>,
}

impl FotAdversary {
    /// Alice tries to make Bob output `(b, x_b)`.
    pub fn alice(cf: &CfPrimitive, b: Vec<usize>, x_b: Vec<u8>) -> Result<Self> {
        if b.len() != x_b.len() {
            return Err(Error::Dimension(
                "target subset and bits differ in length".into(),
            ));
        }
        let coin_attacks = match cf {
            CfPrimitive::Ideal { .. } => None,
            CfPrimitive::Simulated { protocol, .. } => Some([
                cf_commitment_alice_attack(protocol, 0, CF_ALICE_WEIGHTS)?,
                cf_commitment_alice_attack(protocol, 1, CF_ALICE_WEIGHTS)?,
            ]),
        };
        Ok(FotAdversary {
            party: Party::Alice,
            b,
            bits: x_b,
            coin_attacks,
        })
    }

    /// Bob tries to make Alice output `x`.
    pub fn bob(cf: &CfPrimitive, x: Vec<u8>) -> Result<Self> {
        let coin_attacks = match cf {
            CfPrimitive::Ideal { .. } => None,
            CfPrimitive::Simulated { protocol, .. } => Some([
                cf_commitment_bob_attack(protocol, 0)?,
                cf_commitment_bob_attack(protocol, 1)?,
            ]),
        };
        Ok(FotAdversary {
            party: Party::Bob,
            b: vec![],
            bits: x,
            coin_attacks,
        })
    }

    /// Exact success probability of this adversary.
    pub fn exact_value(&self, n: usize, k: usize, cf: &CfPrimitive) -> Result<f64> {
        let per_coin = |v: u8| -> Result<f64> {
            match &self.coin_attacks {
                None => Ok(cf.c()),
                Some(attacks) => attacks[v as usize].exact_value(),
            }
        };
        match self.party {
            Party::Alice => {
                let mut p = 1.0 / binomial(n, k) as f64;
                for &v in &self.bits {
                    p *= per_coin(v)?;
                }
                Ok(p)
            }
            Party::Bob => {
                let mut p = 0.5f64.powi((n - k) as i32);
                for &v in &self.bits[..k] {
                    p *= per_coin(v)?;
                }
                Ok(p)
            }
        }
    }

    fn force_coin(&self, cf: &CfPrimitive, v: u8, rng: &mut ChaCha8Rng) -> Result<bool> {
        match &self.coin_attacks {
            None => Ok(rng.random::<f64>() < cf.c()),
            Some(attacks) => {
                let s = &attacks[v as usize];
                let mut adv = s.adversary.clone();
                let run = scripted_adversary_run(&s.protocol, &mut adv, s.party, rng)?;
                Ok(run.protocol_abort.is_none()
                    && s.target
                        .succeeded(run.honest_output.as_deref(), run.guess.as_deref()))
            }
        }
    }

    /// One attacked run; true when the honest party outputs the target.
    pub fn run(&self, n: usize, k: usize, cf: &CfPrimitive, rng: &mut dyn RngCore) -> Result<bool> {
        check_nk(n, k)?;
        match self.party {
            Party::Alice => {
                // Bob's subset is honest and uniform.
                let b = sample_subset(n, k, rng);
                let mut ok = b == self.b;
                for &v in &self.bits {
                    let mut coin_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
                    ok &= self.force_coin(cf, v, &mut coin_rng)?;
                }
                Ok(ok)
            }
            Party::Bob => {
                if self.bits.len() != n {
                    return Err(Error::Dimension(format!(
                        "target x has {} bits, expected {n}",
                        self.bits.len()
                    )));
                }
                // Bob puts his subset on the first k indices and forces those coins.
                let mut ok = true;
                for &v in &self.bits[..k] {
                    let mut coin_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
                    ok &= self.force_coin(cf, v, &mut coin_rng)?;
                }
                for &v in &self.bits[k..] {
                    ok &= rng.random_range(0..2u8) == v;
                }
                Ok(ok)
            }
        }
    }

    pub fn monte_carlo(
        &self,
        n: usize,
        k: usize,
        cf: &CfPrimitive,
        seed: u64,
        trials: u64,
    ) -> Result<McEstimate> {
        crate::otcore::monte_carlo(seed, trials, |rng| self.run(n, k, cf, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_is_sorted_and_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let b = sample_subset(6, 3, &mut rng);
            assert_eq!(b.len(), 3);
            assert!(b.windows(2).all(|w| w[0] < w[1]));
            assert!(b.iter().all(|&i| i < 6));
        }
    }

    #[test]
    fn parse_primitives() {
        assert!((CfPrimitive::parse("ideal:0.75").unwrap().c() - 0.75).abs() < 1e-15);
        assert_eq!(CfPrimitive::parse("qutrit-commitment").unwrap().c(), 0.75);
        assert!(CfPrimitive::parse("ideal:0.4").is_err());
        assert!(CfPrimitive::parse("ideal:x").is_err());
        assert!(CfPrimitive::parse("mochon").is_err());
    }

    #[test]
    fn run_restricts_consistently() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cf = CfPrimitive::ideal(0.5).unwrap();
        for (n, k) in [(1, 1), (3, 2), (4, 4), (5, 1)] {
            let r = fot_run(n, k, &cf, &mut rng).unwrap();
            assert!(r.abort.is_none());
            for (&i, &v) in r.b.iter().zip(&r.x_b) {
                assert_eq!(r.x[i], v);
            }
        }
        assert!(fot_run(2, 3, &cf, &mut rng).is_err());
    }
}
