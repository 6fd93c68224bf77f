//! Direct qutrit OT execution and the classical reductions between OT,
//! random OT and coin flipping.

use rand::{Rng, RngCore};
use serde::Serialize;

use super::harness::run_honest_sampled;
use super::protocols::{phase_unitary, phi, phi_prime, RandomOt};
use super::world::sample_index;
use crate::model::{parse_alice_label, parse_bob_label};
use crate::qlin::{apply_unitary, PureState, SubsystemLayout};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OtOutcome {
    /// `(x0, x1)`, or `None` for Abort.
    pub alice_out: Option<[u8; 2]>,
    /// `(b, y)`, or `None` for Abort.
    pub bob_out: Option<[u8; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CfOutcome {
    pub alice: Option<u8>,
    pub bob: Option<u8>,
}

impl CfOutcome {
    pub fn agreed(&self) -> Option<u8> {
        match (self.alice, self.bob) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QutritOtTranscript {
    /// Bob's prepared state `|φ_b>`.
    pub phi_b: PureState,
    /// The state after Alice's phases, `|ψ_b>`.
    pub psi_b: PureState,
    /// Probabilities of `Π_0`, `Π_1` and Abort.
    pub probabilities: [f64; 3],
    pub outcome: usize,
}

/// Runs the qutrit OT directly on the two-qutrit state with fixed inputs.
pub fn qutrit_ot_run(
    b: u8,
    x0: u8,
    x1: u8,
    rng: &mut dyn RngCore,
) -> Result<(OtOutcome, QutritOtTranscript)> {
    if b > 1 || x0 > 1 || x1 > 1 {
        return Err(Error::Domain {
            value: b.max(x0).max(x1) as f64,
            domain: "{0, 1}",
        });
    }
    let layout = SubsystemLayout::new(vec![3, 3])?;
    let phi_b = PureState::new(phi(b as usize))?;
    let psi_b = apply_unitary(&phi_b, &phase_unitary(x0, x1), &layout, &[0])?;
    let p0 = PureState::new(phi(b as usize))?.inner(&psi_b).norm_sqr();
    let p1 = PureState::new(phi_prime(b as usize))?
        .inner(&psi_b)
        .norm_sqr();
    let probabilities = [p0, p1, (1.0 - p0 - p1).max(0.0)];
    let outcome = sample_index(&probabilities, rng);
    let bob_out = (outcome < 2).then_some([b, outcome as u8]);
    Ok((
        OtOutcome {
            alice_out: Some([x0, x1]),
            bob_out,
        },
        QutritOtTranscript {
            phi_b,
            psi_b,
            probabilities,
            outcome,
        },
    ))
}

/// Outputs of one random-OT run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RandomOtSample {
    pub x: Option<[u8; 2]>,
    /// `(b, y)`.
    pub bob: Option<[u8; 2]>,
}

impl RandomOtSample {
    pub fn from_labels(alice: Option<&str>, bob: Option<&str>) -> Result<Self> {
        let x = match alice {
            None => None,
            Some(l) => match parse_alice_label(l).as_deref() {
                Some(&[x0, x1]) => Some([x0, x1]),
                _ => return Err(Error::UnknownLabel(l.into())),
            },
        };
        let bob = match bob {
            None => None,
            Some(l) => match parse_bob_label(l) {
                Some((s, v)) if s.len() == 1 && s[0] < 2 => Some([s[0] as u8, v[0]]),
                _ => return Err(Error::UnknownLabel(l.into())),
            },
        };
        Ok(RandomOtSample { x, bob })
    }
}

/// One honest sampled run of a random-OT protocol.
pub fn sample_random_ot(rot: &RandomOt, rng: &mut dyn RngCore) -> Result<RandomOtSample> {
    let run = run_honest_sampled(&rot.protocol, rng, false)?;
    RandomOtSample::from_labels(run.outcome.alice.as_deref(), run.outcome.bob.as_deref())
}

/// OT with inputs obtained from one random-OT sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Derandomized {
    pub outcome: OtOutcome,
    /// Bob's message `r = b ⊕ B`.
    pub r: Option<u8>,
    /// Alice's masks `s_c = x_{c⊕r} ⊕ X_c`.
    pub s: Option<[u8; 2]>,
}

/// Bob sends `r = b ⊕ B`; Alice sends `s_c = x_{c⊕r} ⊕ X_c`; Bob outputs
/// `y' = s_B ⊕ y`. An abort in the random OT propagates to the same party.
pub fn derandomize(sample: RandomOtSample, x_in: [u8; 2], b_in: u8) -> Derandomized {
    let alice_out = sample.x.map(|_| x_in);
    let (Some(x), Some([b, y])) = (sample.x, sample.bob) else {
        return Derandomized {
            outcome: OtOutcome {
                alice_out,
                bob_out: None,
            },
            r: None,
            s: None,
        };
    };
    let r = b ^ b_in;
    let s = [x[r as usize] ^ x_in[0], x[(1 ^ r) as usize] ^ x_in[1]];
    let y_prime = s[b_in as usize] ^ y;
    Derandomized {
        outcome: OtOutcome {
            alice_out,
            bob_out: Some([b_in, y_prime]),
        },
        r: Some(r),
        s: Some(s),
    }
}

/// OT with inputs `(X0, X1)` and `B` from one run of a random-OT protocol.
pub fn ot_from_random_ot(
    rot: &RandomOt,
    x0: u8,
    x1: u8,
    b: u8,
    rng: &mut dyn RngCore,
) -> Result<Derandomized> {
    Ok(derandomize(sample_random_ot(rot, rng)?, [x0, x1], b))
}

/// Cheating Alice's guess of `B` in the derandomized OT, from her guess of `b`.
pub fn wrapper_alice_guess(inner_guess: u8, r: u8) -> u8 {
    inner_guess ^ r
}

/// Cheating Bob's guess of `(X0, X1)` in the derandomized OT, from his guess
/// of `(x0, x1)`, his message `r` and Alice's masks `s`.
pub fn wrapper_bob_guess(inner_guess: [u8; 2], r: u8, s: [u8; 2]) -> [u8; 2] {
    [
        inner_guess[r as usize] ^ s[0],
        inner_guess[(1 ^ r) as usize] ^ s[1],
    ]
}

/// Alice's and Bob's coins given the random-OT sample, Alice's coin `c` and
/// Bob's announcement.
pub fn cf_resolve(sample: RandomOtSample, c: u8, announced: Option<[u8; 2]>) -> CfOutcome {
    let bob = sample.bob.map(|[b, _]| c ^ b);
    let alice = match (sample.x, announced) {
        (Some(x), Some([b, y])) if b < 2 && x[b as usize] == y => Some(c ^ b),
        _ => None,
    };
    CfOutcome { alice, bob }
}

/// One honest run of coin flipping from random OT.
pub fn cf_from_ot(rot: &RandomOt, rng: &mut dyn RngCore) -> Result<CfOutcome> {
    let sample = sample_random_ot(rot, rng)?;
    let c: u8 = rng.random_range(0..2);
    Ok(cf_resolve(sample, c, sample.bob))
}
