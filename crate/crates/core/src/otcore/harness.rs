//! Party programs and the execution harness for honest and adversarial runs.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ir::{InteractiveProtocol, Op, OutputRule, Owner, RegId};
use super::world::{exact_distribution, World};
use crate::model::{Distribution, Party, ABORT};
use crate::{Error, Result};

pub struct StepContext<'a> {
    pub world: &'a mut World,
    pub protocol: &'a InteractiveProtocol,
    /// Index of the current step in `protocol.steps`.
    pub step: usize,
    pub rng: &'a mut dyn RngCore,
}

/// One party's behaviour: called on each of its steps, then once to produce
/// its output (`None` for Abort).
pub trait PartyProgram {
    fn party(&self) -> Party;

    fn start(&mut self, _world: &mut World) -> Result<()> {
        Ok(())
    }

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<()>;

    fn finish(&mut self, ctx: &mut StepContext<'_>) -> Result<Option<String>>;
}

/// Follows the protocol's own ops and output rule.
#[derive(Debug, Clone, Copy)]
pub struct HonestProgram {
    pub party: Party,
}

impl PartyProgram for HonestProgram {
    fn party(&self) -> Party {
        self.party
    }

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<()> {
        for op in &ctx.protocol.steps[ctx.step].ops {
            ctx.world.exec(self.party, op, ctx.rng)?;
        }
        Ok(())
    }

    fn finish(&mut self, ctx: &mut StepContext<'_>) -> Result<Option<String>> {
        Ok(ctx
            .world
            .sample_output(ctx.protocol.output(self.party), ctx.rng))
    }
}

/// A cheating party written in the same op language as the protocol.
///
/// Register ids below the protocol's register count refer to protocol
/// registers; larger ids refer to `registers` in order. `steps[i]` replaces
/// the party's `i`-th step. The optional `guess` rule reads the adversary's
/// declared guess at the end.
#[derive(Debug, Clone)]
pub struct Adversary {
    pub name: String,
    pub party: Party,
    pub registers: Vec<(String, usize)>,
    pub steps: Vec<Vec<Op>>,
    pub guess: Option<OutputRule>,
    cursor: usize,
}

impl Adversary {
    pub fn new(
        name: &str,
        party: Party,
        registers: Vec<(String, usize)>,
        steps: Vec<Vec<Op>>,
        guess: Option<OutputRule>,
    ) -> Self {
        Adversary {
            name: name.into(),
            party,
            registers,
            steps,
            guess,
            cursor: 0,
        }
    }

    /// The protocol with this adversary substituted for its party.
    pub fn substituted(&self, ip: &InteractiveProtocol) -> Result<InteractiveProtocol> {
        ip.substitute(
            self.party,
            &self.registers,
            &self.steps,
            self.guess.clone().unwrap_or_default(),
        )
    }
}

impl PartyProgram for Adversary {
    fn party(&self) -> Party {
        self.party
    }

    fn start(&mut self, world: &mut World) -> Result<()> {
        self.cursor = 0;
        for (_, dim) in &self.registers {
            world.alloc(Owner::of(self.party), *dim);
        }
        Ok(())
    }

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<()> {
        let ops = self.steps.get(self.cursor).ok_or_else(|| {
            Error::Validation(format!(
                "{} has no program for step {}",
                self.name, ctx.step
            ))
        })?;
        self.cursor += 1;
        for op in ops {
            ctx.world.exec(self.party, op, ctx.rng)?;
        }
        Ok(())
    }

    fn finish(&mut self, ctx: &mut StepContext<'_>) -> Result<Option<String>> {
        Ok(match &self.guess {
            Some(rule) => ctx.world.sample_output(rule, ctx.rng),
            None => None,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptStep {
    pub actor: Party,
    pub label: String,
    /// Computational-basis distribution of the message register after the step.
    pub message: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_after: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub alice: Option<String>,
    pub bob: Option<String>,
    /// Set when a program failed mid-protocol; both outputs are then Abort.
    pub protocol_abort: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub outcome: RunOutcome,
    pub steps: Vec<TranscriptStep>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Transcript {
    pub seed: u64,
    pub steps: Vec<TranscriptStep>,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn into_transcript(self, seed: u64) -> Transcript {
        Transcript {
            seed,
            steps: self.steps,
            outcome: self.outcome,
        }
    }
}

/// Runs the protocol with the given programs for Alice and Bob.
pub fn run_programs(
    ip: &InteractiveProtocol,
    alice: &mut dyn PartyProgram,
    bob: &mut dyn PartyProgram,
    rng: &mut dyn RngCore,
    keep_states: bool,
) -> Result<RunRecord> {
    if alice.party() != Party::Alice || bob.party() != Party::Bob {
        return Err(Error::Precondition(
            "programs are assigned to the wrong parties".into(),
        ));
    }
    let mut world = World::new(&ip.registers);
    alice.start(&mut world)?;
    bob.start(&mut world)?;
    let mut steps = Vec::with_capacity(ip.steps.len());
    for (i, step) in ip.steps.iter().enumerate() {
        let program: &mut dyn PartyProgram = match step.actor {
            Party::Alice => alice,
            Party::Bob => bob,
        };
        let mut ctx = StepContext {
            world: &mut world,
            protocol: ip,
            step: i,
            rng,
        };
        if let Err(e) = program.step(&mut ctx) {
            return Ok(RunRecord {
                outcome: RunOutcome {
                    alice: None,
                    bob: None,
                    protocol_abort: Some(format!("step {i} ({}): {e}", step.label)),
                },
                steps,
            });
        }
        steps.push(TranscriptStep {
            actor: step.actor,
            label: step.label.clone(),
            message: world.basis_probabilities(ip.message),
            state_after: keep_states
                .then(|| world.amplitudes().iter().map(|z| [z.re, z.im]).collect()),
        });
    }
    let end = ip.steps.len();
    let a = alice.finish(&mut StepContext {
        world: &mut world,
        protocol: ip,
        step: end,
        rng,
    })?;
    let b = bob.finish(&mut StepContext {
        world: &mut world,
        protocol: ip,
        step: end,
        rng,
    })?;
    Ok(RunRecord {
        outcome: RunOutcome {
            alice: a,
            bob: b,
            protocol_abort: None,
        },
        steps,
    })
}

/// One honest execution with sampled measurements.
pub fn run_honest_sampled(
    ip: &InteractiveProtocol,
    rng: &mut dyn RngCore,
    keep_states: bool,
) -> Result<RunRecord> {
    run_programs(
        ip,
        &mut HonestProgram {
            party: Party::Alice,
        },
        &mut HonestProgram { party: Party::Bob },
        rng,
        keep_states,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryRun {
    pub side: Party,
    pub honest_output: Option<String>,
    pub honest_aborted: bool,
    pub guess: Option<String>,
    pub protocol_abort: Option<String>,
}

/// Runs `adversary` as `side` against the honest other party.
pub fn scripted_adversary_run(
    ip: &InteractiveProtocol,
    adversary: &mut dyn PartyProgram,
    side: Party,
    rng: &mut dyn RngCore,
) -> Result<AdversaryRun> {
    if adversary.party() != side {
        return Err(Error::Precondition(format!(
            "adversary plays {}, not {side}",
            adversary.party()
        )));
    }
    let mut honest = HonestProgram {
        party: side.other(),
    };
    let record = match side {
        Party::Alice => run_programs(ip, adversary, &mut honest, rng, false)?,
        Party::Bob => run_programs(ip, &mut honest, adversary, rng, false)?,
    };
    let (honest_output, guess) = match side {
        Party::Alice => (record.outcome.bob, record.outcome.alice),
        Party::Bob => (record.outcome.alice, record.outcome.bob),
    };
    Ok(AdversaryRun {
        side,
        honest_aborted: honest_output.is_none(),
        honest_output,
        guess,
        protocol_abort: record.outcome.protocol_abort,
    })
}

/// Exact joint distribution of (Alice label, Bob label) with the adversary's
/// guess in its own party's slot (`abort` when it declares none).
pub fn exact_adversary_distribution(
    ip: &InteractiveProtocol,
    adversary: &Adversary,
) -> Result<Distribution> {
    exact_distribution(&adversary.substituted(ip)?)
}

/// Exact probability of an event over (honest output, adversary guess).
pub fn exact_event_probability(
    ip: &InteractiveProtocol,
    adversary: &Adversary,
    event: impl Fn(Option<&str>, Option<&str>) -> bool,
) -> Result<f64> {
    let dist = exact_adversary_distribution(ip, adversary)?;
    fn opt(s: &str) -> Option<&str> {
        (s != ABORT).then_some(s)
    }
    Ok(dist
        .0
        .iter()
        .filter(|((a, b), _)| match adversary.party {
            Party::Alice => event(opt(b), opt(a)),
            Party::Bob => event(opt(a), opt(b)),
        })
        .map(|(_, p)| p)
        .sum())
}

/// Deterministic RNG for trial `trial` of a seeded batch.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Binomial Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    /// Binomial standard error `sqrt(p(1-p)/n)` at the estimated rate.
    pub std_error: f64,
}

impl McEstimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        let rate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let std_error = if trials == 0 {
            0.0
        } else {
            (rate * (1.0 - rate) / trials as f64).sqrt()
        };
        McEstimate {
            successes,
            trials,
            rate,
            std_error,
        }
    }

    /// Whether `value` lies within `k` standard errors, using the standard
    /// error at `value` itself so that rates of exactly 0 or 1 are handled.
    pub fn consistent_with(&self, value: f64, k: f64) -> bool {
        let v = value.clamp(0.0, 1.0);
        let sigma = (v * (1.0 - v) / self.trials.max(1) as f64).sqrt();
        (self.rate - value).abs() <= k * sigma + 1e-12
    }
}

/// Runs `trials` independent trials with per-trial RNG streams.
pub fn monte_carlo(
    seed: u64,
    trials: u64,
    mut trial: impl FnMut(&mut ChaCha8Rng) -> Result<bool>,
) -> Result<McEstimate> {
    let mut successes = 0;
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        if trial(&mut rng)? {
            successes += 1;
        }
    }
    Ok(McEstimate::new(successes, trials))
}

/// Register id that the adversary's `i`-th private register will receive.
pub fn adversary_register(ip: &InteractiveProtocol, i: usize) -> RegId {
    ip.registers.len() + i
}
