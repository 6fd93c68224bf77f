//! Interactive protocols: an executable IR, the qutrit OT and commitment
//! protocols, and the classical OT / random-OT / CF reductions.

pub mod harness;
pub mod ir;
pub mod protocols;
pub mod reductions;
pub mod world;

pub use harness::{
    exact_adversary_distribution, exact_event_probability, monte_carlo, run_honest_sampled,
    run_programs, scripted_adversary_run, trial_rng, Adversary, AdversaryRun, HonestProgram,
    McEstimate, PartyProgram, RunOutcome, RunRecord, StepContext, Transcript, TranscriptStep,
};
pub use ir::{InteractiveProtocol, Op, OutputRule, Owner, ProtocolBuilder, RegId, Register, Step};
pub use protocols::{
    announce_coin, cf_from_ot_protocol, qutrit_commitment_cf, qutrit_ot_with_inputs,
    qutrit_random_ot, random_ot_from_ot, OtWithInputs, RandomOt,
};
pub use reductions::{
    cf_from_ot, cf_resolve, derandomize, ot_from_random_ot, qutrit_ot_run, sample_random_ot,
    wrapper_alice_guess, wrapper_bob_guess, CfOutcome, Derandomized, OtOutcome, QutritOtTranscript,
    RandomOtSample,
};
pub use world::{exact_distribution, World};
