//! Explicit cheating strategies and matching upper bounds.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use serde::Serialize;

use crate::model::{
    alice_label, bob_label, parse_alice_label, parse_bob_label, Distribution, Party,
};
use crate::otcore::ir::{classical_projector, permutation_op, swap_op};
use crate::otcore::protocols::{phase_unitary, phi};
use crate::otcore::{
    exact_adversary_distribution, monte_carlo, scripted_adversary_run, Adversary,
    InteractiveProtocol, McEstimate, Op, OutputRule, RegId,
};
use crate::qlin::{
    self, basis_projector, haar_state, haar_unitary, hermitian_eigen, identity, ket, outer,
    partial_trace_matrix, tensor, trace_norm, unitary_from_first_column, zeros, ComplexMatrix,
    ComplexVector, DensityMatrix, PureState, SubsystemLayout, C64,
};
use crate::sdp::{discrimination_sdp, solve_sdp, SolverOptions};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Helstrom

#[derive(Debug, Clone, PartialEq)]
pub struct Helstrom {
    pub probability: f64,
    /// Projectors onto the nonnegative / negative eigenspaces of `s0 - s1`.
    pub measurement: [ComplexMatrix; 2],
}

/// Optimal equal-prior discrimination of two states.
pub fn helstrom(s0: &DensityMatrix, s1: &DensityMatrix) -> Result<Helstrom> {
    if s0.dim() != s1.dim() {
        return Err(Error::Dimension(format!(
            "states of dimension {} and {}",
            s0.dim(),
            s1.dim()
        )));
    }
    let diff = s0.matrix() - s1.matrix();
    let probability = 0.5 + 0.25 * trace_norm(&diff)?;
    let (vals, vecs) = hermitian_eigen(&diff);
    let d = s0.dim();
    let mut p0 = zeros(d, d);
    for (i, &v) in vals.iter().enumerate() {
        // Ties go to outcome 0.
        if v >= -1e-12 {
            let col = vecs.column(i).into_owned();
            p0 += &col * col.adjoint();
        }
    }
    let p0 = qlin::hermitian_part(&p0);
    let p1 = identity(d) - &p0;
    Ok(Helstrom {
        probability,
        measurement: [p0, p1],
    })
}

/// Success of an arbitrary two-outcome measurement `{m, I - m}`.
pub fn two_outcome_success(s0: &DensityMatrix, s1: &DensityMatrix, m0: &ComplexMatrix) -> f64 {
    let m1 = identity(m0.nrows()) - m0;
    0.5 * (qlin::inner_re(m0, s0.matrix()) + qlin::inner_re(&m1, s1.matrix()))
}

/// Bob's reduced states `σ_b = Tr_R |φ_b><φ_b|` of the qutrit OT.
pub fn qutrit_ot_sigma(b: usize) -> DensityMatrix {
    let layout = SubsystemLayout::new(vec![3, 3]).expect("valid layout");
    let v = phi(b);
    let rho = partial_trace_matrix(&outer(&v, &v), &layout, &[0]).expect("trace of a 9-dim state");
    DensityMatrix::new(rho).expect("reduced state is a density matrix")
}

/// The post-phase states `|ψ_{x0,x1}>` of the superposition attack.
pub fn superposition_states() -> Vec<PureState> {
    let u = ComplexVector::from_element(3, qlin::r(1.0 / 3f64.sqrt()));
    (0..4u8)
        .map(|i| {
            PureState::new(phase_unitary(i >> 1, i & 1) * &u).expect("phases preserve the norm")
        })
        .collect()
}

/// Bob's 4-dimensional measurement basis `|Ψ_{x0,x1}>`, indexed by `2 x0 + x1`.
pub fn superposition_basis() -> Vec<ComplexVector> {
    let s = |x: u8| if x == 0 { 1.0 } else { -1.0 };
    (0..4u8)
        .map(|i| {
            let (x0, x1) = (i >> 1, i & 1);
            ComplexVector::from_vec(
                [s(x0), s(x1), 1.0, s(x0) * s(x1)]
                    .iter()
                    .map(|&v| qlin::r(0.5 * v))
                    .collect(),
            )
        })
        .collect()
}

/// `min(1, d/n)`: decoding `n` equiprobable messages from a `d`-level system.
pub fn nayak_bound(d: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    (d as f64 / n as f64).min(1.0)
}

// ---------------------------------------------------------------------------
// Optimal discrimination

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrimination {
    pub probability: f64,
    /// Certified upper bound from the dual.
    pub upper_bound: f64,
    #[serde(skip)]
    pub povm: Vec<ComplexMatrix>,
}

/// Optimal discrimination of pure states with the given priors.
pub fn optimal_discrimination(states: &[PureState], priors: &[f64]) -> Result<Discrimination> {
    let rhos: Vec<ComplexMatrix> = states.iter().map(|s| s.projector()).collect();
    let problem = discrimination_sdp(&rhos, priors)?;
    let sol = solve_sdp(&problem, SolverOptions::default())?;
    Ok(Discrimination {
        probability: sol.primal_value,
        upper_bound: sol.dual_value,
        povm: sol.primal,
    })
}

/// Largest deviation of `povm` from a POVM (PSD elements summing to identity).
pub fn povm_violation(povm: &[ComplexMatrix]) -> f64 {
    let Some(first) = povm.first() else {
        return f64::INFINITY;
    };
    let d = first.nrows();
    let mut sum = zeros(d, d);
    let mut neg: f64 = 0.0;
    for e in povm {
        sum += e;
        neg = neg.max(-qlin::min_eigenvalue(e));
    }
    neg.max(qlin::max_abs(&(sum - identity(d))))
}

// ---------------------------------------------------------------------------
// Strategies

/// What the cheater is trying to achieve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Alice guesses Bob's choice `b`; the guess is the last character of her label.
    ChoiceBit,
    /// Bob guesses both of Alice's bits.
    BothBits,
    /// Bob guesses `x0 ⊕ x1`.
    Parity,
    /// Bob guesses `x_i`.
    Bit(usize),
    /// The honest party outputs this label.
    ForceOutput(String),
}

impl Target {
    /// Whether a run with this honest output and cheater guess is a success.
    /// An aborting honest party is never a success.
    pub fn succeeded(&self, honest: Option<&str>, guess: Option<&str>) -> bool {
        let Some(honest) = honest else { return false };
        match self {
            Target::ChoiceBit => {
                let (Some((b, _)), Some(g)) = (parse_bob_label(honest), guess) else {
                    return false;
                };
                b.len() == 1 && g.chars().last().and_then(|c| c.to_digit(10)) == Some(b[0] as u32)
            }
            Target::BothBits => guess == Some(honest),
            Target::Parity => match (parse_alice_label(honest), guess) {
                (Some(x), Some(g)) if x.len() == 2 => g == (x[0] ^ x[1]).to_string(),
                _ => false,
            },
            Target::Bit(i) => match (parse_alice_label(honest), guess) {
                (Some(x), Some(g)) => x.get(*i).is_some_and(|v| g == v.to_string()),
                _ => false,
            },
            Target::ForceOutput(label) => honest == label,
        }
    }
}

/// A cheating program together with the protocol it attacks and its goal.
#[derive(Debug, Clone)]
pub struct Strategy {
    pub name: String,
    pub party: Party,
    pub target: Target,
    pub protocol: InteractiveProtocol,
    pub adversary: Adversary,
}

impl Strategy {
    /// Exact joint distribution with the cheater's guess in its own slot.
    pub fn distribution(&self) -> Result<Distribution> {
        exact_adversary_distribution(&self.protocol, &self.adversary)
    }

    fn split<'a>(&self, alice: &'a str, bob: &'a str) -> (Option<&'a str>, Option<&'a str>) {
        let opt = |s: &'a str| (s != crate::model::ABORT).then_some(s);
        match self.party {
            Party::Alice => (opt(bob), opt(alice)),
            Party::Bob => (opt(alice), opt(bob)),
        }
    }

    /// Exact success probability.
    pub fn exact_value(&self) -> Result<f64> {
        let dist = self.distribution()?;
        Ok(dist
            .0
            .iter()
            .filter(|((a, b), _)| {
                let (h, g) = self.split(a, b);
                self.target.succeeded(h, g)
            })
            .map(|(_, p)| p)
            .sum())
    }

    /// Probability that the honest party aborts.
    pub fn honest_abort_probability(&self) -> Result<f64> {
        let dist = self.distribution()?;
        Ok(dist
            .0
            .iter()
            .filter(|((a, b), _)| self.split(a, b).0.is_none())
            .fold(0.0, |acc, (_, p)| acc + p))
    }

    /// One sampled run; true on success.
    pub fn trial(&self, rng: &mut dyn rand::RngCore) -> Result<bool> {
        let mut adv = self.adversary.clone();
        let run = scripted_adversary_run(&self.protocol, &mut adv, self.party, rng)?;
        Ok(run.protocol_abort.is_none()
            && self
                .target
                .succeeded(run.honest_output.as_deref(), run.guess.as_deref()))
    }

    /// One run against the random OT, replayed through the derandomizing
    /// wrapper with uniform wrapper inputs. Returns `(inner, wrapped)` success.
    /// Only choice-bit and both-bits targets have a wrapped counterpart.
    pub fn wrapped_trial(&self, rng: &mut dyn rand::RngCore) -> Result<(bool, bool)> {
        let mut adv = self.adversary.clone();
        let run = scripted_adversary_run(&self.protocol, &mut adv, self.party, rng)?;
        let (honest, guess) = match run.protocol_abort {
            None => (run.honest_output.as_deref(), run.guess.as_deref()),
            Some(_) => (None, None),
        };
        let inner = self.target.succeeded(honest, guess);
        let x_in: [u8; 2] = [rng.random_range(0..2), rng.random_range(0..2)];
        let b_in: u8 = rng.random_range(0..2);
        let wrapped = match (self.party, &self.target) {
            (Party::Alice, Target::ChoiceBit) => {
                let b = honest.and_then(parse_bob_label).map(|(b, _)| b);
                let g = guess
                    .and_then(|g| g.chars().last())
                    .and_then(|c| c.to_digit(10));
                match (b.as_deref(), g) {
                    (Some([b]), Some(g)) => {
                        let r = *b as u8 ^ b_in;
                        crate::otcore::wrapper_alice_guess(g as u8, r) == b_in
                    }
                    _ => false,
                }
            }
            (Party::Bob, Target::BothBits) => {
                // A cheating Bob may send any r; a uniform one suffices.
                let r: u8 = rng.random_range(0..2);
                match (
                    honest.and_then(parse_alice_label),
                    guess.and_then(parse_alice_label),
                ) {
                    (Some(x), Some(g)) if x.len() == 2 && g.len() == 2 => {
                        let s = [x[r as usize] ^ x_in[0], x[(1 ^ r) as usize] ^ x_in[1]];
                        crate::otcore::wrapper_bob_guess([g[0], g[1]], r, s) == x_in
                    }
                    _ => false,
                }
            }
            _ => {
                return Err(Error::Unsupported(
                    "wrapping needs a choice-bit or both-bits target".into(),
                ))
            }
        };
        Ok((inner, wrapped))
    }

    /// Success rate over sampled runs of the scripted adversary.
    pub fn monte_carlo(&self, seed: u64, trials: u64) -> Result<McEstimate> {
        monte_carlo(seed, trials, |rng| self.trial(rng))
    }
}

fn reg(ip: &InteractiveProtocol, name: &str) -> Result<RegId> {
    ip.register(name)
        .ok_or_else(|| Error::Validation(format!("{} has no register `{name}`", ip.name)))
}

fn projectors_3() -> Vec<ComplexMatrix> {
    (0..3).map(|i| basis_projector(3, i)).collect()
}

/// Alice measures the received qutrit in the computational basis and guesses
/// `b` from outcomes 0/1, with a fresh coin on outcome 2. Works on the qutrit
/// OT with inputs and on the random OT.
pub fn alice_basis_attack(ot: &InteractiveProtocol) -> Result<Strategy> {
    let m = reg(ot, "M")?;
    let base = ot.registers.len();
    let (rec, coin) = (base, base + 1);
    let measure = Op::Measure {
        regs: vec![m],
        projectors: projectors_3(),
        record: rec,
    };
    let guess = OutputRule {
        regs: vec![rec, coin],
        outcomes: vec![
            ("0".into(), tensor(&basis_projector(3, 0), &identity(2))),
            ("1".into(), tensor(&basis_projector(3, 1), &identity(2))),
            (
                "2:0".into(),
                tensor(&basis_projector(3, 2), &basis_projector(2, 0)),
            ),
            (
                "2:1".into(),
                tensor(&basis_projector(3, 2), &basis_projector(2, 1)),
            ),
        ],
    };
    let adversary = Adversary::new(
        "basis measurement",
        Party::Alice,
        vec![("rec".into(), 3), ("coin".into(), 2)],
        vec![vec![measure, Op::Random { record: coin }]],
        Some(guess),
    );
    Ok(Strategy {
        name: "alice-basis".into(),
        party: Party::Alice,
        target: Target::ChoiceBit,
        protocol: ot.clone(),
        adversary,
    })
}

/// Bob sends the uniform superposition, pads the reply to four levels and
/// measures in the `|Ψ_{x0,x1}>` basis.
pub fn bob_superposition_attack(ot: &InteractiveProtocol) -> Result<Strategy> {
    let m = reg(ot, "M")?;
    let base = ot.registers.len();
    let (q4, rec) = (base, base + 1);
    let uniform = ComplexVector::from_element(3, qlin::r(1.0 / 3f64.sqrt()));
    let send = Op::Unitary {
        regs: vec![m],
        matrix: unitary_from_first_column(&uniform),
    };
    let keep = Op::Unitary {
        regs: vec![m, q4],
        matrix: swap_op(3, 4),
    };
    let basis: Vec<ComplexMatrix> = superposition_basis().iter().map(|v| outer(v, v)).collect();
    let measure = Op::Measure {
        regs: vec![q4],
        projectors: basis,
        record: rec,
    };
    let guess = OutputRule {
        regs: vec![rec],
        outcomes: (0..4u8)
            .map(|i| {
                (
                    alice_label(&[i >> 1, i & 1]),
                    basis_projector(4, i as usize),
                )
            })
            .collect(),
    };
    let adversary = Adversary::new(
        "uniform superposition",
        Party::Bob,
        vec![("Q4".into(), 4), ("rec".into(), 4)],
        vec![vec![send], vec![keep, measure]],
        Some(guess),
    );
    Ok(Strategy {
        name: "bob-superposition".into(),
        party: Party::Bob,
        target: Target::BothBits,
        protocol: ot.clone(),
        adversary,
    })
}

fn bell(sign: f64) -> ComplexVector {
    (ket(9, 0) + ket(9, 4) * qlin::r(sign)) * qlin::r(FRAC_1_SQRT_2)
}

/// The state Bob holds on (returned qutrit, kept qutrit) after Alice's phases
/// in the parity attack.
pub fn parity_post_phase_state(x0: u8, x1: u8) -> PureState {
    let u = tensor(&phase_unitary(x0, x1), &identity(3));
    PureState::new(u * bell(1.0)).expect("unitary image of a unit vector")
}

/// Bob sends half of `(|00> + |11>)/√2` and distinguishes the two Bell states
/// that come back, learning `x0 ⊕ x1`.
pub fn bob_parity_attack(ot: &InteractiveProtocol) -> Result<Strategy> {
    let (m, r, q) = (reg(ot, "M")?, reg(ot, "R")?, reg(ot, "Q")?);
    let rec = ot.registers.len();
    let send = Op::Unitary {
        regs: vec![m, r],
        matrix: unitary_from_first_column(&bell(1.0)),
    };
    let keep = Op::Unitary {
        regs: vec![m, q],
        matrix: swap_op(3, 3),
    };
    let measure = Op::Measure {
        regs: vec![q, r],
        projectors: vec![
            outer(&bell(1.0), &bell(1.0)),
            outer(&bell(-1.0), &bell(-1.0)),
        ],
        record: rec,
    };
    let guess = OutputRule {
        regs: vec![rec],
        outcomes: vec![
            ("0".into(), basis_projector(3, 0)),
            ("1".into(), basis_projector(3, 1)),
        ],
    };
    let adversary = Adversary::new(
        "entangled parity",
        Party::Bob,
        vec![("rec".into(), 3)],
        vec![vec![send], vec![keep, measure]],
        Some(guess),
    );
    Ok(Strategy {
        name: "bob-parity".into(),
        party: Party::Bob,
        target: Target::Parity,
        protocol: ot.clone(),
        adversary,
    })
}

/// Best probability of guessing `x0` alone from the parity attack's states.
pub fn parity_attack_bit_guess() -> Result<f64> {
    let mix = |x0: u8| -> Result<DensityMatrix> {
        let m = (parity_post_phase_state(x0, 0).projector()
            + parity_post_phase_state(x0, 1).projector())
            * qlin::r(0.5);
        DensityMatrix::new(m)
    };
    Ok(helstrom(&mix(0)?, &mix(1)?)?.probability)
}

/// Alice's basis attack on the CF-from-OT composition: she guesses `b` and
/// sends `c = guess ⊕ coin` so that Bob's output `c ⊕ b` equals `coin`.
pub fn cf_from_ot_alice_attack(cf: &InteractiveProtocol, coin: u8) -> Result<Strategy> {
    let m = reg(cf, "M")?;
    let dm = cf.registers[m].dim;
    let base = cf.registers.len();
    let (rec, flip) = (base, base + 1);
    let measure = Op::Measure {
        regs: vec![m],
        projectors: pad_projectors(&projectors_3(), dm),
        record: rec,
    };
    let send = Op::Unitary {
        regs: vec![rec, flip, m],
        matrix: permutation_op(&[3, 2, dm], |d| {
            let guess = if d[0] < 2 { d[0] } else { d[1] };
            vec![d[0], d[1], (d[2] + (guess ^ coin as usize)) % dm]
        }),
    };
    let adversary = Adversary::new(
        "basis measurement, then steer c",
        Party::Alice,
        vec![("rec".into(), 3), ("coin".into(), 2)],
        vec![
            vec![measure, Op::Random { record: flip }],
            vec![send],
            vec![],
        ],
        None,
    );
    Ok(Strategy {
        name: "cf-from-ot-alice".into(),
        party: Party::Alice,
        target: Target::ForceOutput(bob_label(&[0], &[coin])),
        protocol: cf.clone(),
        adversary,
    })
}

/// Projectors on the first `p.nrows()` levels of a `d`-level register,
/// extended to a complete family by one more element for the rest.
fn pad_projectors(ps: &[ComplexMatrix], d: usize) -> Vec<ComplexMatrix> {
    let n = ps[0].nrows();
    let mut out: Vec<ComplexMatrix> = ps
        .iter()
        .map(|p| {
            let mut q = zeros(d, d);
            q.view_mut((0, 0), (n, n)).copy_from(p);
            q
        })
        .collect();
    // Padding levels are never populated; fold them into the last outcome.
    if d > n {
        let last = out.last_mut().expect("nonempty family");
        for i in n..d {
            last[(i, i)] = qlin::r(1.0);
        }
    }
    out
}

/// Bob's Helstrom attack on the commitment coin flip: guess `a` from the
/// first qutrit and announce `b' = guess ⊕ coin`.
pub fn cf_commitment_bob_attack(cf: &InteractiveProtocol, coin: u8) -> Result<Strategy> {
    let (m, q1, q2b) = (reg(cf, "M")?, reg(cf, "Q1")?, reg(cf, "Q2'")?);
    let rec = cf.registers.len();
    let h = helstrom(&qutrit_ot_sigma(0), &qutrit_ot_sigma(1))?;
    let keep = Op::Unitary {
        regs: vec![m, q1],
        matrix: swap_op(3, 3),
    };
    let measure = Op::Measure {
        regs: vec![q1],
        projectors: h.measurement.to_vec(),
        record: rec,
    };
    let announce = Op::Unitary {
        regs: vec![rec, m],
        matrix: permutation_op(&[2, 3], |d| vec![d[0], (d[1] + (d[0] ^ coin as usize)) % 3]),
    };
    let keep_second = Op::Unitary {
        regs: vec![m, q2b],
        matrix: swap_op(3, 3),
    };
    let adversary = Adversary::new(
        "Helstrom on the commitment",
        Party::Bob,
        vec![("rec".into(), 2)],
        vec![vec![keep, measure, announce], vec![keep_second], vec![]],
        None,
    );
    Ok(Strategy {
        name: "cf-commitment-bob".into(),
        party: Party::Bob,
        target: Target::ForceOutput(coin.to_string()),
        protocol: cf.clone(),
        adversary,
    })
}

/// Weights of the optimal committed state `Σ √w_i |ii>` for Alice.
pub const CF_ALICE_WEIGHTS: [f64; 3] = [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0];

/// Alice commits to `Σ √w_i |ii>` and later reveals `a = b' ⊕ coin`.
pub fn cf_commitment_alice_attack(
    cf: &InteractiveProtocol,
    coin: u8,
    weights: [f64; 3],
) -> Result<Strategy> {
    let (s, m) = (reg(cf, "S")?, reg(cf, "M")?);
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(
            "commitment weights must be a probability vector".into(),
        ));
    }
    let e = cf.registers.len();
    let mut v = ComplexVector::zeros(9);
    for (i, w) in weights.iter().enumerate() {
        v[4 * i] = qlin::r(w.sqrt());
    }
    let commit = Op::Unitary {
        regs: vec![m, e],
        matrix: unitary_from_first_column(&v),
    };
    let store = Op::Unitary {
        regs: vec![m, s],
        matrix: swap_op(3, 2),
    };
    let open = Op::Unitary {
        regs: vec![e, m],
        matrix: swap_op(3, 3),
    };
    let reveal = Op::Unitary {
        regs: vec![s, m],
        matrix: permutation_op(&[2, 3], |d| vec![d[0], (d[1] + (d[0] ^ coin as usize)) % 3]),
    };
    let adversary = Adversary::new(
        "entangled commitment",
        Party::Alice,
        vec![("E".into(), 3)],
        vec![vec![commit], vec![store, open], vec![reveal]],
        None,
    );
    Ok(Strategy {
        name: "cf-commitment-alice".into(),
        party: Party::Alice,
        target: Target::ForceOutput(bob_label(&[0], &[coin])),
        protocol: cf.clone(),
        adversary,
    })
}

/// Honest steps with a uniformly random guess, as a baseline.
pub fn honest_guess_baseline(
    ot: &InteractiveProtocol,
    party: Party,
    target: Target,
    labels: &[&str],
) -> Result<Strategy> {
    let steps: Vec<Vec<Op>> = ot
        .steps_of(party)
        .iter()
        .map(|&i| ot.steps[i].ops.clone())
        .collect();
    let n = labels.len();
    let rec = ot.registers.len();
    let draw = Op::Random { record: rec };
    let mut steps = steps;
    steps
        .last_mut()
        .ok_or_else(|| Error::Validation("party has no steps".into()))?
        .push(draw);
    let guess = OutputRule {
        regs: vec![rec],
        outcomes: labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.to_string(), basis_projector(n, i)))
            .collect(),
    };
    let adversary = Adversary::new(
        "honest, random guess",
        party,
        vec![("guess".into(), n)],
        steps,
        Some(guess),
    );
    Ok(Strategy {
        name: "honest-guess".into(),
        party,
        target,
        protocol: ot.clone(),
        adversary,
    })
}

// ---------------------------------------------------------------------------
// Learning in sequence

/// Bob's two guessing measurements and Alice's four-outcome measurement.
#[derive(Debug, Clone)]
pub struct MeasurementPair {
    pub p: [ComplexMatrix; 2],
    pub q: [ComplexMatrix; 2],
    /// Indexed by `2 x0 + x1`.
    pub m: [ComplexMatrix; 4],
}

fn check_projective(family: &[ComplexMatrix], tol: f64) -> bool {
    let d = family[0].nrows();
    let mut sum = zeros(d, d);
    for (i, a) in family.iter().enumerate() {
        if !qlin::is_hermitian(a, tol) || qlin::max_abs(&(a * a - a)) > tol {
            return false;
        }
        for b in &family[i + 1..] {
            if qlin::max_abs(&(a * b)) > tol {
                return false;
            }
        }
        sum += a;
    }
    qlin::max_abs(&(sum - identity(d))) <= tol
}

impl MeasurementPair {
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-10;
        if !check_projective(&self.p, tol)
            || !check_projective(&self.q, tol)
            || !check_projective(&self.m, tol)
        {
            return Err(Error::Validation(
                "measurement families must be complete projective families".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LisReport {
    pub success: f64,
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub bound: f64,
    pub theta: f64,
    pub theta_prime: f64,
    /// `‖DC|Ω>‖²` and its lower bound `cos²θ cos²(θ + θ')`.
    pub dc_norm: f64,
    pub dc_bound: f64,
}

/// Applies the two guessing measurements in both orders to `omega` on
/// (Alice's space, Bob's space) and compares with `a(2a - 1)²`.
pub fn lis_compose(
    omega: &PureState,
    meas: &MeasurementPair,
    layout: &SubsystemLayout,
) -> Result<LisReport> {
    meas.validate()?;
    let dims = layout.dims();
    if dims.len() != 2
        || dims[0] != meas.m[0].nrows()
        || dims[1] != meas.p[0].nrows()
        || dims[1] != meas.q[0].nrows()
    {
        return Err(Error::Dimension(
            "layout must be (Alice, Bob) matching the measurements".into(),
        ));
    }
    if omega.dim() != layout.total() {
        return Err(Error::Dimension(format!(
            "state of dimension {} on a {}-dim layout",
            omega.dim(),
            layout.total()
        )));
    }
    let c: ComplexMatrix = (0..4)
        .map(|x| tensor(&meas.m[x], &meas.p[x >> 1]))
        .fold(zeros(omega.dim(), omega.dim()), |a, b| a + b);
    let d: ComplexMatrix = (0..4)
        .map(|x| tensor(&meas.m[x], &meas.q[x & 1]))
        .fold(zeros(omega.dim(), omega.dim()), |a, b| a + b);
    let v = omega.amplitudes();
    let cv = &c * v;
    let dv = &d * v;
    let p = cv.norm_squared();
    let q = dv.norm_squared();
    if p < 0.5 || q < 0.5 {
        return Err(Error::Precondition(format!(
            "need p, q ≥ 1/2, got p = {p}, q = {q}"
        )));
    }
    let dc = (&d * &cv).norm_squared();
    let cd = (&c * &dv).norm_squared();
    let success = 0.5 * (dc + cd);
    let a = 0.5 * (p + q);
    let bound = a * (2.0 * a - 1.0).powi(2);
    let theta = p.sqrt().min(1.0).acos();
    let theta_prime = q.sqrt().min(1.0).acos();
    let dc_bound = p * (theta + theta_prime).cos().powi(2);
    if success < bound - 1e-10 {
        return Err(Error::Validation(format!(
            "sequential success {success} below a(2a-1)² = {bound}"
        )));
    }
    Ok(LisReport {
        success,
        p,
        q,
        a,
        bound,
        theta,
        theta_prime,
        dc_norm: dc,
        dc_bound,
    })
}

/// A random instance meeting the preconditions: Haar state on `4 r ⊗ d_b`,
/// `M` from the computational basis in four blocks of `r`, `P` and `Q`
/// projecting onto random half-dimensional subspaces. Rejects until
/// `p, q ≥ 1/2`.
pub fn random_lis_instance<R: Rng + ?Sized>(
    r: usize,
    d_b: usize,
    rng: &mut R,
) -> Result<(PureState, MeasurementPair, SubsystemLayout)> {
    if r == 0 || d_b < 2 || !d_b.is_multiple_of(2) {
        return Err(Error::Validation(
            "need r ≥ 1 and an even Bob dimension".into(),
        ));
    }
    let da = 4 * r;
    let layout = SubsystemLayout::new(vec![da, d_b])?;
    let m: [ComplexMatrix; 4] =
        std::array::from_fn(|x| classical_projector(&[da], |i| i[0] / r == x));
    let half = |rng: &mut R| -> [ComplexMatrix; 2] {
        let u = haar_unitary(d_b, rng);
        let cols = u.columns(0, d_b / 2).into_owned();
        let p0 = qlin::hermitian_part(&(&cols * cols.adjoint()));
        let p1 = identity(d_b) - &p0;
        [p0, p1]
    };
    for _ in 0..10_000 {
        let meas = MeasurementPair {
            p: half(rng),
            q: half(rng),
            m: m.clone(),
        };
        let omega = haar_state(da * d_b, rng);
        let c: ComplexMatrix = (0..4)
            .map(|x| tensor(&meas.m[x], &meas.p[x >> 1]))
            .fold(zeros(da * d_b, da * d_b), |a, b| a + b);
        let d: ComplexMatrix = (0..4)
            .map(|x| tensor(&meas.m[x], &meas.q[x & 1]))
            .fold(zeros(da * d_b, da * d_b), |a, b| a + b);
        let v = omega.amplitudes();
        if (&c * v).norm_squared() >= 0.5 && (&d * v).norm_squared() >= 0.5 {
            return Ok((omega, meas, layout));
        }
    }
    Err(Error::Precondition(
        "no instance met p, q ≥ 1/2 after 10000 draws".into(),
    ))
}

// ---------------------------------------------------------------------------
// Purification

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurificationCheck {
    pub prob_entangled: f64,
    pub prob_purified: f64,
    /// Largest entry difference between the two ensembles' Gram matrices.
    pub gram_difference: f64,
}

/// Bob sends `Σ α_i |i>|e_i>` and keeps the ancilla, against the purified
/// strategy that sends `Σ α_i |i>`. The optimal measurement for the purified
/// ensemble is transported through the isometry `|i> -> |i>|e_i>`, and both
/// success probabilities are evaluated directly.
pub fn purification_equivalence_check(
    alpha: &[C64],
    encodings: &[ComplexVector],
) -> Result<PurificationCheck> {
    if alpha.len() != 3 || encodings.len() != 3 {
        return Err(Error::Dimension(
            "one amplitude and one encoding per qutrit level".into(),
        ));
    }
    let norm: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "amplitudes have squared norm {norm}"
        )));
    }
    let de = encodings[0].len();
    if encodings
        .iter()
        .any(|e| e.len() != de || (e.norm() - 1.0).abs() > 1e-9)
    {
        return Err(Error::Validation(
            "encodings must be unit vectors of equal dimension".into(),
        ));
    }
    let pure = ComplexVector::from_column_slice(alpha);
    // W |i> = |i>|e_i>
    let w = ComplexMatrix::from_fn(3 * de, 3, |row, col| {
        if row / de == col {
            encodings[col][row % de]
        } else {
            C64::default()
        }
    });
    let purified: Vec<ComplexVector> = (0..4u8)
        .map(|x| phase_unitary(x >> 1, x & 1) * &pure)
        .collect();
    let entangled: Vec<ComplexVector> = purified.iter().map(|v| &w * v).collect();

    let states: Vec<PureState> = purified
        .iter()
        .map(|v| PureState::new(v.clone()))
        .collect::<Result<_>>()?;
    let opt = optimal_discrimination(&states, &[0.25; 4])?;
    let rest = identity(3 * de) - &w * w.adjoint();
    let lifted: Vec<ComplexMatrix> = opt
        .povm
        .iter()
        .map(|e| &w * e * w.adjoint() + &rest * qlin::r(0.25))
        .collect();
    let success = |povm: &[ComplexMatrix], vs: &[ComplexVector]| -> f64 {
        povm.iter()
            .zip(vs)
            .map(|(e, v)| 0.25 * (v.adjoint() * e * v)[(0, 0)].re)
            .sum()
    };
    let gram = |vs: &[ComplexVector]| ComplexMatrix::from_fn(4, 4, |i, j| vs[i].dotc(&vs[j]));
    Ok(PurificationCheck {
        prob_entangled: success(&lifted, &entangled),
        prob_purified: success(&opt.povm, &purified),
        gram_difference: qlin::max_abs(&(gram(&entangled) - gram(&purified))),
    })
}

/// Random amplitudes and encodings for the purification check.
pub fn random_entangled_strategy<R: Rng + ?Sized>(
    ancilla_dim: usize,
    rng: &mut R,
) -> (Vec<C64>, Vec<ComplexVector>) {
    let alpha = haar_state(3, rng)
        .into_amplitudes()
        .iter()
        .copied()
        .collect();
    let enc = (0..3)
        .map(|_| haar_state(ancilla_dim, rng).into_amplitudes())
        .collect();
    (alpha, enc)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    pub strategy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    Helstrom {
        trace_distance: f64,
    },
    Nayak {
        dimension: usize,
        messages: usize,
    },
    Sdp {
        dual_value: f64,
        max_residual: f64,
        pass: bool,
    },
    /// Product of per-coin forcing probabilities over `coins` independent
    /// coin flips, times the probability of the uncontrolled choices.
    Composition {
        per_coin: f64,
        coins: usize,
        uncontrolled: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperBound {
    pub value: f64,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheatReport {
    pub party: Party,
    pub target: String,
    pub lower_bound: LowerBound,
    pub upper_bound: Option<UpperBound>,
    pub seed: u64,
}

/// Helstrom bound on Alice learning `b` in the qutrit OT.
pub fn qutrit_ot_alice_upper_bound() -> Result<UpperBound> {
    let (s0, s1) = (qutrit_ot_sigma(0), qutrit_ot_sigma(1));
    let h = helstrom(&s0, &s1)?;
    Ok(UpperBound {
        value: h.probability,
        certificate: Certificate::Helstrom {
            trace_distance: 0.5 * trace_norm(&(s0.matrix() - s1.matrix()))?,
        },
    })
}

/// Nayak bound on Bob learning both bits from one qutrit.
pub fn qutrit_ot_bob_upper_bound() -> UpperBound {
    UpperBound {
        value: nayak_bound(3, 4),
        certificate: Certificate::Nayak {
            dimension: 3,
            messages: 4,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn helstrom_examples() {
        let (s0, s1) = (qutrit_ot_sigma(0), qutrit_ot_sigma(1));
        let h = helstrom(&s0, &s1).unwrap();
        assert!((h.probability - 0.75).abs() < 1e-12);
        assert!((two_outcome_success(&s0, &s1, &h.measurement[0]) - 0.75).abs() < 1e-12);
        // Zero eigenspace (|2>) goes to outcome 0.
        assert!((h.measurement[0][(2, 2)].re - 1.0).abs() < 1e-12);
        assert!((helstrom(&s0, &s0).unwrap().probability - 0.5).abs() < 1e-12);
        let a = PureState::basis(3, 0).density();
        let b = PureState::basis(3, 1).density();
        assert!((helstrom(&a, &b).unwrap().probability - 1.0).abs() < 1e-12);
        assert!(helstrom(&a, &PureState::basis(2, 0).density()).is_err());
    }

    #[test]
    fn superposition_overlaps() {
        let basis = superposition_basis();
        for (i, psi) in superposition_states().iter().enumerate() {
            let mut padded = ComplexVector::zeros(4);
            padded.rows_mut(0, 3).copy_from(psi.amplitudes());
            assert!((basis[i].dotc(&padded).norm_sqr() - 0.75).abs() < 1e-12);
            for (j, other) in basis.iter().enumerate() {
                let ip = basis[i].dotc(other).norm();
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nayak_examples() {
        assert_eq!(nayak_bound(3, 4), 0.75);
        assert_eq!(nayak_bound(5, 5), 1.0);
        assert_eq!(nayak_bound(1, 2), 0.5);
    }

    #[test]
    fn lis_edge_cases() {
        // p = q = 1: Ω = |0>_A |0>_B with P0, Q0 containing |0>.
        let m: [ComplexMatrix; 4] = std::array::from_fn(|x| basis_projector(4, x));
        let p = [basis_projector(2, 0), basis_projector(2, 1)];
        let meas = MeasurementPair {
            p: p.clone(),
            q: p,
            m,
        };
        let layout = SubsystemLayout::new(vec![4, 2]).unwrap();
        let rep = lis_compose(&PureState::basis(8, 0), &meas, &layout).unwrap();
        assert!((rep.success - 1.0).abs() < 1e-12 && (rep.bound - 1.0).abs() < 1e-12);

        // Ω = |0>_A |+>_B: p = q = 1/2, bound 0.
        let plus = ComplexVector::from_element(2, qlin::r(FRAC_1_SQRT_2));
        let omega = PureState::new(tensor_vec(&ket(4, 0), &plus)).unwrap();
        let rep = lis_compose(&omega, &meas, &layout).unwrap();
        assert!(rep.bound.abs() < 1e-12 && rep.success >= 0.0);

        // Ω = |0>_A |1>_B: p = 0.
        assert!(matches!(
            lis_compose(&PureState::basis(8, 1), &meas, &layout),
            Err(Error::Precondition(_))
        ));
    }

    fn tensor_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
        qlin::tensor_vec(a, b)
    }

    #[test]
    fn purification_trivial_cases() {
        let s = qlin::r(1.0 / 3f64.sqrt());
        let alpha = vec![s; 3];
        let orth: Vec<ComplexVector> = (0..3).map(|i| ket(3, i)).collect();
        let c = purification_equivalence_check(&alpha, &orth).unwrap();
        assert!((c.prob_entangled - c.prob_purified).abs() < 1e-10);
        assert!((c.prob_purified - 0.75).abs() < 1e-6);
        let same: Vec<ComplexVector> = (0..3).map(|_| ket(2, 1)).collect();
        let c = purification_equivalence_check(&alpha, &same).unwrap();
        assert!((c.prob_entangled - c.prob_purified).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, e) = random_entangled_strategy(2, &mut rng);
        let c = purification_equivalence_check(&a, &e).unwrap();
        assert!((c.prob_entangled - c.prob_purified).abs() < 1e-10 && c.gram_difference < 1e-12);
    }
}
