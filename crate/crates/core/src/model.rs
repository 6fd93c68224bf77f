//! Round-structured two-party protocols on `A ⊗ M ⊗ B` with final POVMs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::binomial;
use crate::otcore::ir::{InteractiveProtocol, Op, OutputRule, Owner};
use crate::otcore::world;
use crate::qlin::{
    self, apply_on_factors, fourier, identity, is_finite, is_hermitian, is_unitary, max_abs,
    min_eigenvalue, ComplexMatrix, PureState, C64, DERIVED_TOL, OPERATOR_TOL, PSD_FLOOR,
};
use crate::{Error, Result};

/// Label of the abort outcome in either party's POVM.
pub const ABORT: &str = "abort";

/// Largest message dimension accepted by the deferred-measurement compiler.
pub const MAX_COMPILED_MESSAGE_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
        })
    }
}

impl std::str::FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alice" | "Alice" => Ok(Party::Alice),
            "bob" | "Bob" => Ok(Party::Bob),
            _ => Err(Error::Validation(format!("unknown party `{s}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Outcome labels

/// Alice's label for the bit string `x`.
pub fn alice_label(x: &[u8]) -> String {
    x.iter().map(|b| char::from(b'0' + b)).collect()
}

/// Bob's label for index set `subset` and bits `xb`.
pub fn bob_label(subset: &[usize], xb: &[u8]) -> String {
    let idx: Vec<String> = subset.iter().map(|i| i.to_string()).collect();
    format!("b={{{}}};xb={}", idx.join(","), alice_label(xb))
}

pub fn parse_alice_label(label: &str) -> Option<Vec<u8>> {
    if label.is_empty() {
        return None;
    }
    label
        .bytes()
        .map(|c| match c {
            b'0' => Some(0),
            b'1' => Some(1),
            _ => None,
        })
        .collect()
}

pub fn parse_bob_label(label: &str) -> Option<(Vec<usize>, Vec<u8>)> {
    let rest = label.strip_prefix("b={")?;
    let (idx, bits) = rest.split_once("};xb=")?;
    let subset = idx
        .split(',')
        .map(|s| s.trim().parse::<usize>().ok())
        .collect::<Option<Vec<_>>>()?;
    let bits = parse_alice_label(bits)?;
    (subset.len() == bits.len()).then_some((subset, bits))
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// All bit strings of length `n`, in increasing binary order.
pub fn bit_strings(n: usize) -> Vec<Vec<u8>> {
    (0..1usize << n)
        .map(|v| (0..n).map(|i| ((v >> (n - 1 - i)) & 1) as u8).collect())
        .collect()
}

pub fn alice_labels(n: usize) -> Vec<String> {
    bit_strings(n).iter().map(|x| alice_label(x)).collect()
}

pub fn bob_labels(n: usize, k: usize) -> Vec<String> {
    let mut out = Vec::new();
    for s in k_subsets(n, k) {
        for xb in bit_strings(k) {
            out.push(bob_label(&s, &xb));
        }
    }
    out
}

/// Whether Alice's `x` and Bob's `(b, x_b)` agree.
pub fn consistent(alice: &str, bob: &str) -> bool {
    match (parse_alice_label(alice), parse_bob_label(bob)) {
        (Some(x), Some((subset, xb))) => subset
            .iter()
            .zip(&xb)
            .all(|(&i, &v)| i < x.len() && x[i] == v),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Outcome distributions

/// Joint distribution over (Alice label, Bob label).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Distribution(pub BTreeMap<(String, String), f64>);

#[derive(Serialize, Deserialize)]
struct DistributionEntry {
    alice: String,
    bob: String,
    probability: f64,
}

impl Serialize for Distribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<DistributionEntry> = self
            .0
            .iter()
            .map(|((a, b), &p)| DistributionEntry {
                alice: a.clone(),
                bob: b.clone(),
                probability: p,
            })
            .collect();
        entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries: Vec<DistributionEntry> = Vec::deserialize(d)?;
        Ok(Distribution(
            entries
                .into_iter()
                .map(|e| ((e.alice, e.bob), e.probability))
                .collect(),
        ))
    }
}

impl Distribution {
    pub fn add(&mut self, alice: &str, bob: &str, p: f64) {
        *self
            .0
            .entry((alice.to_string(), bob.to_string()))
            .or_insert(0.0) += p;
    }

    pub fn get(&self, alice: &str, bob: &str) -> f64 {
        self.0
            .get(&(alice.to_string(), bob.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn alice_marginal(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for ((a, _), p) in &self.0 {
            *m.entry(a.clone()).or_insert(0.0) += p;
        }
        m
    }

    pub fn bob_marginal(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for ((_, b), p) in &self.0 {
            *m.entry(b.clone()).or_insert(0.0) += p;
        }
        m
    }

    /// Entries with probability above `floor`.
    pub fn support(&self, floor: f64) -> Vec<(&str, &str, f64)> {
        self.0
            .iter()
            .filter(|(_, &p)| p > floor)
            .map(|((a, b), &p)| (a.as_str(), b.as_str(), p))
            .collect()
    }

    /// Largest absolute difference over the union of both supports.
    pub fn max_difference(&self, other: &Distribution) -> f64 {
        self.0
            .keys()
            .chain(other.0.keys())
            .map(|(a, b)| (self.get(a, b) - other.get(a, b)).abs())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Protocol specs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub actor: Party,
    #[serde(with = "qlin::serde_matrix")]
    pub unitary: ComplexMatrix,
}

mod serde_povm {
    use super::*;
    use crate::qlin::serde_matrix::Matrix;

    pub fn serialize<S: serde::Serializer>(
        m: &BTreeMap<String, ComplexMatrix>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let wrapped: BTreeMap<&String, Matrix> =
            m.iter().map(|(k, v)| (k, Matrix(v.clone()))).collect();
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<String, ComplexMatrix>, D::Error> {
        let wrapped: BTreeMap<String, Matrix> = BTreeMap::deserialize(d)?;
        Ok(wrapped.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}

/// A protocol in round form: alternating local unitaries and final POVMs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub dim_a: usize,
    pub dim_m: usize,
    pub dim_b: usize,
    pub rounds: Vec<Round>,
    #[serde(with = "serde_povm")]
    pub alice_povm: BTreeMap<String, ComplexMatrix>,
    #[serde(with = "serde_povm")]
    pub bob_povm: BTreeMap<String, ComplexMatrix>,
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Parameters,
    Dimension,
    Unitarity,
    PovmElement,
    PovmCompleteness,
    Label,
    HonestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

fn violation(kind: ViolationKind, detail: impl Into<String>) -> Violation {
    Violation {
        kind,
        detail: detail.into(),
    }
}

/// Final state and joint outcome distribution of an honest execution.
#[derive(Debug, Clone, Serialize)]
pub struct HonestRun {
    pub final_state: PureState,
    pub outcome_distribution: Distribution,
    /// Largest deviation of the state norm from 1 observed after any round.
    pub max_norm_drift: f64,
}

impl ProtocolSpec {
    pub fn layout(&self) -> [usize; 3] {
        [self.dim_a, self.dim_m, self.dim_b]
    }

    pub fn total_dim(&self) -> usize {
        self.dim_a * self.dim_m * self.dim_b
    }

    /// Factor indices (within `A, M, B`) a round of `actor` acts on.
    pub fn factors(actor: Party) -> [usize; 2] {
        match actor {
            Party::Alice => [0, 1],
            Party::Bob => [1, 2],
        }
    }

    pub fn local_dim(&self, actor: Party) -> usize {
        match actor {
            Party::Alice => self.dim_a * self.dim_m,
            Party::Bob => self.dim_m * self.dim_b,
        }
    }

    pub fn povm(&self, party: Party) -> &BTreeMap<String, ComplexMatrix> {
        match party {
            Party::Alice => &self.alice_povm,
            Party::Bob => &self.bob_povm,
        }
    }

    pub fn honest_joint_probability(&self) -> f64 {
        1.0 / (binomial(self.n, self.k) as f64 * 2f64.powi(self.n as i32))
    }

    fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dim_a == 0 || self.dim_m == 0 || self.dim_b == 0 {
            out.push(violation(
                ViolationKind::Dimension,
                "all space dimensions must be positive",
            ));
            return out;
        }
        if self.k == 0 || self.k > self.n || self.n > 16 {
            out.push(violation(
                ViolationKind::Parameters,
                format!("need 1 <= k <= n <= 16, got n={} k={}", self.n, self.k),
            ));
        }
        for (j, round) in self.rounds.iter().enumerate() {
            let d = self.local_dim(round.actor);
            let u = &round.unitary;
            if u.nrows() != d || u.ncols() != d {
                out.push(violation(
                    ViolationKind::Dimension,
                    format!(
                        "round {j} ({}) unitary is {}x{}, expected {d}x{d}",
                        round.actor,
                        u.nrows(),
                        u.ncols()
                    ),
                ));
            } else if !is_finite(u) || !is_unitary(u, OPERATOR_TOL) {
                out.push(violation(
                    ViolationKind::Unitarity,
                    format!("round {j} ({}) is not unitary", round.actor),
                ));
            }
        }
        for party in [Party::Alice, Party::Bob] {
            let d = match party {
                Party::Alice => self.dim_a,
                Party::Bob => self.dim_b,
            };
            let povm = self.povm(party);
            if povm.is_empty() {
                out.push(violation(
                    ViolationKind::PovmCompleteness,
                    format!("{party} POVM is empty"),
                ));
                continue;
            }
            let mut sum = qlin::zeros(d, d);
            let mut shapes_ok = true;
            for (label, e) in povm {
                if e.nrows() != d || e.ncols() != d {
                    out.push(violation(
                        ViolationKind::Dimension,
                        format!(
                            "{party} POVM element `{label}` is {}x{}, expected {d}x{d}",
                            e.nrows(),
                            e.ncols()
                        ),
                    ));
                    shapes_ok = false;
                    continue;
                }
                if !is_finite(e) || !is_hermitian(e, OPERATOR_TOL) || min_eigenvalue(e) < PSD_FLOOR
                {
                    out.push(violation(
                        ViolationKind::PovmElement,
                        format!("{party} POVM element `{label}` is not PSD"),
                    ));
                }
                sum += e;
            }
            if shapes_ok && max_abs(&(sum - identity(d))) > OPERATOR_TOL {
                out.push(violation(
                    ViolationKind::PovmCompleteness,
                    format!("{party} POVM does not sum to the identity"),
                ));
            }
            let well_formed = |l: &str| match party {
                Party::Alice => parse_alice_label(l).is_some_and(|x| x.len() == self.n),
                Party::Bob => parse_bob_label(l).is_some_and(|(s, _)| {
                    s.len() == self.k
                        && s.windows(2).all(|w| w[0] < w[1])
                        && s.iter().all(|&i| i < self.n)
                }),
            };
            for label in povm.keys() {
                if label != ABORT && !well_formed(label) {
                    out.push(violation(
                        ViolationKind::Label,
                        format!("{party} label `{label}` is malformed"),
                    ));
                }
            }
        }
        out
    }

    /// Applies every round to `|0>` and computes the joint outcome distribution.
    /// Assumes the structural invariants hold.
    fn execute(&self) -> Result<HonestRun> {
        let dims = self.layout();
        let mut amps = vec![C64::default(); self.total_dim()];
        amps[0] = C64::new(1.0, 0.0);
        let mut drift: f64 = 0.0;
        for round in &self.rounds {
            apply_on_factors(
                &mut amps,
                &dims,
                &Self::factors(round.actor),
                &round.unitary,
            );
            let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
            drift = drift.max((norm - 1.0).abs());
        }
        let alice: Vec<(&String, Vec<C64>)> = self
            .alice_povm
            .iter()
            .map(|(l, e)| {
                let mut v = amps.clone();
                apply_on_factors(&mut v, &dims, &[0], e);
                (l, v)
            })
            .collect();
        let mut dist = Distribution::default();
        for (lb, e) in &self.bob_povm {
            let mut chi = amps.clone();
            apply_on_factors(&mut chi, &dims, &[2], e);
            for (la, phi) in &alice {
                let p: f64 = phi.iter().zip(&chi).map(|(x, y)| (x.conj() * y).re).sum();
                dist.add(la, lb, p.max(0.0));
            }
        }
        let final_state = PureState::normalized(amps.into())?;
        Ok(HonestRun {
            final_state,
            outcome_distribution: dist,
            max_norm_drift: drift,
        })
    }
}

/// Lists every invariant a protocol spec violates; empty iff it is a proper protocol.
pub fn validate(spec: &ProtocolSpec) -> Vec<Violation> {
    let mut out = spec.structural_violations();
    if !out.is_empty() {
        return out;
    }
    let run = match spec.execute() {
        Ok(r) => r,
        Err(e) => {
            out.push(violation(ViolationKind::HonestOutcome, e.to_string()));
            return out;
        }
    };
    let target = spec.honest_joint_probability();
    let mut alice = alice_labels(spec.n);
    alice.push(ABORT.into());
    let mut bob = bob_labels(spec.n, spec.k);
    bob.push(ABORT.into());
    for a in &alice {
        for b in &bob {
            let expected = if consistent(a, b) { target } else { 0.0 };
            let got = run.outcome_distribution.get(a, b);
            if (got - expected).abs() > DERIVED_TOL {
                out.push(violation(
                    ViolationKind::HonestOutcome,
                    format!(
                        "P({a}, {b}) = {got:.12} but the honest condition requires {expected:.12}"
                    ),
                ));
            }
        }
    }
    out
}

/// Executes a protocol spec honestly after validating it.
pub fn run_honest(spec: &ProtocolSpec) -> Result<HonestRun> {
    let violations = validate(spec);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Validation(list.join("; ")));
    }
    spec.execute()
}

// ---------------------------------------------------------------------------
// Deferred-measurement compilation

/// Converts an interactive protocol into round form.
///
/// Every step becomes one round. A measurement with projectors `P_k` recorded
/// in register `r` becomes `Σ_k P_k ⊗ X^k`; a random draw becomes a Fourier
/// transform on its (fresh) record register. Output rules become the final
/// POVMs, with the uncovered part as the abort element.
///
/// The result is checked against exact enumeration of the interactive
/// protocol; a mismatch means the protocol branched on quantum data and is
/// reported as unsupported.
pub fn compile_with_deferred_measurement(ip: &InteractiveProtocol) -> Result<ProtocolSpec> {
    let dim_m = ip.registers[ip.message].dim;
    if dim_m > MAX_COMPILED_MESSAGE_DIM {
        return Err(Error::Unsupported(format!(
            "message alphabet of size {dim_m} exceeds the compiler limit {MAX_COMPILED_MESSAGE_DIM}"
        )));
    }
    let regs_of = |owner: Owner| -> Vec<usize> {
        ip.registers
            .iter()
            .enumerate()
            .filter(|(_, r)| r.owner == owner)
            .map(|(i, _)| i)
            .collect()
    };
    let alice_regs = regs_of(Owner::Alice);
    let bob_regs = regs_of(Owner::Bob);
    let dims_of =
        |regs: &[usize]| -> Vec<usize> { regs.iter().map(|&i| ip.registers[i].dim).collect() };
    let dim_a: usize = dims_of(&alice_regs).iter().product();
    let dim_b: usize = dims_of(&bob_regs).iter().product();

    // Local layout of each actor: Alice (A..., M), Bob (M, B...).
    let local = |actor: Party| -> Vec<usize> {
        match actor {
            Party::Alice => alice_regs.iter().copied().chain([ip.message]).collect(),
            Party::Bob => [ip.message]
                .into_iter()
                .chain(bob_regs.iter().copied())
                .collect(),
        }
    };

    let mut rounds = Vec::with_capacity(ip.steps.len());
    for step in &ip.steps {
        let order = local(step.actor);
        let dims = dims_of(&order);
        let pos = |reg: usize| {
            order
                .iter()
                .position(|&r| r == reg)
                .expect("ops were validated against owners")
        };
        let d: usize = dims.iter().product();
        let mut u = identity(d);
        for op in &step.ops {
            let (factors, m) = match op {
                Op::Unitary { regs, matrix } => (
                    regs.iter().map(|&r| pos(r)).collect::<Vec<_>>(),
                    matrix.clone(),
                ),
                Op::Measure {
                    regs,
                    projectors,
                    record,
                } => {
                    let sub: Vec<usize> = regs.iter().map(|&r| ip.registers[r].dim).collect();
                    let m = crate::otcore::ir::measurement_isometry(
                        &sub,
                        projectors,
                        ip.registers[*record].dim,
                    );
                    let mut f: Vec<usize> = regs.iter().map(|&r| pos(r)).collect();
                    f.push(pos(*record));
                    (f, m)
                }
                Op::Random { record } => (vec![pos(*record)], fourier(ip.registers[*record].dim)),
            };
            // Column-major storage: each chunk is one column.
            for col in u.as_mut_slice().chunks_mut(d) {
                apply_on_factors(col, &dims, &factors, &m);
            }
        }
        rounds.push(Round {
            actor: step.actor,
            unitary: u,
        });
    }

    let povm = |rule: &OutputRule, regs: &[usize]| -> BTreeMap<String, ComplexMatrix> {
        let dims = dims_of(regs);
        let factors: Vec<usize> = rule
            .regs
            .iter()
            .map(|r| {
                regs.iter()
                    .position(|x| x == r)
                    .expect("output regs are owned")
            })
            .collect();
        let d: usize = dims.iter().product();
        let mut out = BTreeMap::new();
        let mut sum = qlin::zeros(d, d);
        for (label, p) in &rule.outcomes {
            let e = qlin::embed_operator(&dims, &factors, p);
            sum += &e;
            out.insert(label.clone(), e);
        }
        let rest = identity(d) - sum;
        if max_abs(&rest) > OPERATOR_TOL {
            out.insert(ABORT.to_string(), rest);
        }
        out
    };

    let spec = ProtocolSpec {
        dim_a,
        dim_m,
        dim_b,
        rounds,
        alice_povm: povm(&ip.alice_output, &alice_regs),
        bob_povm: povm(&ip.bob_output, &bob_regs),
        n: ip.n,
        k: ip.k,
    };

    let structural = spec.structural_violations();
    if !structural.is_empty() {
        let list: Vec<String> = structural.iter().map(|v| v.to_string()).collect();
        return Err(Error::Validation(list.join("; ")));
    }
    let compiled = spec.execute()?.outcome_distribution;
    let direct = world::exact_distribution(ip)?;
    let diff = compiled.max_difference(&direct);
    if diff > DERIVED_TOL {
        return Err(Error::Unsupported(format!(
            "deferred measurement changes the outcome distribution by {diff:.3e}; \
             the protocol branches on non-classical data"
        )));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip() {
        assert_eq!(alice_label(&[0, 1, 1]), "011");
        assert_eq!(bob_label(&[0, 2], &[1, 0]), "b={0,2};xb=10");
        assert_eq!(
            parse_bob_label("b={0,2};xb=10"),
            Some((vec![0, 2], vec![1, 0]))
        );
        assert_eq!(parse_bob_label("b={0};xb=10"), None);
        assert!(consistent("011", "b={1,2};xb=11"));
        assert!(!consistent("011", "b={0};xb=1"));
        assert!(!consistent(ABORT, "b={0};xb=0"));
    }

    #[test]
    fn subsets_and_strings() {
        assert_eq!(k_subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(
            bit_strings(2),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        assert_eq!(bob_labels(2, 1).len(), 4);
        assert_eq!(alice_labels(3).len(), 8);
    }
}
