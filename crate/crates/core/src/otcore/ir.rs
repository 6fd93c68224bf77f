//! Register-level description of interactive two-party protocols.

use serde::Serialize;

use crate::model::{Party, ABORT};
use crate::qlin::{
    identity, is_hermitian, is_projector, is_unitary, max_abs, permutation_matrix, tensor, zeros,
    ComplexMatrix, OPERATOR_TOL,
};
use crate::{Error, Result};

pub type RegId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Alice,
    Bob,
    Message,
}

impl Owner {
    pub fn of(party: Party) -> Owner {
        match party {
            Party::Alice => Owner::Alice,
            Party::Bob => Owner::Bob,
        }
    }

    /// Whether `party` may act on a register with this owner.
    pub fn accessible_by(self, party: Party) -> bool {
        self == Owner::Message || self == Owner::of(party)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Register {
    pub name: String,
    pub dim: usize,
    pub owner: Owner,
}

/// One local operation.
///
/// `Measure` adds the outcome index to `record` (mod its dimension); the part
/// of the space not covered by `projectors` is an extra outcome with index
/// `projectors.len()`. `Random` adds a uniform value to a fresh register.
#[derive(Debug, Clone)]
pub enum Op {
    Unitary {
        regs: Vec<RegId>,
        matrix: ComplexMatrix,
    },
    Measure {
        regs: Vec<RegId>,
        projectors: Vec<ComplexMatrix>,
        record: RegId,
    },
    Random {
        record: RegId,
    },
}

impl Op {
    pub fn registers(&self) -> Vec<RegId> {
        match self {
            Op::Unitary { regs, .. } => regs.clone(),
            Op::Measure { regs, record, .. } => regs.iter().copied().chain([*record]).collect(),
            Op::Random { record } => vec![*record],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub actor: Party,
    pub label: String,
    pub ops: Vec<Op>,
}

/// Projective output measurement of one party; the uncovered part is Abort.
#[derive(Debug, Clone, Default)]
pub struct OutputRule {
    pub regs: Vec<RegId>,
    pub outcomes: Vec<(String, ComplexMatrix)>,
}

impl OutputRule {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.outcomes.iter().map(|(l, _)| l.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct InteractiveProtocol {
    pub name: String,
    pub registers: Vec<Register>,
    pub message: RegId,
    pub steps: Vec<Step>,
    pub alice_output: OutputRule,
    pub bob_output: OutputRule,
    pub n: usize,
    pub k: usize,
}

impl InteractiveProtocol {
    pub fn dims(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.dim).collect()
    }

    pub fn output(&self, party: Party) -> &OutputRule {
        match party {
            Party::Alice => &self.alice_output,
            Party::Bob => &self.bob_output,
        }
    }

    pub fn register(&self, name: &str) -> Option<RegId> {
        self.registers.iter().position(|r| r.name == name)
    }

    /// Indices of the steps taken by `party`.
    pub fn steps_of(&self, party: Party) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.actor == party)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("{}: {msg}", self.name)));
        let messages: Vec<usize> = (0..self.registers.len())
            .filter(|&i| self.registers[i].owner == Owner::Message)
            .collect();
        if messages != [self.message] {
            return bad("exactly one message register is required".into());
        }
        if let Some(r) = self.registers.iter().find(|r| r.dim == 0) {
            return bad(format!("register `{}` has dimension 0", r.name));
        }
        let mut touched = vec![false; self.registers.len()];
        for (i, step) in self.steps.iter().enumerate() {
            for op in &step.ops {
                self.check_op(step.actor, op, &touched)
                    .or_else(|e| bad(format!("step {i} ({}): {e}", step.label)))?;
                for r in op.registers() {
                    touched[r] = true;
                }
            }
        }
        for party in [Party::Alice, Party::Bob] {
            self.check_output(party, self.output(party))
                .or_else(|e| bad(format!("{party} output: {e}")))?;
        }
        Ok(())
    }

    fn check_regs(&self, actor: Party, regs: &[RegId]) -> std::result::Result<usize, String> {
        for (i, &r) in regs.iter().enumerate() {
            let reg = self
                .registers
                .get(r)
                .ok_or(format!("unknown register {r}"))?;
            if !reg.owner.accessible_by(actor) {
                return Err(format!("{actor} may not act on `{}`", reg.name));
            }
            if regs[..i].contains(&r) {
                return Err(format!("register `{}` listed twice", reg.name));
            }
        }
        Ok(regs.iter().map(|&r| self.registers[r].dim).product())
    }

    fn check_op(&self, actor: Party, op: &Op, touched: &[bool]) -> std::result::Result<(), String> {
        let d = self.check_regs(actor, &op.registers())?;
        match op {
            Op::Unitary { matrix, .. } => {
                if matrix.nrows() != d || matrix.ncols() != d {
                    return Err(format!(
                        "unitary is {}x{}, registers have dimension {d}",
                        matrix.nrows(),
                        matrix.ncols()
                    ));
                }
                if !is_unitary(matrix, OPERATOR_TOL) {
                    return Err("operator is not unitary".into());
                }
            }
            Op::Measure {
                regs,
                projectors,
                record,
            } => {
                if regs.contains(record) {
                    return Err("record register is also measured".into());
                }
                let d: usize = regs.iter().map(|&r| self.registers[r].dim).product();
                let complete = check_projective_family(projectors, d)?;
                let needed = projectors.len() + usize::from(!complete);
                if self.registers[*record].dim < needed {
                    return Err(format!(
                        "record register holds fewer than {needed} outcomes"
                    ));
                }
            }
            Op::Random { record } => {
                if touched[*record] {
                    return Err(format!(
                        "random draw into `{}`, which is already in use",
                        self.registers[*record].name
                    ));
                }
                if self.registers[*record].owner == Owner::Message {
                    return Err("random draws must land in a private register".into());
                }
            }
        }
        Ok(())
    }

    fn check_output(&self, party: Party, rule: &OutputRule) -> std::result::Result<(), String> {
        for &r in &rule.regs {
            let reg = self
                .registers
                .get(r)
                .ok_or(format!("unknown register {r}"))?;
            if reg.owner != Owner::of(party) {
                return Err(format!(
                    "output reads `{}`, which {party} does not own",
                    reg.name
                ));
            }
        }
        let d: usize = rule.regs.iter().map(|&r| self.registers[r].dim).product();
        let projectors: Vec<ComplexMatrix> = rule.outcomes.iter().map(|(_, p)| p.clone()).collect();
        check_projective_family(&projectors, d)?;
        for (i, (label, _)) in rule.outcomes.iter().enumerate() {
            if label == ABORT || rule.outcomes[..i].iter().any(|(l, _)| l == label) {
                return Err(format!("label `{label}` is reserved or repeated"));
            }
        }
        Ok(())
    }

    /// The protocol with `party`'s steps replaced by `steps` and extra
    /// registers appended; `output` replaces that party's output rule.
    pub(crate) fn substitute(
        &self,
        party: Party,
        extra: &[(String, usize)],
        steps: &[Vec<Op>],
        output: OutputRule,
    ) -> Result<InteractiveProtocol> {
        let own = self.steps_of(party);
        if steps.len() != own.len() {
            return Err(Error::Validation(format!(
                "{} takes {} steps as {party}, the program provides {}",
                self.name,
                own.len(),
                steps.len()
            )));
        }
        let mut p = self.clone();
        p.name = format!("{} [{party} substituted]", self.name);
        for (name, dim) in extra {
            p.registers.push(Register {
                name: name.clone(),
                dim: *dim,
                owner: Owner::of(party),
            });
        }
        for (slot, ops) in own.iter().zip(steps) {
            p.steps[*slot].ops = ops.clone();
        }
        match party {
            Party::Alice => p.alice_output = output,
            Party::Bob => p.bob_output = output,
        }
        p.validate()?;
        Ok(p)
    }
}

impl InteractiveProtocol {
    /// Enlarges register `reg` to `new_dim` levels. Unitaries act as the
    /// identity and projectors as zero on the added levels.
    pub fn pad_register(&self, reg: RegId, new_dim: usize) -> Result<InteractiveProtocol> {
        let old = self.registers[reg].dim;
        if new_dim < old {
            return Err(Error::Dimension(format!(
                "cannot shrink register {reg} from {old} to {new_dim}"
            )));
        }
        let mut p = self.clone();
        p.registers[reg].dim = new_dim;
        let dims = self.dims();
        let new_dims = p.dims();
        let pad = |regs: &[RegId], m: &ComplexMatrix, fill_identity: bool| -> ComplexMatrix {
            let Some(pos) = regs.iter().position(|&r| r == reg) else {
                return m.clone();
            };
            let od: Vec<usize> = regs.iter().map(|&r| dims[r]).collect();
            let nd: Vec<usize> = regs.iter().map(|&r| new_dims[r]).collect();
            let total: usize = nd.iter().product();
            let map: Vec<Option<usize>> = (0..total)
                .map(|i| {
                    let d = digits(i, &nd);
                    (d[pos] < old).then(|| undigits(&d, &od))
                })
                .collect();
            let mut out = zeros(total, total);
            for i in 0..total {
                for j in 0..total {
                    out[(i, j)] = match (map[i], map[j]) {
                        (Some(a), Some(b)) => m[(a, b)],
                        _ if i == j && fill_identity => crate::qlin::r(1.0),
                        _ => Default::default(),
                    };
                }
            }
            out
        };
        for step in &mut p.steps {
            for op in &mut step.ops {
                match op {
                    Op::Unitary { regs, matrix } => *matrix = pad(regs, matrix, true),
                    Op::Measure {
                        regs, projectors, ..
                    } => {
                        for q in projectors.iter_mut() {
                            *q = pad(regs, q, false);
                        }
                    }
                    Op::Random { .. } => {}
                }
            }
        }
        for rule in [&mut p.alice_output, &mut p.bob_output] {
            for (_, q) in rule.outcomes.iter_mut() {
                *q = pad(&rule.regs, q, false);
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Checks that `projectors` are mutually orthogonal projectors on dimension
/// `d`; returns whether they sum to the identity.
fn check_projective_family(
    projectors: &[ComplexMatrix],
    d: usize,
) -> std::result::Result<bool, String> {
    let mut sum = zeros(d, d);
    for p in projectors {
        if p.nrows() != d || p.ncols() != d {
            return Err(format!(
                "projector is {}x{}, expected {d}x{d}",
                p.nrows(),
                p.ncols()
            ));
        }
        if !is_hermitian(p, OPERATOR_TOL) || !is_projector(p, OPERATOR_TOL) {
            return Err("measurement element is not a projector".into());
        }
        sum += p;
    }
    if !is_projector(&sum, OPERATOR_TOL) {
        return Err("measurement elements are not mutually orthogonal".into());
    }
    Ok(max_abs(&(sum - identity(d))) <= OPERATOR_TOL)
}

// ---------------------------------------------------------------------------
// Matrix helpers for building ops

/// Mixed-radix digits of `index` for the given factor dimensions.
pub fn digits(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for i in (0..dims.len()).rev() {
        out[i] = index % dims[i];
        index /= dims[i];
    }
    out
}

pub fn undigits(d: &[usize], dims: &[usize]) -> usize {
    d.iter().zip(dims).fold(0, |acc, (&x, &n)| acc * n + x)
}

/// Permutation matrix on `⊗ dims` from a bijection on digit tuples.
pub fn permutation_op(dims: &[usize], f: impl Fn(&[usize]) -> Vec<usize>) -> ComplexMatrix {
    let total: usize = dims.iter().product();
    let map: Vec<usize> = (0..total)
        .map(|i| undigits(&f(&digits(i, dims)), dims))
        .collect();
    permutation_matrix(&map).expect("digit map must be a bijection")
}

/// Block-diagonal `Σ_c |c><c| ⊗ f(c)` with the control first.
pub fn controlled(
    control_dim: usize,
    target_dim: usize,
    f: impl Fn(usize) -> ComplexMatrix,
) -> ComplexMatrix {
    let mut m = zeros(control_dim * target_dim, control_dim * target_dim);
    for c in 0..control_dim {
        let block = f(c);
        m.view_mut((c * target_dim, c * target_dim), (target_dim, target_dim))
            .copy_from(&block);
    }
    m
}

/// Exchanges the common levels of two registers of dimensions `da`, `db`.
pub fn swap_op(da: usize, db: usize) -> ComplexMatrix {
    permutation_op(&[da, db], |d| {
        if d[0] < db && d[1] < da {
            vec![d[1], d[0]]
        } else {
            d.to_vec()
        }
    })
}

/// `dst <- dst + src (mod dim dst)` on (src, dst).
pub fn add_mod(ds: usize, dd: usize) -> ComplexMatrix {
    permutation_op(&[ds, dd], |d| vec![d[0], (d[1] + d[0]) % dd])
}

/// `dst <- dst - src (mod dim dst)` on (src, dst).
pub fn sub_mod(ds: usize, dd: usize) -> ComplexMatrix {
    permutation_op(&[ds, dd], |d| vec![d[0], (d[1] + dd - d[0] % dd) % dd])
}

/// Cyclic shift `|j> -> |j + k mod d>`.
pub fn shift(d: usize, k: usize) -> ComplexMatrix {
    permutation_op(&[d], |x| vec![(x[0] + k) % d])
}

/// `Σ_k P_k ⊗ X^k` on (measured registers, record), with the complement of
/// the family as the last outcome.
pub fn measurement_isometry(
    dims: &[usize],
    projectors: &[ComplexMatrix],
    record_dim: usize,
) -> ComplexMatrix {
    let d: usize = dims.iter().product();
    let mut rest = identity(d);
    let mut u = zeros(d * record_dim, d * record_dim);
    for (k, p) in projectors.iter().enumerate() {
        rest -= p;
        u += tensor(p, &shift(record_dim, k));
    }
    if max_abs(&rest) > OPERATOR_TOL {
        u += tensor(&rest, &shift(record_dim, projectors.len()));
    }
    u
}

/// Projector onto the classical values of `dims` selected by `pred`.
pub fn classical_projector(dims: &[usize], pred: impl Fn(&[usize]) -> bool) -> ComplexMatrix {
    let total: usize = dims.iter().product();
    let mut m = zeros(total, total);
    for i in 0..total {
        if pred(&digits(i, dims)) {
            m[(i, i)] = crate::qlin::r(1.0);
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Builder

#[derive(Debug, Default)]
pub struct ProtocolBuilder {
    name: String,
    registers: Vec<Register>,
    message: Option<RegId>,
    steps: Vec<Step>,
}

impl ProtocolBuilder {
    pub fn new(name: &str) -> Self {
        ProtocolBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn register(&mut self, name: &str, dim: usize, owner: Owner) -> RegId {
        self.registers.push(Register {
            name: name.into(),
            dim,
            owner,
        });
        if owner == Owner::Message {
            self.message = Some(self.registers.len() - 1);
        }
        self.registers.len() - 1
    }

    pub fn dim(&self, r: RegId) -> usize {
        self.registers[r].dim
    }

    pub fn dims(&self, regs: &[RegId]) -> Vec<usize> {
        regs.iter().map(|&r| self.dim(r)).collect()
    }

    pub fn step(&mut self, actor: Party, label: &str, ops: Vec<Op>) {
        self.steps.push(Step {
            actor,
            label: label.into(),
            ops,
        });
    }

    pub fn unitary(&self, regs: &[RegId], matrix: ComplexMatrix) -> Op {
        Op::Unitary {
            regs: regs.to_vec(),
            matrix,
        }
    }

    pub fn permutation(&self, regs: &[RegId], f: impl Fn(&[usize]) -> Vec<usize>) -> Op {
        Op::Unitary {
            regs: regs.to_vec(),
            matrix: permutation_op(&self.dims(regs), f),
        }
    }

    /// `f(c)` applied to `targets` when `control` holds `c`.
    pub fn controlled(
        &self,
        control: RegId,
        targets: &[RegId],
        f: impl Fn(usize) -> ComplexMatrix,
    ) -> Op {
        let td: usize = self.dims(targets).iter().product();
        let regs: Vec<RegId> = std::iter::once(control)
            .chain(targets.iter().copied())
            .collect();
        Op::Unitary {
            regs,
            matrix: controlled(self.dim(control), td, f),
        }
    }

    pub fn swap(&self, a: RegId, b: RegId) -> Op {
        Op::Unitary {
            regs: vec![a, b],
            matrix: swap_op(self.dim(a), self.dim(b)),
        }
    }

    pub fn add_into(&self, src: RegId, dst: RegId) -> Op {
        Op::Unitary {
            regs: vec![src, dst],
            matrix: add_mod(self.dim(src), self.dim(dst)),
        }
    }

    pub fn sub_from(&self, src: RegId, dst: RegId) -> Op {
        Op::Unitary {
            regs: vec![src, dst],
            matrix: sub_mod(self.dim(src), self.dim(dst)),
        }
    }

    /// Output rule reading classical values of `regs`; `None` marks Abort.
    pub fn classical_rule(
        &self,
        regs: &[RegId],
        f: impl Fn(&[usize]) -> Option<String>,
    ) -> OutputRule {
        let dims = self.dims(regs);
        let total: usize = dims.iter().product();
        let mut labels: Vec<String> = Vec::new();
        for i in 0..total {
            if let Some(l) = f(&digits(i, &dims)) {
                if !labels.contains(&l) {
                    labels.push(l);
                }
            }
        }
        labels.sort();
        let outcomes = labels
            .into_iter()
            .map(|l| {
                let p = classical_projector(&dims, |d| f(d).as_deref() == Some(l.as_str()));
                (l, p)
            })
            .collect();
        OutputRule {
            regs: regs.to_vec(),
            outcomes,
        }
    }

    pub fn build(
        self,
        alice_output: OutputRule,
        bob_output: OutputRule,
        n: usize,
        k: usize,
    ) -> Result<InteractiveProtocol> {
        let message = self
            .message
            .ok_or_else(|| Error::Validation(format!("{}: no message register", self.name)))?;
        let p = InteractiveProtocol {
            name: self.name,
            registers: self.registers,
            message,
            steps: self.steps,
            alice_output,
            bob_output,
            n,
            k,
        };
        p.validate()?;
        Ok(p)
    }
}
