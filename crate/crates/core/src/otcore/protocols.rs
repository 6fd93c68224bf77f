//! Concrete protocols: qutrit OT, its CF composition, the qutrit commitment
//! coin flip, and a trivial announced-coin protocol.

use std::f64::consts::FRAC_1_SQRT_2;

use super::ir::{controlled, InteractiveProtocol, Op, OutputRule, Owner, ProtocolBuilder, RegId};
use crate::model::{alice_label, bob_label, Party};
use crate::qlin::{
    basis_projector, identity, ket, outer, r, tensor, unitary_from_first_column, ComplexMatrix,
    ComplexVector,
};
use crate::Result;

/// `(|bb> + s|22>)/sqrt2` on two qutrits with `s = (-1)^sign`.
fn qutrit_pair(b: usize, sign: u8) -> ComplexVector {
    let s = if sign == 0 { 1.0 } else { -1.0 };
    (ket(9, 3 * b + b) + ket(9, 8) * r(s)) * r(FRAC_1_SQRT_2)
}

/// `|φ_b> = (|bb> + |22>)/sqrt2`.
pub fn phi(b: usize) -> ComplexVector {
    qutrit_pair(b, 0)
}

/// `|φ'_b> = (|bb> - |22>)/sqrt2`.
pub fn phi_prime(b: usize) -> ComplexVector {
    qutrit_pair(b, 1)
}

/// `|a> -> (-1)^{x_a} |a>` with `x_2 = 0`.
pub fn phase_unitary(x0: u8, x1: u8) -> ComplexMatrix {
    let s = |x: u8| if x == 0 { 1.0 } else { -1.0 };
    crate::qlin::diag(&[s(x0), s(x1), 1.0])
}

/// Bob's decoding projector `Π_y` for choice `b`, on (returned qutrit, kept qutrit).
pub fn decoding_projector(b: usize, y: u8) -> ComplexMatrix {
    let v = qutrit_pair(b, y);
    outer(&v, &v)
}

/// An OT protocol with input registers that start in `|0>`.
#[derive(Debug, Clone)]
pub struct OtWithInputs {
    pub protocol: InteractiveProtocol,
    pub x: [RegId; 2],
    pub b: RegId,
    /// Registers of Bob's decoding measurement.
    pub y_regs: Vec<RegId>,
    /// Bob's decoding projectors for `y = 0, 1`; the complement is Abort.
    pub y_projectors: [ComplexMatrix; 2],
}

/// A random-OT protocol with handles on the registers holding the outputs.
#[derive(Debug, Clone)]
pub struct RandomOt {
    pub protocol: InteractiveProtocol,
    pub x: [RegId; 2],
    pub b: RegId,
    pub y_regs: Vec<RegId>,
    pub y_projectors: [ComplexMatrix; 2],
}

impl OtWithInputs {
    /// The protocol with the inputs loaded at the start of each party's first step.
    pub fn with_inputs(&self, x0: u8, x1: u8, b: u8) -> InteractiveProtocol {
        let mut p = self.protocol.clone();
        let load = |reg: RegId, v: u8| Op::Unitary {
            regs: vec![reg],
            matrix: super::ir::shift(2, v as usize),
        };
        if let Some(&i) = p.steps_of(Party::Alice).first() {
            p.steps[i]
                .ops
                .splice(0..0, [load(self.x[0], x0), load(self.x[1], x1)]);
        }
        if let Some(&i) = p.steps_of(Party::Bob).first() {
            p.steps[i].ops.insert(0, load(self.b, b));
        }
        p.name = format!("{} (x0={x0}, x1={x1}, b={b})", p.name);
        p
    }
}

/// Output rules shared by the qutrit OT variants: Alice reads `(x0, x1)`,
/// Bob reads `b` together with his decoding measurement.
fn ot_outputs(
    x: [RegId; 2],
    b: RegId,
    y_regs: &[RegId],
    y_projectors: &[ComplexMatrix; 2],
    dims: &[usize],
) -> (OutputRule, OutputRule) {
    let mut alice = OutputRule {
        regs: x.to_vec(),
        outcomes: Vec::new(),
    };
    for x0 in 0..2u8 {
        for x1 in 0..2u8 {
            let p = tensor(
                &basis_projector(2, x0 as usize),
                &basis_projector(2, x1 as usize),
            );
            alice.outcomes.push((alice_label(&[x0, x1]), p));
        }
    }
    // Bob's rule is on (b, y_regs...) with b first.
    let mut regs = vec![b];
    regs.extend(y_regs.iter().copied().filter(|&r| r != b));
    let rest: usize = regs[1..].iter().map(|&r| dims[r]).product();
    let b_in_y = y_regs.contains(&b);
    let mut bob = OutputRule {
        regs,
        outcomes: Vec::new(),
    };
    for bv in 0..2usize {
        for (y, py) in y_projectors.iter().enumerate() {
            let pb = tensor(&basis_projector(2, bv), &identity(rest));
            let full = if b_in_y {
                &pb * py
            } else {
                tensor(&basis_projector(2, bv), py)
            };
            bob.outcomes.push((bob_label(&[bv], &[y as u8]), full));
        }
    }
    (alice, bob)
}

/// The qutrit OT protocol with inputs `x0, x1` (Alice) and `b` (Bob).
///
/// Bob prepares `|φ_b>` on (M, R) and sends M; Alice applies her phases and
/// returns it; Bob moves it into Q and decodes on (b, Q, R).
pub fn qutrit_ot_with_inputs() -> Result<OtWithInputs> {
    let mut pb = ProtocolBuilder::new("qutrit-ot");
    let x0 = pb.register("x0", 2, Owner::Alice);
    let x1 = pb.register("x1", 2, Owner::Alice);
    let m = pb.register("M", 3, Owner::Message);
    let b = pb.register("b", 2, Owner::Bob);
    let rr = pb.register("R", 3, Owner::Bob);
    let q = pb.register("Q", 3, Owner::Bob);

    let prepare = pb.controlled(b, &[m, rr], |c| unitary_from_first_column(&phi(c)));
    pb.step(
        Party::Bob,
        "prepare |phi_b> and send the first qutrit",
        vec![prepare],
    );

    let phases = Op::Unitary {
        regs: vec![x0, x1, m],
        matrix: controlled(4, 3, |c| phase_unitary((c >> 1) as u8, (c & 1) as u8)),
    };
    pb.step(
        Party::Alice,
        "apply phases and return the qutrit",
        vec![phases],
    );

    let receive = pb.swap(m, q);
    pb.step(Party::Bob, "receive the qutrit", vec![receive]);

    // Decoding on (b, Q, R): Σ_b |b><b| ⊗ Π_y^{(b)}.
    let y_projectors = [0u8, 1].map(|y| controlled(2, 9, |bv| decoding_projector(bv, y)));
    let y_regs = vec![b, q, rr];
    let dims: Vec<usize> = (0..=q).map(|reg| pb.dim(reg)).collect();
    let (alice, bob) = ot_outputs([x0, x1], b, &y_regs, &y_projectors, &dims);
    let protocol = pb.build(alice, bob, 2, 1)?;
    Ok(OtWithInputs {
        protocol,
        x: [x0, x1],
        b,
        y_regs,
        y_projectors,
    })
}

/// Random OT from OT with inputs: each party draws its input uniformly at the
/// start of its first step.
pub fn random_ot_from_ot(ot: &OtWithInputs) -> Result<RandomOt> {
    let mut p = ot.protocol.clone();
    if let Some(&i) = p.steps_of(Party::Alice).first() {
        p.steps[i].ops.splice(
            0..0,
            [
                Op::Random { record: ot.x[0] },
                Op::Random { record: ot.x[1] },
            ],
        );
    }
    if let Some(&i) = p.steps_of(Party::Bob).first() {
        p.steps[i].ops.insert(0, Op::Random { record: ot.b });
    }
    p.name = format!("random {}", p.name);
    p.validate()?;
    Ok(RandomOt {
        protocol: p,
        x: ot.x,
        b: ot.b,
        y_regs: ot.y_regs.clone(),
        y_projectors: ot.y_projectors.clone(),
    })
}

/// The qutrit random-OT protocol.
pub fn qutrit_random_ot() -> Result<RandomOt> {
    let mut rot = random_ot_from_ot(&qutrit_ot_with_inputs()?)?;
    rot.protocol.name = "qutrit-random-ot".into();
    Ok(rot)
}

/// Coin flipping from random OT.
///
/// After the OT, Bob measures `y` into `y_rec` (value 2 on Abort). Alice
/// sends a random `c`; Bob announces `(b, y)` as `2b + y`; Alice accepts iff
/// `y = x_b`. Both output `c ⊕ b`. The message register is padded to four
/// levels.
pub fn cf_from_ot_protocol(rot: &RandomOt) -> Result<InteractiveProtocol> {
    let m = rot.protocol.message;
    let mut p = rot
        .protocol
        .pad_register(m, rot.protocol.registers[m].dim.max(4))?;
    let dm = p.registers[m].dim;
    let mut add = |name: &str, dim: usize, owner: Owner| -> RegId {
        p.registers.push(super::ir::Register {
            name: name.into(),
            dim,
            owner,
        });
        p.registers.len() - 1
    };
    let c = add("c", 2, Owner::Alice);
    let m_a = add("announced", dm, Owner::Alice);
    let y_rec = add("y", 3, Owner::Bob);
    let c_b = add("c_bob", 2, Owner::Bob);
    let dims = p.dims();
    let perm = |regs: &[RegId], f: &dyn Fn(&[usize]) -> Vec<usize>| {
        let d: Vec<usize> = regs.iter().map(|&r| dims[r]).collect();
        Op::Unitary {
            regs: regs.to_vec(),
            matrix: super::ir::permutation_op(&d, f),
        }
    };
    let add_into =
        |src: RegId, dst: RegId| perm(&[src, dst], &|d| vec![d[0], (d[1] + d[0]) % dims[dst]]);
    let sub_from = |src: RegId, dst: RegId| {
        perm(&[src, dst], &|d| {
            vec![d[0], (d[1] + dims[dst] - d[0] % dims[dst]) % dims[dst]]
        })
    };

    // Bob's last OT step also measures y.
    let last_bob = *p
        .steps_of(Party::Bob)
        .last()
        .expect("random OT has a Bob step");
    p.steps[last_bob].ops.push(Op::Measure {
        regs: rot.y_regs.clone(),
        projectors: rot.y_projectors.to_vec(),
        record: y_rec,
    });

    let b = rot.b;
    let announce = perm(&[b, y_rec, m], &|d| {
        let v = if d[1] < 2 { 2 * d[0] + d[1] } else { 0 };
        vec![d[0], d[1], (d[2] + v) % dm]
    });
    p.steps.push(super::ir::Step {
        actor: Party::Alice,
        label: "send a random coin c".into(),
        ops: vec![Op::Random { record: c }, add_into(c, m)],
    });
    p.steps.push(super::ir::Step {
        actor: Party::Bob,
        label: "receive c and announce (b, y)".into(),
        ops: vec![add_into(m, c_b), sub_from(c_b, m), announce],
    });
    p.steps.push(super::ir::Step {
        actor: Party::Alice,
        label: "receive (b, y)".into(),
        ops: vec![add_into(m, m_a), sub_from(m_a, m)],
    });

    let builder_dims = |regs: &[RegId]| regs.iter().map(|&r| dims[r]).collect::<Vec<_>>();
    let rule = |regs: Vec<RegId>, f: &dyn Fn(&[usize]) -> Option<String>| -> OutputRule {
        let d = builder_dims(&regs);
        let mut outcomes: Vec<(String, ComplexMatrix)> = Vec::new();
        for label in ["0", "1"] {
            let proj = super::ir::classical_projector(&d, |v| f(v).as_deref() == Some(label));
            outcomes.push((label.to_string(), proj));
        }
        OutputRule { regs, outcomes }
    };
    let [x0, x1] = rot.x;
    p.alice_output = rule(vec![x0, x1, c, m_a], &|d| {
        let (bb, y) = (d[3] / 2, d[3] % 2);
        (bb < 2 && y == d[bb]).then(|| ((d[2] ^ bb) as u8).to_string())
    });
    let mut bob = rule(vec![b, y_rec, c_b], &|d| {
        (d[1] < 2).then(|| ((d[2] ^ d[0]) as u8).to_string())
    });
    for (label, _) in bob.outcomes.iter_mut() {
        *label = bob_label(&[0], &[label.parse::<u8>().expect("coin label")]);
    }
    p.bob_output = bob;
    p.n = 1;
    p.k = 1;
    p.name = "cf-from-ot".into();
    p.validate()?;
    Ok(p)
}

/// The commitment coin flip on the qutrit family.
///
/// Alice draws `a` and prepares `|φ_a>` on (M, Q2), sending M. Bob keeps it
/// in Q1 and announces a random `b'`. Alice keeps `b'` in S, sends Q2, then
/// reveals `a` and outputs `a ⊕ b'`. Bob undoes the preparation of `|φ_a>`
/// on (Q1, Q2) and accepts on `|00>`, outputting `a ⊕ b'`.
pub fn qutrit_commitment_cf() -> Result<InteractiveProtocol> {
    let mut pb = ProtocolBuilder::new("qutrit-commitment-cf");
    let k = pb.register("K", 2, Owner::Alice);
    let q2a = pb.register("Q2", 3, Owner::Alice);
    let s = pb.register("S", 2, Owner::Alice);
    let m = pb.register("M", 3, Owner::Message);
    let q1 = pb.register("Q1", 3, Owner::Bob);
    let q2b = pb.register("Q2'", 3, Owner::Bob);
    let rb = pb.register("Rb", 2, Owner::Bob);

    let prepare = pb.controlled(k, &[m, q2a], |a| unitary_from_first_column(&phi(a)));
    pb.step(
        Party::Alice,
        "commit to a",
        vec![Op::Random { record: k }, prepare],
    );

    let keep = pb.swap(m, q1);
    let announce = pb.add_into(rb, m);
    pb.step(
        Party::Bob,
        "announce b'",
        vec![keep, Op::Random { record: rb }, announce],
    );

    let store = pb.swap(m, s);
    let send_q2 = pb.swap(q2a, m);
    pb.step(
        Party::Alice,
        "store b' and open the commitment",
        vec![store, send_q2],
    );

    let keep_q2 = pb.swap(m, q2b);
    pb.step(Party::Bob, "receive the second qutrit", vec![keep_q2]);

    let reveal = pb.add_into(k, m);
    let coin = pb.add_into(s, k);
    pb.step(Party::Alice, "reveal a", vec![reveal, coin]);

    // Controlled on the revealed value (2 is read as 0): undo |φ_a> and add a to Rb.
    let check = pb.controlled(m, &[q1, q2b, rb], |v| {
        let a = usize::from(v == 1);
        let undo = unitary_from_first_column(&phi(a)).adjoint();
        tensor(&undo, &super::ir::shift(2, a))
    });
    pb.step(Party::Bob, "verify the commitment", vec![check]);

    let alice = pb.classical_rule(&[k], |d| Some(d[0].to_string()));
    let accept = basis_projector(9, 0);
    let bob = OutputRule {
        regs: vec![q1, q2b, rb],
        outcomes: (0..2)
            .map(|cv| {
                (
                    bob_label(&[0], &[cv as u8]),
                    tensor(&accept, &basis_projector(2, cv)),
                )
            })
            .collect(),
    };
    pb.build(alice, bob, 1, 1)
}

/// Alice flips a coin and announces it; Bob records it.
pub fn announce_coin() -> Result<InteractiveProtocol> {
    let mut pb = ProtocolBuilder::new("announce-coin");
    let coin = pb.register("coin", 2, Owner::Alice);
    let m = pb.register("M", 2, Owner::Message);
    let rec = pb.register("rec", 2, Owner::Bob);
    let send = pb.add_into(coin, m);
    pb.step(
        Party::Alice,
        "flip and announce",
        vec![Op::Random { record: coin }, send],
    );
    let keep = pb.swap(m, rec);
    pb.step(Party::Bob, "record the coin", vec![keep]);
    let alice = pb.classical_rule(&[coin], |d| Some(d[0].to_string()));
    let bob = pb.classical_rule(&[rec], |d| Some(bob_label(&[0], &[d[0] as u8])));
    pb.build(alice, bob, 1, 1)
}
