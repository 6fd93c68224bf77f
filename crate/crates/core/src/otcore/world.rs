//! Global state vector over all registers, with owner-checked local operations.

use rand::{Rng, RngCore};

use super::ir::{shift, InteractiveProtocol, Op, OutputRule, Owner, RegId, Register};
use crate::model::{Distribution, Party, ABORT};
use crate::qlin::{
    apply_on_factors, apply_with_offsets, factor_offsets, is_unitary, split_offsets, zeros,
    ComplexMatrix, C64, OPERATOR_TOL,
};
use crate::{Error, Result};

/// Branches below this probability are dropped during exact enumeration.
const BRANCH_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct World {
    dims: Vec<usize>,
    owners: Vec<Owner>,
    amps: Vec<C64>,
}

impl World {
    /// All registers in `|0>`.
    pub fn new(registers: &[Register]) -> Self {
        let dims: Vec<usize> = registers.iter().map(|r| r.dim).collect();
        let total: usize = dims.iter().product();
        let mut amps = vec![C64::default(); total];
        amps[0] = C64::new(1.0, 0.0);
        World {
            dims,
            owners: registers.iter().map(|r| r.owner).collect(),
            amps,
        }
    }

    /// Appends a fresh register in `|0>`.
    pub fn alloc(&mut self, owner: Owner, dim: usize) -> RegId {
        let mut amps = vec![C64::default(); self.amps.len() * dim];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i * dim] = *a;
        }
        self.amps = amps;
        self.dims.push(dim);
        self.owners.push(owner);
        self.dims.len() - 1
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn owner(&self, r: RegId) -> Owner {
        self.owners[r]
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn check_access(&self, actor: Party, regs: &[RegId]) -> Result<()> {
        for (i, &r) in regs.iter().enumerate() {
            if r >= self.dims.len() || regs[..i].contains(&r) {
                return Err(Error::Validation(format!("invalid register list {regs:?}")));
            }
            if !self.owners[r].accessible_by(actor) {
                return Err(Error::Validation(format!(
                    "{actor} may not act on register {r} ({:?})",
                    self.owners[r]
                )));
            }
        }
        Ok(())
    }

    fn sub_dim(&self, regs: &[RegId]) -> usize {
        regs.iter().map(|&r| self.dims[r]).product()
    }

    /// Applies a unitary on `regs` on behalf of `actor`.
    pub fn apply(&mut self, actor: Party, regs: &[RegId], m: &ComplexMatrix) -> Result<()> {
        self.check_access(actor, regs)?;
        let d = self.sub_dim(regs);
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Dimension(format!(
                "operator is {}x{} on registers of dimension {d}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !is_unitary(m, OPERATOR_TOL) {
            return Err(Error::Validation("operator is not unitary".into()));
        }
        self.apply_raw(regs, m);
        Ok(())
    }

    pub(crate) fn apply_raw(&mut self, regs: &[RegId], m: &ComplexMatrix) {
        apply_on_factors(&mut self.amps, &self.dims, regs, m);
    }

    /// `P ψ` (unnormalized) for a projector on `regs`.
    pub fn projected(&self, regs: &[RegId], p: &ComplexMatrix) -> Vec<C64> {
        let mut v = self.amps.clone();
        apply_on_factors(&mut v, &self.dims, regs, p);
        v
    }

    /// `P_k ψ` for every element of the family followed by the complement.
    fn branch_vectors(&self, regs: &[RegId], projectors: &[ComplexMatrix]) -> Vec<Vec<C64>> {
        let (targets, rest_offsets) = split_offsets(&self.dims, regs);
        let mut out: Vec<Vec<C64>> = projectors
            .iter()
            .map(|p| {
                let mut v = self.amps.clone();
                apply_with_offsets(&mut v, &targets, &rest_offsets, p);
                v
            })
            .collect();
        let mut rest = self.amps.clone();
        for v in &out {
            for (r, x) in rest.iter_mut().zip(v) {
                *r -= x;
            }
        }
        out.push(rest);
        out
    }

    /// Outcome probabilities of a projective family; the last entry is the complement.
    pub fn probabilities(&self, regs: &[RegId], projectors: &[ComplexMatrix]) -> Vec<f64> {
        self.branch_vectors(regs, projectors)
            .iter()
            .map(|v| norm_sqr(v))
            .collect()
    }

    /// Projects onto outcome `k` (complement when `k == projectors.len()`),
    /// renormalizes, and returns the outcome probability.
    pub fn collapse(&mut self, regs: &[RegId], projectors: &[ComplexMatrix], k: usize) -> f64 {
        let v = self.branch_vectors(regs, projectors).swap_remove(k);
        self.set_branch(v)
    }

    fn set_branch(&mut self, mut v: Vec<C64>) -> f64 {
        let p = norm_sqr(&v);
        if p > 0.0 {
            let s = 1.0 / p.sqrt();
            v.iter_mut().for_each(|z| *z *= s);
            self.amps = v;
        }
        p
    }

    /// Samples outcome `k` and collapses onto it.
    fn sample_collapse(
        &mut self,
        regs: &[RegId],
        projectors: &[ComplexMatrix],
        rng: &mut dyn RngCore,
    ) -> usize {
        let mut branches = self.branch_vectors(regs, projectors);
        let probs: Vec<f64> = branches.iter().map(|v| norm_sqr(v)).collect();
        let k = sample_index(&probs, rng);
        self.set_branch(branches.swap_remove(k));
        k
    }

    /// Samples a projective measurement on behalf of `actor`.
    pub fn measure(
        &mut self,
        actor: Party,
        regs: &[RegId],
        projectors: &[ComplexMatrix],
        rng: &mut dyn RngCore,
    ) -> Result<usize> {
        self.check_access(actor, regs)?;
        Ok(self.sample_collapse(regs, projectors, rng))
    }

    /// Reduced density matrix of `regs` (in the listed order).
    pub fn reduced_density(&self, regs: &[RegId]) -> ComplexMatrix {
        let kept = factor_offsets(&self.dims, regs);
        let others: Vec<usize> = (0..self.dims.len()).filter(|r| !regs.contains(r)).collect();
        let rest = factor_offsets(&self.dims, &others);
        let k = kept.len();
        let mut rho = zeros(k, k);
        for &o in &rest {
            for i in 0..k {
                let a = self.amps[kept[i] + o];
                if a == C64::default() {
                    continue;
                }
                for j in 0..k {
                    rho[(i, j)] += a * self.amps[kept[j] + o].conj();
                }
            }
        }
        rho
    }

    /// Computational-basis distribution of one register.
    pub fn basis_probabilities(&self, reg: RegId) -> Vec<f64> {
        let rho = self.reduced_density(&[reg]);
        (0..rho.nrows()).map(|i| rho[(i, i)].re).collect()
    }

    /// Executes one op with sampled measurement and randomness; returns the
    /// sampled value for `Measure` and `Random`.
    pub fn exec(&mut self, actor: Party, op: &Op, rng: &mut dyn RngCore) -> Result<Option<usize>> {
        match op {
            Op::Unitary { regs, matrix } => {
                self.apply(actor, regs, matrix)?;
                Ok(None)
            }
            Op::Measure {
                regs,
                projectors,
                record,
            } => {
                self.check_access(actor, &[*record])?;
                let k = self.measure(actor, regs, projectors, rng)?;
                self.apply_raw(&[*record], &shift(self.dims[*record], k));
                Ok(Some(k))
            }
            Op::Random { record } => {
                self.check_access(actor, &[*record])?;
                let d = self.dims[*record];
                let v = rng.random_range(0..d);
                self.apply_raw(&[*record], &shift(d, v));
                Ok(Some(v))
            }
        }
    }

    /// Samples an output rule; `None` is Abort.
    pub fn sample_output(&mut self, rule: &OutputRule, rng: &mut dyn RngCore) -> Option<String> {
        let projectors: Vec<ComplexMatrix> = rule.outcomes.iter().map(|(_, p)| p.clone()).collect();
        let k = self.sample_collapse(&rule.regs, &projectors, rng);
        rule.outcomes.get(k).map(|(l, _)| l.clone())
    }

    /// Adds `weight ×` the joint output distribution of this state to `dist`.
    pub fn accumulate_outputs(
        &self,
        alice: &OutputRule,
        bob: &OutputRule,
        weight: f64,
        dist: &mut Distribution,
    ) {
        let label = |rule: &OutputRule, k: usize| -> String {
            rule.outcomes
                .get(k)
                .map(|(l, _)| l.clone())
                .unwrap_or_else(|| ABORT.to_string())
        };
        let pa: Vec<ComplexMatrix> = alice.outcomes.iter().map(|(_, p)| p.clone()).collect();
        let pb: Vec<ComplexMatrix> = bob.outcomes.iter().map(|(_, p)| p.clone()).collect();
        let va = self.branch_vectors(&alice.regs, &pa);
        let vb = self.branch_vectors(&bob.regs, &pb);
        for (i, x) in va.iter().enumerate() {
            for (j, y) in vb.iter().enumerate() {
                let p: f64 = x.iter().zip(y).map(|(u, v)| (u.conj() * v).re).sum();
                if p * weight > BRANCH_FLOOR {
                    dist.add(&label(alice, i), &label(bob, j), p * weight);
                }
            }
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Calls `sink(world, weight)` for every branch of the remaining ops.
pub(crate) fn enumerate_branches(
    mut world: World,
    ops: &[(Party, &Op)],
    weight: f64,
    sink: &mut dyn FnMut(&World, f64),
) {
    for (i, (_, op)) in ops.iter().enumerate() {
        match op {
            Op::Unitary { regs, matrix } => world.apply_raw(regs, matrix),
            Op::Measure {
                regs,
                projectors,
                record,
            } => {
                let probs = world.probabilities(regs, projectors);
                for (k, &p) in probs.iter().enumerate() {
                    if p * weight <= BRANCH_FLOOR {
                        continue;
                    }
                    let mut w = world.clone();
                    w.collapse(regs, projectors, k);
                    w.apply_raw(&[*record], &shift(w.dims[*record], k));
                    enumerate_branches(w, &ops[i + 1..], weight * p, sink);
                }
                return;
            }
            Op::Random { record } => {
                let d = world.dims[*record];
                for v in 0..d {
                    let mut w = world.clone();
                    w.apply_raw(&[*record], &shift(d, v));
                    enumerate_branches(w, &ops[i + 1..], weight / d as f64, sink);
                }
                return;
            }
        }
    }
    sink(&world, weight);
}

/// Exact joint output distribution of a protocol, branching on every
/// measurement and random draw.
pub fn exact_distribution(ip: &InteractiveProtocol) -> Result<Distribution> {
    let ops: Vec<(Party, &Op)> = ip
        .steps
        .iter()
        .flat_map(|s| s.ops.iter().map(move |op| (s.actor, op)))
        .collect();
    let mut dist = Distribution::default();
    enumerate_branches(World::new(&ip.registers), &ops, 1.0, &mut |w, p| {
        w.accumulate_outputs(&ip.alice_output, &ip.bob_output, p, &mut dist)
    });
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlin::{basis_projector, fourier};
    use rand::SeedableRng;

    fn regs() -> Vec<Register> {
        vec![
            Register {
                name: "a".into(),
                dim: 2,
                owner: Owner::Alice,
            },
            Register {
                name: "m".into(),
                dim: 3,
                owner: Owner::Message,
            },
            Register {
                name: "b".into(),
                dim: 2,
                owner: Owner::Bob,
            },
        ]
    }

    #[test]
    fn alloc_appends_zero_register() {
        let mut w = World::new(&regs());
        w.apply_raw(&[0], &shift(2, 1));
        let e = w.alloc(Owner::Bob, 3);
        assert_eq!(e, 3);
        assert_eq!(w.dims(), &[2, 3, 2, 3]);
        assert!((w.basis_probabilities(0)[1] - 1.0).abs() < 1e-15);
        assert!((w.basis_probabilities(e)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn owner_checks() {
        let mut w = World::new(&regs());
        assert!(w.apply(Party::Bob, &[0], &shift(2, 1)).is_err());
        assert!(w.apply(Party::Bob, &[1], &shift(3, 1)).is_ok());
        assert!(w
            .apply(Party::Alice, &[0, 1], &crate::qlin::identity(5))
            .is_err());
    }

    #[test]
    fn measurement_collapses() {
        let mut w = World::new(&regs());
        w.apply_raw(&[1], &fourier(3));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = [basis_projector(3, 0), basis_projector(3, 1)];
        let probs = w.probabilities(&[1], &p);
        assert!(probs.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
        let k = w.measure(Party::Bob, &[1], &p, &mut rng).unwrap();
        assert!((w.basis_probabilities(1)[k] - 1.0).abs() < 1e-12);
    }
}
