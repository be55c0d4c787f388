//! Stochastic validation of the cost-vector algebra.
//!
//! Under pure dephasing a delivered Bell pair is either `|Φ+⟩` or `|Φ−⟩`,
//! and a Z error on either qubit flips between them, so one phase bit per
//! pair is a sufficient statistic. Swapping XORs the bits of its inputs;
//! purification keeps a pair only when both inputs carry the same bit.
//!
//! Every sample draws from its own ChaCha8 stream selected by the sample
//! index, so an estimate depends only on `(tree, graph, samples, seed)`
//! and never on how the work is split across threads.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{CostVector, Fidelity, OperationCosts, SuccessProb};
use crate::graph::{GraphError, NetworkGraph};
use crate::reduction::StrategyTree;

/// Samples handled by one rayon work item.
const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("at least one sample is required")]
    NoSamples,
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairSample {
    pub delivered: bool,
    /// `true` for `|Φ−⟩`. Only meaningful when delivered.
    pub phase_flipped: bool,
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// One use of a channel: lost with probability `1 − η`, otherwise
/// phase-flipped with probability `1 − F`.
pub fn sample_channel<R: Rng + ?Sized>(cost: &CostVector, rng: &mut R) -> PairSample {
    let delivered = bernoulli(rng, cost.success.value());
    let flipped = !bernoulli(rng, cost.fidelity.value());
    PairSample {
        delivered,
        phase_flipped: delivered && flipped,
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Leaf(CostVector),
    Swap,
    Purify,
}

/// A strategy tree in postfix form with channel costs resolved.
#[derive(Debug, Clone)]
pub struct CompiledStrategy {
    program: Vec<Instr>,
    ops: OperationCosts,
}

impl CompiledStrategy {
    pub fn new(tree: &StrategyTree, g: &NetworkGraph) -> Result<Self, McError> {
        let mut program = Vec::new();
        compile(tree, g, &mut program)?;
        Ok(CompiledStrategy {
            program,
            ops: *g.op_costs(),
        })
    }

    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> PairSample {
        let mut stack: Vec<PairSample> = Vec::with_capacity(self.program.len());
        for instr in &self.program {
            let sample = match *instr {
                Instr::Leaf(cost) => sample_channel(&cost, rng),
                Instr::Swap => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    let ok = bernoulli(rng, self.ops.swap_success.value());
                    PairSample {
                        delivered: a.delivered && b.delivered && ok,
                        phase_flipped: a.phase_flipped ^ b.phase_flipped,
                    }
                }
                Instr::Purify => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    let ok = bernoulli(rng, self.ops.purify_success.value());
                    let parity = !self.ops.physical_acceptance || a.phase_flipped == b.phase_flipped;
                    PairSample {
                        delivered: a.delivered && b.delivered && ok && parity,
                        phase_flipped: a.phase_flipped,
                    }
                }
            };
            stack.push(sample);
        }
        let mut out = stack.pop().unwrap();
        out.phase_flipped &= out.delivered;
        out
    }
}

fn compile(tree: &StrategyTree, g: &NetworkGraph, out: &mut Vec<Instr>) -> Result<(), McError> {
    match tree {
        StrategyTree::Leaf { channel } => {
            let c = g
                .channel(channel)
                .ok_or_else(|| GraphError::UnknownChannel(channel.clone()))?;
            out.push(Instr::Leaf(c.cost));
        }
        StrategyTree::Swap { left, right } => {
            compile(left, g, out)?;
            compile(right, g, out)?;
            out.push(Instr::Swap);
        }
        StrategyTree::Purify { left, right } => {
            compile(left, g, out)?;
            compile(right, g, out)?;
            out.push(Instr::Purify);
        }
    }
    Ok(())
}

/// Executes `tree` once.
pub fn execute_strategy<R: Rng + ?Sized>(
    tree: &StrategyTree,
    g: &NetworkGraph,
    rng: &mut R,
) -> Result<PairSample, McError> {
    Ok(CompiledStrategy::new(tree, g)?.run(rng))
}

/// The RNG stream of sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    /// Fraction of delivered pairs that are `|Φ+⟩`; `None` when nothing
    /// was delivered.
    pub fidelity_hat: Option<f64>,
    pub success_hat: f64,
    pub samples: u64,
    pub delivered: u64,
    pub std_error_fidelity: Option<f64>,
    pub std_error_success: f64,
    pub seed: u64,
}

/// Monte-Carlo estimate of the cost vector of `tree`, run on the current
/// rayon pool.
pub fn estimate(tree: &StrategyTree, g: &NetworkGraph, samples: u64, seed: u64) -> Result<McEstimate, McError> {
    if samples == 0 {
        return Err(McError::NoSamples);
    }
    let program = CompiledStrategy::new(tree, g)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let chunks = samples.div_ceil(CHUNK);
    let (delivered, clean) = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let (mut delivered, mut clean) = (0u64, 0u64);
            for index in chunk * CHUNK..((chunk + 1) * CHUNK).min(samples) {
                let mut rng = base.clone();
                rng.set_stream(index);
                let s = program.run(&mut rng);
                delivered += s.delivered as u64;
                clean += (s.delivered && !s.phase_flipped) as u64;
            }
            (delivered, clean)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let success_hat = delivered as f64 / samples as f64;
    let fidelity_hat = (delivered > 0).then(|| clean as f64 / delivered as f64);
    Ok(McEstimate {
        fidelity_hat,
        success_hat,
        samples,
        delivered,
        std_error_fidelity: fidelity_hat.map(|f| (f * (1.0 - f) / delivered as f64).sqrt()),
        std_error_success: (success_hat * (1.0 - success_hat) / samples as f64).sqrt(),
        seed,
    })
}

/// Two-qubit density matrix in the `|00⟩, |01⟩, |10⟩, |11⟩` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix4(Matrix4<Complex64>);

impl DensityMatrix4 {
    /// Accepts only Hermitian, unit-trace, positive semidefinite matrices.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self, McError> {
        if (m - m.adjoint()).iter().any(|z| z.norm() > 1e-12) {
            return Err(McError::InvalidDensityMatrix("not Hermitian"));
        }
        if (m.trace() - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(McError::InvalidDensityMatrix("trace is not 1"));
        }
        let min = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(McError::InvalidDensityMatrix("not positive semidefinite"));
        }
        Ok(DensityMatrix4(m))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }
}

fn phi_plus() -> Matrix4<Complex64> {
    let h = Complex64::new(0.5, 0.0);
    let mut m = Matrix4::zeros();
    for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        m[(i, j)] = h;
    }
    m
}

/// `|Φ+⟩⟨Φ+|` after one qubit passes the dephasing channel
/// `ρ ↦ pρ + (1−p)(ρ + ZρZ)/2`.
pub fn dephase_bell(p: SuccessProb) -> DensityMatrix4 {
    let rho = phi_plus();
    let z = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, -1.0, -1.0).map(|x| Complex64::new(x, 0.0)));
    let steady = (rho + z * rho * z) * Complex64::new(0.5, 0.0);
    let p = Complex64::new(p.value(), 0.0);
    let out = rho * p + steady * (Complex64::new(1.0, 0.0) - p);
    DensityMatrix4::new(out).expect("a dephased Bell state is a valid density matrix")
}

/// `⟨Φ+|m|Φ+⟩`.
pub fn bell_fidelity(m: &DensityMatrix4) -> Result<Fidelity, McError> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = nalgebra::Vector4::new(s, 0.0, 0.0, s).map(|x| Complex64::new(x, 0.0));
    let overlap = (psi.adjoint() * m.0 * psi)[(0, 0)];
    if overlap.im.abs() > 1e-12 {
        return Err(McError::InvalidDensityMatrix("complex fidelity"));
    }
    Fidelity::new(overlap.re.clamp(0.0, 1.0)).map_err(|_| McError::InvalidDensityMatrix("fidelity out of range"))
}
