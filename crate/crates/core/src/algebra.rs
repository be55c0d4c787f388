//! Cost-vector algebra for dephasing-plus-loss entanglement resources.
//!
//! A Bell pair travelling through the network is summarised by a
//! [`CostVector`]: its fidelity with respect to `|Φ+⟩` and the probability
//! that it is delivered at all. Entanglement swapping composes two pairs in
//! series, purification composes them in parallel. Under pure dephasing
//! both operations are commutative and associative, which is what makes
//! series-parallel graph reduction well defined.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominators of the purification map below this are treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Distance from 1/2 under which the swap inverse is undefined.
pub const PUNCTURE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("{what} {value} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("formal fidelity {0} cannot be used as a physical fidelity")]
    Formal(f64),
    #[error("no inverse at domain puncture: fidelity {0} is 1/2")]
    NoInverse(f64),
    #[error("singular purification input ({0}, {1})")]
    SingularPurification(f64, f64),
    #[error("empty chain")]
    EmptyChain,
    #[error("grid breadth and depth must both be at least 1 (got {breadth}x{depth})")]
    InvalidGrid { breadth: u32, depth: u32 },
}

fn check_unit(what: &'static str, value: f64) -> Result<f64, AlgebraError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(AlgebraError::OutOfRange { what, value })
    }
}

/// Physical fidelity, always in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Fidelity(f64);

impl Fidelity {
    pub const ONE: Fidelity = Fidelity(1.0);
    pub const HALF: Fidelity = Fidelity(0.5);
    pub const ZERO: Fidelity = Fidelity(0.0);

    pub fn new(value: f64) -> Result<Self, AlgebraError> {
        check_unit("fidelity", value).map(Fidelity)
    }

    /// Rounding in `a*b + (1-a)*(1-b)` can land one ulp outside the unit
    /// interval; results of the algebra are pinned back inside it.
    fn clamped(value: f64) -> Self {
        Fidelity(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Fidelity {
    type Error = AlgebraError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Fidelity::new(value)
    }
}

impl From<Fidelity> for f64 {
    fn from(f: Fidelity) -> f64 {
        f.0
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A fidelity-like real that may lie outside `[0, 1]`.
///
/// Group inverses of the swap map are generally not physical; they live
/// here so the group laws can be checked without ever entering a graph.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FormalFidelity(f64);

impl FormalFidelity {
    pub fn new(value: f64) -> Self {
        FormalFidelity(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// True when the value has no physical meaning.
    pub fn is_formal(self) -> bool {
        !(0.0..=1.0).contains(&self.0)
    }

    pub fn to_physical(self) -> Result<Fidelity, AlgebraError> {
        if self.is_formal() {
            Err(AlgebraError::Formal(self.0))
        } else {
            Ok(Fidelity(self.0))
        }
    }
}

impl From<Fidelity> for FormalFidelity {
    fn from(f: Fidelity) -> Self {
        FormalFidelity(f.0)
    }
}

/// Probability that a resource is delivered.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SuccessProb(f64);

impl SuccessProb {
    pub const ONE: SuccessProb = SuccessProb(1.0);
    pub const ZERO: SuccessProb = SuccessProb(0.0);

    pub fn new(value: f64) -> Result<Self, AlgebraError> {
        check_unit("success probability", value).map(SuccessProb)
    }

    fn clamped(value: f64) -> Self {
        SuccessProb(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SuccessProb {
    type Error = AlgebraError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        SuccessProb::new(value)
    }
}

impl From<SuccessProb> for f64 {
    fn from(p: SuccessProb) -> f64 {
        p.0
    }
}

impl fmt::Display for SuccessProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `-ln(η)`; `+∞` stands for a channel that never delivers.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogLoss(f64);

impl LogLoss {
    pub const ZERO: LogLoss = LogLoss(0.0);
    pub const INFINITE: LogLoss = LogLoss(f64::INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn to_success(self) -> SuccessProb {
        SuccessProb::clamped((-self.0).exp())
    }
}

/// Converts a success probability into additive log-loss.
pub fn to_log_loss(p: SuccessProb) -> LogLoss {
    if p.0 == 0.0 {
        LogLoss::INFINITE
    } else {
        // -ln(1) is -0.0; normalise so the identity prints as 0.
        LogLoss(-p.0.ln() + 0.0)
    }
}

pub fn add_log_loss(a: LogLoss, b: LogLoss) -> LogLoss {
    LogLoss(a.0 + b.0)
}

/// Per-operation stochasticity shared by every node of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationCosts {
    #[serde(default = "one")]
    pub swap_success: SuccessProb,
    #[serde(default = "one")]
    pub purify_success: SuccessProb,
    /// Whether purification success also carries the post-selection
    /// acceptance probability of the parity check.
    #[serde(default = "yes")]
    pub physical_acceptance: bool,
}

fn one() -> SuccessProb {
    SuccessProb::ONE
}

fn yes() -> bool {
    true
}

impl Default for OperationCosts {
    fn default() -> Self {
        OperationCosts {
            swap_success: SuccessProb::ONE,
            purify_success: SuccessProb::ONE,
            physical_acceptance: true,
        }
    }
}

impl OperationCosts {
    /// Deterministic operations with no acceptance factor: success is
    /// carried by the channels alone.
    pub fn ideal() -> Self {
        OperationCosts {
            physical_acceptance: false,
            ..Default::default()
        }
    }
}

/// The `(F, η)` pair attached to every channel and composed resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostVector {
    pub fidelity: Fidelity,
    pub success: SuccessProb,
}

impl CostVector {
    pub fn new(fidelity: f64, success: f64) -> Result<Self, AlgebraError> {
        Ok(CostVector {
            fidelity: Fidelity::new(fidelity)?,
            success: SuccessProb::new(success)?,
        })
    }

    /// Series composition through one swapping router.
    pub fn swap(self, other: CostVector, ops: &OperationCosts) -> CostVector {
        CostVector {
            fidelity: swap_fidelity(self.fidelity, other.fidelity),
            success: SuccessProb::clamped(self.success.0 * other.success.0 * ops.swap_success.0),
        }
    }

    /// Parallel composition by one purification round.
    pub fn purify(self, other: CostVector, ops: &OperationCosts) -> Result<CostVector, AlgebraError> {
        let fidelity = purify_fidelity(self.fidelity, other.fidelity)?;
        let mut success = self.success.0 * other.success.0 * ops.purify_success.0;
        if ops.physical_acceptance {
            success *= purify_acceptance(self.fidelity, other.fidelity).0;
        }
        Ok(CostVector {
            fidelity,
            success: SuccessProb::clamped(success),
        })
    }
}

fn swap_raw(a: f64, b: f64) -> f64 {
    a * b + (1.0 - a) * (1.0 - b)
}

/// Fidelity after swapping two pairs: `f1·f2 + (1−f1)(1−f2)`.
pub fn swap_fidelity(f1: Fidelity, f2: Fidelity) -> Fidelity {
    Fidelity::clamped(swap_raw(f1.0, f2.0))
}

/// The swap map extended to formal values, for group-law checks.
pub fn swap_formal(f1: FormalFidelity, f2: FormalFidelity) -> FormalFidelity {
    FormalFidelity(swap_raw(f1.0, f2.0))
}

/// The unique `g` with `swap_fidelity(f, g) = 1`, namely `f / (2f − 1)`.
pub fn swap_inverse(f: Fidelity) -> Result<FormalFidelity, AlgebraError> {
    let denom = 2.0 * f.0 - 1.0;
    if denom.abs() <= 2.0 * PUNCTURE_EPS {
        return Err(AlgebraError::NoInverse(f.0));
    }
    Ok(FormalFidelity(f.0 / denom))
}

/// Fidelity after post-selected purification of two pairs.
pub fn purify_fidelity(f1: Fidelity, f2: Fidelity) -> Result<Fidelity, AlgebraError> {
    let agree = f1.0 * f2.0;
    let denom = agree + (1.0 - f1.0) * (1.0 - f2.0);
    if denom <= SINGULAR_EPS {
        return Err(AlgebraError::SingularPurification(f1.0, f2.0));
    }
    Ok(Fidelity::clamped(agree / denom))
}

/// Probability that the purification parity check passes.
///
/// Numerically the same expression as [`swap_fidelity`], but consumed as a
/// probability.
pub fn purify_acceptance(f1: Fidelity, f2: Fidelity) -> SuccessProb {
    SuccessProb::clamped(swap_raw(f1.0, f2.0))
}

/// Purification of `n` pairs at once: `ΠF / (ΠF + Π(1−F))`.
///
/// Evaluated through the product of error odds so that long chains do not
/// underflow.
pub fn purify_chain(fs: &[Fidelity]) -> Result<Fidelity, AlgebraError> {
    let (first, rest) = fs.split_first().ok_or(AlgebraError::EmptyChain)?;
    if rest.is_empty() {
        return Ok(*first);
    }
    let zeros = fs.iter().filter(|f| f.0 == 0.0).count();
    let ones = fs.iter().filter(|f| f.0 == 1.0).count();
    match (zeros, ones) {
        (0, 0) => {}
        (0, _) => return Ok(Fidelity::ONE),
        (_, 0) => return Ok(Fidelity::ZERO),
        _ => {
            let zero = fs.iter().find(|f| f.0 == 0.0).unwrap();
            let one = fs.iter().find(|f| f.0 == 1.0).unwrap();
            return Err(AlgebraError::SingularPurification(zero.0, one.0));
        }
    }
    let log_odds: f64 = fs.iter().map(|f| (1.0 - f.0).ln() - f.0.ln()).sum();
    Ok(Fidelity::clamped(1.0 / (1.0 + log_odds.exp())))
}

/// Left fold of [`swap_fidelity`].
pub fn swap_chain(fs: &[Fidelity]) -> Result<Fidelity, AlgebraError> {
    let (first, rest) = fs.split_first().ok_or(AlgebraError::EmptyChain)?;
    Ok(rest.iter().fold(*first, |acc, f| swap_fidelity(acc, *f)))
}

/// Success of traversing channels in sequence.
pub fn compose_success(ps: &[SuccessProb]) -> Result<SuccessProb, AlgebraError> {
    let (first, rest) = ps.split_first().ok_or(AlgebraError::EmptyChain)?;
    Ok(SuccessProb(rest.iter().fold(first.0, |acc, p| acc * p.0)))
}

/// Fidelity of `|Φ+⟩` after one qubit crosses a dephasing channel whose
/// success parameter is `p`.
pub fn dephasing_bell_fidelity(p: SuccessProb) -> Fidelity {
    Fidelity::clamped(p.0 + (1.0 - p.0) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridStrategy {
    /// Purify the `b` parallel copies of every hop, then swap the hops.
    PurifyThenSwap,
    /// Swap every strand end to end, then purify the `b` strands.
    SwapThenPurify,
}

/// A uniform `breadth × depth` lattice of identical channels between two users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub breadth: u32,
    pub depth: u32,
    pub channel_fidelity: Fidelity,
    pub channel_success: SuccessProb,
    pub strategy: GridStrategy,
}

/// Single rounding via libm; `powi` rounds once per squaring.
fn pow(base: f64, exp: u64) -> f64 {
    base.powf(exp as f64)
}

/// Acceptance product of folding `n` copies of `f` by pairwise purification.
fn fold_acceptance(f: Fidelity, n: u32) -> Result<f64, AlgebraError> {
    let mut acc = f;
    let mut accepted = 1.0;
    for _ in 1..n {
        accepted *= purify_acceptance(acc, f).0;
        acc = purify_fidelity(acc, f)?;
    }
    Ok(accepted)
}

/// End-to-end cost of a uniform grid under one of the two canonical
/// strategies.
pub fn grid_cost(spec: &GridSpec, ops: &OperationCosts) -> Result<CostVector, AlgebraError> {
    let (b, d) = (spec.breadth, spec.depth);
    if b == 0 || d == 0 {
        return Err(AlgebraError::InvalidGrid { breadth: b, depth: d });
    }
    let f = spec.channel_fidelity;
    let (fidelity, swaps, purifications, acceptance) = match spec.strategy {
        GridStrategy::PurifyThenSwap => {
            let hop = purify_chain(&vec![f; b as usize])?;
            let fidelity = swap_chain(&vec![hop; d as usize])?;
            let acceptance = pow(fold_acceptance(f, b)?, d as u64);
            (fidelity, (d - 1) as u64, d as u64 * (b - 1) as u64, acceptance)
        }
        GridStrategy::SwapThenPurify => {
            let strand = swap_chain(&vec![f; d as usize])?;
            let fidelity = purify_chain(&vec![strand; b as usize])?;
            let acceptance = fold_acceptance(strand, b)?;
            (fidelity, b as u64 * (d - 1) as u64, (b - 1) as u64, acceptance)
        }
    };
    let mut success = pow(spec.channel_success.0, b as u64 * d as u64)
        * pow(ops.swap_success.0, swaps)
        * pow(ops.purify_success.0, purifications);
    if ops.physical_acceptance {
        success *= acceptance;
    }
    Ok(CostVector {
        fidelity,
        success: SuccessProb::clamped(success),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fid(v: f64) -> Fidelity {
        Fidelity::new(v).unwrap()
    }

    fn p(v: f64) -> SuccessProb {
        SuccessProb::new(v).unwrap()
    }

    #[test]
    fn range_checks() {
        assert!(Fidelity::new(1.2).is_err());
        assert!(Fidelity::new(-0.1).is_err());
        assert!(Fidelity::new(f64::NAN).is_err());
        assert!(SuccessProb::new(1.0 + 1e-15).is_err());
        assert!(serde_json::from_str::<Fidelity>("1.5").is_err());
    }

    #[test]
    fn swap_examples() {
        for f in [0.0, 0.3, 0.5, 0.77, 1.0] {
            assert_eq!(swap_fidelity(fid(f), Fidelity::ONE).value(), f);
        }
        assert_eq!(swap_fidelity(Fidelity::ONE, Fidelity::ONE).value(), 1.0);
        assert!((swap_fidelity(fid(0.9), fid(0.9)).value() - 0.82).abs() < 1e-12);
        assert!((swap_fidelity(fid(0.8), fid(0.7)).value() - 0.62).abs() < 1e-12);
    }

    #[test]
    fn swap_inverse_examples() {
        assert_eq!(swap_inverse(Fidelity::ONE).unwrap().value(), 1.0);
        assert_eq!(swap_inverse(Fidelity::ZERO).unwrap().value(), 0.0);
        let g = swap_inverse(fid(0.75)).unwrap();
        assert!((g.value() - 1.5).abs() < 1e-12);
        assert!(g.is_formal());
        assert!(g.to_physical().is_err());
        let back = swap_formal(fid(0.75).into(), g);
        assert!((back.value() - 1.0).abs() < 1e-12);
        assert!(matches!(swap_inverse(Fidelity::HALF), Err(AlgebraError::NoInverse(_))));
        assert!(swap_inverse(fid(0.5 + 1e-10)).is_err());
    }

    #[test]
    fn purify_examples() {
        for f in [0.0, 0.2, 0.6, 0.93, 1.0] {
            assert_eq!(purify_fidelity(fid(f), Fidelity::HALF).unwrap().value(), f);
        }
        for f in [0.1, 0.4, 0.6, 0.99] {
            let r = purify_fidelity(fid(f), fid(1.0 - f)).unwrap().value();
            assert!((r - 0.5).abs() < 1e-12);
        }
        let r = purify_fidelity(fid(0.7), fid(0.7)).unwrap().value();
        assert!((r - 0.49 / 0.58).abs() < 1e-12);
        let r = purify_fidelity(fid(0.8), fid(0.8)).unwrap().value();
        assert!((r - 0.64 / 0.68).abs() < 1e-12);
    }

    #[test]
    fn purify_singular_pairs() {
        assert!(matches!(
            purify_fidelity(Fidelity::ZERO, Fidelity::ONE),
            Err(AlgebraError::SingularPurification(..))
        ));
        assert!(purify_fidelity(Fidelity::ONE, Fidelity::ZERO).is_err());
        assert!(purify_chain(&[fid(0.7), Fidelity::ZERO, Fidelity::ONE]).is_err());
    }

    #[test]
    fn acceptance_examples() {
        assert_eq!(purify_acceptance(Fidelity::ONE, Fidelity::ONE).value(), 1.0);
        assert_eq!(purify_acceptance(Fidelity::HALF, Fidelity::HALF).value(), 0.5);
        assert!((purify_acceptance(fid(0.7), fid(0.7)).value() - 0.58).abs() < 1e-12);
    }

    #[test]
    fn chains() {
        assert_eq!(purify_chain(&[fid(0.37)]).unwrap().value(), 0.37);
        let r = purify_chain(&[fid(0.7); 3]).unwrap().value();
        assert!((r - 0.343 / 0.370).abs() < 1e-12);
        let r = purify_chain(&[fid(0.81), Fidelity::HALF, Fidelity::HALF])
            .unwrap()
            .value();
        assert!((r - 0.81).abs() < 1e-12);
        assert_eq!(purify_chain(&[fid(0.3), Fidelity::ONE]).unwrap().value(), 1.0);
        assert_eq!(purify_chain(&[]), Err(AlgebraError::EmptyChain));

        assert_eq!(swap_chain(&[fid(0.42)]).unwrap().value(), 0.42);
        assert!((swap_chain(&[fid(0.9); 3]).unwrap().value() - 0.756).abs() < 1e-12);
        assert_eq!(swap_chain(&[Fidelity::ONE; 7]).unwrap().value(), 1.0);
    }

    #[test]
    fn success_and_log_loss() {
        assert_eq!(compose_success(&[p(0.4)]).unwrap().value(), 0.4);
        assert!((compose_success(&[p(0.9); 3]).unwrap().value() - 0.729).abs() < 1e-15);
        assert_eq!(compose_success(&[p(1.0), p(1.0), p(0.0)]).unwrap().value(), 0.0);

        assert_eq!(to_log_loss(SuccessProb::ONE), LogLoss::ZERO);
        assert_eq!(to_log_loss(SuccessProb::ONE).value().to_bits(), 0.0f64.to_bits());
        assert!((to_log_loss(p((-1.0f64).exp())).value() - 1.0).abs() < 1e-15);
        let sum = add_log_loss(to_log_loss(p(0.9)), to_log_loss(p(0.8)));
        assert!((sum.value() + 0.72f64.ln()).abs() < 1e-12);
        assert!((sum.to_success().value() - 0.72).abs() < 1e-12);

        let inf = to_log_loss(SuccessProb::ZERO);
        assert!(inf.is_infinite());
        assert!(add_log_loss(inf, to_log_loss(p(0.5))).is_infinite());
        assert_eq!(inf.to_success().value(), 0.0);
    }

    #[test]
    fn log_loss_round_trip() {
        let mut eta = 1.0;
        while eta >= 1e-9 {
            let back = to_log_loss(p(eta)).to_success().value();
            assert!((back - eta).abs() <= 1e-12, "{eta}");
            eta *= 0.83;
        }
    }

    #[test]
    fn dephasing_examples() {
        assert_eq!(dephasing_bell_fidelity(SuccessProb::ONE).value(), 1.0);
        assert_eq!(dephasing_bell_fidelity(SuccessProb::ZERO).value(), 0.5);
        assert!((dephasing_bell_fidelity(p(0.8)).value() - 0.9).abs() < 1e-15);
    }

    fn grid(b: u32, d: u32, f: f64, eta: f64, strategy: GridStrategy) -> GridSpec {
        GridSpec {
            breadth: b,
            depth: d,
            channel_fidelity: fid(f),
            channel_success: p(eta),
            strategy,
        }
    }

    #[test]
    fn grid_single_channel() {
        for strategy in [GridStrategy::PurifyThenSwap, GridStrategy::SwapThenPurify] {
            let c = grid_cost(&grid(1, 1, 0.83, 0.61, strategy), &OperationCosts::default()).unwrap();
            assert_eq!(c, CostVector::new(0.83, 0.61).unwrap());
        }
    }

    #[test]
    fn grid_two_by_three() {
        let c = grid_cost(
            &grid(2, 3, 0.9, 0.9, GridStrategy::PurifyThenSwap),
            &OperationCosts::ideal(),
        )
        .unwrap();
        assert!((c.fidelity.value() - 0.9642997054598743).abs() < 1e-12);
        assert_eq!(c.success.value(), 0.9f64.powf(6.0));
        assert_eq!(c.success.value(), 0.531441);
    }

    #[test]
    fn grid_operation_factors() {
        let ops = OperationCosts {
            swap_success: p(0.5),
            purify_success: p(0.25),
            physical_acceptance: false,
        };
        // 3 strands of 2 hops: swap-first needs 3 swaps and 2 purifications.
        let c = grid_cost(&grid(3, 2, 0.9, 1.0, GridStrategy::SwapThenPurify), &ops).unwrap();
        assert!((c.success.value() - 0.5f64.powi(3) * 0.25f64.powi(2)).abs() < 1e-15);
        // purify-first needs 1 swap and 4 purifications.
        let c = grid_cost(&grid(3, 2, 0.9, 1.0, GridStrategy::PurifyThenSwap), &ops).unwrap();
        assert!((c.success.value() - 0.5 * 0.25f64.powi(4)).abs() < 1e-15);

        let ops = OperationCosts::default();
        let c = grid_cost(&grid(3, 1, 0.7, 1.0, GridStrategy::PurifyThenSwap), &ops).unwrap();
        // Telescoped acceptance of a 3-pair fold.
        assert!((c.success.value() - (0.343 + 0.027)).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_empty() {
        assert!(grid_cost(
            &grid(0, 3, 0.9, 0.9, GridStrategy::PurifyThenSwap),
            &OperationCosts::ideal()
        )
        .is_err());
    }

    #[test]
    fn op_costs_document() {
        let ops: OperationCosts = serde_json::from_str("{}").unwrap();
        assert_eq!(ops, OperationCosts::default());
        assert!(serde_json::from_str::<OperationCosts>(r#"{"swap_success": 2}"#).is_err());
        assert!(serde_json::from_str::<OperationCosts>(r#"{"other": 1}"#).is_err());
    }
}
