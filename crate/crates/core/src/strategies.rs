//! Causal decision rules.
//!
//! A strategy sees only the observation prefix y_0..y_k when deciding at
//! time k; it never reads the hidden path. The catalog contains blind
//! deterministic rules, observation-driven parity rules, the filter-based
//! mean-optimal rule (exact and particle), and the frozen-window rule that
//! applies a stale mean-optimal decision map over a sliding window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{filter_update, particle_update, Belief, ParticleEnsemble};
use crate::losses::{expected_loss_under_belief, Decision, Loss};
use crate::processes::{FiniteHmm, ProcessModel};
use crate::rng::strategy_rng;
use rand_chacha::ChaCha8Rng;

/// Serializable description of a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Always play the same decision.
    Constant { value: Decision },
    /// u_k = k mod 2.
    Alternating,
    /// u_k = (y_1 + ... + y_{k-1}) mod 2.
    Parity,
    /// u_k = k + shift (shift >= 0), for offset-valued losses.
    DelayShift { shift: i64 },
    /// u_k = 2^(r + n + 1) - k on the dyadic block 2^n <= k < 2^(n+1).
    BlockLookahead { r: u32 },
    /// Argmin of the exact-filter expected loss.
    MeanOptimalExact,
    /// Argmin of the particle-filter expected loss.
    MeanOptimalParticle { particles: usize },
    /// On k_n <= k < k_{n+1}, play the mean-optimal decision map of time
    /// k_n applied to the window of the last k_n + 1 observations.
    FrozenWindow { schedule: Vec<u64> },
}

impl StrategySpec {
    pub fn name(&self) -> String {
        match self {
            StrategySpec::Constant { value } => format!("constant({value})"),
            StrategySpec::Alternating => "alternating".into(),
            StrategySpec::Parity => "parity".into(),
            StrategySpec::DelayShift { shift } => format!("delay-shift({shift})"),
            StrategySpec::BlockLookahead { r } => format!("block-lookahead({r})"),
            StrategySpec::MeanOptimalExact => "mean-optimal-exact".into(),
            StrategySpec::MeanOptimalParticle { particles } => {
                format!("mean-optimal-particle({particles})")
            }
            StrategySpec::FrozenWindow { schedule } => {
                let items: Vec<String> = schedule.iter().map(|k| k.to_string()).collect();
                format!("frozen-window({})", items.join(","))
            }
        }
    }
}

/// Grid index minimizing the belief-expected loss, with the minimum value.
/// Ties break to the lowest grid index so runs are reproducible.
pub fn mean_optimal_index_value(belief: &Belief, loss: &Loss) -> Result<(usize, f64)> {
    let grid = loss.grid();
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut best_idx = 0usize;
    let mut best = f64::INFINITY;
    for idx in 0..grid.len() {
        let u = grid.decision(idx);
        let v = expected_loss_under_belief(loss, &u, belief)?;
        if v < best {
            best = v;
            best_idx = idx;
        }
    }
    Ok((best_idx, best))
}

/// Grid element minimizing the belief-expected loss.
pub fn mean_optimal_decision(belief: &Belief, loss: &Loss) -> Result<Decision> {
    let (idx, _) = mean_optimal_index_value(belief, loss)?;
    Ok(loss.grid().decision(idx))
}

/// A stateful decision rule. `decide` must be called with the observation
/// prefix y_0..y_k; filter-backed rules advance their internal state
/// incrementally as the prefix grows.
pub trait Policy: Send {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision>;
}

/// Builds a runnable policy for one path. Randomized policies draw their
/// own stream from `(master_seed, seed_index)`.
pub fn build_policy(
    spec: &StrategySpec,
    model: &ProcessModel,
    loss: &Loss,
    master_seed: u64,
    seed_index: u64,
) -> Result<Box<dyn Policy>> {
    match spec {
        StrategySpec::Constant { value } => {
            if !loss.grid().contains(value) {
                return Err(Error::DecisionOutsideGrid(format!(
                    "{value} for {}",
                    loss.name()
                )));
            }
            Ok(Box::new(ConstantPolicy { value: value.clone() }))
        }
        StrategySpec::Alternating => Ok(Box::new(AlternatingPolicy)),
        StrategySpec::Parity => Ok(Box::new(ParityPolicy { upto: 0, parity: 0 })),
        StrategySpec::DelayShift { shift } => {
            if *shift < 0 {
                return Err(Error::InvalidParameter("delay shift must be >= 0".into()));
            }
            Ok(Box::new(DelayShiftPolicy { shift: *shift }))
        }
        StrategySpec::BlockLookahead { r } => {
            if *r > 32 {
                return Err(Error::InvalidParameter("block exponent too large".into()));
            }
            Ok(Box::new(BlockLookaheadPolicy { r: *r }))
        }
        StrategySpec::MeanOptimalExact => {
            let hmm = require_finite(spec, model)?;
            require_state_only(loss)?;
            Ok(Box::new(MeanOptimalExactPolicy {
                hmm,
                loss: loss.clone(),
                belief: None,
                consumed: 0,
            }))
        }
        StrategySpec::MeanOptimalParticle { particles } => {
            let hmm = require_finite(spec, model)?;
            require_state_only(loss)?;
            if *particles == 0 {
                return Err(Error::InvalidParameter("particle count must be >= 1".into()));
            }
            Ok(Box::new(MeanOptimalParticlePolicy {
                model: model.clone(),
                d: hmm.num_states(),
                loss: loss.clone(),
                particles: *particles,
                ensemble: None,
                consumed: 0,
                rng: strategy_rng(master_seed, seed_index),
            }))
        }
        StrategySpec::FrozenWindow { schedule } => {
            make_frozen_window(loss, model, schedule).map(|p| Box::new(p) as Box<dyn Policy>)
        }
    }
}

/// Builds the frozen-window strategy for a finite-state model.
pub fn make_frozen_window(
    loss: &Loss,
    model: &ProcessModel,
    schedule: &[u64],
) -> Result<FrozenWindowPolicy> {
    if schedule.is_empty() {
        return Err(Error::InvalidSchedule("schedule is empty".into()));
    }
    if schedule[0] < 1 {
        return Err(Error::InvalidSchedule("first window must be >= 1".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule("schedule must be strictly increasing".into()));
    }
    let hmm = model.finite_hmm()?.clone();
    require_state_only(loss)?;
    Ok(FrozenWindowPolicy { hmm, loss: loss.clone(), schedule: schedule.to_vec() })
}

fn require_finite(spec: &StrategySpec, model: &ProcessModel) -> Result<FiniteHmm> {
    model.finite_hmm().cloned().map_err(|_| Error::StrategyUnsupported {
        strategy: spec.name(),
        model: model.name(),
        reason: "needs a finite hidden-state representation".into(),
    })
}

fn require_state_only(loss: &Loss) -> Result<()> {
    if loss.is_state_only() {
        Ok(())
    } else {
        Err(Error::StateOnlyRequired { loss: loss.name() })
    }
}

fn check_prefix(k: usize, ys: &[u32]) -> Result<()> {
    if ys.len() != k + 1 {
        return Err(Error::InvalidParameter(format!(
            "decide at time {k} needs the prefix y_0..y_{k} ({} symbols given)",
            ys.len()
        )));
    }
    Ok(())
}

struct ConstantPolicy {
    value: Decision,
}

impl Policy for ConstantPolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        Ok(self.value.clone())
    }
}

struct AlternatingPolicy;

impl Policy for AlternatingPolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        Ok(Decision::Scalar((k % 2) as f64))
    }
}

struct ParityPolicy {
    /// Parity of y_1 + .. + y_upto.
    upto: usize,
    parity: u32,
}

impl Policy for ParityPolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        if k == 0 {
            return Ok(Decision::Scalar(0.0));
        }
        let target = k - 1;
        if target < self.upto {
            self.upto = 0;
            self.parity = 0;
        }
        for j in self.upto + 1..=target {
            self.parity ^= ys[j] & 1;
        }
        self.upto = target;
        Ok(Decision::Scalar(self.parity as f64))
    }
}

struct DelayShiftPolicy {
    shift: i64,
}

impl Policy for DelayShiftPolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        Ok(Decision::Offset(k as i64 + self.shift))
    }
}

struct BlockLookaheadPolicy {
    r: u32,
}

impl Policy for BlockLookaheadPolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        // Block n holds 2^n <= k < 2^(n+1); all decisions in a block point
        // at the same future index 2^(r+n+1).
        let n = if k == 0 { 0 } else { 63 - (k as u64).leading_zeros() };
        let target = 1i64 << (self.r + n + 1);
        Ok(Decision::Offset(target - k as i64))
    }
}

struct MeanOptimalExactPolicy {
    hmm: FiniteHmm,
    loss: Loss,
    belief: Option<Belief>,
    consumed: usize,
}

impl MeanOptimalExactPolicy {
    fn advance(&mut self, ys: &[u32]) -> Result<&Belief> {
        if ys.len() < self.consumed {
            self.belief = None;
            self.consumed = 0;
        }
        if self.belief.is_none() {
            self.belief = Some(Belief::new(self.hmm.stationary().to_vec())?);
        }
        let mut belief = self.belief.take().expect("belief initialized");
        for &y in &ys[self.consumed..] {
            belief = filter_update(&self.hmm, &belief, y)
                .map_err(|e| step_error(e, self.consumed))?;
            self.consumed += 1;
        }
        self.belief = Some(belief);
        Ok(self.belief.as_ref().expect("belief set"))
    }
}

impl Policy for MeanOptimalExactPolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        let loss = self.loss.clone();
        let belief = self.advance(ys)?;
        mean_optimal_decision(belief, &loss)
    }
}

fn step_error(e: Error, step: usize) -> Error {
    match e {
        Error::DegenerateObservation { .. } => Error::DegenerateObservation { step },
        Error::ParticleDegeneracy { .. } => Error::ParticleDegeneracy { step },
        other => other,
    }
}

struct MeanOptimalParticlePolicy {
    model: ProcessModel,
    d: usize,
    loss: Loss,
    particles: usize,
    ensemble: Option<ParticleEnsemble>,
    consumed: usize,
    rng: ChaCha8Rng,
}

impl Policy for MeanOptimalParticlePolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        if ys.len() < self.consumed {
            return Err(Error::InvalidParameter(
                "particle strategy cannot rewind its observation stream".into(),
            ));
        }
        if self.ensemble.is_none() {
            self.ensemble =
                Some(ParticleEnsemble::from_stationary(&self.model, self.particles, &mut self.rng)?);
        }
        let mut ens = self.ensemble.take().expect("ensemble initialized");
        for &y in &ys[self.consumed..] {
            ens = particle_update(&self.model, &ens, y, &mut self.rng)
                .map_err(|e| step_error(e, self.consumed))?;
            self.consumed += 1;
        }
        // Argmin of the empirical-measure expected loss, via per-state
        // occupancy (exactly the particle average for finite states).
        let occupancy = ens.occupancy(self.d);
        self.ensemble = Some(ens);
        let belief = Belief::new(occupancy)?;
        mean_optimal_decision(&belief, &self.loss)
    }
}

/// Frozen-window rule: restart the exact filter from the stationary prior
/// on the active window and take the argmin decision.
pub struct FrozenWindowPolicy {
    hmm: FiniteHmm,
    loss: Loss,
    schedule: Vec<u64>,
}

impl FrozenWindowPolicy {
    /// Largest scheduled window not exceeding k; the full prefix before the
    /// first scheduled time.
    fn active_window(&self, k: usize) -> usize {
        let mut active = k as u64;
        for &kn in &self.schedule {
            if kn <= k as u64 {
                active = kn;
            } else {
                break;
            }
        }
        active as usize
    }
}

impl Policy for FrozenWindowPolicy {
    fn decide(&mut self, k: usize, ys: &[u32]) -> Result<Decision> {
        check_prefix(k, ys)?;
        let w = self.active_window(k);
        let mut belief = Belief::new(self.hmm.stationary().to_vec())?;
        for (off, &y) in ys[k - w..=k].iter().enumerate() {
            belief = filter_update(&self.hmm, &belief, y)
                .map_err(|e| step_error(e, k - w + off))?;
        }
        mean_optimal_decision(&belief, &self.loss)
    }
}

/// Convenience: the full decision sequence of a policy over a prefix.
pub fn decisions_on_prefix(policy: &mut dyn Policy, ys: &[u32]) -> Result<Vec<Decision>> {
    (1..ys.len()).map(|k| policy.decide(k, &ys[..=k])).collect()
}
