//! Exact nonlinear filter, bootstrap particle filter, and the
//! forward-backward joint smoother used by the mixing diagnostics.
//!
//! The exact filter tracks the conditional law of the hidden state given the
//! observations seen so far:
//!
//! ```text
//! p'(x') ∝ Phi(x', y) * sum_x P(x, x') p(x)
//! ```
//!
//! Starting the fold from the stationary law makes the first update correct
//! as well, since pi P = pi.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::processes::{FiniteHmm, ModelSpec, ProcessModel};
use crate::rng::sample_categorical;

/// Probability vectors must renormalize within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Compensated summation; naive accumulation over 1e5 particle weights
/// already drifts past SIMPLEX_TOL.
fn kahan_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Probability vector over the hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidBelief("empty vector".into()));
        }
        let mut sum = 0.0;
        for &v in &p {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidBelief(format!("component {v}")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidBelief(format!("sum {sum}")));
        }
        Ok(Belief(p))
    }

    /// Point mass on one state.
    pub fn point_mass(d: usize, state: usize) -> Self {
        let mut p = vec![0.0; d];
        p[state] = 1.0;
        Belief(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total variation distance, (1/2) sum |p - q|.
    pub fn tv_distance(&self, other: &Belief) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// One step of the recursive Bayes update: predict through the transition
/// kernel, then reweight by the observation likelihood.
pub fn filter_update(model: &FiniteHmm, belief: &Belief, y: u32) -> Result<Belief> {
    model.check_symbol(y)?;
    let d = model.num_states();
    if belief.dim() != d {
        return Err(Error::InvalidBelief(format!(
            "dimension {} for a {d}-state model",
            belief.dim()
        )));
    }
    let mut predicted = vec![0.0; d];
    for (x, &p) in belief.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let row = model.transition().row(x);
        for (xp, &t) in row.iter().enumerate() {
            predicted[xp] += p * t;
        }
    }
    let mut sum = 0.0;
    for (xp, v) in predicted.iter_mut().enumerate() {
        *v *= model.emit_prob(xp, y);
        sum += *v;
    }
    if sum <= 0.0 {
        return Err(Error::DegenerateObservation { step: 0 });
    }
    for v in predicted.iter_mut() {
        *v /= sum;
    }
    Belief::new(predicted)
}

/// Folds [`filter_update`] over an observation prefix, starting from the
/// stationary prior. Returns the filter at every time 0..=k.
pub fn run_filter(model: &FiniteHmm, ys: &[u32]) -> Result<Vec<Belief>> {
    let mut out = Vec::with_capacity(ys.len());
    let mut belief = Belief::new(model.stationary().to_vec())?;
    for (step, &y) in ys.iter().enumerate() {
        belief = filter_update(model, &belief, y)
            .map_err(|e| attach_step(e, step))?;
        out.push(belief.clone());
    }
    Ok(out)
}

fn attach_step(e: Error, step: usize) -> Error {
    match e {
        Error::DegenerateObservation { .. } => Error::DegenerateObservation { step },
        Error::ParticleDegeneracy { .. } => Error::ParticleDegeneracy { step },
        other => other,
    }
}

/// Weighted particle approximation of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    states: Vec<u64>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(states: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(Error::InvalidParameter(
                "ensemble needs matching, nonempty states and weights".into(),
            ));
        }
        let sum = kahan_sum(&weights);
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite())
            || (sum - 1.0).abs() > SIMPLEX_TOL
        {
            return Err(Error::InvalidParameter(format!(
                "weights must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        Ok(ParticleEnsemble { states, weights })
    }

    /// N i.i.d. draws from the model's stationary law, uniform weights.
    pub fn from_stationary<R: Rng>(model: &ProcessModel, n: usize, rng: &mut R) -> Result<Self> {
        let hmm = model.finite_hmm();
        let states: Vec<u64> = match (&model.spec(), hmm) {
            (_, Ok(h)) => (0..n)
                .map(|_| sample_categorical(rng, h.stationary()) as u64)
                .collect(),
            (ModelSpec::BinaryExpansion { depth, .. }, _)
            | (ModelSpec::DoublingMap { depth }, _) => {
                let mask = (1u64 << depth) - 1;
                (0..n).map(|_| rng.random::<u64>() & mask).collect()
            }
            _ => return Err(Error::NoFiniteRepresentation(model.name())),
        };
        let w = 1.0 / n as f64;
        ParticleEnsemble::new(states, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Occupancy of each of `d` states (weights accumulated per state index).
    pub fn occupancy(&self, d: usize) -> Vec<f64> {
        let mut occ = vec![0.0; d];
        for (&s, &w) in self.states.iter().zip(self.weights.iter()) {
            occ[s as usize] += w;
        }
        occ
    }

    /// TV distance between the ensemble occupancy and an exact belief.
    pub fn tv_to_belief(&self, belief: &Belief) -> f64 {
        let occ = self.occupancy(belief.dim());
        0.5 * occ
            .iter()
            .zip(belief.probs().iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Systematic resampling: N points at stride 1/N through the weight CDF.
/// Preserves expected occupancy and is the lowest-variance standard scheme.
pub fn systematic_resample<R: Rng>(
    states: &[u64],
    weights: &[f64],
    rng: &mut R,
) -> Vec<u64> {
    let n = states.len();
    let mut out = Vec::with_capacity(n);
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut cum = 0.0;
    let mut i = 0usize;
    for j in 0..n {
        let target = u0 + j as f64 / n as f64;
        while cum + weights[i] < target && i + 1 < n {
            cum += weights[i];
            i += 1;
        }
        out.push(states[i]);
    }
    out
}

/// One bootstrap step: propagate every particle through the transition
/// kernel, weight by the observation likelihood, and systematic-resample
/// back to uniform weights.
pub fn particle_update<R: Rng>(
    model: &ProcessModel,
    ensemble: &ParticleEnsemble,
    y: u32,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let n = ensemble.len();
    let mut states = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    match (model.spec(), model.finite_hmm()) {
        (_, Ok(hmm)) => {
            hmm.check_symbol(y)?;
            for (&s, &w) in ensemble.states.iter().zip(ensemble.weights.iter()) {
                let next = sample_categorical(rng, hmm.transition().row(s as usize));
                states.push(next as u64);
                weights.push(w * hmm.emit_prob(next, y));
            }
        }
        (ModelSpec::BinaryExpansion { depth, .. }, _) => {
            // Fresh bit enters at the top of the word; observations carry
            // no information for the dyadic models.
            let b = *depth;
            for (&s, &w) in ensemble.states.iter().zip(ensemble.weights.iter()) {
                let fresh = (rng.random::<u64>() & 1) << (b - 1);
                states.push((s >> 1) | fresh);
                weights.push(w);
            }
        }
        (ModelSpec::DoublingMap { depth }, _) => {
            let mask = (1u64 << depth) - 1;
            for (&s, &w) in ensemble.states.iter().zip(ensemble.weights.iter()) {
                states.push(((s << 1) & mask) | (rng.random::<u64>() & 1));
                weights.push(w);
            }
        }
        _ => return Err(Error::NoFiniteRepresentation(model.name())),
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ParticleDegeneracy { step: 0 });
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    let resampled = systematic_resample(&states, &weights, rng);
    let w = 1.0 / n as f64;
    ParticleEnsemble::new(resampled, vec![w; n])
}

/// [`particle_update`] driven by a dedicated seed, for callers that key each
/// step rather than hold an Rng.
pub fn particle_update_with_seed(
    model: &ProcessModel,
    ensemble: &ParticleEnsemble,
    y: u32,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    particle_update(model, ensemble, y, &mut rng)
}

/// Joint conditional law of two hidden states given a finite observation
/// window, computed by forward-backward recursion.
#[derive(Debug, Clone)]
pub struct WindowSmoother {
    /// Normalized filter at each window position (forward pass).
    filters: Vec<Belief>,
    /// suffix[a](i, j) ∝ P(X_end = j, later observations | X_a = i),
    /// rescaled per position; scales cancel in the joint law.
    suffix: Vec<Vec<f64>>,
    d: usize,
}

impl WindowSmoother {
    /// Runs both passes over a window of observations (positions
    /// 0..=W standing for times -W..=0), starting from the stationary law.
    pub fn new(model: &FiniteHmm, window: &[u32]) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::DegenerateWindow);
        }
        let d = model.num_states();
        let filters = run_filter(model, window).map_err(|e| match e {
            Error::DegenerateObservation { .. } => Error::DegenerateWindow,
            other => other,
        })?;
        let w = window.len() - 1;
        // suffix[W] = I; suffix[a-1] = (P diag g_a) suffix[a].
        let mut suffix = vec![vec![0.0; d * d]; w + 1];
        for i in 0..d {
            suffix[w][i * d + i] = 1.0;
        }
        for a in (1..=w).rev() {
            let g: Vec<f64> = (0..d).map(|x| model.emit_prob(x, window[a])).collect();
            let mut m = vec![0.0; d * d];
            let mut max = 0.0_f64;
            for i in 0..d {
                let row = model.transition().row(i);
                for j in 0..d {
                    let mut acc = 0.0;
                    for mid in 0..d {
                        acc += row[mid] * g[mid] * suffix[a][mid * d + j];
                    }
                    m[i * d + j] = acc;
                    max = max.max(acc);
                }
            }
            if max <= 0.0 {
                return Err(Error::DegenerateWindow);
            }
            for v in m.iter_mut() {
                *v /= max;
            }
            suffix[a - 1] = m;
        }
        Ok(WindowSmoother { filters, suffix, d })
    }

    pub fn window_len(&self) -> usize {
        self.filters.len()
    }

    /// Filter at window position `a` (time a - W).
    pub fn filter_at(&self, a: usize) -> &Belief {
        &self.filters[a]
    }

    /// Joint law of (X_{-lag}, X_0) given the whole window, as a row-major
    /// d x d matrix summing to 1.
    pub fn joint_with_end(&self, lag: usize) -> Result<Vec<f64>> {
        let w = self.window_len() - 1;
        if lag > w {
            return Err(Error::LagExceedsWindow { lag, window: w });
        }
        let a = w - lag;
        let alpha = self.filters[a].probs();
        let s = &self.suffix[a];
        let d = self.d;
        let mut joint = vec![0.0; d * d];
        let mut sum = 0.0;
        for i in 0..d {
            for j in 0..d {
                let v = alpha[i] * s[i * d + j];
                joint[i * d + j] = v;
                sum += v;
            }
        }
        if sum <= 0.0 {
            return Err(Error::DegenerateWindow);
        }
        for v in joint.iter_mut() {
            *v /= sum;
        }
        Ok(joint)
    }
}

/// Joint conditional law of (X_{-lag}, X_0) given observations over a
/// window y_{-W..0} (passed in time order).
pub fn joint_smoother(model: &FiniteHmm, window: &[u32], lag: usize) -> Result<Vec<f64>> {
    WindowSmoother::new(model, window)?.joint_with_end(lag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::build_model;
    use approx::assert_abs_diff_eq;

    fn blind_two_state() -> FiniteHmm {
        FiniteHmm::new(
            &[vec![0.6, 0.4], vec![0.3, 0.7]],
            &[vec![1.0], vec![1.0]],
        )
        .unwrap()
    }

    fn noisy_two_state() -> FiniteHmm {
        FiniteHmm::new(
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![0.8, 0.2], vec![0.2, 0.8]],
        )
        .unwrap()
    }

    #[test]
    fn noninformative_update_is_prediction_only() {
        let hmm = blind_two_state();
        let b = Belief::new(vec![0.9, 0.1]).unwrap();
        let next = filter_update(&hmm, &b, 0).unwrap();
        // belief * P directly.
        assert_abs_diff_eq!(next.probs()[0], 0.9 * 0.6 + 0.1 * 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(next.probs()[1], 0.9 * 0.4 + 0.1 * 0.7, epsilon = 1e-15);
    }

    #[test]
    fn perfect_observation_collapses_to_point_mass() {
        let hmm = FiniteHmm::new(
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let b = Belief::new(vec![0.25, 0.75]).unwrap();
        let next = filter_update(&hmm, &b, 1).unwrap();
        assert_eq!(next.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn hand_computed_bayes_update() {
        // Uniform prior, uniform transition, 80% accurate channel, observe 0.
        let hmm = noisy_two_state();
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let next = filter_update(&hmm, &b, 0).unwrap();
        assert_abs_diff_eq!(next.probs()[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(next.probs()[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_observation_is_an_error() {
        let hmm = FiniteHmm::new(
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            &[vec![1.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        // Symbol 1 has zero likelihood from every state.
        match run_filter(&hmm, &[0, 1]) {
            Err(Error::DegenerateObservation { step: 1 }) => {}
            other => panic!("expected degenerate observation at step 1, got {other:?}"),
        }
    }

    #[test]
    fn run_filter_single_symbol() {
        let hmm = noisy_two_state();
        let beliefs = run_filter(&hmm, &[1]).unwrap();
        assert_eq!(beliefs.len(), 1);
        assert_abs_diff_eq!(beliefs[0].probs()[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn blind_filter_stays_stationary() {
        let hmm = blind_two_state();
        let pi = hmm.stationary().to_vec();
        let beliefs = run_filter(&hmm, &vec![0; 40]).unwrap();
        for b in beliefs {
            for (a, b) in b.probs().iter().zip(pi.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn run_filter_equals_stepwise_composition() {
        let hmm = FiniteHmm::new(
            &[
                vec![0.5, 0.3, 0.2],
                vec![0.1, 0.6, 0.3],
                vec![0.3, 0.2, 0.5],
            ],
            &[
                vec![0.7, 0.2, 0.1],
                vec![0.15, 0.7, 0.15],
                vec![0.1, 0.3, 0.6],
            ],
        )
        .unwrap();
        let model = build_model(&ModelSpec::FiniteHmm {
            transition: vec![
                vec![0.5, 0.3, 0.2],
                vec![0.1, 0.6, 0.3],
                vec![0.3, 0.2, 0.5],
            ],
            observation: vec![
                vec![0.7, 0.2, 0.1],
                vec![0.15, 0.7, 0.15],
                vec![0.1, 0.3, 0.6],
            ],
        })
        .unwrap();
        let path = crate::processes::sample_path(&model, 50, 5, 0);
        let folded = run_filter(&hmm, &path.y).unwrap();
        let mut belief = Belief::new(hmm.stationary().to_vec()).unwrap();
        for (k, &y) in path.y.iter().enumerate() {
            belief = filter_update(&hmm, &belief, y).unwrap();
            assert_eq!(folded[k], belief);
        }
    }

    #[test]
    fn beliefs_stay_on_the_simplex() {
        let hmm = FiniteHmm::new(
            &[vec![0.9, 0.1], vec![0.2, 0.8]],
            &[vec![0.95, 0.05], vec![0.1, 0.9]],
        )
        .unwrap();
        let model = build_model(&ModelSpec::FiniteHmm {
            transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            observation: vec![vec![0.95, 0.05], vec![0.1, 0.9]],
        })
        .unwrap();
        for seed in 0..10 {
            let path = crate::processes::sample_path(&model, 300, 21, seed);
            for b in run_filter(&hmm, &path.y).unwrap() {
                let sum: f64 = b.probs().iter().sum();
                assert!((sum - 1.0).abs() <= SIMPLEX_TOL);
                assert!(b.probs().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn particles_collapse_under_perfect_information() {
        // Deterministic cycle observed exactly: particles must agree with
        // the true state after one update.
        let spec = ModelSpec::FiniteHmm {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            observation: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let model = build_model(&spec).unwrap();
        let mut rng = crate::rng::strategy_rng(3, 0);
        let mut ens = ParticleEnsemble::from_stationary(&model, 64, &mut rng).unwrap();
        ens = particle_update(&model, &ens, 1, &mut rng).unwrap();
        assert!(ens.states().iter().all(|&s| s == 1));
        ens = particle_update(&model, &ens, 0, &mut rng).unwrap();
        assert!(ens.states().iter().all(|&s| s == 0));
    }

    #[test]
    fn particle_degeneracy_is_an_error() {
        let spec = ModelSpec::FiniteHmm {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            observation: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        };
        let model = build_model(&spec).unwrap();
        let mut rng = crate::rng::strategy_rng(3, 1);
        let ens = ParticleEnsemble::from_stationary(&model, 16, &mut rng).unwrap();
        match particle_update(&model, &ens, 1, &mut rng) {
            Err(Error::ParticleDegeneracy { .. }) => {}
            other => panic!("expected particle degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn resampling_is_unbiased() {
        // Expected occupancy after resampling equals the weights.
        let states = vec![0u64, 1, 2];
        let weights = vec![0.5, 0.3, 0.2];
        let n = states.len();
        let draws = 10_000usize;
        let mut rng = crate::rng::strategy_rng(9, 9);
        let mut counts = vec![0.0f64; 3];
        for _ in 0..draws {
            for s in systematic_resample(&states, &weights, &mut rng) {
                counts[s as usize] += 1.0;
            }
        }
        let total = (draws * n) as f64;
        for (i, &w) in weights.iter().enumerate() {
            let freq = counts[i] / total;
            // Bernoulli bound is conservative for the stratified scheme.
            let se = (w * (1.0 - w) / total).sqrt();
            assert!(
                (freq - w).abs() <= 3.0 * se,
                "state {i}: occupancy {freq} vs weight {w}"
            );
        }
    }

    #[test]
    fn smoother_reduces_to_unconditional_joint_when_blind() {
        let hmm = blind_two_state();
        let pi = hmm.stationary().to_vec();
        let window = vec![0u32; 9];
        for lag in [0usize, 1, 3] {
            let joint = joint_smoother(&hmm, &window, lag).unwrap();
            // rows pi(i) * P^lag(i, .)
            let mut pk = vec![vec![0.0; 2]; 2];
            for i in 0..2 {
                pk[i][i] = 1.0;
            }
            for _ in 0..lag {
                let mut next = vec![vec![0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        for m in 0..2 {
                            next[i][j] += pk[i][m] * hmm.transition().get(m, j);
                        }
                    }
                }
                pk = next;
            }
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(joint[i * 2 + j], pi[i] * pk[i][j], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn smoother_point_mass_under_perfect_observations() {
        let hmm = FiniteHmm::new(
            &[vec![0.3, 0.7], vec![0.6, 0.4]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let window = vec![0u32, 1, 1, 0];
        let joint = joint_smoother(&hmm, &window, 2).unwrap();
        // X_{-2} = 1 (third-from-last symbol), X_0 = 0.
        assert_abs_diff_eq!(joint[1 * 2 + 0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn smoother_matches_path_enumeration() {
        // Exhaustive oracle: sum over all hidden windows.
        let hmm = noisy_two_state();
        let window = vec![0u32, 1, 0];
        let w = window.len() - 1;
        let lag = 1usize;
        let d = 2usize;
        let mut oracle = vec![0.0; d * d];
        let mut z = 0.0;
        for code in 0..d.pow(w as u32 + 1) {
            let states: Vec<usize> = (0..=w).map(|t| (code / d.pow(t as u32)) % d).collect();
            let mut p = hmm.stationary()[states[0]] * hmm.emit_prob(states[0], window[0]);
            for t in 1..=w {
                p *= hmm.transition().get(states[t - 1], states[t])
                    * hmm.emit_prob(states[t], window[t]);
            }
            oracle[states[w - lag] * d + states[w]] += p;
            z += p;
        }
        for v in oracle.iter_mut() {
            *v /= z;
        }
        let joint = joint_smoother(&hmm, &window, lag).unwrap();
        for (a, b) in joint.iter().zip(oracle.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn lag_beyond_window_is_an_error() {
        let hmm = noisy_two_state();
        assert!(matches!(
            joint_smoother(&hmm, &[0, 1], 5),
            Err(Error::LagExceedsWindow { .. })
        ));
    }
}
