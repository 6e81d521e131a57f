//! Loss-function catalog with declared coordinate windows and domination
//! bounds.
//!
//! Each loss evaluates a decision against a path coordinate. The window
//! (a, b) declares which time indices [k - a, k + b] an evaluation at time k
//! may touch; the domination bound is a finite constant Lambda with
//! |l(u, .)| <= Lambda over the whole decision grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::Belief;
use crate::processes::{decode_value, ModelSpec, Path, ProcessModel, ValueKind};

/// A decision: a scalar prediction, an integer offset, or portfolio weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decision {
    Offset(i64),
    Scalar(f64),
    Weights(Vec<f64>),
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Scalar(v) => write!(f, "{v}"),
            Decision::Offset(v) => write!(f, "{v}"),
            Decision::Weights(w) => {
                write!(f, "[")?;
                for (i, v) in w.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Coordinate extractor for state-valued losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", content = "table")]
pub enum Feature {
    /// The hidden value itself (state index, bit, pair code, or dyadic
    /// fraction depending on the model).
    Value,
    /// First component of a paired state (the older driving bit).
    PairFirst,
    /// Per-state lookup table.
    Table(Vec<f64>),
}

impl Feature {
    /// Value of the feature on a raw hidden code.
    fn on_code(&self, kind: ValueKind, code: u64) -> Result<f64> {
        match self {
            Feature::Value => Ok(decode_value(kind, code)),
            Feature::PairFirst => match kind {
                ValueKind::PairBits => Ok(((code >> 1) & 1) as f64),
                _ => Err(Error::LossModelMismatch {
                    loss: "pair_first feature".into(),
                    model: format!("{kind:?}"),
                }),
            },
            Feature::Table(t) => match kind {
                ValueKind::StateIndex | ValueKind::Bit | ValueKind::PairBits => t
                    .get(code as usize)
                    .copied()
                    .ok_or_else(|| Error::InvalidParameter(format!(
                        "feature table has {} entries, state {code} observed",
                        t.len()
                    ))),
                ValueKind::DyadicWord { .. } => Err(Error::LossModelMismatch {
                    loss: "table feature".into(),
                    model: "dyadic model".into(),
                }),
            },
        }
    }

    /// Value on a belief-indexed state of a finite model.
    fn on_state(&self, state: usize) -> f64 {
        match self {
            Feature::Value => state as f64,
            Feature::PairFirst => ((state >> 1) & 1) as f64,
            Feature::Table(t) => t[state],
        }
    }

    /// Range of feature values over `d` finite states.
    fn range(&self, d: usize) -> (f64, f64) {
        match self {
            Feature::Value => (0.0, (d - 1) as f64),
            Feature::PairFirst => (0.0, 1.0),
            Feature::Table(t) => t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
        }
    }
}

/// Serializable description of a loss function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// (u - f(x))^2 over a finite scalar grid.
    Quadratic { feature: Feature, grid: Vec<f64> },
    /// |u - f(x)|^p over a finite scalar grid.
    LpPrediction { feature: Feature, p: f64, grid: Vec<f64> },
    /// -log <u, returns(x)> with u on the simplex lattice of the given step
    /// count and one positive return vector per hidden state.
    LogPortfolio { returns: Vec<Vec<f64>>, steps: u32 },
    /// 1 unless u <= f(x) < u + eps.
    Interval { feature: Feature, eps: f64, grid: Vec<f64> },
    /// Driving bit at index k - u + 1, decisions u in 1..=max_offset.
    BitLoss { max_offset: i64 },
    /// Hidden bit at index k + u, decisions u in 0..=max_offset.
    LookaheadIndex { max_offset: i64 },
}

/// The decision grid of a loss.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Scalars(Vec<f64>),
    Offsets { min: i64, max: i64 },
    Simplex { points: Vec<Vec<f64>>, steps: u32 },
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Scalars(g) => g.len(),
            Grid::Offsets { min, max } => (max - min + 1) as usize,
            Grid::Simplex { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decision(&self, index: usize) -> Decision {
        match self {
            Grid::Scalars(g) => Decision::Scalar(g[index]),
            Grid::Offsets { min, .. } => Decision::Offset(min + index as i64),
            Grid::Simplex { points, .. } => Decision::Weights(points[index].clone()),
        }
    }

    pub fn contains(&self, u: &Decision) -> bool {
        match (self, u) {
            (Grid::Scalars(g), Decision::Scalar(v)) => g.iter().any(|&x| x == *v),
            (Grid::Offsets { min, max }, Decision::Offset(v)) => (*min..=*max).contains(v),
            (Grid::Simplex { points, steps }, Decision::Weights(w)) => {
                if w.is_empty() || points.first().map(|p| p.len()) != Some(w.len()) {
                    return false;
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || w.iter().any(|&v| v < 0.0) {
                    return false;
                }
                // On the lattice: every weight is a multiple of 1/steps.
                w.iter().all(|&v| {
                    let scaled = v * *steps as f64;
                    (scaled - scaled.round()).abs() <= 1e-9
                })
            }
            _ => false,
        }
    }
}

/// All lattice points {k/steps} on the (d-1)-simplex.
pub fn simplex_lattice(d: usize, steps: u32) -> Vec<Vec<f64>> {
    fn rec(d: usize, left: u32, steps: u32, prefix: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if d == 1 {
            let mut p = prefix.clone();
            p.push(left as f64 / steps as f64);
            out.push(p);
            return;
        }
        for k in 0..=left {
            prefix.push(k as f64 / steps as f64);
            rec(d - 1, left - k, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Evenly spaced scalar grid with `n` points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

/// A validated loss with its derived decision grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Loss {
    spec: LossSpec,
    grid: Grid,
}

impl Loss {
    pub fn build(spec: LossSpec) -> Result<Self> {
        let grid = match &spec {
            LossSpec::Quadratic { grid, .. }
            | LossSpec::LpPrediction { grid, .. }
            | LossSpec::Interval { grid, .. } => Grid::Scalars(grid.clone()),
            LossSpec::LogPortfolio { returns, steps } => {
                if *steps == 0 {
                    return Err(Error::InvalidParameter("simplex steps must be >= 1".into()));
                }
                let d = returns.first().map(|r| r.len()).unwrap_or(0);
                if d == 0 {
                    return Err(Error::InvalidParameter("empty returns table".into()));
                }
                for (s, row) in returns.iter().enumerate() {
                    if row.len() != d {
                        return Err(Error::InvalidParameter(format!(
                            "returns row {s} has {} assets, expected {d}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "returns row {s} must be strictly positive"
                        )));
                    }
                }
                Grid::Simplex { points: simplex_lattice(d, *steps), steps: *steps }
            }
            LossSpec::BitLoss { max_offset } => {
                if *max_offset < 1 {
                    return Err(Error::InvalidParameter("bit loss needs max_offset >= 1".into()));
                }
                Grid::Offsets { min: 1, max: *max_offset }
            }
            LossSpec::LookaheadIndex { max_offset } => {
                if *max_offset < 0 {
                    return Err(Error::InvalidParameter(
                        "lookahead loss needs max_offset >= 0".into(),
                    ));
                }
                Grid::Offsets { min: 0, max: *max_offset }
            }
        };
        match &spec {
            LossSpec::LpPrediction { p, .. } if *p < 1.0 => {
                return Err(Error::InvalidParameter("exponent p must be >= 1".into()));
            }
            LossSpec::Interval { eps, .. } if *eps <= 0.0 => {
                return Err(Error::InvalidParameter("interval eps must be > 0".into()));
            }
            _ => {}
        }
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(Loss { spec, grid })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn name(&self) -> String {
        match &self.spec {
            LossSpec::Quadratic { .. } => "quadratic".into(),
            LossSpec::LpPrediction { p, .. } => format!("lp({p})"),
            LossSpec::LogPortfolio { .. } => "log-portfolio".into(),
            LossSpec::Interval { eps, .. } => format!("interval({eps})"),
            LossSpec::BitLoss { .. } => "bit".into(),
            LossSpec::LookaheadIndex { .. } => "lookahead-index".into(),
        }
    }

    /// Declared coordinate window (past offset, future offset).
    pub fn window(&self) -> (i64, i64) {
        match &self.spec {
            LossSpec::Quadratic { .. }
            | LossSpec::LpPrediction { .. }
            | LossSpec::LogPortfolio { .. }
            | LossSpec::Interval { .. } => (0, 0),
            LossSpec::BitLoss { max_offset } => (max_offset - 1, 0),
            LossSpec::LookaheadIndex { max_offset } => (0, *max_offset),
        }
    }

    /// Extra path length beyond the scored horizon that evaluation needs.
    pub fn future_reach(&self) -> usize {
        self.window().1.max(0) as usize
    }

    /// Whether the loss reads only the hidden state at the evaluation time.
    pub fn is_state_only(&self) -> bool {
        matches!(
            self.spec,
            LossSpec::Quadratic { .. }
                | LossSpec::LpPrediction { .. }
                | LossSpec::LogPortfolio { .. }
                | LossSpec::Interval { .. }
        )
    }

    /// Compatibility check against a model, done once before evaluation.
    pub fn validate_for(&self, model: &ProcessModel) -> Result<()> {
        let mismatch = |why: &str| Error::LossModelMismatch {
            loss: format!("{} ({why})", self.name()),
            model: model.name(),
        };
        match &self.spec {
            LossSpec::Quadratic { feature, .. }
            | LossSpec::LpPrediction { feature, .. }
            | LossSpec::Interval { feature, .. } => {
                match feature {
                    Feature::PairFirst if model.value_kind() != ValueKind::PairBits => {
                        return Err(mismatch("pair feature needs a paired state"));
                    }
                    Feature::Table(t) => {
                        let d = model.finite_hmm()?.num_states();
                        if t.len() != d {
                            return Err(mismatch("table length must match state count"));
                        }
                    }
                    _ => {}
                }
                Ok(())
            }
            LossSpec::LogPortfolio { returns, .. } => {
                let d = model.finite_hmm()?.num_states();
                if returns.len() != d {
                    return Err(mismatch("one returns row per hidden state"));
                }
                Ok(())
            }
            LossSpec::BitLoss { .. } => match model.spec() {
                ModelSpec::BinaryExpansion { .. } => Ok(()),
                _ => Err(mismatch("reads the dyadic driving-bit record")),
            },
            LossSpec::LookaheadIndex { .. } => match model.value_kind() {
                ValueKind::Bit => Ok(()),
                _ => Err(mismatch("reads future 0/1 hidden values")),
            },
        }
    }

    /// Finite constant dominating |l(u, .)| over the grid on this model.
    pub fn domination_bound(&self, model: &ProcessModel) -> f64 {
        let value_range = |feature: &Feature| -> (f64, f64) {
            match model.value_kind() {
                ValueKind::Bit => feature.range(2),
                ValueKind::PairBits => feature.range(4),
                ValueKind::StateIndex => {
                    feature.range(model.finite_hmm().map(|h| h.num_states()).unwrap_or(1))
                }
                ValueKind::DyadicWord { .. } => (0.0, 1.0),
            }
        };
        let scalar_sup = |grid: &Grid, f: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64| -> f64 {
            match grid {
                Grid::Scalars(g) => g
                    .iter()
                    .map(|&u| f(u, lo).max(f(u, hi)))
                    .fold(0.0_f64, f64::max),
                _ => 0.0,
            }
        };
        match &self.spec {
            LossSpec::Quadratic { feature, .. } => {
                let (lo, hi) = value_range(feature);
                scalar_sup(&self.grid, &|u, v| (u - v) * (u - v), lo, hi)
            }
            LossSpec::LpPrediction { feature, p, .. } => {
                let (lo, hi) = value_range(feature);
                scalar_sup(&self.grid, &|u, v| (u - v).abs().powf(*p), lo, hi)
            }
            LossSpec::LogPortfolio { returns, .. } => {
                let mut lambda = 0.0_f64;
                if let Grid::Simplex { points, .. } = &self.grid {
                    for u in points {
                        for row in returns {
                            let dot: f64 = u.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                            lambda = lambda.max(dot.ln().abs());
                        }
                    }
                }
                lambda
            }
            LossSpec::Interval { .. } | LossSpec::BitLoss { .. } | LossSpec::LookaheadIndex { .. } => 1.0,
        }
    }

    fn require_in_grid(&self, u: &Decision) -> Result<()> {
        if self.grid.contains(u) {
            Ok(())
        } else {
            Err(Error::DecisionOutsideGrid(format!("{u} for {}", self.name())))
        }
    }

    /// Loss of decision `u` on a finite-model state index. Only defined for
    /// state-only losses; belief expectations and the mixing diagnostics go
    /// through this.
    pub fn eval_on_state(&self, u: &Decision, state: usize) -> Result<f64> {
        self.require_in_grid(u)?;
        match (&self.spec, u) {
            (LossSpec::Quadratic { feature, .. }, Decision::Scalar(v)) => {
                let f = feature.on_state(state);
                Ok((v - f) * (v - f))
            }
            (LossSpec::LpPrediction { feature, p, .. }, Decision::Scalar(v)) => {
                Ok((v - feature.on_state(state)).abs().powf(*p))
            }
            (LossSpec::LogPortfolio { returns, .. }, Decision::Weights(w)) => {
                let dot: f64 = w.iter().zip(returns[state].iter()).map(|(a, b)| a * b).sum();
                Ok(-dot.ln())
            }
            (LossSpec::Interval { feature, eps, .. }, Decision::Scalar(v)) => {
                let f = feature.on_state(state);
                Ok(if *v <= f && f < *v + *eps { 0.0 } else { 1.0 })
            }
            _ => Err(Error::StateOnlyRequired { loss: self.name() }),
        }
    }
}

/// Evaluates l(u, path, k): the loss of decision `u` at time `k`.
pub fn eval_loss(loss: &Loss, u: &Decision, path: &Path, k: usize) -> Result<f64> {
    loss.require_in_grid(u)?;
    if k >= path.x.len() {
        return Err(Error::WindowOutOfRange { k: k as i64, index: k as i64 });
    }
    match (loss.spec(), u) {
        (LossSpec::Quadratic { feature, .. }, Decision::Scalar(v)) => {
            let f = feature.on_code(path.kind, path.x[k])?;
            Ok((v - f) * (v - f))
        }
        (LossSpec::LpPrediction { feature, p, .. }, Decision::Scalar(v)) => {
            Ok((v - feature.on_code(path.kind, path.x[k])?).abs().powf(*p))
        }
        (LossSpec::LogPortfolio { returns, .. }, Decision::Weights(w)) => {
            if path.kind != ValueKind::StateIndex {
                return Err(Error::LossModelMismatch {
                    loss: loss.name(),
                    model: format!("{:?}", path.kind),
                });
            }
            let state = path.x[k] as usize;
            let row = returns.get(state).ok_or_else(|| {
                Error::InvalidParameter(format!("no returns row for state {state}"))
            })?;
            let dot: f64 = w.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            Ok(-dot.ln())
        }
        (LossSpec::Interval { feature, eps, .. }, Decision::Scalar(v)) => {
            let f = feature.on_code(path.kind, path.x[k])?;
            Ok(if *v <= f && f < *v + *eps { 0.0 } else { 1.0 })
        }
        (LossSpec::BitLoss { .. }, Decision::Offset(u)) => {
            let record = path.noise.as_ref().ok_or_else(|| Error::LossModelMismatch {
                loss: loss.name(),
                model: "path without driving-bit record".into(),
            })?;
            let index = k as i64 - u + 1;
            record
                .bit(index)
                .map(|b| b as f64)
                .ok_or(Error::WindowOutOfRange { k: k as i64, index })
        }
        (LossSpec::LookaheadIndex { .. }, Decision::Offset(u)) => {
            let index = k as i64 + u;
            if index < 0 || index as usize >= path.x.len() {
                return Err(Error::WindowOutOfRange { k: k as i64, index });
            }
            Ok(path.x[index as usize] as f64)
        }
        _ => Err(Error::DecisionOutsideGrid(format!(
            "decision {u} has the wrong shape for {}",
            loss.name()
        ))),
    }
}

/// sum_x belief(x) l(u, x) for a state-only loss.
pub fn expected_loss_under_belief(loss: &Loss, u: &Decision, belief: &Belief) -> Result<f64> {
    if !loss.is_state_only() {
        return Err(Error::StateOnlyRequired { loss: loss.name() });
    }
    let mut acc = 0.0;
    for (state, &p) in belief.probs().iter().enumerate() {
        if p > 0.0 {
            acc += p * loss.eval_on_state(u, state)?;
        }
    }
    Ok(acc)
}
