//! Continuous-time Markov environment.
//!
//! A chain is given by per-state jump rates `λ_i` and a jump distribution
//! `Q(i, j)`. Self-jumps (`Q(i, i) > 0`) are pulses: they leave the
//! environment state unchanged but still trigger a shock on the quantum
//! system. The marginal generator `q(i, j) = λ_i Q(i, j) − λ_i δ_ij` therefore
//! never sees them.

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::real_matrix_exp;
use crate::tolerances;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentChain {
    rates: Vec<f64>,
    jumps: DMatrix<f64>,
}

/// Validates rates and jump distribution. States with `λ_i = 0` are
/// absorbing and their `Q` row is ignored (stored as zeros).
pub fn build_chain(rates: &[f64], jumps: &DMatrix<f64>) -> Result<EnvironmentChain> {
    let k = rates.len();
    if k == 0 {
        return Err(Error::InvalidChain("at least one state is required".into()));
    }
    if jumps.nrows() != k || jumps.ncols() != k {
        return Err(Error::InvalidChain(format!(
            "{k} rates need a {k}x{k} jump matrix, got {}x{}",
            jumps.nrows(),
            jumps.ncols()
        )));
    }
    let mut stored = jumps.clone();
    for (i, &rate) in rates.iter().enumerate() {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::InvalidChain(format!("rate[{i}] = {rate} must be finite and non-negative")));
        }
        if let Some(j) = jumps.row(i).iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidChain(format!("Q[{i}][{j}] is not finite")));
        }
        if rate == 0.0 {
            stored.row_mut(i).fill(0.0);
            continue;
        }
        if let Some(j) = jumps.row(i).iter().position(|&x| x < 0.0) {
            return Err(Error::InvalidChain(format!("Q[{i}][{j}] = {} is negative", jumps[(i, j)])));
        }
        let sum: f64 = jumps.row(i).sum();
        if (sum - 1.0).abs() > tolerances::ROW_SUM {
            return Err(Error::InvalidChain(format!("row {i} of Q sums to {sum}, not 1")));
        }
    }
    Ok(EnvironmentChain { rates: rates.to_vec(), jumps: stored })
}

impl EnvironmentChain {
    pub fn new(rates: &[f64], jumps: &DMatrix<f64>) -> Result<Self> {
        build_chain(rates, jumps)
    }

    /// Single state pulsing at `rate` (a Poisson process of shocks).
    pub fn pulse_process(rate: f64) -> Result<Self> {
        build_chain(&[rate], &DMatrix::from_element(1, 1, 1.0))
    }

    pub fn states(&self) -> usize {
        self.rates.len()
    }

    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn jump_probability(&self, from: usize, to: usize) -> f64 {
        self.jumps[(from, to)]
    }

    pub fn jump_distribution(&self) -> &DMatrix<f64> {
        &self.jumps
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.rates[i] == 0.0
    }

    /// Marginal rate matrix of the environment state; self-jumps cancel on
    /// the diagonal so every row sums to zero.
    pub fn generator(&self) -> DMatrix<f64> {
        let k = self.states();
        let mut q = DMatrix::zeros(k, k);
        for i in 0..k {
            let mut off = 0.0;
            for j in (0..k).filter(|&j| j != i) {
                q[(i, j)] = self.rates[i] * self.jumps[(i, j)];
                off += q[(i, j)];
            }
            q[(i, i)] = -off;
        }
        q
    }

    fn check_state(&self, i: usize) -> Result<()> {
        if i < self.states() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("state {i} out of range for {} states", self.states())))
        }
    }
}

/// One pulse of the environment at `time`, taking it from `from` to `to`
/// (possibly equal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// Right-continuous environment path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvTrajectory {
    initial_state: usize,
    horizon: f64,
    events: Vec<JumpEvent>,
}

impl EnvTrajectory {
    /// Builds a path from `(time, post-jump state)` pairs.
    pub fn new(states: usize, initial_state: usize, horizon: f64, jumps: &[(f64, usize)]) -> Result<Self> {
        if initial_state >= states {
            return Err(Error::InvalidArgument(format!("initial state {initial_state} out of range")));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be finite and non-negative")));
        }
        let mut events = Vec::with_capacity(jumps.len());
        let mut prev_time = 0.0;
        let mut state = initial_state;
        for &(time, to) in jumps {
            if !(time > prev_time && time <= horizon) {
                return Err(Error::InvalidArgument(format!(
                    "event time {time} must be strictly increasing within (0, {horizon}]"
                )));
            }
            if to >= states {
                return Err(Error::InvalidArgument(format!("event state {to} out of range")));
            }
            events.push(JumpEvent { time, from: state, to });
            prev_time = time;
            state = to;
        }
        Ok(Self { initial_state, horizon, events })
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    /// `ξ(t)`, the post-jump state at a jump instant.
    pub fn state_at(&self, t: f64) -> usize {
        let n = self.events.partition_point(|e| e.time <= t);
        if n == 0 {
            self.initial_state
        } else {
            self.events[n - 1].to
        }
    }

    /// The remainder of the path after `s`, with time measured from `s`.
    pub fn restarted_at(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s <= self.horizon) {
            return Err(Error::GridOutsideHorizon { time: s, horizon: self.horizon });
        }
        let events = self
            .events
            .iter()
            .filter(|e| e.time > s)
            .map(|e| JumpEvent { time: e.time - s, ..*e })
            .collect();
        Ok(Self { initial_state: self.state_at(s), horizon: self.horizon - s, events })
    }
}

/// Index of the first category whose cumulative weight reaches `u`; a draw
/// exactly on a boundary selects the lower index. Zero-weight categories are
/// never selected.
fn categorical<'a>(weights: impl Iterator<Item = &'a f64>, u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (j, &w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        cumulative += w;
        last_positive = j;
        if u <= cumulative {
            return j;
        }
    }
    last_positive
}

/// Samples an exact path: exponential holding times by inverse transform,
/// post-jump states by cumulative-sum inversion.
pub fn sample_trajectory<R: Rng + ?Sized>(
    chain: &EnvironmentChain,
    initial_state: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<EnvTrajectory> {
    chain.check_state(initial_state)?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be finite and non-negative")));
    }
    let mut events = Vec::new();
    let mut t = 0.0f64;
    let mut state = initial_state;
    loop {
        let rate = chain.rate(state);
        if rate == 0.0 {
            break;
        }
        let u: f64 = rng.sample(Open01);
        let mut next_time = t - u.ln() / rate;
        if next_time <= t {
            next_time = t.next_up();
        }
        if next_time > horizon {
            break;
        }
        let v: f64 = rng.sample(Open01);
        let to = categorical(chain.jumps.row(state).iter(), v);
        events.push(JumpEvent { time: next_time, from: state, to });
        t = next_time;
        state = to;
    }
    Ok(EnvTrajectory { initial_state, horizon, events })
}

/// `P_t = exp(t q)` for the marginal generator.
pub fn transition_matrix(chain: &EnvironmentChain, t: f64) -> Result<DMatrix<f64>> {
    real_matrix_exp(&chain.generator(), t)
}

/// `v(i, t) = E^i[h(ξ(t))] = (e^{tq} h)(i)`.
pub fn backward_expectation(chain: &EnvironmentChain, h: &[f64], t: f64) -> Result<Vec<f64>> {
    check_function(chain, h)?;
    let p = transition_matrix(chain, t)?;
    Ok((p * DVector::from_column_slice(h)).iter().copied().collect())
}

fn check_function(chain: &EnvironmentChain, h: &[f64]) -> Result<()> {
    if h.len() == chain.states() {
        Ok(())
    } else {
        Err(Error::Shape(format!("function has {} values for {} states", h.len(), chain.states())))
    }
}

/// First-jump decomposition
/// `v(i,t) = h(i) e^{−λ_i t} + λ_i Σ_j Q(i,j) ∫_0^t e^{−λ_i (t−s)} v(j,s) ds`,
/// evaluated by composite trapezoid on `quad_steps` uniform intervals with
/// the integrand taken from [`backward_expectation`]. The sum includes
/// `j = i` when self-jumps are present, since a pulse restarts the holding
/// clock without changing the state.
pub fn renewal_expectation(chain: &EnvironmentChain, h: &[f64], t: f64, quad_steps: usize) -> Result<Vec<f64>> {
    check_function(chain, h)?;
    if quad_steps < 2 {
        return Err(Error::InvalidArgument(format!("quad_steps must be at least 2, got {quad_steps}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be finite and non-negative, got {t}")));
    }
    let k = chain.states();
    if t == 0.0 {
        return Ok(h.to_vec());
    }
    let step = t / quad_steps as f64;
    let nodes: Vec<Vec<f64>> = (0..=quad_steps)
        .map(|m| backward_expectation(chain, h, m as f64 * step))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let rate = chain.rate(i);
        if rate == 0.0 {
            out.push(h[i]);
            continue;
        }
        let integrand = |m: usize| -> f64 {
            let s = m as f64 * step;
            let mixed: f64 = (0..k).map(|j| chain.jump_probability(i, j) * nodes[m][j]).sum();
            (-rate * (t - s)).exp() * mixed
        };
        let interior: f64 = (1..quad_steps).map(integrand).sum();
        let integral = step * (0.5 * integrand(0) + interior + 0.5 * integrand(quad_steps));
        out.push(h[i] * (-rate * t).exp() + rate * integral);
    }
    Ok(out)
}
