//! Three-phase time-varying amplify-forward scheme.
//!
//! Relay `u` always scales by `c`; relay `v` cycles through three values so
//! that phase 1 removes `s2` from `d1`, phase 2 removes `s1` from `d2`, and
//! phase 3 (`lambda = 0`) hands each destination one extra equation in the
//! symbols it already saw. Over three slots each source delivers two symbols,
//! which gives each destination two thirds of a degree of freedom.
//!
//! Source transmissions per three-slot block are
//!
//! | phase | `s1` | `s2` |
//! |-------|------|------|
//! | 1     | `a1` | `b1` |
//! | 2     | `a2` | `b2` |
//! | 3     | `a1` | `b2` |

use serde::{Deserialize, Serialize};

use crate::channel_model::{ChannelRealization, Destination, EndToEndMatrix, DEFAULT_REL_TOL};
use crate::error::{Error, Result};

/// Relative tolerance for the nonzero/zero preconditions of reconstruction.
pub const RECONSTRUCT_REL_TOL: f64 = 1e-9;

/// Finite coefficient sets for relay `u` and relay `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AfAlphabet {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl AfAlphabet {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.is_empty() || v.is_empty() {
            return Err(Error::InvalidArgument("alphabets must be nonempty".into()));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("alphabet values must be finite".into()));
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn contains(&self, pair: AfPair) -> bool {
        self.u.contains(&pair.mu) && self.v.contains(&pair.lambda)
    }

    /// Every `(mu, lambda)` combination.
    pub fn pairs(&self) -> impl Iterator<Item = AfPair> + '_ {
        self.u
            .iter()
            .flat_map(move |&mu| self.v.iter().map(move |&lambda| AfPair { mu, lambda }))
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { u: self.u.iter().map(|x| x * t).collect(), v: self.v.iter().map(|x| x * t).collect() }
    }
}

/// Relay scaling pair for one relay-transmit slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AfPair {
    pub mu: f64,
    pub lambda: f64,
}

impl AfPair {
    pub const ZERO: AfPair = AfPair { mu: 0.0, lambda: 0.0 };

    pub fn new(mu: f64, lambda: f64) -> Self {
        Self { mu, lambda }
    }
}

/// Per-slot relay coefficients, indexed by relay-transmit slot.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct AfSchedule {
    pub pairs: Vec<AfPair>,
}

impl AfSchedule {
    pub fn new(pairs: Vec<AfPair>) -> Self {
        Self { pairs }
    }

    pub fn zero(n: usize) -> Self {
        Self { pairs: vec![AfPair::ZERO; n] }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_within(&self, alphabet: &AfAlphabet) -> bool {
        self.pairs.iter().all(|p| alphabet.contains(*p))
    }
}

/// One of the three phases of the scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
    Three,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::One, Phase::Two, Phase::Three];

    /// Phase of the `k`-th forwarded slot (0-based).
    pub fn of_slot(k: usize) -> Phase {
        Self::ALL[k % 3]
    }
}

/// Coefficients of the three-phase scheme for one channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub c: f64,
    pub l: f64,
    pub lambda_phase1: f64,
    pub lambda_phase2: f64,
    pub lambda_phase3: f64,
    pub mu_all: f64,
}

impl PhasePlan {
    /// Plans the scheme; fails unless the channel passes every genericity
    /// condition.
    pub fn for_channel(ch: &ChannelRealization) -> Result<Self> {
        let report = ch.check_conditions(DEFAULT_REL_TOL);
        if !report.is_generic() {
            return Err(Error::NonGenericChannel(report.failures().join(", ")));
        }
        let ChannelRealization { h_s1u, h_s2u, h_s1v, h_s2v, h_ud1, h_vd1, h_ud2, h_vd2 } = *ch;

        let l = ((h_vd1 * h_s2v) / (h_ud1 * h_s2u))
            .abs()
            .min(((h_vd2 * h_s1v) / (h_ud2 * h_s1u)).abs());
        let c = (1.0 / (h_s1u * h_s1u + h_s2u * h_s2u + 1.0))
            .sqrt()
            .min(l * (1.0 / (h_s1v * h_s1v + h_s2v * h_s2v + 1.0)).sqrt());

        Ok(Self {
            c,
            l,
            lambda_phase1: -(c * h_ud1 * h_s2u) / (h_vd1 * h_s2v),
            lambda_phase2: -(c * h_ud2 * h_s1u) / (h_vd2 * h_s1v),
            lambda_phase3: 0.0,
            mu_all: c,
        })
    }

    pub fn alphabet(&self) -> AfAlphabet {
        AfAlphabet::new(vec![self.mu_all], vec![self.lambda_phase3, self.lambda_phase1, self.lambda_phase2])
            .expect("plan coefficients are finite")
    }

    pub fn pair(&self, phase: Phase) -> AfPair {
        let lambda = match phase {
            Phase::One => self.lambda_phase1,
            Phase::Two => self.lambda_phase2,
            Phase::Three => self.lambda_phase3,
        };
        AfPair { mu: self.mu_all, lambda }
    }

    /// End-to-end matrices of the three phases.
    pub fn phase_matrices(&self, ch: &ChannelRealization) -> [EndToEndMatrix; 3] {
        Phase::ALL.map(|p| {
            let AfPair { mu, lambda } = self.pair(p);
            ch.end_to_end(mu, lambda)
        })
    }

    /// Periodic schedule of `n` forwarded slots cycling phase 1, 2, 3.
    pub fn schedule(&self, n: usize) -> Result<AfSchedule> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("schedule needs at least 3 slots, got {n}")));
        }
        Ok(AfSchedule::new((0..n).map(|k| self.pair(Phase::of_slot(k))).collect()))
    }
}

fn require_nonzero(x: f64, scale: f64, what: &str) -> Result<()> {
    if x.abs() > RECONSTRUCT_REL_TOL * scale && x.is_finite() {
        Ok(())
    } else {
        Err(Error::DegenerateCoefficients(format!("{what} = {x} is numerically zero")))
    }
}

fn require_zero(x: f64, scale: f64, what: &str) -> Result<()> {
    if x.abs() <= RECONSTRUCT_REL_TOL * scale {
        Ok(())
    } else {
        Err(Error::DegenerateCoefficients(format!("{what} = {x} is not nulled")))
    }
}

/// Recovers `(a1, a2)` at `d1` from its three received samples.
pub fn reconstruct_d1(y: [f64; 3], g: &[EndToEndMatrix; 3]) -> Result<(f64, f64)> {
    let [g1, g2, g3] = g;
    require_zero(g1.beta1, g1.max_abs(), "phase-1 beta1")?;
    require_nonzero(g1.alpha1, g1.max_abs(), "phase-1 alpha1")?;
    require_nonzero(g2.alpha1, g2.max_abs(), "phase-2 alpha1")?;
    require_nonzero(g3.beta1, g3.max_abs(), "phase-3 beta1")?;

    let a1 = y[0] / g1.alpha1;
    let b2_term = y[2] - g3.alpha1 * a1;
    let a2 = (y[1] - (g2.beta1 / g3.beta1) * b2_term) / g2.alpha1;
    Ok((a1, a2))
}

/// Recovers `(b1, b2)` at `d2` from its three received samples.
pub fn reconstruct_d2(y: [f64; 3], g: &[EndToEndMatrix; 3]) -> Result<(f64, f64)> {
    let [g1, g2, g3] = g;
    require_zero(g2.alpha2, g2.max_abs(), "phase-2 alpha2")?;
    require_nonzero(g2.beta2, g2.max_abs(), "phase-2 beta2")?;
    require_nonzero(g3.alpha2, g3.max_abs(), "phase-3 alpha2")?;
    require_nonzero(g1.beta2, g1.max_abs(), "phase-1 beta2")?;

    let b2 = y[1] / g2.beta2;
    let a1 = (y[2] - g3.beta2 * b2) / g3.alpha2;
    let b1 = (y[0] - g1.alpha2 * a1) / g1.beta2;
    Ok((b1, b2))
}

/// Reconstruction noise variance of each decoded stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamVariances {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl StreamVariances {
    pub fn as_array(&self) -> [f64; 4] {
        [self.a1, self.a2, self.b1, self.b2]
    }

    pub fn from_array([a1, a2, b1, b2]: [f64; 4]) -> Self {
        Self { a1, a2, b1, b2 }
    }
}

/// Closed-form reconstruction noise variances; they do not depend on power.
pub fn analytic_noise_variances(ch: &ChannelRealization, plan: &PhasePlan) -> Result<StreamVariances> {
    let g = plan.phase_matrices(ch);
    // Probe the preconditions once through the decoders.
    reconstruct_d1([0.0; 3], &g)?;
    reconstruct_d2([0.0; 3], &g)?;
    let [g1, g2, g3] = g;

    let var = |phase: Phase, dest| {
        let AfPair { mu, lambda } = plan.pair(phase);
        ch.effective_noise_variance(mu, lambda, dest)
    };
    let v1 = Phase::ALL.map(|p| var(p, Destination::D1));
    let v2 = Phase::ALL.map(|p| var(p, Destination::D2));

    let a1 = v1[0] / (g1.alpha1 * g1.alpha1);
    let k12 = 1.0 / g2.alpha1;
    let k13 = g2.beta1 / (g2.alpha1 * g3.beta1);
    let k11 = g3.alpha1 * g2.beta1 / (g1.alpha1 * g2.alpha1 * g3.beta1);
    let a2 = k12 * k12 * v1[1] + k13 * k13 * v1[2] + k11 * k11 * v1[0];

    let b2 = v2[1] / (g2.beta2 * g2.beta2);
    let k21 = 1.0 / g1.beta2;
    let k23 = g1.alpha2 / (g1.beta2 * g3.alpha2);
    let k22 = g1.alpha2 * g3.beta2 / (g1.beta2 * g3.alpha2 * g2.beta2);
    let b1 = k21 * k21 * v2[0] + k23 * k23 * v2[2] + k22 * k22 * v2[1];

    Ok(StreamVariances { a1, a2, b1, b2 })
}

fn check_power(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidPower(p))
    }
}

/// Rate in bits per channel use of one user delivering two symbols every
/// three slots with the given reconstruction noise variances.
pub fn achievable_rate(p: f64, sigma1_sq: f64, sigma2_sq: f64) -> Result<f64> {
    check_power(p)?;
    if !(sigma1_sq > 0.0 && sigma2_sq > 0.0) {
        return Err(Error::InvalidArgument("noise variances must be positive".into()));
    }
    Ok(((1.0 + p / sigma1_sq).log2() + (1.0 + p / sigma2_sq).log2()) / 6.0)
}

/// Rates at one power, optionally annotated with fitted slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slope_per_user: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slope_sum: Option<f64>,
}

impl RateReport {
    pub fn sum(&self) -> f64 {
        self.r1 + self.r2
    }
}

/// Scheme rates at power `p` from a set of stream variances.
pub fn rates_from_variances(p: f64, v: &StreamVariances) -> Result<RateReport> {
    Ok(RateReport {
        p,
        r1: achievable_rate(p, v.a1, v.a2)?,
        r2: achievable_rate(p, v.b1, v.b2)?,
        slope_per_user: None,
        slope_sum: None,
    })
}

/// Time-sharing baseline: each user alone for half the slots, relays fixed at
/// the phase that nulls the other user.
pub fn baseline_tdma_rate(ch: &ChannelRealization, p: f64) -> Result<(f64, f64)> {
    check_power(p)?;
    let plan = PhasePlan::for_channel(ch)?;
    let [g1, g2, _] = plan.phase_matrices(ch);
    let p1 = plan.pair(Phase::One);
    let p2 = plan.pair(Phase::Two);
    let n1 = ch.effective_noise_variance(p1.mu, p1.lambda, Destination::D1);
    let n2 = ch.effective_noise_variance(p2.mu, p2.lambda, Destination::D2);
    let r1 = (1.0 + p * g1.alpha1 * g1.alpha1 / n1).log2() / 4.0;
    let r2 = (1.0 + p * g2.beta2 * g2.beta2 / n2).log2() / 4.0;
    Ok((r1, r2))
}
