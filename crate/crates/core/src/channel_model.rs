//! Fixed real-gain two-hop channel.
//!
//! Two sources `s1`, `s2` reach two relays `u`, `v` through the first-hop
//! matrix `H1`; the relays reach destinations `d1`, `d2` through `H2`:
//!
//! ```text
//! H1 = | h_s1u  h_s2u |      H2 = | h_ud1  h_vd1 |
//!      | h_s1v  h_s2v |           | h_ud2  h_vd2 |
//! ```
//!
//! A relay pair scaling its inputs by `(mu, lambda)` yields the end-to-end
//! matrix `G = H2 diag(mu, lambda) H1`.

use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for zero and rank tests on channel gains.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// Destination index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Destination {
    D1,
    D2,
}

/// The eight real gains of a two-hop 2×2 channel.
///
/// Serialized as a flat JSON object with keys `s1u, s2u, s1v, s2v, ud1, vd1,
/// ud2, vd2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRealization {
    #[serde(rename = "s1u")]
    pub h_s1u: f64,
    #[serde(rename = "s2u")]
    pub h_s2u: f64,
    #[serde(rename = "s1v")]
    pub h_s1v: f64,
    #[serde(rename = "s2v")]
    pub h_s2v: f64,
    #[serde(rename = "ud1")]
    pub h_ud1: f64,
    #[serde(rename = "vd1")]
    pub h_vd1: f64,
    #[serde(rename = "ud2")]
    pub h_ud2: f64,
    #[serde(rename = "vd2")]
    pub h_vd2: f64,
}

/// Outcome of the genericity checks on a channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub all_nonzero: bool,
    pub rank_h1_full: bool,
    pub rank_h2_full: bool,
    pub rank_hsup1_full: bool,
    pub rank_hsup2_full: bool,
    pub det_h1: f64,
    pub det_h2: f64,
    pub det_hsup1: f64,
    pub det_hsup2: f64,
}

impl ConditionReport {
    pub fn is_generic(&self) -> bool {
        self.all_nonzero
            && self.rank_h1_full
            && self.rank_h2_full
            && self.rank_hsup1_full
            && self.rank_hsup2_full
    }

    /// Names of the conditions that failed, empty when generic.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.all_nonzero {
            out.push("nonzero_gains");
        }
        if !self.rank_h1_full {
            out.push("rank_h1");
        }
        if !self.rank_h2_full {
            out.push("rank_h2");
        }
        if !self.rank_hsup1_full {
            out.push("rank_hsup1");
        }
        if !self.rank_hsup2_full {
            out.push("rank_hsup2");
        }
        out
    }
}

/// End-to-end matrix `[[alpha1, beta1], [alpha2, beta2]]` for one relay
/// coefficient pair. Row `i` is destination `d_i`; column 1 is source `s1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndToEndMatrix {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl EndToEndMatrix {
    pub fn entries(&self) -> [f64; 4] {
        [self.alpha1, self.beta1, self.alpha2, self.beta2]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn as_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.alpha1, self.beta1, self.alpha2, self.beta2)
    }

    /// Coefficients `(alpha, beta)` seen by one destination.
    pub fn row(&self, dest: Destination) -> (f64, f64) {
        match dest {
            Destination::D1 => (self.alpha1, self.beta1),
            Destination::D2 => (self.alpha2, self.beta2),
        }
    }
}

fn det2(m: &Matrix2<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

fn row_scale(m: &Matrix2<f64>) -> f64 {
    let r0 = m[(0, 0)].abs().max(m[(0, 1)].abs());
    let r1 = m[(1, 0)].abs().max(m[(1, 1)].abs());
    r0 * r1
}

impl ChannelRealization {
    /// Builds a realization from gains ordered
    /// `(s1u, s2u, s1v, s2v, ud1, vd1, ud2, vd2)`.
    pub fn new(gains: [f64; 8]) -> Result<Self> {
        if let Some(g) = gains.iter().find(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument(format!("channel gain {g} is not finite")));
        }
        let [h_s1u, h_s2u, h_s1v, h_s2v, h_ud1, h_vd1, h_ud2, h_vd2] = gains;
        Ok(Self { h_s1u, h_s2u, h_s1v, h_s2v, h_ud1, h_vd1, h_ud2, h_vd2 })
    }

    pub fn gains(&self) -> [f64; 8] {
        [
            self.h_s1u, self.h_s2u, self.h_s1v, self.h_s2v, self.h_ud1, self.h_vd1, self.h_ud2,
            self.h_vd2,
        ]
    }

    /// Draws eight i.i.d. standard normal gains from `rng`, with no checks.
    pub fn draw<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut g = [0.0; 8];
        for x in g.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        Self::new(g).expect("normal draws are finite")
    }

    /// Deterministic generic channel for `seed`, redrawing non-generic
    /// realizations up to `max_rejects` times.
    pub fn sample(seed: u64, max_rejects: usize) -> Result<Self> {
        if max_rejects == 0 {
            return Err(Error::InvalidArgument("max_rejects must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_rejects {
            let ch = Self::draw(&mut rng);
            if ch.check_conditions(DEFAULT_REL_TOL).is_generic() {
                return Ok(ch);
            }
        }
        Err(Error::GenericityFailure { rejects: max_rejects })
    }

    /// First-hop matrix `[[h_s1u, h_s2u], [h_s1v, h_s2v]]`.
    pub fn h1(&self) -> Matrix2<f64> {
        Matrix2::new(self.h_s1u, self.h_s2u, self.h_s1v, self.h_s2v)
    }

    /// Second-hop matrix `[[h_ud1, h_vd1], [h_ud2, h_vd2]]`.
    pub fn h2(&self) -> Matrix2<f64> {
        Matrix2::new(self.h_ud1, self.h_vd1, self.h_ud2, self.h_vd2)
    }

    /// Cross-product matrix for source `i`: the first row pairs `d1` with
    /// source `i`, the second pairs `d2` with the other source.
    pub fn h_sup(&self, source: usize) -> Matrix2<f64> {
        let (own_u, own_v, other_u, other_v) = match source {
            1 => (self.h_s1u, self.h_s1v, self.h_s2u, self.h_s2v),
            2 => (self.h_s2u, self.h_s2v, self.h_s1u, self.h_s1v),
            _ => panic!("source index must be 1 or 2, got {source}"),
        };
        Matrix2::new(
            self.h_ud1 * own_u,
            self.h_vd1 * own_v,
            self.h_ud2 * other_u,
            self.h_vd2 * other_v,
        )
    }

    pub fn check_conditions(&self, rel_tol: f64) -> ConditionReport {
        assert!(rel_tol > 0.0, "rel_tol must be positive");
        let gains = self.gains();
        let max_gain = gains.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let all_nonzero = max_gain > 0.0 && gains.iter().all(|g| g.abs() > rel_tol * max_gain);

        let full = |m: &Matrix2<f64>| {
            let d = det2(m);
            (d, d.abs() > rel_tol * row_scale(m))
        };
        let (det_h1, rank_h1_full) = full(&self.h1());
        let (det_h2, rank_h2_full) = full(&self.h2());
        let (det_hsup1, rank_hsup1_full) = full(&self.h_sup(1));
        let (det_hsup2, rank_hsup2_full) = full(&self.h_sup(2));
        ConditionReport {
            all_nonzero,
            rank_h1_full,
            rank_h2_full,
            rank_hsup1_full,
            rank_hsup2_full,
            det_h1,
            det_h2,
            det_hsup1,
            det_hsup2,
        }
    }

    pub fn end_to_end(&self, mu: f64, lambda: f64) -> EndToEndMatrix {
        EndToEndMatrix {
            alpha1: mu * self.h_ud1 * self.h_s1u + lambda * self.h_vd1 * self.h_s1v,
            beta1: mu * self.h_ud1 * self.h_s2u + lambda * self.h_vd1 * self.h_s2v,
            alpha2: mu * self.h_ud2 * self.h_s1u + lambda * self.h_vd2 * self.h_s1v,
            beta2: mu * self.h_ud2 * self.h_s2u + lambda * self.h_vd2 * self.h_s2v,
            mu,
            lambda,
        }
    }

    /// Variance of the forwarded relay noise plus destination noise at `dest`.
    pub fn effective_noise_variance(&self, mu: f64, lambda: f64, dest: Destination) -> f64 {
        let (g_u, g_v) = self.second_hop(dest);
        g_u * g_u * mu * mu + g_v * g_v * lambda * lambda + 1.0
    }

    /// Gains `(h_ud, h_vd)` into destination `dest`.
    pub fn second_hop(&self, dest: Destination) -> (f64, f64) {
        match dest {
            Destination::D1 => (self.h_ud1, self.h_vd1),
            Destination::D2 => (self.h_ud2, self.h_vd2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ch_star() -> ChannelRealization {
        ChannelRealization::new([1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 2.0, 1.0]).unwrap()
    }

    #[test]
    fn reference_channel_determinants() {
        let r = ch_star().check_conditions(DEFAULT_REL_TOL);
        assert!(r.is_generic());
        // 1*1 - 2*3, 1*1 - 1*2, 1*1 - 3*(2*2), 2*3 - 1*2
        assert_eq!(r.det_h1, -5.0);
        assert_eq!(r.det_h2, -1.0);
        assert_eq!(r.det_hsup1, -11.0);
        assert_eq!(r.det_hsup2, 4.0);
    }

    #[test]
    fn all_ones_is_rank_deficient() {
        let r = ChannelRealization::new([1.0; 8]).unwrap().check_conditions(DEFAULT_REL_TOL);
        assert!(!r.rank_h1_full);
        assert!(!r.is_generic());
        assert!(r.failures().contains(&"rank_h1"));
    }

    #[test]
    fn zero_gain_detected() {
        let mut ch = ch_star();
        ch.h_s1u = 0.0;
        let r = ch.check_conditions(DEFAULT_REL_TOL);
        assert!(!r.all_nonzero);
        assert!(!r.is_generic());
    }

    #[test]
    fn non_finite_gain_rejected() {
        assert!(ChannelRealization::new([1.0, f64::NAN, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn sampler_is_deterministic_and_generic() {
        let a = ChannelRealization::sample(42, 10).unwrap();
        let b = ChannelRealization::sample(42, 10).unwrap();
        assert_eq!(a.gains().map(f64::to_bits), b.gains().map(f64::to_bits));
        assert!(a.gains().iter().all(|g| g.is_finite() && *g != 0.0));
        assert!(a.check_conditions(DEFAULT_REL_TOL).is_generic());
        assert!(ChannelRealization::sample(1, 0).is_err());
    }

    #[test]
    fn end_to_end_reference_values() {
        let ch = ch_star();
        let z = ch.end_to_end(0.0, 0.0);
        assert_eq!(z.entries(), [0.0; 4]);

        let c = 0.3;
        let g = ch.end_to_end(c, -2.0 * c);
        let want = [-5.0 * c, 0.0, -4.0 * c, 2.0 * c];
        for (x, w) in g.entries().iter().zip(want) {
            assert!((x - w).abs() < 1e-15, "{x} vs {w}");
        }
        assert_eq!(ch.end_to_end(1.0, 0.0).entries(), [1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn noise_variance_reference_values() {
        let ch = ch_star();
        assert_eq!(ch.effective_noise_variance(0.0, 0.0, Destination::D1), 1.0);
        let c: f64 = 0.25;
        let v = ch.effective_noise_variance(c, -2.0 * c, Destination::D1);
        assert!((v - (5.0 * c * c + 1.0)).abs() < 1e-15);
        assert_eq!(ch.effective_noise_variance(1.0, 1.0, Destination::D2), 6.0);
    }

    #[test]
    fn json_uses_short_gain_names() {
        let s = serde_json::to_string(&ch_star()).unwrap();
        assert!(s.contains("\"s1u\":1.0") && s.contains("\"vd2\":1.0"), "{s}");
        let back: ChannelRealization = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ch_star());
    }

    prop_compose! {
        fn any_channel()(seed in any::<u64>()) -> ChannelRealization {
            ChannelRealization::sample(seed, 100).unwrap()
        }
    }

    proptest! {
        #[test]
        fn end_to_end_matches_matrix_product(ch in any_channel(), mu in -3.0..3.0f64, la in -3.0..3.0f64) {
            let g = ch.end_to_end(mu, la).as_matrix();
            let prod = ch.h2() * Matrix2::new(mu, 0.0, 0.0, la) * ch.h1();
            let scale = g.abs().max().max(1e-300);
            prop_assert!((g - prod).abs().max() <= 1e-13 * scale.max(mu.abs().max(la.abs())));
        }

        #[test]
        fn end_to_end_is_homogeneous(ch in any_channel(), mu in -3.0..3.0f64, la in -3.0..3.0f64, a in -5.0..5.0f64) {
            let g = ch.end_to_end(mu, la);
            let ga = ch.end_to_end(a * mu, a * la);
            for (x, y) in g.entries().iter().zip(ga.entries()) {
                prop_assert!((a * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn at_most_one_zero_entry(ch in any_channel(), mu in -3.0..3.0f64, which in 0usize..5) {
            prop_assume!(mu.abs() > 1e-3);
            // Pick lambda nulling one entry (or a generic value for which == 4).
            let la = match which {
                0 => -mu * ch.h_ud1 * ch.h_s1u / (ch.h_vd1 * ch.h_s1v),
                1 => -mu * ch.h_ud1 * ch.h_s2u / (ch.h_vd1 * ch.h_s2v),
                2 => -mu * ch.h_ud2 * ch.h_s1u / (ch.h_vd2 * ch.h_s1v),
                3 => -mu * ch.h_ud2 * ch.h_s2u / (ch.h_vd2 * ch.h_s2v),
                _ => 0.7 * mu,
            };
            let g = ch.end_to_end(mu, la);
            let scale = g.max_abs();
            let zeros = g.entries().iter().filter(|x| x.abs() <= 1e-9 * scale).count();
            prop_assert!(zeros <= 1, "{:?}", g);
        }

        #[test]
        fn noise_variance_at_least_one(ch in any_channel(), mu in -3.0..3.0f64, la in -3.0..3.0f64) {
            for d in [Destination::D1, Destination::D2] {
                let v = ch.effective_noise_variance(mu, la, d);
                prop_assert!(v >= 1.0);
                if mu != 0.0 || la != 0.0 {
                    prop_assert!(v > 1.0);
                }
            }
        }
    }
}
