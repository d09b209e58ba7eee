//! Computable parts of the sum-DoF outer bound.
//!
//! For a generic channel every nonzero end-to-end matrix has at most one zero
//! entry, so each slot of a schedule falls in one of five states:
//!
//! ```text
//!   A: |* *|   B: |* 0|   C1: |* *|   C2: |0 *|   C3: |* *|
//!      |0 *|      |* *|       |* *|       |* *|       |* 0|
//! ```
//!
//! `C = C1 ∪ C2 ∪ C3`. Three bounds on the sum rate grow as
//! `½ (1 + |L|/n) log2 P` for `L = C, B, A`. Since `|A| + |B| + |C| ≤ n`, the
//! smallest of the three sets holds at most a third of the slots, which caps
//! the sum-DoF at 4/3.
//!
//! The bounds' additive constants are only partly explicit; the computable
//! pieces are evaluated here and the rest is flagged as a residual.

use std::f64::consts::{E, PI};
use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::af_scheme::{AfAlphabet, AfSchedule};
use crate::channel_model::{ChannelRealization, EndToEndMatrix};
use crate::error::{Error, Result};
use crate::link_simulator::fmt_float;

/// Relative zero tolerance for state tests.
pub const STATE_REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    A,
    B,
    C1,
    C2,
    C3,
    Zero,
}

impl StateLabel {
    pub const ALL: [StateLabel; 6] =
        [StateLabel::A, StateLabel::B, StateLabel::C1, StateLabel::C2, StateLabel::C3, StateLabel::Zero];

    pub fn name(&self) -> &'static str {
        match self {
            StateLabel::A => "A",
            StateLabel::B => "B",
            StateLabel::C1 => "C1",
            StateLabel::C2 => "C2",
            StateLabel::C3 => "C3",
            StateLabel::Zero => "Zero",
        }
    }
}

pub fn classify_state(g: &EndToEndMatrix, rel_tol: f64) -> Result<StateLabel> {
    assert!(rel_tol > 0.0, "rel_tol must be positive");
    let scale = g.max_abs();
    if scale == 0.0 {
        return Ok(StateLabel::Zero);
    }
    let z = g.entries().map(|x| x.abs() <= rel_tol * scale);
    match z {
        [false, false, false, false] => Ok(StateLabel::C1),
        [false, false, true, false] => Ok(StateLabel::A),
        [false, true, false, false] => Ok(StateLabel::B),
        [true, false, false, false] => Ok(StateLabel::C2),
        [false, false, false, true] => Ok(StateLabel::C3),
        _ => Err(Error::ImpossiblePattern(g.alpha1, g.beta1, g.alpha2, g.beta2)),
    }
}

/// Set of the three-way split used by the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CensusSet {
    A,
    B,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StateCensus {
    pub n_a: usize,
    pub n_b: usize,
    pub n_c1: usize,
    pub n_c2: usize,
    pub n_c3: usize,
    pub n_zero: usize,
    pub n: usize,
}

impl StateCensus {
    pub fn from_labels(labels: &[StateLabel]) -> Self {
        let mut c = StateCensus { n: labels.len(), ..Default::default() };
        for l in labels {
            match l {
                StateLabel::A => c.n_a += 1,
                StateLabel::B => c.n_b += 1,
                StateLabel::C1 => c.n_c1 += 1,
                StateLabel::C2 => c.n_c2 += 1,
                StateLabel::C3 => c.n_c3 += 1,
                StateLabel::Zero => c.n_zero += 1,
            }
        }
        c
    }

    pub fn n_c(&self) -> usize {
        self.n_c1 + self.n_c2 + self.n_c3
    }

    pub fn n_s(&self) -> usize {
        self.n_a + self.n_b + self.n_c()
    }

    pub fn count(&self, set: CensusSet) -> usize {
        match set {
            CensusSet::A => self.n_a,
            CensusSet::B => self.n_b,
            CensusSet::C => self.n_c(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.n_s() + self.n_zero == self.n
    }
}

/// Tests whether the `d2`-from-`s1` coefficient vanishes, directly from its
/// defining linear form in `(mu, lambda)`.
pub fn in_set_a(ch: &ChannelRealization, mu: f64, lambda: f64, rel_tol: f64) -> bool {
    let t_u = mu * ch.h_ud2 * ch.h_s1u;
    let t_v = lambda * ch.h_vd2 * ch.h_s1v;
    let scale = t_u.abs().max(t_v.abs());
    scale > 0.0 && (t_u + t_v).abs() <= rel_tol * scale
}

/// Labels of every slot, cross-checking A-membership by the linear form.
pub fn classify_schedule(
    ch: &ChannelRealization,
    schedule: &AfSchedule,
    rel_tol: f64,
) -> Result<Vec<StateLabel>> {
    schedule
        .pairs
        .iter()
        .enumerate()
        .map(|(slot, p)| {
            let label = classify_state(&ch.end_to_end(p.mu, p.lambda), rel_tol)?;
            let linear = in_set_a(ch, p.mu, p.lambda, rel_tol);
            if linear != (label == StateLabel::A) {
                return Err(Error::ClassificationMismatch {
                    slot,
                    detail: format!("zero pattern gives {}, linear form gives A={linear}", label.name()),
                });
            }
            Ok(label)
        })
        .collect()
}

pub fn census(ch: &ChannelRealization, schedule: &AfSchedule, rel_tol: f64) -> Result<StateCensus> {
    classify_schedule(ch, schedule, rel_tol).map(|l| StateCensus::from_labels(&l))
}

pub const CENSUS_CSV_HEADER: &str = "slot,mu,lambda,state";

pub fn write_census_csv<W: Write>(schedule: &AfSchedule, labels: &[StateLabel], mut w: W) -> io::Result<()> {
    writeln!(w, "{CENSUS_CSV_HEADER}")?;
    for (k, (p, l)) in schedule.pairs.iter().zip(labels).enumerate() {
        writeln!(w, "{},{},{},{}", k + 1, fmt_float(p.mu), fmt_float(p.lambda), l.name())?;
    }
    Ok(())
}

/// Worst-case squared gains and noise variance over an alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "N")]
    pub n: f64,
    /// `m_ij[i][j]`: largest squared coefficient from source `j+1` to
    /// destination `i+1`.
    #[serde(rename = "M_ij")]
    pub m_ij: [[f64; 2]; 2],
}

pub fn bound_constants(ch: &ChannelRealization, alphabet: &AfAlphabet) -> BoundConstants {
    let mut m_ij = [[0.0_f64; 2]; 2];
    let mut noise_max = 0.0_f64;
    for p in alphabet.pairs() {
        // Entry (i, j) of G is mu h_{u,d_i} h_{s_j,u} + lambda h_{v,d_i} h_{s_j,v}.
        let g = ch.end_to_end(p.mu, p.lambda);
        let e = [[g.alpha1, g.beta1], [g.alpha2, g.beta2]];
        for i in 0..2 {
            for j in 0..2 {
                m_ij[i][j] = m_ij[i][j].max(e[i][j] * e[i][j]);
            }
        }
        for (g_u, g_v) in [(ch.h_ud1, ch.h_vd1), (ch.h_ud2, ch.h_vd2)] {
            noise_max = noise_max.max(g_u * g_u * p.mu * p.mu + g_v * g_v * p.lambda * p.lambda);
        }
    }
    let m = m_ij.iter().flatten().fold(0.0_f64, |a, b| a.max(*b));
    BoundConstants { m, n: noise_max + 1.0, m_ij }
}

/// One bound evaluated per channel use, in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub set: CensusSet,
    /// `½ (1 + |L|/n) log2 P`.
    pub slope_term: f64,
    /// `1 + |L|/n`, the bound's DoF.
    pub dof: f64,
    /// Explicit P-independent part.
    pub constant: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEvaluation {
    #[serde(rename = "P")]
    pub p: f64,
    pub bound1: BoundTerm,
    pub bound2: BoundTerm,
    pub bound3: BoundTerm,
    /// Always true: each bound also carries entropy-difference terms that
    /// have no closed form and are not included in `constant`.
    pub residual_note: bool,
    pub argmin_set: CensusSet,
}

impl BoundEvaluation {
    pub fn terms(&self) -> [BoundTerm; 3] {
        [self.bound1, self.bound2, self.bound3]
    }

    pub fn min_dof(&self) -> f64 {
        self.terms().iter().map(|t| t.dof).fold(f64::INFINITY, f64::min)
    }
}

/// Explicit part of the entropy bound over a set of `k` slots out of `n`:
/// `(n/2) log2(1 + 2M/N) + (k/2) log2 N + (k/2) log2(2πe)`, zero for an empty
/// set.
fn entropy_constant(k: usize, n: usize, c: &BoundConstants) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let (k, n) = (k as f64, n as f64);
    0.5 * n * (1.0 + 2.0 * c.m / c.n).log2() + 0.5 * k * c.n.log2() + 0.5 * k * (2.0 * PI * E).log2()
}

pub fn evaluate_bounds(census: &StateCensus, p: f64, constants: &BoundConstants) -> Result<BoundEvaluation> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidPower(p));
    }
    if census.n == 0 || !census.is_consistent() {
        return Err(Error::InvalidArgument(format!("inconsistent census {census:?}")));
    }
    let n = census.n;
    let (a, b, cc, s) = (census.n_a, census.n_b, census.n_c(), census.n_s());
    let term = |set: CensusSet, entropy_sets: &[usize]| {
        let dof = 1.0 + census.count(set) as f64 / n as f64;
        let slope_term = 0.5 * dof * p.log2();
        let constant = entropy_sets.iter().map(|&k| entropy_constant(k, n, constants)).sum::<f64>() / n as f64;
        BoundTerm { set, slope_term, dof, constant, value: slope_term + constant }
    };
    let (set, _) = min_census_fraction(census);
    Ok(BoundEvaluation {
        p,
        // h(Y1^A) + h(Y2^B) + h(Y1^C) + h(Y2^C)
        bound1: term(CensusSet::C, &[a, b, cc, cc]),
        // h(Y1^S) + h(Y2^B)
        bound2: term(CensusSet::B, &[s, b]),
        // h(Y2^S) + h(Y1^A)
        bound3: term(CensusSet::A, &[s, a]),
        residual_note: true,
        argmin_set: set,
    })
}

/// Smallest of `|A|/n, |B|/n, |C|/n`; ties go to the earlier set.
pub fn min_census_fraction(census: &StateCensus) -> (CensusSet, f64) {
    let n = census.n.max(1) as f64;
    [CensusSet::A, CensusSet::B, CensusSet::C]
        .into_iter()
        .map(|s| (s, census.count(s) as f64 / n))
        .fold((CensusSet::A, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Relative eigenvalue floor below which a covariance counts as singular.
pub const COVARIANCE_REL_TOL: f64 = 1e-12;

/// Differential entropy in bits of a Gaussian vector with covariance `cov`.
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows();
    if n == 0 || cov.ncols() != n {
        return Err(Error::InvalidArgument(format!("covariance must be square and nonempty, got {}x{}", n, cov.ncols())));
    }
    let asym = (cov - cov.transpose()).abs().max();
    if !(asym <= 1e-12 * cov.abs().max().max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularCovariance("covariance is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min <= COVARIANCE_REL_TOL * max {
        return Err(Error::SingularCovariance(format!("eigenvalues in [{min:e}, {max:e}]")));
    }
    let log_det: f64 = eig.iter().map(|l| l.log2()).sum();
    Ok(0.5 * (n as f64 * (2.0 * PI * E).log2() + log_det))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Jointly Gaussian instance: `X ~ N(0, cov_x)` independent of `(Y, Z)` with
/// joint covariance `cov_yz = [[Syy, Syz], [Szy, Szz]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma2Instance {
    pub m: DMatrix<f64>,
    pub mp: DMatrix<f64>,
    pub cov_x: DMatrix<f64>,
    pub cov_yz: DMatrix<f64>,
}

/// Evaluates both sides of
/// `h(MX + Y) - h(M'X + Z) <= h(M'M⁻¹Y - Z) - h(Z|Y) - log2 |det M'M⁻¹|`
/// in closed form.
pub fn check_lemma2(inst: &Lemma2Instance, slack: f64) -> Result<Lemma2Check> {
    let d = inst.m.nrows();
    let shape_ok = |a: &DMatrix<f64>, r: usize| a.nrows() == r && a.ncols() == r;
    if !(d > 0 && shape_ok(&inst.m, d) && shape_ok(&inst.mp, d) && shape_ok(&inst.cov_x, d) && shape_ok(&inst.cov_yz, 2 * d)) {
        return Err(Error::InvalidArgument("lemma instance has inconsistent dimensions".into()));
    }
    let m_inv = inst
        .m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("M".into()))?;
    let k = &inst.mp * &m_inv;
    let det_k = k.determinant();
    if !(det_k.is_finite() && det_k != 0.0) {
        return Err(Error::SingularMatrix("M' M^-1".into()));
    }

    let syy = inst.cov_yz.view((0, 0), (d, d)).into_owned();
    let syz = inst.cov_yz.view((0, d), (d, d)).into_owned();
    let szy = inst.cov_yz.view((d, 0), (d, d)).into_owned();
    let szz = inst.cov_yz.view((d, d), (d, d)).into_owned();

    let cov_mx_y = &inst.m * &inst.cov_x * inst.m.transpose() + &syy;
    let cov_mpx_z = &inst.mp * &inst.cov_x * inst.mp.transpose() + &szz;
    let cov_diff = &k * &syy * k.transpose() - &k * &syz - &szy * k.transpose() + &szz;
    let sym = |a: DMatrix<f64>| (&a + a.transpose()) * 0.5;

    let lhs = gaussian_entropy(&sym(cov_mx_y))? - gaussian_entropy(&sym(cov_mpx_z))?;
    let h_z_given_y = gaussian_entropy(&inst.cov_yz)? - gaussian_entropy(&syy)?;
    let rhs = gaussian_entropy(&sym(cov_diff))? - h_z_given_y - det_k.abs().log2();
    Ok(Lemma2Check { lhs, rhs, holds: lhs <= rhs + slack })
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random SPD matrix `A Aᵀ + εI`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, dim, dim);
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.05
}

/// Random well-conditioned invertible matrix.
pub fn random_invertible<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    loop {
        let a = random_matrix(rng, dim, dim) + DMatrix::identity(dim, dim) * rng.random_range(-1.5..1.5);
        let sv = a.singular_values();
        if sv.min() > 1e-3 * sv.max() {
            return a;
        }
    }
}

pub fn random_lemma2_instance<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Lemma2Instance {
    Lemma2Instance {
        m: random_invertible(rng, dim),
        mp: random_invertible(rng, dim),
        cov_x: random_spd(rng, dim),
        cov_yz: random_spd(rng, 2 * dim),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::af_scheme::{AfPair, PhasePlan};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ch_star() -> ChannelRealization {
        ChannelRealization::new([1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 2.0, 1.0]).unwrap()
    }

    fn g(a1: f64, b1: f64, a2: f64, b2: f64) -> EndToEndMatrix {
        EndToEndMatrix { alpha1: a1, beta1: b1, alpha2: a2, beta2: b2, mu: 0.0, lambda: 0.0 }
    }

    #[test]
    fn figure_states() {
        let t = STATE_REL_TOL;
        assert_eq!(classify_state(&g(1.0, 1.0, 0.0, 1.0), t).unwrap(), StateLabel::A);
        assert_eq!(classify_state(&g(1.0, 0.0, 1.0, 1.0), t).unwrap(), StateLabel::B);
        assert_eq!(classify_state(&g(1.0, 1.0, 1.0, 1.0), t).unwrap(), StateLabel::C1);
        assert_eq!(classify_state(&g(0.0, 1.0, 1.0, 1.0), t).unwrap(), StateLabel::C2);
        assert_eq!(classify_state(&g(1.0, 1.0, 1.0, 0.0), t).unwrap(), StateLabel::C3);
        assert_eq!(classify_state(&g(0.0, 0.0, 0.0, 0.0), t).unwrap(), StateLabel::Zero);
        let c = 0.2;
        assert_eq!(classify_state(&g(-5.0 * c, 0.0, -4.0 * c, 2.0 * c), t).unwrap(), StateLabel::B);
        assert!(matches!(classify_state(&g(0.0, 1.0, 1.0, 0.0), t), Err(Error::ImpossiblePattern(..))));
    }

    #[test]
    fn achievability_census() {
        let ch = ch_star();
        let plan = PhasePlan::for_channel(&ch).unwrap();
        let sched = plan.schedule(6).unwrap();
        let labels = classify_schedule(&ch, &sched, STATE_REL_TOL).unwrap();
        use StateLabel::*;
        assert_eq!(labels, vec![B, A, C1, B, A, C1]);

        let c = census(&ch, &plan.schedule(300).unwrap(), STATE_REL_TOL).unwrap();
        assert_eq!((c.n_a, c.n_b, c.n_c1, c.n_zero, c.n), (100, 100, 100, 0, 300));
        assert_eq!(min_census_fraction(&c), (CensusSet::A, 1.0 / 3.0));

        let only_b = AfSchedule::new(vec![plan.pair(crate::af_scheme::Phase::One); 9]);
        assert_eq!(census(&ch, &only_b, STATE_REL_TOL).unwrap().n_b, 9);

        let z = census(&ch, &AfSchedule::zero(5), STATE_REL_TOL).unwrap();
        assert_eq!(z.n_zero, 5);
        assert_eq!(z.n_s(), 0);
    }

    #[test]
    fn census_csv() {
        let ch = ch_star();
        let sched = AfSchedule::new(vec![AfPair::new(1.0, 0.0), AfPair::ZERO]);
        let labels = classify_schedule(&ch, &sched, STATE_REL_TOL).unwrap();
        let mut buf = Vec::new();
        write_census_csv(&sched, &labels, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "slot,mu,lambda,state\n1,1.00000000000e0,0.00000000000e0,C1\n2,0.00000000000e0,0.00000000000e0,Zero\n"
        );
    }

    #[test]
    fn constants_reference() {
        let ch = ch_star();
        let k = bound_constants(&ch, &AfAlphabet::new(vec![1.0], vec![0.0]).unwrap());
        assert_eq!(k.m_ij, [[1.0, 4.0], [4.0, 16.0]]);
        assert_eq!(k.m, 16.0);
        assert_eq!(k.n, 5.0);

        let z = bound_constants(&ch, &AfAlphabet::new(vec![0.0], vec![0.0]).unwrap());
        assert_eq!((z.m, z.n), (0.0, 1.0));
    }

    #[test]
    fn constants_scale_quadratically() {
        let ch = ChannelRealization::sample(4, 100).unwrap();
        let plan = PhasePlan::for_channel(&ch).unwrap();
        let a = plan.alphabet();
        let t = 2.5;
        let k = bound_constants(&ch, &a);
        let kt = bound_constants(&ch, &a.scaled(t));
        assert!((kt.m - t * t * k.m).abs() < 1e-12 * kt.m);
        assert!(((kt.n - 1.0) - t * t * (k.n - 1.0)).abs() < 1e-12 * kt.n);
    }

    #[test]
    fn bound_slopes() {
        let k = BoundConstants { m: 2.0, n: 3.0, m_ij: [[2.0; 2]; 2] };
        let third = StateCensus { n_a: 10, n_b: 10, n_c1: 10, n: 30, ..Default::default() };
        let ev = evaluate_bounds(&third, 1e6, &k).unwrap();
        for t in ev.terms() {
            assert!((t.slope_term - 2.0 / 3.0 * 1e6f64.log2()).abs() < 1e-12);
            assert!(t.constant > 0.0);
        }
        assert!(ev.residual_note);

        let no_c = StateCensus { n_a: 20, n_b: 10, n: 30, ..Default::default() };
        let ev = evaluate_bounds(&no_c, 1e6, &k).unwrap();
        assert!((ev.bound1.slope_term - 0.5 * 1e6f64.log2()).abs() < 1e-12);
        assert_eq!(ev.argmin_set, CensusSet::C);
        assert!(evaluate_bounds(&no_c, 0.5, &k).is_err());
    }

    #[test]
    fn min_fraction_examples() {
        let c = StateCensus { n_a: 9, n: 9, ..Default::default() };
        assert_eq!(min_census_fraction(&c).1, 0.0);
        let c = StateCensus { n_a: 3, n_b: 3, n_c2: 3, n: 9, ..Default::default() };
        assert_eq!(min_census_fraction(&c).1, 1.0 / 3.0);
    }

    #[test]
    fn pigeonhole_exhaustive_small_n() {
        for n in 1..=8u32 {
            let total = 6usize.pow(n);
            for code in 0..total {
                let mut x = code;
                let labels: Vec<StateLabel> = (0..n)
                    .map(|_| {
                        let l = StateLabel::ALL[x % 6];
                        x /= 6;
                        l
                    })
                    .collect();
                let c = StateCensus::from_labels(&labels);
                assert!(c.is_consistent());
                let (_, f) = min_census_fraction(&c);
                assert!(f <= 1.0 / 3.0 + 1e-15, "{labels:?}");
                if c.n_zero > 0 {
                    assert!(f < 1.0 / 3.0);
                }
            }
        }
    }

    #[test]
    fn entropy_values() {
        let h1 = gaussian_entropy(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((h1 - 0.5 * (2.0 * PI * E).log2()).abs() < 1e-14);
        assert!((h1 - 2.0471).abs() < 1e-4);
        let h2 = gaussian_entropy(&(DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert!((h2 - ((2.0 * PI * E).log2() + 1.0)).abs() < 1e-13);
        let t: f64 = 3.7;
        let ht = gaussian_entropy(&DMatrix::from_element(1, 1, t * t)).unwrap();
        assert!((ht - h1 - t.log2()).abs() < 1e-13);

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(gaussian_entropy(&singular), Err(Error::SingularCovariance(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(gaussian_entropy(&asym).is_err());
    }

    #[test]
    fn lemma2_scalar_case() {
        let one = DMatrix::identity(1, 1);
        let inst = Lemma2Instance {
            m: one.clone(),
            mp: one.clone(),
            cov_x: one.clone(),
            cov_yz: DMatrix::identity(2, 2),
        };
        let r = check_lemma2(&inst, 1e-9).unwrap();
        assert!(r.lhs.abs() < 1e-14);
        assert!((r.rhs - 0.5).abs() < 1e-14);
        assert!(r.holds);

        let same = Lemma2Instance { cov_yz: DMatrix::from_element(2, 2, 1.0), ..inst };
        assert!(matches!(check_lemma2(&same, 1e-9), Err(Error::SingularCovariance(_))));
    }

    #[test]
    fn lemma2_rejects_singular_m() {
        let inst = Lemma2Instance {
            m: DMatrix::zeros(1, 1),
            mp: DMatrix::identity(1, 1),
            cov_x: DMatrix::identity(1, 1),
            cov_yz: DMatrix::identity(2, 2),
        };
        assert!(matches!(check_lemma2(&inst, 1e-9), Err(Error::SingularMatrix(_))));
    }

    proptest! {
        #[test]
        fn lemma2_random(seed in any::<u64>(), dim in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_lemma2_instance(&mut rng, dim);
            let r = check_lemma2(&inst, 1e-9).unwrap();
            prop_assert!(r.holds, "{:?}", r);
        }

        #[test]
        fn plan_alphabet_never_impossible(seed in any::<u64>()) {
            let ch = ChannelRealization::sample(seed, 100).unwrap();
            let plan = PhasePlan::for_channel(&ch).unwrap();
            for p in plan.alphabet().pairs() {
                let l = classify_state(&ch.end_to_end(p.mu, p.lambda), STATE_REL_TOL);
                prop_assert!(l.is_ok());
                prop_assert_ne!(l.unwrap(), StateLabel::Zero);
            }
        }
    }
}
