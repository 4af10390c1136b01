//! The quadratic-form-aware Gram–Schmidt lemma and the eigenvalue comparison
//! lemma, with randomized trial generators for both.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{CheckRecord, ExperimentReport};

/// `a_1 = 1`, `a_s = 1 + ∑_{i<s} a_i²`.
pub fn a_sequence(k: usize) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(k);
    for _ in 0..k {
        let next = 1.0 + a.iter().map(|x| x * x).sum::<f64>();
        a.push(next);
    }
    a
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaGSResult {
    pub basis: Vec<Vec<f64>>,
    pub q_values: Vec<f64>,
    pub a: Vec<f64>,
    /// `λ_i + 14 k a_k max{λ_k, 1} c`.
    pub bound: Vec<f64>,
    pub verified: Vec<bool>,
    /// Largest entry of `|⟨F_i, F_j⟩ − δ_ij|`.
    pub orthonormality_defect: f64,
    /// Whether the inputs met the lemma's hypotheses.
    pub hypothesis_met: bool,
    /// Human-readable hypothesis violations.
    pub violations: Vec<String>,
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormalises `vectors` in the order given, following the lemma's
/// construction, and evaluates `q` on the result. Hypothesis violations are
/// recorded instead of rejected.
pub fn q_gram_schmidt_unchecked(
    vectors: &[Vec<f64>],
    inner: &dyn Fn(&[f64], &[f64]) -> f64,
    q: &dyn Fn(&[f64]) -> f64,
    c: f64,
    lambdas: &[f64],
) -> Result<LemmaGSResult> {
    let k = vectors.len();
    if k == 0 || lambdas.len() != k {
        return Err(Error::InvalidParameter(format!(
            "{k} vectors but {} eigenvalue levels",
            lambdas.len()
        )));
    }
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!("c must be nonnegative, got {c}")));
    }
    let a = a_sequence(k);
    let mut violations = Vec::new();
    if lambdas.windows(2).any(|w| w[1] < w[0]) || lambdas.iter().any(|&l| l < 0.0) {
        violations.push("levels λ_i must be nonnegative and nondecreasing".to_string());
    }
    if c * a[k - 1] > 0.25 {
        violations.push(format!("c·a_k = {} exceeds 1/4", c * a[k - 1]));
    }
    let slack = 1e-12 * (1.0 + c);
    for i in 0..k {
        for j in i..k {
            let g = inner(&vectors[i], &vectors[j]);
            let delta = if i == j { 1.0 } else { 0.0 };
            if (g - delta).abs() > c + slack {
                violations.push(format!(
                    "pair ({}, {}): |⟨f_i, f_j⟩ − δ| = {:e} > c = {:e}",
                    i + 1,
                    j + 1,
                    (g - delta).abs(),
                    c
                ));
            }
        }
        let qi = q(&vectors[i]);
        if qi > lambdas[i] + c + slack * (1.0 + lambdas[i].abs()) {
            violations.push(format!(
                "vector {}: q(f_i) = {qi:e} > λ_i + c = {:e}",
                i + 1,
                lambdas[i] + c
            ));
        }
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (i, f) in vectors.iter().enumerate() {
        let mut h = f.clone();
        // Second pass only removes rounding residue; in exact arithmetic the
        // projections it subtracts vanish.
        for _ in 0..2 {
            for fj in &basis {
                let p = inner(fj, &h);
                axpy(-p, fj, &mut h);
            }
        }
        let norm = inner(&h, &h).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Precondition(format!(
                "vector {} is linearly dependent on its predecessors",
                i + 1
            )));
        }
        h.iter_mut().for_each(|v| *v /= norm);
        basis.push(h);
    }
    let mut defect = 0.0f64;
    for i in 0..k {
        for j in i..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((inner(&basis[i], &basis[j]) - delta).abs());
        }
    }
    let q_values: Vec<f64> = basis.iter().map(|b| q(b)).collect();
    let extra = 14.0 * k as f64 * a[k - 1] * lambdas[k - 1].max(1.0) * c;
    let bound: Vec<f64> = lambdas.iter().map(|l| l + extra).collect();
    let verified = q_values
        .iter()
        .zip(&bound)
        .map(|(qv, b)| *qv <= b + 1e-12 * (1.0 + b.abs()))
        .collect();
    Ok(LemmaGSResult {
        basis,
        q_values,
        a,
        bound,
        verified,
        orthonormality_defect: defect,
        hypothesis_met: violations.is_empty(),
        violations,
    })
}

/// As [`q_gram_schmidt_unchecked`], rejecting inputs that violate the
/// lemma's hypotheses.
pub fn q_gram_schmidt(
    vectors: &[Vec<f64>],
    inner: &dyn Fn(&[f64], &[f64]) -> f64,
    q: &dyn Fn(&[f64]) -> f64,
    c: f64,
    lambdas: &[f64],
) -> Result<LemmaGSResult> {
    let res = q_gram_schmidt_unchecked(vectors, inner, q, c, lambdas)?;
    if let Some(v) = res.violations.first() {
        return Err(Error::Precondition(v.clone()));
    }
    Ok(res)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaCompResult {
    /// `t_1, …, t_{k+1}`.
    pub t: Vec<f64>,
    /// `c_1, …, c_{k+1}`.
    pub c: Vec<f64>,
    /// `μ_i ≤ λ_i + c_{k+1} η` for `i ≤ k`.
    pub verified: Vec<bool>,
    /// `η ≤ 1/(2 c_k)`.
    pub hypothesis_met: bool,
}

impl LemmaCompResult {
    pub fn t_k(&self) -> f64 {
        self.t[self.t.len() - 2]
    }
}

/// `t_j` and `c_j` for `j ≤ k + 1` and the lemma's per-index conclusion.
///
/// `μ_i⁺` is the next strictly larger value among the supplied `mu`; an
/// index with no larger value contributes nothing to `t_j`.
pub fn eigenvalue_comparison(
    mu: &[f64],
    lambdas: &[f64],
    eta: f64,
    k: usize,
) -> Result<LemmaCompResult> {
    if k == 0 || mu.len() < k + 1 || lambdas.len() < k {
        return Err(Error::InvalidParameter(format!(
            "k = {k} needs k+1 values of μ and k levels λ, got {} and {}",
            mu.len(),
            lambdas.len()
        )));
    }
    if mu.windows(2).any(|w| w[1] < w[0]) || mu[0] <= 0.0 {
        return Err(Error::InvalidParameter("μ must be positive and nondecreasing".into()));
    }
    for i in 0..k {
        if !(lambdas[i] > 0.0 && lambdas[i] <= mu[i]) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < λ_{0} ≤ μ_{0}, got λ = {1}, μ = {2}",
                i + 1,
                lambdas[i],
                mu[i]
            )));
        }
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("η must be nonnegative, got {eta}")));
    }
    let plus = |i: usize| mu.iter().copied().find(|&m| m > mu[i]);
    let mut t = Vec::with_capacity(k + 1);
    let mut c = Vec::with_capacity(k + 1);
    for j in 1..=k + 1 {
        let tj = (0..j)
            .filter_map(|i| plus(i).map(|p| 1.0 / (p - mu[i])))
            .fold(1.0f64, f64::max);
        let mj = mu[j - 1];
        t.push(tj);
        c.push((8.0 * tj * mj).powi(j as i32) / mj);
    }
    let hypothesis_met = eta <= 1.0 / (2.0 * c[k - 1]);
    let ck1 = c[k];
    let verified = (0..k)
        .map(|i| mu[i] <= lambdas[i] + ck1 * eta + 1e-12 * mu[i])
        .collect();
    Ok(LemmaCompResult {
        t,
        c,
        verified,
        hypothesis_met,
    })
}

/// Result of one randomized lemma trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub dim: usize,
    pub k: usize,
    pub in_hypothesis: bool,
    /// Conclusion of the lemma held (meaningful only in hypothesis).
    pub holds: bool,
    /// Smallest `bound − value` over the indices.
    pub slack: f64,
}

fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

/// One trial of the Gram–Schmidt lemma: random positive semidefinite `q`, a
/// random inner product, and a perturbed orthonormal family.
pub fn gram_schmidt_trial(seed: u64) -> TrialOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=8usize);
    let a = a_sequence(k);
    // Inner product ⟨u, v⟩ = uᵀ G v with G symmetric positive definite.
    let b = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-0.5..0.5));
    let g = b.transpose() * &b + DMatrix::identity(k, k);
    let u = random_orthonormal(&mut rng, k);
    let spectrum = DVector::from_fn(k, |_, _| rng.gen_range(0.0..10.0));
    let qm = &u * DMatrix::from_diagonal(&spectrum) * u.transpose();
    let inner = |x: &[f64], y: &[f64]| {
        let (x, y) = (DVector::from_column_slice(x), DVector::from_column_slice(y));
        x.dot(&(&g * y))
    };
    let qf = |x: &[f64]| {
        let x = DVector::from_column_slice(x);
        x.dot(&(&qm * &x))
    };
    // A G-orthonormal basis: columns of L^{-T} Q for G = L Lᵀ.
    let l = g.clone().cholesky().expect("spd").l();
    let e = l.transpose().try_inverse().expect("invertible") * random_orthonormal(&mut rng, k);
    let c = rng.gen_range(0.05..1.0) / (4.0 * a[k - 1]);
    let s = c * rng.gen_range(0.0..0.45);
    let vectors: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let noise = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            let noise = &noise / inner(noise.as_slice(), noise.as_slice()).sqrt().max(1e-300);
            (e.column(i) + noise * s).as_slice().to_vec()
        })
        .collect();
    let mut lambdas = Vec::with_capacity(k);
    let mut run = 0.0f64;
    for v in &vectors {
        run = run.max(qf(v) - c * rng.gen_range(0.0..1.0)).max(0.0);
        lambdas.push(run);
    }
    match q_gram_schmidt_unchecked(&vectors, &inner, &qf, c, &lambdas) {
        Ok(r) => TrialOutcome {
            dim: k,
            k,
            in_hypothesis: r.hypothesis_met,
            holds: r.verified.iter().all(|&v| v) && r.orthonormality_defect <= 1e-10,
            slack: r
                .q_values
                .iter()
                .zip(&r.bound)
                .map(|(q, b)| b - q)
                .fold(f64::INFINITY, f64::min),
        },
        Err(_) => TrialOutcome {
            dim: k,
            k,
            in_hypothesis: false,
            holds: false,
            slack: f64::NAN,
        },
    }
}

/// One trial of the comparison lemma: `q` with known spectrum `μ` in a random
/// eigenbasis, and an orthonormal family of slightly mixed eigenvectors.
pub fn comparison_trial(seed: u64) -> TrialOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(2..=8usize);
    let k = rng.gen_range(1..dim);
    let mut mu: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..5.0)).collect();
    mu.sort_by(f64::total_cmp);
    for i in 1..dim {
        if rng.gen_bool(0.15) {
            mu[i] = mu[i - 1];
        }
    }
    let h = random_orthonormal(&mut rng, dim);
    let qm = &h * DMatrix::from_diagonal(&DVector::from_vec(mu.clone())) * h.transpose();
    let qf = |x: &DVector<f64>| x.dot(&(&qm * x));
    // c_k does not depend on λ or η; get it from a trivial evaluation.
    let ck = eigenvalue_comparison(&mu, &mu[..k], 0.0, k).expect("valid").c[k - 1];
    let eta = rng.gen_range(0.01..1.0) / (2.0 * ck);
    let s = (eta / mu[dim - 1]).sqrt() * rng.gen_range(0.0..0.7);
    let mixed = DMatrix::from_fn(dim, k, |r, c| {
        h[(r, c)] + s * rng.gen_range(-1.0..1.0) / (dim as f64).sqrt()
    });
    let f = mixed.qr().q();
    let mut lambdas = Vec::with_capacity(k);
    let mut in_hypothesis = true;
    for i in 0..k {
        let qi = qf(&f.column(i).into_owned());
        let v = rng.gen_range(0.0..1.0);
        let li = if qi <= mu[i] { qi - eta * v } else { mu[i] - eta * v };
        let li = li.min(mu[i]);
        if !(li > 0.0 && qi <= li + eta) {
            in_hypothesis = false;
        }
        lambdas.push(li.max(f64::MIN_POSITIVE));
    }
    match eigenvalue_comparison(&mu, &lambdas, eta, k) {
        Ok(r) => {
            let ck1 = r.c[k];
            TrialOutcome {
                dim,
                k,
                in_hypothesis: in_hypothesis && r.hypothesis_met,
                holds: r.verified.iter().all(|&v| v),
                slack: (0..k)
                    .map(|i| lambdas[i] + ck1 * eta - mu[i])
                    .fold(f64::INFINITY, f64::min),
            }
        }
        Err(_) => TrialOutcome {
            dim,
            k,
            in_hypothesis: false,
            holds: false,
            slack: f64::NAN,
        },
    }
}

/// Runs `trials` randomized trials of each lemma with per-trial seeds drawn
/// from `root_seed`, plus the hand-computed constants.
pub fn lemma_suite(root_seed: u64, trials: usize) -> ExperimentReport {
    let mut seeds = ChaCha8Rng::seed_from_u64(root_seed);
    let mut report = ExperimentReport::new("lemma_suite");
    let a = a_sequence(4);
    report.push(CheckRecord::le("a_4_equals_42", (a[3] - 42.0).abs(), 0.0, 0.0));
    let cmp = eigenvalue_comparison(&[1.0, 2.0, 4.0], &[1.0, 2.0], 0.0, 2).expect("valid input");
    report.push(CheckRecord::le("c_2_equals_128", (cmp.c[1] - 128.0).abs(), 0.0, 0.0));
    report.push(CheckRecord::le("t_2_equals_1", (cmp.t_k() - 1.0).abs(), 0.0, 0.0));

    for (name, trial) in [
        ("gram_schmidt", gram_schmidt_trial as fn(u64) -> TrialOutcome),
        ("comparison", comparison_trial as fn(u64) -> TrialOutcome),
    ] {
        let outcomes: Vec<TrialOutcome> = (0..trials).map(|_| trial(seeds.gen())).collect();
        let in_hyp: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.in_hypothesis).collect();
        let held = in_hyp.iter().filter(|o| o.holds).count();
        let min_slack = in_hyp.iter().map(|o| o.slack).fold(f64::INFINITY, f64::min);
        report.value(format!("{name}_trials"), trials as f64);
        report.value(format!("{name}_in_hypothesis"), in_hyp.len() as f64);
        report.value(format!("{name}_held"), held as f64);
        report.value(format!("{name}_min_slack"), min_slack);
        // Fraction of in-hypothesis trials that failed must be zero.
        report.push(
            CheckRecord::le(
                format!("{name}_all_in_hypothesis_trials_hold"),
                (in_hyp.len() - held) as f64,
                0.0,
                0.0,
            )
            .with("in_hypothesis", in_hyp.len() as f64),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recurrence_values() {
        assert_eq!(a_sequence(4), vec![1.0, 2.0, 6.0, 42.0]);
    }

    #[test]
    fn comparison_hand_case() {
        let r = eigenvalue_comparison(&[1.0, 2.0, 4.0], &[1.0, 2.0], 0.0, 2).unwrap();
        assert_eq!(r.t_k(), 1.0);
        assert_eq!(r.c[1], 128.0);
        assert_eq!(r.c[0], 8.0);
        assert!(r.hypothesis_met);
        assert!(r.verified.iter().all(|&v| v));
        let far = eigenvalue_comparison(&[1.0, 2.0, 4.0], &[1.0, 2.0], 1.0, 2).unwrap();
        assert!(!far.hypothesis_met);
        assert!(eigenvalue_comparison(&[1.0, 2.0], &[1.5, 2.0], 0.0, 1).is_err());
    }

    #[test]
    fn constants_grow_with_k_and_shrink_with_gaps() {
        let mu = [1.0, 1.5, 2.5, 3.0, 5.0];
        let r = eigenvalue_comparison(&mu, &mu[..4], 0.0, 4).unwrap();
        assert!(r.c.windows(2).all(|w| w[1] > w[0]));
        let wide = [1.0, 3.0, 6.0, 9.0, 15.0];
        let rw = eigenvalue_comparison(&wide, &wide[..4], 0.0, 4).unwrap();
        assert!(rw.t_k() <= r.t_k());
    }

    #[test]
    fn identity_case_of_gram_schmidt() {
        let vectors = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let diag = [0.5, 2.0, 3.0];
        let inner = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let q = |x: &[f64]| x.iter().zip(&diag).map(|(a, d)| d * a * a).sum::<f64>();
        let r = q_gram_schmidt(&vectors, &inner, &q, 0.0, &[0.5, 2.0, 3.0]).unwrap();
        assert_eq!(r.basis, vectors);
        assert_eq!(r.q_values, vec![0.5, 2.0, 3.0]);
        assert!(r.verified.iter().all(|&v| v));
    }

    #[test]
    fn violations_name_the_pair() {
        let vectors = vec![vec![1.0, 0.0], vec![0.3, 1.0]];
        let inner = |x: &[f64], y: &[f64]| x[0] * y[0] + x[1] * y[1];
        let q = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        match q_gram_schmidt(&vectors, &inner, &q, 0.01, &[2.0, 2.0]) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("(1, 2)"), "{msg}"),
            other => panic!("expected rejection, got {other:?}"),
        }
        let r = q_gram_schmidt_unchecked(&vectors, &inner, &q, 0.01, &[2.0, 2.0]).unwrap();
        assert!(!r.hypothesis_met);
        assert!(r.orthonormality_defect < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gram_schmidt_lemma_holds(seed in any::<u64>()) {
            let o = gram_schmidt_trial(seed);
            if o.in_hypothesis {
                prop_assert!(o.holds, "{o:?}");
            }
        }

        #[test]
        fn comparison_lemma_holds(seed in any::<u64>()) {
            let o = comparison_trial(seed);
            if o.in_hypothesis {
                prop_assert!(o.holds, "{o:?}");
            }
        }
    }

    #[test]
    fn suite_runs_and_passes() {
        let r = lemma_suite(7, 200);
        assert!(r.all_passed(), "{r:?}");
        assert!(r.values["gram_schmidt_in_hypothesis"] > 150.0);
        assert!(r.values["comparison_in_hypothesis"] > 150.0);
    }
}
