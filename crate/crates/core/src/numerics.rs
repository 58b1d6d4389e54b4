//! Softmax probability model, multinomial log-loss and its derivatives.
//!
//! Two derivative sets are provided: the per-class ("plain") first and
//! second derivatives used by mart and logitboost, and the derivatives under
//! the sum-to-zero constraint with an explicit base class used by the abc
//! variants. Both are computed from probabilities only.

use thiserror::Error;

/// Probabilities are kept inside `[P_MIN, 1 - P_MIN]`.
pub const P_MIN: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("non-finite score F[{sample}][{class}] = {value}")]
    NonFiniteScore { sample: usize, class: usize, value: f64 },
    #[error("target class {0} equals the base class")]
    TargetIsBase(usize),
    #[error("probability vector {0:?} is not on the simplex")]
    OffSimplex([f64; 3]),
    #[error("base class {base} out of range for {n_classes} classes")]
    BadClass { base: usize, n_classes: usize },
}

/// Scores `F` and probabilities `p`, both `n_samples x n_classes`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreState {
    pub n_samples: usize,
    pub n_classes: usize,
    pub f: Vec<f64>,
    pub p: Vec<f64>,
}

impl ScoreState {
    /// `F = 0`, `p = 1/K`.
    pub fn new(n_samples: usize, n_classes: usize) -> Self {
        let len = n_samples * n_classes;
        ScoreState {
            n_samples,
            n_classes,
            f: vec![0.0; len],
            p: vec![1.0 / n_classes as f64; len],
        }
    }

    pub fn from_scores(n_classes: usize, f: Vec<f64>) -> Result<Self, NumericsError> {
        assert!(n_classes > 0 && f.len().is_multiple_of(n_classes), "score matrix shape");
        let mut state = ScoreState {
            n_samples: f.len() / n_classes,
            n_classes,
            p: vec![0.0; f.len()],
            f,
        };
        state.softmax_update()?;
        Ok(state)
    }

    #[inline]
    pub fn score(&self, i: usize, k: usize) -> f64 {
        self.f[i * self.n_classes + k]
    }

    #[inline]
    pub fn prob(&self, i: usize, k: usize) -> f64 {
        self.p[i * self.n_classes + k]
    }

    pub fn score_row(&self, i: usize) -> &[f64] {
        &self.f[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn prob_row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n_classes..(i + 1) * self.n_classes]
    }

    /// Recomputes `p` from `F`.
    pub fn softmax_update(&mut self) -> Result<(), NumericsError> {
        let k = self.n_classes;
        for (i, (f, p)) in self.f.chunks_exact(k).zip(self.p.chunks_exact_mut(k)).enumerate() {
            if let Some(c) = f.iter().position(|v| !v.is_finite()) {
                return Err(NumericsError::NonFiniteScore { sample: i, class: c, value: f[c] });
            }
            softmax_row(f, p);
        }
        Ok(())
    }

    /// `sum_i -log p[i, y_i]`.
    pub fn neg_log_likelihood(&self, labels: &[u32]) -> f64 {
        neg_log_likelihood(&self.p, self.n_classes, labels)
    }

    /// Number of samples whose highest score is not their label.
    pub fn misclassified(&self, labels: &[u32]) -> usize {
        labels
            .iter()
            .enumerate()
            .filter(|&(i, &y)| argmax(self.score_row(i)) != y as usize)
            .count()
    }
}

/// Guarded softmax of one row: max-shifted, clamped to `[P_MIN, 1 - P_MIN]`,
/// then renormalized.
pub fn softmax_row(f: &[f64], p: &mut [f64]) {
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (pk, &fk) in p.iter_mut().zip(f) {
        *pk = (fk - max).exp();
        sum += *pk;
    }
    let mut clamped = 0.0;
    for pk in p.iter_mut() {
        *pk = (*pk / sum).clamp(P_MIN, 1.0 - P_MIN);
        clamped += *pk;
    }
    for pk in p.iter_mut() {
        *pk /= clamped;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

pub fn neg_log_likelihood(p: &[f64], n_classes: usize, labels: &[u32]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -p[i * n_classes + y as usize].ln())
        .sum()
}

/// First and second derivative of each sample's loss w.r.t. `F[i, k]`:
/// `g = -(r - p)`, `h = p (1 - p)`.
pub fn plain_derivatives(state: &ScoreState, labels: &[u32], k: usize) -> (Vec<f64>, Vec<f64>) {
    let n = state.n_samples;
    let mut g = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for (i, &y) in labels.iter().enumerate() {
        let p = state.prob(i, k);
        let r = indicator(y, k);
        g.push(-(r - p));
        h.push(p * (1.0 - p));
    }
    (g, h)
}

/// Derivatives w.r.t. `F[i, k]` when `F[i, base] = -sum_{s != base} F[i, s]`.
pub fn abc_derivatives(
    state: &ScoreState,
    labels: &[u32],
    k: usize,
    base: usize,
) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
    if k == base {
        return Err(NumericsError::TargetIsBase(k));
    }
    if base >= state.n_classes {
        return Err(NumericsError::BadClass { base, n_classes: state.n_classes });
    }
    let n = state.n_samples;
    let mut g = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for (i, &y) in labels.iter().enumerate() {
        let pb = state.prob(i, base);
        let pk = state.prob(i, k);
        g.push((indicator(y, base) - pb) - (indicator(y, k) - pk));
        h.push(pb * (1.0 - pb) + pk * (1.0 - pk) + 2.0 * pb * pk);
    }
    Ok((g, h))
}

#[inline]
fn indicator(label: u32, k: usize) -> f64 {
    if label as usize == k {
        1.0
    } else {
        0.0
    }
}

/// Determinant of the 2x2 Hessian of one sample's loss for `K = 3` under the
/// sum-to-zero constraint with base class `base`.
///
/// Diagnostic only: the value equals `9 p0 p1 p2` for every choice of base.
pub fn hessian_det_k3(p: [f64; 3], base: usize) -> Result<f64, NumericsError> {
    const SIMPLEX_TOL: f64 = 1e-9;
    if base > 2 {
        return Err(NumericsError::BadClass { base, n_classes: 3 });
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&v| v.is_nan() || v < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(NumericsError::OffSimplex(p));
    }
    let p = p.map(|v| v.clamp(0.0, 1.0));
    let pb = p[base];
    let (a, c) = match base {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let diag = |k: usize| pb * (1.0 - pb) + p[k] * (1.0 - p[k]) + 2.0 * pb * p[k];
    // (e_a - e_b)' H (e_c - e_b) with H = diag(p) - p p'
    let off = -p[a] * p[c] + p[a] * pb + pb * p[c] + pb * (1.0 - pb);
    Ok(diag(a) * diag(c) - off * off)
}

/// Expanded polynomial form of [`hessian_det_k3`] written for base 0.
pub fn hessian_det_k3_closed_form(p: [f64; 3]) -> f64 {
    let [p0, p1, p2] = p;
    p0 * p1 + p0 * p2 + p1 * p2
        - p0 * p1 * p1
        - p0 * p2 * p2
        - p1 * p2 * p2
        - p2 * p1 * p1
        - p1 * p0 * p0
        - p2 * p0 * p0
        + 6.0 * p0 * p1 * p2
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_start() {
        let s = ScoreState::new(4, 3);
        assert!(s.p.iter().all(|&p| p == 1.0 / 3.0));
        let mut t = ScoreState::from_scores(3, vec![2.5; 3]).unwrap();
        for &p in &t.p {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        t.f[1] = f64::NAN;
        assert!(matches!(t.softmax_update(), Err(NumericsError::NonFiniteScore { class: 1, .. })));
    }

    #[test]
    fn extreme_scores_stay_finite() {
        let s = ScoreState::from_scores(3, vec![1000.0, 0.0, 0.0]).unwrap();
        assert!(s.p.iter().all(|p| p.is_finite() && *p > 0.0 && *p < 1.0));
        assert!((s.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.neg_log_likelihood(&[0]) < 1e-14);
    }

    #[test]
    fn softmax_matches_high_precision_reference() {
        // reference rows evaluated with 50-digit arithmetic
        let cases: [([f64; 3], [f64; 3]); 6] = [
            ([1000.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ([1.0, 2.0, 3.0], [0.09003057317038046, 0.24472847105479764, 0.6652409557748219]),
            ([-5.0, 0.0, 5.0], [4.509404123635488e-05, 0.006692549116589287, 0.9932623568421743]),
            ([30.0, -30.0, 0.0], [0.9999999999999064, 8.7565107626957e-27, 9.357622968839299e-14]),
            ([0.1, 0.2, -0.3], [0.3602966152405401, 0.3981893410449361, 0.24151404371452384]),
            ([40.0, 39.0, -40.0], [0.7310585786300049, 0.2689414213699951, 1.3194520902366609e-35]),
        ];
        for (f, want) in cases {
            let s = ScoreState::from_scores(3, f.to_vec()).unwrap();
            for (got, want) in s.p.iter().zip(want) {
                // clamping moves tiny entries up to P_MIN
                assert!((got - want).abs() <= 3.0 * P_MIN, "{f:?}: {got} vs {want}");
            }
            assert!((s.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_examples() {
        let s = ScoreState::new(10_000, 10);
        let labels: Vec<u32> = (0..10_000).map(|i| (i % 10) as u32).collect();
        assert!((s.neg_log_likelihood(&labels) - 23025.850929940458).abs() < 1e-6);

        let p = vec![0.5, 0.25, 0.25, 0.1, 0.6, 0.3];
        let v = neg_log_likelihood(&p, 3, &[0, 2]);
        assert!((v - 1.8971199848858813).abs() < 1e-12);

        let p = vec![1.0 - 1e-15, 5e-16, 5e-16];
        let v = neg_log_likelihood(&p, 3, &[0]);
        assert!((v - 1e-15).abs() < 1e-16);
    }

    #[test]
    fn plain_derivative_examples() {
        let s = ScoreState::new(2, 3);
        let (g, h) = plain_derivatives(&s, &[0, 1], 0);
        assert!((g[0] + 2.0 / 3.0).abs() < 1e-15 && (g[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((h[0] - 2.0 / 9.0).abs() < 1e-15 && (h[1] - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn abc_derivative_examples() {
        let s = ScoreState::new(2, 3);
        // sample 0 has label == base, sample 1 belongs to neither k nor base
        let (g, h) = abc_derivatives(&s, &[0, 2], 1, 0).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!(g[1].abs() < 1e-15);
        assert!((h[0] - 2.0 / 3.0).abs() < 1e-15 && (h[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(abc_derivatives(&s, &[0, 2], 1, 1), Err(NumericsError::TargetIsBase(1)));
    }

    #[test]
    fn hessian_examples() {
        let u = [1.0 / 3.0; 3];
        for b in 0..3 {
            assert!((hessian_det_k3(u, b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((hessian_det_k3_closed_form(u) - 1.0 / 3.0).abs() < 1e-15);
        assert!(hessian_det_k3([1.0, 0.0, 0.0], 0).unwrap().abs() < 1e-15);
        assert!(hessian_det_k3([0.5, 0.6, 0.0], 0).is_err());
        assert!(hessian_det_k3([1.2, -0.2, 0.0], 0).is_err());
    }

    fn state_strategy() -> impl Strategy<Value = (ScoreState, Vec<u32>)> {
        (3usize..7, 1usize..6).prop_flat_map(|(k, n)| {
            (
                proptest::collection::vec(-5.0f64..5.0, n * k),
                proptest::collection::vec(0u32..k as u32, n),
            )
                .prop_map(move |(f, y)| (ScoreState::from_scores(k, f).unwrap(), y))
        })
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(f in proptest::collection::vec(-30.0f64..30.0, 4), c in -100.0f64..100.0) {
            let a = ScoreState::from_scores(4, f.clone()).unwrap();
            let b = ScoreState::from_scores(4, f.iter().map(|v| v + c).collect()).unwrap();
            for (x, y) in a.p.iter().zip(&b.p) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn plain_gradients_sum_to_zero((s, y) in state_strategy()) {
            let k = s.n_classes;
            let grads: Vec<Vec<f64>> = (0..k).map(|c| plain_derivatives(&s, &y, c).0).collect();
            for i in 0..s.n_samples {
                let total: f64 = grads.iter().map(|g| g[i]).sum();
                prop_assert!(total.abs() < 1e-12);
            }
        }

        #[test]
        fn abc_gradient_antisymmetric((s, y) in state_strategy(), a in 0usize..3, b in 0usize..3) {
            prop_assume!(a != b);
            let (g_ab, _) = abc_derivatives(&s, &y, a, b).unwrap();
            let (g_ba, _) = abc_derivatives(&s, &y, b, a).unwrap();
            for (x, z) in g_ab.iter().zip(&g_ba) {
                prop_assert!((x + z).abs() < 1e-12);
            }
        }

        #[test]
        fn hessian_det_permutation_invariant(a in 0.001f64..1.0, b in 0.001f64..1.0, c in 0.001f64..1.0) {
            let s = a + b + c;
            let p = [a / s, b / s, c / s];
            let d = hessian_det_k3(p, 0).unwrap();
            for q in [[p[1], p[0], p[2]], [p[2], p[1], p[0]], [p[0], p[2], p[1]]] {
                for base in 0..3 {
                    prop_assert!((hessian_det_k3(q, base).unwrap() - d).abs() < 1e-12);
                }
            }
        }
    }
}
