//! Ground-truth feature maps, perspective construction, and the
//! linear-algebraic quantities controlling what a set of perspectives can
//! reveal: the stacked transformation's smallest nonzero singular value, the
//! reward mass hidden in its kernel, and an upper bound on the feature
//! polytope diameter.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::linalg::{self, Matrix};
use crate::lp::{self, LpError};
use crate::math;
use crate::mdp::TabularMdp;

/// Relative singular-value cutoff for numerical rank.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PerspectiveError {
    /// The stacked transformation matrix is identically zero.
    DegenerateStack,
    DimensionMismatch,
    EmptySet,
}

impl fmt::Display for PerspectiveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerspectiveError::DegenerateStack => write!(f, "stacked perspective matrix is zero"),
            PerspectiveError::DimensionMismatch => write!(f, "dimension mismatch"),
            PerspectiveError::EmptySet => write!(f, "perspective set is empty"),
        }
    }
}

impl core::error::Error for PerspectiveError {}

/// Linear map from occupancies to feature expectations: `Psi = F mu`,
/// stored as a dense `feature_dim x (n_states * n_actions)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    f: Matrix,
}

impl FeatureMap {
    pub fn new(f: Matrix) -> Self {
        Self { f }
    }

    /// Indicator features for a grid world: the column of `(s, a)` is the
    /// one-hot of the object type at `s` (zero for empty cells), identical
    /// across actions.
    pub fn indicator(mdp: &TabularMdp, object_types: usize, objects: &[(usize, usize)]) -> Self {
        let mut f = Matrix::zeros(object_types, mdp.n_pairs());
        for &(cell, ty) in objects {
            for a in 0..mdp.n_actions() {
                f[(ty, mdp.pair_index(cell, a))] = 1.0;
            }
        }
        Self { f }
    }

    pub fn feature_dim(&self) -> usize {
        self.f.rows()
    }

    pub fn n_pairs(&self) -> usize {
        self.f.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.f
    }

    /// Feature expectations `F mu`.
    pub fn psi(&self, mu: &[f64]) -> Vec<f64> {
        self.f.matvec(mu)
    }

    /// Feature vector of a single state-action pair.
    pub fn column(&self, pair: usize) -> Vec<f64> {
        (0..self.f.rows()).map(|j| self.f[(j, pair)]).collect()
    }
}

/// How a perspective was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstructionTag {
    Basis,
    DuplicatedBasis,
    RandomThresholded,
    RandomUniform,
    Custom,
}

/// A linear observation channel `A` mapping ground-truth feature space to an
/// observation space.
#[derive(Debug, Clone, PartialEq)]
pub struct Perspective {
    matrix: Matrix,
    label: String,
    tag: ConstructionTag,
}

impl Perspective {
    pub fn new(matrix: Matrix, label: String, tag: ConstructionTag) -> Self {
        assert!(matrix.rows() >= 1, "perspective must have at least one output row");
        Self { matrix, label, tag }
    }

    /// Single-row perspective from a vector.
    pub fn from_row(row: &[f64], label: String, tag: ConstructionTag) -> Self {
        Self::new(Matrix::from_rows(&[row]), label, tag)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn tag(&self) -> ConstructionTag {
        self.tag
    }

    /// Observation of a feature vector through this perspective: `A psi`.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        self.matrix.matvec(psi)
    }
}

/// A finite family of perspectives over a common feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveSet {
    perspectives: Vec<Perspective>,
    feature_dim: usize,
}

impl PerspectiveSet {
    pub fn new(perspectives: Vec<Perspective>) -> Result<Self, PerspectiveError> {
        let feature_dim = perspectives.first().ok_or(PerspectiveError::EmptySet)?.feature_dim();
        if perspectives.iter().any(|p| p.feature_dim() != feature_dim) {
            return Err(PerspectiveError::DimensionMismatch);
        }
        Ok(Self { perspectives, feature_dim })
    }

    pub fn len(&self) -> usize {
        self.perspectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perspectives.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn get(&self, idx: usize) -> &Perspective {
        &self.perspectives[idx]
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Perspective> {
        self.perspectives.iter()
    }

    /// Row-stack of all transformation matrices.
    pub fn stacked(&self) -> Matrix {
        let parts: Vec<&Matrix> = self.perspectives.iter().map(|p| p.matrix()).collect();
        Matrix::vstack(&parts)
    }

    /// The first `n` perspectives as a new set.
    pub fn truncated(&self, n: usize) -> Result<Self, PerspectiveError> {
        Self::new(self.perspectives.iter().take(n).cloned().collect())
    }
}

impl core::ops::Index<usize> for PerspectiveSet {
    type Output = Perspective;
    fn index(&self, idx: usize) -> &Perspective {
        &self.perspectives[idx]
    }
}

/// The `k` one-hot row perspectives followed by `duplicate_first` extra
/// copies of the first one.
pub fn basis_perspectives(k: usize, duplicate_first: usize) -> PerspectiveSet {
    assert!(k >= 1);
    let mut out = Vec::with_capacity(k + duplicate_first);
    for i in 0..k {
        let mut row = vec![0.0; k];
        row[i] = 1.0;
        out.push(Perspective::from_row(&row, format!("e{}", i + 1), ConstructionTag::Basis));
    }
    let mut e1 = vec![0.0; k];
    e1[0] = 1.0;
    for j in 0..duplicate_first {
        out.push(Perspective::from_row(
            &e1,
            format!("e1-dup{}", j + 1),
            ConstructionTag::DuplicatedBasis,
        ));
    }
    PerspectiveSet::new(out).expect("basis set is nonempty and consistent")
}

/// `n` random row perspectives with entries drawn uniformly from `[0, 1)`.
/// With a threshold, entries below it are zeroed and all-zero rows are
/// redrawn so every perspective remains a usable channel.
pub fn random_perspectives(
    k: usize,
    n: usize,
    threshold: Option<f64>,
    rng: &mut impl Rng,
) -> PerspectiveSet {
    assert!(k >= 1 && n >= 1);
    let tag = if threshold.is_some() {
        ConstructionTag::RandomThresholded
    } else {
        ConstructionTag::RandomUniform
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = loop {
            let mut row: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            if let Some(th) = threshold {
                for v in row.iter_mut() {
                    if *v < th {
                        *v = 0.0;
                    }
                }
            }
            if row.iter().any(|&v| v != 0.0) {
                break row;
            }
        };
        out.push(Perspective::from_row(&row, format!("rand{}", i + 1), tag));
    }
    PerspectiveSet::new(out).expect("random set is nonempty and consistent")
}

/// Spectral summary of a stacked perspective family against a reward vector.
#[derive(Debug, Clone)]
pub struct StackAnalysis {
    stacked: Matrix,
    sigma: f64,
    rho: f64,
    rank: usize,
    diam_bound: f64,
}

impl StackAnalysis {
    pub fn stacked(&self) -> &Matrix {
        &self.stacked
    }

    /// Smallest nonzero singular value of the stack.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Norm of the projection of the reward vector onto the stack's kernel.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn diam_bound(&self) -> f64 {
        self.diam_bound
    }
}

/// Computes sigma, rho and rank of the stacked perspective matrix.
///
/// `rho` realizes the maximum of `<w*, v>` over unit kernel vectors, which
/// equals the norm of the kernel projection of `w*`.
pub fn analyze_stack(
    perspectives: &PerspectiveSet,
    w_star: &[f64],
    diam_bound: f64,
) -> Result<StackAnalysis, PerspectiveError> {
    let k = perspectives.feature_dim();
    if w_star.len() != k {
        return Err(PerspectiveError::DimensionMismatch);
    }
    let stacked = perspectives.stacked();
    if stacked.is_zero() {
        return Err(PerspectiveError::DegenerateStack);
    }
    let mut gram = Matrix::zeros(k, k);
    gram.add_gram(&stacked);
    let (eigvals, eigvecs) = linalg::sym_eigen(&gram);
    let singulars: Vec<f64> = eigvals.iter().map(|&l| math::sqrt(l.max(0.0))).collect();
    let s_max = singulars[0];
    let cutoff = RANK_TOL * s_max;
    let rank = singulars.iter().filter(|&&s| s > cutoff).count();
    let sigma = singulars[rank - 1];
    let mut rho_sq = 0.0;
    for i in rank..k {
        let q: Vec<f64> = (0..k).map(|r| eigvecs[(r, i)]).collect();
        let c = linalg::dot(w_star, &q);
        rho_sq += c * c;
    }
    Ok(StackAnalysis {
        stacked,
        sigma,
        rho: math::sqrt(rho_sq),
        rank,
        diam_bound,
    })
}

/// Upper bound on the diameter of the reachable feature-expectation set:
/// the Euclidean norm of the vector of per-coordinate ranges, each obtained
/// by maximizing and minimizing `(F mu)_j` over the flow polytope.
pub fn diam_upper_bound(mdp: &TabularMdp, features: &FeatureMap) -> Result<f64, LpError> {
    if features.n_pairs() != mdp.n_pairs() {
        return Err(LpError::DimensionMismatch);
    }
    let mut sum_sq = 0.0;
    for j in 0..features.feature_dim() {
        let row = features.matrix().row(j);
        let hi = lp::optimize_over_flow(mdp, row, true)?;
        let lo = lp::optimize_over_flow(mdp, row, false)?;
        let range = (hi - lo).max(0.0);
        sum_sq += range * range;
    }
    Ok(math::sqrt(sum_sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_gridworld;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn indicator_columns_are_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gw = build_gridworld(10, 4, 2, 0.3, &mut rng).unwrap();
        let f = gw.features();
        for &(cell, ty) in gw.objects() {
            for a in 0..4 {
                let col = f.column(gw.mdp().pair_index(cell, a));
                for (j, &v) in col.iter().enumerate() {
                    assert_eq!(v, if j == ty { 1.0 } else { 0.0 });
                }
            }
        }
        let empty = (0..100).find(|&c| gw.object_type_at(c).is_none()).unwrap();
        assert!(f.column(gw.mdp().pair_index(empty, 0)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indicator_column_sums_count_object_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gw = build_gridworld(10, 4, 2, 0.3, &mut rng).unwrap();
        let f = gw.features();
        for ty in 0..4 {
            let total: f64 = (0..f.n_pairs()).map(|p| f.matrix()[(ty, p)]).sum();
            assert_eq!(total, 2.0 * 4.0);
        }
    }

    #[test]
    fn basis_set_shapes() {
        let set = basis_perspectives(4, 12);
        assert_eq!(set.len(), 16);
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let matching = set
            .iter()
            .filter(|p| p.matrix().row(0) == e1)
            .count();
        assert_eq!(matching, 13);

        let subset = basis_perspectives(4, 0);
        assert_eq!(subset.len(), 4);
        for (i, p) in subset.iter().enumerate() {
            assert_eq!(p.matrix()[(0, i)], 1.0);
        }

        let single = basis_perspectives(1, 0);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].matrix().row(0), [1.0]);
    }

    #[test]
    fn random_thresholded_rows_avoid_dead_zone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let set = random_perspectives(4, 40, Some(0.5), &mut rng);
        assert_eq!(set.len(), 40);
        for p in set.iter() {
            assert!(p
                .matrix()
                .row(0)
                .iter()
                .all(|&v| v == 0.0 || (0.5..1.0).contains(&v)));
            assert!(p.matrix().row(0).iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn zero_threshold_matches_unthresholded() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let t0 = random_perspectives(4, 6, Some(0.0), &mut a);
        let none = random_perspectives(4, 6, None, &mut b);
        for (x, y) in t0.iter().zip(none.iter()) {
            assert_eq!(x.matrix(), y.matrix());
        }
    }

    #[test]
    fn identity_stack_analysis() {
        let set = basis_perspectives(4, 0);
        let a = analyze_stack(&set, &[0.3, 0.1, 0.9, 0.5], 1.0).unwrap();
        assert_abs_diff_eq!(a.sigma(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.rho(), 0.0, epsilon = 1e-12);
        assert_eq!(a.rank(), 4);
    }

    #[test]
    fn kernel_reward_detected() {
        let set = PerspectiveSet::new(vec![Perspective::from_row(
            &[1.0, 0.0, 0.0, 0.0],
            "e1".into(),
            ConstructionTag::Custom,
        )])
        .unwrap();
        let a = analyze_stack(&set, &[0.0, 1.0, 0.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(a.rho(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.sigma(), 1.0, epsilon = 1e-12);
        assert_eq!(a.rank(), 1);

        let invsqrt2 = 1.0 / 2.0f64.sqrt();
        let b = analyze_stack(&set, &[invsqrt2, invsqrt2, 0.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(b.rho(), invsqrt2, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_stack_rejected() {
        let set = PerspectiveSet::new(vec![Perspective::from_row(
            &[0.0, 0.0],
            "zero".into(),
            ConstructionTag::Custom,
        )])
        .unwrap();
        assert_eq!(
            analyze_stack(&set, &[1.0, 0.0], 1.0).unwrap_err(),
            PerspectiveError::DegenerateStack
        );
    }

    #[test]
    fn stack_order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let set = random_perspectives(4, 6, Some(0.5), &mut rng);
        let w = [0.2, 0.8, 0.5, 0.1];
        let fwd = analyze_stack(&set, &w, 1.0).unwrap();
        let rev_set =
            PerspectiveSet::new(set.iter().rev().cloned().collect()).unwrap();
        let rev = analyze_stack(&rev_set, &w, 1.0).unwrap();
        assert_abs_diff_eq!(fwd.sigma(), rev.sigma(), epsilon = 1e-10);
        assert_abs_diff_eq!(fwd.rho(), rev.rho(), epsilon = 1e-10);
        assert_eq!(fwd.rank(), rev.rank());
    }

    #[test]
    fn kernel_identity_partitions_reward_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let n = 1 + rng.random_range(0..4);
            let set = random_perspectives(4, n, Some(0.5), &mut rng);
            let w: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let a = analyze_stack(&set, &w, 1.0).unwrap();
            // row-space component: w projected onto the span of A^T
            let stacked = a.stacked();
            let mut gram = Matrix::zeros(4, 4);
            gram.add_gram(stacked);
            let (vals, vecs) = crate::linalg::sym_eigen(&gram);
            let mut row_sq = 0.0;
            for i in 0..4 {
                if vals[i].max(0.0).sqrt() > 1e-10 * vals[0].max(0.0).sqrt() {
                    let q: Vec<f64> = (0..4).map(|r| vecs[(r, i)]).collect();
                    let c = crate::linalg::dot(&w, &q);
                    row_sq += c * c;
                }
            }
            let total = crate::linalg::dot(&w, &w);
            assert_abs_diff_eq!(a.rho() * a.rho() + row_sq, total, epsilon = 1e-10);
            if a.rank() == 4 {
                assert!(a.rho() <= 1e-10);
            }
        }
    }
}
