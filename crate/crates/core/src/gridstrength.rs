//! Eigen-analysis of grounded Laplacians.
//!
//! The smallest eigenvalue of `B` is the generalized short-circuit ratio
//! (gSCR). Splitting the inverter nodes into GFL and GFM sets gives two
//! Schur complements whose extreme eigenvalues move in the favourable
//! direction: eliminating the GFM nodes from `B + 0 ⊕ b_eq·I` raises the
//! smallest eigenvalue seen by the GFL set, and eliminating the GFL nodes from
//! `B` lowers the largest eigenvalue seen by the GFM set. `lemma1_check` and
//! `lemma2_check` measure both effects and [`harness`] exercises them on
//! random physically realizable networks.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::GroundedLaplacian;

/// Margins at or below this are reported as inconclusive.
pub const MARGIN_TOL: f64 = 1e-10;

const SYMMETRY_REL_TOL: f64 = 1e-10;

/// Ascending eigenvalues with matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub lambdas: Vec<f64>,
    pub w: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn smallest(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn largest(&self) -> f64 {
        self.lambdas[self.lambdas.len() - 1]
    }
}

pub fn eig_sym(b: &GroundedLaplacian) -> Result<EigenDecomposition> {
    eig_sym_matrix(b.matrix())
}

/// Symmetric eigen-solve of an arbitrary real matrix, rejecting asymmetric input.
pub fn eig_sym_matrix(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Precondition(format!(
            "eigen-decomposition needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if !(asym <= SYMMETRY_REL_TOL * m.amax().max(1.0)) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambdas = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenDecomposition { lambdas, w })
}

fn smallest_eig(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eig_sym_matrix(m)?.smallest())
}

fn largest_eig(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eig_sym_matrix(m)?.largest())
}

/// Generalized short-circuit ratio: the smallest eigenvalue of `B`.
pub fn gscr(b: &GroundedLaplacian) -> Result<f64> {
    smallest_eig(b.matrix())
}

/// Split of inverter indices (0-based rows of `B`) into GFL and GFM sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub gfl_idx: Vec<usize>,
    pub gfm_idx: Vec<usize>,
}

impl Partition {
    pub fn new(gfl_idx: Vec<usize>, gfm_idx: Vec<usize>, n: usize) -> Result<Self> {
        let mut all: Vec<usize> = gfl_idx.iter().chain(&gfm_idx).copied().collect();
        all.sort_unstable();
        if all != (0..n).collect::<Vec<_>>() {
            return Err(Error::Partition(format!(
                "GFL {gfl_idx:?} and GFM {gfm_idx:?} must be disjoint and cover 0..{n}"
            )));
        }
        Ok(Self { gfl_idx, gfm_idx })
    }

    pub fn n1(&self) -> usize {
        self.gfl_idx.len()
    }

    pub fn n2(&self) -> usize {
        self.gfm_idx.len()
    }

    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// `B/elim`: the Schur complement of the `eliminate` principal block, over the
/// remaining indices in ascending order.
pub fn schur_complement(b: &DMatrix<f64>, eliminate: &[usize]) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::Precondition("Schur complement needs a square matrix".into()));
    }
    let mut elim = eliminate.to_vec();
    elim.sort_unstable();
    elim.dedup();
    if let Some(&bad) = elim.iter().find(|&&i| i >= n) {
        return Err(Error::Precondition(format!("index {bad} out of range for {n}x{n} matrix")));
    }
    if elim.is_empty() {
        return Ok(b.clone());
    }
    let keep: Vec<usize> = (0..n).filter(|i| elim.binary_search(i).is_err()).collect();

    let b_ee = submatrix(b, &elim, &elim);
    let b_ek = submatrix(b, &elim, &keep);
    let b_ke = submatrix(b, &keep, &elim);
    let b_kk = submatrix(b, &keep, &keep);

    let solved = match b_ee.clone().cholesky() {
        Some(ch) => ch.solve(&b_ek),
        None => b_ee
            .lu()
            .solve(&b_ek)
            .ok_or(Error::SingularBlock { indices: elim.clone() })?,
    };
    if solved.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularBlock { indices: elim });
    }
    let s = b_kk - b_ke * solved;
    Ok((&s + s.transpose()) * 0.5)
}

/// `B + 0 ⊕ b_eq·I` with the shift on the GFM rows.
pub fn modified_laplacian(
    b: &GroundedLaplacian,
    p: &Partition,
    b_eq: f64,
) -> Result<GroundedLaplacian> {
    if !(b_eq.is_finite() && b_eq > 0.0) {
        return Err(Error::NonPositiveSusceptance { b_eq });
    }
    check_partition(b, p)?;
    let mut m = b.matrix().clone();
    for &i in &p.gfm_idx {
        m[(i, i)] += b_eq;
    }
    GroundedLaplacian::new(m, b.node_order().to_vec())
}

fn check_partition(b: &GroundedLaplacian, p: &Partition) -> Result<()> {
    if p.n() != b.dim() {
        return Err(Error::Partition(format!(
            "partition covers {} nodes but B is {}x{}",
            p.n(),
            b.dim(),
            b.dim()
        )));
    }
    Partition::new(p.gfl_idx.clone(), p.gfm_idx.clone(), b.dim()).map(|_| ())
}

/// True when the off-diagonal sparsity graph of `m` is disconnected.
pub fn is_reducible(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n <= 1 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && (m[(i, j)] != 0.0 || m[(j, i)] != 0.0) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.iter().any(|s| !s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaStatus {
    /// Strict inequality with margin above [`MARGIN_TOL`].
    Holds,
    /// Margin within [`MARGIN_TOL`] of zero on an irreducible matrix.
    Inconclusive,
    /// Margin within tolerance because `B` is block-diagonal.
    Decoupled,
    /// One side of the partition is empty.
    Degenerate,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaOutcome {
    pub lhs: f64,
    pub rhs: f64,
    /// Positive when the inequality points the right way.
    pub margin: f64,
    pub holds: bool,
    pub status: LemmaStatus,
    /// Lemma 1 only: `[λmin(B_mod/n2), λmin(B_mod), λmin(B)]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chain: Vec<f64>,
}

fn classify(lhs: f64, rhs: f64, margin: f64, reducible: bool, chain: Vec<f64>) -> LemmaOutcome {
    let status = if margin > MARGIN_TOL {
        LemmaStatus::Holds
    } else if margin >= -MARGIN_TOL {
        if reducible {
            LemmaStatus::Decoupled
        } else {
            LemmaStatus::Inconclusive
        }
    } else {
        LemmaStatus::Violated
    };
    LemmaOutcome {
        lhs,
        rhs,
        margin,
        holds: status == LemmaStatus::Holds,
        status,
        chain,
    }
}

/// Checks `λmin(B_mod/n2) > λmin(B)`: eliminating the GFM nodes of the
/// modified Laplacian strengthens the grid seen by the GFL nodes.
pub fn lemma1_check(b: &GroundedLaplacian, p: &Partition, b_eq: f64) -> Result<LemmaOutcome> {
    if !(b_eq.is_finite() && b_eq > 0.0) {
        return Err(Error::NonPositiveSusceptance { b_eq });
    }
    check_partition(b, p)?;
    let rhs = gscr(b)?;
    if p.n2() == 0 {
        return Ok(LemmaOutcome {
            lhs: rhs,
            rhs,
            margin: 0.0,
            holds: true,
            status: LemmaStatus::Degenerate,
            chain: vec![rhs, rhs, rhs],
        });
    }
    if p.n1() == 0 {
        return Err(Error::Partition("lemma 1 needs at least one GFL node".into()));
    }
    let b_mod = modified_laplacian(b, p, b_eq)?;
    let mid = gscr(&b_mod)?;
    let lhs = smallest_eig(&schur_complement(b_mod.matrix(), &p.gfm_idx)?)?;
    Ok(classify(
        lhs,
        rhs,
        lhs - rhs,
        is_reducible(b.matrix()),
        vec![lhs, mid, rhs],
    ))
}

/// Checks `λmax(B/n1) < λmax(B)`: eliminating the GFL nodes weakens the grid
/// seen by the GFM nodes.
pub fn lemma2_check(b: &GroundedLaplacian, p: &Partition) -> Result<LemmaOutcome> {
    check_partition(b, p)?;
    if p.n1() == 0 {
        return Err(Error::Partition("lemma 2 needs at least one GFL node".into()));
    }
    let rhs = largest_eig(b.matrix())?;
    if p.n2() == 0 {
        return Ok(LemmaOutcome {
            lhs: rhs,
            rhs,
            margin: 0.0,
            holds: true,
            status: LemmaStatus::Degenerate,
            chain: Vec::new(),
        });
    }
    let lhs = largest_eig(&schur_complement(b.matrix(), &p.gfl_idx)?)?;
    Ok(classify(lhs, rhs, rhs - lhs, is_reducible(b.matrix()), Vec::new()))
}

pub mod harness {
    //! Randomized lemma checks on physically realizable grounded Laplacians.

    use nalgebra::DMatrix;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde::{Deserialize, Serialize};

    use super::{lemma1_check, lemma2_check, LemmaOutcome, Partition};
    use crate::error::{Error, Result};
    use crate::netgraph::GroundedLaplacian;

    pub const MAX_NODES: usize = 8;
    pub const MAX_BEQ: f64 = 5.0;

    /// Samples a connected graph with branch susceptances `1/x`, `x ~ U[0.05, 1]`,
    /// plus grounding branches on a random non-empty node subset.
    pub fn random_grounded_laplacian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> GroundedLaplacian {
        assert!(n >= 1, "need at least one node");
        let mut m = DMatrix::<f64>::zeros(n, n);
        let add = |m: &mut DMatrix<f64>, i: usize, j: usize, y: f64| {
            m[(i, i)] += y;
            m[(j, j)] += y;
            m[(i, j)] -= y;
            m[(j, i)] -= y;
        };
        for i in 1..n {
            let j = rng.random_range(0..i);
            let y = 1.0 / rng.random_range(0.05..=1.0);
            add(&mut m, i, j, y);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)] == 0.0 && rng.random_bool(0.3) {
                    let y = 1.0 / rng.random_range(0.05..=1.0);
                    add(&mut m, i, j, y);
                }
            }
        }
        let mut grounded: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
        if grounded.is_empty() {
            grounded.push(rng.random_range(0..n));
        }
        for i in grounded {
            m[(i, i)] += 1.0 / rng.random_range(0.05..=1.0);
        }
        GroundedLaplacian::from_matrix(m).expect("sampled matrix is a grounded Laplacian")
    }

    /// Random split with both sides non-empty (`n >= 2`).
    pub fn random_partition<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Partition {
        assert!(n >= 2, "a two-sided partition needs n >= 2");
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let n1 = rng.random_range(1..n);
        let mut gfl = idx[..n1].to_vec();
        let mut gfm = idx[n1..].to_vec();
        gfl.sort_unstable();
        gfm.sort_unstable();
        Partition::new(gfl, gfm, n).expect("shuffled indices form a partition")
    }

    /// Per-trial RNG: trials are independent, so results do not depend on execution order.
    pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        rng
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct LemmaTrial {
        pub seed: u64,
        pub trial: usize,
        pub n: usize,
        pub partition: Partition,
        pub b_eq: f64,
        pub lemma1: LemmaOutcome,
        pub lemma2: LemmaOutcome,
    }

    pub fn run_trial(seed: u64, trial: usize) -> Result<LemmaTrial> {
        let mut rng = trial_rng(seed, trial);
        let n = rng.random_range(2..=MAX_NODES);
        let b = random_grounded_laplacian(&mut rng, n);
        let partition = random_partition(&mut rng, n);
        // (0, MAX_BEQ]
        let b_eq = MAX_BEQ * (1.0 - rng.random::<f64>());
        Ok(LemmaTrial {
            seed,
            trial,
            n,
            lemma1: lemma1_check(&b, &partition, b_eq)?,
            lemma2: lemma2_check(&b, &partition)?,
            partition,
            b_eq,
        })
    }

    pub fn run_lemma_harness(trials: usize, seed: u64) -> Result<Vec<LemmaTrial>> {
        if trials == 0 {
            return Err(Error::Precondition("lemma harness needs at least one trial".into()));
        }
        (0..trials).map(|t| run_trial(seed, t)).collect()
    }
}
