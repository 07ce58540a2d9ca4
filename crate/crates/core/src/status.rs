//! Binary node-by-cascade status matrices and diffusion trajectories.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatusError {
    #[error("node {node} is active in cascades {first} and {second}")]
    MultipleCascades { node: usize, first: usize, second: usize },
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("index ({0}, {1}) outside {2}x{3}")]
    OutOfRange(usize, usize, usize, usize),
    #[error("step {step}: node {node} lost its activation in cascade {cascade}")]
    NotMonotone { step: usize, node: usize, cascade: usize },
    #[error("step {step}: node {node} resolved to cascade {cascade} without being a phase-1 candidate")]
    UnsupportedWinner { step: usize, node: usize, cascade: usize },
    #[error("trajectory has {stored} stored steps but a horizon of {horizon}")]
    TooManySteps { stored: usize, horizon: usize },
}

/// Dense `rows x cols` bit matrix (nodes by cascades).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    words: Vec<u64>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryMatrix {
            rows,
            cols,
            words: vec![0; (rows * cols).div_ceil(64)],
        }
    }

    /// Builds a matrix from `(row, col)` pairs of set bits.
    pub fn from_pairs(
        rows: usize,
        cols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, StatusError> {
        let mut m = Self::zeros(rows, cols);
        for (r, c) in pairs {
            if r >= rows || c >= cols {
                return Err(StatusError::OutOfRange(r, c, rows, cols));
            }
            m.set(r, c, true);
        }
        Ok(m)
    }

    /// One-hot rows from an owner vector (`None` = inactive).
    pub fn from_owners(cols: usize, owners: &[Option<usize>]) -> Self {
        let mut m = Self::zeros(owners.len(), cols);
        for (r, o) in owners.iter().enumerate() {
            if let Some(c) = *o {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let k = row * self.cols + col;
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let k = row * self.cols + col;
        if value {
            self.words[k / 64] |= 1 << (k % 64);
        } else {
            self.words[k / 64] &= !(1 << (k % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Set bits as `(row, col)` in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
            .map(move |k| (k / cols, k % cols))
        })
    }

    pub fn row_ones(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.cols).filter(move |&c| self.get(row, c))
    }

    /// The single set column of `row`, or an error if more than one is set.
    pub fn owner(&self, row: usize) -> Result<Option<usize>, StatusError> {
        let mut found = None;
        for c in self.row_ones(row) {
            if let Some(first) = found {
                return Err(StatusError::MultipleCascades {
                    node: row,
                    first,
                    second: c,
                });
            }
            found = Some(c);
        }
        Ok(found)
    }

    /// Owner per row; fails if any row has two set bits.
    pub fn owners(&self) -> Result<Vec<Option<usize>>, StatusError> {
        (0..self.rows).map(|r| self.owner(r)).collect()
    }

    pub fn check_single_owner(&self) -> Result<(), StatusError> {
        (0..self.rows).try_for_each(|r| self.owner(r).map(|_| ()))
    }

    pub fn row_active(&self, row: usize) -> bool {
        (0..self.cols).any(|c| self.get(row, c))
    }

    /// True if every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn same_shape(&self, other: &BinaryMatrix) -> Result<(), StatusError> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(StatusError::ShapeMismatch(self.rows, self.cols, other.rows, other.cols))
        }
    }

    /// Number of cells where the two matrices differ.
    pub fn hamming(&self, other: &BinaryMatrix) -> Result<usize, StatusError> {
        self.same_shape(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Row-major flattening `(row, col) -> row * cols + col`.
    pub fn to_flat(&self) -> Vec<bool> {
        (0..self.rows * self.cols)
            .map(|k| self.words[k / 64] >> (k % 64) & 1 == 1)
            .collect()
    }

    pub fn from_flat(rows: usize, cols: usize, bits: &[bool]) -> Result<Self, StatusError> {
        if bits.len() != rows * cols {
            return Err(StatusError::ShapeMismatch(rows, cols, bits.len(), 1));
        }
        let mut m = Self::zeros(rows, cols);
        for (k, &b) in bits.iter().enumerate() {
            if b {
                m.set(k / cols, k % cols, true);
            }
        }
        Ok(m)
    }
}

impl fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BinaryMatrix({}x{}, ones={:?})",
            self.rows,
            self.cols,
            self.ones().collect::<Vec<_>>()
        )
    }
}

/// Both phase slices of one diffusion step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    /// Candidates after phase 1, including carried-over active nodes.
    pub phase1: BinaryMatrix,
    /// Resolved statuses after phase 2.
    pub phase2: BinaryMatrix,
}

/// A full diffusion trajectory: the initial status plus one [`StepOutcome`]
/// per step.
///
/// Only steps up to the first fixed point are stored; logical steps past
/// `stored_steps()` repeat the final status in both phases, so the trajectory
/// always has `horizon` logical steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusTensor {
    initial: BinaryMatrix,
    steps: Vec<StepOutcome>,
    horizon: usize,
}

impl StatusTensor {
    /// Assembles a trajectory and checks every status invariant.
    pub fn new(initial: BinaryMatrix, steps: Vec<StepOutcome>, horizon: usize) -> Result<Self, StatusError> {
        let t = StatusTensor {
            initial,
            steps,
            horizon,
        };
        t.check()?;
        Ok(t)
    }

    pub(crate) fn new_unchecked(initial: BinaryMatrix, steps: Vec<StepOutcome>, horizon: usize) -> Self {
        StatusTensor {
            initial,
            steps,
            horizon,
        }
    }

    /// Verifies single ownership, monotonicity and phase consistency.
    pub fn check(&self) -> Result<(), StatusError> {
        if self.steps.len() > self.horizon {
            return Err(StatusError::TooManySteps {
                stored: self.steps.len(),
                horizon: self.horizon,
            });
        }
        self.initial.check_single_owner()?;
        let mut prev = &self.initial;
        for (k, step) in self.steps.iter().enumerate() {
            let t = k + 1;
            prev.same_shape(&step.phase1)?;
            prev.same_shape(&step.phase2)?;
            step.phase2.check_single_owner()?;
            for (node, cascade) in prev.ones() {
                if !step.phase2.get(node, cascade) {
                    return Err(StatusError::NotMonotone { step: t, node, cascade });
                }
            }
            for (node, cascade) in step.phase2.ones() {
                if !step.phase1.get(node, cascade) {
                    return Err(StatusError::UnsupportedWinner { step: t, node, cascade });
                }
            }
            prev = &step.phase2;
        }
        Ok(())
    }

    pub fn initial(&self) -> &BinaryMatrix {
        &self.initial
    }

    pub fn node_count(&self) -> usize {
        self.initial.rows()
    }

    pub fn cascade_count(&self) -> usize {
        self.initial.cols()
    }

    /// Logical number of steps.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stored_steps(&self) -> &[StepOutcome] {
        &self.steps
    }

    /// Phase-2 status after logical step `t` (`t = 0` is the initial status).
    pub fn phase2(&self, t: usize) -> &BinaryMatrix {
        if t == 0 {
            return &self.initial;
        }
        match self.steps.get(t - 1) {
            Some(s) => &s.phase2,
            None => self.final_status(),
        }
    }

    /// Phase-1 status of logical step `t >= 1`.
    pub fn phase1(&self, t: usize) -> &BinaryMatrix {
        assert!(t >= 1, "phase 1 is defined for steps t >= 1");
        match self.steps.get(t - 1) {
            Some(s) => &s.phase1,
            None => self.final_status(),
        }
    }

    pub fn final_status(&self) -> &BinaryMatrix {
        self.steps.last().map(|s| &s.phase2).unwrap_or(&self.initial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_ops() {
        let mut m = BinaryMatrix::zeros(30, 3);
        m.set(29, 2, true);
        m.set(0, 1, true);
        m.set(21, 0, true);
        assert_eq!(m.count_ones(), 3);
        assert_eq!(m.ones().collect::<Vec<_>>(), vec![(0, 1), (21, 0), (29, 2)]);
        assert_eq!(m.owner(29), Ok(Some(2)));
        m.set(29, 0, true);
        assert!(matches!(m.owner(29), Err(StatusError::MultipleCascades { .. })));
        m.set(29, 0, false);
        let flat = m.to_flat();
        assert_eq!(BinaryMatrix::from_flat(30, 3, &flat).unwrap(), m);
        let other = BinaryMatrix::from_pairs(30, 3, [(0, 1)]).unwrap();
        assert!(other.is_subset_of(&m));
        assert_eq!(other.hamming(&m), Ok(2));
    }

    #[test]
    fn trajectory_checks() {
        let init = BinaryMatrix::from_pairs(3, 2, [(0, 0)]).unwrap();
        let p1 = BinaryMatrix::from_pairs(3, 2, [(0, 0), (1, 0), (1, 1)]).unwrap();
        let p2 = BinaryMatrix::from_pairs(3, 2, [(0, 0), (1, 0)]).unwrap();
        let t = StatusTensor::new(
            init.clone(),
            vec![StepOutcome {
                phase1: p1.clone(),
                phase2: p2.clone(),
            }],
            3,
        )
        .unwrap();
        assert_eq!(t.phase2(3), &p2);
        assert_eq!(t.phase1(2), &p2);
        assert_eq!(t.phase1(1), &p1);
        assert_eq!(t.phase2(0), &init);

        // losing a seed
        let bad = StatusTensor::new(
            init.clone(),
            vec![StepOutcome {
                phase1: p1.clone(),
                phase2: BinaryMatrix::from_pairs(3, 2, [(1, 0)]).unwrap(),
            }],
            3,
        );
        assert!(matches!(bad, Err(StatusError::NotMonotone { .. })));

        // winner that was not a candidate
        let bad = StatusTensor::new(
            init,
            vec![StepOutcome {
                phase1: BinaryMatrix::from_pairs(3, 2, [(0, 0)]).unwrap(),
                phase2: p2,
            }],
            3,
        );
        assert!(matches!(bad, Err(StatusError::UnsupportedWinner { .. })));
    }
}
