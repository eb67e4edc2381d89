use super::trees::{enumerate_noncrossing_trees, NonCrossingTree};
use crate::deterministic::ShapeParams;
use crate::error::{PrbmError, Result};
use crate::periodic_distance;

/// Pair decay factor used by [`DecayFactors`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecayMode {
    /// `(r/ell_t + 1)^(-(1+alpha)/2)`, for `alpha >= 1`.
    #[default]
    Standard,
    /// Experimental `(r/W + 1)^((alpha-1)/2) (r/ell_t + 1)^(-alpha)` for `alpha in (0, 1)`.
    ExperimentalSubcritical,
}

/// Loop decay `D^(n)` (cyclic product of pair factors) and tree decay `T^(n)` (sum over
/// non-crossing trees of edgewise squared pair factors).
#[derive(Debug, Clone)]
pub struct DecayFactors {
    shape: ShapeParams,
    ell: f64,
    mode: DecayMode,
    n_sites: usize,
    trees: Vec<Vec<NonCrossingTree>>,
}

impl DecayFactors {
    pub fn new(shape: ShapeParams, t: f64, mode: DecayMode) -> Result<Self> {
        let a = shape.alpha;
        match mode {
            DecayMode::Standard if a < 1.0 => {
                return Err(PrbmError::UnsupportedRegime(format!("decay factors require alpha >= 1, got {a}")));
            }
            DecayMode::ExperimentalSubcritical if !(a > 0.0 && a < 1.0) => {
                return Err(PrbmError::UnsupportedRegime(format!("experimental decay requires alpha in (0, 1), got {a}")));
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&t) {
            return Err(PrbmError::InvalidParameter(format!("t must lie in [0, 1), got {t}")));
        }
        Ok(Self { shape, ell: shape.ell_t(t), mode, n_sites: shape.n as usize, trees: Vec::new() })
    }

    pub fn pair(&self, r: f64) -> f64 {
        let a = self.shape.alpha;
        match self.mode {
            DecayMode::Standard => (r / self.ell + 1.0).powf(-(1.0 + a) / 2.0),
            DecayMode::ExperimentalSubcritical => {
                (r / self.shape.w + 1.0).powf((a - 1.0) / 2.0) * (r / self.ell + 1.0).powf(-a)
            }
        }
    }

    fn dist(&self, x: usize, y: usize) -> f64 {
        periodic_distance(x, y, self.n_sites) as f64
    }

    pub fn loop_decay(&self, xs: &[usize]) -> f64 {
        let n = xs.len();
        (0..n).map(|i| self.pair(self.dist(xs[i], xs[(i + 1) % n]))).product()
    }

    fn trees_for(&mut self, n: usize) -> Result<&[NonCrossingTree]> {
        while self.trees.len() <= n {
            let k = self.trees.len();
            self.trees.push(if k == 0 { Vec::new() } else { enumerate_noncrossing_trees(k)? });
        }
        Ok(&self.trees[n])
    }

    pub fn tree_decay(&mut self, xs: &[usize]) -> Result<f64> {
        let n = xs.len();
        let pairs: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| self.pair(self.dist(xs[i], xs[j])).powi(2)).collect()).collect();
        let trees = self.trees_for(n)?;
        Ok(trees.iter().map(|t| t.edges.iter().map(|&(i, j)| pairs[i][j]).product::<f64>()).sum())
    }

    /// `(D^(n)_x, T^(n)_x)`.
    pub fn factors(&mut self, xs: &[usize]) -> Result<(f64, f64)> {
        Ok((self.loop_decay(xs), self.tree_decay(xs)?))
    }
}

/// Convenience wrapper for a single tuple.
pub fn decay_factors(shape: &ShapeParams, t: f64, xs: &[usize]) -> Result<(f64, f64)> {
    DecayFactors::new(*shape, t, DecayMode::Standard)?.factors(xs)
}
