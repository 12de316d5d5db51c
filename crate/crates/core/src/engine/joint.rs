//! Finite joint distributions, mutual information across a bipartition and
//! the coefficient-weighted neural complexity.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::group_model::CoefficientSystem;
use crate::parallel::pairwise_sum;

pub const MAX_VARIABLES: usize = 16;

/// A probability table over `X_0 × … × X_{m-1}`, variable 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointTable {
    states: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(states: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() > MAX_VARIABLES {
            return Err(Error::InvalidParameter(format!(
                "a joint table needs 1 to {MAX_VARIABLES} variables"
            )));
        }
        if states.contains(&0) {
            return Err(Error::InvalidParameter("every variable needs at least one state".into()));
        }
        let size = states
            .iter()
            .try_fold(1usize, |acc, &k| acc.checked_mul(k))
            .filter(|&s| s == probs.len());
        if size.is_none() {
            return Err(Error::InvalidParameter(format!(
                "table has {} entries, expected the product of {states:?}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("probabilities must be nonnegative".into()));
        }
        let total = pairwise_sum(&probs);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("table sums to {total}, not 1")));
        }
        Ok(Self { states, probs })
    }

    /// Product of independent marginals.
    pub fn independent(marginals: &[Vec<f64>]) -> Result<Self> {
        let states: Vec<usize> = marginals.iter().map(|m| m.len()).collect();
        let mut probs = vec![1.0];
        for m in marginals {
            probs = m.iter().flat_map(|&q| probs.iter().map(move |&p| p * q)).collect();
        }
        // variable 0 fastest: the loop above put the newest variable outermost
        Self::new(states, probs)
    }

    pub fn variables(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    fn full_mask(&self) -> u32 {
        (1u32 << self.states.len()) - 1
    }

    /// Marginal over the variables in `mask`, in increasing variable order.
    pub fn marginal(&self, mask: u32) -> Vec<f64> {
        let kept: Vec<usize> = (0..self.states.len()).filter(|&i| mask >> i & 1 == 1).collect();
        let size: usize = kept.iter().map(|&i| self.states[i]).product();
        let mut out = vec![0.0; size];
        let mut digits = vec![0usize; self.states.len()];
        for &p in &self.probs {
            let mut idx = 0;
            let mut stride = 1;
            for &i in &kept {
                idx += digits[i] * stride;
                stride *= self.states[i];
            }
            out[idx] += p;
            for (d, &k) in digits.iter_mut().zip(&self.states) {
                *d += 1;
                if *d < k {
                    break;
                }
                *d = 0;
            }
        }
        out
    }

    pub fn entropy(&self, mask: u32) -> f64 {
        entropy(&self.marginal(mask))
    }

    /// `H(X_S)` for every `S`, indexed by mask. Marginals are obtained by
    /// summing out one variable at a time along a removal tree, so each is
    /// computed once from its parent.
    pub fn all_entropies(&self) -> Vec<f64> {
        let m = self.states.len();
        let mut out = vec![0.0; 1 << m];
        let vars: Vec<usize> = (0..m).collect();
        descend(&self.probs, &self.states, &vars, self.full_mask(), 0, &mut out);
        out
    }
}

fn descend(table: &[f64], dims: &[usize], vars: &[usize], mask: u32, from: usize, out: &mut [f64]) {
    out[mask as usize] = entropy(table);
    for pos in 0..vars.len() {
        if vars[pos] < from {
            continue;
        }
        let child = sum_out(table, dims, pos);
        let mut cd = dims.to_vec();
        cd.remove(pos);
        let mut cv = vars.to_vec();
        cv.remove(pos);
        descend(&child, &cd, &cv, mask & !(1 << vars[pos]), vars[pos] + 1, out);
    }
}

fn sum_out(table: &[f64], dims: &[usize], pos: usize) -> Vec<f64> {
    let inner: usize = dims[..pos].iter().product();
    let k = dims[pos];
    let outer = table.len() / (inner * k);
    let mut out = vec![0.0; inner * outer];
    for o in 0..outer {
        for j in 0..k {
            let src = &table[(o * k + j) * inner..(o * k + j + 1) * inner];
            for (dst, &p) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *dst += p;
            }
        }
    }
    out
}

fn entropy(p: &[f64]) -> f64 {
    let terms: Vec<f64> = p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).collect();
    pairwise_sum(&terms)
}

/// `I(X_S; X_{E∖S}) = H(X_S) + H(X_{E∖S}) - H(X_E)`; zero when `S` is empty
/// or everything.
pub fn mutual_information(table: &JointTable, s: u32) -> f64 {
    let full = table.full_mask();
    let s = s & full;
    if s == 0 || s == full {
        return 0.0;
    }
    (table.entropy(s) + table.entropy(full & !s) - table.entropy(full)).max(0.0)
}

/// `Σ_S c(|E|, |S|) I(X_S; X_{E∖S})` summed over every subset in mask order.
pub fn neural_complexity(table: &JointTable, coeffs: &CoefficientSystem) -> f64 {
    let m = table.variables();
    let full = table.full_mask();
    let h = table.all_entropies();
    let c = coeffs.table(m);
    let terms: Vec<f64> = (0..=full)
        .map(|s| {
            let mi = if s == 0 || s == full {
                0.0
            } else {
                (h[s as usize] + h[(full & !s) as usize] - h[full as usize]).max(0.0)
            };
            c[s.count_ones() as usize] * mi
        })
        .collect();
    pairwise_sum(&terms)
}

/// Same quantity streamed by subset size: each size class is summed first
/// and weighted once, with mutual informations evaluated directly.
pub fn neural_complexity_by_size(table: &JointTable, coeffs: &CoefficientSystem) -> f64 {
    let m = table.variables();
    let c = coeffs.table(m);
    let per_size: Vec<f64> = (1..m)
        .map(|s| {
            let mut mis = Vec::new();
            let mut mask: u32 = (1 << s) - 1;
            while mask < 1 << m {
                mis.push(mutual_information(table, mask));
                // next mask with the same popcount
                let low = mask & mask.wrapping_neg();
                let ripple = mask + low;
                mask = ripple | (((mask ^ ripple) >> 2) / low);
            }
            c[s] * pairwise_sum(&mis)
        })
        .collect();
    pairwise_sum(&per_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identical_bits() -> JointTable {
        JointTable::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap()
    }

    #[test]
    fn mutual_information_examples() {
        let ind = JointTable::independent(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(mutual_information(&ind, 1).abs() < 1e-15);
        assert!((mutual_information(&identical_bits(), 1) - 2f64.ln()).abs() < 1e-15);
        let bsc = JointTable::new(vec![2, 2], vec![0.45, 0.05, 0.05, 0.45]).unwrap();
        let h = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((mutual_information(&bsc, 1) - (2f64.ln() - h)).abs() < 1e-12);
        assert_eq!(mutual_information(&bsc, 0), 0.0);
        assert_eq!(mutual_information(&bsc, 3), 0.0);
    }

    #[test]
    fn neural_complexity_examples() {
        let v = neural_complexity(&identical_bits(), &CoefficientSystem::Neural);
        assert!((v - 2f64.ln() / 3.0).abs() < 1e-12);
        let ind = JointTable::independent(&[vec![0.3, 0.7], vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        assert!(neural_complexity(&ind, &CoefficientSystem::Neural).abs() < 1e-12);
    }

    #[test]
    fn table_validation() {
        assert!(JointTable::new(vec![2, 2], vec![0.5, 0.5, 0.1, 0.0]).is_err());
        assert!(JointTable::new(vec![2, 3], vec![0.25; 4]).is_err());
        assert!(JointTable::new(vec![], vec![1.0]).is_err());
    }

    #[test]
    fn marginals_and_entropies_agree() {
        let t = JointTable::new(vec![2, 3], vec![0.1, 0.2, 0.05, 0.15, 0.3, 0.2]).unwrap();
        assert_eq!(t.marginal(1).len(), 2);
        assert!((t.marginal(1)[0] - 0.45).abs() < 1e-15);
        assert!((t.marginal(2)[1] - 0.2).abs() < 1e-15);
        let all = t.all_entropies();
        for mask in 0..4u32 {
            assert!((all[mask as usize] - t.entropy(mask)).abs() < 1e-14);
        }
    }
}
