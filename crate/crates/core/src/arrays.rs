// SPDX-License-Identifier: Apache-2.0

//! Sparse physical arrays (the measured Grover depths) and their `2q`-th
//! order difference co-arrays.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sorted, distinct, nonnegative sensor positions. Position 0 is always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalArray {
    positions: Vec<u64>,
    order_q: u32,
    levels: Option<Vec<u32>>,
}

impl PhysicalArray {
    /// Wraps an explicit position list (coprime, ruler, published tables, ...).
    /// Position 0 is inserted when missing; duplicates are dropped.
    pub fn from_positions(positions: &[u64], order_q: u32) -> Result<Self> {
        if order_q < 1 {
            return Err(Error::Config("array order q must be >= 1".into()));
        }
        let mut positions = positions.to_vec();
        positions.push(0);
        positions.sort_unstable();
        positions.dedup();
        Ok(Self {
            positions,
            order_q,
            levels: None,
        })
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    pub fn order_q(&self) -> u32 {
        self.order_q
    }

    pub fn levels(&self) -> Option<&[u32]> {
        self.levels.as_deref()
    }

    pub fn max_position(&self) -> u64 {
        *self.positions.last().expect("array always holds 0")
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// The `2q`-level nested array
/// `{0} ∪ ⋃_{i<2q} {n·N_0⋯N_{i-1} : 1 ≤ n < N_i} ∪ {n·N_0⋯N_{2q-1} : 1 ≤ n ≤ N_{2q}}`
/// with `N_0 = 1`.
pub fn nested_positions(q: u32, levels: &[u32]) -> Result<PhysicalArray> {
    if q < 1 {
        return Err(Error::Config("array order q must be >= 1".into()));
    }
    if levels.len() != 2 * q as usize {
        return Err(Error::Config(format!(
            "q = {q} needs {} levels, got {}",
            2 * q,
            levels.len()
        )));
    }
    if levels.contains(&0) {
        return Err(Error::Config("array levels must be >= 1".into()));
    }
    let mut positions = vec![0u64];
    let mut stride = 1u64;
    let last = levels.len() - 1;
    for (i, &n_i) in levels.iter().enumerate() {
        let upper = if i == last {
            n_i as u64
        } else {
            n_i as u64 - 1
        };
        positions.extend((1..=upper).map(|n| n * stride));
        stride = stride
            .checked_mul(n_i as u64)
            .ok_or_else(|| Error::Config("array positions overflow u64".into()))?;
    }
    positions.sort_unstable();
    positions.dedup();
    Ok(PhysicalArray {
        positions,
        order_q: q,
        levels: Some(levels.to_vec()),
    })
}

/// Contiguous ULA length guaranteed for a nested array: `2·∏N_k − 1`.
pub fn nested_ula_bound(levels: &[u32]) -> u64 {
    2 * levels.iter().map(|&n| n as u64).product::<u64>() - 1
}

/// The `2q`-th order difference co-array together with the number of ordered
/// index tuples that land on each nonnegative lag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualArray {
    positions: Vec<i64>,
    ula_length: usize,
    multiplicity: Vec<u128>,
    order_q: u32,
}

impl VirtualArray {
    /// All reachable positions, ascending and symmetric about zero.
    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// Largest `L` with `{0, 1, …, L−1}` contained in the co-array.
    pub fn ula_length(&self) -> usize {
        self.ula_length
    }

    /// Symmetric ULA size `2L − 1`.
    pub fn symmetric_ula_size(&self) -> usize {
        2 * self.ula_length - 1
    }

    /// Number of ordered tuples `(a_1..a_q, b_1..b_q)` with
    /// `Σx_a − Σx_b = lag`; zero when `lag` is unreachable.
    pub fn multiplicity(&self, lag: i64) -> u128 {
        self.multiplicity
            .get(lag.unsigned_abs() as usize)
            .copied()
            .unwrap_or(0)
    }

    pub fn order_q(&self) -> u32 {
        self.order_q
    }

    pub fn contains(&self, v: i64) -> bool {
        self.multiplicity(v) > 0
    }
}

/// `(Σ_j t^{x_j})^q` as a dense coefficient vector.
pub(crate) fn sumset_counts(positions: &[u64], q: u32) -> Vec<u128> {
    let max = *positions.last().unwrap_or(&0) as usize;
    let mut acc = vec![1u128];
    for _ in 0..q {
        let mut next = vec![0u128; acc.len() + max];
        for (u, &c) in acc.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for &x in positions {
                next[u + x as usize] += c;
            }
        }
        acc = next;
    }
    acc
}

/// Builds the `2q`-th order co-array `{Σ_{i≤q} x_{a_i} − Σ_{j≤q} x_{b_j}}`.
///
/// The set is the support of `A(t)·A(1/t)` where `A(t) = (Σ t^{x_j})^q`, so
/// the tuple counts come out of one q-fold sumset and an autocorrelation
/// instead of enumerating `n^{2q}` tuples.
pub fn coarray(physical: &PhysicalArray, q: u32) -> Result<VirtualArray> {
    if q < 1 {
        return Err(Error::Config("array order q must be >= 1".into()));
    }
    let sums = sumset_counts(physical.positions(), q);
    let support: Vec<usize> = (0..sums.len()).filter(|&u| sums[u] > 0).collect();
    let span = sums.len();
    let mut multiplicity = vec![0u128; span];
    for (i, &u) in support.iter().enumerate() {
        let cu = sums[u];
        for &w in &support[i..] {
            multiplicity[w - u] += cu * sums[w];
        }
    }
    let mut positions = Vec::new();
    for (lag, m) in multiplicity.iter().enumerate().rev() {
        if *m > 0 && lag > 0 {
            positions.push(-(lag as i64));
        }
    }
    positions.extend(
        multiplicity
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0)
            .map(|(lag, _)| lag as i64),
    );
    let ula_length = multiplicity.iter().take_while(|&&m| m > 0).count();
    Ok(VirtualArray {
        positions,
        ula_length,
        multiplicity,
        order_q: q,
    })
}

/// Nonnegative half of the contiguous ULA: `[0, 1, …, L−1]`.
pub fn positive_ula(virtual_array: &VirtualArray) -> Result<Vec<i64>> {
    let len = virtual_array.ula_length();
    if len < 2 {
        return Err(Error::DegenerateSignal(format!(
            "co-array ULA length {len} < 2"
        )));
    }
    Ok((0..len as i64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn brute_coarray(positions: &[u64], q: u32) -> BTreeSet<i64> {
        let mut level: BTreeSet<i64> = BTreeSet::from([0]);
        for _ in 0..q {
            let mut next = BTreeSet::new();
            for &s in &level {
                for &a in positions {
                    for &b in positions {
                        next.insert(s + a as i64 - b as i64);
                    }
                }
            }
            level = next;
        }
        level
    }

    fn brute_multiplicity(positions: &[u64], q: u32, lag: i64) -> u128 {
        let n = positions.len();
        let total = n.pow(2 * q);
        (0..total)
            .filter(|&mut_idx| {
                let mut idx = mut_idx;
                let mut s = 0i64;
                for slot in 0..2 * q {
                    let x = positions[idx % n] as i64;
                    idx /= n;
                    s += if slot < q { x } else { -x };
                }
                s == lag
            })
            .count() as u128
    }

    #[test]
    fn nested_small_cases() {
        assert_eq!(
            nested_positions(1, &[2, 2]).unwrap().positions(),
            &[0, 1, 2, 4]
        );
        let two_level = nested_positions(2, &[2, 2, 2, 2]).unwrap();
        assert_eq!(two_level.positions(), &[0, 1, 2, 4, 8, 16]);
        let four = nested_positions(4, &[2; 8]).unwrap();
        let expected: Vec<u64> = std::iter::once(0).chain((0..=8).map(|j| 1 << j)).collect();
        assert_eq!(four.positions(), expected.as_slice());
        assert_eq!(four.max_position(), 256);
    }

    #[test]
    fn nested_rejects_bad_config() {
        assert!(nested_positions(0, &[]).is_err());
        assert!(nested_positions(2, &[2, 2, 2]).is_err());
        assert!(nested_positions(1, &[2, 0]).is_err());
    }

    #[test]
    fn pairwise_differences() {
        let p = PhysicalArray::from_positions(&[1], 1).unwrap();
        let v = coarray(&p, 1).unwrap();
        assert_eq!(v.positions(), &[-1, 0, 1]);
        assert_eq!(v.ula_length(), 2);
        assert_eq!(positive_ula(&v).unwrap(), vec![0, 1]);
    }

    #[test]
    fn figure_two_array_has_ula_31() {
        let p = PhysicalArray::from_positions(&[0, 1, 2, 4, 8], 2).unwrap();
        let v = coarray(&p, 2).unwrap();
        for k in -15..=15 {
            assert!(v.contains(k), "missing {k}");
        }
        assert!(v.symmetric_ula_size() >= 31);
        // The run actually extends to ±16 (8 + 8 − 0 − 0).
        assert_eq!(v.ula_length(), 17);
    }

    #[test]
    fn all_two_levels_meet_theorem_bound() {
        for q in 1..=4u32 {
            let levels = vec![2; 2 * q as usize];
            let p = nested_positions(q, &levels).unwrap();
            let v = coarray(&p, q).unwrap();
            assert!(v.symmetric_ula_size() as u64 >= nested_ula_bound(&levels));
            assert!(v.symmetric_ula_size() as u64 >= 2 * (1u64 << (2 * q)) - 1);
        }
    }

    #[test]
    fn degenerate_array_has_no_ula() {
        let p = PhysicalArray::from_positions(&[0], 1).unwrap();
        let v = coarray(&p, 1).unwrap();
        assert_eq!(v.ula_length(), 1);
        assert!(positive_ula(&v).is_err());
    }

    #[test]
    fn multiplicities_match_enumeration() {
        let pos = [0u64, 1, 3, 7];
        let p = PhysicalArray::from_positions(&pos, 2).unwrap();
        let v = coarray(&p, 2).unwrap();
        for lag in -15..=15 {
            assert_eq!(
                v.multiplicity(lag),
                brute_multiplicity(&pos, 2, lag),
                "lag {lag}"
            );
        }
    }

    proptest! {
        #[test]
        fn theorem_bound_holds(q in 1u32..=3, seed in proptest::collection::vec(2u32..=3, 6)) {
            let levels = &seed[..2 * q as usize];
            let p = nested_positions(q, levels).unwrap();
            let v = coarray(&p, q).unwrap();
            prop_assert!(v.symmetric_ula_size() as u64 >= nested_ula_bound(levels));
        }

        #[test]
        fn coarray_matches_brute_force_and_is_symmetric(
            pos in proptest::collection::btree_set(0u64..20, 1..5),
            q in 1u32..=2,
        ) {
            let pos: Vec<u64> = pos.into_iter().collect();
            let p = PhysicalArray::from_positions(&pos, q).unwrap();
            let v = coarray(&p, q).unwrap();
            let got: BTreeSet<i64> = v.positions().iter().copied().collect();
            prop_assert_eq!(&got, &brute_coarray(p.positions(), q));
            for &x in v.positions() {
                prop_assert!(v.contains(-x));
            }
        }

        #[test]
        fn adding_a_position_never_shrinks(
            pos in proptest::collection::btree_set(0u64..24, 1..5),
            extra in 0u64..24,
            q in 1u32..=2,
        ) {
            let base: Vec<u64> = pos.iter().copied().collect();
            let mut bigger = base.clone();
            bigger.push(extra);
            let a = coarray(&PhysicalArray::from_positions(&base, q).unwrap(), q).unwrap();
            let b = coarray(&PhysicalArray::from_positions(&bigger, q).unwrap(), q).unwrap();
            for &x in a.positions() {
                prop_assert!(b.contains(x));
            }
            prop_assert!(b.ula_length() >= a.ula_length());
        }
    }
}
