//! Independent oracles shared by the integration suites.
//!
//! These deliberately avoid the library's own algorithms: rank is checked
//! with exact rational row reduction, the co-occurrence matrix with a
//! per-pixel double loop over accessor calls, and the moment of inertia
//! with its marginal decomposition.

// each test target uses its own subset of the oracles
#![allow(dead_code)]

use dustvision::grcm::GrcmProbability;
use dustvision::imaging::QuantizedImage;
use dustvision::rank::RankMatrix;
use dustvision::synthgen::SplitMix64;
use num::{BigInt, BigRational, Zero};

/// Exact rank by textbook Gauss-Jordan elimination over the rationals.
pub fn rational_rref_rank(entries: &[i64], side: usize) -> u32 {
    assert_eq!(entries.len(), side * side);
    let mut m: Vec<BigRational> = entries
        .iter()
        .map(|&e| BigRational::from(BigInt::from(e)))
        .collect();
    let mut rank = 0u32;
    let mut pivot_row = 0usize;
    for col in 0..side {
        if pivot_row == side {
            break;
        }
        let Some(found) = (pivot_row..side).find(|&r| !m[r * side + col].is_zero()) else {
            continue;
        };
        for c in 0..side {
            m.swap(found * side + c, pivot_row * side + c);
        }
        let pivot = m[pivot_row * side + col].clone();
        for c in col..side {
            m[pivot_row * side + c] = &m[pivot_row * side + c] / &pivot;
        }
        for r in 0..side {
            if r == pivot_row {
                continue;
            }
            let factor = m[r * side + col].clone();
            if factor.is_zero() {
                continue;
            }
            for c in col..side {
                let delta = &factor * &m[pivot_row * side + c];
                m[r * side + c] = &m[r * side + c] - delta;
            }
        }
        pivot_row += 1;
        rank += 1;
    }
    rank
}

/// Joint histogram recomputed cell-by-cell from the per-pixel accessors.
pub fn brute_force_joint_histogram(gray: &QuantizedImage, ranks: &RankMatrix) -> Vec<u64> {
    let li = gray.gray_levels() as usize;
    let lm = ranks.rank_levels() as usize;
    let margin = ranks.margin();
    let mut counts = vec![0u64; li * lm];
    for vy in 0..ranks.valid_height() {
        for vx in 0..ranks.valid_width() {
            let i = gray.level(vx + margin, vy + margin) as usize;
            let j = ranks.level(vx, vy) as usize;
            counts[i * lm + j] += 1;
        }
    }
    counts
}

/// Moment of inertia through the marginal identity
/// `sum_ij (i^2 + j^2) P = sum_i i^2 P_i. + sum_j j^2 P_.j`.
pub fn inertia_via_marginals(p: &GrcmProbability) -> f64 {
    let li = p.gray_levels() as usize;
    let lm = p.rank_levels() as usize;
    let rows: f64 = (0..li)
        .map(|i| {
            let marginal: f64 = (0..lm).map(|j| p.prob(i as u16, j as u32)).sum();
            (i * i) as f64 * marginal
        })
        .sum();
    let cols: f64 = (0..lm)
        .map(|j| {
            let marginal: f64 = (0..li).map(|i| p.prob(i as u16, j as u32)).sum();
            (j * j) as f64 * marginal
        })
        .sum();
    rows + cols
}

/// A seeded random window: either dense uniform entries or a sum of
/// `target_rank` outer products (so rank-deficient cases are exercised).
pub fn random_window(rng: &mut SplitMix64, side: usize) -> Vec<i64> {
    if rng.next_u64().is_multiple_of(2) {
        (0..side * side)
            .map(|_| (rng.next_u64() % 256) as i64)
            .collect()
    } else {
        let target_rank = 1 + (rng.next_u64() as usize) % side;
        let mut m = vec![0i64; side * side];
        for _ in 0..target_rank {
            let u: Vec<i64> = (0..side).map(|_| (rng.next_u64() % 7) as i64).collect();
            let v: Vec<i64> = (0..side).map(|_| (rng.next_u64() % 7) as i64).collect();
            for r in 0..side {
                for c in 0..side {
                    m[r * side + c] += u[r] * v[c];
                }
            }
        }
        m
    }
}
