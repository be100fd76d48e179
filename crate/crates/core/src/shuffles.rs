//! Shuffle permutations: order-preserving interleavings of blocks.
//!
//! A permutation is stored as its image vector: `perm[a]` is the position
//! that source element `a` is sent to (all zero-based). Sources are the
//! blocks laid end to end. Barred permutations carry one extra fixed label
//! at each end, so they have length `m + 2`.
//!
//! Every list is produced in lexicographic order of image vectors. Product
//! shuffles hold one permutation per cube direction and are ordered with
//! direction 1 most significant.

use crate::error::{Error, Result};

pub type Permutation = Vec<usize>;

/// One permutation per cube direction.
pub type ProductShuffle = Vec<Permutation>;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

pub fn multinomial(blocks: &[usize]) -> u128 {
    let mut total = 0;
    let mut acc = 1;
    for &b in blocks {
        total += b;
        acc *= binomial(total, b);
    }
    acc
}

/// Shuffles of consecutive blocks with the given sizes.
pub fn enumerate_blocks(blocks: &[usize]) -> Vec<Permutation> {
    let total: usize = blocks.iter().sum();
    let mut out = Vec::new();
    let mut perm = vec![0; total];
    let free: Vec<usize> = (0..total).collect();
    place(blocks, 0, &free, &mut perm, &mut out);
    out
}

fn place(blocks: &[usize], source: usize, free: &[usize], perm: &mut Permutation, out: &mut Vec<Permutation>) {
    let Some((&size, rest)) = blocks.split_first() else {
        out.push(perm.clone());
        return;
    };
    let mut chosen = Vec::with_capacity(size);
    combinations(free.len(), size, 0, &mut chosen, &mut |picks| {
        for (offset, &p) in picks.iter().enumerate() {
            perm[source + offset] = free[p];
        }
        let remaining: Vec<usize> = (0..free.len())
            .filter(|i| !picks.contains(i))
            .map(|i| free[i])
            .collect();
        place(rest, source + size, &remaining, perm, out);
    });
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        visit(cur);
        return;
    }
    for i in start..=n - (k - cur.len()) {
        cur.push(i);
        combinations(n, k, i + 1, cur, visit);
        cur.pop();
    }
}

/// `Sh(m', m'')`: interleavings of `m'` then `m''` elements.
pub fn enumerate_sh(m1: usize, m2: usize) -> Vec<Permutation> {
    enumerate_blocks(&[m1, m2])
}

/// Barred version of [`enumerate_sh`] on `{0, ..., m'+m''+1}`.
pub fn enumerate_sh_bar(m1: usize, m2: usize) -> Vec<Permutation> {
    enumerate_sh(m1, m2).into_iter().map(|p| bar(&p)).collect()
}

/// Extends a permutation by the two fixed boundary labels.
pub fn bar(perm: &[usize]) -> Permutation {
    let mut out = Vec::with_capacity(perm.len() + 2);
    out.push(0);
    out.extend(perm.iter().map(|p| p + 1));
    out.push(perm.len() + 1);
    out
}

/// Drops the boundary labels of a barred permutation.
pub fn unbar(perm: &[usize]) -> Option<Permutation> {
    let m = perm.len().checked_sub(2)?;
    if perm[0] != 0 || perm[m + 1] != m + 1 {
        return None;
    }
    perm[1..=m]
        .iter()
        .map(|&p| p.checked_sub(1).filter(|&q| q < m))
        .collect()
}

/// Whether `perm` shuffles consecutive blocks of the given sizes.
pub fn is_block_shuffle(perm: &[usize], blocks: &[usize]) -> bool {
    let total: usize = blocks.iter().sum();
    if perm.len() != total {
        return false;
    }
    let mut seen = vec![false; total];
    for &p in perm {
        if p >= total || std::mem::replace(&mut seen[p], true) {
            return false;
        }
    }
    let mut start = 0;
    for &b in blocks {
        if perm[start..start + b].windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
        start += b;
    }
    true
}

pub fn is_shuffle(perm: &[usize], m1: usize, m2: usize, barred: bool) -> bool {
    if barred {
        unbar(perm).is_some_and(|p| is_block_shuffle(&p, &[m1, m2]))
    } else {
        is_block_shuffle(perm, &[m1, m2])
    }
}

fn check_lengths(k1: &[usize], k2: &[usize]) -> Result<()> {
    if k1.len() != k2.len() {
        return Err(Error::DimensionMismatch(format!(
            "cut tuples of lengths {} and {}",
            k1.len(),
            k2.len()
        )));
    }
    Ok(())
}

fn cartesian(per_direction: Vec<Vec<Permutation>>) -> Vec<ProductShuffle> {
    let mut out: Vec<ProductShuffle> = vec![Vec::new()];
    for options in per_direction {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |p| {
                    let mut next = prefix.clone();
                    next.push(p.clone());
                    next
                })
            })
            .collect();
    }
    out
}

/// `prod_i Sh(k'_i, k''_i)`, barred or not.
pub fn enumerate_product(k1: &[usize], k2: &[usize], barred: bool) -> Result<Vec<ProductShuffle>> {
    check_lengths(k1, k2)?;
    Ok(cartesian(
        k1.iter()
            .zip(k2)
            .map(|(&a, &b)| {
                if barred {
                    enumerate_sh_bar(a, b)
                } else {
                    enumerate_sh(a, b)
                }
            })
            .collect(),
    ))
}

/// Barred product shuffles whose first direction is the concatenation.
pub fn enumerate_sh1(k1: &[usize], k2: &[usize]) -> Result<Vec<ProductShuffle>> {
    check_lengths(k1, k2)?;
    if k1.is_empty() {
        return Ok(vec![Vec::new()]);
    }
    let mut per: Vec<Vec<Permutation>> = vec![vec![bar(&(0..k1[0] + k2[0]).collect::<Vec<_>>())]];
    per.extend(k1[1..].iter().zip(&k2[1..]).map(|(&a, &b)| enumerate_sh_bar(a, b)));
    Ok(cartesian(per))
}

/// Shuffles of one `k'` block with `l` copies of `k''` in every direction
/// but the last; the last direction is the identity on `l + 1` steps.
pub fn enumerate_shn(k1: &[usize], k2: &[usize], copies: usize) -> Result<Vec<ProductShuffle>> {
    check_lengths(k1, k2)?;
    if copies == 0 {
        return Err(Error::Invalid("at least one copy is required".into()));
    }
    let Some(n) = k1.len().checked_sub(1) else {
        return Ok(vec![Vec::new()]);
    };
    let mut per: Vec<Vec<Permutation>> = (0..n)
        .map(|i| enumerate_blocks(&shn_blocks(k1[i], k2[i], copies)))
        .collect();
    per.push(vec![(0..=copies).collect()]);
    Ok(cartesian(per))
}

pub fn shn_blocks(first: usize, other: usize, copies: usize) -> Vec<usize> {
    let mut blocks = vec![first];
    blocks.extend(std::iter::repeat_n(other, copies));
    blocks
}

pub fn count_sh(m1: usize, m2: usize) -> u128 {
    binomial(m1 + m2, m1)
}

pub fn count_product(k1: &[usize], k2: &[usize]) -> u128 {
    k1.iter().zip(k2).map(|(&a, &b)| count_sh(a, b)).product()
}

pub fn count_sh1(k1: &[usize], k2: &[usize]) -> u128 {
    k1.iter().zip(k2).skip(1).map(|(&a, &b)| count_sh(a, b)).product()
}

pub fn count_shn(k1: &[usize], k2: &[usize], copies: usize) -> u128 {
    let n = k1.len().saturating_sub(1);
    (0..n)
        .map(|i| multinomial(&shn_blocks(k1[i], k2[i], copies)))
        .product()
}

/// Shuffle product of two words, with multiplicity, in the order of
/// [`enumerate_sh`].
pub fn shuffle_words(u: &[usize], v: &[usize]) -> Vec<Vec<usize>> {
    let joined: Vec<usize> = u.iter().chain(v).copied().collect();
    enumerate_sh(u.len(), v.len())
        .into_iter()
        .map(|perm| {
            let mut w = vec![0; joined.len()];
            for (a, &p) in perm.iter().enumerate() {
                w[p] = joined[a];
            }
            w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_families() {
        assert_eq!(enumerate_sh(1, 1), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(enumerate_sh(2, 1).len(), 3);
        assert_eq!(enumerate_sh(0, 3), vec![vec![0, 1, 2]]);
        let bar11 = enumerate_sh_bar(1, 1);
        assert_eq!(bar11, vec![vec![0, 1, 2, 3], vec![0, 2, 1, 3]]);
        assert_eq!(enumerate_sh_bar(0, 0), vec![vec![0, 1]]);
        assert_eq!(enumerate_sh_bar(2, 2).len(), 6);
    }

    #[test]
    fn product_families() {
        assert_eq!(enumerate_product(&[1, 1], &[1, 1], false).unwrap().len(), 4);
        assert_eq!(enumerate_product(&[1, 0], &[1, 2], false).unwrap().len(), 2);
        assert_eq!(enumerate_product(&[0, 0, 0], &[0, 0, 0], true).unwrap().len(), 1);
        assert_eq!(enumerate_sh1(&[1, 1], &[1, 1]).unwrap().len(), 2);
        assert_eq!(enumerate_sh1(&[2, 0], &[2, 0]).unwrap().len(), 1);
        assert_eq!(enumerate_sh1(&[3], &[2]).unwrap().len(), 1);
        assert!(enumerate_product(&[1], &[1, 1], true).is_err());
    }

    #[test]
    fn transport_families() {
        assert_eq!(enumerate_shn(&[1, 0], &[1, 0], 1).unwrap().len(), 2);
        assert_eq!(enumerate_shn(&[0, 0], &[0, 0], 3).unwrap().len(), 1);
        let six = enumerate_shn(&[1, 0], &[1, 0], 2).unwrap();
        assert_eq!(six.len(), 6);
        assert!(six.iter().all(|s| s[1] == vec![0, 1, 2]));
    }

    #[test]
    fn lexicographic_order() {
        let all = enumerate_blocks(&[2, 1, 2]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(all.len() as u128, multinomial(&[2, 1, 2]));
    }

    #[test]
    fn membership() {
        assert!(is_shuffle(&[0, 2, 1, 3], 1, 1, true));
        assert!(!is_shuffle(&[1, 0, 2, 3], 1, 1, true));
        assert!(!is_shuffle(&[1, 0, 2], 2, 1, false));
        assert_eq!(unbar(&[0, 2, 1, 3]), Some(vec![1, 0]));
    }

    #[test]
    fn word_shuffle() {
        let w = shuffle_words(&[7], &[8, 9]);
        assert_eq!(w, vec![vec![7, 8, 9], vec![8, 7, 9], vec![8, 9, 7]]);
    }
}
