//! Canonical keyword combinations.
//!
//! An order-`k` simplex is an unordered set of `k + 1` distinct keywords. It
//! is stored with ids ascending and packs into one `u128`: id `i` of `s`
//! occupies bits `32 * (s - 1 - i)..32 * (s - i)`, so integer order on the
//! packed word equals lexicographic order on the id tuple.

use std::fmt;

use crate::ontology::KeywordId;

/// Highest supported order (quartets).
pub const MAX_ORDER: u8 = 3;
/// Largest combination size.
pub const MAX_ARITY: usize = MAX_ORDER as usize + 1;

#[inline]
pub fn arity(order: u8) -> usize {
    usize::from(order) + 1
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalSimplex {
    arity: u8,
    ids: [KeywordId; MAX_ARITY],
}

impl CanonicalSimplex {
    /// Canonicalises `ids`; `None` if there are repeats or the size is outside `1..=4`.
    pub fn new(ids: &[KeywordId]) -> Option<Self> {
        if ids.is_empty() || ids.len() > MAX_ARITY {
            return None;
        }
        let mut buf = [KeywordId(0); MAX_ARITY];
        buf[..ids.len()].copy_from_slice(ids);
        buf[..ids.len()].sort_unstable();
        if buf[..ids.len()].windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some(Self { arity: ids.len() as u8, ids: buf })
    }

    pub fn ids(&self) -> &[KeywordId] {
        &self.ids[..self.arity as usize]
    }

    pub fn arity(&self) -> usize {
        self.arity as usize
    }

    pub fn order(&self) -> u8 {
        self.arity - 1
    }

    pub fn pack(&self) -> u128 {
        pack(self.ids())
    }

    pub fn unpack(word: u128, arity: usize) -> Self {
        assert!((1..=MAX_ARITY).contains(&arity), "arity {arity} out of range");
        let mut ids = [KeywordId(0); MAX_ARITY];
        for (i, id) in ids.iter_mut().take(arity).enumerate() {
            *id = KeywordId((word >> (32 * (arity - 1 - i))) as u32);
        }
        Self { arity: arity as u8, ids }
    }

    /// Big-endian fixed-width bytes (`4 * arity` of them).
    pub fn to_be_bytes(&self) -> Vec<u8> {
        self.ids().iter().flat_map(|k| k.0.to_be_bytes()).collect()
    }
}

impl fmt::Debug for CanonicalSimplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Simplex").field(&self.ids()).finish()
    }
}

#[inline]
pub(crate) fn pack(ids: &[KeywordId]) -> u128 {
    ids.iter().fold(0u128, |acc, k| (acc << 32) | u128::from(k.0))
}

/// Calls `f` with the packed form of every `arity`-combination of `sorted`.
///
/// `sorted` must be strictly ascending. Emission order is lexicographic.
#[inline]
pub(crate) fn for_each_packed<F: FnMut(u128)>(sorted: &[KeywordId], arity: usize, mut f: F) {
    let n = sorted.len();
    if arity == 0 || n < arity {
        return;
    }
    let v: Vec<u128> = sorted.iter().map(|k| u128::from(k.0)).collect();
    match arity {
        1 => v.iter().for_each(|&a| f(a)),
        2 => {
            for i in 0..n {
                let a = v[i] << 32;
                for &b in &v[i + 1..] {
                    f(a | b);
                }
            }
        }
        3 => {
            for i in 0..n {
                let a = v[i] << 64;
                for j in i + 1..n {
                    let ab = a | (v[j] << 32);
                    for &c in &v[j + 1..] {
                        f(ab | c);
                    }
                }
            }
        }
        4 => {
            for i in 0..n {
                let a = v[i] << 96;
                for j in i + 1..n {
                    let ab = a | (v[j] << 64);
                    for l in j + 1..n {
                        let abc = ab | (v[l] << 32);
                        for &d in &v[l + 1..] {
                            f(abc | d);
                        }
                    }
                }
            }
        }
        _ => panic!("arity {arity} exceeds {MAX_ARITY}"),
    }
}

/// Number of `s`-combinations of `m` items, for the small values met per article.
pub(crate) fn combinations(m: usize, s: usize) -> u64 {
    if s > m {
        return 0;
    }
    let s = s.min(m - s);
    (0..s).fold(1u64, |acc, i| acc * (m - i) as u64 / (i + 1) as u64)
}

/// All order-`k` simplices of a keyword set, in lexicographic order.
///
/// Repeated ids in `keywords` are ignored. Fewer than `k + 1` distinct
/// keywords yields an empty list.
pub fn enumerate_simplices(keywords: &[KeywordId], k: u8) -> Vec<CanonicalSimplex> {
    assert!(k <= MAX_ORDER, "order {k} exceeds {MAX_ORDER}");
    let mut sorted = keywords.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let s = arity(k);
    let mut out = Vec::with_capacity(combinations(sorted.len(), s) as usize);
    for_each_packed(&sorted, s, |w| out.push(CanonicalSimplex::unpack(w, s)));
    out
}
