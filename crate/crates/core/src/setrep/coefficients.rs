use rand::Rng;

use super::config::CoefficientMode;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// `n choose r`, exact in `u128`.
pub fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Nondecreasing multi-indices over `1..=m` of length `k`, in lexicographic
/// order.
pub fn simplex_indices(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for u in start..=m {
            cur.push(u);
            rec(m, k, u, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(m, k, 1, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// All `m^k` multi-indices over `1..=m`, in lexicographic order.
pub fn full_indices(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![1; k];
    if m == 0 {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut pos = k;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if cur[pos] < m {
                cur[pos] += 1;
                cur[pos + 1..].iter_mut().for_each(|c| *c = 1);
                break;
            }
        }
    }
}

pub fn entry_count(mode: CoefficientMode, m: usize, k: usize) -> u128 {
    match mode {
        CoefficientMode::Simplex => binomial((k + m - 1) as u64, (m - 1) as u64),
        CoefficientMode::Full => (m as u128).pow(k as u32),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientEntry<P = Tensor> {
    /// One-based bank indices `(u_1, …, u_k)`.
    pub index: Vec<usize>,
    pub value: P,
}

/// The learnable `α` vectors, one per multi-index, each of width `d_rep`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTable<P = Tensor> {
    pub mode: CoefficientMode,
    pub m: usize,
    pub k: usize,
    pub d_rep: usize,
    pub entries: Vec<CoefficientEntry<P>>,
}

impl<P> CoefficientTable<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> CoefficientTable<Q> {
        CoefficientTable {
            mode: self.mode,
            m: self.m,
            k: self.k,
            d_rep: self.d_rep,
            entries: self
                .entries
                .iter()
                .map(|e| CoefficientEntry {
                    index: e.index.clone(),
                    value: f(&e.value),
                })
                .collect(),
        }
    }

    pub fn get(&self, index: &[usize]) -> Option<&P> {
        self.entries.iter().find(|e| e.index == index).map(|e| &e.value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CoefficientTable<Tensor> {
    fn indices(mode: CoefficientMode, m: usize, k: usize) -> Result<Vec<Vec<usize>>> {
        if m == 0 || k == 0 {
            return Err(Error::Config("coefficient table needs M, k ≥ 1".into()));
        }
        match mode {
            CoefficientMode::Simplex => Ok(simplex_indices(m, k)),
            CoefficientMode::Full if k == 2 => Ok(full_indices(m, k)),
            CoefficientMode::Full => Err(Error::Config(format!("full coefficient mode needs k = 2, got {k}"))),
        }
    }

    pub fn from_fn(
        mode: CoefficientMode,
        m: usize,
        k: usize,
        d_rep: usize,
        mut f: impl FnMut(&[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        let entries = Self::indices(mode, m, k)?
            .into_iter()
            .map(|index| {
                let v = f(&index);
                if v.len() != d_rep {
                    return Err(Error::dim("coefficient entry", &[d_rep], &[v.len()]));
                }
                Ok(CoefficientEntry {
                    value: Tensor::vector(v).with_grad(),
                    index,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CoefficientTable {
            mode,
            m,
            k,
            d_rep,
            entries,
        })
    }

    pub fn ones(mode: CoefficientMode, m: usize, k: usize, d_rep: usize) -> Result<Self> {
        Self::from_fn(mode, m, k, d_rep, |_| vec![1.0; d_rep])
    }

    /// All-ones plus uniform noise in `[-noise, noise]`.
    pub fn init(mode: CoefficientMode, m: usize, k: usize, d_rep: usize, noise: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::from_fn(mode, m, k, d_rep, |_| {
            (0..d_rep)
                .map(|_| 1.0 + if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 })
                .collect()
        })
    }

    pub fn bind(&self, g: &mut Graph) -> CoefficientTable<Var> {
        self.map(&mut |t| g.param(t))
    }

    /// Checks entry count, index order, and vector widths.
    pub fn check(&self) -> Result<()> {
        let want = Self::indices(self.mode, self.m, self.k)?;
        if want.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "coefficient table has {} entries, expected {}",
                self.entries.len(),
                want.len()
            )));
        }
        for (e, idx) in self.entries.iter().zip(&want) {
            if &e.index != idx {
                return Err(Error::Config(format!(
                    "coefficient index {:?} where {:?} was expected",
                    e.index, idx
                )));
            }
            if e.value.numel() != self.d_rep {
                return Err(Error::dim("coefficient entry", &[self.d_rep], e.value.shape()));
            }
        }
        Ok(())
    }
}

/// Folds a full (`k = 2`) table into the equivalent simplex table:
/// diagonal entries are kept and `α'_{uv} = α_{uv} + α_{vu}` for `u < v`.
pub fn simplex_full_merge(full: &CoefficientTable) -> Result<CoefficientTable> {
    if full.k != 2 {
        return Err(Error::Unsupported(format!("merging a k = {} table", full.k)));
    }
    if full.mode != CoefficientMode::Full {
        return Err(Error::Config("merge expects a full-mode table".into()));
    }
    full.check()?;
    let fetch = |i: &[usize]| full.get(i).expect("full table is complete").data().to_vec();
    CoefficientTable::from_fn(CoefficientMode::Simplex, full.m, 2, full.d_rep, |idx| {
        let (u, v) = (idx[0], idx[1]);
        if u == v {
            fetch(&[u, u])
        } else {
            fetch(&[u, v]).iter().zip(fetch(&[v, u])).map(|(a, b)| a + b).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_counts_match_binomial() {
        for m in 1..=5 {
            for k in 1..=4 {
                let idx = simplex_indices(m, k);
                assert_eq!(idx.len() as u128, entry_count(CoefficientMode::Simplex, m, k));
                assert!(idx.iter().all(|i| i.windows(2).all(|w| w[0] <= w[1])));
                assert_eq!(full_indices(m, k).len() as u128, entry_count(CoefficientMode::Full, m, k));
            }
        }
        assert_eq!(simplex_indices(2, 2), vec![vec![1, 1], vec![1, 2], vec![2, 2]]);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn merge_example() {
        let vals = [([1, 1], 1.0), ([1, 2], 2.0), ([2, 1], 3.0), ([2, 2], 4.0)];
        let full = CoefficientTable::from_fn(CoefficientMode::Full, 2, 2, 1, |i| {
            vec![vals.iter().find(|(j, _)| j == i).unwrap().1]
        })
        .unwrap();
        let s = simplex_full_merge(&full).unwrap();
        assert_eq!(s.get(&[1, 1]).unwrap().data(), &[1.0]);
        assert_eq!(s.get(&[1, 2]).unwrap().data(), &[5.0]);
        assert_eq!(s.get(&[2, 2]).unwrap().data(), &[4.0]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn merge_of_symmetric_table_doubles_off_diagonal() {
        let full = CoefficientTable::from_fn(CoefficientMode::Full, 3, 2, 2, |i| {
            let (a, b) = (i[0].min(i[1]) as f64, i[0].max(i[1]) as f64);
            vec![a + 10.0 * b, a * b]
        })
        .unwrap();
        let s = simplex_full_merge(&full).unwrap();
        for e in &s.entries {
            let orig = full.get(&e.index).unwrap().data();
            let factor = if e.index[0] == e.index[1] { 1.0 } else { 2.0 };
            let want: Vec<f64> = orig.iter().map(|x| x * factor).collect();
            assert_eq!(e.value.data(), &want[..]);
        }
    }

    #[test]
    fn merge_rejects_other_orders() {
        let t = CoefficientTable::ones(CoefficientMode::Simplex, 3, 3, 2).unwrap();
        assert!(matches!(simplex_full_merge(&t), Err(Error::Unsupported(_))));
    }
}
