//! Dynamic programs over an `n × T` emission lattice. Everything is kept in
//! log space.

use std::cmp::Ordering;

/// Borrowed view of one sequence's scores.
pub(crate) struct Lattice<'a> {
    pub n: usize,
    pub tags: usize,
    /// `emission[i * tags + t]`
    pub emission: &'a [f64],
    /// `transition[from * tags + to]`
    pub transition: &'a [f64],
    pub start: &'a [f64],
    pub end: &'a [f64],
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Lattice<'_> {
    #[inline]
    fn e(&self, i: usize, t: usize) -> f64 {
        self.emission[i * self.tags + t]
    }

    #[inline]
    fn tr(&self, s: usize, t: usize) -> f64 {
        self.transition[s * self.tags + t]
    }

    /// Unnormalized log score of one tag-index path. The accumulation order
    /// matches [`Lattice::kbest`], so equal paths give bitwise-equal scores.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        let mut s = self.start[path[0]] + self.e(0, path[0]);
        for i in 1..path.len() {
            s = s + self.tr(path[i - 1], path[i]) + self.e(i, path[i]);
        }
        s + self.end[path[path.len() - 1]]
    }

    /// Forward log-potentials `alpha[i * T + t]`.
    pub fn forward(&self) -> Vec<f64> {
        let t_n = self.tags;
        let mut alpha = vec![0.0; self.n * t_n];
        for t in 0..t_n {
            alpha[t] = self.start[t] + self.e(0, t);
        }
        for i in 1..self.n {
            let (prev, cur) = alpha.split_at_mut(i * t_n);
            let prev = &prev[(i - 1) * t_n..];
            for t in 0..t_n {
                cur[t] = log_sum_exp((0..t_n).map(|s| prev[s] + self.tr(s, t))) + self.e(i, t);
            }
        }
        alpha
    }

    /// Backward log-potentials `beta[i * T + t]` (excluding position `i`'s emission).
    pub fn backward(&self) -> Vec<f64> {
        let t_n = self.tags;
        let mut beta = vec![0.0; self.n * t_n];
        let last = (self.n - 1) * t_n;
        beta[last..last + t_n].copy_from_slice(self.end);
        for i in (0..self.n - 1).rev() {
            let (cur, next) = beta.split_at_mut((i + 1) * t_n);
            let cur = &mut cur[i * t_n..];
            for s in 0..t_n {
                cur[s] = log_sum_exp((0..t_n).map(|t| self.tr(s, t) + self.e(i + 1, t) + next[t]));
            }
        }
        beta
    }

    pub fn log_partition_from(&self, alpha: &[f64]) -> f64 {
        let last = (self.n - 1) * self.tags;
        log_sum_exp((0..self.tags).map(|t| alpha[last + t] + self.end[t]))
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition_from(&self.forward())
    }

    /// Exact top-`k` paths by score, ties broken by the lexicographically
    /// smallest tag-index sequence.
    ///
    /// Each lattice cell keeps its `k` best prefixes under that same total
    /// order. Two full paths sharing a suffix compare exactly as their
    /// prefixes do, so no path of the global top-`k` is ever pruned.
    pub fn kbest(&self, k: usize) -> Vec<(Vec<usize>, f64)> {
        let t_n = self.tags;
        let mut cells: Vec<Vec<(Vec<usize>, f64)>> = (0..t_n)
            .map(|t| vec![(vec![t], self.start[t] + self.e(0, t))])
            .collect();
        for i in 1..self.n {
            let mut next = Vec::with_capacity(t_n);
            for t in 0..t_n {
                let mut cands: Vec<(Vec<usize>, f64)> = Vec::with_capacity(t_n * k);
                for (s, cell) in cells.iter().enumerate() {
                    let tr = self.tr(s, t);
                    for (path, score) in cell {
                        cands.push((path.clone(), score + tr + self.e(i, t)));
                    }
                }
                keep_best(&mut cands, k);
                for (path, _) in cands.iter_mut() {
                    path.push(t);
                }
                next.push(cands);
            }
            cells = next;
        }
        let mut finals: Vec<(Vec<usize>, f64)> = cells
            .into_iter()
            .enumerate()
            .flat_map(|(t, cell)| cell.into_iter().map(move |(p, s)| (p, s + self.end[t])))
            .collect();
        keep_best(&mut finals, k);
        finals
    }
}

pub(crate) fn rank_order(a: &(Vec<usize>, f64), b: &(Vec<usize>, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn keep_best(cands: &mut Vec<(Vec<usize>, f64)>, k: usize) {
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, rank_order);
        cands.truncate(k);
    }
    cands.sort_by(rank_order);
}
