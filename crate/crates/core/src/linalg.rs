//! Sparse symmetric LDLᵀ without pivoting, with a minimum-degree ordering
//! computed once per sparsity pattern. Pivot signs give the inertia, which
//! the interior-point solver uses for its Hessian correction.

use crate::scalar::Scalar;

/// Counts of positive, negative and zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Symbolic analysis plus numeric storage for one pattern.
#[derive(Debug, Clone)]
pub struct SparseLdl<T> {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Upper-triangular permuted pattern by column: (row, value slot).
    a_colptr: Vec<usize>,
    a_entries: Vec<(usize, usize)>,
    parent: Vec<usize>,
    l_colptr: Vec<usize>,
    l_rows: Vec<usize>,
    l_vals: Vec<T>,
    d: Vec<T>,
    // workspaces
    y: Vec<T>,
    flag: Vec<usize>,
    pattern: Vec<usize>,
    lnz: Vec<usize>,
}

const NONE: usize = usize::MAX;

/// Greedy minimum-degree ordering. Ties break on `class` (lower first),
/// then index, so results are deterministic.
pub fn minimum_degree(n: usize, entries: &[(usize, usize)], class: &[u8]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(r, c) in entries {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| !eliminated[i])
            .min_by_key(|&i| (adj[i].len(), class.get(i).copied().unwrap_or(0), i))
            .expect("uneliminated node remains");
        eliminated[v] = true;
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &a in &nbrs {
            let list = &mut adj[a];
            if let Ok(pos) = list.binary_search(&v) {
                list.remove(pos);
            }
            let mut merged = Vec::with_capacity(list.len() + nbrs.len());
            let (mut i, mut j) = (0, 0);
            while i < list.len() || j < nbrs.len() {
                let next = match (list.get(i), nbrs.get(j)) {
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if y < x => {
                        j += 1;
                        y
                    }
                    (Some(&x), Some(_)) => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != a {
                    merged.push(next);
                }
            }
            *list = merged;
        }
    }
    order
}

impl<T: Scalar> SparseLdl<T> {
    /// `entries[k] = (row, col)` is the position of value slot `k`; either
    /// triangle may be given, duplicates are summed. Every diagonal must be
    /// present in `entries`.
    pub fn analyze(n: usize, entries: &[(usize, usize)], class: &[u8]) -> Self {
        let perm = minimum_degree(n, entries, class);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (slot, &(r, c)) in entries.iter().enumerate() {
            let (pr, pc) = (iperm[r], iperm[c]);
            let (row, col) = if pr <= pc { (pr, pc) } else { (pc, pr) };
            cols[col].push((row, slot));
        }
        let mut a_colptr = Vec::with_capacity(n + 1);
        let mut a_entries = Vec::with_capacity(entries.len());
        a_colptr.push(0);
        for col in &mut cols {
            col.sort_unstable();
            a_entries.extend_from_slice(col);
            a_colptr.push(a_entries.len());
        }

        // elimination tree and column counts
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &(row, _) in &a_entries[a_colptr[k]..a_colptr[k + 1]] {
                let mut i = row;
                while i < k && flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_colptr = Vec::with_capacity(n + 1);
        l_colptr.push(0);
        for k in 0..n {
            l_colptr.push(l_colptr[k] + lnz[k]);
        }
        let nnz = l_colptr[n];
        SparseLdl {
            n,
            perm,
            a_colptr,
            a_entries,
            parent,
            l_colptr,
            l_rows: vec![0; nnz],
            l_vals: vec![T::zero(); nnz],
            d: vec![T::zero(); n],
            y: vec![T::zero(); n],
            flag,
            pattern: vec![0; n],
            lnz,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_colptr[self.n]
    }

    /// Numeric factorization of the matrix whose slot values are `values`.
    /// Returns `None` when a pivot is exactly zero or non-finite.
    pub fn factor(&mut self, values: &[T]) -> Option<Inertia> {
        let n = self.n;
        let mut inertia = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        for k in 0..n {
            self.y[k] = T::zero();
            let mut top = n;
            self.flag[k] = k;
            self.lnz[k] = 0;
            for idx in self.a_colptr[k]..self.a_colptr[k + 1] {
                let (row, slot) = self.a_entries[idx];
                self.y[row] += values[slot];
                let mut len = 0;
                let mut i = row;
                while self.flag[i] != k {
                    self.pattern[len] = i;
                    len += 1;
                    self.flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    self.pattern[top] = self.pattern[len];
                }
            }
            let mut dk = self.y[k];
            self.y[k] = T::zero();
            for t in top..n {
                let i = self.pattern[t];
                let yi = self.y[i];
                self.y[i] = T::zero();
                let start = self.l_colptr[i];
                let end = start + self.lnz[i];
                for p in start..end {
                    let r = self.l_rows[p];
                    self.y[r] -= self.l_vals[p] * yi;
                }
                let lki = yi / self.d[i];
                dk -= lki * yi;
                self.l_rows[end] = k;
                self.l_vals[end] = lki;
                self.lnz[i] += 1;
            }
            if dk == T::zero() || !dk.is_finite() {
                for t in 0..n {
                    self.y[t] = T::zero();
                }
                return None;
            }
            if dk > T::zero() {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            self.d[k] = dk;
        }
        Some(inertia)
    }

    /// Solves in place with the most recent factorization.
    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let xj = x[j];
            if xj != T::zero() {
                for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                    x[self.l_rows[p]] -= self.l_vals[p] * xj;
                }
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                acc -= self.l_vals[p] * x[self.l_rows[p]];
            }
            x[j] = acc;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

/// `y = A x` for a symmetric matrix given by slot positions (either
/// triangle; off-diagonals are mirrored).
pub fn sym_matvec<T: Scalar>(entries: &[(usize, usize)], values: &[T], x: &[T], y: &mut [T]) {
    y.iter_mut().for_each(|v| *v = T::zero());
    for (&(r, c), &v) in entries.iter().zip(values) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(n: usize, entries: &[(usize, usize)], values: &[f64]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for (&(r, c), &v) in entries.iter().zip(values) {
            a[r][c] += v;
            if r != c {
                a[c][r] += v;
            }
        }
        a
    }

    #[test]
    fn solves_random_quasidefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let np = 6 + trial % 5;
            let nc = 3;
            let n = np + nc;
            let mut entries = Vec::new();
            let mut values = Vec::new();
            for i in 0..np {
                entries.push((i, i));
                values.push(2.0 + rng.gen::<f64>());
            }
            for i in 1..np {
                if rng.gen_bool(0.4) {
                    entries.push((i, i - 1));
                    values.push(rng.gen_range(-0.5..0.5));
                }
            }
            for c in 0..nc {
                entries.push((np + c, np + c));
                values.push(-1e-8);
                for j in 0..np {
                    if rng.gen_bool(0.5) || j == c {
                        entries.push((np + c, j));
                        values.push(rng.gen_range(-1.0..1.0));
                    }
                }
            }
            let class: Vec<u8> = (0..n).map(|i| u8::from(i >= np)).collect();
            let mut ldl = SparseLdl::<f64>::analyze(n, &entries, &class);
            let inertia = ldl.factor(&values).expect("nonsingular");
            assert_eq!(inertia.positive, np);
            assert_eq!(inertia.negative, nc);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = rhs.clone();
            ldl.solve(&mut x);
            let a = dense(n, &entries, &values);
            for i in 0..n {
                let ax: f64 = (0..n).map(|j| a[i][j] * x[j]).sum();
                assert!((ax - rhs[i]).abs() < 1e-6, "trial {trial} row {i}");
            }
            let mut y = vec![0.0; n];
            sym_matvec(&entries, &values, &x, &mut y);
            for i in 0..n {
                assert!((y[i] - rhs[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn detects_indefinite_primal_block() {
        // [[-1, 0], [0, 2]] has one negative pivot
        let entries = vec![(0, 0), (1, 1), (1, 0)];
        let mut ldl = SparseLdl::<f64>::analyze(2, &entries, &[0, 0]);
        let inertia = ldl.factor(&[-1.0, 2.0, 0.0]).unwrap();
        assert_eq!((inertia.positive, inertia.negative), (1, 1));
        assert!(ldl.factor(&[0.0, 2.0, 0.0]).is_none());
    }

    #[test]
    fn ordering_is_a_permutation() {
        let entries = vec![(0, 0), (1, 1), (2, 2), (3, 3), (3, 0), (3, 1), (3, 2)];
        let mut order = minimum_degree(4, &entries, &[0; 4]);
        assert_eq!(order[..3], [0, 1, 2]);
        order.sort_unstable();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn works_in_single_precision() {
        let entries = vec![(0, 0), (1, 1), (1, 0)];
        let mut ldl = SparseLdl::<f32>::analyze(2, &entries, &[0, 0]);
        ldl.factor(&[4.0, 3.0, 1.0]).unwrap();
        let mut b = vec![5.0f32, 4.0];
        ldl.solve(&mut b);
        assert!((b[0] - 1.0).abs() < 1e-5 && (b[1] - 1.0).abs() < 1e-5);
    }
}
