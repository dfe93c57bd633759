/// Triplet accumulator for assembling sparse symmetric matrices.
///
/// Duplicate entries are summed when converting to CSR.
#[derive(Debug, Clone)]
pub struct Triplets {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets {
            n,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i as u32, j as u32, v));
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut ent = self.entries.clone();
        ent.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols: Vec<u32> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut k = 0;
        while k < ent.len() {
            let (i, j, mut v) = ent[k];
            k += 1;
            while k < ent.len() && ent[k].0 == i && ent[k].1 == j {
                v += ent[k].2;
                k += 1;
            }
            cols.push(j);
            vals.push(v);
            row_ptr[i as usize + 1] += 1;
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

/// Compressed sparse row matrix. Symmetric matrices store both triangles.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn zero(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// xᵀ A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let mut s = 0.0;
        for i in 0..self.n {
            let mut ri = 0.0;
            for (j, v) in self.row(i) {
                ri += v * y[j];
            }
            s += x[i] * ri;
        }
        s
    }

    /// Maximum absolute asymmetry `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Indices of rows that carry at least one entry with |value| > 0.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.row(i).any(|(_, v)| v != 0.0))
            .collect()
    }

    /// Extract the square submatrix on `keep` (indices must be sorted).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Triplets::new(keep.len());
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if map[j] != usize::MAX {
                    t.push(new_i, map[j], v);
                }
            }
        }
        t.to_csr()
    }

    /// Coordinate text dump `row col value` per line, 0-based, sorted.
    pub fn to_coord_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out.push_str(&format!("{} {} {:.16e}\n", i, j, v));
            }
        }
        out
    }
}

/// Reverse Cuthill–McKee ordering of the adjacency graph of `a`.
///
/// Returns `perm` with `perm[new] = old`. Deterministic: components are
/// visited in ascending start-node order, neighbors in ascending-degree
/// (then index) order.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    loop {
        // pick unvisited node of minimal degree as component seed
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i));
        let seed = match seed {
            Some(s) => s,
            None => break,
        };
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = a
                .row(u)
                .map(|(j, _)| j)
                .filter(|&j| j != u && !visited[j])
                .collect();
            nbrs.sort_unstable_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = Triplets::new(3);
        t.push(0, 1, 1.0);
        t.push(0, 1, 2.0);
        t.push(2, 2, 5.0);
        let m = t.to_csr();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(2, 2), 5.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn mul_and_bilinear_agree() {
        let mut t = Triplets::new(2);
        t.push(0, 0, 2.0);
        t.push(0, 1, -1.0);
        t.push(1, 0, -1.0);
        t.push(1, 1, 2.0);
        let m = t.to_csr();
        let x = [1.0, 3.0];
        let y = m.mul_vec(&x);
        assert_eq!(y, vec![-1.0, 5.0]);
        assert_eq!(m.bilinear(&x, &x), 1.0 * -1.0 + 3.0 * 5.0);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn rcm_is_permutation() {
        let mut t = Triplets::new(5);
        for i in 0..4 {
            t.push(i, i + 1, 1.0);
            t.push(i + 1, i, 1.0);
        }
        for i in 0..5 {
            t.push(i, i, 2.0);
        }
        let m = t.to_csr();
        let mut p = reverse_cuthill_mckee(&m);
        p.sort_unstable();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
    }
}
