//! Minimal compressed sparse row matrices.
//!
//! Only what the solvers need: assembly from triplets, matrix-vector products,
//! transposition, diagonal surgery and measure-conjugation. Rows keep their
//! column indices sorted, which makes entrywise combination a linear merge.

#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut col_idx = vec![0usize; triplets.len()];
        let mut values = vec![0.0; triplets.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            let k = cursor[r];
            col_idx[k] = c;
            values[k] = v;
            cursor[r] += 1;
        }
        // sort each row, then compact duplicates
        let mut out_col = Vec::with_capacity(col_idx.len());
        let mut out_val = Vec::with_capacity(values.len());
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            scratch.clear();
            for k in counts[r]..cursor[r] {
                scratch.push((col_idx[k], values[k]));
            }
            scratch.sort_unstable_by_key(|e| e.0);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut v = scratch[i].1;
                let mut j = i + 1;
                while j < scratch.len() && scratch[j].0 == c {
                    v += scratch[j].1;
                    j += 1;
                }
                out_col.push(c);
                out_val.push(v);
                i = j;
            }
            row_ptr[r + 1] = out_col.len();
        }
        Csr { n_rows, n_cols, row_ptr, col_idx: out_col, values: out_val }
    }

    pub fn identity(n: usize) -> Csr {
        Csr {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    /// y = A^T x without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n_rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        self.matvec_transpose(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let mut row_ptr = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = row_ptr[c];
                col_idx[dst] = r;
                values[dst] = self.values[k];
                row_ptr[c] += 1;
            }
        }
        // shift back
        let mut ptr = vec![0usize; self.n_cols + 1];
        ptr[1..].copy_from_slice(&row_ptr[..self.n_cols]);
        // rows of the transpose come out sorted because we sweep r in order
        Csr { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr: ptr, col_idx, values }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows.min(self.n_cols)];
        for r in 0..d.len() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] = self.values[k];
                }
            }
        }
        d
    }

    /// A + diag(d), materialising missing diagonal entries.
    pub fn add_diagonal(&self, d: &[f64]) -> Csr {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + d.len());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((r, self.col_idx[k], self.values[k]));
            }
        }
        for (r, &v) in d.iter().enumerate() {
            triplets.push((r, r, v));
        }
        Csr::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    /// diag(left) * A * diag(right).
    pub fn scale_sides(&self, left: &[f64], right: &[f64]) -> Csr {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[k] = left[r] * self.values[k] * right[self.col_idx[k]];
            }
        }
        out
    }

    /// alpha*A + beta*B with pattern union; rows stay sorted.
    pub fn linear_combination(alpha: f64, a: &Csr, beta: f64, b: &Csr) -> Csr {
        assert_eq!(a.n_rows, b.n_rows);
        assert_eq!(a.n_cols, b.n_cols);
        let mut row_ptr = vec![0usize; a.n_rows + 1];
        let mut col_idx = Vec::with_capacity(a.nnz() + b.nnz());
        let mut values = Vec::with_capacity(a.nnz() + b.nnz());
        for r in 0..a.n_rows {
            let (mut i, ia_end) = (a.row_ptr[r], a.row_ptr[r + 1]);
            let (mut j, jb_end) = (b.row_ptr[r], b.row_ptr[r + 1]);
            while i < ia_end || j < jb_end {
                let ca = if i < ia_end { a.col_idx[i] } else { usize::MAX };
                let cb = if j < jb_end { b.col_idx[j] } else { usize::MAX };
                if ca < cb {
                    col_idx.push(ca);
                    values.push(alpha * a.values[i]);
                    i += 1;
                } else if cb < ca {
                    col_idx.push(cb);
                    values.push(beta * b.values[j]);
                    j += 1;
                } else {
                    col_idx.push(ca);
                    values.push(alpha * a.values[i] + beta * b.values[j]);
                    i += 1;
                    j += 1;
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Csr { n_rows: a.n_rows, n_cols: a.n_cols, row_ptr, col_idx, values }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }
}

/// Unpreconditioned BiCGStab for mildly nonsymmetric systems (implicit Euler
/// steps of generator transposes). Returns the solution and final residual.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r0 = r.clone();
    let b_norm = norm2(b).max(1e-300);
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r);
    let mut it = 0;
    while res / b_norm > rel_tol && it < max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        let denom = dot(&r0, &v);
        if denom.abs() < 1e-300 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm2(&r);
        it += 1;
        if omega == 0.0 {
            break;
        }
    }
    (x, res / b_norm, it)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
