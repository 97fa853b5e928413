//! Banded LU with partial pivoting and the cyclic pentadiagonal solver built
//! on it (banded core plus a rank-2 Woodbury correction for the wrap-around
//! corners).

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// LU factorization of a band matrix with `KL` sub- and `KU`
/// super-diagonals. Row interchanges widen the upper band to `KU + KL`.
#[derive(Debug, Clone)]
pub struct BandLu<const KL: usize, const KU: usize> {
    n: usize,
    // row i holds columns i-KL ..= i+KU+KL at offset (j + KL - i)
    rows: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
    // reciprocals of U's diagonal
    inv_diag: Vec<f64>,
}

impl<const KL: usize, const KU: usize> BandLu<KL, KU> {
    const WIDTH: usize = 2 * KL + KU + 1;

    pub fn factor(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = Self::WIDTH;
        let mut rows = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(KL);
            let hi = (i + KU).min(n - 1);
            for j in lo..=hi {
                rows[i * w + j + KL - i] = entry(i, j);
            }
        }
        Self::from_rows(n, rows)
    }

    /// Factors a band already laid out row by row: entry `(i, j)` at
    /// `rows[i * (2 KL + KU + 1) + j + KL - i]`, fill-in slots zero.
    fn from_rows(n: usize, rows: Vec<f64>) -> Result<Self> {
        let mut lu = Self {
            n,
            rows,
            mult: vec![0.0; n * KL],
            piv: vec![0; n],
            inv_diag: Vec::new(),
        };
        lu.eliminate()?;
        let w = Self::WIDTH;
        lu.inv_diag = (0..n).map(|i| 1.0 / lu.rows[i * w + KL]).collect();
        Ok(lu)
    }

    fn eliminate(&mut self) -> Result<()> {
        const { assert!(2 * KL + KU < 16) };
        let n = self.n;
        let w = Self::WIDTH;
        for k in 0..n {
            if k + KU + KL < n {
                self.eliminate_interior(k)?;
                continue;
            }
            let last_row = (k + KL).min(n - 1);
            let len = (k + KU + KL).min(n - 1) - k + 1;
            let mut p = k;
            let mut best = self.rows[k * w + KL].abs();
            for r in k + 1..last_row + 1 {
                let v = self.rows[r * w + KL - (r - k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            self.piv[k] = p;
            if p != k {
                let (top, bottom) = self.rows.split_at_mut(p * w);
                let off = KL - (p - k);
                top[k * w + KL..k * w + KL + len].swap_with_slice(&mut bottom[off..off + len]);
            }
            let mut prow = [0.0f64; 16];
            prow[..len].copy_from_slice(&self.rows[k * w + KL..k * w + KL + len]);
            let pivot = prow[0];
            for r in k + 1..last_row + 1 {
                let start = r * w + KL - (r - k);
                let rrow = &mut self.rows[start..start + len];
                let l = rrow[0] / pivot;
                self.mult[k * KL + (r - k - 1)] = l;
                rrow[0] = 0.0;
                if l != 0.0 {
                    for t in 1..len {
                        rrow[t] -= l * prow[t];
                    }
                }
            }
        }
        Ok(())
    }

    /// Column `k` with the full band below and to the right; all offsets
    /// are compile-time constants relative to row `k`.
    #[inline]
    fn eliminate_interior(&mut self, k: usize) -> Result<()> {
        let w = Self::WIDTH;
        let len = KU + KL + 1;
        let blk = &mut self.rows[k * w..(k + KL + 1) * w];
        // row k + i starts column k at offset KL - i
        let at = |i: usize, t: usize| i * w + KL - i + t;
        let mut p = 0;
        let mut best = blk[at(0, 0)].abs();
        for i in 1..KL + 1 {
            let v = blk[at(i, 0)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Singular(format!("zero pivot in column {k}")));
        }
        self.piv[k] = k + p;
        // unconditional (p = 0 swaps in place): the pivot row is data
        // dependent and a branch here mispredicts
        for t in 0..len {
            blk.swap(at(0, t), at(p, t));
        }
        let mut prow = [0.0f64; 16];
        for t in 0..len {
            prow[t] = blk[at(0, t)];
        }
        let pivot = prow[0];
        for i in 1..KL + 1 {
            let l = blk[at(i, 0)] / pivot;
            self.mult[k * KL + i - 1] = l;
            blk[at(i, 0)] = 0.0;
            if l != 0.0 {
                for t in 1..len {
                    blk[at(i, t)] -= l * prow[t];
                }
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        for k in 0..n {
            self.forward_row(k, b);
        }
        for i in (0..n).rev() {
            self.backward_row(i, b);
        }
    }

    /// Two right-hand sides in one pass; the independent substitution
    /// chains overlap.
    pub fn solve_pair_in_place(&self, b0: &mut [f64], b1: &mut [f64]) {
        let n = self.n;
        assert!(
            b0.len() == n && b1.len() == n,
            "right-hand side length mismatch"
        );
        for k in 0..n {
            self.forward_row(k, b0);
            self.forward_row(k, b1);
        }
        for i in (0..n).rev() {
            self.backward_row(i, b0);
            self.backward_row(i, b1);
        }
    }

    #[inline(always)]
    fn forward_row(&self, k: usize, b: &mut [f64]) {
        let n = self.n;
        b.swap(k, self.piv[k]);
        let bk = b[k];
        let mult = &self.mult[k * KL..k * KL + KL];
        if k + KL < n {
            let tail = &mut b[k + 1..k + 1 + KL];
            for t in 0..KL {
                tail[t] -= mult[t] * bk;
            }
        } else {
            for (x, l) in b[k + 1..].iter_mut().zip(mult) {
                *x -= l * bk;
            }
        }
    }

    #[inline(always)]
    fn backward_row(&self, i: usize, b: &mut [f64]) {
        let n = self.n;
        let w = Self::WIDTH;
        let ubw = KU + KL;
        let row = &self.rows[i * w + KL..i * w + w];
        let mut s = b[i];
        if i + ubw < n {
            let tail = &b[i + 1..i + 1 + ubw];
            for t in 0..ubw {
                s -= row[t + 1] * tail[t];
            }
        } else {
            for (a, x) in row[1..].iter().zip(&b[i + 1..]) {
                s -= a * x;
            }
        }
        b[i] = s * self.inv_diag[i];
    }
}

/// Periodic pentadiagonal matrix: `diags[d + 2][i] = A[i][(i + d) mod n]`
/// for `d ∈ {-2, -1, 0, 1, 2}`.
#[derive(Debug, Clone)]
pub struct CyclicPentadiagonal {
    pub diags: [Vec<f64>; 5],
}

impl CyclicPentadiagonal {
    pub fn n(&self) -> usize {
        self.diags[2].len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for d in 0..5 {
                    let j = (i + n + d - 2) % n;
                    s += self.diags[d][i] * v[j];
                }
                s
            })
            .collect()
    }

    /// Factor once; solve many right-hand sides.
    pub fn factor(&self) -> Result<CyclicSolver> {
        let n = self.n();
        if n < 5 {
            return Err(Error::InvalidGrid(format!(
                "cyclic pentadiagonal solve needs n >= 5, got {n}"
            )));
        }
        let d = &self.diags;
        // corner blocks: rows 0,1 x cols n-2,n-1 and rows n-2,n-1 x cols 0,1
        let c_ur = [[d[0][0], d[1][0]], [0.0, d[0][1]]];
        let c_ll = [[d[4][n - 2], 0.0], [d[3][n - 1], d[4][n - 1]]];
        let gamma = if d[2][0] != 0.0 { -d[2][0] } else { -1.0 };
        // bottom-right correction C_ll C_ur / γ
        let mut br = [[0.0; 2]; 2];
        for (i, row) in br.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (c_ll[i][0] * c_ur[0][j] + c_ll[i][1] * c_ur[1][j]) / gamma;
            }
        }
        const W: usize = BandLu::<2, 2>::WIDTH;
        let mut rows = vec![0.0; n * W];
        for i in 0..n {
            let row = &mut rows[i * W..i * W + W];
            for (dd, diag) in d.iter().enumerate() {
                // column i + dd - 2 sits at offset dd in the band row
                if (2..n + 2).contains(&(i + dd)) {
                    row[dd] = diag[i];
                }
            }
            if i < 2 {
                row[2] -= gamma;
            }
            if i >= n - 2 {
                for j in n - 2..n {
                    if j + 2 >= i && j <= i + 2 {
                        row[j + 2 - i] -= br[i - (n - 2)][j - (n - 2)];
                    }
                }
            }
        }
        let lu = BandLu::<2, 2>::from_rows(n, rows)?;
        // U columns: γ e_0 + C_ll[:,0] at the bottom, γ e_1 + C_ll[:,1]
        let mut z = [vec![0.0; n], vec![0.0; n]];
        for (c, zc) in z.iter_mut().enumerate() {
            zc[c] = gamma;
            zc[n - 2] = c_ll[0][c];
            zc[n - 1] = c_ll[1][c];
        }
        let [z0, z1] = &mut z;
        lu.solve_pair_in_place(z0, z1);
        // V^T x = (x_0 + (C_ur x_tail)_0 / γ ... ): rows of V^T are
        // e_c^T + (C_ur[c][:] / γ) on the last two entries
        let vt =
            |c: usize, x: &[f64]| x[c] + (c_ur[c][0] * x[n - 2] + c_ur[c][1] * x[n - 1]) / gamma;
        let mut cap = [[0.0; 2]; 2];
        for (r, row) in cap.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = if r == c { 1.0 } else { 0.0 } + vt(r, &z[c]);
            }
        }
        let det = cap[0][0] * cap[1][1] - cap[0][1] * cap[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Singular(
                "Woodbury capacitance matrix is singular".into(),
            ));
        }
        Ok(CyclicSolver {
            lu,
            z,
            cap,
            det,
            c_ur,
            gamma,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CyclicSolver {
    lu: BandLu<2, 2>,
    z: [Vec<f64>; 2],
    cap: [[f64; 2]; 2],
    det: f64,
    c_ur: [[f64; 2]; 2],
    gamma: f64,
}

impl CyclicSolver {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut y = rhs.to_vec();
        self.lu.solve_in_place(&mut y);
        let vt = |c: usize, x: &[f64]| {
            x[c] + (self.c_ur[c][0] * x[n - 2] + self.c_ur[c][1] * x[n - 1]) / self.gamma
        };
        let (q0, q1) = (vt(0, &y), vt(1, &y));
        let a0 = (self.cap[1][1] * q0 - self.cap[0][1] * q1) / self.det;
        let a1 = (self.cap[0][0] * q1 - self.cap[1][0] * q0) / self.det;
        for i in 0..n {
            y[i] -= a0 * self.z[0][i] + a1 * self.z[1][i];
        }
        y
    }
}
