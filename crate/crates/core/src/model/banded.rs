//! Banded LU factorisation with partial pivoting (LAPACK `gbtrf` layout
//! semantics, row-major storage).

#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row width: `kl` sub-diagonals, diagonal, `ku + kl` super-diagonals
    /// (the extra `kl` absorb fill-in from row swaps).
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[cfg(test)]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    /// In-place LU. Returns `false` on an exactly singular pivot.
    pub fn factorize(&mut self) -> bool {
        let n = self.n;
        let kl = self.kl;
        let span = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let a = self.get(i, k).abs();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            self.pivots[k] = p;
            if best == 0.0 {
                return false;
            }
            let last_col = (k + span).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let l = self.get(i, k) / pivot;
                self.set(i, k, l);
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let ukj = self.get(k, j);
                        let at = self.idx(i, j);
                        self.data[at] -= l * ukj;
                    }
                }
            }
        }
        true
    }

    /// Solves `A x = b` in place using the factorisation.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let kl = self.kl;
        let span = self.ku + self.kl;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.get(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + span).min(n - 1) {
                s -= self.get(k, j) * b[j];
            }
            b[k] = s / self.get(k, k);
        }
    }
}
