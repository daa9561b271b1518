//! Dense row-major bit matrices packed into `u64` words.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words,
            data: vec![0; rows * words],
        }
    }

    pub fn from_words(rows: usize, cols: usize, data: Vec<u64>) -> Option<Self> {
        let words = cols.div_ceil(64);
        if data.len() != rows * words {
            return None;
        }
        let m = Self {
            rows,
            cols,
            words,
            data,
        };
        // padding bits past `cols` must stay clear for popcount products
        let pad = cols % 64;
        if pad != 0 && (0..rows).any(|r| m.row(r)[words - 1] >> pad != 0) {
            return None;
        }
        Some(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }

    pub fn words(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.data[r * self.words + c / 64] >> (c % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.data[r * self.words + c / 64];
        let mask = 1u64 << (c % 64);
        if v {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.words..(r + 1) * self.words]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            for (wi, &word) in row.iter().enumerate() {
                let mut w = word;
                while w != 0 {
                    let b = w.trailing_zeros() as usize;
                    t.set(wi * 64 + b, r, true);
                    w &= w - 1;
                }
            }
        }
        t
    }

    /// Row `r` of `self * other` over the integers, where `other_t` is the
    /// transpose of `other`.
    #[inline]
    pub fn product_row(&self, r: usize, other_t: &BitMatrix, out: &mut [u32]) {
        let a = self.row(r);
        for (c, slot) in out.iter_mut().enumerate() {
            let b = other_t.row(c);
            *slot = a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_roundtrip() {
        let mut m = BitMatrix::zeros(3, 70);
        m.set(0, 69, true);
        m.set(2, 1, true);
        m.set(1, 64, true);
        let t = m.transpose();
        assert!(t.get(69, 0) && t.get(1, 2) && t.get(64, 1));
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn product_counts_overlaps() {
        let mut a = BitMatrix::zeros(1, 3);
        let mut b = BitMatrix::zeros(3, 2);
        a.set(0, 0, true);
        a.set(0, 2, true);
        b.set(0, 0, true);
        b.set(2, 0, true);
        b.set(1, 1, true);
        let mut out = [0u32; 2];
        a.product_row(0, &b.transpose(), &mut out);
        assert_eq!(out, [2, 0]);
    }

    #[test]
    fn from_words_rejects_dirty_padding() {
        assert!(BitMatrix::from_words(1, 3, vec![0b1000]).is_none());
        assert!(BitMatrix::from_words(1, 3, vec![0b101]).is_some());
    }
}
