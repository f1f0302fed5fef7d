//! Sobol low-discrepancy sequence (Joe-Kuo direction numbers, Gray-code
//! ordering).

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 40;
const BITS: usize = 52;

/// `(s, a, m_1..m_s)` for dimensions 2..40; dimension 1 is van der Corput.
const TABLE: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
    (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]),
    (7, 14, &[1, 3, 1, 13, 9, 35, 107]),
    (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]),
    (7, 28, &[1, 3, 5, 3, 3, 13, 69]),
    (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]),
    (7, 37, &[1, 1, 3, 9, 25, 29, 41]),
    (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
    (7, 50, &[1, 3, 1, 3, 5, 53, 69]),
    (7, 55, &[1, 1, 5, 5, 23, 33, 13]),
    (7, 56, &[1, 1, 7, 7, 1, 61, 123]),
    (7, 59, &[1, 1, 7, 9, 13, 61, 49]),
    (7, 62, &[1, 3, 3, 5, 3, 55, 33]),
    (8, 14, &[1, 3, 1, 15, 31, 13, 49, 245]),
    (8, 21, &[1, 3, 5, 15, 31, 59, 63, 97]),
    (8, 22, &[1, 3, 1, 11, 11, 11, 77, 249]),
];

/// Iterator over Sobol points in `[0, 1)^dim`, starting after the origin.
pub struct Sobol {
    directions: Vec<[u64; BITS]>,
    state: Vec<u64>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension { requested: dim, max: MAX_DIM });
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u64; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1u64 << (BITS - 1 - k);
        }
        directions.push(first);
        for &(s, a, m) in TABLE.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u64; BITS];
            for k in 0..BITS {
                if k < s {
                    v[k] = (m[k] as u64) << (BITS - 1 - k);
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for j in 1..s {
                        if (a >> (s - 1 - j)) & 1 == 1 {
                            x ^= v[k - j];
                        }
                    }
                    v[k] = x;
                }
            }
            directions.push(v);
        }
        Ok(Self { directions, state: vec![0; dim], index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol sequence exhausted");
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            *s ^= v[c];
        }
        self.index += 1;
        let scale = (1u64 << BITS) as f64;
        self.state.iter().map(|s| *s as f64 / scale).collect()
    }
}

/// First `count` points mapped into the box `lo <= v <= hi`.
pub fn sobol(dim: usize, count: usize, lo: &[f64], hi: &[f64]) -> Result<Vec<Vec<f64>>> {
    if lo.len() != dim || hi.len() != dim {
        return Err(Error::DimensionMismatch("box bounds do not match the dimension".into()));
    }
    let mut gen = Sobol::new(dim)?;
    Ok((0..count)
        .map(|_| {
            gen.next_point()
                .iter()
                .enumerate()
                .map(|(i, u)| lo[i] + u * (hi[i] - lo[i]))
                .collect()
        })
        .collect())
}
