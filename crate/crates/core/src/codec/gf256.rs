//! Arithmetic in GF(2^8) with the reduction polynomial x^8 + x^4 + x^3 + x^2 + 1.

const POLY: u16 = 0x11d;

const fn build_tables() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    // doubled so mul can skip the mod 255
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    (exp, log)
}

const TABLES: ([u8; 512], [u8; 256]) = build_tables();
const EXP: [u8; 512] = TABLES.0;
const LOG: [u8; 256] = TABLES.1;

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
}

/// Multiplicative inverse. Panics on zero.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    EXP[255 - LOG[a as usize] as usize]
}

pub fn pow(a: u8, e: usize) -> u8 {
    if e == 0 {
        return 1;
    }
    if a == 0 {
        return 0;
    }
    EXP[(LOG[a as usize] as usize * e) % 255]
}

/// Inverts a square matrix by Gauss-Jordan elimination. `None` if singular.
pub fn invert(matrix: &[Vec<u8>]) -> Option<Vec<Vec<u8>>> {
    let size = matrix.len();
    let mut work: Vec<Vec<u8>> = matrix.to_vec();
    let mut out: Vec<Vec<u8>> = (0..size)
        .map(|r| (0..size).map(|c| u8::from(r == c)).collect())
        .collect();

    for col in 0..size {
        let pivot = (col..size).find(|&r| work[r][col] != 0)?;
        work.swap(col, pivot);
        out.swap(col, pivot);

        let scale = inv(work[col][col]);
        for c in 0..size {
            work[col][c] = mul(work[col][c], scale);
            out[col][c] = mul(out[col][c], scale);
        }
        for r in 0..size {
            if r == col || work[r][col] == 0 {
                continue;
            }
            let factor = work[r][col];
            for c in 0..size {
                work[r][c] ^= mul(factor, work[col][c]);
                out[r][c] ^= mul(factor, out[col][c]);
            }
        }
    }
    Some(out)
}

pub fn mat_mul(a: &[Vec<u8>], b: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).fold(0u8, |acc, i| acc ^ mul(row[i], b[i][c])))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // carry-less multiply then reduce, bit by bit
    fn slow_mul(a: u8, b: u8) -> u8 {
        let mut acc: u16 = 0;
        for bit in 0..8 {
            if b & (1 << bit) != 0 {
                acc ^= (a as u16) << bit;
            }
        }
        for bit in (8..16).rev() {
            if acc & (1 << bit) != 0 {
                acc ^= POLY << (bit - 8);
            }
        }
        acc as u8
    }

    #[test]
    fn table_mul_matches_bitwise_mul() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_an_inverse() {
        for a in 1..=255u8 {
            assert_eq!(mul(a, inv(a)), 1);
        }
    }

    #[test]
    fn inverse_of_vandermonde_round_trips() {
        let m: Vec<Vec<u8>> = (0..4u8)
            .map(|i| (0..4).map(|j| pow(i + 1, j)).collect())
            .collect();
        let mi = invert(&m).unwrap();
        let id = mat_mul(&m, &mi);
        for (r, row) in id.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, u8::from(r == c));
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = vec![vec![1, 2], vec![1, 2]];
        assert!(invert(&m).is_none());
    }
}
