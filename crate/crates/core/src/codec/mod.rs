//! `(n, k)` Maximum Distance Separable codes over GF(256).
//!
//! The generator is a systematic Reed-Solomon matrix `[I; P]` obtained from a
//! Vandermonde matrix. The parity block is then rescaled so its first row and
//! first column are all ones; row and column scalings keep every square
//! submatrix of `P` non-singular, so the code stays MDS. The rescaling makes
//! `k = 1` plain replication and `n = k + 1` the single XOR parity code.
//!
//! Values are zero-padded to a multiple of `k` and split into `k` stripes of
//! `ceil(L / k)` bytes; coded element `i` is row `i` of the generator applied
//! bytewise across the stripes.

mod gf256;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::Cost;

pub const MAX_CODE_LENGTH: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid code parameters n={n}, k={k}: need 1 <= k < n <= {MAX_CODE_LENGTH}")]
    InvalidParams { n: usize, k: usize },
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("malformed coded elements: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecParams {
    pub n: usize,
    pub k: usize,
}

impl CodecParams {
    pub fn new(n: usize, k: usize) -> Result<Self, CodecError> {
        if k == 0 || k >= n || n > MAX_CODE_LENGTH {
            return Err(CodecError::InvalidParams { n, k });
        }
        Ok(Self { n, k })
    }

    /// Size of one coded element in bytes for a value of `value_len` bytes.
    pub fn share_len(&self, value_len: usize) -> usize {
        value_len.div_ceil(self.k)
    }
}

/// One coordinate of a codeword. `index` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodedElement {
    pub index: usize,
    pub k: usize,
    #[serde(with = "hex")]
    pub data: Vec<u8>,
}

impl CodedElement {
    /// Size in value-units: exactly `1/k`.
    pub fn cost(&self) -> Cost {
        Ratio::new(1, self.k as u64)
    }
}

/// Zero-pads `raw` to the next multiple of `k` bytes.
pub fn pad(raw: &[u8], k: usize) -> Vec<u8> {
    let mut out = raw.to_vec();
    out.resize(raw.len().div_ceil(k) * k, 0);
    out
}

/// Drops padding added by [`pad`].
pub fn unpad(padded: &[u8], original_len: usize) -> Vec<u8> {
    padded[..original_len.min(padded.len())].to_vec()
}

#[derive(Debug, Clone)]
pub struct Codec {
    params: CodecParams,
    // n rows by k columns; rows 0..k are the identity
    generator: Vec<Vec<u8>>,
}

impl Codec {
    pub fn new(params: CodecParams) -> Self {
        let CodecParams { n, k } = params;
        let vandermonde: Vec<Vec<u8>> = (0..n)
            .map(|i| (0..k).map(|j| gf256::pow(i as u8, j)).collect())
            .collect();
        let top_inv = gf256::invert(&vandermonde[..k])
            .expect("distinct evaluation points give an invertible Vandermonde block");
        let mut generator = gf256::mat_mul(&vandermonde, &top_inv);

        if n > k {
            for row in generator[k..].iter_mut() {
                let s = gf256::inv(row[0]);
                row.iter_mut().for_each(|x| *x = gf256::mul(*x, s));
            }
            for c in 0..k {
                let s = gf256::inv(generator[k][c]);
                for row in generator[k..].iter_mut() {
                    row[c] = gf256::mul(row[c], s);
                }
            }
        }
        Self { params, generator }
    }

    pub fn from_nk(n: usize, k: usize) -> Result<Self, CodecError> {
        CodecParams::new(n, k).map(Self::new)
    }

    pub fn params(&self) -> CodecParams {
        self.params
    }

    /// Row `index - 1` of the generator matrix.
    pub fn generator_row(&self, index: usize) -> &[u8] {
        &self.generator[index - 1]
    }

    /// Encodes `value` (padding it as needed) into `n` coded elements.
    pub fn encode(&self, value: &[u8]) -> Vec<CodedElement> {
        let k = self.params.k;
        let padded = pad(value, k);
        let stripe = padded.len() / k;
        let stripes: Vec<&[u8]> = padded.chunks(stripe.max(1)).collect();

        self.generator
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let data = if i < k {
                    stripes.get(i).map_or_else(Vec::new, |s| s.to_vec())
                } else {
                    (0..stripe)
                        .map(|b| {
                            row.iter()
                                .zip(&stripes)
                                .fold(0u8, |acc, (&g, s)| acc ^ gf256::mul(g, s[b]))
                        })
                        .collect()
                };
                CodedElement {
                    index: i + 1,
                    k,
                    data,
                }
            })
            .collect()
    }

    /// Recovers the padded value from at least `k` elements. When more are
    /// given, the `k` lowest indices are used.
    pub fn decode(&self, elements: &[CodedElement]) -> Result<Vec<u8>, CodecError> {
        let CodecParams { n, k } = self.params;
        if elements.len() < k {
            return Err(CodecError::InsufficientShares {
                have: elements.len(),
                need: k,
            });
        }
        let mut chosen: Vec<&CodedElement> = elements.iter().collect();
        chosen.sort_by_key(|e| e.index);
        for pair in chosen.windows(2) {
            if pair[0].index == pair[1].index {
                return Err(CodecError::Malformed(format!(
                    "duplicate index {}",
                    pair[0].index
                )));
            }
        }
        let len = chosen[0].data.len();
        for e in &chosen {
            if e.index == 0 || e.index > n {
                return Err(CodecError::Malformed(format!(
                    "index {} outside 1..={n}",
                    e.index
                )));
            }
            if e.k != k {
                return Err(CodecError::Malformed(format!(
                    "element {} built for k={}, codec has k={k}",
                    e.index, e.k
                )));
            }
            if e.data.len() != len {
                return Err(CodecError::Malformed("inconsistent element lengths".into()));
            }
        }
        chosen.truncate(k);

        if chosen.iter().enumerate().all(|(i, e)| e.index == i + 1) {
            return Ok(chosen.iter().flat_map(|e| e.data.iter().copied()).collect());
        }

        let sub: Vec<Vec<u8>> = chosen
            .iter()
            .map(|e| self.generator[e.index - 1].clone())
            .collect();
        let inverse = gf256::invert(&sub)
            .ok_or_else(|| CodecError::Malformed("singular decoding submatrix".into()))?;

        let mut out = Vec::with_capacity(len * k);
        for row in &inverse {
            for b in 0..len {
                out.push(
                    row.iter()
                        .zip(&chosen)
                        .fold(0u8, |acc, (&g, e)| acc ^ gf256::mul(g, e.data[b])),
                );
            }
        }
        Ok(out)
    }

    /// Decodes and strips padding back to `value_len` bytes.
    pub fn decode_value(
        &self,
        elements: &[CodedElement],
        value_len: usize,
    ) -> Result<Vec<u8>, CodecError> {
        self.decode(elements).map(|v| unpad(&v, value_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_params() {
        assert!(CodecParams::new(3, 3).is_err());
        assert!(CodecParams::new(3, 0).is_err());
        assert!(CodecParams::new(256, 3).is_err());
        assert!(CodecParams::new(255, 254).is_ok());
    }

    #[test]
    fn k1_is_replication() {
        let codec = Codec::from_nk(3, 1).unwrap();
        let v = b"replicate me".to_vec();
        let out = codec.encode(&v);
        assert_eq!(out.len(), 3);
        for (i, e) in out.iter().enumerate() {
            assert_eq!(e.index, i + 1);
            assert_eq!(e.data, v);
        }
        assert_eq!(codec.decode(&out[1..2]).unwrap(), v);
    }

    #[test]
    fn single_parity_code() {
        let codec = Codec::from_nk(4, 3).unwrap();
        let (x1, x2, x3) = (0x5a, 0x13, 0xc4);
        let out = codec.encode(&[x1, x2, x3]);
        let bytes: Vec<u8> = out.iter().map(|e| e.data[0]).collect();
        assert_eq!(bytes, vec![x1, x2, x3, x1 ^ x2 ^ x3]);

        // coordinates {1, 2, 4}: x3 = x1 ^ x2 ^ parity
        let picked = vec![out[0].clone(), out[1].clone(), out[3].clone()];
        let decoded = codec.decode(&picked).unwrap();
        assert_eq!(decoded, vec![x1, x2, x1 ^ x2 ^ bytes[3]]);
        assert_eq!(codec.encode(&decoded), out);
    }

    #[test]
    fn too_few_shares() {
        let codec = Codec::from_nk(5, 3).unwrap();
        let out = codec.encode(&[1, 2, 3, 4, 5, 6]);
        assert_eq!(
            codec.decode(&out[..2]),
            Err(CodecError::InsufficientShares { have: 2, need: 3 })
        );
    }

    #[test]
    fn malformed_shares() {
        let codec = Codec::from_nk(5, 3).unwrap();
        let out = codec.encode(&[9; 9]);
        let dup = vec![out[0].clone(), out[0].clone(), out[1].clone()];
        assert!(matches!(codec.decode(&dup), Err(CodecError::Malformed(_))));

        let mut short = out[..3].to_vec();
        short[2].data.pop();
        assert!(matches!(codec.decode(&short), Err(CodecError::Malformed(_))));

        let mut bad = out[..3].to_vec();
        bad[0].index = 6;
        assert!(matches!(codec.decode(&bad), Err(CodecError::Malformed(_))));
    }

    #[test]
    fn extra_shares_use_lowest_indices() {
        let codec = Codec::from_nk(5, 2).unwrap();
        let v = b"lowest".to_vec();
        let mut out = codec.encode(&v);
        // corrupt the highest share; it must not be consulted
        out[4].data[0] ^= 0xff;
        assert_eq!(codec.decode(&out[2..]).unwrap(), v);
    }

    #[test]
    fn padding() {
        let p = pad(&[1; 7], 3);
        assert_eq!(p.len(), 9);
        assert_eq!(&p[7..], &[0, 0]);
        assert_eq!(pad(&[2; 9], 3), vec![2; 9]);
        assert_eq!(unpad(&p, 7), vec![1; 7]);
    }

    #[test]
    fn share_size_is_ceil_l_over_k() {
        let codec = Codec::from_nk(7, 3).unwrap();
        let out = codec.encode(&[7; 10]);
        assert!(out.iter().all(|e| e.data.len() == 4));
        assert_eq!(codec.params().share_len(10), 4);
        assert_eq!(out[0].cost(), Ratio::new(1, 3));
    }

    proptest! {
        #[test]
        fn pad_unpad_round_trip(raw in proptest::collection::vec(any::<u8>(), 0..64), k in 1usize..=8) {
            let p = pad(&raw, k);
            prop_assert_eq!(p.len(), raw.len().div_ceil(k) * k);
            prop_assert_eq!(unpad(&p, raw.len()), raw);
        }

        #[test]
        fn distinct_values_give_distinct_codewords(
            a in proptest::collection::vec(any::<u8>(), 12),
            b in proptest::collection::vec(any::<u8>(), 12),
        ) {
            let codec = Codec::from_nk(6, 4).unwrap();
            prop_assume!(a != b);
            prop_assert_ne!(codec.encode(&a), codec.encode(&b));
        }
    }
}
