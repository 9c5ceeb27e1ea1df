use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel order of the one-hot rows. Row 0 is A, row 1 is C, row 2 is G,
/// row 3 is T; checkpoints record this string so encodings stay portable.
pub const BASE_ORDER: &str = "ACGT";

/// A validated DNA probe sequence over the alphabet A, C, G, T, N.
/// Lowercase input is accepted and normalized to uppercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DnaSequence(String);

impl DnaSequence {
    pub fn new(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::EmptyInput { op: "DnaSequence::new" });
        }
        let mut out = String::with_capacity(s.len());
        for (i, ch) in s.chars().enumerate() {
            let up = ch.to_ascii_uppercase();
            match up {
                'A' | 'C' | 'G' | 'T' | 'N' => out.push(up),
                _ => return Err(Error::InvalidBase { found: ch, position: i }),
            }
        }
        Ok(DnaSequence(out))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DnaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for DnaSequence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DnaSequence::new(s)
    }
}

impl TryFrom<String> for DnaSequence {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        DnaSequence::new(&s)
    }
}

impl From<DnaSequence> for String {
    fn from(seq: DnaSequence) -> String {
        seq.0
    }
}

fn base_row(b: u8) -> Option<usize> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

/// Encodes a probe as a `[4, L]` matrix: column t is the unit vector of base
/// t in `BASE_ORDER` row order, or 0.25 in every row for an N.
pub fn one_hot(seq: &DnaSequence) -> Tensor {
    let len = seq.len();
    let mut t = Tensor::zeros(vec![4, len]);
    for (i, &b) in seq.as_str().as_bytes().iter().enumerate() {
        match base_row(b) {
            Some(r) => t.set2(r, i, 1.0),
            None => {
                for r in 0..4 {
                    t.set2(r, i, 0.25);
                }
            }
        }
    }
    t
}

/// Exact inverse of [`one_hot`]: each column must be a unit basis vector
/// (a base) or uniform 0.25 (an N); anything else is rejected with the
/// offending column.
pub fn decode(matrix: &Tensor) -> Result<DnaSequence> {
    if matrix.rank() != 2 || matrix.shape()[0] != 4 {
        return Err(Error::shape(
            "decode",
            format!("expected a [4, L] matrix, got {:?}", matrix.shape()),
        ));
    }
    let len = matrix.shape()[1];
    if len == 0 {
        return Err(Error::EmptyInput { op: "decode" });
    }
    let mut out = String::with_capacity(len);
    'columns: for c in 0..len {
        let col = [matrix.at2(0, c), matrix.at2(1, c), matrix.at2(2, c), matrix.at2(3, c)];
        if col.iter().all(|&v| v == 0.25) {
            out.push('N');
            continue;
        }
        for (r, base) in BASE_ORDER.chars().enumerate() {
            let is_unit = (0..4).all(|k| col[k] == if k == r { 1.0 } else { 0.0 });
            if is_unit {
                out.push(base);
                continue 'columns;
            }
        }
        return Err(Error::InvalidColumn {
            column: c,
            details: format!("{col:?} is neither a basis vector nor uniform 0.25"),
        });
    }
    DnaSequence::new(&out)
}
