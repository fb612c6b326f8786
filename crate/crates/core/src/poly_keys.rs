//! Symmetric polynomial key engine.
//!
//! The authority holds a polynomial
//!
//! ```text
//! P(x1, ..., xm) = Σ a[i1..im] · x1^i1 · ... · xm^im   (mod p),  0 ≤ ik ≤ t
//! ```
//!
//! whose coefficients depend only on the *sorted* exponent tuple, which makes
//! `P` invariant under any permutation of its arguments. A class key is one
//! evaluation of `P`; an ancestor reaches the same value through a different
//! ordering of the same argument multiset.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hierarchy::{ClassId, Hierarchy, HierarchyError, UserId};

pub const DEFAULT_MODULUS: u64 = 2_147_483_647;
pub const DEFAULT_THRESHOLD: u32 = 2;

/// Upper bound on `(t+1)^m`; anything larger is refused instead of spinning.
pub const MAX_TERMS: u64 = 1 << 24;

const COEFFICIENT_DOMAIN: &[u8] = b"stegokey/coefficient/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("expected {expected} arguments, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("exponent index {index} outside [0, {t}]")]
    IndexOutOfRange { index: u32, t: u32 },
    #[error("argument {value} is not reduced modulo {p}")]
    ParamOutOfRange { value: u64, p: u64 },
    #[error("modulus must be greater than 1")]
    BadModulus,
    #[error("m must be at least 1")]
    BadArity,
    #[error("(t+1)^m exceeds {MAX_TERMS} terms")]
    TooManyTerms,
    #[error("scheme has m = {m} but the hierarchy needs at least {required}")]
    MTooSmall { m: usize, required: usize },
    #[error("user id must be positive")]
    ZeroUserId,
    #[error("user key for class key {0} does not fit in 64 bits")]
    UserKeyOverflow(u64),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

pub type Result<T, E = KeyError> = std::result::Result<T, E>;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricPolynomialScheme {
    #[serde(with = "hex_bytes")]
    master_secret: Vec<u8>,
    t: u32,
    m: usize,
    p: u64,
    epoch: u64,
}

impl fmt::Debug for SymmetricPolynomialScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricPolynomialScheme")
            .field("master_secret", &"<redacted>")
            .field("t", &self.t)
            .field("m", &self.m)
            .field("p", &self.p)
            .field("epoch", &self.epoch)
            .finish()
    }
}

impl SymmetricPolynomialScheme {
    pub fn new(master_secret: impl Into<Vec<u8>>, t: u32, m: usize, p: u64) -> Result<Self> {
        if p < 2 {
            return Err(KeyError::BadModulus);
        }
        if m == 0 {
            return Err(KeyError::BadArity);
        }
        let terms = u64::from(t)
            .checked_add(1)
            .and_then(|base| base.checked_pow(u32::try_from(m).ok()?))
            .filter(|&n| n <= MAX_TERMS);
        if terms.is_none() {
            return Err(KeyError::TooManyTerms);
        }
        Ok(Self { master_secret: master_secret.into(), t, m, p, epoch: 0 })
    }

    pub fn with_epoch(mut self, epoch: u64) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn master_secret(&self) -> &[u8] {
        &self.master_secret
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: u64) {
        self.epoch = epoch;
    }

    /// Number of monomials in `P`, `(t+1)^m`.
    pub fn term_count(&self) -> u64 {
        u64::from(self.t + 1).pow(self.m as u32)
    }

    /// Coefficient `a[i1..im]`: a keyed hash of the sorted index tuple.
    pub fn coefficient(&self, index: &[u32]) -> Result<u64> {
        if index.len() != self.m {
            return Err(KeyError::WrongArity { expected: self.m, got: index.len() });
        }
        if let Some(&bad) = index.iter().find(|&&i| i > self.t) {
            return Err(KeyError::IndexOutOfRange { index: bad, t: self.t });
        }
        let mut sorted = index.to_vec();
        sorted.sort_unstable();
        Ok(self.coefficient_sorted(&sorted))
    }

    fn coefficient_sorted(&self, sorted: &[u32]) -> u64 {
        let mut h = Sha256::new();
        h.update(COEFFICIENT_DOMAIN);
        h.update((self.master_secret.len() as u64).to_le_bytes());
        h.update(&self.master_secret);
        h.update(self.epoch.to_le_bytes());
        h.update((sorted.len() as u64).to_le_bytes());
        for i in sorted {
            h.update(i.to_le_bytes());
        }
        let digest = h.finalize();
        let mut wide = [0u8; 16];
        wide.copy_from_slice(&digest[..16]);
        (u128::from_be_bytes(wide) % u128::from(self.p)) as u64
    }

    /// Evaluates `P` at `params` modulo `p`.
    pub fn eval(&self, params: &[u64]) -> Result<u64> {
        if params.len() != self.m {
            return Err(KeyError::WrongArity { expected: self.m, got: params.len() });
        }
        if let Some(&bad) = params.iter().find(|&&x| x >= self.p) {
            return Err(KeyError::ParamOutOfRange { value: bad, p: self.p });
        }
        let p = self.p;
        let t = self.t as usize;
        // powers[k][e] = x_k^e mod p
        let powers: Vec<Vec<u64>> = params
            .iter()
            .map(|&x| {
                let mut row = Vec::with_capacity(t + 1);
                let mut acc = 1 % p;
                for _ in 0..=t {
                    row.push(acc);
                    acc = mul_mod(acc, x, p);
                }
                row
            })
            .collect();

        let mut coefficients: HashMap<Vec<u32>, u64> = HashMap::new();
        let mut index = vec![0u32; self.m];
        let mut sorted = vec![0u32; self.m];
        let mut sum = 0u64;
        loop {
            sorted.copy_from_slice(&index);
            sorted.sort_unstable();
            let a = match coefficients.get(&sorted) {
                Some(&a) => a,
                None => {
                    let a = self.coefficient_sorted(&sorted);
                    coefficients.insert(sorted.clone(), a);
                    a
                }
            };
            let term = index
                .iter()
                .zip(&powers)
                .fold(a, |acc, (&e, row)| mul_mod(acc, row[e as usize], p));
            sum = add_mod(sum, term, p);

            // odometer increment over [0, t]^m
            let mut k = 0;
            loop {
                if k == self.m {
                    return Ok(sum);
                }
                if index[k] < self.t {
                    index[k] += 1;
                    break;
                }
                index[k] = 0;
                k += 1;
            }
        }
    }

    fn check_m(&self, h: &Hierarchy) -> Result<()> {
        let required = h.required_m()?;
        if self.m < required {
            return Err(KeyError::MTooSmall { m: self.m, required });
        }
        Ok(())
    }

    /// A class evaluating its own key.
    pub fn compute_class_key(&self, h: &Hierarchy, class: ClassId) -> Result<ClassKey> {
        self.check_m(h)?;
        let params = h.class_params(class, self.m)?;
        Ok(ClassKey { value: self.eval(&params)?, class, epoch: self.epoch })
    }

    /// An ancestor reaching a descendant's key through the derivation vector.
    pub fn derive_descendant_key(&self, h: &Hierarchy, ancestor: ClassId, descendant: ClassId) -> Result<ClassKey> {
        self.check_m(h)?;
        let params = h.derivation_params(ancestor, descendant, self.m)?;
        Ok(ClassKey { value: self.eval(&params)?, class: descendant, epoch: self.epoch })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassKey {
    pub value: u64,
    pub class: ClassId,
    pub epoch: u64,
}

impl ClassKey {
    pub fn user_key(&self, user_id: UserId) -> Result<UserKey> {
        let value = compute_user_key(self.value, user_id)?;
        Ok(UserKey { value, class: self.class, user_id, epoch: self.epoch })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserKey {
    pub value: u64,
    pub class: ClassId,
    pub user_id: UserId,
    pub epoch: u64,
}

/// `K + floor(K / user_id)`, plain integer arithmetic.
pub fn compute_user_key(class_key: u64, user_id: UserId) -> Result<u64> {
    if user_id == 0 {
        return Err(KeyError::ZeroUserId);
    }
    // K < 2^64 and K / u ≤ K, so widen to avoid overflow for large moduli
    let v = u128::from(class_key) + u128::from(class_key / user_id);
    u64::try_from(v).map_err(|_| KeyError::UserKeyOverflow(class_key))
}

pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(p)) as u64
}

pub fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    ((u128::from(a) + u128::from(b)) % u128::from(p)) as u64
}

/// Square-and-multiply.
pub fn pow_mod(base: u64, mut exp: u64, p: u64) -> u64 {
    let mut result = 1 % p;
    let mut b = base % p;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_mod(result, b, p);
        }
        b = mul_mod(b, b, p);
        exp >>= 1;
    }
    result
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
