//! Prime-field arithmetic on `u64` values.
//!
//! Moduli are capped at 2^62 so that sums of two reduced values never wrap
//! and products fit comfortably in the 128-bit intermediates used by
//! [`PrimeField::mul`].

use crate::error::{Error, Result};

/// Largest permitted modulus (exclusive).
pub const MAX_MODULUS: u64 = 1 << 62;

/// Witnesses making Miller-Rabin deterministic for every 64-bit integer.
const MR_WITNESSES: [u64; 7] = [2, 325, 9375, 28178, 450775, 9780504, 1795265022];

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin primality test, valid for all `u64` inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    // n - 1 = 2^s * d with d odd.
    let mut d = n - 1;
    let s = d.trailing_zeros();
    d >>= s;
    'witness: for &a in MR_WITNESSES.iter() {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime greater than or equal to `min`.
///
/// Fails with [`Error::PrimeSearchOverflow`] if the search would leave the
/// supported modulus range. `min` values of 0 and 1 round up to 2.
pub fn find_prime(min: u64) -> Result<u64> {
    let mut candidate = min.max(2);
    if candidate == 2 {
        return Ok(2);
    }
    if candidate % 2 == 0 {
        candidate += 1;
    }
    while candidate < MAX_MODULUS {
        if is_prime(candidate) {
            return Ok(candidate);
        }
        candidate += 2;
    }
    Err(Error::PrimeSearchOverflow(min))
}

/// Arithmetic over the integers modulo a prime p < 2^62.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    /// Constructs the field, verifying primality and the modulus cap.
    pub fn new(p: u64) -> Result<Self> {
        if p >= MAX_MODULUS {
            return Err(Error::InvalidParams(format!("modulus {p} is at least 2^62")));
        }
        if !is_prime(p) {
            return Err(Error::InvalidParams(format!("modulus {p} is not prime")));
        }
        Ok(PrimeField { p })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn elem(&self, value: u64) -> FieldElem {
        FieldElem { value: value % self.p, field: *self }
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.p && b < self.p);
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.p && b < self.p);
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    pub fn neg(&self, a: u64) -> u64 {
        debug_assert!(a < self.p);
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.p && b < self.p);
        mul_mod(a, b, self.p)
    }

    pub fn pow(&self, base: u64, exp: u64) -> u64 {
        pow_mod(base, exp, self.p)
    }

    /// Multiplicative inverse via Fermat's little theorem. Panics on zero.
    pub fn inv(&self, a: u64) -> u64 {
        assert!(a % self.p != 0, "zero has no multiplicative inverse");
        self.pow(a, self.p - 2)
    }
}

/// A value of a prime field, carrying its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldElem {
    value: u64,
    field: PrimeField,
}

impl FieldElem {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> u64 {
        self.field.p
    }
}

/// The rounding map sending a field value z to the indicator of
/// z < threshold, i.e. to membership in the first `threshold` residues.
///
/// Under a uniform field element the output is Bernoulli(threshold / p)
/// exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoolThreshold {
    threshold: u64,
    field: PrimeField,
}

impl BoolThreshold {
    /// Requires 1 <= threshold < p so that both outputs have positive mass.
    pub fn new(threshold: u64, field: PrimeField) -> Result<Self> {
        if threshold == 0 || threshold >= field.modulus() {
            return Err(Error::InvalidParams(format!(
                "threshold {threshold} not in [1, {})",
                field.modulus()
            )));
        }
        Ok(BoolThreshold { threshold, field })
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn bool_map(&self, z: FieldElem) -> bool {
        assert_eq!(z.modulus(), self.field.p, "mixed moduli in bool_map");
        z.value < self.threshold
    }

    /// Same map on a raw residue, for hot loops that avoid `FieldElem`.
    #[inline]
    pub fn bool_raw(&self, z: u64) -> bool {
        debug_assert!(z < self.field.p);
        z < self.threshold
    }
}

/// Evaluates the affine function coeffs[0] + sum_u coeffs[u+1] * z[u] over
/// the given field. `coeffs` must be exactly one longer than `z`.
pub fn affine_eval(coeffs: &[u64], z: &[u64], field: PrimeField) -> Result<u64> {
    if coeffs.len() != z.len() + 1 {
        return Err(Error::DimensionMismatch { expected: z.len() + 1, got: coeffs.len() });
    }
    let mut acc = coeffs[0] % field.modulus();
    for (c, zu) in coeffs[1..].iter().zip(z) {
        acc = field.add(acc, field.mul(c % field.modulus(), zu % field.modulus()));
    }
    Ok(acc)
}

/// Two-coefficient special case used by the scalar reporting scheme.
#[inline]
pub fn affine_eval_scalar(phi0: u64, phi1: u64, z: u64, field: PrimeField) -> u64 {
    field.add(phi0 % field.modulus(), field.mul(phi1 % field.modulus(), z % field.modulus()))
}
