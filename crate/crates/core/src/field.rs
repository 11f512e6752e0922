//! Arithmetic in the prime field `Z/pZ` and incremental row reduction over it.

/// `2^61 - 1`, a Mersenne prime.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    /// `p` must be prime and below `2^63`.
    pub fn new(p: u64) -> Self {
        debug_assert!(is_prime(p));
        PrimeField { p }
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse of a nonzero element.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.p != 0);
        self.pow(a, self.p - 2)
    }
}

pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if x % q == 0 {
            return x == q;
        }
    }
    // Miller-Rabin with these bases is deterministic for all u64
    let mut d = x - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let f = PrimeField { p: x };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut y = f.pow(a, d);
        if y == 1 || y == x - 1 {
            continue;
        }
        for _ in 1..s {
            y = f.mul(y, y);
            if y == x - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `x`.
pub fn next_prime_above(x: u64) -> u64 {
    let mut c = x + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// A row-echelon basis built one row at a time.
///
/// Each stored row has a pivot column, and is zero on the pivots of all rows
/// stored before it, so a single forward sweep reduces any new row.
#[derive(Debug, Clone)]
pub struct EchelonBasis {
    field: PrimeField,
    width: usize,
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
    pivot_inv: Vec<u64>,
}

impl EchelonBasis {
    pub fn new(field: PrimeField, width: usize) -> Self {
        EchelonBasis {
            field,
            width,
            rows: Vec::new(),
            pivots: Vec::new(),
            pivot_inv: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn reduce(&self, row: &mut [u64]) {
        let f = self.field;
        for ((b, &piv), &inv) in self.rows.iter().zip(&self.pivots).zip(&self.pivot_inv) {
            let x = row[piv];
            if x == 0 {
                continue;
            }
            let factor = f.mul(x, inv);
            for (t, &bv) in row.iter_mut().zip(b) {
                if bv != 0 {
                    *t = f.sub(*t, f.mul(factor, bv));
                }
            }
        }
    }

    /// Whether `row` lies in the span of the stored rows.
    pub fn contains(&self, row: &[u64]) -> bool {
        let mut r = row.to_vec();
        self.reduce(&mut r);
        r.iter().all(|&x| x == 0)
    }

    /// Inserts `row`; returns whether the rank grew.
    pub fn insert(&mut self, row: Vec<u64>) -> bool {
        debug_assert_eq!(row.len(), self.width);
        let mut r = row;
        self.reduce(&mut r);
        match r.iter().position(|&x| x != 0) {
            Some(piv) => {
                self.pivot_inv.push(self.field.inv(r[piv]));
                self.rows.push(r);
                self.pivots.push(piv);
                true
            }
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes() {
        assert!(is_prime(2));
        assert!(is_prime(2309));
        assert!(!is_prime(2304));
        assert!(is_prime(MERSENNE_61));
        assert!(!is_prime(MERSENNE_61 - 2));
        assert_eq!(next_prime_above(4 * 24 * 24), 2309);
        assert_eq!(next_prime_above(2), 3);
    }

    #[test]
    fn field_ops() {
        let f = PrimeField::new(101);
        assert_eq!(f.mul(f.inv(37), 37), 1);
        assert_eq!(f.sub(3, 5), 99);
        assert_eq!(f.add(100, 5), 4);
        let g = PrimeField::new(MERSENNE_61);
        let a = MERSENNE_61 - 3;
        assert_eq!(g.mul(a, g.inv(a)), 1);
    }

    #[test]
    fn echelon_rank() {
        let f = PrimeField::new(7);
        let mut b = EchelonBasis::new(f, 3);
        assert!(b.insert(vec![1, 2, 3]));
        assert!(b.insert(vec![2, 4, 0]));
        // 3*(1,2,3) = (3,6,2) mod 7
        assert!(!b.insert(vec![3, 6, 2]));
        assert!(b.contains(&[3, 6, 2]));
        assert!(!b.contains(&[0, 1, 0]));
        assert_eq!(b.rank(), 2);
    }
}
