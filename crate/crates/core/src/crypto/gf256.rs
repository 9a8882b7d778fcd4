//! Arithmetic in GF(2^8) modulo the AES polynomial x^8 + x^4 + x^3 + x + 1.
//!
//! Multiplication uses log/exp tables over the generator 0x03, built at
//! compile time.

const POLY: u16 = 0x11b;

const fn build_tables() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        // x *= 3, i.e. x ^ (x << 1), reduced
        let mut next = x ^ (x << 1);
        if next & 0x100 != 0 {
            next ^= POLY;
        }
        x = next;
        i += 1;
    }
    // doubled so exp[log a + log b] never needs a modulo
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
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
}

/// Multiplicative inverse; `None` for zero.
#[inline]
pub fn inv(a: u8) -> Option<u8> {
    if a == 0 {
        None
    } else {
        Some(EXP[255 - LOG[a as usize] as usize])
    }
}

#[inline]
pub fn div(a: u8, b: u8) -> Option<u8> {
    inv(b).map(|ib| mul(a, ib))
}

/// Horner evaluation; `coeffs[0]` is the constant term.
pub fn eval_poly(coeffs: &[u8], x: u8) -> u8 {
    coeffs.iter().rev().fold(0u8, |acc, &c| add(mul(acc, x), c))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Carry-less shift-and-add multiply, reduced bit by bit.
    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let hi = a & 0x80;
            a <<= 1;
            if hi != 0 {
                a ^= 0x1b;
            }
            b >>= 1;
        }
        p
    }

    #[test]
    fn table_mul_matches_shift_and_add() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_inverse() {
        assert_eq!(inv(0), None);
        for a in 1..=255u8 {
            let ia = inv(a).unwrap();
            assert_eq!(slow_mul(a, ia), 1);
        }
    }

    #[test]
    fn known_aes_product() {
        // FIPS-197 worked example: {57} * {83} = {c1}
        assert_eq!(mul(0x57, 0x83), 0xc1);
    }

    #[test]
    fn horner_matches_expansion() {
        let c = [0x2a, 0x11, 0x07];
        for x in 0..=255u8 {
            let direct = c[0] ^ slow_mul(c[1], x) ^ slow_mul(c[2], slow_mul(x, x));
            assert_eq!(eval_poly(&c, x), direct);
        }
    }
}
