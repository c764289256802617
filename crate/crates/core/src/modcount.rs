//! The low-space counting pipeline: prime selection, primitive roots,
//! pointwise-evaluation coefficient recovery over prime fields, and
//! Chinese-remainder reconstruction.
//!
//! Coefficients of the domination polynomial are bounded by `2^n`, and the
//! product of the primes strictly between `n + 1` and `2(n + 1)` exceeds
//! that bound once `n + 1 >= 21`, so collecting one residue per prime pins
//! every coefficient exactly.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::decomp::TreedepthDecomposition;
use crate::graph::Graph;
use crate::tdalg::{count_ds_exact, DominationPolynomial, SpaceMeter, TdAlgError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{0} has no primitive root in this setting (need an odd prime)")]
    NoPrimitiveRoot(u64),
    #[error("coefficient index {k} out of range (need k <= n < p - 1, p = {p})")]
    IndexOutOfRange { k: usize, p: u64 },
    #[error("moduli are not pairwise coprime ({a}, {b})")]
    NonCoprimeModuli { a: u64, b: u64 },
    #[error("moduli/residue lists differ in length")]
    LengthMismatch,
    #[error("empty modulus list")]
    Empty,
    #[error(transparent)]
    Alg(#[from] TdAlgError),
}

/// Deterministic trial-division primality.
pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    if x % 2 == 0 {
        return x == 2;
    }
    let mut d = 3u64;
    while d * d <= x {
        if x % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// All primes of the open interval `(lo, hi)`, ascending.
pub fn primes_in_open_interval(lo: u64, hi: u64) -> Vec<u64> {
    ((lo + 1)..hi).filter(|&x| is_prime(x)).collect()
}

/// All primes `p` with `n + 1 < p < 2(n + 1)`, ascending; this is the prime
/// pool the coefficient-recovery pipeline draws from.
pub fn primes_between(n: u64) -> Vec<u64> {
    assert!(n >= 1);
    primes_in_open_interval(n + 1, 2 * (n + 1))
}

pub fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    base %= p;
    let mut acc = 1 % p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    acc
}

/// Smallest generator `alpha >= 2` of the multiplicative group mod `p`,
/// found by trying candidates and checking that no proper power hits 1.
pub fn primitive_root(p: u64) -> Result<u64, ModError> {
    if !is_prime(p) {
        return Err(ModError::NotPrime(p));
    }
    if p < 3 {
        return Err(ModError::NoPrimitiveRoot(p));
    }
    'cand: for alpha in 2..p {
        let mut x = 1u64;
        for _ in 1..=(p - 2) {
            x = x * alpha % p;
            if x == 1 {
                continue 'cand;
            }
        }
        return Ok(alpha);
    }
    unreachable!("every odd prime field has a generator")
}

/// All-points evaluation table of a degree-bounded polynomial over `F_p`:
/// `evals[i] = P(alpha^i) mod p` for `i = 0..p-2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueTable {
    pub p: u64,
    pub alpha: u64,
    pub evals: Vec<u64>,
}

impl ResidueTable {
    /// Evaluates `poly` at every power of a primitive root.
    pub fn build(poly: &DominationPolynomial, p: u64) -> Result<Self, ModError> {
        let alpha = primitive_root(p)?;
        let evals = (0..p - 1)
            .map(|i| poly.eval_mod(pow_mod(alpha, i, p), p))
            .collect();
        Ok(ResidueTable { p, alpha, evals })
    }
}

/// Recovers `q_k mod p` from the all-points table by the inverse transform
/// `q'_k = -sum_i P(alpha^i) * alpha^(-ik)`.
pub fn coefficient_from_evals(t: &ResidueTable, k: usize) -> Result<u64, ModError> {
    let p = t.p;
    if k as u64 >= p - 1 {
        return Err(ModError::IndexOutOfRange { k, p });
    }
    debug_assert_eq!(t.evals.len() as u64, p - 1);
    let alpha_inv_k = pow_mod(pow_mod(t.alpha, p - 2, p), k as u64, p);
    let mut sum = 0u64;
    let mut w = 1u64; // alpha^(-ik) for the current i
    for &e in &t.evals {
        sum = (sum + e * w) % p;
        w = w * alpha_inv_k % p;
    }
    Ok((p - sum) % p)
}

/// Result of a Chinese-remainder reconstruction: the unique value below the
/// modulus product matching every residue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrtWitness {
    pub moduli: Vec<u64>,
    pub residues: Vec<u64>,
    pub value: BigUint,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modular inverse by extended Euclid; `None` when not coprime.
fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Incremental arbitrary-precision reconstruction: folds the residues into
/// the running value one modulus at a time.
pub fn crt_reconstruct(moduli: &[u64], residues: &[u64]) -> Result<CrtWitness, ModError> {
    if moduli.len() != residues.len() {
        return Err(ModError::LengthMismatch);
    }
    if moduli.is_empty() {
        return Err(ModError::Empty);
    }
    for (i, &a) in moduli.iter().enumerate() {
        for &b in &moduli[i + 1..] {
            if gcd(a, b) != 1 {
                return Err(ModError::NonCoprimeModuli { a, b });
            }
        }
    }
    let mut value = BigUint::from(residues[0] % moduli[0]);
    let mut modulus = BigUint::from(moduli[0]);
    for (&p, &r) in moduli.iter().zip(residues).skip(1) {
        // value' = value + modulus * t where t = (r - value) / modulus mod p.
        let cur = (&value % p).to_u64_digits().first().copied().unwrap_or(0);
        let m_mod_p = (&modulus % p).to_u64_digits().first().copied().unwrap_or(0);
        let inv = inv_mod(m_mod_p, p).ok_or(ModError::NonCoprimeModuli { a: m_mod_p.max(1), b: p })?;
        let t = (r % p + p - cur) % p * inv % p;
        value += &modulus * BigUint::from(t);
        modulus *= BigUint::from(p);
    }
    debug_assert!(value < modulus);
    for (&p, &r) in moduli.iter().zip(residues) {
        debug_assert_eq!(
            (&value % p).to_u64_digits().first().copied().unwrap_or(0),
            r % p
        );
    }
    Ok(CrtWitness {
        moduli: moduli.to_vec(),
        residues: residues.to_vec(),
        value,
    })
}

/// Instance size below which the counting pipeline falls back to the exact
/// in-memory recursion; above it the prime product is guaranteed to cover
/// the coefficient range.
pub const LOWSPACE_THRESHOLD: usize = 21;

/// Per-prime provenance of a low-space counting run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowspaceProvenance {
    pub primes: Vec<(u64, u64)>, // (p, alpha)
    pub fallback: bool,
    pub meter: SpaceMeter,
}

/// Dominating-set counts computed through modular evaluation and
/// Chinese-remainder reconstruction, coefficientwise identical to
/// [`count_ds_exact`].
///
/// For `n >= 21` the polynomial is never materialized in full: each prime
/// contributes an all-points evaluation table built from independent
/// [`eval_ds_mod`] runs (primes ascending, points ascending, coefficients
/// ascending — a fixed reduction order keeping output bit-stable), and each
/// coefficient is recovered per prime and recombined. Coefficients whose
/// residues are all zero are zero outright.
pub fn count_ds_lowspace(
    g: &Graph,
    d: &TreedepthDecomposition,
) -> Result<DominationPolynomial, ModError> {
    Ok(count_ds_lowspace_with_provenance(g, d)?.0)
}

pub fn count_ds_lowspace_with_provenance(
    g: &Graph,
    d: &TreedepthDecomposition,
) -> Result<(DominationPolynomial, LowspaceProvenance), ModError> {
    let n = g.n();
    let mut meter = SpaceMeter::default();
    if n < LOWSPACE_THRESHOLD {
        let poly = count_ds_exact(g, d)?;
        return Ok((
            poly,
            LowspaceProvenance {
                primes: vec![],
                fallback: true,
                meter,
            },
        ));
    }
    let primes = primes_between(n as u64);
    let mut tables = Vec::new();
    let mut provenance = Vec::new();
    for &p in &primes {
        let alpha = primitive_root(p)?;
        let mut evals = Vec::with_capacity((p - 1) as usize);
        for i in 0..p - 1 {
            let a = pow_mod(alpha, i, p);
            evals.push(crate::tdalg::eval_ds_mod_metered(g, d, p, a, &mut meter)?);
        }
        provenance.push((p, alpha));
        tables.push(ResidueTable { p, alpha, evals });
    }
    let mut coeffs = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut residues = Vec::with_capacity(tables.len());
        for t in &tables {
            residues.push(coefficient_from_evals(t, k)?);
        }
        if residues.iter().all(|&r| r == 0) {
            coeffs.push(BigUint::zero());
        } else {
            coeffs.push(crt_reconstruct(&primes, &residues)?.value);
        }
    }
    Ok((
        DominationPolynomial::from_coeffs(coeffs),
        LowspaceProvenance {
            primes: provenance,
            fallback: false,
            meter,
        },
    ))
}

/// Product of all primes strictly between `n` and `2n`, the quantity that
/// must exceed `2^n` for the reconstruction to be unambiguous.
pub fn prime_product_strictly_between(n: u64) -> BigUint {
    primes_in_open_interval(n, 2 * n)
        .into_iter()
        .fold(BigUint::one(), |acc, p| acc * BigUint::from(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::dfs_tdd;
    use crate::oracle::brute_count_ds;

    #[test]
    fn primes_between_examples() {
        assert_eq!(primes_between(3), vec![5, 7]);
        assert_eq!(primes_between(1), vec![3]);
        // Open interval (22, 44).
        assert_eq!(primes_between(21), vec![23, 29, 31, 37, 41, 43]);
    }

    #[test]
    fn primitive_root_examples() {
        assert_eq!(primitive_root(5).unwrap(), 2);
        assert_eq!(primitive_root(7).unwrap(), 3);
        assert_eq!(primitive_root(3).unwrap(), 2);
        assert_eq!(primitive_root(6), Err(ModError::NotPrime(6)));
        assert_eq!(primitive_root(2), Err(ModError::NoPrimitiveRoot(2)));
    }

    #[test]
    fn roots_generate_whole_group() {
        for p in [3u64, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
            let alpha = primitive_root(p).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for i in 0..p - 1 {
                seen.insert(pow_mod(alpha, i, p));
            }
            assert_eq!(seen.len() as u64, p - 1, "p={}", p);
        }
    }

    #[test]
    fn orthogonality_identity() {
        // sum_i (alpha^j)^i is -1 for j = 0 and 0 for 1 <= j <= p-2.
        for p in primes_in_open_interval(2, 50) {
            if p == 2 {
                continue;
            }
            let alpha = primitive_root(p).unwrap();
            for j in 0..p - 1 {
                let a = pow_mod(alpha, j, p);
                let mut sum = 0u64;
                let mut x = 1u64;
                for _ in 0..p - 1 {
                    sum = (sum + x) % p;
                    x = x * a % p;
                }
                let expect = if j == 0 { p - 1 } else { 0 };
                assert_eq!(sum, expect, "p={} j={}", p, j);
            }
        }
    }

    #[test]
    fn coefficient_recovery_for_path3_polynomial() {
        // P(x) = x + 3x^2 + x^3 mod 5, k = 2 -> 3.
        let poly = DominationPolynomial::from_coeffs(
            [0u32, 1, 3, 1].iter().map(|&x| BigUint::from(x)).collect(),
        );
        let t = ResidueTable::build(&poly, 5).unwrap();
        assert_eq!(coefficient_from_evals(&t, 2).unwrap(), 3);
        assert_eq!(coefficient_from_evals(&t, 1).unwrap(), 1);
        assert_eq!(coefficient_from_evals(&t, 3).unwrap(), 1);
        assert_eq!(coefficient_from_evals(&t, 0).unwrap(), 0);
    }

    #[test]
    fn constant_polynomial_recovery() {
        let poly =
            DominationPolynomial::from_coeffs(vec![BigUint::from(4u32), BigUint::zero()]);
        let t = ResidueTable::build(&poly, 7).unwrap();
        assert_eq!(coefficient_from_evals(&t, 0).unwrap(), 4);
        assert_eq!(coefficient_from_evals(&t, 1).unwrap(), 0);
    }

    #[test]
    fn recovery_rejects_out_of_range_k() {
        let poly = DominationPolynomial::from_coeffs(vec![BigUint::one()]);
        let t = ResidueTable::build(&poly, 5).unwrap();
        assert!(coefficient_from_evals(&t, 4).is_err());
    }

    #[test]
    fn crt_examples() {
        let w = crt_reconstruct(&[5, 7], &[3, 1]).unwrap();
        assert_eq!(w.value, BigUint::from(8u32));
        let w = crt_reconstruct(&[11], &[6]).unwrap();
        assert_eq!(w.value, BigUint::from(6u32));
        let w = crt_reconstruct(&[5, 7, 11], &[0, 0, 0]).unwrap();
        assert_eq!(w.value, BigUint::zero());
        assert_eq!(
            crt_reconstruct(&[6, 9], &[1, 1]),
            Err(ModError::NonCoprimeModuli { a: 6, b: 9 })
        );
    }

    #[test]
    fn crt_round_trip_against_direct_remainders() {
        let moduli = [23u64, 29, 31];
        let value = 14_321u64;
        let residues: Vec<u64> = moduli.iter().map(|&p| value % p).collect();
        let w = crt_reconstruct(&moduli, &residues).unwrap();
        assert_eq!(w.value, BigUint::from(value));
    }

    #[test]
    fn lowspace_falls_back_below_threshold() {
        let g = Graph::path(3);
        let mut d = TreedepthDecomposition::new(3);
        d.parent[1] = 2;
        d.parent[3] = 2;
        let (poly, prov) = count_ds_lowspace_with_provenance(&g, &d).unwrap();
        assert!(prov.fallback);
        let expect: Vec<BigUint> = [0u32, 1, 3, 1].iter().map(|&x| BigUint::from(x)).collect();
        assert_eq!(poly.coeffs(), &expect[..]);
    }

    #[test]
    fn lowspace_edgeless_25() {
        // Only the full vertex set dominates an edgeless graph.
        let g = Graph::empty(25);
        let d = dfs_tdd(&g);
        let (poly, prov) = count_ds_lowspace_with_provenance(&g, &d).unwrap();
        assert!(!prov.fallback);
        for i in 0..25 {
            assert_eq!(poly.coeffs()[i], BigUint::zero());
        }
        assert_eq!(poly.coeffs()[25], BigUint::one());
    }

    #[test]
    fn lowspace_matches_exact_on_a_shallow_instance() {
        // A 22-vertex forest-of-stars instance with a shallow decomposition.
        let mut edges = Vec::new();
        for leaf in 2..=11u32 {
            edges.push((1, leaf));
        }
        for leaf in 13..=22u32 {
            edges.push((12, leaf));
        }
        let g = Graph::new(22, edges).unwrap();
        let d = dfs_tdd(&g);
        let exact = count_ds_exact(&g, &d).unwrap();
        let low = count_ds_lowspace(&g, &d).unwrap();
        assert_eq!(exact, low);
        assert_eq!(exact.coeffs(), &brute_count_ds(&g)[..]);
    }

    #[test]
    fn prime_product_fact_at_small_n() {
        // Product of primes in (21, 42) is 23*29*31*37*41 > 2^21.
        let prod = prime_product_strictly_between(21);
        let expect = BigUint::from(23u32 * 29 * 31)
            * BigUint::from(37u32)
            * BigUint::from(41u32);
        assert_eq!(prod, expect);
        assert!(prod > (BigUint::one() << 21));
    }
}
