//! Exact rational evaluation of occupancy measures.
//!
//! Every finite `f64` is a dyadic rational, so an MDP and a policy given in
//! floating point have exact occupancy measures. These routines compute them
//! without rounding, to check floating-point results and bounds that lie
//! below double precision.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};

pub fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite float")
}

pub fn to_f64(v: &BigRational) -> f64 {
    num_traits::ToPrimitive::to_f64(v).unwrap_or(f64::NAN)
}

/// `gamma^k` for integer `k`.
pub fn power(base: &BigRational, k: usize) -> BigRational {
    num_traits::pow(base.clone(), k)
}

/// Values `v_i = n_i / 2^shift` over one shared power of two.
struct Dyadic {
    nums: Vec<BigInt>,
    shift: u64,
}

/// Exponent `k` of a dyadic rational's denominator `2^k`.
fn denominator_exponent(r: &BigRational) -> u64 {
    r.denom().bits() - 1
}

fn dyadic(values: impl IntoIterator<Item = f64>) -> Dyadic {
    let rs: Vec<BigRational> = values.into_iter().map(rational).collect();
    let shift = rs.iter().map(denominator_exponent).max().unwrap_or(0);
    let nums = rs
        .iter()
        .map(|r| r.numer() << (shift - denominator_exponent(r)))
        .collect();
    Dyadic { nums, shift }
}

fn over_power_of_two(n: BigInt, shift: u64) -> BigRational {
    BigRational::new(n, BigInt::from(1) << shift)
}

struct ExactModel {
    ns: usize,
    na: usize,
    /// Rows `(x,a)` of `P`, flattened.
    p: Dyadic,
    /// Rows of `pi`, flattened.
    pi: Dyadic,
    gamma: Dyadic,
    nu0: Dyadic,
}

impl ExactModel {
    fn new(mdp: &Mdp, policy: &Policy) -> Result<Self> {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        crate::error::check_len("policy states", ns, policy.n_states())?;
        crate::error::check_len("policy actions", na, policy.n_actions())?;
        let t = mdp.transition();
        Ok(Self {
            ns,
            na,
            p: dyadic((0..ns * na).flat_map(|j| (0..ns).map(move |y| t[(j, y)]))),
            pi: dyadic((0..ns).flat_map(|x| (0..na).map(move |a| policy.prob(x, a)))),
            gamma: dyadic([mdp.discount()]),
            nu0: dyadic(mdp.initial_dist().iter().copied()),
        })
    }

    fn p(&self, pair: usize, y: usize) -> &BigInt {
        &self.p.nums[pair * self.ns + y]
    }

    /// State numerators times `pi`; the shift grows by `pi.shift`.
    fn spread(&self, states: &[BigInt]) -> Vec<BigInt> {
        let mut out = Vec::with_capacity(self.ns * self.na);
        for (x, s) in states.iter().enumerate() {
            for a in 0..self.na {
                out.push(s * &self.pi.nums[x * self.na + a]);
            }
        }
        out
    }
}

/// Solves `(I - gamma P^pi)^T d = nu0` exactly, by fraction-free
/// elimination on the system scaled to integers, and returns
/// `mu(x,a) = d(x) pi(a|x)`.
pub fn exact_occupancy(mdp: &Mdp, policy: &Policy) -> Result<Vec<BigRational>> {
    let m = ExactModel::new(mdp, policy)?;
    let (n, na) = (m.ns, m.na);
    // P^pi(x, y) * 2^(pi.shift + p.shift)
    let kernel_shift = m.pi.shift + m.p.shift;
    let kernel: Vec<Vec<BigInt>> = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    (0..na).fold(BigInt::zero(), |acc, a| {
                        acc + &m.pi.nums[x * na + a] * m.p(x * na + a, y)
                    })
                })
                .collect()
        })
        .collect();
    let shift = (kernel_shift + m.gamma.shift).max(m.nu0.shift);
    let one = BigInt::from(1) << shift;
    let g = &m.gamma.nums[0];
    // Row y: d(y) - gamma sum_x P^pi(x, y) d(x) = nu0(y), all times 2^shift.
    let mut a: Vec<Vec<BigInt>> = (0..n)
        .map(|y| {
            let mut row: Vec<BigInt> = (0..n)
                .map(|x| {
                    let v = -((g * &kernel[x][y]) << (shift - kernel_shift - m.gamma.shift));
                    if x == y {
                        v + &one
                    } else {
                        v
                    }
                })
                .collect();
            row.push(&m.nu0.nums[y] << (shift - m.nu0.shift));
            row
        })
        .collect();
    let mut prev = BigInt::from(1);
    for k in 0..n {
        let pivot = (k..n)
            .find(|&r| !a[r][k].is_zero())
            .ok_or(Error::Singular("exact_occupancy"))?;
        a.swap(k, pivot);
        for i in k + 1..n {
            for j in k + 1..=n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
            a[i][k] = BigInt::zero();
        }
        prev = a[k][k].clone();
    }
    let mut d = vec![BigRational::zero(); n];
    for r in (0..n).rev() {
        let mut acc = BigRational::from_integer(a[r][n].clone());
        for c in r + 1..n {
            acc -= BigRational::from_integer(a[r][c].clone()) * &d[c];
        }
        d[r] = acc / BigRational::from_integer(a[r][r].clone());
    }
    let mut mu = Vec::with_capacity(n * na);
    for (x, dx) in d.iter().enumerate() {
        for k in 0..na {
            mu.push(dx * over_power_of_two(m.pi.nums[x * na + k].clone(), m.pi.shift));
        }
    }
    Ok(mu)
}

/// `sum_{t < horizon} gamma^t Pr[x_t = x, a_t = a]` in exact arithmetic.
pub fn exact_truncated_series(
    mdp: &Mdp,
    policy: &Policy,
    horizon: usize,
) -> Result<Vec<BigRational>> {
    let m = ExactModel::new(mdp, policy)?;
    let ns = m.ns;
    let step = m.p.shift + m.pi.shift + m.gamma.shift;
    let g = &m.gamma.nums[0];
    // `pairs` holds gamma^t Pr[x_t, a_t] over 2^shift.
    let mut pairs = m.spread(&m.nu0.nums);
    let mut shift = m.nu0.shift + m.pi.shift;
    let mut mass = pairs.clone();
    for _ in 1..horizon {
        let mut states = vec![BigInt::zero(); ns];
        for (j, pj) in pairs.iter().enumerate() {
            if pj.is_zero() {
                continue;
            }
            for (y, s) in states.iter_mut().enumerate() {
                *s += pj * m.p(j, y);
            }
        }
        for s in states.iter_mut() {
            *s *= g;
        }
        pairs = m.spread(&states);
        shift += step;
        for (acc, p) in mass.iter_mut().zip(&pairs) {
            *acc = (&*acc << step) + p;
        }
    }
    Ok(mass
        .into_iter()
        .map(|v| over_power_of_two(v, shift))
        .collect())
}

pub fn l1_distance(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter()
        .zip(b)
        .fold(BigRational::zero(), |acc, (x, y)| acc + (x - y).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{chain_mdp, make_random_mdp};
    use crate::mdp::occupancy_of_policy;

    #[test]
    fn chain_values_are_exact() {
        let mdp = chain_mdp(0.5);
        let go = Policy::deterministic(&[1, 1], 2).unwrap();
        let mu = exact_occupancy(&mdp, &go).unwrap();
        let third = |k: i64| BigRational::new(BigInt::from(k), BigInt::from(3));
        assert_eq!(mu, vec![third(0), third(4), third(0), third(2)]);
    }

    #[test]
    fn truncation_gap_equals_tail_mass() {
        let mdp = make_random_mdp(4, 2, 0.5, 3).unwrap();
        let pi = Policy::uniform(4, 2);
        let mu = exact_occupancy(&mdp, &pi).unwrap();
        for h in [1, 5, 12] {
            let series = exact_truncated_series(&mdp, &pi, h).unwrap();
            let tail = power(&rational(0.5), h) * BigRational::from_integer(BigInt::from(2));
            let total: BigRational = mu.iter().fold(BigRational::zero(), |a, b| a + b);
            assert_eq!(total, BigRational::from_integer(BigInt::from(2)));
            assert_eq!(l1_distance(&mu, &series), tail);
        }
    }

    #[test]
    fn floating_solve_is_close() {
        let mdp = make_random_mdp(6, 3, 0.9, 1).unwrap();
        let pi = Policy::uniform(6, 3);
        let exact = exact_occupancy(&mdp, &pi).unwrap();
        let float = occupancy_of_policy(&mdp, &pi).unwrap();
        for (e, f) in exact.iter().zip(float.mass.iter()) {
            assert!((to_f64(e) - f).abs() <= 1e-12);
        }
    }
}
