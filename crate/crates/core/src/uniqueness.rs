//! Profile uniqueness: the smallest KL divergence (in bits) between any
//! profile in an uncertainty class and the population's average profile.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::Pmf;
use crate::profiles::{check_feasible, UncertaintyClass};
use crate::scalar::Scalar;
use crate::taxonomy::Taxonomy;

/// Floor applied to the population profile before minimizing.
pub const POPULATION_FLOOR: f64 = 1e-6;

/// Stop once an accepted step improves the objective by less than this.
pub const MIN_DECREASE: f64 = 1e-9;

/// Percentile at or above which a profile counts as "very unique".
pub const VERY_UNIQUE_PERCENTILE: f64 = 90.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats<T> {
    pub p_bar: Pmf<T>,
    pub u_values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport<T> {
    /// Minimum divergence in bits.
    pub u_min: T,
    /// `None` when there is no population to rank against.
    pub percentile: Option<T>,
    pub attaining_p: Pmf<T>,
    pub iterations: usize,
}

/// `D(p‖q) = Σ p_i log2(p_i / q_i)` with `0·log 0 = 0`.
pub fn kl_divergence<T: Scalar>(p: &Pmf<T>, q: &Pmf<T>) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::Dimension { expected: p.len(), got: q.len() });
    }
    let mut total = T::zero();
    for (i, (&pi, &qi)) in p.as_slice().iter().zip(q.as_slice()).enumerate() {
        if pi > T::zero() {
            if qi <= T::zero() {
                return Err(Error::SupportViolation { index: i });
            }
            total += pi * (pi / qi).log2();
        }
    }
    Ok(total.max(T::zero()))
}

/// Divergence against `q` floored at `eps` and renormalized.
pub fn kl_divergence_smoothed<T: Scalar>(p: &Pmf<T>, q: &Pmf<T>, eps: T) -> Result<T> {
    kl_divergence(p, &q.smoothed(eps))
}

/// `∂D(p‖p̄)/∂p_i = log2(p_i / p̄_i) + 1/ln 2`.
pub fn kl_gradient<T: Scalar>(p: &[T], p_bar: &[T]) -> Vec<T> {
    let inv_ln2 = T::one() / T::lit(std::f64::consts::LN_2);
    let floor = T::lit(1e-300).max(T::min_positive_value());
    p.iter().zip(p_bar).map(|(&x, &r)| (x.max(floor) / r).log2() + inv_ln2).collect()
}

fn kl_raw<T: Scalar>(p: &[T], p_bar: &[T]) -> T {
    p.iter()
        .zip(p_bar)
        .filter(|(&x, _)| x > T::zero())
        .map(|(&x, &r)| x * (x / r).log2())
        .sum()
}

/// Euclidean projection onto `{p : p_min ≤ p ≤ p_max, Σp = 1}`.
///
/// Bisects on the shift `τ` in `p_i(τ) = clamp(x_i − τ, p_min_i, p_max_i)`.
pub fn project_to_class<T: Scalar>(x: &[T], u: &UncertaintyClass<T>) -> Result<Pmf<T>> {
    if x.len() != u.dim() {
        return Err(Error::Dimension { expected: u.dim(), got: x.len() });
    }
    if !check_feasible(u) {
        return Err(Error::InfeasibleClass);
    }
    let clamp_at = |tau: T| -> Vec<T> {
        x.iter()
            .zip(u.p_min.iter().zip(&u.p_max))
            .map(|(&v, (&lo, &hi))| (v - tau).max(lo).min(hi))
            .collect()
    };
    let mass = |p: &[T]| p.iter().copied().sum::<T>();

    // At τ_lo every coordinate sits at p_max (mass ≥ 1); at τ_hi at p_min (mass ≤ 1).
    let mut lo = x.iter().zip(&u.p_max).map(|(&v, &h)| v - h).fold(T::infinity(), T::min);
    let mut hi = x.iter().zip(&u.p_min).map(|(&v, &l)| v - l).fold(T::neg_infinity(), T::max);
    let target = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
    let mut best = clamp_at(lo);
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let p = clamp_at(mid);
        let s = mass(&p);
        let done = (s - T::one()).abs() <= target || mid == lo || mid == hi;
        if s > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
        best = p;
        if done {
            break;
        }
    }
    Ok(unchecked_pmf(best))
}

fn unchecked_pmf<T: Scalar>(values: Vec<T>) -> Pmf<T> {
    // Feasible classes keep the mass within the bisection tolerance of one.
    Pmf::new(values.clone()).unwrap_or_else(|_| Pmf::normalized(values).expect("positive mass"))
}

/// Minimizes `D(p‖p̄)` over the class by projected gradient descent.
///
/// Steps start from a Barzilai–Borwein estimate and are halved until an
/// Armijo decrease holds, so the objective never increases. The start point
/// is the projection of the smoothed `p̄`.
pub fn min_uniqueness<T: Scalar>(
    u: &UncertaintyClass<T>,
    p_bar: &Pmf<T>,
    population: &[T],
    budget: Duration,
) -> Result<UniquenessReport<T>> {
    let trace = minimize_divergence(u, p_bar, budget)?;
    let percentile = percentile(trace.value, population);
    Ok(UniquenessReport { u_min: trace.value, percentile, attaining_p: trace.point, iterations: trace.objective_history.len() - 1 })
}

/// Full optimization trace, used to inspect solver behaviour.
#[derive(Debug, Clone)]
pub struct DivergenceTrace<T> {
    pub value: T,
    pub point: Pmf<T>,
    pub objective_history: Vec<T>,
    pub hit_budget: bool,
}

pub fn minimize_divergence<T: Scalar>(u: &UncertaintyClass<T>, p_bar: &Pmf<T>, budget: Duration) -> Result<DivergenceTrace<T>> {
    if p_bar.len() != u.dim() {
        return Err(Error::Dimension { expected: u.dim(), got: p_bar.len() });
    }
    let started = Instant::now();
    let reference = p_bar.smoothed(T::lit(POPULATION_FLOOR));
    let r = reference.as_slice();

    let mut x = project_to_class(r, u)?.into_vec();
    let mut f = kl_raw(&x, r);
    let mut g = kl_gradient(&x, r);
    let mut history = vec![f];
    let mut step = T::one();
    let armijo = T::lit(1e-4);
    let min_decrease = T::lit(MIN_DECREASE);
    let mut hit_budget = false;

    for _ in 0..10_000 {
        if started.elapsed() > budget {
            hit_budget = true;
            break;
        }
        let mut trial_step = step;
        let mut accepted = None;
        for _ in 0..60 {
            let shifted: Vec<T> = x.iter().zip(&g).map(|(&xi, &gi)| xi - trial_step * gi).collect();
            let candidate = project_to_class(&shifted, u)?.into_vec();
            let directional: T = candidate.iter().zip(&x).zip(&g).map(|((&c, &xi), &gi)| (c - xi) * gi).sum();
            let fc = kl_raw(&candidate, r);
            if fc <= f + armijo * directional {
                accepted = Some((candidate, fc));
                break;
            }
            trial_step /= T::lit(2.0);
        }
        let Some((next, f_next)) = accepted else { break };
        let decrease = f - f_next;
        let g_next = kl_gradient(&next, r);

        // Barzilai–Borwein step for the next iteration.
        let (mut ss, mut sy) = (T::zero(), T::zero());
        for i in 0..x.len() {
            let s = next[i] - x[i];
            ss += s * s;
            sy += s * (g_next[i] - g[i]);
        }
        step = if sy > T::zero() { (ss / sy).max(T::lit(1e-12)).min(T::lit(1e12)) } else { T::one() };

        x = next;
        f = f_next;
        g = g_next;
        history.push(f);
        if decrease < min_decrease {
            break;
        }
    }
    Ok(DivergenceTrace { value: f.max(T::zero()), point: unchecked_pmf(x), objective_history: history, hit_budget })
}

/// Componentwise mean of equally sized profiles.
pub fn average_profile<T: Scalar>(profiles: &[Pmf<T>]) -> Result<Pmf<T>> {
    let first = profiles.first().ok_or(Error::Empty("no profiles to average"))?;
    let n = first.len();
    let mut acc = vec![T::zero(); n];
    for p in profiles {
        if p.len() != n {
            return Err(Error::Dimension { expected: n, got: p.len() });
        }
        for (a, &v) in acc.iter_mut().zip(p.as_slice()) {
            *a += v;
        }
    }
    let k = T::from_usize(profiles.len()).unwrap();
    Pmf::normalized(acc.into_iter().map(|v| v / k).collect())
}

/// Share of the population strictly below `u`, in percent.
pub fn percentile<T: Scalar>(u: T, population: &[T]) -> Option<T> {
    if population.is_empty() {
        return None;
    }
    let below = population.iter().filter(|&&v| v < u).count();
    Some(T::lit(100.0) * T::from_usize(below).unwrap() / T::from_usize(population.len()).unwrap())
}

/// Lifts a bottom-level class to the top level by summing bounds per parent.
///
/// The result is an outer box around the exact image of the class.
pub fn class_to_top<T: Scalar>(u: &UncertaintyClass<T>, taxonomy: &Taxonomy) -> Result<UncertaintyClass<T>> {
    let lo = taxonomy.aggregate(&u.p_min)?;
    let hi: Vec<T> = taxonomy.aggregate(&u.p_max)?.into_iter().map(|v| v.min(T::one())).collect();
    let lo: Vec<T> = lo.into_iter().zip(&hi).map(|(l, &h)| l.min(h)).collect();
    let mut top = UncertaintyClass::new(lo, hi)?;
    top.samples_seen = u.samples_seen;
    Ok(top)
}
