//! Robust minimax detector for interest-based ads.
//!
//! The rule `d̃_j` is the probability of declaring an ad of category `j`
//! interest-based. It maximizes `ζ` subject to
//!
//! ```text
//! μᵀp_min − λᵀp_max + ν ≥ ζ
//! 1 − d̃ᵀq            ≥ ζ
//! μ − λ + ν·1         ≤ d̃
//! λ, μ ≥ 0,  0 ≤ d̃ ≤ 1
//! ```
//!
//! where the first and third rows are the dual of `min { d̃ᵀp : p ∈ 𝒫 }`.
//! The minimax error probability is `1 − ζ`.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{Bounds, LinearProgram, Relation, Sense, SolveOptions};
use crate::pmf::Pmf;
use crate::profiles::{check_feasible, UncertaintyClass};
use crate::scalar::Scalar;

/// Default per-solve time budget.
pub const DEFAULT_BUDGET: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdClass {
    InterestBased,
    NonInterestBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimize {
    Min,
    Max,
}

/// Lagrange multipliers certifying the inner minimization over the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate<T> {
    pub lambda: Vec<T>,
    pub mu: Vec<T>,
    pub nu: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRule<T> {
    pub d_tilde: Vec<T>,
    pub zeta: T,
    pub dual: DualCertificate<T>,
}

impl<T: Scalar> DetectorRule<T> {
    pub fn worst_case_error(&self) -> T {
        T::one() - self.zeta
    }

    pub fn dim(&self) -> usize {
        self.d_tilde.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport<T> {
    /// `1 − min_{p∈𝒫} d̃ᵀp`: missed interest-based ads, worst case.
    pub p1_w: T,
    /// `d̃ᵀq`: non-interest-based ads flagged as interest-based.
    pub p2: T,
    pub minimax_error: T,
}

/// `M_ij = P(Ĥ = i | H = j)`; rows are decisions, columns hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMatrix<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Scalar> PerformanceMatrix<T> {
    /// Performance of `rule` when interest-based ads follow `p`.
    pub fn for_profile(rule: &DetectorRule<T>, p: &[T], q: &Pmf<T>) -> Self {
        let d1: T = rule.d_tilde.iter().zip(p).map(|(&d, &v)| d * v).sum();
        let d2 = q.dot(&rule.d_tilde);
        Self { m: [[d1, d2], [T::one() - d1, T::one() - d2]] }
    }

    /// Worst case over the class: smallest detection, largest miss.
    pub fn worst_case(rule: &DetectorRule<T>, u: &UncertaintyClass<T>, q: &Pmf<T>) -> Result<Self> {
        let (inf, _) = linear_opt_over_class(&rule.d_tilde, u, Optimize::Min)?;
        let d2 = q.dot(&rule.d_tilde);
        Ok(Self { m: [[inf, d2], [T::one() - inf, T::one() - d2]] })
    }

    pub fn columns_sum_to_one(&self) -> bool {
        let tol = T::mass_tolerance();
        (0..2).all(|j| (self.m[0][j] + self.m[1][j] - T::one()).abs() <= tol)
    }
}

/// Optimizes `cᵀp` over the class by greedy mass allocation.
///
/// Starts at `p_min` and pours the remaining `1 − Σ p_min` into coordinates in
/// order of `c` (descending to maximize, ascending to minimize), each capped at
/// `p_max`. Ties are taken in index order.
pub fn linear_opt_over_class<T: Scalar>(c: &[T], u: &UncertaintyClass<T>, sense: Optimize) -> Result<(T, Pmf<T>)> {
    if c.len() != u.dim() {
        return Err(Error::Dimension { expected: u.dim(), got: c.len() });
    }
    if !check_feasible(u) {
        return Err(Error::InfeasibleClass);
    }
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = c[a].partial_cmp(&c[b]).unwrap_or(std::cmp::Ordering::Equal);
        match sense {
            Optimize::Max => ord.reverse(),
            Optimize::Min => ord,
        }
    });
    let mut p = u.p_min.clone();
    let mut remaining = T::one() - p.iter().copied().sum::<T>();
    for &i in &order {
        if remaining <= T::zero() {
            break;
        }
        let room = u.p_max[i] - u.p_min[i];
        let add = room.min(remaining);
        p[i] += add;
        remaining -= add;
    }
    // Within the feasibility slack a sliver of mass may be left over or
    // overdrawn; renormalizing keeps the argument a valid PMF.
    let p = Pmf::normalized(p)?;
    let value = p.dot(c);
    Ok((value, p))
}

/// Column layout of the minimax LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimaxLayout {
    pub n: usize,
}

impl MinimaxLayout {
    pub fn zeta(&self) -> usize {
        0
    }
    pub fn d(&self, j: usize) -> usize {
        1 + j
    }
    pub fn lambda(&self, j: usize) -> usize {
        1 + self.n + j
    }
    pub fn mu(&self, j: usize) -> usize {
        1 + 2 * self.n + j
    }
    pub fn nu(&self) -> usize {
        1 + 3 * self.n
    }
    pub fn num_vars(&self) -> usize {
        3 * self.n + 2
    }
}

#[derive(Debug, Clone)]
pub struct MinimaxLp<T> {
    pub program: LinearProgram<T>,
    pub layout: MinimaxLayout,
}

pub fn build_minimax_lp<T: Scalar>(u: &UncertaintyClass<T>, q: &Pmf<T>) -> Result<MinimaxLp<T>> {
    let n = u.dim();
    if q.len() != n {
        return Err(Error::Dimension { expected: n, got: q.len() });
    }
    if !check_feasible(u) {
        return Err(Error::InfeasibleClass);
    }
    let layout = MinimaxLayout { n };
    let mut lp = LinearProgram::new(Sense::Maximize);
    lp.add_var(T::one(), Bounds::free());
    for _ in 0..n {
        lp.add_var(T::zero(), Bounds::between(T::zero(), T::one()));
    }
    for _ in 0..2 * n {
        lp.add_var(T::zero(), Bounds::nonnegative());
    }
    lp.add_var(T::zero(), Bounds::free());
    debug_assert_eq!(lp.num_vars(), layout.num_vars());

    // μᵀp_min − λᵀp_max + ν − ζ ≥ 0
    let mut row = Vec::with_capacity(2 * n + 2);
    for j in 0..n {
        if u.p_min[j] != T::zero() {
            row.push((layout.mu(j), u.p_min[j]));
        }
        if u.p_max[j] != T::zero() {
            row.push((layout.lambda(j), -u.p_max[j]));
        }
    }
    row.push((layout.nu(), T::one()));
    row.push((layout.zeta(), -T::one()));
    lp.add_constraint(row, Relation::Ge, T::zero());

    // d̃ᵀq + ζ ≤ 1
    let mut row: Vec<(usize, T)> =
        (0..n).filter(|&j| q.get(j) != T::zero()).map(|j| (layout.d(j), q.get(j))).collect();
    row.push((layout.zeta(), T::one()));
    lp.add_constraint(row, Relation::Le, T::one());

    // μ_j − λ_j + ν − d̃_j ≤ 0
    for j in 0..n {
        lp.add_constraint(
            vec![(layout.mu(j), T::one()), (layout.lambda(j), -T::one()), (layout.nu(), T::one()), (layout.d(j), -T::one())],
            Relation::Le,
            T::zero(),
        );
    }
    Ok(MinimaxLp { program: lp, layout })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub elapsed: Duration,
    pub residual: f64,
}

pub fn solve_minimax<T: Scalar>(u: &UncertaintyClass<T>, q: &Pmf<T>, budget: Duration) -> Result<DetectorRule<T>> {
    solve_minimax_with_stats(u, q, budget).map(|(rule, _)| rule)
}

pub fn solve_minimax_with_stats<T: Scalar>(
    u: &UncertaintyClass<T>,
    q: &Pmf<T>,
    budget: Duration,
) -> Result<(DetectorRule<T>, SolveStats)> {
    if budget.is_zero() {
        return Err(Error::InvalidConfig("solver budget must be positive".into()));
    }
    let started = Instant::now();
    let MinimaxLp { program, layout } = build_minimax_lp(u, q)?;
    let solution = program.solve(SolveOptions { time_limit: Some(budget), max_iterations: None })?;
    let x = &solution.x;
    let n = layout.n;
    let rule = DetectorRule {
        d_tilde: (0..n).map(|j| x[layout.d(j)]).collect(),
        zeta: x[layout.zeta()],
        dual: DualCertificate {
            lambda: (0..n).map(|j| x[layout.lambda(j)]).collect(),
            mu: (0..n).map(|j| x[layout.mu(j)]).collect(),
            nu: x[layout.nu()],
        },
    };
    let stats = SolveStats {
        iterations: solution.iterations,
        elapsed: started.elapsed(),
        residual: program.max_residual(x).to_f64_lossy(),
    };
    if stats.elapsed > budget {
        return Err(Error::BudgetExceeded { budget_ms: budget.as_millis() });
    }
    Ok((rule, stats))
}

/// Values the LP solution at `rule` as a point of the minimax LP.
pub fn rule_as_lp_point<T: Scalar>(rule: &DetectorRule<T>) -> Vec<T> {
    let n = rule.dim();
    let layout = MinimaxLayout { n };
    let mut x = vec![T::zero(); layout.num_vars()];
    x[layout.zeta()] = rule.zeta;
    for j in 0..n {
        x[layout.d(j)] = rule.d_tilde[j];
        x[layout.lambda(j)] = rule.dual.lambda[j];
        x[layout.mu(j)] = rule.dual.mu[j];
    }
    x[layout.nu()] = rule.dual.nu;
    x
}

pub fn worst_case_report<T: Scalar>(rule: &DetectorRule<T>, u: &UncertaintyClass<T>, q: &Pmf<T>) -> Result<WorstCaseReport<T>> {
    if rule.dim() != u.dim() || q.len() != u.dim() {
        return Err(Error::Dimension { expected: u.dim(), got: rule.dim() });
    }
    let (inf, _) = linear_opt_over_class(&rule.d_tilde, u, Optimize::Min)?;
    let p1_w = T::one() - inf;
    let p2 = q.dot(&rule.d_tilde);
    Ok(WorstCaseReport { p1_w, p2, minimax_error: p1_w.max(p2) })
}

/// Draws the randomized decision for an ad of category `category`.
pub fn classify_ad<T: Scalar, R: Rng + ?Sized>(rule: &DetectorRule<T>, category: usize, rng: &mut R) -> AdClass {
    let draw: f64 = rng.random();
    if T::lit(draw) < rule.d_tilde[category] {
        AdClass::InterestBased
    } else {
        AdClass::NonInterestBased
    }
}
