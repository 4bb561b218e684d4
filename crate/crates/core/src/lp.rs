//! Dense two-phase primal simplex for small linear programs.
//!
//! Variables carry explicit bounds. Finite upper bounds are handled by the
//! bounded-variable method (nonbasic variables sit at either bound and are
//! reflected so the tableau always sees them at zero), free variables are
//! split into a positive and a negative part. Pricing is Dantzig's largest
//! reduced cost; after a run of degenerate pivots the solver switches to
//! Bland's smallest-index rule until the objective moves again. Ratio-test
//! ties always go to the smallest basic index.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<T> {
    pub lower: Option<T>,
    pub upper: Option<T>,
}

impl<T: Scalar> Bounds<T> {
    pub fn nonnegative() -> Self {
        Self { lower: Some(T::zero()), upper: None }
    }

    pub fn free() -> Self {
        Self { lower: None, upper: None }
    }

    pub fn between(lower: T, upper: T) -> Self {
        Self { lower: Some(lower), upper: Some(upper) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<(usize, T)>,
    pub relation: Relation,
    pub rhs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    sense: Sense,
    objective: Vec<T>,
    bounds: Vec<Bounds<T>>,
    constraints: Vec<Constraint<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    pub max_iterations: Option<usize>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(sense: Sense) -> Self {
        Self { sense, objective: Vec::new(), bounds: Vec::new(), constraints: Vec::new() }
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, objective: T, bounds: Bounds<T>) -> usize {
        if let (Some(l), Some(u)) = (bounds.lower, bounds.upper) {
            assert!(l <= u, "variable bounds out of order");
        }
        self.objective.push(objective);
        self.bounds.push(bounds);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, T)>, relation: Relation, rhs: T) {
        assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars()), "constraint references unknown variable");
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn bounds(&self) -> &[Bounds<T>] {
        &self.bounds
    }

    pub fn constraints(&self) -> &[Constraint<T>] {
        &self.constraints
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_residual(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for c in &self.constraints {
            let lhs: T = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (b, &v) in self.bounds.iter().zip(x) {
            if let Some(l) = b.lower {
                worst = worst.max(l - v);
            }
            if let Some(u) = b.upper {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    pub fn solve(&self, options: SolveOptions) -> Result<Solution<T>> {
        let mut tableau = Tableau::build(self);
        let started = Instant::now();
        let mut iterations = 0;
        let budget = Budget { started, options };

        if tableau.num_artificial > 0 {
            tableau.install_phase_one_objective();
            tableau.run(&budget, &mut iterations, false)?;
            let infeasibility = -tableau.current_objective();
            let scale = T::one() + tableau.rhs_scale;
            if infeasibility > T::lit(1e-9) * scale {
                return Err(Error::Lp("infeasible"));
            }
            tableau.retire_artificials();
        }

        tableau.install_phase_two_objective(self);
        tableau.run(&budget, &mut iterations, true)?;

        let x = tableau.extract(self);
        let objective = self.objective_value(&x);
        Ok(Solution { x, objective, iterations })
    }
}

struct Budget {
    started: Instant,
    options: SolveOptions,
}

impl Budget {
    fn exceeded(&self, iterations: usize) -> Option<Error> {
        if let Some(limit) = self.options.time_limit {
            if iterations.is_multiple_of(8) && self.started.elapsed() > limit {
                return Some(Error::BudgetExceeded { budget_ms: limit.as_millis() });
            }
        }
        if let Some(max) = self.options.max_iterations {
            if iterations >= max {
                return Some(Error::Lp("iteration limit reached"));
            }
        }
        None
    }
}

/// How an original variable maps onto tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap<T> {
    /// `x = offset + y`
    Shifted { col: usize, offset: T },
    /// `x = offset − y`
    Mirrored { col: usize, offset: T },
    /// `x = y⁺ − y⁻`
    Split { pos: usize, neg: usize },
}

struct Tableau<T> {
    rows: usize,
    /// Columns excluding the right-hand side.
    cols: usize,
    width: usize,
    /// Row-major; `rows` constraint rows followed by the objective row.
    data: Vec<T>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    upper: Vec<Option<T>>,
    flipped: Vec<bool>,
    first_artificial: usize,
    num_artificial: usize,
    maps: Vec<VarMap<T>>,
    /// Costs of the structural columns in tableau orientation (maximize).
    costs: Vec<T>,
    rhs_scale: T,
    tol: T,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let sign = match lp.sense {
            Sense::Maximize => T::one(),
            Sense::Minimize => -T::one(),
        };

        let mut maps = Vec::with_capacity(lp.num_vars());
        let mut upper = Vec::new();
        let mut costs = Vec::new();
        for (j, b) in lp.bounds.iter().enumerate() {
            let c = sign * lp.objective[j];
            match (b.lower, b.upper) {
                (Some(l), u) => {
                    maps.push(VarMap::Shifted { col: upper.len(), offset: l });
                    upper.push(u.map(|u| u - l));
                    costs.push(c);
                }
                (None, Some(u)) => {
                    maps.push(VarMap::Mirrored { col: upper.len(), offset: u });
                    upper.push(None);
                    costs.push(-c);
                }
                (None, None) => {
                    let pos = upper.len();
                    maps.push(VarMap::Split { pos, neg: pos + 1 });
                    upper.extend([None, None]);
                    costs.extend([c, -c]);
                }
            }
        }
        let structural = upper.len();

        // Dense rows over structural columns plus transformed right-hand sides.
        let m = lp.constraints.len();
        let mut dense = vec![T::zero(); m * structural];
        let mut rhs = Vec::with_capacity(m);
        let mut slack_sign = Vec::with_capacity(m);
        for (i, c) in lp.constraints.iter().enumerate() {
            let row = &mut dense[i * structural..(i + 1) * structural];
            let mut b = c.rhs;
            for &(j, a) in &c.coeffs {
                match maps[j] {
                    VarMap::Shifted { col, offset } => {
                        row[col] += a;
                        b -= a * offset;
                    }
                    VarMap::Mirrored { col, offset } => {
                        row[col] -= a;
                        b -= a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += a;
                        row[neg] -= a;
                    }
                }
            }
            let mut s = match c.relation {
                Relation::Le => Some(T::one()),
                Relation::Ge => Some(-T::one()),
                Relation::Eq => None,
            };
            // Orient rows so that b ≥ 0, preferring a +1 slack when b = 0.
            let negate = b < T::zero() || (b == T::zero() && s == Some(-T::one()));
            if negate {
                row.iter_mut().for_each(|v| *v = -*v);
                b = -b;
                s = s.map(|v| -v);
            }
            rhs.push(b);
            slack_sign.push(s);
        }

        let num_slack = slack_sign.iter().filter(|s| s.is_some()).count();
        let needs_artificial: Vec<bool> = slack_sign.iter().map(|s| *s != Some(T::one())).collect();
        let num_artificial = needs_artificial.iter().filter(|&&a| a).count();
        let first_slack = structural;
        let first_artificial = structural + num_slack;
        let cols = first_artificial + num_artificial;
        let width = cols + 1;

        let mut data = vec![T::zero(); (m + 1) * width];
        let mut basis = vec![0; m];
        let mut next_slack = first_slack;
        let mut next_art = first_artificial;
        for i in 0..m {
            let row = &mut data[i * width..(i + 1) * width];
            row[..structural].copy_from_slice(&dense[i * structural..(i + 1) * structural]);
            row[cols] = rhs[i];
            if let Some(s) = slack_sign[i] {
                row[next_slack] = s;
                if s == T::one() {
                    basis[i] = next_slack;
                }
                next_slack += 1;
            }
            if needs_artificial[i] {
                row[next_art] = T::one();
                basis[i] = next_art;
                next_art += 1;
            }
        }
        upper.resize(cols, None);
        costs.resize(cols, T::zero());
        let mut is_basic = vec![false; cols];
        for &b in &basis {
            is_basic[b] = true;
        }
        let rhs_scale = rhs.iter().copied().fold(T::zero(), T::max);

        Self {
            rows: m,
            cols,
            width,
            data,
            basis,
            is_basic,
            upper,
            flipped: vec![false; cols],
            first_artificial,
            num_artificial,
            maps,
            costs,
            rhs_scale,
            tol: T::pivot_tolerance(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.width + j]
    }

    fn objective_row(&mut self) -> &mut [T] {
        let start = self.rows * self.width;
        &mut self.data[start..start + self.width]
    }

    fn current_objective(&self) -> T {
        -self.at(self.rows, self.cols)
    }

    /// Writes `Σ ĉ_j y_j − z = −K` into the objective row and prices out the basis.
    fn install_objective(&mut self, raw_costs: &[T]) {
        let cols = self.cols;
        let mut row = vec![T::zero(); self.width];
        let mut constant = T::zero();
        for j in 0..cols {
            if self.flipped[j] {
                row[j] = -raw_costs[j];
                constant += raw_costs[j] * self.upper[j].expect("only bounded columns flip");
            } else {
                row[j] = raw_costs[j];
            }
        }
        row[cols] = -constant;
        for i in 0..self.rows {
            let cb = row[self.basis[i]];
            if cb != T::zero() {
                let src = &self.data[i * self.width..(i + 1) * self.width];
                for (r, &s) in row.iter_mut().zip(src) {
                    *r -= cb * s;
                }
            }
        }
        self.objective_row().copy_from_slice(&row);
    }

    fn install_phase_one_objective(&mut self) {
        let mut raw = vec![T::zero(); self.cols];
        for c in raw.iter_mut().skip(self.first_artificial) {
            *c = -T::one();
        }
        self.install_objective(&raw);
    }

    fn install_phase_two_objective(&mut self, _lp: &LinearProgram<T>) {
        let raw = self.costs.clone();
        self.install_objective(&raw);
    }

    /// Pins artificials at zero so the ratio test drives basic ones out.
    fn retire_artificials(&mut self) {
        for j in self.first_artificial..self.cols {
            self.upper[j] = Some(T::zero());
            if self.flipped[j] {
                self.flip(j);
            }
        }
    }

    fn choose_entering(&self, phase_two: bool, bland: bool) -> Option<usize> {
        let limit = if phase_two { self.first_artificial } else { self.cols };
        let obj = &self.data[self.rows * self.width..self.rows * self.width + self.cols];
        let mut best: Option<(usize, T)> = None;
        for (j, &d) in obj.iter().enumerate().take(limit) {
            if self.is_basic[j] || d <= self.tol {
                continue;
            }
            if self.upper[j] == Some(T::zero()) {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((j, d));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Returns the step length and the leaving row (None for a bound flip).
    fn ratio_test(&self, entering: usize) -> Option<(T, Option<(usize, bool)>)> {
        let mut best: Option<(T, Option<(usize, bool)>, usize)> = None;
        if let Some(u) = self.upper[entering] {
            best = Some((u, None, usize::MAX));
        }
        for i in 0..self.rows {
            let alpha = self.at(i, entering);
            let beta = self.at(i, self.cols).max(T::zero());
            let basic = self.basis[i];
            let candidate = if alpha > self.tol {
                Some((beta / alpha, false))
            } else if alpha < -self.tol {
                self.upper[basic].map(|u| (((u - beta).max(T::zero())) / -alpha, true))
            } else {
                None
            };
            if let Some((t, to_upper)) = candidate {
                let better = match best {
                    None => true,
                    Some((bt, _, bidx)) => t < bt || (t == bt && basic < bidx),
                };
                if better {
                    best = Some((t, Some((i, to_upper)), basic));
                }
            }
        }
        best.map(|(t, leave, _)| (t, leave))
    }

    /// Reflects a nonbasic column: `y_j ← u_j − y_j`.
    fn flip(&mut self, j: usize) {
        let u = self.upper[j].expect("flip requires a finite upper bound");
        let (w, cols) = (self.width, self.cols);
        for i in 0..=self.rows {
            let a = self.data[i * w + j];
            if a != T::zero() {
                self.data[i * w + cols] -= a * u;
                self.data[i * w + j] = -a;
            }
        }
        self.flipped[j] = !self.flipped[j];
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let inv = T::one() / self.data[r * w + e];
        let mut pivot_row: Vec<T> = self.data[r * w..(r + 1) * w].to_vec();
        for v in pivot_row.iter_mut() {
            *v *= inv;
        }
        pivot_row[e] = T::one();
        let nz: Vec<usize> = (0..w).filter(|&k| pivot_row[k] != T::zero()).collect();
        // A contiguous sweep vectorizes; it wins once the row is a few percent dense.
        let dense = nz.len() * 4 > w;
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let factor = self.data[i * w + e];
            if factor == T::zero() {
                continue;
            }
            let row = &mut self.data[i * w..(i + 1) * w];
            if dense {
                for (v, &p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            } else {
                for &k in &nz {
                    row[k] -= factor * pivot_row[k];
                }
            }
            row[e] = T::zero();
        }
        self.data[r * w..(r + 1) * w].copy_from_slice(&pivot_row);
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[e] = true;
        self.basis[r] = e;
    }

    fn run(&mut self, budget: &Budget, iterations: &mut usize, phase_two: bool) -> Result<()> {
        const DEGENERATE_STREAK: usize = 32;
        let mut degenerate = 0usize;
        loop {
            if let Some(err) = budget.exceeded(*iterations) {
                return Err(err);
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let Some(e) = self.choose_entering(phase_two, bland) else {
                return Ok(());
            };
            let Some((step, leave)) = self.ratio_test(e) else {
                return Err(Error::Lp("unbounded"));
            };
            match leave {
                None => self.flip(e),
                Some((r, to_upper)) => {
                    let leaving = self.basis[r];
                    self.pivot(r, e);
                    if to_upper {
                        self.flip(leaving);
                    }
                }
            }
            if step <= self.tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            *iterations += 1;
        }
    }

    fn extract(&self, lp: &LinearProgram<T>) -> Vec<T> {
        let mut y = vec![T::zero(); self.cols];
        for (i, &b) in self.basis.iter().enumerate() {
            y[b] = self.at(i, self.cols);
        }
        let value = |j: usize| -> T {
            if self.flipped[j] {
                self.upper[j].expect("flipped column is bounded") - y[j]
            } else {
                y[j]
            }
        };
        let mut x = Vec::with_capacity(lp.num_vars());
        for (k, map) in self.maps.iter().enumerate() {
            let v = match *map {
                VarMap::Shifted { col, offset } => offset + value(col),
                VarMap::Mirrored { col, offset } => offset - value(col),
                VarMap::Split { pos, neg } => value(pos) - value(neg),
            };
            // Snap round-off back inside the declared bounds.
            let b = lp.bounds[k];
            let v = b.lower.map_or(v, |l| v.max(l));
            let v = b.upper.map_or(v, |u| v.min(u));
            x.push(v);
        }
        x
    }
}
