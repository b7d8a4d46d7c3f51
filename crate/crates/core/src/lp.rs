//! Dense linear programming with first-class dual extraction, and a
//! matrix-game solver built on top of it.
//!
//! The solver is a two-phase revised simplex over an explicit basis
//! inverse. Bounded variables are shifted or mirrored onto nonnegative
//! columns (finite upper bounds become extra rows); free variables stay
//! free and never leave the basis once they enter. Pricing is Dantzig's
//! rule with lowest-index tie breaking, falling back to Bland's rule after
//! a run of degenerate pivots, so the pivot sequence is a pure function of
//! the input.

use crate::error::{Error, Result};
use crate::tol::TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `max cᵀx` subject to row constraints and per-variable bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_nonneg(&mut self, objective: f64) -> usize {
        self.add_var(objective, 0.0, f64::INFINITY)
    }

    pub fn add_free(&mut self, objective: f64) -> usize {
        self.add_var(objective, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Constraint { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::NumericalFailure("bound vectors do not match variable count".into()));
        }
        for j in 0..n {
            if !self.objective[j].is_finite() || self.lower[j] > self.upper[j] {
                return Err(Error::NumericalFailure(format!("variable {j} is malformed")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|&(j, v)| j >= n || !v.is_finite()) {
                return Err(Error::NumericalFailure(format!("row {r} is malformed")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One multiplier per row; `≤` rows carry nonnegative duals.
    pub duals: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn empty(status: LpStatus) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            duals: Vec::new(),
            objective: match status {
                LpStatus::Unbounded => f64::INFINITY,
                _ => f64::NEG_INFINITY,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shift { col: usize, lo: f64 },
    Mirror { col: usize, up: f64 },
    Free { col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    /// Structural column without a sign restriction.
    Free,
    Slack,
    Surplus,
    Artificial,
}

/// Standard form `max cᵀx, Ax (≤|=|≥) b, b ≥ 0` with logical columns kept
/// implicit as signed unit vectors. Structural columns are nonnegative
/// except those marked free.
struct Standard {
    m: usize,
    n_struct: usize,
    /// Structural columns, column-major: `cols[j * m + r]`.
    cols: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    kinds: Vec<ColKind>,
    /// Row of each logical column.
    logical_row: Vec<usize>,
    flipped: Vec<bool>,
    orig_rows: usize,
    /// Smallest usable pivot, relative to the largest matrix entry.
    pivot_tol: f64,
}

impl Standard {
    fn total_cols(&self) -> usize {
        self.kinds.len()
    }

    fn is_structural(&self, j: usize) -> bool {
        j < self.n_struct
    }

    /// Dense copy of column `j`.
    fn column(&self, j: usize, out: &mut [f64]) {
        if self.is_structural(j) {
            out.copy_from_slice(&self.cols[j * self.m..(j + 1) * self.m]);
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let r = self.logical_row[j - self.n_struct];
        out[r] = if self.kinds[j] == ColKind::Surplus { -1.0 } else { 1.0 };
    }

    /// `y · A_j`.
    fn dot_col(&self, y: &[f64], j: usize) -> f64 {
        if self.is_structural(j) {
            return self.cols[j * self.m..(j + 1) * self.m]
                .iter()
                .zip(y)
                .map(|(a, b)| a * b)
                .sum();
        }
        let v = y[self.logical_row[j - self.n_struct]];
        if self.kinds[j] == ColKind::Surplus {
            -v
        } else {
            v
        }
    }
}

fn standardize(lp: &LinearProgram) -> (Standard, Vec<VarMap>, f64) {
    let mut maps = Vec::with_capacity(lp.num_vars());
    let mut kinds = Vec::with_capacity(lp.num_vars());
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..lp.num_vars() {
        let (lo, up) = (lp.lower[j], lp.upper[j]);
        let col = kinds.len();
        if lo.is_finite() {
            maps.push(VarMap::Shift { col, lo });
            if up.is_finite() {
                bound_rows.push((col, up - lo));
            }
            kinds.push(ColKind::Structural);
        } else if up.is_finite() {
            maps.push(VarMap::Mirror { col, up });
            kinds.push(ColKind::Structural);
        } else {
            maps.push(VarMap::Free { col });
            kinds.push(ColKind::Free);
        }
    }
    let n_struct = kinds.len();
    let orig_rows = lp.rows.len();
    let m = orig_rows + bound_rows.len();
    let mut cols = vec![0.0; n_struct * m];
    let mut b = vec![0.0; m];
    let mut relations = vec![Relation::Le; m];
    for (r, row) in lp.rows.iter().enumerate() {
        let mut rhs = row.rhs;
        for &(j, v) in &row.coeffs {
            match maps[j] {
                VarMap::Shift { col, lo } => {
                    cols[col * m + r] += v;
                    rhs -= v * lo;
                }
                VarMap::Mirror { col, up } => {
                    cols[col * m + r] -= v;
                    rhs -= v * up;
                }
                VarMap::Free { col } => cols[col * m + r] += v,
            }
        }
        b[r] = rhs;
        relations[r] = row.relation;
    }
    for (n, &(col, width)) in bound_rows.iter().enumerate() {
        let r = orig_rows + n;
        cols[col * m + r] = 1.0;
        b[r] = width;
    }

    let mut cost = vec![0.0; n_struct];
    let mut offset = 0.0;
    for (j, &c) in lp.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Shift { col, lo } => {
                cost[col] += c;
                offset += c * lo;
            }
            VarMap::Mirror { col, up } => {
                cost[col] -= c;
                offset += c * up;
            }
            VarMap::Free { col } => cost[col] += c,
        }
    }

    let mut flipped = vec![false; m];
    for r in 0..m {
        if b[r] < 0.0 {
            flipped[r] = true;
            b[r] = -b[r];
            for j in 0..n_struct {
                cols[j * m + r] = -cols[j * m + r];
            }
        }
    }

    let mut logical_row = Vec::new();
    for r in 0..m {
        match (relations[r], flipped[r]) {
            (Relation::Le, false) => {
                kinds.push(ColKind::Slack);
                logical_row.push(r);
            }
            (Relation::Le, true) => {
                kinds.push(ColKind::Surplus);
                logical_row.push(r);
                kinds.push(ColKind::Artificial);
                logical_row.push(r);
            }
            (Relation::Eq, _) => {
                kinds.push(ColKind::Artificial);
                logical_row.push(r);
            }
        }
    }
    cost.resize(kinds.len(), 0.0);
    let largest = cols.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    (
        Standard {
            m,
            n_struct,
            cols,
            b,
            cost,
            kinds,
            logical_row,
            flipped,
            orig_rows,
            pivot_tol: TOL.pivot * largest,
        },
        maps,
        offset,
    )
}

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STREAK: usize = 25;

struct Simplex<'a> {
    sf: &'a Standard,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    scratch: Vec<f64>,
}

#[derive(Debug, PartialEq)]
enum Outcome {
    Optimal,
    Unbounded,
}

impl<'a> Simplex<'a> {
    fn new(sf: &'a Standard) -> Self {
        let m = sf.m;
        let mut basis = vec![usize::MAX; m];
        // Initial basis: slack for ≤ rows, artificial otherwise.
        for (n, &r) in sf.logical_row.iter().enumerate() {
            let j = sf.n_struct + n;
            match sf.kinds[j] {
                ColKind::Slack | ColKind::Artificial => basis[r] = j,
                _ => {}
            }
        }
        let mut is_basic = vec![false; sf.total_cols()];
        for &j in &basis {
            is_basic[j] = true;
        }
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        Simplex {
            sf,
            basis,
            is_basic,
            binv,
            xb: sf.b.clone(),
            pivots_since_refactor: 0,
            scratch: vec![0.0; m],
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.sf.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += c * bi;
                }
            }
        }
        y
    }

    fn ftran(&mut self, j: usize) -> Vec<f64> {
        let m = self.sf.m;
        let mut col = std::mem::take(&mut self.scratch);
        self.sf.column(j, &mut col);
        let mut out = vec![0.0; m];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.binv[r * m..(r + 1) * m];
            *o = row.iter().zip(&col).map(|(a, b)| a * b).sum();
        }
        self.scratch = col;
        out
    }

    /// Replaces the basic column of `leave_row` by `enter`, whose value
    /// becomes `step`.
    fn pivot(&mut self, leave_row: usize, enter: usize, alpha: &[f64], step: f64) {
        let m = self.sf.m;
        let piv = alpha[leave_row];
        for r in 0..m {
            if r != leave_row {
                self.xb[r] -= step * alpha[r];
            }
        }
        self.xb[leave_row] = step;
        let (head, tail) = self.binv.split_at_mut(leave_row * m);
        let (pivot_row, tail) = tail.split_at_mut(m);
        for v in pivot_row.iter_mut() {
            *v /= piv;
        }
        for (r, row) in head.chunks_mut(m).enumerate() {
            let f = alpha[r];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
        for (n, row) in tail.chunks_mut(m).enumerate() {
            let f = alpha[leave_row + 1 + n];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
        let old = self.basis[leave_row];
        self.is_basic[old] = false;
        self.is_basic[enter] = true;
        self.basis[leave_row] = enter;
        self.pivots_since_refactor += 1;
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) -> Result<()> {
        let m = self.sf.m;
        let mut mat = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (c, &j) in self.basis.iter().enumerate() {
            self.sf.column(j, &mut col);
            for r in 0..m {
                mat[r * m + c] = col[r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let mut best = c;
            for r in c + 1..m {
                if mat[r * m + c].abs() > mat[best * m + c].abs() {
                    best = r;
                }
            }
            if mat[best * m + c].abs() < 1e-13 {
                return Err(Error::NumericalFailure("singular basis during refactorisation".into()));
            }
            if best != c {
                for k in 0..m {
                    mat.swap(c * m + k, best * m + k);
                    inv.swap(c * m + k, best * m + k);
                }
            }
            let d = mat[c * m + c];
            for k in 0..m {
                mat[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = mat[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            mat[r * m + k] -= f * mat[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        // `inv` is (B)⁻¹ with rows in basis order.
        self.binv = inv;
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.xb[r] = row.iter().zip(&self.sf.b).map(|(a, b)| a * b).sum();
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Pivot row for an entering column moving in direction `dir`, and the
    /// signed step of the entering variable.
    ///
    /// Basic artificials in phase two leave at a zero step whenever their
    /// entry is usable. Otherwise a two-pass Harris test runs: the first
    /// pass finds the step allowed by bounds relaxed by a small tolerance,
    /// the second picks the largest pivot among rows blocking within that
    /// step. Basic free columns never block.
    fn ratio_test(&self, alpha: &[f64], dir: f64, phase_two: bool) -> Option<(usize, f64)> {
        let sf = self.sf;
        let tol = sf.pivot_tol;
        let relax = 0.01 * TOL.feasibility;
        let kind = |r: usize| sf.kinds[self.basis[r]];
        let pick = |rows: &mut dyn Iterator<Item = usize>| -> Option<usize> {
            rows.fold(None, |best: Option<usize>, r| match best {
                None => Some(r),
                Some(l) => {
                    let (a, b) = (alpha[r].abs(), alpha[l].abs());
                    if a > b || (a == b && self.basis[r] < self.basis[l]) {
                        Some(r)
                    } else {
                        Some(l)
                    }
                }
            })
        };
        if phase_two {
            let mut arts = (0..sf.m).filter(|&r| kind(r) == ColKind::Artificial && alpha[r].abs() > tol);
            if let Some(r) = pick(&mut arts) {
                return Some((r, 0.0));
            }
        }
        let usable = |r: usize| {
            let k = kind(r);
            k != ColKind::Free && !(phase_two && k == ColKind::Artificial) && dir * alpha[r] > tol
        };
        let bound = (0..sf.m)
            .filter(|&r| usable(r))
            .map(|r| (self.xb[r].max(0.0) + relax) / (dir * alpha[r]))
            .fold(f64::INFINITY, f64::min);
        if bound == f64::INFINITY {
            return None;
        }
        let mut within = (0..sf.m).filter(|&r| usable(r) && self.xb[r].max(0.0) / (dir * alpha[r]) <= bound);
        pick(&mut within).map(|r| (r, self.xb[r].max(0.0) / alpha[r]))
    }

    fn run(&mut self, cost: &[f64], allow: &dyn Fn(usize) -> bool, phase_two: bool) -> Result<Outcome> {
        let sf = self.sf;
        let max_iters = 50 * (sf.m + sf.total_cols()) + 1000;
        let scale_c = 1.0 + cost.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut degenerate = 0usize;
        // Columns whose improving ray is indistinguishable from rounding
        // noise; cleared after every pivot.
        let mut blocked = vec![false; sf.total_cols()];
        for _ in 0..max_iters {
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals(cost);
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = TOL.pricing;
            for j in 0..sf.total_cols() {
                if self.is_basic[j] || blocked[j] || !allow(j) {
                    continue;
                }
                let d = cost[j] - sf.dot_col(&y, j);
                let score = if sf.kinds[j] == ColKind::Free { d.abs() } else { d };
                if score > best {
                    enter = Some((j, d));
                    if bland {
                        break;
                    }
                    best = score;
                }
            }
            let Some((enter, reduced)) = enter else {
                return Ok(Outcome::Optimal);
            };
            let alpha = self.ftran(enter);
            let dir = if reduced < 0.0 { -1.0 } else { 1.0 };
            let Some((leave, step)) = self.ratio_test(&alpha, dir, phase_two) else {
                if reduced.abs() > TOL.feasibility * scale_c {
                    return Ok(Outcome::Unbounded);
                }
                blocked[enter] = true;
                continue;
            };
            if step.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(leave, enter, &alpha, step);
            blocked.iter_mut().for_each(|b| *b = false);
        }
        Err(Error::NumericalFailure("simplex iteration limit reached".into()))
    }

    /// Pivots basic artificials out wherever a usable column exists,
    /// choosing the largest available pivot.
    fn drive_out_artificials(&mut self) {
        let sf = self.sf;
        let m = sf.m;
        for r in 0..m {
            if sf.kinds[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut chosen: Option<(usize, f64)> = None;
            for j in 0..sf.total_cols() {
                if self.is_basic[j] || sf.kinds[j] == ColKind::Artificial {
                    continue;
                }
                let v = sf.dot_col(&row, j).abs();
                if v > 1e-7 && chosen.is_none_or(|(_, best)| v > best) {
                    chosen = Some((j, v));
                }
            }
            if let Some((j, _)) = chosen {
                let alpha = self.ftran(j);
                self.pivot(r, j, &alpha, 0.0);
            }
        }
    }
}

struct Verified {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn verify(sx: &Simplex, cost: &[f64]) -> std::result::Result<Verified, String> {
    let sf = sx.sf;
    let m = sf.m;
    let mut x = vec![0.0; sf.total_cols()];
    for (r, &j) in sx.basis.iter().enumerate() {
        x[j] = sx.xb[r];
    }
    let scale_b = 1.0 + sf.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for (j, v) in x.iter_mut().enumerate() {
        if sf.kinds[j] == ColKind::Free {
            continue;
        }
        if *v < -TOL.feasibility * scale_b {
            return Err(format!("column {j} negative ({v})"));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
        if sf.kinds[j] == ColKind::Artificial && *v > TOL.feasibility * scale_b {
            return Err(format!("artificial column {j} positive ({v})"));
        }
    }
    let mut resid = sf.b.clone();
    for (j, &v) in x.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if sf.is_structural(j) {
            for r in 0..m {
                resid[r] -= sf.cols[j * m + r] * v;
            }
        } else {
            let r = sf.logical_row[j - sf.n_struct];
            resid[r] -= if sf.kinds[j] == ColKind::Surplus { -v } else { v };
        }
    }
    if let Some(r) = resid.iter().position(|v| v.abs() > TOL.feasibility * scale_b) {
        return Err(format!("row {r} residual {}", resid[r]));
    }
    let y = sx.duals(cost);
    let scale_c = 1.0 + cost.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut primal = 0.0;
    for j in 0..sf.total_cols() {
        primal += cost[j] * x[j];
        if sf.kinds[j] == ColKind::Artificial {
            continue;
        }
        let d = cost[j] - sf.dot_col(&y, j);
        let excess = if sf.kinds[j] == ColKind::Free { d.abs() } else { d };
        if excess > TOL.feasibility * scale_c {
            return Err(format!("reduced cost of column {j} is {d}"));
        }
        if (d * x[j]).abs() > TOL.complementarity * scale_c * scale_b {
            return Err(format!("complementary slackness violated at column {j}"));
        }
    }
    let dual: f64 = y.iter().zip(&sf.b).map(|(a, b)| a * b).sum();
    if (primal - dual).abs() > TOL.duality_gap * (1.0 + primal.abs()) {
        return Err(format!("duality gap {}", primal - dual));
    }
    Ok(Verified { x, y })
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let (sf, maps, offset) = standardize(lp);
    let mut sx = Simplex::new(&sf);

    let has_artificial = sf.kinds.contains(&ColKind::Artificial);
    if has_artificial {
        let phase1: Vec<f64> = sf
            .kinds
            .iter()
            .map(|k| if *k == ColKind::Artificial { -1.0 } else { 0.0 })
            .collect();
        sx.run(&phase1, &|_| true, false)?;
        let infeas: f64 = sx
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &j)| sf.kinds[j] == ColKind::Artificial)
            .map(|(r, _)| sx.xb[r].max(0.0))
            .sum();
        let scale_b = 1.0 + sf.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeas > TOL.feasibility * scale_b {
            return Ok(LpSolution::empty(LpStatus::Infeasible));
        }
        sx.drive_out_artificials();
    }

    let allow = |j: usize| sf.kinds[j] != ColKind::Artificial;
    let mut verified = None;
    let mut last_err = String::new();
    for attempt in 0..3 {
        if attempt > 0 {
            sx.refactor()?;
        }
        if sx.run(&sf.cost, &allow, true)? == Outcome::Unbounded {
            return Ok(LpSolution::empty(LpStatus::Unbounded));
        }
        match verify(&sx, &sf.cost) {
            Ok(v) => {
                verified = Some(v);
                break;
            }
            Err(e) => last_err = e,
        }
    }
    let Some(Verified { x: xs, y }) = verified else {
        return Err(Error::NumericalFailure(format!("post-solve check failed: {last_err}")));
    };

    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, lo } => lo + xs[col],
            VarMap::Mirror { col, up } => up - xs[col],
            VarMap::Free { col } => xs[col],
        })
        .collect();
    let duals: Vec<f64> = (0..sf.orig_rows)
        .map(|r| if sf.flipped[r] { -y[r] } else { y[r] })
        .collect();
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
    debug_assert!((objective - (offset + sf.cost.iter().zip(&xs).map(|(c, v)| c * v).sum::<f64>())).abs() < 1e-6);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        duals,
        objective,
    })
}

/// Value and optimal mixes of a zero-sum matrix game; rows maximise.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub row_mix: Vec<f64>,
    pub col_mix: Vec<f64>,
}

fn clean_mix(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    clipped.into_iter().map(|v| v / total).collect()
}

pub fn solve_matrix_game(matrix: &[Vec<f64>]) -> Result<MatrixGameSolution> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || matrix.iter().any(|r| r.len() != cols) {
        return Err(Error::NumericalFailure("matrix game needs a nonempty rectangular matrix".into()));
    }
    let mut lp = LinearProgram::new();
    let x: Vec<usize> = (0..rows).map(|_| lp.add_nonneg(0.0)).collect();
    let v = lp.add_free(1.0);
    for c in 0..cols {
        let mut coeffs = Vec::with_capacity(rows + 1);
        coeffs.push((v, 1.0));
        for r in 0..rows {
            if matrix[r][c] != 0.0 {
                coeffs.push((x[r], -matrix[r][c]));
            }
        }
        lp.add_row(coeffs, Relation::Le, 0.0);
    }
    lp.add_row(x.iter().map(|&j| (j, 1.0)).collect(), Relation::Eq, 1.0);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!("matrix game LP returned {:?}", sol.status)));
    }
    Ok(MatrixGameSolution {
        value: sol.x[v],
        row_mix: clean_mix(&sol.x[..rows]),
        col_mix: clean_mix(&sol.duals[..cols]),
    })
}
