//! Euclidean projection onto the intersection of the constraint sets by
//! cyclic Dykstra alternating projections.
//!
//! Every member set has a closed-form projection: the box clamps, a
//! hyperplane shifts its support, a ball scales its support radially, and a
//! group disk (hyperplane ∩ ball over the same cells) shifts onto the
//! hyperplane and then scales toward the group centre. The box is the
//! `[0,1]` box tightened by the interval bounds each message implies, which
//! leaves the feasible set unchanged.
//!
//! Corrections are kept per set, so a [`DecoderState`] can be resumed after
//! the store grows: new sets start with a zero correction and the iteration
//! continues from the previous dual point.

use thiserror::Error;

use super::{Constraint, ConstraintStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    /// Value every cell is pulled toward.
    pub prior: f64,
    /// Maximum distance to any member set at termination.
    pub tol_feas: f64,
    /// Maximum single-projection displacement within the last sweep.
    pub tol_step: f64,
    pub max_sweeps: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self { prior: 0.5, tol_feas: 1e-8, tol_step: 1e-9, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateField {
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub max_violation: f64,
}

impl EstimateField {
    /// Squared distance to `anchor`.
    pub fn objective(&self, anchor: &[f64]) -> f64 {
        self.values.iter().zip(anchor).map(|(x, a)| (x - a) * (x - a)).sum()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("cell {cell}: implied bounds [{lower}, {upper}] are empty")]
    Infeasible { cell: usize, lower: f64, upper: f64 },
    #[error("no convergence after {} sweeps (max violation {:e})", .estimate.sweeps, .estimate.max_violation)]
    NotConverged { estimate: Box<EstimateField> },
}

impl DecodeError {
    /// Best iterate for a run that hit the sweep cap.
    pub fn into_estimate(self) -> Option<EstimateField> {
        match self {
            DecodeError::NotConverged { estimate } => Some(*estimate),
            DecodeError::Infeasible { .. } => None,
        }
    }
}

/// Accumulated movement of a cell before the sets through it are revisited.
/// Re-projecting a set whose cells have not moved is a no-op, so skipping
/// such sets changes nothing; the threshold only ignores rounding-level drift.
const DRIFT: f64 = 1e-13;

/// Resumable primal/dual iterate for one growing store.
#[derive(Debug, Clone)]
pub struct DecoderState {
    anchor: Vec<f64>,
    x: Vec<f64>,
    box_corr: Vec<f64>,
    corr: Vec<Vec<f64>>,
    // box bounds at the end of the last solve, and whether it converged
    lo: Vec<f64>,
    hi: Vec<f64>,
    settled: bool,
    // reduced form of each set at the end of the last solve
    reduced_keys: Vec<(usize, bool)>,
}

impl DecoderState {
    pub fn new(anchor: Vec<f64>) -> Self {
        let n = anchor.len();
        Self {
            x: anchor.clone(),
            anchor,
            box_corr: vec![0.0; n],
            corr: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            settled: false,
            reduced_keys: Vec::new(),
        }
    }

    pub fn uniform(n: usize, prior: f64) -> Self {
        Self::new(vec![prior; n])
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    fn reset(&mut self) {
        self.x.clone_from(&self.anchor);
        self.box_corr.iter_mut().for_each(|q| *q = 0.0);
        self.corr.clear();
        self.reduced_keys.clear();
        self.settled = false;
    }

    /// Continues the iteration against `store`, which must be this state's
    /// store or a superset of it.
    pub fn solve(&mut self, store: &ConstraintStore, params: &DecodeParams) -> Result<EstimateField, DecodeError> {
        let n = store.len();
        if self.anchor.len() != n || self.corr.len() > store.constraints().len() {
            self.anchor.resize(n, params.prior);
            self.x.resize(n, params.prior);
            self.box_corr.resize(n, 0.0);
            self.reset();
        }
        let (mut lo, mut hi) = box_bounds(store)?;
        let constraints = store.constraints();
        propagate_bounds(constraints, &mut lo, &mut hi)?;
        let m = constraints.len();
        let known = self.corr.len();
        for c in &constraints[known..] {
            self.corr.push(vec![0.0; c.cells().len()]);
        }
        let adj = SetsByCell::new(n, constraints);
        let reduced: Vec<Reduced> = constraints.iter().map(|c| Reduced::new(c, &lo, &hi)).collect();

        let mut cell_dirty = vec![false; n];
        let mut set_dirty = vec![false; m];
        if self.settled && self.lo.len() == n {
            set_dirty[known..].iter_mut().for_each(|d| *d = true);
            for j in 0..n {
                cell_dirty[j] = lo[j] != self.lo[j] || hi[j] != self.hi[j];
            }
        } else {
            cell_dirty.iter_mut().for_each(|d| *d = true);
            set_dirty.iter_mut().for_each(|d| *d = true);
        }
        // Cells pinned since the last solve leave their sets; the box takes
        // over their corrections so x + Σ corrections stays at the anchor.
        for (s, prev) in self.reduced_keys.iter().enumerate() {
            if reduced[s].key() == *prev {
                continue;
            }
            set_dirty[s] = true;
            for (k, &j) in constraints[s].cells().iter().enumerate() {
                if lo[j] == hi[j] && self.corr[s][k] != 0.0 {
                    self.box_corr[j] += std::mem::take(&mut self.corr[s][k]);
                    cell_dirty[j] = true;
                }
            }
        }
        let mut drift = vec![0.0; n];
        let mut moved = |j: usize, d: f64, from: Option<usize>, cell_dirty: &mut [bool], set_dirty: &mut [bool]| {
            drift[j] += d;
            if drift[j] > DRIFT {
                drift[j] = 0.0;
                if from.is_some() {
                    cell_dirty[j] = true;
                }
                for &s in adj.sets(j) {
                    if Some(s) != from {
                        set_dirty[s] = true;
                    }
                }
            }
        };

        let mut y = Vec::new();
        let mut z = Vec::new();
        let mut violation = f64::INFINITY;
        let mut sweeps = 0;
        while sweeps < params.max_sweeps {
            sweeps += 1;
            let mut step: f64 = 0.0;
            for j in 0..n {
                if !std::mem::take(&mut cell_dirty[j]) {
                    continue;
                }
                let v = self.x[j] + self.box_corr[j];
                let p = v.clamp(lo[j], hi[j]);
                self.box_corr[j] = v - p;
                let d = (p - self.x[j]).abs();
                self.x[j] = p;
                step = step.max(d);
                moved(j, d, None, &mut cell_dirty, &mut set_dirty);
            }
            for (s, (c, p)) in constraints.iter().zip(self.corr.iter_mut()).enumerate() {
                if !std::mem::take(&mut set_dirty[s]) {
                    continue;
                }
                let r = &reduced[s];
                let cells = c.cells();
                y.clear();
                y.extend(r.free.iter().map(|&k| self.x[cells[k]] + p[k]));
                z.clone_from(&y);
                project_shape(r.shape, &mut z);
                for (i, &k) in r.free.iter().enumerate() {
                    let j = cells[k];
                    p[k] = y[i] - z[i];
                    let d = (z[i] - self.x[j]).abs();
                    self.x[j] = z[i];
                    step = step.max(d);
                    moved(j, d, Some(s), &mut cell_dirty, &mut set_dirty);
                }
            }
            if step < params.tol_step {
                violation = max_violation(&self.x, &lo, &hi, constraints);
                if violation <= params.tol_feas {
                    break;
                }
                // stalled short of feasibility: fall back to full sweeps
                cell_dirty.iter_mut().for_each(|d| *d = true);
                set_dirty.iter_mut().for_each(|d| *d = true);
                violation = f64::INFINITY;
            }
        }
        if violation.is_infinite() {
            violation = max_violation(&self.x, &lo, &hi, constraints);
        }
        let values = self.x.iter().zip(lo.iter().zip(&hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
        let estimate = EstimateField { values, sweeps, max_violation: violation };
        self.settled = violation <= params.tol_feas;
        self.lo = lo;
        self.hi = hi;
        self.reduced_keys = reduced.iter().map(Reduced::key).collect();
        if self.settled {
            Ok(estimate)
        } else {
            Err(DecodeError::NotConverged { estimate: Box::new(estimate) })
        }
    }
}

/// Compressed cell-to-set incidence lists.
struct SetsByCell {
    start: Vec<usize>,
    sets: Vec<usize>,
}

impl SetsByCell {
    fn new(n: usize, constraints: &[Constraint]) -> Self {
        let mut start = vec![0; n + 1];
        for c in constraints {
            for &j in c.cells() {
                start[j + 1] += 1;
            }
        }
        for j in 0..n {
            start[j + 1] += start[j];
        }
        let mut fill = start.clone();
        let mut sets = vec![0; start[n]];
        for (s, c) in constraints.iter().enumerate() {
            for &j in c.cells() {
                sets[fill[j]] = s;
                fill[j] += 1;
            }
        }
        Self { start, sets }
    }

    fn sets(&self, j: usize) -> &[usize] {
        &self.sets[self.start[j]..self.start[j + 1]]
    }
}

/// Projection of `prior·1` onto the store's feasible set.
pub fn decode(store: &ConstraintStore, params: &DecodeParams) -> Result<EstimateField, DecodeError> {
    DecoderState::uniform(store.len(), params.prior).solve(store, params)
}

/// Projection of an arbitrary anchor point onto the store's feasible set.
pub fn project(store: &ConstraintStore, anchor: &[f64], params: &DecodeParams) -> Result<EstimateField, DecodeError> {
    DecoderState::new(anchor.to_vec()).solve(store, params)
}

/// Approximate `[min, max]` of `x_cell` over the feasible set, found by
/// projecting anchors pushed far along `∓e_cell`. Slow; meant for checking
/// the interval bound on small stores.
pub fn attainable_range(store: &ConstraintStore, cell: usize, params: &DecodeParams) -> Result<(f64, f64), DecodeError> {
    const PUSH: f64 = 1e4;
    let mut anchor = vec![params.prior; store.len()];
    let tight = DecodeParams { tol_feas: 1e-10, tol_step: 1e-12, max_sweeps: 200_000, ..*params };
    anchor[cell] = params.prior + PUSH;
    let hi = project(store, &anchor, &tight).or_else(keep_iterate)?.values[cell];
    anchor[cell] = params.prior - PUSH;
    let lo = project(store, &anchor, &tight).or_else(keep_iterate)?.values[cell];
    Ok((lo, hi))
}

fn keep_iterate(e: DecodeError) -> Result<EstimateField, DecodeError> {
    match e {
        DecodeError::NotConverged { estimate } => Ok(*estimate),
        other => Err(other),
    }
}

fn box_bounds(store: &ConstraintStore) -> Result<(Vec<f64>, Vec<f64>), DecodeError> {
    let n = store.len();
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for j in 0..n {
        let (l, h) = store.cell_bounds(j);
        if l > h {
            if l - h > 1e-9 {
                return Err(DecodeError::Infeasible { cell: j, lower: l, upper: h });
            }
            let mid = 0.5 * (l + h);
            lo.push(mid);
            hi.push(mid);
        } else {
            lo.push(l);
            hi.push(h);
        }
    }
    Ok((lo, hi))
}

/// Squared radius per cell below which a reduced set is treated as a point.
const POINT_R2: f64 = 1e-12;

/// Box widths below this are collapsed to a single value.
const SNAP: f64 = 1e-12;

/// Tightens the box with bounds the sets imply once pinned cells are folded
/// in: each hyperplane bounds a cell by the others' box limits, a disk bounds
/// each cell by its radius, and a set left with a single point pins its
/// cells. Repeats while new cells get pinned.
fn propagate_bounds(constraints: &[Constraint], lo: &mut [f64], hi: &mut [f64]) -> Result<(), DecodeError> {
    for _ in 0..10 {
        let mut pinned = false;
        for c in constraints {
            let r = Reduced::new(c, lo, hi);
            if r.free.is_empty() {
                continue;
            }
            let cells = c.cells();
            let nf = r.free.len() as f64;
            let (mean, radius2) = match r.shape {
                Shape::Plane(m) => (m, f64::INFINITY),
                Shape::Disk(m, b) => (m, disk_radius2(r.free.len(), m, b)),
                Shape::Ball(_) => continue,
            };
            let total = mean * nf;
            let sum_lo: f64 = r.free.iter().map(|&k| lo[cells[k]]).sum();
            let sum_hi: f64 = r.free.iter().map(|&k| hi[cells[k]]).sum();
            let point = radius2 <= POINT_R2 * nf;
            let reach = (radius2 * (nf - 1.0) / nf).sqrt();
            for &k in &r.free {
                let j = cells[k];
                let (mut l, mut h) = (lo[j], hi[j]);
                l = l.max(total - (sum_hi - hi[j])).max(mean - reach);
                h = h.min(total - (sum_lo - lo[j])).min(mean + reach);
                if point {
                    (l, h) = (mean.max(l), mean.min(h));
                }
                if l > h + 1e-9 {
                    return Err(DecodeError::Infeasible { cell: j, lower: l, upper: h });
                }
                if h - l <= SNAP {
                    let v = if point { mean.clamp(lo[j], hi[j]) } else { (0.5 * (l + h)).clamp(lo[j], hi[j]) };
                    lo[j] = v;
                    hi[j] = v;
                    pinned = true;
                } else {
                    lo[j] = l;
                    hi[j] = h;
                }
            }
        }
        if !pinned {
            break;
        }
    }
    Ok(())
}

/// Closed-form convex shapes over a cell subvector.
#[derive(Debug, Clone, Copy)]
enum Shape {
    /// `{mean(y) = m}`
    Plane(f64),
    /// `{Σy² ≤ b}`
    Ball(f64),
    /// `{mean(y) = m, Σy² ≤ b}`
    Disk(f64, f64),
}

impl Shape {
    fn of(c: &Constraint) -> Self {
        match c {
            Constraint::Equality { mean, .. } => Shape::Plane(*mean),
            Constraint::Ball { bound, .. } => Shape::Ball(*bound),
            Constraint::GroupDisk { mean, bound, .. } => Shape::Disk(*mean, *bound),
        }
    }
}

/// A set restricted to the cells the box leaves free, with the pinned
/// cells' values folded into its targets. Within the box it is the same set.
struct Reduced {
    /// Positions into the set's cell list.
    free: Vec<usize>,
    shape: Shape,
}

impl Reduced {
    fn new(c: &Constraint, lo: &[f64], hi: &[f64]) -> Self {
        let cells = c.cells();
        let free: Vec<usize> = (0..cells.len()).filter(|&k| lo[cells[k]] < hi[cells[k]]).collect();
        let (sum, sq) = cells
            .iter()
            .filter(|&&j| lo[j] == hi[j])
            .fold((0.0, 0.0), |(s, q), &j| (s + lo[j], q + lo[j] * lo[j]));
        let n = cells.len() as f64;
        let nf = free.len().max(1) as f64;
        let shape = match Shape::of(c) {
            Shape::Plane(m) => Shape::Plane((n * m - sum) / nf),
            Shape::Ball(b) => Shape::Ball((b - sq).max(0.0)),
            Shape::Disk(m, b) => {
                let (m, b) = ((n * m - sum) / nf, (b - sq).max(0.0));
                let bounds = free.iter().map(|&k| (lo[cells[k]], hi[cells[k]]));
                if b + 1e-10 >= max_square_sum(bounds, m * nf) {
                    Shape::Plane(m)
                } else {
                    Shape::Disk(m, b)
                }
            }
        };
        Self { free, shape }
    }

    /// Changes in either field invalidate the set's stored correction.
    fn key(&self) -> (usize, bool) {
        (self.free.len(), matches!(self.shape, Shape::Plane(_)))
    }
}

/// Upper bound on `Σx²` over `{l ≤ x ≤ h, Σx = total}` from the chord
/// `x² ≤ (l+h)x − lh`, maximized as a fractional knapsack. Infinite when the
/// plane misses the box.
fn max_square_sum(bounds: impl Iterator<Item = (f64, f64)>, total: f64) -> f64 {
    let mut b: Vec<(f64, f64)> = bounds.collect();
    b.sort_by(|p, q| (q.0 + q.1).total_cmp(&(p.0 + p.1)));
    let mut rest = total - b.iter().map(|(l, _)| l).sum::<f64>();
    let mut value: f64 = b.iter().map(|(l, h)| (l + h) * l - l * h).sum();
    for (l, h) in b {
        let take = (h - l).min(rest).max(0.0);
        value += (l + h) * take;
        rest -= take;
    }
    if rest > 1e-9 {
        f64::INFINITY
    } else {
        value
    }
}

#[cfg(test)]
fn project_onto(c: &Constraint, y: &mut [f64]) {
    project_shape(Shape::of(c), y)
}

fn project_shape(shape: Shape, y: &mut [f64]) {
    match shape {
        Shape::Plane(mean) => shift_to_mean(y, mean),
        Shape::Ball(bound) => {
            let norm2: f64 = y.iter().map(|v| v * v).sum();
            if norm2 > bound {
                let s = (bound / norm2).sqrt();
                y.iter_mut().for_each(|v| *v *= s);
            }
        }
        Shape::Disk(mean, bound) => {
            shift_to_mean(y, mean);
            let r2 = disk_radius2(y.len(), mean, bound);
            let d2: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
            if d2 > r2 {
                let s = if d2 > 0.0 { (r2 / d2).sqrt() } else { 0.0 };
                y.iter_mut().for_each(|v| *v = mean + (*v - mean) * s);
            }
        }
    }
}

fn shift_to_mean(y: &mut [f64], mean: f64) {
    let shift = mean - y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v += shift);
}

// Squared radius of {Σx = n·mean} ∩ {Σx² ≤ bound} about its centre mean·1.
fn disk_radius2(n: usize, mean: f64, bound: f64) -> f64 {
    (bound - n as f64 * mean * mean).max(0.0)
}

/// Largest distance from `x` to the box or any constraint set.
fn max_violation(x: &[f64], lo: &[f64], hi: &[f64], constraints: &[Constraint]) -> f64 {
    let mut worst: f64 = 0.0;
    for ((v, l), h) in x.iter().zip(lo).zip(hi) {
        worst = worst.max(l - v).max(v - h);
    }
    for c in constraints {
        worst = worst.max(distance(c, x));
    }
    worst
}

pub(crate) fn distance(c: &Constraint, x: &[f64]) -> f64 {
    let vals = c.cells().iter().map(|&j| x[j]);
    let n = c.cells().len() as f64;
    match c {
        Constraint::Equality { mean, .. } => (vals.sum::<f64>() - n * mean).abs() / n.sqrt(),
        Constraint::Ball { bound, .. } => (vals.map(|v| v * v).sum::<f64>().sqrt() - bound.sqrt()).max(0.0),
        Constraint::GroupDisk { mean, bound, .. } => {
            let v: Vec<f64> = vals.collect();
            let sum: f64 = v.iter().sum();
            let off = (sum - n * mean) / n;
            let perp = off.abs() * n.sqrt();
            let d_in = v.iter().map(|x| (x - off - mean) * (x - off - mean)).sum::<f64>().sqrt();
            let r = disk_radius2(v.len(), *mean, *bound).sqrt();
            (perp * perp + (d_in - r).max(0.0).powi(2)).sqrt()
        }
    }
}
