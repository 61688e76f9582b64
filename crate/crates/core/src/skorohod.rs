//! Piecewise-constant càdlàg paths, the W/U/R processes built from orbits,
//! and J1/M2 distances with M1 bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inducing::ReturnSequence;

/// Breakpoint limits for the metric routines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub j1: usize,
    pub m2: usize,
    pub m1: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            j1: 1000,
            m2: 1_000_000,
            m1: 1000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("breakpoints must start at 0, increase strictly and stay in [0, {horizon}]")]
    Breakpoints { horizon: f64 },
    #[error("{times} breakpoints but {values} values")]
    Length { times: usize, values: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("need {need} entries, have {have}")]
    Insufficient { need: usize, have: usize },
    #[error("path has {have} breakpoints, budget is {budget}")]
    Budget { have: usize, budget: usize },
    #[error("paths live on [0, {0}] and [0, {1}]")]
    Horizon(f64, f64),
    #[error("return structure inconsistent: {0}")]
    Returns(String),
}

/// Right-continuous step path on `[0, horizon]`: `values[i]` holds on
/// `[times[i], times[i+1])`, the last value up to and including the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CadlagPath {
    times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl CadlagPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        Self::with_horizon(times, values, 1.0)
    }

    pub fn with_horizon(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self, PathError> {
        if times.len() != values.len() || times.is_empty() {
            return Err(PathError::Length {
                times: times.len(),
                values: values.len(),
            });
        }
        let ok = times[0] == 0.0
            && times.windows(2).all(|w| w[0] < w[1])
            && *times.last().unwrap() <= horizon;
        if !ok {
            return Err(PathError::Breakpoints { horizon });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PathError::NonFinite(i));
        }
        Ok(Self { times, values, horizon })
    }

    pub fn constant(x: f64) -> Self {
        Self {
            times: vec![0.0],
            values: vec![x],
            horizon: 1.0,
        }
    }

    /// `a` before `t`, `b` from `t` on.
    pub fn step(t: f64, a: f64, b: f64) -> Self {
        Self::new(vec![0.0, t], vec![a, b]).expect("valid step")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn piece(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.piece(t)]
    }

    /// `u(t-)`; equals `u(0)` at 0.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        self.values[k.saturating_sub(1)]
    }

    /// `(t, u(t) - u(t-))` at every breakpoint after 0, zero jumps included.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..self.len()).map(move |i| (self.times[i], self.values[i] - self.values[i - 1]))
    }

    /// Drops breakpoints that carry no jump.
    pub fn simplify(&self) -> Self {
        let mut times = vec![self.times[0]];
        let mut values = vec![self.values[0]];
        for i in 1..self.len() {
            if self.values[i] != *values.last().unwrap() {
                times.push(self.times[i]);
                values.push(self.values[i]);
            }
        }
        Self {
            times,
            values,
            horizon: self.horizon,
        }
    }

    pub fn sup_distance(&self, other: &CadlagPath) -> f64 {
        let mut ts: Vec<f64> = self.times.iter().chain(&other.times).copied().collect();
        ts.sort_by(f64::total_cmp);
        ts.iter()
            .map(|&t| (self.eval(t) - other.eval(t)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }

    pub fn add(&self, other: &CadlagPath) -> Result<CadlagPath, PathError> {
        same_horizon(self, other)?;
        let mut ts: Vec<f64> = self.times.iter().chain(&other.times).copied().collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let vs = ts.iter().map(|&t| self.eval(t) + other.eval(t)).collect();
        CadlagPath::with_horizon(ts, vs, self.horizon)
    }
}

fn same_horizon(u: &CadlagPath, v: &CadlagPath) -> Result<(), PathError> {
    if u.horizon != v.horizon {
        return Err(PathError::Horizon(u.horizon, v.horizon));
    }
    Ok(())
}

fn check_budget(u: &CadlagPath, budget: usize) -> Result<(), PathError> {
    if u.len() > budget {
        return Err(PathError::Budget {
            have: u.len(),
            budget,
        });
    }
    Ok(())
}

/// Axis-parallel segment of a completed graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub x0: f64,
    pub t1: f64,
    pub x1: f64,
}

impl Segment {
    pub fn is_vertical(&self) -> bool {
        self.t0 == self.t1
    }

    /// Closest point in the max metric.
    pub fn nearest(&self, t: f64, x: f64) -> (f64, f64) {
        let ct = t.clamp(self.t0.min(self.t1), self.t0.max(self.t1));
        let cx = x.clamp(self.x0.min(self.x1), self.x0.max(self.x1));
        (ct, cx)
    }

    pub fn distance(&self, t: f64, x: f64) -> f64 {
        let (ct, cx) = self.nearest(t, x);
        (t - ct).abs().max((x - cx).abs())
    }
}

/// The graph of a path with every jump filled by a vertical segment,
/// listed in traversal order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletedGraph {
    pub segments: Vec<Segment>,
}

impl CompletedGraph {
    pub fn of(u: &CadlagPath) -> Self {
        let n = u.len();
        let mut segments = Vec::with_capacity(2 * n);
        for i in 0..n {
            if i > 0 && u.values[i] != u.values[i - 1] {
                segments.push(Segment {
                    t0: u.times[i],
                    x0: u.values[i - 1],
                    t1: u.times[i],
                    x1: u.values[i],
                });
            }
            let end = if i + 1 < n { u.times[i + 1] } else { u.horizon };
            segments.push(Segment {
                t0: u.times[i],
                x0: u.values[i],
                t1: end,
                x1: u.values[i],
            });
        }
        Self { segments }
    }

    pub fn contains(&self, t: f64, x: f64, tol: f64) -> bool {
        self.segments.iter().any(|s| s.distance(t, x) <= tol)
    }

    /// Polyline vertices in traversal order.
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        for s in &self.segments {
            if out.last() != Some(&(s.t0, s.x0)) {
                out.push((s.t0, s.x0));
            }
            out.push((s.t1, s.x1));
        }
        out.dedup();
        out
    }
}

/// `W_n` from partial sums `v_0, ..., v_n`: breakpoints `j/n`, values
/// `n^(-1/alpha) v_j`.
pub fn path_w_n(partial_sums: &[f64], n: usize, alpha: f64) -> Result<CadlagPath, PathError> {
    if partial_sums.len() < n + 1 {
        return Err(PathError::Insufficient {
            need: n + 1,
            have: partial_sums.len(),
        });
    }
    let scale = (n as f64).powf(-1.0 / alpha);
    let times = (0..=n).map(|j| j as f64 / n as f64).collect();
    let values = partial_sums[..=n].iter().map(|v| scale * v).collect();
    CadlagPath::new(times, values)
}

/// Running sums `v_0 = 0, v_1, ..., v_len` of per-collision values.
pub fn partial_sums(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

/// `U_n` and `R_n` on the grid `j/n`. `values[j] = v(T^j x)` for `j < n`,
/// `returns` the return indices `phi_1 < phi_2 < ...` of the orbit of
/// `x in X`. `U_n` sums whole excursions, `R_n` restarts at each return.
pub fn decompose_u_r(
    values: &[f64],
    returns: &[u64],
    n: usize,
    alpha: f64,
) -> Result<(CadlagPath, CadlagPath), PathError> {
    if values.len() < n {
        return Err(PathError::Insufficient {
            need: n,
            have: values.len(),
        });
    }
    if returns.windows(2).any(|w| w[0] >= w[1]) || returns.first() == Some(&0) {
        return Err(PathError::Returns("return indices must increase from 1".into()));
    }
    let scale = (n as f64).powf(-1.0 / alpha);
    let mut u_vals = Vec::with_capacity(n + 1);
    let mut r_vals = Vec::with_capacity(n + 1);
    let mut completed = 0.0;
    let mut current = 0.0;
    let mut next_return = returns.iter().peekable();
    for j in 0..=n {
        while let Some(&&r) = next_return.peek() {
            if r as usize == j {
                completed += current;
                current = 0.0;
                next_return.next();
            } else {
                break;
            }
        }
        u_vals.push(scale * completed);
        r_vals.push(scale * current);
        if j < n {
            current += values[j];
        }
    }
    let times: Vec<f64> = (0..=n).map(|j| j as f64 / n as f64).collect();
    Ok((
        CadlagPath::new(times.clone(), u_vals)?,
        CadlagPath::new(times, r_vals)?,
    ))
}

/// `W~_n(t) = n^(-1/alpha) sum_{j < [nt]} v_phi(f^j x)`.
pub fn induced_path(excursion_sums: &[f64], n: usize, alpha: f64) -> Result<CadlagPath, PathError> {
    if excursion_sums.len() < n {
        return Err(PathError::Insufficient {
            need: n,
            have: excursion_sums.len(),
        });
    }
    let scale = (n as f64).powf(-1.0 / alpha);
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    for s in &excursion_sums[..n] {
        acc += s;
        values.push(scale * acc);
    }
    CadlagPath::new((0..=n).map(|j| j as f64 / n as f64).collect(), values)
}

/// Largest `|U_n(t) - W~_n(N_[nt] / n)|` over the grid `j/n`, `j <= n`.
pub fn composition_gap(
    u_n: &CadlagPath,
    w_tilde: &CadlagPath,
    counting: &ReturnSequence,
    n: usize,
) -> Result<f64, PathError> {
    let mut worst: f64 = 0.0;
    for j in 0..=n {
        let t = j as f64 / n as f64;
        let k = counting
            .counting(j as u64)
            .map_err(|e| PathError::Returns(e.to_string()))?;
        let tau = k as f64 / n as f64;
        worst = worst.max((u_n.eval(t) - w_tilde.eval(tau)).abs());
    }
    Ok(worst)
}

/// `(max jump, some jump > b, number of jumps > b)` over upward jumps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSummary {
    pub max_jump: f64,
    pub exceeds: bool,
    pub count: usize,
}

pub fn jump_functionals(u: &CadlagPath, b: f64) -> JumpSummary {
    assert!(b > 0.0, "threshold must be positive");
    let mut max_jump: f64 = 0.0;
    let mut count = 0;
    for (_, d) in u.jumps() {
        max_jump = max_jump.max(d);
        if d > b {
            count += 1;
        }
    }
    JumpSummary {
        max_jump,
        exceeds: count > 0,
        count,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowedIncrement {
    pub sup: f64,
    pub exceeds: bool,
    /// `(t', t)` attaining `sup`.
    pub witness: Option<(f64, f64)>,
}

/// `sup { u(t) - u(t') : 0 <= t' < t < (t' + delta) ^ horizon }`.
pub fn windowed_increment_sup(u: &CadlagPath, delta: f64, b: f64) -> WindowedIncrement {
    assert!(delta > 0.0, "window must be positive");
    let n = u.len();
    let end = |i: usize| if i + 1 < n { u.times[i + 1] } else { u.horizon };
    let mut best: f64 = 0.0;
    let mut witness = None;
    let mut deque: std::collections::VecDeque<usize> = Default::default();
    let mut lo = 0;
    for j in 1..n {
        let tj = u.times[j];
        if tj >= u.horizon {
            break;
        }
        // admit i = j - 1
        let i_new = j - 1;
        while let Some(&b) = deque.back() {
            if u.values[b] >= u.values[i_new] {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(i_new);
        while lo < j && tj - end(lo) >= delta {
            lo += 1;
        }
        while let Some(&f) = deque.front() {
            if f < lo {
                deque.pop_front();
            } else {
                break;
            }
        }
        if let Some(&i) = deque.front() {
            let inc = u.values[j] - u.values[i];
            if inc > best {
                best = inc;
                let a = (tj - delta).max(u.times[i]);
                witness = Some((0.5 * (a + end(i)), tj));
            }
        }
    }
    WindowedIncrement {
        sup: best,
        exceeds: best > b,
        witness,
    }
}

/// Coarsens `u` by merging runs whose values fit in a band of width
/// `2 tol`; each run takes its band midpoint. Returns the path and the
/// certified sup-norm error.
pub fn thin(u: &CadlagPath, tol: f64) -> (CadlagPath, f64) {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut err: f64 = 0.0;
    let mut i = 0;
    let n = u.len();
    while i < n {
        let (mut lo, mut hi) = (u.values[i], u.values[i]);
        let mut j = i + 1;
        while j < n {
            let (l2, h2) = (lo.min(u.values[j]), hi.max(u.values[j]));
            if h2 - l2 > 2.0 * tol {
                break;
            }
            lo = l2;
            hi = h2;
            j += 1;
        }
        times.push(u.times[i]);
        let mid = 0.5 * (lo + hi);
        values.push(mid);
        err = err.max(hi - mid).max(mid - lo);
        i = j;
    }
    (
        CadlagPath {
            times,
            values,
            horizon: u.horizon,
        },
        err,
    )
}

/// Smallest `tol` (by doubling from `start`) whose thinning fits `budget`.
pub fn thin_to_budget(u: &CadlagPath, budget: usize, start: f64) -> (CadlagPath, f64) {
    let mut tol = start;
    loop {
        let (p, e) = thin(u, tol);
        if p.len() <= budget {
            return (p, e);
        }
        tol *= 2.0;
    }
}

// ---------- J1 ----------

/// J1 distance: `inf_lambda max(|u o lambda - v|_inf, |lambda - id|_inf)`,
/// exact for step paths. Decides each candidate level by a monotone
/// free-space sweep and binary-searches the sorted candidates.
pub fn d_j1(u: &CadlagPath, v: &CadlagPath) -> Result<f64, PathError> {
    d_j1_with_budget(u, v, Budgets::default().j1)
}

pub fn d_j1_with_budget(u: &CadlagPath, v: &CadlagPath, budget: usize) -> Result<f64, PathError> {
    same_horizon(u, v)?;
    let u = u.simplify();
    let v = v.simplify();
    check_budget(&u, budget)?;
    check_budget(&v, budget)?;
    let mut cand: Vec<f64> = Vec::with_capacity(2 * u.len() * v.len() + 1);
    cand.push(0.0);
    for (a, x) in u.times.iter().zip(&u.values) {
        for (b, y) in v.times.iter().zip(&v.values) {
            cand.push((x - y).abs());
            cand.push((a - b).abs());
        }
    }
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    let (mut lo, mut hi) = (0usize, cand.len() - 1);
    if !j1_feasible(&u, &v, cand[hi]) {
        // sup-norm at identity is an upper bound and is a candidate
        unreachable!("largest candidate must be feasible");
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if j1_feasible(&u, &v, cand[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(cand[lo])
}

const EMPTY: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);

/// Is there a monotone curve from (0,0) to (H,H) in the closed free space?
/// Cells are `[a_i, a_{i+1}] x [b_j, b_{j+1}]` in `(s, t)` with `s = lambda(t)`.
fn j1_feasible(u: &CadlagPath, v: &CadlagPath, eps: f64) -> bool {
    let h = u.horizon;
    let a = |i: usize| if i < u.len() { u.times[i] } else { h };
    let b = |j: usize| if j < v.len() { v.times[j] } else { h };
    let p = u.len();
    let q = v.len();
    // right-edge reachable t-intervals and top-right corners of column i-1
    let mut right_prev = vec![EMPTY; q];
    let mut corner_prev = vec![false; q];
    let mut right_cur = vec![EMPTY; q];
    let mut corner_cur = vec![false; q];
    for i in 0..p {
        let (a0, a1) = (a(i), a(i + 1));
        let mut top_from_below = EMPTY;
        for j in 0..q {
            let (b0, b1) = (b(j), b(j + 1));
            right_cur[j] = EMPTY;
            corner_cur[j] = false;
            let free = (u.values[i] - v.values[j]).abs() <= eps
                && a0 - b1 <= eps
                && b0 - a1 <= eps;
            let mut smin = f64::INFINITY;
            let mut tmin = f64::INFINITY;
            if free {
                if i == 0 && j == 0 {
                    smin = 0.0;
                    tmin = 0.0;
                }
                if i > 0 && right_prev[j].0 <= right_prev[j].1 {
                    smin = smin.min(a0);
                    tmin = tmin.min(right_prev[j].0);
                }
                if j > 0 && top_from_below.0 <= top_from_below.1 {
                    smin = smin.min(top_from_below.0);
                    tmin = tmin.min(b0);
                }
                if i > 0 && j > 0 && corner_prev[j - 1] {
                    smin = smin.min(a0);
                    tmin = tmin.min(b0);
                }
            }
            if smin.is_finite() {
                let top = (smin.max(a0).max(b1 - eps), a1.min(b1 + eps));
                let right = (tmin.max(b0).max(a1 - eps), b1.min(a1 + eps));
                corner_cur[j] = (a1 - b1).abs() <= eps && smin <= a1;
                top_from_below = if top.0 <= top.1 { top } else { EMPTY };
                right_cur[j] = if right.0 <= right.1 { right } else { EMPTY };
                if i + 1 == p && j + 1 == q {
                    return corner_cur[j];
                }
            } else {
                top_from_below = EMPTY;
            }
        }
        std::mem::swap(&mut right_prev, &mut right_cur);
        std::mem::swap(&mut corner_prev, &mut corner_cur);
    }
    false
}

// ---------- M2 ----------

/// Range min/max over path pieces.
struct SparseMinMax {
    min: Vec<Vec<f64>>,
    max: Vec<Vec<f64>>,
}

impl SparseMinMax {
    fn new(values: &[f64]) -> Self {
        let mut min = vec![values.to_vec()];
        let mut max = vec![values.to_vec()];
        let mut w = 1;
        while 2 * w <= values.len() {
            let pm = min.last().unwrap();
            let px = max.last().unwrap();
            let len = values.len() + 1 - 2 * w;
            min.push((0..len).map(|i| pm[i].min(pm[i + w])).collect());
            max.push((0..len).map(|i| px[i].max(px[i + w])).collect());
            w *= 2;
        }
        Self { min, max }
    }

    /// Inclusive range `[l, r]`.
    fn query(&self, l: usize, r: usize) -> (f64, f64) {
        let k = (usize::BITS - 1 - (r - l + 1).leading_zeros()) as usize;
        let w = 1 << k;
        (
            self.min[k][l].min(self.min[k][r + 1 - w]),
            self.max[k][l].max(self.max[k][r + 1 - w]),
        )
    }
}

struct GraphWindow<'a> {
    path: &'a CadlagPath,
    table: SparseMinMax,
}

impl<'a> GraphWindow<'a> {
    fn new(path: &'a CadlagPath) -> Self {
        Self {
            path,
            table: SparseMinMax::new(&path.values),
        }
    }
}

/// Counts of breakpoints `< x` and `<= x` for nondecreasing queries.
struct Cursor<'a> {
    times: &'a [f64],
    lt: usize,
    le: usize,
}

impl<'a> Cursor<'a> {
    fn new(times: &'a [f64]) -> Self {
        Self { times, lt: 0, le: 0 }
    }

    fn count_lt(&mut self, x: f64) -> usize {
        while self.lt < self.times.len() && self.times[self.lt] < x {
            self.lt += 1;
        }
        self.lt
    }

    fn count_le(&mut self, x: f64) -> usize {
        while self.le < self.times.len() && self.times[self.le] <= x {
            self.le += 1;
        }
        self.le
    }
}

fn m2_one_sided(gu: &GraphWindow<'_>, gv: &GraphWindow<'_>, r: f64, tol: f64) -> bool {
    let u = gu.path;
    let v = gv.path;
    let h = u.horizon;
    let mut events: Vec<f64> = Vec::with_capacity(u.len() + 2 * v.len() + 2);
    events.extend_from_slice(&u.times);
    for &t in &v.times {
        for e in [t - r, t + r] {
            if (0.0..=h).contains(&e) {
                events.push(e);
            }
        }
    }
    events.push(h);
    events.sort_by(f64::total_cmp);
    events.dedup();
    // queries arrive in nondecreasing order, so the lookups are sweeps
    let mut own = Cursor::new(&u.times);
    let mut lo = Cursor::new(&v.times);
    let mut hi = Cursor::new(&v.times);
    let mut check = |t: f64| {
        let a = u.values[own.count_le(t).saturating_sub(1)];
        let b = u.values[own.count_lt(t).saturating_sub(1)];
        let (flo, fhi) = (a.min(b), a.max(b));
        let l = lo.count_lt((t - r).max(0.0)).saturating_sub(1);
        let ri = hi.count_le((t + r).min(h)).saturating_sub(1);
        let (mlo, mhi) = gv.table.query(l.min(ri), ri);
        flo >= mlo - r - tol && fhi <= mhi + r + tol
    };
    for w in events.windows(2) {
        if !check(w[0]) || !check(0.5 * (w[0] + w[1])) {
            return false;
        }
    }
    check(*events.last().unwrap())
}

fn m2_feasible(gu: &GraphWindow<'_>, gv: &GraphWindow<'_>, r: f64, tol: f64) -> bool {
    m2_one_sided(gu, gv, r, tol) && m2_one_sided(gv, gu, r, tol)
}

/// M2 distance: Hausdorff distance between completed graphs in the max
/// metric on `(t, x)`, by bisection to relative precision `1e-14`.
pub fn d_m2(u: &CadlagPath, v: &CadlagPath) -> Result<f64, PathError> {
    d_m2_with_budget(u, v, Budgets::default().m2)
}

pub fn d_m2_with_budget(u: &CadlagPath, v: &CadlagPath, budget: usize) -> Result<f64, PathError> {
    same_horizon(u, v)?;
    check_budget(u, budget)?;
    check_budget(v, budget)?;
    let u = u.simplify();
    let v = v.simplify();
    let gu = GraphWindow::new(&u);
    let gv = GraphWindow::new(&v);
    let scale = u
        .values
        .iter()
        .chain(&v.values)
        .fold(u.horizon, |m, x| m.max(x.abs()));
    let tol = 1e-15 * scale;
    if m2_feasible(&gu, &gv, 0.0, tol) {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = u.sup_distance(&v).max(tol);
    while !m2_feasible(&gu, &gv, hi, tol) {
        hi *= 2.0;
    }
    while hi - lo > 1e-14 * scale {
        let mid = 0.5 * (lo + hi);
        if m2_feasible(&gu, &gv, mid, tol) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

// ---------- M1 ----------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M1Bounds {
    pub lower: f64,
    pub upper: f64,
}

/// Polyline of the completed graph with the projections of the other
/// graph's vertices inserted.
fn refined_vertices(own: &CompletedGraph, other: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut inserts: Vec<Vec<(f64, f64)>> = vec![Vec::new(); own.segments.len()];
    // segments in traversal order have nondecreasing t; restrict the search
    // to those whose time span is close enough to beat the fiber distance
    let starts: Vec<f64> = own.segments.iter().map(|s| s.t0).collect();
    for &(t, x) in other {
        let k0 = starts.partition_point(|&s| s <= t).saturating_sub(1);
        let mut best = (own.segments[k0].distance(t, x), k0);
        let mut k = k0;
        while k > 0 && t - own.segments[k - 1].t1 <= best.0 {
            k -= 1;
            let d = own.segments[k].distance(t, x);
            if d < best.0 {
                best = (d, k);
            }
        }
        let mut k = k0 + 1;
        while k < own.segments.len() && own.segments[k].t0 - t <= best.0 {
            let d = own.segments[k].distance(t, x);
            if d < best.0 {
                best = (d, k);
            }
            k += 1;
        }
        inserts[best.1].push(own.segments[best.1].nearest(t, x));
    }
    let mut out = Vec::new();
    for (seg, mut extra) in own.segments.iter().zip(inserts) {
        out.push((seg.t0, seg.x0));
        // order along the segment direction
        if seg.is_vertical() {
            let up = seg.x1 >= seg.x0;
            extra.sort_by(|p, q| if up { p.1.total_cmp(&q.1) } else { q.1.total_cmp(&p.1) });
        } else {
            extra.sort_by(|p, q| p.0.total_cmp(&q.0));
        }
        out.extend(extra);
        out.push((seg.t1, seg.x1));
    }
    out.dedup();
    out
}

fn linf(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - q.0).abs().max((p.1 - q.1).abs())
}

/// Discrete Fréchet distance in the max metric.
fn discrete_frechet(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, &pa) in a.iter().enumerate() {
        for j in 0..m {
            let d = linf(pa, b[j]);
            let reach = if i == 0 && j == 0 {
                0.0
            } else {
                let mut r = f64::INFINITY;
                if i > 0 {
                    r = r.min(prev[j]);
                }
                if j > 0 {
                    r = r.min(cur[j - 1]);
                }
                if i > 0 && j > 0 {
                    r = r.min(prev[j - 1]);
                }
                r
            };
            cur[j] = d.max(reach);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// Bounds on the M1 distance: `d_M2` below; above, the smaller of two
/// explicit parametric couplings: the discrete Fréchet matching of the
/// cross-refined completed-graph polylines, and the J1-optimal time change
/// (jumps traversed together, unmatched jumps of one path against a pause
/// of the other), which gives `d_M1 <= d_J1`.
pub fn d_m1_bounds(u: &CadlagPath, v: &CadlagPath) -> Result<M1Bounds, PathError> {
    d_m1_bounds_with_budget(u, v, Budgets::default().m1)
}

pub fn d_m1_bounds_with_budget(u: &CadlagPath, v: &CadlagPath, budget: usize) -> Result<M1Bounds, PathError> {
    same_horizon(u, v)?;
    let u = u.simplify();
    let v = v.simplify();
    check_budget(&u, budget)?;
    check_budget(&v, budget)?;
    let lower = d_m2(&u, &v)?;
    let gu = CompletedGraph::of(&u);
    let gv = CompletedGraph::of(&v);
    let vu = gu.vertices();
    let vv = gv.vertices();
    let ru = refined_vertices(&gu, &vv);
    let rv = refined_vertices(&gv, &vu);
    let upper = discrete_frechet(&ru, &rv).min(d_j1_with_budget(&u, &v, budget)?);
    Ok(M1Bounds { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn staircase(n: usize, mid: f64) -> CadlagPath {
        let w = 1.0 / n as f64;
        CadlagPath::new(vec![0.0, 0.5, 0.5 + w], vec![0.0, mid, 1.0]).unwrap()
    }

    #[test]
    fn eval_and_left_limits() {
        let p = CadlagPath::new(vec![0.0, 0.3, 0.7], vec![1.0, 2.0, -1.0]).unwrap();
        assert_eq!(p.eval(0.3), 2.0);
        assert_eq!(p.left_limit(0.3), 1.0);
        assert_eq!(p.eval(1.0), -1.0);
        assert_eq!(p.left_limit(0.5), 2.0);
        assert!(CadlagPath::new(vec![0.1], vec![1.0]).is_err());
        assert!(CadlagPath::new(vec![0.0, 0.5, 0.5], vec![1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn completed_graph_contains_both_sides_of_jumps() {
        let p = CadlagPath::new(vec![0.0, 0.3, 0.7], vec![1.0, 2.0, -1.0]).unwrap();
        let g = CompletedGraph::of(&p);
        for &t in p.times() {
            assert!(g.contains(t, p.eval(t), 0.0));
            assert!(g.contains(t, p.left_limit(t), 0.0));
        }
        assert!(g.contains(0.7, 0.5, 0.0));
        assert!(!g.contains(0.5, 0.5, 1e-3));
    }

    #[test]
    fn w_n_from_sums() {
        let sums = partial_sums(&[1.0, -2.0, 0.5, 4.0]);
        let w = path_w_n(&sums, 4, 1.5).unwrap();
        let s = 4f64.powf(-1.0 / 1.5);
        assert!((w.eval(1.0) - s * 3.5).abs() < 1e-15);
        assert!((w.eval(0.5) - w.eval(0.25) - s * -2.0).abs() < 1e-15);
        assert!(path_w_n(&sums, 5, 1.5).is_err());
        let zero = path_w_n(&[0.0; 5], 4, 1.5).unwrap();
        assert_eq!(zero.simplify(), CadlagPath::constant(0.0));
    }

    #[test]
    fn all_unit_returns_give_zero_remainder() {
        let vals = [0.3, -1.0, 2.0, 0.25];
        let (u, r) = decompose_u_r(&vals, &[1, 2, 3, 4], 4, 1.5).unwrap();
        assert!(r.values().iter().all(|&x| x == 0.0));
        let w = path_w_n(&partial_sums(&vals), 4, 1.5).unwrap();
        assert!(u.sup_distance(&w) < 1e-15);
    }

    #[test]
    fn one_jump_induced_path() {
        let mut s = vec![0.0; 10];
        s[4] = 3.0;
        let w = induced_path(&s, 10, 1.5).unwrap().simplify();
        let jumps: Vec<_> = w.jumps().collect();
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0].1 - 10f64.powf(-1.0 / 1.5) * 3.0).abs() < 1e-15);
        assert_eq!(jumps[0].0, 0.5);
    }

    #[test]
    fn jump_functional_example() {
        let p = CadlagPath::new(vec![0.0, 0.2, 0.6], vec![0.0, 0.6, 2.0]).unwrap();
        let j = jump_functionals(&p, 1.0);
        assert_eq!(j.count, 1);
        assert!(j.exceeds);
        assert!((j.max_jump - 1.4).abs() < 1e-15);
        assert_eq!(jump_functionals(&CadlagPath::constant(1.0), 0.5).count, 0);
    }

    #[test]
    fn windowed_examples() {
        let down = CadlagPath::new(vec![0.0, 0.2, 0.6], vec![3.0, 2.0, 1.0]).unwrap();
        assert!(!windowed_increment_sup(&down, 1.0, 1e-9).exceeds);
        let up = CadlagPath::step(0.4, 0.0, 2.0);
        for delta in [1e-6, 0.1, 1.0] {
            let w = windowed_increment_sup(&up, delta, 1.0);
            assert!(w.exceeds);
            let (tp, t) = w.witness.unwrap();
            assert!(tp < 0.4 && 0.4 <= t && t < tp + delta);
            assert!(up.eval(t) - up.eval(tp) == 2.0);
        }
    }

    #[test]
    fn windowed_matches_grid_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let m = 12;
            let mut times: Vec<f64> = (0..m).map(|_| (rng.random::<f64>() * 1000.0).floor() / 1000.0).collect();
            times.push(0.0);
            times.sort_by(f64::total_cmp);
            times.dedup();
            let values: Vec<f64> = times.iter().map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let p = CadlagPath::new(times, values).unwrap();
            let fast = windowed_increment_sup(&p, 1.0, 0.0).sup;
            let grid: Vec<f64> = (0..1000).map(|k| p.eval(k as f64 / 1000.0)).collect();
            let mut brute: f64 = 0.0;
            for i in 0..1000 {
                for j in i + 1..1000 {
                    brute = brute.max(grid[j] - grid[i]);
                }
            }
            assert!((fast - brute).abs() < 1e-12, "{fast} {brute}");
        }
    }

    #[test]
    fn thin_certifies_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 500;
        let mut acc = 0.0;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                acc += rng.random::<f64>() - 0.5;
                acc
            })
            .collect();
        let p = CadlagPath::new((0..n).map(|k| k as f64 / n as f64).collect(), vals).unwrap();
        let (q, err) = thin(&p, 0.3);
        assert!(q.len() < p.len());
        assert!(err <= 0.3);
        assert!(p.sup_distance(&q) <= err + 1e-15);
    }

    #[test]
    fn j1_time_shift_is_shift() {
        let u = CadlagPath::step(0.5, 0.0, 1.0);
        let v = CadlagPath::step(0.53, 0.0, 1.0);
        assert!((d_j1(&u, &v).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(d_j1(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn staircase_examples() {
        let jump = CadlagPath::step(0.5, 0.0, 1.0);
        for n in [10, 50, 200] {
            let s = staircase(n, 0.5);
            assert!(d_j1(&s, &jump).unwrap() >= 0.5 - 1e-12);
            assert!(d_m2(&s, &jump).unwrap() <= 1.0 / n as f64 + 1e-12);
            let m1 = d_m1_bounds(&s, &jump).unwrap();
            assert!(m1.upper <= 1.0 / n as f64 + 1e-12, "{m1:?}");
            let over = staircase(n, 1.5);
            assert!(d_m1_bounds(&over, &jump).unwrap().lower >= 0.5 - 1e-12);
        }
    }

    /// Objective of the time change through knots `lambda(b_j) = s_j`.
    fn j1_objective(u: &CadlagPath, v: &CadlagPath, s: &[f64]) -> f64 {
        let b = v.times();
        let mut worst: f64 = 0.0;
        for j in 0..b.len() {
            worst = worst.max((s[j] - b[j]).abs());
            let s1 = if j + 1 < b.len() { s[j + 1] } else { 1.0 };
            let t1 = if j + 1 < b.len() { b[j + 1] } else { 1.0 };
            worst = worst.max((s1 - t1).abs());
            // u values on [s_j, s1)
            let mut pieces: Vec<f64> = vec![u.eval(s[j])];
            for (&a, &x) in u.times().iter().zip(u.values()) {
                if a > s[j] && a < s1 {
                    pieces.push(x);
                }
            }
            if j + 1 == b.len() {
                pieces.push(u.eval(1.0));
            }
            for x in pieces {
                worst = worst.max((x - v.values()[j]).abs());
            }
        }
        worst
    }

    #[test]
    fn j1_against_knot_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = 400;
        for _ in 0..25 {
            let mk = |rng: &mut ChaCha8Rng, k: usize| {
                let mut t: Vec<f64> = (0..k).map(|_| (rng.random::<f64>() * g as f64).floor() / g as f64).collect();
                t.push(0.0);
                t.sort_by(f64::total_cmp);
                t.dedup();
                let v: Vec<f64> = t.iter().map(|_| (rng.random::<f64>() * 8.0).floor() / 4.0).collect();
                CadlagPath::new(t, v).unwrap()
            };
            let u = mk(&mut rng, 3);
            let v = mk(&mut rng, 2);
            let exact = d_j1(&u, &v).unwrap();
            let m = v.len();
            let grid: Vec<f64> = (0..=g).map(|k| k as f64 / g as f64).collect();
            let mut best = f64::INFINITY;
            let mut idx = vec![0usize; m];
            // enumerate nondecreasing knot indices with s_0 = 0
            fn rec(
                d: usize,
                start: usize,
                idx: &mut Vec<usize>,
                grid: &[f64],
                f: &mut dyn FnMut(&[usize]),
            ) {
                if d == idx.len() {
                    f(idx);
                    return;
                }
                for k in start..grid.len() {
                    idx[d] = k;
                    rec(d + 1, k + 1, idx, grid, f);
                }
            }
            let mut eval = |ix: &[usize]| {
                let s: Vec<f64> = ix.iter().map(|&k| grid[k]).collect();
                best = best.min(j1_objective(&u, &v, &s));
            };
            idx[0] = 0;
            if m == 1 {
                eval(&idx);
            } else {
                rec(1, 1, &mut idx, &grid, &mut eval);
            }
            assert!(exact <= best + 1e-12, "dp {exact} > knot search {best}");
            assert!(best - exact <= 1.0 / g as f64 + 1e-12, "dp {exact} knot {best}");
        }
    }
}
