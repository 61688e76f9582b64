//! Billiard tables bounded by flat-cusp walls and circular dispersing arcs.
//!
//! Every cusp is described in its own chart `(s, z)` with the tip at the
//! origin and the walls `z = C s^beta` (upper) and `z = -C' s^beta` (lower)
//! for `0 <= s <= s_max`. Consecutive cusps are joined by circular arcs
//! that bulge into the table. The boundary is traversed clockwise, so the
//! inward normal is the tangent rotated clockwise by a right angle. With
//! that orientation the lower wall of each cusp is traversed toward the tip
//! and the upper wall away from it.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

/// Arc-length radius of the excluded zone around corners and cusp tips.
pub const SINGULAR_EXCLUSION: f64 = 1e-12;

const ARCLEN_PANELS: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }
    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
    #[inline]
    pub fn unit(self) -> Vec2 {
        self * (1.0 / self.norm())
    }
    /// Rotation by -pi/2.
    #[inline]
    pub fn rot_cw(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }
    /// Rotation by +pi/2.
    #[inline]
    pub fn rot_ccw(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
    pub fn from_angle(a: f64) -> Vec2 {
        Vec2::new(a.cos(), a.sin())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("flatness exponent beta must exceed 2 (got {0})")]
    FlatnessBound(f64),
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("closure arc {arc}: radius {radius} cannot span a chord of length {chord}")]
    ArcTooSmall { arc: usize, radius: f64, chord: f64 },
    #[error("boundary self-intersects between r = {r1} and r = {r2}")]
    SelfIntersection { r1: f64, r2: f64 },
    #[error("curve {curve} is not dispersing at r = {r} (curvature {curvature})")]
    NonDispersing { curve: usize, r: f64, curvature: f64 },
    #[error("corner at r = {r} has interior angle {angle} outside (0, pi)")]
    BadCorner { r: f64, angle: f64 },
    #[error("boundary is not a clockwise simple closed curve (signed area {area})")]
    Orientation { area: f64 },
    #[error("r = {r} is within {radius} of the {kind} at r = {at}")]
    SingularPoint {
        r: f64,
        kind: SingularKind,
        at: f64,
        radius: f64,
    },
    #[error("r = {r} outside [0, {length})")]
    OutOfRange { r: f64, length: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularKind {
    Corner,
    CuspTip,
}

impl std::fmt::Display for SingularKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SingularKind::Corner => f.write_str("corner"),
            SingularKind::CuspTip => f.write_str("cusp tip"),
        }
    }
}

/// Which side of the cusp axis a wall lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallOrientation {
    Upper,
    Lower,
}

/// One cusp in table coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspSpec {
    pub beta: f64,
    pub s_max: f64,
    /// Coefficient `C` of the upper wall `z = C s^beta`.
    pub c_upper: f64,
    /// Coefficient `C'` of the lower wall `z = -C' s^beta`.
    pub c_lower: f64,
    pub tip: Vec2,
    /// Direction of increasing `s`, in radians.
    pub axis_angle: f64,
}

impl CuspSpec {
    fn validate(&self, idx: usize) -> Result<(), GeometryError> {
        if !(self.beta > 2.0) || !self.beta.is_finite() {
            return Err(GeometryError::FlatnessBound(self.beta));
        }
        let bad = |field: &str, reason: &str| GeometryError::InvalidParameter {
            field: format!("table.cusps[{idx}].{field}"),
            reason: reason.to_string(),
        };
        if !(self.s_max > 0.0) || !self.s_max.is_finite() {
            return Err(bad("s_max", "must be positive"));
        }
        if !(self.c_upper > 0.0) || !self.c_upper.is_finite() {
            return Err(bad("c_upper", "must be positive"));
        }
        // C' = 0 would give a straight lower wall, which is not dispersing.
        if !(self.c_lower > 0.0) || !self.c_lower.is_finite() {
            return Err(bad("c_lower", "must be positive for a dispersing wall"));
        }
        Ok(())
    }
}

/// Table configuration block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub beta: f64,
    pub s_max: f64,
    pub closure_radius: f64,
    /// Explicit cusp list; when empty a symmetric single-cusp drop is built
    /// from `beta` and `s_max`.
    #[serde(default)]
    pub cusps: Vec<CuspConfig>,
    /// Per-arc radii; arc `i` runs from cusp `i` to cusp `i + 1`.
    #[serde(default)]
    pub closure_radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspConfig {
    pub tip: [f64; 2],
    #[serde(default)]
    pub axis_angle: f64,
    pub beta: f64,
    pub s_max: f64,
    pub c_upper: Option<f64>,
    pub c_lower: Option<f64>,
}

impl TableConfig {
    /// Symmetric drop: walls `z = ±s^beta / beta` closed by one arc.
    pub fn drop(beta: f64, s_max: f64, closure_radius: f64) -> Self {
        Self {
            beta,
            s_max,
            closure_radius,
            cusps: Vec::new(),
            closure_radii: Vec::new(),
        }
    }

    /// Two cusps facing each other with offset axes, so the tangent
    /// trajectories leaving the tips do not line up.
    pub fn two_cusp(beta_a: f64, beta_b: f64) -> Self {
        Self {
            beta: beta_a.max(beta_b),
            s_max: 0.8,
            closure_radius: 3.0,
            cusps: vec![
                CuspConfig {
                    tip: [0.0, 0.0],
                    axis_angle: 0.0,
                    beta: beta_a,
                    s_max: 0.8,
                    c_upper: None,
                    c_lower: None,
                },
                CuspConfig {
                    tip: [3.0, 0.5],
                    axis_angle: PI,
                    beta: beta_b,
                    s_max: 0.8,
                    c_upper: None,
                    c_lower: None,
                },
            ],
            closure_radii: Vec::new(),
        }
    }

    fn cusp_specs(&self) -> Result<Vec<CuspSpec>, GeometryError> {
        if self.cusps.is_empty() {
            if !(self.beta > 2.0) || !self.beta.is_finite() {
                return Err(GeometryError::FlatnessBound(self.beta));
            }
            return Ok(vec![CuspSpec {
                beta: self.beta,
                s_max: self.s_max,
                c_upper: 1.0 / self.beta,
                c_lower: 1.0 / self.beta,
                tip: Vec2::new(0.0, 0.0),
                axis_angle: 0.0,
            }]);
        }
        Ok(self
            .cusps
            .iter()
            .map(|c| CuspSpec {
                beta: c.beta,
                s_max: c.s_max,
                c_upper: c.c_upper.unwrap_or(1.0 / c.beta),
                c_lower: c.c_lower.unwrap_or(1.0 / c.beta),
                tip: Vec2::new(c.tip[0], c.tip[1]),
                axis_angle: c.axis_angle,
            })
            .collect())
    }
}

/// Arc length of a wall `z = C s^beta`, tabulated on uniform panels with the
/// remainder of the last panel integrated on demand.
#[derive(Clone, Debug)]
struct ArcLength {
    coef_beta: f64,
    beta: f64,
    h: f64,
    cum: Vec<f64>,
}

impl ArcLength {
    fn new(coef: f64, beta: f64, s_max: f64) -> Self {
        let h = s_max / ARCLEN_PANELS as f64;
        let mut me = Self {
            coef_beta: coef * beta,
            beta,
            h,
            cum: Vec::with_capacity(ARCLEN_PANELS + 1),
        };
        let mut acc = 0.0;
        me.cum.push(0.0);
        for k in 0..ARCLEN_PANELS {
            let a = k as f64 * h;
            acc += quad::adaptive(a, a + h, 1e-15, &|s| me.speed(s));
            me.cum.push(acc);
        }
        me
    }

    #[inline]
    fn slope(&self, s: f64) -> f64 {
        self.coef_beta * s.powf(self.beta - 1.0)
    }

    #[inline]
    fn speed(&self, s: f64) -> f64 {
        let q = self.slope(s);
        (1.0 + q * q).sqrt()
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn length_to(&self, s: f64) -> f64 {
        let k = ((s / self.h) as usize).min(ARCLEN_PANELS - 1);
        let a = k as f64 * self.h;
        self.cum[k] + quad::apply(quad::gl8(), a, s, |t| self.speed(t))
    }

    fn param_at(&self, len: f64) -> f64 {
        let s_max = self.h * ARCLEN_PANELS as f64;
        let k = self.cum.partition_point(|&c| c <= len).saturating_sub(1).min(ARCLEN_PANELS - 1);
        let (mut lo, mut hi) = (k as f64 * self.h, ((k + 1) as f64 * self.h).min(s_max));
        let mut s = lo + (len - self.cum[k]) / self.speed(lo);
        for _ in 0..60 {
            s = s.clamp(lo, hi);
            let f = self.length_to(s) - len;
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let step = f / self.speed(s);
            s -= step;
            if step.abs() <= 1e-16 * (1.0 + s.abs()) {
                break;
            }
            if s <= lo || s >= hi {
                s = 0.5 * (lo + hi);
            }
        }
        s.clamp(0.0, s_max)
    }
}

/// A cusp wall.
#[derive(Clone, Debug)]
pub struct Wall {
    pub cusp: usize,
    pub orientation: WallOrientation,
    pub coef: f64,
    pub beta: f64,
    pub s_max: f64,
    pub origin: Vec2,
    pub axis: Vec2,
    /// Unit vector along which the wall height is measured; the table lies
    /// on the side of decreasing height.
    pub lift: Vec2,
    /// Traversed toward the tip (true for the lower wall).
    pub inbound: bool,
    arclen: ArcLength,
}

impl Wall {
    #[inline]
    pub fn height(&self, s: f64) -> f64 {
        self.coef * s.powf(self.beta)
    }

    #[inline]
    pub fn point(&self, s: f64) -> Vec2 {
        self.origin + self.axis * s + self.lift * self.height(s)
    }

    /// Unit tangent in the traversal direction.
    pub fn tangent(&self, s: f64) -> Vec2 {
        let d = (self.axis + self.lift * self.arclen.slope(s)).unit();
        if self.inbound {
            -d
        } else {
            d
        }
    }

    pub fn curvature(&self, s: f64) -> f64 {
        let q = self.arclen.slope(s);
        let second = self.coef * self.beta * (self.beta - 1.0) * s.powf(self.beta - 2.0);
        second / (1.0 + q * q).powf(1.5)
    }

    /// Arc length from the tip to graph parameter `s`.
    pub fn length_to(&self, s: f64) -> f64 {
        self.arclen.length_to(s)
    }

    /// Graph parameter at arc length `len` from the tip.
    pub fn param_at(&self, len: f64) -> f64 {
        self.arclen.param_at(len)
    }

    pub fn speed(&self, s: f64) -> f64 {
        self.arclen.speed(s)
    }

    pub fn length(&self) -> f64 {
        self.arclen.length()
    }
}

/// A circular dispersing arc, traversed counterclockwise about its center.
#[derive(Clone, Debug)]
pub struct Arc {
    pub center: Vec2,
    pub radius: f64,
    pub start_angle: f64,
    pub sweep: f64,
}

impl Arc {
    #[inline]
    pub fn point(&self, offset: f64) -> Vec2 {
        self.center + Vec2::from_angle(self.start_angle + offset) * self.radius
    }
    #[inline]
    pub fn tangent(&self, offset: f64) -> Vec2 {
        Vec2::from_angle(self.start_angle + offset).rot_ccw()
    }
    pub fn length(&self) -> f64 {
        self.radius * self.sweep
    }
}

#[derive(Clone, Debug)]
pub enum CurveKind {
    Wall(Wall),
    Arc(Arc),
}

/// A boundary piece together with its arc-length interval.
#[derive(Clone, Debug)]
pub struct Curve {
    pub kind: CurveKind,
    pub r_start: f64,
    pub length: f64,
    pub start_kind: SingularKind,
    pub end_kind: SingularKind,
}

impl Curve {
    pub fn r_end(&self) -> f64 {
        self.r_start + self.length
    }

    pub fn is_wall(&self) -> bool {
        matches!(self.kind, CurveKind::Wall(_))
    }

    pub fn as_wall(&self) -> Option<&Wall> {
        match &self.kind {
            CurveKind::Wall(w) => Some(w),
            CurveKind::Arc(_) => None,
        }
    }

    /// Curve parameter (graph `s` for walls, angular offset for arcs) of a
    /// local arc-length position `u` in `[0, length]`.
    pub fn param_from_local(&self, u: f64) -> f64 {
        match &self.kind {
            CurveKind::Wall(w) => {
                if w.inbound {
                    w.param_at(self.length - u)
                } else {
                    w.param_at(u)
                }
            }
            CurveKind::Arc(a) => u / a.radius,
        }
    }

    pub fn local_from_param(&self, p: f64) -> f64 {
        match &self.kind {
            CurveKind::Wall(w) => {
                let d = w.length_to(p);
                if w.inbound {
                    self.length - d
                } else {
                    d
                }
            }
            CurveKind::Arc(a) => p * a.radius,
        }
    }

    pub fn point(&self, p: f64) -> Vec2 {
        match &self.kind {
            CurveKind::Wall(w) => w.point(p),
            CurveKind::Arc(a) => a.point(p),
        }
    }

    pub fn tangent(&self, p: f64) -> Vec2 {
        match &self.kind {
            CurveKind::Wall(w) => w.tangent(p),
            CurveKind::Arc(a) => a.tangent(p),
        }
    }

    pub fn curvature(&self, p: f64) -> f64 {
        match &self.kind {
            CurveKind::Wall(w) => w.curvature(p),
            CurveKind::Arc(a) => 1.0 / a.radius,
        }
    }
}

/// Position, unit tangent, inward unit normal and curvature at a boundary
/// point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryFrame {
    pub position: Vec2,
    pub tangent: Vec2,
    pub inward_normal: Vec2,
    pub curvature: f64,
}

/// Arc-length coordinates of one cusp tip: `r_in` ends the wall traversed
/// toward the tip, `r_out` starts the wall traversed away from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CuspTip {
    pub cusp: usize,
    pub r_in: f64,
    pub r_out: f64,
    pub inbound_curve: usize,
    pub outbound_curve: usize,
}

/// A validated billiard table.
#[derive(Clone, Debug)]
pub struct TableSpec {
    pub curves: Vec<Curve>,
    pub cusps: Vec<CuspSpec>,
    /// Arc-length positions of the corners.
    pub corners: Vec<f64>,
    pub total_length: f64,
    pub config: TableConfig,
}

/// Builds and validates a table.
pub fn build_table(config: &TableConfig) -> Result<TableSpec, GeometryError> {
    let cusps = config.cusp_specs()?;
    for (i, c) in cusps.iter().enumerate() {
        c.validate(i)?;
    }
    let n_arcs = cusps.len();
    let radius_of = |i: usize| -> f64 {
        config
            .closure_radii
            .get(i)
            .copied()
            .unwrap_or(config.closure_radius)
    };
    for i in 0..n_arcs {
        let r = radius_of(i);
        if !(r > 0.0) || !r.is_finite() {
            return Err(GeometryError::InvalidParameter {
                field: format!("table.closure_radii[{i}]"),
                reason: "closure radius must be positive and finite".into(),
            });
        }
    }

    let mut kinds: Vec<(CurveKind, SingularKind, SingularKind)> = Vec::new();
    let mut walls: Vec<(Wall, Wall)> = Vec::new();
    for (i, c) in cusps.iter().enumerate() {
        let axis = Vec2::from_angle(c.axis_angle);
        let up = axis.rot_ccw();
        let lower = Wall {
            cusp: i,
            orientation: WallOrientation::Lower,
            coef: c.c_lower,
            beta: c.beta,
            s_max: c.s_max,
            origin: c.tip,
            axis,
            lift: -up,
            inbound: true,
            arclen: ArcLength::new(c.c_lower, c.beta, c.s_max),
        };
        let upper = Wall {
            cusp: i,
            orientation: WallOrientation::Upper,
            coef: c.c_upper,
            beta: c.beta,
            s_max: c.s_max,
            origin: c.tip,
            axis,
            lift: up,
            inbound: false,
            arclen: ArcLength::new(c.c_upper, c.beta, c.s_max),
        };
        walls.push((lower, upper));
    }
    for i in 0..n_arcs {
        let (lower, upper) = walls[i].clone();
        let from = upper.point(upper.s_max);
        let next = &walls[(i + 1) % n_arcs].0;
        let to = next.point(next.s_max);
        let radius = radius_of(i);
        let chord_v = to - from;
        let chord = chord_v.norm();
        if !(2.0 * radius > chord) {
            return Err(GeometryError::ArcTooSmall {
                arc: i,
                radius,
                chord,
            });
        }
        let half = 0.5 * chord;
        let mid = from + chord_v * 0.5;
        let center = mid + chord_v.unit().rot_ccw() * (radius * radius - half * half).sqrt();
        let start = from - center;
        let arc = Arc {
            center,
            radius,
            start_angle: start.y.atan2(start.x),
            sweep: 2.0 * (half / radius).asin(),
        };
        kinds.push((CurveKind::Wall(lower), SingularKind::Corner, SingularKind::CuspTip));
        kinds.push((CurveKind::Wall(upper), SingularKind::CuspTip, SingularKind::Corner));
        kinds.push((CurveKind::Arc(arc), SingularKind::Corner, SingularKind::Corner));
    }

    let mut curves = Vec::with_capacity(kinds.len());
    let mut r = 0.0;
    let mut corners = Vec::new();
    for (kind, start_kind, end_kind) in kinds {
        let length = match &kind {
            CurveKind::Wall(w) => w.length(),
            CurveKind::Arc(a) => a.length(),
        };
        if start_kind == SingularKind::Corner {
            corners.push(r);
        }
        curves.push(Curve {
            kind,
            r_start: r,
            length,
            start_kind,
            end_kind,
        });
        r += length;
    }
    let table = TableSpec {
        curves,
        cusps,
        corners,
        total_length: r,
        config: config.clone(),
    };
    table.validate(400)?;
    Ok(table)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a).signum() * ((b - a).cross(c - a) != 0.0) as i32 as f64
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    if a.x.max(b.x) < c.x.min(d.x)
        || c.x.max(d.x) < a.x.min(b.x)
        || a.y.max(b.y) < c.y.min(d.y)
        || c.y.max(d.y) < a.y.min(b.y)
    {
        return false;
    }
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

impl TableSpec {
    /// Samples `per_curve` points on each curve and checks simplicity,
    /// clockwise orientation, dispersing curvature and corner angles.
    pub fn validate(&self, per_curve: usize) -> Result<(), GeometryError> {
        let samples = self.sample_boundary(per_curve);
        // clockwise orientation
        let mut area = 0.0;
        for i in 0..samples.len() {
            let (_, p) = samples[i];
            let (_, q) = samples[(i + 1) % samples.len()];
            area += p.cross(q);
        }
        area *= 0.5;
        if !(area < 0.0) {
            return Err(GeometryError::Orientation { area });
        }
        let m = samples.len();
        for i in 0..m {
            let (ri, a) = samples[i];
            let b = samples[(i + 1) % m].1;
            for j in (i + 2)..m {
                if i == 0 && j == m - 1 {
                    continue;
                }
                let (rj, c) = samples[j];
                let d = samples[(j + 1) % m].1;
                if segments_cross(a, b, c, d) {
                    return Err(GeometryError::SelfIntersection { r1: ri, r2: rj });
                }
            }
        }
        for (k, curve) in self.curves.iter().enumerate() {
            for i in 1..per_curve {
                let u = curve.length * i as f64 / per_curve as f64;
                let p = curve.param_from_local(u);
                let kappa = curve.curvature(p);
                if !(kappa > 0.0) {
                    return Err(GeometryError::NonDispersing {
                        curve: k,
                        r: curve.r_start + u,
                        curvature: kappa,
                    });
                }
            }
        }
        let n = self.curves.len();
        for k in 0..n {
            let cur = &self.curves[k];
            if cur.end_kind != SingularKind::Corner {
                continue;
            }
            let next = &self.curves[(k + 1) % n];
            let t_in = cur.tangent(cur.param_from_local(cur.length));
            let t_out = next.tangent(next.param_from_local(0.0));
            let turn = t_in.cross(t_out).atan2(t_in.dot(t_out));
            let angle = PI + turn;
            if !(angle > 0.0 && angle < PI) {
                return Err(GeometryError::BadCorner {
                    r: next.r_start % self.total_length,
                    angle,
                });
            }
        }
        Ok(())
    }

    /// Boundary polyline: `(r, point)` pairs, `per_curve` per curve.
    pub fn sample_boundary(&self, per_curve: usize) -> Vec<(f64, Vec2)> {
        let mut out = Vec::with_capacity(per_curve * self.curves.len());
        for curve in &self.curves {
            for i in 0..per_curve {
                let u = curve.length * i as f64 / per_curve as f64;
                let p = match &curve.kind {
                    // walls are sampled uniformly in s so the tip region is resolved
                    CurveKind::Wall(w) => {
                        let frac = i as f64 / per_curve as f64;
                        let frac = if w.inbound { 1.0 - frac } else { frac };
                        curve.point(w.s_max * frac)
                    }
                    CurveKind::Arc(_) => curve.point(curve.param_from_local(u)),
                };
                out.push((curve.r_start + u, p));
            }
        }
        out
    }

    /// Index of the curve containing `r`.
    pub fn curve_index(&self, r: f64) -> Result<usize, GeometryError> {
        if !(r >= 0.0 && r < self.total_length) {
            return Err(GeometryError::OutOfRange {
                r,
                length: self.total_length,
            });
        }
        let k = self.curves.partition_point(|c| c.r_start <= r);
        Ok(k.saturating_sub(1))
    }

    /// Curve index and curve parameter of a non-singular `r`.
    pub fn locate(&self, r: f64) -> Result<(usize, f64), GeometryError> {
        let k = self.curve_index(r)?;
        let curve = &self.curves[k];
        let u = r - curve.r_start;
        if u < SINGULAR_EXCLUSION {
            return Err(GeometryError::SingularPoint {
                r,
                kind: curve.start_kind,
                at: curve.r_start,
                radius: SINGULAR_EXCLUSION,
            });
        }
        if curve.length - u < SINGULAR_EXCLUSION {
            return Err(GeometryError::SingularPoint {
                r,
                kind: curve.end_kind,
                at: curve.r_end(),
                radius: SINGULAR_EXCLUSION,
            });
        }
        Ok((k, curve.param_from_local(u)))
    }

    pub fn frame_at(&self, r: f64) -> Result<BoundaryFrame, GeometryError> {
        let (k, p) = self.locate(r)?;
        Ok(self.frame_of(k, p))
    }

    /// Frame at curve `k`, parameter `p`.
    #[inline]
    pub fn frame_of(&self, k: usize, p: f64) -> BoundaryFrame {
        let curve = &self.curves[k];
        let tangent = curve.tangent(p);
        BoundaryFrame {
            position: curve.point(p),
            tangent,
            inward_normal: tangent.rot_cw(),
            curvature: curve.curvature(p),
        }
    }

    /// Arc-length coordinate of curve `k` at parameter `p`.
    pub fn r_of(&self, k: usize, p: f64) -> f64 {
        let curve = &self.curves[k];
        curve.r_start + curve.local_from_param(p)
    }

    pub fn cusp_tip_coordinates(&self) -> Vec<CuspTip> {
        let mut tips: Vec<CuspTip> = Vec::new();
        for (k, curve) in self.curves.iter().enumerate() {
            if let CurveKind::Wall(w) = &curve.kind {
                if w.inbound {
                    tips.push(CuspTip {
                        cusp: w.cusp,
                        r_in: curve.r_end(),
                        r_out: curve.r_end(),
                        inbound_curve: k,
                        outbound_curve: k + 1,
                    });
                }
            }
        }
        tips.sort_by(|a, b| a.r_in.total_cmp(&b.r_in));
        tips
    }

    /// Total length of the non-wall curves.
    pub fn closure_length(&self) -> f64 {
        self.curves
            .iter()
            .filter(|c| !c.is_wall())
            .map(|c| c.length)
            .sum()
    }

    /// Largest flatness exponent over all cusps.
    pub fn beta(&self) -> f64 {
        self.cusps.iter().map(|c| c.beta).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Wall belonging to the given cusp and orientation.
    pub fn wall(&self, cusp: usize, orientation: WallOrientation) -> Option<(usize, &Wall)> {
        self.curves.iter().enumerate().find_map(|(k, c)| match &c.kind {
            CurveKind::Wall(w) if w.cusp == cusp && w.orientation == orientation => Some((k, w)),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drop3() -> TableSpec {
        build_table(&TableConfig::drop(3.0, 1.0, 2.0)).unwrap()
    }

    #[test]
    fn drop_table_has_three_curves_and_one_cusp() {
        let t = drop3();
        assert_eq!(t.curves.len(), 3);
        assert_eq!(t.cusps.len(), 1);
        assert_eq!(t.corners.len(), 2);
        t.validate(10_000).unwrap();
    }

    #[test]
    fn beta_two_is_rejected() {
        let err = build_table(&TableConfig::drop(2.0, 1.0, 2.0)).unwrap_err();
        assert_eq!(err, GeometryError::FlatnessBound(2.0));
    }

    #[test]
    fn small_closure_radius_is_rejected() {
        let err = build_table(&TableConfig::drop(3.0, 1.0, 0.2)).unwrap_err();
        assert!(matches!(err, GeometryError::ArcTooSmall { .. }));
    }

    #[test]
    fn bulging_closure_crossing_the_walls_is_rejected() {
        // radius barely above half the chord: the arc bulges deep into the cusp
        let err = build_table(&TableConfig::drop(3.0, 1.0, 0.34)).unwrap_err();
        assert!(
            matches!(err, GeometryError::SelfIntersection { .. } | GeometryError::BadCorner { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn wall_curvature_formula() {
        let t = drop3();
        let w = t.curves[1].as_wall().unwrap();
        let expect = 2.0 * 2f64.powf(-1.5);
        assert!((w.curvature(1.0) - expect).abs() < 1e-14);
        // finite differences of the tangent angle against arc length
        let s: f64 = 0.6;
        let h = 1e-5;
        let ang = |s: f64| {
            let tg = w.tangent(s);
            tg.y.atan2(tg.x)
        };
        let fd = (ang(s + h) - ang(s - h)) / (w.length_to(s + h) - w.length_to(s - h));
        assert!((fd.abs() - w.curvature(s)).abs() < 1e-8);
    }

    #[test]
    fn arc_curvature_is_inverse_radius() {
        let t = drop3();
        let r = t.curves[2].r_start + 0.5 * t.curves[2].length;
        let f = t.frame_at(r).unwrap();
        assert!((f.curvature - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tips_and_corners_are_singular() {
        let t = drop3();
        let tip = t.cusp_tip_coordinates()[0];
        let err = t.frame_at(tip.r_in - 1e-13).unwrap_err();
        assert!(matches!(
            err,
            GeometryError::SingularPoint {
                kind: SingularKind::CuspTip,
                ..
            }
        ));
        let err = t.frame_at(t.curves[2].r_start + 1e-13).unwrap_err();
        assert!(matches!(
            err,
            GeometryError::SingularPoint {
                kind: SingularKind::Corner,
                ..
            }
        ));
        assert!(t.frame_at(t.total_length).is_err());
    }

    #[test]
    fn tip_coordinates_of_the_drop() {
        let t = drop3();
        let tips = t.cusp_tip_coordinates();
        assert_eq!(tips.len(), 1);
        assert_eq!(tips[0].r_in, t.curves[0].length);
        assert_eq!(tips[0].r_in, tips[0].r_out);
        assert_eq!(tips[0].inbound_curve, 0);
        assert_eq!(tips[0].outbound_curve, 1);
    }

    #[test]
    fn two_cusp_table_builds() {
        let t = build_table(&TableConfig::two_cusp(3.0, 4.0)).unwrap();
        assert_eq!(t.curves.len(), 6);
        let tips = t.cusp_tip_coordinates();
        assert_eq!(tips.len(), 2);
        assert!(tips[0].r_in < tips[1].r_in);
        assert_eq!(t.beta(), 4.0);
    }

    #[test]
    fn inward_normal_points_into_the_table() {
        let t = drop3();
        // the point (0.5, 0) is inside; normals near it must face it
        for &(k, p) in &[(0usize, 0.5f64), (1, 0.5)] {
            let f = t.frame_of(k, p);
            let to_axis = Vec2::new(f.position.x, 0.0) - f.position;
            assert!(f.inward_normal.dot(to_axis) > 0.0);
        }
        let arc = &t.curves[2];
        let f = t.frame_of(2, 0.5 * arc.length / 2.0);
        assert!(f.inward_normal.x < 0.0);
    }
}
