//! The collision map on `boundary x [0, pi]`.
//!
//! A phase point `(r, theta)` has outgoing velocity
//! `cos(theta) * tangent + sin(theta) * inward_normal`. Flights are resolved
//! curve by curve: circles in closed form, walls in their cusp chart where
//! the height minus the ray is convex along the ray, so a left-started
//! Newton iteration converges monotonically to the first crossing.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CurveKind, GeometryError, TableSpec, Vec2, Wall, SINGULAR_EXCLUSION};

/// Default cusp-depth guard on the wall graph parameter.
pub const DEFAULT_S_MIN: f64 = 1e-14;

/// Collisions closer than this to grazing (in `theta`) are rejected.
pub const TANGENTIAL_TOL: f64 = 1e-10;

const ANGLE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub r: f64,
    pub theta: f64,
}

impl PhasePoint {
    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    /// Time reversal `(r, theta) -> (r, pi - theta)`.
    pub fn reversed(self) -> Self {
        Self {
            r: self.r,
            theta: PI - self.theta,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("tangential collision (theta = {theta})")]
    TangentialCollision { theta: f64 },
    #[error("flight ends in the corner exclusion zone near {position:?}")]
    CornerHit { position: Vec2 },
    #[error("no boundary intersection found: {detail}")]
    RootFindFailure { detail: String },
    #[error("cusp depth overflow: wall parameter {s} below guard {s_min}")]
    CuspDepthOverflow { s: f64, s_min: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A collision on the boundary in the representation used by the stepper.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryState {
    pub curve: usize,
    /// Graph parameter `s` on walls, angular offset on arcs.
    pub param: f64,
    pub position: Vec2,
    /// Outgoing unit velocity.
    pub direction: Vec2,
    pub sin_theta: f64,
    pub cos_theta: f64,
}

impl BoundaryState {
    pub fn theta(&self) -> f64 {
        self.sin_theta.atan2(self.cos_theta)
    }

    pub fn phase(&self, table: &TableSpec) -> PhasePoint {
        PhasePoint {
            r: table.r_of(self.curve, self.param),
            theta: self.theta(),
        }
    }

    /// The same boundary point with the outgoing velocity reversed in time.
    pub fn reversed(&self, table: &TableSpec) -> BoundaryState {
        let f = table.frame_of(self.curve, self.param);
        let cos_t = -self.cos_theta;
        let sin_t = self.sin_theta;
        BoundaryState {
            direction: f.tangent * cos_t + f.inward_normal * sin_t,
            cos_theta: cos_t,
            sin_theta: sin_t,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollisionEvent {
    pub phase: PhasePoint,
    pub position: Vec2,
    pub flight_length: f64,
    pub curve: usize,
    /// Graph parameter when the collision is on a cusp wall.
    pub wall_s: Option<f64>,
}

/// Nearest boundary intersection of a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub curve: usize,
    pub param: f64,
    pub distance: f64,
}

/// Collision-map stepper bound to a table and depth guard.
#[derive(Clone, Copy, Debug)]
pub struct Billiard<'a> {
    pub table: &'a TableSpec,
    pub s_min: f64,
}

impl<'a> Billiard<'a> {
    pub fn new(table: &'a TableSpec) -> Self {
        Self {
            table,
            s_min: DEFAULT_S_MIN,
        }
    }

    pub fn with_s_min(table: &'a TableSpec, s_min: f64) -> Self {
        Self { table, s_min }
    }

    /// Stepper state for a phase point.
    pub fn state(&self, x: PhasePoint) -> Result<BoundaryState, DynamicsError> {
        if !(x.theta > TANGENTIAL_TOL && x.theta < PI - TANGENTIAL_TOL) {
            return Err(DynamicsError::TangentialCollision { theta: x.theta });
        }
        let (k, p) = self.table.locate(x.r)?;
        let f = self.table.frame_of(k, p);
        let (sin_t, cos_t) = x.theta.sin_cos();
        Ok(BoundaryState {
            curve: k,
            param: p,
            position: f.position,
            direction: f.tangent * cos_t + f.inward_normal * sin_t,
            sin_theta: sin_t,
            cos_theta: cos_t,
        })
    }

    /// Nearest intersection of the ray `from + t * direction`, `t > 0`,
    /// ignoring curve `skip` (a ray leaving a convex scatterer never
    /// returns to it).
    pub fn flight(
        &self,
        from: Vec2,
        direction: Vec2,
        skip: Option<usize>,
    ) -> Result<Hit, DynamicsError> {
        let mut best: Option<(Hit, bool)> = None;
        for (k, curve) in self.table.curves.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let found = match &curve.kind {
                CurveKind::Wall(w) => wall_hit(w, from, direction),
                CurveKind::Arc(a) => arc_hit(a.center, a.radius, a.start_angle, a.sweep, from, direction),
            };
            if let Some((t, param, singular)) = found {
                if best.map_or(true, |(b, _)| t < b.distance) {
                    best = Some((
                        Hit {
                            curve: k,
                            param,
                            distance: t,
                        },
                        singular,
                    ));
                }
            }
        }
        match best {
            None => Err(DynamicsError::RootFindFailure {
                detail: format!("ray from {from:?} along {direction:?}"),
            }),
            Some((hit, true)) => Err(DynamicsError::CornerHit {
                position: from + direction * hit.distance,
            }),
            Some((hit, false)) => {
                if let CurveKind::Wall(_) = self.table.curves[hit.curve].kind {
                    if hit.param < self.s_min {
                        return Err(DynamicsError::CuspDepthOverflow {
                            s: hit.param,
                            s_min: self.s_min,
                        });
                    }
                }
                Ok(hit)
            }
        }
    }

    /// One application of the collision map in stepper form; also returns
    /// the flight length.
    #[inline]
    pub fn step(&self, x: &BoundaryState) -> Result<(BoundaryState, f64), DynamicsError> {
        let hit = self.flight(x.position, x.direction, Some(x.curve))?;
        let f = self.table.frame_of(hit.curve, hit.param);
        let d = x.direction;
        let dn = d.dot(f.inward_normal);
        let out = d - f.inward_normal * (2.0 * dn);
        let sin_t = out.dot(f.inward_normal);
        let cos_t = out.dot(f.tangent);
        if sin_t < TANGENTIAL_TOL {
            return Err(DynamicsError::TangentialCollision {
                theta: sin_t.atan2(cos_t),
            });
        }
        Ok((
            BoundaryState {
                curve: hit.curve,
                param: hit.param,
                position: f.position,
                direction: out,
                sin_theta: sin_t,
                cos_theta: cos_t,
            },
            hit.distance,
        ))
    }

    pub fn billiard_map(&self, x: PhasePoint) -> Result<PhasePoint, DynamicsError> {
        let s = self.state(x)?;
        let (next, _) = self.step(&s)?;
        Ok(next.phase(self.table))
    }

    /// `n` successive collisions starting after `x0`. On a singular
    /// collision the orbit is truncated and the cause reported.
    pub fn orbit(&self, x0: PhasePoint, n: usize) -> Orbit {
        let mut events = Vec::with_capacity(n);
        let mut state = match self.state(x0) {
            Ok(s) => s,
            Err(e) => {
                return Orbit {
                    events,
                    failure: Some(OrbitFailure { index: 0, cause: e }),
                }
            }
        };
        for i in 0..n {
            match self.step(&state) {
                Ok((next, len)) => {
                    let wall_s = self.table.curves[next.curve].as_wall().map(|_| next.param);
                    events.push(CollisionEvent {
                        phase: next.phase(self.table),
                        position: next.position,
                        flight_length: len,
                        curve: next.curve,
                        wall_s,
                    });
                    state = next;
                }
                Err(cause) => {
                    return Orbit {
                        events,
                        failure: Some(OrbitFailure { index: i, cause }),
                    }
                }
            }
        }
        Orbit {
            events,
            failure: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitFailure {
    /// Index of the step that failed.
    pub index: usize,
    pub cause: DynamicsError,
}

#[derive(Clone, Debug)]
pub struct Orbit {
    pub events: Vec<CollisionEvent>,
    pub failure: Option<OrbitFailure>,
}

/// Free-function form of the collision map with the default depth guard.
pub fn billiard_map(table: &TableSpec, x: PhasePoint) -> Result<PhasePoint, DynamicsError> {
    Billiard::new(table).billiard_map(x)
}

pub fn flight(table: &TableSpec, from: Vec2, direction: Vec2) -> Result<Hit, DynamicsError> {
    Billiard::new(table).flight(from, direction, None)
}

pub fn orbit(table: &TableSpec, x0: PhasePoint, n: usize) -> Orbit {
    Billiard::new(table).orbit(x0, n)
}

/// Draws from the invariant measure `sin(theta) dr dtheta / (2 |boundary|)`.
pub fn sample_mu<R: Rng + ?Sized>(table: &TableSpec, rng: &mut R) -> PhasePoint {
    loop {
        let r = rng.random::<f64>() * table.total_length;
        let u: f64 = rng.random();
        let theta = (1.0 - 2.0 * u).acos();
        if table.locate(r).is_ok() && theta > TANGENTIAL_TOL && theta < PI - TANGENTIAL_TOL {
            return PhasePoint { r, theta };
        }
    }
}

/// First crossing of a ray with an arc of a circle entered from outside.
/// Returns `(t, offset, in_corner_zone)`.
fn arc_hit(
    center: Vec2,
    radius: f64,
    start_angle: f64,
    sweep: f64,
    p: Vec2,
    d: Vec2,
) -> Option<(f64, f64, bool)> {
    let q = p - center;
    let b = q.dot(d);
    if b >= 0.0 {
        return None;
    }
    let c = q.dot(q) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    // stable form of -b - sqrt(disc)
    let root = -b + disc.sqrt();
    let t = c / root;
    if !(t > 0.0) {
        return None;
    }
    let h = q + d * t;
    let mut off = h.y.atan2(h.x) - start_angle;
    off = off.rem_euclid(2.0 * PI);
    if off > PI + 0.5 * sweep {
        off -= 2.0 * PI;
    }
    if off < -ANGLE_SLACK || off > sweep + ANGLE_SLACK {
        return None;
    }
    let excl = SINGULAR_EXCLUSION / radius;
    let singular = off < excl || off > sweep - excl;
    Some((t, off.clamp(0.0, sweep), singular))
}

/// First crossing of a ray started below a wall graph. Returns
/// `(t, s, in_corner_zone)`.
fn wall_hit(w: &Wall, p: Vec2, d: Vec2) -> Option<(f64, f64, bool)> {
    let q = p - w.origin;
    let s0 = q.dot(w.axis);
    let z0 = q.dot(w.lift);
    let ds = d.dot(w.axis);
    let dz = d.dot(w.lift);
    let s_hi = w.s_max * (1.0 + ANGLE_SLACK);
    let coef = w.coef;
    let beta = w.beta;

    if ds == 0.0 {
        if !(s0 >= 0.0 && s0 <= s_hi) || dz <= 0.0 {
            return None;
        }
        let gap = coef * s0.powf(beta) - z0;
        if gap <= 0.0 {
            return None;
        }
        let t = gap / dz;
        return Some(finish_wall(w, t, s0));
    }

    let ta = -s0 / ds;
    let tb = (s_hi - s0) / ds;
    let t_lo = ta.min(tb).max(0.0);
    let t_hi = ta.max(tb);
    if !(t_hi > t_lo) {
        return None;
    }
    let s_at = |t: f64| (s0 + t * ds).max(0.0);
    let gap = |t: f64| coef * s_at(t).powf(beta) - z0 - t * dz;
    let slope = |t: f64| coef * beta * s_at(t).powf(beta - 1.0) * ds - dz;

    let g_lo = gap(t_lo);
    if !(g_lo > 0.0) {
        return None;
    }
    if slope(t_lo) >= 0.0 {
        return None;
    }
    // minimiser of the convex gap on [t_lo, t_hi]
    let t_min = if slope(t_hi) <= 0.0 {
        t_hi
    } else {
        let ratio = dz / (coef * beta * ds);
        if ratio > 0.0 {
            let s_c = ratio.powf(1.0 / (beta - 1.0));
            ((s_c - s0) / ds).clamp(t_lo, t_hi)
        } else {
            t_lo
        }
    };
    if gap(t_min) > 0.0 {
        return None;
    }

    // Newton from the left: monotone for a convex decreasing function.
    let mut t = t_lo;
    let mut converged = false;
    for _ in 0..200 {
        let g = gap(t);
        if g <= 0.0 {
            converged = true;
            break;
        }
        let dt = -g / slope(t);
        if !(dt.is_finite()) || dt < 0.0 {
            break;
        }
        let next = (t + dt).min(t_min);
        if next == t || dt <= 1e-16 * t.abs().max(1e-300) {
            converged = true;
            t = next;
            break;
        }
        t = next;
    }
    if !converged {
        // bisection fallback on [t, t_min]
        let (mut a, mut b) = (t, t_min);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if gap(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-16 * b.abs() {
                break;
            }
        }
        t = b;
    }
    Some(finish_wall(w, t, s_at(t)))
}

fn finish_wall(w: &Wall, t: f64, s: f64) -> (f64, f64, bool) {
    let excl = SINGULAR_EXCLUSION / w.speed(w.s_max);
    let singular = s > w.s_max - excl;
    (t, s.min(w.s_max), singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_table, TableConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn drop3() -> TableSpec {
        build_table(&TableConfig::drop(3.0, 1.0, 2.0)).unwrap()
    }

    #[test]
    fn grazing_start_is_rejected() {
        let t = drop3();
        let r = t.curves[2].r_start + 0.3;
        let err = billiard_map(&t, PhasePoint::new(r, 0.0)).unwrap_err();
        assert!(matches!(err, DynamicsError::TangentialCollision { .. }));
    }

    #[test]
    fn reversibility_on_random_points() {
        let t = drop3();
        let b = Billiard::new(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let x = sample_mu(&t, &mut rng);
            let Ok(y) = b.billiard_map(x) else { continue };
            let Ok(z) = b.billiard_map(y.reversed()) else { continue };
            let back = z.reversed();
            worst = worst.max((back.r - x.r).abs()).max((back.theta - x.theta).abs());
        }
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn ray_along_the_axis_overflows_the_depth_guard() {
        // a ray exactly on the axis never meets a wall before the guard
        let t = drop3();
        let err = flight(&t, Vec2::new(0.9, 0.0), Vec2::new(-1.0, 0.0)).unwrap_err();
        assert!(matches!(err, DynamicsError::CuspDepthOverflow { .. }), "{err:?}");
    }

    #[test]
    fn normal_launches_from_mirror_points_land_on_mirror_points() {
        let t = drop3();
        let b = Billiard::new(&t);
        for &s in &[0.05, 0.2, 0.35] {
            let from_lower = b.billiard_map(PhasePoint::new(t.r_of(0, s), PI / 2.0)).unwrap();
            let from_upper = b.billiard_map(PhasePoint::new(t.r_of(1, s), PI / 2.0)).unwrap();
            let (k1, s1) = t.locate(from_lower.r).unwrap();
            let (k2, s2) = t.locate(from_upper.r).unwrap();
            assert_eq!((k1, k2), (1, 0));
            assert!((s1 - s2).abs() < 1e-12);
            assert!((from_lower.theta - (PI - from_upper.theta)).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_ray_from_axis_hits_mirror_wall_points() {
        let t = drop3();
        let p = Vec2::new(0.5, 0.0);
        let up = flight(&t, p, Vec2::new(0.0, 1.0)).unwrap();
        let down = flight(&t, p, Vec2::new(0.0, -1.0)).unwrap();
        assert_eq!(up.curve, 1);
        assert_eq!(down.curve, 0);
        assert!((up.param - 0.5).abs() < 1e-12);
        assert!((down.param - 0.5).abs() < 1e-12);
        assert!((up.distance - down.distance).abs() < 1e-15);
        assert!((up.distance - 0.125 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sample_mu_moments() {
        let t = drop3();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut c = 0.0;
        for _ in 0..n {
            c += sample_mu(&t, &mut rng).theta.cos();
        }
        assert!((c / n as f64).abs() < 6e-3);
    }

    #[test]
    fn orbit_reports_truncation() {
        let t = drop3();
        let o = orbit(&t, PhasePoint::new(0.0, 1.0), 10);
        assert!(o.events.is_empty());
        assert!(o.failure.is_some());
        let o = orbit(&t, PhasePoint::new(t.curves[2].r_start + 0.2, 1.3), 50);
        assert!(o.failure.is_none());
        assert_eq!(o.events.len(), 50);
        assert!(o.events.iter().all(|e| e.flight_length > 1e-13));
    }
}
