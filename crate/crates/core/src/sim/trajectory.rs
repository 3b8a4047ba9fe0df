use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;

use super::{azimuth_of, wrap_angle, Point, TargetState};
use crate::config::{SystemConfig, TrajectoryParams};
use crate::error::{Error, Result};
use crate::seed;

/// Samples a random U-shaped trajectory of `cfg.n_slots` states.
pub fn generate_trajectory(cfg: &SystemConfig, params: &TrajectoryParams, seed: u64) -> Result<Vec<TargetState>> {
    generate_trajectory_len(cfg.n_slots, cfg.slot_interval_s, params, seed)
}

/// Samples a random U-shaped trajectory of `n_states` states spaced `interval_s`.
///
/// Draws that leave the surveillance annulus or the azimuth sector are
/// rejected and redrawn, up to `params.max_attempts` times.
pub fn generate_trajectory_len(
    n_states: usize,
    interval_s: f64,
    params: &TrajectoryParams,
    seed: u64,
) -> Result<Vec<TargetState>> {
    params.validate()?;
    if n_states == 0 {
        return Err(Error::Config("trajectory needs at least one state".into()));
    }
    if !(interval_s > 0.0) {
        return Err(Error::Config("slot interval must be positive".into()));
    }
    let mut rng = seed::rng_from(seed);
    let mut reason = String::new();
    for _ in 0..params.max_attempts {
        let draw = UShape::sample(&mut rng, params);
        let states = draw.states(n_states, interval_s);
        match check_bounds(&states, params) {
            Ok(()) => return Ok(states),
            Err(r) => reason = r,
        }
    }
    Err(Error::TrajectoryExhausted {
        attempts: params.max_attempts,
        reason,
    })
}

/// A constant-velocity straight trajectory with orientation along the velocity.
pub fn straight_trajectory(
    start: Point,
    velocity: Point,
    length_m: f64,
    width_m: f64,
    n_states: usize,
    interval_s: f64,
) -> Vec<TargetState> {
    let heading = velocity.y.atan2(velocity.x);
    let mut states = Vec::with_capacity(n_states);
    let mut s = TargetState {
        x_m: start.x,
        y_m: start.y,
        phi_rad: wrap_angle(heading),
        vx_mps: velocity.x,
        vy_mps: velocity.y,
        phi_rate_rps: 0.0,
        length_m,
        width_m,
    };
    for _ in 0..n_states {
        states.push(s);
        s.x_m += interval_s * s.vx_mps;
        s.y_m += interval_s * s.vy_mps;
    }
    states
}

fn check_bounds(states: &[TargetState], p: &TrajectoryParams) -> core::result::Result<(), String> {
    for (n, s) in states.iter().enumerate() {
        if !(s.y_m > 0.0) {
            return Err(format!("state {n} left the forward half-plane (y = {:.2})", s.y_m));
        }
        let r = s.range();
        if r < p.range_min_m || r > p.range_max_m {
            return Err(format!(
                "state {n} at range {r:.2} m outside [{}, {}]",
                p.range_min_m, p.range_max_m
            ));
        }
        let az = azimuth_of(s.x_m, s.y_m);
        if az.abs() > p.max_azimuth_rad {
            return Err(format!("state {n} at azimuth {az:.3} rad outside the sector"));
        }
    }
    Ok(())
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn unit(heading: f64) -> Point {
    Point::new(heading.cos(), heading.sin())
}

fn left_normal(heading: f64) -> Point {
    Point::new(-heading.sin(), heading.cos())
}

struct UShape {
    start: Point,
    heading: f64,
    leg1: f64,
    leg2: f64,
    radius: f64,
    /// +1 for a left (counter-clockwise) turn, -1 for a right turn.
    turn: f64,
    length: f64,
    width: f64,
}

enum Segment {
    FirstLeg,
    Arc,
    SecondLeg,
}

impl UShape {
    fn sample<R: Rng>(rng: &mut R, p: &TrajectoryParams) -> Self {
        let r2 = uniform(
            rng,
            p.start_range_min_m * p.start_range_min_m,
            p.start_range_max_m * p.start_range_max_m,
        );
        let r = r2.sqrt();
        let az = uniform(rng, -p.max_azimuth_rad, p.max_azimuth_rad);
        UShape {
            start: Point::new(r * az.sin(), r * az.cos()),
            heading: uniform(rng, -PI, PI),
            leg1: uniform(rng, p.leg_length_min_m, p.leg_length_max_m),
            leg2: uniform(rng, p.leg_length_min_m, p.leg_length_max_m),
            radius: uniform(rng, p.turn_radius_min_m, p.turn_radius_max_m),
            turn: if rng.random::<bool>() { 1.0 } else { -1.0 },
            length: uniform(rng, p.length_min_m, p.length_max_m),
            width: uniform(rng, p.width_min_m, p.width_max_m),
        }
    }

    fn path_length(&self) -> f64 {
        self.leg1 + PI * self.radius + self.leg2
    }

    fn segment(&self, s: f64) -> Segment {
        if s < self.leg1 {
            Segment::FirstLeg
        } else if s < self.leg1 + PI * self.radius {
            Segment::Arc
        } else {
            Segment::SecondLeg
        }
    }

    /// State at arclength `s` along the path, at speed `v`.
    fn state_at(&self, s: f64, v: f64) -> TargetState {
        let u0 = unit(self.heading);
        let p1 = self.start + u0 * self.leg1;
        let center = p1 + left_normal(self.heading) * (self.turn * self.radius);
        let (pos, heading, rate) = match self.segment(s) {
            Segment::FirstLeg => (self.start + u0 * s, self.heading, 0.0),
            Segment::Arc => {
                let alpha = (s - self.leg1) / self.radius;
                let h = self.heading + self.turn * alpha;
                let pos = center - left_normal(h) * (self.turn * self.radius);
                (pos, h, self.turn * v / self.radius)
            }
            Segment::SecondLeg => {
                let h = self.heading + self.turn * PI;
                let p2 = center - left_normal(h) * (self.turn * self.radius);
                let ds = s - self.leg1 - PI * self.radius;
                (p2 + unit(h) * ds, h, 0.0)
            }
        };
        let vel = unit(heading) * v;
        TargetState {
            x_m: pos.x,
            y_m: pos.y,
            phi_rad: wrap_angle(heading),
            vx_mps: vel.x,
            vy_mps: vel.y,
            phi_rate_rps: rate,
            length_m: self.length,
            width_m: self.width,
        }
    }

    /// Samples the path at `n` instants so the whole U spans the episode.
    /// Consecutive states on the same straight leg are integrated
    /// (`x' = x + T * vx`) rather than re-evaluated.
    fn states(&self, n: usize, interval_s: f64) -> Vec<TargetState> {
        let speed = if n > 1 {
            self.path_length() / ((n - 1) as f64 * interval_s)
        } else {
            0.0
        };
        let step = speed * interval_s;
        let mut out: Vec<TargetState> = Vec::with_capacity(n);
        for k in 0..n {
            let s = step * k as f64;
            let state = match out.last() {
                Some(prev) if k > 0 => {
                    let s_prev = step * (k - 1) as f64;
                    let same_leg = matches!(
                        (self.segment(s_prev), self.segment(s)),
                        (Segment::FirstLeg, Segment::FirstLeg) | (Segment::SecondLeg, Segment::SecondLeg)
                    );
                    if same_leg {
                        TargetState {
                            x_m: prev.x_m + interval_s * prev.vx_mps,
                            y_m: prev.y_m + interval_s * prev.vy_mps,
                            ..*prev
                        }
                    } else {
                        self.state_at(s, speed)
                    }
                }
                _ => self.state_at(s, speed),
            };
            out.push(state);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let cfg = SystemConfig::default();
        let p = TrajectoryParams::default();
        let a = generate_trajectory(&cfg, &p, 11).unwrap();
        let b = generate_trajectory(&cfg, &p, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|s| s.is_valid()));
    }

    #[test]
    fn fixed_size_is_kept() {
        let cfg = SystemConfig::default();
        let p = TrajectoryParams::default().with_fixed_size(6.0, 4.0);
        let states = generate_trajectory(&cfg, &p, 3).unwrap();
        assert!(states.iter().all(|s| s.length_m == 6.0 && s.width_m == 4.0));
    }

    #[test]
    fn straight_legs_integrate_exactly() {
        let cfg = SystemConfig::default();
        let states = generate_trajectory(&cfg, &TrajectoryParams::default(), 5).unwrap();
        let mut checked = 0;
        for w in states.windows(2) {
            if w[0].phi_rate_rps == 0.0 && w[1].phi_rate_rps == 0.0 && w[0].phi_rad == w[1].phi_rad {
                assert_eq!(w[1].x_m, w[0].x_m + cfg.slot_interval_s * w[0].vx_mps);
                assert_eq!(w[1].y_m, w[0].y_m + cfg.slot_interval_s * w[0].vy_mps);
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn turn_is_half_circle() {
        let cfg = SystemConfig::default();
        let states = generate_trajectory(&cfg, &TrajectoryParams::default(), 9).unwrap();
        let first = states[0];
        let last = states[states.len() - 1];
        let dphi = wrap_angle(last.phi_rad - first.phi_rad).abs();
        assert!((dphi - PI).abs() < 1e-9, "{dphi}");
    }

    #[test]
    fn impossible_bounds_exhaust() {
        let p = TrajectoryParams {
            range_max_m: 30.0,
            max_attempts: 20,
            ..TrajectoryParams::default()
        };
        let err = generate_trajectory_len(50, 1.0, &p, 1).unwrap_err();
        assert!(matches!(err, Error::TrajectoryExhausted { attempts: 20, .. }));
    }
}
