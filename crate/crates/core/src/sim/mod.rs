//! Ground-truth trajectories and the physical signal model: target echo,
//! clutter echo, residual self-interference and receiver noise.

mod geometry;
mod scene;
mod signal;
mod trajectory;

use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::Vector2;
use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use geometry::{partition_scatterers, rect_corners, visible_edges, Edge};
pub use scene::Scene;
pub use signal::{
    clutter_echo, draw_clutter, element_positions, et_echo, si_channel, si_signal, synthesize_received, SiChannel,
};
pub use trajectory::{generate_trajectory, generate_trajectory_len, straight_trajectory};

pub type Point = Vector2<f64>;

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Removes 2*pi jumps from a sequence of wrapped angles.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let prev = angles[i - 1];
            let d = a - prev;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(a + offset);
    }
    out
}

/// Azimuth measured from the +y axis, `atan(x / y)`; valid for `y > 0`.
pub fn azimuth_of(x: f64, y: f64) -> f64 {
    (x / y).atan()
}

/// Kinematic ground truth of the rectangular target at one slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x_m: f64,
    pub y_m: f64,
    /// Orientation of the length axis, wrapped to (-pi, pi].
    pub phi_rad: f64,
    pub vx_mps: f64,
    pub vy_mps: f64,
    pub phi_rate_rps: f64,
    pub length_m: f64,
    pub width_m: f64,
}

impl TargetState {
    pub fn center(&self) -> Point {
        Point::new(self.x_m, self.y_m)
    }

    pub fn range(&self) -> f64 {
        self.x_m.hypot(self.y_m)
    }

    pub fn azimuth(&self) -> f64 {
        azimuth_of(self.x_m, self.y_m)
    }

    pub fn is_valid(&self) -> bool {
        self.length_m > 0.0
            && self.width_m > 0.0
            && self.y_m > 0.0
            && self.phi_rad > -PI
            && self.phi_rad <= PI
            && [self.x_m, self.y_m, self.vx_mps, self.vy_mps, self.phi_rate_rps]
                .iter()
                .all(|v| v.is_finite())
    }
}

/// One contour section of the visible target boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scatterer {
    /// Global azimuth from the +y axis.
    pub azimuth_rad: f64,
    pub range_m: f64,
    /// Angle between the outward contour normal and the scatterer-to-BS path.
    pub normal_angle_rad: f64,
    /// Equivalent contour length of the section.
    pub eq_length_m: f64,
    /// `cos(normal_angle)^2`.
    pub rcs: f64,
}

/// A static clutter scatterer with a complex RCS drawn once per episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clutter {
    pub x_m: f64,
    pub y_m: f64,
    pub rcs_re: f64,
    pub rcs_im: f64,
}

impl Clutter {
    pub fn rcs(&self) -> Complex64 {
        Complex64::new(self.rcs_re, self.rcs_im)
    }
}

/// Every signal component of one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSnapshot {
    pub tx: Vec<Complex64>,
    pub et_echo: Vec<Complex64>,
    pub clutter_echo: Vec<Complex64>,
    pub si: Vec<Complex64>,
    pub received: Vec<Complex64>,
}
