use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::{azimuth_of, Point, Scatterer, TargetState};
use crate::error::{Error, Result};

/// A straight piece of the target contour with its outward unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub start: Point,
    pub end: Point,
    pub normal: Point,
}

impl Edge {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn midpoint(&self) -> Point {
        (self.start + self.end) * 0.5
    }

    pub fn point_at(&self, t: f64) -> Point {
        self.start + (self.end - self.start) * t
    }
}

/// Corners of the rectangle, counter-clockwise, starting at local (-L/2, -W/2).
pub fn rect_corners(cx: f64, cy: f64, phi: f64, length: f64, width: f64) -> [Point; 4] {
    let (s, c) = phi.sin_cos();
    let hl = 0.5 * length;
    let hw = 0.5 * width;
    [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)].map(|(u, v)| Point::new(cx + c * u - s * v, cy + s * u + c * v))
}

fn contains_origin(state: &TargetState) -> bool {
    // Origin in the target's local frame.
    let (s, c) = state.phi_rad.sin_cos();
    let dx = -state.x_m;
    let dy = -state.y_m;
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= 0.5 * state.length_m && v.abs() <= 0.5 * state.width_m
}

/// Edges of the target rectangle visible from the base station at the origin.
///
/// An edge is visible when its outward normal points toward the origin.
/// Two visible edges are returned in contour order, so that they share the
/// end of the first and the start of the second.
pub fn visible_edges(state: &TargetState) -> Result<Vec<Edge>> {
    if !(state.length_m > 0.0 && state.width_m > 0.0) {
        return Err(Error::Geometry(format!(
            "non-positive target size {} x {}",
            state.length_m, state.width_m
        )));
    }
    if contains_origin(state) {
        return Err(Error::Geometry(
            "base station lies inside or on the target contour".into(),
        ));
    }
    let c = rect_corners(state.x_m, state.y_m, state.phi_rad, state.length_m, state.width_m);
    let mut visible = [false; 4];
    let mut edges = [None; 4];
    for i in 0..4 {
        let start = c[i];
        let end = c[(i + 1) % 4];
        let d = end - start;
        // Outward normal of a counter-clockwise polygon.
        let normal = Point::new(d.y, -d.x) / d.norm();
        let edge = Edge { start, end, normal };
        visible[i] = normal.dot(&-edge.midpoint()) > 0.0;
        edges[i] = Some(edge);
    }
    // Rotate the start so that a visible run does not straddle index 3 -> 0.
    let first = (0..4)
        .find(|&i| visible[i] && !visible[(i + 3) % 4])
        .ok_or_else(|| Error::Geometry("no visible edge".into()))?;
    let out: Vec<Edge> = (0..4)
        .map(|k| (first + k) % 4)
        .take_while(|&i| visible[i])
        .filter_map(|i| edges[i])
        .collect();
    Ok(out)
}

/// Splits the visible contour into `k_sections` sections of equal arclength
/// and places one scatterer at the midpoint of each section.
pub fn partition_scatterers(edges: &[Edge], k_sections: usize) -> Result<Vec<Scatterer>> {
    if k_sections == 0 {
        return Err(Error::Geometry("need at least one contour section".into()));
    }
    if edges.is_empty() {
        return Err(Error::Geometry("no visible contour to partition".into()));
    }
    let lengths: Vec<f64> = edges.iter().map(Edge::length).collect();
    let total: f64 = lengths.iter().sum();
    let k = k_sections as f64;
    let boundary = |j: usize| total * j as f64 / k;

    let mut out = Vec::with_capacity(k_sections);
    for j in 0..k_sections {
        let (s0, s1) = (boundary(j), boundary(j + 1));
        let mid = 0.5 * (s0 + s1);
        // Locate the edge holding the section midpoint.
        let mut acc = 0.0;
        let mut idx = edges.len() - 1;
        for (i, &len) in lengths.iter().enumerate() {
            if mid < acc + len || i == edges.len() - 1 {
                idx = i;
                break;
            }
            acc += len;
        }
        let edge = &edges[idx];
        let t = ((mid - acc) / lengths[idx]).clamp(0.0, 1.0);
        let p = edge.point_at(t);
        let range = p.norm();
        let to_bs = -p / range;
        let cos_psi = edge.normal.dot(&to_bs).clamp(-1.0, 1.0);
        let psi = cos_psi.acos();
        let c = psi.cos();
        out.push(Scatterer {
            azimuth_rad: azimuth_of(p.x, p.y),
            range_m: range,
            normal_angle_rad: psi,
            eq_length_m: s1 - s0,
            rcs: c * c,
        });
    }
    Ok(out)
}
