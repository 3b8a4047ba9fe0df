//! Geometric evaluation: center, range, azimuth and orientation errors and
//! the intersection-over-union of oriented rectangles.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::sim::{azimuth_of, rect_corners, wrap_angle, Point};
use crate::tracknet::ThetaVector;

/// Corners of the rectangle described by `theta`, counter-clockwise.
pub fn rect_polygon(theta: &ThetaVector) -> Result<[Point; 4]> {
    let [x, y, phi, l, w] = theta.0;
    if !(l > 0.0 && w > 0.0) {
        return Err(Error::Geometry(format!("rectangle size {l} x {w} is not positive")));
    }
    Ok(rect_corners(x, y, phi, l, w))
}

/// Shoelace area, positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Intersection of two convex counter-clockwise polygons by successive
/// half-plane clipping. Returns an empty polygon when they do not overlap.
pub fn convex_clip(subject: &[Point], clip: &[Point]) -> Result<Vec<Point>> {
    for (name, p) in [("subject", subject), ("clip", clip)] {
        if p.len() < 3 || !(signed_area(p) > 0.0) {
            return Err(Error::Geometry(format!(
                "{name} polygon is degenerate or not counter-clockwise"
            )));
        }
    }
    let mut out: Vec<Point> = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = core::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (dp, dq) = (cross(a, b, p), cross(a, b, q));
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let t = dp / (dp - dq);
                out.push(p + (q - p) * t);
            }
        }
    }
    if out.len() < 3 {
        out.clear();
    }
    Ok(out)
}

/// Intersection over union of two oriented rectangles.
pub fn iou(a: &ThetaVector, b: &ThetaVector) -> Result<f64> {
    let pa = rect_polygon(a)?;
    let pb = rect_polygon(b)?;
    let inter = polygon_area(&convex_clip(&pa, &pb)?);
    let (aa, ab) = (a.length() * a.width(), b.length() * b.width());
    let inter = inter.min(aa).min(ab);
    Ok((inter / (aa + ab - inter)).clamp(0.0, 1.0))
}

/// Symmetry group used when comparing orientations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    /// Angles equal modulo 2 pi; error in [0, pi].
    Full,
    /// Angles equal modulo pi (a rectangle turned by 180 degrees); error in
    /// [0, pi/2].
    #[default]
    Half,
}

pub fn angle_error(a: f64, b: f64, symmetry: Symmetry) -> f64 {
    let d = wrap_angle(a - b).abs();
    match symmetry {
        Symmetry::Full => d,
        Symmetry::Half => d.min(PI - d),
    }
}

/// Errors of one slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: usize,
    pub pos_err: f64,
    pub range_err: f64,
    pub azimuth_err: f64,
    pub orient_err: f64,
    pub iou: f64,
}

/// Root-mean-square errors and mean IOU over a set of slots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub slots: usize,
    pub pos_rmse: f64,
    pub range_rmse: f64,
    pub azimuth_rmse: f64,
    pub orient_rmse: f64,
    pub mean_iou: f64,
}

impl Aggregates {
    pub fn over<'a, I: IntoIterator<Item = &'a SlotMetrics>>(slots: I) -> Self {
        let mut a = Aggregates::default();
        for s in slots {
            a.slots += 1;
            a.pos_rmse += s.pos_err * s.pos_err;
            a.range_rmse += s.range_err * s.range_err;
            a.azimuth_rmse += s.azimuth_err * s.azimuth_err;
            a.orient_rmse += s.orient_err * s.orient_err;
            a.mean_iou += s.iou;
        }
        if a.slots > 0 {
            let n = a.slots as f64;
            a.pos_rmse = (a.pos_rmse / n).sqrt();
            a.range_rmse = (a.range_rmse / n).sqrt();
            a.azimuth_rmse = (a.azimuth_rmse / n).sqrt();
            a.orient_rmse = (a.orient_rmse / n).sqrt();
            a.mean_iou /= n;
        }
        a
    }
}

/// Per-slot metrics of one episode plus their aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub slots: Vec<SlotMetrics>,
    pub summary: Aggregates,
}

/// Errors of `est` against `truth`. An estimate with a non-positive side
/// covers no area and scores IoU 0; the truth must be a valid rectangle.
pub fn slot_metrics(slot: usize, truth: &ThetaVector, est: &ThetaVector, symmetry: Symmetry) -> Result<SlotMetrics> {
    rect_polygon(truth)?;
    let degenerate = !(est.length() > 0.0 && est.width() > 0.0);
    let pos_err = (truth.x() - est.x()).hypot(truth.y() - est.y());
    let range_err = (truth.x().hypot(truth.y()) - est.x().hypot(est.y())).abs();
    let azimuth_err = angle_error(
        azimuth_of(truth.x(), truth.y()),
        azimuth_of(est.x(), est.y()),
        Symmetry::Full,
    );
    Ok(SlotMetrics {
        slot,
        pos_err,
        range_err,
        azimuth_err,
        orient_err: angle_error(truth.phi(), est.phi(), symmetry),
        iou: if degenerate { 0.0 } else { iou(truth, est)? },
    })
}

/// Compares tracked estimates with the truth slot by slot. `first_slot` is
/// the index reported for element 0.
pub fn evaluate_episode(
    truth: &[ThetaVector],
    tracked: &[ThetaVector],
    first_slot: usize,
    symmetry: Symmetry,
) -> Result<MetricsRecord> {
    check_len("tracked sequence length", truth.len(), tracked.len())?;
    let slots = truth
        .iter()
        .zip(tracked)
        .enumerate()
        .map(|(i, (t, e))| slot_metrics(first_slot + i, t, e, symmetry).map_err(|err| err.at_slot(first_slot + i)))
        .collect::<Result<Vec<_>>>()?;
    let summary = Aggregates::over(&slots);
    Ok(MetricsRecord { slots, summary })
}
