//! Racetrack centerline processing.
//!
//! A [`Centerline`] is a closed polyline with per-point corridor half-widths.
//! [`CurvatureProfile`] turns it into the normalized smooth curvature (NSC)
//! profile consumed by the planner: discrete curvature, a circular moving
//! average, then min-max normalization. [`Track`] bundles both and offers the
//! continuous view (pose sampling, projection) used inside the optimizer.

use std::f64::consts::PI;

use thiserror::Error;

/// Minimum number of centerline points accepted by [`Centerline::new`].
pub const MIN_POINTS: usize = 8;
/// Default moving-average window, in points.
pub const DEFAULT_WINDOW: usize = 9;
/// Default resampling spacing in meters.
pub const DEFAULT_SPACING: f64 = 0.1;
/// Half-size of the windowed projection search, in points.
pub const SEARCH_WINDOW: usize = 20;

const MIN_SEGMENT: f64 = 1e-9;
const DEGENERATE_SPAN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("degenerate track: {0}")]
    DegenerateTrack(String),
    #[error("numerical degeneracy at point {index}: consecutive points coincide")]
    NumericalDegeneracy { index: usize },
    #[error("invalid moving-average window {window} for {len} points (must be odd and in 1..={len})")]
    InvalidWindow { window: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub x: f64,
    pub y: f64,
    pub half_width_left: f64,
    pub half_width_right: f64,
}

impl TrackPoint {
    pub fn new(x: f64, y: f64, half_width_left: f64, half_width_right: f64) -> Self {
        Self { x, y, half_width_left, half_width_right }
    }
}

/// Closed racetrack centerline with its arc-length table.
#[derive(Debug, Clone)]
pub struct Centerline {
    points: Vec<TrackPoint>,
    arc_lengths: Vec<f64>,
    total_length: f64,
}

impl Centerline {
    /// Validates the points and builds the arc-length table, closing the loop
    /// from the last point back to the first.
    pub fn new(points: Vec<TrackPoint>) -> Result<Self, TrackError> {
        if points.len() < MIN_POINTS {
            return Err(TrackError::DegenerateTrack(format!(
                "{} points, at least {MIN_POINTS} required",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(TrackError::DegenerateTrack(format!("point {i} is not finite")));
            }
            if !(p.half_width_left > 0.0 && p.half_width_right > 0.0) {
                return Err(TrackError::DegenerateTrack(format!("point {i} has a non-positive half-width")));
            }
        }
        let n = points.len();
        let mut arc_lengths = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            arc_lengths.push(acc);
            let a = &points[i];
            let b = &points[(i + 1) % n];
            let len = (b.x - a.x).hypot(b.y - a.y);
            if len <= MIN_SEGMENT {
                return Err(TrackError::DegenerateTrack(format!("points {i} and {} coincide", (i + 1) % n)));
            }
            acc += len;
        }
        Ok(Self { points, arc_lengths, total_length: acc })
    }

    /// Parses the track CSV format: a `x_m,y_m,w_left_m,w_right_m` header,
    /// then one row per point. Lines starting with `#` are comments.
    pub fn from_csv(source: &str) -> Result<Self, TrackError> {
        let mut header_seen = false;
        let mut points = Vec::new();
        for (lineno, line) in source.lines().enumerate() {
            let line_no = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
                if cols != ["x_m", "y_m", "w_left_m", "w_right_m"] {
                    return Err(TrackError::Parse {
                        line: line_no,
                        message: format!("expected header `x_m,y_m,w_left_m,w_right_m`, found `{trimmed}`"),
                    });
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(TrackError::Parse {
                    line: line_no,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let mut vals = [0.0; 4];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f
                    .parse::<f64>()
                    .map_err(|_| TrackError::Parse { line: line_no, message: format!("`{f}` is not a number") })?;
                if !v.is_finite() {
                    return Err(TrackError::Parse { line: line_no, message: format!("`{f}` is not finite") });
                }
            }
            points.push(TrackPoint::new(vals[0], vals[1], vals[2], vals[3]));
        }
        if !header_seen {
            return Err(TrackError::Parse { line: 0, message: "empty track file".into() });
        }
        Self::new(points)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_m,y_m,w_left_m,w_right_m\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.half_width_left, p.half_width_right));
        }
        out
    }

    /// Resamples the closed polyline to uniform arc-length spacing (as close
    /// to `spacing` as an integer point count allows).
    pub fn resampled(&self, spacing: f64) -> Result<Self, TrackError> {
        if !(spacing > 0.0) {
            return Err(TrackError::DegenerateTrack(format!("invalid spacing {spacing}")));
        }
        let count = (self.total_length / spacing).round().max(MIN_POINTS as f64) as usize;
        let step = self.total_length / count as f64;
        let points = (0..count)
            .map(|k| {
                let (i, frac) = self.locate(k as f64 * step);
                let a = &self.points[i];
                let b = &self.points[(i + 1) % self.len()];
                TrackPoint::new(
                    lerp(a.x, b.x, frac),
                    lerp(a.y, b.y, frac),
                    lerp(a.half_width_left, b.half_width_left, frac),
                    lerp(a.half_width_right, b.half_width_right, frac),
                )
            })
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Always true: every centerline describes a circuit.
    pub fn closed(&self) -> bool {
        true
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc_lengths
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn segment_length(&self, i: usize) -> f64 {
        let next = if i + 1 == self.len() { self.total_length } else { self.arc_lengths[i + 1] };
        next - self.arc_lengths[i]
    }

    /// Wraps an unwrapped progress value into `[0, total_length)`.
    pub fn wrap_s(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.total_length);
        if w >= self.total_length {
            0.0
        } else {
            w
        }
    }

    /// Segment index and fractional position of arc length `s`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let s = self.wrap_s(s);
        let i = self.arc_lengths.partition_point(|&a| a <= s).saturating_sub(1);
        let frac = ((s - self.arc_lengths[i]) / self.segment_length(i)).clamp(0.0, 1.0);
        (i, frac)
    }

    fn dist2(&self, i: usize, x: f64, y: f64) -> f64 {
        let p = &self.points[i];
        (p.x - x).powi(2) + (p.y - y).powi(2)
    }

    fn full_scan(&self, x: f64, y: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.len() {
            let d = self.dist2(i, x, y);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Nearest centerline point to `(x, y)`.
    ///
    /// With a progress hint the search covers [`SEARCH_WINDOW`] points on each
    /// side of the hint; a minimum on the window edge falls back to a full
    /// scan. Ties go to the lowest index.
    pub fn project(&self, x: f64, y: f64, s_hint: Option<f64>) -> Projection {
        let n = self.len();
        let index = match s_hint {
            Some(hint) if 2 * SEARCH_WINDOW + 1 < n => {
                let (center, frac) = self.locate(hint);
                let center = if frac > 0.5 { (center + 1) % n } else { center };
                let mut best = (f64::INFINITY, usize::MAX, 0usize);
                for offset in 0..=2 * SEARCH_WINDOW {
                    let i = (center + n + offset - SEARCH_WINDOW) % n;
                    let d = self.dist2(i, x, y);
                    if d < best.0 || (d == best.0 && i < best.1) {
                        best = (d, i, offset);
                    }
                }
                if best.2 == 0 || best.2 == 2 * SEARCH_WINDOW {
                    self.full_scan(x, y)
                } else {
                    best.1
                }
            }
            _ => self.full_scan(x, y),
        };
        Projection { s: self.arc_lengths[index], index }
    }

    /// Arc length of the foot point of `(x, y)` on the polyline, refined on the
    /// two segments adjacent to the nearest vertex.
    pub fn project_continuous(&self, x: f64, y: f64, s_hint: Option<f64>) -> f64 {
        let n = self.len();
        let vertex = self.project(x, y, s_hint).index;
        let mut best = (f64::INFINITY, self.arc_lengths[vertex]);
        for seg in [(vertex + n - 1) % n, vertex] {
            let a = &self.points[seg];
            let b = &self.points[(seg + 1) % n];
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0);
            let d = (a.x + t * dx - x).powi(2) + (a.y + t * dy - y).powi(2);
            if d < best.0 {
                best = (d, self.wrap_s(self.arc_lengths[seg] + t * self.segment_length(seg)));
            }
        }
        best.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub index: usize,
}

/// Discrete curvature of a point sequence using backward first and second
/// differences. With `wrap` the sequence is a closed loop; otherwise the first
/// two entries (which lack a second difference) copy entry 2.
pub fn discrete_curvature(xy: &[[f64; 2]], wrap: bool) -> Result<Vec<f64>, TrackError> {
    let n = xy.len();
    let diff = |i: usize| -> [f64; 2] {
        let prev = (i + n - 1) % n;
        [xy[i][0] - xy[prev][0], xy[i][1] - xy[prev][1]]
    };
    let first = if wrap { 0 } else { 2.min(n) };
    let mut kappa = vec![0.0; n];
    #[allow(clippy::needless_range_loop)]
    for i in first..n {
        let d1 = diff(i);
        let d1_prev = diff((i + n - 1) % n);
        let d2 = [d1[0] - d1_prev[0], d1[1] - d1_prev[1]];
        let denom2 = d1[0] * d1[0] + d1[1] * d1[1];
        if denom2 < 1e-12 {
            return Err(TrackError::NumericalDegeneracy { index: i });
        }
        kappa[i] = (d1[0] * d2[1] - d2[0] * d1[1]).abs() / denom2.powf(1.5);
    }
    if !wrap && n > 2 {
        kappa[0] = kappa[2];
        kappa[1] = kappa[2];
    }
    Ok(kappa)
}

/// Raw curvature of every centerline point, wrapping around the circuit.
pub fn compute_raw_curvature(cl: &Centerline) -> Result<Vec<f64>, TrackError> {
    let xy: Vec<[f64; 2]> = cl.points().iter().map(|p| [p.x, p.y]).collect();
    discrete_curvature(&xy, true)
}

/// Centered moving average with circular wrap.
pub fn smooth_curvature(raw: &[f64], window: usize) -> Result<Vec<f64>, TrackError> {
    let n = raw.len();
    if window == 0 || window.is_multiple_of(2) || window > n {
        return Err(TrackError::InvalidWindow { window, len: n });
    }
    let half = window / 2;
    let inv = 1.0 / window as f64;
    Ok((0..n).map(|i| (0..window).map(|m| raw[(i + n + m - half) % n]).sum::<f64>() * inv).collect())
}

/// Min-max normalization to `[0, 1]`. A (numerically) constant input maps to
/// all zeros.
pub fn normalize_curvature(smoothed: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(smoothed);
    let span = hi - lo;
    if !(span > DEGENERATE_SPAN * hi.abs().max(1.0)) {
        return vec![0.0; smoothed.len()];
    }
    smoothed.iter().map(|&k| ((k - lo) / span).clamp(0.0, 1.0)).collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Raw, smoothed and normalized curvature of a centerline.
#[derive(Debug, Clone)]
pub struct CurvatureProfile {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub normalized: Vec<f64>,
    pub window: usize,
    pub k_min: f64,
    pub k_max: f64,
}

impl CurvatureProfile {
    pub fn compute(cl: &Centerline, window: usize) -> Result<Self, TrackError> {
        let raw = compute_raw_curvature(cl)?;
        let smoothed = smooth_curvature(&raw, window)?;
        let normalized = normalize_curvature(&smoothed);
        let (k_min, k_max) = min_max(&smoothed);
        Ok(Self { raw, smoothed, normalized, window, k_min, k_max })
    }
}

/// Interpolated view of the centerline at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub x: f64,
    pub y: f64,
    /// Direction of the bracketing segment, in `(-pi, pi]`.
    pub heading: f64,
    pub nsc: f64,
    pub s: f64,
}

/// Sample plus the quantities the optimizer differentiates through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub pose: PoseSample,
    pub half_width_left: f64,
    pub half_width_right: f64,
    /// d(half_width_left)/ds on the bracketing segment.
    pub d_left_ds: f64,
    /// d(half_width_right)/ds on the bracketing segment.
    pub d_right_ds: f64,
}

/// A centerline together with its curvature profile.
#[derive(Debug, Clone)]
pub struct Track {
    pub centerline: Centerline,
    pub profile: CurvatureProfile,
}

impl Track {
    pub fn new(centerline: Centerline, window: usize) -> Result<Self, TrackError> {
        let profile = CurvatureProfile::compute(&centerline, window)?;
        Ok(Self { centerline, profile })
    }

    /// Loads a CSV track, optionally resampling (`spacing > 0`) before the
    /// curvature pipeline runs.
    pub fn from_csv(source: &str, window: usize, spacing: Option<f64>) -> Result<Self, TrackError> {
        let mut cl = Centerline::from_csv(source)?;
        if let Some(sp) = spacing.filter(|&sp| sp > 0.0) {
            cl = cl.resampled(sp)?;
        }
        Self::new(cl, window)
    }

    pub fn total_length(&self) -> f64 {
        self.centerline.total_length()
    }

    pub fn sample_at_s(&self, s: f64) -> PoseSample {
        self.reference(s).pose
    }

    pub fn reference(&self, s: f64) -> ReferencePoint {
        let cl = &self.centerline;
        let n = cl.len();
        let (i, frac) = cl.locate(s);
        let j = (i + 1) % n;
        let a = &cl.points[i];
        let b = &cl.points[j];
        let seg = cl.segment_length(i);
        let nsc = &self.profile.normalized;
        ReferencePoint {
            pose: PoseSample {
                x: lerp(a.x, b.x, frac),
                y: lerp(a.y, b.y, frac),
                heading: wrap_heading((b.y - a.y).atan2(b.x - a.x)),
                nsc: lerp(nsc[i], nsc[j], frac),
                s: cl.wrap_s(s),
            },
            half_width_left: lerp(a.half_width_left, b.half_width_left, frac),
            half_width_right: lerp(a.half_width_right, b.half_width_right, frac),
            d_left_ds: (b.half_width_left - a.half_width_left) / seg,
            d_right_ds: (b.half_width_right - a.half_width_right) / seg,
        }
    }

    /// NSC of the centerline point nearest to `(x, y)`.
    pub fn nsc_at_position(&self, x: f64, y: f64, s_hint: Option<f64>) -> f64 {
        let proj = self.centerline.project(x, y, s_hint);
        self.profile.normalized[proj.index]
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn wrap_heading(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracks;

    fn circle_points(radius: f64, n: usize) -> Vec<TrackPoint> {
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                TrackPoint::new(radius * a.cos(), radius * a.sin(), 0.5, 0.5)
            })
            .collect()
    }

    #[test]
    fn unit_square_is_too_short() {
        let pts = vec![
            TrackPoint::new(0.0, 0.0, 0.5, 0.5),
            TrackPoint::new(1.0, 0.0, 0.5, 0.5),
            TrackPoint::new(1.0, 1.0, 0.5, 0.5),
            TrackPoint::new(0.0, 1.0, 0.5, 0.5),
        ];
        assert!(matches!(Centerline::new(pts), Err(TrackError::DegenerateTrack(_))));
    }

    #[test]
    fn octagon_perimeter() {
        let cl = Centerline::new(circle_points(1.0, 8)).unwrap();
        let chord_oracle = 8.0 * 2.0 * (PI / 8.0).sin();
        assert!((cl.total_length() - chord_oracle).abs() < 1e-12);
        assert!((cl.total_length() - 6.1229).abs() < 1e-4);
        assert_eq!(cl.arc_lengths()[0], 0.0);
        assert!(cl.arc_lengths().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn empty_and_malformed_csv() {
        assert!(matches!(Centerline::from_csv(""), Err(TrackError::Parse { .. })));
        let bad = "x_m,y_m,w_left_m,w_right_m\n0,0,1,1\n1,zero,1,1\n";
        match Centerline::from_csv(bad) {
            Err(TrackError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short_row = "x_m,y_m,w_left_m,w_right_m\n0,0,1\n";
        assert!(matches!(Centerline::from_csv(short_row), Err(TrackError::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_comments_and_rejections() {
        let mut src = String::from("# a comment\nx_m,y_m,w_left_m,w_right_m\n");
        for p in circle_points(2.0, 10) {
            src.push_str(&format!("# pt\n{},{},{},{}\n", p.x, p.y, 0.4, 0.6));
        }
        let cl = Centerline::from_csv(&src).unwrap();
        assert_eq!(cl.len(), 10);
        assert_eq!(cl.points()[3].half_width_right, 0.6);

        let mut dup = circle_points(2.0, 10);
        dup[4] = dup[3];
        assert!(matches!(Centerline::new(dup), Err(TrackError::DegenerateTrack(_))));

        let mut zero = circle_points(2.0, 10);
        zero[2].half_width_left = 0.0;
        assert!(matches!(Centerline::new(zero), Err(TrackError::DegenerateTrack(_))));
    }

    #[test]
    fn csv_round_trip() {
        let cl = Centerline::new(circle_points(1.5, 40)).unwrap();
        let back = Centerline::from_csv(&cl.to_csv()).unwrap();
        assert_eq!(cl.points(), back.points());
    }

    #[test]
    fn straight_line_has_zero_interior_curvature() {
        let xy: Vec<[f64; 2]> = (0..20).map(|i| [0.3 * i as f64, 0.1 * i as f64]).collect();
        let k = discrete_curvature(&xy, false).unwrap();
        for v in &k[2..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn circle_curvature_matches_inverse_radius() {
        for (r, expected) in [(2.0, 0.5), (0.5, 2.0)] {
            let cl = Centerline::new(circle_points(r, 200)).unwrap();
            for k in compute_raw_curvature(&cl).unwrap() {
                assert!(((k - expected) / expected).abs() < 0.01, "{k} vs {expected}");
            }
        }
    }

    #[test]
    fn coincident_points_are_numerically_degenerate() {
        let xy = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(discrete_curvature(&xy, true), Err(TrackError::NumericalDegeneracy { index: 2 }));
    }

    #[test]
    fn smoothing_examples() {
        let raw = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(smooth_curvature(&raw, 1).unwrap(), raw.to_vec());
        let s = smooth_curvature(&raw, 3).unwrap();
        let expected = [8.0 / 3.0, 2.0, 3.0, 4.0, 10.0 / 3.0];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = smooth_curvature(&[0.7; 6], 5).unwrap();
        assert!(c.iter().all(|&v| (v - 0.7).abs() < 1e-15));
        for w in [0, 2, 7] {
            assert!(matches!(smooth_curvature(&raw, w), Err(TrackError::InvalidWindow { .. })));
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_curvature(&[1.0, 3.0, 5.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_curvature(&[0.7, 0.7, 0.7]), vec![0.0, 0.0, 0.0]);
        let n = normalize_curvature(&[0.5, 0.2, 0.2, 1.1]);
        let expected = [1.0 / 3.0, 0.0, 0.0, 1.0];
        for (a, b) in n.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_at_s_examples() {
        let track = tracks::stadium(6.0, 2.0, 0.75, 0.1).unwrap();
        let cl = &track.centerline;
        let p0 = cl.points()[0];
        let p1 = cl.points()[1];
        let s0 = track.sample_at_s(0.0);
        assert_eq!((s0.x, s0.y), (p0.x, p0.y));
        assert!((s0.heading - (p1.y - p0.y).atan2(p1.x - p0.x)).abs() < 1e-15);
        let wrapped = track.sample_at_s(cl.total_length());
        assert_eq!(s0, wrapped);

        let i = 57;
        let (a, b) = (cl.points()[i], cl.points()[i + 1]);
        let mid = track.sample_at_s(cl.arc_lengths()[i] + 0.5 * cl.segment_length(i));
        assert!((mid.x - 0.5 * (a.x + b.x)).abs() < 1e-12);
        assert!((mid.y - 0.5 * (a.y + b.y)).abs() < 1e-12);
        let nsc = &track.profile.normalized;
        assert!((mid.nsc - 0.5 * (nsc[i] + nsc[i + 1])).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let track = tracks::stadium(6.0, 2.0, 0.75, 0.1).unwrap();
        let cl = &track.centerline;
        for i in [0, 13, 100, cl.len() - 1] {
            let p = cl.points()[i];
            let proj = cl.project(p.x, p.y, None);
            assert_eq!(proj.index, i);
            assert_eq!(proj.s, cl.arc_lengths()[i]);
            // small offset along the local normal
            let q = cl.points()[(i + 1) % cl.len()];
            let (tx, ty) = (q.x - p.x, q.y - p.y);
            let norm = tx.hypot(ty);
            let (nx, ny) = (-ty / norm, tx / norm);
            let hint = Some(cl.arc_lengths()[i] + 0.3);
            assert_eq!(cl.project(p.x + 0.01 * nx, p.y + 0.01 * ny, hint).index, i);
        }
        // equidistant from points 10 and 11 on the first straight
        let (a, b) = (cl.points()[10], cl.points()[11]);
        let (mx, my) = (0.5 * (a.x + b.x), 0.5 * (a.y + b.y) + 0.2);
        assert_eq!(cl.project(mx, my, None).index, 10);
        assert_eq!(cl.project(mx, my, Some(cl.arc_lengths()[11])).index, 10);
    }

    #[test]
    fn continuous_projection_refines_between_vertices() {
        let track = tracks::stadium(6.0, 2.0, 0.75, 0.1).unwrap();
        let cl = &track.centerline;
        let s = cl.arc_lengths()[20] + 0.37 * cl.segment_length(20);
        let p = track.sample_at_s(s);
        let back = cl.project_continuous(p.x, p.y + 0.1, Some(s));
        assert!((back - s).abs() < 1e-9);
    }

    #[test]
    fn resampling_is_uniform() {
        let track = tracks::stadium(5.0, 1.5, 0.6, 0.23).unwrap();
        let re = track.centerline.resampled(0.1).unwrap();
        let step = re.total_length() / re.len() as f64;
        assert!((step - 0.1).abs() < 0.01);
        assert!((re.total_length() - track.total_length()).abs() < 0.05);
    }
}
