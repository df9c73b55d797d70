//! Synthetic circuits used as fixtures and as the default desk-scale track.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::track::{Centerline, Track, TrackError, TrackPoint, DEFAULT_WINDOW};

/// The shipped stadium-chicane fixture, as produced by [`stadium_chicane_centerline`].
pub const STADIUM_CHICANE_CSV: &str = include_str!("../tracks/stadium_chicane.csv");

/// One piece of a closed path built from straights and circular arcs.
#[derive(Debug, Clone, Copy)]
pub enum Piece {
    Straight(f64),
    /// Radius and signed turn angle (positive turns left).
    Arc(f64, f64),
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Straight(l) => l,
            Piece::Arc(r, a) => r * a.abs(),
        }
    }
}

/// Samples a closed path of pieces at uniform arc-length spacing, starting at
/// the origin with heading +x. Fails if the pieces do not close.
pub fn sample_path(pieces: &[Piece], spacing: f64, half_width: f64) -> Result<Centerline, TrackError> {
    let total: f64 = pieces.iter().map(Piece::length).sum();
    // pose at the start of every piece
    let mut starts = Vec::with_capacity(pieces.len() + 1);
    let (mut x, mut y, mut h) = (0.0, 0.0, 0.0);
    for piece in pieces {
        starts.push((x, y, h));
        (x, y, h) = advance(*piece, (x, y, h), piece.length());
    }
    let closure = x.hypot(y);
    let turn = (h - 2.0 * PI * (h / (2.0 * PI)).round()).abs();
    if closure > 1e-9 || turn > 1e-9 {
        return Err(TrackError::DegenerateTrack(format!(
            "path does not close (gap {closure:.3e} m, heading {turn:.3e} rad)"
        )));
    }
    let count = (total / spacing).round() as usize;
    let step = total / count as f64;
    let mut points = Vec::with_capacity(count);
    let mut piece_idx = 0;
    let mut piece_start = 0.0;
    for k in 0..count {
        let s = k as f64 * step;
        while s >= piece_start + pieces[piece_idx].length() {
            piece_start += pieces[piece_idx].length();
            piece_idx += 1;
        }
        let (px, py, _) = advance(pieces[piece_idx], starts[piece_idx], s - piece_start);
        points.push(TrackPoint::new(px, py, half_width, half_width));
    }
    Centerline::new(points)
}

fn advance(piece: Piece, (x, y, h): (f64, f64, f64), d: f64) -> (f64, f64, f64) {
    match piece {
        Piece::Straight(_) => (x + d * h.cos(), y + d * h.sin(), h),
        Piece::Arc(r, a) => {
            let sign = a.signum();
            let dh = sign * d / r;
            // center of curvature sits on the left (or right) normal
            let (cx, cy) = (x - sign * r * h.sin(), y + sign * r * h.cos());
            let h2 = h + dh;
            (cx + sign * r * h2.sin(), cy - sign * r * h2.cos(), h2)
        }
    }
}

/// Circle of `radius` sampled at `n` points, counter-clockwise.
pub fn circle(radius: f64, n: usize, half_width: f64) -> Result<Centerline, TrackError> {
    Centerline::new(
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                TrackPoint::new(radius * a.cos(), radius * a.sin(), half_width, half_width)
            })
            .collect(),
    )
}

/// Two straights joined by U-turns of `radius`.
pub fn stadium(straight: f64, radius: f64, half_width: f64, spacing: f64) -> Result<Track, TrackError> {
    let pieces = [Piece::Straight(straight), Piece::Arc(radius, PI), Piece::Straight(straight), Piece::Arc(radius, PI)];
    Track::new(sample_path(&pieces, spacing, half_width)?, DEFAULT_WINDOW)
}

/// The desk-scale circuit: a rounded rectangle (four 90-degree corners of
/// radius 1.2 m) with a gentle chicane on the back straight, about 45 m long,
/// 1.5 m wide, sampled every 0.1 m.
pub fn stadium_chicane_centerline() -> Result<Centerline, TrackError> {
    let corner = Piece::Arc(1.2, FRAC_PI_2);
    let chicane_radius = 3.0;
    let chicane_angle = 0.5;
    let chicane_run = 4.0 * chicane_radius * f64::sin(chicane_angle);
    let back = (14.0 - chicane_run) / 2.0;
    let pieces = [
        Piece::Straight(14.0),
        corner,
        Piece::Straight(4.6),
        corner,
        Piece::Straight(back),
        Piece::Arc(chicane_radius, -chicane_angle),
        Piece::Arc(chicane_radius, 2.0 * chicane_angle),
        Piece::Arc(chicane_radius, -chicane_angle),
        Piece::Straight(back),
        corner,
        Piece::Straight(4.6),
        corner,
    ];
    sample_path(&pieces, 0.1, 0.75)
}

/// The shipped fixture loaded from its CSV.
pub fn stadium_chicane() -> Track {
    Track::from_csv(STADIUM_CHICANE_CSV, DEFAULT_WINDOW, None).expect("shipped fixture is valid")
}
