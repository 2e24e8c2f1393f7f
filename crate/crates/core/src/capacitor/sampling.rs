use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::DomainGeometry;
use crate::autodiff::Point;
use crate::error::{Error, Result};

const ARC_SEGMENTS: usize = 20_000;

/// Uniform interior points by rejection from the bounding box.
pub fn sample_interior(geom: &DomainGeometry, n: usize, seed: u64) -> Result<Vec<Point>> {
    Ok(sample_interior_counted(geom, n, seed)?.0)
}

/// Like [`sample_interior`], also returning the number of box draws used.
pub fn sample_interior_counted(geom: &DomainGeometry, n: usize, seed: u64) -> Result<(Vec<Point>, usize)> {
    if n == 0 {
        return Err(Error::Config("interior point count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut draws = 0;
    while points.len() < n {
        draws += 1;
        let p =
            [rng.random_range(DomainGeometry::X_MIN..DomainGeometry::X_MAX), rng.random_range(geom.y_min..geom.y_max)];
        if geom.contains(p) {
            points.push(p);
        }
    }
    Ok((points, draws))
}

/// Which grounded piece a boundary point sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundedSegment {
    Left,
    Right,
    Bottom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub grounded: Vec<Point>,
    pub top: Vec<Point>,
    /// Points allocated to (left, right, bottom).
    pub counts: [usize; 3],
    /// Lengths of (left, right, bottom) used for the allocation.
    pub lengths: [f64; 3],
}

/// Split `n` proportionally to `weights` by largest remainder.
fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Grounded points over the sides and bottom plate (by arc length), and
/// top-plate points uniform in x.
pub fn sample_boundary(geom: &DomainGeometry, n_grounded: usize, n_top: usize, seed: u64) -> Result<BoundarySample> {
    if n_grounded == 0 || n_top == 0 {
        return Err(Error::Config("boundary point counts must be positive".into()));
    }
    let (xl, xr) = (DomainGeometry::X_MIN, DomainGeometry::X_MAX);
    let table = geom.lower_arc_table(ARC_SEGMENTS);
    let bottom_len = table.last().expect("non-empty table").1;
    let lengths = [geom.height(xl), geom.height(xr), bottom_len];
    let alloc = allocate(n_grounded, &lengths);
    let counts = [alloc[0], alloc[1], alloc[2]];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grounded = Vec::with_capacity(n_grounded);
    for (x, count) in [(xl, counts[0]), (xr, counts[1])] {
        let (lo, hi) = (geom.lower(x), geom.upper(x));
        for _ in 0..count {
            grounded.push([x, rng.random_range(lo..hi)]);
        }
    }
    for _ in 0..counts[2] {
        let s = rng.random_range(0.0..bottom_len);
        let k = table.partition_point(|&(_, sk)| sk < s).clamp(1, table.len() - 1);
        let ((x0, s0), (x1, s1)) = (table[k - 1], table[k]);
        let x = x0 + (x1 - x0) * (s - s0) / (s1 - s0);
        grounded.push([x, geom.lower(x)]);
    }

    let top = (0..n_top)
        .map(|_| {
            let x = rng.random_range(xl..xr);
            [x, geom.upper(x)]
        })
        .collect();
    Ok(BoundarySample { grounded, top, counts, lengths })
}

/// Which grounded segment `p` lies on, if any (within `tol`).
pub fn grounded_segment(geom: &DomainGeometry, p: Point, tol: f64) -> Option<GroundedSegment> {
    let [x, y] = p;
    let on_span = |x: f64| y >= geom.lower(x) - tol && y <= geom.upper(x) + tol;
    if (x - DomainGeometry::X_MIN).abs() <= tol && on_span(DomainGeometry::X_MIN) {
        Some(GroundedSegment::Left)
    } else if (x - DomainGeometry::X_MAX).abs() <= tol && on_span(DomainGeometry::X_MAX) {
        Some(GroundedSegment::Right)
    } else if (DomainGeometry::X_MIN..=DomainGeometry::X_MAX).contains(&x) && (y - geom.lower(x)).abs() <= tol {
        Some(GroundedSegment::Bottom)
    } else {
        None
    }
}

/// Depth inside the domain at which a rejected measurement candidate is placed.
pub const MEASUREMENT_CLEARANCE: f64 = 0.05;

/// Closed boundary polyline: top plate left to right, right side down,
/// lower plate right to left, left side up.
fn boundary_polyline(geom: &DomainGeometry, per_piece: usize) -> Vec<Point> {
    let (x0, x1) = (DomainGeometry::X_MIN, DomainGeometry::X_MAX);
    let lerp = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / per_piece as f64;
    let mut out = Vec::with_capacity(4 * per_piece);
    out.extend((0..per_piece).map(|i| {
        let x = lerp(x0, x1, i);
        [x, geom.upper(x)]
    }));
    out.extend((0..per_piece).map(|i| [x1, lerp(geom.upper(x1), geom.lower(x1), i)]));
    out.extend((0..per_piece).map(|i| {
        let x = lerp(x1, x0, i);
        [x, geom.lower(x)]
    }));
    out.extend((0..per_piece).map(|i| [x0, lerp(geom.lower(x0), geom.upper(x0), i)]));
    out
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Candidates inside the domain are kept. Any other candidate is moved to the
/// nearest boundary point and then `clearance` along the inward normal.
pub fn relocate_inside(geom: &DomainGeometry, candidate: Point, clearance: f64) -> Result<Point> {
    if geom.contains(candidate) {
        return Ok(candidate);
    }
    let poly = boundary_polyline(geom, 4000);
    let n = poly.len();
    let (i, _) = poly.iter().map(|&b| dist(b, candidate)).enumerate().fold((0, f64::INFINITY), |acc, (i, d)| {
        if d < acc.1 {
            (i, d)
        } else {
            acc
        }
    });
    let (prev, next) = (poly[(i + n - 1) % n], poly[(i + 1) % n]);
    let t = [next[0] - prev[0], next[1] - prev[1]];
    let norm = t[0].hypot(t[1]);
    // the polyline runs clockwise, so the interior is on the right
    let inward = [t[1] / norm, -t[0] / norm];
    let p = [poly[i][0] + clearance * inward[0], poly[i][1] + clearance * inward[1]];
    let depth = poly.iter().map(|&b| dist(b, p)).fold(f64::INFINITY, f64::min);
    if !geom.contains(p) || depth < 0.5 * clearance {
        return Err(Error::Domain(format!(
            "cannot place ({}, {}) at depth {clearance} inside the domain",
            candidate[0], candidate[1]
        )));
    }
    Ok(p)
}

/// Default measurement layout: the four candidates `(±0.5, ±0.25)`, each
/// rejected one moved just inside the nearest stretch of boundary.
pub fn default_measurement_points(geom: &DomainGeometry) -> Vec<Point> {
    [[-0.5, 0.25], [-0.5, -0.25], [0.5, 0.25], [0.5, -0.25]]
        .into_iter()
        .map(|p| relocate_inside(geom, p, MEASUREMENT_CLEARANCE).expect("capacitor has room for every candidate"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacitor::INTERIOR_MARGIN;

    #[test]
    fn interior_points_are_strict_and_reproducible() {
        let g = DomainGeometry::capacitor();
        let a = sample_interior(&g, 500, 11).unwrap();
        assert!(a.iter().all(|&p| g.contains(p)));
        assert_eq!(a, sample_interior(&g, 500, 11).unwrap());
        assert_ne!(a, sample_interior(&g, 500, 12).unwrap());
        assert!(sample_interior(&g, 0, 1).is_err());
        // margin respected
        assert!(a.iter().all(|p| p[1] - g.lower(p[0]) > INTERIOR_MARGIN));
    }

    #[test]
    fn allocation_sums_and_orders() {
        assert_eq!(allocate(10, &[1.0, 1.0, 2.0]), vec![3, 2, 5]);
        assert_eq!(allocate(7, &[1.0]), vec![7]);
        let c = allocate(300, &[1.2, 1.2, 2.31]);
        assert_eq!(c.iter().sum::<usize>(), 300);
    }

    #[test]
    fn boundary_points_lie_on_their_curves() {
        let g = DomainGeometry::capacitor();
        let b = sample_boundary(&g, 300, 100, 5).unwrap();
        assert_eq!(b.grounded.len(), 300);
        assert_eq!(b.top.len(), 100);
        for p in &b.top {
            assert!((p[1] - g.upper(p[0])).abs() <= 1e-12);
        }
        for p in &b.grounded {
            assert!(grounded_segment(&g, *p, 1e-12).is_some(), "{p:?}");
        }
        assert_eq!(b, sample_boundary(&g, 300, 100, 5).unwrap());
    }

    #[test]
    fn default_measurements_are_interior_and_distinct() {
        let g = DomainGeometry::capacitor();
        let m = default_measurement_points(&g);
        assert_eq!(m.len(), 4);
        assert!(m.iter().all(|&p| g.contains(p)));
        assert_eq!(m[0], [-0.5, 0.25]);
        // the others were outside and now sit at the clearance depth
        let poly = boundary_polyline(&g, 4000);
        for &p in &m[1..] {
            let depth = poly.iter().map(|&b| dist(b, p)).fold(f64::INFINITY, f64::min);
            assert!((depth - MEASUREMENT_CLEARANCE).abs() < 2e-3, "{p:?} at depth {depth}");
        }
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(m[i], m[j]);
            }
        }
    }
}
