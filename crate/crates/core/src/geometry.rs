//! Planar multipolygon operations used by dissolve, clipping, buffering and
//! the area metrics. Boolean overlay and outward offsetting are delegated to
//! `geo` (backed by `i_overlay`); ring checks and point coverage live here.

use geo::algorithm::buffer::{BufferStyle, LineJoin};
use geo::orient::{Direction, Orient};
use geo::{Area, BooleanOps, Buffer, Coord, LineString, Polygon};

use crate::error::{Error, Result};

pub type MultiPolygon = geo::MultiPolygon<f64>;

pub const DEFAULT_ARC_SEGMENTS: u32 = 16;

pub fn empty() -> MultiPolygon {
    geo::MultiPolygon(Vec::new())
}

/// Unsigned area. Parts are assumed not to overlap, which holds for every
/// overlay result.
pub fn area(g: &MultiPolygon) -> f64 {
    g.unsigned_area()
}

pub fn is_empty(g: &MultiPolygon) -> bool {
    g.0.is_empty()
}

/// Union of any number of multipolygons, resolving overlaps between and
/// within inputs.
pub fn union_all<'a>(parts: impl IntoIterator<Item = &'a MultiPolygon>) -> MultiPolygon {
    let oriented: Vec<Polygon<f64>> = parts
        .into_iter()
        .flat_map(|mp| mp.0.iter())
        .map(|p| p.orient(Direction::Default))
        .collect();
    if oriented.is_empty() {
        return empty();
    }
    geo::unary_union(oriented.iter())
}

pub fn union(a: &MultiPolygon, b: &MultiPolygon) -> MultiPolygon {
    if is_empty(a) {
        return normalize(b);
    }
    if is_empty(b) {
        return normalize(a);
    }
    a.union(b)
}

pub fn intersection(a: &MultiPolygon, b: &MultiPolygon) -> MultiPolygon {
    if is_empty(a) || is_empty(b) {
        return empty();
    }
    a.intersection(b)
}

/// Resolve self-overlaps inside a single multipolygon.
pub fn normalize(g: &MultiPolygon) -> MultiPolygon {
    union_all(std::iter::once(g))
}

/// Outward offset by `distance` with round joins, `arc_segments` segments
/// per quarter circle. A zero distance returns the input untouched.
pub fn buffer(g: &MultiPolygon, distance: f64, arc_segments: u32) -> Result<MultiPolygon> {
    if !distance.is_finite() || distance < 0.0 {
        return Err(Error::input(format!(
            "buffer distance must be finite and >= 0, got {distance}"
        )));
    }
    if arc_segments < 4 {
        return Err(Error::input(format!(
            "arc_segments must be >= 4, got {arc_segments}"
        )));
    }
    if distance == 0.0 || is_empty(g) {
        return Ok(g.clone());
    }
    // i_overlay spends one segment per `angle` radians of arc; nudge the
    // step down so rounding never drops a segment on a full quarter.
    let step = std::f64::consts::FRAC_PI_2 / f64::from(arc_segments) * (1.0 - 1e-9);
    let style = BufferStyle::new(distance).line_join(LineJoin::Round(step));
    Ok(g.buffer_with_style(style))
}

/// Closed-region membership: boundary points count as inside.
pub fn covers_point(g: &MultiPolygon, p: Coord<f64>) -> bool {
    distance_to_point(g, p) == 0.0
}

/// Euclidean distance from `p` to the closed region `g` (0 inside or on the
/// boundary).
pub fn distance_to_point(g: &MultiPolygon, p: Coord<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for poly in &g.0 {
        let mut boundary = f64::INFINITY;
        for ring in std::iter::once(poly.exterior()).chain(poly.interiors()) {
            boundary = boundary.min(ring_distance(ring, p));
        }
        if boundary == 0.0 {
            return 0.0;
        }
        let inside = ring_contains(poly.exterior(), p)
            && !poly.interiors().iter().any(|h| ring_contains(h, p));
        if inside {
            return 0.0;
        }
        best = best.min(boundary);
    }
    best
}

fn ring_distance(ring: &LineString<f64>, p: Coord<f64>) -> f64 {
    ring.0
        .windows(2)
        .map(|w| segment_distance(w[0], w[1], p))
        .fold(f64::INFINITY, f64::min)
}

fn segment_distance(a: Coord<f64>, b: Coord<f64>, p: Coord<f64>) -> f64 {
    let ab = b - a;
    let ap = p - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap.x * ab.x + ap.y * ab.y) / len2).clamp(0.0, 1.0)
    };
    let closest = Coord {
        x: a.x + t * ab.x,
        y: a.y + t * ab.y,
    };
    // Exact zero when p lies on a vertex or an axis-aligned edge.
    if closest == p {
        return 0.0;
    }
    if orient2d(a, b, p) == 0.0 && t > 0.0 && t < 1.0 {
        return 0.0;
    }
    (p.x - closest.x).hypot(p.y - closest.y)
}

/// Even-odd crossing test for the ring interior (boundary handled by the
/// caller).
fn ring_contains(ring: &LineString<f64>, p: Coord<f64>) -> bool {
    let mut inside = false;
    for w in ring.0.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn orient2d(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Outcome of checking a single ring.
#[derive(Debug, Clone, PartialEq)]
pub struct RingCheck {
    pub ring: Vec<Coord<f64>>,
    pub auto_closed: bool,
}

/// Close the ring if needed, then require at least four points, finite
/// coordinates and no self-intersection.
pub fn check_ring(points: &[Coord<f64>]) -> Result<RingCheck> {
    if points.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
        return Err(Error::Geometry("ring has non-finite coordinates".into()));
    }
    let mut ring = points.to_vec();
    let mut auto_closed = false;
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            ring.push(first);
            auto_closed = true;
        }
    }
    if ring.len() < 4 {
        return Err(Error::Geometry(format!(
            "ring needs at least 4 points after closing, has {}",
            ring.len()
        )));
    }
    if let Some((i, j)) = find_self_intersection(&ring) {
        return Err(Error::Geometry(format!(
            "ring self-intersects between segments {i} and {j}"
        )));
    }
    Ok(RingCheck { ring, auto_closed })
}

/// First pair of non-adjacent ring segments that touch, if any. Segments are
/// swept in order of their minimum x so typical rings avoid the quadratic
/// worst case.
pub fn find_self_intersection(ring: &[Coord<f64>]) -> Option<(usize, usize)> {
    let n = ring.len().saturating_sub(1);
    if n < 3 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    let min_x = |i: usize| ring[i].x.min(ring[i + 1].x);
    let max_x = |i: usize| ring[i].x.max(ring[i + 1].x);
    order.sort_by(|&a, &b| min_x(a).total_cmp(&min_x(b)));

    for (pos, &i) in order.iter().enumerate() {
        let hi = max_x(i);
        for &j in &order[pos + 1..] {
            if min_x(j) > hi {
                break;
            }
            let (a, b) = (i.min(j), i.max(j));
            let adjacent = b == a + 1 || (a == 0 && b == n - 1);
            if adjacent {
                if collinear_overlap(ring[a], ring[a + 1], ring[b], ring[b + 1]) {
                    return Some((a, b));
                }
                continue;
            }
            if segments_touch(ring[a], ring[a + 1], ring[b], ring[b + 1]) {
                return Some((a, b));
            }
        }
    }
    None
}

fn on_segment(a: Coord<f64>, b: Coord<f64>, p: Coord<f64>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_touch(p1: Coord<f64>, p2: Coord<f64>, q1: Coord<f64>, q2: Coord<f64>) -> bool {
    let d1 = orient2d(q1, q2, p1);
    let d2 = orient2d(q1, q2, p2);
    let d3 = orient2d(p1, p2, q1);
    let d4 = orient2d(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Adjacent segments share one endpoint; they are only degenerate when they
/// fold back over each other.
fn collinear_overlap(a0: Coord<f64>, a1: Coord<f64>, b0: Coord<f64>, b1: Coord<f64>) -> bool {
    if orient2d(a0, a1, b0) != 0.0 || orient2d(a0, a1, b1) != 0.0 {
        return false;
    }
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    // Shared vertex is a1 == b0 (or the wrap-around pair); reversed
    // direction means the path doubles back.
    d1.x * d2.x + d1.y * d2.y < 0.0
}

/// Build a polygon from already-checked rings (first is the exterior).
pub fn polygon_from_rings(mut rings: Vec<Vec<Coord<f64>>>) -> Polygon<f64> {
    let exterior = LineString(rings.remove(0));
    let interiors = rings.into_iter().map(LineString).collect();
    Polygon::new(exterior, interiors)
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> MultiPolygon {
    geo::MultiPolygon(vec![geo::Rect::new(
        Coord { x: x0, y: y0 },
        Coord { x: x1, y: y1 },
    )
    .to_polygon()])
}

/// Apply `f` to every coordinate.
pub fn map_coords(g: &MultiPolygon, f: impl Fn(f64, f64) -> (f64, f64)) -> MultiPolygon {
    use geo::MapCoords;
    g.map_coords(|c| {
        let (x, y) = f(c.x, c.y);
        Coord { x, y }
    })
}

/// Every vertex of `g`, in ring order.
pub fn vertices(g: &MultiPolygon) -> impl Iterator<Item = Coord<f64>> + '_ {
    g.0.iter().flat_map(|p| {
        std::iter::once(p.exterior())
            .chain(p.interiors())
            .flat_map(|r| r.0.iter().copied())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64) -> Coord<f64> {
        Coord { x, y }
    }

    #[test]
    fn half_shift_intersection_is_half() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        let b = rect(0.5, 0.0, 1.5, 1.0);
        assert_eq!(area(&intersection(&a, &b)), 0.5);
        assert_eq!(area(&intersection(&a, &a)), 1.0);
        assert!(is_empty(&intersection(&a, &rect(2.0, 0.0, 3.0, 1.0))));
    }

    #[test]
    fn union_all_resolves_overlap() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        let b = rect(0.5, 0.0, 1.5, 1.0);
        let u = union_all([&a, &b]);
        assert_eq!(area(&u), 1.5);
        assert_eq!(u.0.len(), 1);
    }

    #[test]
    fn union_all_handles_mixed_winding() {
        let ccw = rect(0.0, 0.0, 1.0, 1.0);
        let cw = geo::MultiPolygon(vec![ccw.0[0].orient(Direction::Reversed)]);
        let shifted = map_coords(&cw, |x, y| (x + 3.0, y));
        assert_eq!(area(&union_all([&ccw, &shifted])), 2.0);
    }

    #[test]
    fn buffer_zero_is_identity() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        assert_eq!(buffer(&a, 0.0, 16).unwrap(), a);
    }

    #[test]
    fn buffer_rejects_negative() {
        assert!(buffer(&rect(0.0, 0.0, 1.0, 1.0), -1.0, 16).is_err());
        assert!(buffer(&rect(0.0, 0.0, 1.0, 1.0), 1.0, 3).is_err());
    }

    #[test]
    fn buffer_merges_close_squares() {
        let two = geo::MultiPolygon(vec![
            rect(0.0, 0.0, 1.0, 1.0).0.remove(0),
            rect(2.0, 0.0, 3.0, 1.0).0.remove(0),
        ]);
        let b = buffer(&two, 0.6, 16).unwrap();
        assert_eq!(b.0.len(), 1);
    }

    #[test]
    fn buffer_vertex_count_follows_arc_segments() {
        let b = buffer(&rect(0.0, 0.0, 1.0, 1.0), 0.5, 16).unwrap();
        // 4 edges + 4 corners x 16 arc segments, plus the closing point.
        let n = b.0[0].exterior().0.len();
        assert!((65..=70).contains(&n), "{n}");
    }

    #[test]
    fn point_coverage_is_closed() {
        let sq = rect(0.0, 0.0, 1.0, 1.0);
        assert!(covers_point(&sq, c(0.5, 0.5)));
        assert!(covers_point(&sq, c(1.0, 0.3)));
        assert!(covers_point(&sq, c(0.0, 0.0)));
        assert!(!covers_point(&sq, c(1.0 + 1e-12, 0.3)));
        assert!((distance_to_point(&sq, c(2.0, 0.5)) - 1.0).abs() < 1e-15);
        assert!((distance_to_point(&sq, c(4.0, 5.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn holes_are_outside() {
        let ring = |x0: f64, y0: f64, x1: f64, y1: f64| {
            vec![c(x0, y0), c(x1, y0), c(x1, y1), c(x0, y1), c(x0, y0)]
        };
        let donut = geo::MultiPolygon(vec![polygon_from_rings(vec![
            ring(0.0, 0.0, 4.0, 4.0),
            ring(1.0, 1.0, 3.0, 3.0),
        ])]);
        assert!(!covers_point(&donut, c(2.0, 2.0)));
        assert!(covers_point(&donut, c(1.0, 2.0)));
        assert!((distance_to_point(&donut, c(2.0, 2.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ring_checks() {
        let open = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0)];
        let fixed = check_ring(&open).unwrap();
        assert!(fixed.auto_closed);
        assert_eq!(fixed.ring.len(), 5);

        let bowtie = [c(0.0, 0.0), c(1.0, 1.0), c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)];
        assert!(check_ring(&bowtie).is_err());

        let short = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        assert!(check_ring(&short).is_err());

        let spike = [c(0.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 0.0)];
        assert!(check_ring(&spike).is_err());

        let touching = [
            c(0.0, 0.0),
            c(2.0, 0.0),
            c(2.0, 2.0),
            c(1.0, 0.0),
            c(0.0, 2.0),
            c(0.0, 0.0),
        ];
        assert!(check_ring(&touching).is_err());
    }
}
