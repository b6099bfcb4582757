//! Planar polygon utilities on (P, Q) points: area, containment, simplicity
//! and boolean intersection of simple, possibly nonconvex polygons.
//!
//! Intersection follows Greiner–Hormann. Degenerate configurations (a
//! vertex on the other polygon's edge, collinear overlapping edges) are
//! removed beforehand by nudging the offending vertices by about 1e-9 of
//! the drawing scale, which changes areas by far less than any tolerance
//! used downstream.

use crate::error::{FlexError, Result};
use crate::scalar::Scalar;

pub type Point<T> = (T, T);

/// Twice the signed area; positive for counterclockwise rings.
pub fn signed_area2<T: Scalar>(poly: &[Point<T>]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let mut s = T::zero();
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    s
}

/// Shoelace area, always ≥ 0; 0 for fewer than three vertices.
pub fn polygon_area<T: Scalar>(poly: &[Point<T>]) -> T {
    signed_area2(poly).abs() / T::lit(2.0)
}

/// Ring in counterclockwise order (copied, reversed if needed).
pub fn to_ccw<T: Scalar>(poly: &[Point<T>]) -> Vec<Point<T>> {
    let mut out = poly.to_vec();
    if signed_area2(&out) < T::zero() {
        out.reverse();
    }
    out
}

/// Area centroid; falls back to the vertex mean for degenerate rings.
pub fn centroid<T: Scalar>(poly: &[Point<T>]) -> Point<T> {
    let n = poly.len();
    let a2 = signed_area2(poly);
    if n < 3 || a2 == T::zero() {
        let k = T::lit(n.max(1) as f64);
        let (sx, sy) = poly
            .iter()
            .fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
        return (sx / k, sy / k);
    }
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        let c = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * c;
        cy += (y0 + y1) * c;
    }
    let d = T::lit(3.0) * a2;
    (cx / d, cy / d)
}

/// Even-odd ray casting. Points exactly on the boundary may go either way;
/// use [`distance_to_boundary`] when that matters.
pub fn point_in_polygon<T: Scalar>(pt: Point<T>, poly: &[Point<T>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let (px, py) = pt;
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) {
            let x_cross = xi + (py - yi) / (yj - yi) * (xj - xi);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segment_distance<T: Scalar>(p: Point<T>, a: Point<T>, b: Point<T>) -> T {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > T::zero() {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

/// Euclidean distance from `pt` to the polygon's boundary.
pub fn distance_to_boundary<T: Scalar>(pt: Point<T>, poly: &[Point<T>]) -> T {
    let n = poly.len();
    match n {
        0 => T::infinity(),
        1 => segment_distance(pt, poly[0], poly[0]),
        _ => (0..n)
            .map(|i| segment_distance(pt, poly[i], poly[(i + 1) % n]))
            .fold(T::infinity(), |a, b| a.min(b)),
    }
}

/// Inside, or within `tol` of the boundary.
pub fn contains_within<T: Scalar>(pt: Point<T>, poly: &[Point<T>], tol: T) -> bool {
    point_in_polygon(pt, poly) || distance_to_boundary(pt, poly) <= tol
}

fn orient<T: Scalar>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment<T: Scalar>(a: Point<T>, b: Point<T>, p: Point<T>) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed-segment intersection test, collinear overlaps included.
fn segments_touch<T: Scalar>(a: Point<T>, b: Point<T>, c: Point<T>, d: Point<T>) -> bool {
    let z = T::zero();
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if ((o1 > z && o2 < z) || (o1 < z && o2 > z)) && ((o3 > z && o4 < z) || (o3 < z && o4 > z)) {
        return true;
    }
    (o1 == z && on_segment(a, b, c))
        || (o2 == z && on_segment(a, b, d))
        || (o3 == z && on_segment(c, d, a))
        || (o4 == z && on_segment(c, d, b))
}

/// Rejects rings whose non-adjacent edges touch, and repeated vertices.
/// Edge `i` runs from vertex `i` to vertex `i + 1`.
pub fn check_simple<T: Scalar>(poly: &[Point<T>]) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Ok(());
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return Err(FlexError::SelfIntersecting {
                first: i,
                second: (i + 1) % n,
            });
        }
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_touch(a, b, poly[j], poly[(j + 1) % n]) {
                return Err(FlexError::SelfIntersecting { first: i, second: j });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
struct Node {
    x: f64,
    y: f64,
    next: usize,
    prev: usize,
    /// Matching node in the other polygon (intersections only).
    neighbour: usize,
    intersect: bool,
    entry: bool,
    visited: bool,
    alpha: f64,
}

/// Greiner–Hormann working state: both rings live in one arena.
struct Arena {
    nodes: Vec<Node>,
}

impl Arena {
    fn ring(&mut self, poly: &[(f64, f64)]) -> usize {
        let start = self.nodes.len();
        let n = poly.len();
        for (k, &(x, y)) in poly.iter().enumerate() {
            self.nodes.push(Node {
                x,
                y,
                next: start + (k + 1) % n,
                prev: start + (k + n - 1) % n,
                neighbour: usize::MAX,
                intersect: false,
                entry: false,
                visited: false,
                alpha: 0.0,
            });
        }
        start
    }

    /// Inserts an intersection node after `from`, ordered by `alpha` among
    /// the intersections already placed on that edge.
    fn insert(&mut self, from: usize, x: f64, y: f64, alpha: f64) -> usize {
        let mut cur = from;
        loop {
            let nx = self.nodes[cur].next;
            if !self.nodes[nx].intersect || self.nodes[nx].alpha > alpha {
                break;
            }
            cur = nx;
        }
        let next = self.nodes[cur].next;
        let id = self.nodes.len();
        self.nodes.push(Node {
            x,
            y,
            next,
            prev: cur,
            neighbour: usize::MAX,
            intersect: true,
            entry: false,
            visited: false,
            alpha,
        });
        self.nodes[cur].next = id;
        self.nodes[next].prev = id;
        id
    }
}

fn as_f64<T: Scalar>(poly: &[Point<T>]) -> Vec<(f64, f64)> {
    poly.iter().map(|&(x, y)| (x.as_f64(), y.as_f64())).collect()
}

fn pt_in(pt: (f64, f64), poly: &[(f64, f64)]) -> bool {
    point_in_polygon(pt, poly)
}

/// Moves vertices of either ring off the other ring's boundary (this also
/// breaks collinear overlaps) so that every crossing is proper.
fn remove_degeneracies(subject: &mut [(f64, f64)], clip: &mut [(f64, f64)], scale: f64) {
    let eps = scale * 1e-10;
    let nudge = scale * 1e-9;
    for attempt in 0..16 {
        let a = nudge_off(clip, subject, eps, nudge, attempt);
        let b = nudge_off(subject, clip, eps, nudge, attempt + 7);
        if !a && !b {
            return;
        }
    }
}

fn nudge_off(
    moving: &mut [(f64, f64)],
    fixed: &[(f64, f64)],
    eps: f64,
    nudge: f64,
    salt: usize,
) -> bool {
    let n = fixed.len();
    let mut moved = false;
    for (k, p) in moving.iter_mut().enumerate() {
        let near = (0..n).any(|i| segment_distance(*p, fixed[i], fixed[(i + 1) % n]) <= eps);
        if near {
            // deterministic direction, different per vertex and attempt
            let ang = 0.7 + 1.3 * k as f64 + 2.1 * salt as f64;
            *p = (p.0 + nudge * ang.cos(), p.1 + nudge * ang.sin());
            moved = true;
        }
    }
    moved
}

fn proper_intersection(
    a: (f64, f64),
    b: (f64, f64),
    c: (f64, f64),
    d: (f64, f64),
) -> Option<(f64, f64)> {
    let r = (b.0 - a.0, b.1 - a.1);
    let s = (d.0 - c.0, d.1 - c.1);
    let den = r.0 * s.1 - r.1 * s.0;
    if den == 0.0 {
        return None;
    }
    let qp = (c.0 - a.0, c.1 - a.1);
    let t = (qp.0 * s.1 - qp.1 * s.0) / den;
    let u = (qp.0 * r.1 - qp.1 * r.0) / den;
    if t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0 {
        Some((t, u))
    } else {
        None
    }
}

/// Intersection of two simple polygons. The result is a list of
/// counterclockwise rings (empty when the polygons are disjoint).
pub fn intersect_polygons<T: Scalar>(a: &[Point<T>], b: &[Point<T>]) -> Result<Vec<Vec<Point<T>>>> {
    check_simple(a)?;
    check_simple(b)?;
    if a.len() < 3 || b.len() < 3 {
        return Ok(vec![]);
    }
    let mut subject = as_f64(&to_ccw(a));
    let mut clip = as_f64(&to_ccw(b));
    let scale = subject
        .iter()
        .chain(clip.iter())
        .fold(1e-300f64, |m, &(x, y)| m.max(x.abs()).max(y.abs()));
    remove_degeneracies(&mut subject, &mut clip, scale);

    let back = |ring: Vec<(f64, f64)>| -> Vec<Point<T>> {
        ring.into_iter().map(|(x, y)| (T::lit(x), T::lit(y))).collect()
    };

    let mut arena = Arena { nodes: Vec::new() };
    let s0 = arena.ring(&subject);
    let c0 = arena.ring(&clip);
    let (ns, nc) = (subject.len(), clip.len());
    let mut found = false;
    for i in 0..ns {
        let (p1, p2) = (subject[i], subject[(i + 1) % ns]);
        for j in 0..nc {
            let (q1, q2) = (clip[j], clip[(j + 1) % nc]);
            if let Some((t, u)) = proper_intersection(p1, p2, q1, q2) {
                let x = p1.0 + t * (p2.0 - p1.0);
                let y = p1.1 + t * (p2.1 - p1.1);
                let is = arena.insert(s0 + i, x, y, t);
                let ic = arena.insert(c0 + j, x, y, u);
                arena.nodes[is].neighbour = ic;
                arena.nodes[ic].neighbour = is;
                found = true;
            }
        }
    }

    if !found {
        // nested or disjoint
        if pt_in(subject[0], &clip) {
            return Ok(vec![back(subject)]);
        }
        if pt_in(clip[0], &subject) {
            return Ok(vec![back(clip)]);
        }
        return Ok(vec![]);
    }

    // entry/exit marking
    for (start, other) in [(s0, &clip), (c0, &subject)] {
        let first = (arena.nodes[start].x, arena.nodes[start].y);
        let mut entry = !pt_in(first, other);
        let mut cur = start;
        loop {
            if arena.nodes[cur].intersect {
                arena.nodes[cur].entry = entry;
                entry = !entry;
            }
            cur = arena.nodes[cur].next;
            if cur == start {
                break;
            }
        }
    }

    let mut rings = Vec::new();
    loop {
        let start = match (0..arena.nodes.len())
            .find(|&k| arena.nodes[k].intersect && !arena.nodes[k].visited)
        {
            Some(k) => k,
            None => break,
        };
        let mut ring: Vec<(f64, f64)> = Vec::new();
        let mut cur = start;
        let mut guard = 0usize;
        loop {
            arena.nodes[cur].visited = true;
            let nb = arena.nodes[cur].neighbour;
            if nb != usize::MAX {
                arena.nodes[nb].visited = true;
            }
            let forward = arena.nodes[cur].entry;
            loop {
                if forward {
                    cur = arena.nodes[cur].next;
                } else {
                    cur = arena.nodes[cur].prev;
                }
                ring.push((arena.nodes[cur].x, arena.nodes[cur].y));
                guard += 1;
                if arena.nodes[cur].intersect || guard > 4 * arena.nodes.len() {
                    break;
                }
            }
            cur = arena.nodes[cur].neighbour;
            if cur == usize::MAX || arena.nodes[cur].visited || guard > 4 * arena.nodes.len() {
                break;
            }
        }
        // drop the closing duplicate
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() >= 3 {
            let ccw = to_ccw(&ring);
            if polygon_area(&ccw) > 0.0 {
                rings.push(back(ccw));
            }
        }
    }
    Ok(rings)
}

/// Intersection of many polygons, folded pairwise. Rings of intermediate
/// results are intersected independently with each further polygon.
pub fn intersect_all<T: Scalar>(polys: &[Vec<Point<T>>]) -> Result<Vec<Vec<Point<T>>>> {
    for p in polys {
        check_simple(p)?;
    }
    let Some((first, rest)) = polys.split_first() else {
        return Ok(vec![]);
    };
    let mut acc = vec![to_ccw(first)];
    for p in rest {
        let mut next = Vec::new();
        for r in &acc {
            next.extend(intersect_polygons(r, p)?);
        }
        acc = next;
        if acc.is_empty() {
            break;
        }
    }
    Ok(acc)
}

/// Convex hull, counterclockwise, without collinear points (monotone chain).
pub fn convex_hull<T: Scalar>(points: &[Point<T>]) -> Vec<Point<T>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point<T>, a: Point<T>, b: Point<T>| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<Point<T>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point<T>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, s: f64) -> Vec<Point<f64>> {
        vec![(x, y), (x + s, y), (x + s, y + s), (x, y + s)]
    }

    #[test]
    fn area_examples() {
        assert_eq!(polygon_area(&square(0.0, 0.0, 1.0)), 1.0);
        assert_eq!(polygon_area(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]), 2.0);
        assert_eq!(polygon_area(&[(0.0, 0.0), (2.0, 0.0)]), 0.0);
        let mut cw = square(0.0, 0.0, 1.0);
        cw.reverse();
        assert_eq!(polygon_area(&cw), 1.0);
        assert!(signed_area2(&cw) < 0.0);
    }

    #[test]
    fn containment() {
        let sq = square(0.0, 0.0, 1.0);
        assert!(point_in_polygon((0.5, 0.5), &sq));
        assert!(!point_in_polygon((1.5, 0.5), &sq));
        let l = vec![(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)];
        assert!(!point_in_polygon((1.5, 1.5), &l));
        assert!(point_in_polygon((0.5, 1.5), &l));
        assert!((distance_to_boundary((0.5, 0.5), &sq) - 0.5).abs() < 1e-15);
        assert!(contains_within((1.05, 0.5), &sq, 0.06));
    }

    #[test]
    fn bow_tie_is_rejected() {
        let bow = vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(matches!(
            check_simple(&bow),
            Err(FlexError::SelfIntersecting { first: 0, second: 2 })
        ));
        assert!(check_simple(&square(0.0, 0.0, 1.0)).is_ok());
    }

    #[test]
    fn offset_squares() {
        let r = intersect_polygons(&square(0.0, 0.0, 1.0), &square(0.5, 0.5, 1.0)).unwrap();
        assert_eq!(r.len(), 1);
        assert!((polygon_area(&r[0]) - 0.25).abs() < 1e-12);
        assert!(signed_area2(&r[0]) > 0.0);
    }

    #[test]
    fn identical_and_nested() {
        let sq = square(0.0, 0.0, 1.0);
        let r = intersect_polygons(&sq, &sq).unwrap();
        assert_eq!(r.len(), 1);
        assert!((polygon_area(&r[0]) - 1.0).abs() < 1e-8);
        let r = intersect_polygons(&sq, &square(0.25, 0.25, 0.5)).unwrap();
        assert!((polygon_area(&r[0]) - 0.25).abs() < 1e-12);
        assert!(intersect_polygons(&sq, &square(3.0, 3.0, 1.0)).unwrap().is_empty());
    }

    #[test]
    fn shared_edge() {
        // clip shares the segment x = 1 with the subject
        let r = intersect_polygons(&square(0.0, 0.0, 1.0), &square(0.5, 0.0, 1.0)).unwrap();
        let a: f64 = r.iter().map(|p| polygon_area(p)).sum();
        assert!((a - 0.5).abs() < 1e-7, "{a}");
    }

    #[test]
    fn nonconvex_split() {
        // a U shape cut by a horizontal bar leaves two pieces
        let u = vec![
            (0.0, 0.0),
            (3.0, 0.0),
            (3.0, 3.0),
            (2.0, 3.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 3.0),
            (0.0, 3.0),
        ];
        let bar = vec![(-1.0, 2.0), (4.0, 2.0), (4.0, 2.5), (-1.0, 2.5)];
        let r = intersect_polygons(&u, &bar).unwrap();
        assert_eq!(r.len(), 2);
        let a: f64 = r.iter().map(|p| polygon_area(p)).sum();
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_polygon_fold_is_identity() {
        let sq = square(0.0, 0.0, 1.0);
        let r = intersect_all(&[sq.clone()]).unwrap();
        assert_eq!(r, vec![sq]);
    }

    #[test]
    fn centroid_of_square() {
        assert_eq!(centroid(&square(0.0, 0.0, 2.0)), (1.0, 1.0));
    }

    #[test]
    fn hull_of_square_with_interior_point() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.0, 1.0), (0.5, 0.0)];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert_eq!(polygon_area(&h), 1.0);
        assert!(signed_area2(&h) > 0.0);
    }
}
