//! Slow, independent reference implementations used as test oracles.
//!
//! Nothing here depends on the crates under test: polygons are plain
//! `(x, y)` slices and every routine takes the most direct route to its
//! answer, trading speed for obviousness.

pub type Pt = (f64, f64);

/// Shoelace area, sign ignored.
pub fn shoelace(poly: &[Pt]) -> f64 {
    let n = poly.len();
    let s: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    s.abs() / 2.0
}

/// `x` intervals where the horizontal line at `y` is inside `poly`
/// (even-odd rule).
fn row_spans(poly: &[Pt], y: f64) -> Vec<(f64, f64)> {
    let n = poly.len();
    let mut xs = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.1 <= y) != (b.1 <= y) {
            xs.push(a.0 + (y - a.1) / (b.1 - a.1) * (b.0 - a.0));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.chunks_exact(2).map(|c| (c[0], c[1])).collect()
}

fn overlap(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            total += (a1.min(b1) - a0.max(b0)).max(0.0);
        }
    }
    total
}

fn span_len(s: &[(f64, f64)]) -> f64 {
    s.iter().map(|(a, b)| b - a).sum()
}

/// IoU by scanning `rows` horizontal lines through the joint bounding box
/// and measuring inside-lengths per line.
pub fn raster_iou(a: &[Pt], b: &[Pt], rows: usize) -> f64 {
    let ys = a.iter().chain(b).map(|p| p.1);
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let dy = (y1 - y0) / rows as f64;
    let (mut inter, mut area_a, mut area_b) = (0.0, 0.0, 0.0);
    for r in 0..rows {
        let y = y0 + (r as f64 + 0.5) * dy;
        let (sa, sb) = (row_spans(a, y), row_spans(b, y));
        inter += overlap(&sa, &sb);
        area_a += span_len(&sa);
        area_b += span_len(&sb);
    }
    let union = area_a + area_b - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Area covered by a polygon on a `rows`-line scan.
pub fn raster_area(poly: &[Pt], rows: usize) -> f64 {
    let (y0, y1) = poly
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let dy = (y1 - y0) / rows as f64;
    (0..rows)
        .map(|r| span_len(&row_spans(poly, y0 + (r as f64 + 0.5) * dy)) * dy)
        .sum()
}

/// Smallest enclosing rectangle found by trying the direction of every
/// pair of input points (a superset of the hull edges). Returns
/// `(area, (side_a, side_b))` with `side_a <= side_b`.
pub fn min_rect_by_pairs(points: &[Pt]) -> (f64, (f64, f64)) {
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for i in 0..points.len() {
        for j in 0..points.len() {
            let (dx, dy) = (points[j].0 - points[i].0, points[j].1 - points[i].1);
            let len = dx.hypot(dy);
            if i == j || len == 0.0 {
                continue;
            }
            let (ux, uy) = (dx / len, dy / len);
            let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for p in points {
                let u = p.0 * ux + p.1 * uy;
                let v = -p.0 * uy + p.1 * ux;
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            let (a, b) = (u1 - u0, v1 - v0);
            if a * b < best.0 {
                best = (a * b, (a.min(b), a.max(b)));
            }
        }
    }
    best
}

/// Greedy NMS written from its definition: repeatedly take the best
/// remaining candidate (highest score, then lowest index) and discard
/// every remaining one overlapping it by more than `threshold`.
pub fn brute_force_nms(scores: &[f64], iou: impl Fn(usize, usize) -> f64, threshold: f64) -> Vec<usize> {
    let mut alive: Vec<bool> = vec![true; scores.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..scores.len() {
            if alive[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        kept.push(b);
        alive[b] = false;
        for j in 0..scores.len() {
            if alive[j] && iou(b, j) > threshold {
                alive[j] = false;
            }
        }
    }
    kept
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

/// Size of a maximum bipartite matching, found by trying every assignment
/// of left vertices (exponential; keep inputs small).
pub fn exhaustive_max_matching(adj: &[Vec<bool>]) -> usize {
    fn go(adj: &[Vec<bool>], row: usize, used: &mut Vec<bool>) -> usize {
        if row == adj.len() {
            return 0;
        }
        let mut best = go(adj, row + 1, used);
        for (c, &ok) in adj[row].iter().enumerate() {
            if ok && !used[c] {
                used[c] = true;
                best = best.max(1 + go(adj, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = adj.iter().map(Vec::len).max().unwrap_or(0);
    go(adj, 0, &mut vec![false; cols])
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: [Pt; 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

    #[test]
    fn raster_matches_simple_shapes() {
        assert!((raster_area(&UNIT, 1000) - 1.0).abs() < 1e-9);
        let tri = [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)];
        assert!((raster_area(&tri, 1000) - 2.0).abs() < 1e-5);
        let shifted = UNIT.map(|(x, y)| (x + 0.5, y));
        assert!((raster_iou(&UNIT, &shifted, 1000) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn pair_rect_of_diamond() {
        let d = [(1.0, 0.0), (2.0, 1.0), (1.0, 2.0), (0.0, 1.0)];
        let (area, sides) = min_rect_by_pairs(&d);
        assert!((area - 2.0).abs() < 1e-12);
        assert!((sides.0 - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn brute_nms_and_matching() {
        let kept = brute_force_nms(&[0.5, 0.9, 0.9], |a, b| if a + b == 3 { 1.0 } else { 0.0 }, 0.5);
        assert_eq!(kept, vec![1, 0]);
        assert_eq!(exhaustive_max_matching(&[vec![true, true], vec![true, false]]), 2);
        let g = central_difference(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }
}
