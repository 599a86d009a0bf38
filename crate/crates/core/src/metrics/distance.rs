//! Exact Euclidean distance transform and percentile Hausdorff distance.

use crate::grid::Mask;
use crate::IMAGE_SIZE;

const FAR: f64 = 1e20;

/// Lower envelope of parabolas over one row or column of squared distances.
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance from every pixel to the nearest set pixel of `mask`.
/// All entries are huge when the mask is empty.
pub fn squared_distance_transform(mask: &Mask) -> Vec<f64> {
    let n = IMAGE_SIZE;
    let mut grid: Vec<f64> = mask.as_slice().iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    let mut col = vec![0.0; n];
    let mut out = vec![0.0; n];
    for c in 0..n {
        for r in 0..n {
            col[r] = grid[r * n + c];
        }
        edt_1d(&col, &mut out);
        for r in 0..n {
            grid[r * n + c] = out[r];
        }
    }
    let mut row = vec![0.0; n];
    for r in 0..n {
        row.copy_from_slice(&grid[r * n..(r + 1) * n]);
        edt_1d(&row, &mut out);
        grid[r * n..(r + 1) * n].copy_from_slice(&out);
    }
    grid
}

/// Nearest-rank percentile of an unsorted sample, `q` in (0, 1].
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    values[idx]
}

/// 95th percentile over `a` of the distance to the nearest pixel of `b`.
pub fn directed_hausdorff95(a: &Mask, b: &Mask) -> f64 {
    let dt = squared_distance_transform(b);
    let mut d: Vec<f64> = a.pixels().map(|p| dt[p.index()].sqrt()).collect();
    if d.is_empty() {
        return 0.0;
    }
    nearest_rank(&mut d, 0.95)
}

pub fn hausdorff95_pair(a: &Mask, b: &Mask) -> f64 {
    directed_hausdorff95(a, b).max(directed_hausdorff95(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pixel;
    use proptest::prelude::*;

    fn brute(mask: &Mask) -> Vec<f64> {
        let set: Vec<Pixel> = mask.pixels().collect();
        (0..IMAGE_SIZE * IMAGE_SIZE)
            .map(|i| {
                let p = Pixel::from_index(i);
                set.iter()
                    .map(|q| {
                        let dr = p.row as f64 - q.row as f64;
                        let dc = p.col as f64 - q.col as f64;
                        dr * dr + dc * dc
                    })
                    .fold(FAR, f64::min)
            })
            .collect()
    }

    #[test]
    fn single_pixels_five_apart() {
        let a = Mask::from_pixels([Pixel::new(10, 10)]);
        let b = Mask::from_pixels([Pixel::new(13, 14)]);
        assert_eq!(hausdorff95_pair(&a, &b), 5.0);
        assert_eq!(hausdorff95_pair(&a, &a), 0.0);
    }

    #[test]
    fn nearest_rank_index() {
        let mut v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 0.95), 19.0);
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 0.95), 95.0);
        assert_eq!(nearest_rank(&mut [7.0], 0.95), 7.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn transform_matches_brute_force(pts in proptest::collection::vec((0usize..90, 0usize..90), 1..12)) {
            let m = Mask::from_pixels(pts.into_iter().map(|(r, c)| Pixel::new(r, c)));
            prop_assert_eq!(squared_distance_transform(&m), brute(&m));
        }
    }
}
