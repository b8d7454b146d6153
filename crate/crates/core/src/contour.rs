//! Marching-squares iso-lines on a regular 2-D grid.

use std::collections::HashMap;
use std::fmt::Write as _;

/// Scalar samples on a rectangular lattice, row-major with rows along y.
#[derive(Clone, Debug)]
pub struct Field2 {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// `values[j * nx + i]` at `origin + (i·dx, j·dy)`. NaN cells are skipped.
    pub values: Vec<f64>,
}

impl Field2 {
    pub fn sample(origin: [f64; 2], spacing: [f64; 2], nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(origin[0] + i as f64 * spacing[0], origin[1] + j as f64 * spacing[1]));
            }
        }
        Field2 {
            origin,
            spacing,
            nx,
            ny,
            values,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.spacing[0], self.origin[1] + j as f64 * self.spacing[1]]
    }
}

/// Lattice edge key: (i, j, horizontal?) identifies the edge starting at
/// node (i, j). Shared keys let segments be stitched exactly.
type EdgeKey = (usize, usize, bool);

fn crossing(f: &Field2, level: f64, key: EdgeKey) -> [f64; 2] {
    let (i, j, horiz) = key;
    let (i2, j2) = if horiz { (i + 1, j) } else { (i, j + 1) };
    let (a, b) = (f.at(i, j) - level, f.at(i2, j2) - level);
    let t = if a == b { 0.5 } else { a / (a - b) };
    let (p, q) = (f.point(i, j), f.point(i2, j2));
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn cell_segments(f: &Field2, level: f64, i: usize, j: usize, out: &mut Vec<(EdgeKey, EdgeKey)>) {
    let v = [f.at(i, j), f.at(i + 1, j), f.at(i + 1, j + 1), f.at(i, j + 1)];
    if v.iter().any(|x| x.is_nan()) {
        return;
    }
    let above = v.map(|x| x > level);
    let code = above.iter().enumerate().fold(0, |c, (k, &b)| c | ((b as u8) << k));
    // edges: 0 bottom, 1 right, 2 top, 3 left
    let edge = |e: u8| -> EdgeKey {
        match e {
            0 => (i, j, true),
            1 => (i + 1, j, false),
            2 => (i, j + 1, true),
            _ => (i, j, false),
        }
    };
    let pairs: &[(u8, u8)] = match code {
        0 | 15 => &[],
        1 | 14 => &[(3, 0)],
        2 | 13 => &[(0, 1)],
        3 | 12 => &[(3, 1)],
        4 | 11 => &[(1, 2)],
        6 | 9 => &[(0, 2)],
        7 | 8 => &[(3, 2)],
        5 | 10 => {
            let center = v.iter().sum::<f64>() / 4.0 > level;
            // corners 0 and 2 share a side of the level in codes 5 and 10
            if (code == 5) == center {
                &[(3, 2), (0, 1)]
            } else {
                &[(3, 0), (1, 2)]
            }
        }
        _ => unreachable!(),
    };
    out.extend(pairs.iter().map(|&(a, b)| (edge(a), edge(b))));
}

/// Iso-lines at `level`, stitched into polylines. Closed loops repeat their
/// first point at the end.
pub fn contour_lines(f: &Field2, level: f64) -> Vec<Vec<[f64; 2]>> {
    if f.nx < 2 || f.ny < 2 {
        return Vec::new();
    }
    let mut segs = Vec::new();
    for j in 0..f.ny - 1 {
        for i in 0..f.nx - 1 {
            cell_segments(f, level, i, j, &mut segs);
        }
    }
    let mut at: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (n, (a, b)) in segs.iter().enumerate() {
        at.entry(*a).or_default().push(n);
        at.entry(*b).or_default().push(n);
    }
    let mut used = vec![false; segs.len()];
    let mut lines = Vec::new();
    let next_from = |key: EdgeKey, used: &[bool]| at[&key].iter().copied().find(|&s| !used[s]);
    // open chains first start at edges touched by one segment
    let mut starts: Vec<usize> = (0..segs.len())
        .filter(|&n| at[&segs[n].0].len() == 1 || at[&segs[n].1].len() == 1)
        .collect();
    starts.extend(0..segs.len());
    for s in starts {
        if used[s] {
            continue;
        }
        used[s] = true;
        let (a, b) = segs[s];
        let (mut head, mut tail) = if at[&a].len() == 1 { (a, b) } else { (b, a) };
        let mut keys = vec![head, tail];
        while let Some(n) = next_from(tail, &used) {
            used[n] = true;
            let (p, q) = segs[n];
            tail = if p == tail { q } else { p };
            keys.push(tail);
        }
        if tail != head {
            // extend backwards for chains started mid-way
            let mut back = Vec::new();
            while let Some(n) = next_from(head, &used) {
                used[n] = true;
                let (p, q) = segs[n];
                head = if p == head { q } else { p };
                back.push(head);
            }
            back.reverse();
            back.extend(keys);
            keys = back;
        }
        lines.push(keys.into_iter().map(|k| crossing(f, level, k)).collect());
    }
    lines
}

/// Text form of a set of contours:
///
/// ```text
/// # bladetrap-contour v1
/// level <value>
/// line <n>
/// <x> <y>      (n lines)
/// ```
pub fn emit_contours(levels: &[(f64, Vec<Vec<[f64; 2]>>)]) -> String {
    let mut s = String::from("# bladetrap-contour v1\n");
    for (level, lines) in levels {
        let _ = writeln!(s, "level {level:e}");
        for line in lines {
            let _ = writeln!(s, "line {}", line.len());
            for p in line {
                let _ = writeln!(s, "{:e} {:e}", p[0], p[1]);
            }
        }
    }
    s
}

/// Least-squares conic `a x² + b xy + c y² + d x + e y = 1` through points
/// taken relative to `center`. Returns `[a, b, c, d, e]`.
pub fn fit_conic(points: &[[f64; 2]], center: [f64; 2], scale: f64) -> Option<[f64; 5]> {
    if points.len() < 5 {
        return None;
    }
    let mut ata = nalgebra::Matrix5::<f64>::zeros();
    let mut atb = nalgebra::Vector5::<f64>::zeros();
    for p in points {
        let (x, y) = ((p[0] - center[0]) / scale, (p[1] - center[1]) / scale);
        let row = nalgebra::Vector5::new(x * x, x * y, y * y, x, y);
        ata += row * row.transpose();
        atb += row;
    }
    let sol = ata.lu().solve(&atb)?;
    let s2 = scale * scale;
    Some([sol[0] / s2, sol[1] / s2, sol[2] / s2, sol[3] / scale, sol[4] / scale])
}

/// Angle (degrees, [0, 180)) of the long axis of an ellipse given as a
/// conic, or `None` when the conic is not an ellipse.
pub fn ellipse_long_axis(conic: &[f64; 5]) -> Option<f64> {
    let [a, b, c, ..] = *conic;
    let q = nalgebra::Matrix2::new(a, 0.5 * b, 0.5 * b, c);
    let eig = q.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let k = if eig.eigenvalues[0] < eig.eigenvalues[1] { 0 } else { 1 };
    let v = eig.eigenvectors.column(k);
    Some(v[1].atan2(v[0]).to_degrees().rem_euclid(180.0))
}
