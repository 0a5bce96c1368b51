//! Exact Euclidean distance transforms on uniform grids.
//!
//! Two-pass separable transform over squared distances (row parabolas, then
//! column parabolas), exact up to floating point for cell-center seeds.
//! Periodic grids are handled by tiling the mask 3x3 and keeping the center
//! tile, which is exact because no distance on a torus exceeds one period.

/// Squared index-space distance to the nearest `true` cell, row-major
/// `nx * ny` with x fastest. All-false masks give `f64::INFINITY`.
pub fn edt_sq(mask: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    assert_eq!(mask.len(), nx * ny);
    let mut field: Vec<f64> = mask
        .iter()
        .map(|m| if *m { 0.0 } else { f64::INFINITY })
        .collect();

    let mut scratch = DtScratch::new(nx.max(ny));
    let mut row = vec![0.0; nx];
    for j in 0..ny {
        row.copy_from_slice(&field[j * nx..(j + 1) * nx]);
        scratch.transform(&row, &mut field[j * nx..(j + 1) * nx]);
    }
    let mut col_in = vec![0.0; ny];
    let mut col_out = vec![0.0; ny];
    for i in 0..nx {
        for j in 0..ny {
            col_in[j] = field[j * nx + i];
        }
        scratch.transform(&col_in, &mut col_out);
        for j in 0..ny {
            field[j * nx + i] = col_out[j];
        }
    }
    field
}

/// Distance in physical units to the nearest `true` cell center, with grid
/// spacing `h`. `wrap` treats the grid as periodic in both directions.
pub fn distance_field(mask: &[bool], nx: usize, ny: usize, h: f64, wrap: bool) -> Vec<f64> {
    if !wrap {
        return edt_sq(mask, nx, ny)
            .into_iter()
            .map(|d| d.sqrt() * h)
            .collect();
    }
    let (tx, ty) = (3 * nx, 3 * ny);
    let mut tiled = vec![false; tx * ty];
    for j in 0..ty {
        for i in 0..tx {
            tiled[j * tx + i] = mask[(j % ny) * nx + (i % nx)];
        }
    }
    let big = edt_sq(&tiled, tx, ty);
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            out[j * nx + i] = big[(j + ny) * tx + (i + nx)].sqrt() * h;
        }
    }
    out
}

/// Lower-envelope scratch buffers for the 1D squared-distance transform.
struct DtScratch {
    /// Parabola apex indices.
    apex: Vec<usize>,
    /// Boundaries between consecutive parabolas' domains.
    bound: Vec<f64>,
}

impl DtScratch {
    fn new(n: usize) -> DtScratch {
        DtScratch {
            apex: vec![0; n],
            bound: vec![0.0; n + 1],
        }
    }

    /// `out[q] = min_p (q - p)^2 + f[p]`.
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        if f.iter().all(|v| v.is_infinite()) {
            out[..n].fill(f64::INFINITY);
            return;
        }
        let apex = &mut self.apex;
        let bound = &mut self.bound;
        let mut k = 0usize;
        let mut started = false;
        for q in 0..n {
            if f[q].is_infinite() {
                continue;
            }
            if !started {
                apex[0] = q;
                bound[0] = f64::NEG_INFINITY;
                bound[1] = f64::INFINITY;
                started = true;
                continue;
            }
            loop {
                let p = apex[k];
                // Intersection of parabolas rooted at p and q.
                let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                    / (2.0 * (q as f64 - p as f64));
                if s <= bound[k] {
                    if k == 0 {
                        apex[0] = q;
                        bound[1] = f64::INFINITY;
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    apex[k] = q;
                    bound[k] = s;
                    bound[k + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        let mut k = 0usize;
        for q in 0..n {
            while bound[k + 1] < q as f64 {
                k += 1;
            }
            let p = apex[k];
            let d = q as f64 - p as f64;
            out[q] = d * d + f[p];
        }
    }
}
