//! Uniform grids and sampled fields.
//!
//! A [`GridManifold`] is a plane box or a flat torus with one spacing `h` in
//! both directions. Scalar fields live at nodes; derivatives use central
//! differences inside and second-order one-sided stencils on a plane box
//! frame, so every stencil is exact on quadratics. The discrete Poisson
//! bracket built from these stencils is antisymmetric bit for bit because
//! both orders multiply the same factor pairs.

use crate::error::Error;
use crate::geometry::{v, Vec2};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Rectangle with boundary nodes; one-sided stencils at the frame.
    PlaneBox,
    /// Periodic in both directions; node `nx` is node 0 again.
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifold {
    pub kind: GridKind,
    pub origin: Vec2,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl GridManifold {
    /// Box `[x0, x1] x [y0, y1]` with `nx` nodes across. The height must be
    /// a node multiple of the resulting spacing.
    pub fn plane_box(x0: f64, y0: f64, x1: f64, y1: f64, nx: usize) -> Result<Arc<GridManifold>> {
        if nx < 4 || !(x1 > x0) || !(y1 > y0) {
            return Err(Error::Grid(format!(
                "invalid box [{x0}, {x1}] x [{y0}, {y1}] with nx = {nx}"
            )));
        }
        let h = (x1 - x0) / (nx - 1) as f64;
        let rows = (y1 - y0) / h;
        if (rows - rows.round()).abs() > 1e-9 * rows.max(1.0) {
            return Err(Error::Grid(format!(
                "box height {} is not a node multiple of spacing {h}",
                y1 - y0
            )));
        }
        let ny = rows.round() as usize + 1;
        if ny < 4 {
            return Err(Error::Grid("box needs at least 4 rows".into()));
        }
        Ok(Arc::new(GridManifold {
            kind: GridKind::PlaneBox,
            origin: v(x0, y0),
            nx,
            ny,
            h,
        }))
    }

    /// Torus of periods `lx`, `ly` with `nx` nodes per x period.
    pub fn torus(x0: f64, y0: f64, lx: f64, ly: f64, nx: usize) -> Result<Arc<GridManifold>> {
        if nx < 4 || !(lx > 0.0) || !(ly > 0.0) {
            return Err(Error::Grid(format!(
                "invalid torus periods {lx} x {ly} with nx = {nx}"
            )));
        }
        let h = lx / nx as f64;
        let rows = ly / h;
        if (rows - rows.round()).abs() > 1e-9 * rows.max(1.0) {
            return Err(Error::Grid(format!(
                "torus period {ly} is not a node multiple of spacing {h}"
            )));
        }
        let ny = rows.round() as usize;
        if ny < 4 {
            return Err(Error::Grid("torus needs at least 4 rows".into()));
        }
        Ok(Arc::new(GridManifold {
            kind: GridKind::Torus,
            origin: v(x0, y0),
            nx,
            ny,
            h,
        }))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        self.origin + v(i as f64 * self.h, j as f64 * self.h)
    }

    pub fn is_wrapping(&self) -> bool {
        self.kind == GridKind::Torus
    }

    /// Physical extent covered by nodes (for the torus, one full period).
    pub fn extent(&self) -> (Vec2, Vec2) {
        let span = match self.kind {
            GridKind::PlaneBox => v((self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h),
            GridKind::Torus => v(self.nx as f64 * self.h, self.ny as f64 * self.h),
        };
        (self.origin, self.origin + span)
    }

    /// True for frame nodes of a plane box; no node qualifies on a torus.
    #[inline]
    pub fn on_frame(&self, i: usize, j: usize) -> bool {
        self.kind == GridKind::PlaneBox
            && (i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1)
    }

    /// Three-point derivative stencil along one axis of `n` nodes, as
    /// `(index, coefficient)` pairs; coefficients include the `1/h` factor.
    fn stencil(&self, i: usize, n: usize) -> [(usize, f64); 3] {
        let inv = 1.0 / self.h;
        match self.kind {
            GridKind::Torus => [
                ((i + n - 1) % n, -0.5 * inv),
                ((i + 1) % n, 0.5 * inv),
                (i, 0.0),
            ],
            GridKind::PlaneBox => {
                if i == 0 {
                    [(0, -1.5 * inv), (1, 2.0 * inv), (2, -0.5 * inv)]
                } else if i == n - 1 {
                    [(n - 1, 1.5 * inv), (n - 2, -2.0 * inv), (n - 3, 0.5 * inv)]
                } else {
                    [(i - 1, -0.5 * inv), (i + 1, 0.5 * inv), (i, 0.0)]
                }
            }
        }
    }

    /// d/dx of node values, row-major output.
    pub fn grad_x(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len());
        let nx = self.nx;
        let mut out = vec![0.0; self.len()];
        out.par_chunks_mut(nx)
            .zip(f.par_chunks(nx))
            .for_each(|(orow, frow)| {
                for i in 0..nx {
                    let st = self.stencil(i, nx);
                    orow[i] = st[0].1 * frow[st[0].0]
                        + st[1].1 * frow[st[1].0]
                        + st[2].1 * frow[st[2].0];
                }
            });
        out
    }

    /// d/dy of node values, row-major output.
    pub fn grad_y(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len());
        let (nx, ny) = (self.nx, self.ny);
        let mut out = vec![0.0; self.len()];
        out.par_chunks_mut(nx).enumerate().for_each(|(j, orow)| {
            let st = self.stencil(j, ny);
            for i in 0..nx {
                orow[i] = st[0].1 * f[st[0].0 * nx + i]
                    + st[1].1 * f[st[1].0 * nx + i]
                    + st[2].1 * f[st[2].0 * nx + i];
            }
        });
        out
    }

    /// Transpose of [`Self::grad_x`] applied to a cotangent; sequential
    /// scatter so the result does not depend on thread scheduling.
    pub fn grad_x_adjoint(&self, cot: &[f64]) -> Vec<f64> {
        assert_eq!(cot.len(), self.len());
        let nx = self.nx;
        let mut out = vec![0.0; self.len()];
        for j in 0..self.ny {
            let row = j * nx;
            for i in 0..nx {
                let c = cot[row + i];
                if c == 0.0 {
                    continue;
                }
                for (k, w) in self.stencil(i, nx) {
                    out[row + k] += w * c;
                }
            }
        }
        out
    }

    /// Transpose of [`Self::grad_y`] applied to a cotangent.
    pub fn grad_y_adjoint(&self, cot: &[f64]) -> Vec<f64> {
        assert_eq!(cot.len(), self.len());
        let (nx, ny) = (self.nx, self.ny);
        let mut out = vec![0.0; self.len()];
        for j in 0..ny {
            let st = self.stencil(j, ny);
            for i in 0..nx {
                let c = cot[j * nx + i];
                if c == 0.0 {
                    continue;
                }
                for (k, w) in st {
                    out[k * nx + i] += w * c;
                }
            }
        }
        out
    }

    /// Bilinear interpolation cell and weights for a physical point.
    /// Returns the four node indices and their weights. Outside a plane box
    /// the point is clamped to the box before interpolating.
    pub fn bilinear(&self, q: Vec2) -> ([usize; 4], [f64; 4]) {
        let rel = (q - self.origin) / self.h;
        let (fx, fy) = match self.kind {
            GridKind::Torus => (
                rel.x.rem_euclid(self.nx as f64),
                rel.y.rem_euclid(self.ny as f64),
            ),
            GridKind::PlaneBox => (
                rel.x.clamp(0.0, (self.nx - 1) as f64),
                rel.y.clamp(0.0, (self.ny - 1) as f64),
            ),
        };
        let i0 = (fx.floor() as usize).min(self.nx - 1);
        let j0 = (fy.floor() as usize).min(self.ny - 1);
        let (i1, j1) = match self.kind {
            GridKind::Torus => ((i0 + 1) % self.nx, (j0 + 1) % self.ny),
            GridKind::PlaneBox => ((i0 + 1).min(self.nx - 1), (j0 + 1).min(self.ny - 1)),
        };
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        (
            [
                self.idx(i0, j0),
                self.idx(i1, j0),
                self.idx(i0, j1),
                self.idx(i1, j1),
            ],
            [
                (1.0 - tx) * (1.0 - ty),
                tx * (1.0 - ty),
                (1.0 - tx) * ty,
                tx * ty,
            ],
        )
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<GridManifold>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<GridManifold>) -> ScalarField {
        let values = vec![0.0; grid.len()];
        ScalarField { grid, values }
    }

    pub fn from_fn(grid: Arc<GridManifold>, f: impl Fn(Vec2) -> f64 + Sync) -> ScalarField {
        let nx = grid.nx;
        let g = grid.clone();
        let mut values = vec![0.0; grid.len()];
        values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = f(g.node(i, j));
            }
        });
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Arc<GridManifold>, values: Vec<f64>) -> ScalarField {
        assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Arc<GridManifold> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .par_iter()
            .map(|v| v.abs())
            .reduce(|| 0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .par_iter()
            .copied()
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    pub fn interp(&self, q: Vec2) -> f64 {
        let (idx, w) = self.grid.bilinear(q);
        idx.iter()
            .zip(w.iter())
            .map(|(k, wk)| self.values[*k] * wk)
            .sum()
    }

    /// Node values of the bracket `{self, other} = f_x g_y - f_y g_x`.
    pub fn poisson_bracket(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(*self.grid, *other.grid, "bracket needs matching grids");
        let fx = self.grid.grad_x(&self.values);
        let fy = self.grid.grad_y(&self.values);
        let gx = self.grid.grad_x(&other.values);
        let gy = self.grid.grad_y(&other.values);
        let values: Vec<f64> = fx
            .par_iter()
            .zip(fy.par_iter())
            .zip(gx.par_iter().zip(gy.par_iter()))
            .map(|((fx, fy), (gx, gy))| fx * gy - fy * gx)
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Writes `x,y,value` rows with stable formatting, nodes in row-major
    /// order, no timestamps or environment data.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "x,y,value")?;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let p = self.grid.node(i, j);
                writeln!(w, "{:.12e},{:.12e},{:.12e}", p.x, p.y, self.at(i, j))?;
            }
        }
        Ok(())
    }
}

/// A grid-sampled map into the plane, the pair `(phi1, phi2)`.
#[derive(Debug, Clone)]
pub struct VectorMapField {
    pub phi1: ScalarField,
    pub phi2: ScalarField,
    /// Constant value required on and beyond the frame for compactly
    /// supported maps; `None` when no support condition is imposed.
    pub basepoint: Option<Vec2>,
}

impl VectorMapField {
    pub fn from_fn(grid: Arc<GridManifold>, f: impl Fn(Vec2) -> Vec2 + Sync) -> VectorMapField {
        let phi1 = ScalarField::from_fn(grid.clone(), |q| f(q).x);
        let phi2 = ScalarField::from_fn(grid, |q| f(q).y);
        VectorMapField {
            phi1,
            phi2,
            basepoint: None,
        }
    }

    pub fn with_basepoint(mut self, c: Vec2) -> VectorMapField {
        self.basepoint = Some(c);
        self
    }

    pub fn grid(&self) -> &Arc<GridManifold> {
        self.phi1.grid()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Vec2 {
        v(self.phi1.at(i, j), self.phi2.at(i, j))
    }

    pub fn interp(&self, q: Vec2) -> Vec2 {
        v(self.phi1.interp(q), self.phi2.interp(q))
    }

    /// Applies a pointwise transform to the values; the transform may reject
    /// points outside its domain, which aborts the whole composition.
    pub fn postcompose(&self, f: impl Fn(Vec2) -> Result<Vec2> + Sync) -> Result<VectorMapField> {
        let grid = self.grid().clone();
        let n = grid.len();
        let pairs: Vec<Result<Vec2>> = (0..n)
            .into_par_iter()
            .map(|k| f(v(self.phi1.values()[k], self.phi2.values()[k])))
            .collect();
        let mut p1 = vec![0.0; n];
        let mut p2 = vec![0.0; n];
        for (k, r) in pairs.into_iter().enumerate() {
            let q = r?;
            p1[k] = q.x;
            p2[k] = q.y;
        }
        let basepoint = match self.basepoint {
            Some(c) => Some(f(c)?),
            None => None,
        };
        Ok(VectorMapField {
            phi1: ScalarField::from_values(grid.clone(), p1),
            phi2: ScalarField::from_values(grid, p2),
            basepoint,
        })
    }

    /// `{phi1, phi2}` at the nodes.
    pub fn bracket(&self) -> ScalarField {
        self.phi1.poisson_bracket(&self.phi2)
    }

    /// Largest deviation of frame nodes from the declared basepoint;
    /// zero on a torus or when no basepoint is set.
    pub fn frame_deviation(&self) -> f64 {
        let Some(c) = self.basepoint else { return 0.0 };
        let grid = self.grid();
        let mut worst = 0.0f64;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.on_frame(i, j) {
                    worst = worst.max(self.at(i, j).dist(c));
                }
            }
        }
        worst
    }

    /// Deterministic binary snapshot: little-endian header and raw values.
    pub fn write_binary(&self, mut w: impl std::io::Write) -> Result<()> {
        let grid = self.grid();
        w.write_all(b"PBWIT01\0")?;
        let kind = match grid.kind {
            GridKind::PlaneBox => 0u32,
            GridKind::Torus => 1u32,
        };
        w.write_all(&kind.to_le_bytes())?;
        w.write_all(&(grid.nx as u64).to_le_bytes())?;
        w.write_all(&(grid.ny as u64).to_le_bytes())?;
        w.write_all(&grid.origin.x.to_le_bytes())?;
        w.write_all(&grid.origin.y.to_le_bytes())?;
        w.write_all(&grid.h.to_le_bytes())?;
        match self.basepoint {
            Some(c) => {
                w.write_all(&1u32.to_le_bytes())?;
                w.write_all(&c.x.to_le_bytes())?;
                w.write_all(&c.y.to_le_bytes())?;
            }
            None => {
                w.write_all(&0u32.to_le_bytes())?;
                w.write_all(&0f64.to_le_bytes())?;
                w.write_all(&0f64.to_le_bytes())?;
            }
        }
        for val in self.phi1.values().iter().chain(self.phi2.values()) {
            w.write_all(&val.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl std::io::Read) -> Result<VectorMapField> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"PBWIT01\0" {
            return Err(Error::Serde("not a map snapshot (bad magic)".into()));
        }
        let mut u32b = [0u8; 4];
        let mut u64b = [0u8; 8];
        let mut f64b = [0u8; 8];
        r.read_exact(&mut u32b)?;
        let kind = match u32::from_le_bytes(u32b) {
            0 => GridKind::PlaneBox,
            1 => GridKind::Torus,
            k => return Err(Error::Serde(format!("unknown grid kind {k}"))),
        };
        r.read_exact(&mut u64b)?;
        let nx = u64::from_le_bytes(u64b) as usize;
        r.read_exact(&mut u64b)?;
        let ny = u64::from_le_bytes(u64b) as usize;
        let mut next_f64 = |r: &mut dyn std::io::Read| -> Result<f64> {
            r.read_exact(&mut f64b)?;
            Ok(f64::from_le_bytes(f64b))
        };
        let ox = next_f64(&mut r)?;
        let oy = next_f64(&mut r)?;
        let h = next_f64(&mut r)?;
        r.read_exact(&mut u32b)?;
        let has_base = u32::from_le_bytes(u32b) == 1;
        let bx = next_f64(&mut r)?;
        let by = next_f64(&mut r)?;
        if nx < 4 || ny < 4 || !(h > 0.0) || nx.saturating_mul(ny) > 1 << 28 {
            return Err(Error::Serde(format!("implausible grid {nx} x {ny}, h = {h}")));
        }
        let grid = Arc::new(GridManifold {
            kind,
            origin: v(ox, oy),
            nx,
            ny,
            h,
        });
        let n = grid.len();
        let mut read_vals = |r: &mut dyn std::io::Read| -> Result<Vec<f64>> {
            let mut vals = vec![0.0; n];
            for slot in vals.iter_mut() {
                r.read_exact(&mut f64b)?;
                *slot = f64::from_le_bytes(f64b);
            }
            Ok(vals)
        };
        let p1 = read_vals(&mut r)?;
        let p2 = read_vals(&mut r)?;
        Ok(VectorMapField {
            phi1: ScalarField::from_values(grid.clone(), p1),
            phi2: ScalarField::from_values(grid, p2),
            basepoint: if has_base { Some(v(bx, by)) } else { None },
        })
    }
}
