use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec2::{Axis, Vec2};

/// Uniform tensor grid in the plane. A one-dimensional grid is a grid with
/// a single node along one axis; that axis is then ignored by interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub origin: Vec2<T>,
    pub spacing: [T; 2],
    pub counts: [usize; 2],
    /// Periodic axis with its period, if any.
    pub periodic: Option<(Axis, T)>,
}

/// Bilinear interpolation stencil: up to four `(node, weight)` pairs.
pub type Stencil<T> = [(u32, T); 4];

impl<T: Real> Grid<T> {
    pub fn new(
        origin: Vec2<T>,
        spacing: [T; 2],
        counts: [usize; 2],
        periodic: Option<(Axis, T)>,
    ) -> Result<Self> {
        for k in 0..2 {
            if counts[k] == 0 {
                return Err(Error::InvalidArguments(format!("grid axis {} has no nodes", k + 1)));
            }
            if !(spacing[k] > T::zero()) {
                return Err(Error::InvalidArguments(format!(
                    "grid spacing on axis {} must be positive",
                    k + 1
                )));
            }
        }
        if let Some((axis, period)) = periodic {
            let k = axis_index(axis);
            let span = spacing[k] * T::from_usize_lossy(counts[k]);
            if ((span - period) / period).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) {
                return Err(Error::InvalidArguments(format!(
                    "periodic axis {}: counts * spacing = {span} differs from period {period}",
                    k + 1
                )));
            }
        }
        if counts[0].saturating_mul(counts[1]) > u32::MAX as usize {
            return Err(Error::InvalidArguments("grid too large".into()));
        }
        Ok(Self {
            origin,
            spacing,
            counts,
            periodic,
        })
    }

    /// `n` nodes from `lo` to `hi` inclusive along `x1`.
    pub fn line(lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidArguments(format!(
                "line grid needs n >= 2 and hi > lo (got n = {n}, [{lo}, {hi}])"
            )));
        }
        let h = (hi - lo) / T::from_usize_lossy(n - 1);
        Self::new(Vec2::new(lo, T::zero()), [h, T::one()], [n, 1], None)
    }

    /// `n1` nodes on `[lo, hi]` in `x1` times `n2` cells of one period in
    /// `x2` starting at `x2_origin`, periodic in `x2`.
    pub fn strip(lo: T, hi: T, n1: usize, x2_origin: T, period: T, n2: usize) -> Result<Self> {
        if n1 < 2 || !(hi > lo) {
            return Err(Error::InvalidArguments(format!(
                "strip grid needs n1 >= 2 and hi > lo (got n1 = {n1}, [{lo}, {hi}])"
            )));
        }
        if n2 == 0 || !(period > T::zero()) {
            return Err(Error::InvalidArguments("strip grid needs n2 >= 1 and period > 0".into()));
        }
        let h1 = (hi - lo) / T::from_usize_lossy(n1 - 1);
        let h2 = period / T::from_usize_lossy(n2);
        Self::new(
            Vec2::new(lo, x2_origin),
            [h1, h2],
            [n1, n2],
            Some((Axis::Two, period)),
        )
    }

    /// Single periodic column in `x2` (one node in `x1`).
    pub fn column(period: T, n2: usize, x2_origin: T) -> Result<Self> {
        if n2 == 0 {
            return Err(Error::InvalidArguments("column grid needs n2 >= 1".into()));
        }
        let h2 = period / T::from_usize_lossy(n2);
        Self::new(
            Vec2::new(T::zero(), x2_origin),
            [T::one(), h2],
            [1, n2],
            Some((Axis::Two, period)),
        )
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of axes with more than one node.
    pub fn dim(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 1).count()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.counts[0] * j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.counts[0], idx / self.counts[0])
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> Vec2<T> {
        let (i, j) = self.ij(idx);
        Vec2::new(
            self.origin.x + self.spacing[0] * T::from_usize_lossy(i),
            self.origin.y + self.spacing[1] * T::from_usize_lossy(j),
        )
    }

    pub fn is_periodic(&self, axis: Axis) -> bool {
        matches!(self.periodic, Some((a, _)) if a == axis)
    }

    /// Lower and upper coordinate of the node range on a non-periodic axis.
    pub fn bounds(&self, axis: Axis) -> (T, T) {
        let k = axis_index(axis);
        let lo = if k == 0 { self.origin.x } else { self.origin.y };
        (lo, lo + self.spacing[k] * T::from_usize_lossy(self.counts[k] - 1))
    }

    pub fn min_spacing(&self) -> T {
        let mut h = T::infinity();
        for k in 0..2 {
            if self.counts[k] > 1 {
                h = h.min(self.spacing[k]);
            }
        }
        h
    }

    /// Node nearest to `x` (periodic wrap on the periodic axis, clamping on
    /// the others).
    pub fn nearest(&self, x: Vec2<T>) -> usize {
        let mut ij = [0usize; 2];
        for (k, slot) in ij.iter_mut().enumerate() {
            let axis = if k == 0 { Axis::One } else { Axis::Two };
            let s = (x.axis(axis) - self.origin.axis(axis)) / self.spacing[k];
            let n = self.counts[k] as i64;
            let r = s.round().to_i64().unwrap_or(0);
            *slot = if self.is_periodic(axis) {
                r.rem_euclid(n) as usize
            } else {
                r.clamp(0, n - 1) as usize
            };
        }
        self.index(ij[0], ij[1])
    }

    fn axis_weights(&self, k: usize, coord: T) -> Option<(usize, usize, T)> {
        let n = self.counts[k];
        let axis = if k == 0 { Axis::One } else { Axis::Two };
        if n == 1 {
            return Some((0, 0, T::zero()));
        }
        let s = (coord - self.origin.axis(axis)) / self.spacing[k];
        if self.is_periodic(axis) {
            let nn = T::from_usize_lossy(n);
            let s = s - nn * (s / nn).floor();
            let i0 = s.floor().to_usize().unwrap_or(0).min(n - 1);
            let w = (s - T::from_usize_lossy(i0)).max(T::zero()).min(T::one());
            return Some((i0, (i0 + 1) % n, w));
        }
        let slack = T::lit(1e-9);
        let top = T::from_usize_lossy(n - 1);
        if s < -slack || s > top + slack {
            return None;
        }
        let s = s.max(T::zero()).min(top);
        let i0 = s.floor().to_usize().unwrap_or(0).min(n - 2);
        Some((i0, i0 + 1, s - T::from_usize_lossy(i0)))
    }

    /// Bilinear stencil at `x`, or `None` outside the window.
    pub fn stencil(&self, x: Vec2<T>) -> Option<Stencil<T>> {
        let (i0, i1, wx) = self.axis_weights(0, x.x)?;
        let (j0, j1, wy) = self.axis_weights(1, x.y)?;
        let one = T::one();
        Some([
            (self.index(i0, j0) as u32, (one - wx) * (one - wy)),
            (self.index(i1, j0) as u32, wx * (one - wy)),
            (self.index(i0, j1) as u32, (one - wx) * wy),
            (self.index(i1, j1) as u32, wx * wy),
        ])
    }

    /// Clamps `x` into the window on non-periodic axes.
    pub fn clamp(&self, x: Vec2<T>) -> Vec2<T> {
        let mut out = x;
        if self.counts[0] > 1 && !self.is_periodic(Axis::One) {
            let (lo, hi) = self.bounds(Axis::One);
            out.x = out.x.max(lo).min(hi);
        }
        if self.counts[1] > 1 && !self.is_periodic(Axis::Two) {
            let (lo, hi) = self.bounds(Axis::Two);
            out.y = out.y.max(lo).min(hi);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Grid<U> {
        Grid {
            origin: self.origin.cast(),
            spacing: [U::lit(self.spacing[0].as_f64()), U::lit(self.spacing[1].as_f64())],
            counts: self.counts,
            periodic: self.periodic.map(|(a, p)| (a, U::lit(p.as_f64()))),
        }
    }
}

pub(crate) fn axis_index(axis: Axis) -> usize {
    match axis {
        Axis::One => 0,
        Axis::Two => 1,
    }
}

/// Solver metadata attached to every field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub scheme: String,
    /// Time step (semi-Lagrangian) or pseudo-time step (finite differences).
    pub step: f64,
    pub discount: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField<T> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
    pub meta: FieldMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    grid: Grid<f64>,
    meta: FieldMeta,
    len: usize,
}

impl<T: Real> ValueField<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>, meta: FieldMeta) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArguments(format!(
                "field has {} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, meta })
    }

    pub fn constant(grid: Grid<T>, value: T) -> Self {
        let values = vec![value; grid.len()];
        Self {
            grid,
            values,
            meta: FieldMeta::default(),
        }
    }

    /// Bilinear interpolation; [`Error::OutOfWindow`] outside the grid.
    pub fn interpolate(&self, x: Vec2<T>) -> Result<T> {
        let st = self.grid.stencil(x).ok_or(Error::OutOfWindow {
            x: x.x.as_f64(),
            y: x.y.as_f64(),
        })?;
        Ok(st
            .iter()
            .map(|&(i, w)| w * self.values[i as usize])
            .sum())
    }

    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest adjacent difference divided by the spacing, over both axes
    /// (periodic neighbours included).
    pub fn lipschitz(&self) -> T {
        let g = &self.grid;
        let [n1, n2] = g.counts;
        let mut lip = T::zero();
        for j in 0..n2 {
            for i in 0..n1 {
                let v = self.values[g.index(i, j)];
                if n1 > 1 {
                    let ni = if i + 1 < n1 {
                        Some(i + 1)
                    } else if g.is_periodic(Axis::One) {
                        Some(0)
                    } else {
                        None
                    };
                    if let Some(ni) = ni {
                        lip = lip.max((self.values[g.index(ni, j)] - v).abs() / g.spacing[0]);
                    }
                }
                if n2 > 1 {
                    let nj = if j + 1 < n2 {
                        Some(j + 1)
                    } else if g.is_periodic(Axis::Two) {
                        Some(0)
                    } else {
                        None
                    };
                    if let Some(nj) = nj {
                        lip = lip.max((self.values[g.index(i, nj)] - v).abs() / g.spacing[1]);
                    }
                }
            }
        }
        lip
    }

    /// CSV with header `index,x1,x2,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "index,x1,x2,value")?;
        for (k, v) in self.values.iter().enumerate() {
            let x = self.grid.coord(k);
            writeln!(w, "{},{:.12e},{:.12e},{:.12e}", k, x.x.as_f64(), x.y.as_f64(), v.as_f64())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Flat little-endian `f64` values plus a JSON sidecar `<path>.json`
    /// holding the grid and solver metadata.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for v in &self.values {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        w.flush()?;
        self.write_meta(&sidecar_path(path))
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        let side = Sidecar {
            grid: self.grid.cast(),
            meta: self.meta.clone(),
            len: self.values.len(),
        };
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, &side)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() != 8 * side.len {
            return Err(Error::InvalidArguments(format!(
                "{}: expected {} values, found {} bytes",
                path.display(),
                side.len,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        Self::new(side.grid.cast(), values, side.meta)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn periodic_count_mismatch_rejected() {
        let r = Grid::new(
            Vec2::new(0.0, 0.0),
            [0.1, 0.1],
            [3, 7],
            Some((Axis::Two, 1.0)),
        );
        assert!(r.is_err());
    }

    #[test]
    fn bilinear_reproduces_affine() {
        let g = Grid::<f64>::new(Vec2::new(-1.0, 0.0), [0.25, 0.5], [9, 5], None).unwrap();
        let vals = (0..g.len())
            .map(|k| {
                let x = g.coord(k);
                2.0 * x.x - 3.0 * x.y + 1.0
            })
            .collect();
        let f = ValueField::new(g, vals, FieldMeta::default()).unwrap();
        let v = f.interpolate(Vec2::new(0.13, 1.37)).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 0.13 - 3.0 * 1.37 + 1.0, epsilon = 1e-12);
        assert!(matches!(
            f.interpolate(Vec2::new(1.5, 0.0)),
            Err(Error::OutOfWindow { .. })
        ));
    }

    #[test]
    fn periodic_wrap() {
        let g = Grid::<f64>::strip(0.0, 1.0, 3, 0.0, 1.0, 4).unwrap();
        let st = g.stencil(Vec2::new(0.0, 0.875)).unwrap();
        // halfway between row 3 and row 0
        assert_eq!(st[0].0 as usize, g.index(0, 3));
        assert_eq!(st[2].0 as usize, g.index(0, 0));
        assert_abs_diff_eq!(st[2].1, 0.5, epsilon = 1e-15);
        assert_eq!(g.nearest(Vec2::new(0.0, -0.1)), g.index(0, 0));
        assert_eq!(g.nearest(Vec2::new(0.0, -0.2)), g.index(0, 3));
    }

    #[test]
    fn column_grid_ignores_x1() {
        let g = Grid::<f64>::column(1.0, 8, 0.0).unwrap();
        assert_eq!(g.dim(), 1);
        let st = g.stencil(Vec2::new(123.0, 0.0625)).unwrap();
        assert_eq!(st[0].0, 0);
        assert_abs_diff_eq!(st[0].1 + st[2].1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn lipschitz_of_linear_field() {
        let g = Grid::<f64>::line(0.0, 1.0, 11).unwrap();
        let vals = (0..11).map(|k| 3.0 * k as f64 / 10.0).collect();
        let f = ValueField::new(g, vals, FieldMeta::default()).unwrap();
        assert_abs_diff_eq!(f.lipschitz(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::<f64>::strip(-1.0, 1.0, 5, 0.0, 0.5, 4).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|k| (k as f64).sin()).collect();
        let meta = FieldMeta {
            scheme: "test".into(),
            step: 0.1,
            discount: 1.0,
            residual: 1e-9,
            iterations: 7,
        };
        let f = ValueField::new(g, vals, meta).unwrap();
        let p = dir.path().join("v.bin");
        f.write_binary(&p).unwrap();
        let back = ValueField::<f64>::read_binary(&p).unwrap();
        assert_eq!(back, f);
        f.write_csv(&dir.path().join("v.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("v.csv")).unwrap();
        assert!(text.starts_with("index,x1,x2,value\n"));
        assert_eq!(text.lines().count(), 21);
    }
}
