use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CellSettings;
use crate::control_model::{
    bisect_edge, e0, hamiltonian, Branch, Control, ControlSide, Hamiltonian, MediumPair, E0,
};
use crate::error::{Error, Result};
use crate::geometry::{LayeredStrip, ToothProfile};
use crate::hj_engines::{
    default_time_step, relative_value_iteration, DpProblem, Grid,
};
use crate::scalar::Real;
use crate::vec2::Vec2;

/// Uniform axis `lo, lo + step, ..., lo + (n - 1) step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableAxis<T> {
    pub lo: T,
    pub step: T,
    pub n: usize,
}

impl<T: Real> TableAxis<T> {
    /// `n` nodes spanning `[lo, hi]`.
    pub fn span(lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidArguments(format!(
                "table axis needs n >= 2 and hi > lo (got n = {n}, [{lo}, {hi}])"
            )));
        }
        Ok(Self {
            lo,
            step: (hi - lo) / T::from_usize_lossy(n - 1),
            n,
        })
    }

    pub fn node(&self, i: usize) -> T {
        self.lo + self.step * T::from_usize_lossy(i)
    }

    pub fn hi(&self) -> T {
        self.node(self.n - 1)
    }

    /// Cell index (clamped to the table) and the unclamped local coordinate,
    /// so that evaluation outside the table extends the end cells linearly.
    fn locate(&self, x: T) -> (usize, T) {
        let s = (x - self.lo) / self.step;
        let i = s.floor().max(T::zero()).min(T::from_usize_lossy(self.n - 2));
        let i_us = i.to_usize().unwrap_or(0);
        (i_us, s - i)
    }
}

/// Tabulated strip Hamiltonian `H^M` on a momentum grid, bilinear inside the
/// table and extended linearly beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTable<T> {
    pub p1: TableAxis<T>,
    pub p2: TableAxis<T>,
    /// `values[i + p1.n * j]` is `H^M(p1_i, p2_j)`.
    pub values: Vec<T>,
    /// Branch-selection oracle at the same nodes (empty when not computed).
    pub oracle: Vec<T>,
}

impl<T: Real> EffectiveTable<T> {
    /// The 21 x 21 table over `[-2, 2]^2`.
    pub fn standard_axes() -> (TableAxis<T>, TableAxis<T>) {
        let ax = TableAxis::span(T::lit(-2.0), T::lit(2.0), 21).expect("valid axis");
        (ax, ax)
    }

    pub fn from_values(p1: TableAxis<T>, p2: TableAxis<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != p1.n * p2.n {
            return Err(Error::InvalidArguments(format!(
                "table has {} values for {} x {} nodes",
                values.len(),
                p1.n,
                p2.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArguments("table values must be finite".into()));
        }
        Ok(Self {
            p1,
            p2,
            values,
            oracle: Vec::new(),
        })
    }

    /// Samples any Hamiltonian at the table nodes.
    pub fn tabulate(h: &dyn Hamiltonian<T>, p1: TableAxis<T>, p2: TableAxis<T>) -> Result<Self> {
        let values = (0..p1.n * p2.n)
            .map(|k| h.eval(Vec2::new(p1.node(k % p1.n), p2.node(k / p1.n))))
            .collect();
        Self::from_values(p1, p2, values)
    }

    /// Solves the column cell problem at every node (in parallel) and
    /// records the oracle next to it.
    pub fn build(
        pair: &MediumPair<T>,
        profile: &ToothProfile<T>,
        eta: T,
        p1: TableAxis<T>,
        p2: TableAxis<T>,
        settings: &CellSettings<T>,
    ) -> Result<Self> {
        let nodes: Vec<Vec2<T>> = (0..p1.n * p2.n)
            .map(|k| Vec2::new(p1.node(k % p1.n), p2.node(k / p1.n)))
            .collect();
        let solved: Vec<(T, T)> = nodes
            .par_iter()
            .map(|&p| {
                let v = effective_hm(pair, profile, eta, p, settings)?;
                Ok((v, hm_oracle(pair, profile, p)))
            })
            .collect::<Result<_>>()?;
        let mut table = Self::from_values(p1, p2, solved.iter().map(|s| s.0).collect())?;
        table.oracle = solved.iter().map(|s| s.1).collect();
        Ok(table)
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i + self.p1.n * j]
    }

    /// `H^M(-p1, p2)`: the strip Hamiltonian seen after `x1 -> -x1`.
    pub fn mirrored(&self) -> Self {
        let n1 = self.p1.n;
        let flip = |v: &Vec<T>| -> Vec<T> {
            if v.is_empty() {
                return Vec::new();
            }
            (0..v.len())
                .map(|k| v[(n1 - 1 - k % n1) + n1 * (k / n1)])
                .collect()
        };
        Self {
            p1: TableAxis {
                lo: -self.p1.hi(),
                step: self.p1.step,
                n: n1,
            },
            p2: self.p2,
            values: flip(&self.values),
            oracle: flip(&self.oracle),
        }
    }

    /// Values of the `p2`-interpolated row at the `p1` nodes.
    fn row(&self, p2: T) -> Vec<T> {
        let (j, w) = self.p2.locate(p2);
        (0..self.p1.n)
            .map(|i| self.at(i, j) * (T::one() - w) + self.at(i, j + 1) * w)
            .collect()
    }

    /// Largest midpoint-convexity defect `v_k - (v_{k-1} + v_{k+1}) / 2`
    /// along table rows and columns (zero for a convex table).
    pub fn convexity_defect(&self) -> T {
        let (n1, n2) = (self.p1.n, self.p2.n);
        let half = T::lit(0.5);
        let mut worst = T::zero();
        for j in 0..n2 {
            for i in 1..n1 - 1 {
                let d = self.at(i, j) - half * (self.at(i - 1, j) + self.at(i + 1, j));
                worst = worst.max(d);
            }
        }
        for i in 0..n1 {
            for j in 1..n2 - 1 {
                let d = self.at(i, j) - half * (self.at(i, j - 1) + self.at(i, j + 1));
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest `|solver - oracle|` over the nodes (`None` without oracle).
    pub fn oracle_gap(&self) -> Option<T> {
        if self.oracle.len() != self.values.len() {
            return None;
        }
        Some(
            self.values
                .iter()
                .zip(&self.oracle)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max),
        )
    }

    /// CSV with columns `p1,p2,value,oracle`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "p1,p2,value,oracle")?;
        for j in 0..self.p2.n {
            for i in 0..self.p1.n {
                let k = i + self.p1.n * j;
                let oracle = self.oracle.get(k).map(|v| format!("{v}")).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{}",
                    self.p1.node(i),
                    self.p2.node(j),
                    self.values[k],
                    oracle
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

impl<T: Real> Hamiltonian<T> for EffectiveTable<T> {
    fn eval(&self, p: Vec2<T>) -> T {
        let (i, u) = self.p1.locate(p.x);
        let (j, w) = self.p2.locate(p.y);
        let one = T::one();
        self.at(i, j) * (one - u) * (one - w)
            + self.at(i + 1, j) * u * (one - w)
            + self.at(i, j + 1) * (one - u) * w
            + self.at(i + 1, j + 1) * u * w
    }

    fn half_p1(&self, p: Vec2<T>, branch: Branch) -> T {
        let m = Hamiltonian::e0(self, p.y);
        match branch {
            Branch::Plus if p.x <= m.p1_plus => m.value,
            Branch::Minus if p.x >= m.p1_minus => m.value,
            _ => self.eval(p),
        }
    }

    /// Minimum over the tabulated `p1` nodes of the interpolated row; the
    /// interval collects the nodes within `1e-7` of it.
    fn e0(&self, p2: T) -> E0<T> {
        let row = self.row(p2);
        let min = row.iter().copied().fold(T::infinity(), T::min);
        let slack = T::lit(1e-7) * (T::one() + min.abs());
        let flat: Vec<usize> = (0..row.len()).filter(|&i| row[i] <= min + slack).collect();
        E0 {
            value: min,
            p1_minus: self.p1.node(flat[0]),
            p1_plus: self.p1.node(*flat.last().expect("nonempty row")),
        }
    }

    fn lipschitz_bound(&self) -> T {
        let (n1, n2) = (self.p1.n, self.p2.n);
        let mut worst = T::zero();
        for j in 0..n2 {
            for i in 0..n1 {
                if i + 1 < n1 {
                    worst = worst.max((self.at(i + 1, j) - self.at(i, j)).abs() / self.p1.step);
                }
                if j + 1 < n2 {
                    worst = worst.max((self.at(i, j + 1) - self.at(i, j)).abs() / self.p2.step);
                }
            }
        }
        worst * T::lit(2.0).sqrt()
    }
}

/// `H^M(p)`: ergodic level of the periodic column problem across the layers,
/// left medium on `(eta a, eta b)` and right medium elsewhere.
pub fn effective_hm<T: Real>(
    pair: &MediumPair<T>,
    profile: &ToothProfile<T>,
    eta: T,
    p: Vec2<T>,
    settings: &CellSettings<T>,
) -> Result<T> {
    let n = settings.column_nodes;
    let half_cell = eta * T::lit(0.5) / T::from_usize_lossy(n);
    let grid = Grid::column(eta, n, half_cell)?;
    let strip = LayeredStrip {
        profile: profile.clone(),
        eta,
    };
    let dt = default_time_step(&grid, pair);
    let problem = DpProblem::new(pair, &strip, T::one(), dt)
        .with_momentum(p)
        .with_anchor(Vec2::new(T::zero(), half_cell))
        .with_control(settings.hm_control);
    // relative iteration: the discrete level is exact, so the table stays convex
    Ok(relative_value_iteration(&problem, &grid, None)?.constant)
}

/// The side with its two momentum axes exchanged, so that `e0` minimizes
/// along `p2`.
fn swapped<T: Real>(side: &ControlSide<T>) -> ControlSide<T> {
    ControlSide::new(
        side.label,
        side.controls
            .iter()
            .map(|c| Control::new(c.velocity.y, c.velocity.x, c.cost))
            .collect(),
    )
}

/// Roots `Q^-`, `Q^+` of `q -> H(p + q e2) = level` (level above the minimum).
fn branch_roots<T: Real>(side: &ControlSide<T>, along: &E0<T>, p: Vec2<T>, level: T) -> (T, T) {
    let above = |q2: T| hamiltonian(side, Vec2::new(p.x, q2)) > level;
    let lo = bisect_edge(along.p1_minus, -T::one(), &above);
    let hi = bisect_edge(along.p1_plus, T::one(), &above);
    (lo - p.y, hi - p.y)
}

/// Branch-selection formula for layered media: the smallest level `l` at
/// which the volume-weighted sum of the branch roots brackets zero.
pub fn hm_oracle<T: Real>(pair: &MediumPair<T>, profile: &ToothProfile<T>, p: Vec2<T>) -> T {
    let m_left = profile.left_fraction();
    let m_right = T::one() - m_left;
    let sides = [&pair.left, &pair.right];
    let along: Vec<E0<T>> = sides.iter().map(|s| e0(&swapped(s), p.x)).collect();
    let feasible = |level: T| {
        let (l_lo, l_hi) = branch_roots(sides[0], &along[0], p, level);
        let (r_lo, r_hi) = branch_roots(sides[1], &along[1], p, level);
        m_left * l_lo + m_right * r_lo <= T::zero() && m_left * l_hi + m_right * r_hi >= T::zero()
    };
    let mut lo = along[0].value.max(along[1].value);
    if feasible(lo) {
        return lo;
    }
    let mut hi = hamiltonian(sides[0], p).max(hamiltonian(sides[1], p));
    for _ in 0..200 {
        if hi - lo <= T::lit(1e-12) * (T::one() + hi.abs()) {
            break;
        }
        let mid = (lo + hi) * T::lit(0.5);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn settings() -> CellSettings<f64> {
        CellSettings {
            column_nodes: 64,
            ..CellSettings::default()
        }
    }

    #[test]
    fn identical_media_reduce_to_h() {
        let pair = MediumPair::<f64>::identical();
        let prof = ToothProfile::standard();
        for (p, want) in [((0.0, 0.5), -0.5), ((2.0, 0.0), 1.0), ((0.7, -1.3), 0.3)] {
            let p = Vec2::new(p.0, p.1);
            let v = effective_hm(&pair, &prof, 1.0, p, &settings()).unwrap();
            assert_abs_diff_eq!(v, want, epsilon = 1e-6);
            assert_abs_diff_eq!(hm_oracle(&pair, &prof, p), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn asymmetric_oracle_values() {
        // left: 2|.|-1 on half the period, right: |.|-1 on the other half
        let pair = MediumPair::<f64>::asymmetric();
        let prof = ToothProfile::standard();
        let cases = [
            ((0.0, 0.0), -1.0),
            ((0.0, 1.0), 1.0 / 3.0),
            ((1.0, 0.0), 1.0),
            ((0.6, 0.8), 0.2),
            ((2.0, 2.0), 3.0),
        ];
        for (p, want) in cases {
            let v = hm_oracle(&pair, &prof, Vec2::new(p.0, p.1));
            assert_abs_diff_eq!(v, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn solver_agrees_with_oracle_on_asymmetric_pair() {
        let pair = MediumPair::<f64>::asymmetric();
        let prof = ToothProfile::standard();
        for p in [(0.6, 0.8), (-1.4, 0.4), (2.0, 2.0)] {
            let p = Vec2::new(p.0, p.1);
            let v = effective_hm(&pair, &prof, 1.0, p, &settings()).unwrap();
            assert_abs_diff_eq!(v, hm_oracle(&pair, &prof, p), epsilon = 1e-2);
        }
    }

    #[test]
    fn table_interpolation_and_branches() {
        let side = ControlSide::<f64>::cross(crate::control_model::SideLabel::Right, 1.0, 1.0);
        let (a1, a2) = EffectiveTable::standard_axes();
        let t = EffectiveTable::tabulate(&side, a1, a2).unwrap();
        assert_abs_diff_eq!(t.convexity_defect(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.eval(Vec2::new(0.5, 0.0)), -0.5, epsilon = 1e-12);
        // linear extension beyond the table
        assert_abs_diff_eq!(t.eval(Vec2::new(3.0, 0.0)), 2.0, epsilon = 1e-12);
        let m = Hamiltonian::e0(&t, 1.0);
        assert_abs_diff_eq!(m.value, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.p1_minus, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.p1_plus, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.half_p1(Vec2::new(-1.6, 1.0), Branch::Plus), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.half_p1(Vec2::new(1.6, 1.0), Branch::Plus), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(t.half_p1(Vec2::new(-1.6, 1.0), Branch::Minus), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn mirrored_table_reflects_p1() {
        let pair = MediumPair::<f64>::asymmetric();
        let ax = TableAxis::span(-1.0, 1.0, 5).unwrap();
        let t = EffectiveTable::tabulate(&pair.left.mirrored(), ax, ax).unwrap();
        let m = t.mirrored();
        for p in [(0.3, 0.2), (-0.9, 0.7)] {
            let a = t.eval(Vec2::new(p.0, p.1));
            let b = m.eval(Vec2::new(-p.0, p.1));
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
