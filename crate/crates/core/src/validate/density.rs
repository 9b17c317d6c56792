//! Annual density summaries: 1-D KDE curves and 2-D KDE level contours.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::HOURS_PER_YEAR;
use crate::error::{Error, Result};
use crate::ingest::{HourlySeries, Regime};
use crate::special::normal_pdf;
use crate::stats::{kde_grid_binned, quantile_sorted, silverman_bandwidth};
use crate::steepness::steepness;

/// Contour levels of the joint (hm0, tm02) density, in 1 / (m s).
pub const CONTOUR_LEVELS: [f64; 2] = [5e-2, 5e-3];
pub const GRID_1D: usize = 128;
pub const GRID_2D: usize = 96;
/// Simulated years for which 2-D contours are traced; the rest would only
/// thicken the cloud.
pub const MAX_CONTOUR_YEARS: usize = 50;
/// Years with fewer usable hours get no curve.
const MIN_YEAR_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Hm0,
    Tm02,
    Steepness,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::Hm0, Variable::Tm02, Variable::Steepness];
}

/// Per-year `(hm0, tm02)` pairs with both values present, optionally
/// restricted to one regime.
fn yearly_pairs(s: &HourlySeries, regime: Option<Regime>) -> Vec<Vec<(f64, f64)>> {
    (0..s.years())
        .map(|y| {
            (y * HOURS_PER_YEAR..(y + 1) * HOURS_PER_YEAR)
                .filter(|&i| regime.is_none() || s.regime[i] == regime)
                .filter_map(|i| match (s.hm0[i], s.tm02[i]) {
                    (Some(h), Some(t)) if h > 0.0 => Some((h, t)),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

fn values(pairs: &[(f64, f64)], v: Variable) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(h, t)| match v {
            Variable::Hm0 => h,
            Variable::Tm02 => t,
            Variable::Steepness => steepness(h, t).unwrap_or(f64::NAN),
        })
        .filter(|x| x.is_finite())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub min: Vec<f64>,
    pub q05: Vec<f64>,
    pub median: Vec<f64>,
    pub q95: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurves {
    pub variable: Variable,
    pub grid: Vec<f64>,
    /// One curve per observed year; `None` for years without enough data.
    pub observed: Vec<Option<Vec<f64>>>,
    /// One curve per simulated year.
    pub simulated: Vec<Option<Vec<f64>>>,
    pub simulated_envelope: Option<Envelope>,
    /// Fraction of observed (year, grid point) values inside the simulated
    /// min-max envelope.
    pub coverage: Option<f64>,
}

fn annual_curve(sample: &[f64], lo: f64, step: f64) -> Result<Option<Vec<f64>>> {
    if sample.len() < MIN_YEAR_POINTS {
        return Ok(None);
    }
    let bw = silverman_bandwidth(sample);
    if !(bw > 0.0) {
        return Ok(None);
    }
    kde_grid_binned(sample, lo, step, GRID_1D, bw.max(step)).map(Some)
}

fn envelope(curves: &[Option<Vec<f64>>]) -> Result<Option<Envelope>> {
    let present: Vec<&Vec<f64>> = curves.iter().flatten().collect();
    if present.is_empty() {
        return Ok(None);
    }
    let mut e = Envelope {
        min: vec![],
        q05: vec![],
        median: vec![],
        q95: vec![],
        max: vec![],
    };
    for g in 0..GRID_1D {
        let mut col: Vec<f64> = present.iter().map(|c| c[g]).collect();
        col.sort_by(f64::total_cmp);
        e.min.push(col[0]);
        e.q05.push(quantile_sorted(&col, 0.05)?);
        e.median.push(quantile_sorted(&col, 0.5)?);
        e.q95.push(quantile_sorted(&col, 0.95)?);
        e.max.push(col[col.len() - 1]);
    }
    Ok(Some(e))
}

fn curves_for(
    variable: Variable,
    obs: &[Vec<(f64, f64)>],
    sim: &[Vec<(f64, f64)>],
) -> Result<DensityCurves> {
    let obs_v: Vec<Vec<f64>> = obs.iter().map(|p| values(p, variable)).collect();
    let sim_v: Vec<Vec<f64>> = sim.iter().map(|p| values(p, variable)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in obs_v.iter().chain(&sim_v).flatten() {
        lo = lo.min(*x);
        hi = hi.max(*x);
    }
    if !(lo < hi) {
        return Err(Error::size(format!("no spread in {variable:?} values")));
    }
    let pad = 0.1 * (hi - lo);
    let (lo, hi) = ((lo - pad).max(0.0), hi + pad);
    let step = (hi - lo) / (GRID_1D - 1) as f64;
    let grid = (0..GRID_1D).map(|i| lo + i as f64 * step).collect();
    let observed = obs_v
        .iter()
        .map(|s| annual_curve(s, lo, step))
        .collect::<Result<Vec<_>>>()?;
    let simulated = sim_v
        .par_iter()
        .map(|s| annual_curve(s, lo, step))
        .collect::<Result<Vec<_>>>()?;
    let simulated_envelope = envelope(&simulated)?;
    let coverage = simulated_envelope.as_ref().and_then(|e| {
        let mut inside = 0usize;
        let mut total = 0usize;
        for c in observed.iter().flatten() {
            for g in 0..GRID_1D {
                total += 1;
                if c[g] >= e.min[g] && c[g] <= e.max[g] {
                    inside += 1;
                }
            }
        }
        (total > 0).then(|| inside as f64 / total as f64)
    });
    Ok(DensityCurves {
        variable,
        grid,
        observed,
        simulated,
        simulated_envelope,
        coverage,
    })
}

/// Regular 2-D grid `x0 + i dx`, `y0 + j dy`, values row-major in `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub x0: f64,
    pub dx: f64,
    pub y0: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2 {
    fn x(&self, i: f64) -> f64 {
        self.x0 + i * self.dx
    }
    fn y(&self, j: f64) -> f64 {
        self.y0 + j * self.dy
    }
}

fn kernel(bw: f64, step: f64, n: usize) -> Vec<f64> {
    let reach = ((4.0 * bw / step).ceil() as usize).min(n - 1);
    (0..=reach)
        .map(|k| normal_pdf(k as f64 * step / bw) / bw)
        .collect()
}

fn convolve(src: &[f64], n: usize, k: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|g| {
            let mut acc = src[g] * k[0];
            for (d, w) in k.iter().enumerate().skip(1) {
                if g >= d {
                    acc += src[g - d] * w;
                }
                if g + d < n {
                    acc += src[g + d] * w;
                }
            }
            acc
        })
        .collect()
}

/// Product-Gaussian KDE on a grid via linear binning and separable
/// convolution, with Silverman bandwidths per dimension.
pub fn kde_2d(points: &[(f64, f64)], g: &Grid2) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::size("2-D density of an empty sample"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let bx = silverman_bandwidth(&xs).max(g.dx);
    let by = silverman_bandwidth(&ys).max(g.dy);
    let mut counts = vec![0.0; g.nx * g.ny];
    for &(x, y) in points {
        let (px, py) = ((x - g.x0) / g.dx, (y - g.y0) / g.dy);
        if !(px >= 0.0 && py >= 0.0 && px <= (g.nx - 1) as f64 && py <= (g.ny - 1) as f64) {
            continue;
        }
        let i = (px.floor() as usize).min(g.nx - 2);
        let j = (py.floor() as usize).min(g.ny - 2);
        let (fx, fy) = (px - i as f64, py - j as f64);
        counts[i * g.ny + j] += (1.0 - fx) * (1.0 - fy);
        counts[(i + 1) * g.ny + j] += fx * (1.0 - fy);
        counts[i * g.ny + j + 1] += (1.0 - fx) * fy;
        counts[(i + 1) * g.ny + j + 1] += fx * fy;
    }
    let (kx, ky) = (kernel(bx, g.dx, g.nx), kernel(by, g.dy, g.ny));
    let mut rows: Vec<f64> = Vec::with_capacity(counts.len());
    for i in 0..g.nx {
        rows.extend(convolve(&counts[i * g.ny..(i + 1) * g.ny], g.ny, &ky));
    }
    let mut out = vec![0.0; counts.len()];
    for j in 0..g.ny {
        let col: Vec<f64> = (0..g.nx).map(|i| rows[i * g.ny + j]).collect();
        for (i, v) in convolve(&col, g.nx, &kx).into_iter().enumerate() {
            out[i * g.ny + j] = v / points.len() as f64;
        }
    }
    Ok(out)
}

type Point = (f64, f64);

/// Marching squares. Segments are joined into polylines; a polyline is
/// closed when its first and last points coincide. Density on the outer
/// grid ring is treated as zero so level sets inside the grid close.
pub fn contour(values: &[f64], g: &Grid2, level: f64) -> Vec<Vec<Point>> {
    let v = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i == g.nx - 1 || j == g.ny - 1 {
            0.0
        } else {
            values[i * g.ny + j]
        }
    };
    // Edge keys identify crossing points exactly so segments can be joined.
    // Horizontal edge (i, j)-(i+1, j) -> (0, i, j); vertical (i, j)-(i, j+1) -> (1, i, j).
    type Key = (u8, usize, usize);
    let point = |k: Key| -> Point {
        let (a, b) = match k.0 {
            0 => ((k.1, k.2), (k.1 + 1, k.2)),
            _ => ((k.1, k.2), (k.1, k.2 + 1)),
        };
        let (va, vb) = (v(a.0, a.1), v(b.0, b.1));
        let t = ((level - va) / (vb - va)).clamp(0.0, 1.0);
        (
            g.x(a.0 as f64 + t * (b.0 as f64 - a.0 as f64)),
            g.y(a.1 as f64 + t * (b.1 as f64 - a.1 as f64)),
        )
    };
    let mut segs: Vec<(Key, Key)> = Vec::new();
    for i in 0..g.nx - 1 {
        for j in 0..g.ny - 1 {
            let above = |a: usize, b: usize| v(a, b) >= level;
            let (c0, c1, c2, c3) = (
                above(i, j),
                above(i + 1, j),
                above(i + 1, j + 1),
                above(i, j + 1),
            );
            let idx = c0 as u8 | (c1 as u8) << 1 | (c2 as u8) << 2 | (c3 as u8) << 3;
            let bottom = (0, i, j);
            let right = (1, i + 1, j);
            let top = (0, i, j + 1);
            let left = (1, i, j);
            let centre_above =
                (v(i, j) + v(i + 1, j) + v(i + 1, j + 1) + v(i, j + 1)) / 4.0 >= level;
            match idx {
                0 | 15 => {}
                1 | 14 => segs.push((left, bottom)),
                2 | 13 => segs.push((bottom, right)),
                3 | 12 => segs.push((left, right)),
                4 | 11 => segs.push((right, top)),
                6 | 9 => segs.push((bottom, top)),
                7 | 8 => segs.push((left, top)),
                5 => {
                    if centre_above {
                        segs.push((left, top));
                        segs.push((bottom, right));
                    } else {
                        segs.push((left, bottom));
                        segs.push((right, top));
                    }
                }
                10 => {
                    if centre_above {
                        segs.push((left, bottom));
                        segs.push((right, top));
                    } else {
                        segs.push((left, top));
                        segs.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    let mut at: HashMap<Key, Vec<usize>> = HashMap::new();
    for (n, (a, b)) in segs.iter().enumerate() {
        at.entry(*a).or_default().push(n);
        at.entry(*b).or_default().push(n);
    }
    let mut used = vec![false; segs.len()];
    let mut lines = Vec::new();
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut keys = vec![segs[start].0, segs[start].1];
        // Extend forward, then backward.
        for forward in [true, false] {
            loop {
                let end = if forward {
                    *keys.last().unwrap()
                } else {
                    keys[0]
                };
                let next = at[&end].iter().copied().find(|&n| !used[n]);
                let Some(n) = next else { break };
                used[n] = true;
                let (a, b) = segs[n];
                let other = if a == end { b } else { a };
                if forward {
                    keys.push(other);
                } else {
                    keys.insert(0, other);
                }
            }
        }
        lines.push(keys.into_iter().map(point).collect());
    }
    lines
}

/// Even-odd point-in-polygon test on a closed polyline.
pub fn inside(poly: &[Point], p: Point) -> bool {
    let mut c = false;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1) {
            c = !c;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub level: f64,
    /// Polylines per year, in data coordinates `(hm0, tm02)`.
    pub observed: Vec<Vec<Vec<Point>>>,
    pub simulated: Vec<Vec<Vec<Point>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    /// `None` for all hours, otherwise the regime the hours were filtered to.
    pub regime: Option<Regime>,
    pub curves: Vec<DensityCurves>,
    pub grid_2d: Grid2,
    pub contours: Vec<ContourSet>,
}

fn contours_for(pairs: &[(f64, f64)], g: &Grid2) -> Result<Vec<Vec<Vec<Point>>>> {
    if pairs.len() < MIN_YEAR_POINTS {
        return Ok(vec![vec![]; CONTOUR_LEVELS.len()]);
    }
    let d = kde_2d(pairs, g)?;
    Ok(CONTOUR_LEVELS.iter().map(|&l| contour(&d, g, l)).collect())
}

/// Annual densities of hm0, tm02 and steepness plus joint contours for an
/// observed and a simulated series on shared grids.
pub fn density_report(
    observed: &HourlySeries,
    simulated: &HourlySeries,
    regime: Option<Regime>,
) -> Result<DensityReport> {
    if observed.years() == 0 || simulated.years() == 0 {
        return Err(Error::size(
            "density report needs at least one whole year of each series",
        ));
    }
    let obs = yearly_pairs(observed, regime);
    let sim = yearly_pairs(simulated, regime);
    let curves = Variable::ALL
        .iter()
        .map(|&v| curves_for(v, &obs, &sim))
        .collect::<Result<Vec<_>>>()?;

    let (mut hx, mut ty) = (0.0f64, 0.0f64);
    let (mut lx, mut ly) = (f64::INFINITY, f64::INFINITY);
    for &(h, t) in obs.iter().chain(&sim).flatten() {
        hx = hx.max(h);
        ty = ty.max(t);
        lx = lx.min(h);
        ly = ly.min(t);
    }
    // Pad so the level sets close well inside the grid.
    let (px, py) = (0.25 * (hx - lx).max(0.1), 0.25 * (ty - ly).max(0.1));
    let (x0, y0) = ((lx - px).max(0.0), (ly - py).max(0.0));
    let grid_2d = Grid2 {
        x0,
        dx: (hx + px - x0) / (GRID_2D - 1) as f64,
        y0,
        dy: (ty + py - y0) / (GRID_2D - 1) as f64,
        nx: GRID_2D,
        ny: GRID_2D,
    };
    let per_obs = obs
        .iter()
        .map(|p| contours_for(p, &grid_2d))
        .collect::<Result<Vec<_>>>()?;
    let per_sim = sim
        .par_iter()
        .take(MAX_CONTOUR_YEARS)
        .map(|p| contours_for(p, &grid_2d))
        .collect::<Result<Vec<_>>>()?;
    let contours = CONTOUR_LEVELS
        .iter()
        .enumerate()
        .map(|(k, &level)| ContourSet {
            level,
            observed: per_obs.iter().map(|c| c[k].clone()).collect(),
            simulated: per_sim.iter().map(|c| c[k].clone()).collect(),
        })
        .collect();
    Ok(DensityReport {
        regime,
        curves,
        grid_2d,
        contours,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid() -> Grid2 {
        Grid2 {
            x0: -5.0,
            dx: 0.1,
            y0: -5.0,
            dy: 0.1,
            nx: 101,
            ny: 101,
        }
    }

    #[test]
    fn kde_2d_of_normal_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<(f64, f64)> = (0..20_000)
            .map(|_| (n.sample(&mut rng), n.sample(&mut rng)))
            .collect();
        let g = grid();
        let d = kde_2d(&pts, &g).unwrap();
        let mass: f64 = d.iter().sum::<f64>() * g.dx * g.dy;
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
        let peak = d[50 * g.ny + 50];
        let want = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((peak - want).abs() / want < 0.08, "{peak}");
    }

    #[test]
    fn circle_contour_is_closed_with_the_right_radius() {
        // 10 - r^2 crosses 6 on the circle r = 2.
        let g = grid();
        let mut v = vec![0.0; g.nx * g.ny];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let (x, y) = (g.x(i as f64), g.y(j as f64));
                v[i * g.ny + j] = 10.0 - (x * x + y * y);
            }
        }
        let lines = contour(&v, &g, 6.0);
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert_eq!(l.first(), l.last());
        for p in l {
            let r = (p.0 * p.0 + p.1 * p.1).sqrt();
            assert!((r - 2.0).abs() < 0.02, "{r}");
        }
        assert!(inside(l, (0.0, 0.0)));
        assert!(!inside(l, (2.5, 0.0)));
    }

    #[test]
    fn lower_level_contour_encloses_higher() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<(f64, f64)> = (0..5_000)
            .map(|_| {
                let a = n.sample(&mut rng);
                (a, 0.6 * a + 0.8 * n.sample(&mut rng))
            })
            .collect();
        let g = grid();
        let d = kde_2d(&pts, &g).unwrap();
        let hi = contour(&d, &g, 5e-2);
        let lo = contour(&d, &g, 5e-3);
        assert!(!hi.is_empty() && !lo.is_empty());
        for l in lo.iter().chain(&hi) {
            assert_eq!(l.first(), l.last());
        }
        for p in hi.iter().flatten() {
            assert!(lo.iter().any(|l| inside(l, *p)), "{p:?} not enclosed");
        }
    }
}
