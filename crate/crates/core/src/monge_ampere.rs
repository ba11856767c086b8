// SPDX-License-Identifier: Apache-2.0

//! Monge-Ampere measures of metrics on single fibers.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use rayon::prelude::*;

use crate::arith::{q_to_f64, rational_mod, Q};
use crate::error::{Error, Result};
use crate::fiber::{FiberPoint, NaField, ProjQ};
use crate::metric::{Chart, GlobalTropFSMetric};
use crate::spectrum::{BaseKind, SpectrumPoint};
use crate::tree::{contains, DiscTree, KDisc};

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub point: FiberPoint,
    pub mass: Q,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArchCell {
    pub chart: Chart,
    /// Grid indices; the cell center is `z`.
    pub ix: u32,
    pub iy: u32,
    /// Cell center in the chart coordinate.
    pub z: Complex64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchGrid {
    pub resolution: usize,
    /// Cells with positive mass.
    pub cells: Vec<ArchCell>,
    /// Total negative mass removed from the discrete Laplacian.
    pub negative_dust: f64,
}

impl ArchGrid {
    /// Mass in `{ lo <= |z| <= hi }`, with chart-B cells mapped by `z = 1/w`.
    pub fn mass_in_annulus(&self, lo: f64, hi: f64, closed: bool) -> f64 {
        self.cells
            .iter()
            .filter(|c| {
                let r = match c.chart {
                    Chart::A => c.z.norm(),
                    Chart::B => 1.0 / c.z.norm(),
                };
                if closed {
                    r >= lo && r <= hi
                } else {
                    r > lo && r < hi
                }
            })
            .map(|c| c.mass)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mass {
    Exact(Q),
    Approx(f64),
}

impl Mass {
    pub fn to_f64(&self) -> f64 {
        match self {
            Mass::Exact(q) => q_to_f64(q),
            Mass::Approx(x) => *x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberMeasure {
    pub base: SpectrumPoint,
    pub atoms: Vec<Atom>,
    pub grid: Option<ArchGrid>,
    pub total_mass: Mass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaConfig {
    /// Archimedean grid parameter: spacing `2 / resolution`.
    pub resolution: usize,
}

impl Default for MaConfig {
    fn default() -> Self {
        MaConfig { resolution: 256 }
    }
}

/// One section in valuation coordinates: a constant valuation and finite
/// roots with multiplicities.
struct SectionData {
    const_val: Q,
    roots: Vec<(Q, usize)>,
    lambda: Q,
}

fn section_data(phi: &GlobalTropFSMetric, field: &NaField) -> Result<Vec<SectionData>> {
    let mut out = Vec::new();
    let uniform = phi.has_uniform_lambda();
    for t in phi.terms() {
        let fac = t.section.linear_factors()?;
        let lambda = if field.is_trivially_valued() {
            t.lambda.clone()
        } else if uniform {
            Q::zero()
        } else {
            return Err(Error::unsupported(
                "p-adic fibers need equal constants lambda_j (corners would be irrational)",
            ));
        };
        let mut data = SectionData { const_val: Q::zero(), roots: Vec::new(), lambda };
        match field {
            NaField::TrivialFp { p } => {
                let bp = BigInt::from(*p);
                if fac.content.mod_floor(&bp).is_zero() {
                    // Identically zero on this fiber.
                    continue;
                }
                for (lf, e) in &fac.factors {
                    if lf.a.mod_floor(&bp).is_zero() {
                        continue;
                    }
                    let r = rational_mod(&Q::new(-lf.b.clone(), lf.a.clone()), &bp).unwrap();
                    data.roots.push((Q::from_integer(r), *e));
                }
            }
            _ => {
                if let Some(v) = field.val(&Q::from_integer(fac.content.clone())) {
                    data.const_val += v;
                }
                for (lf, e) in &fac.factors {
                    match lf.root() {
                        None => {}
                        Some(r) => {
                            let va = field.val(&Q::from_integer(lf.a.clone())).unwrap();
                            data.const_val += va * Q::from_integer((*e).into());
                            data.roots.push((r, *e));
                        }
                    }
                }
            }
        }
        out.push(data);
    }
    if out.is_empty() {
        return Err(Error::input("every section vanishes identically on this fiber"));
    }
    Ok(out)
}

/// Lines `slope * rho + icpt` of the max-envelope on one edge.
#[derive(Clone, Debug)]
struct Line {
    slope: Q,
    icpt: Q,
}

/// Upper envelope of lines on `(lo, hi)`: start slope, interior breakpoints
/// with slope jumps, end slope. `None` bounds are infinite.
fn envelope(lines: &[Line], lo: Option<&Q>, hi: Option<&Q>) -> (Q, Vec<(Q, Q)>, Q) {
    let value = |l: &Line, x: &Q| &l.slope * x + &l.icpt;
    let mut cur = match lo {
        Some(x) => {
            let mut best = 0;
            for (k, l) in lines.iter().enumerate() {
                let (vb, vk) = (value(&lines[best], x), value(l, x));
                if vk > vb || (vk == vb && l.slope > lines[best].slope) {
                    best = k;
                }
            }
            best
        }
        None => {
            let mut best = 0;
            for (k, l) in lines.iter().enumerate() {
                let b = &lines[best];
                if l.slope < b.slope || (l.slope == b.slope && l.icpt > b.icpt) {
                    best = k;
                }
            }
            best
        }
    };
    let start = lines[cur].slope.clone();
    let mut breaks = Vec::new();
    let mut pos: Option<Q> = lo.cloned();
    loop {
        let c = &lines[cur];
        let mut next: Option<(Q, usize)> = None;
        for (k, l) in lines.iter().enumerate() {
            if l.slope <= c.slope {
                continue;
            }
            let x = (&c.icpt - &l.icpt) / (&l.slope - &c.slope);
            if pos.as_ref().is_some_and(|p| x <= *p) {
                continue;
            }
            let better = match &next {
                None => true,
                Some((bx, bk)) => x < *bx || (x == *bx && l.slope > lines[*bk].slope),
            };
            if better {
                next = Some((x, k));
            }
        }
        match next {
            Some((x, k)) if hi.is_none_or(|h| x < *h) => {
                breaks.push((x.clone(), &lines[k].slope - &c.slope));
                cur = k;
                pos = Some(x);
            }
            _ => break,
        }
    }
    (start, breaks, lines[cur].slope.clone())
}

/// Atoms of the Monge-Ampere measure on a non-Archimedean fiber, for
/// sections that split into linear factors over Q.
pub fn ma_nonarch(phi: &GlobalTropFSMetric, base: SpectrumPoint) -> Result<FiberMeasure> {
    let Some(field) = NaField::of(&base) else {
        return Err(Error::WrongFiber(format!("{base} is Archimedean")));
    };
    let data = section_data(phi, &field)?;
    let m = Q::from_integer(phi.m().into());

    let mut leaves = vec![KDisc::gauss()];
    for s in &data {
        for (r, _) in &s.roots {
            leaves.push(KDisc::point(&field, r));
        }
    }
    let tree = DiscTree::span(field, &leaves);
    let root_points: Vec<Vec<KDisc>> =
        data.iter().map(|s| s.roots.iter().map(|(r, _)| KDisc::point(&field, r)).collect()).collect();

    let mut masses: BTreeMap<KDisc, Q> = BTreeMap::new();
    let mut at_infinity = phi.d().clone();
    let add = |map: &mut BTreeMap<KDisc, Q>, k: KDisc, v: Q| {
        *map.entry(k).or_insert_with(Q::zero) += v;
    };

    for (i, child) in tree.nodes.iter().enumerate() {
        let lines: Vec<Line> = data
            .iter()
            .zip(&root_points)
            .map(|(s, pts)| {
                let mut b = Q::zero();
                let mut a = s.const_val.clone();
                for ((r, e), pt) in s.roots.iter().zip(pts) {
                    let e = Q::from_integer((*e).into());
                    if contains(&field, child, pt) {
                        b += e;
                    } else {
                        a += field.val(&(&child.center - r)).unwrap() * e;
                    }
                }
                Line { slope: -b / &m, icpt: (&s.lambda - a) / &m }
            })
            .collect();
        let lo = tree.parent[i].map(|p| tree.nodes[p].finite_radius().cloned().expect("parents are discs"));
        let hi = child.finite_radius();
        let (start, breaks, end) = envelope(&lines, lo.as_ref(), hi);
        match tree.parent[i] {
            Some(p) => add(&mut masses, tree.nodes[p].clone(), start),
            None => at_infinity += start,
        }
        for (x, jump) in breaks {
            add(&mut masses, KDisc::disc(&field, &child.center, x), jump);
        }
        add(&mut masses, child.clone(), -end);
    }

    let mut atoms = Vec::new();
    for (k, v) in masses {
        if v.is_negative() {
            return Err(Error::Evaluation(format!("negative tree mass at {k:?}")));
        }
        if !v.is_zero() {
            atoms.push(Atom { point: k.to_point(base)?, mass: v });
        }
    }
    if at_infinity.is_negative() {
        return Err(Error::Evaluation("negative mass at infinity".into()));
    }
    if !at_infinity.is_zero() {
        atoms.push(Atom { point: FiberPoint::type1(base, ProjQ::Infinity)?, mass: at_infinity });
    }
    let total: Q = atoms.iter().map(|a| a.mass.clone()).sum();
    debug_assert!(total == *phi.d());
    Ok(FiberMeasure { base, atoms, grid: None, total_mass: Mass::Exact(total) })
}

const CUT_INNER: f64 = 0.8;
const CUT_OUTER: f64 = 1.25;
const GRID_HALF_WIDTH: f64 = 1.5;

fn smooth_step(s: f64) -> f64 {
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        f(s) / (f(s) + f(1.0 - s))
    }
}

/// Smooth cutoff: 1 on `|z| <= 0.8`, 0 on `|z| >= 1.25`.
pub fn chart_cutoff(r: f64) -> f64 {
    1.0 - smooth_step((r - CUT_INNER) / (CUT_OUTER - CUT_INNER))
}

/// Chebyshev radius within which negative cells borrow from positive ones.
const SWEEP_RADIUS: isize = 3;

/// Cancels negative cell masses against nearby positive ones, nearest ring
/// first, and returns what is left over. Near logarithmic poles the 5-point
/// error has a sign pattern that does not shrink under refinement, so plain
/// clipping would inflate the total.
fn sweep_negative(mass: &mut [Vec<f64>]) -> f64 {
    let n = mass.len() as isize;
    let mut left = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mut debt = -mass[j as usize][i as usize];
            if debt <= 0.0 {
                continue;
            }
            mass[j as usize][i as usize] = 0.0;
            'rings: for k in 1..=SWEEP_RADIUS {
                for dj in -k..=k {
                    for di in -k..=k {
                        if di.abs().max(dj.abs()) != k {
                            continue;
                        }
                        let (y, x) = (j + dj, i + di);
                        if y < 0 || x < 0 || y >= n || x >= n {
                            continue;
                        }
                        let cell = &mut mass[y as usize][x as usize];
                        if *cell > 0.0 {
                            let take = cell.min(debt);
                            *cell -= take;
                            debt -= take;
                            if debt <= 0.0 {
                                break 'rings;
                            }
                        }
                    }
                }
            }
            left += debt.max(0.0);
        }
    }
    left
}

/// Monge-Ampere measure over `Arch(eps)` on a pair of cell-centered grids,
/// one per chart, glued by a smooth partition of unity.
pub fn ma_arch(phi: &GlobalTropFSMetric, base: SpectrumPoint, resolution: usize) -> Result<FiberMeasure> {
    let BaseKind::Archimedean { eps } = base.kind() else {
        return Err(Error::WrongFiber(format!("{base} is not Archimedean")));
    };
    if resolution < 16 || !resolution.is_power_of_two() || resolution > 8192 {
        return Err(Error::input("resolution must be a power of two in [16, 8192]"));
    }
    let h = 2.0 / resolution as f64;
    let n = (2.0 * GRID_HALF_WIDTH / h).round() as usize;
    let coord = |i: usize| -GRID_HALF_WIDTH + (i as f64 + 0.5) * h;
    let one = Complex64::new(1.0, 0.0);
    let mut cells = Vec::new();
    let mut dust = 0.0;
    for chart in [Chart::A, Chart::B] {
        let psi: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let z = Complex64::new(coord(i), coord(j));
                        let v = match chart {
                            Chart::A => phi.arch_potential(z, one, eps),
                            Chart::B => phi.arch_potential(one, z, eps),
                        };
                        v / eps
                    })
                    .collect()
            })
            .collect();
        let rows: Vec<Result<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut row = vec![0.0; n];
                if j == 0 || j == n - 1 {
                    return Ok(row);
                }
                for i in 1..n - 1 {
                    let z = Complex64::new(coord(i), coord(j));
                    let r = z.norm();
                    let w = match chart {
                        Chart::A => chart_cutoff(r),
                        Chart::B => {
                            if r == 0.0 {
                                1.0
                            } else {
                                1.0 - chart_cutoff(1.0 / r)
                            }
                        }
                    };
                    if w == 0.0 {
                        continue;
                    }
                    let lap = psi[j][i + 1] + psi[j][i - 1] + psi[j + 1][i] + psi[j - 1][i] - 4.0 * psi[j][i];
                    if !lap.is_finite() {
                        return Err(Error::Evaluation(format!("potential is singular near {z}")));
                    }
                    row[i] = w * lap / (2.0 * PI);
                }
                Ok(row)
            })
            .collect();
        let mut mass = rows.into_iter().collect::<Result<Vec<_>>>()?;
        dust += sweep_negative(&mut mass);
        for (j, row) in mass.iter().enumerate() {
            for (i, &m) in row.iter().enumerate() {
                if m > 0.0 {
                    let z = Complex64::new(coord(i), coord(j));
                    cells.push(ArchCell { chart, ix: i as u32, iy: j as u32, z, mass: m });
                }
            }
        }
    }
    let total = cells.iter().map(|c| c.mass).sum();
    Ok(FiberMeasure {
        base,
        atoms: Vec::new(),
        grid: Some(ArchGrid { resolution, cells, negative_dust: dust }),
        total_mass: Mass::Approx(total),
    })
}

pub fn ma_at(phi: &GlobalTropFSMetric, base: SpectrumPoint, cfg: &MaConfig) -> Result<FiberMeasure> {
    match base.kind() {
        BaseKind::Archimedean { .. } => ma_arch(phi, base, cfg.resolution),
        _ => ma_nonarch(phi, base),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassCheckEntry {
    pub base: SpectrumPoint,
    pub mass: Mass,
    pub deviation: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassCheckReport {
    pub entries: Vec<MassCheckEntry>,
    pub max_deviation: f64,
    pub flagged: bool,
}

/// Total mass on each sample fiber; exact fibers must give `d` exactly and
/// Archimedean ones must be within `arch_tolerance`.
pub fn total_mass_check(
    phi: &GlobalTropFSMetric,
    sample: &[SpectrumPoint],
    cfg: &MaConfig,
    arch_tolerance: f64,
) -> Result<MassCheckReport> {
    let mut entries = Vec::new();
    for x in sample {
        if !x.is_zariski_dense() {
            return Err(Error::input(format!("{x} does not have Zariski-dense image")));
        }
        let meas = ma_at(phi, *x, cfg)?;
        let (deviation, flagged) = match &meas.total_mass {
            Mass::Exact(q) => {
                let dev = (q - phi.d()).abs();
                (q_to_f64(&dev), !dev.is_zero())
            }
            Mass::Approx(v) => {
                let dev = (v - q_to_f64(phi.d())).abs();
                (dev, dev > arch_tolerance)
            }
        };
        entries.push(MassCheckEntry { base: *x, mass: meas.total_mass, deviation, flagged });
    }
    let max_deviation = entries.iter().map(|e| e.deviation).fold(0.0, f64::max);
    let flagged = entries.iter().any(|e| e.flagged);
    Ok(MassCheckReport { entries, max_deviation, flagged })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NondegeneracyReport {
    pub nondegenerate: bool,
    pub mass: Q,
    pub measure: FiberMeasure,
}

/// Mass of the measure over the trivial point of the spectrum.
pub fn nondegeneracy_check(phi: &GlobalTropFSMetric) -> Result<NondegeneracyReport> {
    let measure = ma_nonarch(phi, SpectrumPoint::trivial())?;
    let mass = match &measure.total_mass {
        Mass::Exact(q) => q.clone(),
        Mass::Approx(_) => unreachable!(),
    };
    Ok(NondegeneracyReport { nondegenerate: mass.is_positive(), mass, measure })
}
