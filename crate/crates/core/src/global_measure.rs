// SPDX-License-Identifier: Apache-2.0

//! Integration against the global Monge-Ampere measure: fiber measures
//! averaged over the spectrum with respect to `mu`.

use rayon::prelude::*;

use crate::adelic::{analytic_boundary_green, BoundaryDivisor};
use crate::arith::q_to_f64;
use crate::error::{Error, Result};
use crate::fiber::FiberPoint;
use crate::metric::{green_eval, GlobalTropFSMetric, GreenFunction, GreenValue};
use crate::monge_ampere::{ma_arch, ma_nonarch, ArchGrid};
use crate::spectrum::{MuQuadratureConfig, Place, QuadraturePlan, SpectrumPoint};

/// Bounded continuous test functions on the analytification.
#[derive(Clone, Debug)]
pub enum TestFunction {
    Constant(f64),
    /// `min(g, cap)` for a Green function of an effective divisor.
    GreenCapped { green: GreenFunction, cap: f64 },
    /// `min(g~, cap)` for the analytic Green function of a boundary divisor.
    BoundaryCapped { boundary: BoundaryDivisor, cap: f64 },
    Linear(Vec<(f64, TestFunction)>),
}

/// A test function restricted to one point of a fiber, as a function of
/// the fiber's scale `s`: `-ln t` on p-adic branches, `eps` at infinity.
#[derive(Clone, Debug)]
enum Profile {
    Const(f64),
    Capped { slope: f64, offset: f64, cap: f64 },
    Sum(Vec<(f64, Profile)>),
}

impl Profile {
    fn at(&self, s: f64) -> f64 {
        match self {
            Profile::Const(c) => *c,
            Profile::Capped { slope, offset, cap } => (slope * s + offset).min(*cap),
            Profile::Sum(v) => v.iter().map(|(c, p)| c * p.at(s)).sum(),
        }
    }
}

fn capped(g: GreenValue, cap: f64, x: &FiberPoint) -> Result<f64> {
    match g {
        GreenValue::PlusInfinity => Ok(cap),
        GreenValue::MinusInfinity => Err(Error::Evaluation(format!("test function is unbounded below at {x}"))),
        g => Ok(g.to_f64().min(cap)),
    }
}

fn capped_profile(g: GreenValue, cap: f64, x: &FiberPoint) -> Result<Profile> {
    match g {
        GreenValue::PlusInfinity => Ok(Profile::Const(cap)),
        GreenValue::MinusInfinity => Err(Error::Evaluation(format!("test function is unbounded below at {x}"))),
        GreenValue::Exact { units, constant, .. } => {
            Ok(Profile::Capped { slope: q_to_f64(&units), offset: q_to_f64(&constant), cap })
        }
        GreenValue::Real(v) => Ok(Profile::Capped { slope: v / x.base().t(), offset: 0.0, cap }),
    }
}

impl TestFunction {
    pub fn eval(&self, x: &FiberPoint) -> Result<f64> {
        match self {
            TestFunction::Constant(c) => Ok(*c),
            TestFunction::GreenCapped { green, cap } => capped(green_eval(green, x)?, *cap, x),
            TestFunction::BoundaryCapped { boundary, cap } => capped(analytic_boundary_green(boundary, x)?, *cap, x),
            TestFunction::Linear(v) => {
                let mut acc = 0.0;
                for (c, f) in v {
                    acc += c * f.eval(x)?;
                }
                Ok(acc)
            }
        }
    }

    /// Whether values scale linearly with the fiber scale before capping.
    fn scales(&self) -> bool {
        match self {
            TestFunction::Constant(_) => true,
            TestFunction::GreenCapped { green, .. } => green.metric.is_pure(),
            TestFunction::BoundaryCapped { boundary, .. } => boundary.green.metric.is_pure(),
            TestFunction::Linear(v) => v.iter().all(|(_, f)| f.scales()),
        }
    }

    fn profile(&self, x: &FiberPoint) -> Result<Profile> {
        match self {
            TestFunction::Constant(c) => Ok(Profile::Const(*c)),
            TestFunction::GreenCapped { green, cap } => capped_profile(green_eval(green, x)?, *cap, x),
            TestFunction::BoundaryCapped { boundary, cap } => {
                capped_profile(analytic_boundary_green(boundary, x)?, *cap, x)
            }
            TestFunction::Linear(v) => {
                Ok(Profile::Sum(v.iter().map(|(c, f)| Ok((*c, f.profile(x)?))).collect::<Result<_>>()?))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalConfig {
    pub quadrature: MuQuadratureConfig,
    /// Archimedean grid resolution; halved for the error estimate.
    pub resolution: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig { quadrature: MuQuadratureConfig::default(), resolution: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalIntegral {
    pub value: f64,
    /// Error from primes above the cutoff.
    pub mu_tail: f64,
    /// Midpoint-rule error along branches.
    pub quad_err: f64,
    /// Grid error on the Archimedean fibers.
    pub arch_err: f64,
}

impl GlobalIntegral {
    pub fn total_err(&self) -> f64 {
        self.mu_tail + self.quad_err + self.arch_err
    }
}

/// `int f dMA(phi)` over one fiber.
pub fn fiber_integral(phi: &GlobalTropFSMetric, f: &TestFunction, base: SpectrumPoint, resolution: usize) -> Result<f64> {
    if base.place() == Place::Infinity && !base.is_trivial() {
        let grid = ma_arch(phi, base, resolution)?.grid.unwrap();
        grid_integral(&grid, f, base)
    } else {
        let meas = ma_nonarch(phi, base)?;
        let mut acc = 0.0;
        for a in &meas.atoms {
            acc += q_to_f64(&a.mass) * f.eval(&a.point)?;
        }
        Ok(acc)
    }
}

fn grid_integral(grid: &ArchGrid, f: &TestFunction, base: SpectrumPoint) -> Result<f64> {
    let parts: Vec<Result<f64>> = grid
        .cells
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = 0.0;
            for c in chunk {
                acc += c.mass * f.eval(&cell_point(base, c)?)?;
            }
            Ok(acc)
        })
        .collect();
    parts.into_iter().sum()
}

fn cell_point(base: SpectrumPoint, c: &crate::monge_ampere::ArchCell) -> Result<FiberPoint> {
    let x = FiberPoint::arch(base, c.z)?;
    Ok(match c.chart {
        crate::metric::Chart::A => x,
        crate::metric::Chart::B => x.invert(),
    })
}

/// Weighted profiles of a fiber measure, valid on a whole branch.
fn branch_profiles(
    phi: &GlobalTropFSMetric,
    f: &TestFunction,
    place: Place,
    resolution: usize,
) -> Result<(Vec<(f64, Profile)>, Option<(Vec<(f64, Profile)>, f64)>)> {
    match place {
        Place::Prime(p) => {
            let base = SpectrumPoint::p_adic(p, (-1.0f64).exp())?;
            let meas = ma_nonarch(phi, base)?;
            let v = meas
                .atoms
                .iter()
                .map(|a| Ok((q_to_f64(&a.mass), f.profile(&a.point)?)))
                .collect::<Result<_>>()?;
            Ok((v, None))
        }
        Place::Infinity => {
            let base = SpectrumPoint::archimedean(1.0)?;
            let cells = |res: usize| -> Result<(Vec<(f64, Profile)>, f64)> {
                let grid = ma_arch(phi, base, res)?.grid.unwrap();
                let v = grid
                    .cells
                    .par_iter()
                    .map(|c| Ok((c.mass, f.profile(&cell_point(base, c)?)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((v, grid.negative_dust))
            };
            let fine = cells(resolution)?;
            let coarse = cells(resolution / 2)?;
            Ok((fine.0, Some((coarse.0, fine.1))))
        }
    }
}

fn profile_sum(v: &[(f64, Profile)], s: f64) -> f64 {
    v.iter().map(|(m, p)| m * p.at(s)).sum()
}

struct BranchResult {
    fine: f64,
    coarse: f64,
    /// Archimedean only: average of `I_N - I_{N/2}` and the dust bound.
    arch: Option<(f64, f64)>,
}

fn scale_of(place: Place, t: f64) -> f64 {
    match place {
        Place::Infinity => t,
        Place::Prime(_) => -t.ln(),
    }
}

fn branch_scaling(
    phi: &GlobalTropFSMetric,
    f: &TestFunction,
    place: Place,
    cfg: &GlobalConfig,
) -> Result<BranchResult> {
    let (fine_p, arch) = branch_profiles(phi, f, place, cfg.resolution)?;
    let avg = |nodes: &[f64], prof: &[(f64, Profile)]| {
        nodes.iter().map(|&t| profile_sum(prof, scale_of(place, t))).sum::<f64>() / nodes.len() as f64
    };
    let fine_nodes = QuadraturePlan::nodes(cfg.quadrature.nodes);
    let coarse_nodes = QuadraturePlan::nodes(cfg.quadrature.nodes / 2);
    let fine = avg(&fine_nodes, &fine_p);
    let coarse = avg(&coarse_nodes, &fine_p);
    let arch = arch.map(|(coarse_p, dust)| {
        let diff = fine - avg(&fine_nodes, &coarse_p);
        let sup = fine_p.iter().map(|(_, p)| p.at(1.0).abs()).fold(0.0, f64::max);
        (diff, dust * sup)
    });
    Ok(BranchResult { fine, coarse, arch })
}

fn branch_direct(phi: &GlobalTropFSMetric, f: &TestFunction, place: Place, cfg: &GlobalConfig) -> Result<BranchResult> {
    let at = |t: f64, res: usize| -> Result<(f64, f64)> {
        let base = SpectrumPoint::new(place, t)?;
        match place {
            Place::Infinity => {
                let grid = ma_arch(phi, base, res)?.grid.unwrap();
                Ok((grid_integral(&grid, f, base)?, grid.negative_dust))
            }
            Place::Prime(_) => Ok((fiber_integral(phi, f, base, res)?, 0.0)),
        }
    };
    let fine_nodes = QuadraturePlan::nodes(cfg.quadrature.nodes);
    let coarse_nodes = QuadraturePlan::nodes(cfg.quadrature.nodes / 2);
    let mut fine = 0.0;
    let mut diff = 0.0;
    let mut dust: f64 = 0.0;
    for &t in &fine_nodes {
        let (v, d) = at(t, cfg.resolution)?;
        fine += v;
        dust = dust.max(d);
        if place == Place::Infinity {
            diff += v - at(t, cfg.resolution / 2)?.0;
        }
    }
    let mut coarse = 0.0;
    for &t in &coarse_nodes {
        coarse += at(t, cfg.resolution)?.0;
    }
    let n = fine_nodes.len() as f64;
    let arch = (place == Place::Infinity).then_some((diff / n, dust));
    Ok(BranchResult { fine: fine / n, coarse: coarse / coarse_nodes.len() as f64, arch })
}

/// `int_{Spec Z} (int f dMA_x(phi)) dmu(x)`.
pub fn global_ma_integrate(phi: &GlobalTropFSMetric, f: &TestFunction, cfg: &GlobalConfig) -> Result<GlobalIntegral> {
    let plan = QuadraturePlan::new(cfg.quadrature)?;
    let scaling = phi.is_pure() && f.scales();
    let results: Vec<Result<BranchResult>> = plan
        .branches
        .par_iter()
        .map(|&pl| if scaling { branch_scaling(phi, f, pl, cfg) } else { branch_direct(phi, f, pl, cfg) })
        .collect();
    let mut fine = Vec::with_capacity(results.len());
    let mut coarse = Vec::with_capacity(results.len());
    let mut arch = (0.0, 0.0);
    for r in results {
        let r = r?;
        if !r.fine.is_finite() || !r.coarse.is_finite() {
            return Err(Error::Evaluation("fiber integral is not finite".into()));
        }
        fine.push(r.fine);
        coarse.push(r.coarse);
        if let Some(a) = r.arch {
            arch = a;
        }
    }
    let est = plan.combine(&fine, &coarse);
    let total = plan.total.partial + plan.total.tail.mid;
    let w = plan.weights[0] / total;
    Ok(GlobalIntegral {
        value: est.value,
        mu_tail: est.tail_err,
        quad_err: est.quad_err,
        arch_err: w * (arch.0.abs() + arch.1),
    })
}
