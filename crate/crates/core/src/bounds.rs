//! Interval bounds on treatment effects under rank invariance, from
//! spectral runs carried out separately in each treatment arm.
//!
//! Each arm keeps its own latent ordering; only label-free summaries (max and
//! min of stratum means over states with mass) are combined across arms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{assumptions, Error, Result};
use crate::npsem::Npsem;
use crate::pipelines::{PipelineDesign, PipelineOptions};
use crate::prob::{project_to_simplex, ProbTensor};
use crate::spectral::{hs_decompose, HsDiagnostics};
use crate::linalg;

/// States at or below this mass do not enter the essential sup/inf.
pub const STATE_MASS_TOL: f64 = 1e-10;
/// Widths at or below this count as point identification.
pub const POINT_TOL: f64 = 1e-7;
/// Lower bounds may exceed upper ones by this much before the data refute
/// rank invariance.
pub const ORDER_TOL: f64 = 1e-9;
/// Ties in oracle stratum means are resolved at this tolerance.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Membership with slack `tol` on both ends.
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }
}

/// Per-arm results. Latent states are in the arm's own order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDiagnostics {
    pub arm: usize,
    pub hs: HsDiagnostics,
    /// `m_x(w)` (outcome design) or `m_x(w, v)` flattened `[w][v]` (auxiliary).
    pub stratum_means: Vec<f64>,
    /// `f_{W|X=x}` (outcome) or `f_{WV|X=x}` flattened `[w][v]` (auxiliary).
    pub stratum_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBounds {
    pub v: usize,
    pub s_lower: f64,
    pub s_upper: f64,
    pub treated_weight: f64,
    pub untreated_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub design: PipelineDesign,
    /// Outcome design: `s̲` and `s̄`. Auxiliary design: the extremes over `v`.
    pub s_lower: f64,
    pub s_upper: f64,
    /// Auxiliary design: `s̲(v)`, `s̄(v)` with `f_{V|X}` weights.
    pub per_v: Vec<StratumBounds>,
    pub att: Interval,
    pub atu: Interval,
    pub point_identified: bool,
    /// Largest absolute outcome level; the finite moment bound the rank
    /// invariance assumption asks for holds automatically.
    pub outcome_bound: f64,
    pub arms: Vec<ArmDiagnostics>,
}

/// `(s̲, s̄)` from per-arm stratum means and masses.
pub fn extreme_contrasts(m0: &[f64], mass0: &[f64], m1: &[f64], mass1: &[f64]) -> (f64, f64) {
    let ext = |m: &[f64], mass: &[f64]| {
        m.iter().zip(mass).filter(|(_, p)| **p > STATE_MASS_TOL).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(*v), hi.max(*v))
        })
    };
    let (lo0, hi0) = ext(m0, mass0);
    let (lo1, hi1) = ext(m1, mass1);
    (lo1 - lo0, hi1 - hi0)
}

fn binary_treatment(joint: &ProbTensor, x: &str) -> Result<()> {
    let n = joint.axis(x)?.cardinality;
    if n != 2 {
        return Err(Error::NonBinaryTreatment { cardinality: n });
    }
    Ok(())
}

fn refuted(lower: f64, upper: f64, assumption: &'static str) -> Result<()> {
    if lower > upper + ORDER_TOL {
        return Err(Error::RankInvarianceRefuted { lower, upper, assumption });
    }
    Ok(())
}

/// Bounds with an outcome proxy. The joint covers `(Y, Z, V, X)`.
pub fn bounds_outcome_proxy(joint: &ProbTensor, opts: &PipelineOptions) -> Result<BoundsReport> {
    let r = &opts.roles;
    binary_treatment(joint, &r.x)?;
    let levels = joint.axis(&r.y)?.numeric_levels()?.to_vec();
    let labels = PipelineDesign::Outcome.labels();
    let arranged = joint.marginal(&[&r.x, &r.y, &r.z, &r.v])?;
    let mut arms = Vec::with_capacity(2);
    for x in 0..2 {
        let stratum = format!("{}={x}", r.x);
        let slice = arranged.slice(&r.x, x).map_err(|e| e.in_stratum(&stratum).relabel_assumptions(&labels))?;
        let hs = hs_decompose(&slice, &r.z, &r.y, &r.v, &opts.hs)
            .map_err(|e| e.in_stratum(&stratum).relabel_assumptions(&labels))?;
        let fy = hs.c_given_w.to_matrix();
        let fwv = hs.w_given_v.to_matrix();
        let fv = slice.marginal(&[&r.v])?;
        let means: Vec<f64> = (0..fy.ncols()).map(|w| levels.iter().enumerate().map(|(y, l)| l * fy[(y, w)]).sum()).collect();
        let mass: Vec<f64> =
            (0..fwv.nrows()).map(|w| fv.values().iter().enumerate().map(|(v, p)| fwv[(w, v)] * p).sum()).collect();
        arms.push(ArmDiagnostics { arm: x, hs: hs.diagnostics, stratum_means: means, stratum_mass: mass });
    }
    let (lower, upper) =
        extreme_contrasts(&arms[0].stratum_means, &arms[0].stratum_mass, &arms[1].stratum_means, &arms[1].stratum_mass);
    refuted(lower, upper, assumptions::RANK_INVARIANCE)?;
    let interval = Interval { lower, upper };
    Ok(BoundsReport {
        design: PipelineDesign::Outcome,
        s_lower: lower,
        s_upper: upper,
        per_v: Vec::new(),
        att: interval,
        atu: interval,
        point_identified: (upper - lower).abs() <= POINT_TOL,
        outcome_bound: levels.iter().fold(0.0, |a, l| a.max(l.abs())),
        arms,
    })
}

/// Bounds with an auxiliary proxy `C`, conditional on each level of `V`.
/// The joint covers `(Y, C, Z, V, X)`.
pub fn bounds_auxiliary_proxy(joint: &ProbTensor, opts: &PipelineOptions) -> Result<BoundsReport> {
    let r = &opts.roles;
    binary_treatment(joint, &r.x)?;
    let levels = joint.axis(&r.y)?.numeric_levels()?.to_vec();
    let labels = PipelineDesign::Auxiliary.labels();
    let f_vx = joint.matrix(&r.v, &r.x)?;
    let nv = f_vx.nrows();
    for v in 0..nv {
        for x in 0..2 {
            if !(f_vx[(v, x)] > 0.0) {
                return Err(Error::ZeroConditioningCell {
                    cell: format!("({}={v}, {}={x})", r.v, r.x),
                    assumption: labels.positivity,
                });
            }
        }
    }
    let arranged = joint.marginal(&[&r.x, &r.y, &r.c, &r.z, &r.v])?;
    let ny = levels.len();
    let k = opts.latent_dim();
    let mut arms = Vec::with_capacity(2);
    for x in 0..2 {
        let stratum = format!("{}={x}", r.x);
        let fail = |e: Error| e.in_stratum(&stratum).relabel_assumptions(&labels);
        let slice = arranged.slice(&r.x, x).map_err(fail)?;
        let hs = hs_decompose(&slice.marginal(&[&r.c, &r.z, &r.v])?, &r.z, &r.c, &r.v, &opts.hs).map_err(fail)?;
        let fz = hs.z_given_w.to_matrix();
        // f_{ZYV|x} as Z x (Y·V), solved for f_{YWV|x}.
        let b = slice.marginal(&[&r.z, &r.y, &r.v])?;
        let b = DMatrix::from_row_slice(fz.nrows(), ny * nv, b.values());
        let h = linalg::lstsq(&fz, &b, opts.solve_condition_limit).map_err(fail)?;
        let mut flat: Vec<f64> = h.iter().copied().collect();
        let (distance, _) = project_to_simplex(&mut flat);
        if distance > opts.projection_tol {
            return Err(fail(Error::NonStochasticSolution { distance, stratum: None, assumption: labels.completeness }));
        }
        let h = DMatrix::from_vec(h.nrows(), h.ncols(), flat);
        let mut means = vec![0.0; k * nv];
        let mut mass = vec![0.0; k * nv];
        for w in 0..k {
            for v in 0..nv {
                let p: f64 = (0..ny).map(|y| h[(w, y * nv + v)]).sum();
                mass[w * nv + v] = p;
                if p > 0.0 {
                    means[w * nv + v] = (0..ny).map(|y| levels[y] * h[(w, y * nv + v)]).sum::<f64>() / p;
                }
            }
        }
        arms.push(ArmDiagnostics { arm: x, hs: hs.diagnostics, stratum_means: means, stratum_mass: mass });
    }
    let column = |a: &ArmDiagnostics, v: usize| -> (Vec<f64>, Vec<f64>) {
        let fv: f64 = (0..k).map(|w| a.stratum_mass[w * nv + v]).sum();
        ((0..k).map(|w| a.stratum_means[w * nv + v]).collect(), (0..k).map(|w| a.stratum_mass[w * nv + v] / fv).collect())
    };
    let fx: Vec<f64> = (0..2).map(|x| (0..nv).map(|v| f_vx[(v, x)]).sum()).collect();
    let mut per_v = Vec::with_capacity(nv);
    for v in 0..nv {
        let (m0, p0) = column(&arms[0], v);
        let (m1, p1) = column(&arms[1], v);
        let (lower, upper) = extreme_contrasts(&m0, &p0, &m1, &p1);
        refuted(lower, upper, assumptions::V_RANK_INVARIANCE)?;
        per_v.push(StratumBounds {
            v,
            s_lower: lower,
            s_upper: upper,
            treated_weight: f_vx[(v, 1)] / fx[1],
            untreated_weight: f_vx[(v, 0)] / fx[0],
        });
    }
    let interval = |weight: fn(&StratumBounds) -> f64| Interval {
        lower: per_v.iter().map(|b| b.s_lower * weight(b)).sum(),
        upper: per_v.iter().map(|b| b.s_upper * weight(b)).sum(),
    };
    let att = interval(|b| b.treated_weight);
    let atu = interval(|b| b.untreated_weight);
    Ok(BoundsReport {
        design: PipelineDesign::Auxiliary,
        s_lower: per_v.iter().map(|b| b.s_lower).fold(f64::INFINITY, f64::min),
        s_upper: per_v.iter().map(|b| b.s_upper).fold(f64::NEG_INFINITY, f64::max),
        point_identified: per_v.iter().all(|b| (b.s_upper - b.s_lower).abs() <= POINT_TOL),
        per_v,
        att,
        atu,
        outcome_bound: levels.iter().fold(0.0, |a, l| a.max(l.abs())),
        arms,
    })
}

/// Dispatch on the design; only outcome and auxiliary designs have bounds.
pub fn bounds(design: PipelineDesign, joint: &ProbTensor, opts: &PipelineOptions) -> Result<BoundsReport> {
    match design {
        PipelineDesign::Outcome => bounds_outcome_proxy(joint, opts),
        PipelineDesign::Auxiliary => bounds_auxiliary_proxy(joint, opts),
        other => Err(Error::InvalidInput(format!("no bounds for the {other} design"))),
    }
}

/// Oracle stratum effects of a binary `X`: per cell of `given` (which must
/// include `W`), `(E[Y(0)|cell], E[Y(1)−Y(0)|cell], P(cell))`.
pub fn oracle_stratum_effects(model: &Npsem, given: &[&str]) -> Result<Vec<(f64, f64, f64)>> {
    let x = model.role("X")?;
    let cf = model.counterfactual_joint(&[x.as_str()])?;
    let (a0, a1) = (cf.axis_name(&[0]), cf.axis_name(&[1]));
    let mut keep: Vec<&str> = vec![a0.as_str(), a1.as_str()];
    keep.extend_from_slice(given);
    let t = cf.tensor.marginal(&keep)?;
    let y0 = t.axes()[0].numeric_levels()?.to_vec();
    let y1 = t.axes()[1].numeric_levels()?.to_vec();
    let cells: usize = t.axes()[2..].iter().map(|s| s.cardinality).product();
    let mut out = vec![(0.0, 0.0, 0.0); cells];
    for (flat, p) in t.values().iter().enumerate() {
        let cell = flat % cells;
        let i1 = (flat / cells) % y1.len();
        let i0 = flat / cells / y1.len();
        out[cell].0 += p * y0[i0];
        out[cell].1 += p * (y1[i1] - y0[i0]);
        out[cell].2 += p;
    }
    Ok(out
        .into_iter()
        .map(|(s0, d, p)| if p > 0.0 { (s0 / p, d / p, p) } else { (0.0, 0.0, 0.0) })
        .collect())
}

fn monotone_implication(cells: &[(f64, f64, f64)]) -> bool {
    let live: Vec<_> = cells.iter().filter(|c| c.2 > 0.0).collect();
    live.iter().all(|a| live.iter().all(|b| !(b.0 >= a.0 - TIE_TOL) || b.1 >= a.1 - TIE_TOL))
}

/// Whether larger untreated stratum means come with weakly larger stratum
/// effects, over every pair of latent states. Oracle-side check only: the
/// property cannot be verified from observables.
pub fn check_rank_invariance(model: &Npsem) -> Result<bool> {
    let w = model.role("W")?;
    Ok(monotone_implication(&oracle_stratum_effects(model, &[w.as_str()])?))
}

/// The same implication within every level of `V`.
pub fn check_v_rank_invariance(model: &Npsem) -> Result<bool> {
    let w = model.role("W")?;
    let v = model.role("V")?;
    let cells = oracle_stratum_effects(model, &[v.as_str(), w.as_str()])?;
    let nw = model.node(&w)?.cardinality;
    Ok(cells.chunks(nw).all(monotone_implication))
}
