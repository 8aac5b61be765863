//! Two-stage identification of `f_{Y|WX}` and `f_{WX}` from proxy triples,
//! and the estimands that do not depend on how latent states are labeled.
//!
//! Every pipeline runs one spectral decomposition in a reference stratum and
//! reaches the remaining strata through linear solves against the shared
//! `f_{Z|W}`, which pins a single latent ordering across strata.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{assumptions, AssumptionLabels, Error, Result};
use crate::linalg;
use crate::prob::{check_permutation, project_to_simplex, MarkovKernel, ProbTensor, VarSpace};
use crate::spectral::{hs_decompose, Alignment, HsDiagnostics, HsOptions, SOLVE_CONDITION_LIMIT};

/// Largest tolerated distance between a solved kernel and its simplex projection.
pub const PROJECTION_TOL: f64 = 1e-4;
/// CATE values closer than this are merged into one atom.
pub const ATOM_MERGE_TOL: f64 = 1e-9;
/// Slack used when inverting discrete CDFs.
pub const QUANTILE_SLACK: f64 = 1e-12;
pub const DEFAULT_QTE_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineDesign {
    Outcome,
    Treatment,
    CondTreatment,
    Auxiliary,
}

impl PipelineDesign {
    pub const ALL: [PipelineDesign; 4] =
        [PipelineDesign::Outcome, PipelineDesign::Treatment, PipelineDesign::CondTreatment, PipelineDesign::Auxiliary];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineDesign::Outcome => "outcome",
            PipelineDesign::Treatment => "treatment",
            PipelineDesign::CondTreatment => "cond-treatment",
            PipelineDesign::Auxiliary => "auxiliary",
        }
    }

    /// Assumption names this design attaches to spectral failures.
    pub fn labels(self) -> AssumptionLabels {
        use assumptions::*;
        match self {
            PipelineDesign::Outcome => AssumptionLabels {
                positivity: POSITIVITY,
                completeness: STRATUM_COMPLETENESS,
                distinguishability: OUTCOME_DISTINGUISHABILITY,
            },
            PipelineDesign::Treatment => AssumptionLabels {
                positivity: POSITIVITY,
                completeness: HS_COMPLETENESS,
                distinguishability: TREATMENT_DISTINGUISHABILITY,
            },
            PipelineDesign::CondTreatment => AssumptionLabels {
                positivity: POSITIVITY,
                completeness: OUTCOME_STRATUM_COMPLETENESS,
                distinguishability: COND_TREATMENT_DISTINGUISHABILITY,
            },
            PipelineDesign::Auxiliary => AssumptionLabels {
                positivity: AUX_POSITIVITY,
                completeness: STRATUM_COMPLETENESS,
                distinguishability: AUX_DISTINGUISHABILITY,
            },
        }
    }

    /// Axes the observed joint must carry, in role terms.
    pub fn required_roles(self) -> &'static [&'static str] {
        match self {
            PipelineDesign::Outcome => &["Y", "Z", "V", "X"],
            PipelineDesign::Treatment => &["Y", "Z", "X", "V"],
            PipelineDesign::CondTreatment => &["X", "Z", "V", "Y"],
            PipelineDesign::Auxiliary => &["Y", "C", "Z", "V", "X"],
        }
    }
}

impl fmt::Display for PipelineDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineDesign::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown design `{s}`")))
    }
}

/// Axis names playing each role in the observed joint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub y: String,
    pub x: String,
    pub z: String,
    pub v: String,
    pub c: String,
}

impl Default for Roles {
    fn default() -> Self {
        Roles { y: "Y".into(), x: "X".into(), z: "Z".into(), v: "V".into(), c: "C".into() }
    }
}

impl Roles {
    pub fn get(&self, role: &str) -> &str {
        match role {
            "Y" => &self.y,
            "X" => &self.x,
            "Z" => &self.z,
            "V" => &self.v,
            "C" => &self.c,
            other => panic!("unknown role {other}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub hs: HsOptions,
    pub roles: Roles,
    pub solve_condition_limit: f64,
    pub projection_tol: f64,
}

impl PipelineOptions {
    pub fn new(latent_dim: usize) -> PipelineOptions {
        PipelineOptions {
            hs: HsOptions::new(latent_dim),
            roles: Roles::default(),
            solve_condition_limit: SOLVE_CONDITION_LIMIT,
            projection_tol: PROJECTION_TOL,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> PipelineOptions {
        self.hs.seed = seed;
        self
    }

    pub fn latent_dim(&self) -> usize {
        self.hs.latent_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    Spectral,
    Solve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub stratum: String,
    pub kind: StageKind,
    /// Condition number of the `f_{Z|W}` system used in this stage.
    pub condition: f64,
    pub projection_distance: f64,
    pub hs: Option<HsDiagnostics>,
}

/// `f_{Y|WX}` and `f_{WX}` with one latent ordering shared by all strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentOutcomeModel {
    pub design: PipelineDesign,
    /// Targets `[Y]`, given `[W, X]`.
    pub y_given_wx: MarkovKernel,
    /// Axes `[W, X]`.
    pub wx_joint: ProbTensor,
    /// Auxiliary design only: targets `[Y]`, given `[W, V, X]`.
    pub y_given_wvx: Option<MarkovKernel>,
    /// Auxiliary design only: axes `[V, W, X]`.
    pub vwx_joint: Option<ProbTensor>,
    /// Targets `[Z]`, given `[W]`.
    pub z_given_w: MarkovKernel,
    pub alignment: Alignment,
    pub stages: Vec<StageDiagnostics>,
}

fn expect_axes(joint: &ProbTensor, design: PipelineDesign, roles: &Roles) -> Result<()> {
    let mut want: Vec<&str> = design.required_roles().iter().map(|r| roles.get(r)).collect();
    let mut have = joint.axis_names();
    want.sort_unstable();
    have.sort_unstable();
    if want != have {
        return Err(Error::AxisMismatch(format!(
            "{design} design needs a joint over {:?}, found {:?}",
            want, have
        )));
    }
    Ok(())
}

fn fail(labels: AssumptionLabels, stratum: &str) -> impl Fn(Error) -> Error {
    let stratum = stratum.to_string();
    move |e| e.in_stratum(&stratum).relabel_assumptions(&labels)
}

fn column_projection(m: &mut DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for mut col in m.column_iter_mut() {
        let mut v: Vec<f64> = col.iter().copied().collect();
        worst = worst.max(project_to_simplex(&mut v).0);
        col.iter_mut().zip(v).for_each(|(d, s)| *d = s);
    }
    worst
}

struct Solver<'a> {
    fz: &'a DMatrix<f64>,
    opts: &'a PipelineOptions,
    labels: AssumptionLabels,
}

impl Solver<'_> {
    fn condition(&self) -> f64 {
        linalg::condition_number(self.fz)
    }

    fn check(&self, distance: f64, stratum: &str) -> Result<()> {
        if distance > self.opts.projection_tol {
            return Err(Error::NonStochasticSolution {
                distance,
                stratum: Some(stratum.to_string()),
                assumption: self.labels.completeness,
            });
        }
        Ok(())
    }

    /// Solve `f_{Z|W} X = b` for a Markov kernel `X`, column by column.
    fn kernel(&self, b: &DMatrix<f64>, stratum: &str) -> Result<(DMatrix<f64>, f64)> {
        let mut x = linalg::lstsq(self.fz, b, self.opts.solve_condition_limit).map_err(fail(self.labels, stratum))?;
        let distance = column_projection(&mut x);
        self.check(distance, stratum)?;
        Ok((x, distance))
    }

    /// Solve `f_{Z|W} H = b` where `H` is a block of a joint pmf with the
    /// same total mass as `b`; the projection acts on `H` as a whole.
    fn joint(&self, b: &DMatrix<f64>, stratum: &str) -> Result<(DMatrix<f64>, f64)> {
        let x = linalg::lstsq(self.fz, b, self.opts.solve_condition_limit).map_err(fail(self.labels, stratum))?;
        let total = b.sum();
        let mut flat: Vec<f64> = x.iter().map(|v| v / total).collect();
        let (distance, _) = project_to_simplex(&mut flat);
        self.check(distance, stratum)?;
        let h = DMatrix::from_iterator(x.nrows(), x.ncols(), flat.into_iter().map(|v| v * total));
        Ok((h, distance))
    }
}

/// Spectral step in the heaviest stratum, linear solves everywhere else.
struct Stratified {
    z_given_w: MarkovKernel,
    /// Per stratum, `K x |V|`.
    w_given_v: Vec<DMatrix<f64>>,
    /// Per stratum, `|C| x K`; empty when not requested.
    c_given_w: Vec<DMatrix<f64>>,
    stages: Vec<StageDiagnostics>,
}

fn stratified(
    joint: &ProbTensor,
    axes: [&str; 4],
    opts: &PipelineOptions,
    labels: AssumptionLabels,
    with_c: bool,
) -> Result<Stratified> {
    let [s, c, z, v] = axes;
    let fs = joint.marginal(&[s])?;
    for (i, &p) in fs.values().iter().enumerate() {
        if !(p > 0.0) {
            return Err(Error::ZeroConditioningCell { cell: format!("({s}={i})"), assumption: labels.positivity });
        }
    }
    let reference = argmax(fs.values());
    let arranged = joint.marginal(&[s, c, z, v])?;
    let label = |i: usize| format!("{s}={i}");
    let k = opts.latent_dim();

    let reference_label = label(reference);
    let hs = hs_decompose(&arranged.slice(s, reference)?, z, c, v, &opts.hs).map_err(fail(labels, &reference_label))?;
    let fz = hs.z_given_w.to_matrix();
    let solver = Solver { fz: &fz, opts, labels };
    let ns = fs.values().len();
    let mut w_given_v = vec![DMatrix::zeros(0, 0); ns];
    let mut c_given_w = vec![DMatrix::zeros(0, 0); ns];
    w_given_v[reference] = hs.w_given_v.to_matrix();
    c_given_w[reference] = hs.c_given_w.to_matrix();
    let mut stages = vec![StageDiagnostics {
        stratum: reference_label,
        kind: StageKind::Spectral,
        condition: hs.diagnostics.condition_z_given_w,
        projection_distance: hs.diagnostics.max_negativity_clipped,
        hs: Some(hs.diagnostics.clone()),
    }];

    for i in (0..ns).filter(|&i| i != reference) {
        let stratum = label(i);
        let sl = arranged.slice(s, i)?;
        let a = sl.marginal(&[z, v])?.condition(&[v]).map_err(fail(labels, &stratum))?.to_matrix();
        let (fwv, mut distance) = solver.kernel(&a, &stratum)?;
        w_given_v[i] = fwv;
        if with_c {
            let b = sl.matrix(z, c)?;
            let (h, d) = solver.joint(&b, &stratum)?;
            distance = distance.max(d);
            let mut fc = DMatrix::zeros(b.ncols(), k);
            for w in 0..k {
                let mass: f64 = h.row(w).sum();
                if !(mass > 0.0) {
                    return Err(Error::ZeroConditioningCell {
                        cell: format!("(W={w}) [stratum {stratum}]"),
                        assumption: labels.positivity,
                    });
                }
                for ci in 0..b.ncols() {
                    fc[(ci, w)] = h[(w, ci)] / mass;
                }
            }
            c_given_w[i] = fc;
        }
        stages.push(StageDiagnostics {
            stratum,
            kind: StageKind::Solve,
            condition: solver.condition(),
            projection_distance: distance,
            hs: None,
        });
    }
    Ok(Stratified { z_given_w: hs.z_given_w, w_given_v, c_given_w, stages })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

fn latent_space(opts: &PipelineOptions) -> VarSpace {
    VarSpace::new(opts.hs.latent_name.clone(), opts.latent_dim())
}

/// Split a joint `f_{YWX}` (indexed `[y][w][x]`) into `f_{Y|WX}` and `f_{WX}`.
fn split_ywx(
    ywx: &[f64],
    ys: &VarSpace,
    ws: &VarSpace,
    xs: &VarSpace,
    positivity: &'static str,
) -> Result<(MarkovKernel, ProbTensor)> {
    let (ny, k, nx) = (ys.cardinality, ws.cardinality, xs.cardinality);
    let mut wx = vec![0.0; k * nx];
    for y in 0..ny {
        for g in 0..k * nx {
            wx[g] += ywx[y * k * nx + g];
        }
    }
    if let Some(g) = wx.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::ZeroConditioningCell {
            cell: format!("({}={}, {}={})", ws.name, g / nx, xs.name, g % nx),
            assumption: positivity,
        });
    }
    let cond: Vec<f64> = ywx.iter().enumerate().map(|(i, p)| p / wx[i % (k * nx)]).collect();
    let kernel = MarkovKernel::new(vec![ys.clone()], vec![ws.clone(), xs.clone()], cond)?;
    let total: f64 = wx.iter().sum();
    let joint = ProbTensor::new(vec![ws.clone(), xs.clone()], wx.iter().map(|p| p / total).collect())?;
    Ok((kernel, joint))
}

/// Identification with an outcome proxy `V` (Y acts as the third proxy
/// within each treatment stratum). The joint covers `(Y, Z, V, X)`.
pub fn identify_outcome_proxy(joint: &ProbTensor, opts: &PipelineOptions) -> Result<LatentOutcomeModel> {
    let design = PipelineDesign::Outcome;
    let r = &opts.roles;
    expect_axes(joint, design, r)?;
    let labels = design.labels();
    let st = stratified(joint, [&r.x, &r.y, &r.z, &r.v], opts, labels, true)?;
    let ys = joint.axis(&r.y)?.clone();
    let xs = joint.axis(&r.x)?.clone();
    let ws = latent_space(opts);
    let (ny, k, nx) = (ys.cardinality, ws.cardinality, xs.cardinality);
    let f_vx = joint.matrix(&r.v, &r.x)?;
    let mut ywx = vec![0.0; ny * k * nx];
    for x in 0..nx {
        let fwv = &st.w_given_v[x];
        for w in 0..k {
            let fwx: f64 = (0..f_vx.nrows()).map(|v| fwv[(w, v)] * f_vx[(v, x)]).sum();
            for y in 0..ny {
                ywx[(y * k + w) * nx + x] = st.c_given_w[x][(y, w)] * fwx;
            }
        }
    }
    let (y_given_wx, wx_joint) = split_ywx(&ywx, &ys, &ws, &xs, labels.positivity)?;
    Ok(LatentOutcomeModel {
        design,
        y_given_wx,
        wx_joint,
        y_given_wvx: None,
        vwx_joint: None,
        z_given_w: st.z_given_w,
        alignment: Alignment::AlignedToReference,
        stages: st.stages,
    })
}

/// Identification with a treatment proxy: `X` is the third proxy of the
/// spectral step. The joint covers `(Y, Z, X, V)`.
pub fn identify_treatment_proxy(joint: &ProbTensor, opts: &PipelineOptions) -> Result<LatentOutcomeModel> {
    let design = PipelineDesign::Treatment;
    let r = &opts.roles;
    expect_axes(joint, design, r)?;
    let labels = design.labels();
    let hs = hs_decompose(&joint.marginal(&[&r.z, &r.x, &r.v])?, &r.z, &r.x, &r.v, &opts.hs)
        .map_err(|e| e.relabel_assumptions(&labels))?;
    let fz = hs.z_given_w.to_matrix();
    let ys = joint.axis(&r.y)?.clone();
    let xs = joint.axis(&r.x)?.clone();
    let ws = latent_space(opts);
    let (ny, k, nx) = (ys.cardinality, ws.cardinality, xs.cardinality);
    let b = joint.marginal(&[&r.z, &r.y, &r.x])?;
    let b = DMatrix::from_row_slice(fz.nrows(), ny * nx, b.values());
    let solver = Solver { fz: &fz, opts, labels };
    let (h, distance) = solver.joint(&b, "pooled")?;
    let mut ywx = vec![0.0; ny * k * nx];
    for y in 0..ny {
        for w in 0..k {
            for x in 0..nx {
                ywx[(y * k + w) * nx + x] = h[(w, y * nx + x)];
            }
        }
    }
    let (y_given_wx, wx_joint) = split_ywx(&ywx, &ys, &ws, &xs, labels.positivity)?;
    let stages = vec![
        StageDiagnostics {
            stratum: "pooled".into(),
            kind: StageKind::Spectral,
            condition: hs.diagnostics.condition_z_given_w,
            projection_distance: hs.diagnostics.max_negativity_clipped,
            hs: Some(hs.diagnostics.clone()),
        },
        StageDiagnostics {
            stratum: "pooled".into(),
            kind: StageKind::Solve,
            condition: solver.condition(),
            projection_distance: distance,
            hs: None,
        },
    ];
    Ok(LatentOutcomeModel {
        design,
        y_given_wx,
        wx_joint,
        y_given_wvx: None,
        vwx_joint: None,
        z_given_w: hs.z_given_w,
        alignment: Alignment::AlignedToReference,
        stages,
    })
}

/// Identification when the proxy `V` may be caused by the outcome: strata
/// are levels of `Y` and `X` is the third proxy. The joint covers
/// `(X, Z, V, Y)`.
pub fn identify_cond_treatment_proxy(joint: &ProbTensor, opts: &PipelineOptions) -> Result<LatentOutcomeModel> {
    let design = PipelineDesign::CondTreatment;
    let r = &opts.roles;
    expect_axes(joint, design, r)?;
    let labels = design.labels();
    let st = stratified(joint, [&r.y, &r.x, &r.z, &r.v], opts, labels, true)?;
    let ys = joint.axis(&r.y)?.clone();
    let xs = joint.axis(&r.x)?.clone();
    let ws = latent_space(opts);
    let (ny, k, nx) = (ys.cardinality, ws.cardinality, xs.cardinality);
    let f_vy = joint.matrix(&r.v, &r.y)?;
    let mut ywx = vec![0.0; ny * k * nx];
    for y in 0..ny {
        let fwv = &st.w_given_v[y];
        for w in 0..k {
            let fwy: f64 = (0..f_vy.nrows()).map(|v| fwv[(w, v)] * f_vy[(v, y)]).sum();
            for x in 0..nx {
                ywx[(y * k + w) * nx + x] = st.c_given_w[y][(x, w)] * fwy;
            }
        }
    }
    let (y_given_wx, wx_joint) = split_ywx(&ywx, &ys, &ws, &xs, labels.positivity)?;
    Ok(LatentOutcomeModel {
        design,
        y_given_wx,
        wx_joint,
        y_given_wvx: None,
        vwx_joint: None,
        z_given_w: st.z_given_w,
        alignment: Alignment::AlignedToReference,
        stages: st.stages,
    })
}

/// Identification with an auxiliary proxy `C` (caused by `X`, may cause
/// `Y`) and a proxy `V` that may confound. The joint covers `(Y, C, Z, V, X)`.
pub fn identify_auxiliary_proxy(joint: &ProbTensor, opts: &PipelineOptions) -> Result<LatentOutcomeModel> {
    let design = PipelineDesign::Auxiliary;
    let r = &opts.roles;
    expect_axes(joint, design, r)?;
    let labels = design.labels();
    let st = stratified(joint, [&r.x, &r.c, &r.z, &r.v], opts, labels, false)?;
    let fz = st.z_given_w.to_matrix();
    let ys = joint.axis(&r.y)?.clone();
    let vs = joint.axis(&r.v)?.clone();
    let xs = joint.axis(&r.x)?.clone();
    let ws = latent_space(opts);
    let (ny, k, nv, nx) = (ys.cardinality, ws.cardinality, vs.cardinality, xs.cardinality);
    let b = joint.marginal(&[&r.z, &r.y, &r.v, &r.x])?;
    let b = DMatrix::from_row_slice(fz.nrows(), ny * nv * nx, b.values());
    let solver = Solver { fz: &fz, opts, labels };
    let (h, distance) = solver.joint(&b, "pooled")?;

    // f_{YWVX}[y][w][v][x]
    let ywvx = |y: usize, w: usize, v: usize, x: usize| h[(w, (y * nv + v) * nx + x)];
    let mut vwx = vec![0.0; nv * k * nx];
    let mut ywx = vec![0.0; ny * k * nx];
    for y in 0..ny {
        for w in 0..k {
            for v in 0..nv {
                for x in 0..nx {
                    let p = ywvx(y, w, v, x);
                    vwx[(v * k + w) * nx + x] += p;
                    ywx[(y * k + w) * nx + x] += p;
                }
            }
        }
    }
    let gcount = k * nv * nx;
    let mut cond = vec![0.0; ny * gcount];
    for w in 0..k {
        for v in 0..nv {
            for x in 0..nx {
                let mass = vwx[(v * k + w) * nx + x];
                if !(mass > 0.0) {
                    return Err(Error::ZeroConditioningCell {
                        cell: format!("({}={w}, {}={v}, {}={x})", ws.name, vs.name, xs.name),
                        assumption: labels.positivity,
                    });
                }
                for y in 0..ny {
                    cond[y * gcount + (w * nv + v) * nx + x] = ywvx(y, w, v, x) / mass;
                }
            }
        }
    }
    let y_given_wvx = MarkovKernel::new(vec![ys.clone()], vec![ws.clone(), vs.clone(), xs.clone()], cond)?;
    let total: f64 = vwx.iter().sum();
    let vwx_joint =
        ProbTensor::new(vec![vs.clone(), ws.clone(), xs.clone()], vwx.iter().map(|p| p / total).collect())?;
    let (y_given_wx, wx_joint) = split_ywx(&ywx, &ys, &ws, &xs, labels.positivity)?;
    let mut stages = st.stages;
    stages.push(StageDiagnostics {
        stratum: "pooled".into(),
        kind: StageKind::Solve,
        condition: solver.condition(),
        projection_distance: distance,
        hs: None,
    });
    Ok(LatentOutcomeModel {
        design,
        y_given_wx,
        wx_joint,
        y_given_wvx: Some(y_given_wvx),
        vwx_joint: Some(vwx_joint),
        z_given_w: st.z_given_w,
        alignment: Alignment::AlignedToReference,
        stages,
    })
}

/// Dispatch on the design tag.
pub fn identify(design: PipelineDesign, joint: &ProbTensor, opts: &PipelineOptions) -> Result<LatentOutcomeModel> {
    match design {
        PipelineDesign::Outcome => identify_outcome_proxy(joint, opts),
        PipelineDesign::Treatment => identify_treatment_proxy(joint, opts),
        PipelineDesign::CondTreatment => identify_cond_treatment_proxy(joint, opts),
        PipelineDesign::Auxiliary => identify_auxiliary_proxy(joint, opts),
    }
}

impl LatentOutcomeModel {
    pub fn latent(&self) -> &VarSpace {
        &self.wx_joint.axes()[0]
    }

    pub fn treatment(&self) -> &VarSpace {
        &self.wx_joint.axes()[1]
    }

    pub fn outcome(&self) -> &VarSpace {
        self.y_given_wx.target()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent().cardinality
    }

    /// `f_W`.
    pub fn latent_marginal(&self) -> Vec<f64> {
        let nx = self.treatment().cardinality;
        self.wx_joint.values().chunks(nx).map(|row| row.iter().sum()).collect()
    }

    /// `f_{YX}` implied by the model, axes `[Y, X]`.
    pub fn observed_yx(&self) -> Result<ProbTensor> {
        self.y_given_wx.kernel_product(&self.wx_joint)?.marginal(&[&self.outcome().name, &self.treatment().name])
    }

    /// New latent state `j` is old state `perm[j]`.
    pub fn permute_latent(&self, perm: &[usize]) -> Result<LatentOutcomeModel> {
        check_permutation(perm, self.latent_dim())?;
        let w = self.latent().name.clone();
        Ok(LatentOutcomeModel {
            y_given_wx: self.y_given_wx.permute_levels(&w, perm)?,
            wx_joint: self.wx_joint.permute_levels(&w, perm)?,
            y_given_wvx: self.y_given_wvx.as_ref().map(|k| k.permute_levels(&w, perm)).transpose()?,
            vwx_joint: self.vwx_joint.as_ref().map(|t| t.permute_levels(&w, perm)).transpose()?,
            z_given_w: self.z_given_w.permute_levels(&w, perm)?,
            ..self.clone()
        })
    }

    /// Latent order sorting the columns of `f_{Z|W}` lexicographically.
    pub fn canonical_order(&self) -> Vec<usize> {
        let fz = self.z_given_w.to_matrix();
        let mut order: Vec<usize> = (0..fz.ncols()).collect();
        order.sort_by(|&a, &b| {
            fz.column(a).iter().zip(fz.column(b).iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        order
    }

    pub fn canonicalized(&self) -> Result<LatentOutcomeModel> {
        self.permute_latent(&self.canonical_order())
    }

    /// `f_{Y(x1)WX}`, axes `[Y(x1), W, X]`.
    pub fn potential_joint(&self, x1: usize) -> Result<ProbTensor> {
        let ys = self.outcome();
        let (ny, k, nx) = (ys.cardinality, self.latent_dim(), self.treatment().cardinality);
        if x1 >= nx {
            return Err(Error::InvalidInput(format!("treatment level {x1} out of range")));
        }
        let mut values = vec![0.0; ny * k * nx];
        match (&self.y_given_wvx, &self.vwx_joint) {
            (Some(kern), Some(vwx)) => {
                let nv = vwx.axes()[0].cardinality;
                let g = k * nv * nx;
                for y in 0..ny {
                    for w in 0..k {
                        for x2 in 0..nx {
                            values[(y * k + w) * nx + x2] = (0..nv)
                                .map(|v| kern.values()[y * g + (w * nv + v) * nx + x1] * vwx.values()[(v * k + w) * nx + x2])
                                .sum();
                        }
                    }
                }
            }
            _ => {
                let g = k * nx;
                for y in 0..ny {
                    for w in 0..k {
                        for x2 in 0..nx {
                            values[(y * k + w) * nx + x2] =
                                self.y_given_wx.values()[y * g + w * nx + x1] * self.wx_joint.values()[w * nx + x2];
                        }
                    }
                }
            }
        }
        let yx = ys.renamed(format!("{}({x1})", ys.name));
        ProbTensor::from_weights(vec![yx, self.latent().clone(), self.treatment().clone()], values)
    }

    /// `E[Y | W=w, X=x]` as a `K x |X|` table.
    fn stratum_means(&self) -> Result<Vec<Vec<f64>>> {
        let levels = self.outcome().numeric_levels()?;
        let (k, nx) = (self.latent_dim(), self.treatment().cardinality);
        let g = k * nx;
        Ok((0..k)
            .map(|w| {
                (0..nx)
                    .map(|x| levels.iter().enumerate().map(|(y, l)| l * self.y_given_wx.values()[y * g + w * nx + x]).sum())
                    .collect()
            })
            .collect())
    }

    /// `β(w) = E[Y(1) − Y(0) | W=w]` per latent state.
    pub fn cate(&self) -> Result<Vec<f64>> {
        let nx = self.treatment().cardinality;
        if nx != 2 {
            return Err(Error::NonBinaryTreatment { cardinality: nx });
        }
        let levels = self.outcome().numeric_levels()?.to_vec();
        let k = self.latent_dim();
        match (&self.y_given_wvx, &self.vwx_joint) {
            (Some(kern), Some(vwx)) => {
                let nv = vwx.axes()[0].cardinality;
                let g = k * nv * nx;
                let mean = |w: usize, v: usize, x: usize| -> f64 {
                    levels.iter().enumerate().map(|(y, l)| l * kern.values()[y * g + (w * nv + v) * nx + x]).sum()
                };
                Ok((0..k)
                    .map(|w| {
                        let fv: Vec<f64> =
                            (0..nv).map(|v| (0..nx).map(|x| vwx.values()[(v * k + w) * nx + x]).sum()).collect();
                        let fw: f64 = fv.iter().sum();
                        (0..nv).map(|v| (mean(w, v, 1) - mean(w, v, 0)) * fv[v] / fw).sum()
                    })
                    .collect())
            }
            _ => Ok(self.stratum_means()?.into_iter().map(|m| m[1] - m[0]).collect()),
        }
    }
}

/// One atom of a discrete distribution function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub mass: f64,
    pub cdf: f64,
}

/// Sorted atoms of `Σ_i mass_i δ_{value_i}`, merging values within
/// [`ATOM_MERGE_TOL`].
pub fn atoms(values: &[f64], masses: &[f64]) -> Vec<Atom> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out: Vec<Atom> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for i in order {
        match out.last_mut() {
            Some(last) if values[i] - anchor <= ATOM_MERGE_TOL => last.mass += masses[i],
            _ => {
                anchor = values[i];
                out.push(Atom { value: values[i], mass: masses[i], cdf: 0.0 });
            }
        }
    }
    let mut acc = 0.0;
    for a in &mut out {
        acc += a.mass;
        a.cdf = acc;
    }
    out
}

/// Evaluate the step function described by `atoms` at `b`.
pub fn step_cdf(atoms: &[Atom], b: f64) -> f64 {
    atoms.iter().take_while(|a| a.value <= b).last().map_or(0.0, |a| a.cdf)
}

/// Left-continuous generalized inverse of a pmf over numeric levels.
pub fn quantile(levels: &[f64], pmf: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::TauOutOfRange(tau));
    }
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
    let mut acc = 0.0;
    for &i in &order {
        acc += pmf[i];
        if acc >= tau - QUANTILE_SLACK {
            return Ok(levels[i]);
        }
    }
    Ok(levels[*order.last().expect("non-empty support")])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtePoint {
    pub tau: f64,
    pub quantile_untreated: f64,
    pub quantile_treated: f64,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandDiagnostics {
    pub stages: usize,
    pub max_projection_distance: f64,
    pub min_eigen_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandReport {
    pub design: PipelineDesign,
    pub outcome: VarSpace,
    pub treatment: VarSpace,
    /// `potential[x][y] = f_{Y(x)}(y)`.
    pub potential: Vec<Vec<f64>>,
    /// `potential_given_x[x1][x2][y] = f_{Y(x1)|X}(y|x2)`.
    pub potential_given_x: Vec<Vec<Vec<f64>>>,
    pub potential_means: Vec<f64>,
    pub ate: Option<f64>,
    pub att: Option<f64>,
    pub atu: Option<f64>,
    pub qte: Vec<QtePoint>,
    /// `f_W` in canonical latent order.
    pub latent_marginal: Vec<f64>,
    /// `β(w)` in canonical latent order.
    pub cate: Option<Vec<f64>>,
    pub cate_distribution: Vec<Atom>,
    /// One atom list per treatment level.
    pub cate_distribution_given_x: Vec<Vec<Atom>>,
    pub cate_variance: Option<f64>,
    pub diagnostics: EstimandDiagnostics,
}

/// Estimands on the default quantile grid.
pub fn estimands(m: &LatentOutcomeModel) -> Result<EstimandReport> {
    estimands_with_grid(m, &DEFAULT_QTE_GRID)
}

pub fn estimands_with_grid(m: &LatentOutcomeModel, qte_grid: &[f64]) -> Result<EstimandReport> {
    let m = m.canonicalized()?;
    let levels = m.outcome().numeric_levels()?.to_vec();
    let (ny, k, nx) = (m.outcome().cardinality, m.latent_dim(), m.treatment().cardinality);
    let fx: Vec<f64> = (0..nx).map(|x| (0..k).map(|w| m.wx_joint.values()[w * nx + x]).sum()).collect();

    let mut potential = Vec::with_capacity(nx);
    let mut potential_given_x = Vec::with_capacity(nx);
    for x1 in 0..nx {
        let pj = m.potential_joint(x1)?;
        let v = pj.values();
        let mut given = vec![vec![0.0; ny]; nx];
        let mut marg = vec![0.0; ny];
        for y in 0..ny {
            for w in 0..k {
                for x2 in 0..nx {
                    let p = v[(y * k + w) * nx + x2];
                    given[x2][y] += p;
                    marg[y] += p;
                }
            }
        }
        for (x2, row) in given.iter_mut().enumerate() {
            row.iter_mut().for_each(|p| *p /= fx[x2]);
        }
        potential.push(marg);
        potential_given_x.push(given);
    }
    let mean = |pmf: &[f64]| -> f64 { pmf.iter().zip(&levels).map(|(p, l)| p * l).sum() };
    let potential_means: Vec<f64> = potential.iter().map(|p| mean(p)).collect();
    let binary = nx == 2;
    let (ate, att, atu) = if binary {
        let contrast = |x2: usize| mean(&potential_given_x[1][x2]) - mean(&potential_given_x[0][x2]);
        (Some(potential_means[1] - potential_means[0]), Some(contrast(1)), Some(contrast(0)))
    } else {
        (None, None, None)
    };
    let qte = if binary {
        qte_grid
            .iter()
            .map(|&tau| {
                let q0 = quantile(&levels, &potential[0], tau)?;
                let q1 = quantile(&levels, &potential[1], tau)?;
                Ok(QtePoint { tau, quantile_untreated: q0, quantile_treated: q1, effect: q1 - q0 })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let fw = m.latent_marginal();
    let cate = if binary { Some(m.cate()?) } else { None };
    let (cate_distribution, cate_distribution_given_x, cate_variance) = match &cate {
        Some(beta) => {
            let given_x = (0..nx)
                .map(|x| {
                    let fwx: Vec<f64> = (0..k).map(|w| m.wx_joint.values()[w * nx + x] / fx[x]).collect();
                    atoms(beta, &fwx)
                })
                .collect();
            let mu: f64 = beta.iter().zip(&fw).map(|(b, p)| b * p).sum();
            let var = beta.iter().zip(&fw).map(|(b, p)| p * (b - mu) * (b - mu)).sum();
            (atoms(beta, &fw), given_x, Some(var))
        }
        None => (Vec::new(), Vec::new(), None),
    };

    let diagnostics = EstimandDiagnostics {
        stages: m.stages.len(),
        max_projection_distance: m.stages.iter().map(|s| s.projection_distance).fold(0.0, f64::max),
        min_eigen_gap: m.stages.iter().filter_map(|s| s.hs.as_ref().map(|h| h.eigen_gap)).fold(f64::INFINITY, f64::min),
    };
    Ok(EstimandReport {
        design: m.design,
        outcome: m.outcome().clone(),
        treatment: m.treatment().clone(),
        potential,
        potential_given_x,
        potential_means,
        ate,
        att,
        atu,
        qte,
        latent_marginal: fw,
        cate,
        cate_distribution,
        cate_distribution_given_x,
        cate_variance,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{builtin, Dag};
    use crate::error::assumptions;
    use crate::fixtures::{self, fixture, model_with, quality, Flavor};
    use crate::npsem::Npsem;

    fn observed(model: &Npsem, design: PipelineDesign) -> ProbTensor {
        model.observable_joint().unwrap().marginal(design.required_roles()).unwrap()
    }

    fn proxy_spaces(dag: &Dag, k: usize, replace: &[(&str, usize)]) -> Vec<VarSpace> {
        fixtures::spaces(dag, k, Flavor::Generic)
            .into_iter()
            .map(|s| match replace.iter().find(|(n, _)| *n == s.name) {
                Some((n, c)) => VarSpace::indexed(*n, *c),
                None => s,
            })
            .collect()
    }

    fn mean_given_x(joint: &ProbTensor, x: usize) -> f64 {
        joint.marginal(&["Y", "X"]).unwrap().slice("X", x).unwrap().marginal(&["Y"]).unwrap().mean("Y").unwrap()
    }

    #[test]
    fn unconfounded_ate_equals_naive_contrast() {
        let dag = Dag::new(vec!["Y", "X", "W", "V", "Z"], vec![("X", "Y"), ("W", "Y"), ("W", "Z"), ("W", "V")]).unwrap();
        let model = model_with(&dag, &fixtures::spaces(&dag, 2, Flavor::Generic), 4, &[]).unwrap();
        let joint = observed(&model, PipelineDesign::Outcome);
        let m = identify_outcome_proxy(&joint, &PipelineOptions::new(2)).unwrap();
        let naive = mean_given_x(&joint, 1) - mean_given_x(&joint, 0);
        assert!((estimands(&m).unwrap().ate.unwrap() - naive).abs() < 1e-9);
    }

    #[test]
    fn rank_one_proxy_is_rank_deficient() {
        let dag = builtin("fig2a").unwrap();
        let col = vec![0.2, 0.3, 0.5];
        let model = model_with(&dag, &fixtures::spaces(&dag, 2, Flavor::Generic), 1, &[("Z", vec![col.clone(), col])]).unwrap();
        let err = identify_outcome_proxy(&observed(&model, PipelineDesign::Outcome), &PipelineOptions::new(2)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
        assert_eq!(err.assumption(), Some(PipelineDesign::Outcome.labels().completeness));
    }

    #[test]
    fn treatment_independent_of_latent_exhausts_eigen_gap() {
        let dag = builtin("fig3a").unwrap();
        let col = vec![0.4, 0.6];
        let model = model_with(&dag, &fixtures::spaces(&dag, 2, Flavor::Generic), 2, &[("X", vec![col.clone(), col])]).unwrap();
        let err =
            identify_treatment_proxy(&observed(&model, PipelineDesign::Treatment), &PipelineOptions::new(2)).unwrap_err();
        assert!(matches!(err, Error::EigenGapExhausted { .. }), "{err}");
        assert_eq!(err.assumption(), Some(assumptions::TREATMENT_DISTINGUISHABILITY));
    }

    #[test]
    fn treatment_kernel_recovered_up_to_permutation() {
        let fx = fixture("fig3a", 2, Flavor::Generic, 6).unwrap();
        let m = identify_treatment_proxy(&fx.observed_joint().unwrap(), &PipelineOptions::new(2)).unwrap();
        let recovered = m.wx_joint.condition(&["W"]).unwrap().to_matrix();
        let truth = fx.model.structural_kernel("X").unwrap().to_matrix();
        let sigma = crate::spectral::match_matrices(&[truth.clone()], &[recovered.clone()]).unwrap();
        for (j, &s) in sigma.iter().enumerate() {
            assert!((recovered.column(j) - truth.column(s)).amax() <= 1e-7);
        }
    }

    #[test]
    fn binary_outcome_runs_two_stages() {
        let dag = builtin("fig4a").unwrap();
        let sp = proxy_spaces(&dag, 2, &[("Y", 2)]);
        let model = (0..50)
            .map(|seed| model_with(&dag, &sp, seed, &[]).unwrap())
            .find(|m| quality(m, PipelineDesign::CondTreatment, 2).unwrap().acceptable())
            .unwrap();
        let m = identify_cond_treatment_proxy(&observed(&model, PipelineDesign::CondTreatment), &PipelineOptions::new(2))
            .unwrap();
        let kinds: Vec<StageKind> = m.stages.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, vec![StageKind::Spectral, StageKind::Solve]);
    }

    #[test]
    fn outcome_copying_latent_fails_with_stratum() {
        let dag = builtin("fig4a").unwrap();
        let sp = proxy_spaces(&dag, 2, &[("Y", 2)]);
        // Y's parents are (X, W); Y = W.
        let copy = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let model = model_with(&dag, &sp, 3, &[("Y", copy)]).unwrap();
        let err = identify_cond_treatment_proxy(&observed(&model, PipelineDesign::CondTreatment), &PipelineOptions::new(2))
            .unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. } | Error::ZeroConditioningCell { .. }), "{err}");
        assert!(err.to_string().contains("Y="), "{err}");
        assert!(err.assumption().is_some());
    }

    #[test]
    fn single_level_auxiliary_proxy_exhausts_eigen_gap() {
        let dag = builtin("fig5a").unwrap();
        let model = model_with(&dag, &proxy_spaces(&dag, 2, &[("C", 1)]), 5, &[]).unwrap();
        let err =
            identify_auxiliary_proxy(&observed(&model, PipelineDesign::Auxiliary), &PipelineOptions::new(2)).unwrap_err();
        assert!(matches!(err, Error::EigenGapExhausted { .. }), "{err}");
        assert_eq!(err.assumption(), Some(assumptions::AUX_DISTINGUISHABILITY));
    }

    #[test]
    fn potential_joint_is_consistent_with_observed() {
        for (figure, design) in [("fig2a", PipelineDesign::Outcome), ("fig5b", PipelineDesign::Auxiliary)] {
            let fx = fixture(figure, 3, Flavor::Generic, 2).unwrap();
            let joint = fx.observed_joint().unwrap();
            let m = identify(design, &joint, &PipelineOptions::new(3)).unwrap();
            let yx = joint.marginal(&["Y", "X"]).unwrap();
            for x1 in 0..2 {
                let pj = m.potential_joint(x1).unwrap();
                assert!((pj.total_mass() - 1.0).abs() <= 1e-10);
                let name = pj.axes()[0].name.clone();
                let got = pj.marginal(&[name.as_str(), "X"]).unwrap();
                for y in 0..3 {
                    assert!((got.get(&[y, x1]) - yx.get(&[y, x1])).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn report_is_invariant_to_latent_relabeling() {
        let fx = fixture("fig2b", 3, Flavor::Generic, 9).unwrap();
        let m = identify_outcome_proxy(&fx.observed_joint().unwrap(), &PipelineOptions::new(3)).unwrap();
        let base = estimands(&m).unwrap();
        for perm in [[2, 0, 1], [1, 0, 2], [0, 2, 1]] {
            assert_eq!(estimands(&m.permute_latent(&perm).unwrap()).unwrap(), base);
        }
    }

    #[test]
    fn homogeneous_effects_have_zero_variance() {
        let dag = builtin("fig3a").unwrap();
        let (k, nv) = (2, 3);
        // Y's parents are (X, W, V); the table ignores W and V.
        let by_x = [vec![0.5, 0.3, 0.2], vec![0.1, 0.3, 0.6]];
        let cols: Vec<Vec<f64>> = (0..2 * k * nv).map(|g| by_x[g / (k * nv)].clone()).collect();
        let model = model_with(&dag, &fixtures::spaces(&dag, k, Flavor::Generic), 7, &[("Y", cols)]).unwrap();
        assert!(quality(&model, PipelineDesign::Treatment, k).unwrap().acceptable());
        let r = estimands(&identify_treatment_proxy(&observed(&model, PipelineDesign::Treatment), &PipelineOptions::new(k)).unwrap())
            .unwrap();
        assert!(r.cate_variance.unwrap() < 1e-18);
        assert_eq!(r.cate_distribution.len(), 1);
        assert!((r.cate_distribution[0].value - r.ate.unwrap()).abs() < 1e-9);
        assert!((r.ate.unwrap() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn quantiles_use_left_continuous_inverse() {
        let (levels, pmf) = ([0.0, 1.0, 2.0], [0.2, 0.3, 0.5]);
        assert_eq!(quantile(&levels, &pmf, 0.2).unwrap(), 0.0);
        assert_eq!(quantile(&levels, &pmf, 0.21).unwrap(), 1.0);
        assert_eq!(quantile(&levels, &pmf, 0.5).unwrap(), 1.0);
        assert_eq!(quantile(&levels, &pmf, 1.0).unwrap(), 2.0);
        assert!(matches!(quantile(&levels, &pmf, 0.0), Err(Error::TauOutOfRange(_))));
    }

    #[test]
    fn atoms_merge_close_values() {
        let a = atoms(&[0.3, 0.1, 0.3 + 1e-12], &[0.2, 0.5, 0.3]);
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].value, a[0].mass), (0.1, 0.5));
        assert!((a[1].mass - 0.5).abs() < 1e-15 && (a[1].cdf - 1.0).abs() < 1e-15);
        assert_eq!(step_cdf(&a, 0.0), 0.0);
        assert_eq!(step_cdf(&a, 0.2), 0.5);
    }

    #[test]
    fn design_names_round_trip() {
        for d in PipelineDesign::ALL {
            assert_eq!(d.as_str().parse::<PipelineDesign>().unwrap(), d);
        }
        assert!("double".parse::<PipelineDesign>().is_err());
    }
}
