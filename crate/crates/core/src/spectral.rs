//! Discrete Hu–Schennach decomposition.
//!
//! Given the law of three proxies `(Z, C, V)` that are independent given a
//! latent `W` with `K` states, recover `f_{C|W}`, `f_{W|V}` and `f_{Z|W}` up to a
//! relabeling of `W` by simultaneous diagonalization of the `C`-slices.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{assumptions, Error, Result};
use crate::linalg::{self, real_eigen};
use crate::npsem::dirichlet_flat;
use crate::prob::{check_permutation, MarkovKernel, ProbTensor, VarSpace};

/// Condition-number guard for second-stage linear solves.
pub const SOLVE_CONDITION_LIMIT: f64 = 1e8;
/// Relative singular-value threshold for completeness.
pub const RANK_TOL: f64 = 1e-8;
/// Clipped negative mass tolerated before reporting `NegativeMass`.
pub const NEGATIVITY_TOL: f64 = 1e-6;
/// Cost slack under which two latent matchings count as tied.
pub const MATCH_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsOptions {
    pub latent_dim: usize,
    pub eigen_gap_tol: f64,
    pub imag_tol: f64,
    pub seed: u64,
    pub max_retries: usize,
    /// Name given to the latent axis in the output kernels.
    pub latent_name: String,
}

impl HsOptions {
    pub fn new(latent_dim: usize) -> HsOptions {
        HsOptions {
            latent_dim,
            eigen_gap_tol: 1e-6,
            imag_tol: 1e-7,
            seed: 0,
            max_retries: 8,
            latent_name: "W".into(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> HsOptions {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidInput("latent dimension must be at least 1".into()));
        }
        if !(self.eigen_gap_tol > 0.0) || !(self.imag_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    UnalignedPermutation,
    AlignedToReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsDiagnostics {
    pub eigen_gap: f64,
    pub singular_values: Vec<f64>,
    pub rank_ratio: f64,
    pub condition_projected: f64,
    pub condition_eigenvectors: f64,
    pub condition_z_given_w: f64,
    pub max_imag: f64,
    pub max_negativity_clipped: f64,
    pub reconstruction_residual: f64,
    pub retries_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsFactors {
    pub c_given_w: MarkovKernel,
    pub w_given_v: MarkovKernel,
    pub z_given_w: MarkovKernel,
    pub latent_dim: usize,
    pub alignment: Alignment,
    pub diagnostics: HsDiagnostics,
}

/// Clip each column onto the simplex; returns the largest clipped negative mass.
fn clip_columns(m: &mut DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for mut col in m.column_iter_mut() {
        let mut v: Vec<f64> = col.iter().copied().collect();
        let (_, clipped) = crate::prob::project_to_simplex(&mut v);
        worst = worst.max(clipped);
        for (dst, src) in col.iter_mut().zip(v) {
            *dst = src;
        }
    }
    worst
}

fn sort_latent(z: &DMatrix<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.ncols()).collect();
    order.sort_by(|&a, &b| {
        for r in 0..z.nrows() {
            let o = z[(r, a)].total_cmp(&z[(r, b)]);
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    order
}

fn select_columns(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), order.len(), |r, c| m[(r, order[c])])
}

fn select_rows(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(order.len(), m.ncols(), |r, c| m[(order[r], c)])
}

/// Recover `(f_{C|W}, f_{W|V}, f_{Z|W})` from a joint over the axes named
/// `z`, `c`, `v`. Latent states come out in canonical order (columns of
/// `f_{Z|W}` sorted lexicographically).
pub fn hs_decompose(joint: &ProbTensor, z: &str, c: &str, v: &str, opts: &HsOptions) -> Result<HsFactors> {
    opts.validate()?;
    if joint.axes().len() != 3 {
        return Err(Error::AxisMismatch(format!(
            "expected a joint over exactly ({z}, {c}, {v}), found {:?}",
            joint.axis_names()
        )));
    }
    let k = opts.latent_dim;
    let t = joint.permute_axes(&[z, c, v])?;
    let (zs, cs, vs) = (t.axes()[0].clone(), t.axes()[1].clone(), t.axes()[2].clone());
    for s in [&zs, &vs] {
        if s.cardinality < k {
            return Err(Error::DimensionTooSmall {
                axis: s.name.clone(),
                cardinality: s.cardinality,
                latent_dim: k,
                assumption: assumptions::HS_COMPLETENESS,
            });
        }
    }
    let (nz, nc, nv) = (zs.cardinality, cs.cardinality, vs.cardinality);
    let zc_given_v = t.condition(&[v])?;
    let vals = zc_given_v.values();
    let slice = |ci: usize| DMatrix::from_fn(nz, nv, |zi, vi| vals[(zi * nc + ci) * nv + vi]);
    let slices: Vec<DMatrix<f64>> = (0..nc).map(slice).collect();
    let a = slices.iter().fold(DMatrix::zeros(nz, nv), |acc, s| acc + s);

    let (u, s, r) = linalg::truncated_svd(&a, k);
    let rank_ratio = if s[0] > 0.0 { s[k - 1] / s[0] } else { 0.0 };
    if !(rank_ratio >= RANK_TOL) {
        return Err(Error::RankDeficient { ratio: rank_ratio, stratum: None, assumption: assumptions::HS_COMPLETENESS });
    }
    let ut = u.transpose();
    let projected = &ut * &a * &r;
    let proj_inv = projected.clone().try_inverse().ok_or(Error::RankDeficient {
        ratio: rank_ratio,
        stratum: None,
        assumption: assumptions::HS_COMPLETENESS,
    })?;
    let projected_slices: Vec<DMatrix<f64>> = slices.iter().map(|b| &ut * b * &r * &proj_inv).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_gap = 0.0f64;
    let mut chosen = None;
    for attempt in 0..=opts.max_retries {
        let xi = dirichlet_flat(&mut rng, nc);
        let tm = projected_slices.iter().zip(&xi).fold(DMatrix::zeros(k, k), |acc, (p, w)| acc + p * *w);
        let Some(eig) = real_eigen(&tm) else { continue };
        let gap = if k == 1 { f64::INFINITY } else { eig.gap };
        best_gap = best_gap.max(gap);
        if !(gap >= opts.eigen_gap_tol) {
            continue;
        }
        if eig.max_imag > opts.imag_tol {
            return Err(Error::ComplexResidual {
                imag: eig.max_imag,
                stratum: None,
                assumption: assumptions::HS_DISTINGUISHABILITY,
            });
        }
        chosen = Some((eig, attempt));
        break;
    }
    let Some((eig, retries_used)) = chosen else {
        return Err(Error::EigenGapExhausted {
            gap: best_gap,
            retries: opts.max_retries,
            stratum: None,
            assumption: assumptions::HS_DISTINGUISHABILITY,
        });
    };
    let e = eig.vectors;
    let e_inv = e.clone().try_inverse().ok_or(Error::EigenGapExhausted {
        gap: eig.gap,
        retries: retries_used,
        stratum: None,
        assumption: assumptions::HS_DISTINGUISHABILITY,
    })?;

    let mut fc = DMatrix::zeros(nc, k);
    for (ci, p) in projected_slices.iter().enumerate() {
        let d = &e_inv * p * &e;
        for w in 0..k {
            fc[(ci, w)] = d[(w, w)];
        }
    }
    let mut fz = &u * &e;
    for mut col in fz.column_iter_mut() {
        let total: f64 = col.iter().sum();
        col /= total;
    }
    let mut negativity = clip_columns(&mut fz);
    let mut fwv = linalg::lstsq(&fz, &a, SOLVE_CONDITION_LIMIT)?;
    negativity = negativity.max(clip_columns(&mut fc)).max(clip_columns(&mut fwv));
    if negativity > NEGATIVITY_TOL {
        return Err(Error::NegativeMass { clipped: negativity, stratum: None, assumption: assumptions::HS_POSITIVITY });
    }

    let order = sort_latent(&fz);
    let fz = select_columns(&fz, &order);
    let fc = select_columns(&fc, &order);
    let fwv = select_rows(&fwv, &order);

    let latent = VarSpace::new(opts.latent_name.clone(), k);
    let z_given_w = MarkovKernel::from_matrix(zs.clone(), vec![latent.clone()], &fz)?;
    let c_given_w = MarkovKernel::from_matrix(cs.clone(), vec![latent.clone()], &fc)?;
    let w_given_v = MarkovKernel::from_matrix(latent, vec![vs.clone()], &fwv)?;
    let mut factors = HsFactors {
        c_given_w,
        w_given_v,
        z_given_w,
        latent_dim: k,
        alignment: Alignment::UnalignedPermutation,
        diagnostics: HsDiagnostics {
            eigen_gap: eig.gap,
            singular_values: s,
            rank_ratio,
            condition_projected: linalg::condition_number(&projected),
            condition_eigenvectors: linalg::condition_number(&e),
            condition_z_given_w: linalg::condition_number(&fz),
            max_imag: eig.max_imag,
            max_negativity_clipped: negativity,
            reconstruction_residual: 0.0,
            retries_used,
        },
    };
    factors.diagnostics.reconstruction_residual = max_abs(&factors.reconstruct(), &zc_given_v);
    Ok(factors)
}

fn max_abs(a: &MarkovKernel, b: &MarkovKernel) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl HsFactors {
    /// `f_{ZC|V}(z,c|v) = Σ_w f_{Z|W} f_{C|W} f_{W|V}`, targets `(Z, C)`.
    pub fn reconstruct(&self) -> MarkovKernel {
        let fz = self.z_given_w.to_matrix();
        let fc = self.c_given_w.to_matrix();
        let fwv = self.w_given_v.to_matrix();
        let (nz, nc, nv) = (fz.nrows(), fc.nrows(), fwv.ncols());
        let mut values = vec![0.0; nz * nc * nv];
        for zi in 0..nz {
            for ci in 0..nc {
                for vi in 0..nv {
                    values[(zi * nc + ci) * nv + vi] =
                        (0..self.latent_dim).map(|w| fz[(zi, w)] * fc[(ci, w)] * fwv[(w, vi)]).sum();
                }
            }
        }
        MarkovKernel::new(
            vec![self.z_given_w.target().clone(), self.c_given_w.target().clone()],
            self.w_given_v.given().to_vec(),
            values,
        )
        .expect("reconstruction of stochastic factors is stochastic")
    }

    /// Relabel latent states: new state `j` is old state `perm[j]`.
    pub fn permute_latent(&self, perm: &[usize]) -> Result<HsFactors> {
        check_permutation(perm, self.latent_dim)?;
        let w = self.w_given_v.target().name.clone();
        Ok(HsFactors {
            c_given_w: self.c_given_w.permute_levels(&w, perm)?,
            w_given_v: self.w_given_v.permute_levels(&w, perm)?,
            z_given_w: self.z_given_w.permute_levels(&w, perm)?,
            ..self.clone()
        })
    }

    /// Relabel so that latent states line up with `reference`.
    pub fn aligned_to(&self, reference: &HsFactors) -> Result<HsFactors> {
        let sigma = match_permutation(reference, self)?;
        let mut inv = vec![0; sigma.len()];
        for (j, &s) in sigma.iter().enumerate() {
            inv[s] = j;
        }
        let mut out = self.permute_latent(&inv)?;
        out.alignment = Alignment::AlignedToReference;
        Ok(out)
    }

    fn latent_columns(&self) -> Vec<DMatrix<f64>> {
        vec![self.z_given_w.to_matrix(), self.c_given_w.to_matrix(), self.w_given_v.to_matrix().transpose()]
    }
}

/// Forward construction of `f_{ZCV}` from factors and `f_V`. Terms are summed
/// in canonical latent order, so relabeled factor triples give identical
/// joints bit for bit.
pub fn construct_joint(
    z_given_w: &DMatrix<f64>,
    c_given_w: &DMatrix<f64>,
    w_given_v: &DMatrix<f64>,
    f_v: &[f64],
    spaces: [VarSpace; 3],
) -> Result<ProbTensor> {
    let order = sort_latent(z_given_w);
    let (nz, nc, nv) = (z_given_w.nrows(), c_given_w.nrows(), w_given_v.ncols());
    let mut values = vec![0.0; nz * nc * nv];
    for zi in 0..nz {
        for ci in 0..nc {
            for vi in 0..nv {
                let mut acc = 0.0;
                for &w in &order {
                    acc += z_given_w[(zi, w)] * c_given_w[(ci, w)] * w_given_v[(w, vi)];
                }
                values[(zi * nc + ci) * nv + vi] = acc * f_v[vi];
            }
        }
    }
    ProbTensor::from_weights(spaces.to_vec(), values)
}

/// Column-wise L1 cost between latent states of two factor sets.
fn cost_matrix(reference: &[DMatrix<f64>], other: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let k = reference[0].ncols();
    for (a, b) in reference.iter().zip(other) {
        if a.shape() != b.shape() || a.ncols() != k {
            return Err(Error::AxisMismatch("matched kernels must share shapes and latent dimension".into()));
        }
    }
    Ok(DMatrix::from_fn(k, k, |j, i| {
        reference.iter().zip(other).map(|(a, b)| (a.column(i) - b.column(j)).abs().sum()).sum()
    }))
}

/// Optimal assignment (Hungarian algorithm): rows to columns, minimizing cost.
fn hungarian(cost: &DMatrix<f64>) -> (Vec<usize>, f64) {
    let n = cost.nrows();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[(i, assign[i])]).sum();
    (assign, total)
}

/// Permutation `σ` such that latent state `j` of `other` corresponds to state
/// `σ[j]` of `reference`, minimizing total column-wise L1 distance. Fails when
/// a different assignment comes within [`MATCH_TIE_TOL`] of the optimum.
pub fn match_matrices(reference: &[DMatrix<f64>], other: &[DMatrix<f64>]) -> Result<Vec<usize>> {
    if reference.is_empty() || reference.len() != other.len() {
        return Err(Error::AxisMismatch("matched factor lists differ".into()));
    }
    let cost = cost_matrix(reference, other)?;
    let (assign, best) = hungarian(&cost);
    let k = assign.len();
    if k > 1 {
        // The runner-up differs from the optimum in at least one pair.
        let big = cost.iter().copied().fold(0.0, f64::max) * (k as f64 + 1.0) + 1.0;
        let mut runner_up = f64::INFINITY;
        for j in 0..k {
            let mut c = cost.clone();
            c[(j, assign[j])] = big;
            runner_up = runner_up.min(hungarian(&c).1);
        }
        if runner_up - best <= MATCH_TIE_TOL {
            return Err(Error::AmbiguousMatch { best, runner_up });
        }
    }
    Ok(assign)
}

/// [`match_matrices`] over all three recovered kernels.
pub fn match_permutation(reference: &HsFactors, other: &HsFactors) -> Result<Vec<usize>> {
    if reference.latent_dim != other.latent_dim {
        return Err(Error::AxisMismatch("latent dimensions differ".into()));
    }
    match_matrices(&reference.latent_columns(), &other.latent_columns())
}

/// Match two kernels whose conditioning axis is the latent variable.
pub fn match_kernel_permutation(reference: &MarkovKernel, other: &MarkovKernel) -> Result<Vec<usize>> {
    match_matrices(&[reference.to_matrix()], &[other.to_matrix()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
    pub latent_dim: usize,
    pub pass: bool,
}

/// Singular-value profile of a kernel and whether its rank reaches `K`.
pub fn completeness_diagnostics(k: &MarkovKernel, latent_dim: usize) -> CompletenessReport {
    let s = linalg::singular_values(&k.to_matrix());
    let numerical_rank = linalg::numerical_rank(&s, RANK_TOL);
    CompletenessReport { singular_values: s, numerical_rank, latent_dim, pass: numerical_rank >= latent_dim }
}
