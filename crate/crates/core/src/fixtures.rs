//! Seeded oracle models over the builtin graphs, drawn until they are
//! numerically well conditioned for the design they exercise.

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{builtin, canonical_figure_name, Dag};
use crate::error::{Error, Result};
use crate::linalg;
use crate::npsem::{dirichlet_flat, Npsem};
use crate::pipelines::{atoms, Atom, PipelineDesign};
use crate::prob::{ProbTensor, VarSpace};

pub const MAX_ATTEMPTS: usize = 100;

/// How structural tables are shaped beyond a flat Dirichlet draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Generic,
    /// Each column of `f_{Z|W}` has mean equal to the level of `w`.
    UnbiasedZ,
    /// Mean of `f_{Z|W}(·|w)` strictly increasing in `w`.
    MonotoneZ,
    /// `E[Y(1)−Y(0)|W]` nondecreasing in `E[Y(0)|W]`, per context of `Y`'s other parents.
    RankInvariant,
    /// `E[Y(1)−Y(0)|W]` constant in `w`, per context.
    ConstantCate,
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(Flavor::Generic),
            "unbiased-z" => Ok(Flavor::UnbiasedZ),
            "monotone-z" => Ok(Flavor::MonotoneZ),
            "rank-invariant" => Ok(Flavor::RankInvariant),
            "constant-cate" => Ok(Flavor::ConstantCate),
            _ => Err(Error::InvalidInput(format!("unknown flavor `{s}`"))),
        }
    }
}

/// Pipeline matched to a builtin figure, if any.
pub fn design_for(figure: &str) -> Option<PipelineDesign> {
    let key = canonical_figure_name(figure);
    let tail = key.strip_prefix("fig")?;
    match tail {
        "1a" => Some(PipelineDesign::Outcome),
        "1b" => None,
        "1c" => Some(PipelineDesign::CondTreatment),
        "1d" => Some(PipelineDesign::Auxiliary),
        _ => match tail.chars().next()? {
            '2' | '6' => Some(PipelineDesign::Outcome),
            '3' => Some(PipelineDesign::Treatment),
            '4' => Some(PipelineDesign::CondTreatment),
            '5' | '7' => Some(PipelineDesign::Auxiliary),
            _ => None,
        },
    }
}

/// Variable spaces used by every fixture.
pub fn spaces(dag: &Dag, latent_dim: usize, flavor: Flavor) -> Vec<VarSpace> {
    let k = latent_dim;
    let indexed = |name: &str, n: usize| VarSpace::indexed(name, n);
    dag.nodes()
        .iter()
        .map(|name| match name.as_str() {
            "W" => indexed("W", k),
            "X" => indexed("X", 2),
            "Y" => indexed("Y", 3),
            "C" => indexed("C", 3),
            "Z" if flavor == Flavor::UnbiasedZ => {
                VarSpace::with_levels("Z", (0..=k).map(|j| -1.0 + (k as f64 + 1.0) * j as f64 / k as f64).collect())
            }
            "Z" => indexed("Z", k + 1),
            "V" => indexed("V", k + 1),
            other => indexed(other, 2),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub figure: String,
    pub design: Option<PipelineDesign>,
    pub latent_dim: usize,
    pub flavor: Flavor,
    pub seed: u64,
    /// Draws needed before one passed the conditioning checks.
    pub attempts: usize,
    pub model: Npsem,
}

/// Oracle values computed by counterfactual enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEffects {
    pub ate: f64,
    pub att: f64,
    pub atu: f64,
    /// `potential[x][y]`.
    pub potential: Vec<Vec<f64>>,
    /// `E[Y(1)−Y(0)|W=w]` by true `w`.
    pub cate: Vec<f64>,
    pub latent_marginal: Vec<f64>,
    pub cate_distribution: Vec<Atom>,
}

/// Draw a fixture for `figure`, retrying until it passes [`quality`].
pub fn fixture(figure: &str, latent_dim: usize, flavor: Flavor, seed: u64) -> Result<Fixture> {
    let dag = builtin(figure)?;
    let design = design_for(figure);
    let sp = spaces(&dag, latent_dim, flavor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=MAX_ATTEMPTS {
        let model = draw(&dag, &sp, flavor, &mut rng)?;
        let ok = match design {
            Some(d) => quality(&model, d, latent_dim)?.acceptable(),
            None => true,
        };
        if ok {
            return Ok(Fixture {
                figure: canonical_figure_name(figure),
                design,
                latent_dim,
                flavor,
                seed,
                attempts: attempt,
                model,
            });
        }
    }
    Err(Error::InvalidInput(format!("no well-conditioned draw for {figure} after {MAX_ATTEMPTS} attempts")))
}

fn parent_configs(dag: &Dag, spaces: &[VarSpace], node: &str) -> Result<(Vec<String>, Vec<usize>)> {
    let parents: Vec<String> = dag.parents_of(node)?.into_iter().map(str::to_string).collect();
    let cards = parents
        .iter()
        .map(|p| spaces.iter().find(|s| &s.name == p).map(|s| s.cardinality).ok_or(Error::UnknownNode(p.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok((parents, cards))
}

fn decode(mut flat: usize, cards: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; cards.len()];
    for d in (0..cards.len()).rev() {
        idx[d] = flat % cards[d];
        flat /= cards[d];
    }
    idx
}

fn encode(idx: &[usize], cards: &[usize]) -> usize {
    idx.iter().zip(cards).fold(0, |acc, (i, c)| acc * c + i)
}

fn mean(levels: &[f64], pmf: &[f64]) -> f64 {
    levels.iter().zip(pmf).map(|(l, p)| l * p).sum()
}

fn flat_kernels(dag: &Dag, spaces: &[VarSpace], rng: &mut ChaCha8Rng) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
    let mut kernels = BTreeMap::new();
    for (name, space) in dag.nodes().iter().zip(spaces) {
        let (_, cards) = parent_configs(dag, spaces, name)?;
        let n: usize = cards.iter().product();
        kernels.insert(name.clone(), (0..n).map(|_| dirichlet_flat(rng, space.cardinality)).collect());
    }
    Ok(kernels)
}

fn draw(dag: &Dag, spaces: &[VarSpace], flavor: Flavor, rng: &mut ChaCha8Rng) -> Result<Npsem> {
    let mut kernels = flat_kernels(dag, spaces, rng)?;
    match flavor {
        Flavor::Generic => {}
        Flavor::UnbiasedZ => shape_unbiased_z(dag, spaces, &mut kernels)?,
        Flavor::MonotoneZ => shape_monotone_z(dag, spaces, &mut kernels)?,
        Flavor::RankInvariant | Flavor::ConstantCate => shape_outcome(dag, spaces, flavor, rng, &mut kernels)?,
    }
    Npsem::from_kernels(dag, spaces, &kernels)
}

fn space<'a>(spaces: &'a [VarSpace], name: &str) -> &'a VarSpace {
    spaces.iter().find(|s| s.name == name).expect("fixture space")
}

fn w_position(parents: &[String], node: &str) -> Result<usize> {
    parents
        .iter()
        .position(|p| p == "W")
        .ok_or_else(|| Error::InvalidInput(format!("flavor needs W to be a parent of {node}")))
}

/// Mix each column of `Z`'s kernel with an extreme level so that its mean is
/// exactly the level of `w`.
fn shape_unbiased_z(dag: &Dag, spaces: &[VarSpace], kernels: &mut BTreeMap<String, Vec<Vec<f64>>>) -> Result<()> {
    let (parents, cards) = parent_configs(dag, spaces, "Z")?;
    let wpos = w_position(&parents, "Z")?;
    let zl = space(spaces, "Z").numeric_levels()?.to_vec();
    let wl = space(spaces, "W").numeric_levels()?.to_vec();
    let (lo, hi) = (0, zl.len() - 1);
    for (g, col) in kernels.get_mut("Z").expect("Z kernel").iter_mut().enumerate() {
        let target = wl[decode(g, &cards)[wpos]];
        let m = mean(&zl, col);
        let (edge, lambda) =
            if m > target { (lo, (m - target) / (m - zl[lo])) } else { (hi, (target - m) / (zl[hi] - m)) };
        col.iter_mut().for_each(|p| *p *= 1.0 - lambda);
        col[edge] += lambda;
    }
    Ok(())
}

/// Reassign the columns of `Z`'s kernel within each context so their means
/// increase with `w`.
fn shape_monotone_z(dag: &Dag, spaces: &[VarSpace], kernels: &mut BTreeMap<String, Vec<Vec<f64>>>) -> Result<()> {
    let (parents, cards) = parent_configs(dag, spaces, "Z")?;
    let wpos = w_position(&parents, "Z")?;
    let zl = space(spaces, "Z").numeric_levels()?.to_vec();
    let cols = kernels.get_mut("Z").expect("Z kernel");
    let original = cols.clone();
    for g in 0..original.len() {
        let idx = decode(g, &cards);
        if idx[wpos] != 0 {
            continue;
        }
        let group: Vec<usize> = (0..cards[wpos])
            .map(|w| {
                let mut i = idx.clone();
                i[wpos] = w;
                encode(&i, &cards)
            })
            .collect();
        let mut sorted = group.clone();
        sorted.sort_by(|&a, &b| mean(&zl, &original[a]).total_cmp(&mean(&zl, &original[b])));
        for (slot, src) in group.iter().zip(sorted) {
            cols[*slot] = original[src].clone();
        }
    }
    Ok(())
}

/// Rebuild `Y`'s kernel so the treated column is the untreated one shifted
/// toward the top level by a controlled amount. `C` is dropped from the
/// context so that effects given `(W, V)` are governed by the table alone.
fn shape_outcome(
    dag: &Dag,
    spaces: &[VarSpace],
    flavor: Flavor,
    rng: &mut ChaCha8Rng,
    kernels: &mut BTreeMap<String, Vec<Vec<f64>>>,
) -> Result<()> {
    let (parents, cards) = parent_configs(dag, spaces, "Y")?;
    let wpos = w_position(&parents, "Y")?;
    let xpos = parents.iter().position(|p| p == "X").ok_or_else(|| Error::InvalidInput("X must cause Y".into()))?;
    let cpos = parents.iter().position(|p| p == "C");
    let yl = space(spaces, "Y").numeric_levels()?.to_vec();
    let top = yl.len() - 1;
    let nw = cards[wpos];
    let n: usize = cards.iter().product();
    let mut cols = vec![Vec::new(); n];
    // Context: every parent except X, W and C.
    let ctx_dims: Vec<usize> = (0..cards.len()).filter(|&d| d != wpos && d != xpos && Some(d) != cpos).collect();
    let ctx_cards: Vec<usize> = ctx_dims.iter().map(|&d| cards[d]).collect();
    let nctx: usize = ctx_cards.iter().product();
    for ctx in 0..nctx {
        let cidx = decode(ctx, &ctx_cards);
        let base: Vec<Vec<f64>> = (0..nw).map(|_| dirichlet_flat(rng, yl.len())).collect();
        let m0: Vec<f64> = base.iter().map(|c| mean(&yl, c)).collect();
        let room = m0.iter().map(|m| yl[top] - m).fold(f64::INFINITY, f64::min);
        let beta: Vec<f64> = match flavor {
            Flavor::ConstantCate => vec![rng.random_range(0.2..0.9) * room; nw],
            _ => {
                let mut u: Vec<f64> = (0..nw).map(|_| rng.random_range(0.05..0.95)).collect();
                u.sort_by(f64::total_cmp);
                let mut order: Vec<usize> = (0..nw).collect();
                order.sort_by(|&a, &b| m0[a].total_cmp(&m0[b]));
                let mut beta = vec![0.0; nw];
                for (rank, &w) in order.iter().enumerate() {
                    beta[w] = u[rank] * room;
                }
                beta
            }
        };
        for g in 0..n {
            let idx = decode(g, &cards);
            if ctx_dims.iter().zip(&cidx).any(|(&d, &c)| idx[d] != c) {
                continue;
            }
            let w = idx[wpos];
            let mut col = base[w].clone();
            if idx[xpos] == 1 {
                let lambda = beta[w] / (yl[top] - m0[w]);
                col.iter_mut().for_each(|p| *p *= 1.0 - lambda);
                col[top] += lambda;
            }
            cols[g] = col;
        }
    }
    kernels.insert("Y".into(), cols);
    Ok(())
}

/// Numerical health of an oracle model for a given design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub min_stratum_mass: f64,
    pub min_latent_mass: f64,
    pub min_rank_ratio: f64,
    pub max_proxy_condition: f64,
    pub min_separation: f64,
}

impl Quality {
    pub const MIN_MASS: f64 = 0.02;
    pub const MIN_RANK_RATIO: f64 = 1e-3;
    pub const MAX_CONDITION: f64 = 100.0;
    pub const MIN_SEPARATION: f64 = 0.05;

    pub fn acceptable(&self) -> bool {
        self.min_stratum_mass >= Self::MIN_MASS
            && self.min_latent_mass >= Self::MIN_MASS
            && self.min_rank_ratio >= Self::MIN_RANK_RATIO
            && self.max_proxy_condition <= Self::MAX_CONDITION
            && self.min_separation >= Self::MIN_SEPARATION
    }
}

/// Smallest sup-norm distance between two columns.
fn column_separation(m: &DMatrix<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..m.ncols() {
        for b in a + 1..m.ncols() {
            best = best.min((m.column(a) - m.column(b)).amax());
        }
    }
    best
}

/// Conditioning checks computed from the full joint, latent `W` included.
pub fn quality(model: &Npsem, design: PipelineDesign, latent_dim: usize) -> Result<Quality> {
    let joint = model.observable_joint()?;
    let (stratum, proxy) = match design {
        PipelineDesign::Outcome => (Some("X"), "Y"),
        PipelineDesign::Treatment => (None, "X"),
        PipelineDesign::CondTreatment => (Some("Y"), "X"),
        PipelineDesign::Auxiliary => (Some("X"), "C"),
    };
    let mut q = Quality {
        min_stratum_mass: 1.0,
        min_latent_mass: 1.0,
        min_rank_ratio: 1.0,
        max_proxy_condition: 0.0,
        min_separation: f64::INFINITY,
    };
    let mut visit = |t: &ProbTensor| -> Result<()> {
        let fw = t.marginal(&["W"])?;
        q.min_latent_mass = q.min_latent_mass.min(fw.values().iter().copied().fold(1.0, f64::min));
        let zv = t.marginal(&["Z", "V"])?.condition(&["V"])?.to_matrix();
        let s = linalg::singular_values(&zv);
        q.min_rank_ratio = q.min_rank_ratio.min(s.get(latent_dim - 1).copied().unwrap_or(0.0) / s[0]);
        let zw = t.marginal(&["Z", "W"])?.condition(&["W"])?.to_matrix();
        q.max_proxy_condition = q.max_proxy_condition.max(linalg::condition_number(&zw));
        let cw = t.marginal(&[proxy, "W"])?.condition(&["W"])?.to_matrix();
        q.min_separation = q.min_separation.min(column_separation(&cw));
        Ok(())
    };
    match stratum {
        Some(s) => {
            let fs = joint.marginal(&[s])?;
            for (level, &p) in fs.values().iter().enumerate() {
                q.min_stratum_mass = q.min_stratum_mass.min(p);
                visit(&joint.slice(s, level)?)?;
            }
        }
        None => visit(&joint)?,
    }
    if design == PipelineDesign::Auxiliary {
        let vx = joint.marginal(&["V", "X"])?;
        q.min_stratum_mass = vx.values().iter().copied().fold(q.min_stratum_mass, f64::min);
    }
    Ok(q)
}

impl Fixture {
    /// Observed joint over the design's roles, `W` marginalized out.
    pub fn observed_joint(&self) -> Result<ProbTensor> {
        let design = self.design.ok_or_else(|| Error::InvalidInput(format!("{} has no matching design", self.figure)))?;
        self.model.observable_joint()?.marginal(design.required_roles())
    }

    pub fn oracle(&self) -> Result<OracleEffects> {
        oracle_effects(&self.model)
    }
}

/// Effects of a binary `X` on `Y` in an oracle model with observed `W`.
pub fn oracle_effects(model: &Npsem) -> Result<OracleEffects> {
    let x = model.role("X")?;
    let w = model.role("W")?;
    let cf = model.counterfactual_joint(&[x.as_str()])?;
    let ate = cf.potential_mean(&[1])? - cf.potential_mean(&[0])?;
    let att = cf.conditional_mean(&[1], &x, 1)? - cf.conditional_mean(&[0], &x, 1)?;
    let atu = cf.conditional_mean(&[1], &x, 0)? - cf.conditional_mean(&[0], &x, 0)?;
    let potential = vec![cf.potential(&[0])?.values().to_vec(), cf.potential(&[1])?.values().to_vec()];
    let latent_marginal = cf.tensor.marginal(&[w.as_str()])?.values().to_vec();
    let cate = (0..latent_marginal.len())
        .map(|l| Ok(cf.conditional_mean(&[1], &w, l)? - cf.conditional_mean(&[0], &w, l)?))
        .collect::<Result<Vec<f64>>>()?;
    let cate_distribution = atoms(&cate, &latent_marginal);
    Ok(OracleEffects { ate, att, atu, potential, cate, latent_marginal, cate_distribution })
}

/// Random model over `dag` with the kernels of selected nodes replaced.
/// `overrides` maps a node to one pmf per parent configuration.
pub fn model_with(dag: &Dag, spaces: &[VarSpace], seed: u64, overrides: &[(&str, Vec<Vec<f64>>)]) -> Result<Npsem> {
    let mut kernels = flat_kernels(dag, spaces, &mut ChaCha8Rng::seed_from_u64(seed))?;
    for (node, cols) in overrides {
        kernels.insert(node.to_string(), cols.clone());
    }
    Npsem::from_kernels(dag, spaces, &kernels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{check_rank_invariance, check_v_rank_invariance};

    fn z_means(model: &Npsem) -> Vec<f64> {
        let z = model.structural_kernel("Z").unwrap();
        let levels = z.target().numeric_levels().unwrap().to_vec();
        (0..z.given_configs()).map(|g| mean(&levels, &z.column(g))).collect()
    }

    #[test]
    fn figures_map_to_designs() {
        assert_eq!(design_for("2.b"), Some(PipelineDesign::Outcome));
        assert_eq!(design_for("fig3c"), Some(PipelineDesign::Treatment));
        assert_eq!(design_for("fig1c"), Some(PipelineDesign::CondTreatment));
        assert_eq!(design_for("7a"), Some(PipelineDesign::Auxiliary));
        assert_eq!(design_for("fig1b"), None);
    }

    #[test]
    fn draws_are_seed_deterministic() {
        let a = fixture("fig5a", 2, Flavor::Generic, 3).unwrap();
        assert_eq!(a, fixture("fig5a", 2, Flavor::Generic, 3).unwrap());
        assert_ne!(a.model, fixture("fig5a", 2, Flavor::Generic, 4).unwrap().model);
        assert!(quality(&a.model, PipelineDesign::Auxiliary, 2).unwrap().acceptable());
    }

    #[test]
    fn unbiased_proxy_columns_center_on_levels() {
        let fx = fixture("fig2a", 3, Flavor::UnbiasedZ, 1).unwrap();
        for (w, m) in z_means(&fx.model).iter().enumerate() {
            assert!((m - w as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn monotone_proxy_means_increase() {
        // Figure 6.a: Z's parents are (W, X).
        let fx = fixture("fig6a", 3, Flavor::MonotoneZ, 2).unwrap();
        let m = z_means(&fx.model);
        for x in 0..2 {
            assert!(m[x] < m[2 + x] && m[2 + x] < m[4 + x]);
        }
    }

    #[test]
    fn outcome_flavors_hold_by_enumeration() {
        for seed in 0..5 {
            assert!(check_rank_invariance(&fixture("fig6b", 3, Flavor::RankInvariant, seed).unwrap().model).unwrap());
            assert!(check_v_rank_invariance(&fixture("fig7b", 2, Flavor::RankInvariant, seed).unwrap().model).unwrap());
            let c = fixture("fig6c", 2, Flavor::ConstantCate, seed).unwrap().oracle().unwrap();
            assert!((c.cate[0] - c.cate[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn flavor_names_parse() {
        assert_eq!("monotone-z".parse::<Flavor>().unwrap(), Flavor::MonotoneZ);
        assert!("monotone".parse::<Flavor>().is_err());
    }
}
